//! Head training over frozen-backbone pooled embeddings.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::contrastive::{supcon_on_tape, ContrastiveConfig};
use super::head::{bce_loss, head_forward, mean_pool, predict_head, sigmoid, HeadParams, DEFAULT_HEAD_DROPOUT};
use super::StabilizeError;
use crate::backend::autodiff::Graph;
use crate::backend::tensor::Matrix;
use crate::backend::{encode, Backend, BackendError};
use crate::prompting::RenderedExchange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadObjective {
    #[default]
    Bce,
    Joint,
}

impl fmt::Display for HeadObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadObjective::Bce => "bce",
            HeadObjective::Joint => "joint",
        })
    }
}

impl FromStr for HeadObjective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bce" => Ok(HeadObjective::Bce),
            "joint" => Ok(HeadObjective::Joint),
            other => Err(format!("unknown head objective {other:?}; expected bce or joint")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadTrainConfig {
    pub objective: HeadObjective,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub contrastive: ContrastiveConfig,
    pub seed: u64,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        HeadTrainConfig {
            objective: HeadObjective::Bce,
            steps: 200,
            batch_size: 16,
            learning_rate: 1e-2,
            weight_decay: 0.0,
            dropout: DEFAULT_HEAD_DROPOUT,
            contrastive: ContrastiveConfig::default(),
            seed: 42,
        }
    }
}

impl HeadTrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("head batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err("head learning_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("head dropout {} outside [0, 1)", self.dropout));
        }
        self.contrastive.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadTrainLog {
    pub steps: usize,
    pub step_losses: Vec<f64>,
    /// Joint-objective batches without any positive pair, trained on BCE alone.
    pub degenerate_batches: usize,
    pub train_accuracy: f64,
}

/// Gradients of one batch loss with respect to `(W_p, b_p, W_c, b_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub w_p: Matrix,
    pub b_p: Vec<f64>,
    pub w_c: Vec<f64>,
    pub b_c: f64,
}

/// Batch objective and its gradients. `dropout_rng` selects train mode.
/// Returns `(loss, gradients, used_contrastive)`; a joint batch without
/// positives falls back to BCE alone.
pub fn head_loss_and_grads(
    params: &HeadParams,
    embeddings: &Matrix,
    labels: &[u8],
    objective: HeadObjective,
    contrastive: &ContrastiveConfig,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, HeadGradients, bool), StabilizeError> {
    let n = labels.len();
    if embeddings.rows != n {
        return Err(StabilizeError::BatchMismatch {
            embeddings: embeddings.rows,
            labels: n,
        });
    }
    if n == 0 {
        return Err(StabilizeError::EmptyDataset);
    }
    let d = params.dim();
    if embeddings.cols != d {
        return Err(StabilizeError::DimensionMismatch {
            expected: d,
            got: embeddings.cols,
        });
    }
    let mut g = Graph::new();
    let h = g.constant(embeddings.clone());
    let w_p = g.param(params.w_p.clone());
    let b_p = g.param(Matrix::row_vector(&params.b_p));
    let w_c = g.param(Matrix::row_vector(&params.w_c));
    let b_c = g.param(Matrix::row_vector(&[params.b_c]));

    let pre = g.matmul_nt(h, w_p);
    let pre = g.add_row(pre, b_p);
    let z = g.tanh(pre);
    let zd = match dropout_rng {
        Some(rng) if params.dropout > 0.0 => {
            let keep = 1.0 / (1.0 - params.dropout);
            let mask = (0..n * d)
                .map(|_| if rng.gen::<f64>() < params.dropout { 0.0 } else { keep })
                .collect();
            g.mul_const(z, Matrix::from_vec(n, d, mask))
        }
        _ => z,
    };
    let logits = g.matmul_nt(zd, w_c);
    let logits = g.add_row(logits, b_c);

    let lv = g.value(logits).data.clone();
    let bce = lv.iter().zip(labels).map(|(&l, &y)| bce_loss(l, y)).sum::<f64>() / n as f64;
    let bce_grad = Matrix::from_vec(
        n,
        1,
        lv.iter().zip(labels).map(|(&l, &y)| (sigmoid(l) - f64::from(y)) / n as f64).collect(),
    );
    let mut loss = g.custom_loss(logits, bce, bce_grad);
    let mut used_contrastive = false;
    if objective == HeadObjective::Joint && contrastive.weight > 0.0 {
        match supcon_on_tape(&mut g, z, labels, contrastive.temperature) {
            Ok(sc) => {
                let sc = g.scale(sc, contrastive.weight);
                loss = g.add(loss, sc);
                used_contrastive = true;
            }
            Err(StabilizeError::DegenerateBatch) => {}
            Err(e) => return Err(e),
        }
    }
    let value = g.scalar(loss);
    let mut grads = g.backward(loss);
    let mut take = |v| grads.take(v).expect("parameter gradient");
    let out = HeadGradients {
        w_p: take(w_p),
        b_p: take(b_p).data,
        w_c: take(w_c).data,
        b_c: take(b_c).data[0],
    };
    if !value.is_finite() {
        return Err(StabilizeError::NumericFailure(format!("head loss {value}")));
    }
    Ok((value, out, used_contrastive))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            params[i] -= lr * ((self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8) + weight_decay * params[i]);
        }
    }
}

fn flatten(p: &HeadParams) -> Vec<f64> {
    let mut v = p.w_p.data.clone();
    v.extend(&p.b_p);
    v.extend(&p.w_c);
    v.push(p.b_c);
    v
}

fn unflatten(p: &mut HeadParams, v: &[f64]) {
    let d = p.dim();
    p.w_p.data.copy_from_slice(&v[..d * d]);
    p.b_p.copy_from_slice(&v[d * d..d * d + d]);
    p.w_c.copy_from_slice(&v[d * d + d..d * d + 2 * d]);
    p.b_c = v[d * d + 2 * d];
}

fn flatten_grads(g: &HeadGradients) -> Vec<f64> {
    let mut v = g.w_p.data.clone();
    v.extend(&g.b_p);
    v.extend(&g.w_c);
    v.push(g.b_c);
    v
}

/// Fraction of rows the head labels correctly in eval mode.
pub fn head_accuracy(params: &HeadParams, embeddings: &[Vec<f64>], labels: &[u8]) -> Result<f64, StabilizeError> {
    let mut correct = 0;
    for (h, &y) in embeddings.iter().zip(labels) {
        correct += usize::from(predict_head(head_forward(h, params, None)?) == y);
    }
    Ok(correct as f64 / labels.len().max(1) as f64)
}

/// Trains head parameters on fixed embeddings with Adam over shuffled
/// minibatches.
pub fn train_head_on_embeddings(
    embeddings: &[Vec<f64>],
    labels: &[u8],
    config: &HeadTrainConfig,
) -> Result<(HeadParams, HeadTrainLog), StabilizeError> {
    config.validate().map_err(StabilizeError::Config)?;
    if embeddings.is_empty() {
        return Err(StabilizeError::EmptyDataset);
    }
    if embeddings.len() != labels.len() {
        return Err(StabilizeError::BatchMismatch {
            embeddings: embeddings.len(),
            labels: labels.len(),
        });
    }
    let d = embeddings[0].len();
    let mut params = HeadParams::init(d, config.dropout, config.seed);
    let mut flat = flatten(&params);
    let mut adam = Adam {
        m: vec![0.0; flat.len()],
        v: vec![0.0; flat.len()],
        t: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut log = HeadTrainLog::default();
    let mut order: Vec<usize> = Vec::new();
    for step in 0..config.steps {
        if order.len() < config.batch_size.min(embeddings.len()) {
            let mut epoch: Vec<usize> = (0..embeddings.len()).collect();
            epoch.shuffle(&mut rng);
            order.extend(epoch);
        }
        let batch: Vec<usize> = order.drain(..config.batch_size.min(order.len())).collect();
        let rows: Vec<Vec<f64>> = batch.iter().map(|&i| embeddings[i].clone()).collect();
        let y: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
        let (loss, grads, used) = head_loss_and_grads(
            &params,
            &Matrix::from_rows(&rows),
            &y,
            config.objective,
            &config.contrastive,
            Some(&mut rng),
        )?;
        if config.objective == HeadObjective::Joint && config.contrastive.weight > 0.0 && !used {
            log.degenerate_batches += 1;
            log::debug!("head step {step}: batch has no positive pair, using BCE alone");
        }
        adam.step(&mut flat, &flatten_grads(&grads), config.learning_rate, config.weight_decay);
        unflatten(&mut params, &flat);
        log.step_losses.push(loss);
        log.steps += 1;
    }
    log.train_accuracy = head_accuracy(&params, embeddings, labels)?;
    Ok((params, log))
}

/// Mean-pooled final hidden states for each exchange.
pub fn pooled_embeddings(backend: &dyn Backend, exchanges: &[RenderedExchange]) -> Result<Vec<Vec<f64>>, StabilizeError> {
    exchanges
        .iter()
        .map(|ex| {
            let seq = encode(ex, backend.tokenizer(), backend.max_len()).map_err(BackendError::from)?;
            let out = backend.forward(&seq)?;
            mean_pool(&out.hidden, &seq.attention_mask)
        })
        .collect()
}

/// Trains a head over a frozen backbone; fails if the backbone's
/// parameters change while doing so.
pub fn train_head(
    backend: &dyn Backend,
    dataset: &[(RenderedExchange, u8)],
    config: &HeadTrainConfig,
) -> Result<(HeadParams, HeadTrainLog), StabilizeError> {
    if dataset.is_empty() {
        return Err(StabilizeError::EmptyDataset);
    }
    let before = backend.parameter_checksum()?;
    let exchanges: Vec<RenderedExchange> = dataset.iter().map(|(e, _)| e.clone()).collect();
    let labels: Vec<u8> = dataset.iter().map(|(_, y)| *y).collect();
    let embeddings = pooled_embeddings(backend, &exchanges)?;
    let out = train_head_on_embeddings(&embeddings, &labels, config)?;
    let after = backend.parameter_checksum()?;
    if before != after {
        return Err(StabilizeError::BackboneModified { before, after });
    }
    Ok(out)
}
