use serde::{Deserialize, Serialize};

use super::head::mean_bce;
use super::StabilizeError;
use crate::backend::autodiff::Graph;
use crate::backend::tensor::{log_sum_exp, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub weight: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            temperature: 0.07,
            weight: 0.5,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature {} must be positive", self.temperature));
        }
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(format!("contrastive weight {} must be non-negative", self.weight));
        }
        Ok(())
    }
}

pub fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn check_batch(z: &Matrix, labels: &[u8], tau: f64) -> Result<(), StabilizeError> {
    if z.rows != labels.len() {
        return Err(StabilizeError::BatchMismatch {
            embeddings: z.rows,
            labels: labels.len(),
        });
    }
    if z.rows < 2 {
        return Err(StabilizeError::DegenerateBatch);
    }
    if !(tau > 0.0) {
        return Err(StabilizeError::Config(format!("temperature {tau} must be positive")));
    }
    if let Some(i) = (0..z.rows).find(|&i| z.row(i).iter().all(|&v| v == 0.0)) {
        return Err(StabilizeError::ZeroEmbedding(i));
    }
    Ok(())
}

/// `s_ij = cos(z_i, z_j) / τ`
pub fn similarity_matrix(z: &Matrix, tau: f64) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..z.rows).map(|i| l2_normalize(z.row(i))).collect();
    let n = Matrix::from_rows(&rows);
    n.matmul_nt(&n).scale(1.0 / tau)
}

/// Loss and `∂L/∂S` from a similarity matrix. Anchors without a positive
/// are left out of the average; `None` when no anchor has one.
pub(crate) fn supcon_from_similarity(s: &Matrix, labels: &[u8]) -> Option<(f64, Matrix)> {
    let n = labels.len();
    let mut grad = Matrix::zeros(n, n);
    let mut total = 0.0;
    let mut anchors = 0usize;
    for i in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&p| p != i && labels[p] == labels[i]).collect();
        if positives.is_empty() {
            continue;
        }
        anchors += 1;
        let others: Vec<usize> = (0..n).filter(|&a| a != i).collect();
        let row: Vec<f64> = others.iter().map(|&a| s.get(i, a)).collect();
        let lse = log_sum_exp(&row);
        let k = positives.len() as f64;
        total += lse - positives.iter().map(|&p| s.get(i, p)).sum::<f64>() / k;
        for &a in &others {
            grad.set(i, a, (s.get(i, a) - lse).exp());
        }
        for &p in &positives {
            grad.set(i, p, grad.get(i, p) - 1.0 / k);
        }
    }
    if anchors == 0 {
        return None;
    }
    let a = anchors as f64;
    Some((total / a, grad.scale(1.0 / a)))
}

/// Supervised contrastive loss over a batch of projected embeddings.
pub fn supcon_loss(z: &Matrix, labels: &[u8], tau: f64) -> Result<f64, StabilizeError> {
    check_batch(z, labels, tau)?;
    supcon_from_similarity(&similarity_matrix(z, tau), labels)
        .map(|(loss, _)| loss)
        .ok_or(StabilizeError::DegenerateBatch)
}

/// Loss and its gradient with respect to `z`.
pub fn supcon_loss_and_grad(z: &Matrix, labels: &[u8], tau: f64) -> Result<(f64, Matrix), StabilizeError> {
    check_batch(z, labels, tau)?;
    let mut graph = Graph::new();
    let zv = graph.param(z.clone());
    let loss = supcon_on_tape(&mut graph, zv, labels, tau)?;
    let value = graph.scalar(loss);
    let grad = graph.backward(loss).take(zv).expect("z is a parameter");
    Ok((value, grad))
}

pub(crate) fn supcon_on_tape(
    graph: &mut Graph,
    z: crate::backend::autodiff::Var,
    labels: &[u8],
    tau: f64,
) -> Result<crate::backend::autodiff::Var, StabilizeError> {
    let zn = graph.l2_normalize_rows(z);
    let s = graph.matmul_nt(zn, zn);
    let s = graph.scale(s, 1.0 / tau);
    let (loss, grad) = supcon_from_similarity(graph.value(s), labels).ok_or(StabilizeError::DegenerateBatch)?;
    Ok(graph.custom_loss(s, loss, grad))
}

/// Mean BCE plus `λ·supcon`. With `λ = 0` the contrastive term is not
/// evaluated at all, so degenerate batches are accepted.
pub fn joint_loss(
    logits: &[f64],
    z: &Matrix,
    labels: &[u8],
    config: &ContrastiveConfig,
) -> Result<f64, StabilizeError> {
    if logits.len() != labels.len() {
        return Err(StabilizeError::BatchMismatch {
            embeddings: logits.len(),
            labels: labels.len(),
        });
    }
    if logits.is_empty() {
        return Err(StabilizeError::EmptyDataset);
    }
    let bce = mean_bce(logits, labels);
    if config.weight == 0.0 {
        return Ok(bce);
    }
    Ok(bce + config.weight * supcon_loss(z, labels, config.temperature)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// The contrastive objective written out with explicit loops over anchors, positives and
    /// the denominator set.
    fn triple_loop(z: &Matrix, labels: &[u8], tau: f64) -> f64 {
        let n = z.rows;
        let zn: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let norm = z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                z.row(i).iter().map(|v| v / norm).collect()
            })
            .collect();
        let s = |i: usize, j: usize| zn[i].iter().zip(&zn[j]).map(|(a, b)| a * b).sum::<f64>() / tau;
        let mut total = 0.0;
        let mut anchors = 0;
        for i in 0..n {
            let mut inner = 0.0;
            let mut count = 0;
            for p in 0..n {
                if p == i || labels[p] != labels[i] {
                    continue;
                }
                let mut denom = 0.0;
                for a in 0..n {
                    if a != i {
                        denom += s(i, a).exp();
                    }
                }
                inner += (s(i, p).exp() / denom).ln();
                count += 1;
            }
            if count > 0 {
                total += -inner / count as f64;
                anchors += 1;
            }
        }
        total / anchors as f64
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Matrix, Vec<u8>) {
        let z = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        labels[0] = labels[1];
        (z, labels)
    }

    #[test]
    fn identical_embeddings_give_ln_n_minus_one() {
        let z = Matrix::from_rows(&vec![vec![0.6, 0.8]; 4]);
        for tau in [0.05, 0.1, 1.0] {
            let loss = supcon_loss(&z, &[1, 1, 1, 1], tau).unwrap();
            assert!((loss - 3f64.ln()).abs() < 1e-12, "tau {tau}: {loss}");
        }
    }

    #[test]
    fn no_positives_is_degenerate() {
        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(supcon_loss(&z, &[0, 1], 0.1), Err(StabilizeError::DegenerateBatch)));
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (z, labels) = random_batch(&mut rng, 6, 5);
        let expected = triple_loop(&z, &labels, 0.1);
        assert!((supcon_loss(&z, &labels, 0.1).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn lone_anchor_is_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = Matrix::from_vec(3, 4, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let labels = [0, 0, 1];
        assert!((supcon_loss(&z, &labels, 0.5).unwrap() - triple_loop(&z, &labels, 0.5)).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (z, labels) = random_batch(&mut rng, 5, 4);
        let (_, grad) = supcon_loss_and_grad(&z, &labels, 0.2).unwrap();
        let h = 1e-6;
        for i in 0..z.data.len() {
            let mut plus = z.clone();
            plus.data[i] += h;
            let mut minus = z.clone();
            minus.data[i] -= h;
            let fd = (supcon_loss(&plus, &labels, 0.2).unwrap() - supcon_loss(&minus, &labels, 0.2).unwrap()) / (2.0 * h);
            let rel = (fd - grad.data[i]).abs() / fd.abs().max(grad.data[i].abs()).max(1e-3);
            assert!(rel < 1e-4, "entry {i}: {fd} vs {}", grad.data[i]);
        }
    }

    #[test]
    fn joint_with_zero_weight_is_bce() {
        let logits = [0.3, -1.2, 2.0];
        let labels = [1, 0, 0];
        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let cfg = ContrastiveConfig { weight: 0.0, ..Default::default() };
        assert_eq!(joint_loss(&logits, &z, &labels, &cfg).unwrap(), mean_bce(&logits, &labels));
        let degenerate = [1, 0, 2];
        let cfg1 = ContrastiveConfig { weight: 1.0, temperature: 0.1 };
        assert!(joint_loss(&logits, &z, &degenerate, &cfg1).is_err());
        let expected = mean_bce(&logits, &labels) + supcon_loss(&z, &labels, 0.1).unwrap();
        assert_eq!(joint_loss(&logits, &z, &labels, &cfg1).unwrap(), expected);
    }

    #[test]
    fn flipping_labels_keeps_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (z, labels) = random_batch(&mut rng, 7, 3);
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let a = supcon_loss(&z, &labels, 0.3).unwrap();
        let b = supcon_loss(&z, &flipped, 0.3).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn spread_grows_as_temperature_falls() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (z, _) = random_batch(&mut rng, 5, 3);
        let spread = |tau| {
            let s = similarity_matrix(&z, tau);
            let max = s.data.iter().copied().fold(f64::MIN, f64::max);
            let min = s.data.iter().copied().fold(f64::MAX, f64::min);
            max - min
        };
        assert!(spread(0.05) > spread(0.1));
        assert!(spread(0.1) > spread(1.0));
    }

    #[test]
    fn normalization_is_idempotent() {
        let v = l2_normalize(&[3.0, -4.0, 12.0]);
        let w = l2_normalize(&v);
        assert!(v.iter().zip(&w).all(|(a, b)| (a - b).abs() < 1e-7));
    }
}
