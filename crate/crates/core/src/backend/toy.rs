//! Two-layer pre-norm causal transformer small enough to test exhaustively.
//!
//! Linear weights are stored `d_out × d_in` and applied as `x·Wᵀ + b`, so
//! adapter pairs line up with `A: r × d_in`, `B: d_out × r`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::autodiff::{gelu, layer_norm_rows, Graph, Var};
use super::lora::{LoraAdapter, LoraPair};
use super::tensor::{dot, softmax, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            vocab_size: 64,
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            d_ff: 32,
            seed: 42,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.vocab_size == 0 || self.vocab_size > 64 {
            return Err(format!("toy vocab_size {} outside 1..=64", self.vocab_size));
        }
        if self.d_model == 0 || self.d_model > 32 {
            return Err(format!("toy d_model {} outside 1..=32", self.d_model));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err("toy d_model must be a multiple of n_heads".into());
        }
        if self.n_layers == 0 || self.d_ff == 0 {
            return Err("toy n_layers and d_ff must be positive".into());
        }
        Ok(())
    }

    fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Linear {
    fn init(d_out: usize, d_in: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        Linear {
            w: Matrix::from_vec(d_out, d_in, (0..d_out * d_in).map(|_| rng.gen_range(-bound..bound)).collect()),
            b: vec![0.0; d_out],
        }
    }

    fn apply(&self, x: &Matrix, lora: Option<(&LoraPair, f64)>) -> Matrix {
        let mut y = x.matmul_nt(&self.w);
        for r in 0..y.rows {
            for (o, b) in y.row_mut(r).iter_mut().zip(&self.b) {
                *o += b;
            }
        }
        if let Some((pair, scale)) = lora {
            let delta = x.matmul_nt(&pair.a).matmul_nt(&pair.b);
            y.add_scaled(&delta, scale);
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1: (Vec<f64>, Vec<f64>),
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln2: (Vec<f64>, Vec<f64>),
    pub ff1: Linear,
    pub ff2: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub config: ToyConfig,
    pub embed: Matrix,
    pub blocks: Vec<Block>,
    pub ln_f: (Vec<f64>, Vec<f64>),
    pub lm_head: Linear,
}

/// Per-layer key/value rows for incremental decoding.
#[derive(Debug, Clone, Default)]
pub struct KvCache {
    layers: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
}

impl KvCache {
    pub fn len(&self) -> usize {
        self.layers.first().map_or(0, |(k, _)| k.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn sinusoid(pos: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 * freq;
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

fn norm_rows(x: &Matrix, (gain, bias): &(Vec<f64>, Vec<f64>)) -> Matrix {
    let (mut y, _) = layer_norm_rows(x);
    for r in 0..y.rows {
        for ((o, g), b) in y.row_mut(r).iter_mut().zip(gain).zip(bias) {
            *o = *o * g + b;
        }
    }
    y
}

fn lora_for<'a>(adapter: Option<&'a LoraAdapter>, name: &str) -> Option<(&'a LoraPair, f64)> {
    adapter.and_then(|a| a.get(name).map(|p| (p, a.scale())))
}

const LM_HEAD_SCALE: f64 = 2.0;

pub const LINEAR_TARGETS: [&str; 6] = ["attn.q", "attn.k", "attn.v", "attn.o", "ff.up", "ff.down"];

impl ToyModel {
    pub fn new(config: ToyConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let embed = Matrix::from_vec(
            config.vocab_size,
            d,
            (0..config.vocab_size * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let ln = || (vec![1.0; d], vec![0.0; d]);
        let blocks = (0..config.n_layers)
            .map(|_| Block {
                ln1: ln(),
                q: Linear::init(d, d, &mut rng),
                k: Linear::init(d, d, &mut rng),
                v: Linear::init(d, d, &mut rng),
                o: Linear::init(d, d, &mut rng),
                ln2: ln(),
                ff1: Linear::init(config.d_ff, d, &mut rng),
                ff2: Linear::init(d, config.d_ff, &mut rng),
            })
            .collect();
        // Tied to the embedding and scaled: behind the frozen final norm a
        // ±1/√d head caps logits near ±2, too flat for the adapter to fit.
        let lm_head = Linear {
            w: embed.scale(LM_HEAD_SCALE),
            b: vec![0.0; config.vocab_size],
        };
        ToyModel {
            config,
            embed,
            blocks,
            ln_f: ln(),
            lm_head,
        }
    }

    /// A model whose output head is zero: every next-token distribution is uniform.
    pub fn uniform(config: ToyConfig) -> Self {
        let mut model = ToyModel::new(config);
        model.lm_head.w = Matrix::zeros(model.lm_head.w.rows, model.lm_head.w.cols);
        model.lm_head.b.iter_mut().for_each(|b| *b = 0.0);
        model
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.d_model
    }

    /// `(name, d_out, d_in)` for every adapted affine map. Embeddings, norms
    /// and the output head are excluded.
    pub fn lora_targets(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        for (l, block) in self.blocks.iter().enumerate() {
            let maps = [&block.q, &block.k, &block.v, &block.o, &block.ff1, &block.ff2];
            for (suffix, lin) in LINEAR_TARGETS.iter().zip(maps) {
                out.push((format!("blocks.{l}.{suffix}"), lin.w.rows, lin.w.cols));
            }
        }
        out
    }

    /// Every base parameter, in a fixed order.
    fn parameters(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.embed.data];
        for block in &self.blocks {
            out.extend([&block.ln1.0[..], &block.ln1.1[..]]);
            for lin in [&block.q, &block.k, &block.v, &block.o] {
                out.extend([&lin.w.data[..], &lin.b[..]]);
            }
            out.extend([&block.ln2.0[..], &block.ln2.1[..]]);
            for lin in [&block.ff1, &block.ff2] {
                out.extend([&lin.w.data[..], &lin.b[..]]);
            }
        }
        out.extend([&self.ln_f.0[..], &self.ln_f.1[..], &self.lm_head.w.data[..], &self.lm_head.b[..]]);
        out
    }

    /// sha256 over the little-endian bytes of every base parameter, then of
    /// every adapter tensor when one is given.
    pub fn checksum(&self, adapter: Option<&LoraAdapter>) -> String {
        let mut hasher = Sha256::new();
        for p in self.parameters() {
            for v in p {
                hasher.update(v.to_le_bytes());
            }
        }
        if let Some(adapter) = adapter {
            for (name, pair) in &adapter.modules {
                hasher.update(name.as_bytes());
                for v in pair.a.data.iter().chain(&pair.b.data) {
                    hasher.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(hasher.finalize())
    }

    fn embed_rows(&self, ids: &[u32], offset: usize) -> Matrix {
        let d = self.config.d_model;
        let mut x = Matrix::zeros(ids.len(), d);
        for (r, &id) in ids.iter().enumerate() {
            let pe = sinusoid(offset + r, d);
            for ((o, e), p) in x.row_mut(r).iter_mut().zip(self.embed.row(id as usize)).zip(&pe) {
                *o = e + p;
            }
        }
        x
    }

    /// Runs `ids` after whatever the cache already holds and returns the
    /// final-norm hidden states of the new positions.
    pub fn extend(&self, adapter: Option<&LoraAdapter>, ids: &[u32], cache: &mut KvCache) -> Matrix {
        let cfg = &self.config;
        let hd = cfg.head_dim();
        let inv_sqrt = 1.0 / (hd as f64).sqrt();
        if cache.layers.is_empty() {
            cache.layers = vec![(Vec::new(), Vec::new()); cfg.n_layers];
        }
        let offset = cache.len();
        let mut x = self.embed_rows(ids, offset);
        for (l, block) in self.blocks.iter().enumerate() {
            let name = |s: &str| format!("blocks.{l}.{s}");
            let h = norm_rows(&x, &block.ln1);
            let q = block.q.apply(&h, lora_for(adapter, &name("attn.q")));
            let k = block.k.apply(&h, lora_for(adapter, &name("attn.k")));
            let v = block.v.apply(&h, lora_for(adapter, &name("attn.v")));
            let (keys, values) = &mut cache.layers[l];
            for r in 0..ids.len() {
                keys.push(k.row(r).to_vec());
                values.push(v.row(r).to_vec());
            }
            let mut attn = Matrix::zeros(ids.len(), cfg.d_model);
            for r in 0..ids.len() {
                let visible = offset + r + 1;
                for head in 0..cfg.n_heads {
                    let cols = head * hd..(head + 1) * hd;
                    let qh = &q.row(r)[cols.clone()];
                    let scores: Vec<f64> = keys[..visible]
                        .iter()
                        .map(|kr| dot(qh, &kr[cols.clone()]) * inv_sqrt)
                        .collect();
                    let p = softmax(&scores);
                    let out = &mut attn.row_mut(r)[cols.clone()];
                    for (pj, vr) in p.iter().zip(&values[..visible]) {
                        for (o, vv) in out.iter_mut().zip(&vr[cols.clone()]) {
                            *o += pj * vv;
                        }
                    }
                }
            }
            x.add_assign(&block.o.apply(&attn, lora_for(adapter, &name("attn.o"))));
            let h2 = norm_rows(&x, &block.ln2);
            let f = block.ff1.apply(&h2, lora_for(adapter, &name("ff.up"))).map(gelu);
            x.add_assign(&block.ff2.apply(&f, lora_for(adapter, &name("ff.down"))));
        }
        norm_rows(&x, &self.ln_f)
    }

    pub fn logits(&self, hidden: &Matrix) -> Matrix {
        self.lm_head.apply(hidden, None)
    }

    /// Builds the same computation on a tape. Adapter tensors become
    /// parameters; base weights are constants. `dropout` supplies the
    /// adapter-input dropout rng and rate during training.
    pub fn tape_logits(
        &self,
        graph: &mut Graph,
        adapter: &TapeAdapter,
        ids: &[u32],
        mut dropout: Option<(&mut ChaCha8Rng, f64)>,
    ) -> Var {
        let cfg = &self.config;
        let hd = cfg.head_dim();
        let table = graph.constant(self.embed.clone());
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let tok = graph.gather_rows(table, &idx);
        let pe = Matrix::from_rows(&(0..ids.len()).map(|p| sinusoid(p, cfg.d_model)).collect::<Vec<_>>());
        let pe = graph.constant(pe);
        let mut x = graph.add(tok, pe);

        let mut linear = |graph: &mut Graph, x: Var, lin: &Linear, name: String| -> Var {
            let w = graph.constant(lin.w.clone());
            let b = graph.constant(Matrix::row_vector(&lin.b));
            let y = graph.matmul_nt(x, w);
            let y = graph.add_row(y, b);
            let Some(&(a, bv)) = adapter.vars.get(&name) else {
                return y;
            };
            let input = match dropout.as_mut() {
                Some((rng, p)) if *p > 0.0 => {
                    let shape = graph.value(x).shape();
                    let keep = 1.0 / (1.0 - *p);
                    let mask = (0..shape.0 * shape.1)
                        .map(|_| if rng.gen::<f64>() < *p { 0.0 } else { keep })
                        .collect();
                    graph.mul_const(x, Matrix::from_vec(shape.0, shape.1, mask))
                }
                _ => x,
            };
            let xa = graph.matmul_nt(input, a);
            let xab = graph.matmul_nt(xa, bv);
            let delta = graph.scale(xab, adapter.scale);
            graph.add(y, delta)
        };

        let norm = |graph: &mut Graph, x: Var, (g, b): &(Vec<f64>, Vec<f64>)| {
            let g = graph.constant(Matrix::row_vector(g));
            let b = graph.constant(Matrix::row_vector(b));
            graph.layer_norm(x, g, b)
        };

        for (l, block) in self.blocks.iter().enumerate() {
            let h = norm(graph, x, &block.ln1);
            let q = linear(graph, h, &block.q, format!("blocks.{l}.attn.q"));
            let k = linear(graph, h, &block.k, format!("blocks.{l}.attn.k"));
            let v = linear(graph, h, &block.v, format!("blocks.{l}.attn.v"));
            let mut heads = Vec::with_capacity(cfg.n_heads);
            for head in 0..cfg.n_heads {
                let qh = graph.slice_cols(q, head * hd, hd);
                let kh = graph.slice_cols(k, head * hd, hd);
                let vh = graph.slice_cols(v, head * hd, hd);
                let s = graph.matmul_nt(qh, kh);
                let s = graph.scale(s, 1.0 / (hd as f64).sqrt());
                let p = graph.causal_softmax(s);
                heads.push(graph.matmul(p, vh));
            }
            let attn = graph.concat_cols(&heads);
            let o = linear(graph, attn, &block.o, format!("blocks.{l}.attn.o"));
            x = graph.add(x, o);
            let h2 = norm(graph, x, &block.ln2);
            let f = linear(graph, h2, &block.ff1, format!("blocks.{l}.ff.up"));
            let f = graph.gelu(f);
            let f = linear(graph, f, &block.ff2, format!("blocks.{l}.ff.down"));
            x = graph.add(x, f);
        }
        let hf = norm(graph, x, &self.ln_f);
        let w = graph.constant(self.lm_head.w.clone());
        let b = graph.constant(Matrix::row_vector(&self.lm_head.b));
        let logits = graph.matmul_nt(hf, w);
        graph.add_row(logits, b)
    }
}

/// Adapter tensors registered as tape parameters, `name → (A, B)`.
pub struct TapeAdapter {
    pub vars: BTreeMap<String, (Var, Var)>,
    pub scale: f64,
}

impl TapeAdapter {
    pub fn register(graph: &mut Graph, adapter: &LoraAdapter) -> Self {
        let vars = adapter
            .modules
            .iter()
            .map(|(name, pair)| (name.clone(), (graph.param(pair.a.clone()), graph.param(pair.b.clone()))))
            .collect();
        TapeAdapter {
            vars,
            scale: adapter.scale(),
        }
    }

    /// No adapter: the tape computes the base model.
    pub fn none() -> Self {
        TapeAdapter {
            vars: BTreeMap::new(),
            scale: 0.0,
        }
    }
}

/// `(row, target)` pairs for next-token loss: row `t-1` predicts token `t`
/// for every loss-masked `t ≥ 1`.
pub fn next_token_targets(ids: &[u32], loss_mask: &[u8]) -> Vec<(usize, usize)> {
    (1..ids.len())
        .filter(|&t| loss_mask[t] == 1)
        .map(|t| (t - 1, ids[t] as usize))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::lora::LoraConfig;

    fn ids() -> Vec<u32> {
        vec![1, 5, 10, 11, 12, 7, 6, 8, 7]
    }

    #[test]
    fn cached_decoding_matches_full_pass() {
        let model = ToyModel::new(ToyConfig::default());
        let ids = ids();
        let full = model.extend(None, &ids, &mut KvCache::default());
        let mut cache = KvCache::default();
        let mut rows = Vec::new();
        let head = model.extend(None, &ids[..4], &mut cache);
        rows.extend((0..head.rows).map(|r| head.row(r).to_vec()));
        for &id in &ids[4..] {
            let h = model.extend(None, &[id], &mut cache);
            rows.push(h.row(0).to_vec());
        }
        let inc = Matrix::from_rows(&rows);
        for (a, b) in full.data.iter().zip(&inc.data) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(cache.len(), ids.len());
    }

    #[test]
    fn tape_matches_plain_path() {
        let model = ToyModel::new(ToyConfig::default());
        let mut adapter = LoraAdapter::init(&model.lora_targets(), &LoraConfig { rank: 4, ..Default::default() }, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for pair in adapter.modules.values_mut() {
            pair.b.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
        let ids = ids();
        let hidden = model.extend(Some(&adapter), &ids, &mut KvCache::default());
        let plain = model.logits(&hidden);
        let mut graph = Graph::new();
        let tape = TapeAdapter::register(&mut graph, &adapter);
        let logits = model.tape_logits(&mut graph, &tape, &ids, None);
        for (a, b) in plain.data.iter().zip(&graph.value(logits).data) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn targets_skip_position_zero() {
        assert_eq!(next_token_targets(&[1, 2, 3, 4], &[1, 0, 1, 1]), vec![(1, 3), (2, 4)]);
    }

    #[test]
    fn lora_targets_cover_attention_and_ff() {
        let model = ToyModel::new(ToyConfig::default());
        let targets = model.lora_targets();
        assert_eq!(targets.len(), 12);
        assert!(targets.contains(&("blocks.1.ff.up".to_string(), 32, 16)));
        assert!(targets.contains(&("blocks.0.ff.down".to_string(), 16, 32)));
    }

    #[test]
    fn uniform_model_outputs() {
        let model = ToyModel::uniform(ToyConfig::default());
        let h = model.extend(None, &ids(), &mut KvCache::default());
        let p = softmax(model.logits(&h).row(3));
        assert!(p.iter().all(|v| (v - 1.0 / 64.0).abs() < 1e-15));
    }
}
