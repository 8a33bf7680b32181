use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Matrix;
use super::BackendError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig {
            rank: 16,
            alpha: 32.0,
            dropout: 0.05,
        }
    }
}

impl LoraConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.rank == 0 {
            return Err("lora rank must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("lora dropout {} outside [0, 1)", self.dropout));
        }
        if !self.alpha.is_finite() {
            return Err("lora alpha must be finite".into());
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

/// Low-rank update `(alpha/r)·B·A` for one affine map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraPair {
    /// `r × d_in`
    pub a: Matrix,
    /// `d_out × r`
    pub b: Matrix,
}

impl LoraPair {
    /// `W_eff = W + scale·B·A`, with `W` stored `d_out × d_in`.
    pub fn merged(&self, weight: &Matrix, scale: f64) -> Matrix {
        let mut w = weight.clone();
        w.add_scaled(&self.b.matmul(&self.a), scale);
        w
    }
}

pub const ADAPTER_FORMAT: &str = "clonekd-lora/1";

/// Adapter tensors keyed by target module name. Serialized as JSON:
/// `{"format", "config", "modules": {name: {"a": {rows, cols, data}, "b": ...}}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraAdapter {
    pub format: String,
    pub config: LoraConfig,
    pub modules: BTreeMap<String, LoraPair>,
}

impl LoraAdapter {
    /// `A` uniform in ±1/√d_in, `B` zero.
    pub fn init(targets: &[(String, usize, usize)], config: &LoraConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modules = targets
            .iter()
            .map(|(name, d_out, d_in)| {
                let bound = 1.0 / (*d_in as f64).sqrt();
                let a = (0..config.rank * d_in).map(|_| rng.gen_range(-bound..bound)).collect();
                (
                    name.clone(),
                    LoraPair {
                        a: Matrix::from_vec(config.rank, *d_in, a),
                        b: Matrix::zeros(*d_out, config.rank),
                    },
                )
            })
            .collect();
        LoraAdapter {
            format: ADAPTER_FORMAT.to_string(),
            config: config.clone(),
            modules,
        }
    }

    pub fn scale(&self) -> f64 {
        self.config.scale()
    }

    pub fn get(&self, name: &str) -> Option<&LoraPair> {
        self.modules.get(name)
    }

    pub fn parameter_count(&self) -> usize {
        self.modules.values().map(|p| p.a.data.len() + p.b.data.len()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let io = |source| BackendError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let json = serde_json::to_vec(self).map_err(|e| BackendError::Format(e.to_string()))?;
        fs::write(path, json).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let bytes = fs::read(path).map_err(|source| BackendError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let adapter: LoraAdapter =
            serde_json::from_slice(&bytes).map_err(|e| BackendError::Format(e.to_string()))?;
        if adapter.format != ADAPTER_FORMAT {
            return Err(BackendError::Format(format!("unknown adapter format {:?}", adapter.format)));
        }
        for (name, pair) in &adapter.modules {
            let r = adapter.config.rank;
            if pair.a.rows != r || pair.b.cols != r || pair.a.data.len() != pair.a.rows * pair.a.cols
                || pair.b.data.len() != pair.b.rows * pair.b.cols
            {
                return Err(BackendError::Format(format!("adapter module {name} has inconsistent shapes")));
            }
        }
        Ok(adapter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_b_merges_to_base() {
        let adapter = LoraAdapter::init(&[("m".into(), 3, 4)], &LoraConfig::default(), 1);
        let w = Matrix::from_vec(3, 4, (0..12).map(f64::from).collect());
        assert_eq!(adapter.get("m").unwrap().merged(&w, adapter.scale()), w);
        assert_eq!(adapter.scale(), 2.0);
    }

    #[test]
    fn json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x/adapter.json");
        let adapter = LoraAdapter::init(&[("m".into(), 2, 3)], &LoraConfig { rank: 2, ..Default::default() }, 9);
        adapter.save(&path).unwrap();
        assert_eq!(LoraAdapter::load(&path).unwrap(), adapter);
        assert_eq!(adapter.parameter_count(), 2 * 3 + 2 * 2);
    }
}
