use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StabilizeError;
use crate::backend::tensor::{dot, Matrix};

/// Attention-mask-aware mean of the hidden-state rows.
///
/// `mask` may be longer than `hidden` (right padding) as long as the extra
/// entries are zero.
pub fn mean_pool(hidden: &Matrix, mask: &[u8]) -> Result<Vec<f64>, StabilizeError> {
    if mask.len() < hidden.rows || mask[hidden.rows..].iter().any(|&m| m != 0) {
        return Err(StabilizeError::DimensionMismatch {
            expected: hidden.rows,
            got: mask.len(),
        });
    }
    let mut sum = vec![0.0; hidden.cols];
    let mut count = 0.0;
    for (r, &m) in mask[..hidden.rows].iter().enumerate() {
        if m == 0 {
            continue;
        }
        let w = f64::from(m);
        for (s, h) in sum.iter_mut().zip(hidden.row(r)) {
            *s += h * w;
        }
        count += w;
    }
    if count == 0.0 {
        return Err(StabilizeError::AllPadding);
    }
    Ok(sum.into_iter().map(|s| s / count).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// `d × d`
    pub w_p: Matrix,
    pub b_p: Vec<f64>,
    pub w_c: Vec<f64>,
    pub b_c: f64,
    pub dropout: f64,
}

pub const DEFAULT_HEAD_DROPOUT: f64 = 0.1;

impl HeadParams {
    /// Weights uniform in ±1/√d, biases zero.
    pub fn init(d: usize, dropout: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (d as f64).sqrt();
        let w_p = Matrix::from_vec(d, d, (0..d * d).map(|_| rng.gen_range(-bound..bound)).collect());
        let w_c = (0..d).map(|_| rng.gen_range(-bound..bound)).collect();
        HeadParams {
            w_p,
            b_p: vec![0.0; d],
            w_c,
            b_c: 0.0,
            dropout,
        }
    }

    pub fn dim(&self) -> usize {
        self.b_p.len()
    }

    fn check(&self, h: &[f64]) -> Result<(), StabilizeError> {
        let d = self.dim();
        if self.w_p.shape() != (d, d) || self.w_c.len() != d {
            return Err(StabilizeError::DimensionMismatch {
                expected: d,
                got: self.w_p.rows,
            });
        }
        if h.len() != d {
            return Err(StabilizeError::DimensionMismatch {
                expected: d,
                got: h.len(),
            });
        }
        Ok(())
    }
}

/// `z = tanh(W_p h + b_p)`
pub fn project(h: &[f64], params: &HeadParams) -> Result<Vec<f64>, StabilizeError> {
    params.check(h)?;
    Ok((0..params.dim())
        .map(|i| (dot(params.w_p.row(i), h) + params.b_p[i]).tanh())
        .collect())
}

/// Classifier logit. Passing an rng selects train mode, where inverted
/// dropout is applied to the projection.
pub fn head_forward(h: &[f64], params: &HeadParams, train: Option<&mut ChaCha8Rng>) -> Result<f64, StabilizeError> {
    let mut z = project(h, params)?;
    if let Some(rng) = train {
        let p = params.dropout;
        if p > 0.0 {
            for v in z.iter_mut() {
                *v = if rng.gen::<f64>() < p { 0.0 } else { *v / (1.0 - p) };
            }
        }
    }
    Ok(dot(&params.w_c, &z) + params.b_c)
}

/// `−[y ln σ(ℓ) + (1−y) ln(1−σ(ℓ))]` in the overflow-free form
/// `max(ℓ,0) − ℓy + ln(1 + e^{−|ℓ|})`.
pub fn bce_loss(logit: f64, label: u8) -> f64 {
    logit.max(0.0) - logit * f64::from(label) + (-logit.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// 1 iff σ(ℓ) ≥ 0.5, i.e. ℓ ≥ 0.
pub fn predict_head(logit: f64) -> u8 {
    u8::from(logit >= 0.0)
}

pub fn mean_bce(logits: &[f64], labels: &[u8]) -> f64 {
    logits.iter().zip(labels).map(|(&l, &y)| bce_loss(l, y)).sum::<f64>() / logits.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn pool_examples() {
        let h = Matrix::from_rows(&[vec![1.0, 3.0], vec![5.0, 7.0]]);
        assert_eq!(mean_pool(&h, &[1, 1]).unwrap(), vec![3.0, 5.0]);
        assert_eq!(mean_pool(&h, &[1, 0, 0]).unwrap(), vec![1.0, 3.0]);
        assert!(matches!(mean_pool(&h, &[0, 0]), Err(StabilizeError::AllPadding)));
        assert!(mean_pool(&h, &[1]).is_err());
    }

    #[test]
    fn pool_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = Matrix::from_vec(7, 5, (0..35).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let pooled = mean_pool(&h, &[1, 1, 1, 0, 0, 0, 0]).unwrap();
        for c in 0..5 {
            let mut s = 0.0;
            for r in 0..3 {
                s += h.get(r, c);
            }
            assert!((pooled[c] - s / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn head_examples() {
        let mut params = HeadParams::init(2, 0.1, 0);
        params.w_p = Matrix::zeros(2, 2);
        assert_eq!(head_forward(&[0.3, -0.2], &params, None).unwrap(), 0.0);
        params.w_p = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        params.w_c = vec![1.0, 1.0];
        assert_eq!(head_forward(&[1.0, -1.0], &params, None).unwrap(), 0.0);
        assert!(matches!(
            head_forward(&[1.0], &params, None),
            Err(StabilizeError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn head_matches_scalar_loop() {
        let params = HeadParams::init(6, 0.1, 4);
        let h = [0.3, -1.0, 0.5, 2.0, 0.0, -0.4];
        let mut logit = params.b_c;
        for i in 0..6 {
            let mut pre = params.b_p[i];
            for j in 0..6 {
                pre += params.w_p.get(i, j) * h[j];
            }
            logit += params.w_c[i] * pre.tanh();
        }
        assert!((head_forward(&h, &params, None).unwrap() - logit).abs() < 1e-14);
    }

    #[test]
    fn bce_limits() {
        assert!((bce_loss(0.0, 0) - 2f64.ln()).abs() < 1e-15);
        assert!((bce_loss(0.0, 1) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_loss(40.0, 1) < 1e-17);
        assert!((bce_loss(40.0, 0) - 40.0).abs() < 1e-12);
        assert!((bce_loss(-800.0, 1) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn prediction_boundary() {
        assert_eq!(predict_head(0.0), 1);
        assert_eq!(predict_head(-3.0), 0);
        assert_eq!(predict_head(-0.0), 1);
    }

    proptest! {
        #[test]
        fn prediction_agrees_with_sigmoid_threshold(l in -50.0f64..50.0) {
            prop_assert_eq!(predict_head(l), u8::from(1.0 / (1.0 + (-l).exp()) >= 0.5));
        }

        #[test]
        fn pooling_is_linear(a in -5.0f64..5.0, vals in proptest::collection::vec(-3.0f64..3.0, 12)) {
            let h = Matrix::from_vec(4, 3, vals);
            let mask = [1, 1, 0, 0];
            let scaled = mean_pool(&h.scale(a), &mask).unwrap();
            let base = mean_pool(&h, &mask).unwrap();
            for (s, b) in scaled.iter().zip(&base) {
                prop_assert!((s - a * b).abs() < 1e-12);
            }
        }
    }
}
