//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! Every op records its inputs plus whatever it needs for the backward pass.
//! The tape is rebuilt per forward; it is cheap at the sizes used here.

use super::tensor::{softmax, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Matrix),
    Tanh(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Matrix,
        inv_std: Vec<f64>,
    },
    CausalSoftmax(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    CrossEntropy {
        logits: Var,
        probs: Vec<(usize, usize, Vec<f64>)>,
    },
    L2NormalizeRows {
        x: Var,
        norms: Vec<f64>,
    },
    /// Loss with an externally computed gradient with respect to its input.
    Custom {
        x: Var,
        grad: Matrix,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-wise layer norm; returns `(normalized, 1/std per row)`.
pub fn layer_norm_rows(x: &Matrix) -> (Matrix, Vec<f64>) {
    let mut normed = Matrix::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    let n = x.cols as f64;
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (o, v) in normed.row_mut(r).iter_mut().zip(row) {
            *o = (v - mean) * inv;
        }
        inv_std.push(inv);
    }
    (normed, inv_std)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar");
        m.data[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let ng = self.ng(&[a, b]);
        self.push(value, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_nt(self.value(b));
        let ng = self.ng(&[a, b]);
        self.push(value, Op::MatMulNt(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let ng = self.ng(&[a, b]);
        self.push(value, Op::Add(a, b), ng)
    }

    /// Broadcasts the `1 × n` row `b` over every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let bias = self.value(b);
        assert_eq!(bias.rows, 1);
        let mut value = self.value(a).clone();
        assert_eq!(value.cols, bias.cols);
        for r in 0..value.rows {
            for (o, v) in value.row_mut(r).iter_mut().zip(&bias.data) {
                *o += v;
            }
        }
        let ng = self.ng(&[a, b]);
        self.push(value, Op::AddRow(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let ng = self.ng(&[a]);
        self.push(value, Op::Scale(a, s), ng)
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), c.shape());
        let value = Matrix::from_vec(
            x.rows,
            x.cols,
            x.data.iter().zip(&c.data).map(|(a, b)| a * b).collect(),
        );
        let ng = self.ng(&[a]);
        self.push(value, Op::MulConst(a, c), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let ng = self.ng(&[a]);
        self.push(value, Op::Tanh(a), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(gelu);
        let ng = self.ng(&[a]);
        self.push(value, Op::Gelu(a), ng)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (normed, inv_std) = layer_norm_rows(self.value(x));
        let g = &self.value(gain).data;
        let b = &self.value(bias).data;
        let mut value = normed.clone();
        for r in 0..value.rows {
            for ((o, gv), bv) in value.row_mut(r).iter_mut().zip(g).zip(b) {
                *o = *o * gv + bv;
            }
        }
        let ng = self.ng(&[x, gain, bias]);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
            ng,
        )
    }

    /// Row-wise softmax over columns `0..=row`; later columns are zero.
    pub fn causal_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = Matrix::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let visible = (r + 1).min(x.cols);
            let p = softmax(&x.row(r)[..visible]);
            value.row_mut(r)[..visible].copy_from_slice(&p);
        }
        let ng = self.ng(&[a]);
        self.push(value, Op::CausalSoftmax(a), ng)
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut value = Matrix::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            value.row_mut(r).copy_from_slice(t.row(id));
        }
        let ng = self.ng(&[table]);
        self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            ng,
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Var {
        let m = self.value(x);
        let mut value = Matrix::zeros(m.rows, width);
        for r in 0..m.rows {
            value.row_mut(r).copy_from_slice(&m.row(r)[start..start + width]);
        }
        let ng = self.ng(&[x]);
        self.push(value, Op::SliceCols { x, start }, ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut value = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut c = 0;
            for p in parts {
                let src = self.value(*p).row(r);
                value.row_mut(r)[c..c + src.len()].copy_from_slice(src);
                c += src.len();
            }
        }
        let ng = self.ng(parts);
        self.push(value, Op::ConcatCols(parts.to_vec()), ng)
    }

    /// Mean negative log-likelihood of `(row, target)` pairs under row-wise softmax.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[(usize, usize)]) -> Var {
        assert!(!targets.is_empty(), "cross entropy over no targets");
        let l = self.value(logits);
        let mut total = 0.0;
        let mut probs = Vec::with_capacity(targets.len());
        for &(row, target) in targets {
            let p = softmax(l.row(row));
            let max = l.row(row).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + l.row(row).iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - l.get(row, target);
            probs.push((row, target, p));
        }
        let value = Matrix::from_vec(1, 1, vec![total / targets.len() as f64]);
        let ng = self.ng(&[logits]);
        self.push(value, Op::CrossEntropy { logits, probs }, ng)
    }

    pub fn l2_normalize_rows(&mut self, x: Var) -> Var {
        let m = self.value(x);
        let mut value = m.clone();
        let mut norms = Vec::with_capacity(m.rows);
        for r in 0..m.rows {
            let n = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            for v in value.row_mut(r) {
                *v /= n;
            }
            norms.push(n);
        }
        let ng = self.ng(&[x]);
        self.push(value, Op::L2NormalizeRows { x, norms }, ng)
    }

    /// Scalar node with value `loss` and gradient `grad` with respect to `x`.
    pub fn custom_loss(&mut self, x: Var, loss: f64, grad: Matrix) -> Var {
        assert_eq!(self.value(x).shape(), grad.shape());
        let ng = self.ng(&[x]);
        self.push(Matrix::from_vec(1, 1, vec![loss]), Op::Custom { x, grad }, ng)
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![1.0]));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let wants = |v: &Var| self.nodes[v.0].needs_grad;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if wants(a) {
                        acc(&mut grads, *a, g.matmul_nt(self.value(*b)));
                    }
                    if wants(b) {
                        acc(&mut grads, *b, self.value(*a).matmul_tn(&g));
                    }
                }
                Op::MatMulNt(a, b) => {
                    if wants(a) {
                        acc(&mut grads, *a, g.matmul(self.value(*b)));
                    }
                    if wants(b) {
                        acc(&mut grads, *b, g.matmul_tn(self.value(*a)));
                    }
                }
                Op::Add(a, b) => {
                    if wants(a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if wants(b) {
                        acc(&mut grads, *b, g);
                    }
                }
                Op::AddRow(a, b) => {
                    if wants(b) {
                        acc(&mut grads, *b, Matrix::row_vector(&g.column_sums()));
                    }
                    if wants(a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.scale(*s)),
                Op::MulConst(a, c) => {
                    let d = g.data.iter().zip(&c.data).map(|(x, y)| x * y).collect();
                    acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, d));
                }
                Op::Tanh(a) => {
                    let d = g
                        .data
                        .iter()
                        .zip(&node.value.data)
                        .map(|(g, y)| g * (1.0 - y * y))
                        .collect();
                    acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, d));
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let d = g.data.iter().zip(&x.data).map(|(g, x)| g * gelu_grad(*x)).collect();
                    acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, d));
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normed,
                    inv_std,
                } => {
                    let gv = &self.value(*gain).data;
                    if wants(gain) {
                        let mut dg = vec![0.0; normed.cols];
                        for r in 0..g.rows {
                            for ((d, gr), xh) in dg.iter_mut().zip(g.row(r)).zip(normed.row(r)) {
                                *d += gr * xh;
                            }
                        }
                        acc(&mut grads, *gain, Matrix::row_vector(&dg));
                    }
                    if wants(bias) {
                        acc(&mut grads, *bias, Matrix::row_vector(&g.column_sums()));
                    }
                    if wants(x) {
                        let n = g.cols as f64;
                        let mut dx = Matrix::zeros(g.rows, g.cols);
                        for r in 0..g.rows {
                            let dxh: Vec<f64> = g.row(r).iter().zip(gv).map(|(a, b)| a * b).collect();
                            let sum: f64 = dxh.iter().sum();
                            let dot: f64 = dxh.iter().zip(normed.row(r)).map(|(a, b)| a * b).sum();
                            for ((o, d), xh) in dx.row_mut(r).iter_mut().zip(&dxh).zip(normed.row(r)) {
                                *o = inv_std[r] / n * (n * d - sum - xh * dot);
                            }
                        }
                        acc(&mut grads, *x, dx);
                    }
                }
                Op::CausalSoftmax(a) => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                        for ((o, gr), yr) in dx.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = yr * (gr - dot);
                        }
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::Gather { table, ids } => {
                    let t = self.value(*table);
                    let mut dt = Matrix::zeros(t.rows, t.cols);
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, v) in dt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *table, dt);
                }
                Op::SliceCols { x, start } => {
                    let m = self.value(*x);
                    let mut dx = Matrix::zeros(m.rows, m.cols);
                    for r in 0..g.rows {
                        dx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut c = 0;
                    for p in parts {
                        let w = self.value(*p).cols;
                        if wants(p) {
                            let mut dp = Matrix::zeros(g.rows, w);
                            for r in 0..g.rows {
                                dp.row_mut(r).copy_from_slice(&g.row(r)[c..c + w]);
                            }
                            acc(&mut grads, *p, dp);
                        }
                        c += w;
                    }
                }
                Op::CrossEntropy { logits, probs } => {
                    let l = self.value(*logits);
                    let scale = g.data[0] / probs.len() as f64;
                    let mut dl = Matrix::zeros(l.rows, l.cols);
                    for (row, target, p) in probs {
                        for (o, pv) in dl.row_mut(*row).iter_mut().zip(p) {
                            *o += scale * pv;
                        }
                        let cur = dl.get(*row, *target);
                        dl.set(*row, *target, cur - scale);
                    }
                    acc(&mut grads, *logits, dl);
                }
                Op::L2NormalizeRows { x, norms } => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                        for ((o, gr), yr) in dx.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = (gr - yr * dot) / norms[r];
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Custom { x, grad } => acc(&mut grads, *x, grad.scale(g.data[0])),
            }
        }
        Gradients { grads }
    }
}
