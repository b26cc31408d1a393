//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every primitive appends one node holding its output and whatever it needs
//! for the backward pass. [`Tape::backward`] walks the nodes in reverse
//! insertion order, which is a topological order by construction, and visits
//! each node once.

use super::kernels::gemm;
use super::{GradientSet, ParamStore, Tensor};
use crate::error::{Result, SaniError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    Embed { table: Var, ids: Vec<usize> },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Linear { x: Var, w: Var, b: Option<Var> },
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    SelectRows { x: Var, rows: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<u32>, ignore: u32, probs: Vec<f64>, count: usize },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-12;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn shape_err(op: &'static str, detail: String) -> SaniError {
    SaniError::ShapeMismatch { op, detail }
}

fn finite(op: &'static str, t: Tensor) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(SaniError::NonFiniteValue(op))
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input; it receives no gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// Records parameter `index` of a [`ParamStore`].
    pub fn param(&mut self, index: usize, value: &Tensor) -> Var {
        self.push(value.clone(), Op::Param(index))
    }

    /// Gathers rows of `table` for each id.
    pub fn embed(&mut self, ids: &[usize], table: Var) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(shape_err("embed", format!("table shape {:?}", t.shape())));
        }
        let (rows, d) = (t.rows(), t.cols());
        if ids.is_empty() {
            return Err(shape_err("embed", "no ids".into()));
        }
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(shape_err("embed", format!("id {id} >= table rows {rows}")));
            }
            out.extend_from_slice(t.row(id));
        }
        let value = Tensor::matrix(ids.len(), d, out)?;
        Ok(self.push(value, Op::Embed { table, ids: ids.to_vec() }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if !x.same_shape(y) {
            return Err(shape_err("add", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let value = finite("add", Tensor::new(x.shape().to_vec(), data)?)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if !x.same_shape(y) {
            return Err(shape_err("mul", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let value = finite("mul", Tensor::new(x.shape().to_vec(), data)?)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let x = self.value(a);
        let data = x.data().iter().map(|p| p * factor).collect();
        let value = finite("scale", Tensor::new(x.shape().to_vec(), data)?)?;
        Ok(self.push(value, Op::Scale(a, factor)))
    }

    /// `x · wᵀ + b` with `x: [n, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.rank() != 2 || wv.rank() != 2 || xv.cols() != wv.cols() {
            return Err(shape_err(
                "linear",
                format!("x {:?}, w {:?}", xv.shape(), wv.shape()),
            ));
        }
        let (n, k, m) = (xv.rows(), xv.cols(), wv.rows());
        let mut out = vec![0.0; n * m];
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.len() != m {
                return Err(shape_err("linear", format!("bias {:?} for {m} outputs", bv.shape())));
            }
            for r in 0..n {
                out[r * m..(r + 1) * m].copy_from_slice(bv.data());
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        gemm(n, k, m, xv.data(), false, wv.data(), true, beta, &mut out);
        let value = finite("linear", Tensor::matrix(n, m, out)?)?;
        Ok(self.push(value, Op::Linear { x, w, b }))
    }

    /// Plain matrix product `a · b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows() {
            return Err(shape_err("matmul", format!("{:?} · {:?}", x.shape(), y.shape())));
        }
        let (n, k, m) = (x.rows(), x.cols(), y.cols());
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, x.data(), false, y.data(), false, 0.0, &mut out);
        let value = finite("matmul", Tensor::matrix(n, m, out)?)?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols() {
            return Err(shape_err("matmul_bt", format!("{:?} · {:?}ᵀ", x.shape(), y.shape())));
        }
        let (n, k, m) = (x.rows(), x.cols(), y.rows());
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, x.data(), false, y.data(), true, 0.0, &mut out);
        let value = finite("matmul_bt", Tensor::matrix(n, m, out)?)?;
        Ok(self.push(value, Op::MatMulBt(a, b)))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let data = x
            .data()
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()))
            .collect();
        let value = finite("gelu", Tensor::new(x.shape().to_vec(), data)?)?;
        Ok(self.push(value, Op::Gelu(a)))
    }

    /// Row-wise softmax. With `causal`, entry `(i, j)` for `j > i` is
    /// excluded and gets probability exactly 0.
    pub fn softmax_rows(&mut self, a: Var, causal: bool) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = (x.rows(), x.cols());
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = x.row(r);
            let lim = if causal { (r + 1).min(cols) } else { cols };
            let max = row[..lim].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[r * cols..(r + 1) * cols];
            let mut z = 0.0;
            for j in 0..lim {
                let e = (row[j] - max).exp();
                dst[j] = e;
                z += e;
            }
            for v in &mut dst[..lim] {
                *v /= z;
            }
        }
        let value = finite("softmax_rows", Tensor::new(x.shape().to_vec(), out)?)?;
        Ok(self.push(value, Op::Softmax(a)))
    }

    /// Row-wise layer normalization followed by `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (xv, g, b) = (self.value(x), self.value(gain), self.value(bias));
        let (rows, cols) = (xv.rows(), xv.cols());
        if g.len() != cols || b.len() != cols {
            return Err(shape_err(
                "layer_norm",
                format!("x {:?}, gain {:?}, bias {:?}", xv.shape(), g.shape(), b.shape()),
            ));
        }
        let mut xhat = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat[r * cols + c] = h;
                out[r * cols + c] = g.data()[c] * h + b.data()[c];
            }
        }
        let value = finite("layer_norm", Tensor::new(xv.shape().to_vec(), out)?)?;
        Ok(self.push(value, Op::LayerNorm { x, gain, bias, xhat, inv_std }))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = (x.rows(), x.cols());
        if len == 0 || start + len > cols {
            return Err(shape_err("slice_cols", format!("[{start}, {}) of {cols}", start + len)));
        }
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&x.row(r)[start..start + len]);
        }
        let value = Tensor::matrix(rows, len, out)?;
        Ok(self.push(value, Op::SliceCols { x: a, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|p| self.value(*p).rows())
            .ok_or_else(|| shape_err("concat_cols", "no inputs".into()))?;
        if parts.iter().any(|p| self.value(*p).rows() != rows) {
            return Err(shape_err("concat_cols", "row counts differ".into()));
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.value(*p).row(r));
            }
        }
        let value = Tensor::matrix(rows, total, out)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    /// Gathers the given rows (in order) into a new matrix.
    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if rows.is_empty() || rows.iter().any(|&r| r >= x.rows()) {
            return Err(shape_err("select_rows", format!("{rows:?} of {}", x.rows())));
        }
        let cols = x.cols();
        let mut out = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            out.extend_from_slice(x.row(r));
        }
        let value = Tensor::matrix(rows.len(), cols, out)?;
        Ok(self.push(value, Op::SelectRows { x: a, rows: rows.to_vec() }))
    }

    /// Mean negative log-likelihood over rows whose target is not `ignore`.
    ///
    /// When every target is `ignore` the loss is 0 and no gradient flows.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[u32], ignore: u32) -> Result<Var> {
        let x = self.value(logits);
        let (rows, cols) = (x.rows(), x.cols());
        if targets.len() != rows {
            return Err(shape_err(
                "cross_entropy",
                format!("{} targets for {rows} rows", targets.len()),
            ));
        }
        let mut probs = vec![0.0; rows * cols];
        let mut total = 0.0;
        let mut count = 0;
        for (r, &t) in targets.iter().enumerate() {
            if t == ignore {
                continue;
            }
            if t as usize >= cols {
                return Err(shape_err("cross_entropy", format!("target {t} >= {cols} classes")));
            }
            let row = x.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + z.ln();
            let dst = &mut probs[r * cols..(r + 1) * cols];
            for (d, v) in dst.iter_mut().zip(row) {
                *d = (v - log_z).exp();
            }
            total += log_z - row[t as usize];
            count += 1;
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        let value = finite("cross_entropy", Tensor::scalar(loss))?;
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                ignore,
                probs,
                count,
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        let value = finite("sum", Tensor::scalar(s))?;
        Ok(self.push(value, Op::Sum(a)))
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Returns one gradient per parameter of `store`; parameters never
    /// recorded on the tape (or unreachable from `loss`) get zeros.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<GradientSet> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(SaniError::NotScalarLoss(lv.shape().to_vec()));
        }
        let mut param_grads: Vec<Tensor> =
            store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let mut adj: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        adj.resize_with(self.nodes.len(), || None);
        adj[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    let dst = param_grads.get_mut(*p).ok_or_else(|| {
                        shape_err("backward", format!("parameter index {p} not in store"))
                    })?;
                    if !dst.same_shape(&g) {
                        return Err(shape_err(
                            "backward",
                            format!("gradient {:?} for parameter {:?}", g.shape(), dst.shape()),
                        ));
                    }
                    dst.add_scaled(&g, 1.0);
                }
                Op::Embed { table, ids } => {
                    let t = self.value(*table);
                    let mut dt = Tensor::zeros(t.shape());
                    for (r, &id) in ids.iter().enumerate() {
                        for (d, s) in dt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *d += s;
                        }
                    }
                    accumulate(&mut adj, *table, dt);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let da = zip_map(&g, y, |p, q| p * q);
                    let db = zip_map(&g, x, |p, q| p * q);
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Scale(a, f) => {
                    let f = *f;
                    let mut da = g;
                    da.data_mut().iter_mut().for_each(|v| *v *= f);
                    accumulate(&mut adj, *a, da);
                }
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n, k, m) = (xv.rows(), xv.cols(), wv.rows());
                    let mut dx = Tensor::zeros(xv.shape());
                    gemm(n, m, k, g.data(), false, wv.data(), false, 0.0, dx.data_mut());
                    let mut dw = Tensor::zeros(wv.shape());
                    gemm(m, n, k, g.data(), true, xv.data(), false, 0.0, dw.data_mut());
                    if let Some(b) = b {
                        let mut db = Tensor::zeros(self.value(*b).shape());
                        for r in 0..n {
                            for (d, s) in db.data_mut().iter_mut().zip(g.row(r)) {
                                *d += s;
                            }
                        }
                        accumulate(&mut adj, *b, db);
                    }
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *w, dw);
                }
                Op::MatMul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (x.rows(), x.cols(), y.cols());
                    let mut da = Tensor::zeros(x.shape());
                    gemm(n, m, k, g.data(), false, y.data(), true, 0.0, da.data_mut());
                    let mut db = Tensor::zeros(y.shape());
                    gemm(k, n, m, x.data(), true, g.data(), false, 0.0, db.data_mut());
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::MatMulBt(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (x.rows(), x.cols(), y.rows());
                    let mut da = Tensor::zeros(x.shape());
                    gemm(n, m, k, g.data(), false, y.data(), false, 0.0, da.data_mut());
                    let mut db = Tensor::zeros(y.shape());
                    gemm(m, n, k, g.data(), true, x.data(), false, 0.0, db.data_mut());
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let da = zip_map(&g, x, |gv, v| {
                        let u = GELU_C * (v + GELU_A * v * v * v);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                        gv * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
                    });
                    accumulate(&mut adj, *a, da);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let cols = y.cols();
                    let mut da = Tensor::zeros(y.shape());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        let dst = &mut da.data_mut()[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            dst[c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    accumulate(&mut adj, *a, da);
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    let gv = self.value(*gain);
                    let cols = gv.len();
                    let rows = inv_std.len();
                    let mut dx = Tensor::zeros(self.value(*x).shape());
                    let mut dg = Tensor::zeros(gv.shape());
                    let mut db = Tensor::zeros(self.value(*bias).shape());
                    let mut dxhat = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = g.row(r);
                        let hr = &xhat[r * cols..(r + 1) * cols];
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for c in 0..cols {
                            dg.data_mut()[c] += gr[c] * hr[c];
                            db.data_mut()[c] += gr[c];
                            dxhat[c] = gr[c] * gv.data()[c];
                            s1 += dxhat[c];
                            s2 += dxhat[c] * hr[c];
                        }
                        let n = cols as f64;
                        let dst = dx.row_mut(r);
                        for c in 0..cols {
                            dst[c] = inv_std[r] * (dxhat[c] - s1 / n - hr[c] * s2 / n);
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *gain, dg);
                    accumulate(&mut adj, *bias, db);
                }
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let mut dx = Tensor::zeros(xv.shape());
                    let len = g.cols();
                    for r in 0..g.rows() {
                        dx.row_mut(r)[*start..*start + len].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pv = self.value(*p);
                        let w = pv.cols();
                        let mut dp = Tensor::zeros(pv.shape());
                        for r in 0..pv.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        offset += w;
                        accumulate(&mut adj, *p, dp);
                    }
                }
                Op::SelectRows { x, rows } => {
                    let mut dx = Tensor::zeros(self.value(*x).shape());
                    for (i, &r) in rows.iter().enumerate() {
                        for (d, s) in dx.row_mut(r).iter_mut().zip(g.row(i)) {
                            *d += s;
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::CrossEntropy { logits, targets, ignore, probs, count } => {
                    let xv = self.value(*logits);
                    let mut dx = Tensor::zeros(xv.shape());
                    if *count > 0 {
                        let cols = xv.cols();
                        let scale = g.data()[0] / *count as f64;
                        for (r, &t) in targets.iter().enumerate() {
                            if t == *ignore {
                                continue;
                            }
                            let dst = dx.row_mut(r);
                            dst.copy_from_slice(&probs[r * cols..(r + 1) * cols]);
                            dst[t as usize] -= 1.0;
                            dst.iter_mut().for_each(|v| *v *= scale);
                        }
                    }
                    accumulate(&mut adj, *logits, dx);
                }
                Op::Sum(a) => {
                    let s = g.data()[0];
                    accumulate(&mut adj, *a, Tensor::filled(self.value(*a).shape(), s));
                }
            }
        }

        for g in &param_grads {
            if !g.is_finite() {
                return Err(SaniError::NonFiniteValue("backward"));
            }
        }
        Ok(GradientSet::from_parts(store.names().to_vec(), param_grads))
    }
}

fn accumulate(adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_scaled(&g, 1.0),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(p, q)| f(*p, *q)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes already validated")
}
