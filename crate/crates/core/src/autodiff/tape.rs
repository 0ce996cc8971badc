use ndarray::{Array1, Array2, Axis, Zip};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(TensorId, TensorId),
    Add(TensorId, TensorId),
    AddRow(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Relu(TensorId),
    Softmax(TensorId, usize),
    Mean(TensorId),
    MseLoss(TensorId, TensorId),
    IndexGather {
        input: TensorId,
        rows: Vec<usize>,
    },
    SegmentMean {
        input: TensorId,
        segments: Vec<usize>,
        counts: Vec<usize>,
    },
    ConcatRows(Vec<TensorId>),
    BatchNorm {
        input: TensorId,
        scale: TensorId,
        shift: TensorId,
        normalized: Matrix,
        inv_std: Array1<f64>,
        batch_stats: bool,
    },
    EdgeMix {
        values: TensorId,
        weights: TensorId,
        rows: Vec<usize>,
    },
}

/// A recorded value with its gradient accumulator.
#[derive(Debug)]
pub struct Tensor {
    value: Matrix,
    requires_grad: bool,
    grad: Option<Matrix>,
    op: Op,
}

impl Tensor {
    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&Matrix> {
        self.grad.as_ref()
    }
}

/// Per-feature statistics of a training-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Array1<f64>,
    /// Biased (population) variance.
    pub var: Array1<f64>,
    pub count: usize,
}

/// Dynamic computation graph. Tensors are appended in evaluation order, so
/// reverse insertion order is a valid reverse topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Tensor>,
}

fn ensure_finite(value: &Matrix, op: &str) -> Result<()> {
    if value.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op.to_string()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: TensorId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        self.nodes[id.0].value.dim()
    }

    pub fn grad(&self, id: TensorId) -> Option<&Matrix> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Removes and returns the accumulated gradient of `id`.
    pub fn take_grad(&mut self, id: TensorId) -> Option<Matrix> {
        self.nodes[id.0].grad.take()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool, name: &str) -> Result<TensorId> {
        ensure_finite(&value, name)?;
        self.nodes.push(Tensor {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Ok(TensorId(self.nodes.len() - 1))
    }

    fn rg(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Result<TensorId> {
        self.push(value, Op::Leaf, requires_grad, "leaf")
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(Error::shape(format!("matmul ({ar}×{ac}) · ({br}×{bc})")));
        }
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b), self.rg(&[a, b]), "matmul")
    }

    /// Elementwise sum, or `a` plus a `1×cols` row `b` broadcast over rows.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            let v = self.value(a) + self.value(b);
            self.push(v, Op::Add(a, b), self.rg(&[a, b]), "add")
        } else if sb.0 == 1 && sb.1 == sa.1 {
            let v = self.value(a) + self.value(b);
            self.push(v, Op::AddRow(a, b), self.rg(&[a, b]), "add")
        } else {
            Err(Error::shape(format!("add {sa:?} + {sb:?}")))
        }
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "sub")?;
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b), self.rg(&[a, b]), "sub")
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "mul")?;
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b), self.rg(&[a, b]), "mul")
    }

    fn same_shape(&self, a: TensorId, b: TensorId, op: &str) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(())
        } else {
            Err(Error::shape(format!("{op} {sa:?} vs {sb:?}")))
        }
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a), self.rg(&[a]), "relu")
    }

    /// Softmax along `axis` (1: within each row, 0: within each column).
    pub fn softmax(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        if axis > 1 {
            return Err(Error::shape(format!("softmax axis {axis} on a matrix")));
        }
        let mut v = self.value(a).clone();
        for mut lane in v.lanes_mut(Axis(axis)) {
            let max = lane.fold(f64::NEG_INFINITY, |m, x| m.max(*x));
            lane.mapv_inplace(|x| (x - max).exp());
            let sum = lane.sum();
            lane.mapv_inplace(|x| x / sum);
        }
        self.push(v, Op::Softmax(a, axis), self.rg(&[a]), "softmax")
    }

    /// Mean of all entries as a 1×1 tensor.
    pub fn mean(&mut self, a: TensorId) -> Result<TensorId> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::shape("mean of an empty tensor"));
        }
        let v = Matrix::from_elem((1, 1), x.mean().unwrap_or(0.0));
        self.push(v, Op::Mean(a), self.rg(&[a]), "mean")
    }

    /// Mean squared error over all entries as a 1×1 tensor.
    pub fn mse_loss(&mut self, pred: TensorId, target: TensorId) -> Result<TensorId> {
        self.same_shape(pred, target, "mse_loss")?;
        let (p, t) = (self.value(pred), self.value(target));
        if p.is_empty() {
            return Err(Error::shape("mse_loss of empty tensors"));
        }
        let sq: f64 = Zip::from(p).and(t).fold(0.0, |acc, a, b| acc + (a - b) * (a - b));
        let v = Matrix::from_elem((1, 1), sq / p.len() as f64);
        self.push(v, Op::MseLoss(pred, target), self.rg(&[pred, target]), "mse_loss")
    }

    /// Selects rows of `a` (with repetition).
    pub fn index_gather(&mut self, a: TensorId, rows: &[usize]) -> Result<TensorId> {
        let (n, _) = self.shape(a);
        if let Some(r) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::shape(format!("gather row {r} from {n} rows")));
        }
        let v = self.value(a).select(Axis(0), rows);
        self.push(
            v,
            Op::IndexGather {
                input: a,
                rows: rows.to_vec(),
            },
            self.rg(&[a]),
            "index_gather",
        )
    }

    /// Row `s` of the output is the mean of the input rows with segment id
    /// `s`; segments without rows produce zeros.
    pub fn segment_mean(&mut self, a: TensorId, segments: &[usize], n_segments: usize) -> Result<TensorId> {
        let (n, c) = self.shape(a);
        if segments.len() != n {
            return Err(Error::shape(format!("{} segment ids for {n} rows", segments.len())));
        }
        if let Some(s) = segments.iter().find(|&&s| s >= n_segments) {
            return Err(Error::shape(format!("segment id {s} ≥ {n_segments}")));
        }
        let mut counts = vec![0usize; n_segments];
        for &s in segments {
            counts[s] += 1;
        }
        let mut v = Matrix::zeros((n_segments, c));
        let x = self.value(a);
        for (row, &s) in x.rows().into_iter().zip(segments) {
            let mut out = v.row_mut(s);
            out += &row;
        }
        for (mut row, &k) in v.rows_mut().into_iter().zip(&counts) {
            if k > 0 {
                row /= k as f64;
            }
        }
        self.push(
            v,
            Op::SegmentMean {
                input: a,
                segments: segments.to_vec(),
                counts,
            },
            self.rg(&[a]),
            "segment_mean",
        )
    }

    pub fn concat_rows(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        let first = parts.first().ok_or_else(|| Error::shape("concat of nothing"))?;
        let cols = self.shape(*first).1;
        if let Some(p) = parts.iter().find(|p| self.shape(**p).1 != cols) {
            return Err(Error::shape(format!("concat {:?} onto {cols} columns", self.shape(*p))));
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))?;
        self.push(v, Op::ConcatRows(parts.to_vec()), self.rg(parts), "concat_rows")
    }

    fn check_affine(&self, x: TensorId, scale: TensorId, shift: TensorId) -> Result<usize> {
        let c = self.shape(x).1;
        for p in [scale, shift] {
            if self.shape(p) != (1, c) {
                return Err(Error::shape(format!(
                    "batch norm parameter {:?} for {c} features",
                    self.shape(p)
                )));
            }
        }
        Ok(c)
    }

    /// Training-mode batch norm: normalizes each column by its batch mean and
    /// biased variance, then applies `scale` and `shift` (both `1×cols`).
    pub fn batch_norm_train(
        &mut self,
        x: TensorId,
        scale: TensorId,
        shift: TensorId,
        eps: f64,
    ) -> Result<(TensorId, BatchStats)> {
        self.check_affine(x, scale, shift)?;
        let xv = self.value(x);
        let n = xv.nrows();
        if n == 0 {
            return Err(Error::shape("batch norm over zero rows"));
        }
        let mean = xv.mean_axis(Axis(0)).expect("non-empty");
        let centered = xv - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty");
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let normalized = centered * &inv_std;
        let out = &normalized * &self.value(scale).row(0) + &self.value(shift).row(0);
        let id = self.push(
            out,
            Op::BatchNorm {
                input: x,
                scale,
                shift,
                normalized,
                inv_std,
                batch_stats: true,
            },
            self.rg(&[x, scale, shift]),
            "batch_norm",
        )?;
        Ok((id, BatchStats { mean, var, count: n }))
    }

    /// Evaluation-mode batch norm using fixed running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: TensorId,
        scale: TensorId,
        shift: TensorId,
        running_mean: &Array1<f64>,
        running_var: &Array1<f64>,
        eps: f64,
    ) -> Result<TensorId> {
        let c = self.check_affine(x, scale, shift)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::shape("running statistics width"));
        }
        let inv_std = running_var.mapv(|v| 1.0 / (v + eps).sqrt());
        let normalized = (self.value(x) - running_mean) * &inv_std;
        let out = &normalized * &self.value(scale).row(0) + &self.value(shift).row(0);
        self.push(
            out,
            Op::BatchNorm {
                input: x,
                scale,
                shift,
                normalized,
                inv_std,
                batch_stats: false,
            },
            self.rg(&[x, scale, shift]),
            "batch_norm",
        )
    }

    /// Per-row mixture of gathered head blocks:
    /// `out[e] = Σ_m weights[e, m] · values[rows[e], m·w .. (m+1)·w]`
    /// where `values` is `n × (M·w)` and `weights` is `E × M`.
    pub fn edge_mix(&mut self, values: TensorId, weights: TensorId, rows: &[usize]) -> Result<TensorId> {
        let (n, vc) = self.shape(values);
        let (e, heads) = self.shape(weights);
        if rows.len() != e {
            return Err(Error::shape(format!("{} rows for {e} weight rows", rows.len())));
        }
        if heads == 0 || vc % heads != 0 {
            return Err(Error::shape(format!("{vc} value columns for {heads} heads")));
        }
        if let Some(r) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::shape(format!("edge_mix row {r} from {n} rows")));
        }
        let width = vc / heads;
        let (vals, w) = (self.value(values), self.value(weights));
        let mut out = Matrix::zeros((e, width));
        for (k, mut orow) in out.rows_mut().into_iter().enumerate() {
            let src = vals.row(rows[k]);
            let o = orow.as_slice_mut().expect("standard layout");
            for m in 0..heads {
                let q = w[[k, m]];
                let block = src.slice(ndarray::s![m * width..(m + 1) * width]);
                for (acc, v) in o.iter_mut().zip(block.iter()) {
                    *acc += q * v;
                }
            }
        }
        self.push(
            out,
            Op::EdgeMix {
                values,
                weights,
                rows: rows.to_vec(),
            },
            self.rg(&[values, weights]),
            "edge_mix",
        )
    }

    fn accumulate(&mut self, id: TensorId, g: Matrix) {
        let node = &mut self.nodes[id.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(acc) => *acc += &g,
            None => node.grad = Some(g),
        }
    }

    /// Backpropagates from a 1×1 root with seed 1.
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        if self.shape(root) != (1, 1) {
            return Err(Error::shape(format!(
                "backward from a {:?} tensor needs an explicit seed",
                self.shape(root)
            )));
        }
        self.backward_with(root, Matrix::ones((1, 1)))
    }

    pub fn backward_with(&mut self, root: TensorId, seed: Matrix) -> Result<()> {
        if seed.dim() != self.shape(root) {
            return Err(Error::shape("backward seed shape"));
        }
        self.accumulate(root, seed);
        for idx in (0..=root.0).rev() {
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            let contributions = self.input_grads(idx, &g);
            self.nodes[idx].grad = Some(g);
            for (id, cg) in contributions {
                ensure_finite(&cg, "backward")?;
                self.accumulate(id, cg);
            }
        }
        Ok(())
    }

    fn input_grads(&self, idx: usize, g: &Matrix) -> Vec<(TensorId, Matrix)> {
        let needs = |id: &TensorId| self.nodes[id.0].requires_grad;
        let mut out = Vec::new();
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(a) {
                    out.push((*a, g.dot(&self.value(*b).t())));
                }
                if needs(b) {
                    out.push((*b, self.value(*a).t().dot(g)));
                }
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::AddRow(a, b) => {
                out.push((*a, g.clone()));
                if needs(b) {
                    out.push((*b, g.sum_axis(Axis(0)).insert_axis(Axis(0))));
                }
            }
            Op::Sub(a, b) => {
                out.push((*a, g.clone()));
                if needs(b) {
                    out.push((*b, -g));
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    out.push((*a, g * self.value(*b)));
                }
                if needs(b) {
                    out.push((*b, g * self.value(*a)));
                }
            }
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| if x <= 0.0 { *d = 0.0 });
                out.push((*a, d));
            }
            Op::Softmax(a, axis) => {
                let y = &self.nodes[idx].value;
                let mut d = y * g;
                for (mut dl, yl) in d.lanes_mut(Axis(*axis)).into_iter().zip(y.lanes(Axis(*axis))) {
                    let s = dl.sum();
                    Zip::from(&mut dl).and(&yl).for_each(|d, &y| *d -= y * s);
                }
                out.push((*a, d));
            }
            Op::Mean(a) => {
                let shape = self.shape(*a);
                let n = (shape.0 * shape.1) as f64;
                out.push((*a, Matrix::from_elem(shape, g[[0, 0]] / n)));
            }
            Op::MseLoss(p, t) => {
                let diff = self.value(*p) - self.value(*t);
                let scale = 2.0 * g[[0, 0]] / diff.len() as f64;
                if needs(t) {
                    out.push((*t, &diff * -scale));
                }
                out.push((*p, diff * scale));
            }
            Op::IndexGather { input, rows } => {
                let mut d = Matrix::zeros(self.shape(*input));
                for (grow, &r) in g.rows().into_iter().zip(rows) {
                    let mut target = d.row_mut(r);
                    target += &grow;
                }
                out.push((*input, d));
            }
            Op::SegmentMean {
                input,
                segments,
                counts,
            } => {
                let mut d = Matrix::zeros(self.shape(*input));
                for (mut drow, &s) in d.rows_mut().into_iter().zip(segments) {
                    drow.scaled_add(1.0 / counts[s] as f64, &g.row(s));
                }
                out.push((*input, d));
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let rows = self.shape(*p).0;
                    out.push((*p, g.slice(ndarray::s![start..start + rows, ..]).to_owned()));
                    start += rows;
                }
            }
            Op::BatchNorm {
                input,
                scale,
                shift,
                normalized,
                inv_std,
                batch_stats,
            } => {
                let gamma = self.value(*scale).row(0);
                if needs(scale) {
                    out.push((*scale, (g * normalized).sum_axis(Axis(0)).insert_axis(Axis(0))));
                }
                if needs(shift) {
                    out.push((*shift, g.sum_axis(Axis(0)).insert_axis(Axis(0))));
                }
                if needs(input) {
                    let dnorm = g * &gamma;
                    let d = if *batch_stats {
                        let n = g.nrows() as f64;
                        let sum_d = dnorm.sum_axis(Axis(0));
                        let sum_dx = (&dnorm * normalized).sum_axis(Axis(0));
                        let mut d = dnorm * n - &sum_d - normalized * &sum_dx;
                        d *= &(inv_std / n);
                        d
                    } else {
                        dnorm * inv_std
                    };
                    out.push((*input, d));
                }
            }
            Op::EdgeMix { values, weights, rows } => {
                let (vals, w) = (self.value(*values), self.value(*weights));
                let heads = w.ncols();
                let width = vals.ncols() / heads;
                if needs(values) {
                    let mut dv = Matrix::zeros(vals.dim());
                    for (k, grow) in g.rows().into_iter().enumerate() {
                        let mut target = dv.row_mut(rows[k]);
                        for m in 0..heads {
                            let q = w[[k, m]];
                            target
                                .slice_mut(ndarray::s![m * width..(m + 1) * width])
                                .scaled_add(q, &grow);
                        }
                    }
                    out.push((*values, dv));
                }
                if needs(weights) {
                    let mut dw = Matrix::zeros(w.dim());
                    for (k, grow) in g.rows().into_iter().enumerate() {
                        let src = vals.row(rows[k]);
                        for m in 0..heads {
                            dw[[k, m]] = src.slice(ndarray::s![m * width..(m + 1) * width]).dot(&grow);
                        }
                    }
                    out.push((*weights, dw));
                }
            }
        }
        out
    }
}
