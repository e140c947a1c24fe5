//! Reverse-mode differentiation tape over batched, dual-valued buffers.
//!
//! Every node stores an m×N value matrix (columns are collocation points)
//! and, along the network path, a same-shaped tangent matrix holding the
//! exact d/dt of the values. Reverse accumulation differentiates through
//! both components, so losses that consume the time derivative (via
//! [`Tape::tangent_as_value`]) still receive exact parameter gradients.
//!
//! Complex matrices ride on the tape as interleaved real columns
//! [re₀₀, im₀₀, re₀₁, …] of length 2·dim².

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::models::{DensityLayout, FeatureLayout};

pub type NodeId = usize;

/// Location of one parameter tensor inside a [`ParamStore`] group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRef {
    pub group: usize,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamRef {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named, disjoint parameter groups, each a flat f64 array.
#[derive(Debug, Clone)]
pub struct ParamStore {
    groups: Vec<(String, Vec<f64>)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self { groups: Vec::new() }
    }

    pub fn add_group(&mut self, name: impl Into<String>) -> usize {
        self.groups.push((name.into(), Vec::new()));
        self.groups.len() - 1
    }

    /// Append a tensor to a group, returning its reference.
    pub fn push_tensor(&mut self, group: usize, rows: usize, cols: usize, data: Vec<f64>) -> ParamRef {
        assert_eq!(data.len(), rows * cols);
        let offset = self.groups[group].1.len();
        self.groups[group].1.extend_from_slice(&data);
        ParamRef { group, offset, rows, cols }
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_name(&self, group: usize) -> &str {
        &self.groups[group].0
    }

    pub fn group_data(&self, group: usize) -> &[f64] {
        &self.groups[group].1
    }

    pub fn group_data_mut(&mut self, group: usize) -> &mut [f64] {
        &mut self.groups[group].1
    }

    pub fn total_len(&self) -> usize {
        self.groups.iter().map(|(_, g)| g.len()).sum()
    }

    pub fn tensor(&self, p: ParamRef) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((p.rows, p.cols), &self.groups[p.group].1[p.offset..p.offset + p.len()])
            .expect("tensor shape matches reference")
    }

    pub fn vector(&self, p: ParamRef) -> &[f64] {
        &self.groups[p.group].1[p.offset..p.offset + p.len()]
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-group gradient buffers shaped like a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Gradients {
    groups: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self { groups: params.groups.iter().map(|(_, g)| vec![0.0; g.len()]).collect() }
    }

    pub fn group(&self, group: usize) -> &[f64] {
        &self.groups[group]
    }

    pub fn group_mut(&mut self, group: usize) -> &mut [f64] {
        &mut self.groups[group]
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    fn tensor_mut(&mut self, p: ParamRef) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((p.rows, p.cols), &mut self.groups[p.group][p.offset..p.offset + p.len()])
            .expect("tensor shape matches reference")
    }

    fn vector_mut(&mut self, p: ParamRef) -> &mut [f64] {
        &mut self.groups[p.group][p.offset..p.offset + p.len()]
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// x·σ(x).
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_d1(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

fn silu_d2(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s))
}

#[derive(Debug, Clone)]
enum Op {
    /// Leaf: 1×N row of times, tangent identically one.
    Input,
    /// Leaf holding fixed values; never receives gradients.
    Constant,
    /// y = W·x + b, tangent ẏ = W·ẋ.
    Linear { x: NodeId, w: ParamRef, b: ParamRef },
    /// Elementwise SiLU on a dual buffer.
    Silu { x: NodeId },
    /// Multiplicative mask, already scaled by 1/(1−rate). One column
    /// broadcasts across the batch; a full matrix masks per point.
    Dropout { x: NodeId, mask: Array2<f64> },
    /// Column means over the feature (row) axis: m×N → 1×N.
    MeanRows { x: NodeId },
    /// y = x − s with s a 1×N row broadcast across rows.
    SubRow { x: NodeId, s: NodeId },
    /// Elementwise square.
    Square { x: NodeId },
    /// y = (x + eps)^{−1/2} elementwise.
    RsqrtShift { x: NodeId, eps: f64 },
    /// y = x ⊙ s with s a 1×N row broadcast across rows (dual product).
    MulRow { x: NodeId, s: NodeId },
    /// y = g ⊙ x with a per-row parameter vector (layer-norm gain).
    ScaleParamRows { x: NodeId, g: ParamRef },
    /// y = x + b with a per-row parameter vector (layer-norm bias).
    AddParamRows { x: NodeId, b: ParamRef },
    /// Promote the tangent to a value: y = ẋ. Backward routes into adj_tan.
    TangentAsValue { x: NodeId },
    /// Identity on values with gradients blocked.
    Detach,
    /// Identity on values that discards the tangent but keeps gradients.
    DropTangent { x: NodeId },
    /// Feature columns → interleaved operator columns (real-linear).
    OperatorFromFeatures { x: NodeId, layout: FeatureLayout },
    /// Feature columns → interleaved density columns (affine, trace one).
    DensityFromFeatures { x: NodeId, layout: DensityLayout },
    /// Linear part only, for reconstructing dρ/dt from feature tangents.
    DensityDerivFromFeatures { x: NodeId, layout: DensityLayout },
    /// Columnwise complex product of interleaved d×d matrices.
    MatMulCols { a: NodeId, b: NodeId, dim: usize },
    /// y_col = Σ_k coeff_k · term_k(col) + constant(col); complex coefficients.
    LinCombCols { terms: Vec<(Complex64, NodeId)> },
    /// Elementwise y = a − b (b may be single-column broadcast).
    SubElem { a: NodeId, b: NodeId },
    /// Squared column norms: m×N → 1×N.
    SqNormCols { x: NodeId },
    /// Mean over columns: 1×N → 1×1.
    MeanOverCols { x: NodeId },
    /// One column as m×1.
    SelectCol { x: NodeId, col: usize },
    /// Grid-normalized L1 total variation of the value columns: → 1×1.
    TotalVariation { x: NodeId },
    /// y = prefactor·exp(scale·x) on a 1×1 node.
    ExpScale { x: NodeId, scale: f64, prefactor: f64 },
    /// Sum of 1×1 nodes.
    AddScalars { terms: Vec<NodeId> },
}

struct Node {
    op: Op,
    val: Array2<f64>,
    tan: Option<Array2<f64>>,
}

/// Recorded forward computation, evaluated eagerly during recording.
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id].val
    }

    pub fn tangent(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.nodes[id].tan.as_ref()
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].val.len(), 1);
        self.nodes[id].val[[0, 0]]
    }

    fn push(&mut self, op: Op, val: Array2<f64>, tan: Option<Array2<f64>>) -> NodeId {
        self.nodes.push(Node { op, val, tan });
        self.nodes.len() - 1
    }

    pub fn input_time(&mut self, times: &[f64]) -> NodeId {
        let n = times.len();
        let val = Array2::from_shape_vec((1, n), times.to_vec()).expect("row shape");
        let tan = Array2::ones((1, n));
        self.push(Op::Input, val, Some(tan))
    }

    pub fn constant(&mut self, data: Array2<f64>) -> NodeId {
        self.push(Op::Constant, data, None)
    }

    pub fn linear(&mut self, params: &ParamStore, w: ParamRef, b: ParamRef, x: NodeId) -> NodeId {
        let wv = params.tensor(w);
        let bv = params.vector(b);
        let xin = &self.nodes[x];
        let mut val = wv.dot(&xin.val);
        for (mut row, &bias) in val.axis_iter_mut(Axis(0)).zip(bv) {
            row += bias;
        }
        let tan = xin.tan.as_ref().map(|t| wv.dot(t));
        self.push(Op::Linear { x, w, b }, val, tan)
    }

    pub fn silu_node(&mut self, x: NodeId) -> NodeId {
        let xin = &self.nodes[x];
        let val = xin.val.mapv(silu);
        let tan = xin.tan.as_ref().map(|t| {
            let mut out = xin.val.mapv(silu_d1);
            out *= t;
            out
        });
        self.push(Op::Silu { x }, val, tan)
    }

    pub fn dropout(&mut self, x: NodeId, mask: Array2<f64>) -> NodeId {
        let xin = &self.nodes[x];
        debug_assert_eq!(mask.nrows(), xin.val.nrows());
        debug_assert!(mask.ncols() == 1 || mask.ncols() == xin.val.ncols());
        let scale = |m: &Array2<f64>| {
            let mut out = m.clone();
            for j in 0..out.ncols() {
                let jm = if mask.ncols() == 1 { 0 } else { j };
                for r in 0..out.nrows() {
                    out[[r, j]] *= mask[[r, jm]];
                }
            }
            out
        };
        let val = scale(&xin.val);
        let tan = xin.tan.as_ref().map(scale);
        self.push(Op::Dropout { x, mask }, val, tan)
    }

    pub fn mean_rows(&mut self, x: NodeId) -> NodeId {
        let xin = &self.nodes[x];
        let m = xin.val.nrows() as f64;
        let val = (xin.val.sum_axis(Axis(0)) / m).insert_axis(Axis(0));
        let tan = xin.tan.as_ref().map(|t| (t.sum_axis(Axis(0)) / m).insert_axis(Axis(0)));
        self.push(Op::MeanRows { x }, val, tan)
    }

    pub fn sub_row(&mut self, x: NodeId, s: NodeId) -> NodeId {
        let broadcast_sub = |a: &Array2<f64>, row: &Array2<f64>| {
            let mut out = a.clone();
            for mut r in out.axis_iter_mut(Axis(0)) {
                for (v, b) in r.iter_mut().zip(row.row(0).iter()) {
                    *v -= b;
                }
            }
            out
        };
        let val = broadcast_sub(&self.nodes[x].val, &self.nodes[s].val);
        let tan = match (&self.nodes[x].tan, &self.nodes[s].tan) {
            (Some(xt), Some(st)) => Some(broadcast_sub(xt, st)),
            (Some(xt), None) => Some(xt.clone()),
            (None, Some(st)) => Some(broadcast_sub(&Array2::zeros(self.nodes[x].val.dim()), st)),
            (None, None) => None,
        };
        self.push(Op::SubRow { x, s }, val, tan)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let xin = &self.nodes[x];
        let val = &xin.val * &xin.val;
        let tan = xin.tan.as_ref().map(|t| 2.0 * &xin.val * t);
        self.push(Op::Square { x }, val, tan)
    }

    pub fn rsqrt_shift(&mut self, x: NodeId, eps: f64) -> NodeId {
        let xin = &self.nodes[x];
        let val = xin.val.mapv(|u| 1.0 / (u + eps).sqrt());
        let tan = xin.tan.as_ref().map(|t| {
            let d = xin.val.mapv(|u| -0.5 * (u + eps).powf(-1.5));
            d * t
        });
        self.push(Op::RsqrtShift { x, eps }, val, tan)
    }

    pub fn mul_row(&mut self, x: NodeId, s: NodeId) -> NodeId {
        let broadcast_mul = |a: &Array2<f64>, row: &Array2<f64>| {
            let mut out = a.clone();
            for mut r in out.axis_iter_mut(Axis(0)) {
                for (v, b) in r.iter_mut().zip(row.row(0).iter()) {
                    *v *= b;
                }
            }
            out
        };
        let xv = &self.nodes[x].val;
        let sv = &self.nodes[s].val;
        let val = broadcast_mul(xv, sv);
        let tan = match (&self.nodes[x].tan, &self.nodes[s].tan) {
            (Some(xt), Some(st)) => {
                let mut out = broadcast_mul(xt, sv);
                out += &broadcast_mul(xv, st);
                Some(out)
            }
            (Some(xt), None) => Some(broadcast_mul(xt, sv)),
            (None, Some(st)) => Some(broadcast_mul(xv, st)),
            (None, None) => None,
        };
        self.push(Op::MulRow { x, s }, val, tan)
    }

    pub fn scale_param_rows(&mut self, params: &ParamStore, g: ParamRef, x: NodeId) -> NodeId {
        let gv = params.vector(g).to_vec();
        let apply = |m: &Array2<f64>| {
            let mut out = m.clone();
            for (mut row, &k) in out.axis_iter_mut(Axis(0)).zip(gv.iter()) {
                row *= k;
            }
            out
        };
        let xin = &self.nodes[x];
        let val = apply(&xin.val);
        let tan = xin.tan.as_ref().map(apply);
        self.push(Op::ScaleParamRows { x, g }, val, tan)
    }

    pub fn add_param_rows(&mut self, params: &ParamStore, b: ParamRef, x: NodeId) -> NodeId {
        let bv = params.vector(b).to_vec();
        let xin = &self.nodes[x];
        let mut val = xin.val.clone();
        for (mut row, &k) in val.axis_iter_mut(Axis(0)).zip(bv.iter()) {
            row += k;
        }
        let tan = xin.tan.clone();
        self.push(Op::AddParamRows { x, b }, val, tan)
    }

    pub fn tangent_as_value(&mut self, x: NodeId) -> NodeId {
        let t = self.nodes[x]
            .tan
            .as_ref()
            .expect("tangent_as_value requires a dual input")
            .clone();
        self.push(Op::TangentAsValue { x }, t, None)
    }

    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let val = self.nodes[x].val.clone();
        let _ = x;
        self.push(Op::Detach, val, None)
    }

    /// Forget the tangent while keeping the value differentiable.
    pub fn drop_tangent(&mut self, x: NodeId) -> NodeId {
        let val = self.nodes[x].val.clone();
        self.push(Op::DropTangent { x }, val, None)
    }

    pub fn operator_from_features(&mut self, x: NodeId, layout: &FeatureLayout) -> NodeId {
        let xin = &self.nodes[x];
        let d = layout.dim();
        let n = xin.val.ncols();
        let mut val = Array2::zeros((2 * d * d, n));
        let mut col = vec![0.0; 2 * d * d];
        for j in 0..n {
            let feats: Vec<f64> = xin.val.column(j).to_vec();
            layout.apply_interleaved(&feats, &mut col);
            for (r, &v) in col.iter().enumerate() {
                val[[r, j]] = v;
            }
        }
        self.push(Op::OperatorFromFeatures { x, layout: layout.clone() }, val, None)
    }

    pub fn density_from_features(&mut self, x: NodeId, layout: &DensityLayout) -> NodeId {
        let xin = &self.nodes[x];
        let d = layout.dim();
        let n = xin.val.ncols();
        let mut val = Array2::zeros((2 * d * d, n));
        let mut col = vec![0.0; 2 * d * d];
        for j in 0..n {
            let feats: Vec<f64> = xin.val.column(j).to_vec();
            layout.apply_interleaved(&feats, &mut col);
            for (r, &v) in col.iter().enumerate() {
                val[[r, j]] = v;
            }
        }
        self.push(Op::DensityFromFeatures { x, layout: *layout }, val, None)
    }

    pub fn density_deriv_from_features(&mut self, x: NodeId, layout: &DensityLayout) -> NodeId {
        let xin = &self.nodes[x];
        let d = layout.dim();
        let n = xin.val.ncols();
        let mut val = Array2::zeros((2 * d * d, n));
        let mut col = vec![0.0; 2 * d * d];
        for j in 0..n {
            let feats: Vec<f64> = xin.val.column(j).to_vec();
            layout.apply_linear_interleaved(&feats, &mut col);
            for (r, &v) in col.iter().enumerate() {
                val[[r, j]] = v;
            }
        }
        self.push(Op::DensityDerivFromFeatures { x, layout: *layout }, val, None)
    }

    /// Complex product per column. Either side may be a single-column
    /// constant, broadcast across the batch.
    pub fn matmul_cols(&mut self, a: NodeId, b: NodeId, dim: usize) -> NodeId {
        let av = &self.nodes[a].val;
        let bv = &self.nodes[b].val;
        debug_assert!(self.nodes[a].tan.is_none() && self.nodes[b].tan.is_none());
        let n = av.ncols().max(bv.ncols());
        let mut val = Array2::zeros((2 * dim * dim, n));
        for j in 0..n {
            let ja = if av.ncols() == 1 { 0 } else { j };
            let jb = if bv.ncols() == 1 { 0 } else { j };
            for i in 0..dim {
                for k in 0..dim {
                    let (are, aim) = (av[[2 * (i * dim + k), ja]], av[[2 * (i * dim + k) + 1, ja]]);
                    for l in 0..dim {
                        let (bre, bim) = (bv[[2 * (k * dim + l), jb]], bv[[2 * (k * dim + l) + 1, jb]]);
                        val[[2 * (i * dim + l), j]] += are * bre - aim * bim;
                        val[[2 * (i * dim + l) + 1, j]] += are * bim + aim * bre;
                    }
                }
            }
        }
        self.push(Op::MatMulCols { a, b, dim }, val, None)
    }

    /// Complex-weighted sum of interleaved matrix nodes plus an optional
    /// constant, which may be single-column (broadcast).
    pub fn lin_comb_cols(
        &mut self,
        terms: Vec<(Complex64, NodeId)>,
        dim: usize,
        constant: Option<Array2<f64>>,
    ) -> NodeId {
        let n = terms
            .iter()
            .map(|&(_, id)| self.nodes[id].val.ncols())
            .chain(constant.iter().map(|c| c.ncols()))
            .max()
            .expect("lin_comb_cols needs at least one term");
        let rows = 2 * dim * dim;
        let mut val = Array2::zeros((rows, n));
        if let Some(c) = &constant {
            for j in 0..n {
                let jc = if c.ncols() == 1 { 0 } else { j };
                for r in 0..rows {
                    val[[r, j]] = c[[r, jc]];
                }
            }
        }
        for &(coeff, id) in &terms {
            let tv = &self.nodes[id].val;
            debug_assert!(self.nodes[id].tan.is_none());
            for j in 0..n {
                let jt = if tv.ncols() == 1 { 0 } else { j };
                for e in 0..rows / 2 {
                    let (re, im) = (tv[[2 * e, jt]], tv[[2 * e + 1, jt]]);
                    val[[2 * e, j]] += coeff.re * re - coeff.im * im;
                    val[[2 * e + 1, j]] += coeff.re * im + coeff.im * re;
                }
            }
        }
        let _ = dim;
        self.push(Op::LinCombCols { terms }, val, None)
    }

    /// Elementwise a − b; b may be single-column broadcast.
    pub fn sub_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = &self.nodes[a].val;
        let bv = &self.nodes[b].val;
        let mut val = av.clone();
        for j in 0..val.ncols() {
            let jb = if bv.ncols() == 1 { 0 } else { j };
            for r in 0..val.nrows() {
                val[[r, j]] -= bv[[r, jb]];
            }
        }
        let tan = match (&self.nodes[a].tan, &self.nodes[b].tan) {
            (None, None) => None,
            (at, bt) => {
                let mut t = at.clone().unwrap_or_else(|| Array2::zeros(av.dim()));
                if let Some(btv) = bt {
                    for j in 0..t.ncols() {
                        let jb = if btv.ncols() == 1 { 0 } else { j };
                        for r in 0..t.nrows() {
                            t[[r, j]] -= btv[[r, jb]];
                        }
                    }
                }
                Some(t)
            }
        };
        self.push(Op::SubElem { a, b }, val, tan)
    }

    pub fn sq_norm_cols(&mut self, x: NodeId) -> NodeId {
        let xin = &self.nodes[x];
        let n = xin.val.ncols();
        let mut val = Array2::zeros((1, n));
        for j in 0..n {
            val[[0, j]] = xin.val.column(j).iter().map(|v| v * v).sum();
        }
        let tan = xin.tan.as_ref().map(|t| {
            let mut out = Array2::zeros((1, n));
            for j in 0..n {
                out[[0, j]] =
                    2.0 * xin.val.column(j).iter().zip(t.column(j)).map(|(v, dv)| v * dv).sum::<f64>();
            }
            out
        });
        self.push(Op::SqNormCols { x }, val, tan)
    }

    pub fn mean_over_cols(&mut self, x: NodeId) -> NodeId {
        let xin = &self.nodes[x];
        debug_assert_eq!(xin.val.nrows(), 1);
        let n = xin.val.ncols() as f64;
        let val = Array2::from_elem((1, 1), xin.val.sum() / n);
        let tan = xin.tan.as_ref().map(|t| Array2::from_elem((1, 1), t.sum() / n));
        self.push(Op::MeanOverCols { x }, val, tan)
    }

    pub fn select_col(&mut self, x: NodeId, col: usize) -> NodeId {
        let xin = &self.nodes[x];
        let val = xin.val.column(col).insert_axis(Axis(1)).to_owned();
        let tan = xin.tan.as_ref().map(|t| t.column(col).insert_axis(Axis(1)).to_owned());
        self.push(Op::SelectCol { x, col }, val, tan)
    }

    /// (1/(N−1))·Σ_i ‖x_i − x_{i−1}‖₁ over the value columns.
    pub fn total_variation(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].val;
        let n = xv.ncols();
        assert!(n >= 2, "total variation needs at least two samples");
        let mut acc = 0.0;
        for j in 1..n {
            for r in 0..xv.nrows() {
                acc += (xv[[r, j]] - xv[[r, j - 1]]).abs();
            }
        }
        let val = Array2::from_elem((1, 1), acc / (n - 1) as f64);
        self.push(Op::TotalVariation { x }, val, None)
    }

    pub fn exp_scale(&mut self, x: NodeId, scale: f64, prefactor: f64) -> NodeId {
        let v = self.scalar(x);
        let val = Array2::from_elem((1, 1), prefactor * (scale * v).exp());
        self.push(Op::ExpScale { x, scale, prefactor }, val, None)
    }

    pub fn add_scalars(&mut self, terms: Vec<NodeId>) -> NodeId {
        let mut acc = 0.0;
        for &t in &terms {
            acc += self.scalar(t);
        }
        let val = Array2::from_elem((1, 1), acc);
        self.push(Op::AddScalars { terms }, val, None)
    }

    /// Reverse accumulation from a scalar node down to every parameter.
    /// Consumes the tape: a second call without a new recording errors.
    pub fn backward(&mut self, loss: NodeId, params: &ParamStore) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.consumed = true;
        debug_assert_eq!(self.nodes[loss].val.len(), 1);

        let mut grads = Gradients::zeros_like(params);
        let mut adj_val: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        let mut adj_tan: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        adj_val[loss] = Some(Array2::from_elem((1, 1), 1.0));

        for id in (0..self.nodes.len()).rev() {
            let av = adj_val[id].take();
            let at = adj_tan[id].take();
            if av.is_none() && at.is_none() {
                continue;
            }
            let shape = self.nodes[id].val.dim();
            let av = av.unwrap_or_else(|| Array2::zeros(shape));
            let at_present = at.is_some();
            let at = at.unwrap_or_else(|| Array2::zeros(shape));

            macro_rules! bump_val {
                ($target:expr, $delta:expr) => {{
                    let t: NodeId = $target;
                    let delta = $delta;
                    match &mut adj_val[t] {
                        Some(buf) => *buf += &delta,
                        slot => *slot = Some(delta),
                    }
                }};
            }
            macro_rules! bump_tan {
                ($target:expr, $delta:expr) => {{
                    let t: NodeId = $target;
                    let delta = $delta;
                    match &mut adj_tan[t] {
                        Some(buf) => *buf += &delta,
                        slot => *slot = Some(delta),
                    }
                }};
            }

            match &self.nodes[id].op {
                Op::Input | Op::Constant => {}
                Op::Linear { x, w, b } => {
                    let wv = params.tensor(*w);
                    bump_val!(*x, wv.t().dot(&av));
                    if at_present {
                        bump_tan!(*x, wv.t().dot(&at));
                    }
                    let xv = &self.nodes[*x].val;
                    let mut dw = av.dot(&xv.t());
                    if at_present {
                        if let Some(xt) = &self.nodes[*x].tan {
                            dw += &at.dot(&xt.t());
                        }
                    }
                    grads.tensor_mut(*w).zip_mut_with(&dw, |g, d| *g += d);
                    let db = av.sum_axis(Axis(1));
                    for (g, d) in grads.vector_mut(*b).iter_mut().zip(db.iter()) {
                        *g += d;
                    }
                }
                Op::Silu { x } => {
                    let xv = &self.nodes[*x].val;
                    let d1 = xv.mapv(silu_d1);
                    let mut dx = &av * &d1;
                    if at_present {
                        if let Some(xt) = &self.nodes[*x].tan {
                            dx += &(&at * &xv.mapv(silu_d2) * xt);
                        }
                        bump_tan!(*x, &at * &d1);
                    }
                    bump_val!(*x, dx);
                }
                Op::Dropout { x, mask } => {
                    let apply = |m: &Array2<f64>| {
                        let mut out = m.clone();
                        for j in 0..out.ncols() {
                            let jm = if mask.ncols() == 1 { 0 } else { j };
                            for r in 0..out.nrows() {
                                out[[r, j]] *= mask[[r, jm]];
                            }
                        }
                        out
                    };
                    bump_val!(*x, apply(&av));
                    if at_present {
                        bump_tan!(*x, apply(&at));
                    }
                }
                Op::MeanRows { x } => {
                    let m = self.nodes[*x].val.nrows();
                    let spread = |row: &Array2<f64>| {
                        let mut out = Array2::zeros((m, row.ncols()));
                        for mut r in out.axis_iter_mut(Axis(0)) {
                            for (v, s) in r.iter_mut().zip(row.row(0).iter()) {
                                *v = s / m as f64;
                            }
                        }
                        out
                    };
                    bump_val!(*x, spread(&av));
                    if at_present {
                        bump_tan!(*x, spread(&at));
                    }
                }
                Op::SubRow { x, s } => {
                    bump_val!(*x, av.clone());
                    bump_val!(*s, -av.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    if at_present {
                        bump_tan!(*x, at.clone());
                        if self.nodes[*s].tan.is_some() {
                            bump_tan!(*s, -at.sum_axis(Axis(0)).insert_axis(Axis(0)));
                        }
                    }
                }
                Op::Square { x } => {
                    let xv = &self.nodes[*x].val;
                    let mut dx = 2.0 * (&av * xv);
                    if at_present {
                        if let Some(xt) = &self.nodes[*x].tan {
                            dx += &(2.0 * (&at * xt));
                        }
                        bump_tan!(*x, 2.0 * (&at * xv));
                    }
                    bump_val!(*x, dx);
                }
                Op::RsqrtShift { x, eps } => {
                    let u = self.nodes[*x].val.mapv(|v| v + eps);
                    let d1 = u.mapv(|v| -0.5 * v.powf(-1.5));
                    let mut dx = &av * &d1;
                    if at_present {
                        if let Some(xt) = &self.nodes[*x].tan {
                            let d2 = u.mapv(|v| 0.75 * v.powf(-2.5));
                            dx += &(&at * &d2 * xt);
                        }
                        bump_tan!(*x, &at * &d1);
                    }
                    bump_val!(*x, dx);
                }
                Op::MulRow { x, s } => {
                    let xv = &self.nodes[*x].val;
                    let sv = &self.nodes[*s].val;
                    let xt = self.nodes[*x].tan.clone();
                    let st = self.nodes[*s].tan.clone();
                    let broadcast = |a: &Array2<f64>, row: &Array2<f64>| {
                        let mut out = a.clone();
                        for mut r in out.axis_iter_mut(Axis(0)) {
                            for (v, b) in r.iter_mut().zip(row.row(0).iter()) {
                                *v *= b;
                            }
                        }
                        out
                    };
                    // d/dx
                    let mut dx = broadcast(&av, sv);
                    if at_present {
                        if let Some(stv) = &st {
                            dx += &broadcast(&at, stv);
                        }
                        bump_tan!(*x, broadcast(&at, sv));
                    }
                    bump_val!(*x, dx);
                    // d/ds: reduce over rows.
                    let mut ds = (&av * xv).sum_axis(Axis(0)).insert_axis(Axis(0));
                    if at_present {
                        if let Some(xtv) = &xt {
                            ds += &(&at * xtv).sum_axis(Axis(0)).insert_axis(Axis(0));
                        }
                        if st.is_some() {
                            bump_tan!(*s, (&at * xv).sum_axis(Axis(0)).insert_axis(Axis(0)));
                        }
                    }
                    bump_val!(*s, ds);
                }
                Op::ScaleParamRows { x, g } => {
                    let gv = params.vector(*g).to_vec();
                    let apply = |m: &Array2<f64>| {
                        let mut out = m.clone();
                        for (mut row, &k) in out.axis_iter_mut(Axis(0)).zip(gv.iter()) {
                            row *= k;
                        }
                        out
                    };
                    let xv = &self.nodes[*x].val;
                    let mut dg: Vec<f64> =
                        (&av * xv).sum_axis(Axis(1)).into_iter().collect();
                    if at_present {
                        if let Some(xt) = &self.nodes[*x].tan {
                            for (d, extra) in dg.iter_mut().zip((&at * xt).sum_axis(Axis(1)).iter()) {
                                *d += extra;
                            }
                        }
                        bump_tan!(*x, apply(&at));
                    }
                    for (slot, d) in grads.vector_mut(*g).iter_mut().zip(dg) {
                        *slot += d;
                    }
                    bump_val!(*x, apply(&av));
                }
                Op::AddParamRows { x, b } => {
                    let db = av.sum_axis(Axis(1));
                    for (slot, d) in grads.vector_mut(*b).iter_mut().zip(db.iter()) {
                        *slot += d;
                    }
                    bump_val!(*x, av.clone());
                    if at_present {
                        bump_tan!(*x, at.clone());
                    }
                }
                Op::TangentAsValue { x } => {
                    bump_tan!(*x, av.clone());
                }
                Op::Detach => {}
                Op::DropTangent { x } => {
                    bump_val!(*x, av.clone());
                }
                Op::OperatorFromFeatures { x, layout } => {
                    let n = av.ncols();
                    let mut dx = Array2::zeros(self.nodes[*x].val.dim());
                    let mut col = vec![0.0; av.nrows()];
                    let mut feat = vec![0.0; dx.nrows()];
                    for j in 0..n {
                        for (r, slot) in col.iter_mut().enumerate() {
                            *slot = av[[r, j]];
                        }
                        feat.fill(0.0);
                        layout.accumulate_transposed(&col, &mut feat);
                        for (r, &v) in feat.iter().enumerate() {
                            dx[[r, j]] = v;
                        }
                    }
                    bump_val!(*x, dx);
                }
                Op::DensityFromFeatures { x, layout } | Op::DensityDerivFromFeatures { x, layout } => {
                    let n = av.ncols();
                    let mut dx = Array2::zeros(self.nodes[*x].val.dim());
                    let mut col = vec![0.0; av.nrows()];
                    let mut feat = vec![0.0; dx.nrows()];
                    for j in 0..n {
                        for (r, slot) in col.iter_mut().enumerate() {
                            *slot = av[[r, j]];
                        }
                        feat.fill(0.0);
                        layout.accumulate_transposed(&col, &mut feat);
                        for (r, &v) in feat.iter().enumerate() {
                            dx[[r, j]] = v;
                        }
                    }
                    bump_val!(*x, dx);
                }
                Op::MatMulCols { a, b, dim } => {
                    // Ḡ_A += Ḡ_C·Bᴴ and Ḡ_B += Aᴴ·Ḡ_C on the complex gradients.
                    let d = *dim;
                    let avals = &self.nodes[*a].val;
                    let bvals = &self.nodes[*b].val;
                    let n = av.ncols();
                    let mut da = Array2::zeros(avals.dim());
                    let mut db = Array2::zeros(bvals.dim());
                    for j in 0..n {
                        let ja = if avals.ncols() == 1 { 0 } else { j };
                        let jb = if bvals.ncols() == 1 { 0 } else { j };
                        for i in 0..d {
                            for l in 0..d {
                                let gre = av[[2 * (i * d + l), j]];
                                let gim = av[[2 * (i * d + l) + 1, j]];
                                for k in 0..d {
                                    // dA_ik += G_il·conj(B_kl)
                                    let bre = bvals[[2 * (k * d + l), jb]];
                                    let bim = bvals[[2 * (k * d + l) + 1, jb]];
                                    da[[2 * (i * d + k), ja]] += gre * bre + gim * bim;
                                    da[[2 * (i * d + k) + 1, ja]] += gim * bre - gre * bim;
                                    // dB_kl += conj(A_ik)·G_il
                                    let are = avals[[2 * (i * d + k), ja]];
                                    let aim = avals[[2 * (i * d + k) + 1, ja]];
                                    db[[2 * (k * d + l), jb]] += are * gre + aim * gim;
                                    db[[2 * (k * d + l) + 1, jb]] += are * gim - aim * gre;
                                }
                            }
                        }
                    }
                    bump_val!(*a, da);
                    bump_val!(*b, db);
                }
                Op::LinCombCols { terms } => {
                    for &(coeff, id_t) in terms {
                        let tv = &self.nodes[id_t].val;
                        let mut dt = Array2::zeros(tv.dim());
                        for j in 0..av.ncols() {
                            let jt = if tv.ncols() == 1 { 0 } else { j };
                            for e in 0..av.nrows() / 2 {
                                let gre = av[[2 * e, j]];
                                let gim = av[[2 * e + 1, j]];
                                // Ḡ_X += conj(c)·Ḡ_Y
                                dt[[2 * e, jt]] += coeff.re * gre + coeff.im * gim;
                                dt[[2 * e + 1, jt]] += coeff.re * gim - coeff.im * gre;
                            }
                        }
                        bump_val!(id_t, dt);
                    }
                }
                Op::SubElem { a, b } => {
                    bump_val!(*a, av.clone());
                    let bv = &self.nodes[*b].val;
                    let mut db = Array2::zeros(bv.dim());
                    for j in 0..av.ncols() {
                        let jb = if bv.ncols() == 1 { 0 } else { j };
                        for r in 0..av.nrows() {
                            db[[r, jb]] -= av[[r, j]];
                        }
                    }
                    bump_val!(*b, db);
                    if at_present {
                        bump_tan!(*a, at.clone());
                        if self.nodes[*b].tan.is_some() {
                            let btv = self.nodes[*b].tan.as_ref().expect("checked");
                            let mut dbt = Array2::zeros(btv.dim());
                            for j in 0..at.ncols() {
                                let jb = if btv.ncols() == 1 { 0 } else { j };
                                for r in 0..at.nrows() {
                                    dbt[[r, jb]] -= at[[r, j]];
                                }
                            }
                            bump_tan!(*b, dbt);
                        }
                    }
                }
                Op::SqNormCols { x } => {
                    let xv = &self.nodes[*x].val;
                    let mut dx = Array2::zeros(xv.dim());
                    for j in 0..xv.ncols() {
                        let g = av[[0, j]];
                        for r in 0..xv.nrows() {
                            dx[[r, j]] = 2.0 * g * xv[[r, j]];
                        }
                    }
                    if at_present {
                        let mut dxt = Array2::zeros(xv.dim());
                        if let Some(xt) = &self.nodes[*x].tan {
                            for j in 0..xv.ncols() {
                                let g = at[[0, j]];
                                for r in 0..xv.nrows() {
                                    dx[[r, j]] += 2.0 * g * xt[[r, j]];
                                    dxt[[r, j]] = 2.0 * g * xv[[r, j]];
                                }
                            }
                            bump_tan!(*x, dxt);
                        }
                    }
                    bump_val!(*x, dx);
                }
                Op::MeanOverCols { x } => {
                    let n = self.nodes[*x].val.ncols();
                    let g = av[[0, 0]] / n as f64;
                    bump_val!(*x, Array2::from_elem((1, n), g));
                    if at_present && self.nodes[*x].tan.is_some() {
                        bump_tan!(*x, Array2::from_elem((1, n), at[[0, 0]] / n as f64));
                    }
                }
                Op::SelectCol { x, col } => {
                    let mut dx = Array2::zeros(self.nodes[*x].val.dim());
                    for r in 0..av.nrows() {
                        dx[[r, *col]] = av[[r, 0]];
                    }
                    bump_val!(*x, dx);
                    if at_present && self.nodes[*x].tan.is_some() {
                        let mut dxt = Array2::zeros(self.nodes[*x].val.dim());
                        for r in 0..at.nrows() {
                            dxt[[r, *col]] = at[[r, 0]];
                        }
                        bump_tan!(*x, dxt);
                    }
                }
                Op::TotalVariation { x } => {
                    let xv = &self.nodes[*x].val;
                    let n = xv.ncols();
                    let g = av[[0, 0]] / (n - 1) as f64;
                    let mut dx = Array2::zeros(xv.dim());
                    for j in 1..n {
                        for r in 0..xv.nrows() {
                            let s = (xv[[r, j]] - xv[[r, j - 1]]).signum();
                            let s = if xv[[r, j]] == xv[[r, j - 1]] { 0.0 } else { s };
                            dx[[r, j]] += g * s;
                            dx[[r, j - 1]] -= g * s;
                        }
                    }
                    bump_val!(*x, dx);
                }
                Op::ExpScale { x, scale, prefactor } => {
                    let v = self.nodes[*x].val[[0, 0]];
                    let d = prefactor * scale * (scale * v).exp();
                    bump_val!(*x, Array2::from_elem((1, 1), av[[0, 0]] * d));
                }
                Op::AddScalars { terms } => {
                    for &t in terms {
                        bump_val!(t, av.clone());
                    }
                }
            }
        }
        Ok(grads)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}
