//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records operations as they run; [`Tape::backward`] walks the
//! record in reverse and returns gradients for every parameter touched.
//! The op set is exactly what the executor, the heads and the losses need.

use std::sync::Arc;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis, Zip};

pub type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named trainable matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Mat)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

/// Gradient buffers aligned with a [`ParamStore`]; `None` for parameters
/// that did not take part in the computation.
#[derive(Debug, Clone)]
pub struct Grads(pub Vec<Option<Mat>>);

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Grads(vec![None; store.len()])
    }

    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.0[id.0].as_ref()
    }

    pub fn accumulate(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => *a += b,
                (None, Some(b)) => *a = Some(b.clone()),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for g in self.0.iter_mut().flatten() {
            g.mapv_inplace(|x| x * c);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|g| g.iter().all(|x| x.is_finite()))
    }
}

/// Grouping of rows into segments, e.g. edges grouped by target node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    pub of_row: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl Segments {
    pub fn new(of_row: Vec<usize>, n_segments: usize) -> Self {
        let mut members = vec![Vec::new(); n_segments];
        for (row, &s) in of_row.iter().enumerate() {
            members[s].push(row);
        }
        Self { of_row, members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    ScaleRows(Var, Arc<Vec<f64>>),
    Relu(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    Transpose(Var),
    Gather(Var, Arc<Vec<usize>>),
    SegmentSum(Var, Arc<Segments>),
    SegmentExtremum {
        input: Var,
        default: Option<Var>,
        /// Winning input row per output cell, `usize::MAX` for empty segments.
        arg: Vec<usize>,
    },
    MeanRows(Var),
    SoftmaxRows(Var),
    LayerNorm {
        input: Var,
        normed: Mat,
        inv_std: Vec<f64>,
    },
    Sum(Var),
    SegmentSoftmaxCe {
        scores: Var,
        segs: Arc<Segments>,
        targets: Arc<Vec<f64>>,
        probs: Vec<f64>,
        norm: f64,
    },
    BceLogits {
        logits: Var,
        targets: Mat,
        weights: Mat,
    },
}

struct Node {
    value: Mat,
    op: Op,
}

/// A recorded computation. Parameters are read from the store they were
/// created with.
pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self { store, nodes: Vec::new(), param_vars: vec![None; store.len()] }
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(self.store.get(id).clone(), Op::Param(id));
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) - self.value(b);
        self.push(out, Op::Sub(a, b))
    }

    /// Elementwise product of equally shaped matrices.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    /// `a` (n×m) plus the row vector `row` (1×m) on every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let out = self.value(a) + self.value(row);
        self.push(out, Op::AddRow(a, row))
    }

    /// `a` (n×m) times the row vector `row` (1×m), elementwise per row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let out = self.value(a) * self.value(row);
        self.push(out, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(out, Op::Scale(a, c))
    }

    /// Multiplies row `r` of `a` by the constant `factors[r]`.
    pub fn scale_rows(&mut self, a: Var, factors: Arc<Vec<f64>>) -> Var {
        let mut out = self.value(a).clone();
        for (mut row, &f) in out.rows_mut().into_iter().zip(factors.iter()) {
            row *= f;
        }
        self.push(out, Op::ScaleRows(a, factors))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = concatenate(Axis(1), &views).expect("concat needs equal row counts");
        self.push(out, Op::Concat(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        self.push(out, Op::Transpose(a))
    }

    /// `out[r] = a[idx[r]]`.
    pub fn gather(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Var {
        let src = self.value(a);
        let mut out = Mat::zeros((idx.len(), src.ncols()));
        for (mut row, &i) in out.rows_mut().into_iter().zip(idx.iter()) {
            row.assign(&src.row(i));
        }
        self.push(out, Op::Gather(a, idx))
    }

    pub fn segment_sum(&mut self, a: Var, segs: Arc<Segments>) -> Var {
        let src = self.value(a);
        let mut out = Mat::zeros((segs.len(), src.ncols()));
        for (s, members) in segs.members.iter().enumerate() {
            let mut row = out.row_mut(s);
            for &r in members {
                row += &src.row(r);
            }
        }
        self.push(out, Op::SegmentSum(a, segs))
    }

    /// Columnwise maximum per segment. Empty segments take `default`
    /// (a 1×m row) or zero.
    pub fn segment_max(&mut self, a: Var, segs: Arc<Segments>, default: Option<Var>) -> Var {
        self.segment_extremum(a, segs, default, true)
    }

    pub fn segment_min(&mut self, a: Var, segs: Arc<Segments>, default: Option<Var>) -> Var {
        self.segment_extremum(a, segs, default, false)
    }

    fn segment_extremum(&mut self, a: Var, segs: Arc<Segments>, default: Option<Var>, max: bool) -> Var {
        let src = self.value(a);
        let m = src.ncols();
        let mut out = Mat::zeros((segs.len(), m));
        let mut arg = vec![usize::MAX; segs.len() * m];
        for (s, members) in segs.members.iter().enumerate() {
            if members.is_empty() {
                if let Some(d) = default {
                    out.row_mut(s).assign(&self.value(d).row(0));
                }
                continue;
            }
            for c in 0..m {
                let mut best = members[0];
                for &r in &members[1..] {
                    let (x, y) = (src[[r, c]], src[[best, c]]);
                    if (max && x > y) || (!max && x < y) {
                        best = r;
                    }
                }
                out[[s, c]] = src[[best, c]];
                arg[s * m + c] = best;
            }
        }
        self.push(out, Op::SegmentExtremum { input: a, default, arg })
    }

    /// Mean over rows, giving a 1×m row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let out = self.value(a).mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        self.push(out, Op::MeanRows(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let mx = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - mx).exp());
            let z = row.sum();
            row /= z;
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Row-wise standardisation (zero mean, unit variance), without gain
    /// or bias.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let src = self.value(a);
        let mut normed = src.clone();
        let mut inv_std = Vec::with_capacity(src.nrows());
        for mut row in normed.rows_mut() {
            let mean = row.mean().unwrap_or(0.0);
            row -= mean;
            let var = row.mapv(|x| x * x).mean().unwrap_or(0.0);
            let is = 1.0 / (var + eps).sqrt();
            row *= is;
            inv_std.push(is);
        }
        let out = normed.clone();
        self.push(out, Op::LayerNorm { input: a, normed, inv_std })
    }

    /// Sum of all entries as a 1×1 value.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Mat::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Softmax cross-entropy within segments of a column of scores.
    /// `targets[r]` is the target probability of row `r`; a segment whose
    /// targets are all zero contributes nothing. The summed loss is scaled
    /// by `norm`.
    pub fn segment_softmax_ce(
        &mut self,
        scores: Var,
        segs: Arc<Segments>,
        targets: Arc<Vec<f64>>,
        norm: f64,
    ) -> Var {
        let x = self.value(scores);
        assert_eq!(x.ncols(), 1, "scores must be a column");
        let probs = segment_softmax(x.column(0).to_vec(), &segs);
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t > 0.0 {
                loss -= t * probs[r].max(1e-300).ln();
            }
        }
        let out = Mat::from_elem((1, 1), loss * norm);
        self.push(out, Op::SegmentSoftmaxCe { scores, segs, targets, probs, norm })
    }

    /// Weighted binary cross-entropy on logits, summed.
    pub fn bce_logits(&mut self, logits: Var, targets: Mat, weights: Mat) -> Var {
        let x = self.value(logits);
        assert_eq!(x.dim(), targets.dim());
        assert_eq!(x.dim(), weights.dim());
        let mut loss = 0.0;
        Zip::from(x).and(&targets).and(&weights).for_each(|&x, &y, &w| {
            loss += w * (x.max(0.0) - x * y + (-x.abs()).exp().ln_1p());
        });
        let out = Mat::from_elem((1, 1), loss);
        self.push(out, Op::BceLogits { logits, targets, weights })
    }

    /// Gradients of the scalar `root` with respect to every parameter.
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(self.shape(root), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::from_elem((1, 1), 1.0));
        let mut out = Grads(vec![None; self.store.len()]);

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(x) => *x += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => match &mut out.0[id.0] {
                    Some(x) => *x += &g,
                    slot => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, -g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *row, gr);
                    acc(&mut grads, *a, g);
                }
                Op::MulRow(a, row) => {
                    let gr = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ga = &g * self.value(*row);
                    acc(&mut grads, *row, gr);
                    acc(&mut grads, *a, ga);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::ScaleRows(a, factors) => {
                    let mut ga = g;
                    for (mut row, &f) in ga.rows_mut().into_iter().zip(factors.iter()) {
                        row *= f;
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&node.value).for_each(|gx, &y| {
                        if y <= 0.0 {
                            *gx = 0.0;
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        acc(&mut grads, p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Mat::zeros((r, c));
                    let w = g.ncols();
                    ga.slice_mut(s![.., *start..*start + w]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.t().to_owned()),
                Op::Gather(a, idx) => {
                    let mut ga = Mat::zeros(self.shape(*a));
                    for (row, &j) in g.rows().into_iter().zip(idx.iter()) {
                        let mut dst = ga.row_mut(j);
                        dst += &row;
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SegmentSum(a, segs) => {
                    let mut ga = Mat::zeros(self.shape(*a));
                    for (r, &s) in segs.of_row.iter().enumerate() {
                        let mut dst = ga.row_mut(r);
                        dst += &g.row(s);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SegmentExtremum { input, default, arg } => {
                    let mut ga = Mat::zeros(self.shape(*input));
                    let m = g.ncols();
                    let mut gd = default.map(|d| Mat::zeros(self.shape(d)));
                    for s in 0..g.nrows() {
                        for c in 0..m {
                            match arg[s * m + c] {
                                usize::MAX => {
                                    if let Some(gd) = gd.as_mut() {
                                        gd[[0, c]] += g[[s, c]];
                                    }
                                }
                                r => ga[[r, c]] += g[[s, c]],
                            }
                        }
                    }
                    acc(&mut grads, *input, ga);
                    if let (Some(d), Some(gd)) = (default, gd) {
                        acc(&mut grads, *d, gd);
                    }
                }
                Op::MeanRows(a) => {
                    let (r, c) = self.shape(*a);
                    let ga = Mat::from_shape_fn((r, c), |(_, j)| g[[0, j]] / r as f64);
                    acc(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let p = &node.value;
                    let mut ga = &g * p;
                    for (mut row, prow) in ga.rows_mut().into_iter().zip(p.rows()) {
                        let dot = row.sum();
                        Zip::from(&mut row).and(&prow).for_each(|x, &pp| *x -= pp * dot);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm { input, normed, inv_std } => {
                    let m = normed.ncols() as f64;
                    let mut ga = Mat::zeros(normed.dim());
                    for r in 0..normed.nrows() {
                        let gr = g.row(r);
                        let xr = normed.row(r);
                        let mean_g = gr.sum() / m;
                        let mean_gx = gr.dot(&xr) / m;
                        for c in 0..normed.ncols() {
                            ga[[r, c]] = inv_std[r] * (gr[c] - mean_g - xr[c] * mean_gx);
                        }
                    }
                    acc(&mut grads, *input, ga);
                }
                Op::Sum(a) => {
                    let ga = Mat::from_elem(self.shape(*a), g[[0, 0]]);
                    acc(&mut grads, *a, ga);
                }
                Op::SegmentSoftmaxCe { scores, segs, targets, probs, norm } => {
                    let scale = g[[0, 0]] * norm;
                    let mut ga = Mat::zeros(self.shape(*scores));
                    for members in &segs.members {
                        let total: f64 = members.iter().map(|&r| targets[r]).sum();
                        if total == 0.0 {
                            continue;
                        }
                        for &r in members {
                            ga[[r, 0]] = scale * (probs[r] * total - targets[r]);
                        }
                    }
                    acc(&mut grads, *scores, ga);
                }
                Op::BceLogits { logits, targets, weights } => {
                    let scale = g[[0, 0]];
                    let mut ga = self.value(*logits).mapv(sigmoid);
                    Zip::from(&mut ga).and(targets).and(weights).for_each(|p, &y, &w| {
                        *p = scale * w * (*p - y);
                    });
                    acc(&mut grads, *logits, ga);
                }
            }
        }
        out
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of `scores` within each segment.
pub fn segment_softmax(scores: Vec<f64>, segs: &Segments) -> Vec<f64> {
    let mut probs = scores;
    for members in &segs.members {
        if members.is_empty() {
            continue;
        }
        let mx = members.iter().map(|&r| probs[r]).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for &r in members {
            probs[r] = (probs[r] - mx).exp();
            z += probs[r];
        }
        for &r in members {
            probs[r] /= z;
        }
    }
    probs
}
