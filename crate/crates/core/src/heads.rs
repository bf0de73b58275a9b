//! Output heads: predecessor scores, reachability, bottleneck readout and
//! capacity classifier.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::bitcodec::{bit_matrix, saturating_bits};
use crate::flowgraph::Path;
use crate::gnncore::{glorot, Affine, GraphCtx, Model, ModelConfig};
use crate::tape::{segment_softmax, sigmoid, Mat, ParamId, ParamStore, Segments, Tape, Var};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HeadError {
    #[error("path has no edges")]
    EmptyPath,
    #[error("edge {0} has no message")]
    MissingMessage(usize),
}

/// Scores an incoming edge `j→i` from `(h_j, h_i, e_ji, m_ij)`.
#[derive(Debug, Clone, Copy)]
pub struct PredecessorHead {
    pub source: ParamId,
    pub target: ParamId,
    pub edge: ParamId,
    pub message: ParamId,
    pub bias: ParamId,
    pub out: Affine,
}

impl PredecessorHead {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let k = cfg.latent;
        let fan_in = 3 * k + cfg.edge_features();
        let l = (6.0 / (fan_in + k) as f64).sqrt();
        let mut part = |name: &str, rows: usize| {
            store.add(format!("pred.{name}"), Mat::from_shape_fn((rows, k), |_| rng.gen_range(-l..l)))
        };
        let source = part("source", k);
        let target = part("target", k);
        let edge = part("edge", cfg.edge_features());
        let message = part("message", k);
        let bias = store.add("pred.bias", Mat::zeros((1, k)));
        let out = Affine::new(store, "pred.out", k, 1, rng);
        Self { source, target, edge, message, bias, out }
    }
}

/// One score per message edge; a softmax within each target's incoming
/// edges gives the predecessor distribution.
pub fn predecessor_scores(
    t: &mut Tape,
    head: &PredecessorHead,
    ctx: &GraphCtx,
    h: Var,
    edges: Var,
    messages: Var,
) -> Var {
    let ws = t.param(head.source);
    let wt = t.param(head.target);
    let we = t.param(head.edge);
    let wm = t.param(head.message);
    let b = t.param(head.bias);
    let hs = t.matmul(h, ws);
    let ht = t.matmul(h, wt);
    let hs = t.gather(hs, ctx.from.clone());
    let ht = t.gather(ht, ctx.to.clone());
    let ep = t.matmul(edges, we);
    let mp = t.matmul(messages, wm);
    let a = t.add(hs, ht);
    let a = t.add(a, ep);
    let a = t.add(a, mp);
    let a = t.add_row(a, b);
    let a = t.relu(a);
    head.out.apply(t, a)
}

/// Per-node predecessor distributions, indexed by message edge.
pub fn predecessor_probs(ctx: &GraphCtx, scores: &Mat) -> Vec<f64> {
    segment_softmax(scores.column(0).to_vec(), &ctx.by_target)
}

/// Reachability probabilities from the decoder's logit column.
pub fn reachability(y: &Mat) -> Vec<f64> {
    y.column(0).iter().map(|&x| sigmoid(x)).collect()
}

/// Single post-norm transformer encoder layer over the on-path edge
/// messages, then a scalar map per edge.
#[derive(Debug, Clone, Copy)]
pub struct BottleneckHead {
    pub heads: usize,
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub attn_out: Affine,
    pub norm1_gain: ParamId,
    pub norm1_bias: ParamId,
    pub ffn_in: Affine,
    pub ffn_out: Affine,
    pub norm2_gain: ParamId,
    pub norm2_bias: ParamId,
    pub score: Affine,
}

impl BottleneckHead {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let k = cfg.latent;
        assert_eq!(k % cfg.attention_heads, 0, "latent width must split across heads");
        let query = store.add("bottle.query", glorot(k, k, rng));
        let key = store.add("bottle.key", glorot(k, k, rng));
        let value = store.add("bottle.value", glorot(k, k, rng));
        let attn_out = Affine::new(store, "bottle.attn_out", k, k, rng);
        let norm1_gain = store.add("bottle.norm1.gain", Mat::ones((1, k)));
        let norm1_bias = store.add("bottle.norm1.bias", Mat::zeros((1, k)));
        let ffn_in = Affine::new(store, "bottle.ffn.0", k, 2 * k, rng);
        let ffn_out = Affine::new(store, "bottle.ffn.1", 2 * k, k, rng);
        let norm2_gain = store.add("bottle.norm2.gain", Mat::ones((1, k)));
        let norm2_bias = store.add("bottle.norm2.bias", Mat::zeros((1, k)));
        let score = Affine::new(store, "bottle.score", k, 1, rng);
        Self {
            heads: cfg.attention_heads,
            query,
            key,
            value,
            attn_out,
            norm1_gain,
            norm1_bias,
            ffn_in,
            ffn_out,
            norm2_gain,
            norm2_bias,
            score,
        }
    }

    fn norm(t: &mut Tape, x: Var, gain: ParamId, bias: ParamId) -> Var {
        let g = t.param(gain);
        let b = t.param(bias);
        let n = t.layer_norm(x, 1e-5);
        let n = t.mul_row(n, g);
        t.add_row(n, b)
    }

    /// Scores (L×1) for the L rows of `x`.
    pub fn scores(&self, t: &mut Tape, x: Var) -> Var {
        let k = t.shape(x).1;
        let dh = k / self.heads;
        let wq = t.param(self.query);
        let wk = t.param(self.key);
        let wv = t.param(self.value);
        let q = t.matmul(x, wq);
        let kk = t.matmul(x, wk);
        let v = t.matmul(x, wv);
        let mut outs = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let qh = t.slice_cols(q, head * dh, dh);
            let kh = t.slice_cols(kk, head * dh, dh);
            let vh = t.slice_cols(v, head * dh, dh);
            let kt = t.transpose(kh);
            let s = t.matmul(qh, kt);
            let s = t.scale(s, 1.0 / (dh as f64).sqrt());
            let a = t.softmax_rows(s);
            outs.push(t.matmul(a, vh));
        }
        let attn = t.concat(&outs);
        let attn = self.attn_out.apply(t, attn);
        let x1 = t.add(x, attn);
        let x1 = Self::norm(t, x1, self.norm1_gain, self.norm1_bias);
        let f = self.ffn_in.apply(t, x1);
        let f = t.relu(f);
        let f = self.ffn_out.apply(t, f);
        let x2 = t.add(x1, f);
        let x2 = Self::norm(t, x2, self.norm2_gain, self.norm2_bias);
        self.score.apply(t, x2)
    }
}

/// Rows of the message bank for the path's edges, in path order.
pub fn path_rows(path: &Path, bank_rows: usize) -> Result<Arc<Vec<usize>>, HeadError> {
    if path.edges.is_empty() {
        return Err(HeadError::EmptyPath);
    }
    if let Some(&e) = path.edges.iter().find(|&&e| e >= bank_rows) {
        return Err(HeadError::MissingMessage(e));
    }
    Ok(Arc::new(path.edges.clone()))
}

/// Bottleneck scores (one per path edge) on a tape.
pub fn bottleneck_scores(t: &mut Tape, head: &BottleneckHead, bank: Var, path: &Path) -> Result<Var, HeadError> {
    let rows = path_rows(path, t.shape(bank).0)?;
    let x = t.gather(bank, rows);
    Ok(head.scores(t, x))
}

/// Probability of each path edge being the bottleneck, in path order.
pub fn bottleneck_select(
    model: &Model,
    store: &ParamStore,
    bank: &Mat,
    path: &Path,
) -> Result<Vec<f64>, HeadError> {
    let mut t = Tape::new(store);
    let b = t.constant(bank.clone());
    let s = bottleneck_scores(&mut t, &model.bottleneck_head, b, path)?;
    let one = Segments::new(vec![0; path.edges.len()], 1);
    Ok(segment_softmax(t.value(s).column(0).to_vec(), &one))
}

/// Spreads path-order probabilities over all graph edges; edges off the
/// path get exactly zero.
pub fn mask_to_edges(path: &Path, probs: &[f64], num_edges: usize) -> Vec<f64> {
    let mut full = vec![0.0; num_edges];
    for (&e, &p) in path.edges.iter().zip(probs) {
        full[e] += p;
    }
    full
}

/// Position of the most probable edge; the earliest wins ties.
pub fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
        .0
}

/// Scores candidate new forward capacities `k ∈ {0..c}` for an edge from
/// `(m_e, emb(c), emb(b), emb(k))`. Values are embedded with the capacity
/// table.
#[derive(Debug, Clone, Copy)]
pub struct CapacityHead {
    pub message: ParamId,
    pub values: ParamId,
    pub bias: ParamId,
    pub out: Affine,
}

impl CapacityHead {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let k = cfg.latent;
        let fan_in = k + 3 * cfg.emb;
        let l = (6.0 / (fan_in + k) as f64).sqrt();
        let message = store.add("cap.message", Mat::from_shape_fn((k, k), |_| rng.gen_range(-l..l)));
        let values = store.add("cap.values", Mat::from_shape_fn((3 * cfg.emb, k), |_| rng.gen_range(-l..l)));
        let bias = store.add("cap.bias", Mat::zeros((1, k)));
        let out = Affine::new(store, "cap.out", k, 1, rng);
        Self { message, values, bias, out }
    }
}

/// Candidate rows for a set of edges: `(edge row, c, k)` per candidate and
/// the segment (edge position) of each row.
#[derive(Debug, Clone)]
pub struct Candidates {
    pub bank_rows: Arc<Vec<usize>>,
    pub caps: Vec<u32>,
    pub values: Vec<u32>,
    pub segs: Arc<Segments>,
}

impl Candidates {
    pub fn new(edges: &[(usize, u32)]) -> Self {
        let mut bank_rows = Vec::new();
        let mut caps = Vec::new();
        let mut values = Vec::new();
        let mut of_row = Vec::new();
        for (pos, &(e, c)) in edges.iter().enumerate() {
            for k in 0..=c {
                bank_rows.push(e);
                caps.push(c);
                values.push(k);
                of_row.push(pos);
            }
        }
        Self { bank_rows: Arc::new(bank_rows), caps, values, segs: Arc::new(Segments::new(of_row, edges.len())) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Candidate scores (one row per candidate) on a tape.
pub fn capacity_scores(t: &mut Tape, model: &Model, bank: Var, cands: &Candidates, bottleneck: u32) -> Var {
    let head = &model.capacity_head;
    let m = t.gather(bank, cands.bank_rows.clone());
    let wm = t.param(head.message);
    let m = t.matmul(m, wm);
    let c = model.embed_caps(t, bit_matrix(cands.caps.iter().map(|&c| saturating_bits(c))));
    let b = model.embed_caps(t, bit_matrix(cands.caps.iter().map(|_| saturating_bits(bottleneck))));
    let k = model.embed_caps(t, bit_matrix(cands.values.iter().map(|&k| saturating_bits(k))));
    let v = t.concat(&[c, b, k]);
    let wv = t.param(head.values);
    let v = t.matmul(v, wv);
    let bias = t.param(head.bias);
    let a = t.add(m, v);
    let a = t.add_row(a, bias);
    let a = t.relu(a);
    head.out.apply(t, a)
}

/// Distribution over new forward capacities `{0..c}` for one edge.
pub fn capacity_distribution(
    model: &Model,
    store: &ParamStore,
    bank: &Mat,
    edge: usize,
    cap: u32,
    bottleneck: u32,
) -> Result<Vec<f64>, HeadError> {
    if edge >= bank.nrows() {
        return Err(HeadError::MissingMessage(edge));
    }
    let cands = Candidates::new(&[(edge, cap)]);
    let mut t = Tape::new(store);
    let b = t.constant(bank.clone());
    let s = capacity_scores(&mut t, model, b, &cands, bottleneck);
    Ok(segment_softmax(t.value(s).column(0).to_vec(), &cands.segs))
}

/// Uniform target over the minimum-capacity positions of a path.
pub fn bottleneck_target(caps: &[u32]) -> Vec<f64> {
    let min = caps.iter().copied().min().unwrap_or(0);
    let count = caps.iter().filter(|&&c| c == min).count() as f64;
    caps.iter().map(|&c| if c == min { 1.0 / count } else { 0.0 }).collect()
}
