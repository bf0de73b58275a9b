//! Encode-process-decode executor.
//!
//! Per step and per algorithm: an encoder maps node features and the
//! previous latents to `z`, the shared processor passes messages over the
//! residual graph (plus a self-loop per node) to produce latents `h`, a
//! decoder maps `(z, h)` to node outputs, and a termination network maps
//! the mean latent to a continue-probability.
//!
//! Node features are `[dist embedding | reach | is_src | is_sink]`; edge
//! features are `[capacity embedding | weight embedding | is_pred]`, where
//! `is_pred` marks the edge that currently serves as its target's
//! predecessor. Self-loops carry capacity ∞ and weight 0.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitcodec::{bit_matrix, saturating_bits, Bits, N_BITS};
use crate::classical::{AlgoState, ExecutionTrace, INF};
use crate::flowgraph::ResidualGraph;
use crate::heads::{self, BottleneckHead, CapacityHead, PredecessorHead};
use crate::tape::{sigmoid, Mat, ParamId, ParamStore, Segments, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProcessorKind {
    /// Message passing with elementwise-max aggregation.
    Mpnn,
    /// Principal neighbourhood aggregation with {mean, max, min} and the
    /// {identity, amplification, attenuation} degree scalers.
    PnaNoStd,
}

impl std::str::FromStr for ProcessorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mpnn" => Ok(ProcessorKind::Mpnn),
            "pna_no_std" | "pna" => Ok(ProcessorKind::PnaNoStd),
            other => Err(format!("unknown processor {other:?}")),
        }
    }
}

impl std::fmt::Display for ProcessorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProcessorKind::Mpnn => "mpnn",
            ProcessorKind::PnaNoStd => "pna_no_std",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    BellmanFord,
    Bfs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub processor: ProcessorKind,
    /// Latent width K.
    pub latent: usize,
    /// Width of one embedded scalar.
    pub emb: usize,
    /// Mean of log(in-degree + 1) over the training graphs, for the PNA
    /// scalers.
    pub pna_delta: f64,
    pub attention_heads: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { processor: ProcessorKind::Mpnn, latent: 32, emb: 16, pna_delta: 1.0, attention_heads: 4 }
    }
}

impl ModelConfig {
    pub fn node_features(&self) -> usize {
        self.emb + 3
    }

    pub fn edge_features(&self) -> usize {
        2 * self.emb + 1
    }
}

/// `x W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub w: ParamId,
    pub b: ParamId,
}

impl Affine {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let w = store.add(format!("{name}.w"), glorot(fan_in, fan_out, rng));
        let b = store.add(format!("{name}.b"), Mat::zeros((1, fan_out)));
        Self { w, b }
    }

    pub fn apply(&self, t: &mut Tape, x: Var) -> Var {
        let w = t.param(self.w);
        let b = t.param(self.b);
        let xw = t.matmul(x, w);
        t.add_row(xw, b)
    }

    pub fn fan_in(&self, store: &ParamStore) -> usize {
        store.get(self.w).nrows()
    }
}

/// One hidden ReLU layer.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub hidden: Affine,
    pub out: Affine,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        hidden: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            hidden: Affine::new(store, &format!("{name}.0"), fan_in, hidden, rng),
            out: Affine::new(store, &format!("{name}.1"), hidden, fan_out, rng),
        }
    }

    pub fn apply(&self, t: &mut Tape, x: Var) -> Var {
        let a = self.hidden.apply(t, x);
        let a = t.relu(a);
        self.out.apply(t, a)
    }
}

pub fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Mat {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Mat::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-limit..limit))
}

/// Message-passing structure of one residual graph: every graph edge plus
/// a self-loop per node, grouped by target node.
#[derive(Debug, Clone)]
pub struct GraphCtx {
    pub n: usize,
    pub src: usize,
    pub sink: usize,
    pub num_graph_edges: usize,
    pub from: Arc<Vec<usize>>,
    pub to: Arc<Vec<usize>>,
    pub by_target: Arc<Segments>,
    pub caps: Vec<u32>,
    pub weights: Vec<u32>,
    pub cap_bits: Mat,
    pub weight_bits: Mat,
    /// log(d + 1) per node, d counting incoming message edges.
    pub log_degree: Vec<f64>,
}

impl GraphCtx {
    pub fn new(g: &ResidualGraph) -> Self {
        let n = g.n();
        let e = g.num_edges();
        let mut from = Vec::with_capacity(e + n);
        let mut to = Vec::with_capacity(e + n);
        let mut caps = Vec::with_capacity(e + n);
        let mut weights = Vec::with_capacity(e + n);
        for edge in g.edges() {
            from.push(edge.from);
            to.push(edge.to);
            caps.push(edge.cap);
            weights.push(edge.weight);
        }
        for v in 0..n {
            from.push(v);
            to.push(v);
            caps.push(INF);
            weights.push(0);
        }
        let cap_bits = bit_matrix(caps.iter().map(|&c| saturating_bits(c)));
        let weight_bits = bit_matrix(weights.iter().map(|&w| saturating_bits(w)));
        let by_target = Segments::new(to.clone(), n);
        let log_degree = by_target.members.iter().map(|m| ((m.len() + 1) as f64).ln()).collect();
        Self {
            n,
            src: g.src(),
            sink: g.sink(),
            num_graph_edges: e,
            from: Arc::new(from),
            to: Arc::new(to),
            by_target: Arc::new(by_target),
            caps,
            weights,
            cap_bits,
            weight_bits,
            log_degree,
        }
    }

    pub fn num_message_edges(&self) -> usize {
        self.from.len()
    }

    pub fn self_loop(&self, v: usize) -> usize {
        self.num_graph_edges + v
    }

    /// Message edges entering `v` (self-loop included).
    pub fn incoming(&self, v: usize) -> &[usize] {
        &self.by_target.members[v]
    }
}

/// Distance as fed to the network: ∞ stays ∞, finite values saturate at 254.
pub fn dist_bits(d: u32) -> Bits {
    if d == INF {
        saturating_bits(INF)
    } else {
        saturating_bits(d.min(254))
    }
}

/// Algorithm state visible to the network at one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    pub dist: Vec<u32>,
    pub reach: Vec<bool>,
    pub pred: Vec<usize>,
}

impl From<&AlgoState> for NodeState {
    fn from(s: &AlgoState) -> Self {
        Self { dist: s.dist.clone(), reach: s.reach.clone(), pred: s.pred.clone() }
    }
}

impl NodeState {
    pub fn initial(ctx: &GraphCtx) -> Self {
        let mut dist = vec![INF; ctx.n];
        dist[ctx.src] = 0;
        let mut reach = vec![false; ctx.n];
        reach[ctx.src] = true;
        Self { dist, reach, pred: (0..ctx.n).collect() }
    }
}

/// The shared message-passing processor.
#[derive(Debug, Clone, Copy)]
pub struct Processor {
    pub kind: ProcessorKind,
    /// First message layer, split by input block: target latent, source
    /// latent and edge features.
    pub msg_target: ParamId,
    pub msg_source: ParamId,
    pub msg_edge: ParamId,
    pub msg_bias: ParamId,
    pub msg_out: Affine,
    /// Aggregate used for a node without incoming messages.
    pub empty_default: ParamId,
    pub update: Mlp,
}

impl Processor {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let k = cfg.latent;
        let ne = cfg.edge_features();
        let fan_in = 2 * k + ne;
        let limit = |fo: usize| (6.0 / (fan_in + fo) as f64).sqrt();
        let mut part = |name: &str, rows: usize| {
            let l = limit(k);
            store.add(format!("proc.msg.{name}"), Mat::from_shape_fn((rows, k), |_| rng.gen_range(-l..l)))
        };
        let msg_target = part("target", k);
        let msg_source = part("source", k);
        let msg_edge = part("edge", ne);
        let msg_bias = store.add("proc.msg.bias", Mat::zeros((1, k)));
        let msg_out = Affine::new(store, "proc.msg.out", k, k, rng);
        let empty_default = store.add("proc.empty_default", Mat::zeros((1, k)));
        let agg_width = match cfg.processor {
            ProcessorKind::Mpnn => k,
            ProcessorKind::PnaNoStd => 9 * k,
        };
        let update = Mlp::new(store, "proc.update", k + agg_width, k, k, rng);
        Self { kind: cfg.processor, msg_target, msg_source, msg_edge, msg_bias, msg_out, empty_default, update }
    }

    /// Messages `m_ij = M(z_i, z_j, e_ji)` for every message edge `j→i`.
    pub fn messages(&self, t: &mut Tape, ctx: &GraphCtx, z: Var, edges: Var) -> Var {
        let wt = t.param(self.msg_target);
        let ws = t.param(self.msg_source);
        let we = t.param(self.msg_edge);
        let b = t.param(self.msg_bias);
        let zt = t.matmul(z, wt);
        let zs = t.matmul(z, ws);
        let at_target = t.gather(zt, ctx.to.clone());
        let at_source = t.gather(zs, ctx.from.clone());
        let ep = t.matmul(edges, we);
        let a = t.add(at_target, at_source);
        let a = t.add(a, ep);
        let a = t.add_row(a, b);
        let a = t.relu(a);
        self.msg_out.apply(t, a)
    }

    /// Aggregates messages per target node.
    pub fn aggregate(&self, t: &mut Tape, ctx: &GraphCtx, messages: Var, cfg: &ModelConfig) -> Var {
        let default = t.param(self.empty_default);
        match self.kind {
            ProcessorKind::Mpnn => t.segment_max(messages, ctx.by_target.clone(), Some(default)),
            ProcessorKind::PnaNoStd => {
                let sum = t.segment_sum(messages, ctx.by_target.clone());
                let inv_deg =
                    Arc::new(ctx.by_target.members.iter().map(|m| 1.0 / m.len().max(1) as f64).collect());
                let mean = t.scale_rows(sum, inv_deg);
                let max = t.segment_max(messages, ctx.by_target.clone(), Some(default));
                let min = t.segment_min(messages, ctx.by_target.clone(), Some(default));
                let base = t.concat(&[mean, max, min]);
                let amp = Arc::new(ctx.log_degree.iter().map(|&l| l / cfg.pna_delta).collect());
                let att = Arc::new(ctx.log_degree.iter().map(|&l| cfg.pna_delta / l).collect());
                let amplified = t.scale_rows(base, amp);
                let attenuated = t.scale_rows(base, att);
                t.concat(&[base, amplified, attenuated])
            }
        }
    }

    /// `H = P(Z, E)`; also returns the per-edge messages.
    pub fn process(&self, t: &mut Tape, ctx: &GraphCtx, z: Var, edges: Var, cfg: &ModelConfig) -> (Var, Var) {
        let m = self.messages(t, ctx, z, edges);
        let agg = self.aggregate(t, ctx, m, cfg);
        let input = t.concat(&[z, agg]);
        (self.update.apply(t, input), m)
    }
}

/// Per-algorithm encoder, decoder and (for Bellman-Ford) termination net.
#[derive(Debug, Clone, Copy)]
pub struct AlgoNets {
    pub encoder: Affine,
    pub decoder: Affine,
    pub termination: Option<Affine>,
}

/// All learned parameter handles.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub cap_table: ParamId,
    pub weight_table: ParamId,
    pub bellman_ford: AlgoNets,
    pub bfs: AlgoNets,
    pub processor: Processor,
    pub pred_head: PredecessorHead,
    pub bottleneck_head: BottleneckHead,
    pub capacity_head: CapacityHead,
}

/// Outputs of one executor step.
#[derive(Debug, Clone, Copy)]
pub struct StepVars {
    pub z: Var,
    pub h: Var,
    pub messages: Var,
    /// n×1 reachability logits.
    pub y: Var,
    /// 1×1 continue logit (Bellman-Ford only).
    pub tau_logit: Option<Var>,
    /// Message-edge×1 predecessor scores (Bellman-Ford only).
    pub pred_scores: Option<Var>,
}

impl Model {
    /// Builds the parameter layout. Parameter names and order depend only
    /// on `cfg`, so a checkpoint can be loaded back into a fresh build.
    pub fn build<R: Rng>(cfg: ModelConfig, rng: &mut R) -> (Self, ParamStore) {
        let mut store = ParamStore::new();
        let (k, emb) = (cfg.latent, cfg.emb);
        let table = |rng: &mut R| Mat::from_shape_fn((N_BITS, emb), |_| rng.gen_range(-0.5..0.5));
        let cap_table = store.add("emb.cap", table(rng));
        let weight_table = store.add("emb.weight", table(rng));
        let nx = cfg.node_features();
        let bellman_ford = AlgoNets {
            encoder: Affine::new(&mut store, "bf.encoder", nx + k, k, rng),
            decoder: Affine::new(&mut store, "bf.decoder", 2 * k, 1, rng),
            termination: Some(Affine::new(&mut store, "bf.termination", k, 1, rng)),
        };
        let bfs = AlgoNets {
            encoder: Affine::new(&mut store, "bfs.encoder", nx + k, k, rng),
            decoder: Affine::new(&mut store, "bfs.decoder", 2 * k, 1, rng),
            termination: None,
        };
        let processor = Processor::new(&mut store, &cfg, rng);
        let pred_head = PredecessorHead::new(&mut store, &cfg, rng);
        let bottleneck_head = BottleneckHead::new(&mut store, &cfg, rng);
        let capacity_head = CapacityHead::new(&mut store, &cfg, rng);
        let model = Self {
            cfg,
            cap_table,
            weight_table,
            bellman_ford,
            bfs,
            processor,
            pred_head,
            bottleneck_head,
            capacity_head,
        };
        (model, store)
    }

    pub fn nets(&self, algo: Algo) -> &AlgoNets {
        match algo {
            Algo::BellmanFord => &self.bellman_ford,
            Algo::Bfs => &self.bfs,
        }
    }

    /// Embeds rows of bits with the capacity table (also used for
    /// distances and candidate capacities).
    pub fn embed_caps(&self, t: &mut Tape, bits: Mat) -> Var {
        let b = t.constant(bits);
        let table = t.param(self.cap_table);
        t.matmul(b, table)
    }

    /// Capacity and weight embeddings of every message edge; fixed for a
    /// whole rollout.
    pub fn edge_embeddings(&self, t: &mut Tape, ctx: &GraphCtx) -> Var {
        let caps = self.embed_caps(t, ctx.cap_bits.clone());
        let wb = t.constant(ctx.weight_bits.clone());
        let wt = t.param(self.weight_table);
        let weights = t.matmul(wb, wt);
        t.concat(&[caps, weights])
    }

    /// `[edge embeddings | is_pred]` for one step.
    pub fn edge_features(&self, t: &mut Tape, ctx: &GraphCtx, embedded: Var, algo: Algo, state: &NodeState) -> Var {
        let flags = match algo {
            Algo::BellmanFord => pred_flags(ctx, &state.pred),
            Algo::Bfs => Mat::zeros((ctx.num_message_edges(), 1)),
        };
        let f = t.constant(flags);
        t.concat(&[embedded, f])
    }

    pub fn node_features(&self, t: &mut Tape, ctx: &GraphCtx, algo: Algo, state: &NodeState) -> Var {
        let bits = match algo {
            Algo::BellmanFord => bit_matrix(state.dist.iter().map(|&d| dist_bits(d))),
            Algo::Bfs => Mat::zeros((ctx.n, N_BITS)),
        };
        let dist = self.embed_caps(t, bits);
        let flags = Mat::from_shape_fn((ctx.n, 3), |(v, c)| match c {
            0 => f64::from(u8::from(state.reach[v])),
            1 => f64::from(u8::from(v == ctx.src)),
            _ => f64::from(u8::from(v == ctx.sink)),
        });
        let f = t.constant(flags);
        t.concat(&[dist, f])
    }

    /// One encode → process → decode → terminate step.
    pub fn step(
        &self,
        t: &mut Tape,
        ctx: &GraphCtx,
        algo: Algo,
        state: &NodeState,
        h_prev: Var,
        edge_emb: Var,
    ) -> StepVars {
        let nets = *self.nets(algo);
        let x = self.node_features(t, ctx, algo, state);
        let z = encode(t, x, h_prev, &nets.encoder);
        let e = self.edge_features(t, ctx, edge_emb, algo, state);
        let (h, messages) = self.processor.process(t, ctx, z, e, &self.cfg);
        let y = decode(t, z, h, &nets.decoder);
        let tau_logit = nets.termination.map(|term| termination_logit(t, h, &term));
        let pred_scores = match algo {
            Algo::BellmanFord => Some(heads::predecessor_scores(t, &self.pred_head, ctx, h, e, messages)),
            Algo::Bfs => None,
        };
        StepVars { z, h, messages, y, tau_logit, pred_scores }
    }
}

impl Model {
    /// Teacher-forced rollout: step `s` reads the trace's state `s-1`, so
    /// the result has one entry per trace step.
    pub fn rollout_teacher(&self, t: &mut Tape, ctx: &GraphCtx, algo: Algo, trace: &ExecutionTrace) -> Vec<StepVars> {
        let mut h_prev = t.constant(Mat::zeros((ctx.n, self.cfg.latent)));
        let emb = self.edge_embeddings(t, ctx);
        let mut out = Vec::with_capacity(trace.steps());
        for s in 0..trace.steps() {
            let state = NodeState::from(&trace.states[s]);
            let step = self.step(t, ctx, algo, &state, h_prev, emb);
            h_prev = step.h;
            out.push(step);
        }
        out
    }
}

/// `z_i = f_A(x_i, h_i^{t-1})`.
pub fn encode(t: &mut Tape, x: Var, h_prev: Var, encoder: &Affine) -> Var {
    let input = t.concat(&[x, h_prev]);
    encoder.apply(t, input)
}

/// `y_i = g_A(z_i, h_i)`.
pub fn decode(t: &mut Tape, z: Var, h: Var, decoder: &Affine) -> Var {
    let input = t.concat(&[z, h]);
    decoder.apply(t, input)
}

/// Logit of the continue probability, from the mean latent.
pub fn termination_logit(t: &mut Tape, h: Var, term: &Affine) -> Var {
    let mean = t.mean_rows(h);
    term.apply(t, mean)
}

/// One on each message edge that is its target's current predecessor.
pub fn pred_flags(ctx: &GraphCtx, pred: &[usize]) -> Mat {
    let mut flags = Mat::zeros((ctx.num_message_edges(), 1));
    for (e, (&j, &i)) in ctx.from.iter().zip(ctx.to.iter()).enumerate() {
        if pred[i] == j {
            flags[[e, 0]] = 1.0;
        }
    }
    flags
}

/// Predecessor per node: the source of the best-scoring incoming edge.
pub fn argmax_predecessors(ctx: &GraphCtx, scores: &Mat) -> Vec<usize> {
    (0..ctx.n)
        .map(|v| {
            let best = ctx
                .incoming(v)
                .iter()
                .copied()
                .max_by(|&a, &b| scores[[a, 0]].total_cmp(&scores[[b, 0]]).then(b.cmp(&a)))
                .expect("self-loop guarantees a candidate");
            ctx.from[best]
        })
        .collect()
}

/// Next Bellman-Ford state from predicted predecessors: a node keeps its
/// distance under a self-predecessor and otherwise takes its predecessor's
/// previous distance plus the edge weight.
pub fn derive_bf_state(ctx: &GraphCtx, prev: &NodeState, pred: Vec<usize>) -> NodeState {
    let mut dist = prev.dist.clone();
    for v in 0..ctx.n {
        let u = pred[v];
        if u == v {
            continue;
        }
        let e = ctx
            .incoming(v)
            .iter()
            .copied()
            .find(|&e| ctx.from[e] == u)
            .expect("predecessor comes from an incoming edge");
        dist[v] = match prev.dist[u] {
            INF => INF,
            d => d.saturating_add(ctx.weights[e]),
        };
    }
    let reach = dist.iter().map(|&d| d != INF).collect();
    NodeState { dist, reach, pred }
}

/// Result of a free-running Bellman-Ford rollout.
#[derive(Debug, Clone)]
pub struct BfRollout {
    pub states: Vec<NodeState>,
    pub taus: Vec<f64>,
    /// Messages of the last step, one row per message edge.
    pub last_messages: Mat,
}

impl BfRollout {
    pub fn steps(&self) -> usize {
        self.taus.len()
    }

    pub fn final_pred(&self) -> &[usize] {
        &self.states.last().expect("at least one step").pred
    }
}

/// Result of a free-running BFS rollout.
#[derive(Debug, Clone)]
pub struct BfsRollout {
    pub reach: Vec<Vec<bool>>,
    pub sink_prob: f64,
}

impl Model {
    /// Free-running Bellman-Ford: runs while the continue probability is
    /// above 0.5, for at most n-1 steps. `force_tau` overrides the network's
    /// continue probability (for testing the control loop).
    pub fn rollout_bf(&self, store: &ParamStore, ctx: &GraphCtx, force_tau: Option<f64>) -> BfRollout {
        let k = self.cfg.latent;
        let mut state = NodeState::initial(ctx);
        let mut h_prev = Mat::zeros((ctx.n, k));
        let mut states = Vec::new();
        let mut taus = Vec::new();
        let mut last_messages = Mat::zeros((ctx.num_message_edges(), k));
        let max_steps = ctx.n - 1;
        for step in 1..=max_steps {
            let mut t = Tape::new(store);
            let hp = t.constant(h_prev);
            let emb = self.edge_embeddings(&mut t, ctx);
            let out = self.step(&mut t, ctx, Algo::BellmanFord, &state, hp, emb);
            let scores = t.value(out.pred_scores.expect("bf has predecessor scores"));
            let pred = argmax_predecessors(ctx, scores);
            state = derive_bf_state(ctx, &state, pred);
            let tau = force_tau.unwrap_or_else(|| sigmoid(t.scalar(out.tau_logit.expect("bf terminates"))));
            h_prev = t.value(out.h).clone();
            last_messages = t.value(out.messages).clone();
            states.push(state.clone());
            taus.push(tau);
            if tau <= 0.5 || step == max_steps {
                break;
            }
        }
        BfRollout { states, taus, last_messages }
    }

    /// Free-running BFS: feeds back thresholded reachability and stops at a
    /// fixpoint of the predicted set, or after n-1 steps.
    pub fn rollout_bfs(&self, store: &ParamStore, ctx: &GraphCtx) -> BfsRollout {
        let k = self.cfg.latent;
        let mut state = NodeState::initial(ctx);
        let mut h_prev = Mat::zeros((ctx.n, k));
        let mut reach_log = Vec::new();
        let mut sink_prob = 0.0;
        for _ in 1..ctx.n {
            let mut t = Tape::new(store);
            let hp = t.constant(h_prev);
            let emb = self.edge_embeddings(&mut t, ctx);
            let out = self.step(&mut t, ctx, Algo::Bfs, &state, hp, emb);
            let probs: Vec<f64> = t.value(out.y).column(0).iter().map(|&x| sigmoid(x)).collect();
            sink_prob = probs[ctx.sink];
            let reach: Vec<bool> = probs.iter().map(|&p| p > 0.5).collect();
            h_prev = t.value(out.h).clone();
            let fixpoint = reach == state.reach;
            state.reach = reach.clone();
            reach_log.push(reach);
            if fixpoint {
                break;
            }
        }
        BfsRollout { reach: reach_log, sink_prob }
    }
}
