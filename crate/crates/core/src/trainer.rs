//! Multi-task teacher-forced training, early stopping, checkpoints and
//! subroutine metrics.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path as FsPath;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classical::{bellman_ford_trace, bfs_trace, ford_fulkerson_states, ExecutionTrace};
use crate::datagen::{assign_random_weights, derive_seed, rng_for, walk_path, DataError, Manifest};
use crate::flowgraph::{Path, ResidualGraph};
use crate::gnncore::{argmax_predecessors, Algo, GraphCtx, Model, ModelConfig, ProcessorKind};
use crate::heads::{
    argmax, bottleneck_scores, bottleneck_select, bottleneck_target, capacity_distribution, capacity_scores,
    Candidates,
};
use crate::simulator::{accuracy_over_dataset, NeuralOracle, SimConfig};
use crate::tape::{sigmoid, Grads, Mat, ParamId, ParamStore, Segments, Tape, Var};

pub const CHECKPOINT_VERSION: &str = "neuralff-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub predecessor: f64,
    pub termination: f64,
    pub reachability: f64,
    pub bottleneck: f64,
    pub capacity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { predecessor: 1.0, termination: 1.0, reachability: 1.0, bottleneck: 1.0, capacity: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub loss: LossWeights,
    /// Redraw edge weights every epoch; otherwise they are drawn once.
    pub redraw_weights: bool,
    /// Residual states sampled per training graph and epoch; 0 keeps all.
    pub states_per_graph: usize,
    /// Add the partially matched graphs as extra reachability data.
    pub use_variety: bool,
    /// Also train the bottleneck head on each walk after its augmentation,
    /// where the minima are zero.
    pub zero_cap_walks: bool,
    /// Validation graphs simulated per epoch for the flow curves; 0 skips.
    pub val_flow_graphs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            learning_rate: 5e-4,
            batch_size: 32,
            patience: 10,
            max_epochs: 100,
            seed: 0,
            loss: LossWeights::default(),
            redraw_weights: true,
            states_per_graph: 0,
            use_variety: false,
            zero_cap_walks: true,
            val_flow_graphs: 50,
        }
    }
}

impl TrainConfig {
    pub fn for_processor(kind: ProcessorKind) -> Self {
        let mut cfg = Self::default();
        cfg.model.processor = kind;
        cfg.use_variety = kind == ProcessorKind::PnaNoStd;
        cfg
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch size, max epochs and patience must be positive");
        }
        if self.model.latent == 0 || self.model.emb == 0 || self.model.latent % self.model.attention_heads != 0 {
            return bad("latent width must be positive and divisible by the attention heads");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch} ({detail})")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error("no training data: {0}")]
    NoData(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Graphs used for training and validation.
#[derive(Debug, Clone, Default)]
pub struct TrainData {
    pub train: Vec<ResidualGraph>,
    pub val: Vec<ResidualGraph>,
    pub walks_train: Vec<ResidualGraph>,
    pub walks_val: Vec<ResidualGraph>,
    pub variety: Vec<ResidualGraph>,
}

impl TrainData {
    pub fn from_manifest(manifest: &Manifest, dir: &FsPath) -> Result<Self, TrainError> {
        let load = |name: &str| -> Result<Vec<ResidualGraph>, TrainError> {
            match manifest.find(name) {
                Some(entry) => Ok(entry.load(dir)?),
                None => Ok(Vec::new()),
            }
        };
        Ok(Self {
            train: load("train")?,
            val: load("val")?,
            walks_train: load("walks_train")?,
            walks_val: load("walks_val")?,
            variety: load("bfs_variety")?,
        })
    }
}

/// Bipartite residual state with its ground-truth traces.
#[derive(Debug, Clone)]
pub struct FlowInstance {
    pub graph: ResidualGraph,
    pub ctx: GraphCtx,
    pub bf: ExecutionTrace,
    pub bfs: ExecutionTrace,
}

impl FlowInstance {
    pub fn new(graph: ResidualGraph) -> Self {
        let ctx = GraphCtx::new(&graph);
        let bf = bellman_ford_trace(&graph);
        let bfs = bfs_trace(&graph);
        Self { graph, ctx, bf, bfs }
    }
}

/// Walk with its bottleneck and augmentation targets.
#[derive(Debug, Clone)]
pub struct WalkInstance {
    pub ctx: GraphCtx,
    pub bf: ExecutionTrace,
    pub path: Path,
    pub caps: Vec<u32>,
    pub bottleneck: u32,
    pub train_capacity: bool,
}

impl WalkInstance {
    pub fn new(graph: &ResidualGraph, path: Path, train_capacity: bool) -> Self {
        let caps: Vec<u32> = path.edges.iter().map(|&e| graph.edge(e).cap).collect();
        let bottleneck = caps.iter().copied().min().unwrap_or(0);
        Self { ctx: GraphCtx::new(graph), bf: bellman_ford_trace(graph), path, caps, bottleneck, train_capacity }
    }

    /// The walk itself plus, optionally, the walk after pushing its
    /// bottleneck.
    pub fn from_walk(graph: &ResidualGraph, zero_cap: bool) -> Vec<Self> {
        let path = walk_path(graph).expect("walk graphs have a src→sink path");
        let mut out = vec![Self::new(graph, path.clone(), true)];
        if zero_cap {
            let mut after = graph.clone();
            let b = after.bottleneck(&path).expect("walk path is structural");
            after.augment(&path, b).expect("bottleneck is feasible");
            out.push(Self::new(&after, path, false));
        }
        out
    }

    pub fn capacity_targets(&self) -> Vec<u32> {
        self.caps.iter().map(|&c| c - self.bottleneck).collect()
    }
}

/// Message edge that realises `pred[v] → v` for every node.
pub fn pred_target_edges(ctx: &GraphCtx, pred: &[usize]) -> Vec<usize> {
    (0..ctx.n)
        .map(|v| {
            ctx.incoming(v)
                .iter()
                .copied()
                .find(|&e| ctx.from[e] == pred[v])
                .expect("trace predecessors use existing edges")
        })
        .collect()
}

/// Loss components of one instance, already weighted.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossParts {
    pub predecessor: f64,
    pub termination: f64,
    pub reachability: f64,
    pub bottleneck: f64,
    pub capacity: f64,
}

impl LossParts {
    fn add(&mut self, o: &LossParts) {
        self.predecessor += o.predecessor;
        self.termination += o.termination;
        self.reachability += o.reachability;
        self.bottleneck += o.bottleneck;
        self.capacity += o.capacity;
    }

    fn scaled(&self, c: f64) -> LossParts {
        LossParts {
            predecessor: self.predecessor * c,
            termination: self.termination * c,
            reachability: self.reachability * c,
            bottleneck: self.bottleneck * c,
            capacity: self.capacity * c,
        }
    }

    pub fn total(&self) -> f64 {
        self.predecessor + self.termination + self.reachability + self.bottleneck + self.capacity
    }
}

fn sum_vars(t: &mut Tape, vars: &[Var]) -> Var {
    let mut it = vars.iter().copied();
    let first = it.next().expect("at least one term");
    it.fold(first, |acc, v| t.add(acc, v))
}

fn reach_column(reach: &[bool]) -> Mat {
    Mat::from_shape_fn((reach.len(), 1), |(v, _)| f64::from(u8::from(reach[v])))
}

/// Teacher-forced Bellman-Ford and BFS losses on one residual state.
pub fn flow_loss(t: &mut Tape, model: &Model, inst: &FlowInstance, w: &LossWeights, bf: bool) -> (Var, LossParts) {
    let mut terms = Vec::new();
    let mut parts = LossParts::default();
    let n = inst.ctx.n as f64;
    if bf {
        let steps = model.rollout_teacher(t, &inst.ctx, Algo::BellmanFord, &inst.bf);
        let tn = steps.len() as f64;
        for (s, out) in steps.iter().enumerate() {
            let next = &inst.bf.states[s + 1];
            let mut target = vec![0.0; inst.ctx.num_message_edges()];
            for e in pred_target_edges(&inst.ctx, &next.pred) {
                target[e] = 1.0;
            }
            let pred = t.segment_softmax_ce(
                out.pred_scores.expect("bf step"),
                inst.ctx.by_target.clone(),
                Arc::new(target),
                w.predecessor / (n * tn),
            );
            let cont = f64::from(u8::from(!inst.bf.terminated[s]));
            let tau = t.bce_logits(
                out.tau_logit.expect("bf step"),
                Mat::from_elem((1, 1), cont),
                Mat::from_elem((1, 1), w.termination / tn),
            );
            let reach = t.bce_logits(
                out.y,
                reach_column(&next.reach),
                Mat::from_elem((inst.ctx.n, 1), w.reachability / (n * tn)),
            );
            parts.predecessor += t.scalar(pred);
            parts.termination += t.scalar(tau);
            parts.reachability += t.scalar(reach);
            terms.extend([pred, tau, reach]);
        }
    }
    let steps = model.rollout_teacher(t, &inst.ctx, Algo::Bfs, &inst.bfs);
    let tn = steps.len() as f64;
    for (s, out) in steps.iter().enumerate() {
        let reach = t.bce_logits(
            out.y,
            reach_column(&inst.bfs.states[s + 1].reach),
            Mat::from_elem((inst.ctx.n, 1), w.reachability / (n * tn)),
        );
        parts.reachability += t.scalar(reach);
        terms.push(reach);
    }
    (sum_vars(t, &terms), parts)
}

/// Bottleneck and capacity losses on one walk, from the last teacher-forced
/// Bellman-Ford step's messages.
pub fn walk_loss(t: &mut Tape, model: &Model, inst: &WalkInstance, w: &LossWeights) -> (Var, LossParts) {
    let steps = model.rollout_teacher(t, &inst.ctx, Algo::BellmanFord, &inst.bf);
    let bank = steps.last().expect("walk traces have steps").messages;
    let mut parts = LossParts::default();
    let scores = bottleneck_scores(t, &model.bottleneck_head, bank, &inst.path).expect("walk path is non-empty");
    let one = Arc::new(Segments::new(vec![0; inst.path.len()], 1));
    let bottle = t.segment_softmax_ce(scores, one, Arc::new(bottleneck_target(&inst.caps)), w.bottleneck);
    parts.bottleneck = t.scalar(bottle);
    if !inst.train_capacity {
        return (bottle, parts);
    }
    let edges: Vec<(usize, u32)> = inst.path.edges.iter().copied().zip(inst.caps.iter().copied()).collect();
    let cands = Candidates::new(&edges);
    let targets: Vec<f64> = cands
        .values
        .iter()
        .zip(&cands.segs.of_row)
        .map(|(&k, &pos)| f64::from(u8::from(k == inst.caps[pos] - inst.bottleneck)))
        .collect();
    let cs = capacity_scores(t, model, bank, &cands, inst.bottleneck);
    let cap = t.segment_softmax_ce(cs, cands.segs.clone(), Arc::new(targets), w.capacity / inst.path.len() as f64);
    parts.capacity = t.scalar(cap);
    (t.add(bottle, cap), parts)
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Mat> = store.iter().map(|(_, _, p)| Mat::zeros(p.dim())).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &Grads) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..store.len() {
            let Some(g) = grads.get(ParamId(i)) else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = store.get_mut(ParamId(i));
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Wait,
    Stop,
}

/// Patience-based early stopping on a metric to maximise.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<(usize, f64)>,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, waited: 0 }
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> StopDecision {
        match self.best {
            Some((_, b)) if metric <= b => {
                self.waited += 1;
                if self.waited >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Wait
                }
            }
            _ => {
                self.best = Some((epoch, metric));
                self.waited = 0;
                StopDecision::Improved
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub task: String,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

impl History {
    pub fn push(&mut self, epoch: usize, task: &str, split: &str, metric: &str, value: f64) {
        self.rows.push(HistoryRow {
            epoch,
            task: task.into(),
            split: split.into(),
            metric: metric.into(),
            value,
        });
    }

    pub fn get(&self, epoch: usize, task: &str, split: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.epoch == epoch && r.task == task && r.split == split && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,task,split,metric,value")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.epoch, r.task, r.split, r.metric, r.value)?;
        }
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some(h) if h.trim() == "epoch,task,split,metric,value" => {}
            _ => return Err("missing history header".into()),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || format!("malformed history row {}: {line:?}", i + 2);
            if f.len() != 5 {
                return Err(bad());
            }
            rows.push(HistoryRow {
                epoch: f[0].parse().map_err(|_| bad())?,
                task: f[1].into(),
                split: f[2].into(),
                metric: f[3].into(),
                value: f[4].parse().map_err(|_| bad())?,
            });
        }
        if rows.is_empty() {
            return Err("history has no rows".into());
        }
        Ok(Self { rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParam {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub config: TrainConfig,
    pub epoch: usize,
    pub metrics: BTreeMap<String, f64>,
    pub params: Vec<NamedParam>,
}

impl Checkpoint {
    pub fn capture(config: &TrainConfig, epoch: usize, metrics: BTreeMap<String, f64>, store: &ParamStore) -> Self {
        let params = store
            .iter()
            .map(|(_, name, m)| NamedParam {
                name: name.to_string(),
                shape: [m.nrows(), m.ncols()],
                data: m.iter().copied().collect(),
            })
            .collect();
        Self { version: CHECKPOINT_VERSION.into(), config: config.clone(), epoch, metrics, params }
    }

    /// Rebuilds the model layout from the stored config and fills in the
    /// stored values.
    pub fn restore(&self) -> Result<(Model, ParamStore), TrainError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(TrainError::Checkpoint(format!("unsupported version {:?}", self.version)));
        }
        let (model, mut store) = Model::build(self.config.model.clone(), &mut ChaCha8Rng::seed_from_u64(0));
        if store.len() != self.params.len() {
            return Err(TrainError::Checkpoint(format!(
                "expected {} parameters, found {}",
                store.len(),
                self.params.len()
            )));
        }
        for p in &self.params {
            let id = store
                .id(&p.name)
                .ok_or_else(|| TrainError::Checkpoint(format!("unknown parameter {:?}", p.name)))?;
            let target = store.get_mut(id);
            if target.dim() != (p.shape[0], p.shape[1]) || p.data.len() != p.shape[0] * p.shape[1] {
                return Err(TrainError::Checkpoint(format!("shape mismatch for {:?}", p.name)));
            }
            *target = Mat::from_shape_vec((p.shape[0], p.shape[1]), p.data.clone())
                .map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        }
        Ok((model, store))
    }

    pub fn save(&self, path: &FsPath) -> Result<(), TrainError> {
        let text = serde_json::to_string(self).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &FsPath) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| TrainError::Checkpoint(e.to_string()))
    }
}

/// Residual states visited by reference Ford-Fulkerson on `g` after
/// drawing weights from `rng`, each with fresh weights.
pub fn flow_states<R: Rng>(g: &ResidualGraph, rng: &mut R) -> Vec<ResidualGraph> {
    let mut g = g.clone();
    assign_random_weights(&mut g, rng);
    let (_, _, mut states) = ford_fulkerson_states(&g);
    for s in &mut states {
        assign_random_weights(s, rng);
    }
    states
}

fn epoch_instances(cfg: &TrainConfig, data: &TrainData, epoch: usize) -> (Vec<FlowInstance>, Vec<WalkInstance>) {
    let weight_epoch = if cfg.redraw_weights { epoch } else { 1 };
    let epoch_seed = derive_seed(cfg.seed, 10_000 + weight_epoch as u64);
    let mut flows = Vec::new();
    for (i, g) in data.train.iter().enumerate() {
        let mut rng = rng_for(epoch_seed, i as u64);
        let mut states = flow_states(g, &mut rng);
        if cfg.states_per_graph > 0 && states.len() > cfg.states_per_graph {
            states.shuffle(&mut rng);
            states.truncate(cfg.states_per_graph);
        }
        flows.extend(states.into_iter().map(FlowInstance::new));
    }
    let mut walks = Vec::new();
    for (i, g) in data.walks_train.iter().enumerate() {
        let mut g = g.clone();
        assign_random_weights(&mut g, &mut rng_for(epoch_seed, 1_000_000 + i as u64));
        walks.extend(WalkInstance::from_walk(&g, cfg.zero_cap_walks));
    }
    (flows, walks)
}

fn variety_instances(cfg: &TrainConfig, data: &TrainData, epoch: usize) -> Vec<FlowInstance> {
    if !cfg.use_variety {
        return Vec::new();
    }
    let weight_epoch = if cfg.redraw_weights { epoch } else { 1 };
    let epoch_seed = derive_seed(cfg.seed, 20_000 + weight_epoch as u64);
    data.variety
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut g = g.clone();
            assign_random_weights(&mut g, &mut rng_for(epoch_seed, i as u64));
            FlowInstance::new(g)
        })
        .collect()
}

/// Validation states with weights fixed by the seed.
pub fn fixed_flow_instances(graphs: &[ResidualGraph], seed: u64) -> Vec<FlowInstance> {
    graphs
        .iter()
        .enumerate()
        .flat_map(|(i, g)| flow_states(g, &mut rng_for(seed, i as u64)))
        .map(FlowInstance::new)
        .collect()
}

pub fn fixed_walk_instances(walks: &[ResidualGraph], seed: u64) -> Vec<WalkInstance> {
    walks
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut g = g.clone();
            assign_random_weights(&mut g, &mut rng_for(seed, i as u64));
            let path = walk_path(&g).expect("walk graphs have a path");
            WalkInstance::new(&g, path, true)
        })
        .collect()
}

/// Free-running last-step predecessor accuracy over nodes.
pub fn last_step_pred_accuracy(model: &Model, store: &ParamStore, insts: &[FlowInstance]) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for inst in insts {
        let roll = model.rollout_bf(store, &inst.ctx, None);
        let truth = &inst.bf.last().pred;
        hit += roll.final_pred().iter().zip(truth).filter(|(a, b)| a == b).count();
        total += truth.len();
    }
    hit as f64 / total.max(1) as f64
}

/// Bottleneck and augmentation accuracy on walks.
pub fn walk_accuracy(model: &Model, store: &ParamStore, walks: &[WalkInstance]) -> (f64, f64) {
    let (mut bottle, mut aug) = (0usize, 0usize);
    for w in walks {
        let bank = model.rollout_bf(store, &w.ctx, None).last_messages;
        let probs = bottleneck_select(model, store, &bank, &w.path).expect("non-empty walk");
        bottle += usize::from(w.caps[argmax(&probs)] == w.bottleneck);
        let all = w.path.edges.iter().zip(w.capacity_targets()).all(|(&e, target)| {
            let cap = w.caps[w.path.edges.iter().position(|&x| x == e).expect("on path")];
            let d = capacity_distribution(model, store, &bank, e, cap, w.bottleneck).expect("bank covers path");
            argmax(&d) as u32 == target
        });
        aug += usize::from(all);
    }
    let n = walks.len().max(1) as f64;
    (bottle as f64 / n, aug as f64 / n)
}

/// Mean of log(in-degree + 1) over all nodes of the training graphs, with
/// self-loops counted, as used by the degree scalers.
pub fn degree_delta(graphs: &[ResidualGraph]) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for g in graphs {
        let ctx = GraphCtx::new(g);
        sum += ctx.log_degree.iter().sum::<f64>();
        count += ctx.n;
    }
    if count == 0 {
        1.0
    } else {
        sum / count as f64
    }
}

/// Summary printed after each epoch.
#[derive(Debug, Clone)]
pub struct EpochReport {
    pub epoch: usize,
    pub train: LossParts,
    pub val_last_pred: f64,
    pub val_flow_accuracy: Option<f64>,
    pub improved: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: History,
    pub epochs_run: usize,
}

/// Trains every subroutine jointly and returns the checkpoint with the best
/// validation last-step predecessor accuracy.
pub fn train(
    cfg: &TrainConfig,
    data: &TrainData,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(TrainError::NoData("need bipartite train and val graphs".into()));
    }
    if data.walks_train.is_empty() {
        return Err(TrainError::NoData("need random-walk training graphs".into()));
    }
    let mut cfg = cfg.clone();
    cfg.model.pna_delta = degree_delta(&data.train);
    let (model, mut store) = Model::build(cfg.model.clone(), &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut adam = Adam::new(&store, cfg.learning_rate);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = History::default();
    let val_seed = derive_seed(cfg.seed, 7);
    let val_flows = fixed_flow_instances(&data.val, val_seed);
    let val_walks = fixed_walk_instances(&data.walks_val, val_seed);
    let val_sim_graphs: Vec<ResidualGraph> = data.val.iter().take(cfg.val_flow_graphs).cloned().collect();
    let mut best: Option<Checkpoint> = None;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        let started = std::time::Instant::now();
        epochs_run = epoch;
        let (mut flows, mut walks) = epoch_instances(&cfg, data, epoch);
        let mut bfs_only = variety_instances(&cfg, data, epoch);
        let mut rng = rng_for(derive_seed(cfg.seed, 30_000), epoch as u64);
        flows.shuffle(&mut rng);
        walks.shuffle(&mut rng);
        bfs_only.shuffle(&mut rng);
        let batches = flows.len().div_ceil(cfg.batch_size).max(1);
        let mut epoch_parts = LossParts::default();
        for b in 0..batches {
            let flow_batch = &flows[b * cfg.batch_size..((b + 1) * cfg.batch_size).min(flows.len())];
            let spread = |len: usize| (b * len / batches)..((b + 1) * len / batches);
            let walk_batch = &walks[spread(walks.len())];
            let extra = &bfs_only[spread(bfs_only.len())];
            let mut grads = Grads::zeros_like(&store);
            let mut batch_parts = LossParts::default();
            let flow_scale = 1.0 / (flow_batch.len() + extra.len()).max(1) as f64;
            for (k, inst) in flow_batch.iter().chain(extra).enumerate() {
                let mut t = Tape::new(&store);
                let (loss, parts) = flow_loss(&mut t, &model, inst, &cfg.loss, k < flow_batch.len());
                let loss = t.scale(loss, flow_scale);
                grads.accumulate(&t.backward(loss));
                batch_parts.add(&parts.scaled(flow_scale));
            }
            let walk_scale = 1.0 / walk_batch.len().max(1) as f64;
            for inst in walk_batch {
                let mut t = Tape::new(&store);
                let (loss, parts) = walk_loss(&mut t, &model, inst, &cfg.loss);
                let loss = t.scale(loss, walk_scale);
                grads.accumulate(&t.backward(loss));
                batch_parts.add(&parts.scaled(walk_scale));
            }
            if !batch_parts.total().is_finite() || !grads.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: b, detail: format!("{batch_parts:?}") });
            }
            adam.update(&mut store, &grads);
            epoch_parts.add(&batch_parts.scaled(1.0 / batches as f64));
        }

        for (task, v) in [
            ("predecessor", epoch_parts.predecessor),
            ("termination", epoch_parts.termination),
            ("reachability", epoch_parts.reachability),
            ("bottleneck", epoch_parts.bottleneck),
            ("capacity", epoch_parts.capacity),
        ] {
            history.push(epoch, task, "train", "loss", v);
        }
        let val_last_pred = last_step_pred_accuracy(&model, &store, &val_flows);
        history.push(epoch, "predecessor", "val", "last_step_accuracy", val_last_pred);
        let mut metrics = BTreeMap::new();
        metrics.insert("val_last_step_pred_acc".to_string(), val_last_pred);
        if !val_walks.is_empty() {
            let (b, a) = walk_accuracy(&model, &store, &val_walks);
            history.push(epoch, "bottleneck", "val", "accuracy", b);
            history.push(epoch, "capacity", "val", "augment_accuracy", a);
            metrics.insert("val_bottleneck_acc".into(), b);
            metrics.insert("val_augment_acc".into(), a);
        }
        let mut val_flow_accuracy = None;
        if !val_sim_graphs.is_empty() {
            let sim = SimConfig { runs: 1, ..SimConfig::threshold(5) };
            let acc = accuracy_over_dataset(&val_sim_graphs, || NeuralOracle::new(&model, &store), &sim, val_seed);
            history.push(epoch, "maxflow", "val", "accuracy", acc.mean);
            history.push(epoch, "maxflow", "val", "flow_error", acc.flow_error);
            metrics.insert("val_flow_acc".into(), acc.mean);
            metrics.insert("val_flow_error".into(), acc.flow_error);
            val_flow_accuracy = Some(acc.mean);
        }
        let decision = stopper.observe(epoch, val_last_pred);
        if decision == StopDecision::Improved {
            best = Some(Checkpoint::capture(&cfg, epoch, metrics, &store));
        }
        on_epoch(&EpochReport {
            epoch,
            train: epoch_parts,
            val_last_pred,
            val_flow_accuracy,
            improved: decision == StopDecision::Improved,
            seconds: started.elapsed().as_secs_f64(),
        });
        if decision == StopDecision::Stop {
            break;
        }
    }
    let checkpoint = best.expect("first epoch always improves");
    Ok(TrainOutcome { checkpoint, history, epochs_run })
}

/// Subroutine-level metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubroutineMetrics {
    pub pred_step_accuracy: f64,
    pub pred_last_accuracy: f64,
    pub termination_accuracy: f64,
    pub reach_accuracy: f64,
    pub bottleneck_accuracy: f64,
    /// Share of saturated paths whose predicted bottleneck edge has zero
    /// capacity.
    pub bottleneck_tnr: f64,
    pub augment_accuracy: f64,
    pub walk_bottleneck_accuracy: f64,
    pub walk_augment_accuracy: f64,
}

impl SubroutineMetrics {
    pub fn as_rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("pred_step_accuracy", self.pred_step_accuracy),
            ("pred_last_accuracy", self.pred_last_accuracy),
            ("termination_accuracy", self.termination_accuracy),
            ("reach_accuracy", self.reach_accuracy),
            ("bottleneck_accuracy", self.bottleneck_accuracy),
            ("bottleneck_tnr", self.bottleneck_tnr),
            ("augment_accuracy", self.augment_accuracy),
            ("walk_bottleneck_accuracy", self.walk_bottleneck_accuracy),
            ("walk_augment_accuracy", self.walk_augment_accuracy),
        ]
    }
}

/// A random simple src→sink path over the graph's edges, ignoring
/// capacities.
pub fn random_structural_path<R: Rng>(g: &ResidualGraph, rng: &mut R) -> Option<Path> {
    fn dfs<R: Rng>(g: &ResidualGraph, v: usize, seen: &mut [bool], nodes: &mut Vec<usize>, edges: &mut Vec<usize>, rng: &mut R) -> bool {
        if v == g.sink() {
            return true;
        }
        let mut out = g.out_edges(v).to_vec();
        out.shuffle(rng);
        for e in out {
            let to = g.edge(e).to;
            if seen[to] {
                continue;
            }
            seen[to] = true;
            nodes.push(to);
            edges.push(e);
            if dfs(g, to, seen, nodes, edges, rng) {
                return true;
            }
            nodes.pop();
            edges.pop();
        }
        false
    }
    let mut seen = vec![false; g.n()];
    seen[g.src()] = true;
    let mut nodes = vec![g.src()];
    let mut edges = Vec::new();
    dfs(g, g.src(), &mut seen, &mut nodes, &mut edges, rng).then_some(Path { nodes, edges })
}

/// Evaluates every subroutine on the Ford-Fulkerson states of `graphs`
/// and on `walks`.
pub fn evaluate_subroutines(
    model: &Model,
    store: &ParamStore,
    graphs: &[ResidualGraph],
    walks: &[ResidualGraph],
    seed: u64,
) -> SubroutineMetrics {
    let mut m = SubroutineMetrics::default();
    let (mut step_hit, mut step_total) = (0usize, 0usize);
    let (mut term_hit, mut term_total) = (0usize, 0usize);
    let (mut reach_hit, mut reach_total) = (0usize, 0usize);
    let (mut last_hit, mut last_total) = (0usize, 0usize);
    let (mut bottle_hit, mut bottle_total) = (0usize, 0usize);
    let (mut tn, mut negatives) = (0usize, 0usize);
    let (mut aug_hit, mut aug_total) = (0usize, 0usize);
    for (i, g) in graphs.iter().enumerate() {
        let mut rng = rng_for(seed, i as u64);
        let mut work = g.clone();
        assign_random_weights(&mut work, &mut rng);
        let (_, steps, states) = ford_fulkerson_states(&work);
        for (k, state) in states.iter().enumerate() {
            let inst = FlowInstance::new(state.clone());
            {
                let mut t = Tape::new(store);
                let outs = model.rollout_teacher(&mut t, &inst.ctx, Algo::BellmanFord, &inst.bf);
                for (s, out) in outs.iter().enumerate() {
                    let pred = argmax_predecessors(&inst.ctx, t.value(out.pred_scores.expect("bf")));
                    let truth = &inst.bf.states[s + 1].pred;
                    step_hit += pred.iter().zip(truth).filter(|(a, b)| a == b).count();
                    step_total += truth.len();
                    let cont = sigmoid(t.scalar(out.tau_logit.expect("bf"))) > 0.5;
                    term_hit += usize::from(cont != inst.bf.terminated[s]);
                    term_total += 1;
                }
                let outs = model.rollout_teacher(&mut t, &inst.ctx, Algo::Bfs, &inst.bfs);
                for (s, out) in outs.iter().enumerate() {
                    let truth = &inst.bfs.states[s + 1].reach;
                    reach_hit += t
                        .value(out.y)
                        .column(0)
                        .iter()
                        .zip(truth)
                        .filter(|(&y, &r)| (y > 0.0) == r)
                        .count();
                    reach_total += truth.len();
                }
            }
            let roll = model.rollout_bf(store, &inst.ctx, None);
            let truth = &inst.bf.last().pred;
            last_hit += roll.final_pred().iter().zip(truth).filter(|(a, b)| a == b).count();
            last_total += truth.len();
            let bank = roll.last_messages;
            if let Some(p) = random_structural_path(state, &mut rng) {
                let caps: Vec<u32> = p.edges.iter().map(|&e| state.edge(e).cap).collect();
                let probs = bottleneck_select(model, store, &bank, &p).expect("non-empty path");
                let chosen = caps[argmax(&probs)];
                let min = *caps.iter().min().expect("non-empty");
                bottle_hit += usize::from(chosen == min);
                bottle_total += 1;
                if min == 0 {
                    negatives += 1;
                    tn += usize::from(chosen == 0);
                }
            }
            if let Some(step) = steps.get(k) {
                let ok = step.path.edges.iter().all(|&e| {
                    let cap = state.edge(e).cap;
                    capacity_distribution(model, store, &bank, e, cap, step.bottleneck)
                        .map(|d| argmax(&d) as u32 == cap - step.bottleneck)
                        .unwrap_or(false)
                });
                aug_hit += usize::from(ok);
                aug_total += 1;
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    m.pred_step_accuracy = ratio(step_hit, step_total);
    m.pred_last_accuracy = ratio(last_hit, last_total);
    m.termination_accuracy = ratio(term_hit, term_total);
    m.reach_accuracy = ratio(reach_hit, reach_total);
    m.bottleneck_accuracy = ratio(bottle_hit, bottle_total);
    m.bottleneck_tnr = ratio(tn, negatives);
    m.augment_accuracy = ratio(aug_hit, aug_total);
    let walk_insts = fixed_walk_instances(walks, seed);
    let (wb, wa) = if walk_insts.is_empty() { (1.0, 1.0) } else { walk_accuracy(model, store, &walk_insts) };
    m.walk_bottleneck_accuracy = wb;
    m.walk_augment_accuracy = wa;
    m
}
