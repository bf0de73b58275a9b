//! Ford-Fulkerson driven by a pluggable oracle, with the termination
//! heuristics and ablation switches used for evaluation.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classical::{bellman_ford_trace, bfs_trace, ford_fulkerson_reference};
use crate::datagen::{assign_random_weights, derive_seed, rng_for};
use crate::flowgraph::{extract_path, Path, ResidualGraph};
use crate::gnncore::{GraphCtx, Model};
use crate::heads::{argmax, bottleneck_select, capacity_distribution};
use crate::tape::{Mat, ParamStore};

/// Outcome of one path query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathQuery {
    Found(Path),
    /// The predecessors do not chain back to the source.
    Invalid,
}

pub trait Oracle {
    fn find_path(&mut self, g: &ResidualGraph) -> PathQuery;
    fn sink_reachable(&mut self, g: &ResidualGraph) -> bool;
    fn find_bottleneck(&mut self, g: &ResidualGraph, p: &Path) -> u32;
    /// Proposed residual graph after pushing `amount` along `p`.
    fn subtract_bottleneck(&mut self, g: &ResidualGraph, p: &Path, amount: u32) -> ResidualGraph;
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn find_path(&mut self, g: &ResidualGraph) -> PathQuery {
        (**self).find_path(g)
    }
    fn sink_reachable(&mut self, g: &ResidualGraph) -> bool {
        (**self).sink_reachable(g)
    }
    fn find_bottleneck(&mut self, g: &ResidualGraph, p: &Path) -> u32 {
        (**self).find_bottleneck(g, p)
    }
    fn subtract_bottleneck(&mut self, g: &ResidualGraph, p: &Path, amount: u32) -> ResidualGraph {
        (**self).subtract_bottleneck(g, p, amount)
    }
}

/// Classical subroutines.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClassicalOracle;

impl Oracle for ClassicalOracle {
    fn find_path(&mut self, g: &ResidualGraph) -> PathQuery {
        extract_path(g, &bellman_ford_trace(g).last().pred).map_or(PathQuery::Invalid, PathQuery::Found)
    }

    fn sink_reachable(&mut self, g: &ResidualGraph) -> bool {
        bfs_trace(g).last().reach[g.sink()]
    }

    fn find_bottleneck(&mut self, g: &ResidualGraph, p: &Path) -> u32 {
        g.bottleneck(p).unwrap_or(0)
    }

    fn subtract_bottleneck(&mut self, g: &ResidualGraph, p: &Path, amount: u32) -> ResidualGraph {
        let mut out = g.clone();
        // An impossible request leaves the graph as is; the simulator's
        // check then reports the mismatch.
        let _ = out.augment(p, amount);
        out
    }
}

/// Learned subroutines. The edge messages of the latest Bellman-Ford
/// rollout feed the bottleneck and capacity heads.
pub struct NeuralOracle<'m> {
    model: &'m Model,
    store: &'m ParamStore,
    bank: Option<Mat>,
}

impl<'m> NeuralOracle<'m> {
    pub fn new(model: &'m Model, store: &'m ParamStore) -> Self {
        Self { model, store, bank: None }
    }

    fn bank(&mut self, g: &ResidualGraph) -> &Mat {
        if self.bank.as_ref().map_or(true, |b| b.nrows() != g.num_edges() + g.n()) {
            let ctx = GraphCtx::new(g);
            self.bank = Some(self.model.rollout_bf(self.store, &ctx, None).last_messages);
        }
        self.bank.as_ref().expect("bank just filled")
    }
}

impl Oracle for NeuralOracle<'_> {
    fn find_path(&mut self, g: &ResidualGraph) -> PathQuery {
        let ctx = GraphCtx::new(g);
        let roll = self.model.rollout_bf(self.store, &ctx, None);
        let path = extract_path(g, roll.final_pred());
        self.bank = Some(roll.last_messages);
        path.map_or(PathQuery::Invalid, PathQuery::Found)
    }

    fn sink_reachable(&mut self, g: &ResidualGraph) -> bool {
        let ctx = GraphCtx::new(g);
        self.model.rollout_bfs(self.store, &ctx).sink_prob > 0.5
    }

    fn find_bottleneck(&mut self, g: &ResidualGraph, p: &Path) -> u32 {
        let (model, store) = (self.model, self.store);
        let bank = self.bank(g);
        match bottleneck_select(model, store, bank, p) {
            Ok(probs) => g.edge(p.edges[argmax(&probs)]).cap,
            Err(_) => 0,
        }
    }

    fn subtract_bottleneck(&mut self, g: &ResidualGraph, p: &Path, amount: u32) -> ResidualGraph {
        let (model, store) = (self.model, self.store);
        let bank = self.bank(g).clone();
        let mut out = g.clone();
        for &e in &p.edges {
            let cap = g.edge(e).cap;
            let new = capacity_distribution(model, store, &bank, e, cap, amount)
                .map(|d| argmax(&d) as u32)
                .unwrap_or(cap);
            out.set_pair_capacity(e, new).expect("candidate never exceeds the current capacity");
        }
        out
    }
}

/// Replaces flagged subroutines with their classical versions.
pub struct Ablated<O> {
    pub inner: O,
    pub classical_bottleneck: bool,
    pub classical_augment: bool,
}

pub fn ablate<O: Oracle>(inner: O, flags: Ablation) -> Ablated<O> {
    Ablated { inner, classical_bottleneck: flags.bottleneck, classical_augment: flags.augment }
}

impl<O: Oracle> Oracle for Ablated<O> {
    fn find_path(&mut self, g: &ResidualGraph) -> PathQuery {
        self.inner.find_path(g)
    }

    fn sink_reachable(&mut self, g: &ResidualGraph) -> bool {
        self.inner.sink_reachable(g)
    }

    fn find_bottleneck(&mut self, g: &ResidualGraph, p: &Path) -> u32 {
        if self.classical_bottleneck {
            ClassicalOracle.find_bottleneck(g, p)
        } else {
            self.inner.find_bottleneck(g, p)
        }
    }

    fn subtract_bottleneck(&mut self, g: &ResidualGraph, p: &Path, amount: u32) -> ResidualGraph {
        if self.classical_augment {
            ClassicalOracle.subtract_bottleneck(g, p, amount)
        } else {
            self.inner.subtract_bottleneck(g, p, amount)
        }
    }
}

/// Answers at random, including structurally broken paths.
pub struct AdversarialOracle<R> {
    pub rng: R,
}

impl<R: Rng> Oracle for AdversarialOracle<R> {
    fn find_path(&mut self, g: &ResidualGraph) -> PathQuery {
        if self.rng.gen_bool(0.1) {
            return PathQuery::Invalid;
        }
        if self.rng.gen_bool(0.2) {
            let len = self.rng.gen_range(1..=4);
            let nodes = (0..=len).map(|_| self.rng.gen_range(0..g.n() + 2)).collect();
            let edges = (0..len).map(|_| self.rng.gen_range(0..g.num_edges() + 2)).collect();
            return PathQuery::Found(Path { nodes, edges });
        }
        // Random walk from src along existing edges, ignoring capacity.
        let mut nodes = vec![g.src()];
        let mut edges = Vec::new();
        let mut cur = g.src();
        while cur != g.sink() && edges.len() < g.n() {
            let out = g.out_edges(cur);
            if out.is_empty() {
                break;
            }
            let e = out[self.rng.gen_range(0..out.len())];
            edges.push(e);
            cur = g.edge(e).to;
            nodes.push(cur);
        }
        PathQuery::Found(Path { nodes, edges })
    }

    fn sink_reachable(&mut self, _g: &ResidualGraph) -> bool {
        self.rng.gen_bool(0.9)
    }

    fn find_bottleneck(&mut self, g: &ResidualGraph, p: &Path) -> u32 {
        if self.rng.gen_bool(0.7) {
            g.bottleneck(p).unwrap_or(0)
        } else {
            self.rng.gen_range(0..3)
        }
    }

    fn subtract_bottleneck(&mut self, g: &ResidualGraph, p: &Path, amount: u32) -> ResidualGraph {
        let mut out = g.clone();
        if self.rng.gen_bool(0.6) {
            let _ = out.augment(p, amount);
        } else {
            for _ in 0..self.rng.gen_range(1..4) {
                let e = self.rng.gen_range(0..g.num_edges());
                let cap = self.rng.gen_range(0..=g.pair_sum(e));
                out.set_pair_capacity(e, cap).expect("cap within pair sum");
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationMode {
    /// Give up after `t` consecutive failed path attempts.
    Threshold(u32),
    /// Give up when the reachability head says the sink is unreachable.
    Bfs,
}

impl fmt::Display for TerminationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminationMode::Threshold(t) => write!(f, "t={t}"),
            TerminationMode::Bfs => f.write_str("bfs"),
        }
    }
}

impl FromStr for TerminationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "bfs" {
            return Ok(TerminationMode::Bfs);
        }
        s.strip_prefix("t=")
            .unwrap_or(s)
            .parse::<u32>()
            .ok()
            .filter(|&t| t >= 1)
            .map(TerminationMode::Threshold)
            .ok_or_else(|| format!("bad termination mode {s:?} (want bfs or t=N)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ablation {
    pub bottleneck: bool,
    pub augment: bool,
}

impl Ablation {
    pub const NONE: Ablation = Ablation { bottleneck: false, augment: false };
    pub const ALL: Ablation = Ablation { bottleneck: true, augment: true };

    pub fn label(&self) -> &'static str {
        match (self.bottleneck, self.augment) {
            (false, false) => "",
            (true, false) => "-bottle",
            (false, true) => "-augment",
            (true, true) => "-augment-bottle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub mode: TerminationMode,
    pub t_b: u32,
    pub ablation: Ablation,
    pub runs: usize,
    /// Redraw edge weights before every path attempt.
    pub randomize_weights: bool,
}

impl SimConfig {
    pub fn threshold(t: u32) -> Self {
        Self { mode: TerminationMode::Threshold(t), t_b: 5, ablation: Ablation::ALL, runs: 10, randomize_weights: true }
    }

    pub fn bfs(ablation: Ablation) -> Self {
        Self { mode: TerminationMode::Bfs, t_b: 5, ablation, runs: 10, randomize_weights: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    NoPath,
    BottleneckMismatch,
    RerunExhausted,
    AugmentMismatch,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::NoPath => "no-path",
            Termination::BottleneckMismatch => "bottleneck-mismatch",
            Termination::RerunExhausted => "rerun-exhausted",
            Termination::AugmentMismatch => "augment-mismatch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimEvent {
    Augmented { path: Path, bottleneck: u32 },
    FailedAttempt,
    ZeroBottleneck,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationResult {
    pub achieved: u32,
    pub optimal: u32,
    pub success: bool,
    pub reason: Termination,
    pub log: Vec<SimEvent>,
    /// The working graph at termination.
    pub final_graph: ResidualGraph,
}

impl SimulationResult {
    pub fn path_queries(&self) -> usize {
        self.log.len()
    }

    pub fn flow_per_step(&self) -> Vec<u32> {
        self.log
            .iter()
            .filter_map(|e| match e {
                SimEvent::Augmented { bottleneck, .. } => Some(*bottleneck),
                _ => None,
            })
            .collect()
    }
}

fn same_capacities(a: &ResidualGraph, b: &ResidualGraph) -> bool {
    a.num_edges() == b.num_edges() && a.edges().iter().zip(b.edges()).all(|(x, y)| x.cap == y.cap)
}

/// Runs Ford-Fulkerson on a copy of `g` with `oracle` answering the
/// subroutine queries. Every augmentation is checked against classical
/// arithmetic before it is applied.
pub fn simulate<O: Oracle, R: Rng>(
    g: &ResidualGraph,
    optimal: u32,
    oracle: &mut O,
    cfg: &SimConfig,
    rng: &mut R,
) -> SimulationResult {
    let mut work = g.clone();
    let mut log = Vec::new();
    let mut cnt_b: u32 = 1;
    let mut failures: u32 = 0;
    let reason = loop {
        if cfg.randomize_weights {
            assign_random_weights(&mut work, rng);
        }
        if cfg.mode == TerminationMode::Bfs && !oracle.sink_reachable(&work) {
            break Termination::NoPath;
        }
        let query = oracle.find_path(&work);
        let path = match query {
            PathQuery::Found(p) if work.check_path(&p).is_ok() => Some(p),
            _ => None,
        };
        let real = path.as_ref().map(|p| work.bottleneck(p).expect("checked path"));
        if let TerminationMode::Threshold(t) = cfg.mode {
            if real.unwrap_or(0) == 0 {
                log.push(SimEvent::FailedAttempt);
                failures += 1;
                if failures >= t {
                    break Termination::NoPath;
                }
                continue;
            }
            failures = 0;
        }
        cnt_b += 1;
        let (Some(path), Some(real)) = (path, real) else {
            log.push(SimEvent::ZeroBottleneck);
            if cnt_b > cfg.t_b {
                break Termination::RerunExhausted;
            }
            continue;
        };
        let predicted = oracle.find_bottleneck(&work, &path);
        if predicted != real {
            break Termination::BottleneckMismatch;
        }
        if real == 0 {
            log.push(SimEvent::ZeroBottleneck);
            if cnt_b > cfg.t_b {
                break Termination::RerunExhausted;
            }
            continue;
        }
        let proposed = oracle.subtract_bottleneck(&work, &path, predicted);
        let mut expected = work.clone();
        expected.augment(&path, real).expect("real bottleneck is feasible");
        if !same_capacities(&proposed, &expected) {
            break Termination::AugmentMismatch;
        }
        work = expected;
        log.push(SimEvent::Augmented { path, bottleneck: real });
        cnt_b = 1;
    };
    let achieved = work.flow_value();
    SimulationResult { achieved, optimal, success: achieved == optimal, reason, log, final_graph: work }
}

/// One simulation in a dataset evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRecord {
    pub graph_id: usize,
    pub run: usize,
    pub result: SimulationResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetAccuracy {
    /// Fraction of (graph, run) pairs reaching the optimum.
    pub mean: f64,
    /// Standard deviation of the per-run accuracy across runs.
    pub std: f64,
    pub flow_error: f64,
    pub records: Vec<RunRecord>,
}

impl DatasetAccuracy {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "graph_id,run,achieved,optimal,success,reason,steps")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.graph_id,
                r.run,
                r.result.achieved,
                r.result.optimal,
                u8::from(r.result.success),
                r.result.reason,
                r.result.path_queries()
            )?;
        }
        Ok(())
    }
}

/// Simulates every graph `cfg.runs` times. `make_oracle` builds a fresh
/// oracle per simulation; run `r` of graph `i` draws its weights from a
/// generator derived from `(seed, r, i)`.
pub fn accuracy_over_dataset<O, F>(graphs: &[ResidualGraph], mut make_oracle: F, cfg: &SimConfig, seed: u64) -> DatasetAccuracy
where
    O: Oracle,
    F: FnMut() -> O,
{
    assert!(!graphs.is_empty(), "dataset must not be empty");
    let optimal: Vec<u32> = graphs.iter().map(|g| ford_fulkerson_reference(g).0).collect();
    let mut records = Vec::with_capacity(graphs.len() * cfg.runs);
    let mut per_run = Vec::with_capacity(cfg.runs);
    let mut abs_err = 0.0;
    for run in 0..cfg.runs {
        let run_seed = derive_seed(seed, run as u64);
        let mut hits = 0usize;
        for (i, g) in graphs.iter().enumerate() {
            let mut oracle = make_oracle();
            let mut rng = rng_for(run_seed, i as u64);
            let result = simulate(g, optimal[i], &mut oracle, cfg, &mut rng);
            hits += usize::from(result.success);
            abs_err += f64::from(result.optimal.abs_diff(result.achieved));
            records.push(RunRecord { graph_id: i, run, result });
        }
        per_run.push(hits as f64 / graphs.len() as f64);
    }
    let total = records.len() as f64;
    let mean = records.iter().filter(|r| r.result.success).count() as f64 / total;
    let run_mean = per_run.iter().sum::<f64>() / per_run.len() as f64;
    let std = (per_run.iter().map(|a| (a - run_mean).powi(2)).sum::<f64>() / per_run.len() as f64).sqrt();
    DatasetAccuracy { mean, std, flow_error: abs_err / total, records }
}
