//! Ground-truth algorithms and their step-by-step traces.

use std::fmt::Write as _;

use thiserror::Error;

use crate::flowgraph::{extract_path, Path, ResidualGraph};

/// Distance of an unreached node.
pub const INF: u32 = u32::MAX;

/// Distance value written to trace files for infinity.
pub const TRACE_INF: u32 = 255;

/// Algorithm state at one timestep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlgoState {
    pub dist: Vec<u32>,
    pub pred: Vec<usize>,
    pub reach: Vec<bool>,
}

impl AlgoState {
    fn initial(g: &ResidualGraph) -> Self {
        let n = g.n();
        let mut dist = vec![INF; n];
        dist[g.src()] = 0;
        let mut reach = vec![false; n];
        reach[g.src()] = true;
        Self { dist, pred: (0..n).collect(), reach }
    }
}

/// Per-step record of an algorithm run. `states[0]` is the initial state;
/// `states[t]` and `terminated[t - 1]` describe step `t` for `t` in `1..=T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub states: Vec<AlgoState>,
    pub terminated: Vec<bool>,
}

impl ExecutionTrace {
    /// Number of recorded steps `T`.
    pub fn steps(&self) -> usize {
        self.terminated.len()
    }

    pub fn initial(&self) -> &AlgoState {
        &self.states[0]
    }

    pub fn last(&self) -> &AlgoState {
        self.states.last().expect("trace always holds the initial state")
    }

    /// Extends the trace to `len` steps by repeating the terminal state.
    pub fn padded(&self, len: usize) -> ExecutionTrace {
        let mut out = self.clone();
        while out.steps() < len {
            out.states.push(self.last().clone());
            out.terminated.push(true);
        }
        out
    }

    /// `t node dist pred reach terminated` lines for t in 0..=T, infinity
    /// written as 255. Step 0 carries `terminated = 0`.
    pub fn write_records(&self, out: &mut String) {
        for (t, state) in self.states.iter().enumerate() {
            let term = t > 0 && self.terminated[t - 1];
            for node in 0..state.dist.len() {
                let d = match state.dist[node] {
                    INF => TRACE_INF,
                    d => d.min(TRACE_INF - 1),
                };
                let _ = writeln!(
                    out,
                    "{t} {node} {d} {} {} {}",
                    state.pred[node],
                    u8::from(state.reach[node]),
                    u8::from(term)
                );
            }
        }
    }
}

/// Parallel-round Bellman-Ford over edges with capacity ≥ 1.
///
/// Each round relaxes every usable edge against the previous round's
/// distances. A node's predecessor changes only on a strict improvement,
/// and within a round the first improving edge in edge order wins. The
/// trace ends with the first round that changes nothing, or after n-1
/// rounds.
pub fn bellman_ford_trace(g: &ResidualGraph) -> ExecutionTrace {
    let n = g.n();
    let mut states = vec![AlgoState::initial(g)];
    let mut terminated = Vec::new();
    for _ in 0..n - 1 {
        let prev = states.last().unwrap();
        let mut next = prev.clone();
        let mut changed = false;
        for e in g.edges() {
            if e.cap == 0 || prev.dist[e.from] == INF {
                continue;
            }
            let cand = prev.dist[e.from] + e.weight;
            if cand < next.dist[e.to] {
                next.dist[e.to] = cand;
                next.pred[e.to] = e.from;
                next.reach[e.to] = true;
                changed = true;
            }
        }
        states.push(next);
        terminated.push(!changed);
        if !changed {
            break;
        }
    }
    *terminated.last_mut().unwrap() = true;
    ExecutionTrace { states, terminated }
}

/// Parallel BFS over edges with capacity ≥ 1. `dist` holds hop counts and
/// `pred` the first discovering neighbour in edge order.
pub fn bfs_trace(g: &ResidualGraph) -> ExecutionTrace {
    let n = g.n();
    let mut states = vec![AlgoState::initial(g)];
    let mut terminated = Vec::new();
    for step in 1..n {
        let prev = states.last().unwrap();
        let mut next = prev.clone();
        let mut changed = false;
        for e in g.edges() {
            if e.cap >= 1 && prev.reach[e.from] && !next.reach[e.to] {
                next.reach[e.to] = true;
                next.dist[e.to] = step as u32;
                next.pred[e.to] = e.from;
                changed = true;
            }
        }
        states.push(next);
        terminated.push(!changed);
        if !changed {
            break;
        }
    }
    *terminated.last_mut().unwrap() = true;
    ExecutionTrace { states, terminated }
}

/// One augmentation of the reference algorithm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentStep {
    pub path: Path,
    pub bottleneck: u32,
}

/// Ford-Fulkerson with minimum-weight augmenting paths. Returns the final
/// flow and the augmentation log; `g` is left untouched.
pub fn ford_fulkerson_reference(g: &ResidualGraph) -> (u32, Vec<AugmentStep>) {
    let (flow, steps, _) = ford_fulkerson_states(g);
    (flow, steps)
}

/// Like [`ford_fulkerson_reference`], additionally returning every residual
/// graph the algorithm looked at (the input, each intermediate graph, and
/// the final graph with no augmenting path).
pub fn ford_fulkerson_states(g: &ResidualGraph) -> (u32, Vec<AugmentStep>, Vec<ResidualGraph>) {
    let mut work = g.clone();
    let mut steps = Vec::new();
    let mut states = vec![work.clone()];
    loop {
        let trace = bellman_ford_trace(&work);
        let Some(path) = extract_path(&work, &trace.last().pred) else {
            break;
        };
        let bottleneck = work.bottleneck(&path).expect("extracted path is structural");
        debug_assert!(bottleneck >= 1);
        work.augment(&path, bottleneck).expect("bottleneck augmentation is valid");
        steps.push(AugmentStep { path, bottleneck });
        states.push(work.clone());
    }
    (work.flow_value(), steps, states)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatchingError {
    #[error("edge {0} does not fit the src→L→R→sink layout")]
    NotBipartite(usize),
    #[error("edge {0} is not a unit-capacity pair")]
    NonUnitCapacity(usize),
}

/// Maximum matching size of a bipartite instance, computed with Kuhn's
/// augmenting-path matching directly on the L–R edges. The layout is read
/// from the forward edges: L = heads of src's edges, R = tails of sink's.
pub fn max_matching_oracle(g: &ResidualGraph) -> Result<usize, MatchingError> {
    let n = g.n();
    let (src, sink) = (g.src(), g.sink());
    let mut in_left = vec![false; n];
    let mut in_right = vec![false; n];
    for (i, e) in g.edges().iter().enumerate() {
        if !g.is_forward(i) {
            continue;
        }
        if g.pair_sum(i) != 1 {
            return Err(MatchingError::NonUnitCapacity(i));
        }
        if e.from == src {
            in_left[e.to] = true;
        }
        if e.to == sink {
            in_right[e.from] = true;
        }
    }
    let mut adj = vec![Vec::new(); n];
    for (i, e) in g.edges().iter().enumerate() {
        if !g.is_forward(i) || e.from == src || e.to == sink {
            continue;
        }
        if !in_left[e.from] || !in_right[e.to] || e.to == src || e.from == sink {
            return Err(MatchingError::NotBipartite(i));
        }
        adj[e.from].push(e.to);
    }
    if (0..n).any(|v| in_left[v] && in_right[v]) {
        let bad = g.edges().iter().position(|e| e.from == src).unwrap_or(0);
        return Err(MatchingError::NotBipartite(bad));
    }

    fn try_kuhn(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].map_or(true, |w| try_kuhn(w, adj, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }

    let mut owner = vec![None; n];
    let mut size = 0;
    for u in (0..n).filter(|&u| in_left[u]) {
        let mut seen = vec![false; n];
        if try_kuhn(u, &adj, &mut seen, &mut owner) {
            size += 1;
        }
    }
    Ok(size)
}
