//! Residual flow networks with paired forward/backward edges.
//!
//! Edges live in one flat array. Each edge knows the index of its reverse
//! partner, and the sum of the two capacities is fixed when the pair is
//! created. Augmentation only ever moves capacity from one side of a pair
//! to the other.

use std::fmt::Write as _;
use std::io::{self, BufRead};

use thiserror::Error;

/// Largest capacity or weight a graph may carry. 255 is reserved for
/// infinity by the bit codec.
pub const MAX_SCALAR: u32 = 254;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("source and sink must differ (both {0})")]
    SourceIsSink(usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge {from}->{to} already present")]
    DuplicateEdge { from: usize, to: usize },
    #[error("scalar {0} exceeds the 8-bit ceiling of {MAX_SCALAR}")]
    ScalarTooLarge(u32),
    #[error("weight must be at least 1")]
    ZeroWeight,
    #[error("edge {0} is not part of the graph")]
    MissingEdge(usize),
    #[error("path edge {edge} does not join node {from} to node {to}")]
    BrokenPath { edge: usize, from: usize, to: usize },
    #[error("path is empty")]
    EmptyPath,
    #[error("cannot push {amount} units through a path with bottleneck {bottleneck}")]
    OverAugment { amount: u32, bottleneck: u32 },
    #[error("inconsistent edge pairing at edge {0}")]
    BadPairing(usize),
    #[error("malformed graph record: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub cap: u32,
    pub weight: u32,
    pub pair: usize,
}

/// A residual graph. Edges are added in forward/backward pairs; the first
/// edge of a pair (the one with the smaller index) is the forward edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualGraph {
    n: usize,
    src: usize,
    sink: usize,
    edges: Vec<Edge>,
    pair_sum: Vec<u32>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

/// A simple src→sink path: `nodes[k]` and `nodes[k + 1]` are joined by
/// `edges[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// The same route walked backwards over the paired edges.
    pub fn reversed(&self, g: &ResidualGraph) -> Path {
        Path {
            nodes: self.nodes.iter().rev().copied().collect(),
            edges: self.edges.iter().rev().map(|&e| g.edges[e].pair).collect(),
        }
    }
}

impl ResidualGraph {
    pub fn new(n: usize, src: usize, sink: usize) -> Result<Self, GraphError> {
        if n < 3 {
            return Err(GraphError::TooFewNodes(n));
        }
        for node in [src, sink] {
            if node >= n {
                return Err(GraphError::NodeOutOfRange { node, n });
            }
        }
        if src == sink {
            return Err(GraphError::SourceIsSink(src));
        }
        Ok(Self {
            n,
            src,
            sink,
            edges: Vec::new(),
            pair_sum: Vec::new(),
            out_edges: vec![Vec::new(); n],
            in_edges: vec![Vec::new(); n],
        })
    }

    /// Adds `from→to` with capacity `cap` and its reverse with capacity
    /// `rev_cap`. Returns the index of the forward edge; the backward edge
    /// is the next index.
    pub fn add_edge_pair(
        &mut self,
        from: usize,
        to: usize,
        cap: u32,
        rev_cap: u32,
        weight: u32,
        rev_weight: u32,
    ) -> Result<usize, GraphError> {
        for node in [from, to] {
            if node >= self.n {
                return Err(GraphError::NodeOutOfRange { node, n: self.n });
            }
        }
        if from == to {
            return Err(GraphError::SelfLoop(from));
        }
        if self.find_edge(from, to).is_some() || self.find_edge(to, from).is_some() {
            return Err(GraphError::DuplicateEdge { from, to });
        }
        for x in [cap, rev_cap, weight, rev_weight] {
            if x > MAX_SCALAR {
                return Err(GraphError::ScalarTooLarge(x));
            }
        }
        if cap + rev_cap > MAX_SCALAR {
            return Err(GraphError::ScalarTooLarge(cap + rev_cap));
        }
        if weight == 0 || rev_weight == 0 {
            return Err(GraphError::ZeroWeight);
        }
        let fwd = self.edges.len();
        let bwd = fwd + 1;
        self.edges.push(Edge { from, to, cap, weight, pair: bwd });
        self.edges.push(Edge { from: to, to: from, cap: rev_cap, weight: rev_weight, pair: fwd });
        self.pair_sum.push(cap + rev_cap);
        self.pair_sum.push(cap + rev_cap);
        self.out_edges[from].push(fwd);
        self.in_edges[to].push(fwd);
        self.out_edges[to].push(bwd);
        self.in_edges[from].push(bwd);
        Ok(fwd)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn src(&self) -> usize {
        self.src
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn pair_sum(&self, e: usize) -> u32 {
        self.pair_sum[e]
    }

    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_edges[node]
    }

    pub fn is_forward(&self, e: usize) -> bool {
        e < self.edges[e].pair
    }

    pub fn find_edge(&self, from: usize, to: usize) -> Option<usize> {
        self.out_edges
            .get(from)?
            .iter()
            .copied()
            .find(|&e| self.edges[e].to == to)
    }

    pub fn set_weight(&mut self, e: usize, weight: u32) -> Result<(), GraphError> {
        if weight == 0 {
            return Err(GraphError::ZeroWeight);
        }
        if weight > MAX_SCALAR {
            return Err(GraphError::ScalarTooLarge(weight));
        }
        self.edges.get_mut(e).ok_or(GraphError::MissingEdge(e))?.weight = weight;
        Ok(())
    }

    /// Moves capacity inside a pair: edge `e` gets `cap`, its partner gets
    /// the remainder of the pair sum.
    pub fn set_pair_capacity(&mut self, e: usize, cap: u32) -> Result<(), GraphError> {
        let sum = *self.pair_sum.get(e).ok_or(GraphError::MissingEdge(e))?;
        if cap > sum {
            return Err(GraphError::OverAugment { amount: cap, bottleneck: sum });
        }
        let pair = self.edges[e].pair;
        self.edges[e].cap = cap;
        self.edges[pair].cap = sum - cap;
        Ok(())
    }

    /// Checks that `p` is structurally a path of this graph.
    pub fn check_path(&self, p: &Path) -> Result<(), GraphError> {
        if p.edges.is_empty() {
            return Err(GraphError::EmptyPath);
        }
        if p.nodes.len() != p.edges.len() + 1 {
            return Err(GraphError::Parse("path node/edge count mismatch".into()));
        }
        for (k, &e) in p.edges.iter().enumerate() {
            let edge = self.edges.get(e).ok_or(GraphError::MissingEdge(e))?;
            let (from, to) = (p.nodes[k], p.nodes[k + 1]);
            if edge.from != from || edge.to != to {
                return Err(GraphError::BrokenPath { edge: e, from, to });
            }
        }
        Ok(())
    }

    /// Minimum residual capacity along `p`. Zero means the path is
    /// saturated somewhere.
    pub fn bottleneck(&self, p: &Path) -> Result<u32, GraphError> {
        self.check_path(p)?;
        Ok(p.edges.iter().map(|&e| self.edges[e].cap).min().unwrap_or(0))
    }

    /// Pushes `amount` units along `p`.
    pub fn augment(&mut self, p: &Path, amount: u32) -> Result<(), GraphError> {
        let bottleneck = self.bottleneck(p)?;
        if amount > bottleneck {
            return Err(GraphError::OverAugment { amount, bottleneck });
        }
        for &e in &p.edges {
            let pair = self.edges[e].pair;
            self.edges[e].cap -= amount;
            self.edges[pair].cap += amount;
        }
        Ok(())
    }

    /// Total flow pushed so far: the residual capacity on edges into src.
    pub fn flow_value(&self) -> u32 {
        self.in_edges[self.src].iter().map(|&e| self.edges[e].cap).sum()
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), GraphError> {
        for (i, e) in self.edges.iter().enumerate() {
            let pair = self.edges.get(e.pair).ok_or(GraphError::BadPairing(i))?;
            if pair.pair != i || pair.from != e.to || pair.to != e.from {
                return Err(GraphError::BadPairing(i));
            }
            if e.cap + pair.cap != self.pair_sum[i] {
                return Err(GraphError::BadPairing(i));
            }
            if e.cap > MAX_SCALAR || e.weight > MAX_SCALAR {
                return Err(GraphError::ScalarTooLarge(e.cap.max(e.weight)));
            }
            if e.from == e.to {
                return Err(GraphError::SelfLoop(e.from));
            }
        }
        Ok(())
    }

    /// Writes the text record: a `n src sink` header, then one
    /// `u v cap weight pair` line per edge.
    pub fn write_record(&self, out: &mut String) {
        let _ = writeln!(out, "{} {} {}", self.n, self.src, self.sink);
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {} {} {}", e.from, e.to, e.cap, e.weight, e.pair);
        }
    }

    pub fn to_record(&self) -> String {
        let mut s = String::new();
        self.write_record(&mut s);
        s
    }

    /// Parses one record (header plus edge lines).
    pub fn from_record(text: &str) -> Result<Self, GraphError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| GraphError::Parse("empty record".into()))?;
        let h = parse_fields::<3>(header)?;
        let mut g = ResidualGraph::new(h[0], h[1], h[2])?;
        let raw: Vec<[usize; 5]> = lines.map(parse_fields::<5>).collect::<Result<_, _>>()?;
        g.edges.reserve(raw.len());
        for (i, r) in raw.iter().enumerate() {
            let [from, to, cap, weight, pair] = *r;
            for node in [from, to] {
                if node >= g.n {
                    return Err(GraphError::NodeOutOfRange { node, n: g.n });
                }
            }
            if pair >= raw.len() {
                return Err(GraphError::BadPairing(i));
            }
            if cap > MAX_SCALAR as usize || weight > MAX_SCALAR as usize {
                return Err(GraphError::ScalarTooLarge(cap.max(weight) as u32));
            }
            if weight == 0 {
                return Err(GraphError::ZeroWeight);
            }
            g.edges.push(Edge { from, to, cap: cap as u32, weight: weight as u32, pair });
            g.out_edges[from].push(i);
            g.in_edges[to].push(i);
        }
        g.pair_sum = g
            .edges
            .iter()
            .map(|e| e.cap + g.edges.get(e.pair).map_or(0, |p| p.cap))
            .collect();
        g.validate()?;
        for e in &g.edges {
            if g.out_edges[e.from].iter().filter(|&&o| g.edges[o].to == e.to).count() > 1 {
                return Err(GraphError::DuplicateEdge { from: e.from, to: e.to });
            }
        }
        Ok(g)
    }
}

fn parse_fields<const N: usize>(line: &str) -> Result<[usize; N], GraphError> {
    let mut out = [0usize; N];
    let mut it = line.split_whitespace();
    for slot in out.iter_mut() {
        *slot = it
            .next()
            .ok_or_else(|| GraphError::Parse(format!("expected {N} fields in {line:?}")))?
            .parse()
            .map_err(|_| GraphError::Parse(format!("non-integer field in {line:?}")))?;
    }
    if it.next().is_some() {
        return Err(GraphError::Parse(format!("expected {N} fields in {line:?}")));
    }
    Ok(out)
}

/// Serializes several graphs, one record each, separated by blank lines.
pub fn write_graphs(graphs: &[ResidualGraph]) -> String {
    let mut out = String::new();
    for (i, g) in graphs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        g.write_record(&mut out);
    }
    out
}

/// Reads blank-line separated graph records.
pub fn read_graphs<R: BufRead>(reader: R) -> Result<Vec<ResidualGraph>, GraphError> {
    let mut graphs = Vec::new();
    let mut record = String::new();
    for line in reader.lines() {
        let line = line.map_err(|e: io::Error| GraphError::Parse(e.to_string()))?;
        if line.trim().is_empty() {
            if !record.is_empty() {
                graphs.push(ResidualGraph::from_record(&record)?);
                record.clear();
            }
        } else {
            record.push_str(&line);
            record.push('\n');
        }
    }
    if !record.is_empty() {
        graphs.push(ResidualGraph::from_record(&record)?);
    }
    Ok(graphs)
}

/// Follows predecessors back from sink to src. Returns `None` on a cycle,
/// a self-predecessor before reaching src, a walk longer than n-1 hops, or
/// a claimed edge the graph does not have.
pub fn extract_path(g: &ResidualGraph, pred: &[usize]) -> Option<Path> {
    let n = g.n();
    if pred.len() != n {
        return None;
    }
    let mut visited = vec![false; n];
    let mut nodes = vec![g.sink()];
    let mut edges = Vec::new();
    let mut cur = g.sink();
    visited[cur] = true;
    while cur != g.src() {
        let p = pred[cur];
        if p >= n || p == cur || visited[p] || edges.len() >= n - 1 {
            return None;
        }
        edges.push(g.find_edge(p, cur)?);
        visited[p] = true;
        nodes.push(p);
        cur = p;
    }
    nodes.reverse();
    edges.reverse();
    Some(Path { nodes, edges })
}
