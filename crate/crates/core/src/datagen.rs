//! Synthetic datasets: bipartite flow networks, random-walk paths for the
//! bottleneck and augmentation heads, and partially pre-matched bipartite
//! graphs for extra reachability supervision.
//!
//! Every graph is a pure function of its dataset seed and its index, so
//! generation order does not matter.

use std::fmt;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::flowgraph::{self, GraphError, Path, ResidualGraph};

pub type GraphRng = ChaCha8Rng;

/// Edge weights (forward and backward) are drawn uniformly from this range.
pub const WEIGHT_RANGE: (u32, u32) = (1, 10);
/// Capacities on random-walk edges.
pub const WALK_CAP_RANGE: (u32, u32) = (1, 10);
pub const WALK_LENGTH: usize = 5;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset spec: {0}")]
    Spec(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("malformed manifest line {line}: {text:?}")]
    Manifest { line: usize, text: String },
}

/// SplitMix64 finalizer; derives independent per-item seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(master: u64, index: u64) -> GraphRng {
    GraphRng::seed_from_u64(derive_seed(master, index))
}

/// Node numbering of a bipartite instance: src = 0, L = 1..=s,
/// R = s+1..=2s, sink = 2s+1.
pub fn gen_bipartite<R: Rng>(subset_size: usize, p: f64, rng: &mut R) -> ResidualGraph {
    assert!(subset_size >= 2, "subset size must be at least 2");
    let s = subset_size;
    let n = 2 * s + 2;
    let (src, sink) = (0, n - 1);
    let mut g = ResidualGraph::new(n, src, sink).expect("valid layout");
    for l in 1..=s {
        let (a, b) = (rng_weight(rng), rng_weight(rng));
        g.add_edge_pair(src, l, 1, 0, a, b).expect("fresh edge");
    }
    for l in 1..=s {
        for r in s + 1..=2 * s {
            if rng.gen_bool(p.clamp(0.0, 1.0)) {
                let (a, b) = (rng_weight(rng), rng_weight(rng));
                g.add_edge_pair(l, r, 1, 0, a, b).expect("fresh edge");
            }
        }
    }
    for r in s + 1..=2 * s {
        let (a, b) = (rng_weight(rng), rng_weight(rng));
        g.add_edge_pair(r, sink, 1, 0, a, b).expect("fresh edge");
    }
    g
}

fn rng_weight<R: Rng>(rng: &mut R) -> u32 {
    rng.gen_range(WEIGHT_RANGE.0..=WEIGHT_RANGE.1)
}

/// Redraws every edge weight; structure and capacities stay as they are.
pub fn assign_random_weights<R: Rng>(g: &mut ResidualGraph, rng: &mut R) {
    for e in 0..g.num_edges() {
        g.set_weight(e, rng_weight(rng)).expect("weight in range");
    }
}

/// A simple path of `length` edges over fresh nodes `0..=length`, with
/// uniform capacities, empty reverse edges and random weights.
pub fn gen_random_walk<R: Rng>(length: usize, rng: &mut R) -> (ResidualGraph, Path) {
    assert!(length >= 1, "walk length must be at least 1");
    let n = (length + 1).max(3);
    let mut g = ResidualGraph::new(n, 0, length).expect("valid walk layout");
    let mut edges = Vec::with_capacity(length);
    for i in 0..length {
        let cap = rng.gen_range(WALK_CAP_RANGE.0..=WALK_CAP_RANGE.1);
        let (a, b) = (rng_weight(rng), rng_weight(rng));
        edges.push(g.add_edge_pair(i, i + 1, cap, 0, a, b).expect("fresh edge"));
    }
    (g, Path { nodes: (0..=length).collect(), edges })
}

/// Recovers the walk of a graph built by [`gen_random_walk`] by following
/// forward edges from src.
pub fn walk_path(g: &ResidualGraph) -> Option<Path> {
    let mut nodes = vec![g.src()];
    let mut edges = Vec::new();
    let mut cur = g.src();
    while cur != g.sink() {
        let e = g.out_edges(cur).iter().copied().find(|&e| g.is_forward(e))?;
        edges.push(e);
        cur = g.edge(e).to;
        nodes.push(cur);
        if edges.len() > g.n() {
            return None;
        }
    }
    Some(Path { nodes, edges })
}

/// [`gen_bipartite`] followed by greedily matching up to
/// `floor(greedy_fraction * subset_size)` random L nodes.
pub fn gen_bfs_variety<R: Rng>(
    subset_size: usize,
    p: f64,
    greedy_fraction: f64,
    rng: &mut R,
) -> ResidualGraph {
    assert!((0.0..=0.4).contains(&greedy_fraction), "greedy fraction must lie in [0, 0.4]");
    let mut g = gen_bipartite(subset_size, p, rng);
    let max_pairs = (greedy_fraction * subset_size as f64).floor() as usize;
    if max_pairs == 0 {
        return g;
    }
    let pairs = rng.gen_range(0..=max_pairs);
    let mut left: Vec<usize> = (1..=subset_size).collect();
    left.shuffle(rng);
    let (src, sink) = (g.src(), g.sink());
    let mut matched = 0;
    for &l in &left {
        if matched == pairs {
            break;
        }
        let mut options: Vec<usize> = g
            .out_edges(l)
            .iter()
            .copied()
            .filter(|&e| g.is_forward(e) && g.edge(e).cap == 1)
            .filter(|&e| {
                let r = g.edge(e).to;
                g.find_edge(r, sink).is_some_and(|re| g.edge(re).cap == 1)
            })
            .collect();
        if options.is_empty() {
            continue;
        }
        options.shuffle(rng);
        let mid = options[0];
        let r = g.edge(mid).to;
        let path = Path {
            nodes: vec![src, l, r, sink],
            edges: vec![g.find_edge(src, l).unwrap(), mid, g.find_edge(r, sink).unwrap()],
        };
        g.augment(&path, 1).expect("greedy path has unit capacity");
        matched += 1;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Val,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
        })
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Role::Train),
            "val" => Ok(Role::Val),
            "test" => Ok(Role::Test),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Bipartite,
    Walk,
    BfsVariety,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Bipartite => "bipartite",
            DatasetKind::Walk => "walk",
            DatasetKind::BfsVariety => "bfs_variety",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bipartite" => Ok(DatasetKind::Bipartite),
            "walk" => Ok(DatasetKind::Walk),
            "bfs_variety" => Ok(DatasetKind::BfsVariety),
            other => Err(format!("unknown dataset kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub name: String,
    pub role: Role,
    pub kind: DatasetKind,
    pub count: usize,
    pub subset_size: usize,
    pub edge_prob: f64,
    pub walk_length: usize,
    pub greedy_fraction: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn bipartite(name: &str, role: Role, count: usize, subset_size: usize, p: f64, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            role,
            kind: DatasetKind::Bipartite,
            count,
            subset_size,
            edge_prob: p,
            walk_length: 0,
            greedy_fraction: 0.0,
            seed,
        }
    }

    pub fn walks(name: &str, role: Role, count: usize, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            role,
            kind: DatasetKind::Walk,
            count,
            subset_size: 0,
            edge_prob: 1.0,
            walk_length: WALK_LENGTH,
            greedy_fraction: 0.0,
            seed,
        }
    }

    pub fn variety(name: &str, count: usize, subset_size: usize, p: f64, fraction: f64, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            role: Role::Train,
            kind: DatasetKind::BfsVariety,
            count,
            subset_size,
            edge_prob: p,
            walk_length: 0,
            greedy_fraction: fraction,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Spec(format!("{}: {m}", self.name)));
        if self.count == 0 {
            return bad("count must be at least 1");
        }
        if !(self.edge_prob > 0.0 && self.edge_prob <= 1.0) {
            return bad("edge probability must lie in (0, 1]");
        }
        if !(0.0..=0.4).contains(&self.greedy_fraction) {
            return bad("greedy fraction must lie in [0, 0.4]");
        }
        if self.greedy_fraction > 0.0 && self.kind != DatasetKind::BfsVariety {
            return bad("greedy fraction only applies to bfs_variety");
        }
        match self.kind {
            DatasetKind::Walk if self.walk_length == 0 => bad("walk length must be at least 1"),
            DatasetKind::Bipartite | DatasetKind::BfsVariety if self.subset_size < 2 => {
                bad("subset size must be at least 2")
            }
            _ => Ok(()),
        }
    }

    /// Graph `index` of this dataset.
    pub fn generate_one(&self, index: usize) -> ResidualGraph {
        let mut rng = rng_for(self.seed, index as u64);
        match self.kind {
            DatasetKind::Bipartite => gen_bipartite(self.subset_size, self.edge_prob, &mut rng),
            DatasetKind::Walk => gen_random_walk(self.walk_length, &mut rng).0,
            DatasetKind::BfsVariety => {
                gen_bfs_variety(self.subset_size, self.edge_prob, self.greedy_fraction, &mut rng)
            }
        }
    }

    pub fn generate(&self) -> Result<Vec<ResidualGraph>, DataError> {
        self.validate()?;
        Ok((0..self.count).map(|i| self.generate_one(i)).collect())
    }

    pub fn file_name(&self) -> String {
        format!("{}.graphs", self.name)
    }
}

/// Main recipe: 300/50 train/val bipartite graphs at subset size 8, 50 test
/// graphs at each of 8, 16, 32 and 64, 200 partially matched graphs, and
/// random walks.
pub fn default_recipe(master_seed: u64) -> Vec<DatasetSpec> {
    let s = |k: u64| derive_seed(master_seed, 1000 + k);
    let p = 0.25;
    let mut specs = vec![
        DatasetSpec::bipartite("train", Role::Train, 300, 8, p, s(0)),
        DatasetSpec::bipartite("val", Role::Val, 50, 8, p, s(1)),
    ];
    for (k, size) in [8usize, 16, 32, 64].into_iter().enumerate() {
        specs.push(DatasetSpec::bipartite(
            &format!("test_{}x", size / 8),
            Role::Test,
            50,
            size,
            p,
            s(2 + k as u64),
        ));
    }
    specs.push(DatasetSpec::variety("bfs_variety", 200, 8, p, 0.4, s(6)));
    specs.push(DatasetSpec::walks("walks_train", Role::Train, 500, s(7)));
    specs.push(DatasetSpec::walks("walks_val", Role::Val, 100, s(8)));
    specs
}

/// Edge-probability sweep: 50 test graphs per scale in {1x, 2x} and
/// p in {1/5, 1/2, 3/4}.
pub fn sweep_recipe(master_seed: u64) -> Vec<DatasetSpec> {
    let mut specs = Vec::new();
    let mut k = 0;
    for size in [8usize, 16] {
        for (label, p) in [("p1_5", 0.2), ("p1_2", 0.5), ("p3_4", 0.75)] {
            specs.push(DatasetSpec::bipartite(
                &format!("sweep_{}x_{label}", size / 8),
                Role::Test,
                50,
                size,
                p,
                derive_seed(master_seed, 2000 + k),
            ));
            k += 1;
        }
    }
    specs
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub role: Role,
    pub kind: DatasetKind,
    pub count: usize,
    pub path: PathBuf,
    pub seed: u64,
}

impl ManifestEntry {
    pub fn name(&self) -> String {
        self.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    }

    pub fn load(&self, base: &FsPath) -> Result<Vec<ResidualGraph>, DataError> {
        let path = base.join(&self.path);
        let file = fs::File::open(&path).map_err(|source| DataError::Io { path: path.clone(), source })?;
        Ok(flowgraph::read_graphs(io::BufReader::new(file))?)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub master_seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub const FILE_NAME: &'static str = "manifest.txt";

    pub fn render(&self) -> String {
        let mut out = format!(
            "# seed {}\n# weights {}..{}\n# role kind count path seed\n",
            self.master_seed, WEIGHT_RANGE.0, WEIGHT_RANGE.1
        );
        for e in &self.entries {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                e.role,
                e.kind,
                e.count,
                e.path.display(),
                e.seed
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut manifest = Manifest::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# seed ") {
                manifest.master_seed = rest.trim().parse().unwrap_or(0);
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || DataError::Manifest { line: i + 1, text: line.to_string() };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad());
            }
            manifest.entries.push(ManifestEntry {
                role: f[0].parse().map_err(|_| bad())?,
                kind: f[1].parse().map_err(|_| bad())?,
                count: f[2].parse().map_err(|_| bad())?,
                path: PathBuf::from(f[3]),
                seed: f[4].parse().map_err(|_| bad())?,
            });
        }
        Ok(manifest)
    }

    pub fn read(dir: &FsPath) -> Result<Self, DataError> {
        let path = dir.join(Self::FILE_NAME);
        let text = fs::read_to_string(&path).map_err(|source| DataError::Io { path, source })?;
        Self::parse(&text)
    }

    pub fn find(&self, name: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.name() == name)
    }
}

/// Generates every dataset into `out_dir` and writes the manifest last, so
/// an I/O failure never leaves a manifest pointing at missing files.
pub fn build_datasets(specs: &[DatasetSpec], master_seed: u64, out_dir: &FsPath) -> Result<Manifest, DataError> {
    for spec in specs {
        spec.validate()?;
    }
    let io_err = |path: &FsPath| {
        let path = path.to_path_buf();
        move |source| DataError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut manifest = Manifest { master_seed, entries: Vec::new() };
    for spec in specs {
        let graphs = spec.generate()?;
        let rel = PathBuf::from(spec.file_name());
        let path = out_dir.join(&rel);
        fs::write(&path, flowgraph::write_graphs(&graphs)).map_err(io_err(&path))?;
        manifest.entries.push(ManifestEntry {
            role: spec.role,
            kind: spec.kind,
            count: spec.count,
            path: rel,
            seed: spec.seed,
        });
    }
    let final_path = out_dir.join(Manifest::FILE_NAME);
    let tmp = out_dir.join(".manifest.tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(manifest.render().as_bytes()).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, &final_path).map_err(io_err(&final_path))?;
    Ok(manifest)
}
