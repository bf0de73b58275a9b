use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use neuralff::datagen::{build_datasets, default_recipe, derive_seed, sweep_recipe, DataError, Manifest};
use neuralff::flowgraph::ResidualGraph;
use neuralff::gnncore::Model;
use neuralff::simulator::{
    ablate, accuracy_over_dataset, Ablation, ClassicalOracle, DatasetAccuracy, NeuralOracle, SimConfig,
    TerminationMode,
};
use neuralff::tape::ParamStore;
use neuralff::trainer::{evaluate_subroutines, train, Checkpoint, History, TrainData, TrainError};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Recipe};
use crate::plot::{flow_series, render_svg};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Training(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Spec(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Config(e.to_string()),
            TrainError::NonFinite { .. } => CliError::Training(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    let specs = match cfg.recipe {
        Recipe::Default => default_recipe(cfg.seed),
        Recipe::Sweep => sweep_recipe(cfg.seed),
        Recipe::All => {
            let mut s = default_recipe(cfg.seed);
            s.extend(sweep_recipe(cfg.seed));
            s
        }
    };
    Ok(build_datasets(&specs, cfg.seed, out)?)
}

pub fn cmd_train(cfg: &ExperimentConfig, manifest_dir: &Path, out: &Path) -> Result<PathBuf, CliError> {
    let manifest = Manifest::read(manifest_dir)?;
    let data = TrainData::from_manifest(&manifest, manifest_dir)?;
    let mut tc = cfg.train.clone();
    tc.seed = cfg.seed;
    create_dir(out)?;
    let outcome = train(&tc, &data, |r| {
        eprintln!(
            "epoch {:3}  loss {:.4}  val last-step pred acc {:.4}{}  {:.0}s{}",
            r.epoch,
            r.train.total(),
            r.val_last_pred,
            r.val_flow_accuracy.map(|a| format!("  val flow acc {a:.3}")).unwrap_or_default(),
            r.seconds,
            if r.improved { "  *" } else { "" }
        );
    })?;
    let ck_path = out.join("checkpoint.json");
    outcome.checkpoint.save(&ck_path)?;
    let hist_path = out.join("history.csv");
    let mut buf = Vec::new();
    outcome.history.write_csv(&mut buf).expect("writing to memory");
    write_file(&hist_path, &String::from_utf8(buf).expect("ascii csv"))?;
    eprintln!("best epoch {} of {}", outcome.checkpoint.epoch, outcome.epochs_run);
    Ok(ck_path)
}

fn load_model(checkpoint: &Path) -> Result<(Model, ParamStore, String), CliError> {
    let ck = Checkpoint::load(checkpoint).map_err(|e| CliError::Data(e.to_string()))?;
    let (model, store) = ck.restore().map_err(|e| CliError::Data(e.to_string()))?;
    let name = ck.config.model.processor.to_string();
    Ok((model, store, name))
}

fn load_set(manifest: &Manifest, dir: &Path, name: &str) -> Result<Option<Vec<ResidualGraph>>, CliError> {
    match manifest.find(name) {
        Some(entry) => Ok(Some(entry.load(dir)?)),
        None => {
            eprintln!("warning: dataset {name} not in manifest, skipping");
            Ok(None)
        }
    }
}

fn sanitize(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '-' || *c == '_').collect()
}

/// One evaluated grid cell.
#[derive(Debug, Clone)]
pub struct Cell {
    pub model: String,
    pub heuristic: String,
    pub dataset: String,
    pub accuracy: DatasetAccuracy,
}

fn run_cell(
    model: Option<(&Model, &ParamStore)>,
    graphs: &[ResidualGraph],
    sim: &SimConfig,
    seed: u64,
) -> DatasetAccuracy {
    match model {
        Some((m, s)) => accuracy_over_dataset(graphs, || ablate(NeuralOracle::new(m, s), sim.ablation), sim, seed),
        None => accuracy_over_dataset(graphs, || ClassicalOracle, sim, seed),
    }
}

fn sim_config(cfg: &ExperimentConfig, mode: TerminationMode, ablation: Ablation) -> SimConfig {
    let base = match mode {
        TerminationMode::Threshold(t) => SimConfig::threshold(t),
        TerminationMode::Bfs => SimConfig::bfs(ablation),
    };
    SimConfig { runs: cfg.runs, t_b: cfg.t_b, ..base }
}

fn heuristic_label(mode: TerminationMode, ablation: Ablation) -> String {
    match mode {
        TerminationMode::Threshold(_) => mode.to_string(),
        TerminationMode::Bfs => format!("bfs{}", ablation.label()),
    }
}

fn seed_header(master: u64, sim: u64) -> String {
    format!("# seed={master} sim_seed={sim}")
}

fn write_cells(out: &Path, file: &str, header: &str, cells: &[Cell]) -> Result<PathBuf, CliError> {
    let mut text = format!("{header}\nmodel,heuristic,dataset,mean,std,flow_error,runs\n");
    for c in cells {
        text.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{}\n",
            c.model,
            c.heuristic,
            c.dataset,
            c.accuracy.mean,
            c.accuracy.std,
            c.accuracy.flow_error,
            c.accuracy.records.iter().map(|r| r.run).max().map_or(0, |r| r + 1)
        ));
        let log = out.join(format!(
            "runs_{}_{}_{}.csv",
            sanitize(&c.model),
            sanitize(&c.heuristic),
            sanitize(&c.dataset)
        ));
        let mut buf = format!("{header}\n").into_bytes();
        c.accuracy.write_csv(&mut buf).expect("writing to memory");
        write_file(&log, &String::from_utf8(buf).expect("ascii csv"))?;
    }
    let path = out.join(file);
    write_file(&path, &text)?;
    Ok(path)
}

fn report(c: &Cell) {
    eprintln!(
        "{:>10} {:>18} {:>18}  {:6.2}% ± {:5.2}%  flow err {:.3}",
        c.model,
        c.heuristic,
        c.dataset,
        100.0 * c.accuracy.mean,
        100.0 * c.accuracy.std,
        c.accuracy.flow_error
    );
}

/// Maximum-flow accuracy for every (heuristic, scale) cell, plus the
/// classical sanity row.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    manifest_dir: &Path,
    out: &Path,
) -> Result<PathBuf, CliError> {
    let (model, store, name) = load_model(checkpoint)?;
    let manifest = Manifest::read(manifest_dir)?;
    create_dir(out)?;
    let seed = derive_seed(cfg.seed, 500);
    let mut cells = Vec::new();
    let mut sub_rows = String::from("dataset,metric,value\n");
    for scale in &cfg.scales {
        let Some(graphs) = load_set(&manifest, manifest_dir, scale)? else { continue };
        for &mode in &cfg.modes {
            let sim = sim_config(cfg, mode, Ablation::NONE);
            let cell = Cell {
                model: name.clone(),
                heuristic: heuristic_label(mode, sim.ablation),
                dataset: scale.clone(),
                accuracy: run_cell(Some((&model, &store)), &graphs, &sim, seed),
            };
            report(&cell);
            cells.push(cell);
        }
        let sim = sim_config(cfg, TerminationMode::Bfs, Ablation::NONE);
        let cell = Cell {
            model: "classical".into(),
            heuristic: "exact".into(),
            dataset: scale.clone(),
            accuracy: run_cell(None, &graphs, &sim, seed),
        };
        report(&cell);
        cells.push(cell);
        if cfg.subroutines {
            let walks = manifest.find("walks_val").map(|e| e.load(manifest_dir)).transpose()?.unwrap_or_default();
            let m = evaluate_subroutines(&model, &store, &graphs, &walks, seed);
            for (metric, v) in m.as_rows() {
                sub_rows.push_str(&format!("{scale},{metric},{v:.6}\n"));
            }
        }
    }
    if cfg.subroutines {
        write_file(&out.join("subroutines.csv"), &format!("{}\n{sub_rows}", seed_header(cfg.seed, seed)))?;
    }
    write_cells(out, "results_eval.csv", &seed_header(cfg.seed, seed), &cells)
}

/// Reachability-terminated runs with each combination of classical
/// bottleneck and augmentation.
pub fn cmd_ablate(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    manifest_dir: &Path,
    out: &Path,
) -> Result<PathBuf, CliError> {
    let (model, store, name) = load_model(checkpoint)?;
    let manifest = Manifest::read(manifest_dir)?;
    create_dir(out)?;
    let seed = derive_seed(cfg.seed, 600);
    let mut cells = Vec::new();
    let variants = [
        Ablation::NONE,
        Ablation { bottleneck: true, augment: false },
        Ablation { bottleneck: false, augment: true },
        Ablation::ALL,
    ];
    for scale in &cfg.scales {
        let Some(graphs) = load_set(&manifest, manifest_dir, scale)? else { continue };
        for ablation in variants {
            let sim = sim_config(cfg, TerminationMode::Bfs, ablation);
            let cell = Cell {
                model: name.clone(),
                heuristic: heuristic_label(TerminationMode::Bfs, ablation),
                dataset: scale.clone(),
                accuracy: run_cell(Some((&model, &store)), &graphs, &sim, seed),
            };
            report(&cell);
            cells.push(cell);
        }
    }
    write_cells(out, "results_ablate.csv", &seed_header(cfg.seed, seed), &cells)
}

/// Accuracy on the edge-probability sweep datasets.
pub fn cmd_sweep_p(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    manifest_dir: &Path,
    out: &Path,
) -> Result<PathBuf, CliError> {
    let (model, store, name) = load_model(checkpoint)?;
    let manifest = Manifest::read(manifest_dir)?;
    create_dir(out)?;
    let seed = derive_seed(cfg.seed, 700);
    let sets: Vec<String> = if cfg.sweep_sets.is_empty() {
        manifest.entries.iter().map(|e| e.name()).filter(|n| n.starts_with("sweep_")).collect()
    } else {
        cfg.sweep_sets.clone()
    };
    if sets.is_empty() {
        return Err(CliError::Data("manifest has no sweep datasets (generate with recipe = sweep or all)".into()));
    }
    let mut cells = Vec::new();
    for set in &sets {
        let Some(graphs) = load_set(&manifest, manifest_dir, set)? else { continue };
        for &mode in &cfg.modes {
            let sim = sim_config(cfg, mode, Ablation::NONE);
            let cell = Cell {
                model: name.clone(),
                heuristic: heuristic_label(mode, sim.ablation),
                dataset: set.clone(),
                accuracy: run_cell(Some((&model, &store)), &graphs, &sim, seed),
            };
            report(&cell);
            cells.push(cell);
        }
    }
    write_cells(out, "results_sweep.csv", &seed_header(cfg.seed, seed), &cells)
}

/// One SVG per history file; nothing is written if any input is unusable.
pub fn cmd_plot(histories: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if histories.is_empty() {
        return Err(CliError::Config("no history files given".into()));
    }
    let mut rendered = Vec::new();
    for path in histories {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let history = History::parse_csv(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let series = flow_series(&history)
            .ok_or_else(|| CliError::Data(format!("{}: no validation flow rows", path.display())))?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "history".into());
        let parent = path
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let title = if parent.is_empty() { stem.clone() } else { format!("{parent}/{stem}") };
        let file = sanitize(&if parent.is_empty() { stem } else { format!("{parent}_{stem}") });
        rendered.push((out.join(format!("{file}.svg")), render_svg(&title, &series)));
    }
    create_dir(out)?;
    let mut written = Vec::new();
    for (path, svg) in rendered {
        let mut f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        f.write_all(svg.as_bytes()).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
