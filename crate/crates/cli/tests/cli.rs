use std::fs;
use std::path::Path;
use std::process::Command;

use neuralff::datagen::{build_datasets, DatasetSpec, Role};
use neuralff_cli::commands::{cmd_ablate, cmd_eval, cmd_gen, cmd_plot, cmd_train, CliError};
use neuralff_cli::config::{ExperimentConfig, Recipe};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_neuralff"))
}

#[test]
fn gen_default_recipe_counts() {
    let dir = tempfile::tempdir().unwrap();
    let m = cmd_gen(&ExperimentConfig::default(), dir.path()).unwrap();
    let count = |name: &str| m.find(name).unwrap().count;
    assert_eq!((count("train"), count("val")), (300, 50));
    for s in ["test_1x", "test_2x", "test_4x", "test_8x"] {
        assert_eq!(count(s), 50);
    }
}

#[test]
fn gen_sweep_recipe_has_six_test_sets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { recipe: Recipe::Sweep, ..Default::default() };
    let m = cmd_gen(&cfg, dir.path()).unwrap();
    assert_eq!(m.entries.len(), 6);
    assert!(m.entries.iter().all(|e| e.count == 50));
}

#[test]
fn gen_is_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let status = bin().args(["gen", "--seed", "5", "--out"]).arg(d).status().unwrap();
        assert!(status.success());
    }
    let read = |d: &Path| fs::read(d.join("manifest.txt")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    let read_set = |d: &Path| fs::read(d.join("test_2x.graphs")).unwrap();
    assert_eq!(read_set(a.path()), read_set(b.path()));
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "recipe = everything\n").unwrap();
    let status = bin().arg("gen").arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("o")).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = bin().arg("eval").arg("--out").arg(dir.path().join("o")).status().unwrap();
    assert_eq!(status.code(), Some(2), "missing --checkpoint is a config error");
}

#[test]
fn plot_rejects_empty_history_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("history.csv");
    fs::write(&hist, "epoch,task,split,metric,value\n").unwrap();
    let out = dir.path().join("plots");
    let status = bin().arg("plot").arg("--history").arg(&hist).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(4));
    assert!(!out.exists());
    let err = cmd_plot(&[hist], &out).unwrap_err();
    assert!(matches!(err, CliError::Data(_)));
}

#[test]
fn train_eval_ablate_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let specs = vec![
        DatasetSpec::bipartite("train", Role::Train, 3, 3, 0.5, 1),
        DatasetSpec::bipartite("val", Role::Val, 2, 3, 0.5, 2),
        DatasetSpec::bipartite("test_1x", Role::Test, 2, 3, 0.5, 3),
        DatasetSpec::walks("walks_train", Role::Train, 4, 4),
        DatasetSpec::walks("walks_val", Role::Val, 2, 5),
    ];
    build_datasets(&specs, 9, &data).unwrap();
    let cfg = ExperimentConfig::parse(
        "max_epochs = 2\nlatent = 8\nembedding = 4\nattention_heads = 2\nval_flow_graphs = 2\n\
         runs = 2\nscales = test_1x, test_9x\nmodes = t=2, bfs\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    let ck = cmd_train(&cfg, &data, &run).unwrap();
    assert!(ck.exists());
    let history = run.join("history.csv");
    assert!(fs::read_to_string(&history).unwrap().starts_with("epoch,task,split,metric,value\n"));

    let eval_out = dir.path().join("eval");
    let results = cmd_eval(&cfg, &ck, &data, &eval_out).unwrap();
    let text = fs::read_to_string(results).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 3, "two heuristics plus the classical row; test_9x skipped");
    let classical = rows.iter().find(|r| r.starts_with("classical")).unwrap();
    assert!(classical.contains(",1.000000,0.000000,0.000000,2"));
    assert!(eval_out.join("subroutines.csv").exists());
    assert!(eval_out.join("runs_mpnn_t2_test_1x.csv").exists());

    let ablate = cmd_ablate(&cfg, &ck, &data, &dir.path().join("ablate")).unwrap();
    assert_eq!(fs::read_to_string(ablate).unwrap().lines().count(), 2 + 4);

    let plots = cmd_plot(&[history], &dir.path().join("plots")).unwrap();
    assert_eq!(plots.len(), 1);
    assert!(fs::read_to_string(&plots[0]).unwrap().contains("<svg"));
}

#[test]
fn missing_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_train(&ExperimentConfig::default(), &dir.path().join("nope"), dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}
