use neuralff::gnncore::ProcessorKind;
use neuralff::simulator::TerminationMode;
use neuralff_cli::config::*;

#[test]
fn parses_keys_and_comments() {
    let cfg = ExperimentConfig::parse(
        "# demo\nseed = 7\nprocessor = pna_no_std\nmodes = t=1, bfs\nscales = test_1x\nruns=3\n\nloss.capacity = 0.5\n",
    )
    .unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.train.model.processor, ProcessorKind::PnaNoStd);
    assert!(cfg.train.use_variety);
    assert_eq!(cfg.modes, vec![TerminationMode::Threshold(1), TerminationMode::Bfs]);
    assert_eq!(cfg.scales, vec!["test_1x"]);
    assert_eq!(cfg.runs, 3);
    assert_eq!(cfg.train.loss.capacity, 0.5);
}

#[test]
fn rejects_bad_input() {
    assert!(matches!(ExperimentConfig::parse("nonsense"), Err(ConfigError::Syntax { line: 1, .. })));
    assert!(matches!(ExperimentConfig::parse("colour = red"), Err(ConfigError::UnknownKey { .. })));
    assert!(matches!(ExperimentConfig::parse("runs = many"), Err(ConfigError::BadValue { .. })));
    assert!(matches!(ExperimentConfig::parse("runs = 0"), Err(ConfigError::Invalid(_))));
    assert!(matches!(ExperimentConfig::parse("modes = t=0"), Err(ConfigError::BadValue { .. })));
}

#[test]
fn empty_file_is_default() {
    assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
}
