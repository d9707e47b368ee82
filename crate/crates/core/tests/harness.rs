use std::fs;
use std::path::Path;

use percnat::harness::{cardy_sanity, run_with_budget, EXPERIMENTS};
use percnat::{run_experiment, Error, ExperimentConfig, Summary};

fn smoke(name: &str, out: &Path, threads: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::smoke(name).unwrap();
    cfg.out = out.to_path_buf();
    cfg.threads = threads;
    cfg
}

fn rows(cfg: &ExperimentConfig) -> Vec<u8> {
    fs::read(cfg.output_dir().join("rows.csv")).unwrap()
}

#[test]
fn every_experiment_has_valid_defaults() {
    for name in EXPERIMENTS {
        let cfg = ExperimentConfig::defaults(name).unwrap();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg, "{name}");
        ExperimentConfig::smoke(name).unwrap().validate().unwrap();
    }
}

#[test]
fn unknown_experiment_is_rejected() {
    assert!(matches!(ExperimentConfig::defaults("sle-6"), Err(Error::UnknownExperiment(_))));
    assert!(matches!(
        ExperimentConfig::from_toml("experiment = \"nope\""),
        Err(Error::UnknownExperiment(_))
    ));
}

#[test]
fn toml_overrides_merge_into_defaults() {
    let cfg = ExperimentConfig::from_toml(
        "experiment = \"box-count\"\ntrials = 12\n[knobs]\nepsilon = [0.5, 0.25, 0.125]\n",
    )
    .unwrap();
    let d = ExperimentConfig::defaults("box-count").unwrap();
    assert_eq!(cfg.trials, 12);
    assert_eq!(cfg.knobs.epsilon.as_deref(), Some(&[0.5, 0.25, 0.125][..]));
    assert_eq!(cfg.knobs.target, d.knobs.target);
    assert_eq!(cfg.eta, d.eta);
    assert_eq!(cfg.domain, d.domain);
}

#[test]
fn invalid_configs_are_rejected() {
    for text in [
        "experiment = \"cardy-sanity\"\neta = [0.01, 0.02]",
        "experiment = \"cardy-sanity\"\ntrials = 0",
        "experiment = \"box-count\"\n[knobs]\nepsilon = [0.1, 0.2]",
    ] {
        assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::ConfigInvalid(_))), "{text}");
    }
    assert!(ExperimentConfig::from_toml("experiment = \"cardy-sanity\"\nbogus = 1").is_err());
}

#[test]
fn namespaced_seeds_differ_across_experiments_and_points() {
    let a = ExperimentConfig::defaults("face-bound").unwrap();
    let b = ExperimentConfig::defaults("cardy-sanity").unwrap();
    assert_ne!(a.namespaced_seed("eta=0.03125"), b.namespaced_seed("eta=0.03125"));
    assert_ne!(a.namespaced_seed("eta=0.03125"), a.namespaced_seed("eta=0.015625"));
    assert_eq!(a.namespaced_seed("x"), a.clone().namespaced_seed("x"));
}

#[test]
fn cardy_single_trial_is_a_bernoulli_outcome() {
    let (p, se) = cardy_sanity(1.0 / 8.0, 1, 3).unwrap();
    assert!(p == 0.0 || p == 1.0);
    assert!(se.is_finite());
}

#[test]
fn rows_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    for name in EXPERIMENTS {
        let one = smoke(name, &dir.path().join("t1"), 1);
        let many = smoke(name, &dir.path().join("t8"), 8);
        run_experiment(&one).unwrap();
        run_experiment(&many).unwrap();
        assert_eq!(rows(&one), rows(&many), "{name}");
    }
}

#[test]
fn interrupted_run_resumes_to_the_same_rows() {
    let dir = tempfile::tempdir().unwrap();
    let whole = smoke("face-bound", &dir.path().join("whole"), 2);
    run_experiment(&whole).unwrap();

    let split = smoke("face-bound", &dir.path().join("split"), 2);
    assert!(matches!(run_with_budget(&split, Some(2)), Err(Error::Interrupted(2))));
    assert!(matches!(run_with_budget(&split, Some(1)), Err(Error::Interrupted(1))));
    let summary = run_experiment(&split).unwrap();
    assert_eq!(rows(&whole), rows(&split));
    assert_eq!(Summary::load(&split.output_dir()).unwrap().checks, summary.checks);
}

#[test]
fn checkpoint_from_another_config_is_discarded() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke("cardy-sanity", dir.path(), 1);
    run_experiment(&cfg).unwrap();
    let first = rows(&cfg);
    cfg.seed ^= 0x5eed;
    run_experiment(&cfg).unwrap();
    let second = rows(&cfg);
    let header = fs::read_to_string(cfg.output_dir().join("checkpoint.jsonl")).unwrap();
    assert_eq!(header.lines().count(), 1 + 4);
    run_experiment(&cfg).unwrap();
    assert_eq!(rows(&cfg), second);
    assert_ne!(first, second);
}

#[test]
fn seed_changes_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let a = smoke("equivalence", &dir.path().join("a"), 1);
    let mut b = smoke("equivalence", &dir.path().join("b"), 1);
    b.seed ^= 0xdead_beef;
    run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();
    assert_ne!(rows(&a), rows(&b));
}

#[test]
fn default_equivalence_run_has_no_disagreements() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::defaults("equivalence").unwrap();
    cfg.out = dir.path().to_path_buf();
    let summary = run_experiment(&cfg).unwrap();
    let defs = summary.check("definitions eta=0.0625").unwrap();
    assert_eq!(defs.value, 0.0, "{}", defs.detail);
    assert!(summary.pass);
}

#[test]
fn rhombus_crossing_is_one_half() {
    let (p, se) = cardy_sanity(1.0 / 64.0, 100_000, 20_240_601).unwrap();
    assert!((p - 0.5).abs() <= 3.0 * se, "{p} ± {se}");
}
