//! Runs every experiment at its pre-registered size and prints one PASS/FAIL
//! line per acceptance criterion.
//!
//! `PERCNAT_ACCEPTANCE=smoke` swaps in the seconds-scale configs,
//! `PERCNAT_ACCEPTANCE_RESUME=1` keeps checkpoints from an earlier run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use percnat::harness::EXPERIMENTS;
use percnat::{run_experiment, ExperimentConfig, Summary};

/// Which summary entries decide a criterion.
enum Select {
    /// Every fit that carries a tolerance.
    GradedFits,
    /// Checks whose name starts with one of these.
    Checks(&'static [&'static str]),
}

struct Criterion {
    name: &'static str,
    experiment: &'static str,
    select: Select,
}

const CRITERIA: &[Criterion] = &[
    Criterion { name: "definition equivalence", experiment: "equivalence", select: Select::Checks(&["definitions"]) },
    Criterion {
        name: "pivotal characterization",
        experiment: "equivalence",
        select: Select::Checks(&["pivotal characterization"]),
    },
    Criterion { name: "pivotal implies four arms", experiment: "equivalence", select: Select::Checks(&["pivotal four arms"]) },
    Criterion { name: "arm exponents", experiment: "arm-scaling", select: Select::GradedFits },
    Criterion { name: "interface length", experiment: "interface-length", select: Select::GradedFits },
    Criterion { name: "pivotal count", experiment: "pivotal-count", select: Select::GradedFits },
    Criterion { name: "box count", experiment: "box-count", select: Select::GradedFits },
    Criterion { name: "beta ratio", experiment: "beta-consistency", select: Select::Checks(&["beta ratio"]) },
    Criterion {
        name: "content stabilization",
        experiment: "beta-consistency",
        select: Select::Checks(&["stabilization", "direct content"]),
    },
    Criterion { name: "face bound", experiment: "face-bound", select: Select::Checks(&["face bound", "face implication"]) },
    Criterion {
        name: "minkowski calibration",
        experiment: "metric-selftest",
        select: Select::Checks(&["minkowski calibration", "scaling covariance"]),
    },
    Criterion {
        name: "metric self-tests",
        experiment: "metric-selftest",
        select: Select::Checks(&["du symmetry", "du triangle", "metric examples"]),
    },
    Criterion { name: "cardy sanity", experiment: "cardy-sanity", select: Select::Checks(&["crossing"]) },
];

const ORDER: [&str; 9] = [
    "equivalence",
    "metric-selftest",
    "cardy-sanity",
    "face-bound",
    "arm-scaling",
    "interface-length",
    "pivotal-count",
    "box-count",
    "beta-consistency",
];

fn config(name: &str, smoke: bool, out: &Path) -> ExperimentConfig {
    let mut cfg = if smoke { ExperimentConfig::smoke(name) } else { ExperimentConfig::defaults(name) }.unwrap();
    cfg.out = out.to_path_buf();
    if matches!(name, "interface-length" | "pivotal-count") {
        cfg.knobs.alpha_from = Some(out.join("arm-scaling").join("rows.csv"));
    }
    cfg
}

/// `(passed, detail)` for the selected entries of a summary.
fn judge(summary: &Summary, select: &Select) -> (bool, String) {
    let mut items: Vec<(bool, String)> = Vec::new();
    match select {
        Select::GradedFits => {
            for f in summary.fits.iter().filter(|f| f.tolerance.is_some()) {
                items.push((
                    f.pass == Some(true),
                    format!(
                        "{} slope {:.4} ± {:.4} (target {:.4} ± {})",
                        f.label,
                        f.slope,
                        f.slope_stderr,
                        f.target.unwrap_or(f64::NAN),
                        f.tolerance.unwrap_or(f64::NAN)
                    ),
                ));
            }
            for c in summary.checks.iter().filter(|c| c.name.ends_with(" fit")) {
                items.push((false, format!("{}: {}", c.name, c.detail)));
            }
        }
        Select::Checks(prefixes) => {
            for c in summary.checks.iter().filter(|c| prefixes.iter().any(|p| c.name.starts_with(p))) {
                items.push((c.pass, format!("{}: {:.4e} vs {:.4e} ({})", c.name, c.value, c.bound, c.detail)));
            }
        }
    }
    if items.is_empty() {
        return (false, "no matching results".into());
    }
    let pass = items.iter().all(|(p, _)| *p);
    (pass, items.into_iter().map(|(_, d)| d).collect::<Vec<_>>().join("; "))
}

fn determinism(root: &Path) -> (bool, String) {
    let mut differing = Vec::new();
    for name in EXPERIMENTS {
        let rows = |threads: usize| -> Result<Vec<u8>, String> {
            let mut cfg = ExperimentConfig::smoke(name).map_err(|e| e.to_string())?;
            cfg.out = root.join(format!("threads-{threads}"));
            cfg.threads = threads;
            run_experiment(&cfg).map_err(|e| e.to_string())?;
            fs::read(cfg.output_dir().join("rows.csv")).map_err(|e| e.to_string())
        };
        match (rows(1), rows(8)) {
            (Ok(a), Ok(b)) if a == b => {}
            (Ok(_), Ok(_)) => differing.push(format!("{name} differs")),
            (Err(e), _) | (_, Err(e)) => differing.push(format!("{name}: {e}")),
        }
    }
    if differing.is_empty() {
        (true, format!("{} experiments byte-identical at 1 and 8 threads", EXPERIMENTS.len()))
    } else {
        (false, differing.join("; "))
    }
}

fn main() {
    let smoke = std::env::var("PERCNAT_ACCEPTANCE").is_ok_and(|v| v == "smoke");
    let resume = std::env::var("PERCNAT_ACCEPTANCE_RESUME").is_ok_and(|v| v == "1");
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    if !resume {
        let _ = fs::remove_dir_all(&root);
    }
    let out = root.join(if smoke { "smoke" } else { "full" });

    let mut summaries: BTreeMap<&str, Result<Summary, String>> = BTreeMap::new();
    for name in ORDER {
        let start = Instant::now();
        let result = run_experiment(&config(name, smoke, &out)).map_err(|e| e.to_string());
        eprintln!("ran {name} in {:.1}s", start.elapsed().as_secs_f64());
        summaries.insert(name, result);
    }

    let mut passed = 0;
    for c in CRITERIA {
        let (pass, detail) = match &summaries[c.experiment] {
            Ok(s) => judge(s, &c.select),
            Err(e) => (false, format!("{} failed: {e}", c.experiment)),
        };
        passed += pass as usize;
        println!("{} {}: {detail}", if pass { "PASS" } else { "FAIL" }, c.name);
    }
    let (pass, detail) = determinism(&root.join("determinism"));
    passed += pass as usize;
    println!("{} determinism: {detail}", if pass { "PASS" } else { "FAIL" });
    println!("{passed}/{} criteria passed; results in {}", CRITERIA.len() + 1, out.display());
}
