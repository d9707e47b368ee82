use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use percnat::harness::{run_experiment, ExperimentConfig, EXPERIMENTS};

/// Run a percolation experiment and write rows.csv, summary.json and
/// checkpoint.jsonl under <out>/<experiment>/.
#[derive(Parser, Debug)]
#[command(name = "percnat", version)]
struct Args {
    /// One of: arm-scaling, interface-length, pivotal-count, box-count,
    /// beta-consistency, face-bound, equivalence, metric-selftest, cardy-sanity.
    experiment: String,

    /// TOML config; omitted keys keep the experiment's defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Mesh sizes, strictly decreasing.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    eta: Option<Vec<f64>>,

    #[arg(long)]
    trials: Option<u64>,

    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores). Output does not depend on this.
    #[arg(long)]
    threads: Option<usize>,

    #[arg(long)]
    out: Option<PathBuf>,

    /// Discard any existing checkpoint instead of resuming from it.
    #[arg(long)]
    fresh: bool,

    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn config(args: &Args) -> percnat::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::defaults(&args.experiment)?,
    };
    if cfg.experiment != args.experiment {
        return Err(percnat::Error::ConfigInvalid(format!(
            "config is for `{}`, not `{}`",
            cfg.experiment, args.experiment
        )));
    }
    if let Some(eta) = &args.eta {
        cfg.eta = eta.clone();
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, percnat::Error::UnknownExperiment(_)) {
                eprintln!("known experiments: {}", EXPERIMENTS.join(", "));
            }
            return ExitCode::from(2);
        }
    };
    if args.print_config {
        match cfg.to_toml() {
            Ok(s) => print!("{s}"),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
        return ExitCode::SUCCESS;
    }
    if args.fresh {
        let _ = std::fs::remove_file(cfg.output_dir().join("checkpoint.jsonl"));
    }
    match run_experiment(&cfg) {
        Ok(summary) => {
            for f in &summary.fits {
                let verdict = match f.pass {
                    Some(true) => "pass",
                    Some(false) => "FAIL",
                    None => "info",
                };
                let target = f.target.map_or(String::new(), |t| format!(" target {t:.4}"));
                println!("{verdict:4} fit {}: slope {:.4} ± {:.4}{target}", f.label, f.slope, f.slope_stderr);
            }
            for c in &summary.checks {
                let verdict = if c.pass { "pass" } else { "FAIL" };
                println!("{verdict:4} {}: {} ({})", c.name, c.value, c.detail);
            }
            println!("wrote {} in {:.1}s", cfg.output_dir().display(), summary.wall_time_s);
            if summary.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
