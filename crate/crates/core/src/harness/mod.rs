//! Experiment orchestration: configuration, chunked Monte Carlo driving with
//! checkpoints, and report files.

mod experiments;
pub mod fit;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoxSpec;
use crate::lattice::JordanDomainSpec;

pub use experiments::cardy_sanity;
pub use fit::{fit_exponent, Fit, ScalingRow, ScalingSeries};

pub const EXPERIMENTS: [&str; 9] = [
    "arm-scaling",
    "interface-length",
    "pivotal-count",
    "box-count",
    "beta-consistency",
    "face-bound",
    "equivalence",
    "metric-selftest",
    "cardy-sanity",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<JordanDomainSpec>,
    #[serde(default)]
    pub eta: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    pub out: PathBuf,
    /// Trials per checkpointed chunk.
    pub chunk: u64,
    #[serde(default)]
    pub knobs: Knobs,
}

/// Experiment-specific settings; each experiment reads the ones it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Knobs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patterns: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marks: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    pub boxspec: Option<BoxSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<BoxSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_p: Option<f64>,
    /// An arm-scaling `rows.csv` supplying `α̂₂`, `α̂₄` for the measure normalizations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_from: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pivotal_eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pivotal_trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_agreement: Option<f64>,
}

fn dyadic(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(-k)).collect()
}

impl ExperimentConfig {
    /// The pre-registered configuration of `name`, tolerances included.
    pub fn defaults(name: &str) -> Result<Self> {
        let mut c = ExperimentConfig {
            experiment: name.to_string(),
            domain: None,
            eta: dyadic(5, 9),
            trials: 10_000,
            seed: 20_240_601,
            threads: 0,
            out: PathBuf::from("results"),
            chunk: 10_000,
            knobs: Knobs::default(),
        };
        let k = &mut c.knobs;
        match name {
            "arm-scaling" => {
                c.trials = 100_000;
                k.k = Some(vec![2, 3, 4, 5]);
                k.radius = Some(1.0);
                k.tolerances = Some(vec![0.05, 0.08, 0.12, 0.2]);
            }
            "interface-length" => {
                c.domain = Some(JordanDomainSpec::named("disk")?);
                k.marks = Some(vec!["a".into(), "c".into()]);
                k.c_l = Some(1.0);
                k.target = Some(-1.75);
                k.tolerance = Some(0.10);
            }
            "pivotal-count" => {
                c.domain = Some(JordanDomainSpec::named("disk")?);
                k.marks = Some(["a", "b", "c", "d"].map(String::from).to_vec());
                k.c_p = Some(1.0);
                k.target = Some(-0.75);
                k.tolerance = Some(0.10);
            }
            "box-count" => {
                c.domain = Some(unit_box_spec());
                c.eta = vec![2f64.powi(-10)];
                c.trials = 1_000;
                c.chunk = 250;
                k.marks = Some(vec!["-i".into(), "i".into()]);
                k.epsilon = Some(dyadic(2, 5));
                k.boxspec = Some(BoxSpec::new(crate::Point::new(0.0, 0.0), 0.5));
                k.target = Some(-1.75);
                k.tolerance = Some(0.15);
            }
            "beta-consistency" => {
                c.domain = Some(unit_box_spec());
                c.eta = vec![2f64.powi(-10)];
                c.trials = 1_000;
                c.chunk = 100;
                k.marks = Some(vec!["-i".into(), "i".into()]);
                k.epsilon = Some(dyadic(3, 4));
                k.mesh_ratio = Some(64.0);
                k.boxspec = Some(BoxSpec::new(crate::Point::new(0.0, 0.0), 0.5));
                k.direct_trials = Some(100);
                k.sigmas = Some(3.0);
                k.agreement = Some(0.20);
                k.direct_agreement = Some(0.25);
            }
            "face-bound" => {
                c.domain = Some(JordanDomainSpec::square(BoxSpec::new(crate::Point::new(0.5, 0.5), 0.5)));
                c.eta = dyadic(5, 6);
                k.marks = Some(vec!["d".into(), "b".into()]);
                k.boxspec = Some(BoxSpec::new(crate::Point::new(0.5, 0.5), 1.0 / 16.0));
                k.u = Some(BoxSpec::new(crate::Point::new(0.5, 0.5), 3.0 / 16.0));
                k.sigmas = Some(3.0);
            }
            "equivalence" => {
                c.domain = Some(JordanDomainSpec::named("disk")?);
                c.eta = vec![1.0 / 16.0];
                k.marks = Some(["a", "b", "c", "d"].map(String::from).to_vec());
                k.pivotal_eta = Some(1.0 / 8.0);
                k.pivotal_trials = Some(1_000);
            }
            "metric-selftest" => {
                c.eta = Vec::new();
                c.trials = 1_000;
                c.chunk = 1_000;
                k.tolerance = Some(1e-8);
                k.agreement = Some(0.01);
                k.direct_agreement = Some(0.02);
            }
            "cardy-sanity" => {
                c.domain = Some(JordanDomainSpec::named("rhombus60")?);
                c.eta = vec![2f64.powi(-6)];
                c.trials = 100_000;
                c.chunk = 25_000;
                k.target = Some(0.5);
                k.sigmas = Some(3.0);
            }
            other => return Err(Error::UnknownExperiment(other.to_string())),
        }
        Ok(c)
    }

    /// A seconds-scale version of the defaults for smoke runs and tests.
    pub fn smoke(name: &str) -> Result<Self> {
        let mut c = Self::defaults(name)?;
        let k = &mut c.knobs;
        match name {
            "arm-scaling" => {
                c.eta = dyadic(2, 4);
                c.trials = 200;
                c.chunk = 64;
                k.k = Some(vec![2, 4]);
                k.tolerances = Some(vec![0.05, 0.12]);
            }
            "interface-length" | "pivotal-count" => {
                c.eta = dyadic(2, 4);
                c.trials = 40;
                c.chunk = 16;
            }
            "box-count" => {
                c.eta = vec![1.0 / 64.0];
                c.trials = 8;
                c.chunk = 3;
                k.epsilon = Some(dyadic(2, 4));
            }
            "beta-consistency" => {
                c.eta = vec![1.0 / 256.0];
                c.trials = 6;
                c.chunk = 4;
                k.epsilon = Some(dyadic(2, 3));
                k.mesh_ratio = Some(32.0);
                k.direct_trials = Some(2);
            }
            "face-bound" => {
                c.eta = dyadic(4, 5);
                c.trials = 60;
                c.chunk = 25;
            }
            "equivalence" => {
                c.eta = vec![1.0 / 8.0];
                c.trials = 60;
                c.chunk = 25;
                k.pivotal_trials = Some(20);
            }
            "metric-selftest" => {
                c.trials = 50;
                c.chunk = 16;
            }
            "cardy-sanity" => {
                c.eta = vec![1.0 / 16.0];
                c.trials = 200;
                c.chunk = 64;
            }
            _ => {}
        }
        Ok(c)
    }

    /// Parses a TOML config; keys it omits keep the experiment's defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text)?;
        let name = user
            .get("experiment")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::ConfigInvalid("missing `experiment`".into()))?;
        let defaults = Self::defaults(name)?;
        let mut merged = match toml::Value::try_from(&defaults).map_err(|e| Error::ConfigInvalid(e.to_string()))? {
            toml::Value::Table(t) => t,
            _ => unreachable!("a struct serializes to a table"),
        };
        for (key, value) in user {
            match (merged.get_mut(&key), value) {
                (Some(toml::Value::Table(base)), toml::Value::Table(over)) if key == "knobs" => base.extend(over),
                (_, value) => {
                    merged.insert(key, value);
                }
            }
        }
        let cfg: Self = toml::Value::Table(merged).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(Error::UnknownExperiment(self.experiment.clone()));
        }
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.chunk == 0 {
            return bad("chunk must be at least 1".into());
        }
        if self.eta.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("eta values must be positive".into());
        }
        if self.eta.windows(2).any(|w| w[1] >= w[0]) {
            return bad("eta grid must be strictly decreasing".into());
        }
        if self.experiment != "metric-selftest" && self.eta.is_empty() {
            return bad("eta grid is empty".into());
        }
        if let Some(eps) = &self.knobs.epsilon {
            if eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
                return bad("epsilon grid must be positive and strictly decreasing".into());
            }
        }
        Ok(())
    }

    /// Master seed salted with the experiment name, so experiments never share streams.
    pub fn namespaced_seed(&self, point: &str) -> u64 {
        let mut h = splitmix(self.seed);
        for b in self.experiment.bytes().chain([0]).chain(point.bytes()) {
            h = splitmix(h ^ b as u64);
        }
        h
    }

    pub fn output_dir(&self) -> PathBuf {
        self.out.join(&self.experiment)
    }

    /// Everything that determines the output bytes.
    fn fingerprint(&self) -> Result<String> {
        let mut c = self.clone();
        c.threads = 0;
        c.out = PathBuf::new();
        Ok(serde_json::to_string(&c)?)
    }
}

fn unit_box_spec() -> JordanDomainSpec {
    JordanDomainSpec::square(BoxSpec::new(crate::Point::new(0.0, 0.0), 1.0)).with_marks(&[
        ("-i", crate::Point::new(0.0, -1.0)),
        ("i", crate::Point::new(0.0, 1.0)),
    ])
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-trial or per-chunk results: integer counters that add, and float
/// channels that concatenate in trial order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub counts: Vec<u64>,
    pub values: Vec<Vec<f64>>,
}

impl Tally {
    pub fn counts(counts: Vec<u64>) -> Self {
        Self { counts, values: Vec::new() }
    }

    pub fn merge(&mut self, other: Tally) {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        if self.values.len() < other.values.len() {
            self.values.resize(other.values.len(), Vec::new());
        }
        for (a, b) in self.values.iter_mut().zip(other.values) {
            a.extend(b);
        }
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts.get(i).copied().unwrap_or(0)
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        self.values.get(i).map_or(&[], Vec::as_slice)
    }
}

#[derive(Serialize, Deserialize)]
struct ChunkRecord {
    point: String,
    chunk: u64,
    tally: Tally,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    fingerprint: String,
}

/// Drives trials in chunks on a private thread pool, appending every finished
/// chunk to `checkpoint.jsonl` and skipping chunks already recorded there.
pub struct Runner {
    pool: rayon::ThreadPool,
    chunk: u64,
    done: BTreeMap<(String, u64), Tally>,
    log: File,
    budget: Option<usize>,
    fresh: usize,
}

impl Runner {
    fn open(cfg: &ExperimentConfig, dir: &Path, budget: Option<usize>) -> Result<Self> {
        let path = dir.join("checkpoint.jsonl");
        let fingerprint = cfg.fingerprint()?;
        let mut done = BTreeMap::new();
        if let Ok(f) = File::open(&path) {
            let mut lines = BufReader::new(f).lines();
            let header = lines.next().transpose()?.and_then(|l| serde_json::from_str::<CheckpointHeader>(&l).ok());
            if header.is_some_and(|h| h.fingerprint == fingerprint) {
                for line in lines {
                    match serde_json::from_str::<ChunkRecord>(&line?) {
                        Ok(r) => {
                            done.insert((r.point, r.chunk), r.tally);
                        }
                        Err(_) => break,
                    }
                }
            }
        }
        let mut log = File::create(&path)?;
        writeln!(log, "{}", serde_json::to_string(&CheckpointHeader { fingerprint })?)?;
        for ((point, chunk), tally) in &done {
            writeln!(log, "{}", serde_json::to_string(&ChunkRecord { point: point.clone(), chunk: *chunk, tally: tally.clone() })?)?;
        }
        log.flush()?;
        let log = OpenOptions::new().append(true).open(&path)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        Ok(Self { pool, chunk: cfg.chunk, done, log, budget, fresh: 0 })
    }

    /// Runs `trials` trials of `point` and folds their tallies in trial order.
    pub fn tally<S, I, F>(&mut self, point: &str, trials: u64, init: I, f: F) -> Result<Tally>
    where
        I: Fn() -> S + Sync + Send,
        F: Fn(&mut S, u64) -> Result<Tally> + Sync + Send,
    {
        let mut total = Tally::default();
        for chunk in 0..trials.div_ceil(self.chunk) {
            let key = (point.to_string(), chunk);
            if let Some(t) = self.done.get(&key) {
                total.merge(t.clone());
                continue;
            }
            if self.budget.is_some_and(|b| self.fresh >= b) {
                return Err(Error::Interrupted(self.fresh));
            }
            let range = chunk * self.chunk..((chunk + 1) * self.chunk).min(trials);
            let parts: Vec<Tally> = self
                .pool
                .install(|| range.into_par_iter().map_init(&init, |s, t| f(s, t)).collect::<Result<_>>())?;
            let mut t = Tally::default();
            for p in parts {
                t.merge(p);
            }
            let record = ChunkRecord { point: key.0.clone(), chunk, tally: t };
            writeln!(self.log, "{}", serde_json::to_string(&record)?)?;
            self.log.flush()?;
            total.merge(record.tally.clone());
            self.done.insert(key, record.tally);
            self.fresh += 1;
        }
        Ok(total)
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub label: String,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    /// 95% interval for the slope.
    pub ci: [f64; 2],
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

impl FitReport {
    pub fn new(label: impl Into<String>, fit: Fit, target: Option<f64>, tolerance: Option<f64>) -> Self {
        let pass = match (target, tolerance) {
            (Some(t), Some(tol)) => Some((fit.slope - t).abs() <= tol),
            _ => None,
        };
        Self {
            label: label.into(),
            slope: fit.slope,
            slope_stderr: fit.slope_stderr,
            intercept: fit.intercept,
            ci: [fit.slope - 1.96 * fit.slope_stderr, fit.slope + 1.96 * fit.slope_stderr],
            target,
            tolerance,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, bound: f64, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), value, bound, pass, detail: detail.into() }
    }

    /// Passes when `value ≤ bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64, detail: impl Into<String>) -> Self {
        Self::new(name, value, bound, value <= bound, detail)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// What an experiment hands back before the files are written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub table: Table,
    pub fits: Vec<FitReport>,
    pub checks: Vec<Check>,
    pub data: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub seed: u64,
    pub trials: u64,
    pub eta: Vec<f64>,
    pub wall_time_s: f64,
    pub fits: Vec<FitReport>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub data: serde_json::Value,
}

impl Summary {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join("summary.json"))?)?)
    }

    pub fn fit(&self, label: &str) -> Option<&FitReport> {
        self.fits.iter().find(|f| f.label == label)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Runs the configured experiment and writes `rows.csv`, `summary.json` and
/// `checkpoint.jsonl` under `<out>/<experiment>/`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary> {
    run_with_budget(config, None)
}

/// As [`run_experiment`], but stops with [`Error::Interrupted`] once
/// `max_new_chunks` chunks have been computed in this call.
pub fn run_with_budget(config: &ExperimentConfig, max_new_chunks: Option<usize>) -> Result<Summary> {
    config.validate()?;
    let start = Instant::now();
    let dir = config.output_dir();
    fs::create_dir_all(&dir)?;
    let mut runner = Runner::open(config, &dir, max_new_chunks)?;
    let outcome = experiments::run(config, &mut runner)?;
    outcome.table.write(&dir.join("rows.csv"))?;
    let pass = outcome.fits.iter().all(|f| f.pass != Some(false)) && outcome.checks.iter().all(|c| c.pass);
    let summary = Summary {
        experiment: config.experiment.clone(),
        seed: config.seed,
        trials: config.trials,
        eta: config.eta.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        fits: outcome.fits,
        checks: outcome.checks,
        pass,
        data: outcome.data,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
