use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{Check, ExperimentConfig, FitReport, Outcome, Runner, ScalingRow, Table, Tally};
use crate::arms::{arm_event, AnnulusSpec, ArmGeometry, ArmPattern, ArmScratch};
use crate::connectivity::{pivotal_by_flipping, pivotal_from_curves, Definition, FourPoint, PreparedQuad, QuadSpec};
use crate::content::{box_count_segments, centered_content, geometric_grid, mean_stderr, minkowski_estimate, neighborhood_area, Shape};
use crate::error::{Error, Result};
use crate::faces::FaceProbe;
use crate::geometry::{BoxSpec, Point};
use crate::interface::trace_interface;
use crate::lattice::{JordanDomainSpec, LatticeDomain};
use crate::metrics::{du_distance, rho_distance, Polyline};
use crate::percolation::{Coloring, RngStream};
use crate::util::UnionFind;

pub(super) fn run(cfg: &ExperimentConfig, runner: &mut Runner) -> Result<Outcome> {
    match cfg.experiment.as_str() {
        "arm-scaling" => arm_scaling(cfg, runner),
        "interface-length" => interface_length(cfg, runner),
        "pivotal-count" => pivotal_count(cfg, runner),
        "box-count" => box_count_scaling(cfg, runner),
        "beta-consistency" => beta_consistency(cfg, runner),
        "face-bound" => face_bound(cfg, runner),
        "equivalence" => equivalence(cfg, runner),
        "metric-selftest" => metric_selftest(cfg, runner),
        "cardy-sanity" => cardy(cfg, runner),
        other => Err(Error::UnknownExperiment(other.to_string())),
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn need<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
    v.clone().ok_or_else(|| Error::ConfigInvalid(format!("knob `{name}` is required")))
}

fn domain_spec(cfg: &ExperimentConfig) -> Result<JordanDomainSpec> {
    need(&cfg.domain, "domain")
}

fn build(spec: &JordanDomainSpec, eta: f64) -> Result<Arc<LatticeDomain>> {
    Ok(Arc::new(LatticeDomain::build(spec, eta)?))
}

fn marks<const N: usize>(cfg: &ExperimentConfig) -> Result<[String; N]> {
    need(&cfg.knobs.marks, "marks")?
        .try_into()
        .map_err(|_| Error::ConfigInvalid(format!("`marks` needs exactly {N} labels")))
}

/// Mean and standard error from integer moments `n, Σx, Σx²`.
fn moments(n: u64, s: u64, ss: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = s as f64 / nf;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let num = (n as u128 * ss as u128).saturating_sub(s as u128 * s as u128) as f64;
    (mean, (num / (nf * (nf - 1.0)) / nf).sqrt())
}

fn binomial(hits: u64, n: u64) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

fn fit_or_check(label: &str, rows: &[ScalingRow], target: Option<f64>, tol: Option<f64>, out: &mut Outcome) {
    match super::fit_exponent(rows) {
        Ok(fit) => out.fits.push(FitReport::new(label, fit, target, tol)),
        Err(e) => out.checks.push(Check::new(format!("{label} fit"), f64::NAN, f64::NAN, false, e.to_string())),
    }
}

fn eta_point(eta: f64) -> String {
    format!("eta={eta}")
}

/// Reads `α̂` for `pattern` at `eta` from an arm-scaling `rows.csv`.
fn alpha_lookup(path: &Path, pattern: &ArmPattern, eta: f64) -> Result<f64> {
    let mut rd = csv::Reader::from_path(path)?;
    let label = pattern.label();
    for rec in rd.records() {
        let rec = rec?;
        let parse = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok());
        if rec.get(2) == Some(label.as_str()) && parse(0).is_some_and(|e| (e - eta).abs() <= 1e-12 * eta) {
            return parse(4).filter(|a| *a > 0.0).ok_or_else(|| Error::NonPositiveEstimate(eta));
        }
    }
    Err(Error::ConfigInvalid(format!("no `{label}` row at eta={eta} in {}", path.display())))
}

fn arm_scaling(cfg: &ExperimentConfig, runner: &mut Runner) -> Result<Outcome> {
    let k = &cfg.knobs;
    let patterns: Vec<ArmPattern> = match &k.patterns {
        Some(p) => p.iter().map(|s| ArmPattern::parse(s)).collect::<Result<_>>()?,
        None => need(&k.k, "k")?.into_iter().map(ArmPattern::preset).collect(),
    };
    let tolerances = k.tolerances.clone().unwrap_or_default();
    let spec = AnnulusSpec::site_to_radius(Point::new(0.0, 0.0), k.radius.unwrap_or(1.0));
    let mut out = Outcome {
        table: Table::new(&["eta_or_r", "k", "pattern", "trials", "p_hat", "stderr", "hits"]),
        ..Default::default()
    };
    let mut series = vec![Vec::new(); patterns.len()];
    for &eta in &cfg.eta {
        let geom = ArmGeometry::new(&spec, eta)?;
        let seed = cfg.namespaced_seed(&eta_point(eta));
        let t = runner.tally(
            &eta_point(eta),
            cfg.trials,
            || (ArmScratch::default(), Vec::new()),
            |(scratch, hits), t| {
                geom.evaluate_sample(RngStream::new(seed, t), &patterns, scratch, hits);
                Ok(Tally::counts(hits.iter().map(|&b| b as u64).collect()))
            },
        )?;
        for (i, p) in patterns.iter().enumerate() {
            let (ph, se) = binomial(t.count(i), cfg.trials);
            out.table.push(vec![
                fmt(eta),
                p.arms().to_string(),
                p.label(),
                cfg.trials.to_string(),
                fmt(ph),
                fmt(se),
                t.count(i).to_string(),
            ]);
            series[i].push(ScalingRow { scale: eta, estimate: ph, stderr: se });
        }
    }
    for (i, p) in patterns.iter().enumerate() {
        let n = p.arms() as f64;
        fit_or_check(&p.label(), &series[i], Some((n * n - 1.0) / 12.0), tolerances.get(i).copied(), &mut out);
    }
    Ok(out)
}

/// Scaling of a per-sample integer observable: one row per mesh, a fit, and
/// optionally a normalized measure mass `c·η²·mean/α̂`.
fn integer_scaling(
    cfg: &ExperimentConfig,
    out: &mut Outcome,
    label: &str,
    mut moments_of: impl FnMut(f64) -> Result<(u64, u64, u64)>,
    normalizer: Option<(ArmPattern, f64)>,
) -> Result<()> {
    let mut rows = Vec::new();
    let mut masses = Vec::new();
    for &eta in &cfg.eta {
        let (n, s, ss) = moments_of(eta)?;
        let (mean, se) = moments(n, s, ss);
        rows.push(ScalingRow { scale: eta, estimate: mean, stderr: se });
        let mut row = vec![fmt(eta), n.to_string(), fmt(mean), fmt(se)];
        match (&normalizer, &cfg.knobs.alpha_from) {
            (Some((pattern, c)), Some(path)) => {
                let alpha = alpha_lookup(path, pattern, eta)?;
                let scale = c * eta * eta / alpha;
                masses.push(ScalingRow { scale: eta, estimate: scale * mean, stderr: scale * se });
                row.extend([fmt(alpha), fmt(scale * mean), fmt(scale * se)]);
            }
            _ => row.extend([String::new(), String::new(), String::new()]),
        }
        out.table.push(row);
    }
    fit_or_check(label, &rows, cfg.knobs.target, cfg.knobs.tolerance, out);
    if masses.len() >= 3 {
        fit_or_check(&format!("{label} normalized mass"), &masses, Some(0.0), None, out);
    }
    Ok(())
}

fn interface_length(cfg: &ExperimentConfig, runner: &mut Runner) -> Result<Outcome> {
    let spec = domain_spec(cfg)?;
    let [a, b] = marks::<2>(cfg)?;
    let mut out = Outcome {
        table: Table::new(&["eta", "trials", "mean_edges", "stderr", "alpha2_hat", "tau_mass", "tau_mass_stderr"]),
        ..Default::default()
    };
    let c_l = cfg.knobs.c_l.unwrap_or(1.0);
    integer_scaling(
        cfg,
        &mut out,
        "edges",
        |eta| {
            let dom = build(&spec, eta)?;
            let seed = cfg.namespaced_seed(&eta_point(eta));
            let t = runner.tally(
                &eta_point(eta),
                cfg.trials,
                || (),
                |_, t| {
                    let c = Coloring::sample(&dom, RngStream::new(seed, t)).with_boundary(&a, &b)?;
                    let len = trace_interface(&c, &a, &b)?.len() as u64;
                    Ok(Tally::counts(vec![1, len, len * len]))
                },
            )?;
            Ok((t.count(0), t.count(1), t.count(2)))
        },
        Some((ArmPattern::preset(2), c_l)),
    )?;
    Ok(out)
}

fn pivotal_count(cfg: &ExperimentConfig, runner: &mut Runner) -> Result<Outcome> {
    let spec = domain_spec(cfg)?;
    let labels = marks::<4>(cfg)?;
    let mut out = Outcome {
        table: Table::new(&["eta", "trials", "mean_pivotal", "stderr", "alpha4_hat", "mu_mass", "mu_mass_stderr"]),
        ..Default::default()
    };
    let c_p = cfg.knobs.c_p.unwrap_or(1.0);
    let mut events = Vec::new();
    integer_scaling(
        cfg,
        &mut out,
        "pivotal",
        |eta| {
            let dom = build(&spec, eta)?;
            let fp = FourPoint::resolve(&dom, labels.each_ref().map(String::as_str))?;
            let seed = cfg.namespaced_seed(&eta_point(eta));
            let t = runner.tally(
                &eta_point(eta),
                cfg.trials,
                || (),
                |_, t| {
                    let c = Coloring::sample(&dom, RngStream::new(seed, t));
                    let event = fp.event(&c, Definition::InterfaceAc)?;
                    let (g1, g2) = fp.interfaces(&c, event)?;
                    let n = pivotal_from_curves(&dom, &g1, &g2).len() as u64;
                    Ok(Tally::counts(vec![1, n, n * n, event as u64]))
                },
            )?;
            events.push(json!({ "eta": eta, "event_rate": t.count(3) as f64 / t.count(0) as f64 }));
            Ok((t.count(0), t.count(1), t.count(2)))
        },
        Some((ArmPattern::preset(4), c_p)),
    )?;
    out.data = json!({ "events": events });
    Ok(out)
}

fn box_count_scaling(cfg: &ExperimentConfig, runner: &mut Runner) -> Result<Outcome> {
    let spec = domain_spec(cfg)?;
    let [a, b] = marks::<2>(cfg)?;
    let eps = need(&cfg.knobs.epsilon, "epsilon")?;
    let region = need(&cfg.knobs.boxspec, "box")?;
    let mut out = Outcome {
        table: Table::new(&["epsilon", "eta", "trials", "mean_count", "stderr"]),
        ..Default::default()
    };
    for &eta in &cfg.eta {
        let dom = build(&spec, eta)?;
        let seed = cfg.namespaced_seed(&eta_point(eta));
        let m = eps.len();
        let t = runner.tally(
            &eta_point(eta),
            cfg.trials,
            || (),
            |_, t| {
                let c = Coloring::sample(&dom, RngStream::new(seed, t)).with_boundary(&a, &b)?;
                let v = trace_interface(&c, &a, &b)?.vertices();
                let mut counts = vec![0; 1 + 2 * m];
                counts[0] = 1;
                for (i, &e) in eps.iter().enumerate() {
                    let y = box_count_segments(v.windows(2).map(|w| (w[0], w[1])), dom.region(), &region, e)?.count as u64;
                    counts[1 + i] = y;
                    counts[1 + m + i] = y * y;
                }
                Ok(Tally::counts(counts))
            },
        )?;
        let mut rows = Vec::new();
        for (i, &e) in eps.iter().enumerate() {
            let (mean, se) = moments(t.count(0), t.count(1 + i), t.count(1 + m + i));
            out.table.push(vec![fmt(e), fmt(eta), t.count(0).to_string(), fmt(mean), fmt(se)]);
            rows.push(ScalingRow { scale: e, estimate: mean, stderr: se });
        }
        let label = if cfg.eta.len() == 1 { "count".to_string() } else { format!("count {}", eta_point(eta)) };
        fit_or_check(&label, &rows, cfg.knobs.target, cfg.knobs.tolerance, &mut out);
    }
    Ok(out)
}

/// Direct 7/4-content of the curve inside `region` over `r ∈ [4η, hi]`.
fn region_content(curve: &crate::DiscreteCurve, region: &BoxSpec, hi: f64) -> Result<f64> {
    let shape = Shape::clipped(curve, &region.rect());
    if shape.is_empty() {
        return Ok(0.0);
    }
    let lo = 4.0 * curve.eta;
    let hi = hi.max(lo);
    Ok(minkowski_estimate(&shape, 1.75, &geometric_grid(lo, hi), Some((lo, hi)))?.plateau_estimate)
}

fn beta_consistency(cfg: &ExperimentConfig, runner: &mut Runner) -> Result<Outcome> {
    let spec = domain_spec(cfg)?;
    let [a, b] = marks::<2>(cfg)?;
    let k = &cfg.knobs;
    let eps = need(&k.epsilon, "epsilon")?;
    let region = need(&k.boxspec, "box")?;
    let ratio = need(&k.mesh_ratio, "mesh_ratio")?;
    let direct_trials = k.direct_trials.unwrap_or(0).min(cfg.trials);
    let sigmas = k.sigmas.unwrap_or(3.0);
    let fine = *cfg.eta.last().expect("validated");
    let m = eps.len();
    let doubled = |e: f64| BoxSpec::new(Point::new(0.0, 0.0), 2.0 * e).rect();

    // One pass at the fine mesh: conditional contents for every ε, Y^ε in the
    // region, and the direct content on the first `direct_trials` samples.
    let dom = build(&spec, fine)?;
    let seed = cfg.namespaced_seed(&eta_point(fine));
    let hi = eps[0] / 4.0;
    let t = runner.tally(
        &eta_point(fine),
        cfg.trials,
        || (),
        |_, t| {
            let c = Coloring::sample(&dom, RngStream::new(seed, t)).with_boundary(&a, &b)?;
            let curve = trace_interface(&c, &a, &b)?;
            let v = curve.vertices();
            let mut tally = Tally { counts: vec![0; 1 + 3 * m], values: vec![Vec::new(); m + 1] };
            tally.counts[0] = 1;
            for (i, &e) in eps.iter().enumerate() {
                let d = doubled(e);
                if curve.segments().any(|(p, q)| d.intersects_segment(p, q)) {
                    tally.counts[1 + i] = 1;
                    tally.values[i].push(centered_content(&curve, e)?);
                }
                let y = box_count_segments(v.windows(2).map(|w| (w[0], w[1])), dom.region(), &region, e)?.count as u64;
                tally.counts[1 + m + i] = y;
                tally.counts[1 + 2 * m + i] = y * y;
            }
            if t < direct_trials {
                tally.values[m].push(region_content(&curve, &region, hi)?);
            }
            Ok(tally)
        },
    )?;
    drop(dom);

    let mut out = Outcome {
        table: Table::new(&["kind", "epsilon", "eta", "trials", "hits", "estimate", "stderr"]),
        ..Default::default()
    };
    let row = |kind: &str, e: f64, eta: f64, trials: u64, hits: u64, est: f64, se: f64| {
        vec![kind.to_string(), fmt(e), fmt(eta), trials.to_string(), hits.to_string(), fmt(est), fmt(se)]
    };
    let mut beta_fine = Vec::new();
    let mut products = Vec::new();
    for (i, &e) in eps.iter().enumerate() {
        let (beta, bse) = mean_stderr(t.channel(i));
        let (y, yse) = moments(t.count(0), t.count(1 + m + i), t.count(1 + 2 * m + i));
        let p = beta * y;
        let pse = p * ((bse / beta).powi(2) + (yse / y).powi(2)).sqrt();
        out.table.push(row("beta", e, fine, cfg.trials, t.count(1 + i), beta, bse));
        out.table.push(row("count", e, fine, cfg.trials, cfg.trials, y, yse));
        out.table.push(row("product", e, fine, cfg.trials, t.count(1 + i), p, pse));
        beta_fine.push((beta, bse));
        products.push((p, pse));
    }
    let (direct, dse) = mean_stderr(t.channel(m));
    out.table.push(row("direct", f64::NAN, fine, direct_trials, direct_trials, direct, dse));

    // β at η = ε/mesh_ratio for the ratio test, reusing the fine pass where the meshes agree.
    let mut beta_ratio = Vec::new();
    for (i, &e) in eps.iter().enumerate() {
        let eta = e / ratio;
        if (eta - fine).abs() <= 1e-12 * fine {
            beta_ratio.push(beta_fine[i]);
            continue;
        }
        let dom = build(&spec, eta)?;
        let seed = cfg.namespaced_seed(&format!("{} epsilon={e}", eta_point(eta)));
        let point = format!("{} epsilon={e}", eta_point(eta));
        let t = runner.tally(
            &point,
            cfg.trials,
            || (),
            |_, t| {
                let c = Coloring::sample(&dom, RngStream::new(seed, t)).with_boundary(&a, &b)?;
                let curve = trace_interface(&c, &a, &b)?;
                let d = doubled(e);
                let mut tally = Tally { counts: vec![1, 0], values: vec![Vec::new()] };
                if curve.segments().any(|(p, q)| d.intersects_segment(p, q)) {
                    tally.counts[1] = 1;
                    tally.values[0].push(centered_content(&curve, e)?);
                }
                Ok(tally)
            },
        )?;
        let (beta, bse) = mean_stderr(t.channel(0));
        out.table.push(row("beta", e, eta, cfg.trials, t.count(1), beta, bse));
        beta_ratio.push((beta, bse));
    }

    let target = 2f64.powf(-1.75);
    for i in 0..m.saturating_sub(1) {
        if (eps[i + 1] * 2.0 - eps[i]).abs() > 1e-12 * eps[i] {
            continue;
        }
        let ((b0, s0), (b1, s1)) = (beta_ratio[i], beta_ratio[i + 1]);
        let r = b1 / b0;
        let se = r * ((s0 / b0).powi(2) + (s1 / b1).powi(2)).sqrt();
        out.checks.push(Check::at_most(
            format!("beta ratio epsilon={}", eps[i + 1]),
            (r - target).abs(),
            sigmas * se,
            format!("ratio {r:.4} ± {se:.4} against {target:.4}"),
        ));
    }
    for i in 0..m.saturating_sub(1) {
        let ((p0, s0), (p1, s1)) = (products[i], products[i + 1]);
        let bound = k.agreement.unwrap_or(0.2) * 0.5 * (p0 + p1) + sigmas * s0.hypot(s1);
        out.checks.push(Check::at_most(
            format!("stabilization epsilon={}", eps[i + 1]),
            (p0 - p1).abs(),
            bound,
            format!("beta*Y {p0:.4} ± {s0:.4} and {p1:.4} ± {s1:.4}"),
        ));
    }
    if direct_trials > 0 {
        for (i, &(p, _)) in products.iter().enumerate() {
            out.checks.push(Check::at_most(
                format!("direct content epsilon={}", eps[i]),
                (p - direct).abs() / direct,
                k.direct_agreement.unwrap_or(0.25),
                format!("beta*Y {p:.4} against direct content {direct:.4} ± {dse:.4}"),
            ));
        }
    }
    Ok(out)
}

fn face_bound(cfg: &ExperimentConfig, runner: &mut Runner) -> Result<Outcome> {
    let spec = domain_spec(cfg)?;
    let [a, b] = marks::<2>(cfg)?;
    let bx = need(&cfg.knobs.boxspec, "box")?;
    let u = need(&cfg.knobs.u, "u")?.polygon();
    let sigmas = cfg.knobs.sigmas.unwrap_or(3.0);
    let mut out = Outcome {
        table: Table::new(&["eta", "trial", "a", "g", "three_arm"]),
        ..Default::default()
    };
    let mut data = Vec::new();
    for &eta in &cfg.eta {
        let dom = build(&spec, eta)?;
        let probe = FaceProbe::new(&dom, bx, u.clone())?;
        let seed = cfg.namespaced_seed(&eta_point(eta));
        let t = runner.tally(&eta_point(eta), cfg.trials, ArmScratch::default, |scratch, t| {
            let c = Coloring::sample(&dom, RngStream::new(seed, t)).with_boundary(&a, &b)?;
            let curve = trace_interface(&c, &a, &b)?;
            let s = probe.sample(&c, &curve, scratch)?;
            let flag = |x: bool| x as u64;
            Ok(Tally {
                counts: vec![flag(s.a && !s.g), flag(s.three_arm), flag(s.a && !s.three_arm && !s.g)],
                values: vec![vec![flag(s.a) as f64], vec![flag(s.g) as f64], vec![flag(s.three_arm) as f64]],
            })
        })?;
        for i in 0..t.channel(0).len() {
            let bit = |c: usize| (t.channel(c)[i] as u8).to_string();
            out.table.push(vec![fmt(eta), i.to_string(), bit(0), bit(1), bit(2)]);
        }
        let (p_bad, s_bad) = binomial(t.count(0), cfg.trials);
        let (p_three, s_three) = binomial(t.count(1), cfg.trials);
        out.checks.push(Check::at_most(
            format!("face bound {}", eta_point(eta)),
            p_bad,
            p_three + sigmas * s_bad.hypot(s_three),
            format!("P[A\\G] {p_bad:.5} ± {s_bad:.5}, P[3-arm] {p_three:.5} ± {s_three:.5}"),
        ));
        out.checks.push(Check::at_most(
            format!("face implication {}", eta_point(eta)),
            t.count(2) as f64,
            0.0,
            "samples with A, no three arms, and not G",
        ));
        data.push(json!({ "eta": eta, "p_a_not_g": p_bad, "p_three_arm": p_three }));
    }
    out.data = json!({ "points": data });
    Ok(out)
}

/// Four alternating arms from every pivotal site out to the largest box
/// around it that stays inside the domain. Returns `(checked, violations)`.
fn pivotal_arm_check(c: &Coloring, sites: &[crate::SiteCoord]) -> Result<(u64, u64)> {
    let dom = c.domain();
    let eta = dom.eta();
    let pattern = ArmPattern::preset(4);
    let (mut checked, mut violations) = (0, 0);
    for s in sites {
        let p = s.position(eta);
        let mut r = dom.region().distance_to_boundary(p) / std::f64::consts::SQRT_2;
        while r >= eta {
            match arm_event(c, &AnnulusSpec::site_to_radius(p, r), &pattern) {
                Ok(hit) => {
                    checked += 1;
                    violations += !hit as u64;
                    break;
                }
                Err(Error::AnnulusOutsideDomain) => r -= 0.5 * eta,
                Err(e) => return Err(e),
            }
        }
    }
    Ok((checked, violations))
}

fn equivalence(cfg: &ExperimentConfig, runner: &mut Runner) -> Result<Outcome> {
    let spec = domain_spec(cfg)?;
    let labels = marks::<4>(cfg)?;
    let labels = labels.each_ref().map(String::as_str);
    let mut out = Outcome {
        table: Table::new(&["check", "eta", "trials", "count", "failures"]),
        ..Default::default()
    };
    for &eta in &cfg.eta {
        let dom = build(&spec, eta)?;
        let fp = FourPoint::resolve(&dom, labels)?;
        let seed = cfg.namespaced_seed(&eta_point(eta));
        let t = runner.tally(&eta_point(eta), cfg.trials, crate::util::StampSet::default, |seen, t| {
            let c = Coloring::sample(&dom, RngStream::new(seed, t));
            let e1 = fp.connected(&c, seen);
            let e2 = fp.event(&c, Definition::InterfaceAc)?;
            let e3 = fp.event(&c, Definition::InterfaceCa)?;
            Ok(Tally::counts(vec![e1 as u64, (e1 != e2 || e1 != e3) as u64]))
        })?;
        out.table.push(vec!["definitions".into(), fmt(eta), cfg.trials.to_string(), t.count(0).to_string(), t.count(1).to_string()]);
        out.checks.push(Check::at_most(
            format!("definitions {}", eta_point(eta)),
            t.count(1) as f64,
            0.0,
            format!("{} samples, event on {}", cfg.trials, t.count(0)),
        ));
    }
    if let (Some(eta), Some(trials)) = (cfg.knobs.pivotal_eta, cfg.knobs.pivotal_trials) {
        let dom = build(&spec, eta)?;
        let fp = FourPoint::resolve(&dom, labels)?;
        let point = format!("pivotal {}", eta_point(eta));
        let seed = cfg.namespaced_seed(&point);
        let t = runner.tally(&point, trials, || (), |_, t| {
            let c = Coloring::sample(&dom, RngStream::new(seed, t));
            let by_interfaces = fp.pivotal(&c)?;
            let by_flipping = pivotal_by_flipping(&c, &fp);
            let (checked, violations) = pivotal_arm_check(&c, &by_interfaces.sites)?;
            Ok(Tally::counts(vec![
                by_interfaces.len() as u64,
                (by_interfaces != by_flipping) as u64,
                checked,
                violations,
                (by_interfaces.len() as u64).saturating_sub(checked),
            ]))
        })?;
        out.table.push(vec!["pivotal-flip".into(), fmt(eta), trials.to_string(), t.count(0).to_string(), t.count(1).to_string()]);
        out.table.push(vec!["pivotal-four-arm".into(), fmt(eta), trials.to_string(), t.count(2).to_string(), t.count(3).to_string()]);
        out.checks.push(Check::at_most(
            "pivotal characterization",
            t.count(1) as f64,
            0.0,
            format!("{trials} samples, {} pivotal sites", t.count(0)),
        ));
        out.checks.push(Check::at_most(
            "pivotal four arms",
            t.count(3) as f64,
            0.0,
            format!("{} sites checked, {} too close to the boundary for an annulus", t.count(2), t.count(4)),
        ));
    }
    Ok(out)
}

fn random_polyline(rng: &mut ChaCha8Rng) -> Result<Polyline> {
    let n = rng.random_range(2..=8);
    Polyline::new((0..n).map(|_| Point::new(rng.random(), rng.random())).collect())
}

fn metric_selftest(cfg: &ExperimentConfig, runner: &mut Runner) -> Result<Outcome> {
    let tol = cfg.knobs.tolerance.unwrap_or(1e-8);
    let seed = cfg.namespaced_seed("triples");
    let t = runner.tally("triples", cfg.trials, || (), |_, t| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t);
        let c = [random_polyline(&mut rng)?, random_polyline(&mut rng)?, random_polyline(&mut rng)?];
        let d = |i: usize, j: usize| du_distance(&c[i], &c[j]);
        let dd = [[0.0, d(0, 1), d(0, 2)], [d(1, 0), 0.0, d(1, 2)], [d(2, 0), d(2, 1), 0.0]];
        let mut sym = 0.0f64;
        let mut excess = f64::NEG_INFINITY;
        for i in 0..3 {
            for j in 0..3 {
                sym = sym.max((dd[i][j] - dd[j][i]).abs());
                for k in 0..3 {
                    if i != j && j != k && i != k {
                        excess = excess.max(dd[i][k] - dd[i][j] - dd[j][k]);
                    }
                }
            }
        }
        Ok(Tally { counts: Vec::new(), values: vec![vec![sym], vec![excess]] })
    })?;
    let mut out = Outcome {
        table: Table::new(&["section", "case", "value", "expected", "error"]),
        ..Default::default()
    };
    let (sym, excess) = (t.channel(0), t.channel(1));
    for i in 0..sym.len() {
        out.table.push(vec!["triple".into(), i.to_string(), fmt(sym[i]), fmt(excess[i]), String::new()]);
    }
    let max = |xs: &[f64]| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.checks.push(Check::at_most("du symmetry", max(sym), tol, format!("{} triples", sym.len())));
    out.checks.push(Check::at_most("du triangle", max(excess), tol, format!("{} triples", sym.len())));

    let mut exact = Vec::new();
    let seg = |a: [f64; 2], b: [f64; 2]| Polyline::new(vec![a.into(), b.into()]);
    let base = Polyline::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.5), Point::new(2.0, 0.0)])?;
    let fine = Polyline::new(vec![
        Point::new(0.0, 0.0),
        Point::new(0.5, 0.25),
        Point::new(1.0, 0.5),
        Point::new(1.25, 0.375),
        Point::new(2.0, 0.0),
    ])?;
    exact.push(("du identical", du_distance(&base, &base), 0.0));
    exact.push(("du subdivided", du_distance(&base, &fine), 0.0));
    exact.push(("du parallel h=0.3", du_distance(&seg([0.0, 0.0], [1.0, 0.0])?, &seg([0.0, 0.3], [1.0, 0.3])?), 0.3));
    let timed = |p: &Polyline, end: f64| {
        let n = p.points().len();
        Polyline::with_times(p.points().to_vec(), (0..n).map(|i| end * i as f64 / (n - 1) as f64).collect())
    };
    let tb = timed(&base, 1.0)?;
    exact.push(("rho identical", rho_distance(&tb, &tb)?, 0.0));
    let still = |end: f64| Polyline::with_times(vec![Point::new(0.3, 0.3); 2], vec![0.0, end]);
    exact.push(("rho constant durations", rho_distance(&still(1.0)?, &still(2.0)?)?, 1.0));
    let v = Point::new(0.3, -0.4);
    exact.push(("rho translated", rho_distance(&tb, &timed(&base.translated(v), 1.0)?)?, v.norm()));
    let mut worst = 0.0f64;
    for (name, value, expected) in exact {
        let err = (value - expected).abs();
        worst = worst.max(err);
        out.table.push(vec!["exact".into(), name.into(), fmt(value), fmt(expected), fmt(err)]);
    }
    out.checks.push(Check::at_most("metric examples", worst, 1e-9, "largest absolute error"));

    let calib = cfg.knobs.agreement.unwrap_or(0.01);
    let grid = geometric_grid(1.0 / 128.0, 0.25);
    let unit = Shape::Segments(vec![(Point::new(0.0, 0.0), Point::new(1.0, 0.0))]);
    let square = Shape::FilledPolygon(BoxSpec::new(Point::new(0.5, 0.5), 0.5).polygon());
    let dot = Shape::Points(vec![Point::new(0.2, 0.7)]);
    let cases: [(&str, &Shape, f64, fn(f64) -> f64); 3] = [
        ("segment", &unit, 1.0, |r| 2.0 + std::f64::consts::PI * r),
        ("square", &square, 2.0, |r| 1.0 + 4.0 * r + std::f64::consts::PI * r * r),
        ("point", &dot, 0.0, |_| std::f64::consts::PI),
    ];
    let mut worst = 0.0f64;
    for (name, shape, d, exact) in cases {
        for &r in &grid {
            let m = r.powf(d - 2.0) * neighborhood_area(shape, r)?;
            let err = (m - exact(r)).abs() / exact(r);
            worst = worst.max(err);
            out.table.push(vec!["minkowski".into(), format!("{name} r={r}"), fmt(m), fmt(exact(r)), fmt(err)]);
        }
    }
    out.checks.push(Check::at_most("minkowski calibration", worst, calib, "largest relative error over the grid"));

    let zigzag: Vec<(Point, Point)> = (0..8)
        .map(|i| {
            let x = i as f64 / 8.0;
            let y = |j: usize| if j % 2 == 0 { 0.0 } else { 0.1 };
            (Point::new(x, y(i)), Point::new(x + 0.125, y(i + 1)))
        })
        .collect();
    let small = Shape::Segments(zigzag.clone());
    let big = Shape::Segments(zigzag.iter().map(|&(p, q)| (p * 2.0, q * 2.0)).collect());
    let g1 = geometric_grid(1.0 / 256.0, 1.0 / 32.0);
    let g2: Vec<f64> = g1.iter().map(|r| 2.0 * r).collect();
    let m1 = minkowski_estimate(&small, 1.0, &g1, None)?.plateau_estimate;
    let m2 = minkowski_estimate(&big, 1.0, &g2, None)?.plateau_estimate;
    let cov = (m2 / (2.0 * m1) - 1.0).abs();
    out.table.push(vec!["covariance".into(), "zigzag s=2".into(), fmt(m2), fmt(2.0 * m1), fmt(cov)]);
    out.checks.push(Check::at_most(
        "scaling covariance",
        cov,
        cfg.knobs.direct_agreement.unwrap_or(0.02),
        "plateau ratio for s=2, d=1",
    ));
    Ok(out)
}

/// White left–right crossing frequency of the lattice-aligned 60°/120°
/// rhombus at mesh `eta`: `(estimate, stderr)`.
pub fn cardy_sanity(eta: f64, trials: u64, master_seed: u64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::ConfigInvalid("trials must be at least 1".into()));
    }
    let dom = build(&JordanDomainSpec::named("rhombus60")?, eta)?;
    let quad = PreparedQuad::new(&dom, &QuadSpec::rhombus60())?;
    let hits: u64 = (0..trials)
        .map(|t| {
            let mut uf = UnionFind::new(0);
            quad.crossing_with(&Coloring::sample(&dom, RngStream::new(master_seed, t)), &mut uf) as u64
        })
        .sum();
    Ok(binomial(hits, trials))
}

fn cardy(cfg: &ExperimentConfig, runner: &mut Runner) -> Result<Outcome> {
    let spec = domain_spec(cfg)?;
    let target = cfg.knobs.target.unwrap_or(0.5);
    let sigmas = cfg.knobs.sigmas.unwrap_or(3.0);
    let mut out = Outcome {
        table: Table::new(&["eta", "trials", "crossings", "p_hat", "stderr"]),
        ..Default::default()
    };
    for &eta in &cfg.eta {
        let dom = build(&spec, eta)?;
        let quad = PreparedQuad::new(&dom, &QuadSpec::rhombus60())?;
        let seed = cfg.namespaced_seed(&eta_point(eta));
        let t = runner.tally(&eta_point(eta), cfg.trials, || UnionFind::new(0), |uf, t| {
            let c = Coloring::sample(&dom, RngStream::new(seed, t));
            Ok(Tally::counts(vec![quad.crossing_with(&c, uf) as u64]))
        })?;
        let (p, se) = binomial(t.count(0), cfg.trials);
        out.table.push(vec![fmt(eta), cfg.trials.to_string(), t.count(0).to_string(), fmt(p), fmt(se)]);
        out.checks.push(Check::at_most(
            format!("crossing {}", eta_point(eta)),
            (p - target).abs(),
            sigmas * se,
            format!("{p:.5} ± {se:.5} against {target}"),
        ));
    }
    Ok(out)
}
