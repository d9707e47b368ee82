//! Weighted least-squares power-law fits on log–log axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub scale: f64,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub rows: Vec<ScalingRow>,
    pub fit: Fit,
}

impl ScalingSeries {
    pub fn new(rows: Vec<ScalingRow>) -> Result<Self> {
        let fit = fit_exponent(&rows)?;
        Ok(Self { rows, fit })
    }
}

/// Fits `log(estimate) = intercept + slope·log(scale)` with weights
/// `1/(stderr/estimate)²`. When no row carries a usable variance the fit is
/// unweighted; rows with zero variance among weighted ones get the largest
/// finite weight.
pub fn fit_exponent(rows: &[ScalingRow]) -> Result<Fit> {
    if rows.len() < 3 {
        return Err(Error::TooFewPoints(rows.len()));
    }
    for r in rows {
        if !(r.estimate > 0.0) || !r.estimate.is_finite() {
            return Err(Error::NonPositiveEstimate(r.scale));
        }
        if !(r.scale > 0.0) || !r.scale.is_finite() {
            return Err(Error::NonPositiveEstimate(r.scale));
        }
    }
    let rel_var: Vec<f64> = rows.iter().map(|r| (r.stderr / r.estimate).powi(2)).collect();
    let max_w = rel_var
        .iter()
        .filter(|v| v.is_finite() && **v > 0.0)
        .map(|v| 1.0 / v)
        .fold(f64::NAN, f64::max);
    let weights: Vec<f64> = if max_w.is_nan() {
        vec![1.0; rows.len()]
    } else {
        rel_var.iter().map(|&v| if v.is_finite() && v > 0.0 { 1.0 / v } else { max_w }).collect()
    };
    let xs: Vec<f64> = rows.iter().map(|r| r.scale.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.estimate.ln()).collect();
    let sw: f64 = weights.iter().sum();
    let xm = weights.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = weights.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = weights.iter().zip(&xs).map(|(w, x)| w * (x - xm) * (x - xm)).sum();
    let sxy: f64 = weights.iter().zip(xs.iter().zip(&ys)).map(|(w, (x, y))| w * (x - xm) * (y - ym)).sum();
    if !(sxx > 0.0) {
        return Err(Error::ConfigInvalid("scales must not all coincide".into()));
    }
    let slope = sxy / sxx;
    let slope_stderr = if max_w.is_nan() {
        let n = rows.len() as f64;
        let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - ym - slope * (x - xm)).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        (1.0 / sxx).sqrt()
    };
    Ok(Fit { slope, intercept: ym - slope * xm, slope_stderr })
}
