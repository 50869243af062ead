//! Arrival-time extraction and light-cone velocity regression.

use nalgebra::{DMatrix, DVector};

use super::fit::{fit_gaussian, fit_polynomial, FitResult};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Samples above this value count as "not yet decayed" when an OTOC decay
/// window is located.
const OTOC_PLATEAU: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum FrontMode {
    /// Gaussian fit up to the first maximum; the front is `mu - s`.
    GaussianWalk,
    /// Polynomial fit over the initial decay; the front is the first crossing
    /// of `threshold`.
    PolynomialOtoc { threshold: f64, degree: usize },
}

impl FrontMode {
    pub fn polynomial_otoc() -> Self {
        FrontMode::PolynomialOtoc {
            threshold: 0.5,
            degree: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FrontPoint {
    pub site: usize,
    /// Front time in ns.
    pub time: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FrontReport {
    pub fronts: Vec<FrontPoint>,
    /// Sites without a usable fit and the reason.
    pub skipped: Vec<(usize, String)>,
}

fn gaussian_front(times: &[f64], trace: &[f64]) -> Result<(f64, f64)> {
    let fit = fit_gaussian(times, trace)?;
    let c = &fit.covariance;
    let var = c[1][1] + c[2][2] - 2.0 * c[1][2];
    Ok((fit.params[1] - fit.params[2], var.max(0.0).sqrt()))
}

fn is_local_min(c: &[f64], i: usize) -> bool {
    i + 1 < c.len() && c[i] <= c[i - 1] && c[i] < c[i + 1]
}

fn polynomial_front(
    times: &[f64],
    trace: &[f64],
    threshold: f64,
    degree: usize,
) -> Result<(f64, f64)> {
    let kc = trace
        .iter()
        .position(|v| *v < threshold)
        .ok_or_else(|| Error::Fit("never crosses the threshold".into()))?;
    if kc == 0 {
        return Err(Error::Fit("starts below the threshold".into()));
    }
    let start = (0..kc)
        .rev()
        .find(|&i| trace[i] >= OTOC_PLATEAU)
        .unwrap_or(0);
    let mut end = (kc.max(1)..trace.len())
        .find(|&i| is_local_min(trace, i))
        .unwrap_or(trace.len() - 1);
    let need = degree + 2;
    if end + 1 - start < need {
        end = (start + need - 1).min(trace.len() - 1);
    }
    if end + 1 - start < need {
        return Err(Error::Fit(
            "decay window too short for the polynomial".into(),
        ));
    }
    let p = fit_polynomial(&times[start..=end], &trace[start..=end], degree)?;
    p.crossing(threshold, times[start], times[end])
        .ok_or_else(|| Error::Fit("fitted polynomial does not cross the threshold".into()))
}

/// Front time for each requested site. Sites whose fit fails are reported in
/// `skipped` rather than aborting the whole extraction.
pub fn front_times(series: &TimeSeries, sites: &[usize], mode: FrontMode) -> FrontReport {
    let mut fronts = Vec::new();
    let mut skipped = Vec::new();
    for &j in sites {
        if j >= series.n_sites() {
            skipped.push((j, "site out of range".to_string()));
            continue;
        }
        let trace = series.site(j);
        let r = match mode {
            FrontMode::GaussianWalk => gaussian_front(&series.times, &trace),
            FrontMode::PolynomialOtoc { threshold, degree } => {
                polynomial_front(&series.times, &trace, threshold, degree)
            }
        };
        match r {
            Ok((time, sigma)) => fronts.push(FrontPoint {
                site: j,
                time,
                sigma,
            }),
            Err(e) => skipped.push((j, e.to_string())),
        }
    }
    FrontReport { fronts, skipped }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct VelocityFit {
    /// Sites per microsecond.
    pub velocity: f64,
    pub sigma: f64,
    /// ns per site.
    pub slope: f64,
    pub intercept: f64,
    /// `[slope, intercept]` with covariance.
    pub fit: FitResult,
}

/// Point weights for [`fit_velocity_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `1 / sigma^2`, falling back to uniform when any sigma is not positive.
    #[default]
    InverseVariance,
    /// Ordinary least squares.
    Uniform,
}

/// Weighted least squares `t = x / v + c` over `(position, time, sigma)`.
///
/// Weights are `1 / sigma^2` when every sigma is positive and finite and
/// uniform otherwise. The covariance is scaled by the reduced chi-square.
pub fn fit_velocity(points: &[(f64, f64, f64)]) -> Result<VelocityFit> {
    fit_velocity_with(points, Weighting::InverseVariance)
}

/// [`fit_velocity`] with an explicit weighting.
pub fn fit_velocity_with(points: &[(f64, f64, f64)], weighting: Weighting) -> Result<VelocityFit> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Fit(format!(
            "need at least three front points, got {n}"
        )));
    }
    let weighted = weighting == Weighting::InverseVariance
        && points.iter().all(|p| p.2.is_finite() && p.2 > 0.0);
    let w: Vec<f64> = points
        .iter()
        .map(|p| if weighted { 1.0 / (p.2 * p.2) } else { 1.0 })
        .collect();
    let x = DMatrix::from_fn(n, 2, |i, k| if k == 0 { points[i].0 } else { 1.0 });
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let wm = DMatrix::from_diagonal(&DVector::from_column_slice(&w));
    let xtwx = x.transpose() * &wm * &x;
    let inv = xtwx
        .try_inverse()
        .ok_or_else(|| Error::Fit("positions are degenerate".into()))?;
    let beta = &inv * x.transpose() * &wm * &y;
    let r = &x * &beta - &y;
    let chi2: f64 = r.iter().zip(&w).map(|(ri, wi)| wi * ri * ri).sum();
    let cov = inv * (chi2 / (n - 2) as f64);
    let (slope, intercept) = (beta[0], beta[1]);
    if slope.abs() < 1e-12 {
        return Err(Error::Fit(
            "front times do not depend on position (infinite velocity)".into(),
        ));
    }
    let s_slope = cov[(0, 0)].max(0.0).sqrt();
    let fit = FitResult {
        params: vec![slope, intercept],
        covariance: vec![
            vec![cov[(0, 0)], cov[(0, 1)]],
            vec![cov[(1, 0)], cov[(1, 1)]],
        ],
        rss: chi2,
        converged: true,
        iterations: 1,
        gradient_norm: (x.transpose() * &wm * &r).norm(),
    };
    Ok(VelocityFit {
        velocity: 1e3 / slope,
        sigma: 1e3 * s_slope / (slope * slope),
        slope,
        intercept,
        fit,
    })
}
