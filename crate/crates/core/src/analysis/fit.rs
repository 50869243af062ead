//! Least-squares fitting: damped Gauss-Newton, Gaussian peaks, polynomials and
//! the one-parameter Bessel scale.

use nalgebra::{DMatrix, DVector};

use crate::bessel::bessel_j0;
use crate::error::{Error, Result};

/// Parameters, their covariance and fit diagnostics.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Residual-scaled covariance, `s^2 (J^T J)^-1` with `s^2 = rss / (n - p)`.
    pub covariance: Vec<Vec<f64>>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `|J^T r|` at the solution.
    pub gradient_norm: f64,
}

impl FitResult {
    pub fn std_error(&self, k: usize) -> f64 {
        self.covariance[k][k].max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once the relative cost change of an accepted step drops below this.
    pub cost_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tolerance: 1e-10,
        }
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn covariance(jac: &DMatrix<f64>, rss: f64) -> DMatrix<f64> {
    let (n, p) = jac.shape();
    let jtj = jac.transpose() * jac;
    let s2 = if n > p { rss / (n - p) as f64 } else { 0.0 };
    match jtj.clone().try_inverse() {
        Some(inv) => inv * s2,
        None => jtj
            .pseudo_inverse(1e-14)
            .map(|m| m * s2)
            .unwrap_or_else(|_| DMatrix::zeros(p, p)),
    }
}

fn residuals<F: Fn(f64, &[f64]) -> f64>(
    model: &F,
    x: &[f64],
    y: &[f64],
    p: &[f64],
) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().zip(y).map(|(xi, yi)| model(*xi, p) - yi))
}

/// Central-difference Jacobian with step `1e-6 * max(|p_k|, scale_k)`.
fn jacobian<F: Fn(f64, &[f64]) -> f64>(
    model: &F,
    x: &[f64],
    p: &[f64],
    scale: &[f64],
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(x.len(), p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-6 * p[k].abs().max(scale[k]);
        q[k] = p[k] + h;
        let up: Vec<f64> = x.iter().map(|xi| model(*xi, &q)).collect();
        q[k] = p[k] - h;
        let down: Vec<f64> = x.iter().map(|xi| model(*xi, &q)).collect();
        q[k] = p[k];
        for i in 0..x.len() {
            jac[(i, k)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

/// Damped Gauss-Newton (Levenberg-Marquardt) fit of `model(x, p)` to `y`.
/// `scale` sets the finite-difference floor per parameter.
pub fn levenberg_marquardt<F>(
    model: F,
    x: &[f64],
    y: &[f64],
    p0: &[f64],
    scale: &[f64],
    opts: LmOptions,
) -> Result<FitResult>
where
    F: Fn(f64, &[f64]) -> f64,
{
    if x.len() != y.len() || x.len() < p0.len() || scale.len() != p0.len() {
        return Err(Error::Fit(format!(
            "{} points cannot determine {} parameters",
            x.len(),
            p0.len()
        )));
    }
    let mut p = p0.to_vec();
    let mut r = residuals(&model, x, y, &p);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        if cost < 1e-30 {
            converged = true;
            break;
        }
        let jac = jacobian(&model, x, &p, scale);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..p.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = residuals(&model, x, y, &trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct <= cost {
                let rel = (cost - ct) / cost.max(1e-300);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < opts.cost_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction left: the gradient is at rounding level.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    let jac = jacobian(&model, x, &p, scale);
    let gradient_norm = (jac.transpose() * &r).norm();
    let cov = covariance(&jac, cost);
    Ok(FitResult {
        params: p,
        covariance: to_rows(&cov),
        rss: cost,
        converged,
        iterations,
        gradient_norm,
    })
}

/// `a exp(-(t - mu)^2 / (2 s^2))`.
pub fn gaussian(t: f64, p: &[f64]) -> f64 {
    let z = (t - p[1]) / p[2];
    p[0] * (-0.5 * z * z).exp()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Index of the first local maximum that reaches `floor`.
pub(crate) fn first_local_max(values: &[f64], floor: f64) -> Option<usize> {
    (1..values.len().saturating_sub(1))
        .find(|&i| values[i] >= values[i - 1] && values[i] > values[i + 1] && values[i] >= floor)
}

/// Gaussian fit to the samples up to and including the first local maximum.
///
/// The first maximum must reach a fifth of the global maximum, which skips the
/// small ripples that precede the arrival of a wave packet. Parameters are
/// `[a, mu, s]` with `s > 0`.
pub fn fit_gaussian(times: &[f64], values: &[f64]) -> Result<FitResult> {
    if times.len() != values.len() || times.len() < 4 {
        return Err(Error::Fit("need at least four samples".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return Err(Error::Fit("values must be finite and nonnegative".into()));
    }
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    if !(max > 2.0 * median(values)) || max <= 0.0 {
        return Err(Error::Fit("no discernible peak".into()));
    }
    let k = first_local_max(values, (0.2 * max).max(1e-3))
        .ok_or_else(|| Error::Fit("no local maximum".into()))?;
    if k < 2 {
        return Err(Error::Fit(
            "peak too close to the start of the series".into(),
        ));
    }
    let (t, v) = (&times[..=k], &values[..=k]);
    let w: f64 = v.iter().map(|x| x.max(0.0)).sum();
    let var: f64 = t
        .iter()
        .zip(v)
        .map(|(ti, vi)| vi.max(0.0) * (ti - t[k]).powi(2))
        .sum::<f64>()
        / w;
    let span = t[k] - t[0];
    let s0 = var.sqrt().clamp(span / 20.0, span.max(1e-9));
    let p0 = [v[k], t[k], s0];
    let scale = [v[k].abs().max(1e-6), span.max(1e-6), span.max(1e-6)];
    let mut fit = levenberg_marquardt(gaussian, t, v, &p0, &scale, LmOptions::default())?;
    fit.params[2] = fit.params[2].abs();
    if !fit.converged {
        return Err(Error::Fit(format!(
            "Gaussian fit did not converge in {} iterations",
            fit.iterations
        )));
    }
    Ok(fit)
}

/// Least-squares scale `g` of `g J0(eps / nu)`; closed form.
pub fn bessel_scale_fit(eps: &[f64], geff: &[f64], nu: f64) -> Result<FitResult> {
    if eps.len() != geff.len() || eps.len() < 2 {
        return Err(Error::Fit(
            "need matching eps and g_eff lists with at least two points".into(),
        ));
    }
    let j: Vec<f64> = eps.iter().map(|e| bessel_j0(e / nu)).collect();
    let sjj: f64 = j.iter().map(|x| x * x).sum();
    if j.iter().all(|x| x.abs() < 1e-6) {
        return Err(Error::Fit(
            "degenerate design: J0 vanishes at every amplitude".into(),
        ));
    }
    let g = j.iter().zip(geff).map(|(a, b)| a * b).sum::<f64>() / sjj;
    let rss: f64 = j.iter().zip(geff).map(|(a, b)| (g * a - b).powi(2)).sum();
    let n = eps.len();
    let var = if n > 1 {
        rss / (n - 1) as f64 / sjj
    } else {
        0.0
    };
    Ok(FitResult {
        params: vec![g],
        covariance: vec![vec![var]],
        rss,
        converged: true,
        iterations: 1,
        gradient_norm: j
            .iter()
            .zip(geff)
            .map(|(a, b)| a * (g * a - b))
            .sum::<f64>()
            .abs(),
    })
}

/// Polynomial in the scaled variable `u = (x - x0) / xs`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PolynomialFit {
    pub x0: f64,
    pub xs: f64,
    /// Coefficients of `u^0, u^1, ...` with covariance in `fit`.
    pub fit: FitResult,
}

impl PolynomialFit {
    pub fn degree(&self) -> usize {
        self.fit.params.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.x0) / self.xs;
        self.fit.params.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let u = (x - self.x0) / self.xs;
        let c = &self.fit.params;
        let mut acc = 0.0;
        for k in (1..c.len()).rev() {
            acc = acc * u + k as f64 * c[k];
        }
        acc / self.xs
    }

    /// First `x` in `[lo, hi]` with `p(x) = level`, with its standard error
    /// from the coefficient covariance.
    pub fn crossing(&self, level: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let f = |x: f64| self.eval(x) - level;
        let n = 2000;
        let h = (hi - lo) / n as f64;
        let mut a = lo;
        let mut fa = f(a);
        for k in 1..=n {
            let b = lo + k as f64 * h;
            let fb = f(b);
            if fa == 0.0 || fa.signum() != fb.signum() {
                let (mut l, mut r, fl0) = (a, b, fa);
                for _ in 0..100 {
                    let m = 0.5 * (l + r);
                    if f(m).signum() == fl0.signum() && fl0 != 0.0 {
                        l = m;
                    } else {
                        r = m;
                    }
                }
                let x = if fa == 0.0 { a } else { 0.5 * (l + r) };
                let slope = self.derivative(x);
                let u = (x - self.x0) / self.xs;
                let grad: Vec<f64> = (0..=self.degree())
                    .map(|k| -u.powi(k as i32) / slope)
                    .collect();
                let cov = &self.fit.covariance;
                let mut var = 0.0;
                for i in 0..grad.len() {
                    for j in 0..grad.len() {
                        var += grad[i] * cov[i][j] * grad[j];
                    }
                }
                return Some((x, var.max(0.0).sqrt()));
            }
            a = b;
            fa = fb;
        }
        None
    }
}

/// Ordinary least-squares polynomial of the given degree.
pub fn fit_polynomial(x: &[f64], y: &[f64], degree: usize) -> Result<PolynomialFit> {
    let n = x.len();
    if n != y.len() || n < degree + 1 {
        return Err(Error::Fit(format!(
            "{n} points cannot determine a degree-{degree} polynomial"
        )));
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    let x0 = 0.5 * (lo + hi);
    let xs = (0.5 * (hi - lo)).max(1e-12);
    let design = DMatrix::from_fn(n, degree + 1, |i, k| ((x[i] - x0) / xs).powi(k as i32));
    let rhs = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let r = &design * &coef - &rhs;
    let rss = r.norm_squared();
    let cov = covariance(&design, rss);
    let gradient_norm = (design.transpose() * &r).norm();
    Ok(PolynomialFit {
        x0,
        xs,
        fit: FitResult {
            params: coef.iter().copied().collect(),
            covariance: to_rows(&cov),
            rss,
            converged: true,
            iterations: 1,
            gradient_norm,
        },
    })
}
