//! Time evolution of state vectors.
//!
//! Three integrators step a general [`Hamiltonian`]:
//!
//! * [`Method::Magnus4`], the default, samples `H` at the two Gauss points of
//!   each step and applies two exponentials of fixed combinations of those
//!   samples. It is fourth order and needs no commutators.
//! * [`Method::ExpMidpoint`] applies `exp(-i H(t + h/2) h)` per step (second
//!   order).
//! * [`Method::Rk4`] is the classical Runge-Kutta scheme. The norm is restored
//!   after every step once its drift has been checked.
//!
//! Exponentials act through a truncated Taylor series with the step split so
//! that `||H h|| <= 1`, which keeps the truncation error at rounding level.
//!
//! Time-independent real Hamiltonians can instead be diagonalised once with
//! [`SpectralPropagator`], which propagates to any time exactly.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::model::{FockBasis, OperatorMatrix, StateVector};

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Per-step norm drift above which RK4 aborts.
pub const RK4_DRIFT_LIMIT: f64 = 1e-6;
/// Largest observable change allowed between runs at `dt` and `dt / 2`.
pub const STEP_HALVING_LIMIT: f64 = 1e-4;
/// Undriven default step in ns.
pub const DEFAULT_UNDRIVEN_DT: f64 = 0.5;
/// Largest dimension [`SpectralPropagator`] accepts.
pub const SPECTRAL_MAX_DIM: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exponential of `H` at the step midpoint (second order).
    ExpMidpoint,
    /// Classical Runge-Kutta with per-step renormalization.
    Rk4,
    /// Two-exponential commutator-free Magnus scheme on Gauss points (fourth order).
    #[default]
    Magnus4,
}

/// Integration settings. `None` fields take defaults that depend on whether
/// the Hamiltonian is driven.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Step in ns. Defaults to `T / 64` under drive and 0.5 ns otherwise.
    pub dt: Option<f64>,
    /// Spacing of stored samples in ns. Defaults to `T` under drive and 2 ns otherwise.
    pub sample_interval: Option<f64>,
}

impl IntegratorConfig {
    pub fn with_dt(self, dt: f64) -> Self {
        Self {
            dt: Some(dt),
            ..self
        }
    }

    pub fn with_sample_interval(self, interval: f64) -> Self {
        Self {
            sample_interval: Some(interval),
            ..self
        }
    }

    /// The step to use for a Hamiltonian with the given Floquet period.
    pub fn resolve_dt(&self, period: Option<f64>) -> Result<f64> {
        let dt = match (self.dt, period) {
            (Some(dt), _) => dt,
            (None, Some(t)) => t / 64.0,
            (None, None) => DEFAULT_UNDRIVEN_DT,
        };
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Integrator(format!("step {dt} must be positive")));
        }
        if let Some(t) = period {
            if dt > t / 32.0 * (1.0 + 1e-12) {
                return Err(Error::Integrator(format!(
                    "step {dt} ns exceeds T/32 = {:.4} ns for the driven Hamiltonian",
                    t / 32.0
                )));
            }
        }
        Ok(dt)
    }

    pub fn resolve_sample_interval(&self, period: Option<f64>) -> Result<f64> {
        let s = self.sample_interval.unwrap_or(period.unwrap_or(2.0));
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Integrator(format!(
                "sample interval {s} must be positive"
            )));
        }
        Ok(s)
    }
}

/// States sampled along an evolution.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&StateVector> {
        self.states.last()
    }
}

/// Sample grid `t0, t0 + s, ...` that always ends exactly at `t1`.
pub fn sample_grid(t0: f64, t1: f64, interval: f64) -> Vec<f64> {
    let mut times = vec![t0];
    let n = ((t1 - t0) / interval + 1e-9).floor() as usize;
    for k in 1..=n {
        times.push(t0 + k as f64 * interval);
    }
    let last = *times.last().unwrap();
    if t1 - last > 1e-9 * interval.max(1.0) {
        times.push(t1);
    } else if let Some(l) = times.last_mut() {
        if n > 0 {
            *l = t1;
        }
    }
    times
}

struct Workspace {
    term: Vec<Complex64>,
    tmp: Vec<Complex64>,
    k: [Vec<Complex64>; 4],
}

impl Workspace {
    fn new(dim: usize) -> Self {
        let z = || vec![C0; dim];
        Self {
            term: z(),
            tmp: z(),
            k: [z(), z(), z(), z()],
        }
    }
}

/// `psi <- exp(-i A tau) psi` by a Taylor series, split into substeps with
/// `||A|| h <= 1`; `apply` computes `out = A x`.
fn taylor_action<F>(
    mut apply: F,
    norm: f64,
    tau: f64,
    psi: &mut [Complex64],
    term: &mut [Complex64],
    tmp: &mut [Complex64],
) where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    let substeps = (norm * tau.abs()).ceil().max(1.0) as usize;
    let h = tau / substeps as f64;
    for _ in 0..substeps {
        term.copy_from_slice(psi);
        for k in 1..=60 {
            apply(term, tmp);
            let f = Complex64::new(0.0, -h / k as f64);
            let mut size = 0.0;
            for ((term, tmp), p) in term.iter_mut().zip(tmp.iter()).zip(psi.iter_mut()) {
                *term = tmp * f;
                *p += *term;
                size += term.norm_sqr();
            }
            if size < 1e-34 {
                break;
            }
        }
    }
}

/// `psi <- exp(-i H(t) tau) psi` with `H` frozen at `t`.
fn taylor_step<H: Hamiltonian + ?Sized>(
    ham: &H,
    t: f64,
    tau: f64,
    psi: &mut [Complex64],
    ws: &mut Workspace,
) {
    let Workspace { term, tmp, .. } = ws;
    taylor_action(
        |x, out| ham.apply_at(t, x, out),
        ham.norm_bound(),
        tau,
        psi,
        term,
        tmp,
    );
}

/// One step of the fourth-order commutator-free Magnus scheme:
/// `exp(-i h (a1 H1 + a2 H2)) exp(-i h (a2 H1 + a1 H2))` with `H1`, `H2`
/// at the two Gauss points.
fn magnus4_step<H: Hamiltonian + ?Sized>(
    ham: &H,
    t: f64,
    h: f64,
    psi: &mut [Complex64],
    ws: &mut Workspace,
) {
    let r3 = 3f64.sqrt();
    let (t1, t2) = (t + (0.5 - r3 / 6.0) * h, t + (0.5 + r3 / 6.0) * h);
    let (a1, a2) = ((3.0 - 2.0 * r3) / 12.0, (3.0 + 2.0 * r3) / 12.0);
    let norm = ham.norm_bound() * (a1.abs() + a2.abs());
    let Workspace { term, tmp, k } = ws;
    let scratch = &mut k[0];
    for (w1, w2) in [(a2, a1), (a1, a2)] {
        taylor_action(
            |x, out| ham.apply_mix((t1, w1), (t2, w2), x, out, scratch),
            norm,
            h,
            psi,
            term,
            tmp,
        );
    }
}

fn rk4_step<H: Hamiltonian + ?Sized>(
    ham: &H,
    t: f64,
    h: f64,
    psi: &mut [Complex64],
    ws: &mut Workspace,
) -> Result<()> {
    let mi = Complex64::new(0.0, -1.0);
    let n = psi.len();
    let stages = [(0.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0)];
    for (s, &(c, a)) in stages.iter().enumerate() {
        if s == 0 {
            ws.tmp.copy_from_slice(psi);
        } else {
            for i in 0..n {
                ws.tmp[i] = psi[i] + ws.k[s - 1][i] * (a * h);
            }
        }
        ham.apply_at(t + c * h, &ws.tmp, &mut ws.k[s]);
        ws.k[s].iter_mut().for_each(|v| *v *= mi);
    }
    for i in 0..n {
        psi[i] += (ws.k[0][i] + 2.0 * ws.k[1][i] + 2.0 * ws.k[2][i] + ws.k[3][i]) * (h / 6.0);
    }
    let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > RK4_DRIFT_LIMIT {
        return Err(Error::Integrator(format!(
            "RK4 norm drift {:.3e} in one step",
            (norm - 1.0).abs()
        )));
    }
    psi.iter_mut().for_each(|a| *a /= norm);
    Ok(())
}

fn check_state(state: &StateVector, basis: &Arc<FockBasis>) -> Result<()> {
    if !state.basis().same_space(basis) {
        return Err(Error::BasisMismatch);
    }
    Ok(())
}

/// Evolve through the ascending `times`, starting at `times[0]`, and call
/// `observe` at each of them (including the first). Returns the final state.
pub fn evolve_observed<H, F>(
    state: &StateVector,
    ham: &H,
    times: &[f64],
    cfg: &IntegratorConfig,
    mut observe: F,
) -> Result<StateVector>
where
    H: Hamiltonian + ?Sized,
    F: FnMut(f64, &StateVector) -> Result<()>,
{
    check_state(state, ham.basis())?;
    if times.is_empty() {
        return Ok(state.clone());
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::Integrator(
            "sample times must be non-decreasing".into(),
        ));
    }
    let dt = cfg.resolve_dt(ham.period())?;
    let mut psi = state.clone();
    let mut ws = Workspace::new(psi.amplitudes().len());
    observe(times[0], &psi)?;
    for w in times.windows(2) {
        let span = w[1] - w[0];
        if span > 0.0 {
            let n = (span / dt - 1e-9).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for k in 0..n {
                let t = w[0] + k as f64 * h;
                let amps = psi.amplitudes_mut();
                match cfg.method {
                    Method::ExpMidpoint => taylor_step(ham, t + 0.5 * h, h, amps, &mut ws),
                    Method::Rk4 => rk4_step(ham, t, h, amps, &mut ws)?,
                    Method::Magnus4 => magnus4_step(ham, t, h, amps, &mut ws),
                }
            }
            if psi
                .amplitudes()
                .iter()
                .any(|a| !(a.re.is_finite() && a.im.is_finite()))
            {
                return Err(Error::Integrator(format!(
                    "non-finite amplitude at t = {} ns",
                    w[1]
                )));
            }
        }
        observe(w[1], &psi)?;
    }
    Ok(psi)
}

/// Evolve from `t0` to `t1` and keep the states on the sample grid.
pub fn evolve<H: Hamiltonian + ?Sized>(
    state: &StateVector,
    ham: &H,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if !(t1 >= t0) {
        return Err(Error::Integrator(format!(
            "end time {t1} precedes start time {t0}"
        )));
    }
    let interval = cfg.resolve_sample_interval(ham.period())?;
    let times = sample_grid(t0, t1, interval);
    let mut states = Vec::with_capacity(times.len());
    evolve_observed(state, ham, &times, cfg, |_, s| {
        states.push(s.clone());
        Ok(())
    })?;
    Ok(Trajectory { times, states })
}

/// Final state only.
pub fn propagate<H: Hamiltonian + ?Sized>(
    state: &StateVector,
    ham: &H,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<StateVector> {
    if !(t1 >= t0) {
        return Err(Error::Integrator(format!(
            "end time {t1} precedes start time {t0}"
        )));
    }
    evolve_observed(state, ham, &[t0, t1], cfg, |_, _| Ok(()))
}

/// `|<a|b>|^2`.
pub fn echo_fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

/// Run `run` at the resolved step and at half of it; fail when any of the
/// returned observables moves by more than `limit`. Returns the result of the
/// run at the resolved step and the largest observable change.
pub fn check_step_halving<T, F>(
    cfg: &IntegratorConfig,
    period: Option<f64>,
    limit: f64,
    run: F,
) -> Result<(T, f64)>
where
    F: Fn(&IntegratorConfig) -> Result<(T, Vec<f64>)>,
{
    let dt = cfg.resolve_dt(period)?;
    let (result, coarse) = run(&cfg.with_dt(dt))?;
    let (_, fine) = run(&cfg.with_dt(dt / 2.0))?;
    if coarse.len() != fine.len() {
        return Err(Error::Integrator(
            "step-halving runs returned different shapes".into(),
        ));
    }
    let drift = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if !(drift <= limit) {
        return Err(Error::StepHalving { drift, limit });
    }
    Ok((result, drift))
}

/// Exact propagation under a static real symmetric Hamiltonian via its
/// eigendecomposition.
#[derive(Debug, Clone)]
pub struct SpectralPropagator {
    basis: Arc<FockBasis>,
    energies: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl SpectralPropagator {
    pub fn new(matrix: &OperatorMatrix) -> Result<Self> {
        let n = matrix.dim();
        if n > SPECTRAL_MAX_DIM {
            return Err(Error::Unsupported(format!(
                "dense diagonalisation of dimension {n} (limit {SPECTRAL_MAX_DIM})"
            )));
        }
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (r, c, v) in matrix.triplets() {
            if v.im.abs() > 1e-14 {
                return Err(Error::Unsupported(
                    "spectral propagation needs a real Hamiltonian".into(),
                ));
            }
            m[(r, c)] = v.re;
        }
        let herm = matrix.hermiticity_error();
        if herm > 1e-12 {
            return Err(Error::NotHermitian(herm));
        }
        let eig = SymmetricEigen::new(m);
        Ok(Self {
            basis: matrix.basis().clone(),
            energies: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    /// Eigenvalues in rad/ns, ascending order not guaranteed.
    pub fn energies(&self) -> &DVector<f64> {
        &self.energies
    }

    /// Coefficients of `state` in the eigenbasis.
    pub fn to_eigenbasis(&self, state: &StateVector) -> Result<Vec<Complex64>> {
        check_state(state, &self.basis)?;
        let a = state.amplitudes();
        let n = a.len();
        let v = &self.vectors;
        let mut out = vec![C0; n];
        for (k, o) in out.iter_mut().enumerate() {
            let col = v.column(k);
            let mut acc = C0;
            for i in 0..n {
                acc += a[i] * col[i];
            }
            *o = acc;
        }
        Ok(out)
    }

    /// State with eigenbasis coefficients `c` evolved for time `t`.
    pub fn from_eigenbasis(&self, c: &[Complex64], t: f64) -> StateVector {
        let n = c.len();
        let phased: Vec<Complex64> = c
            .iter()
            .zip(self.energies.iter())
            .map(|(ck, e)| ck * Complex64::from_polar(1.0, -e * t))
            .collect();
        let v = &self.vectors;
        let mut out = vec![C0; n];
        for (k, p) in phased.iter().enumerate() {
            if *p == C0 {
                continue;
            }
            let col = v.column(k);
            for i in 0..n {
                out[i] += p * col[i];
            }
        }
        StateVector::from_amplitudes(self.basis.clone(), out).expect("dimension matches")
    }

    /// `exp(-i H t) state`.
    pub fn propagate(&self, state: &StateVector, t: f64) -> Result<StateVector> {
        let c = self.to_eigenbasis(state)?;
        Ok(self.from_eigenbasis(&c, t))
    }
}
