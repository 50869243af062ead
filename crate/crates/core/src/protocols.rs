//! Experiment sequences: Rabi calibration, quantum walks, reversed evolution,
//! OTOCs, SSH quenches and generic gate schedules.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::dominant_frequency;
use crate::bessel::bessel_j0;
use crate::error::{Error, Result};
use crate::fermion::{zz_otoc, FreeFermionChain};
use crate::hamiltonian::{
    build_effective_hamiltonian, build_lab_hamiltonian, build_ssh_hamiltonian,
    EffectiveHamiltonian, EffectiveOptions, Hamiltonian, LabHamiltonian,
};
use crate::model::{
    build_basis, embed_local, plus_product_state, product_state, site_operator, DeviceSpec,
    DrivePattern, FockBasis, GateKind, OperatorMatrix, Schedule, SiteOpKind, StateVector,
};
use crate::propagator::{
    check_step_halving, echo_fidelity, evolve_observed, sample_grid, IntegratorConfig,
    SpectralPropagator, SPECTRAL_MAX_DIM, STEP_HALVING_LIMIT,
};
use crate::series::TimeSeries;

/// Largest tolerated `|J0(eps_a/nu) + J0(eps_b/nu)|` before a warning.
const REVERSAL_TOLERANCE: f64 = 1e-3;
/// Kept weight below which a post-selected OTOC point is invalid.
const MIN_KEPT_WEIGHT: f64 = 1e-12;

/// Which Hamiltonian drives the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Time-dependent lab frame with the full cosine drive.
    Lab,
    /// Time-independent Bessel-renormalized model (two levels only).
    Effective(EffectiveOptions),
}

/// How the backward leg of an echo is realized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reversal {
    /// Drive at `eps_b`, as in the experiment.
    #[default]
    Drive,
    /// Evolve under the negated forward Hamiltonian (effective model only).
    ExactNegation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub integrator: IntegratorConfig,
    /// Repeat integrated runs at half the step and reject drifts above 1e-4.
    pub check_halving: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            check_halving: true,
        }
    }
}

impl RunOptions {
    pub fn unchecked(integrator: IntegratorConfig) -> Self {
        Self {
            integrator,
            check_halving: false,
        }
    }
}

enum Engine {
    Lab(LabHamiltonian),
    Spectral {
        ham: EffectiveHamiltonian,
        prop: SpectralPropagator,
    },
    Integrated(EffectiveHamiltonian),
}

impl Engine {
    fn build(
        basis: &Arc<FockBasis>,
        device: &DeviceSpec,
        drive: &DrivePattern,
        model: Model,
    ) -> Result<Self> {
        match model {
            Model::Lab => Ok(Engine::Lab(build_lab_hamiltonian(basis, device, drive)?)),
            Model::Effective(o) => {
                Self::from_effective(build_effective_hamiltonian(basis, device, drive, o)?)
            }
        }
    }

    fn from_effective(ham: EffectiveHamiltonian) -> Result<Self> {
        if ham.basis().dim() <= SPECTRAL_MAX_DIM {
            let prop = SpectralPropagator::new(ham.matrix())?;
            Ok(Engine::Spectral { ham, prop })
        } else {
            Ok(Engine::Integrated(ham))
        }
    }

    fn negated(&self) -> Result<Self> {
        match self {
            Engine::Lab(_) => Err(Error::Unsupported(
                "exact negation needs the effective model".into(),
            )),
            Engine::Spectral { ham, .. } | Engine::Integrated(ham) => {
                Self::from_effective(ham.negated())
            }
        }
    }

    fn period(&self) -> Option<f64> {
        match self {
            Engine::Lab(h) => h.period(),
            _ => None,
        }
    }

    fn is_exact(&self) -> bool {
        matches!(self, Engine::Spectral { .. })
    }

    /// Evolve through `times` (measured from the start of this leg) and
    /// observe at each of them.
    fn run<F>(
        &self,
        state: &StateVector,
        times: &[f64],
        cfg: &IntegratorConfig,
        mut observe: F,
    ) -> Result<StateVector>
    where
        F: FnMut(f64, &StateVector) -> Result<()>,
    {
        match self {
            Engine::Lab(h) => evolve_observed(state, h, times, cfg, observe),
            Engine::Integrated(h) => evolve_observed(state, h, times, cfg, observe),
            Engine::Spectral { prop, .. } => {
                let Some(&t0) = times.first() else {
                    return Ok(state.clone());
                };
                let c = prop.to_eigenbasis(state)?;
                let mut last = state.clone();
                for &t in times {
                    last = prop.from_eigenbasis(&c, t - t0);
                    observe(t, &last)?;
                }
                Ok(last)
            }
        }
    }

    fn propagate(
        &self,
        state: &StateVector,
        t: f64,
        cfg: &IntegratorConfig,
    ) -> Result<StateVector> {
        match self {
            Engine::Spectral { prop, .. } => prop.propagate(state, t),
            _ => self.run(state, &[0.0, t], cfg, |_, _| Ok(())),
        }
    }
}

/// Run `run` once, or twice with the step halved when requested and any
/// engine integrates numerically.
fn with_halving<T, F>(opts: &RunOptions, engines: &[&Engine], run: F) -> Result<(T, Option<f64>)>
where
    F: Fn(&IntegratorConfig) -> Result<(T, Vec<f64>)>,
{
    let integrated = engines.iter().any(|e| !e.is_exact());
    if opts.check_halving && integrated {
        let period = engines.iter().find_map(|e| e.period());
        let (r, drift) = check_step_halving(&opts.integrator, period, STEP_HALVING_LIMIT, run)?;
        Ok((r, Some(drift)))
    } else {
        run(&opts.integrator).map(|(r, _)| (r, None))
    }
}

fn sample_interval(opts: &RunOptions, engines: &[&Engine]) -> Result<f64> {
    opts.integrator
        .resolve_sample_interval(engines.iter().find_map(|e| e.period()))
}

fn flatten(series: &TimeSeries) -> Vec<f64> {
    series.values.iter().flatten().copied().collect()
}

/// Occupations `|0101...>` (`first_occupied = false`) or `|1010...>`.
pub fn neel_occupations(n_sites: usize, first_occupied: bool) -> Vec<u8> {
    (0..n_sites)
        .map(|j| u8::from((j % 2 == 0) == first_occupied))
        .collect()
}

/// Apply an instantaneous single-site gate.
pub fn apply_gate(state: &StateVector, site: usize, gate: GateKind) -> Result<StateVector> {
    let basis = state.basis();
    let d = basis.levels();
    let re = |x: f64| Complex64::new(x, 0.0);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut local = match gate {
        GateKind::X => vec![(0, 1, re(1.0)), (1, 0, re(1.0))],
        GateKind::Z => (0..d)
            .map(|n| (n, n, re(if n % 2 == 0 { 1.0 } else { -1.0 })))
            .collect(),
        GateKind::YHalfPi => vec![(0, 0, re(h)), (1, 0, re(h)), (0, 1, re(-h)), (1, 1, re(h))],
        GateKind::SigmaX(eta) => {
            if (eta.abs() - 1.0).abs() > 1e-12 {
                return Err(Error::Unsupported(format!(
                    "SigmaX({eta}) is not unitary; use eta = +-1"
                )));
            }
            vec![(0, 1, re(1.0)), (1, 0, re(1.0)), (2, 2, re(eta))]
        }
    };
    if !matches!(gate, GateKind::Z) && d > 2 && !local.iter().any(|e| e.0 == 2) {
        local.push((2, 2, re(1.0)));
    }
    local.retain(|e| e.0 < d && e.1 < d);
    embed_local(basis, site, &local)?.apply(state)
}

/// Site populations of the first excited level plus the basis built for them.
fn sector_basis(device: &DeviceSpec, initial: &[u8]) -> Result<Arc<FockBasis>> {
    if initial.len() != device.n_sites {
        return Err(Error::InvalidInput(format!(
            "initial state has {} sites, device has {}",
            initial.len(),
            device.n_sites
        )));
    }
    let n: usize = initial.iter().map(|&o| o as usize).sum();
    build_basis(device.n_sites, device.levels, Some(n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkResult {
    /// First-excited-state population of each site.
    pub series: TimeSeries,
    pub initial: Vec<u8>,
    pub drive: DrivePattern,
    pub levels: u8,
    pub model: Model,
    /// Largest observable change under step halving, when checked.
    pub halving_drift: Option<f64>,
}

fn walk_on_engine(
    engine: &Engine,
    initial: &StateVector,
    t_max: f64,
    opts: &RunOptions,
) -> Result<(TimeSeries, Option<f64>)> {
    let times = sample_grid(0.0, t_max, sample_interval(opts, &[engine])?);
    with_halving(opts, &[engine], |cfg| {
        let mut series = TimeSeries::empty();
        engine.run(initial, &times, cfg, |t, s| {
            series.push(t, s.excited_populations());
            Ok(())
        })?;
        let flat = flatten(&series);
        Ok((series, flat))
    })
}

/// Populations after placing excitations at `initial` and evolving to `t_max`.
pub fn run_quantum_walk(
    device: &DeviceSpec,
    drive: &DrivePattern,
    initial: &[u8],
    t_max: f64,
    model: Model,
    opts: &RunOptions,
) -> Result<WalkResult> {
    if !(t_max >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "t_max {t_max} must be non-negative"
        )));
    }
    let basis = sector_basis(device, initial)?;
    let engine = Engine::build(&basis, device, drive, model)?;
    let psi0 = product_state(&basis, initial)?;
    let (series, halving_drift) = walk_on_engine(&engine, &psi0, t_max, opts)?;
    Ok(WalkResult {
        series,
        initial: initial.to_vec(),
        drive: drive.clone(),
        levels: device.levels,
        model,
        halving_drift,
    })
}

/// Populations of both sites for one excitation starting on site 1 with the
/// drive on site 0 only, sampled every drive period unless overridden.
pub fn run_rabi_pair(
    device: &DeviceSpec,
    eps: f64,
    nu: f64,
    t_max: f64,
    opts: &RunOptions,
) -> Result<TimeSeries> {
    Ok(rabi_trajectory(device, eps, nu, t_max, opts)?.0)
}

/// Series, sign of the effective coupling and halving drift.
fn rabi_trajectory(
    device: &DeviceSpec,
    eps: f64,
    nu: f64,
    t_max: f64,
    opts: &RunOptions,
) -> Result<(TimeSeries, f64, Option<f64>)> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidDrive(format!(
            "eps {eps} must be non-negative"
        )));
    }
    let pair = device.truncate(2)?;
    let drive = DrivePattern::on_sites(2, &[0], eps, nu)?;
    let basis = build_basis(2, pair.levels, Some(1))?;
    let engine = Engine::build(&basis, &pair, &drive, Model::Lab)?;
    let psi0 = product_state(&basis, &[0, 1])?;
    let interval = opts.integrator.sample_interval.unwrap_or(drive.period());
    let times = sample_grid(0.0, t_max, interval);

    if times.len() < 2 {
        return Err(Error::InvalidInput(
            "t_max shorter than one sample interval".into(),
        ));
    }
    let (i10, i01) = (
        basis.index_of(&[1, 0]).unwrap(),
        basis.index_of(&[0, 1]).unwrap(),
    );
    let ((series, sign), drift) = with_halving(opts, &[&engine], |cfg| {
        let mut series = TimeSeries::empty();
        let mut sign = 0.0;
        engine.run(&psi0, &times, cfg, |t, s| {
            if series.len() == 1 {
                let a = s.amplitudes();
                sign = -(a[i10] * a[i01].conj()).im.signum();
            }
            series.push(t, s.excited_populations());
            Ok(())
        })?;
        let flat = flatten(&series);
        Ok(((series, sign), flat))
    })?;
    Ok((series, sign, drift))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RabiPoint {
    pub eps: f64,
    /// Oscillation frequency of the site-0 population in MHz.
    pub frequency: f64,
    pub confident: bool,
    /// Signed effective coupling in MHz.
    pub g_eff: f64,
    /// `g_eff / g`.
    pub ratio: f64,
    pub halving_drift: Option<f64>,
}

/// Effective coupling from the population oscillation at each amplitude,
/// signed by the phase of the transferred amplitude after one sample.
pub fn rabi_sweep(
    device: &DeviceSpec,
    eps: &[f64],
    nu: f64,
    t_max: f64,
    opts: &RunOptions,
) -> Result<Vec<RabiPoint>> {
    let g = *device
        .nn_couplings
        .first()
        .ok_or_else(|| Error::InvalidDevice("device has no couplings".into()))?;
    eps.par_iter()
        .map(|&e| {
            let (series, sign, halving_drift) = rabi_trajectory(device, e, nu, t_max, opts)?;
            let peak = dominant_frequency(&series.times, &series.site(0))?;
            let g_eff = if peak.confident {
                sign * peak.frequency / 2.0
            } else {
                0.0
            };
            Ok(RabiPoint {
                eps: e,
                frequency: peak.frequency,
                confident: peak.confident,
                g_eff,
                ratio: g_eff / g,
                halving_drift,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalConfig {
    pub eps_a: f64,
    pub eps_b: f64,
    pub nu: f64,
    /// Duration of each leg in ns.
    pub half_time: f64,
    pub initial: Vec<u8>,
    pub model: Model,
    pub reversal: Reversal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversalResult {
    pub walk: WalkResult,
    /// Largest second-excited-level population over sites and samples.
    pub max_level2: f64,
    /// `|<psi(0)|psi(2 half_time)>|^2`.
    pub echo_fidelity: f64,
    /// Mean over sites and first-leg samples of `|P_j(t) - P_j(2 half_time - t)|`.
    pub asymmetry: f64,
    /// `|J0(eps_a/nu) + J0(eps_b/nu)|`.
    pub bessel_mismatch: f64,
}

/// Forward leg with the staggered drive at `eps_a`, backward leg at `eps_b`
/// (or under the exactly negated model), drive phase restarting at each leg.
pub fn run_reversed_evolution(
    device: &DeviceSpec,
    cfg: &ReversalConfig,
    opts: &RunOptions,
) -> Result<ReversalResult> {
    if !(cfg.half_time > 0.0) {
        return Err(Error::InvalidInput(format!(
            "half_time {} must be positive",
            cfg.half_time
        )));
    }
    let bessel_mismatch = (bessel_j0(cfg.eps_a / cfg.nu) + bessel_j0(cfg.eps_b / cfg.nu)).abs();
    if cfg.reversal == Reversal::Drive && bessel_mismatch > REVERSAL_TOLERANCE {
        log::warn!(
            "J0({}/{nu}) + J0({}/{nu}) = {bessel_mismatch:.2e}; the backward leg is not an exact reversal",
            cfg.eps_a,
            cfg.eps_b,
            nu = cfg.nu
        );
    }
    let n = device.n_sites;
    let basis = sector_basis(device, &cfg.initial)?;
    let drive_a = DrivePattern::staggered(n, cfg.eps_a, cfg.nu);
    let forward = Engine::build(&basis, device, &drive_a, cfg.model)?;
    let backward = match cfg.reversal {
        Reversal::Drive => Engine::build(
            &basis,
            device,
            &DrivePattern::staggered(n, cfg.eps_b, cfg.nu),
            cfg.model,
        )?,
        Reversal::ExactNegation => forward.negated()?,
    };
    let psi0 = product_state(&basis, &cfg.initial)?;
    let leg = sample_grid(
        0.0,
        cfg.half_time,
        sample_interval(opts, &[&forward, &backward])?,
    );
    let mirrored: Vec<f64> = leg.iter().rev().map(|t| cfg.half_time - t).collect();

    let ((series, max_level2, last), drift) = with_halving(opts, &[&forward, &backward], |ic| {
        let mut series = TimeSeries::empty();
        let mut max2: f64 = 0.0;
        let mut record = |t: f64, s: &StateVector| {
            let lp = s.level_probabilities();
            max2 = lp.iter().map(|p| p[2]).fold(max2, f64::max);
            series.push(t, lp.iter().map(|p| p[1]).collect());
        };
        let mid = forward.run(&psi0, &leg, ic, |t, s| {
            record(t, s);
            Ok(())
        })?;
        let last = backward.run(&mid, &mirrored, ic, |t, s| {
            if t > 0.0 {
                record(cfg.half_time + t, s);
            }
            Ok(())
        })?;
        let flat = flatten(&series);
        Ok(((series, max2, last), flat))
    })?;

    let total = 2.0 * cfg.half_time;
    let mut acc = 0.0;
    let mut count = 0usize;
    for &t in &leg {
        for j in 0..n {
            acc += (series.interpolate(j, t) - series.interpolate(j, total - t)).abs();
            count += 1;
        }
    }
    let echo = echo_fidelity(&psi0, &last)?;
    Ok(ReversalResult {
        walk: WalkResult {
            series,
            initial: cfg.initial.clone(),
            drive: drive_a,
            levels: device.levels,
            model: cfg.model,
            halving_drift: drift,
        },
        max_level2,
        echo_fidelity: echo,
        asymmetry: acc / count as f64,
        bessel_mismatch,
    })
}

/// Butterfly operator of an OTOC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Butterfly {
    Z,
    X,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtocConfig {
    pub eps_a: f64,
    pub eps_b: f64,
    pub nu: f64,
    pub butterfly: Butterfly,
    /// Ascending non-negative echo times in ns.
    pub times: Vec<f64>,
    pub model: Model,
    pub reversal: Reversal,
    /// Site of the butterfly gate; the last site when `None`.
    pub butterfly_site: Option<usize>,
}

/// 0 to 250 ns in 2 ns steps.
pub fn default_otoc_times() -> Vec<f64> {
    (0..=125).map(|k| 2.0 * k as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OtocGrid {
    pub times: Vec<f64>,
    /// `values[k][j]`; NaN where the point is invalid.
    pub values: Vec<Vec<f64>>,
    /// False where post-selection kept no weight.
    pub valid: Vec<bool>,
    pub butterfly: Butterfly,
    pub butterfly_site: usize,
    pub eps_a: f64,
    pub eps_b: f64,
    pub levels: u8,
    pub post_selected: bool,
    /// Norm kept by post-selection at each time (1 without it).
    pub kept_weight: Vec<f64>,
    pub halving_drift: Option<f64>,
}

impl OtocGrid {
    pub fn series(&self) -> Result<TimeSeries> {
        TimeSeries::new(self.times.clone(), self.values.clone())
    }
}

struct OtocSetup {
    initial: StateVector,
    gate: GateKind,
    /// `sz` eigenvalue of each site in the initial state (Z kind).
    signs: Vec<f64>,
    sx: Vec<OperatorMatrix>,
    post_select: bool,
}

impl OtocSetup {
    /// `(values, kept weight)`; `None` values when post-selection is empty.
    fn measure(
        &self,
        mut state: StateVector,
        butterfly: Butterfly,
    ) -> Result<(Option<Vec<f64>>, f64)> {
        let mut kept = 1.0;
        if self.post_select {
            let basis = state.basis().clone();
            let n = basis.n_sites();
            for (i, a) in state.amplitudes_mut().iter_mut().enumerate() {
                if (0..n).any(|j| basis.occupation(i, j) == 2) {
                    *a = Complex64::new(0.0, 0.0);
                }
            }
            kept = state.norm().powi(2);
            if kept < MIN_KEPT_WEIGHT {
                return Ok((None, kept));
            }
            state.normalize();
        }
        let values = match butterfly {
            Butterfly::Z => state
                .level_probabilities()
                .iter()
                .zip(&self.signs)
                .map(|(p, s)| s * (p[1] - p[0]))
                .collect(),
            Butterfly::X => self
                .sx
                .iter()
                .map(|op| crate::model::expectation(&state, op))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok((Some(values), kept))
    }
}

fn assemble_grid(
    cfg: &OtocConfig,
    site: usize,
    levels: u8,
    post_selected: bool,
    values: Vec<Option<Vec<f64>>>,
    kept_weight: Vec<f64>,
    halving_drift: Option<f64>,
) -> OtocGrid {
    let n = values.iter().flatten().map(Vec::len).next().unwrap_or(0);
    OtocGrid {
        times: cfg.times.clone(),
        valid: values.iter().map(Option::is_some).collect(),
        values: values
            .into_iter()
            .map(|v| v.unwrap_or_else(|| vec![f64::NAN; n]))
            .collect(),
        butterfly: cfg.butterfly,
        butterfly_site: site,
        eps_a: cfg.eps_a,
        eps_b: cfg.eps_b,
        levels,
        post_selected,
        kept_weight,
        halving_drift,
    }
}

/// ZZ OTOC through free fermions when the model is a two-level
/// nearest-neighbour XY chain; `None` for any other model.
fn free_fermion_otoc(
    device: &DeviceSpec,
    cfg: &OtocConfig,
    neel: &[u8],
    site: usize,
) -> Result<Option<Vec<Vec<f64>>>> {
    let Model::Effective(o) = cfg.model else {
        return Ok(None);
    };
    if cfg.butterfly != Butterfly::Z || device.levels != 2 || o.include_nnn || o.zz.is_some() {
        return Ok(None);
    }
    let n = device.n_sites;
    let single = build_basis(n, 2, Some(1))?;
    let chain = |eps: f64| {
        build_effective_hamiltonian(&single, device, &DrivePattern::staggered(n, eps, cfg.nu), o)
    };
    let forward = chain(cfg.eps_a)?;
    let backward = match cfg.reversal {
        Reversal::Drive => chain(cfg.eps_b)?,
        Reversal::ExactNegation => forward.negated(),
    };
    let ca = FreeFermionChain::from_effective(&forward)?;
    let cb = FreeFermionChain::from_effective(&backward)?;
    let occupied: Vec<usize> = (0..n).filter(|&j| neel[j] == 1).collect();
    let values = cfg
        .times
        .par_iter()
        .map(|&t| zz_otoc(&ca, &cb, &occupied, site, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(values))
}

/// `C_j(t)`: evolve forward for `t` at `eps_a`, apply the butterfly gate,
/// evolve for `t` at `eps_b` (or under the negated model), then measure
/// `s_j sz_j` (Z kind, Neel `|0101...>`) or `sx_j` (X kind, `|+...+>`).
/// Three-level Z runs discard level-2 amplitudes and renormalize; three-level
/// X runs use `SigmaX(1)` as the gate and measure `SigmaX(0)`.
pub fn run_otoc(device: &DeviceSpec, cfg: &OtocConfig, opts: &RunOptions) -> Result<OtocGrid> {
    let n = device.n_sites;
    let d = device.levels;
    let site = cfg.butterfly_site.unwrap_or(n - 1);
    if site >= n {
        return Err(Error::SiteOutOfRange { site, n_sites: n });
    }
    if cfg.times.iter().any(|t| !(*t >= 0.0)) || cfg.times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(
            "OTOC times must be non-negative and strictly increasing".into(),
        ));
    }
    let neel = neel_occupations(n, false);
    if let Some(values) = free_fermion_otoc(device, cfg, &neel, site)? {
        let values = values.into_iter().map(Some).collect();
        let kept = vec![1.0; cfg.times.len()];
        return Ok(assemble_grid(cfg, site, d, false, values, kept, None));
    }
    let (basis, setup) = match cfg.butterfly {
        Butterfly::Z => {
            let basis = sector_basis(device, &neel)?;
            let signs = neel
                .iter()
                .map(|&o| if o == 1 { 1.0 } else { -1.0 })
                .collect();
            let initial = product_state(&basis, &neel)?;
            (
                basis,
                OtocSetup {
                    initial,
                    gate: GateKind::Z,
                    signs,
                    sx: Vec::new(),
                    post_select: d > 2,
                },
            )
        }
        Butterfly::X => {
            let basis = build_basis(n, d, None)?;
            let sx = (0..n)
                .map(|j| site_operator(&basis, j, SiteOpKind::Sx))
                .collect::<Result<Vec<_>>>()?;
            let gate = if d > 2 {
                GateKind::SigmaX(1.0)
            } else {
                GateKind::X
            };
            let initial = plus_product_state(&basis)?;
            (
                basis,
                OtocSetup {
                    initial,
                    gate,
                    signs: Vec::new(),
                    sx,
                    post_select: false,
                },
            )
        }
    };
    let forward = Engine::build(
        &basis,
        device,
        &DrivePattern::staggered(n, cfg.eps_a, cfg.nu),
        cfg.model,
    )?;
    let backward = match cfg.reversal {
        Reversal::Drive => Engine::build(
            &basis,
            device,
            &DrivePattern::staggered(n, cfg.eps_b, cfg.nu),
            cfg.model,
        )?,
        Reversal::ExactNegation => forward.negated()?,
    };

    let ((values, kept), drift) = with_halving(opts, &[&forward, &backward], |ic| {
        let mut times = cfg.times.clone();
        let prepended = times.first().is_some_and(|&t| t > 0.0);
        if prepended {
            times.insert(0, 0.0);
        }
        let mut states = Vec::with_capacity(times.len());
        forward.run(&setup.initial, &times, ic, |_, s| {
            states.push(s.clone());
            Ok(())
        })?;
        if prepended {
            states.remove(0);
        }
        let points = states
            .into_par_iter()
            .zip(cfg.times.par_iter())
            .map(|(s, &t)| {
                let kicked = apply_gate(&s, site, setup.gate)?;
                let back = backward.propagate(&kicked, t, ic)?;
                setup.measure(back, cfg.butterfly)
            })
            .collect::<Result<Vec<_>>>()?;
        let flat = points
            .iter()
            .flat_map(|(v, _)| v.clone().unwrap_or_else(|| vec![0.0; n]))
            .collect();
        let (values, kept): (Vec<_>, Vec<_>) = points.into_iter().unzip();
        Ok(((values, kept), flat))
    })?;
    let out = assemble_grid(cfg, site, d, setup.post_select, values, kept, drift);
    for (k, ok) in out.valid.iter().enumerate() {
        if !ok {
            log::warn!("post-selection kept no weight at t = {} ns", out.times[k]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SshResult {
    pub walk: WalkResult,
    /// Mean population of site 0 over samples in `[t_max/2, t_max]`.
    pub edge_population: f64,
    /// Effective intra-cell couplings (bonds 0-1, 2-3, ...) in MHz.
    pub intracell: Vec<f64>,
    /// Effective inter-cell couplings (bonds 1-2, 3-4, ...) in MHz.
    pub intercell: Vec<f64>,
}

/// Single excitation on site 0 under the given drive pattern.
pub fn run_ssh_quench(
    device: &DeviceSpec,
    drive: &DrivePattern,
    t_max: f64,
    model: Model,
    opts: &RunOptions,
) -> Result<SshResult> {
    let mut initial = vec![0u8; device.n_sites];
    initial[0] = 1;
    let two_level = device.with_levels(2);
    let ssh = build_ssh_hamiltonian(&build_basis(device.n_sites, 2, Some(1))?, &two_level, drive)?;
    let walk = run_quantum_walk(device, drive, &initial, t_max, model, opts)?;
    let s = &walk.series;
    let late: Vec<f64> = s
        .times
        .iter()
        .zip(&s.values)
        .filter(|(t, _)| **t >= 0.5 * t_max)
        .map(|(_, row)| row[0])
        .collect();
    let edge_population = late.iter().sum::<f64>() / late.len().max(1) as f64;
    Ok(SshResult {
        walk,
        edge_population,
        intracell: ssh.intracell_couplings(),
        intercell: ssh.intercell_couplings(),
    })
}

#[derive(Debug, Clone)]
pub struct ScheduleResult {
    pub series: TimeSeries,
    pub final_state: StateVector,
    pub halving_drift: Option<f64>,
}

/// Run a piecewise drive sequence with instantaneous gates. Each segment's
/// drive phase starts at zero; gates fire after evolution up to their time
/// and before any sample taken at that time.
pub fn run_schedule(
    device: &DeviceSpec,
    schedule: &Schedule,
    initial: &StateVector,
    model: Model,
    opts: &RunOptions,
) -> Result<ScheduleResult> {
    let basis = initial.basis();
    let engines = schedule
        .segments()
        .iter()
        .map(|s| Engine::build(basis, device, &s.drive, model))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Engine> = engines.iter().collect();
    let interval = sample_interval(opts, &refs)?;
    let total = schedule.total_duration();

    let ((series, final_state), drift) = with_halving(opts, &refs, |ic| {
        let mut series = TimeSeries::empty();
        let mut psi = initial.clone();
        let mut gates = schedule.gates().iter().peekable();
        let mut start = 0.0;
        for (k, (seg, engine)) in schedule.segments().iter().zip(&engines).enumerate() {
            let end = if k + 1 == engines.len() {
                total
            } else {
                start + seg.duration
            };
            let mut stops: Vec<f64> = sample_grid(start, end, interval);
            let seg_gates: Vec<_> =
                std::iter::from_fn(|| gates.next_if(|g| g.time <= end + 1e-9)).collect();
            stops.extend(seg_gates.iter().map(|g| g.time.clamp(start, end)));
            stops.sort_by(f64::total_cmp);
            stops.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            let mut prev = start;
            for &stop in &stops {
                if stop > prev {
                    psi = engine.propagate_from(&psi, prev - start, stop - start, ic)?;
                    prev = stop;
                }
                for g in seg_gates
                    .iter()
                    .filter(|g| (g.time.clamp(start, end) - stop).abs() < 1e-9)
                {
                    psi = apply_gate(&psi, g.site, g.gate)?;
                }
                let on_grid =
                    ((stop - start) / interval - ((stop - start) / interval).round()).abs() < 1e-9
                        || (stop - end).abs() < 1e-9;
                let already = series.times.last().is_some_and(|t| (t - stop).abs() < 1e-9);
                if on_grid && !already {
                    series.push(stop, psi.excited_populations());
                }
            }
            start = end;
        }
        let flat = flatten(&series);
        Ok(((series, psi), flat))
    })?;
    Ok(ScheduleResult {
        series,
        final_state,
        halving_drift: drift,
    })
}

impl Engine {
    /// Evolve from `t0` to `t1`, both measured from the start of the leg.
    fn propagate_from(
        &self,
        state: &StateVector,
        t0: f64,
        t1: f64,
        cfg: &IntegratorConfig,
    ) -> Result<StateVector> {
        match self {
            Engine::Spectral { prop, .. } => prop.propagate(state, t1 - t0),
            _ => self.run(state, &[t0, t1], cfg, |_, _| Ok(())),
        }
    }
}
