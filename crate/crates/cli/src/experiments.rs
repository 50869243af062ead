//! One function per subcommand: run the protocol, write results, report
//! invariant violations as errors.

use anyhow::{bail, Result};
use floquet_sim::analysis::{
    calibrate_counts, find_recurrence, fit_velocity_with, front_times, post_select, sample_shots,
    ConfusionModel, FrontMode, FrontReport, Recurrence, VelocityFit, Weighting,
};
use floquet_sim::bessel_j0;
use floquet_sim::hamiltonian::{build_effective_hamiltonian, build_lab_hamiltonian, Hamiltonian};
use floquet_sim::model::{build_basis, product_state, DeviceSpec, DrivePattern};
use floquet_sim::propagator::{evolve, SPECTRAL_MAX_DIM};
use floquet_sim::protocols::{
    neel_occupations, rabi_sweep, run_otoc, run_quantum_walk, run_reversed_evolution,
    run_ssh_quench, Model, OtocConfig, OtocGrid, RabiPoint, ReversalConfig,
};
use floquet_sim::series::TimeSeries;
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig, FrontKind};
use crate::output::{read_series_csv, IntegratorInfo, Writer};

/// Largest `|C_j(0) - 1|` accepted before a run is flagged.
const OTOC_START_TOLERANCE: f64 = 1e-9;
/// Largest `|sum_j P_j - N|` accepted for two-level walks.
const EXCITATION_TOLERANCE: f64 = 1e-8;

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    match cfg.kind() {
        Experiment::RabiSweep => rabi(cfg),
        Experiment::Walk => walk(cfg),
        Experiment::Reverse => reverse(cfg),
        Experiment::Otoc => otoc(cfg, false),
        Experiment::LongOtoc => otoc(cfg, true),
        Experiment::Ssh => ssh(cfg),
        Experiment::Velocity => velocity(cfg),
    }
}

/// Number of occupation tuples of `n` sites with `levels` levels and `total` excitations.
fn sector_dim(n: usize, levels: u8, total: Option<usize>) -> u128 {
    let Some(total) = total else {
        return (levels as u128).pow(n as u32);
    };
    let mut ways = vec![0u128; total + 1];
    ways[0] = 1;
    for _ in 0..n {
        let mut next = vec![0u128; total + 1];
        for (k, w) in ways.iter().enumerate() {
            for o in 0..levels as usize {
                if k + o <= total {
                    next[k + o] += w;
                }
            }
        }
        ways = next;
    }
    ways[total]
}

fn integrator_info(
    cfg: &ExperimentConfig,
    driven: bool,
    sector: Option<usize>,
) -> Result<IntegratorInfo> {
    let ic = cfg.integrator();
    let dev = cfg.device_spec()?;
    let period = (driven && cfg.model() == Model::Lab).then(|| 1e3 / cfg.drive.nu);
    let exact = matches!(cfg.model(), Model::Effective(_))
        && sector_dim(dev.n_sites, dev.levels, sector) <= SPECTRAL_MAX_DIM as u128;
    Ok(IntegratorInfo {
        method: if exact {
            "spectral".into()
        } else {
            serde_json::to_value(ic.method)?
                .as_str()
                .unwrap_or_default()
                .to_string()
        },
        dt: if exact {
            None
        } else {
            Some(ic.resolve_dt(period)?)
        },
        sample_interval: Some(ic.resolve_sample_interval(period)?),
        check_halving: cfg.integrator.check_halving,
    })
}

fn report(files: &[std::path::PathBuf]) -> Vec<String> {
    files.iter().map(|p| p.display().to_string()).collect()
}

#[derive(Serialize)]
struct RabiRow {
    #[serde(flatten)]
    point: RabiPoint,
    eps_over_nu: f64,
    j0: f64,
    deviation: f64,
}

#[derive(Serialize)]
struct RabiSummary {
    points: Vec<RabiRow>,
    max_deviation: f64,
}

fn rabi(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let dev = cfg.device_spec()?;
    let nu = cfg.drive.nu;
    let k = cfg.drive.sweep_points;
    let eps: Vec<f64> = (0..k)
        .map(|i| cfg.drive.sweep_max * nu * i as f64 / (k - 1) as f64)
        .collect();
    let out = Writer::new(cfg, integrator_info(cfg, true, Some(1))?)?;
    let points = rabi_sweep(&dev, &eps, nu, cfg.t_max(), &cfg.run_options())?;
    let rows: Vec<RabiRow> = points
        .into_iter()
        .map(|p| {
            let x = p.eps / nu;
            RabiRow {
                point: p,
                eps_over_nu: x,
                j0: bessel_j0(x),
                deviation: (p.ratio - bessel_j0(x)).abs(),
            }
        })
        .collect();
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    println!("rabi-sweep: max |g_eff/g - J0| = {max_deviation:.4}");
    let summary = RabiSummary {
        points: rows,
        max_deviation,
    };
    Ok(report(&[out.summary_json("rabi_sweep.json", &summary)?]))
}

#[derive(Serialize)]
struct WalkSummary {
    halving_drift: Option<f64>,
    /// Largest `|sum_j P_j - N|`; two-level runs only.
    excitation_drift: Option<f64>,
    final_populations: Vec<f64>,
    readout: Option<ReadoutSummary>,
}

#[derive(Serialize)]
struct ReadoutSummary {
    shots: u64,
    seed: u64,
    confusion: bool,
    /// Mean fraction of shots kept by post-selection on the excitation number.
    mean_kept_fraction: f64,
}

fn walk_drive(cfg: &ExperimentConfig, n: usize) -> DrivePattern {
    DrivePattern::staggered(n, cfg.drive.eps.unwrap_or(0.0), cfg.drive.nu)
}

fn walk(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let dev = cfg.device_spec()?;
    let drive = walk_drive(cfg, dev.n_sites);
    let initial = cfg.run.initial.clone().unwrap_or_default();
    let n_exc: usize = initial.iter().map(|&o| o as usize).sum();
    let out = Writer::new(cfg, integrator_info(cfg, drive.is_driven(), Some(n_exc))?)?;
    let w = run_quantum_walk(
        &dev,
        &drive,
        &initial,
        cfg.t_max(),
        cfg.model(),
        &cfg.run_options(),
    )?;
    let excitation_drift = (dev.levels == 2).then(|| {
        w.series
            .values
            .iter()
            .map(|row| (row.iter().sum::<f64>() - n_exc as f64).abs())
            .fold(0.0, f64::max)
    });
    let mut files = vec![out.series_csv("walk.csv", &w.series)?];
    let readout = if cfg.sampling.shots > 0 {
        let (series, kept) = sampled_walk(cfg, &dev, &drive, &initial, n_exc)?;
        files.push(out.series_csv("walk_sampled.csv", &series)?);
        Some(ReadoutSummary {
            shots: cfg.sampling.shots,
            seed: cfg.sampling.seed,
            confusion: cfg.sampling.confusion,
            mean_kept_fraction: kept,
        })
    } else {
        None
    };
    let summary = WalkSummary {
        halving_drift: w.halving_drift,
        excitation_drift,
        final_populations: w.series.values.last().cloned().unwrap_or_default(),
        readout,
    };
    files.push(out.summary_json("walk.json", &summary)?);
    if let Some(d) = excitation_drift {
        if d > EXCITATION_TOLERANCE {
            bail!("invariant violated: total population drifted by {d:.3e}");
        }
    }
    println!("walk: {} samples to {} ns", w.series.len(), cfg.t_max());
    Ok(report(&files))
}

fn confusion_for(cfg: &ExperimentConfig, n: usize) -> Result<ConfusionModel> {
    if !cfg.sampling.confusion {
        return Ok(ConfusionModel::perfect(n));
    }
    let c = ConfusionModel::paper_10q();
    if c.n_sites() != n {
        bail!("the built-in confusion model covers 10 sites, the device has {n}");
    }
    Ok(c)
}

/// Calibrated per-site excitation probabilities from post-selected shots at
/// every sample, with the mean kept fraction.
fn sampled_walk(
    cfg: &ExperimentConfig,
    dev: &DeviceSpec,
    drive: &DrivePattern,
    initial: &[u8],
    n_exc: usize,
) -> Result<(TimeSeries, f64)> {
    let n = dev.n_sites;
    let confusion = confusion_for(cfg, n)?;
    let basis = build_basis(n, dev.levels, Some(n_exc))?;
    let psi0 = product_state(&basis, initial)?;
    let ham: Box<dyn Hamiltonian> = match cfg.model() {
        Model::Lab => Box::new(build_lab_hamiltonian(&basis, dev, drive)?),
        Model::Effective(o) => Box::new(build_effective_hamiltonian(&basis, dev, drive, o)?),
    };
    let traj = evolve(&psi0, ham.as_ref(), 0.0, cfg.t_max(), &cfg.integrator())?;
    let mut values = Vec::with_capacity(traj.len());
    let mut kept_sum = 0.0;
    for (k, state) in traj.states.iter().enumerate() {
        let seed = cfg.sampling.seed + k as u64;
        let counts = sample_shots(state, &confusion, cfg.sampling.shots, seed)?;
        let (kept, frac) = post_select(&counts, n_exc as u32)?;
        kept_sum += frac;
        values.push(calibrate_counts(&kept, &confusion)?.p_excited);
    }
    let kept = kept_sum / traj.len().max(1) as f64;
    Ok((TimeSeries::new(traj.times.clone(), values)?, kept))
}

#[derive(Serialize)]
struct ReverseSummary {
    eps_a: f64,
    eps_b: f64,
    echo_fidelity: f64,
    max_level2: f64,
    asymmetry: f64,
    bessel_mismatch: f64,
    halving_drift: Option<f64>,
}

fn reverse(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let dev = cfg.device_spec()?;
    let initial = cfg.run.initial.clone().unwrap_or_default();
    let n_exc: usize = initial.iter().map(|&o| o as usize).sum();
    let (eps_a, eps_b) = (
        cfg.drive.eps_a.unwrap_or(0.0),
        cfg.drive.eps_b.unwrap_or(0.0),
    );
    let rc = ReversalConfig {
        eps_a,
        eps_b,
        nu: cfg.drive.nu,
        half_time: cfg.t_max() / 2.0,
        initial,
        model: cfg.model(),
        reversal: cfg.reversal(),
    };
    let out = Writer::new(cfg, integrator_info(cfg, true, Some(n_exc))?)?;
    let r = run_reversed_evolution(&dev, &rc, &cfg.run_options())?;
    let summary = ReverseSummary {
        eps_a,
        eps_b,
        echo_fidelity: r.echo_fidelity,
        max_level2: r.max_level2,
        asymmetry: r.asymmetry,
        bessel_mismatch: r.bessel_mismatch,
        halving_drift: r.walk.halving_drift,
    };
    let files = [
        out.series_csv("reverse.csv", &r.walk.series)?,
        out.summary_json("reverse.json", &summary)?,
    ];
    println!(
        "reverse: echo fidelity {:.6}, max level-2 population {:.4}",
        r.echo_fidelity, r.max_level2
    );
    Ok(report(&files))
}

#[derive(Serialize)]
struct OtocSummary {
    butterfly_site: usize,
    /// `max_j |C_j(0) - 1|` when the grid starts at zero.
    start_deviation: Option<f64>,
    invalid_points: usize,
    post_selected: bool,
    min_kept_weight: f64,
    halving_drift: Option<f64>,
    fronts: FrontReport,
    velocity: Option<VelocityFit>,
    recurrence: Option<Recurrence>,
}

fn otoc(cfg: &ExperimentConfig, long: bool) -> Result<Vec<String>> {
    let dev = cfg.device_spec()?;
    let n = dev.n_sites;
    let step = cfg.run.time_step.unwrap_or(2.0);
    let times: Vec<f64> = (0..=(cfg.t_max() / step + 1e-9).floor() as usize)
        .map(|k| step * k as f64)
        .collect();
    let oc = OtocConfig {
        eps_a: cfg.drive.eps_a.unwrap_or(0.0),
        eps_b: cfg.drive.eps_b.unwrap_or(0.0),
        nu: cfg.drive.nu,
        butterfly: cfg.butterfly(),
        times,
        model: cfg.model(),
        reversal: cfg.reversal(),
        butterfly_site: cfg.model.butterfly_site,
    };
    let sector = (cfg.butterfly() == floquet_sim::protocols::Butterfly::Z)
        .then(|| neel_occupations(n, false).iter().map(|&o| o as usize).sum());
    let mut info = integrator_info(cfg, true, sector)?;
    info.sample_interval = Some(step);
    let out = Writer::new(cfg, info)?;
    let grid = run_otoc(&dev, &oc, &cfg.run_options())?;
    let start_deviation = (grid.times.first() == Some(&0.0)).then(|| {
        grid.values[0]
            .iter()
            .map(|c| (c - 1.0).abs())
            .fold(0.0, f64::max)
    });
    let (fronts, velocity) = otoc_fronts(&grid);
    let recurrence = if long {
        Some(find_recurrence(&grid.times, &grid.values)?)
    } else {
        None
    };
    let summary = OtocSummary {
        butterfly_site: grid.butterfly_site,
        start_deviation,
        invalid_points: grid.valid.iter().filter(|v| !**v).count(),
        post_selected: grid.post_selected,
        min_kept_weight: grid.kept_weight.iter().copied().fold(1.0, f64::min),
        halving_drift: grid.halving_drift,
        fronts,
        velocity,
        recurrence,
    };
    let stem = if long { "long_otoc" } else { "otoc" };
    let files = [
        out.series_csv(&format!("{stem}.csv"), &grid.series()?)?,
        out.summary_json(&format!("{stem}.json"), &summary)?,
    ];
    if let Some(d) = start_deviation {
        if d > OTOC_START_TOLERANCE {
            bail!("invariant violated: |C(0) - 1| = {d:.3e}");
        }
    }
    match (&summary.velocity, &summary.recurrence) {
        (_, Some(r)) => println!(
            "{}: recurrence {:.3} at {:.0} ns",
            cfg.kind(),
            r.correlation,
            r.lag
        ),
        (Some(v), None) => println!(
            "otoc: velocity {:.1} +- {:.1} sites/us",
            v.velocity, v.sigma
        ),
        (None, None) => println!("otoc: no velocity fit"),
    }
    Ok(report(&files))
}

/// Polynomial fronts on every site but the butterfly's, positions measured
/// from the butterfly.
fn otoc_fronts(grid: &OtocGrid) -> (FrontReport, Option<VelocityFit>) {
    let Ok(series) = grid.series() else {
        return (
            FrontReport {
                fronts: vec![],
                skipped: vec![],
            },
            None,
        );
    };
    let b = grid.butterfly_site;
    let sites: Vec<usize> = (0..series.n_sites()).filter(|&j| j != b).collect();
    let rep = front_times(&series, &sites, FrontMode::polynomial_otoc());
    let pts: Vec<_> = rep
        .fronts
        .iter()
        .map(|f| (f.site.abs_diff(b) as f64, f.time, f.sigma))
        .collect();
    let v = fit_velocity_with(&pts, Weighting::Uniform).ok();
    (rep, v)
}

#[derive(Serialize)]
struct SshSummary {
    driven_sites: Vec<usize>,
    eps: f64,
    edge_population: f64,
    intracell: Vec<f64>,
    intercell: Vec<f64>,
    halving_drift: Option<f64>,
}

fn ssh(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let dev = cfg.device_spec()?;
    let sites = cfg.drive.sites.clone().unwrap_or_default();
    let eps = cfg.drive.eps.unwrap_or(0.0);
    let drive = DrivePattern::on_sites(dev.n_sites, &sites, eps, cfg.drive.nu)?;
    let out = Writer::new(cfg, integrator_info(cfg, drive.is_driven(), Some(1))?)?;
    let r = run_ssh_quench(&dev, &drive, cfg.t_max(), cfg.model(), &cfg.run_options())?;
    let summary = SshSummary {
        driven_sites: sites,
        eps,
        edge_population: r.edge_population,
        intracell: r.intracell,
        intercell: r.intercell,
        halving_drift: r.walk.halving_drift,
    };
    let files = [
        out.series_csv("ssh.csv", &r.walk.series)?,
        out.summary_json("ssh.json", &summary)?,
    ];
    println!("ssh: edge population {:.3}", r.edge_population);
    Ok(report(&files))
}

#[derive(Serialize)]
struct VelocitySummary {
    input: String,
    fronts: FrontReport,
    velocity: VelocityFit,
}

fn velocity(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let input = cfg.run.input.clone().unwrap_or_default();
    let series = read_series_csv(&input)?;
    let n = series.n_sites();
    let front = cfg.run.front.unwrap_or(FrontKind::Walk);
    let (mode, origin, default_sites): (_, usize, Vec<usize>) = match front {
        FrontKind::Walk => (FrontMode::GaussianWalk, 0, (2..n).collect()),
        FrontKind::Otoc => (
            FrontMode::polynomial_otoc(),
            n.saturating_sub(1),
            (0..n.saturating_sub(1)).collect(),
        ),
    };
    let sites = cfg.run.sites.clone().unwrap_or(default_sites);
    let rep = front_times(&series, &sites, mode);
    let pts: Vec<_> = rep
        .fronts
        .iter()
        .map(|f| (f.site.abs_diff(origin) as f64, f.time, f.sigma))
        .collect();
    let v = fit_velocity_with(&pts, Weighting::Uniform)?;
    let out = Writer::new(
        cfg,
        IntegratorInfo {
            method: "none".into(),
            dt: None,
            sample_interval: None,
            check_halving: false,
        },
    )?;
    println!("velocity = {:.3} +- {:.3} sites/us", v.velocity, v.sigma);
    let summary = VelocitySummary {
        input: input.display().to_string(),
        fronts: rep,
        velocity: v,
    };
    Ok(report(&[out.summary_json("velocity.json", &summary)?]))
}
