#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Parser, Subcommand};
use floquet_sim::propagator::Method;

mod config;
mod experiments;
mod output;

use config::{
    load_config, ButterflyKind, Experiment, ExperimentConfig, Frame, FrontKind, ReversalKind,
};

#[derive(Parser)]
#[command(
    name = "floquet",
    version,
    about = "Floquet-engineered qubit chain experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-site Rabi oscillations across drive amplitudes.
    RabiSweep(Flags),
    /// Populations after local excitations under a staggered drive.
    Walk(Flags),
    /// Forward and time-reversed evolution.
    Reverse(Flags),
    /// Out-of-time-order correlator grid.
    Otoc(Flags),
    /// Edge population under an SSH drive pattern.
    Ssh(Flags),
    /// Light-cone velocity from a saved time series.
    Velocity(Flags),
    /// Long XX OTOC run with recurrence analysis.
    LongOtoc(Flags),
}

#[derive(clap::Args, Default)]
struct Flags {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `paper-10q` or `uniform:<n>:<g>`.
    #[arg(long)]
    device: Option<String>,
    /// Drive amplitude in MHz (walk, ssh).
    #[arg(long)]
    eps: Option<f64>,
    /// Forward-leg amplitude in MHz.
    #[arg(long)]
    eps_a: Option<f64>,
    /// Backward-leg amplitude in MHz.
    #[arg(long)]
    eps_b: Option<f64>,
    /// Drive frequency in MHz [default: 120].
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
    levels: Option<u8>,
    /// Keep next-nearest-neighbour couplings.
    #[arg(long)]
    nnn: bool,
    /// Add the ZZ term; the strength defaults to 0.065 MHz.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.065")]
    zz: Option<f64>,
    #[arg(long, value_enum)]
    frame: Option<Frame>,
    #[arg(long, value_enum)]
    butterfly: Option<ButterflyKind>,
    #[arg(long, value_enum)]
    reversal: Option<ReversalKind>,
    /// `magnus4`, `exp_midpoint` or `rk4`.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Integration step in ns.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Apply the built-in readout confusion model.
    #[arg(long)]
    confusion: bool,
    /// Output directory [default: out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// `time_ns,site,value` file for `velocity`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    front: Option<FrontKind>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown method `{s}` (magnus4, exp_midpoint, rk4)"))
}

impl Command {
    fn split(self) -> (Experiment, Flags) {
        match self {
            Command::RabiSweep(f) => (Experiment::RabiSweep, f),
            Command::Walk(f) => (Experiment::Walk, f),
            Command::Reverse(f) => (Experiment::Reverse, f),
            Command::Otoc(f) => (Experiment::Otoc, f),
            Command::Ssh(f) => (Experiment::Ssh, f),
            Command::Velocity(f) => (Experiment::Velocity, f),
            Command::LongOtoc(f) => (Experiment::LongOtoc, f),
        }
    }
}

fn apply(flags: Flags, mut c: ExperimentConfig) -> ExperimentConfig {
    if let Some(d) = flags.device {
        c.device = config::DeviceSection {
            preset: Some(d),
            ..Default::default()
        };
    }
    macro_rules! set {
        ($flag:expr => $($field:tt)+) => {
            if let Some(v) = $flag {
                c.$($field)+ = v.into();
            }
        };
    }
    set!(flags.eps => drive.eps);
    set!(flags.eps_a => drive.eps_a);
    set!(flags.eps_b => drive.eps_b);
    set!(flags.nu => drive.nu);
    set!(flags.levels => model.levels);
    set!(flags.frame => model.frame);
    set!(flags.butterfly => model.butterfly);
    set!(flags.reversal => model.reversal);
    set!(flags.method => integrator.method);
    set!(flags.dt => integrator.dt);
    set!(flags.t_max => run.t_max);
    set!(flags.input => run.input);
    set!(flags.front => run.front);
    set!(flags.shots => sampling.shots);
    set!(flags.seed => sampling.seed);
    set!(flags.out => output.dir);
    if let Some(zz) = flags.zz {
        c.model.zz = Some(zz);
        c.model.frame.get_or_insert(Frame::Effective);
    }
    c.model.nnn |= flags.nnn;
    c.sampling.confusion |= flags.confusion;
    c
}

fn main_inner() -> Result<()> {
    let (experiment, flags) = Cli::parse().command.split();
    let base = match &flags.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::empty(),
    };
    let cfg = apply(flags, base).resolve(experiment)?;
    let start = Instant::now();
    let result = experiments::run(&cfg);
    let timing = output::write_timing(&cfg, start.elapsed().as_secs_f64());
    for f in result? {
        println!("wrote {f}");
    }
    timing?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
