//! Experiment configuration: strict TOML parsing, CLI overrides and default
//! resolution.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use floquet_sim::hamiltonian::EffectiveOptions;
use floquet_sim::model::DeviceSpec;
use floquet_sim::propagator::{IntegratorConfig, Method};
use floquet_sim::protocols::{neel_occupations, Butterfly, Model, Reversal, RunOptions};
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    RabiSweep,
    Walk,
    Reverse,
    Otoc,
    Ssh,
    Velocity,
    LongOtoc,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::RabiSweep => "rabi-sweep",
            Experiment::Walk => "walk",
            Experiment::Reverse => "reverse",
            Experiment::Otoc => "otoc",
            Experiment::Ssh => "ssh",
            Experiment::Velocity => "velocity",
            Experiment::LongOtoc => "long-otoc",
        }
    }

    fn default_frame(self) -> Frame {
        match self {
            Experiment::Otoc | Experiment::LongOtoc => Frame::Effective,
            _ => Frame::Lab,
        }
    }

    fn default_t_max(self) -> f64 {
        match self {
            Experiment::RabiSweep => 6000.0,
            Experiment::Ssh => 200.0,
            Experiment::LongOtoc => 2000.0,
            _ => 250.0,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    Lab,
    Effective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ButterflyKind {
    Z,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReversalKind {
    Drive,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FrontKind {
    Walk,
    Otoc,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    /// `paper-10q` or `uniform:<n>:<g>`.
    pub preset: Option<String>,
    /// TOML file with `nn_couplings`, `nnn_couplings` and `anharmonicities`.
    pub file: Option<PathBuf>,
    pub nn_couplings: Option<Vec<f64>>,
    pub nnn_couplings: Option<Vec<f64>>,
    pub anharmonicities: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    pub eps: Option<f64>,
    pub eps_a: Option<f64>,
    pub eps_b: Option<f64>,
    pub nu: f64,
    /// Driven sites for the SSH pattern, all at `eps`.
    pub sites: Option<Vec<usize>>,
    /// Rabi sweep range `eps / nu` in `[0, sweep_max]`.
    pub sweep_max: f64,
    pub sweep_points: usize,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self {
            eps: None,
            eps_a: None,
            eps_b: None,
            nu: 120.0,
            sites: None,
            sweep_max: 4.0,
            sweep_points: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    #[serde(deserialize_with = "levels")]
    pub levels: u8,
    pub frame: Option<Frame>,
    pub nnn: bool,
    pub zz: Option<f64>,
    pub butterfly: ButterflyKind,
    pub butterfly_site: Option<usize>,
    pub reversal: ReversalKind,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            levels: 2,
            frame: None,
            nnn: false,
            zz: None,
            butterfly: ButterflyKind::Z,
            butterfly_site: None,
            reversal: ReversalKind::Drive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub method: Method,
    pub dt: Option<f64>,
    pub sample_interval: Option<f64>,
    pub check_halving: bool,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            method: Method::default(),
            dt: None,
            sample_interval: None,
            check_halving: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub t_max: Option<f64>,
    /// Initial occupations; a single excitation on site 0 by default.
    pub initial: Option<Vec<u8>>,
    /// OTOC echo-time spacing in ns.
    pub time_step: Option<f64>,
    /// Time series for `velocity`.
    pub input: Option<PathBuf>,
    pub front: Option<FrontKind>,
    pub sites: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    pub shots: u64,
    pub seed: u64,
    pub confusion: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// Everything one run needs. After [`ExperimentConfig::resolve`] every
/// default that depends on the experiment is filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub device: DeviceSection,
    #[serde(default)]
    pub drive: DriveSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    /// Not echoed into outputs, so moving a run does not change its files.
    #[serde(default, skip_serializing)]
    pub output: OutputSection,
}

fn levels<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u8, D::Error> {
    let v = i64::deserialize(d)?;
    match v {
        2 | 3 => Ok(v as u8),
        _ => Err(serde::de::Error::custom(format!(
            "levels = {v} is not supported (use 2 or 3)"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceFile {
    nn_couplings: Vec<f64>,
    #[serde(default)]
    nnn_couplings: Option<Vec<f64>>,
    anharmonicities: Vec<f64>,
}

/// Parse config text. Errors carry the line and column of the offending key.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    Ok(toml::from_str(text)?)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

impl ExperimentConfig {
    pub fn empty() -> Self {
        parse_config("").expect("defaults parse")
    }

    /// Canonical text embedded in every output.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn kind(&self) -> Experiment {
        self.experiment
            .expect("resolved config names its experiment")
    }

    /// Fill in every experiment-dependent default and check consistency.
    pub fn resolve(mut self, experiment: Experiment) -> Result<Self> {
        if let Some(e) = self.experiment {
            if e != experiment {
                bail!("config is for `{e}` but `{experiment}` was requested");
            }
        }
        self.experiment = Some(experiment);
        if self.model.levels != 2 && self.model.levels != 3 {
            bail!(
                "levels = {} is not supported (use 2 or 3)",
                self.model.levels
            );
        }
        if experiment == Experiment::Velocity {
            if self.run.input.is_none() {
                bail!("velocity needs an input time series (--input or run.input)");
            }
            self.run.front.get_or_insert(FrontKind::Walk);
            return Ok(self);
        }

        let device = self.resolve_device()?;
        let n = device.n_sites;
        self.device.nn_couplings = Some(device.nn_couplings);
        self.device.nnn_couplings = Some(device.nnn_couplings);
        self.device.anharmonicities = Some(device.anharmonicities);
        self.model.frame.get_or_insert(experiment.default_frame());
        self.run.t_max.get_or_insert(experiment.default_t_max());

        match experiment {
            Experiment::RabiSweep => {
                if self.drive.sweep_points < 2 || !(self.drive.sweep_max > 0.0) {
                    bail!("rabi sweep needs sweep_points >= 2 and sweep_max > 0");
                }
            }
            Experiment::Walk => {
                self.drive.eps.get_or_insert(0.0);
                self.run.initial.get_or_insert_with(|| single(n));
            }
            Experiment::Reverse => {
                self.drive.eps_a.get_or_insert(213.6);
                self.drive.eps_b.get_or_insert(400.0);
                self.run
                    .initial
                    .get_or_insert_with(|| neel_occupations(n, true));
            }
            Experiment::Otoc | Experiment::LongOtoc => {
                self.drive.eps_a.get_or_insert(213.6);
                self.drive.eps_b.get_or_insert(400.0);
                self.run.time_step.get_or_insert(2.0);
                if experiment == Experiment::LongOtoc {
                    self.model.butterfly = ButterflyKind::X;
                }
            }
            Experiment::Ssh => {
                self.drive.eps.get_or_insert(156.0);
                self.drive.sites.get_or_insert_with(|| vec![1, 2, 5, 6, 8]);
            }
            Experiment::Velocity => unreachable!(),
        }
        if self.sampling.shots > 0 && experiment != Experiment::Walk {
            bail!("shot sampling is only supported for `walk`");
        }
        if self.model.zz.is_some() && self.model.frame == Some(Frame::Lab) {
            bail!("the ZZ term exists only in the effective model (use --frame effective)");
        }
        Ok(self)
    }

    fn resolve_device(&self) -> Result<DeviceSpec> {
        let d = &self.device;
        let levels = self.model.levels;
        let base = match (&d.preset, &d.file) {
            (Some(_), Some(_)) => bail!("device.preset and device.file are mutually exclusive"),
            (Some(p), None) => Some(preset(p, levels)?),
            (None, Some(f)) => {
                let text = std::fs::read_to_string(f)
                    .with_context(|| format!("reading device file {}", f.display()))?;
                let df: DeviceFile = toml::from_str(&text)
                    .with_context(|| format!("in device file {}", f.display()))?;
                let nnn = df
                    .nnn_couplings
                    .unwrap_or_else(|| vec![0.0; df.anharmonicities.len().saturating_sub(2)]);
                Some(DeviceSpec::new(
                    df.nn_couplings,
                    nnn,
                    df.anharmonicities,
                    levels,
                )?)
            }
            (None, None) => None,
        };
        let inline = d.nn_couplings.is_some() || d.anharmonicities.is_some();
        let mut device = match (base, inline) {
            (Some(b), false) => b,
            (Some(b), true) => DeviceSpec::new(
                d.nn_couplings.clone().unwrap_or(b.nn_couplings),
                d.nnn_couplings.clone().unwrap_or(b.nnn_couplings),
                d.anharmonicities.clone().unwrap_or(b.anharmonicities),
                levels,
            )?,
            (None, true) => {
                let (Some(nn), Some(u)) = (&d.nn_couplings, &d.anharmonicities) else {
                    bail!("an inline device needs nn_couplings and anharmonicities");
                };
                let nnn = d
                    .nnn_couplings
                    .clone()
                    .unwrap_or_else(|| vec![0.0; u.len().saturating_sub(2)]);
                DeviceSpec::new(nn.clone(), nnn, u.clone(), levels)?
            }
            (None, false) => DeviceSpec::paper_10q(levels),
        };
        if !self.model.nnn {
            device = device.without_nnn();
        }
        Ok(device)
    }

    /// The device with the model's level count and NNN choice applied.
    pub fn device_spec(&self) -> Result<DeviceSpec> {
        let d = &self.device;
        let (Some(nn), Some(nnn), Some(u)) =
            (&d.nn_couplings, &d.nnn_couplings, &d.anharmonicities)
        else {
            bail!("device is not resolved");
        };
        Ok(DeviceSpec::new(
            nn.clone(),
            nnn.clone(),
            u.clone(),
            self.model.levels,
        )?)
    }

    pub fn model(&self) -> Model {
        match self.model.frame {
            Some(Frame::Effective) => Model::Effective(EffectiveOptions {
                include_nnn: self.model.nnn,
                zz: self.model.zz,
            }),
            _ => Model::Lab,
        }
    }

    pub fn butterfly(&self) -> Butterfly {
        match self.model.butterfly {
            ButterflyKind::Z => Butterfly::Z,
            ButterflyKind::X => Butterfly::X,
        }
    }

    pub fn reversal(&self) -> Reversal {
        match self.model.reversal {
            ReversalKind::Drive => Reversal::Drive,
            ReversalKind::Exact => Reversal::ExactNegation,
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            method: self.integrator.method,
            dt: self.integrator.dt,
            sample_interval: self.integrator.sample_interval,
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            integrator: self.integrator(),
            check_halving: self.integrator.check_halving,
        }
    }

    pub fn t_max(&self) -> f64 {
        self.run.t_max.expect("resolved")
    }
}

fn single(n: usize) -> Vec<u8> {
    let mut v = vec![0; n];
    v[0] = 1;
    v
}

/// `paper-10q` or `uniform:<n>:<g>`.
pub fn preset(name: &str, levels: u8) -> Result<DeviceSpec> {
    if name == "paper-10q" {
        return Ok(DeviceSpec::paper_10q(levels));
    }
    if let Some(rest) = name.strip_prefix("uniform:") {
        let (n, g) = rest
            .split_once(':')
            .with_context(|| format!("expected uniform:<n>:<g>, got `{name}`"))?;
        let n: usize = n.parse().with_context(|| format!("bad site count `{n}`"))?;
        let g: f64 = g.parse().with_context(|| format!("bad coupling `{g}`"))?;
        return Ok(DeviceSpec::uniform(n, g, levels)?);
    }
    bail!("unknown device `{name}` (use paper-10q or uniform:<n>:<g>)")
}
