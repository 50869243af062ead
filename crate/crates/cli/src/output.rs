//! Result files. Every CSV and JSON file starts with the tool version, the
//! canonical config and the integrator settings; runtimes go to a separate
//! `timing.json` so result files are byte-identical across runs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use floquet_sim::series::TimeSeries;
use serde::Serialize;

use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Schema version of the CSV and JSON layouts.
pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct IntegratorInfo {
    pub method: String,
    /// Step actually used in ns; `None` when propagation is exact.
    pub dt: Option<f64>,
    pub sample_interval: Option<f64>,
    pub check_halving: bool,
}

impl IntegratorInfo {
    fn line(&self) -> String {
        let opt = |x: Option<f64>| x.map_or("exact".to_string(), |v| v.to_string());
        format!(
            "method={} dt={} sample_interval={} check_halving={}",
            self.method,
            opt(self.dt),
            self.sample_interval
                .map_or("none".to_string(), |v| v.to_string()),
            self.check_halving
        )
    }
}

pub struct Writer {
    dir: PathBuf,
    config: String,
    experiment: String,
    integrator: IntegratorInfo,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    schema: u32,
    experiment: &'a str,
    config: &'a str,
    integrator: &'a IntegratorInfo,
    result: &'a T,
}

impl Writer {
    pub fn new(config: &ExperimentConfig, integrator: IntegratorInfo) -> Result<Self> {
        let dir = config.output.dir.clone();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            config: config.canonical(),
            experiment: config.kind().name().to_string(),
            integrator,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn header(&self) -> String {
        let mut h = format!(
            "# floquet {VERSION} schema {SCHEMA}\n# experiment: {}\n# integrator: {}\n# config:\n",
            self.experiment,
            self.integrator.line()
        );
        for line in self.config.lines() {
            if line.is_empty() {
                h.push_str("#\n");
            } else {
                h.push_str(&format!("#   {line}\n"));
            }
        }
        h
    }

    /// Long-format `time_ns,site,value`.
    pub fn series_csv(&self, name: &str, series: &TimeSeries) -> Result<PathBuf> {
        let mut text = self.header();
        text.push_str("time_ns,site,value\n");
        for (t, j, v) in series.rows() {
            text.push_str(&format!("{t},{j},{v}\n"));
        }
        self.write(name, text.as_bytes())
    }

    pub fn summary_json<T: Serialize>(&self, name: &str, result: &T) -> Result<PathBuf> {
        let env = Envelope {
            tool: "floquet",
            version: VERSION,
            schema: SCHEMA,
            experiment: &self.experiment,
            config: &self.config,
            integrator: &self.integrator,
            result,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        write_file(&self.path(name), bytes)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    let mut f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    f.write_all(bytes)?;
    Ok(path.to_path_buf())
}

/// Wall-clock runtime, kept apart from the result files.
pub fn write_timing(config: &ExperimentConfig, seconds: f64) -> Result<PathBuf> {
    let dir = &config.output.dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut text = serde_json::to_string_pretty(&serde_json::json!({
        "experiment": config.kind().name(),
        "wall_clock_s": seconds,
    }))?;
    text.push('\n');
    write_file(&dir.join("timing.json"), text.as_bytes())
}

/// Read a `time_ns,site,value` file, skipping `#` lines and the header.
pub fn read_series_csv(path: &Path) -> Result<TimeSeries> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "time_ns,site,value" {
            continue;
        }
        let mut f = line.split(',');
        let (Some(t), Some(j), Some(v), None) = (f.next(), f.next(), f.next(), f.next()) else {
            anyhow::bail!("{}:{}: expected time_ns,site,value", path.display(), k + 1);
        };
        let parse = || -> Result<(f64, usize, f64)> {
            Ok((t.trim().parse()?, j.trim().parse()?, v.trim().parse()?))
        };
        rows.push(parse().with_context(|| format!("{}:{}: bad number", path.display(), k + 1))?);
    }
    Ok(TimeSeries::from_rows(&rows)?)
}
