//! Site-resolved observables on a time grid.

use serde::Serialize;

use crate::error::{Error, Result};

/// `values[k][j]` is the observable on site `j` at `times[k]` (ns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} times but {} rows of values",
                times.len(),
                values.len()
            )));
        }
        if let Some(first) = values.first() {
            if values.iter().any(|r| r.len() != first.len()) {
                return Err(Error::InvalidInput("rows differ in site count".into()));
            }
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "times must be strictly increasing".into(),
            ));
        }
        Ok(Self { times, values })
    }

    pub fn empty() -> Self {
        Self {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_sites(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// The trace of one site.
    pub fn site(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    pub(crate) fn push(&mut self, t: f64, row: Vec<f64>) {
        self.times.push(t);
        self.values.push(row);
    }

    /// Linear interpolation of site `j` at time `t`, clamped to the ends.
    pub fn interpolate(&self, j: usize, t: f64) -> f64 {
        let ts = &self.times;
        if t <= ts[0] {
            return self.values[0][j];
        }
        if t >= ts[ts.len() - 1] {
            return self.values[ts.len() - 1][j];
        }
        let k = ts.partition_point(|x| *x <= t);
        let (t0, t1) = (ts[k - 1], ts[k]);
        let w = (t - t0) / (t1 - t0);
        self.values[k - 1][j] * (1.0 - w) + self.values[k][j] * w
    }

    /// Long-format rows `(time, site, value)`.
    pub fn rows(&self) -> impl Iterator<Item = (f64, usize, f64)> + '_ {
        self.times
            .iter()
            .zip(&self.values)
            .flat_map(|(t, row)| row.iter().enumerate().map(move |(j, v)| (*t, j, *v)))
    }

    /// Rebuild from long-format rows; sites are numbered densely from 0.
    pub fn from_rows(rows: &[(f64, usize, f64)]) -> Result<Self> {
        let n_sites = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let mut times: Vec<f64> = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        let mut seen: Vec<Vec<bool>> = Vec::new();
        let mut sorted = rows.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (t, j, v) in sorted {
            if times.last() != Some(&t) {
                times.push(t);
                values.push(vec![f64::NAN; n_sites]);
                seen.push(vec![false; n_sites]);
            }
            let k = times.len() - 1;
            if seen[k][j] {
                return Err(Error::InvalidInput(format!(
                    "duplicate entry for site {j} at t = {t}"
                )));
            }
            seen[k][j] = true;
            values[k][j] = v;
        }
        if seen.iter().flatten().any(|s| !s) {
            return Err(Error::InvalidInput(
                "every time needs a value for every site".into(),
            ));
        }
        Self::new(times, values)
    }
}
