//! Near-periodicity of a (time x site) grid.

use crate::error::{Error, Result};

/// Correlation below which the grid counts as having decorrelated from itself.
const DECORRELATED: f64 = 0.5;

/// Pearson correlation between the grid and itself shifted by `lag` rows,
/// pooling all sites.
pub fn grid_autocorrelation(grid: &[Vec<f64>], lag: usize) -> f64 {
    let n = grid.len();
    if lag >= n {
        return f64::NAN;
    }
    let a: Vec<f64> = grid[..n - lag].iter().flatten().copied().collect();
    let b: Vec<f64> = grid[lag..].iter().flatten().copied().collect();
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Recurrence {
    pub lag_index: usize,
    /// Lag in ns.
    pub lag: f64,
    pub correlation: f64,
}

/// Strongest return of the grid onto itself: the largest autocorrelation at
/// lags after it first drops below 0.5, up to half the record.
pub fn find_recurrence(times: &[f64], grid: &[Vec<f64>]) -> Result<Recurrence> {
    let n = grid.len();
    if n < 8 || times.len() != n {
        return Err(Error::InvalidInput(
            "need at least eight rows with matching times".into(),
        ));
    }
    let r: Vec<f64> = (0..=n / 2).map(|l| grid_autocorrelation(grid, l)).collect();
    let drop = r.iter().position(|v| *v < DECORRELATED).ok_or_else(|| {
        Error::InvalidInput("grid never decorrelates within half the record".into())
    })?;
    let (k, c) = r[drop..]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, c)| (k + drop, *c))
        .unwrap();
    Ok(Recurrence {
        lag_index: k,
        lag: times[k] - times[0],
        correlation: c,
    })
}
