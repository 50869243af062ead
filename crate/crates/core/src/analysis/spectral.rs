//! Dominant-frequency estimation for uniformly sampled signals.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Zero-padding factor applied on top of the next power of two.
const PADDING: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SpectralPeak {
    /// Linear frequency in MHz (times are in ns).
    pub frequency: f64,
    /// False when the peak does not stand above three times the median bin.
    pub confident: bool,
    /// Peak magnitude over the median bin magnitude.
    pub peak_ratio: f64,
}

/// Peak of the Hann-windowed, zero-padded magnitude spectrum after removing
/// the mean, refined by a parabola through the three bins around it.
pub fn dominant_frequency(times: &[f64], values: &[f64]) -> Result<SpectralPeak> {
    let n = times.len();
    if n < 16 || values.len() != n {
        return Err(Error::InvalidInput(format!(
            "need at least 16 paired samples, got {n}"
        )));
    }
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0)
        || times
            .windows(2)
            .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt)
    {
        return Err(Error::InvalidInput(
            "samples must be uniformly spaced".into(),
        ));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let spread = values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let flat = SpectralPeak {
        frequency: 0.0,
        confident: false,
        peak_ratio: 0.0,
    };
    if spread < 1e-12 {
        return Ok(flat);
    }
    let len = n.next_power_of_two() * PADDING;
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (k, v) in values.iter().enumerate() {
        let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
        buf[k] = Complex64::new((v - mean) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    let mag: Vec<f64> = buf[..=half].iter().map(|z| z.norm()).collect();
    let (k, &peak) = mag
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let mut sorted = mag.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let ratio = if median > 0.0 {
        peak / median
    } else {
        f64::INFINITY
    };
    if ratio <= 3.0 {
        return Ok(SpectralPeak {
            peak_ratio: ratio,
            ..flat
        });
    }
    // The spectrum of a real signal is even, so bin -1 mirrors bin 1.
    let left = if k == 0 { mag[1] } else { mag[k - 1] };
    let right = if k == half { mag[half - 1] } else { mag[k + 1] };
    let denom = left - 2.0 * peak + right;
    let shift = if denom != 0.0 {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let bin = (k as f64 + shift).abs();
    Ok(SpectralPeak {
        frequency: bin * 1e3 / (len as f64 * dt),
        confident: true,
        peak_ratio: ratio,
    })
}
