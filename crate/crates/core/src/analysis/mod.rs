//! Data reduction: spectral peaks, fits, front times, velocities, readout
//! calibration and recurrence detection.

pub mod fit;
pub mod front;
pub mod readout;
pub mod recurrence;
pub mod spectral;

pub use fit::{
    bessel_scale_fit, fit_gaussian, fit_polynomial, levenberg_marquardt, FitResult, LmOptions,
    PolynomialFit,
};
pub use front::{
    fit_velocity, fit_velocity_with, front_times, FrontMode, FrontPoint, FrontReport, VelocityFit,
    Weighting,
};
pub use readout::{
    calibrate_counts, calibrate_distribution, calibrated_linear_sigma, outcome_distribution,
    post_select, sample_shots, sector_weight, CalibratedMarginals, ConfusionModel, Counts,
};
pub use recurrence::{find_recurrence, grid_autocorrelation, Recurrence};
pub use spectral::{dominant_frequency, SpectralPeak};
