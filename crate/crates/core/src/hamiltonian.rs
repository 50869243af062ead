//! Lab-frame Bose-Hubbard, Floquet effective XY and SSH Hamiltonians.
//!
//! Inputs are linear frequencies in MHz. Every builder multiplies by
//! [`ANGULAR`] exactly once, so the stored matrices are in rad/ns and the
//! propagators can use `exp(-i H t)` with `t` in ns directly.
//!
//! The effective model renormalises next-nearest-neighbour bonds with
//! `J0((eps_j - eps_{j+2}) / nu)`. That extends the nearest-neighbour rule to
//! second neighbours and is an approximation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::bessel::bessel_j0;
use crate::error::{Error, Result};
use crate::model::{DeviceSpec, DrivePattern, FockBasis, OperatorMatrix};

/// Conversion from linear MHz to angular rad/ns.
pub const ANGULAR: f64 = 2.0 * PI * 1e-3;

/// Default ZZ strength in MHz.
pub const DEFAULT_ZZ: f64 = 0.065;

/// Anything the propagators can step: `H(t)` applied to a vector, in rad/ns.
pub trait Hamiltonian: Sync {
    fn basis(&self) -> &Arc<FockBasis>;

    /// `out = H(t) x`.
    fn apply_at(&self, t: f64, x: &[Complex64], out: &mut [Complex64]);

    /// Upper bound on `||H(t)||_2` valid for every `t`.
    fn norm_bound(&self) -> f64;

    /// Floquet period in ns when the Hamiltonian is time dependent.
    fn period(&self) -> Option<f64>;

    /// `out = (w1 H(t1) + w2 H(t2)) x`, with `scratch` as long as `x`.
    fn apply_mix(
        &self,
        (t1, w1): (f64, f64),
        (t2, w2): (f64, f64),
        x: &[Complex64],
        out: &mut [Complex64],
        scratch: &mut [Complex64],
    ) {
        self.apply_at(t1, x, out);
        self.apply_at(t2, x, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o = *o * w1 + *s * w2;
        }
    }
}

/// `g J0((eps_left - eps_right) / nu)`, all in MHz.
pub fn effective_coupling(g: f64, eps_left: f64, eps_right: f64, nu: f64) -> f64 {
    g * bessel_j0((eps_left - eps_right) / nu)
}

const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;
const J0_SECOND_ZERO: f64 = 5.520_078_110_286_311;
/// First zero of `J1`, where `J0` has its first minimum.
const J0_FIRST_MIN: f64 = 3.831_705_970_207_512;

/// Amplitude `eps_b` with `J0(eps_b / nu) = -J0(eps_a / nu)`, taken from the
/// side of the first negative lobe of `J0` that is nearer to `near`.
pub fn reversal_amplitude(eps_a: f64, nu: f64, near: f64) -> Result<f64> {
    let target = -bessel_j0(eps_a / nu);
    if !(bessel_j0(J0_FIRST_MIN)..=0.0).contains(&target) {
        return Err(Error::InvalidDrive(format!(
            "J0({:.4}) = {:.4} has no sign-flipped partner in the first negative lobe",
            eps_a / nu,
            -target
        )));
    }
    let (mut lo, mut hi) = if near / nu <= J0_FIRST_MIN {
        (J0_FIRST_ZERO, J0_FIRST_MIN)
    } else {
        (J0_FIRST_MIN, J0_SECOND_ZERO)
    };
    let f = |x: f64| bessel_j0(x) - target;
    let f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) * nu)
}

fn check_sites(basis: &FockBasis, device: &DeviceSpec, drive: &DrivePattern) -> Result<()> {
    device.validate()?;
    drive.validate()?;
    if device.n_sites != drive.n_sites() {
        return Err(Error::InvalidDrive(format!(
            "drive has {} amplitudes for a {}-site device",
            drive.n_sites(),
            device.n_sites
        )));
    }
    if basis.n_sites() != device.n_sites {
        return Err(Error::InvalidBasis(format!(
            "basis has {} sites, device has {}",
            basis.n_sites(),
            device.n_sites
        )));
    }
    Ok(())
}

/// Triplets of `g (a+_i a_j + a+_j a_i)` with bosonic matrix elements.
fn push_hopping(
    basis: &FockBasis,
    i: usize,
    j: usize,
    g: f64,
    t: &mut Vec<(usize, usize, Complex64)>,
) {
    if g == 0.0 {
        return;
    }
    let d = basis.levels();
    let (pi, pj) = (basis.power(i), basis.power(j));
    for k in 0..basis.dim() {
        let (oi, oj) = (basis.occupation(k, i), basis.occupation(k, j));
        let code = basis.code(k);
        // a+_i a_j
        if oj > 0 && oi + 1 < d {
            let amp = g * ((oj as f64) * (oi as f64 + 1.0)).sqrt();
            if let Some(to) = basis.index_of_code(code + pi - pj) {
                t.push((to, k, Complex64::new(amp, 0.0)));
            }
        }
        // a+_j a_i
        if oi > 0 && oj + 1 < d {
            let amp = g * ((oi as f64) * (oj as f64 + 1.0)).sqrt();
            if let Some(to) = basis.index_of_code(code + pj - pi) {
                t.push((to, k, Complex64::new(amp, 0.0)));
            }
        }
    }
}

/// `H(t) = H_static + cos(nu t) sum_j eps_j n_j`, stored in rad/ns.
#[derive(Debug, Clone)]
pub struct LabHamiltonian {
    static_part: OperatorMatrix,
    /// `sum_j eps_j n_j` on every basis state (rad/ns).
    drive_diagonal: Vec<f64>,
    amplitudes: Vec<f64>,
    drive_frequency: f64,
    static_norm: f64,
    drive_norm: f64,
}

impl LabHamiltonian {
    pub fn static_part(&self) -> &OperatorMatrix {
        &self.static_part
    }

    /// Drive amplitudes in MHz, one per site.
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// Linear drive frequency in MHz.
    pub fn drive_frequency(&self) -> f64 {
        self.drive_frequency
    }

    pub fn is_driven(&self) -> bool {
        self.amplitudes.iter().any(|a| *a != 0.0)
    }

    /// `cos(nu t)` with `t` reduced modulo the period first, so that
    /// `t` and `t + T` give the same value.
    fn modulation(&self, t: f64) -> f64 {
        let period = 1e3 / self.drive_frequency;
        let phase = t.rem_euclid(period) / period;
        (2.0 * PI * phase).cos()
    }

    /// The full matrix `H(t)`.
    pub fn evaluate_at(&self, t: f64) -> OperatorMatrix {
        let c = self.modulation(t);
        let basis = self.static_part.basis().clone();
        let drive: Vec<f64> = self.drive_diagonal.iter().map(|d| d * c).collect();
        let diag = OperatorMatrix::diagonal(basis, &drive);
        self.static_part
            .add_scaled(1.0, &diag, 1.0)
            .expect("same basis by construction")
    }
}

impl Hamiltonian for LabHamiltonian {
    fn basis(&self) -> &Arc<FockBasis> {
        self.static_part.basis()
    }

    fn apply_at(&self, t: f64, x: &[Complex64], out: &mut [Complex64]) {
        self.static_part.apply_into(x, out);
        if self.is_driven() {
            let c = self.modulation(t);
            for ((o, xi), d) in out.iter_mut().zip(x).zip(&self.drive_diagonal) {
                *o += xi * (d * c);
            }
        }
    }

    fn norm_bound(&self) -> f64 {
        self.static_norm + self.drive_norm
    }

    fn apply_mix(
        &self,
        (t1, w1): (f64, f64),
        (t2, w2): (f64, f64),
        x: &[Complex64],
        out: &mut [Complex64],
        _scratch: &mut [Complex64],
    ) {
        self.static_part.apply_into(x, out);
        let c = if self.is_driven() {
            w1 * self.modulation(t1) + w2 * self.modulation(t2)
        } else {
            0.0
        };
        let w = w1 + w2;
        for ((o, xi), d) in out.iter_mut().zip(x).zip(&self.drive_diagonal) {
            *o = *o * w + xi * (d * c);
        }
    }

    fn period(&self) -> Option<f64> {
        self.is_driven().then(|| 1e3 / self.drive_frequency)
    }
}

/// Build the driven Bose-Hubbard Hamiltonian on `basis`.
///
/// Nearest-neighbour hopping is always present; next-nearest-neighbour hopping
/// enters for every nonzero entry of `device.nnn_couplings`; the on-site
/// `U_j/2 n (n - 1)` term only matters for three levels.
pub fn build_lab_hamiltonian(
    basis: &Arc<FockBasis>,
    device: &DeviceSpec,
    drive: &DrivePattern,
) -> Result<LabHamiltonian> {
    check_sites(basis, device, drive)?;
    if basis.levels() != device.levels {
        return Err(Error::InvalidBasis(format!(
            "basis has {} levels, device has {}",
            basis.levels(),
            device.levels
        )));
    }
    let n = device.n_sites;
    let mut t = Vec::new();
    for j in 0..n - 1 {
        push_hopping(basis, j, j + 1, ANGULAR * device.nn_couplings[j], &mut t);
    }
    for j in 0..n.saturating_sub(2) {
        push_hopping(basis, j, j + 2, ANGULAR * device.nnn_couplings[j], &mut t);
    }
    if basis.levels() > 2 {
        for k in 0..basis.dim() {
            let e: f64 = (0..n)
                .map(|s| {
                    let o = basis.occupation(k, s) as f64;
                    0.5 * device.anharmonicities[s] * o * (o - 1.0)
                })
                .sum();
            if e != 0.0 {
                t.push((k, k, Complex64::new(ANGULAR * e, 0.0)));
            }
        }
    }
    let static_part = OperatorMatrix::from_triplets(basis.clone(), t);
    let drive_diagonal: Vec<f64> = (0..basis.dim())
        .map(|k| {
            (0..n)
                .map(|s| ANGULAR * drive.amplitudes[s] * basis.occupation(k, s) as f64)
                .sum()
        })
        .collect();
    let static_norm = static_part.one_norm();
    let drive_norm = drive_diagonal.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(LabHamiltonian {
        static_part,
        drive_diagonal,
        amplitudes: drive.amplitudes.clone(),
        drive_frequency: drive.drive_frequency,
        static_norm,
        drive_norm,
    })
}

/// Which corrections enter the effective spin model.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EffectiveOptions {
    pub include_nnn: bool,
    /// ZZ strength in MHz; `None` leaves the term out.
    pub zz: Option<f64>,
}

/// Time-independent XY chain with Bessel-renormalised couplings.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    matrix: OperatorMatrix,
    nn_couplings: Vec<f64>,
    nnn_couplings: Vec<f64>,
    options: EffectiveOptions,
    norm: f64,
}

impl EffectiveHamiltonian {
    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }

    /// Effective nearest-neighbour couplings in MHz (signed).
    pub fn nn_couplings(&self) -> &[f64] {
        &self.nn_couplings
    }

    /// Effective next-nearest-neighbour couplings in MHz; zeros when disabled.
    pub fn nnn_couplings(&self) -> &[f64] {
        &self.nnn_couplings
    }

    pub fn options(&self) -> EffectiveOptions {
        self.options
    }

    /// Intracell bonds `(0,1), (2,3), ...` of the SSH reading.
    pub fn intracell_couplings(&self) -> Vec<f64> {
        self.nn_couplings.iter().step_by(2).copied().collect()
    }

    /// Intercell bonds `(1,2), (3,4), ...` of the SSH reading.
    pub fn intercell_couplings(&self) -> Vec<f64> {
        self.nn_couplings
            .iter()
            .skip(1)
            .step_by(2)
            .copied()
            .collect()
    }

    /// `H -> -H`, the exact time reversal used by reference runs.
    pub fn negated(&self) -> Self {
        let zero = OperatorMatrix::from_triplets(self.matrix.basis().clone(), Vec::new());
        Self {
            matrix: self
                .matrix
                .add_scaled(-1.0, &zero, 0.0)
                .expect("same basis"),
            nn_couplings: self.nn_couplings.iter().map(|g| -g).collect(),
            nnn_couplings: self.nnn_couplings.iter().map(|g| -g).collect(),
            options: EffectiveOptions {
                zz: self.options.zz.map(|z| -z),
                ..self.options
            },
            norm: self.norm,
        }
    }
}

impl Hamiltonian for EffectiveHamiltonian {
    fn basis(&self) -> &Arc<FockBasis> {
        self.matrix.basis()
    }

    fn apply_at(&self, _t: f64, x: &[Complex64], out: &mut [Complex64]) {
        self.matrix.apply_into(x, out);
    }

    fn norm_bound(&self) -> f64 {
        self.norm
    }

    fn period(&self) -> Option<f64> {
        None
    }
}

/// Effective model `sum g_eff (s+ s- + h.c.)` with optional NNN hopping and
/// ZZ term `-(zz/2) sum (1 + sz_j sz_{j+1})`. Requires a two-level basis.
pub fn build_effective_hamiltonian(
    basis: &Arc<FockBasis>,
    device: &DeviceSpec,
    drive: &DrivePattern,
    options: EffectiveOptions,
) -> Result<EffectiveHamiltonian> {
    check_sites(basis, device, drive)?;
    if basis.levels() != 2 {
        return Err(Error::Unsupported(
            "the effective model is a two-level spin model".into(),
        ));
    }
    let n = device.n_sites;
    let eps = &drive.amplitudes;
    let nu = drive.drive_frequency;
    let nn: Vec<f64> = (0..n - 1)
        .map(|j| effective_coupling(device.nn_couplings[j], eps[j], eps[j + 1], nu))
        .collect();
    let nnn: Vec<f64> = (0..n.saturating_sub(2))
        .map(|j| {
            if options.include_nnn {
                effective_coupling(device.nnn_couplings[j], eps[j], eps[j + 2], nu)
            } else {
                0.0
            }
        })
        .collect();
    let mut t = Vec::new();
    for (j, g) in nn.iter().enumerate() {
        push_hopping(basis, j, j + 1, ANGULAR * g, &mut t);
    }
    for (j, g) in nnn.iter().enumerate() {
        push_hopping(basis, j, j + 2, ANGULAR * g, &mut t);
    }
    if let Some(zz) = options.zz {
        for k in 0..basis.dim() {
            let sz = |s: usize| 2.0 * basis.occupation(k, s) as f64 - 1.0;
            let e: f64 = (0..n - 1)
                .map(|j| -0.5 * zz * (1.0 + sz(j) * sz(j + 1)))
                .sum();
            if e != 0.0 {
                t.push((k, k, Complex64::new(ANGULAR * e, 0.0)));
            }
        }
    }
    let matrix = OperatorMatrix::from_triplets(basis.clone(), t);
    let norm = matrix.one_norm();
    Ok(EffectiveHamiltonian {
        matrix,
        nn_couplings: nn,
        nnn_couplings: nnn,
        options,
        norm,
    })
}

/// The SSH chain: the nearest-neighbour effective model read as alternating
/// intracell and intercell bonds. Needs an even number of sites.
pub fn build_ssh_hamiltonian(
    basis: &Arc<FockBasis>,
    device: &DeviceSpec,
    drive: &DrivePattern,
) -> Result<EffectiveHamiltonian> {
    if !device.n_sites.is_multiple_of(2) {
        return Err(Error::InvalidDevice(format!(
            "SSH chain needs an even number of sites, got {}",
            device.n_sites
        )));
    }
    build_effective_hamiltonian(basis, device, drive, EffectiveOptions::default())
}
