//! Chain description, truncated occupation basis, states and site-local operators.
//!
//! Sites are indexed from 0 in the API. Basis states are ordered
//! lexicographically with site 0 as the most significant digit, so for two
//! sites and two levels the order is `00, 01, 10, 11`.
//!
//! Pauli operators act on the two lowest levels with the convention
//! `sz = diag(-1, +1)` in occupation order, so `<sz> = 2 P - 1`. Level 2, when
//! present, is annihilated by every Pauli kind; [`SiteOpKind::SigmaX`] is the
//! three-level replacement that keeps level 2 with weight `eta`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest Hilbert-space dimension any basis may have.
pub const MAX_DIMENSION: usize = 10_000_000;

/// Matrix-vector products switch to rayon above this dimension.
const PARALLEL_DIM: usize = 16_384;

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Static description of the qubit chain. Frequencies are linear, in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub n_sites: usize,
    /// `g_{j,j+1}`, length `n_sites - 1`.
    pub nn_couplings: Vec<f64>,
    /// `g_{j,j+2}`, length `n_sites - 2`.
    pub nnn_couplings: Vec<f64>,
    /// `U_j`, length `n_sites`; negative for transmons, ignored when `levels == 2`.
    pub anharmonicities: Vec<f64>,
    pub levels: u8,
}

impl DeviceSpec {
    pub fn new(
        nn_couplings: Vec<f64>,
        nnn_couplings: Vec<f64>,
        anharmonicities: Vec<f64>,
        levels: u8,
    ) -> Result<Self> {
        let n_sites = anharmonicities.len();
        let spec = Self {
            n_sites,
            nn_couplings,
            nnn_couplings,
            anharmonicities,
            levels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_sites;
        if n < 2 {
            return Err(Error::InvalidDevice(format!(
                "need at least 2 sites, got {n}"
            )));
        }
        if !(2..=3).contains(&self.levels) {
            return Err(Error::InvalidDevice(format!(
                "levels must be 2 or 3, got {}",
                self.levels
            )));
        }
        if self.nn_couplings.len() != n - 1 {
            return Err(Error::InvalidDevice(format!(
                "expected {} nearest-neighbour couplings, got {}",
                n - 1,
                self.nn_couplings.len()
            )));
        }
        if self.nnn_couplings.len() != n - 2 {
            return Err(Error::InvalidDevice(format!(
                "expected {} next-nearest-neighbour couplings, got {}",
                n - 2,
                self.nnn_couplings.len()
            )));
        }
        if self.anharmonicities.len() != n {
            return Err(Error::InvalidDevice(format!(
                "expected {n} anharmonicities, got {}",
                self.anharmonicities.len()
            )));
        }
        if let Some(g) = self
            .nn_couplings
            .iter()
            .find(|g| !(g.is_finite() && **g > 0.0))
        {
            return Err(Error::InvalidDevice(format!(
                "nearest-neighbour coupling {g} must be positive"
            )));
        }
        if self
            .nnn_couplings
            .iter()
            .chain(&self.anharmonicities)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidDevice(
                "non-finite coupling or anharmonicity".into(),
            ));
        }
        Ok(())
    }

    /// The measured 10-qubit device (couplings, NNN couplings, anharmonicities).
    pub fn paper_10q(levels: u8) -> Self {
        Self {
            n_sites: 10,
            nn_couplings: vec![
                10.72, 10.73, 10.99, 11.05, 10.88, 10.48, 10.86, 10.79, 10.78,
            ],
            nnn_couplings: vec![0.98, 0.49, 0.96, 0.49, 0.96, 0.49, 0.97, 0.48],
            anharmonicities: vec![
                -212.0, -264.0, -210.0, -268.0, -212.0, -268.0, -214.0, -264.0, -214.0, -264.0,
            ],
            levels,
        }
    }

    /// Homogeneous chain with coupling `g` and no NNN coupling.
    pub fn uniform(n_sites: usize, g: f64, levels: u8) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::InvalidDevice(format!(
                "need at least 2 sites, got {n_sites}"
            )));
        }
        Self::new(
            vec![g; n_sites - 1],
            vec![0.0; n_sites - 2],
            vec![-250.0; n_sites],
            levels,
        )
    }

    pub fn without_nnn(&self) -> Self {
        Self {
            nnn_couplings: vec![0.0; self.nnn_couplings.len()],
            ..self.clone()
        }
    }

    pub fn with_levels(&self, levels: u8) -> Self {
        Self {
            levels,
            ..self.clone()
        }
    }

    /// First `n` sites of the chain.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n < 2 || n > self.n_sites {
            return Err(Error::InvalidDevice(format!(
                "cannot truncate {} sites to {n}",
                self.n_sites
            )));
        }
        Self::new(
            self.nn_couplings[..n - 1].to_vec(),
            self.nnn_couplings[..n - 2].to_vec(),
            self.anharmonicities[..n].to_vec(),
            self.levels,
        )
    }

    pub fn has_nnn(&self) -> bool {
        self.nnn_couplings.iter().any(|g| *g != 0.0)
    }
}

/// Per-site Floquet drive `w_j(t) = eps_j cos(nu t)`. A negative amplitude
/// encodes drive phase pi.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivePattern {
    pub amplitudes: Vec<f64>,
    /// Linear drive frequency in MHz.
    pub drive_frequency: f64,
}

impl DrivePattern {
    pub fn new(amplitudes: Vec<f64>, drive_frequency: f64) -> Result<Self> {
        let d = Self {
            amplitudes,
            drive_frequency,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.drive_frequency.is_finite() && self.drive_frequency > 0.0) {
            return Err(Error::InvalidDrive(format!(
                "drive frequency must be positive, got {}",
                self.drive_frequency
            )));
        }
        if self.amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidDrive("non-finite amplitude".into()));
        }
        Ok(())
    }

    pub fn undriven(n_sites: usize, drive_frequency: f64) -> Self {
        Self {
            amplitudes: vec![0.0; n_sites],
            drive_frequency,
        }
    }

    /// Drive the even-indexed sites (qubits 1, 3, 5, ... counting from one)
    /// with alternating sign: `+eps, -eps, +eps, ...`. Every bond then sees an
    /// amplitude difference of `eps`.
    pub fn staggered(n_sites: usize, eps: f64, drive_frequency: f64) -> Self {
        let amplitudes = (0..n_sites)
            .map(|j| match j % 4 {
                0 => eps,
                2 => -eps,
                _ => 0.0,
            })
            .collect();
        Self {
            amplitudes,
            drive_frequency,
        }
    }

    /// Drive the listed sites with the same amplitude `eps`.
    pub fn on_sites(
        n_sites: usize,
        sites: &[usize],
        eps: f64,
        drive_frequency: f64,
    ) -> Result<Self> {
        let mut amplitudes = vec![0.0; n_sites];
        for &s in sites {
            if s >= n_sites {
                return Err(Error::SiteOutOfRange { site: s, n_sites });
            }
            amplitudes[s] = eps;
        }
        Self::new(amplitudes, drive_frequency)
    }

    /// Floquet period in ns.
    pub fn period(&self) -> f64 {
        1e3 / self.drive_frequency
    }

    pub fn is_driven(&self) -> bool {
        self.amplitudes.iter().any(|a| *a != 0.0)
    }

    pub fn n_sites(&self) -> usize {
        self.amplitudes.len()
    }
}

/// Instantaneous single-site gates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    /// Bit flip on levels 0/1; level 2 untouched.
    X,
    /// Phase flip `exp(i pi n)`.
    Z,
    /// Rotation by pi/2 about y on levels 0/1: `|0> -> (|0> + |1>)/sqrt 2`.
    YHalfPi,
    /// The three-level bit flip with `eta` on level 2 (`eta` must be +-1 to be unitary).
    SigmaX(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedGate {
    pub time: f64,
    pub site: usize,
    pub gate: GateKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub drive: DrivePattern,
}

/// Piecewise-constant drive sequence plus instantaneous gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    segments: Vec<Segment>,
    gates: Vec<TimedGate>,
}

impl Schedule {
    /// Gates are stably sorted by time, so simultaneous gates keep their list order.
    pub fn new(segments: Vec<Segment>, mut gates: Vec<TimedGate>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidSchedule("no segments".into()));
        }
        for s in &segments {
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(Error::InvalidSchedule(format!(
                    "segment duration {} must be positive",
                    s.duration
                )));
            }
            s.drive.validate()?;
        }
        let total: f64 = segments.iter().map(|s| s.duration).sum();
        for g in &gates {
            if !(0.0..=total + 1e-9).contains(&g.time) {
                return Err(Error::InvalidSchedule(format!(
                    "gate at {} ns outside [0, {total}]",
                    g.time
                )));
            }
        }
        gates.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(Self { segments, gates })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn gates(&self) -> &[TimedGate] {
        &self.gates
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

/// Enumerated occupation basis, optionally restricted to a fixed total
/// excitation number.
#[derive(Debug, Clone)]
pub struct FockBasis {
    n_sites: usize,
    levels: u8,
    sector: Option<usize>,
    /// Base-`levels` codes, ascending; site 0 is the most significant digit.
    codes: Vec<u64>,
    powers: Vec<u64>,
}

impl PartialEq for FockBasis {
    fn eq(&self, other: &Self) -> bool {
        self.n_sites == other.n_sites && self.levels == other.levels && self.sector == other.sector
    }
}

impl FockBasis {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn levels(&self) -> u8 {
        self.levels
    }

    pub fn sector(&self) -> Option<usize> {
        self.sector
    }

    pub fn dim(&self) -> usize {
        self.codes.len()
    }

    /// Occupation of `site` in basis state `index`.
    #[inline]
    pub fn occupation(&self, index: usize, site: usize) -> u8 {
        ((self.codes[index] / self.powers[site]) % self.levels as u64) as u8
    }

    pub fn occupations(&self, index: usize) -> Vec<u8> {
        (0..self.n_sites)
            .map(|s| self.occupation(index, s))
            .collect()
    }

    pub fn total_excitations(&self, index: usize) -> usize {
        (0..self.n_sites)
            .map(|s| self.occupation(index, s) as usize)
            .sum()
    }

    pub fn index_of(&self, occupations: &[u8]) -> Option<usize> {
        if occupations.len() != self.n_sites || occupations.iter().any(|&o| o >= self.levels) {
            return None;
        }
        let code = occupations
            .iter()
            .fold(0u64, |acc, &o| acc * self.levels as u64 + o as u64);
        self.index_of_code(code)
    }

    #[inline]
    pub(crate) fn index_of_code(&self, code: u64) -> Option<usize> {
        if self.sector.is_none() {
            return if (code as usize) < self.codes.len() {
                Some(code as usize)
            } else {
                None
            };
        }
        self.codes.binary_search(&code).ok()
    }

    #[inline]
    pub(crate) fn code(&self, index: usize) -> u64 {
        self.codes[index]
    }

    #[inline]
    pub(crate) fn power(&self, site: usize) -> u64 {
        self.powers[site]
    }

    pub fn same_space(&self, other: &FockBasis) -> bool {
        self == other
    }
}

impl fmt::Display for FockBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} sites x {} levels", self.n_sites, self.levels)?;
        if let Some(n) = self.sector {
            write!(f, ", N = {n}")?;
        }
        write!(f, " (dim {})", self.dim())
    }
}

fn sector_dimension(n_sites: usize, levels: u8, total: usize) -> u128 {
    // ways[s] = number of tuples on the processed sites summing to s.
    let mut ways = vec![0u128; total + 1];
    ways[0] = 1;
    for _ in 0..n_sites {
        let mut next = vec![0u128; total + 1];
        for (s, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for o in 0..levels as usize {
                if s + o <= total {
                    next[s + o] += w;
                }
            }
        }
        ways = next;
    }
    ways[total]
}

/// Enumerate the occupation basis. With `sector = Some(n)` only tuples with
/// total excitation `n` are kept; the dimension guard applies to the
/// resulting dimension.
pub fn build_basis(n_sites: usize, levels: u8, sector: Option<usize>) -> Result<Arc<FockBasis>> {
    if n_sites < 2 {
        return Err(Error::InvalidBasis(format!(
            "need at least 2 sites, got {n_sites}"
        )));
    }
    if !(2..=3).contains(&levels) {
        return Err(Error::InvalidBasis(format!(
            "levels must be 2 or 3, got {levels}"
        )));
    }
    let max_total = n_sites * (levels as usize - 1);
    if let Some(n) = sector {
        if n > max_total {
            return Err(Error::InvalidBasis(format!(
                "sector {n} outside [0, {max_total}]"
            )));
        }
    }
    let dim: u128 = match sector {
        None => (levels as u128)
            .checked_pow(n_sites as u32)
            .unwrap_or(u128::MAX),
        Some(n) => sector_dimension(n_sites, levels, n),
    };
    if dim > MAX_DIMENSION as u128 {
        return Err(Error::DimensionOverflow {
            dim,
            limit: MAX_DIMENSION,
        });
    }
    let d = levels as u64;
    let mut powers = vec![1u64; n_sites];
    for s in (0..n_sites.saturating_sub(1)).rev() {
        powers[s] = powers[s + 1] * d;
    }
    let codes = match sector {
        None => (0..dim as u64).collect(),
        Some(total) => {
            let mut codes = Vec::with_capacity(dim as usize);
            enumerate_sector(n_sites, levels, total, 0, 0, &mut codes);
            codes
        }
    };
    debug_assert_eq!(codes.len() as u128, dim);
    Ok(Arc::new(FockBasis {
        n_sites,
        levels,
        sector,
        codes,
        powers,
    }))
}

fn enumerate_sector(
    sites_left: usize,
    levels: u8,
    remaining: usize,
    prefix: u64,
    _depth: usize,
    out: &mut Vec<u64>,
) {
    if sites_left == 0 {
        if remaining == 0 {
            out.push(prefix);
        }
        return;
    }
    let cap = (sites_left - 1) * (levels as usize - 1);
    for o in 0..levels as usize {
        if o > remaining {
            break;
        }
        if remaining - o > cap {
            continue;
        }
        enumerate_sector(
            sites_left - 1,
            levels,
            remaining - o,
            prefix * levels as u64 + o as u64,
            _depth + 1,
            out,
        );
    }
}

/// Normalised complex amplitudes over a basis.
#[derive(Debug, Clone)]
pub struct StateVector {
    basis: Arc<FockBasis>,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// Wrap amplitudes without renormalising; the caller keeps the norm at one.
    pub fn from_amplitudes(basis: Arc<FockBasis>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::BasisMismatch);
        }
        Ok(Self { basis, amplitudes })
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            self.amplitudes.iter_mut().for_each(|a| *a *= inv);
        }
        n
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if !self.basis.same_space(&other.basis) {
            return Err(Error::BasisMismatch);
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `probs[site][level]`: probability that `site` is in `level`.
    pub fn level_probabilities(&self) -> Vec<[f64; 3]> {
        let b = &self.basis;
        let mut out = vec![[0.0; 3]; b.n_sites()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let mut code = b.code(i);
            for s in (0..b.n_sites()).rev() {
                let o = (code % b.levels() as u64) as usize;
                code /= b.levels() as u64;
                out[s][o] += p;
            }
        }
        out
    }

    /// `<n_j>` for every site.
    pub fn occupations(&self) -> Vec<f64> {
        self.level_probabilities()
            .iter()
            .map(|p| p[1] + 2.0 * p[2])
            .collect()
    }

    /// `P_j = <sigma+_j sigma-_j>`, the first-excited-state population.
    pub fn excited_populations(&self) -> Vec<f64> {
        self.level_probabilities().iter().map(|p| p[1]).collect()
    }

    /// Mean total excitation number.
    pub fn total_excitations(&self) -> f64 {
        self.occupations().iter().sum()
    }
}

/// Unit vector on a single basis state.
pub fn product_state(basis: &Arc<FockBasis>, occupations: &[u8]) -> Result<StateVector> {
    let idx = basis
        .index_of(occupations)
        .ok_or_else(|| Error::StateNotInBasis(occupations.to_vec()))?;
    let mut amplitudes = vec![C0; basis.dim()];
    amplitudes[idx] = Complex64::new(1.0, 0.0);
    Ok(StateVector {
        basis: basis.clone(),
        amplitudes,
    })
}

/// `|+>^n` on the two lowest levels; components with level 2 are zero.
pub fn plus_product_state(basis: &Arc<FockBasis>) -> Result<StateVector> {
    if basis.sector().is_some() {
        return Err(Error::Unsupported(
            "|+>^n is not number-conserving; use an unrestricted basis".into(),
        ));
    }
    let n = basis.n_sites();
    let amp = Complex64::new(0.5f64.powf(n as f64 / 2.0), 0.0);
    let amplitudes = (0..basis.dim())
        .map(|i| {
            if (0..n).all(|s| basis.occupation(i, s) < 2) {
                amp
            } else {
                C0
            }
        })
        .collect();
    Ok(StateVector {
        basis: basis.clone(),
        amplitudes,
    })
}

/// Sparse complex matrix over a basis in compressed-row form.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    basis: Arc<FockBasis>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<Complex64>,
}

impl OperatorMatrix {
    /// Assemble from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(
        basis: Arc<FockBasis>,
        mut triplets: Vec<(usize, usize, Complex64)>,
    ) -> Self {
        let dim = basis.dim();
        triplets.sort_unstable_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if let (Some(&lr), Some(&lc)) = (rows.last(), cols.last()) {
                if lr == r && lc == c {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            cols.push(c);
            values.push(v);
        }
        let keep: Vec<bool> = values.iter().map(|v| *v != C0).collect();
        let mut k_rows = Vec::new();
        let mut k_cols = Vec::new();
        let mut k_vals = Vec::new();
        for i in 0..values.len() {
            if keep[i] {
                k_rows.push(rows[i]);
                k_cols.push(cols[i]);
                k_vals.push(values[i]);
            }
        }
        for &r in &k_rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            basis,
            row_ptr,
            cols: k_cols,
            values: k_vals,
        }
    }

    pub fn diagonal(basis: Arc<FockBasis>, diag: &[f64]) -> Self {
        let t = diag
            .iter()
            .enumerate()
            .map(|(i, &d)| (i, i, Complex64::new(d, 0.0)))
            .collect();
        Self::from_triplets(basis, t)
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim()).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.values[k]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let span = &self.cols[self.row_ptr[row]..self.row_ptr[row + 1]];
        match span.binary_search(&col) {
            Ok(k) => self.values[self.row_ptr[row] + k],
            Err(_) => C0,
        }
    }

    /// `out = A x`.
    /// `out = A x`. Large matrices are split across the rayon pool.
    pub fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        let row = |r: usize| {
            let mut acc = C0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.cols[k]];
            }
            acc
        };
        if self.dim() >= PARALLEL_DIM {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(r, o)| *o = row(r));
        } else {
            out.iter_mut().enumerate().for_each(|(r, o)| *o = row(r));
        }
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if !self.basis.same_space(state.basis()) {
            return Err(Error::BasisMismatch);
        }
        let mut out = vec![C0; self.dim()];
        self.apply_into(state.amplitudes(), &mut out);
        Ok(StateVector {
            basis: state.basis.clone(),
            amplitudes: out,
        })
    }

    /// Largest `|A_ij - conj(A_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum, an upper bound on the spectral norm for
    /// Hermitian matrices.
    pub fn one_norm(&self) -> f64 {
        let mut col = vec![0.0; self.dim()];
        for (_, c, v) in self.triplets() {
            col[c] += v.norm();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// Diagonal entries (zero where absent).
    pub fn diagonal_entries(&self) -> Vec<Complex64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `alpha * self + beta * other`.
    pub fn add_scaled(
        &self,
        alpha: f64,
        other: &OperatorMatrix,
        beta: f64,
    ) -> Result<OperatorMatrix> {
        if !self.basis.same_space(&other.basis) {
            return Err(Error::BasisMismatch);
        }
        let t = self
            .triplets()
            .map(|(r, c, v)| (r, c, v * alpha))
            .chain(other.triplets().map(|(r, c, v)| (r, c, v * beta)))
            .collect();
        Ok(Self::from_triplets(self.basis.clone(), t))
    }

    /// Dense copy, row-major. Intended for small systems and tests.
    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.dim();
        let mut m = vec![vec![C0; n]; n];
        for (r, c, v) in self.triplets() {
            m[r][c] = v;
        }
        m
    }
}

/// Site-local operator kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SiteOpKind {
    Lower,
    Raise,
    Number,
    Sx,
    Sy,
    Sz,
    SigmaPlus,
    SigmaMinus,
    /// `[[0,1,0],[1,0,0],[0,0,eta]]` on levels 0..2.
    SigmaX(f64),
}

impl SiteOpKind {
    fn conserves_number(self) -> bool {
        matches!(self, SiteOpKind::Number | SiteOpKind::Sz)
    }
}

/// Nonzero entries `(to_level, from_level, value)` of the local matrix.
pub(crate) fn local_matrix(kind: SiteOpKind, levels: u8) -> Vec<(u8, u8, Complex64)> {
    let re = |x: f64| Complex64::new(x, 0.0);
    let d = levels;
    let mut m = Vec::new();
    match kind {
        SiteOpKind::Lower => {
            for n in 1..d {
                m.push((n - 1, n, re((n as f64).sqrt())));
            }
        }
        SiteOpKind::Raise => {
            for n in 0..d - 1 {
                m.push((n + 1, n, re(((n + 1) as f64).sqrt())));
            }
        }
        SiteOpKind::Number => {
            for n in 1..d {
                m.push((n, n, re(n as f64)));
            }
        }
        SiteOpKind::Sx => {
            m.push((0, 1, re(1.0)));
            m.push((1, 0, re(1.0)));
        }
        SiteOpKind::Sy => {
            m.push((0, 1, Complex64::new(0.0, 1.0)));
            m.push((1, 0, Complex64::new(0.0, -1.0)));
        }
        SiteOpKind::Sz => {
            m.push((0, 0, re(-1.0)));
            m.push((1, 1, re(1.0)));
        }
        SiteOpKind::SigmaPlus => m.push((1, 0, re(1.0))),
        SiteOpKind::SigmaMinus => m.push((0, 1, re(1.0))),
        SiteOpKind::SigmaX(eta) => {
            m.push((0, 1, re(1.0)));
            m.push((1, 0, re(1.0)));
            if d > 2 && eta != 0.0 {
                m.push((2, 2, re(eta)));
            }
        }
    }
    m
}

/// Apply a local matrix to `site` of every basis state. Fails when an entry
/// maps a state out of the basis (e.g. number-changing ops on a sector).
pub(crate) fn embed_local(
    basis: &Arc<FockBasis>,
    site: usize,
    local: &[(u8, u8, Complex64)],
) -> Result<OperatorMatrix> {
    if site >= basis.n_sites() {
        return Err(Error::SiteOutOfRange {
            site,
            n_sites: basis.n_sites(),
        });
    }
    let p = basis.power(site);
    let mut t = Vec::with_capacity(basis.dim() * 2);
    for i in 0..basis.dim() {
        let o = basis.occupation(i, site);
        for &(to, from, v) in local {
            if from != o {
                continue;
            }
            let code = basis.code(i) - o as u64 * p + to as u64 * p;
            let j = basis.index_of_code(code).ok_or_else(|| {
                Error::Unsupported(format!(
                    "operator leaves the basis ({basis}); use an unrestricted basis"
                ))
            })?;
            t.push((j, i, v));
        }
    }
    Ok(OperatorMatrix::from_triplets(basis.clone(), t))
}

/// Operator acting as `kind` on `site` and as identity elsewhere.
pub fn site_operator(
    basis: &Arc<FockBasis>,
    site: usize,
    kind: SiteOpKind,
) -> Result<OperatorMatrix> {
    if site >= basis.n_sites() {
        return Err(Error::SiteOutOfRange {
            site,
            n_sites: basis.n_sites(),
        });
    }
    if let SiteOpKind::SigmaX(_) = kind {
        if basis.levels() == 2 {
            log::warn!("SigmaX on a two-level basis degenerates to the Pauli sx");
        }
    }
    if basis.sector().is_some() && !kind.conserves_number() {
        return Err(Error::Unsupported(format!(
            "{kind:?} does not conserve excitation number"
        )));
    }
    embed_local(basis, site, &local_matrix(kind, basis.levels()))
}

/// `<psi|op|psi>`, rejecting an imaginary part above 1e-10.
pub fn expectation(state: &StateVector, op: &OperatorMatrix) -> Result<f64> {
    if !state.basis().same_space(op.basis()) {
        return Err(Error::BasisMismatch);
    }
    let mut tmp = vec![C0; op.dim()];
    op.apply_into(state.amplitudes(), &mut tmp);
    let v: Complex64 = state
        .amplitudes()
        .iter()
        .zip(&tmp)
        .map(|(a, b)| a.conj() * b)
        .sum();
    if v.im.abs() > 1e-10 {
        return Err(Error::ComplexExpectation(v.im));
    }
    Ok(v.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let n = a.len();
        let mut m = vec![vec![C0; n]; n];
        for i in 0..n {
            for k in 0..n {
                if a[i][k] == C0 {
                    continue;
                }
                for j in 0..n {
                    m[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        m
    }

    #[test]
    fn basis_ordering_and_dimensions() {
        let b = build_basis(2, 2, None).unwrap();
        let order: Vec<Vec<u8>> = (0..b.dim()).map(|i| b.occupations(i)).collect();
        assert_eq!(order, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(build_basis(10, 2, Some(5)).unwrap().dim(), 252);
        assert_eq!(build_basis(10, 3, None).unwrap().dim(), 59049);
        assert_eq!(build_basis(10, 3, Some(5)).unwrap().dim(), 1452);
        assert_eq!(build_basis(25, 2, Some(1)).unwrap().dim(), 25);
    }

    #[test]
    fn basis_errors() {
        assert!(matches!(
            build_basis(30, 2, None),
            Err(Error::DimensionOverflow { .. })
        ));
        assert!(matches!(
            build_basis(4, 2, Some(5)),
            Err(Error::InvalidBasis(_))
        ));
        assert!(build_basis(4, 4, None).is_err());
        assert!(build_basis(1, 2, None).is_err());
    }

    #[test]
    fn sector_basis_is_sorted_bijection() {
        let b = build_basis(6, 3, Some(4)).unwrap();
        for i in 0..b.dim() {
            assert_eq!(b.total_excitations(i), 4);
            assert_eq!(b.index_of(&b.occupations(i)), Some(i));
            if i > 0 {
                assert!(b.code(i) > b.code(i - 1));
            }
        }
    }

    #[test]
    fn product_states() {
        let b = build_basis(10, 2, None).unwrap();
        let occ = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let s = product_state(&b, &occ).unwrap();
        let idx = b.index_of(&occ).unwrap();
        assert_eq!(s.amplitudes()[idx], Complex64::new(1.0, 0.0));
        assert!((s.norm() - 1.0).abs() < 1e-15);

        let sec = build_basis(10, 2, Some(5)).unwrap();
        assert!(product_state(&sec, &[1, 0, 1, 0, 1, 0, 1, 0, 1, 0]).is_ok());
        assert!(matches!(
            product_state(&b, &[2, 0, 0, 0, 0, 0, 0, 0, 0, 0]),
            Err(Error::StateNotInBasis(_))
        ));
        assert!(product_state(&sec, &[1, 1, 1, 1, 1, 1, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn plus_states() {
        let b = build_basis(2, 2, None).unwrap();
        let s = plus_product_state(&b).unwrap();
        assert!(s.amplitudes().iter().all(|a| (a.re - 0.5).abs() < 1e-15));
        let b10 = build_basis(10, 2, None).unwrap();
        let s = plus_product_state(&b10).unwrap();
        assert!(s
            .amplitudes()
            .iter()
            .all(|a| (a.re - 1.0 / 32.0).abs() < 1e-15));
        let b3 = build_basis(2, 3, None).unwrap();
        let s = plus_product_state(&b3).unwrap();
        for i in 0..b3.dim() {
            let occ = b3.occupations(i);
            let expect = if occ.iter().all(|&o| o < 2) { 0.5 } else { 0.0 };
            assert!((s.amplitudes()[i].re - expect).abs() < 1e-15);
        }
        assert!((s.norm() - 1.0).abs() < 1e-14);
        assert!(plus_product_state(&build_basis(4, 2, Some(2)).unwrap()).is_err());
    }

    #[test]
    fn sz_convention_and_number() {
        let b = build_basis(2, 2, None).unwrap();
        let sz = site_operator(&b, 0, SiteOpKind::Sz).unwrap();
        let one = product_state(&b, &[1, 0]).unwrap();
        let zero = product_state(&b, &[0, 0]).unwrap();
        assert_eq!(expectation(&one, &sz).unwrap(), 1.0);
        assert_eq!(expectation(&zero, &sz).unwrap(), -1.0);

        let b3 = build_basis(4, 3, None).unwrap();
        let n4 = site_operator(&b3, 3, SiteOpKind::Number).unwrap();
        let s = product_state(&b3, &[0, 1, 0, 2]).unwrap();
        assert_eq!(expectation(&s, &n4).unwrap(), 2.0);
    }

    #[test]
    fn sigma_x3_keeps_level_two() {
        let b = build_basis(2, 3, None).unwrap();
        let sx = site_operator(&b, 1, SiteOpKind::SigmaX(1.0)).unwrap();
        let s = product_state(&b, &[0, 2]).unwrap();
        let twice = sx.apply(&sx.apply(&s).unwrap()).unwrap();
        assert!(twice.inner(&s).unwrap().re > 1.0 - 1e-15);
        let m0 = site_operator(&b, 1, SiteOpKind::SigmaX(0.0)).unwrap();
        assert!(m0.apply(&s).unwrap().norm() == 0.0);
        // Two-level request falls back to sx.
        let b2 = build_basis(2, 2, None).unwrap();
        let a = site_operator(&b2, 0, SiteOpKind::SigmaX(1.0))
            .unwrap()
            .to_dense();
        let x = site_operator(&b2, 0, SiteOpKind::Sx).unwrap().to_dense();
        assert_eq!(a, x);
    }

    #[test]
    fn pauli_algebra() {
        let b = build_basis(3, 2, None).unwrap();
        let x = site_operator(&b, 1, SiteOpKind::Sx).unwrap().to_dense();
        let y = site_operator(&b, 1, SiteOpKind::Sy).unwrap().to_dense();
        let z = site_operator(&b, 1, SiteOpKind::Sz).unwrap().to_dense();
        let xy = dense_mul(&x, &y);
        let yx = dense_mul(&y, &x);
        for i in 0..b.dim() {
            for j in 0..b.dim() {
                let comm = xy[i][j] - yx[i][j];
                assert!((comm - Complex64::new(0.0, 2.0) * z[i][j]).norm() < 1e-14);
            }
        }
        let sp = site_operator(&b, 1, SiteOpKind::SigmaPlus)
            .unwrap()
            .to_dense();
        let sm = site_operator(&b, 1, SiteOpKind::SigmaMinus)
            .unwrap()
            .to_dense();
        let pm = dense_mul(&sp, &sm);
        let n = site_operator(&b, 1, SiteOpKind::Number).unwrap().to_dense();
        assert_eq!(pm, n);
    }

    #[test]
    fn operators_on_distinct_sites_commute() {
        let b = build_basis(3, 3, None).unwrap();
        let kinds = [
            SiteOpKind::Lower,
            SiteOpKind::Raise,
            SiteOpKind::Number,
            SiteOpKind::Sx,
            SiteOpKind::Sy,
            SiteOpKind::Sz,
            SiteOpKind::SigmaX(1.0),
        ];
        for &k1 in &kinds {
            for &k2 in &kinds {
                let a = site_operator(&b, 0, k1).unwrap().to_dense();
                let c = site_operator(&b, 2, k2).unwrap().to_dense();
                assert_eq!(dense_mul(&a, &c), dense_mul(&c, &a), "{k1:?} {k2:?}");
            }
        }
    }

    #[test]
    fn expectation_checks() {
        let b = build_basis(9, 2, None).unwrap();
        let s = product_state(&b, &[0, 0, 0, 0, 1, 0, 0, 0, 0]).unwrap();
        let n = site_operator(&b, 4, SiteOpKind::Number).unwrap();
        assert_eq!(expectation(&s, &n).unwrap(), 1.0);
        let p = plus_product_state(&b).unwrap();
        let z = site_operator(&b, 0, SiteOpKind::Sz).unwrap();
        assert!(expectation(&p, &z).unwrap().abs() < 1e-14);
        let other = build_basis(9, 3, None).unwrap();
        let n3 = site_operator(&other, 0, SiteOpKind::Number).unwrap();
        assert!(matches!(expectation(&s, &n3), Err(Error::BasisMismatch)));
    }

    #[test]
    fn sector_rejects_number_changing_ops() {
        let b = build_basis(4, 2, Some(2)).unwrap();
        assert!(site_operator(&b, 0, SiteOpKind::Sx).is_err());
        assert!(site_operator(&b, 0, SiteOpKind::Number).is_ok());
        assert!(matches!(
            site_operator(&b, 9, SiteOpKind::Number),
            Err(Error::SiteOutOfRange { .. })
        ));
    }

    #[test]
    fn device_validation() {
        let d = DeviceSpec::paper_10q(2);
        assert!(d.validate().is_ok());
        assert!(DeviceSpec::new(vec![1.0], vec![], vec![0.0, 0.0, 0.0], 2).is_err());
        assert!(DeviceSpec::new(vec![1.0, -1.0], vec![0.0], vec![0.0; 3], 2).is_err());
        assert!(DeviceSpec::new(vec![1.0, 1.0], vec![0.0], vec![0.0; 3], 4).is_err());
        let t = d.truncate(2).unwrap();
        assert_eq!(t.nn_couplings, vec![10.72]);
        assert!(t.nnn_couplings.is_empty());
    }

    #[test]
    fn staggered_pattern_matches_device_layout() {
        let p = DrivePattern::staggered(10, 213.6, 120.0);
        assert_eq!(
            p.amplitudes,
            vec![213.6, 0.0, -213.6, 0.0, 213.6, 0.0, -213.6, 0.0, 213.6, 0.0]
        );
        assert!((p.period() - 8.333_333_333_333_334).abs() < 1e-12);
        assert!(DrivePattern::new(vec![0.0; 3], 0.0).is_err());
        assert!(DrivePattern::new(vec![f64::NAN; 3], 120.0).is_err());
    }

    #[test]
    fn schedule_validation_and_ordering() {
        let seg = Segment {
            duration: 10.0,
            drive: DrivePattern::undriven(2, 120.0),
        };
        let g = |t, s| TimedGate {
            time: t,
            site: s,
            gate: GateKind::X,
        };
        let s = Schedule::new(vec![seg.clone()], vec![g(5.0, 1), g(2.0, 0), g(5.0, 0)]).unwrap();
        let order: Vec<(f64, usize)> = s.gates().iter().map(|g| (g.time, g.site)).collect();
        assert_eq!(order, vec![(2.0, 0), (5.0, 1), (5.0, 0)]);
        assert!(Schedule::new(vec![seg.clone()], vec![g(11.0, 0)]).is_err());
        let bad = Segment {
            duration: 0.0,
            ..seg
        };
        assert!(Schedule::new(vec![bad], vec![]).is_err());
    }
}
