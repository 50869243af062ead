//! Readout errors: shot sampling through a per-site confusion model, inverse
//! calibration and excitation-number post-selection.
//!
//! Site `j` reports the true bit with probability `F_g` (ground) or `F_e`
//! (excited), so `p_obs = T_j p_true` with `T_j = [[F_g, 1 - F_e], [1 - F_g, F_e]]`.
//! Level 2 is read as "1", the misclassification a dispersive readout makes;
//! post-selection then removes most of that weight.
//!
//! Sampling uses ChaCha20 (`rand_chacha`) seeded through `seed_from_u64`, so
//! counts are identical across platforms for a given seed.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::model::StateVector;

/// Per-site readout fidelities.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionModel {
    pub f_ground: Vec<f64>,
    pub f_excited: Vec<f64>,
}

impl ConfusionModel {
    pub fn new(f_ground: Vec<f64>, f_excited: Vec<f64>) -> Result<Self> {
        if f_ground.len() != f_excited.len() {
            return Err(Error::InvalidInput(
                "fidelity lists differ in length".into(),
            ));
        }
        for (j, (g, e)) in f_ground.iter().zip(&f_excited).enumerate() {
            if !(*g > 0.5 && *g <= 1.0 && *e > 0.5 && *e <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "site {j}: fidelities ({g}, {e}) outside (0.5, 1]"
                )));
            }
        }
        Ok(Self {
            f_ground,
            f_excited,
        })
    }

    /// Measured fidelities of the 10-qubit device.
    pub fn paper_10q() -> Self {
        let g = [97.2, 99.2, 99.2, 99.7, 98.1, 99.4, 99.3, 99.4, 99.3, 99.3];
        let e = [90.4, 92.6, 92.4, 90.7, 90.3, 91.7, 89.9, 91.7, 92.5, 85.6];
        Self {
            f_ground: g.iter().map(|x| x / 100.0).collect(),
            f_excited: e.iter().map(|x| x / 100.0).collect(),
        }
    }

    pub fn perfect(n_sites: usize) -> Self {
        Self {
            f_ground: vec![1.0; n_sites],
            f_excited: vec![1.0; n_sites],
        }
    }

    pub fn n_sites(&self) -> usize {
        self.f_ground.len()
    }

    /// `T_j` as `[[F_g, 1 - F_e], [1 - F_g, F_e]]`.
    pub fn matrix(&self, j: usize) -> [[f64; 2]; 2] {
        let (g, e) = (self.f_ground[j], self.f_excited[j]);
        [[g, 1.0 - e], [1.0 - g, e]]
    }

    /// `T_j^-1`.
    pub fn inverse(&self, j: usize) -> Result<[[f64; 2]; 2]> {
        let (g, e) = (self.f_ground[j], self.f_excited[j]);
        let det = g + e - 1.0;
        if det.abs() < 1e-12 {
            return Err(Error::InvalidInput(format!(
                "calibration matrix of site {j} is singular"
            )));
        }
        Ok([[e / det, (e - 1.0) / det], [(g - 1.0) / det, g / det]])
    }
}

/// Histogram of measured bitstrings. Bit `n - 1 - j` of a key is site `j`, so
/// keys print as bitstrings with site 0 first.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct Counts {
    pub n_sites: usize,
    pub counts: BTreeMap<u64, u64>,
}

impl Counts {
    pub fn new(n_sites: usize) -> Self {
        Self {
            n_sites,
            counts: BTreeMap::new(),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn add(&mut self, key: u64, n: u64) {
        *self.counts.entry(key).or_insert(0) += n;
    }

    pub fn bit(&self, key: u64, site: usize) -> bool {
        (key >> (self.n_sites - 1 - site)) & 1 == 1
    }

    pub fn bitstring(&self, key: u64) -> String {
        (0..self.n_sites)
            .map(|j| if self.bit(key, j) { '1' } else { '0' })
            .collect()
    }

    /// Raw fraction of shots reading "1" on each site.
    pub fn marginals(&self) -> Vec<f64> {
        let total = self.total() as f64;
        let mut m = vec![0.0; self.n_sites];
        for (&k, &c) in &self.counts {
            for (j, mj) in m.iter_mut().enumerate() {
                if self.bit(k, j) {
                    *mj += c as f64;
                }
            }
        }
        m.iter().map(|x| x / total).collect()
    }
}

/// Probabilities of the `2^n` readout keys, level 2 folded into "1".
pub fn outcome_distribution(state: &StateVector) -> Result<Vec<f64>> {
    let b = state.basis();
    let n = b.n_sites();
    if n > 24 {
        return Err(Error::Unsupported(format!("{n}-site outcome distribution")));
    }
    let mut p = vec![0.0; 1 << n];
    for (i, a) in state.amplitudes().iter().enumerate() {
        let w = a.norm_sqr();
        if w == 0.0 {
            continue;
        }
        let key = (0..n).fold(0u64, |acc, s| {
            (acc << 1) | u64::from(b.occupation(i, s) > 0)
        });
        p[key as usize] += w;
    }
    Ok(p)
}

/// Draw `n_shots` readouts of `state` through `confusion`.
pub fn sample_shots(
    state: &StateVector,
    confusion: &ConfusionModel,
    n_shots: u64,
    seed: u64,
) -> Result<Counts> {
    let n = state.basis().n_sites();
    if confusion.n_sites() != n {
        return Err(Error::InvalidInput(format!(
            "confusion model covers {} sites, state has {n}",
            confusion.n_sites()
        )));
    }
    let p = outcome_distribution(state)?;
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for x in &p {
        acc += x;
        cdf.push(acc);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut counts = Counts::new(n);
    for _ in 0..n_shots {
        let u: f64 = rng.random::<f64>() * acc;
        let true_key = cdf.partition_point(|c| *c <= u).min(p.len() - 1) as u64;
        let mut key = 0u64;
        for j in 0..n {
            let bit = (true_key >> (n - 1 - j)) & 1 == 1;
            let r: f64 = rng.random();
            let flip = if bit {
                r >= confusion.f_excited[j]
            } else {
                r >= confusion.f_ground[j]
            };
            key = (key << 1) | u64::from(bit != flip);
        }
        counts.add(key, 1);
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CalibratedMarginals {
    /// Corrected probability of "1" per site, clipped to `[0, 1]`.
    pub p_excited: Vec<f64>,
    /// Sites whose corrected value had to be clipped.
    pub clipped: Vec<usize>,
}

/// Per-site marginals corrected by `T_j^-1`.
pub fn calibrate_counts(
    counts: &Counts,
    confusion: &ConfusionModel,
) -> Result<CalibratedMarginals> {
    if confusion.n_sites() != counts.n_sites {
        return Err(Error::InvalidInput(
            "confusion model and counts differ in site count".into(),
        ));
    }
    if counts.total() == 0 {
        return Err(Error::InvalidInput("no shots".into()));
    }
    let raw = counts.marginals();
    let mut p_excited = Vec::with_capacity(raw.len());
    let mut clipped = Vec::new();
    for (j, p1) in raw.iter().enumerate() {
        let inv = confusion.inverse(j)?;
        let corrected = inv[1][0] * (1.0 - p1) + inv[1][1] * p1;
        if !(0.0..=1.0).contains(&corrected) {
            clipped.push(j);
        }
        p_excited.push(corrected.clamp(0.0, 1.0));
    }
    Ok(CalibratedMarginals { p_excited, clipped })
}

/// Apply `T_0^-1 x ... x T_{n-1}^-1` to the observed frequencies. The result
/// sums to one but may have small negative entries.
pub fn calibrate_distribution(counts: &Counts, confusion: &ConfusionModel) -> Result<Vec<f64>> {
    let n = counts.n_sites;
    if confusion.n_sites() != n || n > 24 {
        return Err(Error::InvalidInput(
            "confusion model and counts differ in site count".into(),
        ));
    }
    let total = counts.total() as f64;
    if total == 0.0 {
        return Err(Error::InvalidInput("no shots".into()));
    }
    let mut q = vec![0.0; 1 << n];
    for (&k, &c) in &counts.counts {
        q[k as usize] = c as f64 / total;
    }
    for j in 0..n {
        let inv = confusion.inverse(j)?;
        let stride = 1usize << (n - 1 - j);
        for base in 0..q.len() {
            if base & stride != 0 {
                continue;
            }
            let (a, b) = (q[base], q[base | stride]);
            q[base] = inv[0][0] * a + inv[0][1] * b;
            q[base | stride] = inv[1][0] * a + inv[1][1] * b;
        }
    }
    Ok(q)
}

/// Total weight of a distribution over keys with `n_excitations` ones.
pub fn sector_weight(distribution: &[f64], n_excitations: u32) -> f64 {
    distribution
        .iter()
        .enumerate()
        .filter(|(k, _)| k.count_ones() == n_excitations)
        .map(|(_, p)| p)
        .sum()
}

/// Keep only bitstrings with `n_excitations` ones; also returns the kept fraction.
pub fn post_select(counts: &Counts, n_excitations: u32) -> Result<(Counts, f64)> {
    let mut kept = Counts::new(counts.n_sites);
    for (&k, &c) in &counts.counts {
        if k.count_ones() == n_excitations {
            kept.add(k, c);
        }
    }
    let total = counts.total();
    if kept.total() == 0 {
        return Err(Error::EmptyPostSelection);
    }
    let frac = kept.total() as f64 / total as f64;
    Ok((kept, frac))
}

/// Standard error of `sum_k w_k q_k`, with `q` the calibrated distribution of
/// `counts`, from the multinomial spread of the observed frequencies.
pub fn calibrated_linear_sigma(
    counts: &Counts,
    confusion: &ConfusionModel,
    weights: &[f64],
) -> Result<f64> {
    let n = counts.n_sites;
    if weights.len() != 1 << n {
        return Err(Error::InvalidInput("weights must cover every key".into()));
    }
    // The calibrated estimate is linear in the frequencies: q = A f, so
    // w.q = (A^T w).f. A^T is the tensor product of the transposed inverses.
    let mut a = weights.to_vec();
    for j in 0..n {
        let inv = confusion.inverse(j)?;
        let stride = 1usize << (n - 1 - j);
        for base in 0..a.len() {
            if base & stride != 0 {
                continue;
            }
            let (x, y) = (a[base], a[base | stride]);
            a[base] = inv[0][0] * x + inv[1][0] * y;
            a[base | stride] = inv[0][1] * x + inv[1][1] * y;
        }
    }
    let total = counts.total() as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (&k, &c) in &counts.counts {
        let f = c as f64 / total;
        m1 += a[k as usize] * f;
        m2 += a[k as usize].powi(2) * f;
    }
    Ok(((m2 - m1 * m1).max(0.0) / total).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_basis, plus_product_state, product_state};

    #[test]
    fn perfect_readout_is_deterministic() {
        let b = build_basis(2, 2, None).unwrap();
        let s = product_state(&b, &[1, 0]).unwrap();
        let c = sample_shots(&s, &ConfusionModel::perfect(2), 100, 1).unwrap();
        assert_eq!(c.counts.len(), 1);
        assert_eq!(c.bitstring(*c.counts.keys().next().unwrap()), "10");
    }

    #[test]
    fn seeds_reproduce() {
        let b = build_basis(4, 2, None).unwrap();
        let s = plus_product_state(&b).unwrap();
        let m = ConfusionModel::new(vec![0.97; 4], vec![0.9; 4]).unwrap();
        assert_eq!(
            sample_shots(&s, &m, 500, 7).unwrap(),
            sample_shots(&s, &m, 500, 7).unwrap()
        );
        assert_ne!(
            sample_shots(&s, &m, 500, 7).unwrap(),
            sample_shots(&s, &m, 500, 8).unwrap()
        );
    }

    #[test]
    fn symmetric_fixed_point_and_identity() {
        let mut c = Counts::new(1);
        c.add(0, 50);
        c.add(1, 50);
        let m = ConfusionModel::new(vec![0.75], vec![0.75]).unwrap();
        assert!((calibrate_counts(&c, &m).unwrap().p_excited[0] - 0.5).abs() < 1e-15);
        let id = calibrate_counts(&c, &ConfusionModel::perfect(1)).unwrap();
        assert_eq!(id.p_excited, vec![0.5]);
    }

    #[test]
    fn distribution_inverse_matches_marginals() {
        let mut c = Counts::new(3);
        for (k, n) in [(0b000, 30), (0b011, 40), (0b101, 25), (0b111, 5)] {
            c.add(k, n);
        }
        let m = ConfusionModel::new(vec![0.95, 0.9, 0.97], vec![0.88, 0.92, 0.85]).unwrap();
        let q = calibrate_distribution(&c, &m).unwrap();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let marg = calibrate_counts(&c, &m).unwrap();
        for j in 0..3 {
            let from_q: f64 = q
                .iter()
                .enumerate()
                .filter(|(k, _)| c.bit(*k as u64, j))
                .map(|(_, p)| p)
                .sum();
            assert!((from_q - marg.p_excited[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn post_selection() {
        let mut c = Counts::new(4);
        c.add(0b0011, 3);
        c.add(0b0101, 2);
        let (k, f) = post_select(&c, 2).unwrap();
        assert_eq!(f, 1.0);
        assert_eq!(k, c);
        assert!(matches!(post_select(&c, 3), Err(Error::EmptyPostSelection)));
    }

    #[test]
    fn confusion_validation() {
        assert!(ConfusionModel::new(vec![0.4], vec![0.9]).is_err());
        assert!(ConfusionModel::new(vec![0.9], vec![0.9, 0.9]).is_err());
        let p = ConfusionModel::paper_10q();
        assert_eq!(p.f_excited[9], 0.856);
    }
}
