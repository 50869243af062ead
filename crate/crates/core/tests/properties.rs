use floquet_sim::analysis::{calibrate_counts, ConfusionModel, Counts};
use floquet_sim::hamiltonian::{
    build_effective_hamiltonian, build_lab_hamiltonian, effective_coupling, EffectiveOptions,
    Hamiltonian,
};
use floquet_sim::model::{
    build_basis, product_state, site_operator, DeviceSpec, DrivePattern, GateKind, SiteOpKind,
    StateVector,
};
use floquet_sim::propagator::{evolve, propagate, IntegratorConfig, Method};
use floquet_sim::protocols::apply_gate;
use floquet_sim::series::TimeSeries;
use num_complex::Complex64;
use proptest::prelude::*;

fn device(n: usize, levels: u8) -> impl Strategy<Value = DeviceSpec> {
    (
        prop::collection::vec(5.0..15.0f64, n - 1),
        prop::collection::vec(0.0..1.5f64, n - 2),
        prop::collection::vec(-280.0..-180.0f64, n),
    )
        .prop_map(move |(nn, nnn, u)| DeviceSpec::new(nn, nnn, u, levels).unwrap())
}

fn drive(n: usize) -> impl Strategy<Value = DrivePattern> {
    (prop::collection::vec(-400.0..400.0f64, n), 60.0..200.0f64)
        .prop_map(|(a, nu)| DrivePattern::new(a, nu).unwrap())
}

fn occupations(n: usize, levels: u8) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0..levels, n)
}

fn dense_commutator_norm(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> f64 {
    let n = a.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut c = Complex64::new(0.0, 0.0);
            for k in 0..n {
                c += a[i][k] * b[k][j] - b[i][k] * a[k][j];
            }
            worst = worst.max(c.norm());
        }
    }
    worst
}

fn random_state(
    basis: &std::sync::Arc<floquet_sim::model::FockBasis>,
    seed: &[f64],
) -> StateVector {
    let amps = (0..basis.dim())
        .map(|i| {
            let a = seed[i % seed.len()] + i as f64 * 0.37;
            Complex64::new(a.sin(), (1.3 * a).cos())
        })
        .collect();
    let mut s = StateVector::from_amplitudes(basis.clone(), amps).unwrap();
    s.normalize();
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lab_hamiltonian_conserves_number(dev in device(4, 3), dr in drive(4), t in 0.0..20.0f64) {
        let basis = build_basis(4, 3, None).unwrap();
        let h = build_lab_hamiltonian(&basis, &dev, &dr).unwrap();
        let m = h.evaluate_at(t);
        prop_assert!(m.hermiticity_error() < 1e-12);
        let n_diag: Vec<f64> = (0..basis.dim()).map(|i| basis.total_excitations(i) as f64).collect();
        let n_op = floquet_sim::model::OperatorMatrix::diagonal(basis.clone(), &n_diag);
        prop_assert!(dense_commutator_norm(&m.to_dense(), &n_op.to_dense()) < 1e-10);
    }

    #[test]
    fn effective_hamiltonian_is_hermitian_and_conserves_number(
        dev in device(4, 2),
        dr in drive(4),
        nnn in any::<bool>(),
        zz in prop::option::of(0.0..0.2f64),
    ) {
        let basis = build_basis(4, 2, None).unwrap();
        let h = build_effective_hamiltonian(&basis, &dev, &dr, EffectiveOptions { include_nnn: nnn, zz }).unwrap();
        prop_assert!(h.matrix().hermiticity_error() < 1e-12);
        let n_diag: Vec<f64> = (0..basis.dim()).map(|i| basis.total_excitations(i) as f64).collect();
        let n_op = floquet_sim::model::OperatorMatrix::diagonal(basis.clone(), &n_diag);
        prop_assert!(dense_commutator_norm(&h.matrix().to_dense(), &n_op.to_dense()) < 1e-10);
    }

    #[test]
    fn trajectories_keep_number_and_norm(dev in device(4, 3), dr in drive(4), occ in occupations(4, 3)) {
        let basis = build_basis(4, 3, None).unwrap();
        let h = build_lab_hamiltonian(&basis, &dev, &dr).unwrap();
        let psi = product_state(&basis, &occ).unwrap();
        let n0: f64 = occ.iter().map(|&o| o as f64).sum();
        let traj = evolve(&psi, &h, 0.0, 30.0, &IntegratorConfig::default()).unwrap();
        for s in &traj.states {
            prop_assert!((s.total_excitations() - n0).abs() < 1e-8);
            prop_assert!((s.norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn sector_evolution_matches_full_space(dev in device(4, 3), dr in drive(4), occ in occupations(4, 3)) {
        let n: usize = occ.iter().map(|&o| o as usize).sum();
        let full = build_basis(4, 3, None).unwrap();
        let sector = build_basis(4, 3, Some(n)).unwrap();
        let cfg = IntegratorConfig::default();
        let hf = build_lab_hamiltonian(&full, &dev, &dr).unwrap();
        let hs = build_lab_hamiltonian(&sector, &dev, &dr).unwrap();
        let a = propagate(&product_state(&full, &occ).unwrap(), &hf, 0.0, 25.0, &cfg).unwrap();
        let b = propagate(&product_state(&sector, &occ).unwrap(), &hs, 0.0, 25.0, &cfg).unwrap();
        for i in 0..full.dim() {
            let occ_i = full.occupations(i);
            let amp = a.amplitudes()[i];
            match sector.index_of(&occ_i) {
                Some(k) => prop_assert!((amp - b.amplitudes()[k]).norm() < 1e-9),
                None => prop_assert!(amp.norm() < 1e-9),
            }
        }
    }

    #[test]
    fn distinct_site_operators_commute(i in 0usize..4, j in 0usize..4, ka in 0usize..6, kb in 0usize..6) {
        prop_assume!(i != j);
        let kinds = [
            SiteOpKind::Lower,
            SiteOpKind::Raise,
            SiteOpKind::Number,
            SiteOpKind::Sx,
            SiteOpKind::Sy,
            SiteOpKind::SigmaX(1.0),
        ];
        let basis = build_basis(4, 3, None).unwrap();
        let a = site_operator(&basis, i, kinds[ka]).unwrap();
        let b = site_operator(&basis, j, kinds[kb]).unwrap();
        prop_assert_eq!(dense_commutator_norm(&a.to_dense(), &b.to_dense()), 0.0);
    }

    #[test]
    fn effective_coupling_is_even(g in 1.0..20.0f64, a in -500.0..500.0f64, b in -500.0..500.0f64, nu in 50.0..300.0f64) {
        prop_assert_eq!(effective_coupling(g, a, b, nu), effective_coupling(g, b, a, nu));
        prop_assert!((effective_coupling(g, a, a, nu) - g).abs() < 1e-12);
    }

    #[test]
    fn gates_are_unitary(seed in prop::collection::vec(-3.0..3.0f64, 5), site in 0usize..3, levels in 2u8..=3, eta in prop::sample::select(vec![1.0, -1.0])) {
        let basis = build_basis(3, levels, None).unwrap();
        let psi = random_state(&basis, &seed);
        for g in [GateKind::X, GateKind::Z, GateKind::YHalfPi, GateKind::SigmaX(eta)] {
            let out = apply_gate(&psi, site, g).unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn integrators_agree(dev in device(3, 2), dr in drive(3), seed in prop::collection::vec(-3.0..3.0f64, 4)) {
        let basis = build_basis(3, 2, None).unwrap();
        let h = build_lab_hamiltonian(&basis, &dev, &dr).unwrap();
        let psi = random_state(&basis, &seed);
        let period = h.period();
        let dt = period.map_or(0.05, |p| p / 256.0);
        let run = |m| {
            let cfg = IntegratorConfig { method: m, dt: Some(dt), sample_interval: None };
            propagate(&psi, &h, 0.0, 10.0, &cfg).unwrap()
        };
        let a = run(Method::Magnus4);
        for m in [Method::ExpMidpoint, Method::Rk4] {
            let b = run(m);
            let f = a.inner(&b).unwrap().norm_sqr();
            prop_assert!(f > 1.0 - 1e-6, "{m:?}: fidelity {f}");
        }
    }

    #[test]
    fn calibration_inverts_the_confusion(fg in 0.85..1.0f64, fe in 0.8..1.0f64, p in 0.0..1.0f64) {
        let cm = ConfusionModel::new(vec![fg, fg], vec![fe, fe]).unwrap();
        let observed1 = p * fe + (1.0 - p) * (1.0 - fg);
        let total = 1_000_000u64;
        let ones = (observed1 * total as f64).round() as u64;
        let mut counts = Counts::new(2);
        counts.add(0b00, total - ones);
        counts.add(0b11, ones);
        let cal = calibrate_counts(&counts, &cm).unwrap();
        prop_assert!((cal.p_excited[0] - p.clamp(0.0, 1.0)).abs() < 1e-5);
    }

    #[test]
    fn series_rows_round_trip(vals in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 1..20)) {
        let times: Vec<f64> = (0..vals.len()).map(|k| k as f64 * 0.5).collect();
        let s = TimeSeries::new(times, vals).unwrap();
        let rows: Vec<_> = s.rows().collect();
        prop_assert_eq!(TimeSeries::from_rows(&rows).unwrap(), s);
    }
}
