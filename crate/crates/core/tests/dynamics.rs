use nalgebra::DMatrix;
use num_complex::Complex64;
use orbital_lattice::dynamics::{
    depletion_maximum, evolve, Drive, DriveAmplitude, EvolveOptions, OnsiteDriveModel,
    StaticHamiltonian,
};
use orbital_lattice::onsite::{build_basis, hamiltonian_matrix, QuantumState};
use orbital_lattice::params::{compute_params, sp_orbitals, LatticeGeometry, Orbital};
use proptest::prelude::*;

fn chromium() -> LatticeGeometry {
    LatticeGeometry::new(32.0, 20.0, 8.0, 1.8).unwrap()
}

fn sp_model() -> OnsiteDriveModel {
    let basis = build_basis(&sp_orbitals(), (Orbital::S, Orbital::S)).unwrap();
    OnsiteDriveModel::new(&chromium(), DriveAmplitude::lattice(4.0, 0.0), &basis).unwrap()
}

fn two_level(v: f64, detuning: f64) -> StaticHamiltonian {
    StaticHamiltonian::new(&DMatrix::from_row_slice(2, 2, &[0.0, v, v, detuning]))
}

#[test]
fn diagonal_hamiltonian_only_rotates_phases() {
    let e = [1.0, 2.5, -0.75];
    let h = StaticHamiltonian::new(&DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
        &e,
    )));
    let psi0 = QuantumState::from_real(&[1.0 / 3f64.sqrt(); 3]);
    let tr = evolve(
        &h,
        &psi0,
        (0.0, 10.0),
        &EvolveOptions::default().sampled(2.5),
    )
    .unwrap();
    for (t, s) in tr.times.iter().zip(&tr.states) {
        for (c, ek) in s.iter().zip(e) {
            let want = Complex64::from_polar(1.0 / 3f64.sqrt(), -ek * t);
            assert!((c - want).norm() < 1e-9, "t {t}");
        }
    }
}

#[test]
fn resonant_two_level_period() {
    let v = 0.3;
    let tr = evolve(
        &two_level(v, 0.0),
        &QuantumState::basis_state(2, 0),
        (0.0, 25.0),
        &EvolveOptions::default().sampled(0.5),
    )
    .unwrap();
    for (t, s) in tr.times.iter().zip(&tr.states) {
        assert!((s[1].norm_sqr() - (v * t).sin().powi(2)).abs() < 1e-9);
    }
    // full transfer after half a period π/V
    let half = std::f64::consts::FRAC_PI_2 / v;
    let tr = evolve(
        &two_level(v, 0.0),
        &QuantumState::basis_state(2, 0),
        (0.0, half),
        &EvolveOptions::default(),
    )
    .unwrap();
    assert!((tr.final_state().unwrap().occupations()[1] - 1.0).abs() < 1e-9);
}

#[test]
fn detuning_caps_the_transfer() {
    let (v, d) = (0.2, 0.5);
    let bound = v * v / (v * v + d * d / 4.0);
    let (best, _) = depletion_maximum(
        &two_level(v, d),
        &QuantumState::basis_state(2, 0),
        (0.0, 200.0),
        &EvolveOptions::default(),
        0,
    )
    .unwrap();
    assert!(best <= bound + 1e-9);
    assert!(best > bound - 1e-3, "{best} vs {bound}");
}

#[test]
fn driven_evolution_is_reversible() {
    let model = sp_model();
    let h = model.provider(20.0);
    let psi0 = QuantumState::basis_state(3, 0);
    let opts = EvolveOptions::default();
    let fwd = evolve(&h, &psi0, (0.0, 60.0), &opts).unwrap();
    let back = evolve(&h, &fwd.final_state().unwrap(), (60.0, 0.0), &opts).unwrap();
    let end = back.final_state().unwrap();
    assert_eq!(end.time, 0.0);
    for (a, b) in end.amplitudes.iter().zip(&psi0.amplitudes) {
        assert!((a - b).norm() < 1e-8);
    }
}

#[test]
fn tighter_tolerance_changes_little() {
    let model = sp_model();
    let h = model.provider(19.9);
    let psi0 = QuantumState::basis_state(3, 0);
    let run = |tol| evolve(&h, &psi0, (0.0, 100.0), &EvolveOptions::with_tolerance(tol)).unwrap();
    let (coarse, fine) = (run(1e-10), run(1e-12));
    let diff = coarse
        .final_state()
        .unwrap()
        .amplitudes
        .iter()
        .zip(&fine.final_state().unwrap().amplitudes)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(diff < coarse.stats.error_estimate.max(1e-9), "{diff}");
    assert!(fine.stats.max_norm_drift < 1e-10);
}

#[test]
fn tabulated_matrix_matches_direct_assembly() {
    let model = sp_model();
    let drive = Drive::new(chromium(), model.amplitude, 20.0).unwrap();
    for s in [-0.93, -0.41, 0.0, 0.27, 0.88] {
        let p = compute_params(&drive.geometry_at_offset(s), &sp_orbitals()).unwrap();
        let mut direct = hamiltonian_matrix(&model.basis, &p).unwrap();
        for i in 0..3 {
            direct[(i, i)] -= model.energy_reference;
        }
        let err = (model.matrix_at(s).unwrap() - direct).amax();
        assert!(err < 1e-6, "s {s}: {err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn global_phase_leaves_occupations(theta in 0.0f64..std::f64::consts::TAU, omega in 15.0f64..25.0) {
        let model = sp_model();
        let psi = QuantumState::basis_state(3, 0);
        let rotated = QuantumState {
            amplitudes: psi.amplitudes.iter().map(|c| c * Complex64::from_polar(1.0, theta)).collect(),
            time: 0.0,
        };
        let opts = EvolveOptions::default().sampled(5.0);
        let a = evolve(&model.provider(omega), &psi, (0.0, 30.0), &opts).unwrap();
        let b = evolve(&model.provider(omega), &rotated, (0.0, 30.0), &opts).unwrap();
        for k in 0..a.len() {
            for (x, y) in a.occupations(k).iter().zip(b.occupations(k)) {
                prop_assert!((x - y).abs() < 1e-10);
            }
            prop_assert!(a.norm_error(k) < 1e-10);
        }
    }
}
