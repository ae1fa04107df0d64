use orbital_lattice::bands::{
    hopping, hopping_real_space, plane_wave_eigen, solve_bands, wannier, wannier_on_grid,
};
use proptest::prelude::*;

// Band edges of -d²/dx² + q sin²x from Mathieu characteristic values
// (E = a + q/2 at q' = q/4), computed with scipy.special.
// (q, E0(0), E0(1), E1(1), E1(0))
const MATHIEU_EDGES: [(f64, f64, f64, f64, f64); 4] = [
    (
        8.0,
        2.48604311494348,
        2.609323498774677,
        6.379199880488686,
        7.672232706497191,
    ),
    (
        20.0,
        4.199953979148492,
        4.209919401362229,
        11.85818754154775,
        12.099460445486665,
    ),
    (
        32.0,
        5.393270764447353,
        5.394631861207294,
        15.564056398679172,
        15.610638229817932,
    ),
    (
        40.0,
        6.063020043341075,
        6.063447520749913,
        17.600857599963735,
        17.617841764043042,
    ),
];

// E1(0) - E0(0) at q = 32 from a 4th-order finite-difference diagonalization
// on an 8-site periodic box, Richardson-extrapolated in the grid spacing.
const FD_GAP_32: f64 = 10.21736747;

// Band means and hoppings from an independent numpy plane-wave code with 200
// k-points. (q, eps0, eps1, J0, J1)
const NUMPY_BANDS: [(f64, f64, f64, f64, f64); 3] = [
    (
        20.0,
        4.2049307912031795,
        11.976073752191944,
        0.0024913501002695247,
        -0.06026502314614067,
    ),
    (
        32.0,
        5.393951221194865,
        15.587260513438064,
        0.0003402741804068832,
        -0.011645190660683013,
    ),
    (
        40.0,
        6.06323377376803,
        17.609339067240388,
        0.00010686935196048353,
        -0.004246030163461683,
    ),
];

fn eigenvalue(q: f64, k: f64, n: usize) -> f64 {
    plane_wave_eigen(q, k, 33).0[n]
}

#[test]
fn band_edges_match_mathieu_values() {
    for (q, e00, e01, e11, e10) in MATHIEU_EDGES {
        assert!((eigenvalue(q, 0.0, 0) - e00).abs() < 1e-10, "q {q}");
        assert!((eigenvalue(q, 1.0, 0) - e01).abs() < 1e-10, "q {q}");
        assert!((eigenvalue(q, 1.0, 1) - e11).abs() < 1e-10, "q {q}");
        assert!((eigenvalue(q, 0.0, 1) - e10).abs() < 1e-10, "q {q}");
    }
}

#[test]
fn gap_at_32_matches_finite_differences() {
    let gap = eigenvalue(32.0, 0.0, 1) - eigenvalue(32.0, 0.0, 0);
    assert!((gap - FD_GAP_32).abs() < 1e-7, "{gap}");
    let harmonic = 2.0 * 32f64.sqrt();
    assert!(gap < harmonic && gap > 0.5 * harmonic);
}

#[test]
fn band_means_and_hopping_match_independent_code() {
    for (q, e0, e1, j0, j1) in NUMPY_BANDS {
        let b = solve_bands(q, 3, 64, 33).unwrap();
        assert!((b.onsite_energy(0).unwrap() - e0).abs() < 1e-10);
        assert!((b.onsite_energy(1).unwrap() - e1).abs() < 1e-10);
        assert!((hopping(&b, 0).unwrap() - j0).abs() < 1e-10);
        assert!((hopping(&b, 1).unwrap() - j1).abs() < 1e-10);
    }
}

#[test]
fn eigenvalues_converged_in_plane_waves() {
    for q in [0.0, 8.0, 32.0, 40.0] {
        for k in [0.0, 0.37, 1.0] {
            let (a, b) = (plane_wave_eigen(q, k, 33).0, plane_wave_eigen(q, k, 65).0);
            for n in 0..3 {
                assert!((a[n] - b[n]).abs() < 1e-10, "q {q} k {k} band {n}");
            }
        }
    }
}

#[test]
fn free_particle_band() {
    let b = solve_bands(0.0, 1, 32, 33).unwrap();
    for (k, e) in b.k_points().iter().zip(b.dispersion(0).unwrap()) {
        assert!((e - k * k).abs() < 1e-12);
    }
}

#[test]
fn deeper_lattice_narrows_band() {
    let shallow = solve_bands(20.0, 1, 64, 33).unwrap();
    let deep = solve_bands(32.0, 1, 64, 33).unwrap();
    assert!(deep.bandwidth(0).unwrap() < shallow.bandwidth(0).unwrap());
}

#[test]
fn harmonic_gap_for_deep_lattices() {
    for q in [15.0, 20.0, 32.0, 40.0, 60.0] {
        let gap = eigenvalue(q, 0.0, 1) - eigenvalue(q, 0.0, 0);
        let harmonic = 2.0 * q.sqrt();
        assert!(
            (gap / harmonic - 1.0).abs() < 0.15,
            "q {q}: {gap} vs {harmonic}"
        );
    }
}

#[test]
fn deep_lattice_hopping() {
    let b = solve_bands(32.0, 2, 64, 33).unwrap();
    let (j0, j1) = (hopping(&b, 0).unwrap(), hopping(&b, 1).unwrap());
    assert!(j0 > 0.0 && j0 < 1e-2);
    assert!(j1 < 0.0);
}

#[test]
fn hopping_routes_agree() {
    for q in [20.0, 32.0, 40.0] {
        let b = solve_bands(q, 3, 64, 33).unwrap();
        for band in 0..3 {
            let (f, r) = (
                hopping(&b, band).unwrap(),
                hopping_real_space(&b, band).unwrap(),
            );
            assert!((f - r).abs() < 1e-6, "q {q} band {band}: {f} vs {r}");
        }
    }
    // shallow lattice, and an odd k grid where the Wannier period has no sign flip
    for (q, nk) in [(8.0, 64), (10.0, 63)] {
        let b = solve_bands(q, 3, nk, 33).unwrap();
        for band in 0..3 {
            let (f, r) = (
                hopping(&b, band).unwrap(),
                hopping_real_space(&b, band).unwrap(),
            );
            assert!(
                (f - r).abs() < 1e-10,
                "q {q} nk {nk} band {band}: {f} vs {r}"
            );
        }
    }
}

#[test]
fn wannier_localization_and_parity() {
    let b = solve_bands(32.0, 2, 64, 33).unwrap();
    let s = wannier(&b, 0, 0).unwrap();
    let c = s.center_index();
    let per_site = (std::f64::consts::PI / s.spacing).round() as usize;
    assert!((s.samples[c] - s.peak()).abs() < 1e-12);
    assert!(s.samples[c + per_site].abs() < 1e-2 * s.peak());
    for j in 1..per_site {
        assert!((s.samples[c + j] - s.samples[c - j]).abs() < 1e-10);
    }
    let p = wannier(&b, 1, 0).unwrap();
    assert!(p.samples[c].abs() < 1e-8);
    for j in 1..per_site {
        assert!((p.samples[c + j] + p.samples[c - j]).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dispersion_even_and_ordered(q in 0.5f64..50.0) {
        let b = solve_bands(q, 3, 32, 33).unwrap();
        let n = b.k_points().len();
        for band in 0..3 {
            let e = b.dispersion(band).unwrap();
            for i in 0..n {
                prop_assert!((e[i] - e[n - 1 - i]).abs() < 1e-10);
            }
        }
        for i in 0..n {
            prop_assert!(b.dispersion(0).unwrap()[i] < b.dispersion(1).unwrap()[i]);
            prop_assert!(b.dispersion(1).unwrap()[i] < b.dispersion(2).unwrap()[i]);
        }
        let j0 = hopping(&b, 0).unwrap();
        let j1 = hopping(&b, 1).unwrap();
        prop_assert!(j1.abs() > j0.abs());
    }

    #[test]
    fn wannier_orthonormal(q in 4.0f64..45.0, band in 0usize..3) {
        // ±32 sites is one period of the 64-point Wannier function, which
        // changes sign from one period to the next
        let b = solve_bands(q, 3, 64, 33).unwrap();
        let w = wannier_on_grid(&b, band, 0, 256, 32).unwrap();
        prop_assert!((w.norm_squared() - 1.0).abs() < 1e-8);
        let period = w.samples.len() - 1;
        let shift = (std::f64::consts::PI / w.spacing).round() as usize;
        let overlap: f64 = (0..period)
            .map(|j| {
                let neighbour = if j >= shift { w.samples[j - shift] } else { -w.samples[j + period - shift] };
                w.samples[j] * neighbour
            })
            .sum::<f64>()
            * w.spacing;
        prop_assert!(overlap.abs() < 1e-8, "{overlap}");
    }

    #[test]
    fn eigen_decomposition_reconstructs(q in 0.0f64..60.0, k in -1.0f64..1.0) {
        let h = orbital_lattice::bands::plane_wave_hamiltonian(q, k, 33);
        let (vals, vecs) = plane_wave_eigen(q, k, 33);
        let back = &vecs * nalgebra::DMatrix::from_diagonal(&vals) * vecs.transpose();
        prop_assert!((back - &h).norm() < 1e-10 * h.norm());
        for i in 1..vals.len() {
            prop_assert!(vals[i] >= vals[i - 1]);
        }
    }
}
