use orbital_lattice::dynamics::{DriveAmplitude, OnsiteDriveModel};
use orbital_lattice::onsite::build_basis;
use orbital_lattice::par::Execution;
use orbital_lattice::params::{sp_orbitals, LatticeGeometry, Orbital};
use orbital_lattice::scan::{efficiencies, extract_peaks, locate_resonance, scan, ScanSettings};
use orbital_lattice::units::UnitSystem;

fn model(amplitude: f64) -> OnsiteDriveModel {
    let units = UnitSystem::chromium52();
    let g = LatticeGeometry::new(32.0, 20.0, 8.0, units.coupling()).unwrap();
    let basis = build_basis(&sp_orbitals(), (Orbital::S, Orbital::S)).unwrap();
    OnsiteDriveModel::new(&g, DriveAmplitude::lattice(amplitude, 0.0), &basis).unwrap()
}

fn quick(duration: f64) -> ScanSettings {
    ScanSettings {
        points: 50,
        window_points: 0,
        max_refinements: 0,
        ..ScanSettings::with_duration(duration)
    }
}

#[test]
fn lorentzian_width() {
    let (c, gamma) = (3.0, 0.02);
    let x: Vec<f64> = (0..4001).map(|i| 2.0 + i as f64 * 0.0005).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|v| 0.9 / (1.0 + ((v - c) / gamma).powi(2)))
        .collect();
    let peaks = extract_peaks(&x, &y, 0.5);
    assert_eq!(peaks.len(), 1);
    let p = &peaks[0];
    assert!(p.resolved);
    assert!((p.center - c).abs() <= p.center_uncertainty + 1e-12);
    assert!((p.fwhm / (2.0 * gamma) - 1.0).abs() < 0.01);
}

#[test]
fn edge_maximum_is_unresolved() {
    let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|v| (-(v - 49.0).powi(2) / 20.0).exp())
        .collect();
    let peaks = extract_peaks(&x, &y, 0.5);
    assert_eq!(peaks.len(), 1);
    assert!(!peaks[0].resolved);
}

#[test]
fn weak_drive_approaches_the_static_baseline() {
    // |200⟩ is not an eigenstate, so even an undriven site depletes slightly
    let units = UnitSystem::chromium52();
    let omegas: Vec<f64> = (0..50).map(|i| 12.0 + 0.25 * i as f64).collect();
    let run = |a| {
        efficiencies(
            &model(a),
            &omegas,
            units.ms_to_time(1.0),
            1e-12,
            0,
            Execution::Auto,
        )
        .unwrap()
    };
    let (weak, none) = (run(0.01), run(0.0));
    let baseline = none[0].0;
    assert!(baseline > 0.0 && baseline < 0.05);
    for ((w, n), omega) in weak.iter().zip(&none).zip(&omegas) {
        assert_eq!(n.0, baseline);
        assert!(
            (w.0 - n.0).abs() < 1e-3,
            "omega {omega}: {} vs {}",
            w.0,
            n.0
        );
    }
}

#[test]
fn physical_and_recoil_ranges_agree() {
    let units = UnitSystem::chromium52();
    let m = model(4.0);
    let d = units.ms_to_time(0.5);
    let (lo, hi) = (200_000.0, 300_000.0);
    let a = scan(&m, &quick(d).range_hz(&units, lo, hi), "sp").unwrap();
    let b = scan(
        &m,
        &ScanSettings {
            range: Some((units.hz_to_omega(lo), units.hz_to_omega(hi))),
            ..quick(d)
        },
        "sp",
    )
    .unwrap();
    assert_eq!(a.omega, b.omega);
    assert_eq!(a.efficiency, b.efficiency);
}

#[test]
fn execution_modes_agree() {
    let m = model(4.0);
    let omegas: Vec<f64> = (0..12).map(|i| 14.0 + 0.6 * i as f64).collect();
    let par = efficiencies(&m, &omegas, 200.0, 1e-12, 0, Execution::Auto).unwrap();
    let seq = efficiencies(&m, &omegas, 200.0, 1e-12, 0, Execution::Sequential).unwrap();
    assert_eq!(par, seq);
}

#[test]
fn resonance_stable_and_narrower_at_half_amplitude() {
    let units = UnitSystem::chromium52();
    let window = units.ms_to_time(20.0);
    let guess = units.hz_to_omega(281_200.0);
    let (full, half) = (model(4.0), model(2.0));
    let (w4, _) = locate_resonance(
        &full,
        guess,
        units.ms_to_time(5.0),
        1e-12,
        0,
        Execution::Auto,
    )
    .unwrap();
    let (w2, _) = locate_resonance(
        &half,
        guess,
        units.ms_to_time(10.0),
        1e-12,
        0,
        Execution::Auto,
    )
    .unwrap();
    assert!((w2 / w4 - 1.0).abs() < 0.005, "{w4} vs {w2}");
    let local = |m: &OnsiteDriveModel, w: f64| {
        let s = ScanSettings {
            points: 80,
            range: Some((w * 0.985, w * 1.015)),
            ..ScanSettings::with_duration(window)
        };
        let r = scan(m, &s, "sp").unwrap();
        r.peak_near(w).unwrap().fwhm
    };
    let (f4, f2) = (local(&full, w4), local(&half, w2));
    assert!(f2 < f4, "{f2} vs {f4}");
}
