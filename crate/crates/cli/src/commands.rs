//! One function per subcommand. Each returns its files without touching
//! the disk, plus a few summary lines for the terminal.

use anyhow::{bail, Context, Result};
use serde::Serialize;

use orbital_lattice::bands::{solve_bands, wannier};
use orbital_lattice::dynamics::{evolve, EvolveOptions, OnsiteDriveModel};
use orbital_lattice::manybody::{self, ChainModel, ChainSpec, LanczosSettings, ManybodySettings};
use orbital_lattice::onsite::{self, build_basis, QuantumState, TargetLabel, TwoParticleBasis};
use orbital_lattice::par::{self, Execution};
use orbital_lattice::params::{compute_params, sp_orbitals, Direction, LatticeGeometry, Orbital};
use orbital_lattice::protocols::{self, analyze_phase, run_protocol, ScenarioSettings};
use orbital_lattice::scan::{self, locate_resonance, ScanSettings};
use orbital_lattice::units::UnitSystem;

use crate::config::{Command, Model, RunConfig, Scenario};
use crate::export::{Artifacts, Table};

/// Files and terminal summary of one run.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub summary: Vec<String>,
}

/// Validates `config` for `command` and runs it.
pub fn run(command: Command, config: &RunConfig) -> Result<Outcome> {
    config.validate(command)?;
    let mut resolved = config.clone();
    resolved.command = Some(command);
    let provenance = format!("config: {}", serde_json::to_string(&resolved)?);
    let out = match command {
        Command::Bands => bands(config, &provenance),
        Command::Params => params(config, &provenance),
        Command::Scan => scan(config, &provenance),
        Command::Evolve => evolve_onsite(config, &provenance),
        Command::Protocol => protocol(config, &provenance),
        Command::Manybody => manybody(config, &provenance),
    };
    out.with_context(|| format!("{command:?} failed").to_lowercase())
}

fn bands(config: &RunConfig, provenance: &str) -> Result<Outcome> {
    let b = &config.bands;
    let structure = solve_bands(b.depth, b.count, b.k_points, b.plane_waves)?;
    let mut table =
        Table::new(std::iter::once("k".to_string()).chain((0..b.count).map(|n| format!("E_{n}"))))
            .comment(provenance);
    for (ik, &k) in structure.k_points().iter().enumerate() {
        let mut row = vec![k];
        for n in 0..b.count {
            row.push(structure.dispersion(n)?[ik]);
        }
        table.push(row);
    }
    let w = wannier(&structure, b.wannier_band, 0)?;
    let mut wt = Table::new(["x", "w"]).comment(provenance);
    for (x, v) in w.x.iter().zip(&w.samples) {
        wt.push(vec![*x, *v]);
    }
    let mut out = Outcome::default();
    out.artifacts.csv("bands.csv", &table)?;
    out.artifacts.csv("wannier.csv", &wt)?;
    for n in 0..b.count {
        out.summary.push(format!(
            "band {n}: width {:.6} E_R, hopping {:.6} E_R",
            structure.bandwidth(n)?,
            orbital_lattice::bands::hopping(&structure, n)?
        ));
    }
    Ok(out)
}

fn params(config: &RunConfig, provenance: &str) -> Result<Outcome> {
    let g = config.coupling();
    let kappa = config.geometry.kappa;
    let depths = config.sweep.depths();
    let rows = par::map_slice(&depths, Execution::Auto, |&q| -> Result<Vec<f64>> {
        let geom = LatticeGeometry::new(q, q, kappa, g)?;
        let p = compute_params(&geom, &sp_orbitals())?;
        let (s, x, y) = (Orbital::S, Orbital::PX, Orbital::PY);
        Ok(vec![
            q,
            p.energy(s)?,
            p.energy(x)?,
            p.energy(y)?,
            p.u(s, s)?,
            p.u(x, x)?,
            p.u(y, y)?,
            p.u(s, x)?,
            p.u(s, y)?,
            p.u(x, y)?,
            p.hopping(Direction::X, 0)?,
            p.hopping(Direction::X, 1)?,
        ])
    });
    let mut table = Table::new([
        "q", "E_s", "E_px", "E_py", "U_ss", "U_xx", "U_yy", "U_sx", "U_sy", "U_xy", "J0", "J1",
    ])
    .comment(provenance);
    for row in rows {
        table.push(row?);
    }
    let mut out = Outcome::default();
    out.summary.push(format!(
        "{} depths from {} to {}",
        depths.len(),
        depths[0],
        depths[depths.len() - 1]
    ));
    out.artifacts.csv("params.csv", &table)?;
    Ok(out)
}

fn onsite_model(config: &RunConfig) -> Result<(TwoParticleBasis, OnsiteDriveModel)> {
    let basis = build_basis(&config.model.orbitals(), (Orbital::S, Orbital::S))?;
    let model = OnsiteDriveModel::new(&config.geometry()?, config.drive.amplitude(), &basis)?;
    Ok((basis, model))
}

#[derive(Serialize)]
struct PeakRecord {
    center_hz: f64,
    height: f64,
    fwhm_hz: f64,
    target_state: Option<String>,
}

fn scan(config: &RunConfig, provenance: &str) -> Result<Outcome> {
    let units = config.units();
    let (_, model) = onsite_model(config)?;
    let duration = config.time(&config.duration, "duration")?;
    let mut settings = match config.model {
        Model::Sp => ScanSettings {
            tolerance: config.tolerance,
            ..ScanSettings::with_duration(duration)
        },
        Model::Spd => {
            let s = ScanSettings::extended(duration);
            ScanSettings {
                tolerance: config.tolerance.min(s.tolerance),
                ..s
            }
        }
    };
    settings.points = config.scan.points;
    if let Some(t) = config.scan.threshold {
        settings.threshold = t;
    }
    if let Some([lo, hi]) = &config.drive.omega_range {
        settings.range = Some((
            config.frequency(lo, "drive.omega_range[0]")?,
            config.frequency(hi, "drive.omega_range[1]")?,
        ));
    }
    let result = scan::scan(&model, &settings, config.model.tag())?;

    let mut table = Table::new(["omega_hz", "omega_recoil", "efficiency"]).comment(provenance);
    for (w, e) in result.omega.iter().zip(&result.efficiency) {
        table.push(vec![units.omega_to_hz(*w), *w, *e]);
    }
    let peaks: Vec<PeakRecord> = result
        .peaks
        .iter()
        .map(|p| PeakRecord {
            center_hz: units.omega_to_hz(p.center),
            height: p.height,
            fwhm_hz: units.omega_to_hz(p.fwhm),
            target_state: p.target_state.clone(),
        })
        .collect();
    let mut out = Outcome::default();
    for p in &peaks {
        out.summary.push(format!(
            "peak {:.1} Hz  height {:.4}  fwhm {:.1} Hz  {}",
            p.center_hz,
            p.height,
            p.fwhm_hz,
            p.target_state.as_deref().unwrap_or("?")
        ));
    }
    out.summary.push(format!(
        "{} frequencies, max norm drift {:.2e}",
        result.len(),
        result.max_norm_drift
    ));
    out.artifacts.csv("scan.csv", &table)?;
    out.artifacts.json("peaks.json", &peaks)?;
    Ok(out)
}

fn occupation_table(
    basis: &TwoParticleBasis,
    units: &UnitSystem,
    times: &[f64],
    states: &[Vec<num_complex::Complex64>],
    provenance: &str,
) -> Table {
    let mut columns = vec!["t_ms".to_string()];
    columns.extend((0..basis.len()).map(|i| basis.label(i)));
    columns.push("norm_error".into());
    let mut table = Table::new(columns).comment(provenance);
    for (t, psi) in times.iter().zip(states) {
        let mut row = vec![units.time_to_ms(*t)];
        row.extend(psi.iter().map(|c| c.norm_sqr()));
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        row.push((norm - 1.0).abs());
        table.push(row);
    }
    table
}

fn evolve_onsite(config: &RunConfig, provenance: &str) -> Result<Outcome> {
    let units = config.units();
    let (basis, model) = onsite_model(config)?;
    let omega = config.frequency(
        config.drive.omega.as_ref().expect("validated"),
        "drive.omega",
    )?;
    let duration = config.time(&config.duration, "duration")?;
    let dt = config.time(&config.sample_interval, "sample_interval")?;
    let psi0 = QuantumState::basis_state(basis.len(), 0);
    let opts = EvolveOptions::with_tolerance(config.tolerance).sampled(dt);
    let traj = evolve(&model.provider(omega), &psi0, (0.0, duration), &opts)?;
    let mut out = Outcome::default();
    out.summary.push(format!(
        "{} samples, transfer efficiency {:.6}, max norm drift {:.2e}",
        traj.len(),
        orbital_lattice::dynamics::transfer_efficiency(&traj, 0)?,
        traj.max_norm_error()
    ));
    out.artifacts.csv(
        "trajectory.csv",
        &occupation_table(&basis, &units, &traj.times, &traj.states, provenance),
    )?;
    Ok(out)
}

#[derive(Serialize)]
struct SegmentView<'a> {
    index: usize,
    kind: &'a str,
    start_ms: f64,
    end_ms: f64,
    geometry_start: LatticeGeometry,
    geometry_end: LatticeGeometry,
    outcome: &'a protocols::SegmentOutcome,
}

fn protocol(config: &RunConfig, provenance: &str) -> Result<Outcome> {
    let units = config.units();
    let mut out = Outcome::default();
    let definition = match config.protocol.scenario {
        Some(scenario) => {
            let base = config.geometry()?;
            let a = config.drive.amplitude;
            let (w_py, w_px) = protocols::pair_resonances(&base, a, units.ms_to_time(5.0))?;
            out.summary.push(format!(
                "pair resonances: p_y {:.1} Hz, p_x {:.1} Hz",
                units.omega_to_hz(w_py),
                units.omega_to_hz(w_px)
            ));
            let settings = ScenarioSettings {
                amplitude: a,
                ramp_duration: match &config.protocol.ramp {
                    Some(r) => config.time(r, "protocol.ramp")?,
                    None => units.ms_to_time(20.0),
                },
                hold_duration: units.ms_to_time(5.0),
                max_pulse: units.ms_to_time(10.0),
                ..ScenarioSettings::default()
            };
            let mut p = match scenario {
                Scenario::A => protocols::scenario_a(base, w_py, &settings),
                Scenario::B => protocols::scenario_b(base, w_py, w_px, &settings),
            };
            p.species = Some(config.preset.into());
            p.tolerance = config.tolerance;
            p
        }
        None => config.protocol.definition.clone().expect("validated"),
    };
    let psi0 = definition.ground_state()?;
    let run = run_protocol(&definition, &psi0)?;

    let mut table = occupation_table(
        &run.basis,
        &units,
        &run.trajectory.times,
        &run.trajectory.states,
        provenance,
    );
    table.columns.insert(1, "segment".into());
    for (k, row) in table.rows.iter_mut().enumerate() {
        let seg = run
            .segments
            .iter()
            .rev()
            .find(|s| s.first_sample <= k)
            .map_or(0, |s| s.index);
        row.insert(1, seg as f64);
    }
    out.artifacts.csv("protocol_trajectory.csv", &table)?;

    let views: Vec<SegmentView> = run
        .segments
        .iter()
        .map(|s| SegmentView {
            index: s.index,
            kind: &s.kind,
            start_ms: units.time_to_ms(s.start),
            end_ms: units.time_to_ms(s.end),
            geometry_start: s.geometry_start,
            geometry_end: s.geometry_end,
            outcome: &s.outcome,
        })
        .collect();
    out.artifacts.json("protocol_segments.json", &views)?;
    out.artifacts.json("protocol.json", &definition)?;
    for v in &views {
        let outcome = match v.outcome {
            protocols::SegmentOutcome::Completed => "completed".to_string(),
            protocols::SegmentOutcome::Triggered { .. } => "stop condition met".to_string(),
            protocols::SegmentOutcome::Unreached { best_depletion } => {
                format!("stop condition not met (best depletion {best_depletion:.6})")
            }
        };
        out.summary.push(format!(
            "segment {} {}: {:.3}..{:.3} ms, {outcome}",
            v.index, v.kind, v.start_ms, v.end_ms
        ));
    }

    if !run.segments.is_empty()
        && run.basis.doubly_occupied(Orbital::PX).is_some()
        && run.basis.doubly_occupied(Orbital::PY).is_some()
    {
        // relative phase during the last segment only
        let last = run.segment_trajectory(run.segments.len() - 1)?;
        let analysis = analyze_phase(&last, &run.basis)?;
        let mut pt =
            Table::new(["t_ms", "occ_px", "occ_py", "phase", "vortex"]).comment(provenance);
        for r in &analysis.reports {
            pt.push(vec![
                units.time_to_ms(r.time),
                r.occ_px,
                r.occ_py,
                r.phase.unwrap_or(f64::NAN),
                f64::from(u8::from(r.vortex)),
            ]);
        }
        out.artifacts.csv("phase_report.csv", &pt)?;
        if let Some(period) = analysis.rabi_period {
            out.summary.push(format!(
                "occupation exchange period {:.4} ms",
                units.time_to_ms(period)
            ));
        }
    }
    let final_state = run.final_state();
    out.summary.push(format!(
        "final occupations {}",
        final_state
            .occupations()
            .iter()
            .enumerate()
            .map(|(i, p)| format!("{} {:.6}", run.basis.label(i), p))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    Ok(out)
}

/// Resonance into the doubly occupied `target` state of the two-orbital
/// site `{s, target}`, refined on the drive response.
pub fn located_resonance(
    base: &LatticeGeometry,
    config: &RunConfig,
    target: Orbital,
) -> Result<f64> {
    let units = config.units();
    let basis = build_basis(&[Orbital::S, target], (Orbital::S, Orbital::S))?;
    let model = OnsiteDriveModel::new(base, config.drive.amplitude(), &basis)?;
    let idx = basis.doubly_occupied(target).context("target pair state")?;
    let preds = onsite::resonance_predictions(&model.static_matrix()?, &basis, None);
    let Some(guess) = preds.iter().find(|p| p.target == TargetLabel::State(idx)) else {
        bail!("no resonance into the {target} pair state");
    };
    let (w, _) = locate_resonance(
        &model,
        guess.omega,
        units.ms_to_time(5.0),
        config.tolerance,
        0,
        Execution::Auto,
    )?;
    Ok(w)
}

fn manybody(config: &RunConfig, provenance: &str) -> Result<Outcome> {
    let units = config.units();
    let m = &config.manybody;
    let base = config.geometry()?;
    let orbitals = vec![Orbital::S, Orbital::PX];
    let settings = ManybodySettings {
        sites: m.sites,
        orbitals: orbitals.clone(),
        particles: m.particles,
        chain: ChainSpec {
            direction: Direction::X,
            periodic: m.periodic,
        },
        hopping: m.hopping,
        krylov_tolerance: m.krylov_tolerance,
        steps_per_period: m.steps_per_period,
        ..ManybodySettings::default()
    };
    let model = ChainModel::new(&base, config.drive.amplitude(), settings)?;
    let omega = match &config.drive.omega {
        Some(w) => config.frequency(w, "drive.omega")?,
        None => located_resonance(&base, config, Orbital::PX)?,
    };
    let dt = config.time(&config.sample_interval, "sample_interval")?;
    let mut out = Outcome::default();
    out.summary.push(format!(
        "{} sites, {} particles, dimension {}, drive {:.1} Hz",
        m.sites,
        m.particles,
        model.dim(),
        units.omega_to_hz(omega)
    ));

    let paired = m.particles == 2 * m.sites;
    let span = match &m.span {
        Some(s) => config.time(s, "manybody.span")?,
        None if paired => {
            let window = config.time(&config.duration, "duration")?;
            let pair = build_basis(&orbitals, (Orbital::S, Orbital::S))?;
            let site = OnsiteDriveModel::new(&base, config.drive.amplitude(), &pair)?;
            let psi = onsite::ground_state(&site.static_matrix()?);
            let traj = evolve(
                &site.provider(omega),
                &psi,
                (0.0, window),
                &EvolveOptions::default().sampled(dt),
            )?;
            let px = pair
                .doubly_occupied(Orbital::PX)
                .context("p_x pair state")?;
            let series = traj.occupation_series(px);
            manybody::first_cycle_end(&traj.times, &series)
                .context("no complete transfer cycle inside 'duration'; set 'manybody.span'")?
        }
        None => bail!("field 'manybody.span' is required unless there are two atoms per site"),
    };

    let lanczos = LanczosSettings::default();
    let run = if paired {
        let cmp =
            manybody::compare_with_single_site(&model, Orbital::PX, omega, span, dt, &lanczos)?;
        let mut ct = Table::new(["t_ms", "chain", "single_site", "difference"]).comment(provenance);
        for ((t, a), b) in cmp.times.iter().zip(&cmp.chain).zip(&cmp.single) {
            ct.push(vec![units.time_to_ms(*t), *a, *b, a - b]);
        }
        out.artifacts.csv("manybody_comparison.csv", &ct)?;
        out.summary.push(format!(
            "max |chain - single site| {:.4}, max site variance {:.4}",
            cmp.max_difference(span),
            cmp.max_variance(span)
        ));
        cmp.run
    } else {
        let gs = model.ground_state(&lanczos)?;
        manybody::evolve_manybody(&model, omega, &gs.amplitudes(), (0.0, span), dt)?
    };

    let mut columns = vec!["t_ms".to_string()];
    for o in &orbitals {
        columns.extend((0..m.sites).map(|i| format!("occ_{o}_site{i}")));
    }
    columns.extend((0..m.sites).map(|i| format!("var_n_site{i}")));
    columns.extend(["energy".to_string(), "norm_error".to_string()]);
    let mut table = Table::new(columns).comment(provenance);
    let norb = orbitals.len();
    for s in &run.samples {
        let mut row = vec![units.time_to_ms(s.time)];
        for o in 0..norb {
            row.extend((0..m.sites).map(|i| s.occupations[i * norb + o]));
        }
        row.extend(&s.variance);
        row.extend([s.energy, s.norm_error]);
        table.push(row);
    }
    out.summary.push(format!(
        "{} steps, Krylov dimension <= {}, max norm drift {:.2e}",
        run.steps,
        run.max_krylov_dim,
        run.max_norm_error()
    ));
    out.artifacts.csv("manybody.csv", &table)?;
    Ok(out)
}
