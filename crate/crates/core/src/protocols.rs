//! Piecewise drive schedules (vibration pulses, parameter ramps, free
//! evolution) and diagnostics for the p-orbital pair states.
//!
//! Times are in `ħ/E_R`, frequencies in `E_R/ħ`. Each segment evolves with
//! its own constant energy offset, so the global phase is not continuous
//! across segment boundaries; every reported quantity is phase-invariant.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    self, ControlFlow, DriveAmplitude, EvolveOptions, FnHamiltonian, OnsiteDriveModel,
    StaticHamiltonian, Trajectory,
};
use crate::error::{Error, Result};
use crate::onsite::{self, QuantumState, TwoParticleBasis};
use crate::params::{self, Axis, LatticeGeometry, Orbital};
use crate::units::Species;

/// Lattice parameter swept by a ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampParameter {
    Qx,
    Qy,
    Kappa,
    G,
}

impl RampParameter {
    pub fn value(&self, geom: &LatticeGeometry) -> f64 {
        match self {
            RampParameter::Qx => geom.qx,
            RampParameter::Qy => geom.qy,
            RampParameter::Kappa => geom.kappa,
            RampParameter::G => geom.g,
        }
    }

    fn direction(&self, delta: f64) -> [f64; 4] {
        let mut d = [0.0; 4];
        d[*self as usize] = delta;
        d
    }
}

/// Time profile of a ramp, mapping `τ ∈ [0, 1]` to progress in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampShape {
    /// `(1 − cos πτ)/2`, zero slope at both ends.
    #[default]
    RaisedCosine,
    Linear,
}

impl RampShape {
    pub fn progress(&self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, 1.0);
        match self {
            RampShape::RaisedCosine => 0.5 * (1.0 - (PI * tau).cos()),
            RampShape::Linear => tau,
        }
    }
}

/// When a vibration segment ends. Depletion is `1 − |⟨ψ₀|ψ⟩|²` with `ψ₀`
/// the state the protocol started from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCondition {
    /// Run the full segment duration.
    Duration,
    DepletionAtLeast(f64),
    /// Initial-state overlap strictly below the level.
    InitialBelow(f64),
}

impl StopCondition {
    fn validate(&self) -> Result<()> {
        match *self {
            StopCondition::Duration => Ok(()),
            StopCondition::DepletionAtLeast(x) if x > 0.0 && x <= 1.0 => Ok(()),
            StopCondition::InitialBelow(x) if (0.0..1.0).contains(&x) => Ok(()),
            other => Err(Error::invalid(format!(
                "stop condition {other:?} out of range"
            ))),
        }
    }

    fn met(&self, reference_occupation: f64) -> bool {
        match *self {
            StopCondition::Duration => false,
            StopCondition::DepletionAtLeast(x) => 1.0 - reference_occupation >= x,
            StopCondition::InitialBelow(x) => reference_occupation < x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    /// Sinusoidal drive `Q + sin(ω (t − t_start)) · amplitude`. `duration`
    /// is the fixed length for [`StopCondition::Duration`] and the cap
    /// otherwise.
    Vibrate {
        omega: f64,
        amplitude: DriveAmplitude,
        stop: StopCondition,
        duration: f64,
    },
    Ramp {
        parameter: RampParameter,
        from: f64,
        to: f64,
        duration: f64,
        #[serde(default)]
        shape: RampShape,
    },
    Hold {
        duration: f64,
    },
}

impl Segment {
    pub fn kind(&self) -> &'static str {
        match self {
            Segment::Vibrate { .. } => "vibrate",
            Segment::Ramp { .. } => "ramp",
            Segment::Hold { .. } => "hold",
        }
    }

    pub fn duration(&self) -> f64 {
        match *self {
            Segment::Vibrate { duration, .. }
            | Segment::Ramp { duration, .. }
            | Segment::Hold { duration } => duration,
        }
    }
}

fn default_orbitals() -> Vec<Orbital> {
    params::sp_orbitals()
}

fn default_sample_interval() -> f64 {
    0.25
}

fn default_tolerance() -> f64 {
    1e-12
}

/// Ordered segments applied to a starting geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveProtocol {
    pub base: LatticeGeometry,
    #[serde(default)]
    pub species: Option<Species>,
    #[serde(default = "default_orbitals")]
    pub orbitals: Vec<Orbital>,
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    pub segments: Vec<Segment>,
}

/// Grid points for a ramp table over the full sweep.
pub const RAMP_TABLE_POINTS: usize = 33;

impl DriveProtocol {
    pub fn new(base: LatticeGeometry, segments: Vec<Segment>) -> Self {
        Self {
            base,
            species: None,
            orbitals: default_orbitals(),
            sample_interval: default_sample_interval(),
            tolerance: default_tolerance(),
            segments,
        }
    }

    pub fn basis(&self) -> Result<TwoParticleBasis> {
        onsite::build_basis(&self.orbitals, (Orbital::S, Orbital::S))
    }

    /// Ground eigenstate of the on-site Hamiltonian at the base geometry.
    pub fn ground_state(&self) -> Result<QuantumState> {
        let basis = self.basis()?;
        let h = onsite::hamiltonian_matrix(
            &basis,
            &params::compute_params(&self.base, &self.orbitals)?,
        )?;
        Ok(onsite::ground_state(&h))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every segment against the geometry it starts from.
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(Error::invalid("sample interval must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        self.basis()?;
        let mut geom = self.base;
        for (i, seg) in self.segments.iter().enumerate() {
            let ctx = |e: Error| Error::invalid(format!("segment {i} ({}): {e}", seg.kind()));
            let d = seg.duration();
            if !(d >= 0.0 && d.is_finite()) {
                return Err(ctx(Error::invalid(
                    "duration must be finite and non-negative",
                )));
            }
            match *seg {
                Segment::Vibrate {
                    omega,
                    amplitude,
                    stop,
                    ..
                } => {
                    stop.validate().map_err(ctx)?;
                    dynamics::Drive::new(geom, amplitude, omega).map_err(ctx)?;
                }
                Segment::Ramp {
                    parameter,
                    from,
                    to,
                    ..
                } => {
                    let current = parameter.value(&geom);
                    if (from - current).abs() > 1e-9 * current.abs().max(1.0) {
                        return Err(ctx(Error::invalid(format!(
                            "ramp starts at {from} but the parameter is {current}"
                        ))));
                    }
                    geom = Axis::Line(parameter.direction(to - from)).apply(&geom, 1.0);
                    geom.validate().map_err(ctx)?;
                }
                Segment::Hold { .. } => {}
            }
        }
        Ok(())
    }

    /// Geometry after every ramp has completed.
    pub fn final_geometry(&self) -> LatticeGeometry {
        self.segments.iter().fold(self.base, |g, s| match *s {
            Segment::Ramp {
                parameter,
                from,
                to,
                ..
            } => Axis::Line(parameter.direction(to - from)).apply(&g, 1.0),
            _ => g,
        })
    }
}

/// How a segment ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentOutcome {
    Completed,
    /// Stop condition met at this time.
    Triggered {
        time: f64,
    },
    /// Stop condition never met; the segment ran its full duration.
    Unreached {
        best_depletion: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub index: usize,
    pub kind: String,
    pub start: f64,
    pub end: f64,
    /// Trajectory samples `first_sample..=last_sample` belong to this segment.
    pub first_sample: usize,
    pub last_sample: usize,
    pub geometry_start: LatticeGeometry,
    pub geometry_end: LatticeGeometry,
    pub outcome: SegmentOutcome,
}

/// Ramp Hamiltonian `H(t)` for one protocol segment.
#[derive(Debug, Clone)]
pub struct RampSchedule {
    pub model: OnsiteDriveModel,
    pub shape: RampShape,
    pub start: f64,
    pub duration: f64,
}

impl RampSchedule {
    pub fn new(
        geom: &LatticeGeometry,
        parameter: RampParameter,
        to: f64,
        duration: f64,
        shape: RampShape,
        basis: &TwoParticleBasis,
        start: f64,
    ) -> Result<Self> {
        let delta = to - parameter.value(geom);
        let table = params::parameter_table(
            geom,
            Axis::Line(parameter.direction(delta)),
            0.0,
            1.0,
            RAMP_TABLE_POINTS,
            basis.orbitals(),
        )?;
        Ok(Self {
            model: OnsiteDriveModel::from_table(table, basis)?,
            shape,
            start,
            duration,
        })
    }

    /// Ramp progress at absolute time `t`; a zero-length ramp is complete.
    pub fn progress(&self, t: f64) -> f64 {
        if self.duration == 0.0 {
            return 1.0;
        }
        self.shape.progress((t - self.start) / self.duration)
    }

    pub fn matrix_at(&self, t: f64) -> Result<DMatrix<f64>> {
        self.model.matrix_at(self.progress(t))
    }
}

/// Result of [`run_protocol`].
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub trajectory: Trajectory,
    pub segments: Vec<SegmentRecord>,
    pub basis: TwoParticleBasis,
    /// Ramp schedules keyed by segment index.
    pub ramps: Vec<(usize, RampSchedule)>,
}

impl ProtocolRun {
    /// Samples belonging to segment `index`.
    pub fn segment_trajectory(&self, index: usize) -> Result<Trajectory> {
        let rec = self
            .segments
            .get(index)
            .ok_or_else(|| Error::invalid(format!("no segment {index}")))?;
        let range = rec.first_sample..=rec.last_sample;
        Ok(Trajectory {
            times: self.trajectory.times[range.clone()].to_vec(),
            states: self.trajectory.states[range].to_vec(),
            stats: Default::default(),
        })
    }

    pub fn ramp(&self, index: usize) -> Option<&RampSchedule> {
        self.ramps.iter().find(|(i, _)| *i == index).map(|(_, r)| r)
    }

    /// True when no stop condition went unmet.
    pub fn all_reached(&self) -> bool {
        self.segments
            .iter()
            .all(|s| !matches!(s.outcome, SegmentOutcome::Unreached { .. }))
    }

    pub fn final_state(&self) -> QuantumState {
        self.trajectory
            .final_state()
            .expect("protocol trajectories hold at least the initial state")
    }
}

fn shifted(h: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = h.diagonal().mean();
    let mut out = h.clone();
    for i in 0..h.nrows() {
        out[(i, i)] -= mean;
    }
    out
}

/// Runs `protocol` from `psi0`. An unmet stop condition is reported in the
/// segment log and the protocol continues with the next segment.
pub fn run_protocol(protocol: &DriveProtocol, psi0: &QuantumState) -> Result<ProtocolRun> {
    protocol.validate()?;
    let basis = protocol.basis()?;
    if psi0.amplitudes.len() != basis.len() {
        return Err(Error::invalid(format!(
            "initial state has {} amplitudes, basis has {}",
            psi0.amplitudes.len(),
            basis.len()
        )));
    }
    let opts = EvolveOptions::with_tolerance(protocol.tolerance).sampled(protocol.sample_interval);

    let mut trajectory = Trajectory::single(psi0);
    let mut state = psi0.clone();
    let mut geom = protocol.base;
    let mut records = Vec::with_capacity(protocol.segments.len());
    let mut ramps = Vec::new();

    for (index, seg) in protocol.segments.iter().enumerate() {
        let start = state.time;
        let first_sample = trajectory.len() - 1;
        let geometry_start = geom;
        let end_time = start + seg.duration();
        let mut outcome = SegmentOutcome::Completed;
        let part = match *seg {
            Segment::Vibrate {
                omega,
                amplitude,
                stop,
                ..
            } => {
                let model = OnsiteDriveModel::new(&geom, amplitude, &basis)?;
                let provider = model.provider(omega).with_phase(-omega * start);
                let mut best: f64 = 0.0;
                let mut hit = None;
                let mut observer = |t: f64, psi: &[Complex64]| {
                    let occ = psi0
                        .amplitudes
                        .iter()
                        .zip(psi)
                        .map(|(a, b)| a.conj() * b)
                        .sum::<Complex64>()
                        .norm_sqr();
                    best = best.max(1.0 - occ);
                    if stop.met(occ) {
                        hit = Some(t);
                        return ControlFlow::Stop;
                    }
                    ControlFlow::Continue
                };
                let part = dynamics::evolve_until(
                    &provider,
                    &state,
                    (start, end_time),
                    &opts,
                    &mut observer,
                )?;
                outcome = match (stop, hit) {
                    (StopCondition::Duration, _) => SegmentOutcome::Completed,
                    (_, Some(time)) => SegmentOutcome::Triggered { time },
                    (_, None) => SegmentOutcome::Unreached {
                        best_depletion: best,
                    },
                };
                part
            }
            Segment::Ramp {
                parameter,
                to,
                duration,
                shape,
                ..
            } => {
                let schedule =
                    RampSchedule::new(&geom, parameter, to, duration, shape, &basis, start)?;
                geom =
                    Axis::Line(parameter.direction(to - parameter.value(&geom))).apply(&geom, 1.0);
                let part = if duration > 0.0 {
                    let provider = FnHamiltonian::new(basis.len(), |t, out: &mut [f64]| {
                        schedule.model.fill_matrix(schedule.progress(t), out)
                    });
                    dynamics::evolve(&provider, &state, (start, end_time), &opts)?
                } else {
                    Trajectory::single(&state)
                };
                ramps.push((index, schedule));
                part
            }
            Segment::Hold { .. } => {
                let h = onsite::hamiltonian_matrix(
                    &basis,
                    &params::compute_params(&geom, &protocol.orbitals)?,
                )?;
                let provider = StaticHamiltonian::new(&shifted(&h));
                dynamics::evolve(&provider, &state, (start, end_time), &opts)?
            }
        };
        state = part
            .final_state()
            .ok_or_else(|| Error::invalid("segment produced an empty trajectory"))?;
        trajectory.extend(part);
        log::debug!(
            "segment {index} ({}) ended at t = {}",
            seg.kind(),
            state.time
        );
        records.push(SegmentRecord {
            index,
            kind: seg.kind().to_string(),
            start,
            end: state.time,
            first_sample,
            last_sample: trajectory.len() - 1,
            geometry_start,
            geometry_end: geom,
            outcome,
        });
    }
    Ok(ProtocolRun {
        trajectory,
        segments: records,
        basis,
        ramps,
    })
}

/// Occupation below which a relative phase is undefined.
pub const PHASE_OCCUPATION_FLOOR: f64 = 1e-6;
/// Occupation difference under which two p-pair states count as equal.
pub const VORTEX_OCCUPATION_TOLERANCE: f64 = 0.02;
/// Allowed distance of the relative phase from `±π/2` for a vortex state.
pub const VORTEX_PHASE_TOLERANCE: f64 = 0.05;

/// p-pair content of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub time: f64,
    /// Occupation of `|020⟩` (both in p_x).
    pub occ_px: f64,
    /// Occupation of `|002⟩` (both in p_y).
    pub occ_py: f64,
    /// `arg(c_py / c_px)` in `(−π, π]`; `None` when either occupation is
    /// below [`PHASE_OCCUPATION_FLOOR`].
    pub phase: Option<f64>,
    pub vortex: bool,
}

/// An equal-occupation crossing, interpolated between samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub time: f64,
    pub phase: f64,
    /// `min |φ ∓ π/2|`.
    pub deviation: f64,
    /// True when `|020⟩` loses occupation through the crossing.
    pub falling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAnalysis {
    pub reports: Vec<PhaseReport>,
    pub crossings: Vec<Crossing>,
    /// Period of the p_x/p_y occupation exchange, from same-direction
    /// crossings; `None` with fewer than two of either kind.
    pub rabi_period: Option<f64>,
}

impl PhaseAnalysis {
    pub fn max_crossing_deviation(&self) -> Option<f64> {
        self.crossings.iter().map(|c| c.deviation).reduce(f64::max)
    }

    pub fn vortex_count(&self) -> usize {
        self.reports.iter().filter(|r| r.vortex).count()
    }
}

fn quarter_deviation(phase: f64) -> f64 {
    (phase.abs() - FRAC_PI_2).abs()
}

/// Relative phase and occupations of the two doubly occupied p states.
pub fn analyze_phase(traj: &Trajectory, basis: &TwoParticleBasis) -> Result<PhaseAnalysis> {
    let ix = basis
        .doubly_occupied(Orbital::PX)
        .ok_or_else(|| Error::invalid("basis lacks the p_x pair state"))?;
    let iy = basis
        .doubly_occupied(Orbital::PY)
        .ok_or_else(|| Error::invalid("basis lacks the p_y pair state"))?;
    let product = |s: &[Complex64]| s[iy] * s[ix].conj();

    let reports: Vec<PhaseReport> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&time, s)| {
            let (occ_px, occ_py) = (s[ix].norm_sqr(), s[iy].norm_sqr());
            let phase = (occ_px >= PHASE_OCCUPATION_FLOOR && occ_py >= PHASE_OCCUPATION_FLOOR)
                .then(|| product(s).arg());
            let vortex = (occ_px - occ_py).abs() < VORTEX_OCCUPATION_TOLERANCE
                && phase.is_some_and(|p| quarter_deviation(p) < VORTEX_PHASE_TOLERANCE);
            PhaseReport {
                time,
                occ_px,
                occ_py,
                phase,
                vortex,
            }
        })
        .collect();

    let mut crossings = Vec::new();
    for k in 1..reports.len() {
        let d0 = reports[k - 1].occ_px - reports[k - 1].occ_py;
        let d1 = reports[k].occ_px - reports[k].occ_py;
        if d1 == 0.0 || d0 * d1 >= 0.0 {
            if d1 == 0.0 && d0 != 0.0 {
                let phase = product(&traj.states[k]).arg();
                crossings.push(Crossing {
                    time: reports[k].time,
                    phase,
                    deviation: quarter_deviation(phase),
                    falling: d0 > 0.0,
                });
            }
            continue;
        }
        let f = d0 / (d0 - d1);
        let time = reports[k - 1].time + f * (reports[k].time - reports[k - 1].time);
        let z = product(&traj.states[k - 1]) * (1.0 - f) + product(&traj.states[k]) * f;
        let phase = z.arg();
        crossings.push(Crossing {
            time,
            phase,
            deviation: quarter_deviation(phase),
            falling: d0 > 0.0,
        });
    }

    let spacing = |falling: bool| {
        let t: Vec<f64> = crossings
            .iter()
            .filter(|c| c.falling == falling)
            .map(|c| c.time)
            .collect();
        (t.len() >= 2).then(|| (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64)
    };
    let rabi_period = match (spacing(true), spacing(false)) {
        (Some(a), Some(b)) => Some(0.5 * (a + b)),
        (a, b) => a.or(b),
    };
    Ok(PhaseAnalysis {
        reports,
        crossings,
        rabi_period,
    })
}

/// Eigenstate-following diagnostic for a ramp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticityReport {
    /// Index (ascending energy) of the instantaneous eigenstate followed,
    /// chosen by largest overlap at the ramp start.
    pub tracked_index: usize,
    pub times: Vec<f64>,
    /// `|⟨v_j(t)|ψ(t)⟩|²`.
    pub overlaps: Vec<f64>,
    pub min_overlap: f64,
    pub final_overlap: f64,
    /// Smallest gap from the tracked level to a neighbour.
    pub min_gap: f64,
    /// Set when the tracked level becomes degenerate with a neighbour.
    pub tracking_lost_at: Option<f64>,
    /// Final weights on `(|020⟩ ± |002⟩)/√2`, when both states exist.
    pub final_symmetric: Option<f64>,
    pub final_antisymmetric: Option<f64>,
}

/// Gap (E_R) below which two levels count as crossing.
pub const CROSSING_GAP: f64 = 1e-8;

fn overlap(v: nalgebra::DVectorView<'_, f64>, psi: &[Complex64]) -> f64 {
    v.iter()
        .zip(psi)
        .map(|(a, c)| c * *a)
        .sum::<Complex64>()
        .norm_sqr()
}

/// Follows the instantaneous eigenstate with the largest initial overlap
/// through a ramp. `traj` holds the ramp samples (first sample at the ramp
/// start). A zero-length ramp compares the unchanged state with the final
/// eigenbasis.
pub fn adiabaticity_check(
    ramp: &RampSchedule,
    traj: &Trajectory,
    basis: &TwoParticleBasis,
) -> Result<AdiabaticityReport> {
    if traj.is_empty() {
        return Err(Error::invalid("empty ramp trajectory"));
    }
    let (_, v0) = onsite::sorted_eigen(&ramp.model.matrix_at(0.0)?);
    let psi0 = &traj.states[0];
    let tracked_index = (0..v0.ncols())
        .max_by(|&a, &b| overlap(v0.column(a), psi0).total_cmp(&overlap(v0.column(b), psi0)))
        .unwrap_or(0);

    let mut overlaps = Vec::with_capacity(traj.len());
    let mut min_gap = f64::INFINITY;
    let mut tracking_lost_at = None;
    for (&t, psi) in traj.times.iter().zip(&traj.states) {
        let (vals, vecs) = onsite::sorted_eigen(&ramp.matrix_at(t)?);
        let j = tracked_index;
        let gap = [j.checked_sub(1), (j + 1 < vals.len()).then_some(j + 1)]
            .into_iter()
            .flatten()
            .map(|k| (vals[k] - vals[j]).abs())
            .fold(f64::INFINITY, f64::min);
        min_gap = min_gap.min(gap);
        if gap < CROSSING_GAP && tracking_lost_at.is_none() {
            tracking_lost_at = Some(t);
        }
        overlaps.push(overlap(vecs.column(j), psi));
    }

    let last = traj.states.last().expect("non-empty");
    let (final_symmetric, final_antisymmetric) = match (
        basis.doubly_occupied(Orbital::PX),
        basis.doubly_occupied(Orbital::PY),
    ) {
        (Some(ix), Some(iy)) => {
            let plus = (last[ix] + last[iy]) / 2f64.sqrt();
            let minus = (last[ix] - last[iy]) / 2f64.sqrt();
            (Some(plus.norm_sqr()), Some(minus.norm_sqr()))
        }
        _ => (None, None),
    };
    Ok(AdiabaticityReport {
        tracked_index,
        times: traj.times.clone(),
        min_overlap: overlaps.iter().copied().fold(f64::INFINITY, f64::min),
        final_overlap: *overlaps.last().expect("non-empty"),
        overlaps,
        min_gap,
        tracking_lost_at,
        final_symmetric,
        final_antisymmetric,
    })
}

/// `(|020⟩ − |002⟩)/√2` in `basis`.
pub fn antisymmetric_pair_state(basis: &TwoParticleBasis) -> Result<QuantumState> {
    let ix = basis
        .doubly_occupied(Orbital::PX)
        .ok_or_else(|| Error::invalid("basis lacks the p_x pair state"))?;
    let iy = basis
        .doubly_occupied(Orbital::PY)
        .ok_or_else(|| Error::invalid("basis lacks the p_y pair state"))?;
    let mut v = vec![0.0; basis.len()];
    v[ix] = 1.0 / 2f64.sqrt();
    v[iy] = -1.0 / 2f64.sqrt();
    Ok(QuantumState::from_real(&v))
}

/// Durations and drive strength for the two preparation scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSettings {
    /// Lattice vibration amplitude along x (E_R).
    pub amplitude: f64,
    pub ramp_duration: f64,
    pub ramp_shape: RampShape,
    /// Free evolution after the ramp.
    pub hold_duration: f64,
    /// Cap on each vibration pulse.
    pub max_pulse: f64,
}

impl Default for ScenarioSettings {
    /// 20 ms ramp and 5 ms hold, 10 ms pulse cap (chromium time units).
    fn default() -> Self {
        Self {
            amplitude: 4.0,
            ramp_duration: 1764.73,
            ramp_shape: RampShape::RaisedCosine,
            hold_duration: 441.18,
            max_pulse: 882.36,
        }
    }
}

/// Both particles to p_y at `omega_py`, then `q_x` lowered to `q_y`.
pub fn scenario_a(
    base: LatticeGeometry,
    omega_py: f64,
    settings: &ScenarioSettings,
) -> DriveProtocol {
    DriveProtocol::new(
        base,
        vec![
            Segment::Vibrate {
                omega: omega_py,
                amplitude: DriveAmplitude::lattice(settings.amplitude, 0.0),
                stop: StopCondition::DepletionAtLeast(0.999),
                duration: settings.max_pulse,
            },
            Segment::Ramp {
                parameter: RampParameter::Qx,
                from: base.qx,
                to: base.qy,
                duration: settings.ramp_duration,
                shape: settings.ramp_shape,
            },
        ],
    )
}

/// Half the population to p_y at `omega_py`, the rest to p_x at
/// `omega_px`, then `q_x` lowered to `q_y` and free evolution.
pub fn scenario_b(
    base: LatticeGeometry,
    omega_py: f64,
    omega_px: f64,
    settings: &ScenarioSettings,
) -> DriveProtocol {
    let amplitude = DriveAmplitude::lattice(settings.amplitude, 0.0);
    DriveProtocol::new(
        base,
        vec![
            Segment::Vibrate {
                omega: omega_py,
                amplitude,
                stop: StopCondition::DepletionAtLeast(0.5),
                duration: settings.max_pulse,
            },
            Segment::Vibrate {
                omega: omega_px,
                amplitude,
                stop: StopCondition::InitialBelow(0.01),
                duration: settings.max_pulse,
            },
            Segment::Ramp {
                parameter: RampParameter::Qx,
                from: base.qx,
                to: base.qy,
                duration: settings.ramp_duration,
                shape: settings.ramp_shape,
            },
            Segment::Hold {
                duration: settings.hold_duration,
            },
        ],
    )
}

/// Resonant frequencies into `|002⟩` and `|020⟩` at the base geometry,
/// located by maximizing the transfer over a short window around the
/// eigenvalue-gap predictions.
pub fn pair_resonances(base: &LatticeGeometry, amplitude: f64, window: f64) -> Result<(f64, f64)> {
    let basis = onsite::build_basis(&params::sp_orbitals(), (Orbital::S, Orbital::S))?;
    let model = OnsiteDriveModel::new(base, DriveAmplitude::lattice(amplitude, 0.0), &basis)?;
    let h0 = model.static_matrix()?;
    let predictions = onsite::resonance_predictions(&h0, &basis, None);
    let find = |orbital: Orbital| -> Result<f64> {
        let idx = basis.doubly_occupied(orbital).expect("sp basis");
        let guess = predictions
            .iter()
            .find(|p| p.target == onsite::TargetLabel::State(idx))
            .ok_or_else(|| Error::invalid(format!("no resonance into the {orbital} pair state")))?
            .omega;
        let (w, _) =
            crate::scan::locate_resonance(&model, guess, window, 1e-12, 0, Default::default())?;
        Ok(w)
    };
    Ok((find(Orbital::PY)?, find(Orbital::PX)?))
}
