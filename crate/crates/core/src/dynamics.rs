//! Time-dependent Schrödinger propagation `i dψ/dt = H(t) ψ` for small,
//! real-symmetric Hamiltonians, and lattice drives feeding them.
//!
//! Integration uses the Dormand–Prince 8(5,3) pair on the split system
//! `u' = H v`, `v' = −H u` for `ψ = u + i v`. The state is never
//! renormalized; norm drift is reported.

use std::cell::RefCell;

use nalgebra::allocator::Allocator;
use nalgebra::{Const, DMatrix, DefaultAllocator, Dim, Dyn, OVector, U1};
use num_complex::Complex64;
use ode_solvers::dop_shared::IntegrationError;
use ode_solvers::{Dop853, OutputType, System};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::onsite::{self, QuantumState, TwoParticleBasis};
use crate::params::{self, Axis, DerivedTable, LatticeGeometry, ParameterTable};

/// Source of `H(t)` (real symmetric, `dim × dim`, row-major into `out`).
pub trait HamiltonianProvider: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, out: &mut [f64]) -> Result<()>;
}

/// Time-independent Hamiltonian.
#[derive(Debug, Clone)]
pub struct StaticHamiltonian {
    dim: usize,
    entries: Vec<f64>,
}

impl StaticHamiltonian {
    pub fn new(h: &DMatrix<f64>) -> Self {
        let dim = h.nrows();
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                entries[i * dim + j] = h[(i, j)];
            }
        }
        Self { dim, entries }
    }
}

impl HamiltonianProvider for StaticHamiltonian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _t: f64, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.entries);
        Ok(())
    }
}

/// Adapts a closure `t -> H(t)`.
pub struct FnHamiltonian<F> {
    dim: usize,
    f: F,
}

impl<F> FnHamiltonian<F>
where
    F: Fn(f64, &mut [f64]) -> Result<()> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> HamiltonianProvider for FnHamiltonian<F>
where
    F: Fn(f64, &mut [f64]) -> Result<()> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, out: &mut [f64]) -> Result<()> {
        (self.f)(t, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step magnitude.
    pub h_max: f64,
    /// Step budget per integration call.
    pub max_steps: u32,
    /// Output spacing for stored trajectories; `None` stores every step.
    pub sample_interval: Option<f64>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
            sample_interval: None,
        }
    }
}

impl EvolveOptions {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }

    pub fn sampled(mut self, interval: f64) -> Self {
        self.sample_interval = Some(interval);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if !(self.h_max > 0.0) {
            return Err(Error::invalid("maximum step must be positive"));
        }
        if let Some(dt) = self.sample_interval {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::invalid(format!(
                    "sample interval must be > 0, got {dt}"
                )));
            }
        }
        Ok(())
    }
}

/// Integration bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Sum of per-step error allowances: a bound on the accumulated local
    /// error in amplitude units.
    pub error_estimate: f64,
    /// Largest `| ‖ψ‖ − 1 |` seen at step ends.
    pub max_norm_drift: f64,
}

impl IntegrationStats {
    fn absorb(&mut self, other: &IntegrationStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.error_estimate += other.error_estimate;
        self.max_norm_drift = self.max_norm_drift.max(other.max_norm_drift);
    }
}

/// Sampled evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<Complex64>>,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn single(state: &QuantumState) -> Self {
        Self {
            times: vec![state.time],
            states: vec![state.amplitudes.clone()],
            stats: IntegrationStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn occupations(&self, sample: usize) -> Vec<f64> {
        self.states[sample].iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn occupation_series(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[index].norm_sqr()).collect()
    }

    pub fn norm_error(&self, sample: usize) -> f64 {
        (self.states[sample]
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
            - 1.0)
            .abs()
    }

    pub fn max_norm_error(&self) -> f64 {
        (0..self.len())
            .map(|i| self.norm_error(i))
            .fold(0.0, f64::max)
    }

    pub fn state(&self, sample: usize) -> QuantumState {
        QuantumState {
            amplitudes: self.states[sample].clone(),
            time: self.times[sample],
        }
    }

    pub fn final_state(&self) -> Option<QuantumState> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }

    /// Appends `other`, dropping its first sample when it repeats our last time.
    pub fn extend(&mut self, other: Trajectory) {
        let skip = match (self.times.last(), other.times.first()) {
            (Some(a), Some(b)) if a == b => 1,
            _ => 0,
        };
        self.times.extend(other.times.into_iter().skip(skip));
        self.states.extend(other.states.into_iter().skip(skip));
        self.stats.absorb(&other.stats);
    }
}

/// `max_t (1 − occupation of initial_index)`.
pub fn transfer_efficiency(traj: &Trajectory, initial_index: usize) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    if initial_index >= traj.states[0].len() {
        return Err(Error::invalid(format!("no basis state {initial_index}")));
    }
    Ok(traj
        .states
        .iter()
        .map(|s| 1.0 - s[initial_index].norm_sqr())
        .fold(f64::NEG_INFINITY, f64::max)
        .clamp(0.0, 1.0))
}

/// Returned by step observers to continue or stop the integration early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlFlow {
    Continue,
    Stop,
}

/// Called at the initial point and after every accepted step with `(t, ψ)`.
pub type StepObserver<'a> = dyn FnMut(f64, &[Complex64]) -> ControlFlow + 'a;

/// `[Re ψ; Im ψ; τ]`. Carrying the local time `τ` in the state keeps every
/// stage time consistent with the stage coefficients regardless of the
/// solver's node table.
fn to_split<D: Dim>(amplitudes: &[Complex64]) -> OVector<f64, D>
where
    DefaultAllocator: Allocator<D>,
{
    let n = amplitudes.len();
    let values = (0..2 * n + 1).map(|i| match i {
        i if i < n => amplitudes[i].re,
        i if i < 2 * n => amplitudes[i - n].im,
        _ => 0.0,
    });
    OVector::from_iterator_generic(D::from_usize(2 * n + 1), U1, values)
}

fn from_split(y: &[f64]) -> Vec<Complex64> {
    let n = (y.len() - 1) / 2;
    (0..n).map(|i| Complex64::new(y[i], y[n + i])).collect()
}

/// Split system in local time `τ = dir · (t − t0) ≥ 0`.
struct SplitSystem<'a, 'b> {
    provider: &'a dyn HamiltonianProvider,
    dim: usize,
    t0: f64,
    dir: f64,
    h: RefCell<Vec<f64>>,
    failure: RefCell<Option<Error>>,
    observer: &'a mut StepObserver<'b>,
    amplitudes: Vec<Complex64>,
    stopped: bool,
    max_norm_drift: f64,
}

impl SplitSystem<'_, '_> {
    fn derivative(&self, y: &[f64], dy: &mut [f64]) {
        let n = self.dim;
        // local time travels as the last component (see `to_split`)
        let tau = y[2 * n];
        dy[2 * n] = 1.0;
        let mut h = self.h.borrow_mut();
        if let Err(e) = self.provider.eval(self.t0 + self.dir * tau, &mut h) {
            self.failure.borrow_mut().get_or_insert(e);
            dy.fill(0.0);
            return;
        }
        let (u, v) = y[..2 * n].split_at(n);
        for i in 0..n {
            let row = &h[i * n..(i + 1) * n];
            let mut hu = 0.0;
            let mut hv = 0.0;
            for j in 0..n {
                hu += row[j] * u[j];
                hv += row[j] * v[j];
            }
            dy[i] = self.dir * hv;
            dy[n + i] = -self.dir * hu;
        }
    }

    fn step_end(&mut self, tau: f64, y: &[f64]) -> bool {
        if self.failure.borrow().is_some() {
            return true;
        }
        let n = self.dim;
        let norm = y[..2 * n].iter().map(|v| v * v).sum::<f64>().sqrt();
        self.max_norm_drift = self.max_norm_drift.max((norm - 1.0).abs());
        for i in 0..n {
            self.amplitudes[i] = Complex64::new(y[i], y[n + i]);
        }
        self.stopped =
            (self.observer)(self.t0 + self.dir * tau, &self.amplitudes) == ControlFlow::Stop;
        self.stopped
    }
}

impl<D: Dim> System<f64, OVector<f64, D>> for &mut SplitSystem<'_, '_>
where
    DefaultAllocator: Allocator<D>,
{
    fn system(&self, _tau: f64, y: &OVector<f64, D>, dy: &mut OVector<f64, D>) {
        self.derivative(y.as_slice(), dy.as_mut_slice())
    }

    fn solout(&mut self, tau: f64, y: &OVector<f64, D>, _dy: &OVector<f64, D>) -> bool {
        self.step_end(tau, y.as_slice())
    }
}

/// Runs the solver with state dimension `D`; returns `(accepted, rejected,
/// final τ, final split state)`.
fn run_solver<D: Dim>(
    system: &mut SplitSystem<'_, '_>,
    psi0: &[Complex64],
    span: f64,
    opts: &EvolveOptions,
) -> std::result::Result<(usize, usize, f64, Vec<f64>), f64>
where
    DefaultAllocator: Allocator<D>,
    OVector<f64, D>: std::ops::Mul<f64, Output = OVector<f64, D>>,
{
    let mut solver = Dop853::from_param(
        system,
        0.0,
        span,
        0.0,
        to_split::<D>(psi0),
        opts.rtol,
        opts.atol,
        0.9,
        0.0,
        0.333,
        6.0,
        opts.h_max.min(span),
        0.0,
        opts.max_steps,
        u32::MAX,
        OutputType::Sparse,
    );
    let outcome = solver.integrate();
    match outcome {
        Ok(s) => {
            let (taus, ys) = solver.results().get();
            let tau = *taus.last().expect("initial point stored");
            let y = ys.last().expect("initial point stored").as_slice().to_vec();
            Ok((s.accepted_steps as usize, s.rejected_steps as usize, tau, y))
        }
        Err(IntegrationError::MaxNumStepReached { x, .. })
        | Err(IntegrationError::StepSizeUnderflow { x })
        | Err(IntegrationError::StiffnessDetected { x }) => Err(x),
    }
}

fn check_start(
    provider: &dyn HamiltonianProvider,
    psi0: &QuantumState,
    t_span: (f64, f64),
) -> Result<()> {
    let dim = provider.dim();
    if psi0.amplitudes.len() != dim {
        return Err(Error::invalid(format!(
            "state has {} amplitudes, Hamiltonian is {dim}x{dim}",
            psi0.amplitudes.len()
        )));
    }
    if !(t_span.0.is_finite() && t_span.1.is_finite()) {
        return Err(Error::invalid("time span must be finite"));
    }
    let norm0 = psi0.norm();
    if (norm0 - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "initial state is not normalized (norm {norm0})"
        )));
    }
    Ok(())
}

/// Integrates from `t_span.0` to `t_span.1` (either direction), calling
/// `observer` at the start and after every accepted step. Returns the state
/// where integration ended (early when the observer stops it).
pub fn integrate(
    provider: &dyn HamiltonianProvider,
    psi0: &QuantumState,
    t_span: (f64, f64),
    opts: &EvolveOptions,
    observer: &mut StepObserver<'_>,
) -> Result<(QuantumState, IntegrationStats)> {
    check_start(provider, psi0, t_span)?;
    opts.validate()?;
    let (t0, t1) = t_span;
    let mut stats = IntegrationStats::default();
    if observer(t0, &psi0.amplitudes) == ControlFlow::Stop || t0 == t1 {
        return Ok((psi0.clone(), stats));
    }
    let dim = provider.dim();
    let span = (t1 - t0).abs();
    let dir = (t1 - t0).signum();
    let mut system = SplitSystem {
        provider,
        dim,
        t0,
        dir,
        h: RefCell::new(vec![0.0; dim * dim]),
        failure: RefCell::new(None),
        observer,
        amplitudes: psi0.amplitudes.clone(),
        stopped: false,
        max_norm_drift: (psi0.norm() - 1.0).abs(),
    };
    let psi = &psi0.amplitudes;
    // stack-allocated states for the common basis sizes
    let outcome = match dim {
        1 => run_solver::<Const<3>>(&mut system, psi, span, opts),
        2 => run_solver::<Const<5>>(&mut system, psi, span, opts),
        3 => run_solver::<Const<7>>(&mut system, psi, span, opts),
        4 => run_solver::<Const<9>>(&mut system, psi, span, opts),
        5 => run_solver::<Const<11>>(&mut system, psi, span, opts),
        6 => run_solver::<Const<13>>(&mut system, psi, span, opts),
        9 => run_solver::<Const<19>>(&mut system, psi, span, opts),
        _ => run_solver::<Dyn>(&mut system, psi, span, opts),
    };
    if let Some(e) = system.failure.into_inner() {
        return Err(e);
    }
    let (accepted, rejected, tau, y) = outcome.map_err(|x| Error::StepUnderflow {
        t: t0 + dir * x,
        h: 0.0,
    })?;
    stats.accepted = accepted;
    stats.rejected = rejected;
    stats.error_estimate = accepted as f64 * (opts.atol + opts.rtol);
    stats.max_norm_drift = system.max_norm_drift;
    let t_end = if system.stopped { t0 + dir * tau } else { t1 };
    Ok((
        QuantumState {
            amplitudes: from_split(&y),
            time: t_end,
        },
        stats,
    ))
}

/// Evolves `psi0` over `t_span` and stores a trajectory.
///
/// With `sample_interval` the trajectory holds exact integrator states on a
/// uniform grid from `t_span.0` (plus the endpoint); otherwise every accepted
/// step is stored.
pub fn evolve(
    provider: &dyn HamiltonianProvider,
    psi0: &QuantumState,
    t_span: (f64, f64),
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    evolve_until(provider, psi0, t_span, opts, &mut |_, _| {
        ControlFlow::Continue
    })
}

/// [`evolve`] with a stop condition checked after every accepted step.
/// The trajectory always ends on the state where integration stopped.
pub fn evolve_until(
    provider: &dyn HamiltonianProvider,
    psi0: &QuantumState,
    t_span: (f64, f64),
    opts: &EvolveOptions,
    stop: &mut StepObserver<'_>,
) -> Result<Trajectory> {
    check_start(provider, psi0, t_span)?;
    opts.validate()?;
    let (t0, t1) = t_span;
    let Some(dt) = opts.sample_interval else {
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut obs = |t: f64, psi: &[Complex64]| {
            times.push(t);
            states.push(psi.to_vec());
            stop(t, psi)
        };
        let (_, stats) = integrate(provider, psi0, t_span, opts, &mut obs)?;
        return Ok(Trajectory {
            times,
            states,
            stats,
        });
    };

    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![psi0.amplitudes.clone()],
        stats: IntegrationStats::default(),
    };
    if stop(t0, &psi0.amplitudes) == ControlFlow::Stop {
        return Ok(traj);
    }
    let mut state = psi0.clone();
    let mut k = 1usize;
    loop {
        let mut target = t0 + dir * k as f64 * dt;
        if dir * (target - t1) > -1e-9 * dt {
            target = t1;
        }
        if state.time == target {
            break;
        }
        let mut stopped = false;
        let start = state.time;
        let mut obs = |t: f64, psi: &[Complex64]| {
            if t == start {
                return ControlFlow::Continue;
            }
            let flow = stop(t, psi);
            stopped |= flow == ControlFlow::Stop;
            flow
        };
        let (next, stats) = integrate(provider, &state, (state.time, target), opts, &mut obs)?;
        traj.stats.absorb(&stats);
        traj.times.push(next.time);
        traj.states.push(next.amplitudes.clone());
        state = next;
        if stopped || target == t1 {
            break;
        }
        k += 1;
    }
    Ok(traj)
}

/// Highest depletion of `initial_index` over every accepted step, without
/// storing the trajectory.
pub fn depletion_maximum(
    provider: &dyn HamiltonianProvider,
    psi0: &QuantumState,
    t_span: (f64, f64),
    opts: &EvolveOptions,
    initial_index: usize,
) -> Result<(f64, IntegrationStats)> {
    if initial_index >= provider.dim() {
        return Err(Error::invalid(format!("no basis state {initial_index}")));
    }
    let mut best: f64 = 0.0;
    let mut obs = |_: f64, psi: &[Complex64]| {
        best = best.max(1.0 - psi[initial_index].norm_sqr());
        ControlFlow::Continue
    };
    let (_, stats) = integrate(provider, psi0, t_span, opts, &mut obs)?;
    Ok((best.clamp(0.0, 1.0), stats))
}

/// Drive amplitude vector applied as `Q(t) = Q₀ + sin(ωt) · amplitude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveAmplitude {
    pub qx: f64,
    pub qy: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub g: f64,
}

impl DriveAmplitude {
    pub fn lattice(ax: f64, ay: f64) -> Self {
        Self {
            qx: ax,
            qy: ay,
            kappa: 0.0,
            g: 0.0,
        }
    }

    /// `δQ₊ = (A, A, 0)`.
    pub fn symmetric(a: f64) -> Self {
        Self::lattice(a, a)
    }

    /// `δQ₋ = (A, −A, 0)`.
    pub fn antisymmetric(a: f64) -> Self {
        Self::lattice(a, -a)
    }

    pub fn aspect_ratio(a: f64) -> Self {
        Self {
            qx: 0.0,
            qy: 0.0,
            kappa: a,
            g: 0.0,
        }
    }

    pub fn coupling(a: f64) -> Self {
        Self {
            qx: 0.0,
            qy: 0.0,
            kappa: 0.0,
            g: a,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.qx, self.qy, self.kappa, self.g]
    }

    pub fn is_zero(&self) -> bool {
        self.as_array().iter().all(|&a| a == 0.0)
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self {
            qx: self.qx * f,
            qy: self.qy * f,
            kappa: self.kappa * f,
            g: self.g * f,
        }
    }
}

/// Periodic modulation of the lattice, trap aspect ratio or coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub base: LatticeGeometry,
    pub amplitude: DriveAmplitude,
    /// Angular frequency in `E_R/ħ`.
    pub omega: f64,
}

impl Drive {
    pub fn new(base: LatticeGeometry, amplitude: DriveAmplitude, omega: f64) -> Result<Self> {
        let d = Self {
            base,
            amplitude,
            omega,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::invalid(format!(
                "drive frequency must be > 0, got {}",
                self.omega
            )));
        }
        if self.amplitude.as_array().iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("drive amplitude must be finite"));
        }
        self.geometry_at_offset(1.0).validate()?;
        self.geometry_at_offset(-1.0).validate()
    }

    /// Drive coordinate `sin(ωt)`.
    pub fn offset(&self, t: f64) -> f64 {
        (self.omega * t).sin()
    }

    pub fn geometry_at_offset(&self, s: f64) -> LatticeGeometry {
        Axis::Line(self.amplitude.as_array()).apply(&self.base, s)
    }

    pub fn geometry(&self, t: f64) -> LatticeGeometry {
        self.geometry_at_offset(self.offset(t))
    }
}

/// Grid points used to tabulate one drive excursion `s ∈ [−1, 1]`.
pub const DRIVE_TABLE_POINTS: usize = 17;

/// On-site Hamiltonian along a drive path, tabulated once and reusable for
/// any drive frequency.
///
/// Matrices are shifted by a constant `energy_reference` (the mean diagonal
/// at the base geometry); this only changes the global phase.
#[derive(Debug, Clone)]
pub struct OnsiteDriveModel {
    pub base: LatticeGeometry,
    pub amplitude: DriveAmplitude,
    pub basis: TwoParticleBasis,
    pub energy_reference: f64,
    /// Tabulated `(row, col)` pairs, upper triangle.
    entries: Vec<(usize, usize)>,
    table: DerivedTable,
    params: ParameterTable,
}

impl OnsiteDriveModel {
    pub fn new(
        base: &LatticeGeometry,
        amplitude: DriveAmplitude,
        basis: &TwoParticleBasis,
    ) -> Result<Self> {
        Self::with_points(base, amplitude, basis, DRIVE_TABLE_POINTS)
    }

    pub fn with_points(
        base: &LatticeGeometry,
        amplitude: DriveAmplitude,
        basis: &TwoParticleBasis,
        points: usize,
    ) -> Result<Self> {
        let (lo, hi) = if amplitude.is_zero() {
            (0.0, 0.0)
        } else {
            (-1.0, 1.0)
        };
        let params = params::parameter_table(
            base,
            Axis::Line(amplitude.as_array()),
            lo,
            hi,
            points,
            basis.orbitals(),
        )?;
        Self::from_table(params, basis)
    }

    /// Builds the matrix table from an existing parameter table along any axis.
    pub fn from_table(params: ParameterTable, basis: &TwoParticleBasis) -> Result<Self> {
        let (lo, hi) = params.range();
        let h0 = onsite::hamiltonian_matrix(basis, &params.at(0.0_f64.clamp(lo, hi))?)?;
        let energy_reference = h0.diagonal().mean();
        let dim = basis.len();

        // upper-triangle entries that are nonzero anywhere on the grid
        let mut entries = Vec::new();
        let grid_h = (0..params.grid().len())
            .map(|i| onsite::hamiltonian_matrix(basis, &params.grid_params(i)?))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..dim {
            for j in i..dim {
                if i == j || grid_h.iter().any(|h| h[(i, j)] != 0.0) {
                    entries.push((i, j));
                }
            }
        }
        let b = basis.clone();
        let cols = entries.clone();
        let table = params.derived(move |p| {
            let h = onsite::hamiltonian_matrix(&b, p).expect("orbitals checked at construction");
            cols.iter()
                .map(|&(i, j)| h[(i, j)] - if i == j { energy_reference } else { 0.0 })
                .collect()
        })?;
        let amplitude = match params.axis {
            Axis::Line([qx, qy, kappa, g]) => DriveAmplitude { qx, qy, kappa, g },
            _ => DriveAmplitude::lattice(0.0, 0.0),
        };
        Ok(Self {
            base: params.base,
            amplitude,
            basis: basis.clone(),
            energy_reference,
            entries,
            table,
            params,
        })
    }

    /// Writes the shifted Hamiltonian at drive coordinate `s` (row-major).
    pub fn fill_matrix(&self, s: f64, out: &mut [f64]) -> Result<()> {
        let n = self.dim();
        out.fill(0.0);
        self.table.eval_with(s, |k, v| {
            let (i, j) = self.entries[k];
            out[i * n + j] = v;
            out[j * n + i] = v;
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn parameter_table(&self) -> &ParameterTable {
        &self.params
    }

    /// Shifted Hamiltonian at drive coordinate `s`.
    pub fn matrix_at(&self, s: f64) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut buf = vec![0.0; n * n];
        self.fill_matrix(s, &mut buf)?;
        Ok(DMatrix::from_row_slice(n, n, &buf))
    }

    /// Unshifted static Hamiltonian at the base geometry.
    pub fn static_matrix(&self) -> Result<DMatrix<f64>> {
        let mut h = self.matrix_at(0.0)?;
        for i in 0..self.dim() {
            h[(i, i)] += self.energy_reference;
        }
        Ok(h)
    }

    /// `H(t)` for a sinusoidal drive at `omega`.
    pub fn provider(&self, omega: f64) -> DrivenHamiltonian<'_> {
        DrivenHamiltonian {
            model: self,
            omega,
            phase: 0.0,
        }
    }
}

/// `H(sin(ω t + φ))` from an [`OnsiteDriveModel`].
#[derive(Debug, Clone, Copy)]
pub struct DrivenHamiltonian<'a> {
    model: &'a OnsiteDriveModel,
    pub omega: f64,
    pub phase: f64,
}

impl DrivenHamiltonian<'_> {
    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }
}

impl HamiltonianProvider for DrivenHamiltonian<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let s = (self.omega * t + self.phase).sin();
        self.model.fill_matrix(s, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level(v: f64, detuning: f64) -> StaticHamiltonian {
        StaticHamiltonian::new(&DMatrix::from_row_slice(2, 2, &[0.0, v, v, detuning]))
    }

    #[test]
    fn rejects_unnormalized_and_mismatched_states() {
        let h = two_level(0.1, 0.0);
        let bad = QuantumState::from_real(&[1.0, 1.0]);
        assert!(evolve(&h, &bad, (0.0, 1.0), &EvolveOptions::default()).is_err());
        let wrong = QuantumState::basis_state(3, 0);
        assert!(evolve(&h, &wrong, (0.0, 1.0), &EvolveOptions::default()).is_err());
    }

    #[test]
    fn zero_span_returns_initial_state() {
        let h = two_level(0.1, 0.0);
        let psi = QuantumState::basis_state(2, 0);
        let tr = evolve(&h, &psi, (2.0, 2.0), &EvolveOptions::default()).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.states[0], psi.amplitudes);
    }

    #[test]
    fn sampled_trajectory_is_uniform() {
        let h = two_level(0.3, 0.5);
        let psi = QuantumState::basis_state(2, 0);
        let tr = evolve(
            &h,
            &psi,
            (0.0, 10.0),
            &EvolveOptions::default().sampled(0.5),
        )
        .unwrap();
        assert_eq!(tr.len(), 21);
        for (i, t) in tr.times.iter().enumerate() {
            assert!((t - 0.5 * i as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn efficiency_of_empty_trajectory_is_an_error() {
        let tr = Trajectory {
            times: vec![],
            states: vec![],
            stats: IntegrationStats::default(),
        };
        assert!(transfer_efficiency(&tr, 0).is_err());
    }

    #[test]
    fn resonant_rabi_oscillation() {
        let v = 0.37;
        let h = two_level(v, 0.0);
        let psi = QuantumState::basis_state(2, 0);
        let tr = evolve(
            &h,
            &psi,
            (0.0, 20.0),
            &EvolveOptions::default().sampled(0.25),
        )
        .unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let p0 = s[0].norm_sqr();
            assert!((p0 - (v * t).cos().powi(2)).abs() < 1e-7, "t={t}");
        }
        assert!(tr.max_norm_error() < 1e-8);
        let back = evolve(
            &h,
            &tr.final_state().unwrap(),
            (20.0, 0.0),
            &EvolveOptions::default(),
        )
        .unwrap();
        let f = back.final_state().unwrap();
        assert!((f.amplitudes[0] - Complex64::new(1.0, 0.0)).norm() < 1e-7);
    }

    #[test]
    fn drive_validation() {
        let base = LatticeGeometry::new(32.0, 20.0, 8.0, 1.8).unwrap();
        assert!(Drive::new(base, DriveAmplitude::lattice(4.0, 0.0), 0.0).is_err());
        assert!(Drive::new(base, DriveAmplitude::lattice(40.0, 0.0), 1.0).is_err());
        let d = Drive::new(base, DriveAmplitude::lattice(4.0, 0.0), 2.0).unwrap();
        let g = d.geometry(std::f64::consts::PI / 4.0);
        assert!((g.qx - 36.0).abs() < 1e-12);
        assert_eq!(g.qy, 20.0);
    }
}
