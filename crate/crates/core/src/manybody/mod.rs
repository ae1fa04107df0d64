//! Exact many-body treatment of a short periodic chain with several
//! orbitals per site: Fock basis, sparse Hamiltonian, Lanczos ground state
//! and driven evolution with Krylov exponentials.

mod basis;
mod hamiltonian;
mod krylov;
mod lanczos;

pub use basis::{build_fock_basis, fock_dimension, FockBasis, DIMENSION_GUARD, MAX_MODES};
pub use hamiltonian::{
    assemble_hamiltonian, bonds, ChainSpec, ParametricHamiltonian, SparseHamiltonian,
};
pub use krylov::{expm_apply, KrylovStep};
pub use lanczos::{ground_state, GroundState, LanczosSettings};

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::DriveAmplitude;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::params::{self, Axis, LatticeGeometry, Orbital, ParameterTable};

/// Chain size, content and propagation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ManybodySettings {
    pub sites: usize,
    pub orbitals: Vec<Orbital>,
    pub particles: usize,
    pub chain: ChainSpec,
    /// Keep the inter-site hopping; `false` gives decoupled sites.
    pub hopping: bool,
    /// Per-step bound on the Krylov error estimate.
    pub krylov_tolerance: f64,
    pub max_krylov: usize,
    /// Time steps per drive period.
    pub steps_per_period: usize,
    pub execution: Execution,
}

impl Default for ManybodySettings {
    /// Four sites, `{s, p_x}`, eight particles, periodic chain along x.
    fn default() -> Self {
        Self {
            sites: 4,
            orbitals: vec![Orbital::S, Orbital::PX],
            particles: 8,
            chain: ChainSpec::default(),
            hopping: true,
            krylov_tolerance: 1e-11,
            max_krylov: 30,
            steps_per_period: 40,
            execution: Execution::Auto,
        }
    }
}

/// Chain Hamiltonian along a periodic lattice drive
/// `Q(t) = Q₀ + sin(ωt) · amplitude`.
#[derive(Debug, Clone)]
pub struct ChainModel {
    pub basis: FockBasis,
    pub base: LatticeGeometry,
    pub amplitude: DriveAmplitude,
    pub settings: ManybodySettings,
    table: ParameterTable,
    hamiltonian: ParametricHamiltonian,
}

impl ChainModel {
    pub fn new(
        base: &LatticeGeometry,
        amplitude: DriveAmplitude,
        settings: ManybodySettings,
    ) -> Result<Self> {
        let basis = build_fock_basis(settings.sites, &settings.orbitals, settings.particles)?;
        let (lo, hi) = if amplitude.is_zero() {
            (0.0, 0.0)
        } else {
            (-1.0, 1.0)
        };
        let table = params::parameter_table(
            base,
            Axis::Line(amplitude.as_array()),
            lo,
            hi,
            crate::dynamics::DRIVE_TABLE_POINTS,
            &settings.orbitals,
        )?;
        let mut template = table.at(0.0)?;
        if !settings.hopping {
            template = template.without_hopping();
        }
        let hamiltonian = ParametricHamiltonian::new(&basis, &template, settings.chain)?;
        Ok(Self {
            basis,
            base: *base,
            amplitude,
            settings,
            table,
            hamiltonian,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    fn flat_at(&self, s: f64) -> Result<Vec<f64>> {
        self.table.flat_at(s)
    }

    /// Hamiltonian at drive coordinate `s`.
    pub fn hamiltonian_at(&self, s: f64) -> Result<SparseHamiltonian> {
        self.hamiltonian.assemble(&self.flat_at(s)?)
    }

    /// Lanczos ground state at the base geometry.
    pub fn ground_state(&self, settings: &LanczosSettings) -> Result<GroundState> {
        ground_state(&self.hamiltonian_at(0.0)?, settings)
    }
}

/// Site-resolved expectation values at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteObservables {
    pub time: f64,
    /// `⟨n_{iσ}⟩`, site-major: `occupations[i · orbitals + σ]`.
    pub occupations: Vec<f64>,
    /// `Var(n_i)` per site.
    pub variance: Vec<f64>,
    /// `⟨H(t)⟩` in E_R.
    pub energy: f64,
    pub norm_error: f64,
}

impl SiteObservables {
    /// Mean occupation of `orbital` per site.
    pub fn site_average(&self, orbital: usize, orbitals: usize) -> f64 {
        let sites = self.occupations.len() / orbitals;
        (0..sites)
            .map(|i| self.occupations[i * orbitals + orbital])
            .sum::<f64>()
            / sites as f64
    }

    pub fn max_variance(&self) -> f64 {
        self.variance.iter().copied().fold(0.0, f64::max)
    }
}

/// Occupations and number variances of `psi`.
pub fn site_observables(basis: &FockBasis, psi: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let sites = basis.sites();
    let mut occ = vec![0.0; basis.modes()];
    let mut first = vec![0.0; sites];
    let mut second = vec![0.0; sites];
    for (k, c) in psi.iter().enumerate() {
        let p = c.norm_sqr();
        if p == 0.0 {
            continue;
        }
        for (m, &n) in basis.occupation(k).iter().enumerate() {
            occ[m] += p * n as f64;
        }
        for i in 0..sites {
            let n = basis.site_count(k, i) as f64;
            first[i] += p * n;
            second[i] += p * n * n;
        }
    }
    let variance = first.iter().zip(&second).map(|(m, s)| s - m * m).collect();
    (occ, variance)
}

/// Sampled observables of a many-body evolution.
#[derive(Debug, Clone)]
pub struct ManybodyRun {
    pub samples: Vec<SiteObservables>,
    pub final_state: Vec<Complex64>,
    pub steps: usize,
    pub max_krylov_dim: usize,
    /// Sum of per-step Krylov error estimates.
    pub error_estimate: f64,
}

impl ManybodyRun {
    pub fn max_norm_error(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.norm_error)
            .fold(0.0, f64::max)
    }
}

// fourth-order commutator-free Magnus nodes and weights
const CF4_NODE: f64 = 0.288_675_134_594_812_9; // √3/6
const CF4_WEIGHT: f64 = 0.288_675_134_594_812_9; // √3/6

/// Evolves `psi0` under the drive at `omega` from `t_span.0` to `t_span.1`,
/// recording observables at `t0 + k · sample_interval` and at `t1`.
///
/// Each step of at most `2π/(ω · steps_per_period)` applies the
/// fourth-order commutator-free Magnus scheme
/// `exp(−ih(β₂H₁ + β₁H₂)) exp(−ih(β₁H₁ + β₂H₂))` with `H₁,₂` at the
/// Gauss nodes `1/2 ∓ √3/6` and `β₁,₂ = 1/4 ± √3/6`; both exponentials are
/// Krylov approximations.
pub fn evolve_manybody(
    model: &ChainModel,
    omega: f64,
    psi0: &[Complex64],
    t_span: (f64, f64),
    sample_interval: f64,
) -> Result<ManybodyRun> {
    let s = &model.settings;
    if psi0.len() != model.dim() {
        return Err(Error::invalid(format!(
            "state has {} amplitudes, basis has {}",
            psi0.len(),
            model.dim()
        )));
    }
    let norm0: f64 = psi0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if (norm0 - 1.0).abs() > 1e-8 {
        return Err(Error::invalid(format!("initial state norm is {norm0}")));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::invalid("drive frequency must be positive"));
    }
    let (t0, t1) = t_span;
    if !(t1 >= t0) {
        return Err(Error::invalid("many-body evolution runs forward in time"));
    }
    if !(sample_interval > 0.0) || s.steps_per_period == 0 {
        return Err(Error::invalid(
            "sample interval and steps per period must be positive",
        ));
    }
    let h_max = 2.0 * PI / (omega * s.steps_per_period as f64);
    let mut marks = vec![t0];
    while let Some(&last) = marks.last() {
        if last >= t1 {
            break;
        }
        let next = t0 + marks.len() as f64 * sample_interval;
        marks.push(if next > t1 - 1e-9 * sample_interval {
            t1
        } else {
            next
        });
    }

    let flat_len = model.hamiltonian.flat_len();
    let mut matrix = model.hamiltonian_at(0.0)?;
    let mut combined = vec![0.0; flat_len];
    let mut psi = psi0.to_vec();
    let mut samples = Vec::new();
    let mut max_krylov_dim = 0;
    let mut error_estimate = 0.0;

    let mut record = |t: f64, psi: &[Complex64], matrix: &mut SparseHamiltonian| -> Result<()> {
        let flat = model.flat_at((omega * t).sin())?;
        model.hamiltonian.assemble_into(&flat, matrix)?;
        let (occupations, variance) = site_observables(&model.basis, psi);
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        samples.push(SiteObservables {
            time: t,
            occupations,
            variance,
            energy: matrix.expectation(psi, s.execution),
            norm_error: (norm - 1.0).abs(),
        });
        Ok(())
    };
    record(t0, &psi, &mut matrix)?;

    let (c1, c2) = (0.5 - CF4_NODE, 0.5 + CF4_NODE);
    let (b1, b2) = (0.25 + CF4_WEIGHT, 0.25 - CF4_WEIGHT);
    let mut steps = 0;
    for pair in marks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let n = ((b - a) / h_max).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        for k in 0..n {
            let t = a + k as f64 * h;
            let f1 = model.flat_at((omega * (t + c1 * h)).sin())?;
            let f2 = model.flat_at((omega * (t + c2 * h)).sin())?;
            for (w1, w2) in [(b1, b2), (b2, b1)] {
                for (i, c) in combined.iter_mut().enumerate() {
                    *c = w1 * f1[i] + w2 * f2[i];
                }
                model.hamiltonian.assemble_into(&combined, &mut matrix)?;
                let (next, info) = expm_apply(
                    &matrix,
                    &psi,
                    h,
                    s.krylov_tolerance,
                    s.max_krylov,
                    t,
                    s.execution,
                )?;
                psi = next;
                max_krylov_dim = max_krylov_dim.max(info.dim);
                error_estimate += info.error_estimate;
            }
        }
        steps += n;
        record(b, &psi, &mut matrix)?;
    }
    Ok(ManybodyRun {
        samples,
        final_state: psi,
        steps,
        max_krylov_dim,
        error_estimate,
    })
}

/// `⊗_i φ` for a single-site state `site_state` over `site_basis` (one
/// site), expressed in the chain basis. Chain states whose site fillings
/// differ from the single-site particle number get zero amplitude.
pub fn product_state(
    site_basis: &FockBasis,
    site_state: &[Complex64],
    chain: &FockBasis,
) -> Result<Vec<Complex64>> {
    if site_basis.sites() != 1 || site_basis.orbitals() != chain.orbitals() {
        return Err(Error::invalid(
            "site basis must be one site with the chain's orbitals",
        ));
    }
    let m = chain.orbitals().len();
    Ok((0..chain.len())
        .map(|k| {
            let occ = chain.occupation(k);
            (0..chain.sites())
                .map(|i| {
                    site_basis
                        .index_of(&occ[i * m..(i + 1) * m])
                        .map_or(Complex64::new(0.0, 0.0), |j| site_state[j])
                })
                .product()
        })
        .collect())
}

/// Many-body transfer curve next to the single-site prediction.
#[derive(Debug, Clone)]
pub struct SiteComparison {
    pub times: Vec<f64>,
    /// Site-averaged fraction of atoms in the target orbital.
    pub chain: Vec<f64>,
    /// Same fraction for one isolated site with two atoms.
    pub single: Vec<f64>,
    pub run: ManybodyRun,
    pub ground: GroundState,
}

impl SiteComparison {
    /// Largest `|chain − single|` over samples with `time ≤ until`.
    pub fn max_difference(&self, until: f64) -> f64 {
        self.times
            .iter()
            .zip(self.chain.iter().zip(&self.single))
            .filter(|(t, _)| **t <= until)
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest per-site number variance with `time ≤ until`.
    pub fn max_variance(&self, until: f64) -> f64 {
        self.run
            .samples
            .iter()
            .filter(|s| s.time <= until)
            .map(SiteObservables::max_variance)
            .fold(0.0, f64::max)
    }

    /// End of the first full transfer cycle of the single-site curve: the
    /// first local minimum after its first local maximum.
    pub fn first_cycle_end(&self) -> Option<f64> {
        first_cycle_end(&self.times, &self.single)
    }
}

/// End of the first full swing of `values`: the lowest point between the
/// first rise above half the global maximum and the next one after the curve
/// has dropped below a quarter of it. The gap between the two levels keeps
/// sampled micromotion from ending the cycle early. `None` when the curve is
/// still falling at the last sample.
pub fn first_cycle_end(times: &[f64], values: &[f64]) -> Option<f64> {
    let n = values.len();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (half, quarter) = (0.5 * max, 0.25 * max);
    let rise = values.iter().position(|&v| v >= half)?;
    let below = (rise + 1..n).find(|&k| values[k] < quarter)?;
    let next = (below + 1..n).find(|&k| values[k] >= half).unwrap_or(n);
    let end = (below..next).min_by(|&a, &b| values[a].total_cmp(&values[b]))?;
    (end + 1 < n).then(|| times[end])
}

/// Evolves the chain from its Lanczos ground state and the isolated site
/// from its two-atom ground state under the same drive, sampling both at
/// the same times. The chain must hold two atoms per site.
pub fn compare_with_single_site(
    model: &ChainModel,
    target: Orbital,
    omega: f64,
    span: f64,
    sample_interval: f64,
    lanczos: &LanczosSettings,
) -> Result<SiteComparison> {
    let b = &model.basis;
    if b.particles() != 2 * b.sites() {
        return Err(Error::invalid(
            "single-site comparison needs two atoms per site",
        ));
    }
    let slot = b
        .orbitals()
        .iter()
        .position(|&o| o == target)
        .ok_or_else(|| Error::invalid(format!("orbital {target} is not in the chain basis")))?;
    let first = b.orbitals()[0];
    let pair = crate::onsite::build_basis(b.orbitals(), (first, first))?;
    let site = crate::dynamics::OnsiteDriveModel::new(&model.base, model.amplitude, &pair)?;
    let psi_site = crate::onsite::ground_state(&site.static_matrix()?);
    let opts = crate::dynamics::EvolveOptions::default().sampled(sample_interval);
    let traj = crate::dynamics::evolve(&site.provider(omega), &psi_site, (0.0, span), &opts)?;
    let weights: Vec<f64> = pair
        .states()
        .iter()
        .map(|st| st.occupations(b.orbitals().len())[slot] as f64 / 2.0)
        .collect();

    let ground = model.ground_state(lanczos)?;
    let run = evolve_manybody(
        model,
        omega,
        &ground.amplitudes(),
        (0.0, span),
        sample_interval,
    )?;
    let n = run.samples.len().min(traj.len());
    let m = b.orbitals().len();
    Ok(SiteComparison {
        times: run.samples[..n].iter().map(|s| s.time).collect(),
        chain: run.samples[..n]
            .iter()
            .map(|s| s.site_average(slot, m) / 2.0)
            .collect(),
        single: (0..n)
            .map(|k| {
                traj.occupations(k)
                    .iter()
                    .zip(&weights)
                    .map(|(p, w)| p * w)
                    .sum()
            })
            .collect(),
        run,
        ground,
    })
}

/// With hopping switched off, largest `1 − |⟨⊗φ(t)|Ψ(t)⟩|` between the
/// chain evolution and the tensor power of a one-site evolution with the
/// same propagator at `span`, starting from the respective ground states.
pub fn factorization_error(model: &ChainModel, omega: f64, span: f64) -> Result<f64> {
    let b = &model.basis;
    if model.settings.hopping || !b.particles().is_multiple_of(b.sites()) {
        return Err(Error::invalid(
            "factorization needs hopping off and equal filling",
        ));
    }
    let one = ChainModel::new(
        &model.base,
        model.amplitude,
        ManybodySettings {
            sites: 1,
            particles: b.particles() / b.sites(),
            ..model.settings.clone()
        },
    )?;
    // vector error is about residual / gap; 1e-12 is at the rounding floor
    // for the full chain
    let lanczos = LanczosSettings {
        residual: 1e-10,
        ..LanczosSettings::default()
    };
    let chain = evolve_manybody(
        model,
        omega,
        &model.ground_state(&lanczos)?.amplitudes(),
        (0.0, span),
        span,
    )?;
    let site = evolve_manybody(
        &one,
        omega,
        &one.ground_state(&lanczos)?.amplitudes(),
        (0.0, span),
        span,
    )?;
    let product = product_state(&one.basis, &site.final_state, b)?;
    let overlap: Complex64 = product
        .iter()
        .zip(&chain.final_state)
        .map(|(a, c)| a.conj() * c)
        .sum();
    Ok(1.0 - overlap.norm())
}
