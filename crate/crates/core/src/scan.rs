//! Drive-frequency sweeps of the transfer efficiency and peak extraction.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, EvolveOptions, OnsiteDriveModel};
use crate::error::{Error, Result};
use crate::onsite::{self, QuantumState, ResonancePrediction, TargetLabel};
use crate::par::{self, Execution};
use crate::params::Orbital;
use crate::units::UnitSystem;

/// One resonance in an efficiency curve. Frequencies in `E_R/ħ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: f64,
    pub height: f64,
    pub fwhm: f64,
    /// Half the local grid spacing at the maximum.
    pub center_uncertainty: f64,
    /// Samples above half height.
    pub points_above_half: usize,
    /// False when the peak touches the scan boundary.
    pub resolved: bool,
    /// Label of the nearest predicted resonance, if any.
    #[serde(default)]
    pub target_state: Option<String>,
}

/// Local maxima of `y(x)` at or above `threshold`, with FWHM from linear
/// interpolation of the half-height crossings. `x` must be increasing.
///
/// Maxima sharing one half-height region are merged into the highest.
pub fn extract_peaks(x: &[f64], y: &[f64], threshold: f64) -> Vec<Peak> {
    let n = x.len().min(y.len());
    if n < 3 {
        return Vec::new();
    }
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || y[i] >= y[i - 1];
            let right = i + 1 == n || y[i] > y[i + 1];
            left && right && y[i] >= threshold
        })
        .collect();
    candidates.sort_by(|&a, &b| y[b].total_cmp(&y[a]));

    let mut peaks: Vec<(usize, usize, Peak)> = Vec::new();
    for i in candidates {
        if peaks.iter().any(|(l, r, _)| (*l..=*r).contains(&i)) {
            continue;
        }
        let half = y[i] / 2.0;
        let mut l = i;
        while l > 0 && y[l - 1] > half {
            l -= 1;
        }
        let mut r = i;
        while r + 1 < n && y[r + 1] > half {
            r += 1;
        }
        let crossing = |a: usize, b: usize| {
            let t = (half - y[a]) / (y[b] - y[a]);
            x[a] + t * (x[b] - x[a])
        };
        let left_edge = (l > 0).then(|| crossing(l - 1, l));
        let right_edge = (r + 1 < n).then(|| crossing(r, r + 1));
        let resolved = left_edge.is_some() && right_edge.is_some() && i != 0 && i + 1 != n;
        let fwhm = right_edge.unwrap_or(x[r]) - left_edge.unwrap_or(x[l]);
        let spacing = match (i > 0, i + 1 < n) {
            (true, true) => (x[i] - x[i - 1]).min(x[i + 1] - x[i]),
            (true, false) => x[i] - x[i - 1],
            _ => x[i + 1] - x[i],
        };
        peaks.push((
            l,
            r,
            Peak {
                center: x[i],
                height: y[i],
                fwhm,
                center_uncertainty: spacing / 2.0,
                points_above_half: r - l + 1,
                resolved,
                target_state: None,
            },
        ));
    }
    let mut out: Vec<Peak> = peaks.into_iter().map(|(_, _, p)| p).collect();
    out.sort_by(|a, b| a.center.total_cmp(&b.center));
    out
}

/// Scan grid, evolution and peak-finding settings. Frequencies in `E_R/ħ`,
/// durations in `ħ/E_R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanSettings {
    /// Uniform grid size.
    pub points: usize,
    /// `None` picks `[0.7 ω₁, 1.3 ω₂]` from the s→p predictions.
    pub range: Option<(f64, f64)>,
    pub duration: f64,
    pub tolerance: f64,
    /// Minimum reported peak height.
    pub threshold: f64,
    /// Extra points seeded around each in-range prediction.
    pub window_points: usize,
    /// Half-width of each seeded window, relative to the predicted frequency.
    pub window_fraction: f64,
    /// Refinement stops once FWHM changes less than this between rounds.
    pub fwhm_tolerance: f64,
    pub max_refinements: usize,
    /// Index of the initial basis state.
    pub initial_index: usize,
    #[serde(skip)]
    pub execution: Execution,
}

/// Minimum uniform grid size.
pub const MIN_SCAN_POINTS: usize = 50;

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            points: 160,
            range: None,
            duration: 0.0,
            tolerance: 1e-12,
            threshold: 0.5,
            window_points: 17,
            window_fraction: 0.006,
            fwhm_tolerance: 0.02,
            max_refinements: 8,
            initial_index: 0,
            execution: Execution::Auto,
        }
    }
}

impl ScanSettings {
    /// Defaults with the given observation window.
    pub fn with_duration(duration: f64) -> Self {
        Self {
            duration,
            ..Self::default()
        }
    }

    /// Defaults for the d-extended model: lower peak threshold, and a tighter
    /// tolerance to hold the norm budget with more, faster components.
    pub fn extended(duration: f64) -> Self {
        Self {
            threshold: 0.2,
            tolerance: 4e-13,
            ..Self::with_duration(duration)
        }
    }

    pub fn range_hz(mut self, units: &UnitSystem, lo: f64, hi: f64) -> Self {
        self.range = Some((units.hz_to_omega(lo), units.hz_to_omega(hi)));
        self
    }

    fn validate(&self) -> Result<()> {
        if self.points < MIN_SCAN_POINTS {
            return Err(Error::invalid(format!(
                "scan needs >= {MIN_SCAN_POINTS} points, got {}",
                self.points
            )));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("scan duration must be positive"));
        }
        if let Some((lo, hi)) = self.range {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::invalid(format!("bad scan range [{lo}, {hi}]")));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid("peak threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Efficiency curve over drive frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    /// Model tag, e.g. `sp` or `spd`.
    pub model: String,
    /// Sorted drive frequencies in `E_R/ħ`.
    pub omega: Vec<f64>,
    pub efficiency: Vec<f64>,
    pub peaks: Vec<Peak>,
    pub predictions: Vec<f64>,
    pub range: (f64, f64),
    /// Largest norm drift over all evolutions.
    pub max_norm_drift: f64,
}

impl ScanResult {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn resolved_peaks(&self) -> impl Iterator<Item = &Peak> {
        self.peaks.iter().filter(|p| p.resolved)
    }

    /// Peak nearest to `omega`.
    pub fn peak_near(&self, omega: f64) -> Option<&Peak> {
        self.peaks.iter().min_by(|a, b| {
            (a.center - omega)
                .abs()
                .total_cmp(&(b.center - omega).abs())
        })
    }
}

/// `[0.7 ω₁, 1.3 ω₂]` where ω₁, ω₂ are the lowest and highest predictions
/// into doubly occupied p states; falls back to all predictions.
pub fn default_range(
    model: &OnsiteDriveModel,
    predictions: &[ResonancePrediction],
) -> Result<(f64, f64)> {
    let basis = &model.basis;
    let p_states: Vec<usize> = [Orbital::PX, Orbital::PY]
        .iter()
        .filter_map(|&o| basis.doubly_occupied(o))
        .collect();
    let into_p: Vec<f64> = predictions
        .iter()
        .filter(|p| match p.target {
            TargetLabel::State(s) => p_states.contains(&s),
            TargetLabel::Superposition { first, second, .. } => {
                p_states.contains(&first) || p_states.contains(&second)
            }
        })
        .map(|p| p.omega)
        .collect();
    let pool: Vec<f64> = if into_p.is_empty() {
        predictions.iter().map(|p| p.omega).collect()
    } else {
        into_p
    };
    let lo = pool.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pool.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0) {
        return Err(Error::invalid(
            "no resonance predictions to set a scan range; pass one explicitly",
        ));
    }
    Ok((0.7 * lo, 1.3 * hi))
}

/// Efficiency at each frequency, each from a fresh initial state.
pub fn efficiencies(
    model: &OnsiteDriveModel,
    omegas: &[f64],
    duration: f64,
    tolerance: f64,
    initial_index: usize,
    exec: Execution,
) -> Result<Vec<(f64, f64)>> {
    let psi0 = QuantumState::basis_state(model.dim(), initial_index);
    let opts = EvolveOptions::with_tolerance(tolerance);
    par::map_slice(omegas, exec, |&w| {
        dynamics::depletion_maximum(
            &model.provider(w),
            &psi0,
            (0.0, duration),
            &opts,
            initial_index,
        )
        .map(|(e, s)| (e, s.max_norm_drift))
        .map_err(|e| Error::AtFrequency {
            omega: w,
            source: Box::new(e),
        })
    })
    .into_iter()
    .collect()
}

/// Coarse grid half-width, relative to the guess, searched by [`locate_resonance`].
pub const LOCATE_WINDOW: f64 = 0.006;

/// Maximizes the efficiency near `guess` over a `duration` window: a
/// 25-point grid over `guess · (1 ± LOCATE_WINDOW)`, then golden-section
/// search around the best grid point to relative precision 1e-7.
///
/// Returns `(omega, efficiency)`.
pub fn locate_resonance(
    model: &OnsiteDriveModel,
    guess: f64,
    duration: f64,
    tolerance: f64,
    initial_index: usize,
    exec: Execution,
) -> Result<(f64, f64)> {
    if !(guess > 0.0 && guess.is_finite()) {
        return Err(Error::invalid(format!(
            "resonance guess must be > 0, got {guess}"
        )));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid("search duration must be positive"));
    }
    let points = 25;
    let half = LOCATE_WINDOW * guess;
    let grid: Vec<f64> = (0..points)
        .map(|i| guess - half + 2.0 * half * i as f64 / (points - 1) as f64)
        .collect();
    let values = efficiencies(model, &grid, duration, tolerance, initial_index, exec)?;
    let best = (0..points)
        .max_by(|&a, &b| values[a].0.total_cmp(&values[b].0))
        .unwrap_or(0);
    let eval = |w: f64| -> Result<f64> {
        Ok(efficiencies(
            model,
            &[w],
            duration,
            tolerance,
            initial_index,
            Execution::Sequential,
        )?[0]
            .0)
    };

    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(points - 1)];
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    while b - a > 1e-7 * guess {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = eval(d)?;
        }
    }
    let (w, f) = if fc > fd { (c, fc) } else { (d, fd) };
    if values[best].0 > f {
        return Ok((grid[best], values[best].0));
    }
    Ok((w, f))
}

fn merge(curve: &mut Vec<(f64, f64, f64)>, new: Vec<(f64, f64, f64)>) {
    curve.extend(new);
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    curve.dedup_by(|a, b| a.0 == b.0);
}

/// Frequencies to add so the peak region is sampled at half the current
/// local spacing.
fn refinement_points(x: &[f64], peak: &Peak) -> Vec<f64> {
    let lo = peak.center - 0.75 * peak.fwhm;
    let hi = peak.center + 0.75 * peak.fwhm;
    let mut out = Vec::new();
    for w in x.windows(2) {
        if w[1] >= lo && w[0] <= hi {
            out.push(0.5 * (w[0] + w[1]));
        }
    }
    out
}

/// Sweeps the drive frequency and extracts resonances.
///
/// The uniform grid is augmented with windows around each predicted
/// resonance, then every candidate peak is refined locally until its FWHM
/// settles.
pub fn scan(
    model: &OnsiteDriveModel,
    settings: &ScanSettings,
    model_tag: &str,
) -> Result<ScanResult> {
    settings.validate()?;
    if settings.initial_index >= model.dim() {
        return Err(Error::invalid(format!(
            "no basis state {}",
            settings.initial_index
        )));
    }
    let h0 = model.static_matrix()?;
    let predictions = onsite::resonance_predictions(&h0, &model.basis, None);
    let (lo, hi) = match settings.range {
        Some(r) => r,
        None => default_range(model, &predictions)?,
    };

    let n = settings.points;
    let mut omegas: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let in_range: Vec<f64> = predictions
        .iter()
        .map(|p| p.omega)
        .filter(|&w| w > lo && w < hi)
        .collect();
    if settings.window_points > 1 {
        for &w in &in_range {
            let half = settings.window_fraction * w;
            let m = settings.window_points;
            omegas.extend(
                (0..m)
                    .map(|i| w - half + 2.0 * half * i as f64 / (m - 1) as f64)
                    .filter(|&x| x > lo && x < hi),
            );
        }
    }
    omegas.sort_by(f64::total_cmp);
    omegas.dedup();

    let eval = |ws: &[f64]| -> Result<Vec<(f64, f64, f64)>> {
        let r = efficiencies(
            model,
            ws,
            settings.duration,
            settings.tolerance,
            settings.initial_index,
            settings.execution,
        )?;
        Ok(ws.iter().zip(r).map(|(&w, (e, d))| (w, e, d)).collect())
    };
    let mut curve = eval(&omegas)?;

    // candidates are refined from half the reporting threshold upward
    let candidate_threshold = 0.5 * settings.threshold;
    let mut previous: Vec<Peak> = Vec::new();
    for _ in 0..settings.max_refinements {
        let x: Vec<f64> = curve.iter().map(|c| c.0).collect();
        let y: Vec<f64> = curve.iter().map(|c| c.1).collect();
        let peaks = extract_peaks(&x, &y, candidate_threshold);
        let mut new_points = Vec::new();
        for p in peaks.iter().filter(|p| p.resolved) {
            let settled = previous
                .iter()
                .find(|q| (q.center - p.center).abs() <= p.fwhm / 2.0)
                .is_some_and(|q| (q.fwhm - p.fwhm).abs() < settings.fwhm_tolerance * p.fwhm)
                && p.points_above_half >= 5;
            if !settled {
                new_points.extend(refinement_points(&x, p));
            }
        }
        previous = peaks;
        if new_points.is_empty() {
            break;
        }
        new_points.sort_by(f64::total_cmp);
        new_points.dedup();
        let extra = eval(&new_points)?;
        merge(&mut curve, extra);
    }

    let omega: Vec<f64> = curve.iter().map(|c| c.0).collect();
    let efficiency: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let max_norm_drift = curve.iter().map(|c| c.2).fold(0.0, f64::max);
    let mut peaks = extract_peaks(&omega, &efficiency, settings.threshold);
    for p in &mut peaks {
        p.target_state = predictions
            .iter()
            .min_by(|a, b| {
                (a.omega - p.center)
                    .abs()
                    .total_cmp(&(b.omega - p.center).abs())
            })
            .map(|q| q.label.clone());
    }
    Ok(ScanResult {
        model: model_tag.to_string(),
        omega,
        efficiency,
        peaks,
        predictions: predictions.iter().map(|p| p.omega).collect(),
        range: (lo, hi),
        max_norm_drift,
    })
}
