//! Bloch bands, Wannier functions and hopping for the 1D potential `q sin²(x)`.
//!
//! Lengths are measured in units of `1/k` (lattice period `π`) and energies in
//! recoil energies, so the single-particle operator is `-d²/dx² + q sin²(x)`.
//! Bloch states are expanded in plane waves `exp(i(k + 2m)x)` with
//! `m = -M..=M`; the quasimomentum grid is the symmetric, half-shifted grid
//! `k_j = -1 + (2j + 1)/N`, which pairs every `k` with `-k`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Lattice period in units of `1/k`.
pub const SITE_SPACING: f64 = PI;

/// Numerical resolution of the 1D band problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSettings {
    pub plane_waves: usize,
    pub k_points: usize,
    pub points_per_site: usize,
    pub support_sites: usize,
}

impl Default for BandSettings {
    fn default() -> Self {
        Self {
            plane_waves: 33,
            k_points: 64,
            points_per_site: 512,
            support_sites: 3,
        }
    }
}

/// Dispersion and gauge-fixed Bloch coefficients of the lowest bands.
#[derive(Debug, Clone)]
pub struct BandStructure {
    depth: f64,
    band_count: usize,
    plane_waves: usize,
    k: Vec<f64>,
    /// `energies[band][k]`
    energies: Vec<Vec<f64>>,
    /// `coefficients[band][k][m]`, real, sign fixed by the Wannier gauge.
    coefficients: Vec<Vec<Vec<f64>>>,
}

/// Plane-wave Hamiltonian at quasimomentum `k`. Real symmetric tridiagonal.
pub fn plane_wave_hamiltonian(q: f64, k: f64, plane_waves: usize) -> DMatrix<f64> {
    let half = (plane_waves / 2) as i64;
    DMatrix::from_fn(plane_waves, plane_waves, |i, j| {
        if i == j {
            let kk = k + 2.0 * (i as i64 - half) as f64;
            kk * kk + 0.5 * q
        } else if i.abs_diff(j) == 1 {
            -0.25 * q
        } else {
            0.0
        }
    })
}

fn wavenumber(k: f64, m_index: usize, plane_waves: usize) -> f64 {
    k + 2.0 * (m_index as i64 - (plane_waves / 2) as i64) as f64
}

/// Solves the Bloch problem for the lowest `band_count` bands.
pub fn solve_bands(
    q: f64,
    band_count: usize,
    k_points: usize,
    plane_waves: usize,
) -> Result<BandStructure> {
    solve_bands_with(q, band_count, k_points, plane_waves, Execution::Auto)
}

pub fn solve_bands_with(
    q: f64,
    band_count: usize,
    k_points: usize,
    plane_waves: usize,
    exec: Execution,
) -> Result<BandStructure> {
    if !q.is_finite() {
        return Err(Error::invalid(format!(
            "lattice depth must be finite, got {q}"
        )));
    }
    if q < 0.0 {
        return Err(Error::invalid(format!(
            "lattice depth must be >= 0, got {q}"
        )));
    }
    if band_count == 0 {
        return Err(Error::invalid("band_count must be at least 1"));
    }
    if band_count > plane_waves {
        return Err(Error::invalid(format!(
            "band_count {band_count} exceeds the plane-wave basis size {plane_waves}"
        )));
    }
    if plane_waves.is_multiple_of(2) || plane_waves < 2 * band_count + 5 {
        return Err(Error::invalid(format!(
            "plane_waves must be odd and >= 2*band_count+5 = {}, got {plane_waves}",
            2 * band_count + 5
        )));
    }
    if k_points < 2 {
        return Err(Error::invalid("k_points must be >= 2"));
    }

    let n = k_points as f64;
    let k: Vec<f64> = (0..k_points)
        .map(|j| -1.0 + (2 * j + 1) as f64 / n)
        .collect();

    let per_k = par::map_slice(&k, exec, |&kk| {
        let eig = SymmetricEigen::new(plane_wave_hamiltonian(q, kk, plane_waves));
        let mut order: Vec<usize> = (0..plane_waves).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        order
            .iter()
            .take(band_count + 1)
            .map(|&i| {
                let v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
                (eig.eigenvalues[i], v)
            })
            .collect::<Vec<_>>()
    });

    let mut energies = vec![Vec::with_capacity(k_points); band_count];
    let mut coefficients = vec![Vec::with_capacity(k_points); band_count];
    for (ik, states) in per_k.into_iter().enumerate() {
        for band in 0..band_count {
            let (e, mut c) = states[band].clone();
            let gap = (states[band + 1].0 - e).min(if band > 0 {
                e - states[band - 1].0
            } else {
                f64::INFINITY
            });
            let anchor = gauge_anchor(k[ik], band, &c, plane_waves);
            let scale = c.iter().map(|x| x.abs()).fold(0.0, f64::max);
            if gap < 1e-10 || anchor.abs() < 1e-9 * scale.max(1.0) {
                return Err(Error::DegenerateBand { band, k: k[ik] });
            }
            if anchor < 0.0 {
                c.iter_mut().for_each(|x| *x = -*x);
            }
            energies[band].push(e);
            coefficients[band].push(c);
        }
    }

    Ok(BandStructure {
        depth: q,
        band_count,
        plane_waves,
        k,
        energies,
        coefficients,
    })
}

/// Value (even bands) or slope (odd bands) of the Bloch function at the site
/// center, up to the common `1/sqrt(N π)` factor and the `-i` phase used for
/// odd bands. The gauge makes this positive.
fn gauge_anchor(k: f64, band: usize, c: &[f64], plane_waves: usize) -> f64 {
    if band.is_multiple_of(2) {
        c.iter().sum()
    } else {
        c.iter()
            .enumerate()
            .map(|(m, &cm)| wavenumber(k, m, plane_waves) * cm)
            .sum()
    }
}

impl BandStructure {
    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn band_count(&self) -> usize {
        self.band_count
    }

    pub fn plane_waves(&self) -> usize {
        self.plane_waves
    }

    pub fn k_points(&self) -> &[f64] {
        &self.k
    }

    pub fn dispersion(&self, band: usize) -> Result<&[f64]> {
        self.check_band(band)?;
        Ok(&self.energies[band])
    }

    /// Gauge-fixed real plane-wave coefficients of band `band` at k-index `ik`.
    pub fn bloch_coefficients(&self, band: usize, ik: usize) -> Result<&[f64]> {
        self.check_band(band)?;
        self.coefficients[band]
            .get(ik)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::invalid(format!("k index {ik} out of range")))
    }

    pub fn bandwidth(&self, band: usize) -> Result<f64> {
        let e = self.dispersion(band)?;
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = e.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(max - min)
    }

    /// On-site Wannier expectation of the 1D Hamiltonian, i.e. the band mean.
    pub fn onsite_energy(&self, band: usize) -> Result<f64> {
        let e = self.dispersion(band)?;
        Ok(e.iter().sum::<f64>() / e.len() as f64)
    }

    fn check_band(&self, band: usize) -> Result<()> {
        if band >= self.band_count {
            return Err(Error::invalid(format!(
                "band {band} not available (band_count = {})",
                self.band_count
            )));
        }
        Ok(())
    }
}

/// Nearest-neighbour hopping `J = -(1/N) Σ_k E(k) cos(kπ)`.
///
/// Band 0 gives `J > 0`; band 1 has an inverted dispersion and `J < 0`.
pub fn hopping(bands: &BandStructure, band: usize) -> Result<f64> {
    let e = bands.dispersion(band)?;
    let n = e.len() as f64;
    Ok(-bands
        .k
        .iter()
        .zip(e)
        .map(|(k, e)| e * (k * SITE_SPACING).cos())
        .sum::<f64>()
        / n)
}

/// Real Wannier function sampled on a uniform grid around its home site.
#[derive(Debug, Clone, PartialEq)]
pub struct WannierFunction {
    pub band: usize,
    pub site: i64,
    /// Grid coordinates (absolute, in units of `1/k`).
    pub x: Vec<f64>,
    pub samples: Vec<f64>,
    pub spacing: f64,
}

impl WannierFunction {
    /// Grid index of the home-site center.
    pub fn center_index(&self) -> usize {
        self.samples.len() / 2
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoidal `∫ w² dx`.
    pub fn norm_squared(&self) -> f64 {
        trapezoid(self.samples.iter().map(|v| v * v), self.spacing)
    }
}

/// Trapezoidal rule over uniformly spaced samples.
pub fn trapezoid<I: IntoIterator<Item = f64>>(values: I, dx: f64) -> f64 {
    let mut iter = values.into_iter();
    let Some(first) = iter.next() else {
        return 0.0;
    };
    let mut sum = 0.5 * first;
    let mut last = first;
    let mut count = 1usize;
    for v in iter {
        sum += v;
        last = v;
        count += 1;
    }
    if count == 1 {
        return 0.0;
    }
    (sum - 0.5 * last) * dx
}

/// Builds the Wannier function of `band` centered on `site` using the default
/// real-space grid.
pub fn wannier(bands: &BandStructure, band: usize, site: i64) -> Result<WannierFunction> {
    let s = BandSettings::default();
    wannier_on_grid(bands, band, site, s.points_per_site, s.support_sites)
}

/// Wannier function on `±support_sites` around `site` with `points_per_site`
/// intervals per lattice period.
pub fn wannier_on_grid(
    bands: &BandStructure,
    band: usize,
    site: i64,
    points_per_site: usize,
    support_sites: usize,
) -> Result<WannierFunction> {
    let samples = wannier_series(bands, band, points_per_site, support_sites, |_| 1.0)?;
    let intervals = samples.len() - 1;
    let spacing = SITE_SPACING / points_per_site as f64;
    let x0 = -(support_sites as f64) * SITE_SPACING;
    let center = site as f64 * SITE_SPACING;
    let x = (0..=intervals)
        .map(|j| center + x0 + j as f64 * spacing)
        .collect();
    Ok(WannierFunction {
        band,
        site,
        x,
        samples,
        spacing,
    })
}

/// Samples of `Σ_k Σ_m c_{k,m} weight(k + 2m) e^{i(k+2m)x}` for the home-site
/// Wannier function; `weight = 1` gives the function itself.
fn wannier_series(
    bands: &BandStructure,
    band: usize,
    points_per_site: usize,
    support_sites: usize,
    weight: impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    bands.check_band(band)?;
    if points_per_site < 2 || support_sites == 0 {
        return Err(Error::invalid(
            "Wannier grid needs >= 2 points per site and >= 1 support site",
        ));
    }
    let intervals = 2 * support_sites * points_per_site;
    let spacing = SITE_SPACING / points_per_site as f64;
    let x0 = -(support_sites as f64) * SITE_SPACING;

    let nk = bands.k.len();
    let pw = bands.plane_waves;
    let norm = 1.0 / (nk as f64 * PI.sqrt());
    let odd = band % 2 == 1;
    let mut samples = vec![0.0; intervals + 1];

    for (ik, &k) in bands.k.iter().enumerate() {
        let c = &bands.coefficients[band][ik];
        let cmax = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (m, &cm) in c.iter().enumerate() {
            if cm.abs() < 1e-17 * cmax {
                continue;
            }
            let kk = wavenumber(k, m, pw);
            let cm = cm * weight(kk);
            // exp(i kk x) advanced by rotation along the grid
            let (mut sn, mut cs) = (kk * x0).sin_cos();
            let (rs, rc) = (kk * spacing).sin_cos();
            for (j, out) in samples.iter_mut().enumerate() {
                if j % 256 == 0 {
                    let xj = x0 + j as f64 * spacing;
                    (sn, cs) = (kk * xj).sin_cos();
                }
                *out += cm * if odd { sn } else { cs };
                let next_c = cs * rc - sn * rs;
                sn = sn * rc + cs * rs;
                cs = next_c;
            }
        }
    }
    samples.iter_mut().for_each(|v| *v *= norm);
    Ok(samples)
}

/// Hopping from the real-space matrix element
/// `J = −∫ w(x) [−d²/dx² + q sin²x] w(x − π) dx`, with the second
/// derivative taken term by term from the plane-wave series.
///
/// On an `N`-point k grid the Wannier function repeats over `N` sites (with
/// a sign flip for even `N`), so the integral runs over one such period and
/// agrees with [`hopping`] up to quadrature error.
pub fn hopping_real_space(bands: &BandStructure, band: usize) -> Result<f64> {
    let points = BandSettings::default().points_per_site;
    let sites = bands.k.len();
    let support = sites.div_ceil(2);
    let w = wannier_on_grid(bands, band, 0, points, support)?;
    let kinetic = wannier_series(bands, band, points, support, |kk| kk * kk)?;
    let period = sites * points;
    let wrap = if sites.is_multiple_of(2) { -1.0 } else { 1.0 };
    let q = bands.depth;
    let sum: f64 = (0..period)
        .map(|j| {
            let (i, sign) = if j >= points {
                (j - points, 1.0)
            } else {
                (j + period - points, wrap)
            };
            let neighbour = kinetic[i] + q * w.x[j].sin().powi(2) * w.samples[i];
            w.samples[j] * sign * neighbour
        })
        .sum();
    Ok(-sum * w.spacing)
}

/// Sorted eigenpairs of the plane-wave Hamiltonian at one `k`, exposed for
/// reconstruction checks.
pub fn plane_wave_eigen(q: f64, k: f64, plane_waves: usize) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(plane_wave_hamiltonian(q, k, plane_waves));
    let mut order: Vec<usize> = (0..plane_waves).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(plane_waves, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_particle_lowest_band() {
        let b = solve_bands(0.0, 2, 16, 33).unwrap();
        for (k, e) in b.k_points().iter().zip(b.dispersion(0).unwrap()) {
            assert!((e - k * k).abs() < 1e-12, "k={k} e={e}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(solve_bands(f64::NAN, 2, 16, 33).is_err());
        assert!(solve_bands(-1.0, 2, 16, 33).is_err());
        assert!(solve_bands(5.0, 2, 16, 32).is_err());
        assert!(solve_bands(5.0, 20, 16, 33).is_err());
        assert!(solve_bands(5.0, 40, 16, 33).is_err());
        assert!(solve_bands(5.0, 2, 1, 33).is_err());
        let b = solve_bands(5.0, 2, 16, 33).unwrap();
        assert!(b.dispersion(2).is_err());
        assert!(hopping(&b, 3).is_err());
        assert!(wannier(&b, 2, 0).is_err());
    }

    #[test]
    fn dispersion_is_even_in_k() {
        let b = solve_bands(12.0, 3, 32, 33).unwrap();
        let n = b.k_points().len();
        for band in 0..3 {
            let e = b.dispersion(band).unwrap();
            for j in 0..n {
                assert!((e[j] - e[n - 1 - j]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn band_order_and_gaps() {
        let b = solve_bands(20.0, 3, 32, 33).unwrap();
        for band in 0..2 {
            let lo = b.dispersion(band).unwrap();
            let hi = b.dispersion(band + 1).unwrap();
            let max_lo = lo.iter().copied().fold(f64::MIN, f64::max);
            let min_hi = hi.iter().copied().fold(f64::MAX, f64::min);
            assert!(min_hi > max_lo);
        }
    }

    #[test]
    fn eigen_reconstruction() {
        for &q in &[0.0, 5.0, 32.0] {
            let h = plane_wave_hamiltonian(q, 0.3, 33);
            let (vals, vecs) = plane_wave_eigen(q, 0.3, 33);
            let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
            let rel = (&h - rebuilt).norm() / h.norm();
            assert!(rel < 1e-10, "q={q} rel={rel}");
        }
    }

    #[test]
    fn odd_wannier_has_node() {
        let b = solve_bands(32.0, 2, 64, 33).unwrap();
        let w = wannier(&b, 1, 0).unwrap();
        assert!(w.samples[w.center_index()].abs() < 1e-8 * w.peak());
        // positive slope at the center
        let c = w.center_index();
        assert!(w.samples[c + 1] > 0.0);
    }

    #[test]
    fn wannier_translates_with_site() {
        let b = solve_bands(10.0, 1, 32, 33).unwrap();
        let w0 = wannier_on_grid(&b, 0, 0, 64, 3).unwrap();
        let w2 = wannier_on_grid(&b, 0, 2, 64, 3).unwrap();
        assert_eq!(w0.samples, w2.samples);
        assert!((w2.x[w2.center_index()] - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_basics() {
        assert_eq!(trapezoid(Vec::<f64>::new(), 0.1), 0.0);
        assert!((trapezoid(vec![1.0, 1.0, 1.0], 0.5) - 1.0).abs() < 1e-15);
    }
}
