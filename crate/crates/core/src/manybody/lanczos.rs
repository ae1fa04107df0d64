use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::hamiltonian::SparseHamiltonian;
use crate::error::{Error, Result};
use crate::par::Execution;

/// Ground-state search settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosSettings {
    /// Required `‖Hψ − Eψ‖`.
    pub residual: f64,
    /// Krylov vectors per restart.
    pub subspace: usize,
    pub max_restarts: usize,
    pub execution: Execution,
}

impl Default for LanczosSettings {
    fn default() -> Self {
        Self {
            residual: 1e-8,
            subspace: 80,
            max_restarts: 60,
            execution: Execution::Auto,
        }
    }
}

/// Lowest eigenpair of a sparse symmetric matrix.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    /// Real, normalized eigenvector.
    pub vector: Vec<f64>,
    pub residual: f64,
    pub matvecs: usize,
}

impl GroundState {
    pub fn amplitudes(&self) -> Vec<Complex64> {
        self.vector
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    n
}

/// Restarted Lanczos with full reorthogonalization.
///
/// Starts from the uniform vector, so a ground state that is invariant under
/// a basis permutation commuting with `H` (e.g. translations) keeps that
/// symmetry to rounding. Each restart continues from the current Ritz vector.
pub fn ground_state(h: &SparseHamiltonian, settings: &LanczosSettings) -> Result<GroundState> {
    let n = h.dim();
    if n == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    let mut start = vec![1.0; n];
    normalize(&mut start);
    let m = settings.subspace.clamp(2, n.max(2)).min(n);
    let mut matvecs = 0;
    let mut residual = f64::INFINITY;
    let mut w = vec![0.0; n];

    for _ in 0..=settings.max_restarts {
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        for j in 0..m {
            h.apply_real(&basis[j], &mut w, settings.execution);
            matvecs += 1;
            let a = dot(&basis[j], &w);
            alpha.push(a);
            // two passes of Gram-Schmidt against the whole basis
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = dot(&w, &w).sqrt();
            if j + 1 == m || b < 1e-13 * a.abs().max(1.0) {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |r, c| match r.abs_diff(c) {
            0 => alpha[r],
            1 => beta[r.min(c)],
            _ => 0.0,
        });
        let eig = SymmetricEigen::new(t);
        let lowest = (0..k)
            .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
            .expect("non-empty");
        let energy = eig.eigenvalues[lowest];
        let y = eig.eigenvectors.column(lowest);
        let mut x = vec![0.0; n];
        for (v, &c) in basis.iter().zip(y.iter()) {
            x.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
        }
        normalize(&mut x);
        if x.iter().sum::<f64>() < 0.0 {
            x.iter_mut().for_each(|a| *a = -*a);
        }
        h.apply_real(&x, &mut w, settings.execution);
        matvecs += 1;
        let e = dot(&x, &w);
        residual = w
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - e * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= settings.residual {
            return Ok(GroundState {
                energy: e,
                vector: x,
                residual,
                matvecs,
            });
        }
        log::debug!("lanczos restart: E = {energy}, residual = {residual:e}");
        start = x;
    }
    Err(Error::NoConvergence {
        iterations: matvecs,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_eigenpair() {
        let h = SparseHamiltonian::from_triplets(
            2,
            vec![(0, 0, 1.0), (0, 1, 0.5), (1, 0, 0.5), (1, 1, -1.0)],
        )
        .unwrap();
        let gs = ground_state(&h, &LanczosSettings::default()).unwrap();
        let exact = -(1.0f64 + 0.25).sqrt();
        assert!((gs.energy - exact).abs() < 1e-12);
        // eigenvector (0.5, exact - 1) normalized
        let (a, b) = (0.5, exact - 1.0);
        let nrm = (a * a + b * b).sqrt();
        let overlap = (gs.vector[0] * a + gs.vector[1] * b).abs() / nrm;
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_matrix() {
        let trip = (0..50).map(|i| (i, i, (i as f64 - 20.0).powi(2))).collect();
        let h = SparseHamiltonian::from_triplets(50, trip).unwrap();
        let gs = ground_state(&h, &LanczosSettings::default()).unwrap();
        assert!(gs.energy.abs() < 1e-10);
        assert!((gs.vector[20].abs() - 1.0).abs() < 1e-10);
    }
}
