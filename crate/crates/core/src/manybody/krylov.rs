use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::hamiltonian::SparseHamiltonian;
use crate::error::{Error, Result};
use crate::par::Execution;

/// Outcome of one Krylov exponential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStep {
    pub dim: usize,
    pub error_estimate: f64,
}

fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `exp(−i dt H) ψ` in a Lanczos subspace grown until the a-posteriori
/// error `β_m |[exp(−i dt T_m)]_{m,1}| ‖ψ‖` drops below `tol`.
///
/// `t` only labels errors.
pub fn expm_apply(
    h: &SparseHamiltonian,
    psi: &[Complex64],
    dt: f64,
    tol: f64,
    max_dim: usize,
    t: f64,
    exec: Execution,
) -> Result<(Vec<Complex64>, KrylovStep)> {
    let n = h.dim();
    if psi.len() != n {
        return Err(Error::invalid("state length does not match the matrix"));
    }
    let norm = cdot(psi, psi).re.sqrt();
    if norm == 0.0 || dt == 0.0 {
        return Ok((
            psi.to_vec(),
            KrylovStep {
                dim: 0,
                error_estimate: 0.0,
            },
        ));
    }
    let max_dim = max_dim.clamp(1, n);
    let mut basis: Vec<Vec<Complex64>> = vec![psi.iter().map(|c| c / norm).collect()];
    let mut alpha: Vec<f64> = Vec::with_capacity(max_dim);
    let mut beta: Vec<f64> = Vec::with_capacity(max_dim);
    let mut w = vec![Complex64::new(0.0, 0.0); n];

    loop {
        let j = alpha.len();
        h.apply(&basis[j], &mut w, exec);
        alpha.push(cdot(&basis[j], &w).re);
        for _ in 0..2 {
            for v in &basis {
                let c = cdot(v, &w);
                w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = cdot(&w, &w).re.sqrt();
        let k = alpha.len();
        let coeffs = small_exponential(&alpha, &beta, dt);
        let breakdown = b < 1e-13 * alpha.iter().fold(1.0f64, |m, a| m.max(a.abs()));
        let estimate = if breakdown {
            0.0
        } else {
            b * coeffs[k - 1].norm() * norm
        };
        if estimate <= tol || breakdown {
            let mut out = vec![Complex64::new(0.0, 0.0); n];
            for (v, c) in basis.iter().zip(&coeffs) {
                let c = c * norm;
                out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
            }
            return Ok((
                out,
                KrylovStep {
                    dim: k,
                    error_estimate: estimate,
                },
            ));
        }
        if k >= max_dim {
            return Err(Error::KrylovTolerance {
                t,
                tol,
                dim: k,
                estimate,
            });
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
}

/// First column of `exp(−i dt T)` for the tridiagonal `T(alpha, beta)`.
fn small_exponential(alpha: &[f64], beta: &[f64], dt: f64) -> Vec<Complex64> {
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |r, c| match r.abs_diff(c) {
        0 => alpha[r],
        1 => beta[r.min(c)],
        _ => 0.0,
    });
    let eig = SymmetricEigen::new(t);
    (0..k)
        .map(|r| {
            (0..k)
                .map(|e| {
                    let phase = Complex64::from_polar(1.0, -dt * eig.eigenvalues[e]);
                    phase * eig.eigenvectors[(r, e)] * eig.eigenvectors[(0, e)]
                })
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_exponential() {
        let n = 12;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, (i as f64 * 0.7).sin()));
            if i + 1 < n {
                let v = 0.3 + 0.05 * i as f64;
                trip.push((i, i + 1, v));
                trip.push((i + 1, i, v));
            }
        }
        let h = SparseHamiltonian::from_triplets(n, trip).unwrap();
        let mut psi = vec![Complex64::new(0.0, 0.0); n];
        psi[3] = Complex64::new(0.6, 0.0);
        psi[4] = Complex64::new(0.0, 0.8);
        let dt = 0.9;
        let (out, step) = expm_apply(&h, &psi, dt, 1e-13, 12, 0.0, Execution::Sequential).unwrap();
        let dense = SymmetricEigen::new(h.to_dense());
        for r in 0..n {
            let exact: Complex64 = (0..n)
                .map(|e| {
                    let v = dense.eigenvectors.column(e);
                    let proj: Complex64 = (0..n).map(|k| psi[k] * v[k]).sum();
                    Complex64::from_polar(1.0, -dt * dense.eigenvalues[e]) * proj * v[r]
                })
                .sum();
            assert!((out[r] - exact).norm() < 1e-12, "row {r}");
        }
        assert!(step.dim <= n);
    }

    #[test]
    fn too_small_subspace_is_an_error() {
        let n = 30;
        let trip = (0..n).map(|i| (i, i, i as f64)).collect();
        let h = SparseHamiltonian::from_triplets(n, trip).unwrap();
        let psi = vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n];
        let err = expm_apply(&h, &psi, 5.0, 1e-12, 3, 1.5, Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::KrylovTolerance { dim: 3, .. }));
    }
}
