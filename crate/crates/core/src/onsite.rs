//! Two-boson on-site basis, the on-site Hamiltonian matrix and resonance
//! predictions from its eigenvalue gaps.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::boson;
use crate::error::{Error, Result};
use crate::params::{HubbardParams, Orbital};
use crate::units::UnitSystem;

/// Two bosons in orbitals `first ≤ second` (positions in the orbital set).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairState {
    pub first: usize,
    pub second: usize,
}

impl PairState {
    pub fn new(a: usize, b: usize) -> Self {
        Self {
            first: a.min(b),
            second: a.max(b),
        }
    }

    pub fn occupations(&self, modes: usize) -> Vec<u8> {
        let mut occ = vec![0u8; modes];
        occ[self.first] += 1;
        occ[self.second] += 1;
        occ
    }
}

/// Parity-selected two-boson basis over an orbital set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoParticleBasis {
    orbitals: Vec<Orbital>,
    states: Vec<PairState>,
}

impl TwoParticleBasis {
    pub fn orbitals(&self) -> &[Orbital] {
        &self.orbitals
    }

    pub fn states(&self) -> &[PairState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: PairState) -> Option<usize> {
        self.states.iter().position(|&s| s == state)
    }

    /// Index of the state with both bosons in `orbital`.
    pub fn doubly_occupied(&self, orbital: Orbital) -> Option<usize> {
        let i = self.orbitals.iter().position(|&o| o == orbital)?;
        self.index_of(PairState::new(i, i))
    }

    /// Occupation-number label, e.g. `|020⟩`.
    pub fn label(&self, index: usize) -> String {
        let occ = self.states[index].occupations(self.orbitals.len());
        let digits: String = occ.iter().map(|n| char::from(b'0' + n)).collect();
        format!("|{digits}>")
    }

    /// Orbital-name label, e.g. `px,px`.
    pub fn orbital_label(&self, index: usize) -> String {
        let s = self.states[index];
        format!("{},{}", self.orbitals[s.first], self.orbitals[s.second])
    }

    /// Same basis with states listed in `order` (a permutation of indices).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        for &i in order {
            if i >= self.len() || seen[i] {
                return Err(Error::invalid("not a permutation of the basis"));
            }
            seen[i] = true;
        }
        if order.len() != self.len() {
            return Err(Error::invalid("not a permutation of the basis"));
        }
        Ok(Self {
            orbitals: self.orbitals.clone(),
            states: order.iter().map(|&i| self.states[i]).collect(),
        })
    }
}

fn pair_parity(orbitals: &[Orbital], s: PairState) -> (u8, u8) {
    let (a, b) = (orbitals[s.first], orbitals[s.second]);
    ((a.nx + b.nx) % 2, (a.ny + b.ny) % 2)
}

/// Connected component of `initial` under parity-allowed contact terms.
///
/// The initial state comes first, the rest in lexicographic order of orbital
/// positions.
pub fn build_basis(orbitals: &[Orbital], initial: (Orbital, Orbital)) -> Result<TwoParticleBasis> {
    if orbitals.is_empty() {
        return Err(Error::invalid("orbital set is empty"));
    }
    let find = |o: Orbital| {
        orbitals
            .iter()
            .position(|&x| x == o)
            .ok_or_else(|| Error::invalid(format!("initial orbital {o} not in the orbital set")))
    };
    let init = PairState::new(find(initial.0)?, find(initial.1)?);
    let parity = pair_parity(orbitals, init);
    let mut states = vec![init];
    for a in 0..orbitals.len() {
        for b in a..orbitals.len() {
            let s = PairState::new(a, b);
            if s != init && pair_parity(orbitals, s) == parity {
                states.push(s);
            }
        }
    }
    Ok(TwoParticleBasis {
        orbitals: orbitals.to_vec(),
        states,
    })
}

/// Basis from an explicit occupation vector; it must hold exactly two bosons.
pub fn build_basis_from_occupations(
    orbitals: &[Orbital],
    occupation: &[u8],
) -> Result<TwoParticleBasis> {
    if occupation.len() != orbitals.len() {
        return Err(Error::invalid(
            "occupation vector length differs from orbital set",
        ));
    }
    let total: u32 = occupation.iter().map(|&n| n as u32).sum();
    if total != 2 {
        return Err(Error::invalid(format!(
            "on-site states hold 2 bosons, got {total}"
        )));
    }
    let occupied: Vec<Orbital> = occupation
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat_n(orbitals[i], n as usize))
        .collect();
    build_basis(orbitals, (occupied[0], occupied[1]))
}

/// Complex amplitudes over a basis at time `t` (units of ħ/E_R).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
}

impl QuantumState {
    pub fn basis_state(dim: usize, index: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Self {
            amplitudes,
            time: 0.0,
        }
    }

    pub fn from_real(v: &[f64]) -> Self {
        Self {
            amplitudes: v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            time: 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn occupations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `|⟨other|self⟩|²`.
    pub fn fidelity(&self, other: &QuantumState) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| b.conj() * a)
            .sum::<Complex64>()
            .norm_sqr()
    }
}

/// On-site Hamiltonian `Σ E_σ n_σ + ½ Σ W[a,b,c,d] a†_a a†_b a_c a_d` in `basis`.
///
/// For `{|200⟩, |020⟩, |002⟩}` this is the familiar 3×3 matrix with diagonal
/// `2E_σ + U_σσ` and off-diagonal `U_sx, U_sy, U_xy`.
pub fn hamiltonian_matrix(
    basis: &TwoParticleBasis,
    params: &HubbardParams,
) -> Result<DMatrix<f64>> {
    let map = orbital_map(basis, params)?;
    let n = basis.len();
    let modes = basis.orbitals.len();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for (col, state) in basis.states.iter().enumerate() {
        let occ = state.occupations(modes);
        h[(col, col)] += occ
            .iter()
            .enumerate()
            .map(|(m, &k)| k as f64 * params.energy_at(map[m]))
            .sum::<f64>();
        // annihilate the pair that is present, then create any pair
        let (c, d) = (state.first, state.second);
        let orders: &[(usize, usize)] = if c == d { &[(c, d)] } else { &[(c, d), (d, c)] };
        for &(c, d) in orders {
            for a in 0..modes {
                for b in 0..modes {
                    let w = params.w_at(map[a], map[b], map[c], map[d]);
                    if w == 0.0 {
                        continue;
                    }
                    let Some((out, sq)) = boson::two_body(&occ, [a, b, c, d]) else {
                        continue;
                    };
                    let target = pair_from_occupations(&out);
                    if let Some(row) = basis.index_of(target) {
                        h[(row, col)] += 0.5 * w * (sq as f64).sqrt();
                    }
                }
            }
        }
    }
    let sym = (&h + h.transpose()) * 0.5;
    Ok(sym)
}

fn pair_from_occupations(occ: &[u8]) -> PairState {
    let mut idx = occ
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat_n(i, n as usize));
    let a = idx.next().unwrap_or(0);
    let b = idx.next().unwrap_or(a);
    PairState::new(a, b)
}

fn orbital_map(basis: &TwoParticleBasis, params: &HubbardParams) -> Result<Vec<usize>> {
    basis
        .orbitals
        .iter()
        .map(|&o| {
            params
                .index_of(o)
                .ok_or_else(|| Error::MissingParameter(format!("orbital {o}")))
        })
        .collect()
}

/// Sorted eigen-decomposition; eigenvectors as columns.
pub fn sorted_eigen(h: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<f64>::zeros(h.nrows(), h.ncols());
    for (j, &i) in order.iter().enumerate() {
        let mut v: DVector<f64> = eig.eigenvectors.column(i).into();
        // sign convention: largest component positive
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
        vecs.set_column(j, &v);
    }
    (vals, vecs)
}

/// Ground eigenvector of `h` as a state.
pub fn ground_state(h: &DMatrix<f64>) -> QuantumState {
    let (_, vecs) = sorted_eigen(h);
    let v: Vec<f64> = vecs.column(0).iter().copied().collect();
    QuantumState::from_real(&v)
}

/// Which basis content dominates a target eigenvector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetLabel {
    State(usize),
    /// Near-equal weight on two states; `symmetric` tells `+` from `-`.
    Superposition {
        first: usize,
        second: usize,
        symmetric: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonancePrediction {
    pub eigen_index: usize,
    /// `λ_i − λ_0` in E_R, equal to ħω in E_R.
    pub omega: f64,
    pub frequency_hz: Option<f64>,
    pub target: TargetLabel,
    pub label: String,
}

impl fmt::Display for ResonancePrediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {:.6} E_R", self.label, self.omega)?;
        if let Some(hz) = self.frequency_hz {
            write!(f, " ({hz:.1} Hz)")?;
        }
        Ok(())
    }
}

/// Relative weight difference below which two components count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-3;

/// Predicted resonances `ω_i = (λ_i − λ_0)/ħ`, labeled by dominant basis state.
pub fn resonance_predictions(
    h: &DMatrix<f64>,
    basis: &TwoParticleBasis,
    units: Option<&UnitSystem>,
) -> Vec<ResonancePrediction> {
    let (vals, vecs) = sorted_eigen(h);
    (1..vals.len())
        .map(|i| {
            let col: Vec<f64> = vecs.column(i).iter().copied().collect();
            let mut order: Vec<usize> = (0..col.len()).collect();
            order.sort_by(|&a, &b| (col[b] * col[b]).total_cmp(&(col[a] * col[a])));
            let w0 = col[order[0]].powi(2);
            let target = if col.len() > 1 && (w0 - col[order[1]].powi(2)).abs() < TIE_TOLERANCE * w0
            {
                let (a, b) = (order[0].min(order[1]), order[0].max(order[1]));
                TargetLabel::Superposition {
                    first: a,
                    second: b,
                    symmetric: col[a] * col[b] > 0.0,
                }
            } else {
                TargetLabel::State(order[0])
            };
            let label = match &target {
                TargetLabel::State(s) => basis.label(*s),
                TargetLabel::Superposition {
                    first,
                    second,
                    symmetric,
                } => format!(
                    "({}{}{})/sqrt2",
                    basis.label(*first),
                    if *symmetric { "+" } else { "-" },
                    basis.label(*second)
                ),
            };
            let omega = vals[i] - vals[0];
            ResonancePrediction {
                eigen_index: i,
                omega,
                frequency_hz: units.map(|u| u.omega_to_hz(omega)),
                target,
                label,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{sp_orbitals, spd_orbitals};

    #[test]
    fn sp_basis_is_three_states() {
        let b = build_basis(&sp_orbitals(), (Orbital::S, Orbital::S)).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b.label(0), "|200>");
        assert_eq!(b.label(1), "|020>");
        assert_eq!(b.label(2), "|002>");
    }

    #[test]
    fn spd_basis_contents() {
        let orbs = spd_orbitals();
        let b = build_basis(&orbs, (Orbital::S, Orbital::S)).unwrap();
        let has = |x: Orbital, y: Orbital| {
            let i = orbs.iter().position(|&o| o == x).unwrap();
            let j = orbs.iter().position(|&o| o == y).unwrap();
            b.index_of(PairState::new(i, j)).is_some()
        };
        assert!(has(Orbital::S, Orbital::DX));
        assert!(has(Orbital::S, Orbital::DY));
        assert!(!has(Orbital::PX, Orbital::PY));
        assert_eq!(b.len(), 9);
        for s in b.states() {
            let (px, py) = pair_parity(&orbs, *s);
            assert_eq!((px, py), (0, 0));
        }
    }

    #[test]
    fn single_orbital_basis() {
        let b = build_basis(&[Orbital::S], (Orbital::S, Orbital::S)).unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn basis_errors() {
        assert!(build_basis(&[], (Orbital::S, Orbital::S)).is_err());
        assert!(build_basis(&[Orbital::S], (Orbital::S, Orbital::PX)).is_err());
        assert!(build_basis_from_occupations(&sp_orbitals(), &[1, 0, 0]).is_err());
        assert!(build_basis_from_occupations(&sp_orbitals(), &[3, 0, 0]).is_err());
        let b = build_basis_from_occupations(&sp_orbitals(), &[2, 0, 0]).unwrap();
        assert_eq!(b.len(), 3);
    }

    #[test]
    fn permutation_checks() {
        let b = build_basis(&sp_orbitals(), (Orbital::S, Orbital::S)).unwrap();
        assert!(b.permuted(&[0, 0, 1]).is_err());
        assert!(b.permuted(&[2, 1]).is_err());
        assert_eq!(b.permuted(&[2, 0, 1]).unwrap().label(0), "|002>");
    }

    #[test]
    fn fidelity_of_states() {
        let a = QuantumState::basis_state(3, 1);
        let b = QuantumState::from_real(&[0.0, 0.6, 0.8]);
        assert!((a.fidelity(&b) - 0.36).abs() < 1e-15);
        assert!((b.norm() - 1.0).abs() < 1e-15);
    }
}
