use num_complex::Complex64;

use super::basis::FockBasis;
use crate::boson;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::params::{Direction, HubbardParams};

/// Real symmetric matrix in compressed-row form, values in E_R.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    values: Vec<f64>,
    /// Set when the matrix was assembled with every term and its adjoint.
    pub hermitian_by_construction: bool,
}

impl SparseHamiltonian {
    /// From `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if triplets.iter().any(|&(r, c, _)| r >= dim || c >= dim) {
            return Err(Error::invalid("triplet outside the matrix"));
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            cols.push(c as u32);
            values.push(v);
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            dim,
            row_ptr,
            cols,
            values,
            hermitian_by_construction: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored `(row, col, value)` entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |e| (r, self.cols[e] as usize, self.values[e]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.cols[range.clone()]
            .binary_search(&(col as u32))
            .map(|k| self.values[range.start + k])
            .unwrap_or(0.0)
    }

    /// Largest `|H_ij − H_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.entries()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64], exec: Execution) {
        par::fill_indexed(y, exec, |r| {
            let mut acc = Complex64::new(0.0, 0.0);
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.cols[e] as usize] * self.values[e];
            }
            acc
        });
    }

    pub fn apply_real(&self, x: &[f64], y: &mut [f64], exec: Execution) {
        par::fill_indexed(y, exec, |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(|e| x[self.cols[e] as usize] * self.values[e])
                .sum()
        });
    }

    /// `⟨ψ|H|ψ⟩` (real for symmetric `H`).
    pub fn expectation(&self, psi: &[Complex64], exec: Execution) -> f64 {
        let mut hpsi = vec![Complex64::new(0.0, 0.0); self.dim];
        self.apply(psi, &mut hpsi, exec);
        psi.iter().zip(&hpsi).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Dense copy, for small checks.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }
}

/// Chain geometry for the many-body Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainSpec {
    /// Lattice direction the chain runs along (selects `J^x` or `J^y`).
    pub direction: Direction,
    pub periodic: bool,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            direction: Direction::X,
            periodic: true,
        }
    }
}

/// Nearest-neighbour bonds; a two-site ring has a single bond.
pub fn bonds(sites: usize, periodic: bool) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..sites.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    if periodic && sites > 2 {
        out.push((sites - 1, 0));
    }
    out
}

/// `H = Σ_{iσ} E_σ n_iσ − Σ_{⟨ij⟩σ} J_σ (a†_iσ a_jσ + h.c.)
///     + ½ Σ_i Σ_{abcd} W[a,b,c,d] a†_ia a†_ib a_ic a_id`
/// stored as terms `coefficient × flat[slot]` over the flattened
/// [`HubbardParams`] layout, so one structure serves every parameter set.
///
/// Slots whose template value is exactly zero (parity-forbidden elements,
/// disabled hopping) are left out.
#[derive(Debug, Clone)]
pub struct ParametricHamiltonian {
    dim: usize,
    /// Unique `(row, col)` pattern of the assembled matrix.
    pattern: SparseHamiltonian,
    /// Terms grouped by pattern entry: `term_ptr[e]..term_ptr[e+1]`.
    term_ptr: Vec<usize>,
    coefficients: Vec<f64>,
    slots: Vec<u32>,
    flat_len: usize,
}

impl ParametricHamiltonian {
    pub fn new(basis: &FockBasis, template: &HubbardParams, chain: ChainSpec) -> Result<Self> {
        let map: Vec<usize> = basis
            .orbitals()
            .iter()
            .map(|&o| {
                template
                    .index_of(o)
                    .ok_or_else(|| Error::invalid(format!("parameters lack orbital {o}")))
            })
            .collect::<Result<_>>()?;
        let flat = template.flatten();
        let norb = map.len();
        let mut terms: Vec<(usize, usize, usize, f64)> = Vec::new();
        for idx in 0..basis.len() {
            let occ = basis.occupation(idx);
            for site in 0..basis.sites() {
                for (o, &p) in map.iter().enumerate() {
                    let n = occ[basis.mode(site, o)];
                    let slot = template.energy_slot(p);
                    if n > 0 && flat[slot] != 0.0 {
                        terms.push((idx, idx, slot, n as f64));
                    }
                }
                // on-site contact terms
                for a in 0..norb {
                    for b in 0..norb {
                        for c in 0..norb {
                            for d in 0..norb {
                                let slot = template.w_slot(map[a], map[b], map[c], map[d]);
                                if flat[slot] == 0.0 {
                                    continue;
                                }
                                let modes = [a, b, c, d].map(|o| basis.mode(site, o));
                                let Some((out, sq)) = boson::two_body(occ, modes) else {
                                    continue;
                                };
                                let row = basis.index_of(&out).expect("particle number conserved");
                                terms.push((row, idx, slot, 0.5 * (sq as f64).sqrt()));
                            }
                        }
                    }
                }
            }
            for (i, j) in bonds(basis.sites(), chain.periodic) {
                for (o, &p) in map.iter().enumerate() {
                    let band = template.orbitals()[p].band(chain.direction);
                    let Some(slot) = template.hopping_slot(chain.direction, band) else {
                        continue;
                    };
                    if flat[slot] == 0.0 {
                        continue;
                    }
                    for (to, from) in [(i, j), (j, i)] {
                        let Some((out, sq)) =
                            boson::hop(occ, basis.mode(to, o), basis.mode(from, o))
                        else {
                            continue;
                        };
                        let row = basis.index_of(&out).expect("particle number conserved");
                        terms.push((row, idx, slot, -(sq as f64).sqrt()));
                    }
                }
            }
        }
        terms.sort_by_key(|&(r, c, s, _)| (r, c, s));
        terms.dedup_by(|b, a| {
            if (a.0, a.1, a.2) == (b.0, b.1, b.2) {
                a.3 += b.3;
                true
            } else {
                false
            }
        });

        let dim = basis.len();
        let mut pattern =
            SparseHamiltonian::from_triplets(dim, terms.iter().map(|t| (t.0, t.1, 0.0)).collect())?;
        pattern.hermitian_by_construction = true;
        let mut term_ptr = vec![0];
        for (k, t) in terms.iter().enumerate() {
            if k > 0 && (terms[k - 1].0, terms[k - 1].1) != (t.0, t.1) {
                term_ptr.push(k);
            }
        }
        term_ptr.push(terms.len());
        debug_assert_eq!(term_ptr.len(), pattern.nnz() + 1);
        Ok(Self {
            dim,
            pattern,
            term_ptr,
            coefficients: terms.iter().map(|t| t.3).collect(),
            slots: terms.iter().map(|t| t.2 as u32).collect(),
            flat_len: flat.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of flattened parameters expected by [`Self::assemble_into`].
    pub fn flat_len(&self) -> usize {
        self.flat_len
    }

    /// Writes the matrix for flattened parameters `flat` into `out`, which
    /// must come from [`Self::assemble`] on this structure.
    pub fn assemble_into(&self, flat: &[f64], out: &mut SparseHamiltonian) -> Result<()> {
        if flat.len() != self.flat_len {
            return Err(Error::invalid("flattened parameter length mismatch"));
        }
        if out.values.len() != self.pattern.nnz() {
            return Err(Error::invalid("matrix pattern mismatch"));
        }
        for (e, v) in out.values.iter_mut().enumerate() {
            *v = (self.term_ptr[e]..self.term_ptr[e + 1])
                .map(|k| self.coefficients[k] * flat[self.slots[k] as usize])
                .sum();
        }
        Ok(())
    }

    pub fn assemble(&self, flat: &[f64]) -> Result<SparseHamiltonian> {
        let mut out = self.pattern.clone();
        self.assemble_into(flat, &mut out)?;
        Ok(out)
    }
}

/// Many-body Hamiltonian for one parameter set.
pub fn assemble_hamiltonian(
    basis: &FockBasis,
    params: &HubbardParams,
    chain: ChainSpec,
) -> Result<SparseHamiltonian> {
    ParametricHamiltonian::new(basis, params, chain)?.assemble(&params.flatten())
}
