use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::Orbital;

/// Largest Fock space this module will enumerate.
pub const DIMENSION_GUARD: usize = 200_000;
/// Largest number of single-particle modes (sites × orbitals).
pub const MAX_MODES: usize = 16;

/// `C(N + M − 1, N)` bosonic states of `N` particles in `M` modes.
pub fn fock_dimension(modes: usize, particles: usize) -> u128 {
    if modes == 0 {
        return u128::from(particles == 0);
    }
    let (n, k) = (
        (particles + modes - 1) as u128,
        particles.min(modes - 1) as u128,
    );
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Fixed-particle-number occupation basis on a chain of sites.
///
/// Mode `site · orbitals + orbital`. States are in descending lexicographic
/// order, starting from all particles in mode 0.
#[derive(Debug, Clone)]
pub struct FockBasis {
    sites: usize,
    orbitals: Vec<Orbital>,
    particles: usize,
    occupations: Vec<u8>,
    lookup: HashMap<Vec<u8>, usize>,
}

pub fn build_fock_basis(sites: usize, orbitals: &[Orbital], particles: usize) -> Result<FockBasis> {
    if sites == 0 || orbitals.is_empty() {
        return Err(Error::invalid("need at least one site and one orbital"));
    }
    let modes = sites * orbitals.len();
    if modes > MAX_MODES {
        return Err(Error::invalid(format!(
            "{modes} modes exceed the limit of {MAX_MODES}"
        )));
    }
    if particles > u8::MAX as usize {
        return Err(Error::invalid("too many particles"));
    }
    let dim = fock_dimension(modes, particles);
    if dim > DIMENSION_GUARD as u128 {
        return Err(Error::DimensionGuard {
            dim: dim.min(usize::MAX as u128) as usize,
            limit: DIMENSION_GUARD,
        });
    }
    let mut occupations = Vec::with_capacity(dim as usize * modes);
    let mut current = vec![0u8; modes];
    enumerate(&mut current, 0, particles, &mut occupations);
    let lookup = occupations
        .chunks(modes)
        .enumerate()
        .map(|(i, o)| (o.to_vec(), i))
        .collect();
    Ok(FockBasis {
        sites,
        orbitals: orbitals.to_vec(),
        particles,
        occupations,
        lookup,
    })
}

fn enumerate(current: &mut [u8], mode: usize, left: usize, out: &mut Vec<u8>) {
    if mode + 1 == current.len() {
        current[mode] = left as u8;
        out.extend_from_slice(current);
        return;
    }
    for n in (0..=left).rev() {
        current[mode] = n as u8;
        enumerate(current, mode + 1, left - n, out);
    }
    current[mode] = 0;
}

impl FockBasis {
    pub fn len(&self) -> usize {
        self.lookup.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lookup.is_empty()
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn orbitals(&self) -> &[Orbital] {
        &self.orbitals
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn modes(&self) -> usize {
        self.sites * self.orbitals.len()
    }

    pub fn mode(&self, site: usize, orbital: usize) -> usize {
        site * self.orbitals.len() + orbital
    }

    pub fn occupation(&self, index: usize) -> &[u8] {
        let m = self.modes();
        &self.occupations[index * m..(index + 1) * m]
    }

    pub fn index_of(&self, occupation: &[u8]) -> Option<usize> {
        self.lookup.get(occupation).copied()
    }

    /// Particles on `site` in state `index`.
    pub fn site_count(&self, index: usize, site: usize) -> usize {
        let m = self.orbitals.len();
        self.occupation(index)[site * m..(site + 1) * m]
            .iter()
            .map(|&n| n as usize)
            .sum()
    }
}
