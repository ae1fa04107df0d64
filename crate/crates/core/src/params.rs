//! Coefficients of the extended Bose-Hubbard Hamiltonian for a separable 2D
//! lattice with harmonic confinement along z.
//!
//! Orbitals are products of 1D Wannier functions, `φ = X^{n_x}(x) Y^{n_y}(y) Z(z)`.
//! Single-particle energies are `E = ε_{n_x}(q_x) + ε_{n_y}(q_y) + κ` and the
//! contact elements are `W = g √(κ/2π) I_x I_y` with `I` the on-site overlap of
//! four 1D Wannier functions.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bands::{self, BandSettings, WannierFunction};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::spline::{CubicSpline, SplineGrid};

/// On-site orbital labeled by its 1D band indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Orbital {
    pub nx: u8,
    pub ny: u8,
}

impl Orbital {
    pub const S: Orbital = Orbital { nx: 0, ny: 0 };
    pub const PX: Orbital = Orbital { nx: 1, ny: 0 };
    pub const PY: Orbital = Orbital { nx: 0, ny: 1 };
    pub const DX: Orbital = Orbital { nx: 2, ny: 0 };
    pub const DY: Orbital = Orbital { nx: 0, ny: 2 };
    pub const DXY: Orbital = Orbital { nx: 1, ny: 1 };

    /// Highest supported band index per direction.
    pub const MAX_BAND: u8 = 2;

    pub fn new(nx: u8, ny: u8) -> Result<Self> {
        if nx > Self::MAX_BAND || ny > Self::MAX_BAND {
            return Err(Error::invalid(format!(
                "orbital ({nx},{ny}) needs bands above {}",
                Self::MAX_BAND
            )));
        }
        Ok(Self { nx, ny })
    }

    pub fn band(&self, dir: Direction) -> u8 {
        match dir {
            Direction::X => self.nx,
            Direction::Y => self.ny,
        }
    }

    /// x ↔ y reflection.
    pub fn mirrored(&self) -> Orbital {
        Orbital {
            nx: self.ny,
            ny: self.nx,
        }
    }

    pub fn name(&self) -> String {
        match (self.nx, self.ny) {
            (0, 0) => "s".into(),
            (1, 0) => "px".into(),
            (0, 1) => "py".into(),
            (2, 0) => "dx".into(),
            (0, 2) => "dy".into(),
            (1, 1) => "dxy".into(),
            (a, b) => format!("o{a}{b}"),
        }
    }
}

impl fmt::Display for Orbital {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Orbital {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s" => Ok(Orbital::S),
            "px" => Ok(Orbital::PX),
            "py" => Ok(Orbital::PY),
            "dx" => Ok(Orbital::DX),
            "dy" => Ok(Orbital::DY),
            "dxy" => Ok(Orbital::DXY),
            other => Err(Error::invalid(format!("unknown orbital '{other}'"))),
        }
    }
}

/// `{s, p_x, p_y}`.
pub fn sp_orbitals() -> Vec<Orbital> {
    vec![Orbital::S, Orbital::PX, Orbital::PY]
}

/// `{s, p_x, p_y, d_x, d_y, d_xy}`.
pub fn spd_orbitals() -> Vec<Orbital> {
    vec![
        Orbital::S,
        Orbital::PX,
        Orbital::PY,
        Orbital::DX,
        Orbital::DY,
        Orbital::DXY,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    X,
    Y,
}

/// Lattice depths (E_R), aspect ratio κ and contact coupling g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    pub qx: f64,
    pub qy: f64,
    pub kappa: f64,
    pub g: f64,
}

impl LatticeGeometry {
    pub fn new(qx: f64, qy: f64, kappa: f64, g: f64) -> Result<Self> {
        let geom = Self { qx, qy, kappa, g };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.qx, self.qy, self.kappa, self.g];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("geometry entries must be finite"));
        }
        if self.qx < 0.0 || self.qy < 0.0 {
            return Err(Error::invalid(format!(
                "lattice depths must be >= 0 (q_x = {}, q_y = {})",
                self.qx, self.qy
            )));
        }
        if self.kappa <= 0.0 {
            return Err(Error::invalid(format!(
                "kappa must be > 0, got {}",
                self.kappa
            )));
        }
        if !self.is_quasi_2d() {
            log::warn!(
                "kappa^2 = {} is not >> max(q_x, q_y) = {}; frozen-z approximation is doubtful",
                self.kappa * self.kappa,
                self.qx.max(self.qy)
            );
        }
        Ok(())
    }

    /// `κ² ≥ 1.5 max(q_x, q_y)`: z motion is frozen.
    pub fn is_quasi_2d(&self) -> bool {
        self.kappa * self.kappa >= 1.5 * self.qx.max(self.qy)
    }

    /// `∫ Z⁴ dz = √(κ/2π)`.
    pub fn z_factor(&self) -> f64 {
        (self.kappa / (2.0 * PI)).sqrt()
    }

    pub fn is_symmetric(&self) -> bool {
        self.qx == self.qy
    }
}

/// Band data for one lattice direction at one depth.
#[derive(Debug, Clone)]
pub struct AxisSolution {
    pub depth: f64,
    /// `ε_n`: on-site expectation of the 1D Hamiltonian per band.
    pub onsite: Vec<f64>,
    /// `J_n`: nearest-neighbour hopping per band.
    pub hopping: Vec<f64>,
    pub wannier: Vec<WannierFunction>,
}

impl AxisSolution {
    pub fn compute(depth: f64, band_count: usize, settings: &BandSettings) -> Result<Self> {
        let bands = bands::solve_bands_with(
            depth,
            band_count,
            settings.k_points,
            settings.plane_waves,
            Execution::Sequential,
        )?;
        let mut onsite = Vec::with_capacity(band_count);
        let mut hopping = Vec::with_capacity(band_count);
        let mut wannier = Vec::with_capacity(band_count);
        for band in 0..band_count {
            onsite.push(bands.onsite_energy(band)?);
            hopping.push(bands::hopping(&bands, band)?);
            wannier.push(bands::wannier_on_grid(
                &bands,
                band,
                0,
                settings.points_per_site,
                settings.support_sites,
            )?);
        }
        Ok(Self {
            depth,
            onsite,
            hopping,
            wannier,
        })
    }

    /// `∫ w_a w_b w_c w_d dx`; exact zero when the band indices have odd sum.
    pub fn overlap(&self, n: [u8; 4]) -> f64 {
        if n.iter().map(|&v| v as u32).sum::<u32>() % 2 == 1 {
            return 0.0;
        }
        self.overlap_quadrature(n)
    }

    /// Quadrature of the four-function overlap, without the parity shortcut.
    pub fn overlap_quadrature(&self, n: [u8; 4]) -> f64 {
        let w = n.map(|b| &self.wannier[b as usize].samples);
        let dx = self.wannier[0].spacing;
        bands::trapezoid(
            (0..w[0].len()).map(|i| w[0][i] * w[1][i] * w[2][i] * w[3][i]),
            dx,
        )
    }
}

/// Every coefficient of the on-site and hopping Hamiltonian at one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct HubbardParams {
    pub geometry: LatticeGeometry,
    orbitals: Vec<Orbital>,
    energies: Vec<f64>,
    hopping_x: Vec<f64>,
    hopping_y: Vec<f64>,
    /// Dense `n⁴` table, index `((a n + b) n + c) n + d`.
    interaction: Vec<f64>,
}

impl HubbardParams {
    pub fn orbitals(&self) -> &[Orbital] {
        &self.orbitals
    }

    pub fn index_of(&self, orbital: Orbital) -> Option<usize> {
        self.orbitals.iter().position(|&o| o == orbital)
    }

    fn require(&self, orbital: Orbital) -> Result<usize> {
        self.index_of(orbital)
            .ok_or_else(|| Error::MissingParameter(format!("orbital {orbital}")))
    }

    pub fn energy(&self, orbital: Orbital) -> Result<f64> {
        Ok(self.energies[self.require(orbital)?])
    }

    pub fn energy_at(&self, index: usize) -> f64 {
        self.energies[index]
    }

    /// `J^d_α`.
    pub fn hopping(&self, dir: Direction, band: u8) -> Result<f64> {
        let table = match dir {
            Direction::X => &self.hopping_x,
            Direction::Y => &self.hopping_y,
        };
        table
            .get(band as usize)
            .copied()
            .ok_or_else(|| Error::MissingParameter(format!("J for band {band} along {dir:?}")))
    }

    /// Hopping of `orbital` along `dir`.
    pub fn orbital_hopping(&self, orbital: Orbital, dir: Direction) -> Result<f64> {
        self.hopping(dir, orbital.band(dir))
    }

    pub fn w_at(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let n = self.orbitals.len();
        self.interaction[((a * n + b) * n + c) * n + d]
    }

    /// Four-index contact element `W[a,b,c,d]`.
    pub fn w(&self, a: Orbital, b: Orbital, c: Orbital, d: Orbital) -> Result<f64> {
        Ok(self.w_at(
            self.require(a)?,
            self.require(b)?,
            self.require(c)?,
            self.require(d)?,
        ))
    }

    /// Named two-index element `U_{ab} = W[a,a,b,b]`.
    pub fn u(&self, a: Orbital, b: Orbital) -> Result<f64> {
        self.w(a, a, b, b)
    }

    /// Flattened `[energies, J_x, J_y, W]`, the layout used by tables.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        out.extend_from_slice(&self.energies);
        out.extend_from_slice(&self.hopping_x);
        out.extend_from_slice(&self.hopping_y);
        out.extend_from_slice(&self.interaction);
        out
    }

    /// Position of `E` for orbital `index` in [`flatten`](Self::flatten).
    pub fn energy_slot(&self, index: usize) -> usize {
        index
    }

    /// Position of `J^dir_band` in [`flatten`](Self::flatten).
    pub fn hopping_slot(&self, dir: Direction, band: u8) -> Option<usize> {
        let band = band as usize;
        let ne = self.energies.len();
        match dir {
            Direction::X => (band < self.hopping_x.len()).then_some(ne + band),
            Direction::Y => {
                (band < self.hopping_y.len()).then_some(ne + self.hopping_x.len() + band)
            }
        }
    }

    /// Position of `W[a,b,c,d]` in [`flatten`](Self::flatten).
    pub fn w_slot(&self, a: usize, b: usize, c: usize, d: usize) -> usize {
        let n = self.orbitals.len();
        self.energies.len()
            + self.hopping_x.len()
            + self.hopping_y.len()
            + ((a * n + b) * n + c) * n
            + d
    }

    fn flat_len(&self) -> usize {
        self.energies.len() + self.hopping_x.len() + self.hopping_y.len() + self.interaction.len()
    }

    /// Rebuilds params from a flattened vector with `self` as layout template.
    pub fn with_flat(&self, geometry: LatticeGeometry, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.flat_len() {
            return Err(Error::invalid("flattened parameter length mismatch"));
        }
        let (e, rest) = flat.split_at(self.energies.len());
        let (jx, rest) = rest.split_at(self.hopping_x.len());
        let (jy, w) = rest.split_at(self.hopping_y.len());
        Ok(Self {
            geometry,
            orbitals: self.orbitals.clone(),
            energies: e.to_vec(),
            hopping_x: jx.to_vec(),
            hopping_y: jy.to_vec(),
            interaction: w.to_vec(),
        })
    }

    /// Scales every contact element; energies and hoppings are untouched.
    pub fn with_interaction_scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.interaction.iter_mut().for_each(|w| *w *= factor);
        out.geometry.g *= factor;
        out
    }

    /// Copy with all hoppings set to zero.
    pub fn without_hopping(&self) -> Self {
        let mut out = self.clone();
        out.hopping_x.iter_mut().for_each(|j| *j = 0.0);
        out.hopping_y.iter_mut().for_each(|j| *j = 0.0);
        out
    }
}

fn validate_orbital_set(geom: &LatticeGeometry, orbitals: &[Orbital]) -> Result<usize> {
    if orbitals.is_empty() {
        return Err(Error::invalid("orbital set is empty"));
    }
    for (i, o) in orbitals.iter().enumerate() {
        Orbital::new(o.nx, o.ny)?;
        if orbitals[..i].contains(o) {
            return Err(Error::invalid(format!("orbital {o} listed twice")));
        }
        if geom.is_symmetric() && !orbitals.contains(&o.mirrored()) {
            return Err(Error::invalid(format!(
                "symmetric lattice needs the orbital set closed under x<->y; {} is missing",
                o.mirrored()
            )));
        }
    }
    Ok(orbitals
        .iter()
        .map(|o| o.nx.max(o.ny) as usize + 1)
        .max()
        .unwrap_or(1))
}

/// `E_σ = ε_{n_x}(q_x) + ε_{n_y}(q_y) + κ`.
pub fn onsite_energy(geom: &LatticeGeometry, orbital: Orbital) -> Result<f64> {
    geom.validate()?;
    Orbital::new(orbital.nx, orbital.ny)?;
    let s = BandSettings::default();
    let nb = orbital.nx.max(orbital.ny) as usize + 1;
    let bx = bands::solve_bands(geom.qx, nb, s.k_points, s.plane_waves)?;
    let by = bands::solve_bands(geom.qy, nb, s.k_points, s.plane_waves)?;
    Ok(
        bx.onsite_energy(orbital.nx as usize)?
            + by.onsite_energy(orbital.ny as usize)?
            + geom.kappa,
    )
}

/// `W[a,b,c,d] = g √(κ/2π) I_x I_y` for a single element.
pub fn interaction_element(geom: &LatticeGeometry, orbitals: [Orbital; 4]) -> Result<f64> {
    geom.validate()?;
    for o in &orbitals {
        Orbital::new(o.nx, o.ny)?;
    }
    let nx = orbitals.map(|o| o.nx);
    let ny = orbitals.map(|o| o.ny);
    let odd = |n: [u8; 4]| n.iter().map(|&v| v as u32).sum::<u32>() % 2 == 1;
    if odd(nx) || odd(ny) {
        return Ok(0.0);
    }
    let nb = orbitals.iter().map(|o| o.nx.max(o.ny)).max().unwrap_or(0) as usize + 1;
    let s = BandSettings::default();
    let ax = AxisSolution::compute(geom.qx, nb, &s)?;
    let ay = if geom.is_symmetric() {
        ax.clone()
    } else {
        AxisSolution::compute(geom.qy, nb, &s)?
    };
    Ok(geom.g * geom.z_factor() * ax.overlap(nx) * ay.overlap(ny))
}

/// Complete parameter set for `orbitals` at `geom`.
pub fn compute_params(geom: &LatticeGeometry, orbitals: &[Orbital]) -> Result<HubbardParams> {
    compute_params_with(geom, orbitals, &BandSettings::default())
}

pub fn compute_params_with(
    geom: &LatticeGeometry,
    orbitals: &[Orbital],
    settings: &BandSettings,
) -> Result<HubbardParams> {
    geom.validate()?;
    let nb = validate_orbital_set(geom, orbitals)?;
    let ax = AxisSolution::compute(geom.qx, nb, settings)?;
    let ay = if geom.is_symmetric() {
        ax.clone()
    } else {
        AxisSolution::compute(geom.qy, nb, settings)?
    };
    Ok(assemble(geom, orbitals, &ax, &ay))
}

/// Parameters from precomputed 1D solutions (must carry enough bands).
pub fn assemble(
    geom: &LatticeGeometry,
    orbitals: &[Orbital],
    ax: &AxisSolution,
    ay: &AxisSolution,
) -> HubbardParams {
    let n = orbitals.len();
    let energies = orbitals
        .iter()
        .map(|o| ax.onsite[o.nx as usize] + ay.onsite[o.ny as usize] + geom.kappa)
        .collect();

    let mut cache_x: HashMap<[u8; 4], f64> = HashMap::new();
    let mut cache_y: HashMap<[u8; 4], f64> = HashMap::new();
    let prefactor = geom.g * geom.z_factor();
    let mut interaction = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let idx = [orbitals[a], orbitals[b], orbitals[c], orbitals[d]];
                    let mut kx = idx.map(|o| o.nx);
                    let mut ky = idx.map(|o| o.ny);
                    kx.sort_unstable();
                    ky.sort_unstable();
                    let ix = *cache_x.entry(kx).or_insert_with(|| ax.overlap(kx));
                    if ix == 0.0 {
                        continue;
                    }
                    let iy = *cache_y.entry(ky).or_insert_with(|| ay.overlap(ky));
                    interaction[((a * n + b) * n + c) * n + d] = prefactor * ix * iy;
                }
            }
        }
    }

    HubbardParams {
        geometry: *geom,
        orbitals: orbitals.to_vec(),
        energies,
        hopping_x: ax.hopping.clone(),
        hopping_y: ay.hopping.clone(),
        interaction,
    }
}

/// One-parameter family of geometries, `Q(s) = Q_base + s · direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Qx,
    Qy,
    Kappa,
    G,
    /// `(q_x, q_y) + (s, s)`.
    Symmetric,
    /// `(q_x, q_y) + (s, -s)`.
    Antisymmetric,
    /// `(q_x, q_y, κ, g) + s · direction`.
    Line([f64; 4]),
}

impl Axis {
    pub fn apply(&self, base: &LatticeGeometry, s: f64) -> LatticeGeometry {
        let mut g = *base;
        match self {
            Axis::Qx => g.qx += s,
            Axis::Qy => g.qy += s,
            Axis::Kappa => g.kappa += s,
            Axis::G => g.g += s,
            Axis::Symmetric => {
                g.qx += s;
                g.qy += s;
            }
            Axis::Antisymmetric => {
                g.qx += s;
                g.qy -= s;
            }
            Axis::Line([dx, dy, dk, dg]) => {
                g.qx += s * dx;
                g.qy += s * dy;
                g.kappa += s * dk;
                g.g += s * dg;
            }
        }
        g
    }

    pub fn name(&self) -> &'static str {
        match self {
            Axis::Qx => "q_x",
            Axis::Qy => "q_y",
            Axis::Kappa => "kappa",
            Axis::G => "g",
            Axis::Symmetric => "symmetric offset",
            Axis::Antisymmetric => "antisymmetric offset",
            Axis::Line(_) => "drive coordinate",
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qx" | "q_x" => Ok(Axis::Qx),
            "qy" | "q_y" => Ok(Axis::Qy),
            "kappa" => Ok(Axis::Kappa),
            "g" => Ok(Axis::G),
            "symmetric" | "plus" | "+" => Ok(Axis::Symmetric),
            "antisymmetric" | "minus" | "-" => Ok(Axis::Antisymmetric),
            other => Err(Error::invalid(format!("unknown axis '{other}'"))),
        }
    }
}

/// Cubic-spline table of every [`HubbardParams`] entry along one axis.
///
/// The table coordinate is the offset `s` from the base geometry.
#[derive(Debug, Clone)]
pub struct ParameterTable {
    pub base: LatticeGeometry,
    pub axis: Axis,
    grid: SplineGrid,
    template: HubbardParams,
    values: Vec<Vec<f64>>,
    splines: Vec<CubicSpline>,
}

/// Minimum number of grid points for a non-degenerate table.
pub const MIN_TABLE_POINTS: usize = 9;

pub fn parameter_table(
    base: &LatticeGeometry,
    axis: Axis,
    lo: f64,
    hi: f64,
    points: usize,
    orbitals: &[Orbital],
) -> Result<ParameterTable> {
    parameter_table_with(
        base,
        axis,
        lo,
        hi,
        points,
        orbitals,
        &BandSettings::default(),
        Execution::Auto,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn parameter_table_with(
    base: &LatticeGeometry,
    axis: Axis,
    lo: f64,
    hi: f64,
    points: usize,
    orbitals: &[Orbital],
    settings: &BandSettings,
    exec: Execution,
) -> Result<ParameterTable> {
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::invalid(format!("bad table range [{lo}, {hi}]")));
    }
    let offsets: Vec<f64> = if hi == lo {
        vec![lo]
    } else {
        if points < MIN_TABLE_POINTS {
            return Err(Error::invalid(format!(
                "parameter table needs >= {MIN_TABLE_POINTS} points, got {points}"
            )));
        }
        (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect()
    };
    let geoms: Vec<LatticeGeometry> = offsets.iter().map(|&s| axis.apply(base, s)).collect();
    let mut nb = 1;
    for g in &geoms {
        g.validate()?;
        nb = validate_orbital_set(g, orbitals)?;
    }

    // distinct 1D depths, solved once each
    let mut depths: Vec<f64> = geoms.iter().flat_map(|g| [g.qx, g.qy]).collect();
    depths.sort_by(f64::total_cmp);
    depths.dedup();
    let solved = par::map_slice(&depths, exec, |&q| AxisSolution::compute(q, nb, settings));
    let mut by_depth: HashMap<u64, AxisSolution> = HashMap::new();
    for (q, sol) in depths.iter().zip(solved) {
        by_depth.insert(q.to_bits(), sol?);
    }

    let params: Vec<HubbardParams> = geoms
        .iter()
        .map(|g| {
            assemble(
                g,
                orbitals,
                &by_depth[&g.qx.to_bits()],
                &by_depth[&g.qy.to_bits()],
            )
        })
        .collect();
    let template = params[0].clone();
    let flat: Vec<Vec<f64>> = params.iter().map(|p| p.flatten()).collect();
    let grid = SplineGrid::new(offsets)?;
    let entries = flat[0].len();
    let splines = (0..entries)
        .map(|e| grid.fit(&flat.iter().map(|row| row[e]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;

    Ok(ParameterTable {
        base: *base,
        axis,
        grid,
        template,
        values: flat,
        splines,
    })
}

impl ParameterTable {
    pub fn range(&self) -> (f64, f64) {
        (self.grid.min(), self.grid.max())
    }

    pub fn grid(&self) -> &[f64] {
        self.grid.x()
    }

    pub fn orbitals(&self) -> &[Orbital] {
        self.template.orbitals()
    }

    /// Parameters computed directly at grid point `i`.
    pub fn grid_params(&self, i: usize) -> Result<HubbardParams> {
        let s = self.grid.x()[i];
        self.template
            .with_flat(self.axis.apply(&self.base, s), &self.values[i])
    }

    fn locate(&self, s: f64) -> Result<(usize, f64)> {
        self.grid.locate(s).ok_or_else(|| Error::OutOfTableRange {
            axis: self.axis.name().into(),
            value: s,
            min: self.grid.min(),
            max: self.grid.max(),
        })
    }

    /// Interpolated flattened parameters at offset `s`.
    pub fn flat_at(&self, s: f64) -> Result<Vec<f64>> {
        let loc = self.locate(s)?;
        Ok(self
            .splines
            .iter()
            .map(|sp| sp.eval(&self.grid, loc))
            .collect())
    }

    /// Interpolated parameters at offset `s`.
    pub fn at(&self, s: f64) -> Result<HubbardParams> {
        let flat = self.flat_at(s)?;
        self.template
            .with_flat(self.axis.apply(&self.base, s), &flat)
    }

    /// Maps every grid point through a linear functional of the parameters and
    /// tabulates the result on the same grid.
    pub fn derived<F>(&self, f: F) -> Result<DerivedTable>
    where
        F: Fn(&HubbardParams) -> Vec<f64>,
    {
        let rows = (0..self.grid.x().len())
            .map(|i| self.grid_params(i).map(|p| f(&p)))
            .collect::<Result<Vec<_>>>()?;
        let width = rows[0].len();
        let splines = (0..width)
            .map(|e| {
                self.grid
                    .fit(&rows.iter().map(|r| r[e]).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let intervals = (self.grid.x().len() - 1).max(1);
        let per_column: Vec<Vec<[f64; 4]>> = splines
            .iter()
            .map(|sp| sp.interval_coefficients(&self.grid))
            .collect();
        let coefficients = (0..intervals)
            .flat_map(|i| per_column.iter().map(move |c| c[i]))
            .collect();
        Ok(DerivedTable {
            axis: self.axis,
            grid: self.grid.clone(),
            width,
            coefficients,
        })
    }
}

/// Spline table of quantities derived from a [`ParameterTable`].
#[derive(Debug, Clone)]
pub struct DerivedTable {
    axis: Axis,
    grid: SplineGrid,
    width: usize,
    /// Power-series coefficients, interval-major then column.
    coefficients: Vec<[f64; 4]>,
}

impl DerivedTable {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn range(&self) -> (f64, f64) {
        (self.grid.min(), self.grid.max())
    }

    pub fn eval_into(&self, s: f64, out: &mut [f64]) -> Result<()> {
        self.eval_with(s, |k, v| out[k] = v)
    }

    /// Calls `f(column, value)` for every tabulated column at `s`.
    pub fn eval_with(&self, s: f64, mut f: impl FnMut(usize, f64)) -> Result<()> {
        let loc = self.grid.locate(s).ok_or_else(|| Error::OutOfTableRange {
            axis: self.axis.name().into(),
            value: s,
            min: self.grid.min(),
            max: self.grid.max(),
        })?;
        let (i, s) = loc;
        let t = if self.grid.x().len() > 1 {
            s - self.grid.x()[i]
        } else {
            0.0
        };
        let row = &self.coefficients[i * self.width..(i + 1) * self.width];
        for (k, c) in row.iter().enumerate() {
            f(k, c[0] + t * (c[1] + t * (c[2] + t * c[3])));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse() -> BandSettings {
        BandSettings {
            plane_waves: 25,
            k_points: 32,
            points_per_site: 128,
            support_sites: 3,
        }
    }

    #[test]
    fn geometry_validation() {
        assert!(LatticeGeometry::new(32.0, 20.0, 8.0, 1.8).is_ok());
        assert!(LatticeGeometry::new(32.0, 20.0, -8.0, 1.8).is_err());
        assert!(LatticeGeometry::new(-1.0, 20.0, 8.0, 1.8).is_err());
        assert!(LatticeGeometry::new(f64::NAN, 20.0, 8.0, 1.8).is_err());
        assert!(LatticeGeometry::new(32.0, 20.0, 8.0, 1.8)
            .unwrap()
            .is_quasi_2d());
        assert!(!LatticeGeometry::new(32.0, 20.0, 4.0, 1.8)
            .unwrap()
            .is_quasi_2d());
    }

    #[test]
    fn orbital_names_round_trip() {
        for o in spd_orbitals() {
            assert_eq!(o.name().parse::<Orbital>().unwrap(), o);
        }
        assert!(Orbital::new(3, 0).is_err());
        assert_eq!(Orbital::PX.mirrored(), Orbital::PY);
    }

    #[test]
    fn symmetric_lattice_requires_closed_set() {
        let g = LatticeGeometry::new(20.0, 20.0, 8.0, 1.0).unwrap();
        let err = compute_params_with(&g, &[Orbital::S, Orbital::PX], &coarse());
        assert!(err.is_err());
        assert!(compute_params_with(&g, &[], &coarse()).is_err());
    }

    #[test]
    fn missing_entries_are_errors() {
        let g = LatticeGeometry::new(30.0, 20.0, 8.0, 1.0).unwrap();
        let p = compute_params_with(&g, &[Orbital::S, Orbital::PX], &coarse()).unwrap();
        assert!(p.energy(Orbital::PY).is_err());
        assert!(p.hopping(Direction::X, 2).is_err());
        assert!(p.u(Orbital::S, Orbital::DX).is_err());
    }

    #[test]
    fn table_rejects_sparse_grid_and_range_violations() {
        let g = LatticeGeometry::new(30.0, 20.0, 8.0, 1.0).unwrap();
        let orbs = [Orbital::S, Orbital::PX];
        assert!(parameter_table_with(
            &g,
            Axis::Qx,
            -1.0,
            1.0,
            5,
            &orbs,
            &coarse(),
            Execution::Auto
        )
        .is_err());
        let t = parameter_table_with(
            &g,
            Axis::Qx,
            -1.0,
            1.0,
            9,
            &orbs,
            &coarse(),
            Execution::Auto,
        )
        .unwrap();
        assert!(matches!(t.at(1.5), Err(Error::OutOfTableRange { .. })));
        assert!(t.at(0.3).is_ok());
    }
}
