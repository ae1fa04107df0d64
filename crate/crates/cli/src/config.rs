//! Run configuration: one JSON tree, validated before any computation.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use orbital_lattice::dynamics::DriveAmplitude;
use orbital_lattice::params::{sp_orbitals, spd_orbitals, LatticeGeometry, Orbital};
use orbital_lattice::protocols::DriveProtocol;
use orbital_lattice::units::{Dimension, Quantity, Species, UnitSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Bands,
    Params,
    Scan,
    Evolve,
    Protocol,
    Manybody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    #[default]
    Sp,
    Spd,
}

impl Model {
    pub fn orbitals(self) -> Vec<Orbital> {
        match self {
            Model::Sp => sp_orbitals(),
            Model::Spd => spd_orbitals(),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Model::Sp => "sp",
            Model::Spd => "spd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Cr52,
    Rb87,
}

impl From<PresetName> for Species {
    fn from(p: PresetName) -> Self {
        match p {
            PresetName::Cr52 => Species::Cr52,
            PresetName::Rb87 => Species::Rb87,
        }
    }
}

/// Which lattice parameter the drive modulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveAxis {
    #[default]
    X,
    Y,
    /// `(A, A)`
    Plus,
    /// `(A, −A)`
    Minus,
    Kappa,
    G,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub qx: f64,
    pub qy: f64,
    pub kappa: f64,
    /// Contact coupling; taken from the species preset when absent.
    pub g: Option<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            qx: 32.0,
            qy: 20.0,
            kappa: 8.0,
            g: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub amplitude: f64,
    pub axis: DriveAxis,
    /// Single drive frequency (`evolve`, `manybody`).
    pub omega: Option<Quantity>,
    /// Scan range; the default brackets the predicted s→p resonances.
    pub omega_range: Option<[Quantity; 2]>,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            amplitude: 4.0,
            axis: DriveAxis::X,
            omega: None,
            omega_range: None,
        }
    }
}

impl DriveConfig {
    pub fn amplitude(&self) -> DriveAmplitude {
        let a = self.amplitude;
        match self.axis {
            DriveAxis::X => DriveAmplitude::lattice(a, 0.0),
            DriveAxis::Y => DriveAmplitude::lattice(0.0, a),
            DriveAxis::Plus => DriveAmplitude::symmetric(a),
            DriveAxis::Minus => DriveAmplitude::antisymmetric(a),
            DriveAxis::Kappa => DriveAmplitude::aspect_ratio(a),
            DriveAxis::G => DriveAmplitude::coupling(a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub points: usize,
    /// Minimum peak height; model default when absent.
    pub threshold: Option<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            points: 160,
            threshold: None,
        }
    }
}

/// Depth sweep `Q = (q, q, κ)` for `params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            from: 10.0,
            to: 40.0,
            step: 1.0,
        }
    }
}

impl SweepConfig {
    pub fn depths(&self) -> Vec<f64> {
        let n = ((self.to - self.from) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.from + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandsConfig {
    pub depth: f64,
    pub count: usize,
    pub k_points: usize,
    pub plane_waves: usize,
    /// Band whose Wannier function is written out.
    pub wannier_band: usize,
}

impl Default for BandsConfig {
    fn default() -> Self {
        Self {
            depth: 32.0,
            count: 3,
            k_points: 64,
            plane_waves: 33,
            wannier_band: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Built-in preparation sequence at the located pair resonances.
    pub scenario: Option<Scenario>,
    /// Explicit segment list; used when no scenario is named.
    pub definition: Option<DriveProtocol>,
    /// Ramp duration for the built-in scenarios.
    pub ramp: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManybodyConfig {
    pub sites: usize,
    pub particles: usize,
    pub periodic: bool,
    pub hopping: bool,
    pub steps_per_period: usize,
    pub krylov_tolerance: f64,
    /// Evolution span; the first single-site transfer cycle when absent.
    pub span: Option<Quantity>,
}

impl Default for ManybodyConfig {
    fn default() -> Self {
        Self {
            sites: 4,
            particles: 8,
            periodic: true,
            hopping: true,
            steps_per_period: 40,
            krylov_tolerance: 1e-11,
            span: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub preset: PresetName,
    pub geometry: GeometryConfig,
    pub model: Model,
    pub drive: DriveConfig,
    pub duration: Quantity,
    pub sample_interval: Quantity,
    pub tolerance: f64,
    pub scan: ScanConfig,
    pub sweep: SweepConfig,
    pub bands: BandsConfig,
    pub protocol: ProtocolConfig,
    pub manybody: ManybodyConfig,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            preset: PresetName::Cr52,
            geometry: GeometryConfig::default(),
            model: Model::Sp,
            drive: DriveConfig::default(),
            duration: Quantity::Physical("20 ms".into()),
            sample_interval: Quantity::Physical("0.02 ms".into()),
            tolerance: 1e-12,
            scan: ScanConfig::default(),
            sweep: SweepConfig::default(),
            bands: BandsConfig::default(),
            protocol: ProtocolConfig::default(),
            manybody: ManybodyConfig::default(),
            output: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow::anyhow!("config field '{}': {}", e.path(), e.inner()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn units(&self) -> UnitSystem {
        UnitSystem::preset(self.preset.into())
    }

    pub fn coupling(&self) -> f64 {
        self.geometry.g.unwrap_or_else(|| self.units().coupling())
    }

    pub fn geometry(&self) -> Result<LatticeGeometry> {
        let g = &self.geometry;
        LatticeGeometry::new(g.qx, g.qy, g.kappa, self.coupling()).context("geometry")
    }

    pub fn time(&self, q: &Quantity, field: &str) -> Result<f64> {
        let t = q
            .resolve(Dimension::Time, &self.units())
            .with_context(|| format!("field '{field}'"))?;
        ensure!(t > 0.0, "field '{field}' must be positive");
        Ok(t)
    }

    pub fn frequency(&self, q: &Quantity, field: &str) -> Result<f64> {
        let w = q
            .resolve(Dimension::Frequency, &self.units())
            .with_context(|| format!("field '{field}'"))?;
        ensure!(w > 0.0, "field '{field}' must be positive");
        Ok(w)
    }

    /// Checks every field the command will read.
    pub fn validate(&self, command: Command) -> Result<()> {
        self.geometry()?;
        self.time(&self.duration, "duration")?;
        self.time(&self.sample_interval, "sample_interval")?;
        ensure!(
            self.tolerance > 0.0 && self.tolerance < 1e-3,
            "field 'tolerance' must lie in (0, 1e-3)"
        );
        ensure!(
            self.drive.amplitude.is_finite(),
            "field 'drive.amplitude' must be finite"
        );
        if let Some(w) = &self.drive.omega {
            self.frequency(w, "drive.omega")?;
        }
        if let Some([lo, hi]) = &self.drive.omega_range {
            let (a, b) = (
                self.frequency(lo, "drive.omega_range[0]")?,
                self.frequency(hi, "drive.omega_range[1]")?,
            );
            ensure!(b > a, "field 'drive.omega_range' must be increasing");
        }
        match command {
            Command::Bands => {
                let b = &self.bands;
                ensure!(b.depth >= 0.0, "field 'bands.depth' must be >= 0");
                ensure!(b.count >= 1, "field 'bands.count' must be >= 1");
                ensure!(
                    b.wannier_band < b.count,
                    "field 'bands.wannier_band' must be below 'bands.count'"
                );
            }
            Command::Params => {
                let s = &self.sweep;
                ensure!(
                    s.step > 0.0 && s.to >= s.from,
                    "field 'sweep' needs step > 0 and to >= from"
                );
                ensure!(s.from > 0.0, "field 'sweep.from' must be positive");
            }
            Command::Scan => {
                if let Some(t) = self.scan.threshold {
                    ensure!(
                        (0.0..=1.0).contains(&t),
                        "field 'scan.threshold' must lie in [0, 1]"
                    );
                }
            }
            Command::Evolve => {
                if self.drive.omega.is_none() {
                    bail!("field 'drive.omega' is required for evolve");
                }
            }
            Command::Protocol => {
                let p = &self.protocol;
                if p.scenario.is_none() && p.definition.is_none() {
                    bail!("field 'protocol' needs a scenario or a definition");
                }
                if let Some(def) = &p.definition {
                    def.validate().context("field 'protocol.definition'")?;
                }
                if let Some(r) = &p.ramp {
                    self.time(r, "protocol.ramp")?;
                }
            }
            Command::Manybody => {
                let m = &self.manybody;
                ensure!(m.sites >= 1, "field 'manybody.sites' must be >= 1");
                ensure!(
                    m.steps_per_period >= 4,
                    "field 'manybody.steps_per_period' must be >= 4"
                );
                ensure!(
                    m.krylov_tolerance > 0.0,
                    "field 'manybody.krylov_tolerance' must be positive"
                );
                if let Some(s) = &m.span {
                    self.time(s, "manybody.span")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn field_path_in_errors() {
        let err = RunConfig::from_json(r#"{"geometry": {"qx": "deep"}}"#).unwrap_err();
        assert!(err.to_string().contains("geometry.qx"), "{err}");
        let err = RunConfig::from_json(r#"{"drive": {"amplitud": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("drive"), "{err}");
    }

    #[test]
    fn negative_kappa_rejected() {
        let c = RunConfig::from_json(r#"{"geometry": {"kappa": -1}}"#).unwrap();
        assert!(c.validate(Command::Params).is_err());
    }

    #[test]
    fn sweep_includes_end() {
        let s = SweepConfig {
            from: 10.0,
            to: 40.0,
            step: 5.0,
        };
        assert_eq!(s.depths(), vec![10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]);
    }
}
