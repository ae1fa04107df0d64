//! Conversions between recoil units and SI for species presets.
//!
//! Internal units: energy `E_R`, length `1/k = λ/2π`, time `ħ/E_R`,
//! angular frequency `E_R/ħ`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// CODATA 2018.
/// Planck constant, J s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Atomic mass constant, kg.
pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;
/// Bohr radius, m.
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Cr52,
    Rb87,
}

impl FromStr for Species {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cr52" | "cr" | "52cr" => Ok(Species::Cr52),
            "rb87" | "rb" | "87rb" => Ok(Species::Rb87),
            other => Err(Error::invalid(format!("unknown species preset '{other}'"))),
        }
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Species::Cr52 => write!(f, "cr52"),
            Species::Rb87 => write!(f, "rb87"),
        }
    }
}

/// Physical scales of one atom/laser combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub mass_kg: f64,
    pub wavelength_m: f64,
    pub scattering_length_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    /// Energy: `E_R` <-> J.
    Energy,
    /// Angular frequency: `E_R/ħ` <-> rad/s.
    Frequency,
    /// Time: `ħ/E_R` <-> s.
    Time,
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" => Ok(Dimension::Energy),
            "frequency" => Ok(Dimension::Frequency),
            "time" => Ok(Dimension::Time),
            other => Err(Error::invalid(format!("unknown dimension tag '{other}'"))),
        }
    }
}

impl Dimension {
    fn describe(self) -> &'static str {
        match self {
            Dimension::Energy => "an energy",
            Dimension::Frequency => "a frequency",
            Dimension::Time => "a time",
        }
    }
}

impl UnitSystem {
    pub fn new(mass_kg: f64, wavelength_m: f64, scattering_length_m: f64) -> Result<Self> {
        if !(mass_kg > 0.0 && wavelength_m > 0.0) || !scattering_length_m.is_finite() {
            return Err(Error::invalid("mass and wavelength must be positive"));
        }
        Ok(Self {
            mass_kg,
            wavelength_m,
            scattering_length_m,
        })
    }

    /// ⁵²Cr in a 523 nm lattice; a₀ = 112 a_B (S = 6 background value).
    pub fn chromium52() -> Self {
        Self {
            mass_kg: 51.940_506_2 * ATOMIC_MASS,
            wavelength_m: 523e-9,
            scattering_length_m: 112.0 * BOHR_RADIUS,
        }
    }

    /// ⁸⁷Rb in a 1064 nm lattice; a₀ = 100.4 a_B.
    pub fn rubidium87() -> Self {
        Self {
            mass_kg: 86.909_180_527 * ATOMIC_MASS,
            wavelength_m: 1064e-9,
            scattering_length_m: 100.4 * BOHR_RADIUS,
        }
    }

    pub fn preset(species: Species) -> Self {
        match species {
            Species::Cr52 => Self::chromium52(),
            Species::Rb87 => Self::rubidium87(),
        }
    }

    /// `E_R = (2πħ)² / (2 m λ²)` in joules.
    pub fn recoil_energy(&self) -> f64 {
        PLANCK * PLANCK / (2.0 * self.mass_kg * self.wavelength_m * self.wavelength_m)
    }

    /// `E_R / h` in Hz.
    pub fn recoil_frequency_hz(&self) -> f64 {
        self.recoil_energy() / PLANCK
    }

    /// Dimensionless contact coupling `g = 16π² a₀ / λ`.
    pub fn coupling(&self) -> f64 {
        16.0 * PI * PI * self.scattering_length_m / self.wavelength_m
    }

    /// `κ = ħω_z / 2E_R` for a trap frequency given in Hz.
    pub fn aspect_ratio(&self, trap_frequency_hz: f64) -> f64 {
        HBAR * 2.0 * PI * trap_frequency_hz / (2.0 * self.recoil_energy())
    }

    fn scale(&self, dim: Dimension) -> f64 {
        let er = self.recoil_energy();
        match dim {
            Dimension::Energy => er,
            Dimension::Frequency => er / HBAR,
            Dimension::Time => HBAR / er,
        }
    }

    pub fn to_physical(&self, value: f64, dim: Dimension) -> f64 {
        value * self.scale(dim)
    }

    pub fn to_dimensionless(&self, value: f64, dim: Dimension) -> f64 {
        value / self.scale(dim)
    }

    /// Angular frequency in `E_R/ħ` to ordinary frequency in Hz.
    pub fn omega_to_hz(&self, omega: f64) -> f64 {
        omega * self.recoil_frequency_hz()
    }

    pub fn hz_to_omega(&self, hz: f64) -> f64 {
        hz / self.recoil_frequency_hz()
    }

    /// Time in `ħ/E_R` to milliseconds.
    pub fn time_to_ms(&self, t: f64) -> f64 {
        self.to_physical(t, Dimension::Time) * 1e3
    }

    pub fn ms_to_time(&self, ms: f64) -> f64 {
        self.to_dimensionless(ms * 1e-3, Dimension::Time)
    }
}

/// A configured value: a bare number in recoil units, or text with an
/// explicit unit such as `"20 ms"`, `"280.5 kHz"` or `"3.2 E_R"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Recoil(f64),
    Physical(String),
}

impl From<f64> for Quantity {
    fn from(v: f64) -> Self {
        Quantity::Recoil(v)
    }
}

// suffix, dimension, factor to SI (J, rad/s, s); longest suffixes first
const SUFFIXES: &[(&str, Dimension, f64)] = &[
    ("rad/s", Dimension::Frequency, 1.0),
    ("MHz", Dimension::Frequency, 2.0 * PI * 1e6),
    ("kHz", Dimension::Frequency, 2.0 * PI * 1e3),
    ("Hz", Dimension::Frequency, 2.0 * PI),
    ("ms", Dimension::Time, 1e-3),
    ("us", Dimension::Time, 1e-6),
    ("µs", Dimension::Time, 1e-6),
    ("s", Dimension::Time, 1.0),
    ("J", Dimension::Energy, 1.0),
];

impl Quantity {
    /// Value in recoil units for dimension `dim`. `E_R` is accepted for any
    /// dimension and means the value is already dimensionless; an energy
    /// may also be given as a frequency `E/h`.
    pub fn resolve(&self, dim: Dimension, units: &UnitSystem) -> Result<f64> {
        let text = match self {
            Quantity::Recoil(v) => return finite(*v, "quantity"),
            Quantity::Physical(s) => s.trim(),
        };
        if let Ok(v) = text.parse::<f64>() {
            return finite(v, text);
        }
        for recoil in ["E_R", "Er"] {
            if let Some(num) = text.strip_suffix(recoil) {
                return parse_number(num, text);
            }
        }
        for &(suffix, unit_dim, factor) in SUFFIXES {
            let Some(num) = text.strip_suffix(suffix) else {
                continue;
            };
            let value = parse_number(num, text)? * factor;
            return match (dim, unit_dim) {
                _ if dim == unit_dim => Ok(units.to_dimensionless(value, dim)),
                (Dimension::Energy, Dimension::Frequency) => {
                    Ok(value * HBAR / units.recoil_energy())
                }
                _ => Err(Error::invalid(format!(
                    "'{text}' is not {}",
                    dim.describe()
                ))),
            };
        }
        Err(Error::invalid(format!("unrecognized unit in '{text}'")))
    }
}

fn parse_number(num: &str, whole: &str) -> Result<f64> {
    let v = num
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::invalid(format!("cannot read a number from '{whole}'")))?;
    finite(v, whole)
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(format!("{what} is not finite")))
    }
}
