//! Units, physical constants, and the two scalar kernels (Bose occupation,
//! Poisson weights) used throughout the crate.
//!
//! All internal arithmetic is done in meV for energies and ps for times;
//! `Energy` carries the canonical meV value and converts on demand.

use thiserror::Error;

/// Boltzmann constant (meV/K)
pub const KB_MEV_PER_K: f64 = 8.617333262e-2;

/// Reduced Planck constant (meV·ps)
pub const HBAR_MEV_PS: f64 = 0.6582119569;

/// 1 cm⁻¹ in meV
pub const MEV_PER_INV_CM: f64 = 0.1239841984;

#[derive(Debug, Error, PartialEq)]
pub enum UnitsError {
    #[error("unknown energy unit '{0}'")]
    UnknownUnit(String),
    #[error("temperature must be finite and non-negative, got {0} K")]
    InvalidTemperature(f64),
    #[error("bose_occupation requires a positive energy difference at T > 0, got {0} meV")]
    NonPositiveFrequency(f64),
}

/// Energy units accepted at the I/O boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyUnit {
    Ev,
    Mev,
    InvCm,
    /// Kelvin equivalent, E = k_B T
    Kelvin,
}

impl EnergyUnit {
    /// Scale factor to the canonical meV representation.
    pub fn to_mev(self) -> f64 {
        match self {
            EnergyUnit::Ev => 1e3,
            EnergyUnit::Mev => 1.0,
            EnergyUnit::InvCm => MEV_PER_INV_CM,
            EnergyUnit::Kelvin => KB_MEV_PER_K,
        }
    }

    pub fn parse(s: &str) -> Result<Self, UnitsError> {
        match s {
            "eV" | "ev" => Ok(EnergyUnit::Ev),
            "meV" | "mev" => Ok(EnergyUnit::Mev),
            "cm-1" | "cm1" | "1/cm" => Ok(EnergyUnit::InvCm),
            "K" | "k" => Ok(EnergyUnit::Kelvin),
            other => Err(UnitsError::UnknownUnit(other.to_string())),
        }
    }
}

/// An energy, stored canonically in meV.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Energy(f64);

impl Energy {
    pub fn new(value: f64, unit: EnergyUnit) -> Self {
        Energy(value * unit.to_mev())
    }

    pub fn mev(value: f64) -> Self {
        Energy(value)
    }

    pub fn ev(value: f64) -> Self {
        Energy(value * 1e3)
    }

    pub fn inv_cm(value: f64) -> Self {
        Energy(value * MEV_PER_INV_CM)
    }

    pub fn kelvin_equivalent(value: f64) -> Self {
        Energy(value * KB_MEV_PER_K)
    }

    pub fn as_mev(self) -> f64 {
        self.0
    }

    pub fn as_ev(self) -> f64 {
        self.0 * 1e-3
    }

    /// Value expressed in `unit`; exact ratio of the defining constants.
    pub fn value_in(self, unit: EnergyUnit) -> f64 {
        self.0 / unit.to_mev()
    }

    /// Equivalent angular rate in 1/ps (divides by ħ).
    pub fn as_rate_per_ps(self) -> f64 {
        self.0 / HBAR_MEV_PS
    }
}

/// Absolute temperature in kelvin. T = 0 is legal everywhere.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(kelvin: f64) -> Result<Self, UnitsError> {
        if !kelvin.is_finite() || kelvin < 0.0 {
            return Err(UnitsError::InvalidTemperature(kelvin));
        }
        Ok(Temperature(kelvin))
    }

    pub const ZERO: Temperature = Temperature(0.0);

    pub fn kelvin(self) -> f64 {
        self.0
    }

    /// k_B T in meV.
    pub fn thermal_energy_mev(self) -> f64 {
        self.0 * KB_MEV_PER_K
    }
}

/// Bose occupation n_v = 1/(e^{ħΔω/k_BT} − 1).
///
/// Returns exactly 0 at T = 0 without touching the exponential; errors for
/// non-positive ħΔω at T > 0 (the thermal kernel is only evaluated at
/// positive frequency differences).
pub fn bose_occupation(delta: Energy, temperature: Temperature) -> Result<f64, UnitsError> {
    if temperature.kelvin() == 0.0 {
        return Ok(0.0);
    }
    let d = delta.as_mev();
    if !(d > 0.0) {
        return Err(UnitsError::NonPositiveFrequency(d));
    }
    let x = d / temperature.thermal_energy_mev();
    if x > 700.0 {
        // e^x overflows f64; the occupation is indistinguishable from zero
        return Ok(0.0);
    }
    Ok(1.0 / x.exp_m1())
}

/// Poisson weight z_n(x) = xⁿ e^{−x} / n!, evaluated in log space.
pub fn poisson_weight(n: u32, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (f64::from(n) * x.ln() - x - ln_factorial(n)).exp()
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| f64::from(k).ln()).sum()
}
