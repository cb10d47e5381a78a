//! Cavity + exciton kinematics: polariton branch dispersions, the Hopfield
//! mixing angle, the effective-mass coefficient, and the finite-size level
//! spacing.

use crate::units::Energy;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolaritonError {
    #[error("cavity config invalid: {0}")]
    InvalidCavity(String),
    #[error("rabi energy must be > 0, got {0} meV")]
    InvalidRabi(f64),
    #[error(
        "negative exciton-photon detuning required: omega_cav0 = {omega_cav0} meV \
         must lie below omega_0 = {omega_0} meV"
    )]
    PositiveDetuning { omega_cav0: f64, omega_0: f64 },
    #[error("n_mol must be >= 1")]
    InvalidNMol,
}

/// Planar cavity: quadratic dispersion ω_cav(k) = ω_cav0 + α_cav k².
#[derive(Debug, Clone, Copy)]
pub struct CavityConfig {
    pub omega_cav0: Energy,
    /// meV·μm²
    pub alpha_cav: f64,
    /// μm²
    pub area: f64,
}

impl CavityConfig {
    pub fn new(omega_cav0: Energy, alpha_cav: f64, area: f64) -> Result<Self, PolaritonError> {
        if !(alpha_cav > 0.0) {
            return Err(PolaritonError::InvalidCavity(format!(
                "alpha_cav must be > 0, got {alpha_cav}"
            )));
        }
        if !(area > 0.0) {
            return Err(PolaritonError::InvalidCavity(format!(
                "area must be > 0, got {area}"
            )));
        }
        Ok(CavityConfig {
            omega_cav0,
            alpha_cav,
            area,
        })
    }

    /// Cavity photon energy at in-plane momentum k (1/μm).
    pub fn omega_cav(&self, k: f64) -> Energy {
        Energy::mev(self.omega_cav0.as_mev() + self.alpha_cav * k * k)
    }
}

/// Strongly coupled cavity-exciton system at negative detuning.
#[derive(Debug, Clone, Copy)]
pub struct PolaritonSetup {
    pub cavity: CavityConfig,
    /// Dressed exciton energy.
    pub omega_0: Energy,
    pub rabi: Energy,
    pub n_mol: f64,
}

impl PolaritonSetup {
    pub fn new(
        cavity: CavityConfig,
        omega_0: Energy,
        rabi: Energy,
        n_mol: f64,
    ) -> Result<Self, PolaritonError> {
        if !(rabi.as_mev() > 0.0) {
            return Err(PolaritonError::InvalidRabi(rabi.as_mev()));
        }
        if cavity.omega_cav0.as_mev() >= omega_0.as_mev() {
            return Err(PolaritonError::PositiveDetuning {
                omega_cav0: cavity.omega_cav0.as_mev(),
                omega_0: omega_0.as_mev(),
            });
        }
        if !(n_mol >= 1.0) {
            return Err(PolaritonError::InvalidNMol);
        }
        Ok(PolaritonSetup {
            cavity,
            omega_0,
            rabi,
            n_mol,
        })
    }

    /// MeLPPP microcavity: 2.72 eV exciton, 2.64 eV cavity, 85 meV Rabi,
    /// 2.2 meV·μm² cavity curvature, 500 μm² spot, 1e8 molecules.
    pub fn melppp_cavity() -> PolaritonSetup {
        PolaritonSetup::new(
            CavityConfig::new(Energy::ev(2.64), 2.2, 500.0).unwrap(),
            Energy::ev(2.72),
            Energy::mev(85.0),
            1e8,
        )
        .unwrap()
    }

    /// Lower and upper branch energies at momentum k (1/μm).
    pub fn branch_energies(&self, k: f64) -> (Energy, Energy) {
        let w0 = self.omega_0.as_mev();
        let wc = self.cavity.omega_cav(k).as_mev();
        let mean = (w0 + wc) / 2.0;
        let split = ((w0 - wc) * (w0 - wc) / 4.0 + self.rabi.as_mev().powi(2)).sqrt();
        (Energy::mev(mean - split), Energy::mev(mean + split))
    }

    pub fn omega_low(&self, k: f64) -> Energy {
        self.branch_energies(k).0
    }

    /// Hopfield mixing angle φ_k ∈ (0, π/2), continuous across resonance.
    /// The excitonic fraction of the lower branch is sin²φ_k.
    pub fn hopfield_angle(&self, k: f64) -> f64 {
        let detuning = self.omega_0.as_mev() - self.cavity.omega_cav(k).as_mev();
        0.5 * (2.0 * self.rabi.as_mev()).atan2(detuning)
    }

    pub fn excitonic_fraction(&self, k: f64) -> f64 {
        self.hopfield_angle(k).sin().powi(2)
    }

    /// Quadratic coefficient of the lower branch near k = 0 (meV·μm²).
    pub fn alpha_pol(&self) -> f64 {
        let d = self.omega_0.as_mev() - self.cavity.omega_cav0.as_mev();
        let root = (d * d + 4.0 * self.rabi.as_mev().powi(2)).sqrt();
        self.cavity.alpha_cav / 2.0 * (1.0 + d / root)
    }

    /// Finite-size level spacing Δω_min = 4π α_pol / S.
    pub fn delta_omega_min(&self) -> Energy {
        Energy::mev(4.0 * std::f64::consts::PI * self.alpha_pol() / self.cavity.area)
    }

    /// In-cavity state count N ≈ π k_max² S / (2π)²; bookkeeping helper.
    pub fn n_states(&self, k_max: f64) -> f64 {
        std::f64::consts::PI * k_max * k_max * self.cavity.area
            / (2.0 * std::f64::consts::PI).powi(2)
    }

    /// Momentum at which the lower branch passes through `omega_low`
    /// (exact inversion of the dispersion). None below the ground state or
    /// at/above the exciton asymptote.
    pub fn k_for_omega_low(&self, omega_low: Energy) -> Option<f64> {
        let l = omega_low.as_mev();
        if l < self.omega_low(0.0).as_mev() || l >= self.omega_0.as_mev() {
            return None;
        }
        // omega_cav that puts the lower branch at l
        let cav = l + self.rabi.as_mev().powi(2) / (self.omega_0.as_mev() - l);
        let k_sq = (cav - self.cavity.omega_cav0.as_mev()) / self.cavity.alpha_cav;
        (k_sq >= 0.0).then(|| k_sq.sqrt())
    }
}
