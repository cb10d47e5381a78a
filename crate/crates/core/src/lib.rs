//! Temperature-dependent vibronic spectra of disordered molecular films,
//! extraction of the net low-frequency-vibration parameters (Γ, A₁, A₂),
//! polariton thermalization rates in strongly coupled microcavities, and
//! mean-field rate-equation simulation of polariton condensation.
//!
//! Canonical internal units: meV for energies, ps for times, μm for lengths,
//! K for temperatures.

// `!(x > 0.0)` guards reject NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod condensim;
pub mod extraction;
pub mod polariton;
pub mod rates;
pub mod spectra;
pub mod units;

pub use condensim::{ModeGrid, SimConfig, SimTrajectory};
pub use extraction::{FitWindow, LowFreqNet, PeakFit};
pub use polariton::{CavityConfig, PolaritonSetup};
pub use rates::{RatePair, SpectralDensityModel};
pub use spectra::{MolecularSystem, SpectralCurve, SpectrumKind, Truncation, VibrationalMode};
pub use units::{Energy, EnergyUnit, Temperature};

use thiserror::Error;

/// Umbrella error for callers that cross module boundaries.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Units(#[from] units::UnitsError),
    #[error(transparent)]
    Spectra(#[from] spectra::SpectraError),
    #[error(transparent)]
    Extraction(#[from] extraction::ExtractionError),
    #[error(transparent)]
    Polariton(#[from] polariton::PolaritonError),
    #[error(transparent)]
    Rates(#[from] rates::RatesError),
    #[error(transparent)]
    Condensim(#[from] condensim::CondensimError),
}
