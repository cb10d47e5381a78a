//! Forward models of the film emission and absorption spectra.
//!
//! Three variants are provided:
//!
//! * the exact multimode vibronic double sum with Gaussian inhomogeneous
//!   broadening (`emission_exact`, `absorption_exact`),
//! * the per-molecule homogeneous variant with Lorentzian lineshapes
//!   (`emission_homogeneous`, `absorption_homogeneous`),
//! * the reduced model that folds every low-frequency mode into effective
//!   0-0 peak parameters (`emission_reduced`, `absorption_reduced`,
//!   `effective_peak_params`).
//!
//! The exact double sum factorizes per mode: for each vibrational mode the
//! thermal (k') and emission (k) Poisson progressions collapse into a
//! distribution over net quanta m = k − k'. Convolving those per-mode
//! distributions yields a set of spectral "sticks" (center offset, weight)
//! that are then rendered as Gaussians of width Γ on the requested grid.

use crate::units::{bose_occupation, poisson_weight, Energy, Temperature, UnitsError};
use rayon::prelude::*;
use thiserror::Error;

/// Multi-mode stick products below this weight are dropped.
const STICK_PRUNE: f64 = 1e-12;
/// Sticks closer than this (meV) are merged after each convolution pass.
const MERGE_TOL_MEV: f64 = 1e-9;
/// Gaussian rendering window in units of the peak width.
const RENDER_WINDOW_SIGMAS: f64 = 9.0;

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("invalid vibrational mode: {0}")]
    InvalidMode(String),
    #[error("invalid molecular system: {0}")]
    InvalidSystem(String),
    #[error(
        "Poisson truncation not converged for mode {mode_index} \
         (cumulative weight {cumulative:.12} after {max_quanta} quanta)"
    )]
    TruncationNotConverged {
        mode_index: usize,
        cumulative: f64,
        max_quanta: u32,
    },
    #[error(
        "Gaussian lineshape model requires gamma_inhom >= {factor} x gamma_diss/2 \
         (got {gamma_inhom} meV vs {gamma_diss} meV)"
    )]
    GaussianModelInvalid {
        gamma_inhom: f64,
        gamma_diss: f64,
        factor: f64,
    },
    #[error("total linewidth is zero; homogeneous model needs gamma_diss or mode damping")]
    ZeroLinewidth,
    #[error("invalid spectral grid: {0}")]
    InvalidGrid(String),
    #[error("curve parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Units(#[from] UnitsError),
}

/// A single vibrational mode: frequency, squared Huang-Rhys factor, damping.
#[derive(Debug, Clone, Copy)]
pub struct VibrationalMode {
    pub omega_v: Energy,
    pub huang_rhys_sq: f64,
    /// Damping, used only by the Lorentzian (homogeneous) variant.
    pub gamma_v: Energy,
}

impl VibrationalMode {
    pub fn new(omega_v: Energy, huang_rhys_sq: f64, gamma_v: Energy) -> Result<Self, SpectraError> {
        if !(omega_v.as_mev() > 0.0) {
            return Err(SpectraError::InvalidMode(format!(
                "omega_v must be > 0, got {} meV",
                omega_v.as_mev()
            )));
        }
        if !huang_rhys_sq.is_finite() || huang_rhys_sq < 0.0 {
            return Err(SpectraError::InvalidMode(format!(
                "huang_rhys_sq must be finite and >= 0, got {huang_rhys_sq}"
            )));
        }
        if gamma_v.as_mev() < 0.0 {
            return Err(SpectraError::InvalidMode("gamma_v must be >= 0".into()));
        }
        Ok(VibrationalMode {
            omega_v,
            huang_rhys_sq,
            gamma_v,
        })
    }
}

/// A disordered molecular film: dressed 0-0 energy, inhomogeneous width,
/// exciton decay, vibrational modes, and the low/high frequency cutoff.
#[derive(Debug, Clone)]
pub struct MolecularSystem {
    pub omega_0: Energy,
    /// Standard deviation of the dressed exciton energies.
    pub gamma_inhom: Energy,
    /// Exciton decay; only the Lorentzian variant uses it.
    pub gamma_diss: Energy,
    modes: Vec<VibrationalMode>,
    pub omega_m: Energy,
    /// Required ratio gamma_inhom / (gamma_diss/2) for the Gaussian model.
    pub gaussian_validity_factor: f64,
}

impl MolecularSystem {
    pub fn new(
        omega_0: Energy,
        gamma_inhom: Energy,
        gamma_diss: Energy,
        mut modes: Vec<VibrationalMode>,
        omega_m: Energy,
    ) -> Result<Self, SpectraError> {
        if !(gamma_inhom.as_mev() >= 0.0) {
            return Err(SpectraError::InvalidSystem(
                "gamma_inhom must be >= 0".into(),
            ));
        }
        if gamma_diss.as_mev() < 0.0 {
            return Err(SpectraError::InvalidSystem(
                "gamma_diss must be >= 0".into(),
            ));
        }
        modes.sort_by(|a, b| a.omega_v.as_mev().total_cmp(&b.omega_v.as_mev()));
        Ok(MolecularSystem {
            omega_0,
            gamma_inhom,
            gamma_diss,
            modes,
            omega_m,
            gaussian_validity_factor: 5.0,
        })
    }

    pub fn modes(&self) -> &[VibrationalMode] {
        &self.modes
    }

    /// Modes with omega_v <= omega_M.
    pub fn low_modes(&self) -> impl Iterator<Item = &VibrationalMode> {
        let cut = self.omega_m.as_mev();
        self.modes.iter().filter(move |m| m.omega_v.as_mev() <= cut)
    }

    /// Modes with omega_v > omega_M.
    pub fn high_modes(&self) -> impl Iterator<Item = &VibrationalMode> {
        let cut = self.omega_m.as_mev();
        self.modes.iter().filter(move |m| m.omega_v.as_mev() > cut)
    }

    /// Copy of this system keeping only the high-frequency modes.
    pub fn without_low_modes(&self) -> MolecularSystem {
        let mut sys = self.clone();
        sys.modes = self.high_modes().copied().collect();
        sys
    }

    fn check_gaussian_valid(&self) -> Result<(), SpectraError> {
        let g = self.gamma_inhom.as_mev();
        let d = self.gamma_diss.as_mev();
        if g <= 0.0 || g < self.gaussian_validity_factor * d / 2.0 {
            return Err(SpectraError::GaussianModelInvalid {
                gamma_inhom: g,
                gamma_diss: d,
                factor: self.gaussian_validity_factor,
            });
        }
        Ok(())
    }
}

/// MeLPPP polymer film parameters (two low-frequency backbone modes plus the
/// three main Raman-active high-frequency modes).
pub fn melppp() -> MolecularSystem {
    let modes = vec![
        VibrationalMode::new(Energy::inv_cm(48.0), 0.7, Energy::mev(0.0)).unwrap(),
        VibrationalMode::new(Energy::inv_cm(160.0), 0.5, Energy::mev(0.0)).unwrap(),
        VibrationalMode::new(Energy::inv_cm(1320.0), 0.3, Energy::mev(0.0)).unwrap(),
        VibrationalMode::new(Energy::inv_cm(1568.0), 0.23, Energy::mev(0.0)).unwrap(),
        VibrationalMode::new(Energy::inv_cm(1604.0), 0.082, Energy::mev(0.0)).unwrap(),
    ];
    MolecularSystem::new(
        Energy::ev(2.72),
        Energy::mev(34.0),
        Energy::mev(0.0),
        modes,
        Energy::inv_cm(200.0),
    )
    .unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumKind {
    Emission,
    Absorption,
}

impl SpectrumKind {
    /// Sign of the vibronic offset relative to omega_0.
    fn offset_sign(self) -> f64 {
        match self {
            SpectrumKind::Emission => -1.0,
            SpectrumKind::Absorption => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpectrumKind::Emission => "emission",
            SpectrumKind::Absorption => "absorption",
        }
    }
}

/// A sampled spectrum, normalized to unit integral over the full line.
#[derive(Debug, Clone)]
pub struct SpectralCurve {
    grid_mev: Vec<f64>,
    intensity_per_mev: Vec<f64>,
    pub kind: SpectrumKind,
    pub temperature: Temperature,
}

impl SpectralCurve {
    pub fn new(
        grid_mev: Vec<f64>,
        intensity_per_mev: Vec<f64>,
        kind: SpectrumKind,
        temperature: Temperature,
    ) -> Result<Self, SpectraError> {
        if grid_mev.len() != intensity_per_mev.len() {
            return Err(SpectraError::InvalidGrid(
                "grid/intensity length mismatch".into(),
            ));
        }
        if grid_mev.len() < 2 {
            return Err(SpectraError::InvalidGrid(
                "need at least two grid points".into(),
            ));
        }
        if !grid_mev.windows(2).all(|w| w[1] > w[0]) {
            return Err(SpectraError::InvalidGrid(
                "grid must be strictly increasing".into(),
            ));
        }
        if intensity_per_mev.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SpectraError::InvalidGrid(
                "intensities must be finite and >= 0".into(),
            ));
        }
        Ok(SpectralCurve {
            grid_mev,
            intensity_per_mev,
            kind,
            temperature,
        })
    }

    pub fn grid_mev(&self) -> &[f64] {
        &self.grid_mev
    }

    pub fn intensity_per_mev(&self) -> &[f64] {
        &self.intensity_per_mev
    }

    pub fn len(&self) -> usize {
        self.grid_mev.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid_mev.is_empty()
    }

    pub fn trapezoid_integral(&self) -> f64 {
        self.grid_mev
            .windows(2)
            .zip(self.intensity_per_mev.windows(2))
            .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
            .sum()
    }

    /// Linear interpolation; energies outside the grid clamp to the edge.
    pub fn value_at(&self, energy_mev: f64) -> f64 {
        let g = &self.grid_mev;
        if energy_mev <= g[0] {
            return self.intensity_per_mev[0];
        }
        if energy_mev >= *g.last().unwrap() {
            return *self.intensity_per_mev.last().unwrap();
        }
        let i = g.partition_point(|&x| x < energy_mev);
        let (x0, x1) = (g[i - 1], g[i]);
        let (y0, y1) = (self.intensity_per_mev[i - 1], self.intensity_per_mev[i]);
        y0 + (y1 - y0) * (energy_mev - x0) / (x1 - x0)
    }

    /// Two-column CSV (energy_eV, intensity_per_eV) with `#` header comments.
    pub fn to_csv(&self, extra_header: &[String]) -> String {
        let mut out = String::new();
        out.push_str(&format!("# kind = {}\n", self.kind.as_str()));
        out.push_str(&format!(
            "# temperature_K = {:.6}\n",
            self.temperature.kelvin()
        ));
        for line in extra_header {
            out.push_str(&format!("# {line}\n"));
        }
        out.push_str("energy_eV,intensity_per_eV\n");
        for (x, y) in self.grid_mev.iter().zip(&self.intensity_per_mev) {
            out.push_str(&format!("{:.12e},{:.12e}\n", x * 1e-3, y * 1e3));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, SpectraError> {
        let mut kind = None;
        let mut temperature = None;
        let mut grid = Vec::new();
        let mut intensity = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("kind =") {
                    kind = Some(match v.trim() {
                        "emission" => SpectrumKind::Emission,
                        "absorption" => SpectrumKind::Absorption,
                        other => {
                            return Err(SpectraError::Parse(format!("unknown kind '{other}'")))
                        }
                    });
                } else if let Some(v) = rest.strip_prefix("temperature_K =") {
                    let t: f64 = v
                        .trim()
                        .parse()
                        .map_err(|e| SpectraError::Parse(format!("temperature: {e}")))?;
                    temperature = Some(Temperature::new(t)?);
                }
                continue;
            }
            if line.starts_with("energy_eV") {
                continue;
            }
            let mut parts = line.split(',');
            let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
                return Err(SpectraError::Parse(format!("bad row '{line}'")));
            };
            let e: f64 = a
                .trim()
                .parse()
                .map_err(|e| SpectraError::Parse(format!("energy: {e}")))?;
            let i: f64 = b
                .trim()
                .parse()
                .map_err(|e| SpectraError::Parse(format!("intensity: {e}")))?;
            grid.push(e * 1e3);
            intensity.push(i * 1e-3);
        }
        let kind = kind.ok_or_else(|| SpectraError::Parse("missing '# kind =' header".into()))?;
        let temperature = temperature
            .ok_or_else(|| SpectraError::Parse("missing '# temperature_K =' header".into()))?;
        SpectralCurve::new(grid, intensity, kind, temperature)
    }
}

/// Truncation policy for the infinite Poisson progressions.
#[derive(Debug, Clone, Copy)]
pub struct Truncation {
    /// Include quanta until the cumulative weight reaches 1 - epsilon.
    pub epsilon: f64,
    pub max_quanta: u32,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            epsilon: 1e-8,
            max_quanta: 40,
        }
    }
}

/// z_0..z_K with cumulative weight >= 1 - epsilon, or the truncation deficit.
fn poisson_progression(x: f64, trunc: Truncation) -> Result<Vec<f64>, f64> {
    if x == 0.0 {
        return Ok(vec![1.0]);
    }
    let mut series = vec![poisson_weight(0, x)];
    let mut cum = series[0];
    let mut k = 0u32;
    while cum < 1.0 - trunc.epsilon && k < trunc.max_quanta {
        k += 1;
        let next = series[k as usize - 1] * x / f64::from(k);
        series.push(next);
        cum += next;
    }
    if cum < 1.0 - trunc.epsilon {
        return Err(cum);
    }
    Ok(series)
}

/// Default evaluation grid: omega_0 +/- 0.8 eV at 0.5 meV steps.
pub fn default_grid(sys: &MolecularSystem) -> Vec<f64> {
    grid_around(sys.omega_0, 800.0, 0.5)
}

/// Wide grid covering the full progression; use for normalization checks.
pub fn wide_grid(sys: &MolecularSystem) -> Vec<f64> {
    grid_around(sys.omega_0, 2400.0, 0.5)
}

pub fn grid_around(center: Energy, half_span_mev: f64, step_mev: f64) -> Vec<f64> {
    let c = center.as_mev();
    let n = (2.0 * half_span_mev / step_mev).round() as usize;
    (0..=n)
        .map(|i| c - half_span_mev + i as f64 * step_mev)
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Stick {
    offset_mev: f64,
    weight: f64,
}

/// Distribution over net quanta m = k - k' for one mode at temperature T.
fn mode_net_marginal(
    mode: &VibrationalMode,
    index: usize,
    t: Temperature,
    trunc: Truncation,
) -> Result<Vec<(i64, f64)>, SpectraError> {
    let n_v = bose_occupation(mode.omega_v, t)?;
    let lam2 = mode.huang_rhys_sq;
    let not_converged = |cum| SpectraError::TruncationNotConverged {
        mode_index: index,
        cumulative: cum,
        max_quanta: trunc.max_quanta,
    };
    let thermal = poisson_progression(n_v * lam2, trunc).map_err(not_converged)?;
    let emissive = poisson_progression((1.0 + n_v) * lam2, trunc).map_err(not_converged)?;
    let kp_max = thermal.len() as i64 - 1;
    let k_max = emissive.len() as i64 - 1;
    let mut marginal = vec![0.0; (kp_max + k_max + 1) as usize];
    for (kp, wkp) in thermal.iter().enumerate() {
        for (k, wk) in emissive.iter().enumerate() {
            // net quanta m = k - k', shifted by kp_max for indexing
            marginal[k + kp_max as usize - kp] += wkp * wk;
        }
    }
    Ok(marginal
        .into_iter()
        .enumerate()
        .map(|(i, w)| (i as i64 - kp_max, w))
        .collect())
}

fn merge_sticks(sticks: &mut Vec<Stick>) {
    sticks.sort_by(|a, b| a.offset_mev.total_cmp(&b.offset_mev));
    let mut merged: Vec<Stick> = Vec::with_capacity(sticks.len());
    for s in sticks.iter() {
        match merged.last_mut() {
            Some(last) if (s.offset_mev - last.offset_mev).abs() <= MERGE_TOL_MEV => {
                last.weight += s.weight;
            }
            _ => merged.push(*s),
        }
    }
    *sticks = merged;
}

/// Convolve per-mode net-quanta distributions into spectral sticks.
/// Emission offsets are +Σ omega_vj m_j; the curve centers subtract them.
fn exact_sticks(
    sys: &MolecularSystem,
    t: Temperature,
    trunc: Truncation,
) -> Result<(Vec<Stick>, f64), SpectraError> {
    let mut sticks = vec![Stick {
        offset_mev: 0.0,
        weight: 1.0,
    }];
    for (idx, mode) in sys.modes.iter().enumerate() {
        let marginal = mode_net_marginal(mode, idx, t, trunc)?;
        let omega = mode.omega_v.as_mev();
        let mut next = Vec::with_capacity(sticks.len() * marginal.len());
        for s in &sticks {
            for &(m, w) in &marginal {
                let weight = s.weight * w;
                if weight >= STICK_PRUNE {
                    next.push(Stick {
                        offset_mev: s.offset_mev + m as f64 * omega,
                        weight,
                    });
                }
            }
        }
        merge_sticks(&mut next);
        sticks = next;
    }
    let total: f64 = sticks.iter().map(|s| s.weight).sum();
    Ok((sticks, total))
}

/// Poisson progression over the high-frequency modes only (reduced model;
/// high modes are taken unoccupied so the thermal sums collapse).
fn reduced_sticks(
    sys: &MolecularSystem,
    trunc: Truncation,
) -> Result<(Vec<Stick>, f64), SpectraError> {
    let mut sticks = vec![Stick {
        offset_mev: 0.0,
        weight: 1.0,
    }];
    let low_count = sys.low_modes().count();
    for (idx, mode) in sys.high_modes().enumerate() {
        let series = poisson_progression(mode.huang_rhys_sq, trunc).map_err(|cum| {
            SpectraError::TruncationNotConverged {
                mode_index: low_count + idx,
                cumulative: cum,
                max_quanta: trunc.max_quanta,
            }
        })?;
        let omega = mode.omega_v.as_mev();
        let mut next = Vec::with_capacity(sticks.len() * series.len());
        for s in &sticks {
            for (k, w) in series.iter().enumerate() {
                let weight = s.weight * w;
                if weight >= STICK_PRUNE {
                    next.push(Stick {
                        offset_mev: s.offset_mev + k as f64 * omega,
                        weight,
                    });
                }
            }
        }
        merge_sticks(&mut next);
        sticks = next;
    }
    let total: f64 = sticks.iter().map(|s| s.weight).sum();
    Ok((sticks, total))
}

/// Render sticks as normalized Gaussians of width `sigma` centered at
/// `base + sign*offset`, renormalized analytically by the total weight.
fn render_gaussians(
    sticks: &[Stick],
    total_weight: f64,
    base_mev: f64,
    sign: f64,
    sigma_mev: f64,
    grid: &[f64],
) -> Vec<f64> {
    let mut centers: Vec<(f64, f64)> = sticks
        .iter()
        .map(|s| (base_mev + sign * s.offset_mev, s.weight))
        .collect();
    centers.sort_by(|a, b| a.0.total_cmp(&b.0));
    let window = RENDER_WINDOW_SIGMAS * sigma_mev;
    let norm = 1.0 / (total_weight * sigma_mev * (2.0 * std::f64::consts::PI).sqrt());
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma_mev * sigma_mev);
    grid.par_iter()
        .map(|&x| {
            let lo = centers.partition_point(|c| c.0 < x - window);
            let hi = centers.partition_point(|c| c.0 <= x + window);
            let mut acc = 0.0;
            for &(c, w) in &centers[lo..hi] {
                let d = x - c;
                acc += w * (-d * d * inv_two_sigma_sq).exp();
            }
            acc * norm
        })
        .collect()
}

fn exact_curve(
    sys: &MolecularSystem,
    t: Temperature,
    grid: &[f64],
    trunc: Truncation,
    kind: SpectrumKind,
) -> Result<SpectralCurve, SpectraError> {
    sys.check_gaussian_valid()?;
    let (sticks, total) = exact_sticks(sys, t, trunc)?;
    let intensity = render_gaussians(
        &sticks,
        total,
        sys.omega_0.as_mev(),
        kind.offset_sign(),
        sys.gamma_inhom.as_mev(),
        grid,
    );
    SpectralCurve::new(grid.to_vec(), intensity, kind, t)
}

/// Exact multimode emission spectrum with Gaussian inhomogeneous broadening.
pub fn emission_exact(
    sys: &MolecularSystem,
    t: Temperature,
    grid: &[f64],
    trunc: Truncation,
) -> Result<SpectralCurve, SpectraError> {
    exact_curve(sys, t, grid, trunc, SpectrumKind::Emission)
}

/// Exact multimode absorption spectrum; mirror image of the emission about omega_0.
pub fn absorption_exact(
    sys: &MolecularSystem,
    t: Temperature,
    grid: &[f64],
    trunc: Truncation,
) -> Result<SpectralCurve, SpectraError> {
    exact_curve(sys, t, grid, trunc, SpectrumKind::Absorption)
}

/// Effective 0-0 peak parameters from folding the low-frequency modes:
/// returns (omega_em, omega_abs, gamma_em).
pub fn effective_peak_params(
    sys: &MolecularSystem,
    t: Temperature,
) -> Result<(Energy, Energy, Energy), SpectraError> {
    let mut shift = 0.0;
    let mut var = sys.gamma_inhom.as_mev().powi(2);
    for mode in sys.low_modes() {
        let omega = mode.omega_v.as_mev();
        let n_v = bose_occupation(mode.omega_v, t)?;
        shift += mode.huang_rhys_sq * omega;
        var += mode.huang_rhys_sq * omega * omega * (1.0 + 2.0 * n_v);
    }
    let omega_em = sys.omega_0.as_mev() - shift;
    let omega_abs = 2.0 * sys.omega_0.as_mev() - omega_em;
    Ok((
        Energy::mev(omega_em),
        Energy::mev(omega_abs),
        Energy::mev(var.sqrt()),
    ))
}

fn reduced_curve(
    sys: &MolecularSystem,
    t: Temperature,
    grid: &[f64],
    trunc: Truncation,
    kind: SpectrumKind,
) -> Result<SpectralCurve, SpectraError> {
    sys.check_gaussian_valid()?;
    let (omega_em, omega_abs, gamma_em) = effective_peak_params(sys, t)?;
    let base = match kind {
        SpectrumKind::Emission => omega_em,
        SpectrumKind::Absorption => omega_abs,
    };
    let (sticks, total) = reduced_sticks(sys, trunc)?;
    let intensity = render_gaussians(
        &sticks,
        total,
        base.as_mev(),
        kind.offset_sign(),
        gamma_em.as_mev(),
        grid,
    );
    SpectralCurve::new(grid.to_vec(), intensity, kind, t)
}

/// Reduced-model emission: high-frequency progression about omega_em, width gamma_em.
pub fn emission_reduced(
    sys: &MolecularSystem,
    t: Temperature,
    grid: &[f64],
    trunc: Truncation,
) -> Result<SpectralCurve, SpectraError> {
    reduced_curve(sys, t, grid, trunc, SpectrumKind::Emission)
}

pub fn absorption_reduced(
    sys: &MolecularSystem,
    t: Temperature,
    grid: &[f64],
    trunc: Truncation,
) -> Result<SpectralCurve, SpectraError> {
    reduced_curve(sys, t, grid, trunc, SpectrumKind::Absorption)
}

#[derive(Debug, Clone, Copy)]
struct LorStick {
    offset_mev: f64,
    /// Accumulated vibrational damping Σ gamma_vj (k_j + k'_j).
    extra_hwhm_mev: f64,
    weight: f64,
}

fn lorentz_sticks(
    sys: &MolecularSystem,
    t: Temperature,
    trunc: Truncation,
) -> Result<(Vec<LorStick>, f64), SpectraError> {
    let mut sticks = vec![LorStick {
        offset_mev: 0.0,
        extra_hwhm_mev: 0.0,
        weight: 1.0,
    }];
    for (idx, mode) in sys.modes.iter().enumerate() {
        let n_v = bose_occupation(mode.omega_v, t)?;
        let lam2 = mode.huang_rhys_sq;
        let not_converged = |cum| SpectraError::TruncationNotConverged {
            mode_index: idx,
            cumulative: cum,
            max_quanta: trunc.max_quanta,
        };
        let thermal = poisson_progression(n_v * lam2, trunc).map_err(not_converged)?;
        let emissive = poisson_progression((1.0 + n_v) * lam2, trunc).map_err(not_converged)?;
        let omega = mode.omega_v.as_mev();
        let gamma = mode.gamma_v.as_mev();
        let mut next = Vec::with_capacity(sticks.len() * thermal.len() * emissive.len());
        for s in &sticks {
            for (kp, wkp) in thermal.iter().enumerate() {
                for (k, wk) in emissive.iter().enumerate() {
                    let weight = s.weight * wkp * wk;
                    if weight >= STICK_PRUNE {
                        next.push(LorStick {
                            offset_mev: s.offset_mev + (k as f64 - kp as f64) * omega,
                            extra_hwhm_mev: s.extra_hwhm_mev + (k + kp) as f64 * gamma,
                            weight,
                        });
                    }
                }
            }
        }
        // merge identical (offset, width) pairs
        next.sort_by(|a, b| {
            a.offset_mev
                .total_cmp(&b.offset_mev)
                .then(a.extra_hwhm_mev.total_cmp(&b.extra_hwhm_mev))
        });
        let mut merged: Vec<LorStick> = Vec::with_capacity(next.len());
        for s in next {
            match merged.last_mut() {
                Some(last)
                    if (s.offset_mev - last.offset_mev).abs() <= MERGE_TOL_MEV
                        && (s.extra_hwhm_mev - last.extra_hwhm_mev).abs() <= MERGE_TOL_MEV =>
                {
                    last.weight += s.weight;
                }
                _ => merged.push(s),
            }
        }
        sticks = merged;
    }
    let total: f64 = sticks.iter().map(|s| s.weight).sum();
    Ok((sticks, total))
}

fn homogeneous_curve(
    sys: &MolecularSystem,
    t: Temperature,
    grid: &[f64],
    trunc: Truncation,
    kind: SpectrumKind,
) -> Result<SpectralCurve, SpectraError> {
    let (sticks, total) = lorentz_sticks(sys, t, trunc)?;
    let base_hwhm = sys.gamma_diss.as_mev() / 2.0;
    if sticks.iter().any(|s| base_hwhm + s.extra_hwhm_mev <= 0.0) {
        return Err(SpectraError::ZeroLinewidth);
    }
    let base = sys.omega_0.as_mev();
    let sign = kind.offset_sign();
    let inv_pi = std::f64::consts::FRAC_1_PI;
    let intensity: Vec<f64> = grid
        .par_iter()
        .map(|&x| {
            let mut acc = 0.0;
            for s in &sticks {
                let c = base + sign * s.offset_mev;
                let g = base_hwhm + s.extra_hwhm_mev;
                acc += s.weight * inv_pi * g / ((x - c) * (x - c) + g * g);
            }
            acc / total
        })
        .collect();
    SpectralCurve::new(grid.to_vec(), intensity, kind, t)
}

/// Per-molecule homogeneous emission: Lorentzians of HWHM
/// gamma_diss/2 + Σ gamma_vj (k_j + k'_j), no inhomogeneous averaging.
pub fn emission_homogeneous(
    sys: &MolecularSystem,
    t: Temperature,
    grid: &[f64],
    trunc: Truncation,
) -> Result<SpectralCurve, SpectraError> {
    homogeneous_curve(sys, t, grid, trunc, SpectrumKind::Emission)
}

pub fn absorption_homogeneous(
    sys: &MolecularSystem,
    t: Temperature,
    grid: &[f64],
    trunc: Truncation,
) -> Result<SpectralCurve, SpectraError> {
    homogeneous_curve(sys, t, grid, trunc, SpectrumKind::Absorption)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn t(kelvin: f64) -> Temperature {
        Temperature::new(kelvin).unwrap()
    }

    fn single_mode_system(omega_v_mev: f64, lam2: f64, gamma_mev: f64) -> MolecularSystem {
        let mode = VibrationalMode::new(Energy::mev(omega_v_mev), lam2, Energy::mev(0.0)).unwrap();
        MolecularSystem::new(
            Energy::mev(2000.0),
            Energy::mev(gamma_mev),
            Energy::mev(0.0),
            vec![mode],
            Energy::mev(omega_v_mev + 1.0),
        )
        .unwrap()
    }

    #[test]
    fn empty_mode_list_is_plain_gaussian() {
        let sys = MolecularSystem::new(
            Energy::mev(2000.0),
            Energy::mev(30.0),
            Energy::mev(0.0),
            vec![],
            Energy::mev(25.0),
        )
        .unwrap();
        let grid = grid_around(Energy::mev(2000.0), 400.0, 0.5);
        let em = emission_exact(&sys, t(300.0), &grid, Truncation::default()).unwrap();
        let ab = absorption_exact(&sys, t(300.0), &grid, Truncation::default()).unwrap();
        let norm = 1.0 / (30.0 * (2.0 * std::f64::consts::PI).sqrt());
        for (i, &x) in grid.iter().enumerate() {
            let expect = norm * (-(x - 2000.0f64).powi(2) / (2.0 * 900.0)).exp();
            assert_abs_diff_eq!(em.intensity_per_mev()[i], expect, epsilon = 1e-12);
            assert_abs_diff_eq!(ab.intensity_per_mev()[i], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn franck_condon_progression_at_zero_temperature() {
        // widely separated peaks; heights scale as z_k(0.7)
        let sys = single_mode_system(100.0, 0.7, 1.0);
        let grid = grid_around(Energy::mev(2000.0), 600.0, 0.1);
        let em = emission_exact(&sys, Temperature::ZERO, &grid, Truncation::default()).unwrap();
        let peak = |center: f64| em.value_at(center);
        let p0 = peak(2000.0);
        let p1 = peak(1900.0);
        let p2 = peak(1800.0);
        assert_relative_eq!(p1 / p0, 0.7, max_relative = 1e-6);
        assert_relative_eq!(p2 / p0, 0.7f64.powi(2) / 2.0, max_relative = 1e-6);
    }

    #[test]
    fn melppp_6k_has_00_and_high_frequency_replica() {
        let sys = melppp();
        let grid = default_grid(&sys);
        let em = emission_exact(&sys, t(6.0), &grid, Truncation::default()).unwrap();
        let y = em.intensity_per_mev();
        let mut maxima: Vec<(f64, f64)> = Vec::new();
        for i in 1..y.len() - 1 {
            if y[i] >= y[i - 1] && y[i] > y[i + 1] {
                maxima.push((grid[i], y[i]));
            }
        }
        maxima.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (c0, _) = maxima[0];
        let (c1, _) = maxima[1];
        let hi = c0.max(c1);
        let lo = c0.min(c1);
        // 0-0 peak near omega_em and the replica cluster near omega_0 - ~0.19 eV
        assert_abs_diff_eq!(hi, 2720.0 - 14.08, epsilon = 3.0);
        assert_abs_diff_eq!(lo, 2720.0 - 190.0, epsilon = 20.0);
    }

    #[test]
    fn mirror_symmetry_exact() {
        let sys = melppp();
        let grid = default_grid(&sys);
        // the default grid is symmetric about omega_0, so index i mirrors
        // the point omega_0 + delta onto omega_0 - delta at len-1-i
        let n = grid.len();
        for i in 0..n {
            assert_abs_diff_eq!(
                grid[i] + grid[n - 1 - i],
                2.0 * sys.omega_0.as_mev(),
                epsilon = 1e-9
            );
        }
        for kelvin in [6.0, 300.0] {
            let em = emission_exact(&sys, t(kelvin), &grid, Truncation::default()).unwrap();
            let ab = absorption_exact(&sys, t(kelvin), &grid, Truncation::default()).unwrap();
            for i in 0..n {
                let d_abs = ab.intensity_per_mev()[n - 1 - i];
                let d_em = em.intensity_per_mev()[i];
                assert_relative_eq!(d_abs, d_em, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn centroid_stokes_shift_single_low_mode() {
        // first moments of em/abs differ by exactly 2 Λ² ω_v
        let sys = single_mode_system(5.951242, 0.7, 34.0);
        let grid = grid_around(Energy::mev(2000.0), 500.0, 0.25);
        let em = emission_exact(&sys, t(300.0), &grid, Truncation::default()).unwrap();
        let ab = absorption_exact(&sys, t(300.0), &grid, Truncation::default()).unwrap();
        let centroid = |c: &SpectralCurve| -> f64 {
            let m0 = c.trapezoid_integral();
            let m1: f64 = c
                .grid_mev()
                .windows(2)
                .zip(c.intensity_per_mev().windows(2))
                .map(|(x, y)| (x[1] - x[0]) * (x[0] * y[0] + x[1] * y[1]) / 2.0)
                .sum();
            m1 / m0
        };
        let shift = centroid(&ab) - centroid(&em);
        assert_abs_diff_eq!(shift, 2.0 * 0.7 * 5.951242, epsilon = 2e-3);
    }

    #[test]
    fn effective_params_match_hand_values() {
        let sys = melppp();
        let (w_em, w_abs, g6) = effective_peak_params(&sys, t(6.0)).unwrap();
        assert_abs_diff_eq!(sys.omega_0.as_mev() - w_em.as_mev(), 14.09, epsilon = 0.01);
        assert_abs_diff_eq!(w_abs.as_mev() - w_em.as_mev(), 28.17, epsilon = 0.01);
        assert_abs_diff_eq!(g6.as_mev() * g6.as_mev(), 1377.6, epsilon = 0.2);
        let (_, _, g300) = effective_peak_params(&sys, t(300.0)).unwrap();
        assert_abs_diff_eq!(g300.as_mev(), 43.7, epsilon = 0.05);
        assert_abs_diff_eq!(g300.as_mev() * g300.as_mev(), 1910.0, epsilon = 1.0);
    }

    #[test]
    fn reduced_equals_exact_without_low_modes() {
        // at 6 K the high-mode occupations underflow to zero, so the exact
        // model on the high-mode-only system must coincide with the reduced
        // model (whose effective shifts vanish without low modes)
        let sys = melppp().without_low_modes();
        let grid = default_grid(&sys);
        let exact = emission_exact(&sys, t(6.0), &grid, Truncation::default()).unwrap();
        let reduced = emission_reduced(&sys, t(6.0), &grid, Truncation::default()).unwrap();
        for i in 0..grid.len() {
            assert_relative_eq!(
                exact.intensity_per_mev()[i],
                reduced.intensity_per_mev()[i],
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn reduced_without_high_modes_is_single_gaussian() {
        let sys = single_mode_system(5.951242, 0.7, 34.0);
        let grid = grid_around(Energy::mev(2000.0), 400.0, 0.5);
        let red = emission_reduced(&sys, t(300.0), &grid, Truncation::default()).unwrap();
        let (w_em, _, g_em) = effective_peak_params(&sys, t(300.0)).unwrap();
        let norm = 1.0 / (g_em.as_mev() * (2.0 * std::f64::consts::PI).sqrt());
        for (i, &x) in grid.iter().enumerate() {
            let expect =
                norm * (-(x - w_em.as_mev()).powi(2) / (2.0 * g_em.as_mev().powi(2))).exp();
            assert_abs_diff_eq!(red.intensity_per_mev()[i], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn anti_stokes_ratio_obeys_boltzmann() {
        // single-mode system with Gamma << omega_v: the exact emission at
        // omega_0 + omega_v over omega_0 - omega_v is n_v/(1+n_v)
        let sys = single_mode_system(20.0, 0.1, 1.0);
        let grid = grid_around(Energy::mev(2000.0), 100.0, 0.5);
        let em = emission_exact(&sys, t(300.0), &grid, Truncation::default()).unwrap();
        let n_v = bose_occupation(Energy::mev(20.0), t(300.0)).unwrap();
        let ratio = em.value_at(2020.0) / em.value_at(1980.0);
        assert_relative_eq!(ratio, n_v / (1.0 + n_v), max_relative = 0.01);
    }

    #[test]
    fn truncation_failure_names_mode() {
        let sys = single_mode_system(5.0, 30.0, 34.0); // enormous coupling
        let grid = grid_around(Energy::mev(2000.0), 100.0, 1.0);
        let err = emission_exact(&sys, t(300.0), &grid, Truncation::default()).unwrap_err();
        match err {
            SpectraError::TruncationNotConverged { mode_index, .. } => assert_eq!(mode_index, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn gaussian_model_validity_guard() {
        let mode = VibrationalMode::new(Energy::mev(10.0), 0.3, Energy::mev(0.0)).unwrap();
        let sys = MolecularSystem::new(
            Energy::mev(2000.0),
            Energy::mev(1.0),
            Energy::mev(10.0), // gamma_diss/2 = 5 >> gamma_inhom
            vec![mode],
            Energy::mev(15.0),
        )
        .unwrap();
        let grid = grid_around(Energy::mev(2000.0), 100.0, 0.5);
        assert!(matches!(
            emission_exact(&sys, t(300.0), &grid, Truncation::default()),
            Err(SpectraError::GaussianModelInvalid { .. })
        ));
    }

    #[test]
    fn homogeneous_zero_temperature_matches_direct_sum() {
        let mode = VibrationalMode::new(Energy::mev(100.0), 0.5, Energy::mev(2.0)).unwrap();
        let sys = MolecularSystem::new(
            Energy::mev(2000.0),
            Energy::mev(34.0),
            Energy::mev(4.0),
            vec![mode],
            Energy::mev(25.0),
        )
        .unwrap();
        let grid = grid_around(Energy::mev(2000.0), 600.0, 0.5);
        let em =
            emission_homogeneous(&sys, Temperature::ZERO, &grid, Truncation::default()).unwrap();
        // direct zero-temperature sum: k' = 0 only
        let trunc = Truncation::default();
        let series = poisson_progression(0.5, trunc).unwrap();
        let total: f64 = series.iter().sum();
        for (i, &x) in grid.iter().enumerate() {
            let mut expect = 0.0;
            for (k, w) in series.iter().enumerate() {
                let c = 2000.0 - k as f64 * 100.0;
                let g = 2.0 + k as f64 * 2.0;
                expect += w / std::f64::consts::PI * g / ((x - c).powi(2) + g * g);
            }
            expect /= total;
            assert_relative_eq!(em.intensity_per_mev()[i], expect, max_relative = 1e-9);
        }
    }

    #[test]
    fn homogeneous_truncated_to_zero_quanta_is_one_lorentzian() {
        // with zero coupling the progression converges at k = 0
        let mode = VibrationalMode::new(Energy::mev(100.0), 0.0, Energy::mev(2.0)).unwrap();
        let sys = MolecularSystem::new(
            Energy::mev(2000.0),
            Energy::mev(34.0),
            Energy::mev(4.0),
            vec![mode],
            Energy::mev(25.0),
        )
        .unwrap();
        let grid = grid_around(Energy::mev(2000.0), 200.0, 0.25);
        let trunc = Truncation {
            epsilon: 1e-8,
            max_quanta: 0,
        };
        let em = emission_homogeneous(&sys, Temperature::ZERO, &grid, trunc).unwrap();
        for (i, &x) in grid.iter().enumerate() {
            let expect = 2.0 / std::f64::consts::PI / ((x - 2000.0f64).powi(2) + 4.0);
            assert_relative_eq!(em.intensity_per_mev()[i], expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn replica_linewidth_adds_mode_damping() {
        // the (k=1, k'=0) replica has HWHM gamma_diss/2 + gamma_v
        let mode = VibrationalMode::new(Energy::mev(200.0), 0.3, Energy::mev(3.0)).unwrap();
        let sys = MolecularSystem::new(
            Energy::mev(2000.0),
            Energy::mev(34.0),
            Energy::mev(2.0),
            vec![mode],
            Energy::mev(25.0),
        )
        .unwrap();
        let grid = grid_around(Energy::mev(1800.0), 80.0, 0.01);
        let em =
            emission_homogeneous(&sys, Temperature::ZERO, &grid, Truncation::default()).unwrap();
        // scan for half-maximum width around the replica at 1800 meV
        let peak = em.value_at(1800.0);
        let mut hi = 1800.0;
        while em.value_at(hi) > peak / 2.0 {
            hi += 0.01;
        }
        let hwhm = hi - 1800.0;
        assert_abs_diff_eq!(hwhm, 1.0 + 3.0, epsilon = 0.05);
    }

    #[test]
    fn zero_linewidth_is_an_error() {
        let mode = VibrationalMode::new(Energy::mev(100.0), 0.5, Energy::mev(0.0)).unwrap();
        let sys = MolecularSystem::new(
            Energy::mev(2000.0),
            Energy::mev(34.0),
            Energy::mev(0.0),
            vec![mode],
            Energy::mev(25.0),
        )
        .unwrap();
        let grid = grid_around(Energy::mev(2000.0), 100.0, 0.5);
        assert!(matches!(
            emission_homogeneous(&sys, Temperature::ZERO, &grid, Truncation::default()),
            Err(SpectraError::ZeroLinewidth)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let sys = melppp();
        let grid = grid_around(sys.omega_0, 50.0, 1.0);
        let em = emission_reduced(&sys, t(300.0), &grid, Truncation::default()).unwrap();
        let text = em.to_csv(&["source = test".to_string()]);
        let back = SpectralCurve::from_csv(&text).unwrap();
        assert_eq!(back.kind, SpectrumKind::Emission);
        assert_eq!(back.temperature.kelvin(), 300.0);
        for i in 0..grid.len() {
            assert_relative_eq!(back.grid_mev()[i], em.grid_mev()[i], max_relative = 1e-10);
            assert_relative_eq!(
                back.intensity_per_mev()[i],
                em.intensity_per_mev()[i],
                max_relative = 1e-10
            );
        }
    }
}
