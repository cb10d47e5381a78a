//! Pairwise polariton thermalization rates driven by low-frequency
//! exciton-vibration coupling: the exact pair expressions, the
//! high-/low-temperature estimates, and the sweep generators behind the
//! rate-map and rate-vs-temperature outputs.
//!
//! Rates are reported as energies (ħγ, meV); divide by ħ for 1/ps.

use crate::extraction::LowFreqNet;
use crate::polariton::{CavityConfig, PolaritonError, PolaritonSetup};
use crate::units::{bose_occupation, Energy, Temperature, UnitsError};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RatesError {
    #[error("therm_rate_pair requires omega_low(k) > omega_low(k'); got {0} <= {1} meV")]
    OrderingViolated(f64, f64),
    #[error(
        "states not distinct in the finite system: |Δω| = {delta:.6} meV \
         is below the level spacing {min:.6} meV"
    )]
    BelowLevelSpacing { delta: f64, min: f64 },
    #[error("requested ground-state energy {0} meV must lie below the exciton at {1} meV")]
    GroundAboveExciton(f64, f64),
    #[error("frequency argument must be positive, got {0} meV")]
    NonPositiveFrequency(f64),
    #[error(transparent)]
    Units(#[from] UnitsError),
    #[error(transparent)]
    Polariton(#[from] PolaritonError),
}

/// Vibrational spectral weight J(ω) = Λ²(ω) ν(ω), supported on (0, ω_M].
///
/// The flat variants fix one moment each and are the two averaging choices
/// used by the closed-form estimates; `DiscreteModes` broadens a known mode
/// list; `Tabulated` interpolates sampled data.
#[derive(Debug, Clone)]
pub enum SpectralDensityModel {
    /// ω J(ω) = A₁/ω_M on (0, ω_M].
    FlatA1(LowFreqNet),
    /// ω² J(ω) = A₂/ω_M on (0, ω_M].
    FlatA2(LowFreqNet),
    /// Gaussian-broadened modes (ω_v, Λ², width).
    DiscreteModes {
        modes: Vec<(Energy, f64, Energy)>,
        omega_m: Energy,
    },
    /// Piecewise-linear (ω meV, J 1/meV) samples.
    Tabulated {
        points: Vec<(f64, f64)>,
        omega_m: Energy,
    },
}

impl SpectralDensityModel {
    pub fn omega_m(&self) -> Energy {
        match self {
            SpectralDensityModel::FlatA1(net) | SpectralDensityModel::FlatA2(net) => net.omega_m,
            SpectralDensityModel::DiscreteModes { omega_m, .. }
            | SpectralDensityModel::Tabulated { omega_m, .. } => *omega_m,
        }
    }

    /// J(ω) in 1/meV; zero outside (0, ω_M].
    pub fn j(&self, omega_mev: f64) -> f64 {
        let wm = self.omega_m().as_mev();
        if omega_mev <= 0.0 || omega_mev > wm {
            return 0.0;
        }
        match self {
            SpectralDensityModel::FlatA1(net) => net.a1.as_mev() / (wm * omega_mev),
            SpectralDensityModel::FlatA2(net) => net.a2_mev2 / (wm * omega_mev * omega_mev),
            SpectralDensityModel::DiscreteModes { modes, .. } => modes
                .iter()
                .map(|(wv, lam2, width)| {
                    let s = width.as_mev();
                    let d = omega_mev - wv.as_mev();
                    lam2 * (-d * d / (2.0 * s * s)).exp()
                        / (s * (2.0 * std::f64::consts::PI).sqrt())
                })
                .sum(),
            SpectralDensityModel::Tabulated { points, .. } => {
                let i = points.partition_point(|p| p.0 < omega_mev);
                if i == 0 || i == points.len() {
                    return 0.0;
                }
                let (x0, y0) = points[i - 1];
                let (x1, y1) = points[i];
                y0 + (y1 - y0) * (omega_mev - x0) / (x1 - x0)
            }
        }
    }

    /// Realized moments (∫ωJ dω, ∫ω²J dω); quadrature for the non-flat
    /// variants. FlatA2 has a logarithmically divergent first moment.
    pub fn realized_moments(&self) -> (f64, f64) {
        let wm = self.omega_m().as_mev();
        match self {
            SpectralDensityModel::FlatA1(net) => (net.a1.as_mev(), net.a1.as_mev() * wm / 2.0),
            SpectralDensityModel::FlatA2(net) => (f64::INFINITY, net.a2_mev2),
            _ => {
                let n = 4000;
                let h = wm / n as f64;
                let mut a1 = 0.0;
                let mut a2 = 0.0;
                for i in 0..n {
                    let x0 = i as f64 * h;
                    let x1 = x0 + h;
                    let (j0, j1) = (self.j(x0), self.j(x1));
                    a1 += h * (x0 * j0 + x1 * j1) / 2.0;
                    a2 += h * (x0 * x0 * j0 + x1 * x1 * j1) / 2.0;
                }
                (a1, a2)
            }
        }
    }
}

/// Downhill/uphill thermalization rates for one state pair, as energies ħγ.
#[derive(Debug, Clone, Copy)]
pub struct RatePair {
    /// γ_therm^{k'k}: downhill, emits a vibration.
    pub gamma_down: Energy,
    /// γ_therm^{kk'}: uphill, absorbs a vibration.
    pub gamma_up: Energy,
    /// Set when |Δω| > ω_M and no low-frequency vibration can bridge the gap.
    pub out_of_band: bool,
}

impl RatePair {
    fn zero(out_of_band: bool) -> RatePair {
        RatePair {
            gamma_down: Energy::mev(0.0),
            gamma_up: Energy::mev(0.0),
            out_of_band,
        }
    }
}

/// Assemble a rate pair from its factors: 2π sin²Δφ (Ω_R²/N_mol) J(Δω) {1+n, n}.
pub fn rate_pair_from_parts(sin2: f64, rabi_sq_over_nmol: f64, j: f64, n_v: f64) -> RatePair {
    let base = 2.0 * std::f64::consts::PI * sin2 * rabi_sq_over_nmol * j;
    RatePair {
        gamma_down: Energy::mev(base * (1.0 + n_v)),
        gamma_up: Energy::mev(base * n_v),
        out_of_band: false,
    }
}

/// Thermalization rate pair between lower-polariton states k and k'
/// (requires ω_low(k) > ω_low(k'), i.e. k is the higher state).
pub fn therm_rate_pair(
    setup: &PolaritonSetup,
    sd: &SpectralDensityModel,
    k: f64,
    k_prime: f64,
    t: Temperature,
) -> Result<RatePair, RatesError> {
    let w_k = setup.omega_low(k).as_mev();
    let w_kp = setup.omega_low(k_prime).as_mev();
    if w_k <= w_kp {
        return Err(RatesError::OrderingViolated(w_k, w_kp));
    }
    let delta = w_k - w_kp;
    let min = setup.delta_omega_min().as_mev();
    // guard band for pairs constructed to sit exactly on the level spacing
    if delta < min * (1.0 - 1e-9) {
        return Err(RatesError::BelowLevelSpacing { delta, min });
    }
    if delta > sd.omega_m().as_mev() {
        return Ok(RatePair::zero(true));
    }
    let sin2 = (setup.hopfield_angle(k_prime) - setup.hopfield_angle(k))
        .sin()
        .powi(2);
    let n_v = bose_occupation(Energy::mev(delta), t)?;
    Ok(rate_pair_from_parts(
        sin2,
        setup.rabi.as_mev().powi(2) / setup.n_mol,
        sd.j(delta),
        n_v,
    ))
}

/// Exact and small-Δω quadratic approximations of sin²(φ_k' − φ_k).
#[derive(Debug, Clone, Copy)]
pub struct Sin2Mixing {
    pub exact: f64,
    pub approximate: f64,
    /// approximate / exact; documents the validity envelope.
    pub ratio: f64,
}

/// Quadratic expansion sin²Δφ ≈ α_cav² Ω_R² Δω² / (α_pol²((ω_0−ω_cav0)²+4Ω_R²)²).
pub fn sin2_quadratic(setup: &PolaritonSetup, delta_omega_mev: f64) -> f64 {
    let d0 = setup.omega_0.as_mev() - setup.cavity.omega_cav0.as_mev();
    let denom = setup.alpha_pol().powi(2) * (d0 * d0 + 4.0 * setup.rabi.as_mev().powi(2)).powi(2);
    setup.cavity.alpha_cav.powi(2) * setup.rabi.as_mev().powi(2) * delta_omega_mev.powi(2) / denom
}

pub fn sin2_mixing(setup: &PolaritonSetup, k: f64, k_prime: f64) -> Sin2Mixing {
    let exact = (setup.hopfield_angle(k_prime) - setup.hopfield_angle(k))
        .sin()
        .powi(2);
    let delta = (setup.omega_low(k).as_mev() - setup.omega_low(k_prime).as_mev()).abs();
    let approximate = sin2_quadratic(setup, delta);
    let ratio = if exact > 0.0 {
        approximate / exact
    } else {
        1.0
    };
    Sin2Mixing {
        exact,
        approximate,
        ratio,
    }
}

fn estimate_prefactor(setup: &PolaritonSetup) -> f64 {
    let d0 = setup.omega_0.as_mev() - setup.cavity.omega_cav0.as_mev();
    let omega4 = setup.rabi.as_mev().powi(4);
    setup.cavity.alpha_cav.powi(2) * omega4
        / (setup.alpha_pol().powi(2) * (d0 * d0 + 4.0 * setup.rabi.as_mev().powi(2)).powi(2))
}

/// Whether k_BT is comfortably inside the high-temperature regime.
pub fn high_t_regime_ok(net: &LowFreqNet, t: Temperature) -> bool {
    t.thermal_energy_mev() >= 3.0 * net.omega_m.as_mev()
}

/// Closed-form high-temperature estimate of the nearest-neighbor
/// thermalization rate: prefactor · (A₁/N_mol) · (S k_BT / α_pol).
pub fn high_t_estimate(setup: &PolaritonSetup, net: &LowFreqNet, t: Temperature) -> Energy {
    let pref = estimate_prefactor(setup);
    Energy::mev(
        pref * net.a1.as_mev() / setup.n_mol * setup.cavity.area * t.thermal_energy_mev()
            / setup.alpha_pol(),
    )
}

/// Low-temperature estimate with the flat-A₂ averaging:
/// 2π · prefactor · (A₂/N_mol) · (1/ω_M) · {1+n_v, n_v}.
pub fn low_t_estimates(
    setup: &PolaritonSetup,
    net: &LowFreqNet,
    delta: Energy,
    t: Temperature,
) -> Result<RatePair, RatesError> {
    if !(delta.as_mev() > 0.0) {
        return Err(RatesError::NonPositiveFrequency(delta.as_mev()));
    }
    let n_v = bose_occupation(delta, t)?;
    let base = 2.0 * std::f64::consts::PI * estimate_prefactor(setup) * net.a2_mev2
        / (setup.n_mol * net.omega_m.as_mev());
    Ok(RatePair {
        gamma_down: Energy::mev(base * (1.0 + n_v)),
        gamma_up: Energy::mev(base * n_v),
        out_of_band: false,
    })
}

/// Cavity energy that places the lower-polariton ground state at
/// `omega_low0`: ω_cav0 = L + Ω_R²/(ω_0 − L).
pub fn ground_state_cavity(
    omega_low0: Energy,
    rabi: Energy,
    omega_0: Energy,
) -> Result<Energy, RatesError> {
    let l = omega_low0.as_mev();
    let w0 = omega_0.as_mev();
    if l >= w0 {
        return Err(RatesError::GroundAboveExciton(l, w0));
    }
    Ok(Energy::mev(l + rabi.as_mev().powi(2) / (w0 - l)))
}

/// Nearest-neighbor downhill rate over a (Ω_R, ω_low0) grid.
#[derive(Debug, Clone)]
pub struct RateMap {
    pub rabi_mev: Vec<f64>,
    pub omega_low0_mev: Vec<f64>,
    /// `gamma_down_mev[i][j]` for `omega_low0_mev[i]`, `rabi_mev[j]`.
    pub gamma_down_mev: Vec<Vec<f64>>,
}

/// Map of nearest-neighbor (Δω = Δω_min) downhill thermalization rates as a
/// function of Rabi energy and ground-state energy, at temperature `t`.
/// Each grid point inverts the dispersion for the cavity energy and applies
/// the low-temperature estimate.
pub fn rate_map(
    template: &PolaritonSetup,
    net: &LowFreqNet,
    rabi_mev: &[f64],
    omega_low0_mev: &[f64],
    t: Temperature,
) -> Result<RateMap, RatesError> {
    let rows: Result<Vec<Vec<f64>>, RatesError> = omega_low0_mev
        .par_iter()
        .map(|&l| {
            rabi_mev
                .iter()
                .map(|&r| {
                    let cav0 =
                        ground_state_cavity(Energy::mev(l), Energy::mev(r), template.omega_0)?;
                    let cavity =
                        CavityConfig::new(cav0, template.cavity.alpha_cav, template.cavity.area)?;
                    let setup = PolaritonSetup::new(
                        cavity,
                        template.omega_0,
                        Energy::mev(r),
                        template.n_mol,
                    )?;
                    let pair = low_t_estimates(&setup, net, setup.delta_omega_min(), t)?;
                    Ok(pair.gamma_down.as_mev())
                })
                .collect()
        })
        .collect();
    Ok(RateMap {
        rabi_mev: rabi_mev.to_vec(),
        omega_low0_mev: omega_low0_mev.to_vec(),
        gamma_down_mev: rows?,
    })
}

/// Rates between the ground state and momentum-k states over a temperature grid.
#[derive(Debug, Clone)]
pub struct RateVsTemperature {
    pub k_values: Vec<f64>,
    pub t_values: Vec<f64>,
    /// γ_up(0 → k), indexed `[i_T][i_k]`.
    pub gamma_up_mev: Vec<Vec<f64>>,
    /// γ_down(k → 0), indexed `[i_T][i_k]`.
    pub gamma_down_mev: Vec<Vec<f64>>,
    /// Per temperature: number of k-states with γ_up within 1/e of the
    /// nearest-neighbor rate (the "thermalization length").
    pub therm_length: Vec<usize>,
}

pub fn rate_vs_temperature(
    setup: &PolaritonSetup,
    sd: &SpectralDensityModel,
    k_grid: &[f64],
    t_grid: &[Temperature],
) -> Result<RateVsTemperature, RatesError> {
    let mut gamma_up = Vec::with_capacity(t_grid.len());
    let mut gamma_down = Vec::with_capacity(t_grid.len());
    let mut therm_length = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut up_row = Vec::with_capacity(k_grid.len());
        let mut down_row = Vec::with_capacity(k_grid.len());
        for &k in k_grid {
            let pair = therm_rate_pair(setup, sd, k, 0.0, t)?;
            up_row.push(pair.gamma_up.as_mev());
            down_row.push(pair.gamma_down.as_mev());
        }
        let nn = up_row.first().copied().unwrap_or(0.0);
        let cut = nn / std::f64::consts::E;
        therm_length.push(up_row.iter().filter(|&&g| g >= cut && g > 0.0).count());
        gamma_up.push(up_row);
        gamma_down.push(down_row);
    }
    Ok(RateVsTemperature {
        k_values: k_grid.to_vec(),
        t_values: t_grid.iter().map(|t| t.kelvin()).collect(),
        gamma_up_mev: gamma_up,
        gamma_down_mev: gamma_down,
        therm_length,
    })
}

/// Momenta of the discrete energy ladder ω_low(k_n) = ω_low(0) + n Δω_min,
/// via exact inversion of the dispersion.
pub fn energy_lattice_k_grid(setup: &PolaritonSetup, n_levels: usize) -> Vec<f64> {
    let dmin = setup.delta_omega_min().as_mev();
    let w0 = setup.omega_low(0.0).as_mev();
    (1..=n_levels)
        .filter_map(|n| setup.k_for_omega_low(Energy::mev(w0 + n as f64 * dmin)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn net_reference() -> LowFreqNet {
        LowFreqNet {
            gamma_inhom: Energy::mev(34.0),
            a1: Energy::mev(18.0),
            a2_mev2: 200.0,
            omega_m: Energy::inv_cm(200.0),
        }
    }

    fn t(kelvin: f64) -> Temperature {
        Temperature::new(kelvin).unwrap()
    }

    #[test]
    fn zero_temperature_kills_uphill() {
        let setup = PolaritonSetup::melppp_cavity();
        let sd = SpectralDensityModel::FlatA1(net_reference());
        let pair = therm_rate_pair(&setup, &sd, 0.5, 0.0, Temperature::ZERO).unwrap();
        assert_eq!(pair.gamma_up.as_mev(), 0.0);
        assert!(pair.gamma_down.as_mev() > 0.0);
    }

    #[test]
    fn self_transition_rejected() {
        let setup = PolaritonSetup::melppp_cavity();
        let sd = SpectralDensityModel::FlatA1(net_reference());
        assert!(matches!(
            therm_rate_pair(&setup, &sd, 0.4, 0.4, t(300.0)),
            Err(RatesError::OrderingViolated(..))
        ));
        // a pair closer than the level spacing is not distinct
        let dmin = setup.delta_omega_min().as_mev();
        let k_small = (0.5 * dmin / setup.alpha_pol()).sqrt();
        assert!(matches!(
            therm_rate_pair(&setup, &sd, k_small, 0.0, t(300.0)),
            Err(RatesError::BelowLevelSpacing { .. })
        ));
    }

    #[test]
    fn out_of_band_returns_zero_with_flag() {
        let setup = PolaritonSetup::melppp_cavity();
        let sd = SpectralDensityModel::FlatA1(net_reference());
        // Δω = 40 meV > ω_M = 24.8 meV
        let k = ((40.0) / setup.alpha_pol()).sqrt();
        let pair = therm_rate_pair(&setup, &sd, k, 0.0, t(300.0)).unwrap();
        assert!(pair.out_of_band);
        assert_eq!(pair.gamma_down.as_mev(), 0.0);
        assert_eq!(pair.gamma_up.as_mev(), 0.0);
    }

    #[test]
    fn nearest_neighbor_pair_against_direct_formula() {
        // independent re-derivation of every factor at one point
        let setup = PolaritonSetup::melppp_cavity();
        let sd = SpectralDensityModel::FlatA1(net_reference());
        let dmin = 4.0 * std::f64::consts::PI * setup.alpha_pol() / 500.0;
        let k = setup
            .k_for_omega_low(Energy::mev(setup.omega_low(0.0).as_mev() + dmin))
            .unwrap();
        let pair = therm_rate_pair(&setup, &sd, k, 0.0, t(300.0)).unwrap();

        // by hand: angles from the arctangent, Bose factor from the exponential
        let w_cav_k = 2640.0 + 2.2 * k * k;
        let phi_k = 0.5 * (2.0 * 85.0f64).atan2(2720.0 - w_cav_k);
        let phi_0 = 0.5 * (2.0 * 85.0f64).atan2(2720.0 - 2640.0);
        let delta = (2720.0 + w_cav_k) / 2.0
            - ((2720.0f64 - w_cav_k).powi(2) / 4.0 + 85.0 * 85.0).sqrt()
            - 2586.0585288597204;
        let j = 18.0 / (24.79683968 * delta);
        let n_v = 1.0 / ((delta / (8.617333262e-2 * 300.0)).exp() - 1.0);
        let expect_down = 2.0
            * std::f64::consts::PI
            * (phi_0 - phi_k).sin().powi(2)
            * (85.0 * 85.0 / 1e8)
            * j
            * (1.0 + n_v);
        assert_relative_eq!(pair.gamma_down.as_mev(), expect_down, max_relative = 1e-9);
        assert_relative_eq!(
            pair.gamma_down.as_mev() / pair.gamma_up.as_mev(),
            (1.0 + n_v) / n_v,
            max_relative = 1e-10
        );
    }

    #[test]
    fn rates_scale_inversely_with_n_mol() {
        let base = PolaritonSetup::melppp_cavity();
        let doubled = PolaritonSetup::new(base.cavity, base.omega_0, base.rabi, 2e8).unwrap();
        let sd = SpectralDensityModel::FlatA1(net_reference());
        let p1 = therm_rate_pair(&base, &sd, 0.5, 0.0, t(300.0)).unwrap();
        let p2 = therm_rate_pair(&doubled, &sd, 0.5, 0.0, t(300.0)).unwrap();
        assert_relative_eq!(
            p2.gamma_down.as_mev(),
            p1.gamma_down.as_mev() / 2.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn rate_does_not_decrease_when_n_mol_grows_with_rabi() {
        // Ω_R ∝ sqrt(N_mol): doubling the molecule count raises Ω_R by √2.
        // At fixed ground-state energy (cavity re-solved, as in the rate map)
        // the thermalization rate must not drop.
        let base = PolaritonSetup::melppp_cavity();
        let net = net_reference();
        let low0 = base.omega_low(0.0);
        let rabi2 = Energy::mev(85.0 * std::f64::consts::SQRT_2);
        let cav2 = ground_state_cavity(low0, rabi2, base.omega_0).unwrap();
        let scaled = PolaritonSetup::new(
            CavityConfig::new(cav2, base.cavity.alpha_cav, base.cavity.area).unwrap(),
            base.omega_0,
            rabi2,
            2e8,
        )
        .unwrap();
        let r1 = low_t_estimates(&base, &net, base.delta_omega_min(), t(300.0)).unwrap();
        let r2 = low_t_estimates(&scaled, &net, scaled.delta_omega_min(), t(300.0)).unwrap();
        assert!(r2.gamma_down.as_mev() >= r1.gamma_down.as_mev());
    }

    #[test]
    fn sin2_quadratic_envelope() {
        let setup = PolaritonSetup::melppp_cavity();
        let m0 = sin2_mixing(&setup, 0.7, 0.7);
        assert_eq!(m0.exact, 0.0);
        assert_eq!(m0.approximate, 0.0);
        // Δω = 1 meV: approximation within 5%
        let k1 = (1.0 / setup.alpha_pol()).sqrt();
        let m1 = sin2_mixing(&setup, k1, 0.0);
        assert!((m1.ratio - 1.0).abs() < 0.05, "ratio {}", m1.ratio);
        // Δω = 40 meV: approximation degrades but is still reported
        let k40 = (40.0 / setup.alpha_pol()).sqrt();
        let m40 = sin2_mixing(&setup, k40, 0.0);
        assert!((m40.ratio - 1.0).abs() > 0.05, "ratio {}", m40.ratio);
    }

    #[test]
    fn high_t_estimate_value_and_linearity() {
        let setup = PolaritonSetup::melppp_cavity();
        let net = net_reference();
        let est300 = high_t_estimate(&setup, &net, t(300.0));
        // prefactor 0.08242 × (18 meV / 1e8) × (500·25.852/1.5684)
        let pref = (2.2f64 * 2.2 * 85.0f64.powi(4))
            / (setup.alpha_pol().powi(2) * (80.0f64 * 80.0 + 4.0 * 85.0 * 85.0).powi(2));
        let expect = pref * 18.0 / 1e8 * (500.0 * 25.851999786 / setup.alpha_pol());
        assert_relative_eq!(est300.as_mev(), expect, max_relative = 1e-6);
        assert_abs_diff_eq!(est300.as_ev(), 1.22e-7, epsilon = 5e-9);
        let est600 = high_t_estimate(&setup, &net, t(600.0));
        assert_relative_eq!(est600.as_mev(), 2.0 * est300.as_mev(), max_relative = 1e-12);
        assert!(high_t_regime_ok(&net, t(1000.0)));
        assert!(!high_t_regime_ok(&net, t(300.0)));
    }

    #[test]
    fn low_t_estimate_properties() {
        let setup = PolaritonSetup::melppp_cavity();
        let net = net_reference();
        let p0 = low_t_estimates(&setup, &net, Energy::mev(0.5), Temperature::ZERO).unwrap();
        assert_eq!(p0.gamma_up.as_mev(), 0.0);
        // Δω = kBT ln2 -> n_v = 1 -> down/up = 2
        let tt = t(100.0);
        let d = Energy::mev(tt.thermal_energy_mev() * std::f64::consts::LN_2);
        let p = low_t_estimates(&setup, &net, d, tt).unwrap();
        assert_relative_eq!(
            p.gamma_down.as_mev() / p.gamma_up.as_mev(),
            2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn low_t_estimate_equals_exact_pair_under_same_averaging() {
        // flat-A2 spectral density + quadratic sin² reproduces the estimate
        let setup = PolaritonSetup::melppp_cavity();
        let net = net_reference();
        let sd = SpectralDensityModel::FlatA2(net);
        let tt = t(6.0);
        for delta_mev in [0.05, 0.5, 3.0, 20.0] {
            let est = low_t_estimates(&setup, &net, Energy::mev(delta_mev), tt).unwrap();
            let n_v = bose_occupation(Energy::mev(delta_mev), tt).unwrap();
            let pair = rate_pair_from_parts(
                sin2_quadratic(&setup, delta_mev),
                setup.rabi.as_mev().powi(2) / setup.n_mol,
                sd.j(delta_mev),
                n_v,
            );
            assert_relative_eq!(
                pair.gamma_down.as_mev(),
                est.gamma_down.as_mev(),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn realized_moments_flat_and_discrete() {
        let net = net_reference();
        let (a1, a2) = SpectralDensityModel::FlatA1(net).realized_moments();
        assert_relative_eq!(a1, 18.0, max_relative = 1e-12);
        assert_relative_eq!(a2, 18.0 * net.omega_m.as_mev() / 2.0, max_relative = 1e-12);
        let (a1f2, a2f2) = SpectralDensityModel::FlatA2(net).realized_moments();
        assert!(a1f2.is_infinite());
        assert_relative_eq!(a2f2, 200.0, max_relative = 1e-12);
        // narrow Gaussian modes integrate to Σ Λ² ω within quadrature error
        let sd = SpectralDensityModel::DiscreteModes {
            modes: vec![
                (Energy::mev(5.951242), 0.7, Energy::mev(0.3)),
                (Energy::mev(19.837472), 0.5, Energy::mev(0.3)),
            ],
            omega_m: Energy::inv_cm(200.0),
        };
        let (a1d, a2d) = sd.realized_moments();
        assert_relative_eq!(a1d, 0.7 * 5.951242 + 0.5 * 19.837472, max_relative = 1e-2);
        assert_relative_eq!(
            a2d,
            0.7 * 5.951242f64.powi(2) + 0.5 * 19.837472f64.powi(2) + 0.3f64.powi(2) * 1.2,
            max_relative = 1e-2
        );
    }

    #[test]
    fn tabulated_density_interpolates_and_integrates() {
        // samples of the flat-A1 shape J = A1/(ω_M ω) must reproduce its
        // moments and its pair rates by linear interpolation
        let net = net_reference();
        let wm = net.omega_m.as_mev();
        let points: Vec<(f64, f64)> = (1..=4000)
            .map(|i| {
                let w = wm * i as f64 / 4000.0;
                (w, 18.0 / (wm * w))
            })
            .collect();
        let sd = SpectralDensityModel::Tabulated {
            points,
            omega_m: net.omega_m,
        };
        // on-node and between-node evaluation
        assert_relative_eq!(sd.j(wm / 2.0), 18.0 / (wm * wm / 2.0), max_relative = 1e-9);
        let mid = wm * (1.5 / 4000.0);
        let exact_ends = (18.0 / (wm * wm / 4000.0) + 18.0 / (wm * 2.0 * wm / 4000.0)) / 2.0;
        assert_relative_eq!(sd.j(mid), exact_ends, max_relative = 1e-12);
        assert_eq!(sd.j(wm * 1.01), 0.0);
        let (a1, _) = sd.realized_moments();
        assert_relative_eq!(a1, 18.0, max_relative = 1e-2);
        // pair rates through the tabulated model track the analytic flat form
        let setup = PolaritonSetup::melppp_cavity();
        let flat = SpectralDensityModel::FlatA1(net);
        let pair_t = therm_rate_pair(&setup, &sd, 1.0, 0.0, t(300.0)).unwrap();
        let pair_f = therm_rate_pair(&setup, &flat, 1.0, 0.0, t(300.0)).unwrap();
        assert_relative_eq!(
            pair_t.gamma_down.as_mev(),
            pair_f.gamma_down.as_mev(),
            max_relative = 1e-4
        );
    }

    #[test]
    fn rate_map_monotone_in_rabi_and_matches_point_call() {
        let template = PolaritonSetup::melppp_cavity();
        let net = net_reference();
        let rabi: Vec<f64> = (0..8).map(|i| 30.0 + 8.0 * i as f64).collect();
        let low0: Vec<f64> = (0..5).map(|i| 2550.0 + 15.0 * i as f64).collect();
        let map = rate_map(&template, &net, &rabi, &low0, t(300.0)).unwrap();
        for row in &map.gamma_down_mev {
            for w in row.windows(2) {
                assert!(w[1] > w[0], "not monotone: {row:?}");
            }
        }
        // single grid point equals the direct estimate call
        let cav0 =
            ground_state_cavity(Energy::mev(low0[2]), Energy::mev(rabi[3]), template.omega_0)
                .unwrap();
        let setup = PolaritonSetup::new(
            CavityConfig::new(cav0, 2.2, 500.0).unwrap(),
            template.omega_0,
            Energy::mev(rabi[3]),
            template.n_mol,
        )
        .unwrap();
        let direct = low_t_estimates(&setup, &net, setup.delta_omega_min(), t(300.0)).unwrap();
        assert_relative_eq!(
            map.gamma_down_mev[2][3],
            direct.gamma_down.as_mev(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn rate_map_rejects_ground_above_exciton() {
        let template = PolaritonSetup::melppp_cavity();
        let net = net_reference();
        assert!(matches!(
            rate_map(&template, &net, &[50.0], &[2800.0], t(300.0)),
            Err(RatesError::GroundAboveExciton(..))
        ));
    }

    #[test]
    fn uphill_rate_strictly_increases_with_temperature() {
        let setup = PolaritonSetup::melppp_cavity();
        let sd = SpectralDensityModel::FlatA1(net_reference());
        let mut prev = 0.0;
        for kelvin in [2.0, 6.0, 20.0, 77.0, 150.0, 300.0, 500.0] {
            let pair = therm_rate_pair(&setup, &sd, 0.7, 0.0, t(kelvin)).unwrap();
            assert!(
                pair.gamma_up.as_mev() > prev,
                "not increasing at {kelvin} K"
            );
            assert!(pair.gamma_down.as_mev() >= 0.0 && pair.gamma_up.as_mev() >= 0.0);
            prev = pair.gamma_up.as_mev();
        }
    }

    #[test]
    fn rate_vs_temperature_bottleneck_suppression() {
        let setup = PolaritonSetup::melppp_cavity();
        let sd = SpectralDensityModel::FlatA1(net_reference());
        let k_grid = energy_lattice_k_grid(&setup, 120);
        let temps = [t(6.0), t(300.0)];
        let rvt = rate_vs_temperature(&setup, &sd, &k_grid, &temps).unwrap();
        // at 6 K uphill transitions with ħΔω >> kBT are exponentially frozen
        let dmin = setup.delta_omega_min().as_mev();
        let i_far = 99; // Δω = 100 Δω_min ≈ 3.9 meV ≈ 7.6 kBT(6K)
        let ratio6 = rvt.gamma_up_mev[0][i_far] / rvt.gamma_down_mev[0][i_far];
        let expect = (-(100.0 * dmin) / t(6.0).thermal_energy_mev()).exp();
        assert_relative_eq!(ratio6, expect, max_relative = 1e-6);
        // thermalization length grows with temperature
        assert!(rvt.therm_length[1] >= rvt.therm_length[0]);
    }
}
