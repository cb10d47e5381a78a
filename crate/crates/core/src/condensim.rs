//! Mean-field condensation kinetics: an exciton reservoir pumped by a
//! Gaussian pulse feeds a discrete ladder of lower-polariton modes through
//! vibron-assisted scattering, while a detailed-balance thermalization
//! matrix exchanges population between modes. Fixed-step RK4 integration.
//!
//! All rate-like quantities are energies (ħγ, meV); the integrator divides
//! by ħ once so occupations evolve per picosecond.

use crate::polariton::PolaritonSetup;
use crate::rates::{rate_pair_from_parts, RatesError, SpectralDensityModel};
use crate::units::{bose_occupation, Energy, Temperature, UnitsError, HBAR_MEV_PS};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CondensimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(
        "time step too large: dt = {dt} ps but the fastest rate is ~{rate:.3} 1/ps \
         (need dt * rate < 0.1)"
    )]
    StepTooLarge { dt: f64, rate: f64 },
    #[error("occupation went negative ({value:.3e} at t = {t:.4} ps); reduce the time step")]
    NegativeOccupation { t: f64, value: f64 },
    #[error("state became non-finite at t = {t:.4} ps; reduce the time step")]
    NonFinite { t: f64 },
    #[error(
        "no threshold crossing inside the amplitude bracket [{lo:.3e}, {hi:.3e}] \
         (peak n_0 = {peak_lo:.3e} .. {peak_hi:.3e})"
    )]
    NoThresholdCrossing {
        lo: f64,
        hi: f64,
        peak_lo: f64,
        peak_hi: f64,
    },
    #[error(transparent)]
    Rates(#[from] RatesError),
    #[error(transparent)]
    Units(#[from] UnitsError),
}

/// One discrete lower-polariton mode bundle.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    /// 1/μm
    pub k: f64,
    pub omega_mev: f64,
    pub sin2phi: f64,
    /// Hopfield-weighted decay, meV.
    pub gamma_mev: f64,
    /// Number of quantum states the bundle represents.
    pub degeneracy: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Reservoir {
    pub omega_exc: Energy,
    pub gamma_p: Energy,
}

#[derive(Debug, Clone)]
pub struct ModeGrid {
    pub modes: Vec<Mode>,
    pub reservoir: Reservoir,
}

/// Uniform k-grid of `n_modes` modes on [0, k_max) with annulus state
/// counting for the degeneracies and Hopfield-weighted decay rates
/// γ_i = cos²φ_i γ_cav + sin²φ_i γ_exc.
pub fn build_mode_grid(
    setup: &PolaritonSetup,
    n_modes: usize,
    k_max: f64,
    gamma_cav: Energy,
    gamma_exc: Energy,
) -> ModeGrid {
    let dk = k_max / n_modes as f64;
    let area = setup.cavity.area;
    let modes = (0..n_modes)
        .map(|i| {
            let k = i as f64 * dk;
            let sin2 = setup.excitonic_fraction(k);
            let gamma = (1.0 - sin2) * gamma_cav.as_mev() + sin2 * gamma_exc.as_mev();
            let degeneracy = if i == 0 {
                (std::f64::consts::PI * (dk / 2.0).powi(2) * area
                    / (2.0 * std::f64::consts::PI).powi(2))
                .round()
            } else {
                (2.0 * std::f64::consts::PI * k * dk * area / (2.0 * std::f64::consts::PI).powi(2))
                    .round()
            }
            .max(1.0);
            Mode {
                k,
                omega_mev: setup.omega_low(k).as_mev(),
                sin2phi: sin2,
                gamma_mev: gamma,
                degeneracy,
            }
        })
        .collect();
    ModeGrid {
        modes,
        reservoir: Reservoir {
            omega_exc: setup.omega_0,
            gamma_p: gamma_exc,
        },
    }
}

/// Constant-rate thermalization matrix: γ^{i→j} = γ_therm downhill and
/// γ_therm e^{−ħ(ω_j−ω_i)/k_BT} uphill; zero diagonal. Satisfies pairwise
/// detailed balance by construction.
pub fn thermalization_matrix(
    grid: &ModeGrid,
    gamma_therm: Energy,
    t: Temperature,
) -> Vec<Vec<f64>> {
    let g = gamma_therm.as_mev();
    let n = grid.modes.len();
    let kbt = t.thermal_energy_mev();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let wi = grid.modes[i].omega_mev;
            let wj = grid.modes[j].omega_mev;
            m[i][j] = if wi > wj {
                g
            } else if kbt > 0.0 {
                g * (-(wj - wi) / kbt).exp()
            } else {
                0.0
            };
        }
    }
    m
}

/// Momentum-dependent thermalization matrix from the pairwise vibron-assisted
/// rates (exact Hopfield mixing, spectral density J, Bose factors). Grid modes
/// are coarse bundles, so the finite-size level-spacing gate does not apply;
/// pairs outside the vibrational band get zero.
pub fn thermalization_matrix_from_rates(
    grid: &ModeGrid,
    setup: &PolaritonSetup,
    sd: &SpectralDensityModel,
    t: Temperature,
) -> Result<Vec<Vec<f64>>, CondensimError> {
    let n = grid.modes.len();
    let mut m = vec![vec![0.0; n]; n];
    let rabi_sq_over_n = setup.rabi.as_mev().powi(2) / setup.n_mol;
    for i in 0..n {
        for j in (i + 1)..n {
            // j is the higher-energy mode on this grid
            let delta = grid.modes[j].omega_mev - grid.modes[i].omega_mev;
            if delta <= 0.0 || delta > sd.omega_m().as_mev() {
                continue;
            }
            let phi_i = setup.hopfield_angle(grid.modes[i].k);
            let phi_j = setup.hopfield_angle(grid.modes[j].k);
            let sin2 = (phi_i - phi_j).sin().powi(2);
            let n_v = bose_occupation(Energy::mev(delta), t)?;
            let pair = rate_pair_from_parts(sin2, rabi_sq_over_n, sd.j(delta), n_v);
            m[j][i] = pair.gamma_down.as_mev();
            m[i][j] = pair.gamma_up.as_mev();
        }
    }
    Ok(m)
}

/// Vibron-assisted reservoir→polariton scattering parameters.
#[derive(Debug, Clone, Copy)]
pub struct ScatterParams {
    pub omega_vib: Energy,
    pub gamma_vib: Energy,
    pub g: Energy,
    /// Overall calibration scale of the scattering Lorentzian.
    pub gamma0: Energy,
}

impl ScatterParams {
    /// Reference defaults: 0.199 eV vibron, 2.5 meV width, 0.5 meV
    /// coupling, Γ₀ = g²/γ_vib.
    pub fn vibron_defaults() -> ScatterParams {
        let g = Energy::mev(0.5);
        let gamma_vib = Energy::mev(2.5);
        ScatterParams {
            omega_vib: Energy::ev(0.199),
            gamma_vib,
            g,
            gamma0: Energy::mev(g.as_mev() * g.as_mev() / gamma_vib.as_mev()),
        }
    }
}

/// Γ_i^P = Γ₀ sin²φ_i γ_vib² / ((ω_exc − ω_vib − ω_i)² + γ_vib²): a Lorentzian
/// resonance one vibration quantum below the reservoir, weighted by the
/// excitonic fraction.
pub fn scattering_rates(grid: &ModeGrid, scatter: &ScatterParams) -> Vec<f64> {
    let target = grid.reservoir.omega_exc.as_mev() - scatter.omega_vib.as_mev();
    let g2 = scatter.gamma_vib.as_mev().powi(2);
    grid.modes
        .iter()
        .map(|m| {
            let det = m.omega_mev - target;
            scatter.gamma0.as_mev() * m.sin2phi * g2 / (det * det + g2)
        })
        .collect()
}

/// Gaussian pump pulse feeding the exciton reservoir.
#[derive(Debug, Clone, Copy)]
pub struct Pump {
    /// Peak feed rate as an energy (meV); zero disables the pump.
    pub amplitude_mev: f64,
    pub t0_ps: f64,
    pub fwhm_ps: f64,
}

impl Pump {
    pub fn off() -> Pump {
        Pump {
            amplitude_mev: 0.0,
            t0_ps: 1.0,
            fwhm_ps: 0.2,
        }
    }
}

/// Gaussian seed pulse, separable in momentum and time.
#[derive(Debug, Clone, Copy)]
pub struct Seed {
    pub amplitude_mev: f64,
    pub k_center: f64,
    pub sigma_k: f64,
    pub t0_ps: f64,
    pub fwhm_ps: f64,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub grid: ModeGrid,
    /// γ^{i→j} matrix in meV.
    pub therm_matrix: Vec<Vec<f64>>,
    pub scatter: ScatterParams,
    pub pump: Pump,
    pub seed: Option<Seed>,
    pub dt_ps: f64,
    pub t_end_ps: f64,
    /// Output sampling period in steps.
    pub save_stride: usize,
    /// Gate for both polariton decay γ_i and reservoir decay γ_P.
    pub include_decay: bool,
    pub initial_occupations: Option<Vec<f64>>,
    pub initial_reservoir: f64,
}

impl SimConfig {
    pub fn new(grid: ModeGrid, therm_matrix: Vec<Vec<f64>>, scatter: ScatterParams) -> SimConfig {
        SimConfig {
            grid,
            therm_matrix,
            scatter,
            pump: Pump::off(),
            seed: None,
            dt_ps: 5e-4,
            t_end_ps: 10.0,
            save_stride: 20,
            include_decay: true,
            initial_occupations: None,
            initial_reservoir: 0.0,
        }
    }

    fn validate(&self) -> Result<(), CondensimError> {
        let n = self.grid.modes.len();
        if n < 2 {
            return Err(CondensimError::InvalidConfig(
                "need at least two modes".into(),
            ));
        }
        if self.therm_matrix.len() != n || self.therm_matrix.iter().any(|r| r.len() != n) {
            return Err(CondensimError::InvalidConfig(
                "thermalization matrix does not match the mode grid".into(),
            ));
        }
        if !(self.dt_ps > 0.0) || !(self.t_end_ps > self.dt_ps) {
            return Err(CondensimError::InvalidConfig("need 0 < dt < t_end".into()));
        }
        if self.save_stride == 0 {
            return Err(CondensimError::InvalidConfig(
                "save_stride must be >= 1".into(),
            ));
        }
        if self.pump.amplitude_mev > 0.0 && !(self.pump.fwhm_ps > 0.0) {
            return Err(CondensimError::InvalidConfig(
                "pump fwhm must be > 0".into(),
            ));
        }
        if let Some(seed) = &self.seed {
            if seed.amplitude_mev > 0.0 && (!(seed.fwhm_ps > 0.0) || !(seed.sigma_k > 0.0)) {
                return Err(CondensimError::InvalidConfig(
                    "seed widths must be > 0".into(),
                ));
            }
        }
        if let Some(init) = &self.initial_occupations {
            if init.len() != n {
                return Err(CondensimError::InvalidConfig(
                    "initial occupations do not match the mode grid".into(),
                ));
            }
            if init.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(CondensimError::InvalidConfig(
                    "initial occupations must be finite and >= 0".into(),
                ));
            }
        }
        let rate = self.max_rate_estimate();
        if self.dt_ps * rate >= 0.1 {
            return Err(CondensimError::StepTooLarge {
                dt: self.dt_ps,
                rate,
            });
        }
        Ok(())
    }

    /// Heuristic fastest per-occupation rate (1/ps) used by the step guard.
    pub fn max_rate_estimate(&self) -> f64 {
        let gp = self.grid.reservoir.gamma_p.as_mev();
        let scat = scattering_rates(&self.grid, &self.scatter);
        let n_p_est = if self.pump.amplitude_mev > 0.0 {
            if self.include_decay && gp > 0.0 {
                self.pump.amplitude_mev / gp
            } else {
                self.pump.amplitude_mev * self.pump.fwhm_ps / HBAR_MEV_PS
            }
        } else {
            self.initial_reservoir
        };
        let max_scat = scat.iter().cloned().fold(0.0f64, f64::max) * n_p_est;
        let max_gamma = if self.include_decay {
            self.grid
                .modes
                .iter()
                .map(|m| m.gamma_mev)
                .fold(gp, f64::max)
        } else {
            0.0
        };
        let max_therm = match &self.initial_occupations {
            Some(init) => {
                let weights: Vec<f64> = self
                    .grid
                    .modes
                    .iter()
                    .zip(init)
                    .map(|(m, n)| n + m.degeneracy)
                    .collect();
                self.therm_matrix
                    .iter()
                    .map(|row| row.iter().zip(&weights).map(|(g, w)| g * w).sum::<f64>())
                    .fold(0.0f64, f64::max)
            }
            None => 0.0,
        };
        (max_scat + max_gamma + max_therm) / HBAR_MEV_PS
    }
}

/// Time-resolved occupations of the reservoir and every mode.
#[derive(Debug, Clone)]
pub struct SimTrajectory {
    pub times_ps: Vec<f64>,
    pub reservoir: Vec<f64>,
    /// `occupations[sample][mode]`
    pub occupations: Vec<Vec<f64>>,
    /// Running maxima tracked every step (not just at saved samples).
    pub peak_occupations: Vec<f64>,
    pub peak_reservoir: f64,
    pub grid: ModeGrid,
}

impl SimTrajectory {
    pub fn final_occupations(&self) -> &[f64] {
        self.occupations.last().expect("trajectory has samples")
    }

    pub fn total_polaritons(&self) -> Vec<f64> {
        self.occupations
            .iter()
            .map(|row| row.iter().sum())
            .collect()
    }
}

struct Rhs<'a> {
    cfg: &'a SimConfig,
    scat: Vec<f64>,
    gamma: Vec<f64>,
    gamma_p: f64,
    seed_profile: Vec<f64>,
    /// 1/(2σ²) for pump and seed time envelopes
    pump_inv2s2: f64,
    seed_inv2s2: f64,
    seed_t0: f64,
}

impl<'a> Rhs<'a> {
    fn new(cfg: &'a SimConfig) -> Rhs<'a> {
        let fwhm_to_inv2s2 = |fwhm: f64| {
            let sigma = fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
            1.0 / (2.0 * sigma * sigma)
        };
        let scat = scattering_rates(&cfg.grid, &cfg.scatter);
        let gamma = if cfg.include_decay {
            cfg.grid.modes.iter().map(|m| m.gamma_mev).collect()
        } else {
            vec![0.0; cfg.grid.modes.len()]
        };
        let gamma_p = if cfg.include_decay {
            cfg.grid.reservoir.gamma_p.as_mev()
        } else {
            0.0
        };
        let (seed_profile, seed_inv2s2, seed_t0) = match &cfg.seed {
            Some(s) => (
                cfg.grid
                    .modes
                    .iter()
                    .map(|m| {
                        s.amplitude_mev
                            * (-(m.k - s.k_center).powi(2) / (2.0 * s.sigma_k * s.sigma_k)).exp()
                    })
                    .collect(),
                fwhm_to_inv2s2(s.fwhm_ps),
                s.t0_ps,
            ),
            None => (vec![0.0; cfg.grid.modes.len()], 1.0, 0.0),
        };
        Rhs {
            cfg,
            scat,
            gamma,
            gamma_p,
            seed_profile,
            pump_inv2s2: fwhm_to_inv2s2(cfg.pump.fwhm_ps),
            seed_inv2s2,
            seed_t0,
        }
    }

    /// dy/dt in occupations per ps; y = [n_P, n_0, ..., n_{N-1}].
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        let n = self.cfg.grid.modes.len();
        let n_p = y[0];
        let modes = &self.cfg.grid.modes;
        let m = &self.cfg.therm_matrix;

        let pump = if self.cfg.pump.amplitude_mev > 0.0 {
            let dt = t - self.cfg.pump.t0_ps;
            self.cfg.pump.amplitude_mev * (-dt * dt * self.pump_inv2s2).exp()
        } else {
            0.0
        };
        let seed_env = if self.cfg.seed.is_some() {
            let dt = t - self.seed_t0;
            (-dt * dt * self.seed_inv2s2).exp()
        } else {
            0.0
        };

        let mut scat_sum = 0.0;
        for i in 0..n {
            let nd = y[1 + i] + modes[i].degeneracy;
            let scat_i = self.scat[i] * n_p * nd;
            scat_sum += scat_i;
            // inflow: Σ_j γ^{j→i} n_j (n_i + D_i); outflow: n_i Σ_j γ^{i→j} (n_j + D_j)
            let mut inflow = 0.0;
            let mut outflow = 0.0;
            for j in 0..n {
                inflow += m[j][i] * y[1 + j];
                outflow += m[i][j] * (y[1 + j] + modes[j].degeneracy);
            }
            dydt[1 + i] = (-self.gamma[i] * y[1 + i]
                + self.seed_profile[i] * seed_env
                + scat_i
                + inflow * nd
                - outflow * y[1 + i])
                / HBAR_MEV_PS;
        }
        dydt[0] = (-self.gamma_p * n_p + pump - scat_sum) / HBAR_MEV_PS;
    }
}

/// Integrate the rate equations with fixed-step RK4.
pub fn simulate(cfg: &SimConfig) -> Result<SimTrajectory, CondensimError> {
    cfg.validate()?;
    let n = cfg.grid.modes.len();
    let rhs = Rhs::new(cfg);

    let mut y = vec![0.0; n + 1];
    y[0] = cfg.initial_reservoir;
    if let Some(init) = &cfg.initial_occupations {
        y[1..].copy_from_slice(init);
    }

    let steps = (cfg.t_end_ps / cfg.dt_ps).round() as usize;
    let dt = cfg.dt_ps;
    let mut times = Vec::with_capacity(steps / cfg.save_stride + 2);
    let mut reservoir = Vec::with_capacity(times.capacity());
    let mut occupations = Vec::with_capacity(times.capacity());
    let mut peaks = y[1..].to_vec();
    let mut peak_reservoir = y[0];

    let mut k1 = vec![0.0; n + 1];
    let mut k2 = vec![0.0; n + 1];
    let mut k3 = vec![0.0; n + 1];
    let mut k4 = vec![0.0; n + 1];
    let mut tmp = vec![0.0; n + 1];

    let mut t = 0.0;
    for step in 0..=steps {
        if step % cfg.save_stride == 0 || step == steps {
            times.push(t);
            reservoir.push(y[0]);
            occupations.push(y[1..].to_vec());
        }
        if step == steps {
            break;
        }
        rhs.eval(t, &y, &mut k1);
        for i in 0..=n {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        rhs.eval(t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..=n {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        rhs.eval(t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..=n {
            tmp[i] = y[i] + dt * k3[i];
        }
        rhs.eval(t + dt, &tmp, &mut k4);
        for i in 0..=n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += dt;

        let mut min = f64::INFINITY;
        for (i, v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(CondensimError::NonFinite { t });
            }
            min = min.min(*v);
            if i > 0 && *v > peaks[i - 1] {
                peaks[i - 1] = *v;
            }
        }
        peak_reservoir = peak_reservoir.max(y[0]);
        if min < -1e-9 {
            return Err(CondensimError::NegativeOccupation { t, value: min });
        }
    }

    Ok(SimTrajectory {
        times_ps: times,
        reservoir,
        occupations,
        peak_occupations: peaks,
        peak_reservoir,
        grid: cfg.grid.clone(),
    })
}

/// Selector for `ek_distribution`.
#[derive(Debug, Clone, Copy)]
pub enum EkSelect {
    /// Occupations at the saved sample nearest this time (ps).
    AtTime(f64),
    /// Trapezoidal time integral over the whole trajectory (occupation·ps).
    TimeIntegrated,
}

/// Occupation per (k, ω) point.
pub fn ek_distribution(traj: &SimTrajectory, select: EkSelect) -> Vec<(f64, f64, f64)> {
    let values: Vec<f64> = match select {
        EkSelect::AtTime(t) => {
            // nearest saved sample; times beyond the ends clamp
            let times = &traj.times_ps;
            let i = match times.partition_point(|&x| x < t) {
                0 => 0,
                i if i >= times.len() => times.len() - 1,
                i => {
                    if (times[i] - t).abs() < (t - times[i - 1]).abs() {
                        i
                    } else {
                        i - 1
                    }
                }
            };
            traj.occupations[i].clone()
        }
        EkSelect::TimeIntegrated => {
            let n = traj.grid.modes.len();
            let mut acc = vec![0.0; n];
            for w in 0..traj.times_ps.len().saturating_sub(1) {
                let dt = traj.times_ps[w + 1] - traj.times_ps[w];
                for i in 0..n {
                    acc[i] += dt * (traj.occupations[w][i] + traj.occupations[w + 1][i]) / 2.0;
                }
            }
            acc
        }
    };
    traj.grid
        .modes
        .iter()
        .zip(values)
        .map(|(m, v)| (m.k, m.omega_mev, v))
        .collect()
}

/// Threshold search result.
#[derive(Debug, Clone)]
pub struct ThresholdResult {
    /// Pump amplitude (meV) at which the peak ground-state occupation crosses 1.
    pub p_th_mev: f64,
    /// d ln(peak n_0) / d ln P at the threshold.
    pub knee_sharpness: f64,
    /// (amplitude, peak n_0) evaluations accumulated during the search.
    pub scan: Vec<(f64, f64)>,
}

fn peak_ground(cfg: &SimConfig, amplitude: f64) -> Result<f64, CondensimError> {
    let mut run = cfg.clone();
    run.pump.amplitude_mev = amplitude;
    run.seed = None;
    // keep the step guard satisfied as the bracket scales up
    let rate = run.max_rate_estimate();
    if run.dt_ps * rate >= 0.1 {
        run.dt_ps = 0.08 / rate;
    }
    Ok(simulate(&run)?.peak_occupations[0])
}

/// Bisection on the pump amplitude for the knee where the peak ground-state
/// occupation crosses 1 (quantum degeneracy).
pub fn find_threshold(
    cfg: &SimConfig,
    bracket: (f64, f64),
) -> Result<ThresholdResult, CondensimError> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(CondensimError::InvalidConfig(
            "threshold bracket must satisfy 0 < lo < hi".into(),
        ));
    }
    let mut scan = Vec::new();
    let peak_lo = peak_ground(cfg, lo)?;
    let peak_hi = peak_ground(cfg, hi)?;
    scan.push((lo, peak_lo));
    scan.push((hi, peak_hi));
    if peak_lo >= 1.0 || peak_hi <= 1.0 {
        return Err(CondensimError::NoThresholdCrossing {
            lo,
            hi,
            peak_lo,
            peak_hi,
        });
    }
    for _ in 0..48 {
        let mid = (lo * hi).sqrt();
        let peak = peak_ground(cfg, mid)?;
        scan.push((mid, peak));
        if peak > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo < 1.0 + 1e-6 {
            break;
        }
    }
    let p_th = (lo * hi).sqrt();
    let up = peak_ground(cfg, p_th * 1.05)?;
    let down = peak_ground(cfg, p_th * 0.95)?;
    scan.push((p_th * 1.05, up));
    scan.push((p_th * 0.95, down));
    scan.sort_by(|a, b| a.0.total_cmp(&b.0));
    let knee = (up.ln() - down.ln()) / (1.05f64.ln() - 0.95f64.ln());
    Ok(ThresholdResult {
        p_th_mev: p_th,
        knee_sharpness: knee,
        scan,
    })
}

/// Bose-Einstein occupations n_i = D_i/(e^{(ω_i−μ)/k_BT} − 1) for the grid.
pub fn bose_einstein_occupations(grid: &ModeGrid, mu_mev: f64, t: Temperature) -> Vec<f64> {
    let kbt = t.thermal_energy_mev();
    grid.modes
        .iter()
        .map(|m| m.degeneracy / (((m.omega_mev - mu_mev) / kbt).exp_m1()))
        .collect()
}

/// Chemical potential reproducing a total particle number, by bisection.
pub fn chemical_potential_for(grid: &ModeGrid, n_total: f64, t: Temperature) -> f64 {
    let w0 = grid.modes[0].omega_mev;
    let total = |mu: f64| -> f64 { bose_einstein_occupations(grid, mu, t).iter().sum::<f64>() };
    let mut lo = w0 - 50.0 * t.thermal_energy_mev().max(1.0);
    let mut hi = w0 - 1e-12;
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if total(mid) < n_total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / 2.0
}

/// Reference MeLPPP condensation configuration: 31 modes under 3 μm⁻¹,
/// 4.4/60 meV decay, 0.199 eV vibron scattering channel, constant
/// thermalization of 5e-10 eV at 300 K.
pub fn melppp_condensation_config() -> SimConfig {
    let setup = PolaritonSetup::melppp_cavity();
    let t300 = Temperature::new(300.0).unwrap();
    let grid = build_mode_grid(&setup, 31, 3.0, Energy::mev(4.4), Energy::mev(60.0));
    let matrix = thermalization_matrix(&grid, Energy::ev(5e-10), t300);
    SimConfig::new(grid, matrix, ScatterParams::vibron_defaults())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn t(kelvin: f64) -> Temperature {
        Temperature::new(kelvin).unwrap()
    }

    #[test]
    fn grid_matches_hand_values() {
        let setup = PolaritonSetup::melppp_cavity();
        let grid = build_mode_grid(&setup, 31, 3.0, Energy::mev(4.4), Energy::mev(60.0));
        assert_eq!(grid.modes.len(), 31);
        // k=0 mode: sin²φ = 0.287 -> γ = 0.713·4.4 + 0.287·60 = 20.4 meV
        assert_abs_diff_eq!(grid.modes[0].gamma_mev, 20.4, epsilon = 0.05);
        assert_eq!(grid.modes[0].degeneracy, 1.0);
        // Hopfield weighting holds for every mode
        for m in &grid.modes {
            let expect = (1.0 - m.sin2phi) * 4.4 + m.sin2phi * 60.0;
            assert_relative_eq!(m.gamma_mev, expect, max_relative = 1e-14);
        }
        // annulus degeneracy grows linearly with k
        let d15 = grid.modes[15].degeneracy;
        let d30 = grid.modes[30].degeneracy;
        assert!(d30 > d15 && (d30 / d15 - 2.0).abs() < 0.15, "{d15} {d30}");
        assert!(grid.modes.windows(2).all(|w| w[0].k < w[1].k));
    }

    #[test]
    fn constant_matrix_detailed_balance() {
        let setup = PolaritonSetup::melppp_cavity();
        let grid = build_mode_grid(&setup, 31, 3.0, Energy::mev(4.4), Energy::mev(60.0));
        let tt = t(300.0);
        let m = thermalization_matrix(&grid, Energy::ev(5e-10), tt);
        let g = Energy::ev(5e-10).as_mev();
        let kbt = tt.thermal_energy_mev();
        for i in 0..31 {
            assert_eq!(m[i][i], 0.0);
            for j in 0..31 {
                if i == j {
                    continue;
                }
                let (wi, wj) = (grid.modes[i].omega_mev, grid.modes[j].omega_mev);
                if wi > wj {
                    assert_eq!(m[i][j], g);
                } else {
                    assert_relative_eq!(
                        m[i][j],
                        g * (-(wj - wi) / kbt).exp(),
                        max_relative = 1e-14
                    );
                }
                // pairwise KMS: downhill over uphill is the Boltzmann factor
                let ratio = m[i][j] / m[j][i];
                assert_relative_eq!(ratio, ((wi - wj) / kbt).exp(), max_relative = 1e-12);
            }
        }
        // uphill by exactly k_BT is suppressed by 1/e
        let target = grid.modes[0].omega_mev + kbt;
        let probe_grid = ModeGrid {
            modes: vec![
                grid.modes[0],
                Mode {
                    omega_mev: target,
                    ..grid.modes[1]
                },
            ],
            reservoir: grid.reservoir,
        };
        let m2 = thermalization_matrix(&probe_grid, Energy::ev(5e-10), tt);
        assert_relative_eq!(m2[0][1], g / std::f64::consts::E, max_relative = 1e-12);
    }

    #[test]
    fn scattering_lorentzian_shape() {
        let setup = PolaritonSetup::melppp_cavity();
        let mut grid = build_mode_grid(&setup, 4, 3.0, Energy::mev(4.4), Energy::mev(60.0));
        let scatter = ScatterParams::vibron_defaults();
        let target = grid.reservoir.omega_exc.as_mev() - scatter.omega_vib.as_mev();
        // place one mode exactly at the resonance and one far-detuned
        grid.modes[1].omega_mev = target;
        grid.modes[2].omega_mev = target + 10.0 * scatter.gamma_vib.as_mev();
        let rates = scattering_rates(&grid, &scatter);
        assert_relative_eq!(
            rates[1],
            scatter.gamma0.as_mev() * grid.modes[1].sin2phi,
            max_relative = 1e-12
        );
        let suppression = rates[2] / grid.modes[2].sin2phi / (rates[1] / grid.modes[1].sin2phi);
        assert_relative_eq!(suppression, 1.0 / 101.0, max_relative = 1e-12);
        // MeLPPP placement: the resonance lies below the polariton band
        let full = build_mode_grid(&setup, 31, 3.0, Energy::mev(4.4), Energy::mev(60.0));
        assert!(full.modes[0].omega_mev > target);
    }

    #[test]
    fn pure_decay_is_exponential() {
        let mut cfg = melppp_condensation_config();
        let n = cfg.grid.modes.len();
        cfg.therm_matrix = vec![vec![0.0; n]; n];
        cfg.initial_occupations = Some(vec![5.0; n]);
        cfg.t_end_ps = 0.2;
        cfg.dt_ps = 1e-4;
        cfg.save_stride = 100;
        let traj = simulate(&cfg).unwrap();
        let t_end = *traj.times_ps.last().unwrap();
        for (i, m) in cfg.grid.modes.iter().enumerate() {
            let expect = 5.0 * (-m.gamma_mev * t_end / HBAR_MEV_PS).exp();
            assert_relative_eq!(traj.final_occupations()[i], expect, max_relative = 1e-8);
        }
    }

    #[test]
    fn thermalization_conserves_particles() {
        let mut cfg = melppp_condensation_config();
        cfg.include_decay = false;
        let n = cfg.grid.modes.len();
        let mut init = vec![0.0; n];
        init[25] = 100.0;
        cfg.initial_occupations = Some(init);
        cfg.t_end_ps = 50.0;
        cfg.dt_ps = 0.01;
        cfg.save_stride = 100;
        let traj = simulate(&cfg).unwrap();
        let totals = traj.total_polaritons();
        for tot in &totals {
            assert_relative_eq!(*tot, 100.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn bose_einstein_fixed_point_short() {
        let mut cfg = melppp_condensation_config();
        cfg.include_decay = false;
        let tt = t(300.0);
        let mu = chemical_potential_for(&cfg.grid, 60.0, tt);
        let be = bose_einstein_occupations(&cfg.grid, mu, tt);
        let total: f64 = be.iter().sum();
        assert_relative_eq!(total, 60.0, max_relative = 1e-8);
        cfg.initial_occupations = Some(be.clone());
        cfg.t_end_ps = 10.0;
        cfg.dt_ps = 1e-3;
        cfg.save_stride = 1000;
        let traj = simulate(&cfg).unwrap();
        for (i, v) in traj.final_occupations().iter().enumerate() {
            assert_relative_eq!(*v, be[i], max_relative = 1e-10);
        }
    }

    #[test]
    fn negative_occupation_guard_fires() {
        let mut cfg = melppp_condensation_config();
        // stiffen the system beyond the chosen step: huge thermalization
        let n = cfg.grid.modes.len();
        cfg.therm_matrix = vec![vec![5.0; n]; n];
        for i in 0..n {
            cfg.therm_matrix[i][i] = 0.0;
        }
        let mut init = vec![0.0; n];
        init[30] = 1e6;
        cfg.initial_occupations = Some(init);
        cfg.dt_ps = 0.09; // passes the coarse config guard, fails in flight
        cfg.t_end_ps = 20.0;
        let out = simulate(&cfg);
        assert!(
            matches!(
                out,
                Err(CondensimError::NegativeOccupation { .. })
                    | Err(CondensimError::StepTooLarge { .. })
                    | Err(CondensimError::NonFinite { .. })
            ),
            "expected a step-size failure, got {out:?}"
        );
    }

    #[test]
    fn empty_trajectory_gives_empty_distribution() {
        let mut cfg = melppp_condensation_config();
        cfg.t_end_ps = 0.5;
        cfg.dt_ps = 1e-3;
        let traj = simulate(&cfg).unwrap(); // no pump, no seed, nothing to do
        for select in [EkSelect::AtTime(0.25), EkSelect::TimeIntegrated] {
            let dist = ek_distribution(&traj, select);
            assert_eq!(dist.len(), 31);
            assert!(dist.iter().all(|d| d.2 == 0.0));
        }
    }

    #[test]
    fn ek_at_time_picks_nearest_sample_and_clamps() {
        let mut cfg = melppp_condensation_config();
        let n = cfg.grid.modes.len();
        cfg.therm_matrix = vec![vec![0.0; n]; n];
        cfg.initial_occupations = Some(vec![4.0; n]);
        cfg.t_end_ps = 0.1;
        cfg.dt_ps = 1e-4;
        cfg.save_stride = 100; // samples every 0.01 ps
        let traj = simulate(&cfg).unwrap();
        // beyond the end clamps to the final sample, not the initial one
        let past_end = ek_distribution(&traj, EkSelect::AtTime(1e9));
        let last = traj.final_occupations();
        for (i, d) in past_end.iter().enumerate() {
            assert_eq!(d.2, last[i]);
        }
        assert!(past_end[0].2 < 4.0); // decayed, so not the t = 0 state
                                      // interior times round to the nearest sample
        let near = ek_distribution(&traj, EkSelect::AtTime(0.0501));
        let idx = traj
            .times_ps
            .iter()
            .position(|&t| (t - 0.05).abs() < 1e-12)
            .unwrap();
        assert_eq!(near[0].2, traj.occupations[idx][0]);
    }

    #[test]
    fn physical_matrix_satisfies_kms() {
        let setup = PolaritonSetup::melppp_cavity();
        let grid = build_mode_grid(&setup, 31, 3.0, Energy::mev(4.4), Energy::mev(60.0));
        let net = crate::extraction::LowFreqNet {
            gamma_inhom: Energy::mev(34.0),
            a1: Energy::mev(18.0),
            a2_mev2: 200.0,
            omega_m: Energy::inv_cm(200.0),
        };
        let sd = SpectralDensityModel::FlatA1(net);
        let tt = t(300.0);
        let m = thermalization_matrix_from_rates(&grid, &setup, &sd, tt).unwrap();
        let kbt = tt.thermal_energy_mev();
        for i in 0..31 {
            for j in (i + 1)..31 {
                let delta = grid.modes[j].omega_mev - grid.modes[i].omega_mev;
                if m[j][i] == 0.0 {
                    continue;
                }
                assert_relative_eq!(m[j][i] / m[i][j], (delta / kbt).exp(), max_relative = 1e-12);
            }
        }
    }
}
