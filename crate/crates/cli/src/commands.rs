//! Subcommand implementations wiring the pipeline:
//! spectra → extract → dispersion/rates/map/ratevt → simulate/threshold,
//! plus `reproduce` for the bundled reference parameter set.

use std::path::PathBuf;

use poltherm_core::condensim::{
    build_mode_grid, ek_distribution, find_threshold, simulate, thermalization_matrix,
    thermalization_matrix_from_rates, EkSelect, Pump, ScatterParams, Seed, SimConfig,
};
use poltherm_core::extraction::{
    extract_net, locate_and_fit_00, stokes_shift, ExtractionReport, FitWindow, LowFreqNet,
};
use poltherm_core::rates::{
    energy_lattice_k_grid, high_t_estimate, high_t_regime_ok, low_t_estimates, rate_map,
    rate_vs_temperature, therm_rate_pair, SpectralDensityModel,
};
use poltherm_core::spectra::{
    absorption_exact, absorption_homogeneous, absorption_reduced, default_grid,
    effective_peak_params, emission_exact, emission_homogeneous, emission_reduced, MolecularSystem,
    SpectralCurve, Truncation,
};
use poltherm_core::{Energy, Temperature};

use crate::config::{cavity_from, molecule_from, net_from, parse_temperature_flag, RunConfig};
use crate::output::OutputDir;
use crate::{svg, CliError};

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: OutputDir,
    pub temperature_flag: Option<String>,
    pub seed: u64,
    pub svg: bool,
}

impl Ctx {
    fn temperature_or(&self, default_kelvin: f64) -> Result<Temperature, CliError> {
        match &self.temperature_flag {
            Some(text) => parse_temperature_flag(text),
            None => Ok(Temperature::new(default_kelvin).unwrap()),
        }
    }

    fn svg_enabled(&self) -> bool {
        if self.svg {
            return true;
        }
        self.cfg
            .optional_section("output")
            .and_then(|mut s| s.bool_or("svg", false).ok())
            .unwrap_or(false)
    }
}

fn domain<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Domain(e.to_string())
}

fn curve_rows(curves: &[&SpectralCurve]) -> Vec<Vec<f64>> {
    curves[0]
        .grid_mev()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut row = vec![e * 1e-3];
            for c in curves {
                row.push(c.intensity_per_mev()[i] * 1e3);
            }
            row
        })
        .collect()
}

// ── spectra ──────────────────────────────────────────────────────────────

pub fn cmd_spectra(ctx: &Ctx, model: &str) -> Result<(), CliError> {
    let sys = molecule_from(&ctx.cfg, "spectra")?;
    let t = ctx.temperature_or(300.0)?;
    let grid = default_grid(&sys);
    let trunc = Truncation::default();
    let kelvin = t.kelvin();
    let filename = |name: &str| format!("{name}_T{kelvin}K.csv");
    let models: Vec<&str> = match model {
        "all" => vec!["exact", "reduced"],
        m @ ("exact" | "reduced" | "homogeneous") => vec![m],
        other => {
            return Err(CliError::Usage(format!(
                "unknown spectra model '{other}' (exact|reduced|homogeneous|all)"
            )))
        }
    };
    for m in models {
        let (em, ab) = match m {
            "exact" => (
                emission_exact(&sys, t, &grid, trunc).map_err(domain)?,
                absorption_exact(&sys, t, &grid, trunc).map_err(domain)?,
            ),
            "reduced" => (
                emission_reduced(&sys, t, &grid, trunc).map_err(domain)?,
                absorption_reduced(&sys, t, &grid, trunc).map_err(domain)?,
            ),
            _ => (
                emission_homogeneous(&sys, t, &grid, trunc).map_err(domain)?,
                absorption_homogeneous(&sys, t, &grid, trunc).map_err(domain)?,
            ),
        };
        // one curve per file; the format round-trips through `extract --import-dir`
        let mut header = vec![format!("model = {m}")];
        header.extend(ctx.out.header().iter().cloned());
        ctx.out.write(
            &filename(&format!("spectra_{m}_emission")),
            &em.to_csv(&header),
        )?;
        ctx.out.write(
            &filename(&format!("spectra_{m}_absorption")),
            &ab.to_csv(&header),
        )?;
    }
    let (w_em, w_abs, g_em) = effective_peak_params(&sys, t).map_err(domain)?;
    println!(
        "effective 0-0 parameters at {kelvin} K: omega_em = {:.6} eV, omega_abs = {:.6} eV, gamma_em = {:.4} meV",
        w_em.as_ev(),
        w_abs.as_ev(),
        g_em.as_mev()
    );
    Ok(())
}

// ── extract ──────────────────────────────────────────────────────────────

fn parse_temp_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad temperature list entry '{s}'")))
        })
        .collect()
}

fn generate_series(
    sys: &MolecularSystem,
    temps: &[f64],
    exact_model: bool,
) -> Result<Vec<(Temperature, SpectralCurve, SpectralCurve)>, CliError> {
    let grid = default_grid(sys);
    let trunc = Truncation::default();
    temps
        .iter()
        .map(|&kelvin| {
            let t = Temperature::new(kelvin).map_err(domain)?;
            let (em, ab) = if exact_model {
                (
                    emission_exact(sys, t, &grid, trunc).map_err(domain)?,
                    absorption_exact(sys, t, &grid, trunc).map_err(domain)?,
                )
            } else {
                (
                    emission_reduced(sys, t, &grid, trunc).map_err(domain)?,
                    absorption_reduced(sys, t, &grid, trunc).map_err(domain)?,
                )
            };
            Ok((t, em, ab))
        })
        .collect()
}

fn import_series(
    dir: &PathBuf,
) -> Result<Vec<(Temperature, SpectralCurve, SpectralCurve)>, CliError> {
    let mut emissions = Vec::new();
    let mut absorptions = Vec::new();
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::Usage(format!("reading {}: {e}", dir.display())))?
            .path();
        if path.extension().and_then(|s| s.to_str()) != Some("csv") {
            continue;
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))?;
        let curve = SpectralCurve::from_csv(&text).map_err(domain)?;
        match curve.kind {
            poltherm_core::SpectrumKind::Emission => emissions.push(curve),
            poltherm_core::SpectrumKind::Absorption => absorptions.push(curve),
        }
    }
    let mut series = Vec::new();
    for em in emissions {
        let t = em.temperature;
        let Some(idx) = absorptions
            .iter()
            .position(|ab| (ab.temperature.kelvin() - t.kelvin()).abs() < 1e-6)
        else {
            return Err(CliError::Domain(format!(
                "no absorption curve found for the emission curve at {} K",
                t.kelvin()
            )));
        };
        series.push((t, em, absorptions.swap_remove(idx)));
    }
    if series.is_empty() {
        return Err(CliError::Domain(format!(
            "no emission/absorption CSV pairs found in {}",
            dir.display()
        )));
    }
    series.sort_by(|a, b| a.0.kelvin().total_cmp(&b.0.kelvin()));
    Ok(series)
}

pub fn cmd_extract(
    ctx: &Ctx,
    temps: Option<&str>,
    import_dir: Option<&PathBuf>,
    series_model: &str,
) -> Result<(), CliError> {
    let series = match import_dir {
        Some(dir) => import_series(dir)?,
        None => {
            let sys = molecule_from(&ctx.cfg, "extract")?;
            let temps = parse_temp_list(temps.unwrap_or("6,50,100,200,300,400"))?;
            let exact_model = match series_model {
                "exact" => true,
                "reduced" => false,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown series model '{other}' (exact|reduced)"
                    )))
                }
            };
            generate_series(&sys, &temps, exact_model)?
        }
    };
    let omega_m = match ctx.cfg.optional_section("molecule") {
        Some(mut s) => s.energy("omega_M")?,
        None => Energy::inv_cm(200.0),
    };
    // temperature-series work uses the tight window so replica leakage does
    // not drift with the peak width
    let (net, report) = extract_net(&series, omega_m, FitWindow::SERIES).map_err(domain)?;
    write_extraction_outputs(ctx, &net, &report, "extract")?;
    Ok(())
}

fn write_extraction_outputs(
    ctx: &Ctx,
    net: &LowFreqNet,
    report: &ExtractionReport,
    prefix: &str,
) -> Result<(), CliError> {
    let mut body = String::new();
    for line in ctx.out.header() {
        body.push_str(&format!("# {line}\n"));
    }
    body.push_str(&net.to_kv());
    ctx.out.write(&format!("{prefix}_net.txt"), &body)?;
    ctx.out.write_csv(
        &format!("{prefix}_stokes_vs_T.csv"),
        &[],
        &["T_K", "stokes_meV"],
        report.per_temperature.iter().map(|(t, s, _)| vec![*t, *s]),
    )?;
    ctx.out.write_csv(
        &format!("{prefix}_linewidth_vs_T.csv"),
        &[],
        &["T_K", "gamma_em_meV", "gamma_em_sq_meV2"],
        report
            .per_temperature
            .iter()
            .map(|(t, _, s2)| vec![*t, s2.sqrt(), *s2]),
    )?;
    println!(
        "extracted: Gamma = {:.3} meV, A1 = {:.3} meV, A2 = {:.2} meV^2 (omega_M = {:.3} meV)",
        net.gamma_inhom.as_mev(),
        net.a1.as_mev(),
        net.a2_mev2,
        net.omega_m.as_mev()
    );
    println!(
        "high-T regression slope = {:.3} meV vs Stokes shift: {:.1}% deviation{}",
        report.slope_mev,
        100.0 * report.slope_vs_stokes_deviation,
        if report.slope_warning {
            " — WARNING: exceeds 10%"
        } else {
            ""
        }
    );
    Ok(())
}

// ── dispersion ───────────────────────────────────────────────────────────

pub fn cmd_dispersion(ctx: &Ctx, kmax: f64, points: usize) -> Result<(), CliError> {
    let setup = cavity_from(&ctx.cfg, "dispersion")?;
    let rows = (0..points).map(move |i| {
        let k = kmax * i as f64 / (points.max(2) - 1) as f64;
        let (lo, up) = setup.branch_energies(k);
        vec![k, lo.as_ev(), up.as_ev(), setup.excitonic_fraction(k)]
    });
    ctx.out.write_csv(
        "dispersion.csv",
        &[
            format!("alpha_pol_meV_um2 = {:.9}", setup.alpha_pol()),
            format!(
                "delta_omega_min_meV = {:.9}",
                setup.delta_omega_min().as_mev()
            ),
        ],
        &["k_um1", "omega_low_eV", "omega_up_eV", "sin2phi"],
        rows,
    )?;
    Ok(())
}

// ── rates (single pair) ──────────────────────────────────────────────────

fn density_from(name: &str, net: LowFreqNet) -> Result<SpectralDensityModel, CliError> {
    match name {
        "flat_a1" => Ok(SpectralDensityModel::FlatA1(net)),
        "flat_a2" => Ok(SpectralDensityModel::FlatA2(net)),
        other => Err(CliError::Usage(format!(
            "unknown spectral density '{other}' (flat_a1|flat_a2)"
        ))),
    }
}

pub fn cmd_rates(ctx: &Ctx, k: f64, k_prime: f64, density: &str) -> Result<(), CliError> {
    let setup = cavity_from(&ctx.cfg, "rates")?;
    let net = net_from(&ctx.cfg, "rates")?;
    let t = ctx.temperature_or(default_rates_temperature(&ctx.cfg)?)?;
    let sd = density_from(density, net)?;
    let pair = therm_rate_pair(&setup, &sd, k, k_prime, t).map_err(domain)?;
    let delta = setup.omega_low(k).as_mev() - setup.omega_low(k_prime).as_mev();
    println!(
        "pair k = {k} 1/um -> k' = {k_prime} 1/um at T = {} K (delta_omega = {delta:.6} meV{})",
        t.kelvin(),
        if pair.out_of_band {
            ", out of band"
        } else {
            ""
        }
    );
    println!(
        "  gamma_down = {:.6e} eV = {:.6e} 1/ps",
        pair.gamma_down.as_ev(),
        pair.gamma_down.as_rate_per_ps()
    );
    println!(
        "  gamma_up   = {:.6e} eV = {:.6e} 1/ps",
        pair.gamma_up.as_ev(),
        pair.gamma_up.as_rate_per_ps()
    );
    let est = high_t_estimate(&setup, &net, t);
    println!(
        "  high-T nearest-neighbor estimate: {:.6e} eV{}",
        est.as_ev(),
        if high_t_regime_ok(&net, t) {
            ""
        } else {
            " (WARNING: kBT < 3 omega_M, outside the high-T regime)"
        }
    );
    let low = low_t_estimates(&setup, &net, setup.delta_omega_min(), t).map_err(domain)?;
    println!(
        "  low-T estimate at delta_omega_min: down {:.6e} eV, up {:.6e} eV",
        low.gamma_down.as_ev(),
        low.gamma_up.as_ev()
    );
    Ok(())
}

fn default_rates_temperature(cfg: &RunConfig) -> Result<f64, CliError> {
    match cfg.optional_section("rates") {
        Some(mut s) => s.number_or("T_K", 300.0),
        None => Ok(300.0),
    }
}

// ── map ──────────────────────────────────────────────────────────────────

fn linspace(spec: &[f64], what: &str) -> Result<Vec<f64>, CliError> {
    if spec.len() != 3 || spec[2] < 2.0 || spec[2].fract() != 0.0 {
        return Err(CliError::Usage(format!(
            "{what} must be [min, max, n] with integer n >= 2"
        )));
    }
    let n = spec[2] as usize;
    Ok((0..n)
        .map(|i| spec[0] + (spec[1] - spec[0]) * i as f64 / (n - 1) as f64)
        .collect())
}

pub fn cmd_map(ctx: &Ctx, prefix: &str) -> Result<(), CliError> {
    let setup = cavity_from(&ctx.cfg, "map")?;
    let net = net_from(&ctx.cfg, "map")?;
    let (rabi, low0_ev, kelvin) = match ctx.cfg.optional_section("rates") {
        Some(mut s) => {
            let rabi = s
                .numbers_opt("map_rabi_meV")?
                .unwrap_or(vec![20.0, 85.0, 14.0]);
            let low0 = s
                .numbers_opt("map_omega_low0_eV")?
                .unwrap_or(vec![2.54, 2.62, 9.0]);
            let t = s.number_or("T_K", 300.0)?;
            (rabi, low0, t)
        }
        None => (vec![20.0, 85.0, 14.0], vec![2.54, 2.62, 9.0], 300.0),
    };
    let t = ctx.temperature_or(kelvin)?;
    let rabi = linspace(&rabi, "[rates] map_rabi_meV")?;
    let low0: Vec<f64> = linspace(&low0_ev, "[rates] map_omega_low0_eV")?
        .iter()
        .map(|ev| ev * 1e3)
        .collect();
    let map = rate_map(&setup, &net, &rabi, &low0, t).map_err(domain)?;
    let mut columns: Vec<String> = vec!["omega_low0_eV".to_string()];
    columns.extend(map.rabi_mev.iter().map(|r| format!("rabi_{r:.3}_meV")));
    let col_refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    ctx.out.write_csv(
        &format!("{prefix}rate_map.csv"),
        &[
            format!("temperature_K = {}", t.kelvin()),
            "cell value: gamma_down (eV) for the nearest-neighbor pair".to_string(),
        ],
        &col_refs,
        map.omega_low0_mev.iter().enumerate().map(|(i, l)| {
            let mut row = vec![l * 1e-3];
            row.extend(map.gamma_down_mev[i].iter().map(|g| g * 1e-3));
            row
        }),
    )?;
    if ctx.svg_enabled() {
        let values_ev: Vec<Vec<f64>> = map
            .gamma_down_mev
            .iter()
            .map(|row| row.iter().map(|g| g * 1e-3).collect())
            .collect();
        let doc = svg::heatmap(
            "nearest-neighbor thermalization rate (eV)",
            "rabi (meV)",
            "omega_low0 (meV)",
            &map.rabi_mev,
            &map.omega_low0_mev,
            &values_ev,
        );
        ctx.out.write(&format!("{prefix}rate_map.svg"), &doc)?;
    }
    Ok(())
}

// ── ratevt ───────────────────────────────────────────────────────────────

pub fn cmd_ratevt(ctx: &Ctx, prefix: &str) -> Result<(), CliError> {
    let setup = cavity_from(&ctx.cfg, "ratevt")?;
    let net = net_from(&ctx.cfg, "ratevt")?;
    let (temps, levels) = match ctx.cfg.optional_section("rates") {
        Some(mut s) => (
            s.numbers_opt("ratevt_T_K")?
                .unwrap_or(vec![6.0, 50.0, 100.0, 200.0, 300.0, 400.0]),
            s.integer_or("ratevt_levels", 120)?,
        ),
        None => (vec![6.0, 50.0, 100.0, 200.0, 300.0, 400.0], 120),
    };
    let sd = SpectralDensityModel::FlatA1(net);
    let k_grid = energy_lattice_k_grid(&setup, levels);
    let t_grid: Vec<Temperature> = temps
        .iter()
        .map(|&t| Temperature::new(t).map_err(domain))
        .collect::<Result<_, _>>()?;
    let rvt = rate_vs_temperature(&setup, &sd, &k_grid, &t_grid).map_err(domain)?;
    let mut columns: Vec<String> = vec!["T_K".to_string()];
    columns.extend(rvt.k_values.iter().map(|k| format!("k_{k:.4}_um1")));
    let col_refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    for (name, matrix) in [
        ("gamma_up", &rvt.gamma_up_mev),
        ("gamma_down", &rvt.gamma_down_mev),
    ] {
        ctx.out.write_csv(
            &format!("{prefix}rate_vs_T_{name}.csv"),
            &["cell value: rate (eV); k' = 0 fixed".to_string()],
            &col_refs,
            rvt.t_values.iter().enumerate().map(|(i, t)| {
                let mut row = vec![*t];
                row.extend(matrix[i].iter().map(|g| g * 1e-3));
                row
            }),
        )?;
    }
    ctx.out.write_csv(
        &format!("{prefix}thermalization_length.csv"),
        &["states with gamma_up within 1/e of the nearest-neighbor rate".to_string()],
        &["T_K", "n_states"],
        rvt.t_values
            .iter()
            .zip(&rvt.therm_length)
            .map(|(t, n)| vec![*t, *n as f64]),
    )?;
    Ok(())
}

// ── simulate / threshold ─────────────────────────────────────────────────

struct SimSpec {
    cfg: SimConfig,
    pump_relative: Option<f64>,
    seed_amplitude: f64,
}

fn sim_from(ctx: &Ctx, subcommand: &str) -> Result<SimSpec, CliError> {
    let setup = cavity_from(&ctx.cfg, subcommand)?;
    let mut s = ctx.cfg.section("simulation", subcommand)?;
    let kelvin = s.number_or("T_K", 300.0)?;
    let t = Temperature::new(kelvin).map_err(domain)?;
    let gamma_therm = s.energy("gamma_therm")?;
    let therm_kind = s.string_or("thermalization", "constant")?;
    let n_modes = s.integer_or("n_modes", 31)?;
    let k_max = s.number_or("k_max_um1", 3.0)?;
    let gamma_cav = s.energy("gamma_cav")?;
    let gamma_exc = s.energy("gamma_exc")?;
    let omega_vib = s.energy("omega_vib")?;
    let gamma_vib = s.energy("gamma_vib")?;
    let g = s.energy("g")?;
    let gamma0 = s.energy_opt("gamma0")?;
    let pump_amplitude = s.energy_opt("pump_amplitude")?;
    let pump_relative = s.number_opt("pump_relative")?;
    let pump_t0 = s.number_or("pump_t0_ps", 1.0)?;
    let pump_fwhm = s.number_or("pump_fwhm_ps", 0.2)?;
    let seed_amplitude = s.energy_opt("seed_amplitude")?.unwrap_or(Energy::mev(0.0));
    let k_seed = s.number_or("k_seed_um1", 2.55)?;
    let seed_sigma_k = s.number_or("seed_sigma_k_um1", 0.2)?;
    let seed_t0 = s.number_or("seed_t0_ps", pump_t0)?;
    let seed_fwhm = s.number_or("seed_fwhm_ps", 0.2)?;
    let dt = s.number_or("dt_ps", 5e-4)?;
    let t_end = s.number_or("t_end_ps", 10.0)?;
    let stride = s.integer_or("save_stride", 10)?;
    s.finish()?;

    let grid = build_mode_grid(&setup, n_modes, k_max, gamma_cav, gamma_exc);
    let matrix = match therm_kind.as_str() {
        "constant" => thermalization_matrix(&grid, gamma_therm, t),
        "physical" => {
            let net = net_from(&ctx.cfg, subcommand)?;
            thermalization_matrix_from_rates(&grid, &setup, &SpectralDensityModel::FlatA1(net), t)
                .map_err(domain)?
        }
        other => {
            return Err(CliError::Usage(format!(
                "[simulation] unknown thermalization '{other}' (constant|physical)"
            )))
        }
    };
    let mut scatter = ScatterParams::vibron_defaults();
    scatter.omega_vib = omega_vib;
    scatter.gamma_vib = gamma_vib;
    scatter.g = g;
    scatter.gamma0 = gamma0.unwrap_or(Energy::mev(g.as_mev() * g.as_mev() / gamma_vib.as_mev()));

    let mut cfg = SimConfig::new(grid, matrix, scatter);
    cfg.pump = Pump {
        amplitude_mev: pump_amplitude.map(|e| e.as_mev()).unwrap_or(0.0),
        t0_ps: pump_t0,
        fwhm_ps: pump_fwhm,
    };
    if seed_amplitude.as_mev() > 0.0 {
        cfg.seed = Some(Seed {
            amplitude_mev: seed_amplitude.as_mev(),
            k_center: k_seed,
            sigma_k: seed_sigma_k,
            t0_ps: seed_t0,
            fwhm_ps: seed_fwhm,
        });
    }
    cfg.dt_ps = dt;
    cfg.t_end_ps = t_end;
    cfg.save_stride = stride;
    if pump_amplitude.is_some() && pump_relative.is_some() {
        return Err(CliError::Usage(
            "[simulation] give either pump_amplitude or pump_relative, not both".into(),
        ));
    }
    Ok(SimSpec {
        cfg,
        pump_relative,
        seed_amplitude: seed_amplitude.as_mev(),
    })
}

/// Deterministic bracket jitter derived from --seed (splitmix-style hash).
fn bracket_with_jitter(seed: u64) -> (f64, f64) {
    let mut x = seed.wrapping_add(0x9e3779b97f4a7c15);
    let mut next = || {
        x ^= x >> 30;
        x = x.wrapping_mul(0xbf58476d1ce4e5b9);
        x ^= x >> 27;
        (x as f64 / u64::MAX as f64) * 2.0 - 1.0
    };
    let lo = 1e5 * (1.0 + 0.03 * next());
    let hi = 1e10 * (1.0 + 0.03 * next());
    (lo, hi)
}

fn resolve_pump(spec: &SimSpec, seed: u64) -> Result<(SimConfig, Option<f64>), CliError> {
    let mut cfg = spec.cfg.clone();
    match spec.pump_relative {
        Some(rel) => {
            let mut probe = cfg.clone();
            probe.t_end_ps = probe.t_end_ps.min(4.0);
            let th = find_threshold(&probe, bracket_with_jitter(seed)).map_err(domain)?;
            cfg.pump.amplitude_mev = rel * th.p_th_mev;
            Ok((cfg, Some(th.p_th_mev)))
        }
        None => Ok((cfg, None)),
    }
}

fn write_trajectory(
    ctx: &Ctx,
    name: &str,
    traj: &poltherm_core::SimTrajectory,
) -> Result<(), CliError> {
    let n = traj.grid.modes.len();
    let mut columns: Vec<String> = vec!["t_ps".to_string(), "n_P".to_string()];
    columns.extend((0..n).map(|i| format!("n_{i}")));
    let col_refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    ctx.out.write_csv(
        name,
        &[],
        &col_refs,
        traj.times_ps.iter().enumerate().map(|(s, t)| {
            let mut row = vec![*t, traj.reservoir[s]];
            row.extend(traj.occupations[s].iter().copied());
            row
        }),
    )?;
    Ok(())
}

fn write_ek(ctx: &Ctx, name: &str, traj: &poltherm_core::SimTrajectory) -> Result<(), CliError> {
    let t_end = *traj.times_ps.last().expect("trajectory has samples");
    let final_dist = ek_distribution(traj, EkSelect::AtTime(t_end));
    let integ = ek_distribution(traj, EkSelect::TimeIntegrated);
    ctx.out.write_csv(
        name,
        &[],
        &[
            "k_um1",
            "omega_eV",
            "occupation_final",
            "occupation_integrated_ps",
        ],
        final_dist
            .iter()
            .zip(&integ)
            .map(|(f, i)| vec![f.0, f.1 * 1e-3, f.2, i.2]),
    )?;
    Ok(())
}

pub fn cmd_simulate(ctx: &Ctx, prefix: &str) -> Result<(), CliError> {
    let spec = sim_from(ctx, "simulate")?;
    let (cfg, p_th) = resolve_pump(&spec, ctx.seed)?;
    if let Some(p) = p_th {
        println!(
            "threshold: P_th = {p:.6e} meV; running at {:.3} P_th",
            cfg.pump.amplitude_mev / p
        );
    }
    let traj = simulate(&cfg).map_err(domain)?;
    write_trajectory(ctx, &format!("{prefix}trajectory.csv"), &traj)?;
    write_ek(ctx, &format!("{prefix}ek_distribution.csv"), &traj)?;
    if ctx.svg_enabled() {
        let integ = ek_distribution(&traj, EkSelect::TimeIntegrated);
        let doc = svg::ek_plot("time-integrated polariton occupation", &integ);
        ctx.out
            .write(&format!("{prefix}ek_distribution.svg"), &doc)?;
    }
    Ok(())
}

pub fn cmd_threshold(ctx: &Ctx) -> Result<(), CliError> {
    let spec = sim_from(ctx, "threshold")?;
    let mut probe = spec.cfg.clone();
    probe.seed = None;
    probe.t_end_ps = probe.t_end_ps.min(4.0);
    let th = find_threshold(&probe, bracket_with_jitter(ctx.seed)).map_err(domain)?;
    let mut body = String::new();
    for line in ctx.out.header() {
        body.push_str(&format!("# {line}\n"));
    }
    body.push_str(&format!(
        "p_th_meV = {:.9e}\np_th_eV = {:.9e}\nknee_sharpness = {:.6}\n",
        th.p_th_mev,
        th.p_th_mev * 1e-3,
        th.knee_sharpness
    ));
    ctx.out.write("threshold.txt", &body)?;
    ctx.out.write_csv(
        "threshold_scan.csv",
        &[],
        &["pump_amplitude_meV", "peak_n0"],
        th.scan.iter().map(|(a, p)| vec![*a, *p]),
    )?;
    println!(
        "P_th = {:.6e} meV (knee sharpness {:.2})",
        th.p_th_mev, th.knee_sharpness
    );
    Ok(())
}

// ── reproduce ────────────────────────────────────────────────────────────

pub fn cmd_reproduce(ctx: &Ctx, figure: &str) -> Result<(), CliError> {
    match figure {
        "fig1" => reproduce_fig1(ctx),
        "fig2" => reproduce_fig2(ctx),
        "fig3" => cmd_map(ctx, "fig3_"),
        "fig4" => cmd_ratevt(ctx, "fig4_"),
        "fig5" => reproduce_fig5(ctx),
        other => Err(CliError::Usage(format!(
            "unknown figure '{other}' (fig1|fig2|fig3|fig4|fig5)"
        ))),
    }
}

fn reproduce_fig1(ctx: &Ctx) -> Result<(), CliError> {
    let sys = molecule_from(&ctx.cfg, "reproduce fig1")?;
    let nolow = sys.without_low_modes();
    let grid = default_grid(&sys);
    let trunc = Truncation::default();
    for kelvin in [6.0, 300.0] {
        let t = Temperature::new(kelvin).unwrap();
        for (tag, system, reduced) in [
            ("exact", &sys, false),
            ("reduced", &sys, true),
            ("nolow", &nolow, false),
        ] {
            let (em, ab) = if reduced {
                (
                    emission_reduced(system, t, &grid, trunc).map_err(domain)?,
                    absorption_reduced(system, t, &grid, trunc).map_err(domain)?,
                )
            } else {
                (
                    emission_exact(system, t, &grid, trunc).map_err(domain)?,
                    absorption_exact(system, t, &grid, trunc).map_err(domain)?,
                )
            };
            ctx.out.write_csv(
                &format!("fig1_{tag}_{kelvin}K.csv"),
                &[
                    format!("model = {tag}"),
                    format!("temperature_K = {kelvin}"),
                ],
                &["energy_eV", "emission_per_eV", "absorption_per_eV"],
                curve_rows(&[&em, &ab]).into_iter(),
            )?;
        }
    }
    Ok(())
}

fn reproduce_fig2(ctx: &Ctx) -> Result<(), CliError> {
    let sys = molecule_from(&ctx.cfg, "reproduce fig2")?;
    let temps = [
        6.0, 25.0, 50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0,
    ];
    let series = generate_series(&sys, &temps, false)?;
    let mut stokes_rows = Vec::new();
    let mut width_rows = Vec::new();
    for (t, em, ab) in &series {
        let s = stokes_shift(em, ab, FitWindow::SERIES).map_err(domain)?;
        let fit = locate_and_fit_00(em, FitWindow::SERIES).map_err(domain)?;
        stokes_rows.push(vec![t.kelvin(), s.as_mev()]);
        width_rows.push(vec![
            t.kelvin(),
            fit.sigma.as_mev(),
            fit.sigma.as_mev().powi(2),
        ]);
    }
    ctx.out.write_csv(
        "fig2_stokes_vs_T.csv",
        &["reduced-model series; tight-window 0-0 fits".to_string()],
        &["T_K", "stokes_meV"],
        stokes_rows.into_iter(),
    )?;
    ctx.out.write_csv(
        "fig2_linewidth_vs_T.csv",
        &["reduced-model series; tight-window 0-0 fits".to_string()],
        &["T_K", "gamma_em_meV", "gamma_em_sq_meV2"],
        width_rows.into_iter(),
    )?;
    Ok(())
}

fn reproduce_fig5(ctx: &Ctx) -> Result<(), CliError> {
    let spec = sim_from(ctx, "reproduce fig5")?;
    let (mut cfg, p_th) = resolve_pump(&spec, ctx.seed)?;
    if let Some(p) = p_th {
        let mut body = String::new();
        for line in ctx.out.header() {
            body.push_str(&format!("# {line}\n"));
        }
        body.push_str(&format!("p_th_meV = {p:.9e}\n"));
        ctx.out.write("fig5_threshold.txt", &body)?;
    }
    // unseeded: ground-state run
    cfg.seed = None;
    let unseeded = simulate(&cfg).map_err(domain)?;
    write_trajectory(ctx, "fig5_unseeded_trajectory.csv", &unseeded)?;
    write_ek(ctx, "fig5_unseeded_ek.csv", &unseeded)?;
    // seeded: excited-state run at k_seed
    let amp = if spec.seed_amplitude > 0.0 {
        spec.seed_amplitude
    } else {
        1e4
    };
    cfg.seed = Some(Seed {
        amplitude_mev: amp,
        k_center: 2.55,
        sigma_k: 0.2,
        t0_ps: cfg.pump.t0_ps,
        fwhm_ps: 0.2,
    });
    let seeded = simulate(&cfg).map_err(domain)?;
    write_trajectory(ctx, "fig5_seeded_trajectory.csv", &seeded)?;
    write_ek(ctx, "fig5_seeded_ek.csv", &seeded)?;
    if ctx.svg_enabled() {
        for (name, traj) in [
            ("fig5_unseeded_ek.svg", &unseeded),
            ("fig5_seeded_ek.svg", &seeded),
        ] {
            let integ = ek_distribution(traj, EkSelect::TimeIntegrated);
            ctx.out.write(
                name,
                &svg::ek_plot("time-integrated polariton occupation", &integ),
            )?;
        }
    }
    Ok(())
}
