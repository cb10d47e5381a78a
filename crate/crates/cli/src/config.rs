//! Run configuration: one TOML document with [molecule], [cavity], [net],
//! [rates], [simulation], [output] sections. Every energy key carries an
//! explicit unit suffix (_eV, _meV, _cm1, _K); unknown keys are rejected.

use poltherm_core::extraction::LowFreqNet;
use poltherm_core::spectra::{MolecularSystem, VibrationalMode};
use poltherm_core::{CavityConfig, Energy, PolaritonSetup};
use std::collections::BTreeSet;
use toml::value::{Table, Value};

use crate::CliError;

type EnergyCtor = fn(f64) -> Energy;

const ENERGY_SUFFIXES: [(&str, EnergyCtor); 4] = [
    ("_eV", Energy::ev),
    ("_meV", Energy::mev),
    ("_cm1", Energy::inv_cm),
    ("_K", Energy::kelvin_equivalent),
];

pub struct RunConfig {
    pub doc: Table,
    /// Normalized text of the document, embedded in output headers.
    pub source_text: String,
    pub source_name: String,
}

impl RunConfig {
    pub fn parse(text: &str, source_name: &str) -> Result<RunConfig, CliError> {
        let doc: Table = toml::from_str(text)
            .map_err(|e| CliError::Usage(format!("config parse error in {source_name}: {e}")))?;
        const KNOWN: [&str; 6] = ["molecule", "cavity", "net", "rates", "simulation", "output"];
        for key in doc.keys() {
            if !KNOWN.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "unknown section [{key}] in {source_name}"
                )));
            }
        }
        Ok(RunConfig {
            doc,
            source_text: text.to_string(),
            source_name: source_name.to_string(),
        })
    }

    pub fn section(&self, name: &str, subcommand: &str) -> Result<Section<'_>, CliError> {
        match self.doc.get(name) {
            Some(Value::Table(table)) => Ok(Section {
                name: name.to_string(),
                table,
                consumed: BTreeSet::new(),
            }),
            Some(_) => Err(CliError::Usage(format!("[{name}] must be a table"))),
            None => Err(CliError::Usage(format!(
                "missing required section [{name}] for subcommand '{subcommand}' in {}",
                self.source_name
            ))),
        }
    }

    pub fn optional_section(&self, name: &str) -> Option<Section<'_>> {
        match self.doc.get(name) {
            Some(Value::Table(table)) => Some(Section {
                name: name.to_string(),
                table,
                consumed: BTreeSet::new(),
            }),
            _ => None,
        }
    }
}

/// One config section with consumed-key tracking; call `finish()` after
/// extracting fields so leftovers are reported as unknown keys.
pub struct Section<'a> {
    name: String,
    table: &'a Table,
    consumed: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn err(&self, msg: String) -> CliError {
        CliError::Usage(format!("[{}] {msg}", self.name))
    }

    fn take_raw(&mut self, key: &str) -> Option<&'a Value> {
        let v = self.table.get(key);
        if v.is_some() {
            self.consumed.insert(key.to_string());
        }
        v
    }

    fn as_number(&self, key: &str, v: &Value) -> Result<f64, CliError> {
        match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(self.err(format!("key '{key}' must be a number"))),
        }
    }

    /// Energy field `base` with one unit-suffixed key, e.g. base_meV.
    pub fn energy_opt(&mut self, base: &str) -> Result<Option<Energy>, CliError> {
        let mut found: Option<(String, Energy)> = None;
        for (suffix, make) in ENERGY_SUFFIXES {
            let key = format!("{base}{suffix}");
            if let Some(v) = self.table.get(&key) {
                let value = self.as_number(&key, v)?;
                if let Some((prev, _)) = &found {
                    return Err(self.err(format!(
                        "energy '{base}' given twice ('{prev}' and '{key}')"
                    )));
                }
                self.consumed.insert(key.clone());
                found = Some((key, make(value)));
            }
        }
        Ok(found.map(|(_, e)| e))
    }

    pub fn energy(&mut self, base: &str) -> Result<Energy, CliError> {
        self.energy_opt(base)?.ok_or_else(|| {
            self.err(format!(
                "missing energy key '{base}' (expected one of {base}_eV/_meV/_cm1/_K)"
            ))
        })
    }

    pub fn number_opt(&mut self, key: &str) -> Result<Option<f64>, CliError> {
        match self.take_raw(key) {
            Some(v) => Ok(Some(self.as_number(key, v)?)),
            None => Ok(None),
        }
    }

    pub fn number(&mut self, key: &str) -> Result<f64, CliError> {
        self.number_opt(key)?
            .ok_or_else(|| self.err(format!("missing key '{key}'")))
    }

    pub fn number_or(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.number_opt(key)?.unwrap_or(default))
    }

    pub fn integer_or(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.number_opt(key)? {
            Some(v) if v >= 0.0 && v.fract() == 0.0 => Ok(v as usize),
            Some(_) => Err(self.err(format!("key '{key}' must be a non-negative integer"))),
            None => Ok(default),
        }
    }

    pub fn string_or(&mut self, key: &str, default: &str) -> Result<String, CliError> {
        match self.take_raw(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(self.err(format!("key '{key}' must be a string"))),
            None => Ok(default.to_string()),
        }
    }

    pub fn bool_or(&mut self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.take_raw(key) {
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(self.err(format!("key '{key}' must be a boolean"))),
            None => Ok(default),
        }
    }

    /// Array of numbers.
    pub fn numbers_opt(&mut self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self.take_raw(key) {
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| self.as_number(key, v))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(self.err(format!("key '{key}' must be an array of numbers"))),
            None => Ok(None),
        }
    }

    /// Vibrational mode list: array of inline tables with omega_<unit>,
    /// huang_rhys_sq, optional gamma_v_<unit>.
    pub fn modes(&mut self, key: &str) -> Result<Vec<VibrationalMode>, CliError> {
        let Some(v) = self.take_raw(key) else {
            return Err(self.err(format!("missing key '{key}'")));
        };
        let Value::Array(items) = v else {
            return Err(self.err(format!("key '{key}' must be an array of tables")));
        };
        let mut out = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let Value::Table(table) = item else {
                return Err(self.err(format!("{key}[{i}] must be a table")));
            };
            let mut sub = Section {
                name: format!("{}.{key}[{i}]", self.name),
                table,
                consumed: BTreeSet::new(),
            };
            let omega = sub.energy("omega")?;
            let lam2 = sub.number("huang_rhys_sq")?;
            let gamma_v = sub.energy_opt("gamma_v")?.unwrap_or(Energy::mev(0.0));
            sub.finish()?;
            out.push(
                VibrationalMode::new(omega, lam2, gamma_v)
                    .map_err(|e| CliError::Domain(e.to_string()))?,
            );
        }
        Ok(out)
    }

    pub fn finish(self) -> Result<(), CliError> {
        for key in self.table.keys() {
            if !self.consumed.contains(key) {
                return Err(CliError::Usage(format!(
                    "[{}] unknown key '{key}'",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

pub fn molecule_from(cfg: &RunConfig, subcommand: &str) -> Result<MolecularSystem, CliError> {
    let mut s = cfg.section("molecule", subcommand)?;
    let omega0 = s.energy("omega0")?;
    let gamma_inhom = s.energy("gamma_inhom")?;
    let gamma_diss = s.energy_opt("gamma_diss")?.unwrap_or(Energy::mev(0.0));
    let omega_m = s.energy("omega_M")?;
    let modes = s.modes("modes")?;
    s.finish()?;
    MolecularSystem::new(omega0, gamma_inhom, gamma_diss, modes, omega_m)
        .map_err(|e| CliError::Domain(e.to_string()))
}

pub fn cavity_from(cfg: &RunConfig, subcommand: &str) -> Result<PolaritonSetup, CliError> {
    let mut s = cfg.section("cavity", subcommand)?;
    let omega_cav0 = s.energy("omega_cav0")?;
    let omega0 = s.energy("omega0")?;
    let rabi = s.energy("rabi")?;
    let alpha_cav = s.number("alpha_cav_meV_um2")?;
    let area = s.number("area_um2")?;
    let n_mol = s.number("n_mol")?;
    s.finish()?;
    let cavity = CavityConfig::new(omega_cav0, alpha_cav, area)
        .map_err(|e| CliError::Domain(e.to_string()))?;
    PolaritonSetup::new(cavity, omega0, rabi, n_mol).map_err(|e| CliError::Domain(e.to_string()))
}

pub fn net_from(cfg: &RunConfig, subcommand: &str) -> Result<LowFreqNet, CliError> {
    let mut s = cfg.section("net", subcommand)?;
    let gamma_inhom = s.energy("gamma_inhom")?;
    let a1 = s.energy("A1")?;
    let a2 = s.number("A2_meV2")?;
    let omega_m = s.energy("omega_M")?;
    s.finish()?;
    if a1.as_mev() < 0.0 || a2 < 0.0 {
        return Err(CliError::Domain(
            "[net] A1 and A2 must be non-negative".into(),
        ));
    }
    Ok(LowFreqNet {
        gamma_inhom,
        a1,
        a2_mev2: a2,
        omega_m,
    })
}

/// Parse a temperature flag like "300", "300K", or "300.5 K".
pub fn parse_temperature_flag(text: &str) -> Result<poltherm_core::Temperature, CliError> {
    let trimmed = text.trim().trim_end_matches(['K', 'k']).trim();
    let kelvin: f64 = trimmed
        .parse()
        .map_err(|_| CliError::Usage(format!("cannot parse temperature '{text}'")))?;
    poltherm_core::Temperature::new(kelvin)
        .map_err(|e| CliError::Usage(format!("invalid temperature '{text}': {e}")))
}
