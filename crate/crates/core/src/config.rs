//! JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::blowup::BForm;
use crate::dynamics::{Controls, Params, Profile, State};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::littlewood_paley::BesovSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamsMode {
    CaseI,
    CaseIi,
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub mode: ParamsMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k3: Option<f64>,
}

impl ParamsConfig {
    pub fn resolve(&self) -> Result<Params> {
        match self.mode {
            ParamsMode::CaseI | ParamsMode::CaseIi => {
                if self.k1.is_some() || self.k2.is_some() || self.k3.is_some() {
                    return Err(Error::Config("k1/k2/k3 are only read in raw mode".into()));
                }
                let b = self
                    .b
                    .ok_or_else(|| Error::Config("params.b is required for case_i and case_ii".into()))?;
                if self.mode == ParamsMode::CaseI {
                    Params::case_i(b)
                } else {
                    Params::case_ii(b)
                }
            }
            ParamsMode::Raw => {
                if self.b.is_some() {
                    return Err(Error::Config("params.b is not used in raw mode".into()));
                }
                match (self.k1, self.k2, self.k3) {
                    (Some(k1), Some(k2), Some(k3)) => Params::new(k1, k2, k3),
                    _ => Err(Error::Config("raw mode requires k1, k2 and k3".into())),
                }
            }
        }
    }
}

fn profile<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Profile, D::Error> {
    let value = serde_json::Value::deserialize(d)?;
    Profile::from_json(&value).map_err(serde::de::Error::custom)
}

fn zero_profile() -> Profile {
    Profile::Zero
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(deserialize_with = "profile")]
    pub u: Profile,
    #[serde(deserialize_with = "profile", default = "zero_profile")]
    pub rho: Profile,
}

fn default_cfl() -> f64 {
    0.3
}

fn default_sample_every() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
}

fn default_energy_n() -> u8 {
    1
}

fn default_threshold() -> f64 {
    1e3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorsConfig {
    #[serde(default = "default_energy_n")]
    pub energy_n: u8,
    #[serde(default = "default_threshold")]
    pub blowup_threshold: f64,
    #[serde(default)]
    pub b_form: BForm,
    /// A priori bound on `|rho|`; measured when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_bound: Option<f64>,
}

impl Default for MonitorsConfig {
    fn default() -> Self {
        Self {
            energy_n: default_energy_n(),
            blowup_threshold: default_threshold(),
            b_form: BForm::default(),
            m_bound: None,
        }
    }
}

fn default_s() -> f64 {
    1.5
}

fn default_p() -> f64 {
    2.0
}

fn default_r() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesovConfig {
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_p", with = "crate::littlewood_paley::exponent")]
    pub p: f64,
    #[serde(default = "default_r", with = "crate::littlewood_paley::exponent")]
    pub r: f64,
    /// Field CSV to analyse instead of `init.u`; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<PathBuf>,
    /// Column of `field` to read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}

impl Default for BesovConfig {
    fn default() -> Self {
        Self {
            s: default_s(),
            p: default_p(),
            r: default_r(),
            field: None,
            column: None,
        }
    }
}

fn default_n_max() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardConfig {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { n_max: default_n_max() }
    }
}

fn default_substeps() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacteristicsConfig {
    /// RK4 steps per stored time interval.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

impl Default for CharacteristicsConfig {
    fn default() -> Self {
        Self {
            substeps: default_substeps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub params: ParamsConfig,
    pub init: InitConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub monitors: MonitorsConfig,
    #[serde(default)]
    pub besov: BesovConfig,
    #[serde(default)]
    pub picard: PicardConfig,
    #[serde(default)]
    pub characteristics: CharacteristicsConfig,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json_str(&text)?;
        if let (Some(field), Some(dir)) = (cfg.besov.field.as_mut(), path.parent()) {
            if field.is_relative() {
                *field = dir.join(&*field);
            }
        }
        Ok(cfg)
    }

    /// Cross-field checks, run before any computation.
    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.params.resolve()?;
        self.init.u.validate()?;
        self.init.rho.validate()?;
        let t = &self.time;
        if !(t.t_end > 0.0 && t.t_end.is_finite()) {
            return Err(Error::Config("time.T must be positive".into()));
        }
        if !(t.cfl_safety > 0.0 && t.cfl_safety <= 1.0) {
            return Err(Error::Config("time.cfl_safety must lie in (0, 1]".into()));
        }
        if t.sample_every == 0 {
            return Err(Error::Config("time.sample_every must be at least 1".into()));
        }
        let m = &self.monitors;
        if m.energy_n != 1 && m.energy_n != 2 {
            return Err(Error::Config("monitors.energy_n must be 1 or 2".into()));
        }
        if !(m.blowup_threshold > 0.0) {
            return Err(Error::Config("monitors.blowup_threshold must be positive".into()));
        }
        if m.m_bound.is_some_and(|v| !(v >= 0.0)) {
            return Err(Error::Config("monitors.m_bound must be nonnegative".into()));
        }
        self.besov_spec()?;
        if self.picard.n_max == 0 {
            return Err(Error::Config("picard.n_max must be at least 1".into()));
        }
        if self.characteristics.substeps == 0 {
            return Err(Error::Config("characteristics.substeps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.domain.length, self.domain.n).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolved_params(&self) -> Result<Params> {
        self.params.resolve()
    }

    pub fn controls(&self) -> Controls {
        Controls {
            cfl_safety: self.time.cfl_safety,
            sample_every: self.time.sample_every,
            blowup_threshold: self.monitors.blowup_threshold,
        }
    }

    pub fn besov_spec(&self) -> Result<BesovSpec> {
        BesovSpec::new(self.besov.s, self.besov.p, self.besov.r)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn initial_state(&self, grid: &Grid) -> Result<State> {
        let u: Field = self.init.u.sample(grid)?;
        let rho = self.init.rho.sample(grid)?;
        State::new(0.0, u, rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "domain": {"L": 40.0, "N": 64},
        "params": {"mode": "case_i", "b": 2.0},
        "init": {"u": {"kind": "gaussian", "amplitude": 1.0}},
        "time": {"T": 0.5}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_json_str(BASE).unwrap();
        assert_eq!(cfg.time.cfl_safety, 0.3);
        assert_eq!(cfg.monitors.blowup_threshold, 1e3);
        assert_eq!(cfg.init.rho, Profile::Zero);
        assert_eq!(cfg.resolved_params().unwrap(), Params::case_i(2.0).unwrap());
        assert_eq!(cfg.besov_spec().unwrap(), BesovSpec::new(1.5, 2.0, 1.0).unwrap());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::from_json_str(BASE).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), cfg);
    }

    #[test]
    fn cross_field_checks() {
        let swap = |from: &str, to: &str| RunConfig::from_json_str(&BASE.replace(from, to));
        assert!(swap(r#""b": 2.0"#, r#""k1": 2.0"#).is_err());
        assert!(swap(r#""mode": "case_i", "b": 2.0"#, r#""mode": "raw", "k1": 1, "k2": 1"#).is_err());
        assert!(swap(r#""mode": "case_i", "b": 2.0"#, r#""mode": "raw", "k1": 1, "k2": 1, "k3": 1"#).is_ok());
        assert!(swap(r#""N": 64"#, r#""N": 63"#).is_err());
        assert!(swap(r#""T": 0.5"#, r#""T": -1"#).is_err());
        assert!(swap("gaussian", "soliton").is_err());
        assert!(swap(r#""time""#, r#""tiem""#).is_err());
    }
}
