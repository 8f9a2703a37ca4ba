//! Run configuration: TOML parsing, validation and serialization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{EmpiricalOverrides, ProfileKind, ProfileSpec, DEFAULT_BETA, DEFAULT_SPECIAL_STEPS};
use crate::exclusion::{ExclusionMode, ProfileRule, MIN_CELL_WIDTH, MIN_SAMPLES};
use crate::map::DriveFunction;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveKind {
    #[default]
    Sine,
    Fourier,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub kind: DriveKind,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cos: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sin: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileChoice {
    #[default]
    PaperAsymptotic,
    Empirical,
    ScaledEmpirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub kind: ProfileChoice,
    pub beta: f64,
    /// `λ/100` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub special_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Reference `L` at which `sigma`, `delta0`, `delta` apply (scaled-empirical).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_ref: Option<f64>,
    /// Thresholds scale as `(L / l_ref)^(-exponent)` (scaled-empirical).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            kind: ProfileChoice::PaperAsymptotic,
            beta: DEFAULT_BETA,
            alpha: None,
            special_steps: DEFAULT_SPECIAL_STEPS,
            sigma: None,
            delta0: None,
            delta: None,
            lambda: None,
            l_ref: None,
            exponent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,
    pub mode: ExclusionMode,
    pub strict: bool,
    pub l: f64,
    /// Sweep values; `l` is used alone when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_list: Option<Vec<f64>>,
    pub n_max: usize,
    pub samples: usize,
    pub min_width: f64,
    pub drive: DriveConfig,
    pub profile: ProfileConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: "out".to_string(),
            mode: ExclusionMode::Mc,
            strict: false,
            l: 1000.0,
            l_list: None,
            n_max: 50,
            samples: 10_000,
            min_width: 1e-4,
            drive: DriveConfig::default(),
            profile: ProfileConfig::default(),
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes to JSON")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.profile;
        if !(p.beta > 1.5 && p.beta < 2.0) {
            return Err(invalid("profile.beta", format!("{} is outside (3/2, 2)", p.beta)));
        }
        if let Some(a) = p.alpha {
            if !(a > 0.0) {
                return Err(invalid("profile.alpha", "must be positive"));
            }
        }
        if p.special_steps == 0 {
            return Err(invalid("profile.special_steps", "must be at least 1"));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(invalid("l", "must be positive and finite"));
        }
        if let Some(list) = &self.l_list {
            if list.is_empty() || list.iter().any(|&l| !(l > 0.0)) || list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("l_list", "must be non-empty, positive and strictly increasing"));
            }
        }
        if self.samples < MIN_SAMPLES {
            return Err(invalid("samples", format!("must be at least {MIN_SAMPLES}")));
        }
        if !(self.min_width >= MIN_CELL_WIDTH) {
            return Err(invalid("min_width", format!("must be at least {MIN_CELL_WIDTH:e}")));
        }
        match p.kind {
            ProfileChoice::PaperAsymptotic => {}
            ProfileChoice::Empirical | ProfileChoice::ScaledEmpirical => {
                let need = |v: Option<f64>, name: &str| v.ok_or_else(|| invalid(&format!("profile.{name}"), "required for empirical profiles"));
                let (s, d0, d) = (need(p.sigma, "sigma")?, need(p.delta0, "delta0")?, need(p.delta, "delta")?);
                if !(0.0 < d && d < d0 && d0 < s && s < 0.25) {
                    return Err(invalid("profile.sigma", "need 0 < delta < delta0 < sigma < 1/4"));
                }
                if p.kind == ProfileChoice::ScaledEmpirical {
                    if !(need(p.l_ref, "l_ref")? > 0.0) {
                        return Err(invalid("profile.l_ref", "must be positive"));
                    }
                    if !(need(p.exponent, "exponent")? >= 0.0) {
                        return Err(invalid("profile.exponent", "must be non-negative"));
                    }
                }
            }
        }
        if self.drive.kind == DriveKind::Fourier {
            self.drive_function().map_err(|e| invalid("drive", e.to_string()))?;
        }
        Ok(())
    }

    pub fn drive_function(&self) -> Result<DriveFunction, crate::map::MapError> {
        match self.drive.kind {
            DriveKind::Sine => Ok(DriveFunction::Sine),
            DriveKind::Fourier => DriveFunction::fourier(self.drive.cos.clone(), self.drive.sin.clone()),
        }
    }

    pub fn l_values(&self) -> Vec<f64> {
        self.l_list.clone().unwrap_or_else(|| vec![self.l])
    }

    pub fn profile_rule(&self) -> ProfileRule {
        let p = &self.profile;
        match p.kind {
            ProfileChoice::PaperAsymptotic => ProfileRule::Fixed(ProfileSpec {
                beta: p.beta,
                alpha: p.alpha,
                special_steps: p.special_steps,
                kind: ProfileKind::PaperAsymptotic,
            }),
            ProfileChoice::Empirical => ProfileRule::Fixed(ProfileSpec {
                beta: p.beta,
                alpha: p.alpha,
                special_steps: p.special_steps,
                kind: ProfileKind::Empirical(EmpiricalOverrides {
                    sigma: p.sigma.unwrap_or_default(),
                    delta0: p.delta0.unwrap_or_default(),
                    delta: p.delta.unwrap_or_default(),
                    lambda: p.lambda,
                }),
            }),
            ProfileChoice::ScaledEmpirical => ProfileRule::ScaledEmpirical {
                beta: p.beta,
                alpha: p.alpha,
                special_steps: p.special_steps,
                l_ref: p.l_ref.unwrap_or(1.0),
                sigma: p.sigma.unwrap_or_default(),
                delta0: p.delta0.unwrap_or_default(),
                delta: p.delta.unwrap_or_default(),
                exponent: p.exponent.unwrap_or_default(),
            },
        }
    }

    pub fn profile_spec(&self, l: f64) -> ProfileSpec {
        self.profile_rule().spec_for(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.profile.beta, 1.75);
        assert_eq!(cfg.profile.special_steps, 20);
        assert_eq!(cfg.profile.alpha, None);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn beta_out_of_range() {
        let err = parse_config("[profile]\nbeta = 2.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref field, .. } if field == "profile.beta"), "{err}");
    }

    #[test]
    fn unknown_key_reports_position() {
        let err = parse_config("seed = 3\nbogus = 1\n").unwrap_err();
        match err {
            ConfigError::Parse { line, column, message } => {
                assert_eq!((line, column), (2, 1));
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_position() {
        let err = parse_config("seed = 1\nl = = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn round_trip() {
        let text = r#"
seed = 17
mode = "bisect"
l_list = [100.0, 1000.0, 10000.0]
n_max = 30
samples = 5000
min_width = 0.001
[drive]
kind = "fourier"
cos = [0.3]
sin = [1.0]
[profile]
kind = "scaled-empirical"
sigma = 0.01
delta0 = 0.005
delta = 0.001
l_ref = 100.0
exponent = 0.25
"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
        let d = RunConfig::default();
        assert_eq!(parse_config(&d.to_toml()).unwrap(), d);
    }

    #[test]
    fn empirical_requires_ordering() {
        let err = parse_config("[profile]\nkind = \"empirical\"\nsigma = 0.001\ndelta0 = 0.01\ndelta = 0.0001\n").unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref field, .. } if field == "profile.sigma"));
        let err = parse_config("[profile]\nkind = \"empirical\"\nsigma = 0.01\n").unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref field, .. } if field == "profile.delta0"));
    }

    #[test]
    fn other_validations() {
        for (text, field) in [
            ("samples = 10", "samples"),
            ("min_width = 1e-15", "min_width"),
            ("l = -1.0", "l"),
            ("l_list = [1000.0, 100.0]", "l_list"),
            ("[drive]\nkind = \"fourier\"\n", "drive"),
        ] {
            let err = parse_config(text).unwrap_err();
            assert!(matches!(err, ConfigError::Validation { field: ref f, .. } if f == field), "{text}: {err:?}");
        }
    }
}
