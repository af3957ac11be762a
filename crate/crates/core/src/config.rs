//! System configuration, flat `key = value` text format and validation.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::types::{IntensityClass, IntensityTag};

/// Every tunable parameter of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Slot clock in Hz.
    pub rep_rate: f64,
    pub quantum_duty: f64,
    pub per_arm_transmittance: f64,
    pub detector_efficiency: f64,
    pub dark_count_prob: f64,
    pub p_mu: f64,
    pub p_nu: f64,
    pub mu: f64,
    pub nu: f64,
    pub f_ec: f64,
    pub epsilon: f64,
    pub window_slots: u64,
    /// rad^2/s per fiber path.
    pub drift_rate: f64,
    pub visibility: f64,
    /// Mean photon number of reference and marker pulses; `None` means `mu`.
    pub reference_intensity: Option<f64>,
    pub frame_len: usize,
    /// Photon-number cutoff of the decoy LP; 0 selects it automatically.
    pub lp_cutoff: usize,
}

impl Default for SystemConfig {
    /// The 66.3 dB operating point.
    fn default() -> Self {
        SystemConfig {
            rep_rate: 5.0e8,
            quantum_duty: 143.52 / 500.0,
            per_arm_transmittance: 6.18e-3,
            detector_efficiency: 0.81,
            dark_count_prob: 1.1e-7,
            p_mu: 0.15,
            p_nu: 0.35,
            mu: 0.3535,
            nu: 0.0413,
            f_ec: 1.06,
            epsilon: 1.0e-10,
            window_slots: 50_000,
            drift_rate: 3000.0,
            visibility: 1.0,
            reference_intensity: None,
            frame_len: 10_000,
            lp_cutoff: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub value: String,
    pub rule: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}: {}", self.field, self.value, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("invalid config: {}", list(.0))]
    Invalid(Vec<Violation>),
}

fn list(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

const KEYS: [&str; 17] = [
    "rep_rate",
    "quantum_duty",
    "per_arm_transmittance",
    "detector_efficiency",
    "dark_count_prob",
    "p_mu",
    "p_nu",
    "mu",
    "nu",
    "f_ec",
    "epsilon",
    "window_slots",
    "drift_rate",
    "visibility",
    "reference_intensity",
    "frame_len",
    "lp_cutoff",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl SystemConfig {
    pub fn keys() -> &'static [&'static str] {
        &KEYS
    }

    pub fn set_field(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "rep_rate" => self.rep_rate = num(key, value)?,
            "quantum_duty" => self.quantum_duty = num(key, value)?,
            "per_arm_transmittance" => self.per_arm_transmittance = num(key, value)?,
            "detector_efficiency" => self.detector_efficiency = num(key, value)?,
            "dark_count_prob" => self.dark_count_prob = num(key, value)?,
            "p_mu" => self.p_mu = num(key, value)?,
            "p_nu" => self.p_nu = num(key, value)?,
            "mu" => self.mu = num(key, value)?,
            "nu" => self.nu = num(key, value)?,
            "f_ec" => self.f_ec = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "window_slots" => self.window_slots = num(key, value)?,
            "drift_rate" => self.drift_rate = num(key, value)?,
            "visibility" => self.visibility = num(key, value)?,
            "reference_intensity" => {
                self.reference_intensity = match value.trim() {
                    "" | "mu" => None,
                    v => Some(num(key, v)?),
                }
            }
            "frame_len" => self.frame_len = num(key, value)?,
            "lp_cutoff" => {
                self.lp_cutoff = match value.trim() {
                    "auto" => 0,
                    v => num(key, v)?,
                }
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set_field(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<SystemConfig, ConfigError> {
        let mut cfg = SystemConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn get_field(&self, key: &str) -> Option<String> {
        let s = match key {
            "rep_rate" => self.rep_rate.to_string(),
            "quantum_duty" => self.quantum_duty.to_string(),
            "per_arm_transmittance" => self.per_arm_transmittance.to_string(),
            "detector_efficiency" => self.detector_efficiency.to_string(),
            "dark_count_prob" => self.dark_count_prob.to_string(),
            "p_mu" => self.p_mu.to_string(),
            "p_nu" => self.p_nu.to_string(),
            "mu" => self.mu.to_string(),
            "nu" => self.nu.to_string(),
            "f_ec" => self.f_ec.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "window_slots" => self.window_slots.to_string(),
            "drift_rate" => self.drift_rate.to_string(),
            "visibility" => self.visibility.to_string(),
            "reference_intensity" => match self.reference_intensity {
                Some(r) => r.to_string(),
                None => "mu".to_string(),
            },
            "frame_len" => self.frame_len.to_string(),
            "lp_cutoff" => match self.lp_cutoff {
                0 => "auto".to_string(),
                n => n.to_string(),
            },
            _ => return None,
        };
        Some(s)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&self.get_field(k).unwrap_or_default());
            out.push('\n');
        }
        out
    }

    pub fn p_vacuum(&self) -> f64 {
        1.0 - self.p_mu - self.p_nu
    }

    pub fn reference_value(&self) -> f64 {
        self.reference_intensity.unwrap_or(self.mu)
    }

    /// Quantum slots per second.
    pub fn quantum_rate(&self) -> f64 {
        self.quantum_duty * self.rep_rate
    }

    /// The 51.8 dB operating point; `default()` is the 66.3 dB one.
    pub fn low_loss() -> Self {
        SystemConfig {
            per_arm_transmittance: 1.88e-2,
            mu: 0.2572,
            nu: 0.0209,
            ..SystemConfig::default()
        }
    }

    /// Symmetric arms whose three-arm product attenuates by `db`.
    pub fn with_total_loss_db(mut self, db: f64) -> Self {
        self.per_arm_transmittance = 10f64.powf(-db / 30.0);
        self
    }

    pub fn eta_total(&self) -> f64 {
        self.per_arm_transmittance.powi(3)
    }

    pub fn total_loss_db(&self) -> f64 {
        -30.0 * self.per_arm_transmittance.log10()
    }

    pub fn intensity(&self, tag: IntensityTag) -> IntensityClass {
        let value = match tag {
            IntensityTag::Signal => self.mu,
            IntensityTag::Decoy => self.nu,
            IntensityTag::Vacuum => 0.0,
            IntensityTag::Reference => self.reference_value(),
        };
        IntensityClass { tag, value }
    }

    /// Every violated invariant, in field order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut check = |ok: bool, field: &'static str, value: String, rule: &'static str| {
            if !ok {
                v.push(Violation { field, value, rule });
            }
        };
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        check(
            self.rep_rate.is_finite() && self.rep_rate > 0.0,
            "rep_rate",
            self.rep_rate.to_string(),
            "must be > 0",
        );
        check(
            self.quantum_duty > 0.0 && self.quantum_duty <= 1.0,
            "quantum_duty",
            self.quantum_duty.to_string(),
            "must be in (0, 1]",
        );
        check(
            self.per_arm_transmittance > 0.0 && self.per_arm_transmittance <= 1.0,
            "per_arm_transmittance",
            self.per_arm_transmittance.to_string(),
            "must be in (0, 1]",
        );
        check(
            unit(self.detector_efficiency),
            "detector_efficiency",
            self.detector_efficiency.to_string(),
            "must be in [0, 1]",
        );
        check(
            unit(self.dark_count_prob),
            "dark_count_prob",
            self.dark_count_prob.to_string(),
            "must be in [0, 1]",
        );
        check(
            unit(self.p_mu),
            "p_mu",
            self.p_mu.to_string(),
            "must be in [0, 1]",
        );
        check(
            unit(self.p_nu),
            "p_nu",
            self.p_nu.to_string(),
            "must be in [0, 1]",
        );
        check(
            self.p_mu + self.p_nu <= 1.0 + 1e-12,
            "p_mu+p_nu",
            format!("{}+{}", self.p_mu, self.p_nu),
            "p_mu + p_nu <= 1 violated",
        );
        check(
            self.mu > 0.0 && self.mu < 1.0,
            "mu",
            self.mu.to_string(),
            "must be in (0, 1)",
        );
        check(self.nu > 0.0, "nu", self.nu.to_string(), "must be > 0");
        check(
            self.nu < self.mu,
            "nu",
            format!("{} (mu = {})", self.nu, self.mu),
            "nu < mu violated",
        );
        check(
            self.f_ec.is_finite() && self.f_ec >= 0.0,
            "f_ec",
            self.f_ec.to_string(),
            "must be >= 0",
        );
        check(
            self.epsilon > 0.0 && self.epsilon < 1.0,
            "epsilon",
            self.epsilon.to_string(),
            "must be in (0, 1)",
        );
        check(
            self.window_slots >= 1,
            "window_slots",
            self.window_slots.to_string(),
            "must be >= 1",
        );
        check(
            self.drift_rate.is_finite() && self.drift_rate >= 0.0,
            "drift_rate",
            self.drift_rate.to_string(),
            "must be >= 0",
        );
        check(
            unit(self.visibility),
            "visibility",
            self.visibility.to_string(),
            "must be in [0, 1]",
        );
        if let Some(r) = self.reference_intensity {
            check(
                r.is_finite() && r > 0.0,
                "reference_intensity",
                r.to_string(),
                "must be > 0",
            );
        }
        check(
            self.frame_len >= 100,
            "frame_len",
            self.frame_len.to_string(),
            "must be >= 100",
        );
        check(
            self.lp_cutoff == 0 || self.lp_cutoff >= 2,
            "lp_cutoff",
            self.lp_cutoff.to_string(),
            "must be 0 (auto) or >= 2",
        );
        v
    }

    pub fn validate(self) -> Result<SystemConfig, ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_column_is_valid() {
        let cfg = SystemConfig {
            mu: 0.3535,
            nu: 0.0413,
            p_mu: 0.15,
            p_nu: 0.35,
            f_ec: 1.06,
            detector_efficiency: 0.81,
            ..SystemConfig::default()
        };
        assert!(cfg.validate().is_ok());
        let low = SystemConfig {
            mu: 0.2572,
            nu: 0.0209,
            per_arm_transmittance: 1.88e-2,
            ..SystemConfig::default()
        };
        assert!(low.validate().is_ok());
    }

    #[test]
    fn ordering_violation_reported() {
        let cfg = SystemConfig {
            mu: 0.2,
            nu: 0.3,
            ..SystemConfig::default()
        };
        let v = cfg.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "nu < mu violated");
        assert!(v[0].value.contains("0.3"));
    }

    #[test]
    fn probability_mass_violation_reported() {
        let cfg = SystemConfig {
            p_mu: 0.7,
            p_nu: 0.5,
            ..SystemConfig::default()
        };
        let v = cfg.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "p_mu + p_nu <= 1 violated");
    }

    #[test]
    fn all_violations_listed() {
        let cfg = SystemConfig {
            mu: 1.5,
            epsilon: 0.0,
            visibility: 2.0,
            frame_len: 10,
            ..SystemConfig::default()
        };
        let fields: Vec<_> = cfg.violations().iter().map(|v| v.field).collect();
        assert_eq!(fields, vec!["mu", "epsilon", "visibility", "frame_len"]);
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("mu = 1.5"));
    }

    #[test]
    fn parses_comments_and_rejects_unknown_keys() {
        let cfg = SystemConfig::parse("# header\nmu = 0.5 # signal\n\nnu=0.1\n").unwrap();
        assert_eq!(cfg.mu, 0.5);
        assert_eq!(cfg.nu, 0.1);
        assert!(matches!(
            SystemConfig::parse("bogus = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            SystemConfig::parse("mu 0.5"),
            Err(ConfigError::Syntax { line: 1 })
        ));
        assert!(matches!(
            SystemConfig::parse("mu = abc"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn optional_fields_round_trip() {
        let mut cfg = SystemConfig::default();
        assert_eq!(cfg.reference_value(), cfg.mu);
        cfg.set_field("reference_intensity", "0.8").unwrap();
        cfg.set_field("lp_cutoff", "7").unwrap();
        let back = SystemConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        cfg.set_field("lp_cutoff", "auto").unwrap();
        assert_eq!(cfg.lp_cutoff, 0);
    }

    proptest! {
        #[test]
        fn text_round_trip(
            mu in 1e-6f64..1.0,
            nu_frac in 1e-6f64..1.0,
            p_mu in 0.0f64..0.5,
            p_nu in 0.0f64..0.5,
            eta in 1e-12f64..1.0,
            dark in 0.0f64..1.0,
            eps in 1e-30f64..0.5,
            w in 1u64..10_000_000,
            drift in 0.0f64..1e6,
            refi in proptest::option::of(1e-9f64..10.0),
        ) {
            let cfg = SystemConfig {
                mu,
                nu: mu * nu_frac,
                p_mu,
                p_nu,
                per_arm_transmittance: eta,
                dark_count_prob: dark,
                epsilon: eps,
                window_slots: w,
                drift_rate: drift,
                reference_intensity: refi,
                ..SystemConfig::default()
            };
            let back = SystemConfig::parse(&cfg.to_text()).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
