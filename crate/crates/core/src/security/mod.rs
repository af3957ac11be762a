//! Finite-size decoy-state estimation and key length.

mod chernoff;
mod entropy;
mod key;
mod lp;
mod rates;

use std::collections::BTreeMap;

use thiserror::Error;

pub use chernoff::{ConfidenceBound, chernoff_bounds};
pub use entropy::{binary_entropy, h2};
pub use key::{KeyInputs, KeyResult, key_length, key_length_from};
pub use lp::{
    DecoyBounds, ErrorGainConstraint, GainConstraint, auto_cutoff, decoy_lp_bounds,
    max_single_error_yield, min_single_yield, poisson, poisson_tail, x_constraints, z_constraints,
};
pub use rates::{RatePair, rate_conversion, repeaterless_bound};

use crate::config::SystemConfig;
use crate::sift::ZCounts;
use crate::types::{IntensityCombo, Level};

/// Chernoff applications sharing the failure budget: 27 Z gains, 8 X gains,
/// 8 X error gains, the key-count upper bound and the two marginal Z errors.
pub const CHERNOFF_APPLICATIONS: f64 = 46.0;

/// Fraction of X-compatible events kept by the phase slice.
pub const X_RETENTION: f64 = 0.125;

#[derive(Debug, Error, PartialEq)]
pub enum SecurityError {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("decoy LP infeasible; inconsistent constraints: {0:?}")]
    Infeasible(Vec<String>),
    #[error("decoy LP unbounded ({0})")]
    Unbounded(&'static str),
    #[error("no gain recorded for {0}")]
    MissingGain(IntensityCombo),
    #[error("LP solver failure: {0}")]
    Solver(String),
}

/// Observed count, error count and number of effective trials of one
/// intensity combination.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Gain {
    pub count: f64,
    pub errors: f64,
    pub trials: f64,
}

impl Gain {
    pub fn rate(&self) -> f64 {
        if self.trials > 0.0 {
            self.count / self.trials
        } else {
            0.0
        }
    }

    pub fn error_fraction(&self) -> f64 {
        if self.count > 0.0 {
            self.errors / self.count
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityAccounting {
    /// Quantum slots `N`.
    pub n_quantum: f64,
    pub triples: f64,
    pub port_clicks: [f64; 3],
    /// Key-combination Z events.
    pub s_z_mu3: f64,
    pub e_z_ab: f64,
    pub e_z_ac: f64,
    pub z_gains: BTreeMap<IntensityCombo, Gain>,
    /// Retained X events; `errors` counts parity mismatches.
    pub x_gains: BTreeMap<IntensityCombo, Gain>,
    pub mu: f64,
    pub nu: f64,
    pub epsilon: f64,
    pub f_ec: f64,
}

fn z_weight(level: Level, cfg: &SystemConfig) -> f64 {
    let p0 = cfg.p_vacuum();
    match level {
        Level::Mu => 2.0 * cfg.p_mu * p0,
        Level::Nu => 2.0 * cfg.p_nu * p0,
        Level::Zero => p0 * p0,
    }
}

fn x_weight(level: Level, cfg: &SystemConfig) -> f64 {
    let p0 = cfg.p_vacuum();
    match level {
        Level::Mu => 0.0,
        Level::Nu => cfg.p_nu * cfg.p_nu,
        Level::Zero => p0 * p0,
    }
}

impl SecurityAccounting {
    /// Builds gains with trials `T * P(k) / (q1 q2 q3)`, where `q_p` is the
    /// per-slot single-click rate of port `p` and `P(k)` the probability of
    /// the users' two-slot patterns.
    pub fn from_counts(
        cfg: &SystemConfig,
        n_quantum: f64,
        port_clicks: [f64; 3],
        triples: f64,
        z: &BTreeMap<IntensityCombo, ZCounts>,
        x: &BTreeMap<IntensityCombo, (f64, f64)>,
    ) -> Self {
        let q: f64 = port_clicks
            .iter()
            .map(|c| if n_quantum > 0.0 { c / n_quantum } else { 0.0 })
            .product();
        let scale = if q > 0.0 { triples / q } else { 0.0 };
        let mut z_gains = BTreeMap::new();
        for combo in IntensityCombo::all_z() {
            let p: f64 = combo.0.iter().map(|l| z_weight(*l, cfg)).product();
            let c = z.get(&combo).copied().unwrap_or_default();
            z_gains.insert(
                combo,
                Gain {
                    count: c.count,
                    errors: c.err_ab.max(c.err_ac),
                    trials: scale * p,
                },
            );
        }
        let mut x_gains = BTreeMap::new();
        for combo in IntensityCombo::all_x() {
            let p: f64 = combo.0.iter().map(|l| x_weight(*l, cfg)).product();
            let (count, errors) = x.get(&combo).copied().unwrap_or((0.0, 0.0));
            x_gains.insert(
                combo,
                Gain {
                    count,
                    errors,
                    trials: scale * p * X_RETENTION,
                },
            );
        }
        let key = z.get(&IntensityCombo::MU3).copied().unwrap_or_default();
        let frac = |e: f64| if key.count > 0.0 { e / key.count } else { 0.0 };
        SecurityAccounting {
            n_quantum,
            triples,
            port_clicks,
            s_z_mu3: key.count,
            e_z_ab: frac(key.err_ab),
            e_z_ac: frac(key.err_ac),
            z_gains,
            x_gains,
            mu: cfg.mu,
            nu: cfg.nu,
            epsilon: cfg.epsilon,
            f_ec: cfg.f_ec,
        }
    }

    /// Failure parameter of each individual Chernoff application.
    pub fn epsilon_each(&self) -> f64 {
        self.epsilon / CHERNOFF_APPLICATIONS
    }

    pub fn x_error(&self, combo: IntensityCombo) -> f64 {
        self.x_gains
            .get(&combo)
            .map(|g| g.error_fraction())
            .unwrap_or(0.0)
    }

    /// Checks count and fraction invariants.
    pub fn is_consistent(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let gains_ok = self
            .z_gains
            .values()
            .chain(self.x_gains.values())
            .all(|g| g.count >= 0.0 && g.errors <= g.count && unit(g.error_fraction()));
        gains_ok && unit(self.e_z_ab) && unit(self.e_z_ac) && self.s_z_mu3 >= 0.0
    }
}
