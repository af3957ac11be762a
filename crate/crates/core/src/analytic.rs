//! Closed-form expected statistics and the rate-versus-loss model.
//!
//! Phase averages use a uniform grid: the relative phase seen at a port is
//! uniform once the 16-level encoding and the drift are combined.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use crate::config::SystemConfig;
use crate::optics::{click_prob, port_intensities};
use crate::phase::SLICE_TOL;
use crate::security::{
    DecoyBounds, SecurityAccounting, SecurityError, decoy_lp_bounds, key_length, rate_conversion,
    repeaterless_bound,
};
use crate::sift::ZCounts;
use crate::types::{IntensityCombo, Level};

const PHASE_GRID: usize = 64;
const SLICE_POINTS: usize = 9;

/// Quantum slots in ten hours at the nominal quantum rate.
pub fn ten_hour_slots(cfg: &SystemConfig) -> f64 {
    10.0 * 3600.0 * cfg.quantum_rate()
}

/// Probabilities that only R, or only L, fires.
pub fn single_clicks(k_u: f64, k_v: f64, dpsi: f64, cfg: &SystemConfig) -> (f64, f64) {
    let (ir, il) = port_intensities(k_u, k_v, dpsi, cfg);
    let (pr, pl) = (click_prob(ir, cfg), click_prob(il, cfg));
    (pr * (1.0 - pl), pl * (1.0 - pr))
}

fn grid(i: usize) -> f64 {
    i as f64 * TAU / PHASE_GRID as f64
}

/// Phase-averaged single-click probability of one port.
pub fn mean_single_click(k_u: f64, k_v: f64, cfg: &SystemConfig) -> f64 {
    (0..PHASE_GRID)
        .map(|i| {
            let (r, l) = single_clicks(k_u, k_v, grid(i), cfg);
            r + l
        })
        .sum::<f64>()
        / PHASE_GRID as f64
}

fn level_value(l: Level, cfg: &SystemConfig) -> f64 {
    match l {
        Level::Mu => cfg.mu,
        Level::Nu => cfg.nu,
        Level::Zero => 0.0,
    }
}

fn level_prob(l: Level, cfg: &SystemConfig) -> f64 {
    match l {
        Level::Mu => cfg.p_mu,
        Level::Nu => cfg.p_nu,
        Level::Zero => cfg.p_vacuum(),
    }
}

/// Single-click probability per port per quantum slot.
pub fn port_click_rate(cfg: &SystemConfig) -> f64 {
    let levels = [Level::Mu, Level::Nu, Level::Zero];
    let mut q = 0.0;
    for a in levels {
        for b in levels {
            q += level_prob(a, cfg)
                * level_prob(b, cfg)
                * mean_single_click(level_value(a, cfg), level_value(b, cfg), cfg);
        }
    }
    q
}

/// Fraction of clicks that end up in triples: both other ports must offer a
/// click within the window.
pub fn pairing_efficiency(q: f64, window: u64) -> f64 {
    let miss = (window as f64 * (-q).ln_1p()).exp();
    (1.0 - miss).powi(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCounts {
    pub n_quantum: f64,
    pub q: f64,
    pub pairing_efficiency: f64,
    pub triples: f64,
    pub z: BTreeMap<IntensityCombo, ZCounts>,
    /// (retained, errors) per X combination.
    pub x: BTreeMap<IntensityCombo, (f64, f64)>,
}

impl ExpectedCounts {
    pub fn accounting(&self, cfg: &SystemConfig) -> SecurityAccounting {
        SecurityAccounting::from_counts(
            cfg,
            self.n_quantum,
            [self.q * self.n_quantum; 3],
            self.triples,
            &self.z,
            &self.x,
        )
    }

    /// Marginal Z errors of the key combination.
    pub fn z_error(&self) -> (f64, f64) {
        let c = self.z[&IntensityCombo::MU3];
        (c.err_ab / c.count, c.err_ac / c.count)
    }

    pub fn x_error(&self) -> f64 {
        let (n, e) = self.x[&IntensityCombo::NU3];
        e / n
    }
}

/// Slot intensities of a user's (first, second) slots.
fn slot_pair(k: f64, signal_second: bool) -> (f64, f64) {
    if signal_second { (0.0, k) } else { (k, 0.0) }
}

/// Probability that a Z pattern produces a triple, averaged over the eight
/// signal placements, with the fractions where A disagrees with B and C.
fn z_event(k: [f64; 3], cfg: &SystemConfig) -> (f64, f64, f64) {
    let (mut tot, mut ab, mut ac) = (0.0, 0.0, 0.0);
    for o in 0..8u8 {
        let bit = |u: usize| (o >> (2 - u)) & 1 == 1;
        let [a, b, c] = [0, 1, 2].map(|u| slot_pair(k[u], bit(u)));
        // A: (P1, P3), B: (P2, P1), C: (P3, P2)
        let w = mean_single_click(a.0, b.1, cfg)
            * mean_single_click(b.0, c.1, cfg)
            * mean_single_click(c.0, a.1, cfg)
            / 8.0;
        tot += w;
        if bit(0) != bit(1) {
            ab += w;
        }
        if bit(0) != bit(2) {
            ac += w;
        }
    }
    (tot, ab / tot, ac / tot)
}

/// Parity-error fraction among retained all-decoy events.
fn x_error_fraction(k: [f64; 3], cfg: &SystemConfig) -> f64 {
    let rl: Vec<[(f64, f64); 3]> = (0..PHASE_GRID)
        .map(|i| {
            let d = grid(i);
            [
                single_clicks(k[0], k[1], d, cfg),
                single_clicks(k[1], k[2], d, cfg),
                single_clicks(k[2], k[0], d, cfg),
            ]
        })
        .collect();
    let (mut err, mut tot) = (0.0, 0.0);
    for (centre, sign) in [(0.0, 1.0), (PI, -1.0)] {
        for s in 0..SLICE_POINTS {
            let th = centre - SLICE_TOL + 2.0 * SLICE_TOL * s as f64 / (SLICE_POINTS - 1) as f64;
            let (mut plus, mut minus) = (0.0, 0.0);
            for i in 0..PHASE_GRID {
                for j in 0..PHASE_GRID {
                    let d3 = th - grid(i) - grid(j);
                    let (r3, l3) = single_clicks(k[2], k[0], d3, cfg);
                    let (r1, l1) = rl[i][0];
                    let (r2, l2) = rl[j][1];
                    plus += (r1 + l1) * (r2 + l2) * (r3 + l3);
                    minus += (r1 - l1) * (r2 - l2) * (r3 - l3);
                }
            }
            err += (plus - sign * minus) / 2.0;
            tot += plus;
        }
    }
    err / tot
}

/// Expected counts over `n_quantum` quantum slots.
pub fn expected_counts(cfg: &SystemConfig, n_quantum: f64) -> ExpectedCounts {
    let p0 = cfg.p_vacuum();
    let q = port_click_rate(cfg);
    let eff = pairing_efficiency(q, cfg.window_slots);
    let triples = n_quantum * q * eff;
    let scale = triples / q.powi(3);
    let mut z = BTreeMap::new();
    for combo in IntensityCombo::all_z() {
        let k = combo.0.map(|l| level_value(l, cfg));
        let pk: f64 = combo
            .0
            .iter()
            .map(|&l| match l {
                Level::Zero => p0 * p0,
                l => 2.0 * level_prob(l, cfg) * p0,
            })
            .product();
        let (tot, eab, eac) = z_event(k, cfg);
        let count = scale * pk * tot;
        z.insert(
            combo,
            ZCounts {
                count,
                err_ab: count * eab,
                err_ac: count * eac,
            },
        );
    }
    let mut x = BTreeMap::new();
    for combo in IntensityCombo::all_x() {
        let k = combo.0.map(|l| level_value(l, cfg));
        let pk: f64 = combo
            .0
            .iter()
            .map(|&l| level_prob(l, cfg).powi(2))
            .product();
        let hit = mean_single_click(k[0], k[1], cfg)
            * mean_single_click(k[1], k[2], cfg)
            * mean_single_click(k[2], k[0], cfg);
        let count = scale * pk * hit * crate::security::X_RETENTION;
        let e = if k.contains(&0.0) {
            0.5
        } else {
            x_error_fraction(k, cfg)
        };
        x.insert(combo, (count, count * e));
    }
    ExpectedCounts {
        n_quantum,
        q,
        pairing_efficiency: eff,
        triples,
        z,
        x,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub total_loss_db: f64,
    pub eta_total: f64,
    pub rate_per_pulse: f64,
    pub rate_bits_per_s: f64,
    pub bound_per_pulse: f64,
    pub s111_lower: f64,
    pub e111ph_upper: f64,
    pub z_error: f64,
    pub x_error: f64,
    /// Same analysis when only same-slot triples count.
    pub coincidence_per_pulse: f64,
    pub bounds: DecoyBounds,
}

/// Expected finite-size key rate at one configuration.
pub fn analytic_point(
    cfg: &SystemConfig,
    n_quantum: f64,
    cutoff: Option<usize>,
) -> Result<RatePoint, SecurityError> {
    let exp = expected_counts(cfg, n_quantum);
    let acc = exp.accounting(cfg);
    let bounds = decoy_lp_bounds(&acc, cutoff)?;
    let key = key_length(&acc, &bounds);
    let rate = rate_conversion(key.length, n_quantum, cfg)?;
    let (eab, eac) = exp.z_error();
    // same-slot triples occur at q^3 per slot instead of q * efficiency
    let coinc = rate.per_pulse * exp.q * exp.q / exp.pairing_efficiency;
    Ok(RatePoint {
        total_loss_db: cfg.total_loss_db(),
        eta_total: cfg.eta_total(),
        rate_per_pulse: rate.per_pulse,
        rate_bits_per_s: rate.per_second,
        bound_per_pulse: repeaterless_bound(cfg.eta_total())?,
        s111_lower: bounds.s111_lower,
        e111ph_upper: bounds.e111_upper,
        z_error: eab.max(eac),
        x_error: exp.x_error(),
        coincidence_per_pulse: coinc,
        bounds,
    })
}

/// Rate curve over total losses, evaluated in parallel.
pub fn analytic_rates(
    cfg: &SystemConfig,
    losses_db: &[f64],
    n_quantum: f64,
    cutoff: Option<usize>,
) -> Vec<Result<RatePoint, SecurityError>> {
    losses_db
        .par_iter()
        .map(|&db| analytic_point(&cfg.clone().with_total_loss_db(db), n_quantum, cutoff))
        .collect()
}

/// Least-squares slope of `ln y` against `ln x` over positive pairs.
pub fn log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Dark-count probability giving the target key-combination Z error.
/// Returns `None` if the target lies outside what dark counts can produce.
pub fn fit_dark_count(cfg: &SystemConfig, target_z_error: f64) -> Option<f64> {
    let z_at = |d: f64| {
        let c = SystemConfig {
            dark_count_prob: d,
            ..cfg.clone()
        };
        let (ab, ac) = expected_counts(&c, 1.0).z_error();
        ab.max(ac)
    };
    let (mut lo, mut hi) = (1e-14f64.ln(), 1e-3f64.ln());
    if z_at(lo.exp()) > target_z_error || z_at(hi.exp()) < target_z_error {
        return None;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if z_at(mid.exp()) < target_z_error {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((0.5 * (lo + hi)).exp())
}
