#![allow(dead_code)]

use std::collections::BTreeSet;

use qcc_core::SystemConfig;
use qcc_core::security::GainConstraint;
use qcc_core::{ClickRecord, ReferenceCounts, TripleEvent};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

/// Reference and half-pi marker counts for a true phase `theta`, with
/// `n` plain counts and `n / 10` counts in each marker bin.
pub fn noisy_counts<R: Rng + ?Sized>(theta: f64, n: u64, rng: &mut R) -> ReferenceCounts {
    let split = |phase: f64, total: u64, rng: &mut R| {
        let p = (phase / 2.0).cos().powi(2).clamp(0.0, 1.0);
        let r = Binomial::new(total, p).unwrap().sample(rng);
        (r, total - r)
    };
    let (n_r, n_l) = split(theta, n, rng);
    let (n_r_half, n_l_half) = split(theta + std::f64::consts::FRAC_PI_2, n / 10, rng);
    let (n_r_three, n_l_three) = split(theta + 1.5 * std::f64::consts::PI, n / 10, rng);
    ReferenceCounts {
        n_r,
        n_l,
        n_r_half,
        n_l_half,
        n_r_three,
        n_l_three,
    }
}

pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Product-form channel: user `i` contributes a click with probability
/// `1 - (1 - d_i)(1 - eta_i)^n`. Returns exact gains over all intensity
/// triples and the true single-photon-triple yield.
pub fn loss_model(eta: [f64; 3], d: [f64; 3], ints: [f64; 3]) -> (Vec<GainConstraint>, f64) {
    let mut cons = Vec::new();
    for a in ints {
        for b in ints {
            for c in ints {
                let k = [a, b, c];
                let g: f64 = (0..3)
                    .map(|i| 1.0 - (1.0 - d[i]) * (-eta[i] * k[i]).exp())
                    .product();
                cons.push(GainConstraint {
                    intensities: k,
                    lower: g,
                    upper: g,
                    label: format!("{k:?}"),
                });
            }
        }
    }
    let truth = (0..3)
        .map(|i| 1.0 - (1.0 - d[i]) * (1.0 - eta[i]))
        .product();
    (cons, truth)
}

/// Default intensities at 30 dB total loss with weak dark counts.
pub fn thirty_db() -> SystemConfig {
    SystemConfig {
        dark_count_prob: 1e-8,
        visibility: 1.0,
        ..SystemConfig::default().with_total_loss_db(30.0)
    }
}

/// Decoy-heavy settings for sign calibration: X events are plentiful.
pub fn bright() -> SystemConfig {
    SystemConfig {
        mu: 0.5,
        nu: 0.3,
        p_mu: 0.15,
        p_nu: 0.7,
        dark_count_prob: 1e-8,
        ..SystemConfig::default().with_total_loss_db(20.0)
    }
}

fn span(s: [u64; 3]) -> u64 {
    s.iter().max().unwrap() - s.iter().min().unwrap()
}

/// Direct transcription of the greedy rule over index sets.
pub fn reference_pairing(s: &[Vec<ClickRecord>; 3], w: u64) -> Vec<[u64; 3]> {
    let mut used2 = vec![false; s[1].len()];
    let mut used3 = vec![false; s[2].len()];
    let mut out = Vec::new();
    for c1 in &s[0] {
        'p2: for (j, c2) in s[1].iter().enumerate() {
            if used2[j] || c1.slot.abs_diff(c2.slot) > w {
                continue;
            }
            for (k, c3) in s[2].iter().enumerate() {
                if !used3[k] && span([c1.slot, c2.slot, c3.slot]) <= w {
                    used2[j] = true;
                    used3[k] = true;
                    out.push([c1.slot, c2.slot, c3.slot]);
                    break 'p2;
                }
            }
        }
    }
    out
}

/// Exhaustive feasibility check of a pairing result.
pub fn check_pairing(s: &[Vec<ClickRecord>; 3], w: u64, got: &[TripleEvent]) -> Result<(), String> {
    let mut used: [BTreeSet<u64>; 3] = Default::default();
    for t in got {
        if t.span() > w {
            return Err(format!("span {} over window {w}", t.span()));
        }
        for (p, c) in t.clicks().iter().enumerate() {
            if c.port.index() != p {
                return Err("click on the wrong port".into());
            }
            if !s[p].contains(c) {
                return Err("click not in the input".into());
            }
            if !used[p].insert(c.slot) {
                return Err(format!("click {} on P{} reused", c.slot, p + 1));
            }
        }
    }
    if got.windows(2).any(|x| x[0].c1.slot >= x[1].c1.slot) {
        return Err("output not ordered by P1 slot".into());
    }
    // nothing valid left among the unused clicks
    let free = |p: usize| {
        s[p].iter()
            .filter(|c| !used[p].contains(&c.slot))
            .collect::<Vec<_>>()
    };
    let (f1, f2, f3) = (free(0), free(1), free(2));
    for a in &f1 {
        for b in &f2 {
            for c in &f3 {
                if span([a.slot, b.slot, c.slot]) <= w {
                    return Err(format!(
                        "left a valid triple {:?}",
                        [a.slot, b.slot, c.slot]
                    ));
                }
            }
        }
    }
    Ok(())
}
