//! Fiber phase estimation from reference counts, sign-convention calibration
//! and compensation of X-basis total phases.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::optics::wrap_phase;
use crate::types::{IntensityCombo, PhaseIndex, PortId};

/// Half-width of the X-basis retention slice around 0 and pi.
pub const SLICE_TOL: f64 = PI / 16.0;

/// Minimum X sample for sign calibration.
pub const MIN_CALIBRATION_EVENTS: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum PhaseError {
    #[error("no plain reference counts")]
    NoReferenceCounts,
    #[error("no half-pi marker counts")]
    NoMarkerCounts,
    #[error("no phase estimate for port {0}")]
    MissingEstimate(PortId),
    #[error("calibration needs {need} X events, got {have}")]
    InsufficientSample { have: usize, need: usize },
}

/// Single-detector counts of one port over one compensation interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReferenceCounts {
    pub n_r: u64,
    pub n_l: u64,
    pub n_r_half: u64,
    pub n_l_half: u64,
    pub n_r_three: u64,
    pub n_l_three: u64,
}

impl ReferenceCounts {
    /// Exchanges the two marker bins, which mirrors the estimate to `2*pi - theta`.
    pub fn mirrored(self) -> Self {
        ReferenceCounts {
            n_r_half: self.n_r_three,
            n_l_half: self.n_l_three,
            n_r_three: self.n_r_half,
            n_l_three: self.n_l_half,
            ..self
        }
    }

    pub fn add(&mut self, o: &ReferenceCounts) {
        self.n_r += o.n_r;
        self.n_l += o.n_l;
        self.n_r_half += o.n_r_half;
        self.n_l_half += o.n_l_half;
        self.n_r_three += o.n_r_three;
        self.n_l_three += o.n_l_three;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawEstimate {
    pub theta: f64,
    /// The three-half-pi markers disagree with the half-pi sign.
    pub sign_mismatch: bool,
}

pub fn estimate_pair_phase(c: &ReferenceCounts) -> Result<RawEstimate, PhaseError> {
    if c.n_r + c.n_l == 0 {
        return Err(PhaseError::NoReferenceCounts);
    }
    if c.n_r_half + c.n_l_half == 0 {
        return Err(PhaseError::NoMarkerCounts);
    }
    let (r, l) = (c.n_r as f64, c.n_l as f64);
    // arccos((r - l)/(r + l)), written in a form that stays accurate near 0 and pi
    let theta0 = (2.0 * (r * l).sqrt()).atan2(r - l);
    // cos(theta + pi/2) = -sin(theta)
    let sin_nonneg = c.n_r_half <= c.n_l_half;
    // cos(theta + 3pi/2) = sin(theta)
    let three = c.n_r_three as i64 - c.n_l_three as i64;
    let half = c.n_l_half as i64 - c.n_r_half as i64;
    let sign_mismatch = (three > 0 && half < 0) || (three < 0 && half > 0);
    let theta = if sin_nonneg {
        theta0
    } else {
        wrap_phase(TAU - theta0)
    };
    Ok(RawEstimate {
        theta,
        sign_mismatch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateFlag {
    Ok,
    SignMismatch,
    Carried,
    Missing,
}

impl EstimateFlag {
    pub fn label(self) -> &'static str {
        match self {
            EstimateFlag::Ok => "ok",
            EstimateFlag::SignMismatch => "sign_mismatch",
            EstimateFlag::Carried => "carried",
            EstimateFlag::Missing => "missing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEstimate {
    pub port: PortId,
    pub interval: u64,
    pub theta_hat: Option<f64>,
    pub counts: ReferenceCounts,
    pub flag: EstimateFlag,
}

/// Per-port estimator state that carries the last good estimate forward.
#[derive(Debug, Clone, Default)]
pub struct PhaseTracker {
    last: [Option<f64>; 3],
}

impl PhaseTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(
        &mut self,
        port: PortId,
        interval: u64,
        counts: ReferenceCounts,
    ) -> PhaseEstimate {
        let p = port.index();
        let (theta_hat, flag) = match estimate_pair_phase(&counts) {
            Ok(e) => {
                self.last[p] = Some(e.theta);
                let flag = if e.sign_mismatch {
                    EstimateFlag::SignMismatch
                } else {
                    EstimateFlag::Ok
                };
                (Some(e.theta), flag)
            }
            Err(_) => match self.last[p] {
                Some(t) => (Some(t), EstimateFlag::Carried),
                None => (None, EstimateFlag::Missing),
            },
        };
        PhaseEstimate {
            port,
            interval,
            theta_hat,
            counts,
            flag,
        }
    }
}

/// Sign flips per pairwise difference, ordered like the ports (P1, P2, P3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SignConvention {
    pub flips: [bool; 3],
}

impl SignConvention {
    pub const IDENTITY: SignConvention = SignConvention { flips: [false; 3] };

    /// All 8 vertices in lexicographic flip order.
    pub fn all() -> [SignConvention; 8] {
        std::array::from_fn(|i| SignConvention {
            flips: [i & 4 != 0, i & 2 != 0, i & 1 != 0],
        })
    }

    pub fn label(&self) -> String {
        self.flips
            .iter()
            .map(|f| if *f { '1' } else { '0' })
            .collect()
    }

    /// Inverse of `label`.
    pub fn parse(s: &str) -> Option<SignConvention> {
        let b = s.as_bytes();
        if b.len() != 3 {
            return None;
        }
        let mut flips = [false; 3];
        for (f, c) in flips.iter_mut().zip(b) {
            *f = match c {
                b'0' => false,
                b'1' => true,
                _ => return None,
            };
        }
        Some(SignConvention { flips })
    }

    pub fn signed(&self, port: PortId, theta: f64) -> f64 {
        if self.flips[port.index()] {
            -theta
        } else {
            theta
        }
    }
}

/// Expected parity for a compensated total phase inside the slice, if retained.
pub fn slice_parity(theta_total: f64) -> Option<u8> {
    let t = wrap_phase(theta_total);
    let d0 = t.min(TAU - t);
    let dpi = (t - PI).abs();
    if d0 <= SLICE_TOL {
        Some(0)
    } else if dpi <= SLICE_TOL {
        Some(1)
    } else {
        None
    }
}

/// Compensated total phase from the encoded phase sum and per-port estimates.
pub fn total_phase(delta_sum: PhaseIndex, theta_hat: [f64; 3], conv: SignConvention) -> f64 {
    let drift: f64 = PortId::ALL
        .iter()
        .map(|p| conv.signed(*p, theta_hat[p.index()]))
        .sum();
    wrap_phase(delta_sum.radians() + drift)
}

pub fn compensate(
    delta_sum: PhaseIndex,
    estimates: [Option<f64>; 3],
    conv: SignConvention,
) -> Result<f64, PhaseError> {
    let mut th = [0.0; 3];
    for p in PortId::ALL {
        th[p.index()] = estimates[p.index()].ok_or(PhaseError::MissingEstimate(p))?;
    }
    Ok(total_phase(delta_sum, th, conv))
}

/// What the X tally needs from one X-compatible event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XObservation {
    pub combo: IntensityCombo,
    pub delta_sum: PhaseIndex,
    pub theta_hat: Option<[f64; 3]>,
    pub parity: u8,
}

impl XObservation {
    pub fn total_phase(&self, conv: SignConvention) -> Option<f64> {
        self.theta_hat
            .map(|th| total_phase(self.delta_sum, th, conv))
    }

    /// `None` when dropped by the slice or lacking estimates.
    pub fn error(&self, conv: SignConvention) -> Option<bool> {
        let expected = slice_parity(self.total_phase(conv)?)?;
        Some(expected != self.parity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexResult {
    pub convention: SignConvention,
    pub retained: u64,
    pub errors: u64,
}

impl VertexResult {
    pub fn error_rate(&self) -> f64 {
        if self.retained == 0 {
            0.5
        } else {
            self.errors as f64 / self.retained as f64
        }
    }
}

pub fn evaluate_conventions(sample: &[XObservation]) -> [VertexResult; 8] {
    SignConvention::all().map(|convention| {
        let mut r = VertexResult {
            convention,
            retained: 0,
            errors: 0,
        };
        for obs in sample {
            if let Some(e) = obs.error(convention) {
                r.retained += 1;
                r.errors += e as u64;
            }
        }
        r
    })
}

/// Per-vertex retained and error counts of one X combination.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct XCell {
    /// X-compatible events, with or without estimates.
    pub observed: u64,
    /// Events with estimates for all three ports.
    pub estimated: u64,
    /// (retained, errors) per convention in `SignConvention::all()` order.
    pub vertices: [(u64, u64); 8],
}

/// X-basis counts under every sign convention, so that runs of any length
/// can be calibrated and tallied without keeping raw observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct XTally {
    pub cells: BTreeMap<IntensityCombo, XCell>,
}

impl XTally {
    pub fn add(&mut self, obs: &XObservation) {
        let cell = self.cells.entry(obs.combo).or_default();
        cell.observed += 1;
        if obs.theta_hat.is_none() {
            return;
        }
        cell.estimated += 1;
        for (v, conv) in cell.vertices.iter_mut().zip(SignConvention::all()) {
            if let Some(e) = obs.error(conv) {
                v.0 += 1;
                v.1 += e as u64;
            }
        }
    }

    pub fn merge(&mut self, other: &XTally) {
        for (k, o) in &other.cells {
            let c = self.cells.entry(*k).or_default();
            c.observed += o.observed;
            c.estimated += o.estimated;
            for (a, b) in c.vertices.iter_mut().zip(o.vertices) {
                a.0 += b.0;
                a.1 += b.1;
            }
        }
    }

    /// (retained, errors) per combination under `conv`.
    pub fn counts(&self, conv: SignConvention) -> BTreeMap<IntensityCombo, (f64, f64)> {
        let i = conv_index(conv);
        self.cells
            .iter()
            .map(|(k, c)| (*k, (c.vertices[i].0 as f64, c.vertices[i].1 as f64)))
            .collect()
    }

    pub fn error_rate(&self, combo: IntensityCombo, conv: SignConvention) -> Option<f64> {
        let (n, e) = self.cells.get(&combo)?.vertices[conv_index(conv)];
        (n > 0).then(|| e as f64 / n as f64)
    }

    /// Vertex table over `combo`, or over every combination.
    pub fn table(&self, combo: Option<IntensityCombo>) -> ([VertexResult; 8], u64) {
        let mut usable = 0;
        let mut table = SignConvention::all().map(|convention| VertexResult {
            convention,
            retained: 0,
            errors: 0,
        });
        for (k, c) in &self.cells {
            if combo.is_some_and(|x| x != *k) {
                continue;
            }
            usable += c.estimated;
            for (t, v) in table.iter_mut().zip(c.vertices) {
                t.retained += v.0;
                t.errors += v.1;
            }
        }
        (table, usable)
    }

    /// Calibrates on `combo` (or all combinations).
    pub fn calibrate(&self, combo: Option<IntensityCombo>) -> Result<Calibration, PhaseError> {
        let (table, usable) = self.table(combo);
        Calibration::from_table(table, usable as usize)
    }
}

fn conv_index(c: SignConvention) -> usize {
    c.flips
        .iter()
        .fold(0, |acc, f| (acc << 1) | usize::from(*f))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub convention: SignConvention,
    pub table: [VertexResult; 8],
}

impl Calibration {
    /// Picks the vertex with the lowest X error; ties go to the earlier vertex.
    pub fn from_table(table: [VertexResult; 8], usable: usize) -> Result<Calibration, PhaseError> {
        if usable < MIN_CALIBRATION_EVENTS {
            return Err(PhaseError::InsufficientSample {
                have: usable,
                need: MIN_CALIBRATION_EVENTS,
            });
        }
        let mut best = 0;
        for i in 1..8 {
            if table[i].error_rate() < table[best].error_rate() {
                best = i;
            }
        }
        Ok(Calibration {
            convention: table[best].convention,
            table,
        })
    }
}

pub fn calibrate_sign_convention(sample: &[XObservation]) -> Result<Calibration, PhaseError> {
    let usable = sample.iter().filter(|o| o.theta_hat.is_some()).count();
    Calibration::from_table(evaluate_conventions(sample), usable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Noise-free counts for a known phase.
    pub(crate) fn expected_counts(theta: f64, n: f64) -> ReferenceCounts {
        let f = |t: f64| {
            let r = n * (t / 2.0).cos().powi(2);
            let l = n * (t / 2.0).sin().powi(2);
            (r, l)
        };
        let (r, l) = f(theta);
        let (rh, lh) = f(theta + PI / 2.0);
        let (r3, l3) = f(theta + 1.5 * PI);
        // scaled so that integer rounding is negligible
        let q = |x: f64| x.round() as u64;
        ReferenceCounts {
            n_r: q(r),
            n_l: q(l),
            n_r_half: q(rh),
            n_l_half: q(lh),
            n_r_three: q(r3),
            n_l_three: q(l3),
        }
    }

    fn ang(a: f64, b: f64) -> f64 {
        let d = wrap_phase(a - b);
        d.min(TAU - d)
    }

    #[test]
    fn fully_constructive_is_zero() {
        let c = ReferenceCounts {
            n_r: 1000,
            n_l: 0,
            n_r_half: 10,
            n_l_half: 10,
            ..Default::default()
        };
        assert_eq!(estimate_pair_phase(&c).unwrap().theta, 0.0);
    }

    #[test]
    fn quadrant_from_markers() {
        let c = ReferenceCounts {
            n_r: 500,
            n_l: 500,
            n_r_half: 90,
            n_l_half: 10,
            n_r_three: 10,
            n_l_three: 90,
        };
        let e = estimate_pair_phase(&c).unwrap();
        assert!((e.theta - 1.5 * PI).abs() < 1e-12);
        assert!(!e.sign_mismatch);
        let bad = ReferenceCounts {
            n_r_three: 90,
            n_l_three: 10,
            ..c
        };
        assert!(estimate_pair_phase(&bad).unwrap().sign_mismatch);
    }

    #[test]
    fn zero_denominators_unavailable() {
        let c = ReferenceCounts {
            n_r_half: 3,
            ..Default::default()
        };
        assert_eq!(estimate_pair_phase(&c), Err(PhaseError::NoReferenceCounts));
        let c = ReferenceCounts {
            n_r: 3,
            ..Default::default()
        };
        assert_eq!(estimate_pair_phase(&c), Err(PhaseError::NoMarkerCounts));
    }

    #[test]
    fn tracker_carries_forward() {
        let mut t = PhaseTracker::new();
        let e = t.update(PortId::P2, 0, ReferenceCounts::default());
        assert_eq!((e.theta_hat, e.flag), (None, EstimateFlag::Missing));
        let good = expected_counts(1.0, 1e6);
        let e = t.update(PortId::P2, 1, good);
        assert_eq!(e.flag, EstimateFlag::Ok);
        let e = t.update(PortId::P2, 2, ReferenceCounts::default());
        assert_eq!(e.flag, EstimateFlag::Carried);
        assert!((e.theta_hat.unwrap() - 1.0).abs() < 1e-3);
        let e = t.update(PortId::P1, 2, ReferenceCounts::default());
        assert_eq!(e.flag, EstimateFlag::Missing);
    }

    #[test]
    fn exact_on_expected_counts() {
        for i in 0..1000 {
            let theta = i as f64 * TAU / 1000.0 + 1e-3;
            let r = (theta / 2.0).cos().powi(2);
            let l = (theta / 2.0).sin().powi(2);
            let rh = ((theta + PI / 2.0) / 2.0).cos().powi(2);
            let lh = ((theta + PI / 2.0) / 2.0).sin().powi(2);
            // real-valued counts: scale by 2^50 and keep the ratio exact enough
            let s = (1u64 << 50) as f64;
            let c = ReferenceCounts {
                n_r: (r * s).round() as u64,
                n_l: (l * s).round() as u64,
                n_r_half: (rh * s) as u64,
                n_l_half: (lh * s) as u64,
                ..Default::default()
            };
            let e = estimate_pair_phase(&c).unwrap();
            assert!(ang(e.theta, theta) < 1e-9, "theta {theta} got {}", e.theta);
        }
    }

    #[test]
    fn mirrored_counts_negate_phase() {
        for theta in [0.3, 1.7, 2.9, 4.0, 5.5] {
            let c = expected_counts(theta, 1e8);
            let m = estimate_pair_phase(&c.mirrored()).unwrap().theta;
            assert!(ang(m, TAU - theta) < 1e-3);
        }
    }

    #[test]
    fn slice_rule() {
        assert_eq!(slice_parity(0.0), Some(0));
        assert_eq!(slice_parity(TAU - 0.1), Some(0));
        assert_eq!(slice_parity(PI + 0.1), Some(1));
        assert_eq!(slice_parity(PI / 8.0), None);
        assert_eq!(slice_parity(PI / 2.0), None);
    }

    #[test]
    fn zero_estimates_leave_encoded_sum() {
        let d = PhaseIndex::new(9).unwrap();
        let t = compensate(d, [Some(0.0); 3], SignConvention::IDENTITY).unwrap();
        assert!((t - d.radians()).abs() < 1e-15);
        assert_eq!(
            compensate(d, [Some(0.0), None, Some(0.0)], SignConvention::IDENTITY),
            Err(PhaseError::MissingEstimate(PortId::P2))
        );
    }

    #[test]
    fn conventions_enumerated_in_order() {
        let all = SignConvention::all();
        assert_eq!(all[0], SignConvention::IDENTITY);
        assert_eq!(all[1].flips, [false, false, true]);
        assert_eq!(all[7].flips, [true, true, true]);
        let mut sorted = all;
        sorted.sort();
        assert_eq!(sorted, all);
    }

    #[test]
    fn calibration_needs_sample() {
        let obs = XObservation {
            combo: IntensityCombo::NU3,
            delta_sum: PhaseIndex::ZERO,
            theta_hat: Some([0.0; 3]),
            parity: 0,
        };
        assert_eq!(
            calibrate_sign_convention(&vec![obs; 999]),
            Err(PhaseError::InsufficientSample {
                have: 999,
                need: 1000
            })
        );
        let cal = calibrate_sign_convention(&vec![obs; 1000]).unwrap();
        // every vertex ties at zero error: first wins
        assert_eq!(cal.convention, SignConvention::IDENTITY);
    }

    proptest! {
        #[test]
        fn sign_resolution_matches_truth(theta in 0.0f64..TAU) {
            let c = expected_counts(theta, 1e12);
            let e = estimate_pair_phase(&c).unwrap();
            prop_assert!((e.theta.cos() - theta.cos()).abs() < 1e-5);
            if theta.sin().abs() > 1e-5 {
                prop_assert_eq!(e.theta.sin() > 0.0, theta.sin() > 0.0);
            }
        }

        #[test]
        fn calibration_ignores_common_offsets(
            seed in 0u64..1000,
            offset in 0.0f64..TAU,
        ) {
            use rand::{RngExt, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let flips = [rng.random::<bool>(), rng.random::<bool>(), rng.random::<bool>()];
            // per-user fiber phases; each port sees first user minus second
            let events: Vec<([f64; 3], PhaseIndex, u8)> = (0..1500)
                .map(|_| {
                    let th: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>() * TAU);
                    let d = PhaseIndex::wrapping(rng.random_range(0..16));
                    let p_err = (1.0 - d.radians().cos() / 4.0) / 2.0;
                    let parity = u8::from(rng.random::<f64>() < p_err);
                    (th, d, parity)
                })
                .collect();
            let build = |c: f64| -> Vec<XObservation> {
                events
                    .iter()
                    .map(|(th, d, parity)| {
                        let u = th.map(|x| x + c);
                        let rel = [u[0] - u[1], u[1] - u[2], u[2] - u[0]];
                        let seen = std::array::from_fn(|i| {
                            let r = wrap_phase(rel[i]);
                            if flips[i] { wrap_phase(TAU - r) } else { r }
                        });
                        // observed phase sum includes the true fiber sum, which is 0 here
                        XObservation {
                            combo: IntensityCombo::NU3,
                            delta_sum: *d,
                            theta_hat: Some(seen),
                            parity: *parity,
                        }
                    })
                    .collect()
            };
            let base = calibrate_sign_convention(&build(0.0)).unwrap().convention;
            let shifted = calibrate_sign_convention(&build(offset)).unwrap().convention;
            prop_assert_eq!(base, shifted);
        }

        #[test]
        fn calibration_recovers_injected_flips(seed in 0u64..1000) {
            use rand::{RngExt, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let flips = [rng.random::<bool>(), rng.random::<bool>(), rng.random::<bool>()];
            let sample: Vec<XObservation> = (0..1500)
                .map(|_| {
                    let th: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>() * TAU);
                    let d = PhaseIndex::wrapping(rng.random_range(0..16));
                    let truth: f64 = d.radians() + th.iter().sum::<f64>();
                    let seen = std::array::from_fn(|i| if flips[i] { TAU - th[i] } else { th[i] });
                    let p_err = (1.0 - 0.8 * truth.cos()) / 2.0;
                    XObservation {
                        combo: IntensityCombo::NU3,
                        delta_sum: d,
                        theta_hat: Some(seen),
                        parity: u8::from(rng.random::<f64>() < p_err),
                    }
                })
                .collect();
            let cal = calibrate_sign_convention(&sample).unwrap();
            prop_assert_eq!(cal.convention.flips, flips);
            let mut tally = XTally::default();
            sample.iter().for_each(|o| tally.add(o));
            prop_assert_eq!(tally.calibrate(None).unwrap(), cal);
        }
    }
}
