//! Basis sifting of paired triples and count tallies.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::config::SystemConfig;
use crate::pairing::TripleEvent;
use crate::phase::{SignConvention, XObservation, XTally};
use crate::security::SecurityAccounting;
use crate::types::{IntensityCombo, IntensityTag, Level, PhaseIndex, PulseDescriptor, User};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Z,
    X,
    Discard,
}

impl Basis {
    pub fn label(self) -> &'static str {
        match self {
            Basis::Z => "Z",
            Basis::X => "X",
            Basis::Discard => "D",
        }
    }

    pub fn parse(s: &str) -> Option<Basis> {
        match s {
            "Z" => Some(Basis::Z),
            "X" => Some(Basis::X),
            "D" => Some(Basis::Discard),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SiftError {
    #[error("no pulse record for user {user} at slot {slot}")]
    MissingPulse { user: User, slot: u64 },
}

/// What one user's two-slot intensity pattern allows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PatternKind {
    /// One nonvacuum pulse and one vacuum; `bit` is 0 when it sits first.
    Single {
        level: Level,
        bit: u8,
    },
    BothVacuum,
    BothDecoy,
    Other,
}

fn pattern_kind(first: IntensityTag, second: IntensityTag) -> PatternKind {
    use IntensityTag::*;
    match (first, second) {
        (Signal, Vacuum) => PatternKind::Single {
            level: Level::Mu,
            bit: 0,
        },
        (Vacuum, Signal) => PatternKind::Single {
            level: Level::Mu,
            bit: 1,
        },
        (Decoy, Vacuum) => PatternKind::Single {
            level: Level::Nu,
            bit: 0,
        },
        (Vacuum, Decoy) => PatternKind::Single {
            level: Level::Nu,
            bit: 1,
        },
        (Vacuum, Vacuum) => PatternKind::BothVacuum,
        (Decoy, Decoy) => PatternKind::BothDecoy,
        _ => PatternKind::Other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftedEvent {
    pub slots: [u64; 3],
    pub basis: Basis,
    /// Per user, intensity tags in canonical (first, second) slot order.
    pub patterns: [(IntensityTag, IntensityTag); 3],
    pub combo: Option<IntensityCombo>,
    pub bits: [Option<u8>; 3],
    /// Per user `n_first - n_second` mod 16.
    pub deltas: [PhaseIndex; 3],
    pub parity: u8,
    pub shared_slot: bool,
}

impl SiftedEvent {
    pub fn delta_sum(&self) -> PhaseIndex {
        self.deltas
            .iter()
            .fold(PhaseIndex::ZERO, |acc, d| acc.add(*d))
    }

    /// The {nu, 0} combination when every user pattern fits the X basis.
    /// All-vacuum events qualify in both bases.
    pub fn x_combo(&self) -> Option<IntensityCombo> {
        if self.shared_slot {
            return None;
        }
        let mut out = [Level::Zero; 3];
        for (o, p) in out.iter_mut().zip(self.patterns) {
            *o = match pattern_kind(p.0, p.1) {
                PatternKind::BothDecoy => Level::Nu,
                PatternKind::BothVacuum => Level::Zero,
                _ => return None,
            };
        }
        Some(IntensityCombo(out))
    }

    pub fn is_key_event(&self) -> bool {
        self.basis == Basis::Z && self.combo == Some(IntensityCombo::MU3)
    }

    pub fn x_observation(&self, theta_hat: Option<[f64; 3]>) -> Option<XObservation> {
        self.x_combo().map(|combo| XObservation {
            combo,
            delta_sum: self.delta_sum(),
            theta_hat,
            parity: self.parity,
        })
    }
}

pub fn classify_event(
    triple: &TripleEvent,
    sent: impl Fn(User, u64) -> Option<PulseDescriptor>,
) -> Result<SiftedEvent, SiftError> {
    let mut patterns = [(IntensityTag::Vacuum, IntensityTag::Vacuum); 3];
    let mut deltas = [PhaseIndex::ZERO; 3];
    let mut shared_slot = false;
    for user in User::ALL {
        let (s_first, s_second) = triple.user_slots(user);
        let get = |slot| sent(user, slot).ok_or(SiftError::MissingPulse { user, slot });
        let first = get(s_first)?;
        let second = get(s_second)?;
        shared_slot |= s_first == s_second;
        patterns[user.index()] = (first.intensity.tag, second.intensity.tag);
        deltas[user.index()] = first.phase.sub(second.phase);
    }
    let kinds = patterns.map(|(a, b)| pattern_kind(a, b));
    let z_ok = kinds
        .iter()
        .all(|k| matches!(k, PatternKind::Single { .. } | PatternKind::BothVacuum));
    let x_ok = kinds
        .iter()
        .all(|k| matches!(k, PatternKind::BothDecoy | PatternKind::BothVacuum));
    let mut bits = [None; 3];
    let (basis, combo) = if shared_slot {
        (Basis::Discard, None)
    } else if z_ok {
        let mut levels = [Level::Zero; 3];
        for (i, k) in kinds.iter().enumerate() {
            if let PatternKind::Single { level, bit } = *k {
                levels[i] = level;
                bits[i] = Some(bit);
            }
        }
        (Basis::Z, Some(IntensityCombo(levels)))
    } else if x_ok {
        let levels = kinds.map(|k| {
            if k == PatternKind::BothDecoy {
                Level::Nu
            } else {
                Level::Zero
            }
        });
        (Basis::X, Some(IntensityCombo(levels)))
    } else {
        (Basis::Discard, None)
    };
    Ok(SiftedEvent {
        slots: triple.slots(),
        basis,
        patterns,
        combo,
        bits,
        deltas,
        parity: triple.parity(),
        shared_slot,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZCounts {
    pub count: f64,
    pub err_ab: f64,
    pub err_ac: f64,
}

/// Raw counts from a run, before any bound is applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tallies {
    pub n_quantum: f64,
    pub port_clicks: [f64; 3],
    pub triples: f64,
    pub z: BTreeMap<IntensityCombo, ZCounts>,
    pub x: XTally,
}

impl Tallies {
    pub fn add_event(&mut self, ev: &SiftedEvent, theta_hat: Option<[f64; 3]>) {
        if ev.basis == Basis::Z {
            let combo = ev.combo.expect("Z events carry a combo");
            let cell = self.z.entry(combo).or_default();
            cell.count += 1.0;
            if let [Some(a), Some(b), Some(c)] = ev.bits {
                if a != b {
                    cell.err_ab += 1.0;
                }
                if a != c {
                    cell.err_ac += 1.0;
                }
            }
        }
        if let Some(obs) = ev.x_observation(theta_hat) {
            self.x.add(&obs);
        }
    }

    pub fn merge(&mut self, other: Tallies) {
        self.n_quantum += other.n_quantum;
        for i in 0..3 {
            self.port_clicks[i] += other.port_clicks[i];
        }
        self.triples += other.triples;
        for (k, v) in other.z {
            let c = self.z.entry(k).or_default();
            c.count += v.count;
            c.err_ab += v.err_ab;
            c.err_ac += v.err_ac;
        }
        self.x.merge(&other.x);
    }

    /// Z error fractions of the key combination.
    pub fn z_error(&self) -> (f64, f64) {
        let c = self
            .z
            .get(&IntensityCombo::MU3)
            .copied()
            .unwrap_or_default();
        if c.count == 0.0 {
            (0.0, 0.0)
        } else {
            (c.err_ab / c.count, c.err_ac / c.count)
        }
    }

    pub fn accounting(&self, cfg: &SystemConfig, conv: SignConvention) -> SecurityAccounting {
        let x = self.x.counts(conv);
        SecurityAccounting::from_counts(
            cfg,
            self.n_quantum,
            self.port_clicks,
            self.triples,
            &self.z,
            &x,
        )
    }
}
