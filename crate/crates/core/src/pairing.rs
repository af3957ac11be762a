//! Port-indexed sliding-window pairing of click streams into triples.
//!
//! For each P1 click in slot order, the P2 candidates inside the window are
//! tried earliest first; for each one the earliest unconsumed P3 click that
//! keeps the span within the window completes the triple. A P1 click with no
//! completion is dropped.

use std::collections::VecDeque;

use rand::RngExt;
use rand_distr::{Distribution, Geometric};
use thiserror::Error;

use crate::rng::{substream, tag};
use crate::types::{ClickRecord, PortId, Side, User};

#[derive(Debug, Error, PartialEq)]
pub enum PairingError {
    #[error("stream {port} is not strictly increasing at slot {slot}")]
    Unsorted { port: PortId, slot: u64 },
    #[error("click from {found} found in the {expected} stream")]
    WrongPort { expected: PortId, found: PortId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TripleEvent {
    pub c1: ClickRecord,
    pub c2: ClickRecord,
    pub c3: ClickRecord,
}

impl TripleEvent {
    pub fn clicks(&self) -> [ClickRecord; 3] {
        [self.c1, self.c2, self.c3]
    }

    pub fn slots(&self) -> [u64; 3] {
        [self.c1.slot, self.c2.slot, self.c3.slot]
    }

    pub fn span(&self) -> u64 {
        let s = self.slots();
        s.iter().max().unwrap() - s.iter().min().unwrap()
    }

    pub fn click(&self, port: PortId) -> ClickRecord {
        self.clicks()[port.index()]
    }

    /// The user's (first, second) slots in canonical port order.
    pub fn user_slots(&self, user: User) -> (u64, u64) {
        let [a, b] = user.canonical_ports();
        (self.click(a).slot, self.click(b).slot)
    }

    /// Number of L clicks mod 2.
    pub fn parity(&self) -> u8 {
        self.clicks().iter().filter(|c| c.side == Side::L).count() as u8 % 2
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    slot: u64,
    side: Side,
    used: bool,
}

/// Streaming pairer. Clicks are pushed per port in slot order; `drain` emits
/// every triple whose P1 click is final given a horizon.
#[derive(Debug, Clone)]
pub struct Pairer {
    window: u64,
    queues: [VecDeque<Entry>; 3],
    last: [Option<u64>; 3],
}

impl Pairer {
    pub fn new(window: u64) -> Self {
        Pairer {
            window,
            queues: Default::default(),
            last: [None; 3],
        }
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn push(&mut self, click: ClickRecord) -> Result<(), PairingError> {
        let p = click.port.index();
        if self.last[p].is_some_and(|l| click.slot <= l) {
            return Err(PairingError::Unsorted {
                port: click.port,
                slot: click.slot,
            });
        }
        self.last[p] = Some(click.slot);
        self.queues[p].push_back(Entry {
            slot: click.slot,
            side: click.side,
            used: false,
        });
        Ok(())
    }

    /// Pending clicks across all ports.
    pub fn pending(&self) -> usize {
        self.queues.iter().map(|q| q.len()).sum()
    }

    /// Oldest slot any future triple can still reference.
    pub fn oldest_live_slot(&self) -> Option<u64> {
        self.queues
            .iter()
            .filter_map(|q| q.front().map(|e| e.slot))
            .min()
    }

    /// Processes P1 clicks `s1` with `s1 + window <= horizon`. Every click at
    /// or below `horizon` must already have been pushed on all ports.
    pub fn drain(&mut self, horizon: u64, out: &mut impl FnMut(TripleEvent)) {
        while let Some(front) = self.queues[0].front() {
            if front.slot.saturating_add(self.window) > horizon {
                break;
            }
            self.step(out);
        }
    }

    /// Processes all remaining P1 clicks.
    pub fn finish(&mut self, out: &mut impl FnMut(TripleEvent)) {
        while !self.queues[0].is_empty() {
            self.step(out);
        }
    }

    fn step(&mut self, out: &mut impl FnMut(TripleEvent)) {
        let e1 = self.queues[0].pop_front().expect("nonempty");
        let s1 = e1.slot;
        let w = self.window;
        if let Some((i2, i3)) = self.find(s1) {
            let [_, q2, q3] = &mut self.queues;
            q2[i2].used = true;
            q3[i3].used = true;
            let rec = |port, e: &Entry| ClickRecord {
                port,
                slot: e.slot,
                side: e.side,
            };
            out(TripleEvent {
                c1: rec(PortId::P1, &e1),
                c2: rec(PortId::P2, &q2[i2]),
                c3: rec(PortId::P3, &q3[i3]),
            });
        }
        let lo = s1.saturating_sub(w);
        for q in &mut self.queues[1..] {
            while q.front().is_some_and(|e| e.used || e.slot < lo) {
                q.pop_front();
            }
        }
    }

    fn find(&self, s1: u64) -> Option<(usize, usize)> {
        let w = self.window;
        let (q2, q3) = (&self.queues[1], &self.queues[2]);
        let lo2 = s1.saturating_sub(w);
        let hi2 = s1.saturating_add(w);
        let start2 = q2.partition_point(|e| e.slot < lo2);
        for i2 in start2..q2.len() {
            let e2 = &q2[i2];
            if e2.slot > hi2 {
                break;
            }
            if e2.used {
                continue;
            }
            let s2 = e2.slot;
            let lo3 = s1.max(s2).saturating_sub(w);
            let hi3 = s1.min(s2).saturating_add(w);
            let start3 = q3.partition_point(|e| e.slot < lo3);
            let first = (start3..q3.len()).find(|&i| !q3[i].used)?;
            if q3[first].slot <= hi3 {
                return Some((i2, first));
            }
            if s2 >= s1 {
                // hi3 is fixed from here on while lo3 only grows
                return None;
            }
        }
        None
    }
}

fn check_stream(stream: &[ClickRecord], port: PortId) -> Result<(), PairingError> {
    for (i, c) in stream.iter().enumerate() {
        if c.port != port {
            return Err(PairingError::WrongPort {
                expected: port,
                found: c.port,
            });
        }
        if i > 0 && c.slot <= stream[i - 1].slot {
            return Err(PairingError::Unsorted { port, slot: c.slot });
        }
    }
    Ok(())
}

/// Batch pairing over complete per-port streams, ordered by P1 slot.
pub fn pair_clicks(
    streams: [&[ClickRecord]; 3],
    window_slots: u64,
) -> Result<Vec<TripleEvent>, PairingError> {
    for (s, port) in streams.iter().zip(PortId::ALL) {
        check_stream(s, port)?;
    }
    let mut p = Pairer::new(window_slots);
    let mut out = Vec::new();
    let mut idx = [0usize; 3];
    // interleave pushes so queues stay short
    for c1 in streams[0] {
        let horizon = c1.slot.saturating_add(window_slots);
        for k in 1..3 {
            while idx[k] < streams[k].len() && streams[k][idx[k]].slot <= horizon {
                p.push(streams[k][idx[k]])?;
                idx[k] += 1;
            }
        }
        p.push(*c1)?;
        p.drain(horizon, &mut |t| out.push(t));
    }
    p.finish(&mut |t| out.push(t));
    Ok(out)
}

/// Slots at which all three ports hold a click.
pub fn coincidences(streams: [&[ClickRecord]; 3]) -> Vec<u64> {
    let (mut i, mut j, mut k) = (0, 0, 0);
    let [a, b, c] = streams;
    let mut out = Vec::new();
    while i < a.len() && j < b.len() && k < c.len() {
        let (x, y, z) = (a[i].slot, b[j].slot, c[k].slot);
        let m = x.max(y).max(z);
        if x == m && y == m && z == m {
            out.push(m);
            i += 1;
            j += 1;
            k += 1;
        } else {
            if x < m {
                i += 1;
            }
            if y < m {
                j += 1;
            }
            if z < m {
                k += 1;
            }
        }
    }
    out
}

/// Independent per-port click streams with click probability `p_click` per
/// slot over `n_slots` slots.
pub fn bernoulli_streams(p_click: f64, n_slots: u64, seed: u64) -> [Vec<ClickRecord>; 3] {
    PortId::ALL.map(|port| {
        let mut rng = substream(seed, tag::STREAMS, port.index() as u64);
        let mut out = Vec::new();
        if !(p_click > 0.0) {
            return out;
        }
        let geo = (p_click < 1.0).then(|| Geometric::new(p_click).expect("probability in (0, 1)"));
        let mut slot = 0u64;
        loop {
            let skip = geo.as_ref().map_or(0, |g| g.sample(&mut rng));
            slot = match slot.checked_add(skip) {
                Some(s) if s < n_slots => s,
                _ => break,
            };
            let side = if rng.random_bool(0.5) {
                Side::R
            } else {
                Side::L
            };
            out.push(ClickRecord { port, slot, side });
            slot += 1;
        }
        out
    })
}

/// One row of the window scan: triples formed by pairing against those
/// found in a single slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRow {
    pub window: u64,
    pub clicks: u64,
    pub paired: u64,
    pub coincidences: u64,
}

pub fn window_scan(
    streams: &[Vec<ClickRecord>; 3],
    windows: &[u64],
) -> Result<Vec<WindowRow>, PairingError> {
    let refs = [&streams[0][..], &streams[1][..], &streams[2][..]];
    let clicks = streams.iter().map(|s| s.len() as u64).min().unwrap_or(0);
    let coincidences = coincidences(refs).len() as u64;
    windows
        .iter()
        .map(|&w| {
            Ok(WindowRow {
                window: w,
                clicks,
                paired: pair_clicks(refs, w)?.len() as u64,
                coincidences,
            })
        })
        .collect()
}
