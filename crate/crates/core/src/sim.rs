//! Monte Carlo runs: pulse trains, detection, pairing, sifting and phase
//! compensation over a sequence of frames.
//!
//! Two engines share the drift path and the downstream pipeline. `Slot`
//! samples every pulse of every slot. `Fast` jumps between quantum slots in
//! which at least one detector fires; the probability of that depends only on
//! the users' total intensity, so the skip is exact. Reference counts are then
//! drawn per drift tick as binomials, which is also exact because the drift
//! is constant within a tick.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, RngExt};
use rand_distr::{Binomial, Distribution, Geometric};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, SystemConfig};
use crate::emitter::{
    FrameSchedule, ScheduleError, build_frame_schedule, marker_designee, sample_pulse,
};
use crate::optics::{DriftState, advance_drift, click_prob, port_intensities, simulate_slot};
use crate::pairing::{Pairer, TripleEvent};
use crate::phase::{PhaseEstimate, PhaseTracker, ReferenceCounts, SignConvention};
use crate::rng::{StreamRng, substream, tag};
use crate::sift::{SiftError, SiftedEvent, Tallies, classify_event};
use crate::types::{
    ClickRecord, IntensityTag, PhaseIndex, PortId, PortOutcome, PulseDescriptor, Side, SlotRole,
    User,
};

/// Slots over which the fiber phases are held constant.
pub const DRIFT_TICK: u64 = 1000;

/// Frames per independent shard.
pub const DEFAULT_SHARD_FRAMES: u64 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Fast,
    Slot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Quantum slots to simulate, rounded up to whole frames.
    pub quantum_slots: u64,
    pub seed: u64,
    pub engine: Engine,
    /// Sign flips applied to the estimator, as a miswired reference would.
    pub inject: SignConvention,
    /// When off, every phase estimate is taken as zero.
    pub compensate: bool,
    pub keep_events: bool,
    pub keep_phase_log: bool,
    pub keep_clicks: bool,
    /// `Slot` keeps every pulse; `Fast` only pulses of slots with a click.
    pub keep_pulses: bool,
    pub shard_frames: u64,
}

impl SimOptions {
    pub fn new(quantum_slots: u64, seed: u64) -> Self {
        SimOptions {
            quantum_slots,
            seed,
            engine: Engine::Fast,
            inject: SignConvention::IDENTITY,
            compensate: true,
            keep_events: false,
            keep_phase_log: false,
            keep_clicks: false,
            keep_pulses: false,
            shard_frames: DEFAULT_SHARD_FRAMES,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Sift(#[from] SiftError),
}

/// A sifted event with the raw per-port estimates active at its clicks.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub event: SiftedEvent,
    pub theta_hat: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOutput {
    pub frames: u64,
    pub tallies: Tallies,
    pub events: Vec<EventRecord>,
    pub phase_log: Vec<PhaseEstimate>,
    pub clicks: Vec<ClickRecord>,
    pub pulses: Vec<PulseDescriptor>,
    /// Triples in which a user's two clicks share a slot.
    pub shared_slot_events: u64,
}

impl SimOutput {
    fn append(&mut self, o: SimOutput) {
        self.frames += o.frames;
        self.tallies.merge(o.tallies);
        self.events.extend(o.events);
        self.phase_log.extend(o.phase_log);
        self.clicks.extend(o.clicks);
        self.pulses.extend(o.pulses);
        self.shared_slot_events += o.shared_slot_events;
    }
}

pub fn simulate(cfg: &SystemConfig, opts: &SimOptions) -> Result<SimOutput, SimError> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(ConfigError::Invalid(v).into());
    }
    let sched = build_frame_schedule(cfg, cfg.frame_len)?;
    let per_frame = sched.n_quantum as u64;
    let frames = opts.quantum_slots.div_ceil(per_frame).max(1);
    let shard_frames = opts.shard_frames.max(1);
    let shards = frames.div_ceil(shard_frames);
    let ctx = Context::new(cfg, &sched);
    let parts: Vec<Result<SimOutput, SimError>> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let first = k * shard_frames;
            let last = (first + shard_frames).min(frames);
            run_shard(&ctx, opts, k, first..last)
        })
        .collect();
    let mut out = SimOutput::default();
    for p in parts {
        out.append(p?);
    }
    Ok(out)
}

/// Reference-slot bins as seen from one port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bin {
    Plain,
    Half,
    Three,
}

const BINS: [Bin; 3] = [Bin::Plain, Bin::Half, Bin::Three];

fn bin_offset(b: Bin) -> f64 {
    match b {
        Bin::Plain => 0.0,
        Bin::Half => FRAC_PI_2,
        Bin::Three => 1.5 * PI,
    }
}

/// Which estimator bin a non-quantum slot feeds at `port`.
fn slot_bin(port: PortId, slot: u64, role: SlotRole) -> Bin {
    let (u, v) = port.users();
    let d = marker_designee(slot);
    match role {
        SlotRole::MarkerHalfPi if d == u => Bin::Half,
        SlotRole::MarkerHalfPi if d == v => Bin::Three,
        SlotRole::MarkerThreeHalfPi if d == u => Bin::Three,
        SlotRole::MarkerThreeHalfPi if d == v => Bin::Half,
        _ => Bin::Plain,
    }
}

fn add_count(c: &mut ReferenceCounts, bin: Bin, side: Side) {
    let cell = match (bin, side) {
        (Bin::Plain, Side::R) => &mut c.n_r,
        (Bin::Plain, Side::L) => &mut c.n_l,
        (Bin::Half, Side::R) => &mut c.n_r_half,
        (Bin::Half, Side::L) => &mut c.n_l_half,
        (Bin::Three, Side::R) => &mut c.n_r_three,
        (Bin::Three, Side::L) => &mut c.n_l_three,
    };
    *cell += 1;
}

/// Per frame-phase (frame start mod 3), per port, per drift tick: slots per bin.
type BinTable = [Vec<[[u64; 3]; 3]>; 3];

struct Context<'a> {
    cfg: &'a SystemConfig,
    sched: &'a FrameSchedule,
    ticks: usize,
    bins: BinTable,
    /// Intensity-tag triples with prior weight and any-click probability.
    combos: Vec<([IntensityTag; 3], f64)>,
    combo_cdf: Vec<f64>,
    p_any: f64,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a SystemConfig, sched: &'a FrameSchedule) -> Self {
        let len = sched.frame_len as u64;
        let ticks = len.div_ceil(DRIFT_TICK) as usize;
        let bins = std::array::from_fn(|phase| {
            let mut t = vec![[[0u64; 3]; 3]; ticks];
            for off in 0..len {
                let role = sched.role(off as usize);
                if role.is_quantum() {
                    continue;
                }
                let slot = phase as u64 + off;
                for port in PortId::ALL {
                    let b = slot_bin(port, slot, role) as usize;
                    t[(off / DRIFT_TICK) as usize][port.index()][b] += 1;
                }
            }
            t
        });
        let tags = [
            IntensityTag::Signal,
            IntensityTag::Decoy,
            IntensityTag::Vacuum,
        ];
        let prob = |t: IntensityTag| match t {
            IntensityTag::Signal => cfg.p_mu,
            IntensityTag::Decoy => cfg.p_nu,
            _ => cfg.p_vacuum(),
        };
        let none_dark = (1.0 - cfg.dark_count_prob).powi(6);
        let mut combos = Vec::with_capacity(27);
        for a in tags {
            for b in tags {
                for c in tags {
                    let k: f64 = [a, b, c].iter().map(|t| cfg.intensity(*t).value).sum();
                    let eta_k = cfg.detector_efficiency * cfg.per_arm_transmittance * k;
                    let any = 1.0 - none_dark * (-eta_k).exp();
                    combos.push(([a, b, c], prob(a) * prob(b) * prob(c) * any));
                }
            }
        }
        let p_any: f64 = combos.iter().map(|c| c.1).sum();
        let mut acc = 0.0;
        let combo_cdf = combos
            .iter()
            .map(|c| {
                acc += c.1;
                acc / p_any
            })
            .collect();
        Context {
            cfg,
            sched,
            ticks,
            bins,
            combos,
            combo_cdf,
            p_any,
        }
    }
}

struct Shard<'c, 'a> {
    ctx: &'c Context<'a>,
    opts: &'c SimOptions,
    drift: DriftState,
    drift_rng: StreamRng,
    tracker: PhaseTracker,
    pairer: Pairer,
    sent: BTreeMap<u64, [PulseDescriptor; 3]>,
    estimates: VecDeque<(u64, [Option<f64>; 3])>,
    out: SimOutput,
}

fn run_shard(
    ctx: &Context,
    opts: &SimOptions,
    shard: u64,
    frames: std::ops::Range<u64>,
) -> Result<SimOutput, SimError> {
    let len = ctx.sched.frame_len as u64;
    let start = frames.start * len;
    let mut init = substream(opts.seed, tag::INIT, shard);
    let mut s = Shard {
        ctx,
        opts,
        drift: DriftState::uniform(start, &mut init),
        drift_rng: substream(opts.seed, tag::DRIFT, shard),
        tracker: PhaseTracker::new(),
        pairer: Pairer::new(ctx.cfg.window_slots),
        sent: BTreeMap::new(),
        estimates: VecDeque::new(),
        out: SimOutput::default(),
    };
    for f in frames {
        s.frame(f)?;
    }
    let mut triples = Vec::new();
    s.pairer.finish(&mut |t| triples.push(t));
    s.sift(&triples)?;
    Ok(s.out)
}

impl Shard<'_, '_> {
    fn frame(&mut self, f: u64) -> Result<(), SimError> {
        let ctx = self.ctx;
        let len = ctx.sched.frame_len as u64;
        let base = f * len;
        let drift: Vec<DriftState> = (0..ctx.ticks as u64)
            .map(|t| {
                self.drift = advance_drift(
                    &self.drift,
                    base + t * DRIFT_TICK,
                    ctx.cfg,
                    &mut self.drift_rng,
                );
                self.drift
            })
            .collect();
        let mut rng = substream(self.opts.seed, tag::FRAME, f);
        let mut clicks: [Vec<ClickRecord>; 3] = Default::default();
        let mut counts = [ReferenceCounts::default(); 3];
        match self.opts.engine {
            Engine::Fast => {
                self.fast_quantum(base, &drift, &mut rng, &mut clicks);
                let mut rrng = substream(self.opts.seed, tag::REFERENCE, f);
                fast_reference(ctx, base, &drift, &mut rrng, &mut counts);
            }
            Engine::Slot => self.slot_frame(base, &drift, &mut rng, &mut clicks, &mut counts),
        }
        self.out.frames += 1;
        self.out.tallies.n_quantum += ctx.sched.n_quantum as f64;

        let mut est = [None; 3];
        for port in PortId::ALL {
            let mut c = counts[port.index()];
            if self.opts.inject.flips[port.index()] {
                c = c.mirrored();
            }
            let mut e = self.tracker.update(port, f, c);
            if !self.opts.compensate {
                e.theta_hat = Some(0.0);
            }
            est[port.index()] = e.theta_hat;
            if self.opts.keep_phase_log {
                self.out.phase_log.push(e);
            }
        }
        self.estimates.push_back((f, est));

        for (p, cs) in clicks.iter().enumerate() {
            self.out.tallies.port_clicks[p] += cs.len() as f64;
            for c in cs {
                self.pairer
                    .push(*c)
                    .expect("clicks are generated in slot order");
            }
            if self.opts.keep_clicks {
                self.out.clicks.extend_from_slice(cs);
            }
        }
        let mut triples = Vec::new();
        self.pairer.drain(base + len - 1, &mut |t| triples.push(t));
        self.sift(&triples)?;

        // forget pulses and estimates no future triple can reach
        let oldest = self.pairer.oldest_live_slot().unwrap_or(base + len);
        while self
            .sent
            .first_key_value()
            .is_some_and(|(s, _)| *s < oldest)
        {
            self.sent.pop_first();
        }
        let oldest_frame = oldest / len;
        while self.estimates.front().is_some_and(|e| e.0 < oldest_frame) {
            self.estimates.pop_front();
        }
        Ok(())
    }

    fn sift(&mut self, triples: &[TripleEvent]) -> Result<(), SimError> {
        let len = self.ctx.sched.frame_len as u64;
        for t in triples {
            let ev = classify_event(t, |u, s| self.sent.get(&s).map(|p| p[u.index()]))?;
            let mut theta = [0.0; 3];
            let mut ok = true;
            for (p, c) in t.clicks().iter().enumerate() {
                let f = c.slot / len;
                let i = self.estimates.partition_point(|e| e.0 < f);
                match self
                    .estimates
                    .get(i)
                    .filter(|e| e.0 == f)
                    .and_then(|e| e.1[p])
                {
                    Some(x) => theta[p] = x,
                    None => ok = false,
                }
            }
            let theta_hat = ok.then_some(theta);
            self.out.tallies.triples += 1.0;
            self.out.shared_slot_events += ev.shared_slot as u64;
            self.out.tallies.add_event(&ev, theta_hat);
            if self.opts.keep_events {
                self.out.events.push(EventRecord {
                    event: ev,
                    theta_hat,
                });
            }
        }
        Ok(())
    }

    fn fast_quantum(
        &mut self,
        base: u64,
        drift: &[DriftState],
        rng: &mut StreamRng,
        clicks: &mut [Vec<ClickRecord>; 3],
    ) {
        let ctx = self.ctx;
        let cfg = ctx.cfg;
        let nq = ctx.sched.n_quantum as u64;
        if ctx.p_any <= 0.0 {
            return;
        }
        let geo =
            (ctx.p_any < 1.0).then(|| Geometric::new(ctx.p_any).expect("probability in (0, 1)"));
        let mut i = 0u64;
        loop {
            i += geo.as_ref().map_or(0, |g| g.sample(rng));
            if i >= nq {
                break;
            }
            let slot = base + i;
            let u: f64 = rng.random();
            let c = ctx
                .combo_cdf
                .partition_point(|x| *x < u)
                .min(ctx.combos.len() - 1);
            let tags = ctx.combos[c].0;
            let pulses: [PulseDescriptor; 3] = std::array::from_fn(|k| PulseDescriptor {
                user: User::ALL[k],
                slot,
                role: SlotRole::Quantum,
                intensity: cfg.intensity(tags[k]),
                phase: PhaseIndex::wrapping(rng.random_range(0..16)),
            });
            let d = &drift[(i / DRIFT_TICK) as usize];
            let mut p = [0.0; 6];
            for port in PortId::ALL {
                let (a, b) = port.users();
                let (ir, il) = crate::optics::port_mean_photons(
                    &pulses[a.index()],
                    &pulses[b.index()],
                    d,
                    cfg,
                );
                p[2 * port.index()] = click_prob(ir, cfg);
                p[2 * port.index() + 1] = click_prob(il, cfg);
            }
            let fired = sample_given_any(&p, rng);
            let mut any_single = false;
            for port in PortId::ALL {
                let k = 2 * port.index();
                let o = PortOutcome::from_fired(fired[k], fired[k + 1]);
                if let Some(side) = o.single_side() {
                    any_single = true;
                    clicks[port.index()].push(ClickRecord { port, slot, side });
                }
            }
            if any_single {
                self.sent.insert(slot, pulses);
                if self.opts.keep_pulses {
                    self.out.pulses.extend_from_slice(&pulses);
                }
            }
            i += 1;
        }
    }

    fn slot_frame(
        &mut self,
        base: u64,
        drift: &[DriftState],
        rng: &mut StreamRng,
        clicks: &mut [Vec<ClickRecord>; 3],
        counts: &mut [ReferenceCounts; 3],
    ) {
        let cfg = self.ctx.cfg;
        for off in 0..self.ctx.sched.frame_len {
            let slot = base + off as u64;
            let role = self.ctx.sched.role(off);
            let pulses = User::ALL.map(|u| sample_pulse(u, slot, role, cfg, rng));
            let outcome = simulate_slot(&pulses, &drift[off / DRIFT_TICK as usize], cfg, rng);
            if self.opts.keep_pulses {
                self.out.pulses.extend_from_slice(&pulses);
            }
            let mut any_single = false;
            for port in PortId::ALL {
                let Some(side) = outcome[port.index()].single_side() else {
                    continue;
                };
                if role.is_quantum() {
                    any_single = true;
                    clicks[port.index()].push(ClickRecord { port, slot, side });
                } else {
                    add_count(&mut counts[port.index()], slot_bin(port, slot, role), side);
                }
            }
            if any_single {
                self.sent.insert(slot, pulses);
            }
        }
    }
}

/// Samples independent detectors conditioned on at least one firing.
fn sample_given_any<R: Rng + ?Sized>(p: &[f64; 6], rng: &mut R) -> [bool; 6] {
    let none: f64 = p.iter().map(|x| 1.0 - x).product();
    let mut r = rng.random::<f64>() * (1.0 - none);
    let mut first = p.iter().rposition(|x| *x > 0.0).unwrap_or(0);
    let mut alive = 1.0;
    for (j, &pj) in p.iter().enumerate() {
        let w = alive * pj;
        if r < w {
            first = j;
            break;
        }
        r -= w;
        alive *= 1.0 - pj;
    }
    let mut fired = [false; 6];
    fired[first] = true;
    for j in first + 1..6 {
        fired[j] = rng.random::<f64>() < p[j];
    }
    fired
}

fn fast_reference(
    ctx: &Context,
    base: u64,
    drift: &[DriftState],
    rng: &mut StreamRng,
    counts: &mut [ReferenceCounts; 3],
) {
    let cfg = ctx.cfg;
    let k = cfg.reference_value();
    let table = &ctx.bins[(base % 3) as usize];
    for (t, row) in table.iter().enumerate() {
        for port in PortId::ALL {
            let rel = drift[t].relative(port);
            for b in BINS {
                let n = row[port.index()][b as usize];
                if n == 0 {
                    continue;
                }
                let (ir, il) = port_intensities(k, k, rel + bin_offset(b), cfg);
                let (pr, pl) = (click_prob(ir, cfg), click_prob(il, cfg));
                let only_r = pr * (1.0 - pl);
                let only_l = pl * (1.0 - pr);
                let nr = binomial(n, only_r, rng);
                let rest = 1.0 - only_r;
                let nl = if rest > 0.0 {
                    binomial(n - nr, (only_l / rest).min(1.0), rng)
                } else {
                    0
                };
                let c = &mut counts[port.index()];
                match b {
                    Bin::Plain => {
                        c.n_r += nr;
                        c.n_l += nl;
                    }
                    Bin::Half => {
                        c.n_r_half += nr;
                        c.n_l_half += nl;
                    }
                    Bin::Three => {
                        c.n_r_three += nr;
                        c.n_l_three += nl;
                    }
                }
            }
        }
    }
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    Binomial::new(n, p.min(1.0))
        .expect("valid binomial")
        .sample(rng)
}
