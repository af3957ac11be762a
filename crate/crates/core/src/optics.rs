//! Central node: two-input interference per port, threshold detectors, fiber drift.
//!
//! Each user reaches each of its two ports through its own fiber path, so the
//! drift state carries six path phases. A port sees the difference of its two
//! input paths.

use std::f64::consts::TAU;

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use crate::config::SystemConfig;
use crate::types::{PortId, PortOutcome, PulseDescriptor, User};

pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU { 0.0 } else { r }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftState {
    /// `theta[port][0]` is the path of the port's first user, `[1]` the second.
    pub theta: [[f64; 2]; 3],
    pub slot_of_last_update: u64,
}

impl DriftState {
    pub fn zero() -> Self {
        DriftState {
            theta: [[0.0; 2]; 3],
            slot_of_last_update: 0,
        }
    }

    pub fn uniform<R: Rng + ?Sized>(slot: u64, rng: &mut R) -> Self {
        let mut theta = [[0.0; 2]; 3];
        for p in &mut theta {
            for t in p.iter_mut() {
                *t = rng.random::<f64>() * TAU;
            }
        }
        DriftState {
            theta,
            slot_of_last_update: slot,
        }
    }

    /// Path phase of `user` toward `port`.
    pub fn path(&self, user: User, port: PortId) -> f64 {
        let (u, _) = port.users();
        self.theta[port.index()][if u == user { 0 } else { 1 }]
    }

    /// Fiber phase difference seen at the port, first input minus second.
    pub fn relative(&self, port: PortId) -> f64 {
        let t = self.theta[port.index()];
        wrap_phase(t[0] - t[1])
    }
}

/// Raw Gaussian increments for an elapsed number of slots.
pub fn drift_increments<R: Rng + ?Sized>(
    elapsed_slots: u64,
    cfg: &SystemConfig,
    rng: &mut R,
) -> [[f64; 2]; 3] {
    let mut d = [[0.0; 2]; 3];
    if cfg.drift_rate == 0.0 || elapsed_slots == 0 {
        return d;
    }
    let sigma = (cfg.drift_rate * elapsed_slots as f64 / cfg.rep_rate).sqrt();
    for p in &mut d {
        for x in p.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = sigma * z;
        }
    }
    d
}

pub fn advance_drift<R: Rng + ?Sized>(
    state: &DriftState,
    to_slot: u64,
    cfg: &SystemConfig,
    rng: &mut R,
) -> DriftState {
    assert!(
        to_slot >= state.slot_of_last_update,
        "drift cannot run backwards"
    );
    let inc = drift_increments(to_slot - state.slot_of_last_update, cfg, rng);
    let mut next = *state;
    for p in 0..3 {
        for w in 0..2 {
            next.theta[p][w] = wrap_phase(state.theta[p][w] + inc[p][w]);
        }
    }
    next.slot_of_last_update = to_slot;
    next
}

/// Mean photon numbers `(I_R, I_L)` for inputs of mean `k_u`, `k_v` with
/// total phase difference `dpsi = psi_u - psi_v`.
pub fn port_intensities(k_u: f64, k_v: f64, dpsi: f64, cfg: &SystemConfig) -> (f64, f64) {
    let eta = cfg.per_arm_transmittance;
    let au2 = k_u * eta / 2.0;
    let av2 = k_v * eta / 2.0;
    let cross = 2.0 * cfg.visibility * (au2 * av2).sqrt() * dpsi.cos();
    ((au2 + av2 + cross) / 2.0, (au2 + av2 - cross) / 2.0)
}

pub fn port_mean_photons(
    pulse_u: &PulseDescriptor,
    pulse_v: &PulseDescriptor,
    drift: &DriftState,
    cfg: &SystemConfig,
) -> (f64, f64) {
    let port =
        port_of(pulse_u.user, pulse_v.user).expect("pulses must be the designated pair of a port");
    let psi_u = pulse_u.phase.radians() + drift.path(pulse_u.user, port);
    let psi_v = pulse_v.phase.radians() + drift.path(pulse_v.user, port);
    port_intensities(
        pulse_u.intensity.value,
        pulse_v.intensity.value,
        psi_u - psi_v,
        cfg,
    )
}

/// The port whose ordered input pair is `(u, v)`.
pub fn port_of(u: User, v: User) -> Option<PortId> {
    PortId::ALL.into_iter().find(|p| p.users() == (u, v))
}

pub fn click_prob(intensity: f64, cfg: &SystemConfig) -> f64 {
    -((1.0 - cfg.dark_count_prob).ln() - cfg.detector_efficiency * intensity).exp_m1()
}

pub fn detect<R: Rng + ?Sized>(intensity: f64, cfg: &SystemConfig, rng: &mut R) -> bool {
    rng.random::<f64>() < click_prob(intensity, cfg)
}

/// Samples all three ports for one slot. `pulses` are indexed by user.
pub fn simulate_slot<R: Rng + ?Sized>(
    pulses: &[PulseDescriptor; 3],
    drift: &DriftState,
    cfg: &SystemConfig,
    rng: &mut R,
) -> [PortOutcome; 3] {
    debug_assert!(pulses.iter().all(|p| p.slot == pulses[0].slot));
    PortId::ALL.map(|port| {
        let (u, v) = port.users();
        let (ir, il) = port_mean_photons(&pulses[u.index()], &pulses[v.index()], drift, cfg);
        let r = detect(ir, cfg, rng);
        let l = detect(il, cfg, rng);
        PortOutcome::from_fired(r, l)
    })
}
