//! Per-user pulse trains: frame layout, decoy intensity choice, phase randomization.

use rand::{Rng, RngExt};
use thiserror::Error;

use crate::config::SystemConfig;
use crate::types::{IntensityTag, PhaseIndex, PulseDescriptor, SlotRole, User};

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("frame_len {0} is below the minimum of 100")]
    TooShort(usize),
    #[error(
        "frame of {frame_len} slots at duty {duty} leaves no room for reference and marker slots"
    )]
    NoRoom { frame_len: usize, duty: f64 },
}

/// Slot roles of one frame. Quantum block first, then plain reference, then
/// the half-pi markers and finally the three-half-pi markers.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSchedule {
    pub frame_len: usize,
    pub roles: Vec<SlotRole>,
    pub n_quantum: usize,
    pub n_reference: usize,
    pub n_half: usize,
    pub n_three: usize,
}

impl FrameSchedule {
    pub fn role(&self, offset: usize) -> SlotRole {
        self.roles[offset]
    }

    pub fn role_of_slot(&self, slot: u64) -> SlotRole {
        self.roles[(slot % self.frame_len as u64) as usize]
    }

    pub fn count(&self, role: SlotRole) -> usize {
        match role {
            SlotRole::Quantum => self.n_quantum,
            SlotRole::Reference => self.n_reference,
            SlotRole::MarkerHalfPi => self.n_half,
            SlotRole::MarkerThreeHalfPi => self.n_three,
        }
    }
}

pub fn build_frame_schedule(
    cfg: &SystemConfig,
    frame_len: usize,
) -> Result<FrameSchedule, ScheduleError> {
    if frame_len < 100 {
        return Err(ScheduleError::TooShort(frame_len));
    }
    let no_room = ScheduleError::NoRoom {
        frame_len,
        duty: cfg.quantum_duty,
    };
    let n_quantum = (cfg.quantum_duty * frame_len as f64 - 1e-9).ceil().max(0.0) as usize;
    if n_quantum >= frame_len {
        return Err(no_room);
    }
    let rest = frame_len - n_quantum;
    let markers = rest / 10;
    if markers < 2 || rest - markers < 1 {
        return Err(no_room);
    }
    let n_half = markers.div_ceil(2);
    let n_three = markers - n_half;
    let n_reference = rest - markers;
    let mut roles = Vec::with_capacity(frame_len);
    roles.extend(std::iter::repeat_n(SlotRole::Quantum, n_quantum));
    roles.extend(std::iter::repeat_n(SlotRole::Reference, n_reference));
    roles.extend(std::iter::repeat_n(SlotRole::MarkerHalfPi, n_half));
    roles.extend(std::iter::repeat_n(SlotRole::MarkerThreeHalfPi, n_three));
    Ok(FrameSchedule {
        frame_len,
        roles,
        n_quantum,
        n_reference,
        n_half,
        n_three,
    })
}

/// The user applying the marker offset in a marker slot; rotates with the slot.
pub fn marker_designee(slot: u64) -> User {
    User::ALL[(slot % 3) as usize]
}

/// Phase offset a user applies in a slot of the given role.
pub fn role_phase(user: User, slot: u64, role: SlotRole) -> PhaseIndex {
    match role {
        SlotRole::MarkerHalfPi if marker_designee(slot) == user => PhaseIndex::HALF_PI,
        SlotRole::MarkerThreeHalfPi if marker_designee(slot) == user => PhaseIndex::THREE_HALF_PI,
        _ => PhaseIndex::ZERO,
    }
}

pub fn sample_tag<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> IntensityTag {
    let u: f64 = rng.random();
    if u < cfg.p_mu {
        IntensityTag::Signal
    } else if u < cfg.p_mu + cfg.p_nu {
        IntensityTag::Decoy
    } else {
        IntensityTag::Vacuum
    }
}

pub fn sample_pulse<R: Rng + ?Sized>(
    user: User,
    slot: u64,
    role: SlotRole,
    cfg: &SystemConfig,
    rng: &mut R,
) -> PulseDescriptor {
    let (intensity, phase) = if role.is_quantum() {
        let tag = sample_tag(cfg, rng);
        let n = rng.random_range(0..PhaseIndex::LEVELS);
        (cfg.intensity(tag), PhaseIndex::wrapping(n as i64))
    } else {
        (
            cfg.intensity(IntensityTag::Reference),
            role_phase(user, slot, role),
        )
    };
    PulseDescriptor {
        user,
        slot,
        role,
        intensity,
        phase,
    }
}
