//! Shared value types: users, ports, pulses, clicks.

use std::f64::consts::PI;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum User {
    A,
    B,
    C,
}

impl User {
    pub const ALL: [User; 3] = [User::A, User::B, User::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<User> {
        Self::ALL.get(i).copied()
    }

    /// The user's two ports in canonical order: the port where the user is the
    /// first input, then the port where it is the second input.
    pub fn canonical_ports(self) -> [PortId; 2] {
        match self {
            User::A => [PortId::P1, PortId::P3],
            User::B => [PortId::P2, PortId::P1],
            User::C => [PortId::P3, PortId::P2],
        }
    }
}

impl fmt::Display for User {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            User::A => "A",
            User::B => "B",
            User::C => "C",
        };
        f.write_str(s)
    }
}

/// Detection port at the central node. P1 interferes (A,B), P2 (B,C), P3 (C,A).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PortId {
    P1,
    P2,
    P3,
}

impl PortId {
    pub const ALL: [PortId; 3] = [PortId::P1, PortId::P2, PortId::P3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<PortId> {
        Self::ALL.get(i).copied()
    }

    /// (first input `u`, second input `v`).
    pub fn users(self) -> (User, User) {
        match self {
            PortId::P1 => (User::A, User::B),
            PortId::P2 => (User::B, User::C),
            PortId::P3 => (User::C, User::A),
        }
    }

    pub fn involves(self, user: User) -> bool {
        let (u, v) = self.users();
        u == user || v == user
    }
}

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.index() + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    R,
    L,
}

impl Side {
    pub fn as_u8(self) -> u8 {
        match self {
            Side::R => 0,
            Side::L => 1,
        }
    }

    pub fn from_u8(b: u8) -> Option<Side> {
        match b {
            0 => Some(Side::R),
            1 => Some(Side::L),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotRole {
    Quantum,
    Reference,
    MarkerHalfPi,
    MarkerThreeHalfPi,
}

impl SlotRole {
    pub fn as_u8(self) -> u8 {
        match self {
            SlotRole::Quantum => 0,
            SlotRole::Reference => 1,
            SlotRole::MarkerHalfPi => 2,
            SlotRole::MarkerThreeHalfPi => 3,
        }
    }

    pub fn from_u8(b: u8) -> Option<SlotRole> {
        match b {
            0 => Some(SlotRole::Quantum),
            1 => Some(SlotRole::Reference),
            2 => Some(SlotRole::MarkerHalfPi),
            3 => Some(SlotRole::MarkerThreeHalfPi),
            _ => None,
        }
    }

    pub fn is_quantum(self) -> bool {
        self == SlotRole::Quantum
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IntensityTag {
    Signal,
    Decoy,
    Vacuum,
    Reference,
}

impl IntensityTag {
    pub fn as_u8(self) -> u8 {
        match self {
            IntensityTag::Signal => 0,
            IntensityTag::Decoy => 1,
            IntensityTag::Vacuum => 2,
            IntensityTag::Reference => 3,
        }
    }

    pub fn from_u8(b: u8) -> Option<IntensityTag> {
        match b {
            0 => Some(IntensityTag::Signal),
            1 => Some(IntensityTag::Decoy),
            2 => Some(IntensityTag::Vacuum),
            3 => Some(IntensityTag::Reference),
            _ => None,
        }
    }
}

/// Intensity class with its mean photon number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityClass {
    pub tag: IntensityTag,
    pub value: f64,
}

impl IntensityClass {
    pub fn vacuum() -> Self {
        IntensityClass {
            tag: IntensityTag::Vacuum,
            value: 0.0,
        }
    }
}

/// Discrete phase `2*pi*n/16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PhaseIndex(u8);

impl PhaseIndex {
    pub const LEVELS: u8 = 16;
    pub const ZERO: PhaseIndex = PhaseIndex(0);
    pub const HALF_PI: PhaseIndex = PhaseIndex(4);
    pub const THREE_HALF_PI: PhaseIndex = PhaseIndex(12);

    pub fn new(n: u8) -> Option<PhaseIndex> {
        (n < Self::LEVELS).then_some(PhaseIndex(n))
    }

    /// Reduces any integer modulo 16.
    pub fn wrapping(n: i64) -> PhaseIndex {
        PhaseIndex(n.rem_euclid(Self::LEVELS as i64) as u8)
    }

    pub fn n(self) -> u8 {
        self.0
    }

    pub fn radians(self) -> f64 {
        2.0 * PI * self.0 as f64 / Self::LEVELS as f64
    }

    pub fn sub(self, other: PhaseIndex) -> PhaseIndex {
        PhaseIndex::wrapping(self.0 as i64 - other.0 as i64)
    }

    pub fn add(self, other: PhaseIndex) -> PhaseIndex {
        PhaseIndex::wrapping(self.0 as i64 + other.0 as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseDescriptor {
    pub user: User,
    pub slot: u64,
    pub role: SlotRole,
    pub intensity: IntensityClass,
    pub phase: PhaseIndex,
}

impl PulseDescriptor {
    /// Checks the role/intensity pairing rule.
    pub fn is_consistent(&self) -> bool {
        let is_ref = self.intensity.tag == IntensityTag::Reference;
        if self.role.is_quantum() {
            !is_ref
        } else {
            is_ref
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClickRecord {
    pub port: PortId,
    pub slot: u64,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortOutcome {
    None,
    OnlyL,
    OnlyR,
    Both,
}

impl PortOutcome {
    pub fn from_fired(r: bool, l: bool) -> PortOutcome {
        match (r, l) {
            (false, false) => PortOutcome::None,
            (true, false) => PortOutcome::OnlyR,
            (false, true) => PortOutcome::OnlyL,
            (true, true) => PortOutcome::Both,
        }
    }

    /// The retained single-detector side, if any.
    pub fn single_side(self) -> Option<Side> {
        match self {
            PortOutcome::OnlyR => Some(Side::R),
            PortOutcome::OnlyL => Some(Side::L),
            _ => None,
        }
    }
}

/// Effective per-user intensity level used to label decoy combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Mu,
    Nu,
    Zero,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Mu, Level::Nu, Level::Zero];

    pub fn label(self) -> &'static str {
        match self {
            Level::Mu => "mu",
            Level::Nu => "nu",
            Level::Zero => "0",
        }
    }

    pub fn parse(s: &str) -> Option<Level> {
        match s {
            "mu" => Some(Level::Mu),
            "nu" => Some(Level::Nu),
            "0" => Some(Level::Zero),
            _ => None,
        }
    }
}

/// Per-user (A, B, C) intensity levels of a sifted event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IntensityCombo(pub [Level; 3]);

impl IntensityCombo {
    pub const MU3: IntensityCombo = IntensityCombo([Level::Mu; 3]);
    pub const NU3: IntensityCombo = IntensityCombo([Level::Nu; 3]);

    /// All 27 combinations over {mu, nu, 0}, lexicographic.
    pub fn all_z() -> Vec<IntensityCombo> {
        let mut v = Vec::with_capacity(27);
        for a in Level::ALL {
            for b in Level::ALL {
                for c in Level::ALL {
                    v.push(IntensityCombo([a, b, c]));
                }
            }
        }
        v
    }

    /// The 8 combinations over {nu, 0}.
    pub fn all_x() -> Vec<IntensityCombo> {
        Self::all_z()
            .into_iter()
            .filter(|c| c.0.iter().all(|l| *l != Level::Mu))
            .collect()
    }

    pub fn parse(s: &str) -> Option<IntensityCombo> {
        let mut it = s.split('-');
        let mut out = [Level::Zero; 3];
        for slot in &mut out {
            *slot = Level::parse(it.next()?)?;
        }
        it.next().is_none().then_some(IntensityCombo(out))
    }
}

impl fmt::Display for IntensityCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}-{}",
            self.0[0].label(),
            self.0[1].label(),
            self.0[2].label()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ports_cover_each_user_twice() {
        for u in User::ALL {
            let n = PortId::ALL.iter().filter(|p| p.involves(u)).count();
            assert_eq!(n, 2);
            let [first, second] = u.canonical_ports();
            assert_eq!(first.users().0, u);
            assert_eq!(second.users().1, u);
        }
    }

    #[test]
    fn phase_index_arithmetic() {
        assert!(PhaseIndex::new(16).is_none());
        assert_eq!(PhaseIndex::wrapping(-1).n(), 15);
        assert!((PhaseIndex::HALF_PI.radians() - PI / 2.0).abs() < 1e-15);
        assert!((PhaseIndex::THREE_HALF_PI.radians() - 1.5 * PI).abs() < 1e-15);
        let a = PhaseIndex::new(3).unwrap();
        let b = PhaseIndex::new(5).unwrap();
        assert_eq!(a.sub(b).n(), 14);
        assert_eq!(a.add(b).n(), 8);
    }

    #[test]
    fn combo_labels_round_trip() {
        assert_eq!(IntensityCombo::all_z().len(), 27);
        assert_eq!(IntensityCombo::all_x().len(), 8);
        for c in IntensityCombo::all_z() {
            assert_eq!(IntensityCombo::parse(&c.to_string()), Some(c));
        }
        assert_eq!(IntensityCombo::MU3.to_string(), "mu-mu-mu");
        assert!(IntensityCombo::parse("mu-nu").is_none());
        assert!(IntensityCombo::parse("mu-nu-0-0").is_none());
    }

    #[test]
    fn enum_byte_codes_round_trip() {
        for b in 0..4 {
            assert_eq!(SlotRole::from_u8(b).unwrap().as_u8(), b);
            assert_eq!(IntensityTag::from_u8(b).unwrap().as_u8(), b);
        }
        assert_eq!(Side::from_u8(1), Some(Side::L));
        assert!(Side::from_u8(2).is_none());
    }
}
