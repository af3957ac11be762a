//! Counter-derived deterministic random substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Substream tags.
pub mod tag {
    pub const DRIFT: u64 = 1;
    pub const FRAME: u64 = 2;
    pub const STREAMS: u64 = 3;
    pub const INIT: u64 = 4;
    pub const REFERENCE: u64 = 5;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, tag, index)`.
pub fn substream(seed: u64, tag: u64, index: u64) -> StreamRng {
    let k = splitmix(splitmix(seed ^ splitmix(tag)) ^ index);
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix(k.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
