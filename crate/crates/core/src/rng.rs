//! Keyed random substreams.
//!
//! Every stochastic quantity in a run is drawn from a ChaCha stream whose seed
//! is a hash of the master seed and a tuple of indices (drop, UE, pattern, ...).
//! Results therefore do not depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Domain tags that separate independent uses of the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Drop = 1,
    Geometry = 2,
    Patterns = 3,
    UeCodebook = 4,
    LbAssignment = 5,
    RandomAssignment = 6,
    SlotGains = 7,
    Noise = 8,
    SubcarrierPermutation = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a master seed, a stream tag and a list of indices into a 64-bit key.
pub fn derive_key(seed: u64, stream: Stream, indices: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0xA5A5_5A5A)));
    }
    h
}

/// RNG for the stream identified by `(seed, stream, indices)`.
pub fn substream(seed: u64, stream: Stream, indices: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_key(seed, stream, indices))
}
