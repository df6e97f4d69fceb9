//! Seeded random streams.
//!
//! Every consumer of randomness asks for a stream by `(seed, index)`. Streams
//! are ChaCha8 keystreams keyed by the seed and selected by the 64-bit stream
//! id, so block `b` of a run always sees the same numbers no matter which
//! worker processes it or in which order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags used to separate independent uses of a single user seed.
pub mod domain {
    pub const SOURCE: u64 = 0x736f_7572_6365;
    pub const DITHER: u64 = 0x6469_7468_6572;
    pub const DECODER: u64 = 0x6465_636f_6465;
    pub const RATE: u64 = 0x7261_7465;
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a sub-seed for a named purpose.
pub fn derive_seed(seed: u64, domain: u64) -> u64 {
    mix(mix(seed) ^ domain)
}

/// Independent stream `index` of the generator keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw on the open interval (0, 1).
pub fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
