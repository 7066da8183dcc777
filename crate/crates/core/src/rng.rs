//! Seeded, splittable random streams.
//!
//! Stream `s` of master seed `m` is ChaCha8 keyed by `m` with stream id `s`, so
//! any replicate or chunk can be regenerated without touching the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
