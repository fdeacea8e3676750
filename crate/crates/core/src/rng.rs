//! Deterministic per-path random streams.
//!
//! Every Monte Carlo path owns a ChaCha8 stream keyed by the master seed and
//! selected by `(family, path)`. Streams are addressed, not split off a
//! shared generator, so results do not depend on worker count or schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

/// Stream families; distinct experiment roles draw from disjoint streams.
pub mod family {
    pub const PRIMARY: u32 = 0;
    pub const INDEPENDENT: u32 = 1;
    pub const RESAMPLE: u32 = 2;
    pub const ALTERNATE_START: u32 = 3;
}

/// Random stream for `path` within `family` under `master_seed`.
pub fn path_stream(master_seed: u64, family: u32, path: u32) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((family as u64) << 32) | path as u64);
    rng
}
