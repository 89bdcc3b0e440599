//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! user seed and a stream id, so independent work items (restarts, sweep
//! cells) get independent streams regardless of the order they run in.

use core::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream used for the target state of an experiment.
pub const TARGET_STREAM: u64 = 0;

const RESTART_BASE: u64 = 1 << 32;

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Stream id for restart `index` of work item `cell`.
pub fn restart_stream(cell: u64, index: u64) -> u64 {
    RESTART_BASE + (cell << 16) + index
}

// Samplers call `libm` directly. The `std` and `libm` backends of `num-traits`
// (which `rand_distr` goes through) round `ln`/`exp` differently, so seeded
// results would otherwise depend on which features a build happens to unify.

/// Standard normal draw (Box–Muller, cosine branch).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(TAU * u2)
}

/// Unit-rate exponential draw by inversion.
pub fn exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -libm::log(1.0 - rng.random::<f64>())
}
