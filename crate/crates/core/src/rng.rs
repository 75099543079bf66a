//! Seeded random streams.
//!
//! Every generator in the crate is a [`ChaCha8Rng`] seeded with
//! `seed_from_u64(seed)` and then moved onto a fixed stream with
//! [`ChaCha8Rng::set_stream`]. ChaCha output is specified independently of
//! platform and word size, so a `(seed, stream)` pair names one sequence
//! everywhere. The stream constants below keep unrelated consumers of the
//! same user seed from sharing draws.
//!
//! Within a stream, draws are consumed in program order. Mixture sampling
//! takes one `f64` uniform for the component and then one standard normal
//! (ziggurat, `rand_distr`) for the value, per emitted point.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as Rng;

/// Draws from probability models (`models::sample`).
pub const STREAM_SAMPLE: u64 = 0;
/// Permutations (dataset shuffles, minibatch order).
pub const STREAM_SHUFFLE: u64 = 1;
/// Random initial parameters for iterative fits.
pub const STREAM_INIT: u64 = 2;
/// Network weight initialisation.
pub const STREAM_WEIGHTS: u64 = 3;
/// Monte-Carlo estimators (Fisher information, KL fallback, CRLB trials).
pub const STREAM_MONTE_CARLO: u64 = 4;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
