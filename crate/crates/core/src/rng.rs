//! Seeded random streams.
//!
//! Every chain draws from its own ChaCha8 stream. A run is identified by a
//! `u64` seed; chain `i` of that run uses stream id `i` of the generator
//! seeded from it, so serial and parallel execution see the same numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type ChainRng = ChaCha8Rng;

/// Stream reserved for run-level draws that belong to no chain (metric
/// subsampling, ground-truth references).
pub const AUX_STREAM: u64 = u64::MAX;

pub fn stream(seed: u64, stream_id: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    fill_standard_normal(rng, &mut v);
    v
}
