//! Reproducible random streams.
//!
//! Every replicate gets its own ChaCha8 stream selected by the replicate
//! index, so results do not depend on scheduling order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SimRng = ChaCha8Rng;

/// Stream `replicate` of the generator keyed by `master_seed`.
pub fn replicate_rng(master_seed: u64, replicate: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate);
    rng
}

/// Mixes a tag into a master seed (SplitMix64 finalizer), for experiments
/// that need several independent families of replicate streams.
pub fn derive_seed(master_seed: u64, tag: u64) -> u64 {
    let mut z = master_seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `job` once per replicate on the current rayon pool and returns the
/// results ordered by replicate index.
pub fn run_replicates<R, F>(replicates: usize, master_seed: u64, job: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, &mut SimRng) -> R + Sync + Send,
{
    (0..replicates)
        .into_par_iter()
        .map(|k| {
            let mut rng = replicate_rng(master_seed, k as u64);
            job(k, &mut rng)
        })
        .collect()
}
