//! Seeded random streams.
//!
//! Every replicate draws from its own ChaCha stream, selected by the pair
//! (master seed, replicate index). The stream does not depend on which worker
//! runs the replicate, so fan-out results are reproducible for any worker
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SimRng = ChaCha8Rng;

/// Stream for replicate `index` under `master`.
pub fn stream(master: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Runs `count` independent replicates, each on its own derived stream, and
/// returns the results in replicate order.
pub fn map_replicates<T, F>(master: u64, count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut SimRng) -> T + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(master, i);
            f(i, &mut rng)
        })
        .collect()
}
