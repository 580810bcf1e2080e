//! Deterministic random-number plumbing.
//!
//! Every stochastic routine in this crate (bootstrap resampling, simulated
//! datasets, Monte Carlo loops) draws from a ChaCha stream addressed by
//! `(seed, stream index)`. Work item *i* always reads stream *i* of its
//! parent seed, and nested levels derive fresh 64-bit seeds with a SplitMix64
//! finalizer, so results are bit-identical regardless of how many worker
//! threads execute the items or in which order they finish.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Independent substream `index` of the generator seeded by `seed`.
///
/// ChaCha exposes 2⁶⁴ independent streams per seed; one is assigned per
/// replicate/iteration index so that a work item's draws depend only on
/// `(seed, index)`, never on scheduling.
pub(crate) fn substream(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derive a child seed from `(master, tag)` with the SplitMix64 finalizer.
///
/// Used when a routine needs several *families* of streams (e.g. one family
/// of per-iteration data streams and one family of per-iteration bootstrap
/// masters) from a single user-facing seed.
pub(crate) fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream-family tag for per-iteration dataset generation.
pub(crate) const TAG_DATASET: u64 = 1;
/// Stream-family tag for per-iteration bootstrap masters.
pub(crate) const TAG_BOOTSTRAP: u64 = 2;

/// Run `f` inside a local rayon thread pool capped at `limit` threads.
///
/// `None` runs on the caller's current pool (rayon's default global pool when
/// none is installed). Results are bit-identical across limits — the cap only
/// controls resource usage. The CLI maps the `LATE_BOUNDS_THREADS`
/// environment variable onto this helper; tests use it to demonstrate
/// thread-count invariance directly.
pub fn with_thread_limit<T: Send>(limit: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match limit {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("failed to build local thread pool")
            .install(f),
    }
}
