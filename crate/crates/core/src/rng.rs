//! Seeded random streams.
//!
//! Every stochastic stage draws from its own ChaCha8 stream. The 64-bit run
//! seed selects the key and the ChaCha stream id is `(purpose << 48) | index`,
//! so a stage can draw any number of values without shifting the draws seen by
//! another stage. ChaCha is counter based and its output is identical on every
//! platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type handed out by [`substream`].
pub type StreamRng = ChaCha8Rng;

/// Largest per-purpose index accepted by [`substream`].
pub const MAX_STREAM_INDEX: u64 = (1 << 48) - 1;

/// Consumer of a random substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Purpose {
    Source = 1,
    Channel = 2,
    Interleaver = 3,
    Optimizer = 4,
    Fill = 5,
    ForcedChannel = 6,
    Training = 7,
    Test = 8,
    Embedding = 9,
}

/// Returns the stream for `(seed, purpose, index)`.
///
/// # Panics
///
/// Panics if `index` exceeds [`MAX_STREAM_INDEX`].
pub fn substream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    assert!(index <= MAX_STREAM_INDEX, "substream index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | index);
    rng
}

/// Mixes a run index into a seed (SplitMix64 finalizer) so that runs of a
/// sweep get unrelated keys.
pub fn derive_seed(seed: u64, run: u64) -> u64 {
    let mut z = seed ^ run.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws an index from a discrete distribution by inverse-CDF lookup.
///
/// The last index with nonzero weight absorbs any rounding slack so that a
/// draw never lands on a zero-probability entry.
pub fn sample_discrete<R: rand::Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}
