//! Seed derivation. Every random draw in the crate comes from a ChaCha8
//! stream keyed by `(experiment seed, purpose, index)`, so path `i` of a run
//! does not depend on how many other paths are simulated or on thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes. Distinct tags keep training, evaluation and
/// initialization draws independent under a single experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Paths,
    TrainZ,
    TrainY,
    Init,
    Eval,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Paths => 0x5041_5448,
            Purpose::TrainZ => 0x5452_4e5a,
            Purpose::TrainY => 0x5452_4e59,
            Purpose::Init => 0x494e_4954,
            Purpose::Eval => 0x4556_414c,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a sequence of words into one 64-bit key.
pub fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, &w| splitmix(acc ^ splitmix(w)))
}

/// Generator for `(seed, purpose, keys..., index)`.
pub fn stream(seed: u64, purpose: Purpose, keys: &[u64], index: u64) -> ChaCha8Rng {
    let mut words = Vec::with_capacity(keys.len() + 3);
    words.push(seed);
    words.push(purpose.tag());
    words.extend_from_slice(keys);
    words.push(index);
    ChaCha8Rng::seed_from_u64(mix(&words))
}
