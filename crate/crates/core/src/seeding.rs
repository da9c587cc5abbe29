//! Per-record random streams.
//!
//! Every random draw in the pipeline is a pure function of
//! `(corpus seed, record index, purpose)`, so worker count and scheduling
//! order never affect output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for. Each purpose gets an independent stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    SampleClip = 1,
    CapCategories = 2,
    TaskChoice = 3,
    Template = 4,
    Subject = 5,
    Observation = 6,
    Negative = 7,
    Variant = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The integer recorded in `seed_trace`: a mix of the corpus seed and the record index.
pub fn record_seed(seed: u64, record_index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ record_index.rotate_left(32))
}

pub fn record_rng(seed: u64, record_index: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed) ^ splitmix64(purpose as u64));
    rng.set_stream(record_index);
    rng
}
