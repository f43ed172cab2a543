//! Addressable random streams.
//!
//! Every replica owns a ChaCha8 stream selected by `(master seed, domain,
//! replica index)`. ChaCha is a counter-mode generator, so a stream can also be
//! positioned at an arbitrary column: column `c` of a replica starts at word
//! `c << 32`, which gives every column 2³¹ independent 64-bit draws. Results are
//! therefore a pure function of the key, whatever thread runs them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Separates the random streams of different consumers of one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Bounding-walk simulators.
    Walk,
    /// Limit-law samplers.
    Limit,
    /// Pre-generated column realizations shared by the oracle and the walk.
    Realization,
    /// Anything else (test fixtures, diagnostics).
    Auxiliary,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Walk => 0x5741_4c4b,
            Domain::Limit => 0x4c49_4d54,
            Domain::Realization => 0x5245_414c,
            Domain::Auxiliary => 0x4155_5849,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub domain: Domain,
    pub replica: u64,
}

impl StreamKey {
    pub fn new(seed: u64, domain: Domain, replica: u64) -> Self {
        Self {
            seed,
            domain,
            replica,
        }
    }

    /// Sequential stream for one replica.
    pub fn rng(&self) -> SimRng {
        let mut rng = ChaCha8Rng::from_seed(key_bytes(self.seed, self.domain.tag()));
        rng.set_stream(self.replica);
        rng
    }

    /// Stream positioned at the start of `column`'s block of the replica.
    ///
    /// Uses a different key from [`StreamKey::rng`], so the two never overlap.
    pub fn column_rng(&self, column: u64) -> SimRng {
        let mut rng = ChaCha8Rng::from_seed(key_bytes(self.seed, !self.domain.tag()));
        rng.set_stream(self.replica);
        rng.set_word_pos(u128::from(column) << 32);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn key_bytes(seed: u64, tag: u64) -> [u8; 32] {
    let mut state = seed ^ tag.rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}
