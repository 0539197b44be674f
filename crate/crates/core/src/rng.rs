//! Counter-based random streams.
//!
//! Every random quantity in a simulation is addressed by a [`StreamKey`]
//! built from integer coordinates (master seed, draw, subject, ...). The
//! stream for a key is a pure function of the key, so results do not depend
//! on evaluation order or on how work is split across threads.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hierarchical key identifying one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        StreamKey(mix64(master_seed ^ 0x6A09_E667_F3BC_C909))
    }

    /// Derive a child key. Distinct `(parent, coordinate)` pairs give
    /// statistically independent children.
    #[inline]
    pub fn child(self, coordinate: u64) -> Self {
        let a = mix64(self.0.wrapping_add(GOLDEN_GAMMA));
        StreamKey(mix64(a ^ mix64(coordinate.wrapping_mul(GOLDEN_GAMMA) ^ 0x3C6E_F372_FE94_F82B)))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> CounterRng {
        CounterRng {
            key: self.0,
            counter: 0,
        }
    }
}

/// Stream purposes, mixed into keys so that streams for different roles
/// never coincide.
pub mod purpose {
    pub const RESAMPLE: u64 = 1;
    pub const SIMULATION: u64 = 2;
    pub const COHORT: u64 = 3;
    pub const ORACLE: u64 = 4;
}

/// Random generator whose `n`-th output is `mix64(key + n * gamma)`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn open_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)));
        self.counter = self.counter.wrapping_add(1);
        out
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
