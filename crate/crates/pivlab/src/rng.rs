//! Counter-based random number streams.
//!
//! Every draw in the simulator comes from a stream keyed by
//! `(seed, path, step, purpose)`. Streams are stateless to construct and
//! independent of scheduling, so path-level parallelism cannot change
//! results: regenerating an ensemble with the same seed is bit-identical
//! regardless of worker count.

use rand::RngCore;

/// Purpose tags keep draws for different uses out of each other's streams.
pub mod purpose {
    pub const BROWNIAN: u64 = 1;
    pub const JUMP_COUNT: u64 = 2;
    pub const JUMP_MARK: u64 = 3;
    pub const HIDDEN_STATE: u64 = 4;
    pub const CANDIDATE: u64 = 5;
    pub const PARTICLE: u64 = 6;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; full-avalanche 64-bit mix.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn fold(h: u64, v: u64) -> u64 {
    mix64(h ^ v.wrapping_mul(GOLDEN).wrapping_add(0x63_6f_75_6e_74_65_72))
}

/// One keyed stream. Implements `RngCore` so `rand_distr` samplers
/// (normal, Poisson, uniform) run directly on top of it; rejection
/// samplers simply consume more of the stream, which stays reproducible
/// because the stream itself is keyed.
pub struct StreamRng {
    state: u64,
}

impl StreamRng {
    pub fn new(seed: u64, path: u64, step: u64, purpose: u64) -> Self {
        let mut h = mix64(seed ^ GOLDEN);
        h = fold(h, path);
        h = fold(h, step);
        h = fold(h, purpose);
        StreamRng { state: h }
    }

    #[inline]
    pub fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in (0, 1); never returns exactly 0 or 1.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal draw (ziggurat). Rejection consumes a variable
    /// number of stream values, which stays reproducible because the
    /// stream is keyed.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        use rand_distr::Distribution;
        rand_distr::StandardNormal.sample(self)
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        (self.next() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        let mut chunks = dest.chunks_exact_mut(8);
        for chunk in &mut chunks {
            chunk.copy_from_slice(&self.next().to_le_bytes());
        }
        let rem = chunks.into_remainder();
        if !rem.is_empty() {
            let bytes = self.next().to_le_bytes();
            rem.copy_from_slice(&bytes[..rem.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
