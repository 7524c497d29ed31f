//! SplitMix64: a seedable generator with 64 bits of state.
//!
//! This is the finalizer-based generator of Steele, Lea & Flood ("Fast
//! splittable pseudorandom number generators", OOPSLA 2014), in its
//! public-domain reference form: the state advances by the golden-ratio
//! increment 0x9e3779b97f4a7c15 and each output is mixed by two
//! xorshift-multiply rounds. The sequence for a given seed is identical on
//! every platform, which keeps generated problems and traces reproducible
//! bit for bit.

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform draw on the open interval (0, 1).
    ///
    /// Uses the top 53 bits shifted into the unit interval with a half-ulp
    /// offset, so 0.0 and 1.0 are never produced.
    pub fn next_open01(&mut self) -> f64 {
        (((self.next_u64() >> 11) as f64) + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)` by rejection from the top bits.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }
}
