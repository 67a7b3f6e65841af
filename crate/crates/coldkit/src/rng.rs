//! Pinned PRNG: splitmix64 plus a Fisher-Yates shuffle driven by it.
//!
//! Every random draw in this crate (scene placement, anchor injection,
//! token shuffling) goes through [`SplitMix64`] so that a given seed
//! produces identical output on every platform and in every
//! implementation of the same contract.

/// splitmix64 generator (Steele/Lea/Flood; public-domain reference
/// constants). State advances by the golden-ratio increment; output is
/// the finalized mix of the new state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform double in [0, 1) from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound). `bound` must be nonzero.
    ///
    /// Plain modulo reduction: the tiny bias is irrelevant here, and the
    /// reduction rule is part of the pinned contract.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_below requires a nonzero bound");
        self.next_u64() % bound
    }

    /// In-place Fisher-Yates: for i = len-1 down to 1, swap i with
    /// `next_below(i + 1)`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
