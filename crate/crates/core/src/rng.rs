//! SplitMix64, the seeded generator behind every random choice in the toolkit.
//!
//! Synthetic fixtures and generated splits must be byte-stable across
//! platforms and across reimplementations in other languages, so the
//! generator and each derived sampler are spelled out here instead of
//! delegating to a general-purpose RNG whose stream may change between
//! releases.

/// SplitMix64 (Steele, Lea & Flood). State advances by the golden-ratio
/// increment; output is the standard 64-bit finalizer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Generator for a sub-stream identified by `parts`, so that e.g. image
    /// `i` of lesion `l` gets the same numbers regardless of generation order.
    pub fn derive(seed: u64, parts: &[u64]) -> Self {
        let mut s = seed;
        for &p in parts {
            s = mix(s ^ mix(p.wrapping_add(GOLDEN_GAMMA)));
        }
        Self::new(s)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound) by rejection (no modulo bias).
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    /// Fisher-Yates shuffle, drawing indices from the high end down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Poisson sample by Knuth's multiplication method. Adequate for the
    /// blob counts used here (mean up to a few hundred).
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        let limit = (-mean).exp();
        let mut k = 0u64;
        let mut prod = self.next_f64();
        while prod > limit {
            k += 1;
            prod *= self.next_f64();
        }
        k
    }

    /// Geometric sample on {1, 2, ...} with the given mean (>= 1).
    pub fn geometric(&mut self, mean: f64) -> u64 {
        if mean <= 1.0 {
            return 1;
        }
        let p = 1.0 / mean;
        // 1 - U lies in (0, 1], keeping the logarithm finite.
        let u = 1.0 - self.next_f64();
        1 + (u.ln() / (1.0 - p).ln()).floor() as u64
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
