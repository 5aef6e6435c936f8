//! Minimal deterministic PRNG (SplitMix64).
//!
//! Run reproducibility is a hard contract of this crate: the same seed must
//! produce byte-identical outputs across releases and platforms, so the
//! generator is pinned here instead of depending on an external crate whose
//! stream may change between versions. SplitMix64 is statistically adequate
//! for the Monte-Carlo duties in this crate (sign coins, magnitude sampling,
//! inverse-CDF position draws).

/// SplitMix64 stream. Parallel callers derive independent streams with
/// [`Rng::fork`], keyed by a caller-chosen index.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Independent stream for worker `index` (e.g. one per particle or branch).
    pub fn fork(seed: u64, index: u64) -> Self {
        let mut base = Rng::new(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        base.next_u64();
        base
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Fair sign coin: +1.0 or -1.0.
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        // u in (0, 1] so the log is finite.
        let u = 1.0 - self.uniform();
        let v = self.uniform();
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }
}
