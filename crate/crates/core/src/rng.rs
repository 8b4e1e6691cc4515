//! Keyed deterministic randomness.
//!
//! Every random draw in the simulator is derived from a [`RngKey`]: a 64-bit
//! state that is refined by mixing in identifying components (round index,
//! node address, channel, ...) and finally turned into a uniform or Gaussian
//! variate. Draws are therefore independent of evaluation order.
//!
//! Pinned constants:
//!
//! - mixer: SplitMix64 finaliser (`0x9E3779B97F4A7C15`, `0xBF58476D1CE4E5B9`,
//!   `0x94D049BB133111EB`, shifts 30/27/31);
//! - uniform: top 53 bits of the mixed state scaled by `2^-53`, in `[0, 1)`;
//! - Gaussian: Box–Muller cosine branch, `sqrt(-2 ln u1) * cos(2π u2)` with
//!   `u1 = 1 - uniform(a)` (so `u1 ∈ (0, 1]`) and `u2 = uniform(b)`, where `a`
//!   and `b` are the key refined with components `1` and `2`.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One step of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngKey(u64);

impl RngKey {
    pub fn new(seed: u64) -> Self {
        RngKey(splitmix64(seed))
    }

    pub fn state(self) -> u64 {
        self.0
    }

    /// Refines the key with one more identifying component.
    #[must_use]
    pub fn with(self, component: u64) -> Self {
        RngKey(splitmix64(self.0 ^ splitmix64(component)))
    }

    /// Refines the key with a short ASCII tag (e.g. `b"loss"`).
    #[must_use]
    pub fn with_tag(self, tag: &[u8]) -> Self {
        let mut packed = 0u64;
        for (i, b) in tag.iter().take(8).enumerate() {
            packed |= u64::from(*b) << (8 * i);
        }
        self.with(packed)
    }

    /// Uniform variate in `[0, 1)`.
    pub fn uniform(self) -> f64 {
        (splitmix64(self.0) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate.
    pub fn gaussian(self) -> f64 {
        let u1 = 1.0 - self.with(1).uniform();
        let u2 = self.with(2).uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
