//! The crate's single source of randomness: a 64-bit linear congruential
//! generator whose outputs are the top 32 bits of the state.
//!
//! The integer paths (`next_u32`, `below`, `shuffle`) are bit-exact across
//! platforms and languages; world generation only uses those.

const MULTIPLIER: u64 = 6364136223846793005;
const INCREMENT: u64 = 1442695040888963407;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Derives an independent stream for a named purpose from a base seed.
    pub fn derived(seed: u64, stream: u64) -> Self {
        let mut rng = Self::new(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.next_u32();
        rng
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        self.state = self.state.wrapping_mul(MULTIPLIER).wrapping_add(INCREMENT);
        (self.state >> 32) as u32
    }

    /// Uniform integer in `[0, n)` via multiply-shift. `n` must be nonzero.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        assert!(n <= u32::MAX as usize, "range too large for 32-bit draws");
        ((self.next_u32() as u64 * n as u64) >> 32) as usize
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.next_u32() as f64 / 4_294_967_296.0
    }

    /// Standard normal via Box-Muller (cosine branch only).
    pub fn normal(&mut self) -> f64 {
        let u1 = (self.next_u32() as f64 + 1.0) / 4_294_967_297.0;
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle driven by `below`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_outputs_from_zero_seed() {
        let mut rng = Lcg64::new(0);
        // state_1 = INCREMENT, state_2 = INCREMENT * (MULTIPLIER + 1)
        assert_eq!(rng.next_u32(), (INCREMENT >> 32) as u32);
        let s2 = INCREMENT.wrapping_mul(MULTIPLIER).wrapping_add(INCREMENT);
        assert_eq!(rng.next_u32(), (s2 >> 32) as u32);
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = Lcg64::new(7);
        for n in 1..50 {
            for _ in 0..20 {
                assert!(rng.below(n) < n);
            }
        }
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut rng = Lcg64::new(3);
        let mut v: Vec<usize> = (0..100).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }

    #[test]
    fn normal_moments_are_plausible() {
        let mut rng = Lcg64::new(11);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
