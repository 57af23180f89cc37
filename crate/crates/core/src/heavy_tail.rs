//! The level law `P(K = k) = k^(-5/4) / c` and its coupled colour.
//!
//! The normaliser `c = zeta(5/4)` and every survival probability come from
//! partial sums plus an Euler-Maclaurin tail, so no constant is hard-coded.

use alloc::vec::Vec;
use rand::RngCore;

/// Exponent of the level law.
pub const EXPONENT: f64 = 1.25;

/// Below this index tails are partial sums anchored at the Euler-Maclaurin
/// tail of `ANCHOR`.
const ANCHOR: u32 = 32;

const INITIAL_TABLE: usize = 1 << 12;
const MAX_TABLE: usize = 1 << 20;

/// `sum_{j > x} j^(-s)` by Euler-Maclaurin through the `B_6` term.
///
/// Valid for real `x >= 16`; the truncation error there is below `1e-12`
/// relative and shrinks like `x^(-s-7)`.
pub fn em_tail(x: f64) -> f64 {
    let s = EXPONENT;
    let xs = libm::pow(x, -s);
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * xs / (s - 1.0) - 0.5 * xs + (s / 12.0) * xs * inv - (s * (s + 1.0) * (s + 2.0) / 720.0) * xs * inv * inv2
        + (s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) / 30240.0) * xs * inv * inv2 * inv2
}

fn em_tail_derivative(x: f64) -> f64 {
    let s = EXPONENT;
    let xs = libm::pow(x, -s);
    let inv = 1.0 / x;
    -xs + 0.5 * s * xs * inv - (s * (s + 1.0) / 12.0) * xs * inv * inv
}

fn term(j: u32) -> f64 {
    libm::pow(j as f64, -EXPONENT)
}

/// Exact-to-rounding description of the level law.
#[derive(Debug, Clone)]
pub struct LevelLaw {
    normalizer: f64,
    /// `sum_{j > k} j^(-s)` for `k = 0..ANCHOR`.
    small_tails: [f64; ANCHOR as usize + 1],
}

impl Default for LevelLaw {
    fn default() -> Self {
        Self::new()
    }
}

impl LevelLaw {
    pub fn new() -> Self {
        let mut small_tails = [0.0; ANCHOR as usize + 1];
        let mut acc = em_tail(ANCHOR as f64);
        small_tails[ANCHOR as usize] = acc;
        for k in (0..ANCHOR).rev() {
            acc += term(k + 1);
            small_tails[k as usize] = acc;
        }
        Self { normalizer: small_tails[0], small_tails }
    }

    /// `c = sum_{k >= 1} k^(-5/4)`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Unnormalised tail `sum_{j > k} j^(-5/4)`.
    pub fn raw_tail(&self, k: u128) -> f64 {
        if k <= ANCHOR as u128 {
            self.small_tails[k as usize]
        } else {
            em_tail(k as f64)
        }
    }

    pub fn pmf(&self, k: u128) -> f64 {
        if k == 0 {
            return 0.0;
        }
        libm::pow(k as f64, -EXPONENT) / self.normalizer
    }

    /// `P(K > k)`.
    pub fn survival(&self, k: u128) -> f64 {
        self.raw_tail(k) / self.normalizer
    }

    pub fn cdf(&self, k: u128) -> f64 {
        1.0 - self.survival(k)
    }

    /// Probability that a step at level `k` is coloured red.
    pub fn red_probability(k: u128) -> f64 {
        if k > 1100 {
            0.0
        } else {
            libm::exp2(-(k as f64))
        }
    }
}

/// Uniform double in `[0, 1)` from the top 53 bits of one `u64` draw.
pub fn uniform01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF sampler for the level law with no truncation.
///
/// Levels up to the table size come from a binary search over cached
/// survival values; the table doubles on demand up to `2^20` entries and
/// draws beyond it invert the Euler-Maclaurin tail with Newton steps and an
/// integer correction (exact while `k < 2^53`, float-rounded above).
#[derive(Debug, Clone)]
pub struct LevelSampler {
    law: LevelLaw,
    /// `survival[k] = P(K > k)` for `k = 0..survival.len()`.
    survival: Vec<f64>,
}

impl Default for LevelSampler {
    fn default() -> Self {
        Self::new()
    }
}

impl LevelSampler {
    pub fn new() -> Self {
        let law = LevelLaw::new();
        let mut s = Self { law, survival: Vec::new() };
        s.extend_to(INITIAL_TABLE);
        s
    }

    pub fn law(&self) -> &LevelLaw {
        &self.law
    }

    pub fn table_len(&self) -> usize {
        self.survival.len()
    }

    fn extend_to(&mut self, len: usize) {
        let start = self.survival.len();
        self.survival.extend((start..len).map(|k| self.law.survival(k as u128)));
    }

    pub fn sample<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> u128 {
        let u = uniform01(rng);
        self.invert(1.0 - u)
    }

    /// Smallest `k >= 1` with `P(K > k) < v`, for `v` in `(0, 1]`.
    pub fn invert(&mut self, v: f64) -> u128 {
        loop {
            let last = *self.survival.last().expect("non-empty table");
            if last < v {
                let k = 1 + self.survival[1..].partition_point(|&s| s >= v);
                return k as u128;
            }
            if self.survival.len() >= MAX_TABLE {
                return self.invert_tail(v);
            }
            let next = (self.survival.len() * 2).min(MAX_TABLE);
            self.extend_to(next);
        }
    }

    fn invert_tail(&self, v: f64) -> u128 {
        let c = self.law.normalizer();
        let target = c * v;
        let floor = (self.survival.len() - 1) as f64;
        let s = EXPONENT;
        // leading-order inverse of x^(1-s)/(s-1) = target
        let mut x = libm::pow(target * (s - 1.0), 1.0 / (1.0 - s)).max(floor);
        for _ in 0..8 {
            let step = (em_tail(x) - target) / em_tail_derivative(x);
            let next = (x - step).max(floor);
            if (next - x).abs() <= 1e-3 * x.max(1.0) * f64::EPSILON {
                x = next;
                break;
            }
            x = next;
        }
        const EXACT: f64 = 9_007_199_254_740_992.0; // 2^53
        if x >= EXACT {
            return if x >= u128::MAX as f64 { u128::MAX } else { libm::ceil(x) as u128 };
        }
        let mut k = libm::ceil(x) as u64;
        while em_tail(k as f64) >= target {
            k += 1;
        }
        while (k as f64 - 1.0) > floor && em_tail(k as f64 - 1.0) < target {
            k -= 1;
        }
        k as u128
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Independent oracle: partial sums to `n` in reverse order plus the
    /// midpoint of the integral bracket `[int_{n+1}^inf, int_n^inf]`.
    fn zeta_oracle(n: u32) -> (f64, f64) {
        let s = EXPONENT;
        let partial: f64 = (1..=n).rev().map(|j| (j as f64).powf(-s)).sum();
        let upper = (n as f64).powf(1.0 - s) / (s - 1.0);
        let lower = ((n + 1) as f64).powf(1.0 - s) / (s - 1.0);
        (partial + 0.5 * (upper + lower), 0.5 * (upper - lower))
    }

    #[test]
    fn normalizer_matches_partial_sum_oracle() {
        let law = LevelLaw::new();
        let (oracle, half_width) = zeta_oracle(1_000_000);
        assert!(half_width < 1e-7);
        let rel = (law.normalizer() - oracle).abs() / oracle;
        assert!(rel < 1e-12, "c = {} oracle = {} rel = {rel:e}", law.normalizer(), oracle);
    }

    #[test]
    fn pmf_examples() {
        let law = LevelLaw::new();
        assert!((law.pmf(1) - 1.0 / law.normalizer()).abs() < 1e-15);
        let ratio = law.pmf(2) / law.pmf(1);
        assert!((ratio - 2f64.powf(-1.25)).abs() < 1e-15);
        for k in 1..200u128 {
            assert!(law.pmf(k + 1) < law.pmf(k));
        }
    }

    #[test]
    fn total_mass_is_one() {
        let law = LevelLaw::new();
        for n in [1u128, 10, 31, 32, 33, 1000, 100_000] {
            let partial: f64 = (1..=n).rev().map(|k| law.pmf(k)).sum();
            assert!((partial + law.survival(n) - 1.0).abs() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn em_tail_matches_direct_difference() {
        // T(k) - T(k+1) must equal (k+1)^(-s)
        for k in [16.0, 40.0, 1e3, 1e6] {
            let diff = em_tail(k) - em_tail(k + 1.0);
            let direct = (k + 1.0f64).powf(-EXPONENT);
            assert!((diff - direct).abs() / direct < 1e-9, "k = {k}");
        }
    }

    #[test]
    fn inversion_is_consistent_with_survival() {
        let mut s = LevelSampler::new();
        let law = s.law().clone();
        for v in [1.0, 0.9, 0.5, 0.2, 0.1, 0.05, 0.01, 1e-3, 1e-5, 1e-8] {
            let k = s.invert(v);
            if k >= 1u128 << 53 {
                // float-rounded regime: the level is only accurate to rounding
                assert!((law.survival(k) / v - 1.0).abs() < 1e-9, "v = {v}, k = {k}");
                continue;
            }
            assert!(law.survival(k) < v, "v = {v}, k = {k}");
            if k > 1 {
                assert!(law.survival(k - 1) >= v, "v = {v}, k = {k} not minimal");
            }
        }
    }

    #[test]
    fn tail_frequency_matches_survival() {
        // P(K > 10^4) through the exact survival and against the asymptote
        let law = LevelLaw::new();
        let x = 10_000u128;
        let exact = law.survival(x);
        let asymptote = 4.0 / law.normalizer() * (x as f64).powf(-0.25);
        let ratio = exact / asymptote;
        assert!(ratio > 1.0 / 1.2 && ratio < 1.2, "ratio {ratio}");

        let mut s = LevelSampler::new();
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let n = 200_000;
        let hits = (0..n).filter(|_| s.sample(&mut rng) > x).count() as f64;
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((hits / n as f64 - exact).abs() < 4.0 * se);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let draw = |seed| {
            let mut s = LevelSampler::new();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..1000).map(|_| s.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn red_probability_halves() {
        assert_eq!(LevelLaw::red_probability(1), 0.5);
        assert_eq!(LevelLaw::red_probability(30), 2f64.powi(-30));
        assert_eq!(LevelLaw::red_probability(u128::MAX), 0.0);
    }
}
