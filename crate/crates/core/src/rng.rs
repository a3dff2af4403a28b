//! Portable seeded randomness.
//!
//! Every random decision in the crate draws from [`Rng`], which is
//! xoshiro256** seeded through SplitMix64 (`rand_xoshiro`'s
//! `seed_from_u64`). The derived operations are fixed here so that another
//! implementation can replay them bit for bit:
//!
//! * `uniform()` takes the top 53 bits of `next_u64()` and scales by 2^-53,
//!   giving a float in `[0, 1)`.
//! * `below(n)` is Lemire's multiply-shift with rejection: draw `x`, form the
//!   128-bit product `x * n`, reject while the low 64 bits are below
//!   `2^64 mod n`, return the high 64 bits.
//! * `shuffle` is the Fisher–Yates walk from the last index down, swapping
//!   `i` with `below(i + 1)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Debug, Clone)]
pub struct Rng {
    inner: Xoshiro256StarStar,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Independent stream for `(seed, a, b)`, e.g. `(seed, epoch, sample)`.
    pub fn derive(seed: u64, a: u64, b: u64) -> Self {
        let mixed = splitmix(splitmix(seed ^ 0xA076_1D64_78BD_642F) ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
        Self::new(splitmix(mixed))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
