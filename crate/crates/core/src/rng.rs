//! Deterministic pseudo-randomness: xoshiro256++ seeded through splitmix64.
//!
//! Every experiment in this crate draws from this generator, so identical
//! seeds reproduce identical datasets, shuffles, and initializations across
//! platforms. Gaussian variates come from Box-Muller applied to consecutive
//! uniform pairs; both outputs of each pair are consumed, in order.

use crate::matrix::Matrix;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[inline]
fn rotl(x: u64, k: u32) -> u64 {
    (x << k) | (x >> (64 - k))
}

/// xoshiro256++ generator with a 256-bit state.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
    spare_gaussian: Option<f64>,
}

impl Rng {
    /// Seeds the 256-bit state by running splitmix64 four times on `seed`.
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut next_sm = || {
            sm = sm.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = sm;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        let s = [next_sm(), next_sm(), next_sm(), next_sm()];
        Self {
            s,
            spare_gaussian: None,
        }
    }

    /// Next 64-bit output of the xoshiro256++ rule.
    pub fn next_u64(&mut self) -> u64 {
        let result = rotl(self.s[0].wrapping_add(self.s[3]), 23).wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = rotl(self.s[3], 45);
        result
    }

    /// Uniform double in [0, 1) using the top 53 bits.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard gaussian via Box-Muller on consecutive uniform pairs.
    ///
    /// The pair (u1, u2) produces r·cos(2πu2) then r·sin(2πu2) with
    /// r = sqrt(-2·ln(1-u1)); the second output is buffered and returned by
    /// the following call, so the gaussian stream consumes uniforms two at a
    /// time in order.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        // 1 - u1 lies in (0, 1], keeping the log finite.
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = TWO_PI * u2;
        self.spare_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform integer in [0, bound). Uses the modulo reduction; the bias is
    /// negligible for the desk-scale bounds used here.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        self.next_u64() % bound
    }

    /// In-place Fisher-Yates shuffle, high index down.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }

    /// Draws `k` distinct indices from 0..m by a partial Fisher-Yates pass.
    pub fn choose_k(&mut self, m: usize, k: usize) -> Vec<usize> {
        assert!(k <= m, "cannot choose {k} from {m}");
        let mut idx: Vec<usize> = (0..m).collect();
        for i in 0..k {
            let j = i + self.next_below((m - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}

/// Matrix with i.i.d. standard gaussian entries, filled row-major.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.next_gaussian()).collect();
    Matrix::new(rows, cols, data).expect("gaussian entries are finite")
}
