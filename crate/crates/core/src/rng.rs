//! Seeded random source and the samplers built on it.
//!
//! The generator is ChaCha8 keyed by `seed` with one stream per replication
//! index. Each uniform consumes exactly one 64-bit word and each normal
//! exactly one uniform (inverse CDF), so Euler paths and ROU paths built from
//! the same `(seed, stream)` see the same Brownian increments. Changing any of
//! this changes every golden output.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::math::{erfc, exp, floor, lgamma, ln, powf, sqrt};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

#[derive(Debug, Clone)]
pub struct PathRng {
    inner: ChaCha8Rng,
}

impl PathRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Skip directly to 32-bit word `pos` of the stream.
    pub fn jump_to_word(&mut self, pos: u128) {
        self.inner.set_word_pos(pos);
    }

    pub fn word_pos(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Uniform on the open interval (0, 1) with 2⁻⁵² resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
    }

    pub fn standard_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform())
    }

    /// `n` i.i.d. Normal(0, dt) draws.
    pub fn normal_increments(&mut self, n: usize, dt: f64) -> Vec<f64> {
        let s = sqrt(dt);
        (0..n).map(|_| s * self.standard_normal()).collect()
    }

    /// Gamma(shape, 1) by Marsaglia and Tsang; shapes below 1 use the
    /// `Gamma(shape + 1)·U^{1/shape}` boost.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        debug_assert!(shape > 0.0);
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0);
            return g * powf(self.uniform(), 1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / sqrt(9.0 * d);
        loop {
            let x = self.standard_normal();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.uniform();
            if ln(u) < 0.5 * x * x + d - d * v + d * ln(v) {
                return d * v;
            }
        }
    }

    /// Poisson(mu): sequential inversion below 10, Hörmann's PTRS
    /// transformed rejection above.
    pub fn poisson(&mut self, mu: f64) -> u64 {
        debug_assert!(mu >= 0.0);
        if mu <= 0.0 {
            return 0;
        }
        if mu < 10.0 {
            let mut p = exp(-mu);
            let mut s = p;
            let mut x = 0u64;
            let u = self.uniform();
            while u > s && x < 1000 {
                x += 1;
                p *= mu / x as f64;
                s += p;
            }
            return x;
        }
        let smu = sqrt(mu);
        let b = 0.931 + 2.53 * smu;
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let vr = 0.9277 - 3.6224 / (b - 2.0);
        let log_mu = ln(mu);
        loop {
            let u = self.uniform() - 0.5;
            let v = self.uniform();
            let us = 0.5 - u.abs();
            let k = floor((2.0 * a / us + b) * u + mu + 0.43);
            if us >= 0.07 && v <= vr {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            if ln(v) + ln(inv_alpha) - ln(a / (us * us) + b) <= -mu + k * log_mu - lgamma(k + 1.0) {
                return k as u64;
            }
        }
    }

    pub fn chi_square(&mut self, dof: f64) -> f64 {
        2.0 * self.gamma(0.5 * dof)
    }

    /// Noncentral chi-square as a Poisson mixture of central ones.
    pub fn noncentral_chi_square(&mut self, dof: f64, noncentrality: f64) -> f64 {
        let j = self.poisson(0.5 * noncentrality);
        self.chi_square(dof + 2.0 * j as f64)
    }
}

/// Standard normal quantile: Acklam's rational approximation followed by one
/// Halley step against `erfc`, giving close to full double precision.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    if p > 0.5 {
        // 1 - p is exact here
        return -inverse_normal_cdf(1.0 - p);
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239e0,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838e0,
        -2.549732539343734e0,
        4.374664141464968e0,
        2.938163982698783e0,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996e0,
        3.754408661907416e0,
    ];
    let x = if p < 0.02425 {
        let q = sqrt(-2.0 * ln(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = 0.5 * erfc(-x / core::f64::consts::SQRT_2) - p;
    let u = e * SQRT_2PI * exp(0.5 * x * x);
    x - u / (1.0 + 0.5 * x * u)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / core::f64::consts::SQRT_2)
}

/// Pairwise sums: increments on a grid with half as many steps.
pub fn coarsen(dw: &[f64]) -> Vec<f64> {
    dw.chunks_exact(2).map(|c| c[0] + c[1]).collect()
}
