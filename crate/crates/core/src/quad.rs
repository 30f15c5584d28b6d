//! Adaptive Gauss-Legendre quadrature.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Points of the fixed rule. 20 points integrate polynomials of degree 39
/// exactly.
pub const GL_POINTS: usize = 20;

/// Nodes and weights on [-1, 1], found by Newton iteration on `P_n`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Fixed rule on [lo, hi].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: &mut F, lo: f64, hi: f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut s = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Globally adaptive bisection: the panel with the largest error estimate
/// (fixed rule vs. the sum over its halves) is split until the total estimate
/// is below `rel_tol·|I| + abs_tol`.
#[derive(Debug, Clone)]
pub struct AdaptiveQuad {
    rule: GaussLegendre,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for AdaptiveQuad {
    fn default() -> Self {
        Self::new(1e-12)
    }
}

impl AdaptiveQuad {
    pub fn new(rel_tol: f64) -> Self {
        Self {
            rule: GaussLegendre::new(GL_POINTS),
            rel_tol,
            abs_tol: 0.0,
            max_panels: 2000,
        }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, lo: f64, hi: f64) -> Result<f64> {
        if lo == hi {
            return Ok(0.0);
        }
        // (lo, hi, refined value, error estimate)
        let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
        let eval = |f: &mut F, a: f64, b: f64| {
            let whole = self.rule.integrate(f, a, b);
            let m = 0.5 * (a + b);
            let halves = self.rule.integrate(f, a, m) + self.rule.integrate(f, m, b);
            (a, b, halves, (halves - whole).abs())
        };
        panels.push(eval(&mut f, lo, hi));
        loop {
            let total: f64 = panels.iter().map(|p| p.2).sum();
            let err: f64 = panels.iter().map(|p| p.3).sum();
            if !total.is_finite() || !err.is_finite() {
                return Err(Error::QuadratureFailure);
            }
            if err <= self.rel_tol * total.abs() + self.abs_tol || err <= 4.0 * f64::EPSILON * total.abs() {
                return Ok(total);
            }
            if panels.len() >= self.max_panels {
                return Err(Error::QuadratureFailure);
            }
            let (worst, _) = panels
                .iter()
                .enumerate()
                .fold((0, -1.0), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
            let (a, b, _, _) = panels.swap_remove(worst);
            let m = 0.5 * (a + b);
            panels.push(eval(&mut f, a, m));
            panels.push(eval(&mut f, m, b));
        }
    }
}

/// `∫₀^∞ f` by splitting at 1 and mapping the tail with `y = 1/w`.
pub fn integrate_half_line<F: FnMut(f64) -> f64>(q: &AdaptiveQuad, mut f: F) -> Result<f64> {
    let head = q.integrate(&mut f, 0.0, 1.0)?;
    let tail = q.integrate(
        |w: f64| {
            if w <= 0.0 {
                0.0
            } else {
                f(1.0 / w) / (w * w)
            }
        },
        0.0,
        1.0,
    )?;
    Ok(head + tail)
}
