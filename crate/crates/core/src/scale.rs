//! Scale function, speed density and the time changes between a CIR path
//! and a reflected Brownian motion.
//!
//! With `c = 2a/σ²` and `β = 2b/σ²`,
//! `S(x) = ∫₀ˣ y^{-c} e^{βy} dy` and `ρ(x) = σ⁻² x^{k-1} e^{-2βx}`, so that
//! `W̃(τ_t) = S(X(t))` with `τ_t = ∫₀ᵗ 1/ρ(X(s)) ds`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, ln, powf, sqrt};
use crate::params::ModelParams;
use crate::path::SamplePath;
use crate::quad::AdaptiveQuad;

/// Numerical settings of a [`ScaleMap`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct ScaleConfig {
    /// Relative tolerance of the quadrature for `S`.
    pub quad_rel_tol: f64,
    /// Inverse stops once `|S(x) - s| ≤ inv_tol·(1 + s)`.
    pub inv_tol: f64,
    pub max_newton_iter: usize,
    pub max_panels: usize,
    /// Steps of a reflected path reaching below this value are subdivided
    /// when integrating `ρ(S⁻¹(W̃))`.
    pub phi_threshold: f64,
    pub phi_subnodes: usize,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            quad_rel_tol: 1e-12,
            inv_tol: 1e-10,
            max_newton_iter: 100,
            max_panels: 2000,
            phi_threshold: 0.05,
            phi_subnodes: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScaleMap {
    params: ModelParams,
    c: f64,
    beta: f64,
    cfg: ScaleConfig,
    quad: AdaptiveQuad,
}

impl ScaleMap {
    pub fn new(params: ModelParams) -> Result<Self> {
        Self::with_config(params, ScaleConfig::default())
    }

    /// Requires `c < 1` (`k < 2`), otherwise `S(x)` diverges at the origin.
    pub fn with_config(params: ModelParams, cfg: ScaleConfig) -> Result<Self> {
        let s2 = params.sigma() * params.sigma();
        let c = 2.0 * params.a() / s2;
        if !(c < 1.0) {
            return Err(Error::DomainError("scale function anchored at 0 requires k < 2"));
        }
        let mut quad = AdaptiveQuad::new(cfg.quad_rel_tol);
        quad.max_panels = cfg.max_panels;
        Ok(Self {
            params,
            c,
            beta: 2.0 * params.b() / s2,
            cfg,
            quad,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn config(&self) -> &ScaleConfig {
        &self.cfg
    }

    /// `u = x^{1-c}`; exact square root when `c = 1/2`.
    fn to_u(&self, x: f64) -> f64 {
        if self.c == 0.5 {
            sqrt(x)
        } else {
            powf(x, 1.0 - self.c)
        }
    }

    fn from_u(&self, u: f64) -> f64 {
        if self.c == 0.5 {
            u * u
        } else {
            powf(u, 1.0 / (1.0 - self.c))
        }
    }

    /// `dS/du` after the substitution `u = y^{1-c}`.
    fn integrand_u(&self, u: f64) -> f64 {
        exp(self.beta * self.from_u(u)) / (1.0 - self.c)
    }

    /// `S` as a function of `u` (smooth on `[0, ∞)`).
    fn s_of_u(&self, u: f64) -> Result<f64> {
        if u == 0.0 {
            return Ok(0.0);
        }
        if self.beta == 0.0 {
            return Ok(u / (1.0 - self.c));
        }
        self.quad.integrate(|v| self.integrand_u(v), 0.0, u)
    }

    /// `S(x) = ∫₀ˣ y^{-c} e^{βy} dy`.
    pub fn scale_s(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::DomainError("scale function needs x >= 0"));
        }
        self.s_of_u(self.to_u(x))
    }

    /// `S'(x) = x^{-c} e^{βx}`.
    pub fn scale_derivative(&self, x: f64) -> f64 {
        powf(x, -self.c) * exp(self.beta * x)
    }

    /// `S⁻¹(s)` by bracketing and safeguarded Newton iteration in `u`.
    pub fn scale_s_inv(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::DomainError("inverse scale function needs s >= 0"));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        let one_c = 1.0 - self.c;
        if self.beta == 0.0 {
            return Ok(self.from_u(one_c * s));
        }
        // The driftless inverse bounds the root from above when β > 0 and
        // from below when β < 0; for β > 0 it can be astronomically loose, so
        // expand from the drift scale 1/β instead.
        let guess = one_c * s;
        let (mut lo, mut hi) = if self.beta > 0.0 {
            (0.0, guess.min(self.to_u(1.0 / self.beta)))
        } else {
            (guess, 2.0 * guess)
        };
        let mut n = 0;
        while self.s_of_u(hi)? < s {
            lo = hi;
            hi = if self.beta > 0.0 { (2.0 * hi).min(guess) } else { 2.0 * hi };
            n += 1;
            if n > 2000 || !hi.is_finite() || hi == lo {
                return Err(Error::BracketFailure);
            }
        }
        let tol = self.cfg.inv_tol * (1.0 + s);
        let mut u = 0.5 * (lo + hi);
        for _ in 0..self.cfg.max_newton_iter {
            let f = self.s_of_u(u)? - s;
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let mut next = u - f / self.integrand_u(u);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - u).abs();
            u = next;
            if f.abs() <= tol && step <= 4.0 * f64::EPSILON * u {
                break;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        let x = self.from_u(u);
        if (self.s_of_u(u)? - s).abs() > tol {
            return Err(Error::BracketFailure);
        }
        Ok(x)
    }

    /// Speed density `ρ(x) = σ⁻² x^{k-1} e^{-4bx/σ²}`, `x > 0`.
    pub fn speed_rho(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::DomainError("speed density needs x > 0"));
        }
        let s2 = self.params.sigma() * self.params.sigma();
        Ok(powf(x, self.params.k() - 1.0) * exp(-2.0 * self.beta * x) / s2)
    }

    /// `1/ρ(x)` with its continuous extension at 0: 0 for `k < 1`, `σ²` at
    /// `k = 1`; undefined for `k > 1`.
    pub fn inv_speed(&self, x: f64) -> Result<f64> {
        let s2 = self.params.sigma() * self.params.sigma();
        let k = self.params.k();
        if x > 0.0 {
            return Ok(s2 * powf(x, 1.0 - k) * exp(2.0 * self.beta * x));
        }
        if x < 0.0 {
            return Err(Error::DomainError("negative state"));
        }
        if k < 1.0 {
            Ok(0.0)
        } else if k == 1.0 {
            Ok(s2)
        } else {
            Err(Error::DomainError("1/rho(0) is unbounded for k > 1"))
        }
    }

    /// `ρ(S⁻¹(w))`.
    fn rho_of_w(&self, w: f64) -> Result<f64> {
        let x = self.scale_s_inv(w)?;
        if x > 0.0 {
            self.speed_rho(x)
        } else {
            // w so small that S⁻¹ underflowed; use the leading power law
            let s2 = self.params.sigma() * self.params.sigma();
            let k = self.params.k();
            Ok(powf((1.0 - self.c) * w, (k - 1.0) / (1.0 - self.c)) / s2)
        }
    }

    /// Exponent of the boundary behaviour `ρ(S⁻¹(w)) ~ w^γ`.
    pub fn boundary_exponent(&self) -> f64 {
        (self.params.k() - 1.0) / (1.0 - self.c)
    }
}

/// A path on nonuniform, nondecreasing times (the clock of the other side of
/// the transformation).
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// `tau` at the source nodes and `phi` at the transformed nodes; one is the
/// inverse of the other on matched indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChangePair {
    pub tau: Vec<f64>,
    pub phi: Vec<f64>,
}

/// CIR path to the reflected Brownian motion `W̃(τ_{t_i}) = S(X(t_i))`.
pub fn cir_to_rbm(x: &SamplePath, m: &ScaleMap) -> Result<(TransformedPath, TimeChangePair)> {
    let g = x.grid();
    let dt = g.uniform_step()?;
    x.check_nonnegative()?;
    let xs = x.values();
    let mut inv = Vec::with_capacity(xs.len());
    for &v in xs {
        inv.push(m.inv_speed(v)?);
    }
    let tau = crate::path::cumulative_trapezoid(&inv, dt);
    let mut values = Vec::with_capacity(xs.len());
    for &v in xs {
        values.push(m.scale_s(v)?);
    }
    let phi = g.times();
    Ok((
        TransformedPath {
            times: tau.clone(),
            values,
        },
        TimeChangePair { tau, phi },
    ))
}

/// `∫ A·w^g dw` over `[wa, wb]` for the power law through `(wa, ra)` and
/// `(wb, rb)`.
fn power_law_segment(wa: f64, ra: f64, wb: f64, rb: f64) -> f64 {
    if wa == wb {
        return 0.0;
    }
    let g = ln(rb / ra) / ln(wb / wa);
    power_law_integral(wb, rb, g, wa)
}

/// `∫_{wa}^{wb} rb·(w/wb)^g dw`.
fn power_law_integral(wb: f64, rb: f64, g: f64, wa: f64) -> f64 {
    if (g + 1.0).abs() < 1e-12 {
        return rb * wb * ln(wb / wa);
    }
    let lo = if wa == 0.0 { 0.0 } else { powf(wa / wb, g + 1.0) };
    rb * wb * (1.0 - lo) / (g + 1.0)
}

/// `∫ ρ(S⁻¹(w(s))) ds` over one step with `w` linear from `w0` to `w1`.
fn phi_step(m: &ScaleMap, w0: f64, r0: Option<f64>, w1: f64, r1: Option<f64>, ds: f64) -> Result<f64> {
    if ds == 0.0 {
        return Ok(0.0);
    }
    let (wl, wh) = if w0 <= w1 { (w0, w1) } else { (w1, w0) };
    let low = wl < m.cfg.phi_threshold;
    if !low || (wh - wl) <= 1e-12 * wh {
        return match (r0, r1) {
            (Some(a), Some(b)) => Ok(0.5 * (a + b) * ds),
            _ => Err(Error::DomainError("reflected path rests at 0 over a positive time step")),
        };
    }
    // geometric sub-nodes accumulating at the low end
    let n = m.cfg.phi_subnodes.max(2);
    let span = wh - wl;
    let mut integral = 0.0;
    let mut wb = wh;
    let mut rb = m.rho_of_w(wb)?;
    for j in 1..=n {
        let wa = if j == n { wl } else { wl + span * powf(0.5, j as f64) };
        if wa > 0.0 {
            let ra = m.rho_of_w(wa)?;
            integral += power_law_segment(wa, ra, wb, rb);
            wb = wa;
            rb = ra;
        } else {
            integral += power_law_integral(wb, rb, m.boundary_exponent(), 0.0);
        }
    }
    Ok(integral * ds / span)
}

/// Reflected Brownian motion back to CIR: nodes `(φ_{s_j}, S⁻¹(W̃(s_j)))`.
pub fn rbm_to_cir(w: &TransformedPath, m: &ScaleMap) -> Result<(TransformedPath, TimeChangePair)> {
    if w.times.len() != w.values.len() {
        return Err(Error::LengthMismatch("times and values must align"));
    }
    if w.values.is_empty() {
        return Err(Error::EmptyPath);
    }
    if let Some((index, &value)) = w.values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeValue { index, value });
    }
    if w.times.windows(2).any(|t| t[1] < t[0]) {
        return Err(Error::InvalidGrid("transformed times must be nondecreasing"));
    }
    let mut xs = Vec::with_capacity(w.values.len());
    let mut rho = Vec::with_capacity(w.values.len());
    for &v in &w.values {
        let x = m.scale_s_inv(v)?;
        xs.push(x);
        rho.push(if x > 0.0 { Some(m.speed_rho(x)?) } else { None });
    }
    let mut phi = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    phi.push(acc);
    for i in 1..xs.len() {
        let ds = w.times[i] - w.times[i - 1];
        acc += phi_step(m, w.values[i - 1], rho[i - 1], w.values[i], rho[i], ds)?;
        phi.push(acc);
    }
    Ok((
        TransformedPath {
            times: phi.clone(),
            values: xs,
        },
        TimeChangePair {
            tau: w.times.clone(),
            phi,
        },
    ))
}

/// Realized quadratic variation `Σ (ΔW̃)²` of a transformed path.
pub fn realized_qv(w: &TransformedPath) -> f64 {
    w.values.windows(2).map(|p| (p[1] - p[0]) * (p[1] - p[0])).sum()
}
