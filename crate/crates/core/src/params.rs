//! CIR coefficients `dX = (a - bX)dt + σ√X dW, X(0) = x0`.

use crate::error::{Error, Result};

/// Validated CIR coefficients.
///
/// The dimension `k = 4a/σ²` and the defect `δ = a - σ²/4` are computed once
/// at construction; `k < 1` exactly when `δ < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "RawParams", into = "RawParams")
)]
pub struct ModelParams {
    a: f64,
    b: f64,
    sigma: f64,
    x0: f64,
    k: f64,
    delta: f64,
}

/// Flat, unvalidated form of [`ModelParams`] (the JSON shape).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct RawParams {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub x0: f64,
}

impl ModelParams {
    pub fn new(a: f64, b: f64, sigma: f64, x0: f64) -> Result<Self> {
        validate_params(RawParams { a, b, sigma, x0 })
    }

    /// Parameters with `a = σ²/4 + delta`, the family used by the
    /// Skorokhod-convergence studies.
    pub fn with_defect(sigma: f64, b: f64, x0: f64, delta: f64) -> Result<Self> {
        let a = 0.25 * sigma * sigma + delta;
        if !(a > 0.0) {
            return Err(Error::InvalidDelta(delta));
        }
        Self::new(a, b, sigma, x0)
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// Dimension `4a/σ²`.
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Defect `a - σ²/4` (negative in the low-dimensional regime).
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_low_dimensional(&self) -> bool {
        self.k < 1.0
    }

    /// `2a ≥ σ²`: paths stay strictly positive.
    pub fn feller(&self) -> bool {
        2.0 * self.a >= self.sigma * self.sigma
    }

    pub fn raw(&self) -> RawParams {
        RawParams {
            a: self.a,
            b: self.b,
            sigma: self.sigma,
            x0: self.x0,
        }
    }

    pub fn with_x0(&self, x0: f64) -> Result<Self> {
        Self::new(self.a, self.b, self.sigma, x0)
    }
}

fn dimension(a: f64, sigma: f64) -> f64 {
    4.0 * a / (sigma * sigma)
}

fn defect(a: f64, sigma: f64) -> f64 {
    a - 0.25 * sigma * sigma
}

/// Checks `a > 0`, `σ > 0`, `x0 ≥ 0` and fills in the derived quantities.
pub fn validate_params(p: RawParams) -> Result<ModelParams> {
    for (name, v) in [("a", p.a), ("b", p.b), ("sigma", p.sigma), ("x0", p.x0)] {
        if !v.is_finite() {
            return Err(Error::NonFiniteParam(name));
        }
    }
    if !(p.a > 0.0) {
        return Err(Error::NonPositiveA(p.a));
    }
    if !(p.sigma > 0.0) {
        return Err(Error::NonPositiveSigma(p.sigma));
    }
    if p.x0 < 0.0 {
        return Err(Error::NegativeX0(p.x0));
    }
    Ok(ModelParams {
        a: p.a,
        b: p.b,
        sigma: p.sigma,
        x0: p.x0,
        k: dimension(p.a, p.sigma),
        delta: defect(p.a, p.sigma),
    })
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;
    fn try_from(p: RawParams) -> Result<Self> {
        validate_params(p)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        p.raw()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn derived_quantities() {
        let p = ModelParams::new(1.0, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(p.k(), 1.0);
        assert_eq!(p.delta(), 0.0);
        assert!(!p.is_low_dimensional());

        let p = ModelParams::new(0.5, 0.5, 2.0, 1.0).unwrap();
        assert_eq!(p.k(), 0.5);
        assert_eq!(p.delta(), -0.5);
        assert!(p.is_low_dimensional());
    }

    #[test]
    fn rejects_each_field() {
        assert_eq!(ModelParams::new(0.0, 0.0, 2.0, 1.0), Err(Error::NonPositiveA(0.0)));
        assert_eq!(ModelParams::new(1.0, 0.0, -1.0, 1.0), Err(Error::NonPositiveSigma(-1.0)));
        assert_eq!(ModelParams::new(1.0, 0.0, 1.0, -0.5), Err(Error::NegativeX0(-0.5)));
        assert_eq!(
            ModelParams::new(f64::NAN, 0.0, 1.0, 1.0),
            Err(Error::NonFiniteParam("a"))
        );
    }

    #[test]
    fn defect_family_boundary() {
        assert!(ModelParams::with_defect(1.0, 0.0, 1.0, -0.25 + 1e-9).is_ok());
        assert_eq!(
            ModelParams::with_defect(1.0, 0.0, 1.0, -0.25),
            Err(Error::InvalidDelta(-0.25))
        );
    }

    proptest! {
        #[test]
        fn validate_is_idempotent_and_derived_exact(
            a in 1e-6f64..10.0, b in -3.0f64..3.0, sigma in 1e-3f64..5.0, x0 in 0.0f64..10.0
        ) {
            let p = ModelParams::new(a, b, sigma, x0).unwrap();
            let q = validate_params(p.raw()).unwrap();
            prop_assert_eq!(p, q);
            prop_assert_eq!(p.k().to_bits(), (4.0 * a / (sigma * sigma)).to_bits());
            prop_assert_eq!(p.delta().to_bits(), (a - 0.25 * sigma * sigma).to_bits());
            prop_assert!(p.k() > 0.0);
            prop_assert_eq!(p.k() < 1.0, p.delta() < 0.0);
        }
    }
}
