//! Kolmogorov-Smirnov check of the exact CIR transition sampler.

use cirlt_core::rng::PathRng;
use cirlt_core::sde::{cir_transition_exact, TransitionLaw};
use cirlt_core::special::noncentral_chi_square_cdf;
use cirlt_core::stats::{ks_critical_1pct, ks_statistic};
use cirlt_core::{Error, ModelParams, Result};
use serde::Serialize;

/// The pass threshold is this multiple of the 1% critical value.
pub const KS_THRESHOLD_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsOutcome {
    pub n: usize,
    pub statistic: f64,
    pub critical_1pct: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// `CDF(z) = F_{χ′²(k, λ)}(z / c)` for the law of `X(t+dt) | X(t) = x`.
pub fn transition_cdf(law: &TransitionLaw, z: f64) -> Result<f64> {
    noncentral_chi_square_cdf(z / law.scale, law.dof, law.noncentrality)
}

/// Draws `n` exact transitions from `x` over `dt` on stream 0 of `seed`
/// and compares them to the analytic law.
pub fn ks_test_exact_transition(p: &ModelParams, x: f64, dt: f64, n: usize, seed: u64) -> Result<KsOutcome> {
    if n < 1000 {
        return Err(Error::InvalidArgument("the KS test needs at least 1000 samples"));
    }
    let law = TransitionLaw::new(p, x, dt)?;
    let mut rng = PathRng::new(seed, 0);
    let samples = (0..n)
        .map(|_| cir_transition_exact(p, x, dt, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let statistic = ks_statistic(&samples, |z| transition_cdf(&law, z))?;
    let critical_1pct = ks_critical_1pct(n);
    let threshold = KS_THRESHOLD_FACTOR * critical_1pct;
    Ok(KsOutcome {
        n,
        statistic,
        critical_1pct,
        threshold,
        pass: statistic <= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dof_central_case() {
        // k = 1, b = 0, x = 0, dt = 1: X = (σ²/4)·χ²₁ = Z²
        let p = ModelParams::new(1.0, 0.0, 2.0, 0.0).unwrap();
        let law = TransitionLaw::new(&p, 0.0, 1.0).unwrap();
        assert_eq!(law.noncentrality, 0.0);
        assert!((transition_cdf(&law, 1.0).unwrap() - 0.682_689_492_137_085_9).abs() < 1e-14);
        let p2 = ModelParams::new(2.0, 0.0, 2.0, 0.0).unwrap();
        let law2 = TransitionLaw::new(&p2, 0.0, 1.0).unwrap();
        for z in [0.3, 2.0, 7.0] {
            assert!((transition_cdf(&law2, z).unwrap() - (1.0 - (-z / 2.0f64).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn small_sample_rejected() {
        let p = ModelParams::new(0.5, 0.5, 2.0, 1.0).unwrap();
        assert!(ks_test_exact_transition(&p, 1.0, 0.1, 999, 1).is_err());
    }
}
