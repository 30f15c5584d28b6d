//! Path generation: CIR (full-truncation Euler or exact transitions), the
//! discrete Skorokhod recursion for the reflected OU process, and common-noise
//! families `a = σ²/4 + δ`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, expm1, sqrt};
use crate::params::ModelParams;
use crate::path::{cumulative_sum, SamplePath, SchemeDiagnostics, TimeGrid};
use crate::rng::PathRng;

/// Largest noncentrality the exact sampler accepts.
pub const MAX_NONCENTRALITY: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum SchemeChoice {
    #[default]
    FullTruncationEuler,
    ExactTransition,
}

/// Normal(0, Δ) increments for replication `stream` of `seed`.
pub fn brownian_increments(g: &TimeGrid, seed: u64, stream: u64) -> Result<Vec<f64>> {
    let dt = g.uniform_step()?;
    Ok(PathRng::new(seed, stream).normal_increments(g.steps(), dt))
}

/// Stream used for the `level`-th dyadic refinement of replication `stream`.
pub fn refinement_stream(stream: u64, level: u32) -> u64 {
    stream ^ ((level as u64) << 56)
}

/// Halves every step by Brownian-bridge sampling: each coarse increment `d`
/// splits into `d/2 + √(Δ/4)·Z` and the remainder, so the coarse path is
/// recovered exactly (up to one rounding) by pairwise sums.
pub fn refine_increments(dw: &[f64], dt: f64, rng: &mut PathRng) -> Vec<f64> {
    let s = sqrt(0.25 * dt);
    let mut out = Vec::with_capacity(2 * dw.len());
    for &d in dw {
        let first = 0.5 * d + s * rng.standard_normal();
        out.push(first);
        out.push(d - first);
    }
    out
}

/// Full-truncation Euler values driven by `dw`.
pub fn euler_values(p: &ModelParams, dt: f64, dw: &[f64]) -> Result<(Vec<f64>, SchemeDiagnostics)> {
    let (a, b, sigma) = (p.a(), p.b(), p.sigma());
    let mut x = p.x0();
    let mut values = Vec::with_capacity(dw.len() + 1);
    let mut diag = SchemeDiagnostics::default();
    values.push(x);
    for &d in dw {
        let xp = x.max(0.0);
        let next = x + (a - b * xp) * dt + sigma * sqrt(xp) * d;
        if !next.is_finite() {
            return Err(Error::NonFiniteState);
        }
        if next < 0.0 {
            diag.clamp_count += 1;
            diag.clamped_mass -= next;
            x = 0.0;
        } else {
            x = next;
        }
        values.push(x);
    }
    Ok((values, diag))
}

/// CIR path by full-truncation Euler from forced increments.
pub fn simulate_cir_with_increments(p: &ModelParams, g: &TimeGrid, dw: Vec<f64>, seed: u64) -> Result<SamplePath> {
    let dt = g.uniform_step()?;
    if dw.len() != g.steps() {
        return Err(Error::LengthMismatch("increments must have N entries"));
    }
    let (values, diag) = euler_values(p, dt, &dw)?;
    Ok(SamplePath::new(g.clone(), values, Some(dw), seed)?.with_diagnostics(diag))
}

/// CIR path for replication `stream` of `seed`. Euler paths carry their
/// increments; exact-transition paths do not.
pub fn simulate_cir_replication(
    p: &ModelParams,
    g: &TimeGrid,
    seed: u64,
    stream: u64,
    scheme: SchemeChoice,
) -> Result<SamplePath> {
    match scheme {
        SchemeChoice::FullTruncationEuler => {
            let dw = brownian_increments(g, seed, stream)?;
            simulate_cir_with_increments(p, g, dw, seed)
        }
        SchemeChoice::ExactTransition => {
            let dt = g.uniform_step()?;
            let mut rng = PathRng::new(seed, stream);
            let mut x = p.x0();
            let mut values = Vec::with_capacity(g.len());
            values.push(x);
            for _ in 0..g.steps() {
                x = cir_transition_exact(p, x, dt, &mut rng)?;
                values.push(x);
            }
            SamplePath::new(g.clone(), values, None, seed)
        }
    }
}

/// Euler CIR path, replication 0.
pub fn simulate_cir(p: &ModelParams, g: &TimeGrid, seed: u64) -> Result<SamplePath> {
    simulate_cir_replication(p, g, seed, 0, SchemeChoice::FullTruncationEuler)
}

/// Scale and noncentral chi-square parameters of `X(t+dt) | X(t) = x`:
/// `X(t+dt) = c·χ′²(k, λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionLaw {
    pub scale: f64,
    pub dof: f64,
    pub noncentrality: f64,
}

impl TransitionLaw {
    pub fn new(p: &ModelParams, x: f64, dt: f64) -> Result<Self> {
        if !(x >= 0.0) || !(dt > 0.0) {
            return Err(Error::DomainError("transition needs x >= 0 and dt > 0"));
        }
        let s2 = p.sigma() * p.sigma();
        let b = p.b();
        let (scale, noncentrality) = if b == 0.0 {
            (0.25 * s2 * dt, 4.0 * x / (s2 * dt))
        } else {
            // -expm1(-b dt) = 1 - e^{-b dt}; the same expressions hold for b < 0
            let one_minus = -expm1(-b * dt);
            (
                s2 * one_minus / (4.0 * b),
                4.0 * b * exp(-b * dt) * x / (s2 * one_minus),
            )
        };
        if !scale.is_finite() || !noncentrality.is_finite() {
            return Err(Error::NonFiniteState);
        }
        Ok(Self {
            scale,
            dof: p.k(),
            noncentrality,
        })
    }

    pub fn mean(&self) -> f64 {
        self.scale * (self.dof + self.noncentrality)
    }

    pub fn variance(&self) -> f64 {
        self.scale * self.scale * 2.0 * (self.dof + 2.0 * self.noncentrality)
    }
}

/// One exact CIR transition.
pub fn cir_transition_exact(p: &ModelParams, x: f64, dt: f64, rng: &mut PathRng) -> Result<f64> {
    let law = TransitionLaw::new(p, x, dt)?;
    if law.noncentrality > MAX_NONCENTRALITY {
        return Err(Error::NoncentralityTooLarge(law.noncentrality));
    }
    let v = law.scale * rng.noncentral_chi_square(law.dof, law.noncentrality);
    if !v.is_finite() {
        return Err(Error::NonFiniteState);
    }
    Ok(v)
}

/// A reflected path and its nondecreasing regulator on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionDecomposition {
    pub reflected: SamplePath,
    pub regulator: Vec<f64>,
}

/// Reflected OU `Y₀ = √x0 − (b/2)∫Y₀ + (σ/2)W + L₀` by the discrete
/// Skorokhod recursion. `a` is not used.
pub fn simulate_rou(p: &ModelParams, g: &TimeGrid, dw: Vec<f64>, seed: u64) -> Result<ReflectionDecomposition> {
    let dt = g.uniform_step()?;
    if dw.len() != g.steps() {
        return Err(Error::LengthMismatch("increments must have N entries"));
    }
    let (hb, hs) = (0.5 * p.b(), 0.5 * p.sigma());
    let mut y = sqrt(p.x0());
    let mut l = 0.0;
    let mut ys = Vec::with_capacity(g.len());
    let mut ls = Vec::with_capacity(g.len());
    ys.push(y);
    ls.push(l);
    for &d in &dw {
        let pre = y - hb * y * dt + hs * d;
        if pre < 0.0 {
            y = 0.0;
            l -= pre;
        } else {
            y = pre;
        }
        ys.push(y);
        ls.push(l);
    }
    Ok(ReflectionDecomposition {
        reflected: SamplePath::new(g.clone(), ys, Some(dw), seed)?,
        regulator: ls,
    })
}

/// ROU decomposition for replication `stream` of `seed`.
pub fn simulate_rou_replication(p: &ModelParams, g: &TimeGrid, seed: u64, stream: u64) -> Result<ReflectionDecomposition> {
    simulate_rou(p, g, brownian_increments(g, seed, stream)?, seed)
}

/// Members `X_δ` with `a = σ²/4 + δ`, all driven by one increment stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledFamily {
    pub sigma: f64,
    pub b: f64,
    pub x0: f64,
    pub deltas: Vec<f64>,
    pub members: Vec<SamplePath>,
    increments: Vec<f64>,
}

impl CoupledFamily {
    /// Reference parameters `a = σ²/4`.
    pub fn base(&self) -> Result<ModelParams> {
        ModelParams::with_defect(self.sigma, self.b, self.x0, 0.0)
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn member_params(&self, i: usize) -> Result<ModelParams> {
        ModelParams::with_defect(self.sigma, self.b, self.x0, self.deltas[i])
    }
}

pub fn coupled_family_from_increments(
    sigma: f64,
    b: f64,
    x0: f64,
    deltas: &[f64],
    g: &TimeGrid,
    dw: Vec<f64>,
    seed: u64,
) -> Result<CoupledFamily> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("at least one delta is required"));
    }
    if deltas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::DeltasNotIncreasing);
    }
    let dt = g.uniform_step()?;
    if dw.len() != g.steps() {
        return Err(Error::LengthMismatch("increments must have N entries"));
    }
    let mut members = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let p = ModelParams::with_defect(sigma, b, x0, d)?;
        let (values, diag) = euler_values(&p, dt, &dw)?;
        members.push(SamplePath::new(g.clone(), values, None, seed)?.with_diagnostics(diag));
    }
    Ok(CoupledFamily {
        sigma,
        b,
        x0,
        deltas: deltas.to_vec(),
        members,
        increments: dw,
    })
}

pub fn simulate_coupled_family(
    sigma: f64,
    b: f64,
    x0: f64,
    deltas: &[f64],
    g: &TimeGrid,
    seed: u64,
    stream: u64,
) -> Result<CoupledFamily> {
    for &d in deltas {
        ModelParams::with_defect(sigma, b, x0, d)?;
    }
    coupled_family_from_increments(sigma, b, x0, deltas, g, brownian_increments(g, seed, stream)?, seed)
}

/// Brownian path `W(t_i)` from increments.
pub fn brownian_path(dw: &[f64]) -> Vec<f64> {
    cumulative_sum(dw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, variance};
    use alloc::vec;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::uniform(1.0, n).unwrap()
    }

    #[test]
    fn noise_free_euler_is_exact_drift() {
        let p = ModelParams::new(1.0, 0.0, 2.0, 0.0).unwrap();
        let g = grid(16);
        let x = simulate_cir_with_increments(&p, &g, vec![0.0; 16], 0).unwrap();
        for (i, &v) in x.values().iter().enumerate() {
            assert!((v - g.time(i)).abs() < 1e-15);
        }
    }

    #[test]
    fn euler_is_nonnegative_and_records_clamps() {
        let p = ModelParams::new(0.1, 0.5, 2.0, 0.2).unwrap();
        let x = simulate_cir(&p, &grid(1 << 12), 4).unwrap();
        assert!(x.values().iter().all(|&v| v >= 0.0));
        let d = x.diagnostics().unwrap();
        assert!(d.clamp_count > 0 && d.clamped_mass > 0.0);
    }

    #[test]
    fn deterministic_replications() {
        let p = ModelParams::new(0.5, 0.5, 2.0, 1.0).unwrap();
        let g = grid(256);
        let a = simulate_cir_replication(&p, &g, 3, 7, SchemeChoice::FullTruncationEuler).unwrap();
        let b = simulate_cir_replication(&p, &g, 3, 7, SchemeChoice::FullTruncationEuler).unwrap();
        let c = simulate_cir_replication(&p, &g, 3, 8, SchemeChoice::FullTruncationEuler).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn refinement_preserves_coarse_path() {
        let g = grid(64);
        let dw = brownian_increments(&g, 1, 0).unwrap();
        let mut rng = PathRng::new(1, refinement_stream(0, 1));
        let fine = refine_increments(&dw, g.uniform_step().unwrap(), &mut rng);
        let back = crate::rng::coarsen(&fine);
        for (c, r) in dw.iter().zip(&back) {
            assert!((c - r).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_draws_at_zero_are_central() {
        let p = ModelParams::new(0.5, 0.0, 2.0, 0.0).unwrap();
        let law = TransitionLaw::new(&p, 0.0, 0.3).unwrap();
        assert_eq!(law.noncentrality, 0.0);
        let mut rng = PathRng::new(11, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| cir_transition_exact(&p, 0.0, 0.3, &mut rng).unwrap())
            .collect();
        let se = law.variance().sqrt() / (xs.len() as f64).sqrt();
        assert!((mean(&xs) - law.scale * p.k()).abs() < 4.0 * se);
    }

    #[test]
    fn exact_marginal_moments() {
        // E X(1) = x0 + a, Var X(1) = σ²x0 + aσ²/2 when b = 0
        let p = ModelParams::new(0.5, 0.0, 2.0, 1.0).unwrap();
        let mut rng = PathRng::new(crate::DEFAULT_SEED, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| cir_transition_exact(&p, 1.0, 1.0, &mut rng).unwrap())
            .collect();
        assert!((mean(&xs) - 1.5).abs() <= 0.02, "{}", mean(&xs));
        assert!((variance(&xs) / 5.0 - 1.0).abs() <= 0.05, "{}", variance(&xs));
    }

    #[test]
    fn exact_moment_sweep() {
        let mut rng = PathRng::new(5, 0);
        for &k in &[0.25, 0.5, 0.75, 1.0, 2.0] {
            for &b in &[0.0, 0.5] {
                let p = ModelParams::new(k, b, 2.0, 1.0).unwrap();
                let law = TransitionLaw::new(&p, 1.0, 0.5).unwrap();
                // closed-form conditional moments, independent of the chi-square form
                let (m, v) = if b == 0.0 {
                    (1.0 + k * 0.5, 4.0 * 0.5 + k * 4.0 * 0.25 / 2.0)
                } else {
                    let e = (-b * 0.5f64).exp();
                    (
                        e + k / b * (1.0 - e),
                        4.0 / b * e * (1.0 - e) + k * 4.0 / (2.0 * b * b) * (1.0 - e) * (1.0 - e),
                    )
                };
                assert!((law.mean() - m).abs() < 1e-12);
                assert!((law.variance() - v).abs() < 1e-12);
                let n = 40_000;
                let xs: Vec<f64> = (0..n)
                    .map(|_| cir_transition_exact(&p, 1.0, 0.5, &mut rng).unwrap())
                    .collect();
                let se = (v / n as f64).sqrt();
                assert!((mean(&xs) - m).abs() < 3.0 * se, "k={k} b={b}");
            }
        }
    }

    #[test]
    fn small_step_mean_is_continuous() {
        let p = ModelParams::new(0.5, 0.5, 2.0, 1.0).unwrap();
        let mut rng = PathRng::new(2, 0);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| cir_transition_exact(&p, 1.0, 1e-6, &mut rng).unwrap())
            .collect();
        let sd = variance(&xs).sqrt();
        assert!((mean(&xs) - 1.0).abs() <= 3.0 * sd / (xs.len() as f64).sqrt() + 1e-6);
    }

    #[test]
    fn huge_noncentrality_is_rejected() {
        let p = ModelParams::new(0.5, 0.0, 2.0, 1.0).unwrap();
        let mut rng = PathRng::new(2, 0);
        assert!(matches!(
            cir_transition_exact(&p, 1.0, 1e-9, &mut rng),
            Err(Error::NoncentralityTooLarge(_))
        ));
    }

    #[test]
    fn rou_forced_cases() {
        let p = ModelParams::new(1.0, 0.0, 2.0, 0.0).unwrap();
        let g = grid(32);
        let dt = g.uniform_step().unwrap();
        // (σ/2)ΔW = −Δ: full reflection
        let down = simulate_rou(&p, &g, vec![-dt; 32], 0).unwrap();
        assert!(down.reflected.values().iter().all(|&y| y == 0.0));
        for (i, &l) in down.regulator.iter().enumerate() {
            assert!((l - g.time(i)).abs() < 1e-14);
        }
        let up = simulate_rou(&p, &g, vec![dt; 32], 0).unwrap();
        assert!(up.regulator.iter().all(|&l| l == 0.0));
        for (i, &y) in up.reflected.values().iter().enumerate() {
            assert!((y - g.time(i)).abs() < 1e-14);
        }
    }

    #[test]
    fn rou_matches_explicit_skorokhod_map() {
        // b = 0, σ = 2, x0 = 1: L(t) = max(0, sup_{s≤t}(−1 − W(s)))
        let p = ModelParams::new(1.0, 0.0, 2.0, 1.0).unwrap();
        let g = grid(1 << 14);
        let dt = g.uniform_step().unwrap();
        let rou = simulate_rou_replication(&p, &g, crate::DEFAULT_SEED, 0).unwrap();
        let w = brownian_path(rou.reflected.increments().unwrap());
        let mut run: f64 = 0.0;
        let mut worst: f64 = 0.0;
        for (l, wi) in rou.regulator.iter().zip(&w) {
            run = run.max(-1.0 - wi);
            worst = worst.max((l - run).abs());
        }
        assert!(worst <= 2.0 * dt.sqrt(), "{worst}");
    }

    #[test]
    fn regulator_grows_only_at_barrier() {
        let p = ModelParams::new(1.0, 0.5, 2.0, 0.3).unwrap();
        let rou = simulate_rou_replication(&p, &grid(1 << 12), 9, 0).unwrap();
        let y = rou.reflected.values();
        for i in 1..y.len() {
            let dl = rou.regulator[i] - rou.regulator[i - 1];
            assert!(dl >= 0.0);
            if dl > 0.0 {
                assert_eq!(y[i], 0.0);
            }
        }
    }

    #[test]
    fn family_checks() {
        let g = grid(64);
        let f = simulate_coupled_family(2.0, 0.5, 1.0, &[0.0], &g, 3, 0).unwrap();
        let p = ModelParams::new(1.0, 0.5, 2.0, 1.0).unwrap();
        let single = simulate_cir(&p, &g, 3).unwrap();
        assert_eq!(f.members[0].values(), single.values());
        assert_eq!(f.increments(), single.increments().unwrap());
        assert!(simulate_coupled_family(1.0, 0.0, 1.0, &[-0.25 + 1e-9], &g, 3, 0).is_ok());
        assert_eq!(
            simulate_coupled_family(1.0, 0.0, 1.0, &[-0.25], &g, 3, 0).unwrap_err(),
            Error::InvalidDelta(-0.25)
        );
        assert_eq!(
            simulate_coupled_family(2.0, 0.0, 1.0, &[0.1, 0.0], &g, 3, 0).unwrap_err(),
            Error::DeltasNotIncreasing
        );
    }

    #[test]
    fn family_ordering_violations_are_rare() {
        let g = grid(1 << 16);
        let f = simulate_coupled_family(2.0, 0.5, 1.0, &[-0.1, 0.0, 0.1], &g, crate::DEFAULT_SEED, 0).unwrap();
        let (lo, mid, hi) = (f.members[0].values(), f.members[1].values(), f.members[2].values());
        let bad = (0..g.len())
            .filter(|&i| lo[i] > mid[i] + 1e-12 || mid[i] > hi[i] + 1e-12)
            .count();
        assert!(bad as f64 <= 1e-3 * g.len() as f64, "{bad}");
    }
}
