//! Approximation of the reflected OU process and its regulator `L₀` by CIR
//! families on either side of `a = σ²/4`, driven by common noise.
//!
//! * From the right, `a = σ²/4 + δₙ`: `sup_t |L₀(t) − ½∫₀ᵗ δₙ/√X_{δₙ}|`.
//! * From the left, `a = σ²/4 − δₙ`: `sup_t |Y_{−δₙ} − Y₀|` and
//!   `sup_t |L_{−δₙ} − L₀|`, with `L_{−δₙ}` the pathwise residual of
//!   `Y_{−δₙ}`, plus the two pathwise ordering diagnostics.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::local_time::drift_residual_series;
use crate::math::sqrt;
use crate::params::ModelParams;
use crate::path::{cumulative_trapezoid, TimeGrid};
use crate::sde::{brownian_increments, coupled_family_from_increments, simulate_rou};
use crate::stats::quantile;

/// Guard added under the square root of `δ/√X` so that exact zeros of the
/// clamped scheme stay finite.
pub const SQRT_GUARD: f64 = 1e-14;

/// Slack allowed before a pair of nodes counts as an ordering violation.
pub const ORDERING_SLACK: f64 = 1e-12;

pub const CALIBRATION_NOTE: &str =
    "no convergence rate is available for either side; ladder depth and tolerances are calibration choices";

/// Reference `(Y₀, L₀)` for the left-side study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum LeftReference {
    /// The `δ = 0` member of the same Euler family, with `L₀` its residual.
    #[default]
    EulerZeroDefect,
    /// The discrete Skorokhod recursion and its regulator.
    Rou,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TableMetadata {
    pub sigma: f64,
    pub b: f64,
    pub x0: f64,
    pub horizon: f64,
    pub steps: usize,
    pub seed: u64,
    pub first_stream: u64,
    pub replications: usize,
    pub sqrt_guard: f64,
    pub statistic: String,
    pub note: String,
}

/// One row per ladder level.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceLevel {
    pub n: usize,
    /// Signed: positive from the right, negative from the left.
    pub delta: f64,
    /// `errors[r]` is the sup-error of replication `r` at this level.
    pub errors: Vec<f64>,
    pub median: f64,
    pub p90: f64,
    /// Fraction of replications whose error is below the previous level's
    /// (1 at the first level).
    pub monotone_ok_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceTable {
    pub levels: Vec<ConvergenceLevel>,
    pub metadata: TableMetadata,
}

impl ConvergenceTable {
    /// `errors[r][n]` is the sup-error of replication `r` at level `n`.
    pub fn from_replications(deltas: &[f64], errors: &[Vec<f64>], metadata: TableMetadata) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::InvalidArgument("no replications"));
        }
        if errors.iter().any(|e| e.len() != deltas.len()) {
            return Err(Error::LengthMismatch("one error per level and replication"));
        }
        let mut levels = Vec::with_capacity(deltas.len());
        for (n, &delta) in deltas.iter().enumerate() {
            let col: Vec<f64> = errors.iter().map(|e| e[n]).collect();
            let ok = if n == 0 {
                1.0
            } else {
                errors.iter().filter(|e| e[n] < e[n - 1]).count() as f64 / errors.len() as f64
            };
            levels.push(ConvergenceLevel {
                n: n + 1,
                delta,
                median: quantile(&col, 0.5)?,
                p90: quantile(&col, 0.9)?,
                errors: col,
                monotone_ok_fraction: ok,
            });
        }
        Ok(Self { levels, metadata })
    }

    pub fn medians(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.median).collect()
    }

    /// Medians strictly decreasing from level to level.
    pub fn median_strictly_decreasing(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].median < w[0].median)
    }

    /// Fraction of replications whose last-level error is below the first.
    pub fn last_below_first_fraction(&self) -> f64 {
        let (Some(first), Some(last)) = (self.levels.first(), self.levels.last()) else {
            return 0.0;
        };
        let r = first.errors.len();
        (0..r).filter(|&i| last.errors[i] < first.errors[i]).count() as f64 / r as f64
    }

    /// Fraction of replications whose error sequence decreases strictly at
    /// every level.
    pub fn fully_decreasing_fraction(&self) -> f64 {
        let Some(first) = self.levels.first() else {
            return 0.0;
        };
        let r = first.errors.len();
        (0..r)
            .filter(|&i| self.levels.windows(2).all(|w| w[1].errors[i] < w[0].errors[i]))
            .count() as f64
            / r as f64
    }
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::InvalidArgument("empty delta ladder"));
    }
    if let Some(&d) = ladder.iter().find(|&&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::InvalidDelta(d));
    }
    if ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::LadderNotDecreasing);
    }
    Ok(())
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Validated setup shared by both studies.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySetup {
    pub sigma: f64,
    pub b: f64,
    pub x0: f64,
    /// Positive magnitudes `δₙ`, strictly decreasing.
    pub ladder: Vec<f64>,
    pub grid: TimeGrid,
    pub seed: u64,
}

impl StudySetup {
    pub fn right(sigma: f64, b: f64, x0: f64, ladder: &[f64], grid: TimeGrid, seed: u64) -> Result<Self> {
        ModelParams::with_defect(sigma, b, x0, 0.0)?;
        check_ladder(ladder)?;
        grid.uniform_step()?;
        Ok(Self {
            sigma,
            b,
            x0,
            ladder: ladder.to_vec(),
            grid,
            seed,
        })
    }

    pub fn left(sigma: f64, b: f64, x0: f64, ladder: &[f64], grid: TimeGrid, seed: u64) -> Result<Self> {
        let s = Self::right(sigma, b, x0, ladder, grid, seed)?;
        let top = 0.25 * sigma * sigma;
        if let Some(&d) = ladder.iter().find(|&&d| d >= top) {
            return Err(Error::InvalidDelta(d));
        }
        Ok(s)
    }

    fn metadata(&self, first_stream: u64, replications: usize, statistic: &str) -> TableMetadata {
        TableMetadata {
            sigma: self.sigma,
            b: self.b,
            x0: self.x0,
            horizon: self.grid.horizon(),
            steps: self.grid.steps(),
            seed: self.seed,
            first_stream,
            replications,
            sqrt_guard: SQRT_GUARD,
            statistic: statistic.into(),
            note: CALIBRATION_NOTE.into(),
        }
    }
}

/// Sup-errors of one right-side replication, one per ladder level.
pub fn right_replication(s: &StudySetup, stream: u64) -> Result<Vec<f64>> {
    let dw = brownian_increments(&s.grid, s.seed, stream)?;
    right_replication_with_increments(s, dw)
}

pub fn right_replication_with_increments(s: &StudySetup, dw: Vec<f64>) -> Result<Vec<f64>> {
    let dt = s.grid.uniform_step()?;
    let base = ModelParams::with_defect(s.sigma, s.b, s.x0, 0.0)?;
    let rou = simulate_rou(&base, &s.grid, dw.clone(), s.seed)?;
    let increasing: Vec<f64> = s.ladder.iter().rev().copied().collect();
    let fam = coupled_family_from_increments(s.sigma, s.b, s.x0, &increasing, &s.grid, dw, s.seed)?;
    let mut out = Vec::with_capacity(s.ladder.len());
    for (i, &d) in s.ladder.iter().enumerate() {
        let member = &fam.members[s.ladder.len() - 1 - i];
        let f: Vec<f64> = member.values().iter().map(|&x| 0.5 * d / sqrt(x + SQRT_GUARD)).collect();
        out.push(sup_distance(&rou.regulator, &cumulative_trapezoid(&f, dt)));
    }
    Ok(out)
}

/// Right-side study over streams `first_stream..first_stream + replications`.
pub fn converge_from_right(
    sigma: f64,
    b: f64,
    x0: f64,
    ladder: &[f64],
    g: &TimeGrid,
    seed: u64,
    first_stream: u64,
    replications: usize,
) -> Result<ConvergenceTable> {
    let s = StudySetup::right(sigma, b, x0, ladder, g.clone(), seed)?;
    let errors = (0..replications as u64)
        .map(|r| right_replication(&s, first_stream + r))
        .collect::<Result<Vec<_>>>()?;
    right_table(&s, &errors, first_stream)
}

pub fn right_table(s: &StudySetup, errors: &[Vec<f64>], first_stream: u64) -> Result<ConvergenceTable> {
    ConvergenceTable::from_replications(
        &s.ladder,
        errors,
        s.metadata(first_stream, errors.len(), "sup_t |L0 - (1/2) int delta/sqrt(X_delta)|"),
    )
}

/// Per-replication output of the left-side study.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftReplication {
    pub y_errors: Vec<f64>,
    pub l_errors: Vec<f64>,
    /// Node pairs where `Y_{−δₙ₊₁} < Y_{−δₙ} − slack`, over adjacent ladder
    /// levels.
    pub y_violations: u64,
    pub l_violations: u64,
    pub comparisons: u64,
    /// The same count for the last level against the `δ = 0` Euler member.
    pub y_violations_reference: u64,
    pub l_violations_reference: u64,
    pub comparisons_reference: u64,
}

pub fn left_replication(s: &StudySetup, stream: u64, reference: LeftReference) -> Result<LeftReplication> {
    let dw = brownian_increments(&s.grid, s.seed, stream)?;
    left_replication_with_increments(s, dw, reference)
}

pub fn left_replication_with_increments(s: &StudySetup, dw: Vec<f64>, reference: LeftReference) -> Result<LeftReplication> {
    let n = s.ladder.len();
    let mut deltas: Vec<f64> = s.ladder.iter().map(|&d| -d).collect();
    deltas.push(0.0);
    let fam = coupled_family_from_increments(s.sigma, s.b, s.x0, &deltas, &s.grid, dw, s.seed)?;
    let mut ys = Vec::with_capacity(n + 1);
    let mut ls = Vec::with_capacity(n + 1);
    for (i, m) in fam.members.iter().enumerate() {
        let y = crate::path::sqrt_path(m)?;
        let p = fam.member_params(i)?;
        ls.push(drift_residual_series(&y, fam.increments(), &p)?);
        ys.push(y);
    }
    let (ref_y, ref_l): (Vec<f64>, Vec<f64>) = match reference {
        LeftReference::EulerZeroDefect => (ys[n].values().to_vec(), ls[n].clone()),
        LeftReference::Rou => {
            let rou = simulate_rou(&fam.base()?, &s.grid, fam.increments().to_vec(), s.seed)?;
            (rou.reflected.values().to_vec(), rou.regulator)
        }
    };
    let mut out = LeftReplication {
        y_errors: Vec::with_capacity(n),
        l_errors: Vec::with_capacity(n),
        y_violations: 0,
        l_violations: 0,
        comparisons: 0,
        y_violations_reference: 0,
        l_violations_reference: 0,
        comparisons_reference: 0,
    };
    for i in 0..n {
        out.y_errors.push(sup_distance(ys[i].values(), &ref_y));
        out.l_errors.push(sup_distance(&ls[i], &ref_l));
    }
    for i in 0..n {
        let (ya, yb) = (ys[i].values(), ys[i + 1].values());
        let (la, lb) = (&ls[i], &ls[i + 1]);
        let (mut vy, mut vl) = (0, 0);
        for j in 0..ya.len() {
            if yb[j] < ya[j] - ORDERING_SLACK {
                vy += 1;
            }
            if lb[j] < la[j] - ORDERING_SLACK {
                vl += 1;
            }
        }
        if i + 1 < n {
            out.y_violations += vy;
            out.l_violations += vl;
            out.comparisons += ya.len() as u64;
        } else {
            out.y_violations_reference = vy;
            out.l_violations_reference = vl;
            out.comparisons_reference = ya.len() as u64;
        }
    }
    Ok(out)
}

/// Both left-side tables with the pooled ordering diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftStudy {
    pub y_table: ConvergenceTable,
    pub l_table: ConvergenceTable,
    pub y_violation_fraction: f64,
    pub l_violation_fraction: f64,
    /// Last ladder level against the `δ = 0` Euler member.
    pub y_violation_fraction_reference: f64,
    pub reference: LeftReference,
}

pub fn left_study(s: &StudySetup, reps: &[LeftReplication], first_stream: u64, reference: LeftReference) -> Result<LeftStudy> {
    let signed: Vec<f64> = s.ladder.iter().map(|&d| -d).collect();
    let ye: Vec<Vec<f64>> = reps.iter().map(|r| r.y_errors.clone()).collect();
    let le: Vec<Vec<f64>> = reps.iter().map(|r| r.l_errors.clone()).collect();
    let total: u64 = reps.iter().map(|r| r.comparisons).sum();
    let frac = |v: u64| if total == 0 { 0.0 } else { v as f64 / total as f64 };
    let total_ref: u64 = reps.iter().map(|r| r.comparisons_reference).sum();
    let y_ref: u64 = reps.iter().map(|r| r.y_violations_reference).sum();
    Ok(LeftStudy {
        y_table: ConvergenceTable::from_replications(&signed, &ye, s.metadata(first_stream, reps.len(), "sup_t |Y_-delta - Y0|"))?,
        l_table: ConvergenceTable::from_replications(&signed, &le, s.metadata(first_stream, reps.len(), "sup_t |L_-delta - L0|"))?,
        y_violation_fraction: frac(reps.iter().map(|r| r.y_violations).sum()),
        l_violation_fraction: frac(reps.iter().map(|r| r.l_violations).sum()),
        y_violation_fraction_reference: if total_ref == 0 { 0.0 } else { y_ref as f64 / total_ref as f64 },
        reference,
    })
}

/// Left-side study over streams `first_stream..first_stream + replications`.
#[allow(clippy::too_many_arguments)]
pub fn converge_from_left(
    sigma: f64,
    b: f64,
    x0: f64,
    ladder: &[f64],
    g: &TimeGrid,
    seed: u64,
    first_stream: u64,
    replications: usize,
    reference: LeftReference,
) -> Result<LeftStudy> {
    let s = StudySetup::left(sigma, b, x0, ladder, g.clone(), seed)?;
    let reps = (0..replications as u64)
        .map(|r| left_replication(&s, first_stream + r, reference))
        .collect::<Result<Vec<_>>>()?;
    left_study(&s, &reps, first_stream, reference)
}
