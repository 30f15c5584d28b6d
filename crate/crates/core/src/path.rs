//! Time grids and sample paths.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Time nodes `0 = t_0 < t_1 < … < t_N = T`.
///
/// Uniform grids store only `(T, N)`; node `i` is `T·i/N`, which is exact for
/// dyadic `N` and `T = 1`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    nodes: Option<Vec<f64>>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid("horizon must be positive and finite"));
        }
        if steps < 2 {
            return Err(Error::InvalidGrid("at least two steps are required"));
        }
        Ok(Self {
            horizon,
            steps,
            nodes: None,
        })
    }

    /// Arbitrary strictly increasing nodes starting at 0. Accepted by the data
    /// model but rejected by every estimator.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::InvalidGrid("at least two steps are required"));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidGrid("first node must be 0"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidGrid("nodes must be strictly increasing"));
        }
        Ok(Self {
            horizon: nodes[nodes.len() - 1],
            steps: nodes.len() - 1,
            nodes: Some(nodes),
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_uniform(&self) -> bool {
        self.nodes.is_none()
    }

    /// Step size of a uniform grid.
    pub fn uniform_step(&self) -> Result<f64> {
        if self.is_uniform() {
            Ok(self.horizon / self.steps as f64)
        } else {
            Err(Error::NonUniformGrid)
        }
    }

    pub fn time(&self, i: usize) -> f64 {
        match &self.nodes {
            Some(n) => n[i],
            None => {
                if i == self.steps {
                    self.horizon
                } else {
                    self.horizon * i as f64 / self.steps as f64
                }
            }
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Index of the last node with `t_i ≤ t` (clamped to the grid).
    pub fn index_at_or_before(&self, t: f64) -> usize {
        if t >= self.horizon {
            return self.steps;
        }
        if t <= 0.0 {
            return 0;
        }
        match &self.nodes {
            None => {
                let mut i = (t / self.horizon * self.steps as f64) as usize;
                while i < self.steps && self.time(i + 1) <= t {
                    i += 1;
                }
                while i > 0 && self.time(i) > t {
                    i -= 1;
                }
                i
            }
            Some(n) => n.partition_point(|&s| s <= t) - 1,
        }
    }

    /// Uniform grid with `factor` times as many steps over the same horizon.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if !self.is_uniform() {
            return Err(Error::NonUniformGrid);
        }
        Self::uniform(self.horizon, self.steps * factor.max(1))
    }
}

/// Positivity diagnostics of a clamped scheme.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SchemeDiagnostics {
    /// Number of steps whose unclamped update was negative.
    pub clamp_count: u64,
    /// Sum of the negative parts removed by clamping.
    pub clamped_mass: f64,
}

/// Values on a [`TimeGrid`], optionally with the Brownian increments that
/// generated them. `increments[i]` drives the step from node `i` to `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    values: Vec<f64>,
    increments: Option<Vec<f64>>,
    seed: u64,
    diagnostics: Option<SchemeDiagnostics>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>, increments: Option<Vec<f64>>, seed: u64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch("values must have N + 1 entries"));
        }
        if let Some(dw) = &increments {
            if dw.len() != grid.steps() {
                return Err(Error::LengthMismatch("increments must have N entries"));
            }
        }
        Ok(Self {
            grid,
            values,
            increments,
            seed,
            diagnostics: None,
        })
    }

    pub fn with_diagnostics(mut self, d: SchemeDiagnostics) -> Self {
        self.diagnostics = Some(d);
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn increments(&self) -> Option<&[f64]> {
        self.increments.as_deref()
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn diagnostics(&self) -> Option<SchemeDiagnostics> {
        self.diagnostics
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Cumulative Brownian path `W(t_i)`, `W(0) = 0`.
    pub fn brownian(&self) -> Option<Vec<f64>> {
        self.increments.as_ref().map(|dw| cumulative_sum(dw))
    }

    pub fn check_nonnegative(&self) -> Result<()> {
        match self.values.iter().position(|&v| !(v >= 0.0)) {
            Some(index) => Err(Error::NegativeValue {
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }

    /// Same grid, increments and seed with new values.
    pub(crate) fn map_values(&self, values: Vec<f64>) -> Self {
        Self {
            grid: self.grid.clone(),
            values,
            increments: self.increments.clone(),
            seed: self.seed,
            diagnostics: self.diagnostics,
        }
    }
}

/// `Y = √X` node by node.
pub fn sqrt_path(x: &SamplePath) -> Result<SamplePath> {
    x.check_nonnegative()?;
    Ok(x.map_values(x.values.iter().map(|&v| sqrt(v)).collect()))
}

/// `[0, d_0, d_0 + d_1, …]`.
pub fn cumulative_sum(d: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(d.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for &v in d {
        acc += v;
        out.push(acc);
    }
    out
}

/// Cumulative trapezoid rule of node values `f` with constant step `dt`.
pub fn cumulative_trapezoid(f: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(acc);
    for w in f.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dt;
        out.push(acc);
    }
    out
}
