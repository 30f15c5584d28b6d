//! Occupation densities, the normalized local time `ℓ(t,y) = y^{1-k}L^Y(t,y)`
//! and three evaluations of the singular drift term of `Y = √X`:
//!
//! * the residual `R(t) = Y(t) − √x0 + (b/2)∫₀ᵗY − (σ/2)W(t)`,
//! * the ε-regularized functional `L_ε(t)`,
//! * the local-time integral `L̂(t) = −½(σ²/4 − a)∫₀^∞ y^{k−2}(ℓ(t,y) − ℓ(t,0))dy`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, powf, sqrt};
use crate::params::ModelParams;
use crate::path::{cumulative_sum, cumulative_trapezoid, SamplePath, TimeGrid};
use crate::quad::AdaptiveQuad;
use crate::scale::{cir_to_rbm, ScaleMap};

/// Parameters of the default bin layout for a path of `Y`.
///
/// Bin 0 is `[0, first_edge_factor·σ√Δ)`, the zone where the discrete
/// scheme's clamping artifacts live. It is followed by `geometric` bins up
/// to `split·max Y` and `uniform` bins up to just above `max Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct BinSpec {
    pub first_edge_factor: f64,
    pub geometric: usize,
    pub uniform: usize,
    pub split: f64,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            first_edge_factor: 0.5,
            geometric: 20,
            uniform: 40,
            split: 0.1,
        }
    }
}

impl BinSpec {
    /// One refinement notch: first edge divided by √2 and four more
    /// geometric bins.
    pub fn refined(&self) -> Self {
        Self {
            first_edge_factor: self.first_edge_factor / core::f64::consts::SQRT_2,
            geometric: self.geometric + 4,
            ..*self
        }
    }
}

/// Bin edges with the index range of the geometric block.
#[derive(Debug, Clone, PartialEq)]
pub struct BinLayout {
    pub edges: Vec<f64>,
    /// Bins `1..=geometric_end` form the geometric block.
    pub geometric_end: usize,
}

impl BinLayout {
    /// Layout for a path with maximum `ymax` on a grid of step `dt`.
    pub fn for_path(spec: &BinSpec, ymax: f64, dt: f64, sigma: f64) -> Result<Self> {
        if !(ymax > 0.0) || !ymax.is_finite() {
            return Err(Error::EmptyPath);
        }
        if spec.uniform == 0 || !(spec.split > 0.0 && spec.split < 1.0) {
            return Err(Error::InvalidArgument("bin spec needs uniform bins and 0 < split < 1"));
        }
        let top = ymax * (1.0 + 1e-12);
        let split = spec.split * ymax;
        let first = spec.first_edge_factor * sigma * sqrt(dt);
        let mut edges = alloc::vec![0.0];
        let mut geometric_end = 0;
        if first > 0.0 && first < split && spec.geometric > 0 {
            edges.push(first);
            let r = powf(split / first, 1.0 / spec.geometric as f64);
            for j in 1..spec.geometric {
                edges.push(first * powf(r, j as f64));
            }
            edges.push(split);
            geometric_end = spec.geometric;
        } else {
            edges.push(split);
        }
        let du = (top - split) / spec.uniform as f64;
        for j in 1..spec.uniform {
            edges.push(split + du * j as f64);
        }
        edges.push(top);
        Ok(Self { edges, geometric_end })
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }
}

/// Histogram or kernel estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Estimator {
    Histogram,
    /// Epanechnikov kernel reflected at 0; `None` selects
    /// `h = (max − min)·N^{−1/5}`.
    Kernel { bandwidth: Option<f64> },
}

/// Occupation density `y ↦ L(t, y)` averaged over bins.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationDensity {
    pub t: f64,
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub estimator: Estimator,
    pub bandwidth: Option<f64>,
}

impl OccupationDensity {
    pub fn mids(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| e[1] - e[0]).collect()
    }

    /// `Σ density_j·width_j`.
    pub fn mass(&self) -> f64 {
        self.density
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }
}

fn bin_index(edges: &[f64], v: f64) -> Result<usize> {
    let m = edges.len() - 1;
    if !(v >= edges[0]) || v > edges[m] {
        return Err(Error::BinCoverage);
    }
    Ok((edges.partition_point(|&e| e <= v) - 1).min(m - 1))
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges[0] != 0.0 || edges.windows(2).any(|e| !(e[1] > e[0])) {
        return Err(Error::InvalidArgument("bin edges must start at 0 and increase"));
    }
    Ok(())
}

/// Trapezoid weights of nodes `0..=m` (Δ/2 at both ends) so that the total
/// occupation mass is exactly `t_m`.
fn node_weight(i: usize, m: usize, dt: f64) -> f64 {
    if i == 0 || i == m {
        0.5 * dt
    } else {
        dt
    }
}

/// Occupation density of `path` up to time `t` on the given bins.
pub fn occupation_density(path: &SamplePath, t: f64, edges: &[f64], estimator: Estimator) -> Result<OccupationDensity> {
    if path.is_empty() {
        return Err(Error::EmptyPath);
    }
    check_edges(edges)?;
    let g = path.grid();
    let dt = g.uniform_step()?;
    if t > g.horizon() * (1.0 + 1e-12) || t < 0.0 {
        return Err(Error::InvalidArgument("evaluation time outside the path horizon"));
    }
    let m = g.index_at_or_before(t * (1.0 + 1e-12));
    let vals = &path.values()[..=m];
    let nb = edges.len() - 1;
    let mut density = alloc::vec![0.0; nb];
    if m == 0 {
        return Ok(OccupationDensity {
            t,
            edges: edges.to_vec(),
            density,
            estimator,
            bandwidth: None,
        });
    }
    let mut bandwidth = None;
    match estimator {
        Estimator::Histogram => {
            for (i, &v) in vals.iter().enumerate() {
                density[bin_index(edges, v)?] += node_weight(i, m, dt);
            }
        }
        Estimator::Kernel { bandwidth: bw } => {
            for &v in vals {
                bin_index(edges, v)?;
            }
            let (lo, hi) = vals
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            let h = bw.unwrap_or((hi - lo) * powf(g.steps() as f64, -0.2));
            if !(h > 0.0) {
                return Err(Error::InvalidArgument("kernel bandwidth must be positive"));
            }
            bandwidth = Some(h);
            for (i, &v) in vals.iter().enumerate() {
                let w = node_weight(i, m, dt);
                kernel_spread(edges, &mut density, v, h, w);
                if v < h {
                    // mirror image about 0
                    kernel_spread(edges, &mut density, -v, h, w);
                }
            }
        }
    }
    for (d, e) in density.iter_mut().zip(edges.windows(2)) {
        *d /= e[1] - e[0];
    }
    Ok(OccupationDensity {
        t,
        edges: edges.to_vec(),
        density,
        estimator,
        bandwidth,
    })
}

/// Epanechnikov CDF.
fn epan_cdf(u: f64) -> f64 {
    if u <= -1.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        0.5 + 0.75 * u - 0.25 * u * u * u
    }
}

/// Adds `w` times the kernel mass centred at `c` to every bin it overlaps.
fn kernel_spread(edges: &[f64], density: &mut [f64], c: f64, h: f64, w: f64) {
    let lo = (c - h).max(0.0);
    let hi = c + h;
    if hi <= 0.0 {
        return;
    }
    let nb = edges.len() - 1;
    let mut j = (edges.partition_point(|&e| e <= lo)).saturating_sub(1);
    while j < nb && edges[j] < hi {
        let mass = epan_cdf((edges[j + 1] - c) / h) - epan_cdf((edges[j] - c) / h);
        density[j] += w * mass;
        j += 1;
    }
}

/// Diagnostics of the boundary fit that determines `ℓ(t, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundaryFit {
    /// Bins `first..=last` entered the regression.
    pub first: usize,
    pub last: usize,
    pub slope: f64,
    /// Weighted RMS residual of the fit.
    pub residual: f64,
    /// The intercept came out negative and was clamped to 0.
    pub clamped: bool,
    /// `ℓ − ℓ(t,0) ≈ amplitude·y^exponent` below the first fitted midpoint.
    pub amplitude: f64,
    pub exponent: f64,
    /// `exponent − (1 − k/2)`.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLocalTime {
    pub t: f64,
    pub k: f64,
    pub edges: Vec<f64>,
    pub mids: Vec<f64>,
    pub values: Vec<f64>,
    /// Extrapolated boundary value `ℓ(t, 0)`.
    pub ell0: f64,
    pub fit: BoundaryFit,
}

/// `ℓ_j = y_j^{1−k}·L^Y(t, y_j)` at bin midpoints and `ℓ(t, 0)`.
///
/// `ℓ(t, 0)` is the intercept of a weighted least-squares fit of `ℓ` against
/// `S(y²)^{1/2}` over the bins `1..=fit_end` (see [`fit_end`]), with bin 0 (the clamping zone)
/// excluded. Weights are the expected occupancy `(e_{j+1}^k − e_j^k)/k`, and
/// empty bins stay in the fit. A negative intercept is clamped to 0 and the
/// slope is refitted through the origin.
pub fn normalize_ell(d: &OccupationDensity, m: &ScaleMap, fit_end: usize) -> Result<NormalizedLocalTime> {
    let k = m.params().k();
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::DomainError("normalized local time needs 0 < k <= 1"));
    }
    let mids = d.mids();
    let n = mids.len();
    let values: Vec<f64> = if k == 1.0 {
        d.density.clone()
    } else {
        mids.iter().zip(&d.density).map(|(&y, &l)| powf(y, 1.0 - k) * l).collect()
    };
    let last = fit_end.min(n - 1);
    if last < 2 {
        return Err(Error::ExtrapolationFailure);
    }
    let first = 1;
    let mut sw = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut xs = Vec::with_capacity(last);
    for j in first..=last {
        let x = sqrt(m.scale_s(mids[j] * mids[j])?);
        let w = (powf(d.edges[j + 1], k) - powf(d.edges[j], k)) / k;
        let y = values[j];
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
        xs.push((x, w, y));
    }
    let det = sw * sxx - sx * sx;
    if !(sw > 0.0) || !(det > 1e-300 * sw * sxx) || !det.is_finite() {
        return Err(Error::ExtrapolationFailure);
    }
    let mut slope = (sw * sxy - sx * sy) / det;
    let mut ell0 = (sy - slope * sx) / sw;
    let mut clamped = false;
    if ell0 < 0.0 {
        clamped = true;
        ell0 = 0.0;
        slope = sxy / sxx;
    }
    if !ell0.is_finite() || !slope.is_finite() {
        return Err(Error::ExtrapolationFailure);
    }
    let ss: f64 = xs
        .iter()
        .map(|&(x, w, y)| {
            let r = y - ell0 - slope * x;
            w * r * r
        })
        .sum();
    let residual = sqrt(ss / sw);

    // power law through the fitted model at the first fitted midpoint
    let y1 = mids[first];
    let x1 = xs[0].0;
    let s1 = m.scale_s(y1 * y1)?;
    let exponent = y1 * y1 * m.scale_derivative(y1 * y1) / s1;
    let amplitude = slope * x1 / powf(y1, exponent);
    Ok(NormalizedLocalTime {
        t: d.t,
        k,
        edges: d.edges.clone(),
        mids,
        values,
        ell0,
        fit: BoundaryFit {
            first,
            last,
            slope,
            residual,
            clamped,
            amplitude,
            exponent,
            kappa: exponent - (1.0 - 0.5 * k),
        },
    })
}

/// `∫₀^cap y^{k−2} D(y) dy` for a profile `D` that is `amplitude·y^exponent`
/// on `[0, y₁]`, piecewise linear through `points` (starting at `y₁`), and
/// equal to `tail` from the last point up to `cap`.
pub fn integrate_profile(k: f64, amplitude: f64, exponent: f64, points: &[(f64, f64)], tail: f64, cap: f64) -> Result<f64> {
    if points.is_empty() || !(k > 0.0 && k < 1.0) {
        return Err(Error::InvalidArgument("profile needs points and 0 < k < 1"));
    }
    let q = k - 1.0 + exponent;
    if !(q > 0.0) {
        return Err(Error::ExtrapolationFailure);
    }
    let y1 = points[0].0;
    let mut total = amplitude * powf(y1, q) / q;
    let km1 = k - 1.0;
    for w in points.windows(2) {
        let ((ya, fa), (yb, fb)) = (w[0], w[1]);
        let sl = (fb - fa) / (yb - ya);
        let ic = fa - sl * ya;
        total += ic * (powf(yb, km1) - powf(ya, km1)) / km1 + sl * (powf(yb, k) - powf(ya, k)) / k;
    }
    let y_last = points[points.len() - 1].0;
    if cap > y_last {
        total += tail * (powf(cap, km1) - powf(y_last, km1)) / km1;
    }
    Ok(total)
}

/// `L̂(t)` from a normalized local time. `ymax_cap` is the level above which
/// `ℓ ≡ 0` is integrated in closed form.
pub fn singular_term_local_time(ell: &NormalizedLocalTime, p: &ModelParams, ymax_cap: f64) -> Result<f64> {
    let pref = 0.25 * p.sigma() * p.sigma() - p.a();
    if pref == 0.0 || ell.k >= 1.0 {
        return Ok(0.0);
    }
    let Some(last_occ) = ell.values.iter().rposition(|&v| v > 0.0) else {
        return Ok(0.0);
    };
    let f = ell.fit.first;
    if last_occ < f {
        // everything sits in the clamping zone: ℓ − ℓ0 is the model only
        let d1 = ell.fit.amplitude * powf(ell.mids[f], ell.fit.exponent);
        let total = integrate_profile(ell.k, ell.fit.amplitude, ell.fit.exponent, &[(ell.mids[f], d1)], -ell.ell0, ymax_cap)?;
        return Ok(-0.5 * pref * total);
    }
    let mut points = Vec::with_capacity(last_occ - f + 1);
    points.push((ell.mids[f], ell.fit.amplitude * powf(ell.mids[f], ell.fit.exponent)));
    for j in f + 1..=last_occ {
        points.push((ell.mids[j], ell.values[j] - ell.ell0));
    }
    let total = integrate_profile(ell.k, ell.fit.amplitude, ell.fit.exponent, &points, -ell.ell0, ymax_cap)?;
    Ok(-0.5 * pref * total)
}

/// Nodewise integrand of `L_ε`.
fn regularized_integrand(p: &ModelParams, eps: f64, x: f64) -> f64 {
    let s = x + eps;
    let r = sqrt(s);
    0.5 * (p.a() / r - 0.25 * p.sigma() * p.sigma() * x / (s * r))
}

/// Cumulative `L_ε(t_i)` by the trapezoid rule.
pub fn singular_term_regularized_series(x: &SamplePath, p: &ModelParams, eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive"));
    }
    let dt = x.grid().uniform_step()?;
    let f: Vec<f64> = x.values().iter().map(|&v| regularized_integrand(p, eps, v)).collect();
    Ok(cumulative_trapezoid(&f, dt))
}

/// `L_ε(t)` at the last grid node not after `t`.
pub fn singular_term_regularized(x: &SamplePath, p: &ModelParams, eps: f64, t: f64) -> Result<f64> {
    let s = singular_term_regularized_series(x, p, eps)?;
    Ok(s[x.grid().index_at_or_before(t * (1.0 + 1e-12))])
}

/// Residual series `R(t_i)` of a `Y` path and its Brownian increments.
pub fn drift_residual_series(y: &SamplePath, dw: &[f64], p: &ModelParams) -> Result<Vec<f64>> {
    if dw.len() != y.grid().steps() {
        return Err(Error::GridMismatch);
    }
    let dt = y.grid().uniform_step()?;
    let ys = y.values();
    let int_y = cumulative_trapezoid(ys, dt);
    let w = cumulative_sum(dw);
    let (y0, hb, hs) = (sqrt(p.x0()), 0.5 * p.b(), 0.5 * p.sigma());
    Ok((0..ys.len()).map(|i| ys[i] - y0 + hb * int_y[i] - hs * w[i]).collect())
}

/// `R(t)` at the last grid node not after `t`.
pub fn drift_residual(y: &SamplePath, dw: &[f64], p: &ModelParams, t: f64) -> Result<f64> {
    let r = drift_residual_series(y, dw, p)?;
    Ok(r[y.grid().index_at_or_before(t * (1.0 + 1e-12))])
}

/// Residual of a `Y` path that carries its own increments.
pub fn residual_of(y: &SamplePath, p: &ModelParams) -> Result<Vec<f64>> {
    let dw = y.increments().ok_or(Error::GridMismatch)?;
    drift_residual_series(y, dw, p)
}

/// Both sides of `∫₀^∞ ε(y²+ε)^{−3/2}y^{k−1}dy = (1−k)∫₀^∞ (y²+ε)^{−1/2}y^{k−1}dy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityI3 {
    pub lhs: f64,
    pub rhs: f64,
    pub difference: f64,
}

/// Evaluates both sides after `z = y/√ε`, which factors out `ε^{(k−1)/2}`.
/// Each ε-free integral is split at `z = 1`; `u = z^k` on the head and
/// `w = 1/z` (left) or `v = z^{k−1}` (right) on the tail make every
/// integrand bounded.
pub fn identity_i3(k: f64, eps: f64) -> Result<IdentityI3> {
    if !(k > 0.0 && k < 1.0) || !(eps > 0.0) {
        return Err(Error::InvalidArgument("identity needs 0 < k < 1 and eps > 0"));
    }
    let q = AdaptiveQuad::new(1e-14);
    let head_l = q.integrate(|u: f64| powf(1.0 + powf(u, 2.0 / k), -1.5), 0.0, 1.0)? / k;
    let tail_l = q.integrate(|w: f64| powf(w, 2.0 - k) * powf(1.0 + w * w, -1.5), 0.0, 1.0)?;
    let head_r = q.integrate(|u: f64| 1.0 / sqrt(1.0 + powf(u, 2.0 / k)), 0.0, 1.0)? * (1.0 - k) / k;
    let tail_r = q.integrate(|v: f64| 1.0 / sqrt(1.0 + powf(v, 2.0 / (1.0 - k))), 0.0, 1.0)?;
    let scale = powf(eps, 0.5 * (k - 1.0));
    let lhs = scale * (head_l + tail_l);
    let rhs = scale * (head_r + tail_r);
    Ok(IdentityI3 {
        lhs,
        rhs,
        difference: lhs - rhs,
    })
}

/// One maximal stretch `[t₁, t₂]` of grid nodes with `X ≥ floor`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Excursion {
    pub start: usize,
    pub end: usize,
    pub t1: f64,
    pub t2: f64,
    /// `R(t₂) − R(t₁)`.
    pub lhs: f64,
    /// `−(δ/2)∫_{t₁}^{t₂} X^{−1/2}` with `δ = σ²/4 − a`, by the trapezoid rule.
    pub rhs: f64,
}

/// Maximal sub-intervals with `min X ≥ floor` and the two sides of the
/// decrement identity on each. An empty list means no excursion was found.
pub fn excursion_decrement_check(x: &SamplePath, p: &ModelParams, floor: f64) -> Result<Vec<Excursion>> {
    if !(floor > 0.0) {
        return Err(Error::InvalidArgument("floor must be positive"));
    }
    let y = crate::path::sqrt_path(x)?;
    let r = residual_of(&y, p)?;
    let g = x.grid();
    let dt = g.uniform_step()?;
    let d = 0.25 * p.sigma() * p.sigma() - p.a();
    let xs = x.values();
    let ys = y.values();
    let mut out = Vec::new();
    let mut i = 0;
    while i < xs.len() {
        if xs[i] < floor {
            i += 1;
            continue;
        }
        let mut j = i;
        let mut integral = 0.0;
        while j + 1 < xs.len() && xs[j + 1] >= floor {
            integral += 0.5 * (1.0 / ys[j] + 1.0 / ys[j + 1]) * dt;
            j += 1;
        }
        if j > i {
            out.push(Excursion {
                start: i,
                end: j,
                t1: g.time(i),
                t2: g.time(j),
                lhs: r[j] - r[i],
                rhs: -0.5 * d * integral,
            });
        }
        i = j + 1;
    }
    Ok(out)
}

/// Sign structure of the residual on a low-dimensional path: some reported
/// excursion has a negative decrement, and `R` rises again somewhere after
/// a barrier visit (so `R` is not monotone on `[0, T]`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignStructure {
    pub negative_decrement: bool,
    pub rises_after_barrier: bool,
}

pub fn sign_structure(x: &SamplePath, residual: &[f64], excursions: &[Excursion]) -> SignStructure {
    let negative_decrement = excursions.iter().any(|e| e.lhs < 0.0);
    let xs = x.values();
    let last = residual[residual.len() - 1];
    let rises_after_barrier = xs
        .iter()
        .enumerate()
        .any(|(i, &v)| v == 0.0 && i + 1 < xs.len() && last >= residual[i]);
    SignStructure {
        negative_decrement,
        rises_after_barrier,
    }
}

/// Times, `R`, `L_ε` per ε and `L̂` on an output stride of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularTermEvaluations {
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
    pub residual: Vec<f64>,
    pub eps: Vec<f64>,
    /// `regularized[e][i]` is `L_{eps[e]}` at output time `i`.
    pub regularized: Vec<Vec<f64>>,
    pub local_time: Vec<f64>,
}

impl SingularTermEvaluations {
    /// `sup_i |R − L_ε|` over the output times for ladder entry `e`.
    pub fn sup_regularized_error(&self, e: usize) -> f64 {
        self.residual
            .iter()
            .zip(&self.regularized[e])
            .map(|(r, l)| (r - l).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_local_time_error(&self) -> f64 {
        self.residual
            .iter()
            .zip(&self.local_time)
            .map(|(r, l)| (r - l).abs())
            .fold(0.0, f64::max)
    }
}

/// Which bins (after the clamping zone) enter the boundary fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum FitWindow {
    /// Bins in the lowest tenth of the occupied range `[0, max Y]`: with
    /// [`BinLayout::for_path`] this is the geometric block.
    #[default]
    RangeDecile,
    /// Bins from 1 up to the lowest tenth (at least two) of the occupied
    /// bins counted by index; empty bins inside that range stay in the fit.
    CountDecile,
}

/// Last bin index of the boundary fit.
pub fn fit_end(d: &OccupationDensity, layout: &BinLayout, window: FitWindow) -> usize {
    match window {
        FitWindow::RangeDecile => layout.geometric_end.max(2),
        FitWindow::CountDecile => {
            let occ: Vec<usize> = (1..d.density.len()).filter(|&j| d.density[j] > 0.0).collect();
            if occ.is_empty() {
                return 2;
            }
            let m = occ.len().div_ceil(10).max(2).min(occ.len());
            occ[m - 1].max(2)
        }
    }
}

/// Settings of the local-time evaluation of `L̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct LocalTimeConfig {
    pub bins: BinSpec,
    /// `L̂` integrates `ℓ ≡ 0` up to `cap_factor·max Y`.
    pub cap_factor: f64,
    pub fit_window: FitWindow,
}

impl Default for LocalTimeConfig {
    fn default() -> Self {
        Self {
            bins: BinSpec::default(),
            cap_factor: 1.5,
            fit_window: FitWindow::default(),
        }
    }
}

/// Everything needed to evaluate `L̂(t)` for one CIR path.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeEstimate {
    pub density: OccupationDensity,
    pub ell: NormalizedLocalTime,
    pub value: f64,
}

/// `L̂(t)` for a CIR path, with the path-maximum bin layout.
pub fn local_time_estimate(x: &SamplePath, p: &ModelParams, t: f64, cfg: &LocalTimeConfig) -> Result<LocalTimeEstimate> {
    let y = crate::path::sqrt_path(x)?;
    let dt = x.grid().uniform_step()?;
    let m = ScaleMap::new(*p)?;
    let layout = BinLayout::for_path(&cfg.bins, y.max_value(), dt, p.sigma())?;
    let density = occupation_density(&y, t, &layout.edges, Estimator::Histogram)?;
    let upto = x.grid().index_at_or_before(t * (1.0 + 1e-12));
    let ymax_t = y.values()[..=upto].iter().copied().fold(0.0, f64::max);
    let ell = normalize_ell(&density, &m, fit_end(&density, &layout, cfg.fit_window))?;
    let value = singular_term_local_time(&ell, p, cfg.cap_factor * ymax_t)?;
    Ok(LocalTimeEstimate { density, ell, value })
}

/// All three evaluations on every `stride`-th node (and the last node).
pub fn singular_term_evaluations(
    x: &SamplePath,
    p: &ModelParams,
    eps_ladder: &[f64],
    stride: usize,
    cfg: &LocalTimeConfig,
) -> Result<SingularTermEvaluations> {
    let g = x.grid();
    let dt = g.uniform_step()?;
    let y = crate::path::sqrt_path(x)?;
    let dw = x.increments().ok_or(Error::GridMismatch)?;
    let r = drift_residual_series(&y, dw, p)?;
    let stride = stride.max(1);
    let mut indices: Vec<usize> = (0..g.len()).step_by(stride).collect();
    if *indices.last().unwrap() != g.steps() {
        indices.push(g.steps());
    }
    let mut regularized = Vec::with_capacity(eps_ladder.len());
    for &e in eps_ladder {
        let s = singular_term_regularized_series(x, p, e)?;
        regularized.push(indices.iter().map(|&i| s[i]).collect());
    }

    // one histogram of full-step weights, advanced incrementally
    let m = ScaleMap::new(*p)?;
    let layout = BinLayout::for_path(&cfg.bins, y.max_value(), dt, p.sigma())?;
    let edges = &layout.edges;
    let widths: Vec<f64> = edges.windows(2).map(|e| e[1] - e[0]).collect();
    let ys = y.values();
    let bin_of: Vec<usize> = ys.iter().map(|&v| bin_index(edges, v)).collect::<Result<_>>()?;
    let mut full = alloc::vec![0.0; widths.len()];
    let mut next = 0usize;
    let mut run_max: f64 = 0.0;
    let mut local_time = Vec::with_capacity(indices.len());
    for &i in &indices {
        while next < i {
            full[bin_of[next]] += dt;
            run_max = run_max.max(ys[next]);
            next += 1;
        }
        run_max = run_max.max(ys[i]);
        if i == 0 || local_time.is_empty() && i == 0 {
            local_time.push(0.0);
            continue;
        }
        // trapezoid weights: node 0 and node i count half
        let mut occ = full.clone();
        occ[bin_of[0]] -= 0.5 * dt;
        occ[bin_of[i]] += 0.5 * dt;
        let density = OccupationDensity {
            t: g.time(i),
            edges: edges.clone(),
            density: occ.iter().zip(&widths).map(|(o, w)| o.max(0.0) / w).collect(),
            estimator: Estimator::Histogram,
            bandwidth: None,
        };
        let ell = normalize_ell(&density, &m, fit_end(&density, &layout, cfg.fit_window))?;
        local_time.push(singular_term_local_time(&ell, p, cfg.cap_factor * run_max)?);
    }
    Ok(SingularTermEvaluations {
        times: indices.iter().map(|&i| g.time(i)).collect(),
        residual: indices.iter().map(|&i| r[i]).collect(),
        indices,
        eps: eps_ladder.to_vec(),
        regularized,
        local_time,
    })
}

/// `ℓ` recomputed through the transformed path:
/// `ℓ(t, y) = (2/σ²)·e^{−2by²/σ²}·L^W̃(τ_t, S(y²))`, on the bins of `ell`.
pub fn ell_via_rbm(x: &SamplePath, m: &ScaleMap, ell: &NormalizedLocalTime) -> Result<Vec<f64>> {
    let (w, pair) = cir_to_rbm(x, m)?;
    let g = x.grid();
    let upto = g.index_at_or_before(ell.t * (1.0 + 1e-12));
    let w_edges: Vec<f64> = ell
        .edges
        .iter()
        .map(|&e| m.scale_s(e * e))
        .collect::<Result<_>>()?;
    let mut occ = alloc::vec![0.0; w_edges.len() - 1];
    let tau = &pair.tau;
    for i in 0..=upto {
        let left = if i > 0 { tau[i] - tau[i - 1] } else { 0.0 };
        let right = if i < upto { tau[i + 1] - tau[i] } else { 0.0 };
        occ[bin_index(&w_edges, w.values[i])?] += 0.5 * (left + right);
    }
    let s2 = m.params().sigma() * m.params().sigma();
    let beta = m.beta();
    Ok(occ
        .iter()
        .enumerate()
        .map(|(j, o)| {
            let y = ell.mids[j];
            2.0 / s2 * exp(-beta * y * y) * o / (w_edges[j + 1] - w_edges[j])
        })
        .collect())
}

/// `∫|ℓ − ℓ'|·y^{k−1}dy / t` over the bins of `ell` (bin 0 excluded): the
/// relative discrepancy of two normalized local times in occupation units.
pub fn ell_discrepancy(ell: &NormalizedLocalTime, other: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 1..ell.values.len() {
        let wdt = ell.edges[j + 1] - ell.edges[j];
        s += (ell.values[j] - other[j]).abs() * powf(ell.mids[j], ell.k - 1.0) * wdt;
    }
    s / ell.t
}

/// Convenience: uniform grid check shared by the estimators.
pub fn require_uniform(g: &TimeGrid) -> Result<f64> {
    g.uniform_step()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::simulate_cir;
    use alloc::vec;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::uniform(1.0, n).unwrap()
    }

    #[test]
    fn unit_speed_crossing() {
        let n = 1 << 12;
        let g = grid(n);
        let y = SamplePath::new(g.clone(), g.times(), None, 0).unwrap();
        let edges: Vec<f64> = (0..=10).map(|j| j as f64 * 0.1 * (1.0 + 1e-12)).collect();
        let d = occupation_density(&y, 1.0, &edges, Estimator::Histogram).unwrap();
        let dt = 1.0 / n as f64;
        for (j, &v) in d.density.iter().enumerate() {
            let tol = 2.0 * dt / 0.1;
            assert!((v - 1.0).abs() <= tol, "bin {j}: {v}");
        }
        assert!((d.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_path_is_a_dirac() {
        let g = grid(64);
        let y = SamplePath::new(g, vec![0.37; 65], None, 0).unwrap();
        let edges = [0.0, 0.2, 0.4, 0.6];
        let d = occupation_density(&y, 1.0, &edges, Estimator::Histogram).unwrap();
        assert_eq!(d.density, vec![0.0, 1.0 / 0.2, 0.0]);
    }

    #[test]
    fn coverage_errors() {
        let g = grid(4);
        let y = SamplePath::new(g, vec![0.1, 0.2, 0.9, 0.3, 0.1], None, 0).unwrap();
        assert_eq!(
            occupation_density(&y, 1.0, &[0.0, 0.5], Estimator::Histogram).unwrap_err(),
            Error::BinCoverage
        );
        // the excursion to 0.9 happens after t = 0.25
        assert!(occupation_density(&y, 0.25, &[0.0, 0.5], Estimator::Histogram).is_ok());
    }

    #[test]
    fn kernel_conserves_mass() {
        let p = ModelParams::new(0.5, 0.5, 2.0, 1.0).unwrap();
        let x = simulate_cir(&p, &grid(1 << 12), 1).unwrap();
        let y = crate::path::sqrt_path(&x).unwrap();
        let h = (y.max_value() - y.min_value()) * (4096f64).powf(-0.2);
        let top = y.max_value() + h;
        let edges: Vec<f64> = (0..=80).map(|j| j as f64 * top / 80.0).collect();
        let d = occupation_density(&y, 1.0, &edges, Estimator::Kernel { bandwidth: None }).unwrap();
        assert!((d.bandwidth.unwrap() - h).abs() < 1e-15);
        assert!((d.mass() - 1.0).abs() < 1e-3);
        assert!(d.density.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn normalization_examples() {
        let edges = vec![0.0, 1.0, 3.0, 5.0, 7.0];
        let d = OccupationDensity {
            t: 1.0,
            edges,
            density: vec![0.3, 0.2, 0.1, 0.05],
            estimator: Estimator::Histogram,
            bandwidth: None,
        };
        let m1 = ScaleMap::new(ModelParams::new(1.0, 0.0, 2.0, 1.0).unwrap()).unwrap();
        let e1 = normalize_ell(&d, &m1, 3).unwrap();
        assert_eq!(e1.values, d.density);
        let mh = ScaleMap::new(ModelParams::new(0.5, 0.0, 2.0, 1.0).unwrap()).unwrap();
        let eh = normalize_ell(&d, &mh, 3).unwrap();
        // midpoint 4, L^Y = 0.1: ℓ = 4^{1/2}·0.1
        assert!((eh.values[2] - 0.2).abs() < 1e-15);
        assert!(eh.ell0 >= 0.0);
    }

    #[test]
    fn synthetic_profile_integral() {
        // ℓ − ℓ0 = y on [0,1] and 1 above; k = 1/2 gives 1/k + 1/(1−k) = 4
        let k = 0.5;
        let pts: Vec<(f64, f64)> = (1..=100).map(|j| (j as f64 / 100.0, j as f64 / 100.0)).collect();
        let v = integrate_profile(k, 1.0, 1.0, &pts, 1.0, f64::INFINITY).unwrap();
        assert!((v - 4.0).abs() < 1e-12, "{v}");
        let p = ModelParams::new(0.5, 0.0, 2.0, 1.0).unwrap();
        let pref = 0.25 * p.sigma() * p.sigma() - p.a();
        assert!((-0.5 * pref * v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_profile_gives_zero() {
        let k = 0.5;
        let ell = NormalizedLocalTime {
            t: 1.0,
            k,
            edges: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            mids: vec![0.25, 0.75, 1.25, 1.75],
            values: vec![0.7; 4],
            ell0: 0.7,
            fit: BoundaryFit {
                first: 1,
                last: 2,
                slope: 0.0,
                residual: 0.0,
                clamped: false,
                amplitude: 0.0,
                exponent: 0.75,
                kappa: 0.0,
            },
        };
        let p = ModelParams::new(0.5, 0.0, 2.0, 1.0).unwrap();
        // cap at the last midpoint: no tail
        assert_eq!(singular_term_local_time(&ell, &p, 1.75).unwrap(), 0.0);
        let p1 = ModelParams::new(1.0, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(singular_term_local_time(&ell, &p1, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn regularized_closed_forms() {
        let g = grid(16);
        let p = ModelParams::new(0.5, 0.0, 2.0, 1.0).unwrap();
        let one = SamplePath::new(g.clone(), vec![1.0; 17], None, 0).unwrap();
        let v = singular_term_regularized(&one, &p, 1e-12, 1.0).unwrap();
        assert!((v + 0.25).abs() < 1e-9);
        let zero = SamplePath::new(g, vec![0.0; 17], None, 0).unwrap();
        let eps = 1e-4;
        let v = singular_term_regularized(&zero, &p, eps, 1.0).unwrap();
        assert!((v - 0.5 / (2.0 * eps.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn residual_of_deterministic_paths() {
        let n = 1 << 10;
        let g = grid(n);
        let b = 0.8;
        let p = ModelParams::new(0.5, b, 2.0, 2.0).unwrap();
        let ys: Vec<f64> = g.times().iter().map(|t| 2f64.sqrt() * (-b * t / 2.0).exp()).collect();
        let y = SamplePath::new(g.clone(), ys, None, 0).unwrap();
        let r = drift_residual_series(&y, &vec![0.0; n], &p).unwrap();
        let dt = 1.0 / n as f64;
        assert!(r.iter().all(|v| v.abs() < dt * dt));
        let p0 = ModelParams::new(0.5, b, 2.0, 0.0).unwrap();
        let z = SamplePath::new(g, vec![0.0; n + 1], None, 0).unwrap();
        assert!(drift_residual_series(&z, &vec![0.0; n], &p0).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(drift_residual_series(&z, &vec![0.0; n - 1], &p0).unwrap_err(), Error::GridMismatch);
    }

    #[test]
    fn excursion_examples() {
        let g = grid(64);
        let p = ModelParams::new(0.5, 0.0, 2.0, 1.0).unwrap();
        let x = SamplePath::new(g.clone(), vec![1.0; 65], Some(vec![0.0; 64]), 0).unwrap();
        let ex = excursion_decrement_check(&x, &p, 0.1).unwrap();
        assert_eq!(ex.len(), 1);
        assert!((ex[0].rhs + 0.25).abs() < 1e-14);
        let low = SamplePath::new(g, vec![0.01; 65], Some(vec![0.0; 64]), 0).unwrap();
        assert!(excursion_decrement_check(&low, &p, 0.1).unwrap().is_empty());
    }

    #[test]
    fn zero_defect_excursions_have_no_decrement() {
        let p = ModelParams::new(1.0, 0.5, 2.0, 1.0).unwrap();
        let x = simulate_cir(&p, &grid(1 << 14), 2).unwrap();
        let ex = excursion_decrement_check(&x, &p, 0.1).unwrap();
        assert!(!ex.is_empty());
        let dt = 1.0 / (1 << 14) as f64;
        for e in ex {
            assert_eq!(e.rhs, 0.0);
            assert!(e.lhs.abs() < 2.0 * dt.sqrt(), "{}", e.lhs);
        }
    }

    #[test]
    fn identity_matches_beta_function() {
        // ½·B(k/2, (3−k)/2) at 22 digits
        let table = [
            (0.1, 9.728830243987718956279),
            (0.3, 3.127418600299388793175),
            (0.5, 1.854074677301371918434),
            (0.7, 1.340322257271166625647),
            (0.9, 1.080981138220857661809),
            (0.99, 1.007038677611009349261),
        ];
        for (k, oracle) in table {
            let r = identity_i3(k, 1.0).unwrap();
            assert!(((r.lhs - oracle) / oracle).abs() < 1e-12, "k={k} lhs={}", r.lhs);
            assert!(((r.rhs - oracle) / oracle).abs() < 1e-12, "k={k} rhs={}", r.rhs);
            assert!(r.difference.abs() <= 1e-8 * r.lhs.abs());
        }
    }

    #[test]
    fn identity_scaling() {
        for &k in &[0.2, 0.5, 0.8] {
            let base = identity_i3(k, 1.0).unwrap();
            for &eps in &[1e-2, 1e-4] {
                let r = identity_i3(k, eps).unwrap();
                let f = eps.powf((k - 1.0) / 2.0);
                assert!((r.lhs / (f * base.lhs) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn bin_layout_shape() {
        let spec = BinSpec::default();
        let l = BinLayout::for_path(&spec, 2.0, 1.0 / 65536.0, 2.0).unwrap();
        assert_eq!(l.bins(), 1 + 20 + 40);
        assert_eq!(l.geometric_end, 20);
        assert!((l.edges[1] - 0.5 * 2.0 / 256.0).abs() < 1e-15);
        assert!((l.edges[21] - 0.2).abs() < 1e-15);
        assert!(l.edges.windows(2).all(|e| e[1] > e[0]));
        let r = spec.refined();
        assert_eq!(r.geometric, 24);
    }

    #[test]
    fn evaluations_start_at_zero_and_conserve_mass() {
        let p = ModelParams::new(0.5, 0.5, 2.0, 1.0).unwrap();
        let x = simulate_cir(&p, &grid(1 << 12), 1).unwrap();
        let ev = singular_term_evaluations(&x, &p, &[1e-3, 1e-4], 256, &LocalTimeConfig::default()).unwrap();
        assert_eq!(ev.times[0], 0.0);
        assert_eq!(ev.residual[0], 0.0);
        assert_eq!(ev.local_time[0], 0.0);
        assert!(ev.regularized.iter().all(|s| s[0] == 0.0));
        assert_eq!(*ev.indices.last().unwrap(), 1 << 12);
        let est = local_time_estimate(&x, &p, 1.0, &LocalTimeConfig::default()).unwrap();
        assert!((est.density.mass() - 1.0).abs() <= 1e-3);
        let last = *ev.local_time.last().unwrap();
        assert!((last - est.value).abs() < 1e-9, "{last} vs {}", est.value);
    }

    #[test]
    fn cross_estimator_agreement() {
        let p = ModelParams::new(0.5, 0.5, 2.0, 1.0).unwrap();
        let m = ScaleMap::new(p).unwrap();
        let x = simulate_cir(&p, &grid(1 << 14), 3).unwrap();
        let est = local_time_estimate(&x, &p, 1.0, &LocalTimeConfig::default()).unwrap();
        let other = ell_via_rbm(&x, &m, &est.ell).unwrap();
        let rel = ell_discrepancy(&est.ell, &other);
        assert!(rel < 0.1, "{rel}");
    }
}
