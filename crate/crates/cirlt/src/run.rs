//! Dispatch from experiment tags to core operations. Replications run on the
//! rayon pool; results are collected in replication order, so outputs do not
//! depend on the number of workers.

use std::path::{Path, PathBuf};

use cirlt_core::convergence::{left_replication, left_study, right_replication, right_table, StudySetup};
use cirlt_core::local_time::{
    excursion_decrement_check, local_time_estimate, residual_of, sign_structure, singular_term_evaluations,
    LocalTimeConfig,
};
use cirlt_core::path::{cumulative_trapezoid, sqrt_path, SamplePath};
use cirlt_core::scale::{cir_to_rbm, rbm_to_cir, ScaleMap};
use cirlt_core::sde::{simulate_cir_replication, simulate_cir_with_increments, simulate_rou, SchemeChoice};
use cirlt_core::ModelParams;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Tag};
use crate::error::HarnessError;
use crate::io;
use crate::ks::ks_test_exact_transition;
use crate::manifest::{unix_now, OutputSink, RunManifest};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "CIRLT_OUTPUT_ROOT";

/// `output_dir` joined to `$CIRLT_OUTPUT_ROOT` when that is set and the
/// directory is relative.
pub fn resolve_output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if cfg.output_dir.is_relative() => Path::new(&root).join(&cfg.output_dir),
        _ => cfg.output_dir.clone(),
    }
}

/// Runs the experiment named by `cfg.tag`, writing into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, log: &mut dyn FnMut(&str)) -> Result<RunManifest, HarnessError> {
    cfg.validate()?;
    let start = unix_now();
    let mut sink = OutputSink::create(out_dir)?;
    let summary = match cfg.tag {
        Tag::Simulate => simulate(cfg, &mut sink)?,
        Tag::VerifyMain => verify_main(cfg, &mut sink)?,
        Tag::RegimeCheck => regime_check(cfg, &mut sink)?,
        Tag::TransformRoundtrip => transform_roundtrip(cfg, &mut sink)?,
        Tag::ConvergeRight => converge_right(cfg, &mut sink, log)?,
        Tag::ConvergeLeft => converge_left(cfg, &mut sink, log)?,
        Tag::DistTest => dist_test(cfg, &mut sink, log)?,
    };
    sink.finish(cfg, start, summary)
}

/// Path of replication `r`; replication 0 takes forced increments when an
/// increments file is configured.
fn cir_path(cfg: &ExperimentConfig, r: usize) -> Result<SamplePath, HarnessError> {
    let g = cfg.grid.time_grid()?;
    if r == 0 {
        if let Some(f) = &cfg.increments_file {
            if cfg.scheme != SchemeChoice::FullTruncationEuler {
                return Err(HarnessError::Config("forced increments need the Euler scheme".into()));
            }
            let dw = io::read_increments(f)?;
            if dw.len() != g.steps() {
                return Err(HarnessError::Config(format!(
                    "{}: {} increments for {} steps",
                    f.display(),
                    dw.len(),
                    g.steps()
                )));
            }
            return Ok(simulate_cir_with_increments(&cfg.params, &g, dw, cfg.seed)?);
        }
    }
    Ok(simulate_cir_replication(
        &cfg.params,
        &g,
        cfg.seed,
        cfg.first_stream + r as u64,
        cfg.scheme,
    )?)
}

fn simulate(cfg: &ExperimentConfig, sink: &mut OutputSink) -> Result<Value, HarnessError> {
    let paths = (0..cfg.replications)
        .into_par_iter()
        .map(|r| cir_path(cfg, r).and_then(|p| Ok((io::path_csv(&p)?, p.diagnostics()))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut clamps = Vec::new();
    for (r, (bytes, diag)) in paths.iter().enumerate() {
        let name = if cfg.replications == 1 {
            "path.csv".to_string()
        } else {
            format!("path_{r:04}.csv")
        };
        sink.write(&name, bytes)?;
        clamps.push(diag.map(|d| d.clamp_count).unwrap_or(0));
    }
    Ok(json!({ "paths": cfg.replications, "clamp_counts": clamps }))
}

fn local_cfg(cfg: &ExperimentConfig) -> LocalTimeConfig {
    LocalTimeConfig {
        bins: cfg.bins,
        cap_factor: cfg.cap_factor,
        fit_window: cfg.fit_window,
    }
}

fn verify_main(cfg: &ExperimentConfig, sink: &mut OutputSink) -> Result<Value, HarnessError> {
    let x = cir_path(cfg, 0)?;
    if x.increments().is_none() {
        return Err(HarnessError::Config("verify-main needs the Euler scheme (increments)".into()));
    }
    let lc = local_cfg(cfg);
    let ev = singular_term_evaluations(&x, &cfg.params, &cfg.eps_ladder, cfg.output_stride, &lc)?;
    let est = local_time_estimate(&x, &cfg.params, cfg.grid.horizon, &lc)?;
    sink.write("singular_terms.csv", &io::singular_terms_csv(&ev)?)?;
    sink.write("occupation.csv", &io::occupation_csv(&est.density)?)?;
    let last = ev.times.len() - 1;
    let sup_eps: Vec<Value> = ev
        .eps
        .iter()
        .enumerate()
        .map(|(e, &eps)| json!({ "eps": eps, "sup_abs_R_minus_L_eps": ev.sup_regularized_error(e) }))
        .collect();
    Ok(json!({
        "regularized": sup_eps,
        "R_T": ev.residual[last],
        "L_hat_T": ev.local_time[last],
        "abs_R_minus_L_hat_T": (ev.residual[last] - ev.local_time[last]).abs(),
        "occupation_mass": est.density.mass(),
        "ell0": est.ell.ell0,
        "fit": {
            "slope": est.ell.fit.slope,
            "residual": est.ell.fit.residual,
            "clamped": est.ell.fit.clamped,
            "kappa": est.ell.fit.kappa,
        },
    }))
}

fn series_rows(stride: usize, t: &[f64], cols: &[&[f64]]) -> Vec<Vec<String>> {
    let n = t.len();
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if *idx.last().unwrap() != n - 1 {
        idx.push(n - 1);
    }
    idx.into_iter()
        .map(|i| {
            let mut row = vec![io::fmt_f64(t[i])];
            row.extend(cols.iter().map(|c| io::fmt_f64(c[i])));
            row
        })
        .collect()
}

fn sup_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `(δ/2)∫₀ᵗ 1/Y` by the trapezoid rule; infinite once `Y` touches 0.
pub fn high_dimension_comparator(y: &SamplePath, p: &ModelParams) -> Result<Vec<f64>, HarnessError> {
    let dt = y.grid().uniform_step()?;
    let f: Vec<f64> = y.values().iter().map(|&v| 0.5 * p.delta() / v).collect();
    Ok(cumulative_trapezoid(&f, dt))
}

fn regime_check(cfg: &ExperimentConfig, sink: &mut OutputSink) -> Result<Value, HarnessError> {
    let p = cfg.params;
    let x = cir_path(cfg, 0)?;
    let y = sqrt_path(&x)?;
    let r = residual_of_path(&x, &p)?;
    let t = x.grid().times();
    let header = ["t", "R", "comparator"];
    if p.delta() > 0.0 {
        let c = high_dimension_comparator(&y, &p)?;
        sink.write("regime_series.csv", &io::table_csv(&header, &series_rows(cfg.output_stride, &t, &[&r, &c]))?)?;
        Ok(json!({
            "regime": "a > sigma^2/4",
            "sup_abs_R_minus_comparator": sup_abs(&r, &c),
            "min_X": x.min_value(),
        }))
    } else if p.delta() == 0.0 {
        let dw = x.increments().ok_or_else(|| HarnessError::Config("regime-check needs increments".into()))?;
        let rou = simulate_rou(&p, x.grid(), dw.to_vec(), cfg.seed)?;
        let r_rou = residual_of(&rou.reflected, &p)?;
        sink.write(
            "regime_series.csv",
            &io::table_csv(&header, &series_rows(cfg.output_stride, &t, &[&r, &rou.regulator]))?,
        )?;
        let (mono, barrier_only) = regulator_checks(rou.reflected.values(), &rou.regulator);
        Ok(json!({
            "regime": "a = sigma^2/4",
            "sup_abs_R_minus_L0": sup_abs(&r, &rou.regulator),
            "sup_abs_R_rou_minus_L0": sup_abs(&r_rou, &rou.regulator),
            "dt_sqrt_times_2": 2.0 * x.grid().uniform_step()?.sqrt(),
            "L0_nondecreasing": mono,
            "L0_grows_only_at_zero": barrier_only,
        }))
    } else {
        let ex = excursion_decrement_check(&x, &p, cfg.excursion_floor)?;
        sink.write("excursions.csv", &io::excursions_csv(&ex)?)?;
        let pref = 0.25 * p.sigma() * p.sigma() - p.a();
        let c: Vec<f64> = {
            let dt = x.grid().uniform_step()?;
            let f: Vec<f64> = x.values().iter().map(|&v| if v > 0.0 { -0.5 * pref / v.sqrt() } else { 0.0 }).collect();
            cumulative_trapezoid(&f, dt)
        };
        sink.write("regime_series.csv", &io::table_csv(&header, &series_rows(cfg.output_stride, &t, &[&r, &c]))?)?;
        let s = sign_structure(&x, &r, &ex);
        let worst = ex.iter().map(|e| (e.lhs - e.rhs).abs()).fold(0.0, f64::max);
        Ok(json!({
            "regime": "a < sigma^2/4",
            "excursions": ex.len(),
            "max_abs_decrement_mismatch": worst,
            "negative_decrement": s.negative_decrement,
            "rises_after_barrier": s.rises_after_barrier,
        }))
    }
}

fn residual_of_path(x: &SamplePath, p: &ModelParams) -> Result<Vec<f64>, HarnessError> {
    let y = sqrt_path(x)?;
    if y.increments().is_none() {
        return Err(HarnessError::Config("this experiment needs the Euler scheme (increments)".into()));
    }
    Ok(residual_of(&y, p)?)
}

/// `(nondecreasing, grows only where the reflected path is 0)`.
pub fn regulator_checks(reflected: &[f64], regulator: &[f64]) -> (bool, bool) {
    let mut mono = true;
    let mut barrier = true;
    for i in 1..regulator.len() {
        let d = regulator[i] - regulator[i - 1];
        if d < 0.0 {
            mono = false;
        }
        if d > 0.0 && reflected[i] != 0.0 {
            barrier = false;
        }
    }
    (mono, barrier)
}

fn transform_roundtrip(cfg: &ExperimentConfig, sink: &mut OutputSink) -> Result<Value, HarnessError> {
    let x = cir_path(cfg, 0)?;
    let m = ScaleMap::new(cfg.params)?;
    let (w, pair) = cir_to_rbm(&x, &m)?;
    let (back, back_pair) = rbm_to_cir(&w, &m)?;
    sink.write("rbm.csv", &io::transformed_csv(&w)?)?;
    sink.write("roundtrip.csv", &io::transformed_csv(&back)?)?;
    let xs = x.values();
    let err_x = xs
        .iter()
        .zip(&back.values)
        .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
        .fold(0.0, f64::max);
    let t = x.grid().times();
    let err_t = t.iter().zip(&back_pair.phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(json!({
        "max_rel_value_error": err_x,
        "max_clock_error": err_t,
        "tau_T": pair.tau[pair.tau.len() - 1],
    }))
}

fn converge_right(cfg: &ExperimentConfig, sink: &mut OutputSink, log: &mut dyn FnMut(&str)) -> Result<Value, HarnessError> {
    let p = cfg.params;
    let s = StudySetup::right(p.sigma(), p.b(), p.x0(), &cfg.delta_ladder, cfg.grid.time_grid()?, cfg.seed)?;
    let errors = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| right_replication(&s, cfg.first_stream + r))
        .collect::<Result<Vec<_>, _>>()?;
    let table = right_table(&s, &errors, cfg.first_stream)?;
    for l in &table.levels {
        log(&format!("n={} delta={} median={:.6e} p90={:.6e}", l.n, l.delta, l.median, l.p90));
    }
    sink.write("convergence.csv", &io::convergence_csv(&table)?)?;
    Ok(json!({
        "median_strictly_decreasing": table.median_strictly_decreasing(),
        "last_below_first_fraction": table.last_below_first_fraction(),
        "fully_decreasing_fraction": table.fully_decreasing_fraction(),
        "metadata": table.metadata,
    }))
}

fn converge_left(cfg: &ExperimentConfig, sink: &mut OutputSink, log: &mut dyn FnMut(&str)) -> Result<Value, HarnessError> {
    let p = cfg.params;
    let s = StudySetup::left(p.sigma(), p.b(), p.x0(), &cfg.delta_ladder, cfg.grid.time_grid()?, cfg.seed)?;
    let reps = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| left_replication(&s, cfg.first_stream + r, cfg.left_reference))
        .collect::<Result<Vec<_>, _>>()?;
    let study = left_study(&s, &reps, cfg.first_stream, cfg.left_reference)?;
    for (ly, ll) in study.y_table.levels.iter().zip(&study.l_table.levels) {
        log(&format!(
            "n={} delta={} median_Y={:.6e} median_L={:.6e}",
            ly.n, ly.delta, ly.median, ll.median
        ));
    }
    sink.write("convergence_y.csv", &io::convergence_csv(&study.y_table)?)?;
    sink.write("convergence_l.csv", &io::convergence_csv(&study.l_table)?)?;
    Ok(json!({
        "reference": study.reference,
        "y_median_strictly_decreasing": study.y_table.median_strictly_decreasing(),
        "l_median_strictly_decreasing": study.l_table.median_strictly_decreasing(),
        "y_last_below_first_fraction": study.y_table.last_below_first_fraction(),
        "y_violation_fraction": study.y_violation_fraction,
        "l_violation_fraction": study.l_violation_fraction,
        "y_violation_fraction_vs_zero_defect": study.y_violation_fraction_reference,
        "ordering_slack": cirlt_core::convergence::ORDERING_SLACK,
        "metadata": study.y_table.metadata,
    }))
}

fn dist_test(cfg: &ExperimentConfig, sink: &mut OutputSink, log: &mut dyn FnMut(&str)) -> Result<Value, HarnessError> {
    let p = cfg.params;
    let outcomes = cfg
        .ks
        .dts
        .par_iter()
        .map(|&dt| ks_test_exact_transition(&p, cfg.ks.x, dt, cfg.ks.samples, cfg.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (&dt, o) in cfg.ks.dts.iter().zip(&outcomes) {
        log(&format!("dt={dt} D={:.5} threshold={:.5} pass={}", o.statistic, o.threshold, o.pass));
        rows.push(vec![
            io::fmt_f64(p.k()),
            io::fmt_f64(p.b()),
            io::fmt_f64(dt),
            io::fmt_f64(cfg.ks.x),
            o.n.to_string(),
            io::fmt_f64(o.statistic),
            io::fmt_f64(o.threshold),
            o.pass.to_string(),
        ]);
    }
    sink.write(
        "ks.csv",
        &io::table_csv(&["k", "b", "dt", "x", "n", "statistic", "threshold", "pass"], &rows)?,
    )?;
    Ok(json!({ "all_pass": outcomes.iter().all(|o| o.pass), "outcomes": outcomes }))
}
