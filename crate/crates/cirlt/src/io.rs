//! CSV outputs (comma, `.` decimal, LF, header always written) and the
//! increments reader.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a CSV
//! back reproduces every value bit for bit.

use std::io::Write;
use std::path::Path;

use cirlt_core::convergence::ConvergenceTable;
use cirlt_core::local_time::{Excursion, OccupationDensity, SingularTermEvaluations};
use cirlt_core::path::SamplePath;
use cirlt_core::scale::TransformedPath;

use crate::error::HarnessError;

pub const PATH_HEADER: [&str; 3] = ["t", "value", "dW"];
pub const TRANSFORMED_HEADER: [&str; 2] = ["tau_or_phi", "value"];
pub const OCCUPATION_HEADER: [&str; 2] = ["y_mid", "density"];
pub const CONVERGENCE_HEADER: [&str; 5] = ["n", "delta", "median_sup_err", "p90_sup_err", "monotone_ok_fraction"];
pub const EXCURSION_HEADER: [&str; 4] = ["t1", "t2", "lhs", "rhs"];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn to_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, HarnessError> {
    let mut w = writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))
}

fn owned(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

/// `t, value, dW` with `dW` empty on the first row (and everywhere when the
/// path carries no increments).
pub fn path_csv(p: &SamplePath) -> Result<Vec<u8>, HarnessError> {
    let g = p.grid();
    let inc = p.increments();
    to_bytes(
        &owned(&PATH_HEADER),
        p.values().iter().enumerate().map(|(i, &v)| {
            let dw = match (i, inc) {
                (0, _) | (_, None) => String::new(),
                (_, Some(d)) => fmt_f64(d[i - 1]),
            };
            vec![fmt_f64(g.time(i)), fmt_f64(v), dw]
        }),
    )
}

pub fn transformed_csv(p: &TransformedPath) -> Result<Vec<u8>, HarnessError> {
    to_bytes(
        &owned(&TRANSFORMED_HEADER),
        p.times.iter().zip(&p.values).map(|(t, v)| vec![fmt_f64(*t), fmt_f64(*v)]),
    )
}

pub fn occupation_csv(d: &OccupationDensity) -> Result<Vec<u8>, HarnessError> {
    to_bytes(
        &owned(&OCCUPATION_HEADER),
        d.mids().into_iter().zip(&d.density).map(|(y, v)| vec![fmt_f64(y), fmt_f64(*v)]),
    )
}

pub fn eps_column(eps: f64) -> String {
    format!("L_eps_{}", fmt_f64(eps))
}

/// `t, R, L_eps_<ε>..., L_hat`.
pub fn singular_terms_csv(ev: &SingularTermEvaluations) -> Result<Vec<u8>, HarnessError> {
    let mut header = vec!["t".to_string(), "R".to_string()];
    header.extend(ev.eps.iter().map(|&e| eps_column(e)));
    header.push("L_hat".into());
    to_bytes(
        &header,
        (0..ev.times.len()).map(|i| {
            let mut row = vec![fmt_f64(ev.times[i]), fmt_f64(ev.residual[i])];
            row.extend(ev.regularized.iter().map(|s| fmt_f64(s[i])));
            row.push(fmt_f64(ev.local_time[i]));
            row
        }),
    )
}

pub fn convergence_csv(t: &ConvergenceTable) -> Result<Vec<u8>, HarnessError> {
    to_bytes(
        &owned(&CONVERGENCE_HEADER),
        t.levels.iter().map(|l| {
            vec![
                l.n.to_string(),
                fmt_f64(l.delta),
                fmt_f64(l.median),
                fmt_f64(l.p90),
                fmt_f64(l.monotone_ok_fraction),
            ]
        }),
    )
}

pub fn excursions_csv(ex: &[Excursion]) -> Result<Vec<u8>, HarnessError> {
    to_bytes(
        &owned(&EXCURSION_HEADER),
        ex.iter().map(|e| vec![fmt_f64(e.t1), fmt_f64(e.t2), fmt_f64(e.lhs), fmt_f64(e.rhs)]),
    )
}

/// Generic table with a caller-chosen header.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, HarnessError> {
    to_bytes(&owned(header), rows.iter().cloned())
}

/// Reads the `dW` column of a CSV. Empty cells are skipped, so a path CSV
/// written by [`path_csv`] can be fed back directly.
pub fn read_increments(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "dW")
        .ok_or_else(|| HarnessError::Config(format!("{}: no dW column", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let cell = rec.get(col).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        out.push(
            cell.parse::<f64>()
                .map_err(|e| HarnessError::Config(format!("{}: bad dW value `{cell}`: {e}", path.display())))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cirlt_core::path::TimeGrid;

    #[test]
    fn path_schema_and_roundtrip() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let dw = vec![0.1, -0.2, 1e-9, 0.3];
        let p = SamplePath::new(g, vec![1.0, 1.1, 0.9, 0.9, 1.2], Some(dw.clone()), 1).unwrap();
        let bytes = path_csv(&p).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("t,value,dW\n0.0,1.0,\n"));
        assert!(!text.contains('\r'));
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("p.csv");
        std::fs::write(&f, bytes).unwrap();
        assert_eq!(read_increments(&f).unwrap(), dw);
    }

    #[test]
    fn float_format_roundtrips() {
        for v in [0.1, 1e-300, 123456789.125, -2.5e-7, 1.0 / 3.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
            assert!(!fmt_f64(v).contains(','));
        }
        assert_eq!(eps_column(1e-5), "L_eps_1e-5");
    }
}
