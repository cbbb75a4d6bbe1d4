//! Mesh-refinement study on the first truncation radius.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use finsler_core::geometry::mesh_region;
use finsler_core::identities::pohozaev_check;
use finsler_core::solver::{h1_error, neumann_residual, nodal_error, solve_truncated, SolveOptions, TruncatedProblem};

use crate::config::Scenario;
use crate::RunError;

/// Errors below this are treated as exact; their orders are NaN without a
/// warning.
const EXACT: f64 = 1e-12;

pub const METRICS: [&str; 4] = ["h1_error", "nodal_error", "pohozaev_residual", "neumann_residual"];

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub h: f64,
    /// In the order of [`METRICS`]; NaN when no exact solution is known.
    pub errors: [f64; 4],
    /// Observed `log₂` orders against the previous row (NaN on the first).
    pub orders: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct Study {
    pub rows: Vec<StudyRow>,
    pub warnings: Vec<String>,
    pub csv_path: PathBuf,
}

fn order(coarse: f64, fine: f64, ratio: f64) -> Option<f64> {
    if !(coarse.is_finite() && fine.is_finite()) || coarse.abs() < EXACT {
        return Some(f64::NAN);
    }
    if fine.abs() >= coarse.abs() {
        return None;
    }
    Some((coarse.abs() / fine.abs()).ln() / ratio.ln())
}

/// Solves at every `h` (coarse to fine) and writes `study.csv` under
/// `out/<name>/`.
pub fn convergence_study(s: &Scenario, hs: &[f64], out: &Path) -> Result<Study, RunError> {
    let b = s.build()?;
    let cfg = |m: String| RunError::Config(format!("scenario `{}`: {m}", s.name));
    if hs.len() < 3 {
        return Err(cfg(format!("a study needs at least three mesh sizes, got {}", hs.len())));
    }
    if hs.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(cfg(format!("mesh sizes must be positive, got {hs:?}")));
    }
    for w in hs.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(cfg(format!("mesh sizes must halve successively, got {hs:?}")));
        }
    }
    let radius = b.radii[0];
    let region = b.region(radius).map_err(|e| RunError::Geometry(format!("truncation radius {radius}: {e}")))?;
    let exact = b.exact_solution(s, radius);
    let mut rows: Vec<StudyRow> = Vec::new();
    let mut warnings = Vec::new();
    for &h in hs {
        let mesh = Arc::new(mesh_region(&region, h).map_err(|e| RunError::Geometry(format!("truncation radius {radius}: {e}")))?);
        let problem = TruncatedProblem::new(&region, mesh, s.exponent)
            .map_err(|e| RunError::Check(e.to_string()))?
            .with_data(s.data_for(radius));
        let rep = solve_truncated(&problem, &SolveOptions::default()).map_err(|e| RunError::Check(format!("h = {h}: {e}")))?;
        let (h1, nodal) = match &exact {
            Some(f) => (h1_error(&rep.field, |x| f(x).1), nodal_error(&rep.field, |x| f(x).0)),
            None => (f64::NAN, f64::NAN),
        };
        let pz = pohozaev_check(&rep.field, b.trace_mode).residual.abs();
        let errors = [h1, nodal, pz, neumann_residual(&rep.field)];
        let mut orders = [f64::NAN; 4];
        if let Some(prev) = rows.last() {
            for k in 0..4 {
                orders[k] = order(prev.errors[k], errors[k], prev.h / h).unwrap_or_else(|| {
                    warnings.push(format!("{}: error did not decrease from h = {} to h = {h}", METRICS[k], prev.h));
                    f64::NAN
                });
            }
        }
        rows.push(StudyRow { h, errors, orders });
    }
    let dir = out.join(&s.name);
    fs::create_dir_all(&dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
    let csv_path = dir.join("study.csv");
    fs::write(&csv_path, study_csv(&rows)).map_err(|e| RunError::Io(format!("{}: {e}", csv_path.display())))?;
    Ok(Study { rows, warnings, csv_path })
}

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["h".to_string()];
    for m in METRICS {
        header.push(m.to_string());
        header.push(format!("{m}_order"));
    }
    w.write_record(&header).expect("in-memory csv");
    for r in rows {
        let mut rec = vec![format!("{:.12e}", r.h)];
        for k in 0..4 {
            rec.push(format!("{:.12e}", r.errors[k]));
            rec.push(format!("{:.12e}", r.orders[k]));
        }
        w.write_record(&rec).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_follow_the_conventions() {
        assert!((order(4e-2, 1e-2, 2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(order(1e-2, 2e-2, 2.0).is_none());
        assert!(order(1e-14, 1e-15, 2.0).unwrap().is_nan());
        assert!(order(f64::NAN, 1.0, 2.0).unwrap().is_nan());
    }
}
