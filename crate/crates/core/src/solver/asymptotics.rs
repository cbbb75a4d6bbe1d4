use std::f64::consts::TAU;

use serde::Serialize;

use super::{Field, Result, SolveOptions, SolveReport, SolverError};
use crate::gauge::DualGauge;
use crate::geometry::ConvexCone;
use crate::quadrature::fit_line;

/// `samples` points of `{H₀ = level}` at equal polar angles inside the cone
/// (cell-centered, so none sits on a wall).
pub fn ring_points(dual: &DualGauge, cone: &ConvexCone, level: f64, samples: usize) -> Result<Vec<[f64; 2]>> {
    let (start, span) = match cone.angular_range() {
        None => (0.0, TAU),
        Some(r) => (r.start, r.opening),
    };
    (0..samples)
        .map(|k| {
            let t = start + span * (k as f64 + 0.5) / samples as f64;
            let w = [t.cos(), t.sin()];
            let s = level / dual.eval(&w)?;
            Ok([s * w[0], s * w[1]])
        })
        .collect()
}

/// Least-squares fit `u ≈ γ ln H₀ + β` on rings `{H₀ = c·R}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingFit {
    pub radius: f64,
    pub fractions: Vec<f64>,
    pub ring_means: Vec<f64>,
    pub gamma: f64,
    pub beta: f64,
    /// RMS of `u − γ ln H₀ − β` over all ring samples.
    pub residual: f64,
    pub flagged: bool,
}

pub fn fit_rings(field: &Field, dual: &DualGauge, cone: &ConvexCone, radius: f64, opts: &SolveOptions) -> Result<RingFit> {
    if opts.ring_fractions.len() < 2 || opts.ring_fractions.iter().any(|c| !(*c > 0.0 && *c < 1.0)) {
        return Err(SolverError::InvalidProblem("need at least two ring fractions in (0, 1)".into()));
    }
    let (mut xs, mut ys, mut means) = (Vec::new(), Vec::new(), Vec::new());
    for c in &opts.ring_fractions {
        let level = c * radius;
        let pts = ring_points(dual, cone, level, opts.ring_samples)?;
        let vals: Vec<f64> = pts.iter().map(|x| field.sample(*x)).collect();
        means.push(vals.iter().sum::<f64>() / vals.len() as f64);
        xs.extend(std::iter::repeat_n(level.ln(), vals.len()));
        ys.extend(vals);
    }
    let (beta, gamma, residual) = fit_line(&xs, &ys);
    Ok(RingFit {
        radius,
        fractions: opts.ring_fractions.clone(),
        ring_means: means,
        gamma,
        beta,
        residual,
        flagged: residual > opts.ring_residual_threshold,
    })
}

/// Smallest `d` with `u/ln H₀ ∈ [1/d, d]` on the sampling rings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DBound {
    pub d: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub holds: bool,
}

pub(super) fn d_bound(field: &Field, dual: &DualGauge, cone: &ConvexCone, radius: f64, opts: &SolveOptions) -> Result<DBound> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in &opts.ring_fractions {
        let level = c * radius;
        if level <= 1.0 {
            continue;
        }
        for x in ring_points(dual, cone, level, opts.ring_samples)? {
            let r = field.sample(x) / level.ln();
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    let holds = lo > 0.0 && hi.is_finite();
    let d = if holds { hi.max(1.0 / lo).max(1.0) } else { f64::INFINITY };
    Ok(DBound { d, min_ratio: lo, max_ratio: hi, holds })
}

/// `(γ, β)` extrapolated to `R → ∞` from nested solves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Asymptotics {
    pub gamma: f64,
    pub beta: f64,
    /// Largest of the extrapolation-fit and ring-fit residuals.
    pub fit_residual: f64,
    pub per_radius: Vec<RingFit>,
    /// Set when the asymptotic regime looks unreached.
    pub flagged: bool,
}

/// Fits `1/γ_R = a + b/ln R` and `β_R/γ_R = c + d/ln R`, the exact form for
/// Wulff obstacles, and returns `γ = 1/a`, `β = c/a`.
pub fn extract_asymptotics(reports: &[&SolveReport]) -> Result<Asymptotics> {
    if reports.len() < 2 {
        return Err(SolverError::Asymptotics("at least two nested solves are required".into()));
    }
    let sig = &reports[0].signature;
    if reports.iter().any(|r| &r.signature != sig) {
        return Err(SolverError::Asymptotics("solves differ in gauge, cone or obstacle".into()));
    }
    let mut radii: Vec<f64> = reports.iter().map(|r| r.radius).collect();
    radii.sort_by(|a, b| a.total_cmp(b));
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 1.0 {
        return Err(SolverError::Asymptotics("truncation radii must be distinct and exceed 1".into()));
    }
    let x: Vec<f64> = reports.iter().map(|r| 1.0 / r.radius.ln()).collect();
    let inv_gamma: Vec<f64> = reports.iter().map(|r| 1.0 / r.ring_fit.gamma).collect();
    let ratio: Vec<f64> = reports.iter().map(|r| r.ring_fit.beta / r.ring_fit.gamma).collect();
    let (a, _, r1) = fit_line(&x, &inv_gamma);
    let (c, _, r2) = fit_line(&x, &ratio);
    let ring_res = reports.iter().map(|r| r.ring_fit.residual).fold(0.0, f64::max);
    let fit_residual = r1.max(r2).max(ring_res);
    Ok(Asymptotics {
        gamma: 1.0 / a,
        beta: c / a,
        fit_residual,
        per_radius: reports.iter().map(|r| r.ring_fit.clone()).collect(),
        flagged: reports.iter().any(|r| r.ring_fit.flagged) || r1.max(r2) > 1e-2,
    })
}
