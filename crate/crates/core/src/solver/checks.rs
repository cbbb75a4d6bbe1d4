use std::sync::Arc;

use serde::Serialize;

use super::{Field, Result, SolverError};
use crate::geometry::BoundaryTag;

/// `(facet index, |⟨a(∇u),ν⟩| / H^{p−1}(∇u))` for every `Γ₁` facet. Cells
/// whose gradient is at roundoff level (`H·h ≤ 1e-12·max(1, max|u|)`) count
/// as 0: their direction, and so the ratio, is noise.
pub fn neumann_residuals(field: &Field) -> Vec<(usize, f64)> {
    let mesh = field.mesh();
    let p = field.exponent();
    let scale = field.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let roundoff = 1e-12 * scale / mesh.h();
    mesh.facets()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.tag == BoundaryTag::Gamma1)
        .map(|(i, f)| {
            let g = field.gradient(f.cell);
            let h = field.gauge().value(&g);
            if h <= roundoff {
                return (i, 0.0);
            }
            let a = field.flux(f.cell);
            let n = mesh.facet_normal(f);
            (i, (a[0] * n[0] + a[1] * n[1]).abs() / h.powf(p - 1.0))
        })
        .collect()
}

/// Max over `Γ₁` facets of the normalized normal flux; 0 without walls.
pub fn neumann_residual(field: &Field) -> f64 {
    neumann_residuals(field).into_iter().map(|(_, r)| r).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    /// Non-Dirichlet nodes with `u₁ > u₂ + slack`.
    pub violations: usize,
    /// `max (u₁ − u₂)` over non-Dirichlet nodes.
    pub max_violation: f64,
    pub slack: f64,
    pub checked: usize,
}

/// Counts nodes off `Γ₀ ∪ Γ_R` where `f₁` exceeds `f₂` by more than `c·h`.
pub fn comparison_check(f1: &Field, f2: &Field, c: f64) -> Result<Comparison> {
    let (m1, m2) = (f1.mesh(), f2.mesh());
    if !Arc::ptr_eq(m1, m2) && m1.vertices() != m2.vertices() {
        return Err(SolverError::MeshMismatch);
    }
    let mut dirichlet = vec![false; m1.vertices().len()];
    for tag in [BoundaryTag::Gamma0, BoundaryTag::GammaR] {
        for n in m1.nodes_with_tag(tag) {
            dirichlet[n] = true;
        }
    }
    let slack = c * m1.h();
    let mut out = Comparison { violations: 0, max_violation: f64::NEG_INFINITY, slack, checked: 0 };
    for (i, (a, b)) in f1.values().iter().zip(f2.values()).enumerate() {
        if dirichlet[i] {
            continue;
        }
        out.checked += 1;
        out.max_violation = out.max_violation.max(a - b);
        if a - b > slack {
            out.violations += 1;
        }
    }
    Ok(out)
}

/// `‖∇u_h − ∇u‖_{L²}` with the edge-midpoint rule on each cell.
pub fn h1_error<G: Fn([f64; 2]) -> [f64; 2]>(field: &Field, exact_gradient: G) -> f64 {
    let mesh = field.mesh();
    let v = mesh.vertices();
    let mut total = 0.0;
    for (c, t) in mesh.triangles().iter().enumerate() {
        let g = field.gradient(c);
        let mut s = 0.0;
        for k in 0..3 {
            let (a, b) = (v[t[k]], v[t[(k + 1) % 3]]);
            let e = exact_gradient([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            s += (g[0] - e[0]).powi(2) + (g[1] - e[1]).powi(2);
        }
        total += mesh.area(c) * s / 3.0;
    }
    total.sqrt()
}

/// `max_i |u_i − u(x_i)|`.
pub fn nodal_error<F: Fn([f64; 2]) -> f64>(field: &Field, exact: F) -> f64 {
    field.mesh().vertices().iter().zip(field.values()).map(|(x, v)| (v - exact(*x)).abs()).fold(0.0, f64::max)
}
