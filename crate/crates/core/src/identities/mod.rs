//! Post-processing of solved fields: the Pohozaev identity, boundary
//! fluxes, the capacity constant `C` on `Γ₀`, the perimeter and volume
//! identities it must satisfy, and the rigidity probe built from them.

mod rigidity;

use std::fmt::Write as _;

use serde::Serialize;

pub use rigidity::{
    passes_as_wulff, rigidity_from_solves, rigidity_probe, wulff_floor, Headline, RigidityConfig, RigidityReport, WulffFloor,
};

use crate::gauge::{DualGauge, GaugeError};
use crate::geometry::{BoundaryTag, ConvexCone, GeometryError};
use crate::solver::{ring_points, Field, SolverError};
use crate::wulff::WulffError;

#[derive(Debug, thiserror::Error)]
pub enum IdentityError {
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Wulff(#[from] WulffError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("rigidity probe failed at stage '{stage}': {reason}")]
    Stage { stage: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, IdentityError>;

/// Both sides of `((p−N)/p)∫H^p(∇u) = ∫_∂ (H^{p−1}⟨x,∇u⟩⟨∇H(∇u),ν⟩ − (1/p)H^p⟨x,ν⟩)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PohozaevReport {
    pub mode: TraceMode,
    pub exponent: f64,
    pub interior: f64,
    pub boundary: f64,
    /// Boundary contributions on `Γ₀`, `Γ₁`, `Γ_R`.
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma_r: f64,
    /// `interior − boundary`.
    pub residual: f64,
    pub h: f64,
    /// Cells with `∇u = 0` (their integrands are set to 0).
    pub zero_gradient_cells: usize,
}

/// Evaluates both sides with the cellwise gradients; facets use the
/// adjacent cell's gradient at the facet midpoint. `x` is measured from
/// the cone vertex. With [`TraceMode::ConsistentFlux`] the Dirichlet facets
/// use the recovered trace instead, where `∇u ∥ ν` reduces the integrand to
/// `(1 − 1/p) H^p ⟨x,ν⟩`; `Γ₁` facets stay cellwise.
pub fn pohozaev_check(field: &Field, mode: TraceMode) -> PohozaevReport {
    let mesh = field.mesh();
    let p = field.exponent();
    let n = 2.0;
    let gauge = field.gauge();
    let mut zero = 0;
    let mut hp_total = 0.0;
    for c in 0..mesh.triangles().len() {
        let h = gauge.value(&field.gradient(c));
        if h == 0.0 {
            zero += 1;
            continue;
        }
        hp_total += mesh.area(c) * h.powf(p);
    }
    let interior = (p - n) / p * hp_total;
    let mut parts = [0.0; 3];
    let mut grad_h = [0.0; 2];
    let trace = match mode {
        TraceMode::OneSided => None,
        TraceMode::ConsistentFlux => Some(recovered_trace(field)),
    };
    for (i, f) in mesh.facets().iter().enumerate() {
        let slot = match f.tag {
            BoundaryTag::Gamma0 => 0,
            BoundaryTag::Gamma1 => 1,
            BoundaryTag::GammaR => 2,
        };
        if let Some(t) = trace.as_ref().filter(|_| f.tag != BoundaryTag::Gamma1) {
            let x = mesh.facet_midpoint(f);
            let nu = mesh.facet_normal(f);
            parts[slot] += mesh.facet_length(f) * (1.0 - 1.0 / p) * t[i].powf(p) * (x[0] * nu[0] + x[1] * nu[1]);
            continue;
        }
        let g = field.gradient(f.cell);
        let h = gauge.value(&g);
        if h == 0.0 {
            continue;
        }
        gauge.gradient_into(&g, &mut grad_h);
        let x = mesh.facet_midpoint(f);
        let nu = mesh.facet_normal(f);
        let x_du = x[0] * g[0] + x[1] * g[1];
        let dh_nu = grad_h[0] * nu[0] + grad_h[1] * nu[1];
        let x_nu = x[0] * nu[0] + x[1] * nu[1];
        let term = h.powf(p - 1.0) * x_du * dh_nu - h.powf(p) * x_nu / p;
        parts[slot] += mesh.facet_length(f) * term;
    }
    let boundary = parts.iter().sum::<f64>();
    PohozaevReport {
        mode,
        exponent: p,
        interior,
        boundary,
        gamma0: parts[0],
        gamma1: parts[1],
        gamma_r: parts[2],
        residual: interior - boundary,
        h: mesh.h(),
        zero_gradient_cells: zero,
    }
}

/// `∫_tag ⟨a(∇u), ν⟩` with the region's outward normal.
pub fn boundary_flux(field: &Field, tag: BoundaryTag) -> f64 {
    let mesh = field.mesh();
    mesh.facets_with_tag(tag)
        .map(|f| {
            let a = field.flux(f.cell);
            let nu = mesh.facet_normal(f);
            mesh.facet_length(f) * (a[0] * nu[0] + a[1] * nu[1])
        })
        .sum()
}

/// Flux of `a(∇u)` through the ring `{H₀ = level}` inside the cone, with the
/// normal pointing away from the vertex. The ring is a polyline through
/// `samples + 1` points including the walls.
pub fn ring_flux(field: &Field, dual: &DualGauge, cone: &ConvexCone, level: f64, samples: usize) -> Result<f64> {
    if samples < 8 {
        return Err(IdentityError::InvalidInput("ring flux needs at least 8 segments".into()));
    }
    let mut pts = ring_points(dual, cone, level, 2 * samples)?;
    // ring_points is cell-centered; use every other point as a vertex and
    // close the polyline at the walls (or periodically)
    let mut verts: Vec<[f64; 2]> = pts.drain(..).skip(1).step_by(2).collect();
    match cone.angular_range() {
        None => verts.push(verts[0]),
        Some(r) => {
            let end = |t: f64| -> Result<[f64; 2]> {
                let w = [t.cos(), t.sin()];
                let s = level / dual.eval(&w)?;
                Ok([s * w[0], s * w[1]])
            };
            verts.insert(0, end(r.start)?);
            verts.pop();
            verts.push(end(r.start + r.opening)?);
        }
    }
    let mesh = field.mesh();
    let mut total = 0.0;
    for w in verts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let (cell, _) = mesh.locate(mid).unwrap_or_else(|| mesh.locate_nearest(mid));
        let q = field.flux(cell);
        // counterclockwise polyline: outward normal is (dy, −dx)
        total += q[0] * (b[1] - a[1]) - q[1] * (b[0] - a[0]);
    }
    Ok(total)
}

/// How `H(∇u)` is sampled on the Dirichlet boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TraceMode {
    /// Gradient of the cell adjacent to each facet.
    OneSided,
    /// Normal flux recovered from the discrete reaction at the Dirichlet
    /// nodes (lumped boundary mass), converted to `H(∇u)` using that `∇u` is
    /// normal to the level set `Γ₀`.
    ConsistentFlux,
}

impl TraceMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::OneSided => "one-sided",
            Self::ConsistentFlux => "consistent-flux",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Self::OneSided, Self::ConsistentFlux].into_iter().find(|m| m.name() == s)
    }
}

/// One `Γ₀` facet sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSample {
    pub facet: usize,
    pub midpoint: [f64; 2],
    pub length: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityConstant {
    pub mode: TraceMode,
    /// Length-weighted mean `C̄` of `H(∇u)` on `Γ₀`.
    pub mean: f64,
    pub std_dev: f64,
    /// `Γ₀` length.
    pub measure: f64,
    pub samples: Vec<TraceSample>,
}

impl CapacityConstant {
    /// `σ_C / C̄` (0 when `C̄ = 0`).
    pub fn relative_std(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            self.std_dev / self.mean.abs()
        }
    }
}

/// `H(∇u)` on every Dirichlet facet (NaN elsewhere) from the discrete
/// reaction `rᵢ = Σ_T |T|⟨a(∇u_T),∇φᵢ⟩`, divided by the lumped boundary mass.
/// Since `u` is constant there, `∇u = tν` and `⟨a(∇u),ν⟩ = s|t|^{p−1}H(sν)^p`
/// with `s = sign t`.
fn recovered_trace(field: &Field) -> Vec<f64> {
    let mesh = field.mesh();
    let gauge = field.gauge();
    let p = field.exponent();
    let n = mesh.vertices().len();
    let dirichlet = |f: &crate::geometry::Facet| f.tag != BoundaryTag::Gamma1;
    let mut reaction = vec![0.0; n];
    let mut mass = vec![0.0; n];
    for (c, t) in mesh.triangles().iter().enumerate() {
        let a = field.flux(c);
        let area = mesh.area(c);
        for (k, g) in mesh.basis_gradients(c).iter().enumerate() {
            reaction[t[k]] += area * (a[0] * g[0] + a[1] * g[1]);
        }
    }
    for f in mesh.facets().iter().filter(|f| dirichlet(f)) {
        let l = mesh.facet_length(f);
        mass[f.nodes[0]] += 0.5 * l;
        mass[f.nodes[1]] += 0.5 * l;
    }
    mesh.facets()
        .iter()
        .map(|f| {
            if !dirichlet(f) {
                return f64::NAN;
            }
            let q = 0.5 * (reaction[f.nodes[0]] / mass[f.nodes[0]] + reaction[f.nodes[1]] / mass[f.nodes[1]]);
            let nu = mesh.facet_normal(f);
            let s = q.signum();
            let h_dir = gauge.value(&[s * nu[0], s * nu[1]]);
            (q.abs() / h_dir.powf(p)).powf(1.0 / (p - 1.0)) * h_dir
        })
        .collect()
}

pub fn capacity_constant(field: &Field, mode: TraceMode) -> CapacityConstant {
    let mesh = field.mesh();
    let gauge = field.gauge();
    let facets: Vec<(usize, &crate::geometry::Facet)> =
        mesh.facets().iter().enumerate().filter(|(_, f)| f.tag == BoundaryTag::Gamma0).collect();
    let values: Vec<f64> = match mode {
        TraceMode::OneSided => facets.iter().map(|(_, f)| gauge.value(&field.gradient(f.cell))).collect(),
        TraceMode::ConsistentFlux => {
            let trace = recovered_trace(field);
            facets.iter().map(|(i, _)| trace[*i]).collect()
        }
    };
    let mut samples = Vec::with_capacity(facets.len());
    let (mut sum_l, mut sum_v) = (0.0, 0.0);
    for ((i, f), v) in facets.iter().zip(&values) {
        let l = mesh.facet_length(f);
        sum_l += l;
        sum_v += l * v;
        samples.push(TraceSample { facet: *i, midpoint: mesh.facet_midpoint(f), length: l, value: *v });
    }
    let mean = if sum_l > 0.0 { sum_v / sum_l } else { 0.0 };
    let var = if sum_l > 0.0 { samples.iter().map(|s| s.length * (s.value - mean).powi(2)).sum::<f64>() / sum_l } else { 0.0 };
    CapacityConstant { mode, mean, std_dev: var.sqrt(), measure: sum_l, samples }
}

/// `lhs`, `rhs` and `|lhs − rhs| / |rhs|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityGap {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

impl IdentityGap {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, gap: (lhs - rhs).abs() / rhs.abs() }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(IdentityError::InvalidInput(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `(C̄/γ)^{N−1}` against `P_H(B₁^{H₀};Σ) / P_H(Ω;Σ)` in the plane.
pub fn c_formula_check(c_mean: f64, gamma: f64, perimeter_obstacle: f64, perimeter_reference: f64) -> Result<IdentityGap> {
    positive("γ", gamma)?;
    positive("obstacle perimeter", perimeter_obstacle)?;
    positive("reference perimeter", perimeter_reference)?;
    Ok(IdentityGap::new(c_mean / gamma, perimeter_reference / perimeter_obstacle))
}

/// `C̄^N 𝓗^N(Σ∩Ω)` against `(γ^N/N) P_H(B₁^{H₀};Σ)` in the plane.
pub fn volume_identity_check(c_mean: f64, gamma: f64, volume_obstacle: f64, perimeter_reference: f64) -> Result<IdentityGap> {
    positive("γ", gamma)?;
    positive("obstacle volume", volume_obstacle)?;
    positive("reference perimeter", perimeter_reference)?;
    Ok(IdentityGap::new(c_mean * c_mean * volume_obstacle, 0.5 * gamma * gamma * perimeter_reference))
}

impl PohozaevReport {
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode = {}", self.mode.name());
        for (k, v) in [
            ("exponent", self.exponent),
            ("interior", self.interior),
            ("boundary", self.boundary),
            ("boundary.gamma0", self.gamma0),
            ("boundary.gamma1", self.gamma1),
            ("boundary.gammaR", self.gamma_r),
            ("residual", self.residual),
            ("h", self.h),
        ] {
            let _ = writeln!(s, "{k} = {v:.12e}");
        }
        let _ = writeln!(s, "zero_gradient_cells = {}", self.zero_gradient_cells);
        s
    }
}
