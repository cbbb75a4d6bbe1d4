//! The truncated mixed problem on a meshed region, solved by minimizing the
//! P1 energy `Σ_T |T| W_ε(∇u_T)` with damped Newton and ε-continuation.
//!
//! Dirichlet data are constants on `Γ₀` and `Γ_R` (by default `0` and
//! `ln R`); `Γ₁` carries the natural flux-free condition.

mod asymptotics;
mod checks;
mod newton;

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

pub use asymptotics::{extract_asymptotics, fit_rings, ring_points, Asymptotics, DBound, RingFit};
pub use checks::{comparison_check, h1_error, neumann_residual, neumann_residuals, nodal_error, Comparison};
pub use newton::solve_truncated;

use crate::gauge::{DualGauge, FluxMap, Gauge, GaugeError};
use crate::geometry::{BoundaryTag, ConvexCone, GeometryError, Mesh, Region};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("line search stagnated at stage {stage} (ε={eps:.3e}), Newton iteration {iteration}: decrement {decrement:.3e}, energy {energy:.12e}")]
    LineSearchStagnation { stage: usize, eps: f64, iteration: usize, decrement: f64, energy: f64 },
    #[error("Newton did not converge at stage {stage} (ε={eps:.3e}) within {iterations} iterations: decrement {decrement:.3e}, max update {max_update:.3e}")]
    NewtonNotConverged { stage: usize, eps: f64, iterations: usize, decrement: f64, max_update: f64 },
    #[error("indefinite Hessian in cell {cell} near ({x:.6}, {y:.6}): local flux Jacobian has eigenvalue {lower:.3e} at ε={eps:.3e}")]
    IndefiniteHessian { cell: usize, x: f64, y: f64, lower: f64, eps: f64 },
    #[error("sparse Cholesky failed at stage {stage}: {reason}")]
    Factorization { stage: usize, reason: String },
    #[error("fields live on different meshes")]
    MeshMismatch,
    #[error("asymptotic extraction: {0}")]
    Asymptotics(String),
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// Constant Dirichlet values on `Γ₀` and `Γ_R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirichletData {
    pub gamma0: f64,
    pub gamma_r: f64,
}

impl DirichletData {
    /// `u = 0` on `Γ₀`, `u = ln R` on `Γ_R`.
    pub fn logarithmic(radius: f64) -> Self {
        Self { gamma0: 0.0, gamma_r: radius.ln() }
    }
}

/// A meshed truncated region with its operator and boundary data.
#[derive(Debug, Clone)]
pub struct TruncatedProblem {
    mesh: Arc<Mesh>,
    dual: Arc<DualGauge>,
    operator: Gauge,
    cone: ConvexCone,
    exponent: f64,
    radius: f64,
    data: DirichletData,
    signature: String,
}

impl TruncatedProblem {
    /// `p = exponent`, data `(0, ln R)`.
    pub fn new(region: &Region, mesh: Arc<Mesh>, exponent: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 1.0) {
            return Err(SolverError::InvalidProblem(format!("exponent p must exceed 1, got {exponent}")));
        }
        if mesh.nodes_with_tag(BoundaryTag::Gamma0).is_empty() || mesh.nodes_with_tag(BoundaryTag::GammaR).is_empty() {
            return Err(SolverError::InvalidProblem("mesh has no Dirichlet boundary".into()));
        }
        let signature = format!(
            "gauge={} cone={:?} obstacle={:?}",
            region.dual().primal(),
            region.cone().angular_range(),
            region.obstacle().shape()
        );
        Ok(Self {
            mesh,
            dual: region.dual().clone(),
            operator: region.dual().primal().clone(),
            cone: region.cone().clone(),
            exponent,
            radius: region.radius(),
            data: DirichletData::logarithmic(region.radius()),
            signature,
        })
    }

    /// The conformal case `p = N = 2`.
    pub fn conformal(region: &Region, mesh: Arc<Mesh>) -> Result<Self> {
        Self::new(region, mesh, 2.0)
    }

    pub fn with_data(mut self, data: DirichletData) -> Self {
        self.data = data;
        self
    }

    /// Replaces the gauge of the operator, keeping the geometry (whose Wulff
    /// shapes still come from the region's gauge).
    pub fn with_operator(mut self, gauge: Gauge) -> Result<Self> {
        if gauge.dim() != 2 {
            return Err(SolverError::InvalidProblem(format!("operator gauge must be planar, got dimension {}", gauge.dim())));
        }
        self.signature = format!("{} operator={gauge}", self.signature);
        self.operator = gauge;
        Ok(self)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn gauge(&self) -> &Gauge {
        &self.operator
    }

    pub fn dual(&self) -> &Arc<DualGauge> {
        &self.dual
    }

    pub fn cone(&self) -> &ConvexCone {
        &self.cone
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn data(&self) -> DirichletData {
        self.data
    }

    /// Identifies the gauge, cone and obstacle (not `R` or the mesh).
    pub fn signature(&self) -> &str {
        &self.signature
    }

    /// `(node, value)` for every Dirichlet node; junctions with `Γ₁` included.
    pub fn dirichlet_nodes(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .mesh
            .nodes_with_tag(BoundaryTag::Gamma0)
            .into_iter()
            .map(|n| (n, self.data.gamma0))
            .chain(self.mesh.nodes_with_tag(BoundaryTag::GammaR).into_iter().map(|n| (n, self.data.gamma_r)))
            .collect();
        out.sort_by_key(|e| e.0);
        out.dedup_by_key(|e| e.0);
        out
    }
}

/// Starting point of the first continuation stage.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// Data interpolated in `ln H₀` between `Γ₀` and `Γ_R`.
    LogProfile,
    /// Interior values uniform between the two boundary constants.
    Random { seed: u64 },
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub initial: InitialGuess,
    /// `ε₀`; `None` picks the boundary-data gradient scale.
    pub eps_initial: Option<f64>,
    pub eps_factor: f64,
    /// `ε_min / ε₀`.
    pub eps_floor: f64,
    /// Stage stops when the Newton decrement `√(gᵀH⁻¹g)` and the max nodal
    /// update are both below these.
    pub newton_tolerance: f64,
    pub update_tolerance: f64,
    pub max_newton: usize,
    pub armijo: f64,
    pub ring_fractions: Vec<f64>,
    pub ring_samples: usize,
    /// Rings with fit residual above this raise the asymptotic-regime flag.
    pub ring_residual_threshold: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            initial: InitialGuess::LogProfile,
            eps_initial: None,
            eps_factor: 4.0,
            eps_floor: 1e-6,
            newton_tolerance: 1e-10,
            update_tolerance: 1e-9,
            max_newton: 60,
            armijo: 1e-4,
            ring_fractions: vec![0.4, 0.5, 0.6],
            ring_samples: 256,
            ring_residual_threshold: 1e-2,
        }
    }
}

/// Nodal values with per-cell gradients and unregularized fluxes.
#[derive(Debug, Clone)]
pub struct Field {
    mesh: Arc<Mesh>,
    flux: FluxMap,
    values: Vec<f64>,
    gradients: Vec<[f64; 2]>,
    fluxes: Vec<[f64; 2]>,
}

impl Field {
    /// `flux` is used without regularization.
    pub fn new(mesh: Arc<Mesh>, flux: FluxMap, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.vertices().len() {
            return Err(SolverError::InvalidProblem(format!(
                "field has {} values for {} vertices",
                values.len(),
                mesh.vertices().len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidProblem("field values must be finite".into()));
        }
        let flux = flux.with_regularization(0.0)?;
        let gradients: Vec<[f64; 2]> = (0..mesh.triangles().len()).map(|c| mesh.gradient(&values, c)).collect();
        let fluxes = gradients.iter().map(|g| flux.apply2(*g)).collect();
        Ok(Self { mesh, flux, values, gradients, fluxes })
    }

    /// P1 interpolant of `f`.
    pub fn interpolate<F: Fn([f64; 2]) -> f64>(mesh: Arc<Mesh>, flux: FluxMap, f: F) -> Result<Self> {
        let values = mesh.vertices().iter().map(|x| f(*x)).collect();
        Self::new(mesh, flux, values)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn flux_map(&self) -> &FluxMap {
        &self.flux
    }

    pub fn gauge(&self) -> &Gauge {
        self.flux.gauge()
    }

    pub fn exponent(&self) -> f64 {
        self.flux.exponent()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gradient(&self, cell: usize) -> [f64; 2] {
        self.gradients[cell]
    }

    pub fn gradients(&self) -> &[[f64; 2]] {
        &self.gradients
    }

    /// `a(∇u)` on a cell.
    pub fn flux(&self, cell: usize) -> [f64; 2] {
        self.fluxes[cell]
    }

    /// `(1/p) Σ_T |T| H^p(∇u_T)`.
    pub fn energy(&self) -> f64 {
        self.gradients.iter().enumerate().map(|(c, g)| self.mesh.area(c) * self.flux.energy_density(g)).sum()
    }

    /// Value at `x`, extrapolating linearly from the nearest cell when `x`
    /// lies just outside the mesh (curved boundaries).
    pub fn sample(&self, x: [f64; 2]) -> f64 {
        match self.value_at(x) {
            Some(v) => v,
            None => {
                let (cell, bary) = self.mesh.locate_nearest(x);
                let t = self.mesh.triangles()[cell];
                (0..3).map(|k| bary[k] * self.values[t[k]]).sum()
            }
        }
    }

    pub fn value_at(&self, x: [f64; 2]) -> Option<f64> {
        self.mesh.interpolate(&self.values, x)
    }

    /// `node x y value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# node x y value\n");
        for (i, (x, v)) in self.mesh.vertices().iter().zip(&self.values).enumerate() {
            let _ = writeln!(s, "{i} {:.12e} {:.12e} {:.12e}", x[0], x[1], v);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageReport {
    pub eps: f64,
    pub newton_iterations: usize,
    pub energy: f64,
    pub decrement: f64,
    pub max_update: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub field: Field,
    pub radius: f64,
    pub signature: String,
    pub data: DirichletData,
    /// Regularized energy at the last stage.
    pub energy: f64,
    /// `(1/p)Σ|T|H^p(∇u)` of the final field.
    pub energy_unregularized: f64,
    pub stages: Vec<StageReport>,
    pub max_update: f64,
    /// Newton decrement (dual norm of the discrete Euler–Lagrange residual in
    /// the Hessian metric) at the final iterate.
    pub euler_lagrange_residual: f64,
    pub neumann_residual: f64,
    pub ring_fit: RingFit,
    pub d_bound: DBound,
}

impl SolveReport {
    pub fn newton_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.newton_iterations).sum()
    }

    /// Structured `key = value` text.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let m = self.field.mesh().stats();
        kv("radius", format!("{:.12e}", self.radius));
        kv("exponent", format!("{:.12e}", self.field.exponent()));
        kv("problem", self.signature.clone());
        kv("data.gamma0", format!("{:.12e}", self.data.gamma0));
        kv("data.gammaR", format!("{:.12e}", self.data.gamma_r));
        kv("mesh.h", format!("{:.12e}", m.target_h));
        kv("mesh.vertices", m.vertices.to_string());
        kv("mesh.triangles", m.triangles.to_string());
        kv("mesh.min_angle_deg", format!("{:.6}", m.min_angle_deg));
        kv("energy", format!("{:.12e}", self.energy));
        kv("energy.unregularized", format!("{:.12e}", self.energy_unregularized));
        kv("newton.iterations", self.newton_iterations().to_string());
        for (i, st) in self.stages.iter().enumerate() {
            kv(
                &format!("stage.{i}"),
                format!(
                    "eps={:.6e} iterations={} energy={:.12e} decrement={:.3e}",
                    st.eps, st.newton_iterations, st.energy, st.decrement
                ),
            );
        }
        kv("max_update", format!("{:.3e}", self.max_update));
        kv("euler_lagrange_residual", format!("{:.3e}", self.euler_lagrange_residual));
        kv("neumann_residual", format!("{:.6e}", self.neumann_residual));
        kv("rings.gamma", format!("{:.12e}", self.ring_fit.gamma));
        kv("rings.beta", format!("{:.12e}", self.ring_fit.beta));
        kv("rings.residual", format!("{:.6e}", self.ring_fit.residual));
        kv("rings.flagged", self.ring_fit.flagged.to_string());
        kv("d_bound.d", format!("{:.6e}", self.d_bound.d));
        kv("d_bound.holds", self.d_bound.holds.to_string());
        s
    }
}
