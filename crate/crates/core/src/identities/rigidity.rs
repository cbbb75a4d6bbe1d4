use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use super::{
    boundary_flux, c_formula_check, capacity_constant, pohozaev_check, volume_identity_check, CapacityConstant,
    TraceMode, IdentityError, IdentityGap, PohozaevReport, Result,
};
use crate::gauge::{DualGauge, Gauge};
use crate::geometry::{build_region, mesh_region, BoundaryTag, ConvexCone, ObstacleDomain, ObstacleShape};
use crate::solver::{extract_asymptotics, solve_truncated, Asymptotics, SolveOptions, SolveReport, TruncatedProblem};
use crate::wulff::{IsoperimetricEvaluator, MeasurableSetSpec, DEFAULT_MC_SEED};

/// Smallest floor used when comparing a headline against the Wulff run.
const ABSOLUTE_FLOOR: f64 = 1e-6;
/// A headline number "passes as Wulff" below this multiple of its floor.
const FLOOR_FACTOR: f64 = 3.0;

const NOTE: &str = "the capacity and volume identities presume H(grad u) = C on Gamma0; \
when sigma_C/C is well above its floor the identity gaps measure how far the trace is from constant, \
not discretization error";

#[derive(Debug, Clone)]
pub struct RigidityConfig {
    pub gauge: Gauge,
    pub cone: ConvexCone,
    pub obstacle: ObstacleShape,
    /// Nested truncation radii, e.g. `R, 2R, 4R`.
    pub radii: Vec<f64>,
    pub h: f64,
    pub trace_mode: TraceMode,
    pub options: SolveOptions,
    /// Monte-Carlo seed of the obstacle volume cross-check.
    pub seed: u64,
}

impl RigidityConfig {
    /// Radii `R, 2R, 4R` with consistent-flux trace sampling.
    pub fn new(gauge: Gauge, cone: ConvexCone, obstacle: ObstacleShape, radius: f64, h: f64) -> Self {
        Self {
            gauge,
            cone,
            obstacle,
            radii: vec![radius, 2.0 * radius, 4.0 * radius],
            h,
            trace_mode: TraceMode::ConsistentFlux,
            options: SolveOptions::default(),
            seed: DEFAULT_MC_SEED,
        }
    }

    pub fn with_obstacle(&self, obstacle: ObstacleShape) -> Self {
        Self { obstacle, ..self.clone() }
    }
}

/// `(σ_C/C̄, max identity gap, isoperimetric deficit)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Headline {
    pub relative_sigma: f64,
    pub identity_gap: f64,
    pub deficit: f64,
}

impl Headline {
    pub fn as_array(&self) -> [f64; 3] {
        [self.relative_sigma, self.identity_gap, self.deficit]
    }
}

/// Headline of the vertex-centered unit Wulff ball at the same `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WulffFloor(pub Headline);

#[derive(Debug, Clone, Serialize)]
pub struct RigidityReport {
    pub radii: Vec<f64>,
    pub h: f64,
    pub asymptotics: Asymptotics,
    /// Capacity samples from the largest truncation.
    pub capacity: CapacityConstant,
    /// `C̄` rescaled to the `R → ∞` normalization `u ~ γ ln H₀`.
    pub c_mean: f64,
    pub relative_sigma: f64,
    pub perimeter_obstacle: f64,
    pub perimeter_reference: f64,
    pub volume_obstacle: f64,
    pub c_formula: IdentityGap,
    pub volume_identity: IdentityGap,
    pub deficit: f64,
    pub deficit_tolerance: f64,
    pub pohozaev: PohozaevReport,
    /// `Σ_tags ∫⟨a,ν⟩` on the largest truncation.
    pub flux_balance: f64,
    pub flux_gamma0: f64,
    pub note: &'static str,
}

impl RigidityReport {
    pub fn headline(&self) -> Headline {
        Headline {
            relative_sigma: self.relative_sigma,
            identity_gap: self.c_formula.gap.max(self.volume_identity.gap),
            deficit: self.deficit,
        }
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let e = |v: f64| format!("{v:.12e}");
        kv("radii", self.radii.iter().map(|r| format!("{r}")).collect::<Vec<_>>().join(","));
        kv("h", e(self.h));
        kv("gamma", e(self.asymptotics.gamma));
        kv("beta", e(self.asymptotics.beta));
        kv("asymptotics.fit_residual", e(self.asymptotics.fit_residual));
        kv("asymptotics.flagged", self.asymptotics.flagged.to_string());
        kv("capacity.mode", self.capacity.mode.name().to_string());
        kv("capacity.mean", e(self.c_mean));
        kv("capacity.relative_sigma", e(self.relative_sigma));
        kv("perimeter.obstacle", e(self.perimeter_obstacle));
        kv("perimeter.reference", e(self.perimeter_reference));
        kv("volume.obstacle", e(self.volume_obstacle));
        kv("c_formula.lhs", e(self.c_formula.lhs));
        kv("c_formula.rhs", e(self.c_formula.rhs));
        kv("c_formula.gap", e(self.c_formula.gap));
        kv("volume_identity.lhs", e(self.volume_identity.lhs));
        kv("volume_identity.rhs", e(self.volume_identity.rhs));
        kv("volume_identity.gap", e(self.volume_identity.gap));
        kv("deficit", e(self.deficit));
        kv("deficit.tolerance", e(self.deficit_tolerance));
        kv("pohozaev.residual", e(self.pohozaev.residual));
        kv("flux.gamma0", e(self.flux_gamma0));
        kv("flux.balance", e(self.flux_balance));
        kv("note", self.note.to_string());
        s
    }
}

fn unit_wulff_ball() -> ObstacleShape {
    ObstacleShape::WulffBall { center: [0.0, 0.0], radius: 1.0 }
}

fn stage<E: std::fmt::Display>(name: &'static str) -> impl Fn(E) -> IdentityError {
    move |e| IdentityError::Stage { stage: name, reason: e.to_string() }
}

fn solve_nested(cfg: &RigidityConfig) -> Result<Vec<SolveReport>> {
    if cfg.radii.len() < 2 {
        return Err(IdentityError::InvalidInput("the rigidity probe needs at least two radii".into()));
    }
    let dual = Arc::new(DualGauge::new(cfg.gauge.clone()));
    let mut reports = Vec::with_capacity(cfg.radii.len());
    for &r in &cfg.radii {
        let obstacle = ObstacleDomain::new(cfg.obstacle.clone(), dual.clone()).map_err(stage("region"))?;
        let region = build_region(cfg.cone.clone(), obstacle, r).map_err(stage("region"))?;
        let mesh = Arc::new(mesh_region(&region, cfg.h).map_err(stage("mesh"))?);
        let problem = TruncatedProblem::conformal(&region, mesh).map_err(stage("solve"))?;
        reports.push(solve_truncated(&problem, &cfg.options).map_err(stage("solve"))?);
    }
    Ok(reports)
}

pub fn rigidity_probe(cfg: &RigidityConfig) -> Result<RigidityReport> {
    rigidity_from_solves(cfg, &solve_nested(cfg)?)
}

/// The probe on nested conformal solves already computed for `cfg` (one per
/// radius, same gauge, cone and obstacle).
pub fn rigidity_from_solves(cfg: &RigidityConfig, reports: &[SolveReport]) -> Result<RigidityReport> {
    if reports.iter().any(|r| r.field.exponent() != 2.0) {
        return Err(IdentityError::InvalidInput("the rigidity identities hold for p = N = 2 only".into()));
    }
    let refs: Vec<&SolveReport> = reports.iter().collect();
    let asymptotics = extract_asymptotics(&refs).map_err(stage("asymptotics"))?;
    let last = reports.iter().max_by(|a, b| a.radius.total_cmp(&b.radius)).expect("extract_asymptotics needs two solves");
    let capacity = capacity_constant(&last.field, cfg.trace_mode);
    // C_R/γ_R is normalization free; rescale to the limit γ
    let c_mean = capacity.mean / last.ring_fit.gamma * asymptotics.gamma;
    let relative_sigma = capacity.relative_std();

    let evaluator = IsoperimetricEvaluator::new(cfg.gauge.clone(), cfg.cone.clone());
    let reference = *evaluator.reference().map_err(stage("isoperimetry"))?;
    let iso = evaluator.evaluate(&MeasurableSetSpec::new(cfg.obstacle.clone()).with_seed(cfg.seed)).map_err(stage("isoperimetry"))?;
    let perimeter_obstacle = iso.perimeter.value;
    let volume_obstacle = iso.volume.value();
    let perimeter_reference = reference.perimeter.value;
    let c_formula = c_formula_check(c_mean, asymptotics.gamma, perimeter_obstacle, perimeter_reference)
        .map_err(stage("capacity"))?;
    let volume_identity = volume_identity_check(c_mean, asymptotics.gamma, volume_obstacle, perimeter_reference)
        .map_err(stage("capacity"))?;

    let flux_gamma0 = boundary_flux(&last.field, BoundaryTag::Gamma0);
    let flux_balance = BoundaryTag::ALL.iter().map(|t| boundary_flux(&last.field, *t)).sum();
    Ok(RigidityReport {
        radii: cfg.radii.clone(),
        h: cfg.h,
        asymptotics,
        capacity,
        c_mean,
        relative_sigma,
        perimeter_obstacle,
        perimeter_reference,
        volume_obstacle,
        c_formula,
        volume_identity,
        deficit: iso.deficit,
        deficit_tolerance: iso.tolerance,
        pohozaev: pohozaev_check(&last.field, cfg.trace_mode),
        flux_balance,
        flux_gamma0,
        note: NOTE,
    })
}

/// Runs the probe on `{H₀ < 1}` with the same gauge, cone, radii and `h`.
pub fn wulff_floor(cfg: &RigidityConfig) -> Result<WulffFloor> {
    let reference = cfg.with_obstacle(unit_wulff_ball());
    Ok(WulffFloor(rigidity_probe(&reference)?.headline()))
}

/// Every headline number is below three times its floor (floors are at
/// least `1e-6`).
pub fn passes_as_wulff(headline: &Headline, floor: &WulffFloor) -> bool {
    headline
        .as_array()
        .iter()
        .zip(floor.0.as_array())
        .all(|(v, f)| v.abs() < FLOOR_FACTOR * f.abs().max(ABSOLUTE_FLOOR))
}
