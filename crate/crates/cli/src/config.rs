//! Scenario files (TOML).

use std::path::Path;
use std::sync::Arc;

use finsler_core::gauge::{DualGauge, Gauge};
use finsler_core::geometry::{build_region, ConvexCone, ObstacleDomain, ObstacleShape, Region};
use finsler_core::identities::TraceMode;
use finsler_core::solver::DirichletData;
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Solve,
    Asymptotics,
    Pohozaev,
    Rigidity,
    Isoperimetry,
    Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConeSpec {
    WholeSpace,
    /// `{⟨n,x⟩ ≥ 0}` with inward normal `n`.
    HalfPlane { normal: [f64; 2] },
    QuarterPlane,
    /// Directions `θ ∈ [orientation, orientation + opening]`, radians.
    Sector {
        opening: f64,
        #[serde(default)]
        orientation: f64,
    },
}

fn origin() -> [f64; 2] {
    [0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObstacleSpec {
    WulffBall {
        #[serde(default = "origin")]
        center: [f64; 2],
        radius: f64,
    },
    EuclideanBall {
        #[serde(default = "origin")]
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        #[serde(default = "origin")]
        center: [f64; 2],
        semi_axes: [f64; 2],
    },
    PerturbedWulffBall {
        #[serde(default = "origin")]
        center: [f64; 2],
        radius: f64,
        amplitude: f64,
        frequency: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    /// Base truncation radius `R`; the schedule is `R, 2R, 4R` unless `radii` is set.
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    /// Mesh sizes; `run` and `probe` use the first.
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub gamma0: f64,
    pub gamma_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    Wulff,
    NonWulff,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigiditySpec {
    /// A verdict different from this is a check failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
}

fn default_seed() -> u64 {
    finsler_core::wulff::DEFAULT_MC_SEED
}

fn default_exponent() -> f64 {
    2.0
}

fn default_checks() -> Vec<Check> {
    vec![Check::Solve]
}

fn default_trace() -> String {
    TraceMode::ConsistentFlux.name().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    /// Gauge grammar, e.g. `"lp 4"`.
    pub gauge: String,
    #[serde(default = "default_checks")]
    pub checks: Vec<Check>,
    /// `"consistent-flux"` or `"one-sided"`.
    #[serde(default = "default_trace")]
    pub trace_mode: String,
    pub cone: ConeSpec,
    pub obstacle: ObstacleSpec,
    pub mesh: MeshSpec,
    /// Dirichlet data; defaults to `(0, ln R)` for each truncation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSpec>,
    #[serde(default)]
    pub rigidity: RigiditySpec,
}

/// A scenario with every spec turned into core objects.
#[derive(Debug, Clone)]
pub struct Built {
    pub gauge: Gauge,
    pub dual: Arc<DualGauge>,
    pub cone: ConvexCone,
    pub obstacle: ObstacleShape,
    pub radii: Vec<f64>,
    pub trace_mode: TraceMode,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            RunError::Config(m) => RunError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Radii resolved, checks sorted and deduplicated, `solve` included.
    pub fn normalized(&self) -> Self {
        let mut s = self.clone();
        s.mesh.radii = Some(self.radii());
        s.checks.push(Check::Solve);
        s.checks.sort();
        s.checks.dedup();
        s
    }

    /// TOML text of [`Scenario::normalized`].
    pub fn normal_form(&self) -> String {
        toml::to_string(&self.normalized()).expect("scenarios serialize")
    }

    pub fn radii(&self) -> Vec<f64> {
        self.mesh.radii.clone().unwrap_or_else(|| {
            let r = self.mesh.radius;
            vec![r, 2.0 * r, 4.0 * r]
        })
    }

    pub fn runs(&self, check: Check) -> bool {
        check == Check::Solve || self.checks.contains(&check)
    }

    pub fn data_for(&self, radius: f64) -> DirichletData {
        match self.data {
            Some(d) => DirichletData { gamma0: d.gamma0, gamma_r: d.gamma_r },
            None => DirichletData::logarithmic(radius),
        }
    }

    /// Validates every spec by building it; geometric preconditions are
    /// checked per truncation radius.
    pub fn build(&self) -> Result<Built, RunError> {
        let cfg = |m: String| RunError::Config(format!("scenario `{}`: {m}", self.name));
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(cfg(format!("name `{}` is not a plain directory name", self.name)));
        }
        if !(self.exponent.is_finite() && self.exponent > 1.0) {
            return Err(cfg(format!("exponent p must exceed 1, got {}", self.exponent)));
        }
        if self.mesh.h.is_empty() || self.mesh.h.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(cfg(format!("mesh sizes must be a non-empty list of positive numbers, got {:?}", self.mesh.h)));
        }
        let trace_mode = TraceMode::from_name(&self.trace_mode)
            .ok_or_else(|| cfg(format!("unknown trace mode `{}`", self.trace_mode)))?;
        if self.runs(Check::Rigidity) && self.exponent != 2.0 {
            return Err(cfg("the rigidity check needs exponent = 2".into()));
        }
        let radii = self.radii();
        if self.runs(Check::Asymptotics) || self.runs(Check::Rigidity) {
            if radii.len() < 2 {
                return Err(cfg("asymptotics and rigidity need at least two truncation radii".into()));
            }
            if self.data.is_some() {
                return Err(cfg("asymptotics and rigidity use the logarithmic data; remove [data]".into()));
            }
        }
        let gauge = Gauge::parse(&self.gauge, 2).map_err(|e| cfg(e.to_string()))?;
        let cone = match &self.cone {
            ConeSpec::WholeSpace => ConvexCone::whole_space(2),
            ConeSpec::HalfPlane { normal } => ConvexCone::half_space(normal.to_vec()),
            ConeSpec::QuarterPlane => Ok(ConvexCone::quarter_plane()),
            ConeSpec::Sector { opening, orientation } => ConvexCone::sector(*opening, *orientation),
        }
        .map_err(|e| cfg(e.to_string()))?;
        let obstacle = match self.obstacle {
            ObstacleSpec::WulffBall { center, radius } => ObstacleShape::WulffBall { center, radius },
            ObstacleSpec::EuclideanBall { center, radius } => ObstacleShape::EuclideanBall { center, radius },
            ObstacleSpec::Ellipse { center, semi_axes } => ObstacleShape::Ellipse { center, semi_axes },
            ObstacleSpec::PerturbedWulffBall { center, radius, amplitude, frequency } => {
                ObstacleShape::PerturbedWulffBall { center, radius, amplitude, frequency }
            }
        };
        let dual = Arc::new(DualGauge::new(gauge.clone()));
        let built = Built { gauge, dual, cone, obstacle, radii, trace_mode };
        for r in &built.radii {
            built.region(*r).map_err(|e| RunError::Geometry(format!("scenario `{}`: {e}", self.name)))?;
        }
        Ok(built)
    }
}

impl Built {
    pub fn region(&self, radius: f64) -> Result<Region, finsler_core::GeometryError> {
        let obstacle = ObstacleDomain::new(self.obstacle.clone(), self.dual.clone())?;
        build_region(self.cone.clone(), obstacle, radius)
    }

    /// Closed-form solution `(u, ∇u)` when one is known: constant data, or a
    /// vertex-centered Wulff ball with the radial `p`-harmonic profile.
    pub fn exact_solution(&self, scenario: &Scenario, radius: f64) -> Option<impl Fn([f64; 2]) -> (f64, [f64; 2]) + '_> {
        let data = scenario.data_for(radius);
        let p = scenario.exponent;
        let r0 = match self.obstacle {
            ObstacleShape::WulffBall { center: [0.0, 0.0], radius } => Some(radius),
            _ => None,
        };
        if data.gamma0 != data.gamma_r && r0.is_none() {
            return None;
        }
        let r0 = r0.unwrap_or(1.0);
        // radial profile φ(H₀): ln for p = 2, H₀^{(p−2)/(p−1)} otherwise
        let k = (p - 2.0) / (p - 1.0);
        let phi = move |t: f64| if p == 2.0 { t.ln() } else { t.powf(k) };
        let dphi = move |t: f64| if p == 2.0 { 1.0 / t } else { k * t.powf(k - 1.0) };
        let scale = if data.gamma0 == data.gamma_r { 0.0 } else { (data.gamma_r - data.gamma0) / (phi(radius) - phi(r0)) };
        Some(move |x: [f64; 2]| {
            if scale == 0.0 {
                return (data.gamma0, [0.0, 0.0]);
            }
            let v = self.dual.eval_point(&x).expect("planar point");
            let d = scale * dphi(v.value);
            (data.gamma0 + scale * (phi(v.value) - phi(r0)), [d * v.gradient[0], d * v.gradient[1]])
        })
    }
}
