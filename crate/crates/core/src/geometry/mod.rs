//! Convex cones, obstacles, truncated regions and their triangulations.
//!
//! Interfaces take `N`-vectors where the math is dimension-free; obstacles,
//! regions and meshes are planar.

mod cone;
mod mesh;
mod mesher;
mod obstacle;
mod region;

pub use cone::{AngularRange, ConvexCone, Membership};
pub use mesh::{BoundaryTag, Facet, Mesh, MeshStats};
pub use mesher::mesh_region;
pub use obstacle::{ObstacleDomain, ObstacleShape};
pub use region::{build_region, Region};

use crate::gauge::{DualGauge, GaugeError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid cone: {0}")]
    InvalidCone(String),
    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),
    #[error("truncation radius must be positive and finite, got {0}")]
    TruncationRadius(f64),
    #[error("obstacle is not strictly inside the truncation ball: max H0 on its boundary is {outer}, truncation radius is {radius}")]
    ObstacleNotContained { outer: f64, radius: f64 },
    #[error("the obstacle boundary does not meet the open cone (Γ₀ is empty)")]
    EmptyGamma0,
    #[error("the truncated region is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("mesh size must be positive and finite, got {0}")]
    InvalidMeshSize(f64),
    #[error("mesh size h={h} is too coarse for this region (must be below {limit})")]
    MeshTooCoarse { h: f64, limit: f64 },
    #[error("mesh quality floor not reached: minimum angle {min_angle:.2}° near ({:.4}, {:.4})", at[0], at[1])]
    QualityFloor { min_angle: f64, at: [f64; 2] },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("mesh file line {line}: {reason}")]
    MeshParse { line: usize, reason: String },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// `H₀(x − center) < R`.
pub fn wulff_ball_contains(d: &DualGauge, center: &[f64], radius: f64, x: &[f64]) -> Result<bool> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(GeometryError::InvalidObstacle(format!("Wulff ball radius must be positive, got {radius}")));
    }
    let diff: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    Ok(d.eval(&diff)? < radius)
}
