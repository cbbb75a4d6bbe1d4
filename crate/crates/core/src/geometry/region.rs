use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::sync::Arc;

use crate::gauge::DualGauge;

use super::{ConvexCone, GeometryError, ObstacleDomain, Result};

/// The truncated annular region `Σ ∩ (B_R^{H₀} \ Ω̄)`.
#[derive(Debug, Clone)]
pub struct Region {
    cone: ConvexCone,
    obstacle: ObstacleDomain,
    radius: f64,
}

impl Region {
    pub fn cone(&self) -> &ConvexCone {
        &self.cone
    }

    pub fn obstacle(&self) -> &ObstacleDomain {
        &self.obstacle
    }

    /// Truncation radius `R` (in `H₀` units).
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dual(&self) -> &Arc<DualGauge> {
        self.obstacle.dual()
    }

    /// Whether `x` lies in the closed region.
    pub fn contains(&self, x: [f64; 2]) -> Result<bool> {
        Ok(self.cone.contains(&x)
            && self.dual().eval(&x)? <= self.radius * (1.0 + 1e-12)
            && !self.obstacle.contains(x)?)
    }
}

const RASTER_ANGLES: usize = 512;
const RASTER_RADII: usize = 256;

/// Validates and assembles a truncated region.
pub fn build_region(cone: ConvexCone, obstacle: ObstacleDomain, radius: f64) -> Result<Region> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(GeometryError::TruncationRadius(radius));
    }
    if cone.dim() != 2 {
        return Err(GeometryError::Unsupported("regions are implemented in the plane only".into()));
    }
    let outer = obstacle.outer_wulff_radius()?;
    if outer >= radius {
        return Err(GeometryError::ObstacleNotContained { outer, radius });
    }
    let region = Region { cone, obstacle, radius };
    // Γ₀ = Σ ∩ ∂Ω must have positive length
    let mut inside = 0;
    for j in 0..1024 {
        let p = region.obstacle.boundary_point(TAU * j as f64 / 1024.0)?;
        if region.cone.margin(&p) > 1e-12 * p[0].hypot(p[1]).max(1.0) {
            inside += 1;
        }
    }
    if inside == 0 {
        return Err(GeometryError::EmptyGamma0);
    }
    let components = count_components(&region)?;
    if components != 1 {
        return Err(GeometryError::Disconnected { components });
    }
    Ok(region)
}

/// Connected components of the region on a polar raster in
/// `(θ, H₀(x)/R)` coordinates.
fn count_components(region: &Region) -> Result<usize> {
    let (start, span, periodic) = match region.cone.angular_range() {
        None => (0.0, TAU, true),
        Some(r) => (r.start, r.opening, false),
    };
    let dual = region.dual();
    let mut free = vec![false; RASTER_ANGLES * RASTER_RADII];
    for i in 0..RASTER_ANGLES {
        let theta = start + span * (i as f64 + 0.5) / RASTER_ANGLES as f64;
        let w = [theta.cos(), theta.sin()];
        let scale = region.radius / dual.eval(&w)?;
        for j in 0..RASTER_RADII {
            let t = (j as f64 + 0.5) / RASTER_RADII as f64;
            let x = [t * scale * w[0], t * scale * w[1]];
            free[i * RASTER_RADII + j] = !region.obstacle.contains(x)?;
        }
    }
    let mut label = vec![usize::MAX; free.len()];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for seed in 0..free.len() {
        if !free[seed] || label[seed] != usize::MAX {
            continue;
        }
        label[seed] = components;
        queue.push_back(seed);
        while let Some(cell) = queue.pop_front() {
            let (i, j) = (cell / RASTER_RADII, cell % RASTER_RADII);
            let mut neighbours = Vec::with_capacity(4);
            if j > 0 {
                neighbours.push(i * RASTER_RADII + j - 1);
            }
            if j + 1 < RASTER_RADII {
                neighbours.push(i * RASTER_RADII + j + 1);
            }
            if i > 0 {
                neighbours.push((i - 1) * RASTER_RADII + j);
            } else if periodic {
                neighbours.push((RASTER_ANGLES - 1) * RASTER_RADII + j);
            }
            if i + 1 < RASTER_ANGLES {
                neighbours.push((i + 1) * RASTER_RADII + j);
            } else if periodic {
                neighbours.push(j);
            }
            for n in neighbours {
                if free[n] && label[n] == usize::MAX {
                    label[n] = components;
                    queue.push_back(n);
                }
            }
        }
        components += 1;
    }
    Ok(components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::Gauge;
    use crate::geometry::ObstacleShape;

    fn unit_disk() -> ObstacleDomain {
        ObstacleDomain::new(
            ObstacleShape::WulffBall { center: [0.0, 0.0], radius: 1.0 },
            Arc::new(DualGauge::new(Gauge::euclidean(2).unwrap())),
        )
        .unwrap()
    }

    #[test]
    fn region_examples() {
        assert!(build_region(ConvexCone::quarter_plane(), unit_disk(), 8.0).is_ok());
        assert!(matches!(
            build_region(ConvexCone::quarter_plane(), unit_disk(), 0.5),
            Err(GeometryError::ObstacleNotContained { .. })
        ));
        let ellipse = ObstacleDomain::new(
            ObstacleShape::Ellipse { center: [0.0, 0.0], semi_axes: [2.0, 1.0] },
            Arc::new(DualGauge::new(Gauge::euclidean(2).unwrap())),
        )
        .unwrap();
        assert!(build_region(ConvexCone::whole_space(2).unwrap(), ellipse, 16.0).is_ok());
    }

    #[test]
    fn rejects_bad_radius_with_named_error() {
        let err = build_region(ConvexCone::quarter_plane(), unit_disk(), -2.0).unwrap_err();
        assert!(err.to_string().contains("truncation radius"));
    }

    #[test]
    fn rejects_obstacle_outside_cone() {
        let far = ObstacleDomain::new(
            ObstacleShape::EuclideanBall { center: [-3.0, -3.0], radius: 1.0 },
            Arc::new(DualGauge::new(Gauge::euclidean(2).unwrap())),
        )
        .unwrap();
        assert!(matches!(
            build_region(ConvexCone::quarter_plane(), far, 10.0),
            Err(GeometryError::EmptyGamma0)
        ));
    }

    #[test]
    fn detects_disconnected_annulus() {
        // a disk crossing both walls of the quarter plane but missing the
        // vertex traps a pocket at the corner
        let pocket = ObstacleDomain::new(
            ObstacleShape::EuclideanBall { center: [1.5, 1.5], radius: 1.8 },
            Arc::new(DualGauge::new(Gauge::euclidean(2).unwrap())),
        )
        .unwrap();
        assert!(matches!(
            build_region(ConvexCone::quarter_plane(), pocket, 6.0),
            Err(GeometryError::Disconnected { components: 2 })
        ));
    }
}
