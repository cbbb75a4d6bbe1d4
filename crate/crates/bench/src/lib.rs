//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use finsler_core::gauge::{DualGauge, Gauge};
use finsler_core::geometry::{build_region, ConvexCone, ObstacleDomain, ObstacleShape, Region};

/// `{H₀ > 1} ∩ {H₀ < radius}` in the quarter plane for the ℓ⁴ gauge.
pub fn l4_quarter_region(radius: f64) -> Region {
    let dual = Arc::new(DualGauge::new(Gauge::lp(2, 4.0).expect("valid gauge")));
    let ball = ObstacleShape::WulffBall { center: [0.0, 0.0], radius: 1.0 };
    build_region(ConvexCone::quarter_plane(), ObstacleDomain::new(ball, dual).expect("valid obstacle"), radius)
        .expect("valid region")
}
