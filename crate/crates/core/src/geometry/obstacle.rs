use std::f64::consts::TAU;
use std::sync::Arc;

use crate::gauge::DualGauge;

use super::{GeometryError, Result};

/// Planar obstacle shapes. Every shape is star-shaped about its center and
/// is described by a polar radius `ρ(t)` about it.
#[derive(Debug, Clone, PartialEq)]
pub enum ObstacleShape {
    /// `{H₀(x − c) < R}`.
    WulffBall { center: [f64; 2], radius: f64 },
    EuclideanBall { center: [f64; 2], radius: f64 },
    /// Axis-aligned ellipse.
    Ellipse { center: [f64; 2], semi_axes: [f64; 2] },
    /// Wulff ball with polar radius multiplied by `1 + amplitude·cos(frequency·t)`.
    PerturbedWulffBall { center: [f64; 2], radius: f64, amplitude: f64, frequency: u32 },
}

impl ObstacleShape {
    pub fn center(&self) -> [f64; 2] {
        match self {
            Self::WulffBall { center, .. }
            | Self::EuclideanBall { center, .. }
            | Self::Ellipse { center, .. }
            | Self::PerturbedWulffBall { center, .. } => *center,
        }
    }

    /// The dilation `t·E` about the origin.
    pub fn scaled(&self, t: f64) -> Self {
        let s = |c: &[f64; 2]| [t * c[0], t * c[1]];
        match self {
            Self::WulffBall { center, radius } => Self::WulffBall { center: s(center), radius: t * radius },
            Self::EuclideanBall { center, radius } => Self::EuclideanBall { center: s(center), radius: t * radius },
            Self::Ellipse { center, semi_axes } => Self::Ellipse { center: s(center), semi_axes: s(semi_axes) },
            Self::PerturbedWulffBall { center, radius, amplitude, frequency } => Self::PerturbedWulffBall {
                center: s(center),
                radius: t * radius,
                amplitude: *amplitude,
                frequency: *frequency,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GeometryError::InvalidObstacle(msg));
        let c = self.center();
        if c.iter().any(|v| !v.is_finite()) {
            return bad("obstacle center must be finite".into());
        }
        match self {
            Self::WulffBall { radius, .. } | Self::EuclideanBall { radius, .. } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad(format!("obstacle radius must be positive, got {radius}"));
                }
            }
            Self::Ellipse { semi_axes, .. } => {
                if semi_axes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                    return bad(format!("ellipse semi-axes must be positive, got {semi_axes:?}"));
                }
            }
            Self::PerturbedWulffBall { radius, amplitude, frequency, .. } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad(format!("obstacle radius must be positive, got {radius}"));
                }
                if !(amplitude.is_finite() && amplitude.abs() < 1.0) {
                    return bad(format!("perturbation amplitude must lie in (-1, 1), got {amplitude}"));
                }
                if *frequency == 0 {
                    return bad("perturbation frequency must be at least 1".into());
                }
            }
        }
        Ok(())
    }
}

/// An obstacle `Ω` together with the dual gauge that defines its Wulff shapes.
#[derive(Debug, Clone)]
pub struct ObstacleDomain {
    shape: ObstacleShape,
    dual: Arc<DualGauge>,
}

impl ObstacleDomain {
    pub fn new(shape: ObstacleShape, dual: Arc<DualGauge>) -> Result<Self> {
        shape.validate()?;
        if dual.dim() != 2 {
            return Err(GeometryError::Unsupported(
                "obstacles are implemented for planar gauges only".into(),
            ));
        }
        let domain = Self { shape, dual };
        // the parametrization must be evaluable everywhere
        for j in 0..16 {
            domain.polar_radius(TAU * j as f64 / 16.0)?;
        }
        Ok(domain)
    }

    pub fn shape(&self) -> &ObstacleShape {
        &self.shape
    }

    pub fn dual(&self) -> &Arc<DualGauge> {
        &self.dual
    }

    pub fn center(&self) -> [f64; 2] {
        self.shape.center()
    }

    fn wulff_radius(&self, t: f64, radius: f64) -> Result<(f64, f64)> {
        let w = [t.cos(), t.sin()];
        let p = self.dual.eval_point(&w)?;
        let rho = radius / p.value;
        // d/dt R/H₀(ω(t)) = −R⟨∇H₀(ω), ω⊥⟩/H₀²
        let dot = p.gradient[0] * -w[1] + p.gradient[1] * w[0];
        Ok((rho, -radius * dot / (p.value * p.value)))
    }

    /// `(ρ(t), ρ'(t))` about the center.
    pub fn polar(&self, t: f64) -> Result<(f64, f64)> {
        Ok(match &self.shape {
            ObstacleShape::WulffBall { radius, .. } => self.wulff_radius(t, *radius)?,
            ObstacleShape::EuclideanBall { radius, .. } => (*radius, 0.0),
            ObstacleShape::Ellipse { semi_axes: [a, b], .. } => {
                let (s, c) = t.sin_cos();
                let d = b * b * c * c + a * a * s * s;
                let rho = a * b / d.sqrt();
                (rho, -a * b * (a * a - b * b) * s * c / d.powf(1.5))
            }
            ObstacleShape::PerturbedWulffBall { radius, amplitude, frequency, .. } => {
                let (rho, drho) = self.wulff_radius(t, *radius)?;
                let k = *frequency as f64;
                let m = 1.0 + amplitude * (k * t).cos();
                (rho * m, drho * m - rho * amplitude * k * (k * t).sin())
            }
        })
    }

    pub fn polar_radius(&self, t: f64) -> Result<f64> {
        Ok(self.polar(t)?.0)
    }

    /// `γ(t) = c + ρ(t)ω(t)`.
    pub fn boundary_point(&self, t: f64) -> Result<[f64; 2]> {
        let c = self.center();
        let r = self.polar_radius(t)?;
        Ok([c[0] + r * t.cos(), c[1] + r * t.sin()])
    }

    /// `γ'(t)`; counterclockwise orientation.
    pub fn boundary_tangent(&self, t: f64) -> Result<[f64; 2]> {
        let (r, dr) = self.polar(t)?;
        let (s, c) = t.sin_cos();
        Ok([dr * c - r * s, dr * s + r * c])
    }

    /// Outward unit normal at `γ(t)`.
    pub fn outward_normal(&self, t: f64) -> Result<[f64; 2]> {
        let d = self.boundary_tangent(t)?;
        let len = d[0].hypot(d[1]);
        Ok([d[1] / len, -d[0] / len])
    }

    /// `x ∈ Ω` (open set).
    pub fn contains(&self, x: [f64; 2]) -> Result<bool> {
        let c = self.center();
        let d = [x[0] - c[0], x[1] - c[1]];
        let r = d[0].hypot(d[1]);
        if r == 0.0 {
            return Ok(true);
        }
        Ok(r < self.polar_radius(d[1].atan2(d[0]))?)
    }

    /// Signed radial defect `|x−c| − ρ(arg(x−c))`: negative inside.
    fn radial_defect(&self, x: [f64; 2]) -> Result<f64> {
        let c = self.center();
        let d = [x[0] - c[0], x[1] - c[1]];
        let r = d[0].hypot(d[1]);
        if r == 0.0 {
            return Ok(-self.polar_radius(0.0)?);
        }
        Ok(r - self.polar_radius(d[1].atan2(d[0]))?)
    }

    /// Upper bound for `max_t ρ(t)`, sampled.
    pub fn max_polar_radius(&self) -> Result<f64> {
        let mut m: f64 = 0.0;
        for j in 0..720 {
            m = m.max(self.polar_radius(TAU * j as f64 / 720.0)?);
        }
        Ok(m)
    }

    /// Distance `r` along the ray `r·(cos θ, sin θ)` from the origin to `∂Ω`.
    ///
    /// Requires the origin to lie inside `Ω` and the ray to cross `∂Ω` once.
    pub fn ray_crossing(&self, theta: f64) -> Result<f64> {
        self.ray_crossing_from([0.0, 0.0], theta)
    }

    /// Distance `r` along the ray `pole + r·(cos θ, sin θ)` to `∂Ω`.
    pub fn ray_crossing_from(&self, pole: [f64; 2], theta: f64) -> Result<f64> {
        let w = [theta.cos(), theta.sin()];
        let c = self.center();
        if c == pole {
            // polar about the pole already
            return self.polar_radius(theta);
        }
        if !self.contains(pole)? {
            return Err(GeometryError::Unsupported(
                "the cone vertex must lie inside the obstacle for ray parametrization".into(),
            ));
        }
        let hi = (c[0] - pole[0]).hypot(c[1] - pole[1]) + 1.05 * self.max_polar_radius()?;
        let f = |r: f64| self.radial_defect([pole[0] + r * w[0], pole[1] + r * w[1]]);
        // a single sign change along the ray
        let samples = 64;
        let mut changes = 0;
        let mut prev = f(0.0)?;
        let mut bracket = (0.0, hi);
        for i in 1..=samples {
            let r = hi * i as f64 / samples as f64;
            let v = f(r)?;
            if (prev < 0.0) != (v < 0.0) {
                changes += 1;
                bracket = (hi * (i - 1) as f64 / samples as f64, r);
            }
            prev = v;
        }
        if changes != 1 {
            return Err(GeometryError::Unsupported(format!(
                "obstacle is not star-shaped about the cone vertex (ray at θ={theta:.6} crosses the boundary {changes} times)"
            )));
        }
        let (mut lo, mut hi) = bracket;
        while hi - lo > 1e-15 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if f(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if mid == lo && mid == hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `max H₀(x)` over sampled boundary points: the radius of the smallest
    /// origin-centered Wulff ball containing `Ω̄`.
    pub fn outer_wulff_radius(&self) -> Result<f64> {
        let mut m: f64 = 0.0;
        for j in 0..2048 {
            let p = self.boundary_point(TAU * j as f64 / 2048.0)?;
            m = m.max(self.dual.eval(&p)?);
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::Gauge;

    fn dual(g: Gauge) -> Arc<DualGauge> {
        Arc::new(DualGauge::new(g))
    }

    #[test]
    fn polar_derivative_matches_differences() {
        let d = dual(Gauge::lp(2, 4.0).unwrap());
        let shapes = [
            ObstacleShape::WulffBall { center: [0.0, 0.0], radius: 1.5 },
            ObstacleShape::Ellipse { center: [0.1, 0.0], semi_axes: [2.0, 1.0] },
            ObstacleShape::PerturbedWulffBall {
                center: [0.0, 0.0],
                radius: 1.0,
                amplitude: 0.2,
                frequency: 3,
            },
        ];
        for s in shapes {
            let o = ObstacleDomain::new(s, d.clone()).unwrap();
            for t in [0.3, 1.1, 2.9, 4.4] {
                let h = 1e-6;
                let fd = (o.polar_radius(t + h).unwrap() - o.polar_radius(t - h).unwrap()) / (2.0 * h);
                assert!((fd - o.polar(t).unwrap().1).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn wulff_ball_boundary_is_on_dual_sphere() {
        let d = dual(Gauge::shifted(vec![0.3, -0.2]).unwrap());
        let o = ObstacleDomain::new(
            ObstacleShape::WulffBall { center: [0.0, 0.0], radius: 2.0 },
            d.clone(),
        )
        .unwrap();
        for t in [0.0, 1.0, 2.5, 5.0] {
            let p = o.boundary_point(t).unwrap();
            assert!((d.eval(&p).unwrap() - 2.0).abs() < 1e-13);
        }
        assert!((o.outer_wulff_radius().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ray_crossing_for_offset_obstacles() {
        let d = dual(Gauge::euclidean(2).unwrap());
        let o = ObstacleDomain::new(
            ObstacleShape::EuclideanBall { center: [0.3, 0.0], radius: 1.0 },
            d,
        )
        .unwrap();
        // along +x the boundary is at 1.3, along −x at 0.7
        assert!((o.ray_crossing(0.0).unwrap() - 1.3).abs() < 1e-13);
        assert!((o.ray_crossing(std::f64::consts::PI).unwrap() - 0.7).abs() < 1e-13);
        let outside = ObstacleDomain::new(
            ObstacleShape::EuclideanBall { center: [3.0, 0.0], radius: 1.0 },
            dual(Gauge::euclidean(2).unwrap()),
        )
        .unwrap();
        assert!(matches!(outside.ray_crossing(0.0), Err(GeometryError::Unsupported(_))));
    }

    #[test]
    fn rejects_invalid_shapes() {
        let d = dual(Gauge::euclidean(2).unwrap());
        assert!(ObstacleDomain::new(ObstacleShape::WulffBall { center: [0.0, 0.0], radius: -1.0 }, d.clone()).is_err());
        assert!(ObstacleDomain::new(
            ObstacleShape::Ellipse { center: [0.0, 0.0], semi_axes: [1.0, 0.0] },
            d.clone()
        )
        .is_err());
        assert!(ObstacleDomain::new(
            ObstacleShape::PerturbedWulffBall { center: [0.0, 0.0], radius: 1.0, amplitude: 1.2, frequency: 2 },
            d
        )
        .is_err());
    }
}
