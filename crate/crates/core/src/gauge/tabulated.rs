use std::f64::consts::TAU;

use super::{GaugeError, Result};

/// Planar unit sphere `{H = 1}` given by samples `r(φᵢ)`.
///
/// `H(ξ) = |ξ|·g(φ)` with `g = 1/r` interpolated by a periodic monotone cubic
/// (Fritsch–Carlson slopes), so `H` is C¹ and need not be even.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSphere {
    angles: Vec<f64>,
    radii: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl TabulatedSphere {
    pub fn new(angles: Vec<f64>, radii: Vec<f64>) -> Result<Self> {
        let n = angles.len();
        if n < 4 || radii.len() != n {
            return Err(GaugeError::InvalidParameter(
                "tabulated sphere needs at least 4 matching angle/radius samples".into(),
            ));
        }
        if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(GaugeError::InvalidParameter("tabulated radii must be positive".into()));
        }
        if angles.iter().any(|a| !a.is_finite())
            || angles[0] < 0.0
            || angles[n - 1] >= TAU
            || angles.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(GaugeError::InvalidParameter(
                "tabulated angles must increase strictly within [0, 2π)".into(),
            ));
        }
        let values: Vec<f64> = radii.iter().map(|r| 1.0 / r).collect();
        let step = |i: usize| {
            if i + 1 < n {
                angles[i + 1] - angles[i]
            } else {
                angles[0] + TAU - angles[n - 1]
            }
        };
        let secant = |i: usize| (values[(i + 1) % n] - values[i]) / step(i);
        let mut slopes = vec![0.0; n];
        for i in 0..n {
            let prev = (i + n - 1) % n;
            let (dl, dr) = (secant(prev), secant(i));
            if dl * dr <= 0.0 {
                continue;
            }
            let (hl, hr) = (step(prev), step(i));
            let w1 = 2.0 * hr + hl;
            let w2 = hr + 2.0 * hl;
            slopes[i] = (w1 + w2) / (w1 / dl + w2 / dr);
        }
        let sphere = Self { angles, radii, values, slopes };
        sphere.check_convex()?;
        Ok(sphere)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Sublevel sets must be convex: `g + g'' ≥ 0` on a fine sampling. The
    /// cubic has piecewise-linear `g''`, so checking nodes and interval
    /// endpoints from both sides suffices.
    fn check_convex(&self) -> Result<()> {
        let n = self.angles.len();
        for i in 0..n {
            let h = self.interval_len(i);
            for frac in [1e-9, 0.5, 1.0 - 1e-9] {
                let phi = self.angles[i] + frac * h;
                let (g, _, g2) = self.eval_angle(phi);
                if g + g2 < -1e-12 * g {
                    return Err(GaugeError::InvalidParameter(format!(
                        "tabulated sphere is not convex near angle {phi:.6}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn interval_len(&self, i: usize) -> f64 {
        let n = self.angles.len();
        if i + 1 < n {
            self.angles[i + 1] - self.angles[i]
        } else {
            self.angles[0] + TAU - self.angles[n - 1]
        }
    }

    /// `(g, g', g'')` at angle `phi`.
    fn eval_angle(&self, phi: f64) -> (f64, f64, f64) {
        let n = self.angles.len();
        let mut t = (phi - self.angles[0]).rem_euclid(TAU) + self.angles[0];
        // locate interval i with angles[i] <= t < angles[i+1] (wrapping)
        let i = match self.angles.partition_point(|a| *a <= t) {
            0 => n - 1,
            k => k - 1,
        };
        if t < self.angles[i] {
            t += TAU;
        }
        let h = self.interval_len(i);
        let s = (t - self.angles[i]) / h;
        let (y0, y1) = (self.values[i], self.values[(i + 1) % n]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[(i + 1) % n] * h);
        let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
        let h10 = s * s * s - 2.0 * s * s + s;
        let h01 = -2.0 * s * s * s + 3.0 * s * s;
        let h11 = s * s * s - s * s;
        let d00 = 6.0 * s * s - 6.0 * s;
        let d10 = 3.0 * s * s - 4.0 * s + 1.0;
        let d01 = -6.0 * s * s + 6.0 * s;
        let d11 = 3.0 * s * s - 2.0 * s;
        let e00 = 12.0 * s - 6.0;
        let e10 = 6.0 * s - 4.0;
        let e01 = -12.0 * s + 6.0;
        let e11 = 6.0 * s - 2.0;
        let g = h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
        let g1 = (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / h;
        let g2 = (e00 * y0 + e10 * m0 + e01 * y1 + e11 * m1) / (h * h);
        (g, g1, g2)
    }

    pub fn value(&self, xi: [f64; 2]) -> f64 {
        let r = xi[0].hypot(xi[1]);
        if r == 0.0 {
            return 0.0;
        }
        r * self.eval_angle(xi[1].atan2(xi[0])).0
    }

    pub fn gradient(&self, xi: [f64; 2]) -> [f64; 2] {
        let r = xi[0].hypot(xi[1]);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let phi = xi[1].atan2(xi[0]);
        let (g, g1, _) = self.eval_angle(phi);
        let (c, s) = (xi[0] / r, xi[1] / r);
        [g * c - g1 * s, g * s + g1 * c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_samples_reproduce_euclidean_norm() {
        let n = 16;
        let angles = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
        let t = TabulatedSphere::new(angles, vec![2.0; n]).unwrap();
        assert!((t.value([3.0, 4.0]) - 2.5).abs() < 1e-14);
        let g = t.gradient([0.0, -1.0]);
        assert!((g[0]).abs() < 1e-14 && (g[1] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn interpolates_samples_and_is_periodic() {
        let n = 12;
        let angles: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
        let radii: Vec<f64> =
            angles.iter().map(|a| 1.0 / (1.0 + 0.1 * (2.0 * a).cos() + 0.05 * a.sin())).collect();
        let t = TabulatedSphere::new(angles.clone(), radii.clone()).unwrap();
        for (a, r) in angles.iter().zip(&radii) {
            let h = t.value([a.cos(), a.sin()]);
            assert!((h - 1.0 / r).abs() < 1e-12);
        }
        let near = t.value([1.0, -1e-12]);
        let far = t.value([1.0, 1e-12]);
        assert!((near - far).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_convex_or_malformed_samples() {
        let angles: Vec<f64> = (0..8).map(|i| TAU * i as f64 / 8.0).collect();
        let spiky = vec![1.0, 3.0, 1.0, 3.0, 1.0, 3.0, 1.0, 3.0];
        assert!(TabulatedSphere::new(angles.clone(), spiky).is_err());
        assert!(TabulatedSphere::new(angles.clone(), vec![1.0; 7]).is_err());
        assert!(TabulatedSphere::new(vec![0.0, 1.0, 0.5, 2.0], vec![1.0; 4]).is_err());
        let mut neg = vec![1.0; 8];
        neg[3] = -1.0;
        assert!(TabulatedSphere::new(angles, neg).is_err());
    }
}
