use super::{Gauge, GaugeError, Result};

/// `a_ε(ξ) = (H²+ε²)^{(p-2)/2} H ∇H`, the gradient of the energy density
/// `W_ε(ξ) = (1/p)(H²+ε²)^{p/2}`. With `ε = 0` this is `H^{p-1}∇H`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxMap {
    gauge: Gauge,
    exponent: f64,
    regularization: f64,
}

impl FluxMap {
    pub fn new(gauge: Gauge, exponent: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 1.0) {
            return Err(GaugeError::InvalidParameter(format!(
                "flux exponent p must exceed 1, got {exponent}"
            )));
        }
        Ok(Self { gauge, exponent, regularization: 0.0 })
    }

    pub fn with_regularization(mut self, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(GaugeError::InvalidParameter(format!(
                "regularization must be non-negative, got {eps}"
            )));
        }
        self.regularization = eps;
        Ok(self)
    }

    pub fn gauge(&self) -> &Gauge {
        &self.gauge
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    pub fn dim(&self) -> usize {
        self.gauge.dim()
    }

    /// `s^{p-2}` with `s² = H² + ε²`; zero when both vanish and `p > 2`.
    fn weight(&self, h: f64) -> f64 {
        let s2 = h * h + self.regularization * self.regularization;
        if s2 == 0.0 {
            return if self.exponent >= 2.0 { 0.0 } else { f64::INFINITY };
        }
        s2.powf(0.5 * (self.exponent - 2.0))
    }

    /// `a_ε(ξ)`; `a_ε(0) = 0`.
    pub fn apply(&self, xi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(xi, &mut out);
        out
    }

    pub fn apply_into(&self, xi: &[f64], out: &mut [f64]) {
        let h = self.gauge.value(xi);
        if h == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        self.gauge.gradient_into(xi, out);
        let w = self.weight(h) * h;
        out.iter_mut().for_each(|v| *v *= w);
    }

    pub fn apply2(&self, xi: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        self.apply_into(&xi, &mut out);
        out
    }

    /// `W_ε(ξ) = (1/p)(H²+ε²)^{p/2}`.
    pub fn energy_density(&self, xi: &[f64]) -> f64 {
        let h = self.gauge.value(xi);
        (h * h + self.regularization * self.regularization).powf(0.5 * self.exponent) / self.exponent
    }

    /// Row-major Jacobian `Da_ε(ξ) = D²W_ε(ξ)`:
    /// `s^{p-2}(H D²H + ∇H∇Hᵀ) + (p-2)s^{p-4}H²∇H∇Hᵀ`.
    ///
    /// At `ξ = 0` the 0-homogeneous factor `H D²H + ∇H∇Hᵀ` has no limit for
    /// non-quadratic gauges; it is replaced by its average over the
    /// directions `±eᵢ`, `±(eᵢ±eⱼ)/√2`.
    pub fn jacobian_into(&self, xi: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let h = self.gauge.value(xi);
        if h == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            let weight = self.weight(0.0);
            if weight == 0.0 || !weight.is_finite() {
                return;
            }
            let mut dirs: Vec<Vec<f64>> = Vec::new();
            for i in 0..d {
                for sign in [1.0, -1.0] {
                    let mut e = vec![0.0; d];
                    e[i] = sign;
                    dirs.push(e);
                }
                for j in (i + 1)..d {
                    for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                        let mut e = vec![0.0; d];
                        e[i] = si * std::f64::consts::FRAC_1_SQRT_2;
                        e[j] = sj * std::f64::consts::FRAC_1_SQRT_2;
                        dirs.push(e);
                    }
                }
            }
            let mut m = vec![0.0; d * d];
            for e in &dirs {
                self.half_hessian_of_square(e, &mut m);
                for (o, v) in out.iter_mut().zip(&m) {
                    *o += weight * v / dirs.len() as f64;
                }
            }
            return;
        }
        self.half_hessian_of_square(xi, out);
        let mut grad = vec![0.0; d];
        self.gauge.gradient_into(xi, &mut grad);
        let s2 = h * h + self.regularization * self.regularization;
        let w = self.weight(h);
        let extra = (self.exponent - 2.0) * w / s2 * h * h;
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = w * out[i * d + j] + extra * grad[i] * grad[j];
            }
        }
    }

    /// `½D²(H²) = H D²H + ∇H∇Hᵀ` into `out`.
    fn half_hessian_of_square(&self, xi: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let h = self.gauge.value(xi);
        let mut grad = vec![0.0; d];
        self.gauge.gradient_into(xi, &mut grad);
        self.gauge.hessian_into(xi, out);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = h * out[i * d + j] + grad[i] * grad[j];
            }
        }
    }
}
