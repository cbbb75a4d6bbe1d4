use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dot, norm, Gauge, GaugeError, GaugeKind, Result};

/// How `H₀` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualStrategy {
    ClosedForm,
    /// `sup ⟨x,ξ⟩` over the `H`-unit sphere, refined until the sup value is
    /// stable to `tolerance` (relative to `|x|`).
    Maximization { tolerance: f64 },
}

pub const DEFAULT_DUAL_TOLERANCE: f64 = 1e-8;

/// `H₀(x)` together with `∇H₀(x)`, the maximizing covector of `⟨x,·⟩` on `{H = 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// The dual gauge `H₀(x) = sup_{H(ξ)=1} ⟨x,ξ⟩` of a primal gauge.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGauge {
    primal: Gauge,
    strategy: DualStrategy,
}

const ANGULAR_GRID: usize = 720;
const SPHERE_GRID: usize = 4096;

impl DualGauge {
    /// Closed form when available, otherwise maximization at the default tolerance.
    pub fn new(primal: Gauge) -> Self {
        let strategy = if primal.has_closed_form_dual() {
            DualStrategy::ClosedForm
        } else {
            DualStrategy::Maximization { tolerance: DEFAULT_DUAL_TOLERANCE }
        };
        Self { primal, strategy }
    }

    pub fn by_maximization(primal: Gauge, tolerance: f64) -> Result<Self> {
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(GaugeError::InvalidParameter(format!(
                "maximization tolerance must be positive, got {tolerance}"
            )));
        }
        Ok(Self { primal, strategy: DualStrategy::Maximization { tolerance } })
    }

    pub fn primal(&self) -> &Gauge {
        &self.primal
    }

    pub fn strategy(&self) -> DualStrategy {
        self.strategy
    }

    pub fn dim(&self) -> usize {
        self.primal.dim()
    }

    pub fn tolerance(&self) -> f64 {
        match self.strategy {
            DualStrategy::ClosedForm => 0.0,
            DualStrategy::Maximization { tolerance } => tolerance,
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(GaugeError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GaugeError::NonFinite);
        }
        Ok(())
    }

    /// `H₀(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        if x.iter().all(|v| *v == 0.0) {
            return Ok(0.0);
        }
        match self.strategy {
            DualStrategy::ClosedForm => Ok(closed_value(&self.primal, x)),
            DualStrategy::Maximization { tolerance } => {
                Ok(self.maximize(x, tolerance)?.value)
            }
        }
    }

    /// `H₀(x)` and `∇H₀(x)` for `x ≠ 0`.
    pub fn eval_point(&self, x: &[f64]) -> Result<DualPoint> {
        self.check(x)?;
        if x.iter().all(|v| *v == 0.0) {
            return Err(GaugeError::ZeroVector);
        }
        match self.strategy {
            DualStrategy::ClosedForm => Ok(closed_point(&self.primal, x)),
            DualStrategy::Maximization { tolerance } => self.maximize(x, tolerance),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_point(x)?.gradient)
    }

    fn maximize(&self, x: &[f64], tolerance: f64) -> Result<DualPoint> {
        if self.dim() == 2 {
            maximize_planar(&self.primal, [x[0], x[1]], tolerance)
        } else {
            maximize_sphere(&self.primal, x, tolerance)
        }
    }
}

/// Planar: `H₀(x) = max_φ ⟨x,ω⟩ / H(ω)`. The objective is 0-homogeneous, and
/// for a convex body it is unimodal near the maximizer; an angular grid
/// brackets it and golden-section search refines it.
fn maximize_planar(g: &Gauge, x: [f64; 2], tolerance: f64) -> Result<DualPoint> {
    let f = |phi: f64| {
        let w = [phi.cos(), phi.sin()];
        (x[0] * w[0] + x[1] * w[1]) / g.value(&w)
    };
    let dphi = TAU / ANGULAR_GRID as f64;
    let base = x[1].atan2(x[0]);
    let mut best = (f(base), 0usize);
    for j in 1..ANGULAR_GRID {
        let v = f(base + j as f64 * dphi);
        if v > best.0 {
            best = (v, j);
        }
    }
    let grid_best = best.0;
    let centre = base + best.1 as f64 * dphi;
    let (mut a, mut b) = (centre - dphi, centre + dphi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-13 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let phi = 0.5 * (a + b);
    let value = f(phi);
    let scale = x[0].hypot(x[1]);
    if value < grid_best - tolerance * scale || !value.is_finite() {
        return Err(GaugeError::DualNotConverged { best: grid_best.max(value), tolerance });
    }
    let w = [phi.cos(), phi.sin()];
    let h = g.value(&w);
    Ok(DualPoint { value, gradient: vec![w[0] / h, w[1] / h] })
}

/// `N ≥ 3`: best of a fixed quasi-random direction set, then projected
/// gradient ascent of the 0-homogeneous objective `⟨x,ω⟩/H(ω)` with
/// backtracking.
fn maximize_sphere(g: &Gauge, x: &[f64], tolerance: f64) -> Result<DualPoint> {
    let n = x.len();
    let f = |w: &[f64]| dot(x, w) / g.value(w);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d0a1);
    let mut best_w = x.iter().map(|v| v / norm(x)).collect::<Vec<_>>();
    let mut best = f(&best_w);
    let mut w = vec![0.0; n];
    for _ in 0..SPHERE_GRID {
        for v in w.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let len = norm(&w);
        if len < 1e-3 {
            continue;
        }
        let val = f(&w);
        if val > best {
            best = val;
            best_w.iter_mut().zip(&w).for_each(|(b, v)| *b = v / len);
        }
    }
    let scale = norm(x);
    let mut grad_h = vec![0.0; n];
    let mut step = 0.1;
    for _ in 0..2000 {
        let h = g.value(&best_w);
        g.gradient_into(&best_w, &mut grad_h);
        let xw = dot(x, &best_w);
        let grad: Vec<f64> = (0..n).map(|i| x[i] / h - xw * grad_h[i] / (h * h)).collect();
        let gnorm = norm(&grad);
        if gnorm < 1e-10 * scale {
            break;
        }
        let mut accepted = false;
        while step > 1e-16 {
            let mut trial: Vec<f64> = (0..n).map(|i| best_w[i] + step * grad[i] / scale).collect();
            let len = norm(&trial);
            trial.iter_mut().for_each(|v| *v /= len);
            let val = f(&trial);
            if val > best {
                best = val;
                best_w = trial;
                accepted = true;
                step = (2.0 * step).min(1.0);
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    // certify: the tangential gradient must be small enough that the
    // remaining gain (quadratic in the angle) is below tolerance
    let h = g.value(&best_w);
    g.gradient_into(&best_w, &mut grad_h);
    let xw = dot(x, &best_w);
    let gnorm = norm(&(0..n).map(|i| x[i] / h - xw * grad_h[i] / (h * h)).collect::<Vec<_>>());
    if !best.is_finite() || gnorm > tolerance.sqrt() * scale {
        return Err(GaugeError::DualNotConverged { best, tolerance });
    }
    Ok(DualPoint { value: best, gradient: best_w.iter().map(|v| v / h).collect() })
}

fn closed_value(g: &Gauge, x: &[f64]) -> f64 {
    match g.kind() {
        GaugeKind::Euclidean => norm(x),
        GaugeKind::ScaledEuclidean { factor } => norm(x) / factor,
        GaugeKind::LpNorm { exponent } => {
            let conj = exponent / (exponent - 1.0);
            super::lp_norm(x, conj)
        }
        GaugeKind::AnisotropicQuadratic(q) => {
            let d = x.len();
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += x[i] * q.inverse()[(i, j)] * x[j];
                }
            }
            s.max(0.0).sqrt()
        }
        GaugeKind::ShiftedEuclidean { shift } => {
            let e2 = dot(shift, shift);
            let bx = dot(shift, x);
            let s = ((1.0 - e2) * dot(x, x) + bx * bx).sqrt();
            (s - bx) / (1.0 - e2)
        }
        GaugeKind::Tabulated(_) => unreachable!("tabulated gauges have no closed-form dual"),
    }
}

fn closed_point(g: &Gauge, x: &[f64]) -> DualPoint {
    let value = closed_value(g, x);
    let gradient = match g.kind() {
        GaugeKind::Euclidean => x.iter().map(|v| v / value).collect(),
        GaugeKind::ScaledEuclidean { factor } => {
            let n = norm(x);
            x.iter().map(|v| v / (n * factor)).collect()
        }
        GaugeKind::LpNorm { exponent } => {
            let conj = exponent / (exponent - 1.0);
            x.iter()
                .map(|v| if *v == 0.0 { 0.0 } else { v.signum() * (v.abs() / value).powf(conj - 1.0) })
                .collect()
        }
        GaugeKind::AnisotropicQuadratic(q) => {
            let d = x.len();
            (0..d)
                .map(|i| (0..d).map(|j| q.inverse()[(i, j)] * x[j]).sum::<f64>() / value)
                .collect()
        }
        GaugeKind::ShiftedEuclidean { shift } => {
            let e2 = dot(shift, shift);
            let bx = dot(shift, x);
            let s = ((1.0 - e2) * dot(x, x) + bx * bx).sqrt();
            (0..x.len())
                .map(|i| (-shift[i] + ((1.0 - e2) * x[i] + bx * shift[i]) / s) / (1.0 - e2))
                .collect()
        }
        GaugeKind::Tabulated(_) => unreachable!("tabulated gauges have no closed-form dual"),
    };
    DualPoint { value, gradient }
}

/// `|x − H₀(x)∇H(∇H₀(x))|`.
pub fn duality_roundtrip_residual(d: &DualGauge, x: &[f64]) -> Result<f64> {
    let p = d.eval_point(x)?;
    let grad_h = d.primal().gradient(&p.gradient)?;
    Ok(x.iter()
        .zip(&grad_h)
        .map(|(xi, gi)| (xi - p.value * gi).powi(2))
        .sum::<f64>()
        .sqrt())
}
