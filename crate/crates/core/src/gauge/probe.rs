use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Gauge, GaugeError, GaugeKind, Result};

/// Empirical extremes of the eigenvalues of `D²(H^N)(ξ)/N` over unit `ξ`.
///
/// The `1/N` normalization makes this the Jacobian of the flux map for
/// `p = N`, so the Euclidean plane gives exactly 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityBounds {
    pub lower: f64,
    pub upper: f64,
    /// `lower < 0.05·upper`.
    pub near_degenerate: bool,
}

/// Samples `D²(H^N)` by central differences of the analytic `∇(H^N)` at
/// `sample_count` directions.
pub fn ellipticity_probe(g: &Gauge, sample_count: usize) -> Result<EllipticityBounds> {
    if matches!(g.kind(), GaugeKind::Tabulated(_)) {
        return Err(GaugeError::Unsupported(
            "ellipticity probe needs a C² gauge; tabulated gauges are only C¹".into(),
        ));
    }
    if sample_count < 100 {
        return Err(GaugeError::InvalidParameter(format!(
            "ellipticity probe needs at least 100 samples, got {sample_count}"
        )));
    }
    let n = g.dim();
    // ∇(H^N)/N = H^{N-1}∇H
    let scaled_grad = |xi: &[f64], out: &mut [f64]| {
        let h = g.value(xi);
        g.gradient_into(xi, out);
        let w = h.powi(n as i32 - 1);
        out.iter_mut().for_each(|v| *v *= w);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0xe111_9a7c);
    let step = 1e-5;
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for j in 0..sample_count {
        let xi: Vec<f64> = if n == 2 {
            let phi = (j as f64 + 0.5) * TAU / sample_count as f64;
            vec![phi.cos(), phi.sin()]
        } else {
            loop {
                let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if len > 0.1 && len <= 1.0 {
                    break v.iter().map(|x| x / len).collect();
                }
            }
        };
        let mut m = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let mut p = xi.clone();
            let mut q = xi.clone();
            p[k] += step;
            q[k] -= step;
            scaled_grad(&p, &mut gp);
            scaled_grad(&q, &mut gm);
            for i in 0..n {
                m[(i, k)] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        let sym = (&m + m.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        // |ξ| = 1, so the |ξ|^{N-2} normalization is trivial here
        lower = lower.min(eig.min());
        upper = upper.max(eig.max());
    }
    if !(lower > 0.0) {
        return Err(GaugeError::NotUniformlyElliptic { lower });
    }
    Ok(EllipticityBounds { lower, upper, near_degenerate: lower < 0.05 * upper })
}
