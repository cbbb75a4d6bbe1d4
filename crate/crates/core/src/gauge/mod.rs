//! Positively one-homogeneous anisotropies `H`, their duals `H₀` and the
//! flux map `a(ξ) = H^{p-1}(ξ)∇H(ξ)`.

mod dual;
mod flux;
mod probe;
mod tabulated;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

pub use dual::{duality_roundtrip_residual, DualGauge, DualPoint, DualStrategy};
pub use flux::FluxMap;
pub use probe::{ellipticity_probe, EllipticityBounds};
pub use tabulated::TabulatedSphere;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GaugeError {
    #[error("non-finite input vector")]
    NonFinite,
    #[error("dimension mismatch: gauge acts on R^{expected}, got a vector of length {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("gradient undefined at the origin")]
    ZeroVector,
    #[error("invalid gauge parameter: {0}")]
    InvalidParameter(String),
    #[error("dual maximization did not converge: best bound {best}, tolerance {tolerance}")]
    DualNotConverged { best: f64, tolerance: f64 },
    #[error("gauge is not uniformly elliptic: sampled lower bound {lower}")]
    NotUniformlyElliptic { lower: f64 },
    #[error("{0}")]
    Unsupported(String),
    #[error("cannot parse gauge `{input}`: {reason}")]
    Parse { input: String, reason: String },
}

pub type Result<T> = std::result::Result<T, GaugeError>;

/// Symmetric positive-definite matrix with its cached inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GaugeKind {
    Euclidean,
    ScaledEuclidean { factor: f64 },
    LpNorm { exponent: f64 },
    AnisotropicQuadratic(QuadraticForm),
    /// `|ξ| + ⟨b,ξ⟩` with `|b| < 1`; not even.
    ShiftedEuclidean { shift: Vec<f64> },
    Tabulated(TabulatedSphere),
}

/// A gauge `H` on `R^N`.
///
/// Checked entry points (`eval`, `gradient`) validate their input; the
/// `value`/`gradient_into`/`hessian_into` family is the unchecked fast path
/// used inside assembly loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Gauge {
    dim: usize,
    kind: GaugeKind,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(GaugeError::InvalidParameter(format!(
            "dimension must be at least 2, got {dim}"
        )));
    }
    Ok(())
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl Gauge {
    pub fn euclidean(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { dim, kind: GaugeKind::Euclidean })
    }

    pub fn scaled(dim: usize, factor: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(factor.is_finite() && factor > 0.0) {
            return Err(GaugeError::InvalidParameter(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        Ok(Self { dim, kind: GaugeKind::ScaledEuclidean { factor } })
    }

    pub fn lp(dim: usize, exponent: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(exponent.is_finite() && exponent > 1.0) {
            return Err(GaugeError::InvalidParameter(format!(
                "lp exponent must lie in (1, inf), got {exponent}"
            )));
        }
        Ok(Self { dim, kind: GaugeKind::LpNorm { exponent } })
    }

    /// `H(ξ) = sqrt(ξᵀAξ)` for a symmetric positive-definite `A`.
    pub fn quadratic(matrix: DMatrix<f64>) -> Result<Self> {
        let dim = matrix.nrows();
        check_dim(dim)?;
        if matrix.ncols() != dim {
            return Err(GaugeError::InvalidParameter("quadratic form must be square".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(GaugeError::InvalidParameter("quadratic form has non-finite entries".into()));
        }
        let scale = matrix.amax().max(1.0);
        if (&matrix - matrix.transpose()).amax() > 1e-12 * scale {
            return Err(GaugeError::InvalidParameter("quadratic form must be symmetric".into()));
        }
        let Some(chol) = matrix.clone().cholesky() else {
            return Err(GaugeError::InvalidParameter(
                "quadratic form must be positive definite".into(),
            ));
        };
        let inverse = chol.inverse();
        Ok(Self {
            dim,
            kind: GaugeKind::AnisotropicQuadratic(QuadraticForm { matrix, inverse }),
        })
    }

    pub fn shifted(shift: Vec<f64>) -> Result<Self> {
        let dim = shift.len();
        check_dim(dim)?;
        if shift.iter().any(|v| !v.is_finite()) {
            return Err(GaugeError::InvalidParameter("shift has non-finite entries".into()));
        }
        let len = norm(&shift);
        if len >= 1.0 {
            return Err(GaugeError::InvalidParameter(format!(
                "shift must have length < 1, got {len}"
            )));
        }
        Ok(Self { dim, kind: GaugeKind::ShiftedEuclidean { shift } })
    }

    /// Planar gauge whose unit sphere passes through `radii[i]·(cos φᵢ, sin φᵢ)`.
    pub fn tabulated(angles: Vec<f64>, radii: Vec<f64>) -> Result<Self> {
        let sphere = TabulatedSphere::new(angles, radii)?;
        Ok(Self { dim: 2, kind: GaugeKind::Tabulated(sphere) })
    }

    /// Tabulated gauge sampled at equally spaced angles starting at 0.
    pub fn tabulated_uniform(radii: Vec<f64>) -> Result<Self> {
        let n = radii.len();
        let angles = (0..n)
            .map(|i| 2.0 * std::f64::consts::PI * i as f64 / n as f64)
            .collect();
        Self::tabulated(angles, radii)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &GaugeKind {
        &self.kind
    }

    /// Whether `H₀` has a closed form for this kind.
    pub fn has_closed_form_dual(&self) -> bool {
        !matches!(self.kind, GaugeKind::Tabulated(_))
    }

    /// C² away from the origin (tabulated gauges are only C¹; ℓ^q with q < 2
    /// has unbounded second derivatives on the axes).
    pub fn is_smooth(&self) -> bool {
        match &self.kind {
            GaugeKind::Tabulated(_) => false,
            GaugeKind::LpNorm { exponent } => *exponent >= 2.0,
            _ => true,
        }
    }

    fn check(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.dim {
            return Err(GaugeError::DimensionMismatch { expected: self.dim, found: xi.len() });
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(GaugeError::NonFinite);
        }
        Ok(())
    }

    /// `H(ξ)`, rejecting non-finite or wrongly sized input.
    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        self.check(xi)?;
        Ok(self.value(xi))
    }

    /// `∇H(ξ)` for `ξ ≠ 0`.
    pub fn gradient(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.check(xi)?;
        if xi.iter().all(|v| *v == 0.0) {
            return Err(GaugeError::ZeroVector);
        }
        let mut out = vec![0.0; self.dim];
        self.gradient_into(xi, &mut out);
        Ok(out)
    }

    pub fn value(&self, xi: &[f64]) -> f64 {
        match &self.kind {
            GaugeKind::Euclidean => norm(xi),
            GaugeKind::ScaledEuclidean { factor } => factor * norm(xi),
            GaugeKind::LpNorm { exponent } => lp_norm(xi, *exponent),
            GaugeKind::AnisotropicQuadratic(q) => {
                let mut s = 0.0;
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        s += xi[i] * q.matrix[(i, j)] * xi[j];
                    }
                }
                s.max(0.0).sqrt()
            }
            GaugeKind::ShiftedEuclidean { shift } => norm(xi) + dot(shift, xi),
            GaugeKind::Tabulated(t) => t.value([xi[0], xi[1]]),
        }
    }

    /// Writes `∇H(ξ)` into `out`; `ξ = 0` yields zeros.
    pub fn gradient_into(&self, xi: &[f64], out: &mut [f64]) {
        let n = norm(xi);
        if n == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        match &self.kind {
            GaugeKind::Euclidean => {
                for (o, x) in out.iter_mut().zip(xi) {
                    *o = x / n;
                }
            }
            GaugeKind::ScaledEuclidean { factor } => {
                for (o, x) in out.iter_mut().zip(xi) {
                    *o = factor * x / n;
                }
            }
            GaugeKind::LpNorm { exponent } => {
                let h = lp_norm(xi, *exponent);
                for (o, x) in out.iter_mut().zip(xi) {
                    *o = x.signum() * (x.abs() / h).powf(exponent - 1.0);
                    if *x == 0.0 {
                        *o = 0.0;
                    }
                }
            }
            GaugeKind::AnisotropicQuadratic(q) => {
                let h = self.value(xi);
                for i in 0..self.dim {
                    let mut s = 0.0;
                    for j in 0..self.dim {
                        s += q.matrix[(i, j)] * xi[j];
                    }
                    out[i] = s / h;
                }
            }
            GaugeKind::ShiftedEuclidean { shift } => {
                for i in 0..self.dim {
                    out[i] = xi[i] / n + shift[i];
                }
            }
            GaugeKind::Tabulated(t) => {
                let g = t.gradient([xi[0], xi[1]]);
                out[0] = g[0];
                out[1] = g[1];
            }
        }
    }

    /// Row-major `D²H(ξ)` into `out` (length `N²`). Analytic for the closed-form
    /// kinds, central differences of the gradient for tabulated gauges.
    pub fn hessian_into(&self, xi: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let n = norm(xi);
        out.iter_mut().for_each(|v| *v = 0.0);
        if n == 0.0 {
            return;
        }
        match &self.kind {
            GaugeKind::Euclidean | GaugeKind::ShiftedEuclidean { .. } => {
                euclidean_hessian(xi, n, 1.0, out)
            }
            GaugeKind::ScaledEuclidean { factor } => euclidean_hessian(xi, n, *factor, out),
            GaugeKind::LpNorm { exponent } => {
                let q = *exponent;
                let h = lp_norm(xi, q);
                let mut g = vec![0.0; d];
                self.gradient_into(xi, &mut g);
                for i in 0..d {
                    for j in 0..d {
                        let mut v = -g[i] * g[j];
                        if i == j {
                            v += (xi[i].abs() / h).powf(q - 2.0);
                        }
                        out[i * d + j] = (q - 1.0) / h * v;
                    }
                }
            }
            GaugeKind::AnisotropicQuadratic(q) => {
                let h = self.value(xi);
                let ax: Vec<f64> = (0..d)
                    .map(|i| (0..d).map(|j| q.matrix[(i, j)] * xi[j]).sum())
                    .collect();
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = (q.matrix[(i, j)] - ax[i] * ax[j] / (h * h)) / h;
                    }
                }
            }
            GaugeKind::Tabulated(_) => {
                let step = 1e-6 * n;
                let mut plus = xi.to_vec();
                let mut minus = xi.to_vec();
                let mut gp = vec![0.0; d];
                let mut gm = vec![0.0; d];
                for j in 0..d {
                    plus[j] += step;
                    minus[j] -= step;
                    self.gradient_into(&plus, &mut gp);
                    self.gradient_into(&minus, &mut gm);
                    for i in 0..d {
                        out[i * d + j] = (gp[i] - gm[i]) / (2.0 * step);
                    }
                    plus[j] = xi[j];
                    minus[j] = xi[j];
                }
                // symmetrize the difference quotient
                for i in 0..d {
                    for j in (i + 1)..d {
                        let m = 0.5 * (out[i * d + j] + out[j * d + i]);
                        out[i * d + j] = m;
                        out[j * d + i] = m;
                    }
                }
            }
        }
    }

    pub fn value2(&self, xi: [f64; 2]) -> f64 {
        self.value(&xi)
    }

    pub fn gradient2(&self, xi: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        self.gradient_into(&xi, &mut g);
        g
    }

    /// Gauge `c·H`, when the kind admits it.
    pub fn scaled_by(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(GaugeError::InvalidParameter(format!("scale must be positive, got {c}")));
        }
        match &self.kind {
            GaugeKind::Euclidean => Self::scaled(self.dim, c),
            GaugeKind::ScaledEuclidean { factor } => Self::scaled(self.dim, c * factor),
            GaugeKind::AnisotropicQuadratic(q) => Self::quadratic(q.matrix.clone() * (c * c)),
            GaugeKind::Tabulated(t) => {
                Self::tabulated(t.angles().to_vec(), t.radii().iter().map(|r| r / c).collect())
            }
            _ => Err(GaugeError::Unsupported(format!(
                "scaling is not representable for gauge `{self}`"
            ))),
        }
    }

    /// Parses the gauge grammar for a given ambient dimension.
    ///
    /// ```text
    /// euclidean
    /// scaled <factor>
    /// lp <q>
    /// quadratic <a11> <a12> ... <aNN>      (row-major, N² entries)
    /// shifted <b1> ... <bN>
    /// tabulated <r0> <r1> ... <r_{n-1}>    (2D, equally spaced angles from 0)
    /// ```
    pub fn parse(input: &str, dim: usize) -> Result<Self> {
        let err = |reason: String| GaugeError::Parse { input: input.to_string(), reason };
        let mut words = input.split_whitespace();
        let Some(name) = words.next() else {
            return Err(err("empty gauge description".into()));
        };
        let mut nums = Vec::new();
        for w in words {
            let v: f64 = w.parse().map_err(|_| err(format!("`{w}` is not a decimal number")))?;
            nums.push(v);
        }
        let arity = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(err(format!("`{name}` takes {n} parameter(s), got {}", nums.len())))
            }
        };
        match name {
            "euclidean" => {
                arity(0)?;
                Self::euclidean(dim)
            }
            "scaled" => {
                arity(1)?;
                Self::scaled(dim, nums[0])
            }
            "lp" => {
                arity(1)?;
                Self::lp(dim, nums[0])
            }
            "quadratic" => {
                arity(dim * dim)?;
                Self::quadratic(DMatrix::from_row_slice(dim, dim, &nums))
            }
            "shifted" => {
                arity(dim)?;
                Self::shifted(nums)
            }
            "tabulated" => {
                if dim != 2 {
                    return Err(err("tabulated gauges are planar".into()));
                }
                Self::tabulated_uniform(nums)
            }
            other => Err(err(format!("unknown gauge kind `{other}`"))),
        }
    }
}

/// Planar gauges shipped with the crate, by their grammar form.
pub fn bundled_gauges() -> Vec<Gauge> {
    let tabulated: Vec<f64> = (0..24)
        .map(|i| 1.0 + 0.1 * (2.0 * std::f64::consts::TAU * i as f64 / 24.0).cos())
        .collect();
    let mut out: Vec<Gauge> = ["euclidean", "scaled 2", "lp 1.5", "lp 3", "lp 4", "quadratic 2 0.3 0.3 1", "shifted 0.3 0.1"]
        .iter()
        .map(|s| Gauge::parse(s, 2).expect("bundled gauge specs parse"))
        .collect();
    out.push(Gauge::tabulated_uniform(tabulated).expect("bundled tabulated gauge is convex"));
    out
}

impl fmt::Display for Gauge {
    /// Normal form of the grammar accepted by [`Gauge::parse`]. Tabulated
    /// gauges with non-uniform angles print their radii only.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            GaugeKind::Euclidean => write!(f, "euclidean"),
            GaugeKind::ScaledEuclidean { factor } => write!(f, "scaled {factor}"),
            GaugeKind::LpNorm { exponent } => write!(f, "lp {exponent}"),
            GaugeKind::AnisotropicQuadratic(q) => {
                write!(f, "quadratic")?;
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        write!(f, " {}", q.matrix[(i, j)])?;
                    }
                }
                Ok(())
            }
            GaugeKind::ShiftedEuclidean { shift } => {
                write!(f, "shifted")?;
                shift.iter().try_for_each(|b| write!(f, " {b}"))
            }
            GaugeKind::Tabulated(t) => {
                write!(f, "tabulated")?;
                t.radii().iter().try_for_each(|r| write!(f, " {r}"))
            }
        }
    }
}

impl FromStr for Gauge {
    type Err = GaugeError;

    /// Planar parse; use [`Gauge::parse`] for other dimensions.
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, 2)
    }
}

fn lp_norm(xi: &[f64], q: f64) -> f64 {
    let m = xi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * xi.iter().map(|v| (v.abs() / m).powf(q)).sum::<f64>().powf(1.0 / q)
}

fn euclidean_hessian(xi: &[f64], n: f64, factor: f64, out: &mut [f64]) {
    let d = xi.len();
    for i in 0..d {
        for j in 0..d {
            let delta = if i == j { 1.0 } else { 0.0 };
            out[i * d + j] = factor * (delta - xi[i] * xi[j] / (n * n)) / n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_examples() {
        assert_relative_eq!(Gauge::euclidean(2).unwrap().eval(&[3.0, 4.0]).unwrap(), 5.0);
        let l4 = Gauge::lp(2, 4.0).unwrap();
        assert_relative_eq!(l4.eval(&[1.0, 1.0]).unwrap(), 2f64.powf(0.25), epsilon = 1e-15);
        assert_relative_eq!(Gauge::scaled(2, 2.0).unwrap().eval(&[1.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn rejects_bad_input() {
        let g = Gauge::euclidean(2).unwrap();
        assert_eq!(g.eval(&[f64::NAN, 0.0]), Err(GaugeError::NonFinite));
        assert_eq!(g.eval(&[f64::INFINITY, 0.0]), Err(GaugeError::NonFinite));
        assert_eq!(g.gradient(&[0.0, 0.0]), Err(GaugeError::ZeroVector));
        assert!(matches!(g.eval(&[1.0]), Err(GaugeError::DimensionMismatch { .. })));
        assert!(Gauge::lp(2, 1.0).is_err());
        assert!(Gauge::shifted(vec![0.8, 0.7]).is_err());
        assert!(Gauge::quadratic(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g = Gauge::euclidean(2).unwrap();
        assert_eq!(g.gradient(&[0.0, 2.0]).unwrap(), vec![0.0, 1.0]);
        let a = Gauge::quadratic(DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0])).unwrap();
        let grad = a.gradient(&[1.0, 0.0]).unwrap();
        // central difference of sqrt(ξᵀAξ) at (1,0)
        let h = 1e-6;
        let fd0 = (a.value(&[1.0 + h, 0.0]) - a.value(&[1.0 - h, 0.0])) / (2.0 * h);
        let fd1 = (a.value(&[1.0, h]) - a.value(&[1.0, -h])) / (2.0 * h);
        assert_relative_eq!(grad[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(grad[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(fd0, 2.0, epsilon = 1e-8);
        assert_relative_eq!(fd1, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn hessians_match_gradient_differences() {
        let gauges = [
            Gauge::euclidean(2).unwrap(),
            Gauge::scaled(3, 1.5).unwrap(),
            Gauge::lp(2, 4.0).unwrap(),
            Gauge::lp(3, 3.0).unwrap(),
            Gauge::quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap(),
            Gauge::shifted(vec![0.3, -0.2]).unwrap(),
        ];
        for g in &gauges {
            let d = g.dim();
            let xi: Vec<f64> = (0..d).map(|i| 0.7 - 0.45 * i as f64).collect();
            let mut hess = vec![0.0; d * d];
            g.hessian_into(&xi, &mut hess);
            let step = 1e-6;
            for j in 0..d {
                let mut p = xi.clone();
                let mut m = xi.clone();
                p[j] += step;
                m[j] -= step;
                let gp = g.gradient(&p).unwrap();
                let gm = g.gradient(&m).unwrap();
                for i in 0..d {
                    let fd = (gp[i] - gm[i]) / (2.0 * step);
                    assert!((fd - hess[i * d + j]).abs() < 1e-7, "{g}: {fd} vs {}", hess[i * d + j]);
                }
            }
        }
    }

    #[test]
    fn grammar_round_trip() {
        for spec in [
            "euclidean",
            "scaled 2",
            "lp 4",
            "lp 1.5",
            "quadratic 4 0 0 1",
            "shifted 0.3 -0.1",
            "tabulated 1 1.2 1 0.8",
        ] {
            let g: Gauge = spec.parse().unwrap();
            assert_eq!(g.to_string(), spec);
            assert_eq!(Gauge::parse(&g.to_string(), 2).unwrap(), g);
        }
        assert!("lp".parse::<Gauge>().is_err());
        assert!("lp x".parse::<Gauge>().is_err());
        assert!("cubic 3".parse::<Gauge>().is_err());
        assert_eq!(Gauge::parse("scaled 3", 3).unwrap().dim(), 3);
    }

    #[test]
    fn scaled_by_doubles_values() {
        let a = Gauge::quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let b = a.scaled_by(2.0).unwrap();
        assert_relative_eq!(b.value(&[0.3, -1.1]), 2.0 * a.value(&[0.3, -1.1]), epsilon = 1e-14);
        assert!(Gauge::lp(2, 4.0).unwrap().scaled_by(2.0).is_err());
    }
}
