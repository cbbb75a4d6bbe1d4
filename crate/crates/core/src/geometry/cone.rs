use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;

use super::{GeometryError, Result};

/// Relative tolerance for boundary classification.
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Interior,
    Boundary,
    Exterior,
}

/// Planar angular description of a cone: directions `θ ∈ [start, start+opening]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularRange {
    pub start: f64,
    pub opening: f64,
}

/// Convex cone `Σ = {x : ⟨nᵢ,x⟩ ≥ 0}` given by inward unit normals.
///
/// The free factor `ℝ^k` is the common null space of the normals, so
/// `Σ = ℝ^k × Σ̃` with `Σ̃` pointed. No normals encodes the whole space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexCone {
    dim: usize,
    normals: Vec<Vec<f64>>,
    free_dim: usize,
    angular: Option<AngularRange>,
}

impl ConvexCone {
    pub fn whole_space(dim: usize) -> Result<Self> {
        Self::from_normals(dim, Vec::new())
    }

    pub fn half_space(normal: Vec<f64>) -> Result<Self> {
        let dim = normal.len();
        Self::from_normals(dim, vec![normal])
    }

    /// Planar sector `{θ ∈ [orientation, orientation + opening]}` with
    /// `opening ∈ (0, π]`; `π` is a half-plane.
    pub fn sector(opening: f64, orientation: f64) -> Result<Self> {
        if !(opening.is_finite() && opening > 0.0 && opening <= PI + 1e-15) {
            return Err(GeometryError::InvalidCone(format!(
                "sector opening must lie in (0, π] for a convex cone, got {opening}"
            )));
        }
        if !orientation.is_finite() {
            return Err(GeometryError::InvalidCone("sector orientation must be finite".into()));
        }
        let a = orientation;
        let b = orientation + opening;
        // inward normals: rotate the first ray by +90°, the second by −90°
        let n1 = vec![-a.sin(), a.cos()];
        let n2 = vec![b.sin(), -b.cos()];
        let mut cone = if (opening - PI).abs() < 1e-15 {
            Self::from_normals(2, vec![n1])?
        } else {
            Self::from_normals(2, vec![n1, n2])?
        };
        cone.angular = Some(AngularRange { start: a.rem_euclid(TAU), opening: opening.min(PI) });
        Ok(cone)
    }

    pub fn quarter_plane() -> Self {
        Self::sector(PI / 2.0, 0.0).expect("quarter plane is a valid sector")
    }

    /// Upper half-plane `{x₂ ≥ 0}`.
    pub fn upper_half_plane() -> Self {
        Self::half_space(vec![0.0, 1.0]).expect("half plane is a valid cone")
    }

    pub fn from_normals(dim: usize, normals: Vec<Vec<f64>>) -> Result<Self> {
        if dim < 2 {
            return Err(GeometryError::InvalidCone(format!("dimension must be ≥ 2, got {dim}")));
        }
        let mut unit = Vec::with_capacity(normals.len());
        for n in normals {
            if n.len() != dim || n.iter().any(|v| !v.is_finite()) {
                return Err(GeometryError::InvalidCone(
                    "cone normals must be finite and match the dimension".into(),
                ));
            }
            let len = n.iter().map(|v| v * v).sum::<f64>().sqrt();
            if len < 1e-14 {
                return Err(GeometryError::InvalidCone("cone normal has zero length".into()));
            }
            unit.push(n.iter().map(|v| v / len).collect::<Vec<_>>());
        }
        let rank = if unit.is_empty() {
            0
        } else {
            let m = DMatrix::from_fn(unit.len(), dim, |i, j| unit[i][j]);
            m.rank(1e-10)
        };
        let mut cone = Self { dim, free_dim: dim - rank, normals: unit, angular: None };
        if dim == 2 {
            cone.angular = cone.planar_range()?;
        }
        Ok(cone)
    }

    /// Intersection of the half-circles `[αᵢ − π/2, αᵢ + π/2]`.
    fn planar_range(&self) -> Result<Option<AngularRange>> {
        if self.normals.is_empty() {
            return Ok(None);
        }
        let alphas: Vec<f64> = self.normals.iter().map(|n| n[1].atan2(n[0])).collect();
        let inside = |theta: f64, alpha: f64| {
            let d = (theta - alpha + PI).rem_euclid(TAU) - PI;
            d.abs() <= PI / 2.0 + 1e-12
        };
        let mut best: Option<AngularRange> = None;
        for &a in &alphas {
            let start = (a - PI / 2.0).rem_euclid(TAU);
            if !alphas.iter().all(|&b| inside(start, b)) {
                continue;
            }
            let opening = alphas
                .iter()
                .map(|&b| (b + PI / 2.0 - start).rem_euclid(TAU))
                .map(|v| if v > PI + 1e-12 { 0.0 } else { v.min(PI) })
                .fold(PI, f64::min);
            if best.is_none_or(|r| opening > r.opening) {
                best = Some(AngularRange { start, opening });
            }
        }
        match best {
            Some(r) if r.opening > 1e-9 => Ok(Some(r)),
            _ => Err(GeometryError::InvalidCone("cone has empty interior".into())),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }

    /// Dimension `k` of the free factor `ℝ^k`.
    pub fn free_dim(&self) -> usize {
        self.free_dim
    }

    pub fn is_whole_space(&self) -> bool {
        self.normals.is_empty()
    }

    /// Angular range of a planar cone; `None` for the whole plane.
    pub fn angular_range(&self) -> Option<AngularRange> {
        self.angular
    }

    /// `min_i ⟨nᵢ,x⟩`; `+∞` for the whole space.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.normals
            .iter()
            .map(|n| n.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn classify(&self, x: &[f64]) -> Membership {
        let m = self.margin(x);
        let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        if m > BOUNDARY_TOL * scale {
            Membership::Interior
        } else if m >= -BOUNDARY_TOL * scale {
            Membership::Boundary
        } else {
            Membership::Exterior
        }
    }

    /// `x ∈ closure(Σ)`.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.classify(x) != Membership::Exterior
    }

    /// Outward unit normal at a boundary point lying on exactly one face.
    pub fn outer_normal(&self, x: &[f64]) -> Option<Vec<f64>> {
        if self.classify(x) != Membership::Boundary {
            return None;
        }
        let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let active: Vec<&Vec<f64>> = self
            .normals
            .iter()
            .filter(|n| n.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().abs() <= BOUNDARY_TOL * scale)
            .collect();
        match active.as_slice() {
            [n] => Some(n.iter().map(|v| -v).collect()),
            _ => None,
        }
    }

    /// Orthogonal projection onto the free factor (the span complement of the
    /// wall normals).
    pub fn project_to_free_factor(&self, x: &[f64]) -> Vec<f64> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for n in &self.normals {
            let mut v = n.clone();
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                v.iter_mut().zip(b).for_each(|(a, c)| *a -= d * c);
            }
            let len = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if len > 1e-12 {
                basis.push(v.into_iter().map(|a| a / len).collect());
            }
        }
        let mut y = x.to_vec();
        for b in &basis {
            let d: f64 = y.iter().zip(b).map(|(a, c)| a * c).sum();
            y.iter_mut().zip(b).for_each(|(a, c)| *a -= d * c);
        }
        y
    }

    /// `x ∈ ℝ^k × {0}`: the free factor, where Wulff-ball centers are admissible.
    pub fn in_free_factor(&self, x: &[f64]) -> bool {
        let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        self.normals
            .iter()
            .all(|n| n.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().abs() <= 1e-12 * scale)
    }
}
