//! Anisotropic perimeter, cone volume and the isoperimetric deficit in
//! planar convex cones.
//!
//! Sets are star-shaped about their center and parametrized by the polar
//! angle `t` about it, counterclockwise. The perimeter is
//! `∫ H((y', −x')) dt` over the parameter arcs inside the cone. Cone walls
//! are lines through the vertex, where `x dy − y dx` vanishes, so the volume
//! of `Σ ∩ E` is `½∫ (x y' − y x') dt` over the same arcs.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::Write;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::gauge::{DualGauge, Gauge, GaugeError};
use crate::geometry::{ConvexCone, GeometryError, ObstacleDomain, ObstacleShape};
use crate::quadrature::gauss_legendre;

#[derive(Debug, thiserror::Error)]
pub enum WulffError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error("invalid set: {0}")]
    InvalidSet(String),
    #[error("cone volume estimates disagree: quadrature {quadrature}, Monte-Carlo {monte_carlo}, allowed {allowed}")]
    VolumeMismatch { quadrature: f64, monte_carlo: f64, allowed: f64 },
    #[error("the set has zero volume inside the cone")]
    EmptyVolume,
    #[error("csv output failed: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, WulffError>;

/// Seed of the Monte-Carlo volume cross-check unless overridden.
pub const DEFAULT_MC_SEED: u64 = 0x5eed_1507;

/// A test set `E` with its numerical budget.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurableSetSpec {
    pub shape: ObstacleShape,
    /// Gauss–Legendre nodes per panel; the error estimate uses twice as many.
    pub quadrature_order: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl MeasurableSetSpec {
    pub fn new(shape: ObstacleShape) -> Self {
        Self { shape, quadrature_order: 16, mc_samples: 100_000, seed: DEFAULT_MC_SEED }
    }

    /// `{H₀(x − c) < R}` for an arbitrary center.
    pub fn wulff_ball_shifted(center: [f64; 2], radius: f64) -> Self {
        Self::new(ObstacleShape::WulffBall { center, radius })
    }

    pub fn with_quadrature_order(mut self, n: usize) -> Self {
        self.quadrature_order = n;
        self
    }

    pub fn with_mc_samples(mut self, n: usize) -> Self {
        self.mc_samples = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `t·E`.
    pub fn scaled(&self, t: f64) -> Self {
        Self { shape: self.shape.scaled(t), ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if !(2..=64).contains(&self.quadrature_order) {
            return Err(WulffError::InvalidSet(format!(
                "quadrature order must lie in 2..=64, got {}",
                self.quadrature_order
            )));
        }
        if self.mc_samples < 1000 {
            return Err(WulffError::InvalidSet(format!(
                "Monte-Carlo budget must be at least 1000 samples, got {}",
                self.mc_samples
            )));
        }
        Ok(())
    }
}

/// A value with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeEstimate {
    pub quadrature: Estimate,
    pub monte_carlo: Estimate,
    pub discrepancy: f64,
}

impl VolumeEstimate {
    pub fn value(&self) -> f64 {
        self.quadrature.value
    }
}

const ARC_GRID: usize = 2048;
const WALL_TOL: f64 = 1e-12;
const GRADING_LEVELS: i32 = 10;
const GRADING_RATIO: f64 = 0.25;
const MIDDLE_PANELS: usize = 4;

fn domain_for(set: &MeasurableSetSpec, gauge: &Gauge) -> Result<ObstacleDomain> {
    set.validate()?;
    if gauge.dim() != 2 {
        return Err(WulffError::Geometry(GeometryError::Unsupported(
            "isoperimetric quantities are implemented in the plane only".into(),
        )));
    }
    Ok(ObstacleDomain::new(set.shape.clone(), Arc::new(DualGauge::new(gauge.clone())))?)
}

/// Parameter arcs `(t_start, t_end)` (unwrapped, `t_end > t_start`) on which
/// `∂E` lies inside the cone.
fn arcs_inside(domain: &ObstacleDomain, cone: &ConvexCone) -> Result<Vec<(f64, f64)>> {
    if cone.dim() != 2 {
        return Err(WulffError::Geometry(GeometryError::Unsupported("cones must be planar".into())));
    }
    if cone.is_whole_space() {
        return Ok(vec![(0.0, TAU)]);
    }
    let margin = |t: f64| -> Result<f64> { Ok(cone.margin(&domain.boundary_point(t)?)) };
    let dt = TAU / ARC_GRID as f64;
    let inside: Vec<bool> = (0..ARC_GRID).map(|j| margin(j as f64 * dt).map(|m| m > 0.0)).collect::<Result<_>>()?;
    if inside.iter().all(|b| *b) {
        return Ok(vec![(0.0, TAU)]);
    }
    let Some(j0) = inside.iter().position(|b| !*b) else { unreachable!() };
    let t0 = j0 as f64 * dt;
    let root = |lo: f64, hi: f64| -> Result<f64> {
        // margin changes sign on [lo, hi]
        let (mut lo, mut hi) = (lo, hi);
        let sign_lo = margin(lo)? > 0.0;
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if (margin(mid)? > 0.0) == sign_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let mut arcs = Vec::new();
    let mut open: Option<f64> = None;
    for k in 1..=ARC_GRID {
        let (prev, cur) = (inside[(j0 + k - 1) % ARC_GRID], inside[(j0 + k) % ARC_GRID]);
        let (lo, hi) = (t0 + (k - 1) as f64 * dt, t0 + k as f64 * dt);
        if !prev && cur {
            open = Some(root(lo, hi)?);
        } else if prev && !cur {
            let start = open.take().expect("arc opened before it closes");
            arcs.push((start, root(lo, hi)?));
        }
    }
    Ok(arcs)
}

/// Panel breakpoints on `[a, b]`: the ends and every multiple of `π/2`
/// between them, with geometric grading toward each breakpoint.
fn panels(a: f64, b: f64) -> Vec<f64> {
    let mut knots = vec![a];
    let mut k = (a / FRAC_PI_2).floor() + 1.0;
    while k * FRAC_PI_2 < b - 1e-12 {
        if k * FRAC_PI_2 > a + 1e-12 {
            knots.push(k * FRAC_PI_2);
        }
        k += 1.0;
    }
    knots.push(b);
    let mut s_breaks = vec![0.0];
    for l in (1..=GRADING_LEVELS).rev() {
        s_breaks.push(0.5 * GRADING_RATIO.powi(l));
    }
    let inner = 0.5 * GRADING_RATIO;
    for m in 1..MIDDLE_PANELS {
        s_breaks.push(inner + (1.0 - 2.0 * inner) * m as f64 / MIDDLE_PANELS as f64);
    }
    for l in 1..=GRADING_LEVELS {
        s_breaks.push(1.0 - 0.5 * GRADING_RATIO.powi(l));
    }
    s_breaks.push(1.0);
    s_breaks.sort_by(|x, y| x.total_cmp(y));
    let mut out = vec![a];
    for w in knots.windows(2) {
        for s in &s_breaks[1..] {
            out.push(w[0] + s * (w[1] - w[0]));
        }
    }
    out
}

/// `∫ f(t, γ(t), γ'(t)) dt` over the arcs, with the half-weight rule for
/// nodes on the cone boundary.
fn integrate<F>(domain: &ObstacleDomain, cone: &ConvexCone, arcs: &[(f64, f64)], order: usize, mut f: F) -> Result<f64>
where
    F: FnMut([f64; 2], [f64; 2]) -> Result<f64>,
{
    let (nodes, weights) = gauss_legendre(order);
    let mut total = 0.0;
    for &(a, b) in arcs {
        for w in panels(a, b).windows(2) {
            let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            let mut s = 0.0;
            for (x, wt) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let p = domain.boundary_point(t)?;
                let m = cone.margin(&p);
                let scale = WALL_TOL * p[0].hypot(p[1]).max(1.0);
                let factor = if m > scale {
                    1.0
                } else if m >= -scale {
                    0.5
                } else {
                    0.0
                };
                if factor > 0.0 {
                    s += wt * factor * f(p, domain.boundary_tangent(t)?)?;
                }
            }
            total += half * s;
        }
    }
    Ok(total)
}

fn estimate<F>(domain: &ObstacleDomain, cone: &ConvexCone, order: usize, mut f: F) -> Result<Estimate>
where
    F: FnMut([f64; 2], [f64; 2]) -> Result<f64>,
{
    let arcs = arcs_inside(domain, cone)?;
    let coarse = integrate(domain, cone, &arcs, order, &mut f)?;
    let fine = integrate(domain, cone, &arcs, 2 * order, &mut f)?;
    Ok(Estimate { value: fine, error: (fine - coarse).abs() })
}

fn perimeter_of(domain: &ObstacleDomain, cone: &ConvexCone, gauge: &Gauge, order: usize) -> Result<Estimate> {
    estimate(domain, cone, order, |_, d| Ok(gauge.eval(&[d[1], -d[0]])?))
}

fn volume_of(domain: &ObstacleDomain, cone: &ConvexCone, set: &MeasurableSetSpec) -> Result<VolumeEstimate> {
    let quadrature = estimate(domain, cone, set.quadrature_order, |p, d| Ok(0.5 * (p[0] * d[1] - p[1] * d[0])))?;
    let c = domain.center();
    let r = 1.05 * domain.max_polar_radius()?;
    let area = 4.0 * r * r;
    let mut rng = ChaCha8Rng::seed_from_u64(set.seed);
    let mut hits = 0usize;
    for _ in 0..set.mc_samples {
        let x = [c[0] + r * rng.gen_range(-1.0..1.0), c[1] + r * rng.gen_range(-1.0..1.0)];
        if cone.contains(&x) && domain.contains(x)? {
            hits += 1;
        }
    }
    let n = set.mc_samples as f64;
    let frac = hits as f64 / n;
    let monte_carlo = Estimate { value: area * frac, error: area * (frac * (1.0 - frac) / n).sqrt() };
    let discrepancy = (quadrature.value - monte_carlo.value).abs();
    // a Monte-Carlo sample count of zero hits still has a nonzero error floor
    let allowed = 5.0 * quadrature.error.hypot(monte_carlo.error.max(area / n));
    if discrepancy > allowed {
        return Err(WulffError::VolumeMismatch { quadrature: quadrature.value, monte_carlo: monte_carlo.value, allowed });
    }
    Ok(VolumeEstimate { quadrature, monte_carlo, discrepancy })
}

/// `P_H(E; Σ) = ∫_{Σ∩∂E} H(ν) d𝓗¹`.
pub fn anisotropic_perimeter(set: &MeasurableSetSpec, cone: &ConvexCone, gauge: &Gauge) -> Result<Estimate> {
    let domain = domain_for(set, gauge)?;
    perimeter_of(&domain, cone, gauge, set.quadrature_order)
}

/// `𝓗²(Σ ∩ E)` by boundary quadrature, cross-checked by seeded Monte-Carlo.
///
/// The gauge is only used to resolve Wulff-ball shapes.
pub fn cone_volume(set: &MeasurableSetSpec, cone: &ConvexCone, gauge: &Gauge) -> Result<VolumeEstimate> {
    let domain = domain_for(set, gauge)?;
    volume_of(&domain, cone, set)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WulffReference {
    pub perimeter: Estimate,
    pub volume: VolumeEstimate,
    /// `P_H(B₁^{H₀}; Σ) / 𝓗²(Σ ∩ B₁^{H₀})^{1/2}`.
    pub quotient: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsoperimetricReport {
    pub perimeter: Estimate,
    pub volume: VolumeEstimate,
    pub quotient: f64,
    pub reference: f64,
    /// `quotient − reference`.
    pub deficit: f64,
    /// Propagated quadrature error of the deficit.
    pub tolerance: f64,
}

fn quotient(p: Estimate, v: Estimate) -> Result<(f64, f64)> {
    if v.value <= 0.0 {
        return Err(WulffError::EmptyVolume);
    }
    let q = p.value / v.value.sqrt();
    let err = p.error / v.value.sqrt() + 0.5 * q * v.error / v.value;
    Ok((q, err))
}

/// Isoperimetric quotients for a fixed `(gauge, cone)` pair; the reference
/// Wulff quotient is computed once on first use.
#[derive(Debug)]
pub struct IsoperimetricEvaluator {
    gauge: Gauge,
    cone: ConvexCone,
    reference: OnceLock<WulffReference>,
}

impl IsoperimetricEvaluator {
    pub fn new(gauge: Gauge, cone: ConvexCone) -> Self {
        Self { gauge, cone, reference: OnceLock::new() }
    }

    pub fn gauge(&self) -> &Gauge {
        &self.gauge
    }

    pub fn cone(&self) -> &ConvexCone {
        &self.cone
    }

    /// The unit Wulff ball at the vertex.
    pub fn reference(&self) -> Result<&WulffReference> {
        if let Some(r) = self.reference.get() {
            return Ok(r);
        }
        let set = MeasurableSetSpec::wulff_ball_shifted([0.0, 0.0], 1.0).with_quadrature_order(20);
        let domain = domain_for(&set, &self.gauge)?;
        let perimeter = perimeter_of(&domain, &self.cone, &self.gauge, set.quadrature_order)?;
        let volume = volume_of(&domain, &self.cone, &set)?;
        let (q, tolerance) = quotient(perimeter, volume.quadrature)?;
        let _ = self.reference.set(WulffReference { perimeter, volume, quotient: q, tolerance });
        Ok(self.reference.get().expect("reference was just set"))
    }

    pub fn evaluate(&self, set: &MeasurableSetSpec) -> Result<IsoperimetricReport> {
        let reference = *self.reference()?;
        let domain = domain_for(set, &self.gauge)?;
        let perimeter = perimeter_of(&domain, &self.cone, &self.gauge, set.quadrature_order)?;
        let volume = volume_of(&domain, &self.cone, set)?;
        let (q, err) = quotient(perimeter, volume.quadrature)?;
        Ok(IsoperimetricReport {
            perimeter,
            volume,
            quotient: q,
            reference: reference.quotient,
            deficit: q - reference.quotient,
            tolerance: err + reference.tolerance,
        })
    }
}

/// `P_H(E; Σ) / 𝓗²(Σ ∩ E)^{1/2}` with the reference quotient and deficit.
pub fn isoperimetric_quotient(set: &MeasurableSetSpec, cone: &ConvexCone, gauge: &Gauge) -> Result<IsoperimetricReport> {
    IsoperimetricEvaluator::new(gauge.clone(), cone.clone()).evaluate(set)
}

/// What the inequality predicts for a battery case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Expectation {
    /// Vertex-centered (or free-axis translated) Wulff ball: deficit 0.
    Equality,
    /// Not a Wulff ball: deficit strictly positive.
    Strict,
}

#[derive(Debug, Clone)]
pub struct BatteryCase {
    pub label: &'static str,
    pub gauge: Gauge,
    pub cone: ConvexCone,
    pub set: MeasurableSetSpec,
    pub expectation: Expectation,
}

/// The bundled `(set, cone, gauge)` triples.
pub fn standard_battery() -> Vec<BatteryCase> {
    let euclid = Gauge::euclidean(2).expect("valid gauge");
    let l4 = Gauge::lp(2, 4.0).expect("valid gauge");
    let quad = Gauge::quadratic(nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).expect("valid gauge");
    let shifted = Gauge::shifted(vec![0.3, 0.1]).expect("valid gauge");
    let whole = ConvexCone::whole_space(2).expect("valid cone");
    let quarter = ConvexCone::quarter_plane();
    let upper = ConvexCone::upper_half_plane();
    let sector = ConvexCone::sector(std::f64::consts::FRAC_PI_3, 0.4).expect("valid cone");
    let wulff = |c: [f64; 2], r: f64| MeasurableSetSpec::wulff_ball_shifted(c, r);
    let case = |label, gauge: &Gauge, cone: &ConvexCone, set, expectation| BatteryCase {
        label,
        gauge: gauge.clone(),
        cone: cone.clone(),
        set,
        expectation,
    };
    use Expectation::{Equality, Strict};
    vec![
        case("disk_plane", &euclid, &whole, wulff([0.0, 0.0], 1.0), Equality),
        case("disk_quarter", &euclid, &quarter, wulff([0.0, 0.0], 1.0), Equality),
        case("l4_wulff_plane", &l4, &whole, wulff([0.0, 0.0], 1.0), Equality),
        case("l4_wulff_quarter", &l4, &quarter, wulff([0.0, 0.0], 1.7), Equality),
        case("l4_wulff_halfplane_free_shift", &l4, &upper, wulff([0.8, 0.0], 1.0), Equality),
        case("quadratic_wulff_sector", &quad, &sector, wulff([0.0, 0.0], 1.0), Equality),
        case("shifted_wulff_plane", &shifted, &whole, wulff([0.0, 0.0], 1.0), Equality),
        case(
            "ellipse_plane",
            &euclid,
            &whole,
            MeasurableSetSpec::new(ObstacleShape::Ellipse { center: [0.0, 0.0], semi_axes: [2.0, 1.0] }),
            Strict,
        ),
        case("l4_wulff_quarter_offaxis", &l4, &quarter, wulff([0.5, 0.5], 1.0), Strict),
        case(
            "disk_halfplane_offaxis",
            &euclid,
            &upper,
            MeasurableSetSpec::new(ObstacleShape::EuclideanBall { center: [0.0, 0.5], radius: 1.0 }),
            Strict,
        ),
        case(
            "perturbed_disk_plane",
            &euclid,
            &whole,
            MeasurableSetSpec::new(ObstacleShape::PerturbedWulffBall {
                center: [0.0, 0.0],
                radius: 1.0,
                amplitude: 0.2,
                frequency: 3,
            }),
            Strict,
        ),
        case(
            "disk_in_l4_plane",
            &l4,
            &whole,
            MeasurableSetSpec::new(ObstacleShape::EuclideanBall { center: [0.0, 0.0], radius: 1.0 }),
            Strict,
        ),
        case(
            "ellipse_l4_quarter",
            &l4,
            &quarter,
            MeasurableSetSpec::new(ObstacleShape::Ellipse { center: [0.0, 0.0], semi_axes: [2.0, 1.0] }),
            Strict,
        ),
    ]
}

/// One CSV row per evaluated set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsoperimetryRow {
    pub label: String,
    pub perimeter: f64,
    pub volume: f64,
    pub quotient: f64,
    pub deficit: f64,
}

impl IsoperimetryRow {
    pub fn new(label: impl Into<String>, r: &IsoperimetricReport) -> Self {
        Self {
            label: label.into(),
            perimeter: r.perimeter.value,
            volume: r.volume.value(),
            quotient: r.quotient,
            deficit: r.deficit,
        }
    }
}

/// Writes `label,perimeter,volume,quotient,deficit` rows with fixed
/// scientific formatting.
pub fn write_isoperimetry_csv<W: Write>(rows: &[IsoperimetryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| WulffError::Csv(e.to_string());
    w.write_record(["label", "perimeter", "volume", "quotient", "deficit"]).map_err(fail)?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            format!("{:.12e}", r.perimeter),
            format!("{:.12e}", r.volume),
            format!("{:.12e}", r.quotient),
            format!("{:.12e}", r.deficit),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| WulffError::Csv(e.to_string()))?;
    Ok(())
}
