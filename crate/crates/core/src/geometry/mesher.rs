use std::collections::HashMap;
use std::f64::consts::{SQRT_2, TAU};

use super::{BoundaryTag, GeometryError, Mesh, Region, Result};
use crate::gauge::DualGauge;

const MIN_ANGLE_DEG: f64 = 20.0;
const BOUNDARY_SAMPLES: usize = 1024;

/// Triangulates a region on a graded log-polar lattice about the cone vertex.
///
/// Vertex `(i, j)` sits on the ray at angle `θ_j` at radius
/// `r_in(θ_j)^{1-s_i} r_out(θ_j)^{s_i}` with `s_i = i/M`, where `r_in` is the
/// exact obstacle crossing and `r_out = R/H₀(ω)`. Cells are near-square in
/// `(ln r, θ)`, so edges adjacent to `Γ₀` are at most `h` and grow linearly
/// with the distance from the origin. Quads are split along the shorter
/// diagonal, then Lawson flips (boundary edges fixed) make the
/// triangulation constrained Delaunay.
pub fn mesh_region(region: &Region, h: f64) -> Result<Mesh> {
    if !(h.is_finite() && h > 0.0) {
        return Err(GeometryError::InvalidMeshSize(h));
    }
    let obstacle = region.obstacle();
    let pole = lattice_pole(region)?;
    if !obstacle.contains(pole)? {
        return Err(GeometryError::Unsupported(
            "the mesher places vertices along rays from the cone vertex, which must lie inside the obstacle".into(),
        ));
    }
    let (start, span, periodic) = match region.cone().angular_range() {
        None => (0.0, TAU, true),
        Some(r) => (r.start, r.opening, false),
    };
    let dual = region.dual();
    let radius = region.radius();

    // largest boundary speed |dp/dθ| of the inner curve along the rays
    let mut speed: f64 = 0.0;
    let mut prev: Option<[f64; 2]> = None;
    let dtheta_fine = span / BOUNDARY_SAMPLES as f64;
    for k in 0..=BOUNDARY_SAMPLES {
        let theta = start + k as f64 * dtheta_fine;
        let r = obstacle.ray_crossing_from(pole, theta)?;
        let p = [r * theta.cos(), r * theta.sin()];
        speed = speed.max(r);
        if let Some(q) = prev {
            speed = speed.max((p[0] - q[0]).hypot(p[1] - q[1]) / dtheta_fine);
        }
        prev = Some(p);
    }
    // cell diagonal near Γ₀ is about speed·√(Δ² + (e^Δ − 1)²)
    let mut target = h / (SQRT_2 * speed);
    for _ in 0..40 {
        let diag = target.hypot(target.exp_m1());
        target *= (h / speed / diag).min(1.0).sqrt().max(0.9);
        if speed * target.hypot(target.exp_m1()) <= h {
            break;
        }
    }
    let min_cols = if periodic { 8 } else { 2 };
    let ncols_span = ((span / target).ceil() as usize).max(min_cols);
    let dtheta = span / ncols_span as f64;
    let ncols = if periodic { ncols_span } else { ncols_span + 1 };

    let mut r_in = Vec::with_capacity(ncols);
    let mut r_out = Vec::with_capacity(ncols);
    for j in 0..ncols {
        let theta = start + j as f64 * dtheta;
        let w = [theta.cos(), theta.sin()];
        r_in.push(obstacle.ray_crossing_from(pole, theta)?);
        r_out.push(outer_crossing(dual, pole, w, radius)?);
    }
    let gap = r_in.iter().zip(&r_out).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
    if h >= gap / 4.0 {
        return Err(GeometryError::MeshTooCoarse { h, limit: gap / 4.0 });
    }
    let max_log = r_in.iter().zip(&r_out).map(|(a, b)| (b / a).ln()).fold(0.0, f64::max);
    let layers = ((max_log / dtheta).ceil() as usize).max(2);

    let node = |i: usize, j: usize| i * ncols + j;
    let mut vertices: Vec<[f64; 2]> = Vec::with_capacity((layers + 1) * ncols);
    for i in 0..=layers {
        let s = i as f64 / layers as f64;
        for j in 0..ncols {
            let theta = start + j as f64 * dtheta;
            let r = if i == 0 {
                r_in[j]
            } else if i == layers {
                r_out[j]
            } else {
                r_in[j] * (s * (r_out[j] / r_in[j]).ln()).exp()
            };
            vertices.push([pole[0] + r * theta.cos(), pole[1] + r * theta.sin()]);
        }
    }
    let quad_cols = if periodic { ncols } else { ncols - 1 };
    let mut triangles = Vec::with_capacity(2 * layers * quad_cols);
    let d2 = |a: usize, b: usize| {
        let (p, q): ([f64; 2], [f64; 2]) = (vertices[a], vertices[b]);
        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
    };
    for i in 0..layers {
        for j in 0..quad_cols {
            let jn = (j + 1) % ncols;
            // counterclockwise: inner θ_j, outer θ_j, outer θ_{j+1}, inner θ_{j+1}
            let (a, d, c, b) = (node(i, j), node(i + 1, j), node(i + 1, jn), node(i, jn));
            if d2(a, c) <= d2(b, d) {
                triangles.push([a, d, c]);
                triangles.push([a, c, b]);
            } else {
                triangles.push([a, d, b]);
                triangles.push([d, c, b]);
            }
        }
    }
    lawson_flips(&vertices, &mut triangles);

    let mut tagged = Vec::new();
    for j in 0..quad_cols {
        let jn = (j + 1) % ncols;
        tagged.push(([node(0, j), node(0, jn)], BoundaryTag::Gamma0));
        tagged.push(([node(layers, j), node(layers, jn)], BoundaryTag::GammaR));
    }
    if !periodic {
        for i in 0..layers {
            tagged.push(([node(i, 0), node(i + 1, 0)], BoundaryTag::Gamma1));
            tagged.push(([node(i, ncols - 1), node(i + 1, ncols - 1)], BoundaryTag::Gamma1));
        }
    }
    let mesh = Mesh::new(vertices, triangles, tagged, h)?;
    let (angle, at) = worst_angle(&mesh);
    if angle < MIN_ANGLE_DEG {
        return Err(GeometryError::QualityFloor { min_angle: angle, at });
    }
    Ok(mesh)
}

/// Center of the ray lattice: the origin, or for cones with a free factor the
/// projection of the obstacle center onto it when that lies inside the
/// obstacle. Every free-factor point is a vertex of the cone, so walls are
/// still rays from the pole; centering on the obstacle avoids rays that
/// graze its boundary.
fn lattice_pole(region: &Region) -> Result<[f64; 2]> {
    let c = region.obstacle().center();
    let p = region.cone().project_to_free_factor(&c);
    let pole = [p[0], p[1]];
    if pole != [0.0, 0.0] && region.obstacle().contains(pole)? {
        Ok(pole)
    } else {
        Ok([0.0, 0.0])
    }
}

/// `r > 0` with `H₀(pole + r·w) = R`; `R/H₀(w)` for the origin.
fn outer_crossing(dual: &DualGauge, pole: [f64; 2], w: [f64; 2], radius: f64) -> Result<f64> {
    if pole == [0.0, 0.0] {
        return Ok(radius / dual.eval(&w)?);
    }
    let f = |r: f64| -> Result<f64> { Ok(dual.eval(&[pole[0] + r * w[0], pole[1] + r * w[1]])? - radius) };
    // H₀(pole + r w) ≥ r H₀(w) − H₀(−pole)
    let (mut lo, mut hi) = (0.0, (radius + dual.eval(&[-pole[0], -pole[1]])?) / dual.eval(&w)?);
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn worst_angle(mesh: &Mesh) -> (f64, [f64; 2]) {
    let v = mesh.vertices();
    let mut worst = (f64::INFINITY, [0.0; 2]);
    for t in mesh.triangles() {
        for k in 0..3 {
            let (a, b, c) = (v[t[k]], v[t[(k + 1) % 3]], v[t[(k + 2) % 3]]);
            let u = [b[0] - a[0], b[1] - a[1]];
            let w = [c[0] - a[0], c[1] - a[1]];
            let ang = (u[0] * w[1] - u[1] * w[0]).abs().atan2(u[0] * w[0] + u[1] * w[1]).to_degrees();
            if ang < worst.0 {
                worst = (ang, a);
            }
        }
    }
    worst
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// `> 0` when `d` lies strictly inside the circumcircle of counterclockwise `(a, b, c)`.
fn incircle(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Flips interior edges until every one is locally Delaunay. Boundary edges
/// have a single adjacent triangle and are never flipped. Co-circular
/// configurations (relative tolerance) are left alone, so the symmetric
/// lattice keeps its shorter diagonals.
fn lawson_flips(v: &[[f64; 2]], tris: &mut [[usize; 3]]) {
    let mut adjacent: HashMap<(usize, usize), [usize; 2]> = HashMap::new();
    let mut order = Vec::new();
    for (k, t) in tris.iter().enumerate() {
        for e in 0..3 {
            let kk = key(t[e], t[(e + 1) % 3]);
            let entry = adjacent.entry(kk).or_insert([usize::MAX; 2]);
            if entry[0] == usize::MAX {
                entry[0] = k;
                order.push(kk);
            } else {
                entry[1] = k;
            }
        }
    }
    let mut stack: Vec<(usize, usize)> = order.into_iter().rev().collect();
    let mut budget = 50 * tris.len() + 1000;
    while let Some(e) = stack.pop() {
        if budget == 0 {
            break;
        }
        budget -= 1;
        let Some(&[t1, t2]) = adjacent.get(&e) else { continue };
        if t2 == usize::MAX {
            continue;
        }
        // rotate t1 = (a, b, c) so that (a, b) is the edge
        let rot = |t: [usize; 3], a: usize, b: usize| -> Option<[usize; 3]> {
            (0..3).map(|k| [t[k], t[(k + 1) % 3], t[(k + 2) % 3]]).find(|r| r[0] == a && r[1] == b)
        };
        let (a, b) = (e.0, e.1);
        let (first, second) = match (rot(tris[t1], a, b), rot(tris[t2], b, a)) {
            (Some(p), Some(q)) => ((t1, p), (t2, q)),
            _ => match (rot(tris[t1], b, a), rot(tris[t2], a, b)) {
                (Some(p), Some(q)) => ((t1, p), (t2, q)),
                _ => continue,
            },
        };
        let ((ta, [a, b, c]), (tb, [_, _, d])) = (first, second);
        let (pa, pb, pc, pd) = (v[a], v[b], v[c], v[d]);
        let scale = [pa, pb, pc]
            .iter()
            .map(|p| (p[0] - pd[0]).hypot(p[1] - pd[1]))
            .fold(0.0, f64::max);
        if incircle(pa, pb, pc, pd) <= 1e-9 * scale.powi(4) {
            continue;
        }
        if orient(pa, pd, pc) <= 0.0 || orient(pd, pb, pc) <= 0.0 {
            continue;
        }
        tris[ta] = [a, d, c];
        tris[tb] = [d, b, c];
        adjacent.remove(&key(a, b));
        adjacent.insert(key(c, d), [ta, tb]);
        for (edge, from, to) in [(key(a, d), tb, ta), (key(b, c), ta, tb)] {
            if let Some(slot) = adjacent.get_mut(&edge) {
                for s in slot.iter_mut() {
                    if *s == from {
                        *s = to;
                    }
                }
            }
        }
        stack.extend([key(a, d), key(d, b), key(b, c), key(c, a)]);
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gauge::{DualGauge, Gauge};
    use crate::geometry::{build_region, ConvexCone, ObstacleDomain, ObstacleShape};

    fn region(cone: ConvexCone, gauge: Gauge, shape: ObstacleShape, r: f64) -> Region {
        let dual = Arc::new(DualGauge::new(gauge));
        build_region(cone, ObstacleDomain::new(shape, dual).unwrap(), r).unwrap()
    }

    fn unit_wulff() -> ObstacleShape {
        ObstacleShape::WulffBall { center: [0.0, 0.0], radius: 1.0 }
    }

    #[test]
    fn quarter_plane_mesh_has_all_tags() {
        let r = region(ConvexCone::quarter_plane(), Gauge::euclidean(2).unwrap(), unit_wulff(), 8.0);
        let m = mesh_region(&r, 0.25).unwrap();
        let s = m.stats();
        assert!(s.facets_gamma0 > 0 && s.facets_gamma1 > 0 && s.facets_gamma_r > 0);
        assert!(s.min_angle_deg >= 20.0);
        assert!(s.max_edge_gamma0 <= 0.25 * 1.0001, "{s:?}");
    }

    #[test]
    fn whole_space_mesh_has_no_wall_facets() {
        let r = region(ConvexCone::whole_space(2).unwrap(), Gauge::lp(2, 4.0).unwrap(), unit_wulff(), 8.0);
        let m = mesh_region(&r, 0.25).unwrap();
        assert_eq!(m.stats().facets_gamma1, 0);
        // total area of the annulus B_8 \ B_1 for the ℓ^{4/3} unit ball
        let area: f64 = (0..m.triangles().len()).map(|c| m.area(c)).sum();
        assert!(area > 0.0);
    }

    #[test]
    fn refinement_doubles_boundary_facets() {
        let r = region(ConvexCone::quarter_plane(), Gauge::euclidean(2).unwrap(), unit_wulff(), 8.0);
        let a = mesh_region(&r, 0.2).unwrap().stats().facets_gamma0 as f64;
        let b = mesh_region(&r, 0.1).unwrap().stats().facets_gamma0 as f64;
        assert!((b / a - 2.0).abs() < 0.2, "{a} -> {b}");
    }

    #[test]
    fn boundary_vertices_are_on_the_analytic_boundary() {
        let g = Gauge::lp(2, 4.0).unwrap();
        let r = region(ConvexCone::upper_half_plane(), g, unit_wulff(), 6.0);
        let m = mesh_region(&r, 0.2).unwrap();
        for v in m.nodes_with_tag(BoundaryTag::Gamma0) {
            assert!((r.dual().eval(&m.vertices()[v]).unwrap() - 1.0).abs() < 1e-10);
        }
        for v in m.nodes_with_tag(BoundaryTag::GammaR) {
            assert!((r.dual().eval(&m.vertices()[v]).unwrap() - 6.0).abs() < 1e-10);
        }
        for f in m.facets_with_tag(BoundaryTag::Gamma1) {
            let y = m.facet_midpoint(f);
            let n = m.facet_normal(f);
            assert!((y[0] * n[0] + y[1] * n[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn tag_measures_partition_the_boundary() {
        let r = region(
            ConvexCone::sector(1.2, 0.2).unwrap(),
            Gauge::euclidean(2).unwrap(),
            ObstacleShape::Ellipse { center: [0.0, 0.0], semi_axes: [1.5, 1.0] },
            10.0,
        );
        let m = mesh_region(&r, 0.15).unwrap();
        let total: f64 = m.facets().iter().map(|f| m.facet_length(f)).sum();
        let parts: f64 = BoundaryTag::ALL.iter().map(|t| m.tag_measure(*t)).sum();
        assert!((total - parts).abs() <= 1e-10 * total);
    }

    #[test]
    fn rejects_coarse_meshes_and_uncovered_vertex() {
        let r = region(ConvexCone::quarter_plane(), Gauge::euclidean(2).unwrap(), unit_wulff(), 3.0);
        assert!(matches!(mesh_region(&r, 1.0), Err(GeometryError::MeshTooCoarse { .. })));
        let ball = ObstacleShape::EuclideanBall { center: [3.0, 3.0], radius: 1.0 };
        let off = region(ConvexCone::quarter_plane(), Gauge::euclidean(2).unwrap(), ball.clone(), 10.0);
        assert!(matches!(mesh_region(&off, 0.2), Err(GeometryError::Unsupported(_))));
        // in the whole plane the lattice moves to the obstacle center
        let free = region(ConvexCone::whole_space(2).unwrap(), Gauge::euclidean(2).unwrap(), ball, 10.0);
        assert!(mesh_region(&free, 0.2).is_ok());
    }

    #[test]
    fn free_factor_shift_centers_the_lattice() {
        // seen from the origin this ball's top is grazed by the rays
        let g = Gauge::lp(2, 4.0).unwrap();
        let shape = ObstacleShape::WulffBall { center: [0.8, 0.0], radius: 1.0 };
        let r = region(ConvexCone::upper_half_plane(), g, shape, 6.0);
        assert_eq!(lattice_pole(&r).unwrap(), [0.8, 0.0]);
        let m = mesh_region(&r, 0.1).unwrap();
        assert!(m.stats().min_angle_deg >= 20.0);
        for v in m.nodes_with_tag(BoundaryTag::GammaR) {
            assert!((r.dual().eval(&m.vertices()[v]).unwrap() - 6.0).abs() < 1e-10);
        }
        for v in m.nodes_with_tag(BoundaryTag::Gamma0) {
            let x = m.vertices()[v];
            assert!((r.dual().eval(&[x[0] - 0.8, x[1]]).unwrap() - 1.0).abs() < 1e-10);
        }
        for f in m.facets_with_tag(BoundaryTag::Gamma1) {
            assert!(m.facet_midpoint(f)[1].abs() <= 1e-12);
        }
    }

    #[test]
    fn incircle_sign() {
        let (a, b, c) = ([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]);
        assert!(incircle(a, b, c, [0.5, 0.5]) > 0.0);
        assert!(incircle(a, b, c, [2.0, 2.0]) < 0.0);
    }
}
