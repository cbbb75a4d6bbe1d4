use std::collections::HashMap;
use std::fmt::{self, Write as _};

use serde::Serialize;

use super::{GeometryError, Result};

/// Boundary components of the truncated region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum BoundaryTag {
    /// `Σ ∩ ∂Ω`, Dirichlet.
    Gamma0,
    /// `∂Σ` between the obstacle and the truncation sphere, flux-free.
    Gamma1,
    /// `Σ ∩ ∂B_R^{H₀}`, Dirichlet.
    GammaR,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 3] = [Self::Gamma0, Self::Gamma1, Self::GammaR];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gamma0 => "gamma0",
            Self::Gamma1 => "gamma1",
            Self::GammaR => "gammaR",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A boundary edge, oriented so that its cell lies on the left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
    pub cell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshStats {
    pub vertices: usize,
    pub triangles: usize,
    pub facets_gamma0: usize,
    pub facets_gamma1: usize,
    pub facets_gamma_r: usize,
    pub min_angle_deg: f64,
    pub max_edge: f64,
    /// Longest edge of a triangle touching `Γ₀`.
    pub max_edge_gamma0: f64,
    pub target_h: f64,
}

/// Conforming planar triangulation with tagged boundary facets.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    facets: Vec<Facet>,
    h: f64,
    areas: Vec<f64>,
    basis: Vec<[[f64; 2]; 3]>,
    locator: Locator,
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Mesh {
    /// Builds a mesh, orienting triangles counterclockwise and facets with
    /// their cell on the left. Every boundary edge must carry exactly one tag.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        tagged: Vec<([usize; 2], BoundaryTag)>,
        h: f64,
    ) -> Result<Self> {
        let n = vertices.len();
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let mut areas = Vec::with_capacity(triangles.len());
        let mut basis = Vec::with_capacity(triangles.len());
        for (k, t) in triangles.iter_mut().enumerate() {
            if t.iter().any(|&v| v >= n) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(GeometryError::InvalidMesh(format!("triangle {k} has invalid vertex indices")));
            }
            let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            let mut det = cross(sub(b, a), sub(c, a));
            if det < 0.0 {
                t.swap(1, 2);
                det = -det;
            }
            let scale = dist(a, b).max(dist(b, c)).max(dist(a, c));
            if det <= 1e-14 * scale * scale {
                return Err(GeometryError::InvalidMesh(format!("triangle {k} is degenerate")));
            }
            let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            // ∇φ_i = rot(opposite edge)/det
            let g = |p: [f64; 2], q: [f64; 2]| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
            basis.push([g(b, c), g(c, a), g(a, b)]);
            areas.push(0.5 * det);
        }
        let mut edges: HashMap<(usize, usize), Vec<(usize, bool)>> = HashMap::new();
        for (k, t) in triangles.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                // `true` when the triangle traverses the edge as (min, max)
                edges.entry((a.min(b), a.max(b))).or_default().push((k, a < b));
            }
        }
        for (e, cells) in &edges {
            if cells.len() > 2 {
                return Err(GeometryError::InvalidMesh(format!("edge {e:?} is shared by more than two triangles")));
            }
        }
        let mut facets = Vec::with_capacity(tagged.len());
        let mut seen = HashMap::new();
        for (nodes, tag) in tagged {
            let key = (nodes[0].min(nodes[1]), nodes[0].max(nodes[1]));
            let Some(cells) = edges.get(&key) else {
                return Err(GeometryError::InvalidMesh(format!("facet {nodes:?} is not a mesh edge")));
            };
            if cells.len() != 1 {
                return Err(GeometryError::InvalidMesh(format!("facet {nodes:?} is an interior edge")));
            }
            if seen.insert(key, tag).is_some() {
                return Err(GeometryError::InvalidMesh(format!("facet {nodes:?} is tagged twice")));
            }
            let (cell, forward) = cells[0];
            let nodes = if forward { [key.0, key.1] } else { [key.1, key.0] };
            facets.push(Facet { nodes, tag, cell });
        }
        let untagged = edges.iter().filter(|(k, c)| c.len() == 1 && !seen.contains_key(k)).count();
        if untagged > 0 {
            return Err(GeometryError::InvalidMesh(format!("{untagged} boundary edges carry no tag")));
        }
        facets.sort_by_key(|f| (f.tag, f.nodes));
        let locator = Locator::new(&vertices, &triangles, &areas);
        Ok(Self { vertices, triangles, facets, h, areas, basis, locator })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn facets_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &Facet> {
        self.facets.iter().filter(move |f| f.tag == tag)
    }

    /// Target mesh size used at generation.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self, cell: usize) -> f64 {
        self.areas[cell]
    }

    /// Gradients of the three barycentric basis functions of `cell`.
    pub fn basis_gradients(&self, cell: usize) -> &[[f64; 2]; 3] {
        &self.basis[cell]
    }

    /// Gradient of the piecewise-linear interpolant of `values` on `cell`.
    pub fn gradient(&self, values: &[f64], cell: usize) -> [f64; 2] {
        let t = self.triangles[cell];
        let b = &self.basis[cell];
        let mut g = [0.0; 2];
        for i in 0..3 {
            g[0] += values[t[i]] * b[i][0];
            g[1] += values[t[i]] * b[i][1];
        }
        g
    }

    pub fn facet_length(&self, f: &Facet) -> f64 {
        dist(self.vertices[f.nodes[0]], self.vertices[f.nodes[1]])
    }

    pub fn facet_midpoint(&self, f: &Facet) -> [f64; 2] {
        let (a, b) = (self.vertices[f.nodes[0]], self.vertices[f.nodes[1]]);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    /// Outward unit normal of a boundary facet.
    pub fn facet_normal(&self, f: &Facet) -> [f64; 2] {
        let d = sub(self.vertices[f.nodes[1]], self.vertices[f.nodes[0]]);
        let len = d[0].hypot(d[1]);
        [d[1] / len, -d[0] / len]
    }

    /// Sorted vertices lying on facets with `tag`.
    pub fn nodes_with_tag(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self.facets_with_tag(tag).flat_map(|f| f.nodes).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn tag_measure(&self, tag: BoundaryTag) -> f64 {
        self.facets_with_tag(tag).map(|f| self.facet_length(f)).sum()
    }

    /// Cell containing `x` and its barycentric coordinates.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        self.locator.find(x, |c| self.barycentric(c, x))
    }

    /// Like [`Mesh::locate`] but falls back to the cell with the least
    /// negative barycentric coordinate (points just outside a curved boundary).
    pub fn locate_nearest(&self, x: [f64; 2]) -> (usize, [f64; 3]) {
        if let Some(hit) = self.locate(x) {
            return hit;
        }
        let mut best = (0, [0.0; 3], f64::NEG_INFINITY);
        for c in 0..self.triangles.len() {
            let l = self.barycentric(c, x);
            let m = l[0].min(l[1]).min(l[2]);
            if m > best.2 {
                best = (c, l, m);
            }
        }
        (best.0, best.1)
    }

    pub fn barycentric(&self, cell: usize, x: [f64; 2]) -> [f64; 3] {
        let t = self.triangles[cell];
        let b = &self.basis[cell];
        let p0 = self.vertices[t[0]];
        let d = sub(x, p0);
        let l1 = b[1][0] * d[0] + b[1][1] * d[1];
        let l2 = b[2][0] * d[0] + b[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }

    /// Value of the piecewise-linear interpolant at `x`, if `x` is in the mesh.
    pub fn interpolate(&self, values: &[f64], x: [f64; 2]) -> Option<f64> {
        let (c, l) = self.locate(x)?;
        let t = self.triangles[c];
        Some(l[0] * values[t[0]] + l[1] * values[t[1]] + l[2] * values[t[2]])
    }

    pub fn stats(&self) -> MeshStats {
        let mut min_angle = f64::INFINITY;
        let mut max_edge: f64 = 0.0;
        for t in &self.triangles {
            let p = [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]];
            for i in 0..3 {
                let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
                let u = sub(b, a);
                let v = sub(c, a);
                let ang = cross(u, v).abs().atan2(u[0] * v[0] + u[1] * v[1]);
                min_angle = min_angle.min(ang);
                max_edge = max_edge.max(dist(a, b));
            }
        }
        let mut max_edge_gamma0: f64 = 0.0;
        let g0 = self.nodes_with_tag(BoundaryTag::Gamma0);
        let mut on_g0 = vec![false; self.vertices.len()];
        g0.iter().for_each(|&v| on_g0[v] = true);
        for t in &self.triangles {
            if t.iter().any(|&v| on_g0[v]) {
                for i in 0..3 {
                    max_edge_gamma0 = max_edge_gamma0.max(dist(self.vertices[t[i]], self.vertices[t[(i + 1) % 3]]));
                }
            }
        }
        let count = |tag| self.facets_with_tag(tag).count();
        MeshStats {
            vertices: self.vertices.len(),
            triangles: self.triangles.len(),
            facets_gamma0: count(BoundaryTag::Gamma0),
            facets_gamma1: count(BoundaryTag::Gamma1),
            facets_gamma_r: count(BoundaryTag::GammaR),
            min_angle_deg: min_angle.to_degrees(),
            max_edge,
            max_edge_gamma0,
            target_h: self.h,
        }
    }

    /// Plain-text export:
    ///
    /// ```text
    /// h <target size>
    /// vertices <n>
    /// <x> <y>                 (n lines)
    /// triangles <m>
    /// <i> <j> <k>             (m lines, counterclockwise, 0-based)
    /// facets <f>
    /// <i> <j> <tag>           (f lines, cell on the left, tag ∈ gamma0|gamma1|gammaR)
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "h {:.17e}", self.h);
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.17e} {:.17e}", v[0], v[1]);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "facets {}", self.facets.len());
        for f in &self.facets {
            let _ = writeln!(s, "{} {} {}", f.nodes[0], f.nodes[1], f.tag);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .collect();
        let mut cursor = 0;
        let err = |line: usize, reason: &str| GeometryError::MeshParse { line: line + 1, reason: reason.to_string() };
        let last = lines.last().map_or(0, |(i, _)| *i);
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            let (i, l) = lines.get(cursor).ok_or_else(|| err(last, &format!("unexpected end of input, expected {what}")))?;
            cursor += 1;
            Ok((*i, l.split_whitespace().collect()))
        };
        let parse_f = |i: usize, w: &str| w.parse::<f64>().map_err(|_| err(i, &format!("`{w}` is not a number")));
        let parse_u = |i: usize, w: &str| w.parse::<usize>().map_err(|_| err(i, &format!("`{w}` is not an index")));
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (i, w) = next(&format!("`{key}` header"))?;
            if w.len() != 2 || w[0] != key {
                return Err(err(i, &format!("expected `{key} <value>`")));
            }
            Ok((i, w[1].to_string()))
        };
        let (i, v) = header("h")?;
        let h = parse_f(i, &v)?;
        let (i, v) = header("vertices")?;
        let nv = parse_u(i, &v)?;
        drop(header);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (i, w) = next("a vertex row")?;
            if w.len() != 2 {
                return Err(err(i, "vertex rows hold two coordinates"));
            }
            vertices.push([parse_f(i, w[0])?, parse_f(i, w[1])?]);
        }
        let (i, w) = next("`triangles` header")?;
        if w.len() != 2 || w[0] != "triangles" {
            return Err(err(i, "expected `triangles <count>`"));
        }
        let nt = parse_u(i, w[1])?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (i, w) = next("a triangle row")?;
            if w.len() != 3 {
                return Err(err(i, "triangle rows hold three indices"));
            }
            triangles.push([parse_u(i, w[0])?, parse_u(i, w[1])?, parse_u(i, w[2])?]);
        }
        let (i, w) = next("`facets` header")?;
        if w.len() != 2 || w[0] != "facets" {
            return Err(err(i, "expected `facets <count>`"));
        }
        let nf = parse_u(i, w[1])?;
        let mut tagged = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (i, w) = next("a facet row")?;
            if w.len() != 3 {
                return Err(err(i, "facet rows hold two indices and a tag"));
            }
            let tag = BoundaryTag::from_name(w[2]).ok_or_else(|| err(i, &format!("unknown boundary tag `{}`", w[2])))?;
            tagged.push(([parse_u(i, w[0])?, parse_u(i, w[1])?], tag));
        }
        Self::new(vertices, triangles, tagged, h)
    }
}

/// Uniform bucket grid over the bounding box; each triangle is registered
/// in every bucket its bounding box overlaps.
#[derive(Debug, Clone)]
struct Locator {
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    offsets: Vec<usize>,
    items: Vec<usize>,
}

impl Locator {
    fn new(vertices: &[[f64; 2]], triangles: &[[usize; 3]], areas: &[f64]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        if triangles.is_empty() {
            return Self { origin: [0.0; 2], cell: 1.0, nx: 1, ny: 1, offsets: vec![0, 0], items: Vec::new() };
        }
        let mut sorted: Vec<f64> = areas.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let cell = (2.0 * median).sqrt().max(span / 2048.0);
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize + 1).max(1);
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize + 1).max(1);
        let bucket_range = |t: &[usize; 3]| {
            let mut a = [f64::INFINITY; 2];
            let mut b = [f64::NEG_INFINITY; 2];
            for &v in t {
                for d in 0..2 {
                    a[d] = a[d].min(vertices[v][d]);
                    b[d] = b[d].max(vertices[v][d]);
                }
            }
            let i0 = ((a[0] - lo[0]) / cell).floor().max(0.0) as usize;
            let j0 = ((a[1] - lo[1]) / cell).floor().max(0.0) as usize;
            let i1 = (((b[0] - lo[0]) / cell).floor() as usize).min(nx - 1);
            let j1 = (((b[1] - lo[1]) / cell).floor() as usize).min(ny - 1);
            (i0, j0, i1, j1)
        };
        let mut counts = vec![0usize; nx * ny + 1];
        for t in triangles {
            let (i0, j0, i1, j1) = bucket_range(t);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    counts[j * nx + i + 1] += 1;
                }
            }
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; counts[nx * ny]];
        for (k, t) in triangles.iter().enumerate() {
            let (i0, j0, i1, j1) = bucket_range(t);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    items[fill[j * nx + i]] = k;
                    fill[j * nx + i] += 1;
                }
            }
        }
        Self { origin: lo, cell, nx, ny, offsets: counts, items }
    }

    fn find<F: Fn(usize) -> [f64; 3]>(&self, x: [f64; 2], bary: F) -> Option<(usize, [f64; 3])> {
        let fi = ((x[0] - self.origin[0]) / self.cell).floor();
        let fj = ((x[1] - self.origin[1]) / self.cell).floor();
        if fi < 0.0 || fj < 0.0 || fi as usize >= self.nx || fj as usize >= self.ny {
            return None;
        }
        let b = fj as usize * self.nx + fi as usize;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &c in &self.items[self.offsets[b]..self.offsets[b + 1]] {
            let l = bary(c);
            let m = l[0].min(l[1]).min(l[2]);
            if m >= -1e-12 && best.is_none_or(|(_, _, bm)| m > bm) {
                best = Some((c, l, m));
            }
        }
        best.map(|(c, l, _)| (c, l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Mesh {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let t = vec![[0, 1, 2], [0, 3, 2]];
        let f = vec![
            ([0, 1], BoundaryTag::Gamma0),
            ([1, 2], BoundaryTag::Gamma1),
            ([2, 3], BoundaryTag::GammaR),
            ([3, 0], BoundaryTag::Gamma1),
        ];
        Mesh::new(v, t, f, 1.0).unwrap()
    }

    #[test]
    fn orients_cells_and_facets() {
        let m = square();
        for c in 0..2 {
            assert!((m.area(c) - 0.5).abs() < 1e-15);
        }
        for f in m.facets() {
            let n = m.facet_normal(f);
            let mid = m.facet_midpoint(f);
            // outward: stepping along n leaves the unit square
            let p = [mid[0] + 0.1 * n[0], mid[1] + 0.1 * n[1]];
            assert!(p[0] < 0.0 || p[0] > 1.0 || p[1] < 0.0 || p[1] > 1.0);
        }
        assert!((m.tag_measure(BoundaryTag::Gamma1) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gradients_and_interpolation_are_exact_for_linear_fields() {
        let m = square();
        let vals: Vec<f64> = m.vertices().iter().map(|v| 2.0 * v[0] - 3.0 * v[1] + 1.0).collect();
        for c in 0..2 {
            let g = m.gradient(&vals, c);
            assert!((g[0] - 2.0).abs() < 1e-14 && (g[1] + 3.0).abs() < 1e-14);
        }
        let x = [0.3, 0.8];
        assert!((m.interpolate(&vals, x).unwrap() - (0.6 - 2.4 + 1.0)).abs() < 1e-14);
        assert!(m.interpolate(&vals, [2.0, 0.5]).is_none());
    }

    #[test]
    fn rejects_untagged_and_interior_facets() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let t = vec![[0, 1, 2], [0, 2, 3]];
        let missing = vec![([0, 1], BoundaryTag::Gamma0)];
        assert!(Mesh::new(v.clone(), t.clone(), missing, 1.0).is_err());
        let interior = vec![
            ([0, 1], BoundaryTag::Gamma0),
            ([1, 2], BoundaryTag::Gamma1),
            ([2, 3], BoundaryTag::GammaR),
            ([3, 0], BoundaryTag::Gamma1),
            ([0, 2], BoundaryTag::Gamma1),
        ];
        assert!(Mesh::new(v, t, interior, 1.0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let m = square();
        let text = m.to_text();
        let back = Mesh::from_text(&text).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.facets(), m.facets());
        assert_eq!(back.to_text(), text);
        assert!(matches!(Mesh::from_text("h 1\nvertices 2\n0 0\n"), Err(GeometryError::MeshParse { .. })));
    }
}
