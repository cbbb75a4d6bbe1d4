use std::sync::Arc;

use finsler_core::gauge::{DualGauge, FluxMap, Gauge};
use finsler_core::geometry::{build_region, mesh_region, BoundaryTag, ConvexCone, ObstacleDomain, ObstacleShape, Region};
use finsler_core::identities::{boundary_flux, ring_flux};
use finsler_core::solver::{
    comparison_check, h1_error, neumann_residuals, solve_truncated, DirichletData, Field, InitialGuess, SolveOptions,
    SolveReport, TruncatedProblem,
};
use nalgebra::DMatrix;

fn region(gauge: Gauge, cone: ConvexCone, shape: ObstacleShape, r: f64) -> Region {
    let dual = Arc::new(DualGauge::new(gauge));
    build_region(cone, ObstacleDomain::new(shape, dual).unwrap(), r).unwrap()
}

fn unit_ball() -> ObstacleShape {
    ObstacleShape::WulffBall { center: [0.0, 0.0], radius: 1.0 }
}

fn solve(region: &Region, h: f64, opts: &SolveOptions) -> SolveReport {
    let mesh = Arc::new(mesh_region(region, h).unwrap());
    let problem = TruncatedProblem::conformal(region, mesh).unwrap();
    solve_truncated(&problem, opts).unwrap()
}

fn log_gradient(dual: &DualGauge) -> impl Fn([f64; 2]) -> [f64; 2] + '_ {
    |x| {
        let v = dual.eval_point(&x).unwrap();
        [v.gradient[0] / v.value, v.gradient[1] / v.value]
    }
}

#[test]
fn euclidean_quarter_plane_converges_at_first_order() {
    let g = Gauge::euclidean(2).unwrap();
    let dual = DualGauge::new(g.clone());
    let reg = region(g, ConvexCone::quarter_plane(), unit_ball(), 8.0);
    let errors: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|h| h1_error(&solve(&reg, *h, &SolveOptions::default()).field, log_gradient(&dual)))
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 0.9, "{errors:?}");
    }
}

#[test]
fn ordered_data_give_ordered_solutions() {
    for (g, cone) in [
        (Gauge::lp(2, 4.0).unwrap(), ConvexCone::quarter_plane()),
        (Gauge::euclidean(2).unwrap(), ConvexCone::upper_half_plane()),
    ] {
        let reg = region(g, cone, ObstacleShape::Ellipse { center: [0.0, 0.0], semi_axes: [1.5, 1.0] }, 6.0);
        let mesh = Arc::new(mesh_region(&reg, 0.1).unwrap());
        let lower = TruncatedProblem::conformal(&reg, mesh.clone()).unwrap();
        let upper = lower.clone().with_data(DirichletData { gamma0: 0.3, gamma_r: 6f64.ln() + 0.1 });
        let opts = SolveOptions::default();
        let (a, b) = (solve_truncated(&lower, &opts).unwrap(), solve_truncated(&upper, &opts).unwrap());
        let cmp = comparison_check(&a.field, &b.field, 1e-8).unwrap();
        assert_eq!(cmp.violations, 0, "{cmp:?}");
        assert!(cmp.checked > 100);
    }
}

#[test]
fn random_starts_reach_the_same_minimizer() {
    let reg = region(
        Gauge::quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap(),
        ConvexCone::whole_space(2).unwrap(),
        ObstacleShape::Ellipse { center: [0.0, 0.0], semi_axes: [1.2, 0.8] },
        5.0,
    );
    let mesh = Arc::new(mesh_region(&reg, 0.15).unwrap());
    let problem = TruncatedProblem::conformal(&reg, mesh).unwrap();
    let run = |seed| {
        let opts = SolveOptions { initial: InitialGuess::Random { seed }, ..SolveOptions::default() };
        solve_truncated(&problem, &opts).unwrap()
    };
    let (a, b) = (run(1), run(2));
    let diff = a.field.values().iter().zip(b.field.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff <= 10.0 * SolveOptions::default().newton_tolerance, "{diff}");
}

#[test]
fn doubling_the_gauge_keeps_the_minimizer() {
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let g = Gauge::quadratic(a.clone()).unwrap();
    let reg = region(g.clone(), ConvexCone::quarter_plane(), ObstacleShape::EuclideanBall { center: [0.0, 0.0], radius: 1.0 }, 6.0);
    let mesh = Arc::new(mesh_region(&reg, 0.1).unwrap());
    let base = TruncatedProblem::conformal(&reg, mesh).unwrap();
    let doubled = base.clone().with_operator(Gauge::quadratic(4.0 * a).unwrap()).unwrap();
    let opts = SolveOptions::default();
    let (a, b) = (solve_truncated(&base, &opts).unwrap(), solve_truncated(&doubled, &opts).unwrap());
    let diff = a.field.values().iter().zip(b.field.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-8, "{diff}");
    assert!((b.energy_unregularized / a.energy_unregularized - 4.0).abs() < 1e-8);
}

#[test]
fn flux_through_obstacle_matches_outer_ring() {
    let g = Gauge::lp(2, 4.0).unwrap();
    let dual = DualGauge::new(g.clone());
    let cone = ConvexCone::quarter_plane();
    let reg = region(g, cone.clone(), ObstacleShape::Ellipse { center: [0.0, 0.0], semi_axes: [1.5, 1.0] }, 8.0);
    let mut gaps = Vec::new();
    for h in [0.1, 0.05] {
        let rep = solve(&reg, h, &SolveOptions::default());
        let inner = -boundary_flux(&rep.field, BoundaryTag::Gamma0);
        let outer = boundary_flux(&rep.field, BoundaryTag::GammaR);
        let ring = ring_flux(&rep.field, &dual, &cone, 4.0, 512).unwrap();
        assert!((inner - outer).abs() < 0.05 * outer, "{inner} {outer}");
        gaps.push((inner - ring).abs() / ring);
    }
    assert!(gaps[1] < gaps[0] && gaps[1] < 0.02, "{gaps:?}");
}

#[test]
fn linear_field_wall_residual_is_the_tangential_flux() {
    // H(ξ) = √(ξᵀAξ): a(e₁) = A e₁ for p = 2, so on the wall x₂ = 0 the
    // normalized residual is |A₂₁| / √A₁₁
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let g = Gauge::quadratic(a).unwrap();
    let reg = region(g.clone(), ConvexCone::quarter_plane(), unit_ball(), 4.0);
    let mesh = Arc::new(mesh_region(&reg, 0.2).unwrap());
    let field = Field::interpolate(mesh.clone(), FluxMap::new(g, 2.0).unwrap(), |x| x[0]).unwrap();
    let expected = 0.3 / 2f64.sqrt();
    let mut seen = 0;
    for (i, r) in neumann_residuals(&field) {
        let f = &mesh.facets()[i];
        if mesh.facet_normal(f)[1] < -0.5 {
            assert!((r - expected).abs() < 1e-12, "{r}");
            seen += 1;
        }
    }
    assert!(seen > 0);
}
