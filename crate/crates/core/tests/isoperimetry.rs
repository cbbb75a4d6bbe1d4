use finsler_core::wulff::{standard_battery, Expectation, IsoperimetricEvaluator};

#[test]
fn battery_deficits_have_the_predicted_sign() {
    for case in standard_battery() {
        let ev = IsoperimetricEvaluator::new(case.gauge.clone(), case.cone.clone());
        let r = ev.evaluate(&case.set).unwrap();
        println!("{:32} q={:.10} ref={:.10} deficit={:+.3e} tol={:.1e}", case.label, r.quotient, r.reference, r.deficit, r.tolerance);
        assert!(r.deficit >= -1e-6, "{}", case.label);
        match case.expectation {
            Expectation::Equality => assert!(r.deficit <= 1e-6, "{}", case.label),
            Expectation::Strict => assert!(r.deficit >= 0.01, "{}", case.label),
        }
    }
}

mod oracles {
    use std::f64::consts::TAU;
    use std::sync::Arc;

    use finsler_core::gauge::{DualGauge, Gauge};
    use finsler_core::geometry::{ConvexCone, ObstacleDomain, ObstacleShape};
    use finsler_core::wulff::{anisotropic_perimeter, cone_volume, MeasurableSetSpec};
    use proptest::prelude::*;

    /// Σ_edges |e|·H(ν_e) and the shoelace area of an inscribed polygon.
    fn polygon(shape: &ObstacleShape, g: &Gauge, n: usize) -> (f64, f64) {
        let dom = ObstacleDomain::new(shape.clone(), Arc::new(DualGauge::new(g.clone()))).unwrap();
        let pts: Vec<[f64; 2]> = (0..n).map(|k| dom.boundary_point(TAU * k as f64 / n as f64).unwrap()).collect();
        let (mut per, mut area) = (0.0, 0.0);
        for k in 0..n {
            let (a, b) = (pts[k], pts[(k + 1) % n]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            // outward normal of a counterclockwise edge, unnormalized
            per += g.eval(&[dy, -dx]).unwrap();
            area += 0.5 * (a[0] * b[1] - a[1] * b[0]);
        }
        (per, area)
    }

    fn shapes() -> Vec<(ObstacleShape, Gauge)> {
        let l4 = Gauge::lp(2, 4.0).unwrap();
        let e = Gauge::euclidean(2).unwrap();
        vec![
            (ObstacleShape::WulffBall { center: [0.0, 0.0], radius: 1.0 }, l4.clone()),
            (ObstacleShape::Ellipse { center: [0.3, -0.2], semi_axes: [2.0, 1.0] }, l4.clone()),
            (ObstacleShape::PerturbedWulffBall { center: [0.0, 0.0], radius: 1.0, amplitude: 0.2, frequency: 3 }, e.clone()),
            (ObstacleShape::EuclideanBall { center: [0.0, 0.0], radius: 1.0 }, Gauge::shifted(vec![0.3, 0.1]).unwrap()),
        ]
    }

    #[test]
    fn perimeter_matches_the_polygon_formula() {
        let whole = ConvexCone::whole_space(2).unwrap();
        for (shape, g) in shapes() {
            let set = MeasurableSetSpec::new(shape.clone());
            let p = anisotropic_perimeter(&set, &whole, &g).unwrap().value;
            let v = cone_volume(&set, &whole, &g).unwrap().value();
            let (pp, pa) = polygon(&shape, &g, 20_000);
            assert!((p - pp).abs() <= 1e-6 * p, "{shape:?}: {p} vs {pp}");
            assert!((v - pa).abs() <= 1e-6 * v, "{shape:?}: {v} vs {pa}");
        }
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        let quarter = ConvexCone::quarter_plane();
        for (shape, g) in shapes() {
            let v = cone_volume(&MeasurableSetSpec::new(shape), &quarter, &g).unwrap();
            assert!(v.discrepancy <= 5.0 * v.monte_carlo.error.max(1e-3));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn perimeter_and_volume_scale_homogeneously(idx in 0usize..4, big in any::<bool>(), quarter in any::<bool>()) {
            let (shape, g) = shapes().swap_remove(idx);
            let cone = if quarter { ConvexCone::quarter_plane() } else { ConvexCone::whole_space(2).unwrap() };
            let t = if big { 2.0 } else { 0.5 };
            let set = MeasurableSetSpec::new(shape);
            let p1 = anisotropic_perimeter(&set, &cone, &g).unwrap().value;
            let pt = anisotropic_perimeter(&set.scaled(t), &cone, &g).unwrap().value;
            let v1 = cone_volume(&set, &cone, &g).unwrap().value();
            let vt = cone_volume(&set.scaled(t), &cone, &g).unwrap().value();
            prop_assert!((pt - t * p1).abs() <= 1e-6 * pt);
            prop_assert!((vt - t * t * v1).abs() <= 1e-6 * vt);
        }
    }
}
