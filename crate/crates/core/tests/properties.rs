use std::collections::BTreeMap;

use geosieve::certify::cq_distance;
use geosieve::charts::{zoo_metric, ChartMetric};
use geosieve::grassmann::{generic_score, plane_with_normal, TangentPlane};
use geosieve::linalg::{self, Vec3};
use geosieve::perturb::{adapted_chart, deform};
use geosieve::tensor::curvature_at;
use geosieve::Point3;
use proptest::prelude::*;

fn fourier() -> ChartMetric {
    let p = BTreeMap::from([("seed".to_string(), 3.0), ("amp".to_string(), 0.02)]);
    zoo_metric("random_fourier", &p).unwrap()
}

fn layered(center: [f64; 3], normal: Vec3, s: f64) -> ChartMetric {
    let base = zoo_metric("flat_torus", &BTreeMap::new()).unwrap();
    let plane = plane_with_normal(&linalg::IDENTITY, Point3(center), &normal).unwrap();
    let (_, mut spec) = adapted_chart(&plane, 100.0, 0.01, 0.2, 0.1).unwrap();
    spec.s = s;
    deform(&base, spec).unwrap().metric().clone()
}

fn unit() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-1.0f64..1.0)
        .prop_filter("not too short", |v| linalg::norm(v) > 0.2)
        .prop_map(|v| linalg::scale(&v, 1.0 / linalg::norm(&v)))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-7 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn score_ignores_in_plane_rotation_and_normal_sign(
        x in prop::array::uniform3(0.0f64..1.0),
        nu in unit(),
        theta in 0.0f64..std::f64::consts::TAU,
    ) {
        let m = fourier();
        let c = curvature_at(&m, &Point3(x)).unwrap();
        let plane = plane_with_normal(&c.g, Point3(x), &nu).unwrap();
        let (cs, sn) = (theta.cos(), theta.sin());
        let turned = TangentPlane {
            base: plane.base,
            e1: linalg::add(&linalg::scale(&plane.e1, cs), &linalg::scale(&plane.e2, sn)),
            e2: linalg::sub(&linalg::scale(&plane.e2, cs), &linalg::scale(&plane.e1, sn)),
            n: linalg::scale(&plane.n, -1.0),
        };
        let a = generic_score(&c, &plane).value;
        let b = generic_score(&c, &turned).value;
        prop_assert!(close(a, b), "{a} vs {b}");
    }

    #[test]
    fn score_is_periodic(x in prop::array::uniform3(0.0f64..1.0), nu in unit()) {
        let m = fourier();
        let shifted = [x[0] + 1.0, x[1] - 2.0, x[2] + 3.0];
        let c = curvature_at(&m, &Point3(x)).unwrap();
        let d = curvature_at(&m, &Point3(shifted)).unwrap();
        let a = generic_score(&c, &plane_with_normal(&c.g, Point3(x), &nu).unwrap()).value;
        let b = generic_score(&d, &plane_with_normal(&d.g, Point3(shifted), &nu).unwrap()).value;
        prop_assert!(close(a, b), "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn cq_distance_is_a_metric(
        c1 in prop::array::uniform3(0.0f64..1.0),
        c2 in prop::array::uniform3(0.0f64..1.0),
        n1 in unit(),
        n2 in unit(),
        s1 in 1e-12f64..1e-9,
        s2 in 1e-12f64..1e-9,
        q in 0usize..=3,
    ) {
        let a = zoo_metric("flat_torus", &BTreeMap::new()).unwrap();
        let b = layered(c1, n1, s1);
        let c = layered(c2, n2, s2);
        let grid = [7, 7, 7];
        prop_assert_eq!(cq_distance(&b, &b, q, grid).unwrap(), 0.0);
        let ab = cq_distance(&a, &b, q, grid).unwrap();
        let ba = cq_distance(&b, &a, q, grid).unwrap();
        prop_assert_eq!(ab, ba);
        let bc = cq_distance(&b, &c, q, grid).unwrap();
        let ac = cq_distance(&a, &c, q, grid).unwrap();
        prop_assert!(ac <= (ab + bc) * (1.0 + 1e-12), "{ac} > {ab} + {bc}");
    }
}
