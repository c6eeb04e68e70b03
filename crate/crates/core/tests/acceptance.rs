//! End-to-end acceptance suite: one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use geosieve::certify::{
    check_curvature_diffs, check_lemma_local_m, check_lemma_local_r, check_main_lemma, check_product_bounds,
};
use geosieve::charts::{zoo_metric, ChartMetric, MetricDocument, ZOO_NAMES};
use geosieve::grassmann::{generic_score, plane_with_normal, rigid_test, TangentPlane};
use geosieve::linalg::{self, Vec3};
use geosieve::perturb::adapted_chart;
use geosieve::pipeline::{genericize, genericize_with_threads, RunConfig};
use geosieve::tensor::{curvature_at, second_bianchi_residual, sectional, symmetry_residual, CurvaturePoint};
use geosieve::{metric_jet, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn zoo(name: &str) -> ChartMetric {
    zoo_metric(name, &BTreeMap::new()).unwrap()
}

fn random_point(m: &ChartMetric, rng: &mut ChaCha8Rng) -> Point3 {
    let d = m.domain();
    let mut p = [0.0; 3];
    for a in 0..3 {
        // Stay off non-periodic boundaries, where some charts degenerate.
        let margin = if m.periodic()[a] { 0.0 } else { 0.02 * d.extent(a) };
        p[a] = rng.gen_range(d.lo[a] + margin..d.hi[a] - margin);
    }
    Point3(p)
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = linalg::norm(&v);
        if n > 0.1 && n <= 1.0 {
            return linalg::scale(&v, 1.0 / n);
        }
    }
}

fn random_plane(m: &ChartMetric, rng: &mut ChaCha8Rng) -> (CurvaturePoint, TangentPlane) {
    let p = random_point(m, rng);
    let c = curvature_at(m, &p).unwrap();
    let plane = plane_with_normal(&c.g, p, &random_unit(rng)).unwrap();
    (c, plane)
}

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

fn report(id: u32, pass: bool, detail: String) -> Outcome {
    println!("criterion {id:>2}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, pass, detail }
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for (name, expect) in [("round_sphere", 1.0), ("hyperbolic_ball", -1.0)] {
        let m = zoo(name);
        for _ in 0..50 {
            let p = random_point(&m, &mut rng);
            let c = curvature_at(&m, &p).unwrap();
            let (u, w) = (random_unit(&mut rng), random_unit(&mut rng));
            let k = sectional(&c.r, &c.g, &u, &w).unwrap();
            worst = worst.max((k - expect).abs());
        }
    }
    let el = t.elapsed();
    report(1, worst <= 1e-6 && el < Duration::from_secs(5), format!("max |sec - (±1)| = {worst:.2e}, {el:.2?}"))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut sym, mut bianchi): (f64, f64) = (0.0, 0.0);
    for name in ZOO_NAMES {
        let m = zoo(name);
        for _ in 0..100 {
            let c = curvature_at(&m, &random_point(&m, &mut rng)).unwrap();
            sym = sym.max(symmetry_residual(&c.r));
            bianchi = bianchi.max(second_bianchi_residual(&c.cov_r));
        }
    }
    let el = t.elapsed();
    report(
        2,
        sym <= 1e-9 && bianchi <= 1e-8 && el < Duration::from_secs(30),
        format!("symmetries + first Bianchi {sym:.2e}, second Bianchi {bianchi:.2e}, {el:.2?}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["flat_torus", "round_sphere", "product_s2xr"] {
        let m = zoo(name);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let (c, plane) = random_plane(&m, &mut rng);
            worst = worst.max(generic_score(&c, &plane).value);
        }
        pass &= worst <= 1e-8;
        parts.push(format!("{name} {worst:.2e}"));
    }
    report(3, pass, format!("max G over 1e4 planes: {}", parts.join(", ")))
}

fn criterion_4() -> Outcome {
    let p = BTreeMap::from([("seed".to_string(), 7.0), ("amp".to_string(), 0.01)]);
    let m = zoo_metric("random_fourier", &p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut disagree, mut rigid) = (0, 0);
    for _ in 0..10_000 {
        let (c, plane) = random_plane(&m, &mut rng);
        let a = rigid_test(&c, &plane, 1e-7);
        let b = generic_score(&c, &plane).value <= 1e-7;
        rigid += usize::from(a);
        disagree += usize::from(a != b);
    }
    report(4, disagree == 0, format!("{disagree} disagreements, {rigid} rigid of 1e4"))
}

fn criterion_5() -> Outcome {
    let r = check_lemma_local_r(100.0, 0.01, 100_000).unwrap();
    let rows: Vec<String> = r.rows.iter().map(|x| format!("{:.3e}", x.residual)).collect();
    report(5, r.pass, format!("rows [|h|_C1, max|h''|, min|h'''| where |h''|<=10, min max] = [{}]", rows.join(", ")))
}

fn criterion_6() -> Outcome {
    let r = check_lemma_local_m(100.0, 0.01, 0.2, 0.1, 16).unwrap();
    let failed: Vec<&str> = r.rows.iter().filter(|x| !x.pass).map(|x| x.check.as_str()).collect();
    report(6, r.pass, format!("{} rows, failed: {:?}", r.rows.len(), failed))
}

fn flat_layer(m: &ChartMetric) -> (TangentPlane, geosieve::perturb::PerturbationSpec) {
    let p = Point3::new(0.5, 0.5, 0.5);
    let g = metric_jet(m, &p).unwrap().g;
    let plane = plane_with_normal(&g, p, &[0.0, 0.0, 1.0]).unwrap();
    let (_, spec) = adapted_chart(&plane, 100.0, 0.01, 0.2, 0.1).unwrap();
    (plane, spec)
}

fn criterion_7() -> Outcome {
    let m = zoo("flat_torus");
    let (_, spec) = flat_layer(&m);
    let s = [1e-3, 1e-2];
    let r = check_curvature_diffs(&m, &spec, &s, 16).unwrap();
    let law = |x: f64| r.rows.iter().find(|row| row.s == x && row.check.starts_with("(b)")).unwrap();
    let bound_ok = s.iter().all(|&x| law(x).residual <= 20.0 * 0.01 * x);
    let c: Vec<f64> = s.iter().map(|&x| r.fitted_at("", x).unwrap()).collect();
    let cb: Vec<f64> = s.iter().map(|&x| r.fitted_at("(b)", x).unwrap()).collect();
    let agree = (c[0] - c[1]).abs() <= 0.05 * c[0].max(c[1]);
    report(
        7,
        bound_ok && r.fitted_constant <= 20.0 && agree,
        format!(
            "fitted C {:.4e} (per s {:.6e}, {:.6e}); law residual/(eps s) {:.2e}, {:.2e}",
            r.fitted_constant, c[0], c[1], cb[0], cb[1]
        ),
    )
}

fn criterion_8() -> Outcome {
    let m = zoo("flat_torus");
    let (plane, spec) = flat_layer(&m);
    let r = check_main_lemma(&m, &plane, &spec, &[1e-3, 1e-2], 200, 8).unwrap();
    report(
        8,
        r.applicable && r.pass_sqrt_k && r.slope_c > 0.0,
        format!(
            "G^s(P) = {:.3e}, {:.3e} vs 0.9 s sqrt K; slope c = {:.3e}; minG = {:.3e}, {:.3e}",
            r.center_g[0], r.center_g[1], r.slope_c, r.min_g[0], r.min_g[1]
        ),
    )
}

fn criteria_9_10() -> Vec<Outcome> {
    let input = zoo("flat_torus");
    let mut cfg = RunConfig::new(input.clone());
    cfg.xi = 0.05;
    cfg.base_grid = [8, 8, 8];
    cfg.fiber_grid = 32;
    cfg.seed = 7;
    let t = Instant::now();
    let (out, cert) = genericize(&cfg).unwrap();
    let el = t.elapsed();
    let json = cert.to_json().unwrap();
    let layers = out.layers.len();
    let nine = report(
        9,
        cert.success && cert.final_min_g >= 1e-4 && cert.c3_used <= 0.05 && el < Duration::from_secs(600),
        format!(
            "final minG {:.3e} (target 1e-4), c3_used {:.3e} (sum {:.3e}, measured {:.3e}), {} layers, {} iterations, {el:.1?}: {}",
            cert.final_min_g, cert.c3_used, cert.c3_sum, cert.c3_measured, layers, cert.iterations, cert.message
        ),
    );

    // Locality: at every point the output is bitwise the input plus only the
    // layers whose outer ball contains the point.
    let doc = out.metric().to_document();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut outside, mut mismatched, mut nearby) = (0, 0, 0);
    let points = 300;
    for _ in 0..points {
        let p = random_point(&input, &mut rng);
        let local: Vec<_> = out
            .layers
            .iter()
            .filter(|l| {
                let inv = linalg::inverse(&l.frame).unwrap();
                let y = linalg::mat_vec(&inv, &input.displacement(&p.0, &l.center.0));
                linalg::norm(&y) < l.rho + l.eta_pad
            })
            .cloned()
            .collect();
        nearby += local.len();
        outside += usize::from(local.is_empty());
        let reference = ChartMetric::from_document(&MetricDocument { layers: local, ..doc.clone() }).unwrap();
        let a = reference.raw_jet(&p).unwrap();
        let b = out.metric().raw_jet(&p).unwrap();
        if format!("{a:?}") != format!("{b:?}") {
            mismatched += 1;
        }
    }
    let (_, again) = genericize_with_threads(&cfg, Some(2)).unwrap();
    let identical = again.to_json().unwrap() == json;
    let ten = report(
        10,
        mismatched == 0 && identical,
        format!(
            "{mismatched} of {points} points differ from input + containing layers (mean {:.1} of {layers} layers contain a point, {outside} points in none); rerun on 2 workers byte-identical: {identical}",
            nearby as f64 / points as f64
        ),
    );
    vec![nine, ten]
}

fn criterion_11() -> Outcome {
    let r = check_product_bounds(1000, 11).unwrap();
    let v0 = r.rows[0].residual;
    let v1 = r.rows[1].residual;
    report(
        11,
        v0 == 0.0 && v1 == 0.0,
        format!("violations {v0} (3DC^2), {v1} (9DC^2); worst ratios {:.3}, {:.3}", r.rows[2].residual, r.rows[3].residual),
    )
}

#[test]
fn acceptance() {
    let mut all = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
    ];
    all.extend(criteria_9_10());
    all.push(criterion_11());
    let failed: Vec<String> = all
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("{}: {}", o.id, o.detail))
        .collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
