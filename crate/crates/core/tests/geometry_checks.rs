//! Reference checks for geodesics, distances, balls, and curvature, pinned
//! against closed forms: straight lines for translation-invariant norms,
//! great circles for the sphere patch, ellipse areas for constant drift
//! norms, and hand-computed measure decompositions for Gaussian weights.

mod common;

use finsler_core::geometry::{
    bishop_gromov_check, distance, distance_field, exp_map, forward_ball, ricci,
    s_comparison, shoot_geodesic, sphere_chart_exact_distance, sphere_chart_exact_geodesic,
    weighted_ricci, CurvatureMethod, GeodesicOptions, GeomError,
};
use finsler_core::mesh::Mesh;
use finsler_core::{Point, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GEO: GeodesicOptions = GeodesicOptions {
    tol: 1e-10,
    max_steps: 200_000,
    samples: 32,
};

// ---------------------------------------------------------------------------
// geodesics
// ---------------------------------------------------------------------------

#[test]
fn translation_invariant_geodesics_are_straight() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for (name, s) in [
        ("euclidean", common::euclidean2()),
        ("randers-const", common::randers_const()),
        ("quartic", common::quartic01()),
    ] {
        for _ in 0..10 {
            let p = Point::xy(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
            let v = common::direction(&mut rng, 2) * rng.gen_range(0.2..0.8);
            let t = rng.gen_range(0.3..1.0);
            let geo = shoot_geodesic(&s, p, v, t, &GEO).unwrap();
            assert!(!geo.truncated, "{name}: unexpectedly truncated");
            assert_eq!(geo.speed_drift, 0.0, "{name}: straight lines keep speed");
            for (k, &tk) in geo.times.iter().enumerate() {
                let expect = p.offset(v * tk);
                let err = geo.points[k].displacement_from(expect).euclid_norm();
                assert!(err < 1e-12, "{name}: sample {k} off the line by {err}");
            }
        }
    }
}

#[test]
fn sphere_patch_geodesics_match_great_circles() {
    let s = common::sphere_patch();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..6 {
        let p = Point::xy(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let v = common::direction(&mut rng, 2);
        for t_end in [1.0, -0.7] {
            let geo = shoot_geodesic(&s, p, v, t_end, &GEO).unwrap();
            assert!(!geo.truncated);
            for (k, &tk) in geo.times.iter().enumerate() {
                let exact = sphere_chart_exact_geodesic(p, v, tk);
                let err = geo.points[k].displacement_from(exact).euclid_norm();
                assert!(
                    err < 1e-5,
                    "great-circle deviation {err} at t = {tk} (t_end {t_end})"
                );
            }
        }
    }
}

#[test]
fn speed_is_conserved_on_curved_structures() {
    let cases = [
        (common::sphere_patch(), Point::xy(0.3, -0.2), 1.5),
        (common::riemannian_var(), Point::xy(-0.2, 0.3), 1.0),
        (common::randers_var(), Point::xy(-0.3, 0.1), 0.8),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for (s, p, t) in cases {
        let v = common::direction(&mut rng, 2) * 0.5;
        let geo = shoot_geodesic(&s, p, v, t, &GEO).unwrap();
        assert!(!geo.truncated);
        assert!(
            geo.speed_drift <= 1e-7,
            "speed drift {} exceeds 1e-7",
            geo.speed_drift
        );
    }
}

#[test]
fn momentum_equation_residual_decays_with_sampling() {
    let s = common::sphere_patch();
    let p = Point::xy(0.2, 0.1);
    let v = Vector::new(&[0.4, -0.3]);
    let residual_at = |samples: usize| {
        let opts = GeodesicOptions { samples, ..GEO };
        shoot_geodesic(&s, p, v, 1.2, &opts)
            .unwrap()
            .euler_lagrange_residual(&s)
    };
    let coarse = residual_at(16);
    let fine = residual_at(128);
    assert!(fine < 1e-4, "residual at 128 samples: {fine}");
    assert!(
        fine < coarse / 4.0,
        "no decay: coarse {coarse}, fine {fine}"
    );
}

#[test]
fn exp_map_agrees_with_scaled_shooting() {
    let s = common::sphere_patch();
    let p = Point::xy(-0.1, 0.25);
    let v = Vector::new(&[0.5, 0.2]);
    for t in [0.25, 0.75, 1.3] {
        let via_exp = exp_map(&s, p, v * t).unwrap();
        let via_shoot = shoot_geodesic(&s, p, v, t, &GEO).unwrap().endpoint();
        let err = via_exp.displacement_from(via_shoot).euclid_norm();
        assert!(err < 1e-7, "exp/shoot mismatch {err} at t = {t}");
    }
}

// ---------------------------------------------------------------------------
// distance
// ---------------------------------------------------------------------------

#[test]
fn euclidean_diagonal_distance() {
    let s = common::euclidean2();
    let mesh = Mesh::square(Point::xy(0.5, 0.5), 1.0, 1.0 / 16.0);
    let est = distance(&s, Point::xy(0.0, 0.0), Point::xy(1.0, 1.0), &mesh).unwrap();
    assert!(est.value <= est.graph_value);
    assert!(
        (est.value - 2.0_f64.sqrt()).abs() < 1e-3,
        "diagonal distance {} vs sqrt(2)",
        est.value
    );
}

#[test]
fn constant_drift_distances_are_directional() {
    // direct convention: the cost of a straight segment is F of its vector
    let s = common::randers_const(); // b = (0.5, 0)
    let mesh = Mesh::square(Point::xy(0.5, 0.0), 1.3, 1.0 / 16.0);
    let (o, e1) = (Point::xy(0.0, 0.0), Point::xy(1.0, 0.0));
    let forward = distance(&s, o, e1, &mesh).unwrap();
    let backward = distance(&s, e1, o, &mesh).unwrap();
    assert!((forward.value - 1.5).abs() < 1e-3, "got {}", forward.value);
    assert!((backward.value - 0.5).abs() < 1e-3, "got {}", backward.value);
}

#[test]
fn navigation_form_distances() {
    // time-minimal travel with wind 0.5 along +x: downwind time 1/(1+0.5),
    // upwind time 1/(1-0.5)
    let s = common::randers_navigation();
    let mesh = Mesh::square(Point::xy(0.5, 0.0), 1.3, 1.0 / 16.0);
    let (o, e1) = (Point::xy(0.0, 0.0), Point::xy(1.0, 0.0));
    let forward = distance(&s, o, e1, &mesh).unwrap();
    let backward = distance(&s, e1, o, &mesh).unwrap();
    assert!(
        (forward.value - 2.0 / 3.0).abs() < 1e-3,
        "downwind distance {} vs 2/3",
        forward.value
    );
    assert!(
        (backward.value - 2.0).abs() < 1e-3,
        "upwind distance {} vs 2",
        backward.value
    );
}

#[test]
fn directed_triangle_inequality_on_random_triples() {
    let s = common::riemannian_var();
    let h = 1.0 / 12.0;
    let mesh = Mesh::square(Point::xy(0.0, 0.0), 1.1, h);
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..8 {
        let mut pick = || Point::xy(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8));
        let (p, r, q) = (pick(), pick(), pick());
        let d_pq = distance(&s, p, q, &mesh).unwrap().value;
        let d_pr = distance(&s, p, r, &mesh).unwrap().value;
        let d_rq = distance(&s, r, q, &mesh).unwrap().value;
        assert!(
            d_pq <= d_pr + d_rq + 2.0 * h,
            "triangle inequality violated: {d_pq} > {d_pr} + {d_rq}"
        );
    }
}

#[test]
fn distance_matches_great_circle_on_sphere_patch() {
    let s = common::sphere_patch();
    let p = Point::xy(0.2, -0.1);
    let q = Point::xy(-0.4, 0.45);
    let mesh = Mesh::square(Point::xy(-0.1, 0.175), 0.9, 1.0 / 24.0);
    let est = distance(&s, p, q, &mesh).unwrap();
    let exact = sphere_chart_exact_distance(p, q);
    assert!(est.value <= est.graph_value);
    assert!(
        (est.value - exact).abs() < 2e-3,
        "chart distance {} vs great circle {}",
        est.value,
        exact
    );
}

#[test]
fn exp_and_distance_are_consistent() {
    let s = common::sphere_patch();
    let p = Point::xy(0.15, -0.05);
    let mut v = Vector::new(&[0.7, 0.4]);
    v = v * (1.0 / s.norm(&p, &v)); // unit speed
    let t = 0.8;
    let q = exp_map(&s, p, v * t).unwrap();
    let mesh = Mesh::square(p.midpoint(q), 0.8, 1.0 / 24.0);
    let est = distance(&s, p, q, &mesh).unwrap();
    assert!(
        (est.value - t).abs() < 2e-3,
        "distance to exp point {} vs parameter {t}",
        est.value
    );
}

#[test]
fn unreachable_targets_are_reported() {
    let s = common::euclidean2();
    // two disjoint patches glued into one node set: the second square is
    // shifted far away and shares no nodes with the first
    let left = Mesh::square(Point::xy(0.0, 0.0), 0.5, 0.25);
    let mut nodes: Vec<Point> = left.nodes().to_vec();
    let mut tris: Vec<[u32; 3]> = left.triangles().to_vec();
    let offset = nodes.len() as u32;
    for p in left.nodes() {
        nodes.push(Point::xy(p.get(0) + 5.0, p.get(1)));
    }
    for t in left.triangles() {
        tris.push([t[0] + offset, t[1] + offset, t[2] + offset]);
    }
    let mesh = std::sync::Arc::new(Mesh::build(nodes, tris, 0.25).unwrap());
    let err = distance(&s, Point::xy(0.0, 0.0), Point::xy(5.0, 0.0), &mesh);
    assert!(matches!(err, Err(GeomError::Unreachable)));
}

// ---------------------------------------------------------------------------
// balls and volumes
// ---------------------------------------------------------------------------

#[test]
fn euclidean_ball_volume_within_two_percent() {
    let s = common::euclidean2();
    let radius = 1.0;
    let mesh = Mesh::disk(Point::xy(0.0, 0.0), 1.12 * radius, radius / 64.0);
    let ball = forward_ball(&s, Point::xy(0.0, 0.0), radius, &mesh).unwrap();
    assert!(!ball.truncated);
    let exact = std::f64::consts::PI * radius * radius;
    let rel = (ball.volume - exact).abs() / exact;
    assert!(rel < 0.02, "ball volume {} vs {exact} (rel {rel})", ball.volume);
}

#[test]
fn constant_drift_ball_is_the_closed_form_ellipse() {
    // For F(v) = |v| + b.v with b = (beta, 0), d(0, q) = F(q), and the
    // forward ball {F(q) < R} is an ellipse of area pi R^2 / (1-beta^2)^{3/2}
    let s = common::randers_const();
    let beta: f64 = 0.5;
    let radius: f64 = 0.5;
    let mesh = Mesh::disk(Point::xy(0.0, 0.0), 2.15 * radius, radius / 32.0);
    let ball = forward_ball(&s, Point::xy(0.0, 0.0), radius, &mesh).unwrap();
    assert!(!ball.truncated);

    // computed distances against the closed form on the nodes they cover
    let origin = Point::xy(0.0, 0.0);
    let mut worst = 0.0_f64;
    for (i, &d) in ball.distances.values().iter().enumerate() {
        if d < radius {
            let exact = s.norm(&origin, &mesh.node(i).displacement_from(origin));
            worst = worst.max((d - exact).abs());
        }
    }
    assert!(worst < 0.02 * radius, "field error inside the ball: {worst}");

    let exact_area =
        std::f64::consts::PI * radius * radius / (1.0 - beta * beta).powf(1.5);
    let rel = (ball.volume - exact_area).abs() / exact_area;
    assert!(
        rel < 0.02,
        "ellipse volume {} vs {exact_area} (rel {rel})",
        ball.volume
    );
}

#[test]
fn balls_nest_with_radius() {
    let s = common::randers_const();
    let mesh = Mesh::disk(Point::xy(0.0, 0.0), 1.3, 1.0 / 24.0);
    let small = forward_ball(&s, Point::xy(0.0, 0.0), 0.25, &mesh).unwrap();
    let large = forward_ball(&s, Point::xy(0.0, 0.0), 0.5, &mesh).unwrap();
    for i in 0..small.node_inside.len() {
        assert!(!small.node_inside[i] || large.node_inside[i]);
    }
    assert!(small.volume < large.volume);
}

#[test]
fn truncated_balls_are_flagged() {
    let s = common::euclidean2();
    let mesh = Mesh::disk(Point::xy(0.0, 0.0), 0.5, 1.0 / 16.0);
    let ball = forward_ball(&s, Point::xy(0.0, 0.0), 0.8, &mesh).unwrap();
    assert!(ball.truncated);
    let bg = bishop_gromov_check(&s, Point::xy(0.0, 0.0), 0.8, 0.4, 0.0, 2.0, &mesh);
    assert!(matches!(bg, Err(GeomError::BallTruncated { .. })));
}

#[test]
fn distance_field_error_is_small_for_euclidean() {
    let s = common::euclidean2();
    let center = Point::xy(0.0, 0.0);
    let mesh = Mesh::disk(center, 1.0, 1.0 / 32.0);
    let field = distance_field(&s, &mesh, center).unwrap();
    let mut worst = 0.0_f64;
    for (i, &d) in field.values().iter().enumerate() {
        let exact = mesh.node(i).displacement_from(center).euclid_norm();
        worst = worst.max((d - exact).abs());
    }
    // the sweep scheme is first-order; h/3-level error on this mesh
    assert!(worst < 0.02, "distance field max error: {worst}");
}

// ---------------------------------------------------------------------------
// comparison profile and curvature
// ---------------------------------------------------------------------------

#[test]
fn comparison_profile_reference_values() {
    assert!((s_comparison(1.0, 2.0, 1.0).unwrap() - 1.1752011936438014).abs() < 1e-12);
    assert_eq!(s_comparison(0.0, 7.0, 3.25).unwrap(), 3.25);
    for t in [0.1, 0.5, 2.0] {
        let near_flat = s_comparison(1e-12, 3.0, t).unwrap();
        assert!((near_flat - t).abs() < 1e-9);
    }
}

#[test]
fn translation_invariant_structures_are_ricci_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for (name, s) in [
        ("euclidean", common::euclidean2()),
        ("randers-const", common::randers_const()),
        ("quartic", common::quartic01()),
    ] {
        for _ in 0..5 {
            let p = Point::xy(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
            let v = common::direction(&mut rng, 2) * rng.gen_range(0.5..2.0);
            let rep = ricci(&s, &p, &v, CurvatureMethod::jacobi_default()).unwrap();
            assert!(
                rep.ric.abs() <= 1e-5,
                "{name}: Ricci {} should vanish",
                rep.ric
            );
            // matches the stored flat value
            let exact = ricci(&s, &p, &v, CurvatureMethod::Analytic).unwrap();
            assert_eq!(exact.ric, 0.0);
        }
    }
}

#[test]
fn sphere_patch_ricci_equals_squared_speed() {
    let s = common::sphere_patch();
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    for _ in 0..6 {
        let p = Point::xy(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
        let v = common::direction(&mut rng, 2) * rng.gen_range(0.5..1.5);
        let expected = s.norm(&p, &v).powi(2); // constant curvature 1, n = 2
        let rep = ricci(&s, &p, &v, CurvatureMethod::jacobi_default()).unwrap();
        let rel = (rep.ric - expected).abs() / expected;
        assert!(
            rel < 1e-3,
            "sphere Ricci {} vs F^2 = {expected} (rel {rel})",
            rep.ric
        );
        assert_eq!(rep.method, "jacobi-fd");
        assert_eq!(rep.flag_samples.len(), 1);
    }
}

#[test]
fn ricci_scales_quadratically() {
    let s = common::sphere_patch();
    let p = Point::xy(0.3, 0.2);
    let v = Vector::new(&[0.8, -0.1]);
    let base = ricci(&s, &p, &v, CurvatureMethod::jacobi_default()).unwrap();
    let scaled = ricci(&s, &p, &(v * 3.0), CurvatureMethod::jacobi_default()).unwrap();
    assert!((scaled.ric - 9.0 * base.ric).abs() < 1e-8 * base.ric.abs().max(1.0));
}

#[test]
fn three_dimensional_flat_ricci_vanishes() {
    let s = common::randers3();
    let p = Point::xyz(0.1, -0.1, 0.2);
    let v = Vector::new(&[0.5, 0.3, -0.4]);
    let rep = ricci(&s, &p, &v, CurvatureMethod::jacobi_default()).unwrap();
    assert_eq!(rep.flag_samples.len(), 2);
    assert!(rep.ric.abs() <= 1e-5, "3d Minkowski Ricci {}", rep.ric);
}

// ---------------------------------------------------------------------------
// weighted Ricci
// ---------------------------------------------------------------------------

#[test]
fn lebesgue_weighted_ricci_vanishes_for_all_n() {
    let s = common::euclidean2();
    let rep = weighted_ricci(
        &s,
        &Point::xy(0.4, -0.3),
        &Vector::new(&[1.0, 2.0]),
        &[2.0, 3.0, 10.0, f64::INFINITY],
        CurvatureMethod::Analytic,
    )
    .unwrap();
    for &(n, val) in &rep.ric_n {
        assert!(
            val.abs() < 1e-10,
            "Lebesgue measure should give Ric_{n} = 0, got {val}"
        );
    }
}

#[test]
fn gaussian_weighted_ricci_infinity_is_one() {
    let s = common::gaussian_weighted();
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for _ in 0..8 {
        let p = Point::xy(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8));
        let v = common::direction(&mut rng, 2); // euclid-unit = F-unit here
        let rep = weighted_ricci(
            &s,
            &p,
            &v,
            &[f64::INFINITY],
            CurvatureMethod::Analytic,
        )
        .unwrap();
        let val = rep.ric_n[0].1;
        assert!(
            (val - 1.0).abs() < 1e-4,
            "Gaussian Ric_inf {val} should be 1"
        );
    }
}

#[test]
fn equal_dimension_branch_uses_sentinel() {
    let s = common::gaussian_weighted();
    // drift Psi'(0) = x.v: nonzero here -> -inf branch
    let skew = weighted_ricci(
        &s,
        &Point::xy(0.3, 0.2),
        &Vector::new(&[1.0, 0.0]),
        &[2.0],
        CurvatureMethod::Analytic,
    )
    .unwrap();
    assert_eq!(skew.ric_n[0].1, f64::NEG_INFINITY);
    // orthogonal basepoint: drift vanishes and the branch is finite
    let flat = weighted_ricci(
        &s,
        &Point::xy(0.0, 0.5),
        &Vector::new(&[1.0, 0.0]),
        &[2.0],
        CurvatureMethod::Analytic,
    )
    .unwrap();
    assert!((flat.ric_n[0].1 - 1.0).abs() < 1e-4);
}

#[test]
fn weighted_ricci_is_monotone_in_n() {
    let s = common::gaussian_weighted();
    let rep = weighted_ricci(
        &s,
        &Point::xy(0.5, -0.2),
        &Vector::new(&[0.6, 0.8]),
        &[3.0, 4.0, 8.0, 64.0, f64::INFINITY],
        CurvatureMethod::Analytic,
    )
    .unwrap();
    for w in rep.ric_n.windows(2) {
        assert!(
            w[0].1 <= w[1].1 + 1e-12,
            "Ric_N should be nondecreasing in N: {:?}",
            rep.ric_n
        );
    }
}

#[test]
fn weighted_ricci_scales_quadratically() {
    let s = common::gaussian_weighted();
    let p = Point::xy(0.2, 0.3);
    let v = Vector::new(&[0.5, -0.4]);
    let a = weighted_ricci(&s, &p, &v, &[4.0], CurvatureMethod::Analytic).unwrap();
    let b = weighted_ricci(&s, &p, &(v * 2.0), &[4.0], CurvatureMethod::Analytic).unwrap();
    assert!((b.ric_n[0].1 - 4.0 * a.ric_n[0].1).abs() < 1e-10);
}

// ---------------------------------------------------------------------------
// volume comparison
// ---------------------------------------------------------------------------

#[test]
fn flat_volume_ratio_saturates_the_bound() {
    let s = common::euclidean2();
    let mesh = Mesh::disk(Point::xy(0.0, 0.0), 1.15, 1.0 / 48.0);
    let report =
        bishop_gromov_check(&s, Point::xy(0.0, 0.0), 1.0, 0.5, 0.0, 2.0, &mesh).unwrap();
    // K = 0, N = 2: the bound is (R1/R2)^2 = 4 and flat space saturates it
    assert!((report.rhs - 4.0).abs() < 1e-6);
    assert!(
        (report.lhs - 4.0).abs() < 0.08,
        "flat ratio {} should saturate 4",
        report.lhs
    );
    assert!(report.satisfied);
    assert!(report.params["coarse_rhs"] >= report.rhs);
}

#[test]
fn gaussian_volume_ratio_has_positive_slack() {
    let s = common::gaussian_weighted();
    // measure the curvature lower bound on the meshed region
    let mut rng = ChaCha8Rng::seed_from_u64(48);
    let n_eff = 4.0;
    let mut min_ric = f64::INFINITY;
    for _ in 0..40 {
        let p = Point::xy(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2));
        let v = common::direction(&mut rng, 2);
        let rep = weighted_ricci(&s, &p, &v, &[n_eff], CurvatureMethod::Analytic).unwrap();
        min_ric = min_ric.min(rep.ric_n[0].1);
    }
    let k = (-min_ric).max(0.0);
    let mesh = Mesh::disk(Point::xy(0.0, 0.0), 1.15, 1.0 / 32.0);
    let report =
        bishop_gromov_check(&s, Point::xy(0.0, 0.0), 1.0, 0.5, k, n_eff, &mesh).unwrap();
    assert!(report.satisfied, "ratio {} vs bound {}", report.lhs, report.rhs);
    assert!(report.slack() > 0.0);
}

#[test]
fn equal_radii_give_unit_ratio() {
    let s = common::euclidean2();
    let mesh = Mesh::disk(Point::xy(0.0, 0.0), 0.8, 1.0 / 24.0);
    let report =
        bishop_gromov_check(&s, Point::xy(0.0, 0.0), 0.5, 0.5, 0.0, 2.0, &mesh).unwrap();
    assert_eq!(report.lhs, 1.0);
    assert!((report.rhs - 1.0).abs() < 1e-12);
}
