mod common;

use finsler_core::linalg::Point;
use finsler_core::mesh::{Mesh, ScalarField};
use finsler_core::norms::FinslerStructure;
use finsler_core::pde::{solve_dirichlet, SolverConfig};
use finsler_core::verify::{
    bochner_check, bump_field, fit_constant, gradient_estimate_report, harnack_report,
    liouville_trend, low_frequency_samples, measure_curvature_bound, poincare_constant,
    poincare_ratio, sobolev_constant, sobolev_ratio, ExperimentSuite, VerifyError,
};

fn origin() -> Point {
    Point::xy(0.0, 0.0)
}

// --- gradient statistic -----------------------------------------------------

#[test]
fn gradient_statistic_for_an_explicit_positive_harmonic_field() {
    // u = 2 + x1 on the Euclidean plane: log u has |D log u| = 1/(2 + x1),
    // maximal where the unit ball is leftmost, so sigma -> 1 as h -> 0.
    let s = FinslerStructure::euclidean(2);
    let mesh = Mesh::disk(origin(), 1.6, 1.0 / 32.0);
    let u = ScalarField::from_fn(mesh.clone(), |p| 2.0 + p.get(0));
    let report = gradient_estimate_report(&s, origin(), 1.0, &u, 0.0, None).unwrap();
    let sigma = report.params["sigma"];
    assert!((sigma - 1.0).abs() <= 0.05, "sigma = {sigma}");
    assert!(report.satisfied);
    // with K = 0 the statistic is just R * LHS
    assert!((report.lhs - sigma).abs() <= 1e-12);
}

#[test]
fn gradient_statistic_is_invariant_under_scaling() {
    let s = FinslerStructure::euclidean(2);
    let mesh = Mesh::disk(origin(), 1.6, 1.0 / 24.0);
    let u = ScalarField::from_fn(mesh.clone(), |p| 2.0 + p.get(0));
    let cu = ScalarField::new(
        mesh.clone(),
        u.values().iter().map(|&v| 17.0 * v).collect(),
    )
    .unwrap();
    let a = gradient_estimate_report(&s, origin(), 1.0, &u, 0.0, None).unwrap();
    let b = gradient_estimate_report(&s, origin(), 1.0, &cu, 0.0, None).unwrap();
    assert!(
        (a.params["sigma"] - b.params["sigma"]).abs() <= 1e-10,
        "{} vs {}",
        a.params["sigma"],
        b.params["sigma"]
    );
}

#[test]
fn supplied_constants_turn_the_report_into_a_real_check() {
    let s = FinslerStructure::euclidean(2);
    let mesh = Mesh::disk(origin(), 1.6, 1.0 / 24.0);
    let u = ScalarField::from_fn(mesh.clone(), |p| 2.0 + p.get(0));
    let generous = gradient_estimate_report(&s, origin(), 1.0, &u, 0.0, Some(2.0)).unwrap();
    assert!(generous.satisfied && generous.slack() > 0.5);
    let stingy = gradient_estimate_report(&s, origin(), 1.0, &u, 0.0, Some(0.5)).unwrap();
    assert!(!stingy.satisfied);
}

#[test]
fn randers_gradient_statistic_sees_the_asymmetric_ball_and_norm() {
    // F = |V| + 0.5 V_1: the forward unit ball from the origin reaches
    // x1 = -2, and the dual norm of -D log u there is 2/(6 + x1), so the
    // statistic is 2/4 = 0.5 for u = 6 + x1.
    let s = common::randers_const();
    let mesh = Mesh::disk(origin(), 2.4, 1.0 / 24.0);
    let u = ScalarField::from_fn(mesh.clone(), |p| 6.0 + p.get(0));
    let report = gradient_estimate_report(&s, origin(), 1.0, &u, 0.0, None).unwrap();
    let sigma = report.params["sigma"];
    assert!((sigma - 0.5).abs() <= 0.03, "sigma = {sigma}");
}

#[test]
fn nonpositive_fields_are_rejected() {
    let s = FinslerStructure::euclidean(2);
    let mesh = Mesh::disk(origin(), 1.6, 1.0 / 12.0);
    let u = ScalarField::from_fn(mesh.clone(), |p| p.get(0));
    match gradient_estimate_report(&s, origin(), 1.0, &u, 0.0, None) {
        Err(VerifyError::NonPositiveField { .. }) => {}
        other => panic!("expected a positivity error, got {other:?}"),
    }
}

#[test]
fn a_ball_leaking_out_of_the_mesh_is_detected() {
    let s = FinslerStructure::euclidean(2);
    let mesh = Mesh::disk(origin(), 1.2, 1.0 / 12.0);
    let u = ScalarField::constant(mesh.clone(), 2.0);
    match gradient_estimate_report(&s, origin(), 1.3, &u, 0.0, None) {
        Err(VerifyError::TruncatedBall { .. }) => {}
        other => panic!("expected a truncation error, got {other:?}"),
    }
}

// --- Harnack ----------------------------------------------------------------

#[test]
fn harnack_oscillation_is_controlled_by_the_gradient_bound() {
    // sup u / inf u -> 3 on the unit ball, so the LHS -> ln 3; the chained
    // bound (rho + 1) R max F(grad +/- log u) -> 2 for the Euclidean norm.
    let s = FinslerStructure::euclidean(2);
    let mesh = Mesh::disk(origin(), 1.6, 1.0 / 32.0);
    let u = ScalarField::from_fn(mesh.clone(), |p| 2.0 + p.get(0));
    let report = harnack_report(&s, origin(), 1.0, &u).unwrap();
    assert!(report.satisfied, "{report:?}");
    assert!((report.lhs - 3.0_f64.ln()).abs() <= 0.05, "lhs = {}", report.lhs);
    assert!((report.rhs - 2.0).abs() <= 0.1, "rhs = {}", report.rhs);
}

#[test]
fn harnack_sides_are_invariant_under_scaling() {
    let s = common::randers_const();
    let mesh = Mesh::disk(origin(), 2.4, 1.0 / 16.0);
    let u = ScalarField::from_fn(mesh.clone(), |p| 6.0 + p.get(0));
    let cu = ScalarField::new(mesh.clone(), u.values().iter().map(|&v| 5.0 * v).collect())
        .unwrap();
    let a = harnack_report(&s, origin(), 1.0, &u).unwrap();
    let b = harnack_report(&s, origin(), 1.0, &cu).unwrap();
    assert!((a.lhs - b.lhs).abs() <= 1e-10);
    assert!((a.rhs - b.rhs).abs() <= 1e-10);
}

// --- Liouville trend ----------------------------------------------------------

#[test]
fn bounded_positive_data_forces_gradient_decay() {
    let s = FinslerStructure::euclidean(2);
    let cfg = SolverConfig::default();
    let report = liouville_trend(
        &s,
        |theta, _r| 2.0 + 0.5 * theta.cos() + 0.3 * (2.0 * theta).sin(),
        &[2.0, 4.0, 8.0],
        1.0 / 8.0,
        &cfg,
    )
    .unwrap();
    assert!(report.satisfied, "exponent = {}", report.lhs);
    assert!(report.lhs <= -0.8);
    // gradients themselves must shrink monotonically
    let g2 = report.params["gradient_at_r2.000"];
    let g8 = report.params["gradient_at_r8.000"];
    assert!(g8 < 0.5 * g2, "g2 = {g2}, g8 = {g8}");
}

#[test]
fn linear_growth_is_the_negative_control() {
    let s = FinslerStructure::euclidean(2);
    let cfg = SolverConfig::default();
    let report = liouville_trend(
        &s,
        |theta, r| r * theta.cos(),
        &[2.0, 4.0, 8.0],
        1.0 / 8.0,
        &cfg,
    )
    .unwrap();
    assert!(!report.satisfied, "exponent = {}", report.lhs);
    assert!(report.lhs >= -0.1, "exponent = {}", report.lhs);
}

// --- Bochner ------------------------------------------------------------------

#[test]
fn bochner_euclidean_affine_field_is_exactly_zero_on_both_sides() {
    let s = FinslerStructure::euclidean(2);
    let mesh = Mesh::square(origin(), 1.0, 1.0 / 16.0);
    let u = ScalarField::from_fn(mesh.clone(), |p| 1.0 + 0.3 * p.get(0) + 0.2 * p.get(1));
    let eta = bump_field(&mesh, origin(), 0.8);
    let report = bochner_check(&s, &u, &eta, f64::INFINITY, 1e-10).unwrap();
    assert!(report.lhs.abs() <= 1e-14, "curvature side = {}", report.lhs);
    assert!(report.rhs.abs() <= 1e-12, "hessian side = {}", report.rhs);
    assert!(report.satisfied);
}

#[test]
fn bochner_matches_the_classical_identity_and_the_defect_decays() {
    // For u = x1^2 - x2^2 on the Lebesgue plane the hessian side equals
    // 8 int eta exactly in the continuum.
    let s = FinslerStructure::euclidean(2);
    let mut defects = Vec::new();
    for k in [32.0, 64.0] {
        let mesh = Mesh::disk(origin(), 1.0, 1.0 / k);
        let u = ScalarField::from_fn(mesh.clone(), |p| {
            p.get(0) * p.get(0) - p.get(1) * p.get(1)
        });
        let eta = bump_field(&mesh, origin(), 0.7);
        let report = bochner_check(&s, &u, &eta, 2.0, 1e-9).unwrap();
        let oracle = 8.0 * report.params["eta_mass"];
        assert!(report.lhs.abs() <= 1e-12, "flat curvature side must vanish");
        assert!(
            (report.rhs - oracle).abs() <= 0.05 * oracle,
            "hessian side {} vs classical {oracle}",
            report.rhs
        );
        defects.push((report.rhs - oracle).abs());
    }
    assert!(
        defects[1] <= defects[0] / 1.5,
        "defect did not decay: {defects:?}"
    );
}

#[test]
fn bochner_on_a_solved_gaussian_field_has_nonnegative_slack() {
    let s = common::gaussian_weighted();
    let mesh = Mesh::disk(origin(), 1.0, 1.0 / 24.0);
    let sol = solve_dirichlet(
        &s,
        &mesh,
        |p| 2.0 + 0.5 * p.get(1).atan2(p.get(0)).cos(),
        &SolverConfig::default(),
    )
    .unwrap();
    let eta = bump_field(&mesh, origin(), 0.7);
    let report = bochner_check(&s, &sol.field, &eta, f64::INFINITY, 1e-9).unwrap();
    // the curvature side is genuinely positive here (Ric_inf = F^2 > 0)
    assert!(report.lhs > 0.0, "curvature side = {}", report.lhs);
    assert!(
        report.rhs >= report.lhs - 0.05 * report.lhs.abs(),
        "slack = {}",
        report.rhs - report.lhs
    );
}

#[test]
fn bochner_sentinel_switches_to_a_feasible_effective_dimension() {
    // N equal to the chart dimension with a density varying along the
    // flagpole triggers the equality-case sentinel; the check must retry
    // one dimension up and record the switch.
    let s = common::gaussian_weighted();
    let mesh = Mesh::disk(origin(), 1.0, 1.0 / 16.0);
    let u = ScalarField::from_fn(mesh.clone(), |p| 2.0 + 0.3 * p.get(0));
    let eta = bump_field(&mesh, origin(), 0.7);
    let report = bochner_check(&s, &u, &eta, 2.0, 1e-9).unwrap();
    assert_eq!(report.params["n_effective"], 3.0);
    assert!(report.params["sentinel_events"] >= 1.0);
    assert!(report.lhs.is_finite() && report.rhs.is_finite());
}

#[test]
fn bochner_rejects_bad_test_functions() {
    let s = FinslerStructure::euclidean(2);
    let mesh = Mesh::square(origin(), 1.0, 1.0 / 8.0);
    let u = ScalarField::from_fn(mesh.clone(), |p| p.get(0));
    let negative = ScalarField::from_fn(mesh.clone(), |p| p.get(0));
    assert!(matches!(
        bochner_check(&s, &u, &negative, 4.0, 1e-9),
        Err(VerifyError::InvalidParameter(_))
    ));
    let nonzero_boundary = ScalarField::constant(mesh.clone(), 1.0);
    assert!(matches!(
        bochner_check(&s, &u, &nonzero_boundary, 4.0, 1e-9),
        Err(VerifyError::InvalidParameter(_))
    ));
}

// --- Poincaré and Sobolev -------------------------------------------------------

/// Dense generalized eigensolve for the first nonzero Neumann eigenvalue of
/// the discrete Laplacian, an independent sharp bound for the Poincaré ratio.
fn first_neumann_eigenvalue(mesh: &finsler_core::mesh::MeshRef) -> f64 {
    use nalgebra::DMatrix;
    let n = mesh.node_count();
    let mut k = DMatrix::<f64>::zeros(n, n);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for t in 0..mesh.tri_count() {
        let tri = mesh.triangle(t);
        let area = mesh.area(t);
        for a in 0..3 {
            let ga = mesh.hat_gradient(t, a);
            for b in 0..3 {
                let gb = mesh.hat_gradient(t, b);
                let dot: f64 = (0..2).map(|i| ga.get(i) * gb.get(i)).sum();
                k[(tri[a] as usize, tri[b] as usize)] += area * dot;
                let mass = if a == b { area / 6.0 } else { area / 12.0 };
                m[(tri[a] as usize, tri[b] as usize)] += mass;
            }
        }
    }
    let chol = m.cholesky().expect("mass matrix is positive definite");
    let l = chol.l();
    let y = l.clone().solve_lower_triangular(&k).unwrap();
    let b = l.solve_lower_triangular(&y.transpose()).unwrap().transpose();
    let sym = 0.5 * (&b + b.transpose());
    let mut eigs: Vec<f64> = sym.symmetric_eigenvalues().iter().cloned().collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!(eigs[0].abs() <= 1e-8, "constant mode should be null");
    eigs[1]
}

#[test]
fn poincare_constant_is_tight_against_the_disk_eigenvalue() {
    let s = FinslerStructure::euclidean(2);
    let h = 1.0 / 12.0;
    let mesh = Mesh::disk(origin(), 1.0, h);
    let mu1 = first_neumann_eigenvalue(&mesh);
    // continuum value: square of the first Bessel-derivative zero 1.84118
    assert!((mu1 - 3.39).abs() <= 0.15, "mu1 = {mu1}");
    let report =
        poincare_constant(&s, origin(), 1.0, h, 30, 5, Some(1.0 / mu1 * (1.0 + 1e-9))).unwrap();
    assert!(report.satisfied, "c_hat = {} vs 1/mu1 = {}", report.lhs, 1.0 / mu1);
    // the trig family is rich enough to get close to the extremizer
    assert!(report.lhs >= 0.6 / mu1, "c_hat = {}", report.lhs);
}

#[test]
fn poincare_and_sobolev_ratios_are_invariant_under_shift_and_scale() {
    for s in [
        FinslerStructure::euclidean(2),
        common::randers_const(),
        common::gaussian_weighted(),
    ] {
        let mesh = Mesh::disk(origin(), 1.0, 1.0 / 16.0);
        let u = ScalarField::from_fn(mesh.clone(), |p| {
            (1.3 * p.get(0)).sin() + 0.4 * (2.0 * p.get(1)).cos()
        });
        let shifted =
            ScalarField::new(mesh.clone(), u.values().iter().map(|&v| v + 17.0).collect())
                .unwrap();
        let scaled =
            ScalarField::new(mesh.clone(), u.values().iter().map(|&v| 3.0 * v).collect())
                .unwrap();
        let base = poincare_ratio(&s, &u, 1.0).unwrap().unwrap();
        for other in [&shifted, &scaled] {
            let r = poincare_ratio(&s, other, 1.0).unwrap().unwrap();
            assert!(
                (r - base).abs() <= 1e-10 * base.max(1.0),
                "poincare ratio moved: {base} -> {r}"
            );
        }
        let sbase = sobolev_ratio(&s, &u, 1.0, 4.0, true).unwrap().unwrap();
        for other in [&shifted, &scaled] {
            let r = sobolev_ratio(&s, other, 1.0, 4.0, true).unwrap().unwrap();
            assert!(
                (r - sbase).abs() <= 1e-10 * sbase.max(1.0),
                "sobolev ratio moved: {sbase} -> {r}"
            );
        }
    }
}

#[test]
fn empirical_constants_are_stable_across_radii() {
    for s in [FinslerStructure::euclidean(2), common::gaussian_weighted()] {
        let mut poincares = Vec::new();
        let mut sobolevs = Vec::new();
        for radius in [0.5, 1.0, 2.0] {
            let h = radius / 12.0;
            let p = poincare_constant(&s, origin(), radius, h, 15, 5, None).unwrap();
            poincares.push(p.lhs);
            let q = sobolev_constant(&s, origin(), radius, h, 4.0, 15, 5).unwrap();
            sobolevs.push(q.lhs);
        }
        for vals in [&poincares, &sobolevs] {
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(0.0, f64::max);
            assert!(hi.is_finite() && lo > 0.0);
            assert!(hi <= 2.0 * lo, "spread too wide: {vals:?}");
        }
    }
}

#[test]
fn sobolev_rejects_an_infeasible_exponent() {
    let s = FinslerStructure::euclidean(2);
    assert!(matches!(
        sobolev_constant(&s, origin(), 1.0, 0.25, 2.0, 5, 1),
        Err(VerifyError::InvalidParameter(_))
    ));
}

#[test]
fn low_frequency_samples_are_deterministic() {
    let mesh = Mesh::disk(origin(), 1.0, 1.0 / 8.0);
    let a = low_frequency_samples(&mesh, origin(), 1.0, 14, 42);
    let b = low_frequency_samples(&mesh, origin(), 1.0, 14, 42);
    for (fa, fb) in a.iter().zip(&b) {
        assert_eq!(fa.values(), fb.values());
    }
    // the first samples are the pure modes and must be nonconstant
    for f in a.iter().take(10) {
        let lo = f.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = f.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo > 0.1);
    }
}

// --- curvature bound and suites ----------------------------------------------

#[test]
fn curvature_bound_reacts_to_a_concave_density() {
    // e^{+|x|^2/2} has Ric_inf = -1 along unit flagpoles, so the measured
    // bound must come out to 1; the Gaussian counterpart stays at 0.
    let inverted = FinslerStructure::euclidean(2)
        .with_density("0.5*(x^2 + y^2)")
        .unwrap();
    let k = measure_curvature_bound(&inverted, f64::INFINITY, 20, 7).unwrap();
    assert!((k - 1.0).abs() <= 1e-3, "K_hat = {k}");
    let gauss = common::gaussian_weighted();
    let k0 = measure_curvature_bound(&gauss, f64::INFINITY, 20, 7).unwrap();
    assert!(k0 <= 1e-8, "K_hat = {k0}");
}

#[test]
fn a_small_suite_runs_end_to_end() {
    let suite = ExperimentSuite::flat_gradient_grid(1.0 / 16.0, 1, 9);
    assert_eq!(suite.members.len(), 8);
    let outcome = suite.run().unwrap();
    assert_eq!(outcome.gradient_reports.len(), 8);
    assert_eq!(outcome.harnack_reports.len(), 8);
    for report in &outcome.gradient_reports {
        let sigma = report.params["sigma"];
        assert!(sigma.is_finite() && sigma > 0.0, "sigma = {sigma}");
        assert_eq!(report.params["converged"], 1.0, "{report:?}");
        assert_eq!(report.params["curvature_bound"], 0.0);
    }
    for report in &outcome.harnack_reports {
        assert!(report.satisfied, "{report:?}");
    }
    let expected = fit_constant(&outcome.gradient_reports).unwrap();
    assert_eq!(outcome.fitted_sigma, expected);
    assert!(outcome.fitted_sigma < 10.0, "sigma = {}", outcome.fitted_sigma);
}
