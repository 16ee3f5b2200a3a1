//! Shared fixtures for integration tests: the structure zoo and seeded
//! sampling helpers (independent of the library's internal samplers).

#![allow(dead_code)]

use finsler_core::norms::{Domain, DriftField, FinslerStructure, MetricField};
use finsler_core::{Point, Vector};
use rand::Rng;

pub fn euclidean2() -> FinslerStructure {
    FinslerStructure::euclidean(2)
}

pub fn euclidean3() -> FinslerStructure {
    FinslerStructure::euclidean(3)
}

/// Variable-coefficient Riemannian metric, positive definite on its box.
pub fn riemannian_var() -> FinslerStructure {
    let rows = vec![
        vec!["1 + 0.5*x^2".to_string(), "0.1*x*y".to_string()],
        vec!["0.1*x*y".to_string(), "1 + 0.25*y^2".to_string()],
    ];
    FinslerStructure::riemannian(
        MetricField::parse(&rows, 2).unwrap(),
        Domain::centered_box(2, 1.2),
    )
    .unwrap()
}

/// Constant-drift Randers norm: F = |V| + 0.5 V_1.
pub fn randers_const() -> FinslerStructure {
    FinslerStructure::randers(
        MetricField::identity(2),
        DriftField::from_values(&[0.5, 0.0]),
        Domain::centered_box(2, 2.0),
    )
    .unwrap()
}

/// Navigation-form Randers norm with wind 0.5 along +x: unit-speed travel
/// with the wind costs 2/3 per unit length, against it 2.
pub fn randers_navigation() -> FinslerStructure {
    FinslerStructure::randers_navigation(&[0.5, 0.0], Domain::centered_box(2, 20.0)).unwrap()
}

/// Randers with spatially varying drift (still within the validity bound).
pub fn randers_var() -> FinslerStructure {
    let drift = DriftField::parse(&["0.3 + 0.2*x".to_string(), "0".to_string()], 2).unwrap();
    FinslerStructure::randers(MetricField::identity(2), drift, Domain::centered_box(2, 1.2))
        .unwrap()
}

pub fn quartic01() -> FinslerStructure {
    FinslerStructure::quartic(MetricField::identity(2), 0.1, Domain::centered_box(2, 1.5)).unwrap()
}

pub fn quartic3() -> FinslerStructure {
    FinslerStructure::quartic(MetricField::identity(3), 0.1, Domain::centered_box(3, 1.5)).unwrap()
}

pub fn randers3() -> FinslerStructure {
    FinslerStructure::randers(
        MetricField::identity(3),
        DriftField::from_values(&[0.3, 0.0, 0.2]),
        Domain::centered_box(3, 1.5),
    )
    .unwrap()
}

pub fn sphere_patch() -> FinslerStructure {
    FinslerStructure::sphere_patch(Domain::centered_box(2, 4.0)).unwrap()
}

/// Euclidean norm with standard Gaussian measure density.
pub fn gaussian_weighted() -> FinslerStructure {
    FinslerStructure::euclidean(2)
        .with_density("-(x^2 + y^2)/2")
        .unwrap()
}

/// The full pointwise zoo used by identity sweeps.
pub fn pointwise_zoo() -> Vec<(&'static str, FinslerStructure)> {
    vec![
        ("euclidean-2d", euclidean2()),
        ("riemannian-var", riemannian_var()),
        ("randers-const", randers_const()),
        ("randers-navigation", randers_navigation()),
        ("randers-var", randers_var()),
        ("quartic-0.1", quartic01()),
        ("sphere-patch", sphere_patch()),
        ("euclidean-3d", euclidean3()),
        ("randers-3d", randers3()),
        ("quartic-3d", quartic3()),
    ]
}

/// Uniform direction on the Euclidean sphere; test-local so oracles do not
/// share code with the library sampler.
pub fn direction(rng: &mut impl Rng, dim: usize) -> Vector {
    loop {
        let mut v = Vector::zeros(dim);
        for i in 0..dim {
            let u1: f64 = rng.gen_range(1e-12..1.0f64);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            v.set(i, (-2.0 * u1.ln()).sqrt() * u2.cos());
        }
        let n = v.euclid_norm();
        if n > 1e-6 {
            return v * (1.0 / n);
        }
    }
}

/// Random point in the structure's chart box, shrunk slightly so
/// finite-difference stencils in x stay inside.
pub fn chart_point(rng: &mut impl Rng, s: &FinslerStructure) -> Point {
    let d = s.domain();
    let mut p = Point::zeros(s.dim());
    for i in 0..s.dim() {
        let lo = d.lo(i) * 0.9;
        let hi = d.hi(i) * 0.9;
        p.set(i, rng.gen_range(lo..hi));
    }
    p
}
