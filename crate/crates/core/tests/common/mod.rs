#![allow(dead_code)]

use std::sync::Arc;

use lieadj::algebra::{AlgVec, GroupSpec};
use lieadj::dynamics::TrivializedVectorField;
use lieadj::linalg::Mat;
use lieadj::problems;
use lieadj::retraction::{Retraction, RetractionKind};
use rand::Rng;

pub fn groups() -> [Arc<GroupSpec>; 2] {
    [Arc::new(GroupSpec::so3()), Arc::new(GroupSpec::se3())]
}

pub fn retractions(spec: &Arc<GroupSpec>) -> [Retraction; 2] {
    [
        Retraction::new(RetractionKind::Exp, spec.clone()).unwrap(),
        Retraction::new(RetractionKind::Cayley, spec.clone()).unwrap(),
    ]
}

pub fn random_matrix<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Mat {
    Mat::from_fn(n, n, |_, _| scale * rng.gen_range(-1.0..1.0))
}

/// A state-dependent field on any group: `f(g) = ξ₀ + B vec(g)`, with the
/// Jacobian left to finite differences.
pub fn affine_field<R: Rng>(
    rng: &mut R,
    spec: &Arc<GroupSpec>,
    scale: f64,
) -> TrivializedVectorField {
    let d = spec.dim();
    let n = spec.n();
    let xi0 = spec.random_algebra(rng, 0.5);
    let b = lieadj::linalg::Mat::from_fn(d, n * n, |_, _| scale * rng.gen_range(-1.0..1.0));
    TrivializedVectorField::new(spec.clone(), move |g| {
        let flat = lieadj::linalg::Vector::from_vec(g.to_row_major());
        AlgVec(&xi0.0 + &b * flat)
    })
}

/// A random non-trivial field: `skew(A g)` on SO(3), affine on other groups.
pub fn random_field<R: Rng>(rng: &mut R, spec: &Arc<GroupSpec>) -> TrivializedVectorField {
    if spec.name() == "SO3" {
        problems::so3_gradient_like(spec.clone(), random_matrix(rng, 3, 1.0))
    } else {
        affine_field(rng, spec, 0.3)
    }
}
