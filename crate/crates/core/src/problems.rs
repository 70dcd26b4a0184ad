//! Built-in problems selectable by name from the command line.

use std::sync::Arc;

use crate::algebra::{AlgVec, CoVec, GroupElem, GroupSpec};
use crate::dynamics::{ParamVec, TrivializedHamiltonian, TrivializedVectorField};
use crate::error::{LieError, Result};
use crate::linalg::Mat;

pub const BUILTIN_NAMES: [&str; 5] = [
    "so3_constant",
    "so3_gradient_like",
    "se3_screw",
    "so3_controlled",
    "so3_scalar_gain",
];

pub fn default_body_velocity() -> AlgVec {
    AlgVec::from_slice(&[0.4, -0.3, 0.7])
}

pub fn default_gradient_matrix() -> Mat {
    Mat::from_row_slice(3, 3, &[0.9, -0.4, 0.2, 0.3, 0.5, -0.7, -0.6, 0.8, 0.1])
}

pub fn default_twist() -> AlgVec {
    AlgVec::from_slice(&[0.3, -0.2, 0.5, 0.4, 0.1, -0.3])
}

pub fn default_control() -> ParamVec {
    ParamVec::from_slice(&[0.2, -0.5, 0.3])
}

fn skew(m: &Mat) -> Mat {
    (m - m.transpose()) * 0.5
}

pub fn zero_field(spec: Arc<GroupSpec>) -> TrivializedVectorField {
    let d = spec.dim();
    TrivializedVectorField::new(spec, move |_| AlgVec::zeros(d))
        .with_jacobian(move |_, _| Mat::zeros(d, d))
}

/// `f(g) = ξ₀`: a left-invariant field whose flow is `g₀ exp(tξ₀)`.
pub fn constant_field(spec: Arc<GroupSpec>, xi0: AlgVec) -> TrivializedVectorField {
    let d = spec.dim();
    TrivializedVectorField::new(spec, move |_| xi0.clone())
        .with_jacobian(move |_, _| Mat::zeros(d, d))
}

pub fn so3_constant(spec: Arc<GroupSpec>, xi0: AlgVec) -> TrivializedVectorField {
    constant_field(spec, xi0)
}

/// `f(g) = skew(A g)` on SO(3).
pub fn so3_gradient_like(spec: Arc<GroupSpec>, a: Mat) -> TrivializedVectorField {
    let field = gradient_like_eval(spec.clone(), a.clone());
    let jac = gradient_like_jac(spec.clone(), a);
    TrivializedVectorField::new(spec, field).with_jacobian(move |g, _| jac(g))
}

fn gradient_like_eval(
    spec: Arc<GroupSpec>,
    a: Mat,
) -> impl Fn(&GroupElem) -> AlgVec + Send + Sync + Clone {
    move |g: &GroupElem| {
        spec.from_matrix(&skew(&(&a * g.matrix())))
            .expect("skew-symmetric part lies in so(3)")
    }
}

fn gradient_like_jac(
    spec: Arc<GroupSpec>,
    a: Mat,
) -> impl Fn(&GroupElem) -> Mat + Send + Sync + Clone {
    move |g: &GroupElem| {
        // d/dε skew(A g e^{εE_i}) = skew(A g E_i)
        let d = spec.dim();
        let ag = &a * g.matrix();
        let mut jac = Mat::zeros(d, d);
        for (i, e) in spec.basis().iter().enumerate() {
            let col = spec
                .from_matrix(&skew(&(&ag * e)))
                .expect("skew-symmetric part lies in so(3)");
            jac.set_column(i, &col.0);
        }
        jac
    }
}

/// Constant twist on SE(3).
pub fn se3_screw(spec: Arc<GroupSpec>, twist: AlgVec) -> TrivializedVectorField {
    constant_field(spec, twist)
}

/// `f(g, u) = u` on SO(3), three parameters.
pub fn so3_controlled(spec: Arc<GroupSpec>, u0: ParamVec) -> TrivializedVectorField {
    let d = spec.dim();
    TrivializedVectorField::parametric(spec, u0, |_, u| AlgVec(u.0.clone()))
        .with_jacobian(move |_, _| Mat::zeros(d, d))
        .with_param_jacobian(move |_, _| Mat::identity(d, d))
}

/// `f(g, u) = u · skew(A g)`, one scalar gain parameter.
pub fn so3_scalar_gain(spec: Arc<GroupSpec>, a: Mat, gain: f64) -> TrivializedVectorField {
    let base = gradient_like_eval(spec.clone(), a.clone());
    let base2 = base.clone();
    let jac = gradient_like_jac(spec.clone(), a);
    let d = spec.dim();
    TrivializedVectorField::parametric(spec, ParamVec::from_slice(&[gain]), move |g, u| {
        base(g).scale(u.0[0])
    })
    .with_jacobian(move |g, u| jac(g) * u.0[0])
    .with_param_jacobian(move |g, _| Mat::from_column_slice(d, 1, base2(g).as_slice()))
}

/// `h(g, μ) = ½|μ|² + ⟨μ, Ad_{g⁻¹} ζ⟩`: quadratic in μ and not left-invariant.
pub fn conjugation_hamiltonian(spec: Arc<GroupSpec>, zeta: AlgVec) -> TrivializedHamiltonian {
    let s1 = spec.clone();
    let s2 = spec.clone();
    let s3 = spec.clone();
    let z1 = zeta.clone();
    let z2 = zeta.clone();
    let conj = move |s: &GroupSpec, g: &GroupElem, z: &AlgVec| -> AlgVec {
        let g_inv = s.inverse(g).expect("argument is a group element");
        AlgVec(
            s.ad_group_op(&g_inv)
                .expect("conjugation stays in the algebra")
                * &z.0,
        )
    };
    let conj2 = conj;
    TrivializedHamiltonian::new(
        spec,
        move |g, mu| 0.5 * mu.0.norm_squared() + mu.0.dot(&conj(&s1, g, &zeta).0),
        move |g, mu| AlgVec(&mu.0 + conj2(&s2, g, &z1).0),
        move |g, mu| {
            // d/dε ⟨μ, Ad_{e^{-εη} g⁻¹} ζ⟩ = ⟨μ, ad_w η⟩ with w = Ad_{g⁻¹} ζ
            let w = conj2(&s3, g, &z2);
            CoVec(s3.ad_op(&w).transpose() * &mu.0)
        },
    )
}

/// Resolve a built-in field by name on its natural group.
pub fn builtin(name: &str) -> Result<(Arc<GroupSpec>, TrivializedVectorField)> {
    let so3 = || Arc::new(GroupSpec::so3());
    Ok(match name {
        "so3_constant" => {
            let s = so3();
            (s.clone(), so3_constant(s, default_body_velocity()))
        }
        "so3_gradient_like" => {
            let s = so3();
            (s.clone(), so3_gradient_like(s, default_gradient_matrix()))
        }
        "se3_screw" => {
            let s = Arc::new(GroupSpec::se3());
            (s.clone(), se3_screw(s, default_twist()))
        }
        "so3_controlled" => {
            let s = so3();
            (s.clone(), so3_controlled(s, default_control()))
        }
        "so3_scalar_gain" => {
            let s = so3();
            (
                s.clone(),
                so3_scalar_gain(s, default_gradient_matrix(), 0.8),
            )
        }
        other => {
            return Err(LieError::InvalidConfig(format!(
                "unknown problem `{other}` (expected one of {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    })
}
