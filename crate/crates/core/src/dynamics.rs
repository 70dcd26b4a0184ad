//! Problem definitions in left-trivialized form and the continuous
//! right-hand sides of the Lie–Poisson, adjoint and variational systems.
//!
//! Derivatives with respect to the group argument are always taken along
//! `ε ↦ g·exp(εη)`. When no analytic form is supplied, central differences
//! with step `1e-6·max(1, ‖state‖)` are used.

use std::fmt;
use std::sync::Arc;

use crate::algebra::{pair, AlgVec, CoVec, GroupElem, GroupSpec};
use crate::error::{LieError, Result};
use crate::linalg::{self, Mat, Vector};

const FD_REL_STEP: f64 = 1e-6;
const EXP_ORDER: usize = 16;

/// Control / parameter vector `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVec(pub Vector);

impl ParamVec {
    pub fn empty() -> Self {
        ParamVec(Vector::zeros(0))
    }

    pub fn from_slice(s: &[f64]) -> Self {
        ParamVec(Vector::from_column_slice(s))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

fn fd_step(scale: f64) -> f64 {
    FD_REL_STEP * scale.max(1.0)
}

/// `g·exp(ε E_i)`; the perturbation chart used by every derivative in `g`.
pub fn perturb_left_trivialized(
    spec: &GroupSpec,
    g: &GroupElem,
    dir: &AlgVec,
    eps: f64,
) -> GroupElem {
    let step = linalg::expm(&spec.to_matrix(&dir.scale(eps)), EXP_ORDER);
    GroupElem::new_unchecked(g.matrix() * step)
}

type FieldFn = Arc<dyn Fn(&GroupElem, &ParamVec) -> AlgVec + Send + Sync>;
type MatFn = Arc<dyn Fn(&GroupElem, &ParamVec) -> Mat + Send + Sync>;

/// The left-trivialized vector field `f(g, u) = g⁻¹ F(g, u)`.
#[derive(Clone)]
pub struct TrivializedVectorField {
    spec: Arc<GroupSpec>,
    f: FieldFn,
    jac_l: Option<MatFn>,
    df_du: Option<MatFn>,
    params: ParamVec,
}

impl fmt::Debug for TrivializedVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrivializedVectorField")
            .field("group", &self.spec.name())
            .field("analytic_jacobian", &self.jac_l.is_some())
            .field("params", &self.params.0.as_slice())
            .finish()
    }
}

impl TrivializedVectorField {
    /// An autonomous field without parameters.
    pub fn new<F>(spec: Arc<GroupSpec>, f: F) -> Self
    where
        F: Fn(&GroupElem) -> AlgVec + Send + Sync + 'static,
    {
        TrivializedVectorField {
            spec,
            f: Arc::new(move |g, _| f(g)),
            jac_l: None,
            df_du: None,
            params: ParamVec::empty(),
        }
    }

    /// A field depending on parameters `u`, initially evaluated at `u0`.
    pub fn parametric<F>(spec: Arc<GroupSpec>, u0: ParamVec, f: F) -> Self
    where
        F: Fn(&GroupElem, &ParamVec) -> AlgVec + Send + Sync + 'static,
    {
        TrivializedVectorField {
            spec,
            f: Arc::new(f),
            jac_l: None,
            df_du: None,
            params: u0,
        }
    }

    /// Supply the analytic left-trivialized Jacobian `D_L f(g, u)` (a `d×d` matrix).
    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&GroupElem, &ParamVec) -> Mat + Send + Sync + 'static,
    {
        self.jac_l = Some(Arc::new(jac));
        self
    }

    /// Supply the analytic parameter Jacobian `∂f/∂u` (a `d×m` matrix).
    pub fn with_param_jacobian<J>(mut self, df_du: J) -> Self
    where
        J: Fn(&GroupElem, &ParamVec) -> Mat + Send + Sync + 'static,
    {
        self.df_du = Some(Arc::new(df_du));
        self
    }

    /// The same field evaluated at a different parameter vector.
    pub fn at_params(&self, u: &ParamVec) -> Result<Self> {
        if u.dim() != self.params.dim() {
            return Err(LieError::DimensionMismatch {
                expected: self.params.dim(),
                got: u.dim(),
            });
        }
        let mut out = self.clone();
        out.params = u.clone();
        Ok(out)
    }

    /// Drop the analytic derivatives so every derivative goes through finite differences.
    pub fn without_analytic_derivatives(&self) -> Self {
        let mut out = self.clone();
        out.jac_l = None;
        out.df_du = None;
        out
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn spec_arc(&self) -> &Arc<GroupSpec> {
        &self.spec
    }

    pub fn params(&self) -> &ParamVec {
        &self.params
    }

    pub fn param_dim(&self) -> usize {
        self.params.dim()
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jac_l.is_some()
    }

    pub fn eval(&self, g: &GroupElem) -> AlgVec {
        (self.f)(g, &self.params)
    }

    pub fn jac_l(&self, g: &GroupElem) -> Mat {
        match &self.jac_l {
            Some(j) => j(g, &self.params),
            None => self.jac_l_fd(g),
        }
    }

    /// Central-difference left-trivialized Jacobian.
    pub fn jac_l_fd(&self, g: &GroupElem) -> Mat {
        let d = self.spec.dim();
        let eps = fd_step(g.matrix().norm());
        let mut jac = Mat::zeros(d, d);
        for i in 0..d {
            let e = AlgVec::basis(d, i);
            let plus = self.eval(&perturb_left_trivialized(&self.spec, g, &e, eps));
            let minus = self.eval(&perturb_left_trivialized(&self.spec, g, &e, -eps));
            jac.set_column(i, &((plus.0 - minus.0) / (2.0 * eps)));
        }
        jac
    }

    pub fn df_du(&self, g: &GroupElem) -> Mat {
        match &self.df_du {
            Some(j) => j(g, &self.params),
            None => self.df_du_fd(g),
        }
    }

    pub fn df_du_fd(&self, g: &GroupElem) -> Mat {
        let d = self.spec.dim();
        let m = self.param_dim();
        let eps = fd_step(self.params.0.amax());
        let mut out = Mat::zeros(d, m);
        for i in 0..m {
            let mut up = self.params.clone();
            up.0[i] += eps;
            let mut down = self.params.clone();
            down.0[i] -= eps;
            let plus = (self.f)(g, &up);
            let minus = (self.f)(g, &down);
            out.set_column(i, &((plus.0 - minus.0) / (2.0 * eps)));
        }
        out
    }
}

type ScalarFn = Arc<dyn Fn(&GroupElem, &CoVec) -> f64 + Send + Sync>;
type AlgFn = Arc<dyn Fn(&GroupElem, &CoVec) -> AlgVec + Send + Sync>;
type CoFn = Arc<dyn Fn(&GroupElem, &CoVec) -> CoVec + Send + Sync>;

/// A left-trivialized Hamiltonian `h(g, μ)` with its derivatives
/// `D_μ h ∈ 𝔤` and `g*·D_g h ∈ 𝔤*`.
#[derive(Clone)]
pub struct TrivializedHamiltonian {
    spec: Arc<GroupSpec>,
    h: ScalarFn,
    d_mu_h: AlgFn,
    d_g_h_l: CoFn,
    adjoint_of: Option<TrivializedVectorField>,
}

impl fmt::Debug for TrivializedHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrivializedHamiltonian")
            .field("group", &self.spec.name())
            .field("adjoint", &self.adjoint_of.is_some())
            .finish()
    }
}

impl TrivializedHamiltonian {
    pub fn new<H, M, G>(spec: Arc<GroupSpec>, h: H, d_mu_h: M, d_g_h_l: G) -> Self
    where
        H: Fn(&GroupElem, &CoVec) -> f64 + Send + Sync + 'static,
        M: Fn(&GroupElem, &CoVec) -> AlgVec + Send + Sync + 'static,
        G: Fn(&GroupElem, &CoVec) -> CoVec + Send + Sync + 'static,
    {
        TrivializedHamiltonian {
            spec,
            h: Arc::new(h),
            d_mu_h: Arc::new(d_mu_h),
            d_g_h_l: Arc::new(d_g_h_l),
            adjoint_of: None,
        }
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn spec_arc(&self) -> &Arc<GroupSpec> {
        &self.spec
    }

    pub fn h(&self, g: &GroupElem, mu: &CoVec) -> f64 {
        (self.h)(g, mu)
    }

    pub fn d_mu_h(&self, g: &GroupElem, mu: &CoVec) -> AlgVec {
        (self.d_mu_h)(g, mu)
    }

    pub fn d_g_h_l(&self, g: &GroupElem, mu: &CoVec) -> CoVec {
        (self.d_g_h_l)(g, mu)
    }

    /// The vector field this Hamiltonian was built from, if it is an adjoint Hamiltonian.
    pub fn adjoint_field(&self) -> Option<&TrivializedVectorField> {
        self.adjoint_of.as_ref()
    }

    /// Forget the adjoint structure so solvers treat this as a generic Hamiltonian.
    pub fn as_generic(&self) -> Self {
        let mut out = self.clone();
        out.adjoint_of = None;
        out
    }

    pub fn d_mu_h_fd(&self, g: &GroupElem, mu: &CoVec) -> AlgVec {
        let d = self.spec.dim();
        let eps = fd_step(mu.0.amax());
        AlgVec(Vector::from_fn(d, |i, _| {
            let mut up = mu.clone();
            up.0[i] += eps;
            let mut down = mu.clone();
            down.0[i] -= eps;
            (self.h(g, &up) - self.h(g, &down)) / (2.0 * eps)
        }))
    }

    pub fn d_g_h_l_fd(&self, g: &GroupElem, mu: &CoVec) -> CoVec {
        let d = self.spec.dim();
        let eps = fd_step(g.matrix().norm());
        CoVec(Vector::from_fn(d, |i, _| {
            let e = AlgVec::basis(d, i);
            let plus = self.h(&perturb_left_trivialized(&self.spec, g, &e, eps), mu);
            let minus = self.h(&perturb_left_trivialized(&self.spec, g, &e, -eps), mu);
            (plus - minus) / (2.0 * eps)
        }))
    }
}

/// `h(g, μ) = ⟨μ, f(g)⟩`, with `D_μ h = f(g)` and `g*·D_g h = (D_L f)ᵀ μ`.
pub fn adjoint_hamiltonian(vf: &TrivializedVectorField) -> TrivializedHamiltonian {
    let (a, b, c) = (vf.clone(), vf.clone(), vf.clone());
    let mut h = TrivializedHamiltonian::new(
        vf.spec_arc().clone(),
        move |g, mu| pair(mu, &a.eval(g)),
        move |g, _| b.eval(g),
        move |g, mu| CoVec(c.jac_l(g).transpose() * &mu.0),
    );
    h.adjoint_of = Some(vf.clone());
    h
}

type ReducedScalarFn = Arc<dyn Fn(&CoVec) -> f64 + Send + Sync>;
type ReducedAlgFn = Arc<dyn Fn(&CoVec) -> AlgVec + Send + Sync>;

/// A left-invariant Hamiltonian written on `𝔤*` alone.
#[derive(Clone)]
pub struct ReducedHamiltonian {
    spec: Arc<GroupSpec>,
    h_tilde: ReducedScalarFn,
    d_mu: ReducedAlgFn,
}

impl fmt::Debug for ReducedHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReducedHamiltonian")
            .field("group", &self.spec.name())
            .finish()
    }
}

impl ReducedHamiltonian {
    pub fn new<H, M>(spec: Arc<GroupSpec>, h_tilde: H, d_mu: M) -> Self
    where
        H: Fn(&CoVec) -> f64 + Send + Sync + 'static,
        M: Fn(&CoVec) -> AlgVec + Send + Sync + 'static,
    {
        ReducedHamiltonian {
            spec,
            h_tilde: Arc::new(h_tilde),
            d_mu: Arc::new(d_mu),
        }
    }

    /// `h̃(μ) = ½ μᵀ diag(w)⁻¹ μ`, the free rigid body with inertia `w`.
    pub fn quadratic(spec: Arc<GroupSpec>, inertia: &[f64]) -> Self {
        let inv: Vector = Vector::from_iterator(inertia.len(), inertia.iter().map(|x| 1.0 / x));
        let inv2 = inv.clone();
        Self::new(
            spec,
            move |mu| 0.5 * mu.0.component_mul(&inv).dot(&mu.0),
            move |mu| AlgVec(mu.0.component_mul(&inv2)),
        )
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn h_tilde(&self, mu: &CoVec) -> f64 {
        (self.h_tilde)(mu)
    }

    pub fn d_mu(&self, mu: &CoVec) -> AlgVec {
        (self.d_mu)(mu)
    }

    pub fn d_mu_fd(&self, mu: &CoVec) -> AlgVec {
        let d = self.spec.dim();
        let eps = fd_step(mu.0.amax());
        AlgVec(Vector::from_fn(d, |i, _| {
            let mut up = mu.clone();
            up.0[i] += eps;
            let mut down = mu.clone();
            down.0[i] -= eps;
            (self.h_tilde(&up) - self.h_tilde(&down)) / (2.0 * eps)
        }))
    }

    /// The same Hamiltonian viewed on `G × 𝔤*`, constant in `g`.
    pub fn to_trivialized(&self) -> TrivializedHamiltonian {
        let d = self.spec.dim();
        let (a, b) = (self.clone(), self.clone());
        TrivializedHamiltonian::new(
            self.spec.clone(),
            move |_, mu| a.h_tilde(mu),
            move |_, mu| b.d_mu(mu),
            move |_, _| CoVec::zeros(d),
        )
    }
}

type CostFn = Arc<dyn Fn(&GroupElem) -> f64 + Send + Sync>;
type CostGradFn = Arc<dyn Fn(&GroupElem) -> CoVec + Send + Sync>;

/// Terminal cost `C: G → R` with its left-trivialized derivative.
#[derive(Clone)]
pub struct CostFunction {
    spec: Arc<GroupSpec>,
    c: CostFn,
    d_l: Option<CostGradFn>,
}

impl fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostFunction")
            .field("group", &self.spec.name())
            .field("analytic", &self.d_l.is_some())
            .finish()
    }
}

impl CostFunction {
    pub fn new<C>(spec: Arc<GroupSpec>, c: C) -> Self
    where
        C: Fn(&GroupElem) -> f64 + Send + Sync + 'static,
    {
        CostFunction {
            spec,
            c: Arc::new(c),
            d_l: None,
        }
    }

    pub fn with_gradient<D>(mut self, d_l: D) -> Self
    where
        D: Fn(&GroupElem) -> CoVec + Send + Sync + 'static,
    {
        self.d_l = Some(Arc::new(d_l));
        self
    }

    /// `C(g) = ‖g − target‖²_F`.
    pub fn frobenius_target(spec: Arc<GroupSpec>, target: Mat) -> Self {
        let t1 = target.clone();
        let basis: Vec<Mat> = spec.basis().to_vec();
        Self::new(spec, move |g| (g.matrix() - &t1).norm_squared()).with_gradient(move |g| {
            // d/dε ‖g e^{εE} − T‖² = 2 Tr((g − T)ᵀ g E)
            let diff = g.matrix() - &target;
            CoVec(Vector::from_iterator(
                basis.len(),
                basis
                    .iter()
                    .map(|e| 2.0 * linalg::frobenius_dot(&diff, &(g.matrix() * e))),
            ))
        })
    }

    /// `C(g) = Tr(A g)`.
    pub fn trace_linear(spec: Arc<GroupSpec>, a: Mat) -> Self {
        let a1 = a.clone();
        let basis: Vec<Mat> = spec.basis().to_vec();
        Self::new(spec, move |g| (&a1 * g.matrix()).trace()).with_gradient(move |g| {
            let ag = &a * g.matrix();
            CoVec(Vector::from_iterator(
                basis.len(),
                basis.iter().map(|e| (&ag * e).trace()),
            ))
        })
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn without_analytic_gradient(&self) -> Self {
        let mut out = self.clone();
        out.d_l = None;
        out
    }

    pub fn eval(&self, g: &GroupElem) -> f64 {
        (self.c)(g)
    }

    /// Left-trivialized derivative `d_L C(g)`: component `i` is `(d/dε) C(g·exp(εE_i))|₀`.
    pub fn d_l(&self, g: &GroupElem) -> CoVec {
        match &self.d_l {
            Some(d) => d(g),
            None => self.d_l_fd(g),
        }
    }

    pub fn d_l_fd(&self, g: &GroupElem) -> CoVec {
        let d = self.spec.dim();
        let eps = fd_step(g.matrix().norm());
        CoVec(Vector::from_fn(d, |i, _| {
            let e = AlgVec::basis(d, i);
            let plus = self.eval(&perturb_left_trivialized(&self.spec, g, &e, eps));
            let minus = self.eval(&perturb_left_trivialized(&self.spec, g, &e, -eps));
            (plus - minus) / (2.0 * eps)
        }))
    }
}

/// Adjoint system right-hand side: `(ξ, μ̇)` with `ξ = f(g)` and
/// `μ̇ = −(D_L f)ᵀ μ + ad_{f(g)}ᵀ μ`.
pub fn continuous_adjoint_rhs(
    vf: &TrivializedVectorField,
    g: &GroupElem,
    mu: &CoVec,
) -> (AlgVec, CoVec) {
    let xi = vf.eval(g);
    let op = adjoint_operator(vf, g, &xi);
    (xi, CoVec(op * &mu.0))
}

/// `L(g) = −(D_L f)ᵀ + ad*_{f(g)}`, the linear operator of the adjoint equation.
fn adjoint_operator(vf: &TrivializedVectorField, g: &GroupElem, xi: &AlgVec) -> Mat {
    vf.spec().ad_op(xi).transpose() - vf.jac_l(g).transpose()
}

/// Left-trivialized variational equation: `η̇ = D_L f(g) η − ad_{f(g)} η`.
pub fn continuous_variational_rhs(
    vf: &TrivializedVectorField,
    g: &GroupElem,
    eta: &AlgVec,
) -> AlgVec {
    let xi = vf.eval(g);
    let op = vf.jac_l(g) - vf.spec().ad_op(&xi);
    AlgVec(op * &eta.0)
}

/// Lie–Poisson equations on `G × 𝔤*`: `ξ = D_μ h`, `μ̇ = −g*·D_g h + ad*_{D_μ h} μ`.
pub fn lie_poisson_rhs(h: &TrivializedHamiltonian, g: &GroupElem, mu: &CoVec) -> (AlgVec, CoVec) {
    let xi = h.d_mu_h(g, mu);
    let coad = h.spec().ad_op(&xi).transpose() * &mu.0;
    let mu_dot = coad - h.d_g_h_l(g, mu).0;
    (xi, CoVec(mu_dot))
}

/// Largest relative disagreement between two vectors, normalized by the larger magnitude.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let amax = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = amax(a).max(amax(b));
    if scale == 0.0 {
        return 0.0;
    }
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}
