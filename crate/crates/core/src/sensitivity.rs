//! Discrete sensitivities and conservation audits.
//!
//! The initial-condition gradient is the left-trivialized derivative of the
//! discrete map `g_0 ↦ C(g_N)`; the parameter gradient is the derivative of
//! `u ↦ C(g_N(u))`. Both are exact for the discrete flow because the adjoint
//! and variational recursions conserve
//! `c_k = ⟨dτ⁻¹(−Δt ξ_k)ᵀ m_k, η_k⟩`, which every report also measures.

use crate::algebra::{pair, AlgVec, CoVec, GroupElem, GroupSpec};
use crate::dynamics::{CostFunction, ParamVec, TrivializedHamiltonian, TrivializedVectorField};
use crate::error::{LieError, Result};
use crate::integrator::{
    adjoint_sweep, forward_flow, lie_poisson_flow, lp_step, variational_sweep, SolverConfig,
    TimeGrid, Trajectory,
};
use crate::linalg::{self, Vector};
use crate::oracle::{fd_canonical_step_linearization, CanonicalPerturbation};
use crate::retraction::Retraction;

/// Tolerance for the left-invariance precondition of the Noether audit.
pub const LEFT_INVARIANCE_TOL: f64 = 1e-10;
/// Central-difference step used to propagate first variations in the symplectic audit.
pub const SYMPLECTIC_FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct SensitivityReport {
    /// Covector coordinates (initial condition) or `∂C/∂u` (parameters).
    pub gradient: Vector,
    /// `max_k |c_k − c_0| / (1 + |c_0|)`, worst case over `η_0 ∈ {E_1, …, E_d}`.
    pub conservation_drift: f64,
    /// `c_k` for `η_0 = Σ_i E_i`.
    pub invariant: Vec<f64>,
    /// Forward trajectory with `m` and the `η` belonging to `invariant`.
    pub trajectory: Trajectory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantAudit {
    pub series: Vec<f64>,
    /// `max_k |s_k − s_0|`.
    pub drift: f64,
}

impl InvariantAudit {
    fn from_series(series: Vec<f64>) -> Self {
        let first = series.first().copied().unwrap_or(0.0);
        let drift = series
            .iter()
            .fold(0.0f64, |acc, s| acc.max((s - first).abs()));
        InvariantAudit { series, drift }
    }

    /// `drift / (1 + |s_0|)`.
    pub fn relative_drift(&self) -> f64 {
        self.drift / (1.0 + self.series.first().map_or(0.0, |s| s.abs()))
    }
}

/// Solve `dτ⁻¹(−Δt ξ_N)ᵀ m_N = d_L C(g_N)` with `ξ_N` the velocity of the last step.
pub fn terminal_momentum(traj: &Trajectory, cost: &CostFunction, r: &Retraction) -> Result<CoVec> {
    let n = traj.grid.n();
    let a = r.dtau_inv(&traj.xi[n].scale(-traj.grid.dt()))?.transpose();
    let rhs = cost.d_l(traj.final_point()).0;
    a.lu()
        .solve(&rhs)
        .map(CoVec)
        .ok_or(LieError::NoConvergence {
            residual: f64::INFINITY,
            iterations: 0,
        })
        .map_err(|e| e.at_step(n))
}

fn invariant_series(traj: &Trajectory, r: &Retraction) -> Result<Vec<f64>> {
    let m = traj.m.as_ref().ok_or(LieError::MissingField("m"))?;
    let eta = traj.eta.as_ref().ok_or(LieError::MissingField("eta"))?;
    let dt = traj.grid.dt();
    (0..traj.g.len())
        .map(|k| {
            let q = CoVec(r.dtau_inv(&traj.xi[k].scale(-dt))?.transpose() * &m[k].0);
            Ok(pair(&q, &eta[k]))
        })
        .collect()
}

/// `c_k = ⟨dτ⁻¹(−Δt ξ_k)ᵀ m_k, η_k⟩` and its drift.
pub fn audit_quadratic_invariant(traj: &Trajectory, r: &Retraction) -> Result<InvariantAudit> {
    invariant_series(traj, r).map(InvariantAudit::from_series)
}

/// Run the variational sweep for every basis direction and for their sum;
/// returns the worst relative drift and the summed direction's trajectory.
fn conservation(
    vf: &TrivializedVectorField,
    traj: &Trajectory,
    r: &Retraction,
) -> Result<(f64, Vec<f64>, Trajectory)> {
    let d = vf.spec().dim();
    let mut worst = 0.0f64;
    for i in 0..d {
        let swept = variational_sweep(vf, traj, &AlgVec::basis(d, i), r)?;
        worst = worst.max(audit_quadratic_invariant(&swept, r)?.relative_drift());
    }
    let all = AlgVec(Vector::from_element(d, 1.0));
    let swept = variational_sweep(vf, traj, &all, r)?;
    let audit = audit_quadratic_invariant(&swept, r)?;
    worst = worst.max(audit.relative_drift());
    Ok((worst, audit.series, swept))
}

/// Worst relative drift of the quadratic invariant over `η_0 ∈ {E_1, …, E_d, Σ E_i}`
/// for a trajectory that already carries `m`.
pub fn conservation_drift(
    vf: &TrivializedVectorField,
    traj: &Trajectory,
    r: &Retraction,
) -> Result<f64> {
    conservation(vf, traj, r).map(|c| c.0)
}

/// Left-trivialized gradient of the discrete cost `C(g_N)` with respect to `g_0`.
pub fn initial_condition_sensitivity(
    vf: &TrivializedVectorField,
    cost: &CostFunction,
    g0: &GroupElem,
    grid: &TimeGrid,
    r: &Retraction,
) -> Result<SensitivityReport> {
    let traj = forward_flow(vf, g0, grid, r)?;
    let m_n = terminal_momentum(&traj, cost, r)?;
    let traj = adjoint_sweep(vf, &traj, &m_n, r)?;
    let m0 = &traj.m.as_ref().expect("adjoint sweep fills m")[0];
    let gradient = r.dtau_inv(&traj.xi[0].scale(-grid.dt()))?.transpose() * &m0.0;
    let (conservation_drift, invariant, trajectory) = conservation(vf, &traj, r)?;
    Ok(SensitivityReport {
        gradient,
        conservation_drift,
        invariant,
        trajectory,
    })
}

/// Gradient of `u ↦ C(g_N(u))`: `Δt Σ_j ⟨m_{j+1}, ∂f/∂u(g_j, u) e_i⟩`.
pub fn parameter_sensitivity(
    vf: &TrivializedVectorField,
    cost: &CostFunction,
    g0: &GroupElem,
    u: &ParamVec,
    grid: &TimeGrid,
    r: &Retraction,
) -> Result<SensitivityReport> {
    if vf.param_dim() == 0 {
        return Err(LieError::NoParameters);
    }
    let vf = vf.at_params(u)?;
    let traj = forward_flow(&vf, g0, grid, r)?;
    let m_n = terminal_momentum(&traj, cost, r)?;
    let traj = adjoint_sweep(&vf, &traj, &m_n, r)?;
    let m = traj.m.as_ref().expect("adjoint sweep fills m");
    let mut gradient = Vector::zeros(u.dim());
    for j in 0..grid.n() {
        gradient += vf.df_du(&traj.g[j]).transpose() * &m[j + 1].0;
    }
    gradient *= grid.dt();
    let (conservation_drift, invariant, trajectory) = conservation(&vf, &traj, r)?;
    Ok(SensitivityReport {
        gradient,
        conservation_drift,
        invariant,
        trajectory,
    })
}

/// Canonical symplectic form at `(g, P)`:
/// `Ω(δ¹, δ²) = ⟨δP¹, η²⟩ − ⟨δP², η¹⟩ − ⟨P, [η¹, η²]⟩`.
///
/// Both the bracket term and the variation of `ξ` inside `δP` are needed;
/// the momentum-only expression `⟨dτ⁻¹(−Δt ξ)ᵀ δm¹, η²⟩ − (1 ↔ 2)` at frozen
/// `ξ` drifts by `O(Δt)` per step once `f` depends on `g`.
pub fn symplectic_form(
    spec: &GroupSpec,
    p: &CoVec,
    a: &CanonicalPerturbation,
    b: &CanonicalPerturbation,
) -> f64 {
    pair(&a.dp, &b.eta) - pair(&b.dp, &a.eta) - pair(p, &spec.bracket(&a.eta, &b.eta))
}

#[derive(Clone, Debug)]
pub struct SymplecticStep {
    pub before: f64,
    pub after: f64,
    /// The two perturbations pushed to step `k+1`, ready for the next step.
    pub next: (CanonicalPerturbation, CanonicalPerturbation),
}

impl SymplecticStep {
    pub fn relative_change(&self) -> f64 {
        (self.after - self.before).abs() / (1.0 + self.before.abs())
    }
}

/// Evaluate the symplectic form on a pair of perturbations at step `k` and on
/// their finite-difference first variations at step `k+1`.
#[allow(clippy::too_many_arguments)]
pub fn audit_symplectic_form(
    h: &TrivializedHamiltonian,
    g_k: &GroupElem,
    m_k: &CoVec,
    xi_k: &AlgVec,
    perturbations: (&CanonicalPerturbation, &CanonicalPerturbation),
    r: &Retraction,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<SymplecticStep> {
    let spec = h.spec();
    let (a, b) = perturbations;
    let p_k = CoVec(r.dtau_inv(&xi_k.scale(-dt))?.transpose() * &m_k.0);
    let before = symplectic_form(spec, &p_k, a, b);
    let (_, m_next, xi_next) = lp_step(h, g_k, m_k, xi_k, r, dt, cfg)?;
    let p_next = CoVec(r.dtau_inv(&xi_next.scale(-dt))?.transpose() * &m_next.0);
    let a_next =
        fd_canonical_step_linearization(h, g_k, m_k, xi_k, r, dt, a, SYMPLECTIC_FD_STEP, cfg)?;
    let b_next =
        fd_canonical_step_linearization(h, g_k, m_k, xi_k, r, dt, b, SYMPLECTIC_FD_STEP, cfg)?;
    let after = symplectic_form(spec, &p_next, &a_next, &b_next);
    Ok(SymplecticStep {
        before,
        after,
        next: (a_next, b_next),
    })
}

/// Run [`audit_symplectic_form`] along `steps` steps of the discrete
/// Lie–Poisson flow from `(g_0, m_0)`, carrying the perturbations forward;
/// returns the worst relative one-step change.
#[allow(clippy::too_many_arguments)]
pub fn symplectic_drift(
    h: &TrivializedHamiltonian,
    g0: &GroupElem,
    m0: &CoVec,
    perturbations: (CanonicalPerturbation, CanonicalPerturbation),
    r: &Retraction,
    grid: &TimeGrid,
    cfg: &SolverConfig,
) -> Result<f64> {
    let traj = lie_poisson_flow(h, g0, m0, grid, r, cfg)?;
    let m = traj.m.as_ref().expect("lie_poisson_flow fills m");
    let (mut a, mut b) = perturbations;
    let mut worst = 0.0f64;
    for k in 0..grid.n() {
        let step = audit_symplectic_form(
            h,
            &traj.g[k],
            &m[k],
            &traj.xi[k],
            (&a, &b),
            r,
            grid.dt(),
            cfg,
        )
        .map_err(|e| e.at_step(k))?;
        worst = worst.max(step.relative_change());
        (a, b) = step.next;
    }
    Ok(worst)
}

/// `n_k = ⟨dτ⁻¹(−Δt ξ_k)ᵀ m_k, Ad_{g_k⁻¹} χ⟩`, the discrete momentum map
/// paired with the right-invariant field `g ↦ χg`. Requires `h` to be
/// left-invariant, which is checked along the trajectory.
pub fn audit_noether(
    h: &TrivializedHamiltonian,
    traj: &Trajectory,
    chi: &AlgVec,
    r: &Retraction,
) -> Result<InvariantAudit> {
    let m = traj.m.as_ref().ok_or(LieError::MissingField("m"))?;
    let spec = h.spec();
    let dt = traj.grid.dt();
    let mut series = Vec::with_capacity(m.len());
    for (k, (g, mk)) in traj.g.iter().zip(m).enumerate() {
        let residual = linalg::vec_max_abs(&h.d_g_h_l(g, mk).0);
        if residual > LEFT_INVARIANCE_TOL * linalg::vec_max_abs(&mk.0).max(1.0) {
            return Err(LieError::NotLeftInvariant { residual }.at_step(k));
        }
        let w = AlgVec(spec.ad_group_op(&spec.inverse(g)?)? * &chi.0);
        let q = CoVec(r.dtau_inv(&traj.xi[k].scale(-dt))?.transpose() * &mk.0);
        series.push(pair(&q, &w));
    }
    Ok(InvariantAudit::from_series(series))
}
