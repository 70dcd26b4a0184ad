//! Brute-force finite-difference verifiers, independent of the adjoint code.
//!
//! Every perturbation in the group is taken in the exponential chart
//! `g ↦ g·exp(εη)`, whatever retraction the integrator uses.

use rayon::prelude::*;

use crate::algebra::{AlgVec, CoVec, GroupElem};
use crate::dynamics::{
    perturb_left_trivialized, CostFunction, ParamVec, TrivializedHamiltonian,
    TrivializedVectorField,
};
use crate::error::{LieError, Result};
use crate::integrator::{forward_flow, lp_step, SolverConfig, TimeGrid};
use crate::linalg::Vector;
use crate::retraction::Retraction;

pub const MIN_EPS: f64 = 1e-8;
pub const MAX_EPS: f64 = 1e-3;

fn check_eps(eps: f64) -> Result<()> {
    if (MIN_EPS..=MAX_EPS).contains(&eps) {
        Ok(())
    } else {
        Err(LieError::InvalidConfig(format!(
            "finite-difference step {eps:e} outside [{MIN_EPS:e}, {MAX_EPS:e}]"
        )))
    }
}

/// A tangent vector at `(g, m)`: `η` in the left-trivialized chart, `δm` in coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub eta: AlgVec,
    pub dm: CoVec,
}

/// Central-difference left-trivialized gradient of `g_0 ↦ C(g_N)`.
pub fn fd_gradient_g0(
    vf: &TrivializedVectorField,
    cost: &CostFunction,
    g0: &GroupElem,
    grid: &TimeGrid,
    r: &Retraction,
    eps: f64,
) -> Result<CoVec> {
    check_eps(eps)?;
    let spec = vf.spec();
    let d = spec.dim();
    let terminal_cost = |s: f64, i: usize| -> Result<f64> {
        let start = perturb_left_trivialized(spec, g0, &AlgVec::basis(d, i), s);
        Ok(cost.eval(forward_flow(vf, &start, grid, r)?.final_point()))
    };
    let parts = (0..d)
        .into_par_iter()
        .map(|i| Ok((terminal_cost(eps, i)? - terminal_cost(-eps, i)?) / (2.0 * eps)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CoVec(Vector::from_vec(parts)))
}

/// Central-difference gradient of `u ↦ C(g_N(u))`.
pub fn fd_gradient_u(
    vf: &TrivializedVectorField,
    cost: &CostFunction,
    g0: &GroupElem,
    u: &ParamVec,
    grid: &TimeGrid,
    r: &Retraction,
    eps: f64,
) -> Result<Vector> {
    check_eps(eps)?;
    let m = u.dim();
    if m == 0 {
        return Err(LieError::NoParameters);
    }
    let terminal_cost = |s: f64, i: usize| -> Result<f64> {
        let mut shifted = u.clone();
        shifted.0[i] += s;
        let field = vf.at_params(&shifted)?;
        Ok(cost.eval(forward_flow(&field, g0, grid, r)?.final_point()))
    };
    let parts = (0..m)
        .into_par_iter()
        .map(|i| Ok((terminal_cost(eps, i)? - terminal_cost(-eps, i)?) / (2.0 * eps)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Vector::from_vec(parts))
}

/// A tangent vector in canonical coordinates `(g, P)` with
/// `P = dτ⁻¹(−Δt ξ)ᵀ m`, the state on which the one-step map acts.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalPerturbation {
    pub eta: AlgVec,
    pub dp: CoVec,
}

struct Pushed {
    eta: AlgVec,
    dm: CoVec,
    dp: CoVec,
}

#[allow(clippy::too_many_arguments)]
fn fd_push(
    h: &TrivializedHamiltonian,
    g_k: &GroupElem,
    m_k: &CoVec,
    xi_k: &AlgVec,
    r: &Retraction,
    dt: f64,
    pert: &Perturbation,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<Pushed> {
    check_eps(eps)?;
    let spec = h.spec();
    let exp = Retraction::exp(h.spec_arc().clone()).with_series_order(16);
    let (g_base, _, _) = lp_step(h, g_k, m_k, xi_k, r, dt, cfg)?;
    let g_base_inv = spec.inverse(&g_base)?;
    let push = |s: f64| -> Result<(Vector, Vector, Vector)> {
        let g = perturb_left_trivialized(spec, g_k, &pert.eta, s);
        let m = CoVec(&m_k.0 + &pert.dm.0 * s);
        let (g_next, m_next, xi_next) = lp_step(h, &g, &m, xi_k, r, dt, cfg)?;
        let offset = exp.tau_inv(&spec.compose(&g_base_inv, &g_next)?)?;
        let p_next = r.dtau_inv(&xi_next.scale(-dt))?.transpose() * &m_next.0;
        Ok((offset.0, m_next.0, p_next))
    };
    let (eta_p, m_p, p_p) = push(eps)?;
    let (eta_m, m_m, p_m) = push(-eps)?;
    let c = 0.5 / eps;
    Ok(Pushed {
        eta: AlgVec((eta_p - eta_m) * c),
        dm: CoVec((m_p - m_m) * c),
        dp: CoVec((p_p - p_m) * c),
    })
}

/// Push a perturbation of `(g_k, m_k)` through one [`lp_step`] by central
/// differences, holding `ξ_k` fixed.
#[allow(clippy::too_many_arguments)]
pub fn fd_step_linearization(
    h: &TrivializedHamiltonian,
    g_k: &GroupElem,
    m_k: &CoVec,
    xi_k: &AlgVec,
    r: &Retraction,
    dt: f64,
    pert: &Perturbation,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<Perturbation> {
    let out = fd_push(h, g_k, m_k, xi_k, r, dt, pert, eps, cfg)?;
    Ok(Perturbation {
        eta: out.eta,
        dm: out.dm,
    })
}

/// The same push-forward in canonical coordinates: the input `δP` is
/// converted to `δm` at fixed `ξ_k`, and the output `δP` includes the
/// variation of `ξ_{k+1}`.
#[allow(clippy::too_many_arguments)]
pub fn fd_canonical_step_linearization(
    h: &TrivializedHamiltonian,
    g_k: &GroupElem,
    m_k: &CoVec,
    xi_k: &AlgVec,
    r: &Retraction,
    dt: f64,
    pert: &CanonicalPerturbation,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<CanonicalPerturbation> {
    let a = r.dtau_inv(&xi_k.scale(-dt))?.transpose();
    let dm = a.lu().solve(&pert.dp.0).ok_or(LieError::NoConvergence {
        residual: f64::INFINITY,
        iterations: 0,
    })?;
    let local = Perturbation {
        eta: pert.eta.clone(),
        dm: CoVec(dm),
    };
    let out = fd_push(h, g_k, m_k, xi_k, r, dt, &local, eps, cfg)?;
    Ok(CanonicalPerturbation {
        eta: out.eta,
        dp: out.dp,
    })
}
