//! Discrete flows: the forward Lie group step, the discrete Lie–Poisson
//! one-step map (general and reduced), the backward adjoint sweep, the
//! discrete variational recursion, and a Munthe-Kaas RK4 reference for the
//! continuous systems.
//!
//! Velocity convention: `ξ_{k+1}` is the velocity that carries `g_k` to
//! `g_{k+1}`, so `g_{k+1} = g_k·τ(Δt ξ_{k+1})`. The boundary value `ξ_0` is
//! `f(g_0)` for vector fields and `D_μ h(g_0, m_0)` for Hamiltonians.

use serde::{Deserialize, Serialize};

use crate::algebra::{AlgVec, CoVec, GroupElem, GroupSpec};
use crate::dynamics::{
    continuous_adjoint_rhs, continuous_variational_rhs, ReducedHamiltonian, TrivializedHamiltonian,
    TrivializedVectorField,
};
use crate::error::{LieError, Result};
use crate::linalg::{self, Mat, Vector};
use crate::retraction::Retraction;

/// Relative step of the finite-difference Newton Jacobian.
const NEWTON_FD_STEP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(LieError::InvalidConfig("N must be at least 1".into()));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(LieError::InvalidConfig(format!(
                "T must be positive, got {t_final}"
            )));
        }
        Ok(TimeGrid {
            t_final,
            n,
            dt: t_final / n as f64,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// A discrete trajectory. `g` and `xi` always hold `N+1` entries; `m` and
/// `eta` are filled by the adjoint and variational sweeps.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub g: Vec<GroupElem>,
    pub xi: Vec<AlgVec>,
    pub m: Option<Vec<CoVec>>,
    pub eta: Option<Vec<AlgVec>>,
}

impl Trajectory {
    pub fn final_point(&self) -> &GroupElem {
        self.g.last().expect("trajectory is never empty")
    }

    /// Largest deviation of `g_k` from `g_{k−1}·τ(Δt ξ_k)`.
    pub fn consistency_residual(&self, r: &Retraction) -> Result<f64> {
        let dt = self.grid.dt;
        let mut worst = 0.0f64;
        for k in 1..self.g.len() {
            let step = r.tau(&self.xi[k].scale(dt)).map_err(|e| e.at_step(k))?;
            let predicted = self.g[k - 1].matrix() * step.matrix();
            worst = worst.max(linalg::max_abs(&(predicted - self.g[k].matrix())));
        }
        Ok(worst)
    }

    pub fn max_membership_residual(&self, spec: &GroupSpec) -> f64 {
        self.g
            .iter()
            .map(|g| spec.membership_residual(g.matrix()))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Newton,
    FixedPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Residual tolerance in the ∞-norm, relative to `max(1, ‖rhs‖∞)`.
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolveMethod,
    /// Use the explicit linear solve when the Hamiltonian is the adjoint of a vector field.
    pub use_explicit_adjoint: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-13,
            max_iter: 100,
            method: SolveMethod::Newton,
            use_explicit_adjoint: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(LieError::InvalidConfig(format!(
                "solver tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(LieError::InvalidConfig(
                "solver max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn solve(a: &Mat, b: &Vector) -> Result<Vector> {
    let condition = linalg::condition_number(a);
    a.clone().lu().solve(b).ok_or(LieError::NoConvergence {
        residual: condition,
        iterations: 0,
    })
}

fn transposed_dtau_inv(r: &Retraction, xi: &AlgVec) -> Result<Mat> {
    Ok(r.dtau_inv(xi)?.transpose())
}

/// `τ(ξ)`, refusing steps whose tangents would leave the retraction domain.
fn retract_in_domain(r: &Retraction, xi: &AlgVec) -> Result<GroupElem> {
    let norm = xi.norm();
    if !(norm <= r.domain_radius()) {
        return Err(LieError::OutOfDomain {
            norm,
            radius: r.domain_radius(),
        });
    }
    r.tau(xi)
}

/// `g_{k+1} = g_k·τ(Δt ξ_{k+1})` with `ξ_{k+1} = f(g_k)`.
pub fn forward_flow(
    vf: &TrivializedVectorField,
    g0: &GroupElem,
    grid: &TimeGrid,
    r: &Retraction,
) -> Result<Trajectory> {
    let spec = vf.spec();
    let dt = grid.dt;
    let mut g = Vec::with_capacity(grid.n + 1);
    let mut xi = Vec::with_capacity(grid.n + 1);
    g.push(g0.clone());
    xi.push(vf.eval(g0));
    for k in 0..grid.n {
        let next_xi = vf.eval(&g[k]);
        let step = retract_in_domain(r, &next_xi.scale(dt)).map_err(|e| e.at_step(k))?;
        let next = spec.compose(&g[k], &step).map_err(|e| e.at_step(k + 1))?;
        g.push(next);
        xi.push(next_xi);
    }
    Ok(Trajectory {
        grid: *grid,
        g,
        xi,
        m: None,
        eta: None,
    })
}

/// Solve `R(m) = 0` for `m ∈ Rᵈ`, starting from `guess`.
fn newton<F>(guess: &Vector, scale: f64, cfg: &SolverConfig, residual: F) -> Result<Vector>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let d = guess.len();
    let tol = cfg.tol * scale.max(1.0);
    let mut m = guess.clone();
    let mut res = residual(&m)?;
    for _ in 0..cfg.max_iter {
        if linalg::vec_max_abs(&res) <= tol {
            return Ok(m);
        }
        let h = NEWTON_FD_STEP * linalg::vec_max_abs(&m).max(1.0);
        let mut jac = Mat::zeros(d, d);
        for i in 0..d {
            let mut up = m.clone();
            up[i] += h;
            let mut down = m.clone();
            down[i] -= h;
            jac.set_column(i, &((residual(&up)? - residual(&down)?) / (2.0 * h)));
        }
        let delta = solve(&jac, &res)?;
        m -= delta;
        res = residual(&m)?;
    }
    let r = linalg::vec_max_abs(&res);
    if r <= tol {
        Ok(m)
    } else {
        Err(LieError::NoConvergence {
            residual: r,
            iterations: cfg.max_iter,
        })
    }
}

/// Iterate `m ← map(m)` until the residual is below tolerance.
fn fixed_point<M, F>(
    guess: &Vector,
    scale: f64,
    cfg: &SolverConfig,
    map: M,
    residual: F,
) -> Result<Vector>
where
    M: Fn(&Vector) -> Result<Vector>,
    F: Fn(&Vector) -> Result<Vector>,
{
    let tol = cfg.tol * scale.max(1.0);
    let mut m = guess.clone();
    for _ in 0..cfg.max_iter {
        if linalg::vec_max_abs(&residual(&m)?) <= tol {
            return Ok(m);
        }
        m = map(&m)?;
    }
    let r = linalg::vec_max_abs(&residual(&m)?);
    if r <= tol {
        Ok(m)
    } else {
        Err(LieError::NoConvergence {
            residual: r,
            iterations: cfg.max_iter,
        })
    }
}

/// Residual of the momentum equation of the discrete Lie–Poisson map:
/// `dτ⁻¹(Δt ξ_{k+1})ᵀ m_{k+1} − dτ⁻¹(−Δt ξ_k)ᵀ m_k + Δt·g*D_g h(g_k, m_{k+1})`,
/// with `ξ_{k+1} = D_μ h(g_k, m_{k+1})`.
pub fn lp_residual(
    h: &TrivializedHamiltonian,
    g_k: &GroupElem,
    m_k: &CoVec,
    xi_k: &AlgVec,
    m_next: &CoVec,
    r: &Retraction,
    dt: f64,
) -> Result<CoVec> {
    let rhs = transposed_dtau_inv(r, &xi_k.scale(-dt))? * &m_k.0;
    lp_residual_with_rhs(h, g_k, &rhs, m_next, r, dt)
}

fn lp_residual_with_rhs(
    h: &TrivializedHamiltonian,
    g_k: &GroupElem,
    rhs: &Vector,
    m_next: &CoVec,
    r: &Retraction,
    dt: f64,
) -> Result<CoVec> {
    let xi_next = h.d_mu_h(g_k, m_next);
    let lhs = transposed_dtau_inv(r, &xi_next.scale(dt))? * &m_next.0;
    Ok(CoVec(lhs - rhs + h.d_g_h_l(g_k, m_next).0 * dt))
}

/// One step of the discrete Lie–Poisson map, returning `(g_{k+1}, m_{k+1}, ξ_{k+1})`.
pub fn lp_step(
    h: &TrivializedHamiltonian,
    g_k: &GroupElem,
    m_k: &CoVec,
    xi_k: &AlgVec,
    r: &Retraction,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<(GroupElem, CoVec, AlgVec)> {
    cfg.validate()?;
    let rhs = transposed_dtau_inv(r, &xi_k.scale(-dt))? * &m_k.0;
    let scale = linalg::vec_max_abs(&rhs);

    let m_next = match (h.adjoint_field(), cfg.use_explicit_adjoint) {
        (Some(vf), true) => {
            // ξ_{k+1} = f(g_k) does not depend on m_{k+1}: one linear solve
            let xi_next = vf.eval(g_k);
            let a = transposed_dtau_inv(r, &xi_next.scale(dt))? + vf.jac_l(g_k).transpose() * dt;
            CoVec(solve(&a, &rhs)?)
        }
        _ => {
            let residual = |m: &Vector| -> Result<Vector> {
                Ok(lp_residual_with_rhs(h, g_k, &rhs, &CoVec(m.clone()), r, dt)?.0)
            };
            let m = match cfg.method {
                SolveMethod::Newton => newton(&m_k.0, scale, cfg, residual)?,
                SolveMethod::FixedPoint => fixed_point(
                    &m_k.0,
                    scale,
                    cfg,
                    |m: &Vector| {
                        let mu = CoVec(m.clone());
                        let xi_next = h.d_mu_h(g_k, &mu);
                        let a = transposed_dtau_inv(r, &xi_next.scale(dt))?;
                        solve(&a, &(&rhs - h.d_g_h_l(g_k, &mu).0 * dt))
                    },
                    residual,
                )?,
            };
            CoVec(m)
        }
    };
    let xi_next = h.d_mu_h(g_k, &m_next);
    let g_next = h
        .spec()
        .compose(g_k, &retract_in_domain(r, &xi_next.scale(dt))?)?;
    Ok((g_next, m_next, xi_next))
}

/// One step of the reduced map `dτ⁻¹(Δt ξ_{k+1})ᵀ m_{k+1} = dτ⁻¹(−Δt ξ_k)ᵀ m_k`,
/// `ξ_{k+1} = ∂h̃/∂μ(m_{k+1})`, followed by the group reconstruction.
pub fn reduced_lp_step(
    h: &ReducedHamiltonian,
    m_k: &CoVec,
    xi_k: &AlgVec,
    g_k: &GroupElem,
    r: &Retraction,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<(GroupElem, CoVec, AlgVec)> {
    cfg.validate()?;
    let rhs = transposed_dtau_inv(r, &xi_k.scale(-dt))? * &m_k.0;
    let scale = linalg::vec_max_abs(&rhs);
    let residual = |m: &Vector| -> Result<Vector> {
        let xi_next = h.d_mu(&CoVec(m.clone()));
        Ok(transposed_dtau_inv(r, &xi_next.scale(dt))? * m - &rhs)
    };
    let m_next = match cfg.method {
        SolveMethod::Newton => newton(&m_k.0, scale, cfg, residual)?,
        SolveMethod::FixedPoint => fixed_point(
            &m_k.0,
            scale,
            cfg,
            |m: &Vector| {
                let xi_next = h.d_mu(&CoVec(m.clone()));
                solve(&transposed_dtau_inv(r, &xi_next.scale(dt))?, &rhs)
            },
            residual,
        )?,
    };
    let m_next = CoVec(m_next);
    let xi_next = h.d_mu(&m_next);
    let g_next = h
        .spec()
        .compose(g_k, &retract_in_domain(r, &xi_next.scale(dt))?)?;
    Ok((g_next, m_next, xi_next))
}

/// Iterate [`lp_step`] from `(g_0, m_0)` with `ξ_0 = D_μ h(g_0, m_0)`.
pub fn lie_poisson_flow(
    h: &TrivializedHamiltonian,
    g0: &GroupElem,
    m0: &CoVec,
    grid: &TimeGrid,
    r: &Retraction,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    let mut g = vec![g0.clone()];
    let mut m = vec![m0.clone()];
    let mut xi = vec![h.d_mu_h(g0, m0)];
    for k in 0..grid.n {
        let (gn, mn, xn) =
            lp_step(h, &g[k], &m[k], &xi[k], r, grid.dt, cfg).map_err(|e| e.at_step(k))?;
        g.push(gn);
        m.push(mn);
        xi.push(xn);
    }
    Ok(Trajectory {
        grid: *grid,
        g,
        xi,
        m: Some(m),
        eta: None,
    })
}

/// Iterate [`reduced_lp_step`] from `(g_0, m_0)` with `ξ_0 = ∂h̃/∂μ(m_0)`.
pub fn reduced_flow(
    h: &ReducedHamiltonian,
    g0: &GroupElem,
    m0: &CoVec,
    grid: &TimeGrid,
    r: &Retraction,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    let mut g = vec![g0.clone()];
    let mut m = vec![m0.clone()];
    let mut xi = vec![h.d_mu(m0)];
    for k in 0..grid.n {
        let (gn, mn, xn) =
            reduced_lp_step(h, &m[k], &xi[k], &g[k], r, grid.dt, cfg).map_err(|e| e.at_step(k))?;
        g.push(gn);
        m.push(mn);
        xi.push(xn);
    }
    Ok(Trajectory {
        grid: *grid,
        g,
        xi,
        m: Some(m),
        eta: None,
    })
}

/// Backward adjoint recursion from `m_N`:
/// `m_k = dτ⁻¹(−Δt ξ_k)⁻ᵀ [dτ⁻¹(Δt ξ_{k+1})ᵀ + Δt D_L f(g_k)ᵀ] m_{k+1}`.
pub fn adjoint_sweep(
    vf: &TrivializedVectorField,
    traj: &Trajectory,
    m_n: &CoVec,
    r: &Retraction,
) -> Result<Trajectory> {
    let n = traj.grid.n;
    let dt = traj.grid.dt;
    let mut m = vec![CoVec::zeros(m_n.dim()); n + 1];
    m[n] = m_n.clone();
    for k in (0..n).rev() {
        let step = || -> Result<CoVec> {
            let a = transposed_dtau_inv(r, &traj.xi[k + 1].scale(dt))?
                + vf.jac_l(&traj.g[k]).transpose() * dt;
            let b = transposed_dtau_inv(r, &traj.xi[k].scale(-dt))?;
            Ok(CoVec(solve(&b, &(a * &m[k + 1].0))?))
        };
        m[k] = step().map_err(|e| e.at_step(k))?;
    }
    let mut out = traj.clone();
    out.m = Some(m);
    Ok(out)
}

/// Forward variational recursion from `η_0`:
/// `η_{k+1} = Ad_{τ(Δt ξ_{k+1})}⁻¹ [η_k + Δt dτ(Δt ξ_{k+1}) D_L f(g_k) η_k]`.
pub fn variational_sweep(
    vf: &TrivializedVectorField,
    traj: &Trajectory,
    eta0: &AlgVec,
    r: &Retraction,
) -> Result<Trajectory> {
    let spec = vf.spec();
    let dt = traj.grid.dt;
    let mut eta = Vec::with_capacity(traj.grid.n + 1);
    eta.push(eta0.clone());
    for k in 0..traj.grid.n {
        let step = || -> Result<AlgVec> {
            let h = traj.xi[k + 1].scale(dt);
            let ad = spec.ad_group_op(&r.tau(&h)?)?;
            let inner = &eta[k].0 + r.dtau(&h)? * (vf.jac_l(&traj.g[k]) * &eta[k].0) * dt;
            Ok(AlgVec(solve(&ad, &inner)?))
        };
        let next = step().map_err(|e| e.at_step(k))?;
        eta.push(next);
    }
    let mut out = traj.clone();
    out.eta = Some(eta);
    Ok(out)
}

/// One Munthe-Kaas RK4 step for `ġ = g f(g)` coupled to a linear system
/// `ẏ = rhs(g, y)`, with step `h` (negative to integrate backward).
fn rk4_step<F>(
    vf: &TrivializedVectorField,
    exp: &Retraction,
    g: &GroupElem,
    y: &Vector,
    h: f64,
    rhs: &F,
) -> Result<(GroupElem, Vector)>
where
    F: Fn(&GroupElem, &Vector) -> Vector,
{
    let spec = vf.spec();
    // In the chart g_n·exp(u): u̇ = dexp⁻¹_{−u} f(g_n exp(u)).
    let stage = |u: &AlgVec, y: &Vector| -> Result<(AlgVec, Vector)> {
        let gs = spec.compose(g, &exp.tau(u)?)?;
        let du = AlgVec(exp.dtau_inv(&-u)? * &vf.eval(&gs).0);
        Ok((du, rhs(&gs, y)))
    };
    let (k1u, k1y) = stage(&AlgVec::zeros(spec.dim()), y)?;
    let (k2u, k2y) = stage(&k1u.scale(0.5 * h), &(y + &k1y * (0.5 * h)))?;
    let (k3u, k3y) = stage(&k2u.scale(0.5 * h), &(y + &k2y * (0.5 * h)))?;
    let (k4u, k4y) = stage(&k3u.scale(h), &(y + &k3y * h))?;
    let u = AlgVec((k1u.0 + k2u.0 * 2.0 + k3u.0 * 2.0 + k4u.0) * (h / 6.0));
    let y_next = y + (k1y + k2y * 2.0 + k3y * 2.0 + k4y) * (h / 6.0);
    Ok((spec.compose(g, &exp.tau(&u)?)?, y_next))
}

fn exp_chart(vf: &TrivializedVectorField) -> Retraction {
    Retraction::exp(vf.spec_arc().clone()).with_series_order(16)
}

/// Fourth-order reference solution of the continuous flow together with the
/// variational equation started at `η_0` (pass zero when only `g` is wanted).
/// `xi` holds `f(g_k)` at every node.
pub fn rk4_reference(
    vf: &TrivializedVectorField,
    g0: &GroupElem,
    eta0: &AlgVec,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    let exp = exp_chart(vf);
    let rhs = |g: &GroupElem, y: &Vector| continuous_variational_rhs(vf, g, &AlgVec(y.clone())).0;
    let mut g = vec![g0.clone()];
    let mut eta = vec![eta0.clone()];
    for k in 0..grid.n {
        let (gn, yn) =
            rk4_step(vf, &exp, &g[k], &eta[k].0, grid.dt, &rhs).map_err(|e| e.at_step(k))?;
        g.push(gn);
        eta.push(AlgVec(yn));
    }
    let xi = g.iter().map(|gk| vf.eval(gk)).collect();
    Ok(Trajectory {
        grid: *grid,
        g,
        xi,
        m: None,
        eta: Some(eta),
    })
}

/// Fourth-order reference solution of the continuous adjoint system with
/// terminal momentum `μ(T) = mu_t`: `g` forward, then `(g, μ)` backward.
pub fn rk4_adjoint_reference(
    vf: &TrivializedVectorField,
    g0: &GroupElem,
    mu_t: &CoVec,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    let mut traj = rk4_reference(vf, g0, &AlgVec::zeros(vf.spec().dim()), grid)?;
    let exp = exp_chart(vf);
    let rhs = |g: &GroupElem, y: &Vector| continuous_adjoint_rhs(vf, g, &CoVec(y.clone())).1 .0;
    let n = grid.n;
    let mut m = vec![CoVec::zeros(mu_t.dim()); n + 1];
    m[n] = mu_t.clone();
    let mut g = traj.g[n].clone();
    for k in (0..n).rev() {
        let (gp, yp) =
            rk4_step(vf, &exp, &g, &m[k + 1].0, -grid.dt, &rhs).map_err(|e| e.at_step(k))?;
        g = gp;
        m[k] = CoVec(yp);
    }
    traj.m = Some(m);
    traj.eta = None;
    Ok(traj)
}
