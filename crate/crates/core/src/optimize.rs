//! Gradient descent with Armijo backtracking on the initial condition
//! (intrinsically on `G`, via the retraction) and on parameters (in `Rᵐ`).

use serde::{Deserialize, Serialize};

use crate::algebra::{AlgVec, CoVec, GroupElem, GroupSpec};
use crate::dynamics::{CostFunction, ParamVec, TrivializedVectorField};
use crate::error::{LieError, Result};
use crate::integrator::{forward_flow, TimeGrid};
use crate::linalg::Vector;
use crate::retraction::Retraction;
use crate::sensitivity::{initial_condition_sensitivity, parameter_sensitivity};

/// Multiple of `ε·max(1, |C|)` below which a predicted decrease is unresolvable.
pub const ROUNDOFF_FLOOR: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearchConfig {
    pub gamma0: f64,
    pub shrink: f64,
    pub armijo_c: f64,
    pub max_backtracks: usize,
    pub max_outer_iters: usize,
    pub grad_tol: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            gamma0: 1.0,
            shrink: 0.5,
            armijo_c: 1e-4,
            max_backtracks: 40,
            max_outer_iters: 500,
            grad_tol: 1e-9,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(LieError::InvalidConfig(format!("linesearch: {msg}")));
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.gamma0 > 0.0) {
            return bad("gamma0 must be positive");
        }
        if !(self.grad_tol >= 0.0) {
            return bad("grad_tol must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterateRecord {
    pub iteration: usize,
    pub cost: f64,
    pub grad_norm: f64,
    /// Accepted step size; 0 for the starting point.
    pub step: f64,
    /// Group-membership residual of the iterate; 0 for parameter iterates.
    pub membership_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FinalPoint {
    Group(GroupElem),
    Params(ParamVec),
}

#[derive(Clone, Debug)]
pub struct OptimizationTrace {
    /// Row 0 is the starting point; every later row is an accepted step.
    pub iterates: Vec<IterateRecord>,
    pub final_point: FinalPoint,
    /// `false` when the iteration cap stopped the run.
    pub converged: bool,
}

impl OptimizationTrace {
    pub fn final_cost(&self) -> f64 {
        self.iterates.last().map_or(f64::NAN, |r| r.cost)
    }
}

/// Riesz representative `gram⁻¹ μ` of a covector, so that
/// `⟨μ, gradient_direction(μ)⟩ = ‖·‖²_gram ≥ 0`.
pub fn gradient_direction(spec: &GroupSpec, mu: &CoVec) -> AlgVec {
    AlgVec(spec.gram_inv() * &mu.0)
}

/// One evaluation of the objective at a point: cost, gradient covector and
/// descent direction.
struct Evaluation {
    cost: f64,
    grad: Vector,
    dir: Vector,
}

impl Evaluation {
    /// Predicted decrease per unit step, `⟨grad, dir⟩`.
    fn slope(&self) -> f64 {
        self.grad.dot(&self.dir)
    }
}

struct Problem<E, C, S, R> {
    evaluate: E,
    cost_at: C,
    step: S,
    residual: R,
}

fn descend<P, E, C, S, R>(
    start: P,
    ls: &LineSearchConfig,
    problem: Problem<E, C, S, R>,
    wrap: fn(P) -> FinalPoint,
) -> Result<OptimizationTrace>
where
    P: Clone,
    E: Fn(&P) -> Result<Evaluation>,
    C: Fn(&P) -> Result<f64>,
    S: Fn(&P, &Vector, f64) -> Result<P>,
    R: Fn(&P) -> f64,
{
    ls.validate()?;
    let Problem {
        evaluate,
        cost_at,
        step,
        residual,
    } = problem;
    let mut point = start;
    let mut eval = evaluate(&point)?;
    let mut iterates = vec![IterateRecord {
        iteration: 0,
        cost: eval.cost,
        grad_norm: eval.slope().max(0.0).sqrt(),
        step: 0.0,
        membership_residual: residual(&point),
    }];
    let mut converged = false;
    for iteration in 1..=ls.max_outer_iters {
        let slope = eval.slope();
        if slope.max(0.0).sqrt() <= ls.grad_tol {
            converged = true;
            break;
        }
        let mut gamma = ls.gamma0;
        let mut accepted = None;
        for _ in 0..=ls.max_backtracks {
            // A trial that leaves the retraction's domain counts as a rejection.
            if let Ok(candidate) = step(&point, &eval.dir, gamma) {
                if let Ok(c) = cost_at(&candidate) {
                    if c <= eval.cost - ls.armijo_c * gamma * slope && c < eval.cost {
                        accepted = Some(candidate);
                        break;
                    }
                }
            }
            gamma *= ls.shrink;
        }
        let Some(candidate) = accepted else {
            // Nothing the full step could gain is resolvable in floating point:
            // stationary to working precision rather than a failed search.
            if ls.gamma0 * slope <= ROUNDOFF_FLOOR * f64::EPSILON * eval.cost.abs().max(1.0) {
                converged = true;
                break;
            }
            return Err(LieError::LineSearchFailure {
                iteration,
                trace: Box::new(OptimizationTrace {
                    iterates,
                    final_point: wrap(point),
                    converged: false,
                }),
            });
        };
        point = candidate;
        eval = evaluate(&point)?;
        iterates.push(IterateRecord {
            iteration,
            cost: eval.cost,
            grad_norm: eval.slope().max(0.0).sqrt(),
            step: gamma,
            membership_residual: residual(&point),
        });
    }
    if !converged {
        converged = eval.slope().max(0.0).sqrt() <= ls.grad_tol;
    }
    Ok(OptimizationTrace {
        iterates,
        final_point: wrap(point),
        converged,
    })
}

/// Minimise `g_0 ↦ C(g_N)` by `g_0 ← g_0·τ(−γ ∇̃)` with `∇̃` the Riesz
/// representative of the exact discrete gradient.
pub fn minimize_initial_condition(
    vf: &TrivializedVectorField,
    cost: &CostFunction,
    g_init: &GroupElem,
    grid: &TimeGrid,
    r: &Retraction,
    ls: &LineSearchConfig,
) -> Result<OptimizationTrace> {
    let spec = vf.spec();
    descend(
        g_init.clone(),
        ls,
        Problem {
            evaluate: |g: &GroupElem| {
                let rep = initial_condition_sensitivity(vf, cost, g, grid, r)?;
                let grad = CoVec(rep.gradient);
                let dir = gradient_direction(spec, &grad);
                Ok(Evaluation {
                    cost: cost.eval(rep.trajectory.final_point()),
                    grad: grad.0,
                    dir: dir.0,
                })
            },
            cost_at: |g: &GroupElem| Ok(cost.eval(forward_flow(vf, g, grid, r)?.final_point())),
            step: |g: &GroupElem, dir: &Vector, gamma: f64| {
                spec.compose(g, &r.tau(&AlgVec(dir * -gamma))?)
            },
            residual: |g: &GroupElem| spec.membership_residual(g.matrix()),
        },
        FinalPoint::Group,
    )
}

/// Minimise `u ↦ C(g_N(u))` by plain gradient descent in `Rᵐ`.
pub fn minimize_parameters(
    vf: &TrivializedVectorField,
    cost: &CostFunction,
    g0: &GroupElem,
    u_init: &ParamVec,
    grid: &TimeGrid,
    r: &Retraction,
    ls: &LineSearchConfig,
) -> Result<OptimizationTrace> {
    if vf.param_dim() == 0 {
        return Err(LieError::NoParameters);
    }
    descend(
        u_init.clone(),
        ls,
        Problem {
            evaluate: |u: &ParamVec| {
                let rep = parameter_sensitivity(vf, cost, g0, u, grid, r)?;
                Ok(Evaluation {
                    cost: cost.eval(rep.trajectory.final_point()),
                    dir: rep.gradient.clone(),
                    grad: rep.gradient,
                })
            },
            cost_at: |u: &ParamVec| {
                Ok(cost.eval(forward_flow(&vf.at_params(u)?, g0, grid, r)?.final_point()))
            },
            step: |u: &ParamVec, dir: &Vector, gamma: f64| Ok(ParamVec(&u.0 - dir * gamma)),
            residual: |_: &ParamVec| 0.0,
        },
        FinalPoint::Params,
    )
}
