//! Command-line front end: JSON problem configs in, CSV/JSON artifacts out.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 solver
//! failure, 4 oracle disagreement, 5 line-search failure, 6 failed
//! machine-precision audit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::algebra::{AlgVec, CoVec, GroupElem, GroupSpec, Membership};
use crate::dynamics::{
    adjoint_hamiltonian, relative_error, CostFunction, ParamVec, TrivializedVectorField,
};
use crate::error::LieError;
use crate::integrator::{adjoint_sweep, forward_flow, SolverConfig, TimeGrid, Trajectory};
use crate::linalg::{self, Mat, Vector};
use crate::optimize::{
    minimize_initial_condition, minimize_parameters, FinalPoint, LineSearchConfig,
    OptimizationTrace,
};
use crate::oracle::{fd_gradient_g0, fd_gradient_u, CanonicalPerturbation};
use crate::problems;
use crate::retraction::{Retraction, RetractionKind};
use crate::sensitivity::{
    audit_noether, conservation_drift, initial_condition_sensitivity, parameter_sensitivity,
    symplectic_drift, SensitivityReport,
};

/// Oracle disagreement above which `sensitivity` fails.
pub const ORACLE_TOL: f64 = 1e-5;
/// Central-difference step of the oracle run alongside `sensitivity`.
pub const ORACLE_EPS: f64 = 1e-5;
/// Relative drift allowed for the machine-precision audits.
pub const MACHINE_AUDIT_TOL: f64 = 1e-12;
/// Relative one-step change allowed for the finite-difference symplectic audit.
pub const SYMPLECTIC_AUDIT_TOL: f64 = 1e-6;
const SYMPLECTIC_AUDIT_STEPS: usize = 50;

#[derive(Debug, Parser)]
#[command(
    name = "lieadj",
    version,
    about = "Discrete adjoint sensitivities for ODEs on matrix Lie groups"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Problem configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Initial,
    Parameter,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the forward flow.
    Integrate {
        #[command(flatten)]
        args: CommonArgs,
    },
    /// Compute the exact discrete gradient and compare it with finite differences.
    Sensitivity {
        #[command(flatten)]
        args: CommonArgs,
        #[arg(long, value_enum, default_value = "initial")]
        mode: Mode,
    },
    /// Minimise the terminal cost over the initial condition or the parameters.
    Optimize {
        #[command(flatten)]
        args: CommonArgs,
        #[arg(long, value_enum, default_value = "initial")]
        mode: Mode,
    },
    /// Run the conservation audits.
    Audit {
        #[command(flatten)]
        args: CommonArgs,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(LieError),
    Io(String),
    OracleDisagreement { max_relative_error: f64 },
    LineSearch(LieError),
    AuditFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::OracleDisagreement { .. } => 4,
            CliError::LineSearch(_) => 5,
            CliError::AuditFailed(_) => 6,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Solver(e) => write!(f, "solver failure: {e}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
            CliError::OracleDisagreement { max_relative_error } => write!(
                f,
                "gradient disagrees with the finite-difference oracle (max relative error {max_relative_error:.3e} > {ORACLE_TOL:.0e})"
            ),
            CliError::LineSearch(e) => write!(f, "{e}"),
            CliError::AuditFailed(checks) => write!(f, "audit failed: {}", checks.join(", ")),
        }
    }
}

impl From<LieError> for CliError {
    fn from(e: LieError) -> Self {
        match e.root() {
            LieError::InvalidConfig(_)
            | LieError::InvalidGroup(_)
            | LieError::CayleyNotClosed(_)
            | LieError::NoParameters
            | LieError::DimensionMismatch { .. } => CliError::Config(e.to_string()),
            LieError::LineSearchFailure { .. } => CliError::LineSearch(e),
            _ => CliError::Solver(e),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

type CliResult<T> = std::result::Result<T, CliError>;
type Job = Box<dyn Fn(&Setup, &Path) -> CliResult<()>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GroupConfig {
    Named(String),
    Inline {
        #[serde(default = "default_group_name")]
        name: String,
        n: usize,
        /// Basis matrices, each row-major.
        basis: Vec<Vec<f64>>,
        membership: Membership,
    },
}

fn default_group_name() -> String {
    "custom".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ProblemConfig {
    Named(String),
    Inline {
        name: String,
        #[serde(default)]
        xi0: Option<Vec<f64>>,
        #[serde(default, rename = "A")]
        a: Option<Vec<f64>>,
        #[serde(default)]
        gain: Option<f64>,
    },
}

impl ProblemConfig {
    fn name(&self) -> &str {
        match self {
            ProblemConfig::Named(n) => n,
            ProblemConfig::Inline { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostConfig {
    /// `‖g − target‖²_F`; the target is either given row-major or generated as
    /// the terminal point of the configured flow from `exp(reachable_from)`.
    FrobeniusTarget {
        #[serde(default)]
        target: Option<Vec<f64>>,
        #[serde(default)]
        reachable_from: Option<Vec<f64>>,
    },
    /// `Tr(A g)`.
    TraceLinear {
        #[serde(rename = "A")]
        a: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum G0Config {
    Named(String),
    Matrix(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub group: Option<GroupConfig>,
    pub problem: ProblemConfig,
    #[serde(default = "default_retraction")]
    pub retraction: RetractionKind,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub cost: Option<CostConfig>,
    /// `"identity"`, `"random"` (seeded) or a row-major matrix.
    #[serde(default)]
    pub g0: Option<G0Config>,
    /// Alternative to `g0`: algebra coordinates `ξ` with `g0 = exp(ξ)`.
    #[serde(default)]
    pub g0_algebra: Option<Vec<f64>>,
    #[serde(default)]
    pub u0: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub linesearch: LineSearchConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_retraction() -> RetractionKind {
    RetractionKind::Exp
}

/// A fully resolved problem.
pub struct Setup {
    pub config: RunConfig,
    pub spec: Arc<GroupSpec>,
    pub vf: TrivializedVectorField,
    pub retraction: Retraction,
    pub grid: TimeGrid,
    pub g0: GroupElem,
    pub cost: Option<CostFunction>,
}

fn square(values: &[f64], n: usize, what: &str) -> CliResult<Mat> {
    if values.len() != n * n {
        return Err(CliError::Config(format!(
            "{what} needs {} entries (row-major {n}×{n}), got {}",
            n * n,
            values.len()
        )));
    }
    Ok(Mat::from_row_slice(n, n, values))
}

fn resolve_group(cfg: &Option<GroupConfig>, problem: &str) -> CliResult<Arc<GroupSpec>> {
    let natural = if problem.starts_with("so3_") {
        Some("SO3")
    } else if problem.starts_with("se3_") {
        Some("SE3")
    } else {
        None
    };
    let spec = match cfg {
        None => match natural {
            Some("SO3") => GroupSpec::so3(),
            Some(_) => GroupSpec::se3(),
            None => {
                return Err(CliError::Config(format!(
                    "problem `{problem}` needs an explicit `group`"
                )))
            }
        },
        Some(GroupConfig::Named(name)) => {
            if let Some(nat) = natural {
                if !name.eq_ignore_ascii_case(nat) {
                    return Err(CliError::Config(format!(
                        "problem `{problem}` lives on {nat}, not `{name}`"
                    )));
                }
            }
            match name.to_ascii_uppercase().as_str() {
                "SO3" => GroupSpec::so3(),
                "SE3" => GroupSpec::se3(),
                _ => {
                    return Err(CliError::Config(format!(
                        "unknown group `{name}` (expected SO3, SE3 or an inline basis)"
                    )))
                }
            }
        }
        Some(GroupConfig::Inline {
            name,
            n,
            basis,
            membership,
        }) => {
            if natural.is_some() {
                return Err(CliError::Config(format!(
                    "problem `{problem}` cannot be used with an inline group"
                )));
            }
            let mats = basis
                .iter()
                .map(|b| square(b, *n, "basis element"))
                .collect::<CliResult<Vec<_>>>()?;
            GroupSpec::new(name.clone(), *n, mats, membership.clone())?
        }
    };
    Ok(Arc::new(spec))
}

fn resolve_problem(cfg: &RunConfig, spec: &Arc<GroupSpec>) -> CliResult<TrivializedVectorField> {
    let (xi0, a, gain) = match &cfg.problem {
        ProblemConfig::Named(_) => (None, None, None),
        ProblemConfig::Inline { xi0, a, gain, .. } => (xi0.clone(), a.clone(), *gain),
    };
    let n = spec.n();
    let d = spec.dim();
    let algebra = |v: Option<Vec<f64>>, default: AlgVec| -> CliResult<AlgVec> {
        match v {
            None => Ok(default),
            Some(v) if v.len() == d => Ok(AlgVec::from_slice(&v)),
            Some(v) => Err(CliError::Config(format!(
                "`xi0` needs {d} entries, got {}",
                v.len()
            ))),
        }
    };
    let matrix = |v: Option<Vec<f64>>, default: Mat| -> CliResult<Mat> {
        v.map_or(Ok(default), |v| square(&v, n, "`A`"))
    };
    let vf = match cfg.problem.name() {
        "zero" => problems::zero_field(spec.clone()),
        "constant" => {
            let xi =
                xi0.ok_or_else(|| CliError::Config("problem `constant` needs `xi0`".into()))?;
            problems::constant_field(spec.clone(), algebra(Some(xi), AlgVec::zeros(d))?)
        }
        "so3_constant" => problems::so3_constant(
            spec.clone(),
            algebra(xi0, problems::default_body_velocity())?,
        ),
        "so3_gradient_like" => problems::so3_gradient_like(
            spec.clone(),
            matrix(a, problems::default_gradient_matrix())?,
        ),
        "se3_screw" => problems::se3_screw(spec.clone(), algebra(xi0, problems::default_twist())?),
        "so3_controlled" => problems::so3_controlled(spec.clone(), problems::default_control()),
        "so3_scalar_gain" => problems::so3_scalar_gain(
            spec.clone(),
            matrix(a, problems::default_gradient_matrix())?,
            gain.unwrap_or(0.8),
        ),
        other => {
            return Err(CliError::Config(format!(
                "unknown problem `{other}` (expected zero, constant, {})",
                problems::BUILTIN_NAMES.join(", ")
            )))
        }
    };
    match &cfg.u0 {
        None => Ok(vf),
        Some(u) => Ok(vf.at_params(&ParamVec::from_slice(u))?),
    }
}

fn resolve_g0(cfg: &RunConfig, spec: &GroupSpec) -> CliResult<GroupElem> {
    let bad = |e: LieError| CliError::Config(format!("g0 is not a group element: {e}"));
    match (&cfg.g0, &cfg.g0_algebra) {
        (Some(_), Some(_)) => Err(CliError::Config(
            "give at most one of `g0` and `g0_algebra`".into(),
        )),
        (None, None) => Ok(spec.identity()),
        (None, Some(xi)) => {
            if xi.len() != spec.dim() {
                return Err(CliError::Config(format!(
                    "`g0_algebra` needs {} entries, got {}",
                    spec.dim(),
                    xi.len()
                )));
            }
            spec.element(linalg::expm(&spec.to_matrix(&AlgVec::from_slice(xi)), 20))
                .map_err(bad)
        }
        (Some(G0Config::Named(name)), None) => match name.as_str() {
            "identity" => Ok(spec.identity()),
            "random" => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                spec.element(spec.random_element(&mut rng, 1.0).into_matrix())
                    .map_err(bad)
            }
            other => Err(CliError::Config(format!(
                "unknown g0 `{other}` (expected identity, random or a matrix)"
            ))),
        },
        (Some(G0Config::Matrix(values)), None) => {
            spec.element(square(values, spec.n(), "`g0`")?).map_err(bad)
        }
    }
}

fn resolve_cost(
    cfg: &RunConfig,
    spec: &Arc<GroupSpec>,
    vf: &TrivializedVectorField,
    grid: &TimeGrid,
    r: &Retraction,
) -> CliResult<Option<CostFunction>> {
    let n = spec.n();
    Ok(match &cfg.cost {
        None => None,
        Some(CostConfig::TraceLinear { a }) => Some(CostFunction::trace_linear(
            spec.clone(),
            square(a, n, "cost `A`")?,
        )),
        Some(CostConfig::FrobeniusTarget {
            target,
            reachable_from,
        }) => {
            let target = match (target, reachable_from) {
                (Some(t), None) => square(t, n, "cost `target`")?,
                (None, Some(xi)) => {
                    if xi.len() != spec.dim() {
                        return Err(CliError::Config(format!(
                            "`reachable_from` needs {} entries",
                            spec.dim()
                        )));
                    }
                    let start =
                        spec.element(linalg::expm(&spec.to_matrix(&AlgVec::from_slice(xi)), 20))?;
                    forward_flow(vf, &start, grid, r)?
                        .final_point()
                        .matrix()
                        .clone()
                }
                _ => return Err(CliError::Config(
                    "cost `frobenius_target` needs exactly one of `target` and `reachable_from`"
                        .into(),
                )),
            };
            Some(CostFunction::frobenius_target(spec.clone(), target))
        }
    })
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn setup(config: RunConfig) -> CliResult<Setup> {
    config.solver.validate()?;
    config.linesearch.validate()?;
    let spec = resolve_group(&config.group, config.problem.name())?;
    let vf = resolve_problem(&config, &spec)?;
    let retraction = Retraction::new(config.retraction, spec.clone())?;
    let grid = TimeGrid::new(config.t_final, config.n)?;
    let g0 = resolve_g0(&config, &spec)?;
    let cost = resolve_cost(&config, &spec, &vf, &grid, &retraction)?;
    Ok(Setup {
        config,
        spec,
        vf,
        retraction,
        grid,
        g0,
        cost,
    })
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    writeln!(f, "{text}").map_err(|e| io_err(path, e))
}

fn header(names: impl IntoIterator<Item = impl Into<String>>) -> Vec<String> {
    names.into_iter().map(Into::into).collect()
}

fn describe(s: &Setup) -> Value {
    json!({
        "group": s.spec.name(),
        "problem": s.config.problem.name(),
        "retraction": s.config.retraction,
        "T": s.grid.t_final(),
        "N": s.grid.n(),
        "seed": s.config.seed,
    })
}

fn require_cost(s: &Setup) -> CliResult<&CostFunction> {
    s.cost
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs a `cost`".into()))
}

fn require_params(s: &Setup) -> CliResult<()> {
    if s.vf.param_dim() == 0 {
        Err(CliError::Config(format!(
            "problem `{}` has no parameters",
            s.config.problem.name()
        )))
    } else {
        Ok(())
    }
}

pub fn integrate(s: &Setup, out: &Path) -> CliResult<()> {
    let traj = forward_flow(&s.vf, &s.g0, &s.grid, &s.retraction)?;
    let n = s.spec.n();
    let d = s.spec.dim();
    let mut cols = vec!["k".to_string(), "t".to_string()];
    cols.extend((0..n).flat_map(|i| (0..n).map(move |j| format!("g_{i}{j}"))));
    cols.extend((0..d).map(|i| format!("xi_{i}")));
    cols.push("membership_residual".into());
    let rows: Vec<Vec<String>> = traj
        .g
        .iter()
        .zip(&traj.xi)
        .enumerate()
        .map(|(k, (g, xi))| {
            let mut row = vec![k.to_string(), fmt_f64(s.grid.t(k))];
            row.extend(g.to_row_major().into_iter().map(fmt_f64));
            row.extend(xi.as_slice().iter().copied().map(fmt_f64));
            row.push(fmt_f64(s.spec.membership_residual(g.matrix())));
            row
        })
        .collect();
    write_csv(&out.join("trajectory.csv"), &cols, &rows)?;
    let mut summary = describe(s);
    summary["command"] = json!("integrate");
    summary["final_g"] = json!(traj.final_point().to_row_major());
    summary["max_membership_residual"] = json!(traj.max_membership_residual(&s.spec));
    summary["step_consistency_residual"] = json!(traj.consistency_residual(&s.retraction)?);
    if let Some(cost) = &s.cost {
        summary["final_cost"] = json!(cost.eval(traj.final_point()));
    }
    write_json(&out.join("summary.json"), &summary)
}

/// Per-component rows use the vector scale `max(‖a‖∞, ‖o‖∞)` as denominator.
fn gradient_rows(algorithm: &[f64], oracle: &[f64]) -> (Vec<Vec<String>>, f64) {
    let scale = algorithm
        .iter()
        .chain(oracle)
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let rows = algorithm
        .iter()
        .zip(oracle)
        .enumerate()
        .map(|(i, (a, o))| {
            let rel = if scale == 0.0 {
                0.0
            } else {
                (a - o).abs() / scale
            };
            vec![i.to_string(), fmt_f64(*a), fmt_f64(*o), fmt_f64(rel)]
        })
        .collect();
    (rows, relative_error(algorithm, oracle))
}

fn noether_column(s: &Setup, traj: &Trajectory) -> Option<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.config.seed ^ 0x4e6f_6574);
    let chi = s.spec.random_algebra_on_sphere(&mut rng, 1.0);
    audit_noether(&adjoint_hamiltonian(&s.vf), traj, &chi, &s.retraction)
        .ok()
        .map(|a| a.series)
}

pub fn sensitivity(s: &Setup, mode: Mode, out: &Path) -> CliResult<()> {
    let cost = require_cost(s)?;
    let (report, oracle): (SensitivityReport, Vec<f64>) = match mode {
        Mode::Initial => {
            let rep = initial_condition_sensitivity(&s.vf, cost, &s.g0, &s.grid, &s.retraction)?;
            let fd = fd_gradient_g0(&s.vf, cost, &s.g0, &s.grid, &s.retraction, ORACLE_EPS)?;
            (rep, fd.0.as_slice().to_vec())
        }
        Mode::Parameter => {
            require_params(s)?;
            let u = s.vf.params().clone();
            let rep = parameter_sensitivity(&s.vf, cost, &s.g0, &u, &s.grid, &s.retraction)?;
            let fd = fd_gradient_u(&s.vf, cost, &s.g0, &u, &s.grid, &s.retraction, ORACLE_EPS)?;
            (rep, fd.as_slice().to_vec())
        }
    };
    let (rows, max_rel) = gradient_rows(report.gradient.as_slice(), &oracle);
    write_csv(
        &out.join("gradient.csv"),
        &header(["component", "algorithm", "oracle", "relative_error"]),
        &rows,
    )?;

    let noether = noether_column(s, &report.trajectory);
    let c0 = report.invariant[0];
    let mut cols = header(["k", "c_k", "drift"]);
    if noether.is_some() {
        cols.push("n_k".into());
    }
    let rows: Vec<Vec<String>> = report
        .invariant
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut row = vec![k.to_string(), fmt_f64(*c), fmt_f64((c - c0).abs())];
            if let Some(n) = &noether {
                row.push(fmt_f64(n[k]));
            }
            row
        })
        .collect();
    write_csv(&out.join("invariant.csv"), &cols, &rows)?;

    let mut summary = describe(s);
    summary["command"] = json!("sensitivity");
    summary["mode"] = json!(if mode == Mode::Initial {
        "initial"
    } else {
        "parameter"
    });
    summary["gradient"] = json!(report.gradient.as_slice());
    summary["oracle_gradient"] = json!(oracle);
    summary["max_relative_error"] = json!(max_rel);
    summary["conservation_drift"] = json!(report.conservation_drift);
    write_json(&out.join("summary.json"), &summary)?;

    if max_rel > ORACLE_TOL || !max_rel.is_finite() {
        return Err(CliError::OracleDisagreement {
            max_relative_error: max_rel,
        });
    }
    Ok(())
}

fn write_trace(s: &Setup, trace: &OptimizationTrace, out: &Path) -> CliResult<()> {
    let rows: Vec<Vec<String>> = trace
        .iterates
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                fmt_f64(r.cost),
                fmt_f64(r.grad_norm),
                fmt_f64(r.step),
                fmt_f64(r.membership_residual),
            ]
        })
        .collect();
    write_csv(
        &out.join("trace.csv"),
        &header([
            "iteration",
            "cost",
            "grad_norm",
            "step",
            "membership_residual",
        ]),
        &rows,
    )?;
    let (cols, rows, value) = match &trace.final_point {
        FinalPoint::Group(g) => {
            let n = s.spec.n();
            let rows = g
                .matrix()
                .row_iter()
                .map(|r| r.iter().copied().map(fmt_f64).collect())
                .collect::<Vec<Vec<String>>>();
            (
                header((0..n).map(|j| format!("col_{j}"))),
                rows,
                json!(g.to_row_major()),
            )
        }
        FinalPoint::Params(u) => {
            let rows =
                u.0.iter()
                    .enumerate()
                    .map(|(i, x)| vec![i.to_string(), fmt_f64(*x)])
                    .collect();
            (header(["index", "value"]), rows, json!(u.0.as_slice()))
        }
    };
    write_csv(&out.join("final_point.csv"), &cols, &rows)?;
    let mut summary = describe(s);
    summary["command"] = json!("optimize");
    summary["converged"] = json!(trace.converged);
    summary["iterations"] = json!(trace.iterates.len() - 1);
    summary["final_cost"] = json!(trace.final_cost());
    summary["final_point"] = value;
    write_json(&out.join("summary.json"), &summary)
}

pub fn optimize(s: &Setup, mode: Mode, out: &Path) -> CliResult<()> {
    let cost = require_cost(s)?;
    let result = match mode {
        Mode::Initial => minimize_initial_condition(
            &s.vf,
            cost,
            &s.g0,
            &s.grid,
            &s.retraction,
            &s.config.linesearch,
        ),
        Mode::Parameter => {
            require_params(s)?;
            minimize_parameters(
                &s.vf,
                cost,
                &s.g0,
                s.vf.params(),
                &s.grid,
                &s.retraction,
                &s.config.linesearch,
            )
        }
    };
    match result {
        Ok(trace) => write_trace(s, &trace, out),
        Err(LieError::LineSearchFailure { iteration, trace }) => {
            write_trace(s, &trace, out)?;
            Err(CliError::LineSearch(LieError::LineSearchFailure {
                iteration,
                trace,
            }))
        }
        Err(e) => Err(e.into()),
    }
}

struct AuditRow {
    check: &'static str,
    value: Option<f64>,
    threshold: f64,
    machine_precision: bool,
}

impl AuditRow {
    fn status(&self) -> &'static str {
        match self.value {
            None => "n/a",
            Some(v) if v <= self.threshold => "pass",
            Some(_) => "fail",
        }
    }
}

pub fn audit(s: &Setup, out: &Path) -> CliResult<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.config.seed);
    let d = s.spec.dim();
    let traj = forward_flow(&s.vf, &s.g0, &s.grid, &s.retraction)?;
    let m_n = s.spec.random_covec(&mut rng, 1.0);
    let traj = adjoint_sweep(&s.vf, &traj, &m_n, &s.retraction)?;
    let quadratic = conservation_drift(&s.vf, &traj, &s.retraction)?;

    let chi = s.spec.random_algebra_on_sphere(&mut rng, 1.0);
    let h = adjoint_hamiltonian(&s.vf);
    let noether = match audit_noether(&h, &traj, &chi, &s.retraction) {
        Ok(a) => Some(a.relative_drift()),
        Err(e) if matches!(e.root(), LieError::NotLeftInvariant { .. }) => None,
        Err(e) => return Err(e.into()),
    };

    let mut pert = || CanonicalPerturbation {
        eta: s.spec.random_algebra_on_sphere(&mut rng, 1.0),
        dp: CoVec(Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0))),
    };
    let (a, b) = (pert(), pert());
    let m0 = s.spec.random_covec(&mut rng, 1.0);
    let steps = s.grid.n().min(SYMPLECTIC_AUDIT_STEPS);
    let short = TimeGrid::new(s.grid.dt() * steps as f64, steps)?;
    let symplectic = symplectic_drift(
        &h,
        &s.g0,
        &m0,
        (a, b),
        &s.retraction,
        &short,
        &s.config.solver,
    )?;

    let rows = [
        AuditRow {
            check: "quadratic_invariant",
            value: Some(quadratic),
            threshold: MACHINE_AUDIT_TOL,
            machine_precision: true,
        },
        AuditRow {
            check: "noether",
            value: noether,
            threshold: MACHINE_AUDIT_TOL,
            machine_precision: true,
        },
        AuditRow {
            check: "symplectic_form",
            value: Some(symplectic),
            threshold: SYMPLECTIC_AUDIT_TOL,
            machine_precision: false,
        },
    ];
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.check.to_string(),
                r.value.map_or("n/a".into(), fmt_f64),
                fmt_f64(r.threshold),
                r.status().to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("audits.csv"),
        &header(["check", "relative_drift", "threshold", "status"]),
        &csv_rows,
    )?;

    let mut summary = describe(s);
    summary["command"] = json!("audit");
    for r in &rows {
        summary[r.check] =
            json!({ "relative_drift": r.value, "threshold": r.threshold, "status": r.status() });
    }
    write_json(&out.join("summary.json"), &summary)?;

    let failed: Vec<String> = rows
        .iter()
        .filter(|r| r.machine_precision && r.status() == "fail")
        .map(|r| r.check.to_string())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::AuditFailed(failed))
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let (args, job): (&CommonArgs, Job) = match &cli.command {
        Command::Integrate { args } => (args, Box::new(integrate)),
        Command::Sensitivity { args, mode } => {
            let mode = *mode;
            (
                args,
                Box::new(move |s: &Setup, out: &Path| sensitivity(s, mode, out)),
            )
        }
        Command::Optimize { args, mode } => {
            let mode = *mode;
            (
                args,
                Box::new(move |s: &Setup, out: &Path| optimize(s, mode, out)),
            )
        }
        Command::Audit { args } => (args, Box::new(audit)),
    };
    let s = setup(load_config(&args.config)?)?;
    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    job(&s, &args.out)
}

/// Size the global thread pool from `LIEADJ_THREADS`, if set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("LIEADJ_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|t| *t > 0).ok_or_else(|| {
        CliError::Config(format!(
            "LIEADJ_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> RunConfig {
        serde_json::from_str(text).unwrap()
    }

    #[test]
    fn named_problem_picks_its_group() {
        let s = setup(parse(r#"{"problem": "se3_screw", "T": 1.0, "N": 4}"#)).unwrap();
        assert_eq!(s.spec.dim(), 6);
    }

    #[test]
    fn mismatched_group_is_a_config_error() {
        let err = setup(parse(
            r#"{"group": "SE3", "problem": "so3_constant", "T": 1.0, "N": 4}"#,
        ))
        .err()
        .unwrap();
        assert_eq!(err.exit_code(), 2);
        let err = setup(parse(
            r#"{"group": "SO4", "problem": "zero", "T": 1.0, "N": 4}"#,
        ))
        .err()
        .unwrap();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn inline_group_and_problem() {
        let s = setup(parse(
            r#"{"group": {"n": 2, "basis": [[0, -1, 1, 0]], "membership": "special_orthogonal"},
                "problem": {"name": "constant", "xi0": [0.5]}, "retraction": "cayley", "T": 1.0, "N": 3}"#,
        ))
        .unwrap();
        assert_eq!(s.spec.dim(), 1);
        assert_eq!(s.vf.eval(&s.g0).as_slice(), &[0.5]);
    }

    #[test]
    fn reachable_target_has_zero_cost_at_its_source() {
        let s = setup(parse(
            r#"{"problem": "so3_constant", "T": 1.0, "N": 5, "g0_algebra": [0.1, 0.2, 0.3],
                "cost": {"name": "frobenius_target", "reachable_from": [0.1, 0.2, 0.3]}}"#,
        ))
        .unwrap();
        let traj = forward_flow(&s.vf, &s.g0, &s.grid, &s.retraction).unwrap();
        assert!(s.cost.unwrap().eval(traj.final_point()) < 1e-28);
    }

    #[test]
    fn non_group_g0_is_rejected() {
        let err = setup(parse(
            r#"{"problem": "so3_constant", "T": 1.0, "N": 5, "g0": [1,0,0, 0,2,0, 0,0,1]}"#,
        ))
        .err()
        .unwrap();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn floats_carry_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
    }

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(
            CliError::from(
                LieError::NoConvergence {
                    residual: 1.0,
                    iterations: 3
                }
                .at_step(7)
            )
            .exit_code(),
            3
        );
        assert_eq!(
            CliError::from(LieError::InvalidConfig("x".into())).exit_code(),
            2
        );
        assert_eq!(
            CliError::OracleDisagreement {
                max_relative_error: 1.0
            }
            .exit_code(),
            4
        );
        assert_eq!(CliError::AuditFailed(vec!["noether".into()]).exit_code(), 6);
    }
}
