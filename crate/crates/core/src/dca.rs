//! DC programming for the cardinality-constrained model.
//!
//! The binary constraint on `z` is replaced by the exact penalty
//! `θ α(z) = θ Σ z_j (1 - z_j)` over `z ∈ [0, 1]ⁿ`, giving
//! `F = g - h` with `g = (x - x̄)ᵗQ(x - x̄)` and `h = θ Σ z_j (z_j - 1)`, both
//! convex on the relaxed feasible set `A`. Each iteration linearizes `h` at
//! the current `z` (see [`subgradient_h`]) and minimizes the resulting convex
//! QP ([`build_subproblem`]).
//!
//! For a fixed `x` the subproblem is a linear program in `z`, so after each QP
//! solve `z` is moved to a vertex of its optimal face: start every `z_j` at the
//! smallest value the link rows allow and fill the remaining cardinality in
//! order of decreasing `v_j`. The point stays an exact subproblem minimizer,
//! which preserves the descent property, but ties between equal `v_j` no
//! longer leave `z` at the fractional analytic center.

use crate::model::{
    check_feasibility, validate_instance, FeasibilityReport, Instance, ModelError, Point,
    ValidationReport,
};
use crate::qp::{solve_qp, QpError, QpProblem, QpSettings, QpStatus};
use nalgebra::DMatrix;
use serde::Serialize;
use std::fmt::Write as _;
use std::time::Instant;
use thiserror::Error;

/// Relaxed holdings above this value round `z⁰_j` up to 1.
pub const ROUNDING_THRESHOLD: f64 = 1e-9;
/// Feasibility tolerance certified for polished solutions.
pub const SOLUTION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DcaError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("invalid instance: {0}")]
    Invalid(ValidationReport),
    #[error("instance is infeasible: {0}")]
    Infeasible(String),
    #[error("z[{index}] = {value} outside [0, 1]")]
    PenaltyDomain { index: usize, value: f64 },
    #[error("support must hold {card} distinct assets below {n}")]
    Support { card: usize, n: usize },
    #[error("QP solver stopped at its iteration limit (residual {residual:e})")]
    QpStalled { residual: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Penalty escalation: `θ ← factor · θ` while the final `α(z)` exceeds the
/// binariness tolerance, `θ` stays at most `cap` and each restart at least
/// halves `α`. If `z` is still fractional after that, DCA restarts once from
/// the point [`repair_and_polish`] makes of it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Escalation {
    pub enabled: bool,
    pub factor: f64,
    pub cap: f64,
}

impl Default for Escalation {
    fn default() -> Self {
        Escalation {
            enabled: true,
            factor: 5.0,
            cap: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub theta: f64,
    /// Stop when the Euclidean norm of the `4n`-dimensional step is at most
    /// this value.
    pub epsilon: f64,
    /// Cap on subproblem solves, summed over escalation restarts.
    pub max_iter: usize,
    pub escalation: Escalation,
    pub binariness_tol: f64,
    pub qp: QpSettings,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            theta: 2.0,
            epsilon: 1e-6,
            max_iter: 200,
            escalation: Escalation::default(),
            binariness_tol: 1e-6,
            qp: QpSettings::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), DcaError> {
        let bad = |m: &str| Err(DcaError::Config(m.to_owned()));
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return bad("theta must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(self.escalation.factor > 1.0) {
            return bad("escalation factor must exceed 1");
        }
        if !(self.escalation.cap > 0.0) {
            return bad("escalation cap must be positive");
        }
        if !(self.binariness_tol >= 0.0) {
            return bad("binariness tolerance must be non-negative");
        }
        if !(self.qp.tol > 0.0) || self.qp.max_iter == 0 {
            return bad("QP tolerance and iteration cap must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    StepTolerance,
    MaxIter,
    SubproblemInfeasible,
    /// A subproblem QP hit its own iteration cap without certified residuals.
    SubproblemStalled,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::StepTolerance => "step-tolerance",
            Termination::MaxIter => "max-iter",
            Termination::SubproblemInfeasible => "subproblem-infeasible",
            Termination::SubproblemStalled => "subproblem-stalled",
        })
    }
}

/// One DCA iteration: the point produced by subproblem `k` (1-based) and
/// its evaluation under the `θ` that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// Restart counter; `F` is non-increasing within one phase.
    pub phase: usize,
    pub theta: f64,
    pub point: Point,
    /// Penalized objective `F`.
    pub f: f64,
    pub objective: f64,
    pub alpha: f64,
    pub step_norm: f64,
    pub solve_seconds: f64,
    pub qp_iterations: usize,
}

/// Certified binary-feasible portfolio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub x: Vec<f64>,
    pub x_b: Vec<f64>,
    pub x_s: Vec<f64>,
    /// Sorted ascending, 0-based.
    pub support: Vec<usize>,
    pub objective: f64,
    pub feasibility: FeasibilityReport,
}

impl Solution {
    pub fn point(&self) -> Point {
        let mut z = vec![0.0; self.x.len()];
        for &j in &self.support {
            z[j] = 1.0;
        }
        Point {
            x: self.x.clone(),
            x_b: self.x_b.clone(),
            x_s: self.x_s.clone(),
            z,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcaResult {
    /// Rounded relaxation (or the supplied start), not necessarily in `A`.
    pub initial: Point,
    pub trace: Vec<TraceRecord>,
    pub final_point: Point,
    pub solution: Option<Solution>,
    /// Why no solution was produced, when `solution` is `None`.
    pub failure: Option<String>,
    pub iterations: usize,
    pub termination: Termination,
    pub theta: f64,
    pub restarts: usize,
}

/// `Σ z_j (1 - z_j)`; zero exactly on binary vectors.
pub fn penalty_alpha(z: &[f64]) -> Result<f64, DcaError> {
    if let Some((index, &value)) = z.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(DcaError::PenaltyDomain { index, value });
    }
    Ok(alpha(z))
}

fn alpha(z: &[f64]) -> f64 {
    z.iter().map(|v| v * (1.0 - v)).sum()
}

/// `F = (x - x̄)ᵗQ(x - x̄) + θ α(z)`.
pub fn penalized_objective(inst: &Instance, theta: f64, p: &Point) -> Result<f64, DcaError> {
    p.check_dims(inst.n)?;
    Ok(inst.risk(&p.x) + theta * penalty_alpha(&p.z)?)
}

/// `v = θ (2z - 1)`; the `x`, `x_b`, `x_s` components of the subgradient are
/// zero and not materialized.
pub fn subgradient_h(theta: f64, z: &[f64]) -> Vec<f64> {
    z.iter().map(|zj| theta * (2.0 * zj - 1.0)).collect()
}

/// State of one `z_j` in a restricted problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixing {
    Free,
    Zero,
    One,
}

/// DCA subproblem over `y = (x, x_b, x_s, z)`: minimize
/// `(x - x̄)ᵗQ(x - x̄) - vᵗz` over the relaxed feasible set.
///
/// Rows: `Σx = 1`, `Σz = card`, `P + x_b - x_s = x` (equalities);
/// the return floor, `x_j - b_j z_j <= 0` and `a_j z_j - x_j <= 0`
/// (inequalities). Bounds: `0 <= x`, `0 <= x_b <= b`, `0 <= x_s <= P`,
/// `0 <= z <= 1`. The trade caps never bind at the cheapest trades
/// `x_b = (x - P)⁺`, `x_s = (P - x)⁺`.
pub fn build_subproblem(inst: &Instance, v: &[f64]) -> QpProblem {
    build_node_problem(inst, v, &vec![Fixing::Free; inst.n])
}

/// [`build_subproblem`] with some `z_j` fixed. `Zero` also fixes `x_j = 0`.
pub fn build_node_problem(inst: &Instance, v: &[f64], fixings: &[Fixing]) -> QpProblem {
    let n = inst.n;
    let m = 4 * n;
    let (xb, xs, zz) = (n, 2 * n, 3 * n);

    let mut p = DMatrix::zeros(m, m);
    let mut q = vec![0.0; m];
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = 2.0 * inst.covariance[(i, j)];
            q[i] -= 2.0 * inst.covariance[(i, j)] * inst.benchmark[j];
        }
        q[zz + i] = -v[i];
    }

    let mut a_eq = DMatrix::zeros(n + 2, m);
    let mut b_eq = vec![0.0; n + 2];
    for j in 0..n {
        a_eq[(0, j)] = 1.0;
        a_eq[(1, zz + j)] = 1.0;
        a_eq[(2 + j, xb + j)] = 1.0;
        a_eq[(2 + j, xs + j)] = -1.0;
        a_eq[(2 + j, j)] = -1.0;
        b_eq[2 + j] = -inst.holdings[j];
    }
    b_eq[0] = 1.0;
    b_eq[1] = inst.card as f64;

    let mut a_in = DMatrix::zeros(2 * n + 1, m);
    let mut h_in = vec![0.0; 2 * n + 1];
    let bench_return: f64 = inst.benchmark.iter().zip(&inst.returns).map(|(b, r)| b * r).sum();
    h_in[0] = -inst.required_return - bench_return;
    for j in 0..n {
        a_in[(0, j)] = -inst.returns[j];
        a_in[(0, xb + j)] = inst.buy_cost[j];
        a_in[(0, xs + j)] = inst.sell_cost[j];
        a_in[(1 + j, j)] = 1.0;
        a_in[(1 + j, zz + j)] = -inst.upper[j];
        a_in[(1 + n + j, zz + j)] = inst.lower[j];
        a_in[(1 + n + j, j)] = -1.0;
    }

    let mut lower = vec![0.0; m];
    let mut upper = vec![f64::INFINITY; m];
    for j in 0..n {
        upper[xb + j] = inst.upper[j].max(0.0);
        upper[xs + j] = inst.holdings[j].max(0.0);
        upper[zz + j] = 1.0;
        match fixings[j] {
            Fixing::Free => {}
            Fixing::Zero => {
                upper[zz + j] = 0.0;
                upper[j] = 0.0;
            }
            Fixing::One => lower[zz + j] = 1.0,
        }
    }

    QpProblem::new(p, q)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, h_in)
        .with_bounds(lower, upper)
}

/// Vertex of the optimal `z`-face for fixed `x`: every free `z_j` starts at
/// `x_j / b_j` and the remaining cardinality is assigned up to
/// `min(1, x_j / a_j)` by decreasing `v_j`, then larger `x_j`, then lower
/// index. Fixed entries keep their value.
pub(crate) fn vertex_z(inst: &Instance, x: &[f64], v: &[f64], fixings: &[Fixing]) -> Vec<f64> {
    let n = inst.n;
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for j in 0..n {
        let xj = x[j].max(0.0);
        (lo[j], hi[j]) = match fixings[j] {
            Fixing::Zero => (0.0, 0.0),
            Fixing::One => (1.0, 1.0),
            Fixing::Free => {
                let lo = if inst.upper[j] > 0.0 { (xj / inst.upper[j]).min(1.0) } else { 0.0 };
                let hi = if inst.lower[j] > 0.0 { (xj / inst.lower[j]).min(1.0) } else { 1.0 };
                (lo, hi.max(lo))
            }
        };
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        v[j].total_cmp(&v[i])
            .then(x[j].total_cmp(&x[i]))
            .then(i.cmp(&j))
    });
    let mut z = lo.clone();
    let mut rest = inst.card as f64 - lo.iter().sum::<f64>();
    for j in order {
        if rest <= 0.0 {
            break;
        }
        let add = (hi[j] - lo[j]).min(rest);
        z[j] += add;
        rest -= add;
    }
    z
}

fn check_instance(inst: &Instance) -> Result<(), DcaError> {
    let report = validate_instance(inst);
    if report.is_valid() {
        Ok(())
    } else {
        Err(DcaError::Invalid(report))
    }
}

/// Continuous relaxation rounded up: `z⁰_j = 1` iff the relaxed `x_j`
/// exceeds [`ROUNDING_THRESHOLD`]. `Σ z⁰` may differ from `card`.
pub fn initial_point(inst: &Instance, qp: &QpSettings) -> Result<Point, DcaError> {
    let sol = solve_qp(&build_subproblem(inst, &vec![0.0; inst.n]), qp)?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => {
            return Err(DcaError::Infeasible(format!(
                "continuous relaxation is infeasible ({})",
                sol.certificate.unwrap_or_default()
            )))
        }
        QpStatus::IterationLimit => {
            return Err(DcaError::QpStalled {
                residual: sol.residuals.max(),
            })
        }
    }
    let mut p = Point::from_stacked(inst.n, &sol.y);
    p.z = p.x.iter().map(|&x| if x > ROUNDING_THRESHOLD { 1.0 } else { 0.0 }).collect();
    Ok(p)
}

/// Solves the convex QP on a fixed support. `Ok(None)` means the support
/// admits no feasible `x`.
pub fn solve_support(
    inst: &Instance,
    support: &[usize],
    qp: &QpSettings,
) -> Result<Option<Solution>, DcaError> {
    let n = inst.n;
    let mut fix = vec![Fixing::Zero; n];
    for &j in support {
        if j >= n || fix[j] == Fixing::One {
            return Err(DcaError::Support { card: inst.card, n });
        }
        fix[j] = Fixing::One;
    }
    if support.len() != inst.card {
        return Err(DcaError::Support { card: inst.card, n });
    }
    let sol = solve_qp(&build_node_problem(inst, &vec![0.0; n], &fix), qp)?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => return Ok(None),
        QpStatus::IterationLimit => {
            return Err(DcaError::QpStalled {
                residual: sol.residuals.max(),
            })
        }
    }
    let p = Point::from_stacked(n, &sol.y);
    let feasibility = check_feasibility(inst, &p, SOLUTION_TOL, true)?;
    let mut support = support.to_vec();
    support.sort_unstable();
    Ok(Some(Solution {
        objective: inst.risk(&p.x),
        x: p.x,
        x_b: p.x_b,
        x_s: p.x_s,
        support,
        feasibility,
    }))
}

/// Rounds `p` to a support and re-optimizes `x` on it.
///
/// Assets are ranked by `z` descending, then `x` descending, then index. The
/// first attempt takes the top `card`; attempt `i` keeps the top `card - 1`
/// and adds the asset ranked `card - 1 + i`, for `n - card + 1` attempts.
pub fn repair_and_polish(inst: &Instance, p: &Point, qp: &QpSettings) -> Result<Solution, DcaError> {
    let n = inst.n;
    p.check_dims(n)?;
    let card = inst.card;
    if card == 0 || card > n {
        return Err(DcaError::Support { card, n });
    }
    let mut rank: Vec<usize> = (0..n).collect();
    rank.sort_by(|&i, &j| {
        p.z[j].total_cmp(&p.z[i])
            .then(p.x[j].total_cmp(&p.x[i]))
            .then(i.cmp(&j))
    });
    for attempt in 0..=(n - card) {
        let mut support = rank[..card - 1].to_vec();
        support.push(rank[card - 1 + attempt]);
        if let Some(sol) = solve_support(inst, &support, qp)? {
            return Ok(sol);
        }
    }
    Err(DcaError::Infeasible(format!(
        "no feasible support among {} ranked candidates",
        n - card + 1
    )))
}

/// Full DCA from the rounded continuous relaxation, followed by
/// [`repair_and_polish`]. With `card = n` the problem is a single convex
/// solve on the full support.
pub fn run_dca(inst: &Instance, cfg: &SolverConfig) -> Result<DcaResult, DcaError> {
    cfg.validate()?;
    check_instance(inst)?;
    if inst.card == inst.n {
        return full_support(inst, cfg);
    }
    let start = initial_point(inst, &cfg.qp)?;
    run_from(inst, cfg, start)
}

/// DCA from an arbitrary starting point of matching dimension.
pub fn run_dca_from(inst: &Instance, cfg: &SolverConfig, start: Point) -> Result<DcaResult, DcaError> {
    cfg.validate()?;
    check_instance(inst)?;
    start.check_dims(inst.n)?;
    run_from(inst, cfg, start)
}

fn full_support(inst: &Instance, cfg: &SolverConfig) -> Result<DcaResult, DcaError> {
    let support: Vec<usize> = (0..inst.n).collect();
    let t0 = Instant::now();
    let sol = solve_support(inst, &support, &cfg.qp)?
        .ok_or_else(|| DcaError::Infeasible("full support admits no feasible portfolio".into()))?;
    let point = sol.point();
    let record = TraceRecord {
        k: 1,
        phase: 0,
        theta: cfg.theta,
        point: point.clone(),
        f: sol.objective,
        objective: sol.objective,
        alpha: 0.0,
        step_norm: 0.0,
        solve_seconds: t0.elapsed().as_secs_f64(),
        qp_iterations: 0,
    };
    Ok(DcaResult {
        initial: point.clone(),
        trace: vec![record],
        final_point: point,
        solution: Some(sol),
        failure: None,
        iterations: 1,
        termination: Termination::StepTolerance,
        theta: cfg.theta,
        restarts: 0,
    })
}

fn run_from(inst: &Instance, cfg: &SolverConfig, start: Point) -> Result<DcaResult, DcaError> {
    let n = inst.n;
    let esc = &cfg.escalation;
    let mut theta = cfg.theta;
    let mut current = start.clone();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut restarts = 0;
    let mut phase = 0;
    let mut last_alpha: Option<f64> = None;
    let mut rounded = false;

    let termination = 'outer: loop {
        loop {
            if iterations >= cfg.max_iter {
                break 'outer Termination::MaxIter;
            }
            let v = subgradient_h(theta, &current.z);
            let t0 = Instant::now();
            let sol = solve_qp(&build_subproblem(inst, &v), &cfg.qp)?;
            let solve_seconds = t0.elapsed().as_secs_f64();
            iterations += 1;
            match sol.status {
                QpStatus::Optimal => {}
                QpStatus::Infeasible => break 'outer Termination::SubproblemInfeasible,
                QpStatus::IterationLimit => break 'outer Termination::SubproblemStalled,
            }
            let mut next = Point::from_stacked(n, &sol.y);
            next.z = vertex_z(inst, &next.x, &v, &vec![Fixing::Free; n]);
            let step_norm = next.distance(&current);
            let objective = inst.risk(&next.x);
            let a = alpha(&next.z);
            trace.push(TraceRecord {
                k: iterations,
                phase,
                theta,
                point: next.clone(),
                f: objective + theta * a,
                objective,
                alpha: a,
                step_norm,
                solve_seconds,
                qp_iterations: sol.iterations,
            });
            current = next;
            if step_norm <= cfg.epsilon {
                break;
            }
        }
        let a = alpha(&current.z);
        if a <= cfg.binariness_tol || !esc.enabled {
            break Termination::StepTolerance;
        }
        // A larger θ only helps while it keeps shrinking α; a critical point
        // that survives escalation is left through its rounding instead.
        let stagnated = last_alpha.is_some_and(|prev| a > 0.5 * prev);
        if !stagnated && theta * esc.factor <= esc.cap {
            theta *= esc.factor;
            last_alpha = Some(a);
        } else if !rounded {
            let Ok(sol) = repair_and_polish(inst, &current, &cfg.qp) else {
                break Termination::StepTolerance;
            };
            current = sol.point();
            rounded = true;
        } else {
            break Termination::StepTolerance;
        }
        restarts += 1;
        phase += 1;
    };

    let (solution, failure) = match repair_and_polish(inst, &current, &cfg.qp) {
        Ok(sol) => (Some(sol), None),
        Err(e) => (None, Some(format!("{e} (DCA stopped: {termination})"))),
    };
    Ok(DcaResult {
        initial: start,
        trace,
        final_point: current,
        solution,
        failure,
        iterations,
        termination,
        theta,
        restarts,
    })
}

/// Delimited trace table, one row per iteration.
pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from("k,phase,theta,F,objective,alpha,step_norm,solve_seconds,qp_iterations\n");
    for r in trace {
        let _ = writeln!(
            out,
            "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.6},{}",
            r.k, r.phase, r.theta, r.f, r.objective, r.alpha, r.step_norm, r.solve_seconds, r.qp_iterations
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InstanceParts;

    fn two_asset() -> Instance {
        Instance::from_parts(InstanceParts {
            returns: vec![0.1, 0.1],
            covariance: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0])),
            required_return: 0.0,
            card: 1,
            lower: vec![0.05; 2],
            upper: vec![1.0; 2],
            buy_cost: vec![0.0; 2],
            sell_cost: vec![0.0; 2],
            holdings: vec![0.0; 2],
            benchmark: vec![0.0; 2],
        })
        .unwrap()
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(penalty_alpha(&[1.0, 0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(penalty_alpha(&[0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(penalty_alpha(&[0.25]).unwrap(), 0.1875);
        assert!(matches!(
            penalty_alpha(&[0.5, 1.5]),
            Err(DcaError::PenaltyDomain { index: 1, .. })
        ));
    }

    #[test]
    fn subgradient_examples() {
        assert_eq!(subgradient_h(2.0, &[1.0, 0.0]), vec![2.0, -2.0]);
        assert_eq!(subgradient_h(2.0, &[0.5, 0.5, 0.5]), vec![0.0; 3]);
        assert_eq!(subgradient_h(0.0, &[0.3, 1.0]), vec![0.0; 2]);
    }

    #[test]
    fn penalized_objective_examples() {
        let mut inst = two_asset();
        inst.covariance = DMatrix::identity(2, 2);
        let at = |x: Vec<f64>, z: Vec<f64>| Point {
            x,
            x_b: vec![0.0; 2],
            x_s: vec![0.0; 2],
            z,
        };
        assert_eq!(penalized_objective(&inst, 2.0, &at(vec![1.0, 0.0], vec![1.0, 0.0])).unwrap(), 1.0);
        inst.benchmark = vec![0.5, 0.5];
        assert_eq!(penalized_objective(&inst, 2.0, &at(vec![0.5, 0.5], vec![0.5, 0.5])).unwrap(), 1.0);
        assert_eq!(penalized_objective(&inst, 2.0, &at(vec![0.5, 0.5], vec![1.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn subproblem_shape() {
        let p = build_subproblem(&two_asset(), &[0.0, 0.0]);
        assert_eq!(p.dim(), 8);
        assert_eq!(p.a_eq.nrows(), 4);
        assert_eq!(p.a_in.nrows(), 5);
        p.validate().unwrap();
    }

    #[test]
    fn two_asset_dca_picks_low_variance_asset() {
        let res = run_dca(&two_asset(), &SolverConfig::default()).unwrap();
        let sol = res.solution.unwrap();
        assert_eq!(sol.support, vec![0]);
        assert!((sol.x[0] - 1.0).abs() < 1e-9 && sol.x[1].abs() < 1e-12);
        assert!((sol.objective - 1.0).abs() < 1e-8);
        assert!(sol.feasibility.feasible);
    }

    #[test]
    fn repair_ranking_examples() {
        let mut inst = two_asset();
        inst.n = 3;
        inst.returns = vec![0.1; 3];
        inst.covariance = DMatrix::identity(3, 3);
        for v in [&mut inst.lower, &mut inst.upper, &mut inst.buy_cost, &mut inst.sell_cost] {
            let first = v[0];
            v.push(first);
        }
        inst.holdings.push(0.0);
        inst.benchmark.push(0.0);
        inst.card = 2;
        let p = Point {
            x: vec![0.4, 0.4, 0.2],
            x_b: vec![0.4, 0.4, 0.2],
            x_s: vec![0.0; 3],
            z: vec![0.9, 0.6, 0.1],
        };
        let sol = repair_and_polish(&inst, &p, &QpSettings::default()).unwrap();
        assert_eq!(sol.support, vec![0, 1]);

        let inst = two_asset();
        let p = Point {
            x: vec![0.7, 0.3],
            x_b: vec![0.7, 0.3],
            x_s: vec![0.0; 2],
            z: vec![0.5, 0.5],
        };
        let sol = repair_and_polish(&inst, &p, &QpSettings::default()).unwrap();
        assert_eq!(sol.support, vec![0]);
    }

    #[test]
    fn vertex_z_respects_links_and_cardinality() {
        let mut inst = two_asset();
        inst.card = 1;
        let free = [Fixing::Free; 2];
        let z = vertex_z(&inst, &[0.5, 0.5], &[0.0, 0.0], &free);
        // lo = (0.5, 0.5) already sums to card.
        assert_eq!(z, vec![0.5, 0.5]);
        let z = vertex_z(&inst, &[1.0, 0.0], &[-2.0, 2.0], &free);
        assert_eq!(z, vec![1.0, 0.0]);
        // A fixed one uses up the cardinality even against the penalty sign.
        let z = vertex_z(&inst, &[0.0, 1.0], &[2.0, -2.0], &[Fixing::Free, Fixing::One]);
        assert_eq!(z, vec![0.0, 1.0]);
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let res = run_dca(&two_asset(), &SolverConfig::default()).unwrap();
        let csv = trace_csv(&res.trace);
        assert_eq!(csv.lines().count(), res.trace.len() + 1);
        assert!(csv.starts_with("k,phase,theta,F,"));
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig { theta: 0.0, ..SolverConfig::default() };
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::default();
        cfg.escalation.factor = 1.0;
        assert!(cfg.validate().is_err());
    }
}
