//! Convex quadratic programming with certified KKT residuals.
//!
//! Problems have the form
//!
//! ```text
//! minimize    ½ yᵗ P y + qᵗ y
//! subject to  A_eq y  = b_eq
//!             A_in y <= h_in
//!             lower <= y <= upper        (±∞ allowed)
//! ```
//!
//! Duals follow the Lagrangian
//! `L = ½yᵗPy + qᵗy + νᵗ(A_eq y − b_eq) + λᵗ(A_in y − h_in) + μ_uᵗ(y − u) − μ_lᵗ(y − l)`
//! with `λ, μ_l, μ_u ≥ 0`, so stationarity reads
//! `P y + q + A_eqᵗ ν + A_inᵗ λ + μ_u − μ_l = 0`.
//!
//! [`solve_qp`] runs a Mehrotra predictor-corrector interior-point method on
//! a presolved copy (fixed variables, singleton equality rows and empty rows
//! removed), then polishes
//! the result by re-solving the equality-constrained problem on the detected
//! active set. Every returned solution is re-certified by [`kkt_residuals`]
//! on the original problem.

mod ipm;
pub(crate) mod ldl;
mod polish;

use nalgebra::DMatrix;
use serde::Serialize;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("P is not symmetric (max |P - Pᵗ| = {0:e})")]
    Asymmetric(f64),
    #[error("lower bound exceeds upper bound for variable {0}")]
    BoundOrder(usize),
    #[error("non-finite problem data in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: Vec<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: Vec<f64>,
    pub a_in: DMatrix<f64>,
    pub h_in: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QpProblem {
    /// Unconstrained problem with free variables.
    pub fn new(p: DMatrix<f64>, q: Vec<f64>) -> Self {
        let m = q.len();
        QpProblem {
            p,
            q,
            a_eq: DMatrix::zeros(0, m),
            b_eq: Vec::new(),
            a_in: DMatrix::zeros(0, m),
            h_in: Vec::new(),
            lower: vec![f64::NEG_INFINITY; m],
            upper: vec![f64::INFINITY; m],
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: Vec<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, h: Vec<f64>) -> Self {
        self.a_in = a;
        self.h_in = h;
        self
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        let m = self.dim();
        let mut val = 0.0;
        for i in 0..m {
            let mut row = 0.0;
            for j in 0..m {
                row += self.p[(i, j)] * y[j];
            }
            val += 0.5 * y[i] * row + self.q[i] * y[i];
        }
        val
    }

    /// Checks the structural invariants: consistent dimensions, symmetric
    /// `P`, finite data and `lower <= upper`.
    pub fn validate(&self) -> Result<(), QpError> {
        let m = self.dim();
        let dim = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(QpError::Dimension {
                    what,
                    expected,
                    got,
                })
            }
        };
        dim("P rows", m, self.p.nrows())?;
        dim("P cols", m, self.p.ncols())?;
        dim("A_eq cols", m, self.a_eq.ncols())?;
        dim("b_eq", self.a_eq.nrows(), self.b_eq.len())?;
        dim("A_in cols", m, self.a_in.ncols())?;
        dim("h_in", self.a_in.nrows(), self.h_in.len())?;
        dim("lower", m, self.lower.len())?;
        dim("upper", m, self.upper.len())?;
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(self.p.as_slice()) {
            return Err(QpError::NonFinite("P"));
        }
        if !finite(&self.q) {
            return Err(QpError::NonFinite("q"));
        }
        if !finite(self.a_eq.as_slice()) || !finite(&self.b_eq) {
            return Err(QpError::NonFinite("equalities"));
        }
        if !finite(self.a_in.as_slice()) || !finite(&self.h_in) {
            return Err(QpError::NonFinite("inequalities"));
        }
        let mut gap: f64 = 0.0;
        for i in 0..m {
            for j in 0..i {
                gap = gap.max((self.p[(i, j)] - self.p[(j, i)]).abs());
            }
        }
        if gap > 1e-12 {
            return Err(QpError::Asymmetric(gap));
        }
        for i in 0..m {
            if self.lower[i].is_nan() || self.upper[i].is_nan() || self.lower[i] > self.upper[i] {
                return Err(QpError::BoundOrder(i));
            }
        }
        Ok(())
    }

    /// Plain-text dump of the problem, for reproducing solver issues.
    pub fn to_text(&self) -> String {
        fn row(out: &mut String, key: &str, vals: impl Iterator<Item = f64>) {
            out.push_str(key);
            for v in vals {
                let _ = write!(out, " {v:.16e}");
            }
            out.push('\n');
        }
        fn matrix(out: &mut String, key: &str, m: &DMatrix<f64>) {
            let _ = writeln!(out, "{key} {} {}", m.nrows(), m.ncols());
            for i in 0..m.nrows() {
                row(out, " ", (0..m.ncols()).map(|j| m[(i, j)]));
            }
        }
        let mut out = String::from("# dcafolio qp\n");
        matrix(&mut out, "P", &self.p);
        row(&mut out, "q", self.q.iter().copied());
        matrix(&mut out, "A_eq", &self.a_eq);
        row(&mut out, "b_eq", self.b_eq.iter().copied());
        matrix(&mut out, "A_in", &self.a_in);
        row(&mut out, "h_in", self.h_in.iter().copied());
        row(&mut out, "lower", self.lower.iter().copied());
        row(&mut out, "upper", self.upper.iter().copied());
        out
    }
}

/// Dual variables, one block per constraint family.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct QpDuals {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QpDuals {
    pub fn zeros(p: &QpProblem) -> Self {
        QpDuals {
            eq: vec![0.0; p.b_eq.len()],
            ineq: vec![0.0; p.h_in.len()],
            lower: vec![0.0; p.dim()],
            upper: vec![0.0; p.dim()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

/// Max-norm KKT residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.primal <= tol && self.dual <= tol && self.complementarity <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpSolution {
    pub y: Vec<f64>,
    pub duals: QpDuals,
    pub status: QpStatus,
    pub residuals: KktResiduals,
    pub objective: f64,
    pub iterations: usize,
    /// Why the problem was declared infeasible.
    pub certificate: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    /// Bound on every KKT residual of an optimal result.
    pub tol: f64,
    /// Interior-point iteration cap.
    pub max_iter: usize,
    /// Re-solve on the detected active set after the interior-point phase.
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tol: 1e-8,
            max_iter: 200,
            polish: true,
        }
    }
}

/// Re-evaluates primal feasibility, stationarity (plus dual sign
/// feasibility) and complementarity of `(y, duals)` on `p`.
///
/// A dual attached to an infinite bound counts as a dual residual.
pub fn kkt_residuals(p: &QpProblem, y: &[f64], duals: &QpDuals) -> Result<KktResiduals, QpError> {
    let m = p.dim();
    let check = |what, expected: usize, got: usize| {
        if expected == got {
            Ok(())
        } else {
            Err(QpError::Dimension {
                what,
                expected,
                got,
            })
        }
    };
    check("y", m, y.len())?;
    check("equality duals", p.b_eq.len(), duals.eq.len())?;
    check("inequality duals", p.h_in.len(), duals.ineq.len())?;
    check("lower bound duals", m, duals.lower.len())?;
    check("upper bound duals", m, duals.upper.len())?;

    let mut primal: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut compl: f64 = 0.0;

    let mut grad: Vec<f64> = (0..m)
        .map(|i| p.q[i] + (0..m).map(|j| p.p[(i, j)] * y[j]).sum::<f64>())
        .collect();
    for r in 0..p.a_eq.nrows() {
        let ay: f64 = (0..m).map(|j| p.a_eq[(r, j)] * y[j]).sum();
        primal = primal.max((ay - p.b_eq[r]).abs());
        for (j, g) in grad.iter_mut().enumerate() {
            *g += p.a_eq[(r, j)] * duals.eq[r];
        }
    }
    for r in 0..p.a_in.nrows() {
        let ay: f64 = (0..m).map(|j| p.a_in[(r, j)] * y[j]).sum();
        let slack = p.h_in[r] - ay;
        let lam = duals.ineq[r];
        primal = primal.max(-slack);
        dual = dual.max(-lam);
        compl = compl.max((lam * slack).abs());
        for (j, g) in grad.iter_mut().enumerate() {
            *g += p.a_in[(r, j)] * lam;
        }
    }
    for i in 0..m {
        let (l, u) = (p.lower[i], p.upper[i]);
        let (ml, mu) = (duals.lower[i], duals.upper[i]);
        grad[i] += mu - ml;
        dual = dual.max(-ml).max(-mu);
        if l.is_finite() {
            primal = primal.max(l - y[i]);
            compl = compl.max((ml * (y[i] - l)).abs());
        } else {
            dual = dual.max(ml.abs());
        }
        if u.is_finite() {
            primal = primal.max(y[i] - u);
            compl = compl.max((mu * (u - y[i])).abs());
        } else {
            dual = dual.max(mu.abs());
        }
    }
    for g in grad {
        dual = dual.max(g.abs());
    }
    Ok(KktResiduals {
        primal,
        dual,
        complementarity: compl,
    })
}

/// Sparse row: `(column, value)` pairs.
pub(crate) type SparseRow = Vec<(usize, f64)>;

/// Presolved problem in the solver's internal form. Variables with
/// `lower == upper`, or pinned by a singleton equality row, are substituted
/// out and rows left without any coefficient are dropped.
#[derive(Debug, Clone)]
pub(crate) struct Reduced {
    pub m: usize,
    /// Lower triangle of `P` (`i >= j`).
    pub p: Vec<(usize, usize, f64)>,
    pub q: Vec<f64>,
    pub a: Vec<SparseRow>,
    pub b: Vec<f64>,
    pub g: Vec<SparseRow>,
    pub h: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Reduced {
    pub fn p_times(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for &(i, j, v) in &self.p {
            out[i] += v * y[j];
            if i != j {
                out[j] += v * y[i];
            }
        }
        out
    }
}

pub(crate) fn row_dot(row: &SparseRow, y: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * y[j]).sum()
}

/// Solution of a [`Reduced`] problem. Bound duals are per reduced variable.
#[derive(Debug, Clone)]
pub(crate) struct ReducedSolution {
    pub y: Vec<f64>,
    pub nu: Vec<f64>,
    pub lam: Vec<f64>,
    pub mu_lower: Vec<f64>,
    pub mu_upper: Vec<f64>,
}

impl ReducedSolution {
    /// Internal residuals, same definitions as [`kkt_residuals`].
    pub fn residuals(&self, r: &Reduced) -> KktResiduals {
        let mut primal: f64 = 0.0;
        let mut dual: f64 = 0.0;
        let mut compl: f64 = 0.0;
        let mut grad = r.p_times(&self.y);
        for i in 0..r.m {
            grad[i] += r.q[i];
        }
        for (k, row) in r.a.iter().enumerate() {
            primal = primal.max((row_dot(row, &self.y) - r.b[k]).abs());
            for &(j, v) in row {
                grad[j] += v * self.nu[k];
            }
        }
        for (k, row) in r.g.iter().enumerate() {
            let slack = r.h[k] - row_dot(row, &self.y);
            primal = primal.max(-slack);
            dual = dual.max(-self.lam[k]);
            compl = compl.max((self.lam[k] * slack).abs());
            for &(j, v) in row {
                grad[j] += v * self.lam[k];
            }
        }
        for i in 0..r.m {
            let (ml, mu) = (self.mu_lower[i], self.mu_upper[i]);
            grad[i] += mu - ml;
            dual = dual.max(-ml).max(-mu);
            if r.lower[i].is_finite() {
                primal = primal.max(r.lower[i] - self.y[i]);
                compl = compl.max((ml * (self.y[i] - r.lower[i])).abs());
            } else {
                dual = dual.max(ml.abs());
            }
            if r.upper[i].is_finite() {
                primal = primal.max(self.y[i] - r.upper[i]);
                compl = compl.max((mu * (r.upper[i] - self.y[i])).abs());
            } else {
                dual = dual.max(mu.abs());
            }
        }
        for g in grad {
            dual = dual.max(g.abs());
        }
        KktResiduals {
            primal,
            dual,
            complementarity: compl,
        }
    }
}

struct Presolved {
    reduced: Reduced,
    /// Reduced index → original index.
    var_map: Vec<usize>,
    /// Values of the substituted variables (NaN for kept ones).
    fixed: Vec<f64>,
    eq_map: Vec<usize>,
    in_map: Vec<usize>,
    /// `(row, variable)` pairs in the order singleton equality rows fixed them.
    eliminated: Vec<(usize, usize)>,
}

enum PresolveOutcome {
    Ready(Box<Presolved>),
    Infeasible(String),
}

fn presolve(p: &QpProblem, tol: f64) -> PresolveOutcome {
    let m = p.dim();
    let mut fixed = vec![f64::NAN; m];
    let mut new_index = vec![usize::MAX; m];
    let mut var_map = Vec::new();
    for i in 0..m {
        if p.lower[i] == p.upper[i] {
            fixed[i] = p.lower[i];
        } else {
            new_index[i] = var_map.len();
            var_map.push(i);
        }
    }
    // Equality rows left with a single free variable determine it. Repeat
    // until no new singleton appears.
    let mut eliminated = Vec::new();
    let mut row_done = vec![false; p.a_eq.nrows()];
    loop {
        let mut changed = false;
        for r in 0..p.a_eq.nrows() {
            if row_done[r] {
                continue;
            }
            let mut val = p.b_eq[r];
            let mut single = None;
            let mut count = 0;
            for j in 0..m {
                let v = p.a_eq[(r, j)];
                if v == 0.0 {
                    continue;
                }
                if fixed[j].is_nan() {
                    count += 1;
                    single = Some((j, v));
                } else {
                    val -= v * fixed[j];
                }
            }
            match (count, single) {
                (0, _) => row_done[r] = true,
                (1, Some((j, v))) => {
                    let value = val / v;
                    if value < p.lower[j] - tol || value > p.upper[j] + tol {
                        return PresolveOutcome::Infeasible(format!(
                            "equality row {r} forces variable {j} to {value:e}, outside [{:e}, {:e}]",
                            p.lower[j], p.upper[j]
                        ));
                    }
                    fixed[j] = value;
                    eliminated.push((r, j));
                    row_done[r] = true;
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
    for i in 0..m {
        if !fixed[i].is_nan() {
            new_index[i] = usize::MAX;
        }
    }
    var_map.retain(|&i| fixed[i].is_nan());
    for (ri, &i) in var_map.iter().enumerate() {
        new_index[i] = ri;
    }
    let mr = var_map.len();

    let mut pl = Vec::new();
    let mut q = vec![0.0; mr];
    for (ri, &i) in var_map.iter().enumerate() {
        q[ri] = p.q[i];
        for j in 0..m {
            let v = p.p[(i, j)];
            if v == 0.0 {
                continue;
            }
            if fixed[j].is_nan() {
                let rj = new_index[j];
                if rj <= ri {
                    pl.push((ri, rj, v));
                }
            } else {
                q[ri] += v * fixed[j];
            }
        }
    }

    let reduce_rows = |mat: &DMatrix<f64>, rhs: &[f64]| {
        let mut rows = Vec::new();
        let mut vals = Vec::new();
        let mut map = Vec::new();
        let mut dropped = Vec::new();
        for r in 0..mat.nrows() {
            let mut row = Vec::new();
            let mut val = rhs[r];
            for j in 0..m {
                let v = mat[(r, j)];
                if v == 0.0 {
                    continue;
                }
                if fixed[j].is_nan() {
                    row.push((new_index[j], v));
                } else {
                    val -= v * fixed[j];
                }
            }
            if row.is_empty() {
                dropped.push((r, val));
            } else {
                rows.push(row);
                vals.push(val);
                map.push(r);
            }
        }
        (rows, vals, map, dropped)
    };

    let (a, b, eq_map, eq_dropped) = reduce_rows(&p.a_eq, &p.b_eq);
    for (r, val) in eq_dropped {
        if val.abs() > tol {
            return PresolveOutcome::Infeasible(format!(
                "equality row {r} reduces to 0 = {val:e} after fixing variables"
            ));
        }
    }
    let (g, h, in_map, in_dropped) = reduce_rows(&p.a_in, &p.h_in);
    for (r, val) in in_dropped {
        if val < -tol {
            return PresolveOutcome::Infeasible(format!(
                "inequality row {r} reduces to 0 <= {val:e} after fixing variables"
            ));
        }
    }

    PresolveOutcome::Ready(Box::new(Presolved {
        reduced: Reduced {
            m: mr,
            p: pl,
            q,
            a,
            b,
            g,
            h,
            lower: var_map.iter().map(|&i| p.lower[i]).collect(),
            upper: var_map.iter().map(|&i| p.upper[i]).collect(),
        },
        var_map,
        fixed,
        eq_map,
        in_map,
        eliminated,
    }))
}

fn expand(p: &QpProblem, pre: &Presolved, sol: &ReducedSolution) -> (Vec<f64>, QpDuals) {
    let m = p.dim();
    let mut y = pre.fixed.clone();
    let mut duals = QpDuals::zeros(p);
    for (ri, &i) in pre.var_map.iter().enumerate() {
        y[i] = sol.y[ri];
        duals.lower[i] = sol.mu_lower[ri];
        duals.upper[i] = sol.mu_upper[ri];
    }
    for (k, &r) in pre.eq_map.iter().enumerate() {
        duals.eq[r] = sol.nu[k];
    }
    for (k, &r) in pre.in_map.iter().enumerate() {
        duals.ineq[r] = sol.lam[k];
    }
    let gradient = |i: usize, duals: &QpDuals| {
        let mut g = p.q[i];
        for j in 0..m {
            g += p.p[(i, j)] * y[j];
        }
        for r in 0..p.a_eq.nrows() {
            g += p.a_eq[(r, i)] * duals.eq[r];
        }
        for r in 0..p.a_in.nrows() {
            g += p.a_in[(r, i)] * duals.ineq[r];
        }
        g
    };
    // A variable fixed by a singleton row puts its reduced gradient on that
    // row. An earlier row never holds a later variable, so in reverse order
    // every other dual touching the variable is already set.
    let mut by_row = vec![false; m];
    for &(r, i) in pre.eliminated.iter().rev() {
        duals.eq[r] = -gradient(i, &duals) / p.a_eq[(r, i)];
        by_row[i] = true;
    }
    // Variables fixed by their bounds carry the rest as a bound dual.
    for i in (0..m).filter(|&i| !pre.fixed[i].is_nan() && !by_row[i]) {
        let g = gradient(i, &duals);
        if g >= 0.0 {
            duals.lower[i] = g;
        } else {
            duals.upper[i] = -g;
        }
    }
    (y, duals)
}

/// Solves `p` to the residual tolerance `settings.tol`.
///
/// `status == Optimal` guarantees all three [`kkt_residuals`] of the returned
/// `(y, duals)` are at most `settings.tol`. Infeasible problems come back with
/// a certificate description; an unconverged run returns its best iterate.
pub fn solve_qp(p: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    p.validate()?;
    let pre = match presolve(p, settings.tol) {
        PresolveOutcome::Ready(pre) => pre,
        PresolveOutcome::Infeasible(msg) => {
            return Ok(QpSolution {
                y: p.lower.iter().map(|l| if l.is_finite() { *l } else { 0.0 }).collect(),
                duals: QpDuals::zeros(p),
                status: QpStatus::Infeasible,
                residuals: KktResiduals::default(),
                objective: f64::NAN,
                iterations: 0,
                certificate: Some(msg),
            })
        }
    };

    let out = ipm::solve(&pre.reduced, settings);
    let iterations = out.iterations;
    let (mut best, status_hint, certificate) = match out.status {
        ipm::IpmStatus::Converged => (out.solution, QpStatus::Optimal, None),
        ipm::IpmStatus::MaxIter => (out.solution, QpStatus::IterationLimit, None),
        ipm::IpmStatus::Infeasible(msg) => (out.solution, QpStatus::Infeasible, Some(msg)),
    };

    if status_hint != QpStatus::Infeasible && settings.polish {
        let before = best.residuals(&pre.reduced);
        if let Some(polished) = polish::polish(&pre.reduced, &best, settings.tol) {
            let after = polished.residuals(&pre.reduced);
            if after.max() <= before.max().max(0.01 * settings.tol) {
                best = polished;
            }
        }
    }

    let (y, duals) = expand(p, &pre, &best);
    let residuals = kkt_residuals(p, &y, &duals)?;
    let status = match status_hint {
        QpStatus::Infeasible => QpStatus::Infeasible,
        _ if residuals.within(settings.tol) => QpStatus::Optimal,
        _ => QpStatus::IterationLimit,
    };
    let objective = p.objective(&y);
    Ok(QpSolution {
        y,
        duals,
        status,
        residuals,
        objective,
        iterations,
        certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Sort-and-threshold Euclidean projection onto the probability simplex.
    fn project_simplex(c: &[f64]) -> Vec<f64> {
        let mut u = c.to_vec();
        u.sort_by(|a, b| b.total_cmp(a));
        let mut cum = 0.0;
        let mut tau = 0.0;
        for (k, &uk) in u.iter().enumerate() {
            cum += uk;
            let t = (cum - 1.0) / (k + 1) as f64;
            if uk - t > 0.0 {
                tau = t;
            }
        }
        c.iter().map(|ci| (ci - tau).max(0.0)).collect()
    }

    fn simplex_projection_problem(c: &[f64]) -> QpProblem {
        let m = c.len();
        QpProblem::new(DMatrix::identity(m, m), c.iter().map(|v| -v).collect())
            .with_equalities(DMatrix::from_element(1, m, 1.0), vec![1.0])
            .with_bounds(vec![0.0; m], vec![f64::INFINITY; m])
    }

    #[test]
    fn projection_oracle_matches_hand_value() {
        let y = project_simplex(&[0.8, 0.3, -0.1]);
        assert!((y[0] - 0.75).abs() < 1e-15 && (y[1] - 0.25).abs() < 1e-15 && y[2] == 0.0);
    }

    #[test]
    fn simplex_projection() {
        let c = [0.8, 0.3, -0.1];
        let sol = solve_qp(&simplex_projection_problem(&c), &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        let oracle = project_simplex(&c);
        for (a, b) in sol.y.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "{:?} vs {:?}", sol.y, oracle);
        }
        let res = kkt_residuals(&simplex_projection_problem(&c), &sol.y, &sol.duals).unwrap();
        assert!(res.within(1e-8), "{res:?}");
    }

    #[test]
    fn simplex_projection_residuals_at_oracle_point() {
        // Stationarity y - c + ν - μ_l = 0 at y = (0.75, 0.25, 0) gives
        // ν = 0.05 and μ_l = (0, 0, 0.15).
        let p = simplex_projection_problem(&[0.8, 0.3, -0.1]);
        let duals = QpDuals {
            eq: vec![0.05],
            ineq: vec![],
            lower: vec![0.0, 0.0, 0.15],
            upper: vec![0.0; 3],
        };
        let res = kkt_residuals(&p, &[0.75, 0.25, 0.0], &duals).unwrap();
        assert!(res.within(1e-12), "{res:?}");
    }

    #[test]
    fn budget_violation_shows_in_primal_residual() {
        let p = simplex_projection_problem(&[0.8, 0.3, -0.1]);
        let res = kkt_residuals(&p, &[0.75, 0.25, 0.1], &QpDuals::zeros(&p)).unwrap();
        assert!(res.primal >= 0.1 - 1e-15);
    }

    #[test]
    fn vacuous_problem_has_zero_residuals() {
        let p = QpProblem::new(DMatrix::zeros(2, 2), vec![0.0, 0.0]);
        let res = kkt_residuals(&p, &[0.0, 0.0], &QpDuals::zeros(&p)).unwrap();
        assert_eq!(res, KktResiduals::default());
    }

    #[test]
    fn box_minimum_at_lower_bound() {
        let p = QpProblem::new(DMatrix::from_element(1, 1, 2.0), vec![0.0])
            .with_bounds(vec![1.0], vec![2.0]);
        let sol = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.y[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        let p = QpProblem::new(DMatrix::identity(2, 2), vec![0.0, 0.0]).with_equalities(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]),
            vec![0.0, 1.0],
        );
        let sol = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
        assert!(sol.certificate.is_some());
    }

    #[test]
    fn infeasible_inequalities_are_detected() {
        // y >= 1 and y <= 0 written as rows.
        let p = QpProblem::new(DMatrix::identity(1, 1), vec![0.0]).with_inequalities(
            DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]),
            vec![-1.0, 0.0],
        );
        let sol = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible, "{sol:?}");
    }

    #[test]
    fn fixed_variables_are_substituted() {
        // min (y0 - 1)² + (y1 - 2)² with y1 fixed to 0 and y0 + y1 = 3.
        let p = QpProblem::new(DMatrix::from_diagonal_element(2, 2, 2.0), vec![-2.0, -4.0])
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), vec![3.0])
            .with_bounds(vec![f64::NEG_INFINITY, 0.0], vec![f64::INFINITY, 0.0]);
        let sol = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.y[0] - 3.0).abs() < 1e-10 && sol.y[1] == 0.0);
        assert!(sol.residuals.within(1e-10), "{:?}", sol.residuals);
    }

    #[test]
    fn singleton_rows_chain_and_keep_certified_duals() {
        // y0 = 1 then y0 + y1 = 3 fix everything; the duals must absorb the
        // gradient 2(y - c) = (-2, 2).
        let p = QpProblem::new(DMatrix::from_diagonal_element(2, 2, 2.0), vec![-4.0, -2.0])
            .with_equalities(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]), vec![3.0, 1.0])
            .with_inequalities(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), vec![2.0])
            .with_bounds(vec![0.0, 0.0], vec![5.0, 5.0]);
        let sol = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_eq!(sol.y, vec![1.0, 2.0]);
        assert!(sol.residuals.within(1e-12), "{:?}", sol.residuals);
    }

    #[test]
    fn singleton_row_outside_bounds_is_infeasible() {
        let p = QpProblem::new(DMatrix::identity(1, 1), vec![0.0])
            .with_equalities(DMatrix::from_row_slice(1, 1, &[2.0]), vec![4.0])
            .with_bounds(vec![0.0], vec![1.0]);
        let sol = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn rejects_inverted_bounds() {
        let p = QpProblem::new(DMatrix::identity(1, 1), vec![0.0]).with_bounds(vec![1.0], vec![0.0]);
        assert_eq!(solve_qp(&p, &QpSettings::default()), Err(QpError::BoundOrder(0)));
    }

    #[test]
    fn debug_dump_mentions_every_block() {
        let text = simplex_projection_problem(&[1.0, 0.0]).to_text();
        for key in ["P 2 2", "q ", "A_eq 1 2", "b_eq", "A_in 0 2", "lower", "upper"] {
            assert!(text.contains(key), "{key} missing in\n{text}");
        }
    }
}
