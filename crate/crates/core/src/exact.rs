//! Exact reference solvers: exhaustive support enumeration and best-first
//! branch-and-bound on `z` with convex QP relaxation bounds.

use crate::dca::{build_node_problem, repair_and_polish, solve_support, vertex_z, DcaError, Fixing, Solution};
use crate::model::{validate_instance, Instance, Point, ValidationReport};
use crate::qp::{solve_qp, QpSettings, QpStatus};
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Largest number of supports [`enumerate_supports`] accepts.
pub const ENUMERATION_GUARD: u128 = 1_000_000;

const INTEGRALITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("C({n}, {card}) = {count} supports exceeds the enumeration limit {ENUMERATION_GUARD}")]
    TooManySupports { n: usize, card: usize, count: u128 },
    #[error("invalid limits: {0}")]
    Limits(String),
    #[error("invalid instance: {0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Solve(#[from] DcaError),
    #[error("node log: {0}")]
    Log(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbLimits {
    pub max_nodes: usize,
    pub time_limit: Duration,
    /// Absolute gap: nodes with `bound >= incumbent - gap` are pruned.
    pub gap: f64,
    /// Optional early stop once `upper - lower` falls to this value.
    pub stop_gap: Option<f64>,
}

impl Default for BnbLimits {
    fn default() -> Self {
        BnbLimits {
            max_nodes: 1_000_000,
            time_limit: Duration::from_secs(1200),
            gap: 1e-9,
            stop_gap: None,
        }
    }
}

impl BnbLimits {
    pub fn validate(&self) -> Result<(), ExactError> {
        if self.max_nodes == 0 {
            return Err(ExactError::Limits("node cap must be positive".into()));
        }
        if self.time_limit.is_zero() {
            return Err(ExactError::Limits("time limit must be positive".into()));
        }
        if !(self.gap >= 0.0) || self.stop_gap.is_some_and(|g| !(g >= 0.0)) {
            return Err(ExactError::Limits("gaps must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExactStatus {
    ProvedOptimal,
    GapLimit,
    NodeLimit,
    TimeLimit,
    Infeasible,
}

impl std::fmt::Display for ExactStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExactStatus::ProvedOptimal => "proved-optimal",
            ExactStatus::GapLimit => "gap-limit",
            ExactStatus::NodeLimit => "node-limit",
            ExactStatus::TimeLimit => "time-limit",
            ExactStatus::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactResult {
    pub solution: Option<Solution>,
    /// `+∞` when infeasible.
    pub lower_bound: f64,
    /// Incumbent objective, `+∞` without one.
    pub upper_bound: f64,
    pub status: ExactStatus,
    /// Supports solved (enumeration) or node relaxations solved (B&B).
    pub nodes: usize,
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn check_instance(inst: &Instance) -> Result<(), ExactError> {
    let report = validate_instance(inst);
    if report.is_valid() {
        Ok(())
    } else {
        Err(ExactError::Invalid(report))
    }
}

/// Solves the restricted QP of every `card`-subset in lexicographic order and
/// keeps the first best one.
pub fn enumerate_supports(inst: &Instance, qp: &QpSettings) -> Result<ExactResult, ExactError> {
    check_instance(inst)?;
    let (n, card) = (inst.n, inst.card);
    let count = binomial(n, card);
    if count > ENUMERATION_GUARD {
        return Err(ExactError::TooManySupports { n, card, count });
    }
    let mut best: Option<Solution> = None;
    let mut nodes = 0;
    let mut comb: Vec<usize> = (0..card).collect();
    loop {
        nodes += 1;
        if let Some(sol) = solve_support(inst, &comb, qp)? {
            if best.as_ref().is_none_or(|b| sol.objective < b.objective) {
                best = Some(sol);
            }
        }
        // Next combination in lexicographic order.
        let Some(i) = (0..card).rev().find(|&i| comb[i] < n - card + i) else {
            break;
        };
        comb[i] += 1;
        for k in i + 1..card {
            comb[k] = comb[k - 1] + 1;
        }
    }
    Ok(match best {
        Some(sol) => ExactResult {
            lower_bound: sol.objective,
            upper_bound: sol.objective,
            solution: Some(sol),
            status: ExactStatus::ProvedOptimal,
            nodes,
        },
        None => ExactResult {
            solution: None,
            lower_bound: f64::INFINITY,
            upper_bound: f64::INFINITY,
            status: ExactStatus::Infeasible,
            nodes,
        },
    })
}

struct Node {
    id: usize,
    depth: usize,
    bound: f64,
    fixings: Vec<Fixing>,
    point: Point,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap order: the smallest bound, then the smallest id, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    inst: &'a Instance,
    qp: &'a QpSettings,
    incumbent: Option<Solution>,
    tried: HashMap<Vec<usize>, Option<f64>>,
}

impl Search<'_> {
    fn upper(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective)
    }

    fn offer(&mut self, sol: Solution) {
        if sol.objective < self.upper() {
            self.incumbent = Some(sol);
        }
    }

    fn try_support(&mut self, support: Vec<usize>) -> Result<(), ExactError> {
        if self.tried.contains_key(&support) {
            return Ok(());
        }
        let sol = solve_support(self.inst, &support, self.qp)?;
        self.tried.insert(support, sol.as_ref().map(|s| s.objective));
        if let Some(sol) = sol {
            self.offer(sol);
        }
        Ok(())
    }

    /// Node relaxation: `None` when infeasible.
    fn relax(&self, fixings: &[Fixing]) -> Result<Option<(f64, Point)>, ExactError> {
        let n = self.inst.n;
        let sol = solve_qp(&build_node_problem(self.inst, &vec![0.0; n], fixings), self.qp)
            .map_err(DcaError::from)?;
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => return Ok(None),
            QpStatus::IterationLimit => {
                return Err(DcaError::QpStalled {
                    residual: sol.residuals.max(),
                }
                .into())
            }
        }
        let mut p = Point::from_stacked(n, &sol.y);
        p.z = vertex_z(self.inst, &p.x, &vec![0.0; n], fixings);
        Ok(Some((self.inst.risk(&p.x), p)))
    }
}

fn counts_allow(fixings: &[Fixing], card: usize) -> bool {
    let ones = fixings.iter().filter(|f| **f == Fixing::One).count();
    let free = fixings.iter().filter(|f| **f == Fixing::Free).count();
    ones <= card && ones + free >= card
}

/// Best-first branch-and-bound. See [`solve_exact_bb_logged`].
pub fn solve_exact_bb(inst: &Instance, limits: &BnbLimits, qp: &QpSettings) -> Result<ExactResult, ExactError> {
    solve_exact_bb_logged(inst, limits, qp, None)
}

/// Best-first branch-and-bound on `z`. Node bounds come from the convex
/// relaxation with some `z_j` fixed; the branching variable is the most
/// fractional free `z_j` (lowest index on ties); incumbents come from
/// [`repair_and_polish`] at every node and from integral node points.
///
/// When `log` is given, one line `node depth bound incumbent` is written per
/// solved node; an infeasible relaxation has bound `inf`.
pub fn solve_exact_bb_logged(
    inst: &Instance,
    limits: &BnbLimits,
    qp: &QpSettings,
    mut log: Option<&mut dyn Write>,
) -> Result<ExactResult, ExactError> {
    check_instance(inst)?;
    limits.validate()?;
    let start = Instant::now();
    let (n, card) = (inst.n, inst.card);
    let mut search = Search {
        inst,
        qp,
        incumbent: None,
        tried: HashMap::new(),
    };
    if let Some(w) = log.as_deref_mut() {
        writeln!(w, "node depth bound incumbent")?;
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    let mut solved = 0;
    let mut lower = f64::NEG_INFINITY;
    let mut pending = vec![(vec![Fixing::Free; n], 0usize, f64::NEG_INFINITY)];
    let mut stop: Option<ExactStatus> = None;

    loop {
        // Solve queued children, then pick the best open node.
        while let Some((fixings, depth, parent_bound)) = pending.pop() {
            if stop.is_some() {
                heap.push(Node {
                    id: next_id,
                    depth,
                    bound: parent_bound,
                    fixings,
                    point: Point::zeros(n),
                });
                next_id += 1;
                continue;
            }
            if solved >= limits.max_nodes {
                stop = Some(ExactStatus::NodeLimit);
            } else if start.elapsed() >= limits.time_limit {
                stop = Some(ExactStatus::TimeLimit);
            }
            if stop.is_some() {
                pending.push((fixings, depth, parent_bound));
                continue;
            }
            let id = next_id;
            next_id += 1;
            solved += 1;
            let Some((bound, point)) = search.relax(&fixings)? else {
                if let Some(w) = log.as_deref_mut() {
                    writeln!(w, "{id} {depth} inf {:.12e}", search.upper())?;
                }
                continue;
            };
            // Monotone bounds: a child never improves on its parent.
            let bound = bound.max(parent_bound);
            if let Ok(sol) = repair_and_polish(inst, &point, qp) {
                let mut support = sol.support.clone();
                support.sort_unstable();
                search.tried.entry(support).or_insert(Some(sol.objective));
                search.offer(sol);
            }
            if point.z.iter().all(|z| z.min(1.0 - z) <= INTEGRALITY_TOL) {
                let support: Vec<usize> = (0..n).filter(|&j| point.z[j] > 0.5).collect();
                if support.len() == card {
                    search.try_support(support)?;
                }
            }
            if let Some(w) = log.as_deref_mut() {
                writeln!(w, "{id} {depth} {bound:.12e} {:.12e}", search.upper())?;
            }
            heap.push(Node {
                id,
                depth,
                bound,
                fixings,
                point,
            });
        }

        let upper = search.upper();
        let open_min = heap.peek().map_or(f64::INFINITY, |node| node.bound);
        lower = lower.max(open_min.min(upper));
        if let Some(status) = stop {
            return Ok(finish(search.incumbent, lower, status, solved));
        }
        let Some(node) = heap.pop() else {
            break;
        };
        if node.bound >= upper - limits.gap {
            // Everything left is at least as bad.
            heap.clear();
            break;
        }
        if let Some(g) = limits.stop_gap {
            if upper - lower <= g {
                heap.push(node);
                return Ok(finish(search.incumbent, lower, ExactStatus::GapLimit, solved));
            }
        }

        let frac = (0..n)
            .filter(|&j| node.fixings[j] == Fixing::Free)
            .map(|j| (j, node.point.z[j].min(1.0 - node.point.z[j])))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        let integral = frac.is_none_or(|(_, d)| d <= INTEGRALITY_TOL);
        // An integral node is closed once its support attains the bound.
        if integral && search.upper() <= node.bound + INTEGRALITY_TOL * (1.0 + node.bound.abs()) {
            continue;
        }
        let Some((j, _)) = frac else {
            continue;
        };
        for value in [Fixing::One, Fixing::Zero] {
            let mut child = node.fixings.clone();
            child[j] = value;
            if counts_allow(&child, card) {
                pending.push((child, node.depth + 1, node.bound));
            }
        }
    }

    let status = if search.incumbent.is_some() {
        ExactStatus::ProvedOptimal
    } else {
        ExactStatus::Infeasible
    };
    let lower = match &search.incumbent {
        Some(s) => lower.max(s.objective - limits.gap).min(s.objective),
        None => f64::INFINITY,
    };
    Ok(finish(search.incumbent, lower, status, solved))
}

fn finish(incumbent: Option<Solution>, lower: f64, status: ExactStatus, nodes: usize) -> ExactResult {
    let upper = incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective);
    let status = match (status, &incumbent) {
        (ExactStatus::ProvedOptimal, None) => ExactStatus::Infeasible,
        (s, _) => s,
    };
    ExactResult {
        solution: incumbent,
        lower_bound: if status == ExactStatus::Infeasible { f64::INFINITY } else { lower.min(upper) },
        upper_bound: upper,
        status,
        nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InstanceParts;
    use nalgebra::{DMatrix, DVector};

    fn two_asset(required_return: f64) -> Instance {
        Instance::from_parts(InstanceParts {
            returns: vec![0.1, 0.1],
            covariance: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])),
            required_return,
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
    fn binomials() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(31, 15), 300_540_195);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(200, 100), u128::MAX);
    }

    #[test]
    fn enumeration_two_asset() {
        let res = enumerate_supports(&two_asset(0.0), &QpSettings::default()).unwrap();
        assert_eq!(res.status, ExactStatus::ProvedOptimal);
        let sol = res.solution.unwrap();
        assert_eq!(sol.support, vec![0]);
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert_eq!(res.nodes, 2);
    }

    #[test]
    fn enumeration_guard() {
        let n = 40;
        let inst = Instance::with_defaults(vec![0.0; n], DMatrix::identity(n, n), -1.0, 10).unwrap();
        assert!(matches!(
            enumerate_supports(&inst, &QpSettings::default()),
            Err(ExactError::TooManySupports { .. })
        ));
    }

    #[test]
    fn unreachable_return_on_every_support() {
        // Asset 1 misses the return floor; asset 2 cannot hold the budget.
        let mut inst = two_asset(0.0);
        inst.returns = vec![0.1, 0.2];
        inst.required_return = 0.2;
        inst.upper = vec![1.0, 0.5];
        let res = enumerate_supports(&inst, &QpSettings::default()).unwrap();
        assert_eq!(res.status, ExactStatus::Infeasible);
        assert!(res.solution.is_none());
        let bb = solve_exact_bb(&inst, &BnbLimits::default(), &QpSettings::default()).unwrap();
        assert_eq!(bb.status, ExactStatus::Infeasible);
    }

    #[test]
    fn bb_two_asset() {
        let res = solve_exact_bb(&two_asset(0.0), &BnbLimits::default(), &QpSettings::default()).unwrap();
        assert_eq!(res.status, ExactStatus::ProvedOptimal);
        assert!((res.upper_bound - 1.0).abs() < 1e-9);
        assert!(res.lower_bound <= res.upper_bound);
    }

    #[test]
    fn full_cardinality_is_one_node() {
        let mut inst = two_asset(0.0);
        inst.card = 2;
        let res = solve_exact_bb(&inst, &BnbLimits::default(), &QpSettings::default()).unwrap();
        assert_eq!(res.status, ExactStatus::ProvedOptimal);
        assert_eq!(res.nodes, 1);
        // min x1² + 4 x2² on x1 + x2 = 1: x = (0.8, 0.2), value 0.8.
        assert!((res.upper_bound - 0.8).abs() < 1e-9);
    }

    #[test]
    fn node_log_lists_each_node() {
        let mut buf = Vec::new();
        let res = solve_exact_bb_logged(&two_asset(0.0), &BnbLimits::default(), &QpSettings::default(), Some(&mut buf))
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), res.nodes + 1);
        assert!(text.starts_with("node depth bound incumbent"));
    }

    #[test]
    fn limits_are_validated() {
        let limits = BnbLimits {
            max_nodes: 0,
            ..BnbLimits::default()
        };
        assert!(solve_exact_bb(&two_asset(0.0), &limits, &QpSettings::default()).is_err());
    }
}
