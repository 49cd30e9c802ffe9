//! Problem data, objective and feasibility for the cardinality-constrained
//! mean-variance model with linear transaction costs.
//!
//! All portfolio quantities are fractions of wealth. Asset indices are
//! 0-based throughout the library.

mod text;

use nalgebra::{DMatrix, SymmetricEigen};
use std::fmt;
use thiserror::Error;

pub use text::ParseError;

/// Holding lower bound used when none is supplied.
pub const DEFAULT_LOWER: f64 = 0.05;
/// Holding upper bound used when none is supplied.
pub const DEFAULT_UPPER: f64 = 1.0;
/// Buy and sell cost rate used when none is supplied (0.1% of the traded amount).
pub const DEFAULT_COST: f64 = 0.001;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("instance must contain at least one asset")]
    Empty,
}

fn check_len(what: &'static str, v: &[f64], n: usize) -> Result<(), ModelError> {
    if v.len() != n {
        return Err(ModelError::Dimension {
            what,
            expected: n,
            got: v.len(),
        });
    }
    Ok(())
}

/// Immutable problem data.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub n: usize,
    /// Mean return per asset (`r`).
    pub returns: Vec<f64>,
    /// Variance-covariance matrix (`Q`), symmetric.
    pub covariance: DMatrix<f64>,
    /// Required net return (`R`).
    pub required_return: f64,
    /// Exact number of assets to hold.
    pub card: usize,
    /// Per-asset lower holding fraction (`a`).
    pub lower: Vec<f64>,
    /// Per-asset upper holding fraction (`b`).
    pub upper: Vec<f64>,
    /// Linear buy cost rate (`c_b`).
    pub buy_cost: Vec<f64>,
    /// Linear sell cost rate (`c_s`).
    pub sell_cost: Vec<f64>,
    /// Current holdings (`P`).
    pub holdings: Vec<f64>,
    /// Benchmark portfolio (`x̄`).
    pub benchmark: Vec<f64>,
}

/// Every field of an [`Instance`], before dimension checks and symmetrization.
#[derive(Debug, Clone)]
pub struct InstanceParts {
    pub returns: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub required_return: f64,
    pub card: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub buy_cost: Vec<f64>,
    pub sell_cost: Vec<f64>,
    pub holdings: Vec<f64>,
    pub benchmark: Vec<f64>,
}

impl Instance {
    /// Checks dimensions and symmetrizes the covariance as `(Q + Qᵗ)/2`.
    pub fn from_parts(parts: InstanceParts) -> Result<Self, ModelError> {
        let n = parts.returns.len();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        let q = &parts.covariance;
        if q.nrows() != n || q.ncols() != n {
            return Err(ModelError::Dimension {
                what: "covariance",
                expected: n,
                got: if q.nrows() != n { q.nrows() } else { q.ncols() },
            });
        }
        check_len("lower bounds", &parts.lower, n)?;
        check_len("upper bounds", &parts.upper, n)?;
        check_len("buy costs", &parts.buy_cost, n)?;
        check_len("sell costs", &parts.sell_cost, n)?;
        check_len("holdings", &parts.holdings, n)?;
        check_len("benchmark", &parts.benchmark, n)?;
        let covariance = (q + q.transpose()) * 0.5;
        Ok(Instance {
            n,
            returns: parts.returns,
            covariance,
            required_return: parts.required_return,
            card: parts.card,
            lower: parts.lower,
            upper: parts.upper,
            buy_cost: parts.buy_cost,
            sell_cost: parts.sell_cost,
            holdings: parts.holdings,
            benchmark: parts.benchmark,
        })
    }

    /// Builds an instance with the default bounds `[0.05, 1]`, 0.1% costs,
    /// no current holdings and the equally weighted benchmark.
    pub fn with_defaults(
        returns: Vec<f64>,
        covariance: DMatrix<f64>,
        required_return: f64,
        card: usize,
    ) -> Result<Self, ModelError> {
        let n = returns.len();
        let share = if n > 0 { 1.0 / n as f64 } else { 0.0 };
        Self::from_parts(InstanceParts {
            returns,
            covariance,
            required_return,
            card,
            lower: vec![DEFAULT_LOWER; n],
            upper: vec![DEFAULT_UPPER; n],
            buy_cost: vec![DEFAULT_COST; n],
            sell_cost: vec![DEFAULT_COST; n],
            holdings: vec![0.0; n],
            benchmark: vec![share; n],
        })
    }

    pub fn into_parts(self) -> InstanceParts {
        InstanceParts {
            returns: self.returns,
            covariance: self.covariance,
            required_return: self.required_return,
            card: self.card,
            lower: self.lower,
            upper: self.upper,
            buy_cost: self.buy_cost,
            sell_cost: self.sell_cost,
            holdings: self.holdings,
            benchmark: self.benchmark,
        }
    }

    /// Same data with a different cardinality.
    pub fn with_card(&self, card: usize) -> Self {
        Instance {
            card,
            ..self.clone()
        }
    }

    /// `(x - x̄)ᵗ Q (x - x̄)` without dimension checks.
    pub(crate) fn risk(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.benchmark).map(|(a, b)| a - b).collect();
        let mut total = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for j in 0..self.n {
                row += self.covariance[(i, j)] * d[j];
            }
            total += d[i] * row;
        }
        total
    }

    /// Left-hand side of the return constraint:
    /// `(x - x̄)ᵗ r - (c_bᵗ x_b + c_sᵗ x_s)`.
    pub fn net_return(&self, x: &[f64], x_b: &[f64], x_s: &[f64]) -> f64 {
        let mut total = 0.0;
        for j in 0..self.n {
            total += (x[j] - self.benchmark[j]) * self.returns[j]
                - self.buy_cost[j] * x_b[j]
                - self.sell_cost[j] * x_s[j];
        }
        total
    }

    /// Largest value the return constraint's left-hand side can take over the
    /// simplex, ignoring costs: `max_j r_j - x̄ᵗ r`.
    pub fn max_gross_excess_return(&self) -> f64 {
        let bench: f64 = self.benchmark.iter().zip(&self.returns).map(|(b, r)| b * r).sum();
        self.returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - bench
    }
}

/// One candidate `(x, x_b, x_s, z)` of the relaxed feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: Vec<f64>,
    pub x_b: Vec<f64>,
    pub x_s: Vec<f64>,
    pub z: Vec<f64>,
}

impl Point {
    pub fn zeros(n: usize) -> Self {
        Point {
            x: vec![0.0; n],
            x_b: vec![0.0; n],
            x_s: vec![0.0; n],
            z: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Splits a stacked `(x, x_b, x_s, z)` vector of length `4n`.
    pub fn from_stacked(n: usize, y: &[f64]) -> Self {
        assert_eq!(y.len(), 4 * n, "stacked point must have length 4n");
        Point {
            x: y[..n].to_vec(),
            x_b: y[n..2 * n].to_vec(),
            x_s: y[2 * n..3 * n].to_vec(),
            z: y[3 * n..].to_vec(),
        }
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(4 * self.n());
        y.extend_from_slice(&self.x);
        y.extend_from_slice(&self.x_b);
        y.extend_from_slice(&self.x_s);
        y.extend_from_slice(&self.z);
        y
    }

    /// Euclidean distance over the full concatenated vector.
    pub fn distance(&self, other: &Point) -> f64 {
        let parts = [
            (&self.x, &other.x),
            (&self.x_b, &other.x_b),
            (&self.x_s, &other.x_s),
            (&self.z, &other.z),
        ];
        parts
            .iter()
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn check_dims(&self, n: usize) -> Result<(), ModelError> {
        check_len("x", &self.x, n)?;
        check_len("x_b", &self.x_b, n)?;
        check_len("x_s", &self.x_s, n)?;
        check_len("z", &self.z, n)
    }
}

/// A structural problem found by [`validate_instance`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite(&'static str),
    CardOutOfRange { card: usize, n: usize },
    Asymmetric { max_gap: f64 },
    NotPsd { min_eigenvalue: f64 },
    BoundOrder { asset: usize, lower: f64, upper: f64 },
    NegativeEntry { field: &'static str, asset: usize },
    LowerBoundsExceedBudget { sum: f64 },
    UpperBoundsBelowBudget { sum: f64 },
    ReturnUnreachable { required: f64, best: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite(field) => write!(f, "non-finite value in {field}"),
            Violation::CardOutOfRange { card, n } => {
                if *card == 0 {
                    write!(f, "card must be at least 1")
                } else {
                    write!(f, "card > n ({card} > {n})")
                }
            }
            Violation::Asymmetric { max_gap } => {
                write!(f, "covariance is not symmetric (max |Q - Qᵗ| = {max_gap:e})")
            }
            Violation::NotPsd { min_eigenvalue } => write!(
                f,
                "covariance is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})"
            ),
            Violation::BoundOrder {
                asset,
                lower,
                upper,
            } => write!(
                f,
                "bounds out of order for asset {asset}: need 0 <= a <= b <= 1, got a={lower}, b={upper}"
            ),
            Violation::NegativeEntry { field, asset } => {
                write!(f, "negative {field} for asset {asset}")
            }
            Violation::LowerBoundsExceedBudget { sum } => write!(
                f,
                "sum of lower bounds over any support exceeds budget 1 (smallest possible sum {sum})"
            ),
            Violation::UpperBoundsBelowBudget { sum } => write!(
                f,
                "sum of upper bounds over any support is below budget 1 (largest possible sum {sum})"
            ),
            Violation::ReturnUnreachable { required, best } => write!(
                f,
                "return constraint unsatisfiable: R = {required} exceeds the best achievable excess return {best}"
            ),
        }
    }
}

/// Result of [`validate_instance`]; empty means usable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Lists every violated structural invariant of `inst`.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut out = Vec::new();
    let n = inst.n;

    let fields: [(&'static str, &[f64]); 7] = [
        ("r", &inst.returns),
        ("a", &inst.lower),
        ("b", &inst.upper),
        ("c_b", &inst.buy_cost),
        ("c_s", &inst.sell_cost),
        ("P", &inst.holdings),
        ("x_bar", &inst.benchmark),
    ];
    for (name, v) in fields {
        if !all_finite(v) {
            out.push(Violation::NonFinite(name));
        }
    }
    let q_finite = inst.covariance.iter().all(|x| x.is_finite());
    if !q_finite {
        out.push(Violation::NonFinite("Q"));
    }
    if !inst.required_return.is_finite() {
        out.push(Violation::NonFinite("R"));
    }

    if inst.card == 0 || inst.card > n {
        out.push(Violation::CardOutOfRange { card: inst.card, n });
    }

    if q_finite {
        let mut max_gap: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                max_gap = max_gap.max((inst.covariance[(i, j)] - inst.covariance[(j, i)]).abs());
            }
        }
        if max_gap > SYMMETRY_TOL {
            out.push(Violation::Asymmetric { max_gap });
        }
        let sym = (&inst.covariance + inst.covariance.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let min_eigenvalue = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eigenvalue < -PSD_TOL {
            out.push(Violation::NotPsd { min_eigenvalue });
        }
    }

    for j in 0..n {
        let (a, b) = (inst.lower[j], inst.upper[j]);
        if !(0.0 <= a && a <= b && b <= 1.0) {
            out.push(Violation::BoundOrder {
                asset: j,
                lower: a,
                upper: b,
            });
        }
    }
    let nonneg: [(&'static str, &[f64]); 4] = [
        ("c_b", &inst.buy_cost),
        ("c_s", &inst.sell_cost),
        ("P", &inst.holdings),
        ("x_bar", &inst.benchmark),
    ];
    for (field, v) in nonneg {
        if let Some(asset) = v.iter().position(|x| *x < 0.0) {
            out.push(Violation::NegativeEntry { field, asset });
        }
    }

    // Budget certificate: the card smallest a_j and the card largest b_j.
    if inst.card >= 1 && inst.card <= n {
        let mut a = inst.lower.clone();
        a.sort_by(|x, y| x.total_cmp(y));
        let low: f64 = a.iter().take(inst.card).sum();
        if low > 1.0 + 1e-12 {
            out.push(Violation::LowerBoundsExceedBudget { sum: low });
        }
        let mut b = inst.upper.clone();
        b.sort_by(|x, y| y.total_cmp(x));
        let high: f64 = b.iter().take(inst.card).sum();
        if high < 1.0 - 1e-12 {
            out.push(Violation::UpperBoundsBelowBudget { sum: high });
        }
    }

    let best = inst.max_gross_excess_return();
    if best.is_finite() && inst.required_return > best + 1e-12 {
        out.push(Violation::ReturnUnreachable {
            required: inst.required_return,
            best,
        });
    }

    ValidationReport { violations: out }
}

/// Tracking risk `(x - x̄)ᵗ Q (x - x̄)`.
pub fn objective(inst: &Instance, x: &[f64]) -> Result<f64, ModelError> {
    check_len("x", x, inst.n)?;
    Ok(inst.risk(x))
}

/// Absolute violation of each constraint block at a point.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FeasibilityReport {
    /// `max(0, R - net return)`.
    pub return_shortfall: f64,
    /// `max_j |P_j + x_b,j - x_s,j - x_j|`.
    pub balance: f64,
    /// `|Σx - 1|`.
    pub budget: f64,
    /// `|Σz - card|`.
    pub cardinality: f64,
    /// `max_j max(0, a_j z_j - x_j)`.
    pub lower_link: f64,
    /// `max_j max(0, x_j - b_j z_j)`.
    pub upper_link: f64,
    /// Largest negative part of `x`, `x_b`, `x_s`.
    pub nonnegativity: f64,
    /// Largest distance of a `z_j` outside `[0, 1]`.
    pub z_range: f64,
    /// `max_j min(z_j, 1 - z_j)`, only in binary mode.
    pub binariness: Option<f64>,
    pub max_violation: f64,
    pub feasible: bool,
}

/// Evaluates every constraint of the model at `p`. In binary mode the
/// binariness of `z` also counts towards `max_violation`.
pub fn check_feasibility(
    inst: &Instance,
    p: &Point,
    tol: f64,
    binary_mode: bool,
) -> Result<FeasibilityReport, ModelError> {
    let n = inst.n;
    p.check_dims(n)?;
    let return_shortfall = (inst.required_return - inst.net_return(&p.x, &p.x_b, &p.x_s)).max(0.0);
    let mut balance: f64 = 0.0;
    let mut lower_link: f64 = 0.0;
    let mut upper_link: f64 = 0.0;
    let mut nonnegativity: f64 = 0.0;
    let mut z_range: f64 = 0.0;
    let mut binariness: f64 = 0.0;
    for j in 0..n {
        balance = balance.max((inst.holdings[j] + p.x_b[j] - p.x_s[j] - p.x[j]).abs());
        lower_link = lower_link.max(inst.lower[j] * p.z[j] - p.x[j]);
        upper_link = upper_link.max(p.x[j] - inst.upper[j] * p.z[j]);
        nonnegativity = nonnegativity.max(-p.x[j]).max(-p.x_b[j]).max(-p.x_s[j]);
        z_range = z_range.max(-p.z[j]).max(p.z[j] - 1.0);
        binariness = binariness.max(p.z[j].min(1.0 - p.z[j]));
    }
    let budget = (p.x.iter().sum::<f64>() - 1.0).abs();
    let cardinality = (p.z.iter().sum::<f64>() - inst.card as f64).abs();
    let binariness = binary_mode.then_some(binariness.max(0.0));
    let max_violation = [
        return_shortfall,
        balance,
        budget,
        cardinality,
        lower_link,
        upper_link,
        nonnegativity,
        z_range,
        binariness.unwrap_or(0.0),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(FeasibilityReport {
        return_shortfall,
        balance,
        budget,
        cardinality,
        lower_link,
        upper_link,
        nonnegativity,
        z_range,
        binariness,
        max_violation,
        feasible: max_violation <= tol,
    })
}
