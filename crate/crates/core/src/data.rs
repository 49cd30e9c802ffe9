//! Instance construction from raw market data.
//!
//! Two ingestion paths are supported: a delimited price history, from which
//! simple-return moments are estimated, and the OR-Library statistics layout
//! (means, standard deviations and an upper-triangular correlation list).
//! [`build_instance`] turns either into an [`Instance`], and
//! [`generate_instance`] draws seeded synthetic instances from a factor model.

use crate::model::{
    validate_instance, Instance, InstanceParts, ModelError, ValidationReport, DEFAULT_COST,
    DEFAULT_LOWER, DEFAULT_UPPER,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Midpoint fraction of the default return-target rule.
pub const DEFAULT_TARGET_FRACTION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column}: price must be positive, got {value}")]
    NonPositivePrice {
        line: usize,
        column: usize,
        value: f64,
    },
    #[error("T >= 3 required, found {found} price rows")]
    TooFewRows { found: usize },
    #[error("expected {expected} {what}, found {found}")]
    Count {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: correlation {value} outside [-1, 1]")]
    Correlation { line: usize, value: f64 },
    #[error("line {line}: entry ({i}, {j}) is not in the upper triangle")]
    LowerTriangle { line: usize, i: usize, j: usize },
    #[error("line {line}: duplicate entry ({i}, {j})")]
    Duplicate { line: usize, i: usize, j: usize },
    #[error("line {line}: asset index {index} outside 1..={n}")]
    Index { line: usize, index: usize, n: usize },
    #[error("line {line}: standard deviation must be non-negative, got {value}")]
    NegativeStdDev { line: usize, value: f64 },
    #[error("target fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid instance: {0}")]
    Invalid(ValidationReport),
}

fn io_error(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Price history, one row per period.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub assets: Vec<String>,
    /// `T × n`, all entries positive.
    pub prices: DMatrix<f64>,
    pub period: String,
}

impl PriceSeries {
    pub fn periods(&self) -> usize {
        self.prices.nrows()
    }

    pub fn n(&self) -> usize {
        self.prices.ncols()
    }
}

/// Mean returns and covariance, with the number of return observations when
/// they were estimated from prices.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub returns: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub observations: Option<usize>,
}

impl MomentEstimate {
    pub fn n(&self) -> usize {
        self.returns.len()
    }
}

fn sniff_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    b"\t;,"
        .iter()
        .copied()
        .find(|d| header.contains(*d as char))
        .unwrap_or(b',')
}

/// Reads a delimited price file: a header row of asset identifiers, then one
/// row of prices per period. The delimiter (tab, `;` or `,`) is taken from
/// the header. Line numbers in errors are 1-based and count the header.
pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceSeries, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_prices(&text)
}

/// [`load_prices`] on in-memory text.
pub fn parse_prices(text: &str) -> Result<PriceSeries, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(sniff_delimiter(text))
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line() as usize);
        DataError::Parse {
            line,
            column: 0,
            message: e.to_string(),
        }
    };
    let assets: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let n = assets.len();
    if n == 0 || assets.iter().all(String::is_empty) {
        return Err(DataError::Parse {
            line: 1,
            column: 1,
            message: "missing header row".into(),
        });
    }

    let mut rows: Vec<f64> = Vec::new();
    let mut t = 0;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != n {
            return Err(DataError::ColumnCount {
                line,
                expected: n,
                found: record.len(),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let column = c + 1;
            if field.is_empty() {
                return Err(DataError::Parse {
                    line,
                    column,
                    message: "missing price".into(),
                });
            }
            let value: f64 = field.parse().map_err(|_| DataError::Parse {
                line,
                column,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !(value > 0.0 && value.is_finite()) {
                return Err(DataError::NonPositivePrice {
                    line,
                    column,
                    value,
                });
            }
            rows.push(value);
        }
        t += 1;
    }
    if t < 3 {
        return Err(DataError::TooFewRows { found: t });
    }
    Ok(PriceSeries {
        assets,
        prices: DMatrix::from_row_slice(t, n, &rows),
        period: String::new(),
    })
}

/// Simple-return moments: `r` is the mean of `(p_{t+1} - p_t) / p_t` and `Q`
/// the sample covariance with divisor `T_used - 1`.
pub fn estimate_moments(ps: &PriceSeries) -> MomentEstimate {
    let (t, n) = ps.prices.shape();
    let t_used = t.saturating_sub(1);
    let rets = DMatrix::from_fn(t_used, n, |s, j| {
        (ps.prices[(s + 1, j)] - ps.prices[(s, j)]) / ps.prices[(s, j)]
    });
    let returns: Vec<f64> = (0..n)
        .map(|j| rets.column(j).iter().sum::<f64>() / t_used as f64)
        .collect();
    let centered = DMatrix::from_fn(t_used, n, |s, j| rets[(s, j)] - returns[j]);
    let divisor = t_used.saturating_sub(1).max(1) as f64;
    let mut covariance = centered.transpose() * &centered / divisor;
    // Exact symmetry regardless of summation order.
    for i in 0..n {
        for j in 0..i {
            covariance[(j, i)] = covariance[(i, j)];
        }
    }
    MomentEstimate {
        returns,
        covariance,
        observations: Some(t_used),
    }
}

/// Reads the OR-Library layout: `n`, then `n` lines of `mean stddev`, then
/// exactly `n(n+1)/2` lines `i j corr` with `1 <= i <= j <= n`.
pub fn load_orlib(path: impl AsRef<Path>) -> Result<MomentEstimate, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_orlib(&text)
}

/// [`load_orlib`] on in-memory text.
pub fn parse_orlib(text: &str) -> Result<MomentEstimate, DataError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    fn fields(line: usize, s: &str, want: usize) -> Result<Vec<&str>, DataError> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != want {
            return Err(DataError::ColumnCount {
                line,
                expected: want,
                found: parts.len(),
            });
        }
        Ok(parts)
    }
    fn num<T: std::str::FromStr>(line: usize, column: usize, s: &str) -> Result<T, DataError> {
        s.parse().map_err(|_| DataError::Parse {
            line,
            column,
            message: format!("cannot parse {s:?}"),
        })
    }

    let (line, first) = lines.next().ok_or(DataError::Count {
        what: "asset count line",
        expected: 1,
        found: 0,
    })?;
    let n: usize = num(line, 1, fields(line, first, 1)?[0])?;
    if n == 0 {
        return Err(DataError::Model(ModelError::Empty));
    }

    let mut returns = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for k in 0..n {
        let (line, l) = lines.next().ok_or(DataError::Count {
            what: "mean/stddev lines",
            expected: n,
            found: k,
        })?;
        let f = fields(line, l, 2)?;
        let mean: f64 = num(line, 1, f[0])?;
        let sd: f64 = num(line, 2, f[1])?;
        if !(sd >= 0.0) {
            return Err(DataError::NegativeStdDev { line, value: sd });
        }
        returns.push(mean);
        sigma.push(sd);
    }

    let expected = n * (n + 1) / 2;
    let mut seen = vec![false; n * n];
    let mut covariance = DMatrix::zeros(n, n);
    let mut found = 0;
    for (line, l) in lines {
        let f = fields(line, l, 3)?;
        let i: usize = num(line, 1, f[0])?;
        let j: usize = num(line, 2, f[1])?;
        let corr: f64 = num(line, 3, f[2])?;
        for index in [i, j] {
            if index == 0 || index > n {
                return Err(DataError::Index { line, index, n });
            }
        }
        if i > j {
            return Err(DataError::LowerTriangle { line, i, j });
        }
        if !(-1.0..=1.0).contains(&corr) {
            return Err(DataError::Correlation { line, value: corr });
        }
        let (a, b) = (i - 1, j - 1);
        if std::mem::replace(&mut seen[a * n + b], true) {
            return Err(DataError::Duplicate { line, i, j });
        }
        let v = corr * sigma[a] * sigma[b];
        covariance[(a, b)] = v;
        covariance[(b, a)] = v;
        found += 1;
    }
    if found != expected {
        return Err(DataError::Count {
            what: "correlation entries",
            expected,
            found,
        });
    }
    Ok(MomentEstimate {
        returns,
        covariance,
        observations: None,
    })
}

/// How the required net return is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReturnTarget {
    Fixed(f64),
    /// `R = lo + fraction · (hi - lo)` over the single-asset net returns, see
    /// [`target_return`].
    Rule { fraction: f64 },
}

/// Everything an [`Instance`] needs beyond the moments. `None` fields take
/// the defaults: `a = 0.05`, `b = 1`, costs `0.001`, `P = 0`, `x̄ = 1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceConfig {
    pub card: usize,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub buy_cost: Option<Vec<f64>>,
    pub sell_cost: Option<Vec<f64>>,
    pub holdings: Option<Vec<f64>>,
    pub benchmark: Option<Vec<f64>>,
    pub target: ReturnTarget,
}

impl InstanceConfig {
    pub fn new(card: usize) -> Self {
        InstanceConfig {
            card,
            lower: None,
            upper: None,
            buy_cost: None,
            sell_cost: None,
            holdings: None,
            benchmark: None,
            target: ReturnTarget::Rule {
                fraction: DEFAULT_TARGET_FRACTION,
            },
        }
    }

    pub fn with_target(mut self, target: ReturnTarget) -> Self {
        self.target = target;
        self
    }
}

/// Net return of each single-asset portfolio `e_j` reached from the holdings
/// `P` with the cheapest trades:
/// `r_j - x̄ᵗr - c_b,j (1 - P_j)⁺ - Σ_{i≠j} c_s,i P_i`.
pub fn single_asset_net_returns(parts: &InstanceParts) -> Vec<f64> {
    let n = parts.returns.len();
    let bench: f64 = parts.benchmark.iter().zip(&parts.returns).map(|(b, r)| b * r).sum();
    let sell_all: f64 = parts.sell_cost.iter().zip(&parts.holdings).map(|(c, p)| c * p).sum();
    (0..n)
        .map(|j| {
            let p = parts.holdings[j];
            let buy = parts.buy_cost[j] * (1.0 - p).max(0.0);
            let sell = sell_all - parts.sell_cost[j] * p + parts.sell_cost[j] * (p - 1.0).max(0.0);
            parts.returns[j] - bench - buy - sell
        })
        .collect()
}

/// Deterministic return target: `lo + fraction · (hi - lo)` where `lo`/`hi`
/// are the extreme [`single_asset_net_returns`] over assets with `a_j <= 1`.
pub fn target_return(parts: &InstanceParts, fraction: f64) -> Result<f64, DataError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(DataError::Fraction(fraction));
    }
    let net = single_asset_net_returns(parts);
    let (lo, hi) = net
        .iter()
        .zip(&parts.lower)
        .filter(|(_, a)| **a <= 1.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
            (lo.min(*v), hi.max(*v))
        });
    if !lo.is_finite() {
        return Ok(0.0);
    }
    Ok(lo + fraction * (hi - lo))
}

/// Assembles and validates an instance.
pub fn build_instance(m: &MomentEstimate, cfg: &InstanceConfig) -> Result<Instance, DataError> {
    let inst = assemble_instance(m, cfg)?;
    let report = validate_instance(&inst);
    if !report.is_valid() {
        return Err(DataError::Invalid(report));
    }
    Ok(inst)
}

/// [`build_instance`] without the final [`validate_instance`] pass; shapes
/// and the return rule are still checked.
pub fn assemble_instance(m: &MomentEstimate, cfg: &InstanceConfig) -> Result<Instance, DataError> {
    let n = m.n();
    let or = |v: &Option<Vec<f64>>, d: f64| v.clone().unwrap_or_else(|| vec![d; n]);
    let share = if n > 0 { 1.0 / n as f64 } else { 0.0 };
    let mut parts = InstanceParts {
        returns: m.returns.clone(),
        covariance: m.covariance.clone(),
        required_return: 0.0,
        card: cfg.card,
        lower: or(&cfg.lower, DEFAULT_LOWER),
        upper: or(&cfg.upper, DEFAULT_UPPER),
        buy_cost: or(&cfg.buy_cost, DEFAULT_COST),
        sell_cost: or(&cfg.sell_cost, DEFAULT_COST),
        holdings: or(&cfg.holdings, 0.0),
        benchmark: or(&cfg.benchmark, share),
    };
    // Shape errors surface from `from_parts` before the rule reads the vectors.
    Instance::from_parts(parts.clone())?;
    parts.required_return = match cfg.target {
        ReturnTarget::Fixed(r) => r,
        ReturnTarget::Rule { fraction } => target_return(&parts, fraction)?,
    };
    Ok(Instance::from_parts(parts)?)
}

/// Parameters of the synthetic factor-model generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Defaults to `min(n, 5)`; forced to 1 when `n = 1`.
    pub card: Option<usize>,
    /// Number of factor columns in `F`, the first being a market factor.
    pub factors: usize,
    /// Mean returns are drawn uniformly from `[lo, hi)`.
    pub return_band: (f64, f64),
    /// Idiosyncratic variances are drawn uniformly from `[lo, hi)`.
    pub idiosyncratic: (f64, f64),
    pub target_fraction: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            card: None,
            factors: 3,
            return_band: (-0.002, 0.006),
            idiosyncratic: (1e-4, 4e-4),
            target_fraction: DEFAULT_TARGET_FRACTION,
        }
    }
}

/// Seeded instance with `Q = FFᵗ + D`, default bounds and costs, and the
/// return target from [`target_return`]. The same `(n, seed, cfg)` always
/// yields the same instance.
pub fn generate_instance(n: usize, seed: u64, cfg: &GeneratorConfig) -> Result<Instance, DataError> {
    if n == 0 {
        return Err(DataError::Model(ModelError::Empty));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = cfg.factors.max(1);
    let market = Normal::new(1.0, 0.2).expect("valid normal");
    let other = Normal::new(0.0, 0.3).expect("valid normal");
    let mut f = DMatrix::zeros(n, k);
    for i in 0..n {
        f[(i, 0)] = 0.03 * market.sample(&mut rng);
        for c in 1..k {
            f[(i, c)] = 0.01 * other.sample(&mut rng);
        }
    }
    let mut covariance = &f * f.transpose();
    let (dlo, dhi) = cfg.idiosyncratic;
    for i in 0..n {
        covariance[(i, i)] += rng.random_range(dlo..dhi);
    }
    for i in 0..n {
        for j in 0..i {
            covariance[(j, i)] = covariance[(i, j)];
        }
    }
    let (rlo, rhi) = cfg.return_band;
    let returns: Vec<f64> = (0..n).map(|_| rng.random_range(rlo..rhi)).collect();
    let card = if n == 1 { 1 } else { cfg.card.unwrap_or(n.min(5)) };
    let moments = MomentEstimate {
        returns,
        covariance,
        observations: None,
    };
    build_instance(
        &moments,
        &InstanceConfig::new(card).with_target(ReturnTarget::Rule {
            fraction: cfg.target_fraction,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn price_shape() {
        let ps = parse_prices("A,B\n1,1\n2,1\n1,1\n").unwrap();
        assert_eq!((ps.periods(), ps.n()), (3, 2));
        assert_eq!(ps.assets, vec!["A", "B"]);
    }

    #[test]
    fn tab_and_semicolon_delimiters() {
        let ps = parse_prices("A\tB\n1\t2\n2\t2\n3\t2\n").unwrap();
        assert_eq!(ps.prices[(2, 0)], 3.0);
        let ps = parse_prices("A;B\n1;2\n2;2\n3;2\n").unwrap();
        assert_eq!(ps.prices[(1, 1)], 2.0);
    }

    #[test]
    fn zero_price_names_its_line() {
        match parse_prices("A,B\n1,1\n2,0\n1,1\n") {
            Err(DataError::NonPositivePrice { line, column, .. }) => {
                assert_eq!((line, column), (3, 2));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_price_is_rejected() {
        let err = parse_prices("A,B\n1,1\n2,\n1,1\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn single_row_is_too_short() {
        let err = parse_prices("A\n1\n").unwrap_err();
        assert!(err.to_string().contains("T >= 3 required"));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(matches!(
            parse_prices("A,B\n1,1\n2\n1,1\n"),
            Err(DataError::ColumnCount { line: 3, .. })
        ));
    }

    #[test]
    fn garbage_cell_reports_line_and_column() {
        let err = parse_prices("A,B\n1,1\n2,x\n1,1\n").unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 3, column: 2, .. }), "{err}");
    }

    #[test]
    fn constant_prices_have_zero_moments() {
        let ps = parse_prices("A,B\n1,2\n1,2\n1,2\n").unwrap();
        let m = estimate_moments(&ps);
        assert_eq!(m.returns, vec![0.0, 0.0]);
        assert!(m.covariance.iter().all(|v| *v == 0.0));
        assert_eq!(m.observations, Some(2));
    }

    #[test]
    fn single_asset_moments() {
        let ps = parse_prices("A\n1\n2\n1\n").unwrap();
        let m = estimate_moments(&ps);
        assert!((m.returns[0] - 0.25).abs() < 1e-15);
        assert!((m.covariance[(0, 0)] - 1.125).abs() < 1e-15);
    }

    #[test]
    fn duplicated_column_gives_rank_one() {
        let ps = parse_prices("A,B\n1,1\n2,2\n1.5,1.5\n3,3\n").unwrap();
        let m = estimate_moments(&ps);
        let q = &m.covariance;
        assert_eq!(q[(0, 1)], q[(0, 0)]);
        assert_eq!(q[(1, 1)], q[(0, 0)]);
    }

    #[test]
    fn orlib_single_asset() {
        let m = parse_orlib("1\n0.1 0.2\n1 1 1.0\n").unwrap();
        assert_eq!(m.returns, vec![0.1]);
        assert!((m.covariance[(0, 0)] - 0.04).abs() < 1e-15);
    }

    #[test]
    fn orlib_off_diagonal() {
        let m = parse_orlib("2\n0 0.1\n0 0.2\n1 1 1\n1 2 0.5\n2 2 1\n").unwrap();
        assert!((m.covariance[(0, 1)] - 0.01).abs() < 1e-15);
        assert_eq!(m.covariance[(1, 0)], m.covariance[(0, 1)]);
    }

    #[test]
    fn orlib_missing_correlation() {
        let err = parse_orlib("2\n0 0.1\n0 0.2\n1 1 1\n2 2 1\n").unwrap_err();
        assert!(err.to_string().contains("expected 3 correlation entries"), "{err}");
    }

    #[test]
    fn orlib_rejects_bad_entries() {
        assert!(matches!(
            parse_orlib("2\n0 0.1\n0 0.2\n1 1 1\n2 1 0.5\n2 2 1\n"),
            Err(DataError::LowerTriangle { line: 5, .. })
        ));
        assert!(matches!(
            parse_orlib("2\n0 0.1\n0 0.2\n1 1 1\n1 2 1.5\n2 2 1\n"),
            Err(DataError::Correlation { line: 5, .. })
        ));
        assert!(matches!(
            parse_orlib("2\n0 0.1\n0 0.2\n1 1 1\n1 1 1\n2 2 1\n"),
            Err(DataError::Duplicate { line: 5, .. })
        ));
        assert!(matches!(
            parse_orlib("2\n0 0.1\n0 0.2\n1 1 1\n1 3 0\n2 2 1\n"),
            Err(DataError::Index { index: 3, .. })
        ));
    }

    fn moments(returns: Vec<f64>) -> MomentEstimate {
        let n = returns.len();
        MomentEstimate {
            returns,
            covariance: DMatrix::identity(n, n),
            observations: None,
        }
    }

    #[test]
    fn defaults_fill_unspecified_fields() {
        let m = moments((0..31).map(|j| j as f64 * 1e-4).collect());
        let inst = build_instance(&m, &InstanceConfig::new(5)).unwrap();
        assert_eq!(inst.lower, vec![0.05; 31]);
        assert_eq!(inst.upper, vec![1.0; 31]);
        assert_eq!(inst.buy_cost, vec![0.001; 31]);
        assert_eq!(inst.holdings, vec![0.0; 31]);
        assert!(inst.benchmark.iter().all(|b| *b == 1.0 / 31.0));
    }

    #[test]
    fn unreachable_target_fails_validation() {
        let m = moments(vec![0.01, 0.02, 0.03]);
        let cfg = InstanceConfig::new(1).with_target(ReturnTarget::Fixed(0.06));
        assert!(matches!(build_instance(&m, &cfg), Err(DataError::Invalid(_))));
    }

    #[test]
    fn midpoint_rule_without_costs_or_benchmark() {
        let m = moments(vec![0.0, 0.1]);
        let mut cfg = InstanceConfig::new(1);
        cfg.buy_cost = Some(vec![0.0; 2]);
        cfg.sell_cost = Some(vec![0.0; 2]);
        cfg.benchmark = Some(vec![0.0; 2]);
        let inst = build_instance(&m, &cfg).unwrap();
        assert!((inst.required_return - 0.05).abs() < 1e-15);
    }

    #[test]
    fn rule_accounts_for_costs_and_holdings() {
        let parts = InstanceParts {
            returns: vec![0.1, 0.2],
            covariance: DMatrix::identity(2, 2),
            required_return: 0.0,
            card: 1,
            lower: vec![0.0; 2],
            upper: vec![1.0; 2],
            buy_cost: vec![0.01, 0.02],
            sell_cost: vec![0.03, 0.04],
            holdings: vec![0.5, 0.5],
            benchmark: vec![0.0; 2],
        };
        // e_1: buy 0.5 of asset 1, sell 0.5 of asset 2.
        // e_2: buy 0.5 of asset 2, sell 0.5 of asset 1.
        let net = single_asset_net_returns(&parts);
        assert!((net[0] - (0.1 - 0.005 - 0.02)).abs() < 1e-15);
        assert!((net[1] - (0.2 - 0.01 - 0.015)).abs() < 1e-15);
        assert!(target_return(&parts, 1.5).is_err());
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let cfg = GeneratorConfig::default();
        let a = generate_instance(4, 7, &cfg).unwrap();
        let b = generate_instance(4, 7, &cfg).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_ne!(a.to_text(), generate_instance(4, 8, &cfg).unwrap().to_text());
    }

    #[test]
    fn single_asset_generator_forces_card_one() {
        let cfg = GeneratorConfig {
            card: Some(3),
            ..GeneratorConfig::default()
        };
        let inst = generate_instance(1, 1, &cfg).unwrap();
        assert_eq!(inst.card, 1);
    }

    fn price_matrix() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (3usize..8, 1usize..5).prop_flat_map(|(t, n)| {
            (Just(t), Just(n), prop::collection::vec(0.5f64..2.0, t * n))
        })
    }

    proptest! {
        #[test]
        fn sample_covariance_is_psd((t, n, p) in price_matrix()) {
            let ps = PriceSeries {
                assets: (0..n).map(|j| j.to_string()).collect(),
                prices: DMatrix::from_row_slice(t, n, &p),
                period: String::new(),
            };
            let m = estimate_moments(&ps);
            let eig = nalgebra::SymmetricEigen::new(m.covariance.clone());
            prop_assert!(eig.eigenvalues.iter().all(|e| *e >= -1e-10));
        }

        #[test]
        fn column_permutation_conjugates_moments((t, n, p) in price_matrix(), shift in 0usize..5) {
            let perm: Vec<usize> = (0..n).map(|j| (j + shift) % n).collect();
            let base = DMatrix::from_row_slice(t, n, &p);
            let permuted = DMatrix::from_fn(t, n, |s, j| base[(s, perm[j])]);
            let series = |prices| PriceSeries { assets: vec![String::new(); n], prices, period: String::new() };
            let m = estimate_moments(&series(base.clone()));
            let mp = estimate_moments(&series(permuted));
            for i in 0..n {
                prop_assert!((mp.returns[i] - m.returns[perm[i]]).abs() < 1e-14);
                for j in 0..n {
                    prop_assert!((mp.covariance[(i, j)] - m.covariance[(perm[i], perm[j])]).abs() < 1e-14);
                }
            }
        }

        #[test]
        fn orlib_covariance_survives_text_round_trip(
            n in 1usize..5,
            seed in prop::collection::vec(-1.0f64..1.0, 20),
            sd in prop::collection::vec(0.01f64..0.5, 5),
        ) {
            let mut text = format!("{n}\n");
            for j in 0..n {
                text.push_str(&format!("{} {}\n", seed[j] * 0.01, sd[j]));
            }
            let mut k = 0;
            for i in 1..=n {
                for j in i..=n {
                    let c = if i == j { 1.0 } else { seed[5 + k % 15] * 0.9 };
                    k += 1;
                    text.push_str(&format!("{i} {j} {c}\n"));
                }
            }
            let m = parse_orlib(&text).unwrap();
            let inst = Instance::with_defaults(m.returns.clone(), m.covariance.clone(), 0.0, 1).unwrap();
            let back = Instance::from_text(&inst.to_text()).unwrap();
            prop_assert_eq!(back.covariance, m.covariance);
        }
    }
}
