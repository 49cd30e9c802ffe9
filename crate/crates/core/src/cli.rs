//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 parse or validation failure, 3
//! infeasible, 4 iteration, node or time limit reached. Assets are numbered
//! from 1 in everything printed.

use crate::data::{
    assemble_instance, generate_instance, parse_orlib, parse_prices, estimate_moments, target_return,
    DataError, GeneratorConfig, InstanceConfig, MomentEstimate, ReturnTarget,
};
use crate::dca::{run_dca, trace_csv, DcaError, DcaResult, Escalation, Solution, SolverConfig, Termination};
use crate::exact::{
    binomial, enumerate_supports, solve_exact_bb, BnbLimits, ExactError, ExactResult, ExactStatus,
};
use crate::model::{validate_instance, Instance, ModelError, ParseError};
use crate::qp::QpSettings;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_LIMIT: i32 = 4;

/// Largest support count for which the automatic exact baseline enumerates.
pub const AUTO_ENUMERATION_LIMIT: u128 = 100_000;
/// Default branch-and-bound time limit of the exact baseline, in seconds.
pub const DEFAULT_EXACT_SECONDS: u64 = 1200;

/// A failure carrying its exit code and a one-line diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::new(EXIT_DATA, e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::new(EXIT_DATA, e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::new(EXIT_DATA, e.to_string())
    }
}

impl From<DcaError> for CliError {
    fn from(e: DcaError) -> Self {
        let code = match e {
            DcaError::Config(_) => EXIT_USAGE,
            DcaError::Infeasible(_) => EXIT_INFEASIBLE,
            DcaError::QpStalled { .. } => EXIT_LIMIT,
            _ => EXIT_DATA,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ExactError> for CliError {
    fn from(e: ExactError) -> Self {
        match e {
            ExactError::Solve(d) => d.into(),
            ExactError::TooManySupports { .. } | ExactError::Limits(_) => {
                CliError::new(EXIT_USAGE, e.to_string())
            }
            _ => CliError::new(EXIT_DATA, e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(EXIT_DATA, format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "dcafolio", version, about = "Cardinality-constrained portfolio selection by DC programming")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance with DCA, optionally against the exact optimum.
    Solve(SolveArgs),
    /// Sweep the cardinality and tabulate DCA against the exact optimum.
    Bench(BenchArgs),
    /// Write a seeded random instance.
    Gen(GenArgs),
    /// Check an instance and report every violated condition.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Instance text when it starts with `n`, OR-Library when it starts with
    /// a lone integer, prices otherwise.
    Auto,
    Instance,
    Orlib,
    Prices,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Instance, OR-Library or price file.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    pub format: Format,
    /// Required net return R; replaces the file's value or the rule.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "target_fraction")]
    pub target: Option<f64>,
    /// Set R by the interpolation rule at this fraction in [0, 1].
    #[arg(long)]
    pub target_fraction: Option<f64>,
    /// Lower holding bound a for every asset (data files).
    #[arg(long)]
    pub lower: Option<f64>,
    /// Upper holding bound b for every asset (data files).
    #[arg(long)]
    pub upper: Option<f64>,
    /// Buy and sell cost rate for every asset (data files).
    #[arg(long)]
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DcaArgs {
    /// Initial penalty parameter.
    #[arg(long, default_value_t = 2.0)]
    pub theta: f64,
    /// Step-norm stopping tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Keep θ fixed even if z ends fractional.
    #[arg(long)]
    pub no_escalation: bool,
    /// KKT residual tolerance of every QP solve.
    #[arg(long, default_value_t = 1e-8)]
    pub qp_tol: f64,
}

impl DcaArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            theta: self.theta,
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            escalation: Escalation {
                enabled: !self.no_escalation,
                ..Escalation::default()
            },
            qp: QpSettings {
                tol: self.qp_tol,
                ..QpSettings::default()
            },
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExactMode {
    /// Enumerate when C(n, card) <= 100000, branch-and-bound otherwise.
    Auto,
    Enumerate,
    Bb,
    Off,
}

#[derive(Debug, Clone, Args)]
pub struct ExactArgs {
    #[arg(long, value_enum, default_value_t = ExactMode::Auto)]
    pub exact: ExactMode,
    /// Node cap of the branch-and-bound baseline.
    #[arg(long, default_value_t = 1_000_000)]
    pub exact_nodes: usize,
    /// Time limit of the branch-and-bound baseline in seconds.
    #[arg(long, default_value_t = DEFAULT_EXACT_SECONDS)]
    pub exact_seconds: u64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Cardinality; defaults to the file's value, or min(n, 5) for data files.
    #[arg(long)]
    pub card: Option<usize>,
    #[command(flatten)]
    pub dca: DcaArgs,
    /// Exact baseline; off unless requested.
    #[arg(long, value_enum, default_value_t = ExactMode::Off)]
    pub exact: ExactMode,
    #[arg(long, default_value_t = 1_000_000)]
    pub exact_nodes: usize,
    #[arg(long, default_value_t = DEFAULT_EXACT_SECONDS)]
    pub exact_seconds: u64,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Inclusive cardinality range `lo..hi`, or a single value.
    #[arg(long, default_value = "5..15")]
    pub cards: String,
    #[command(flatten)]
    pub dca: DcaArgs,
    #[command(flatten)]
    pub exact: ExactArgs,
    /// Also write the report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of assets.
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cardinality; defaults to min(n, 5).
    #[arg(long)]
    pub card: Option<usize>,
    /// Columns of the factor matrix.
    #[arg(long, default_value_t = 3)]
    pub factors: usize,
    /// Lower end of the mean-return band.
    #[arg(long, allow_negative_numbers = true, default_value_t = -0.002)]
    pub return_lo: f64,
    /// Upper end of the mean-return band.
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.006)]
    pub return_hi: f64,
    #[arg(long, default_value_t = crate::data::DEFAULT_TARGET_FRACTION)]
    pub target_fraction: f64,
    /// Output path; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub card: Option<usize>,
}

/// Parsed input: a full instance, or moments still needing bounds, costs
/// and a cardinality.
#[derive(Debug, Clone)]
pub enum Source {
    Instance(Instance),
    Moments(MomentEstimate),
}

impl Source {
    pub fn n(&self) -> usize {
        match self {
            Source::Instance(inst) => inst.n,
            Source::Moments(m) => m.n(),
        }
    }

    fn default_card(&self) -> usize {
        match self {
            Source::Instance(inst) => inst.card,
            Source::Moments(m) => m.n().min(5),
        }
    }

    /// Instance at `card` with the overrides of `args` applied. Not validated.
    pub fn instance(&self, card: Option<usize>, args: &InputArgs) -> Result<Instance, CliError> {
        let card = card.unwrap_or_else(|| self.default_card());
        match self {
            Source::Instance(inst) => {
                let mut parts = inst.with_card(card).into_parts();
                let n = parts.returns.len();
                if let Some(a) = args.lower {
                    parts.lower = vec![a; n];
                }
                if let Some(b) = args.upper {
                    parts.upper = vec![b; n];
                }
                if let Some(c) = args.cost {
                    parts.buy_cost = vec![c; n];
                    parts.sell_cost = vec![c; n];
                }
                if let Some(r) = args.target {
                    parts.required_return = r;
                } else if let Some(f) = args.target_fraction {
                    parts.required_return = target_return(&parts, f)?;
                }
                Ok(Instance::from_parts(parts)?)
            }
            Source::Moments(m) => {
                let n = m.n();
                let mut cfg = InstanceConfig::new(card);
                cfg.lower = args.lower.map(|a| vec![a; n]);
                cfg.upper = args.upper.map(|b| vec![b; n]);
                cfg.buy_cost = args.cost.map(|c| vec![c; n]);
                cfg.sell_cost = cfg.buy_cost.clone();
                if let Some(r) = args.target {
                    cfg.target = ReturnTarget::Fixed(r);
                } else if let Some(fraction) = args.target_fraction {
                    cfg.target = ReturnTarget::Rule { fraction };
                }
                Ok(assemble_instance(m, &cfg)?)
            }
        }
    }
}

fn detect(path: &Path, text: &str) -> Format {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("csv") || ext.eq_ignore_ascii_case("tsv") {
        return Format::Prices;
    }
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .unwrap_or("");
    let mut tokens = first.split_whitespace();
    match (tokens.next(), tokens.next()) {
        (Some("n"), _) => Format::Instance,
        (Some(t), None) if t.parse::<usize>().is_ok() => Format::Orlib,
        _ => Format::Prices,
    }
}

/// Reads and parses `args.input` in the requested or detected format.
pub fn load_source(args: &InputArgs) -> Result<Source, CliError> {
    let path = &args.input;
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let format = match args.format {
        Format::Auto => detect(path, &text),
        f => f,
    };
    let with_path = |e: CliError| CliError::new(e.code, format!("{}: {}", path.display(), e.message));
    match format {
        Format::Instance => Instance::from_text(&text)
            .map(Source::Instance)
            .map_err(|e| with_path(e.into())),
        Format::Orlib => parse_orlib(&text)
            .map(Source::Moments)
            .map_err(|e| with_path(e.into())),
        Format::Prices | Format::Auto => parse_prices(&text)
            .map(|p| Source::Moments(estimate_moments(&p)))
            .map_err(|e| with_path(e.into())),
    }
}

fn checked_instance(source: &Source, card: Option<usize>, args: &InputArgs) -> Result<Instance, CliError> {
    let inst = source.instance(card, args)?;
    let report = validate_instance(&inst);
    if report.is_valid() {
        Ok(inst)
    } else {
        Err(CliError::new(EXIT_DATA, format!("invalid instance: {report}")))
    }
}

/// Parses `lo..hi` (inclusive) or a single cardinality.
pub fn parse_card_range(s: &str) -> Result<std::ops::RangeInclusive<usize>, CliError> {
    let bad = || CliError::new(EXIT_USAGE, format!("bad card range `{s}`: expected lo..hi"));
    let (lo, hi) = match s.split_once("..") {
        Some((lo, hi)) => (lo, hi.strip_prefix('=').unwrap_or(hi)),
        None => (s, s),
    };
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(CliError::new(EXIT_USAGE, format!("card range `{s}` is empty")));
    }
    Ok(lo..=hi)
}

/// Which exact solver a baseline run uses.
pub fn exact_method(mode: ExactMode, n: usize, card: usize) -> Option<ExactMode> {
    match mode {
        ExactMode::Auto if binomial(n, card) <= AUTO_ENUMERATION_LIMIT => Some(ExactMode::Enumerate),
        ExactMode::Auto => Some(ExactMode::Bb),
        ExactMode::Off => None,
        m => Some(m),
    }
}

fn run_exact(inst: &Instance, mode: ExactMode, limits: &BnbLimits, qp: &QpSettings) -> Option<(Result<ExactResult, ExactError>, f64)> {
    let method = exact_method(mode, inst.n, inst.card)?;
    let start = Instant::now();
    let result = match method {
        ExactMode::Enumerate => enumerate_supports(inst, qp),
        _ => solve_exact_bb(inst, limits, qp),
    };
    Some((result, start.elapsed().as_secs_f64()))
}

#[derive(Debug, Serialize)]
struct SolutionView {
    /// 1-based.
    support: Vec<usize>,
    objective: f64,
    x: Vec<f64>,
    x_b: Vec<f64>,
    x_s: Vec<f64>,
    net_return: f64,
}

impl SolutionView {
    fn new(inst: &Instance, s: &Solution) -> Self {
        SolutionView {
            support: s.support.iter().map(|j| j + 1).collect(),
            objective: s.objective,
            x: s.x.clone(),
            x_b: s.x_b.clone(),
            x_s: s.x_s.clone(),
            net_return: inst.net_return(&s.x, &s.x_b, &s.x_s),
        }
    }
}

#[derive(Debug, Serialize)]
struct ExactView {
    method: &'static str,
    status: Option<ExactStatus>,
    objective: Option<f64>,
    lower_bound: Option<f64>,
    nodes: Option<usize>,
    seconds: f64,
    error: Option<String>,
    /// 1-based.
    support: Option<Vec<usize>>,
}

#[derive(Debug, Serialize)]
struct SolveReport {
    n: usize,
    card: usize,
    required_return: f64,
    termination: Termination,
    iterations: usize,
    restarts: usize,
    theta: f64,
    seconds: f64,
    solution: Option<SolutionView>,
    failure: Option<String>,
    exact: Option<ExactView>,
}

fn solve_cmd(args: &SolveArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let source = load_source(&args.input)?;
    let inst = checked_instance(&source, args.card, &args.input)?;
    let cfg = args.dca.config();
    cfg.validate()?;
    let start = Instant::now();
    let result: DcaResult = run_dca(&inst, &cfg)?;
    let seconds = start.elapsed().as_secs_f64();

    if let Some(path) = &args.trace {
        std::fs::write(path, trace_csv(&result.trace)).map_err(|e| io_failure(path, e))?;
    }

    let limits = BnbLimits {
        max_nodes: args.exact_nodes,
        time_limit: Duration::from_secs(args.exact_seconds),
        ..BnbLimits::default()
    };
    let exact = run_exact(&inst, args.exact, &limits, &cfg.qp).map(|(res, secs)| {
        let method = match exact_method(args.exact, inst.n, inst.card) {
            Some(ExactMode::Enumerate) => "enumerate",
            _ => "branch-and-bound",
        };
        match res {
            Ok(e) => ExactView {
                method,
                status: Some(e.status),
                objective: e.solution.as_ref().map(|s| s.objective),
                lower_bound: Some(e.lower_bound),
                nodes: Some(e.nodes),
                seconds: secs,
                error: None,
                support: e.solution.map(|s| s.support.iter().map(|j| j + 1).collect()),
            },
            Err(err) => ExactView {
                method,
                status: None,
                objective: None,
                lower_bound: None,
                nodes: None,
                seconds: secs,
                error: Some(err.to_string()),
                support: None,
            },
        }
    });

    let code = match (&result.solution, result.termination) {
        (Some(_), _) => EXIT_OK,
        (None, Termination::SubproblemInfeasible) => EXIT_INFEASIBLE,
        (None, _) => EXIT_LIMIT,
    };
    let code = match exact.as_ref().and_then(|e| e.status) {
        Some(ExactStatus::NodeLimit | ExactStatus::TimeLimit | ExactStatus::GapLimit) if code == EXIT_OK => EXIT_LIMIT,
        Some(ExactStatus::Infeasible) if result.solution.is_none() => EXIT_INFEASIBLE,
        _ => code,
    };

    let report = SolveReport {
        n: inst.n,
        card: inst.card,
        required_return: inst.required_return,
        termination: result.termination,
        iterations: result.iterations,
        restarts: result.restarts,
        theta: result.theta,
        seconds,
        solution: result.solution.as_ref().map(|s| SolutionView::new(&inst, s)),
        failure: result.failure.clone(),
        exact,
    };
    let text = if args.json {
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        solve_text(&report)
    };
    out.write_all(text.as_bytes()).map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;
    Ok(code)
}

fn solve_text(r: &SolveReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n {}  card {}  R {:.6e}", r.n, r.card, r.required_return);
    let _ = writeln!(
        s,
        "termination {}  iterations {}  restarts {}  theta {}  seconds {:.3}",
        r.termination, r.iterations, r.restarts, r.theta, r.seconds
    );
    match &r.solution {
        Some(sol) => {
            let support: Vec<String> = sol.support.iter().map(|j| j.to_string()).collect();
            let _ = writeln!(s, "objective {:.9e}", sol.objective);
            let _ = writeln!(s, "net return {:.6e}", sol.net_return);
            let _ = writeln!(s, "support {}", support.join(" "));
            let _ = writeln!(s, "{:>6} {:>12} {:>12} {:>12}", "asset", "x", "buy", "sell");
            for (j, x) in sol.x.iter().enumerate() {
                if *x != 0.0 || sol.x_b[j] != 0.0 || sol.x_s[j] != 0.0 {
                    let _ = writeln!(s, "{:>6} {:>12.8} {:>12.8} {:>12.8}", j + 1, x, sol.x_b[j], sol.x_s[j]);
                }
            }
        }
        None => {
            let _ = writeln!(s, "no solution: {}", r.failure.as_deref().unwrap_or("unknown"));
        }
    }
    if let Some(e) = &r.exact {
        match (&e.error, e.status) {
            (Some(err), _) => {
                let _ = writeln!(s, "exact ({}) failed: {err}", e.method);
            }
            (None, Some(status)) => {
                let obj = e.objective.map_or("-".to_owned(), |v| format!("{v:.9e}"));
                let _ = writeln!(s, "exact ({}) {status}  objective {obj}  seconds {:.3}", e.method, e.seconds);
                if let (Some(d), Some(x)) = (r.solution.as_ref(), e.objective) {
                    let _ = writeln!(s, "gap {:.3e}", d.objective - x);
                }
            }
            (None, None) => {}
        }
    }
    s
}

/// One cardinality of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub card: usize,
    pub dca_objective: Option<f64>,
    pub dca_seconds: f64,
    pub dca_iterations: usize,
    pub exact_objective: Option<f64>,
    pub exact_seconds: Option<f64>,
    /// Exact status, `off`, or `error`.
    pub exact_status: String,
    /// `dca_objective - exact_objective` when both exist.
    pub gap: Option<f64>,
    /// Failure text of the row, empty when clean.
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub n: usize,
    pub rows: Vec<BenchRow>,
}

const BENCH_COLUMNS: [&str; 9] = [
    "card",
    "dca_objective",
    "dca_seconds",
    "dca_iterations",
    "exact_objective",
    "exact_seconds",
    "exact_status",
    "gap",
    "note",
];

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map_or_else(|| "-".to_owned(), f)
}

impl BenchReport {
    /// Aligned text table, seconds to 3 decimals.
    pub fn to_table(&self) -> String {
        let rows: Vec<[String; 9]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.card.to_string(),
                    opt(r.dca_objective, |v| format!("{v:.6e}")),
                    format!("{:.3}", r.dca_seconds),
                    r.dca_iterations.to_string(),
                    opt(r.exact_objective, |v| format!("{v:.6e}")),
                    opt(r.exact_seconds, |v| format!("{v:.3}")),
                    r.exact_status.clone(),
                    opt(r.gap, |v| format!("{v:.3e}")),
                    r.note.clone(),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = BENCH_COLUMNS.iter().map(|c| c.len()).collect();
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut s = String::new();
        let line = |s: &mut String, cells: &mut dyn Iterator<Item = &str>| {
            let cells: Vec<String> = cells
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 8 { c.to_owned() } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(s, "{}", cells.join("  ").trim_end());
        };
        line(&mut s, &mut BENCH_COLUMNS.iter().copied());
        for row in &rows {
            line(&mut s, &mut row.iter().map(String::as_str));
        }
        s
    }

    /// Comma-separated values with full-precision numbers.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(BENCH_COLUMNS).expect("in-memory write");
        let num = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        for r in &self.rows {
            w.write_record([
                r.card.to_string(),
                num(r.dca_objective),
                format!("{:.3}", r.dca_seconds),
                r.dca_iterations.to_string(),
                num(r.exact_objective),
                r.exact_seconds.map_or_else(String::new, |v| format!("{v:.3}")),
                r.exact_status.clone(),
                num(r.gap),
                r.note.clone(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Runs DCA, and the exact baseline unless disabled, for every cardinality
/// in `cards`, in ascending order. Per-row failures land in the row.
pub fn bench(
    source: &Source,
    input: &InputArgs,
    cards: std::ops::RangeInclusive<usize>,
    cfg: &SolverConfig,
    exact: &ExactArgs,
) -> Result<BenchReport, CliError> {
    let n = source.n();
    if *cards.start() < 1 || *cards.end() > n {
        return Err(CliError::new(
            EXIT_DATA,
            format!("card range {}..{} outside 1..{n}", cards.start(), cards.end()),
        ));
    }
    cfg.validate()?;
    let limits = BnbLimits {
        max_nodes: exact.exact_nodes,
        time_limit: Duration::from_secs(exact.exact_seconds),
        ..BnbLimits::default()
    };
    limits.validate()?;
    let mut rows = Vec::new();
    for card in cards {
        let mut row = BenchRow {
            card,
            dca_objective: None,
            dca_seconds: 0.0,
            dca_iterations: 0,
            exact_objective: None,
            exact_seconds: None,
            exact_status: "off".to_owned(),
            gap: None,
            note: String::new(),
        };
        let inst = match checked_instance(source, Some(card), input) {
            Ok(inst) => inst,
            Err(e) => {
                row.note = e.message;
                rows.push(row);
                continue;
            }
        };
        let start = Instant::now();
        let dca = run_dca(&inst, cfg);
        row.dca_seconds = start.elapsed().as_secs_f64();
        match dca {
            Ok(res) => {
                row.dca_iterations = res.iterations;
                row.dca_objective = res.solution.as_ref().map(|s| s.objective);
                if let Some(f) = res.failure {
                    row.note = f;
                }
            }
            Err(e) => row.note = e.to_string(),
        }
        if let Some((res, secs)) = run_exact(&inst, exact.exact, &limits, &cfg.qp) {
            row.exact_seconds = Some(secs);
            match res {
                Ok(e) => {
                    row.exact_status = e.status.to_string();
                    row.exact_objective = e.solution.map(|s| s.objective);
                }
                Err(e) => {
                    row.exact_status = "error".to_owned();
                    if !row.note.is_empty() {
                        row.note.push_str("; ");
                    }
                    row.note.push_str(&e.to_string());
                }
            }
        }
        if let (Some(d), Some(x)) = (row.dca_objective, row.exact_objective) {
            row.gap = Some(d - x);
        }
        rows.push(row);
    }
    Ok(BenchReport { n, rows })
}

fn bench_cmd(args: &BenchArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let cards = parse_card_range(&args.cards)?;
    let source = load_source(&args.input)?;
    let report = bench(&source, &args.input, cards, &args.dca.config(), &args.exact)?;
    if let Some(path) = &args.csv {
        std::fs::write(path, report.to_csv()).map_err(|e| io_failure(path, e))?;
    }
    out.write_all(report.to_table().as_bytes())
        .map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;
    Ok(EXIT_OK)
}

fn gen_cmd(args: &GenArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = GeneratorConfig {
        card: args.card,
        factors: args.factors,
        return_band: (args.return_lo, args.return_hi),
        target_fraction: args.target_fraction,
        ..GeneratorConfig::default()
    };
    if !(args.return_lo < args.return_hi) {
        return Err(CliError::new(EXIT_USAGE, "--return-lo must be below --return-hi"));
    }
    let inst = generate_instance(args.n, args.seed, &cfg)?;
    match &args.output {
        Some(path) => inst.write_to_path(path).map_err(|e| io_failure(path, e))?,
        None => out
            .write_all(inst.to_text().as_bytes())
            .map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?,
    }
    Ok(EXIT_OK)
}

fn validate_cmd(args: &ValidateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let source = load_source(&args.input)?;
    let inst = source.instance(args.card, &args.input)?;
    let report = validate_instance(&inst);
    let text = if report.is_valid() {
        format!("valid: n {}  card {}  R {:.6e}\n", inst.n, inst.card, inst.required_return)
    } else {
        format!("invalid: {report}\n")
    };
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::new(EXIT_DATA, e.to_string()))?;
    Ok(if report.is_valid() { EXIT_OK } else { EXIT_DATA })
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => solve_cmd(a, out),
        Command::Bench(a) => bench_cmd(a, out),
        Command::Gen(a) => gen_cmd(a, out),
        Command::Validate(a) => validate_cmd(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code
        }
    }
}
