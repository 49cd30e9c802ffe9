//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach stdout.

mod common;

use common::family;
use dcafolio::cli::{bench, ExactArgs, ExactMode, Format, InputArgs, Source};
use dcafolio::data::{generate_instance, GeneratorConfig};
use dcafolio::dca::{build_subproblem, run_dca, subgradient_h, DcaResult, SolverConfig};
use dcafolio::exact::{enumerate_supports, solve_exact_bb, BnbLimits, ExactStatus};
use dcafolio::model::Instance;
use dcafolio::qp::{kkt_residuals, solve_qp, QpProblem, QpSettings, QpStatus};
use nalgebra::DMatrix;
use std::time::Instant;

const FAMILY: u64 = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, o: &Outcome) -> bool {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {id} {name}: {verdict} ({})", o.detail);
    o.pass
}

fn instance(n: usize, card: usize, seed: u64) -> Instance {
    generate_instance(n, seed, &GeneratorConfig { card: Some(card), ..Default::default() }).unwrap()
}

/// Worst increase of `F` between consecutive iterates of one phase.
fn worst_ascent(r: &DcaResult) -> f64 {
    r.trace
        .windows(2)
        .filter(|w| w[0].phase == w[1].phase)
        .map(|w| w[1].f - w[0].f)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn binariness(r: &DcaResult) -> f64 {
    r.final_point.z.iter().map(|z| z.min(1.0 - z)).fold(0.0, f64::max)
}

/// Re-solves every subproblem behind a trace and re-checks the optimal ones.
fn recertify(inst: &Instance, r: &DcaResult, qp: &QpSettings) -> (usize, f64) {
    let mut count = 0;
    let mut worst: f64 = 0.0;
    let mut prev_z = r.initial.z.clone();
    let mut prev_phase = 0;
    for rec in &r.trace {
        // A new phase starts from a rounded point that is not traced.
        if rec.phase != prev_phase {
            prev_phase = rec.phase;
            prev_z = rec.point.z.clone();
            continue;
        }
        let p = build_subproblem(inst, &subgradient_h(rec.theta, &prev_z));
        let sol = solve_qp(&p, qp).unwrap();
        if sol.status == QpStatus::Optimal {
            count += 1;
            worst = worst.max(kkt_residuals(&p, &sol.y, &sol.duals).unwrap().max());
        }
        prev_z = rec.point.z.clone();
    }
    (count, worst)
}

#[derive(Default)]
struct Audit {
    runs: usize,
    ascent: f64,
    binary_runs: usize,
    worst_binary: f64,
    qp_solves: usize,
    worst_kkt: f64,
}

impl Audit {
    fn record(&mut self, inst: &Instance, r: &DcaResult, qp: &QpSettings) {
        self.runs += 1;
        self.ascent = self.ascent.max(worst_ascent(r));
        if r.solution.is_some() {
            self.binary_runs += 1;
            self.worst_binary = self.worst_binary.max(binariness(r));
        }
        let (count, worst) = recertify(inst, r, qp);
        self.qp_solves += count;
        self.worst_kkt = self.worst_kkt.max(worst);
    }
}

fn main() {
    let cfg = SolverConfig::default();
    let qp = QpSettings::default();
    let mut audit = Audit { ascent: f64::NEG_INFINITY, ..Audit::default() };
    let mut all = true;

    // Oracle equivalence and DCA quality on the seeded family.
    let start = Instant::now();
    let (mut matched, mut proved, mut worst_oracle) = (0, 0, 0.0f64);
    let (mut above, mut close, mut worst_below) = (0, 0, 0.0f64);
    for i in 0..FAMILY {
        let inst = family(i);
        let bb = solve_exact_bb(&inst, &BnbLimits::default(), &qp).unwrap();
        let en = enumerate_supports(&inst, &qp).unwrap();
        if bb.status == ExactStatus::ProvedOptimal {
            proved += 1;
            let d = (bb.upper_bound - en.upper_bound).abs();
            worst_oracle = worst_oracle.max(d);
            if d <= 1e-8 {
                matched += 1;
            }
        }
        let r = run_dca(&inst, &cfg).unwrap();
        audit.record(&inst, &r, &qp);
        if let Some(sol) = &r.solution {
            let gap = sol.objective - en.upper_bound;
            worst_below = worst_below.max(-gap);
            if gap >= -1e-9 {
                above += 1;
            }
            if gap.abs() <= 1e-4 {
                close += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    all &= report(
        1,
        "oracle equivalence",
        &Outcome {
            pass: proved == FAMILY && matched == FAMILY && secs < 60.0,
            detail: format!("{matched}/{proved} proved optima match, max diff {worst_oracle:.2e}, {secs:.1} s"),
        },
    );
    all &= report(
        2,
        "dca quality",
        &Outcome {
            pass: above == FAMILY && close as f64 >= 0.7 * FAMILY as f64,
            detail: format!(
                "{above}/{FAMILY} above exact - 1e-9 (max shortfall {:.2e}), {close}/{FAMILY} within 1e-4",
                worst_below + 0.0
            ),
        },
    );

    // Iteration economy on a 31-asset sweep.
    let mut within = 0;
    let mut iters = Vec::new();
    for card in 5..=15 {
        let inst = instance(31, card, 31);
        let r = run_dca(&inst, &cfg).unwrap();
        audit.record(&inst, &r, &qp);
        iters.push(r.iterations);
        if r.iterations <= 10 {
            within += 1;
        }
    }
    all &= report(
        3,
        "iteration economy",
        &Outcome {
            pass: within as f64 >= 0.9 * 11.0,
            detail: format!("{within}/11 rows with <= 10 iterations, iterations {iters:?}"),
        },
    );

    // Speed envelope at 85 assets.
    let inst = instance(85, 10, 85);
    let start = Instant::now();
    let r = run_dca(&inst, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    audit.record(&inst, &r, &qp);
    all &= report(
        4,
        "speed envelope",
        &Outcome {
            pass: secs < 1.0 && r.solution.is_some(),
            detail: format!("n=85 card=10 in {secs:.3} s, {} iterations", r.iterations),
        },
    );

    all &= report(
        5,
        "descent",
        &Outcome {
            pass: audit.ascent <= 1e-9,
            detail: format!("{} runs, largest in-phase increase of F {:.2e}", audit.runs, audit.ascent),
        },
    );
    all &= report(
        6,
        "binariness",
        &Outcome {
            pass: audit.worst_binary <= 1e-6,
            detail: format!(
                "{} runs with a solution, max min(z, 1 - z) {:.2e}",
                audit.binary_runs, audit.worst_binary
            ),
        },
    );

    let c = [0.8, 0.3, -0.1];
    let proj = QpProblem::new(DMatrix::identity(3, 3), c.iter().map(|v| -v).collect())
        .with_equalities(DMatrix::from_element(1, 3, 1.0), vec![1.0])
        .with_bounds(vec![0.0; 3], vec![f64::INFINITY; 3]);
    let sol = solve_qp(&proj, &qp).unwrap();
    let proj_err = sol.y.iter().zip([0.75, 0.25, 0.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    all &= report(
        7,
        "qp certification",
        &Outcome {
            pass: audit.worst_kkt <= 1e-8 && sol.status == QpStatus::Optimal && proj_err <= 1e-8,
            detail: format!(
                "{} optimal solves re-checked, max residual {:.2e}; projection error {proj_err:.2e}",
                audit.qp_solves, audit.worst_kkt
            ),
        },
    );

    // Report regeneration: a node cap keeps the exact column deterministic.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("31.inst");
    instance(31, 5, 31).write_to_path(&path).unwrap();
    let input = InputArgs {
        input: path.clone(),
        format: Format::Auto,
        target: None,
        target_fraction: None,
        lower: None,
        upper: None,
        cost: None,
    };
    let source = Source::Instance(Instance::read_from_path(&path).unwrap());
    let exact = ExactArgs { exact: ExactMode::Bb, exact_nodes: 25, exact_seconds: 600 };
    let strip = |csv: &str| -> Vec<String> {
        csv.lines()
            .map(|l| {
                l.split(',')
                    .enumerate()
                    .filter(|(i, _)| *i != 2 && *i != 5)
                    .map(|(_, f)| f)
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect()
    };
    let a = bench(&source, &input, 5..=15, &cfg, &exact).unwrap();
    let b = bench(&source, &input, 5..=15, &cfg, &exact).unwrap();
    let header = a.to_table().lines().next().unwrap_or("").to_owned();
    let roles = ["dca_objective", "dca_seconds", "dca_iterations", "exact_objective", "gap"]
        .iter()
        .all(|c| header.split_whitespace().any(|h| h == *c));
    let same = strip(&a.to_csv()) == strip(&b.to_csv());
    all &= report(
        8,
        "report regeneration",
        &Outcome {
            pass: a.rows.len() == 11 && roles && same,
            detail: format!("{} rows, columns [{header}], repeat identical apart from timing: {same}", a.rows.len()),
        },
    );
    println!("{}", a.to_table());

    if !all {
        std::process::exit(1);
    }
}
