#![allow(dead_code)]

use dcafolio::data::{generate_instance, GeneratorConfig};
use dcafolio::model::{Instance, InstanceParts};
use nalgebra::DMatrix;

/// Distinct from the solver's own tolerances so the oracle stays independent.
pub const SOLUTION_TOL: f64 = 1e-9;

/// Two assets, equal returns, `Q = diag(1, 4)`, one asset to hold.
/// With no costs or benchmark the optimum is all-in on the first asset.
pub fn two_asset() -> Instance {
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

/// The seeded family shared by the oracle-equivalence and quality checks:
/// `n = 4 + i mod 5`, `card = 1 + (i / 5) mod (n - 1)`.
pub fn family(i: u64) -> Instance {
    let n = 4 + (i % 5) as usize;
    let card = 1 + ((i / 5) as usize) % (n - 1);
    generate_instance(n, 1000 + i, &GeneratorConfig { card: Some(card), ..Default::default() }).unwrap()
}

pub fn generated(n: usize, card: usize, seed: u64) -> Instance {
    generate_instance(n, seed, &GeneratorConfig { card: Some(card), ..Default::default() }).unwrap()
}

/// Reorders every per-asset field by `perm` (new asset `i` is old `perm[i]`).
pub fn permuted(inst: &Instance, perm: &[usize]) -> Instance {
    let pick = |v: &[f64]| perm.iter().map(|&j| v[j]).collect::<Vec<_>>();
    let n = inst.n;
    Instance::from_parts(InstanceParts {
        returns: pick(&inst.returns),
        covariance: DMatrix::from_fn(n, n, |i, j| inst.covariance[(perm[i], perm[j])]),
        required_return: inst.required_return,
        card: inst.card,
        lower: pick(&inst.lower),
        upper: pick(&inst.upper),
        buy_cost: pick(&inst.buy_cost),
        sell_cost: pick(&inst.sell_cost),
        holdings: pick(&inst.holdings),
        benchmark: pick(&inst.benchmark),
    })
    .unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
