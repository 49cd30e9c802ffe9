//! Mehrotra predictor-corrector interior-point method on a [`Reduced`] problem.
//!
//! Inequalities are stacked as `[general rows | finite upper bounds | finite
//! lower bounds]`, each with a slack `s ≥ 0` and multiplier `λ ≥ 0`. Bound
//! rows are eliminated into the diagonal of the Hessian block, so the linear
//! system factored each iteration is
//!
//! ```text
//! [ P + D_bounds   Aᵗ    Gᵗ      ]
//! [ A              0     0       ]
//! [ G              0    -S Λ⁻¹   ]
//! ```
//!
//! which is quasi-definite after a small static regularization. Iterative
//! refinement against the unregularized matrix recovers full accuracy.
//!
//! Infeasibility is recognized either by a Farkas certificate built from
//! diverging dual iterates or, when the iteration stalls, by a phase-one
//! problem minimizing the total constraint violation.

use super::ldl::{sym_matvec, Ldl};
use super::{row_dot, Reduced, ReducedSolution};
use crate::qp::QpSettings;

const STATIC_REG: f64 = 1e-9;
const REFINE_STEPS: usize = 6;
const STEP_FRACTION: f64 = 0.99;
const STALL_ITERATIONS: usize = 40;
/// Consecutive blocked steps after which the best iterate is handed to polish.
const STALL_STEPS: usize = 8;
const FARKAS_DUAL_NORM: f64 = 1e6;
const PHASE_ONE_REG: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum IpmStatus {
    Converged,
    MaxIter,
    Infeasible(String),
}

#[derive(Debug, Clone)]
pub(crate) struct IpmOutput {
    pub solution: ReducedSolution,
    pub status: IpmStatus,
    pub iterations: usize,
}

/// The stacked inequality system `G_all y + s = h_all`.
struct Ineq<'a> {
    r: &'a Reduced,
    upper: Vec<usize>,
    lower: Vec<usize>,
}

impl<'a> Ineq<'a> {
    fn new(r: &'a Reduced) -> Self {
        let upper = (0..r.m).filter(|&i| r.upper[i].is_finite()).collect();
        let lower = (0..r.m).filter(|&i| r.lower[i].is_finite()).collect();
        Ineq { r, upper, lower }
    }

    fn mg(&self) -> usize {
        self.r.g.len()
    }

    fn len(&self) -> usize {
        self.r.g.len() + self.upper.len() + self.lower.len()
    }

    fn rhs(&self) -> Vec<f64> {
        let mut h = self.r.h.clone();
        h.extend(self.upper.iter().map(|&i| self.r.upper[i]));
        h.extend(self.lower.iter().map(|&i| -self.r.lower[i]));
        h
    }

    fn times(&self, y: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.r.g.iter().map(|row| row_dot(row, y)).collect();
        out.extend(self.upper.iter().map(|&i| y[i]));
        out.extend(self.lower.iter().map(|&i| -y[i]));
        out
    }

    /// `out += G_allᵗ lam`.
    fn add_transpose(&self, lam: &[f64], out: &mut [f64]) {
        for (k, row) in self.r.g.iter().enumerate() {
            for &(j, v) in row {
                out[j] += v * lam[k];
            }
        }
        let mg = self.mg();
        for (k, &i) in self.upper.iter().enumerate() {
            out[i] += lam[mg + k];
        }
        let off = mg + self.upper.len();
        for (k, &i) in self.lower.iter().enumerate() {
            out[i] -= lam[off + k];
        }
    }

    fn split(&self, lam: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mg = self.mg();
        let mut mu_upper = vec![0.0; self.r.m];
        let mut mu_lower = vec![0.0; self.r.m];
        for (k, &i) in self.upper.iter().enumerate() {
            mu_upper[i] = lam[mg + k];
        }
        let off = mg + self.upper.len();
        for (k, &i) in self.lower.iter().enumerate() {
            mu_lower[i] = lam[off + k];
        }
        (lam[..mg].to_vec(), mu_lower, mu_upper)
    }
}

/// Factored Newton system with the bound rows folded into the diagonal.
struct Newton {
    m: usize,
    me: usize,
    mg: usize,
    entries: Vec<(usize, usize)>,
    base: Vec<f64>,
    /// Position in `entries` of the first diagonal entry (variables, then
    /// equality rows, then general rows).
    diag_start: usize,
    vals_true: Vec<f64>,
    vals_reg: Vec<f64>,
    ldl: Ldl,
}

impl Newton {
    fn new(r: &Reduced) -> Self {
        let (m, me, mg) = (r.m, r.a.len(), r.g.len());
        let dim = m + me + mg;
        let mut entries = Vec::new();
        let mut base = Vec::new();
        for &(i, j, v) in &r.p {
            entries.push((i, j));
            base.push(v);
        }
        for (k, row) in r.a.iter().enumerate() {
            for &(j, v) in row {
                entries.push((m + k, j));
                base.push(v);
            }
        }
        for (k, row) in r.g.iter().enumerate() {
            for &(j, v) in row {
                entries.push((m + me + k, j));
                base.push(v);
            }
        }
        let diag_start = entries.len();
        for i in 0..dim {
            entries.push((i, i));
            base.push(0.0);
        }
        let mut signs = vec![1.0; m];
        signs.extend(std::iter::repeat_n(-1.0, me + mg));
        let ldl = Ldl::analyze(dim, &entries, &signs);
        let n_entries = entries.len();
        Newton {
            m,
            me,
            mg,
            entries,
            base,
            diag_start,
            vals_true: vec![0.0; n_entries],
            vals_reg: vec![0.0; n_entries],
            ldl,
        }
    }

    fn dim(&self) -> usize {
        self.m + self.me + self.mg
    }

    /// `var_diag` is added to the Hessian diagonal, `gen_w` is `s/λ` for the
    /// general rows.
    fn factor(&mut self, var_diag: &[f64], gen_w: &[f64]) {
        self.vals_true.copy_from_slice(&self.base);
        let d0 = self.diag_start;
        self.vals_true[d0..d0 + self.m].copy_from_slice(&var_diag[..self.m]);
        for k in 0..self.mg {
            self.vals_true[d0 + self.m + self.me + k] = -gen_w[k];
        }
        self.vals_reg.copy_from_slice(&self.vals_true);
        for i in 0..self.m {
            self.vals_reg[d0 + i] += STATIC_REG;
        }
        for k in 0..self.me + self.mg {
            self.vals_reg[d0 + self.m + k] -= STATIC_REG;
        }
        self.ldl.factor(&self.vals_reg);
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.ldl.solve(&mut x);
        let scale = 1.0 + rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut kx = vec![0.0; self.dim()];
        for _ in 0..REFINE_STEPS {
            sym_matvec(&self.entries, &self.vals_true, &x, &mut kx);
            let mut res: Vec<f64> = rhs.iter().zip(&kx).map(|(b, v)| b - v).collect();
            let err = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if err <= 1e-15 * scale {
                break;
            }
            self.ldl.solve(&mut res);
            for (xi, d) in x.iter_mut().zip(&res) {
                *xi += d;
            }
        }
        x
    }
}

struct Iterate {
    y: Vec<f64>,
    nu: Vec<f64>,
    lam: Vec<f64>,
    s: Vec<f64>,
}

/// Solves the folded Newton system for right-hand sides `r1` (stationarity),
/// `r2` (equalities) and `r3` (inequalities, one per stacked row):
///
/// ```text
/// P dy + Aᵗ dν + G_allᵗ dλ = r1
/// A dy                     = r2
/// G_all dy − W dλ          = r3
/// ```
fn newton_solve(
    kkt: &Newton,
    ineq: &Ineq,
    w: &[f64],
    r1: &[f64],
    r2: &[f64],
    r3: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (m, me, mg) = (kkt.m, kkt.me, kkt.mg);
    let mut rhs = vec![0.0; kkt.dim()];
    rhs[..m].copy_from_slice(r1);
    for (k, &i) in ineq.upper.iter().enumerate() {
        rhs[i] += r3[mg + k] / w[mg + k];
    }
    let off = mg + ineq.upper.len();
    for (k, &i) in ineq.lower.iter().enumerate() {
        rhs[i] -= r3[off + k] / w[off + k];
    }
    rhs[m..m + me].copy_from_slice(r2);
    rhs[m + me..].copy_from_slice(&r3[..mg]);
    let x = kkt.solve(&rhs);
    let dy = x[..m].to_vec();
    let dnu = x[m..m + me].to_vec();
    let mut dlam = vec![0.0; ineq.len()];
    dlam[..mg].copy_from_slice(&x[m + me..]);
    for (k, &i) in ineq.upper.iter().enumerate() {
        dlam[mg + k] = (dy[i] - r3[mg + k]) / w[mg + k];
    }
    for (k, &i) in ineq.lower.iter().enumerate() {
        dlam[off + k] = (-dy[i] - r3[off + k]) / w[off + k];
    }
    (dy, dnu, dlam)
}

fn factor_for(kkt: &mut Newton, r: &Reduced, ineq: &Ineq, w: &[f64]) {
    let mg = ineq.mg();
    let mut var_diag = vec![0.0; r.m];
    for (k, &i) in ineq.upper.iter().enumerate() {
        var_diag[i] += 1.0 / w[mg + k];
    }
    let off = mg + ineq.upper.len();
    for (k, &i) in ineq.lower.iter().enumerate() {
        var_diag[i] += 1.0 / w[off + k];
    }
    kkt.factor(&var_diag, &w[..mg]);
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            alpha = alpha.min(-x / d);
        }
    }
    alpha
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn to_solution(ineq: &Ineq, it: &Iterate) -> ReducedSolution {
    let (lam, mu_lower, mu_upper) = ineq.split(&it.lam);
    ReducedSolution {
        y: it.y.clone(),
        nu: it.nu.clone(),
        lam,
        mu_lower,
        mu_upper,
    }
}

/// Farkas check on the normalized duals: `Aᵗν̂ + G_allᵗλ̂ ≈ 0` together with
/// `bᵗν̂ + h_allᵗλ̂ < 0` proves the constraints inconsistent.
fn farkas(r: &Reduced, ineq: &Ineq, h_all: &[f64], it: &Iterate) -> Option<String> {
    let norm = inf_norm(&it.nu).max(inf_norm(&it.lam));
    if norm < FARKAS_DUAL_NORM {
        return None;
    }
    let nu: Vec<f64> = it.nu.iter().map(|v| v / norm).collect();
    let lam: Vec<f64> = it.lam.iter().map(|v| v / norm).collect();
    let mut direction = vec![0.0; r.m];
    for (k, row) in r.a.iter().enumerate() {
        for &(j, v) in row {
            direction[j] += v * nu[k];
        }
    }
    ineq.add_transpose(&lam, &mut direction);
    let residual = inf_norm(&direction);
    let value: f64 = r.b.iter().zip(&nu).map(|(b, v)| b * v).sum::<f64>()
        + h_all.iter().zip(&lam).map(|(h, l)| h * l).sum::<f64>();
    (residual <= 1e-9 && value <= -1e-6).then(|| {
        format!("Farkas certificate from diverging duals: |Aᵗν + Gᵗλ| = {residual:.1e}, bᵗν + hᵗλ = {value:.3e} (normalized)")
    })
}

/// Phase one: minimize `Σ(e⁺ + e⁻) + t` subject to
/// `A y − e⁺ + e⁻ = b`, `G y − t ≤ h`, `l − t ≤ y ≤ u + t`, `e, t ≥ 0`.
/// Returns the optimal violation, or `None` if phase one itself fails.
fn phase_one(r: &Reduced, settings: &QpSettings) -> Option<f64> {
    let m = r.m;
    let me = r.a.len();
    let dim = m + 2 * me + 1;
    let t = dim - 1;
    let mut q = vec![0.0; dim];
    for v in q.iter_mut().skip(m) {
        *v = 1.0;
    }
    let p = (0..m).map(|i| (i, i, PHASE_ONE_REG)).collect();
    let a = r
        .a
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let mut row = row.clone();
            row.push((m + k, -1.0));
            row.push((m + me + k, 1.0));
            row
        })
        .collect();
    let mut g: Vec<_> = r
        .g
        .iter()
        .map(|row| {
            let mut row = row.clone();
            row.push((t, -1.0));
            row
        })
        .collect();
    let mut h = r.h.clone();
    for i in 0..m {
        if r.upper[i].is_finite() {
            g.push(vec![(i, 1.0), (t, -1.0)]);
            h.push(r.upper[i]);
        }
        if r.lower[i].is_finite() {
            g.push(vec![(i, -1.0), (t, -1.0)]);
            h.push(-r.lower[i]);
        }
    }
    let mut lower = vec![f64::NEG_INFINITY; dim];
    for v in lower.iter_mut().skip(m) {
        *v = 0.0;
    }
    let problem = Reduced {
        m: dim,
        p,
        q,
        a,
        b: r.b.clone(),
        g,
        h,
        lower,
        upper: vec![f64::INFINITY; dim],
    };
    let out = run(&problem, settings, false);
    if out.status != IpmStatus::Converged {
        return None;
    }
    let y = &out.solution.y;
    Some(y[m..].iter().sum())
}

pub(crate) fn solve(r: &Reduced, settings: &QpSettings) -> IpmOutput {
    run(r, settings, true)
}

fn run(r: &Reduced, settings: &QpSettings, allow_phase_one: bool) -> IpmOutput {
    let ineq = Ineq::new(r);
    let mi = ineq.len();
    let me = r.a.len();
    let h_all = ineq.rhs();
    let target = 0.01 * settings.tol;
    let mut kkt = Newton::new(r);

    // Starting point: one solve with W = I, then shift s and λ into the
    // positive orthant.
    let ones = vec![1.0; mi];
    factor_for(&mut kkt, r, &ineq, &ones);
    let neg_q: Vec<f64> = r.q.iter().map(|v| -v).collect();
    let (y, nu, z) = newton_solve(&kkt, &ineq, &ones, &neg_q, &r.b, &h_all);
    let mut s: Vec<f64> = z.iter().map(|v| -v).collect();
    let mut lam = z;
    for v in [&mut s, &mut lam] {
        let lowest = v.iter().cloned().fold(f64::INFINITY, f64::min);
        if mi > 0 && lowest <= 0.0 {
            let shift = 1.0 - lowest;
            v.iter_mut().for_each(|x| *x += shift);
        }
    }
    let mut it = Iterate { y, nu, lam, s };

    let mut best = to_solution(&ineq, &it);
    let mut best_res = best.residuals(r).max();
    let mut phase_one_done = !allow_phase_one;
    let mut tiny_steps = 0;

    let mut iterations = settings.max_iter;
    for k in 0..settings.max_iter {
        let current = to_solution(&ineq, &it);
        let res = current.residuals(r);
        if res.max() < best_res {
            best_res = res.max();
            best = current;
        }
        if res.max() <= target {
            return IpmOutput {
                solution: best,
                status: IpmStatus::Converged,
                iterations: k,
            };
        }
        if let Some(msg) = farkas(r, &ineq, &h_all, &it) {
            return IpmOutput {
                solution: best,
                status: IpmStatus::Infeasible(msg),
                iterations: k,
            };
        }
        if !phase_one_done && (k >= STALL_ITERATIONS || tiny_steps >= 3) {
            phase_one_done = true;
            if let Some(violation) = phase_one(r, settings) {
                if violation > settings.tol {
                    return IpmOutput {
                        solution: best,
                        status: IpmStatus::Infeasible(format!(
                            "phase one: minimum total constraint violation {violation:.3e} exceeds {:.1e}",
                            settings.tol
                        )),
                        iterations: k,
                    };
                }
            }
        }

        // Residuals of the Newton system.
        let mut r_d = r.p_times(&it.y);
        for i in 0..r.m {
            r_d[i] += r.q[i];
        }
        for (kk, row) in r.a.iter().enumerate() {
            for &(j, v) in row {
                r_d[j] += v * it.nu[kk];
            }
        }
        ineq.add_transpose(&it.lam, &mut r_d);
        let r_p: Vec<f64> = r.a.iter().enumerate().map(|(kk, row)| row_dot(row, &it.y) - r.b[kk]).collect();
        let gy = ineq.times(&it.y);
        let r_g: Vec<f64> = (0..mi).map(|i| gy[i] + it.s[i] - h_all[i]).collect();
        let mu = if mi > 0 {
            it.s.iter().zip(&it.lam).map(|(a, b)| a * b).sum::<f64>() / mi as f64
        } else {
            0.0
        };

        let w: Vec<f64> = it.s.iter().zip(&it.lam).map(|(s, l)| s / l).collect();
        factor_for(&mut kkt, r, &ineq, &w);
        let r1: Vec<f64> = r_d.iter().map(|v| -v).collect();
        let r2: Vec<f64> = r_p.iter().map(|v| -v).collect();

        // Predictor.
        let r3: Vec<f64> = (0..mi).map(|i| -r_g[i] + it.s[i]).collect();
        let (_, _, dlam_a) = newton_solve(&kkt, &ineq, &w, &r1, &r2, &r3);
        let ds_a: Vec<f64> = (0..mi).map(|i| -it.s[i] - w[i] * dlam_a[i]).collect();
        let alpha_aff = max_step(&it.s, &ds_a).min(max_step(&it.lam, &dlam_a)).min(1.0);
        let sigma = if mi > 0 && mu > 0.0 {
            let mu_aff = (0..mi)
                .map(|i| (it.s[i] + alpha_aff * ds_a[i]) * (it.lam[i] + alpha_aff * dlam_a[i]))
                .sum::<f64>()
                / mi as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
            // After a blocked step, recenter before pushing μ further down.
            if tiny_steps > 0 { sigma.max(0.9) } else { sigma }
        } else {
            0.0
        };

        // Corrector.
        let r_c: Vec<f64> = (0..mi)
            .map(|i| it.s[i] * it.lam[i] + ds_a[i] * dlam_a[i] - sigma * mu)
            .collect();
        let r3: Vec<f64> = (0..mi).map(|i| -r_g[i] + r_c[i] / it.lam[i]).collect();
        let (dy, dnu, dlam) = newton_solve(&kkt, &ineq, &w, &r1, &r2, &r3);
        let ds: Vec<f64> = (0..mi).map(|i| -(r_c[i] + it.s[i] * dlam[i]) / it.lam[i]).collect();
        let alpha = (STEP_FRACTION * max_step(&it.s, &ds).min(max_step(&it.lam, &dlam))).min(1.0);
        if alpha < 1e-8 {
            tiny_steps += 1;
            if phase_one_done && tiny_steps >= STALL_STEPS {
                iterations = k + 1;
                break;
            }
        } else {
            tiny_steps = 0;
        }

        for i in 0..r.m {
            it.y[i] += alpha * dy[i];
        }
        for i in 0..me {
            it.nu[i] += alpha * dnu[i];
        }
        for i in 0..mi {
            it.s[i] = (it.s[i] + alpha * ds[i]).max(f64::MIN_POSITIVE);
            it.lam[i] = (it.lam[i] + alpha * dlam[i]).max(f64::MIN_POSITIVE);
        }
    }

    let current = to_solution(&ineq, &it);
    let res = current.residuals(r).max();
    if res < best_res {
        best_res = res;
        best = current;
    }
    let status = if best_res <= target {
        IpmStatus::Converged
    } else {
        IpmStatus::MaxIter
    };
    IpmOutput {
        solution: best,
        status,
        iterations,
    }
}
