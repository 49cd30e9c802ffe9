//! Active-set polishing of an interior-point solution.
//!
//! A constraint is taken as active when its multiplier exceeds its slack.
//! Variables at an active bound are pinned there; the remaining problem is an
//! equality-constrained QP whose KKT system is solved directly. A few
//! active-set corrections follow when the first guess is wrong. This snaps
//! the interior iterate onto the face it converged to and usually drives the
//! residuals down to rounding level.

use super::ldl::{sym_matvec, Ldl};
use super::{row_dot, Reduced, ReducedSolution};

const REG: f64 = 1e-11;
const REFINE_STEPS: usize = 12;
const MAX_ROUNDS: usize = 20;

#[derive(Clone, Copy, PartialEq)]
enum Pin {
    Free,
    Lower,
    Upper,
}

pub(super) fn polish(r: &Reduced, sol: &ReducedSolution, tol: f64) -> Option<ReducedSolution> {
    let m = r.m;
    let mut pins: Vec<Pin> = (0..m)
        .map(|i| {
            let lo = r.lower[i].is_finite() && sol.mu_lower[i] > sol.y[i] - r.lower[i];
            let up = r.upper[i].is_finite() && sol.mu_upper[i] > r.upper[i] - sol.y[i];
            match (lo, up) {
                (true, true) if sol.mu_upper[i] > sol.mu_lower[i] => Pin::Upper,
                (true, _) => Pin::Lower,
                (_, true) => Pin::Upper,
                _ => Pin::Free,
            }
        })
        .collect();
    let mut active: Vec<bool> = (0..r.g.len())
        .map(|k| sol.lam[k] > r.h[k] - row_dot(&r.g[k], &sol.y))
        .collect();

    // Primal-dual active-set corrections: release constraints whose
    // multiplier came out negative, add the ones the solve violates.
    for _ in 0..MAX_ROUNDS {
        let cand = solve_face(r, &sol.y, &pins, &active)?;
        let mut changed = false;
        for k in 0..r.g.len() {
            if active[k] && cand.lam[k] < -tol {
                active[k] = false;
                changed = true;
            } else if !active[k] && row_dot(&r.g[k], &cand.y) - r.h[k] > tol {
                active[k] = true;
                changed = true;
            }
        }
        for i in 0..m {
            let pin = match pins[i] {
                Pin::Lower if cand.mu_lower[i] < -tol => Pin::Free,
                Pin::Upper if cand.mu_upper[i] < -tol => Pin::Free,
                Pin::Free if cand.y[i] < r.lower[i] - tol => Pin::Lower,
                Pin::Free if cand.y[i] > r.upper[i] + tol => Pin::Upper,
                pin => pin,
            };
            changed |= pin != pins[i];
            pins[i] = pin;
        }
        if !changed {
            let mut cand = cand;
            for v in cand.lam.iter_mut().chain(&mut cand.mu_lower).chain(&mut cand.mu_upper) {
                *v = v.max(0.0);
            }
            return Some(cand);
        }
    }
    None
}

/// Solves the equality-constrained QP on one face: pinned variables held at
/// their bound, active rows held with equality.
fn solve_face(r: &Reduced, start: &[f64], pins: &[Pin], active_mask: &[bool]) -> Option<ReducedSolution> {
    let m = r.m;
    let me = r.a.len();
    let active: Vec<usize> = (0..r.g.len()).filter(|&k| active_mask[k]).collect();
    let mut y = start.to_vec();
    for i in 0..m {
        match pins[i] {
            Pin::Lower => y[i] = r.lower[i],
            Pin::Upper => y[i] = r.upper[i],
            Pin::Free => {}
        }
    }
    let free: Vec<usize> = (0..m).filter(|&i| pins[i] == Pin::Free).collect();
    let mut index = vec![usize::MAX; m];
    for (k, &i) in free.iter().enumerate() {
        index[i] = k;
    }
    let nf = free.len();
    let na = active.len();
    let dim = nf + me + na;

    let mut entries = Vec::new();
    let mut values = Vec::new();
    let mut rhs = vec![0.0; dim];
    for (k, &i) in free.iter().enumerate() {
        rhs[k] = -r.q[i];
    }
    for &(i, j, v) in &r.p {
        match (index[i] != usize::MAX, index[j] != usize::MAX) {
            (true, true) => {
                entries.push((index[i], index[j]));
                values.push(v);
            }
            (true, false) => rhs[index[i]] -= v * y[j],
            (false, true) => rhs[index[j]] -= v * y[i],
            (false, false) => {}
        }
    }
    let mut add_rows = |rows: &mut dyn Iterator<Item = (usize, &Vec<(usize, f64)>, f64)>| {
        for (row_pos, row, b) in rows {
            let mut val = b;
            for &(j, v) in row {
                if index[j] != usize::MAX {
                    entries.push((row_pos, index[j]));
                    values.push(v);
                } else {
                    val -= v * y[j];
                }
            }
            rhs[row_pos] = val;
        }
    };
    add_rows(&mut r.a.iter().enumerate().map(|(k, row)| (nf + k, row, r.b[k])));
    add_rows(
        &mut active
            .iter()
            .enumerate()
            .map(|(k, &g)| (nf + me + k, &r.g[g], r.h[g])),
    );
    let diag_start = entries.len();
    for i in 0..dim {
        entries.push((i, i));
        values.push(0.0);
    }
    let mut reg_values = values.clone();
    for i in 0..dim {
        reg_values[diag_start + i] = if i < nf { REG } else { -REG };
    }
    let mut signs = vec![1.0; nf];
    signs.extend(std::iter::repeat_n(-1.0, me + na));

    let mut ldl = Ldl::analyze(dim, &entries, &signs);
    ldl.factor(&reg_values);
    let mut x = rhs.clone();
    ldl.solve(&mut x);
    let mut kx = vec![0.0; dim];
    for _ in 0..REFINE_STEPS {
        sym_matvec(&entries, &values, &x, &mut kx);
        let mut res: Vec<f64> = rhs.iter().zip(&kx).map(|(b, v)| b - v).collect();
        if res.iter().all(|v| v.abs() <= 1e-16) {
            break;
        }
        ldl.solve(&mut res);
        for (xi, d) in x.iter_mut().zip(&res) {
            *xi += d;
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }

    for (k, &i) in free.iter().enumerate() {
        y[i] = x[k];
    }
    let nu = x[nf..nf + me].to_vec();
    let mut lam = vec![0.0; r.g.len()];
    for (k, &g) in active.iter().enumerate() {
        lam[g] = x[nf + me + k];
    }

    // Bound multipliers of the pinned variables from the reduced gradient.
    let mut grad = r.p_times(&y);
    for i in 0..m {
        grad[i] += r.q[i];
    }
    for (k, row) in r.a.iter().enumerate() {
        for &(j, v) in row {
            grad[j] += v * nu[k];
        }
    }
    for (k, row) in r.g.iter().enumerate() {
        for &(j, v) in row {
            grad[j] += v * lam[k];
        }
    }
    let mut mu_lower = vec![0.0; m];
    let mut mu_upper = vec![0.0; m];
    for i in 0..m {
        match pins[i] {
            Pin::Lower => mu_lower[i] = grad[i],
            Pin::Upper => mu_upper[i] = -grad[i],
            Pin::Free => {}
        }
    }

    Some(ReducedSolution {
        y,
        nu,
        lam,
        mu_lower,
        mu_upper,
    })
}
