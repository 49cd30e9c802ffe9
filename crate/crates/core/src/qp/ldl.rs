//! Sparse LDLᵀ for symmetric quasi-definite matrices.
//!
//! The elimination order comes from a greedy minimum-degree pass over the
//! sparsity graph. Quasi-definite matrices admit an LDLᵀ factorization for any
//! symmetric permutation, so no numerical pivoting is done; each pivot only has
//! to carry its expected sign. Pivots that come out too small or with the wrong
//! sign are replaced by `sign * DYNAMIC_PIVOT`.
//!
//! The factor is accumulated in a dense `N×N` buffer in elimination order, but
//! only positions in the symbolic pattern are ever touched, so the work is
//! proportional to the fill.

use std::collections::BTreeSet;

const PIVOT_EPS: f64 = 1e-14;
const DYNAMIC_PIVOT: f64 = 1e-8;

#[derive(Debug, Clone)]
pub(crate) struct Ldl {
    dim: usize,
    /// Elimination position of each original index.
    pos: Vec<usize>,
    /// Original index eliminated at each position.
    order: Vec<usize>,
    /// Rows (elimination positions, ascending, all > k) of column k of L.
    cols: Vec<Vec<usize>>,
    /// Expected pivot sign, indexed by elimination position.
    signs: Vec<f64>,
    /// Lower-triangular target of each input entry, `(row, col)` in
    /// elimination positions.
    targets: Vec<(usize, usize)>,
    work: Vec<f64>,
    diag: Vec<f64>,
    pub(crate) dynamic_pivots: usize,
}

impl Ldl {
    /// Symbolic analysis. `entries` lists the structurally nonzero positions
    /// (either triangle, duplicates allowed); `signs[i]` is `+1.0` for rows of
    /// the positive definite block and `-1.0` for the negative one.
    pub(crate) fn analyze(dim: usize, entries: &[(usize, usize)], signs: &[f64]) -> Self {
        assert_eq!(signs.len(), dim);
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); dim];
        for &(i, j) in entries {
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }

        let mut queue: BTreeSet<(usize, usize)> = (0..dim).map(|v| (adj[v].len(), v)).collect();
        let mut eliminated = vec![false; dim];
        let mut order = Vec::with_capacity(dim);
        let mut neighbours_at_elim: Vec<Vec<usize>> = vec![Vec::new(); dim];
        while let Some(&(deg, v)) = queue.iter().next() {
            queue.remove(&(deg, v));
            eliminated[v] = true;
            order.push(v);
            let nbrs: Vec<usize> = adj[v].iter().copied().collect();
            for &u in &nbrs {
                queue.remove(&(adj[u].len(), u));
                adj[u].remove(&v);
                for &w in &nbrs {
                    if w != u {
                        adj[u].insert(w);
                    }
                }
                queue.insert((adj[u].len(), u));
            }
            neighbours_at_elim[v] = nbrs;
            adj[v].clear();
        }
        debug_assert!(eliminated.iter().all(|e| *e));

        let mut pos = vec![0; dim];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        let cols = order
            .iter()
            .map(|&v| {
                let mut c: Vec<usize> = neighbours_at_elim[v].iter().map(|&u| pos[u]).collect();
                c.sort_unstable();
                c
            })
            .collect();
        let signs = order.iter().map(|&v| signs[v]).collect();
        let targets = entries
            .iter()
            .map(|&(i, j)| {
                let (pi, pj) = (pos[i], pos[j]);
                if pi >= pj {
                    (pi, pj)
                } else {
                    (pj, pi)
                }
            })
            .collect();

        Ldl {
            dim,
            pos,
            order,
            cols,
            signs,
            targets,
            work: vec![0.0; dim * dim],
            diag: vec![0.0; dim],
            dynamic_pivots: 0,
        }
    }

    /// Numeric factorization. `values[k]` belongs to `entries[k]` of
    /// [`Ldl::analyze`]; duplicates are summed.
    pub(crate) fn factor(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.targets.len());
        let n = self.dim;
        // Every update target (i, j) of column k is itself in column j's
        // pattern, so clearing the pattern clears everything we touch.
        for k in 0..n {
            self.work[k * n + k] = 0.0;
            for &i in &self.cols[k] {
                self.work[i * n + k] = 0.0;
            }
        }
        for (&(i, j), &v) in self.targets.iter().zip(values) {
            self.work[i * n + j] += v;
        }

        self.dynamic_pivots = 0;
        for k in 0..n {
            let mut d = self.work[k * n + k];
            let sign = self.signs[k];
            if d * sign <= PIVOT_EPS {
                d = sign * DYNAMIC_PIVOT;
                self.dynamic_pivots += 1;
            }
            self.diag[k] = d;
            let col = &self.cols[k];
            for &i in col {
                self.work[i * n + k] /= d;
            }
            for (a, &i) in col.iter().enumerate() {
                let li_d = self.work[i * n + k] * d;
                if li_d == 0.0 {
                    continue;
                }
                for &j in &col[..=a] {
                    self.work[i * n + j] -= li_d * self.work[j * n + k];
                }
            }
        }
    }

    /// Solves `L D Lᵀ x = rhs` in place (original ordering).
    pub(crate) fn solve(&self, rhs: &mut [f64]) {
        let n = self.dim;
        let mut x: Vec<f64> = self.order.iter().map(|&v| rhs[v]).collect();
        for k in 0..n {
            let xk = x[k];
            if xk != 0.0 {
                for &i in &self.cols[k] {
                    x[i] -= self.work[i * n + k] * xk;
                }
            }
        }
        for k in 0..n {
            x[k] /= self.diag[k];
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            for &i in &self.cols[k] {
                acc -= self.work[i * n + k] * x[i];
            }
            x[k] = acc;
        }
        for (v, slot) in rhs.iter_mut().enumerate() {
            *slot = x[self.pos[v]];
        }
    }
}

/// Symmetric matrix given as lower-or-upper triangle entries; `y = M x`.
pub(crate) fn sym_matvec(entries: &[(usize, usize)], values: &[f64], x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for (&(i, j), &v) in entries.iter().zip(values) {
        y[i] += v * x[j];
        if i != j {
            y[j] += v * x[i];
        }
    }
}
