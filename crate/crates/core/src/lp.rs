//! Small dense linear programs.
//!
//! Problems have the form
//!
//! ```text
//!   maximize    c . x
//!   subject to  G x >= h
//!               x_j >= 0          for j not in free_vars
//!               sum_j x_j = 1     over non-free variables, if simplex_constrained
//! ```
//!
//! [`solve_lp`] runs a two-phase primal simplex on a dense tableau with
//! Bland's rule for both the entering and the leaving variable, so identical
//! inputs always produce the identical optimal vertex. Free variables are split
//! into positive and negative parts.
//!
//! Simplex-constrained programs with many rows (fairness constraints for
//! thousands of agents) are solved by constraint generation: solve on a
//! working subset of rows, add the most violated remaining rows, repeat. A
//! relaxation optimum that satisfies every row is optimal for the full
//! program and is a vertex of its feasible region.
//!
//! Default tolerances: feasibility 1e-8, pivot 1e-10, at most 10^6 pivots.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Row count above which simplex-constrained programs use constraint generation.
pub const ACTIVE_SET_MIN_ROWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpTolerances {
    /// Phase-1 infeasibility threshold and post-solve constraint check.
    pub feasibility: f64,
    /// Smallest tableau entry accepted as a pivot; also the reduced-cost
    /// optimality threshold.
    pub pivot: f64,
    pub max_pivots: usize,
}

impl Default for LpTolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-8,
            pivot: 1e-10,
            max_pivots: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    g: Matrix,
    h: Vec<f64>,
    simplex_constrained: bool,
    free_vars: Vec<usize>,
}

impl LinearProgram {
    pub fn new(
        objective: Vec<f64>,
        g: Matrix,
        h: Vec<f64>,
        simplex_constrained: bool,
    ) -> Result<Self> {
        Self::with_free_vars(objective, g, h, simplex_constrained, Vec::new())
    }

    pub fn with_free_vars(
        objective: Vec<f64>,
        g: Matrix,
        h: Vec<f64>,
        simplex_constrained: bool,
        mut free_vars: Vec<usize>,
    ) -> Result<Self> {
        if g.rows() > 0 && g.cols() != objective.len() {
            return Err(Error::DimensionMismatch {
                expected: objective.len(),
                actual: g.cols(),
            });
        }
        if h.len() != g.rows() {
            return Err(Error::DimensionMismatch {
                expected: g.rows(),
                actual: h.len(),
            });
        }
        free_vars.sort_unstable();
        free_vars.dedup();
        if let Some(&v) = free_vars.iter().find(|&&v| v >= objective.len()) {
            return Err(Error::DimensionMismatch {
                expected: objective.len(),
                actual: v + 1,
            });
        }
        let g = if g.rows() == 0 {
            Matrix::zeros(0, objective.len())
        } else {
            g
        };
        Ok(Self {
            objective,
            g,
            h,
            simplex_constrained,
            free_vars,
        })
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> (&Matrix, &[f64]) {
        (&self.g, &self.h)
    }

    pub fn is_simplex_constrained(&self) -> bool {
        self.simplex_constrained
    }

    pub fn free_vars(&self) -> &[usize] {
        &self.free_vars
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.g.rows()
    }

    fn is_free(&self, v: usize) -> bool {
        self.free_vars.binary_search(&v).is_ok()
    }

    /// Same program with the objective multiplied by `k`.
    pub fn scaled_objective(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.objective.iter_mut().for_each(|c| *c *= k);
        out
    }

    /// Largest violation of any constraint by `x` (zero when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (row, &h) in self.g.iter_rows().zip(&self.h) {
            worst = worst.max(h - dot(row, x));
        }
        for (j, &v) in x.iter().enumerate() {
            if !self.is_free(j) {
                worst = worst.max(-v);
            }
        }
        if self.simplex_constrained {
            let s: f64 = x
                .iter()
                .enumerate()
                .filter(|(j, _)| !self.is_free(*j))
                .map(|(_, v)| v)
                .sum();
            worst = worst.max((s - 1.0).abs());
        }
        worst
    }

    /// Restriction to a subset of the inequality rows.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let g = Matrix::from_fn(rows.len(), self.num_vars(), |r, j| self.g[(rows[r], j)]);
        Self {
            objective: self.objective.clone(),
            g,
            h: rows.iter().map(|&r| self.h[r]).collect(),
            simplex_constrained: self.simplex_constrained,
            free_vars: self.free_vars.clone(),
        }
    }

    /// Indices of the rows that survive redundancy pruning, ascending.
    ///
    /// Requires every variable to be nonnegative (no free variables);
    /// otherwise all rows are kept. A row `G_k x >= h_k` with `h_k <= 0` and a
    /// nonnegative row is implied by `x >= 0`. A row with `h_k > 0` is implied
    /// by a row `i` with `h_i > 0` whenever `G_k / h_k >= G_i / h_i` entrywise.
    /// Among identical scaled rows the lowest index is kept.
    pub fn nonredundant_rows(&self) -> Vec<usize> {
        if !self.free_vars.is_empty() {
            return (0..self.num_rows()).collect();
        }
        let mut keep = Vec::new();
        let mut scaled: Vec<(usize, Vec<f64>, f64)> = Vec::new();
        for (k, (row, &h)) in self.g.iter_rows().zip(&self.h).enumerate() {
            if h > 0.0 {
                let s: Vec<f64> = row.iter().map(|v| v / h).collect();
                let total = s.iter().sum();
                scaled.push((k, s, total));
            } else if row.iter().any(|&v| v < 0.0) {
                keep.push(k);
            }
        }
        // A dominating row has a no-larger entry sum, so it is visited first.
        scaled.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        let mut kept: Vec<(usize, Vec<f64>)> = Vec::new();
        for (k, s, _) in scaled {
            let dominated = kept
                .iter()
                .any(|(_, d)| d.iter().zip(&s).all(|(di, si)| di <= si));
            if !dominated {
                kept.push((k, s));
            }
        }
        keep.extend(kept.into_iter().map(|(k, _)| k));
        keep.sort_unstable();
        keep
    }

    /// Equivalent program with redundant rows removed.
    pub fn pruned(&self) -> Self {
        self.select_rows(&self.nonredundant_rows())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Option<Vec<f64>>,
    pub value: Option<f64>,
}

impl LpSolution {
    fn optimal(x: Vec<f64>, value: f64) -> Self {
        Self {
            status: LpStatus::Optimal,
            x: Some(x),
            value: Some(value),
        }
    }

    fn without_point(status: LpStatus) -> Self {
        Self {
            status,
            x: None,
            value: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    solve_lp_with(lp, &LpTolerances::default())
}

pub fn solve_lp_with(lp: &LinearProgram, tol: &LpTolerances) -> Result<LpSolution> {
    if lp.simplex_constrained && lp.free_vars.is_empty() && lp.num_rows() > ACTIVE_SET_MIN_ROWS {
        solve_active_set(lp, tol)
    } else {
        solve_dense(lp, tol)
    }
}

/// Constraint generation for simplex-constrained programs without free
/// variables; other programs go straight to [`solve_dense`].
pub fn solve_active_set(lp: &LinearProgram, tol: &LpTolerances) -> Result<LpSolution> {
    if !lp.simplex_constrained || !lp.free_vars.is_empty() {
        return solve_dense(lp, tol);
    }
    let batch = 2 * lp.num_vars() + 4;
    let mut working: Vec<usize> = Vec::new();
    let mut in_set = vec![false; lp.num_rows()];
    loop {
        let sub = lp.select_rows(&working);
        let sol = solve_dense(&sub, tol)?;
        let x = match (&sol.status, &sol.x) {
            (LpStatus::Optimal, Some(x)) => x,
            // Relaxation infeasible implies the full program is infeasible;
            // a simplex-constrained relaxation is never unbounded.
            _ => return Ok(sol),
        };
        let mut violated: Vec<(f64, usize)> =
            lp.g.iter_rows()
                .zip(&lp.h)
                .enumerate()
                .filter(|(r, _)| !in_set[*r])
                .map(|(r, (row, &h))| (h - dot(row, x), r))
                .filter(|(v, _)| *v > tol.feasibility)
                .collect();
        if violated.is_empty() {
            return Ok(sol);
        }
        violated.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, r) in violated.iter().take(batch) {
            in_set[r] = true;
            working.push(r);
        }
        working.sort_unstable();
    }
}

struct Tableau {
    // rows x (cols + 1); last column is the right-hand side
    t: Vec<Vec<f64>>,
    // reduced costs d_j = c_B B^-1 a_j - c_j, plus current objective value in the last slot
    d: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
    pivots: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.t[r].clone();
        for (k, row) in self.t.iter_mut().enumerate() {
            if k == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        }
        let f = self.d[c];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.d[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn price(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        self.d = vec![0.0; w];
        for (dv, &cj) in self.d[..self.cols].iter_mut().zip(cost) {
            *dv = -cj;
        }
        for (row, &b) in self.t.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (dv, tv) in self.d.iter_mut().zip(row) {
                    *dv += cb * tv;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    /// Maximises the priced objective over columns `allowed`.
    /// Returns `Ok(false)` if unbounded.
    fn optimize(&mut self, allowed: &[bool], tol: &LpTolerances) -> Result<bool> {
        let rhs = self.cols;
        loop {
            let entering = (0..self.cols).find(|&j| allowed[j] && self.d[j] < -tol.pivot);
            let Some(c) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.t.len() {
                let a = self.t[r][c];
                if a > tol.pivot {
                    let ratio = self.t[r][rhs] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Ok(false);
            };
            if self.pivots >= tol.max_pivots {
                return Err(Error::NumericalFailure(format!(
                    "simplex pivot cap of {} reached",
                    tol.max_pivots
                )));
            }
            self.pivot(r, c);
        }
    }
}

/// Two-phase simplex on the full tableau.
pub fn solve_dense(lp: &LinearProgram, tol: &LpTolerances) -> Result<LpSolution> {
    let nv = lp.num_vars();
    // structural columns: (original variable, sign)
    let mut structural: Vec<(usize, f64)> = Vec::with_capacity(nv + lp.free_vars.len());
    for v in 0..nv {
        structural.push((v, 1.0));
        if lp.is_free(v) {
            structural.push((v, -1.0));
        }
    }
    let ns = structural.len();
    let n_ineq = lp.num_rows();
    let n_rows = n_ineq + usize::from(lp.simplex_constrained);
    let slack0 = ns;
    let art0 = ns + n_ineq;
    let cols = art0 + n_rows;

    let mut t = vec![vec![0.0; cols + 1]; n_rows];
    for (r, (grow, &h)) in lp.g.iter_rows().zip(&lp.h).enumerate() {
        let row = &mut t[r];
        for (k, &(v, s)) in structural.iter().enumerate() {
            row[k] = s * grow[v];
        }
        row[slack0 + r] = -1.0;
        row[cols] = h;
    }
    if lp.simplex_constrained {
        let row = &mut t[n_ineq];
        for (k, &(v, _)) in structural.iter().enumerate() {
            if !lp.is_free(v) {
                row[k] = 1.0;
            }
        }
        row[cols] = 1.0;
    }
    for (r, row) in t.iter_mut().enumerate() {
        if row[cols] < 0.0 {
            for v in row[..art0].iter_mut() {
                *v = -*v;
            }
            row[cols] = -row[cols];
        }
        row[art0 + r] = 1.0;
    }
    let mut tab = Tableau {
        t,
        d: Vec::new(),
        basis: (art0..cols).collect(),
        cols,
        pivots: 0,
    };

    // Phase 1: maximise -sum(artificials).
    let mut cost1 = vec![0.0; cols];
    cost1[art0..].iter_mut().for_each(|c| *c = -1.0);
    tab.price(&cost1);
    let all = vec![true; cols];
    tab.optimize(&all, tol)?;
    let infeasibility: f64 = tab
        .basis
        .iter()
        .zip(&tab.t)
        .filter(|(b, _)| **b >= art0)
        .map(|(_, row)| row[cols])
        .sum();
    if infeasibility > tol.feasibility {
        return Ok(LpSolution::without_point(LpStatus::Infeasible));
    }

    // Drive zero-level artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < tab.t.len() {
        if tab.basis[r] >= art0 {
            let col = (0..art0).find(|&j| tab.t[r][j].abs() > tol.pivot);
            match col {
                Some(c) => {
                    tab.pivot(r, c);
                    r += 1;
                }
                None => {
                    tab.t.remove(r);
                    tab.basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }

    // Phase 2.
    let mut cost2 = vec![0.0; cols];
    for (k, &(v, s)) in structural.iter().enumerate() {
        cost2[k] = s * lp.objective[v];
    }
    tab.price(&cost2);
    let mut allowed = vec![true; cols];
    allowed[art0..].iter_mut().for_each(|a| *a = false);
    if !tab.optimize(&allowed, tol)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded));
    }

    let mut x = vec![0.0; nv];
    for (row, &b) in tab.t.iter().zip(&tab.basis) {
        if b < ns {
            let (v, s) = structural[b];
            x[v] += s * row[cols];
        }
    }
    for (j, v) in x.iter_mut().enumerate() {
        if !lp.is_free(j) && *v < 0.0 && *v > -tol.feasibility {
            *v = 0.0;
        }
    }
    let violation = lp.max_violation(&x);
    if violation > tol.feasibility {
        return Err(Error::NumericalFailure(format!(
            "simplex vertex violates constraints by {violation:e}"
        )));
    }
    let value = dot(&lp.objective, &x);
    Ok(LpSolution::optimal(x, value))
}

/// Brute-force reference solver: scans the simplex lattice with spacing `step`.
///
/// Every point of the simplex has a lattice neighbour whose coordinates each
/// differ by less than `step` with the differences summing to zero, so a row
/// `G_r` changes by at most `step * floor(m/2) * (max_j G_rj - min_j G_rj)`.
/// Lattice points are accepted when every row holds up to that slack, which
/// means the neighbour of any feasible point is never rejected. Returns the
/// best accepted point (lowest lexicographic lattice index on ties), or
/// `Infeasible` when no point is accepted.
pub fn grid_oracle(lp: &LinearProgram, step: f64) -> Result<LpSolution> {
    let m = lp.num_vars();
    if !lp.simplex_constrained || !lp.free_vars.is_empty() {
        return Err(Error::Config(
            "grid oracle needs a simplex-constrained program without free variables".into(),
        ));
    }
    if m > 4 {
        return Err(Error::Config(format!(
            "grid oracle supports at most 4 variables, got {m}"
        )));
    }
    if !(step > 0.0 && step <= 0.1) {
        return Err(Error::Config(format!("grid step {step} outside (0, 0.1]")));
    }
    let k = (1.0 / step).round() as usize;
    let unit = 1.0 / k as f64;
    let slack: Vec<f64> =
        lp.g.iter_rows()
            .map(|r| {
                let (lo, hi) = r
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    });
                step * (m / 2) as f64 * (hi - lo) + 1e-12
            })
            .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut counts = vec![0usize; m];
    let mut x = vec![0.0; m];
    lattice(&mut counts, 0, k, &mut |c| {
        for (xi, &ci) in x.iter_mut().zip(c) {
            *xi = ci as f64 * unit;
        }
        let ok =
            lp.g.iter_rows()
                .zip(&lp.h)
                .zip(&slack)
                .all(|((row, &h), &s)| dot(row, &x) >= h - s);
        if ok {
            let v = dot(&lp.objective, &x);
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, x.clone()));
            }
        }
    });
    Ok(match best {
        Some((v, x)) => LpSolution::optimal(x, v),
        None => LpSolution::without_point(LpStatus::Infeasible),
    })
}

fn lattice(counts: &mut Vec<usize>, pos: usize, remaining: usize, f: &mut impl FnMut(&[usize])) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        f(counts);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        lattice(counts, pos + 1, remaining - c, f);
    }
}
