//! Which fair policies exist, and which one is optimal.
//!
//! A policy `p` is fair for `(A, C)` when `A p >= C o A*` holds row by row,
//! where `A*` holds the per-agent row maxima. This module provides:
//!
//! * the two sufficient existence conditions (`sum C <= 1`, or
//!   `max C <= 1/min(n, m)`) and the constructive witnesses behind them;
//! * the closed-form optimum for two arms;
//! * LP builders for the welfare-maximising fair policy (P1), its optimistic
//!   confidence-bound relaxation (P2), and the Lagrangian dual of P1.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{argmax_first, max_row_rewards, PolicyVector};
use crate::lp::{solve_lp, LinearProgram, LpStatus, ACTIVE_SET_MIN_ROWS};
use crate::matrix::{dot, Matrix};

/// Slack used when comparing sums of user-supplied fractions against exact bounds.
const CONDITION_EPS: f64 = 1e-12;
/// Constraint tolerance when validating witnesses.
pub const WITNESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub cond_sum: bool,
    pub cond_max: bool,
    pub lp_feasible: bool,
    pub witness: Option<PolicyVector>,
}

/// `(sum_i C_i <= 1, max_i C_i <= 1/min(n, m))`.
pub fn check_sufficient_feasibility(c: &[f64], n: usize, m: usize) -> (bool, bool) {
    let sum: f64 = c.iter().sum();
    let max = c.iter().copied().fold(0.0, f64::max);
    let cond_sum = sum <= 1.0 + CONDITION_EPS;
    let cond_max = max <= 1.0 / n.min(m) as f64 + CONDITION_EPS;
    (cond_sum, cond_max)
}

/// Largest shortfall `max_i (C_i A*_i - <A_i, p>)`, clipped at zero.
pub fn fairness_violation(a: &Matrix, c: &[f64], p: &[f64]) -> f64 {
    let star = max_row_rewards(a);
    a.iter_rows()
        .zip(c)
        .zip(&star)
        .map(|((row, ci), s)| ci * s - dot(row, p))
        .fold(0.0, f64::max)
}

pub fn is_fair(a: &Matrix, c: &[f64], p: &[f64], tol: f64) -> bool {
    fairness_violation(a, c, p) <= tol
}

/// A fair policy built directly from whichever sufficient condition holds.
///
/// With `sum C <= 1`, each agent's weight `C_i / sum C` goes to its favourite
/// arm (least index among ties). Otherwise, with `max C <= 1/min(n, m)`, the
/// uniform policy is fair. All-zero `C` yields the uniform policy.
pub fn construct_feasible_policy(a: &Matrix, c: &[f64]) -> Result<PolicyVector> {
    let (n, m) = (a.rows(), a.cols());
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: c.len(),
        });
    }
    let total: f64 = c.iter().sum();
    if total == 0.0 {
        return Ok(PolicyVector::uniform(m));
    }
    let (cond_sum, cond_max) = check_sufficient_feasibility(c, n, m);
    if cond_sum {
        let mut p = vec![0.0; m];
        for (row, &ci) in a.iter_rows().zip(c) {
            p[argmax_first(row)] += ci / total;
        }
        PolicyVector::from_solver(p)
    } else if cond_max {
        Ok(PolicyVector::uniform(m))
    } else {
        Err(Error::SufficientConditionsNotMet)
    }
}

/// Welfare-maximising fair policy: maximise `sum_i <A_i, p>` s.t. `A p >= C o A*`.
pub fn build_p1(a: &Matrix, c: &[f64]) -> Result<LinearProgram> {
    if c.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            actual: c.len(),
        });
    }
    let h = max_row_rewards(a)
        .iter()
        .zip(c)
        .map(|(s, ci)| ci * s)
        .collect();
    LinearProgram::new(a.column_sums(), a.clone(), h, true)
}

/// Confidence-bound relaxation of P1: welfare and left-hand sides use the
/// upper bounds; the right-hand side is `C_i * max_j lcb_ij`.
pub fn build_p2(a_ucb: &Matrix, a_lcb: &Matrix, c: &[f64]) -> Result<LinearProgram> {
    if a_ucb.rows() != a_lcb.rows() || a_ucb.cols() != a_lcb.cols() {
        return Err(Error::DimensionMismatch {
            expected: a_ucb.rows() * a_ucb.cols(),
            actual: a_lcb.rows() * a_lcb.cols(),
        });
    }
    if c.len() != a_ucb.rows() {
        return Err(Error::DimensionMismatch {
            expected: a_ucb.rows(),
            actual: c.len(),
        });
    }
    let lcb_star = max_row_rewards(a_lcb);
    let h = lcb_star.iter().zip(c).map(|(s, ci)| ci * s).collect();
    LinearProgram::new(a_ucb.column_sums(), a_ucb.clone(), h, true)
}

/// Maximise the smallest slack `s` of `G p - s >= h` over the simplex.
///
/// Variables are `(p_1, ..., p_m, s)` with `s` free.
pub fn build_max_min_slack(g: &Matrix, h: &[f64]) -> Result<LinearProgram> {
    let m = g.cols();
    let gs = Matrix::from_fn(g.rows(), m + 1, |i, j| if j < m { g[(i, j)] } else { -1.0 });
    let mut obj = vec![0.0; m + 1];
    obj[m] = 1.0;
    LinearProgram::with_free_vars(obj, gs, h.to_vec(), true, vec![m])
}

/// Optimal fair policy together with its welfare.
#[derive(Debug, Clone, Serialize)]
pub struct OptimalPolicy {
    pub policy: PolicyVector,
    pub welfare: f64,
}

/// Solves P1, pruning redundant fairness rows first when there are many agents.
pub fn solve_p1(a: &Matrix, c: &[f64]) -> Result<OptimalPolicy> {
    let mut lp = build_p1(a, c)?;
    if lp.num_rows() > ACTIVE_SET_MIN_ROWS {
        lp = lp.pruned();
    }
    let sol = solve_lp(&lp)?;
    match (sol.status, sol.x, sol.value) {
        (LpStatus::Optimal, Some(x), Some(v)) => Ok(OptimalPolicy {
            policy: PolicyVector::from_solver(x)?,
            welfare: v,
        }),
        (LpStatus::Infeasible, ..) => Err(Error::Infeasible(
            "no policy meets every minimum-reward guarantee".into(),
        )),
        (status, ..) => Err(Error::NumericalFailure(format!(
            "P1 solve ended with status {status:?}"
        ))),
    }
}

pub fn feasibility_report(a: &Matrix, c: &[f64]) -> Result<FeasibilityReport> {
    let (cond_sum, cond_max) = check_sufficient_feasibility(c, a.rows(), a.cols());
    let p1 = match solve_p1(a, c) {
        Ok(p) => Some(p),
        Err(Error::Infeasible(_)) => None,
        Err(e) => return Err(e),
    };
    let witness = if cond_sum || cond_max {
        Some(construct_feasible_policy(a, c)?)
    } else {
        p1.as_ref().map(|p| p.policy.clone())
    };
    Ok(FeasibilityReport {
        cond_sum,
        cond_max,
        lp_feasible: p1.is_some(),
        witness,
    })
}

/// Probability `x*` of pulling the first arm in the optimal fair two-arm policy.
///
/// Columns are internally reordered so that the first arm is the welfare
/// maximiser; the returned value always refers to the caller's column order.
/// Agents indifferent between the arms impose no constraint.
pub fn two_arm_optimal_x(a: &Matrix, c: &[f64]) -> Result<f64> {
    if a.cols() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: a.cols(),
        });
    }
    if c.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            actual: c.len(),
        });
    }
    let sums = a.column_sums();
    if sums[1] > sums[0] {
        let x = two_arm_normalized(&a.swap_columns(0, 1), c)?;
        return Ok(1.0 - x);
    }
    two_arm_normalized(a, c)
}

/// Feasible interval `[lower, upper]` of the first-arm probability, assuming
/// nothing about which arm is better.
pub fn two_arm_feasible_interval(a: &Matrix, c: &[f64]) -> (f64, f64) {
    let mut lower = 0.0f64;
    let mut upper = 1.0f64;
    for (row, &ci) in a.iter_rows().zip(c) {
        let (a1, a2) = (row[0], row[1]);
        if a1 > a2 {
            let r = a2 / a1;
            lower = lower.max((ci - r) / (1.0 - r));
        } else if a2 > a1 {
            let r = a1 / a2;
            upper = upper.min((1.0 - ci) / (1.0 - r));
        }
    }
    (lower, upper)
}

fn two_arm_normalized(a: &Matrix, c: &[f64]) -> Result<f64> {
    let (lower, upper) = two_arm_feasible_interval(a, c);
    if lower > upper + CONDITION_EPS {
        return Err(Error::Infeasible(format!(
            "two-arm feasible interval is empty: [{lower}, {upper}]"
        )));
    }
    Ok(upper)
}

/// Lagrangian dual of P1 as an LP over `(lambda_1, ..., lambda_n, t)`:
///
/// ```text
///   maximize   -t + sum_i lambda_i C_i A*_i
///   subject to t >= sum_i (1 + lambda_i) A_ij   for every arm j
///              lambda >= 0, t free
/// ```
///
/// The optimum equals minus the P1 optimum.
pub fn build_dual(a_hat: &Matrix, c: &[f64], a_star: &[f64]) -> Result<LinearProgram> {
    let (n, m) = (a_hat.rows(), a_hat.cols());
    if c.len() != n || a_star.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if c.len() != n { c.len() } else { a_star.len() },
        });
    }
    if a_hat.as_slice().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInstance(
            "dual needs nonnegative reward estimates".into(),
        ));
    }
    let mut obj: Vec<f64> = c.iter().zip(a_star).map(|(ci, s)| ci * s).collect();
    obj.push(-1.0);
    let g = Matrix::from_fn(m, n + 1, |j, k| if k < n { -a_hat[(k, j)] } else { 1.0 });
    let h = a_hat.column_sums();
    LinearProgram::with_free_vars(obj, g, h, false, vec![n])
}

#[derive(Debug, Clone, Serialize)]
pub struct DualSolution {
    pub lambda: Vec<f64>,
    /// `min_lambda ||(Diag(1 + lambda) A)^T 1||_inf - sum_i lambda_i C_i A*_i`.
    pub value: f64,
}

pub fn solve_dual_lambda(a_hat: &Matrix, c: &[f64], a_star: &[f64]) -> Result<DualSolution> {
    let lp = build_dual(a_hat, c, a_star)?;
    let sol = solve_lp(&lp)?;
    match (sol.status, sol.x, sol.value) {
        (LpStatus::Optimal, Some(mut x), Some(v)) => {
            x.truncate(a_hat.rows());
            Ok(DualSolution {
                lambda: x,
                value: -v,
            })
        }
        (LpStatus::Unbounded, ..) => Err(Error::Infeasible(
            "dual unbounded: fairness constraints cannot all be met".into(),
        )),
        (status, ..) => Err(Error::NumericalFailure(format!(
            "dual solve ended with status {status:?}"
        ))),
    }
}
