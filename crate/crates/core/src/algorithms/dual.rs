use super::{ucb_exploration_length, Run, RunOptions};
use crate::error::{Error, Result};
use crate::instance::{argmax_first, max_row_rewards, BanditInstance};
use crate::matrix::Matrix;
use crate::metrics::RegretTrace;
use crate::policy::solve_dual_lambda;

/// Arm scores `sum_i (1 + lambda_i) (A_hat_ij + eps_j)`.
///
/// The exploration bonus of arm `j` is the radius matrix column weighted the
/// same way as the estimates, i.e. `eps_j * sum_i (1 + lambda_i)`.
pub fn dual_scores(a_hat: &Matrix, radii: &[f64], lambda: &[f64]) -> Vec<f64> {
    let weight: f64 = lambda.iter().map(|l| 1.0 + l).sum();
    (0..a_hat.cols())
        .map(|j| {
            let est: f64 = a_hat
                .iter_rows()
                .zip(lambda)
                .map(|(row, l)| (1.0 + l) * row[j])
                .sum();
            est + weight * radii[j]
        })
        .collect()
}

/// Same exploration as RewardFairUCB, then multipliers `lambda` are fitted
/// once from the estimates by solving the dual of P1, and every later round
/// pulls the arm with the highest [`dual_scores`] (least index on ties).
/// With `dual_refresh = Some(k)` the multipliers are refitted every `k`
/// exploitation rounds.
pub fn dual_heuristic_run(
    inst: &BanditInstance,
    seed: u64,
    opts: &RunOptions,
) -> Result<RegretTrace> {
    let horizon = inst.horizon();
    let m = inst.arms();
    if horizon < m {
        return Err(Error::Config(format!(
            "horizon {horizon} shorter than the {m} arms"
        )));
    }
    if opts.dual_refresh == Some(0) {
        return Err(Error::Config(
            "dual refresh interval must be positive".into(),
        ));
    }
    let explore = ucb_exploration_length(horizon, m);
    let mut run = Run::new(inst, seed, opts)?;
    for t in 1..=explore {
        run.pull(t % m, None)?;
    }
    let fit = |run: &Run| -> Result<Vec<f64>> {
        let a_hat = run.state.estimates();
        solve_dual_lambda(a_hat, inst.fairness(), &max_row_rewards(a_hat))
            .map(|d| d.lambda)
            .map_err(|e| {
                Error::NumericalFailure(format!("dual multipliers at round {}: {e}", run.t()))
            })
    };
    let mut lambda = fit(&run)?;
    let mut since_fit = 0;
    while run.t() < horizon {
        if let Some(k) = opts.dual_refresh {
            if since_fit == k {
                lambda = fit(&run)?;
                since_fit = 0;
            }
        }
        run.check_coverage();
        let scores = dual_scores(run.state.estimates(), run.state.radii(), &lambda);
        let arm = argmax_first(&scores);
        run.pull(arm, None)?;
        since_fit += 1;
    }
    let label = match opts.dual_refresh {
        Some(k) => format!("dual_heuristic_refresh{k}"),
        None => "dual_heuristic".into(),
    };
    Ok(run.finish(label))
}
