use super::{Run, RunOptions};
use crate::error::{Error, Result};
use crate::instance::{max_row_rewards, BanditInstance, PolicyVector};
use crate::lp::{solve_lp, LpStatus};
use crate::matrix::Matrix;
use crate::metrics::RegretTrace;
use crate::policy::{build_max_min_slack, build_p2};

/// `m * ceil(sqrt(T))`, capped at `T`.
pub fn ucb_exploration_length(horizon: usize, arms: usize) -> usize {
    let per_arm = (horizon as f64).sqrt().ceil() as usize;
    // exact integer ceiling guard against sqrt rounding
    let per_arm = if (per_arm - 1) * (per_arm - 1) >= horizon {
        per_arm - 1
    } else {
        per_arm
    };
    (arms * per_arm).min(horizon)
}

/// Solves P2 for the given bounds.
///
/// When P2 is infeasible the policy maximising the smallest constraint slack
/// `ucb_i . p - C_i max_j lcb_ij` is returned instead, and the flag is set.
pub fn p2_policy(a_ucb: &Matrix, a_lcb: &Matrix, c: &[f64]) -> Result<(PolicyVector, bool)> {
    let lp = build_p2(a_ucb, a_lcb, c)?;
    let sol = solve_lp(&lp)?;
    match (sol.status, sol.x) {
        (LpStatus::Optimal, Some(x)) => Ok((PolicyVector::from_solver(x)?, false)),
        (LpStatus::Infeasible, _) => {
            let h: Vec<f64> = max_row_rewards(a_lcb)
                .iter()
                .zip(c)
                .map(|(s, ci)| ci * s)
                .collect();
            let fb = solve_lp(&build_max_min_slack(a_ucb, &h)?)?;
            match fb.x {
                Some(mut x) => {
                    x.truncate(a_ucb.cols());
                    Ok((PolicyVector::from_solver(x)?, true))
                }
                None => Err(Error::NumericalFailure(format!(
                    "max-min-slack fallback ended with status {:?}",
                    fb.status
                ))),
            }
        }
        (status, _) => Err(Error::NumericalFailure(format!(
            "P2 solve ended with status {status:?}"
        ))),
    }
}

/// Round-robin exploration for `m * ceil(sqrt(T))` rounds, then every round
/// solves P2 on the current confidence bounds and samples an arm from it.
pub fn reward_fair_ucb_run(
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
    let explore = ucb_exploration_length(horizon, m);
    let mut run = Run::new(inst, seed, opts)?;
    for t in 1..=explore {
        run.pull(t % m, None)?;
    }
    while run.t() < horizon {
        run.check_coverage();
        let (ucb, lcb) = run.state.ucb_lcb(opts.clamp_confidence)?;
        let (policy, fallback) = p2_policy(&ucb, &lcb, inst.fairness())?;
        if fallback {
            run.fallback_events += 1;
        }
        let arm = run.rng().categorical(policy.as_slice());
        run.pull(arm, Some(&policy))?;
    }
    Ok(run.finish("reward_fair_ucb".into()))
}
