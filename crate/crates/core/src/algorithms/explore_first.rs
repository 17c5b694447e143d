use super::{Run, RunOptions};
use crate::error::{Error, Result};
use crate::instance::{BanditInstance, PolicyVector};
use crate::matrix::Matrix;
use crate::metrics::RegretTrace;
use crate::policy::{solve_p1, two_arm_optimal_x};

/// `floor(T^alpha)`, capped at `T`.
///
/// Powers that land within a relative 1e-9 of an integer are snapped to it so
/// that, for example, `1000^(2/3)` gives 100 rather than 99.
pub fn exploration_length(horizon: usize, alpha: f64) -> usize {
    let raw = (horizon as f64).powf(alpha);
    let near = raw.round();
    let len = if (raw - near).abs() <= 1e-9 * near.max(1.0) {
        near
    } else {
        raw.floor()
    };
    (len as usize).min(horizon)
}

/// Policy committed to after exploration, computed from estimates.
///
/// Two arms use the closed form; more arms solve P1 on the estimates.
/// `None` when the estimated problem has no fair policy.
fn commit_policy(a_hat: &Matrix, c: &[f64]) -> Result<Option<PolicyVector>> {
    let res = if a_hat.cols() == 2 {
        two_arm_optimal_x(a_hat, c).and_then(|x| PolicyVector::two_arm(x.clamp(0.0, 1.0)))
    } else {
        solve_p1(a_hat, c).map(|s| s.policy)
    };
    match res {
        Ok(p) => Ok(Some(p)),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Round-robin exploration for `floor(T^alpha)` rounds, then a single fixed
/// policy for the rest of the horizon. Round `t` (1-based) of exploration
/// pulls arm `t mod m`. An infeasible estimated problem falls back to the
/// uniform policy and counts one fallback event.
pub fn explore_first_run(
    inst: &BanditInstance,
    alpha: f64,
    seed: u64,
    opts: &RunOptions,
) -> Result<RegretTrace> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1]")));
    }
    let horizon = inst.horizon();
    let m = inst.arms();
    let explore = exploration_length(horizon, alpha);
    let mut run = Run::new(inst, seed, opts)?;
    for t in 1..=explore {
        run.pull(t % m, None)?;
    }
    if explore < horizon {
        let policy = match commit_policy(run.state.estimates(), inst.fairness())? {
            Some(p) => p,
            None => {
                run.fallback_events += 1;
                PolicyVector::uniform(m)
            }
        };
        for _ in explore..horizon {
            run.check_coverage();
            let arm = run.rng().categorical(policy.as_slice());
            run.pull(arm, Some(&policy))?;
        }
    }
    Ok(run.finish(format!("explore_first_{alpha}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exploration_lengths() {
        assert_eq!(exploration_length(1000, 2.0 / 3.0), 100);
        assert_eq!(exploration_length(1000, 1.0), 1000);
        assert_eq!(exploration_length(100_000, 0.5), 316);
        assert_eq!(exploration_length(100_000, 0.1), 3);
    }

    #[test]
    fn alpha_one_never_exploits() {
        let inst = BanditInstance::new(Matrix::identity(2), vec![0.5, 0.5], 50).unwrap();
        let opts = RunOptions {
            record_rounds: true,
            ..Default::default()
        };
        let tr = explore_first_run(&inst, 1.0, 3, &opts).unwrap();
        let rounds = tr.rounds.unwrap();
        for r in &rounds {
            assert_eq!(r.arm, r.t % 2);
            assert_eq!(r.policy, PolicyVector::point_mass(2, r.arm));
        }
        assert_eq!(tr.pulls, vec![25, 25]);
    }

    #[test]
    fn bad_alpha_rejected() {
        let inst = BanditInstance::new(Matrix::identity(2), vec![0.5, 0.5], 50).unwrap();
        assert!(explore_first_run(&inst, 0.0, 1, &RunOptions::default()).is_err());
        assert!(explore_first_run(&inst, 1.5, 1, &RunOptions::default()).is_err());
    }

    #[test]
    fn infeasible_estimate_falls_back_to_uniform() {
        // estimates from one pull each are degenerate 0/1 rows; C = 1 for both
        // agents of a feasible instance forces an empty estimated interval
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let inst = BanditInstance::new(a, vec![0.5, 0.5], 10).unwrap();
        let c = [1.0, 1.0];
        assert!(commit_policy(inst.means(), &c).unwrap().is_none());
    }

    #[test]
    fn three_arms_commit_to_p1_on_estimates() {
        let a = Matrix::from_rows(&[[0.9, 0.1, 0.5], [0.1, 0.9, 0.5]]).unwrap();
        let p = commit_policy(&a, &[0.3, 0.3]).unwrap().unwrap();
        assert_eq!(p, solve_p1(&a, &[0.3, 0.3]).unwrap().policy);
    }
}
