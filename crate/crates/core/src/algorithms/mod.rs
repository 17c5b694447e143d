//! Learning algorithms as seeded round loops.
//!
//! Every run starts from `RunRng::new(seed, 0)`, so two algorithms run with
//! the same seed see the same reward stream for the same sequence of pulls.
//! Regret is recorded against the instance's true means.

mod confidence;
mod dual;
mod explore_first;
mod reward_fair_ucb;

pub use confidence::ConfidenceState;
pub use dual::{dual_heuristic_run, dual_scores};
pub use explore_first::{exploration_length, explore_first_run};
pub use reward_fair_ucb::{p2_policy, reward_fair_ucb_run, ucb_exploration_length};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instance::{sample_rewards_into, BanditInstance, PolicyVector};
use crate::metrics::{Coverage, RegretRecorder, RegretTrace, RoundRecord, TraceMeta};
use crate::policy::solve_p1;
use crate::rng::RunRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    /// Keep a [`RoundRecord`] for every round.
    #[serde(default)]
    pub record_rounds: bool,
    /// Clamp confidence bounds to `[0, 1]`.
    #[serde(default)]
    pub clamp_confidence: bool,
    /// Track how often the true means lie inside the confidence box.
    #[serde(default = "yes")]
    pub track_coverage: bool,
    /// Recompute the dual multipliers every `k` exploitation rounds.
    #[serde(default)]
    pub dual_refresh: Option<usize>,
    /// Welfare of the optimal fair policy, when already known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_welfare: Option<f64>,
}

fn yes() -> bool {
    true
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            record_rounds: false,
            clamp_confidence: false,
            track_coverage: true,
            dual_refresh: None,
            optimal_welfare: None,
        }
    }
}

/// Algorithm selector used by the harness and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Algorithm {
    ExploreFirst {
        alpha: f64,
    },
    RewardFairUcb,
    DualHeuristic {
        /// Overrides [`RunOptions::dual_refresh`] for this entry.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        refresh: Option<usize>,
    },
}

impl Algorithm {
    pub fn label(&self) -> String {
        match self {
            Self::ExploreFirst { alpha } => format!("explore_first_{alpha}"),
            Self::RewardFairUcb => "reward_fair_ucb".into(),
            Self::DualHeuristic { refresh: None } => "dual_heuristic".into(),
            Self::DualHeuristic { refresh: Some(k) } => format!("dual_heuristic_refresh{k}"),
        }
    }

    pub fn run(&self, inst: &BanditInstance, seed: u64, opts: &RunOptions) -> Result<RegretTrace> {
        match *self {
            Self::ExploreFirst { alpha } => explore_first_run(inst, alpha, seed, opts),
            Self::RewardFairUcb => reward_fair_ucb_run(inst, seed, opts),
            Self::DualHeuristic { refresh: None } => dual_heuristic_run(inst, seed, opts),
            Self::DualHeuristic { refresh } => {
                let opts = RunOptions {
                    dual_refresh: refresh,
                    ..opts.clone()
                };
                dual_heuristic_run(inst, seed, &opts)
            }
        }
    }
}

/// Shared per-run state: reward stream, estimates, and regret bookkeeping.
pub(crate) struct Run<'a> {
    inst: &'a BanditInstance,
    rng: RunRng,
    pub state: ConfidenceState,
    rec: RegretRecorder<'a>,
    rounds: Option<Vec<RoundRecord>>,
    rewards: Vec<f64>,
    pull_rate_sum: f64,
    coverage: Coverage,
    track_coverage: bool,
    pub fallback_events: usize,
    last_policy: Option<PolicyVector>,
    seed: u64,
}

impl<'a> Run<'a> {
    pub fn new(inst: &'a BanditInstance, seed: u64, opts: &RunOptions) -> Result<Self> {
        let optimal = match opts.optimal_welfare {
            Some(v) => v,
            None => solve_p1(inst.means(), inst.fairness())?.welfare,
        };
        let horizon = inst.horizon();
        Ok(Self {
            inst,
            rng: RunRng::new(seed, 0),
            state: ConfidenceState::new(inst.agents(), inst.arms(), horizon, inst.sigma()),
            rec: RegretRecorder::new(inst.means(), inst.fairness(), optimal, horizon),
            rounds: opts.record_rounds.then(|| Vec::with_capacity(horizon)),
            rewards: Vec::with_capacity(inst.agents()),
            pull_rate_sum: 0.0,
            coverage: Coverage::default(),
            track_coverage: opts.track_coverage,
            fallback_events: 0,
            last_policy: None,
            seed,
        })
    }

    pub fn rng(&mut self) -> &mut RunRng {
        &mut self.rng
    }

    /// Rounds played so far.
    pub fn t(&self) -> usize {
        self.state.round()
    }

    /// Plays `arm`; regret is charged for `policy` (a point mass when `None`).
    pub fn pull(&mut self, arm: usize, policy: Option<&PolicyVector>) -> Result<()> {
        sample_rewards_into(self.inst, arm, &mut self.rng, &mut self.rewards)?;
        self.state.update(arm, &self.rewards)?;
        self.pull_rate_sum += 1.0 / (self.state.counts()[arm] as f64).sqrt();
        match policy {
            Some(p) => self.rec.record(p.as_slice()),
            None => self.rec.record_point(arm),
        }
        let t = self.state.round();
        if self.rounds.is_some() || t == self.inst.horizon() {
            let p = match policy {
                Some(p) => p.clone(),
                None => PolicyVector::point_mass(self.inst.arms(), arm),
            };
            if let Some(rounds) = self.rounds.as_mut() {
                rounds.push(RoundRecord {
                    t,
                    policy: p.clone(),
                    arm,
                    rewards: self.rewards.clone(),
                });
            }
            self.last_policy = Some(p);
        }
        Ok(())
    }

    pub fn check_coverage(&mut self) {
        if self.track_coverage {
            let cells = (self.inst.agents() * self.inst.arms()) as u64;
            self.coverage.covered += self.state.covered_cells(self.inst.means());
            self.coverage.checked += cells;
        }
    }

    pub fn finish(self, algorithm: String) -> RegretTrace {
        RegretTrace {
            meta: TraceMeta {
                algorithm,
                instance_digest: self.inst.digest(),
                seed: self.seed,
            },
            sw_cum: self.rec.sw_cum,
            fr_cum: self.rec.fr_cum,
            pulls: self.state.counts().to_vec(),
            fallback_events: self.fallback_events,
            pull_rate_sum: self.pull_rate_sum,
            coverage: self.coverage,
            final_policy: self.last_policy,
            rounds: self.rounds,
        }
    }
}
