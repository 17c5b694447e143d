//! Regret bookkeeping.
//!
//! Both regrets are measured against the ground-truth means:
//!
//! * fairness regret per round: `sum_i max(0, C_i A*_i - <A_i, p_t>)`;
//! * welfare regret per round: `SW(p*) - SW(p_t)` where `p*` solves P1.
//!   This can be negative when `p_t` trades fairness for welfare.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{max_row_rewards, social_welfare, PolicyVector};
use crate::matrix::{dot, Matrix};

pub fn fairness_regret_increment(
    a: &Matrix,
    c: &[f64],
    a_star: &[f64],
    policy: &[f64],
) -> Result<f64> {
    if c.len() != a.rows() || a_star.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            actual: if c.len() != a.rows() {
                c.len()
            } else {
                a_star.len()
            },
        });
    }
    let rewards = a.mul_vec(policy)?;
    Ok(rewards
        .iter()
        .zip(c)
        .zip(a_star)
        .map(|((r, ci), s)| (ci * s - r).max(0.0))
        .sum())
}

pub fn sw_regret_increment(a: &Matrix, optimal_policy: &[f64], policy: &[f64]) -> Result<f64> {
    Ok(social_welfare(a, optimal_policy)? - social_welfare(a, policy)?)
}

/// Least-squares slope of `ln(series[t-1])` against `ln(t)` over the last
/// `window` fraction of rounds (`t` is 1-based).
pub fn loglog_slope(series: &[f64], window: f64) -> Result<f64> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::Config(format!("window {window} outside (0, 1]")));
    }
    let len = series.len();
    let start = ((1.0 - window) * len as f64).floor() as usize;
    let pts = &series[start..];
    if pts.len() < 2 {
        return Err(Error::Config(
            "need at least two points to fit a slope".into(),
        ));
    }
    if let Some((k, v)) = pts
        .iter()
        .enumerate()
        .find(|(_, v)| v.is_nan() || **v <= 0.0)
    {
        return Err(Error::NumericalFailure(format!(
            "log-log slope undefined: value {v} at t={}",
            start + k + 1
        )));
    }
    let n = pts.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (k, v) in pts.iter().enumerate() {
        sx += ((start + k + 1) as f64).ln();
        sy += v.ln();
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, v) in pts.iter().enumerate() {
        let dx = ((start + k + 1) as f64).ln() - mx;
        sxy += dx * (v.ln() - my);
        sxx += dx * dx;
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub policy: PolicyVector,
    pub arm: usize,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct Coverage {
    pub covered: u64,
    pub checked: u64,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.covered as f64 / self.checked as f64
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TraceMeta {
    pub algorithm: String,
    pub instance_digest: String,
    pub seed: u64,
}

/// Everything recorded about one run.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RegretTrace {
    pub meta: TraceMeta,
    /// Cumulative welfare regret after rounds `1..=t`.
    pub sw_cum: Vec<f64>,
    /// Cumulative fairness regret after rounds `1..=t`.
    pub fr_cum: Vec<f64>,
    /// Final pull count per arm.
    pub pulls: Vec<usize>,
    pub fallback_events: usize,
    /// `sum_t 1/sqrt(N_{j_t})` with the count taken after the pull at `t`.
    pub pull_rate_sum: f64,
    /// How often `lcb <= A <= ucb` held over exploitation rounds.
    pub coverage: Coverage,
    /// Policy used in the final round.
    pub final_policy: Option<PolicyVector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<Vec<RoundRecord>>,
}

impl RegretTrace {
    pub fn horizon(&self) -> usize {
        self.sw_cum.len()
    }

    pub fn final_sw(&self) -> f64 {
        self.sw_cum.last().copied().unwrap_or(0.0)
    }

    pub fn final_fr(&self) -> f64 {
        self.fr_cum.last().copied().unwrap_or(0.0)
    }

    pub fn normalized_sw(&self) -> f64 {
        self.final_sw() / self.horizon().max(1) as f64
    }

    pub fn normalized_fr(&self) -> f64 {
        self.final_fr() / self.horizon().max(1) as f64
    }

    /// `t, sw_cum, fr_cum` rows with full precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,sw_cum,fr_cum")?;
        for (k, (s, f)) in self.sw_cum.iter().zip(&self.fr_cum).enumerate() {
            writeln!(w, "{},{:e},{:e}", k + 1, s, f)?;
        }
        Ok(())
    }
}

/// Accumulates per-round regret for a fixed ground truth.
pub(crate) struct RegretRecorder<'a> {
    a: &'a Matrix,
    colsums: Vec<f64>,
    targets: Vec<f64>,
    optimal_sw: f64,
    // fairness increment of each point-mass policy
    point_fr: Vec<f64>,
    sw: f64,
    fr: f64,
    pub sw_cum: Vec<f64>,
    pub fr_cum: Vec<f64>,
}

impl<'a> RegretRecorder<'a> {
    pub fn new(a: &'a Matrix, c: &[f64], optimal_sw: f64, horizon: usize) -> Self {
        let targets: Vec<f64> = max_row_rewards(a)
            .iter()
            .zip(c)
            .map(|(s, ci)| ci * s)
            .collect();
        let point_fr = (0..a.cols())
            .map(|j| {
                a.iter_rows()
                    .zip(&targets)
                    .map(|(row, h)| (h - row[j]).max(0.0))
                    .sum()
            })
            .collect();
        Self {
            a,
            colsums: a.column_sums(),
            targets,
            optimal_sw,
            point_fr,
            sw: 0.0,
            fr: 0.0,
            sw_cum: Vec::with_capacity(horizon),
            fr_cum: Vec::with_capacity(horizon),
        }
    }

    pub fn record_point(&mut self, arm: usize) {
        self.push(self.optimal_sw - self.colsums[arm], self.point_fr[arm]);
    }

    pub fn record(&mut self, policy: &[f64]) {
        let fr = self
            .a
            .iter_rows()
            .zip(&self.targets)
            .map(|(row, h)| (h - dot(row, policy)).max(0.0))
            .sum();
        self.push(self.optimal_sw - dot(&self.colsums, policy), fr);
    }

    fn push(&mut self, dsw: f64, dfr: f64) {
        self.sw += dsw;
        self.fr += dfr;
        self.sw_cum.push(self.sw);
        self.fr_cum.push(self.fr);
    }
}
