//! Ground-truth bandit instances, policies, and per-round welfare arithmetic.
//!
//! An instance pairs an `n x m` mean-reward matrix (agents as rows, arms as
//! columns) with per-agent fairness fractions and a horizon. A policy is a
//! distribution over arms; agent `i` expects `<A_i, p>` under policy `p`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::rng::RunRng;

/// Sum-to-one tolerance accepted as-is.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Largest sum-to-one defect that is repaired by renormalisation.
pub const RENORMALIZE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    /// `X_ij ~ Bernoulli(A_ij)`.
    #[default]
    Bernoulli,
    /// `X_ij = clip(A_ij + sigma * Z, 0, 1)` with `Z` standard normal.
    ///
    /// Clipping moves the realised mean towards the interior for cells near
    /// 0 or 1; `A_ij` is the location parameter of the draw.
    Gaussian,
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(Self::Bernoulli),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::InvalidInstance(format!(
                "unknown noise model {other:?}"
            ))),
        }
    }
}

fn default_sigma() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceRepr {
    #[serde(rename = "A")]
    a: Matrix,
    #[serde(rename = "C")]
    c: Vec<f64>,
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(default)]
    noise: NoiseModel,
    #[serde(default = "default_sigma")]
    sigma: f64,
}

/// A fair MA-MAB instance. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRepr", into = "InstanceRepr")]
pub struct BanditInstance {
    a: Matrix,
    c: Vec<f64>,
    horizon: usize,
    noise: NoiseModel,
    sigma: f64,
}

impl TryFrom<InstanceRepr> for BanditInstance {
    type Error = Error;

    fn try_from(r: InstanceRepr) -> Result<Self> {
        Self::with_noise(r.a, r.c, r.horizon, r.noise, r.sigma)
    }
}

impl From<BanditInstance> for InstanceRepr {
    fn from(b: BanditInstance) -> Self {
        Self {
            a: b.a,
            c: b.c,
            horizon: b.horizon,
            noise: b.noise,
            sigma: b.sigma,
        }
    }
}

impl BanditInstance {
    /// Bernoulli instance with the default sub-Gaussian parameter 1/2.
    pub fn new(a: Matrix, c: Vec<f64>, horizon: usize) -> Result<Self> {
        Self::with_noise(a, c, horizon, NoiseModel::Bernoulli, 0.5)
    }

    pub fn with_noise(
        a: Matrix,
        c: Vec<f64>,
        horizon: usize,
        noise: NoiseModel,
        sigma: f64,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidInstance(msg));
        if a.rows() == 0 {
            return invalid("need at least one agent".into());
        }
        if a.cols() < 2 {
            return invalid(format!("need at least two arms, got {}", a.cols()));
        }
        if let Some(v) = a.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return invalid(format!("mean reward {v} outside [0, 1]"));
        }
        if c.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                actual: c.len(),
            });
        }
        if let Some(v) = c.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return invalid(format!("fairness fraction {v} outside [0, 1]"));
        }
        if horizon == 0 {
            return invalid("horizon must be positive".into());
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return invalid(format!("sigma {sigma} must be finite and nonnegative"));
        }
        if noise == NoiseModel::Bernoulli && sigma != 0.5 {
            return invalid(format!(
                "Bernoulli rewards are 1/2-sub-Gaussian, got sigma {sigma}"
            ));
        }
        Ok(Self {
            a,
            c,
            horizon,
            noise,
            sigma,
        })
    }

    pub fn means(&self) -> &Matrix {
        &self.a
    }

    pub fn fairness(&self) -> &[f64] {
        &self.c
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn agents(&self) -> usize {
        self.a.rows()
    }

    pub fn arms(&self) -> usize {
        self.a.cols()
    }

    /// Same instance with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::with_noise(
            self.a.clone(),
            self.c.clone(),
            horizon,
            self.noise,
            self.sigma,
        )
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("instance serialises");
        hex::encode(Sha256::digest(&json))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialises")
    }
}

/// A probability distribution over arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyVector(Vec<f64>);

impl PolicyVector {
    /// Validates a probability vector: entries nonnegative, sum within
    /// [`SIMPLEX_TOL`] of one.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidPolicy("empty policy".into()));
        }
        if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidPolicy(format!(
                "entry {v} is not a probability"
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidPolicy(format!("entries sum to {sum}")));
        }
        Ok(Self(p))
    }

    /// Accepts a near-probability vector coming out of a numerical solver.
    ///
    /// Entries in `[-SIMPLEX_TOL, 0)` are zeroed. A sum off by more than
    /// [`SIMPLEX_TOL`] but at most [`RENORMALIZE_TOL`] is renormalised;
    /// anything further off is rejected.
    pub fn from_solver(mut p: Vec<f64>) -> Result<Self> {
        for v in p.iter_mut() {
            if *v < 0.0 && *v >= -SIMPLEX_TOL {
                *v = 0.0;
            }
        }
        let sum: f64 = p.iter().sum();
        let defect = (sum - 1.0).abs();
        if defect > SIMPLEX_TOL && defect <= RENORMALIZE_TOL {
            p.iter_mut().for_each(|v| *v /= sum);
        }
        Self::new(p)
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn point_mass(m: usize, arm: usize) -> Self {
        let mut p = vec![0.0; m];
        p[arm] = 1.0;
        Self(p)
    }

    /// Two-arm policy `[x, 1 - x]`.
    pub fn two_arm(x: f64) -> Result<Self> {
        Self::new(vec![x, 1.0 - x])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for PolicyVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Realised per-agent rewards of one pull.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardVector(pub Vec<f64>);

impl RewardVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Per-agent best achievable mean reward, `A*_i = max_j A_ij`.
pub fn max_row_rewards(a: &Matrix) -> Vec<f64> {
    a.iter_rows()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Index of the largest entry, least index on ties.
pub fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = j;
        }
    }
    best
}

fn check_policy_len(a: &Matrix, p: &[f64]) -> Result<()> {
    if p.len() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            actual: p.len(),
        });
    }
    Ok(())
}

/// `sum_i <A_i, p>`.
pub fn social_welfare(a: &Matrix, p: &[f64]) -> Result<f64> {
    check_policy_len(a, p)?;
    Ok(dot(&a.column_sums(), p))
}

/// Entry `i` is `<A_i, p>`.
pub fn expected_agent_rewards(a: &Matrix, p: &[f64]) -> Result<Vec<f64>> {
    check_policy_len(a, p)?;
    a.mul_vec(p)
}

/// Draws one reward per agent for a pull of `arm`.
pub fn sample_rewards(inst: &BanditInstance, arm: usize, rng: &mut RunRng) -> Result<RewardVector> {
    let mut out = Vec::with_capacity(inst.agents());
    sample_rewards_into(inst, arm, rng, &mut out)?;
    Ok(RewardVector(out))
}

/// Allocation-free variant of [`sample_rewards`] for the round loops.
pub(crate) fn sample_rewards_into(
    inst: &BanditInstance,
    arm: usize,
    rng: &mut RunRng,
    out: &mut Vec<f64>,
) -> Result<()> {
    if arm >= inst.arms() {
        return Err(Error::ArmOutOfRange {
            arm,
            arms: inst.arms(),
        });
    }
    out.clear();
    for i in 0..inst.agents() {
        let mu = inst.a[(i, arm)];
        let x = match inst.noise {
            NoiseModel::Bernoulli => {
                if rng.bernoulli(mu) {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseModel::Gaussian => (mu + inst.sigma * rng.standard_normal()).clamp(0.0, 1.0),
        };
        out.push(x);
    }
    Ok(())
}
