use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Running estimates for one run: empirical means, pull counts, and
/// confidence radii `sigma * sqrt(2 ln(8 m n T) / N_j)`.
///
/// The radius depends only on the arm, so it is stored once per column.
#[derive(Debug, Clone)]
pub struct ConfidenceState {
    a_hat: Matrix,
    counts: Vec<usize>,
    radius: Vec<f64>,
    t: usize,
    sigma: f64,
    log_term: f64,
}

impl ConfidenceState {
    pub fn new(agents: usize, arms: usize, horizon: usize, sigma: f64) -> Self {
        let log_term = 2.0 * (8.0 * arms as f64 * agents as f64 * horizon as f64).ln();
        Self {
            a_hat: Matrix::zeros(agents, arms),
            counts: vec![0; arms],
            radius: vec![f64::INFINITY; arms],
            t: 0,
            sigma,
            log_term,
        }
    }

    /// Folds one observation of `arm` into the running means.
    pub fn update(&mut self, arm: usize, rewards: &[f64]) -> Result<()> {
        if arm >= self.counts.len() {
            return Err(Error::ArmOutOfRange {
                arm,
                arms: self.counts.len(),
            });
        }
        if rewards.len() != self.a_hat.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.a_hat.rows(),
                actual: rewards.len(),
            });
        }
        let prev = self.counts[arm] as f64;
        let n = prev + 1.0;
        for (i, &x) in rewards.iter().enumerate() {
            let v = &mut self.a_hat[(i, arm)];
            *v = (prev * *v + x) / n;
        }
        self.counts[arm] += 1;
        self.radius[arm] = self.radius_for(self.counts[arm]);
        self.t += 1;
        Ok(())
    }

    fn radius_for(&self, count: usize) -> f64 {
        self.sigma * (self.log_term / count as f64).sqrt()
    }

    pub fn estimates(&self) -> &Matrix {
        &self.a_hat
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Radius of each arm; infinite for arms never pulled.
    pub fn radii(&self) -> &[f64] {
        &self.radius
    }

    /// Radii broadcast to an `n x m` matrix (constant down each column).
    pub fn radius_matrix(&self) -> Matrix {
        Matrix::from_fn(self.a_hat.rows(), self.a_hat.cols(), |_, j| self.radius[j])
    }

    pub fn round(&self) -> usize {
        self.t
    }

    /// Entrywise `A_hat + eps` and `A_hat - eps`, optionally clamped to `[0, 1]`.
    pub fn ucb_lcb(&self, clamp: bool) -> Result<(Matrix, Matrix)> {
        if let Some(j) = self.counts.iter().position(|&c| c == 0) {
            return Err(Error::UnexploredArm(j));
        }
        let f = |sign: f64| {
            Matrix::from_fn(self.a_hat.rows(), self.a_hat.cols(), |i, j| {
                let v = self.a_hat[(i, j)] + sign * self.radius[j];
                if clamp {
                    v.clamp(0.0, 1.0)
                } else {
                    v
                }
            })
        };
        Ok((f(1.0), f(-1.0)))
    }

    /// Number of cells with `|A_hat - A| <= eps`, out of `n * m`.
    pub fn covered_cells(&self, truth: &Matrix) -> u64 {
        let mut covered = 0;
        for i in 0..truth.rows() {
            for j in 0..truth.cols() {
                if (self.a_hat[(i, j)] - truth[(i, j)]).abs() <= self.radius[j] {
                    covered += 1;
                }
            }
        }
        covered
    }

    #[cfg(test)]
    pub(crate) fn from_parts(
        a_hat: Matrix,
        counts: Vec<usize>,
        horizon: usize,
        sigma: f64,
    ) -> Self {
        let mut s = Self::new(a_hat.rows(), a_hat.cols(), horizon, sigma);
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                s.radius[j] = s.radius_for(c);
            }
        }
        s.t = counts.iter().sum();
        s.counts = counts;
        s.a_hat = a_hat;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{sample_rewards, BanditInstance};
    use crate::rng::RunRng;

    #[test]
    fn first_observation_becomes_mean() {
        let mut s = ConfidenceState::new(2, 2, 100, 0.5);
        s.update(1, &[0.0, 1.0]).unwrap();
        assert_eq!(s.estimates().row(0), &[0.0, 0.0]);
        assert_eq!(s.estimates().row(1), &[0.0, 1.0]);
        assert_eq!(s.counts(), &[0, 1]);
        assert!(s.radii()[0].is_infinite());
    }

    #[test]
    fn running_mean() {
        let mut s = ConfidenceState::new(1, 2, 100, 0.5);
        s.update(0, &[0.0]).unwrap();
        s.update(0, &[1.0]).unwrap();
        assert_eq!(s.estimates()[(0, 0)], 0.5);
        assert_eq!(s.round(), 2);
    }

    #[test]
    fn bad_updates_rejected() {
        let mut s = ConfidenceState::new(2, 2, 100, 0.5);
        assert!(s.update(2, &[0.0, 0.0]).is_err());
        assert!(s.update(0, &[0.0]).is_err());
    }

    #[test]
    fn radius_formula() {
        // T = 10^4, m = n = 2, sigma = 1/2, N = 100
        let s = ConfidenceState::from_parts(Matrix::zeros(2, 2), vec![100, 100], 10_000, 0.5);
        let expected = 0.5 * (2.0 * 320_000f64.ln() / 100.0).sqrt();
        assert!((s.radii()[0] - expected).abs() < 1e-15);
        assert!((s.radii()[0] - 0.2518).abs() < 5e-5);
        let rm = s.radius_matrix();
        assert_eq!(rm[(0, 1)], rm[(1, 1)]);
    }

    #[test]
    fn ucb_lcb_arithmetic() {
        let mut s = ConfidenceState::from_parts(Matrix::filled(1, 2, 0.5), vec![4, 4], 10, 0.5);
        s.radius = vec![0.2, 0.2];
        let (u, l) = s.ucb_lcb(false).unwrap();
        assert!((u[(0, 0)] - 0.7).abs() < 1e-15 && (l[(0, 0)] - 0.3).abs() < 1e-15);
        s.radius = vec![0.0, 0.0];
        let (u, l) = s.ucb_lcb(false).unwrap();
        assert_eq!(u, *s.estimates());
        assert_eq!(l, *s.estimates());
    }

    #[test]
    fn clamping_is_optional() {
        let s = ConfidenceState::from_parts(Matrix::filled(1, 2, 0.9), vec![1, 1], 100, 0.5);
        let (u, l) = s.ucb_lcb(false).unwrap();
        assert!(u[(0, 0)] > 1.0 && l[(0, 0)] < 0.0);
        let (u, l) = s.ucb_lcb(true).unwrap();
        assert_eq!(u[(0, 0)], 1.0);
        assert_eq!(l[(0, 0)], 0.0);
    }

    #[test]
    fn unexplored_arm_is_an_error() {
        let s = ConfidenceState::new(1, 3, 10, 0.5);
        assert!(matches!(s.ucb_lcb(false), Err(Error::UnexploredArm(0))));
    }

    #[test]
    fn simulated_estimate_within_radius() {
        let a = Matrix::from_rows(&[[0.3, 0.6]]).unwrap();
        let inst = BanditInstance::new(a, vec![0.0], 10_000).unwrap();
        let mut rng = RunRng::new(2024, 0);
        let mut s = ConfidenceState::new(1, 2, inst.horizon(), inst.sigma());
        for _ in 0..100 {
            let r = sample_rewards(&inst, 0, &mut rng).unwrap();
            s.update(0, r.as_slice()).unwrap();
        }
        assert!((s.estimates()[(0, 0)] - 0.3).abs() <= s.radii()[0]);
    }
}
