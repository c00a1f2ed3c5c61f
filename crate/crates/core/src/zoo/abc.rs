//! Likelihood-free SMC as a marginal model.
//!
//! The state is `(θ, y)` with `y` a pseudo-observation. Densities are taken
//! with respect to `dθ · p(dy | θ)`, so the simulator's density is the unit
//! function and never needs evaluating: `K_n` has density `p(θ)`, `M_n` has
//! density `q_n(θ | θ')`, and the potential is the data kernel
//! `π_ε(y_obs | y)`. The marginal weight is then
//! `log π_ε(y_obs | y) + log p(θ) − log Σ_i W_i q_n(θ | θ_i)`.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{
    gaussian_mixture_log_density, mixture_lse, DensityKernel, MarginalModel, MixtureWeights, ModelStep, ModelStructure,
    Potential,
};
use crate::probkit::normal_log_pdf;

/// `(θ, y)`.
pub type AbcState = [f64; 2];

/// Draws pseudo-data given a parameter. There is deliberately no density.
pub trait Simulator: Send + Sync {
    fn simulate(&self, theta: f64, rng: &mut ChaCha8Rng) -> f64;
}

/// `y = θ + N(0, σ²)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianSimulator {
    pub noise_sd: f64,
}

impl Simulator for GaussianSimulator {
    fn simulate(&self, theta: f64, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        theta + self.noise_sd * z
    }
}

/// Same law as [`GaussianSimulator`] built from two half-variance draws.
#[derive(Debug, Clone, Copy)]
pub struct SplitGaussianSimulator {
    pub noise_sd: f64,
}

impl Simulator for SplitGaussianSimulator {
    fn simulate(&self, theta: f64, rng: &mut ChaCha8Rng) -> f64 {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        theta + self.noise_sd * std::f64::consts::FRAC_1_SQRT_2 * (a + b)
    }
}

/// How `θ` moves between stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AbcProposal {
    /// Gaussian random walk `θ ~ N(θ', sd²)`.
    RandomWalk { sd: f64 },
    /// Fresh draws from the prior, ignoring `θ'`.
    Prior,
}

/// A Gaussian-prior likelihood-free problem.
#[derive(Clone)]
pub struct AbcProblem {
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub simulator: Arc<dyn Simulator>,
    /// Strictly decreasing tolerances `ε_0 > ε_1 > …`.
    pub schedule: Vec<f64>,
    pub proposal: AbcProposal,
    pub y_obs: f64,
}

impl AbcProblem {
    /// Prior `N(0, 1)`, `y | θ ~ N(θ, 1)`, `ε_n = 2·0.75ⁿ` for ten stages.
    pub fn gaussian_toy(y_obs: f64) -> Self {
        AbcProblem {
            prior_mean: 0.0,
            prior_sd: 1.0,
            simulator: Arc::new(GaussianSimulator { noise_sd: 1.0 }),
            schedule: geometric_schedule(2.0, 0.75, 10),
            proposal: AbcProposal::RandomWalk { sd: 0.5 },
            y_obs,
        }
    }

    /// Mean and variance of `θ` under the tolerance-`ε` pseudo-posterior of
    /// the Gaussian toy: `N(y/(2+ε²), (1+ε²)/(2+ε²))`.
    pub fn toy_pseudo_posterior(y_obs: f64, eps: f64) -> (f64, f64) {
        let e2 = eps * eps;
        (y_obs / (2.0 + e2), (1.0 + e2) / (2.0 + e2))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::Config("tolerance schedule is empty".into()));
        }
        if self.schedule.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("tolerance schedule must strictly decrease".into()));
        }
        if !(self.prior_sd > 0.0) {
            return Err(Error::Config("prior scale must be positive".into()));
        }
        if let AbcProposal::RandomWalk { sd } = self.proposal {
            if !(sd > 0.0) {
                return Err(Error::Config("random-walk scale must be positive".into()));
            }
        }
        Ok(())
    }
}

/// `ε_n = start · ratioⁿ`, `n = 0..len`.
pub fn geometric_schedule(start: f64, ratio: f64, len: usize) -> Vec<f64> {
    (0..len).map(|n| start * ratio.powi(n as i32)).collect()
}

/// Draws `θ` from the prior (or a random walk) and then `y` from the
/// simulator; the density covers `θ` only.
struct ThetaThenSimulate {
    prior_mean: f64,
    prior_sd: f64,
    walk_sd: Option<f64>,
    simulator: Arc<dyn Simulator>,
}

impl DensityKernel<AbcState> for ThetaThenSimulate {
    fn log_density(&self, prev: &AbcState, x: &AbcState) -> f64 {
        match self.walk_sd {
            Some(sd) => normal_log_pdf(x[0], prev[0], sd),
            None => normal_log_pdf(x[0], self.prior_mean, self.prior_sd),
        }
    }

    fn sample(&self, prev: &AbcState, rng: &mut ChaCha8Rng) -> AbcState {
        let z: f64 = rng.sample(StandardNormal);
        let theta = match self.walk_sd {
            Some(sd) => prev[0] + sd * z,
            None => self.prior_mean + self.prior_sd * z,
        };
        [theta, self.simulator.simulate(theta, rng)]
    }

    fn log_density_batch(&self, prevs: &[AbcState], x: &AbcState, out: &mut [f64]) {
        match self.walk_sd {
            Some(sd) => {
                const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
                let inv = 1.0 / sd;
                let c0 = -sd.ln() - HALF_LN_2PI;
                for (o, p) in out.iter_mut().zip(prevs) {
                    let z = (x[0] - p[0]) * inv;
                    *o = c0 - 0.5 * z * z;
                }
            }
            None => out.fill(normal_log_pdf(x[0], self.prior_mean, self.prior_sd)),
        }
    }

    fn log_mixture_density(
        &self,
        prevs: &[AbcState],
        mix: &MixtureWeights,
        x: &AbcState,
        scratch: &mut [f64],
    ) -> Result<f64> {
        if let Some(sd) = self.walk_sd {
            if let Some(v) = gaussian_mixture_log_density(prevs, mix, |p| p[0], x[0], 1.0, 0.0, sd) {
                return Ok(v);
            }
        }
        self.log_density_batch(prevs, x, scratch);
        for (t, lw) in scratch.iter_mut().zip(&mix.log_w) {
            *t += lw;
        }
        mixture_lse(scratch)
    }
}

/// Gaussian data kernel `π_ε(y_obs | y) = N(y_obs; y, ε²)`.
struct DataKernel {
    y_obs: f64,
    eps: f64,
}

impl Potential<AbcState> for DataKernel {
    fn log_value(&self, _prev: &AbcState, x: &AbcState) -> f64 {
        normal_log_pdf(self.y_obs, x[1], self.eps)
    }

    fn log_upper_bound(&self) -> Option<f64> {
        Some(normal_log_pdf(0.0, 0.0, self.eps))
    }
}

pub fn make_abc(problem: &AbcProblem) -> Result<MarginalModel<AbcState>> {
    problem.validate()?;
    let prior = Arc::new(ThetaThenSimulate {
        prior_mean: problem.prior_mean,
        prior_sd: problem.prior_sd,
        walk_sd: None,
        simulator: Arc::clone(&problem.simulator),
    });
    let moves: Arc<ThetaThenSimulate> = match problem.proposal {
        AbcProposal::Prior => Arc::clone(&prior),
        AbcProposal::RandomWalk { sd } => Arc::new(ThetaThenSimulate {
            walk_sd: Some(sd),
            prior_mean: problem.prior_mean,
            prior_sd: problem.prior_sd,
            simulator: Arc::clone(&problem.simulator),
        }),
    };
    let steps = problem
        .schedule
        .iter()
        .enumerate()
        .map(|(n, &eps)| {
            let proposal: Arc<ThetaThenSimulate> = if n == 0 { Arc::clone(&prior) } else { Arc::clone(&moves) };
            let is_kernel = Arc::ptr_eq(&proposal, &prior);
            ModelStep {
                proposal: proposal as Arc<dyn DensityKernel<AbcState>>,
                kernel: Arc::clone(&prior) as Arc<dyn DensityKernel<AbcState>>,
                potential: Arc::new(DataKernel { y_obs: problem.y_obs, eps }) as Arc<dyn Potential<AbcState>>,
                structure: ModelStructure {
                    potential_prev_free: true,
                    proposal_prev_free: is_kernel,
                    kernel_prev_free: true,
                    proposal_is_kernel: is_kernel,
                },
            }
        })
        .collect();
    MarginalModel::new(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_matches_geometric_rule() {
        let s = geometric_schedule(2.0, 0.75, 10);
        assert_eq!(s.len(), 10);
        assert_eq!(s[0], 2.0);
        assert!((s[9] - 2.0 * 0.75f64.powi(9)).abs() < 1e-15);
    }

    #[test]
    fn rejects_nondecreasing_schedule() {
        let mut p = AbcProblem::gaussian_toy(0.0);
        p.schedule = vec![1.0, 1.0];
        assert!(make_abc(&p).is_err());
        p.schedule = vec![];
        assert!(make_abc(&p).is_err());
    }

    #[test]
    fn pseudo_posterior_flattens_for_large_tolerance() {
        let (m, v) = AbcProblem::toy_pseudo_posterior(1.0, 1e6);
        assert!(m.abs() < 1e-11 && (v - 1.0).abs() < 1e-11);
        let (m, v) = AbcProblem::toy_pseudo_posterior(1.0, 0.0);
        assert_eq!((m, v), (0.5, 0.5));
    }
}
