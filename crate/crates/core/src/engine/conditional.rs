use rayon::prelude::*;

use super::resample::multinomial_resample;
use super::weights::compute_marginal_log_weights;
use crate::error::{Error, Result};
use crate::model::{MarginalModel, ParticleCloud};
use crate::probkit::{normalize_log_weights, trapezoid_integrate, Grid1D, SeededStream};

/// Monte Carlo and quadrature sides of the one-step conditional mean
/// `E[η_n^N(G_n^N φ) | past] = Σ_i W_i ∫ k_n(X_i, x) U_n(X_i, x) φ(x) dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalExpectation {
    pub mc_mean: f64,
    pub mc_se: f64,
    pub exact: f64,
    pub replicates: usize,
}

impl ConditionalExpectation {
    /// `|mc − exact| / se`; zero when both sides agree exactly.
    pub fn z_score(&self) -> f64 {
        let d = (self.mc_mean - self.exact).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.mc_se
        }
    }
}

/// Freezes `fixed_prev` (the weighted cloud of step `n − 1`) and repeats
/// resample, mutate and weight `replicates` times. The exact side is a
/// trapezoid integral over `grid`.
pub fn check_conditional_expectation(
    fixed_prev: &ParticleCloud<f64>,
    model: &MarginalModel<f64>,
    n: usize,
    phi: &(dyn Fn(f64) -> f64 + Sync),
    replicates: usize,
    stream: SeededStream,
    grid: &Grid1D,
) -> Result<ConditionalExpectation> {
    if n == 0 {
        return Err(Error::InvalidInput("the conditional identity needs n >= 1".into()));
    }
    if replicates < 2 {
        return Err(Error::InvalidInput("need at least two replicates".into()));
    }
    let st = model.step(n)?;
    let (w, _) = normalize_log_weights(&fixed_prev.log_weights)?;
    let np = fixed_prev.len();

    let draws: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let lane = stream.substream(r as u64);
            let out = multinomial_resample(&w, lane.substream(u64::MAX))?;
            let xs: Vec<f64> = out
                .ancestors
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    st.proposal
                        .sample(&fixed_prev.positions[a], &mut lane.substream(i as u64).rng())
                })
                .collect();
            let lg = compute_marginal_log_weights(fixed_prev, &xs, model, n, 64)?;
            Ok(lg.iter().zip(&xs).map(|(l, x)| l.exp() * phi(*x)).sum::<f64>() / np as f64)
        })
        .collect::<Result<_>>()?;

    let r = replicates as f64;
    let mean = draws.iter().sum::<f64>() / r;
    let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (r - 1.0);

    let pts = grid.points();
    let phis: Vec<f64> = pts.iter().map(|&x| phi(x)).collect();
    let mut exact = 0.0;
    let mut row = vec![0.0; pts.len()];
    for (wi, xi) in w.iter().zip(&fixed_prev.positions) {
        if *wi == 0.0 {
            continue;
        }
        for ((r, x), f) in row.iter_mut().zip(pts).zip(&phis) {
            *r = (st.kernel.log_density(xi, x) + st.potential.log_value(xi, x)).exp() * f;
        }
        exact += wi * trapezoid_integrate(&row, grid)?;
    }

    Ok(ConditionalExpectation {
        mc_mean: mean,
        mc_se: (var / r).sqrt(),
        exact,
        replicates,
    })
}
