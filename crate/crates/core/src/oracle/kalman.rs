use crate::error::{Error, Result};
use crate::probkit::normal_log_pdf;
use crate::zoo::LinearGaussianSSM;

/// Mean and variance of a scalar Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub var: f64,
}

impl Gaussian {
    pub fn new(mean: f64, var: f64) -> Self {
        Gaussian { mean, var }
    }

    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        normal_log_pdf(x, self.mean, self.sd())
    }
}

/// Exact moments of the linear-Gaussian model, indexed by step `0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrace {
    /// `p(x_n | y_{1:n-1})`; the prior at step 0.
    pub predicted: Vec<Gaussian>,
    /// `p(x_n | y_{1:n})`; the prior at step 0.
    pub filtered: Vec<Gaussian>,
    /// `log p(y_n | y_{1:n-1})`, zero at step 0.
    pub log_increments: Vec<f64>,
    /// `p(x_n | y_{1:T})`.
    pub smoothed: Vec<Gaussian>,
    /// `log p(y_{1:T})`.
    pub log_z: f64,
}

/// Predict/update recursions followed by a Rauch–Tung–Striebel pass.
pub fn kalman_filter(ssm: &LinearGaussianSSM) -> Result<KalmanTrace> {
    ssm.validate()?;
    let t = ssm.horizon();
    let (vx, vy) = (ssm.sigma_x * ssm.sigma_x, ssm.sigma_y * ssm.sigma_y);
    let prior = Gaussian::new(ssm.m0, ssm.s0 * ssm.s0);
    let mut predicted = vec![prior];
    let mut filtered = vec![prior];
    let mut log_increments = vec![0.0];
    for n in 1..=t {
        let prev = filtered[n - 1];
        let p = Gaussian::new(ssm.a * prev.mean, ssm.a * ssm.a * prev.var + vx);
        let y = ssm.observations[n - 1];
        let s = ssm.c * ssm.c * p.var + vy;
        let gain = p.var * ssm.c / s;
        let f = Gaussian::new(p.mean + gain * (y - ssm.c * p.mean), (1.0 - gain * ssm.c) * p.var);
        if !(f.var > 0.0) {
            return Err(Error::Config(format!("nonpositive filtering variance at step {n}")));
        }
        log_increments.push(normal_log_pdf(y, ssm.c * p.mean, s.sqrt()));
        predicted.push(p);
        filtered.push(f);
    }
    let mut smoothed = filtered.clone();
    for k in (0..t).rev() {
        let (f, p_next, s_next) = (filtered[k], predicted[k + 1], smoothed[k + 1]);
        let j = f.var * ssm.a / p_next.var;
        smoothed[k] = Gaussian::new(
            f.mean + j * (s_next.mean - p_next.mean),
            f.var + j * j * (s_next.var - p_next.var),
        );
    }
    let log_z = log_increments.iter().sum();
    Ok(KalmanTrace { predicted, filtered, log_increments, smoothed, log_z })
}

/// `p(x_n | x_k, y_{k+1:n}) = N(α x_k + β, v)`: the filter restarted from a
/// point mass at `x_k`. The mean is affine in `x_k` and the variance does
/// not depend on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalPredictive {
    pub alpha: f64,
    pub beta: f64,
    pub var: f64,
}

impl ConditionalPredictive {
    pub fn mean(&self, x_k: f64) -> f64 {
        self.alpha * x_k + self.beta
    }
}

/// Conditional law of `x_n` given `x_k` and `y_{k+1:n}`, for `k ≤ n ≤ T`.
pub fn conditional_predictive(ssm: &LinearGaussianSSM, k: usize, n: usize) -> Result<ConditionalPredictive> {
    if k > n || n > ssm.horizon() {
        return Err(Error::InvalidInput(format!("need k <= n <= T (k={k}, n={n})")));
    }
    let (vx, vy) = (ssm.sigma_x * ssm.sigma_x, ssm.sigma_y * ssm.sigma_y);
    let (mut alpha, mut beta, mut var) = (1.0, 0.0, 0.0);
    for j in k + 1..=n {
        alpha *= ssm.a;
        beta *= ssm.a;
        var = ssm.a * ssm.a * var + vx;
        let s = ssm.c * ssm.c * var + vy;
        let gain = var * ssm.c / s;
        let shrink = 1.0 - gain * ssm.c;
        let y = ssm.observations[j - 1];
        alpha *= shrink;
        beta = shrink * beta + gain * y;
        var *= shrink;
    }
    Ok(ConditionalPredictive { alpha, beta, var })
}
