//! Variance integrals specialized to the linear-Gaussian model.
//!
//! Every density here is a Kalman quantity: smoothed laws `p(x_k | y_{1:n})`
//! from the model cut at `n`, filtering laws, and the conditional mean
//! `h_k(x_k) = E[φ(x_n) | x_k, y_{k+1:n}] − φ̄_n` from a filter restarted at
//! a point mass. Only one- and two-dimensional quadratures remain.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::TestFunction;
use crate::oracle::{conditional_predictive, grid_flow, kalman_filter, Gaussian, KalmanTrace};
use crate::probkit::{normal_log_pdf, trapezoid_integrate, Grid1D};
use crate::zoo::{make_mapf, AuxApprox, LinearGaussianKernel, LinearGaussianSSM, ProposalChoice};

use super::gamma::closed_form_variance;

const Z_POINTS: usize = 241;
const Z_SPAN: f64 = 10.0;

/// `E[f(X)]` for `X ~ N(mean, var)`, by trapezoid in the standardized
/// variable; exact to rounding for smooth `f` of moderate growth.
pub fn gaussian_expect(f: &dyn Fn(f64) -> f64, mean: f64, var: f64) -> f64 {
    if var == 0.0 {
        return f(mean);
    }
    let sd = var.sqrt();
    let h = 2.0 * Z_SPAN / (Z_POINTS - 1) as f64;
    let mut s = 0.0;
    for i in 0..Z_POINTS {
        let z = -Z_SPAN + i as f64 * h;
        let w = if i == 0 || i == Z_POINTS - 1 { 0.5 } else { 1.0 };
        s += w * f(mean + sd * z) * (-0.5 * z * z).exp();
    }
    s * h / (2.0 * std::f64::consts::PI).sqrt()
}

/// Pre- and post-resampling variances at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepVariance {
    pub vbar: f64,
    pub v: f64,
}

struct Setup {
    ssm: LinearGaussianSSM,
    full: KalmanTrace,
    smoothed: Vec<Gaussian>,
    phi_bar: f64,
    phi_var: f64,
}

fn setup(ssm: &LinearGaussianSSM, phi: TestFunction, n: usize) -> Result<Setup> {
    let cut = ssm.truncated(n)?;
    let full = kalman_filter(&cut)?;
    let f_n = full.filtered[n];
    let phi_bar = gaussian_expect(&|x| phi.eval(x), f_n.mean, f_n.var);
    let phi_var = gaussian_expect(&|x| (phi.eval(x) - phi_bar).powi(2), f_n.mean, f_n.var);
    Ok(Setup { smoothed: full.smoothed.clone(), full, ssm: cut, phi_bar, phi_var })
}

impl Setup {
    /// `h_k` on the points of `grid`.
    fn h(&self, phi: TestFunction, k: usize, n: usize, pts: &[f64]) -> Result<Vec<f64>> {
        let cp = conditional_predictive(&self.ssm, k, n)?;
        Ok(pts
            .iter()
            .map(|&x| gaussian_expect(&|z| phi.eval(z), cp.mean(x), cp.var) - self.phi_bar)
            .collect())
    }

    /// Integration grid around the smoothed law at `k`.
    fn grid(&self, k: usize, count: usize) -> Result<Grid1D> {
        let s = self.smoothed[k];
        Grid1D::centered(s.mean, s.sd(), 12.0, count)
    }

    /// Law of `η_k = ∫ q_k(· | x') p(x' | y_{1:k-1}) dx'` for a Gaussian `q_k`.
    fn predictive_of(&self, q: &LinearGaussianKernel, k: usize) -> Gaussian {
        if k == 0 {
            return Gaussian::new(q.offset, q.sd * q.sd);
        }
        let f = self.full.filtered[k - 1];
        Gaussian::new(q.coef * f.mean + q.offset, q.coef * q.coef * f.var + q.sd * q.sd)
    }
}

/// `∫ p(x)² h(x)² / r(x) dx` with Gaussian `p` and `r`; `+inf` when the
/// ratio `p²/r` is not integrable.
fn ratio_integral(p: Gaussian, r: &dyn Fn(f64) -> f64, r_var: f64, h: &[f64], grid: &Grid1D) -> Result<f64> {
    if 2.0 / p.var - 1.0 / r_var <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let vals: Vec<f64> = grid
        .points()
        .iter()
        .zip(h)
        .map(|(&x, hv)| (2.0 * p.log_pdf(x) - r(x)).exp() * hv * hv)
        .collect();
    trapezoid_integrate(&vals, grid)
}

/// Asymptotic variance of the marginal particle filter at step `n`:
///
/// `V̄_n = ∫ p(x_0|y_{1:n})² h_0² / q_0 + Σ_{k=1}^{n-1} ∫ p(x_k|y_{1:n})² h_k² / η_k
///        + ∫ p(x_n|y_{1:n})² (φ − φ̄_n)² / η_n`,
///
/// where `η_k` is the proposal pushed through the filtering law at `k − 1`.
pub fn mpf_asymptotic_variance(
    ssm: &LinearGaussianSSM,
    proposal: &ProposalChoice,
    phi: TestFunction,
    n: usize,
    points: usize,
) -> Result<StepVariance> {
    let s = setup(ssm, phi, n)?;
    // Kernels of the full model: a filtering-shaped proposal at k ≤ n only
    // depends on data up to k.
    let qs = proposal.kernels(ssm)?;
    let mut vbar = 0.0;
    for (k, q) in qs.iter().enumerate().take(n + 1) {
        let grid = s.grid(k, points)?;
        let h = s.h(phi, k, n, grid.points())?;
        let eta = s.predictive_of(q, k);
        vbar += ratio_integral(s.smoothed[k], &|x| eta.log_pdf(x), eta.var, &h, &grid)?;
    }
    Ok(StepVariance { vbar, v: s.phi_var + vbar })
}

/// The bootstrap-filter variance written directly with Kalman predictive
/// laws: `∫ p(x_0|y_{1:n})² h_0² / f_0 + Σ_{k≥1} ∫ p(x_k|y_{1:n})² h_k² /
/// p(x_k|y_{1:k-1})`.
pub fn bpf_variance(ssm: &LinearGaussianSSM, phi: TestFunction, n: usize, points: usize) -> Result<StepVariance> {
    let s = setup(ssm, phi, n)?;
    let mut vbar = 0.0;
    for k in 0..=n {
        let grid = s.grid(k, points)?;
        let h = s.h(phi, k, n, grid.points())?;
        let pred = s.full.predicted[k];
        vbar += ratio_integral(s.smoothed[k], &|x| pred.log_pdf(x), pred.var, &h, &grid)?;
    }
    Ok(StepVariance { vbar, v: s.phi_var + vbar })
}

/// The fully adapted auxiliary filter:
/// `∫ p(x_0|y_{1:n})² h_0² / f_0 + Σ_{k=1}^{n-1} ∫ p(x_k|y_{1:n})² h_k² /
/// p(x_k|y_{1:k}) + var_{p(x_n|y_{1:n})}(φ)`.
pub fn fa_apf_variance(ssm: &LinearGaussianSSM, phi: TestFunction, n: usize, points: usize) -> Result<f64> {
    let s = setup(ssm, phi, n)?;
    if n == 0 {
        return Ok(s.phi_var);
    }
    let mut vbar = s.phi_var;
    for k in 0..n {
        let grid = s.grid(k, points)?;
        let h = s.h(phi, k, n, grid.points())?;
        let r = if k == 0 { s.full.predicted[0] } else { s.full.filtered[k] };
        vbar += ratio_integral(s.smoothed[k], &|x| r.log_pdf(x), r.var, &h, &grid)?;
    }
    Ok(vbar)
}

/// Asymptotic variance of the marginal auxiliary filter's inferential
/// estimate at step `n`: the closed form applied on the auxiliary model to
/// `w̃_n (φ − φ̄_n)`, with `w̃_n ∝ 1/p̃(y_{n+1}|·)` scaled so `η̂_n(w̃_n) = 1`.
pub fn mapf_asymptotic_variance(
    ssm: &LinearGaussianSSM,
    proposal: &ProposalChoice,
    aux: Arc<dyn AuxApprox>,
    phi: TestFunction,
    n: usize,
    grid: &Grid1D,
) -> Result<f64> {
    let (model, reweight) = make_mapf(ssm, proposal, aux)?;
    let model = model.truncated(n)?;
    let flow = grid_flow(&model, grid)?;
    let pts = grid.points();
    let log_w: Vec<f64> = pts.iter().map(|x| reweight(n, x)).collect();
    let shift = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - shift).exp()).collect();
    let etahat = &flow.steps[n].etahat;
    let mass: Vec<f64> = etahat.iter().zip(&w).map(|(p, wv)| p * wv).collect();
    let norm = trapezoid_integrate(&mass, grid)?;
    if !(norm > 0.0) {
        return Err(Error::extinction("inferential weights vanish on the grid"));
    }
    let phi_vals = phi.tabulate(grid);
    let fm: Vec<f64> = mass.iter().zip(&phi_vals).map(|(m, f)| m * f).collect();
    let phi_bar = trapezoid_integrate(&fm, grid)? / norm;
    let psi: Vec<f64> = w.iter().zip(&phi_vals).map(|(wv, f)| wv / norm * (f - phi_bar)).collect();
    closed_form_variance(&model, &flow, &psi, n)
}

/// Path-space particle filter variance of the pre-resampling estimate.
///
/// The path integral over `x_{0:k}` collapses onto consecutive pairs because
/// the model is Markov, leaving for each `k ≥ 1`
/// `∫∫ p(x'|y_{1:k-1}) [f(x|x') g_k(x) s_k(x) / (π_k(x) Z_k)]² h_k(x)² / q_k(x|x')`,
/// with `s_k` smoothed, `π_k` filtering and `Z_k = p(y_k | y_{1:k-1})`.
pub fn pf_variance_quadrature(
    ssm: &LinearGaussianSSM,
    proposal: &ProposalChoice,
    phi: TestFunction,
    n: usize,
    points: usize,
) -> Result<f64> {
    let s = setup(ssm, phi, n)?;
    let qs = proposal.kernels(ssm)?;
    let g0 = s.grid(0, points)?;
    let h0 = s.h(phi, 0, n, g0.points())?;
    let q0 = s.predictive_of(&qs[0], 0);
    let mut total = ratio_integral(s.smoothed[0], &|x| q0.log_pdf(x), q0.var, &h0, &g0)?;
    for (k, &q) in qs.iter().enumerate().take(n + 1).skip(1) {
        let gx = s.grid(k, points)?;
        let hx = s.h(phi, k, n, gx.points())?;
        let prev = s.full.filtered[k - 1];
        let gp = Grid1D::centered(prev.mean, prev.sd(), 12.0, points)?;
        let f = s.ssm.transition(k);
        let y = s.ssm.observations[k - 1];
        let log_z = s.full.log_increments[k];
        let filt = s.full.filtered[k];
        let sm = s.smoothed[k];
        let inner: Vec<f64> = gx
            .points()
            .iter()
            .zip(&hx)
            .map(|(&x, hv)| {
                let lg = normal_log_pdf(y, s.ssm.c * x, s.ssm.sigma_y);
                let base = lg + sm.log_pdf(x) - filt.log_pdf(x) - log_z;
                let row: Vec<f64> = gp
                    .points()
                    .iter()
                    .map(|&xp| {
                        let lf = normal_log_pdf(x, f.mean(xp), f.sd);
                        let lq = normal_log_pdf(x, q.mean(xp), q.sd);
                        (prev.log_pdf(xp) + 2.0 * (lf + base) - lq).exp()
                    })
                    .collect();
                trapezoid_integrate(&row, &gp).unwrap_or(f64::NAN) * hv * hv
            })
            .collect();
        total += trapezoid_integrate(&inner, &gx)?;
    }
    Ok(total)
}
