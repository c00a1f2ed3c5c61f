//! Asymptotic variances of a 1-D model by quadrature.
//!
//! `Γ_q(φ)(x) = ∫ k_q(x, x') U_q(x, x') φ(x') dx'` maps functions of `x_q`
//! to functions of `x_{q-1}`, and `Γ_{k:n} = Γ_{k+1} ∘ … ∘ Γ_n` with
//! `Γ_{n:n} = Id`. Both the backward recursion and the closed form below
//! carry grid-valued test functions through these operators.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::MarginalModel;
use crate::oracle::GridFlow;
use crate::probkit::{trapezoid_integrate, Grid1D};

/// One application of `Γ_q` to tabulated values.
pub fn gamma_apply(model: &MarginalModel<f64>, phi: &[f64], q: usize, grid: &Grid1D) -> Result<Vec<f64>> {
    if phi.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), actual: phi.len() });
    }
    if q == 0 {
        return Err(Error::InvalidInput("Γ_q is defined for q >= 1".into()));
    }
    let st = model.step(q)?;
    let pts = grid.points();
    let wphi: Vec<f64> = phi.iter().zip(grid.weights()).map(|(f, w)| f * w).collect();
    Ok(pts
        .par_iter()
        .map(|x| {
            pts.iter()
                .zip(&wphi)
                .filter(|(_, wf)| **wf != 0.0)
                .map(|(xn, wf)| (st.kernel.log_density(x, xn) + st.potential.log_value(x, xn)).exp() * wf)
                .sum()
        })
        .collect())
}

/// `Γ_{k:n}(φ)` and `Γ_{k:n}(1)` for `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct GammaTable {
    pub phi: Vec<Vec<f64>>,
    pub one: Vec<Vec<f64>>,
}

impl GammaTable {
    pub fn build(model: &MarginalModel<f64>, grid: &Grid1D, phi: &[f64], n: usize) -> Result<Self> {
        let mut gp = vec![phi.to_vec()];
        let mut g1 = vec![vec![1.0; grid.len()]];
        for k in (1..=n).rev() {
            let next_p = gamma_apply(model, gp.last().expect("nonempty"), k, grid)?;
            let next_1 = gamma_apply(model, g1.last().expect("nonempty"), k, grid)?;
            gp.push(next_p);
            g1.push(next_1);
        }
        gp.reverse();
        g1.reverse();
        Ok(GammaTable { phi: gp, one: g1 })
    }
}

fn check_flow(flow: &GridFlow, phi: &[f64], n: usize) -> Result<()> {
    if phi.len() != flow.grid.len() {
        return Err(Error::LengthMismatch { expected: flow.grid.len(), actual: phi.len() });
    }
    if n >= flow.steps.len() {
        return Err(Error::HorizonExceeded { step: n, horizon: flow.steps.len().saturating_sub(1) });
    }
    flow.ensure_resolved()
}

/// `η_k[(G_k h)²]`, written as `∫ η_k G_k² h²`.
fn weighted_second_moment(flow: &GridFlow, k: usize, h: &[f64]) -> Result<f64> {
    let st = &flow.steps[k];
    let vals: Vec<f64> = st
        .eta
        .iter()
        .zip(&st.log_g)
        .zip(h)
        .map(|((e, lg), hv)| if *lg == f64::NEG_INFINITY { 0.0 } else { e * (2.0 * lg).exp() * hv * hv })
        .collect();
    trapezoid_integrate(&vals, &flow.grid)
}

/// `η_k(G_k h)`.
fn weighted_mean(flow: &GridFlow, k: usize, h: &[f64]) -> Result<f64> {
    let st = &flow.steps[k];
    let vals: Vec<f64> = st
        .eta
        .iter()
        .zip(&st.log_g)
        .zip(h)
        .map(|((e, lg), hv)| if *lg == f64::NEG_INFINITY { 0.0 } else { e * lg.exp() * hv })
        .collect();
    trapezoid_integrate(&vals, &flow.grid)
}

fn etahat_expect(flow: &GridFlow, k: usize, f: &[f64]) -> Result<f64> {
    let prod: Vec<f64> = flow.steps[k].etahat.iter().zip(f).map(|(p, v)| p * v).collect();
    trapezoid_integrate(&prod, &flow.grid)
}

/// Pre- and post-resampling asymptotic variances at steps `0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CltVariances {
    pub vbar: Vec<f64>,
    pub v: Vec<f64>,
}

fn vbar_recursive(model: &MarginalModel<f64>, flow: &GridFlow, m: usize, psi: &[f64]) -> Result<f64> {
    let c = etahat_expect(flow, m, psi)?;
    let centered: Vec<f64> = psi.iter().map(|p| p - c).collect();
    let mean = weighted_mean(flow, m, &centered)?;
    let mut vhat = weighted_second_moment(flow, m, &centered)? - mean * mean;
    if m > 0 {
        let pulled = gamma_apply(model, &centered, m, &flow.grid)?;
        vhat += vbar_recursive(model, flow, m - 1, &pulled)?;
    }
    Ok(vhat * (-2.0 * flow.steps[m].log_increment).exp())
}

/// The backward recursion
/// `V̄_m(φ) = [var_{η_m}(G_m φ_c) + V̄_{m-1}(Γ_m φ_c)] / η_m(G_m)²` with
/// `φ_c = φ − η̂_m(φ)`, and `V_m = var_{η̂_m}(φ) + V̄_m`. The same tabulated
/// `φ` is used at every `m`.
pub fn clt_variance_recursion(model: &MarginalModel<f64>, flow: &GridFlow, phi: &[f64], n: usize) -> Result<CltVariances> {
    check_flow(flow, phi, n)?;
    let mut vbar = Vec::with_capacity(n + 1);
    let mut v = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let vb = vbar_recursive(model, flow, m, phi)?;
        let mean = etahat_expect(flow, m, phi)?;
        let sq: Vec<f64> = phi.iter().map(|p| (p - mean) * (p - mean)).collect();
        vbar.push(vb);
        v.push(etahat_expect(flow, m, &sq)? + vb);
    }
    Ok(CltVariances { vbar, v })
}

/// The closed form
/// `V̄_n(φ) = Σ_k η_k[(G_k[Γ_{k:n}φ − η̂_n(φ) Γ_{k:n}1])²] Π_{j=k}^n η_j(G_j)^{-2}`.
pub fn closed_form_variance(model: &MarginalModel<f64>, flow: &GridFlow, phi: &[f64], n: usize) -> Result<f64> {
    check_flow(flow, phi, n)?;
    let table = GammaTable::build(model, &flow.grid, phi, n)?;
    let c = etahat_expect(flow, n, phi)?;
    let mut total = 0.0;
    let mut log_norm = 0.0;
    for k in (0..=n).rev() {
        log_norm += flow.steps[k].log_increment;
        let h: Vec<f64> = table.phi[k].iter().zip(&table.one[k]).map(|(p, o)| p - c * o).collect();
        total += weighted_second_moment(flow, k, &h)? * (-2.0 * log_norm).exp();
    }
    Ok(total)
}
