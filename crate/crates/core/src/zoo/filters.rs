use std::sync::Arc;

use super::lgssm::{GaussianObservation, LinearGaussianKernel, LinearGaussianSSM, UnitPotential};
use crate::error::{Error, Result};
use crate::model::{LogReweight, MarginalModel, ModelStep, ModelStructure, Potential};
use crate::oracle::kalman_filter;
use crate::probkit::normal_log_pdf;

/// Proposal families for the linear-Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub enum ProposalChoice {
    /// `q_n = f_n`.
    Bootstrap,
    /// `q_n ∝ f_n g_n`, with `q_0 = f_0`.
    LocallyOptimal,
    /// The Kalman filtering law at each step, standard deviation scaled by
    /// `inflate`. Ignores the previous state.
    KalmanFiltering { inflate: f64 },
    /// Explicit kernels for steps `0..=T`.
    Custom(Vec<LinearGaussianKernel>),
}

impl ProposalChoice {
    /// One Gaussian kernel per step.
    pub fn kernels(&self, ssm: &LinearGaussianSSM) -> Result<Vec<LinearGaussianKernel>> {
        let t = ssm.horizon();
        match self {
            ProposalChoice::Bootstrap => Ok((0..=t).map(|n| ssm.transition(n)).collect()),
            ProposalChoice::LocallyOptimal => Ok((0..=t).map(|n| locally_optimal(ssm, n)).collect()),
            ProposalChoice::KalmanFiltering { inflate } => {
                if !(*inflate > 0.0) {
                    return Err(Error::Config("proposal inflation must be positive".into()));
                }
                let kt = kalman_filter(ssm)?;
                Ok(kt
                    .filtered
                    .iter()
                    .map(|g| LinearGaussianKernel::new(0.0, g.mean, g.var.sqrt() * inflate))
                    .collect())
            }
            ProposalChoice::Custom(k) => {
                if k.len() != t + 1 {
                    return Err(Error::LengthMismatch { expected: t + 1, actual: k.len() });
                }
                if k.iter().any(|k| !(k.sd > 0.0)) {
                    return Err(Error::Config("proposal scales must be positive".into()));
                }
                Ok(k.clone())
            }
        }
    }
}

/// `q_n(x | x') ∝ f(x | x') g(y_n | x)`, closed form for the linear-Gaussian
/// model; the prior at step 0.
pub fn locally_optimal(ssm: &LinearGaussianSSM, n: usize) -> LinearGaussianKernel {
    match ssm.y(n) {
        None => ssm.transition(0),
        Some(y) => {
            let (vx, vy) = (ssm.sigma_x * ssm.sigma_x, ssm.sigma_y * ssm.sigma_y);
            let s2 = 1.0 / (1.0 / vx + ssm.c * ssm.c / vy);
            LinearGaussianKernel::new(s2 * ssm.a / vx, s2 * ssm.c * y / vy, s2.sqrt())
        }
    }
}

fn potential_for(ssm: &LinearGaussianSSM, n: usize) -> Arc<dyn Potential<f64>> {
    match ssm.observation(n) {
        Some(g) => Arc::new(g),
        None => Arc::new(UnitPotential),
    }
}

fn gaussian_step(
    ssm: &LinearGaussianSSM,
    n: usize,
    q: LinearGaussianKernel,
    potential: Arc<dyn Potential<f64>>,
    potential_prev_free: bool,
) -> ModelStep<f64> {
    let f = ssm.transition(n);
    ModelStep {
        proposal: Arc::new(q),
        kernel: Arc::new(f),
        potential,
        structure: ModelStructure {
            potential_prev_free,
            proposal_prev_free: q.coef == 0.0,
            kernel_prev_free: f.coef == 0.0,
            proposal_is_kernel: q == f,
        },
    }
}

/// Marginal particle filter: `U_n = g_n`, `K_n = f_n`, `M_n = q_n`.
pub fn make_mpf(ssm: &LinearGaussianSSM, proposal: &ProposalChoice) -> Result<MarginalModel<f64>> {
    ssm.validate()?;
    let qs = proposal.kernels(ssm)?;
    MarginalModel::new(
        qs.into_iter()
            .enumerate()
            .map(|(n, q)| gaussian_step(ssm, n, q, potential_for(ssm, n), true))
            .collect(),
    )
}

/// Bootstrap filter, the marginal filter with `q = f`.
pub fn make_bpf(ssm: &LinearGaussianSSM) -> Result<MarginalModel<f64>> {
    make_mpf(ssm, &ProposalChoice::Bootstrap)
}

/// Independent particle filter: the proposal must ignore the previous state.
pub fn make_ipf(ssm: &LinearGaussianSSM, proposal: &ProposalChoice) -> Result<MarginalModel<f64>> {
    let qs = proposal.kernels(ssm)?;
    if let Some(n) = qs.iter().skip(1).position(|q| q.coef != 0.0) {
        return Err(Error::Config(format!(
            "independent proposal depends on the previous state at step {}",
            n + 1
        )));
    }
    make_mpf(ssm, &ProposalChoice::Custom(qs))
}

/// An approximation `p̃(y_{n+1} | x_n)` of the one-step predictive likelihood.
pub trait AuxApprox: Send + Sync {
    fn log_p_tilde(&self, y_next: f64, x: f64) -> f64;

    /// `p̃` does not depend on `x`; the auxiliary factors then cancel.
    fn is_constant(&self) -> bool {
        false
    }
}

/// `p̃ ≡ 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitAux;

impl AuxApprox for UnitAux {
    fn log_p_tilde(&self, _y_next: f64, _x: f64) -> f64 {
        0.0
    }

    fn is_constant(&self) -> bool {
        true
    }
}

/// `p̃(y | x) = N(y; coef·x, sd²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianAux {
    pub coef: f64,
    pub sd: f64,
}

impl GaussianAux {
    /// The exact predictive `N(y; c a x, c²σ_x² + σ_y²)`.
    pub fn exact(ssm: &LinearGaussianSSM) -> Self {
        GaussianAux {
            coef: ssm.c * ssm.a,
            sd: (ssm.c * ssm.c * ssm.sigma_x * ssm.sigma_x + ssm.sigma_y * ssm.sigma_y).sqrt(),
        }
    }

    /// The exact predictive with its scale multiplied by `inflate`.
    pub fn inflated(ssm: &LinearGaussianSSM, inflate: f64) -> Self {
        let e = Self::exact(ssm);
        GaussianAux { coef: e.coef, sd: e.sd * inflate }
    }
}

impl AuxApprox for GaussianAux {
    fn log_p_tilde(&self, y_next: f64, x: f64) -> f64 {
        normal_log_pdf(y_next, self.coef * x, self.sd)
    }
}

/// `U_n(x', x) = g_n(y_n | x) p̃(y_{n+1} | x) / p̃(y_n | x')` with the
/// conventions `g_0 ≡ 1` and `p̃(y_{T+1} | ·) ≡ 1`.
struct AuxPotential {
    obs: Option<GaussianObservation>,
    y_next: Option<f64>,
    y_here: Option<f64>,
    aux: Arc<dyn AuxApprox>,
}

impl Potential<f64> for AuxPotential {
    fn log_value(&self, prev: &f64, x: &f64) -> f64 {
        let lg = self.obs.map_or(0.0, |g| g.log_likelihood(*x));
        let next = self.y_next.map_or(0.0, |y| self.aux.log_p_tilde(y, *x));
        let here = self.y_here.map_or(0.0, |y| self.aux.log_p_tilde(y, *prev));
        lg + (next - here)
    }

    fn log_prev_factor(&self, prev: &f64) -> Option<f64> {
        Some(-self.y_here.map_or(0.0, |y| self.aux.log_p_tilde(y, *prev)))
    }
}

/// Marginal auxiliary particle filter.
///
/// Returns the model targeting `η̂_n ∝ p̃(y_{n+1} | x_n) p(x_n | y_{1:n})`
/// and the inferential log-weight `log w̃_n(x) = −log p̃(y_{n+1} | x)` that
/// restores the filtering law when applied to the pre-resampling cloud.
pub fn make_mapf(
    ssm: &LinearGaussianSSM,
    proposal: &ProposalChoice,
    aux: Arc<dyn AuxApprox>,
) -> Result<(MarginalModel<f64>, LogReweight<f64>)> {
    ssm.validate()?;
    let qs = proposal.kernels(ssm)?;
    let constant = aux.is_constant();
    let steps = qs
        .into_iter()
        .enumerate()
        .map(|(n, q)| {
            let pot = AuxPotential {
                obs: ssm.observation(n),
                y_next: ssm.y(n + 1),
                y_here: if n == 0 { None } else { ssm.y(n) },
                aux: Arc::clone(&aux),
            };
            gaussian_step(ssm, n, q, Arc::new(pot), constant || n == 0)
        })
        .collect();
    let model = MarginalModel::new(steps)?;
    let ys = ssm.observations.clone();
    let reweight: LogReweight<f64> = Arc::new(move |n: usize, x: &f64| match ys.get(n) {
        Some(&y_next) => -aux.log_p_tilde(y_next, *x),
        None => 0.0,
    });
    Ok((model, reweight))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DensityKernel;

    #[test]
    fn locally_optimal_is_product_of_prior_and_likelihood() {
        let ssm = LinearGaussianSSM::fixture();
        let q = locally_optimal(&ssm, 3);
        let y = ssm.y(3).unwrap();
        let prev = 0.7;
        // log q − log f − log g must not depend on x.
        let f = ssm.transition(3);
        let g = ssm.observation(3).unwrap();
        let r = |x: f64| q.log_density(&prev, &x) - f.log_density(&prev, &x) - g.log_likelihood(x);
        for x in [-2.0, 0.0, 1.3, y] {
            assert!((r(x) - r(0.5)).abs() < 1e-12);
        }
        assert_eq!(locally_optimal(&ssm, 0), ssm.transition(0));
    }

    #[test]
    fn families_share_potential_and_kernel() {
        let ssm = LinearGaussianSSM::fixture();
        let mpf = make_mpf(&ssm, &ProposalChoice::LocallyOptimal).unwrap();
        let bpf = make_bpf(&ssm).unwrap();
        let ipf = make_ipf(&ssm, &ProposalChoice::KalmanFiltering { inflate: 1.5 }).unwrap();
        for n in 0..=ssm.horizon() {
            for (x, p) in [(0.3, -1.0), (2.0, 0.5)] {
                let base = mpf.step(n).unwrap();
                for other in [&bpf, &ipf] {
                    let st = other.step(n).unwrap();
                    assert_eq!(st.kernel.log_density(&p, &x), base.kernel.log_density(&p, &x));
                    assert_eq!(st.potential.log_value(&p, &x), base.potential.log_value(&p, &x));
                }
            }
        }
        assert!(bpf.steps().iter().all(|s| s.structure.proposal_is_kernel));
        assert!(ipf.steps().iter().all(|s| s.structure.proposal_prev_free));
    }

    #[test]
    fn ipf_rejects_state_dependent_proposals() {
        let ssm = LinearGaussianSSM::fixture();
        assert!(make_ipf(&ssm, &ProposalChoice::LocallyOptimal).is_err());
    }

    #[test]
    fn unit_aux_reduces_to_mpf_potential_bitwise() {
        let ssm = LinearGaussianSSM::fixture();
        let mpf = make_mpf(&ssm, &ProposalChoice::LocallyOptimal).unwrap();
        let (mapf, rw) = make_mapf(&ssm, &ProposalChoice::LocallyOptimal, Arc::new(UnitAux)).unwrap();
        for n in 0..=ssm.horizon() {
            let (a, b) = (mpf.step(n).unwrap(), mapf.step(n).unwrap());
            assert_eq!(a.structure, b.structure);
            for (p, x) in [(0.1, -0.4), (1.7, 2.2)] {
                assert_eq!(
                    a.potential.log_value(&p, &x).to_bits(),
                    b.potential.log_value(&p, &x).to_bits()
                );
                assert_eq!(rw(n, &x), 0.0);
            }
        }
    }
}
