//! Asymptotic variances: the backward recursion, the closed form through
//! `Γ` operators, specialized linear-Gaussian integrals, and empirical
//! estimates from replicate runs.

pub mod empirical;
pub mod gamma;
pub mod lgssm;

pub use empirical::{compare_variances, empirical_asymptotic_variance, VarianceReport, Verdict};
pub use gamma::{clt_variance_recursion, closed_form_variance, gamma_apply, CltVariances, GammaTable};
pub use lgssm::{
    bpf_variance, fa_apf_variance, gaussian_expect, mapf_asymptotic_variance, mpf_asymptotic_variance,
    pf_variance_quadrature, StepVariance,
};
