use rayon::prelude::*;

use super::lgssm::mpf_asymptotic_variance;
use crate::engine::{run_msmc, run_standard_smc, EngineConfig};
use crate::error::{Error, Result};
use crate::model::TestFunction;
use crate::probkit::SeededStream;
use crate::zoo::{make_mpf, LinearGaussianSSM, ProposalChoice};

/// `N` times the unbiased sample variance of replicate estimates, with a
/// standard error from the normal-theory variance of a sample variance and
/// a plug-in fourth central moment.
pub fn empirical_asymptotic_variance(estimates: &[f64], particles: usize) -> Result<(f64, f64)> {
    let r = estimates.len();
    if r < 2 {
        return Err(Error::InvalidInput("need at least two replicates".into()));
    }
    let rf = r as f64;
    let mean = estimates.iter().sum::<f64>() / rf;
    let m2 = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / rf;
    let m4 = estimates.iter().map(|e| (e - mean).powi(4)).sum::<f64>() / rf;
    let s2 = m2 * rf / (rf - 1.0);
    let var_s2 = if r > 3 {
        ((m4 - s2 * s2 * (rf - 3.0) / (rf - 1.0)) / rf).max(0.0)
    } else {
        2.0 * s2 * s2 / (rf - 1.0)
    };
    let np = particles as f64;
    Ok((np * s2, np * var_s2.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Path-space variance exceeds marginal variance by more than 2 SE.
    Ordered,
    /// Within 2 SE of each other, or bitwise identical.
    Tied,
    /// Marginal variance exceeds path-space variance by more than 2 SE.
    Reversed,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Ordered => "ordered",
            Verdict::Tied => "tied",
            Verdict::Reversed => "reversed",
        }
    }
}

/// Marginal against path-space filtering at one step with a shared proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub test_function: String,
    pub step: usize,
    pub particles: usize,
    pub replicates: usize,
    pub mpf_empirical: f64,
    pub mpf_se: f64,
    pub pf_empirical: f64,
    pub pf_se: f64,
    /// `sqrt(se_mpf² + se_pf²)`.
    pub pooled_se: f64,
    /// `pf_empirical − mpf_empirical`.
    pub difference: f64,
    /// Quadrature pre-resampling variance of the marginal filter.
    pub mpf_vbar: f64,
    /// Quadrature post-resampling variance of the marginal filter.
    pub mpf_v: f64,
    /// Every replicate of both engines produced identical estimates.
    pub identical: bool,
    pub verdict: Verdict,
}

impl VarianceReport {
    pub fn csv_header() -> [&'static str; 10] {
        [
            "phi", "step", "particles", "replicates", "method", "empirical", "se", "quadrature_vbar", "quadrature_v",
            "verdict",
        ]
    }

    /// One record per method, in the column order of [`Self::csv_header`].
    pub fn csv_records(&self) -> Vec<Vec<String>> {
        let f = |v: f64| format!("{v:.16e}");
        let lead = [self.test_function.clone(), self.step.to_string(), self.particles.to_string(), self.replicates.to_string()];
        let verdict = self.verdict.as_str().to_string();
        let mut mpf = lead.to_vec();
        mpf.extend([
            "mpf".into(),
            f(self.mpf_empirical),
            f(self.mpf_se),
            f(self.mpf_vbar),
            f(self.mpf_v),
            verdict.clone(),
        ]);
        let mut pf = lead.to_vec();
        pf.extend(["pf".into(), f(self.pf_empirical), f(self.pf_se), String::new(), String::new(), verdict]);
        vec![mpf, pf]
    }

    pub fn summary(&self) -> String {
        format!(
            "phi={} n={} N={} R={}: MPF N·var = {:.4} ± {:.4} (quadrature {:.4}), PF N·var = {:.4} ± {:.4}, \
             difference {:.4} vs 2·SE {:.4} -> {}{}",
            self.test_function, self.step, self.particles, self.replicates,
            self.mpf_empirical, self.mpf_se, self.mpf_vbar, self.pf_empirical, self.pf_se,
            self.difference, 2.0 * self.pooled_se, self.verdict.as_str(),
            if self.identical { " (bitwise identical)" } else { "" }
        )
    }
}

/// Runs both engines `replicates` times at step `n` on shared streams.
pub fn compare_variances(
    ssm: &LinearGaussianSSM,
    proposal: &ProposalChoice,
    phi: TestFunction,
    n: usize,
    particles: usize,
    replicates: usize,
    stream: SeededStream,
) -> Result<VarianceReport> {
    let model = make_mpf(ssm, proposal)?.truncated(n)?;
    let cfg = EngineConfig::new(particles);
    let fns = [phi.as_test_fn()];
    let pairs: Vec<(f64, f64)> = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64)> {
            let s = stream.substream(r as u64);
            let a = run_msmc(&model, &cfg, &fns, s)?;
            let b = run_standard_smc(&model, &cfg, &fns, s)?;
            Ok((a.records[n].pre[0], b.records[n].pre[0]))
        })
        .collect::<Result<_>>()?;
    let (mpf, pf): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let identical = pairs.iter().all(|(a, b)| a.to_bits() == b.to_bits());
    let (mv, ms) = empirical_asymptotic_variance(&mpf, particles)?;
    let (pv, ps) = empirical_asymptotic_variance(&pf, particles)?;
    let pooled = (ms * ms + ps * ps).sqrt();
    let difference = if identical { 0.0 } else { pv - mv };
    let verdict = if identical || difference.abs() < 2.0 * pooled {
        Verdict::Tied
    } else if difference > 0.0 {
        Verdict::Ordered
    } else {
        Verdict::Reversed
    };
    let quad = mpf_asymptotic_variance(ssm, proposal, phi, n, 2001)?;
    Ok(VarianceReport {
        test_function: phi.name(),
        step: n,
        particles,
        replicates,
        mpf_empirical: mv,
        mpf_se: ms,
        pf_empirical: pv,
        pf_se: ps,
        pooled_se: pooled,
        difference,
        mpf_vbar: quad.vbar,
        mpf_v: quad.v,
        identical,
        verdict,
    })
}
