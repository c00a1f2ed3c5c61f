//! Replicate studies shared by the acceptance suite and the command-line
//! harness. Replicate `r` at particle count `N` always draws from
//! `stream.lane2(N, r)`, so a study's numbers do not change when other
//! particle counts are added to the list.

use rayon::prelude::*;

use crate::engine::{check_conditional_expectation, ConditionalExpectation, Engine, EngineConfig, Flavor};
use crate::error::{Error, Result};
use crate::model::{LogReweight, MarginalModel, TestFn};
use crate::probkit::{fit_loglog_slope, Grid1D, SeededStream};
use crate::zoo::{make_abc, AbcProblem, AbcState};

/// A scalar estimate taken at the final step of one filter run.
#[derive(Clone)]
pub struct FinalEstimate {
    pub model: MarginalModel<f64>,
    pub phi: TestFn<f64>,
    pub flavor: Flavor,
    /// Report under the inferential reweighting instead of the raw weights.
    pub reweight: Option<LogReweight<f64>>,
}

impl FinalEstimate {
    pub fn marginal(model: MarginalModel<f64>, phi: TestFn<f64>) -> Self {
        FinalEstimate { model, phi, flavor: Flavor::Marginal, reweight: None }
    }

    pub fn with_reweight(mut self, reweight: LogReweight<f64>) -> Self {
        self.reweight = Some(reweight);
        self
    }

    /// Pre-resampling estimate at step `T`.
    pub fn run(&self, particles: usize, stream: SeededStream) -> Result<f64> {
        let mut engine = Engine::new(
            &self.model,
            EngineConfig::new(particles),
            self.flavor,
            vec![self.phi.clone()],
            stream,
        )?;
        if let Some(rw) = &self.reweight {
            engine = engine.with_reweight(rw.clone());
        }
        let trace = engine.run()?;
        let last = trace.records.last().ok_or(Error::InvalidInput("empty trace".into()))?;
        Ok(if self.reweight.is_some() { last.reweighted[0] } else { last.pre[0] })
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let r = v.len() as f64;
    let mean = v.iter().sum::<f64>() / r;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub particles: usize,
    pub replicates: usize,
    pub rmse: f64,
    /// Delta-method error of `rmse` from the spread of squared errors.
    pub rmse_se: f64,
    pub mean_bias: f64,
    pub bias_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateStudy {
    pub rows: Vec<RateRow>,
    /// Log-log slope of rmse against `N`; absent for a single `N`.
    pub rmse_slope: Option<f64>,
    /// Log-log slope of `|bias|` against `N`.
    pub bias_slope: Option<f64>,
}

impl RateStudy {
    pub fn csv_header() -> [&'static str; 7] {
        ["method", "particles", "replicates", "rmse", "rmse_se", "mean_bias", "bias_se"]
    }

    /// One record per particle count, in the column order of [`Self::csv_header`].
    pub fn csv_records(&self, method: &str) -> Vec<Vec<String>> {
        let f = |v: f64| format!("{v:.16e}");
        self.rows
            .iter()
            .map(|r| {
                vec![
                    method.to_string(),
                    r.particles.to_string(),
                    r.replicates.to_string(),
                    f(r.rmse),
                    f(r.rmse_se),
                    f(r.mean_bias),
                    f(r.bias_se),
                ]
            })
            .collect()
    }
}

/// Errors of `estimator` against `truth` at each particle count.
pub fn rate_study<F>(estimator: F, truth: f64, particles: &[usize], replicates: usize, stream: SeededStream) -> Result<RateStudy>
where
    F: Fn(usize, SeededStream) -> Result<f64> + Sync,
{
    if particles.is_empty() || particles.contains(&0) {
        return Err(Error::Config("particle counts must be a nonempty list of positive integers".into()));
    }
    if replicates < 2 {
        return Err(Error::Config("a rate study needs at least two replicates".into()));
    }
    let mut rows = Vec::with_capacity(particles.len());
    for &np in particles {
        let errors: Vec<f64> = (0..replicates)
            .into_par_iter()
            .map(|r| estimator(np, stream.lane2(np as u64, r as u64)).map(|e| e - truth))
            .collect::<Result<_>>()?;
        let (mean_bias, bias_se) = mean_and_se(&errors);
        let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
        let (msq, msq_se) = mean_and_se(&sq);
        let rmse = msq.sqrt();
        log::info!("N={np}: rmse {rmse:.4e}, bias {mean_bias:.4e} ± {bias_se:.2e}");
        rows.push(RateRow {
            particles: np,
            replicates,
            rmse,
            rmse_se: if rmse > 0.0 { msq_se / (2.0 * rmse) } else { 0.0 },
            mean_bias,
            bias_se,
        });
    }
    let (rmse_slope, bias_slope) = if rows.len() > 1 {
        let rm: Vec<(f64, f64)> = rows.iter().map(|r| (r.particles as f64, r.rmse)).collect();
        let bi: Vec<(f64, f64)> = rows.iter().map(|r| (r.particles as f64, r.mean_bias.abs())).collect();
        (Some(fit_loglog_slope(&rm)?.0), fit_loglog_slope(&bi).ok().map(|s| s.0))
    } else {
        (None, None)
    };
    Ok(RateStudy { rows, rmse_slope, bias_slope })
}

/// Replicated normalizing-constant estimates against a known value.
#[derive(Debug, Clone, PartialEq)]
pub struct LogZStudy {
    pub log_z: Vec<f64>,
    pub truth_log_z: f64,
    /// Mean of `Ẑ / Z` over replicates.
    pub mean_ratio: f64,
    pub ratio_se: f64,
    pub passed: bool,
}

impl LogZStudy {
    pub fn z_score(&self) -> f64 {
        (self.mean_ratio - 1.0) / self.ratio_se
    }
}

pub fn logz_study(
    model: &MarginalModel<f64>,
    truth_log_z: f64,
    particles: usize,
    replicates: usize,
    stream: SeededStream,
) -> Result<LogZStudy> {
    if replicates < 2 {
        return Err(Error::Config("need at least two replicates".into()));
    }
    let cfg = EngineConfig::new(particles);
    let log_z: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            Engine::new(model, cfg.clone(), Flavor::Marginal, Vec::new(), stream.lane2(particles as u64, r as u64))?
                .run()
                .map(|t| t.log_z())
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = log_z.iter().map(|l| (l - truth_log_z).exp()).collect();
    let (mean_ratio, ratio_se) = mean_and_se(&ratios);
    // The additive slack only absorbs rounding when every replicate is exact.
    let passed = (mean_ratio - 1.0).abs() <= 3.0 * ratio_se + 1e-12;
    Ok(LogZStudy { log_z, truth_log_z, mean_ratio, ratio_se, passed })
}

/// Replicate-averaged pseudo-posterior moments of `θ` at one ABC stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AbcStageRow {
    pub stage: usize,
    pub eps: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub var: f64,
    pub var_se: f64,
    /// Replicate-averaged effective sample size.
    pub ess: f64,
    pub exact_mean: f64,
    pub exact_var: f64,
}

impl AbcStageRow {
    pub fn within(&self, k: f64) -> bool {
        (self.mean - self.exact_mean).abs() <= k * self.mean_se && (self.var - self.exact_var).abs() <= k * self.var_se
    }
}

/// Runs the ABC sampler `replicates` times. The closed-form columns are
/// filled from the Gaussian-toy formula and are meaningful only for it.
pub fn abc_study(problem: &AbcProblem, particles: usize, replicates: usize, stream: SeededStream) -> Result<Vec<AbcStageRow>> {
    if replicates < 2 {
        return Err(Error::Config("need at least two replicates".into()));
    }
    let model = make_abc(problem)?;
    let fns: Vec<TestFn<AbcState>> = vec![
        std::sync::Arc::new(|s: &AbcState| s[0]),
        std::sync::Arc::new(|s: &AbcState| s[0] * s[0]),
    ];
    let cfg = EngineConfig::new(particles);
    let runs: Vec<Vec<(f64, f64, f64)>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let trace = Engine::new(&model, cfg.clone(), Flavor::Marginal, fns.clone(), stream.lane2(particles as u64, r as u64))?
                .run()?;
            Ok(trace
                .records
                .iter()
                .map(|rec| (rec.pre[0], rec.pre[1] - rec.pre[0] * rec.pre[0], rec.ess))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(problem
        .schedule
        .iter()
        .enumerate()
        .map(|(n, &eps)| {
            let means: Vec<f64> = runs.iter().map(|r| r[n].0).collect();
            let vars: Vec<f64> = runs.iter().map(|r| r[n].1).collect();
            let (mean, mean_se) = mean_and_se(&means);
            let (var, var_se) = mean_and_se(&vars);
            let ess = runs.iter().map(|r| r[n].2).sum::<f64>() / replicates as f64;
            let (exact_mean, exact_var) = AbcProblem::toy_pseudo_posterior(problem.y_obs, eps);
            AbcStageRow { stage: n, eps, mean, mean_se, var, var_se, ess, exact_mean, exact_var }
        })
        .collect())
}

/// Runs the marginal filter to step `n − 1`, freezes its weighted cloud and
/// checks the conditional expectation of the next-step estimate against it.
#[allow(clippy::too_many_arguments)]
pub fn conditional_expectation_on_fixture(
    model: &MarginalModel<f64>,
    n: usize,
    particles: usize,
    phi: &(dyn Fn(f64) -> f64 + Sync),
    draws: usize,
    stream: SeededStream,
    grid: &Grid1D,
) -> Result<ConditionalExpectation> {
    if n == 0 {
        return Err(Error::InvalidInput("the conditional check needs a previous step".into()));
    }
    let upto = model.truncated(n - 1)?;
    let mut engine = Engine::new(&upto, EngineConfig::new(particles), Flavor::Marginal, Vec::new(), stream.substream(0))?;
    while !engine.is_done() {
        engine.step()?;
    }
    let prev = engine.weighted_cloud().ok_or(Error::InvalidInput("empty run".into()))?.clone();
    check_conditional_expectation(&prev, model, n, phi, draws, stream.substream(1), grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TestFunction;
    use crate::zoo::{make_mpf, LinearGaussianSSM, ProposalChoice};

    #[test]
    fn mean_and_se_of_constant() {
        assert_eq!(mean_and_se(&[3.0; 5]), (3.0, 0.0));
    }

    #[test]
    fn single_particle_count_has_no_slope() {
        let ssm = LinearGaussianSSM::fixture().truncated(2).unwrap();
        let est = FinalEstimate::marginal(make_mpf(&ssm, &ProposalChoice::Bootstrap).unwrap(), TestFunction::Identity.as_test_fn());
        let s = rate_study(|n, st| est.run(n, st), 0.0, &[16], 4, SeededStream::new(1, 0)).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert!(s.rmse_slope.is_none() && s.bias_slope.is_none());
        assert!(rate_study(|n, st| est.run(n, st), 0.0, &[], 4, SeededStream::new(1, 0)).is_err());
    }

    #[test]
    fn exact_initial_weights_give_exact_normalizer() {
        // At T = 0 with the prior as proposal, every weight is 1 and Ẑ = 1.
        let ssm = LinearGaussianSSM::fixture().truncated(0).unwrap();
        let model = make_mpf(&ssm, &ProposalChoice::Bootstrap).unwrap();
        let s = logz_study(&model, 0.0, 32, 5, SeededStream::new(2, 0)).unwrap();
        assert!(s.log_z.iter().all(|l| l.abs() < 1e-14));
        assert!(s.passed);
    }
}
