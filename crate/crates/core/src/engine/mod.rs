//! Marginal and path-space SMC engines.
//!
//! Both engines share one skeleton and one random-stream layout: particle
//! `i` at step `n` mutates with lane `(n, i)`, resampling after step `n`
//! draws from a dedicated lane. They differ only in how a new particle is
//! weighted. The marginal engine forms the mixture ratio over the whole
//! weighted cloud of the previous step, the standard engine uses the
//! particle's own ancestor.

mod conditional;
mod resample;
mod weights;

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    estimate_with, FilterTrace, LogReweight, MarginalModel, ParticleCloud, State, StepRecord,
    TestFn,
};
use crate::probkit::{ess, normalize_log_weights, SeededStream};

pub use conditional::{check_conditional_expectation, ConditionalExpectation};
pub use resample::{multinomial_draws, multinomial_resample, ResampleOutcome};
pub use weights::compute_marginal_log_weights;

const RESAMPLE_LANE: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub particles: usize,
    /// Must stay on: the engines resample after every step.
    pub resample_every_step: bool,
    /// Also resample after the final step and record `η̂_n^N(φ)` everywhere.
    pub record_pre_and_post: bool,
    /// Keep every pre-resampling cloud in the trace.
    pub record_clouds: bool,
    /// Query particles per work item in the O(N²) weight loop.
    pub chunk_size: usize,
}

impl EngineConfig {
    pub fn new(particles: usize) -> Self {
        EngineConfig {
            particles,
            resample_every_step: true,
            record_pre_and_post: false,
            record_clouds: false,
            chunk_size: 64,
        }
    }

    pub fn with_post(mut self) -> Self {
        self.record_pre_and_post = true;
        self
    }

    pub fn with_clouds(mut self) -> Self {
        self.record_clouds = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("particle count must be at least 1".into()));
        }
        if self.chunk_size == 0 {
            return Err(Error::Config("chunk_size must be at least 1".into()));
        }
        if !self.resample_every_step {
            return Err(Error::Config(
                "adaptive resampling is not supported; resample_every_step must be true".into(),
            ));
        }
        Ok(())
    }
}

/// How new particles are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    /// Mixture ratio over the previous weighted cloud.
    Marginal,
    /// Ratio at the particle's own ancestor.
    Standard,
}

/// A stepping filter. [`Engine::step`] advances one time index.
pub struct Engine<'m, S> {
    model: &'m MarginalModel<S>,
    cfg: EngineConfig,
    flavor: Flavor,
    stream: SeededStream,
    test_fns: Vec<TestFn<S>>,
    reweight: Option<LogReweight<S>>,
    weighted: Option<ParticleCloud<S>>,
    resampled: Vec<S>,
    next: usize,
    trace: FilterTrace<S>,
}

impl<'m, S: State> Engine<'m, S> {
    pub fn new(
        model: &'m MarginalModel<S>,
        cfg: EngineConfig,
        flavor: Flavor,
        test_fns: Vec<TestFn<S>>,
        stream: SeededStream,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Engine {
            model,
            cfg,
            flavor,
            stream,
            test_fns,
            reweight: None,
            weighted: None,
            resampled: Vec::new(),
            next: 0,
            trace: FilterTrace {
                records: Vec::new(),
                clouds: Vec::new(),
            },
        })
    }

    /// Report estimates additionally under `normalize(log G + reweight)`.
    pub fn with_reweight(mut self, reweight: LogReweight<S>) -> Self {
        self.reweight = Some(reweight);
        self
    }

    /// The weighted cloud of the last completed step, before resampling.
    pub fn weighted_cloud(&self) -> Option<&ParticleCloud<S>> {
        self.weighted.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.next > self.model.horizon()
    }

    /// Mutate, weight, record and resample for the next step.
    pub fn step(&mut self) -> Result<&StepRecord> {
        let n = self.next;
        let horizon = self.model.horizon();
        let st = self.model.step(n)?;
        let started = Instant::now();
        let np = self.cfg.particles;
        let stream = self.stream;

        let positions: Vec<S> = if n == 0 {
            let origin = S::default();
            (0..np)
                .into_par_iter()
                .map(|i| st.proposal.sample(&origin, &mut stream.lane2(0, i as u64).rng()))
                .collect()
        } else {
            self.resampled
                .par_iter()
                .enumerate()
                .map(|(i, xp)| st.proposal.sample(xp, &mut stream.lane2(n as u64, i as u64).rng()))
                .collect()
        };

        let log_w: Vec<f64> = match (n, self.flavor, &self.weighted) {
            (0, _, _) | (_, Flavor::Standard, _) => {
                let origin = S::default();
                let ancestors: &[S] = if n == 0 { &[] } else { &self.resampled };
                positions
                    .par_iter()
                    .enumerate()
                    .map(|(i, x)| weights::ancestor_log_weight(st, ancestors.get(i).unwrap_or(&origin), x))
                    .collect()
            }
            (_, Flavor::Marginal, Some(prev)) => {
                compute_marginal_log_weights(prev, &positions, self.model, n, self.cfg.chunk_size)?
            }
            (_, Flavor::Marginal, None) => unreachable!("weighted cloud retained after step 0"),
        };

        let (w, log_mean) = normalize_log_weights(&log_w).map_err(|e| match e {
            Error::Extinction { .. } => Error::extinction(format!("all weights zero at step {n}")),
            other => other,
        })?;
        let cumulative = self.weighted.as_ref().map_or(0.0, |c| c.cumulative_log_z) + log_mean;

        let pre = self.test_fns.iter().map(|f| estimate_with(&w, &positions, f.as_ref())).collect();
        let reweighted = match &self.reweight {
            Some(rw) => {
                let adj: Vec<f64> = log_w.iter().zip(&positions).map(|(l, x)| l + rw(n, x)).collect();
                let (w2, _) = normalize_log_weights(&adj)?;
                self.test_fns.iter().map(|f| estimate_with(&w2, &positions, f.as_ref())).collect()
            }
            None => Vec::new(),
        };

        let mut post = Vec::new();
        if n < horizon || self.cfg.record_pre_and_post {
            let lane = stream.substream(n as u64).substream(RESAMPLE_LANE);
            let out = multinomial_resample(&w, lane)?;
            self.resampled = out.ancestors.iter().map(|&a| positions[a].clone()).collect();
            if self.cfg.record_pre_and_post {
                let inv = 1.0 / np as f64;
                post = self
                    .test_fns
                    .iter()
                    .map(|f| self.resampled.iter().map(|x| f(x)).sum::<f64>() * inv)
                    .collect();
            }
        }

        let cloud = ParticleCloud {
            positions,
            log_weights: crate::probkit::LogWeights::new(log_w)?,
            step: n,
            cumulative_log_z: cumulative,
        };
        if self.cfg.record_clouds {
            self.trace.clouds.push(cloud.clone());
        }
        self.weighted = Some(cloud);
        self.next += 1;
        self.trace.records.push(StepRecord {
            step: n,
            pre,
            post,
            reweighted,
            ess: ess(&w),
            log_increment: log_mean,
            cumulative_log_z: cumulative,
            elapsed: started.elapsed(),
        });
        log::trace!("step {n} done");
        Ok(self.trace.records.last().expect("just pushed"))
    }

    pub fn run(mut self) -> Result<FilterTrace<S>> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.trace)
    }
}

/// Marginal SMC over the whole horizon.
pub fn run_msmc<S: State>(
    model: &MarginalModel<S>,
    cfg: &EngineConfig,
    test_fns: &[TestFn<S>],
    stream: SeededStream,
) -> Result<FilterTrace<S>> {
    Engine::new(model, cfg.clone(), Flavor::Marginal, test_fns.to_vec(), stream)?.run()
}

/// Path-space SMC with per-ancestor weights, same schedule and streams.
pub fn run_standard_smc<S: State>(
    model: &MarginalModel<S>,
    cfg: &EngineConfig,
    test_fns: &[TestFn<S>],
    stream: SeededStream,
) -> Result<FilterTrace<S>> {
    Engine::new(model, cfg.clone(), Flavor::Standard, test_fns.to_vec(), stream)?.run()
}
