//! Experiment configuration.
//!
//! A TOML file with three optional sections besides `[experiment]`. The seed
//! and the particle counts have no defaults; everything else does. Unknown
//! keys are rejected so that typos surface as configuration errors.

use std::path::PathBuf;
use std::sync::Arc;

use serde::Deserialize;

use msmc::model::TestFunction;
use msmc::probkit::SeededStream;
use msmc::zoo::abc::geometric_schedule;
use msmc::zoo::{
    AbcProblem, AbcProposal, AuxApprox, GaussianAux, LinearGaussianSSM, ProposalChoice, UnitAux, FIXTURE_OBSERVATIONS,
};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub abc: AbcSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// If present, must name the subcommand being run.
    pub kind: Option<String>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `lgssm-fixture` or `lgssm`.
    #[serde(default = "default_preset")]
    pub preset: String,
    pub a: Option<f64>,
    pub sigma_x: Option<f64>,
    pub c: Option<f64>,
    pub sigma_y: Option<f64>,
    pub m0: Option<f64>,
    pub s0: Option<f64>,
    /// Final step `T`; for the fixture, a cut of the stored data.
    pub horizon: Option<usize>,
    /// Observations `y_1..y_T` for the `lgssm` preset.
    pub observations: Option<Vec<f64>>,
}

impl Default for ModelSection {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    /// `mpf`, `pf` or `mapf`.
    #[serde(default = "default_method")]
    pub method: String,
    /// `bootstrap`, `locally-optimal` or `kalman-filtering`.
    #[serde(default = "default_proposal")]
    pub proposal: String,
    /// Scale multiplier for the `kalman-filtering` proposal.
    #[serde(default = "one")]
    pub inflate: f64,
    /// `unit`, `exact` or `inflated`, for `mapf`.
    #[serde(default = "default_aux")]
    pub aux: String,
    #[serde(default = "one")]
    pub aux_inflate: f64,
    #[serde(default)]
    pub particles: Vec<usize>,
    pub replicates: Option<usize>,
    #[serde(default = "default_phi")]
    pub phi: String,
    /// Test functions for the conditional-expectation check.
    pub phis: Option<Vec<String>>,
    /// Step at which estimates are taken; defaults to the horizon.
    pub step: Option<usize>,
    /// Draws for the conditional-expectation check.
    pub draws: Option<usize>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Grid half-width in standard deviations.
    #[serde(default = "default_grid_span")]
    pub grid_span: f64,
    /// In check mode, also require a bias slope in `[-1.4, -0.6]`.
    #[serde(default)]
    pub check_bias: bool,
}

impl Default for FilterSection {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcSection {
    pub y_obs: Option<f64>,
    #[serde(default = "default_eps_start")]
    pub eps_start: f64,
    #[serde(default = "default_eps_ratio")]
    pub eps_ratio: f64,
    #[serde(default = "default_stages")]
    pub stages: usize,
    /// `random-walk` or `prior`.
    #[serde(default = "default_abc_proposal")]
    pub proposal: String,
    #[serde(default = "default_walk_sd")]
    pub walk_sd: f64,
}

impl Default for AbcSection {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

fn default_preset() -> String {
    "lgssm-fixture".into()
}
fn default_method() -> String {
    "mpf".into()
}
fn default_proposal() -> String {
    "locally-optimal".into()
}
fn default_aux() -> String {
    "exact".into()
}
fn default_phi() -> String {
    "identity".into()
}
fn one() -> f64 {
    1.0
}
fn default_grid_points() -> usize {
    2001
}
fn default_grid_span() -> f64 {
    8.0
}
fn default_eps_start() -> f64 {
    2.0
}
fn default_eps_ratio() -> f64 {
    0.75
}
fn default_stages() -> usize {
    10
}
fn default_abc_proposal() -> String {
    "random-walk".into()
}
fn default_walk_sd() -> f64 {
    0.5
}

/// Which filter a command runs.
#[derive(Clone)]
pub enum Method {
    Marginal,
    Standard,
    Auxiliary(Arc<dyn AuxApprox>),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Marginal => "mpf",
            Method::Standard => "pf",
            Method::Auxiliary(_) => "mapf",
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn check_kind(&self, command: &str) -> Result<()> {
        match &self.experiment.kind {
            Some(k) if k != command => Err(BenchError::Config(format!(
                "config is for experiment '{k}' but the command is '{command}'"
            ))),
            _ => Ok(()),
        }
    }

    /// The seed, with a command-line override taking precedence.
    pub fn seed(&self, cli: Option<u64>) -> Result<u64> {
        cli.or(self.experiment.seed)
            .ok_or_else(|| BenchError::Config("no seed given (set experiment.seed or pass --seed)".into()))
    }

    /// The model with all configured observations, ignoring `horizon`.
    pub fn base_ssm(&self) -> Result<LinearGaussianSSM> {
        let m = &self.model;
        let base = LinearGaussianSSM::fixture();
        Ok(match m.preset.as_str() {
            "lgssm-fixture" => {
                if m.observations.is_some() || [m.a, m.sigma_x, m.c, m.sigma_y, m.m0, m.s0].iter().any(Option::is_some) {
                    return Err(BenchError::Config("the fixture preset takes no model parameters".into()));
                }
                base
            }
            "lgssm" => LinearGaussianSSM::new(
                m.a.unwrap_or(base.a),
                m.sigma_x.unwrap_or(base.sigma_x),
                m.c.unwrap_or(base.c),
                m.sigma_y.unwrap_or(base.sigma_y),
                m.m0.unwrap_or(base.m0),
                m.s0.unwrap_or(base.s0),
                m.observations.clone().unwrap_or_else(|| FIXTURE_OBSERVATIONS.to_vec()),
            )
            .map_err(|e| BenchError::Config(e.to_string()))?,
            other => return Err(BenchError::Config(format!("unknown model preset '{other}'"))),
        })
    }

    /// The model cut at `horizon` when one is given.
    pub fn ssm(&self) -> Result<LinearGaussianSSM> {
        let ssm = self.base_ssm()?;
        match self.model.horizon {
            Some(t) if t > ssm.horizon() => Err(BenchError::Config(format!(
                "horizon {t} exceeds the {} available observations",
                ssm.horizon()
            ))),
            Some(t) => Ok(ssm.truncated(t)?),
            None => Ok(ssm),
        }
    }

    /// Simulation length; unlike filtering, not bounded by the data.
    pub fn simulation_horizon(&self) -> Result<usize> {
        self.model
            .horizon
            .ok_or_else(|| BenchError::Config("simulate needs model.horizon".into()))
    }

    pub fn proposal(&self) -> Result<ProposalChoice> {
        let f = &self.filter;
        match f.proposal.as_str() {
            "bootstrap" => Ok(ProposalChoice::Bootstrap),
            "locally-optimal" => Ok(ProposalChoice::LocallyOptimal),
            "kalman-filtering" if f.inflate > 0.0 => Ok(ProposalChoice::KalmanFiltering { inflate: f.inflate }),
            "kalman-filtering" => Err(BenchError::Config("filter.inflate must be positive".into())),
            other => Err(BenchError::Config(format!("unknown proposal '{other}'"))),
        }
    }

    pub fn method(&self, ssm: &LinearGaussianSSM) -> Result<Method> {
        let f = &self.filter;
        match f.method.as_str() {
            "mpf" => Ok(Method::Marginal),
            "pf" => Ok(Method::Standard),
            "mapf" => {
                let aux: Arc<dyn AuxApprox> = match f.aux.as_str() {
                    "unit" => Arc::new(UnitAux),
                    "exact" => Arc::new(GaussianAux::exact(ssm)),
                    "inflated" if f.aux_inflate > 0.0 => Arc::new(GaussianAux::inflated(ssm, f.aux_inflate)),
                    "inflated" => return Err(BenchError::Config("filter.aux_inflate must be positive".into())),
                    other => return Err(BenchError::Config(format!("unknown auxiliary approximation '{other}'"))),
                };
                Ok(Method::Auxiliary(aux))
            }
            other => Err(BenchError::Config(format!("unknown method '{other}'"))),
        }
    }

    pub fn particles(&self) -> Result<&[usize]> {
        let p = &self.filter.particles;
        if p.is_empty() || p.contains(&0) {
            return Err(BenchError::Config(
                "filter.particles must be a nonempty list of positive integers".into(),
            ));
        }
        Ok(p)
    }

    /// The first entry of the particle list.
    pub fn single_particle_count(&self) -> Result<usize> {
        Ok(self.particles()?[0])
    }

    pub fn replicates(&self, min: usize) -> Result<usize> {
        match self.filter.replicates {
            Some(r) if r >= min => Ok(r),
            Some(r) => Err(BenchError::Config(format!("filter.replicates = {r}, need at least {min}"))),
            None => Err(BenchError::Config("filter.replicates is required".into())),
        }
    }

    pub fn phi(&self) -> Result<TestFunction> {
        parse_phi(&self.filter.phi)
    }

    pub fn phis(&self) -> Result<Vec<TestFunction>> {
        match &self.filter.phis {
            Some(list) if list.is_empty() => Err(BenchError::Config("filter.phis is empty".into())),
            Some(list) => list.iter().map(|s| parse_phi(s)).collect(),
            None => Ok(vec![self.phi()?]),
        }
    }

    pub fn step(&self, ssm: &LinearGaussianSSM) -> Result<usize> {
        match self.filter.step {
            Some(n) if n > ssm.horizon() => Err(BenchError::Config(format!(
                "filter.step {n} exceeds the horizon {}",
                ssm.horizon()
            ))),
            Some(n) => Ok(n),
            None => Ok(ssm.horizon()),
        }
    }

    pub fn grid(&self) -> Result<(f64, usize)> {
        let f = &self.filter;
        if f.grid_points < 3 || !(f.grid_span > 0.0) {
            return Err(BenchError::Config("grid needs at least 3 points and a positive span".into()));
        }
        Ok((f.grid_span, f.grid_points))
    }

    pub fn abc_problem(&self) -> Result<AbcProblem> {
        let a = &self.abc;
        let y = a.y_obs.ok_or_else(|| BenchError::Config("abc.y_obs is required".into()))?;
        if !(a.eps_ratio > 0.0 && a.eps_ratio < 1.0) || a.stages == 0 {
            return Err(BenchError::Config("abc.eps_ratio must lie in (0, 1) and abc.stages be positive".into()));
        }
        let mut p = AbcProblem::gaussian_toy(y);
        p.schedule = geometric_schedule(a.eps_start, a.eps_ratio, a.stages);
        p.proposal = match a.proposal.as_str() {
            "random-walk" => AbcProposal::RandomWalk { sd: a.walk_sd },
            "prior" => AbcProposal::Prior,
            other => return Err(BenchError::Config(format!("unknown abc proposal '{other}'"))),
        };
        p.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn stream(&self, cli_seed: Option<u64>) -> Result<SeededStream> {
        Ok(SeededStream::new(self.seed(cli_seed)?, 0))
    }
}

fn parse_phi(s: &str) -> Result<TestFunction> {
    s.parse::<TestFunction>().map_err(|e| BenchError::Config(format!("test function '{s}': {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::parse("[experiment]\nseed = 3\n").unwrap();
        assert_eq!(c.seed(None).unwrap(), 3);
        assert_eq!(c.seed(Some(9)).unwrap(), 9);
        assert_eq!(c.filter.grid_points, 2001);
        assert_eq!(c.ssm().unwrap().horizon(), 10);
        assert!(c.particles().is_err());
    }

    #[test]
    fn unknown_keys_and_missing_seed_are_config_errors() {
        assert!(ExperimentConfig::parse("[experiment]\nseed = 1\nsed = 2\n").is_err());
        let c = ExperimentConfig::parse("[experiment]\n").unwrap();
        assert_eq!(c.seed(None).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn kind_must_match_command() {
        let c = ExperimentConfig::parse("[experiment]\nkind = \"logz\"\nseed = 1\n").unwrap();
        assert!(c.check_kind("logz").is_ok());
        assert!(c.check_kind("abc").is_err());
    }
}
