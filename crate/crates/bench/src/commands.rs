//! One function per subcommand. Each returns its table and, where the
//! command has a pass criterion, the outcome of that check.

use std::sync::Arc;

use msmc::engine::{Engine, EngineConfig, Flavor};
use msmc::experiments::{abc_study, conditional_expectation_on_fixture, logz_study, rate_study, FinalEstimate, RateStudy};
use msmc::model::{LogReweight, MarginalModel};
use msmc::oracle::{kalman_filter, lgssm_grid};
use msmc::probkit::SeededStream;
use msmc::variance::{compare_variances, gaussian_expect, VarianceReport, Verdict};
use msmc::zoo::{make_mapf, make_mpf, LinearGaussianSSM, ProposalChoice};

use crate::config::{ExperimentConfig, Method};
use crate::error::Result;
use crate::output::{float, Table};

/// `Err` carries the reason a check failed.
pub type Check = std::result::Result<(), String>;

pub struct Outcome {
    pub table: Table,
    pub check: Option<Check>,
}

impl Outcome {
    fn plain(table: Table) -> Self {
        Outcome { table, check: None }
    }
}

fn build(ssm: &LinearGaussianSSM, proposal: &ProposalChoice, method: &Method) -> Result<(MarginalModel<f64>, Flavor, Option<LogReweight<f64>>)> {
    Ok(match method {
        Method::Marginal => (make_mpf(ssm, proposal)?, Flavor::Marginal, None),
        Method::Standard => (make_mpf(ssm, proposal)?, Flavor::Standard, None),
        Method::Auxiliary(aux) => {
            let (m, rw) = make_mapf(ssm, proposal, Arc::clone(aux))?;
            (m, Flavor::Marginal, Some(rw))
        }
    })
}

pub fn simulate(cfg: &ExperimentConfig, stream: SeededStream) -> Result<Outcome> {
    let t = cfg.simulation_horizon()?;
    let path = cfg.base_ssm()?.simulate(t, stream);
    let mut table = Table::new(&["n", "x", "y"]);
    for (n, x) in path.states.iter().enumerate() {
        let y = n.checked_sub(1).map_or(String::new(), |i| float(path.observations[i]));
        table.push(vec![n.to_string(), float(*x), y]);
    }
    Ok(Outcome::plain(table))
}

pub fn filter(cfg: &ExperimentConfig, stream: SeededStream) -> Result<Outcome> {
    let ssm = cfg.ssm()?;
    let method = cfg.method(&ssm)?;
    let (model, flavor, reweight) = build(&ssm, &cfg.proposal()?, &method)?;
    let phi = cfg.phi()?;
    let engine_cfg = EngineConfig::new(cfg.single_particle_count()?).with_post();
    let mut engine = Engine::new(&model, engine_cfg, flavor, vec![phi.as_test_fn()], stream)?;
    if let Some(rw) = reweight {
        engine = engine.with_reweight(rw);
    }
    let trace = engine.run()?;
    let kt = kalman_filter(&ssm)?;
    let mut table = Table::new(&[
        "step", "pre", "post", "reweighted", "ess", "log_increment", "cumulative_log_z", "kalman_mean",
    ]);
    let first = |v: &[f64]| v.first().map_or(String::new(), |x| float(*x));
    for r in &trace.records {
        table.push(vec![
            r.step.to_string(),
            first(&r.pre),
            first(&r.post),
            first(&r.reweighted),
            float(r.ess),
            float(r.log_increment),
            float(r.cumulative_log_z),
            float(kt.filtered[r.step].mean),
        ]);
    }
    table.note(format!("method {} phi {} kalman_log_z {}", method.name(), phi.name(), float(kt.log_z)));
    Ok(Outcome::plain(table))
}

pub fn convergence(cfg: &ExperimentConfig, stream: SeededStream) -> Result<Outcome> {
    let full = cfg.ssm()?;
    let ssm = full.truncated(cfg.step(&full)?)?;
    let method = cfg.method(&ssm)?;
    let (model, flavor, reweight) = build(&ssm, &cfg.proposal()?, &method)?;
    let phi = cfg.phi()?;
    let last = *kalman_filter(&ssm)?.filtered.last().expect("step 0 is always present");
    let truth = gaussian_expect(&|x| phi.eval(x), last.mean, last.var);
    let est = FinalEstimate { model, phi: phi.as_test_fn(), flavor, reweight };
    let study = rate_study(|n, s| est.run(n, s), truth, cfg.particles()?, cfg.replicates(2)?, stream)?;

    let mut table = Table::new(&RateStudy::csv_header());
    for rec in study.csv_records(method.name()) {
        table.push(rec);
    }
    table.note(format!("truth {}", float(truth)));
    let slope = |s: Option<f64>| s.map_or("none".to_string(), float);
    table.note(format!("slope rmse {} bias {}", slope(study.rmse_slope), slope(study.bias_slope)));

    let check = match study.rmse_slope {
        None => Err("a slope needs at least two particle counts".to_string()),
        Some(s) if !(-0.65..=-0.35).contains(&s) => Err(format!("rmse slope {s:.3} outside [-0.65, -0.35]")),
        Some(_) if cfg.filter.check_bias => match study.bias_slope {
            Some(b) if (-1.4..=-0.6).contains(&b) => Ok(()),
            Some(b) => Err(format!("bias slope {b:.3} outside [-1.4, -0.6]")),
            None => Err("bias slope unavailable".to_string()),
        },
        Some(_) => Ok(()),
    };
    Ok(Outcome { table, check: Some(check) })
}

pub fn variance(cfg: &ExperimentConfig, stream: SeededStream) -> Result<Outcome> {
    let ssm = cfg.ssm()?;
    let proposal = cfg.proposal()?;
    let n = cfg.step(&ssm)?;
    let np = cfg.single_particle_count()?;
    let r = cfg.replicates(2)?;
    let mut table = Table::new(&VarianceReport::csv_header());
    let mut failures = Vec::new();
    // Under the bootstrap proposal the two filters coincide; otherwise the
    // marginal filter should have strictly smaller variance.
    let expected = if proposal == ProposalChoice::Bootstrap { Verdict::Tied } else { Verdict::Ordered };
    for (i, phi) in cfg.phis()?.into_iter().enumerate() {
        let rep = compare_variances(&ssm, &proposal, phi, n, np, r, stream.substream(i as u64))?;
        log::info!("{}", rep.summary());
        for rec in rep.csv_records() {
            table.push(rec);
        }
        table.note(format!("{} difference {} pooled_se {}", rep.test_function, float(rep.difference), float(rep.pooled_se)));
        if rep.verdict != expected {
            failures.push(format!("{}: {} where {} was expected", rep.test_function, rep.verdict.as_str(), expected.as_str()));
        }
    }
    let check = if failures.is_empty() { Ok(()) } else { Err(failures.join("; ")) };
    Ok(Outcome { table, check: Some(check) })
}

pub fn abc(cfg: &ExperimentConfig, stream: SeededStream) -> Result<Outcome> {
    let problem = cfg.abc_problem()?;
    let rows = abc_study(&problem, cfg.single_particle_count()?, cfg.replicates(2)?, stream)?;
    let mut table = Table::new(&["stage", "eps", "mean", "mean_se", "var", "var_se", "ess", "exact_mean", "exact_var"]);
    for r in &rows {
        table.push(vec![
            r.stage.to_string(),
            float(r.eps),
            float(r.mean),
            float(r.mean_se),
            float(r.var),
            float(r.var_se),
            float(r.ess),
            float(r.exact_mean),
            float(r.exact_var),
        ]);
    }
    let last = rows.last().expect("schedule is nonempty");
    let check = if last.within(3.0) {
        Ok(())
    } else {
        Err(format!(
            "final stage mean {:.5} ± {:.5} vs {:.5}, var {:.5} ± {:.5} vs {:.5}",
            last.mean, last.mean_se, last.exact_mean, last.var, last.var_se, last.exact_var
        ))
    };
    Ok(Outcome { table, check: Some(check) })
}

pub fn conditional_mean(cfg: &ExperimentConfig, stream: SeededStream) -> Result<Outcome> {
    let ssm = cfg.ssm()?;
    let n = cfg.step(&ssm)?;
    let np = cfg.single_particle_count()?;
    let draws = cfg
        .filter
        .draws
        .ok_or_else(|| crate::error::BenchError::Config("filter.draws is required".into()))?;
    let (span, points) = cfg.grid()?;
    let grid = lgssm_grid(&ssm, span, points)?;
    let model = make_mpf(&ssm, &cfg.proposal()?)?;
    let mut table = Table::new(&["phi", "step", "particles", "draws", "mc_mean", "mc_se", "exact", "z"]);
    let mut failures = Vec::new();
    for (i, phi) in cfg.phis()?.into_iter().enumerate() {
        let ce = conditional_expectation_on_fixture(&model, n, np, &|x| phi.eval(x), draws, stream.substream(i as u64), &grid)?;
        let z = ce.z_score();
        table.push(vec![
            phi.name(),
            n.to_string(),
            np.to_string(),
            draws.to_string(),
            float(ce.mc_mean),
            float(ce.mc_se),
            float(ce.exact),
            float(z),
        ]);
        if !(z <= 4.0) {
            failures.push(format!("{}: z = {z:.2}", phi.name()));
        }
    }
    let check = if failures.is_empty() { Ok(()) } else { Err(failures.join("; ")) };
    Ok(Outcome { table, check: Some(check) })
}

pub fn logz(cfg: &ExperimentConfig, stream: SeededStream) -> Result<Outcome> {
    let ssm = cfg.ssm()?;
    let model = make_mpf(&ssm, &cfg.proposal()?)?;
    let truth = kalman_filter(&ssm)?.log_z;
    let study = logz_study(&model, truth, cfg.single_particle_count()?, cfg.replicates(2)?, stream)?;
    let mut table = Table::new(&["replicate", "log_z_hat"]);
    for (r, l) in study.log_z.iter().enumerate() {
        table.push(vec![r.to_string(), float(*l)]);
    }
    table.note(format!("truth_log_z {}", float(truth)));
    table.note(format!(
        "mean_ratio {} se {} verdict {}",
        float(study.mean_ratio),
        float(study.ratio_se),
        if study.passed { "pass" } else { "fail" }
    ));
    let check = if study.passed {
        Ok(())
    } else {
        Err(format!("mean ratio {:.5} ± {:.5} is not within 3 SE of 1", study.mean_ratio, study.ratio_se))
    };
    Ok(Outcome { table, check: Some(check) })
}
