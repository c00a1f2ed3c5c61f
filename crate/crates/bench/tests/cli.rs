use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn bench(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msmc-bench"))
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data lines of a table, skipping comments and the header.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn simulate_is_reproducible_and_framed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "sim.toml", "[experiment]\nseed = 11\n[model]\npreset = \"lgssm\"\nhorizon = 4\n");
    let a = bench(&["simulate"], &cfg);
    let b = bench(&["simulate"], &cfg);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), format!("# msmc-bench {}", env!("CARGO_PKG_VERSION")));
    assert!(lines.next().unwrap().starts_with("# config-sha256 "));
    assert_eq!(lines.next().unwrap(), "# seed 11");
    assert_eq!(lines.next().unwrap(), "# command simulate");
    assert_eq!(lines.next().unwrap(), "n,x,y");
    let r = rows(&text);
    assert_eq!(r.len(), 5);
    assert_eq!(r[0][2], "");
    assert!(r[1..].iter().all(|row| num(&row[2]).is_finite()));

    let other = bench(&["simulate", "--seed", "12"], &cfg);
    assert_ne!(rows(&stdout(&other)), r);
}

#[test]
fn simulate_zero_horizon_is_prior_draw_only() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "sim.toml", "[experiment]\nseed = 1\n[model]\npreset = \"lgssm\"\nhorizon = 0\n");
    let o = bench(&["simulate"], &cfg);
    assert!(o.status.success());
    assert_eq!(rows(&stdout(&o)).len(), 1);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let no_seed = write_config(&dir, "a.toml", "[experiment]\n[filter]\nparticles = [8]\nreplicates = 2\n");
    assert_eq!(bench(&["logz"], &no_seed).status.code(), Some(2));
    let typo = write_config(&dir, "b.toml", "[experiment]\nseed = 1\n[filter]\nparticle = [8]\n");
    assert_eq!(bench(&["logz"], &typo).status.code(), Some(2));
    let wrong_kind = write_config(&dir, "c.toml", "[experiment]\nkind = \"abc\"\nseed = 1\n");
    assert_eq!(bench(&["logz"], &wrong_kind).status.code(), Some(2));
    let no_particles = write_config(&dir, "d.toml", "[experiment]\nseed = 1\n");
    assert_eq!(bench(&["filter"], &no_particles).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    assert_eq!(bench(&["filter"], &missing).status.code(), Some(2));
}

#[test]
fn output_goes_to_the_requested_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "f.toml", "[experiment]\nseed = 3\n[model]\nhorizon = 2\n[filter]\nparticles = [16]\n");
    let out = dir.path().join("trace.csv");
    let o = bench(&["filter", "--out", out.to_str().unwrap()], &cfg);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("step,pre,post,reweighted,ess,log_increment,cumulative_log_z,kalman_mean"));
    assert_eq!(rows(&text).len(), 3);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "l.toml", "[experiment]\nseed = 5\n[model]\nhorizon = 3\n[filter]\nparticles = [64]\nreplicates = 6\n");
    let one = bench(&["logz", "--threads", "1"], &cfg);
    let four = bench(&["logz", "--threads", "4"], &cfg);
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn logz_at_time_zero_is_exact() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "l.toml",
        "[experiment]\nseed = 5\n[model]\nhorizon = 0\n[filter]\nparticles = [8]\nreplicates = 3\nproposal = \"bootstrap\"\n",
    );
    let o = bench(&["logz", "--check"], &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(rows(&stdout(&o)).iter().all(|r| num(&r[1]) == 0.0));
}

#[test]
fn variance_check_follows_the_proposal() {
    let dir = TempDir::new().unwrap();
    let boot = write_config(
        &dir,
        "b.toml",
        "[experiment]\nseed = 2\n[model]\nhorizon = 2\n[filter]\nparticles = [16]\nreplicates = 8\nproposal = \"bootstrap\"\n",
    );
    let o = bench(&["variance", "--check"], &boot);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 2);
    assert_eq!(r[0][5], r[1][5]);
    assert!(r.iter().all(|row| row[9] == "tied"));

    // At time zero both filters weight exactly, so the required ordering
    // under a non-bootstrap proposal cannot appear.
    let lo = write_config(&dir, "l.toml", "[experiment]\nseed = 2\n[model]\nhorizon = 0\n[filter]\nparticles = [8]\nreplicates = 2\n");
    assert_eq!(bench(&["variance", "--check"], &lo).status.code(), Some(4));
    assert_eq!(bench(&["variance"], &lo).status.code(), Some(0));
}

#[test]
fn conditional_mean_of_zero_function_is_exact() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "p.toml",
        "[experiment]\nseed = 4\n[model]\nhorizon = 2\n[filter]\nparticles = [16]\ndraws = 20\nphis = [\"zero\", \"identity\"]\ngrid_points = 801\n",
    );
    let o = bench(&["prop5", "--check"], &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 2);
    assert_eq!((num(&r[0][4]), num(&r[0][6]), num(&r[0][7])), (0.0, 0.0, 0.0));
}

#[test]
fn abc_with_a_huge_tolerance_returns_the_prior() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "a.toml",
        "[experiment]\nseed = 9\n[filter]\nparticles = [200]\nreplicates = 20\n[abc]\ny_obs = 1.5\neps_start = 1e6\nstages = 1\nproposal = \"prior\"\n",
    );
    let o = bench(&["abc", "--check"], &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 1);
    let (mean, mean_se, var, var_se) = (num(&r[0][2]), num(&r[0][3]), num(&r[0][4]), num(&r[0][5]));
    assert!(mean.abs() < 4.0 * mean_se, "mean {mean} ± {mean_se}");
    assert!((var - 1.0).abs() < 4.0 * var_se + 0.01, "var {var} ± {var_se}");
}

#[test]
fn convergence_with_one_particle_count_reports_no_slope() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.toml",
        "[experiment]\nseed = 6\n[model]\nhorizon = 1\n[filter]\nparticles = [32]\nreplicates = 4\n",
    );
    let o = bench(&["convergence"], &cfg);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("# slope rmse none bias none"));
    assert_eq!(rows(&text).len(), 1);
    assert_eq!(bench(&["convergence", "--check"], &cfg).status.code(), Some(4));
}

#[test]
fn auxiliary_filter_reports_reweighted_estimates() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "m.toml",
        "[experiment]\nseed = 8\n[model]\nhorizon = 3\n[filter]\nmethod = \"mapf\"\naux = \"inflated\"\naux_inflate = 1.5\nparticles = [64]\n",
    );
    let o = bench(&["filter"], &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(rows(&stdout(&o)).iter().all(|r| num(&r[3]).is_finite()));
}
