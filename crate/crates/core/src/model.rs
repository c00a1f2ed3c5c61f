//! Target sequences and particle data.
//!
//! A [`MarginalModel`] holds, for every step `n = 0..=T`, a proposal `M_n`,
//! a kernel `K_n` and a potential `U_n`. The target recursion is
//! `η̂_n(dx) ∝ ∫ η̂_{n-1}(dx') U_n(x', x) K_n(x', dx)`. Densities are taken
//! with respect to one dominating measure fixed by whoever builds the model;
//! the library only ever forms differences of log-densities. At step 0 the
//! previous state is ignored and callers pass `S::default()`.

use std::fmt::Debug;
use std::sync::Arc;
use std::time::Duration;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::probkit::{exp_nonpositive, logsumexp, normalize_log_weights, trapezoid_integrate, Grid1D, LogWeights, SeededStream};

/// State types usable by the engines.
pub trait State: Clone + Default + Debug + Send + Sync + 'static {}
impl<T: Clone + Default + Debug + Send + Sync + 'static> State for T {}

/// Normalized mixture weights of a weighted cloud, held both as logs and as
/// linear values rescaled by the largest weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights {
    pub log_w: Vec<f64>,
    /// `exp(log_w − log_scale)`, so the largest entry is 1.
    pub scaled: Vec<f64>,
    pub log_scale: f64,
}

impl MixtureWeights {
    /// From log-weights that are already normalized.
    pub fn from_log(log_w: Vec<f64>) -> Self {
        let log_scale = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled = log_w.iter().map(|l| (l - log_scale).exp()).collect();
        MixtureWeights { log_w, scaled, log_scale }
    }

    /// A copy with `shift[j]` added to every log-weight (not renormalized).
    pub fn tilted(&self, shift: &[f64]) -> Self {
        Self::from_log(self.log_w.iter().zip(shift).map(|(l, s)| l + s).collect())
    }

    pub fn len(&self) -> usize {
        self.log_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_w.is_empty()
    }
}

/// `log Σ_j W_j N(x; coef·key(prevs[j]) + offset, sd²)` in one fused pass
/// over the rescaled linear weights. `None` when the sum comes close enough
/// to underflow that the caller should use the log-domain path instead.
#[inline]
pub(crate) fn gaussian_mixture_log_density<T>(
    prevs: &[T],
    mix: &MixtureWeights,
    key: impl Fn(&T) -> f64,
    x: f64,
    coef: f64,
    offset: f64,
    sd: f64,
) -> Option<f64> {
    const LANES: usize = 8;
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    let inv = 1.0 / sd;
    let shifted = (x - offset) * inv;
    let neg_slope = -coef * inv;
    let mut acc = [0.0f64; LANES];
    let pc = prevs.chunks_exact(LANES);
    let wc = mix.scaled.chunks_exact(LANES);
    let (pt, wt) = (pc.remainder(), wc.remainder());
    for (p, w) in pc.zip(wc) {
        for l in 0..LANES {
            let z = neg_slope.mul_add(key(&p[l]), shifted);
            acc[l] = w[l].mul_add(exp_nonpositive(-0.5 * z * z), acc[l]);
        }
    }
    let mut sum: f64 = acc.iter().sum();
    for (p, w) in pt.iter().zip(wt) {
        let z = neg_slope.mul_add(key(p), shifted);
        sum = w.mul_add(exp_nonpositive(-0.5 * z * z), sum);
    }
    (sum > 1e-280 && sum.is_finite()).then(|| sum.ln() + mix.log_scale - sd.ln() - HALF_LN_2PI)
}

/// `log Σ exp(v_j)` with an identically zero mixture mapped to `-inf`.
pub(crate) fn mixture_lse(v: &[f64]) -> Result<f64> {
    match logsumexp(v) {
        Err(Error::Extinction { .. }) => Ok(f64::NEG_INFINITY),
        other => other,
    }
}

/// A Markov kernel exposed as a log-density and a sampler.
pub trait DensityKernel<S>: Send + Sync {
    fn log_density(&self, prev: &S, x: &S) -> f64;

    fn sample(&self, prev: &S, rng: &mut ChaCha8Rng) -> S;

    /// `out[j] = log_density(&prevs[j], x)`. Override with a tight loop; this
    /// sits inside the O(N²) weight computation.
    fn log_density_batch(&self, prevs: &[S], x: &S, out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(prevs) {
            *o = self.log_density(p, x);
        }
    }

    /// `log Σ_j W_j k(prevs[j], x)`; `-inf` if every term vanishes.
    /// `scratch` has the length of `prevs`.
    fn log_mixture_density(&self, prevs: &[S], mix: &MixtureWeights, x: &S, scratch: &mut [f64]) -> Result<f64> {
        self.log_density_batch(prevs, x, scratch);
        for (t, lw) in scratch.iter_mut().zip(&mix.log_w) {
            *t += lw;
        }
        mixture_lse(scratch)
    }
}

/// A nonnegative potential `U_n(x', x)` in log form.
pub trait Potential<S>: Send + Sync {
    fn log_value(&self, prev: &S, x: &S) -> f64;

    fn log_value_batch(&self, prevs: &[S], x: &S, out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(prevs) {
            *o = self.log_value(p, x);
        }
    }

    /// Declared `sup log U`, if the model promises one.
    fn log_upper_bound(&self) -> Option<f64> {
        None
    }

    /// For a potential of product form `log U(x', x) = a(x') + b(x)`,
    /// returns `a(prev)`; then `b(x) = log_value(prev, x) − a(prev)` for any
    /// `prev`. `None` when no such split is declared.
    fn log_prev_factor(&self, _prev: &S) -> Option<f64> {
        None
    }
}

/// Algebraic shortcuts a step may declare. Each tag is a promise checked by
/// [`validate_model`]; the engines trust it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModelStructure {
    /// `U_n(x', x)` does not depend on `x'`.
    pub potential_prev_free: bool,
    /// `M_n(x', ·)` does not depend on `x'`.
    pub proposal_prev_free: bool,
    /// `K_n(x', ·)` does not depend on `x'`.
    pub kernel_prev_free: bool,
    /// `M_n` and `K_n` are the same kernel.
    pub proposal_is_kernel: bool,
}

/// The triple `(M_n, K_n, U_n)` for one step.
pub struct ModelStep<S> {
    pub proposal: Arc<dyn DensityKernel<S>>,
    pub kernel: Arc<dyn DensityKernel<S>>,
    pub potential: Arc<dyn Potential<S>>,
    pub structure: ModelStructure,
}

impl<S> Clone for ModelStep<S> {
    fn clone(&self) -> Self {
        ModelStep {
            proposal: Arc::clone(&self.proposal),
            kernel: Arc::clone(&self.kernel),
            potential: Arc::clone(&self.potential),
            structure: self.structure,
        }
    }
}

/// An immutable MSMC target sequence over steps `0..=T`.
pub struct MarginalModel<S> {
    steps: Vec<ModelStep<S>>,
}

impl<S> Clone for MarginalModel<S> {
    fn clone(&self) -> Self {
        MarginalModel {
            steps: self.steps.clone(),
        }
    }
}

impl<S: State> MarginalModel<S> {
    pub fn new(steps: Vec<ModelStep<S>>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidInput("a model needs at least step 0".into()));
        }
        Ok(MarginalModel { steps })
    }

    /// The final step index `T`.
    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn step(&self, n: usize) -> Result<&ModelStep<S>> {
        self.steps.get(n).ok_or(Error::HorizonExceeded {
            step: n,
            horizon: self.horizon(),
        })
    }

    pub fn steps(&self) -> &[ModelStep<S>] {
        &self.steps
    }

    /// The same model cut at step `t`.
    pub fn truncated(&self, t: usize) -> Result<Self> {
        self.step(t)?;
        Ok(MarginalModel {
            steps: self.steps[..=t].to_vec(),
        })
    }
}

/// A scalar test function `φ`.
pub type TestFn<S> = Arc<dyn Fn(&S) -> f64 + Send + Sync>;

/// An extra log-weight `(n, x) ↦ log w̃_n(x)` applied only when reporting.
pub type LogReweight<S> = Arc<dyn Fn(usize, &S) -> f64 + Send + Sync>;

/// Catalogue of scalar test functions on 1-D states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    Constant(f64),
    Identity,
    Square,
    /// Logistic step `1 / (1 + exp(−(x − at)/width))`.
    SmoothIndicator { at: f64, width: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Constant(c) => c,
            TestFunction::Identity => x,
            TestFunction::Square => x * x,
            TestFunction::SmoothIndicator { at, width } => 1.0 / (1.0 + (-(x - at) / width).exp()),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            TestFunction::Constant(c) => format!("constant({c})"),
            TestFunction::Identity => "identity".into(),
            TestFunction::Square => "square".into(),
            TestFunction::SmoothIndicator { at, width } => format!("smooth_indicator({at},{width})"),
        }
    }

    pub fn tabulate(&self, grid: &Grid1D) -> Vec<f64> {
        grid.points().iter().map(|&x| self.eval(x)).collect()
    }

    pub fn as_test_fn(&self) -> TestFn<f64> {
        let f = *self;
        Arc::new(move |x: &f64| f.eval(*x))
    }
}

impl std::str::FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "identity" => return Ok(TestFunction::Identity),
            "square" => return Ok(TestFunction::Square),
            "one" => return Ok(TestFunction::Constant(1.0)),
            "zero" => return Ok(TestFunction::Constant(0.0)),
            _ => {}
        }
        let args = |prefix: &str| -> Option<Vec<f64>> {
            let inner = s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
            inner.split(',').map(|t| t.trim().parse().ok()).collect()
        };
        if let Some(v) = args("constant") {
            if v.len() == 1 {
                return Ok(TestFunction::Constant(v[0]));
            }
        }
        if let Some(v) = args("smooth_indicator") {
            if v.len() == 2 && v[1] > 0.0 {
                return Ok(TestFunction::SmoothIndicator { at: v[0], width: v[1] });
            }
        }
        Err(Error::Config(format!("unknown test function `{s}`")))
    }
}

/// `N` particles with unnormalized log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud<S> {
    pub positions: Vec<S>,
    pub log_weights: LogWeights,
    pub step: usize,
    /// Running `Σ_p log η_p^N(G_p^N)`.
    pub cumulative_log_z: f64,
}

impl<S: State> ParticleCloud<S> {
    pub fn new(positions: Vec<S>, log_weights: Vec<f64>, step: usize) -> Result<Self> {
        if positions.len() != log_weights.len() {
            return Err(Error::LengthMismatch {
                expected: positions.len(),
                actual: log_weights.len(),
            });
        }
        Ok(ParticleCloud {
            positions,
            log_weights: LogWeights::new(log_weights)?,
            step,
            cumulative_log_z: 0.0,
        })
    }

    /// Equally weighted cloud.
    pub fn uniform(positions: Vec<S>, step: usize) -> Result<Self> {
        let n = positions.len();
        Self::new(positions, vec![0.0; n], step)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        Ok(normalize_log_weights(&self.log_weights)?.0)
    }
}

/// `Σ W_i φ(X_i)` under the cloud's normalized weights.
pub fn weighted_estimate<S: State>(cloud: &ParticleCloud<S>, phi: &dyn Fn(&S) -> f64) -> Result<f64> {
    let w = cloud.normalized_weights()?;
    Ok(estimate_with(&w, &cloud.positions, phi))
}

pub(crate) fn estimate_with<S>(weights: &[f64], positions: &[S], phi: &dyn Fn(&S) -> f64) -> f64 {
    weights
        .iter()
        .zip(positions)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, x)| w * phi(x))
        .sum()
}

/// One step of a filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// `Ψ_{G_n^N}(η_n^N)(φ)` for each registered test function.
    pub pre: Vec<f64>,
    /// `η̂_n^N(φ)`, empty unless post-resampling recording is on.
    pub post: Vec<f64>,
    /// Estimates under the reporting reweight (e.g. inferential weights).
    pub reweighted: Vec<f64>,
    pub ess: f64,
    pub log_increment: f64,
    pub cumulative_log_z: f64,
    pub elapsed: Duration,
}

/// Output of an engine run.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace<S> {
    pub records: Vec<StepRecord>,
    /// Pre-resampling clouds, when requested.
    pub clouds: Vec<ParticleCloud<S>>,
}

impl<S: PartialEq> FilterTrace<S> {
    pub fn log_z(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_log_z)
    }

    /// Bitwise equality of every numeric field except wall time.
    pub fn numerically_identical(&self, other: &Self) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.step == b.step
                    && bits(&a.pre) == bits(&b.pre)
                    && bits(&a.post) == bits(&b.post)
                    && bits(&a.reweighted) == bits(&b.reweighted)
                    && a.ess.to_bits() == b.ess.to_bits()
                    && a.log_increment.to_bits() == b.log_increment.to_bits()
                    && a.cumulative_log_z.to_bits() == b.cumulative_log_z.to_bits()
            })
            && self.clouds == other.clouds
    }
}

/// Findings of [`validate_model`].
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    /// Worst `|∫ k − 1|` over kernels, proposals and tested previous states.
    pub worst_normalization_error: f64,
    /// Some sampled state had `U·dK/dM = 0`.
    pub positivity_violated: bool,
    /// `K` has mass where `M` has none, so `dK/dM` is unbounded.
    pub unbounded_ratio: bool,
    /// Largest `log U − declared bound` seen (≤ 0 when bounds hold).
    pub worst_bound_excess: f64,
    /// A declared structure tag disagreed with the densities.
    pub structure_violated: bool,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.worst_normalization_error < 1e-6
            && !self.positivity_violated
            && !self.unbounded_ratio
            && self.worst_bound_excess <= 0.0
            && !self.structure_violated
    }
}

/// Checks a 1-D model on a grid: kernel normalization, positivity of
/// `U_n·dK_n/dM_n` on proposal samples, boundedness of `dK_n/dM_n`,
/// declared potential bounds and structure tags.
pub fn validate_model(model: &MarginalModel<f64>, grid: &Grid1D) -> ValidationReport {
    const SAMPLES: usize = 256;
    let mut report = ValidationReport {
        worst_bound_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    let pts = grid.points();
    let probe_prevs: Vec<f64> = [0.3, 0.45, 0.5, 0.55, 0.7]
        .iter()
        .map(|q| grid.lo() + q * (grid.hi() - grid.lo()))
        .collect();
    let stream = SeededStream::new(0x5eed, 0);

    for (n, st) in model.steps().iter().enumerate() {
        let prevs: Vec<f64> = if n == 0 { vec![0.0] } else { probe_prevs.clone() };
        for &prev in &prevs {
            for (label, k) in [("kernel", &st.kernel), ("proposal", &st.proposal)] {
                let dens: Vec<f64> = pts.iter().map(|x| k.log_density(&prev, x).exp()).collect();
                let mass = trapezoid_integrate(&dens, grid).unwrap_or(f64::NAN);
                let err = (mass - 1.0).abs();
                if !(err <= report.worst_normalization_error) {
                    report.worst_normalization_error = if err.is_nan() { f64::INFINITY } else { err };
                }
                if err > 1e-6 || err.is_nan() {
                    report
                        .messages
                        .push(format!("step {n}: {label} at x'={prev} integrates to {mass}"));
                }
            }
            for &x in pts {
                let lk = st.kernel.log_density(&prev, &x);
                let lm = st.proposal.log_density(&prev, &x);
                if lk > f64::NEG_INFINITY && lm == f64::NEG_INFINITY && !report.unbounded_ratio {
                    report.unbounded_ratio = true;
                    report
                        .messages
                        .push(format!("step {n}: dK/dM = +inf at x={x} (x'={prev})"));
                }
                if let Some(b) = st.potential.log_upper_bound() {
                    let lu = st.potential.log_value(&prev, &x);
                    report.worst_bound_excess = report.worst_bound_excess.max(lu - b);
                }
            }
            let mut rng = stream.lane2(n as u64, prev.to_bits()).rng();
            for _ in 0..SAMPLES {
                let x = st.proposal.sample(&prev, &mut rng);
                let lw = st.potential.log_value(&prev, &x) + st.kernel.log_density(&prev, &x)
                    - st.proposal.log_density(&prev, &x);
                if lw == f64::NEG_INFINITY || lw.is_nan() {
                    if !report.positivity_violated {
                        report
                            .messages
                            .push(format!("step {n}: U·dK/dM vanishes at sampled x={x}"));
                    }
                    report.positivity_violated = true;
                }
            }
        }
        if n > 0 {
            check_structure(n, st, &probe_prevs, pts, &mut report);
        }
    }
    if report.worst_bound_excess == f64::NEG_INFINITY {
        report.worst_bound_excess = 0.0;
    }
    report
}

fn check_structure(n: usize, st: &ModelStep<f64>, prevs: &[f64], pts: &[f64], report: &mut ValidationReport) {
    let stride = (pts.len() / 41).max(1);
    let same = |a: f64, b: f64| a == b || (a - b).abs() <= 1e-12 * (1.0 + a.abs());
    for &x in pts.iter().step_by(stride) {
        let (p0, rest) = (prevs[0], &prevs[1..]);
        for &p in rest {
            if st.structure.potential_prev_free
                && !same(st.potential.log_value(&p0, &x), st.potential.log_value(&p, &x))
            {
                report.structure_violated = true;
            }
            if st.structure.proposal_prev_free
                && !same(st.proposal.log_density(&p0, &x), st.proposal.log_density(&p, &x))
            {
                report.structure_violated = true;
            }
            if st.structure.kernel_prev_free
                && !same(st.kernel.log_density(&p0, &x), st.kernel.log_density(&p, &x))
            {
                report.structure_violated = true;
            }
        }
        if st.structure.proposal_is_kernel
            && !same(st.proposal.log_density(&p0, &x), st.kernel.log_density(&p0, &x))
        {
            report.structure_violated = true;
        }
        // A declared product form must leave the same x-factor for every x'.
        if let Some(a0) = st.potential.log_prev_factor(&p0) {
            let b0 = st.potential.log_value(&p0, &x) - a0;
            for &p in rest {
                let b = st.potential.log_prev_factor(&p).map(|a| st.potential.log_value(&p, &x) - a);
                if !b.is_some_and(|b| (b - b0).abs() <= 1e-9 * (1.0 + b0.abs())) {
                    report.structure_violated = true;
                }
            }
        }
    }
    if report.structure_violated {
        report
            .messages
            .push(format!("step {n}: declared structure tags do not hold"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weighted_estimate_examples() {
        let c = ParticleCloud::new(vec![0.0, 4.0], vec![0.25f64.ln(), 0.75f64.ln()], 0).unwrap();
        assert!((weighted_estimate(&c, &|x| *x).unwrap() - 3.0).abs() < 1e-15);

        let u = ParticleCloud::uniform(vec![1.0, 2.0, 3.0], 0).unwrap();
        assert!((weighted_estimate(&u, &|_| 7.5).unwrap() - 7.5).abs() < 1e-14);

        let hot = ParticleCloud::new(
            vec![1.0, 2.0, 3.0],
            vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY],
            0,
        )
        .unwrap();
        assert_eq!(weighted_estimate(&hot, &|x| x * 10.0).unwrap(), 20.0);
    }

    #[test]
    fn dead_cloud_is_an_error() {
        let c = ParticleCloud::new(vec![1.0, 2.0], vec![f64::NEG_INFINITY; 2], 0).unwrap();
        assert!(matches!(weighted_estimate(&c, &|x| *x), Err(Error::Extinction { .. })));
        assert!(ParticleCloud::<f64>::new(vec![1.0], vec![0.0, 0.0], 0).is_err());
    }

    #[test]
    fn test_function_parsing_round_trips() {
        for f in [
            TestFunction::Identity,
            TestFunction::Square,
            TestFunction::Constant(2.5),
            TestFunction::SmoothIndicator { at: 0.5, width: 0.25 },
        ] {
            assert_eq!(f.name().parse::<TestFunction>().unwrap(), f);
        }
        assert!("cube".parse::<TestFunction>().is_err());
    }

    proptest! {
        #[test]
        fn estimate_is_linear_and_shift_invariant(
            xs in prop::collection::vec(-5.0f64..5.0, 1..40),
            lw in prop::collection::vec(-20.0f64..20.0, 40),
            shift in -500.0f64..500.0,
            a in -3.0f64..3.0,
        ) {
            let n = xs.len();
            let c = ParticleCloud::new(xs.clone(), lw[..n].to_vec(), 0).unwrap();
            let shifted = ParticleCloud::new(xs, lw[..n].iter().map(|v| v + shift).collect(), 0).unwrap();
            let e1 = weighted_estimate(&c, &|x| *x).unwrap();
            let e2 = weighted_estimate(&c, &|x| x * x).unwrap();
            let comb = weighted_estimate(&c, &|x| a * x + x * x).unwrap();
            prop_assert!((comb - (a * e1 + e2)).abs() < 1e-10);
            prop_assert!((weighted_estimate(&shifted, &|x| *x).unwrap() - e1).abs() < 1e-10);
            prop_assert!((weighted_estimate(&c, &|_| 1.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
