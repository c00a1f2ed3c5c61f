use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{gaussian_mixture_log_density, mixture_lse, DensityKernel, MixtureWeights, Potential};
use crate::probkit::{normal_log_pdf, SeededStream};

/// Seed that generated [`FIXTURE_OBSERVATIONS`].
pub const FIXTURE_SEED: u64 = 20_241_016;

/// `y_1..y_10` of the reference fixture, drawn once with [`FIXTURE_SEED`].
pub const FIXTURE_OBSERVATIONS: [f64; 10] = [
    0.9910157768008674,
    -0.3991248518849163,
    -0.6196571079696291,
    -0.7439859339702012,
    0.7760358930428366,
    -0.6473608520062202,
    -2.2364746433833256,
    -0.23604674673302695,
    -2.0861338455689102,
    -3.389762070407972,
];

/// `x_n = a x_{n-1} + σ_x ε_n`, `y_n = c x_n + σ_y ν_n`, `x_0 ~ N(m0, s0²)`.
/// Observations start at `n = 1`; step 0 carries only the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianSSM {
    pub a: f64,
    pub sigma_x: f64,
    pub c: f64,
    pub sigma_y: f64,
    pub m0: f64,
    pub s0: f64,
    /// `y_1..y_T`.
    pub observations: Vec<f64>,
}

/// A simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    /// `x_0..x_T`.
    pub states: Vec<f64>,
    /// `y_1..y_T`.
    pub observations: Vec<f64>,
}

impl LinearGaussianSSM {
    pub fn new(a: f64, sigma_x: f64, c: f64, sigma_y: f64, m0: f64, s0: f64, observations: Vec<f64>) -> Result<Self> {
        let ssm = LinearGaussianSSM { a, sigma_x, c, sigma_y, m0, s0, observations };
        ssm.validate()?;
        Ok(ssm)
    }

    /// The reference model: `a = 0.9`, unit noises and prior, `T = 10`.
    pub fn fixture() -> Self {
        LinearGaussianSSM {
            a: 0.9,
            sigma_x: 1.0,
            c: 1.0,
            sigma_y: 1.0,
            m0: 0.0,
            s0: 1.0,
            observations: FIXTURE_OBSERVATIONS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_x", self.sigma_x), ("sigma_y", self.sigma_y), ("s0", self.s0)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if ![self.a, self.c, self.m0].iter().all(|v| v.is_finite())
            || self.observations.iter().any(|y| !y.is_finite())
        {
            return Err(Error::Config("model parameters must be finite".into()));
        }
        Ok(())
    }

    /// Number of observations `T`.
    pub fn horizon(&self) -> usize {
        self.observations.len()
    }

    /// `y_n` for `1 ≤ n ≤ T`.
    pub fn y(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.observations.get(i).copied())
    }

    /// Keep only `y_1..y_t`.
    pub fn truncated(&self, t: usize) -> Result<Self> {
        if t > self.horizon() {
            return Err(Error::HorizonExceeded { step: t, horizon: self.horizon() });
        }
        let mut out = self.clone();
        out.observations.truncate(t);
        Ok(out)
    }

    /// Draws a path of length `t` and returns it; parameters are untouched.
    pub fn simulate(&self, t: usize, stream: SeededStream) -> Simulated {
        let mut rng = stream.rng();
        let mut z = || -> f64 { rng.sample(StandardNormal) };
        let mut states = Vec::with_capacity(t + 1);
        let mut observations = Vec::with_capacity(t);
        let mut x = self.m0 + self.s0 * z();
        states.push(x);
        for _ in 0..t {
            x = self.a * x + self.sigma_x * z();
            states.push(x);
            observations.push(self.c * x + self.sigma_y * z());
        }
        Simulated { states, observations }
    }

    /// `f_n`: the prior at step 0, the transition afterwards.
    pub fn transition(&self, n: usize) -> LinearGaussianKernel {
        if n == 0 {
            LinearGaussianKernel::new(0.0, self.m0, self.s0)
        } else {
            LinearGaussianKernel::new(self.a, 0.0, self.sigma_x)
        }
    }

    /// `g_n(y_n | ·)`, or `None` at step 0.
    pub fn observation(&self, n: usize) -> Option<GaussianObservation> {
        self.y(n).map(|y| GaussianObservation::new(self.c, self.sigma_y, y))
    }

    /// Log density of the exact one-step predictive `p(y | x_prev) =
    /// N(y; c a x_prev, c²σ_x² + σ_y²)`.
    pub fn log_predictive_likelihood(&self, y: f64, x_prev: f64) -> f64 {
        let sd = (self.c * self.c * self.sigma_x * self.sigma_x + self.sigma_y * self.sigma_y).sqrt();
        normal_log_pdf(y, self.c * self.a * x_prev, sd)
    }
}

/// `N(x; coef·x' + offset, sd²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussianKernel {
    pub coef: f64,
    pub offset: f64,
    pub sd: f64,
}

impl LinearGaussianKernel {
    pub fn new(coef: f64, offset: f64, sd: f64) -> Self {
        LinearGaussianKernel { coef, offset, sd }
    }

    pub fn mean(&self, prev: f64) -> f64 {
        self.coef * prev + self.offset
    }
}

impl DensityKernel<f64> for LinearGaussianKernel {
    fn log_density(&self, prev: &f64, x: &f64) -> f64 {
        normal_log_pdf(*x, self.mean(*prev), self.sd)
    }

    fn sample(&self, prev: &f64, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mean(*prev) + self.sd * z
    }

    fn log_density_batch(&self, prevs: &[f64], x: &f64, out: &mut [f64]) {
        const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
        let inv = 1.0 / self.sd;
        let c0 = -self.sd.ln() - HALF_LN_2PI;
        let shifted = (*x - self.offset) * inv;
        let slope = self.coef * inv;
        for (o, p) in out.iter_mut().zip(prevs) {
            let z = shifted - slope * p;
            *o = c0 - 0.5 * z * z;
        }
    }

    fn log_mixture_density(&self, prevs: &[f64], mix: &MixtureWeights, x: &f64, scratch: &mut [f64]) -> Result<f64> {
        if let Some(v) = gaussian_mixture_log_density(prevs, mix, |p| *p, *x, self.coef, self.offset, self.sd) {
            return Ok(v);
        }
        self.log_density_batch(prevs, x, scratch);
        for (t, lw) in scratch.iter_mut().zip(&mix.log_w) {
            *t += lw;
        }
        mixture_lse(scratch)
    }
}

/// `g(y | x) = N(y; c x, σ_y²)`, independent of the previous state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianObservation {
    pub c: f64,
    pub sigma_y: f64,
    pub y: f64,
}

impl GaussianObservation {
    pub fn new(c: f64, sigma_y: f64, y: f64) -> Self {
        GaussianObservation { c, sigma_y, y }
    }

    pub fn log_likelihood(&self, x: f64) -> f64 {
        normal_log_pdf(self.y, self.c * x, self.sigma_y)
    }
}

impl Potential<f64> for GaussianObservation {
    fn log_value(&self, _prev: &f64, x: &f64) -> f64 {
        self.log_likelihood(*x)
    }

    fn log_upper_bound(&self) -> Option<f64> {
        Some(normal_log_pdf(0.0, 0.0, self.sigma_y))
    }
}

/// `U ≡ 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UnitPotential;

impl<S> Potential<S> for UnitPotential {
    fn log_value(&self, _prev: &S, _x: &S) -> f64 {
        0.0
    }

    fn log_value_batch(&self, _prevs: &[S], _x: &S, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn log_upper_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_density_matches_scalar() {
        let k = LinearGaussianKernel::new(0.7, -0.3, 1.3);
        let prevs: Vec<f64> = (0..37).map(|i| -3.0 + 0.17 * i as f64).collect();
        let mut out = vec![0.0; prevs.len()];
        k.log_density_batch(&prevs, &0.4, &mut out);
        for (o, p) in out.iter().zip(&prevs) {
            assert!((o - k.log_density(p, &0.4)).abs() < 1e-13);
        }
    }

    #[test]
    fn simulate_is_reproducible() {
        let m = LinearGaussianSSM::fixture();
        let a = m.simulate(10, SeededStream::new(1, 0));
        let b = m.simulate(10, SeededStream::new(1, 0));
        assert_eq!(a, b);
        assert_eq!(a.states.len(), 11);
        assert_eq!(a.observations.len(), 10);
        assert_eq!(m.simulate(0, SeededStream::new(1, 0)).observations.len(), 0);
    }

    #[test]
    fn fixture_observations_reproduce_from_seed() {
        let m = LinearGaussianSSM::fixture();
        let sim = m.simulate(10, SeededStream::new(FIXTURE_SEED, 0));
        assert_eq!(sim.observations, FIXTURE_OBSERVATIONS.to_vec());
    }

    #[test]
    fn rejects_nonpositive_scales() {
        assert!(LinearGaussianSSM::new(0.9, 0.0, 1.0, 1.0, 0.0, 1.0, vec![]).is_err());
        assert!(LinearGaussianSSM::new(0.9, 1.0, 1.0, -1.0, 0.0, 1.0, vec![]).is_err());
    }
}
