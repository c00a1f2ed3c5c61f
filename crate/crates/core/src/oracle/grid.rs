//! Brute-force quadrature of the target recursion on a 1-D grid.

use std::io::Write;

use rayon::prelude::*;

use super::kalman::kalman_filter;
use crate::error::{Error, Result};
use crate::model::{MarginalModel, ModelStep};
use crate::probkit::{trapezoid_integrate, Grid1D};
use crate::zoo::LinearGaussianSSM;

/// Mass drift beyond which a grid is considered too coarse or too narrow.
pub const DRIFT_TOLERANCE: f64 = 1e-4;

/// A density tabulated on a grid, stored as logs.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub grid: Grid1D,
    pub log_values: Vec<f64>,
    pub normalized: bool,
}

impl GridDensity {
    /// Normalizes linear-domain values by their trapezoid integral.
    pub fn from_values(grid: Grid1D, values: &[f64]) -> Result<Self> {
        let mass = trapezoid_integrate(values, &grid)?;
        if !(mass > 0.0) {
            return Err(Error::extinction("density has no mass on the grid"));
        }
        Ok(GridDensity {
            log_values: values.iter().map(|v| (v / mass).ln()).collect(),
            grid,
            normalized: true,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|l| l.exp()).collect()
    }

    /// `∫ f p`.
    pub fn expect(&self, f: &[f64]) -> Result<f64> {
        let prod: Vec<f64> = self.values().iter().zip(f).map(|(p, v)| p * v).collect();
        trapezoid_integrate(&prod, &self.grid)
    }

    pub fn mean(&self) -> f64 {
        self.expect(self.grid.points()).unwrap_or(f64::NAN)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let sq: Vec<f64> = self.grid.points().iter().map(|x| (x - m) * (x - m)).collect();
        self.expect(&sq).unwrap_or(f64::NAN)
    }

    /// Two columns `point,density` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "point,density")?;
        for (x, l) in self.grid.points().iter().zip(&self.log_values) {
            writeln!(out, "{:.16e},{:.16e}", x, l.exp())?;
        }
        Ok(())
    }
}

/// Exact quantities of one step, tabulated on the grid.
#[derive(Debug, Clone)]
pub struct FlowStep {
    /// Density of the predictive `η_n = η̂_{n-1} M_n` (unnormalized by
    /// truncation only).
    pub eta: Vec<f64>,
    /// Normalized target density `η̂_n`.
    pub etahat: Vec<f64>,
    /// `log G_n` on the grid.
    pub log_g: Vec<f64>,
    /// `log η_n(G_n)`, the normalizing increment.
    pub log_increment: f64,
    /// `|∫ η_n − 1|`.
    pub drift: f64,
}

/// The exact flow `η_n, η̂_n, G_n` for `n = 0..=T`.
#[derive(Debug, Clone)]
pub struct GridFlow {
    pub grid: Grid1D,
    pub steps: Vec<FlowStep>,
}

impl GridFlow {
    pub fn log_z(&self) -> f64 {
        self.steps.iter().map(|s| s.log_increment).sum()
    }

    pub fn etahat_density(&self, n: usize) -> Result<GridDensity> {
        let st = self.steps.get(n).ok_or(Error::HorizonExceeded {
            step: n,
            horizon: self.steps.len().saturating_sub(1),
        })?;
        GridDensity::from_values(self.grid.clone(), &st.etahat)
    }

    pub fn worst_drift(&self) -> f64 {
        self.steps.iter().map(|s| s.drift).fold(0.0, f64::max)
    }

    /// Fails if any step lost more than [`DRIFT_TOLERANCE`] of its mass.
    pub fn ensure_resolved(&self) -> Result<()> {
        for (n, s) in self.steps.iter().enumerate() {
            if s.drift > DRIFT_TOLERANCE {
                return Err(Error::QuadratureDrift { step: n, drift: s.drift, tolerance: DRIFT_TOLERANCE });
            }
        }
        Ok(())
    }
}

/// `(∫ U k η̂ dx', ∫ m η̂ dx')` at query `x`, by trapezoid over `x'`.
fn mixtures_at(st: &ModelStep<f64>, grid: &Grid1D, prev_mass: &[f64], x: f64, buf: &mut [f64]) -> (f64, f64) {
    let pts = grid.points();
    st.kernel.log_density_batch(pts, &x, buf);
    let potential_free = st.structure.potential_prev_free;
    let lu0 = if potential_free { st.potential.log_value(&0.0, &x) } else { 0.0 };
    let mut num = 0.0;
    for (j, (b, pm)) in buf.iter().zip(prev_mass).enumerate() {
        if *pm == 0.0 {
            continue;
        }
        let lu = if potential_free { lu0 } else { st.potential.log_value(&pts[j], &x) };
        num += pm * (b + lu).exp();
    }
    st.proposal.log_density_batch(pts, &x, buf);
    let den = buf.iter().zip(prev_mass).map(|(b, pm)| pm * b.exp()).sum();
    (num, den)
}

/// Runs the exact recursion for a 1-D model on `grid`.
///
/// Steps that lose more than [`DRIFT_TOLERANCE`] of their predictive mass
/// off the grid log a warning; callers needing guarantees use
/// [`GridFlow::ensure_resolved`].
pub fn grid_flow(model: &MarginalModel<f64>, grid: &Grid1D) -> Result<GridFlow> {
    let pts = grid.points();
    let mut steps: Vec<FlowStep> = Vec::with_capacity(model.horizon() + 1);
    for n in 0..=model.horizon() {
        let st = model.step(n)?;
        let (num, eta): (Vec<f64>, Vec<f64>) = if n == 0 {
            pts.iter()
                .map(|x| {
                    let lk = st.kernel.log_density(&0.0, x);
                    let lu = st.potential.log_value(&0.0, x);
                    ((lk + lu).exp(), st.proposal.log_density(&0.0, x).exp())
                })
                .unzip()
        } else {
            let prev = &steps[n - 1].etahat;
            let prev_mass: Vec<f64> = prev.iter().zip(grid.weights()).map(|(p, w)| p * w).collect();
            pts.par_iter()
                .map_init(
                    || vec![0.0; pts.len()],
                    |buf, &x| mixtures_at(st, grid, &prev_mass, x, buf),
                )
                .unzip()
        };
        let z = trapezoid_integrate(&num, grid)?;
        if !(z > 0.0) {
            return Err(Error::extinction(format!("target has no mass on the grid at step {n}")));
        }
        let drift = (trapezoid_integrate(&eta, grid)? - 1.0).abs();
        if drift > DRIFT_TOLERANCE {
            log::warn!("grid flow step {n}: predictive mass drift {drift:e}");
        }
        let log_g = num
            .iter()
            .zip(&eta)
            .map(|(a, b)| if *a == 0.0 { f64::NEG_INFINITY } else { a.ln() - b.ln() })
            .collect();
        steps.push(FlowStep {
            etahat: num.iter().map(|v| v / z).collect(),
            eta,
            log_g,
            log_increment: z.ln(),
            drift,
        });
    }
    Ok(GridFlow { grid: grid.clone(), steps })
}

/// Normalized targets `η̂_0..η̂_T` and their log normalizing increments.
#[derive(Debug, Clone)]
pub struct GridFilter {
    pub densities: Vec<GridDensity>,
    pub log_increments: Vec<f64>,
    pub log_z: f64,
}

pub fn grid_filter(model: &MarginalModel<f64>, grid: &Grid1D) -> Result<GridFilter> {
    let flow = grid_flow(model, grid)?;
    let densities = (0..flow.steps.len()).map(|n| flow.etahat_density(n)).collect::<Result<_>>()?;
    Ok(GridFilter {
        densities,
        log_increments: flow.steps.iter().map(|s| s.log_increment).collect(),
        log_z: flow.log_z(),
    })
}

/// `G_n(x) = ∫ U_n(x', x) k_n(x', x) η̂_{n-1}(dx') / ∫ m_n(x', x) η̂_{n-1}(dx')`.
pub fn exact_marginal_weight(
    model: &MarginalModel<f64>,
    etahat_prev: &GridDensity,
    n: usize,
    x: f64,
) -> Result<f64> {
    if n == 0 {
        let st = model.step(0)?;
        let lw = st.potential.log_value(&0.0, &x) + st.kernel.log_density(&0.0, &x) - st.proposal.log_density(&0.0, &x);
        return Ok(lw.exp());
    }
    let st = model.step(n)?;
    let grid = &etahat_prev.grid;
    let prev_mass: Vec<f64> = etahat_prev.values().iter().zip(grid.weights()).map(|(p, w)| p * w).collect();
    let mut buf = vec![0.0; grid.len()];
    let (num, den) = mixtures_at(st, grid, &prev_mass, x, &mut buf);
    if !(den > 0.0) {
        return Err(Error::extinction(format!("proposal mixture underflows at x={x}, step {n}")));
    }
    Ok(num / den)
}

/// A grid spanning ±`span` standard deviations around every Kalman
/// predictive, filtering and smoothing moment of the model.
pub fn lgssm_grid(ssm: &LinearGaussianSSM, span: f64, count: usize) -> Result<Grid1D> {
    let kt = kalman_filter(ssm)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for g in kt.predicted.iter().chain(&kt.filtered).chain(&kt.smoothed) {
        lo = lo.min(g.mean - span * g.sd());
        hi = hi.max(g.mean + span * g.sd());
    }
    Grid1D::uniform(lo, hi, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelStructure, ModelStep};
    use crate::zoo::{make_bpf, LinearGaussianKernel, UnitPotential};
    use std::sync::Arc;

    #[test]
    fn random_walk_flow_is_repeated_convolution() {
        // U ≡ 1 and a unit random walk from N(0, 1): η̂_n = N(0, 1 + n).
        let walk = LinearGaussianKernel::new(1.0, 0.0, 1.0);
        let prior = LinearGaussianKernel::new(0.0, 0.0, 1.0);
        let step = |k: LinearGaussianKernel| ModelStep {
            proposal: Arc::new(k),
            kernel: Arc::new(k),
            potential: Arc::new(UnitPotential),
            structure: ModelStructure::default(),
        };
        let model = MarginalModel::new(vec![step(prior), step(walk), step(walk), step(walk)]).unwrap();
        let grid = Grid1D::uniform(-20.0, 20.0, 1601).unwrap();
        let gf = grid_filter(&model, &grid).unwrap();
        for (n, d) in gf.densities.iter().enumerate() {
            assert!(d.mean().abs() < 1e-10);
            assert!((d.variance() - (1.0 + n as f64)).abs() < 1e-8, "n={n} var={}", d.variance());
        }
        assert!(gf.log_z.abs() < 1e-8);
    }

    #[test]
    fn tiny_observation_noise_concentrates_at_the_observation() {
        let ssm = LinearGaussianSSM::new(0.9, 1.0, 2.0, 1e-3, 0.0, 1.0, vec![1.3]).unwrap();
        let model = make_bpf(&ssm).unwrap();
        let grid = Grid1D::uniform(-3.0, 3.0, 6001).unwrap();
        let gf = grid_filter(&model, &grid).unwrap();
        let d = &gf.densities[1];
        let mode = d.log_values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((grid.points()[mode] - 0.65).abs() <= 1e-3);
    }

    #[test]
    fn bootstrap_exact_weight_is_the_likelihood() {
        let ssm = LinearGaussianSSM::fixture();
        let model = make_bpf(&ssm).unwrap();
        let grid = lgssm_grid(&ssm, 8.0, 801).unwrap();
        let gf = grid_filter(&model, &grid).unwrap();
        let g = ssm.observation(2).unwrap();
        for x in [-1.0, 0.0, 2.5] {
            let w = exact_marginal_weight(&model, &gf.densities[1], 2, x).unwrap();
            assert!((w - g.log_likelihood(x).exp()).abs() < 1e-12 * (1.0 + w));
        }
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let grid = Grid1D::uniform(-1.0, 1.0, 5).unwrap();
        let d = GridDensity::from_values(grid, &[1.0; 5]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("point,density\n"));
        assert_eq!(text.lines().count(), 6);
    }
}
