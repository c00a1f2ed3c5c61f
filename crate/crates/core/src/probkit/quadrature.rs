use crate::error::{Error, Result};

/// Default number of abscissae for oracle grids.
pub const DEFAULT_GRID_POINTS: usize = 2001;
/// Default half-width of a centered grid, in units of the scale.
pub const DEFAULT_SPAN: f64 = 8.0;

/// A strictly increasing set of abscissae with composite trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid1D {
    /// Trapezoid weights for arbitrary strictly increasing points.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput("a grid needs at least two points".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("grid points must be finite".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "grid points must be strictly increasing".into(),
            ));
        }
        let n = points.len();
        let mut weights = vec![0.0; n];
        for i in 0..n - 1 {
            let h = 0.5 * (points[i + 1] - points[i]);
            weights[i] += h;
            weights[i + 1] += h;
        }
        Ok(Grid1D { points, weights })
    }

    /// `count` equally spaced points on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(hi > lo) || count < 2 {
            return Err(Error::InvalidInput(format!(
                "uniform grid needs lo < hi and count >= 2 (got [{lo}, {hi}], {count})"
            )));
        }
        let h = (hi - lo) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|i| lo + i as f64 * h).collect();
        points[count - 1] = hi;
        Self::from_points(points)
    }

    /// `[center − span·scale, center + span·scale]`.
    pub fn centered(center: f64, scale: f64, span: f64, count: usize) -> Result<Self> {
        if !(scale > 0.0) || !(span > 0.0) {
            return Err(Error::InvalidInput("grid scale and span must be positive".into()));
        }
        Self::uniform(center - span * scale, center + span * scale, count)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Index of the grid cell `[p_i, p_{i+1})` containing `x`, or `None` outside.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if x < self.lo() || x > self.hi() {
            return None;
        }
        let i = self.points.partition_point(|&p| p <= x);
        Some(i.saturating_sub(1).min(self.points.len() - 2))
    }

    /// Piecewise-linear interpolation of tabulated values at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Result<f64> {
        check_len(self, values)?;
        let i = self
            .cell_of(x)
            .ok_or_else(|| Error::InvalidInput(format!("{x} lies outside the grid")))?;
        let (x0, x1) = (self.points[i], self.points[i + 1]);
        let t = (x - x0) / (x1 - x0);
        Ok(values[i] + t * (values[i + 1] - values[i]))
    }
}

fn check_len(grid: &Grid1D, f: &[f64]) -> Result<()> {
    if f.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            actual: f.len(),
        });
    }
    Ok(())
}

/// Composite trapezoid rule `Σ w_i f_i`.
pub fn trapezoid_integrate(f_values: &[f64], grid: &Grid1D) -> Result<f64> {
    check_len(grid, f_values)?;
    Ok(f_values
        .iter()
        .zip(grid.weights())
        .map(|(f, w)| f * w)
        .sum())
}

/// `log ∫ exp(g)` on the grid, for integrands that would underflow.
pub fn log_trapezoid_integrate(log_values: &[f64], grid: &Grid1D) -> Result<f64> {
    check_len(grid, log_values)?;
    let terms: Vec<f64> = log_values
        .iter()
        .zip(grid.weights())
        .map(|(g, w)| g + w.ln())
        .collect();
    super::logspace::logsumexp(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn std_normal(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn constant_and_linear_are_exact() {
        for count in [2, 3, 17, 1000] {
            let g = Grid1D::uniform(0.0, 2.0, count).unwrap();
            let ones = vec![1.0; g.len()];
            assert!((trapezoid_integrate(&ones, &g).unwrap() - 2.0).abs() < 1e-12);
        }
        let g = Grid1D::uniform(0.0, 1.0, 11).unwrap();
        let f: Vec<f64> = g.points().to_vec();
        assert!((trapezoid_integrate(&f, &g).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normal_density_integrates_to_one() {
        let g = Grid1D::centered(0.0, 1.0, 8.0, 2001).unwrap();
        let f: Vec<f64> = g.points().iter().map(|&x| std_normal(x)).collect();
        assert!((trapezoid_integrate(&f, &g).unwrap() - 1.0).abs() < 1e-8);
        let lf: Vec<f64> = f.iter().map(|v| v.ln()).collect();
        assert!(log_trapezoid_integrate(&lf, &g).unwrap().abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Grid1D::from_points(vec![0.0, 1.0, 1.0]).is_err());
        assert!(Grid1D::uniform(1.0, 0.0, 10).is_err());
        let g = Grid1D::uniform(0.0, 1.0, 5).unwrap();
        assert!(matches!(
            trapezoid_integrate(&[1.0; 4], &g),
            Err(Error::LengthMismatch { expected: 5, actual: 4 })
        ));
    }

    #[test]
    fn interpolation_is_exact_for_linear_values() {
        let g = Grid1D::uniform(-1.0, 1.0, 9).unwrap();
        let f: Vec<f64> = g.points().iter().map(|x| 3.0 * x - 1.0).collect();
        for x in [-1.0, -0.33, 0.0, 0.71, 1.0] {
            assert!((g.interpolate(&f, x).unwrap() - (3.0 * x - 1.0)).abs() < 1e-14);
        }
        assert!(g.interpolate(&f, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn linear_in_f(
            a in prop::collection::vec(-10.0f64..10.0, 31),
            b in prop::collection::vec(-10.0f64..10.0, 31),
            s in -5.0f64..5.0,
        ) {
            let g = Grid1D::uniform(-2.0, 3.0, 31).unwrap();
            let comb: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + y).collect();
            let lhs = trapezoid_integrate(&comb, &g).unwrap();
            let rhs = s * trapezoid_integrate(&a, &g).unwrap() + trapezoid_integrate(&b, &g).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn monotone_for_nonnegative_f(
            a in prop::collection::vec(0.0f64..10.0, 20),
            extra in prop::collection::vec(0.0f64..1.0, 20),
        ) {
            let g = Grid1D::uniform(0.0, 1.0, 20).unwrap();
            let bigger: Vec<f64> = a.iter().zip(&extra).map(|(x, e)| x + e).collect();
            let ia = trapezoid_integrate(&a, &g).unwrap();
            prop_assert!(ia >= 0.0);
            prop_assert!(trapezoid_integrate(&bigger, &g).unwrap() >= ia);
        }

        #[test]
        fn weights_sum_to_interval_length(lo in -100.0f64..100.0, w in 0.01f64..50.0, n in 2usize..500) {
            let g = Grid1D::uniform(lo, lo + w, n).unwrap();
            let ones = vec![1.0; n];
            prop_assert!((trapezoid_integrate(&ones, &g).unwrap() - w).abs() < 1e-12 * (1.0 + w + lo.abs()));
            prop_assert!(g.weights().iter().all(|&x| x > 0.0));
        }
    }
}
