//! Exact references: Kalman filtering and smoothing, and quadrature of the
//! target recursion on a grid.

pub mod grid;
pub mod kalman;

pub use grid::{exact_marginal_weight, grid_filter, grid_flow, lgssm_grid, GridDensity, GridFilter, GridFlow};
pub use kalman::{conditional_predictive, kalman_filter, ConditionalPredictive, Gaussian, KalmanTrace};
