//! Ensembles and the estimators applied to their output.

mod ensemble;
mod fit;
mod stats;

pub use ensemble::{ensemble_run, EnsembleResult, EnsembleSpec, Execution, Model, Snapshot, VarianceSeries};
pub use fit::{
    default_tail_start, fit_brownian, fit_diffusion, fit_quadratic_coefficient, linear_regression,
    BrownianFit, DiffusionFit, LinearFit, QuadraticFit, GAUSS_NEWTON_STEP_TOL, MAX_GAUSS_NEWTON_ITERATIONS,
    MIN_TAIL_SAMPLES, QUADRATIC_POOR_FIT,
};
pub use stats::{
    chi_square_test, crossover_time, gaussianity, local_loglog_slope, ChiSquareTest, Crossover,
    CrossoverOptions, Gaussianity,
};
