//! Forward diffusions, path simulation and one-step Malliavin derivatives.

mod grid;
mod malliavin;
mod model;
mod paths;

pub use grid::TimeGrid;
pub use malliavin::{malliavin_step, simulate_malliavin, MalliavinEnsemble};
pub use model::{HestonParams, Model, ModelKind, ModelSpec, SINGULAR_TOL};
pub use paths::{euler_step, simulate_batch, simulate_paths, write_paths_csv, PathEnsemble};
