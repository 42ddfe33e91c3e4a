//! Minimal solutions of Kolmogorov's equations for jump Markov processes
//! whose jump rates may be unbounded and vary in time.
//!
//! The building blocks are:
//!
//! * [`qfunction`]: Q-functions, integrated rates and assumption probes;
//! * [`feller`]: the minimal transition function as a series of `n`-jump terms;
//! * [`kolmogorov`]: residual checks of the backward and forward equations;
//! * [`simulate`]: direct path simulation and Monte Carlo estimates;
//! * [`models`]: the built-in model catalog and JSON model specs.
//!
//! ```
//! use jump_kolmogorov::{feller, models, grid::TimeGrid, state::Truncation};
//!
//! let model = models::poisson(1.0);
//! let grid = TimeGrid::uniform(0.0, 2.0, 1e-3).unwrap();
//! let field = feller::minimal_solution(&model, 0.0, 0, &grid, Truncation::new(40), &Default::default()).unwrap();
//! let p1 = field.value(grid.panels(), 1);
//! assert!((p1 - 2.0 * (-2.0f64).exp()).abs() < 1e-6);
//! ```

// NaN must fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod feller;
pub mod grid;
pub mod kolmogorov;
pub mod models;
pub mod qfunction;
pub mod quadrature;
pub mod simulate;
pub mod state;

pub use error::{Error, Result};
pub use feller::{minimal_solution, SeriesOptions, SolutionField};
pub use grid::TimeGrid;
pub use qfunction::QModel;
pub use state::{StateSet, Truncation};
