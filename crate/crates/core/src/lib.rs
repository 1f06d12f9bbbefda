//! Solvers for grids of generalized least-squares problems that share a
//! kinship matrix.
//!
//! Each cell `(i, j)` of an `m × t` grid solves
//! `b = (Xᵀ M⁻¹ X)⁻¹ Xᵀ M⁻¹ y` with `X = [X_L | x_i]`, `y = y_j` and
//! `M_j = σ²_j (h²_j Φ + (1 − h²_j) I)`. One eigendecomposition of `Φ`
//! turns every `M_j⁻¹` into a diagonal scaling, after which each cell costs
//! `O(n·p)` instead of `O(n²)`.
//!
//! * [`gls`]: single-problem solvers and the Cholesky oracle.
//! * [`engine`]: tiled, threaded evaluation of the whole grid.
//! * [`stream`]: the `GWG1` file format and double-buffered streaming.
//! * [`tuner`]: overlap model, machine profiling, tile recommendation.
//! * [`datagen`]: reproducible synthetic datasets.
//! * [`verify`]: oracle checks of a finished result stream.

pub mod counters;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod gls;
pub mod kernels;
pub mod stream;
pub mod tuner;
pub mod verify;

pub use nalgebra;

pub use counters::FlopIoCounters;
pub use datagen::{generate_kinship, generate_streams, Dataset, GenSpec, KinshipModel};
pub use engine::{run_grid, run_grid_naive, GridInputs, ResultTile, RunOptions, RunSummary, SchedulerMode};
pub use error::{Error, Result};
pub use gls::{
    eigendecompose_kinship, relative_error, solve_partitioned_gls, solve_single_gls, solve_single_gls_oracle,
    GlsSolution, KinshipSpectrum, ProblemDims, TraitScalars,
};
pub use stream::{open_stream, Buffering, MemoryBudget, StreamHeader, StreamKind, StreamReader, StreamWriter};
pub use tuner::{recommend_params, MachineProfile, TileParams};
