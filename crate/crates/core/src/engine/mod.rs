//! Tiled, multi-threaded evaluation of the full `m × t` grid.

mod block;
mod context;
mod precompute;
mod run;
mod tile;

pub use block::{compute_block, ResultTile};
pub use context::{build_trait_contexts, solve_cell, CellScratch, TraitContext};
pub use precompute::{precompute_grid, transform_snp_slab, transform_trait_slab, GridPrecompute};
pub use run::{run_grid, run_grid_naive, GridInputs, RunOptions, RunSummary};
pub use tile::{compute_tile, SchedulerMode};
