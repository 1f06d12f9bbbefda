//! Overlap model, machine profiling and parameter recommendation.

mod model;
mod params;
mod profile;
mod recommend;
mod sweep;

pub use model::{
    check_nb_overlap, check_tile_overlap, min_tb, min_tb_with_headroom, parse_kv, preloop_ratio, tile_ratio,
    MachineProfile, OverlapCheck,
};
pub use params::{TileParams, DEFAULT_BLOCK};
pub use profile::{
    compare_profiles, profile_machine, timer_tick, ProfileComparison, ProfileMode, ProfileOptions, ProfileReport,
    TransferSample, STABILITY_LIMIT, TRANSFER_SIZES,
};
pub use recommend::{recommend_params, RecommendOptions, Recommendation, TuningReport, HEADROOM};
pub use sweep::{
    block_flops, select_plateau, sweep_block_sizes, BlockBench, BlockSweep, SweepOptions, SweepPoint,
    PLATEAU_TOLERANCE, SWEEP_SIZES,
};
