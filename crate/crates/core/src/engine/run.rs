use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::counters::{cost, FlopIoCounters};
use crate::error::{Error, Result};
use crate::gls::ProblemDims;
use crate::stream::{
    open_stream, pipeline_run, preloop_stream_transform, Buffering, DoubleBuffer, MemoryBudget,
    StreamHeader, StreamKind, StreamReader, StreamWriter, TransformTarget,
};
use crate::tuner::TileParams;

use super::block::ResultTile;
use super::context::{build_trait_contexts, solve_cell, CellScratch, TraitContext};
use super::precompute::precompute_grid;
use super::tile::{compute_tile, SchedulerMode};

/// In-memory operands plus the two raw input streams.
#[derive(Debug, Clone, Copy)]
pub struct GridInputs<'a> {
    /// Kinship matrix `Φ` (`n × n`).
    pub kinship: &'a DMatrix<f64>,
    /// Shared covariates `X_L` (`n × (p−1)`).
    pub covariates: &'a DMatrix<f64>,
    /// Raw SNP stream `X_R`.
    pub snps: &'a Path,
    /// Raw trait stream `Y` with its scalars.
    pub traits: &'a Path,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub params: TileParams,
    pub scheduler: SchedulerMode,
    pub workers: usize,
    pub memory_budget: Option<MemoryBudget>,
    pub buffering: Buffering,
    /// Directory for the transformed streams.
    pub work_dir: PathBuf,
    /// Overwrite the raw SNP stream with its transform instead of writing a
    /// sibling file.
    pub in_place: bool,
}

impl RunOptions {
    pub fn new(params: TileParams, work_dir: impl Into<PathBuf>) -> Self {
        Self {
            params,
            scheduler: SchedulerMode::Cooperative,
            workers: 1,
            memory_budget: None,
            buffering: Buffering::Double,
            work_dir: work_dir.into(),
            in_place: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dims: ProblemDims,
    pub params: TileParams,
    pub preloop: FlopIoCounters,
    pub loops: FlopIoCounters,
    /// How many times per-trait contexts were built (once per trait slab).
    pub context_builds: u64,
    pub tiles: u64,
    pub preloop_wall_time: f64,
    pub loops_wall_time: f64,
    /// Compute-side wait time over loops wall time, averaged over the
    /// streaming pipelines.
    pub stall_fraction: f64,
}

impl RunSummary {
    /// `key=value` lines for reports.
    pub fn to_kv(&self) -> String {
        let ProblemDims { n, p, m, t } = self.dims;
        let TileParams { nb, mb, tb, mbb, tbb } = self.params;
        let c = &self.loops;
        [
            format!("n={n}"),
            format!("p={p}"),
            format!("m={m}"),
            format!("t={t}"),
            format!("nb={nb}"),
            format!("mb={mb}"),
            format!("tb={tb}"),
            format!("mbb={mbb}"),
            format!("tbb={tbb}"),
            format!("tiles={}", self.tiles),
            format!("context_builds={}", self.context_builds),
            format!("preloop_flops={}", self.preloop.preloop_flops),
            format!("loop_flops={}", c.loop_flops),
            format!("loop_transform_flops={}", c.loop_transform_flops),
            format!("solve_flops={}", c.solve_flops),
            format!("bytes_loaded={}", c.bytes_loaded),
            format!("bytes_stored={}", c.bytes_stored),
            format!("preloop_bytes_loaded={}", self.preloop.bytes_loaded),
            format!("preloop_bytes_stored={}", self.preloop.bytes_stored),
            format!("io_stall_time_s={:.6}", c.io_stall_time),
            format!("compute_time_s={:.6}", c.compute_time),
            format!("stall_fraction={:.6}", self.stall_fraction),
            format!("preloop_wall_time_s={:.6}", self.preloop_wall_time),
            format!("loops_wall_time_s={:.6}", self.loops_wall_time),
        ]
        .join("\n")
    }
}

struct Opened {
    dims: ProblemDims,
    snps: StreamReader,
    traits: StreamReader,
}

fn open_inputs(inputs: &GridInputs<'_>) -> Result<Opened> {
    let snps = open_stream(inputs.snps, StreamKind::Snp)?;
    let traits = open_stream(inputs.traits, StreamKind::Trait)?;
    let n = inputs.kinship.nrows();
    if snps.n() != n || traits.n() != n || inputs.covariates.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "n disagrees: kinship {n}, covariates {}, SNP stream {}, trait stream {}",
            inputs.covariates.nrows(),
            snps.n(),
            traits.n()
        )));
    }
    let dims = ProblemDims::new(n, inputs.covariates.ncols() + 1, snps.count(), traits.count())?;
    Ok(Opened { dims, snps, traits })
}

fn slabs(total: usize, width: usize) -> Vec<(usize, usize)> {
    (0..total)
        .step_by(width)
        .map(|start| (start, width.min(total - start)))
        .collect()
}

/// Solves the whole `m × t` grid, traversing it by trait slabs (outer) and
/// SNP slabs (inner), and writes the result stream to `output`.
///
/// Per-trait contexts are built once per trait slab and reused for every
/// SNP slab. SNP slabs are prefetched and result tiles flushed by the
/// double-buffered pipeline. On error the result stream keeps its
/// incomplete status.
pub fn run_grid(inputs: GridInputs<'_>, output: &Path, options: &RunOptions) -> Result<RunSummary> {
    let opened = open_inputs(&inputs)?;
    let dims = opened.dims;
    let params = options.params.clamped(&dims);
    params.validate(&dims)?;
    let workers = options.workers.max(1);
    let pipelines = match options.scheduler {
        SchedulerMode::Cooperative => 1,
        SchedulerMode::Independent => workers,
    };
    if let Some(budget) = options.memory_budget {
        budget.check(&dims, &params, pipelines)?;
    }

    // preloops
    let started = Instant::now();
    let mut preloop = FlopIoCounters::default();
    let pre = precompute_grid(inputs.kinship, inputs.covariates, &mut preloop)?;
    std::fs::create_dir_all(&options.work_dir).map_err(|e| Error::io(&options.work_dir, 0, e))?;
    let snp_target_path = options.work_dir.join("snps.transformed.gwg");
    let snp_target = if options.in_place {
        TransformTarget::InPlace
    } else {
        TransformTarget::Sibling(&snp_target_path)
    };
    let snps_t = preloop_stream_transform(
        inputs.snps,
        StreamKind::Snp,
        snp_target,
        &pre,
        params.nb,
        options.buffering,
        &mut preloop,
    )?;
    let traits_t = preloop_stream_transform(
        inputs.traits,
        StreamKind::Trait,
        TransformTarget::Sibling(&options.work_dir.join("traits.transformed.gwg")),
        &pre,
        params.nb,
        options.buffering,
        &mut preloop,
    )?;
    drop(opened);
    let preloop_wall_time = started.elapsed().as_secs_f64();

    // loops
    let started = Instant::now();
    let snps = open_stream(&snps_t, StreamKind::Snp)?;
    let traits = open_stream(&traits_t, StreamKind::Trait)?;
    let writer = StreamWriter::create(output, StreamHeader::result(dims.m, dims.t, dims.p))?;
    let mut loops = FlopIoCounters::default();
    let mut context_builds = 0;
    let snp_tiles = slabs(dims.m, params.mb);
    let mut tiles = 0u64;

    for (j0, width) in slabs(dims.t, params.tb) {
        let wait = Instant::now();
        let mut y = vec![0.0; dims.n * width];
        loops.bytes_loaded += traits.read_columns_into(j0, width, &mut y)?;
        let (scalars, bytes) = traits.read_scalars(j0, width)?;
        loops.bytes_loaded += bytes;
        loops.io_stall_time += wait.elapsed().as_secs_f64();

        let busy = Instant::now();
        let contexts = build_trait_contexts(&pre, &y, &scalars, j0 as u64, &mut loops)?;
        context_builds += 1;
        loops.compute_time += busy.elapsed().as_secs_f64();

        let slab = TraitSlab {
            j0,
            width,
            contexts: &contexts,
        };
        match options.scheduler {
            SchedulerMode::Cooperative => {
                let c = stream_tiles(&snp_tiles, &slab, &snps, &writer, &params, workers, options.buffering, &dims)?;
                loops += c;
            }
            SchedulerMode::Independent => {
                let c = independent_tiles(&snp_tiles, &slab, &snps, output, &params, workers, options.buffering, &dims)?;
                loops += c;
            }
        }
        tiles += snp_tiles.len() as u64;
    }
    writer.finish()?;
    let loops_wall_time = started.elapsed().as_secs_f64();
    let stall_fraction = if loops_wall_time > 0.0 {
        loops.io_stall_time / pipelines as f64 / loops_wall_time
    } else {
        0.0
    };
    Ok(RunSummary {
        dims,
        params,
        preloop,
        loops,
        context_builds,
        tiles,
        preloop_wall_time,
        loops_wall_time,
        stall_fraction,
    })
}

struct TraitSlab<'a> {
    j0: usize,
    width: usize,
    contexts: &'a [TraitContext],
}

/// Streams a sequence of SNP tiles of one trait slab through a pipeline;
/// `workers` threads share the blocks of each tile.
#[allow(clippy::too_many_arguments)]
fn stream_tiles(
    tiles: &[(usize, usize)],
    slab: &TraitSlab<'_>,
    snps: &StreamReader,
    writer: &StreamWriter,
    params: &TileParams,
    workers: usize,
    buffering: Buffering,
    dims: &ProblemDims,
) -> Result<FlopIoCounters> {
    let n = dims.n;
    let loaded = AtomicU64::new(0);
    let stored = AtomicU64::new(0);
    let mut counters = FlopIoCounters::default();
    let tile_buffer = ResultTile::new((0, slab.j0), params.mb, slab.width, dims.p);
    let stats = pipeline_run(
        tiles,
        DoubleBuffer::new(buffering, Vec::<f64>::new(), tile_buffer),
        |&(i0, rows), input| {
            input.resize(n * rows, 0.0);
            loaded.fetch_add(snps.read_columns_into(i0, rows, input)?, Ordering::Relaxed);
            Ok(())
        },
        |&(i0, rows), input, tile| {
            tile.reshape((i0, slab.j0), rows, slab.width);
            compute_tile(slab.contexts, input, (params.mbb, params.tbb), workers, tile, &mut counters)
        },
        |_, tile| {
            stored.fetch_add(writer.write_result_tile(tile)?, Ordering::Relaxed);
            Ok(())
        },
    )?;
    counters.bytes_loaded += loaded.into_inner();
    counters.bytes_stored += stored.into_inner();
    counters.io_stall_time += stats.io_stall_time;
    counters.compute_time += stats.compute_time;
    Ok(counters)
}

/// Independent threads: worker `w` owns tiles `w, w + W, w + 2W, ...` of the
/// trait slab and streams them through its own pipeline.
#[allow(clippy::too_many_arguments)]
fn independent_tiles(
    tiles: &[(usize, usize)],
    slab: &TraitSlab<'_>,
    snps: &StreamReader,
    output: &Path,
    params: &TileParams,
    workers: usize,
    buffering: Buffering,
    dims: &ProblemDims,
) -> Result<FlopIoCounters> {
    let merged = Mutex::new(FlopIoCounters::default());
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for w in 0..workers.min(tiles.len()) {
            let owned: Vec<(usize, usize)> = tiles.iter().skip(w).step_by(workers).copied().collect();
            let merged = &merged;
            let first_error = &first_error;
            scope.spawn(move || {
                let outcome = StreamWriter::reopen(output, StreamKind::Result)
                    .and_then(|writer| stream_tiles(&owned, slab, snps, &writer, params, 1, buffering, dims));
                match outcome {
                    Ok(c) => *merged.lock().unwrap() += c,
                    Err(e) => {
                        first_error.lock().unwrap().get_or_insert(e);
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    Ok(merged.into_inner().unwrap())
}

/// Baseline without slab reuse: for every trait, every raw SNP column is
/// loaded on its own, re-transformed by `Zᵀ`, solved, and its coefficients
/// stored one cell at a time. Single-threaded and unbuffered.
pub fn run_grid_naive(inputs: GridInputs<'_>, output: &Path) -> Result<RunSummary> {
    let opened = open_inputs(&inputs)?;
    let dims = opened.dims;
    let (n, p) = (dims.n, dims.p);

    let started = Instant::now();
    let mut preloop = FlopIoCounters::default();
    let pre = precompute_grid(inputs.kinship, inputs.covariates, &mut preloop)?;
    let preloop_wall_time = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let writer = StreamWriter::create(output, StreamHeader::result(dims.m, dims.t, p))?;
    let mut loops = FlopIoCounters::default();
    let mut raw = vec![0.0; n];
    let mut transformed = vec![0.0; n];
    let mut scratch = CellScratch::new(n, p);
    let mut cell = ResultTile::new((0, 0), 1, 1, p);
    let mut context_builds = 0;
    for j in 0..dims.t {
        let wait = Instant::now();
        loops.bytes_loaded += opened.traits.read_columns_into(j, 1, &mut raw)?;
        let (scalars, bytes) = opened.traits.read_scalars(j, 1)?;
        loops.bytes_loaded += bytes;
        loops.io_stall_time += wait.elapsed().as_secs_f64();

        let busy = Instant::now();
        pre.spectrum.transform(1, &raw, &mut transformed);
        loops.loop_flops += cost::transform(n, 1);
        loops.loop_transform_flops += cost::transform(n, 1);
        let (ctx, flops) = TraitContext::build(j as u64, pre.spectrum.eigenvalues(), scalars[0], &transformed, pre.xl_t(), p)?;
        loops.loop_flops += flops;
        context_builds += 1;
        loops.compute_time += busy.elapsed().as_secs_f64();

        for i in 0..dims.m {
            let wait = Instant::now();
            loops.bytes_loaded += opened.snps.read_columns_into(i, 1, &mut raw)?;
            loops.io_stall_time += wait.elapsed().as_secs_f64();

            let busy = Instant::now();
            pre.spectrum.transform(1, &raw, &mut transformed);
            cell.origin = (i, j);
            solve_cell(&ctx, &transformed, &mut scratch, &mut cell.data)
                .map_err(|e| e.at_cell(Some(i as u64), Some(j as u64)))?;
            loops.loop_flops += cost::transform(n, 1) + cost::cell(n, p);
            loops.loop_transform_flops += cost::transform(n, 1);
            loops.solve_flops += cost::spd_solve(p);
            loops.compute_time += busy.elapsed().as_secs_f64();

            let wait = Instant::now();
            loops.bytes_stored += writer.write_result_tile(&cell)?;
            loops.io_stall_time += wait.elapsed().as_secs_f64();
        }
    }
    writer.finish()?;
    let loops_wall_time = started.elapsed().as_secs_f64();
    Ok(RunSummary {
        dims,
        params: TileParams {
            nb: 1,
            mb: 1,
            tb: 1,
            mbb: 1,
            tbb: 1,
        },
        preloop,
        loops,
        context_builds,
        tiles: (dims.m * dims.t) as u64,
        preloop_wall_time,
        loops_wall_time,
        stall_fraction: if loops_wall_time > 0.0 {
            loops.io_stall_time / loops_wall_time
        } else {
            0.0
        },
    })
}
