use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use crossbeam_channel::unbounded;

use crate::counters::FlopIoCounters;
use crate::error::{Error, Result};

use super::block::{compute_block, ResultTile};
use super::context::{CellScratch, TraitContext};

/// How blocks are distributed among workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerMode {
    /// One streaming coordinator; all workers share the blocks of each tile.
    Cooperative,
    /// Each worker streams and computes its own tiles.
    Independent,
}

impl SchedulerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerMode::Cooperative => "ct",
            SchedulerMode::Independent => "it",
        }
    }
}

impl FromStr for SchedulerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ct" | "cooperative" => Ok(Self::Cooperative),
            "it" | "independent" => Ok(Self::Independent),
            other => Err(Error::InvalidParameter(format!("unknown scheduler {other:?}"))),
        }
    }
}

struct BlockJob<'a> {
    first_row: usize,
    first_col: usize,
    out: Vec<&'a mut [f64]>,
}

/// Splits a tile buffer into per-block output runs, ordered trait-block
/// major, SNP-block minor.
fn split_blocks(tile: &mut ResultTile, mbb: usize, tbb: usize) -> Vec<BlockJob<'_>> {
    let (rows, cols, p) = (tile.rows, tile.cols, tile.p);
    let row_blocks = rows.div_ceil(mbb);
    let col_blocks = cols.div_ceil(tbb);
    let mut jobs: Vec<BlockJob> = (0..col_blocks * row_blocks)
        .map(|b| BlockJob {
            first_row: (b % row_blocks) * mbb,
            first_col: (b / row_blocks) * tbb,
            out: Vec::with_capacity(tbb),
        })
        .collect();
    for (jj, column) in tile.data.chunks_exact_mut(rows * p).enumerate() {
        let jb = jj / tbb;
        for (ib, run) in column.chunks_mut(mbb * p).enumerate() {
            jobs[jb * row_blocks + ib].out.push(run);
        }
    }
    jobs
}

fn run_job(
    job: &mut BlockJob<'_>,
    contexts: &[TraitContext],
    snp_slab: &[f64],
    first_snp: usize,
    scratch: &mut CellScratch,
    counters: &mut FlopIoCounters,
) -> Result<()> {
    let n = contexts[0].n;
    let p = contexts[0].p;
    let rows = job.out[0].len() / p;
    let cols = job.out.len();
    let snps = &snp_slab[job.first_row * n..(job.first_row + rows) * n];
    compute_block(
        &contexts[job.first_col..job.first_col + cols],
        snps,
        (first_snp + job.first_row) as u64,
        &mut job.out,
        scratch,
        counters,
    )
}

/// Computes a whole tile, decomposed into `mbb × tbb` blocks.
///
/// `contexts` are the tile's traits and `snp_slab` its transformed SNP
/// columns; the tile's shape and origin are taken from `tile`. Blocks are
/// queued FIFO and pulled by `workers` threads. Every cell is computed by
/// exactly one worker with a fixed operation order, so the result is
/// bitwise independent of the worker count and of the block shape. On
/// failure the first error wins and queued blocks are dropped.
pub fn compute_tile(
    contexts: &[TraitContext],
    snp_slab: &[f64],
    block: (usize, usize),
    workers: usize,
    tile: &mut ResultTile,
    counters: &mut FlopIoCounters,
) -> Result<()> {
    let (mbb, tbb) = block;
    if mbb == 0 || tbb == 0 || workers == 0 {
        return Err(Error::InvalidParameter("block sizes and worker count must be positive".into()));
    }
    if contexts.len() != tile.cols || contexts.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "tile has {} trait columns but {} contexts were given",
            tile.cols,
            contexts.len()
        )));
    }
    let (n, p) = (contexts[0].n, contexts[0].p);
    if snp_slab.len() != n * tile.rows || tile.p != p {
        return Err(Error::DimensionMismatch(format!(
            "SNP slab of {} values does not cover {} columns of length {n}",
            snp_slab.len(),
            tile.rows
        )));
    }
    let first_snp = tile.origin.0;
    let mut jobs = split_blocks(tile, mbb, tbb);

    let threads = workers.min(jobs.len());
    if threads <= 1 {
        let mut scratch = CellScratch::new(n, p);
        for job in jobs.iter_mut() {
            run_job(job, contexts, snp_slab, first_snp, &mut scratch, counters)?;
        }
        return Ok(());
    }

    let (tx, rx) = unbounded();
    for job in jobs {
        tx.send(job).expect("queue open");
    }
    drop(tx);
    let cancelled = AtomicBool::new(false);
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    let merged = Mutex::new(FlopIoCounters::default());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            let rx = rx.clone();
            let cancelled = &cancelled;
            let first_error = &first_error;
            let merged = &merged;
            scope.spawn(move || {
                let mut scratch = CellScratch::new(n, p);
                let mut local = FlopIoCounters::default();
                while let Ok(mut job) = rx.recv() {
                    if cancelled.load(Ordering::Relaxed) {
                        break;
                    }
                    if let Err(e) = run_job(&mut job, contexts, snp_slab, first_snp, &mut scratch, &mut local) {
                        cancelled.store(true, Ordering::Relaxed);
                        first_error.lock().unwrap().get_or_insert(e);
                        break;
                    }
                }
                *merged.lock().unwrap() += local;
            });
        }
    });
    *counters += merged.into_inner().unwrap();
    match first_error.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
