//! Tile-computation microbenchmarks and the block-size sweep.

use std::time::{Duration, Instant};

use crate::counters::{cost, FlopIoCounters};
use crate::datagen::standard_normals;
use crate::engine::{compute_block, CellScratch, TraitContext};
use crate::error::{Error, Result};
use crate::gls::TraitScalars;

use super::params::DEFAULT_BLOCK;

/// Block edges tried by default.
pub const SWEEP_SIZES: [usize; 6] = [32, 64, 128, 160, 256, 512];

/// Points within this fraction of the best rate form the plateau.
pub const PLATEAU_TOLERANCE: f64 = 0.005;

/// Each timed sample repeats its work until at least this much time passes.
pub(crate) const MIN_SAMPLE: Duration = Duration::from_millis(2);

/// Synthetic contexts and SNP columns large enough for any block up to
/// `max_mbb × max_tbb`.
pub struct BlockBench {
    n: usize,
    p: usize,
    contexts: Vec<TraitContext>,
    snps: Vec<f64>,
    out: Vec<f64>,
    scratch: CellScratch,
}

impl BlockBench {
    pub fn new(n: usize, p: usize, max_mbb: usize, max_tbb: usize, seed: u64) -> Result<Self> {
        if p == 0 || p > n || max_mbb == 0 || max_tbb == 0 {
            return Err(Error::InvalidParameter(format!(
                "block bench needs 1 <= p <= n and non-empty blocks (n={n}, p={p})"
            )));
        }
        let q = p - 1;
        let eigenvalues: Vec<f64> = (0..n).map(|k| 0.5 + k as f64 / n as f64).collect();
        let xl_t = standard_normals(seed, 0, n * q);
        let ys = standard_normals(seed, 1, n * max_tbb);
        let scalars = TraitScalars::new(0.5, 1.0)?;
        let contexts = ys
            .chunks_exact(n)
            .enumerate()
            .map(|(j, y)| TraitContext::build(j as u64, &eigenvalues, scalars, y, &xl_t, p).map(|(c, _)| c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            p,
            contexts,
            snps: standard_normals(seed, 2, n * max_mbb),
            out: vec![0.0; max_mbb * max_tbb * p],
            scratch: CellScratch::new(n, p),
        })
    }

    /// Computes one `mbb × tbb` block and returns its flop count.
    pub fn run_block(&mut self, mbb: usize, tbb: usize) -> Result<u64> {
        let (n, p) = (self.n, self.p);
        if mbb * n > self.snps.len() || tbb > self.contexts.len() {
            return Err(Error::InvalidParameter(format!("block {mbb}x{tbb} exceeds the bench operands")));
        }
        let mut runs: Vec<&mut [f64]> = self.out[..mbb * tbb * p].chunks_exact_mut(mbb * p).collect();
        let mut counters = FlopIoCounters::default();
        compute_block(
            &self.contexts[..tbb],
            &self.snps[..mbb * n],
            0,
            &mut runs,
            &mut self.scratch,
            &mut counters,
        )?;
        Ok(counters.loop_flops)
    }

    /// Median flop rate of `trials` timed samples.
    pub fn rate(&mut self, mbb: usize, tbb: usize, trials: usize) -> Result<f64> {
        let mut rates = Vec::with_capacity(trials.max(1));
        for _ in 0..trials.max(1) {
            let mut flops = 0u64;
            let start = Instant::now();
            while start.elapsed() < MIN_SAMPLE {
                flops += self.run_block(mbb, tbb)?;
            }
            rates.push(flops as f64 / start.elapsed().as_secs_f64());
        }
        Ok(median(&mut rates))
    }
}

/// One measured block shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub mbb: usize,
    pub tbb: usize,
    pub flops_per_sec: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSweep {
    pub points: Vec<SweepPoint>,
    /// Points within [`PLATEAU_TOLERANCE`] of the best rate.
    pub plateau: Vec<SweepPoint>,
    /// The block chosen from the plateau.
    pub chosen: SweepPoint,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub n: usize,
    pub p: usize,
    pub sizes: Vec<usize>,
    /// Only try `mbb == tbb`.
    pub square_only: bool,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            n: 256,
            p: 4,
            sizes: SWEEP_SIZES.to_vec(),
            square_only: true,
            trials: 5,
            seed: 0,
        }
    }
}

/// Measures the tile-computation rate for every candidate block shape and
/// picks one from the plateau.
pub fn sweep_block_sizes(options: &SweepOptions) -> Result<BlockSweep> {
    let max = options.sizes.iter().copied().max().unwrap_or(0);
    let mut bench = BlockBench::new(options.n, options.p, max, max, options.seed)?;
    let mut points = Vec::new();
    for &mbb in &options.sizes {
        for &tbb in &options.sizes {
            if options.square_only && mbb != tbb {
                continue;
            }
            let flops_per_sec = bench.rate(mbb, tbb, options.trials)?;
            points.push(SweepPoint { mbb, tbb, flops_per_sec });
        }
    }
    select_plateau(points)
}

/// Applies the plateau rule: keep every point within 0.5% of the best, then
/// prefer the default square block if present, else the smallest block.
pub fn select_plateau(points: Vec<SweepPoint>) -> Result<BlockSweep> {
    let best = points
        .iter()
        .map(|pt| pt.flops_per_sec)
        .fold(f64::NEG_INFINITY, f64::max);
    if points.is_empty() || !(best > 0.0) {
        return Err(Error::InvalidParameter("block sweep produced no usable measurement".into()));
    }
    let plateau: Vec<SweepPoint> = points
        .iter()
        .copied()
        .filter(|pt| pt.flops_per_sec >= best * (1.0 - PLATEAU_TOLERANCE))
        .collect();
    let chosen = plateau
        .iter()
        .copied()
        .find(|pt| pt.mbb == DEFAULT_BLOCK && pt.tbb == DEFAULT_BLOCK)
        .or_else(|| plateau.iter().copied().min_by_key(|pt| (pt.mbb * pt.tbb, pt.mbb)))
        .expect("plateau contains the best point");
    Ok(BlockSweep { points, plateau, chosen })
}

/// Median of a non-empty sample.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Flops of one `mbb × tbb` block.
pub fn block_flops(n: usize, p: usize, mbb: usize, tbb: usize) -> u64 {
    (mbb * tbb) as u64 * cost::cell(n, p)
}
