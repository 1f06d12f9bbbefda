use crate::error::{Error, Result};
use crate::gls::ProblemDims;
use crate::tuner::TileParams;

const F64: u64 = 8;

/// Upper bound on resident bytes for streaming buffers and grid operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryBudget {
    pub max_bytes: u64,
}

/// Resident memory of the loops section, broken down by buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    /// One SNP slab buffer (`n·mb`).
    pub snp_slab: u64,
    /// One output tile buffer (`mb·tb·p`).
    pub output_tile: u64,
    /// The trait slab plus its scalars (`n·tb + 2·tb`).
    pub trait_slab: u64,
    /// Spectrum, `X'_L` and the per-trait contexts of one slab.
    pub fixed: u64,
    /// Number of double-buffered pipelines (1 for cooperative threads, one
    /// per worker for independent threads).
    pub pipelines: u64,
    pub total: u64,
}

impl Footprint {
    /// `pipelines·2·(snp slab + output tile) + trait slab + fixed`.
    pub fn loops(dims: &ProblemDims, params: &TileParams, pipelines: usize) -> Self {
        let (n, p) = (dims.n as u64, dims.p as u64);
        let (mb, tb) = (params.mb as u64, params.tb as u64);
        let q = p - 1;
        let snp_slab = n * mb * F64;
        let output_tile = mb * tb * p * F64;
        let trait_slab = (n * tb + 2 * tb) * F64;
        let spectrum = (n * n + n) * F64;
        let covariates = n * q * F64;
        // D, K, v, W_L, S_TL, b_T
        let contexts = tb * ((3 + q) * n + q * q + q) * F64;
        let fixed = spectrum + covariates + contexts;
        let pipelines = pipelines.max(1) as u64;
        let total = pipelines * 2 * (snp_slab + output_tile) + trait_slab + fixed;
        Self {
            snp_slab,
            output_tile,
            trait_slab,
            fixed,
            pipelines,
            total,
        }
    }

    /// Preloop transform: two workspaces of `nb` input and `nb` output
    /// columns, plus the spectrum.
    pub fn preloop(dims: &ProblemDims, nb: usize) -> u64 {
        let n = dims.n as u64;
        2 * 2 * n * nb as u64 * F64 + (n * n + n) * F64
    }
}

impl MemoryBudget {
    pub fn new(max_bytes: u64) -> Self {
        Self { max_bytes }
    }

    pub fn admits(&self, bytes: u64) -> bool {
        bytes <= self.max_bytes
    }

    /// Fails with `InfeasibleBudget` if either section overflows the budget.
    pub fn check(&self, dims: &ProblemDims, params: &TileParams, pipelines: usize) -> Result<()> {
        let loops = Footprint::loops(dims, params, pipelines).total;
        let preloop = Footprint::preloop(dims, params.nb);
        let required = loops.max(preloop);
        if self.admits(required) {
            Ok(())
        } else {
            Err(Error::InfeasibleBudget {
                budget: self.max_bytes,
                required,
            })
        }
    }
}
