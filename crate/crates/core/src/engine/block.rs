use crate::counters::{cost, FlopIoCounters};
use crate::error::{Error, Result};

use super::context::{solve_cell, CellScratch, TraitContext};

/// An `rows × cols` sub-grid of results with `p` coefficients per cell.
/// Coefficients are fastest, then SNP, then trait.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTile {
    /// `(first snp, first trait)`.
    pub origin: (usize, usize),
    pub rows: usize,
    pub cols: usize,
    pub p: usize,
    pub data: Vec<f64>,
}

impl ResultTile {
    pub fn new(origin: (usize, usize), rows: usize, cols: usize, p: usize) -> Self {
        Self {
            origin,
            rows,
            cols,
            p,
            data: vec![0.0; rows * cols * p],
        }
    }

    /// Re-targets an existing buffer at a new tile position, reusing its
    /// allocation.
    pub fn reshape(&mut self, origin: (usize, usize), rows: usize, cols: usize) {
        self.origin = origin;
        self.rows = rows;
        self.cols = cols;
        self.data.resize(rows * cols * self.p, 0.0);
    }

    /// Coefficients of local cell `(ii, jj)`.
    pub fn cell(&self, ii: usize, jj: usize) -> &[f64] {
        let at = (jj * self.rows + ii) * self.p;
        &self.data[at..at + self.p]
    }
}

/// Computes an `mbb_eff × tbb_eff` block of cells.
///
/// `snp_block` holds `mbb_eff` transformed SNP columns (`n × mbb_eff`),
/// `first_snp` is the global index of the first one, and `out[jj]` is the
/// `mbb_eff·p` output run for `contexts[jj]`.
pub fn compute_block(
    contexts: &[TraitContext],
    snp_block: &[f64],
    first_snp: u64,
    out: &mut [&mut [f64]],
    scratch: &mut CellScratch,
    counters: &mut FlopIoCounters,
) -> Result<()> {
    let Some(first) = contexts.first() else {
        return Ok(());
    };
    let (n, p) = (first.n, first.p);
    if out.len() != contexts.len() || snp_block.len() % n != 0 {
        return Err(Error::DimensionMismatch("block operands do not line up".into()));
    }
    let rows = snp_block.len() / n;
    for (ctx, run) in contexts.iter().zip(out.iter_mut()) {
        if run.len() != rows * p {
            return Err(Error::DimensionMismatch("block output run has the wrong length".into()));
        }
        for (ii, (x, b)) in snp_block.chunks_exact(n).zip(run.chunks_exact_mut(p)).enumerate() {
            solve_cell(ctx, x, scratch, b)
                .map_err(|e| e.at_cell(Some(first_snp + ii as u64), Some(ctx.index)))?;
        }
    }
    let cells = (rows * contexts.len()) as u64;
    counters.loop_flops += cells * cost::cell(n, p);
    counters.solve_flops += cells * cost::spd_solve(p);
    Ok(())
}
