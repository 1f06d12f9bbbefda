use crate::error::{Error, Result};
use crate::gls::ProblemDims;

/// Block edge used when nothing better is known.
pub const DEFAULT_BLOCK: usize = 160;

/// The tiling degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileParams {
    /// Columns per slab in the preloop transforms.
    pub nb: usize,
    /// SNPs per tile.
    pub mb: usize,
    /// Traits per tile.
    pub tb: usize,
    /// SNPs per block.
    pub mbb: usize,
    /// Traits per block.
    pub tbb: usize,
}

impl TileParams {
    /// A single in-core tile covering the whole grid.
    pub fn in_core(dims: &ProblemDims) -> Self {
        Self {
            nb: dims.m.max(dims.t),
            mb: dims.m,
            tb: dims.t,
            mbb: DEFAULT_BLOCK,
            tbb: DEFAULT_BLOCK,
        }
        .clamped(dims)
    }

    /// Clips every size to the grid so that `1 ≤ mbb ≤ mb ≤ m` and
    /// `1 ≤ tbb ≤ tb ≤ t`.
    pub fn clamped(mut self, dims: &ProblemDims) -> Self {
        self.nb = self.nb.clamp(1, dims.m.max(dims.t));
        self.mb = self.mb.clamp(1, dims.m);
        self.tb = self.tb.clamp(1, dims.t);
        self.mbb = self.mbb.clamp(1, self.mb);
        self.tbb = self.tbb.clamp(1, self.tb);
        self
    }

    pub fn validate(&self, dims: &ProblemDims) -> Result<()> {
        let ok = self.nb >= 1
            && 1 <= self.mbb
            && self.mbb <= self.mb
            && self.mb <= dims.m
            && 1 <= self.tbb
            && self.tbb <= self.tb
            && self.tb <= dims.t;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "tile parameters {self:?} violate 1 <= mbb <= mb <= {} and 1 <= tbb <= tb <= {}",
                dims.m, dims.t
            )))
        }
    }

    /// Number of tiles along the SNP and trait dimensions.
    pub fn tile_counts(&self, dims: &ProblemDims) -> (usize, usize) {
        (dims.m.div_ceil(self.mb), dims.t.div_ceil(self.tb))
    }
}
