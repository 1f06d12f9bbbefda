use nalgebra::DMatrix;

use crate::counters::{cost, FlopIoCounters};
use crate::error::{Error, Result};
use crate::gls::{eigendecompose_kinship, KinshipSpectrum};

/// Grid-invariant operands: the kinship spectrum and `X'_L = Zᵀ X_L`.
#[derive(Debug, Clone)]
pub struct GridPrecompute {
    pub spectrum: KinshipSpectrum,
    xl_t: Vec<f64>,
    p: usize,
}

impl GridPrecompute {
    pub fn n(&self) -> usize {
        self.spectrum.n()
    }

    /// Columns per design matrix, SNP included.
    pub fn p(&self) -> usize {
        self.p
    }

    /// `X'_L`, column-major `n × (p−1)`.
    pub fn xl_t(&self) -> &[f64] {
        &self.xl_t
    }
}

/// Eigendecomposes `Φ` and transforms the shared covariates once.
pub fn precompute_grid(
    phi: &DMatrix<f64>,
    x_l: &DMatrix<f64>,
    counters: &mut FlopIoCounters,
) -> Result<GridPrecompute> {
    let n = phi.nrows();
    if x_l.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "X_L has {} rows but the kinship matrix is {n}x{n}",
            x_l.nrows()
        )));
    }
    let q = x_l.ncols();
    if q + 1 > n {
        return Err(Error::DimensionMismatch(format!("p = {} exceeds n = {n}", q + 1)));
    }
    let spectrum = eigendecompose_kinship(phi)?;
    let mut xl_t = vec![0.0; n * q];
    spectrum.transform(q, x_l.as_slice(), &mut xl_t);
    counters.preloop_flops += cost::eigendecomposition(n) + cost::transform(n, q);
    Ok(GridPrecompute {
        spectrum,
        xl_t,
        p: q + 1,
    })
}

fn transform_slab(pre: &GridPrecompute, slab: &mut Vec<f64>, counters: &mut FlopIoCounters) -> Result<()> {
    let n = pre.n();
    if slab.is_empty() || slab.len() % n != 0 {
        return Err(Error::DimensionMismatch(format!(
            "slab of {} values is not a whole number of columns of length {n}",
            slab.len()
        )));
    }
    let k = slab.len() / n;
    let mut out = vec![0.0; slab.len()];
    pre.spectrum.transform(k, slab, &mut out);
    *slab = out;
    counters.preloop_flops += cost::transform(n, k);
    Ok(())
}

/// Replaces a raw `n × k` SNP slab with `Zᵀ` applied to it, as one
/// matrix-matrix product.
pub fn transform_snp_slab(pre: &GridPrecompute, slab: &mut Vec<f64>, counters: &mut FlopIoCounters) -> Result<()> {
    transform_slab(pre, slab, counters)
}

/// Replaces a raw `n × k` trait slab with `Zᵀ` applied to it.
pub fn transform_trait_slab(pre: &GridPrecompute, slab: &mut Vec<f64>, counters: &mut FlopIoCounters) -> Result<()> {
    transform_slab(pre, slab, counters)
}
