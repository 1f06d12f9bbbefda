//! Checks a result stream against the Cholesky oracle.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::gls::{relative_error, CholeskyOracle};
use crate::stream::{open_stream, StreamKind};

/// Which cells to recompute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellSelection {
    All,
    /// Up to this many distinct cells drawn uniformly with the seed.
    Sample { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// `(snp, trait)` of the largest error.
    pub worst_cell: Option<(usize, usize)>,
    pub tolerance: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= self.tolerance
    }
}

/// Distinct `(snp, trait)` cells ordered by trait, then SNP.
pub fn select_cells(m: usize, t: usize, selection: CellSelection) -> Vec<(usize, usize)> {
    let total = m * t;
    let mut flat: Vec<usize> = match selection {
        CellSelection::Sample { count, seed } if count < total => {
            // partial Fisher-Yates over the flat cell index
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pool: Vec<usize> = (0..total).collect();
            for k in 0..count {
                let pick = k + (rng.next_u64() % (total - k) as u64) as usize;
                pool.swap(k, pick);
            }
            pool.truncate(count);
            pool
        }
        _ => (0..total).collect(),
    };
    flat.sort_unstable();
    flat.into_iter().map(|c| (c % m, c / m)).collect()
}

/// Recomputes the selected cells of `result` with the oracle and reports
/// the largest relative error.
pub fn verify_result(
    data: &Dataset,
    result: &Path,
    selection: CellSelection,
    tolerance: f64,
) -> Result<VerifyReport> {
    let phi = data.load_kinship()?;
    let x_l = data.load_covariates()?;
    let snps = open_stream(&data.snps, StreamKind::Snp)?;
    let traits = open_stream(&data.traits, StreamKind::Trait)?;
    let out = open_stream(result, StreamKind::Result)?;
    let (n, q) = (phi.nrows(), x_l.ncols());
    let (m, t) = (snps.count(), traits.count());
    let [rm, rt, rp] = out.header().dims;
    if (rm, rt, rp) != (m as u64, t as u64, (q + 1) as u64) {
        return Err(Error::DimensionMismatch(format!(
            "result is {rm}x{rt}x{rp} but the dataset is {m}x{t}x{}",
            q + 1
        )));
    }

    let cells = select_cells(m, t, selection);
    let mut report = VerifyReport {
        checked: 0,
        max_relative_error: 0.0,
        worst_cell: None,
        tolerance,
    };
    let mut design = nalgebra::DMatrix::zeros(n, q + 1);
    design.columns_mut(0, q).copy_from(&x_l);
    let mut current: Option<(usize, CholeskyOracle, Vec<f64>)> = None;
    for (i, j) in cells {
        if current.as_ref().map(|c| c.0) != Some(j) {
            let (scalars, _) = traits.read_scalars(j, 1)?;
            let oracle = CholeskyOracle::new(&phi, scalars[0]).map_err(|e| e.at_cell(None, Some(j as u64)))?;
            current = Some((j, oracle, traits.read_slab(j, 1)?));
        }
        let (_, oracle, y) = current.as_ref().unwrap();
        design.column_mut(q).copy_from_slice(&snps.read_slab(i, 1)?);
        let expected = oracle
            .solve(&design, y)
            .map_err(|e| e.at_cell(Some(i as u64), Some(j as u64)))?
            .coefficients;
        let got = out.read_cell(i, j)?;
        let err = relative_error(&got, &expected);
        let err = if err.is_nan() { f64::INFINITY } else { err };
        if report.worst_cell.is_none() || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_cell = Some((i, j));
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_is_distinct_and_seeded() {
        let all = select_cells(20, 10, CellSelection::All);
        assert_eq!(all.len(), 200);
        assert_eq!(all[0], (0, 0));
        assert_eq!(all[20], (0, 1));

        let a = select_cells(20, 10, CellSelection::Sample { count: 50, seed: 3 });
        let b = select_cells(20, 10, CellSelection::Sample { count: 50, seed: 3 });
        assert_eq!(a, b);
        let mut dedup = a.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 50);
        assert!(a.windows(2).all(|w| (w[0].1, w[0].0) < (w[1].1, w[1].0)));

        assert_eq!(select_cells(3, 2, CellSelection::Sample { count: 1000, seed: 0 }).len(), 6);
    }
}
