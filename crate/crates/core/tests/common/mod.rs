#![allow(dead_code)]

use std::path::PathBuf;

use gwgls_core::nalgebra::DMatrix;
use gwgls_core::{
    open_stream, run_grid, Dataset, GenSpec, GridInputs, KinshipModel, ProblemDims, RunOptions, RunSummary,
    SchedulerMode, StreamKind, TileParams,
};
use tempfile::TempDir;

pub struct Fixture {
    pub dir: TempDir,
    pub data: Dataset,
    pub phi: DMatrix<f64>,
    pub x_l: DMatrix<f64>,
}

pub fn fixture(n: usize, p: usize, m: usize, t: usize, seed: u64) -> Fixture {
    fixture_with(n, p, m, t, seed, KinshipModel::RandomSpd { condition: 100.0 })
}

pub fn fixture_with(n: usize, p: usize, m: usize, t: usize, seed: u64, kinship: KinshipModel) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = GenSpec::new(ProblemDims::new(n, p, m, t).unwrap(), seed);
    spec.kinship = kinship;
    let data = gwgls_core::generate_streams(&spec, dir.path().join("data")).unwrap();
    let phi = data.load_kinship().unwrap();
    let x_l = data.load_covariates().unwrap();
    Fixture { dir, data, phi, x_l }
}

impl Fixture {
    pub fn inputs(&self) -> GridInputs<'_> {
        GridInputs {
            kinship: &self.phi,
            covariates: &self.x_l,
            snps: &self.data.snps,
            traits: &self.data.traits,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn options(&self, params: TileParams, name: &str) -> RunOptions {
        RunOptions::new(params, self.path(&format!("work-{name}")))
    }

    /// Runs the grid and returns the result stream bytes.
    pub fn run(&self, options: &RunOptions, name: &str) -> (Vec<u8>, RunSummary) {
        let out = self.path(&format!("{name}.gwg"));
        let summary = run_grid(self.inputs(), &out, options).unwrap();
        (std::fs::read(&out).unwrap(), summary)
    }

    pub fn run_with(
        &self,
        params: TileParams,
        scheduler: SchedulerMode,
        workers: usize,
        name: &str,
    ) -> (Vec<u8>, RunSummary) {
        let mut options = self.options(params, name);
        options.scheduler = scheduler;
        options.workers = workers;
        self.run(&options, name)
    }

    pub fn snp_column(&self, i: usize) -> Vec<f64> {
        open_stream(&self.data.snps, StreamKind::Snp).unwrap().read_slab(i, 1).unwrap()
    }

    pub fn trait_column(&self, j: usize) -> Vec<f64> {
        open_stream(&self.data.traits, StreamKind::Trait).unwrap().read_slab(j, 1).unwrap()
    }

    /// `[X_L | x_i]`.
    pub fn design(&self, i: usize) -> DMatrix<f64> {
        let n = self.phi.nrows();
        let q = self.x_l.ncols();
        let mut x = DMatrix::zeros(n, q + 1);
        x.columns_mut(0, q).copy_from(&self.x_l);
        x.column_mut(q).copy_from_slice(&self.snp_column(i));
        x
    }
}

pub fn params(nb: usize, mb: usize, tb: usize, mbb: usize, tbb: usize) -> TileParams {
    TileParams { nb, mb, tb, mbb, tbb }
}
