//! Fixtures shared by the criterion benchmarks.

use std::path::Path;

use gwgls_core::datagen::standard_normals;
use gwgls_core::engine::{build_trait_contexts, precompute_grid, transform_snp_slab, transform_trait_slab, TraitContext};
use gwgls_core::nalgebra::DMatrix;
use gwgls_core::{
    generate_kinship, generate_streams, Dataset, FlopIoCounters, GenSpec, KinshipModel, ProblemDims, TraitScalars,
};

/// Transformed operands for benchmarking a single `mbb × tbb` block.
pub struct BlockFixture {
    pub n: usize,
    pub p: usize,
    pub contexts: Vec<TraitContext>,
    /// `n × mbb` transformed SNP columns.
    pub snps: Vec<f64>,
}

impl BlockFixture {
    pub fn new(n: usize, p: usize, mbb: usize, tbb: usize, seed: u64) -> Self {
        let mut spec = GenSpec::new(ProblemDims::new(n, p, mbb, tbb).unwrap(), seed);
        spec.kinship = KinshipModel::RandomSpd { condition: 100.0 };
        let phi = generate_kinship(&spec).unwrap();
        let x_l = DMatrix::from_vec(n, p - 1, standard_normals(seed, 10, n * (p - 1)));
        let mut counters = FlopIoCounters::default();
        let pre = precompute_grid(&phi, &x_l, &mut counters).unwrap();
        let mut snps = standard_normals(seed, 11, n * mbb);
        transform_snp_slab(&pre, &mut snps, &mut counters).unwrap();
        let mut traits = standard_normals(seed, 12, n * tbb);
        transform_trait_slab(&pre, &mut traits, &mut counters).unwrap();
        let scalars = vec![TraitScalars::new(0.5, 1.0).unwrap(); tbb];
        let contexts = build_trait_contexts(&pre, &traits, &scalars, 0, &mut counters).unwrap();
        Self { n, p, contexts, snps }
    }

    pub fn mbb(&self) -> usize {
        self.snps.len() / self.n
    }
}

/// Writes a reproducible dataset under `dir`.
pub fn dataset(dir: &Path, n: usize, p: usize, m: usize, t: usize, seed: u64) -> Dataset {
    let mut spec = GenSpec::new(ProblemDims::new(n, p, m, t).unwrap(), seed);
    spec.kinship = KinshipModel::RandomSpd { condition: 100.0 };
    generate_streams(&spec, dir).unwrap()
}

/// Loads the kinship and covariate matrices of a dataset.
pub fn load(data: &Dataset) -> (DMatrix<f64>, DMatrix<f64>) {
    (data.load_kinship().unwrap(), data.load_covariates().unwrap())
}
