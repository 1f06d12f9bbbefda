use gwgls_core::counters::{cost, FlopIoCounters};
use gwgls_core::datagen::standard_normals;
use gwgls_core::engine::{
    build_trait_contexts, compute_block, compute_tile, precompute_grid, transform_snp_slab, transform_trait_slab,
    CellScratch, GridPrecompute, ResultTile,
};
use gwgls_core::gls::CholeskyOracle;
use gwgls_core::nalgebra::DMatrix;
use gwgls_core::{generate_kinship, relative_error, solve_partitioned_gls, GenSpec, ProblemDims, TraitScalars};

fn random(rows: usize, cols: usize, stream: u64) -> DMatrix<f64> {
    DMatrix::from_vec(rows, cols, standard_normals(99, stream, rows * cols))
}

fn kinship(n: usize, seed: u64) -> DMatrix<f64> {
    generate_kinship(&GenSpec::new(ProblemDims::new(n, 1, 1, 1).unwrap(), seed)).unwrap()
}

fn setup(n: usize, p: usize) -> (DMatrix<f64>, DMatrix<f64>, GridPrecompute) {
    let phi = kinship(n, 5);
    let x_l = random(n, p - 1, 1);
    let pre = precompute_grid(&phi, &x_l, &mut FlopIoCounters::default()).unwrap();
    (phi, x_l, pre)
}

fn dense_zt(pre: &GridPrecompute, x: &DMatrix<f64>) -> DMatrix<f64> {
    pre.spectrum.eigenvectors().transpose() * x
}

fn scalars(t: usize) -> Vec<TraitScalars> {
    (0..t)
        .map(|j| TraitScalars::new(0.1 + 0.8 * j as f64 / t.max(1) as f64, 0.5 + j as f64).unwrap())
        .collect()
}

#[test]
fn precompute_counts_and_reproduces_dense_product() {
    let (n, p) = (64, 4);
    let phi = kinship(n, 2);
    let x_l = random(n, p - 1, 3);
    let mut counters = FlopIoCounters::default();
    let pre = precompute_grid(&phi, &x_l, &mut counters).unwrap();
    assert_eq!(counters.preloop_flops, (10 * 64u64.pow(3)).div_ceil(3) + 2 * 64 * 64 * 3);
    let reference = dense_zt(&pre, &x_l);
    assert!(relative_error(pre.xl_t(), reference.as_slice()) <= 1e-13);
}

#[test]
fn identity_precompute() {
    let x_l = DMatrix::from_fn(4, 2, |i, j| if i == j { 1.0 } else { 0.0 });
    let pre = precompute_grid(&DMatrix::identity(4, 4), &x_l, &mut FlopIoCounters::default()).unwrap();
    let expected = dense_zt(&pre, &x_l);
    assert_eq!(pre.xl_t(), expected.as_slice());
}

#[test]
fn slab_transforms_match_columnwise_reference() {
    let (n, k) = (32, 10);
    let (_, _, pre) = setup(n, 2);
    let raw = random(n, k, 4);
    let mut slab = raw.as_slice().to_vec();
    let mut counters = FlopIoCounters::default();
    transform_snp_slab(&pre, &mut slab, &mut counters).unwrap();
    assert_eq!(counters.preloop_flops, 2 * 32 * 32 * 10);
    let z = pre.spectrum.eigenvectors();
    for c in 0..k {
        let column = z.transpose() * raw.column(c);
        assert!(relative_error(&slab[c * n..(c + 1) * n], column.as_slice()) <= 1e-13);
        let mut single = raw.column(c).iter().copied().collect::<Vec<_>>();
        transform_trait_slab(&pre, &mut single, &mut counters).unwrap();
        assert_eq!(single, slab[c * n..(c + 1) * n].to_vec());
    }
    assert!(transform_snp_slab(&pre, &mut vec![0.0; n + 1], &mut counters).is_err());
}

#[test]
fn contexts_match_dense_weighted_products() {
    let (n, p) = (16, 3);
    let (_, _, pre) = setup(n, p);
    let ys = random(n, 2, 6);
    let mut y_t = ys.as_slice().to_vec();
    let mut counters = FlopIoCounters::default();
    transform_trait_slab(&pre, &mut y_t, &mut counters).unwrap();
    let sc = scalars(2);
    let before = counters.loop_flops;
    let ctx = build_trait_contexts(&pre, &y_t, &sc, 10, &mut counters).unwrap();
    assert_eq!(counters.loop_flops - before, 2 * cost::trait_context(n, p));
    assert_eq!(ctx[1].index, 11);
    let xl_t = DMatrix::from_column_slice(n, p - 1, pre.xl_t());
    for c in &ctx {
        let w = DMatrix::from_fn(n, p - 1, |i, a| c.k[i] * xl_t[(i, a)]);
        let s = w.transpose() * &w;
        assert!(relative_error(&c.s_tl, s.as_slice()) <= 1e-13);
        let s_tl = DMatrix::from_column_slice(p - 1, p - 1, &c.s_tl);
        assert_eq!(s_tl, s_tl.transpose());
    }
    assert!(build_trait_contexts(&pre, &y_t, &sc[..1], 0, &mut counters).is_err());
}

#[test]
fn trivial_context() {
    let n = 5;
    let x_l = random(n, 2, 8);
    let pre = precompute_grid(&DMatrix::identity(n, n), &x_l, &mut FlopIoCounters::default()).unwrap();
    let y = vec![1.0; n];
    let ctx = build_trait_contexts(&pre, &y, &[TraitScalars::new(0.0, 1.0).unwrap()], 0, &mut FlopIoCounters::default())
        .unwrap();
    assert_eq!(ctx[0].w_l, pre.xl_t());
    let xl_t = DMatrix::from_column_slice(n, 2, pre.xl_t());
    let s = xl_t.transpose() * &xl_t;
    assert!(relative_error(&ctx[0].s_tl, s.as_slice()) <= 1e-14);
}

struct Block {
    phi: DMatrix<f64>,
    x_l: DMatrix<f64>,
    pre: GridPrecompute,
    raw_snps: DMatrix<f64>,
    snps_t: Vec<f64>,
    raw_y: DMatrix<f64>,
    scalars: Vec<TraitScalars>,
    contexts: Vec<gwgls_core::engine::TraitContext>,
}

fn block(n: usize, p: usize, rows: usize, cols: usize) -> Block {
    let (phi, x_l, pre) = setup(n, p);
    let raw_snps = random(n, rows, 20);
    let mut snps_t = raw_snps.as_slice().to_vec();
    let mut c = FlopIoCounters::default();
    transform_snp_slab(&pre, &mut snps_t, &mut c).unwrap();
    let raw_y = random(n, cols, 21);
    let mut y_t = raw_y.as_slice().to_vec();
    transform_trait_slab(&pre, &mut y_t, &mut c).unwrap();
    let scalars = scalars(cols);
    let contexts = build_trait_contexts(&pre, &y_t, &scalars, 0, &mut c).unwrap();
    Block { phi, x_l, pre, raw_snps, snps_t, raw_y, scalars, contexts }
}

fn run_block(b: &Block, snps_t: &[f64], rows: usize, p: usize) -> (Vec<f64>, FlopIoCounters) {
    let cols = b.contexts.len();
    let mut out = vec![0.0; rows * cols * p];
    let mut runs: Vec<&mut [f64]> = out.chunks_exact_mut(rows * p).collect();
    let mut counters = FlopIoCounters::default();
    let n = b.pre.n();
    compute_block(&b.contexts, snps_t, 0, &mut runs, &mut CellScratch::new(n, p), &mut counters).unwrap();
    (out, counters)
}

#[test]
fn block_cells_match_oracle() {
    let (n, p) = (32, 4);
    let b = block(n, p, 4, 4);
    let (out, counters) = run_block(&b, &b.snps_t, 4, p);
    assert_eq!(counters.loop_flops, 16 * (5 + 2 * 3) * 32);
    for (j, sc) in b.scalars.iter().enumerate() {
        let oracle = CholeskyOracle::new(&b.phi, *sc).unwrap();
        let y: Vec<f64> = b.raw_y.column(j).iter().copied().collect();
        for i in 0..4 {
            let mut x = DMatrix::zeros(n, p);
            x.columns_mut(0, p - 1).copy_from(&b.x_l);
            x.column_mut(p - 1).copy_from(&b.raw_snps.column(i));
            let expected = oracle.solve(&x, &y).unwrap().coefficients;
            let got = &out[(j * 4 + i) * p..(j * 4 + i + 1) * p];
            assert!(relative_error(got, &expected) <= 1e-9);
        }
    }
}

#[test]
fn single_cell_block_equals_partitioned_solve() {
    let (n, p) = (24, 3);
    let b = block(n, p, 1, 1);
    let (out, _) = run_block(&b, &b.snps_t, 1, p);
    let x_r: Vec<f64> = b.raw_snps.column(0).iter().copied().collect();
    let y: Vec<f64> = b.raw_y.column(0).iter().copied().collect();
    let direct = solve_partitioned_gls(&b.pre.spectrum, &b.x_l, &x_r, &y, b.scalars[0]).unwrap();
    assert_eq!(out, direct.coefficients);
}

#[test]
fn identical_snps_give_identical_rows() {
    let (n, p) = (16, 3);
    let b = block(n, p, 3, 2);
    let repeated: Vec<f64> = b.snps_t[..n].repeat(3);
    let (out, _) = run_block(&b, &repeated, 3, p);
    for j in 0..2 {
        let run = &out[j * 3 * p..(j + 1) * 3 * p];
        assert_eq!(run[..p], run[p..2 * p]);
        assert_eq!(run[..p], run[2 * p..]);
    }
}

#[test]
fn tile_blocking_and_workers_are_bitwise_invariant() {
    let (n, p) = (16, 4);
    let b = block(n, p, 64, 64);
    let compute = |mbb: usize, tbb: usize, workers: usize| {
        let mut tile = ResultTile::new((0, 0), 64, 64, p);
        compute_tile(&b.contexts, &b.snps_t, (mbb, tbb), workers, &mut tile, &mut FlopIoCounters::default()).unwrap();
        tile.data
    };
    let single = compute(64, 64, 1);
    let (whole, _) = run_block(&b, &b.snps_t, 64, p);
    assert_eq!(single, whole);
    assert_eq!(compute(16, 16, 1), single);
    assert_eq!(compute(16, 16, 4), single);
    assert_eq!(compute(5, 7, 3), single);
}
