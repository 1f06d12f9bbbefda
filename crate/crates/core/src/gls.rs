//! Single-instance generalized least squares.
//!
//! For a covariance `M = σ²(h²Φ + (1−h²)I)` and design `X`, the solution
//! `b = (Xᵀ M⁻¹ X)⁻¹ Xᵀ M⁻¹ y` is computed through the eigendecomposition
//! `Φ = Z Λ Zᵀ`, which turns `M⁻¹` into `Z D⁻¹ Zᵀ` with diagonal
//! `D = σ²(h²Λ + (1−h²)I)`. [`CholeskyOracle`] solves the same problem by a
//! completely separate route (explicit `M`, Cholesky, triangular solves) and
//! is what the rest of the crate is verified against.

use nalgebra::{DMatrix, DVector};

use crate::engine::{solve_cell, CellScratch, TraitContext};
use crate::error::{Error, Result};
use crate::kernels::{dot, gemm_tn, scale_into, spd_solve_in_place};

/// Relative floor under which an entry of `D` is treated as non-positive.
pub const POSITIVITY_FLOOR: f64 = 1e-13;

/// Relative asymmetry accepted by [`eigendecompose_kinship`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Problem sizes: `n` individuals, `p` covariates per design matrix
/// (including the SNP column), `m` SNPs and `t` traits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemDims {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub t: usize,
}

impl ProblemDims {
    pub fn new(n: usize, p: usize, m: usize, t: usize) -> Result<Self> {
        if p == 0 || n < p || m == 0 || t == 0 {
            return Err(Error::InvalidParameter(format!(
                "dimensions require n >= p >= 1, m >= 1, t >= 1 (got n={n}, p={p}, m={m}, t={t})"
            )));
        }
        Ok(Self { n, p, m, t })
    }

    /// Number of shared covariate columns (`X_L`).
    pub fn shared_covariates(&self) -> usize {
        self.p - 1
    }
}

/// Eigendecomposition `Φ = Z diag(Λ) Zᵀ` of the kinship matrix.
///
/// Eigenvalues are ascending; each eigenvector has its largest-magnitude
/// entry positive (first such entry on ties).
#[derive(Debug, Clone)]
pub struct KinshipSpectrum {
    vectors: DMatrix<f64>,
    values: Vec<f64>,
}

impl KinshipSpectrum {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// `Z` as a column-major slice.
    pub fn z(&self) -> &[f64] {
        self.vectors.as_slice()
    }

    /// Applies `Zᵀ` to the columns of a column-major `n × k` block.
    pub fn transform(&self, k: usize, input: &[f64], output: &mut [f64]) {
        let n = self.n();
        gemm_tn(n, n, k, self.z(), input, output);
    }
}

/// Heritability and variance scale of one trait.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraitScalars {
    pub h2: f64,
    pub sigma2: f64,
}

impl TraitScalars {
    pub fn new(h2: f64, sigma2: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&h2) {
            return Err(Error::InvalidParameter(format!("h2 must lie in [0, 1), got {h2}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(Self { h2, sigma2 })
    }
}

/// Coefficients `b` of one grid cell; covariates of `X_L` first, SNP last.
#[derive(Debug, Clone, PartialEq)]
pub struct GlsSolution {
    pub coefficients: Vec<f64>,
    /// `(snp, trait)` coordinates when the solve belongs to a grid.
    pub cell: Option<(u64, u64)>,
}

/// Per-trait diagonal weights: `D = σ²(h²Λ + (1−h²))` and `K = D^(−1/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraitWeights {
    pub d: Vec<f64>,
    pub k: Vec<f64>,
}

pub fn eigendecompose_kinship(phi: &DMatrix<f64>) -> Result<KinshipSpectrum> {
    let n = phi.nrows();
    if n == 0 || phi.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "kinship matrix must be square and non-empty, got {}x{}",
            phi.nrows(),
            phi.ncols()
        )));
    }
    if phi.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("kinship matrix has non-finite entries".into()));
    }
    let scale = phi.amax();
    let mut asymmetry = 0.0f64;
    for j in 0..n {
        for i in j + 1..n {
            asymmetry = asymmetry.max((phi[(i, j)] - phi[(j, i)]).abs());
        }
    }
    let tolerance = SYMMETRY_TOLERANCE * scale;
    if asymmetry > tolerance {
        return Err(Error::NonSymmetric {
            asymmetry,
            tolerance,
        });
    }

    let eig = nalgebra::SymmetricEigen::try_new(phi.clone(), f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::BackendFailure(format!("symmetric eigensolver did not converge (n={n})")))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, dst)] = sign * col[i];
        }
    }
    Ok(KinshipSpectrum { vectors, values })
}

pub fn build_trait_weights(eigenvalues: &[f64], scalars: TraitScalars) -> Result<TraitWeights> {
    let TraitScalars { h2, sigma2 } = scalars;
    let d: Vec<f64> = eigenvalues
        .iter()
        .map(|&lambda| sigma2 * (h2 * lambda + (1.0 - h2)))
        .collect();
    let max = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) || d.iter().any(|&x| !(x > POSITIVITY_FLOOR * max)) {
        return Err(Error::not_spd());
    }
    let k = d.iter().map(|&x| 1.0 / x.sqrt()).collect();
    Ok(TraitWeights { d, k })
}

fn check_design(spectrum: &KinshipSpectrum, rows: usize, y: &[f64]) -> Result<()> {
    let n = spectrum.n();
    if rows != n || y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "spectrum has n={n}, design has {rows} rows, y has {} entries",
            y.len()
        )));
    }
    Ok(())
}

/// Monolithic solve: `X' = ZᵀX`, `y' = Zᵀy`, `W = KX'`, `v = Ky'`,
/// `S = WᵀW`, `b = Wᵀv`, then `S b = b` by Cholesky.
pub fn solve_single_gls(
    spectrum: &KinshipSpectrum,
    x: &DMatrix<f64>,
    y: &[f64],
    scalars: TraitScalars,
) -> Result<GlsSolution> {
    check_design(spectrum, x.nrows(), y)?;
    let n = spectrum.n();
    let p = x.ncols();
    if p == 0 || p > n {
        return Err(Error::DimensionMismatch(format!("need 1 <= p <= n, got p={p}, n={n}")));
    }
    let weights = build_trait_weights(spectrum.eigenvalues(), scalars)?;

    let mut x_t = vec![0.0; n * p];
    spectrum.transform(p, x.as_slice(), &mut x_t);
    let mut y_t = vec![0.0; n];
    spectrum.transform(1, y, &mut y_t);

    let mut w = vec![0.0; n * p];
    for (wc, xc) in w.chunks_exact_mut(n).zip(x_t.chunks_exact(n)) {
        scale_into(&weights.k, xc, wc);
    }
    let mut v = vec![0.0; n];
    scale_into(&weights.k, &y_t, &mut v);

    let col = |c: usize| &w[c * n..(c + 1) * n];
    let mut s = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for a in 0..p {
        for c in 0..=a {
            s[c * p + a] = dot(col(a), col(c));
        }
        b[a] = dot(col(a), &v);
    }
    spd_solve_in_place(p, &mut s, &mut b)?;
    Ok(GlsSolution {
        coefficients: b,
        cell: None,
    })
}

/// Solve with `X = (X_L | x_R)` kept partitioned: the shared quadrant
/// `S_TL` and half `b_T` depend only on the trait, while `S_BL`, `S_BR` and
/// `b_B` are formed from the SNP column. The top-right quadrant is never
/// materialized.
pub fn solve_partitioned_gls(
    spectrum: &KinshipSpectrum,
    x_l: &DMatrix<f64>,
    x_r: &[f64],
    y: &[f64],
    scalars: TraitScalars,
) -> Result<GlsSolution> {
    check_design(spectrum, x_l.nrows(), y)?;
    let n = spectrum.n();
    let q = x_l.ncols();
    if x_r.len() != n || q + 1 > n {
        return Err(Error::DimensionMismatch(format!(
            "x_R has {} entries and X_L has {q} columns for n={n}",
            x_r.len()
        )));
    }
    let mut xl_t = vec![0.0; n * q];
    spectrum.transform(q, x_l.as_slice(), &mut xl_t);
    let mut y_t = vec![0.0; n];
    spectrum.transform(1, y, &mut y_t);
    let mut xr_t = vec![0.0; n];
    spectrum.transform(1, x_r, &mut xr_t);

    let (ctx, _) = TraitContext::build(0, spectrum.eigenvalues(), scalars, &y_t, &xl_t, q + 1)?;
    let mut scratch = CellScratch::new(n, q + 1);
    let mut b = vec![0.0; q + 1];
    solve_cell(&ctx, &xr_t, &mut scratch, &mut b)?;
    Ok(GlsSolution {
        coefficients: b,
        cell: None,
    })
}

/// Reference solver: factors `M` explicitly and never touches the
/// eigendecomposition. The factor depends only on the trait, so one oracle
/// can serve every SNP of that trait.
#[derive(Debug, Clone)]
pub struct CholeskyOracle {
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl CholeskyOracle {
    pub fn new(phi: &DMatrix<f64>, scalars: TraitScalars) -> Result<Self> {
        let n = phi.nrows();
        if n == 0 || phi.ncols() != n {
            return Err(Error::DimensionMismatch("kinship matrix must be square".into()));
        }
        let TraitScalars { h2, sigma2 } = scalars;
        let m = DMatrix::from_fn(n, n, |i, j| {
            let identity = if i == j { 1.0 } else { 0.0 };
            sigma2 * (h2 * phi[(i, j)] + (1.0 - h2) * identity)
        });
        let factor = nalgebra::Cholesky::new(m).ok_or_else(Error::not_spd)?;
        Ok(Self { factor })
    }

    pub fn solve(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<GlsSolution> {
        let l = self.factor.l_dirty();
        let n = l.nrows();
        if x.nrows() != n || y.len() != n {
            return Err(Error::DimensionMismatch("oracle operands do not match n".into()));
        }
        let a = l
            .solve_lower_triangular(x)
            .ok_or_else(Error::not_spd)?;
        let c = l
            .solve_lower_triangular(&DVector::from_column_slice(y))
            .ok_or_else(Error::not_spd)?;
        let normal = a.tr_mul(&a);
        let rhs = a.tr_mul(&c);
        let b = nalgebra::Cholesky::new(normal)
            .ok_or_else(Error::not_spd)?
            .solve(&rhs);
        Ok(GlsSolution {
            coefficients: b.iter().copied().collect(),
            cell: None,
        })
    }
}

pub fn solve_single_gls_oracle(
    phi: &DMatrix<f64>,
    x: &DMatrix<f64>,
    y: &[f64],
    scalars: TraitScalars,
) -> Result<GlsSolution> {
    CholeskyOracle::new(phi, scalars)?.solve(x, y)
}

/// `‖a − b‖₂ / ‖b‖₂` (absolute difference when `b` is zero).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}
