//! Deterministic synthetic datasets.
//!
//! Every operand draws from its own ChaCha8 stream of the run seed, and
//! normal variates come from the inverse normal CDF, so the bytes written
//! depend on nothing but the spec.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gls::{ProblemDims, TraitScalars};
use crate::stream::{open_stream, write_dense, StreamHeader, StreamKind, StreamWriter};
use crate::tuner::parse_kv;

const STREAM_KINSHIP: u64 = 1;
const STREAM_COVARIATES: u64 = 2;
const STREAM_SNPS: u64 = 3;
const STREAM_TRAITS: u64 = 4;
const STREAM_SCALARS: u64 = 5;

/// Columns generated and written per step.
const WRITE_SLAB: usize = 256;

pub const KINSHIP_FILE: &str = "kinship.gwg";
pub const COVARIATES_FILE: &str = "covariates.gwg";
pub const SNPS_FILE: &str = "snps.gwg";
pub const TRAITS_FILE: &str = "traits.gwg";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KinshipModel {
    Identity,
    /// `diag(1, 2, ..., n)`.
    Diagonal,
    /// `Qᵀ Λ Q` with a random orthogonal `Q` and a log-spaced spectrum from
    /// 1 to `condition`.
    RandomSpd { condition: f64 },
}

impl KinshipModel {
    fn describe(&self) -> String {
        match self {
            Self::Identity => "identity".into(),
            Self::Diagonal => "diagonal".into(),
            Self::RandomSpd { condition } => format!("random-spd:{condition}"),
        }
    }

    /// Parses `identity`, `diagonal` or `random-spd:<condition>`.
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "identity" => Ok(Self::Identity),
            "diagonal" => Ok(Self::Diagonal),
            _ => {
                let condition = text
                    .strip_prefix("random-spd:")
                    .and_then(|c| c.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown kinship model {text:?}")))?;
                Ok(Self::RandomSpd { condition })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub dims: ProblemDims,
    pub seed: u64,
    pub kinship: KinshipModel,
    /// Inclusive heritability range inside `[0, 1)`.
    pub h2_range: (f64, f64),
    /// Inclusive variance-scale range inside `(0, ∞)`.
    pub sigma2_range: (f64, f64),
}

impl GenSpec {
    pub fn new(dims: ProblemDims, seed: u64) -> Self {
        Self {
            dims,
            seed,
            kinship: KinshipModel::RandomSpd { condition: 100.0 },
            h2_range: (0.1, 0.9),
            sigma2_range: (0.5, 2.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h_lo, h_hi) = self.h2_range;
        let (s_lo, s_hi) = self.sigma2_range;
        if !(0.0 <= h_lo && h_lo <= h_hi && h_hi < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "h2 range {:?} must be non-empty inside [0, 1)",
                self.h2_range
            )));
        }
        if !(0.0 < s_lo && s_lo <= s_hi && s_hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma2 range {:?} must be non-empty inside (0, inf)",
                self.sigma2_range
            )));
        }
        if let KinshipModel::RandomSpd { condition } = self.kinship {
            if !(condition >= 1.0 && condition.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "condition target {condition} must be at least 1"
                )));
            }
        }
        Ok(())
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform in the open interval `(0, 1)` from the top 53 bits.
fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let normal = Normal::standard();
    for v in out {
        *v = normal.inverse_cdf(open_uniform(rng));
    }
}

/// `len` standard normal variates from stream `stream` of `seed`.
pub fn standard_normals(seed: u64, stream: u64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    fill_normals(&mut rng(seed, stream), &mut out);
    out
}

/// The kinship matrix of `spec`.
pub fn generate_kinship(spec: &GenSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.dims.n;
    Ok(match spec.kinship {
        KinshipModel::Identity => DMatrix::identity(n, n),
        KinshipModel::Diagonal => DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| (i + 1) as f64)),
        KinshipModel::RandomSpd { condition } => {
            let g = DMatrix::from_vec(n, n, standard_normals(spec.seed, STREAM_KINSHIP, n * n));
            let q = g.qr().q();
            let spectrum = nalgebra::DVector::from_fn(n, |k, _| {
                if n == 1 {
                    1.0
                } else {
                    condition.powf(k as f64 / (n - 1) as f64)
                }
            });
            let phi = &q * DMatrix::from_diagonal(&spectrum) * q.transpose();
            (&phi + phi.transpose()) * 0.5
        }
    })
}

/// Shared covariates: an intercept column followed by standard normals.
pub fn generate_covariates(spec: &GenSpec) -> DMatrix<f64> {
    let (n, q) = (spec.dims.n, spec.dims.shared_covariates());
    let mut x = DMatrix::from_vec(n, q, standard_normals(spec.seed, STREAM_COVARIATES, n * q));
    if q > 0 {
        x.column_mut(0).fill(1.0);
    }
    x
}

/// Per-trait heritability and variance scale.
pub fn generate_scalars(spec: &GenSpec) -> Result<Vec<TraitScalars>> {
    spec.validate()?;
    let mut rng = rng(spec.seed, STREAM_SCALARS);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| lo + (hi - lo) * open_uniform(rng);
    (0..spec.dims.t)
        .map(|_| {
            let h2 = draw(&mut rng, spec.h2_range).min(spec.h2_range.1);
            let sigma2 = draw(&mut rng, spec.sigma2_range).min(spec.sigma2_range.1);
            TraitScalars::new(h2, sigma2)
        })
        .collect()
}

/// Paths of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dims: ProblemDims,
    pub kinship: PathBuf,
    pub covariates: PathBuf,
    pub snps: PathBuf,
    pub traits: PathBuf,
    pub manifest: PathBuf,
}

impl Dataset {
    /// Locates the files of a dataset directory through its manifest.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, 0, e))?;
        let kv = parse_kv(&text)?;
        let get = |key: &str| -> Result<usize> {
            kv.get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::InvalidParameter(format!("manifest lacks a valid {key}")))
        };
        let dims = ProblemDims::new(get("n")?, get("p")?, get("m")?, get("t")?)?;
        let file = |key: &str, default: &str| dir.join(kv.get(key).map_or(default, String::as_str));
        Ok(Self {
            dims,
            kinship: file("kinship", KINSHIP_FILE),
            covariates: file("covariates", COVARIATES_FILE),
            snps: file("snps", SNPS_FILE),
            traits: file("traits", TRAITS_FILE),
            manifest,
        })
    }

    pub fn load_kinship(&self) -> Result<DMatrix<f64>> {
        open_stream(&self.kinship, StreamKind::Dense)?.read_dense()
    }

    pub fn load_covariates(&self) -> Result<DMatrix<f64>> {
        open_stream(&self.covariates, StreamKind::Dense)?.read_dense()
    }
}

/// Writes kinship, covariates, SNP and trait streams plus a manifest into
/// `dir`, creating it if needed.
pub fn generate_streams(spec: &GenSpec, dir: impl AsRef<Path>) -> Result<Dataset> {
    spec.validate()?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, 0, e))?;
    let ProblemDims { n, m, t, .. } = spec.dims;

    let kinship = dir.join(KINSHIP_FILE);
    write_dense(&kinship, &generate_kinship(spec)?)?;
    let covariates = dir.join(COVARIATES_FILE);
    write_dense(&covariates, &generate_covariates(spec))?;

    let snps = dir.join(SNPS_FILE);
    write_normal_columns(&snps, StreamHeader::snp(n, m), spec.seed, STREAM_SNPS)?.finish()?;

    let traits = dir.join(TRAITS_FILE);
    let writer = write_normal_columns(&traits, StreamHeader::traits(n, t), spec.seed, STREAM_TRAITS)?;
    writer.write_scalars(0, &generate_scalars(spec)?)?;
    writer.finish()?;

    let manifest = dir.join(MANIFEST_FILE);
    std::fs::write(&manifest, manifest_text(spec)).map_err(|e| Error::io(&manifest, 0, e))?;
    Ok(Dataset {
        dims: spec.dims,
        kinship,
        covariates,
        snps,
        traits,
        manifest,
    })
}

fn write_normal_columns(path: &Path, header: StreamHeader, seed: u64, stream: u64) -> Result<StreamWriter> {
    let [n, count, _] = header.dims;
    let (n, count) = (n as usize, count as usize);
    let writer = StreamWriter::create(path, header)?;
    let mut rng = rng(seed, stream);
    let mut slab = Vec::new();
    for start in (0..count).step_by(WRITE_SLAB) {
        let width = WRITE_SLAB.min(count - start);
        slab.resize(n * width, 0.0);
        fill_normals(&mut rng, &mut slab);
        writer.write_columns(start, &slab)?;
    }
    Ok(writer)
}

/// The `key=value` manifest of a dataset.
pub fn manifest_text(spec: &GenSpec) -> String {
    let d = &spec.dims;
    let mut s = String::new();
    let _ = writeln!(s, "format=GWG1");
    let _ = writeln!(s, "n={}", d.n);
    let _ = writeln!(s, "p={}", d.p);
    let _ = writeln!(s, "m={}", d.m);
    let _ = writeln!(s, "t={}", d.t);
    let _ = writeln!(s, "seed={}", spec.seed);
    let _ = writeln!(s, "prng=chacha8");
    let _ = writeln!(s, "normals=inverse-cdf");
    let _ = writeln!(s, "kinship_model={}", spec.kinship.describe());
    let _ = writeln!(s, "h2_range={},{}", spec.h2_range.0, spec.h2_range.1);
    let _ = writeln!(s, "sigma2_range={},{}", spec.sigma2_range.0, spec.sigma2_range.1);
    let _ = writeln!(s, "kinship={KINSHIP_FILE}");
    let _ = writeln!(s, "covariates={COVARIATES_FILE}");
    let _ = writeln!(s, "snps={SNPS_FILE}");
    let _ = writeln!(s, "traits={TRAITS_FILE}");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, p: usize, m: usize, t: usize) -> GenSpec {
        GenSpec::new(ProblemDims::new(n, p, m, t).unwrap(), 7)
    }

    #[test]
    fn identity_and_diagonal_models() {
        let mut s = spec(5, 2, 3, 2);
        s.kinship = KinshipModel::Identity;
        assert_eq!(generate_kinship(&s).unwrap(), DMatrix::identity(5, 5));
        s.kinship = KinshipModel::Diagonal;
        let d = generate_kinship(&s).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(d[(i, j)], if i == j { (i + 1) as f64 } else { 0.0 });
            }
        }
    }

    #[test]
    fn random_spd_hits_condition() {
        let s = spec(40, 2, 3, 2);
        let phi = generate_kinship(&s).unwrap();
        assert_eq!(phi, phi.transpose());
        let eig = phi.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        assert!(lo > 0.0);
        let cond = hi / lo;
        assert!((50.0..=200.0).contains(&cond), "condition {cond}");
    }

    #[test]
    fn normals_are_reproducible_and_sane() {
        let a = standard_normals(3, 9, 20_000);
        assert_eq!(a, standard_normals(3, 9, 20_000));
        assert_ne!(a, standard_normals(3, 10, 20_000));
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 0.05);
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn stream_sizes_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(4, 2, 3, 2);
        let a = generate_streams(&s, dir.path().join("a")).unwrap();
        let b = generate_streams(&s, dir.path().join("b")).unwrap();
        assert_eq!(std::fs::metadata(&a.snps).unwrap().len(), 64 + 12 * 8);
        assert_eq!(std::fs::metadata(&a.traits).unwrap().len(), 64 + (8 + 4) * 8);
        for (x, y) in [(&a.kinship, &b.kinship), (&a.covariates, &b.covariates), (&a.snps, &b.snps), (&a.traits, &b.traits), (&a.manifest, &b.manifest)] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let opened = Dataset::open(dir.path().join("a")).unwrap();
        assert_eq!(opened, a);
        assert_eq!(opened.load_covariates().unwrap().column(0).iter().all(|&v| v == 1.0), true);
    }

    #[test]
    fn zero_heritability_range() {
        let mut s = spec(4, 2, 3, 5);
        s.h2_range = (0.0, 0.0);
        assert!(generate_scalars(&s).unwrap().iter().all(|sc| sc.h2 == 0.0));
        s.h2_range = (0.5, 1.0);
        assert!(s.validate().is_err());
        s.h2_range = (0.2, 0.1);
        assert!(s.validate().is_err());
    }

    #[test]
    fn model_parsing() {
        assert_eq!(KinshipModel::parse("identity").unwrap(), KinshipModel::Identity);
        assert_eq!(
            KinshipModel::parse("random-spd:100").unwrap(),
            KinshipModel::RandomSpd { condition: 100.0 }
        );
        assert!(KinshipModel::parse("nope").is_err());
    }
}
