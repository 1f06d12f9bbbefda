//! Machine microbenchmarks producing a [`MachineProfile`].
//!
//! Profiling should run alone on the machine; concurrent load skews every
//! rate it reports.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use crate::counters::cost;
use crate::datagen::standard_normals;
use crate::error::{Error, Result};
use crate::kernels::gemm_tn;

use super::model::MachineProfile;
use super::sweep::{median, BlockBench, MIN_SAMPLE};
use super::params::DEFAULT_BLOCK;

/// Transfer sizes at which bandwidth is measured.
pub const TRANSFER_SIZES: [u64; 3] = [256 << 10, 2 << 20, 16 << 20];

/// Fraction of the best rate that counts as saturated.
pub const SATURATION: f64 = 0.9;

/// Relative difference above which two profiles are reported unstable.
pub const STABILITY_LIMIT: f64 = 0.30;

/// Coarsest acceptable timer tick.
const MAX_TIMER_TICK: Duration = Duration::from_millis(1);

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileMode {
    /// Run the microbenchmarks.
    Measure,
    /// Touch neither disk nor CPU: return `profile` as is, with a
    /// bandwidth curve from a fixed per-transfer `latency`.
    Synthetic { profile: MachineProfile, latency: Duration },
}

#[derive(Debug, Clone)]
pub struct ProfileOptions {
    pub mode: ProfileMode,
    /// Directory for the bandwidth scratch file.
    pub scratch_dir: PathBuf,
    /// Bytes streamed per bandwidth trial.
    pub scratch_bytes: u64,
    pub transfer_sizes: Vec<u64>,
    /// Problem size of the dense-product and tile benchmarks.
    pub n: usize,
    pub p: usize,
    /// Slab widths for the dense-product rate.
    pub candidate_nb: Vec<usize>,
    /// Block edge for the tile rate.
    pub block: usize,
    /// At least 5.
    pub trials: usize,
    pub seed: u64,
}

impl ProfileOptions {
    pub fn new(scratch_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: ProfileMode::Measure,
            scratch_dir: scratch_dir.into(),
            scratch_bytes: 32 << 20,
            transfer_sizes: TRANSFER_SIZES.to_vec(),
            n: 512,
            p: 4,
            candidate_nb: vec![1, 8, 32, 128, 256],
            block: DEFAULT_BLOCK,
            trials: 5,
            seed: 0,
        }
    }
}

/// Bandwidth at one transfer size, bytes/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferSample {
    pub bytes: u64,
    pub read: f64,
    pub write: f64,
}

impl TransferSample {
    pub fn sequential(&self) -> f64 {
        self.read.min(self.write)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileReport {
    pub profile: MachineProfile,
    pub transfers: Vec<TransferSample>,
    /// `(nb, flop/s)` of the preloop product.
    pub product_rates: Vec<(usize, f64)>,
    pub tile_rate: f64,
    pub trials: usize,
}

/// Measures (or synthesizes) a machine profile. Every reported rate is the
/// median of `trials` samples.
pub fn profile_machine(options: &ProfileOptions) -> Result<ProfileReport> {
    if let ProfileMode::Synthetic { profile, latency } = &options.mode {
        return synthetic(options, *profile, *latency);
    }
    if options.trials < 5 {
        return Err(Error::InvalidParameter("profiling needs at least 5 trials".into()));
    }
    if options.transfer_sizes.is_empty() || options.candidate_nb.is_empty() {
        return Err(Error::InvalidParameter("nothing to profile".into()));
    }
    check_timer()?;
    let transfers = measure_bandwidth(options)?;
    let product_rates = options
        .candidate_nb
        .iter()
        .map(|&nb| product_rate(options.n, nb, options.trials, options.seed).map(|r| (nb, r)))
        .collect::<Result<Vec<_>>>()?;
    let block = options.block.max(1);
    let mut bench = BlockBench::new(options.n, options.p, block, block, options.seed)?;
    let tile_rate = bench.rate(block, block, options.trials)?;
    let profile = assemble(&transfers, &product_rates, tile_rate)?;
    Ok(ProfileReport {
        profile,
        transfers,
        product_rates,
        tile_rate,
        trials: options.trials,
    })
}

fn synthetic(options: &ProfileOptions, profile: MachineProfile, latency: Duration) -> Result<ProfileReport> {
    profile.validate()?;
    let transfers = options
        .transfer_sizes
        .iter()
        .map(|&bytes| {
            let secs = latency.as_secs_f64() + bytes as f64 / profile.io_bandwidth;
            let bw = if secs > 0.0 { bytes as f64 / secs } else { f64::INFINITY };
            TransferSample { bytes, read: bw, write: bw }
        })
        .collect();
    let product_rates = options
        .candidate_nb
        .iter()
        .map(|&nb| (nb, profile.flops_per_sec_preloop))
        .collect();
    Ok(ProfileReport {
        profile,
        transfers,
        product_rates,
        tile_rate: profile.flops_per_sec_loops,
        trials: options.trials,
    })
}

fn assemble(transfers: &[TransferSample], product_rates: &[(usize, f64)], tile_rate: f64) -> Result<MachineProfile> {
    let io_bandwidth = transfers.iter().map(TransferSample::sequential).fold(0.0, f64::max);
    let saturating_transfer_bytes = transfers
        .iter()
        .find(|s| s.sequential() >= SATURATION * io_bandwidth)
        .map_or(0, |s| s.bytes);
    let flops_per_sec_preloop = product_rates.iter().map(|&(_, r)| r).fold(0.0, f64::max);
    let saturating_nb = product_rates
        .iter()
        .find(|&&(_, r)| r >= SATURATION * flops_per_sec_preloop)
        .map_or(1, |&(nb, _)| nb);
    let profile = MachineProfile {
        flops_per_sec_preloop,
        flops_per_sec_loops: tile_rate,
        io_bandwidth,
        datatype_size: 8.0,
        saturating_transfer_bytes,
        saturating_nb,
    };
    profile.validate()?;
    Ok(profile)
}

/// Smallest observed non-zero step of the monotonic clock.
pub fn timer_tick() -> Duration {
    let mut tick = Duration::MAX;
    for _ in 0..64 {
        let start = Instant::now();
        let mut now = Instant::now();
        while now == start {
            now = Instant::now();
        }
        tick = tick.min(now - start);
    }
    tick
}

fn check_timer() -> Result<()> {
    let tick = timer_tick();
    if tick > MAX_TIMER_TICK {
        return Err(Error::TimerResolution(format!("clock tick of {tick:?} exceeds {MAX_TIMER_TICK:?}")));
    }
    Ok(())
}

fn measure_bandwidth(options: &ProfileOptions) -> Result<Vec<TransferSample>> {
    let path = options
        .scratch_dir
        .join(format!("gwgls-profile-{}.tmp", std::process::id()));
    let result = bandwidth_trials(options, &path);
    let _ = std::fs::remove_file(&path);
    result
}

fn bandwidth_trials(options: &ProfileOptions, path: &std::path::Path) -> Result<Vec<TransferSample>> {
    let mut file = OpenOptions::new()
        .read(true)
        .write(true)
        .create(true)
        .truncate(true)
        .open(path)
        .map_err(|e| Error::io(path, 0, e))?;
    let mut samples = Vec::new();
    for &size in &options.transfer_sizes {
        let size = size.max(1);
        let transfers = options.scratch_bytes.div_ceil(size).max(1);
        let mut buffer = vec![0xA5u8; size as usize];
        let mut reads = Vec::with_capacity(options.trials);
        let mut writes = Vec::with_capacity(options.trials);
        for _ in 0..options.trials {
            let start = Instant::now();
            write_pass(&mut file, path, &buffer, transfers)?;
            writes.push(rate(transfers * size, start.elapsed())?);

            let start = Instant::now();
            read_pass(&mut file, path, &mut buffer, transfers)?;
            reads.push(rate(transfers * size, start.elapsed())?);
        }
        samples.push(TransferSample {
            bytes: size,
            read: median(&mut reads),
            write: median(&mut writes),
        });
    }
    Ok(samples)
}

fn write_pass(file: &mut File, path: &std::path::Path, buffer: &[u8], transfers: u64) -> Result<()> {
    file.seek(SeekFrom::Start(0)).map_err(|e| Error::io(path, 0, e))?;
    for k in 0..transfers {
        file.write_all(buffer)
            .map_err(|e| Error::io(path, k * buffer.len() as u64, e))?;
    }
    file.sync_data().map_err(|e| Error::io(path, 0, e))
}

fn read_pass(file: &mut File, path: &std::path::Path, buffer: &mut [u8], transfers: u64) -> Result<()> {
    file.seek(SeekFrom::Start(0)).map_err(|e| Error::io(path, 0, e))?;
    for k in 0..transfers {
        file.read_exact(buffer)
            .map_err(|e| Error::io(path, k * buffer.len() as u64, e))?;
    }
    Ok(())
}

fn rate(amount: u64, elapsed: Duration) -> Result<f64> {
    if elapsed.is_zero() {
        return Err(Error::TimerResolution("a timed transfer measured zero time".into()));
    }
    Ok(amount as f64 / elapsed.as_secs_f64())
}

/// Median rate of `Zᵀ · slab` with an `n × nb` slab.
fn product_rate(n: usize, nb: usize, trials: usize, seed: u64) -> Result<f64> {
    if n == 0 || nb == 0 {
        return Err(Error::InvalidParameter("product benchmark needs n, nb >= 1".into()));
    }
    let z = standard_normals(seed, 10, n * n);
    let slab = standard_normals(seed, 11, n * nb);
    let mut out = vec![0.0; n * nb];
    let flops = cost::transform(n, nb);
    let mut rates = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut done = 0u64;
        let start = Instant::now();
        while start.elapsed() < MIN_SAMPLE {
            gemm_tn(n, n, nb, &z, &slab, &mut out);
            done += flops;
        }
        rates.push(rate(done, start.elapsed())?);
    }
    Ok(median(&mut rates))
}

/// Largest relative difference between the rates of two profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileComparison {
    pub max_relative_difference: f64,
    pub field: &'static str,
    /// `max_relative_difference < STABILITY_LIMIT`.
    pub stable: bool,
}

/// Compares two consecutive profiles field by field.
pub fn compare_profiles(a: &MachineProfile, b: &MachineProfile) -> ProfileComparison {
    let fields = [
        ("flops_per_sec_preloop", a.flops_per_sec_preloop, b.flops_per_sec_preloop),
        ("flops_per_sec_loops", a.flops_per_sec_loops, b.flops_per_sec_loops),
        ("io_bandwidth", a.io_bandwidth, b.io_bandwidth),
    ];
    let mut worst = ("", 0.0f64);
    for (name, x, y) in fields {
        let diff = if x == y {
            0.0
        } else {
            (x - y).abs() / x.abs().max(y.abs())
        };
        let diff = if diff.is_nan() { f64::INFINITY } else { diff };
        if diff > worst.1 || worst.0.is_empty() {
            worst = (name, diff);
        }
    }
    ProfileComparison {
        max_relative_difference: worst.1,
        field: worst.0,
        stable: worst.1 < STABILITY_LIMIT,
    }
}
