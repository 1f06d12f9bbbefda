//! The `gwgls` command line: `generate`, `tune`, `solve`, `verify`, `bench`.
//!
//! Every invocation ends with a single `status=` line on standard output.
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 verification
//! failure.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gwgls_core::tuner::{
    compare_profiles, profile_machine, recommend_params, sweep_block_sizes, MachineProfile, ProfileOptions,
    RecommendOptions, SweepOptions, DEFAULT_BLOCK,
};
use gwgls_core::verify::{verify_result, CellSelection};
use gwgls_core::{
    run_grid, run_grid_naive, Buffering, Dataset, Error, GenSpec, GridInputs, KinshipModel, MemoryBudget,
    ProblemDims, RunOptions, RunSummary, SchedulerMode, TileParams,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

pub const CSV_HEADER: &str = "workers,scheduler,wall_time_s,loop_flops,stall_fraction";

#[derive(Debug, Parser)]
#[command(name = "gwgls", version, about = "Grids of generalized least-squares problems")]
pub struct Cli {
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
    /// Profile the machine and recommend tile parameters.
    Tune(TuneArgs),
    /// Solve every cell of a dataset.
    Solve(SolveArgs),
    /// Recompute cells with the Cholesky oracle.
    Verify(VerifyArgs),
    /// Time solves across worker counts and schedulers.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub t: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// identity, diagonal or random-spd.
    #[arg(long, default_value = "random-spd")]
    pub kinship: String,
    /// Condition number target of the random-spd kinship.
    #[arg(long, default_value_t = 100.0)]
    pub condition: f64,
    #[arg(long, default_value_t = 0.1)]
    pub h2_min: f64,
    #[arg(long, default_value_t = 0.9)]
    pub h2_max: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma2_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub sigma2_max: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TileArgs {
    #[arg(long)]
    pub nb: Option<usize>,
    #[arg(long)]
    pub mb: Option<usize>,
    #[arg(long)]
    pub tb: Option<usize>,
    #[arg(long)]
    pub mbb: Option<usize>,
    #[arg(long)]
    pub tbb: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Dataset directory to take dimensions from.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub t: Option<usize>,
    /// Injected `key=value` machine profile instead of measuring.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Bytes, with an optional K, M or G suffix.
    #[arg(long, default_value = "2G")]
    pub memory_budget: String,
    #[arg(long, default_value = "ct")]
    pub scheduler: String,
    /// Measure the block-size plateau instead of using the default block.
    #[arg(long)]
    pub sweep: bool,
    /// Directory for the bandwidth scratch file.
    #[arg(long)]
    pub scratch: Option<PathBuf>,
    /// Also write the `key=value` report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// ct, it or naive.
    #[arg(long, default_value = "ct")]
    pub scheduler: String,
    #[arg(long)]
    pub memory_budget: Option<String>,
    /// Machine profile used to pick tiles when a budget is given.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[command(flatten)]
    pub tiles: TileArgs,
    /// Directory for the transformed streams (default: next to the output).
    #[arg(long)]
    pub work_dir: Option<PathBuf>,
    /// Overwrite the raw SNP stream with its transform.
    #[arg(long)]
    pub in_place: bool,
    #[arg(long)]
    pub single_buffer: bool,
    /// Append a CSV row with the run's timings.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Also write the counters here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Check every cell.
    #[arg(long)]
    pub exhaustive: bool,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated worker counts (default 1, 2, 4, ... up to --threads).
    #[arg(long)]
    pub workers: Option<String>,
    #[arg(long, default_value = "ct,it")]
    pub schedulers: String,
    #[command(flatten)]
    pub tiles: TileArgs,
    #[arg(long)]
    pub memory_budget: Option<String>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub work_dir: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::runtime(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (program name first), runs the command, writes its report
/// to `out` and diagnostics to `err`, and returns the exit code.
pub fn run_from<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
            let _ = writeln!(out, "status={}", status_word(code));
            return code;
        }
    };
    let threads = cli.threads.unwrap_or_else(default_threads);
    let outcome = if threads == 0 {
        Err(Failure::usage("--threads must be at least 1"))
    } else {
        match cli.command {
            Command::Generate(a) => cmd_generate(&a, out),
            Command::Tune(a) => cmd_tune(&a, threads, out, err),
            Command::Solve(a) => cmd_solve(&a, threads, out, err),
            Command::Verify(a) => cmd_verify(&a, out),
            Command::Bench(a) => cmd_bench(&a, threads, out, err),
        }
    };
    let code = match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            let _ = writeln!(out, "error={}", f.message.replace('\n', " "));
            f.code
        }
    };
    let _ = writeln!(out, "status={}", status_word(code));
    code
}

fn status_word(code: i32) -> &'static str {
    match code {
        EXIT_OK => "ok",
        EXIT_USAGE => "usage_error",
        EXIT_VERIFY => "verify_failed",
        _ => "error",
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Parses a byte count with an optional `K`, `M`, `G` or `T` suffix
/// (binary multiples).
pub fn parse_bytes(text: &str) -> std::result::Result<u64, String> {
    let text = text.trim();
    let (digits, shift) = match text.char_indices().last() {
        Some((at, c)) if c.is_ascii_alphabetic() => {
            let shift = match c.to_ascii_uppercase() {
                'K' => 10,
                'M' => 20,
                'G' => 30,
                'T' => 40,
                _ => return Err(format!("unknown size suffix in {text:?}")),
            };
            (&text[..at], shift)
        }
        _ => (text, 0),
    };
    let value: u64 = digits
        .trim()
        .parse()
        .map_err(|_| format!("not a byte count: {text:?}"))?;
    value
        .checked_mul(1u64 << shift)
        .ok_or_else(|| format!("byte count {text:?} overflows"))
}

fn budget(text: Option<&str>) -> std::result::Result<Option<MemoryBudget>, Failure> {
    text.map(|t| parse_bytes(t).map(MemoryBudget::new).map_err(Failure::usage))
        .transpose()
}

fn read_profile(path: &Path) -> std::result::Result<MachineProfile, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::runtime(format!("cannot read profile {}: {e}", path.display())))?;
    Ok(MachineProfile::from_kv(&text)?)
}

fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> Outcome {
    let dims = ProblemDims::new(a.n, a.p, a.m, a.t).map_err(|e| Failure::usage(e.to_string()))?;
    let kinship = match a.kinship.as_str() {
        "random-spd" => KinshipModel::RandomSpd { condition: a.condition },
        other => KinshipModel::parse(other).map_err(|e| Failure::usage(e.to_string()))?,
    };
    let spec = GenSpec {
        dims,
        seed: a.seed,
        kinship,
        h2_range: (a.h2_min, a.h2_max),
        sigma2_range: (a.sigma2_min, a.sigma2_max),
    };
    spec.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let data = gwgls_core::generate_streams(&spec, &a.out)?;
    let _ = writeln!(out, "kinship={}", data.kinship.display());
    let _ = writeln!(out, "covariates={}", data.covariates.display());
    let _ = writeln!(out, "snps={}", data.snps.display());
    let _ = writeln!(out, "traits={}", data.traits.display());
    let _ = writeln!(out, "manifest={}", data.manifest.display());
    Ok(())
}

fn scheduler(text: &str) -> std::result::Result<Option<SchedulerMode>, Failure> {
    if text == "naive" {
        return Ok(None);
    }
    text.parse::<SchedulerMode>()
        .map(Some)
        .map_err(|_| Failure::usage(format!("unknown scheduler {text:?}; expected ct, it or naive")))
}

fn tune_dims(a: &TuneArgs) -> std::result::Result<ProblemDims, Failure> {
    let from_data = a.data.as_ref().map(Dataset::open).transpose()?.map(|d| d.dims);
    let pick = |flag: Option<usize>, data: Option<usize>, default: Option<usize>, name: &str| {
        flag.or(data)
            .or(default)
            .ok_or_else(|| Failure::usage(format!("--{name} (or --data) is required")))
    };
    let n = pick(a.n, from_data.map(|d| d.n), None, "n")?;
    let p = pick(a.p, from_data.map(|d| d.p), None, "p")?;
    // the recommendation hardly depends on m and t once they exceed a tile
    let m = pick(a.m, from_data.map(|d| d.m), Some(1_000_000), "m")?;
    let t = pick(a.t, from_data.map(|d| d.t), Some(100_000), "t")?;
    ProblemDims::new(n, p, m, t).map_err(|e| Failure::usage(e.to_string()))
}

fn cmd_tune(a: &TuneArgs, threads: usize, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let dims = tune_dims(a)?;
    let budget = budget(Some(&a.memory_budget))?.expect("budget has a default");
    let pipelines = match scheduler(&a.scheduler)? {
        Some(SchedulerMode::Independent) => threads,
        _ => 1,
    };
    let profile = match &a.profile {
        Some(path) => read_profile(path)?,
        None => {
            let scratch = a.scratch.clone().unwrap_or_else(std::env::temp_dir);
            let mut options = ProfileOptions::new(scratch);
            options.scratch_bytes = 16 << 20;
            options.p = dims.p;
            let first = profile_machine(&options)?.profile;
            let second = profile_machine(&options)?.profile;
            let cmp = compare_profiles(&first, &second);
            if !cmp.stable {
                let _ = writeln!(
                    err,
                    "warning: consecutive profiles differ by {:.0}% in {}; results may be noisy",
                    100.0 * cmp.max_relative_difference,
                    cmp.field
                );
            }
            let _ = writeln!(out, "profile_stable={}", cmp.stable);
            second
        }
    };
    let block = if a.sweep {
        let sweep = sweep_block_sizes(&SweepOptions {
            n: dims.n.min(1024),
            p: dims.p,
            ..SweepOptions::default()
        })?;
        for pt in &sweep.points {
            let _ = writeln!(out, "sweep_{}x{}={:.4e}", pt.mbb, pt.tbb, pt.flops_per_sec);
        }
        sweep.chosen.mbb
    } else {
        DEFAULT_BLOCK
    };
    let rec = recommend_params(
        &dims,
        &profile,
        budget,
        &RecommendOptions {
            block,
            pipelines,
            ..RecommendOptions::default()
        },
    )?;
    let _ = write!(out, "{}", rec.to_text());
    let kv = format!("{}{}", profile.to_kv(), rec.to_kv());
    let _ = write!(out, "{kv}");
    if let Some(path) = &a.report {
        std::fs::write(path, &kv).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

/// Tile parameters for a run: a budget-driven recommendation when a budget
/// is given, otherwise fixed defaults, then any explicit overrides.
fn choose_params(
    dims: &ProblemDims,
    tiles: &TileArgs,
    budget: Option<MemoryBudget>,
    profile: Option<&Path>,
    pipelines: usize,
) -> std::result::Result<TileParams, Failure> {
    let base = match budget {
        Some(budget) => {
            let profile = profile.map(read_profile).transpose()?.unwrap_or_default();
            let options = RecommendOptions {
                pipelines,
                ..RecommendOptions::default()
            };
            recommend_params(dims, &profile, budget, &options)?.params
        }
        None => TileParams {
            nb: 256,
            mb: 4096,
            tb: 1024,
            mbb: DEFAULT_BLOCK,
            tbb: DEFAULT_BLOCK,
        },
    };
    let params = TileParams {
        nb: tiles.nb.unwrap_or(base.nb),
        mb: tiles.mb.unwrap_or(base.mb),
        tb: tiles.tb.unwrap_or(base.tb),
        mbb: tiles.mbb.unwrap_or(base.mbb),
        tbb: tiles.tbb.unwrap_or(base.tbb),
    };
    if [params.nb, params.mb, params.tb, params.mbb, params.tbb].contains(&0) {
        return Err(Failure::usage("tile parameters must be positive"));
    }
    Ok(params.clamped(dims))
}

struct Loaded {
    data: Dataset,
    phi: gwgls_core::nalgebra::DMatrix<f64>,
    x_l: gwgls_core::nalgebra::DMatrix<f64>,
}

impl Loaded {
    fn open(dir: &Path) -> std::result::Result<Self, Failure> {
        let data = Dataset::open(dir)?;
        let phi = data.load_kinship()?;
        let x_l = data.load_covariates()?;
        Ok(Self { data, phi, x_l })
    }

    fn inputs(&self) -> GridInputs<'_> {
        GridInputs {
            kinship: &self.phi,
            covariates: &self.x_l,
            snps: &self.data.snps,
            traits: &self.data.traits,
        }
    }
}

fn work_dir_for(out: &Path, explicit: Option<&PathBuf>) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| {
        let name = out.file_name().map_or_else(|| "result".into(), |n| n.to_string_lossy().into_owned());
        out.with_file_name(format!("{name}.work"))
    })
}

struct RunRequest<'a> {
    loaded: &'a Loaded,
    out: &'a Path,
    scheduler: Option<SchedulerMode>,
    workers: usize,
    params: TileParams,
    budget: Option<MemoryBudget>,
    work_dir: PathBuf,
    in_place: bool,
    buffering: Buffering,
}

fn execute(req: &RunRequest<'_>) -> std::result::Result<RunSummary, Failure> {
    let summary = match req.scheduler {
        None => run_grid_naive(req.loaded.inputs(), req.out)?,
        Some(mode) => {
            let mut options = RunOptions::new(req.params, &req.work_dir);
            options.scheduler = mode;
            options.workers = req.workers;
            options.memory_budget = req.budget;
            options.in_place = req.in_place;
            options.buffering = req.buffering;
            let summary = run_grid(req.loaded.inputs(), req.out, &options)?;
            if !req.in_place {
                let _ = std::fs::remove_dir_all(&req.work_dir);
            }
            summary
        }
    };
    Ok(summary)
}

fn csv_row(workers: usize, scheduler: &str, s: &RunSummary) -> String {
    format!(
        "{workers},{scheduler},{:.6},{},{:.6}",
        s.loops_wall_time, s.loops.loop_flops, s.stall_fraction
    )
}

fn append_csv(path: &Path, rows: &[String]) -> Outcome {
    let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
    let mut text = String::new();
    if !exists {
        let _ = writeln!(text, "{CSV_HEADER}");
    }
    for row in rows {
        let _ = writeln!(text, "{row}");
    }
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Failure::runtime(format!("cannot open {}: {e}", path.display())))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn warn_naive_tiles(tiles: &TileArgs, err: &mut dyn Write) {
    if tiles.nb.or(tiles.mb).or(tiles.tb).or(tiles.mbb).or(tiles.tbb).is_some() {
        let _ = writeln!(err, "warning: the naive scheduler ignores tile and block parameters");
    }
}

fn cmd_solve(a: &SolveArgs, threads: usize, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let sched = scheduler(&a.scheduler)?;
    let budget = budget(a.memory_budget.as_deref())?;
    let loaded = Loaded::open(&a.data)?;
    let dims = loaded.data.dims;
    let pipelines = match sched {
        Some(SchedulerMode::Independent) => threads,
        _ => 1,
    };
    if sched.is_none() {
        warn_naive_tiles(&a.tiles, err);
    }
    let params = choose_params(&dims, &a.tiles, budget, a.profile.as_deref(), pipelines)?;
    let summary = execute(&RunRequest {
        loaded: &loaded,
        out: &a.out,
        scheduler: sched,
        workers: threads,
        params,
        budget,
        work_dir: work_dir_for(&a.out, a.work_dir.as_ref()),
        in_place: a.in_place,
        buffering: if a.single_buffer { Buffering::Single } else { Buffering::Double },
    })?;
    let name = sched.map_or("naive", SchedulerMode::as_str);
    let mut kv = summary.to_kv();
    let _ = write!(kv, "\nscheduler={name}\nworkers={threads}\noutput={}\n", a.out.display());
    let _ = write!(out, "{kv}");
    if let Some(path) = &a.report {
        std::fs::write(path, &kv).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some(path) = &a.csv {
        append_csv(path, &[csv_row(threads, name, &summary)])?;
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Outcome {
    if !(a.tolerance >= 0.0) {
        return Err(Failure::usage("--tolerance must be non-negative"));
    }
    let data = Dataset::open(&a.data)?;
    let selection = if a.exhaustive {
        CellSelection::All
    } else {
        CellSelection::Sample {
            count: a.samples,
            seed: a.seed,
        }
    };
    let report = verify_result(&data, &a.result, selection, a.tolerance)?;
    let _ = writeln!(out, "cells_checked={}", report.checked);
    let _ = writeln!(out, "max_relative_error={:e}", report.max_relative_error);
    let _ = writeln!(out, "tolerance={:e}", report.tolerance);
    if let Some((i, j)) = report.worst_cell {
        let _ = writeln!(out, "worst_snp={i}");
        let _ = writeln!(out, "worst_trait={j}");
    }
    if report.passed() {
        Ok(())
    } else {
        let (i, j) = report.worst_cell.unwrap_or_default();
        Err(Failure {
            code: EXIT_VERIFY,
            message: format!(
                "cell (snp {i}, trait {j}) has relative error {:e} above {:e}",
                report.max_relative_error, report.tolerance
            ),
        })
    }
}

fn worker_counts(text: Option<&str>, threads: usize) -> std::result::Result<Vec<usize>, Failure> {
    match text {
        Some(list) => list
            .split(',')
            .map(|w| match w.trim().parse::<usize>() {
                Ok(0) | Err(_) => Err(Failure::usage(format!("bad worker count {w:?}"))),
                Ok(w) => Ok(w),
            })
            .collect(),
        None => {
            let mut counts = vec![1];
            while counts.last().unwrap() * 2 <= threads {
                counts.push(counts.last().unwrap() * 2);
            }
            Ok(counts)
        }
    }
}

fn cmd_bench(a: &BenchArgs, threads: usize, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let workers = worker_counts(a.workers.as_deref(), threads)?;
    let schedulers = a
        .schedulers
        .split(',')
        .map(|s| scheduler(s.trim()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let budget = budget(a.memory_budget.as_deref())?;
    let loaded = Loaded::open(&a.data)?;
    let dims = loaded.data.dims;
    let work_root = a
        .work_dir
        .clone()
        .unwrap_or_else(|| a.data.join("bench.work"));
    std::fs::create_dir_all(&work_root).map_err(|e| Failure::runtime(format!("{}: {e}", work_root.display())))?;

    let mut rows = Vec::new();
    let mut reference: Option<Vec<u8>> = None;
    let mut identical = true;
    let mut baseline: Vec<(Option<SchedulerMode>, f64)> = Vec::new();
    let mut speedups = String::new();
    if schedulers.contains(&None) {
        warn_naive_tiles(&a.tiles, err);
    }
    for &sched in &schedulers {
        let name = sched.map_or("naive", SchedulerMode::as_str);
        for &w in &workers {
            let pipelines = if sched == Some(SchedulerMode::Independent) { w } else { 1 };
            let params = choose_params(&dims, &a.tiles, budget, None, pipelines)?;
            let out_path = work_root.join(format!("{name}-{w}.gwg"));
            let summary = execute(&RunRequest {
                loaded: &loaded,
                out: &out_path,
                scheduler: sched,
                workers: w,
                params,
                budget,
                work_dir: work_root.join(format!("{name}-{w}.work")),
                in_place: false,
                buffering: Buffering::Double,
            })?;
            let bytes = std::fs::read(&out_path).map_err(|e| Failure::runtime(format!("{}: {e}", out_path.display())))?;
            let _ = std::fs::remove_file(&out_path);
            match &reference {
                None => reference = Some(bytes),
                Some(r) => identical &= *r == bytes,
            }
            let base = match baseline.iter().find(|(s, _)| *s == sched) {
                Some(&(_, t)) => t,
                None => {
                    baseline.push((sched, summary.loops_wall_time));
                    summary.loops_wall_time
                }
            };
            if summary.loops_wall_time > 0.0 {
                let _ = writeln!(speedups, "speedup_{name}_{w}={:.4}", base / summary.loops_wall_time);
            }
            rows.push(csv_row(w, name, &summary));
        }
    }
    let _ = std::fs::remove_dir_all(&work_root);
    let _ = writeln!(out, "{CSV_HEADER}");
    for row in &rows {
        let _ = writeln!(out, "{row}");
    }
    let _ = write!(out, "{speedups}");
    let _ = writeln!(out, "outputs_identical={identical}");
    if let Some(path) = &a.csv {
        append_csv(path, &rows)?;
    }
    if !identical {
        return Err(Failure::runtime("result streams differ between configurations"));
    }
    Ok(())
}
