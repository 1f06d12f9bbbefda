use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::gls::ProblemDims;
use crate::stream::{Footprint, MemoryBudget};

use super::model::{check_nb_overlap, check_tile_overlap, min_tb, min_tb_with_headroom, MachineProfile, OverlapCheck};
use super::params::{TileParams, DEFAULT_BLOCK};

/// Transfer-side inflation required of every recommended configuration.
pub const HEADROOM: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecommendOptions {
    /// Square block edge, normally the plateau pick of a block sweep.
    pub block: usize,
    pub headroom: f64,
    /// Double-buffered pipelines sharing the budget (1 for cooperative
    /// threads, the worker count for independent threads).
    pub pipelines: usize,
}

impl Default for RecommendOptions {
    fn default() -> Self {
        Self {
            block: DEFAULT_BLOCK,
            headroom: HEADROOM,
            pipelines: 1,
        }
    }
}

/// Every constraint behind a recommendation, with its margin.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningReport {
    pub dims: ProblemDims,
    pub profile: MachineProfile,
    pub options: RecommendOptions,
    /// Preloop transforms hide their transfers.
    pub nb_overlap: OverlapCheck,
    /// Smallest `nb` whose slab reaches the saturating transfer size.
    pub nb_bandwidth: usize,
    /// Smallest `nb` reaching the saturated product rate.
    pub nb_rate: usize,
    /// Largest `nb` the budget admits.
    pub nb_budget: usize,
    /// Smallest `tb` hiding tile transfers with headroom.
    pub tb_min: Option<usize>,
    /// Same, without headroom.
    pub tb_min_bare: Option<usize>,
    /// Tile overlap at the recommended `tb`, with headroom.
    pub tile_overlap: OverlapCheck,
    pub footprint: Footprint,
    pub preloop_footprint: u64,
    pub budget: MemoryBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub params: TileParams,
    pub report: TuningReport,
}

/// Chooses `(nb, mb, tb, mbb, tbb)` for `dims` on a machine described by
/// `profile`, filling `budget`.
///
/// `nb` is the larger of the slab widths saturating bandwidth and product
/// rate, `mbb = tbb = block`, `tb ≥ max(min_tb, tbb)`; then `mb` and `tb` grow
/// until the budget is full.
pub fn recommend_params(
    dims: &ProblemDims,
    profile: &MachineProfile,
    budget: MemoryBudget,
    options: &RecommendOptions,
) -> Result<Recommendation> {
    profile.validate()?;
    if options.block == 0 || options.headroom.is_nan() || options.headroom < 1.0 {
        return Err(Error::InvalidParameter(format!("invalid tuning options {options:?}")));
    }
    let pipelines = options.pipelines.max(1);
    let fits = |params: &TileParams| budget.check(dims, params, pipelines).is_ok();
    let loops_fit = |params: &TileParams| budget.admits(Footprint::loops(dims, params, pipelines).total);

    let mbb = options.block.min(dims.m);
    let tbb = options.block.min(dims.t);
    let floor = TileParams { nb: 1, mb: mbb, tb: tbb, mbb, tbb };
    if !fits(&floor) {
        let required = Footprint::loops(dims, &floor, pipelines)
            .total
            .max(Footprint::preloop(dims, 1));
        return Err(Error::InfeasibleBudget {
            budget: budget.max_bytes,
            required,
        });
    }

    let slab_bytes = dims.n as f64 * profile.datatype_size;
    let nb_bandwidth = ((profile.saturating_transfer_bytes as f64 / slab_bytes).ceil() as usize).max(1);
    let nb_rate = profile.saturating_nb.max(1);
    let nb_cap = dims.m.max(dims.t);
    let nb_budget = largest(1, nb_cap, |nb| budget.admits(Footprint::preloop(dims, nb)));
    let nb = nb_bandwidth.max(nb_rate).min(nb_cap).min(nb_budget);

    let tb_min = min_tb_with_headroom(dims.n, dims.p, profile, options.headroom);
    let tb_target = tb_min.unwrap_or(dims.t).clamp(tbb, dims.t);
    let tb = largest(tbb, tb_target, |tb| loops_fit(&TileParams { nb, mb: mbb, tb, mbb, tbb }));

    let mb_max = largest(mbb, dims.m, |mb| loops_fit(&TileParams { nb, mb, tb, mbb, tbb }));
    let mb = if mb_max == dims.m { mb_max } else { (mb_max / mbb) * mbb };
    let tb = if mb == dims.m {
        largest(tb, dims.t, |tb| loops_fit(&TileParams { nb, mb, tb, mbb, tbb }))
    } else {
        tb
    };

    let params = TileParams { nb, mb, tb, mbb, tbb };
    params.validate(dims)?;
    budget.check(dims, &params, pipelines)?;

    let report = TuningReport {
        dims: *dims,
        profile: *profile,
        options: *options,
        nb_overlap: check_nb_overlap(dims.n, profile),
        nb_bandwidth,
        nb_rate,
        nb_budget,
        tb_min,
        tb_min_bare: min_tb(dims.n, dims.p, profile),
        tile_overlap: check_tile_overlap(tb, dims.n, dims.p, profile, options.headroom),
        footprint: Footprint::loops(dims, &params, pipelines),
        preloop_footprint: Footprint::preloop(dims, nb),
        budget,
    };
    Ok(Recommendation { params, report })
}

/// Largest `x` in `[lo, hi]` with `ok(x)`, assuming `ok(lo)` and that `ok`
/// is monotone decreasing.
fn largest(lo: usize, hi: usize, ok: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (lo, hi.max(lo));
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

fn fmt_opt(v: Option<usize>) -> String {
    v.map_or_else(|| "inf".to_string(), |v| v.to_string())
}

impl Recommendation {
    /// Machine-readable `key=value` lines.
    pub fn to_kv(&self) -> String {
        let (p, r) = (&self.params, &self.report);
        let mut s = String::new();
        let _ = writeln!(s, "nb={}", p.nb);
        let _ = writeln!(s, "mb={}", p.mb);
        let _ = writeln!(s, "tb={}", p.tb);
        let _ = writeln!(s, "mbb={}", p.mbb);
        let _ = writeln!(s, "tbb={}", p.tbb);
        let _ = writeln!(s, "tb_min={}", fmt_opt(r.tb_min));
        let _ = writeln!(s, "tb_min_bare={}", fmt_opt(r.tb_min_bare));
        let _ = writeln!(s, "headroom={}", r.options.headroom);
        let _ = writeln!(s, "nb_overlap_satisfied={}", r.nb_overlap.satisfied);
        let _ = writeln!(s, "nb_overlap_lhs={:e}", r.nb_overlap.lhs);
        let _ = writeln!(s, "nb_overlap_rhs={:e}", r.nb_overlap.rhs);
        let _ = writeln!(s, "nb_overlap_margin={:.6}", r.nb_overlap.margin);
        let _ = writeln!(s, "nb_bandwidth={}", r.nb_bandwidth);
        let _ = writeln!(s, "nb_rate={}", r.nb_rate);
        let _ = writeln!(s, "nb_budget={}", r.nb_budget);
        let _ = writeln!(s, "tile_overlap_satisfied={}", r.tile_overlap.satisfied);
        let _ = writeln!(s, "tile_overlap_margin={:.6}", r.tile_overlap.margin);
        let _ = writeln!(s, "footprint_loops_bytes={}", r.footprint.total);
        let _ = writeln!(s, "footprint_preloop_bytes={}", r.preloop_footprint);
        let _ = writeln!(s, "memory_budget_bytes={}", r.budget.max_bytes);
        let _ = writeln!(s, "pipelines={}", r.footprint.pipelines);
        s
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let (p, r) = (&self.params, &self.report);
        let mark = |ok: bool| if ok { "ok" } else { "VIOLATED" };
        let mut s = String::new();
        let _ = writeln!(
            s,
            "problem: n={} p={} m={} t={}",
            r.dims.n, r.dims.p, r.dims.m, r.dims.t
        );
        let _ = writeln!(
            s,
            "profile: preloop {:.3e} flop/s, loops {:.3e} flop/s, bandwidth {:.3e} B/s",
            r.profile.flops_per_sec_preloop, r.profile.flops_per_sec_loops, r.profile.io_bandwidth
        );
        let _ = writeln!(
            s,
            "tiles: nb={} mb={} tb={} blocks {}x{}",
            p.nb, p.mb, p.tb, p.mbb, p.tbb
        );
        let _ = writeln!(
            s,
            "  preloop overlap  n/rate > size/bw: {:.3e} vs {:.3e}, margin {:.4} [{}]",
            r.nb_overlap.lhs,
            r.nb_overlap.rhs,
            r.nb_overlap.margin,
            mark(r.nb_overlap.satisfied)
        );
        let _ = writeln!(
            s,
            "  nb: bandwidth needs {}, product rate needs {}, budget allows {}",
            r.nb_bandwidth, r.nb_rate, r.nb_budget
        );
        let _ = writeln!(
            s,
            "  tile overlap  tb >= {} (bare {}), at tb={} margin {:.4} with headroom {} [{}]",
            fmt_opt(r.tb_min),
            fmt_opt(r.tb_min_bare),
            p.tb,
            r.tile_overlap.margin,
            r.options.headroom,
            mark(r.tile_overlap.satisfied)
        );
        let _ = writeln!(
            s,
            "  memory  loops {} B, preloop {} B, budget {} B [{}]",
            r.footprint.total,
            r.preloop_footprint,
            r.budget.max_bytes,
            mark(r.budget.admits(r.footprint.total.max(r.preloop_footprint)))
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_profile() -> MachineProfile {
        MachineProfile {
            flops_per_sec_preloop: 240e9,
            flops_per_sec_loops: 25e9,
            io_bandwidth: 2e9,
            ..MachineProfile::default()
        }
    }

    #[test]
    fn paper_scenario() {
        let dims = ProblemDims::new(1000, 4, 100_000, 10_000).unwrap();
        let rec = recommend_params(&dims, &paper_profile(), MemoryBudget::new(2 << 30), &RecommendOptions::default())
            .unwrap();
        assert_eq!(rec.report.tb_min, Some(11));
        assert_eq!(rec.report.tb_min_bare, Some(10));
        assert!(rec.params.tb >= 11);
        assert_eq!((rec.params.mbb, rec.params.tbb), (160, 160));
        assert!(rec.report.nb_overlap.satisfied);
        assert!(rec.report.tile_overlap.satisfied);
        assert!(rec.to_kv().contains("tb_min=11\n"));
        // 2 MB slabs of 1000 doubles
        assert_eq!(rec.report.nb_bandwidth, 250);
    }

    #[test]
    fn tiny_budget_gives_floor_config() {
        let dims = ProblemDims::new(64, 4, 1000, 500).unwrap();
        let opts = RecommendOptions { block: 16, ..RecommendOptions::default() };
        let floor = TileParams { nb: 1, mb: 16, tb: 16, mbb: 16, tbb: 16 };
        let need = Footprint::loops(&dims, &floor, 1).total.max(Footprint::preloop(&dims, 1));
        let rec = recommend_params(&dims, &paper_profile(), MemoryBudget::new(need), &opts).unwrap();
        assert_eq!((rec.params.mb, rec.params.tb), (16, 16));
        assert!(matches!(
            recommend_params(&dims, &paper_profile(), MemoryBudget::new(need - 1), &opts),
            Err(Error::InfeasibleBudget { .. })
        ));
    }

    #[test]
    fn unbounded_bandwidth() {
        let dims = ProblemDims::new(1000, 4, 1000, 1000).unwrap();
        let profile = MachineProfile { io_bandwidth: f64::INFINITY, ..paper_profile() };
        let rec = recommend_params(&dims, &profile, MemoryBudget::new(1 << 34), &RecommendOptions::default()).unwrap();
        assert_eq!(rec.report.tb_min, Some(1));
        assert!(rec.to_kv().contains("tb_min=1\n"));
    }

    #[test]
    fn largest_is_binary_search() {
        assert_eq!(largest(1, 100, |x| x <= 37), 37);
        assert_eq!(largest(5, 5, |_| true), 5);
        assert_eq!(largest(3, 10, |x| x <= 3), 3);
    }
}
