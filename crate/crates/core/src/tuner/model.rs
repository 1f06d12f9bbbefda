//! The computation/transfer model behind the tiling constraints.
//!
//! Transfers are hidden under computation when `flops / rate` exceeds
//! `bytes / bandwidth`. For the preloop products this reduces to
//! `n / rate > sizeof / bandwidth`; for a tile of `mb × tb` cells it reduces
//! to `tb·(5 + 2(p−1))·n / rate > (n + tb·p)·sizeof / bandwidth`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::counters::cost;
use crate::error::{Error, Result};

/// Measured (or injected) machine constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineProfile {
    /// Dense product rate for the preloop transforms, flop/s.
    pub flops_per_sec_preloop: f64,
    /// Tile computation rate in the loops, flop/s.
    pub flops_per_sec_loops: f64,
    /// Sequential disk bandwidth, bytes/s.
    pub io_bandwidth: f64,
    pub datatype_size: f64,
    /// Smallest transfer that reaches `io_bandwidth`, bytes.
    pub saturating_transfer_bytes: u64,
    /// Smallest slab width that reaches `flops_per_sec_preloop`.
    pub saturating_nb: usize,
}

impl Default for MachineProfile {
    fn default() -> Self {
        Self {
            flops_per_sec_preloop: 10e9,
            flops_per_sec_loops: 2e9,
            io_bandwidth: 500e6,
            datatype_size: 8.0,
            saturating_transfer_bytes: 2_000_000,
            saturating_nb: 1,
        }
    }
}

impl MachineProfile {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && !x.is_nan();
        if positive(self.flops_per_sec_preloop)
            && positive(self.flops_per_sec_loops)
            && positive(self.io_bandwidth)
            && positive(self.datatype_size)
            && self.datatype_size.is_finite()
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("machine profile must be strictly positive: {self:?}")))
        }
    }

    /// Parses `key=value` lines. Missing keys keep their defaults; `inf`
    /// is accepted for rates and bandwidth.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut profile = Self::default();
        for (key, value) in parse_kv(text)? {
            let float = || {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("{key}: not a number: {value:?}")))
            };
            match key.as_str() {
                "flops_per_sec_preloop" => profile.flops_per_sec_preloop = float()?,
                "flops_per_sec_loops" => profile.flops_per_sec_loops = float()?,
                "io_bandwidth" => profile.io_bandwidth = float()?,
                "datatype_size" => profile.datatype_size = float()?,
                "saturating_transfer_bytes" => profile.saturating_transfer_bytes = float()? as u64,
                "saturating_nb" => profile.saturating_nb = float()? as usize,
                _ => return Err(Error::InvalidParameter(format!("unknown profile key {key:?}"))),
            }
        }
        profile.validate()?;
        Ok(profile)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "flops_per_sec_preloop={:e}", self.flops_per_sec_preloop);
        let _ = writeln!(s, "flops_per_sec_loops={:e}", self.flops_per_sec_loops);
        let _ = writeln!(s, "io_bandwidth={:e}", self.io_bandwidth);
        let _ = writeln!(s, "datatype_size={}", self.datatype_size);
        let _ = writeln!(s, "saturating_transfer_bytes={}", self.saturating_transfer_bytes);
        let _ = writeln!(s, "saturating_nb={}", self.saturating_nb);
        s
    }
}

/// Parses `key=value` lines, skipping blanks and `#` comments.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("line {}: expected key=value", lineno + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Outcome of an overlap inequality `lhs > rhs`, both in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapCheck {
    pub satisfied: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs` (infinite when the transfer side is free).
    pub margin: f64,
}

impl OverlapCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        let margin = if rhs > 0.0 { lhs / rhs } else { f64::INFINITY };
        Self {
            satisfied: lhs > rhs,
            lhs,
            rhs,
            margin,
        }
    }
}

/// Flops per transferred element of the preloop products:
/// `2n²·nb / (n·nb + n·nb) = n`.
pub fn preloop_ratio(n: usize) -> f64 {
    n as f64
}

/// Whether the preloop transforms hide their transfers:
/// `n / rate > sizeof / bandwidth`.
pub fn check_nb_overlap(n: usize, profile: &MachineProfile) -> OverlapCheck {
    OverlapCheck::new(
        n as f64 / profile.flops_per_sec_preloop,
        profile.datatype_size / profile.io_bandwidth,
    )
}

/// Flops per transferred element of one tile, with the SNP slab loaded and
/// the result tile stored (the trait slab is amortized over all SNP slabs):
/// `tb·(5 + 2(p−1))·n / (n + tb·p)`. Independent of `mb`.
pub fn tile_ratio(tb: usize, p: usize, n: usize) -> f64 {
    let flops = tb as f64 * cost::cell(n, p) as f64;
    flops / (n as f64 + (tb * p) as f64)
}

/// The tile overlap inequality for a given `tb`, with the transfer side
/// scaled by `headroom`.
pub fn check_tile_overlap(tb: usize, n: usize, p: usize, profile: &MachineProfile, headroom: f64) -> OverlapCheck {
    let lhs = tb as f64 * cost::cell(n, p) as f64 / profile.flops_per_sec_loops;
    let rhs = headroom * (n + tb * p) as f64 * profile.datatype_size / profile.io_bandwidth;
    OverlapCheck::new(lhs, rhs)
}

/// Smallest `tb` for which a tile hides its transfers, or `None` when no
/// `tb` does (computation too fast relative to the disk).
pub fn min_tb(n: usize, p: usize, profile: &MachineProfile) -> Option<usize> {
    min_tb_with_headroom(n, p, profile, 1.0)
}

/// [`min_tb`] with the transfer side inflated by `headroom` (≥ 1).
pub fn min_tb_with_headroom(n: usize, p: usize, profile: &MachineProfile, headroom: f64) -> Option<usize> {
    // tb·(a − b) > c  with  a = cell/rate, b = h·p·s/bw, c = h·n·s/bw
    let a = cost::cell(n, p) as f64 / profile.flops_per_sec_loops;
    let b = headroom * p as f64 * profile.datatype_size / profile.io_bandwidth;
    let c = headroom * n as f64 * profile.datatype_size / profile.io_bandwidth;
    let slope = a - b;
    if !(slope > 0.0) {
        return None;
    }
    let estimate = (c / slope).floor();
    if !estimate.is_finite() || estimate > (usize::MAX / 4) as f64 {
        return None;
    }
    // settle rounding in the closed form against the inequality itself
    let mut tb = (estimate as usize).saturating_sub(1).max(1);
    while !check_tile_overlap(tb, n, p, profile, headroom).satisfied {
        tb += 1;
    }
    while tb > 1 && check_tile_overlap(tb - 1, n, p, profile, headroom).satisfied {
        tb -= 1;
    }
    Some(tb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(preloop: f64, loops: f64, bw: f64) -> MachineProfile {
        MachineProfile {
            flops_per_sec_preloop: preloop,
            flops_per_sec_loops: loops,
            io_bandwidth: bw,
            datatype_size: 8.0,
            ..MachineProfile::default()
        }
    }

    /// Scans tb = 1, 2, ... until the bare inequality holds.
    fn scan(n: usize, p: usize, prof: &MachineProfile, limit: usize) -> Option<usize> {
        (1..=limit).find(|&tb| {
            let lhs = tb as f64 * (5 + 2 * (p - 1)) as f64 * n as f64 / prof.flops_per_sec_loops;
            let rhs = (n + tb * p) as f64 * prof.datatype_size / prof.io_bandwidth;
            lhs > rhs
        })
    }

    #[test]
    fn preloop_ratio_is_n() {
        assert_eq!(preloop_ratio(1000), 1000.0);
        assert_eq!(preloop_ratio(1), 1.0);
        assert_eq!(preloop_ratio(12345), 12345.0);
        // 2n²·nb / (2n·nb) for a few nb
        for nb in [1usize, 7, 250] {
            let n = 1000usize;
            let r = (2 * n * n * nb) as f64 / (2 * n * nb) as f64;
            assert_eq!(r, preloop_ratio(n));
        }
    }

    #[test]
    fn nb_overlap_examples() {
        let c = check_nb_overlap(1000, &profile(240e9, 25e9, 2e9));
        assert!(c.satisfied);
        assert!((c.lhs - 4.1667e-9).abs() < 1e-12);
        assert!((c.rhs - 4e-9).abs() < 1e-20);
        assert!((c.margin - 1.0417).abs() < 1e-3);

        assert!(!check_nb_overlap(1000, &profile(f64::INFINITY, 25e9, 2e9)).satisfied);

        let slow = check_nb_overlap(1000, &profile(240e9, 25e9, 0.5e9));
        assert!(!slow.satisfied);
        // 4.17e-9 vs 16e-9
        assert!((slow.rhs - 16e-9).abs() < 1e-20);
    }

    #[test]
    fn tile_ratio_examples() {
        assert!((tile_ratio(1, 4, 1000) - 11000.0 / 1004.0).abs() < 1e-12);
        let mut last = 0.0;
        for tb in 1..2000 {
            let r = tile_ratio(tb, 4, 1000);
            assert!(r > last);
            assert!(r < 2750.0);
            last = r;
        }
        assert!((tile_ratio(10_000_000, 4, 1000) - 2750.0).abs() < 1.0);
        assert!(tile_ratio(10, 4, 2000) > tile_ratio(10, 4, 1000));
    }

    #[test]
    fn min_tb_matches_scan() {
        let cases = [
            (1000, 4, profile(240e9, 25e9, 2e9)),
            (1000, 4, profile(240e9, 250e9, 2e9)),
            (64, 2, profile(1e9, 1e9, 1e6)),
            (5000, 20, profile(1e9, 3e10, 1e8)),
        ];
        for (n, p, prof) in cases {
            assert_eq!(min_tb(n, p, &prof), scan(n, p, &prof, 1_000_000), "n={n} p={p}");
        }
    }

    #[test]
    fn min_tb_limits() {
        assert_eq!(min_tb(1000, 4, &profile(1e9, 25e9, f64::INFINITY)), Some(1));
        // a disk so slow that even an infinite tile cannot keep up
        assert_eq!(min_tb(10, 4, &profile(1e9, 1e12, 1.0)), None);
    }

    #[test]
    fn profile_kv_round_trip() {
        let p = MachineProfile::from_kv("# injected\nflops_per_sec_loops=25e9\nio_bandwidth=inf\n").unwrap();
        assert_eq!(p.flops_per_sec_loops, 25e9);
        assert!(p.io_bandwidth.is_infinite());
        let q = MachineProfile::from_kv(&p.to_kv()).unwrap();
        assert_eq!(p, q);
        assert!(MachineProfile::from_kv("io_bandwidth=0").is_err());
        assert!(MachineProfile::from_kv("bogus=1").is_err());
    }
}
