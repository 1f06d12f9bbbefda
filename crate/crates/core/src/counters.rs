//! Exact flop and transfer accounting.
//!
//! Flops are counted analytically from the per-operation cost of each step
//! (eigendecomposition `10/3 n³`, products `2n²k`, per-trait scalar work,
//! per-cell BLAS-1/2 work), not sampled from hardware counters.

use std::ops::AddAssign;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlopIoCounters {
    /// Eigendecomposition and the `Zᵀ ·` products of the preloop section.
    pub preloop_flops: u64,
    /// Per-trait and per-cell work of the loops section, excluding the
    /// `p × p` solves.
    pub loop_flops: u64,
    /// Portion of `loop_flops` spent re-applying `Zᵀ` inside the loops.
    /// Always zero for the tiled engine.
    pub loop_transform_flops: u64,
    /// The `O(p³)` small SPD solves, kept apart so that `loop_flops` is
    /// exactly linear in `n`.
    pub solve_flops: u64,
    pub bytes_loaded: u64,
    pub bytes_stored: u64,
    /// Seconds the compute side spent waiting for buffers to become ready.
    pub io_stall_time: f64,
    /// Seconds spent in computation.
    pub compute_time: f64,
}

impl FlopIoCounters {
    pub fn total_flops(&self) -> u64 {
        self.preloop_flops + self.loop_flops + self.solve_flops
    }
}

impl AddAssign for FlopIoCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.preloop_flops += rhs.preloop_flops;
        self.loop_flops += rhs.loop_flops;
        self.loop_transform_flops += rhs.loop_transform_flops;
        self.solve_flops += rhs.solve_flops;
        self.bytes_loaded += rhs.bytes_loaded;
        self.bytes_stored += rhs.bytes_stored;
        self.io_stall_time += rhs.io_stall_time;
        self.compute_time += rhs.compute_time;
    }
}

/// Per-operation flop costs.
pub mod cost {
    /// `⌈10/3 · n³⌉`
    pub fn eigendecomposition(n: usize) -> u64 {
        let n = n as u64;
        (10 * n * n * n).div_ceil(3)
    }

    /// `2 · n² · k` for `Zᵀ` applied to `k` columns.
    pub fn transform(n: usize, k: usize) -> u64 {
        2 * (n as u64) * (n as u64) * k as u64
    }

    /// Hoisted per-trait work: D (2n), K (2n), W_L ((p−1)n), v (n),
    /// S_TL ((p−1)²n), b_T (2(p−1)n).
    pub fn trait_context(n: usize, p: usize) -> u64 {
        let n = n as u64;
        let q = (p - 1) as u64;
        (2 + 2 + q + 1 + q * q + 2 * q) * n
    }

    /// Per-cell work: W_R (n), S_BL (2(p−1)n), S_BR (2n), b_B (2n).
    pub fn cell(n: usize, p: usize) -> u64 {
        (5 + 2 * (p as u64 - 1)) * n as u64
    }

    /// Cholesky factorization plus two triangular solves of the `p × p`
    /// system: `⌈p³/3⌉ + 2p²`.
    pub fn spd_solve(p: usize) -> u64 {
        let p = p as u64;
        (p * p * p).div_ceil(3) + 2 * p * p
    }
}
