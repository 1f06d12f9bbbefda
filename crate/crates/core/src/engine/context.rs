use crate::counters::{cost, FlopIoCounters};
use crate::error::{Error, Result};
use crate::gls::{build_trait_weights, TraitScalars};
use crate::kernels::{dot, scale_into, spd_solve_in_place};

use super::GridPrecompute;

/// Everything about trait `j` that does not depend on the SNP: the weights
/// `D_j`, `K_j`, the weighted response `v_j = K_j y'_j`, the weighted shared
/// covariates `W_L = K_j X'_L`, the quadrant `S_TL = W_Lᵀ W_L` and the half
/// `b_T = W_Lᵀ v_j`.
#[derive(Debug, Clone)]
pub struct TraitContext {
    /// Global trait index.
    pub index: u64,
    pub n: usize,
    pub p: usize,
    pub d: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    /// `n × (p−1)`, column-major.
    pub w_l: Vec<f64>,
    /// `(p−1) × (p−1)`, column-major, both triangles filled.
    pub s_tl: Vec<f64>,
    pub b_t: Vec<f64>,
}

impl TraitContext {
    /// Builds the context from the transformed response `y_t = Zᵀy` and
    /// the transformed shared covariates `xl_t = ZᵀX_L`. Returns the context
    /// and its flop cost.
    pub fn build(
        index: u64,
        eigenvalues: &[f64],
        scalars: TraitScalars,
        y_t: &[f64],
        xl_t: &[f64],
        p: usize,
    ) -> Result<(Self, u64)> {
        let n = eigenvalues.len();
        let q = p - 1;
        if y_t.len() != n || xl_t.len() != n * q {
            return Err(Error::DimensionMismatch(format!(
                "trait context for n={n}, p={p} got y' of {} and X'_L of {} values",
                y_t.len(),
                xl_t.len()
            )));
        }
        let weights = build_trait_weights(eigenvalues, scalars)
            .map_err(|e| e.at_cell(None, Some(index)))?;

        let mut v = vec![0.0; n];
        scale_into(&weights.k, y_t, &mut v);
        let mut w_l = vec![0.0; n * q];
        for (w, x) in w_l.chunks_exact_mut(n).zip(xl_t.chunks_exact(n)) {
            scale_into(&weights.k, x, w);
        }

        // lower triangle, mirrored
        let col = |c: usize| &w_l[c * n..(c + 1) * n];
        let mut s_tl = vec![0.0; q * q];
        let mut b_t = vec![0.0; q];
        for a in 0..q {
            for c in 0..=a {
                let s = dot(col(a), col(c));
                s_tl[c * q + a] = s;
                s_tl[a * q + c] = s;
            }
            b_t[a] = dot(col(a), &v);
        }

        let ctx = Self {
            index,
            n,
            p,
            d: weights.d,
            k: weights.k,
            v,
            w_l,
            s_tl,
            b_t,
        };
        Ok((ctx, cost::trait_context(n, p)))
    }
}

/// Per-worker scratch for [`solve_cell`].
#[derive(Debug, Clone)]
pub struct CellScratch {
    w_r: Vec<f64>,
    s: Vec<f64>,
}

impl CellScratch {
    pub fn new(n: usize, p: usize) -> Self {
        Self {
            w_r: vec![0.0; n],
            s: vec![0.0; p * p],
        }
    }
}

/// Solves one grid cell: `W_R = K x'_R`, `S_BL = W_Rᵀ W_L`, `S_BR = W_Rᵀ W_R`,
/// `b_B = W_Rᵀ v`, then the `p × p` SPD system assembled from
/// `(S_TL, S_BL, S_BR)` and `(b_T, b_B)`. The coefficients land in `out`.
pub fn solve_cell(ctx: &TraitContext, x_r_t: &[f64], scratch: &mut CellScratch, out: &mut [f64]) -> Result<()> {
    let (n, p) = (ctx.n, ctx.p);
    let q = p - 1;
    debug_assert_eq!(x_r_t.len(), n);
    debug_assert_eq!(out.len(), p);

    scale_into(&ctx.k, x_r_t, &mut scratch.w_r);
    let w_r = &scratch.w_r;
    let s = &mut scratch.s;
    for c in 0..q {
        for a in c..q {
            s[c * p + a] = ctx.s_tl[c * q + a];
        }
        s[c * p + q] = dot(w_r, &ctx.w_l[c * n..(c + 1) * n]);
    }
    s[q * p + q] = dot(w_r, w_r);
    out[..q].copy_from_slice(&ctx.b_t);
    out[q] = dot(w_r, &ctx.v);
    spd_solve_in_place(p, s, out)
}

/// Builds the contexts of a trait slab. `trait_slab` holds `k` transformed
/// responses (`n × k`); `first_trait` is the global index of its first
/// column.
pub fn build_trait_contexts(
    pre: &GridPrecompute,
    trait_slab: &[f64],
    scalars: &[TraitScalars],
    first_trait: u64,
    counters: &mut FlopIoCounters,
) -> Result<Vec<TraitContext>> {
    let n = pre.n();
    if trait_slab.len() != n * scalars.len() {
        return Err(Error::DimensionMismatch(format!(
            "trait slab of {} values does not match {} scalars at n={n}",
            trait_slab.len(),
            scalars.len()
        )));
    }
    let mut contexts = Vec::with_capacity(scalars.len());
    for (jj, (y_t, &sc)) in trait_slab.chunks_exact(n).zip(scalars).enumerate() {
        let (ctx, flops) = TraitContext::build(
            first_trait + jj as u64,
            pre.spectrum.eigenvalues(),
            sc,
            y_t,
            pre.xl_t(),
            pre.p(),
        )?;
        counters.loop_flops += flops;
        contexts.push(ctx);
    }
    Ok(contexts)
}
