//! Dense kernels with a fixed floating-point evaluation order.
//!
//! Every inner product in the crate goes through [`dot`], and [`gemm_tn`]
//! evaluates each output entry with exactly the same summation order as a
//! standalone `dot`. A column of `Aᵀ B` is therefore bitwise independent of
//! how many other columns are computed alongside it, which keeps result
//! streams identical across slab widths, tile shapes and worker counts.

use crate::error::{Error, Result};

const LANES: usize = 4;

/// Inner product with four interleaved partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    let n = a.len();
    let body = n - n % LANES;
    let mut acc = [0.0f64; LANES];
    for (ca, cb) in a[..body]
        .chunks_exact(LANES)
        .zip(b[..body].chunks_exact(LANES))
    {
        for l in 0..LANES {
            acc[l] += ca[l] * cb[l];
        }
    }
    finish(acc, &a[body..], &b[body..])
}

#[inline(always)]
fn finish(acc: [f64; LANES], ta: &[f64], tb: &[f64]) -> f64 {
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ta.iter().zip(tb) {
        s += x * y;
    }
    s
}

/// Elementwise product `out[k] = scale[k] * x[k]`.
#[inline]
pub fn scale_into(scale: &[f64], x: &[f64], out: &mut [f64]) {
    assert!(scale.len() == x.len() && x.len() == out.len());
    for ((o, s), v) in out.iter_mut().zip(scale).zip(x) {
        *o = s * v;
    }
}

/// `C = Aᵀ B` for column-major operands.
///
/// `a` is `rows × a_cols`, `b` is `rows × b_cols`, `c` receives
/// `a_cols × b_cols`. `c` must not alias `b`.
pub fn gemm_tn(rows: usize, a_cols: usize, b_cols: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert_eq!(a.len(), rows * a_cols, "gemm_tn: A has wrong length");
    assert_eq!(b.len(), rows * b_cols, "gemm_tn: B has wrong length");
    assert_eq!(c.len(), a_cols * b_cols, "gemm_tn: C has wrong length");
    if rows == 0 {
        c.iter_mut().for_each(|x| *x = 0.0);
        return;
    }

    // Keep a panel of A columns cache-resident while sweeping all of B.
    let panel = (256 * 1024 / (rows * 8)).clamp(4, 256) / 4 * 4;

    let mut r0 = 0;
    while r0 < a_cols {
        let r1 = (r0 + panel).min(a_cols);
        let mut cj = 0;
        while cj + 2 <= b_cols {
            let b0 = &b[cj * rows..(cj + 1) * rows];
            let b1 = &b[(cj + 1) * rows..(cj + 2) * rows];
            let mut r = r0;
            while r + 4 <= r1 {
                let out = micro_4x2(rows, a, r, b0, b1);
                for (q, pair) in out.chunks_exact(2).enumerate() {
                    c[cj * a_cols + r + q] = pair[0];
                    c[(cj + 1) * a_cols + r + q] = pair[1];
                }
                r += 4;
            }
            for rr in r..r1 {
                let ar = &a[rr * rows..(rr + 1) * rows];
                c[cj * a_cols + rr] = dot(ar, b0);
                c[(cj + 1) * a_cols + rr] = dot(ar, b1);
            }
            cj += 2;
        }
        if cj < b_cols {
            let b0 = &b[cj * rows..(cj + 1) * rows];
            for rr in r0..r1 {
                c[cj * a_cols + rr] = dot(&a[rr * rows..(rr + 1) * rows], b0);
            }
        }
        r0 = r1;
    }
}

/// Eight simultaneous dots (four A columns against two B columns), each with
/// the same lane assignment and reduction as [`dot`].
#[inline(always)]
fn micro_4x2(rows: usize, a: &[f64], r: usize, b0: &[f64], b1: &[f64]) -> [f64; 8] {
    let a0 = &a[r * rows..(r + 1) * rows];
    let a1 = &a[(r + 1) * rows..(r + 2) * rows];
    let a2 = &a[(r + 2) * rows..(r + 3) * rows];
    let a3 = &a[(r + 3) * rows..(r + 4) * rows];
    let body = rows - rows % LANES;
    let mut acc = [[0.0f64; LANES]; 8];
    let mut k = 0;
    while k < body {
        for l in 0..LANES {
            let x0 = b0[k + l];
            let x1 = b1[k + l];
            let y0 = a0[k + l];
            let y1 = a1[k + l];
            let y2 = a2[k + l];
            let y3 = a3[k + l];
            acc[0][l] += y0 * x0;
            acc[1][l] += y0 * x1;
            acc[2][l] += y1 * x0;
            acc[3][l] += y1 * x1;
            acc[4][l] += y2 * x0;
            acc[5][l] += y2 * x1;
            acc[6][l] += y3 * x0;
            acc[7][l] += y3 * x1;
        }
        k += LANES;
    }
    let cols = [a0, a1, a2, a3];
    let mut out = [0.0; 8];
    for q in 0..4 {
        out[2 * q] = finish(acc[2 * q], &cols[q][body..], &b0[body..]);
        out[2 * q + 1] = finish(acc[2 * q + 1], &cols[q][body..], &b1[body..]);
    }
    out
}

/// Solves `S x = rhs` for a small symmetric positive definite `S`
/// (column-major, `p × p`, only the lower triangle is read). `S` is
/// overwritten by its Cholesky factor and `rhs` by the solution.
///
/// A pivot that is non-positive, non-finite, or below `1e-13` of the
/// corresponding original diagonal entry is reported as
/// `NotPositiveDefinite`.
pub fn spd_solve_in_place(p: usize, s: &mut [f64], rhs: &mut [f64]) -> Result<()> {
    assert_eq!(s.len(), p * p);
    assert_eq!(rhs.len(), p);
    for k in 0..p {
        let diag = s[k * p + k];
        let mut d = diag;
        for q in 0..k {
            d -= s[q * p + k] * s[q * p + k];
        }
        if !(d.is_finite() && d > 0.0 && d > 1e-13 * diag) {
            return Err(Error::not_spd());
        }
        let d = d.sqrt();
        s[k * p + k] = d;
        for i in k + 1..p {
            let mut v = s[k * p + i];
            for q in 0..k {
                v -= s[q * p + i] * s[q * p + k];
            }
            s[k * p + i] = v / d;
        }
    }
    // L y = rhs
    for i in 0..p {
        let mut v = rhs[i];
        for q in 0..i {
            v -= s[q * p + i] * rhs[q];
        }
        rhs[i] = v / s[i * p + i];
    }
    // Lᵀ x = y
    for i in (0..p).rev() {
        let mut v = rhs[i];
        for q in i + 1..p {
            v -= s[i * p + q] * rhs[q];
        }
        rhs[i] = v / s[i * p + i];
    }
    Ok(())
}
