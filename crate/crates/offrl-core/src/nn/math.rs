//! Dense kernels for the MLP forward/backward passes.
//!
//! Reductions use a fixed arrangement of independent accumulator lanes so
//! the summation order is deterministic, the loops vectorize, and no
//! single loop-carried dependency chain limits throughput. The forward
//! kernel processes four output units per pass to amortize input loads.

use alloc::vec::Vec;

use super::Real;

const LANES: usize = 16;

/// Fused multiply-add when the target supports it natively; otherwise the
/// separate multiply and add (a software `fma` call would be far slower).
#[inline(always)]
fn fmadd<F: Real>(a: F, b: F, c: F) -> F {
    if cfg!(target_feature = "fma") {
        a.mul_add(b, c)
    } else {
        a * b + c
    }
}


/// Dot product with lane-parallel accumulation.
#[inline]
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] = fmadd(xa[l], xb[l], acc[l]);
        }
    }
    let mut s = F::zero();
    for l in 0..LANES {
        s = s + acc[l];
    }
    for (xa, xb) in ca.remainder().iter().zip(cb.remainder()) {
        s = fmadd(*xa, *xb, s);
    }
    s
}

/// Four simultaneous dot products of `x` against consecutive rows of `w`
/// (each of length `n`), sharing the `x` loads.
#[inline]
fn dot4<F: Real>(x: &[F], w: &[F], n: usize) -> [F; 4] {
    let (w0, rest) = w.split_at(n);
    let (w1, rest) = rest.split_at(n);
    let (w2, w3full) = rest.split_at(n);
    let w3 = &w3full[..n];

    let mut acc0 = [F::zero(); LANES];
    let mut acc1 = [F::zero(); LANES];
    let mut acc2 = [F::zero(); LANES];
    let mut acc3 = [F::zero(); LANES];
    let chunks = n / LANES;
    for c in 0..chunks {
        let base = c * LANES;
        let xa = &x[base..base + LANES];
        let a0 = &w0[base..base + LANES];
        let a1 = &w1[base..base + LANES];
        let a2 = &w2[base..base + LANES];
        let a3 = &w3[base..base + LANES];
        for l in 0..LANES {
            let xv = xa[l];
            acc0[l] = fmadd(xv, a0[l], acc0[l]);
            acc1[l] = fmadd(xv, a1[l], acc1[l]);
            acc2[l] = fmadd(xv, a2[l], acc2[l]);
            acc3[l] = fmadd(xv, a3[l], acc3[l]);
        }
    }
    let mut out = [F::zero(); 4];
    for l in 0..LANES {
        out[0] = out[0] + acc0[l];
        out[1] = out[1] + acc1[l];
        out[2] = out[2] + acc2[l];
        out[3] = out[3] + acc3[l];
    }
    for i in chunks * LANES..n {
        let xv = x[i];
        out[0] = fmadd(xv, w0[i], out[0]);
        out[1] = fmadd(xv, w1[i], out[1]);
        out[2] = fmadd(xv, w2[i], out[2]);
        out[3] = fmadd(xv, w3[i], out[3]);
    }
    out
}


/// `out[r, o] = dot(x[r], w[o]) + b[o]` for row-major `x` and `w`.
pub fn linear_forward<F: Real>(
    x: &[F],
    batch: usize,
    fan_in: usize,
    fan_out: usize,
    w: &[F],
    b: &[F],
    out: &mut Vec<F>,
) {
    out.clear();
    out.resize(batch * fan_out, F::zero());
    for r in 0..batch {
        let xr = &x[r * fan_in..(r + 1) * fan_in];
        let or = &mut out[r * fan_out..(r + 1) * fan_out];
        let mut o = 0;
        while o + 4 <= fan_out {
            let vals = dot4(xr, &w[o * fan_in..(o + 4) * fan_in], fan_in);
            or[o] = vals[0] + b[o];
            or[o + 1] = vals[1] + b[o + 1];
            or[o + 2] = vals[2] + b[o + 2];
            or[o + 3] = vals[3] + b[o + 3];
            o += 4;
        }
        while o < fan_out {
            or[o] = dot(xr, &w[o * fan_in..(o + 1) * fan_in]) + b[o];
            o += 1;
        }
    }
}

/// `y += alpha * x`.
#[inline]
pub fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = fmadd(alpha, *xi, *yi);
    }
}

/// `y += a0*x0 + a1*x1 + a2*x2 + a3*x3` over equal-length slices.
#[inline]
fn axpy4<F: Real>(a: [F; 4], x: &[F], n: usize, y: &mut [F]) {
    let (x0, rest) = x.split_at(n);
    let (x1, rest) = rest.split_at(n);
    let (x2, x3full) = rest.split_at(n);
    let x3 = &x3full[..n];
    for i in 0..n {
        let v = fmadd(a[0], x0[i], y[i]);
        let v = fmadd(a[1], x1[i], v);
        let v = fmadd(a[2], x2[i], v);
        y[i] = fmadd(a[3], x3[i], v);
    }
}

/// Accumulates `delta * W` rows: `out[r] += sum_o delta[r, o] * w[o]`.
/// Blocks of four `o` at a time to cut store traffic.
pub fn matvec_rows<F: Real>(
    delta: &[F],
    batch: usize,
    fan_out: usize,
    fan_in: usize,
    w: &[F],
    out: &mut [F],
) {
    for r in 0..batch {
        let d_row = &delta[r * fan_out..(r + 1) * fan_out];
        let o_row = &mut out[r * fan_in..(r + 1) * fan_in];
        let mut o = 0;
        while o + 4 <= fan_out {
            let coef = [d_row[o], d_row[o + 1], d_row[o + 2], d_row[o + 3]];
            axpy4(coef, &w[o * fan_in..(o + 4) * fan_in], fan_in, o_row);
            o += 4;
        }
        while o < fan_out {
            axpy(d_row[o], &w[o * fan_in..(o + 1) * fan_in], o_row);
            o += 1;
        }
    }
}

/// Accumulates the layer weight/bias gradients:
/// `gw[o] += sum_r delta[r, o] * x[r]`, `gb[o] += sum_r delta[r, o]`.
/// Batch rows are processed four at a time.
pub fn weight_grad<F: Real>(
    delta: &[F],
    x: &[F],
    batch: usize,
    fan_out: usize,
    fan_in: usize,
    gw: &mut [F],
    gb: &mut [F],
) {
    let mut r = 0;
    while r + 4 <= batch {
        let x4 = &x[r * fan_in..(r + 4) * fan_in];
        for o in 0..fan_out {
            let coef = [
                delta[r * fan_out + o],
                delta[(r + 1) * fan_out + o],
                delta[(r + 2) * fan_out + o],
                delta[(r + 3) * fan_out + o],
            ];
            axpy4(coef, x4, fan_in, &mut gw[o * fan_in..(o + 1) * fan_in]);
            gb[o] = gb[o] + coef[0] + coef[1] + coef[2] + coef[3];
        }
        r += 4;
    }
    while r < batch {
        let x_row = &x[r * fan_in..(r + 1) * fan_in];
        for o in 0..fan_out {
            let g = delta[r * fan_out + o];
            axpy(g, x_row, &mut gw[o * fan_in..(o + 1) * fan_in]);
            gb[o] = gb[o] + g;
        }
        r += 1;
    }
}
