//! Raw numeric kernels over row-major slices. No shape checking happens
//! here; callers in `tensor.rs` validate shapes first.

use super::Real;

pub(crate) fn zip_map<T: Real>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

pub(crate) fn map<T: Real>(a: &[T], f: impl Fn(T) -> T) -> Vec<T> {
    a.iter().map(|&x| f(x)).collect()
}

/// `[m, k] x [k, n] -> [m, n]`
pub(crate) fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose<T: Real>(a: &[T], m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// `w: [b, o, i]`, `x: [b, i]` -> `[b, o]`
pub(crate) fn bmatvec<T: Real>(w: &[T], x: &[T], b: usize, o: usize, i: usize) -> Vec<T> {
    let mut out = vec![T::zero(); b * o];
    for bi in 0..b {
        let xs = &x[bi * i..(bi + 1) * i];
        let wb = &w[bi * o * i..(bi + 1) * o * i];
        for (oi, out_v) in out[bi * o..(bi + 1) * o].iter_mut().enumerate() {
            let wr = &wb[oi * i..(oi + 1) * i];
            *out_v = dot(wr, xs);
        }
    }
    out
}

/// `w: [b, o, i]`, `u: [b, o]` -> `[b, i]`, the per-batch product `w^T u`.
pub(crate) fn bmatvec_t<T: Real>(w: &[T], u: &[T], b: usize, o: usize, i: usize) -> Vec<T> {
    let mut out = vec![T::zero(); b * i];
    for bi in 0..b {
        let us = &u[bi * o..(bi + 1) * o];
        let wb = &w[bi * o * i..(bi + 1) * o * i];
        let ob = &mut out[bi * i..(bi + 1) * i];
        for (oi, &uv) in us.iter().enumerate() {
            if uv == T::zero() {
                continue;
            }
            let wr = &wb[oi * i..(oi + 1) * i];
            for (dst, &wv) in ob.iter_mut().zip(wr) {
                *dst += wv * uv;
            }
        }
    }
    out
}

/// `a: [b, o]`, `c: [b, i]` -> `[b, o, i]` per-batch outer products.
pub(crate) fn bouter<T: Real>(a: &[T], c: &[T], b: usize, o: usize, i: usize) -> Vec<T> {
    let mut out = vec![T::zero(); b * o * i];
    for bi in 0..b {
        let av = &a[bi * o..(bi + 1) * o];
        let cv = &c[bi * i..(bi + 1) * i];
        for (oi, &x) in av.iter().enumerate() {
            let dst = &mut out[(bi * o + oi) * i..(bi * o + oi + 1) * i];
            for (d, &y) in dst.iter_mut().zip(cv) {
                *d = x * y;
            }
        }
    }
    out
}

/// `m - mean_h a_h c_h^T` per batch element. Per entry the heads are
/// summed in order, scaled by `1/H` when `H > 1`, then subtracted.
pub(crate) fn sub_mean_outer<T: Real>(m: &[T], pairs: &[(&[T], &[T])], b: usize, o: usize, i: usize) -> Vec<T> {
    let mut out = m.to_vec();
    let inv = T::lit(1.0 / pairs.len() as f64);
    let mut acc = vec![T::zero(); i];
    for bi in 0..b {
        for oi in 0..o {
            let dst = &mut out[(bi * o + oi) * i..(bi * o + oi + 1) * i];
            let (a0, c0) = pairs[0];
            let x = a0[bi * o + oi];
            for (s, &y) in acc.iter_mut().zip(&c0[bi * i..(bi + 1) * i]) {
                *s = x * y;
            }
            for &(a, c) in &pairs[1..] {
                let x = a[bi * o + oi];
                for (s, &y) in acc.iter_mut().zip(&c[bi * i..(bi + 1) * i]) {
                    *s += x * y;
                }
            }
            if pairs.len() > 1 {
                for s in acc.iter_mut() {
                    *s *= inv;
                }
            }
            for (d, &s) in dst.iter_mut().zip(&acc) {
                *d -= s;
            }
        }
    }
    out
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // Independent lanes so the loop vectorises.
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: T = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

/// Splits a shape around `axis` into `(outer, len, inner)` element counts.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn sum_axis<T: Real>(x: &[T], outer: usize, n: usize, inner: usize) -> Vec<T> {
    let mut out = vec![T::zero(); outer * inner];
    for o in 0..outer {
        for a in 0..n {
            let src = &x[(o * n + a) * inner..(o * n + a + 1) * inner];
            let dst = &mut out[o * inner..(o + 1) * inner];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    out
}

pub(crate) fn expand<T: Real>(x: &[T], outer: usize, n: usize, inner: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(outer * n * inner);
    for o in 0..outer {
        let src = &x[o * inner..(o + 1) * inner];
        for _ in 0..n {
            out.extend_from_slice(src);
        }
    }
    out
}

/// Copies `len` entries along the split axis starting at `start`.
pub(crate) fn slice_axis<T: Real>(x: &[T], outer: usize, n: usize, inner: usize, start: usize, len: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * n + start) * inner;
        out.extend_from_slice(&x[base..base + len * inner]);
    }
    out
}

/// Inverse of [`slice_axis`]: embeds `x` into zeros of extent `total`.
pub(crate) fn pad_axis<T: Real>(x: &[T], outer: usize, len: usize, inner: usize, start: usize, total: usize) -> Vec<T> {
    let mut out = vec![T::zero(); outer * total * inner];
    for o in 0..outer {
        let dst = (o * total + start) * inner;
        out[dst..dst + len * inner].copy_from_slice(&x[o * len * inner..(o + 1) * len * inner]);
    }
    out
}

pub(crate) fn log_softmax_rows<T: Real>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = max + row.iter().fold(T::zero(), |s, &v| s + (v - max).exp()).ln();
        out.extend(row.iter().map(|&v| v - lse));
    }
    out
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}
