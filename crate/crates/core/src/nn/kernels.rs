//! Forward and backward kernels on plain tensors.

use super::{NnError, Tensor};

/// `C ← α·A·B + β·C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    sa: (usize, usize),
    b: &[f64],
    sb: (usize, usize),
    beta: f64,
    c: &mut [f64],
    sc: (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(k == 0 || (m - 1) * sa.0 + (k - 1) * sa.1 < a.len());
    debug_assert!(k == 0 || (k - 1) * sb.0 + (n - 1) * sb.1 < b.len());
    debug_assert!((m - 1) * sc.0 + (n - 1) * sc.1 < c.len());
    // SAFETY: the asserted extents keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            sc.0 as isize,
            sc.1 as isize,
        );
    }
}

fn dims3(t: &Tensor, what: &str) -> Result<(usize, usize, usize), NnError> {
    match *t.shape() {
        [a, b, c] => Ok((a, b, c)),
        ref s => Err(NnError::ShapeMismatch(format!("{what} must be 3-D, got {s:?}"))),
    }
}

fn check_bias(b: Option<&Tensor>, n: usize) -> Result<(), NnError> {
    match b {
        Some(b) if b.numel() != n => Err(NnError::ShapeMismatch(format!(
            "bias has {} values, expected {n}",
            b.numel()
        ))),
        _ => Ok(()),
    }
}

/// Valid output range `[lo, hi)` for tap `kk` with offset `kk - pad`.
fn tap_range(len: usize, kk: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kk).min(len);
    let hi = (len + pad).saturating_sub(kk).min(len);
    (lo, hi.max(lo))
}

fn im2col(x: &[f64], cin: usize, len: usize, k: usize, pad: usize, cols: &mut [f64]) {
    for ci in 0..cin {
        let src = &x[ci * len..(ci + 1) * len];
        for kk in 0..k {
            let row = &mut cols[(ci * k + kk) * len..(ci * k + kk + 1) * len];
            let (lo, hi) = tap_range(len, kk, pad);
            row[..lo].fill(0.0);
            row[hi..].fill(0.0);
            if lo < hi {
                row[lo..hi].copy_from_slice(&src[lo + kk - pad..hi + kk - pad]);
            }
        }
    }
}

fn col2im_add(cols: &[f64], cin: usize, len: usize, k: usize, pad: usize, dx: &mut [f64]) {
    for ci in 0..cin {
        let dst = &mut dx[ci * len..(ci + 1) * len];
        for kk in 0..k {
            let row = &cols[(ci * k + kk) * len..(ci * k + kk + 1) * len];
            let (lo, hi) = tap_range(len, kk, pad);
            for t in lo..hi {
                dst[t + kk - pad] += row[t];
            }
        }
    }
}

/// Stride-1 cross-correlation with zero "same" padding: `x[B,Cin,L]`,
/// `w[Cout,Cin,K]` (K odd) → `[B,Cout,L]`.
pub fn conv1d_forward(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor, NnError> {
    let (bn, cin, len) = dims3(x, "conv input")?;
    let (cout, cin_w, k) = dims3(w, "conv weight")?;
    if cin != cin_w || k % 2 == 0 {
        return Err(NnError::ShapeMismatch(format!(
            "conv weight {:?} incompatible with input {:?} (kernel must be odd)",
            w.shape(),
            x.shape()
        )));
    }
    check_bias(bias, cout)?;
    let pad = (k - 1) / 2;
    let mut out = Tensor::zeros(&[bn, cout, len]);
    let mut cols = vec![0.0; cin * k * len];
    for b in 0..bn {
        im2col(&x.data()[b * cin * len..], cin, len, k, pad, &mut cols);
        let o = &mut out.data_mut()[b * cout * len..(b + 1) * cout * len];
        if let Some(bias) = bias {
            for co in 0..cout {
                o[co * len..(co + 1) * len].fill(bias.data()[co]);
            }
        }
        gemm(cout, cin * k, len, w.data(), (cin * k, 1), &cols, (len, 1), 1.0, o, (len, 1));
    }
    Ok(out)
}

/// Gradients of [`conv1d_forward`]: `(dx, dw, db)`; `dx` only when requested.
pub fn conv1d_backward(x: &Tensor, w: &Tensor, gout: &Tensor, need_x: bool, need_w: bool) -> (Option<Tensor>, Tensor, Tensor) {
    let (bn, cin, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let pad = (k - 1) / 2;
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[cout]);
    let mut dx = need_x.then(|| Tensor::zeros(x.shape()));
    let mut cols = vec![0.0; cin * k * len];
    for b in 0..bn {
        let g = &gout.data()[b * cout * len..(b + 1) * cout * len];
        if need_w {
            im2col(&x.data()[b * cin * len..], cin, len, k, pad, &mut cols);
            gemm(cout, len, cin * k, g, (len, 1), &cols, (1, len), 1.0, dw.data_mut(), (cin * k, 1));
            for co in 0..cout {
                db.data_mut()[co] += g[co * len..(co + 1) * len].iter().sum::<f64>();
            }
        }
        if let Some(dx) = dx.as_mut() {
            gemm(cin * k, cout, len, w.data(), (1, cin * k), g, (len, 1), 0.0, &mut cols, (len, 1));
            col2im_add(&cols, cin, len, k, pad, &mut dx.data_mut()[b * cin * len..(b + 1) * cin * len]);
        }
    }
    (dx, dw, db)
}

pub fn conv_transpose1d_out_len(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    ((len.max(1) - 1) * stride + k).checked_sub(2 * pad).filter(|&n| n > 0)
}

/// Transposed convolution: `x[B,Cin,L]`, `w[Cin,Cout,K]` →
/// `[B,Cout,(L−1)·stride − 2·pad + K]`.
pub fn conv_transpose1d_forward(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<Tensor, NnError> {
    let (bn, cin, len) = dims3(x, "transposed-conv input")?;
    let (cin_w, cout, k) = dims3(w, "transposed-conv weight")?;
    if cin != cin_w || stride == 0 {
        return Err(NnError::ShapeMismatch(format!(
            "transposed-conv weight {:?} incompatible with input {:?}",
            w.shape(),
            x.shape()
        )));
    }
    check_bias(bias, cout)?;
    let lo = conv_transpose1d_out_len(len, k, stride, pad)
        .ok_or_else(|| NnError::ShapeMismatch("transposed-conv output would be empty".into()))?;
    let mut out = Tensor::zeros(&[bn, cout, lo]);
    let mut cols = vec![0.0; cout * k * len];
    for b in 0..bn {
        gemm(cout * k, cin, len, w.data(), (1, cout * k), &x.data()[b * cin * len..], (len, 1), 0.0, &mut cols, (len, 1));
        let o = &mut out.data_mut()[b * cout * lo..(b + 1) * cout * lo];
        for co in 0..cout {
            let orow = &mut o[co * lo..(co + 1) * lo];
            if let Some(bias) = bias {
                orow.fill(bias.data()[co]);
            }
            for kk in 0..k {
                let crow = &cols[(co * k + kk) * len..(co * k + kk + 1) * len];
                for (t, &v) in crow.iter().enumerate() {
                    let p = t * stride + kk;
                    if p >= pad && p - pad < lo {
                        orow[p - pad] += v;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[allow(clippy::type_complexity)]
pub fn conv_transpose1d_backward(
    x: &Tensor,
    w: &Tensor,
    gout: &Tensor,
    stride: usize,
    pad: usize,
    need_x: bool,
    need_w: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (bn, cin, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, k) = (w.shape()[1], w.shape()[2]);
    let lo = gout.shape()[2];
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[cout]);
    let mut dx = need_x.then(|| Tensor::zeros(x.shape()));
    let mut dcols = vec![0.0; cout * k * len];
    for b in 0..bn {
        let g = &gout.data()[b * cout * lo..(b + 1) * cout * lo];
        for co in 0..cout {
            for kk in 0..k {
                let row = &mut dcols[(co * k + kk) * len..(co * k + kk + 1) * len];
                for (t, r) in row.iter_mut().enumerate() {
                    let p = t * stride + kk;
                    *r = if p >= pad && p - pad < lo { g[co * lo + p - pad] } else { 0.0 };
                }
            }
            if need_w {
                db.data_mut()[co] += g[co * lo..(co + 1) * lo].iter().sum::<f64>();
            }
        }
        let xb = &x.data()[b * cin * len..(b + 1) * cin * len];
        if need_w {
            gemm(cin, len, cout * k, xb, (len, 1), &dcols, (1, len), 1.0, dw.data_mut(), (cout * k, 1));
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx.data_mut()[b * cin * len..(b + 1) * cin * len];
            gemm(cin, cout * k, len, w.data(), (cout * k, 1), &dcols, (len, 1), 0.0, dxb, (len, 1));
        }
    }
    (dx, dw, db)
}

/// Non-overlapping max pooling with stride `m`; the last window may be
/// partial. Returns the pooled tensor and, per output, the flat input index
/// of the maximum (first occurrence on ties).
pub fn maxpool1d_forward(x: &Tensor, m: usize) -> Result<(Tensor, Vec<usize>), NnError> {
    let (bn, c, len) = dims3(x, "pool input")?;
    if m == 0 {
        return Err(NnError::InvalidConfig("pool size must be ≥ 1".into()));
    }
    let lo = len.div_ceil(m);
    let mut out = Tensor::zeros(&[bn, c, lo]);
    let mut arg = vec![0usize; bn * c * lo];
    for r in 0..bn * c {
        let src = &x.data()[r * len..(r + 1) * len];
        for j in 0..lo {
            let (s, e) = (j * m, ((j + 1) * m).min(len));
            let mut best = s;
            for t in s + 1..e {
                if src[t] > src[best] {
                    best = t;
                }
            }
            out.data_mut()[r * lo + j] = src[best];
            arg[r * lo + j] = r * len + best;
        }
    }
    Ok((out, arg))
}

/// `x[B,in]·w[in,out] + b` → `[B,out]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor, NnError> {
    let (bn, fin) = match *x.shape() {
        [b, f] => (b, f),
        ref s => return Err(NnError::ShapeMismatch(format!("dense input must be 2-D, got {s:?}"))),
    };
    let fout = match *w.shape() {
        [i, o] if i == fin => o,
        ref s => {
            return Err(NnError::ShapeMismatch(format!(
                "dense weight {s:?} incompatible with input {:?}",
                x.shape()
            )))
        }
    };
    check_bias(bias, fout)?;
    let mut out = Tensor::zeros(&[bn, fout]);
    if let Some(bias) = bias {
        for r in 0..bn {
            out.data_mut()[r * fout..(r + 1) * fout].copy_from_slice(bias.data());
        }
    }
    gemm(bn, fin, fout, x.data(), (fin, 1), w.data(), (fout, 1), 1.0, out.data_mut(), (fout, 1));
    Ok(out)
}

pub fn dense_backward(x: &Tensor, w: &Tensor, gout: &Tensor, need_x: bool, need_w: bool) -> (Option<Tensor>, Tensor, Tensor) {
    let (bn, fin) = (x.shape()[0], x.shape()[1]);
    let fout = w.shape()[1];
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[fout]);
    if need_w {
        gemm(fin, bn, fout, x.data(), (1, fin), gout.data(), (fout, 1), 0.0, dw.data_mut(), (fout, 1));
        for r in 0..bn {
            for (d, g) in db.data_mut().iter_mut().zip(&gout.data()[r * fout..(r + 1) * fout]) {
                *d += g;
            }
        }
    }
    let dx = need_x.then(|| {
        let mut dx = Tensor::zeros(x.shape());
        gemm(bn, fout, fin, gout.data(), (fout, 1), w.data(), (1, fout), 0.0, dx.data_mut(), (fin, 1));
        dx
    });
    (dx, dw, db)
}

/// Row-wise softmax over the last axis.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let c = *x.shape().last().unwrap();
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c) {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

/// Row-wise `log Σ exp` over the last axis.
pub fn logsumexp_rows(x: &Tensor) -> Vec<f64> {
    let c = *x.shape().last().unwrap();
    x.data()
        .chunks(c)
        .map(|row| {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
        })
        .collect()
}
