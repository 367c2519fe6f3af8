//! Dense 2-D convolution kernels (cross-correlation semantics) and their
//! two gradient contractions.
//!
//! The three functions form a closed family under differentiation:
//!
//! * `conv2d(x, w)`            — forward map, bilinear in `(x, w)`
//! * `conv2d_grad_input(gy, w)`— contraction of the output cotangent with
//!                               the kernel (the vector-Jacobian product
//!                               w.r.t. the input)
//! * `conv2d_grad_kernel(x, gy)` — contraction of the input with the output
//!                               cotangent (the VJP w.r.t. the kernel)
//!
//! Each VJP of each member is again expressible with members of the family,
//! which is what gives the tape exact second-order gradients for the
//! gradient-penalty term.
//!
//! Accumulation-order contract: every output element of `conv2d` receives
//! its contributions in `(in-channel, kernel-row, kernel-col)` order, the
//! same order as the obvious quadruple-loop summation, so results are
//! bit-identical to that oracle. The loops are arranged so the innermost
//! dimension is contiguous in memory (AXPY style), which keeps them
//! auto-vectorizable without changing per-element accumulation order.
//! Parallelism likewise never reorders a sum: worker threads own disjoint
//! output channels (input channels for the input gradient), so results are
//! independent of the thread count.

use crate::tensor::{Scalar, Tensor};
use rayon::prelude::*;

/// Output spatial size for one dimension: ⌊(n + 2·pad − k)/stride⌋ + 1.
pub fn conv_out_size(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    assert!(stride >= 1, "stride must be at least 1");
    assert!(
        n + 2 * pad >= k,
        "kernel size {k} exceeds padded input {n} + 2*{pad}"
    );
    (n + 2 * pad - k) / stride + 1
}

/// Copy `[C,H,W]` into a zero-initialized `[C,H+2p,W+2p]` buffer.
fn pad_input<T: Scalar>(x: &Tensor<T>, pad: usize) -> Tensor<T> {
    if pad == 0 {
        return x.clone();
    }
    let (c, h, w) = dims3(x);
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = Tensor::zeros(&[c, hp, wp]);
    let src = x.data();
    let dst = out.data_mut();
    for ci in 0..c {
        for y in 0..h {
            let s = ci * h * w + y * w;
            let d = ci * hp * wp + (y + pad) * wp + pad;
            dst[d..d + w].copy_from_slice(&src[s..s + w]);
        }
    }
    out
}

pub fn dims3<T: Scalar>(x: &Tensor<T>) -> (usize, usize, usize) {
    let s = x.shape();
    assert_eq!(s.len(), 3, "expected [C,H,W] tensor, got shape {s:?}");
    (s[0], s[1], s[2])
}

pub fn dims4<T: Scalar>(x: &Tensor<T>) -> (usize, usize, usize, usize) {
    let s = x.shape();
    assert_eq!(s.len(), 4, "expected [Co,Ci,kh,kw] tensor, got shape {s:?}");
    (s[0], s[1], s[2], s[3])
}

/// Cross-correlation of `x: [Ci,H,W]` with `w: [Co,Ci,kh,kw]`.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> Tensor<T> {
    let (ci, h, wd) = dims3(x);
    let (co, ci_w, kh, kw) = dims4(w);
    assert_eq!(ci, ci_w, "input has {ci} channels but kernel expects {ci_w}");
    let ho = conv_out_size(h, kh, stride, pad);
    let wo = conv_out_size(wd, kw, stride, pad);
    let xp = pad_input(x, pad);
    let (hp, wp) = (h + 2 * pad, wd + 2 * pad);
    let mut out = Tensor::zeros(&[co, ho, wo]);
    let xd = xp.data();
    let wdat = w.data();
    out.data_mut()
        .par_chunks_mut(ho * wo)
        .enumerate()
        .for_each(|(o, od)| {
            for i in 0..ci {
                let ibase = i * hp * wp;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wdat[((o * ci + i) * kh + ky) * kw + kx];
                        for yo in 0..ho {
                            let irow = ibase + (yo * stride + ky) * wp + kx;
                            let orow = yo * wo;
                            if stride == 1 {
                                let src = &xd[irow..irow + wo];
                                let dst = &mut od[orow..orow + wo];
                                for (d, s) in dst.iter_mut().zip(src) {
                                    *d += wv * *s;
                                }
                            } else {
                                for xo in 0..wo {
                                    od[orow + xo] += wv * xd[irow + xo * stride];
                                }
                            }
                        }
                    }
                }
            }
        });
    out
}

/// VJP of `conv2d` w.r.t. its input: scatter `gy: [Co,Ho,Wo]` through
/// `w: [Co,Ci,kh,kw]` back to input shape `[Ci,H,W]`.
pub fn conv2d_grad_input<T: Scalar>(
    gy: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
    in_hw: (usize, usize),
) -> Tensor<T> {
    let (co, ho, wo) = dims3(gy);
    let (co_w, ci, kh, kw) = dims4(w);
    assert_eq!(co, co_w, "cotangent has {co} channels but kernel produces {co_w}");
    let (h, wd) = in_hw;
    assert_eq!(ho, conv_out_size(h, kh, stride, pad), "cotangent height mismatch");
    assert_eq!(wo, conv_out_size(wd, kw, stride, pad), "cotangent width mismatch");
    let (hp, wp) = (h + 2 * pad, wd + 2 * pad);
    let mut gxp = Tensor::zeros(&[ci, hp, wp]);
    let gd = gy.data();
    let wdat = w.data();
    gxp.data_mut()
        .par_chunks_mut(hp * wp)
        .enumerate()
        .for_each(|(i, xd)| {
            for o in 0..co {
                let obase = o * ho * wo;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wdat[((o * ci + i) * kh + ky) * kw + kx];
                        for yo in 0..ho {
                            let irow = (yo * stride + ky) * wp + kx;
                            let orow = obase + yo * wo;
                            if stride == 1 {
                                let dst = &mut xd[irow..irow + wo];
                                let src = &gd[orow..orow + wo];
                                for (d, s) in dst.iter_mut().zip(src) {
                                    *d += wv * *s;
                                }
                            } else {
                                for xo in 0..wo {
                                    xd[irow + xo * stride] += wv * gd[orow + xo];
                                }
                            }
                        }
                    }
                }
            }
        });
    if pad == 0 {
        return gxp;
    }
    // Crop the padding ring back off.
    let mut gx = Tensor::zeros(&[ci, h, wd]);
    let src = gxp.data();
    let dst = gx.data_mut();
    for i in 0..ci {
        for y in 0..h {
            let s = i * hp * wp + (y + pad) * wp + pad;
            let d = i * h * wd + y * wd;
            dst[d..d + wd].copy_from_slice(&src[s..s + wd]);
        }
    }
    gx
}

/// VJP of `conv2d` w.r.t. its kernel: correlate `x: [Ci,H,W]` with
/// `gy: [Co,Ho,Wo]` to kernel shape `[Co,Ci,kh,kw]`.
pub fn conv2d_grad_kernel<T: Scalar>(
    x: &Tensor<T>,
    gy: &Tensor<T>,
    stride: usize,
    pad: usize,
    k_hw: (usize, usize),
) -> Tensor<T> {
    let (ci, h, wd) = dims3(x);
    let (co, ho, wo) = dims3(gy);
    let (kh, kw) = k_hw;
    assert_eq!(ho, conv_out_size(h, kh, stride, pad), "cotangent height mismatch");
    assert_eq!(wo, conv_out_size(wd, kw, stride, pad), "cotangent width mismatch");
    let xp = pad_input(x, pad);
    let (hp, wp) = (h + 2 * pad, wd + 2 * pad);
    let mut gw = Tensor::zeros(&[co, ci, kh, kw]);
    let xd = xp.data();
    let gd = gy.data();
    let geom = GkGeom { ci, kh, kw, stride, hp_wp: hp * wp, wp, ho, wo };
    gw.data_mut()
        .par_chunks_mut(ci * kh * kw)
        .enumerate()
        .for_each(|(o, wslab)| match kw {
            1 => gk_slab::<T, 1>(wslab, xd, gd, o, &geom),
            2 => gk_slab::<T, 2>(wslab, xd, gd, o, &geom),
            3 => gk_slab::<T, 3>(wslab, xd, gd, o, &geom),
            4 => gk_slab::<T, 4>(wslab, xd, gd, o, &geom),
            5 => gk_slab::<T, 5>(wslab, xd, gd, o, &geom),
            7 => gk_slab::<T, 7>(wslab, xd, gd, o, &geom),
            _ => gk_slab_any(wslab, xd, gd, o, &geom),
        });
    gw
}

struct GkGeom {
    ci: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    hp_wp: usize,
    wp: usize,
    ho: usize,
    wo: usize,
}

/// One output-channel slab of the kernel gradient with the kernel width
/// fixed at compile time: the KW accumulators of one (i,ky) row live in
/// registers and advance together through the (yo,xo) sweep, so each
/// output element still receives its terms in row-major (yo,xo) order —
/// the naive-oracle order — while the independent dependence chains
/// interleave instead of running one after another.
fn gk_slab<T: Scalar, const KW: usize>(wslab: &mut [T], xd: &[T], gd: &[T], o: usize, g: &GkGeom) {
    let obase = o * g.ho * g.wo;
    for i in 0..g.ci {
        let ibase = i * g.hp_wp;
        for ky in 0..g.kh {
            let mut acc = [T::zero(); KW];
            for yo in 0..g.ho {
                let irow = ibase + (yo * g.stride + ky) * g.wp;
                let orow = obase + yo * g.wo;
                for xo in 0..g.wo {
                    let gv = gd[orow + xo];
                    let base = irow + xo * g.stride;
                    let taps: &[T; KW] = xd[base..base + KW].try_into().expect("tap window");
                    for k in 0..KW {
                        acc[k] += gv * taps[k];
                    }
                }
            }
            wslab[(i * g.kh + ky) * KW..(i * g.kh + ky + 1) * KW].copy_from_slice(&acc);
        }
    }
}

/// Fallback for kernel widths without a monomorphized slab; same
/// accumulation order.
fn gk_slab_any<T: Scalar>(wslab: &mut [T], xd: &[T], gd: &[T], o: usize, g: &GkGeom) {
    let obase = o * g.ho * g.wo;
    let mut acc = vec![T::zero(); g.kw];
    for i in 0..g.ci {
        let ibase = i * g.hp_wp;
        for ky in 0..g.kh {
            acc.fill(T::zero());
            for yo in 0..g.ho {
                let irow = ibase + (yo * g.stride + ky) * g.wp;
                let orow = obase + yo * g.wo;
                for xo in 0..g.wo {
                    let gv = gd[orow + xo];
                    let taps = &xd[irow + xo * g.stride..irow + xo * g.stride + g.kw];
                    for (a, &t) in acc.iter_mut().zip(taps) {
                        *a += gv * t;
                    }
                }
            }
            wslab[(i * g.kh + ky) * g.kw..(i * g.kh + ky + 1) * g.kw].copy_from_slice(&acc);
        }
    }
}
