//! Raw numeric kernels behind the graph ops.
//!
//! Layout is row-major NCHW throughout. The stride-1 convolution paths are
//! written as contiguous-slice axpy/dot loops so they auto-vectorize; the
//! general-stride fallbacks are index loops (only the first document-level
//! convolution runs strided, a few percent of total work). Reductions use
//! fixed 8-lane accumulators: deterministic order, still vectorizable.

use super::Scalar;

/// Output extent of a valid (no padding) sliding window: floor semantics,
/// requires `n >= k`.
pub fn window_out(n: usize, k: usize, stride: usize) -> usize {
    debug_assert!(k >= 1 && stride >= 1 && n >= k);
    (n - k) / stride + 1
}

/// Deterministic dot product with lane-parallel accumulation.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            lanes[k] = lanes[k] + xa[k] * xb[k];
        }
    }
    let mut s = T::zero();
    for k in 0..8 {
        s = s + lanes[k];
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s = s + *x * *y;
    }
    s
}

/// Deterministic sum with lane-parallel accumulation.
pub fn sum_slice<T: Scalar>(a: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    for xa in &mut ca {
        for k in 0..8 {
            lanes[k] = lanes[k] + xa[k];
        }
    }
    let mut s = T::zero();
    for k in 0..8 {
        s = s + lanes[k];
    }
    for x in ca.remainder() {
        s = s + *x;
    }
    s
}

/// `out += w * inp`, elementwise over equal-length slices.
fn axpy<T: Scalar>(w: T, inp: &[T], out: &mut [T]) {
    debug_assert_eq!(inp.len(), out.len());
    for (o, i) in out.iter_mut().zip(inp) {
        *o = *o + w * *i;
    }
}

/// One plane's 3x3 stride-1 contribution, added onto `out`: nine
/// multiply-adds per output pixel in (ky,kx) order, one pass over the
/// plane. This carries most of the character-encoder arithmetic; the
/// per-window axpy formulation spends more time re-slicing 15-wide rows
/// than multiplying.
fn conv3x3s1_plane<T: Scalar>(inp: &[T], iw: usize, w: &[T], out: &mut [T], oh: usize, ow: usize) {
    debug_assert_eq!(w.len(), 9);
    debug_assert!(iw >= ow + 2 && inp.len() >= (oh + 1) * iw + ow + 2);
    let (w00, w01, w02) = (w[0], w[1], w[2]);
    let (w10, w11, w12) = (w[3], w[4], w[5]);
    let (w20, w21, w22) = (w[6], w[7], w[8]);
    for y in 0..oh {
        let r0 = &inp[y * iw..][..ow + 2];
        let r1 = &inp[(y + 1) * iw..][..ow + 2];
        let r2 = &inp[(y + 2) * iw..][..ow + 2];
        let out_row = &mut out[y * ow..][..ow];
        for x in 0..ow {
            out_row[x] = out_row[x]
                + w00 * r0[x]
                + w01 * r0[x + 1]
                + w02 * r0[x + 2]
                + w10 * r1[x]
                + w11 * r1[x + 1]
                + w12 * r1[x + 2]
                + w20 * r2[x]
                + w21 * r2[x + 1]
                + w22 * r2[x + 2];
        }
    }
}

/// Weight gradient of one 3x3 stride-1 plane pair: nine independent
/// accumulators filled in a single pass, added onto `gw[0..9]`.
fn conv3x3s1_weight_grad_plane<T: Scalar>(
    inp: &[T],
    iw: usize,
    gout: &[T],
    oh: usize,
    ow: usize,
    gw: &mut [T],
) {
    debug_assert_eq!(gw.len(), 9);
    let mut s = [T::zero(); 9];
    for y in 0..oh {
        let r0 = &inp[y * iw..][..ow + 2];
        let r1 = &inp[(y + 1) * iw..][..ow + 2];
        let r2 = &inp[(y + 2) * iw..][..ow + 2];
        let g = &gout[y * ow..][..ow];
        for x in 0..ow {
            let gv = g[x];
            s[0] = s[0] + r0[x] * gv;
            s[1] = s[1] + r0[x + 1] * gv;
            s[2] = s[2] + r0[x + 2] * gv;
            s[3] = s[3] + r1[x] * gv;
            s[4] = s[4] + r1[x + 1] * gv;
            s[5] = s[5] + r1[x + 2] * gv;
            s[6] = s[6] + r2[x] * gv;
            s[7] = s[7] + r2[x + 1] * gv;
            s[8] = s[8] + r2[x + 2] * gv;
        }
    }
    for k in 0..9 {
        gw[k] = gw[k] + s[k];
    }
}

/// 1x3 row convolution, added onto `out_row`. Strides 1 and 3 (the two
/// the document classifier uses) get branch-free windows.
fn conv1x3_forward_row<T: Scalar>(in_row: &[T], w0: T, w1: T, w2: T, sw: usize, out_row: &mut [T]) {
    let ow = out_row.len();
    if sw == 1 {
        let r = &in_row[..ow + 2];
        for (x, o) in out_row.iter_mut().enumerate() {
            *o = *o + w0 * r[x] + w1 * r[x + 1] + w2 * r[x + 2];
        }
    } else if sw == 3 {
        for (o, c) in out_row.iter_mut().zip(in_row.chunks_exact(3).take(ow)) {
            *o = *o + w0 * c[0] + w1 * c[1] + w2 * c[2];
        }
    } else {
        for (x, o) in out_row.iter_mut().enumerate() {
            let b = x * sw;
            *o = *o + w0 * in_row[b] + w1 * in_row[b + 1] + w2 * in_row[b + 2];
        }
    }
}

/// Input gradient of a 1x3 row convolution, added onto `gin_row`.
fn conv1x3_backward_input_row<T: Scalar>(
    gout_row: &[T],
    w0: T,
    w1: T,
    w2: T,
    sw: usize,
    gin_row: &mut [T],
) {
    if sw == 3 {
        for (c, g) in gin_row.chunks_exact_mut(3).take(gout_row.len()).zip(gout_row) {
            c[0] = c[0] + w0 * *g;
            c[1] = c[1] + w1 * *g;
            c[2] = c[2] + w2 * *g;
        }
    } else {
        for (x, g) in gout_row.iter().enumerate() {
            let b = x * sw;
            gin_row[b] = gin_row[b] + w0 * *g;
            gin_row[b + 1] = gin_row[b + 1] + w1 * *g;
            gin_row[b + 2] = gin_row[b + 2] + w2 * *g;
        }
    }
}

/// Weight gradient of a 1x3 row convolution: the three tap sums.
fn conv1x3_weight_grad_row<T: Scalar>(in_row: &[T], gout_row: &[T], sw: usize) -> (T, T, T) {
    let (mut s0, mut s1, mut s2) = (T::zero(), T::zero(), T::zero());
    if sw == 3 {
        for (c, g) in in_row.chunks_exact(3).take(gout_row.len()).zip(gout_row) {
            s0 = s0 + c[0] * *g;
            s1 = s1 + c[1] * *g;
            s2 = s2 + c[2] * *g;
        }
    } else {
        for (x, g) in gout_row.iter().enumerate() {
            let b = x * sw;
            s0 = s0 + in_row[b] * *g;
            s1 = s1 + in_row[b + 1] * *g;
            s2 = s2 + in_row[b + 2] * *g;
        }
    }
    (s0, s1, s2)
}

/// Dimensions of one convolution call. `i*` is the input image plane,
/// `k*` the kernel, `s*` the stride, `o*` the output plane.
#[derive(Debug, Clone, Copy)]
pub struct ConvDims {
    pub n: usize,
    pub cin: usize,
    pub ih: usize,
    pub iw: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvDims {
    pub fn input_len(&self) -> usize {
        self.n * self.cin * self.ih * self.iw
    }
    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kh * self.kw
    }
    pub fn output_len(&self) -> usize {
        self.n * self.cout * self.oh * self.ow
    }
}

/// Cross-correlation plus bias: out[b,oc,y,x] =
/// bias[oc] + sum over (ic,ky,kx) of w[oc,ic,ky,kx] * in[b,ic,y*sh+ky,x*sw+kx].
pub fn conv2d_forward<T: Scalar>(d: &ConvDims, input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
    debug_assert_eq!(input.len(), d.input_len());
    debug_assert_eq!(weight.len(), d.weight_len());
    debug_assert_eq!(bias.len(), d.cout);
    debug_assert_eq!(out.len(), d.output_len());
    let in_plane = d.ih * d.iw;
    let out_plane = d.oh * d.ow;
    for b in 0..d.n {
        let in_b = &input[b * d.cin * in_plane..][..d.cin * in_plane];
        let out_b = &mut out[b * d.cout * out_plane..][..d.cout * out_plane];
        for oc in 0..d.cout {
            let out_c = &mut out_b[oc * out_plane..][..out_plane];
            out_c.fill(bias[oc]);
            let w_oc = &weight[oc * d.cin * d.kh * d.kw..][..d.cin * d.kh * d.kw];
            for ic in 0..d.cin {
                let in_c = &in_b[ic * in_plane..][..in_plane];
                let w_ic = &w_oc[ic * d.kh * d.kw..][..d.kh * d.kw];
                if d.kh == 3 && d.kw == 3 && d.sh == 1 && d.sw == 1 {
                    conv3x3s1_plane(in_c, d.iw, w_ic, out_c, d.oh, d.ow);
                } else if d.kh == 1 && d.kw == 3 {
                    for y in 0..d.oh {
                        let in_row = &in_c[(y * d.sh) * d.iw..][..d.iw];
                        let out_row = &mut out_c[y * d.ow..][..d.ow];
                        conv1x3_forward_row(in_row, w_ic[0], w_ic[1], w_ic[2], d.sw, out_row);
                    }
                } else if d.sw == 1 {
                    for ky in 0..d.kh {
                        for kx in 0..d.kw {
                            let w = w_ic[ky * d.kw + kx];
                            for y in 0..d.oh {
                                let in_row = &in_c[(y * d.sh + ky) * d.iw + kx..][..d.ow];
                                let out_row = &mut out_c[y * d.ow..][..d.ow];
                                axpy(w, in_row, out_row);
                            }
                        }
                    }
                } else {
                    for ky in 0..d.kh {
                        for y in 0..d.oh {
                            let in_row = &in_c[(y * d.sh + ky) * d.iw..][..d.iw];
                            let out_row = &mut out_c[y * d.ow..][..d.ow];
                            for kx in 0..d.kw {
                                let w = w_ic[ky * d.kw + kx];
                                for (x, o) in out_row.iter_mut().enumerate() {
                                    *o = *o + w * in_row[x * d.sw + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradient w.r.t. the convolution input.
pub fn conv2d_backward_input<T: Scalar>(d: &ConvDims, gout: &[T], weight: &[T], ginput: &mut [T]) {
    debug_assert_eq!(gout.len(), d.output_len());
    debug_assert_eq!(ginput.len(), d.input_len());
    let in_plane = d.ih * d.iw;
    let out_plane = d.oh * d.ow;
    if d.kh == 3 && d.kw == 3 && d.sh == 1 && d.sw == 1 {
        // transposed convolution: pad the output gradient by 2 on every
        // side and run the forward plane kernel with the kernel rotated
        // 180 degrees; (oh+4, ow+4) planes convolve down to (ih, iw)
        let (ph, pw) = (d.oh + 4, d.ow + 4);
        let mut padded = vec![T::zero(); ph * pw];
        for b in 0..d.n {
            let gout_b = &gout[b * d.cout * out_plane..][..d.cout * out_plane];
            let gin_b = &mut ginput[b * d.cin * in_plane..][..d.cin * in_plane];
            for oc in 0..d.cout {
                let gout_c = &gout_b[oc * out_plane..][..out_plane];
                for y in 0..d.oh {
                    padded[(y + 2) * pw + 2..][..d.ow].copy_from_slice(&gout_c[y * d.ow..][..d.ow]);
                }
                let w_oc = &weight[oc * d.cin * 9..][..d.cin * 9];
                for ic in 0..d.cin {
                    let gin_c = &mut gin_b[ic * in_plane..][..in_plane];
                    let w = &w_oc[ic * 9..][..9];
                    let flipped = [w[8], w[7], w[6], w[5], w[4], w[3], w[2], w[1], w[0]];
                    conv3x3s1_plane(&padded, pw, &flipped, gin_c, d.ih, d.iw);
                }
            }
        }
        return;
    }
    for b in 0..d.n {
        let gout_b = &gout[b * d.cout * out_plane..][..d.cout * out_plane];
        let gin_b = &mut ginput[b * d.cin * in_plane..][..d.cin * in_plane];
        for oc in 0..d.cout {
            let gout_c = &gout_b[oc * out_plane..][..out_plane];
            let w_oc = &weight[oc * d.cin * d.kh * d.kw..][..d.cin * d.kh * d.kw];
            for ic in 0..d.cin {
                let gin_c = &mut gin_b[ic * in_plane..][..in_plane];
                let w_ic = &w_oc[ic * d.kh * d.kw..][..d.kh * d.kw];
                if d.kh == 1 && d.kw == 3 {
                    for y in 0..d.oh {
                        let gout_row = &gout_c[y * d.ow..][..d.ow];
                        let gin_row = &mut gin_c[(y * d.sh) * d.iw..][..d.iw];
                        conv1x3_backward_input_row(gout_row, w_ic[0], w_ic[1], w_ic[2], d.sw, gin_row);
                    }
                } else if d.sw == 1 {
                    for ky in 0..d.kh {
                        for kx in 0..d.kw {
                            let w = w_ic[ky * d.kw + kx];
                            for y in 0..d.oh {
                                let gout_row = &gout_c[y * d.ow..][..d.ow];
                                let gin_row = &mut gin_c[(y * d.sh + ky) * d.iw + kx..][..d.ow];
                                axpy(w, gout_row, gin_row);
                            }
                        }
                    }
                } else {
                    for ky in 0..d.kh {
                        for y in 0..d.oh {
                            let gout_row = &gout_c[y * d.ow..][..d.ow];
                            let gin_row = &mut gin_c[(y * d.sh + ky) * d.iw..][..d.iw];
                            for kx in 0..d.kw {
                                let w = w_ic[ky * d.kw + kx];
                                for (x, g) in gout_row.iter().enumerate() {
                                    gin_row[x * d.sw + kx] = gin_row[x * d.sw + kx] + w * *g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradient w.r.t. the convolution weights.
pub fn conv2d_backward_weight<T: Scalar>(d: &ConvDims, gout: &[T], input: &[T], gweight: &mut [T]) {
    debug_assert_eq!(gweight.len(), d.weight_len());
    let in_plane = d.ih * d.iw;
    let out_plane = d.oh * d.ow;
    for b in 0..d.n {
        let in_b = &input[b * d.cin * in_plane..][..d.cin * in_plane];
        let gout_b = &gout[b * d.cout * out_plane..][..d.cout * out_plane];
        for oc in 0..d.cout {
            let gout_c = &gout_b[oc * out_plane..][..out_plane];
            let gw_oc = &mut gweight[oc * d.cin * d.kh * d.kw..][..d.cin * d.kh * d.kw];
            for ic in 0..d.cin {
                let in_c = &in_b[ic * in_plane..][..in_plane];
                let gw_ic = &mut gw_oc[ic * d.kh * d.kw..][..d.kh * d.kw];
                if d.kh == 3 && d.kw == 3 && d.sh == 1 && d.sw == 1 {
                    conv3x3s1_weight_grad_plane(in_c, d.iw, gout_c, d.oh, d.ow, gw_ic);
                } else if d.kh == 1 && d.kw == 3 {
                    for y in 0..d.oh {
                        let in_row = &in_c[(y * d.sh) * d.iw..][..d.iw];
                        let gout_row = &gout_c[y * d.ow..][..d.ow];
                        let (s0, s1, s2) = conv1x3_weight_grad_row(in_row, gout_row, d.sw);
                        gw_ic[0] = gw_ic[0] + s0;
                        gw_ic[1] = gw_ic[1] + s1;
                        gw_ic[2] = gw_ic[2] + s2;
                    }
                } else {
                    for ky in 0..d.kh {
                        for kx in 0..d.kw {
                            let mut acc = T::zero();
                            if d.sw == 1 {
                                for y in 0..d.oh {
                                    let in_row = &in_c[(y * d.sh + ky) * d.iw + kx..][..d.ow];
                                    let gout_row = &gout_c[y * d.ow..][..d.ow];
                                    acc = acc + dot(in_row, gout_row);
                                }
                            } else {
                                for y in 0..d.oh {
                                    let in_row = &in_c[(y * d.sh + ky) * d.iw..][..d.iw];
                                    let gout_row = &gout_c[y * d.ow..][..d.ow];
                                    for (x, g) in gout_row.iter().enumerate() {
                                        acc = acc + in_row[x * d.sw + kx] * *g;
                                    }
                                }
                            }
                            gw_ic[ky * d.kw + kx] = gw_ic[ky * d.kw + kx] + acc;
                        }
                    }
                }
            }
        }
    }
}

/// Gradient w.r.t. the convolution bias.
pub fn conv2d_backward_bias<T: Scalar>(d: &ConvDims, gout: &[T], gbias: &mut [T]) {
    debug_assert_eq!(gbias.len(), d.cout);
    let out_plane = d.oh * d.ow;
    for b in 0..d.n {
        for oc in 0..d.cout {
            let gout_c = &gout[(b * d.cout + oc) * out_plane..][..out_plane];
            gbias[oc] = gbias[oc] + sum_slice(gout_c);
        }
    }
}

/// Max pooling with window == stride, floor semantics (tail rows/cols that
/// do not fill a window are dropped). Ties resolve to the first element in
/// row-major window order. Fills `argmax` with flat input indices.
pub fn maxpool2d_forward<T: Scalar>(
    n: usize,
    c: usize,
    ih: usize,
    iw: usize,
    kh: usize,
    kw: usize,
    input: &[T],
    out: &mut [T],
    argmax: &mut [usize],
) {
    let oh = ih / kh;
    let ow = iw / kw;
    debug_assert_eq!(out.len(), n * c * oh * ow);
    debug_assert_eq!(argmax.len(), out.len());
    let in_plane = ih * iw;
    let out_plane = oh * ow;
    for p in 0..n * c {
        let in_c = &input[p * in_plane..][..in_plane];
        let base = p * in_plane;
        for y in 0..oh {
            for x in 0..ow {
                let mut best_idx = (y * kh) * iw + x * kw;
                let mut best = in_c[best_idx];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let idx = (y * kh + ky) * iw + (x * kw + kx);
                        let v = in_c[idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                out[p * out_plane + y * ow + x] = best;
                argmax[p * out_plane + y * ow + x] = base + best_idx;
            }
        }
    }
}

/// Linear layer: out[n,g] = bias[g] + sum_f in[n,f] * w[f,g].
pub fn linear_forward<T: Scalar>(
    n: usize,
    fin: usize,
    gout: usize,
    input: &[T],
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) {
    debug_assert_eq!(input.len(), n * fin);
    debug_assert_eq!(weight.len(), fin * gout);
    debug_assert_eq!(bias.len(), gout);
    debug_assert_eq!(out.len(), n * gout);
    for b in 0..n {
        let in_row = &input[b * fin..][..fin];
        let out_row = &mut out[b * gout..][..gout];
        out_row.copy_from_slice(bias);
        for (f, xv) in in_row.iter().enumerate() {
            let w_row = &weight[f * gout..][..gout];
            axpy(*xv, w_row, out_row);
        }
    }
}

/// Gradients of the linear layer; pass `None` for targets not needed.
pub fn linear_backward<T: Scalar>(
    n: usize,
    fin: usize,
    gout_dim: usize,
    input: &[T],
    weight: &[T],
    gout: &[T],
    mut ginput: Option<&mut [T]>,
    mut gweight: Option<&mut [T]>,
    mut gbias: Option<&mut [T]>,
) {
    for b in 0..n {
        let gout_row = &gout[b * gout_dim..][..gout_dim];
        if let Some(gin) = ginput.as_deref_mut() {
            let gin_row = &mut gin[b * fin..][..fin];
            for f in 0..fin {
                let w_row = &weight[f * gout_dim..][..gout_dim];
                gin_row[f] = gin_row[f] + dot(gout_row, w_row);
            }
        }
        if let Some(gw) = gweight.as_deref_mut() {
            let in_row = &input[b * fin..][..fin];
            for (f, xv) in in_row.iter().enumerate() {
                let gw_row = &mut gw[f * gout_dim..][..gout_dim];
                axpy(*xv, gout_row, gw_row);
            }
        }
        if let Some(gb) = gbias.as_deref_mut() {
            for (acc, g) in gb.iter_mut().zip(gout_row) {
                *acc = *acc + *g;
            }
        }
    }
}

/// Split log-sum-exp in the overflow-safe log1p form. Returns
/// (m, imax, r) with m the row max first attained at index imax and
/// r = log1p(sum over i != imax of exp(l[i] - m)), so lse = m + r.
///
/// Kept split because callers that subtract a logit from the lse must do
/// it as (m - l) + r: when one logit dominates, r can be smaller than one
/// ulp of m and would vanish inside the sum m + r.
pub fn log_sum_exp_parts<T: Scalar>(row: &[T]) -> (T, usize, T) {
    debug_assert!(!row.is_empty());
    let mut imax = 0;
    let mut m = row[0];
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > m {
            m = *v;
            imax = i;
        }
    }
    let mut s = T::zero();
    for (i, v) in row.iter().enumerate() {
        if i != imax {
            s = s + (*v - m).exp();
        }
    }
    (m, imax, s.ln_1p())
}

/// Per-row log-sum-exp: max + log1p(sum of the other shifted exponentials).
pub fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let (m, _, r) = log_sum_exp_parts(row);
    m + r
}
