//! Graph-building tensor operations.
//!
//! Every op validates shapes, runs the forward kernel, and registers a
//! backward closure that adds into the gradient buffers of tracked parents
//! only. Shapes follow NCHW for images; linear weights are [in, out].

use std::rc::Rc;

use super::kernels::{self, ConvDims};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

/// Valid (unpadded) 2-D cross-correlation with bias.
/// input [N,Cin,H,W], weight [Cout,Cin,Kh,Kw], bias [Cout] -> [N,Cout,OH,OW].
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: (usize, usize),
) -> Result<Tensor<T>> {
    let ishape = input.shape();
    let wshape = weight.shape();
    if ishape.len() != 4 || wshape.len() != 4 {
        return Err(shape_err(
            "conv2d",
            format!("need 4-D input and weight, got {:?} and {:?}", ishape, wshape),
        ));
    }
    let (n, cin, ih, iw) = (ishape[0], ishape[1], ishape[2], ishape[3]);
    let (cout, wcin, kh, kw) = (wshape[0], wshape[1], wshape[2], wshape[3]);
    if wcin != cin {
        return Err(shape_err(
            "conv2d",
            format!("input has {} channels, weight expects {}", cin, wcin),
        ));
    }
    if bias.shape() != [cout] {
        return Err(shape_err(
            "conv2d",
            format!("bias shape {:?}, expected [{}]", bias.shape(), cout),
        ));
    }
    let (sh, sw) = stride;
    if sh == 0 || sw == 0 {
        return Err(shape_err("conv2d", "stride must be >= 1".into()));
    }
    if kh == 0 || kw == 0 || kh > ih || kw > iw {
        return Err(shape_err(
            "conv2d",
            format!("kernel {}x{} does not fit input {}x{}", kh, kw, ih, iw),
        ));
    }
    let d = ConvDims {
        n,
        cin,
        ih,
        iw,
        cout,
        kh,
        kw,
        sh,
        sw,
        oh: kernels::window_out(ih, kh, sh),
        ow: kernels::window_out(iw, kw, sw),
    };
    let mut out = vec![T::zero(); d.output_len()];
    kernels::conv2d_forward(&d, &input.data(), &weight.data(), &bias.data(), &mut out);

    let (pi, pw, pb) = (input.clone(), weight.clone(), bias.clone());
    let backward = Box::new(move |g: &[T], store: &mut super::GradStore<T>| {
        store.accumulate(&pi, |gin| {
            kernels::conv2d_backward_input(&d, g, &pw.data(), gin);
        });
        store.accumulate(&pw, |gw| {
            kernels::conv2d_backward_weight(&d, g, &pi.data(), gw);
        });
        store.accumulate(&pb, |gb| {
            kernels::conv2d_backward_bias(&d, g, gb);
        });
    });
    Ok(Tensor::from_op(
        vec![n, cout, d.oh, d.ow],
        out,
        vec![input.clone(), weight.clone(), bias.clone()],
        Some(backward),
    ))
}

/// Max pooling with stride equal to the window; incomplete tail windows
/// are dropped (floor semantics). input [N,C,H,W] -> [N,C,H/kh,W/kw].
pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, window: (usize, usize)) -> Result<Tensor<T>> {
    let ishape = input.shape();
    if ishape.len() != 4 {
        return Err(shape_err("maxpool2d", format!("need 4-D input, got {:?}", ishape)));
    }
    let (n, c, ih, iw) = (ishape[0], ishape[1], ishape[2], ishape[3]);
    let (kh, kw) = window;
    if kh == 0 || kw == 0 || kh > ih || kw > iw {
        return Err(shape_err(
            "maxpool2d",
            format!("window {}x{} does not fit input {}x{}", kh, kw, ih, iw),
        ));
    }
    let (oh, ow) = (ih / kh, iw / kw);
    let mut out = vec![T::zero(); n * c * oh * ow];
    let mut argmax = vec![0usize; out.len()];
    kernels::maxpool2d_forward(n, c, ih, iw, kh, kw, &input.data(), &mut out, &mut argmax);

    let pi = input.clone();
    let backward = Box::new(move |g: &[T], store: &mut super::GradStore<T>| {
        store.accumulate(&pi, |gin| {
            for (gi, &src) in g.iter().zip(&argmax) {
                gin[src] = gin[src] + *gi;
            }
        });
    });
    Ok(Tensor::from_op(
        vec![n, c, oh, ow],
        out,
        vec![input.clone()],
        Some(backward),
    ))
}

/// Elementwise max(x, 0). The subgradient at exactly 0 is taken as 0
/// (backward masks on strictly positive output).
pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let out: Vec<T> = input.data().iter().map(|&x| x.max(T::zero())).collect();
    let out_rc = Rc::new(std::cell::RefCell::new(out));

    let pi = input.clone();
    let mask_src = Rc::clone(&out_rc);
    let backward = Box::new(move |g: &[T], store: &mut super::GradStore<T>| {
        store.accumulate(&pi, |gin| {
            let out = mask_src.borrow();
            for ((gi, o), acc) in g.iter().zip(out.iter()).zip(gin.iter_mut()) {
                if *o > T::zero() {
                    *acc = *acc + *gi;
                }
            }
        });
    });
    Tensor::from_op_shared(
        input.shape().to_vec(),
        out_rc,
        vec![input.clone()],
        Some(backward),
    )
}

/// Fully connected layer: input [N,F] x weight [F,G] + bias [G] -> [N,G].
pub fn linear<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let ishape = input.shape();
    let wshape = weight.shape();
    if ishape.len() != 2 || wshape.len() != 2 {
        return Err(shape_err(
            "linear",
            format!("need 2-D input and weight, got {:?} and {:?}", ishape, wshape),
        ));
    }
    let (n, fin) = (ishape[0], ishape[1]);
    let (wf, gdim) = (wshape[0], wshape[1]);
    if wf != fin {
        return Err(shape_err(
            "linear",
            format!("input features {}, weight expects {}", fin, wf),
        ));
    }
    if bias.shape() != [gdim] {
        return Err(shape_err(
            "linear",
            format!("bias shape {:?}, expected [{}]", bias.shape(), gdim),
        ));
    }
    let mut out = vec![T::zero(); n * gdim];
    kernels::linear_forward(n, fin, gdim, &input.data(), &weight.data(), &bias.data(), &mut out);

    let (pi, pw, pb) = (input.clone(), weight.clone(), bias.clone());
    let backward = Box::new(move |g: &[T], store: &mut super::GradStore<T>| {
        store.accumulate(&pi, |gin| {
            kernels::linear_backward(
                n,
                fin,
                gdim,
                &pi.data(),
                &pw.data(),
                g,
                Some(gin),
                None,
                None,
            );
        });
        store.accumulate(&pw, |gw| {
            kernels::linear_backward(
                n,
                fin,
                gdim,
                &pi.data(),
                &pw.data(),
                g,
                None,
                Some(gw),
                None,
            );
        });
        store.accumulate(&pb, |gb| {
            kernels::linear_backward(
                n,
                fin,
                gdim,
                &pi.data(),
                &pw.data(),
                g,
                None,
                None,
                Some(gb),
            );
        });
    });
    Ok(Tensor::from_op(
        vec![n, gdim],
        out,
        vec![input.clone(), weight.clone(), bias.clone()],
        Some(backward),
    ))
}

/// Mean softmax cross-entropy over rows: logits [N,K], one class index per
/// row. Uses the log1p form of log-sum-exp (see `kernels::log_sum_exp`).
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
    let shape = logits.shape();
    if shape.len() != 2 {
        return Err(shape_err(
            "softmax_cross_entropy",
            format!("need 2-D logits, got {:?}", shape),
        ));
    }
    let (n, k) = (shape[0], shape[1]);
    if n == 0 || k == 0 {
        return Err(shape_err("softmax_cross_entropy", "empty logits".into()));
    }
    if labels.len() != n {
        return Err(shape_err(
            "softmax_cross_entropy",
            format!("{} logit rows but {} labels", n, labels.len()),
        ));
    }
    for &lab in labels {
        if lab >= k {
            return Err(Error::LabelOutOfRange { label: lab, num_classes: k });
        }
    }
    let mut lses = vec![T::zero(); n];
    let mut total = T::zero();
    {
        let data = logits.data();
        for (row_i, lse_slot) in lses.iter_mut().enumerate() {
            let row = &data[row_i * k..][..k];
            let (m, _, r) = kernels::log_sum_exp_parts(row);
            // (m - l) + r, not (m + r) - l: r survives even when it is
            // below one ulp of m and the label logit equals the max.
            total = total + ((m - row[labels[row_i]]) + r);
            *lse_slot = m + r;
        }
    }
    let inv_n = T::one() / T::from_f64(n as f64);
    let loss = total * inv_n;

    let pl = logits.clone();
    let labels_owned: Vec<usize> = labels.to_vec();
    let backward = Box::new(move |g: &[T], store: &mut super::GradStore<T>| {
        let scale = g[0] * inv_n;
        store.accumulate(&pl, |gl| {
            let data = pl.data();
            for row_i in 0..n {
                let row = &data[row_i * k..][..k];
                let grow = &mut gl[row_i * k..][..k];
                let lse = lses[row_i];
                for (j, (acc, &l)) in grow.iter_mut().zip(row).enumerate() {
                    let p = (l - lse).exp();
                    let ind = if j == labels_owned[row_i] { T::one() } else { T::zero() };
                    *acc = *acc + scale * (p - ind);
                }
            }
        });
    });
    Ok(Tensor::from_op(
        vec![1],
        vec![loss],
        vec![logits.clone()],
        Some(backward),
    ))
}

/// Concatenate along axis 0. All parts must agree on the trailing dims.
pub fn concat0<T: Scalar>(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
    if parts.is_empty() {
        return Err(shape_err("concat0", "no tensors to concatenate".into()));
    }
    let rest = &parts[0].shape()[1..];
    for p in parts {
        if p.shape().is_empty() || &p.shape()[1..] != rest {
            return Err(shape_err(
                "concat0",
                format!("trailing dims differ: {:?} vs {:?}", p.shape(), parts[0].shape()),
            ));
        }
    }
    let n0: usize = parts.iter().map(|p| p.shape()[0]).sum();
    let mut shape = vec![n0];
    shape.extend_from_slice(rest);
    let mut out = Vec::with_capacity(shape.iter().product());
    for p in parts {
        out.extend_from_slice(&p.data());
    }

    let owned: Vec<Tensor<T>> = parts.to_vec();
    let backward = Box::new(move |g: &[T], store: &mut super::GradStore<T>| {
        let mut offset = 0;
        for p in &owned {
            let len = p.numel();
            let gslice = &g[offset..offset + len];
            store.accumulate(p, |gp| {
                for (acc, gi) in gp.iter_mut().zip(gslice) {
                    *acc = *acc + *gi;
                }
            });
            offset += len;
        }
    });
    Ok(Tensor::from_op(shape, out, parts.to_vec(), Some(backward)))
}

/// Reinterpret the buffer under a new shape of equal element count.
/// Shares storage with the input; no copy in either pass.
pub fn reshape<T: Scalar>(input: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    let numel: usize = shape.iter().product();
    if numel != input.numel() {
        return Err(shape_err(
            "reshape",
            format!("cannot view {:?} ({} elements) as {:?}", input.shape(), input.numel(), shape),
        ));
    }
    let pi = input.clone();
    let backward = Box::new(move |g: &[T], store: &mut super::GradStore<T>| {
        store.accumulate(&pi, |gin| {
            for (acc, gi) in gin.iter_mut().zip(g) {
                *acc = *acc + *gi;
            }
        });
    });
    Ok(Tensor::from_op_shared(
        shape.to_vec(),
        input.data_rc(),
        vec![input.clone()],
        Some(backward),
    ))
}

/// Matrix transpose: [R,C] -> [C,R].
pub fn transpose2d<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = input.shape();
    if shape.len() != 2 {
        return Err(shape_err("transpose2d", format!("need 2-D input, got {:?}", shape)));
    }
    let (r, c) = (shape[0], shape[1]);
    let data = input.data();
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = data[i * c + j];
        }
    }
    drop(data);

    let pi = input.clone();
    let backward = Box::new(move |g: &[T], store: &mut super::GradStore<T>| {
        store.accumulate(&pi, |gin| {
            // g is [C,R]; route g[j,i] back to input position (i,j).
            for j in 0..c {
                for i in 0..r {
                    gin[i * c + j] = gin[i * c + j] + g[j * r + i];
                }
            }
        });
    });
    Ok(Tensor::from_op(
        vec![c, r],
        out,
        vec![input.clone()],
        Some(backward),
    ))
}

/// Elementwise multiply by a constant mask of the same element count.
/// Gradients flow only through positions where the mask is nonzero.
pub fn mask_mul<T: Scalar>(input: &Tensor<T>, mask: Vec<T>) -> Result<Tensor<T>> {
    if mask.len() != input.numel() {
        return Err(shape_err(
            "mask_mul",
            format!("mask has {} elements, input {}", mask.len(), input.numel()),
        ));
    }
    let out: Vec<T> = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();

    let pi = input.clone();
    let backward = Box::new(move |g: &[T], store: &mut super::GradStore<T>| {
        store.accumulate(&pi, |gin| {
            for ((acc, gi), m) in gin.iter_mut().zip(g).zip(&mask) {
                *acc = *acc + *gi * *m;
            }
        });
    });
    Ok(Tensor::from_op(
        input.shape().to_vec(),
        out,
        vec![input.clone()],
        Some(backward),
    ))
}

/// Sum of all elements, as a [1] tensor.
pub fn sum<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let s = kernels::sum_slice(&input.data());
    let pi = input.clone();
    let backward = Box::new(move |g: &[T], store: &mut super::GradStore<T>| {
        let gv = g[0];
        store.accumulate(&pi, |gin| {
            for acc in gin.iter_mut() {
                *acc = *acc + gv;
            }
        });
    });
    Tensor::from_op(vec![1], vec![s], vec![input.clone()], Some(backward))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::leaf(shape, data, true).unwrap()
    }

    #[test]
    fn conv2d_rejects_channel_mismatch() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::<f32>::zeros(&[1, 3, 2, 2]);
        let b = Tensor::<f32>::zeros(&[1]);
        assert!(conv2d(&x, &w, &b, (1, 1)).is_err());
    }

    #[test]
    fn conv2d_rejects_oversized_kernel() {
        let x = Tensor::<f32>::zeros(&[1, 1, 2, 2]);
        let w = Tensor::<f32>::zeros(&[1, 1, 3, 3]);
        let b = Tensor::<f32>::zeros(&[1]);
        assert!(conv2d(&x, &w, &b, (1, 1)).is_err());
    }

    #[test]
    fn conv2d_scalar_kernel_scales_input() {
        let x = Tensor::<f32>::constant(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let w = Tensor::<f32>::constant(&[1, 1, 1, 1], vec![2.0]).unwrap();
        let b = Tensor::<f32>::constant(&[1], vec![0.0]).unwrap();
        let y = conv2d(&x, &w, &b, (1, 1)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(*y.data(), vec![2.0; 9]);
    }

    #[test]
    fn conv2d_strided_single_window() {
        // [1,2,3,4] under a width-3 ones kernel at stride 3: one window, 1+2+3.
        let x = Tensor::<f32>::constant(&[1, 1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::<f32>::constant(&[1, 1, 1, 3], vec![1.0; 3]).unwrap();
        let b = Tensor::<f32>::constant(&[1], vec![0.0]).unwrap();
        let y = conv2d(&x, &w, &b, (1, 3)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(*y.data(), vec![6.0]);
    }

    #[test]
    fn linear_identity_weight_shifts_by_bias() {
        let x = Tensor::<f32>::constant(&[1, 2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::<f32>::constant(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::<f32>::constant(&[2], vec![3.0, 3.0]).unwrap();
        let y = linear(&x, &w, &b).unwrap();
        assert_eq!(*y.data(), vec![4.0, 5.0]);
    }

    #[test]
    fn relu_all_negative_is_zero() {
        let x = Tensor::<f32>::constant(&[3], vec![-1.0, -0.5, -2.0]).unwrap();
        let y = relu(&x);
        assert_eq!(*y.data(), vec![0.0; 3]);
    }

    #[test]
    fn sum_backward_is_ones() {
        let x = leaf(&[3], vec![1.0, 2.0, 3.0]);
        sum(&x).backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_twice_doubles_grads() {
        let x = leaf(&[2], vec![1.0, 2.0]);
        let s = sum(&x);
        s.backward().unwrap();
        s.backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn clear_grad_resets_accumulation() {
        let x = leaf(&[2], vec![1.0, 2.0]);
        let s = sum(&x);
        s.backward().unwrap();
        x.clear_grad();
        assert!(x.grad_vec().is_none());
        s.backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn untracked_parent_gets_no_grad() {
        let x = Tensor::<f64>::constant(&[2], vec![1.0, 2.0]).unwrap();
        let w = leaf(&[2, 1], vec![3.0, 4.0]);
        let b = leaf(&[1], vec![0.0]);
        let x2 = reshape(&x, &[1, 2]).unwrap();
        let y = linear(&x2, &w, &b).unwrap();
        sum(&y).backward().unwrap();
        assert!(x.grad_vec().is_none());
        assert_eq!(w.grad_vec().unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn relu_masks_forward_and_backward() {
        let x = leaf(&[4], vec![-1.0, 0.0, 0.5, 2.0]);
        let y = relu(&x);
        assert_eq!(*y.data(), vec![0.0, 0.0, 0.5, 2.0]);
        sum(&y).backward().unwrap();
        // subgradient at 0 is 0
        assert_eq!(x.grad_vec().unwrap(), vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn linear_grads_by_hand() {
        // y = x.W + b, x=[1,2], W=[[1,2],[3,4]], loss = sum(y)
        // dW = x^T . ones = [[1,1],[2,2]], dx = ones . W^T = [3, 7], db = [1,1]
        let x = leaf(&[1, 2], vec![1.0, 2.0]);
        let w = leaf(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = leaf(&[2], vec![10.0, 20.0]);
        let y = linear(&x, &w, &b).unwrap();
        assert_eq!(*y.data(), vec![17.0, 30.0]);
        sum(&y).backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![3.0, 7.0]);
        assert_eq!(w.grad_vec().unwrap(), vec![1.0, 1.0, 2.0, 2.0]);
        assert_eq!(b.grad_vec().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn conv2d_grads_by_hand() {
        // 1x1x1x2 input [a,b], kernel [w1,w2] (1x1x1x2), stride 1: y = w1*a + w2*b + c.
        let x = leaf(&[1, 1, 1, 2], vec![5.0, 7.0]);
        let w = leaf(&[1, 1, 1, 2], vec![2.0, 3.0]);
        let b = leaf(&[1], vec![1.0]);
        let y = conv2d(&x, &w, &b, (1, 1)).unwrap();
        assert_eq!(*y.data(), vec![5.0 * 2.0 + 7.0 * 3.0 + 1.0]);
        sum(&y).backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![2.0, 3.0]);
        assert_eq!(w.grad_vec().unwrap(), vec![5.0, 7.0]);
        assert_eq!(b.grad_vec().unwrap(), vec![1.0]);
    }

    #[test]
    fn maxpool_routes_grad_to_argmax() {
        let x = leaf(&[1, 1, 2, 2], vec![1.0, 4.0, 3.0, 2.0]);
        let y = maxpool2d(&x, (2, 2)).unwrap();
        assert_eq!(*y.data(), vec![4.0]);
        sum(&y).backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_tie_routes_to_first() {
        let x = leaf(&[1, 1, 1, 2], vec![2.0, 2.0]);
        let y = maxpool2d(&x, (1, 2)).unwrap();
        sum(&y).backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn softmax_ce_uniform_logits_is_ln_k() {
        let x = Tensor::<f64>::constant(&[1, 12], vec![0.0; 12]).unwrap();
        let loss = softmax_cross_entropy(&x, &[3]).unwrap();
        assert!((loss.data()[0] - 12.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_ce_dominant_logit_survives_f32() {
        let x = Tensor::<f32>::constant(&[1, 2], vec![10.0, -10.0]).unwrap();
        let loss = softmax_cross_entropy(&x, &[0]).unwrap();
        let got = loss.data()[0];
        let expect = 2.0611536e-9f32;
        assert!(got > 0.0);
        assert!((got - expect).abs() <= 1e-6 * expect.max(got));
    }

    #[test]
    fn softmax_ce_grad_matches_formula() {
        // grad = (softmax - onehot) / N
        let x = leaf(&[1, 3], vec![1.0, 2.0, 3.0]);
        let loss = softmax_cross_entropy(&x, &[1]).unwrap();
        loss.backward().unwrap();
        let g = x.grad_vec().unwrap();
        let z: f64 = (1.0f64).exp() + (2.0f64).exp() + (3.0f64).exp();
        let p: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|v: &f64| v.exp() / z).collect();
        assert!((g[0] - p[0]).abs() < 1e-12);
        assert!((g[1] - (p[1] - 1.0)).abs() < 1e-12);
        assert!((g[2] - p[2]).abs() < 1e-12);
    }

    #[test]
    fn softmax_ce_mean_over_rows() {
        let x = Tensor::<f64>::constant(&[2, 2], vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let loss = softmax_cross_entropy(&x, &[0, 1]).unwrap();
        assert!((loss.data()[0] - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_ce_rejects_bad_label() {
        let x = Tensor::<f64>::constant(&[1, 3], vec![0.0; 3]).unwrap();
        let r = softmax_cross_entropy(&x, &[3]);
        assert!(matches!(r, Err(crate::error::Error::LabelOutOfRange { label: 3, num_classes: 3 })));
    }

    #[test]
    fn concat0_stacks_and_splits_grads() {
        let a = leaf(&[1, 2], vec![1.0, 2.0]);
        let b = leaf(&[2, 2], vec![3.0, 4.0, 5.0, 6.0]);
        let c = concat0(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.shape(), &[3, 2]);
        assert_eq!(*c.data(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        sum(&c).backward().unwrap();
        assert_eq!(a.grad_vec().unwrap(), vec![1.0, 1.0]);
        assert_eq!(b.grad_vec().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn concat0_rejects_trailing_mismatch() {
        let a = Tensor::<f32>::zeros(&[1, 2]);
        let b = Tensor::<f32>::zeros(&[1, 3]);
        assert!(concat0(&[a, b]).is_err());
    }

    #[test]
    fn reshape_shares_storage_and_passes_grad() {
        let x = leaf(&[2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = reshape(&x, &[3, 2]).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        // same storage, not a copy
        x.data_mut()[0] = 9.0;
        assert_eq!(y.data()[0], 9.0);
        x.data_mut()[0] = 0.0;
        sum(&y).backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn reshape_rejects_wrong_numel() {
        let x = Tensor::<f32>::zeros(&[2, 3]);
        assert!(reshape(&x, &[4, 2]).is_err());
    }

    #[test]
    fn transpose2d_round_trips() {
        let x = leaf(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = transpose2d(&x).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(*y.data(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let z = transpose2d(&y).unwrap();
        assert_eq!(*z.data(), *x.data());
    }

    #[test]
    fn transpose2d_routes_grads() {
        // loss = y[0,1] picked out via mask; dy/dx routes back transposed.
        let x = leaf(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = transpose2d(&x).unwrap();
        let mut mask = vec![0.0; 6];
        mask[1] = 1.0; // y[0,1] = x[1,0]
        let picked = mask_mul(&y, mask).unwrap();
        sum(&picked).backward().unwrap();
        let g = x.grad_vec().unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn mask_mul_zeroes_forward_and_backward() {
        let x = leaf(&[4], vec![1.0, 2.0, 3.0, 4.0]);
        let y = mask_mul(&x, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(*y.data(), vec![1.0, 0.0, 3.0, 0.0]);
        sum(&y).backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn grads_accumulate_across_shared_use() {
        // x used twice: grads add.
        let x = leaf(&[2], vec![1.0, 2.0]);
        let a = mask_mul(&x, vec![1.0, 1.0]).unwrap();
        let b = mask_mul(&x, vec![2.0, 2.0]).unwrap();
        let s = sum(&concat0(&[a, b]).unwrap());
        s.backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![3.0, 3.0]);
    }
}
