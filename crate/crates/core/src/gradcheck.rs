//! Finite-difference verification of gradients.
//!
//! The numeric side uses only forward evaluations (central differences),
//! so it is independent of every backward implementation it is used to
//! check. Checks should run in f64: f32 FD noise swamps the tolerances.
//!
//! ReLU and max-pool are piecewise linear; a probe that straddles a kink
//! produces a bogus numeric derivative. Callers keep inputs away from
//! kinks (gaps larger than the probe step) rather than this module trying
//! to detect them.

use crate::autodiff::{Scalar, Tensor};

/// Probe step and acceptance thresholds. An entry passes when
/// |analytic - numeric| <= atol + rtol * max(|analytic|, |numeric|).
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub eps: f64,
    pub atol: f64,
    pub rtol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { eps: 1e-5, atol: 1e-9, rtol: 1e-5 }
    }
}

/// Outcome of comparing an analytic gradient against numeric probes.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub pass: bool,
    pub checked: usize,
    pub max_abs_diff: f64,
    /// Largest |a-n| / max(|a|,|n|) over entries whose magnitude exceeds
    /// atol; tiny-against-tiny comparisons are judged by atol alone.
    pub max_rel_err: f64,
    /// (flat index, analytic, numeric) for the worst entry by pass margin.
    pub worst: Option<(usize, f64, f64)>,
}

/// Central-difference gradient of `f` at `x`, probed at `indices`.
pub fn numeric_grad(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    indices: &[usize],
    eps: f64,
) -> Vec<f64> {
    let mut buf = x.to_vec();
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let orig = buf[i];
        buf[i] = orig + eps;
        let fp = f(&buf);
        buf[i] = orig - eps;
        let fm = f(&buf);
        buf[i] = orig;
        out.push((fp - fm) / (2.0 * eps));
    }
    out
}

/// Compare analytic gradient entries against numeric ones.
/// `indices[j]` names the flat position `analytic[j]`/`numeric[j]` refer to
/// (for reporting only).
pub fn compare(indices: &[usize], analytic: &[f64], numeric: &[f64], tol: &Tolerance) -> CheckReport {
    assert_eq!(analytic.len(), numeric.len());
    assert_eq!(indices.len(), analytic.len());
    let mut report = CheckReport {
        pass: true,
        checked: analytic.len(),
        max_abs_diff: 0.0,
        max_rel_err: 0.0,
        worst: None,
    };
    let mut worst_margin = f64::NEG_INFINITY;
    for ((&i, &a), &n) in indices.iter().zip(analytic).zip(numeric) {
        let diff = (a - n).abs();
        let scale = a.abs().max(n.abs());
        let allowed = tol.atol + tol.rtol * scale;
        if diff > allowed {
            report.pass = false;
        }
        report.max_abs_diff = report.max_abs_diff.max(diff);
        if scale > tol.atol {
            report.max_rel_err = report.max_rel_err.max(diff / scale);
        }
        let margin = diff - allowed;
        if margin > worst_margin {
            worst_margin = margin;
            report.worst = Some((i, a, n));
        }
    }
    report
}

/// End-to-end check: numeric gradient of `f` at `x` versus `analytic`.
pub fn check(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    indices: &[usize],
    tol: &Tolerance,
) -> CheckReport {
    let numeric = numeric_grad(f, x, indices, tol.eps);
    let picked: Vec<f64> = indices.iter().map(|&i| analytic[i]).collect();
    compare(indices, &picked, &numeric, tol)
}

/// Central-difference probe of selected elements of a live parameter
/// tensor: nudges the tensor's storage in place, re-evaluates `loss`, and
/// restores the original values. `loss` must rebuild its forward pass from
/// the tensor's current contents on every call.
pub fn numeric_grad_param<T: Scalar>(
    tensor: &Tensor<T>,
    indices: &[usize],
    eps: f64,
    loss: &mut dyn FnMut() -> f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let orig = tensor.data()[i];
        tensor.data_mut()[i] = orig + T::from_f64(eps);
        let fp = loss();
        tensor.data_mut()[i] = orig - T::from_f64(eps);
        let fm = loss();
        tensor.data_mut()[i] = orig;
        out.push((fp - fm) / (2.0 * eps));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // f(x) = x0^2 * x1 + sin(x2); df = [2*x0*x1, x0^2, cos(x2)]
    fn f(x: &[f64]) -> f64 {
        x[0] * x[0] * x[1] + x[2].sin()
    }

    #[test]
    fn numeric_grad_matches_known_derivative() {
        let x = [1.5, -2.0, 0.7];
        let g = numeric_grad(&mut |v| f(v), &x, &[0, 1, 2], 1e-5);
        let expect = [2.0 * 1.5 * -2.0, 1.5 * 1.5, 0.7f64.cos()];
        for (got, want) in g.iter().zip(&expect) {
            assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
        }
    }

    #[test]
    fn central_diff_is_exact_on_quadratics() {
        // Second-order truncation vanishes for quadratics.
        let x = [3.0];
        let g = numeric_grad(&mut |v| v[0] * v[0], &x, &[0], 1e-3);
        assert!((g[0] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn check_accepts_correct_gradient() {
        let x = [1.5, -2.0, 0.7];
        let analytic = [2.0 * 1.5 * -2.0, 1.5 * 1.5, 0.7f64.cos()];
        let report = check(&mut |v| f(v), &x, &analytic, &[0, 1, 2], &Tolerance::default());
        assert!(report.pass, "{:?}", report);
        assert!(report.max_rel_err < 1e-6);
    }

    #[test]
    fn check_rejects_wrong_gradient() {
        let x = [1.5, -2.0, 0.7];
        let analytic = [0.0, 1.5 * 1.5, 0.7f64.cos()]; // first entry wrong
        let report = check(&mut |v| f(v), &x, &analytic, &[0, 1, 2], &Tolerance::default());
        assert!(!report.pass);
        let (idx, _, _) = report.worst.unwrap();
        assert_eq!(idx, 0);
    }

    #[test]
    fn tiny_against_tiny_judged_by_atol() {
        let report = compare(&[0], &[1e-12], &[0.0], &Tolerance::default());
        assert!(report.pass);
        assert_eq!(report.max_rel_err, 0.0);
    }

    #[test]
    fn param_probe_restores_values() {
        let t = Tensor::<f64>::leaf(&[2], vec![1.0, 2.0], true).unwrap();
        let g = numeric_grad_param(&t, &[0, 1], 1e-5, &mut || {
            let d = t.data();
            d[0] * d[0] + 3.0 * d[1]
        });
        assert!((g[0] - 2.0).abs() < 1e-9);
        assert!((g[1] - 3.0).abs() < 1e-9);
        assert_eq!(*t.data(), vec![1.0, 2.0]);
    }
}
