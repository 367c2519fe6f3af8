//! Gradient-checking utilities: central finite differences and relative
//! error summaries. Used by the unit tests and the acceptance suite.

use crate::tensor::Scalar;

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn fd_gradient<T: Scalar>(f: impl Fn(&[T]) -> T, x: &[T], h: f64) -> Vec<T> {
    let h = T::of_f64(h);
    let two_h = h + h;
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = buf[i];
            buf[i] = orig + h;
            let fp = f(&buf);
            buf[i] = orig - h;
            let fm = f(&buf);
            buf[i] = orig;
            (fp - fm) / two_h
        })
        .collect()
}

/// Worst-case relative error between two gradient vectors:
/// max_i |a_i − b_i| / max(|a_i|, |b_i|, floor). The floor keeps
/// near-zero entries from dominating with roundoff noise.
pub fn max_rel_err<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient length mismatch");
    let floor = 1e-6;
    a.iter()
        .zip(b)
        .map(|(&ai, &bi)| {
            let (ai, bi) = (ai.as_f64(), bi.as_f64());
            (ai - bi).abs() / ai.abs().max(bi.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}

/// Finite-difference gradient w.r.t. a subset of coordinates, for large
/// parameter vectors where probing every coordinate is too slow. Returns
/// `(analytic_subset, fd_subset)` ready for [`max_rel_err`].
pub fn fd_gradient_sampled<T: Scalar>(
    f: impl Fn(&[T]) -> T,
    x: &[T],
    analytic: &[T],
    indices: &[usize],
    h: f64,
) -> (Vec<T>, Vec<T>) {
    let h = T::of_f64(h);
    let two_h = h + h;
    let mut buf = x.to_vec();
    let mut fd = Vec::with_capacity(indices.len());
    let mut an = Vec::with_capacity(indices.len());
    for &i in indices {
        let orig = buf[i];
        buf[i] = orig + h;
        let fp = f(&buf);
        buf[i] = orig - h;
        let fm = f(&buf);
        buf[i] = orig;
        fd.push((fp - fm) / two_h);
        an.push(analytic[i]);
    }
    (an, fd)
}
