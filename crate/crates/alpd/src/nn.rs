//! Neural-network layers as tape compositions, plus parameter
//! initialization.
//!
//! Layers are free functions that record primitives on a [`Tape`]; the
//! network structs in [`crate::lpd`] and [`crate::critic`] own the parameter
//! tensors and register them per evaluation. Because every layer is built
//! from tape primitives, all layers are differentiable to second order
//! without extra code.

use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

/// Stabilizer used in instance-norm and Adam denominators.
pub const EPS_NUM: f64 = 1e-8;

/// He-uniform initialization: Uniform(−√(6/fan_in), √(6/fan_in)).
pub fn he_uniform<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| T::of_f64(rng.gen_range(-bound..bound)))
}

/// Convolution kernel initialization for a `[Co,Ci,kh,kw]` shape.
pub fn conv_init<T: Scalar>(
    c_out: usize,
    c_in: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Tensor<T> {
    he_uniform(&[c_out, c_in, k, k], c_in * k * k, rng)
}

/// Convolution layer: cross-correlation plus optional per-channel bias.
pub fn conv_layer<T: Scalar>(
    tape: &Tape<T>,
    x: Var,
    weight: Var,
    bias: Option<Var>,
    stride: usize,
    pad: usize,
) -> Var {
    let y = tape.conv2d(x, weight, stride, pad);
    match bias {
        Some(b) => tape.add_chan(y, b),
        None => y,
    }
}

/// Parametric ReLU with a learnable per-channel negative slope:
/// `max(x,0) + slope·min(x,0)`.
pub fn prelu<T: Scalar>(tape: &Tape<T>, x: Var, slope: Var) -> Var {
    let pos = tape.max0(x);
    let neg = tape.mul_chan(tape.min0(x), slope);
    tape.add(pos, neg)
}

/// Leaky ReLU with a fixed negative slope.
pub fn leaky_relu<T: Scalar>(tape: &Tape<T>, x: Var, negative_slope: T) -> Var {
    let pos = tape.max0(x);
    let neg = tape.scale(tape.min0(x), negative_slope);
    tape.add(pos, neg)
}

/// Instance normalization without affine parameters: each channel of a
/// `[C,H,W]` tensor is shifted to zero mean and scaled to unit variance,
/// with `EPS_NUM` inside the square root.
pub fn instance_norm<T: Scalar>(tape: &Tape<T>, x: Var) -> Var {
    let shape = tape.shape(x);
    assert_eq!(shape.len(), 3, "instance_norm expects [C,H,W]");
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let n = h * w;
    assert!(n >= 2, "instance_norm needs at least two spatial elements");
    let inv_n = T::of_f64(1.0 / n as f64);
    let mean = tape.scale(tape.sum_hw(x), inv_n);
    let centered = tape.sub(x, tape.broadcast_hw(mean, h, w));
    let var = tape.scale(tape.sum_hw(tape.mul(centered, centered)), inv_n);
    let eps = tape.leaf(Tensor::full(&[c], T::of_f64(EPS_NUM)));
    let std = tape.sqrt(tape.add(var, eps));
    // std ≥ √ε > floor, so the floored reciprocal is exact here; the floor
    // only matters for bare square roots elsewhere.
    let inv_std = tape.recip_floor(std, T::of_f64(1e-30));
    tape.mul_chan(centered, inv_std)
}

/// Instance normalization followed by a learnable per-channel affine map.
pub fn instance_norm_affine<T: Scalar>(tape: &Tape<T>, x: Var, scale: Var, shift: Var) -> Var {
    let normed = instance_norm(tape, x);
    tape.add_chan(tape.mul_chan(normed, scale), shift)
}

/// Mean over the spatial dimensions: `[C,H,W] → [C]`.
pub fn global_avg_pool<T: Scalar>(tape: &Tape<T>, x: Var) -> Var {
    let shape = tape.shape(x);
    assert_eq!(shape.len(), 3, "global_avg_pool expects [C,H,W]");
    let n = shape[1] * shape[2];
    tape.scale(tape.sum_hw(x), T::of_f64(1.0 / n as f64))
}

/// Scalar head: `⟨w, features⟩ + b` for `w, features: [C]`, `b` rank-0.
pub fn linear_head<T: Scalar>(tape: &Tape<T>, features: Var, weight: Var, bias: Var) -> Var {
    tape.add(tape.sum_all(tape.mul(weight, features)), bias)
}

/// Sum of squares of all elements.
pub fn sum_sq<T: Scalar>(tape: &Tape<T>, x: Var) -> Var {
    tape.sum_all(tape.mul(x, x))
}

/// Squared L2 distance `‖a − b‖²` (sum over all elements).
pub fn dist_sq<T: Scalar>(tape: &Tape<T>, a: Var, b: Var) -> Var {
    let d = tape.sub(a, b);
    sum_sq(tape, d)
}

/// Euclidean norm of all elements.
pub fn l2_norm<T: Scalar>(tape: &Tape<T>, x: Var) -> Var {
    tape.sqrt(sum_sq(tape, x))
}
