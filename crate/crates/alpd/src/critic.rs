//! Scoring network for the Wasserstein distance estimate: four cascaded
//! convolution → instance-norm → leaky-ReLU blocks, global average pooling,
//! and a single linear head to ℝ.
//!
//! Strides are (2, 2, 2, 1) with the final block padded to 2: three
//! downsamplings, then a size-preserving-plus-one block, keep the
//! pre-pooling feature map at least 2×2 for any input of 16 pixels and up,
//! so instance normalization always sees a nondegenerate window.
//! Convolutions carry no bias — the normalization would cancel it.
//! Instance norm uses no learned affine: a free per-channel scale fights
//! the Lipschitz penalty.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn;
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;
const KERNEL: usize = 4;
const STRIDES: [usize; 4] = [2, 2, 2, 1];
const PADS: [usize; 4] = [1, 1, 1, 2];

/// Architecture hyperparameters of the critic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticConfig {
    /// Expected input image size (rows, columns).
    pub input_size: [usize; 2],
    /// Channel widths of the four blocks.
    pub widths: [usize; 4],
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self { input_size: [64, 64], widths: [32, 64, 128, 256] }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_size.iter().any(|&s| s < 16) {
            return Err(Error::Config(
                "critic: input must be at least 16×16 so the final feature map stays ≥ 2×2"
                    .into(),
            ));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("critic: channel widths must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Learnable weights of the critic.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticParams<T> {
    pub config: CriticConfig,
    /// Four conv kernels `[c_out, c_in, 4, 4]`, no biases.
    pub block_weights: Vec<Tensor<T>>,
    /// Linear head over pooled features.
    pub head_weight: Tensor<T>,
    pub head_bias: Tensor<T>,
}

impl<T: Scalar> CriticParams<T> {
    pub fn init(config: &CriticConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let w = config.widths;
        let chans = [1, w[0], w[1], w[2], w[3]];
        let block_weights = (0..4)
            .map(|k| nn::conv_init(chans[k + 1], chans[k], KERNEL, rng))
            .collect();
        Ok(Self {
            config: config.clone(),
            block_weights,
            head_weight: nn::he_uniform(&[w[3]], w[3], rng),
            head_bias: Tensor::scalar(T::zero()),
        })
    }

    /// Exact learnable scalar count:
    /// Σ_k c_{k-1}·c_k·4² (convs, no bias) + c_4 + 1 (head).
    pub fn param_count(config: &CriticConfig) -> usize {
        let w = config.widths;
        let chans = [1, w[0], w[1], w[2], w[3]];
        let convs: usize = (0..4).map(|k| chans[k] * chans[k + 1] * KERNEL * KERNEL).sum();
        convs + w[3] + 1
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out: Vec<&Tensor<T>> = self.block_weights.iter().collect();
        out.push(&self.head_weight);
        out.push(&self.head_bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = self.block_weights.iter_mut().collect();
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn param_names() -> Vec<String> {
        let mut out: Vec<String> =
            (1..=4).map(|k| format!("critic.block{k}.conv.weight")).collect();
        out.push("critic.head.weight".into());
        out.push("critic.head.bias".into());
        out
    }

    /// Reassemble from tensors in [`Self::params`] order, validating every
    /// shape against the configuration.
    pub fn from_tensors(config: &CriticConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let names = Self::param_names();
        if tensors.len() != names.len() {
            return Err(Error::ShapeMismatch(format!(
                "critic: expected {} parameter tensors, got {}",
                names.len(),
                tensors.len()
            )));
        }
        let w = config.widths;
        let chans = [1, w[0], w[1], w[2], w[3]];
        let mut shapes: Vec<Vec<usize>> =
            (0..4).map(|k| vec![chans[k + 1], chans[k], KERNEL, KERNEL]).collect();
        shapes.push(vec![w[3]]);
        shapes.push(vec![]);
        let mut checked = Vec::with_capacity(tensors.len());
        for ((t, name), shape) in tensors.into_iter().zip(names).zip(&shapes) {
            if t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "critic: {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            checked.push(t);
        }
        let head_bias = checked.pop().expect("count checked");
        let head_weight = checked.pop().expect("count checked");
        Ok(Self { config: config.clone(), block_weights: checked, head_weight, head_bias })
    }
}

/// Tape handles for registered critic parameters.
pub struct CriticVars {
    pub blocks: Vec<Var>,
    pub head_weight: Var,
    pub head_bias: Var,
}

impl CriticVars {
    /// Flat handle list matching [`CriticParams::params`] order.
    pub fn flat(&self) -> Vec<Var> {
        let mut out = self.blocks.clone();
        out.push(self.head_weight);
        out.push(self.head_bias);
        out
    }
}

pub fn register_critic<T: Scalar>(
    tape: &Tape<T>,
    params: &CriticParams<T>,
    trainable: bool,
) -> CriticVars {
    let put = |t: &Tensor<T>| {
        if trainable {
            tape.param(t.clone())
        } else {
            tape.leaf(t.clone())
        }
    };
    CriticVars {
        blocks: params.block_weights.iter().map(put).collect(),
        head_weight: put(&params.head_weight),
        head_bias: put(&params.head_bias),
    }
}

/// Score one image (a `[H, W]` variable on the tape). Differentiable with
/// respect to both the input and the registered parameters.
pub fn critic_forward<T: Scalar>(
    tape: &Tape<T>,
    config: &CriticConfig,
    vars: &CriticVars,
    x: Var,
) -> Result<Var> {
    let [h, w] = config.input_size;
    let shape = tape.shape(x);
    if shape != [h, w] {
        return Err(Error::ShapeMismatch(format!(
            "critic: input shape {shape:?} does not match configured {:?}",
            config.input_size
        )));
    }
    let mut t = tape.reshape(x, &[1, h, w]);
    for (k, ((&weight, stride), pad)) in vars.blocks.iter().zip(STRIDES).zip(PADS).enumerate() {
        t = tape.conv2d(t, weight, stride, pad);
        // leaky-ReLU compares against zero and comparisons with NaN are
        // false, so divergence must be caught at the convolution output
        if !tape.value(t).all_finite() {
            return Err(Error::Diverged(format!(
                "critic: non-finite activation after block {} convolution",
                k + 1
            )));
        }
        t = nn::instance_norm(tape, t);
        if !tape.value(t).all_finite() {
            return Err(Error::Diverged(format!(
                "critic: non-finite activation after block {} normalization",
                k + 1
            )));
        }
        t = nn::leaky_relu(tape, t, T::of_f64(LEAKY_SLOPE));
    }
    let pooled = nn::global_avg_pool(tape, t);
    Ok(nn::linear_head(tape, pooled, vars.head_weight, vars.head_bias))
}

/// Score with fixed parameters, no gradients kept.
pub fn score<T: Scalar>(params: &CriticParams<T>, x: &Tensor<T>) -> Result<T> {
    let tape = Tape::new();
    let vars = register_critic(&tape, params, false);
    let xv = tape.leaf(x.clone());
    let s = critic_forward(&tape, &params.config, &vars, xv)?;
    Ok(tape.item(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Real;

    fn micro_config() -> CriticConfig {
        CriticConfig { input_size: [16, 16], widths: [3, 4, 5, 6] }
    }

    fn random_image(size: [usize; 2], seed: u64) -> Tensor<Real> {
        let mut rng = crate::seeds::rng(seed, "img", 0);
        Tensor::from_fn(&[size[0], size[1]], |_| {
            Real::of_f64(crate::data::standard_normal(&mut rng))
        })
    }

    #[test]
    fn score_is_scalar_for_every_configured_size() {
        for size in [[16, 16], [24, 16], [32, 32], [64, 64]] {
            let cfg = CriticConfig { input_size: size, widths: [2, 3, 3, 4] };
            let mut rng = crate::seeds::rng(31, "init", 0);
            let params = CriticParams::<Real>::init(&cfg, &mut rng).unwrap();
            let s = score(&params, &random_image(size, 32)).unwrap();
            assert!(s.is_finite(), "score {s} for {size:?}");
        }
    }

    #[test]
    fn identical_inputs_score_identically() {
        let cfg = micro_config();
        let mut rng = crate::seeds::rng(33, "init", 0);
        let params = CriticParams::<Real>::init(&cfg, &mut rng).unwrap();
        let x = random_image([16, 16], 34);
        let a = score(&params, &x).unwrap();
        let b = score(&params, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn score_invariant_under_tape_composition() {
        // scoring an image alone must equal scoring it alongside other work
        // on a shared tape — no hidden cross-talk between evaluations
        let cfg = micro_config();
        let mut rng = crate::seeds::rng(35, "init", 0);
        let params = CriticParams::<Real>::init(&cfg, &mut rng).unwrap();
        let x = random_image([16, 16], 36);
        let other = random_image([16, 16], 37);

        let alone = score(&params, &x).unwrap();

        let tape = Tape::new();
        let vars = register_critic(&tape, &params, false);
        let o = tape.leaf(other);
        let _ = critic_forward(&tape, &cfg, &vars, o).unwrap();
        let xv = tape.leaf(x);
        let batched = tape.item(critic_forward(&tape, &cfg, &vars, xv).unwrap());
        assert_eq!(alone, batched);
    }

    #[test]
    fn mismatched_input_shape_rejected() {
        let cfg = micro_config();
        let mut rng = crate::seeds::rng(38, "init", 0);
        let params = CriticParams::<Real>::init(&cfg, &mut rng).unwrap();
        let err = score(&params, &random_image([32, 32], 39)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn non_finite_activation_reports_block() {
        let cfg = micro_config();
        let mut rng = crate::seeds::rng(40, "init", 0);
        let mut params = CriticParams::<Real>::init(&cfg, &mut rng).unwrap();
        params.block_weights[2].data_mut()[0] = Real::NAN;
        let err = score(&params, &random_image([16, 16], 41)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("block 3"), "unexpected message: {msg}");
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn param_count_matches_hand_formula_and_tensors() {
        // desk default: 1·32·16 + 32·64·16 + 64·128·16 + 128·256·16
        //               + 256 + 1 = 688 897
        assert_eq!(CriticParams::<Real>::param_count(&CriticConfig::default()), 688_897);

        let cfg = micro_config();
        let mut rng = crate::seeds::rng(42, "init", 0);
        let params = CriticParams::<Real>::init(&cfg, &mut rng).unwrap();
        let total: usize = params.params().iter().map(|t| t.len()).sum();
        assert_eq!(total, CriticParams::<Real>::param_count(&cfg));
        assert_eq!(CriticParams::<Real>::param_names().len(), params.params().len());

        // reference-scale comparison (widths doubled): reported, not asserted
        let paper = CriticConfig { input_size: [64, 64], widths: [64, 128, 256, 512] };
        println!(
            "doubled-width configuration parameter count: {} (published reference ≈ 2.76 M)",
            CriticParams::<Real>::param_count(&paper)
        );
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        // 64-bit for finite-difference stability; the f32 path is compared
        // against the f64 gradients afterwards
        let cfg = micro_config();
        let mut rng = crate::seeds::rng(43, "init", 0);
        let params = CriticParams::<f64>::init(&cfg, &mut rng).unwrap();
        let mut rng = crate::seeds::rng(43, "img", 1);
        let x: Tensor<f64> = Tensor::from_fn(&[16, 16], |_| crate::data::standard_normal(&mut rng));

        let tape = Tape::new();
        let vars = register_critic(&tape, &params, false);
        let xv = tape.param(x.clone());
        let s = critic_forward(&tape, &cfg, &vars, xv).unwrap();
        tape.backward(s);
        let grad = tape.grad_of(xv).unwrap();

        let score_of = |img: &Tensor<f64>| -> f64 {
            let tape = Tape::new();
            let vars = register_critic(&tape, &params, false);
            let xv = tape.leaf(img.clone());
            tape.item(critic_forward(&tape, &cfg, &vars, xv).unwrap())
        };

        let mut rng = crate::seeds::rng(43, "pick", 2);
        let mut worst: f64 = 0.0;
        for _ in 0..60 {
            let idx = rng.gen_range(0..x.len());
            let eps = 1e-5;
            let mut plus = x.clone();
            plus.data_mut()[idx] += eps;
            let mut minus = x.clone();
            minus.data_mut()[idx] -= eps;
            let fd = (score_of(&plus) - score_of(&minus)) / (2.0 * eps);
            let ad = grad.data()[idx];
            let rel = (fd - ad).abs() / fd.abs().max(ad.abs()).max(1e-8);
            worst = worst.max(rel);
            assert!(rel < 1e-3, "idx {idx}: fd {fd:.10} vs ad {ad:.10} rel {rel:.2e}");
        }
        println!("worst input-gradient error: {worst:.2e}");

        // f32 agreement on the same instance
        let params32 = CriticParams::<Real> {
            config: params.config.clone(),
            block_weights: params.block_weights.iter().map(|t| t.cast()).collect(),
            head_weight: params.head_weight.cast(),
            head_bias: params.head_bias.cast(),
        };
        let tape32 = Tape::new();
        let vars32 = register_critic(&tape32, &params32, false);
        let xv32 = tape32.param(x.cast::<Real>());
        let s32 = critic_forward(&tape32, &cfg, &vars32, xv32).unwrap();
        tape32.backward(s32);
        let grad32 = tape32.grad_of(xv32).unwrap();
        let scale = grad.norm().max(1e-12);
        for k in 0..grad.len() {
            let diff = (grad32.data()[k] as f64 - grad.data()[k]).abs();
            assert!(diff / scale < 1e-3, "coordinate {k}: f32 {} vs f64 {}", grad32.data()[k], grad.data()[k]);
        }
    }

    #[test]
    fn parameter_gradients_flow_to_every_group() {
        let cfg = micro_config();
        let mut rng = crate::seeds::rng(44, "init", 0);
        let params = CriticParams::<Real>::init(&cfg, &mut rng).unwrap();
        let x = random_image([16, 16], 45);
        let tape = Tape::new();
        let vars = register_critic(&tape, &params, true);
        let xv = tape.leaf(x);
        let s = critic_forward(&tape, &cfg, &vars, xv).unwrap();
        tape.backward(s);
        for (name, v) in CriticParams::<Real>::param_names().iter().zip(vars.flat()) {
            let g = tape.grad_of(v).unwrap_or_else(|| panic!("no gradient for {name}"));
            assert!(g.data().iter().any(|&e| e != 0.0), "all-zero gradient for {name}");
        }
    }
}
