//! Total-variation reconstruction solved with the Chambolle-Pock
//! primal-dual iteration.
//!
//! The saddle problem is min_x f(Kx) + g(x) with K = (A, ∇),
//! f(s, p) = ½‖s − y‖² + λ‖p‖₂,₁ and g the nonnegativity indicator
//! (or zero when disabled). Both prox maps are closed-form, and the dual
//! of the TV term is a per-pixel projection onto the λ-ball.

use crate::error::{Error, Result};
use crate::tape::LinOp;
use crate::tensor::{Scalar, Tensor};
use crate::tomo::{operator_norm, Filter, RadonTransform};

/// Chambolle-Pock solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CpConfig {
    /// TV weight λ.
    pub lambda: f64,
    pub max_iters: usize,
    /// Dual step; `None` → 0.99/‖K‖ from a power-method estimate.
    pub sigma: Option<f64>,
    /// Primal step; `None` → 0.99/‖K‖.
    pub tau: Option<f64>,
    /// Over-relaxation γ ∈ [0, 1].
    pub gamma: f64,
    /// Clamp the primal iterate at zero each step.
    pub nonneg: bool,
    /// Early exit when ‖x⁺−x‖/‖x‖ falls below this.
    pub early_exit_rel: f64,
}

impl Default for CpConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            max_iters: 500,
            sigma: None,
            tau: None,
            gamma: 1.0,
            nonneg: true,
            early_exit_rel: 1e-5,
        }
    }
}

impl CpConfig {
    pub fn validate(&self, op_norm: f64) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Config("tv: lambda must be ≥ 0".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("tv: gamma must be in [0, 1]".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("tv: max_iters must be ≥ 1".into()));
        }
        if let (Some(s), Some(t)) = (self.sigma, self.tau) {
            if s <= 0.0 || t <= 0.0 {
                return Err(Error::Config("tv: step sizes must be positive".into()));
            }
            if s * t * op_norm * op_norm > 1.0 + 1e-12 {
                return Err(Error::Config(format!(
                    "tv: sigma·tau·‖K‖² = {:.4} violates the convergence condition ≤ 1",
                    s * t * op_norm * op_norm
                )));
            }
        }
        Ok(())
    }
}

/// Forward differences with Neumann boundary: output `[2, H, W]`, channel 0
/// along rows, channel 1 along columns; the last row/column of each channel
/// is zero.
pub fn grad2d<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (x.shape()[0], x.shape()[1]);
    let xd = x.data();
    let mut out = Tensor::zeros(&[2, h, w]);
    let od = out.data_mut();
    for i in 0..h {
        for j in 0..w {
            if i + 1 < h {
                od[i * w + j] = xd[(i + 1) * w + j] - xd[i * w + j];
            }
            if j + 1 < w {
                od[h * w + i * w + j] = xd[i * w + j + 1] - xd[i * w + j];
            }
        }
    }
    out
}

/// Negative adjoint of [`grad2d`]: ⟨grad2d(x), p⟩ = −⟨x, div2d(p)⟩.
pub fn div2d<T: Scalar>(p: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (p.shape()[1], p.shape()[2]);
    let pd = p.data();
    let mut out = Tensor::zeros(&[h, w]);
    let od = out.data_mut();
    for i in 0..h {
        for j in 0..w {
            let mut v = T::zero();
            if i + 1 < h {
                v += pd[i * w + j];
            }
            if i >= 1 {
                v -= pd[(i - 1) * w + j];
            }
            if j + 1 < w {
                v += pd[h * w + i * w + j];
            }
            if j >= 1 {
                v -= pd[h * w + i * w + j - 1];
            }
            od[i * w + j] = v;
        }
    }
    out
}

/// Per-pixel projection of a `[2, H, W]` field onto the Euclidean ball of
/// radius `lambda`: `p ← p / max(1, ‖p‖₂/λ)`.
pub fn project_ball<T: Scalar>(p: &mut Tensor<T>, lambda: T) {
    let (h, w) = (p.shape()[1], p.shape()[2]);
    let hw = h * w;
    if lambda == T::zero() {
        for v in p.data_mut() {
            *v = T::zero();
        }
        return;
    }
    let pd = p.data_mut();
    for k in 0..hw {
        let norm = (pd[k] * pd[k] + pd[hw + k] * pd[hw + k]).sqrt();
        if norm > lambda {
            let scale = lambda / norm;
            pd[k] *= scale;
            pd[hw + k] *= scale;
        }
    }
}

/// Primal objective ½‖Ax−y‖² + λ·Σ‖(∇x)_ij‖₂.
pub fn tv_objective<T: Scalar>(
    op: &RadonTransform<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    lambda: f64,
) -> f64 {
    let r = op.forward(x).zip(y, |a, b| a - b);
    let data_term = 0.5 * r.norm_sq().as_f64();
    let g = grad2d(x);
    let hw = x.data().len();
    let gd = g.data();
    let mut tv = 0.0;
    for k in 0..hw {
        tv += (gd[k] * gd[k] + gd[hw + k] * gd[hw + k]).sqrt().as_f64();
    }
    data_term + lambda * tv
}

/// Output of [`tv_reconstruct`].
#[derive(Debug, Clone)]
pub struct TvResult<T> {
    pub image: Tensor<T>,
    /// Primal objective per iteration (index 0 = FBP initialization).
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// TV-regularized reconstruction, initialized at the Hann-filtered FBP.
pub fn tv_reconstruct<T: Scalar>(
    op: &RadonTransform<T>,
    y: &Tensor<T>,
    cfg: &CpConfig,
) -> Result<TvResult<T>> {
    let g = op.geometry();
    if y.shape() != [g.num_angles(), g.num_detectors] {
        return Err(Error::ShapeMismatch(format!(
            "tv: sinogram shape {:?} does not match geometry",
            y.shape()
        )));
    }
    let k_op = TvStack { radon: op };
    let norm_k = operator_norm(&k_op, 50, 0x7ce).as_f64();
    cfg.validate(norm_k)?;
    let sigma = T::of_f64(cfg.sigma.unwrap_or(0.99 / norm_k));
    let tau = T::of_f64(cfg.tau.unwrap_or(0.99 / norm_k));
    let gamma = T::of_f64(cfg.gamma);
    let lambda = T::of_f64(cfg.lambda);

    let mut x = op.fbp(y, Filter::Hann);
    if cfg.nonneg {
        for v in x.data_mut() {
            *v = v.max(T::zero());
        }
    }
    let mut x_bar = x.clone();
    let mut q_data: Tensor<T> = Tensor::zeros(&[g.num_angles(), g.num_detectors]);
    let mut q_tv: Tensor<T> = Tensor::zeros(&[2, g.image_size.0, g.image_size.1]);
    let mut trace = vec![tv_objective(op, &x, y, cfg.lambda)];
    let mut iterations = 0;

    for it in 0..cfg.max_iters {
        // dual ascent on both components of f*
        let ax = op.forward(&x_bar);
        for ((q, &a), &yv) in q_data.data_mut().iter_mut().zip(ax.data()).zip(y.data()) {
            // prox of σ·(½‖·−y‖²)* is (q + σ(a − 0) − σy)/(1+σ)
            *q = (*q + sigma * a - sigma * yv) / (T::one() + sigma);
        }
        let gx = grad2d(&x_bar);
        for (q, &v) in q_tv.data_mut().iter_mut().zip(gx.data()) {
            *q += sigma * v;
        }
        project_ball(&mut q_tv, lambda);

        // primal descent
        let mut kt = op.adjoint(&q_data);
        let div = div2d(&q_tv);
        for (k, &d) in kt.data_mut().iter_mut().zip(div.data()) {
            *k -= d;
        }
        let x_prev = x.clone();
        for (xv, &k) in x.data_mut().iter_mut().zip(kt.data()) {
            *xv -= tau * k;
            if cfg.nonneg {
                *xv = xv.max(T::zero());
            }
        }

        // over-relaxation
        for ((b, &xn), &xp) in x_bar.data_mut().iter_mut().zip(x.data()).zip(x_prev.data()) {
            *b = xn + gamma * (xn - xp);
        }

        iterations = it + 1;
        trace.push(tv_objective(op, &x, y, cfg.lambda));

        let diff = x.zip(&x_prev, |a, b| a - b).norm().as_f64();
        let base = x_prev.norm().as_f64().max(1e-12);
        if diff / base < cfg.early_exit_rel {
            break;
        }
    }
    Ok(TvResult { image: x, objective_trace: trace, iterations })
}

/// K = (A, ∇) flattened into one vector so the shared power method applies.
struct TvStack<'a, T> {
    radon: &'a RadonTransform<T>,
}

impl<T: Scalar> LinOp<T> for TvStack<'_, T> {
    fn in_shape(&self) -> Vec<usize> {
        self.radon.in_shape()
    }

    fn out_shape(&self) -> Vec<usize> {
        let g = self.radon.geometry();
        vec![g.n_rays() + 2 * g.n_pixels()]
    }

    fn apply(&self, x: &Tensor<T>) -> Tensor<T> {
        let s = self.radon.forward(x);
        let p = grad2d(x);
        let mut out = Vec::with_capacity(s.data().len() + p.data().len());
        out.extend_from_slice(s.data());
        out.extend_from_slice(p.data());
        let n = out.len();
        Tensor::from_vec(&[n], out).expect("length matches")
    }

    fn apply_adjoint(&self, v: &Tensor<T>) -> Tensor<T> {
        let g = self.radon.geometry();
        let (h, w) = g.image_size;
        let n_rays = g.n_rays();
        let s = Tensor::from_vec(&[g.num_angles(), g.num_detectors], v.data()[..n_rays].to_vec())
            .expect("sino part");
        let p = Tensor::from_vec(&[2, h, w], v.data()[n_rays..].to_vec()).expect("grad part");
        let at = self.radon.adjoint(&s);
        let dv = div2d(&p);
        at.zip(&dv, |a, d| a - d)
    }
}
