//! Image-quality metrics: PSNR and SSIM, computed in f64 regardless of the
//! tensor element type.

use crate::tensor::{Scalar, Tensor};

/// PSNR in dB, with a flag for the capped zero-error case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psnr {
    pub db: f64,
    /// True when MSE was exactly 0 and the value was capped at 200 dB.
    pub capped: bool,
}

/// Cap applied when the reconstruction equals the reference exactly.
pub const PSNR_CAP_DB: f64 = 200.0;

/// `10·log10(peak²/MSE)`. `peak` defaults to the maximum of the reference
/// (the convention is recorded in report headers).
pub fn psnr<T: Scalar>(x: &Tensor<T>, reference: &Tensor<T>, peak: Option<f64>) -> Psnr {
    assert_eq!(x.shape(), reference.shape(), "psnr: shape mismatch");
    let peak = peak.unwrap_or_else(|| reference.max_value().as_f64());
    assert!(peak > 0.0, "psnr: peak must be positive, got {peak}");
    let n = x.data().len() as f64;
    let mse: f64 = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(&a, &b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Psnr { db: PSNR_CAP_DB, capped: true };
    }
    Psnr { db: 10.0 * (peak * peak / mse).log10(), capped: false }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut g = [0.0f64; SSIM_WINDOW];
    let c = (SSIM_WINDOW as f64 - 1.0) / 2.0;
    for (k, slot) in g.iter_mut().enumerate() {
        let r = k as f64 - c;
        *slot = (-(r * r) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let mut win = [0.0f64; SSIM_WINDOW * SSIM_WINDOW];
    let mut total = 0.0;
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            win[i * SSIM_WINDOW + j] = g[i] * g[j];
            total += win[i * SSIM_WINDOW + j];
        }
    }
    for w in &mut win {
        *w /= total;
    }
    win
}

/// Mean structural similarity: 11×11 Gaussian window (σ = 1.5), constants
/// K₁ = 0.01 / K₂ = 0.03, windows fully inside the image. The dynamic range
/// defaults to `max − min` of the reference.
pub fn ssim<T: Scalar>(x: &Tensor<T>, reference: &Tensor<T>, dynamic_range: Option<f64>) -> f64 {
    assert_eq!(x.shape(), reference.shape(), "ssim: shape mismatch");
    assert_eq!(x.shape().len(), 2, "ssim expects [H,W] images");
    let (h, w) = (x.shape()[0], x.shape()[1]);
    assert!(
        h >= SSIM_WINDOW && w >= SSIM_WINDOW,
        "ssim needs images of at least {SSIM_WINDOW}×{SSIM_WINDOW}"
    );
    let mut dr = dynamic_range
        .unwrap_or_else(|| (reference.max_value() - reference.min_value()).as_f64());
    if dr == 0.0 {
        dr = 1.0;
    }
    let c1 = (SSIM_K1 * dr) * (SSIM_K1 * dr);
    let c2 = (SSIM_K2 * dr) * (SSIM_K2 * dr);
    let win = gaussian_window();
    let xs: Vec<f64> = x.data().iter().map(|v| v.as_f64()).collect();
    let rs: Vec<f64> = reference.data().iter().map(|v| v.as_f64()).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for oi in 0..=(h - SSIM_WINDOW) {
        for oj in 0..=(w - SSIM_WINDOW) {
            let (mut mx, mut mr, mut xx, mut rr, mut xr) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ki in 0..SSIM_WINDOW {
                for kj in 0..SSIM_WINDOW {
                    let wgt = win[ki * SSIM_WINDOW + kj];
                    let a = xs[(oi + ki) * w + oj + kj];
                    let b = rs[(oi + ki) * w + oj + kj];
                    mx += wgt * a;
                    mr += wgt * b;
                    xx += wgt * a * a;
                    rr += wgt * b * b;
                    xr += wgt * a * b;
                }
            }
            let var_x = xx - mx * mx;
            let var_r = rr - mr * mr;
            let cov = xr - mx * mr;
            let num = (2.0 * mx * mr + c1) * (2.0 * cov + c2);
            let den = (mx * mx + mr * mr + c1) * (var_x + var_r + c2);
            total += num / den;
            count += 1;
        }
    }
    total / count as f64
}
