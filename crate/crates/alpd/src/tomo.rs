//! Parallel-beam tomography: forward projector, exact-transpose adjoint,
//! filtered back-projection, and operator-norm estimation.
//!
//! The projector is ray-driven: each ray is sampled at step
//! `0.5·min(pixel_spacing, detector_spacing)` and every sample deposits a
//! bilinear 4-pixel stencil times the step length into the system matrix.
//! The matrix is precomputed in CSR form (rows = rays) together with its
//! transpose (rows = pixels), so `apply_adjoint` is the exact numerical
//! transpose of `apply` and both parallelize over disjoint output rows —
//! results are bitwise independent of thread count.

use crate::error::{Error, Result};
use crate::tape::LinOp;
use crate::tensor::{Scalar, Tensor};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Acquisition geometry for a parallel-beam scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    /// (H, W) in pixels.
    pub image_size: (usize, usize),
    /// Physical pixel edge length.
    pub pixel_spacing: f64,
    /// Projection angles in radians, strictly increasing in [0, π).
    pub angles: Vec<f64>,
    pub num_detectors: usize,
    /// Physical spacing between detector centers.
    pub detector_spacing: f64,
}

impl Geometry {
    /// Uniformly spaced angles `k·π/num_angles`.
    pub fn new(
        image_size: (usize, usize),
        pixel_spacing: f64,
        num_angles: usize,
        num_detectors: usize,
        detector_spacing: f64,
    ) -> Result<Self> {
        let angles = (0..num_angles)
            .map(|k| k as f64 * std::f64::consts::PI / num_angles.max(1) as f64)
            .collect();
        let g = Self { image_size, pixel_spacing, angles, num_detectors, detector_spacing };
        g.validate()?;
        Ok(g)
    }

    /// Desk-scale default: 64×64 image, 60 angles, 96 detectors, unit spacings.
    pub fn desk_default() -> Self {
        Self::new((64, 64), 1.0, 60, 96, 1.0).expect("default geometry is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image_size;
        if h == 0 || w == 0 {
            return Err(Error::Config("geometry: image_size must be positive".into()));
        }
        if self.angles.is_empty() || self.num_detectors == 0 {
            return Err(Error::Config(
                "geometry: need at least one angle and one detector".into(),
            ));
        }
        if !(self.pixel_spacing > 0.0) || !(self.detector_spacing > 0.0) {
            return Err(Error::Config("geometry: spacings must be positive".into()));
        }
        let increasing = self.angles.windows(2).all(|p| p[0] < p[1]);
        let in_range = self
            .angles
            .iter()
            .all(|&a| (0.0..std::f64::consts::PI).contains(&a));
        if !increasing || !in_range {
            return Err(Error::Config(
                "geometry: angles must be strictly increasing in [0, π)".into(),
            ));
        }
        Ok(())
    }

    /// Non-fatal issues worth surfacing to the user.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.detector_span() < self.image_diagonal() {
            out.push(format!(
                "detector span {:.2} is narrower than the image diagonal {:.2}; \
                 outer image regions are truncated",
                self.detector_span(),
                self.image_diagonal()
            ));
        }
        if self.num_angles() < 2 {
            out.push("fewer than 2 projection angles; reconstruction is severely ill-posed".into());
        }
        out
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.image_size.0 * self.image_size.1
    }

    pub fn n_rays(&self) -> usize {
        self.num_angles() * self.num_detectors
    }

    /// Physical offset of detector `d` from the rotation center.
    pub fn detector_offset(&self, d: usize) -> f64 {
        (d as f64 - (self.num_detectors as f64 - 1.0) / 2.0) * self.detector_spacing
    }

    pub fn detector_span(&self) -> f64 {
        self.num_detectors as f64 * self.detector_spacing
    }

    pub fn image_diagonal(&self) -> f64 {
        let (h, w) = self.image_size;
        (h as f64).hypot(w as f64) * self.pixel_spacing
    }
}

/// Serializable geometry description used in configs and dataset manifests;
/// angles are implied uniform in [0, π).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryParams {
    pub image_size: [usize; 2],
    pub pixel_spacing: f64,
    pub num_angles: usize,
    pub num_detectors: usize,
    pub detector_spacing: f64,
}

impl GeometryParams {
    pub fn to_geometry(&self) -> Result<Geometry> {
        Geometry::new(
            (self.image_size[0], self.image_size[1]),
            self.pixel_spacing,
            self.num_angles,
            self.num_detectors,
            self.detector_spacing,
        )
    }

    pub fn from_geometry(g: &Geometry) -> Self {
        Self {
            image_size: [g.image_size.0, g.image_size.1],
            pixel_spacing: g.pixel_spacing,
            num_angles: g.num_angles(),
            num_detectors: g.num_detectors,
            detector_spacing: g.detector_spacing,
        }
    }
}

/// An image sample `x ∈ 𝕏` with shape `[H, W]` tied to a geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample<T>(pub Tensor<T>);

/// A measurement `y ∈ 𝕐` with shape `[num_angles, num_detectors]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinogramSample<T>(pub Tensor<T>);

impl<T: Scalar> ImageSample<T> {
    pub fn new(g: &Geometry, t: Tensor<T>) -> Result<Self> {
        if t.shape() != [g.image_size.0, g.image_size.1] {
            return Err(Error::ShapeMismatch(format!(
                "image shape {:?} does not match geometry {:?}",
                t.shape(),
                g.image_size
            )));
        }
        Ok(Self(t))
    }
}

impl<T: Scalar> SinogramSample<T> {
    pub fn new(g: &Geometry, t: Tensor<T>) -> Result<Self> {
        if t.shape() != [g.num_angles(), g.num_detectors] {
            return Err(Error::ShapeMismatch(format!(
                "sinogram shape {:?} does not match geometry ({}, {})",
                t.shape(),
                g.num_angles(),
                g.num_detectors
            )));
        }
        Ok(Self(t))
    }
}

/// Compressed sparse rows with u32 column indices.
struct Csr<T> {
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    weights: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn matvec(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.n_rows());
        let run = |r: usize| -> T {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = T::zero();
            for k in lo..hi {
                acc += self.weights[k] * x[self.col_idx[k] as usize];
            }
            acc
        };
        if self.n_rows() >= 512 {
            out.par_iter_mut().enumerate().for_each(|(r, o)| *o = run(r));
        } else {
            for (r, o) in out.iter_mut().enumerate() {
                *o = run(r);
            }
        }
    }

    /// Exact transpose: same weight values, stably reordered.
    fn transpose(&self) -> Csr<T> {
        let nnz = self.weights.len();
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.cols {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut col_idx = vec![0u32; nnz];
        let mut weights = vec![T::zero(); nnz];
        let mut next = counts;
        for r in 0..self.n_rows() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k] as usize;
                let dst = next[c];
                next[c] += 1;
                col_idx[dst] = r as u32;
                weights[dst] = self.weights[k];
            }
        }
        Csr { cols: self.n_rows(), row_ptr, col_idx, weights }
    }
}

/// The discrete Radon transform `A` for a fixed geometry, with its exact
/// transpose, usable directly or as a differentiable [`LinOp`].
pub struct RadonTransform<T> {
    geometry: Geometry,
    fwd: Csr<T>,
    adj: Csr<T>,
}

impl<T: Scalar> RadonTransform<T> {
    pub fn new(geometry: Geometry) -> Result<Self> {
        geometry.validate()?;
        let fwd = build_system_matrix(&geometry);
        let adj = fwd.transpose();
        Ok(Self { geometry, fwd, adj })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// `A x`: line integrals for every (angle, detector) pair.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(
            x.shape(),
            [self.geometry.image_size.0, self.geometry.image_size.1],
            "radon forward: image shape mismatch"
        );
        let mut out = Tensor::zeros(&[self.geometry.num_angles(), self.geometry.num_detectors]);
        self.fwd.matvec(x.data(), out.data_mut());
        out
    }

    /// `A* s`: the transpose of [`RadonTransform::forward`].
    pub fn adjoint(&self, s: &Tensor<T>) -> Tensor<T> {
        assert_eq!(
            s.shape(),
            [self.geometry.num_angles(), self.geometry.num_detectors],
            "radon adjoint: sinogram shape mismatch"
        );
        let (h, w) = self.geometry.image_size;
        let mut out = Tensor::zeros(&[h, w]);
        self.adj.matvec(s.data(), out.data_mut());
        out
    }

    /// Filtered back-projection: per-angle frequency-domain ramp filtering
    /// (zero-padded to the next power of two ≥ 2·num_detectors), then
    /// back-projection scaled by `π·Δs/(num_angles·px²)` — the Riemann sum
    /// of the inversion formula over angles.
    pub fn fbp(&self, s: &Tensor<T>, filter: Filter) -> Tensor<T> {
        let g = &self.geometry;
        assert_eq!(
            s.shape(),
            [g.num_angles(), g.num_detectors],
            "fbp: sinogram shape mismatch"
        );
        if g.num_angles() < 2 {
            eprintln!("warning: fbp with fewer than 2 angles; output will be heavily streaked");
        }
        let n_det = g.num_detectors;
        let padded = (2 * n_det).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(padded);
        let ifft = planner.plan_fft_inverse(padded);
        // Two-sided |f| response on DFT bins, optionally Hann-windowed.
        let response: Vec<f64> = (0..padded)
            .map(|k| {
                let k_fold = k.min(padded - k) as f64;
                let ramp = k_fold / (padded as f64 * g.detector_spacing);
                match filter {
                    Filter::RamLak => ramp,
                    Filter::Hann => {
                        ramp * 0.5 * (1.0 + (std::f64::consts::PI * k_fold / (padded as f64 / 2.0)).cos())
                    }
                }
            })
            .collect();
        let mut filtered = Tensor::<T>::zeros(&[g.num_angles(), n_det]);
        let mut buf = vec![Complex::new(0.0, 0.0); padded];
        for a in 0..g.num_angles() {
            for (d, slot) in buf.iter_mut().enumerate().take(padded) {
                *slot = if d < n_det {
                    Complex::new(s.at2(a, d).as_f64(), 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            fft.process(&mut buf);
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot *= response[k];
            }
            ifft.process(&mut buf);
            for d in 0..n_det {
                filtered.set2(a, d, T::of_f64(buf[d].re / padded as f64));
            }
        }
        let scale = std::f64::consts::PI * g.detector_spacing
            / (g.num_angles() as f64 * g.pixel_spacing * g.pixel_spacing);
        let mut img = self.adjoint(&filtered);
        let c = T::of_f64(scale);
        for v in img.data_mut() {
            *v *= c;
        }
        img
    }
}

impl<T: Scalar> LinOp<T> for RadonTransform<T> {
    fn in_shape(&self) -> Vec<usize> {
        vec![self.geometry.image_size.0, self.geometry.image_size.1]
    }

    fn out_shape(&self) -> Vec<usize> {
        vec![self.geometry.num_angles(), self.geometry.num_detectors]
    }

    fn apply(&self, x: &Tensor<T>) -> Tensor<T> {
        self.forward(x)
    }

    fn apply_adjoint(&self, s: &Tensor<T>) -> Tensor<T> {
        self.adjoint(s)
    }
}

/// FBP apodization choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Filter {
    /// Pure ramp |f| (sharpest; noise-free data).
    RamLak,
    /// Hann-windowed ramp (default for noisy data).
    Hann,
}

fn build_system_matrix<T: Scalar>(g: &Geometry) -> Csr<T> {
    let (h, w) = g.image_size;
    let n_pix = h * w;
    let px = g.pixel_spacing;
    let dt = 0.5 * px.min(g.detector_spacing);
    let half_span = 0.5 * g.image_diagonal() + px;
    let n_samples = (2.0 * half_span / dt).ceil() as usize + 1;

    let mut row_ptr = Vec::with_capacity(g.n_rays() + 1);
    row_ptr.push(0usize);
    let mut col_idx: Vec<u32> = Vec::new();
    let mut weights: Vec<T> = Vec::new();
    // Dense per-row scratch merges duplicate pixel hits from overlapping
    // bilinear stencils of consecutive samples.
    let mut scratch = vec![0.0f64; n_pix];
    let mut touched: Vec<u32> = Vec::new();

    for &theta in &g.angles {
        let (sin_t, cos_t) = theta.sin_cos();
        // Detector axis ω = (cosθ, sinθ); ray direction ω⊥ = (−sinθ, cosθ).
        for d in 0..g.num_detectors {
            let s_off = g.detector_offset(d);
            for it in 0..n_samples {
                let t = -half_span + it as f64 * dt;
                let x = s_off * cos_t - t * sin_t;
                let y = s_off * sin_t + t * cos_t;
                // Continuous (row, col) in pixel-center coordinates.
                let u = x / px + (w as f64 - 1.0) / 2.0;
                let v = (h as f64 - 1.0) / 2.0 - y / px;
                let j0 = u.floor();
                let i0 = v.floor();
                let du = u - j0;
                let dv = v - i0;
                let (i0, j0) = (i0 as i64, j0 as i64);
                let mut deposit = |i: i64, j: i64, wgt: f64| {
                    if i >= 0 && (i as usize) < h && j >= 0 && (j as usize) < w {
                        let idx = i as usize * w + j as usize;
                        if scratch[idx] == 0.0 {
                            touched.push(idx as u32);
                        }
                        scratch[idx] += wgt * dt;
                    }
                };
                deposit(i0, j0, (1.0 - du) * (1.0 - dv));
                deposit(i0, j0 + 1, du * (1.0 - dv));
                deposit(i0 + 1, j0, (1.0 - du) * dv);
                deposit(i0 + 1, j0 + 1, du * dv);
            }
            touched.sort_unstable();
            for &idx in &touched {
                let val = scratch[idx as usize];
                if val != 0.0 {
                    col_idx.push(idx);
                    weights.push(T::of_f64(val));
                }
                scratch[idx as usize] = 0.0;
            }
            touched.clear();
            row_ptr.push(col_idx.len());
        }
    }
    Csr { cols: n_pix, row_ptr, col_idx, weights }
}

/// Power-method estimate of the largest singular value of `op`.
///
/// Iterates `v ← A*A v / ‖A*A v‖` from a seeded random start and returns
/// `‖A v‖` for the final normalized iterate; the estimate is a Rayleigh
/// quotient of `A*A`, hence monotone nondecreasing in the iteration count
/// and convergent from below.
pub fn operator_norm<T: Scalar>(op: &dyn LinOp<T>, iterations: usize, seed: u64) -> T {
    assert!(iterations >= 10, "operator_norm needs at least 10 iterations");
    use rand::Rng;
    let mut rng = crate::seeds::rng(seed, "operator-norm", 0);
    let in_shape = op.in_shape();
    let mut v: Tensor<T> =
        Tensor::from_fn(&in_shape, |_| T::of_f64(rng.gen_range(-1.0..1.0)));
    let norm = v.norm();
    assert!(norm > T::zero(), "degenerate start vector");
    for val in v.data_mut() {
        *val /= norm;
    }
    for _ in 0..iterations {
        let av = op.apply(&v);
        let mut next = op.apply_adjoint(&av);
        let n = next.norm();
        if n == T::zero() {
            return T::zero(); // op is (numerically) zero on this subspace
        }
        for val in next.data_mut() {
            *val /= n;
        }
        v = next;
    }
    op.apply(&v).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;
    use rand::Rng;

    fn test_geometry() -> Geometry {
        Geometry::new((32, 32), 1.0, 20, 47, 1.0).unwrap()
    }

    /// Anti-aliased centered disk, radius in pixels.
    fn disk_image<T: Scalar>(n: usize, radius: f64) -> Tensor<T> {
        let c = (n as f64 - 1.0) / 2.0;
        Tensor::from_fn(&[n, n], |idx| {
            let i = (idx / n) as f64 - c;
            let j = (idx % n) as f64 - c;
            let r = i.hypot(j);
            // 1 inside, 0 outside, linear ramp across one pixel at the rim
            T::of_f64((radius + 0.5 - r).clamp(0.0, 1.0))
        })
    }

    #[test]
    fn geometry_validation() {
        assert!(Geometry::new((0, 4), 1.0, 3, 5, 1.0).is_err());
        assert!(Geometry::new((4, 4), 1.0, 0, 5, 1.0).is_err());
        assert!(Geometry::new((4, 4), -1.0, 3, 5, 1.0).is_err());
        let bad_angles = Geometry {
            image_size: (4, 4),
            pixel_spacing: 1.0,
            angles: vec![0.5, 0.4],
            num_detectors: 5,
            detector_spacing: 1.0,
        };
        assert!(bad_angles.validate().is_err());
        // narrow detector array triggers a warning, not an error
        let narrow = Geometry::new((32, 32), 1.0, 10, 10, 1.0).unwrap();
        assert!(!narrow.warnings().is_empty());
        assert!(Geometry::desk_default().warnings().is_empty());
    }

    #[test]
    fn zero_image_gives_zero_sinogram_and_back() {
        let op: RadonTransform<f64> = RadonTransform::new(test_geometry()).unwrap();
        let s = op.forward(&Tensor::zeros(&[32, 32]));
        assert!(s.data().iter().all(|&v| v == 0.0));
        let x = op.adjoint(&Tensor::zeros(&[20, 47]));
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disk_projection_matches_chord_length() {
        // Line integral through a unit disk of radius r at offset s is
        // 2√(r²−s²); check the central detector (s = 0) at several angles.
        let g = Geometry::new((64, 64), 1.0, 12, 95, 1.0).unwrap();
        let op: RadonTransform<f64> = RadonTransform::new(g).unwrap();
        let r = 20.0;
        let sino = op.forward(&disk_image(64, r));
        let central = 47; // odd detector count → exact center
        for a in 0..12 {
            let got = sino.at2(a, central);
            assert!(
                (got - 2.0 * r).abs() < 0.02 * 2.0 * r,
                "angle {a}: central ray {got} vs chord {}",
                2.0 * r
            );
        }
        // profile symmetric about the central detector
        for a in 0..12 {
            for d in 0..47 {
                let lhs = sino.at2(a, central - 1 - d);
                let rhs = sino.at2(a, central + 1 + d);
                assert!(
                    (lhs - rhs).abs() < 1e-4 * 2.0 * r,
                    "asymmetry at angle {a} offset {d}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn forward_is_linear() {
        let op: RadonTransform<f64> = RadonTransform::new(test_geometry()).unwrap();
        let mut rng = crate::seeds::rng(21, "lin", 0);
        let x1: Tensor<f64> = Tensor::from_fn(&[32, 32], |_| rng.gen_range(-1.0..1.0));
        let x2: Tensor<f64> = Tensor::from_fn(&[32, 32], |_| rng.gen_range(-1.0..1.0));
        let lhs = op.forward(&x1.zip(&x2, |a, b| a + b));
        let rhs = op.forward(&x1).zip(&op.forward(&x2), |a, b| a + b);
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn adjoint_identity_on_random_pairs() {
        let op: RadonTransform<f64> = RadonTransform::new(test_geometry()).unwrap();
        let mut rng = crate::seeds::rng(22, "adjoint", 0);
        for trial in 0..100 {
            let x: Tensor<f64> = Tensor::from_fn(&[32, 32], |_| rng.gen_range(-1.0..1.0));
            let s: Tensor<f64> = Tensor::from_fn(&[20, 47], |_| rng.gen_range(-1.0..1.0));
            let ax = op.forward(&x);
            let ats = op.adjoint(&s);
            let lhs = ax.dot(&s);
            let rhs = x.dot(&ats);
            let denom = ax.norm() * s.norm();
            assert!(
                (lhs - rhs).abs() / denom < 1e-4,
                "trial {trial}: ⟨Ax,s⟩={lhs} vs ⟨x,A*s⟩={rhs}"
            );
        }
    }

    #[test]
    fn adjoint_identity_rearranged() {
        let op: RadonTransform<f64> = RadonTransform::new(test_geometry()).unwrap();
        let mut rng = crate::seeds::rng(23, "adjoint2", 0);
        let s: Tensor<f64> = Tensor::from_fn(&[20, 47], |_| rng.gen_range(-1.0..1.0));
        let ats = op.adjoint(&s);
        let lhs = ats.dot(&ats);
        let rhs = op.forward(&ats).dot(&s);
        assert!((lhs - rhs).abs() / lhs.abs() < 1e-10);
    }

    #[test]
    fn data_fit_gradient_through_tape_matches_adjoint_formula() {
        // ∇_x ½‖Ax−y‖²·2 = 2·A*(Ax−y), and it must also agree with finite
        // differences through the tape registration.
        let g = Geometry::new((8, 8), 1.0, 6, 13, 1.0).unwrap();
        let op = std::sync::Arc::new(RadonTransform::<f64>::new(g).unwrap());
        let mut rng = crate::seeds::rng(24, "linmap-grad", 0);
        let x0: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Tensor<f64> = Tensor::from_fn(&[6, 13], |_| rng.gen_range(-1.0..1.0));

        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::from_vec(&[8, 8], x0.clone()).unwrap());
        let yv = tape.leaf(y.clone());
        let r = tape.sub(tape.lin_map(op.clone(), x, false), yv);
        let loss = tape.sum_all(tape.mul(r, r));
        tape.backward(loss);
        let grad = tape.grad_of(x).unwrap();

        let ax = op.forward(&Tensor::from_vec(&[8, 8], x0.clone()).unwrap());
        let resid = ax.zip(&y, |a, b| a - b);
        let expect = op.adjoint(&resid).map(|v| 2.0 * v);
        for (a, b) in grad.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-10);
        }

        let fd = crate::check::fd_gradient(
            |v| {
                let xt = Tensor::from_vec(&[8, 8], v.to_vec()).unwrap();
                let r = op.forward(&xt).zip(&y, |a, b| a - b);
                r.norm_sq()
            },
            &x0,
            1e-5,
        );
        let err = crate::check::max_rel_err(grad.data(), &fd);
        assert!(err < 1e-3, "fd rel err {err}");
    }

    #[test]
    fn fbp_zero_and_linear() {
        let op: RadonTransform<f64> = RadonTransform::new(test_geometry()).unwrap();
        let z = op.fbp(&Tensor::zeros(&[20, 47]), Filter::RamLak);
        assert!(z.data().iter().all(|&v| v == 0.0));
        let mut rng = crate::seeds::rng(25, "fbplin", 0);
        let s1: Tensor<f64> = Tensor::from_fn(&[20, 47], |_| rng.gen_range(-1.0..1.0));
        let s2: Tensor<f64> = Tensor::from_fn(&[20, 47], |_| rng.gen_range(-1.0..1.0));
        let lhs = op.fbp(&s1.zip(&s2, |a, b| a + b), Filter::Hann);
        let rhs = op
            .fbp(&s1, Filter::Hann)
            .zip(&op.fbp(&s2, Filter::Hann), |a, b| a + b);
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn fbp_recovers_disk_and_improves_with_angles() {
        // Reconstruction quality must increase strictly 30 → 60 → 180
        // angles (the gain flattens once angular sampling stops being the
        // limiting error on this smooth phantom, so only strictness is
        // asserted at the top end).
        let truth: Tensor<f64> = disk_image(64, 18.0);
        let mut last_psnr = 0.0;
        for &na in &[30usize, 60, 180] {
            let g = Geometry::new((64, 64), 1.0, na, 95, 1.0).unwrap();
            let op: RadonTransform<f64> = RadonTransform::new(g).unwrap();
            let sino = op.forward(&truth);
            let rec = op.fbp(&sino, Filter::RamLak);
            let mse: f64 =
                rec.zip(&truth, |a, b| (a - b) * (a - b)).sum() / (64.0 * 64.0);
            let psnr = 10.0 * (1.0 / mse).log10();
            assert!(
                psnr > last_psnr,
                "PSNR not increasing: {last_psnr:.2} → {psnr:.2} at {na} angles"
            );
            last_psnr = psnr;
        }
        assert!(last_psnr > 25.0, "180-angle FBP too poor: {last_psnr:.2} dB");
    }

    struct IdentityOp {
        shape: Vec<usize>,
    }

    impl LinOp<f64> for IdentityOp {
        fn in_shape(&self) -> Vec<usize> {
            self.shape.clone()
        }
        fn out_shape(&self) -> Vec<usize> {
            self.shape.clone()
        }
        fn apply(&self, x: &Tensor<f64>) -> Tensor<f64> {
            x.clone()
        }
        fn apply_adjoint(&self, s: &Tensor<f64>) -> Tensor<f64> {
            s.clone()
        }
    }

    struct ScaledOp<'a> {
        inner: &'a RadonTransform<f64>,
        c: f64,
    }

    impl LinOp<f64> for ScaledOp<'_> {
        fn in_shape(&self) -> Vec<usize> {
            self.inner.in_shape()
        }
        fn out_shape(&self) -> Vec<usize> {
            self.inner.out_shape()
        }
        fn apply(&self, x: &Tensor<f64>) -> Tensor<f64> {
            self.inner.apply(x).map(|v| v * self.c)
        }
        fn apply_adjoint(&self, s: &Tensor<f64>) -> Tensor<f64> {
            self.inner.apply_adjoint(s).map(|v| v * self.c)
        }
    }

    #[test]
    fn operator_norm_of_identity_is_one() {
        let op = IdentityOp { shape: vec![9, 9] };
        let est = operator_norm(&op, 50, 7);
        assert!((est - 1.0).abs() < 1e-6, "{est}");
    }

    #[test]
    fn operator_norm_homogeneity_and_monotonicity() {
        let radon: RadonTransform<f64> = RadonTransform::new(test_geometry()).unwrap();
        let base = operator_norm(&radon, 60, 7);
        let scaled = ScaledOp { inner: &radon, c: -2.5 };
        let est = operator_norm(&scaled, 60, 7);
        assert!((est - 2.5 * base).abs() < 1e-6 * est, "{est} vs {}", 2.5 * base);
        let mut prev = 0.0;
        for &iters in &[10usize, 20, 40, 80] {
            let e = operator_norm(&radon, iters, 7);
            assert!(e >= prev - 1e-9, "estimate decreased: {prev} → {e}");
            prev = e;
        }
    }

    /// Cyclic Jacobi eigenvalue sweeps with a Gershgorin certificate: rotate
    /// until every off-diagonal row sum is below the tolerance, then the
    /// largest diagonal entry brackets λ_max to within that radius.
    fn jacobi_lambda_max(mut m: Vec<Vec<f64>>, tol: f64) -> (f64, f64) {
        let n = m.len();
        for _sweep in 0..30 {
            let mut off = 0.0f64;
            for r in 0..n {
                let s: f64 = (0..n).filter(|&c| c != r).map(|c| m[r][c].abs()).sum();
                off = off.max(s);
            }
            if off < tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[p][q];
                    if apq.abs() < tol / (2.0 * n as f64) {
                        continue;
                    }
                    let (app, aqq) = (m[p][p], m[q][q]);
                    let theta = 0.5 * (2.0 * apq).atan2(aqq - app);
                    let (s, c) = theta.sin_cos();
                    for k in 0..n {
                        let (mkp, mkq) = (m[k][p], m[k][q]);
                        m[k][p] = c * mkp - s * mkq;
                        m[k][q] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let (mpk, mqk) = (m[p][k], m[q][k]);
                        m[p][k] = c * mpk - s * mqk;
                        m[q][k] = s * mpk + c * mqk;
                    }
                }
            }
        }
        let lam = (0..n).map(|i| m[i][i]).fold(f64::MIN, f64::max);
        let radius = (0..n)
            .map(|r| (0..n).filter(|&c| c != r).map(|c| m[r][c].abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        (lam, radius)
    }

    #[test]
    fn operator_norm_matches_dense_eigen_oracle() {
        // Materialize A on a small geometry and cross-check the power-method
        // estimate against an independent dense eigenvalue computation.
        let g = Geometry::new((16, 16), 1.0, 10, 24, 1.0).unwrap();
        let radon: RadonTransform<f64> = RadonTransform::new(g).unwrap();
        let n_pix = 256;
        let mut cols: Vec<Tensor<f64>> = Vec::with_capacity(n_pix);
        for j in 0..n_pix {
            let mut e = Tensor::zeros(&[16, 16]);
            e.data_mut()[j] = 1.0;
            cols.push(radon.forward(&e));
        }
        let mut gram = vec![vec![0.0f64; n_pix]; n_pix];
        for i in 0..n_pix {
            for j in i..n_pix {
                let v = cols[i].dot(&cols[j]);
                gram[i][j] = v;
                gram[j][i] = v;
            }
        }
        let (lam, radius) = jacobi_lambda_max(gram, 1e-4);
        let sigma_dense = lam.sqrt();
        let est = operator_norm(&radon, 200, 7);
        let rel = (est - sigma_dense).abs() / sigma_dense;
        assert!(
            rel < 0.01,
            "power method {est} vs dense {sigma_dense} (cert radius {radius}): rel {rel}"
        );
    }
}
