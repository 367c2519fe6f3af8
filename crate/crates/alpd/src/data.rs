//! Phantom generation, measurement simulation, and dataset persistence.
//!
//! Every random draw comes from a stream derived from `(master_seed,
//! purpose, index)` via [`crate::seeds`], so individual samples are
//! reproducible in isolation and generation order never matters.

use crate::error::{Error, Result};
use crate::fsio;
use crate::seeds;
use crate::tensor::{uten, Scalar, Tensor};
use crate::tomo::{Geometry, GeometryParams, RadonTransform};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Distribution parameters for random ellipse phantoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseConfig {
    /// Ellipses per phantom.
    pub count: usize,
    /// Inclusive lower bound of the intensity distribution.
    pub intensity_min: f64,
    /// Exclusive upper bound of the intensity distribution.
    pub intensity_max: f64,
}

impl Default for EllipseConfig {
    fn default() -> Self {
        Self { count: 5, intensity_min: 0.1, intensity_max: 1.0 }
    }
}

impl EllipseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.intensity_min < 0.0 || self.intensity_max <= self.intensity_min {
            return Err(Error::Config(
                "ellipse intensities need 0 ≤ min < max".into(),
            ));
        }
        Ok(())
    }
}

/// Additive white Gaussian noise on the sinogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation in sinogram units.
    pub sigma: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { sigma: 2.0 }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if self.sigma < 0.0 {
            return Err(Error::Config("noise sigma must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// One ellipse in normalized coordinates: the image square is [−1, 1]².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    /// Rotation in radians.
    pub angle: f64,
    pub intensity: f64,
}

impl Ellipse {
    /// Whether normalized point (x, y) lies inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.angle.sin_cos();
        let u = (dx * c + dy * s) / self.semi_axes.0;
        let v = (-dx * s + dy * c) / self.semi_axes.1;
        u * u + v * v <= 1.0
    }
}

/// Draw `cfg.count` random ellipses: centers uniform in the central 80% of
/// the field, semi-axes uniform in [5%, 25%] of the image width, rotation
/// uniform in [0, π), intensity uniform in the configured range.
pub fn sample_ellipses(cfg: &EllipseConfig, rng: &mut impl Rng) -> Vec<Ellipse> {
    (0..cfg.count)
        .map(|_| Ellipse {
            center: (rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)),
            // the field is 2 units wide, so [5%, 25%] of the width is [0.1, 0.5]
            semi_axes: (rng.gen_range(0.1..0.5), rng.gen_range(0.1..0.5)),
            angle: rng.gen_range(0.0..std::f64::consts::PI),
            intensity: rng.gen_range(cfg.intensity_min..cfg.intensity_max),
        })
        .collect()
}

/// Rasterize ellipses onto a `size×size` grid with 2×2 supersampling.
/// Intensities of overlapping ellipses add; nothing is clipped.
pub fn render_ellipses<T: Scalar>(ellipses: &[Ellipse], size: usize) -> Tensor<T> {
    assert!(size >= 16, "phantom size must be at least 16");
    let mut img = Tensor::zeros(&[size, size]);
    let scale = 2.0 / size as f64;
    let data = img.data_mut();
    for e in ellipses {
        for i in 0..size {
            for j in 0..size {
                let mut hits = 0u32;
                for (oi, oj) in [(-0.25, -0.25), (-0.25, 0.25), (0.25, -0.25), (0.25, 0.25)] {
                    let x = (j as f64 + oj - (size as f64 - 1.0) / 2.0) * scale;
                    let y = ((size as f64 - 1.0) / 2.0 - (i as f64 + oi)) * scale;
                    if e.contains(x, y) {
                        hits += 1;
                    }
                }
                if hits > 0 {
                    data[i * size + j] += T::of_f64(e.intensity * hits as f64 / 4.0);
                }
            }
        }
    }
    img
}

/// A random ellipse phantom; background 0, values in [0, count·max].
pub fn gen_ellipse_phantom<T: Scalar>(
    cfg: &EllipseConfig,
    size: usize,
    rng: &mut impl Rng,
) -> Tensor<T> {
    render_ellipses(&sample_ellipses(cfg, rng), size)
}

/// The ten ellipses of the modified (high-contrast) Shepp-Logan head
/// phantom: (intensity, semi-axis a, semi-axis b, center x, center y,
/// rotation in degrees).
pub const SHEPP_LOGAN_ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// The modified Shepp-Logan phantom; values in [0, 1].
pub fn shepp_logan<T: Scalar>(size: usize) -> Tensor<T> {
    assert!(size >= 32, "Shepp-Logan needs size ≥ 32");
    let ellipses: Vec<Ellipse> = SHEPP_LOGAN_ELLIPSES
        .iter()
        .map(|&(intensity, a, b, x, y, deg)| Ellipse {
            center: (x, y),
            semi_axes: (a, b),
            angle: deg.to_radians(),
            intensity,
        })
        .collect();
    // The signed table intensities cancel exactly where tissue values are
    // zero; floating-point cancellation can leave ~1e-17 residue, so snap
    // it back to the mathematical range.
    render_ellipses(&ellipses, size).map(|v: T| v.max(T::zero()))
}

/// One standard normal draw via Box-Muller (two uniform draws consumed).
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `A(x) + e` with `e ~ N(0, σ²)` i.i.d. per sinogram entry.
pub fn simulate_measurement<T: Scalar>(
    op: &RadonTransform<T>,
    x: &Tensor<T>,
    noise: &NoiseModel,
    rng: &mut impl Rng,
) -> Tensor<T> {
    let mut y = op.forward(x);
    if noise.sigma > 0.0 {
        for v in y.data_mut() {
            *v += T::of_f64(noise.sigma * standard_normal(rng));
        }
    }
    y
}

/// Pairing mode of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Paired,
    Unpaired,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Paired => write!(f, "paired"),
            Mode::Unpaired => write!(f, "unpaired"),
        }
    }
}

/// An in-memory dataset. In unpaired mode `sinograms[i]` was simulated
/// from `images[permutation[i]]`; in paired mode the permutation is the
/// identity and `sinograms[i]` matches `images[i]`.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub images: Vec<Tensor<T>>,
    pub sinograms: Vec<Tensor<T>>,
    pub mode: Mode,
    pub permutation: Vec<usize>,
    pub geometry: Geometry,
    pub noise: NoiseModel,
    pub phantoms: EllipseConfig,
    pub master_seed: u64,
}

/// On-disk description stored as `manifest.json` next to the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub count: usize,
    pub mode: Mode,
    pub master_seed: u64,
    pub geometry: GeometryParams,
    pub noise: NoiseModel,
    pub phantoms: EllipseConfig,
    pub permutation: Vec<usize>,
}

pub const MANIFEST_VERSION: u32 = 1;

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        self.noise.validate()?;
        self.phantoms.validate()?;
        self.geometry.to_geometry()?;
        if self.permutation.len() != self.count {
            return Err(Error::Format("manifest: permutation length != count".into()));
        }
        let mut seen = vec![false; self.count];
        for &p in &self.permutation {
            if p >= self.count || seen[p] {
                return Err(Error::Format("manifest: invalid permutation".into()));
            }
            seen[p] = true;
        }
        Ok(())
    }
}

/// Seeded shuffle of `0..n` that retries (up to 100 times) until it finds a
/// derangement. For n = 1 alignment is unavoidable and the identity is
/// returned; callers can see this from the permutation itself.
pub fn derangement(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    if n < 2 {
        return perm;
    }
    for _attempt in 0..100 {
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return perm;
        }
    }
    perm
}

/// Generate `count` samples: phantom `i` from stream `(seed, "phantom", i)`,
/// its measurement from `(seed, "noise", i)`, and (in unpaired mode) the
/// alignment-breaking permutation from `(seed, "shuffle", 0)`.
pub fn generate_dataset<T: Scalar>(
    op: &RadonTransform<T>,
    phantoms: EllipseConfig,
    noise: NoiseModel,
    count: usize,
    mode: Mode,
    master_seed: u64,
) -> Result<Dataset<T>> {
    if count == 0 {
        return Err(Error::Config("dataset needs at least one sample".into()));
    }
    phantoms.validate()?;
    noise.validate()?;
    let g = op.geometry().clone();
    let size = g.image_size.0;
    if g.image_size.0 != g.image_size.1 {
        return Err(Error::Config("phantom generation requires square images".into()));
    }
    let images: Vec<Tensor<T>> = (0..count)
        .map(|i| {
            let mut rng = seeds::rng(master_seed, "phantom", i as u64);
            gen_ellipse_phantom(&phantoms, size, &mut rng)
        })
        .collect();
    let sims: Vec<Tensor<T>> = images
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = seeds::rng(master_seed, "noise", i as u64);
            simulate_measurement(op, x, &noise, &mut rng)
        })
        .collect();
    let permutation = match mode {
        Mode::Paired => (0..count).collect(),
        Mode::Unpaired => {
            let mut rng = seeds::rng(master_seed, "shuffle", 0);
            derangement(count, &mut rng)
        }
    };
    let sinograms = permutation.iter().map(|&p| sims[p].clone()).collect();
    Ok(Dataset {
        images,
        sinograms,
        mode,
        permutation,
        geometry: g,
        noise,
        phantoms,
        master_seed,
    })
}

fn sample_path(dir: &Path, kind: &str, i: usize) -> std::path::PathBuf {
    dir.join(kind).join(format!("{i:04}.uten"))
}

/// Write `images/NNNN.uten`, `sinos/NNNN.uten`, and `manifest.json`.
pub fn save_dataset<T: Scalar>(ds: &Dataset<T>, dir: &Path) -> Result<()> {
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        count: ds.images.len(),
        mode: ds.mode,
        master_seed: ds.master_seed,
        geometry: GeometryParams::from_geometry(&ds.geometry),
        noise: ds.noise,
        phantoms: ds.phantoms,
        permutation: ds.permutation.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest encode: {e}")))?;
    fsio::write_atomic(&dir.join("manifest.json"), text.as_bytes())?;
    for (i, img) in ds.images.iter().enumerate() {
        uten::save(img, &sample_path(dir, "images", i))?;
    }
    for (i, sino) in ds.sinograms.iter().enumerate() {
        uten::save(sino, &sample_path(dir, "sinos", i))?;
    }
    Ok(())
}

/// Load a dataset saved by [`save_dataset`]; shapes are checked against the
/// manifest geometry and the element type must match `T` exactly.
pub fn load_dataset<T: Scalar>(dir: &Path) -> Result<Dataset<T>> {
    let text = fsio::read_to_string(&dir.join("manifest.json"))?;
    let manifest = DatasetManifest::parse(&text)?;
    let geometry = manifest.geometry.to_geometry()?;
    let img_shape = [geometry.image_size.0, geometry.image_size.1];
    let sino_shape = [geometry.num_angles(), geometry.num_detectors];
    let mut images = Vec::with_capacity(manifest.count);
    let mut sinograms = Vec::with_capacity(manifest.count);
    for i in 0..manifest.count {
        let img: Tensor<T> = uten::load_typed(&sample_path(dir, "images", i))?;
        if img.shape() != img_shape {
            return Err(Error::Format(format!("image {i}: shape {:?}", img.shape())));
        }
        let sino: Tensor<T> = uten::load_typed(&sample_path(dir, "sinos", i))?;
        if sino.shape() != sino_shape {
            return Err(Error::Format(format!("sinogram {i}: shape {:?}", sino.shape())));
        }
        images.push(img);
        sinograms.push(sino);
    }
    Ok(Dataset {
        images,
        sinograms,
        mode: manifest.mode,
        permutation: manifest.permutation,
        geometry,
        noise: manifest.noise,
        phantoms: manifest.phantoms,
        master_seed: manifest.master_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_op() -> RadonTransform<f64> {
        RadonTransform::new(Geometry::new((16, 16), 1.0, 6, 24, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_count_config_renders_zero_image() {
        let cfg = EllipseConfig { count: 0, ..Default::default() };
        let mut rng = seeds::rng(1, "phantom", 0);
        let img: Tensor<f64> = gen_ellipse_phantom(&cfg, 16, &mut rng);
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn phantom_bounds() {
        let cfg = EllipseConfig::default();
        for i in 0..20 {
            let mut rng = seeds::rng(2, "phantom", i);
            let img: Tensor<f64> = gen_ellipse_phantom(&cfg, 32, &mut rng);
            assert!(img.min_value() >= 0.0);
            assert!(img.max_value() <= cfg.count as f64 * cfg.intensity_max);
        }
    }

    #[test]
    fn overlapping_ellipses_sum() {
        let e1 = Ellipse { center: (0.0, 0.0), semi_axes: (0.4, 0.3), angle: 0.3, intensity: 0.7 };
        let e2 = Ellipse { center: (0.1, 0.05), semi_axes: (0.35, 0.2), angle: 1.2, intensity: 0.5 };
        let joint: Tensor<f64> = render_ellipses(&[e1, e2], 32);
        let sum = render_ellipses::<f64>(&[e1], 32)
            .zip(&render_ellipses::<f64>(&[e2], 32), |a, b| a + b);
        assert_eq!(joint, sum);
        // the overlap really exists
        let both: Tensor<f64> = render_ellipses(&[e1], 32);
        let other: Tensor<f64> = render_ellipses(&[e2], 32);
        assert!(both
            .data()
            .iter()
            .zip(other.data())
            .any(|(&a, &b)| a > 0.0 && b > 0.0));
    }

    #[test]
    fn ellipse_intensity_distribution_is_uniform() {
        // Kolmogorov–Smirnov statistic of drawn intensities against
        // Uniform[0.1, 1.0] over 1000 phantoms.
        let cfg = EllipseConfig::default();
        let mut draws: Vec<f64> = Vec::new();
        for i in 0..1000 {
            let mut rng = seeds::rng(3, "phantom", i);
            for e in sample_ellipses(&cfg, &mut rng) {
                draws.push(e.intensity);
            }
        }
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = draws.len() as f64;
        let mut ks = 0.0f64;
        for (k, &v) in draws.iter().enumerate() {
            let model = ((v - 0.1) / 0.9).clamp(0.0, 1.0);
            let lo = k as f64 / n;
            let hi = (k + 1) as f64 / n;
            ks = ks.max((model - lo).abs()).max((hi - model).abs());
        }
        assert!(ks < 0.05, "KS statistic {ks}");
    }

    #[test]
    fn shepp_logan_range_and_symmetry() {
        let img: Tensor<f64> = shepp_logan(64);
        assert!(img.min_value() >= 0.0);
        assert!(img.max_value() <= 1.0);
        // Top 20% of rows contain only the centered, unrotated skull and
        // upper ellipses, so those rows mirror left-right.
        for i in 0..64 / 5 {
            for j in 0..64 {
                let a = img.at2(i, j);
                let b = img.at2(i, 63 - j);
                assert!((a - b).abs() < 1e-12, "row {i} col {j}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn shepp_logan_center_matches_point_oracle() {
        // Odd size puts a pixel center exactly at the origin; the interior
        // is locally constant there so supersampling equals the point value.
        let size = 65;
        let img: Tensor<f64> = shepp_logan(size);
        let mut oracle = 0.0;
        for &(intensity, a, b, x0, y0, deg) in &SHEPP_LOGAN_ELLIPSES {
            let phi = (deg as f64).to_radians();
            let (s, c) = phi.sin_cos();
            let (dx, dy) = (0.0 - x0, 0.0 - y0);
            let u = (dx * c + dy * s) / a;
            let v = (-dx * s + dy * c) / b;
            if u * u + v * v <= 1.0 {
                oracle += intensity;
            }
        }
        assert!((oracle - 0.2).abs() < 1e-12, "table oracle should be 0.2");
        assert!((img.at2(size / 2, size / 2) - oracle).abs() < 1e-12);
    }

    #[test]
    fn noiseless_measurement_is_exact_forward() {
        let op = tiny_op();
        let mut rng = seeds::rng(4, "phantom", 0);
        let x: Tensor<f64> = gen_ellipse_phantom(&EllipseConfig::default(), 16, &mut rng);
        let mut nrng = seeds::rng(4, "noise", 0);
        let y = simulate_measurement(&op, &x, &NoiseModel { sigma: 0.0 }, &mut nrng);
        assert_eq!(y, op.forward(&x));
    }

    #[test]
    fn noise_std_matches_sigma() {
        // ~10⁵ noise draws: sample std within 2% of σ = 2.0.
        let op = tiny_op();
        let zeros = Tensor::<f64>::zeros(&[16, 16]);
        let noise = NoiseModel { sigma: 2.0 };
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut n = 0usize;
        for i in 0..700 {
            let mut rng = seeds::rng(5, "noise", i);
            let y = simulate_measurement(&op, &zeros, &noise, &mut rng);
            for &v in y.data() {
                sum += v;
                sum_sq += v * v;
                n += 1;
            }
        }
        assert!(n >= 100_000, "need at least 1e5 samples, got {n}");
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        assert!((std - 2.0).abs() / 2.0 < 0.02, "sample std {std}");
    }

    #[test]
    fn measurement_is_deterministic_under_seed() {
        let op = tiny_op();
        let mut rng = seeds::rng(6, "phantom", 3);
        let x: Tensor<f64> = gen_ellipse_phantom(&EllipseConfig::default(), 16, &mut rng);
        let noise = NoiseModel { sigma: 1.5 };
        let a = simulate_measurement(&op, &x, &noise, &mut seeds::rng(6, "noise", 3));
        let b = simulate_measurement(&op, &x, &noise, &mut seeds::rng(6, "noise", 3));
        assert_eq!(a, b);
        let c = simulate_measurement(&op, &x, &noise, &mut seeds::rng(7, "noise", 3));
        assert_ne!(a, c);
    }

    #[test]
    fn derangement_has_no_fixed_points() {
        for seed in 0..20 {
            let mut rng = seeds::rng(seed, "shuffle", 0);
            let p = derangement(100, &mut rng);
            assert_eq!(p.iter().enumerate().filter(|(i, &v)| *i == v).count(), 0);
            let mut sorted = p.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        }
        // n=1 degenerate: identity, recorded as such
        let mut rng = seeds::rng(0, "shuffle", 0);
        assert_eq!(derangement(1, &mut rng), vec![0]);
    }

    #[test]
    fn paired_dataset_reproduces_member_simulation() {
        let op = tiny_op();
        let ds = generate_dataset(
            &op,
            EllipseConfig::default(),
            NoiseModel { sigma: 0.7 },
            5,
            Mode::Paired,
            42,
        )
        .unwrap();
        assert_eq!(ds.permutation, vec![0, 1, 2, 3, 4]);
        for i in 0..5 {
            let mut rng = seeds::rng(42, "noise", i as u64);
            let expect =
                simulate_measurement(&op, &ds.images[i], &NoiseModel { sigma: 0.7 }, &mut rng);
            assert_eq!(ds.sinograms[i], expect);
        }
    }

    #[test]
    fn unpaired_dataset_breaks_alignment() {
        let op = tiny_op();
        let ds = generate_dataset(
            &op,
            EllipseConfig::default(),
            NoiseModel { sigma: 0.7 },
            8,
            Mode::Unpaired,
            42,
        )
        .unwrap();
        assert!(ds.permutation.iter().enumerate().all(|(i, &p)| i != p));
        for i in 0..8 {
            let mut rng = seeds::rng(42, "noise", ds.permutation[i] as u64);
            let expect = simulate_measurement(
                &op,
                &ds.images[ds.permutation[i]],
                &NoiseModel { sigma: 0.7 },
                &mut rng,
            );
            assert_eq!(ds.sinograms[i], expect);
        }
    }

    #[test]
    fn dataset_round_trips_bit_exactly() {
        let op = tiny_op();
        let ds: Dataset<f64> = generate_dataset(
            &op,
            EllipseConfig::default(),
            NoiseModel { sigma: 0.3 },
            4,
            Mode::Unpaired,
            9,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back: Dataset<f64> = load_dataset(dir.path()).unwrap();
        assert_eq!(back.images, ds.images);
        assert_eq!(back.sinograms, ds.sinograms);
        assert_eq!(back.permutation, ds.permutation);
        assert_eq!(back.mode, ds.mode);
        assert_eq!(back.geometry, ds.geometry);
        // saving again produces byte-identical files
        let dir2 = tempfile::tempdir().unwrap();
        save_dataset(&back, dir2.path()).unwrap();
        for name in ["manifest.json", "images/0000.uten", "sinos/0003.uten"] {
            let a = std::fs::read(dir.path().join(name)).unwrap();
            let b = std::fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }

    #[test]
    fn manifest_rejects_malformed_input() {
        let op = tiny_op();
        let ds: Dataset<f64> = generate_dataset(
            &op,
            EllipseConfig::default(),
            NoiseModel { sigma: 0.3 },
            2,
            Mode::Paired,
            1,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        // unknown field
        let with_extra = text.replacen('{', "{\n  \"surprise\": 1,", 1);
        assert!(DatasetManifest::parse(&with_extra).is_err());
        // bad permutation
        let bad_perm = text.replace("\"permutation\": [\n    0,\n    1\n  ]", "\"permutation\": [0, 0]");
        assert_ne!(bad_perm, text, "fixture must actually change the permutation");
        assert!(DatasetManifest::parse(&bad_perm).is_err());
        // version bump
        let bad_version = text.replace("\"version\": 1", "\"version\": 99");
        assert!(DatasetManifest::parse(&bad_version).is_err());
        // not JSON at all
        assert!(DatasetManifest::parse("not json").is_err());
    }
}
