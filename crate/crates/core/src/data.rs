//! Synthetic image task, dataset handling, and trapdoor construction.
//!
//! The synthetic task is a stand-in image classification problem sized for a
//! single core: each class is a smooth low-amplitude geometric pattern
//! around mid-gray, and samples are the template plus gaussian pixel noise.
//! Low template amplitude keeps class margins small enough that bounded
//! pixel attacks are feasible, while the pattern structure keeps classes
//! separable far above chance under the default noise level.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor2D;

/// Peak deviation of a class template from mid-gray.
const TEMPLATE_AMPLITUDE: f64 = 0.08;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Tensor2D>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(images: Vec<Tensor2D>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let ds = Dataset {
            images,
            labels,
            num_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                self.images.len(),
                self.labels.len()
            )));
        }
        for (i, img) in self.images.iter().enumerate() {
            if img.values().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Numeric(format!("image {i} has pixels outside [0,1]")));
            }
        }
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= self.num_classes {
                return Err(Error::Index(format!(
                    "label {l} at sample {i} out of range for {} classes",
                    self.num_classes
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub num_classes: usize,
    pub image_side: usize,
    pub samples_per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            num_classes: 4,
            image_side: 12,
            samples_per_class: 400,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_side < 4 {
            return Err(Error::Config("image_side must be >= 4".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples_per_class must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Template for class `k`: mid-gray plus a jittered geometric pattern.
fn class_template<R: Rng>(k: usize, side: usize, rng: &mut R) -> Tensor2D {
    let freq = 1.5 + rng.random_range(0.0..1.5);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let angle_jitter = rng.random_range(-0.2..0.2);
    let mut values = Vec::with_capacity(side * side);
    let tau = std::f64::consts::TAU;
    for i in 0..side {
        for j in 0..side {
            let u = i as f64 / side as f64;
            let v = j as f64 / side as f64;
            let p = match k % 3 {
                // oriented sinusoid, orientation stepping with the class index
                0 => {
                    let theta = k as f64 * 0.9 + angle_jitter;
                    (tau * freq * (u * theta.cos() + v * theta.sin()) + phase).sin()
                }
                // concentric rings
                1 => {
                    let r = ((u - 0.5).powi(2) + (v - 0.5).powi(2)).sqrt();
                    (tau * freq * r * 2.0 + phase).sin()
                }
                // grid / saddle
                _ => (tau * freq * u + phase).sin() * (tau * freq * v + phase).sin(),
            };
            values.push(0.5 + TEMPLATE_AMPLITUDE * p);
        }
    }
    Tensor2D::new(side, side, values).expect("template values are finite")
}

/// Deterministic synthetic dataset: `samples_per_class` noisy copies of each
/// class template, pixels clamped to `[0,1]`.
pub fn gen_synthetic(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = seed::rng(config.seed);
    let templates: Vec<Tensor2D> = (0..config.num_classes)
        .map(|k| class_template(k, config.image_side, &mut rng))
        .collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut images = Vec::with_capacity(config.num_classes * config.samples_per_class);
    let mut labels = Vec::with_capacity(images.capacity());
    for (k, template) in templates.iter().enumerate() {
        for _ in 0..config.samples_per_class {
            let values: Vec<f64> = template
                .values()
                .iter()
                .map(|&t| (t + config.noise_sigma * noise.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            images.push(Tensor2D::new(config.image_side, config.image_side, values)?);
            labels.push(k);
        }
    }
    Dataset::new(images, labels, config.num_classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trapdoor {
    /// 0/1 patch mask with image shape.
    pub mask: Tensor2D,
    /// Pattern in `[0,1]`, zero outside the mask.
    pub pattern: Tensor2D,
    pub target_class: usize,
    /// Blend weight in `(0,1]`.
    pub amplitude: f64,
}

impl Trapdoor {
    pub fn validate(&self) -> Result<()> {
        self.mask.same_len(&self.pattern)?;
        if self.mask.values().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::Config("trapdoor mask entries must be 0 or 1".into()));
        }
        if self
            .pattern
            .values()
            .iter()
            .any(|&p| !(0.0..=1.0).contains(&p))
        {
            return Err(Error::Config("trapdoor pattern must lie in [0,1]".into()));
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return Err(Error::Config(format!(
                "trapdoor amplitude {} must lie in (0,1]",
                self.amplitude
            )));
        }
        Ok(())
    }
}

/// Build the backdoor perturbation: a seeded checkerboard-plus-noise pattern
/// on a corner patch, blended in at `amplitude`.
pub fn make_trapdoor(
    image_side: usize,
    target_class: usize,
    seed: u64,
    patch_side: usize,
    amplitude: f64,
) -> Result<Trapdoor> {
    if patch_side == 0 || patch_side > image_side {
        return Err(Error::Config(format!(
            "patch_side {patch_side} must lie in 1..={image_side}"
        )));
    }
    if !(amplitude > 0.0 && amplitude <= 1.0) {
        return Err(Error::Config(format!(
            "amplitude {amplitude} must lie in (0,1]"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut mask = Tensor2D::zeros(image_side, image_side);
    let mut pattern = Tensor2D::zeros(image_side, image_side);
    let start = image_side - patch_side; // bottom-right corner
    for i in start..image_side {
        for j in start..image_side {
            mask.set(i, j, 1.0);
            let base = if (i + j) % 2 == 0 { 0.9 } else { 0.1 };
            let jitter = rng.random_range(-0.08..0.08);
            pattern.set(i, j, (base + jitter).clamp(0.0, 1.0));
        }
    }
    let t = Trapdoor {
        mask,
        pattern,
        target_class,
        amplitude,
    };
    t.validate()?;
    Ok(t)
}

/// Blend the trapdoor into an image:
/// `(1-mask) * x + mask * ((1-amplitude) * x + amplitude * pattern)`,
/// clamped to `[0,1]`.
pub fn apply_trapdoor(x: &Tensor2D, t: &Trapdoor) -> Result<Tensor2D> {
    x.same_len(&t.mask)?;
    let values: Vec<f64> = x
        .values()
        .iter()
        .zip(t.mask.values())
        .zip(t.pattern.values())
        .map(|((&xv, &m), &p)| (xv + m * t.amplitude * (p - xv)).clamp(0.0, 1.0))
        .collect();
    Tensor2D::new(x.rows(), x.cols(), values)
}

/// Seeded shuffle-and-split into `(train, rest)`; exact partition.
pub fn split(ds: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::Config("cannot split an empty dataset".into()));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!(
            "train_frac {train_frac} must lie in (0,1)"
        )));
    }
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let n_train = ((n as f64 * train_frac).floor() as usize).clamp(1, n - 1);
    let gather = |idxs: &[usize]| -> Dataset {
        Dataset {
            images: idxs.iter().map(|&i| ds.images[i].clone()).collect(),
            labels: idxs.iter().map(|&i| ds.labels[i]).collect(),
            num_classes: ds.num_classes,
        }
    };
    Ok((gather(&order[..n_train]), gather(&order[n_train..])))
}
