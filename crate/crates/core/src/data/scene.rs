use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::{ClassId, Image, LabelMap};
use crate::seed;

/// Spatial arrangement of classes in a synthetic scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    /// Horizontal bands of height `H / K`, class id increasing downwards.
    #[default]
    Stripes,
    /// Class-0 background with seeded disks of the other classes.
    Disks,
    /// Square cells of side `max(1, min(H, W) / 8)`, class `(i + j) mod K`.
    Checkerboard,
}

impl Layout {
    pub fn as_str(&self) -> &'static str {
        match self {
            Layout::Stripes => "stripes",
            Layout::Disks => "disks",
            Layout::Checkerboard => "checkerboard",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "stripes" => Ok(Layout::Stripes),
            "disks" => Ok(Layout::Disks),
            "checkerboard" => Ok(Layout::Checkerboard),
            other => Err(Error::Config(format!(
                "unknown layout '{other}' (expected stripes, disks or checkerboard)"
            ))),
        }
    }
}

/// Parameters of a synthetic scene with Gaussian class-conditional intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub layout: Layout,
    /// One mean intensity per class, pairwise distinct, in (0, 1).
    pub means: Vec<f64>,
    pub within_std: f64,
    pub channels: usize,
    pub seed: u64,
}

impl SceneSpec {
    /// `num_classes` means spaced `gap` apart and centred on 0.5.
    pub fn evenly_spaced_means(num_classes: usize, gap: f64) -> Vec<f64> {
        let centre = (num_classes as f64 - 1.0) / 2.0;
        (0..num_classes)
            .map(|c| 0.5 + (c as f64 - centre) * gap)
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    /// Smallest pairwise distance between class means.
    pub fn min_gap(&self) -> f64 {
        let mut sorted = self.means.clone();
        sorted.sort_by(f64::total_cmp);
        sorted
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::domain(format!(
                "degenerate scene dimensions {}x{}",
                self.height, self.width
            )));
        }
        if !(self.channels == 1 || self.channels == 3) {
            return Err(Error::domain(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        let k = self.num_classes();
        if !(2..=255).contains(&k) {
            return Err(Error::domain(format!(
                "scene needs 2..=255 classes, got {k}"
            )));
        }
        if let Some(m) = self.means.iter().find(|m| !(**m > 0.0 && **m < 1.0)) {
            return Err(Error::domain(format!(
                "class means must lie in (0, 1), got {m}"
            )));
        }
        if !(self.min_gap() > 0.0) {
            return Err(Error::domain("class means must be pairwise distinct"));
        }
        if !(self.within_std > 0.0) {
            return Err(Error::domain(format!(
                "within-class std must be positive, got {}",
                self.within_std
            )));
        }
        Ok(())
    }
}

/// A generated image with its ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub labels: LabelMap,
    pub spec: SceneSpec,
}

fn layout_labels(spec: &SceneSpec) -> Vec<ClassId> {
    let (h, w, k) = (spec.height, spec.width, spec.num_classes());
    match spec.layout {
        Layout::Stripes => (0..h)
            .flat_map(|r| std::iter::repeat_n((r * k / h) as ClassId, w))
            .collect(),
        Layout::Checkerboard => {
            let cell = (h.min(w) / 8).max(1);
            (0..h)
                .flat_map(|r| (0..w).map(move |c| ((r / cell + c / cell) % k) as ClassId))
                .collect()
        }
        Layout::Disks => {
            let mut labels = vec![0 as ClassId; h * w];
            let mut rng = seed::rng(seed::derive(spec.seed, &[0xD15C]));
            let short = h.min(w) as f64;
            for i in 0..2 * (k - 1) {
                let class = (1 + i % (k - 1)) as ClassId;
                let cy = rng.random_range(0.0..h as f64);
                let cx = rng.random_range(0.0..w as f64);
                let radius = rng.random_range(short / 8.0..=short / 4.0).max(0.5);
                for r in 0..h {
                    for c in 0..w {
                        let dy = r as f64 + 0.5 - cy;
                        let dx = c as f64 + 0.5 - cx;
                        if dy * dy + dx * dx <= radius * radius {
                            labels[r * w + c] = class;
                        }
                    }
                }
            }
            labels
        }
    }
}

/// Generate a scene: deterministic layout, then per-pixel intensity
/// `μ_label + N(0, s²)` clipped to `[0, 1]`, one noise stream per row.
pub fn gen_scene(spec: &SceneSpec) -> Result<LabeledImage> {
    spec.validate()?;
    let (h, w, ch) = (spec.height, spec.width, spec.channels);
    let classes = layout_labels(spec);
    let mut data = Vec::with_capacity(h * w * ch);
    for r in 0..h {
        let mut rng = seed::rng(seed::derive(spec.seed, &[0x5CE7E, r as u64]));
        for c in 0..w {
            let mu = spec.means[classes[r * w + c] as usize];
            for _ in 0..ch {
                let z: f64 = rng.sample(StandardNormal);
                data.push((mu + spec.within_std * z).clamp(0.0, 1.0));
            }
        }
    }
    Ok(LabeledImage {
        image: Image::new(h, w, ch, data)?,
        labels: LabelMap::from_classes(h, w, classes)?,
        spec: spec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BandSegmenter, SegmentationModel};
    use crate::stats::gaussian_cdf;

    fn spec(layout: Layout, k: usize, s: f64) -> SceneSpec {
        SceneSpec {
            height: 64,
            width: 64,
            layout,
            means: SceneSpec::evenly_spaced_means(k, 0.3),
            within_std: s,
            channels: 1,
            seed: 3,
        }
    }

    #[test]
    fn noiseless_limit() {
        let scene = gen_scene(&spec(Layout::Checkerboard, 3, 1e-9)).unwrap();
        for (v, l) in scene.image.data().iter().zip(scene.labels.iter()) {
            assert!((v - scene.spec.means[l.unwrap() as usize]).abs() < 1e-6);
        }
    }

    #[test]
    fn stripes_bands() {
        let scene = gen_scene(&spec(Layout::Stripes, 4, 0.05)).unwrap();
        for r in 0..64 {
            for c in 0..64 {
                assert_eq!(scene.labels.get(r, c), Some((r / 16) as ClassId));
            }
        }
    }

    #[test]
    fn disks_cover_every_class_and_are_seeded() {
        let mut s = spec(Layout::Disks, 3, 0.05);
        let a = gen_scene(&s).unwrap();
        assert_eq!(a, gen_scene(&s).unwrap());
        let mut seen = [false; 3];
        for l in a.labels.iter() {
            seen[l.unwrap() as usize] = true;
        }
        assert_eq!(seen, [true; 3]);
        s.seed = 4;
        assert_ne!(a.labels, gen_scene(&s).unwrap().labels);
    }

    #[test]
    fn band_accuracy_matches_gaussian_tail() {
        // Each neighbouring mean 0.3 away costs Φ(-3) of misclassification
        // mass: interior classes lose 2Φ(-3) ≈ 0.0027, edge classes Φ(-3).
        let scene = gen_scene(&spec(Layout::Stripes, 3, 0.05)).unwrap();
        let model = BandSegmenter::new(scene.spec.means.clone()).unwrap();
        let pred = model.predict(&scene.image, 0).unwrap();
        let correct = pred
            .iter()
            .zip(scene.labels.iter())
            .filter(|(a, b)| a == b)
            .count();
        let acc = correct as f64 / 4096.0;
        assert!((1.0 - 2.0 * gaussian_cdf(-3.0) - 0.9973).abs() < 1e-4);
        let neighbours: usize = scene
            .labels
            .iter()
            .map(|l| if l.unwrap() == 1 { 2 } else { 1 })
            .sum();
        let expected = 1.0 - gaussian_cdf(-3.0) * neighbours as f64 / 4096.0;
        let se = (expected * (1.0 - expected) / 4096.0).sqrt();
        assert!(acc >= 0.99);
        assert!(
            (acc - expected).abs() <= 3.0 * se,
            "acc {acc} expected {expected}"
        );
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut s = spec(Layout::Stripes, 3, 0.05);
        s.height = 0;
        assert!(gen_scene(&s).is_err());
        let mut s = spec(Layout::Stripes, 3, 0.05);
        s.means = vec![0.2, 0.2];
        assert!(gen_scene(&s).is_err());
        let mut s = spec(Layout::Stripes, 3, 0.05);
        s.within_std = 0.0;
        assert!(gen_scene(&s).is_err());
        let mut s = spec(Layout::Stripes, 3, 0.05);
        s.channels = 2;
        assert!(gen_scene(&s).is_err());
    }

    #[test]
    fn color_scene_has_three_channels() {
        let mut s = spec(Layout::Stripes, 2, 0.05);
        s.channels = 3;
        let scene = gen_scene(&s).unwrap();
        assert_eq!(scene.image.channels(), 3);
        assert!(scene.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
