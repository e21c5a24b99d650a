//! Pixel-wise classifiers.
//!
//! [`SegmentationModel`] is the base classifier `f` the certifier smooths.
//! The concrete models here have known statistics so that the engine can be
//! checked exactly or by simulation.

use crate::error::{Error, Result};
use crate::image::{ClassId, Image, LabelMap};
use crate::seed;

/// A pure mapping from an image to one class per pixel.
///
/// `draw_seed` is supplied by the sampler for every Monte Carlo draw.
/// Deterministic models ignore it; stochastic oracle models must derive all
/// their randomness from it.
pub trait SegmentationModel: Send + Sync {
    fn num_classes(&self) -> usize;

    fn predict(&self, image: &Image, draw_seed: u64) -> Result<LabelMap>;

    fn name(&self) -> &str;
}

impl<M: SegmentationModel + ?Sized> SegmentationModel for &M {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn predict(&self, image: &Image, draw_seed: u64) -> Result<LabelMap> {
        (**self).predict(image, draw_seed)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

fn check_classes(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::domain(format!("need at least 2 classes, got {k}")));
    }
    if k > ClassId::MAX as usize {
        return Err(Error::Capacity(format!(
            "{k} classes exceed the class id range"
        )));
    }
    Ok(())
}

/// Nearest-mean classifier on pixel luminance.
///
/// Bayes-optimal for equal-weight, equal-variance Gaussian classes. Ties go to
/// the lowest class id.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSegmenter {
    means: Vec<f64>,
}

impl BandSegmenter {
    pub fn new(means: Vec<f64>) -> Result<Self> {
        check_classes(means.len())?;
        for (i, a) in means.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::domain(format!("class mean {i} is not finite")));
            }
            if means[..i].contains(a) {
                return Err(Error::domain(format!(
                    "class means must be distinct, {a} repeats"
                )));
            }
        }
        Ok(Self { means })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn classify(&self, intensity: f64) -> ClassId {
        let mut best = 0;
        let mut best_dist = (intensity - self.means[0]).abs();
        for (c, mu) in self.means.iter().enumerate().skip(1) {
            let d = (intensity - mu).abs();
            if d < best_dist {
                best = c;
                best_dist = d;
            }
        }
        best as ClassId
    }
}

impl SegmentationModel for BandSegmenter {
    fn num_classes(&self) -> usize {
        self.means.len()
    }

    fn predict(&self, image: &Image, _draw_seed: u64) -> Result<LabelMap> {
        let labels = image
            .luminance()
            .into_iter()
            .map(|v| self.classify(v))
            .collect();
        LabelMap::from_classes(image.height(), image.width(), labels)
    }

    fn name(&self) -> &str {
        "band"
    }
}

/// Per-pixel probability of emitting the ground-truth class.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleChannelSpec {
    p_true: Vec<f64>,
    ground_truth: LabelMap,
    num_classes: usize,
}

impl OracleChannelSpec {
    pub fn new(p_true: Vec<f64>, ground_truth: LabelMap, num_classes: usize) -> Result<Self> {
        check_classes(num_classes)?;
        if p_true.len() != ground_truth.len() {
            return Err(Error::shape(format!(
                "p_true has {} entries for a {}-pixel ground truth",
                p_true.len(),
                ground_truth.len()
            )));
        }
        if let Some(p) = p_true.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::domain(format!(
                "p_true values must lie in [0, 1], got {p}"
            )));
        }
        for label in ground_truth.iter() {
            match label {
                Some(c) if (*c as usize) < num_classes => {}
                Some(c) => {
                    return Err(Error::Validation(format!(
                        "ground-truth class {c} outside [0, {num_classes})"
                    )))
                }
                None => {
                    return Err(Error::Validation(
                        "ground truth contains abstentions".into(),
                    ))
                }
            }
        }
        Ok(Self {
            p_true,
            ground_truth,
            num_classes,
        })
    }

    /// Same `p_true` at every pixel.
    pub fn uniform(p_true: f64, ground_truth: LabelMap, num_classes: usize) -> Result<Self> {
        let n = ground_truth.len();
        Self::new(vec![p_true; n], ground_truth, num_classes)
    }

    pub fn p_true(&self) -> &[f64] {
        &self.p_true
    }

    pub fn ground_truth(&self) -> &LabelMap {
        &self.ground_truth
    }
}

/// Emits the ground truth with probability `p_true[i]` and otherwise a
/// uniformly chosen wrong class. The input image is ignored.
///
/// Randomness is a pure integer hash of `(seed, draw_seed, pixel)`, so outputs
/// are bit-identical across runs and platforms.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleChannelModel {
    spec: OracleChannelSpec,
    seed: u64,
}

impl OracleChannelModel {
    pub fn new(spec: OracleChannelSpec, seed: u64) -> Self {
        Self { spec, seed }
    }

    pub fn spec(&self) -> &OracleChannelSpec {
        &self.spec
    }
}

impl SegmentationModel for OracleChannelModel {
    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn predict(&self, image: &Image, draw_seed: u64) -> Result<LabelMap> {
        let gt = &self.spec.ground_truth;
        if !gt.same_dims(image.height(), image.width()) {
            return Err(Error::shape(format!(
                "oracle ground truth is {}x{}, input is {}x{}",
                gt.height(),
                gt.width(),
                image.height(),
                image.width()
            )));
        }
        let wrong = (self.spec.num_classes - 1) as u64;
        let draw_key = seed::derive(self.seed, &[draw_seed]);
        let labels = gt
            .iter()
            .zip(&self.spec.p_true)
            .enumerate()
            .map(|(i, (truth, &p))| {
                let truth = truth.expect("validated ground truth") as u64;
                let bits = seed::derive(draw_key, &[i as u64]);
                if seed::unit_f64(bits) < p {
                    truth as ClassId
                } else {
                    let offset = 1 + seed::below(seed::mix64(bits), wrong);
                    ((truth + offset) % self.spec.num_classes as u64) as ClassId
                }
            })
            .map(Some)
            .collect();
        LabelMap::new(gt.height(), gt.width(), labels)
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

/// Labels every pixel with one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantModel {
    class: ClassId,
    num_classes: usize,
}

impl ConstantModel {
    pub fn new(class: ClassId, num_classes: usize) -> Result<Self> {
        check_classes(num_classes)?;
        if class as usize >= num_classes {
            return Err(Error::domain(format!(
                "constant class {class} outside [0, {num_classes})"
            )));
        }
        Ok(Self { class, num_classes })
    }
}

impl SegmentationModel for ConstantModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict(&self, image: &Image, _draw_seed: u64) -> Result<LabelMap> {
        Ok(LabelMap::filled(
            image.height(),
            image.width(),
            Some(self.class),
        ))
    }

    fn name(&self) -> &str {
        "constant"
    }
}
