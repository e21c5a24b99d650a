//! Monte Carlo sampling and certification.
//!
//! [`Engine::sample_counts`] draws `n` Gaussian-noised copies of an image,
//! optionally denoises each one, runs the model and tallies the emitted class
//! per pixel. [`Engine::seg_certify`] runs the sampler twice (selection and
//! estimation), tests every pixel against the threshold `tau` and abstains
//! wherever the Holm-corrected test does not reject.
//!
//! All randomness comes from [`seed::derive`](crate::seed::derive) keyed by
//! `(seed, phase, draw)`, so results do not depend on how draws are scheduled
//! across threads.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{resize_labels_to, resize_to, ResizeMethod};
use crate::diffusion::{
    compute_timestep, denoise_multi_step, denoise_single_step, scale_into_diffusion,
    to_diffusion_domain, DenoiseMode, Denoiser, DiffusionSchedule,
};
use crate::error::{Error, Result};
use crate::image::{ClassId, Image, LabelMap};
use crate::models::SegmentationModel;
use crate::seed;
use crate::stats::{
    binomial_tail_pvalue, certified_radius, clopper_pearson_lower, holm_correct, SignificanceConfig,
};

/// Seed-path tag for the `n0` selection draws.
pub const SELECTION: u64 = 0;
/// Seed-path tag for the `n` estimation draws.
pub const ESTIMATION: u64 = 1;

const NOISE_KEY: u64 = 0;
const MODEL_KEY: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    pub sigma: f64,
    pub n0: usize,
    pub n: usize,
    pub significance: SignificanceConfig,
    pub denoise: DenoiseMode,
    pub seed: u64,
    /// Working-resolution factor. Noise, denoising and the model run on the
    /// resized image; labels are mapped back with nearest-neighbour.
    pub scale: f64,
}

impl SmoothingConfig {
    pub fn new(sigma: f64, n0: usize, n: usize, alpha: f64, tau: f64) -> Result<Self> {
        let config = Self {
            sigma,
            n0,
            n,
            significance: SignificanceConfig::new(alpha, tau)?,
            denoise: DenoiseMode::Off,
            seed: 0,
            scale: 1.0,
        };
        config.validate()?;
        Ok(config)
    }

    /// `sigma = 0` always samples without denoising.
    pub fn with_denoise(mut self, mode: DenoiseMode) -> Self {
        self.denoise = if self.sigma == 0.0 {
            DenoiseMode::Off
        } else {
            mode
        };
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        self.scale = scale;
        self.validate()?;
        Ok(self)
    }

    pub fn alpha(&self) -> f64 {
        self.significance.alpha()
    }

    pub fn tau(&self) -> f64 {
        self.significance.tau()
    }

    /// Mode actually used by the sampler.
    pub fn effective_denoise(&self) -> DenoiseMode {
        if self.sigma == 0.0 {
            DenoiseMode::Off
        } else {
            self.denoise
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::domain(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if self.n0 == 0 || self.n == 0 {
            return Err(Error::domain(format!(
                "n0 and n must be positive, got n0 = {}, n = {}",
                self.n0, self.n
            )));
        }
        if self.n > u32::MAX as usize || self.n0 > u32::MAX as usize {
            return Err(Error::Capacity("draw counts must fit in 32 bits".into()));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::domain(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    /// `sigma * Φ⁻¹(tau)`, or 0 without noise.
    pub fn radius(&self) -> Result<f64> {
        if self.sigma == 0.0 {
            return Ok(0.0);
        }
        certified_radius(self.sigma, self.tau())
    }
}

/// Per-pixel class vote counts, pixel-major (`counts[i * K + c]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountsTensor {
    height: usize,
    width: usize,
    num_classes: usize,
    draws: usize,
    counts: Vec<u32>,
}

impl CountsTensor {
    fn zeros(height: usize, width: usize, num_classes: usize) -> Self {
        Self {
            height,
            width,
            num_classes,
            draws: 0,
            counts: vec![0; height * width * num_classes],
        }
    }

    fn add_labels(&mut self, labels: &LabelMap) -> Result<()> {
        let k = self.num_classes;
        for (i, label) in labels.iter().enumerate() {
            let c = label
                .ok_or_else(|| Error::Validation(format!("model abstained at pixel {i}")))?
                as usize;
            if c >= k {
                return Err(Error::Validation(format!(
                    "model emitted class {c} at pixel {i}, but declares {k} classes"
                )));
            }
            self.counts[i * k + c] += 1;
        }
        self.draws += 1;
        Ok(())
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.draws += other.draws;
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.counts
    }

    pub fn pixel(&self, i: usize) -> &[u32] {
        &self.counts[i * self.num_classes..(i + 1) * self.num_classes]
    }

    /// Most frequent class at pixel `i`; ties go to the lowest id.
    pub fn top_class(&self, i: usize) -> ClassId {
        top_index(self.pixel(i)) as ClassId
    }
}

fn top_index(counts: &[u32]) -> usize {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate().skip(1) {
        if v > counts[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct CertificationResult {
    /// Certified class per pixel, `None` where the procedure abstains.
    pub labels: LabelMap,
    pub radius: f64,
    /// Row-major per-pixel p-values.
    pub pvalues: Vec<f64>,
    pub config: SmoothingConfig,
    pub counts0: CountsTensor,
    pub counts: CountsTensor,
    /// Diffusion timestep used when denoising.
    pub t_star: Option<usize>,
}

impl CertificationResult {
    pub fn abstain_rate(&self) -> f64 {
        self.labels.abstain_count() as f64 / self.labels.len() as f64
    }
}

/// Drives a segmentation model, and optionally a denoiser, through the
/// sampling and certification procedures.
pub struct Engine<'a> {
    model: &'a dyn SegmentationModel,
    denoiser: Option<(&'a dyn Denoiser, &'a DiffusionSchedule)>,
    parallel: bool,
}

impl<'a> Engine<'a> {
    pub fn new(model: &'a dyn SegmentationModel) -> Self {
        Self {
            model,
            denoiser: None,
            parallel: true,
        }
    }

    pub fn with_denoiser(
        mut self,
        denoiser: &'a dyn Denoiser,
        schedule: &'a DiffusionSchedule,
    ) -> Self {
        self.denoiser = Some((denoiser, schedule));
        self
    }

    /// Run draws one after another on the calling thread.
    pub fn sequential(mut self) -> Self {
        self.parallel = false;
        self
    }

    pub fn model(&self) -> &dyn SegmentationModel {
        self.model
    }

    fn timestep(&self, sigma: f64, mode: DenoiseMode) -> Result<Option<(usize, f64)>> {
        if mode == DenoiseMode::Off {
            return Ok(None);
        }
        let (_, schedule) = self
            .denoiser
            .ok_or_else(|| Error::Config(format!("denoise mode {mode} requires a denoiser")))?;
        let sol = compute_timestep(schedule, sigma)?;
        Ok(Some((sol.t_star, sol.alpha_bar)))
    }

    /// Noised, optionally denoised input for one draw.
    fn noisy_input(
        &self,
        x: &Image,
        sigma: f64,
        mode: DenoiseMode,
        timestep: Option<(usize, f64)>,
        noise_seed: u64,
    ) -> Result<Image> {
        if sigma == 0.0 {
            return Ok(x.clone());
        }
        let mut rng = seed::rng(noise_seed);
        let mut eta = Image::zeros_like(x);
        for v in eta.data_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = sigma * z;
        }
        match (mode, timestep, self.denoiser) {
            (DenoiseMode::Off, _, _) => {
                let mut noisy = eta;
                for (v, &xv) in noisy.data_mut().iter_mut().zip(x.data()) {
                    *v = (xv + *v).clamp(0.0, 1.0);
                }
                Ok(noisy)
            }
            (mode, Some((t_star, alpha_bar)), Some((denoiser, schedule))) => {
                // 2(x + eta) - 1 in the [-1, 1] domain, then scaled.
                let eta2 = eta.map(|v| 2.0 * v);
                let x_t = scale_into_diffusion(&to_diffusion_domain(x), &eta2, alpha_bar)?;
                if mode == DenoiseMode::MultiStep {
                    denoise_multi_step(denoiser, &x_t, t_star, schedule)
                } else {
                    denoise_single_step(denoiser, &x_t, t_star, schedule)
                }
            }
            _ => unreachable!("timestep is resolved for every denoising mode"),
        }
    }

    fn one_draw(
        &self,
        x: &Image,
        sigma: f64,
        mode: DenoiseMode,
        timestep: Option<(usize, f64)>,
        stream: u64,
        j: usize,
    ) -> Result<LabelMap> {
        let draw = seed::derive(stream, &[j as u64]);
        let input = self.noisy_input(x, sigma, mode, timestep, seed::derive(draw, &[NOISE_KEY]))?;
        let labels = self
            .model
            .predict(&input, seed::derive(draw, &[MODEL_KEY]))?;
        if !labels.same_dims(input.height(), input.width()) {
            return Err(Error::shape(format!(
                "model returned {}x{} labels for a {}x{} image",
                labels.height(),
                labels.width(),
                input.height(),
                input.width()
            )));
        }
        Ok(labels)
    }

    /// Tally model outputs over `n` noisy draws of `x` at full resolution.
    pub fn sample_counts(
        &self,
        x: &Image,
        n: usize,
        sigma: f64,
        mode: DenoiseMode,
        stream_seed: u64,
    ) -> Result<CountsTensor> {
        self.sample_counts_scaled(x, n, sigma, mode, stream_seed, 1.0)
    }

    /// As [`sample_counts`](Self::sample_counts), running noise, denoiser and
    /// model on `x` resized by `scale` (bilinear) and mapping each draw's
    /// labels back to the original size.
    pub fn sample_counts_scaled(
        &self,
        x: &Image,
        n: usize,
        sigma: f64,
        mode: DenoiseMode,
        stream_seed: u64,
        scale: f64,
    ) -> Result<CountsTensor> {
        if n == 0 {
            return Err(Error::domain("need at least one draw"));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::domain(format!("sigma must be >= 0, got {sigma}")));
        }
        if let Some(v) = x.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!(
                "image values must lie in [0, 1], found {v}"
            )));
        }
        let mode = if sigma == 0.0 { DenoiseMode::Off } else { mode };
        let timestep = self.timestep(sigma, mode)?;
        let (h, w) = (x.height(), x.width());
        let working = if scale == 1.0 {
            x.clone()
        } else {
            let th = (h as f64 * scale).round() as usize;
            let tw = (w as f64 * scale).round() as usize;
            resize_to(x, th, tw, ResizeMethod::Bilinear)?
        };
        let k = self.model.num_classes();

        let draw = |j: usize| -> Result<LabelMap> {
            let labels = self.one_draw(&working, sigma, mode, timestep, stream_seed, j)?;
            if labels.same_dims(h, w) {
                Ok(labels)
            } else {
                resize_labels_to(&labels, h, w)
            }
        };

        if self.parallel {
            (0..n)
                .into_par_iter()
                .try_fold(
                    || CountsTensor::zeros(h, w, k),
                    |mut acc, j| {
                        acc.add_labels(&draw(j)?)?;
                        Ok(acc)
                    },
                )
                .try_reduce(|| CountsTensor::zeros(h, w, k), |a, b| Ok(a.merge(b)))
        } else {
            let mut acc = CountsTensor::zeros(h, w, k);
            for j in 0..n {
                acc.add_labels(&draw(j)?)?;
            }
            Ok(acc)
        }
    }

    /// Predict and certify every pixel of `x`.
    ///
    /// With probability at least `1 - alpha` over the sampling, every
    /// non-abstained label is constant within an l2 ball of the returned
    /// radius around `x`.
    pub fn seg_certify(&self, x: &Image, config: &SmoothingConfig) -> Result<CertificationResult> {
        config.validate()?;
        let mode = config.effective_denoise();
        let selection = seed::derive(config.seed, &[SELECTION]);
        let estimation = seed::derive(config.seed, &[ESTIMATION]);
        let counts0 =
            self.sample_counts_scaled(x, config.n0, config.sigma, mode, selection, config.scale)?;
        let counts =
            self.sample_counts_scaled(x, config.n, config.sigma, mode, estimation, config.scale)?;

        let pixels = counts.pixel_count();
        let mut classes = Vec::with_capacity(pixels);
        let mut pvalues = Vec::with_capacity(pixels);
        for i in 0..pixels {
            let c = counts0.top_class(i);
            let hits = counts.pixel(i)[c as usize] as u64;
            pvalues.push(binomial_tail_pvalue(hits, config.n as u64, config.tau())?);
            classes.push(c);
        }
        let decision = holm_correct(&pvalues, config.alpha())?;
        let labels = classes
            .into_iter()
            .zip(&decision.reject)
            .map(|(c, &r)| r.then_some(c))
            .collect();

        Ok(CertificationResult {
            labels: LabelMap::new(x.height(), x.width(), labels)?,
            radius: config.radius()?,
            pvalues,
            config: *config,
            counts0,
            counts,
            t_star: self.timestep(config.sigma, mode)?.map(|(t, _)| t),
        })
    }
}

/// Outcome of the single-pixel reference certifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PixelCertificate {
    Certified { class: ClassId, radius: f64 },
    Abstain,
}

impl PixelCertificate {
    pub fn class(&self) -> Option<ClassId> {
        match self {
            PixelCertificate::Certified { class, .. } => Some(*class),
            PixelCertificate::Abstain => None,
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            PixelCertificate::Certified { radius, .. } => *radius,
            PixelCertificate::Abstain => 0.0,
        }
    }
}

/// Certify one pixel from its own selection and estimation counts, using a
/// Clopper-Pearson lower bound on the top-class probability.
pub fn cohen_certify_pixel(
    counts0: &[u32],
    counts: &[u32],
    n0: usize,
    n: usize,
    alpha: f64,
    sigma: f64,
) -> Result<PixelCertificate> {
    if counts0.len() != counts.len() || counts.is_empty() {
        return Err(Error::domain(format!(
            "count vectors must be non-empty and equally long, got {} and {}",
            counts0.len(),
            counts.len()
        )));
    }
    let s0: u64 = counts0.iter().map(|&v| v as u64).sum();
    let s: u64 = counts.iter().map(|&v| v as u64).sum();
    if s0 != n0 as u64 || s != n as u64 {
        return Err(Error::domain(format!(
            "counts sum to ({s0}, {s}), expected ({n0}, {n})"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let c = top_index(counts0);
    let lower = clopper_pearson_lower(counts[c] as u64, n as u64, alpha)?;
    if lower <= 0.5 {
        return Ok(PixelCertificate::Abstain);
    }
    Ok(PixelCertificate::Certified {
        class: c as ClassId,
        radius: certified_radius(sigma, lower)?,
    })
}
