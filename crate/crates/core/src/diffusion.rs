//! Diffusion noise schedules, the sigma-to-timestep solver and denoiser drivers.
//!
//! Timesteps are 0-based indices into the schedule, as in common DDPM code:
//! `alpha_bar[t] = Π_{s<=t} (1 - beta[s])`. A noisy observation `x + η` with
//! `η ~ N(0, σ²I)` is matched to the timestep whose noise-to-signal ratio
//! `(1 - alpha_bar[t]) / alpha_bar[t]` brackets `σ²` from below, then moved
//! into diffusion space as `sqrt(alpha_bar[t*]) · (2(x + η) - 1)`.
//!
//! Denoisers always see the image-domain view of the current iterate (clean
//! image plus Gaussian noise of a known standard deviation), so an analytic
//! denoiser never has to know about the `[-1, 1]` remapping.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::image::Image;

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Per-timestep `beta` values and their cumulative products `alpha_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    /// Linearly spaced `beta` from `beta_start` to `beta_end` over `steps` timesteps.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::domain("schedule needs at least one timestep"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::domain(format!(
                "schedule endpoints must satisfy 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
            )));
        }
        let betas = (0..steps)
            .map(|t| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + t as f64 / (steps - 1) as f64 * (beta_end - beta_start)
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    /// The 1000-step linear schedule from 1e-4 to 0.02.
    pub fn default_linear() -> Self {
        Self::linear(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule is valid")
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::domain("schedule needs at least one timestep"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::domain(format!(
                "beta values must lie in (0, 1), got {b}"
            )));
        }
        let alpha_bars = betas
            .iter()
            .scan(1.0, |acc, b| {
                *acc *= 1.0 - b;
                Some(*acc)
            })
            .collect();
        Ok(Self { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// `(1 - alpha_bar[t]) / alpha_bar[t]`, the noise variance in image units at `t`.
    pub fn noise_ratio(&self, t: usize) -> f64 {
        let ab = self.alpha_bars[t];
        (1.0 - ab) / ab
    }

    pub fn noise_std(&self, t: usize) -> f64 {
        self.noise_ratio(t).sqrt()
    }

    /// Open-closed range `(min, max]` of sigma values [`compute_timestep`] accepts.
    pub fn sigma_range(&self) -> (f64, f64) {
        let last = self.steps() - 1;
        let min = if self.steps() > 1 {
            self.noise_std(1)
        } else {
            f64::INFINITY
        };
        (min, self.noise_std(last))
    }

    fn check_timestep(&self, t: usize) -> Result<()> {
        if t == 0 || t >= self.steps() {
            return Err(Error::domain(format!(
                "timestep {t} outside [1, {}]",
                self.steps() - 1
            )));
        }
        Ok(())
    }
}

/// Timestep matched to a smoothing sigma, with its cumulative product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimestepSolution {
    pub t_star: usize,
    pub alpha_bar: f64,
}

/// Find the timestep `t*` whose noise level matches `sigma`.
///
/// `t*` is the last timestep whose noise ratio is still below `sigma²`, so
/// `ratio(t*) < sigma² <= ratio(t* + 1)`. With the default schedule this gives
/// 258 at `sigma = 1`.
pub fn compute_timestep(schedule: &DiffusionSchedule, sigma: f64) -> Result<TimestepSolution> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let target = sigma * sigma;
    let below = schedule
        .alpha_bars
        .partition_point(|&ab| (1.0 - ab) / ab < target);
    if below < 2 || below == schedule.steps() {
        let (min, max) = schedule.sigma_range();
        return Err(Error::SigmaOutOfRange { sigma, min, max });
    }
    let t_star = below - 1;
    Ok(TimestepSolution {
        t_star,
        alpha_bar: schedule.alpha_bar(t_star),
    })
}

/// Map `[0, 1]` pixel values to the `[-1, 1]` diffusion domain.
pub fn to_diffusion_domain(x: &Image) -> Image {
    x.map(|v| 2.0 * v - 1.0)
}

/// Inverse of [`to_diffusion_domain`].
pub fn from_diffusion_domain(z: &Image) -> Image {
    z.map(|v| 0.5 * (v + 1.0))
}

/// `sqrt(alpha_bar) * (x + eta)`, elementwise.
pub fn scale_into_diffusion(x: &Image, eta: &Image, alpha_bar: f64) -> Result<Image> {
    if !x.same_shape(eta) {
        return Err(Error::shape(format!(
            "noise field {}x{}x{} does not match image {}x{}x{}",
            eta.height(),
            eta.width(),
            eta.channels(),
            x.height(),
            x.width(),
            x.channels()
        )));
    }
    if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
        return Err(Error::domain(format!(
            "alpha_bar must lie in (0, 1], got {alpha_bar}"
        )));
    }
    let scale = alpha_bar.sqrt();
    let data = x
        .data()
        .iter()
        .zip(eta.data())
        .map(|(a, e)| scale * (a + e))
        .collect();
    Image::new(x.height(), x.width(), x.channels(), data)
}

/// Image-domain view of a diffusion iterate: `from_diffusion_domain(x_t / sqrt(alpha_bar))`.
pub fn unscale_from_diffusion(x_t: &Image, alpha_bar: f64) -> Image {
    let inv = 1.0 / alpha_bar.sqrt();
    x_t.map(|v| 0.5 * (v * inv + 1.0))
}

/// Noise level handed to a denoiser alongside the iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevel {
    pub timestep: usize,
    /// Standard deviation of the Gaussian noise on the iterate, in image units.
    pub std: f64,
}

/// A pure mapping from a noisy image at a known noise level to an estimate
/// of the clean image.
///
/// Implementations must be deterministic in `(noisy, level)` and return an
/// image of the same shape. The drivers clamp the estimate to `[0, 1]`.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, noisy: &Image, level: NoiseLevel) -> Result<Image>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn denoise(&self, noisy: &Image, level: NoiseLevel) -> Result<Image> {
        (**self).denoise(noisy, level)
    }
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, noisy: &Image, _level: NoiseLevel) -> Result<Image> {
        Ok(noisy.clone())
    }
}

/// Wraps a denoiser and counts invocations.
#[derive(Debug, Default)]
pub struct CountingDenoiser<D> {
    inner: D,
    calls: AtomicUsize,
}

impl<D: Denoiser> CountingDenoiser<D> {
    pub fn new(inner: D) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &D {
        &self.inner
    }
}

impl<D: Denoiser> Denoiser for CountingDenoiser<D> {
    fn denoise(&self, noisy: &Image, level: NoiseLevel) -> Result<Image> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.denoise(noisy, level)
    }
}

fn invoke(
    d: &dyn Denoiser,
    noisy: &Image,
    schedule: &DiffusionSchedule,
    t: usize,
) -> Result<Image> {
    let level = NoiseLevel {
        timestep: t,
        std: schedule.noise_std(t),
    };
    let out = d.denoise(noisy, level).map_err(|e| match e {
        e @ Error::Denoiser { .. } => e,
        other => Error::Denoiser {
            timestep: t,
            message: other.to_string(),
        },
    })?;
    if !out.same_shape(noisy) {
        return Err(Error::Denoiser {
            timestep: t,
            message: format!(
                "output shape {}x{}x{} differs from input {}x{}x{}",
                out.height(),
                out.width(),
                out.channels(),
                noisy.height(),
                noisy.width(),
                noisy.channels()
            ),
        });
    }
    Ok(out.clamped())
}

/// One denoiser call predicting the clean image directly from `x_t`.
pub fn denoise_single_step(
    d: &dyn Denoiser,
    x_t: &Image,
    t_star: usize,
    schedule: &DiffusionSchedule,
) -> Result<Image> {
    schedule.check_timestep(t_star)?;
    let noisy = unscale_from_diffusion(x_t, schedule.alpha_bar(t_star));
    invoke(d, &noisy, schedule, t_star)
}

/// Deterministic reverse process from `t_star` down to 1, one call per step.
///
/// Each intermediate step replaces the iterate with the DDPM posterior mean,
/// which in image coordinates is the convex combination
/// `w·x̂₀ + (1 - w)·u_t` with `w = beta[t] / (1 - alpha_bar[t])`. The call at
/// `t = 1` returns its clean estimate, so exactly `t_star` calls are made.
pub fn denoise_multi_step(
    d: &dyn Denoiser,
    x_t: &Image,
    t_star: usize,
    schedule: &DiffusionSchedule,
) -> Result<Image> {
    schedule.check_timestep(t_star)?;
    let mut iterate = unscale_from_diffusion(x_t, schedule.alpha_bar(t_star));
    for t in (1..=t_star).rev() {
        let estimate = invoke(d, &iterate, schedule, t)?;
        if t == 1 {
            return Ok(estimate);
        }
        let w = schedule.beta(t) / (1.0 - schedule.alpha_bar(t));
        for (u, x0) in iterate.data_mut().iter_mut().zip(estimate.data()) {
            *u = w * x0 + (1.0 - w) * *u;
        }
    }
    unreachable!("t_star >= 1 is checked above")
}

/// How noisy draws are denoised before segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenoiseMode {
    #[default]
    Off,
    SingleStep,
    MultiStep,
}

impl DenoiseMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DenoiseMode::Off => "off",
            DenoiseMode::SingleStep => "single_step",
            DenoiseMode::MultiStep => "multi_step",
        }
    }
}

impl fmt::Display for DenoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DenoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "off" | "none" => Ok(DenoiseMode::Off),
            "single_step" | "single" => Ok(DenoiseMode::SingleStep),
            "multi_step" | "multi" => Ok(DenoiseMode::MultiStep),
            other => Err(Error::Config(format!(
                "unknown denoise mode '{other}' (expected off, single_step or multi_step)"
            ))),
        }
    }
}

/// Gaussian-mixture prior over clean pixel intensities: `Σ w_c N(μ_c, s²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePrior {
    means: Vec<f64>,
    weights: Vec<f64>,
    within_std: f64,
}

impl MixturePrior {
    pub fn new(means: Vec<f64>, weights: Vec<f64>, within_std: f64) -> Result<Self> {
        if means.is_empty() || means.len() != weights.len() {
            return Err(Error::domain(format!(
                "mixture needs matching non-empty means and weights, got {} and {}",
                means.len(),
                weights.len()
            )));
        }
        if !(within_std > 0.0) {
            return Err(Error::domain(format!(
                "within-class std must be positive, got {within_std}"
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::domain(
                "mixture weights must be non-negative and sum to 1",
            ));
        }
        Ok(Self {
            means,
            weights,
            within_std,
        })
    }

    /// Equal weights over `means`.
    pub fn uniform(means: Vec<f64>, within_std: f64) -> Result<Self> {
        let k = means.len().max(1);
        Self::new(means, vec![1.0 / k as f64; k], within_std)
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn within_std(&self) -> f64 {
        self.within_std
    }
}

/// Per-sample posterior mean `E[x₀ | observed]` under `prior` and additive
/// noise `N(0, sigma_eff²)`.
pub fn posterior_mean_denoise(
    prior: &MixturePrior,
    observed: &Image,
    sigma_eff: f64,
) -> Result<Image> {
    posterior_mean_denoise_pooled(prior, observed, sigma_eff, 0)
}

/// Posterior mean under a prior where every `(2r+1)²` window shares one
/// mixture component.
///
/// Component responsibilities come from the window mean, whose variance is
/// `(s² + σ²)/m` for `m` in-bounds samples; each sample is then shrunk towards
/// the component means with the usual Wiener weights. `radius = 0` is the
/// plain per-sample posterior mean.
pub fn posterior_mean_denoise_pooled(
    prior: &MixturePrior,
    observed: &Image,
    sigma_eff: f64,
    radius: usize,
) -> Result<Image> {
    if !(sigma_eff >= 0.0) || !sigma_eff.is_finite() {
        return Err(Error::domain(format!(
            "effective noise std must be finite and >= 0, got {sigma_eff}"
        )));
    }
    let (h, w, ch) = (observed.height(), observed.width(), observed.channels());
    let s2 = prior.within_std * prior.within_std;
    let n2 = sigma_eff * sigma_eff;
    let total = s2 + n2;
    let log_w: Vec<f64> = prior.weights.iter().map(|w| w.ln()).collect();
    let k = prior.means.len();

    // Summed-area table per channel, (h+1)x(w+1).
    let stride = w + 1;
    let mut sat = vec![0.0; (h + 1) * stride * ch];
    for c in 0..ch {
        let base = c * (h + 1) * stride;
        for r in 0..h {
            let mut row_sum = 0.0;
            for col in 0..w {
                row_sum += observed.get(r, col, c);
                sat[base + (r + 1) * stride + col + 1] = sat[base + r * stride + col + 1] + row_sum;
            }
        }
    }

    let mut out = Image::zeros_like(observed);
    let mut logr = vec![0.0; k];
    for r in 0..h {
        let (r0, r1) = (r.saturating_sub(radius), (r + radius + 1).min(h));
        for col in 0..w {
            let (c0, c1) = (col.saturating_sub(radius), (col + radius + 1).min(w));
            let m = ((r1 - r0) * (c1 - c0)) as f64;
            let var = total / m;
            for c in 0..ch {
                let base = c * (h + 1) * stride;
                let sum = sat[base + r1 * stride + c1]
                    - sat[base + r0 * stride + c1]
                    - sat[base + r1 * stride + c0]
                    + sat[base + r0 * stride + c0];
                let mean = sum / m;
                for (j, (mu, lw)) in prior.means.iter().zip(&log_w).enumerate() {
                    let d = mean - mu;
                    logr[j] = lw - d * d / (2.0 * var);
                }
                let peak = logr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let y = observed.get(r, col, c);
                let (mut num, mut den) = (0.0, 0.0);
                for (j, mu) in prior.means.iter().enumerate() {
                    let resp = (logr[j] - peak).exp();
                    num += resp * (mu * n2 + y * s2) / total;
                    den += resp;
                }
                out.set(r, col, c, num / den);
            }
        }
    }
    Ok(out)
}

/// Analytic stand-in for a pretrained diffusion denoiser: the (optionally
/// window-pooled) posterior mean under a known mixture prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMeanDenoiser {
    prior: MixturePrior,
    pool_radius: usize,
}

impl PosteriorMeanDenoiser {
    pub fn new(prior: MixturePrior, pool_radius: usize) -> Self {
        Self { prior, pool_radius }
    }

    pub fn prior(&self) -> &MixturePrior {
        &self.prior
    }

    pub fn pool_radius(&self) -> usize {
        self.pool_radius
    }
}

impl Denoiser for PosteriorMeanDenoiser {
    fn denoise(&self, noisy: &Image, level: NoiseLevel) -> Result<Image> {
        posterior_mean_denoise_pooled(&self.prior, noisy, level.std, self.pool_radius)
    }
}
