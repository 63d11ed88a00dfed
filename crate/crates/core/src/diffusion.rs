//! Forward process, reverse (ancestral) denoising, noise compensation and the
//! adaptive receive loop.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::latent::Latent;
use crate::math::sqrt;
use crate::rng::normal;
use crate::schedule::{Schedule, StepMapping};

/// Noise predictor `eps_hat(y_t, t)` of a frozen diffusion model.
pub trait Denoiser {
    /// Output must have the same shape as `y_t` and be deterministic.
    fn predict_noise(&self, y_t: &Latent, t: usize) -> Latent;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_noise(&self, y_t: &Latent, t: usize) -> Latent {
        (**self).predict_noise(y_t, t)
    }
}

/// I.i.d. Gaussian source `y0 ~ N(mean, variance)` per element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSourceModel {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianSourceModel {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !mean.is_finite() || !variance.is_finite() {
            return Err(Error::Domain {
                what: "source variance",
                expected: "finite and nonnegative",
                value: variance,
            });
        }
        Ok(GaussianSourceModel { mean, variance })
    }

    pub fn sample<R: Rng + ?Sized>(&self, shape: crate::Shape, rng: &mut R) -> Latent {
        let sd = sqrt(self.variance);
        let data = (0..shape.len()).map(|_| self.mean + sd * normal(rng)).collect();
        Latent::from_parts(data, shape)
    }
}

/// Exact noise predictor for an i.i.d. Gaussian source:
/// `eps_hat = sqrt(1 - ab) (y_t - sqrt(ab) m) / (ab v + 1 - ab)`.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianDenoiser {
    model: GaussianSourceModel,
    schedule: Schedule,
}

impl AnalyticGaussianDenoiser {
    pub fn new(model: GaussianSourceModel, schedule: &Schedule) -> Self {
        AnalyticGaussianDenoiser {
            model,
            schedule: schedule.clone(),
        }
    }
}

impl Denoiser for AnalyticGaussianDenoiser {
    fn predict_noise(&self, y_t: &Latent, t: usize) -> Latent {
        let ab = self.schedule.alpha_bar(t);
        let s = sqrt(ab);
        let num = sqrt(1.0 - ab);
        let den = ab * self.model.variance + 1.0 - ab;
        let data = y_t
            .as_slice()
            .iter()
            .map(|&y| num * (y - s * self.model.mean) / den)
            .collect();
        Latent::from_parts(data, y_t.shape())
    }
}

/// `sqrt(ab_t) y0 + sqrt(1 - ab_t) eps`.
pub fn forward_sample<R: Rng + ?Sized>(
    y0: &Latent,
    t: usize,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<Latent> {
    schedule.check_step(t)?;
    if t == 0 {
        return Ok(y0.clone());
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (sqrt(ab), sqrt(1.0 - ab));
    let data = y0.as_slice().iter().map(|&y| a * y + b * normal(rng)).collect();
    Ok(Latent::from_parts(data, y0.shape()))
}

/// Variance of the reverse kernel at `t`:
/// `(1 - ab_{t-1}) (1 - alpha_t) / (1 - ab_t)`. Zero at `t = 1`.
pub fn posterior_variance(schedule: &Schedule, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidStep);
    }
    schedule.check_step(t)?;
    let ab_prev = schedule.alpha_bar(t - 1);
    Ok((1.0 - ab_prev) * (1.0 - schedule.alpha(t)) / (1.0 - schedule.alpha_bar(t)))
}

/// Mean of the reverse kernel:
/// `(y_t - (1 - alpha_t) / sqrt(1 - ab_t) eps_hat) / sqrt(alpha_t)`.
pub fn posterior_mean(y_t: &Latent, eps_hat: &Latent, t: usize, schedule: &Schedule) -> Latent {
    let alpha = schedule.alpha(t);
    let coef = (1.0 - alpha) / sqrt(1.0 - schedule.alpha_bar(t));
    let inv = 1.0 / sqrt(alpha);
    let data = y_t
        .as_slice()
        .iter()
        .zip(eps_hat.as_slice())
        .map(|(&y, &e)| inv * (y - coef * e))
        .collect();
    Latent::from_parts(data, y_t.shape())
}

/// One ancestral step `y_{t-1} ~ N(mu(y_t, t), Sigma_t)`.
pub fn reverse_step<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    y_t: &Latent,
    t: usize,
    denoiser: &D,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<Latent> {
    let var = posterior_variance(schedule, t)?;
    let eps_hat = denoiser.predict_noise(y_t, t);
    y_t.check_same_shape(&eps_hat)?;
    let mut mean = posterior_mean(y_t, &eps_hat, t, schedule);
    if var > 0.0 {
        let sd = sqrt(var);
        for x in mean.as_mut_slice() {
            *x += sd * normal(rng);
        }
    }
    Ok(mean)
}

/// Brings a received signal with channel variance `sigma2` to the forward
/// state at `target`: `sqrt(ab_T) (s_hat + sqrt(compensation) eps')`.
pub fn compensate_to_step<R: Rng + ?Sized>(
    s_hat: &Latent,
    sigma2: f64,
    target: usize,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<Latent> {
    let extra = schedule.compensation_variance(target, sigma2)?;
    let scale = sqrt(schedule.alpha_bar(target));
    let sd = sqrt(extra);
    let data = s_hat
        .as_slice()
        .iter()
        .map(|&s| {
            if sd > 0.0 {
                scale * (s + sd * normal(rng))
            } else {
                scale * s
            }
        })
        .collect();
    Ok(Latent::from_parts(data, s_hat.shape()))
}

/// Treats the channel noise as the full forward noise: returns
/// `sqrt(ab_u) s_hat` and the step `u` it corresponds to.
pub fn adaptive_receive(
    s_hat: &Latent,
    sigma2: f64,
    schedule: &Schedule,
) -> Result<(Latent, StepMapping)> {
    let mapping = schedule.sigma2_to_step(sigma2)?;
    Ok((s_hat.scaled(mapping.scale), mapping))
}

/// Runs the reverse process from step `u` down to 0.
pub fn denoise_from_step<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    y_u: &Latent,
    u: usize,
    denoiser: &D,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<Latent> {
    schedule.check_step(u)?;
    let mut y = y_u.clone();
    for t in (1..=u).rev() {
        y = reverse_step(&y, t, denoiser, schedule, rng)?;
    }
    Ok(y)
}

/// How the fixed-step baseline reaches `target` steps of denoising.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixedStepVariant {
    /// Compensate to index `target` of the full schedule and run `target`
    /// reverse steps.
    #[default]
    Truncated,
    /// Compensate to the last step of the full schedule and denoise with a
    /// `target`-step respaced schedule.
    Respaced,
}

/// Receiver strategy for a channel output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiveMode {
    Adaptive,
    FixedStep {
        target: usize,
        variant: FixedStepVariant,
    },
}

/// Full receiver: maps the received latent into the forward process per
/// `mode` and denoises it. Returns the estimate and the reverse steps run.
pub fn receive_and_denoise<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    s_hat: &Latent,
    sigma2: f64,
    mode: ReceiveMode,
    denoiser: &D,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<(Latent, usize)> {
    match mode {
        ReceiveMode::Adaptive => {
            let (y_u, mapping) = adaptive_receive(s_hat, sigma2, schedule)?;
            let out = denoise_from_step(&y_u, mapping.step, denoiser, schedule, rng)?;
            Ok((out, mapping.step))
        }
        ReceiveMode::FixedStep {
            target,
            variant: FixedStepVariant::Truncated,
        } => {
            let y_t = compensate_to_step(s_hat, sigma2, target, schedule, rng)?;
            let out = denoise_from_step(&y_t, target, denoiser, schedule, rng)?;
            Ok((out, target))
        }
        ReceiveMode::FixedStep {
            target,
            variant: FixedStepVariant::Respaced,
        } => {
            let respaced = schedule.respaced(target)?;
            let full = schedule.steps();
            let y_t = compensate_to_step(s_hat, sigma2, full, schedule, rng)?;
            let remap = RemappedDenoiser {
                inner: denoiser,
                steps: full,
                respaced_steps: target,
            };
            let out = denoise_from_step(&y_t, target, &remap, &respaced, rng)?;
            Ok((out, target))
        }
    }
}

/// Presents a denoiser trained on the full schedule to a respaced schedule.
struct RemappedDenoiser<'a, D: ?Sized> {
    inner: &'a D,
    steps: usize,
    respaced_steps: usize,
}

impl<D: Denoiser + ?Sized> Denoiser for RemappedDenoiser<'_, D> {
    fn predict_noise(&self, y_t: &Latent, t: usize) -> Latent {
        self.inner
            .predict_noise(y_t, (t * self.steps).div_ceil(self.respaced_steps))
    }
}

/// Reverse-step indices visited when denoising from `u`.
pub fn reverse_steps(u: usize) -> Vec<usize> {
    (1..=u).rev().collect()
}
