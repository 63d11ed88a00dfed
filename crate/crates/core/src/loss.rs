//! Closed-form KL terms, the hybrid objective and the codec trainer.
//!
//! All losses are per-element means. With `q = N(mu_y, sigma_y^2)`:
//!
//! ```text
//! prior_kl    = mean 1/2 (mu_y^2 + sigma_y^2 - log sigma_y^2 - 1)
//! guidance_kl = mean log(sigma_y / sigma) + (sigma^2 + (mu_y - y)^2) / (2 sigma_y^2) - 1/2
//! mse         = mean (y_hat - s_hat)^2
//! total       = lambda * prior_kl + mse + gamma * guidance_kl
//! ```
//!
//! The diffusion model stays frozen; only the codec parameters are trained.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::codec::{reparameterize, CodecParams, GaussianParams};
use crate::error::{config_err, ensure_len, Error, Result};
use crate::latent::{Latent, Shape};
use crate::math::{db_to_linear, exp, ln, powf, sqrt};
use crate::metrics::psnr;
use crate::rng::{fill_normal, stream};
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda: 0.1,
            gamma: 0.1,
        }
    }
}

impl LossWeights {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(config_err("loss.lambda", "must be finite and nonnegative"));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(config_err("loss.gamma", "must be finite and nonnegative"));
        }
        Ok(LossWeights { lambda, gamma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_kl: f64,
    pub l_mse: f64,
    pub l_g: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(l_kl: f64, l_mse: f64, l_g: f64, w: LossWeights) -> Self {
        LossBreakdown {
            l_kl,
            l_mse,
            l_g,
            total: w.lambda * l_kl + l_mse + w.gamma * l_g,
        }
    }

    fn scaled_sum(items: &[LossBreakdown]) -> LossBreakdown {
        let k = items.len() as f64;
        let mut out = LossBreakdown::default();
        for b in items {
            out.l_kl += b.l_kl / k;
            out.l_mse += b.l_mse / k;
            out.l_g += b.l_g / k;
            out.total += b.total / k;
        }
        out
    }
}

fn check_sigmas(q: &GaussianParams) -> Result<()> {
    match q.sigma.iter().find(|&&s| !(s > 0.0)) {
        Some(&s) => Err(Error::Domain {
            what: "sigma_y",
            expected: "positive",
            value: s,
        }),
        None => Ok(()),
    }
}

/// KL( N(y, sigma^2) || N(mu_y, sigma_y^2) ), averaged over elements.
pub fn guidance_kl(y: &Latent, sigma: f64, q: &GaussianParams) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain {
            what: "sigma",
            expected: "positive",
            value: sigma,
        });
    }
    check_sigmas(q)?;
    ensure_len(y.len(), q.len())?;
    let s2 = sigma * sigma;
    let total: f64 = y
        .as_slice()
        .iter()
        .zip(&q.mu)
        .zip(&q.sigma)
        .map(|((&y, &mu), &sy)| {
            let d = mu - y;
            ln(sy / sigma) + (s2 + d * d) / (2.0 * sy * sy) - 0.5
        })
        .sum();
    Ok(total / y.len() as f64)
}

/// KL( N(mu_y, sigma_y^2) || N(0, 1) ), averaged over elements.
pub fn prior_kl(q: &GaussianParams) -> Result<f64> {
    check_sigmas(q)?;
    let total: f64 = q
        .mu
        .iter()
        .zip(&q.sigma)
        .map(|(&m, &s)| {
            let v = s * s;
            0.5 * (m * m + v - ln(v) - 1.0)
        })
        .sum();
    Ok(total / q.len() as f64)
}

/// `E[(y_hat - s_hat)^2]`, the parameter-dependent part of the reconstruction
/// error.
pub fn surrogate_mse(y_hat: &Latent, s_hat: &Latent) -> Result<f64> {
    crate::metrics::mse(y_hat, s_hat)
}

pub fn hybrid_loss(
    y: &Latent,
    sigma: f64,
    q: &GaussianParams,
    y_hat: &Latent,
    s_hat: &Latent,
    w: LossWeights,
) -> Result<LossBreakdown> {
    Ok(LossBreakdown::compose(
        prior_kl(q)?,
        surrogate_mse(y_hat, s_hat)?,
        guidance_kl(y, sigma, q)?,
        w,
    ))
}

/// Random draws consumed by one training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleNoise {
    /// Channel noise of the uncompressed path, one per latent element.
    pub uncompressed: Vec<f64>,
    /// Channel noise of the compressed path, one per transmitted element.
    pub compressed: Vec<f64>,
    /// Reparameterization noise `eps_y`.
    pub eps_y: Vec<f64>,
}

impl SampleNoise {
    /// With `common_random_numbers`, the compressed path reuses the leading
    /// draws of the uncompressed path.
    pub fn draw<R: Rng + ?Sized>(params: &CodecParams, common_random_numbers: bool, rng: &mut R) -> Self {
        let n = params.shape.len();
        let m = params.compressed_len;
        let mut uncompressed = vec![0.0; n];
        fill_normal(rng, &mut uncompressed);
        let compressed = if common_random_numbers {
            uncompressed[..m].to_vec()
        } else {
            let mut c = vec![0.0; m];
            fill_normal(rng, &mut c);
            c
        };
        let mut eps_y = vec![0.0; n];
        fill_normal(rng, &mut eps_y);
        SampleNoise {
            uncompressed,
            compressed,
            eps_y,
        }
    }
}

/// Forward pass of one sample and, if `grad` is given, accumulation of
/// `scale * dL/dparams` into it.
pub fn sample_loss(
    params: &CodecParams,
    y: &Latent,
    sigma: f64,
    snr: f64,
    noise: &SampleNoise,
    w: LossWeights,
    grad: Option<(&mut CodecParams, f64)>,
) -> Result<LossBreakdown> {
    let n = params.shape.len();
    ensure_len(n, y.len())?;
    let s_hat = Latent::from_parts(
        y.as_slice()
            .iter()
            .zip(&noise.uncompressed)
            .map(|(y, e)| y + sigma * e)
            .collect(),
        y.shape(),
    );
    let (z, down_cache) = params.down_forward(y.as_slice());
    let z_hat: Vec<f64> = z
        .iter()
        .zip(&noise.compressed)
        .map(|(z, e)| z + sigma * e)
        .collect();
    let feature = params.arch.snr_feature(snr);
    let (mu, logvar, up_cache) = params.up_forward(&z_hat, feature)?;
    let sig_y: Vec<f64> = logvar.iter().map(|&l| exp(0.5 * l)).collect();
    let y_hat_v = reparameterize(&mu, &sig_y, &noise.eps_y);
    let q = GaussianParams { mu, sigma: sig_y };
    let y_hat = Latent::from_parts(y_hat_v, y.shape());
    let breakdown = hybrid_loss(y, sigma, &q, &y_hat, &s_hat, w)?;
    if !breakdown.total.is_finite() {
        return Ok(breakdown);
    }

    if let Some((grad, scale)) = grad {
        let inv_n = scale / n as f64;
        let s2 = sigma * sigma;
        let mut dmu = vec![0.0; n];
        let mut dlv = vec![0.0; n];
        for i in 0..n {
            let (m, l, sy) = (q.mu[i], logvar[i], q.sigma[i]);
            let yi = y.as_slice()[i];
            let resid = y_hat.as_slice()[i] - s_hat.as_slice()[i];
            let inv_var = exp(-l);
            let dev = m - yi;
            // d/dmu and d/dlogvar of lambda*KL_prior + MSE + gamma*KL_guide.
            dmu[i] = inv_n * (w.lambda * m + 2.0 * resid + w.gamma * dev * inv_var);
            dlv[i] = inv_n
                * (w.lambda * 0.5 * (sy * sy - 1.0)
                    + resid * noise.eps_y[i] * sy
                    + w.gamma * 0.5 * (1.0 - (s2 + dev * dev) * inv_var));
        }
        let dz = params.up_backward(&up_cache, &dmu, &dlv, grad);
        params.down_backward(&down_cache, &dz, grad);
    }
    Ok(breakdown)
}

/// Mean loss over a batch and, if requested, the mean gradient.
pub fn batch_loss(
    params: &CodecParams,
    batch: &[(Latent, SampleNoise)],
    sigma: f64,
    snr: f64,
    w: LossWeights,
    mut grad: Option<&mut CodecParams>,
) -> Result<LossBreakdown> {
    let scale = 1.0 / batch.len() as f64;
    let mut parts = Vec::with_capacity(batch.len());
    for (y, noise) in batch {
        let g = grad.as_deref_mut().map(|g| (g, scale));
        parts.push(sample_loss(params, y, sigma, snr, noise, w, g)?);
    }
    Ok(LossBreakdown::scaled_sum(&parts))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    /// Channel SNR in dB; noise variance is `10^(-snr/10)` at unit power.
    pub snr_db: f64,
    /// Evaluate held-out PSNR every this many steps (0 disables).
    pub eval_every: usize,
    pub eval_seed: u64,
    pub peak: f64,
    pub common_random_numbers: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch: 4,
            lr: 1e-4,
            optimizer: Optimizer::adam(),
            snr_db: 5.0,
            eval_every: 100,
            eval_seed: 0,
            peak: 1.0,
            common_random_numbers: false,
        }
    }
}

impl TrainConfig {
    pub fn sigma(&self) -> f64 {
        sqrt(db_to_linear(-self.snr_db))
    }

    pub fn snr_linear(&self) -> f64 {
        db_to_linear(self.snr_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: LossBreakdown,
    pub eval_psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: CodecParams,
    pub log: Vec<LogRow>,
    pub initial_eval_psnr: Option<f64>,
    pub final_eval_psnr: Option<f64>,
}

/// Mean PSNR of the reparameterized reconstruction `y_hat` against `y` over
/// `held_out`, with channel and sampling noise drawn from `seed`.
pub fn evaluate_reconstruction(
    params: &CodecParams,
    held_out: &[Latent],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    if held_out.is_empty() {
        return Err(config_err("train.held_out", "must not be empty"));
    }
    let mut rng = stream(seed);
    let sigma = cfg.sigma();
    let mut total = 0.0;
    for y in held_out {
        let down = crate::codec::downsample(y, params)?;
        let mut noise = vec![0.0; params.compressed_len];
        fill_normal(&mut rng, &mut noise);
        let z_hat: Vec<f64> = down
            .z
            .as_slice()
            .iter()
            .zip(&noise)
            .map(|(z, e)| z + sigma * e)
            .collect();
        let up = crate::codec::upsample(
            &Latent::from_parts(z_hat, Shape::flat(params.compressed_len)),
            cfg.snr_linear(),
            params,
            &mut rng,
        )?;
        total += psnr(&up.sample, y, cfg.peak)?;
    }
    Ok(total / held_out.len() as f64)
}

struct OptimizerState {
    first: CodecParams,
    second: Option<CodecParams>,
    t: i32,
}

impl OptimizerState {
    fn new(params: &CodecParams, opt: Optimizer) -> Self {
        OptimizerState {
            first: params.zeros_like(),
            second: matches!(opt, Optimizer::Adam { .. }).then(|| params.zeros_like()),
            t: 0,
        }
    }

    fn apply(&mut self, params: &mut CodecParams, grad: &CodecParams, opt: Optimizer, lr: f64) {
        self.t += 1;
        let g = grad.arrays();
        match opt {
            Optimizer::Sgd { momentum } => {
                for ((p, m), (_, g)) in params.arrays_mut().into_iter().zip(self.first.arrays_mut()).zip(&g) {
                    for ((p, m), g) in p.iter_mut().zip(m.iter_mut()).zip(g.iter()) {
                        *m = momentum * *m + g;
                        *p -= lr * *m;
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let second = self.second.as_mut().expect("adam state");
                let c1 = 1.0 - powf(beta1, f64::from(self.t));
                let c2 = 1.0 - powf(beta2, f64::from(self.t));
                for (((p, m), v), (_, g)) in params
                    .arrays_mut()
                    .into_iter()
                    .zip(self.first.arrays_mut())
                    .zip(second.arrays_mut())
                    .zip(&g)
                {
                    for (((p, m), v), g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.iter()) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *p -= lr * (*m / c1) / (sqrt(*v / c2) + eps);
                    }
                }
            }
        }
    }
}

/// Trains the codec on `dataset` with the hybrid objective.
///
/// Each step draws `batch` latents with replacement, simulates both the
/// uncompressed path `s_hat = y + sigma eps` and the compressed path
/// `z_hat = F_d(y) + sigma eps2`, reconstructs `y_hat` and takes one optimizer
/// step. `schedule` only validates that the channel noise maps onto a step.
pub fn train_codec<R: Rng + ?Sized>(
    dataset: &[Latent],
    held_out: &[Latent],
    schedule: &Schedule,
    mut params: CodecParams,
    w: LossWeights,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(config_err("source.count", "training set must not be empty"));
    }
    if cfg.batch == 0 {
        return Err(config_err("train.batch", "must be at least 1"));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(config_err("train.lr", "must be positive"));
    }
    let sigma = cfg.sigma();
    schedule.sigma2_to_step(sigma * sigma)?;
    let snr = cfg.snr_linear();
    let evaluate = cfg.eval_every > 0 && !held_out.is_empty();
    let initial_eval_psnr = if evaluate {
        Some(evaluate_reconstruction(&params, held_out, cfg, cfg.eval_seed)?)
    } else {
        None
    };

    let mut state = OptimizerState::new(&params, cfg.optimizer);
    let mut grad = params.zeros_like();
    let mut log = Vec::with_capacity(cfg.steps);
    let mut last_finite = None;
    for step in 1..=cfg.steps {
        let batch: Vec<(Latent, SampleNoise)> = (0..cfg.batch)
            .map(|_| {
                let y = dataset[rng.random_range(0..dataset.len())].clone();
                let noise = SampleNoise::draw(&params, cfg.common_random_numbers, rng);
                (y, noise)
            })
            .collect();
        for a in grad.arrays_mut() {
            a.fill(0.0);
        }
        let loss = batch_loss(&params, &batch, sigma, snr, w, Some(&mut grad))?;
        if !loss.total.is_finite() || !grad.is_finite() {
            return Err(Error::TrainingAborted {
                last_finite_step: last_finite,
            });
        }
        state.apply(&mut params, &grad, cfg.optimizer, cfg.lr);
        if !params.is_finite() {
            return Err(Error::TrainingAborted {
                last_finite_step: last_finite,
            });
        }
        last_finite = Some(step);
        let eval_psnr = if evaluate && step % cfg.eval_every == 0 {
            Some(evaluate_reconstruction(&params, held_out, cfg, cfg.eval_seed)?)
        } else {
            None
        };
        log.push(LogRow {
            step,
            loss,
            eval_psnr,
        });
    }
    let final_eval_psnr = if evaluate {
        Some(evaluate_reconstruction(&params, held_out, cfg, cfg.eval_seed)?)
    } else {
        None
    };
    Ok(TrainOutcome {
        params,
        log,
        initial_eval_psnr,
        final_eval_psnr,
    })
}

/// Trailing moving average with the given window, one value per input.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, &v) in values.iter().enumerate() {
        acc += v;
        if i >= window {
            acc -= values[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}
