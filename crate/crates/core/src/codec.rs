//! Bandwidth compression codec.
//!
//! The downsampler maps a latent of `n = w*h*c` reals to `m = k*n` reals
//! through a residual block, a linear projection and a second residual block,
//! optionally normalized to unit mean symbol power. The upsampler mirrors it
//! and ends in two heads: the mean `mu_y` and a clamped log-variance fed by
//! the channel SNR. Samples are drawn by reparameterization,
//! `y_hat = mu_y + sigma_y * eps_y`.
//!
//! Residual blocks are dense bottlenecks `x + W2 leaky(W1 x + b1) + b2`.
//! Every layer keeps a cache from its forward pass so the loss module can run
//! exact reverse-mode differentiation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{config_err, ensure_len, Error, Result};
use crate::latent::{Latent, Shape};
use crate::math::{exp, linear_to_db, sqrt};
use crate::rng::normal;

const LEAKY_SLOPE: f64 = 0.01;
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// Diagonal Gaussian `N(mu, sigma^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        ensure_len(mu.len(), sigma.len())?;
        if let Some(&s) = sigma.iter().find(|&&s| !(s > 0.0)) {
            return Err(Error::Domain {
                what: "sigma_y",
                expected: "positive",
                value: s,
            });
        }
        Ok(GaussianParams { mu, sigma })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// `mu + sigma * eps`, elementwise.
pub fn reparameterize(mu: &[f64], sigma: &[f64], eps: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(sigma)
        .zip(eps)
        .map(|((m, s), e)| m + s * e)
        .collect()
}

/// Which heads receive the SNR feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnrConditioning {
    /// Variance head only.
    #[default]
    Variance,
    /// Variance and mean heads.
    Both,
    /// Feature zeroed; outputs ignore the SNR.
    Off,
}

/// Layer sizes and conditioning switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arch {
    /// Bottleneck width of a residual block on a `d`-vector is `ceil(d / bottleneck)`.
    pub bottleneck: usize,
    pub snr_conditioning: SnrConditioning,
    /// SNR range in dB mapped affinely onto `[-1, 1]`.
    pub snr_range_db: (f64, f64),
    pub power_normalize: bool,
}

impl Default for Arch {
    fn default() -> Self {
        Arch {
            bottleneck: 4,
            snr_conditioning: SnrConditioning::Variance,
            snr_range_db: (0.0, 12.0),
            power_normalize: true,
        }
    }
}

impl Arch {
    pub fn snr_feature(&self, snr_linear: f64) -> f64 {
        if self.snr_conditioning == SnrConditioning::Off {
            return 0.0;
        }
        let (lo, hi) = self.snr_range_db;
        2.0 * (linear_to_db(snr_linear) - lo) / (hi - lo) - 1.0
    }
}

/// Dense layer `y = W x + b`, `W` row-major `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    fn identity(n: usize) -> Self {
        let mut d = Dense::zeros(n, n);
        for i in 0..n {
            d.w[i * n + i] = 1.0;
        }
        d
    }

    fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let mut d = Dense::zeros(rows, cols);
        for w in &mut d.w {
            *w = std * normal(rng);
        }
        d
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.w
            .chunks_exact(self.cols)
            .zip(&self.b)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.cols];
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[r] += g;
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let grow = &mut grad.w[r * self.cols..(r + 1) * self.cols];
            for c in 0..self.cols {
                grow[c] += g * x[c];
                dx[c] += g * row[c];
            }
        }
        dx
    }

    fn arrays<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((format!("{prefix}.w"), &self.w));
        out.push((format!("{prefix}.b"), &self.b));
    }

    fn arrays_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(&mut self.w);
        out.push(&mut self.b);
    }
}

#[inline]
fn leaky(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
fn leaky_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// `x + project(leaky(expand(x)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub expand: Dense,
    pub project: Dense,
}

struct BlockCache {
    x: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

impl ResidualBlock {
    fn init<R: Rng + ?Sized>(dim: usize, bottleneck: usize, rng: &mut R) -> Self {
        let hidden = dim.div_ceil(bottleneck.max(1)).max(1);
        ResidualBlock {
            expand: Dense::gaussian(hidden, dim, 1.0 / sqrt(dim as f64), rng),
            // Zero branch: the block starts as the identity.
            project: Dense::zeros(dim, hidden),
        }
    }

    fn forward(&self, x: Vec<f64>) -> (Vec<f64>, BlockCache) {
        let pre = self.expand.forward(&x);
        let act: Vec<f64> = pre.iter().map(|&a| leaky(a)).collect();
        let branch = self.project.forward(&act);
        let out = x.iter().zip(&branch).map(|(a, b)| a + b).collect();
        (out, BlockCache { x, pre, act })
    }

    fn backward(&self, cache: &BlockCache, dy: &[f64], grad: &mut ResidualBlock) -> Vec<f64> {
        let dact = self.project.backward(&cache.act, dy, &mut grad.project);
        let dpre: Vec<f64> = dact
            .iter()
            .zip(&cache.pre)
            .map(|(g, &a)| g * leaky_grad(a))
            .collect();
        let dx_branch = self.expand.backward(&cache.x, &dpre, &mut grad.expand);
        dy.iter().zip(&dx_branch).map(|(a, b)| a + b).collect()
    }

    fn arrays<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.expand.arrays(&format!("{prefix}.expand"), out);
        self.project.arrays(&format!("{prefix}.project"), out);
    }

    fn arrays_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.expand.arrays_mut(out);
        self.project.arrays_mut(out);
    }
}

/// Trainable parameters of the downsampler and the VAE upsampler.
///
/// The same struct doubles as a gradient or optimizer-state buffer via
/// [`CodecParams::zeros_like`].
#[derive(Debug, Clone, PartialEq)]
pub struct CodecParams {
    pub shape: Shape,
    pub compressed_len: usize,
    pub arch: Arch,
    pub down_in: ResidualBlock,
    pub down_proj: Dense,
    pub down_out: ResidualBlock,
    pub up_in: ResidualBlock,
    pub up_proj: Dense,
    pub up_out: ResidualBlock,
    /// Per-element weight of the SNR feature in the mean head.
    pub mu_snr: Vec<f64>,
    /// Log-variance head over `[trunk; snr_feature]`.
    pub logvar: Dense,
}

/// Compressed length `k * n`, which must be a positive integer.
pub fn compressed_len(shape: Shape, k: f64) -> Result<usize> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(config_err("codec.k", "must lie in (0, 1]"));
    }
    let exact = k * shape.len() as f64;
    let m = libm::round(exact);
    if (exact - m).abs() > 1e-9 || m < 1.0 {
        return Err(config_err(
            "codec.k",
            format!("k * w*h*c = {exact} is not a positive integer"),
        ));
    }
    Ok(m as usize)
}

/// Compression rate for a transmitted channel count `C`: `r = 0.0013 C`.
pub fn rate_from_channels(channels: f64) -> f64 {
    0.0013 * channels
}

/// Rounds `r * n` to the nearest positive integer and returns the realized
/// `k = m / n`, so any rate maps onto a valid compressed length.
pub fn k_from_rate(shape: Shape, rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(config_err("codec.channels", "rate 0.0013*C must lie in (0, 1]"));
    }
    let n = shape.len();
    let m = (libm::round(rate * n as f64) as usize).clamp(1, n);
    Ok(m as f64 / n as f64)
}

pub fn init_codec<R: Rng + ?Sized>(shape: Shape, k: f64, arch: Arch, rng: &mut R) -> Result<CodecParams> {
    let m = compressed_len(shape, k)?;
    let n = shape.len();
    if arch.bottleneck == 0 {
        return Err(config_err("codec.bottleneck", "must be at least 1"));
    }
    let (lo, hi) = arch.snr_range_db;
    if !(hi > lo) {
        return Err(config_err("codec.snr_range_db", "upper bound must exceed lower"));
    }
    let down_in = ResidualBlock::init(n, arch.bottleneck, rng);
    let down_proj = if m == n {
        Dense::identity(n)
    } else {
        Dense::gaussian(m, n, 1.0 / sqrt(n as f64), rng)
    };
    let down_out = ResidualBlock::init(m, arch.bottleneck, rng);
    let up_in = ResidualBlock::init(m, arch.bottleneck, rng);
    let up_proj = if m == n {
        Dense::identity(n)
    } else {
        Dense::gaussian(n, m, 1.0 / sqrt(m as f64), rng)
    };
    let up_out = ResidualBlock::init(n, arch.bottleneck, rng);
    let logvar = Dense::gaussian(n, n + 1, 0.01 / sqrt((n + 1) as f64), rng);
    Ok(CodecParams {
        shape,
        compressed_len: m,
        arch,
        down_in,
        down_proj,
        down_out,
        up_in,
        up_proj,
        up_out,
        mu_snr: vec![0.0; n],
        logvar,
    })
}

/// Transmitted features and the power-normalization scale applied to them.
#[derive(Debug, Clone, PartialEq)]
pub struct Downsampled {
    pub z: Latent,
    /// Factor applied to the raw projection; 1 when normalization is off.
    pub scale: f64,
}

pub(crate) struct DownCache {
    b_in: BlockCache,
    proj_in: Vec<f64>,
    b_out: BlockCache,
    raw: Vec<f64>,
    scale: f64,
}

pub(crate) struct UpCache {
    b_in: BlockCache,
    proj_in: Vec<f64>,
    b_out: BlockCache,
    head_in: Vec<f64>,
    snr_feature: f64,
    /// Unclamped log-variance; gradients stop where it was clamped.
    raw_logvar: Vec<f64>,
}

/// Upsampler outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Upsampled {
    pub q: GaussianParams,
    pub logvar: Vec<f64>,
    pub sample: Latent,
    pub eps: Vec<f64>,
}

fn check_finite(v: &[f64], layer: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericOverflow { layer })
    }
}

impl CodecParams {
    pub fn k(&self) -> f64 {
        self.compressed_len as f64 / self.shape.len() as f64
    }

    /// A zero-filled buffer with this layout.
    pub fn zeros_like(&self) -> CodecParams {
        let mut z = self.clone();
        for a in z.arrays_mut() {
            a.fill(0.0);
        }
        z
    }

    /// Named parameter arrays in a fixed order.
    pub fn arrays(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        self.down_in.arrays("down.in", &mut out);
        self.down_proj.arrays("down.proj", &mut out);
        self.down_out.arrays("down.out", &mut out);
        self.up_in.arrays("up.in", &mut out);
        self.up_proj.arrays("up.proj", &mut out);
        self.up_out.arrays("up.out", &mut out);
        out.push((String::from("up.mu_snr"), &self.mu_snr));
        self.logvar.arrays("up.logvar", &mut out);
        out
    }

    /// Mutable parameter arrays, same order as [`CodecParams::arrays`].
    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.down_in.arrays_mut(&mut out);
        self.down_proj.arrays_mut(&mut out);
        self.down_out.arrays_mut(&mut out);
        self.up_in.arrays_mut(&mut out);
        self.up_proj.arrays_mut(&mut out);
        self.up_out.arrays_mut(&mut out);
        out.push(&mut self.mu_snr);
        self.logvar.arrays_mut(&mut out);
        out
    }

    pub fn num_params(&self) -> usize {
        self.arrays().iter().map(|(_, a)| a.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|(_, a)| a.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn down_forward(&self, y: &[f64]) -> (Vec<f64>, DownCache) {
        let (h, b_in) = self.down_in.forward(y.to_vec());
        let p = self.down_proj.forward(&h);
        let (raw, b_out) = self.down_out.forward(p);
        let scale = if self.arch.power_normalize {
            let energy: f64 = raw.iter().map(|x| x * x).sum();
            if energy > 0.0 {
                sqrt(raw.len() as f64 / energy)
            } else {
                1.0
            }
        } else {
            1.0
        };
        let z = raw.iter().map(|x| x * scale).collect();
        (
            z,
            DownCache {
                b_in,
                proj_in: h,
                b_out,
                raw,
                scale,
            },
        )
    }

    pub(crate) fn down_backward(&self, cache: &DownCache, dz: &[f64], grad: &mut CodecParams) {
        let draw: Vec<f64> = if self.arch.power_normalize {
            let energy: f64 = cache.raw.iter().map(|x| x * x).sum();
            if energy > 0.0 {
                // z = c v with c = sqrt(m / |v|^2):
                // dL/dv = c g - c (g . v) v / |v|^2
                let c = cache.scale;
                let gv: f64 = dz.iter().zip(&cache.raw).map(|(g, v)| g * v).sum();
                dz.iter()
                    .zip(&cache.raw)
                    .map(|(g, v)| c * g - c * gv * v / energy)
                    .collect()
            } else {
                dz.to_vec()
            }
        } else {
            dz.to_vec()
        };
        let dp = self.down_out.backward(&cache.b_out, &draw, &mut grad.down_out);
        let dh = self.down_proj.backward(&cache.proj_in, &dp, &mut grad.down_proj);
        self.down_in.backward(&cache.b_in, &dh, &mut grad.down_in);
    }

    pub(crate) fn up_forward(
        &self,
        z_hat: &[f64],
        snr_feature: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, UpCache)> {
        let (h, b_in) = self.up_in.forward(z_hat.to_vec());
        check_finite(&h, "up.in")?;
        let p = self.up_proj.forward(&h);
        check_finite(&p, "up.proj")?;
        let (trunk, b_out) = self.up_out.forward(p);
        check_finite(&trunk, "up.out")?;
        let mu: Vec<f64> = if self.arch.snr_conditioning == SnrConditioning::Both {
            trunk
                .iter()
                .zip(&self.mu_snr)
                .map(|(t, w)| t + w * snr_feature)
                .collect()
        } else {
            trunk.clone()
        };
        let mut head_in = trunk;
        head_in.push(snr_feature);
        let raw_logvar = self.logvar.forward(&head_in);
        check_finite(&raw_logvar, "up.logvar")?;
        let logvar: Vec<f64> = raw_logvar
            .iter()
            .map(|&x| x.clamp(LOGVAR_MIN, LOGVAR_MAX))
            .collect();
        Ok((
            mu,
            logvar,
            UpCache {
                b_in,
                proj_in: h,
                b_out,
                head_in,
                snr_feature,
                raw_logvar,
            },
        ))
    }

    /// Backpropagates `dL/dmu` and `dL/dlogvar` (post-clamp) to the
    /// parameters and returns `dL/dz_hat`.
    pub(crate) fn up_backward(
        &self,
        cache: &UpCache,
        dmu: &[f64],
        dlogvar: &[f64],
        grad: &mut CodecParams,
    ) -> Vec<f64> {
        let dlv: Vec<f64> = dlogvar
            .iter()
            .zip(&cache.raw_logvar)
            .map(|(&g, &r)| if (LOGVAR_MIN..=LOGVAR_MAX).contains(&r) { g } else { 0.0 })
            .collect();
        let dhead = self.logvar.backward(&cache.head_in, &dlv, &mut grad.logvar);
        let n = self.shape.len();
        let dtrunk: Vec<f64> = dmu.iter().zip(&dhead[..n]).map(|(a, b)| a + b).collect();
        if self.arch.snr_conditioning == SnrConditioning::Both {
            for (g, d) in grad.mu_snr.iter_mut().zip(dmu) {
                *g += d * cache.snr_feature;
            }
        }
        let dp = self.up_out.backward(&cache.b_out, &dtrunk, &mut grad.up_out);
        let dh = self.up_proj.backward(&cache.proj_in, &dp, &mut grad.up_proj);
        self.up_in.backward(&cache.b_in, &dh, &mut grad.up_in)
    }
}

/// `z = F_d(y)`.
pub fn downsample(y: &Latent, params: &CodecParams) -> Result<Downsampled> {
    ensure_len(params.shape.len(), y.len())?;
    let (z, cache) = params.down_forward(y.as_slice());
    check_finite(&z, "down.out")?;
    Ok(Downsampled {
        z: Latent::from_parts(z, Shape::flat(params.compressed_len)),
        scale: cache.scale,
    })
}

/// `(mu_y, sigma_y) = F_u(z_hat, snr)` and `y_hat = mu_y + sigma_y eps_y`.
/// `snr` is linear.
pub fn upsample<R: Rng + ?Sized>(
    z_hat: &Latent,
    snr: f64,
    params: &CodecParams,
    rng: &mut R,
) -> Result<Upsampled> {
    let eps: Vec<f64> = (0..params.shape.len()).map(|_| normal(rng)).collect();
    upsample_with_noise(z_hat, snr, params, eps)
}

/// [`upsample`] with a caller-supplied `eps_y`.
pub fn upsample_with_noise(
    z_hat: &Latent,
    snr: f64,
    params: &CodecParams,
    eps: Vec<f64>,
) -> Result<Upsampled> {
    ensure_len(params.compressed_len, z_hat.len())?;
    ensure_len(params.shape.len(), eps.len())?;
    if !(snr > 0.0) {
        return Err(Error::Domain {
            what: "snr",
            expected: "positive",
            value: snr,
        });
    }
    let feature = params.arch.snr_feature(snr);
    let (mu, logvar, _) = params.up_forward(z_hat.as_slice(), feature)?;
    let sigma: Vec<f64> = logvar.iter().map(|&l| exp(0.5 * l)).collect();
    let sample = reparameterize(&mu, &sigma, &eps);
    check_finite(&sample, "up.sample")?;
    Ok(Upsampled {
        q: GaussianParams { mu, sigma },
        logvar,
        sample: Latent::from_parts(sample, params.shape),
        eps,
    })
}
