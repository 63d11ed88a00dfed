//! AWGN, Rayleigh (MMSE-equalized) and MIMO (SVD-decoupled) channels.
//!
//! Every transmit function returns the received symbols together with the
//! diffusion step each independent stream is equivalent to, so the receiver
//! can hand the signal straight to the reverse process.
//!
//! Noise convention: `sigma^2` is the variance per complex symbol, split as
//! `sigma^2 / 2` per real dimension. Real latents are packed into symbols by
//! [`ComplexVector::from_real`], which scales pairs by `1/sqrt(2)` so that a
//! symbol noise of `sigma^2` unpacks to `sigma^2` per real latent element.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::latent::Latent;
use crate::rng::normal;
use crate::schedule::{Schedule, StepMapping};

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector(pub Vec<Complex64>);

impl ComplexVector {
    pub fn zeros(n: usize) -> Self {
        ComplexVector(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_parts(re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::ShapeMismatch {
                expected: re.len(),
                actual: im.len(),
            });
        }
        Ok(ComplexVector(
            re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect(),
        ))
    }

    /// Packs a real vector into symbols `(x[2i] + j x[2i+1]) / sqrt(2)`. An
    /// odd-length input is padded with a trailing zero.
    pub fn from_real(x: &[f64]) -> Self {
        let symbols = x
            .chunks(2)
            .map(|pair| {
                let im = pair.get(1).copied().unwrap_or(0.0);
                Complex64::new(pair[0] * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
            })
            .collect();
        ComplexVector(symbols)
    }

    /// Inverse of [`ComplexVector::from_real`], truncated to `len` reals.
    pub fn to_real(&self, len: usize) -> Vec<f64> {
        let scale = core::f64::consts::SQRT_2;
        self.0
            .iter()
            .flat_map(|c| [c.re * scale, c.im * scale])
            .take(len)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn re(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.im).collect()
    }

    /// Mean per-symbol power `||z||^2 / n`.
    pub fn mean_power(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.0.len() as f64
    }

    fn check_finite(&self) -> Result<()> {
        match self.0.iter().find(|c| !(c.re.is_finite() && c.im.is_finite())) {
            Some(c) => Err(Error::Domain {
                what: "symbol",
                expected: "finite",
                value: if c.re.is_finite() { c.im } else { c.re },
            }),
            None => Ok(()),
        }
    }
}

/// Which noise variance the Rayleigh receiver reports to the diffusion step
/// mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RayleighConvention {
    /// `alpha_bar_u = 1 / (1 + |sigma h|^2)`, as written for the fading
    /// channel equivalence.
    #[default]
    Paper,
    /// `alpha_bar_u = 1 / (1 + sigma^2 / |h|^2)`, the variance the rescaled
    /// equalizer output actually carries.
    Mmse,
}

impl RayleighConvention {
    pub fn effective_sigma2(self, sigma: f64, h: Complex64) -> f64 {
        match self {
            RayleighConvention::Paper => sigma * sigma * h.norm_sqr(),
            RayleighConvention::Mmse => sigma * sigma / h.norm_sqr(),
        }
    }
}

/// Received signal plus its equivalent forward-process state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelOutput {
    /// Received symbols, rescaled so each stream reads `y + noise`.
    pub received: ComplexVector,
    /// MMSE-equalized symbols before rescaling (Rayleigh only).
    pub equalized: Option<ComplexVector>,
    /// Channel noise standard deviation per complex symbol.
    pub noise_sigma: f64,
    /// Step mapping for each independent stream.
    pub mappings: Vec<StepMapping>,
    /// Noise variance per stream used for the mapping.
    pub stream_sigma2: Vec<f64>,
    /// Singular values of a MIMO channel, descending.
    pub subchannel_gains: Option<Vec<f64>>,
}

impl ChannelOutput {
    pub fn streams(&self) -> usize {
        self.mappings.len()
    }

    /// Stream carrying symbol `i`; streams interleave symbol by symbol.
    pub fn stream_of_symbol(&self, i: usize) -> usize {
        i % self.streams()
    }

    /// Indices of the real latent elements carried by each stream.
    pub fn real_indices_per_stream(&self, real_len: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.streams()];
        for idx in 0..real_len {
            out[self.stream_of_symbol(idx / 2)].push(idx);
        }
        out
    }
}

fn complex_noise<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(normal(rng) * FRAC_1_SQRT_2, normal(rng) * FRAC_1_SQRT_2)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "sigma",
            expected: "finite and nonnegative",
            value: sigma,
        })
    }
}

/// Adds circularly-symmetric Gaussian noise of variance `sigma^2` per symbol.
pub fn awgn_transmit<R: Rng + ?Sized>(
    z: &ComplexVector,
    sigma: f64,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<ChannelOutput> {
    check_sigma(sigma)?;
    z.check_finite()?;
    let sigma2 = sigma * sigma;
    let mapping = schedule.sigma2_to_step(sigma2)?;
    let received = z.0.iter().map(|&s| s + complex_noise(rng) * sigma).collect();
    Ok(ChannelOutput {
        received: ComplexVector(received),
        equalized: None,
        noise_sigma: sigma,
        mappings: vec![mapping],
        stream_sigma2: vec![sigma2],
        subchannel_gains: None,
    })
}

/// Linear SNR `||z||^2 / (n sigma^2)`.
pub fn measure_snr(z: &ComplexVector, sigma: f64) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::ShapeMismatch {
            expected: 1,
            actual: 0,
        });
    }
    if sigma == 0.0 {
        return Err(Error::InfiniteSnr);
    }
    check_sigma(sigma)?;
    Ok(z.mean_power() / (sigma * sigma))
}

/// MMSE equalizer `h* / (|h|^2 + sigma^2 / P)`.
pub fn mmse_coefficient(h: Complex64, sigma: f64, signal_power: f64) -> Result<Complex64> {
    check_sigma(sigma)?;
    if !(signal_power > 0.0) {
        return Err(Error::Domain {
            what: "signal_power",
            expected: "positive",
            value: signal_power,
        });
    }
    let denom = h.norm_sqr() + sigma * sigma / signal_power;
    if denom == 0.0 {
        return Err(Error::DegenerateChannel);
    }
    Ok(h.conj() / denom)
}

/// Flat Rayleigh fading `h y + sigma eps` followed by MMSE equalization.
///
/// The equalizer gain `w h = |h|^2 / (|h|^2 + sigma^2/P)` is divided back out
/// so the returned symbols read `y + (sigma / h) eps`. `P` is the mean
/// per-symbol power of `y`.
pub fn rayleigh_transmit_mmse<R: Rng + ?Sized>(
    y: &ComplexVector,
    h: Complex64,
    sigma: f64,
    convention: RayleighConvention,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<ChannelOutput> {
    check_sigma(sigma)?;
    y.check_finite()?;
    if h.norm_sqr() == 0.0 {
        return Err(Error::DeepFade);
    }
    let power = y.mean_power();
    // An all-zero block carries no power estimate; fall back to unit power.
    let w = mmse_coefficient(h, sigma, if power > 0.0 { power } else { 1.0 })?;
    let stream_sigma2 = convention.effective_sigma2(sigma, h);
    let mapping = schedule.sigma2_to_step(stream_sigma2)?;
    let h_inv = h.inv();

    let mut equalized = Vec::with_capacity(y.len());
    let mut received = Vec::with_capacity(y.len());
    for &s in &y.0 {
        let eps = complex_noise(rng) * sigma;
        equalized.push(w * (h * s + eps));
        // w (h y + e) / (w h) = y + e / h
        received.push(s + eps * h_inv);
    }
    Ok(ChannelOutput {
        received: ComplexVector(received),
        equalized: Some(ComplexVector(equalized)),
        noise_sigma: sigma,
        mappings: vec![mapping],
        stream_sigma2: vec![stream_sigma2],
        subchannel_gains: None,
    })
}

/// `H = U diag(s) V^H` with singular values descending.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoChannel {
    pub h: DMatrix<Complex64>,
    pub u: DMatrix<Complex64>,
    pub v: DMatrix<Complex64>,
    pub singular_values: Vec<f64>,
}

impl MimoChannel {
    pub fn antennas(&self) -> usize {
        self.h.nrows()
    }

    /// `U diag(s) V^H`.
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let m = self.antennas();
        let sigma = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                Complex64::new(self.singular_values[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        &self.u * sigma * self.v.adjoint()
    }
}

pub fn mimo_svd_decompose(h: &DMatrix<Complex64>) -> Result<MimoChannel> {
    let (rows, cols) = h.shape();
    if rows != cols || rows == 0 {
        return Err(Error::NotSquare { rows, cols });
    }
    if h.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(Error::Domain {
            what: "channel matrix entry",
            expected: "finite",
            value: f64::NAN,
        });
    }
    let svd = h.clone().svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::NumericOverflow { layer: "svd" });
    };
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let v = v_t.adjoint();
    let u_sorted = DMatrix::from_fn(rows, rows, |i, j| u[(i, order[j])]);
    let v_sorted = DMatrix::from_fn(rows, rows, |i, j| v[(i, order[j])]);
    Ok(MimoChannel {
        h: h.clone(),
        u: u_sorted,
        v: v_sorted,
        singular_values: order.iter().map(|&i| svd.singular_values[i]).collect(),
    })
}

/// `M x M` matrix with i.i.d. unit-variance circular complex Gaussian entries.
pub fn random_channel_matrix<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(m, m, |_, _| complex_noise(rng))
}

/// SVD-precoded MIMO transmission.
///
/// Symbols are grouped into blocks of `M`; symbol `i` of a block rides
/// subchannel `i`. Each block is precoded by `V`, sent through `H` with
/// additive noise, combined with `U^H` and divided by the subchannel gain.
pub fn mimo_transmit<R: Rng + ?Sized>(
    y: &ComplexVector,
    channel: &MimoChannel,
    sigma: f64,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<ChannelOutput> {
    check_sigma(sigma)?;
    y.check_finite()?;
    let m = channel.antennas();
    if !y.len().is_multiple_of(m) {
        return Err(Error::ShapeMismatch {
            expected: y.len().div_ceil(m) * m,
            actual: y.len(),
        });
    }
    let dead: Vec<usize> = channel
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| !(s > 0.0))
        .map(|(i, _)| i)
        .collect();
    if !dead.is_empty() {
        return Err(Error::RankDeficient { streams: dead });
    }
    let stream_sigma2: Vec<f64> = channel
        .singular_values
        .iter()
        .map(|s| (sigma / s) * (sigma / s))
        .collect();
    let mappings = stream_sigma2
        .iter()
        .map(|&s2| schedule.sigma2_to_step(s2))
        .collect::<Result<Vec<_>>>()?;

    let u_h = channel.u.adjoint();
    let mut received = Vec::with_capacity(y.len());
    for block in y.0.chunks(m) {
        let yb = nalgebra::DVector::from_column_slice(block);
        let x = &channel.v * yb;
        let noise = nalgebra::DVector::from_fn(m, |_, _| complex_noise(rng) * sigma);
        let r = &channel.h * x + noise;
        let combined = &u_h * r;
        for (i, c) in combined.iter().enumerate() {
            received.push(c / channel.singular_values[i]);
        }
    }
    Ok(ChannelOutput {
        received: ComplexVector(received),
        equalized: None,
        noise_sigma: sigma,
        mappings,
        stream_sigma2,
        subchannel_gains: Some(channel.singular_values.clone()),
    })
}

/// Unpacks a channel output to the real latent domain.
pub fn received_latent(out: &ChannelOutput, like: &Latent) -> Latent {
    Latent::from_parts(out.received.to_real(like.len()), like.shape())
}
