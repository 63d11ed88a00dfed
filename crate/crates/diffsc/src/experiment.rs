//! Simulation, training and sweep drivers.
//!
//! Every trial is seeded from `(seed, channel, snr, trial)` and splits that
//! seed into named substreams (source, fading, channel, compensate, codec,
//! denoise), so cells replay independently and in any order.

use std::fs;
use std::path::Path;

use diffsc_core::channels::{
    awgn_transmit, mimo_svd_decompose, mimo_transmit, random_channel_matrix, rayleigh_transmit_mmse, ChannelOutput,
    ComplexVector,
};
use diffsc_core::codec::{downsample, init_codec, upsample, CodecParams};
use diffsc_core::diffusion::{
    adaptive_receive, compensate_to_step, denoise_from_step, receive_and_denoise, AnalyticGaussianDenoiser,
    FixedStepVariant, GaussianSourceModel, ReceiveMode,
};
use diffsc_core::loss::{train_codec, TrainOutcome};
use diffsc_core::metrics::{mse, psnr, ssim, MetricReport};
use diffsc_core::rng::{derive_seed, fill_normal, label, normal, stream, Stream};
use diffsc_core::{Error, Latent, Schedule, Shape};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::{ChannelKind, ExperimentConfig, ModeKind, SourceKind, SweepParam};
use crate::error::{AppError, Context};
use crate::params_io::load_params;
use crate::table::{Table, Value};

/// Latent source for trials and training.
#[derive(Debug, Clone)]
pub enum Source {
    Gaussian(GaussianSourceModel),
    /// Fixed latents, cycled by trial index.
    File(Vec<Latent>),
}

impl Source {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Source, AppError> {
        let shape = cfg.shape()?;
        match cfg.source.kind {
            SourceKind::Gaussian => GaussianSourceModel::new(cfg.source.mean, cfg.source.variance)
                .map(Source::Gaussian)
                .map_err(|e| AppError::Config {
                    path: "source.variance".into(),
                    reason: e.to_string(),
                }),
            SourceKind::File => {
                let path = cfg.source.path.as_deref().ok_or_else(|| AppError::Config {
                    path: "source.path".into(),
                    reason: "required for file sources".into(),
                })?;
                load_latents(path, shape).map(Source::File)
            }
        }
    }

    pub fn draw(&self, shape: Shape, index: usize, rng: &mut Stream) -> Latent {
        match self {
            Source::Gaussian(m) => m.sample(shape, rng),
            Source::File(v) => v[index % v.len()].clone(),
        }
    }

    /// Prior used by the analytic denoiser. File sources use their pooled
    /// empirical moments.
    pub fn model(&self) -> Result<GaussianSourceModel, AppError> {
        match self {
            Source::Gaussian(m) => Ok(*m),
            Source::File(v) => {
                let n: usize = v.iter().map(Latent::len).sum();
                let mean = v.iter().flat_map(|l| l.as_slice()).sum::<f64>() / n as f64;
                let var = v.iter().flat_map(|l| l.as_slice()).map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
                GaussianSourceModel::new(mean, var).context(|| "source file moments".into())
            }
        }
    }
}

/// Reads a JSON array of latents, each of length `w*h*c`.
pub fn load_latents(path: &Path, shape: Shape) -> Result<Vec<Latent>, AppError> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let raw: Vec<Vec<f64>> = serde_json::from_str(&text).map_err(|e| AppError::format(path, e.to_string()))?;
    if raw.is_empty() {
        return Err(AppError::format(path, "no latents"));
    }
    raw.into_iter()
        .enumerate()
        .map(|(i, v)| Latent::new(v, shape).map_err(|e| AppError::format(path, format!("latent {i}: {e}"))))
        .collect()
}

/// Everything a trial needs, built once per run.
pub struct Setup {
    pub cfg: ExperimentConfig,
    pub schedule: Schedule,
    pub shape: Shape,
    pub source: Source,
    pub denoiser: AnalyticGaussianDenoiser,
    pub codec: Option<CodecParams>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Setup, AppError> {
        let schedule = cfg.schedule()?;
        let source = Source::from_config(cfg)?;
        let denoiser = AnalyticGaussianDenoiser::new(source.model()?, &schedule);
        Ok(Setup {
            cfg: cfg.clone(),
            shape: cfg.shape()?,
            schedule,
            source,
            denoiser,
            codec: None,
        })
    }

    /// Loads trained parameters or trains the codec when it is enabled.
    pub fn with_codec(mut self) -> Result<Setup, AppError> {
        if !self.cfg.codec.enabled {
            return Ok(self);
        }
        let params = match &self.cfg.codec.params {
            Some(p) => {
                let params = load_params(p)?;
                if params.shape != self.shape {
                    return Err(AppError::format(p, "codec shape does not match source.shape"));
                }
                params
            }
            None => train(&self, self.cfg.seed)?.params,
        };
        self.codec = Some(params);
        Ok(self)
    }

    pub fn k(&self) -> f64 {
        self.codec.as_ref().map_or(1.0, CodecParams::k)
    }
}

fn sub(seed: u64, name: &str) -> Stream {
    stream(derive_seed(seed, &[label(name)]))
}

/// Seed of a `(channel, snr)` cell.
pub fn cell_seed(root: u64, channel: ChannelKind, snr_db: f64) -> u64 {
    derive_seed(root, &[label(channel.name()), snr_db.to_bits()])
}

pub fn trial_seed(cell: u64, trial: usize) -> u64 {
    derive_seed(cell, &[trial as u64])
}

/// Per-trial result; `None` metrics mark an outage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub report: MetricReport,
    /// Reverse steps run, averaged over elements.
    pub mean_step: f64,
    /// PSNR minus the matched-variance adaptive reference.
    pub delta_psnr_db: Option<f64>,
}

/// Channel failures that count as an outage rather than aborting the run.
fn is_outage(e: &Error) -> bool {
    matches!(
        e,
        Error::Saturated { .. } | Error::DeepFade | Error::RankDeficient { .. } | Error::CompensationInfeasible { .. }
    )
}

fn transmit(
    setup: &Setup,
    channel: ChannelKind,
    payload: &[f64],
    sigma: f64,
    seed: u64,
) -> Result<(Vec<f64>, ChannelOutput), Error> {
    let mut symbols = ComplexVector::from_real(payload);
    let mut noise = sub(seed, "channel");
    let mut fading = sub(seed, "fading");
    let ch = &setup.cfg.channel;
    let out = match channel {
        ChannelKind::Awgn => awgn_transmit(&symbols, sigma, &setup.schedule, &mut noise)?,
        ChannelKind::Rayleigh => {
            let h = match ch.h {
                Some([re, im]) => Complex64::new(re, im),
                None => {
                    let s = std::f64::consts::FRAC_1_SQRT_2;
                    Complex64::new(s * normal(&mut fading), s * normal(&mut fading))
                }
            };
            rayleigh_transmit_mmse(&symbols, h, sigma, ch.convention.into(), &setup.schedule, &mut noise)?
        }
        ChannelKind::Mimo => {
            let m = ch.antennas;
            symbols.0.resize(symbols.len().div_ceil(m) * m, Complex64::new(0.0, 0.0));
            let svd = mimo_svd_decompose(&random_channel_matrix(m, &mut fading))?;
            mimo_transmit(&symbols, &svd, sigma, &setup.schedule, &mut noise)?
        }
    };
    Ok((out.received.to_real(payload.len()), out))
}

/// Denoises `s_hat` stream by stream with the configured receive mode.
fn receive(
    setup: &Setup,
    s_hat: &Latent,
    streams: &[(Vec<usize>, f64)],
    seed: u64,
) -> Result<(Latent, f64), Error> {
    let mode = setup.cfg.mode.receive_mode();
    let (sched, den) = (&setup.schedule, &setup.denoiser);
    let mut comp = sub(seed, "compensate");
    let mut rng = sub(seed, "denoise");
    let mut out = s_hat.clone();
    let mut steps = 0.0;
    for (idx, sigma2) in streams {
        if idx.is_empty() {
            continue;
        }
        let part = s_hat.gather(idx);
        let (est, step) = match mode {
            ReceiveMode::Adaptive => {
                let (y_u, m) = adaptive_receive(&part, *sigma2, sched)?;
                (denoise_from_step(&y_u, m.step, den, sched, &mut rng)?, m.step)
            }
            ReceiveMode::FixedStep {
                target,
                variant: FixedStepVariant::Truncated,
            } => {
                let y_t = compensate_to_step(&part, *sigma2, target, sched, &mut comp)?;
                (denoise_from_step(&y_t, target, den, sched, &mut rng)?, target)
            }
            ReceiveMode::FixedStep { .. } => receive_and_denoise(&part, *sigma2, mode, den, sched, &mut rng)?,
        };
        out.scatter(idx, &est);
        steps += step as f64 * idx.len() as f64;
    }
    Ok((out, steps / s_hat.len() as f64))
}

fn metrics(setup: &Setup, est: &Latent, y0: &Latent) -> Result<MetricReport, Error> {
    let m = &setup.cfg.metrics;
    Ok(MetricReport {
        psnr_db: psnr(est, y0, m.peak)?,
        ssim: ssim(est, y0, m.ssim_params())?,
        mse: mse(est, y0)?,
        n: 1,
    })
}

/// Adaptive reception of `y0 + sigma_T eps` with `sigma_T^2` the variance of
/// step `target`. Shares the source, channel and denoise substreams with the
/// trial it is paired with.
fn matched_reference(setup: &Setup, y0: &Latent, target: usize, seed: u64) -> Result<f64, Error> {
    let sched = &setup.schedule;
    let sigma2 = sched.step_to_sigma2(target)?;
    let sd = sigma2.sqrt();
    let mut eps = vec![0.0; y0.len()];
    fill_normal(&mut sub(seed, "channel"), &mut eps);
    let s_hat = Latent::new(y0.as_slice().iter().zip(&eps).map(|(y, e)| y + sd * e).collect(), y0.shape())?;
    let (y_u, m) = adaptive_receive(&s_hat, sigma2, sched)?;
    let est = denoise_from_step(&y_u, m.step, &setup.denoiser, sched, &mut sub(seed, "denoise"))?;
    psnr(&est, y0, setup.cfg.metrics.peak)
}

/// One end-to-end trial: source, optional codec, channel, reception,
/// denoising and metrics. Returns `Ok(None)` on an outage.
pub fn run_trial(
    setup: &Setup,
    channel: ChannelKind,
    sigma: f64,
    trial: usize,
    seed: u64,
) -> Result<Option<TrialResult>, Error> {
    let y0 = setup.source.draw(setup.shape, trial, &mut sub(seed, "source"));
    let attempt = || -> Result<TrialResult, Error> {
        let (s_hat, streams) = match &setup.codec {
            None => {
                let (rx, out) = transmit(setup, channel, y0.as_slice(), sigma, seed)?;
                let streams: Vec<(Vec<usize>, f64)> = out
                    .real_indices_per_stream(y0.len())
                    .into_iter()
                    .zip(out.stream_sigma2.iter().copied())
                    .collect();
                (Latent::new(rx, setup.shape)?, streams)
            }
            Some(params) => {
                let z = downsample(&y0, params)?;
                let (rx, out) = transmit(setup, channel, z.z.as_slice(), sigma, seed)?;
                let sigma2 = out.stream_sigma2.iter().sum::<f64>() / out.stream_sigma2.len() as f64;
                let z_hat = Latent::new(rx, Shape::flat(params.compressed_len))?;
                let up = upsample(&z_hat, 1.0 / sigma2, params, &mut sub(seed, "codec"))?;
                (up.sample, vec![((0..y0.len()).collect(), sigma2)])
            }
        };
        let (est, mean_step) = receive(setup, &s_hat, &streams, seed)?;
        let report = metrics(setup, &est, &y0)?;
        let delta_psnr_db = match setup.cfg.mode.kind {
            ModeKind::FixedStep => Some(report.psnr_db - matched_reference(setup, &y0, setup.cfg.mode.target, seed)?),
            ModeKind::Adaptive => None,
        };
        Ok(TrialResult {
            report,
            mean_step,
            delta_psnr_db,
        })
    };
    match attempt() {
        Ok(r) => Ok(Some(r)),
        Err(e) if is_outage(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Aggregate of one `(channel, snr)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub channel: ChannelKind,
    pub snr_db: f64,
    pub seed: u64,
    pub report: Option<MetricReport>,
    pub mean_step: Option<f64>,
    pub outages: usize,
    pub delta_psnr_db: Option<f64>,
    /// Half-width of the 95% normal confidence interval of the mean delta.
    pub delta_ci95: Option<f64>,
}

pub fn run_cell(setup: &Setup, channel: ChannelKind, snr_db: f64, sigma: f64, seed: u64) -> Result<CellSummary, AppError> {
    let trials = setup.cfg.source.count;
    let results: Vec<Option<TrialResult>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            run_trial(setup, channel, sigma, t, trial_seed(seed, t))
                .context(|| format!("cell (channel={channel}, snr_db={snr_db}), trial {t}"))
        })
        .collect::<Result<_, _>>()?;
    let ok: Vec<&TrialResult> = results.iter().flatten().collect();
    let reports: Vec<MetricReport> = ok.iter().map(|r| r.report).collect();
    let deltas: Vec<f64> = ok.iter().filter_map(|r| r.delta_psnr_db).collect();
    let (delta, ci) = mean_ci95(&deltas);
    Ok(CellSummary {
        channel,
        snr_db,
        seed,
        report: MetricReport::mean_of(&reports),
        mean_step: (!ok.is_empty()).then(|| ok.iter().map(|r| r.mean_step).sum::<f64>() / ok.len() as f64),
        outages: trials - ok.len(),
        delta_psnr_db: delta,
        delta_ci95: ci,
    })
}

/// Sample mean and the 95% half-width `1.96 s / sqrt(n)`.
pub fn mean_ci95(x: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = x.len();
    if n == 0 {
        return (None, None);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (Some(mean), None);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some(1.96 * (var / n as f64).sqrt()))
}

pub const SIMULATE_HEADER: [&str; 14] = [
    "snr_db",
    "channel",
    "k",
    "psnr_db",
    "ssim",
    "mse",
    "n",
    "seed",
    "mode",
    "target",
    "mean_step",
    "outages",
    "delta_psnr_db",
    "delta_ci95",
];

/// Runs every `(channel, snr)` cell; rows follow config order.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<Table, AppError> {
    let setup = Setup::new(cfg)?.with_codec()?;
    let cells: Vec<(ChannelKind, f64, f64)> = cfg
        .channels()
        .into_iter()
        .flat_map(|c| cfg.noise_levels().into_iter().map(move |(db, s)| (c, db, s)))
        .collect();
    let summaries: Vec<CellSummary> = cells
        .par_iter()
        .map(|&(c, db, s)| run_cell(&setup, c, db, s, cell_seed(cfg.seed, c, db)))
        .collect::<Result<_, _>>()?;
    let mut table = Table::new(&SIMULATE_HEADER);
    for s in summaries {
        table.push(simulate_row(&setup, &s));
    }
    Ok(table)
}

fn simulate_row(setup: &Setup, s: &CellSummary) -> Vec<Value> {
    let r = s.report;
    let mode = &setup.cfg.mode;
    vec![
        s.snr_db.into(),
        s.channel.name().into(),
        setup.k().into(),
        r.map(|r| r.psnr_db).into(),
        r.map(|r| r.ssim).into(),
        r.map(|r| r.mse).into(),
        r.map_or(0, |r| r.n).into(),
        s.seed.into(),
        mode.name().into(),
        match mode.kind {
            ModeKind::FixedStep => mode.target.into(),
            ModeKind::Adaptive => Value::Empty,
        },
        s.mean_step.into(),
        s.outages.into(),
        s.delta_psnr_db.into(),
        s.delta_ci95.into(),
    ]
}

/// Draws the training and held-out sets. Both depend only on the root seed.
pub fn training_data(setup: &Setup, root: u64) -> (Vec<Latent>, Vec<Latent>) {
    let t = &setup.cfg.train;
    match &setup.source {
        Source::Gaussian(_) => {
            let mut rng = sub(root, "train-data");
            let train = (0..t.train_count).map(|i| setup.source.draw(setup.shape, i, &mut rng)).collect();
            let mut rng = sub(root, "held-out");
            let held = (0..t.held_out).map(|i| setup.source.draw(setup.shape, i, &mut rng)).collect();
            (train, held)
        }
        Source::File(v) => {
            if v.len() > t.held_out {
                let (a, b) = v.split_at(v.len() - t.held_out);
                (a.to_vec(), b.to_vec())
            } else {
                (v.clone(), v.clone())
            }
        }
    }
}

/// Trains a codec from scratch. Data come from `cfg.seed`; initialization
/// and training noise from `train_seed`.
pub fn train(setup: &Setup, train_seed: u64) -> Result<TrainOutcome, AppError> {
    let cfg = &setup.cfg;
    let (data, held) = training_data(setup, cfg.seed);
    let k = cfg.codec_k()?;
    let params = init_codec(setup.shape, k, cfg.codec.arch(), &mut sub(train_seed, "init")).context(|| "codec init".into())?;
    let mut tc = cfg.train_config();
    tc.eval_seed = derive_seed(cfg.seed, &[label("eval")]);
    train_codec(
        &data,
        &held,
        &setup.schedule,
        params,
        cfg.loss_weights(),
        &tc,
        &mut sub(train_seed, "train"),
    )
    .context(|| "training".into())
}

pub const TRAIN_LOG_HEADER: [&str; 6] = ["step", "l_kl", "l_mse", "l_g", "total", "eval_psnr"];

/// Step 0 carries the untrained evaluation only.
pub fn training_log(out: &TrainOutcome) -> Table {
    let mut t = Table::new(&TRAIN_LOG_HEADER);
    t.push(vec![
        0usize.into(),
        Value::Empty,
        Value::Empty,
        Value::Empty,
        Value::Empty,
        out.initial_eval_psnr.into(),
    ]);
    for row in &out.log {
        t.push(vec![
            row.step.into(),
            row.loss.l_kl.into(),
            row.loss.l_mse.into(),
            row.loss.l_g.into(),
            row.loss.total.into(),
            row.eval_psnr.into(),
        ]);
    }
    t
}

pub const SWEEP_HEADER: [&str; 11] = [
    "parameter",
    "value",
    "k",
    "snr_db",
    "psnr_db",
    "ssim",
    "mse",
    "n",
    "seed",
    "train_psnr_initial_db",
    "train_psnr_final_db",
];

/// Trains and evaluates one codec per grid value. Each point is seeded by
/// `(seed, parameter, value)` and evaluated on the same paired trials, so
/// rows do not depend on grid order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Table, AppError> {
    let grid = cfg.sweep.as_ref().ok_or_else(|| AppError::Config {
        path: "sweep".into(),
        reason: "a [sweep] section is required".into(),
    })?;
    if grid.values.is_empty() {
        return Err(AppError::Config {
            path: "sweep.values".into(),
            reason: "grid must not be empty".into(),
        });
    }
    let rows: Vec<Vec<Value>> = grid
        .values
        .par_iter()
        .map(|&v| sweep_point(cfg, grid.parameter, v))
        .collect::<Result<_, _>>()?;
    let mut table = Table::new(&SWEEP_HEADER);
    for r in rows {
        table.push(r);
    }
    Ok(table)
}

fn sweep_point(base: &ExperimentConfig, param: SweepParam, value: f64) -> Result<Vec<Value>, AppError> {
    let at = |e: AppError| match e {
        AppError::Config { path, reason } => AppError::Config {
            path,
            reason: format!("{reason} (sweep {}={value})", param.name()),
        },
        AppError::Numeric { context, source } => AppError::Numeric {
            context: format!("sweep {}={value}: {context}", param.name()),
            source,
        },
        other => other,
    };
    let mut cfg = base.clone();
    cfg.codec.enabled = true;
    cfg.codec.params = None;
    cfg.mode.kind = ModeKind::Adaptive;
    match param {
        SweepParam::Lambda => cfg.loss.lambda = value,
        SweepParam::Gamma => cfg.loss.gamma = value,
        SweepParam::Channels => {
            cfg.codec.channels = Some(value);
            cfg.codec.k = None;
        }
        SweepParam::K => {
            cfg.codec.k = Some(value);
            cfg.codec.channels = None;
        }
    }
    cfg.validate().map_err(at)?;
    let seed = derive_seed(base.seed, &[label("sweep"), label(param.name()), value.to_bits()]);
    let mut setup = Setup::new(&cfg).map_err(at)?;
    let outcome = train(&setup, seed).map_err(at)?;
    setup.codec = Some(outcome.params.clone());
    let snr_db = cfg.train.snr_db;
    let sigma = diffsc_core::db_to_linear(-snr_db).sqrt();
    let eval_seed = derive_seed(base.seed, &[label("sweep-eval"), snr_db.to_bits()]);
    let cell = run_cell(&setup, ChannelKind::Awgn, snr_db, sigma, eval_seed).map_err(at)?;
    let r = cell.report;
    Ok(vec![
        param.name().into(),
        value.into(),
        setup.k().into(),
        snr_db.into(),
        r.map(|r| r.psnr_db).into(),
        r.map(|r| r.ssim).into(),
        r.map(|r| r.mse).into(),
        r.map_or(0, |r| r.n).into(),
        seed.into(),
        outcome.initial_eval_psnr.into(),
        outcome.final_eval_psnr.into(),
    ])
}

/// Runs `f` on a pool of `threads` workers, or the global pool when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, AppError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| AppError::Config {
                path: "--threads".into(),
                reason: e.to_string(),
            })?;
            Ok(pool.install(f))
        }
    }
}
