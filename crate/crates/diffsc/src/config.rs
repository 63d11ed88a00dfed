//! Experiment configuration: TOML schema, defaults and validation.
//!
//! Unknown keys are rejected and every error carries the dotted path of the
//! offending field. See `configs/` for complete examples.

use std::fmt;
use std::path::{Path, PathBuf};

use diffsc_core::channels::RayleighConvention;
use diffsc_core::codec::{k_from_rate, rate_from_channels, Arch, SnrConditioning};
use diffsc_core::diffusion::{FixedStepVariant, ReceiveMode};
use diffsc_core::loss::{LossWeights, Optimizer, TrainConfig};
use diffsc_core::metrics::SsimParams;
use diffsc_core::{db_to_linear, Schedule, Shape};
use serde::{Deserialize, Serialize};

use crate::error::AppError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub source: SourceConfig,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub codec: CodecConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Gaussian,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "one")]
    pub variance: f64,
    /// `[w, h, c]`.
    pub shape: [usize; 3],
    /// Trials per simulation cell and evaluation set size.
    #[serde(default = "default_count")]
    pub count: usize,
    /// JSON array of latents, each of length `w*h*c` (file sources only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
    Mimo,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
            ChannelKind::Mimo => "mimo",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(t) => vec![t.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConventionName {
    #[default]
    Paper,
    Mmse,
}

impl From<ConventionName> for RayleighConvention {
    fn from(c: ConventionName) -> Self {
        match c {
            ConventionName::Paper => RayleighConvention::Paper,
            ConventionName::Mmse => RayleighConvention::Mmse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(rename = "type")]
    pub kind: OneOrMany<ChannelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<f64>>,
    /// Noise standard deviations, as an alternative to `snr_db`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    /// Fixed Rayleigh gain `[re, im]`; drawn from CN(0, 1) per trial when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<[f64; 2]>,
    #[serde(default = "two")]
    pub antennas: usize,
    #[serde(default)]
    pub convention: ConventionName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningName {
    #[default]
    Variance,
    Both,
    Off,
}

impl From<ConditioningName> for SnrConditioning {
    fn from(c: ConditioningName) -> Self {
        match c {
            ConditioningName::Variance => SnrConditioning::Variance,
            ConditioningName::Both => SnrConditioning::Both,
            ConditioningName::Off => SnrConditioning::Off,
        }
    }
}

impl From<SnrConditioning> for ConditioningName {
    fn from(c: SnrConditioning) -> Self {
        match c {
            SnrConditioning::Variance => ConditioningName::Variance,
            SnrConditioning::Both => ConditioningName::Both,
            SnrConditioning::Off => ConditioningName::Off,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Transmitted channel count `C`; the rate is `0.0013 C`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default = "default_bottleneck")]
    pub bottleneck: usize,
    #[serde(default)]
    pub snr_conditioning: ConditioningName,
    #[serde(default = "default_snr_range")]
    pub snr_range_db: [f64; 2],
    #[serde(default = "yes")]
    pub power_normalize: bool,
    /// Trained parameters; the codec is trained per `[train]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            enabled: false,
            channels: None,
            k: None,
            bottleneck: default_bottleneck(),
            snr_conditioning: ConditioningName::default(),
            snr_range_db: default_snr_range(),
            power_normalize: true,
            params: None,
        }
    }
}

impl CodecConfig {
    pub fn arch(&self) -> Arch {
        Arch {
            bottleneck: self.bottleneck,
            snr_conditioning: self.snr_conditioning.into(),
            snr_range_db: (self.snr_range_db[0], self.snr_range_db[1]),
            power_normalize: self.power_normalize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        LossConfig {
            lambda: w.lambda,
            gamma: w.gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub optimizer: OptimizerName,
    pub momentum: f64,
    pub snr_db: f64,
    pub eval_every: usize,
    /// Size of the synthetic training set.
    pub train_count: usize,
    /// Size of the held-out evaluation batch.
    pub held_out: usize,
    pub common_random_numbers: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            steps: 2000,
            batch: 4,
            lr: 1e-4,
            optimizer: OptimizerName::Adam,
            momentum: 0.0,
            snr_db: 5.0,
            eval_every: 100,
            train_count: 512,
            held_out: 32,
            common_random_numbers: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    #[default]
    Adaptive,
    FixedStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    #[default]
    Truncated,
    Respaced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeConfig {
    pub kind: ModeKind,
    /// `T_target` for fixed-step reception.
    pub target: usize,
    pub variant: VariantName,
}

impl Default for ModeConfig {
    fn default() -> Self {
        ModeConfig {
            kind: ModeKind::Adaptive,
            target: 200,
            variant: VariantName::Truncated,
        }
    }
}

impl ModeConfig {
    pub fn receive_mode(&self) -> ReceiveMode {
        match self.kind {
            ModeKind::Adaptive => ReceiveMode::Adaptive,
            ModeKind::FixedStep => ReceiveMode::FixedStep {
                target: self.target,
                variant: match self.variant {
                    VariantName::Truncated => FixedStepVariant::Truncated,
                    VariantName::Respaced => FixedStepVariant::Respaced,
                },
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModeKind::Adaptive => "adaptive",
            ModeKind::FixedStep => "fixed_step",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub peak: f64,
    pub ssim_window: usize,
    pub ssim_k1: f64,
    pub ssim_k2: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        let s = SsimParams::default();
        MetricsConfig {
            peak: s.peak,
            ssim_window: s.window,
            ssim_k1: s.k1,
            ssim_k2: s.k2,
        }
    }
}

impl MetricsConfig {
    pub fn ssim_params(&self) -> SsimParams {
        SsimParams {
            window: self.ssim_window,
            k1: self.ssim_k1,
            k2: self.ssim_k2,
            peak: self.peak,
            ..SsimParams::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    Gamma,
    Channels,
    K,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Gamma => "gamma",
            SweepParam::Channels => "channels",
            SweepParam::K => "k",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub csv: PathBuf,
    pub log: PathBuf,
    pub params: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            csv: PathBuf::from("results.csv"),
            log: PathBuf::from("train_log.csv"),
            params: PathBuf::from("params.json"),
        }
    }
}

impl OutputConfig {
    pub fn csv_path(&self) -> PathBuf {
        self.dir.join(&self.csv)
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(&self.log)
    }

    pub fn params_path(&self) -> PathBuf {
        self.dir.join(&self.params)
    }

    pub fn resolved_config_path(&self) -> PathBuf {
        self.dir.join("resolved_config.toml")
    }
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

fn yes() -> bool {
    true
}

fn default_count() -> usize {
    100
}

fn default_bottleneck() -> usize {
    Arch::default().bottleneck
}

fn default_snr_range() -> [f64; 2] {
    let (lo, hi) = Arch::default().snr_range_db;
    [lo, hi]
}

/// Parses and validates a config document. Relative file paths resolve
/// against `base_dir` when given.
pub fn parse_config(text: &str, base_dir: Option<&Path>) -> Result<ExperimentConfig, AppError> {
    let de = toml::Deserializer::parse(text).map_err(|e| AppError::Config {
        path: String::new(),
        reason: e.message().to_string(),
    })?;
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| AppError::Config {
        path: e.path().to_string(),
        reason: e.inner().message().to_string(),
    })?;
    if let Some(base) = base_dir {
        for p in [&mut cfg.source.path, &mut cfg.codec.params].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_config(&text, path.parent())
}

fn invalid(path: &str, reason: impl Into<String>) -> AppError {
    AppError::Config {
        path: path.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), AppError> {
        self.schedule()?;
        let shape = self.shape()?;
        let src = &self.source;
        if src.count == 0 {
            return Err(invalid("source.count", "must be at least 1"));
        }
        match src.kind {
            SourceKind::Gaussian => {
                if !(src.variance > 0.0 && src.variance.is_finite()) {
                    return Err(invalid("source.variance", "must be positive"));
                }
                if !src.mean.is_finite() {
                    return Err(invalid("source.mean", "must be finite"));
                }
            }
            SourceKind::File => match &src.path {
                None => return Err(invalid("source.path", "required for file sources")),
                Some(p) if !p.is_file() => {
                    return Err(invalid("source.path", format!("{} does not exist", p.display())))
                }
                Some(_) => {}
            },
        }

        let ch = &self.channel;
        if ch.kind.to_vec().is_empty() {
            return Err(invalid("channel.type", "must name at least one channel"));
        }
        match (&ch.snr_db, &ch.sigma) {
            (Some(_), Some(_)) => {
                return Err(invalid("channel.snr_db", "channel.snr_db and channel.sigma are mutually exclusive"))
            }
            (None, None) => return Err(invalid("channel.snr_db", "one of channel.snr_db or channel.sigma is required")),
            (Some(v), None) if v.is_empty() => return Err(invalid("channel.snr_db", "must not be empty")),
            (None, Some(v)) if v.is_empty() => return Err(invalid("channel.sigma", "must not be empty")),
            _ => {}
        }
        if let Some(v) = &ch.snr_db {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(invalid("channel.snr_db", "values must be finite"));
            }
        }
        if let Some(v) = &ch.sigma {
            if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(invalid("channel.sigma", "values must be positive"));
            }
        }
        if ch.antennas == 0 {
            return Err(invalid("channel.antennas", "must be at least 1"));
        }
        if let Some([re, im]) = ch.h {
            if re == 0.0 && im == 0.0 || !re.is_finite() || !im.is_finite() {
                return Err(invalid("channel.h", "must be finite and nonzero"));
            }
        }

        let codec = &self.codec;
        if codec.channels.is_some() && codec.k.is_some() {
            return Err(invalid("codec.channels", "codec.channels and codec.k are mutually exclusive"));
        }
        let rate_swept = self
            .sweep
            .as_ref()
            .is_some_and(|s| matches!(s.parameter, SweepParam::Channels | SweepParam::K));
        if (codec.enabled || self.sweep.is_some()) && !rate_swept {
            self.codec_k()?;
        }
        if codec.bottleneck == 0 {
            return Err(invalid("codec.bottleneck", "must be at least 1"));
        }
        if !(codec.snr_range_db[1] > codec.snr_range_db[0]) {
            return Err(invalid("codec.snr_range_db", "upper bound must exceed lower bound"));
        }
        if let Some(p) = &codec.params {
            if !p.is_file() {
                return Err(invalid("codec.params", format!("{} does not exist", p.display())));
            }
        }

        LossWeights::new(self.loss.lambda, self.loss.gamma).map_err(|e| invalid(core_field(&e, "loss"), e.to_string()))?;
        let t = &self.train;
        if t.batch == 0 {
            return Err(invalid("train.batch", "must be at least 1"));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(invalid("train.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&t.momentum) {
            return Err(invalid("train.momentum", "must lie in [0, 1)"));
        }
        if t.train_count == 0 {
            return Err(invalid("train.train_count", "must be at least 1"));
        }
        if t.held_out == 0 {
            return Err(invalid("train.held_out", "must be at least 1"));
        }
        if !t.snr_db.is_finite() {
            return Err(invalid("train.snr_db", "must be finite"));
        }

        if self.mode.kind == ModeKind::FixedStep && !(1..=self.schedule.steps).contains(&self.mode.target) {
            return Err(invalid("mode.target", format!("must lie in [1, {}]", self.schedule.steps)));
        }

        let m = &self.metrics;
        if !(m.peak > 0.0 && m.peak.is_finite()) {
            return Err(invalid("metrics.peak", "must be positive"));
        }
        if m.ssim_window < 3 || m.ssim_window.is_multiple_of(2) {
            return Err(invalid("metrics.ssim_window", "must be odd and at least 3"));
        }
        if m.ssim_window > shape.w || m.ssim_window > shape.h {
            return Err(invalid("metrics.ssim_window", "larger than the latent plane"));
        }

        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(invalid("sweep.values", "grid must not be empty"));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(invalid("sweep.values", "values must be finite"));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule, AppError> {
        let s = &self.schedule;
        Schedule::linear(s.steps, s.beta_start, s.beta_end).map_err(|e| invalid(core_field(&e, "schedule"), e.to_string()))
    }

    pub fn shape(&self) -> Result<Shape, AppError> {
        let [w, h, c] = self.source.shape;
        Shape::new(w, h, c).map_err(|e| invalid("source.shape", e.to_string()))
    }

    /// Compression factor, converting `channels` through `r = 0.0013 C`
    /// rounded to a whole number of transmitted elements.
    pub fn codec_k(&self) -> Result<f64, AppError> {
        let shape = self.shape()?;
        match (self.codec.channels, self.codec.k) {
            (Some(c), None) => k_from_rate(shape, rate_from_channels(c)).map_err(|e| invalid("codec.channels", e.to_string())),
            (None, Some(k)) => {
                diffsc_core::codec::compressed_len(shape, k).map_err(|e| invalid("codec.k", e.to_string()))?;
                Ok(k)
            }
            (None, None) => Err(invalid("codec.k", "one of codec.channels or codec.k is required")),
            (Some(_), Some(_)) => Err(invalid("codec.channels", "codec.channels and codec.k are mutually exclusive")),
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda: self.loss.lambda,
            gamma: self.loss.gamma,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            steps: t.steps,
            batch: t.batch,
            lr: t.lr,
            optimizer: match t.optimizer {
                OptimizerName::Sgd => Optimizer::Sgd { momentum: t.momentum },
                OptimizerName::Adam => Optimizer::adam(),
            },
            snr_db: t.snr_db,
            eval_every: t.eval_every,
            eval_seed: 0,
            peak: self.metrics.peak,
            common_random_numbers: t.common_random_numbers,
        }
    }

    /// `(label, sigma)` per SNR cell, in config order. The label is the SNR
    /// in dB at unit signal power.
    pub fn noise_levels(&self) -> Vec<(f64, f64)> {
        match (&self.channel.snr_db, &self.channel.sigma) {
            (Some(db), _) => db.iter().map(|&d| (d, db_to_linear(-d).sqrt())).collect(),
            (None, Some(s)) => s.iter().map(|&s| (-20.0 * s.log10(), s)).collect(),
            (None, None) => Vec::new(),
        }
    }

    pub fn channels(&self) -> Vec<ChannelKind> {
        self.channel.kind.to_vec()
    }

    /// The config with `codec.channels` converted to `codec.k`, suitable for
    /// replaying the run.
    pub fn resolved(&self) -> Result<ExperimentConfig, AppError> {
        let mut out = self.clone();
        if self.codec.channels.is_some() {
            out.codec.k = Some(self.codec_k()?);
            out.codec.channels = None;
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String, AppError> {
        let mut header = String::from("# Resolved configuration; replay with `diffsc <command> --config <this file>`.\n");
        if let Some(c) = self.codec.channels {
            header.push_str(&format!("# codec.channels = {c} resolved to codec.k = {}\n", self.codec_k()?));
        }
        let body = toml::to_string(&self.resolved()?).map_err(|e| invalid("", e.to_string()))?;
        Ok(header + &body)
    }
}

fn core_field(e: &diffsc_core::Error, section: &'static str) -> &'static str {
    match e {
        diffsc_core::Error::Config { field, .. } => field,
        _ => section,
    }
}
