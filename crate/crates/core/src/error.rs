use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the core numerics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("step {step} out of range 0..={max}")]
    StepOutOfRange { step: usize, max: usize },

    #[error("reverse step requires t >= 1, got t = 0")]
    InvalidStep,

    #[error("{what} must be {expected}, got {value}")]
    Domain {
        what: &'static str,
        expected: &'static str,
        value: f64,
    },

    #[error("noise variance {sigma2} exceeds the deepest step (max representable {max_sigma2})")]
    Saturated { sigma2: f64, max_sigma2: f64 },

    #[error(
        "compensation infeasible: channel sigma^2 = {sigma2} is noisier than target step {target} (sigma^2 = {target_sigma2})"
    )]
    CompensationInfeasible {
        sigma2: f64,
        target: usize,
        target_sigma2: f64,
    },

    #[error("SNR is infinite for a noiseless channel")]
    InfiniteSnr,

    #[error("degenerate channel: |h| = 0 and sigma = 0")]
    DegenerateChannel,

    #[error("deep fade: |h| = 0, equalization impossible")]
    DeepFade,

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("rank-deficient MIMO channel, dead streams {streams:?}")]
    RankDeficient { streams: Vec<usize> },

    #[error("non-finite output in layer {layer}")]
    NumericOverflow { layer: &'static str },

    #[error("training diverged; last finite step {last_finite_step:?}")]
    TrainingAborted { last_finite_step: Option<usize> },

    #[error("window {window} larger than image {width}x{height}")]
    WindowTooLarge {
        window: usize,
        width: usize,
        height: usize,
    },

    #[error("need at least {required} samples, got {actual}")]
    TooFewSamples { required: usize, actual: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn config_err(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Config {
        field,
        reason: reason.into(),
    }
}

pub(crate) fn ensure_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, actual })
    }
}
