//! Core numerics for diffusion-driven semantic communication.
//!
//! Wireless channel noise is identified with a step of the diffusion forward
//! process, so a frozen reverse process can act as the channel denoiser. A
//! VAE-style codec compresses latents for bandwidth-limited links and is
//! trained with a hybrid KL/MSE objective.
//!
//! The crate is `no_std` and only needs `alloc`. All randomness is drawn from
//! caller-provided [`rand::Rng`] streams so every result is replayable.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod channels;
pub mod codec;
pub mod diffusion;
mod error;
pub mod latent;
pub mod loss;
mod math;
pub mod metrics;
pub mod rng;
pub mod schedule;

pub use error::{Error, Result};
pub use math::{db_to_linear, linear_to_db};
pub use latent::{Latent, Shape};
pub use schedule::{Schedule, StepMapping};
