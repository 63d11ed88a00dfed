//! Diffusion variance schedules and the channel-noise/step correspondence.
//!
//! A channel that adds noise of variance `sigma2` to a latent is equivalent
//! to the forward process at the step `u` where `alpha_bar(u) = 1 / (1 + sigma2)`.
//! Step `0` is the noiseless state with `alpha_bar(0) = 1`.

use alloc::vec::Vec;

use crate::error::{config_err, Error, Result};
use crate::math::sqrt;

/// Immutable variance schedule `beta_t`, `alpha_t = 1 - beta_t` and
/// `alpha_bar_t = prod_{s <= t} alpha_s` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Result of identifying a noise variance with a diffusion step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMapping {
    pub step: usize,
    pub alpha_bar: f64,
    /// `sqrt(alpha_bar)`, applied to the received signal.
    pub scale: f64,
    /// `|alpha_bar - 1 / (1 + sigma2)|` at the chosen step.
    pub residual: f64,
}

impl StepMapping {
    fn at(schedule: &Schedule, step: usize, target: f64) -> Self {
        let alpha_bar = schedule.alpha_bar(step);
        StepMapping {
            step,
            alpha_bar,
            scale: sqrt(alpha_bar),
            residual: (alpha_bar - target).abs(),
        }
    }
}

impl Schedule {
    /// Linearly spaced betas from `beta_start` to `beta_end` inclusive.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(config_err("schedule.steps", "must be at least 1"));
        }
        if !(beta_start > 0.0 && beta_start < 1.0) {
            return Err(config_err("schedule.beta_start", "must lie in (0, 1)"));
        }
        if !(beta_end >= beta_start && beta_end < 1.0) {
            return Err(config_err(
                "schedule.beta_end",
                "must satisfy beta_start <= beta_end < 1",
            ));
        }
        let betas = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * (i as f64) / ((steps - 1) as f64)
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(config_err("schedule.steps", "must be at least 1"));
        }
        if betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(config_err("schedule.betas", "every beta must lie in (0, 1)"));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for &a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        Ok(Schedule {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// A shorter schedule that visits `steps` evenly spaced timesteps of this
    /// one, keeping `alpha_bar` at the visited steps. The last visited step is
    /// always `T`.
    pub fn respaced(&self, steps: usize) -> Result<Self> {
        let total = self.steps();
        if steps == 0 || steps > total {
            return Err(config_err("mode.respaced_steps", "must lie in 1..=T"));
        }
        let mut prev = 1.0;
        let mut betas = Vec::with_capacity(steps);
        for k in 1..=steps {
            // ceil(k * T / steps) keeps the visited steps strictly increasing.
            let t = (k * total).div_ceil(steps);
            let ab = self.alpha_bar(t);
            betas.push(1.0 - ab / prev);
            prev = ab;
        }
        Self::from_betas(betas)
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// `beta_t` for `1 <= t <= T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `alpha_t` for `1 <= t <= T`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// `alpha_bar_t` for `0 <= t <= T`, with `alpha_bar_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            Err(Error::StepOutOfRange {
                step: t,
                max: self.steps(),
            })
        } else {
            Ok(())
        }
    }

    /// Channel noise variance equivalent to step `u`: `(1 - alpha_bar_u) / alpha_bar_u`.
    pub fn step_to_sigma2(&self, u: usize) -> Result<f64> {
        self.check_step(u)?;
        if u == 0 {
            return Ok(0.0);
        }
        let ab = self.alpha_bar(u);
        Ok((1.0 - ab) / ab)
    }

    /// Largest noise variance the schedule can absorb.
    pub fn max_sigma2(&self) -> f64 {
        let ab = self.alpha_bar(self.steps());
        (1.0 - ab) / ab
    }

    /// Step whose `alpha_bar` is nearest to `1 / (1 + sigma2)`, ties going to
    /// the smaller step.
    pub fn sigma2_to_step(&self, sigma2: f64) -> Result<StepMapping> {
        if !(sigma2 >= 0.0) {
            return Err(Error::Domain {
                what: "sigma2",
                expected: "nonnegative",
                value: sigma2,
            });
        }
        let max_sigma2 = self.max_sigma2();
        if sigma2 > max_sigma2 {
            return Err(Error::Saturated { sigma2, max_sigma2 });
        }
        if sigma2 == 0.0 {
            return Ok(StepMapping::at(self, 0, 1.0));
        }
        let target = 1.0 / (1.0 + sigma2);
        // alpha_bar over 0..=T is strictly decreasing: find the first step at
        // or below the target, then compare with its predecessor.
        let below = self.alpha_bars.partition_point(|&ab| ab > target) + 1;
        let step = if below > self.steps() {
            self.steps()
        } else {
            let upper = self.alpha_bar(below - 1) - target;
            let lower = target - self.alpha_bar(below);
            if upper <= lower {
                below - 1
            } else {
                below
            }
        };
        let mut mapping = StepMapping::at(self, step, target);
        // The canonical noise level of a step is an exact hit even when
        // 1 / (1 + sigma2) rounds an ulp away from alpha_bar.
        if self.step_to_sigma2(step)? == sigma2 {
            mapping.residual = 0.0;
        }
        Ok(mapping)
    }

    /// Variance of the compensation noise needed to bring a channel of
    /// variance `sigma2` up to the forward state at `target`:
    /// `(1 - alpha_bar_T) / alpha_bar_T - sigma2`.
    pub fn compensation_variance(&self, target: usize, sigma2: f64) -> Result<f64> {
        if target == 0 {
            return Err(Error::StepOutOfRange {
                step: 0,
                max: self.steps(),
            });
        }
        let target_sigma2 = self.step_to_sigma2(target)?;
        let extra = target_sigma2 - sigma2;
        if extra < 0.0 {
            return Err(Error::CompensationInfeasible {
                sigma2,
                target,
                target_sigma2,
            });
        }
        Ok(extra)
    }
}
