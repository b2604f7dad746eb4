//! Discrete diffusion noise schedule and its closed-form kernels.
//!
//! Steps are indexed `1..=T`; `alpha_bar(0)` is defined as 1 so the last
//! reverse step lands exactly on the clean estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lf::{LightField, RangeTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Linear,
}

/// Reverse-noise scale convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SigmaConvention {
    /// `σ_t² = (1-ᾱ_{t-1})/(1-ᾱ_t) · β_t`
    #[default]
    Posterior,
    /// `σ_t² = β_t`
    Beta,
}

/// The JSON sidecar embedded in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub total_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    #[serde(default)]
    pub kind: ScheduleKind,
    #[serde(default)]
    pub sigma: SigmaConvention,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            total_steps: 1000,
            beta_min: 1e-4,
            beta_max: 0.02,
            kind: ScheduleKind::Linear,
            sigma: SigmaConvention::Posterior,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    config: ScheduleConfig,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    sigmas: Vec<f64>,
}

pub fn make_schedule(total_steps: usize, beta_min: f64, beta_max: f64, kind: ScheduleKind) -> Result<Schedule> {
    Schedule::new(ScheduleConfig {
        total_steps,
        beta_min,
        beta_max,
        kind,
        sigma: SigmaConvention::Posterior,
    })
}

impl Schedule {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        let ScheduleConfig {
            total_steps: t,
            beta_min,
            beta_max,
            ..
        } = config;
        if t == 0 {
            return Err(Error::config("schedule needs at least one step"));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::config(format!(
                "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let betas = match config.kind {
            ScheduleKind::Linear if t == 1 => vec![beta_min],
            ScheduleKind::Linear => (0..t)
                .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (t - 1) as f64)
                .collect(),
        };
        Ok(Self::with_betas(config, betas))
    }

    /// Builds a schedule from explicit betas (each in `(0, 1)`).
    pub fn from_betas(betas: Vec<f64>, sigma: SigmaConvention) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::config("betas must be non-empty and inside (0, 1)"));
        }
        let lo = betas.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = betas.iter().cloned().fold(0.0, f64::max);
        let config = ScheduleConfig {
            total_steps: betas.len(),
            beta_min: lo,
            beta_max: hi,
            kind: ScheduleKind::Linear,
            sigma,
        };
        Ok(Self::with_betas(config, betas))
    }

    fn with_betas(config: ScheduleConfig, betas: Vec<f64>) -> Self {
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let sigmas = (0..betas.len())
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
                match config.sigma {
                    SigmaConvention::Posterior if alpha_bars[i] >= 1.0 => 0.0,
                    SigmaConvention::Posterior => ((1.0 - prev) / (1.0 - alpha_bars[i]) * betas[i]).sqrt(),
                    SigmaConvention::Beta => betas[i].sqrt(),
                }
            })
            .collect();
        Schedule {
            config,
            betas,
            alphas,
            alpha_bars,
            sigmas,
        }
    }

    pub fn config(&self) -> ScheduleConfig {
        self.config
    }

    pub fn total_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.total_steps() {
            return Err(Error::config(format!("timestep {t} outside 1..={}", self.total_steps())));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// `(√ᾱ_t, √(1-ᾱ_t))` so that `x_t = a·x0 + b·ε`.
    pub fn marginal_coeffs(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bar(t);
        (ab.sqrt(), (1.0 - ab).sqrt())
    }

    /// `(1/√ᾱ_t, -√(1-ᾱ_t)/√ᾱ_t)` so that `x̂0 = a·x_t + b·ε̂`.
    pub fn x0_coeffs(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bar(t);
        (1.0 / ab.sqrt(), -(1.0 - ab).sqrt() / ab.sqrt())
    }

    /// Adjacent-step reverse mean `g = a·x_t + b·ε̂` with
    /// `a = 1/√α_t`, `b = -(1-α_t)/(√(1-ᾱ_t)·√α_t)`.
    pub fn posterior_coeffs(&self, t: usize) -> (f64, f64) {
        let a = self.alpha(t);
        let ab = self.alpha_bar(t);
        // (1-α)/√(1-ᾱ) ≤ √β, so the ε̂ coefficient vanishes as α → 1
        let b = if a >= 1.0 { 0.0 } else { -(1.0 - a) / ((1.0 - ab).sqrt() * a.sqrt()) };
        (1.0 / a.sqrt(), b)
    }

    /// Reverse kernel from step `t` to an earlier step `s < t`, i.e. the mean
    /// and std of `q(x_s | x_t, x̂0)` with `x̂0` expressed through `ε̂`.
    /// Returns `(a, b, σ)` such that `x_s = a·x_t + b·ε̂ + σ·z`. For `s = t-1`
    /// this is exactly the adjacent kernel; for `s = 0` it returns `x̂0`.
    pub fn jump_coeffs(&self, t: usize, s: usize) -> (f64, f64, f64) {
        debug_assert!(s < t);
        let ab_t = self.alpha_bar(t);
        let ab_s = self.alpha_bar(s);
        let a_ts = ab_t / ab_s;
        // posterior mean = c0·x̂0 + ct·x_t
        let c0 = ab_s.sqrt() * (1.0 - a_ts) / (1.0 - ab_t);
        let ct = a_ts.sqrt() * (1.0 - ab_s) / (1.0 - ab_t);
        let (xa, xb) = self.x0_coeffs(t);
        let var = match self.config.sigma {
            SigmaConvention::Posterior => (1.0 - ab_s) / (1.0 - ab_t) * (1.0 - a_ts),
            SigmaConvention::Beta => 1.0 - a_ts,
        };
        // x̂0 = xa·x_t + xb·ε̂
        (ct + c0 * xa, c0 * xb, var.max(0.0).sqrt())
    }

    /// `ρ_t = ᾱ_t²`, the progressive geometry-regularization weight.
    pub fn geometry_weight(&self, t: usize) -> f64 {
        let ab = self.alpha_bar(t);
        ab * ab
    }
}

fn combine(a: &LightField, b: &LightField, ca: f64, cb: f64, op: &'static str) -> Result<LightField> {
    if a.dims() != b.dims() {
        return Err(Error::shape(op, format!("{} vs {}", a.dims(), b.dims())));
    }
    let (ca, cb) = (ca as f32, cb as f32);
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| ca * x + cb * y).collect();
    LightField::new(a.dims(), data, RangeTag::Unbounded)
}

/// `√ᾱ·x0 + √(1-ᾱ)·ε` for an explicit `ᾱ`.
pub fn q_sample_with(x0: &LightField, alpha_bar: f64, eps: &LightField) -> Result<LightField> {
    combine(x0, eps, alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt(), "q_sample")
}

/// Forward marginal `x_t = √ᾱ_t·x0 + √(1-ᾱ_t)·ε`.
pub fn q_sample(sched: &Schedule, x0: &LightField, t: usize, eps: &LightField) -> Result<LightField> {
    sched.check_step(t)?;
    q_sample_with(x0, sched.alpha_bar(t), eps)
}

/// Clean estimate `x̂0 = (x_t - √(1-ᾱ_t)·ε̂)/√ᾱ_t`.
pub fn predict_x0(sched: &Schedule, x_t: &LightField, eps_hat: &LightField, t: usize) -> Result<LightField> {
    sched.check_step(t)?;
    let (a, b) = sched.x0_coeffs(t);
    combine(x_t, eps_hat, a, b, "predict_x0")
}

/// One ancestral step `t → t-1`: `g(x_t, ε̂) + σ_t·z`.
pub fn posterior_step(
    sched: &Schedule,
    x_t: &LightField,
    eps_hat: &LightField,
    t: usize,
    z: &LightField,
) -> Result<LightField> {
    sched.check_step(t)?;
    let (a, b) = sched.posterior_coeffs(t);
    let mean = combine(x_t, eps_hat, a, b, "posterior_step")?;
    combine(&mean, z, 1.0, sched.sigma(t), "posterior_step")
}

/// Reverse jump `t → s` through `q(x_s | x_t, x̂0)`; see [`Schedule::jump_coeffs`].
pub fn posterior_jump(
    sched: &Schedule,
    x_t: &LightField,
    eps_hat: &LightField,
    t: usize,
    s: usize,
    z: &LightField,
) -> Result<LightField> {
    sched.check_step(t)?;
    if s >= t {
        return Err(Error::config(format!("jump target {s} must precede {t}")));
    }
    let (a, b, sigma) = sched.jump_coeffs(t, s);
    let mean = combine(x_t, eps_hat, a, b, "posterior_jump")?;
    combine(&mean, z, 1.0, sigma, "posterior_jump")
}
