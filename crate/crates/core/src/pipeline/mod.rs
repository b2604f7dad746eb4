//! Adapter training, few-step inference and the vanilla DDPM baseline.

mod checkpoint;
mod data;
mod ddpm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autograd::{Adam, AdamConfig, Bound, Graph, ParamGroup, ParamStore, Reduction, Tensor, Var};
use crate::error::{Error, Result};
use crate::georeg::{geometry_loss_var, GeoConfig};
use crate::lf::{Dims, LightField, RangeTag};
use crate::model::{lf_to_tensor, tensor_to_lf, DenoiserModel, Network, NoisePredictorModel};
use crate::schedule::Schedule;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use data::{load_dataset, sample_batch, Pair, TrainLog};
pub use ddpm::{ddpm_sample, ddpm_train_step, ddpm_train_step_with};

/// How inference bridges two scheduled steps `t > s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKernel {
    /// one adjacent-step posterior update from `t`, so the chain ends at
    /// noise level `min(S) − 1`
    SourceStep,
    /// the posterior `q(x_s | x_t, x̂0)` of the forward process, landing on
    /// `s` and on a clean sample after the last step
    #[default]
    Posterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// starting steps sampled uniformly per iteration
    pub start_steps: Vec<usize>,
    /// weight of the geometry term
    pub lambda: f64,
    pub lr: f64,
    pub batch: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// square spatial crop per sample; `None` trains on full views
    pub crop: Option<usize>,
    pub geo: GeoConfig,
    pub freeze_backbone: bool,
    /// leading iterations that train the backbone alone as a general
    /// conditional denoiser (see [`Trainer::pretrain_step`])
    pub pretrain_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            start_steps: vec![500, 400, 300, 200],
            lambda: 1.0,
            lr: 2e-4,
            batch: 1,
            max_iters: 20_000,
            seed: 0,
            crop: Some(32),
            geo: GeoConfig::default(),
            freeze_backbone: false,
            pretrain_iters: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, sched: &Schedule) -> Result<()> {
        if self.start_steps.is_empty() {
            return Err(Error::config("start_steps must not be empty"));
        }
        for &t in &self.start_steps {
            // the geometry term is evaluated at t − 1 ≥ 1
            if t < 2 || t > sched.total_steps() {
                return Err(Error::config(format!("start step {t} outside [2, {}]", sched.total_steps())));
            }
        }
        if !(self.lambda >= 0.0) || !(self.lr > 0.0) || self.batch == 0 {
            return Err(Error::config("lambda must be ≥ 0, lr > 0 and batch ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    /// strictly decreasing reverse steps
    pub steps: Vec<usize>,
    pub seed: u64,
    pub kernel: JumpKernel,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            steps: vec![500, 400, 300, 200, 100],
            seed: 0,
            kernel: JumpKernel::Posterior,
        }
    }
}

impl InferConfig {
    pub fn validate(&self, sched: &Schedule) -> Result<()> {
        let Some(&first) = self.steps.first() else {
            return Err(Error::config("inference steps must not be empty"));
        };
        if first > sched.total_steps() || self.steps.windows(2).any(|w| w[1] >= w[0]) || self.steps.contains(&0) {
            return Err(Error::config(format!(
                "inference steps must be strictly decreasing within [1, {}], got {:?}",
                sched.total_steps(),
                self.steps
            )));
        }
        Ok(())
    }
}

/// Anything that estimates the noise in `x_t` given the condition `y0`.
pub trait Denoise {
    fn eps(&self, g: &mut Graph<f32>, p: &Bound, x_t: Var, y0: Var, t: usize, alpha_bar: f64) -> Result<Var>;
}

impl Denoise for DenoiserModel {
    fn eps(&self, g: &mut Graph<f32>, p: &Bound, x_t: Var, y0: Var, t: usize, alpha_bar: f64) -> Result<Var> {
        self.forward(g, p, x_t, y0, t, alpha_bar)
    }
}

/// The denoiser with every adapter bypassed.
pub struct Backbone<'a>(pub &'a DenoiserModel);

impl Denoise for Backbone<'_> {
    fn eps(&self, g: &mut Graph<f32>, p: &Bound, x_t: Var, y0: Var, t: usize, alpha_bar: f64) -> Result<Var> {
        self.0.forward_backbone(g, p, x_t, y0, t, alpha_bar)
    }
}

/// Returns the exact noise `(x_t − √ᾱ·x0)/√(1−ᾱ)` implied by a known clean
/// target.
pub struct OracleDenoiser {
    pub x0: Tensor<f32>,
}

impl OracleDenoiser {
    pub fn new(x0: &LightField) -> Self {
        OracleDenoiser { x0: lf_to_tensor(x0) }
    }
}

impl Denoise for OracleDenoiser {
    fn eps(&self, g: &mut Graph<f32>, _p: &Bound, x_t: Var, _y0: Var, _t: usize, alpha_bar: f64) -> Result<Var> {
        let x0 = g.constant(self.x0.clone());
        let s = (1.0 - alpha_bar).sqrt();
        g.lincomb(&[(x_t, 1.0 / s), (x0, -alpha_bar.sqrt() / s)])
    }
}

/// Parameters as untracked graph constants.
fn bind_frozen(store: &ParamStore<f32>, g: &mut Graph<f32>) -> Bound {
    Bound::from_vars(store.iter().map(|p| g.constant(p.value.clone())).collect())
}

pub(crate) fn gaussian(dims: Dims, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    Tensor::from_fn(&dims.as_array(), |_| rng.sample(StandardNormal))
}

/// `√ᾱ·y0 + √(1−ᾱ)·f(y0, τ)`, the starting sample at `τ`.
fn start_sample(g: &mut Graph<f32>, p: &Bound, predictor: &NoisePredictorModel, sched: &Schedule, y0: Var, tau: usize) -> Result<Var> {
    let noise = predictor.forward(g, p, y0, tau)?;
    let (a, b) = sched.marginal_coeffs(tau);
    g.lincomb(&[(y0, a), (noise, b)])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub iter: u64,
    pub tau: usize,
    pub loss_pixel: f64,
    /// weighted geometry term before the `lambda` factor
    pub loss_geo: f64,
}

impl StepLosses {
    pub fn total(&self, lambda: f64) -> f64 {
        self.loss_pixel + lambda * self.loss_geo
    }
}

/// All mutable training state; everything needed to resume bit-identically.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: Network<f32>,
    pub sched: Schedule,
    pub config: TrainConfig,
    pub opt: Adam<f32>,
    pub rng: ChaCha8Rng,
    pub iter: u64,
}

impl Trainer {
    pub fn new(mut net: Network<f32>, sched: Schedule, config: TrainConfig) -> Result<Self> {
        config.validate(&sched)?;
        net.params.set_frozen(ParamGroup::Backbone, config.freeze_backbone);
        let opt = Adam::new(
            AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
            &net.params,
        );
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Trainer {
            net,
            sched,
            config,
            opt,
            rng,
            iter: 0,
        })
    }

    /// One optimizer step on a signed-range pair with the trained denoiser.
    pub fn train_step(&mut self, x0: &LightField, y0: &LightField) -> Result<StepLosses> {
        let den = self.net.denoiser.clone();
        self.train_step_with(&den, x0, y0)
    }

    /// [`train_step`](Self::train_step) with a substitute denoiser.
    pub fn train_step_with(&mut self, den: &dyn Denoise, x0: &LightField, y0: &LightField) -> Result<StepLosses> {
        let tau = self.config.start_steps[self.rng.random_range(0..self.config.start_steps.len())];
        self.train_step_at(den, x0, y0, tau)
    }

    /// A training step at a fixed starting step.
    pub fn train_step_at(&mut self, den: &dyn Denoise, x0: &LightField, y0: &LightField, tau: usize) -> Result<StepLosses> {
        self.sched.check_step(tau)?;
        if tau < 2 {
            return Err(Error::config(format!("training step {tau} leaves no intermediate sample")));
        }
        if x0.dims() != y0.dims() {
            return Err(Error::shape("train_step", format!("{} vs {}", x0.dims(), y0.dims())));
        }
        let z = gaussian(x0.dims(), &mut self.rng);

        let mut g = Graph::new();
        let p = self.net.params.bind(&mut g);
        let y = g.constant(lf_to_tensor(y0));
        let x0_t: Tensor<f32> = lf_to_tensor(x0);
        let target = g.constant(x0_t.clone());
        let x_tau = start_sample(&mut g, &p, &self.net.predictor, &self.sched, y, tau)?;
        let ab = self.sched.alpha_bar(tau);
        let eps = den.eps(&mut g, &p, x_tau, y, tau, ab)?;
        let (xa, xb) = self.sched.x0_coeffs(tau);
        let x_hat = g.lincomb(&[(x_tau, xa), (eps, xb)])?;
        let pixel = g.l1_loss(x_hat, target, Reduction::Sum)?;

        let (loss, geo) = if self.config.lambda > 0.0 {
            let (pa, pb) = self.sched.posterior_coeffs(tau);
            let zv = g.constant(z);
            let x_prev = g.lincomb(&[(x_tau, pa), (eps, pb), (zv, self.sched.sigma(tau))])?;
            let geo = geometry_loss_var(&mut g, x_prev, &x0_t, &self.sched, tau, self.config.geo, None)?;
            let total = g.lincomb(&[(pixel, 1.0), (geo, self.config.lambda)])?;
            (total, g.value(geo).item() as f64)
        } else {
            (pixel, 0.0)
        };
        let loss_pixel = g.value(pixel).item() as f64;
        if !loss_pixel.is_finite() || !geo.is_finite() {
            return Err(Error::NonFinite(format!("training loss at iteration {}", self.iter + 1)));
        }
        if g.requires_grad(loss) {
            g.backward(loss)?;
        }
        self.net.params.zero_grad();
        self.net.params.collect_grads(&g, &p);
        self.opt.step(&mut self.net.params);
        self.iter += 1;
        Ok(StepLosses {
            iter: self.iter,
            tau,
            loss_pixel,
            loss_geo: geo,
        })
    }

    /// Backbone-only denoising step: `t ~ U{1..T}`, `x_t` from the forward
    /// marginal of `x0`, loss `‖x0 − x̂0‖₁` with every adapter bypassed.
    /// Stands in for a backbone pretrained as a general diffusion model.
    pub fn pretrain_step(&mut self, x0: &LightField, y0: &LightField) -> Result<StepLosses> {
        if x0.dims() != y0.dims() {
            return Err(Error::shape("pretrain_step", format!("{} vs {}", x0.dims(), y0.dims())));
        }
        let t = self.rng.random_range(1..=self.sched.total_steps());
        let eps = gaussian(x0.dims(), &mut self.rng);
        let (a, b) = self.sched.marginal_coeffs(t);
        let frozen = self.net.params.is_frozen(ParamGroup::Backbone);
        self.net.params.set_frozen(ParamGroup::Backbone, false);

        let mut g = Graph::new();
        let p = self.net.params.bind(&mut g);
        let target = g.constant(lf_to_tensor(x0));
        let y = g.constant(lf_to_tensor(y0));
        let ev = g.constant(eps);
        let x_t = g.lincomb(&[(target, a), (ev, b)])?;
        let den = self.net.denoiser.clone();
        let eps_hat = Backbone(&den).eps(&mut g, &p, x_t, y, t, self.sched.alpha_bar(t))?;
        let (xa, xb) = self.sched.x0_coeffs(t);
        let x_hat = g.lincomb(&[(x_t, xa), (eps_hat, xb)])?;
        let loss = g.l1_loss(x_hat, target, Reduction::Sum)?;
        let value = g.value(loss).item() as f64;
        if !value.is_finite() {
            self.net.params.set_frozen(ParamGroup::Backbone, frozen);
            return Err(Error::NonFinite(format!("pretraining loss at iteration {}", self.iter + 1)));
        }
        g.backward(loss)?;
        self.net.params.zero_grad();
        self.net.params.collect_grads(&g, &p);
        self.opt.step(&mut self.net.params);
        self.net.params.set_frozen(ParamGroup::Backbone, frozen);
        self.iter += 1;
        Ok(StepLosses {
            iter: self.iter,
            tau: t,
            loss_pixel: value,
            loss_geo: 0.0,
        })
    }

    /// Runs up to `max_iters` total iterations over `pairs`, sampling and
    /// augmenting one batch per step. The first `pretrain_iters` of them are
    /// backbone pretraining steps.
    pub fn train(&mut self, pairs: &[Pair], mut on_step: impl FnMut(&StepLosses) -> Result<()>) -> Result<()> {
        while (self.iter as usize) < self.config.max_iters {
            let (x0, y0) = sample_batch(pairs, self.config.batch, self.config.crop, &mut self.rng)?;
            let losses = if (self.iter as usize) < self.config.pretrain_iters {
                self.pretrain_step(&x0, &y0)?
            } else {
                self.train_step(&x0, &y0)?
            };
            on_step(&losses)?;
        }
        Ok(())
    }
}

/// Few-step enhancement of a signed-range `y0`.
pub fn infer(net: &Network<f32>, sched: &Schedule, y0: &LightField, cfg: &InferConfig) -> Result<LightField> {
    infer_with(net, &net.denoiser, sched, y0, cfg)
}

/// [`infer`] with a substitute denoiser.
pub fn infer_with(net: &Network<f32>, den: &dyn Denoise, sched: &Schedule, y0: &LightField, cfg: &InferConfig) -> Result<LightField> {
    cfg.validate(sched)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let y_t: Tensor<f32> = lf_to_tensor(y0);

    let mut x = {
        let mut g = Graph::new();
        let p = bind_frozen(&net.params, &mut g);
        let y = g.constant(y_t.clone());
        let v = start_sample(&mut g, &p, &net.predictor, sched, y, cfg.steps[0])?;
        g.value(v).clone()
    };
    for (i, &t) in cfg.steps.iter().enumerate() {
        let last = i + 1 == cfg.steps.len();
        let mut g = Graph::new();
        let p = bind_frozen(&net.params, &mut g);
        let y = g.constant(y_t.clone());
        let xv = g.constant(x.clone());
        let eps = den.eps(&mut g, &p, xv, y, t, sched.alpha_bar(t))?;
        let (a, b, sigma) = match cfg.kernel {
            JumpKernel::Posterior => sched.jump_coeffs(t, cfg.steps.get(i + 1).copied().unwrap_or(0)),
            JumpKernel::SourceStep => {
                let (a, b) = sched.posterior_coeffs(t);
                (a, b, sched.sigma(t))
            }
        };
        let mean = g.lincomb(&[(xv, a), (eps, b)])?;
        x = g.value(mean).clone();
        if !last && sigma > 0.0 {
            let s = sigma as f32;
            for (xi, zi) in x.data_mut().iter_mut().zip(gaussian(y0.dims(), &mut rng).data()) {
                *xi += s * zi;
            }
        }
        if x.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("inference state at step {t}")));
        }
    }
    Ok(tensor_to_lf(&x, RangeTag::Unbounded)?.clamp_to(RangeTag::Signed))
}

#[cfg(test)]
mod tests;
