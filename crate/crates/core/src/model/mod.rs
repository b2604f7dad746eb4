//! The conditional denoiser with its conv and EPI-transformer adapters, and
//! the noise-map predictor that seeds the reverse process from the degraded
//! input.

mod adapters;
mod denoiser;
mod layers;
mod predictor;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adapters::{ConvAdapter, ConvAdapterConfig, EpiBranch, EpitAdapter, EpitAdapterConfig, TransformerLayer};
pub use denoiser::DenoiserModel;
pub use layers::{Activation, Conv, Dense, MultiPatternConv, ResBlock, TimeEmbed};
pub use predictor::NoisePredictorModel;

use crate::autograd::{ParamGroup, ParamStore, Real, Tensor};
use crate::error::{Error, Result};
use crate::lf::{Dims, LightField, RangeTag};
use layers::Init;

/// What the denoiser's last layer regresses. Both are exposed to callers as
/// a noise estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    /// The network output is the noise estimate.
    Epsilon,
    /// The network output is the clean sample; the noise estimate is derived
    /// from it so that `predict_x0` returns the output unchanged.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub image_channels: usize,
    /// encoder and bottleneck widths
    pub channels: [usize; 2],
    pub time_dim: usize,
    pub time_hidden: usize,
    /// conv-adapter bottleneck at the full-resolution and bottleneck stages
    pub adapter_bottleneck: [usize; 2],
    pub adapter_kernel: usize,
    pub token_width: usize,
    pub heads: usize,
    pub predictor_channels: usize,
    pub prediction: Prediction,
    pub freeze_backbone: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_channels: 3,
            channels: [16, 32],
            time_dim: 32,
            time_hidden: 64,
            adapter_bottleneck: [8, 16],
            adapter_kernel: 3,
            token_width: 16,
            heads: 2,
            predictor_channels: 8,
            prediction: Prediction::Sample,
            freeze_backbone: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// All trainable state: one parameter store shared by the denoiser and the
/// noise predictor.
#[derive(Debug, Clone)]
pub struct Network<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub denoiser: DenoiserModel,
    pub predictor: NoisePredictorModel,
}

impl<T: Real> Network<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        if config.image_channels == 0 || config.time_dim % 2 != 0 {
            return Err(Error::config("image_channels must be positive and time_dim even"));
        }
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut init = Init {
            store: &mut params,
            rng: &mut rng,
            group: ParamGroup::Backbone,
        };
        let denoiser = DenoiserModel::new(&mut init, &config)?;
        let predictor = NoisePredictorModel::new(&mut init, &config)?;
        params.set_frozen(ParamGroup::Backbone, config.freeze_backbone);
        Ok(Network {
            config,
            params,
            denoiser,
            predictor,
        })
    }

    /// Same structure with parameters converted to another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self.params.cast(),
            denoiser: self.denoiser.clone(),
            predictor: self.predictor.clone(),
        }
    }
}

pub fn lf_to_tensor<T: Real>(lf: &LightField) -> Tensor<T> {
    let data = lf.data().iter().map(|&x| T::of(x as f64)).collect();
    Tensor::new(&lf.dims().as_array(), data).expect("light field dims match data")
}

pub fn tensor_to_lf<T: Real>(t: &Tensor<T>, range: RangeTag) -> Result<LightField> {
    let shape: [usize; 6] = t
        .shape()
        .try_into()
        .map_err(|_| Error::shape("tensor_to_lf", format!("expected 6-D, got {:?}", t.shape())))?;
    let data = t.data().iter().map(|&x| x.f64() as f32).collect();
    LightField::new(Dims::from_array(shape), data, range)
}
