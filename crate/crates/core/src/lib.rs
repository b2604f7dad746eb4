//! Diffusion-based enhancement of underwater 4-D light fields.
//!
//! The crate bundles the light-field data model ([`lf`]), the diffusion
//! schedule ([`schedule`]), a reverse-mode differentiation engine
//! ([`autograd`]), the adapter-augmented denoiser and noise-map predictor
//! ([`model`]), the Tucker-core geometry regularizer ([`georeg`]), a
//! synthetic underwater scene generator ([`watersim`]), the training and
//! few-step inference loops ([`pipeline`]), quality metrics ([`metrics`])
//! and the invariant suite ([`selftest`]).

pub mod autograd;
pub mod error;
pub mod georeg;
pub mod lf;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod schedule;
pub mod selftest;
pub mod watersim;

pub use error::{Error, Result};
pub use lf::{Dims, LightField, RangeTag};
pub use schedule::{Schedule, ScheduleConfig};
