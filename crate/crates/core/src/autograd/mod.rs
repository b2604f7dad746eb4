//! A small tape-based reverse-mode differentiation engine over dense
//! channel-last tensors, generic over `f32` (training) and `f64` (checks).

mod gradcheck;
mod graph;
pub mod kernels;
mod ops;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{grad_check, Coords, GradCheckOptions, GradCheckReport};
pub use graph::{BackCtx, BackwardFn, Graph, Var};
pub use ops::{embed_timestep, Reduction};
pub use optim::{Adam, AdamConfig};
pub use params::{Bound, ParamGroup, ParamId, ParamStore, Parameter};
pub use tensor::{Real, Tensor};

#[cfg(test)]
mod tests;
