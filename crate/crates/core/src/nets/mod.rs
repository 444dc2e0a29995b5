//! Conditioned U-Nets for the four removal stages and the single-net baseline.
//!
//! The engine is a small NCHW tensor library with hand-written backward passes, generic
//! over `f32` (training) and `f64` (gradient verification).

pub mod checkpoint;
mod film;
pub mod layers;
mod pipeline;
mod stage;
mod tensor;
mod unet;

pub use film::{Film, FilmCache};
pub use pipeline::{sstr_forward, stage_seed, AuxGrads, Intermediates, PipelineNet, PipelineTape, StageMask};
pub use stage::{
    background_extract, background_extract_batch, baseline_forward, conditions_to_vec, image_to_tensor,
    images_to_tensor, reconstruct, selective_remove, stage_spec, tensor_to_image, text_extract, ModuleNet,
    NetStage, NetWidth,
};
pub use tensor::{mse_loss, Scalar, Tensor};
pub use unet::{ResBlock, UNet, UNetSpec, UNetTape};

/// Applies FiLM to a `[C, h, w]` feature map with a single condition.
pub fn film_modulate<T: Scalar>(
    features: &Tensor<T>,
    cond: &crate::synthgen::ConditionVector,
    film: &Film<T>,
) -> crate::Result<Tensor<T>> {
    let c: Vec<T> = conditions_to_vec(&[cond]);
    film.forward(features, &c).map(|(y, _)| y)
}
