//! Image planes, padding-aware resize, alpha compositing, region masks and pixel metrics.

mod composite;
mod geometry;
mod image;
mod io;
mod mask;
mod metrics;

pub use composite::alpha_composite;
pub use geometry::{check_side, resize_bilinear, resize_with_padding, unpad, PadBox, PixelBox, SIDE_MULTIPLE};
pub use image::{Image, ImageRgb, TextLayerRgba, MIN_SIDE};
pub use io::{dequantize, load_image, quantize, save_image};
pub use mask::{region_masks, RegionKind, RegionMask, RegionMasks};
pub use metrics::{mse, psnr, psnr_from_mse, PSNR_CAP_DB};
