//! Image containers, transfer curves, demosaicing, resampling and file I/O.

mod buffers;
mod demosaic;
pub mod pfm;
pub mod png;
mod resize;
mod transfer;

pub use buffers::{BayerMosaic, CfaPattern, LinearImage, Plane, Rgb, SdrImage};
pub use demosaic::demosaic_bilinear;
pub use pfm::{read_pfm, read_pfm_plane, write_pfm, write_pfm_plane};
pub use self::png::{read_png, read_png_gray, write_png, write_png_gray, GrayImage};
pub use resize::{resize_bilinear, resize_image_bilinear};
pub use transfer::{
    luminance, quantize, srgb_decode, srgb_decode_value, srgb_encode, srgb_encode_value, srgb_eotf,
    srgb_oetf, REC709_LUMA,
};
