//! sRGB transfer curve, 8-bit quantization and Rec. 709 luminance.

use super::buffers::{LinearImage, Plane, SdrImage};

/// Encodes one linear value to the continuous sRGB domain, clipping to `[0, 1]` first.
pub fn srgb_oetf(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Inverse of [`srgb_oetf`] on `[0, 1]`.
pub fn srgb_eotf(e: f64) -> f64 {
    let e = e.clamp(0.0, 1.0);
    if e <= 0.04045 {
        e / 12.92
    } else {
        ((e + 0.055) / 1.055).powf(2.4)
    }
}

/// Round-half-up quantization of a display value in `[0, 1]`.
pub fn quantize(e: f64) -> u8 {
    (e.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn srgb_encode_value(v: f32) -> u8 {
    quantize(srgb_oetf(f64::from(v)))
}

pub fn srgb_decode_value(code: u8) -> f32 {
    srgb_eotf(f64::from(code) / 255.0) as f32
}

pub fn srgb_encode(img: &LinearImage) -> SdrImage {
    let data = img.data().iter().map(|&v| srgb_encode_value(v)).collect();
    SdrImage::new(img.width(), img.height(), data).expect("dimensions carried over")
}

pub fn srgb_decode(img: &SdrImage) -> LinearImage {
    let table: Vec<f32> = (0..=255u8).map(srgb_decode_value).collect();
    let data = img.data().iter().map(|&c| table[c as usize]).collect();
    LinearImage::from_vec_unchecked(img.width(), img.height(), data)
}

pub const REC709_LUMA: [f32; 3] = [0.2126, 0.7152, 0.0722];

pub fn luminance(img: &LinearImage) -> Plane {
    let [kr, kg, kb] = REC709_LUMA;
    let data = img
        .pixels()
        .map(|p| kr * p[0] + kg * p[1] + kb * p[2])
        .collect();
    Plane::from_vec_unchecked(img.width(), img.height(), data)
}
