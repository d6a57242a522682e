use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// An RGB triple in linear light.
pub type Rgb = [f32; 3];

fn check_dims(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "image dimensions must be at least 1x1, got {width}x{height}"
        )));
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::invalid("image dimensions overflow"))?;
    if expected != len {
        return Err(Error::invalid(format!(
            "{width}x{height}x{channels} image needs {expected} samples, got {len}"
        )));
    }
    Ok(())
}

/// Scene-linear RGB radiance, row-major, three `f32` per pixel.
///
/// Every sample is finite and non-negative. Operations that could leave the
/// valid range (subtraction, matrix products) clip at zero before building a
/// new image.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl LinearImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height, 3, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!(
                "sample {i} is {} (linear images must be finite and >= 0)",
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image that satisfies the invariants by construction.
    pub(crate) fn from_vec_unchecked(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        debug_assert!(data.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, rgb: Rgb) -> Result<Self> {
        Self::new(
            width,
            height,
            rgb.iter().copied().cycle().take(width * height * 3).collect(),
        )
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, [0.0; 3])
    }

    /// Evaluates `f(x, y)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(3)
    }

    pub fn same_dimensions(&self, other: &LinearImage) -> bool {
        self.dimensions() == other.dimensions()
    }

    pub(crate) fn require_same_dimensions(&self, other: &LinearImage, what: &str) -> Result<()> {
        if self.same_dimensions(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: dimension mismatch {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// True when every sample is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    /// Clamps every sample to `[0, max]`.
    pub fn clamp_max(&self, max: f32) -> LinearImage {
        let max = max.max(0.0);
        Self::from_vec_unchecked(
            self.width,
            self.height,
            self.data.iter().map(|v| v.min(max)).collect(),
        )
    }

    /// Multiplies every sample by a non-negative finite factor.
    pub fn scaled(&self, factor: f32) -> Result<LinearImage> {
        if !factor.is_finite() || factor < 0.0 {
            return Err(Error::invalid(format!("scale factor {factor} must be finite and >= 0")));
        }
        Self::new(
            self.width,
            self.height,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    /// Splits the image into its three channel planes.
    pub fn channels(&self) -> [Plane; 3] {
        let n = self.pixel_count();
        let mut planes = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        for px in self.pixels() {
            for c in 0..3 {
                planes[c].push(px[c]);
            }
        }
        planes.map(|data| Plane::from_vec_unchecked(self.width, self.height, data))
    }

    /// Reassembles an image from three non-negative planes of equal size.
    pub fn from_channels(planes: &[Plane; 3]) -> Result<LinearImage> {
        let (w, h) = planes[0].dimensions();
        if planes.iter().any(|p| p.dimensions() != (w, h)) {
            return Err(Error::invalid("channel planes differ in size"));
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for i in 0..w * h {
            for p in planes {
                data.push(p.data()[i]);
            }
        }
        Self::new(w, h, data)
    }
}

/// 8-bit sRGB-encoded RGB, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SdrImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl SdrImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, 3, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::new(
            width,
            height,
            rgb.iter().copied().cycle().take(width * height * 3).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Mean Rec. 709 luminance of the display-referred values, in `[0, 1]`.
    pub fn mean_luminance(&self) -> f64 {
        let sum: f64 = self
            .data
            .chunks_exact(3)
            .map(|p| {
                0.2126 * f64::from(p[0]) + 0.7152 * f64::from(p[1]) + 0.0722 * f64::from(p[2])
            })
            .sum();
        sum / (255.0 * (self.width * self.height) as f64)
    }

    /// Number of pixels with at least one channel at 255.
    pub fn clipped_pixels(&self) -> usize {
        self.data
            .chunks_exact(3)
            .filter(|p| p.contains(&255))
            .count()
    }
}

/// A single-channel float plane (masks, depth, luminance, conditioning).
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height, 1, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("plane sample {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub(crate) fn from_vec_unchecked(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn is_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// Color filter array layout, named by the 2x2 tile read row-major from the
/// top-left pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CfaPattern {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl CfaPattern {
    /// Channel index (0 = R, 1 = G, 2 = B) sampled at `(x, y)`.
    pub fn channel_at(self, x: usize, y: usize) -> usize {
        let tile = match self {
            CfaPattern::Rggb => [0, 1, 1, 2],
            CfaPattern::Bggr => [2, 1, 1, 0],
            CfaPattern::Grbg => [1, 0, 2, 1],
            CfaPattern::Gbrg => [1, 2, 0, 1],
        };
        tile[(y % 2) * 2 + x % 2]
    }
}

impl fmt::Display for CfaPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CfaPattern::Rggb => "RGGB",
            CfaPattern::Bggr => "BGGR",
            CfaPattern::Grbg => "GRBG",
            CfaPattern::Gbrg => "GBRG",
        })
    }
}

impl FromStr for CfaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RGGB" => Ok(CfaPattern::Rggb),
            "BGGR" => Ok(CfaPattern::Bggr),
            "GRBG" => Ok(CfaPattern::Grbg),
            "GBRG" => Ok(CfaPattern::Gbrg),
            other => Err(Error::invalid(format!("unknown CFA pattern {other:?}"))),
        }
    }
}

/// A raw single-plane Bayer capture.
#[derive(Clone, Debug, PartialEq)]
pub struct BayerMosaic {
    width: usize,
    height: usize,
    plane: Vec<f32>,
    pattern: CfaPattern,
}

impl BayerMosaic {
    pub fn new(width: usize, height: usize, plane: Vec<f32>, pattern: CfaPattern) -> Result<Self> {
        check_dims(width, height, 1, plane.len())?;
        if !width.is_multiple_of(2) || !height.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "mosaic dimensions must be even, got {width}x{height}"
            )));
        }
        if plane.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("mosaic samples must be finite and >= 0"));
        }
        Ok(Self {
            width,
            height,
            plane,
            pattern,
        })
    }

    pub fn from_plane(plane: Plane, pattern: CfaPattern) -> Result<Self> {
        let (w, h) = plane.dimensions();
        Self::new(w, h, plane.into_data(), pattern)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    pub fn data(&self) -> &[f32] {
        &self.plane
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.plane[y * self.width + x]
    }
}
