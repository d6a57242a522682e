//! Model conditioning: spatial planes plus Fourier-encoded global scalars.
//!
//! Spatial channels, in order: the source image (3, code value / 255), the
//! light mask scaled by the intensity change (1), the mask scaled by the
//! target color (3) and normalized depth (1). A latent-space model would
//! swap the 3 image channels for its 4 latent channels.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SampleRecord;
use crate::error::{Error, Result};
use crate::imagecore::{quantize, read_pfm_plane, read_png, read_png_gray, resize_bilinear, write_pfm_plane, write_png, Plane, SdrImage};

pub const SPATIAL_CHANNELS: usize = 8;
pub const DEFAULT_NUM_FREQS: usize = 8;

pub const SOURCE_FILE: &str = "source.png";
pub const INTENSITY_FILE: &str = "intensity.pfm";
pub const COLOR_FILES: [&str; 3] = ["color_r.pfm", "color_g.pfm", "color_b.pfm"];
pub const DEPTH_FILE: &str = "depth.pfm";
pub const GLOBALS_FILE: &str = "globals.json";

/// `sin(pi * x)` with exact zeros and unit values at multiples of 1/2.
fn sin_pi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    match r {
        0.0 | 1.0 => 0.0,
        0.5 => 1.0,
        1.5 => -1.0,
        _ => (PI * r).sin(),
    }
}

fn cos_pi(x: f64) -> f64 {
    sin_pi(x + 0.5)
}

/// `[sin(2^k pi g), cos(2^k pi g)]` for `k = 0..num_freqs`, interleaved.
pub fn fourier_features(g: f64, num_freqs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * num_freqs);
    let mut x = g;
    for _ in 0..num_freqs {
        out.push(sin_pi(x));
        out.push(cos_pi(x));
        x *= 2.0;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalConditioning {
    pub record_id: String,
    pub delta_alpha: f32,
    pub tonemap_flag: f32,
    pub delta_alpha_features: Vec<f64>,
    pub tonemap_flag_features: Vec<f64>,
    pub drop_depth: bool,
    pub drop_color: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningPack {
    pub image: [Plane; 3],
    pub intensity: Plane,
    pub color: [Plane; 3],
    pub depth: Plane,
    pub globals: GlobalConditioning,
}

impl ConditioningPack {
    pub fn dimensions(&self) -> (usize, usize) {
        self.intensity.dimensions()
    }

    pub fn spatial_planes(&self) -> [&Plane; SPATIAL_CHANNELS] {
        let [r, g, b] = &self.image;
        let [cr, cg, cb] = &self.color;
        [r, g, b, &self.intensity, cr, cg, cb, &self.depth]
    }
}

/// Scales the mask by `k`, writing `+0.0` wherever the mask is zero.
fn masked(mask: &Plane, k: f32) -> Plane {
    let data = mask
        .data()
        .iter()
        .map(|&m| if m == 0.0 { 0.0 } else { m * k })
        .collect();
    Plane::from_vec_unchecked(mask.width(), mask.height(), data)
}

pub fn build_conditioning(
    rec: &SampleRecord,
    source: &SdrImage,
    mask: &Plane,
    depth: &Plane,
    out_w: usize,
    out_h: usize,
    num_freqs: usize,
) -> Result<ConditioningPack> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid(format!("output size {out_w}x{out_h} has a zero dimension")));
    }
    if !mask.is_unit_range() {
        return Err(Error::invalid("mask values must be in [0, 1]"));
    }
    if !depth.is_unit_range() {
        return Err(Error::invalid("depth values must be in [0, 1]"));
    }
    let (w, h) = source.dimensions();
    let image = std::array::from_fn(|c| {
        let p = Plane::from_vec_unchecked(
            w,
            h,
            source.data().iter().skip(c).step_by(3).map(|&v| f32::from(v) / 255.0).collect(),
        );
        resize_bilinear(&p, out_w, out_h)
    });
    let [r, g, b] = image;
    let mask = resize_bilinear(mask, out_w, out_h)?;
    let tonemap_flag = rec.tonemap_mode.flag();
    Ok(ConditioningPack {
        image: [r?, g?, b?],
        intensity: masked(&mask, rec.delta_gamma),
        color: rec.c_t.map(|k| masked(&mask, k)),
        depth: resize_bilinear(depth, out_w, out_h)?,
        globals: GlobalConditioning {
            record_id: rec.id.clone(),
            delta_alpha: rec.delta_alpha,
            tonemap_flag,
            delta_alpha_features: fourier_features(f64::from(rec.delta_alpha), num_freqs),
            tonemap_flag_features: fourier_features(f64::from(tonemap_flag), num_freqs),
            drop_depth: rec.drop_depth,
            drop_color: rec.drop_color,
        },
    })
}

/// Writes the pack as PFM planes, `source.png` and `globals.json`. The
/// source image is re-quantized to 8 bits.
pub fn write_pack(pack: &ConditioningPack, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let (w, h) = pack.dimensions();
    let mut rgb = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        for p in &pack.image {
            rgb.push(quantize(f64::from(p.data()[i])));
        }
    }
    write_png(&SdrImage::new(w, h, rgb)?, dir.join(SOURCE_FILE))?;
    write_pfm_plane(&pack.intensity, dir.join(INTENSITY_FILE))?;
    for (p, name) in pack.color.iter().zip(COLOR_FILES) {
        write_pfm_plane(p, dir.join(name))?;
    }
    write_pfm_plane(&pack.depth, dir.join(DEPTH_FILE))?;
    let path = dir.join(GLOBALS_FILE);
    let json = serde_json::to_string_pretty(&pack.globals).map_err(|e| Error::invalid(e.to_string()))?;
    fs::write(&path, json).map_err(|e| Error::from(e).in_file(&path))
}

pub fn read_pack(dir: impl AsRef<Path>) -> Result<ConditioningPack> {
    let dir = dir.as_ref();
    let src = read_png(dir.join(SOURCE_FILE))?;
    let (w, h) = src.dimensions();
    let image = std::array::from_fn(|c| {
        Plane::from_vec_unchecked(w, h, src.data().iter().skip(c).step_by(3).map(|&v| f32::from(v) / 255.0).collect())
    });
    let [r, g, b] = COLOR_FILES.map(|n| read_pfm_plane(dir.join(n)));
    let path = dir.join(GLOBALS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
    let globals = serde_json::from_str(&text).map_err(|e| Error::invalid(e.to_string()).in_file(&path))?;
    let pack = ConditioningPack {
        image,
        intensity: read_pfm_plane(dir.join(INTENSITY_FILE))?,
        color: [r?, g?, b?],
        depth: read_pfm_plane(dir.join(DEPTH_FILE))?,
        globals,
    };
    if pack.spatial_planes().iter().any(|p| p.dimensions() != (w, h)) {
        return Err(Error::invalid("pack planes differ in size").in_file(dir));
    }
    Ok(pack)
}

/// Reads a single-channel 8-bit mask. Values are thresholded at 0.5 unless
/// `soft`, in which case they are code / 255.
pub fn ingest_mask(path: impl AsRef<Path>, soft: bool) -> Result<Plane> {
    let g = read_png_gray(path)?;
    let data = g
        .data
        .iter()
        .map(|&v| {
            let x = f32::from(v) / 255.0;
            if soft {
                x
            } else if x >= 0.5 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Plane::new(g.width, g.height, data)
}

/// Min-max normalization to `[0, 1]`; a constant plane maps to zeros.
pub fn normalize_depth(p: &Plane) -> Plane {
    let (lo, hi) = p.min_max();
    let range = f64::from(hi) - f64::from(lo);
    let data = p
        .data()
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((f64::from(v) - f64::from(lo)) / range) as f32
            } else {
                0.0
            }
        })
        .collect();
    Plane::from_vec_unchecked(p.width(), p.height(), data)
}

pub fn ingest_depth(path: impl AsRef<Path>) -> Result<Plane> {
    Ok(normalize_depth(&read_pfm_plane(path)?))
}
