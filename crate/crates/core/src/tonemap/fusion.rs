//! Multi-exposure fusion: synthetic exposures of one linear image are
//! rendered to display values, weighted per pixel by local contrast, color
//! saturation and well-exposedness, and blended across a Laplacian pyramid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{quantize, srgb_oetf, LinearImage, SdrImage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    /// Pyramid depth including the full-resolution level. `None` picks
    /// `floor(log2(min(w, h))) - 1` (at least 1) per image.
    pub pyramid_levels: Option<usize>,
    pub sigma_exposedness: f64,
    /// Exponents for (contrast, saturation, well-exposedness).
    pub weight_exponents: (f64, f64, f64),
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            pyramid_levels: None,
            sigma_exposedness: 0.2,
            weight_exponents: (1.0, 1.0, 1.0),
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels == Some(0) {
            return Err(Error::invalid("pyramid_levels must be >= 1"));
        }
        if !(self.sigma_exposedness.is_finite() && self.sigma_exposedness > 0.0) {
            return Err(Error::invalid("sigma_exposedness must be positive"));
        }
        let (a, b, c) = self.weight_exponents;
        if [a, b, c].iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::invalid("weight exponents must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn levels_for(&self, width: usize, height: usize) -> usize {
        self.pyramid_levels.unwrap_or_else(|| {
            let min = width.min(height).max(1);
            (min.ilog2() as usize).saturating_sub(1).max(1)
        })
    }
}

/// Single-channel f64 buffer used inside the pyramids.
#[derive(Clone, Debug)]
struct Grid {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Grid {
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }
}

const KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i } else { 2 * (n - 1) - i };
    }
    i as usize
}

/// Blur with the 5-tap binomial kernel and keep every other sample.
fn reduce(g: &Grid) -> Grid {
    let (w2, h2) = (g.w.div_ceil(2), g.h.div_ceil(2));
    let mut tmp = vec![0.0; w2 * g.h];
    for y in 0..g.h {
        for x2 in 0..w2 {
            let x = 2 * x2 as isize;
            tmp[y * w2 + x2] = KERNEL
                .iter()
                .enumerate()
                .map(|(k, kw)| kw * g.at(reflect(x + k as isize - 2, g.w), y))
                .sum();
        }
    }
    let mut data = vec![0.0; w2 * h2];
    for y2 in 0..h2 {
        let y = 2 * y2 as isize;
        for x2 in 0..w2 {
            data[y2 * w2 + x2] = KERNEL
                .iter()
                .enumerate()
                .map(|(k, kw)| kw * tmp[reflect(y + k as isize - 2, g.h) * w2 + x2])
                .sum();
        }
    }
    Grid { w: w2, h: h2, data }
}

/// 1D upsampling taps: even outputs use (1, 6, 1) / 8, odd outputs (1, 1) / 2.
fn expand_taps(out: usize, n_src: usize) -> [(usize, f64); 3] {
    let clamp = |i: isize| i.clamp(0, n_src as isize - 1) as usize;
    let i = (out / 2) as isize;
    if out.is_multiple_of(2) {
        [(clamp(i - 1), 0.125), (clamp(i), 0.75), (clamp(i + 1), 0.125)]
    } else {
        [(clamp(i), 0.5), (clamp(i + 1), 0.5), (0, 0.0)]
    }
}

fn expand(g: &Grid, w: usize, h: usize) -> Grid {
    let mut tmp = vec![0.0; w * g.h];
    for y in 0..g.h {
        for x in 0..w {
            tmp[y * w + x] = expand_taps(x, g.w).iter().map(|&(i, k)| k * g.at(i, y)).sum();
        }
    }
    let mut data = vec![0.0; w * h];
    for y in 0..h {
        let taps = expand_taps(y, g.h);
        for x in 0..w {
            data[y * w + x] = taps.iter().map(|&(j, k)| k * tmp[j * w + x]).sum();
        }
    }
    Grid { w, h, data }
}

fn gaussian_pyramid(base: Grid, levels: usize) -> Vec<Grid> {
    let mut pyr = vec![base];
    while pyr.len() < levels {
        let next = reduce(pyr.last().expect("non-empty"));
        pyr.push(next);
    }
    pyr
}

fn laplacian_pyramid(base: Grid, levels: usize) -> Vec<Grid> {
    let gauss = gaussian_pyramid(base, levels);
    let mut lap = Vec::with_capacity(levels);
    for i in 0..levels {
        if i + 1 == levels {
            lap.push(gauss[i].clone());
        } else {
            let up = expand(&gauss[i + 1], gauss[i].w, gauss[i].h);
            let data = gauss[i].data.iter().zip(&up.data).map(|(a, b)| a - b).collect();
            lap.push(Grid {
                w: gauss[i].w,
                h: gauss[i].h,
                data,
            });
        }
    }
    lap
}

fn collapse(mut pyr: Vec<Grid>) -> Grid {
    let mut acc = pyr.pop().expect("non-empty pyramid");
    while let Some(level) = pyr.pop() {
        let up = expand(&acc, level.w, level.h);
        acc = Grid {
            w: level.w,
            h: level.h,
            data: level.data.iter().zip(&up.data).map(|(a, b)| a + b).collect(),
        };
    }
    acc
}

/// Display-referred rendition of `clip(img * scale, 0, 1)`, one channel per grid.
fn candidate(img: &LinearImage, scale: f64) -> [Grid; 3] {
    let (w, h) = img.dimensions();
    let mut ch = [
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
    ];
    for px in img.pixels() {
        for c in 0..3 {
            ch[c].push(srgb_oetf(f64::from(px[c]) * scale));
        }
    }
    ch.map(|data| Grid { w, h, data })
}

fn raw_weights(cand: &[Grid; 3], p: &FusionParams) -> Vec<f64> {
    let (w, h) = (cand[0].w, cand[0].h);
    let (wc, ws, we) = p.weight_exponents;
    let two_sigma_sq = 2.0 * p.sigma_exposedness * p.sigma_exposedness;
    let gray: Vec<f64> = (0..w * h)
        .map(|i| (cand[0].data[i] + cand[1].data[i] + cand[2].data[i]) / 3.0)
        .collect();
    let g = |x: isize, y: isize| gray[reflect(y, h) * w + reflect(x, w)];
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let contrast = (g(x - 1, y) + g(x + 1, y) + g(x, y - 1) + g(x, y + 1) - 4.0 * g(x, y)).abs();
            let rgb = [cand[0].data[i], cand[1].data[i], cand[2].data[i]];
            let mean = (rgb[0] + rgb[1] + rgb[2]) / 3.0;
            let saturation = (rgb.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
            let exposedness: f64 = rgb
                .iter()
                .map(|v| (-(v - 0.5).powi(2) / two_sigma_sq).exp())
                .product();
            out.push(contrast.powf(wc) * saturation.powf(ws) * exposedness.powf(we));
        }
    }
    out
}

/// Per-pixel weights of each scale, normalized to sum to one. Pixels where
/// every raw weight is zero get uniform weights.
pub fn fusion_weights(img: &LinearImage, scales: &[f64], p: &FusionParams) -> Result<Vec<Vec<f64>>> {
    check_inputs(scales, p)?;
    let raw: Vec<Vec<f64>> = scales.iter().map(|&s| raw_weights(&candidate(img, s), p)).collect();
    Ok(normalize_weights(raw))
}

fn normalize_weights(mut raw: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let k = raw.len();
    let n = raw[0].len();
    for i in 0..n {
        let sum: f64 = raw.iter().map(|w| w[i]).sum();
        for w in raw.iter_mut() {
            w[i] = if sum > 0.0 { w[i] / sum } else { 1.0 / k as f64 };
        }
    }
    raw
}

fn check_inputs(scales: &[f64], p: &FusionParams) -> Result<()> {
    p.validate()?;
    if scales.is_empty() {
        return Err(Error::invalid("exposure fusion needs at least one scale"));
    }
    if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::invalid(format!("exposure scales must be positive, got {scales:?}")));
    }
    Ok(())
}

/// Fuses `img` rendered at each exposure `scale` into one 8-bit image.
pub fn exposure_fusion(img: &LinearImage, scales: &[f64], p: &FusionParams) -> Result<SdrImage> {
    check_inputs(scales, p)?;
    let (w, h) = img.dimensions();
    if let [scale] = scales {
        // one candidate with weight one everywhere: blending is the identity
        let data = img
            .data()
            .iter()
            .map(|&v| quantize(srgb_oetf(f64::from(v) * scale)))
            .collect();
        return SdrImage::new(w, h, data);
    }

    let levels = p.levels_for(w, h);
    let candidates: Vec<[Grid; 3]> = scales.iter().map(|&s| candidate(img, s)).collect();
    let weights = normalize_weights(candidates.iter().map(|c| raw_weights(c, p)).collect());
    let weight_pyrs: Vec<Vec<Grid>> = weights
        .into_iter()
        .map(|data| gaussian_pyramid(Grid { w, h, data }, levels))
        .collect();

    let mut fused_channels = Vec::with_capacity(3);
    for c in 0..3 {
        let mut blended: Option<Vec<Grid>> = None;
        for (cand, wpyr) in candidates.iter().zip(&weight_pyrs) {
            let lap = laplacian_pyramid(cand[c].clone(), levels);
            match blended.as_mut() {
                None => {
                    blended = Some(
                        lap.into_iter()
                            .zip(wpyr)
                            .map(|(l, wg)| Grid {
                                w: l.w,
                                h: l.h,
                                data: l.data.iter().zip(&wg.data).map(|(a, b)| a * b).collect(),
                            })
                            .collect(),
                    )
                }
                Some(acc) => {
                    for ((dst, l), wg) in acc.iter_mut().zip(&lap).zip(wpyr) {
                        for ((d, a), b) in dst.data.iter_mut().zip(&l.data).zip(&wg.data) {
                            *d += a * b;
                        }
                    }
                }
            }
        }
        fused_channels.push(collapse(blended.expect("at least one candidate")));
    }

    let mut data = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        for ch in &fused_channels {
            data.push(quantize(ch.data[i]));
        }
    }
    SdrImage::new(w, h, data)
}
