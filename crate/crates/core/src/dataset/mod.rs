//! Dataset inflation, training-pair sampling and conditioning records.
//!
//! A disentangled pair is expanded over a grid of ambient intensities, light
//! intensities and light colors, then tone mapped. Training examples are
//! pairs of frames from that grid that differ in one component.

mod conditioning;
mod manifest;
mod sampler;

pub use conditioning::{
    build_conditioning, fourier_features, ingest_depth, ingest_mask, normalize_depth, read_pack, write_pack, ConditioningPack,
    GlobalConditioning, DEFAULT_NUM_FREQS, SPATIAL_CHANNELS,
};
pub use manifest::{read_manifest, read_manifest_from, write_manifest, write_manifest_to};
pub use sampler::{
    sample_records, sample_training_pair, Component, InflatedIndex, SampleRecord, SamplerConfig,
};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{write_png, Rgb, SdrImage};
use crate::palette::{blackbody_rgb, NEUTRAL};
use crate::relight::{Domain, LightPair, RelightParams};
use crate::tonemap::{tonemap_sequence, ToneMapMode, ToneMapSpec};

pub const DEFAULT_ALPHAS: [f32; 3] = [1.0, 0.5, 0.14];
pub const DEFAULT_GAMMAS: [f32; 4] = [0.0, 0.3, 0.7, 1.0];

/// The axes a pair is inflated over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alphas: Vec<f32>,
    pub gammas: Vec<f32>,
    pub colors: Vec<Rgb>,
}

impl GridSpec {
    /// 3 ambients × 4 light intensities × 5 colors (neutral and four
    /// blackbody temperatures) = 60.
    pub fn real_default() -> Self {
        let mut colors = vec![NEUTRAL];
        colors.extend([2500.0, 3500.0, 5000.0, 6500.0].map(blackbody_rgb));
        Self {
            alphas: DEFAULT_ALPHAS.to_vec(),
            gammas: DEFAULT_GAMMAS.to_vec(),
            colors,
        }
    }

    /// 3 × 4 × 3 (neutral, 2500K, 5000K) = 36.
    pub fn synth_default() -> Self {
        Self {
            alphas: DEFAULT_ALPHAS.to_vec(),
            gammas: DEFAULT_GAMMAS.to_vec(),
            colors: vec![NEUTRAL, blackbody_rgb(2500.0), blackbody_rgb(5000.0)],
        }
    }

    pub fn single(alpha: f32, gamma: f32, color: Rgb) -> Self {
        Self {
            alphas: vec![alpha],
            gammas: vec![gamma],
            colors: vec![color],
        }
    }

    /// `real-default`, `synth-default`, or a path to a JSON grid file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        let grid = match name_or_path {
            "real-default" => Self::real_default(),
            "synth-default" => Self::synth_default(),
            path => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::invalid(format!("grid file: {e}")).in_file(path))?
            }
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn default_for(domain: Domain) -> Self {
        match domain {
            Domain::Real => Self::real_default(),
            Domain::Synthetic => Self::synth_default(),
        }
    }

    pub fn inflation_factor(&self) -> usize {
        self.alphas.len() * self.gammas.len() * self.colors.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, len) in [
            ("alphas", self.alphas.len()),
            ("gammas", self.gammas.len()),
            ("colors", self.colors.len()),
        ] {
            if len == 0 {
                return Err(Error::invalid(format!("grid axis {name} is empty")));
            }
        }
        let in_unit = |v: &f32| (0.0..=1.0).contains(v);
        if !self.alphas.iter().all(in_unit) || !self.gammas.iter().all(in_unit) {
            return Err(Error::invalid("grid intensities must be in [0, 1]"));
        }
        if !self.colors.iter().flatten().all(in_unit) {
            return Err(Error::invalid("grid colors must have components in [0, 1]"));
        }
        Ok(())
    }

    /// Every grid point, alpha-major then gamma then color.
    pub fn params(&self) -> Vec<RelightParams> {
        let mut out = Vec::with_capacity(self.inflation_factor());
        for &alpha in &self.alphas {
            for &gamma in &self.gammas {
                for &c_t in &self.colors {
                    out.push(RelightParams { alpha, gamma, c_t });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InflatedFrame {
    pub params: RelightParams,
    pub mode: ToneMapMode,
    pub color_index: usize,
    pub image: SdrImage,
}

/// Relights `pair` at every grid point and tone maps the result once per
/// mode. Frames come out mode-major, then in [`GridSpec::params`] order.
///
/// In together mode each color forms its own sequence, so the deciding frame
/// is relit with that color.
pub fn inflate(
    pair: &LightPair,
    grid: &GridSpec,
    spec: &ToneMapSpec,
    modes: &[ToneMapMode],
) -> Result<Vec<InflatedFrame>> {
    grid.validate()?;
    let ag: Vec<(f32, f32)> = grid
        .alphas
        .iter()
        .flat_map(|&a| grid.gammas.iter().map(move |&g| (a, g)))
        .collect();
    let mut out = Vec::with_capacity(grid.inflation_factor() * modes.len());
    for &mode in modes {
        let spec = spec.with_mode(mode);
        let per_color = grid
            .colors
            .par_iter()
            .map(|&c_t| {
                let params: Vec<_> = ag.iter().map(|&(alpha, gamma)| RelightParams { alpha, gamma, c_t }).collect();
                tonemap_sequence(pair, &params, &spec).map(|seq| (params, seq.frames))
            })
            .collect::<Result<Vec<_>>>()?;
        for i in 0..ag.len() {
            for (ci, (params, frames)) in per_color.iter().enumerate() {
                out.push(InflatedFrame {
                    params: params[i],
                    mode,
                    color_index: ci,
                    image: frames[i].clone(),
                });
            }
        }
    }
    Ok(out)
}

/// One row of an inflation manifest: where a tone-mapped grid frame lives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub pair_id: String,
    pub domain: Domain,
    pub params: RelightParams,
    pub color_index: usize,
    pub tonemap_mode: ToneMapMode,
    pub path: PathBuf,
}

/// Relative path of a frame below the output root.
pub fn frame_path(pair_id: &str, mode: ToneMapMode, params: &RelightParams, color_index: usize) -> PathBuf {
    Path::new(pair_id)
        .join(mode.as_str())
        .join(format!("a{:.4}_g{:.4}_c{}.png", params.alpha, params.gamma, color_index))
}

/// Inflates and writes PNG frames below `out`, returning their manifest rows.
pub fn inflate_to_dir(
    pair: &LightPair,
    grid: &GridSpec,
    spec: &ToneMapSpec,
    modes: &[ToneMapMode],
    out: &Path,
) -> Result<Vec<FrameRecord>> {
    let frames = inflate(pair, grid, spec, modes)?;
    frames
        .par_iter()
        .map(|f| {
            let rel = frame_path(&pair.pair_id, f.mode, &f.params, f.color_index);
            let full = out.join(&rel);
            if let Some(dir) = full.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
            }
            write_png(&f.image, &full)?;
            Ok(FrameRecord {
                pair_id: pair.pair_id.clone(),
                domain: pair.domain,
                params: f.params,
                color_index: f.color_index,
                tonemap_mode: f.mode,
                path: rel,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::LinearImage;
    use crate::tonemap::tonemap_together;

    fn pair() -> LightPair {
        let amb = LinearImage::from_fn(12, 12, |x, y| [0.05 + 0.01 * x as f32, 0.04, 0.03 + 0.005 * y as f32]).unwrap();
        let change = LinearImage::from_fn(12, 12, |x, y| {
            let d = ((x as f32 - 6.0).powi(2) + (y as f32 - 6.0).powi(2)).sqrt();
            let v = 2.0 / (1.0 + d);
            [v, 0.8 * v, 0.6 * v]
        })
        .unwrap();
        LightPair::with_estimated_color(amb, change, Domain::Real, "t").unwrap()
    }

    #[test]
    fn default_factors() {
        assert_eq!(GridSpec::real_default().inflation_factor(), 60);
        assert_eq!(GridSpec::synth_default().inflation_factor(), 36);
        GridSpec::real_default().validate().unwrap();
        assert_eq!(GridSpec::real_default().params().len(), 60);
    }

    #[test]
    fn counts_per_mode() {
        let p = pair();
        let spec = ToneMapSpec::default();
        let both = [ToneMapMode::Together, ToneMapMode::Separate];
        assert_eq!(inflate(&p, &GridSpec::synth_default(), &spec, &both).unwrap().len(), 72);
        let one = inflate(&p, &GridSpec::real_default(), &spec, &[ToneMapMode::Together]).unwrap();
        assert_eq!(one.len(), 60);
        let order: Vec<_> = one.iter().map(|f| f.params).collect();
        assert_eq!(order, GridSpec::real_default().params());
    }

    #[test]
    fn single_point_matches_tonemap() {
        let p = pair();
        let spec = ToneMapSpec::default();
        let grid = GridSpec::single(0.5, 0.3, NEUTRAL);
        let frames = inflate(&p, &grid, &spec, &[ToneMapMode::Together]).unwrap();
        assert_eq!(frames.len(), 1);
        let direct = tonemap_together(&p, &grid.params(), &spec).unwrap();
        assert_eq!(frames[0].image, direct.frames[0]);
    }

    #[test]
    fn grid_validation() {
        let mut g = GridSpec::real_default();
        g.gammas.push(1.5);
        assert!(g.validate().is_err());
        g.gammas.clear();
        assert!(g.validate().is_err());
        assert!(GridSpec::resolve("nope-default.json").is_err());
    }
}
