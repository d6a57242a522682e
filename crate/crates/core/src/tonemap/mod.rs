//! SDR rendering of relit sequences.
//!
//! *Separate* mode exposes every frame on its own, which keeps each frame
//! well exposed but hides intensity changes of a dominant light: its pixels
//! stay pinned at the exposure anchor while everything else dims.
//! *Together* mode picks one exposure stack from a deciding frame and applies
//! it to the whole sequence, so brightness changes survive tone mapping.

mod fusion;

pub use fusion::{exposure_fusion, fusion_weights, FusionParams};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{luminance, LinearImage, SdrImage};
use crate::relight::{percentile_nearest_rank, relight, LightPair, RelightParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToneMapMode {
    Together,
    Separate,
}

impl ToneMapMode {
    /// Binary conditioning value: 1 for together, 0 for separate.
    pub fn flag(self) -> f32 {
        match self {
            ToneMapMode::Together => 1.0,
            ToneMapMode::Separate => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ToneMapMode::Together => "together",
            ToneMapMode::Separate => "separate",
        }
    }
}

impl fmt::Display for ToneMapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToneMapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "together" => Ok(ToneMapMode::Together),
            "separate" => Ok(ToneMapMode::Separate),
            other => Err(Error::invalid(format!(
                "unknown tone-map mode {other:?} (expected together or separate)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToneMapSpec {
    pub mode: ToneMapMode,
    pub deciding_alpha: f32,
    pub deciding_gamma: f32,
    /// Exposure offsets in stops, ascending.
    pub ev_offsets: Vec<f64>,
    /// Luminance percentile used as the exposure anchor.
    pub target_percentile: f64,
    /// Display level the anchor is mapped to before the EV offsets.
    pub target_level: f64,
    pub fusion: FusionParams,
}

impl Default for ToneMapSpec {
    fn default() -> Self {
        Self {
            mode: ToneMapMode::Together,
            deciding_alpha: 1.0,
            deciding_gamma: 1.0,
            ev_offsets: vec![-2.0, 0.0, 2.0],
            target_percentile: 0.99,
            target_level: 0.85,
            fusion: FusionParams::default(),
        }
    }
}

impl ToneMapSpec {
    pub fn with_mode(&self, mode: ToneMapMode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ev_offsets.is_empty() {
            return Err(Error::invalid("ev_offsets must not be empty"));
        }
        if self.ev_offsets.iter().any(|e| !e.is_finite()) || self.ev_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("ev_offsets must be finite and sorted ascending"));
        }
        if !(self.deciding_alpha >= 0.0 && self.deciding_gamma >= 0.0) {
            return Err(Error::invalid("deciding intensities must be >= 0"));
        }
        for (name, v) in [
            ("target_percentile", self.target_percentile),
            ("target_level", self.target_level),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        self.fusion.validate()
    }
}

/// Exposure scales for an image: the `target_percentile` luminance is mapped
/// to `target_level`, then shifted by each EV offset. Falls back to the peak
/// luminance when the percentile itself is zero.
pub fn compute_exposures(deciding: &LinearImage, spec: &ToneMapSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if deciding.is_zero() {
        return Err(Error::DegenerateExposure {
            frame: None,
            reason: "image is identically zero".into(),
        });
    }
    let lum = luminance(deciding);
    let mut anchor = f64::from(percentile_nearest_rank(lum.data(), spec.target_percentile));
    if anchor <= 0.0 {
        anchor = f64::from(lum.min_max().1);
    }
    let base = spec.target_level / anchor;
    Ok(spec.ev_offsets.iter().map(|e| base * e.exp2()).collect())
}

/// SDR frames of a sequence plus the exposure scales each frame used.
#[derive(Clone, Debug, PartialEq)]
pub struct ToneMappedSequence {
    pub mode: ToneMapMode,
    pub frames: Vec<SdrImage>,
    pub scales: Vec<Vec<f64>>,
}

/// Fixed exposures from `relight(pair, deciding_alpha, deciding_gamma, c_t of
/// params[0])`, shared by every frame.
pub fn tonemap_together(pair: &LightPair, params: &[RelightParams], spec: &ToneMapSpec) -> Result<ToneMappedSequence> {
    spec.validate()?;
    let Some(first) = params.first() else {
        return Ok(ToneMappedSequence {
            mode: ToneMapMode::Together,
            frames: Vec::new(),
            scales: Vec::new(),
        });
    };
    let deciding = RelightParams::new(spec.deciding_alpha, spec.deciding_gamma, first.c_t)?;
    let scales = compute_exposures(&relight(pair, &deciding)?, spec)?;
    let frames = params
        .par_iter()
        .map(|p| exposure_fusion(&relight(pair, p)?, &scales, &spec.fusion))
        .collect::<Result<Vec<_>>>()?;
    Ok(ToneMappedSequence {
        mode: ToneMapMode::Together,
        scales: vec![scales; frames.len()],
        frames,
    })
}

/// Per-frame exposures computed from each relit frame.
pub fn tonemap_separate(pair: &LightPair, params: &[RelightParams], spec: &ToneMapSpec) -> Result<ToneMappedSequence> {
    spec.validate()?;
    let out = params
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let frame = relight(pair, p)?;
            let scales = compute_exposures(&frame, spec).map_err(|e| match e {
                Error::DegenerateExposure { reason, .. } => Error::DegenerateExposure {
                    frame: Some(i),
                    reason,
                },
                other => other,
            })?;
            Ok((exposure_fusion(&frame, &scales, &spec.fusion)?, scales))
        })
        .collect::<Result<Vec<_>>>()?;
    let (frames, scales) = out.into_iter().unzip();
    Ok(ToneMappedSequence {
        mode: ToneMapMode::Separate,
        frames,
        scales,
    })
}

/// Dispatches on `spec.mode`.
pub fn tonemap_sequence(pair: &LightPair, params: &[RelightParams], spec: &ToneMapSpec) -> Result<ToneMappedSequence> {
    match spec.mode {
        ToneMapMode::Together => tonemap_together(pair, params, spec),
        ToneMapMode::Separate => tonemap_separate(pair, params, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relight::Domain;

    #[test]
    fn exposures_of_constant_luminance() {
        let img = LinearImage::filled(8, 8, [1.0; 3]).unwrap();
        let spec = ToneMapSpec {
            ev_offsets: vec![0.0],
            ..ToneMapSpec::default()
        };
        let s = compute_exposures(&img, &spec).unwrap();
        assert!((s[0] - 0.85).abs() < 1e-6);
        let s = compute_exposures(&img, &ToneMapSpec::default()).unwrap();
        for (a, e) in s.iter().zip([0.2125, 0.85, 3.4]) {
            assert!((a - e).abs() < 1e-6, "{a} vs {e}");
        }
    }

    #[test]
    fn zero_image_is_degenerate() {
        let img = LinearImage::zeros(4, 4).unwrap();
        assert!(matches!(
            compute_exposures(&img, &ToneMapSpec::default()),
            Err(Error::DegenerateExposure { frame: None, .. })
        ));
    }

    #[test]
    fn sparse_image_uses_peak() {
        let mut data = vec![0.0; 100 * 3];
        data[0..3].copy_from_slice(&[2.0, 2.0, 2.0]);
        let img = LinearImage::new(10, 10, data).unwrap();
        let spec = ToneMapSpec {
            ev_offsets: vec![0.0],
            ..ToneMapSpec::default()
        };
        assert!((compute_exposures(&img, &spec).unwrap()[0] - 0.425).abs() < 1e-6);
    }

    #[test]
    fn separate_names_zero_frame() {
        let img = LinearImage::filled(4, 4, [0.5; 3]).unwrap();
        let pair = LightPair::new(img.clone(), img, [1.0; 3], Domain::Real, "p").unwrap();
        let params = [
            RelightParams::new(1.0, 1.0, [1.0; 3]).unwrap(),
            RelightParams::new(0.0, 0.0, [1.0; 3]).unwrap(),
        ];
        match tonemap_separate(&pair, &params, &ToneMapSpec::default()) {
            Err(Error::DegenerateExposure { frame: Some(1), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = ToneMapSpec {
            ev_offsets: vec![2.0, 0.0],
            ..ToneMapSpec::default()
        };
        assert!(s.validate().is_err());
        s.ev_offsets = vec![];
        assert!(s.validate().is_err());
        assert_eq!("separate".parse::<ToneMapMode>().unwrap(), ToneMapMode::Separate);
        assert!("both".parse::<ToneMapMode>().is_err());
    }
}
