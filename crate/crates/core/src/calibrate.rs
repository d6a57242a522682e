//! Post-capture calibration of raw on/off pairs.
//!
//! Each capture in a pair comes with its own auto-exposure settings, so both
//! frames are brought to radiance per unit exposure product `P = E * G * D`
//! before they can be compared. White balance is interpolated between the
//! two captures' gains and the on-capture's color correction matrix is
//! applied to both frames.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imagecore::{demosaic_bilinear, BayerMosaic, CfaPattern, LinearImage};

pub type Matrix3 = [[f64; 3]; 3];

pub const IDENTITY_CCM: Matrix3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Capture metadata for one raw frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMeta {
    /// Seconds.
    pub exposure_time: f64,
    pub analog_gain: f64,
    pub digital_gain: f64,
    pub wb_gains: [f64; 3],
    /// Camera RGB to linear sRGB, row-major.
    pub ccm: Matrix3,
    pub cfa: CfaPattern,
}

impl RawMeta {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("exposure_time", self.exposure_time),
            ("analog_gain", self.analog_gain),
            ("digital_gain", self.digital_gain),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.wb_gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::invalid(format!(
                "white balance gains must be positive, got {:?}",
                self.wb_gains
            )));
        }
        if self.ccm.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("color correction matrix has non-finite entries"));
        }
        for (i, row) in self.ccm.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-3 {
                log::warn!("ccm row {i} sums to {sum:.4}; white point will shift");
            }
        }
        Ok(())
    }

    /// Parses a `key=value` sidecar.
    pub fn parse_sidecar(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("sidecar line {}: expected key=value", n + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&str> {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::invalid(format!("sidecar is missing `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            let v = get(k)?;
            v.parse()
                .map_err(|_| Error::invalid(format!("sidecar `{k}`: {v:?} is not a number")))
        };
        let ccm_vals: Vec<f64> = get("ccm")?
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid("sidecar `ccm`: expected 9 comma-separated numbers"))?;
        if ccm_vals.len() != 9 {
            return Err(Error::invalid(format!(
                "sidecar `ccm`: expected 9 values, got {}",
                ccm_vals.len()
            )));
        }
        let mut ccm = [[0.0; 3]; 3];
        for (i, v) in ccm_vals.into_iter().enumerate() {
            ccm[i / 3][i % 3] = v;
        }
        let meta = RawMeta {
            exposure_time: num("exposure_time")?,
            analog_gain: num("analog_gain")?,
            digital_gain: num("digital_gain")?,
            wb_gains: [num("wb_r")?, num("wb_g")?, num("wb_b")?],
            ccm,
            cfa: get("cfa")?.parse()?,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn to_sidecar(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "exposure_time={}", self.exposure_time);
        let _ = writeln!(s, "analog_gain={}", self.analog_gain);
        let _ = writeln!(s, "digital_gain={}", self.digital_gain);
        let _ = writeln!(s, "wb_r={}", self.wb_gains[0]);
        let _ = writeln!(s, "wb_g={}", self.wb_gains[1]);
        let _ = writeln!(s, "wb_b={}", self.wb_gains[2]);
        let ccm: Vec<String> = self.ccm.iter().flatten().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "ccm={}", ccm.join(","));
        let _ = writeln!(s, "cfa={}", self.cfa);
        s
    }

    /// Reads the `.meta` sidecar next to a mosaic file.
    pub fn read_for(mosaic_path: impl AsRef<Path>) -> Result<Self> {
        let path = sidecar_path(mosaic_path);
        let text = fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
        Self::parse_sidecar(&text).map_err(|e| e.in_file(&path))
    }
}

/// `foo/bar.pfm` -> `foo/bar.meta`.
pub fn sidecar_path(mosaic_path: impl AsRef<Path>) -> PathBuf {
    mosaic_path.as_ref().with_extension("meta")
}

/// `E * G * D`.
pub fn exposure_product(m: &RawMeta) -> Result<f64> {
    m.validate()?;
    Ok(m.exposure_time * m.analog_gain * m.digital_gain)
}

/// Divides every sample by the exposure product.
pub fn normalize_exposure(img: &LinearImage, p: f64) -> Result<LinearImage> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::invalid(format!("exposure product must be positive, got {p}")));
    }
    let data = img
        .data()
        .iter()
        .map(|&v| (f64::from(v) / p) as f32)
        .collect();
    LinearImage::new(img.width(), img.height(), data)
}

/// Per-channel `(1 - gamma) * wb_off + gamma * wb_on`.
pub fn interp_wb(wb_off: [f64; 3], wb_on: [f64; 3], gamma: f64) -> [f64; 3] {
    std::array::from_fn(|c| (1.0 - gamma) * wb_off[c] + gamma * wb_on[c])
}

pub fn apply_wb(img: &LinearImage, gains: [f64; 3]) -> Result<LinearImage> {
    let data = img
        .data()
        .chunks_exact(3)
        .flat_map(|p| std::array::from_fn::<f32, 3, _>(|c| (f64::from(p[c]) * gains[c]) as f32))
        .collect();
    LinearImage::new(img.width(), img.height(), data)
}

/// Per-pixel `ccm * rgb`, negative results clipped to zero.
pub fn apply_ccm(img: &LinearImage, ccm: &Matrix3) -> Result<LinearImage> {
    let data = img
        .data()
        .chunks_exact(3)
        .flat_map(|p| {
            std::array::from_fn::<f32, 3, _>(|r| {
                let v: f64 = (0..3).map(|c| ccm[r][c] * f64::from(p[c])).sum();
                v.max(0.0) as f32
            })
        })
        .collect();
    LinearImage::new(img.width(), img.height(), data)
}

/// Exposure product for a relit frame: each of `E`, `G`, `D` is interpolated
/// as `(1 - gamma) * alpha * off + gamma * on` and the three are multiplied.
pub fn relit_exposure_product(m_off: &RawMeta, m_on: &RawMeta, alpha: f64, gamma: f64) -> Result<f64> {
    m_off.validate()?;
    m_on.validate()?;
    let mix = |off: f64, on: f64| (1.0 - gamma) * alpha * off + gamma * on;
    let p = mix(m_off.exposure_time, m_on.exposure_time)
        * mix(m_off.analog_gain, m_on.analog_gain)
        * mix(m_off.digital_gain, m_on.digital_gain);
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::DegenerateExposure {
            frame: None,
            reason: format!("relit exposure product is {p} at alpha={alpha}, gamma={gamma}"),
        });
    }
    Ok(p)
}

/// Splits a calibrated pair into ambient (`off`) and the clipped light change `max(on - off, 0)`.
pub fn disentangle(on: &LinearImage, off: &LinearImage) -> Result<(LinearImage, LinearImage)> {
    on.require_same_dimensions(off, "disentangle")?;
    let change = on
        .data()
        .iter()
        .zip(off.data())
        .map(|(a, b)| (a - b).max(0.0))
        .collect();
    Ok((
        off.clone(),
        LinearImage::from_vec_unchecked(on.width(), on.height(), change),
    ))
}

/// How much of `on - off` is negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualStats {
    /// `||min(on - off, 0)|| / ||max(on - off, 0)||`.
    pub relative_error: f64,
    /// Percentage of strictly negative entries of `on - off`.
    pub pct_negative: f64,
}

pub fn residual_stats(on: &LinearImage, off: &LinearImage) -> Result<ResidualStats> {
    on.require_same_dimensions(off, "residual_stats")?;
    let (mut neg_sq, mut pos_sq, mut negatives) = (0f64, 0f64, 0usize);
    for (a, b) in on.data().iter().zip(off.data()) {
        let d = f64::from(*a) - f64::from(*b);
        if d < 0.0 {
            neg_sq += d * d;
            negatives += 1;
        } else {
            pos_sq += d * d;
        }
    }
    let relative_error = if pos_sq > 0.0 {
        (neg_sq / pos_sq).sqrt()
    } else if neg_sq == 0.0 {
        0.0
    } else {
        return Err(Error::UndefinedRatio);
    };
    Ok(ResidualStats {
        relative_error,
        pct_negative: 100.0 * negatives as f64 / on.data().len() as f64,
    })
}

/// A calibrated on/off pair in linear sRGB, exposure-normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibratedPair {
    pub on: LinearImage,
    pub off: LinearImage,
    pub meta_on: RawMeta,
    pub meta_off: RawMeta,
}

/// Default white-balance anchor for stored pairs: the light-on gains.
pub const DEFAULT_GAMMA_REF: f64 = 1.0;

/// Demosaic, exposure-normalize, white balance (interpolated at
/// `gamma_ref`) and color-correct (with the on-capture's matrix) both frames.
pub fn calibrate_pair(
    mosaic_on: &BayerMosaic,
    meta_on: &RawMeta,
    mosaic_off: &BayerMosaic,
    meta_off: &RawMeta,
    gamma_ref: f64,
) -> Result<CalibratedPair> {
    if (mosaic_on.width(), mosaic_on.height()) != (mosaic_off.width(), mosaic_off.height()) {
        return Err(Error::invalid("on and off mosaics differ in size"));
    }
    if mosaic_on.pattern() != mosaic_off.pattern() {
        return Err(Error::invalid("on and off mosaics use different CFA patterns"));
    }
    for (m, meta, which) in [(mosaic_on, meta_on, "on"), (mosaic_off, meta_off, "off")] {
        if m.pattern() != meta.cfa {
            return Err(Error::invalid(format!(
                "{which} mosaic is {} but its metadata says {}",
                m.pattern(),
                meta.cfa
            )));
        }
    }
    let wb = interp_wb(meta_off.wb_gains, meta_on.wb_gains, gamma_ref);
    let develop = |m: &BayerMosaic, meta: &RawMeta| -> Result<LinearImage> {
        let rgb = demosaic_bilinear(m);
        let rgb = normalize_exposure(&rgb, exposure_product(meta)?)?;
        apply_ccm(&apply_wb(&rgb, wb)?, &meta_on.ccm)
    };
    Ok(CalibratedPair {
        on: develop(mosaic_on, meta_on)?,
        off: develop(mosaic_off, meta_off)?,
        meta_on: meta_on.clone(),
        meta_off: meta_off.clone(),
    })
}
