//! Light arithmetic on disentangled pairs.
//!
//! Because radiance from independent sources adds, an ambient image and the
//! isolated contribution of one light are enough to synthesize any mix of
//! the two:
//!
//! ```text
//! relit(alpha, gamma, c_t) = alpha * amb + gamma * (change ⊙ c),   c = c_t ⊘ c_o
//! ```
//!
//! where `c_o` is the estimated color of the light as captured and `c_t` the
//! requested one. Products are per channel.

mod outliers;
mod store;
mod synthetic;

pub use outliers::{bound_outliers, nearest_rank_upper, upper_quantile, E_MAX_QUANTILE};
pub use store::{load_pair, save_pair, PairMeta, AMB_FILE, CHANGE_FILE, DEPTH_FILE, MASK_FILE, META_FILE};
pub use synthetic::{compose_synthetic, sample_ambient_mix, AmbientMix, AmbientMixConfig, PerLightRenderSet};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{luminance, LinearImage, Rgb};

/// Where a pair came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Real,
    Synthetic,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Real => "real",
            Domain::Synthetic => "synthetic",
        })
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "real" => Ok(Domain::Real),
            "synthetic" => Ok(Domain::Synthetic),
            other => Err(Error::invalid(format!("unknown domain {other:?}"))),
        }
    }
}

/// A disentangled pair: ambient light and the isolated target light.
#[derive(Clone, Debug, PartialEq)]
pub struct LightPair {
    i_amb: LinearImage,
    i_change: LinearImage,
    c_o: Rgb,
    pub domain: Domain,
    pub pair_id: String,
}

impl LightPair {
    pub fn new(
        i_amb: LinearImage,
        i_change: LinearImage,
        c_o: Rgb,
        domain: Domain,
        pair_id: impl Into<String>,
    ) -> Result<Self> {
        i_amb.require_same_dimensions(&i_change, "light pair")?;
        if let Some(channel) = c_o.iter().position(|v| !(*v > 0.0 && *v <= 1.0)) {
            if c_o[channel] == 0.0 {
                return Err(Error::DegenerateColor { channel });
            }
            return Err(Error::invalid(format!(
                "source color {c_o:?} must have components in (0, 1]"
            )));
        }
        Ok(Self {
            i_amb,
            i_change,
            c_o,
            domain,
            pair_id: pair_id.into(),
        })
    }

    /// Builds a pair and estimates its source color from `i_change`.
    pub fn with_estimated_color(
        i_amb: LinearImage,
        i_change: LinearImage,
        domain: Domain,
        pair_id: impl Into<String>,
    ) -> Result<Self> {
        let c_o = estimate_source_color(&i_change)?;
        Self::new(i_amb, i_change, c_o, domain, pair_id)
    }

    pub fn i_amb(&self) -> &LinearImage {
        &self.i_amb
    }

    pub fn i_change(&self) -> &LinearImage {
        &self.i_change
    }

    pub fn c_o(&self) -> Rgb {
        self.c_o
    }

    pub fn dimensions(&self) -> (usize, usize) {
        self.i_amb.dimensions()
    }
}

/// Ambient scale, target-light scale and target light color.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelightParams {
    pub alpha: f32,
    pub gamma: f32,
    pub c_t: Rgb,
}

impl RelightParams {
    pub fn new(alpha: f32, gamma: f32, c_t: Rgb) -> Result<Self> {
        let p = Self { alpha, gamma, c_t };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::invalid(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if self.c_t.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "target color {:?} must have components in [0, 1]",
                self.c_t
            )));
        }
        Ok(())
    }

    /// Outside the `[0, 1]` range the data grids cover.
    pub fn is_extrapolated(&self) -> bool {
        self.alpha > 1.0 || self.gamma > 1.0
    }
}

/// Nearest-rank percentile (`ceil(q * n)`-th smallest) of a non-empty sample.
pub(crate) fn percentile_nearest_rank(values: &[f32], q: f64) -> f32 {
    debug_assert!(!values.is_empty());
    let n = values.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    let mut v = values.to_vec();
    let (_, x, _) = v.select_nth_unstable_by(rank - 1, f32::total_cmp);
    *x
}

/// Estimates the captured light color from its isolated contribution: the
/// mean RGB of pixels at or above the 90th luminance percentile, scaled so
/// the largest channel is 1.
pub fn estimate_source_color(i_change: &LinearImage) -> Result<Rgb> {
    if i_change.is_zero() {
        return Err(Error::NoLight);
    }
    let lum = luminance(i_change);
    let threshold = percentile_nearest_rank(lum.data(), 0.9);
    let mut sum = [0f64; 3];
    for (px, &l) in i_change.pixels().zip(lum.data()) {
        if l >= threshold {
            for c in 0..3 {
                sum[c] += f64::from(px[c]);
            }
        }
    }
    let max = sum.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::NoLight);
    }
    Ok(sum.map(|s| (s / max) as f32))
}

/// `c_t / c_o`, per channel.
pub fn color_coefficient(c_t: Rgb, c_o: Rgb) -> Result<Rgb> {
    if let Some(channel) = c_o.iter().position(|v| *v == 0.0) {
        return Err(Error::DegenerateColor { channel });
    }
    Ok(std::array::from_fn(|c| c_t[c] / c_o[c]))
}

/// `alpha * amb + gamma * (change ⊙ c)`.
pub fn relight(pair: &LightPair, p: &RelightParams) -> Result<LinearImage> {
    p.validate()?;
    let c = color_coefficient(p.c_t, pair.c_o)?;
    let data = pair
        .i_amb
        .data()
        .chunks_exact(3)
        .zip(pair.i_change.data().chunks_exact(3))
        .flat_map(|(a, ch)| std::array::from_fn::<f32, 3, _>(|k| p.alpha * a[k] + p.gamma * (ch[k] * c[k])))
        .collect();
    LinearImage::new(pair.i_amb.width(), pair.i_amb.height(), data)
}

pub fn relight_sequence(pair: &LightPair, params: &[RelightParams]) -> Result<Vec<LinearImage>> {
    params.iter().map(|p| relight(pair, p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_2x2() -> LightPair {
        let amb = LinearImage::new(2, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let change = LinearImage::new(2, 2, vec![1.0, 0.5, 0.25, 0.0, 0.0, 0.0, 2.0, 1.0, 0.5, 0.4, 0.2, 0.1]).unwrap();
        LightPair::new(amb, change, [1.0, 0.5, 0.25], Domain::Real, "p").unwrap()
    }

    #[test]
    fn neutral_and_tinted_estimates() {
        let k = 0.7;
        let gray = LinearImage::filled(5, 4, [k; 3]).unwrap();
        assert_eq!(estimate_source_color(&gray).unwrap(), [1.0, 1.0, 1.0]);
        let red = LinearImage::filled(5, 4, [2.0 * k, k, k]).unwrap();
        assert_eq!(estimate_source_color(&red).unwrap(), [1.0, 0.5, 0.5]);
        assert!(matches!(
            estimate_source_color(&LinearImage::zeros(3, 3).unwrap()),
            Err(Error::NoLight)
        ));
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(color_coefficient([0.3, 0.6, 0.9], [0.3, 0.6, 0.9]).unwrap(), [1.0; 3]);
        assert_eq!(color_coefficient([1.0; 3], [1.0, 0.5, 0.25]).unwrap(), [1.0, 2.0, 4.0]);
        assert!(matches!(
            color_coefficient([1.0; 3], [1.0, 0.0, 1.0]),
            Err(Error::DegenerateColor { channel: 1 })
        ));
    }

    #[test]
    fn endpoints() {
        let pair = pair_2x2();
        let c_o = pair.c_o();
        let amb = relight(&pair, &RelightParams::new(1.0, 0.0, c_o).unwrap()).unwrap();
        assert_eq!(&amb, pair.i_amb());
        let full = relight(&pair, &RelightParams::new(1.0, 1.0, c_o).unwrap()).unwrap();
        let sum: Vec<f32> = pair.i_amb().data().iter().zip(pair.i_change().data()).map(|(a, b)| a + b).collect();
        assert_eq!(full.data(), &sum[..]);
        let zero = relight(&pair, &RelightParams::new(0.0, 0.0, [1.0; 3]).unwrap()).unwrap();
        assert!(zero.is_zero());
    }

    #[test]
    fn hand_arithmetic_2x2() {
        // c = (1,1,1) / (1,0.5,0.25) = (1,2,4); out = 0.5*amb + 0.25*change*c
        let pair = pair_2x2();
        let out = relight(&pair, &RelightParams::new(0.5, 0.25, [1.0; 3]).unwrap()).unwrap();
        let expected = [
            0.05 + 0.25, 0.1 + 0.25, 0.15 + 0.25,
            0.2, 0.25, 0.3,
            0.5, 0.5, 0.5,
            0.5 + 0.1, 0.5 + 0.1, 0.5 + 0.1,
        ];
        for (o, e) in out.data().iter().zip(expected) {
            assert!((o - e).abs() < 1e-6, "{o} vs {e}");
        }
    }

    #[test]
    fn sequence_order_and_duplicates() {
        let pair = pair_2x2();
        assert!(relight_sequence(&pair, &[]).unwrap().is_empty());
        let p = RelightParams::new(1.0, 0.3, [1.0; 3]).unwrap();
        let q = RelightParams::new(0.2, 0.9, [1.0, 0.5, 0.5]).unwrap();
        let seq = relight_sequence(&pair, &[p, q, p]).unwrap();
        assert_eq!(seq[0], seq[2]);
        assert_eq!(seq[1], relight(&pair, &q).unwrap());
    }

    #[test]
    fn params_validation() {
        assert!(RelightParams::new(-0.1, 0.0, [1.0; 3]).is_err());
        assert!(RelightParams::new(0.0, f32::NAN, [1.0; 3]).is_err());
        assert!(RelightParams::new(0.0, 0.0, [1.2, 1.0, 1.0]).is_err());
        assert!(RelightParams::new(1.5, 0.0, [1.0; 3]).unwrap().is_extrapolated());
    }

    #[test]
    fn pair_rejects_zero_color_channel() {
        let img = LinearImage::zeros(1, 1).unwrap();
        assert!(matches!(
            LightPair::new(img.clone(), img, [1.0, 0.0, 0.5], Domain::Real, "x"),
            Err(Error::DegenerateColor { channel: 1 })
        ));
    }
}
