use rand::Rng;

use super::{Domain, LightPair};
use crate::error::{Error, Result};
use crate::imagecore::LinearImage;

/// Per-light linear renders of one synthetic view: each light alone, plus the
/// scene under each environment map with all lights off.
#[derive(Clone, Debug)]
pub struct PerLightRenderSet {
    pub view_id: String,
    pub light_renders: Vec<LinearImage>,
    pub light_ids: Vec<String>,
    pub env_renders: Vec<LinearImage>,
    pub env_ids: Vec<String>,
}

impl PerLightRenderSet {
    pub fn validate(&self) -> Result<()> {
        if self.light_renders.len() != self.light_ids.len() || self.env_renders.len() != self.env_ids.len() {
            return Err(Error::invalid("render set ids do not match its renders"));
        }
        let first = self
            .light_renders
            .first()
            .or(self.env_renders.first())
            .ok_or_else(|| Error::invalid("render set is empty"))?;
        for img in self.light_renders.iter().chain(&self.env_renders) {
            first.require_same_dimensions(img, "render set")?;
        }
        Ok(())
    }

    pub fn all_renders(&self) -> impl Iterator<Item = &LinearImage> {
        self.light_renders.iter().chain(&self.env_renders)
    }
}

/// Weights of the ambient composite: one per light render (the target's entry
/// is ignored) and one per environment render.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbientMix {
    pub light_weights: Vec<f32>,
    pub env_weights: Vec<f32>,
}

/// Ranges for drawing an [`AmbientMix`].
#[derive(Clone, Debug, PartialEq)]
pub struct AmbientMixConfig {
    pub env_weight_range: (f32, f32),
    /// Probability of adding one extra non-target light to the ambient.
    pub p_extra_light: f64,
    pub max_extra_light_weight: f32,
}

impl Default for AmbientMixConfig {
    fn default() -> Self {
        Self {
            env_weight_range: (0.2, 1.0),
            p_extra_light: 0.5,
            max_extra_light_weight: 0.5,
        }
    }
}

/// Draws environment weights uniformly from the configured range and, with
/// probability `p_extra_light`, one non-target light at weight up to
/// `max_extra_light_weight`.
pub fn sample_ambient_mix(
    n_lights: usize,
    n_envs: usize,
    target_index: usize,
    cfg: &AmbientMixConfig,
    rng: &mut impl Rng,
) -> AmbientMix {
    let (lo, hi) = cfg.env_weight_range;
    let env_weights = (0..n_envs).map(|_| rng.random_range(lo..=hi)).collect();
    let mut light_weights = vec![0.0; n_lights];
    let others: Vec<usize> = (0..n_lights).filter(|&i| i != target_index).collect();
    if !others.is_empty() && rng.random_bool(cfg.p_extra_light) {
        let pick = others[rng.random_range(0..others.len())];
        light_weights[pick] = rng.random_range(0.0..=cfg.max_extra_light_weight);
    }
    AmbientMix {
        light_weights,
        env_weights,
    }
}

/// Builds a synthetic pair: the target light's render (clamped to `e_max`
/// when given) is the change image and the weighted sum of the remaining
/// lights and environment renders is the ambient.
pub fn compose_synthetic(
    set: &PerLightRenderSet,
    target_index: usize,
    mix: &AmbientMix,
    e_max: Option<f32>,
) -> Result<LightPair> {
    set.validate()?;
    let target = set.light_renders.get(target_index).ok_or_else(|| {
        Error::invalid(format!(
            "target index {target_index} out of range for {} lights",
            set.light_renders.len()
        ))
    })?;
    if mix.light_weights.len() != set.light_renders.len() || mix.env_weights.len() != set.env_renders.len() {
        return Err(Error::invalid("ambient mix weights do not match the render set"));
    }
    if mix
        .light_weights
        .iter()
        .chain(&mix.env_weights)
        .any(|w| !(w.is_finite() && *w >= 0.0))
    {
        return Err(Error::invalid("ambient mix weights must be finite and >= 0"));
    }
    let clamp = |img: &LinearImage| match e_max {
        Some(m) => img.clamp_max(m),
        None => img.clone(),
    };

    let mut amb = vec![0f32; target.data().len()];
    let weighted = set
        .light_renders
        .iter()
        .zip(&mix.light_weights)
        .enumerate()
        .filter(|(i, _)| *i != target_index)
        .map(|(_, lw)| lw)
        .chain(set.env_renders.iter().zip(&mix.env_weights));
    for (img, &w) in weighted {
        if w == 0.0 {
            continue;
        }
        for (a, v) in amb.iter_mut().zip(clamp(img).data()) {
            *a += w * v;
        }
    }
    let i_amb = LinearImage::new(target.width(), target.height(), amb)?;
    let i_change = clamp(target);
    if i_change.is_zero() {
        return Err(Error::NoLight);
    }
    let pair_id = format!("{}-{}", set.view_id, set.light_ids[target_index]);
    LightPair::with_estimated_color(i_amb, i_change, Domain::Synthetic, pair_id)
}
