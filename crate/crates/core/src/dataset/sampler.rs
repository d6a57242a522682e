//! Training-pair sampling over inflated grids.
//!
//! Each draw picks a pair, a light color and a component to change (the
//! target light or the ambient). Two distinct intensities of that component
//! become source and target; the other component keeps one shared value.
//! Endpoints (0 = off, 1 = full) are oversampled by snapping either side to
//! one with probability `p_endpoint`.
//!
//! Draw `i` uses a ChaCha8 stream selected by `i` under `seed`, so a record
//! depends only on `(seed, config, index, i)`.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{frame_path, FrameRecord, GridSpec};
use crate::error::{Error, Result};
use crate::imagecore::Rgb;
use crate::relight::{Domain, RelightParams};
use crate::tonemap::ToneMapMode;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Probability of changing the target light rather than the ambient.
    pub p_light: f64,
    pub p_endpoint: f64,
    /// Probability of flagging a record for depth-condition dropout.
    pub p_drop_depth: f64,
    pub p_drop_color: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            p_light: 0.5,
            p_endpoint: 0.3,
            p_drop_depth: 0.1,
            p_drop_color: 0.1,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_light", self.p_light),
            ("p_endpoint", self.p_endpoint),
            ("p_drop_depth", self.p_drop_depth),
            ("p_drop_color", self.p_drop_color),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Sampler(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Light,
    Ambient,
}

/// A source/target training example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub pair_id: String,
    pub domain: Domain,
    pub component: Component,
    pub source: RelightParams,
    pub target: RelightParams,
    pub delta_gamma: f32,
    pub delta_alpha: f32,
    pub c_t: Rgb,
    pub tonemap_mode: ToneMapMode,
    pub source_path: PathBuf,
    pub target_path: PathBuf,
    #[serde(default)]
    pub drop_depth: bool,
    #[serde(default)]
    pub drop_color: bool,
    /// Keys this crate does not know about, kept for round-trips.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl SampleRecord {
    /// Whether the stored deltas equal target minus source.
    pub fn deltas_consistent(&self) -> bool {
        self.delta_gamma == self.target.gamma - self.source.gamma
            && self.delta_alpha == self.target.alpha - self.source.alpha
    }

    /// Fully turning a component on or off.
    pub fn is_binary(&self) -> bool {
        self.delta_gamma.abs() == 1.0 || self.delta_alpha.abs() == 1.0
    }
}

type FrameKey = (u32, u32, usize, ToneMapMode);

#[derive(Clone, Debug)]
struct IndexedPair {
    pair_id: String,
    domain: Domain,
    alphas: Vec<f32>,
    gammas: Vec<f32>,
    colors: Vec<Rgb>,
    modes: Vec<ToneMapMode>,
    frames: HashMap<FrameKey, PathBuf>,
}

impl IndexedPair {
    fn frame(&self, p: &RelightParams, color: usize, mode: ToneMapMode) -> Result<&PathBuf> {
        self.frames
            .get(&(p.alpha.to_bits(), p.gamma.to_bits(), color, mode))
            .ok_or_else(|| {
                Error::Sampler(format!(
                    "pair {} has no {mode} frame at alpha={} gamma={} color #{color}",
                    self.pair_id, p.alpha, p.gamma
                ))
            })
    }
}

/// Lookup of inflated frames by pair, grid point and tone-map mode.
#[derive(Clone, Debug, Default)]
pub struct InflatedIndex {
    pairs: Vec<IndexedPair>,
}

fn sorted_unique(mut v: Vec<f32>) -> Vec<f32> {
    v.sort_by(f32::total_cmp);
    v.dedup();
    v
}

impl InflatedIndex {
    pub fn from_frames(frames: &[FrameRecord]) -> Result<Self> {
        let mut by_pair: BTreeMap<&str, Vec<&FrameRecord>> = BTreeMap::new();
        for f in frames {
            by_pair.entry(&f.pair_id).or_default().push(f);
        }
        let mut pairs = Vec::with_capacity(by_pair.len());
        for (pair_id, rows) in by_pair {
            let n_colors = rows.iter().map(|r| r.color_index + 1).max().unwrap_or(0);
            let mut colors: Vec<Option<Rgb>> = vec![None; n_colors];
            let mut modes = Vec::new();
            let mut frames = HashMap::new();
            for r in &rows {
                match colors[r.color_index] {
                    Some(c) if c != r.params.c_t => {
                        return Err(Error::Sampler(format!(
                            "pair {pair_id}: color #{} has conflicting values",
                            r.color_index
                        )))
                    }
                    _ => colors[r.color_index] = Some(r.params.c_t),
                }
                if !modes.contains(&r.tonemap_mode) {
                    modes.push(r.tonemap_mode);
                }
                frames.insert(
                    (r.params.alpha.to_bits(), r.params.gamma.to_bits(), r.color_index, r.tonemap_mode),
                    r.path.clone(),
                );
            }
            let colors = colors
                .into_iter()
                .enumerate()
                .map(|(i, c)| c.ok_or_else(|| Error::Sampler(format!("pair {pair_id}: color #{i} missing"))))
                .collect::<Result<Vec<_>>>()?;
            modes.sort_by_key(|m| m.as_str());
            pairs.push(IndexedPair {
                pair_id: pair_id.to_string(),
                domain: rows[0].domain,
                alphas: sorted_unique(rows.iter().map(|r| r.params.alpha).collect()),
                gammas: sorted_unique(rows.iter().map(|r| r.params.gamma).collect()),
                colors,
                modes,
                frames,
            });
        }
        Ok(Self { pairs })
    }

    /// Index for a grid inflated with [`super::inflate_to_dir`] naming.
    pub fn from_grid(pair_id: &str, domain: Domain, grid: &GridSpec, modes: &[ToneMapMode]) -> Result<Self> {
        grid.validate()?;
        let mut frames = Vec::new();
        for &mode in modes {
            for (i, p) in grid.params().into_iter().enumerate() {
                let color_index = i % grid.colors.len();
                frames.push(FrameRecord {
                    pair_id: pair_id.to_string(),
                    domain,
                    params: p,
                    color_index,
                    tonemap_mode: mode,
                    path: frame_path(pair_id, mode, &p, color_index),
                });
            }
        }
        Self::from_frames(&frames)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn modes(&self, pair: usize) -> &[ToneMapMode] {
        &self.pairs[pair].modes
    }
}

struct Draw {
    pair: usize,
    component: Component,
    source: RelightParams,
    target: RelightParams,
    color: usize,
    drop_depth: bool,
    drop_color: bool,
}

fn rng_for(seed: u64, draw: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    rng
}

/// An endpoint of `axis` different from `other`, or `value` if none.
fn snap(rng: &mut ChaCha8Rng, axis: &[f32], value: f32, other: f32) -> f32 {
    let choices: Vec<f32> = [0.0, 1.0]
        .into_iter()
        .filter(|e| *e != other && axis.contains(e))
        .collect();
    match choices.len() {
        0 => value,
        n => choices[rng.random_range(0..n)],
    }
}

fn draw_once(index: &InflatedIndex, cfg: &SamplerConfig, draw: u64) -> Result<Draw> {
    cfg.validate()?;
    if index.pairs.is_empty() {
        return Err(Error::Sampler("inflated index is empty".into()));
    }
    let mut rng = rng_for(cfg.seed, draw);
    let pair_idx = rng.random_range(0..index.pairs.len());
    let pair = &index.pairs[pair_idx];
    let component = if rng.random_bool(cfg.p_light) {
        Component::Light
    } else {
        Component::Ambient
    };
    let (changed, kept) = match component {
        Component::Light => (&pair.gammas, &pair.alphas),
        Component::Ambient => (&pair.alphas, &pair.gammas),
    };
    if changed.len() < 2 {
        return Err(Error::Sampler(format!(
            "pair {}: {component:?} axis has {} value(s), need two distinct",
            pair.pair_id,
            changed.len()
        )));
    }
    let s = rng.random_range(0..changed.len());
    let mut t = rng.random_range(0..changed.len() - 1);
    if t >= s {
        t += 1;
    }
    let (mut src, mut tgt) = (changed[s], changed[t]);
    let snap_src = rng.random_bool(cfg.p_endpoint);
    let snap_tgt = rng.random_bool(cfg.p_endpoint);
    if snap_src && snap_tgt && changed.contains(&0.0) && changed.contains(&1.0) {
        (src, tgt) = if rng.random_bool(0.5) { (0.0, 1.0) } else { (1.0, 0.0) };
    } else {
        if snap_src {
            src = snap(&mut rng, changed, src, tgt);
        }
        if snap_tgt {
            tgt = snap(&mut rng, changed, tgt, src);
        }
    }
    let shared = kept[rng.random_range(0..kept.len())];
    let color = rng.random_range(0..pair.colors.len());
    let c_t = pair.colors[color];
    let make = |v: f32| match component {
        Component::Light => RelightParams { alpha: shared, gamma: v, c_t },
        Component::Ambient => RelightParams { alpha: v, gamma: shared, c_t },
    };
    Ok(Draw {
        pair: pair_idx,
        component,
        source: make(src),
        target: make(tgt),
        color,
        drop_depth: rng.random_bool(cfg.p_drop_depth),
        drop_color: rng.random_bool(cfg.p_drop_color),
    })
}

/// Record for draw number `draw`, rendered in tone-map `mode`.
pub fn sample_training_pair(
    index: &InflatedIndex,
    cfg: &SamplerConfig,
    draw: u64,
    mode: ToneMapMode,
) -> Result<SampleRecord> {
    let d = draw_once(index, cfg, draw)?;
    let pair = &index.pairs[d.pair];
    Ok(SampleRecord {
        id: format!("{}-{draw:06}-{mode}", pair.pair_id),
        pair_id: pair.pair_id.clone(),
        domain: pair.domain,
        component: d.component,
        delta_gamma: d.target.gamma - d.source.gamma,
        delta_alpha: d.target.alpha - d.source.alpha,
        c_t: d.source.c_t,
        tonemap_mode: mode,
        source_path: pair.frame(&d.source, d.color, mode)?.clone(),
        target_path: pair.frame(&d.target, d.color, mode)?.clone(),
        source: d.source,
        target: d.target,
        drop_depth: d.drop_depth,
        drop_color: d.drop_color,
        extra: BTreeMap::new(),
    })
}

/// `count` draws, each emitted once per tone-map mode its pair was
/// inflated with.
pub fn sample_records(index: &InflatedIndex, cfg: &SamplerConfig, count: u64) -> Result<Vec<SampleRecord>> {
    let per_draw = (0..count)
        .into_par_iter()
        .map(|i| {
            let d = draw_once(index, cfg, i)?;
            index.pairs[d.pair]
                .modes
                .iter()
                .map(|&m| sample_training_pair(index, cfg, i, m))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_draw.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index() -> InflatedIndex {
        InflatedIndex::from_grid(
            "p",
            Domain::Real,
            &GridSpec::real_default(),
            &[ToneMapMode::Together, ToneMapMode::Separate],
        )
        .unwrap()
    }

    #[test]
    fn records_are_consistent() {
        let idx = index();
        let recs = sample_records(&idx, &SamplerConfig::default(), 500).unwrap();
        assert_eq!(recs.len(), 1000);
        let (mut up, mut down) = (0, 0);
        for r in &recs {
            assert!(r.deltas_consistent());
            assert!((-1.0..=1.0).contains(&r.delta_gamma) && (-1.0..=1.0).contains(&r.delta_alpha));
            assert!(r.delta_gamma == 0.0 || r.delta_alpha == 0.0);
            assert!(r.delta_gamma != 0.0 || r.delta_alpha != 0.0);
            let d = r.delta_gamma + r.delta_alpha;
            if d > 0.0 {
                up += 1;
            } else {
                down += 1;
            }
        }
        assert!(up > 0 && down > 0);
    }

    #[test]
    fn always_endpoint_is_binary() {
        let cfg = SamplerConfig {
            p_light: 1.0,
            p_endpoint: 1.0,
            ..SamplerConfig::default()
        };
        for r in sample_records(&index(), &cfg, 200).unwrap() {
            assert_eq!(r.delta_gamma.abs(), 1.0);
            assert!(r.is_binary());
        }
    }

    #[test]
    fn replay_identical() {
        let idx = index();
        let cfg = SamplerConfig {
            seed: 42,
            ..SamplerConfig::default()
        };
        let a = sample_records(&idx, &cfg, 100).unwrap();
        let b = sample_records(&idx, &cfg, 100).unwrap();
        assert_eq!(a, b);
        let single = sample_training_pair(&idx, &cfg, 37, ToneMapMode::Separate).unwrap();
        assert!(a.contains(&single));
        let other = sample_records(&idx, &SamplerConfig { seed: 43, ..cfg }, 100).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn one_value_axis_is_an_error() {
        let idx = InflatedIndex::from_grid(
            "p",
            Domain::Real,
            &GridSpec::single(1.0, 0.5, [1.0; 3]),
            &[ToneMapMode::Together],
        )
        .unwrap();
        assert!(matches!(
            sample_training_pair(&idx, &SamplerConfig::default(), 0, ToneMapMode::Together),
            Err(Error::Sampler(_))
        ));
    }

    #[test]
    fn missing_mode_is_an_error() {
        let idx = InflatedIndex::from_grid("p", Domain::Real, &GridSpec::real_default(), &[ToneMapMode::Together])
            .unwrap();
        assert!(sample_training_pair(&idx, &SamplerConfig::default(), 0, ToneMapMode::Separate).is_err());
    }

    #[test]
    fn bad_probability_rejected() {
        let cfg = SamplerConfig {
            p_light: 1.5,
            ..SamplerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
