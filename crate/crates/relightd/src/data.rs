//! Read-only view of a data root: one directory per disentangled pair.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use relit::imagecore::png::encode_png;
use relit::imagecore::resize_image_bilinear;
use relit::relight::{load_pair, LightPair, PairMeta, RelightParams, DEPTH_FILE, MASK_FILE, META_FILE};
use relit::tonemap::{tonemap_together, ToneMapSpec};
use relit::{Error, Result};

pub const THUMB_LONG_EDGE: usize = 256;

/// A pair loaded into memory with its preview-sized copy.
#[derive(Debug)]
pub struct LoadedPair {
    pub dir: PathBuf,
    pub meta: PairMeta,
    pub full: LightPair,
    pub preview: LightPair,
    pub has_mask: bool,
    pub has_depth: bool,
    pub thumb_png: Vec<u8>,
}

impl LoadedPair {
    pub fn pair(&self, full_resolution: bool) -> &LightPair {
        if full_resolution {
            &self.full
        } else {
            &self.preview
        }
    }
}

/// Target size with the long edge capped at `cap`, aspect kept.
pub fn capped_size(w: usize, h: usize, cap: usize) -> (usize, usize) {
    let long = w.max(h);
    if long <= cap {
        return (w, h);
    }
    let s = cap as f64 / long as f64;
    let scale = |v: usize| ((v as f64 * s).round() as usize).max(1);
    (scale(w), scale(h))
}

pub fn downscale_pair(pair: &LightPair, cap: usize) -> Result<LightPair> {
    let (w, h) = pair.dimensions();
    let (tw, th) = capped_size(w, h, cap);
    if (tw, th) == (w, h) {
        return Ok(pair.clone());
    }
    LightPair::new(
        resize_image_bilinear(pair.i_amb(), tw, th)?,
        resize_image_bilinear(pair.i_change(), tw, th)?,
        pair.c_o(),
        pair.domain,
        pair.pair_id.clone(),
    )
}

fn thumbnail(pair: &LightPair) -> Result<Vec<u8>> {
    let small = downscale_pair(pair, THUMB_LONG_EDGE)?;
    let p = RelightParams::new(1.0, 1.0, pair.c_o())?;
    let seq = tonemap_together(&small, &[p], &ToneMapSpec::default())?;
    encode_png(&seq.frames[0])
}

#[derive(Debug)]
pub struct DataRoot {
    root: PathBuf,
    pairs: BTreeMap<String, Arc<LoadedPair>>,
}

/// Subdirectories of `root` holding a pair, sorted by name.
pub fn pair_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::from(e).in_file(root))?;
    let mut dirs = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::from(e).in_file(root))?.path();
        if path.join(META_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

impl DataRoot {
    pub fn open(root: impl AsRef<Path>, preview_long_edge: usize) -> Result<Self> {
        let root = root.as_ref();
        if !root.is_dir() {
            return Err(Error::InvalidInput(format!("data root {} is not a directory", root.display())));
        }
        let mut pairs = BTreeMap::new();
        for dir in pair_dirs(root)? {
            let (full, meta) = load_pair(&dir)?;
            let preview = downscale_pair(&full, preview_long_edge)?;
            let loaded = LoadedPair {
                has_mask: dir.join(MASK_FILE).is_file(),
                has_depth: dir.join(DEPTH_FILE).is_file(),
                thumb_png: thumbnail(&full)?,
                dir,
                meta,
                full,
                preview,
            };
            let id = loaded.meta.pair_id.clone();
            if pairs.insert(id.clone(), Arc::new(loaded)).is_some() {
                return Err(Error::InvalidInput(format!("pair id {id} appears twice under {}", root.display())));
            }
        }
        if pairs.is_empty() {
            return Err(Error::InvalidInput(format!("data root {} contains no pairs", root.display())));
        }
        log::info!("loaded {} pair(s) from {}", pairs.len(), root.display());
        Ok(Self {
            root: root.to_path_buf(),
            pairs,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn get(&self, id: &str) -> Option<&Arc<LoadedPair>> {
        self.pairs.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<LoadedPair>> {
        self.pairs.values()
    }
}
