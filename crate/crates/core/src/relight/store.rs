//! On-disk layout of a pair: `amb.pfm`, `change.pfm` and a `pair.meta`
//! key=value file, optionally with `mask.png` and `depth.pfm` beside them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Domain, LightPair};
use crate::error::{Error, Result};
use crate::imagecore::{read_pfm, write_pfm, Rgb};

pub const AMB_FILE: &str = "amb.pfm";
pub const CHANGE_FILE: &str = "change.pfm";
pub const META_FILE: &str = "pair.meta";
pub const MASK_FILE: &str = "mask.png";
pub const DEPTH_FILE: &str = "depth.pfm";

/// Contents of `pair.meta`. Keys other than `pair_id`, `domain` and `c_o`
/// (source file references and the like) are kept in `extra`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMeta {
    pub pair_id: String,
    pub domain: Domain,
    pub c_o: Rgb,
    pub extra: BTreeMap<String, String>,
}

pub(crate) fn parse_rgb(s: &str) -> Result<Rgb> {
    let parts: Vec<f32> = s
        .split(',')
        .map(|p| p.trim().parse::<f32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid(format!("{s:?} is not an r,g,b triple")))?;
    <Rgb>::try_from(parts.as_slice()).map_err(|_| Error::invalid(format!("{s:?} is not an r,g,b triple")))
}

pub(crate) fn format_rgb(c: Rgb) -> String {
    format!("{},{},{}", c[0], c[1], c[2])
}

impl PairMeta {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("pair.meta line {}: expected key=value", n + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |k: &str| {
            kv.remove(k)
                .ok_or_else(|| Error::invalid(format!("pair.meta is missing `{k}`")))
        };
        Ok(Self {
            pair_id: take("pair_id")?,
            domain: take("domain")?.parse()?,
            c_o: parse_rgb(&take("c_o")?)?,
            extra: kv,
        })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pair_id={}", self.pair_id);
        let _ = writeln!(s, "domain={}", self.domain);
        let _ = writeln!(s, "c_o={}", format_rgb(self.c_o));
        for (k, v) in &self.extra {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

pub fn save_pair(pair: &LightPair, dir: impl AsRef<Path>, extra: &BTreeMap<String, String>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    write_pfm(pair.i_amb(), dir.join(AMB_FILE))?;
    write_pfm(pair.i_change(), dir.join(CHANGE_FILE))?;
    let meta = PairMeta {
        pair_id: pair.pair_id.clone(),
        domain: pair.domain,
        c_o: pair.c_o(),
        extra: extra.clone(),
    };
    let path = dir.join(META_FILE);
    fs::write(&path, meta.render()).map_err(|e| Error::from(e).in_file(&path))
}

pub fn load_pair(dir: impl AsRef<Path>) -> Result<(LightPair, PairMeta)> {
    let dir = dir.as_ref();
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
    let meta = PairMeta::parse(&text).map_err(|e| e.in_file(&path))?;
    let amb = read_pfm(dir.join(AMB_FILE))?;
    let change = read_pfm(dir.join(CHANGE_FILE))?;
    let pair = LightPair::new(amb, change, meta.c_o, meta.domain, meta.pair_id.clone()).map_err(|e| e.in_file(dir))?;
    Ok((pair, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::LinearImage;

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let amb = LinearImage::from_fn(3, 2, |x, y| [x as f32 * 0.1, y as f32, 0.5]).unwrap();
        let change = LinearImage::from_fn(3, 2, |x, _| [1.0 / (x + 1) as f32, 0.25, 0.125]).unwrap();
        let pair = LightPair::new(amb, change, [1.0, 0.8, 0.3], Domain::Real, "kitchen-01").unwrap();
        let mut extra = BTreeMap::new();
        extra.insert("source_on".to_string(), "raw/kitchen_on.pfm".to_string());
        save_pair(&pair, dir.path(), &extra).unwrap();
        let (loaded, meta) = load_pair(dir.path()).unwrap();
        assert_eq!(loaded, pair);
        assert_eq!(meta.extra, extra);
    }

    #[test]
    fn missing_key_is_named() {
        let err = PairMeta::parse("pair_id=a\ndomain=real\n").unwrap_err();
        assert!(err.to_string().contains("c_o"));
    }
}
