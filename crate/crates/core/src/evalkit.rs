//! PSNR, SSIM and a paired evaluation harness grouped by edit type.
//!
//! Metrics run on 8-bit RGB. PSNR uses a peak of 255 over all channels.
//! SSIM uses an 11×11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03, only
//! windows that fit inside the image, and averages the three channel means.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_manifest, SampleRecord};
use crate::error::{Error, Result};
use crate::imagecore::{read_png, SdrImage};
use crate::palette::is_neutral;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const PEAK: f64 = 255.0;

fn same_dims(a: &SdrImage, b: &SdrImage) -> Result<()> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::invalid(format!(
            "image sizes differ: {:?} vs {:?}",
            a.dimensions(),
            b.dimensions()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB; `+inf` for identical images.
pub fn psnr(a: &SdrImage, b: &SdrImage) -> Result<f64> {
    same_dims(a, b)?;
    let sse: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = i64::from(x) - i64::from(y);
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / a.data().len() as f64;
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Valid-mode separable filtering of a `w`×`h` field.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = k.iter().zip(&row[x..]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * horiz[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_channel(x: &[f64], y: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> f64 {
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let [mx, my, sxx, syy, sxy] = [x, y, &xx[..], &yy[..], &xy[..]].map(|f| filter_valid(f, w, h, k));
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    total / n as f64
}

/// Mean structural similarity; both sides must be at least 11×11.
pub fn ssim(a: &SdrImage, b: &SdrImage) -> Result<f64> {
    same_dims(a, b)?;
    let (w, h) = a.dimensions();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let k = gaussian_kernel();
    let chan = |img: &SdrImage, c: usize| -> Vec<f64> { img.data().iter().skip(c).step_by(3).map(|&v| f64::from(v)).collect() };
    let sum: f64 = (0..3).map(|c| ssim_channel(&chan(a, c), &chan(b, c), w, h, &k)).sum();
    Ok(sum / 3.0)
}

/// Evaluation group of a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// A component turned fully on or off.
    Binary,
    /// A fractional intensity change under a neutral light.
    Intensity,
    /// A fractional change under a colored light.
    Color,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Binary, Task::Intensity, Task::Color];

    pub fn of(rec: &SampleRecord) -> Task {
        if rec.is_binary() {
            Task::Binary
        } else if !is_neutral(rec.c_t) {
            Task::Color
        } else {
            Task::Intensity
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Intensity => "intensity",
            Task::Color => "color",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub id: String,
    pub task: Task,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Means over a group, `None` when the group is empty. Infinite PSNRs are
/// left out of `psnr_db` and counted in `psnr_infinite`; if every PSNR is
/// infinite the mean is `+inf`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub psnr_db: Option<f64>,
    pub psnr_infinite: usize,
    pub ssim: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub groups: BTreeMap<Task, GroupStats>,
    pub overall: GroupStats,
    /// Sorted by id.
    pub records: Vec<MetricRecord>,
}

fn stats<'a>(rows: impl Iterator<Item = &'a MetricRecord>) -> GroupStats {
    let (mut count, mut inf, mut psnr_sum, mut ssim_sum) = (0usize, 0usize, 0.0, 0.0);
    for r in rows {
        count += 1;
        ssim_sum += r.ssim;
        if r.psnr_db.is_infinite() {
            inf += 1;
        } else {
            psnr_sum += r.psnr_db;
        }
    }
    let finite = count - inf;
    GroupStats {
        count,
        psnr_db: match (count, finite) {
            (0, _) => None,
            (_, 0) => Some(f64::INFINITY),
            _ => Some(psnr_sum / finite as f64),
        },
        psnr_infinite: inf,
        ssim: (count > 0).then(|| ssim_sum / count as f64),
    }
}

/// Groups and averages per-image metrics. Records are sorted by id first,
/// so the result does not depend on input order.
pub fn aggregate(mut records: Vec<MetricRecord>) -> MetricReport {
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let groups = Task::ALL
        .into_iter()
        .map(|t| (t, stats(records.iter().filter(|r| r.task == t))))
        .collect();
    MetricReport {
        groups,
        overall: stats(records.iter()),
        records,
    }
}

/// Scores prediction/ground-truth image pairs.
pub fn evaluate_images(items: &[(String, Task, SdrImage, SdrImage)]) -> Result<MetricReport> {
    let records = items
        .par_iter()
        .map(|(id, task, pred, gt)| {
            Ok(MetricRecord {
                id: id.clone(),
                task: *task,
                psnr_db: psnr(pred, gt)?,
                ssim: ssim(pred, gt)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(records))
}

/// Ids present on only one side, sorted.
pub fn reconcile(pred: &[SampleRecord], gt: &[SampleRecord]) -> Result<()> {
    let p: BTreeSet<&str> = pred.iter().map(|r| r.id.as_str()).collect();
    let g: BTreeSet<&str> = gt.iter().map(|r| r.id.as_str()).collect();
    let orphans: Vec<String> = p.symmetric_difference(&g).map(|s| s.to_string()).collect();
    if orphans.is_empty() && p.len() == pred.len() && g.len() == gt.len() {
        return Ok(());
    }
    if orphans.is_empty() {
        return Err(Error::invalid("manifest contains duplicate record ids"));
    }
    Err(Error::Reconciliation { orphans })
}

/// Compares each record's `target_path` image in `pred` against the one in
/// `gt`. Relative paths resolve against `pred_root` and `gt_root`. Groups
/// come from the ground-truth record.
pub fn evaluate_paired(
    pred: &[SampleRecord],
    gt: &[SampleRecord],
    pred_root: &Path,
    gt_root: &Path,
) -> Result<MetricReport> {
    reconcile(pred, gt)?;
    let by_id: HashMap<&str, &SampleRecord> = pred.iter().map(|r| (r.id.as_str(), r)).collect();
    let records = gt
        .par_iter()
        .map(|g| {
            let p = by_id[g.id.as_str()];
            let pi = read_png(pred_root.join(&p.target_path))?;
            let gi = read_png(gt_root.join(&g.target_path))?;
            Ok(MetricRecord {
                id: g.id.clone(),
                task: Task::of(g),
                psnr_db: psnr(&pi, &gi)?,
                ssim: ssim(&pi, &gi)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(records))
}

fn manifest_root(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// [`evaluate_paired`] on two manifest files, resolving image paths against
/// each manifest's directory.
pub fn evaluate_manifests(pred: impl AsRef<Path>, gt: impl AsRef<Path>) -> Result<MetricReport> {
    let (pred, gt) = (pred.as_ref(), gt.as_ref());
    let p: Vec<SampleRecord> = read_manifest(pred)?;
    let g: Vec<SampleRecord> = read_manifest(gt)?;
    evaluate_paired(&p, &g, &manifest_root(pred), &manifest_root(gt))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

impl MetricReport {
    /// `[group]` blocks of `key=value` lines, then an `[overall]` block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let blocks = self.groups.iter().map(|(t, g)| (t.as_str(), g)).chain([("overall", &self.overall)]);
        for (name, g) in blocks {
            let _ = writeln!(s, "[{name}]");
            let _ = writeln!(s, "count={}", g.count);
            let _ = writeln!(s, "psnr_db={}", opt(g.psnr_db));
            let _ = writeln!(s, "psnr_infinite={}", g.psnr_infinite);
            let _ = writeln!(s, "ssim={}", opt(g.ssim));
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,task,psnr_db,ssim\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{}", r.id, r.task, r.psnr_db, r.ssim);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize) -> SdrImage {
        let data = (0..w * h * 3).map(|i| ((i * 37) % 251) as u8).collect();
        SdrImage::new(w, h, data).unwrap()
    }

    #[test]
    fn psnr_identical_and_offset() {
        let a = SdrImage::filled(8, 8, [100; 3]).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = SdrImage::filled(8, 8, [116; 3]).unwrap();
        let want = 20.0 * (255.0f64 / 16.0).log10();
        assert!((psnr(&a, &b).unwrap() - want).abs() < 1e-12);
        assert!(psnr(&a, &SdrImage::filled(4, 4, [0; 3]).unwrap()).is_err());
    }

    #[test]
    fn ssim_identity_and_inverse() {
        let a = gradient(16, 13);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let inv = SdrImage::new(16, 13, a.data().iter().map(|v| 255 - v).collect()).unwrap();
        assert!(ssim(&a, &inv).unwrap() < 0.1);
        assert!(ssim(&SdrImage::filled(10, 20, [0; 3]).unwrap(), &SdrImage::filled(10, 20, [0; 3]).unwrap()).is_err());
    }

    #[test]
    fn ssim_constant_closed_form() {
        let a = SdrImage::filled(11, 11, [100; 3]).unwrap();
        let b = SdrImage::filled(11, 11, [101; 3]).unwrap();
        let c1 = (0.01f64 * 255.0).powi(2);
        let want = (2.0 * 100.0 * 101.0 + c1) / (100.0f64.powi(2) + 101.0f64.powi(2) + c1);
        assert!((ssim(&a, &b).unwrap() - want).abs() < 1e-6);
    }

    #[test]
    fn grouping_and_report() {
        let rows = vec![
            MetricRecord { id: "b".into(), task: Task::Binary, psnr_db: 20.0, ssim: 0.5 },
            MetricRecord { id: "a".into(), task: Task::Binary, psnr_db: f64::INFINITY, ssim: 1.0 },
            MetricRecord { id: "c".into(), task: Task::Color, psnr_db: 30.0, ssim: 0.9 },
        ];
        let r = aggregate(rows.clone());
        let bin = r.groups[&Task::Binary];
        assert_eq!((bin.count, bin.psnr_db, bin.psnr_infinite, bin.ssim), (2, Some(20.0), 1, Some(0.75)));
        assert_eq!(r.groups[&Task::Intensity].count, 0);
        assert_eq!(r.overall.count, 3);
        let mut rev = rows;
        rev.reverse();
        assert_eq!(aggregate(rev), r);
        assert!(r.to_text().contains("[binary]\ncount=2\npsnr_db=20\npsnr_infinite=1\nssim=0.75\n"));
        assert!(r.to_csv().starts_with("id,task,psnr_db,ssim\na,binary,inf,1\n"));
    }
}
