//! Batch subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relit::calibrate::{calibrate_pair, disentangle, residual_stats, RawMeta, DEFAULT_GAMMA_REF};
use relit::dataset::{
    build_conditioning, ingest_depth, ingest_mask, inflate_to_dir, read_manifest, sample_records, write_manifest,
    write_pack, FrameRecord, GridSpec, InflatedIndex, SampleRecord, SamplerConfig, DEFAULT_NUM_FREQS,
};
use relit::evalkit::{evaluate_manifests, reconcile};
use relit::imagecore::{read_pfm, read_pfm_plane, read_png, write_pfm, BayerMosaic, Plane};
use relit::relight::{
    bound_outliers, compose_synthetic, load_pair, sample_ambient_mix, save_pair, AmbientMixConfig, Domain,
    LightPair, PerLightRenderSet, DEPTH_FILE, E_MAX_QUANTILE, MASK_FILE,
};
use relit::tonemap::{ToneMapMode, ToneMapSpec};

use crate::data::pair_dirs;
use crate::service::{serve, ServiceConfig, PREVIEW_LONG_EDGE};

pub type CliResult<T = ()> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

#[derive(Debug, Parser)]
#[command(name = "relightd", version, about = "Relighting data synthesis pipeline and render service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Develop an on/off raw mosaic pair into linear sRGB `on.pfm` / `off.pfm`.
    Calibrate(CalibrateArgs),
    /// Split a calibrated pair (or a synthetic render set) into ambient and light images.
    Disentangle(DisentangleArgs),
    /// Relight and tone map every pair over a grid.
    Inflate(InflateArgs),
    /// Sample training records and write conditioning packs.
    Condition(ConditionArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Residual statistics of calibrated captures, as CSV.
    Stats(StatsArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Light-on mosaic (single-channel PFM with a `.meta` sidecar).
    #[arg(long)]
    pub on: PathBuf,
    #[arg(long)]
    pub off: PathBuf,
    /// White balance interpolation point between the off (0) and on (1) gains.
    #[arg(long, default_value_t = DEFAULT_GAMMA_REF)]
    pub gamma_ref: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DisentangleArgs {
    /// Calibrated light-on image.
    #[arg(long, conflicts_with = "light")]
    pub on: Option<PathBuf>,
    #[arg(long, requires = "on")]
    pub off: Option<PathBuf>,
    /// Pair id (real captures) or view id (synthetic).
    #[arg(long)]
    pub pair_id: String,
    /// Per-light render; repeat for each light of a synthetic view.
    #[arg(long)]
    pub light: Vec<PathBuf>,
    /// Environment-only render; repeatable.
    #[arg(long)]
    pub env: Vec<PathBuf>,
    /// Index of the light to isolate among `--light`.
    #[arg(long, default_value_t = 0)]
    pub target_light: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the upper-quantile clamp on synthetic renders.
    #[arg(long)]
    pub no_e_max: bool,
    /// Single-channel PNG copied next to the pair.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Depth PFM copied next to the pair.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Data root; the pair is written to `<out>/<pair id>`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InflateArgs {
    #[arg(long)]
    pub data_root: PathBuf,
    /// `real-default`, `synth-default` or a JSON grid file. Defaults by pair domain.
    #[arg(long)]
    pub grid: Option<String>,
    /// Tone-map mode; both when omitted.
    #[arg(long)]
    pub tonemap: Option<ToneMapMode>,
    /// Only this pair.
    #[arg(long)]
    pub pair: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConditionArgs {
    /// `frames.jsonl` written by `inflate`.
    #[arg(long)]
    pub frames: PathBuf,
    /// Data root holding masks and depth maps.
    #[arg(long)]
    pub data_root: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub p_light: f64,
    #[arg(long, default_value_t = 0.3)]
    pub p_endpoint: f64,
    /// Output size as WxH; source size when omitted.
    #[arg(long, value_parser = parse_size)]
    pub size: Option<(usize, usize)>,
    #[arg(long, default_value_t = DEFAULT_NUM_FREQS)]
    pub num_freqs: usize,
    /// Keep fractional mask values instead of thresholding at 0.5.
    #[arg(long)]
    pub soft_masks: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Directory for `report.txt` and `metrics.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Directory of captures, each a subdirectory with `on.pfm` and `off.pfm`.
    #[arg(long)]
    pub captures: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Upper edge of the relative-error histogram; larger values land in the last bin.
    #[arg(long, default_value_t = 0.5)]
    pub max_error: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub data_root: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8787")]
    pub listen: SocketAddr,
    #[arg(long)]
    pub max_concurrent: Option<usize>,
    /// Mode used when a request does not name one.
    #[arg(long, default_value = "together")]
    pub tonemap: ToneMapMode,
    #[arg(long, default_value_t = PREVIEW_LONG_EDGE)]
    pub preview_long_edge: usize,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    let (w, h) = (parse(w)?, parse(h)?);
    if w == 0 || h == 0 {
        return Err("size must be nonzero".into());
    }
    Ok((w, h))
}

fn create_dir(p: &Path) -> CliResult {
    fs::create_dir_all(p).map_err(|e| format!("{}: {e}", p.display()).into())
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Calibrate(a) => calibrate(&a),
        Command::Disentangle(a) => disentangle_cmd(&a),
        Command::Inflate(a) => inflate_cmd(&a),
        Command::Condition(a) => condition(&a),
        Command::Eval(a) => eval(&a),
        Command::Stats(a) => stats(&a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn read_mosaic(path: &Path) -> CliResult<(BayerMosaic, RawMeta)> {
    let meta = RawMeta::read_for(path)?;
    let mosaic = BayerMosaic::from_plane(read_pfm_plane(path)?, meta.cfa)?;
    Ok((mosaic, meta))
}

pub fn calibrate(a: &CalibrateArgs) -> CliResult {
    let (m_on, meta_on) = read_mosaic(&a.on)?;
    let (m_off, meta_off) = read_mosaic(&a.off)?;
    let cal = calibrate_pair(&m_on, &meta_on, &m_off, &meta_off, a.gamma_ref)?;
    create_dir(&a.out)?;
    write_pfm(&cal.on, a.out.join("on.pfm"))?;
    write_pfm(&cal.off, a.out.join("off.pfm"))?;
    println!("calibrated {}x{} pair into {}", cal.on.width(), cal.on.height(), a.out.display());
    Ok(())
}

fn copy_extras(a: &DisentangleArgs, dir: &Path) -> CliResult {
    if let Some(m) = &a.mask {
        ingest_mask(m, true)?;
        fs::copy(m, dir.join(MASK_FILE))?;
    }
    if let Some(d) = &a.depth {
        read_pfm_plane(d)?;
        fs::copy(d, dir.join(DEPTH_FILE))?;
    }
    Ok(())
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn disentangle_cmd(a: &DisentangleArgs) -> CliResult {
    let mut extra = BTreeMap::new();
    let pair = if let (Some(on), Some(off)) = (&a.on, &a.off) {
        let on_img = read_pfm(on)?;
        let off_img = read_pfm(off)?;
        let (amb, change) = disentangle(&on_img, &off_img)?;
        extra.insert("source_on".into(), on.display().to_string());
        extra.insert("source_off".into(), off.display().to_string());
        LightPair::with_estimated_color(amb, change, Domain::Real, a.pair_id.clone())?
    } else if !a.light.is_empty() {
        let set = PerLightRenderSet {
            view_id: a.pair_id.clone(),
            light_renders: a.light.iter().map(read_pfm).collect::<Result<_, _>>()?,
            light_ids: a.light.iter().map(|p| file_stem(p)).collect(),
            env_renders: a.env.iter().map(read_pfm).collect::<Result<_, _>>()?,
            env_ids: a.env.iter().map(|p| file_stem(p)).collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let mix = sample_ambient_mix(
            set.light_renders.len(),
            set.env_renders.len(),
            a.target_light,
            &AmbientMixConfig::default(),
            &mut rng,
        );
        let e_max = if a.no_e_max {
            None
        } else {
            let all: Vec<_> = set.all_renders().cloned().collect();
            Some(bound_outliers(&all, E_MAX_QUANTILE)?)
        };
        extra.insert("seed".into(), a.seed.to_string());
        if let Some(m) = e_max {
            extra.insert("e_max".into(), m.to_string());
        }
        compose_synthetic(&set, a.target_light, &mix, e_max)?
    } else {
        return Err("give either --on/--off or at least one --light".into());
    };
    let dir = a.out.join(&pair.pair_id);
    save_pair(&pair, &dir, &extra)?;
    copy_extras(a, &dir)?;
    let c = pair.c_o();
    println!("{}: c_o = {:.4},{:.4},{:.4} -> {}", pair.pair_id, c[0], c[1], c[2], dir.display());
    Ok(())
}

pub fn inflate_cmd(a: &InflateArgs) -> CliResult {
    let grid = a.grid.as_deref().map(GridSpec::resolve).transpose()?;
    let modes = match a.tonemap {
        Some(m) => vec![m],
        None => vec![ToneMapMode::Together, ToneMapMode::Separate],
    };
    let spec = ToneMapSpec::default();
    create_dir(&a.out)?;
    let mut rows: Vec<FrameRecord> = Vec::new();
    for dir in pair_dirs(&a.data_root)? {
        let (pair, _) = load_pair(&dir)?;
        if a.pair.as_ref().is_some_and(|p| *p != pair.pair_id) {
            continue;
        }
        let g = grid.clone().unwrap_or_else(|| GridSpec::default_for(pair.domain));
        let frames = inflate_to_dir(&pair, &g, &spec, &modes, &a.out)?;
        println!("{}: {} frames", pair.pair_id, frames.len());
        rows.extend(frames);
    }
    if rows.is_empty() {
        return Err(format!("no pairs found under {}", a.data_root.display()).into());
    }
    write_manifest(&rows, a.out.join("frames.jsonl"))?;
    println!("wrote {} manifest rows", rows.len());
    Ok(())
}

fn plane_or(path: PathBuf, w: usize, h: usize, fill: f32, load: impl Fn(&Path) -> relit::Result<Plane>) -> CliResult<Plane> {
    if path.is_file() {
        Ok(load(&path)?)
    } else {
        log::warn!("{} missing, using a constant {fill} plane", path.display());
        Ok(Plane::filled(w, h, fill)?)
    }
}

pub fn condition(a: &ConditionArgs) -> CliResult {
    let frames: Vec<FrameRecord> = read_manifest(&a.frames)?;
    let frames_root = fs::canonicalize(a.frames.parent().unwrap_or(Path::new(".")))?;
    let index = InflatedIndex::from_frames(&frames)?;
    let cfg = SamplerConfig {
        p_light: a.p_light,
        p_endpoint: a.p_endpoint,
        seed: a.seed,
        ..SamplerConfig::default()
    };
    let mut records: Vec<SampleRecord> = sample_records(&index, &cfg, a.count)?;
    let packs = a.out.join("packs");
    create_dir(&packs)?;
    for rec in &mut records {
        rec.source_path = frames_root.join(&rec.source_path);
        rec.target_path = frames_root.join(&rec.target_path);
        let source = read_png(&rec.source_path)?;
        let (w, h) = source.dimensions();
        let pair_dir = a.data_root.join(&rec.pair_id);
        let mask = plane_or(pair_dir.join(MASK_FILE), w, h, 1.0, |p| ingest_mask(p, a.soft_masks))?;
        let depth = plane_or(pair_dir.join(DEPTH_FILE), w, h, 0.0, |p| ingest_depth(p))?;
        let (ow, oh) = a.size.unwrap_or((w, h));
        let pack = build_conditioning(rec, &source, &mask, &depth, ow, oh, a.num_freqs)?;
        let dir = packs.join(&rec.id);
        write_pack(&pack, &dir)?;
        rec.extra.insert("pack".into(), serde_json::Value::String(format!("packs/{}", rec.id)));
    }
    write_manifest(&records, a.out.join("records.jsonl"))?;
    println!("wrote {} records", records.len());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CliResult {
    let pred: Vec<SampleRecord> = read_manifest(&a.pred)?;
    let gt: Vec<SampleRecord> = read_manifest(&a.gt)?;
    reconcile(&pred, &gt)?;
    let report = evaluate_manifests(&a.pred, &a.gt)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        fs::write(out.join("report.txt"), &text)?;
        fs::write(out.join("metrics.csv"), report.to_csv())?;
    }
    Ok(())
}

/// Bin counts over `[0, hi]`; values above `hi` go to the last bin.
pub fn histogram(values: &[f64], bins: usize, hi: f64) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &v in values {
        let i = ((v / hi) * bins as f64).floor();
        let i = if i.is_nan() { 0 } else { (i.max(0.0) as usize).min(bins - 1) };
        counts[i] += 1;
    }
    counts
}

pub fn stats(a: &StatsArgs) -> CliResult {
    if a.bins == 0 || a.max_error.is_nan() || a.max_error <= 0.0 {
        return Err("--bins and --max-error must be positive".into());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(&a.captures)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("on.pfm").is_file() && p.join("off.pfm").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(format!("no captures with on.pfm/off.pfm under {}", a.captures.display()).into());
    }
    let mut csv = String::from("capture,relative_error,pct_negative\n");
    let mut errors = Vec::new();
    for d in &dirs {
        let s = residual_stats(&read_pfm(d.join("on.pfm"))?, &read_pfm(d.join("off.pfm"))?)?;
        let _ = writeln!(csv, "{},{},{}", file_stem(d), s.relative_error, s.pct_negative);
        errors.push(s.relative_error);
    }
    let mut hist = String::from("bin_lo,bin_hi,count\n");
    let width = a.max_error / a.bins as f64;
    for (i, c) in histogram(&errors, a.bins, a.max_error).into_iter().enumerate() {
        let _ = writeln!(hist, "{},{},{c}", i as f64 * width, (i + 1) as f64 * width);
    }
    print!("{csv}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        fs::write(out.join("residuals.csv"), &csv)?;
        fs::write(out.join("histogram.csv"), &hist)?;
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> CliResult {
    let cfg = ServiceConfig {
        listen: a.listen,
        data_root: a.data_root,
        max_concurrent: a
            .max_concurrent
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(4, |n| n.get())),
        tonemap: ToneMapSpec::default().with_mode(a.tonemap),
        preview_long_edge: a.preview_long_edge,
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(serve(cfg))
}
