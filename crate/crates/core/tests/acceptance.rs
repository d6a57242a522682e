//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p relit --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relit::calibrate::{
    disentangle, exposure_product, interp_wb, relit_exposure_product, residual_stats, RawMeta, IDENTITY_CCM,
};
use relit::dataset::{
    build_conditioning, fourier_features, inflate_to_dir, read_manifest, read_pack, sample_records, write_manifest,
    write_pack, Component, FrameRecord, GridSpec, InflatedIndex, SampleRecord, SamplerConfig, SPATIAL_CHANNELS,
};
use relit::evalkit::{psnr, ssim};
use relit::imagecore::{
    read_pfm, read_pfm_plane, read_png, write_pfm, write_pfm_plane, write_png, CfaPattern, LinearImage, Plane,
    SdrImage,
};
use relit::relight::{relight, upper_quantile, Domain, LightPair, RelightParams, E_MAX_QUANTILE};
use relit::tonemap::{tonemap_separate, tonemap_together, ToneMapMode, ToneMapSpec};

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> String,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_image(r: &mut ChaCha8Rng, w: usize, h: usize, scale: f32) -> LinearImage {
    LinearImage::from_fn(w, h, |_, _| std::array::from_fn(|_| scale * r.random::<f32>())).unwrap()
}

fn random_pair(r: &mut ChaCha8Rng, w: usize, h: usize) -> LightPair {
    let c_o = std::array::from_fn(|_| r.random_range(0.2f32..=1.0));
    LightPair::new(random_image(r, w, h, 2.0), random_image(r, w, h, 5.0), c_o, Domain::Real, "p").unwrap()
}

fn params(alpha: f32, gamma: f32, c_t: [f32; 3]) -> RelightParams {
    RelightParams::new(alpha, gamma, c_t).unwrap()
}

fn rel_close(a: f32, b: f32, tol: f32) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f32::MIN_POSITIVE)
}

fn relight_endpoints() -> String {
    let mut r = rng(1);
    for _ in 0..50 {
        let pair = random_pair(&mut r, 32, 32);
        let amb = relight(&pair, &params(1.0, 0.0, [1.0; 3])).unwrap();
        assert!(amb.data().iter().zip(pair.i_amb().data()).all(|(a, b)| rel_close(*a, *b, 1e-6)));
        let full = relight(&pair, &params(1.0, 1.0, pair.c_o())).unwrap();
        let want = pair.i_amb().data().iter().zip(pair.i_change().data()).map(|(a, c)| a + c);
        assert!(full.data().iter().zip(want).all(|(a, b)| rel_close(*a, b, 1e-6)));
        let zero = relight(&pair, &params(0.0, 0.0, [0.3, 0.6, 0.9])).unwrap();
        assert!(zero.is_zero());
    }
    "50 pairs, (1,0), (1,1) at c_o and (0,0)".into()
}

fn linearity() -> String {
    let mut r = rng(2);
    let n = 1000;
    for _ in 0..n {
        let pair = random_pair(&mut r, 32, 32);
        let c_t: [f32; 3] = std::array::from_fn(|_| r.random());
        let (a1, a2, g1, g2) = (r.random::<f32>(), r.random::<f32>(), r.random::<f32>(), r.random::<f32>());
        let sum = relight(&pair, &params(a1 + a2, g1 + g2, c_t)).unwrap();
        let x = relight(&pair, &params(a1, g1, c_t)).unwrap();
        let y = relight(&pair, &params(a2, g2, c_t)).unwrap();
        for ((s, p), q) in sum.data().iter().zip(x.data()).zip(y.data()) {
            assert!(rel_close(*s, p + q, 1e-5), "additivity: {s} vs {}", p + q);
        }
        let (lo, hi) = (g1.min(g2), g1.max(g2));
        let below = relight(&pair, &params(a1, lo, c_t)).unwrap();
        let above = relight(&pair, &params(a1, hi, c_t)).unwrap();
        assert!(below.data().iter().zip(above.data()).all(|(b, a)| b <= a), "not monotone in gamma");
    }
    format!("{n} random 32x32 pairs, 1e-5 relative, monotone exactly")
}

fn meta(r: &mut ChaCha8Rng) -> RawMeta {
    RawMeta {
        exposure_time: r.random_range(1e-4..0.1),
        analog_gain: r.random_range(1.0..16.0),
        digital_gain: r.random_range(1.0..4.0),
        wb_gains: std::array::from_fn(|_| r.random_range(1.0..3.0)),
        ccm: IDENTITY_CCM,
        cfa: CfaPattern::Rggb,
    }
}

/// Two passes: materialize every difference, then accumulate.
fn residual_oracle(on: &LinearImage, off: &LinearImage) -> (f64, f64) {
    let diffs: Vec<f64> = on.data().iter().zip(off.data()).map(|(a, b)| f64::from(*a) - f64::from(*b)).collect();
    let neg: f64 = diffs.iter().filter(|d| **d < 0.0).map(|d| d * d).sum();
    let pos: f64 = diffs.iter().filter(|d| **d >= 0.0).map(|d| d * d).sum();
    let count = diffs.iter().filter(|d| **d < 0.0).count();
    ((neg / pos).sqrt(), 100.0 * count as f64 / diffs.len() as f64)
}

fn calibration() -> String {
    let mut r = rng(3);
    for _ in 0..100 {
        let (off, on) = (meta(&mut r), meta(&mut r));
        let alpha = r.random_range(0.1..1.0);
        assert_eq!(relit_exposure_product(&off, &on, 1.0, 0.0).unwrap(), exposure_product(&off).unwrap());
        assert_eq!(relit_exposure_product(&off, &on, alpha, 1.0).unwrap(), exposure_product(&on).unwrap());
        assert_eq!(interp_wb(off.wb_gains, on.wb_gains, 0.0), off.wb_gains);
        assert_eq!(interp_wb(off.wb_gains, on.wb_gains, 1.0), on.wb_gains);
    }
    for _ in 0..100 {
        let off = random_image(&mut r, 32, 32, 1.0);
        let noise = random_image(&mut r, 32, 32, 0.2);
        let lamp = random_image(&mut r, 32, 32, 1.0);
        let on = LinearImage::new(
            32,
            32,
            off.data().iter().zip(lamp.data()).zip(noise.data()).map(|((o, l), n)| (o + l - n).max(0.0)).collect(),
        )
        .unwrap();
        let got = residual_stats(&on, &off).unwrap();
        let (rel, pct) = residual_oracle(&on, &off);
        assert!((got.relative_error - rel).abs() <= 1e-12 * rel.max(1.0), "{} vs {rel}", got.relative_error);
        assert_eq!(got.pct_negative, pct);
    }
    "P_relit and WB endpoints exact; residual stats on 100 pairs".into()
}

fn disentanglement() -> String {
    let mut r = rng(4);
    for _ in 0..50 {
        let on = random_image(&mut r, 24, 24, 1.0);
        let off = LinearImage::new(24, 24, on.data().iter().map(|v| v + 0.01 + r.random::<f32>()).collect()).unwrap();
        let (_, change) = disentangle(&on, &off).unwrap();
        assert!(change.data().iter().all(|v| v.to_bits() == 0), "on < off must give +0 everywhere");

        let mixed = random_image(&mut r, 24, 24, 1.0);
        let (_, change) = disentangle(&mixed, &on).unwrap();
        assert!(change.data().iter().all(|v| *v >= 0.0));

        let brighter = LinearImage::new(24, 24, on.data().iter().map(|v| v + r.random::<f32>()).collect()).unwrap();
        for upper in [&brighter, &on] {
            let s = residual_stats(upper, &on).unwrap();
            assert_eq!((s.relative_error, s.pct_negative), (0.0, 0.0));
        }
    }
    "50 adversarial and 50 mixed pairs".into()
}

fn lamp_pair(w: usize, h: usize) -> LightPair {
    let amb = LinearImage::from_fn(w, h, |x, y| {
        let t = ((x / 4 + y / 4) % 2) as f32;
        let v = 0.004 + 0.006 * t + 0.0001 * x as f32;
        [v, 0.95 * v, 0.9 * v]
    })
    .unwrap();
    let change = LinearImage::from_fn(w, h, |x, y| {
        let d2 = (x as f32 - w as f32 / 2.0).powi(2) + (y as f32 - h as f32 * 0.375).powi(2);
        let v = if d2 < 36.0 { 50.0 } else { 0.0 } + 1.5 / (1.0 + d2 / 60.0);
        [v, 0.9 * v, 0.75 * v]
    })
    .unwrap();
    LightPair::with_estimated_color(amb, change, Domain::Synthetic, "lamp").unwrap()
}

fn inflation_counts() -> String {
    let tmp = tempfile::tempdir().unwrap();
    let pair = lamp_pair(16, 16);
    let mut counts = Vec::new();
    for (grid, want) in [(GridSpec::real_default(), 60), (GridSpec::synth_default(), 36)] {
        assert_eq!(grid.inflation_factor(), want);
        let out = tmp.path().join(want.to_string());
        let rows = inflate_to_dir(&pair, &grid, &ToneMapSpec::default(), &[ToneMapMode::Together], &out).unwrap();
        assert_eq!(rows.len(), want);
        let path = out.join("frames.jsonl");
        write_manifest(&rows, &path).unwrap();
        let back: Vec<FrameRecord> = read_manifest(&path).unwrap();
        assert_eq!(back, rows);
        assert!(rows.iter().all(|f| out.join(&f.path).is_file()));
        counts.push(rows.len());
    }
    format!("real-default {} frames, synth-default {} frames", counts[0], counts[1])
}

fn std_dev(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn tonemap_behavior() -> String {
    let pair = lamp_pair(64, 64);
    let gammas = [0.0, 0.25, 0.5, 0.75, 1.0];
    let ps: Vec<_> = gammas.iter().map(|&g| params(1.0, g, [1.0; 3])).collect();
    let spec = ToneMapSpec::default();
    let mean = |frames: &[SdrImage]| frames.iter().map(SdrImage::mean_luminance).collect::<Vec<f64>>();
    let together = mean(&tonemap_together(&pair, &ps, &spec).unwrap().frames);
    let separate = mean(&tonemap_separate(&pair, &ps, &spec.with_mode(ToneMapMode::Separate)).unwrap().frames);
    assert!(together.windows(2).all(|w| w[1] >= 0.99 * w[0]), "together not non-decreasing: {together:?}");
    let range = together.iter().copied().fold(f64::MIN, f64::max) - together.iter().copied().fold(f64::MAX, f64::min);
    // Lit frames only: the unlit frame is the ambient stretched to the anchor.
    let spread = std_dev(&separate[1..]);
    assert!(5.0 * spread <= range, "separate spread {spread} vs together range {range}");
    format!("together range {range:.4}, separate lit-frame std {spread:.4} (ratio {:.1})", range / spread)
}

fn e_max() -> String {
    let n = 1_000_000;
    let mut r = rng(7);
    let samples: Vec<f32> = (0..n)
        .map(|_| {
            let v: f32 = r.random();
            if r.random_bool(0.001) {
                v * 1e4
            } else {
                v
            }
        })
        .collect();
    let mut sorted = samples.clone();
    sorted.sort_by(f32::total_cmp);
    let rank = n - (E_MAX_QUANTILE * n as f64).floor() as usize;
    let want = sorted[rank - 1];
    let got = upper_quantile(&mut samples.clone(), E_MAX_QUANTILE).unwrap();
    assert_eq!(got.to_bits(), want.to_bits());
    format!("rank {rank} of {n}, value {got}")
}

fn gray(w: usize, h: usize, mut f: impl FnMut(usize, usize, usize) -> u8) -> SdrImage {
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            data.extend((0..3).map(|c| f(x, y, c)));
        }
    }
    SdrImage::new(w, h, data).unwrap()
}

/// SSIM of one 11x11 window with weights built from the 2D Gaussian directly.
fn ssim_single_window(a: &SdrImage, b: &SdrImage) -> f64 {
    let weight = |x: usize, y: usize| {
        let (dx, dy) = (x as f64 - 5.0, y as f64 - 5.0);
        (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp()
    };
    let total: f64 = (0..11).flat_map(|y| (0..11).map(move |x| weight(x, y))).sum();
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut acc = 0.0;
    for c in 0..3 {
        let (mut mx, mut my) = (0.0, 0.0);
        for y in 0..11 {
            for x in 0..11 {
                let w = weight(x, y) / total;
                mx += w * f64::from(a.pixel(x, y)[c]);
                my += w * f64::from(b.pixel(x, y)[c]);
            }
        }
        let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
        for y in 0..11 {
            for x in 0..11 {
                let w = weight(x, y) / total;
                let (dx, dy) = (f64::from(a.pixel(x, y)[c]) - mx, f64::from(b.pixel(x, y)[c]) - my);
                vx += w * dx * dx;
                vy += w * dy * dy;
                cov += w * dx * dy;
            }
        }
        acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    acc / 3.0
}

fn metrics() -> String {
    let base = gray(32, 32, |x, y, c| (40 + (x * 5 + y * 3 + c * 17) % 150) as u8);
    let shifted = gray(32, 32, |x, y, c| base.pixel(x, y)[c] + 16);
    let got = psnr(&base, &shifted).unwrap();
    let closed = 10.0 * (255.0f64 * 255.0 / 256.0).log10();
    assert!((got - closed).abs() <= 0.01, "psnr {got} vs closed form {closed}");

    let mut r = rng(8);
    let noisy = gray(40, 40, |_, _, _| r.random());
    assert_eq!(ssim(&noisy, &noisy).unwrap(), 1.0);
    assert_eq!(ssim(&base, &base).unwrap(), 1.0);

    let mut worst = 0f64;
    for _ in 0..20 {
        let a = gray(11, 11, |_, _, _| r.random());
        let b = gray(11, 11, |x, y, c| a.pixel(x, y)[c].saturating_add(r.random_range(0..60)));
        worst = worst.max((ssim(&a, &b).unwrap() - ssim_single_window(&a, &b)).abs());
    }
    assert!(worst <= 1e-6, "single-window SSIM off by {worst}");
    format!("offset-16 PSNR {got:.4} dB (closed form {closed:.4}), single-window SSIM max error {worst:.1e}")
}

fn conditioning() -> String {
    let grid = GridSpec::real_default();
    let index = InflatedIndex::from_grid("room", Domain::Real, &grid, &[ToneMapMode::Together]).unwrap();
    let cfg = SamplerConfig { seed: 11, ..SamplerConfig::default() };
    let recs = sample_records(&index, &cfg, 200).unwrap();
    assert_eq!(recs, sample_records(&index, &cfg, 200).unwrap(), "sampler replay differs");

    let (w, h) = (20, 12);
    let source = gray(w, h, |x, y, c| ((x * 11 + y * 7 + c) % 256) as u8);
    let mask = Plane::from_fn(w, h, |x, _| if x < 8 { 0.0 } else { 1.0 }).unwrap();
    let depth = Plane::from_fn(w, h, |x, y| (x + y) as f32 / 30.0).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    for rec in recs.iter().filter(|r| r.delta_gamma != 0.0).take(10) {
        let pack = build_conditioning(rec, &source, &mask, &depth, w, h, 8).unwrap();
        assert_eq!(pack.spatial_planes().len(), SPATIAL_CHANNELS);
        assert_eq!(SPATIAL_CHANNELS, 8);
        let scaled = [&pack.intensity, &pack.color[0], &pack.color[1], &pack.color[2]];
        for p in scaled {
            for y in 0..h {
                assert!((0..8).all(|x| p.get(x, y).to_bits() == 0), "off-mask value not +0");
            }
        }
        let dir = tmp.path().join(&rec.id);
        write_pack(&pack, &dir).unwrap();
        assert_eq!(read_pack(&dir).unwrap().spatial_planes().len(), SPATIAL_CHANNELS);
    }

    for k in [1, 4, 8, 16] {
        let f = fourier_features(0.0, k);
        assert_eq!(f.len(), 2 * k);
        assert!(f.chunks(2).all(|p| p[0].to_bits() == 0 && p[1] == 1.0));
    }

    let n = 100_000u64;
    let many = sample_records(&index, &cfg, n).unwrap();
    let lights = many.iter().filter(|r| r.component == Component::Light).count() as f64;
    let expected = cfg.p_light * n as f64;
    let sigma = (n as f64 * cfg.p_light * (1.0 - cfg.p_light)).sqrt();
    assert!((lights - expected).abs() <= 3.0 * sigma, "{lights} light draws, expected {expected} +- {}", 3.0 * sigma);
    format!("8 channels, off-mask +0, replay identical, {lights} light draws of {n} (3 sigma = {:.0})", 3.0 * sigma)
}

fn io_roundtrips() -> String {
    let tmp = tempfile::tempdir().unwrap();
    let mut r = rng(9);
    let specials = [0.0, f32::MIN_POSITIVE, 1e-42, 3.5, 65504.0, f32::MAX, 1.0 / 3.0, 1e30];
    let img = LinearImage::from_fn(13, 7, |x, y| {
        let i = (y * 13 + x) % 11;
        std::array::from_fn(|c| if i + c < specials.len() { specials[i + c] } else { r.random_range(0f32..1e3) })
    })
    .unwrap();
    let path = tmp.path().join("img.pfm");
    write_pfm(&img, &path).unwrap();
    let back = read_pfm(&path).unwrap();
    assert_eq!(back.dimensions(), img.dimensions());
    assert!(back.data().iter().zip(img.data()).all(|(a, b)| a.to_bits() == b.to_bits()));

    let plane = Plane::from_fn(9, 5, |_, _| r.random_range(-5.0f32..5.0)).unwrap();
    write_pfm_plane(&plane, tmp.path().join("p.pfm")).unwrap();
    let pb = read_pfm_plane(tmp.path().join("p.pfm")).unwrap();
    assert!(pb.data().iter().zip(plane.data()).all(|(a, b)| a.to_bits() == b.to_bits()));

    let sdr = gray(17, 9, |_, _, _| r.random());
    write_png(&sdr, tmp.path().join("a.png")).unwrap();
    assert_eq!(read_png(tmp.path().join("a.png")).unwrap(), sdr);

    let index = InflatedIndex::from_grid(
        "room",
        Domain::Synthetic,
        &GridSpec::synth_default(),
        &[ToneMapMode::Together, ToneMapMode::Separate],
    )
    .unwrap();
    let mut recs = sample_records(&index, &SamplerConfig { seed: 3, ..SamplerConfig::default() }, 5_000).unwrap();
    for (i, rec) in recs.iter_mut().enumerate().filter(|(i, _)| i % 7 == 0) {
        rec.extra.insert("note".into(), serde_json::json!({"row": i, "tags": ["x", "y"]}));
    }
    let path = tmp.path().join("records.jsonl");
    write_manifest(&recs, &path).unwrap();
    let back: Vec<SampleRecord> = read_manifest(&path).unwrap();
    assert_eq!(back, recs);
    format!("PFM, PFM plane and PNG bit-exact; {} manifest records lossless", recs.len())
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "relight endpoints", limit: Some(Duration::from_secs(1)), run: relight_endpoints },
        Criterion { name: "linearity and monotonicity", limit: Some(Duration::from_secs(10)), run: linearity },
        Criterion { name: "calibration", limit: Some(Duration::from_secs(5)), run: calibration },
        Criterion { name: "disentanglement", limit: None, run: disentanglement },
        Criterion { name: "inflation counts", limit: None, run: inflation_counts },
        Criterion { name: "tone-map behavior", limit: None, run: tonemap_behavior },
        Criterion { name: "E_max quantile", limit: None, run: e_max },
        Criterion { name: "metrics oracle", limit: None, run: metrics },
        Criterion { name: "conditioning", limit: None, run: conditioning },
        Criterion { name: "I/O round-trips", limit: None, run: io_roundtrips },
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run));
        let took = start.elapsed();
        let limit = c.limit.map(|l| format!(" (limit {}s)", l.as_secs())).unwrap_or_default();
        let line = match outcome {
            Ok(detail) if c.limit.is_none_or(|l| took <= l) => format!("PASS {}: {detail} [{took:.2?}]{limit}", c.name),
            Ok(detail) => format!("FAIL {}: too slow, {detail} [{took:.2?}]{limit}", c.name),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                format!("FAIL {}: {msg} [{took:.2?}]{limit}", c.name)
            }
        };
        if line.starts_with("FAIL") {
            failed += 1;
        }
        println!("{line}");
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
