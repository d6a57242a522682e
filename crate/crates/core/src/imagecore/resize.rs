use super::buffers::{LinearImage, Plane};
use crate::error::{Error, Result};

/// Source coordinate and blend weight for one output index, half-pixel centered.
fn taps(out: usize, n_in: usize, n_out: usize) -> (usize, usize, f64) {
    let src = ((out as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
    let i0 = src.floor() as usize;
    let i1 = (i0 + 1).min(n_in - 1);
    (i0, i1, src - i0 as f64)
}

fn lerp(a: f32, b: f32, t: f64) -> f64 {
    f64::from(a) + t * (f64::from(b) - f64::from(a))
}

fn resize_plane_data(data: &[f32], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f32> {
    let xt: Vec<_> = (0..out_w).map(|x| taps(x, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, ty) = taps(y, h, out_h);
        let (r0, r1) = (&data[y0 * w..(y0 + 1) * w], &data[y1 * w..(y1 + 1) * w]);
        for &(x0, x1, tx) in &xt {
            let top = lerp(r0[x0], r0[x1], tx);
            let bottom = lerp(r1[x0], r1[x1], tx);
            let lo = r0[x0].min(r0[x1]).min(r1[x0]).min(r1[x1]);
            let hi = r0[x0].max(r0[x1]).max(r1[x0]).max(r1[x1]);
            let v = (top + ty * (bottom - top)) as f32;
            out.push(v.clamp(lo, hi));
        }
    }
    out
}

/// Bilinear resampling with half-pixel-centered coordinates and edge clamping.
pub fn resize_bilinear(p: &Plane, out_w: usize, out_h: usize) -> Result<Plane> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid(format!("target size {out_w}x{out_h} must be at least 1x1")));
    }
    if p.dimensions() == (out_w, out_h) {
        return Ok(p.clone());
    }
    let data = resize_plane_data(p.data(), p.width(), p.height(), out_w, out_h);
    Ok(Plane::from_vec_unchecked(out_w, out_h, data))
}

/// Per-channel [`resize_bilinear`].
pub fn resize_image_bilinear(img: &LinearImage, out_w: usize, out_h: usize) -> Result<LinearImage> {
    let [r, g, b] = img.channels();
    LinearImage::from_channels(&[
        resize_bilinear(&r, out_w, out_h)?,
        resize_bilinear(&g, out_w, out_h)?,
        resize_bilinear(&b, out_w, out_h)?,
    ])
}
