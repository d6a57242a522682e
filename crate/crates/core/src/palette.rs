//! Blackbody light colors in linear sRGB.
//!
//! Planck's law is integrated against an analytic multi-lobe Gaussian fit of
//! the CIE 1931 2° color matching functions (Wyman, Sloan and Shirley, 2013),
//! converted to linear sRGB, clipped at zero and scaled so the largest
//! channel is one.

use crate::imagecore::Rgb;

/// Temperatures offered as light-color presets.
pub const PRESET_TEMPERATURES: [f64; 4] = [2500.0, 3500.0, 5000.0, 6500.0];

pub const NEUTRAL: Rgb = [1.0, 1.0, 1.0];

fn lobe(lambda: f64, mu: f64, s1: f64, s2: f64) -> f64 {
    let s = if lambda < mu { s1 } else { s2 };
    let t = (lambda - mu) / s;
    (-0.5 * t * t).exp()
}

/// CIE 1931 color matching functions at `lambda` nanometers.
pub fn cie_xyz_bar(lambda: f64) -> [f64; 3] {
    let x = 1.056 * lobe(lambda, 599.8, 37.9, 31.0) + 0.362 * lobe(lambda, 442.0, 16.0, 26.7)
        - 0.065 * lobe(lambda, 501.1, 20.4, 26.2);
    let y = 0.821 * lobe(lambda, 568.8, 46.9, 40.5) + 0.286 * lobe(lambda, 530.9, 16.3, 31.1);
    let z = 1.217 * lobe(lambda, 437.0, 11.8, 36.0) + 0.681 * lobe(lambda, 459.0, 26.0, 13.8);
    [x, y, z]
}

/// Relative spectral radiance of a blackbody (constant factors dropped).
fn planck(lambda_nm: f64, kelvin: f64) -> f64 {
    const C2: f64 = 1.438_776_877e-2; // h c / k in m K
    let l = lambda_nm * 1e-9;
    1.0 / (l.powi(5) * ((C2 / (l * kelvin)).exp() - 1.0))
}

const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.2406, -1.5372, -0.4986],
    [-0.9689, 1.8758, 0.0415],
    [0.0557, -0.2040, 1.0570],
];

/// Linear sRGB color of a blackbody at `kelvin`, max channel = 1.
pub fn blackbody_rgb(kelvin: f64) -> Rgb {
    let mut xyz = [0f64; 3];
    let mut lambda = 380.0;
    while lambda <= 780.0 {
        let b = planck(lambda, kelvin);
        let bar = cie_xyz_bar(lambda);
        for c in 0..3 {
            xyz[c] += b * bar[c];
        }
        lambda += 1.0;
    }
    let rgb: [f64; 3] = std::array::from_fn(|r| {
        (0..3)
            .map(|c| XYZ_TO_SRGB[r][c] * xyz[c])
            .sum::<f64>()
            .max(0.0)
    });
    let max = rgb.iter().copied().fold(0.0, f64::max);
    rgb.map(|v| (v / max) as f32)
}

/// Neutral white followed by the preset temperatures.
pub fn preset_palette() -> Vec<(String, Rgb)> {
    std::iter::once(("neutral".to_string(), NEUTRAL))
        .chain(
            PRESET_TEMPERATURES
                .iter()
                .map(|&k| (format!("{k}K"), blackbody_rgb(k))),
        )
        .collect()
}

pub fn is_neutral(c: Rgb) -> bool {
    let max = c.iter().copied().fold(0.0f32, f32::max);
    c.iter().all(|v| (max - v).abs() <= 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warm_to_cool_ordering() {
        let mut last_blue_ratio = 0.0;
        for k in [2000.0, 2500.0, 3500.0, 5000.0, 6500.0] {
            let c = blackbody_rgb(k);
            assert_eq!(c.iter().copied().fold(0.0, f32::max), 1.0);
            assert!(c.iter().all(|v| *v > 0.0), "{k}: {c:?}");
            let ratio = c[2] / c[0];
            assert!(ratio > last_blue_ratio);
            last_blue_ratio = ratio;
        }
    }

    #[test]
    fn incandescent_is_orange_daylight_is_near_white() {
        let warm = blackbody_rgb(2500.0);
        assert_eq!(warm[0], 1.0);
        assert!(warm[1] > 0.25 && warm[1] < 0.5, "{warm:?}");
        assert!(warm[2] < 0.15, "{warm:?}");
        let day = blackbody_rgb(6500.0);
        assert!(day.iter().all(|v| *v > 0.85), "{day:?}");
    }

    #[test]
    fn frozen_values() {
        let cases = [
            (2500.0, [1.0, 0.38034, 0.06774]),
            (3500.0, [1.0, 0.57675, 0.2605]),
            (5000.0, [1.0, 0.79536, 0.6296]),
            (6500.0, [1.0, 0.94427, 0.9922]),
        ];
        for (k, want) in cases {
            let got = blackbody_rgb(k);
            for c in 0..3 {
                assert!((got[c] - want[c]).abs() < 1e-4, "{k}: {got:?}");
            }
        }
    }

    #[test]
    fn cmf_peaks() {
        // y-bar peaks near 555 nm with value close to 1
        let y555 = cie_xyz_bar(555.0)[1];
        assert!((y555 - 1.0).abs() < 0.03, "{y555}");
        assert!(cie_xyz_bar(555.0)[1] > cie_xyz_bar(500.0)[1]);
    }

    #[test]
    fn neutral_detection() {
        assert!(is_neutral(NEUTRAL));
        assert!(!is_neutral(blackbody_rgb(2500.0)));
        assert_eq!(preset_palette().len(), 5);
    }
}
