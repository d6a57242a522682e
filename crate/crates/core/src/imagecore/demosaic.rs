use super::buffers::{BayerMosaic, LinearImage};

/// Mirror index across the border without repeating the edge sample, so
/// `-1 -> 1` and `n -> n - 2`. Even-sized mosaics keep their CFA phase.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

/// Bilinear demosaic: CFA samples pass through, missing channels are the mean
/// of the nearest same-color neighbors (4-neighborhood for green, the pair
/// along the row or column for red/blue at green sites, diagonals for
/// red/blue at the opposite chroma site).
pub fn demosaic_bilinear(mosaic: &BayerMosaic) -> LinearImage {
    let (w, h) = (mosaic.width(), mosaic.height());
    let pattern = mosaic.pattern();
    let at = |x: isize, y: isize| mosaic.get(reflect(x, w), reflect(y, h));
    let mut data = Vec::with_capacity(w * h * 3);

    for y in 0..h {
        for x in 0..w {
            let site = pattern.channel_at(x, y);
            let (xi, yi) = (x as isize, y as isize);
            for c in 0..3 {
                let v = if c == site {
                    mosaic.get(x, y)
                } else if c == 1 {
                    (at(xi - 1, yi) + at(xi + 1, yi) + at(xi, yi - 1) + at(xi, yi + 1)) / 4.0
                } else if site == 1 {
                    if pattern.channel_at(reflect(xi + 1, w), y) == c {
                        (at(xi - 1, yi) + at(xi + 1, yi)) / 2.0
                    } else {
                        (at(xi, yi - 1) + at(xi, yi + 1)) / 2.0
                    }
                } else {
                    (at(xi - 1, yi - 1) + at(xi + 1, yi - 1) + at(xi - 1, yi + 1) + at(xi + 1, yi + 1))
                        / 4.0
                };
                data.push(v);
            }
        }
    }
    LinearImage::from_vec_unchecked(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::CfaPattern;

    #[test]
    fn reflect_keeps_parity() {
        assert_eq!(reflect(-1, 4), 1);
        assert_eq!(reflect(4, 4), 2);
        assert_eq!(reflect(2, 2), 0);
        assert_eq!(reflect(3, 4), 3);
    }

    #[test]
    fn constant_mosaic_is_gray() {
        for pattern in [CfaPattern::Rggb, CfaPattern::Bggr, CfaPattern::Grbg, CfaPattern::Gbrg] {
            let m = BayerMosaic::new(6, 4, vec![0.375; 24], pattern).unwrap();
            assert!(demosaic_bilinear(&m).data().iter().all(|&v| v == 0.375));
        }
    }

    #[test]
    fn minimal_tile() {
        // R=1 G=2
        // G=4 B=8
        let m = BayerMosaic::new(2, 2, vec![1.0, 2.0, 4.0, 8.0], CfaPattern::Rggb).unwrap();
        let img = demosaic_bilinear(&m);
        assert_eq!(img.pixel(0, 0), [1.0, 3.0, 8.0]);
        assert_eq!(img.pixel(1, 1), [1.0, 3.0, 8.0]);
        assert_eq!(img.pixel(1, 0), [1.0, 2.0, 8.0]);
        assert_eq!(img.pixel(0, 1), [1.0, 4.0, 8.0]);
    }
}
