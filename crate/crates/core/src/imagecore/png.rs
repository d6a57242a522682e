//! 8-bit PNG I/O. Color images must be RGB without alpha; masks must be
//! single-channel grayscale. Anything else is rejected rather than converted.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use super::buffers::SdrImage;
use crate::error::{Error, Result};

/// Raw 8-bit grayscale pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

fn decode_raw(bytes: &[u8], want: ColorType) -> Result<(usize, usize, Vec<u8>)> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(0, format!("PNG decode: {e}")))?;
    let info = reader.info();
    let (color, depth) = (info.color_type, info.bit_depth);
    if depth != BitDepth::Eight {
        return Err(Error::format(0, format!("PNG bit depth {depth:?}, expected 8-bit")));
    }
    if color != want {
        return Err(Error::format(0, format!("PNG color type {color:?}, expected {want:?}")));
    }
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(0, format!("PNG decode: {e}")))?;
    buf.truncate(frame.buffer_size());
    Ok((frame.width as usize, frame.height as usize, buf))
}

fn encode_raw(width: usize, height: usize, data: &[u8], color: ColorType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::invalid(format!("PNG encode: {e}")))?;
        writer
            .write_image_data(data)
            .map_err(|e| Error::invalid(format!("PNG encode: {e}")))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<SdrImage> {
    let (w, h, data) = decode_raw(bytes, ColorType::Rgb)?;
    SdrImage::new(w, h, data)
}

pub fn encode_png(img: &SdrImage) -> Result<Vec<u8>> {
    encode_raw(img.width(), img.height(), img.data(), ColorType::Rgb)
}

pub fn decode_png_gray(bytes: &[u8]) -> Result<GrayImage> {
    let (width, height, data) = decode_raw(bytes, ColorType::Grayscale)?;
    Ok(GrayImage {
        width,
        height,
        data,
    })
}

pub fn encode_png_gray(img: &GrayImage) -> Result<Vec<u8>> {
    if img.width * img.height != img.data.len() || img.data.is_empty() {
        return Err(Error::invalid("gray image size does not match its data"));
    }
    encode_raw(img.width, img.height, &img.data, ColorType::Grayscale)
}

pub fn read_png(path: impl AsRef<Path>) -> Result<SdrImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_png(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_png(img: &SdrImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_png(img)?).map_err(|e| Error::from(e).in_file(path))
}

pub fn read_png_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_png_gray(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_png_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_png_gray(img)?).map_err(|e| Error::from(e).in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_roundtrip() {
        let img = SdrImage::new(3, 2, (0..18).map(|i| (i * 13) as u8).collect()).unwrap();
        assert_eq!(decode_png(&encode_png(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn gray_is_not_rgb() {
        let g = GrayImage {
            width: 2,
            height: 1,
            data: vec![0, 255],
        };
        let bytes = encode_png_gray(&g).unwrap();
        assert!(matches!(decode_png(&bytes), Err(Error::Format { .. })));
        assert_eq!(decode_png_gray(&bytes).unwrap(), g);
    }

    #[test]
    fn garbage_rejected() {
        assert!(decode_png(b"not a png").is_err());
    }
}
