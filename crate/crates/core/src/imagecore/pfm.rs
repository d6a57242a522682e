//! Portable float map I/O.
//!
//! Color files (`PF`) carry [`LinearImage`]s and grayscale files (`Pf`) carry
//! [`Plane`]s. The header is ASCII: magic, width and height, then a scale
//! whose sign gives the byte order (negative = little-endian), each followed
//! by whitespace. Rows are stored bottom-to-top. Writers always emit
//! little-endian with scale `-1.0`, so a write/read cycle is bit-exact.

use std::fs;
use std::path::Path;

use super::buffers::{LinearImage, Plane};
use crate::error::{Error, Result};

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    little_endian: bool,
    payload_offset: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Reads a whitespace-terminated token and consumes exactly one terminator byte.
    fn token(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.skip_whitespace();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::format(start, format!("expected {what}, found end of header")));
        }
        if self.pos >= self.bytes.len() {
            return Err(Error::format(self.pos, format!("header ends inside {what}")));
        }
        let tok = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::format(start, format!("{what} is not ASCII")))?;
        self.pos += 1;
        Ok((start, tok))
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut cur = Cursor { bytes, pos: 0 };
    let (at, magic) = cur.token("magic")?;
    let channels = match magic {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::format(at, format!("bad magic {other:?}, expected PF or Pf"))),
    };
    let mut dim = |what: &str| -> Result<usize> {
        let (at, tok) = cur.token(what)?;
        match tok.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::format(at, format!("{what} {tok:?} is not a positive integer"))),
        }
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let (at, tok) = cur.token("scale")?;
    let scale: f64 = tok
        .parse()
        .map_err(|_| Error::format(at, format!("scale {tok:?} is not a number")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(at, "scale must be finite and nonzero"));
    }
    Ok(Header {
        channels,
        width,
        height,
        little_endian: scale < 0.0,
        payload_offset: cur.pos,
    })
}

/// Decodes the payload into top-to-bottom row order.
fn decode_payload(bytes: &[u8], h: &Header) -> Result<Vec<f32>> {
    let row_len = h.width * h.channels;
    let needed = row_len * h.height * 4;
    let payload = &bytes[h.payload_offset..];
    if payload.len() < needed {
        return Err(Error::format(
            bytes.len(),
            format!("payload truncated: need {needed} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > needed {
        return Err(Error::format(
            h.payload_offset + needed,
            format!("{} trailing bytes after payload", payload.len() - needed),
        ));
    }
    let mut out = vec![0f32; row_len * h.height];
    for (file_row, chunk) in payload.chunks_exact(row_len * 4).enumerate() {
        let y = h.height - 1 - file_row;
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            out[y * row_len + i] = if h.little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    Ok(out)
}

fn check_samples(values: &[f32], h: &Header, nonnegative: bool) -> Result<()> {
    let row_len = h.width * h.channels;
    if let Some(i) = values
        .iter()
        .position(|v| !v.is_finite() || (nonnegative && *v < 0.0))
    {
        let (y, col) = (i / row_len, i % row_len);
        let file_row = h.height - 1 - y;
        let offset = h.payload_offset + (file_row * row_len + col) * 4;
        return Err(Error::format(
            offset,
            format!("sample value {} is not a valid radiance", values[i]),
        ));
    }
    Ok(())
}

fn encode(width: usize, height: usize, channels: usize, data: &[f32]) -> Vec<u8> {
    let magic = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(data.len() * 4);
    let row_len = width * channels;
    for y in (0..height).rev() {
        for v in &data[y * row_len..(y + 1) * row_len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<LinearImage> {
    let h = parse_header(bytes)?;
    if h.channels != 3 {
        return Err(Error::format(0, "grayscale PFM (Pf) where a color image (PF) is required"));
    }
    let data = decode_payload(bytes, &h)?;
    check_samples(&data, &h, true)?;
    Ok(LinearImage::from_vec_unchecked(h.width, h.height, data))
}

pub fn encode_pfm(img: &LinearImage) -> Vec<u8> {
    encode(img.width(), img.height(), 3, img.data())
}

pub fn decode_pfm_plane(bytes: &[u8]) -> Result<Plane> {
    let h = parse_header(bytes)?;
    if h.channels != 1 {
        return Err(Error::format(0, "color PFM (PF) where a single-channel plane (Pf) is required"));
    }
    let data = decode_payload(bytes, &h)?;
    check_samples(&data, &h, false)?;
    Ok(Plane::from_vec_unchecked(h.width, h.height, data))
}

pub fn encode_pfm_plane(p: &Plane) -> Vec<u8> {
    encode(p.width(), p.height(), 1, p.data())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<LinearImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_pfm(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_pfm(img: &LinearImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pfm(img)).map_err(|e| Error::from(e).in_file(path))
}

pub fn read_pfm_plane(path: impl AsRef<Path>) -> Result<Plane> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_pfm_plane(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_pfm_plane(p: &Plane, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pfm_plane(p)).map_err(|e| Error::from(e).in_file(path))
}
