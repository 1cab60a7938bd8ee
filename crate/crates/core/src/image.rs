//! Grayscale rasters with intensities in `[0, 1]` and 8-bit PGM I/O.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: f32) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[j * self.width + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.data[j * self.width + i] = v;
    }

    /// Bilinear sample at a continuous position (pixel centers at `+0.5`).
    /// `None` unless all four taps are inside the image.
    #[inline]
    pub fn sample(&self, u: f64, v: f64) -> Option<f64> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        // Positions within round-off of the outermost centers are snapped.
        let x = snap(u - 0.5, max_x)?;
        let y = snap(v - 0.5, max_y)?;
        let i0 = (x as usize).min(self.width.saturating_sub(2));
        let j0 = (y as usize).min(self.height.saturating_sub(2));
        let fx = x - i0 as f64;
        let fy = y - j0 as f64;
        let w = self.width;
        let base = j0 * w + i0;
        let (i1, j1) = (
            if self.width > 1 { 1 } else { 0 },
            if self.height > 1 { w } else { 0 },
        );
        let p00 = self.data[base] as f64;
        let p10 = self.data[base + i1] as f64;
        let p01 = self.data[base + j1] as f64;
        let p11 = self.data[base + j1 + i1] as f64;
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        Some(top + (bottom - top) * fy)
    }

    /// 2x2 box filter; an odd trailing row or column is dropped.
    pub fn downsample(&self) -> Image {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for j in 0..h {
            for i in 0..w {
                let s = self.get(2 * i, 2 * j)
                    + self.get(2 * i + 1, 2 * j)
                    + self.get(2 * i, 2 * j + 1)
                    + self.get(2 * i + 1, 2 * j + 1);
                data.push(s * 0.25);
            }
        }
        Image {
            width: w,
            height: h,
            data,
        }
    }

    /// `gain * I + bias` applied per sample.
    pub fn affine(&self, gain: f32, bias: f32) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| gain * v + bias).collect(),
        }
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.data
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Image> {
        let bad = |m: &str| Error::Format {
            format: "PGM",
            message: m.to_string(),
        };
        let mut pos = 0;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
        }
        if tokens[0] != "P5" {
            return Err(bad("expected binary P5 magic"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (w, h, maxval) = (parse(tokens[1])?, parse(tokens[2])?, parse(tokens[3])?);
        if maxval == 0 || maxval > 65535 {
            return Err(bad("maxval out of range"));
        }
        pos += 1;
        let bps = if maxval < 256 { 1 } else { 2 };
        let body = bytes.get(pos..).unwrap_or_default();
        if body.len() < w * h * bps {
            return Err(bad("truncated pixel data"));
        }
        let scale = 1.0 / maxval as f32;
        let data = if bps == 1 {
            body[..w * h].iter().map(|&b| b as f32 * scale).collect()
        } else {
            body[..2 * w * h]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 * scale)
                .collect()
        };
        Image::from_vec(w, h, data)
    }

    pub fn read_pgm(path: &Path) -> Result<Image> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm_bytes(&bytes)
    }
}

#[inline]
fn snap(x: f64, max: f64) -> Option<f64> {
    const EDGE_EPS: f64 = 1e-9;
    if x >= 0.0 && x <= max {
        Some(x)
    } else if x > -EDGE_EPS && x < 0.0 {
        Some(0.0)
    } else if x > max && x < max + EDGE_EPS {
        Some(max)
    } else {
        None
    }
}
