//! Depth maps: per-pixel range along the viewing ray (0 = invalid) together
//! with the best and second-best matching costs that produced it.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    pub depth: Vec<f32>,
    pub best_cost: Vec<f32>,
    pub second_cost: Vec<f32>,
}

impl DepthMap {
    /// All pixels invalid.
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
            best_cost: vec![1.0; width * height],
            second_cost: vec![1.0; width * height],
        }
    }

    /// Wraps externally produced ranges (ground truth, PFM files). Costs are set
    /// to a perfect, unambiguous match.
    pub fn from_depth(width: usize, height: usize, depth: Vec<f32>) -> Result<Self> {
        if depth.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} depths for a {width}x{height} map",
                depth.len()
            )));
        }
        let depth = depth
            .into_iter()
            .map(|d| if d.is_finite() && d > 0.0 { d } else { 0.0 })
            .collect();
        Ok(Self {
            width,
            height,
            depth,
            best_cost: vec![0.0; width * height],
            second_cost: vec![1.0; width * height],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    #[inline]
    pub fn is_valid(&self, idx: usize) -> bool {
        self.depth[idx] > 0.0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.depth[j * self.width + i]
    }

    #[inline]
    pub fn invalidate(&mut self, idx: usize) {
        self.depth[idx] = 0.0;
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0.0).count()
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.depth.iter().map(|&d| d > 0.0).collect()
    }

    pub fn same_shape(&self, other: &DepthMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Sub-rectangle `[x0, x0+w) x [y0, y0+h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> DepthMap {
        let mut out = DepthMap::invalid(w, h);
        for j in 0..h {
            let src = (y0 + j) * self.width + x0;
            let dst = j * w;
            out.depth[dst..dst + w].copy_from_slice(&self.depth[src..src + w]);
            out.best_cost[dst..dst + w].copy_from_slice(&self.best_cost[src..src + w]);
            out.second_cost[dst..dst + w].copy_from_slice(&self.second_cost[src..src + w]);
        }
        out
    }

    /// Portable float map (`Pf`, little-endian, rows stored bottom to top).
    pub fn to_pfm_bytes(&self) -> Vec<u8> {
        let mut out = format!("Pf\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        out.reserve(self.depth.len() * 4);
        for j in (0..self.height).rev() {
            for &d in &self.depth[j * self.width..(j + 1) * self.width] {
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
        out
    }

    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pfm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_pfm_bytes(bytes: &[u8]) -> Result<DepthMap> {
        let bad = |m: &str| Error::Format {
            format: "PFM",
            message: m.to_string(),
        };
        let mut lines = Vec::with_capacity(3);
        let mut pos = 0;
        while lines.len() < 3 {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("truncated header"))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("non-ascii header"))?;
            lines.push(line.trim().to_string());
            pos += end + 1;
        }
        if lines[0] != "Pf" {
            return Err(bad("only single-channel `Pf` maps are supported"));
        }
        let dims: Vec<usize> = lines[1]
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("bad dimensions")))
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(bad("bad dimensions"));
        }
        let (w, h) = (dims[0], dims[1]);
        let scale: f32 = lines[2].parse().map_err(|_| bad("bad scale"))?;
        let little = scale < 0.0;
        let body = &bytes[pos..];
        if body.len() < w * h * 4 {
            return Err(bad("truncated data"));
        }
        let mut depth = vec![0.0f32; w * h];
        for (k, chunk) in body[..w * h * 4].chunks_exact(4).enumerate() {
            let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            let (row, col) = (k / w, k % w);
            depth[(h - 1 - row) * w + col] = v;
        }
        DepthMap::from_depth(w, h, depth)
    }

    pub fn read_pfm(path: &Path) -> Result<DepthMap> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pfm_bytes(&bytes)
    }
}
