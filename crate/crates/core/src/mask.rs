//! Removal of potentially dynamic objects: pixels inside detection boxes are
//! invalidated before fusion.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::depth::DepthMap;
use crate::error::{Error, Result};

/// Axis-aligned detection in pixel coordinates; `(x, y)` is the top-left
/// corner. A pixel is covered when its center lies inside the box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionBox {
    pub frame_id: u64,
    pub class_id: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskConfig {
    /// Pixels added on every side of a box, in full-resolution pixels.
    pub dilation_px: u32,
    pub min_score: f64,
    /// Classes that are masked; empty masks every class.
    pub classes: Vec<u32>,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            dilation_px: 6,
            min_score: 0.5,
            classes: Vec::new(),
        }
    }
}

/// Integer pixel range `[x0, x1) x [y0, y1)` covered by a box after dilation
/// and clipping; `None` for empty coverage.
fn pixel_span(b: &DetectionBox, dilation: f64, width: usize, height: usize) -> Option<[usize; 4]> {
    if !(b.w > 0.0 && b.h > 0.0) {
        return None;
    }
    let lo_x = b.x - dilation;
    let lo_y = b.y - dilation;
    let hi_x = b.x + b.w + dilation;
    let hi_y = b.y + b.h + dilation;
    // Centers i + 0.5 in [lo, hi)  <=>  i in [ceil(lo - 0.5), ceil(hi - 0.5)).
    let clip = |v: f64, max: usize| v.max(0.0).min(max as f64) as usize;
    let x0 = clip((lo_x - 0.5).ceil(), width);
    let x1 = clip((hi_x - 0.5).ceil(), width);
    let y0 = clip((lo_y - 0.5).ceil(), height);
    let y1 = clip((hi_y - 0.5).ceil(), height);
    (x1 > x0 && y1 > y0).then_some([x0, x1, y0, y1])
}

/// Invalidates every pixel inside any qualifying box (score at least
/// `min_score`, class selected), expanded by `dilation_px` on each side.
pub fn apply_masks(depth: &DepthMap, boxes: &[DetectionBox], cfg: &MaskConfig) -> DepthMap {
    let mut out = depth.clone();
    let (w, h) = (depth.width(), depth.height());
    for b in boxes {
        if b.score < cfg.min_score || (!cfg.classes.is_empty() && !cfg.classes.contains(&b.class_id)) {
            continue;
        }
        if let Some([x0, x1, y0, y1]) = pixel_span(b, cfg.dilation_px as f64, w, h) {
            for j in y0..y1 {
                out.depth[j * w + x0..j * w + x1].fill(0.0);
            }
        }
    }
    out
}

/// Boxes grouped by frame id.
pub type Detections = BTreeMap<u64, Vec<DetectionBox>>;

/// Parses `frame_id class_id x y w h [score]` lines (score defaults to 1).
pub fn parse_detections(text: &str, path: &Path) -> Result<Detections> {
    let mut out = Detections::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 && f.len() != 7 {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("expected 6 or 7 fields, got {}", f.len()),
            ));
        }
        let bad = |what: &str| Error::parse(path, lineno + 1, format!("bad {what}"));
        let frame_id: u64 = f[0].parse().map_err(|_| bad("frame id"))?;
        let class_id: u32 = f[1].parse().map_err(|_| bad("class id"))?;
        let num = |k: usize, what: &str| f[k].parse::<f64>().map_err(|_| bad(what));
        let b = DetectionBox {
            frame_id,
            class_id,
            x: num(2, "x")?,
            y: num(3, "y")?,
            w: num(4, "width")?,
            h: num(5, "height")?,
            score: if f.len() == 7 { num(6, "score")? } else { 1.0 },
        };
        out.entry(frame_id).or_default().push(b);
    }
    Ok(out)
}

pub fn load_detections(path: &Path) -> Result<Detections> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, path)
}

pub fn format_detections<'a>(boxes: impl IntoIterator<Item = &'a DetectionBox>) -> String {
    let mut out = String::new();
    for b in boxes {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {}",
            b.frame_id, b.class_id, b.x, b.y, b.w, b.h, b.score
        );
    }
    out
}
