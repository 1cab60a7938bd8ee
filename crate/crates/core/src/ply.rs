//! Point clouds and PLY export (`x y z`, optional per-point weight).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub weights: Option<Vec<f32>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

impl std::str::FromStr for PlyFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ascii" => Ok(PlyFormat::Ascii),
            "binary" | "binary_little_endian" => Ok(PlyFormat::BinaryLittleEndian),
            other => Err(Error::Config(format!("unknown PLY format `{other}`"))),
        }
    }
}

impl PointCloud {
    pub fn from_points(points: Vec<Vec3>) -> Self {
        Self { points, weights: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Drops the weights.
    pub fn without_weights(mut self) -> Self {
        self.weights = None;
        self
    }

    pub fn to_ply_bytes(&self, format: PlyFormat) -> Vec<u8> {
        let weights = self.weights.as_deref().filter(|w| w.len() == self.points.len());
        let mut header = String::from("ply\n");
        header += match format {
            PlyFormat::Ascii => "format ascii 1.0\n",
            PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
        };
        let _ = writeln!(header, "element vertex {}", self.points.len());
        header += "property float x\nproperty float y\nproperty float z\n";
        if weights.is_some() {
            header += "property float weight\n";
        }
        header += "end_header\n";
        let mut out = header.into_bytes();
        match format {
            PlyFormat::Ascii => {
                let mut line = String::new();
                for (k, p) in self.points.iter().enumerate() {
                    line.clear();
                    let _ = write!(line, "{} {} {}", p.x as f32, p.y as f32, p.z as f32);
                    if let Some(w) = weights {
                        let _ = write!(line, " {}", w[k]);
                    }
                    line.push('\n');
                    out.extend_from_slice(line.as_bytes());
                }
            }
            PlyFormat::BinaryLittleEndian => {
                for (k, p) in self.points.iter().enumerate() {
                    for c in [p.x, p.y, p.z] {
                        out.extend_from_slice(&(c as f32).to_le_bytes());
                    }
                    if let Some(w) = weights {
                        out.extend_from_slice(&w[k].to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn write_ply(&self, path: &Path, format: PlyFormat) -> Result<()> {
        std::fs::write(path, self.to_ply_bytes(format)).map_err(|e| Error::io(path, e))
    }

    /// Reads vertex positions (and a `weight` property if present) from an
    /// ASCII or binary little-endian PLY with float properties.
    pub fn from_ply_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Format { format: "PLY", message: m };
        let end = find(bytes, b"end_header\n").ok_or_else(|| bad("missing end_header".into()))?;
        let body_start = end + b"end_header\n".len();
        let header = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8".into()))?;
        let mut lines = header.lines();
        if lines.next() != Some("ply") {
            return Err(bad("missing `ply` magic".into()));
        }
        let mut format = None;
        let mut count = None;
        let mut props: Vec<String> = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
                ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
                ["format", other, _] => return Err(bad(format!("unsupported format `{other}`"))),
                ["element", "vertex", n] => {
                    count = Some(n.parse::<usize>().map_err(|_| bad(format!("bad vertex count `{n}`")))?)
                }
                ["element", other, _] => return Err(bad(format!("unsupported element `{other}`"))),
                ["property", "float" | "float32", name] => props.push(name.to_string()),
                ["property", ty, _] => return Err(bad(format!("unsupported property type `{ty}`"))),
                ["comment", ..] | [] => {}
                _ => return Err(bad(format!("unexpected header line `{line}`"))),
            }
        }
        let format = format.ok_or_else(|| bad("missing format line".into()))?;
        let count = count.ok_or_else(|| bad("missing vertex element".into()))?;
        let pos = |name: &str| props.iter().position(|p| p == name);
        let (ix, iy, iz) = match (pos("x"), pos("y"), pos("z")) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(bad("vertex needs x, y and z".into())),
        };
        let iw = pos("weight");
        let n = props.len();
        let mut values: Vec<f32> = Vec::with_capacity(count * n);
        let body = &bytes[body_start..];
        match format {
            PlyFormat::Ascii => {
                let text = std::str::from_utf8(body).map_err(|_| bad("body is not UTF-8".into()))?;
                for tok in text.split_whitespace() {
                    values.push(tok.parse().map_err(|_| bad(format!("bad number `{tok}`")))?);
                }
            }
            PlyFormat::BinaryLittleEndian => {
                for c in body.chunks_exact(4) {
                    values.push(f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
                }
            }
        }
        if values.len() < count * n {
            return Err(bad(format!("expected {} values, found {}", count * n, values.len())));
        }
        let mut cloud = PointCloud::default();
        let mut weights = Vec::new();
        for row in values.chunks_exact(n).take(count) {
            cloud
                .points
                .push(Vec3::new(row[ix] as f64, row[iy] as f64, row[iz] as f64));
            if let Some(w) = iw {
                weights.push(row[w]);
            }
        }
        if iw.is_some() {
            cloud.weights = Some(weights);
        }
        Ok(cloud)
    }

    pub fn read_ply(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_ply_bytes(&bytes)
    }
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> PointCloud {
        PointCloud {
            points: vec![Vec3::new(1.0, -2.5, 0.125), Vec3::new(0.1, 0.2, 3.0)],
            weights: Some(vec![3.0, 7.0]),
        }
    }

    #[test]
    fn round_trips_both_formats() {
        let c = cloud();
        for f in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let back = PointCloud::from_ply_bytes(&c.to_ply_bytes(f)).unwrap();
            assert_eq!(back.weights, c.weights);
            for (a, b) in back.points.iter().zip(&c.points) {
                assert!((a - b).norm() < 1e-6);
            }
        }
        let plain = c.clone().without_weights();
        let back = PointCloud::from_ply_bytes(&plain.to_ply_bytes(PlyFormat::Ascii)).unwrap();
        assert_eq!(back.weights, None);
    }

    #[test]
    fn header_is_standard() {
        let text = String::from_utf8(cloud().to_ply_bytes(PlyFormat::Ascii)).unwrap();
        assert!(text.starts_with("ply\nformat ascii 1.0\nelement vertex 2\n"));
        assert!(text.contains("property float weight\nend_header\n1 -2.5 0.125 3\n"));
    }

    #[test]
    fn rejects_garbage() {
        assert!(PointCloud::from_ply_bytes(b"hello").is_err());
        assert!(PointCloud::from_ply_bytes(b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1\n").is_err());
    }
}
