//! Truncated signed distance volume on hashed 8x8x8 voxel blocks.
//!
//! Blocks are allocated along the truncation band of every depth ray, fused
//! with a weight-capped running average, archived when they leave the local
//! box around the vehicle and swapped back in when they re-enter it.

mod hash;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{FisheyeCamera, Pose, Vec3};
use crate::ply::PointCloud;

use hash::BlockHash;

/// Voxels per block edge.
pub const BLOCK_DIM: usize = 8;
pub const BLOCK_VOXELS: usize = BLOCK_DIM * BLOCK_DIM * BLOCK_DIM;

pub type BlockCoord = [i32; 3];

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Voxel {
    /// Signed distance normalized by the truncation distance, in `[-1, 1]`.
    pub tsdf: f32,
    /// Number of fused observations, capped at the volume's `w_max`.
    pub weight: u16,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelBlock {
    pub coord: BlockCoord,
    /// Indexed by [`voxel_index`].
    pub voxels: Vec<Voxel>,
    /// Frames whose integration updated at least one voxel of the block.
    pub observation_count: u32,
}

impl VoxelBlock {
    pub fn new(coord: BlockCoord) -> Self {
        Self {
            coord,
            voxels: vec![Voxel::default(); BLOCK_VOXELS],
            observation_count: 0,
        }
    }
}

#[inline]
pub fn voxel_index(i: usize, j: usize, k: usize) -> usize {
    i + BLOCK_DIM * (j + BLOCK_DIM * k)
}

/// Axis-aligned box given by center and half extents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalBox {
    pub center: Vec3,
    pub half: Vec3,
}

impl LocalBox {
    #[inline]
    pub fn contains(&self, p: &Vec3) -> bool {
        let d = p - self.center;
        d.x.abs() <= self.half.x && d.y.abs() <= self.half.y && d.z.abs() <= self.half.z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsdfConfig {
    pub voxel_size: f64,
    pub mu: f64,
    pub w_max: u16,
    /// Full edge lengths of the local box.
    pub local_size: Vec3,
}

impl Default for TsdfConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.05,
            mu: 0.2,
            w_max: 100,
            local_size: Vec3::new(60.0, 60.0, 3.0),
        }
    }
}

impl TsdfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0) || !(self.mu > 0.0) {
            return Err(Error::Config("voxel size and truncation distance must be positive".into()));
        }
        if self.w_max == 0 {
            return Err(Error::Config("w_max must be positive".into()));
        }
        if !(self.local_size.min() > 0.0) {
            return Err(Error::Config("local box must have positive extent".into()));
        }
        Ok(())
    }

    pub fn block_size(&self) -> f64 {
        self.voxel_size * BLOCK_DIM as f64
    }
}

/// Statistics of one integration pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IntegrateStats {
    pub blocks_touched: usize,
    pub voxels_updated: usize,
}

#[derive(Clone, Debug)]
pub struct TsdfVolume {
    cfg: TsdfConfig,
    local_box: LocalBox,
    active: BlockHash,
    inactive: BTreeMap<BlockCoord, VoxelBlock>,
    /// Blocks on some ray segment of the last allocated frame, in visit order.
    visible: Vec<BlockCoord>,
}

impl TsdfVolume {
    pub fn new(cfg: TsdfConfig, center: Vec3) -> Result<Self> {
        cfg.validate()?;
        let half = cfg.local_size / 2.0;
        Ok(Self {
            cfg,
            local_box: LocalBox { center, half },
            active: BlockHash::default(),
            inactive: BTreeMap::new(),
            visible: Vec::new(),
        })
    }

    pub fn config(&self) -> &TsdfConfig {
        &self.cfg
    }

    pub fn voxel_size(&self) -> f64 {
        self.cfg.voxel_size
    }

    pub fn mu(&self) -> f64 {
        self.cfg.mu
    }

    pub fn local_box(&self) -> &LocalBox {
        &self.local_box
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn inactive_count(&self) -> usize {
        self.inactive.len()
    }

    pub fn visible(&self) -> &[BlockCoord] {
        &self.visible
    }

    pub fn active_block(&self, c: &BlockCoord) -> Option<&VoxelBlock> {
        self.active.get(c)
    }

    pub fn inactive_block(&self, c: &BlockCoord) -> Option<&VoxelBlock> {
        self.inactive.get(c)
    }

    /// Active or archived block.
    pub fn block(&self, c: &BlockCoord) -> Option<&VoxelBlock> {
        self.active.get(c).or_else(|| self.inactive.get(c))
    }

    pub fn active_coords(&self) -> BTreeSet<BlockCoord> {
        self.active.blocks().iter().map(|b| b.coord).collect()
    }

    pub fn inactive_coords(&self) -> BTreeSet<BlockCoord> {
        self.inactive.keys().copied().collect()
    }

    /// World position of the center of block `c`.
    pub fn block_center(&self, c: &BlockCoord) -> Vec3 {
        let b = self.cfg.block_size();
        Vec3::new(
            (c[0] as f64 + 0.5) * b,
            (c[1] as f64 + 0.5) * b,
            (c[2] as f64 + 0.5) * b,
        )
    }

    /// World position of voxel `(i, j, k)` of block `c`.
    pub fn voxel_center(&self, c: &BlockCoord, i: usize, j: usize, k: usize) -> Vec3 {
        let v = self.cfg.voxel_size;
        let d = BLOCK_DIM as i64;
        Vec3::new(
            ((c[0] as i64 * d + i as i64) as f64 + 0.5) * v,
            ((c[1] as i64 * d + j as i64) as f64 + 0.5) * v,
            ((c[2] as i64 * d + k as i64) as f64 + 0.5) * v,
        )
    }

    pub fn block_of(&self, p: &Vec3) -> BlockCoord {
        let b = self.cfg.block_size();
        [
            (p.x / b).floor() as i32,
            (p.y / b).floor() as i32,
            (p.z / b).floor() as i32,
        ]
    }

    /// Allocates the blocks crossed by the truncation band `[d - mu, d + mu]`
    /// of every valid pixel and records them as the visible set. Archived
    /// blocks on a band are swapped back in. Returns the newly created blocks.
    pub fn allocate(&mut self, d: &DepthMap, cam: &FisheyeCamera, world_to_cam: &Pose) -> Vec<BlockCoord> {
        self.visible.clear();
        if d.width() != cam.width() || d.height() != cam.height() {
            return Vec::new();
        }
        let cam_to_world = world_to_cam.inverse();
        let origin = *cam_to_world.translation();
        let mut created = Vec::new();
        let mut seen: BTreeSet<BlockCoord> = BTreeSet::new();
        let mut path = Vec::new();
        let mu = self.cfg.mu;
        for j in 0..d.height() {
            for i in 0..d.width() {
                let k = d.index(i, j);
                if !d.is_valid(k) {
                    continue;
                }
                let Some(ray) = cam.pixel_ray(i, j) else {
                    continue;
                };
                let depth = d.depth[k] as f64;
                let dir = cam_to_world.rotate(&ray);
                let a = origin + dir * (depth - mu).max(0.0);
                let b = origin + dir * (depth + mu);
                path.clear();
                traverse_blocks(&a, &b, self.cfg.block_size(), &mut path);
                for c in &path {
                    if !seen.insert(*c) || !self.local_box.contains(&self.block_center(c)) {
                        continue;
                    }
                    if self.active.index_of(c).is_none() {
                        match self.inactive.remove(c) {
                            Some(block) => {
                                self.active.insert(block);
                            }
                            None => {
                                self.active.insert(VoxelBlock::new(*c));
                                created.push(*c);
                            }
                        }
                    }
                    self.visible.push(*c);
                }
            }
        }
        created
    }

    /// Fuses `d` into every visible block.
    pub fn integrate(&mut self, d: &DepthMap, cam: &FisheyeCamera, world_to_cam: &Pose) -> IntegrateStats {
        if d.width() != cam.width() || d.height() != cam.height() {
            return IntegrateStats::default();
        }
        let mut todo = vec![false; self.active.len()];
        for c in &self.visible {
            if let Some(i) = self.active.index_of(c) {
                todo[i] = true;
            }
        }
        let cfg = &self.cfg;
        let updated: Vec<usize> = self
            .active
            .blocks_mut()
            .par_iter_mut()
            .zip(todo.par_iter())
            .filter(|(_, &t)| t)
            .map(|(block, _)| integrate_block(block, d, cam, world_to_cam, cfg))
            .collect();
        IntegrateStats {
            blocks_touched: updated.iter().filter(|&&n| n > 0).count(),
            voxels_updated: updated.iter().sum(),
        }
    }

    /// Re-centers the local box and archives active blocks whose centers left
    /// it. Returns the number of archived blocks.
    pub fn prune_and_swap(&mut self, vehicle_position: &Vec3) -> usize {
        self.local_box.center = *vehicle_position;
        let outside: Vec<BlockCoord> = self
            .active
            .blocks()
            .iter()
            .map(|b| b.coord)
            .filter(|c| !self.local_box.contains(&self.block_center(c)))
            .collect();
        for c in &outside {
            let block = self.active.remove(c).expect("listed block is active");
            self.inactive.insert(*c, block);
        }
        self.visible.retain(|c| !outside.contains(c));
        outside.len()
    }

    /// Voxel at global voxel coordinate `g`, active blocks only.
    #[inline]
    fn active_voxel(&self, g: [i64; 3]) -> Option<Voxel> {
        let d = BLOCK_DIM as i64;
        let c = [g[0].div_euclid(d) as i32, g[1].div_euclid(d) as i32, g[2].div_euclid(d) as i32];
        let b = self.active.get(&c)?;
        let l = [g[0].rem_euclid(d), g[1].rem_euclid(d), g[2].rem_euclid(d)];
        Some(b.voxels[voxel_index(l[0] as usize, l[1] as usize, l[2] as usize)])
    }

    /// Trilinear TSDF at world point `p`; `None` unless all eight
    /// surrounding voxels are active and observed.
    pub fn sample(&self, p: &Vec3) -> Option<f64> {
        let v = self.cfg.voxel_size;
        let q = [p.x / v - 0.5, p.y / v - 0.5, p.z / v - 0.5];
        let base = [q[0].floor(), q[1].floor(), q[2].floor()];
        let f = [q[0] - base[0], q[1] - base[1], q[2] - base[2]];
        let g0 = [base[0] as i64, base[1] as i64, base[2] as i64];
        let mut acc = 0.0;
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let vox = self.active_voxel([g0[0] + o[0] as i64, g0[1] + o[1] as i64, g0[2] + o[2] as i64])?;
            if vox.weight == 0 {
                return None;
            }
            let mut w = 1.0;
            for a in 0..3 {
                w *= if o[a] == 1 { f[a] } else { 1.0 - f[a] };
            }
            acc += w * vox.tsdf as f64;
        }
        Some(acc)
    }

    /// Renders a range map by marching each pixel ray through the active
    /// blocks and locating the first positive-to-negative crossing.
    pub fn raycast(&self, cam: &FisheyeCamera, world_to_cam: &Pose, min_range: f64, max_range: f64) -> DepthMap {
        let (w, h) = (cam.width(), cam.height());
        let cam_to_world = world_to_cam.inverse();
        let origin = *cam_to_world.translation();
        let step = 0.75 * self.cfg.mu;
        let rows: Vec<Vec<f32>> = (0..h)
            .into_par_iter()
            .map(|j| {
                (0..w)
                    .map(|i| {
                        let Some(ray) = cam.pixel_ray(i, j) else {
                            return 0.0;
                        };
                        let dir = cam_to_world.rotate(&ray);
                        self.march(&origin, &dir, min_range, max_range, step)
                            .map_or(0.0, |t| t as f32)
                    })
                    .collect()
            })
            .collect();
        DepthMap::from_depth(w, h, rows.concat()).expect("row lengths match")
    }

    fn march(&self, origin: &Vec3, dir: &Vec3, t0: f64, t1: f64, step: f64) -> Option<f64> {
        let mut prev: Option<(f64, f64)> = None;
        let mut t = t0;
        while t <= t1 {
            match self.sample(&(origin + dir * t)) {
                Some(s) => {
                    if let Some((tp, sp)) = prev {
                        if sp > 0.0 && s <= 0.0 {
                            let denom = sp - s;
                            return Some(if denom > 0.0 { tp + (t - tp) * sp / denom } else { t });
                        }
                    }
                    prev = Some((t, s));
                }
                None => prev = None,
            }
            t += step;
        }
        None
    }

    /// Surface points at sign changes between observed axis neighbors, from
    /// active and archived blocks observed in at least
    /// `min_block_observations` frames and voxels with weight at least
    /// `min_voxel_weight` (values below 1 behave like 1). Points are ordered
    /// by block coordinate, then voxel, then axis.
    pub fn extract_points(&self, min_block_observations: u32, min_voxel_weight: u16) -> PointCloud {
        let min_w = min_voxel_weight.max(1);
        let mut blocks: Vec<&VoxelBlock> = self
            .active
            .blocks()
            .iter()
            .chain(self.inactive.values())
            .filter(|b| b.observation_count >= min_block_observations)
            .collect();
        blocks.sort_by_key(|b| b.coord);
        let lookup = |g: [i64; 3]| -> Option<Voxel> {
            let d = BLOCK_DIM as i64;
            let c = [g[0].div_euclid(d) as i32, g[1].div_euclid(d) as i32, g[2].div_euclid(d) as i32];
            let b = self.block(&c)?;
            if b.observation_count < min_block_observations {
                return None;
            }
            let l = [g[0].rem_euclid(d), g[1].rem_euclid(d), g[2].rem_euclid(d)];
            Some(b.voxels[voxel_index(l[0] as usize, l[1] as usize, l[2] as usize)])
        };
        let vs = self.cfg.voxel_size;
        let per_block: Vec<(Vec<Vec3>, Vec<f32>)> = blocks
            .par_iter()
            .map(|b| {
                let mut pts = Vec::new();
                let mut wts = Vec::new();
                let d = BLOCK_DIM as i64;
                for k in 0..BLOCK_DIM {
                    for j in 0..BLOCK_DIM {
                        for i in 0..BLOCK_DIM {
                            let v = b.voxels[voxel_index(i, j, k)];
                            if v.weight < min_w {
                                continue;
                            }
                            let g = [
                                b.coord[0] as i64 * d + i as i64,
                                b.coord[1] as i64 * d + j as i64,
                                b.coord[2] as i64 * d + k as i64,
                            ];
                            for axis in 0..3 {
                                let mut gn = g;
                                gn[axis] += 1;
                                let Some(n) = lookup(gn) else { continue };
                                if n.weight < min_w || (v.tsdf > 0.0) == (n.tsdf > 0.0) {
                                    continue;
                                }
                                let (a, bv) = (v.tsdf as f64, n.tsdf as f64);
                                let s = a / (a - bv);
                                let mut p = Vec3::new(
                                    (g[0] as f64 + 0.5) * vs,
                                    (g[1] as f64 + 0.5) * vs,
                                    (g[2] as f64 + 0.5) * vs,
                                );
                                p[axis] += s * vs;
                                pts.push(p);
                                wts.push(v.weight.min(n.weight) as f32);
                            }
                        }
                    }
                }
                (pts, wts)
            })
            .collect();
        let mut cloud = PointCloud::default();
        let mut weights = Vec::new();
        for (p, w) in per_block {
            cloud.points.extend(p);
            weights.extend(w);
        }
        cloud.weights = Some(weights);
        cloud
    }

    /// Writes every block (active and archived, sorted by coordinate) as
    /// `bx by bz` (i32) followed by 512 `(tsdf f32, weight u16)` pairs, all
    /// little-endian.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut blocks: Vec<&VoxelBlock> = self.active.blocks().iter().chain(self.inactive.values()).collect();
        blocks.sort_by_key(|b| b.coord);
        let mut buf = Vec::with_capacity(12 + BLOCK_VOXELS * 6);
        for b in blocks {
            buf.clear();
            for c in b.coord {
                buf.extend_from_slice(&c.to_le_bytes());
            }
            for v in &b.voxels {
                buf.extend_from_slice(&v.tsdf.to_le_bytes());
                buf.extend_from_slice(&v.weight.to_le_bytes());
            }
            out.write_all(&buf).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Loads a snapshot into a fresh volume. Blocks inside the local box
    /// become active, the rest archived; observation counts are not part of
    /// the format and start at zero.
    pub fn read_snapshot(path: &Path, cfg: TsdfConfig, center: Vec3) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let record = 12 + BLOCK_VOXELS * 6;
        if bytes.len() % record != 0 {
            return Err(Error::Format {
                format: "tsdf snapshot",
                message: format!("{} bytes is not a whole number of blocks", bytes.len()),
            });
        }
        let mut vol = Self::new(cfg, center)?;
        for chunk in bytes.chunks_exact(record) {
            let i32_at = |o: usize| i32::from_le_bytes(chunk[o..o + 4].try_into().unwrap());
            let mut block = VoxelBlock::new([i32_at(0), i32_at(4), i32_at(8)]);
            for (n, v) in block.voxels.iter_mut().enumerate() {
                let o = 12 + n * 6;
                v.tsdf = f32::from_le_bytes(chunk[o..o + 4].try_into().unwrap());
                v.weight = u16::from_le_bytes(chunk[o + 4..o + 6].try_into().unwrap());
            }
            if vol.block(&block.coord).is_some() {
                return Err(Error::Format {
                    format: "tsdf snapshot",
                    message: format!("block {:?} appears twice", block.coord),
                });
            }
            if vol.local_box.contains(&vol.block_center(&block.coord)) {
                vol.active.insert(block);
            } else {
                vol.inactive.insert(block.coord, block);
            }
        }
        Ok(vol)
    }
}

/// Running-average update of one voxel with the clamped sample `s`; the
/// weight saturates at `w_max`.
#[inline]
pub fn update_voxel(v: &mut Voxel, s: f64, w_max: u16) {
    let w = v.weight as f64;
    let d = (w * v.tsdf as f64 + s) / (w + 1.0);
    v.tsdf = d.clamp(-1.0, 1.0) as f32;
    v.weight = (v.weight + 1).min(w_max);
}

fn integrate_block(
    block: &mut VoxelBlock,
    d: &DepthMap,
    cam: &FisheyeCamera,
    world_to_cam: &Pose,
    cfg: &TsdfConfig,
) -> usize {
    let vs = cfg.voxel_size;
    let dim = BLOCK_DIM as i64;
    let mut updated = 0;
    for k in 0..BLOCK_DIM {
        for j in 0..BLOCK_DIM {
            for i in 0..BLOCK_DIM {
                let x = Vec3::new(
                    ((block.coord[0] as i64 * dim + i as i64) as f64 + 0.5) * vs,
                    ((block.coord[1] as i64 * dim + j as i64) as f64 + 0.5) * vs,
                    ((block.coord[2] as i64 * dim + k as i64) as f64 + 0.5) * vs,
                );
                let xc = world_to_cam.apply(&x);
                let Some(px) = cam.project(&xc) else { continue };
                let (pi, pj) = (px.x.floor() as usize, px.y.floor() as usize);
                let depth = d.get(pi, pj);
                if !(depth > 0.0) {
                    continue;
                }
                let eta = depth as f64 - xc.norm();
                if eta < -cfg.mu {
                    continue;
                }
                update_voxel(&mut block.voxels[voxel_index(i, j, k)], (eta / cfg.mu).min(1.0), cfg.w_max);
                updated += 1;
            }
        }
    }
    if updated > 0 {
        block.observation_count += 1;
    }
    updated
}

/// Blocks of edge `size` crossed by the segment `a -> b`, in order
/// (3D digital differential analyzer).
pub fn traverse_blocks(a: &Vec3, b: &Vec3, size: f64, out: &mut Vec<BlockCoord>) {
    let cell = |p: &Vec3| [(p.x / size).floor() as i64, (p.y / size).floor() as i64, (p.z / size).floor() as i64];
    let mut cur = cell(a);
    let end = cell(b);
    let dir = b - a;
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for ax in 0..3 {
        if dir[ax] > 0.0 {
            step[ax] = 1;
            t_max[ax] = ((cur[ax] + 1) as f64 * size - a[ax]) / dir[ax];
            t_delta[ax] = size / dir[ax];
        } else if dir[ax] < 0.0 {
            step[ax] = -1;
            t_max[ax] = (cur[ax] as f64 * size - a[ax]) / dir[ax];
            t_delta[ax] = -size / dir[ax];
        }
    }
    let budget: i64 = (0..3).map(|ax| (end[ax] - cur[ax]).abs()).sum();
    out.push([cur[0] as i32, cur[1] as i32, cur[2] as i32]);
    for _ in 0..budget {
        let ax = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        if t_max[ax] > 1.0 {
            break;
        }
        cur[ax] += step[ax];
        t_max[ax] += t_delta[ax];
        out.push([cur[0] as i32, cur[1] as i32, cur[2] as i32]);
    }
}
