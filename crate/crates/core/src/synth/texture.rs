//! Band-limited value noise used to texture primitives.

/// Surface appearance: `mean + contrast * s` with `s` in `[-1, 1]` built from
/// eight octaves of value noise whose coarsest wavelength is `scale` meters.
/// `contrast == 0` gives a featureless surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Texture {
    pub mean: f64,
    pub contrast: f64,
    pub scale: f64,
}

impl Texture {
    pub const fn new(mean: f64, contrast: f64, scale: f64) -> Self {
        Self {
            mean,
            contrast,
            scale,
        }
    }

    pub const fn flat(mean: f64) -> Self {
        Self {
            mean,
            contrast: 0.0,
            scale: 1.0,
        }
    }

    /// Intensity at object-local point `p` for a pixel footprint of
    /// `footprint` meters. Octaves whose wavelength approaches the footprint
    /// are faded out so distant surfaces do not alias.
    pub fn shade(&self, seed: u64, prim: u32, p: [f64; 3], footprint: f64) -> f64 {
        if self.contrast == 0.0 {
            return self.mean.clamp(0.0, 1.0);
        }
        const AMPS: [f64; 8] = [1.0, 0.8, 0.64, 0.52, 0.42, 0.34, 0.28, 0.23];
        let mut acc = 0.0;
        let mut total = 0.0;
        let mut wavelength = self.scale;
        for (octave, amp) in AMPS.iter().enumerate() {
            let fade = smoothstep(((wavelength / footprint.max(1e-9)) - 2.0) / 2.0);
            if fade > 0.0 {
                let q = [p[0] / wavelength, p[1] / wavelength, p[2] / wavelength];
                let n = value_noise(seed, prim, octave as u32, q) - 0.5;
                acc += amp * fade * n;
                total += amp * fade;
            }
            wavelength *= 0.5;
        }
        if total == 0.0 {
            return self.mean.clamp(0.0, 1.0);
        }
        // acc/total lies in [-0.5, 0.5].
        let s = 2.0 * acc / total;
        (self.mean + self.contrast * s).clamp(0.0, 1.0)
    }
}

#[inline]
fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

#[inline]
fn quintic(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn lattice(seed: u64, prim: u32, octave: u32, x: i64, y: i64, z: i64) -> f64 {
    let mut h = splitmix64(seed ^ ((prim as u64) << 32 | octave as u64));
    h = splitmix64(h ^ x as u64);
    h = splitmix64(h ^ (y as u64).rotate_left(21));
    h = splitmix64(h ^ (z as u64).rotate_left(42));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smoothly interpolated lattice noise in `[0, 1)`.
fn value_noise(seed: u64, prim: u32, octave: u32, q: [f64; 3]) -> f64 {
    let fl = [q[0].floor(), q[1].floor(), q[2].floor()];
    let (x0, y0, z0) = (fl[0] as i64, fl[1] as i64, fl[2] as i64);
    let t = [quintic(q[0] - fl[0]), quintic(q[1] - fl[1]), quintic(q[2] - fl[2])];
    let l = |dx, dy, dz| lattice(seed, prim, octave, x0 + dx, y0 + dy, z0 + dz);
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let x00 = lerp(l(0, 0, 0), l(1, 0, 0), t[0]);
    let x10 = lerp(l(0, 1, 0), l(1, 1, 0), t[0]);
    let x01 = lerp(l(0, 0, 1), l(1, 0, 1), t[0]);
    let x11 = lerp(l(0, 1, 1), l(1, 1, 1), t[0]);
    lerp(lerp(x00, x10, t[1]), lerp(x01, x11, t[1]), t[2])
}
