use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureKind {
    Checkerboard,
    /// Multi-octave value noise with a C² fade; continuous everywhere.
    RandomField,
}

impl std::str::FromStr for TextureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "checkerboard" => Ok(TextureKind::Checkerboard),
            "random_field" => Ok(TextureKind::RandomField),
            other => Err(Error::InvalidArgument(format!("unknown texture `{other}`"))),
        }
    }
}

impl std::fmt::Display for TextureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TextureKind::Checkerboard => "checkerboard",
            TextureKind::RandomField => "random_field",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureSpec {
    pub kind: TextureKind,
    /// Checker square side, or the coarsest noise cell, in metres.
    pub scale: f64,
    /// Peak-to-peak intensity range around mid-grey, in `(0, 1]`.
    pub contrast: f64,
    pub seed: u64,
}

const OCTAVES: [(f64, f64); 3] = [(1.0, 0.6), (0.5, 0.28), (0.25, 0.12)];

impl TextureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::InvalidArgument(format!("bad texture {self:?}")));
        }
        Ok(())
    }

    /// Intensity in `[0, 1]` at plane coordinates `(s, t)` in metres.
    pub fn intensity(&self, s: f64, t: f64) -> f64 {
        let v = match self.kind {
            TextureKind::Checkerboard => {
                let parity = ((s / self.scale).floor() + (t / self.scale).floor()).rem_euclid(2.0);
                if parity < 0.5 {
                    -0.5
                } else {
                    0.5
                }
            }
            TextureKind::RandomField => {
                let mut acc = 0.0;
                for (k, &(cell, amp)) in OCTAVES.iter().enumerate() {
                    let c = cell * self.scale;
                    acc += amp * (value_noise(s / c, t / c, self.seed.wrapping_add(k as u64)) - 0.5);
                }
                // octave amplitudes sum to 1, so acc stays within ±0.5
                acc * 1.6
            }
        };
        (0.5 + self.contrast * v).clamp(0.0, 1.0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64((ix as u64) ^ splitmix64(iy as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn fade(x: f64) -> f64 {
    x * x * x * (x * (x * 6.0 - 15.0) + 10.0)
}

fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let (tx, ty) = (fade(x - fx), fade(y - fy));
    let a = lattice(ix, iy, seed);
    let b = lattice(ix + 1, iy, seed);
    let c = lattice(ix, iy + 1, seed);
    let d = lattice(ix + 1, iy + 1, seed);
    let top = a + (b - a) * tx;
    let bottom = c + (d - c) * tx;
    top + (bottom - top) * ty
}
