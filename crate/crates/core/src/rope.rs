//! Three-axis rotary position embedding and the per-task position offsets
//! that place condition tokens relative to the target video.
//!
//! Positions are ordered `(t, h, w)` internally. A condition video sits to
//! the right of the target (width shift by the target latent width); a
//! reference image sits one empty slot past the end of the target timeline
//! (time shift by `frames + 1`). Boundary frames for image-to-video and
//! first/last-frame generation use the target's own coordinates.

use serde::{Deserialize, Serialize};

use crate::codec::LatentRole;
use crate::error::{Error, Result};
use crate::instruction::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Position3 {
    pub t: u32,
    pub h: u32,
    pub w: u32,
}

impl Position3 {
    pub fn new(t: u32, h: u32, w: u32) -> Self {
        Self { t, h, w }
    }

    pub fn shifted(self, o: Offset3) -> Self {
        Self::new(self.t + o.dt, self.h + o.dh, self.w + o.dw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Offset3 {
    pub dt: u32,
    pub dh: u32,
    pub dw: u32,
}

impl Offset3 {
    pub const ZERO: Offset3 = Offset3 {
        dt: 0,
        dh: 0,
        dw: 0,
    };

    pub fn new(dt: u32, dh: u32, dw: u32) -> Self {
        Self { dt, dh, dw }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RopeConfig {
    pub head_dim: usize,
    /// Rotation pairs assigned to the t, h and w axes.
    pub split: [usize; 3],
    pub base: f64,
}

impl Default for RopeConfig {
    fn default() -> Self {
        Self {
            head_dim: 32,
            split: [4, 6, 6],
            base: 10_000.0,
        }
    }
}

impl RopeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.head_dim % 2 != 0 || self.head_dim == 0 {
            return Err(Error::Config(format!(
                "rope head_dim {} must be even and positive",
                self.head_dim
            )));
        }
        if self.split.iter().sum::<usize>() != self.head_dim / 2 {
            return Err(Error::Config(format!(
                "rope split {:?} does not sum to head_dim/2 = {}",
                self.split,
                self.head_dim / 2
            )));
        }
        if !(self.base > 0.0) {
            return Err(Error::Config("rope base must be positive".into()));
        }
        Ok(())
    }

    pub fn pairs(&self) -> usize {
        self.head_dim / 2
    }

    /// Per-pair inverse frequencies, axis blocks in `(t, h, w)` order.
    pub fn frequencies(&self) -> Vec<f64> {
        self.split
            .iter()
            .flat_map(|&n| (0..n).map(move |i| self.base.powf(-(2.0 * i as f64) / (2.0 * n as f64))))
            .collect()
    }
}

/// Positions of an `f x h x w` grid in row-major order (t outer, w inner),
/// each shifted by `offset`.
pub fn build_position_grid(f: usize, h: usize, w: usize, offset: Offset3) -> Vec<Position3> {
    let mut out = Vec::with_capacity(f * h * w);
    for t in 0..f as u32 {
        for y in 0..h as u32 {
            for x in 0..w as u32 {
                out.push(Position3::new(t, y, x).shifted(offset));
            }
        }
    }
    out
}

/// Rotation angles for one position: `coordinate * frequency` per pair.
pub fn angles(pos: Position3, cfg: &RopeConfig) -> Vec<f64> {
    let freqs = cfg.frequencies();
    angles_with(&freqs, &cfg.split, [pos.t as f64, pos.h as f64, pos.w as f64])
}

/// Same as [`angles`] for real-valued coordinates.
pub fn angles_with(freqs: &[f64], split: &[usize; 3], coords: [f64; 3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(freqs.len());
    let mut i = 0;
    for (axis, &n) in split.iter().enumerate() {
        for _ in 0..n {
            out.push(coords[axis] * freqs[i]);
            i += 1;
        }
    }
    out
}

/// Rotates consecutive pairs `(x[2i], x[2i+1])` by `angles[i]`.
pub fn apply_rope(vec: &[f64], angles: &[f64]) -> Result<Vec<f64>> {
    if vec.len() != 2 * angles.len() {
        return Err(Error::Shape(format!(
            "rope vector of length {} needs {} angles, got {}",
            vec.len(),
            vec.len() / 2,
            angles.len()
        )));
    }
    let mut out = vec.to_vec();
    rotate_in_place(&mut out, angles, false);
    Ok(out)
}

/// In-place pairwise rotation; `inverse` rotates by the negated angles.
#[inline]
pub fn rotate_in_place(x: &mut [f64], angles: &[f64], inverse: bool) {
    for (pair, &a) in x.chunks_exact_mut(2).zip(angles) {
        let (s, c) = a.sin_cos();
        let s = if inverse { -s } else { s };
        let (x0, x1) = (pair[0], pair[1]);
        pair[0] = x0 * c - x1 * s;
        pair[1] = x0 * s + x1 * c;
    }
}

/// Position offset for a condition (or target) grid under `task`.
///
/// `target_shape` is `(frames, height, width)` of the target latent grid.
pub fn offset_policy(
    task: TaskKind,
    role: LatentRole,
    target_shape: (usize, usize, usize),
) -> Result<Offset3> {
    use LatentRole::*;
    use TaskKind::*;
    let (f_tar, _, w_tar) = target_shape;
    match (task, role) {
        (_, Target) => Ok(Offset3::ZERO),
        (InContextGen | InContextEdit, ConditionVideo) => Ok(Offset3::new(0, 0, w_tar as u32)),
        (InContextGen | InContextEdit, ReferenceImage) => {
            Ok(Offset3::new(f_tar as u32 + 1, 0, 0))
        }
        (I2V, FirstFrame) | (FLF2V, FirstFrame | LastFrame) => Ok(Offset3::ZERO),
        _ => Err(Error::NoOffsetPolicy {
            task: task.name().into(),
            role: role.name().into(),
        }),
    }
}
