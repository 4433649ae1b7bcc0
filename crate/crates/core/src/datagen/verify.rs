//! Dual verification of editing pairs and injectors for the artifacts it is
//! meant to catch.
//!
//! Checker A works from the edit mask alone: nothing may change outside it,
//! and a removed object must actually be gone. Checker B works from pixel
//! statistics: the object must look like its reference, and the region left
//! behind by a removal must be as smooth as the rest of the background.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pairs::{EditKind, EditPair, WHITE};
use super::scene::OBJECT_COLORS;
use crate::codec::{Video, VideoMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    IdentityInconsistency,
    IncompleteRemoval,
    UnnaturalInpainting,
    UnintendedEditing,
}

impl RejectReason {
    pub const ALL: [RejectReason; 4] = [
        RejectReason::IdentityInconsistency,
        RejectReason::IncompleteRemoval,
        RejectReason::UnnaturalInpainting,
        RejectReason::UnintendedEditing,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RejectReason::IdentityInconsistency => "identity inconsistency",
            RejectReason::IncompleteRemoval => "incomplete removal",
            RejectReason::UnnaturalInpainting => "unnatural inpainting",
            RejectReason::UnintendedEditing => "unintended editing",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

/// Largest share of masked pixels still showing the object after removal.
pub const MAX_RESIDUAL: f64 = 0.05;
/// Smallest color-histogram intersection between reference and object.
pub const MIN_HIST_INTERSECTION: f64 = 0.9;
/// Allowed ratio of inpainted to background local variance.
pub const MAX_VARIANCE_RATIO: f64 = 3.0;
/// Variance floor so flat backgrounds do not make the ratio test brittle.
pub const VARIANCE_FLOOR: f64 = 1e-3;

const BINS: usize = 4;

fn bin(p: [f32; 3]) -> usize {
    let b = |v: f32| ((v * BINS as f32) as usize).min(BINS - 1);
    (b(p[0]) * BINS + b(p[1])) * BINS + b(p[2])
}

/// Normalized joint RGB histogram with `4^3` bins.
pub fn histogram(pixels: impl Iterator<Item = [f32; 3]>) -> Option<Vec<f64>> {
    let mut h = vec![0.0; BINS * BINS * BINS];
    let mut n = 0usize;
    for p in pixels {
        h[bin(p)] += 1.0;
        n += 1;
    }
    if n == 0 {
        return None;
    }
    h.iter_mut().for_each(|v| *v /= n as f64);
    Some(h)
}

pub fn intersection(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.min(*y)).sum()
}

pub fn masked_pixels<'a>(video: &'a Video, mask: &'a VideoMask) -> impl Iterator<Item = [f32; 3]> + 'a {
    (0..mask.frames).flat_map(move |f| {
        (0..mask.height).flat_map(move |y| {
            (0..mask.width)
                .filter(move |&x| mask.get(f, y, x))
                .map(move |x| video.pixel(f, y, x))
        })
    })
}

pub fn reference_pixels(reference: &Video) -> impl Iterator<Item = [f32; 3]> + '_ {
    reference.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).filter(|p| *p != WHITE)
}

/// Per-channel variance over the 3x3 window (clipped at the border),
/// averaged over channels.
fn local_variance(video: &Video, f: usize, y: usize, x: usize) -> f64 {
    let (mut s, mut s2, mut n) = ([0.0f64; 3], [0.0f64; 3], 0.0);
    for yy in y.saturating_sub(1)..(y + 2).min(video.height) {
        for xx in x.saturating_sub(1)..(x + 2).min(video.width) {
            let p = video.pixel(f, yy, xx);
            for c in 0..3 {
                s[c] += p[c] as f64;
                s2[c] += (p[c] as f64).powi(2);
            }
            n += 1.0;
        }
    }
    (0..3).map(|c| s2[c] / n - (s[c] / n).powi(2)).sum::<f64>() / 3.0
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Median local variance inside and outside `mask`.
fn region_variances(video: &Video, mask: &VideoMask) -> (f64, f64) {
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for f in 0..video.frames {
        for y in 0..video.height {
            for x in 0..video.width {
                let v = local_variance(video, f, y, x);
                if mask.get(f, y, x) {
                    inside.push(v);
                } else {
                    outside.push(v);
                }
            }
        }
    }
    (median(inside), median(outside))
}

pub fn checker_a(pair: &EditPair) -> Option<RejectReason> {
    let (s, t, m) = (&pair.source, &pair.target, &pair.edit_mask);
    if !s.same_shape(t) || !m.matches_video(s) {
        return Some(RejectReason::UnintendedEditing);
    }
    for (i, &inside) in m.data.iter().enumerate() {
        if !inside && s.data[3 * i..3 * i + 3] != t.data[3 * i..3 * i + 3] {
            return Some(RejectReason::UnintendedEditing);
        }
    }
    if let Some((with, without)) = pair.object_sides() {
        let total = m.count();
        let residual = m
            .data
            .iter()
            .enumerate()
            .filter(|&(i, &inside)| inside && with.data[3 * i..3 * i + 3] == without.data[3 * i..3 * i + 3])
            .count();
        if total > 0 && residual as f64 > MAX_RESIDUAL * total as f64 {
            return Some(RejectReason::IncompleteRemoval);
        }
    }
    None
}

pub fn checker_b(pair: &EditPair, reference: Option<&Video>) -> Option<RejectReason> {
    if let Some(r) = reference {
        let side = match pair.kind {
            EditKind::Remove => Some(&pair.source),
            EditKind::Insert | EditKind::ModifySubject => Some(&pair.target),
            _ => None,
        };
        if let Some(v) = side {
            let (hr, hv) = (
                histogram(reference_pixels(r)),
                histogram(masked_pixels(v, &pair.edit_mask)),
            );
            let score = match (hr, hv) {
                (Some(a), Some(b)) => intersection(&a, &b),
                _ => 0.0,
            };
            if score < MIN_HIST_INTERSECTION {
                return Some(RejectReason::IdentityInconsistency);
            }
        }
    }
    if let Some((_, without)) = pair.object_sides() {
        let (inside, outside) = region_variances(without, &pair.edit_mask);
        if inside > MAX_VARIANCE_RATIO * outside.max(VARIANCE_FLOOR) {
            return Some(RejectReason::UnnaturalInpainting);
        }
    }
    None
}

/// Accepts only when both checkers accept; checker A's reason wins when both
/// object.
pub fn verify_sample(pair: &EditPair, reference: Option<&Video>) -> Verdict {
    match checker_a(pair).or_else(|| checker_b(pair, reference)) {
        Some(r) => Verdict::Reject(r),
        None => Verdict::Accept,
    }
}

/// Corruption injectors, one per rejection class.
pub mod corrupt {
    use super::*;

    fn masked_indices(m: &VideoMask) -> Vec<usize> {
        m.data.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    /// Inverts a 3x3 block of the target that lies entirely outside the mask.
    pub fn unintended_edit(pair: &EditPair, seed: u64) -> Option<EditPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = &pair.edit_mask;
        let mut spots = Vec::new();
        for f in 0..m.frames {
            for y in 0..m.height.saturating_sub(2) {
                for x in 0..m.width.saturating_sub(2) {
                    if (0..3).all(|dy| (0..3).all(|dx| !m.get(f, y + dy, x + dx))) {
                        spots.push((f, y, x));
                    }
                }
            }
        }
        if spots.is_empty() {
            return None;
        }
        let (f, y, x) = spots[rng.random_range(0..spots.len())];
        let mut out = pair.clone();
        for dy in 0..3 {
            for dx in 0..3 {
                let p = out.target.pixel(f, y + dy, x + dx);
                out.target.set_pixel(f, y + dy, x + dx, p.map(|v| 1.0 - v));
            }
        }
        Some(out)
    }

    /// Leaves `fraction` of the object's pixels on the object-free side.
    pub fn incomplete_removal(pair: &EditPair, fraction: f64, seed: u64) -> Option<EditPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = masked_indices(&pair.edit_mask);
        let mut out = pair.clone();
        let (with, without) = out.object_sides_mut()?;
        let keep = ((idx.len() as f64) * fraction).ceil() as usize;
        for &i in rand::seq::index::sample(&mut rng, idx.len(), keep.min(idx.len())).iter().map(|k| &idx[k]) {
            let px: [f32; 3] = with.data[3 * i..3 * i + 3].try_into().unwrap();
            without.data[3 * i..3 * i + 3].copy_from_slice(&px);
        }
        Some(out)
    }

    /// Fills the object-free side of the mask with binary noise.
    pub fn unnatural_inpainting(pair: &EditPair, seed: u64) -> Option<EditPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = masked_indices(&pair.edit_mask);
        let mut out = pair.clone();
        let (_, without) = out.object_sides_mut()?;
        for i in idx {
            for c in 0..3 {
                without.data[3 * i + c] = if rng.random::<bool>() { 1.0 } else { 0.0 };
            }
        }
        Some(out)
    }

    /// Repaints the reference object in a different palette color.
    pub fn identity(reference: &Video, seed: u64) -> Video {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = reference.clone();
        let current = reference_pixels(reference).next();
        let choices: Vec<[f32; 3]> = OBJECT_COLORS
            .iter()
            .map(|(_, c)| *c)
            .filter(|c| Some(*c) != current)
            .collect();
        let color = choices[rng.random_range(0..choices.len())];
        for p in out.data.chunks_exact_mut(3) {
            if p != WHITE {
                p.copy_from_slice(&color);
            }
        }
        out
    }
}
