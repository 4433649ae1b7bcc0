//! Deterministic latent codec: space-to-depth with patch size [`PATCH`] and no
//! temporal compression, plus the temporal shape unification and concatenation
//! used to stack visual conditions.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tomn::TomnTensor;

pub const PATCH: usize = 4;
pub const CHANNELS: usize = 3;
pub const LATENT_CHANNELS: usize = CHANNELS * PATCH * PATCH;

/// RGB video, frame-major `[frame][y][x][channel]`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Video {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(Error::Shape("video extents must be positive".into()));
        }
        if data.len() != frames * height * width * CHANNELS {
            return Err(Error::Shape(format!(
                "video data has {} values, expected {}",
                data.len(),
                frames * height * width * CHANNELS
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Shape(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
            data: vec![0.0; frames * height * width * CHANNELS],
        }
    }

    pub fn filled(frames: usize, height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let mut v = Self::zeros(frames, height, width);
        for px in v.data.chunks_exact_mut(CHANNELS) {
            px.copy_from_slice(&rgb);
        }
        v
    }

    #[inline]
    pub fn index(&self, f: usize, y: usize, x: usize) -> usize {
        ((f * self.height + y) * self.width + x) * CHANNELS
    }

    #[inline]
    pub fn pixel(&self, f: usize, y: usize, x: usize) -> [f32; 3] {
        let i = self.index(f, y, x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, f: usize, y: usize, x: usize, rgb: [f32; 3]) {
        let i = self.index(f, y, x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels_per_frame(&self) -> usize {
        self.height * self.width
    }

    pub fn frame(&self, f: usize) -> Video {
        let n = self.height * self.width * CHANNELS;
        Video {
            frames: 1,
            height: self.height,
            width: self.width,
            data: self.data[f * n..(f + 1) * n].to_vec(),
        }
    }

    pub fn same_shape(&self, other: &Video) -> bool {
        self.frames == other.frames && self.height == other.height && self.width == other.width
    }

    /// Keeps the first `frames` frames and every `stride`-th pixel on each axis.
    pub fn crop_and_subsample(&self, frames: usize, stride: usize) -> Video {
        let frames = frames.min(self.frames);
        let (h, w) = (self.height / stride, self.width / stride);
        let mut out = Video::zeros(frames, h, w);
        for f in 0..frames {
            for y in 0..h {
                for x in 0..w {
                    out.set_pixel(f, y, x, self.pixel(f, y * stride, x * stride));
                }
            }
        }
        out
    }

    pub fn to_tomn(&self) -> TomnTensor {
        TomnTensor::f32(
            vec![self.frames, self.height, self.width, CHANNELS],
            self.data.clone(),
        )
    }

    pub fn from_tomn(t: TomnTensor, path: &Path) -> Result<Self> {
        let (dims, data) = t.into_f32(path)?;
        if dims.len() != 4 || dims[3] != CHANNELS {
            return Err(Error::Tomn {
                path: path.to_path_buf(),
                message: format!("expected video dims [f, h, w, 3], found {dims:?}"),
            });
        }
        Video::new(dims[0], dims[1], dims[2], data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tomn(TomnTensor::read(path)?, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_tomn().write(path)
    }

    /// Binary PPM (P6) for frame `f`, for eyeballing results.
    pub fn frame_ppm(&self, f: usize) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        let n = self.height * self.width * CHANNELS;
        out.extend(
            self.data[f * n..(f + 1) * n]
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }
}

/// Per-pixel boolean mask over a video, `[frame][y][x]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoMask {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl VideoMask {
    pub fn empty(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
            data: vec![false; frames * height * width],
        }
    }

    pub fn full(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
            data: vec![true; frames * height * width],
        }
    }

    #[inline]
    pub fn get(&self, f: usize, y: usize, x: usize) -> bool {
        self.data[(f * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, f: usize, y: usize, x: usize, v: bool) {
        self.data[(f * self.height + y) * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn frame_count(&self, f: usize) -> usize {
        let n = self.height * self.width;
        self.data[f * n..(f + 1) * n].iter().filter(|&&b| b).count()
    }

    pub fn union(&self, other: &VideoMask) -> VideoMask {
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a |= b);
        out
    }

    pub fn complement(&self) -> VideoMask {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|a| *a = !*a);
        out
    }

    pub fn matches_video(&self, v: &Video) -> bool {
        self.frames == v.frames && self.height == v.height && self.width == v.width
    }

    pub fn crop_and_subsample(&self, frames: usize, stride: usize) -> VideoMask {
        let frames = frames.min(self.frames);
        let (h, w) = (self.height / stride, self.width / stride);
        let mut out = VideoMask::empty(frames, h, w);
        for f in 0..frames {
            for y in 0..h {
                for x in 0..w {
                    out.set(f, y, x, self.get(f, y * stride, x * stride));
                }
            }
        }
        out
    }

    pub fn to_tomn(&self) -> TomnTensor {
        TomnTensor::u8(
            vec![self.frames, self.height, self.width],
            self.data.iter().map(|&b| b as u8).collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (dims, data) = TomnTensor::read(path)?.into_u8(path)?;
        if dims.len() != 3 {
            return Err(Error::Tomn {
                path: path.to_path_buf(),
                message: format!("expected mask dims [f, h, w], found {dims:?}"),
            });
        }
        Ok(Self {
            frames: dims[0],
            height: dims[1],
            width: dims[2],
            data: data.into_iter().map(|b| b != 0).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_tomn().write(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentRole {
    Target,
    ConditionVideo,
    ReferenceImage,
    FirstFrame,
    LastFrame,
}

impl LatentRole {
    pub const ALL: [LatentRole; 5] = [
        LatentRole::Target,
        LatentRole::ConditionVideo,
        LatentRole::ReferenceImage,
        LatentRole::FirstFrame,
        LatentRole::LastFrame,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            LatentRole::Target => "target",
            LatentRole::ConditionVideo => "condition_video",
            LatentRole::ReferenceImage => "reference_image",
            LatentRole::FirstFrame => "first_frame",
            LatentRole::LastFrame => "last_frame",
        }
    }
}

/// Latent tensor `[frame][y][x][channel]` with a role tag and a per-frame
/// validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    pub validity: Vec<bool>,
    role: LatentRole,
}

impl LatentGrid {
    pub fn new(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
        role: LatentRole,
    ) -> Result<Self> {
        if data.len() != frames * height * width * channels {
            return Err(Error::Shape(format!(
                "latent data has {} values, expected {}",
                data.len(),
                frames * height * width * channels
            )));
        }
        Ok(Self {
            frames,
            height,
            width,
            channels,
            data,
            validity: vec![true; frames],
            role,
        })
    }

    pub fn role(&self) -> LatentRole {
        self.role
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.height * self.width
    }

    pub fn num_tokens(&self) -> usize {
        self.frames * self.height * self.width
    }

    /// Channel vector of the cell at `(f, y, x)`.
    pub fn cell(&self, f: usize, y: usize, x: usize) -> &[f32] {
        let i = ((f * self.height + y) * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Mean channel vector over the cells of valid frames.
    pub fn mean_summary(&self) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.channels];
        let mut n = 0usize;
        let per_frame = self.tokens_per_frame() * self.channels;
        for f in (0..self.frames).filter(|&f| self.validity[f]) {
            for cell in self.data[f * per_frame..(f + 1) * per_frame].chunks_exact(self.channels) {
                acc.iter_mut().zip(cell).for_each(|(a, &c)| *a += c as f64);
                n += 1;
            }
        }
        if n > 0 {
            acc.iter_mut().for_each(|a| *a /= n as f64);
        }
        acc
    }

    pub fn save(&self, values: &Path, validity: &Path) -> Result<()> {
        TomnTensor::f32(
            vec![self.frames, self.height, self.width, self.channels],
            self.data.clone(),
        )
        .write(values)?;
        TomnTensor::u8(
            vec![self.frames],
            self.validity.iter().map(|&b| b as u8).collect(),
        )
        .write(validity)
    }

    pub fn load(values: &Path, validity: &Path, role: LatentRole) -> Result<Self> {
        let (dims, data) = TomnTensor::read(values)?.into_f32(values)?;
        if dims.len() != 4 {
            return Err(Error::Tomn {
                path: values.to_path_buf(),
                message: format!("expected latent dims [f, h, w, c], found {dims:?}"),
            });
        }
        let (vdims, v) = TomnTensor::read(validity)?.into_u8(validity)?;
        if vdims != [dims[0]] {
            return Err(Error::Tomn {
                path: validity.to_path_buf(),
                message: format!("validity dims {vdims:?} do not match {} frames", dims[0]),
            });
        }
        let mut g = LatentGrid::new(dims[0], dims[1], dims[2], dims[3], data, role)?;
        g.validity = v.into_iter().map(|b| b != 0).collect();
        Ok(g)
    }
}

/// Space-to-depth: each `PATCH x PATCH` block of RGB pixels becomes one
/// latent cell with `3 * PATCH^2` channels ordered `(py, px, c)`.
pub fn encode(video: &Video, role: LatentRole) -> Result<LatentGrid> {
    if video.height % PATCH != 0 {
        return Err(Error::NotDivisible {
            axis: "height",
            value: video.height,
            patch: PATCH,
        });
    }
    if video.width % PATCH != 0 {
        return Err(Error::NotDivisible {
            axis: "width",
            value: video.width,
            patch: PATCH,
        });
    }
    let (hl, wl) = (video.height / PATCH, video.width / PATCH);
    let mut data = Vec::with_capacity(video.data.len());
    for f in 0..video.frames {
        for ly in 0..hl {
            for lx in 0..wl {
                for py in 0..PATCH {
                    let i = video.index(f, ly * PATCH + py, lx * PATCH);
                    data.extend_from_slice(&video.data[i..i + PATCH * CHANNELS]);
                }
            }
        }
    }
    LatentGrid::new(video.frames, hl, wl, LATENT_CHANNELS, data, role)
}

/// Exact inverse of [`encode`].
pub fn decode(latent: &LatentGrid) -> Result<Video> {
    if latent.channels != LATENT_CHANNELS {
        return Err(Error::Shape(format!(
            "latent has {} channels, codec requires {LATENT_CHANNELS}",
            latent.channels
        )));
    }
    let (h, w) = (latent.height * PATCH, latent.width * PATCH);
    let mut video = Video::zeros(latent.frames, h, w);
    let row = PATCH * CHANNELS;
    for f in 0..latent.frames {
        for ly in 0..latent.height {
            for lx in 0..latent.width {
                let cell = latent.cell(f, ly, lx);
                for py in 0..PATCH {
                    let i = video.index(f, ly * PATCH + py, lx * PATCH);
                    video.data[i..i + row].copy_from_slice(&cell[py * row..(py + 1) * row]);
                }
            }
        }
    }
    Ok(video)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Front,
    Back,
    /// Two stacked frames (first, last) placed at indices `0` and `f_target - 1`.
    FrontAndBack,
}

/// Expands `grid` to `f_target` frames. Real frames keep their values and
/// validity; padding frames are zero with validity `false`.
pub fn unify_temporal_shape(
    grid: &LatentGrid,
    f_target: usize,
    placement: Placement,
) -> Result<LatentGrid> {
    if grid.frames > f_target {
        return Err(Error::Shape(format!(
            "grid has {} frames, more than target {f_target}",
            grid.frames
        )));
    }
    let slots: Vec<usize> = match placement {
        Placement::Front => (0..grid.frames).collect(),
        Placement::Back => (f_target - grid.frames..f_target).collect(),
        Placement::FrontAndBack => {
            if grid.frames != 2 || f_target < 2 {
                return Err(Error::Shape(format!(
                    "front_and_back placement needs 2 frames into >= 2 slots, got {} into {f_target}",
                    grid.frames
                )));
            }
            vec![0, f_target - 1]
        }
    };
    let per_frame = grid.tokens_per_frame() * grid.channels;
    let mut out = LatentGrid::new(
        f_target,
        grid.height,
        grid.width,
        grid.channels,
        vec![0.0; f_target * per_frame],
        grid.role,
    )?;
    out.validity = vec![false; f_target];
    for (src, &dst) in slots.iter().enumerate() {
        out.data[dst * per_frame..(dst + 1) * per_frame]
            .copy_from_slice(&grid.data[src * per_frame..(src + 1) * per_frame]);
        out.validity[dst] = grid.validity[src];
    }
    Ok(out)
}

/// One source grid's frame range inside a [`ConditionStack`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub frames: Range<usize>,
    pub role: LatentRole,
}

/// Visual conditions concatenated along the frame axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionStack {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    pub validity: Vec<bool>,
    pub segments: Vec<Segment>,
}

impl ConditionStack {
    pub fn cell(&self, f: usize, y: usize, x: usize) -> &[f32] {
        let i = ((f * self.height + y) * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }
}

pub fn concat_conditions(conditions: &[LatentGrid]) -> Result<ConditionStack> {
    let first = conditions
        .first()
        .ok_or_else(|| Error::Shape("no conditions to concatenate".into()))?;
    let (h, w, c) = (first.height, first.width, first.channels);
    let mut stack = ConditionStack {
        frames: 0,
        height: h,
        width: w,
        channels: c,
        data: Vec::new(),
        validity: Vec::new(),
        segments: Vec::with_capacity(conditions.len()),
    };
    for g in conditions {
        if (g.height, g.width, g.channels) != (h, w, c) {
            return Err(Error::Shape(format!(
                "condition {} is {}x{}x{}, expected {h}x{w}x{c}",
                g.role.name(),
                g.height,
                g.width,
                g.channels
            )));
        }
        stack.segments.push(Segment {
            frames: stack.frames..stack.frames + g.frames,
            role: g.role,
        });
        stack.frames += g.frames;
        stack.data.extend_from_slice(&g.data);
        stack.validity.extend_from_slice(&g.validity);
    }
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_video(rng: &mut ChaCha8Rng, f: usize, h: usize, w: usize) -> Video {
        let data = (0..f * h * w * 3).map(|_| rng.random::<f32>()).collect();
        Video::new(f, h, w, data).unwrap()
    }

    #[test]
    fn encode_shapes() {
        let v = Video::zeros(8, 16, 16);
        let g = encode(&v, LatentRole::Target).unwrap();
        assert_eq!((g.frames, g.height, g.width, g.channels), (8, 4, 4, 48));
        let g = encode(&Video::zeros(1, 4, 4), LatentRole::ReferenceImage).unwrap();
        assert_eq!((g.frames, g.height, g.width, g.channels), (1, 1, 1, 48));
    }

    #[test]
    fn encode_rejects_bad_axis() {
        let err = encode(&Video::zeros(1, 4, 6), LatentRole::Target).unwrap_err();
        assert!(err.to_string().contains("width"));
        let err = encode(&Video::zeros(1, 5, 4), LatentRole::Target).unwrap_err();
        assert!(err.to_string().contains("height"));
    }

    #[test]
    fn round_trip_twenty_videos() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..20 {
            let v = random_video(&mut rng, 3, 8, 12);
            let back = decode(&encode(&v, LatentRole::Target).unwrap()).unwrap();
            assert_eq!(
                back.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                v.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn decode_zeros_is_black_and_checks_channels() {
        let z = LatentGrid::new(8, 4, 4, 48, vec![0.0; 8 * 16 * 48], LatentRole::Target).unwrap();
        let v = decode(&z).unwrap();
        assert_eq!((v.frames, v.height, v.width), (8, 16, 16));
        assert!(v.data.iter().all(|&x| x == 0.0));
        let bad = LatentGrid::new(1, 1, 1, 12, vec![0.0; 12], LatentRole::Target).unwrap();
        assert!(decode(&bad).is_err());
    }

    #[test]
    fn encode_of_decode_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f32> = (0..2 * 3 * 2 * 48).map(|_| rng.random()).collect();
        let z = LatentGrid::new(2, 3, 2, 48, data, LatentRole::ConditionVideo).unwrap();
        assert_eq!(encode(&decode(&z).unwrap(), LatentRole::ConditionVideo).unwrap(), z);
    }

    #[test]
    fn channel_order_is_row_col_rgb() {
        let mut v = Video::zeros(1, 4, 4);
        v.set_pixel(0, 1, 2, [0.1, 0.2, 0.3]);
        let g = encode(&v, LatentRole::Target).unwrap();
        let base = (PATCH + 2) * 3;
        assert_eq!(&g.data[base..base + 3], &[0.1, 0.2, 0.3]);
    }

    fn grid_with_frames(n: usize) -> LatentGrid {
        let data = (0..n * 48).map(|i| (i / 48 + 1) as f32).collect();
        LatentGrid::new(n, 1, 1, 48, data, LatentRole::ReferenceImage).unwrap()
    }

    #[test]
    fn unify_front_pads_with_invalid_zeros() {
        let g = unify_temporal_shape(&grid_with_frames(1), 4, Placement::Front).unwrap();
        assert_eq!(g.validity, vec![true, false, false, false]);
        assert!(g.data[..48].iter().all(|&x| x == 1.0));
        assert!(g.data[48..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unify_front_and_back_anchors_ends() {
        let g = unify_temporal_shape(&grid_with_frames(2), 8, Placement::FrontAndBack).unwrap();
        assert_eq!(
            g.validity,
            vec![true, false, false, false, false, false, false, true]
        );
        assert_eq!(g.data[0], 1.0);
        assert_eq!(g.data[7 * 48], 2.0);
        assert!(unify_temporal_shape(&grid_with_frames(3), 8, Placement::FrontAndBack).is_err());
    }

    #[test]
    fn unify_back_and_identity() {
        let g = unify_temporal_shape(&grid_with_frames(1), 3, Placement::Back).unwrap();
        assert_eq!(g.validity, vec![false, false, true]);
        let src = grid_with_frames(4);
        let same = unify_temporal_shape(&src, 4, Placement::Front).unwrap();
        assert_eq!(same, src);
        assert!(unify_temporal_shape(&src, 3, Placement::Front).is_err());
    }

    #[test]
    fn concat_tracks_segments() {
        let a = LatentGrid::new(4, 2, 2, 48, vec![0.0; 4 * 4 * 48], LatentRole::ConditionVideo)
            .unwrap();
        let s = concat_conditions(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(s.frames, 8);
        assert_eq!(s.segments[0].frames, 0..4);
        assert_eq!(s.segments[1].frames, 4..8);

        let single = concat_conditions(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single.segments.len(), 1);
        assert_eq!(single.data, a.data);

        let bad = LatentGrid::new(1, 2, 3, 48, vec![0.0; 6 * 48], LatentRole::ReferenceImage)
            .unwrap();
        assert!(concat_conditions(&[a, bad]).is_err());
    }

    #[test]
    fn concat_ref_image_and_video_keeps_roles() {
        let img = LatentGrid::new(1, 2, 2, 48, vec![1.0; 4 * 48], LatentRole::ReferenceImage)
            .unwrap();
        let vid = LatentGrid::new(4, 2, 2, 48, vec![2.0; 16 * 48], LatentRole::ConditionVideo)
            .unwrap();
        let s = concat_conditions(&[img, vid]).unwrap();
        assert_eq!(s.frames, 5);
        // Segment bookkeeping oracle: walk frames and recover the role of each.
        let mut expected = vec![LatentRole::ReferenceImage];
        expected.extend([LatentRole::ConditionVideo; 4]);
        let recovered: Vec<LatentRole> = (0..s.frames)
            .map(|f| {
                s.segments
                    .iter()
                    .find(|seg| seg.frames.contains(&f))
                    .unwrap()
                    .role
            })
            .collect();
        assert_eq!(recovered, expected);
        assert_eq!(s.cell(0, 1, 1)[0], 1.0);
        assert_eq!(s.cell(1, 0, 0)[0], 2.0);
    }

    proptest! {
        #[test]
        fn encode_is_linear(seed in 0u64..1000, a in -2.0f32..2.0, b in -2.0f32..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v1 = random_video(&mut rng, 2, 4, 8);
            let v2 = random_video(&mut rng, 2, 4, 8);
            // Linear combination may leave [0, 1]; build it unchecked.
            let mix = Video {
                data: v1.data.iter().zip(&v2.data).map(|(x, y)| a * x + b * y).collect(),
                ..v1.clone()
            };
            let e1 = encode(&v1, LatentRole::Target).unwrap();
            let e2 = encode(&v2, LatentRole::Target).unwrap();
            let em = encode(&mix, LatentRole::Target).unwrap();
            for i in 0..em.data.len() {
                prop_assert_eq!(em.data[i], a * e1.data[i] + b * e2.data[i]);
            }
        }

        #[test]
        fn unify_preserves_real_frames(n in 1usize..5, extra in 0usize..4, back in any::<bool>()) {
            let g = grid_with_frames(n);
            let placement = if back { Placement::Back } else { Placement::Front };
            let u = unify_temporal_shape(&g, n + extra, placement).unwrap();
            prop_assert_eq!(u.validity.iter().filter(|&&b| b).count(), n);
            let start = if back { extra } else { 0 };
            prop_assert_eq!(&u.data[start * 48..(start + n) * 48], &g.data[..]);
        }
    }
}
