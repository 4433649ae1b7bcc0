//! Paired source/target construction for the editing sub-tasks, reference
//! extraction and difference-based object recovery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{
    random_object, render, ObjectDescriptor, RenderedScene, Shape, BACKGROUNDS, OBJECT_COLORS,
};
use super::style::{apply_style, STYLE_NAMES};
use crate::codec::{Video, VideoMask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Style,
    Insert,
    Remove,
    ModifySubject,
    ModifyBackground,
}

impl EditKind {
    pub const ALL: [EditKind; 5] = [
        EditKind::Style,
        EditKind::Insert,
        EditKind::Remove,
        EditKind::ModifySubject,
        EditKind::ModifyBackground,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EditKind::Style => "style",
            EditKind::Insert => "insert",
            EditKind::Remove => "remove",
            EditKind::ModifySubject => "modify_subject",
            EditKind::ModifyBackground => "modify_background",
        }
    }

    /// Kinds confined to one object's region.
    pub fn is_local(self) -> bool {
        matches!(self, EditKind::Insert | EditKind::Remove | EditKind::ModifySubject)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditPair {
    pub kind: EditKind,
    pub source: Video,
    pub target: Video,
    pub instruction: String,
    pub edit_mask: VideoMask,
    /// The inserted, removed or modified object, for local kinds.
    pub object: Option<ObjectDescriptor>,
}

impl EditPair {
    /// `(with object, without object)` for insertion and removal pairs.
    pub fn object_sides(&self) -> Option<(&Video, &Video)> {
        match self.kind {
            EditKind::Insert => Some((&self.target, &self.source)),
            EditKind::Remove => Some((&self.source, &self.target)),
            _ => None,
        }
    }

    pub fn object_sides_mut(&mut self) -> Option<(&mut Video, &mut Video)> {
        match self.kind {
            EditKind::Insert => Some((&mut self.target, &mut self.source)),
            EditKind::Remove => Some((&mut self.source, &mut self.target)),
            _ => None,
        }
    }
}

pub fn make_style_pair(video: &Video, style: usize) -> Result<EditPair> {
    let target = apply_style(video, style)?;
    Ok(EditPair {
        kind: EditKind::Style,
        source: video.clone(),
        target,
        instruction: format!("restyle the video as {}", STYLE_NAMES[style]),
        edit_mask: VideoMask::full(video.frames, video.height, video.width),
        object: None,
    })
}

/// Source is the scene re-rendered without object `index`; target is the
/// scene itself.
pub fn make_insertion_pair(scene: &RenderedScene, index: usize) -> Result<EditPair> {
    let obj = scene
        .spec
        .objects
        .get(index)
        .ok_or_else(|| Error::Datagen(format!("no object {index} in scene")))?;
    let mask = &scene.masks[index];
    let frame_px = scene.video.pixels_per_frame();
    if (0..mask.frames).any(|f| mask.frame_count(f) == 0) {
        return Err(Error::Datagen(format!("object {index} is not visible in every frame")));
    }
    if (0..mask.frames).any(|f| 2 * mask.frame_count(f) > frame_px) {
        return Err(Error::Datagen(format!("object {index} covers more than half the canvas")));
    }
    let source = render(&scene.spec.without_object(index), scene.seed).video;
    Ok(EditPair {
        kind: EditKind::Insert,
        source,
        target: scene.video.clone(),
        instruction: format!("insert {} {} into the video", obj.descriptor().article(), obj.descriptor()),
        edit_mask: mask.clone(),
        object: Some(obj.descriptor()),
    })
}

pub const PLACEMENT_ATTEMPTS: usize = 100;

/// Source is the scene with a new object composited on top; target is the
/// untouched scene. The new object does not overlap existing objects at
/// frame 0.
pub fn make_removal_pair(scene: &RenderedScene, seed: u64) -> Result<EditPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = scene.spec.canvas;
    let frames = scene.video.frames;
    let fg = scene.foreground();
    let taken: Vec<usize> = scene.spec.objects.iter().map(|o| o.color).collect();
    for _ in 0..PLACEMENT_ATTEMPTS {
        let obj = random_object(&mut rng, n, &taken)?;
        let path = obj.trajectory(n, frames);
        let mut overlaps = false;
        obj.raster(n, path[0], |y, x| overlaps |= fg.get(0, y, x));
        if overlaps {
            continue;
        }
        let color = OBJECT_COLORS[obj.color].1;
        let mut source = scene.video.clone();
        let mut mask = VideoMask::empty(frames, n, n);
        for (f, &c) in path.iter().enumerate() {
            obj.raster(n, c, |y, x| {
                source.set_pixel(f, y, x, color);
                mask.set(f, y, x, true);
            });
        }
        return Ok(EditPair {
            kind: EditKind::Remove,
            source,
            target: scene.video.clone(),
            instruction: format!("remove the {} from the video", obj.descriptor()),
            edit_mask: mask,
            object: Some(obj.descriptor()),
        });
    }
    Err(Error::Datagen(format!(
        "no non-overlapping placement in {PLACEMENT_ATTEMPTS} attempts"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModifyMode {
    Subject,
    Background,
}

/// Largest per-frame foreground share for background edits.
pub const MAX_FOREGROUND: f64 = 0.4;

/// Subject mode recolors one object; background mode swaps the background
/// pattern. Both re-render the scene, so nothing outside the edited region
/// changes.
pub fn make_modify_pair(scene: &RenderedScene, mode: ModifyMode, seed: u64) -> Result<EditPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = scene.spec.clone();
    match mode {
        ModifyMode::Subject => {
            let visible: Vec<usize> = (0..spec.objects.len())
                .filter(|&i| scene.masks[i].count() > 0)
                .collect();
            if visible.is_empty() {
                return Err(Error::Datagen("no visible object to modify".into()));
            }
            let i = visible[rng.random_range(0..visible.len())];
            let taken: Vec<usize> = spec.objects.iter().map(|o| o.color).collect();
            let free: Vec<usize> = (0..OBJECT_COLORS.len()).filter(|c| !taken.contains(c)).collect();
            if free.is_empty() {
                return Err(Error::Datagen("no free color to recolor with".into()));
            }
            let old = spec.objects[i].descriptor();
            spec.objects[i].color = free[rng.random_range(0..free.len())];
            let new = spec.objects[i].descriptor();
            Ok(EditPair {
                kind: EditKind::ModifySubject,
                source: scene.video.clone(),
                target: render(&spec, scene.seed).video,
                instruction: format!("turn the {old} {}", new.color_name()),
                edit_mask: scene.masks[i].clone(),
                object: Some(new),
            })
        }
        ModifyMode::Background => {
            let fg = scene.foreground();
            let frame_px = (fg.height * fg.width) as f64;
            let worst = (0..fg.frames)
                .map(|f| fg.frame_count(f) as f64 / frame_px)
                .fold(0.0, f64::max);
            if worst >= MAX_FOREGROUND {
                return Err(Error::Datagen(format!(
                    "foreground covers {:.0}% of a frame, background not separable",
                    worst * 100.0
                )));
            }
            let others: Vec<usize> = (0..BACKGROUNDS.len()).filter(|&b| b != spec.background).collect();
            spec.background = others[rng.random_range(0..others.len())];
            Ok(EditPair {
                kind: EditKind::ModifyBackground,
                source: scene.video.clone(),
                target: render(&spec, scene.seed).video,
                instruction: format!(
                    "replace the background with {}",
                    BACKGROUNDS[spec.background].name
                ),
                edit_mask: fg.complement(),
                object: None,
            })
        }
    }
}

pub const WHITE: [f32; 3] = [1.0, 1.0, 1.0];

/// Copies the masked pixels of the frame where the mask is largest onto a
/// white canvas of the same size, centered.
pub fn reference_from(video: &Video, mask: &VideoMask) -> Result<Video> {
    let best = (0..mask.frames)
        .max_by_key(|&f| (mask.frame_count(f), std::cmp::Reverse(f)))
        .filter(|&f| mask.frame_count(f) > 0)
        .ok_or_else(|| Error::Datagen("object never visible".into()))?;
    let (h, w) = (video.height, video.width);
    let (mut y0, mut y1, mut x0, mut x1) = (h, 0, w, 0);
    for y in 0..h {
        for x in 0..w {
            if mask.get(best, y, x) {
                y0 = y0.min(y);
                y1 = y1.max(y);
                x0 = x0.min(x);
                x1 = x1.max(x);
            }
        }
    }
    let dy = (h as isize - (y0 + y1 + 1) as isize) / 2;
    let dx = (w as isize - (x0 + x1 + 1) as isize) / 2;
    let mut out = Video::filled(1, h, w, WHITE);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if mask.get(best, y, x) {
                let (ty, tx) = ((y as isize + dy) as usize, (x as isize + dx) as usize);
                out.set_pixel(0, ty, tx, video.pixel(best, y, x));
            }
        }
    }
    Ok(out)
}

/// Reference image of the object a local edit is about.
pub fn extract_reference(pair: &EditPair) -> Result<Video> {
    let side = match pair.kind {
        EditKind::Insert | EditKind::ModifySubject => &pair.target,
        EditKind::Remove => &pair.source,
        k => return Err(Error::Datagen(format!("no reference for a {k:?} edit"))),
    };
    reference_from(side, &pair.edit_mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectDiff {
    pub mask: VideoMask,
    /// Dominant palette color inside the mask; the shape is inferred from
    /// the visible pixels and can be wrong for partly occluded objects.
    pub descriptor: Option<ObjectDescriptor>,
}

fn palette_index(p: [f32; 3]) -> Option<usize> {
    OBJECT_COLORS.iter().position(|(_, c)| *c == p)
}

/// Dominant palette color inside `mask` on `video`, with its pixel count.
fn dominant_color(video: &Video, mask: &VideoMask) -> Option<(usize, usize)> {
    let mut counts = [0usize; OBJECT_COLORS.len()];
    for f in 0..mask.frames {
        for y in 0..mask.height {
            for x in 0..mask.width {
                if mask.get(f, y, x) {
                    if let Some(c) = palette_index(video.pixel(f, y, x)) {
                        counts[c] += 1;
                    }
                }
            }
        }
    }
    (0..counts.len())
        .max_by_key(|&c| (counts[c], std::cmp::Reverse(c)))
        .filter(|&c| counts[c] > 0)
        .map(|c| (c, counts[c]))
}

/// Shape from how much of its bounding box the object fills.
fn classify_shape(video: &Video, mask: &VideoMask, color: usize) -> Shape {
    let rgb = OBJECT_COLORS[color].1;
    let hit = |f, y, x| mask.get(f, y, x) && video.pixel(f, y, x) == rgb;
    let count = |f| {
        (0..mask.height)
            .flat_map(|y| (0..mask.width).map(move |x| (y, x)))
            .filter(|&(y, x)| hit(f, y, x))
            .count()
    };
    let best = (0..mask.frames).max_by_key(|&f| count(f)).unwrap_or(0);
    let (mut y0, mut y1, mut x0, mut x1, mut n) = (usize::MAX, 0, usize::MAX, 0, 0usize);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if hit(best, y, x) {
                y0 = y0.min(y);
                y1 = y1.max(y);
                x0 = x0.min(x);
                x1 = x1.max(x);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Shape::Disk;
    }
    let fill = n as f64 / ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
    if fill > 0.9 {
        Shape::Square
    } else if fill > 0.65 {
        Shape::Disk
    } else {
        Shape::Triangle
    }
}

/// Pixels that differ between the two videos at any channel, plus a guess
/// at the object involved. `None` when the videos are identical.
pub fn diff_objects(source: &Video, target: &Video) -> Result<Option<ObjectDiff>> {
    if !source.same_shape(target) {
        return Err(Error::Shape("diff_objects needs equally shaped videos".into()));
    }
    let mut mask = VideoMask::empty(source.frames, source.height, source.width);
    for f in 0..source.frames {
        for y in 0..source.height {
            for x in 0..source.width {
                mask.set(f, y, x, source.pixel(f, y, x) != target.pixel(f, y, x));
            }
        }
    }
    if mask.count() == 0 {
        return Ok(None);
    }
    let candidates = [source, target]
        .into_iter()
        .filter_map(|v| dominant_color(v, &mask).map(|(c, n)| (v, c, n)));
    let descriptor = candidates
        .max_by_key(|&(_, _, n)| n)
        .map(|(v, color, _)| ObjectDescriptor {
            shape: classify_shape(v, &mask, color),
            color,
        });
    Ok(Some(ObjectDiff { mask, descriptor }))
}
