//! Procedural moving-shape scenes with exact per-object visibility masks.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Video, VideoMask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disk,
    Square,
    Triangle,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Disk, Shape::Square, Shape::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Disk => "disk",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
        }
    }

    /// Whether a point at offset `(dx, dy)` from the center lies inside a
    /// shape of half-extent `r`. Triangles point up.
    pub fn contains(self, dx: f32, dy: f32, r: f32) -> bool {
        match self {
            Shape::Disk => dx * dx + dy * dy <= r * r,
            Shape::Square => dx.abs() <= r && dy.abs() <= r,
            Shape::Triangle => dy >= -r && dy <= r && dx.abs() <= (dy + r) * 0.5,
        }
    }
}

/// Saturated object colors; no two share a 4-level histogram bin and none
/// is close to a background color.
pub const OBJECT_COLORS: [(&str, [f32; 3]); 8] = [
    ("red", [0.9375, 0.125, 0.125]),
    ("green", [0.125, 0.8125, 0.1875]),
    ("blue", [0.125, 0.25, 0.9375]),
    ("yellow", [0.9375, 0.875, 0.125]),
    ("magenta", [0.875, 0.125, 0.8125]),
    ("cyan", [0.125, 0.875, 0.875]),
    ("orange", [0.9375, 0.5625, 0.0625]),
    ("purple", [0.5625, 0.1875, 0.875]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    HorizontalStripes,
    VerticalStripes,
    Diagonal,
    Checks,
}

pub struct Background {
    pub name: &'static str,
    pub colors: [[f32; 3]; 2],
    pub layout: Layout,
}

/// Muted two-tone patterns whose tones differ by 1/16 per channel.
pub const BACKGROUNDS: [Background; 6] = [
    Background {
        name: "gray stripes",
        colors: [[0.3125, 0.3125, 0.3125], [0.375, 0.375, 0.375]],
        layout: Layout::HorizontalStripes,
    },
    Background {
        name: "sand checks",
        colors: [[0.4375, 0.375, 0.25], [0.375, 0.3125, 0.1875]],
        layout: Layout::Checks,
    },
    Background {
        name: "teal stripes",
        colors: [[0.1875, 0.3125, 0.3125], [0.25, 0.375, 0.375]],
        layout: Layout::VerticalStripes,
    },
    Background {
        name: "plum diagonals",
        colors: [[0.3125, 0.1875, 0.3125], [0.375, 0.25, 0.375]],
        layout: Layout::Diagonal,
    },
    Background {
        name: "olive checks",
        colors: [[0.3125, 0.3125, 0.1875], [0.375, 0.375, 0.25]],
        layout: Layout::Checks,
    },
    Background {
        name: "slate stripes",
        colors: [[0.1875, 0.1875, 0.3125], [0.25, 0.25, 0.375]],
        layout: Layout::VerticalStripes,
    },
];

const STRIPE: usize = 8;

impl Background {
    pub fn color_at(&self, y: usize, x: usize, phase: usize) -> [f32; 3] {
        let (y, x) = (y + phase, x + phase);
        let band = match self.layout {
            Layout::HorizontalStripes => y / STRIPE,
            Layout::VerticalStripes => x / STRIPE,
            Layout::Diagonal => (x + y) / STRIPE,
            Layout::Checks => x / STRIPE + y / STRIPE,
        };
        self.colors[band % 2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectDescriptor {
    pub shape: Shape,
    pub color: usize,
}

impl ObjectDescriptor {
    pub fn color_name(&self) -> &'static str {
        OBJECT_COLORS[self.color].0
    }
}

impl ObjectDescriptor {
    /// Indefinite article for the descriptor.
    pub fn article(&self) -> &'static str {
        match self.color_name().as_bytes().first() {
            Some(b'a' | b'e' | b'i' | b'o' | b'u') => "an",
            _ => "a",
        }
    }
}

impl fmt::Display for ObjectDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.color_name(), self.shape.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    /// Index into [`OBJECT_COLORS`].
    pub color: usize,
    /// Radius or half side length, in pixels.
    pub size: f32,
    /// Center at frame 0, `[x, y]`.
    pub position: [f32; 2],
    /// Pixels per frame, `[x, y]`.
    pub velocity: [f32; 2],
}

impl ObjectSpec {
    pub fn descriptor(&self) -> ObjectDescriptor {
        ObjectDescriptor {
            shape: self.shape,
            color: self.color,
        }
    }

    /// Centers for each frame, reflecting off the canvas border so the shape
    /// stays inside.
    pub fn trajectory(&self, canvas: usize, frames: usize) -> Vec<[f32; 2]> {
        let (lo, hi) = (self.size, canvas as f32 - self.size);
        let mut p = self.position;
        let mut v = self.velocity;
        let mut out = Vec::with_capacity(frames);
        for _ in 0..frames {
            out.push(p);
            for a in 0..2 {
                p[a] += v[a];
                if p[a] < lo {
                    p[a] = 2.0 * lo - p[a];
                    v[a] = -v[a];
                } else if p[a] > hi {
                    p[a] = 2.0 * hi - p[a];
                    v[a] = -v[a];
                }
            }
        }
        out
    }

    fn motion_words(&self) -> String {
        let h = if self.velocity[0] < 0.0 { "left" } else { "right" };
        let v = if self.velocity[1] < 0.0 { "up" } else { "down" };
        format!("{v} and {h}")
    }

    /// Visits every pixel covered at frame `f`.
    pub fn raster(&self, canvas: usize, center: [f32; 2], mut visit: impl FnMut(usize, usize)) {
        let r = self.size;
        let y0 = (center[1] - r).floor().max(0.0) as usize;
        let y1 = ((center[1] + r).ceil() as usize).min(canvas);
        let x0 = (center[0] - r).floor().max(0.0) as usize;
        let x1 = ((center[0] + r).ceil() as usize).min(canvas);
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = x as f32 + 0.5 - center[0];
                let dy = y as f32 + 0.5 - center[1];
                if self.shape.contains(dx, dy, r) {
                    visit(y, x);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub canvas: usize,
    pub frames: usize,
    /// Index into [`BACKGROUNDS`].
    pub background: usize,
    /// Painted in order; later objects occlude earlier ones.
    pub objects: Vec<ObjectSpec>,
}

pub const MIN_SIZE: f32 = 5.0;
pub const MAX_SIZE: f32 = 8.0;

/// A random object whose color is not in `taken`.
pub fn random_object(rng: &mut impl Rng, canvas: usize, taken: &[usize]) -> Result<ObjectSpec> {
    let free: Vec<usize> = (0..OBJECT_COLORS.len()).filter(|c| !taken.contains(c)).collect();
    if free.is_empty() {
        return Err(Error::Datagen("no free object color".into()));
    }
    let size = rng.random_range(MIN_SIZE..=MAX_SIZE).round();
    let span = canvas as f32 - 2.0 * size;
    let mut speed = || {
        let s: f32 = rng.random_range(1.5..4.0);
        if rng.random::<bool>() {
            s
        } else {
            -s
        }
    };
    let velocity = [speed(), speed()];
    Ok(ObjectSpec {
        shape: Shape::ALL[rng.random_range(0..Shape::ALL.len())],
        color: free[rng.random_range(0..free.len())],
        size,
        position: [
            size + rng.random::<f32>() * span,
            size + rng.random::<f32>() * span,
        ],
        velocity,
    })
}

impl SceneSpec {
    pub fn random(rng: &mut impl Rng, canvas: usize, frames: usize, objects: usize) -> Result<Self> {
        if canvas < 4 * MAX_SIZE as usize || frames == 0 {
            return Err(Error::Datagen(format!(
                "canvas {canvas} / frames {frames} too small for a scene"
            )));
        }
        let mut spec = SceneSpec {
            canvas,
            frames,
            background: rng.random_range(0..BACKGROUNDS.len()),
            objects: Vec::new(),
        };
        for _ in 0..objects {
            let taken: Vec<usize> = spec.objects.iter().map(|o| o.color).collect();
            spec.objects.push(random_object(rng, canvas, &taken)?);
        }
        Ok(spec)
    }

    /// Plain-language description used for generation instructions.
    pub fn describe(&self) -> String {
        let objs: Vec<String> = self
            .objects
            .iter()
            .map(|o| {
                let d = o.descriptor();
                format!("{} {d} moving {}", d.article(), o.motion_words())
            })
            .collect();
        let bg = BACKGROUNDS[self.background].name;
        if objs.is_empty() {
            format!("an empty scene of {bg}")
        } else {
            format!("{} on {bg}", objs.join(" and "))
        }
    }

    pub fn without_object(&self, index: usize) -> SceneSpec {
        let mut s = self.clone();
        s.objects.remove(index);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub spec: SceneSpec,
    pub seed: u64,
    pub video: Video,
    /// Visible pixels of each object, in spec order.
    pub masks: Vec<VideoMask>,
}

impl RenderedScene {
    pub fn foreground(&self) -> VideoMask {
        let v = &self.video;
        self.masks
            .iter()
            .fold(VideoMask::empty(v.frames, v.height, v.width), |a, m| a.union(m))
    }
}

/// Renders `spec`; the seed picks the background pattern phase.
pub fn render(spec: &SceneSpec, seed: u64) -> RenderedScene {
    let phase = ChaCha8Rng::seed_from_u64(seed).random_range(0..2 * STRIPE);
    let n = spec.canvas;
    let bg = &BACKGROUNDS[spec.background];
    let mut video = Video::zeros(spec.frames, n, n);
    let mut masks = vec![VideoMask::empty(spec.frames, n, n); spec.objects.len()];
    let paths: Vec<_> = spec
        .objects
        .iter()
        .map(|o| o.trajectory(n, spec.frames))
        .collect();
    for f in 0..spec.frames {
        for y in 0..n {
            for x in 0..n {
                video.set_pixel(f, y, x, bg.color_at(y, x, phase));
            }
        }
        for (i, o) in spec.objects.iter().enumerate() {
            let color = OBJECT_COLORS[o.color].1;
            o.raster(n, paths[i][f], |y, x| {
                video.set_pixel(f, y, x, color);
                for m in masks.iter_mut().take(i) {
                    m.set(f, y, x, false);
                }
                masks[i].set(f, y, x, true);
            });
        }
    }
    RenderedScene {
        spec: spec.clone(),
        seed,
        video,
        masks,
    }
}
