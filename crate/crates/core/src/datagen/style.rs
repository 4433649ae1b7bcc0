//! Eighteen per-pixel style transforms (id 0 is the identity) and the
//! gradient-threshold edge map used to check that structure survives them.

use crate::codec::{Video, VideoMask};
use crate::error::{Error, Result};

pub const NUM_STYLES: usize = 18;

pub const STYLE_NAMES: [&str; NUM_STYLES] = [
    "original",
    "grayscale",
    "negative",
    "sepia",
    "red-green swap",
    "green-blue swap",
    "channel rotation",
    "warm tint",
    "cool tint",
    "bright gamma",
    "dark gamma",
    "faded",
    "high contrast",
    "duotone",
    "solarized",
    "night",
    "wave texture",
    "diagonal texture",
];

/// Edge threshold on the per-channel forward difference.
pub const EDGE_THRESHOLD: f32 = 0.1;

fn luma(p: [f32; 3]) -> f32 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

/// Style `id` applied to pixel `p` at spatial location `(y, x)`. Only the two
/// texture styles depend on location; no style reads other pixels.
pub fn style_pixel(id: usize, p: [f32; 3], y: usize, x: usize) -> [f32; 3] {
    let [r, g, b] = p;
    let out = match id {
        0 => p,
        1 => {
            let l = luma(p);
            [l, l, l]
        }
        2 => [1.0 - r, 1.0 - g, 1.0 - b],
        3 => [
            0.393 * r + 0.769 * g + 0.189 * b,
            0.349 * r + 0.686 * g + 0.168 * b,
            0.272 * r + 0.534 * g + 0.131 * b,
        ]
        .map(|v| v * 0.8),
        4 => [g, r, b],
        5 => [r, b, g],
        6 => [g, b, r],
        7 => [0.9 * r + 0.1, g, 0.8 * b],
        8 => [0.8 * r, g, 0.9 * b + 0.1],
        9 => p.map(|v| v.powf(0.7)),
        10 => p.map(|v| v.powf(1.5)),
        11 => p.map(|v| 0.5 + 0.6 * (v - 0.5)),
        12 => p.map(|v| 0.5 + 1.4 * (v - 0.5)),
        13 => {
            let l = luma(p);
            let (dark, light) = ([0.1, 0.1, 0.35], [0.95, 0.8, 0.3]);
            [0, 1, 2].map(|c| dark[c] + l * (light[c] - dark[c]))
        }
        14 => p.map(|v| if v < 0.5 { v } else { 1.0 - v }),
        15 => [0.6 * r, 0.6 * g, 0.6 * b + 0.1],
        16 => {
            let t = 0.03 * (y as f32 * std::f32::consts::TAU / 16.0).sin();
            p.map(|v| v + t)
        }
        17 => {
            let t = 0.025 * ((x + y) as f32 * std::f32::consts::TAU / 12.0).sin();
            p.map(|v| v + t)
        }
        _ => unreachable!("style id checked by caller"),
    };
    out.map(|v| v.clamp(0.0, 1.0))
}

pub fn apply_style(video: &Video, id: usize) -> Result<Video> {
    if id >= NUM_STYLES {
        return Err(Error::Datagen(format!("unknown style id {id}, expected < {NUM_STYLES}")));
    }
    let mut out = video.clone();
    for f in 0..video.frames {
        for y in 0..video.height {
            for x in 0..video.width {
                out.set_pixel(f, y, x, style_pixel(id, video.pixel(f, y, x), y, x));
            }
        }
    }
    Ok(out)
}

/// A pixel is an edge when some channel changes by more than
/// [`EDGE_THRESHOLD`] toward its right or lower neighbour.
pub fn edge_map(video: &Video) -> VideoMask {
    let mut m = VideoMask::empty(video.frames, video.height, video.width);
    let step = |a: [f32; 3], b: [f32; 3]| (0..3).any(|c| (a[c] - b[c]).abs() > EDGE_THRESHOLD);
    for f in 0..video.frames {
        for y in 0..video.height {
            for x in 0..video.width {
                let p = video.pixel(f, y, x);
                let right = x + 1 < video.width && step(p, video.pixel(f, y, x + 1));
                let down = y + 1 < video.height && step(p, video.pixel(f, y + 1, x));
                m.set(f, y, x, right || down);
            }
        }
    }
    m
}

/// Fraction of pixels on which the two edge maps agree.
pub fn edge_agreement(a: &Video, b: &Video) -> f64 {
    let (ea, eb) = (edge_map(a), edge_map(b));
    let same = ea.data.iter().zip(&eb.data).filter(|(x, y)| x == y).count();
    same as f64 / ea.data.len() as f64
}
