//! Pixel-space metrics and evaluation reports.
//!
//! The metrics are desk-scale proxies: reconstruction error against the
//! paired target, boundary-frame error for first/last-frame generation,
//! out-of-mask preservation for editing, and color-histogram identity for
//! reference-driven tasks.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::codec::{decode, LatentGrid, LatentRole, Video, VideoMask};
use crate::datagen::verify::{histogram, intersection, masked_pixels, reference_pixels};
use crate::dit::{prepare_conditions, sample, ModelConfig, SampleOptions};
use crate::error::{Error, Result};
use crate::instruction::{Instruction, TaskKind, TaskSample};
use crate::params::ParamStore;
use crate::semantic::encode_instruction;

pub const PSNR_CAP: f64 = 100.0;

fn check_shapes(a: &Video, b: &Video, what: &str) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Metric(format!(
            "{what}: shape {}x{}x{} vs {}x{}x{}",
            a.frames, a.height, a.width, b.frames, b.height, b.width
        )))
    }
}

pub fn mse(a: &Video, b: &Video) -> Result<f64> {
    check_shapes(a, b, "mse")?;
    let s: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum();
    Ok(s / a.data.len() as f64)
}

/// PSNR for unit-range signals, capped at [`PSNR_CAP`] dB.
pub fn psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
}

/// MSE of the first generated frame against `first` and of the last
/// against `last`.
pub fn boundary_frame_error(generated: &Video, first: &Video, last: &Video) -> Result<(f64, f64)> {
    let f = generated.frames;
    let a = mse(&generated.frame(0), first)?;
    let b = mse(&generated.frame(f - 1), last)?;
    Ok((a, b))
}

/// MSE restricted to pixels outside `mask`, averaged over channels.
pub fn preservation_error(source: &Video, generated: &Video, mask: &VideoMask) -> Result<f64> {
    check_shapes(source, generated, "preservation_error")?;
    if !mask.matches_video(source) {
        return Err(Error::Metric("preservation_error: mask shape differs from video".into()));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for (i, &inside) in mask.data.iter().enumerate() {
        if !inside {
            for c in 0..3 {
                total += (source.data[3 * i + c] as f64 - generated.data[3 * i + c] as f64).powi(2);
            }
            n += 3;
        }
    }
    if n == 0 {
        return Err(Error::Metric("preservation_error: mask covers every pixel".into()));
    }
    Ok(total / n as f64)
}

/// Histogram intersection between the reference's non-white pixels and the
/// generated pixels inside `region`, averaged over frames where the region
/// is non-empty.
pub fn identity_score(reference: &Video, generated: &Video, region: &VideoMask) -> Result<f64> {
    if !region.matches_video(generated) {
        return Err(Error::Metric("identity_score: region shape differs from video".into()));
    }
    if region.count() == 0 {
        return Err(Error::Metric("identity_score: empty region".into()));
    }
    let href = histogram(reference_pixels(reference))
        .ok_or_else(|| Error::Metric("identity_score: reference has no object pixels".into()))?;
    let mut scores = Vec::new();
    for f in 0..region.frames {
        if region.frame_count(f) == 0 {
            continue;
        }
        let frame_mask = single_frame(region, f);
        let h = histogram(masked_pixels(&generated.frame(f), &frame_mask)).expect("non-empty frame");
        scores.push(intersection(&href, &h));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

fn single_frame(m: &VideoMask, f: usize) -> VideoMask {
    let n = m.height * m.width;
    VideoMask {
        frames: 1,
        height: m.height,
        width: m.width,
        data: m.data[f * n..(f + 1) * n].to_vec(),
    }
}

/// Pixels where the ground-truth target departs from the condition video and
/// shows a color present in the reference: where the referenced object is
/// expected to appear.
pub fn reference_region(reference: &Video, target: &Video, condition: &Video) -> Result<VideoMask> {
    check_shapes(target, condition, "reference_region")?;
    let href = histogram(reference_pixels(reference)).unwrap_or_default();
    let mut m = VideoMask::empty(target.frames, target.height, target.width);
    for f in 0..target.frames {
        for y in 0..target.height {
            for x in 0..target.width {
                let p = target.pixel(f, y, x);
                let in_ref = histogram(std::iter::once(p))
                    .map(|h| intersection(&h, &href) > 0.0)
                    .unwrap_or(false);
                m.set(f, y, x, in_ref && p != condition.pixel(f, y, x));
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub sample: String,
    pub task: TaskKind,
    pub recon_mse: f64,
    pub psnr: f64,
    pub boundary_first: Option<f64>,
    pub boundary_last: Option<f64>,
    pub preservation: Option<f64>,
    pub identity: Option<f64>,
}

pub const COLUMNS: [&str; 8] = [
    "sample",
    "task",
    "recon_mse",
    "psnr",
    "boundary_first",
    "boundary_last",
    "preservation_error",
    "identity_score",
];

impl EvalRow {
    fn metrics(&self) -> [Option<f64>; 6] {
        [
            Some(self.recon_mse),
            Some(self.psnr),
            self.boundary_first,
            self.boundary_last,
            self.preservation,
            self.identity,
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub sample_steps: usize,
    pub seed: u64,
    pub guidance: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            sample_steps: 16,
            seed: 0,
            guidance: 1.0,
        }
    }
}

fn condition_video(s: &TaskSample, role: LatentRole) -> Result<Option<Video>> {
    s.conditions
        .iter()
        .find(|g| g.role() == role)
        .map(decode)
        .transpose()
}

/// Generates a video for `instruction` from its encoded `conditions` and
/// clamps it to the unit range.
pub fn generate(
    params: &ParamStore,
    cfg: &ModelConfig,
    instruction: &Instruction,
    task: TaskKind,
    conditions: &[LatentGrid],
    target_shape: (usize, usize, usize),
    opts: &SampleOptions,
) -> Result<Video> {
    let semantic = encode_instruction(&cfg.semantic, params, instruction, conditions)?;
    let conds = prepare_conditions(task, conditions, target_shape)?;
    let latent = sample(params, cfg, task, &conds, semantic, target_shape, opts)?;
    let mut v = decode(&latent)?;
    v.data.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
    Ok(v)
}

/// Metrics for one generated video against its sample.
pub fn score(name: &str, s: &TaskSample, generated: &Video) -> Result<EvalRow> {
    let target = decode(&s.target)?;
    let recon = mse(generated, &target)?;
    let mut row = EvalRow {
        sample: name.to_string(),
        task: s.task,
        recon_mse: recon,
        psnr: psnr(recon),
        boundary_first: None,
        boundary_last: None,
        preservation: None,
        identity: None,
    };
    if s.task == TaskKind::FLF2V {
        let first = condition_video(s, LatentRole::FirstFrame)?;
        let last = condition_video(s, LatentRole::LastFrame)?;
        if let (Some(a), Some(b)) = (first, last) {
            let (e0, e1) = boundary_frame_error(generated, &a, &b)?;
            row.boundary_first = Some(e0);
            row.boundary_last = Some(e1);
        }
    }
    let source = condition_video(s, LatentRole::ConditionVideo)?;
    if let (Some(src), Some(mask)) = (&source, &s.edit_mask) {
        if mask.count() < mask.data.len() && src.same_shape(generated) {
            row.preservation = Some(preservation_error(src, generated, mask)?);
        }
    }
    if let (Some(src), Some(reference)) = (&source, condition_video(s, LatentRole::ReferenceImage)?) {
        if src.same_shape(&target) {
            let region = reference_region(&reference, &target, src)?;
            if region.count() > 0 {
                row.identity = Some(identity_score(&reference, generated, &region)?);
            }
        }
    }
    Ok(row)
}

/// Generates and scores every sample; rows keep the input order. Sample `i`
/// uses noise seed `opts.seed + i`.
pub fn evaluate(
    params: &ParamStore,
    cfg: &ModelConfig,
    samples: &[(String, TaskSample)],
    opts: &EvalOptions,
) -> Result<Vec<EvalRow>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, (name, s))| {
            let so = SampleOptions {
                steps: opts.sample_steps,
                seed: opts.seed.wrapping_add(i as u64),
                guidance: opts.guidance,
            };
            let generated = generate(
                params,
                cfg,
                &s.instruction,
                s.task,
                &s.conditions,
                s.target.shape(),
                &so,
            )?;
            score(name, s, &generated)
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

pub fn report_csv(rows: &[EvalRow]) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let metrics: Vec<String> = r.metrics().iter().map(|m| cell(*m)).collect();
        let _ = writeln!(out, "{},{},{}", r.sample, r.task, metrics.join(","));
    }
    out
}

/// Mean and population standard deviation of the present values.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

const HEADER: &str = "\
# All metrics are desk-scale proxies computed in pixel space.
# recon_mse / psnr: generated video vs paired target.
# boundary_first / boundary_last: MSE of first / last generated frame vs the given boundary frames.
# preservation_error: MSE outside the edit mask vs the source video.
# identity_score: color-histogram intersection of reference object vs generated object region.
";

/// Plain-text aggregate table: one line per metric and task group, then the
/// run metadata.
pub fn report_table(rows: &[EvalRow], meta: &[(String, String)]) -> String {
    let mut out = String::from(HEADER);
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}: {v}");
    }
    let _ = writeln!(out, "{:<14} {:<20} {:>5} {:>14} {:>14}", "group", "metric", "n", "mean", "std");
    let mut groups: Vec<(String, Vec<&EvalRow>)> = vec![("all".into(), rows.iter().collect())];
    for t in TaskKind::ALL {
        let g: Vec<&EvalRow> = rows.iter().filter(|r| r.task == t).collect();
        if !g.is_empty() {
            groups.push((t.name().into(), g));
        }
    }
    for (name, g) in groups {
        for (m, col) in COLUMNS[2..].iter().enumerate() {
            let vals: Vec<f64> = g.iter().filter_map(|r| r.metrics()[m]).collect();
            if let Some((mean, std)) = mean_std(&vals) {
                let _ = writeln!(
                    out,
                    "{name:<14} {col:<20} {:>5} {mean:>14.6e} {std:>14.6e}",
                    vals.len()
                );
            }
        }
    }
    out
}
