//! Whole-dataset construction: per-task sample recipes, verification with
//! retries, and export to a manifest plus TOMN tensors.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::pairs::{
    extract_reference, make_insertion_pair, make_modify_pair, make_removal_pair, make_style_pair,
    reference_from, EditKind, EditPair, ModifyMode,
};
use super::scene::{random_object, render, RenderedScene, SceneSpec};
use super::style::NUM_STYLES;
use super::verify::{
    checker_a, histogram, intersection, masked_pixels, reference_pixels, verify_sample, Verdict,
    MIN_HIST_INTERSECTION,
};
use crate::codec::{encode, LatentRole, Video, VideoMask};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::instruction::{
    condition_role, write_manifest, Instruction, ManifestRecord, ManifestRef, RefKind, TaskKind,
    TaskSample, VisualRef,
};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub counts: BTreeMap<TaskKind, usize>,
    pub seed: u64,
    pub canvas: usize,
    pub frames: usize,
    /// Frames kept per exported clip.
    pub clip_frames: usize,
    /// Spatial subsampling stride applied on export.
    pub downsample: usize,
    pub objects: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            counts: TaskKind::ALL.iter().map(|&t| (t, 4)).collect(),
            seed: 7,
            canvas: 64,
            frames: 8,
            clip_frames: 4,
            downsample: 4,
            objects: 2,
        }
    }
}

impl DatasetConfig {
    /// Keys: `seed`, `canvas`, `frames`, `clip_frames`, `downsample`,
    /// `objects` and `count.<Task>`.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        const KEYS: [&str; 6] = ["seed", "canvas", "frames", "clip_frames", "downsample", "objects"];
        kv.check_keys(|k| KEYS.contains(&k) || k.starts_with("count."))?;
        let d = Self::default();
        let mut cfg = Self {
            counts: d.counts.clone(),
            seed: kv.get_or("seed", d.seed)?,
            canvas: kv.get_or("canvas", d.canvas)?,
            frames: kv.get_or("frames", d.frames)?,
            clip_frames: kv.get_or("clip_frames", d.clip_frames)?,
            downsample: kv.get_or("downsample", d.downsample)?,
            objects: kv.get_or("objects", d.objects)?,
        };
        let counts: Vec<_> = kv.with_prefix("count.").collect();
        if !counts.is_empty() {
            cfg.counts = TaskKind::ALL.iter().map(|&t| (t, 0)).collect();
            for (name, v) in counts {
                let t = TaskKind::parse(name)
                    .ok_or_else(|| Error::Config(format!("unknown task in count.{name}")))?;
                let n = v
                    .parse()
                    .map_err(|_| Error::Config(format!("count.{name}: cannot parse \"{v}\"")))?;
                cfg.counts.insert(t, n);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.downsample == 0 || self.canvas % self.downsample != 0 {
            return Err(Error::Config(format!(
                "canvas {} not divisible by downsample {}",
                self.canvas, self.downsample
            )));
        }
        let px = self.canvas / self.downsample;
        if px % crate::codec::PATCH != 0 {
            return Err(Error::Config(format!(
                "exported size {px} not divisible by the codec patch"
            )));
        }
        if self.clip_frames == 0 || self.clip_frames > self.frames {
            return Err(Error::Config(format!(
                "clip_frames {} must be in 1..={}",
                self.clip_frames, self.frames
            )));
        }
        if self.objects == 0 {
            return Err(Error::Config("scenes need at least one object".into()));
        }
        Ok(())
    }

    pub fn export(&self, v: &Video) -> Video {
        v.crop_and_subsample(self.clip_frames, self.downsample)
    }

    fn export_mask(&self, m: &VideoMask) -> VideoMask {
        m.crop_and_subsample(self.clip_frames, self.downsample)
    }
}

/// One exported training example, still in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub name: String,
    pub task: TaskKind,
    /// Explicit task written to the manifest when inference alone would
    /// disagree.
    pub task_override: Option<TaskKind>,
    pub text: String,
    pub refs: Vec<(RefKind, Video)>,
    pub target: Video,
    pub mask: Option<VideoMask>,
}

impl GeneratedSample {
    pub fn instruction(&self) -> Instruction {
        Instruction::new(
            self.text.clone(),
            self.refs
                .iter()
                .map(|(k, v)| VisualRef::inline(*k, v.clone()))
                .collect(),
        )
    }

    pub fn to_task_sample(&self) -> Result<TaskSample> {
        let conditions = self
            .refs
            .iter()
            .map(|(k, v)| encode(v, condition_role(*k)))
            .collect::<Result<Vec<_>>>()?;
        TaskSample::new(
            self.instruction(),
            self.task_override,
            conditions,
            encode(&self.target, LatentRole::Target)?,
            self.mask.clone(),
        )
    }
}

fn file_stem(kind: RefKind) -> &'static str {
    match kind {
        RefKind::Image => "reference",
        RefKind::Video => "source",
        RefKind::FirstFrame => "first",
        RefKind::LastFrame => "last",
    }
}

/// SplitMix64 step, used to derive independent per-sample seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

enum Attempt {
    Done(GeneratedSample),
    /// Verification rejected the pair.
    Rejected,
    /// A construction precondition failed; retry with another seed.
    Skipped,
}

fn scene(cfg: &DatasetConfig, seed: u64) -> Result<RenderedScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SceneSpec::random(&mut rng, cfg.canvas, cfg.frames, cfg.objects)?;
    Ok(render(&spec, seed))
}

fn edit_pair(sc: &RenderedScene, kind: EditKind, seed: u64) -> Result<EditPair> {
    match kind {
        EditKind::Style => {
            let id = 1 + (seed % (NUM_STYLES as u64 - 1)) as usize;
            make_style_pair(&sc.video, id)
        }
        EditKind::Insert => make_insertion_pair(sc, sc.spec.objects.len() - 1),
        EditKind::Remove => make_removal_pair(sc, mix_seed(seed, 1)),
        EditKind::ModifySubject => make_modify_pair(sc, ModifyMode::Subject, mix_seed(seed, 2)),
        EditKind::ModifyBackground => make_modify_pair(sc, ModifyMode::Background, mix_seed(seed, 2)),
    }
}

fn attempt(cfg: &DatasetConfig, task: TaskKind, index: usize, seed: u64) -> Result<Attempt> {
    let sc = scene(cfg, seed)?;
    let name = format!("{}_{index:03}", task.name());
    let target = cfg.export(&sc.video);
    let f = target.frames;
    let base = GeneratedSample {
        name,
        task,
        task_override: None,
        text: sc.spec.describe(),
        refs: Vec::new(),
        target,
        mask: None,
    };
    let sample = match task {
        TaskKind::T2V => base,
        TaskKind::I2V => GeneratedSample {
            text: format!("animate the first frame: {}", base.text),
            refs: vec![(RefKind::FirstFrame, base.target.frame(0))],
            ..base
        },
        TaskKind::FLF2V => GeneratedSample {
            text: format!("connect the first and last frames: {}", base.text),
            refs: vec![
                (RefKind::FirstFrame, base.target.frame(0)),
                (RefKind::LastFrame, base.target.frame(f - 1)),
            ],
            ..base
        },
        TaskKind::InContextEdit => {
            let kind = EditKind::ALL[index % EditKind::ALL.len()];
            let pair = match edit_pair(&sc, kind, seed) {
                Ok(p) => p,
                Err(Error::Datagen(_)) => return Ok(Attempt::Skipped),
                Err(e) => return Err(e),
            };
            let reference = match kind {
                EditKind::Insert | EditKind::Remove => Some(extract_reference(&pair)?),
                _ => None,
            };
            if verify_sample(&pair, reference.as_ref()) != Verdict::Accept {
                return Ok(Attempt::Rejected);
            }
            let mut refs = Vec::new();
            if let Some(r) = &reference {
                refs.push((RefKind::Image, r.crop_and_subsample(1, cfg.downsample)));
            }
            refs.push((RefKind::Video, cfg.export(&pair.source)));
            GeneratedSample {
                name: format!("{}_{}", base.name, kind.label()),
                task_override: reference.as_ref().map(|_| TaskKind::InContextEdit),
                text: pair.instruction.clone(),
                refs,
                target: cfg.export(&pair.target),
                mask: Some(cfg.export_mask(&pair.edit_mask)),
                ..base
            }
        }
        TaskKind::InContextGen => {
            // Swap the first object for a new identity on the same path; the
            // new identity is shown as a reference image.
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 3));
            let taken: Vec<usize> = sc.spec.objects.iter().map(|o| o.color).collect();
            let fresh = random_object(&mut rng, cfg.canvas, &taken)?;
            let mut spec = sc.spec.clone();
            let old = spec.objects[0].descriptor();
            spec.objects[0].shape = fresh.shape;
            spec.objects[0].color = fresh.color;
            let new = spec.objects[0].descriptor();
            let swapped = render(&spec, sc.seed);
            let Ok(reference) = reference_from(&swapped.video, &swapped.masks[0]) else {
                return Ok(Attempt::Skipped);
            };
            let pair = EditPair {
                kind: EditKind::ModifySubject,
                source: sc.video.clone(),
                target: swapped.video.clone(),
                instruction: String::new(),
                edit_mask: sc.masks[0].union(&swapped.masks[0]),
                object: Some(new),
            };
            let identity = match (
                histogram(reference_pixels(&reference)),
                histogram(masked_pixels(&swapped.video, &swapped.masks[0])),
            ) {
                (Some(a), Some(b)) => intersection(&a, &b),
                _ => 0.0,
            };
            if checker_a(&pair).is_some() || identity < MIN_HIST_INTERSECTION {
                return Ok(Attempt::Rejected);
            }
            GeneratedSample {
                text: format!("the {new} from the reference image takes the place of the {old}"),
                refs: vec![
                    (RefKind::Image, reference.crop_and_subsample(1, cfg.downsample)),
                    (RefKind::Video, cfg.export(&sc.video)),
                ],
                target: cfg.export(&swapped.video),
                ..base
            }
        }
    };
    Ok(Attempt::Done(sample))
}

pub const MAX_ATTEMPTS: u64 = 32;
/// Abort threshold on the share of verified pairs that were rejected.
pub const MAX_REJECTION_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct BuildStats {
    pub accepted: usize,
    pub rejected: usize,
    pub skipped: usize,
}

/// Generates every sample in memory, in task order then index order.
pub fn build_samples(cfg: &DatasetConfig) -> Result<(Vec<GeneratedSample>, BuildStats)> {
    cfg.validate()?;
    let jobs: Vec<(usize, TaskKind, usize)> = cfg
        .counts
        .iter()
        .flat_map(|(&t, &n)| (0..n).map(move |i| (t, i)))
        .enumerate()
        .map(|(k, (t, i))| (k, t, i))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(_, task, index)| {
            let (mut rejected, mut skipped) = (0, 0);
            let base = mix_seed(cfg.seed, ((TaskKind::ALL.iter().position(|&t| t == task).unwrap() as u64) << 32) | index as u64);
            for a in 0..MAX_ATTEMPTS {
                match attempt(cfg, task, index, mix_seed(base, a))? {
                    Attempt::Done(s) => return Ok((s, rejected, skipped)),
                    Attempt::Rejected => rejected += 1,
                    Attempt::Skipped => skipped += 1,
                }
            }
            Err(Error::Datagen(format!(
                "{task} sample {index}: no valid sample in {MAX_ATTEMPTS} attempts"
            )))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stats = BuildStats {
        accepted: 0,
        rejected: 0,
        skipped: 0,
    };
    let mut samples = Vec::with_capacity(results.len());
    for (s, r, k) in results {
        if matches!(s.task, TaskKind::InContextEdit | TaskKind::InContextGen) {
            stats.accepted += 1;
        }
        stats.rejected += r;
        stats.skipped += k;
        samples.push(s);
    }
    let verified = stats.accepted + stats.rejected;
    if verified > 0 && stats.rejected as f64 > MAX_REJECTION_RATE * verified as f64 {
        return Err(Error::Datagen(format!(
            "verification rejected {} of {verified} pairs",
            stats.rejected
        )));
    }
    Ok((samples, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub records: Vec<ManifestRecord>,
    pub stats: BuildStats,
    /// SHA-256 of the manifest file.
    pub manifest_digest: String,
}

/// Writes tensors under `out/samples/<name>/` and `out/manifest.jsonl`
/// with paths relative to `out`.
pub fn write_dataset(out: &Path, samples: &[GeneratedSample]) -> Result<Vec<ManifestRecord>> {
    std::fs::create_dir_all(out)?;
    samples
        .par_iter()
        .map(|s| {
            let dir = format!("samples/{}", s.name);
            let mut refs = Vec::new();
            for (k, v) in &s.refs {
                let rel = format!("{dir}/{}.tomn", file_stem(*k));
                v.save(&out.join(&rel))?;
                refs.push(ManifestRef { kind: *k, path: rel });
            }
            let target_path = format!("{dir}/target.tomn");
            s.target.save(&out.join(&target_path))?;
            let mask_path = match &s.mask {
                Some(m) => {
                    let rel = format!("{dir}/mask.tomn");
                    m.save(&out.join(&rel))?;
                    Some(rel)
                }
                None => None,
            };
            Ok(ManifestRecord {
                text: s.text.clone(),
                refs,
                task: s.task_override,
                target_path: Some(target_path),
                mask_path,
            })
        })
        .collect()
}

pub fn build_dataset(cfg: &DatasetConfig, out: &Path) -> Result<DatasetSummary> {
    let (samples, stats) = build_samples(cfg)?;
    let records = write_dataset(out, &samples)?;
    let path = out.join("manifest.jsonl");
    std::fs::write(&path, write_manifest(&records)?)?;
    let manifest_digest = hex::encode(Sha256::digest(std::fs::read(&path)?));
    Ok(DatasetSummary {
        records,
        stats,
        manifest_digest,
    })
}
