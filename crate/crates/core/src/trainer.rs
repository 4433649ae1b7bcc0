//! Two-stage training: stage 1 fits only the adaptor on T2V/I2V data, stage 2
//! fits adaptor and generator on the full task mixture. The semantic encoder
//! is never updated.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::KvConfig;
use crate::dit::{
    assemble_sequence, fm_loss_with_draw, grid_to_mat, prepare_conditions, ModelConfig, NoiseDraw,
    TokenSequence, DIT_PREFIX,
};
use crate::error::{Error, Result};
use crate::instruction::{TaskKind, TaskSample};
use crate::params::ParamStore;
use crate::semantic::{encode_instruction, ADAPTOR_PREFIX, ENCODER_PREFIX};
use crate::tensor::Mat;

pub const LOSS_HISTORY: usize = 256;
pub const DEFAULT_LR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// Gradient descent, with heavy-ball momentum when `momentum > 0`.
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            _ => Err(Error::Plan(format!("unknown optimizer \"{s}\" (sgd or adam)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub stage: u8,
    pub mixture: BTreeMap<TaskKind, f64>,
    pub steps: u64,
    pub lr: f64,
    pub momentum: f64,
    pub optimizer: Optimizer,
    /// Cosine decay of the learning rate to zero over the stage.
    pub cosine: bool,
    pub seed: u64,
    /// Micro-batches per optimizer step.
    pub accumulation: usize,
    /// Probability of dropping the semantic tokens for a micro-batch.
    pub cond_dropout: f64,
}

impl StagePlan {
    pub fn stage1(steps: u64, seed: u64) -> Self {
        Self {
            stage: 1,
            mixture: [(TaskKind::T2V, 0.5), (TaskKind::I2V, 0.5)].into(),
            steps,
            lr: DEFAULT_LR,
            momentum: 0.0,
            optimizer: Optimizer::Sgd,
            cosine: false,
            seed,
            accumulation: 1,
            cond_dropout: 0.0,
        }
    }

    /// Uniform over all five tasks.
    pub fn stage2(steps: u64, seed: u64) -> Self {
        Self {
            stage: 2,
            mixture: TaskKind::ALL.iter().map(|&t| (t, 0.2)).collect(),
            ..Self::stage1(steps, seed)
        }
    }

    pub fn default_for(stage: u8, steps: u64, seed: u64) -> Result<Self> {
        match stage {
            1 => Ok(Self::stage1(steps, seed)),
            2 => Ok(Self::stage2(steps, seed)),
            s => Err(Error::Plan(format!("stage must be 1 or 2, got {s}"))),
        }
    }

    /// Reads a plan from flat keys: `stage`, `steps`, `lr`, `momentum`,
    /// `optimizer`, `cosine`,
    /// `seed`, `accumulation`, `cond_dropout` and `mix.<Task>` weights.
    /// Missing keys fall back to the stage defaults; `model.*` keys are left
    /// for [`model_config_from`].
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        const KEYS: [&str; 9] = [
            "stage",
            "cosine",
            "optimizer",
            "steps",
            "lr",
            "momentum",
            "seed",
            "accumulation",
            "cond_dropout",
        ];
        kv.check_keys(|k| KEYS.contains(&k) || k.starts_with("mix.") || k.starts_with("model."))?;
        let stage = kv.get_or("stage", 1u8)?;
        let mut plan = Self::default_for(stage, kv.get_or("steps", 100)?, kv.get_or("seed", 0)?)?;
        plan.lr = kv.get_or("lr", plan.lr)?;
        plan.momentum = kv.get_or("momentum", plan.momentum)?;
        plan.cosine = kv.get_or("cosine", plan.cosine)?;
        if let Some(o) = kv.raw("optimizer") {
            plan.optimizer = o.parse()?;
        }
        plan.accumulation = kv.get_or("accumulation", plan.accumulation)?;
        plan.cond_dropout = kv.get_or("cond_dropout", plan.cond_dropout)?;
        let mix: Vec<_> = kv.with_prefix("mix.").collect();
        if !mix.is_empty() {
            plan.mixture.clear();
            for (name, w) in mix {
                let task = TaskKind::parse(name)
                    .ok_or_else(|| Error::Plan(format!("unknown task in mix.{name}")))?;
                let w: f64 = w
                    .parse()
                    .map_err(|_| Error::Plan(format!("mix.{name}: cannot parse \"{w}\"")))?;
                plan.mixture.insert(task, w);
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.stage) {
            return Err(Error::Plan(format!("stage must be 1 or 2, got {}", self.stage)));
        }
        if self.mixture.is_empty() {
            return Err(Error::Plan("empty task mixture".into()));
        }
        for (t, &w) in &self.mixture {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Plan(format!("weight for {t} must be positive, got {w}")));
            }
            if self.stage == 1 && !matches!(t, TaskKind::T2V | TaskKind::I2V) {
                return Err(Error::Plan(format!("stage 1 supports only T2V and I2V, got {t}")));
            }
        }
        let total: f64 = self.mixture.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Plan(format!("mixture weights sum to {total}, expected 1")));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Plan(format!("invalid learning rate {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Plan(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.accumulation == 0 {
            return Err(Error::Plan("accumulation must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.cond_dropout) {
            return Err(Error::Plan(format!("cond_dropout {} outside [0, 1]", self.cond_dropout)));
        }
        Ok(())
    }

    /// Plan validation against the data: every weighted task needs samples.
    pub fn validate_for(&self, data: &Dataset) -> Result<()> {
        self.validate()?;
        for t in self.mixture.keys() {
            if data.shard(*t).is_empty() {
                return Err(Error::Plan(format!("task {t} has weight but no samples")));
            }
        }
        Ok(())
    }

    pub fn trainable(&self, name: &str) -> bool {
        stage_trainable(self.stage, name)
    }

    /// Learning rate for the `k`-th step of the stage (0-based).
    pub fn lr_at(&self, k: u64) -> f64 {
        if !self.cosine || self.steps == 0 {
            return self.lr;
        }
        let x = k.min(self.steps) as f64 / self.steps as f64;
        self.lr * 0.5 * (1.0 + (std::f64::consts::PI * x).cos())
    }
}

pub fn stage_trainable(stage: u8, name: &str) -> bool {
    if name.starts_with(ENCODER_PREFIX) {
        return false;
    }
    name.starts_with(ADAPTOR_PREFIX) || (stage == 2 && name.starts_with(DIT_PREFIX))
}

/// Categorical draw over the plan's mixture (iterated in task order).
pub fn draw_task(plan: &StagePlan, rng: &mut impl Rng) -> TaskKind {
    let u: f64 = rng.random::<f64>() * plan.mixture.values().sum::<f64>();
    let mut acc = 0.0;
    let mut last = None;
    for (&t, &w) in &plan.mixture {
        acc += w;
        if u < acc {
            return t;
        }
        last = Some(t);
    }
    last.expect("validated plan has a non-empty mixture")
}

/// Applies `model.*` overrides on top of the desk configuration.
pub fn model_config_from(kv: &KvConfig) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::desk();
    for (key, _) in kv.with_prefix("model.") {
        let full = format!("model.{key}");
        match key {
            "d_model" => cfg.d_model = kv.get_or(&full, cfg.d_model)?,
            "layers" => cfg.layers = kv.get_or(&full, cfg.layers)?,
            "heads" => cfg.heads = kv.get_or(&full, cfg.heads)?,
            "time_dim" => cfg.time_dim = kv.get_or(&full, cfg.time_dim)?,
            "mlp_ratio" => cfg.mlp_ratio = kv.get_or(&full, cfg.mlp_ratio)?,
            "frames" => cfg.target_shape.0 = kv.get_or(&full, cfg.target_shape.0)?,
            "height" => cfg.target_shape.1 = kv.get_or(&full, cfg.target_shape.1)?,
            "width" => cfg.target_shape.2 = kv.get_or(&full, cfg.target_shape.2)?,
            _ => return Err(Error::Config(format!("unknown key {full}"))),
        }
    }
    cfg.head_dim = cfg.d_model / cfg.heads.max(1);
    cfg.validate()?;
    Ok(cfg)
}

/// A training sample with its frozen encoder output and prepared condition
/// tokens cached; only the target cells change between steps.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub task: TaskKind,
    pub seq: TokenSequence,
    pub x0: Mat,
}

impl PreparedSample {
    pub fn new(params: &ParamStore, cfg: &ModelConfig, sample: &TaskSample) -> Result<Self> {
        let semantic =
            encode_instruction(&cfg.semantic, params, &sample.instruction, &sample.conditions)?;
        let conds = prepare_conditions(sample.task, &sample.conditions, sample.target.shape())?;
        let seq = assemble_sequence(sample.task, &conds, semantic, &sample.target)?;
        Ok(Self {
            task: sample.task,
            seq,
            x0: grid_to_mat(&sample.target),
        })
    }
}

/// Prepared samples grouped by task, each shard in insertion order.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    shards: BTreeMap<TaskKind, Vec<PreparedSample>>,
}

impl Dataset {
    pub fn prepare(params: &ParamStore, cfg: &ModelConfig, samples: &[TaskSample]) -> Result<Self> {
        let prepared = samples
            .par_iter()
            .map(|s| PreparedSample::new(params, cfg, s))
            .collect::<Result<Vec<_>>>()?;
        let mut shards: BTreeMap<TaskKind, Vec<PreparedSample>> = BTreeMap::new();
        for p in prepared {
            shards.entry(p.task).or_default().push(p);
        }
        Ok(Self { shards })
    }

    pub fn shard(&self, task: TaskKind) -> &[PreparedSample] {
        self.shards.get(&task).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.shards.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &PreparedSample> {
        self.shards.values().flatten()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ParamStore,
    /// Momentum buffers, keyed like `params`; empty until first used.
    pub moments: ParamStore,
    pub step: u64,
    pub rng: ChaCha8Rng,
    pub losses: VecDeque<f64>,
}

impl TrainState {
    pub fn new(params: ParamStore, seed: u64) -> Self {
        Self {
            params,
            moments: ParamStore::new(),
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            losses: VecDeque::new(),
        }
    }

    fn record_loss(&mut self, loss: f64) {
        if self.losses.len() == LOSS_HISTORY {
            self.losses.pop_front();
        }
        self.losses.push_back(loss);
    }
}

/// One micro-batch: which sample, which noise, and whether the instruction
/// tokens are dropped.
struct Draw<'a> {
    sample: &'a PreparedSample,
    noise: NoiseDraw,
    drop_semantic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub stage: u8,
    pub tasks: Vec<TaskKind>,
    pub loss: f64,
}

/// One optimizer step over `plan.accumulation` micro-batches drawn from the
/// plan's mixture. Parameters outside the stage's trainable set are not
/// touched.
pub fn train_step(
    state: &mut TrainState,
    plan: &StagePlan,
    cfg: &ModelConfig,
    data: &Dataset,
) -> Result<StepRecord> {
    train_step_with_lr(state, plan, cfg, data, plan.lr)
}

/// [`train_step`] with an explicit learning rate (for schedules).
pub fn train_step_with_lr(
    state: &mut TrainState,
    plan: &StagePlan,
    cfg: &ModelConfig,
    data: &Dataset,
    lr: f64,
) -> Result<StepRecord> {
    let mut draws = Vec::with_capacity(plan.accumulation);
    for _ in 0..plan.accumulation {
        let task = draw_task(plan, &mut state.rng);
        let shard = data.shard(task);
        if shard.is_empty() {
            return Err(Error::Plan(format!("task {task} has weight but no samples")));
        }
        let sample = &shard[state.rng.random_range(0..shard.len())];
        let noise = NoiseDraw::sample(&mut state.rng, sample.x0.rows, sample.x0.cols);
        let drop_semantic = plan.cond_dropout > 0.0 && state.rng.random::<f64>() < plan.cond_dropout;
        draws.push(Draw {
            sample,
            noise,
            drop_semantic,
        });
    }
    let trainable = |n: &str| plan.trainable(n);
    let params = &state.params;
    let evals = draws
        .par_iter()
        .map(|d| {
            let seq = if d.drop_semantic {
                d.sample.seq.without_semantic()
            } else {
                d.sample.seq.clone()
            };
            fm_loss_with_draw(params, cfg, &seq, &d.sample.x0, &d.noise, &trainable)
        })
        .collect::<Result<Vec<_>>>()?;

    let tasks: Vec<TaskKind> = draws.iter().map(|d| d.sample.task).collect();
    let k = evals.len() as f64;
    let loss = evals.iter().map(|e| e.loss).sum::<f64>() / k;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: state.step,
            task: tasks.iter().map(|t| t.name()).collect::<Vec<_>>().join("+"),
            seed: plan.seed,
        });
    }
    let mut grads: BTreeMap<String, Mat> = BTreeMap::new();
    for e in evals {
        for (name, g) in e.grads {
            match grads.get_mut(&name) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    grads.insert(name, g);
                }
            }
        }
    }
    for (name, g) in grads {
        if !plan.trainable(&name) {
            continue;
        }
        let g = g.scale(1.0 / k);
        let update = match plan.optimizer {
            Optimizer::Sgd if plan.momentum > 0.0 => {
                let m = moment(&mut state.moments, &name, g.rows, g.cols);
                for (mi, gi) in m.data.iter_mut().zip(&g.data) {
                    *mi = (plan.momentum * *mi + gi) as f32 as f64;
                }
                m.clone()
            }
            Optimizer::Sgd => g,
            Optimizer::Adam => adam_direction(&mut state.moments, &name, &g),
        };
        let p = state.params.get_mut(&name).expect("gradient for a bound parameter");
        for (pi, ui) in p.data.iter_mut().zip(&update.data) {
            *pi = (*pi - lr * ui) as f32 as f64;
        }
    }
    state.step += 1;
    state.record_loss(loss);
    Ok(StepRecord {
        step: state.step,
        stage: plan.stage,
        tasks,
        loss,
    })
}

fn moment<'a>(moments: &'a mut ParamStore, name: &str, rows: usize, cols: usize) -> &'a mut Mat {
    if moments.get(name).is_none() {
        moments.insert(name, Mat::zeros(rows, cols));
    }
    moments.get_mut(name).expect("inserted above")
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam direction. Each tensor keeps its own step count so a
/// tensor that starts training in stage 2 gets a fresh correction.
fn adam_direction(moments: &mut ParamStore, name: &str, g: &Mat) -> Mat {
    let count = moment(moments, &format!("{name}.count"), 1, 1);
    count.data[0] += 1.0;
    let t = count.data[0] as i32;
    let m = moment(moments, name, g.rows, g.cols);
    for (mi, gi) in m.data.iter_mut().zip(&g.data) {
        *mi = (ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi) as f32 as f64;
    }
    let m = m.clone();
    let v = moment(moments, &format!("{name}.sq"), g.rows, g.cols);
    for (vi, gi) in v.data.iter_mut().zip(&g.data) {
        *vi = (ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi) as f32 as f64;
    }
    let (c1, c2) = (1.0 - ADAM_BETA1.powi(t), 1.0 - ADAM_BETA2.powi(t));
    Mat::from_vec(
        g.rows,
        g.cols,
        m.data
            .iter()
            .zip(&v.data)
            .map(|(mi, vi)| (mi / c1) / ((vi / c2).sqrt() + ADAM_EPS))
            .collect(),
    )
}

/// CSV telemetry writer: `step,stage,task,loss,wall_time`.
pub struct Telemetry<W: Write> {
    out: W,
    start: Instant,
}

impl<W: Write> Telemetry<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "step,stage,task,loss,wall_time")?;
        Ok(Self {
            out,
            start: Instant::now(),
        })
    }

    pub fn record(&mut self, r: &StepRecord) -> Result<()> {
        let tasks: Vec<&str> = r.tasks.iter().map(|t| t.name()).collect();
        writeln!(
            self.out,
            "{},{},{},{:.8e},{:.3}",
            r.step,
            r.stage,
            tasks.join("+"),
            r.loss,
            self.start.elapsed().as_secs_f64()
        )?;
        Ok(())
    }
}

/// Runs `plan.steps` optimizer steps, optionally logging each one.
pub fn run_stage<W: Write>(
    state: &mut TrainState,
    plan: &StagePlan,
    cfg: &ModelConfig,
    data: &Dataset,
    telemetry: Option<&mut Telemetry<W>>,
) -> Result<Vec<StepRecord>> {
    run_stage_from(state, plan, cfg, data, 0, telemetry)
}

/// Runs the stage's steps `first..plan.steps`, e.g. after resuming from a
/// checkpoint taken mid-stage.
pub fn run_stage_from<W: Write>(
    state: &mut TrainState,
    plan: &StagePlan,
    cfg: &ModelConfig,
    data: &Dataset,
    first: u64,
    mut telemetry: Option<&mut Telemetry<W>>,
) -> Result<Vec<StepRecord>> {
    plan.validate_for(data)?;
    let mut records = Vec::with_capacity(plan.steps.saturating_sub(first) as usize);
    for k in first..plan.steps {
        let r = train_step_with_lr(state, plan, cfg, data, plan.lr_at(k))?;
        if let Some(t) = telemetry.as_deref_mut() {
            t.record(&r)?;
        }
        records.push(r);
    }
    Ok(records)
}

/// Mean flow-matching loss over every sample in `data`, each under
/// `draws` fixed noise draws derived from `seed`.
pub fn dataset_loss(
    params: &ParamStore,
    cfg: &ModelConfig,
    data: &Dataset,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let samples: Vec<&PreparedSample> = data.iter().collect();
    let losses = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9));
            let mut total = 0.0;
            for _ in 0..draws {
                let d = NoiseDraw::sample(&mut rng, s.x0.rows, s.x0.cols);
                total += fm_loss_with_draw(params, cfg, &s.seq, &s.x0, &d, &|_| false)?.loss;
            }
            Ok(total / draws as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{LatentGrid, LatentRole, LATENT_CHANNELS};
    use crate::instruction::{Instruction, RefKind, VisualRef};
    use crate::codec::Video;

    #[test]
    fn stage_one_rejects_editing_tasks() {
        let mut p = StagePlan::stage1(1, 0);
        p.mixture = [(TaskKind::T2V, 0.5), (TaskKind::InContextEdit, 0.5)].into();
        assert!(p.validate().is_err());
        p.mixture = [(TaskKind::T2V, 0.7)].into();
        assert!(p.validate().is_err());
        p.mixture = [(TaskKind::T2V, 1.0), (TaskKind::I2V, 0.0)].into();
        assert!(p.validate().is_err());
    }

    #[test]
    fn encoder_is_never_trainable() {
        for stage in [1, 2] {
            assert!(!stage_trainable(stage, "encoder.layer0.qkv"));
            assert!(stage_trainable(stage, "adaptor.w1"));
        }
        assert!(!stage_trainable(1, "dit.patch_in.w"));
        assert!(stage_trainable(2, "dit.patch_in.w"));
    }

    #[test]
    fn single_task_mixture_always_draws_it() {
        let mut p = StagePlan::stage1(1, 0);
        p.mixture = [(TaskKind::T2V, 1.0)].into();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| draw_task(&p, &mut rng) == TaskKind::T2V));
    }

    #[test]
    fn plan_from_kv() {
        let kv = KvConfig::parse("stage = 2\nsteps = 7\nmix.T2V = 0.25\nmix.InContextEdit = 0.75\n")
            .unwrap();
        let p = StagePlan::from_kv(&kv).unwrap();
        assert_eq!(p.stage, 2);
        assert_eq!(p.steps, 7);
        assert_eq!(p.mixture.len(), 2);
        let bad = KvConfig::parse("stage = 1\nmix.FLF2V = 1.0\n").unwrap();
        assert!(StagePlan::from_kv(&bad).is_err());
        let unknown = KvConfig::parse("stages = 1\n").unwrap();
        assert!(StagePlan::from_kv(&unknown).is_err());
    }

    fn toy_sample(seed: u64) -> TaskSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, h, w) = ModelConfig::desk().target_shape;
        let n = f * h * w * LATENT_CHANNELS;
        let target = LatentGrid::new(
            f,
            h,
            w,
            LATENT_CHANNELS,
            (0..n).map(|_| rng.random::<f32>()).collect(),
            LatentRole::Target,
        )
        .unwrap();
        let first = Video::filled(1, h * 4, w * 4, [0.2, 0.4, 0.6]);
        let instr = Instruction::new("a red disk", vec![VisualRef::inline(RefKind::FirstFrame, first.clone())]);
        let cond = crate::codec::encode(&first, LatentRole::FirstFrame).unwrap();
        TaskSample::new(instr, None, vec![cond], target, None).unwrap()
    }

    #[test]
    fn one_sample_loss_drops_within_fifty_steps() {
        let cfg = ModelConfig::desk();
        let params = crate::dit::init_params(&cfg, 11);
        let data = Dataset::prepare(&params, &cfg, &[toy_sample(1)]).unwrap();
        let mut plan = StagePlan::stage2(50, 0);
        plan.mixture = [(TaskKind::I2V, 1.0)].into();
        let before = dataset_loss(&params, &cfg, &data, 8, 5).unwrap();
        let mut state = TrainState::new(params, 0);
        run_stage::<Vec<u8>>(&mut state, &plan, &cfg, &data, None).unwrap();
        let after = dataset_loss(&state.params, &cfg, &data, 8, 5).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn weighted_task_without_samples_is_rejected() {
        let cfg = ModelConfig::desk();
        let params = crate::dit::init_params(&cfg, 11);
        let data = Dataset::prepare(&params, &cfg, &[toy_sample(1)]).unwrap();
        let plan = StagePlan::stage1(1, 0);
        let mut state = TrainState::new(params, 0);
        let err = run_stage::<Vec<u8>>(&mut state, &plan, &cfg, &data, None).unwrap_err();
        assert!(err.to_string().contains("T2V"), "{err}");
    }
}
