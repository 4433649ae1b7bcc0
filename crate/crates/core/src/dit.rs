//! Diffusion transformer over one joint token sequence:
//! `[semantic | conditions | noisy target]`.
//!
//! Visual tokens are latent cells carrying a 3D position and a role
//! embedding; semantic tokens come from the adaptor and are not rotated.
//! Training uses rectified flow (`x_t = (1 - t) x0 + t eps`, velocity target
//! `eps - x0`); sampling integrates `dx/dt = v` from `t = 1` down to `t = 0`
//! with uniform Euler steps.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::{Grads, Tape, Var};
use crate::codec::{concat_conditions, unify_temporal_shape, LatentGrid, LatentRole, Placement};
use crate::error::{Error, Result};
use crate::instruction::TaskKind;
use crate::params::{Bound, ParamStore};
use crate::rope::{angles_with, build_position_grid, offset_policy, Position3, RopeConfig};
use crate::semantic::{self, SemanticConfig, SemanticTokens};
use crate::tensor::Mat;

pub const DIT_PREFIX: &str = "dit.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub rope: RopeConfig,
    pub latent_channels: usize,
    /// Default target latent extents `(frames, height, width)`.
    pub target_shape: (usize, usize, usize),
    pub time_dim: usize,
    pub mlp_ratio: usize,
    pub semantic: SemanticConfig,
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            d_model: 64,
            layers: 4,
            heads: 2,
            head_dim: 32,
            rope: RopeConfig::default(),
            latent_channels: crate::codec::LATENT_CHANNELS,
            target_shape: (4, 4, 4),
            time_dim: 64,
            mlp_ratio: 4,
            semantic: SemanticConfig::default(),
        }
    }

    /// Two-layer, single-head, 32-wide model used for gradient checks.
    pub fn tiny() -> Self {
        Self {
            d_model: 32,
            layers: 2,
            heads: 1,
            head_dim: 32,
            time_dim: 16,
            mlp_ratio: 2,
            target_shape: (2, 2, 3),
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model != self.heads * self.head_dim {
            return Err(Error::Config(format!(
                "d_model {} != heads {} * head_dim {}",
                self.d_model, self.heads, self.head_dim
            )));
        }
        if self.rope.head_dim != self.head_dim {
            return Err(Error::Config(format!(
                "rope head_dim {} != head_dim {}",
                self.rope.head_dim, self.head_dim
            )));
        }
        self.rope.validate()?;
        let (f, h, w) = self.target_shape;
        if [self.d_model, self.heads, self.time_dim, self.mlp_ratio, self.latent_channels, f, h, w]
            .contains(&0)
        {
            return Err(Error::Config("model extents must be positive".into()));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenRole {
    Semantic,
    Visual(LatentRole),
}

/// Flattened joint sequence. `semantic` holds the frozen encoder output; the
/// adaptor runs inside [`forward`] so its parameters receive gradients.
#[derive(Debug, Clone)]
pub struct TokenSequence {
    pub semantic: SemanticTokens,
    /// Condition cells followed by target cells, `N_visual x channels`.
    pub visual: Mat,
    pub positions: Vec<Option<Position3>>,
    pub roles: Vec<TokenRole>,
    pub valid: Vec<bool>,
    pub target_shape: (usize, usize, usize),
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn num_target(&self) -> usize {
        let (f, h, w) = self.target_shape;
        f * h * w
    }

    /// Index of the first target token in the full sequence.
    pub fn target_start(&self) -> usize {
        self.len() - self.num_target()
    }

    pub fn without_semantic(&self) -> TokenSequence {
        let ls = self.semantic.len();
        TokenSequence {
            semantic: SemanticTokens(Mat::zeros(0, self.semantic.0.cols)),
            visual: self.visual.clone(),
            positions: self.positions[ls..].to_vec(),
            roles: self.roles[ls..].to_vec(),
            valid: self.valid[ls..].to_vec(),
            target_shape: self.target_shape,
        }
    }

    /// Replaces the target cells (noisy latent) in place.
    pub fn set_target(&mut self, target: &Mat) {
        let n = self.num_target();
        let start = self.visual.rows - n;
        assert_eq!(target.shape(), (n, self.visual.cols), "target shape");
        let c = self.visual.cols;
        self.visual.data[start * c..].copy_from_slice(&target.data);
    }
}

/// Shapes raw condition grids for `task`: boundary frames are expanded onto
/// the target timeline, reference images and condition videos pass through
/// (shorter condition videos are front-aligned).
pub fn prepare_conditions(
    task: TaskKind,
    grids: &[LatentGrid],
    target_shape: (usize, usize, usize),
) -> Result<Vec<LatentGrid>> {
    let f = target_shape.0;
    grids
        .iter()
        .map(|g| {
            offset_policy(task, g.role(), target_shape)?;
            match g.role() {
                LatentRole::FirstFrame => unify_temporal_shape(g, f, Placement::Front),
                LatentRole::LastFrame => unify_temporal_shape(g, f, Placement::Back),
                LatentRole::ConditionVideo if g.frames < f => {
                    unify_temporal_shape(g, f, Placement::Front)
                }
                _ => Ok(g.clone()),
            }
        })
        .collect()
}

/// Builds the joint sequence. `conditions` must already be shaped by
/// [`prepare_conditions`].
pub fn assemble_sequence(
    task: TaskKind,
    conditions: &[LatentGrid],
    semantic: SemanticTokens,
    noisy_target: &LatentGrid,
) -> Result<TokenSequence> {
    let target_shape = noisy_target.shape();
    let c = noisy_target.channels;
    let ls = semantic.len();
    let mut positions = vec![None; ls];
    let mut roles = vec![TokenRole::Semantic; ls];
    let mut valid = vec![true; ls];
    let mut visual: Vec<f64> = Vec::new();

    if !conditions.is_empty() {
        let stack = concat_conditions(conditions)?;
        if (stack.height, stack.width, stack.channels) != (target_shape.1, target_shape.2, c) {
            return Err(Error::Shape(format!(
                "conditions are {}x{}x{}, target is {}x{}x{c}",
                stack.height, stack.width, stack.channels, target_shape.1, target_shape.2
            )));
        }
        for seg in &stack.segments {
            let offset = offset_policy(task, seg.role, target_shape)?;
            let n = seg.frames.len();
            let grid = build_position_grid(n, stack.height, stack.width, offset);
            for (i, p) in grid.into_iter().enumerate() {
                let f = seg.frames.start + i / (stack.height * stack.width);
                positions.push(Some(p));
                roles.push(TokenRole::Visual(seg.role));
                valid.push(stack.validity[f]);
            }
        }
        visual.extend(stack.data.iter().map(|&x| to_model_space(x)));
    }

    let (f, h, w) = target_shape;
    for p in build_position_grid(f, h, w, offset_policy(task, LatentRole::Target, target_shape)?) {
        positions.push(Some(p));
        roles.push(TokenRole::Visual(LatentRole::Target));
        valid.push(true);
    }
    visual.extend(noisy_target.data.iter().map(|&x| to_model_space(x)));
    let rows = visual.len() / c;
    Ok(TokenSequence {
        semantic,
        visual: Mat::from_vec(rows, c, visual),
        positions,
        roles,
        valid,
        target_shape,
    })
}

const SMALL_INIT: f64 = 0.02;

fn init_linear(p: &mut ParamStore, name: &str, rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) {
    let mut w = Mat::randn(rows, cols, std, rng);
    w.data.iter_mut().for_each(|x| *x = *x as f32 as f64);
    p.insert(format!("{name}.w"), w);
    p.insert(format!("{name}.b"), Mat::zeros(1, cols));
}

/// Generator parameters. Modulation and output projections start small, so
/// blocks begin close to the identity while every parameter, the adaptor
/// included, already receives gradient.
pub fn init_dit(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ParamStore {
    let d = cfg.d_model;
    let c = cfg.latent_channels;
    let mut p = ParamStore::new();
    init_linear(&mut p, "dit.patch_in", c, d, 1.0 / (c as f64).sqrt(), rng);
    let mut roles = Mat::randn(LatentRole::ALL.len(), d, 0.5, rng);
    roles.data.iter_mut().for_each(|x| *x = *x as f32 as f64);
    p.insert("dit.role_embed", roles);
    init_linear(&mut p, "dit.time1", cfg.time_dim, d, 1.0 / (cfg.time_dim as f64).sqrt(), rng);
    init_linear(&mut p, "dit.time2", d, d, 1.0 / (d as f64).sqrt(), rng);
    for l in 0..cfg.layers {
        let b = format!("dit.block{l}");
        init_linear(&mut p, &format!("{b}.mod"), d, 6 * d, SMALL_INIT, rng);
        init_linear(&mut p, &format!("{b}.qkv"), d, 3 * d, 1.0 / (d as f64).sqrt(), rng);
        init_linear(&mut p, &format!("{b}.out"), d, d, 1.0 / (d as f64).sqrt(), rng);
        let hid = cfg.mlp_ratio * d;
        init_linear(&mut p, &format!("{b}.mlp1"), d, hid, 1.0 / (d as f64).sqrt(), rng);
        init_linear(&mut p, &format!("{b}.mlp2"), hid, d, 1.0 / (hid as f64).sqrt(), rng);
    }
    init_linear(&mut p, "dit.final_mod", d, 2 * d, SMALL_INIT, rng);
    init_linear(&mut p, "dit.final_out", d, c, SMALL_INIT, rng);
    p
}

/// Full parameter set: frozen encoder, adaptor, generator.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = semantic::init_encoder(&cfg.semantic);
    p.extend(semantic::init_adaptor(&cfg.semantic, cfg.d_model, &mut rng));
    p.extend(init_dit(cfg, &mut rng));
    p
}

/// Sinusoidal embedding of `t` scaled to `[0, 1000]`.
pub fn timestep_embedding(t: f64, dim: usize) -> Mat {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64).ln() * i as f64 / half as f64).exp();
        let a = 1000.0 * t * freq;
        out[i] = a.cos();
        out[half + i] = a.sin();
    }
    Mat::row_vec(out)
}

fn sequence_angles(seq: &TokenSequence, rope: &RopeConfig) -> Rc<Vec<f64>> {
    let freqs = rope.frequencies();
    let pairs = rope.pairs();
    let mut out = Vec::with_capacity(seq.len() * pairs);
    for p in &seq.positions {
        match p {
            Some(p) => out.extend(angles_with(&freqs, &rope.split, [p.t as f64, p.h as f64, p.w as f64])),
            None => out.extend(std::iter::repeat_n(0.0, pairs)),
        }
    }
    Rc::new(out)
}

fn linear(tape: &mut Tape, b: &Bound, x: Var, name: &str) -> Var {
    let y = tape.matmul(x, b.var(&format!("{name}.w")));
    tape.add_row(y, b.var(&format!("{name}.b")))
}

/// `LN(x) * (1 + scale) + shift`.
fn modulate(tape: &mut Tape, x: Var, shift: Var, scale: Var) -> Var {
    let n = tape.layer_norm(x);
    let s = tape.add_scalar(scale, 1.0);
    let y = tape.mul_row(n, s);
    tape.add_row(y, shift)
}

/// Records the forward pass on `tape`; returns the `N_target x channels`
/// velocity prediction.
pub fn forward_on_tape(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &ModelConfig,
    seq: &TokenSequence,
    t: f64,
) -> Result<Var> {
    let d = cfg.d_model;
    if seq.visual.cols != cfg.latent_channels {
        return Err(Error::Shape(format!(
            "visual tokens have {} channels, model expects {}",
            seq.visual.cols, cfg.latent_channels
        )));
    }
    let n = seq.len();
    if seq.positions.len() != n || seq.valid.len() != n || seq.semantic.len() + seq.visual.rows != n {
        return Err(Error::Shape("token sequence arrays are not congruent".into()));
    }
    if seq.semantic.len() > 0 && seq.semantic.0.cols != cfg.semantic.d_sem {
        return Err(Error::Shape(format!(
            "semantic width {} != {}",
            seq.semantic.0.cols, cfg.semantic.d_sem
        )));
    }

    let ls = seq.semantic.len();
    let vis_in = tape.constant(seq.visual.clone());
    let vis = linear(tape, bound, vis_in, "dit.patch_in");
    let role_idx: Vec<usize> = seq.roles[ls..]
        .iter()
        .map(|r| match r {
            TokenRole::Visual(role) => role.index(),
            TokenRole::Semantic => 0,
        })
        .collect();
    let role_rows = tape.gather_rows(bound.var("dit.role_embed"), role_idx);
    let vis = tape.add(vis, role_rows);
    let mut x = if ls > 0 {
        let sem_in = tape.constant(seq.semantic.0.clone());
        let sem = semantic::adapt_on_tape(tape, bound, sem_in);
        tape.concat_rows(&[sem, vis])
    } else {
        vis
    };

    let temb = tape.constant(timestep_embedding(t, cfg.time_dim));
    let c = linear(tape, bound, temb, "dit.time1");
    let c = tape.silu(c);
    let c = linear(tape, bound, c, "dit.time2");
    let cs = tape.silu(c);

    let angles = sequence_angles(seq, &cfg.rope);
    let head_angles = angles;
    let attn_scale = 1.0 / (cfg.head_dim as f64).sqrt();

    for l in 0..cfg.layers {
        let name = format!("dit.block{l}");
        let m = linear(tape, bound, cs, &format!("{name}.mod"));
        let part = |tape: &mut Tape, i: usize| tape.slice_cols(m, i * d, d);
        let (shift1, scale1, gate1) = (part(tape, 0), part(tape, 1), part(tape, 2));
        let (shift2, scale2, gate2) = (part(tape, 3), part(tape, 4), part(tape, 5));

        let h = modulate(tape, x, shift1, scale1);
        let qkv = linear(tape, bound, h, &format!("{name}.qkv"));
        let mut heads = Vec::with_capacity(cfg.heads);
        for hd in 0..cfg.heads {
            let q = tape.slice_cols(qkv, hd * cfg.head_dim, cfg.head_dim);
            let k = tape.slice_cols(qkv, d + hd * cfg.head_dim, cfg.head_dim);
            let v = tape.slice_cols(qkv, 2 * d + hd * cfg.head_dim, cfg.head_dim);
            let q = tape.rope(q, head_angles.clone());
            let k = tape.rope(k, head_angles.clone());
            let s = tape.matmul_nt(q, k);
            let s = tape.scale(s, attn_scale);
            let s = tape.mask_cols(s, &seq.valid);
            let a = tape.softmax(s);
            heads.push(tape.matmul(a, v));
        }
        let o = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat_cols(&heads)
        };
        let o = linear(tape, bound, o, &format!("{name}.out"));
        let o = tape.mul_row(o, gate1);
        x = tape.add(x, o);

        let h = modulate(tape, x, shift2, scale2);
        let h = linear(tape, bound, h, &format!("{name}.mlp1"));
        let h = tape.silu(h);
        let h = linear(tape, bound, h, &format!("{name}.mlp2"));
        let h = tape.mul_row(h, gate2);
        x = tape.add(x, h);
    }

    let start = seq.target_start();
    let xt = tape.gather_rows(x, (start..n).collect());
    let m = linear(tape, bound, cs, "dit.final_mod");
    let shift = tape.slice_cols(m, 0, d);
    let scale = tape.slice_cols(m, d, d);
    let h = modulate(tape, xt, shift, scale);
    Ok(linear(tape, bound, h, "dit.final_out"))
}

/// Velocity prediction for the target cells, `N_target x channels`.
pub fn forward(params: &ParamStore, cfg: &ModelConfig, seq: &TokenSequence, t: f64) -> Result<Mat> {
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, params, |_| false);
    let out = forward_on_tape(&mut tape, &bound, cfg, seq, t)?;
    Ok(tape.value(out).clone())
}

/// One rectified-flow draw: time, noise and the resulting regression pair.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    pub t: f64,
    pub noise: Mat,
}

impl NoiseDraw {
    pub fn sample(rng: &mut impl Rng, rows: usize, cols: usize) -> Self {
        let t: f64 = rng.random();
        let noise = Mat::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect(),
        );
        Self { t, noise }
    }

    /// `(1 - t) x0 + t eps`.
    pub fn interpolate(&self, x0: &Mat) -> Mat {
        let t = self.t;
        Mat::from_vec(
            x0.rows,
            x0.cols,
            x0.data
                .iter()
                .zip(&self.noise.data)
                .map(|(x, e)| (1.0 - t) * x + t * e)
                .collect(),
        )
    }

    /// `eps - x0`.
    pub fn velocity(&self, x0: &Mat) -> Mat {
        Mat::from_vec(
            x0.rows,
            x0.cols,
            self.noise
                .data
                .iter()
                .zip(&x0.data)
                .map(|(e, x)| e - x)
                .collect(),
        )
    }
}

/// Latents are stored in `[0, 1]`; the model works on `[-1, 1]` so data and
/// noise have comparable scale.
pub fn to_model_space(x: f32) -> f64 {
    (x as f64 - 0.5) * 2.0
}

pub fn from_model_space(x: f64) -> f32 {
    (x * 0.5 + 0.5) as f32
}

/// Target latent as a `tokens x channels` matrix in model space.
pub fn grid_to_mat(g: &LatentGrid) -> Mat {
    Mat::from_vec(
        g.num_tokens(),
        g.channels,
        g.data.iter().map(|&x| to_model_space(x)).collect(),
    )
}

pub fn mat_to_grid(m: &Mat, shape: (usize, usize, usize), role: LatentRole) -> Result<LatentGrid> {
    LatentGrid::new(
        shape.0,
        shape.1,
        shape.2,
        m.cols,
        m.data.iter().map(|&x| from_model_space(x)).collect(),
        role,
    )
}

/// Loss and gradients of one flow-matching evaluation.
pub struct LossEval {
    pub loss: f64,
    pub grads: Vec<(String, Mat)>,
}

/// Flow-matching loss for a prepared sequence under a fixed noise draw.
/// Gradients are returned for parameters accepted by `trainable`.
pub fn fm_loss_with_draw(
    params: &ParamStore,
    cfg: &ModelConfig,
    seq: &TokenSequence,
    x0: &Mat,
    draw: &NoiseDraw,
    trainable: &dyn Fn(&str) -> bool,
) -> Result<LossEval> {
    let mut seq = seq.clone();
    seq.set_target(&draw.interpolate(x0));
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, params, trainable);
    let pred = forward_on_tape(&mut tape, &bound, cfg, &seq, draw.t)?;
    let loss = tape.mse(pred, Rc::new(draw.velocity(x0)));
    let grads: Grads = tape.backward(loss);
    let grads = bound
        .iter()
        .filter_map(|(k, v)| grads.get(*v).map(|g| (k.clone(), g.clone())))
        .collect();
    Ok(LossEval {
        loss: tape.value(loss).data[0],
        grads,
    })
}

/// Flow-matching loss with `t` and noise drawn from `rng`.
pub fn fm_loss(
    params: &ParamStore,
    cfg: &ModelConfig,
    seq: &TokenSequence,
    x0: &LatentGrid,
    rng: &mut impl Rng,
) -> Result<f64> {
    let x0 = grid_to_mat(x0);
    let draw = NoiseDraw::sample(rng, x0.rows, x0.cols);
    Ok(fm_loss_with_draw(params, cfg, seq, &x0, &draw, &|_| false)?.loss)
}

/// Time-dependent velocity over the target cells.
pub trait VelocityField {
    fn velocity(&self, x: &Mat, t: f64) -> Result<Mat>;
}

/// Integrates from `t = 1` (the given noise) to `t = 0` with `steps`
/// uniform Euler steps of `x <- x - dt * v(x, t)`.
pub fn euler_integrate(field: &dyn VelocityField, noise: Mat, steps: usize) -> Result<Mat> {
    if steps == 0 {
        return Err(Error::Config("sampling needs at least one step".into()));
    }
    let dt = 1.0 / steps as f64;
    let mut x = noise;
    for k in 0..steps {
        let t = 1.0 - k as f64 * dt;
        let v = field.velocity(&x, t)?;
        x.data.iter_mut().zip(&v.data).for_each(|(a, b)| *a -= dt * b);
    }
    Ok(x)
}

pub fn initial_noise(seed: u64, rows: usize, cols: usize) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect(),
    )
}

/// The trained generator as a velocity field, with optional classifier-free
/// guidance (`scale == 1` uses the conditional prediction only).
pub struct ModelField<'a> {
    pub params: &'a ParamStore,
    pub cfg: &'a ModelConfig,
    pub seq: TokenSequence,
    pub guidance: f64,
}

impl VelocityField for ModelField<'_> {
    fn velocity(&self, x: &Mat, t: f64) -> Result<Mat> {
        let mut seq = self.seq.clone();
        seq.set_target(x);
        let cond = forward(self.params, self.cfg, &seq, t)?;
        if self.guidance == 1.0 {
            return Ok(cond);
        }
        let uncond = forward(self.params, self.cfg, &seq.without_semantic(), t)?;
        Ok(Mat::from_vec(
            cond.rows,
            cond.cols,
            uncond
                .data
                .iter()
                .zip(&cond.data)
                .map(|(u, c)| u + self.guidance * (c - u))
                .collect(),
        ))
    }
}

pub struct SampleOptions {
    pub steps: usize,
    pub seed: u64,
    pub guidance: f64,
}

/// Generates a target latent for `task` from prepared conditions and the
/// instruction's semantic tokens.
pub fn sample(
    params: &ParamStore,
    cfg: &ModelConfig,
    task: TaskKind,
    conditions: &[LatentGrid],
    semantic: SemanticTokens,
    target_shape: (usize, usize, usize),
    opts: &SampleOptions,
) -> Result<LatentGrid> {
    if opts.steps == 0 {
        return Err(Error::Config("sampling needs at least one step".into()));
    }
    let (f, h, w) = target_shape;
    let c = cfg.latent_channels;
    let placeholder = LatentGrid::new(f, h, w, c, vec![0.0; f * h * w * c], LatentRole::Target)?;
    let seq = assemble_sequence(task, conditions, semantic, &placeholder)?;
    let noise = initial_noise(opts.seed, f * h * w, c);
    let field = ModelField {
        params,
        cfg,
        seq,
        guidance: opts.guidance,
    };
    let x = euler_integrate(&field, noise, opts.steps)?;
    mat_to_grid(&x, target_shape, LatentRole::Target)
}
