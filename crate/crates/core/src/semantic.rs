//! Frozen instruction encoder and the trainable adaptor that maps its
//! penultimate hidden state into the generator's conditioning width.
//!
//! The encoder is a small pre-norm transformer over hashed byte-trigram word
//! embeddings and one summary token per visual reference. Its weights are
//! drawn once from a fixed seed and never updated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::codec::LatentGrid;
use crate::error::{Error, Result};
use crate::instruction::{Instruction, RefKind};
use crate::params::{Bound, ParamStore};
use crate::tensor::Mat;

pub const ENCODER_PREFIX: &str = "encoder.";
pub const ADAPTOR_PREFIX: &str = "adaptor.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticConfig {
    pub d_sem: usize,
    pub layers: usize,
    pub mlp_hidden: usize,
    pub vocab_buckets: usize,
    pub max_tokens: usize,
    pub summary_channels: usize,
    pub seed: u64,
    pub adaptor_hidden: usize,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        Self {
            d_sem: 48,
            layers: 3,
            mlp_hidden: 96,
            vocab_buckets: 512,
            max_tokens: 64,
            summary_channels: crate::codec::LATENT_CHANNELS,
            seed: 0x7E1E_0A1E,
            adaptor_hidden: 96,
        }
    }
}

/// Penultimate-layer encoder activations, `L_s x d_sem`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticTokens(pub Mat);

impl SemanticTokens {
    pub fn len(&self) -> usize {
        self.0.rows
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows == 0
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lowercased alphanumeric words.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

fn ref_kind_index(kind: RefKind) -> usize {
    match kind {
        RefKind::Image => 0,
        RefKind::Video => 1,
        RefKind::FirstFrame => 2,
        RefKind::LastFrame => 3,
    }
}

fn linear_init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    let mut m = Mat::randn(rows, cols, 1.0 / (rows as f64).sqrt(), rng);
    m.data.iter_mut().for_each(|x| *x = *x as f32 as f64);
    m
}

/// Encoder weights drawn from `cfg.seed`.
pub fn init_encoder(cfg: &SemanticConfig) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.d_sem;
    let mut p = ParamStore::new();
    let mut vocab = Mat::randn(cfg.vocab_buckets, d, 1.0, &mut rng);
    vocab.data.iter_mut().for_each(|x| *x = *x as f32 as f64);
    p.insert("encoder.vocab", vocab);
    p.insert("encoder.ref_proj", linear_init(cfg.summary_channels, d, &mut rng));
    p.insert("encoder.ref_kind", linear_init(4, d, &mut rng));
    for l in 0..cfg.layers {
        for name in ["q", "k", "v", "o"] {
            p.insert(format!("encoder.layer{l}.{name}"), linear_init(d, d, &mut rng));
        }
        p.insert(format!("encoder.layer{l}.mlp1"), linear_init(d, cfg.mlp_hidden, &mut rng));
        p.insert(format!("encoder.layer{l}.mlp2"), linear_init(cfg.mlp_hidden, d, &mut rng));
    }
    p
}

fn get<'a>(p: &'a ParamStore, name: &str) -> &'a Mat {
    p.get(name)
        .unwrap_or_else(|| panic!("encoder parameter {name} missing"))
}

fn embed(
    cfg: &SemanticConfig,
    p: &ParamStore,
    instr: &Instruction,
    summaries: &[LatentGrid],
) -> Result<Mat> {
    if summaries.len() != instr.refs.len() {
        return Err(Error::Instruction(format!(
            "{} visual summaries for {} refs",
            summaries.len(),
            instr.refs.len()
        )));
    }
    let d = cfg.d_sem;
    let words = tokenize(&instr.text);
    let n_refs = summaries.len().min(cfg.max_tokens);
    let n_words = words.len().min(cfg.max_tokens - n_refs);
    let vocab = get(p, "encoder.vocab");
    let mut x = Mat::zeros(n_words + n_refs, d);

    for (i, w) in words.iter().take(n_words).enumerate() {
        let padded = format!("^{w}$").into_bytes();
        let grams: Vec<&[u8]> = padded.windows(3).collect();
        let norm = 1.0 / (grams.len() as f64).sqrt();
        let row = x.row_mut(i);
        for g in grams {
            let b = (fnv1a(g) % cfg.vocab_buckets as u64) as usize;
            row.iter_mut()
                .zip(vocab.row(b))
                .for_each(|(o, v)| *o += v * norm);
        }
    }

    let proj = get(p, "encoder.ref_proj");
    let kinds = get(p, "encoder.ref_kind");
    for (j, (r, g)) in instr.refs.iter().zip(summaries).take(n_refs).enumerate() {
        let s = Mat::row_vec(g.mean_summary());
        if s.cols != proj.rows {
            return Err(Error::Shape(format!(
                "summary width {} does not match encoder input {}",
                s.cols, proj.rows
            )));
        }
        let e = s.matmul(proj);
        let row = x.row_mut(n_words + j);
        let k = kinds.row(ref_kind_index(r.kind()));
        for ((o, a), b) in row.iter_mut().zip(&e.data).zip(k) {
            *o = a + b;
        }
    }

    for i in 0..x.rows {
        let row = x.row_mut(i);
        for (j, o) in row.iter_mut().enumerate() {
            let freq = 10_000f64.powf(-((j / 2 * 2) as f64) / d as f64);
            let a = i as f64 * freq;
            *o += if j % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    Ok(x)
}

/// All hidden states: the embeddings followed by each layer's output.
pub fn hidden_states(
    cfg: &SemanticConfig,
    p: &ParamStore,
    instr: &Instruction,
    summaries: &[LatentGrid],
) -> Result<Vec<Mat>> {
    let x = embed(cfg, p, instr, summaries)?;
    let mut states = vec![x.clone()];
    if x.rows == 0 {
        states.extend((0..cfg.layers).map(|_| x.clone()));
        return Ok(states);
    }
    let mut tape = Tape::new();
    let bound = Bound::with_prefix(&mut tape, p, ENCODER_PREFIX, |_| false);
    let mut h = tape.constant(x);
    let scale = 1.0 / (cfg.d_sem as f64).sqrt();
    for l in 0..cfg.layers {
        let w = |n: &str| bound.var(&format!("encoder.layer{l}.{n}"));
        let n = tape.layer_norm(h);
        let q = tape.matmul(n, w("q"));
        let k = tape.matmul(n, w("k"));
        let v = tape.matmul(n, w("v"));
        let s = tape.matmul_nt(q, k);
        let s = tape.scale(s, scale);
        let a = tape.softmax(s);
        let o = tape.matmul(a, v);
        let o = tape.matmul(o, w("o"));
        h = tape.add(h, o);
        let n = tape.layer_norm(h);
        let m = tape.matmul(n, w("mlp1"));
        let m = tape.silu(m);
        let m = tape.matmul(m, w("mlp2"));
        h = tape.add(h, m);
        states.push(tape.value(h).clone());
    }
    Ok(states)
}

/// Encodes an instruction and its per-reference latent summaries; returns the
/// penultimate layer's activations.
pub fn encode_instruction(
    cfg: &SemanticConfig,
    p: &ParamStore,
    instr: &Instruction,
    summaries: &[LatentGrid],
) -> Result<SemanticTokens> {
    let mut states = hidden_states(cfg, p, instr, summaries)?;
    let idx = cfg.layers.saturating_sub(1);
    Ok(SemanticTokens(states.swap_remove(idx)))
}

/// Adaptor weights: `d_sem -> adaptor_hidden -> d_model`, biases zero.
pub fn init_adaptor(cfg: &SemanticConfig, d_model: usize, rng: &mut ChaCha8Rng) -> ParamStore {
    let mut p = ParamStore::new();
    p.insert("adaptor.w1", linear_init(cfg.d_sem, cfg.adaptor_hidden, rng));
    p.insert("adaptor.b1", Mat::zeros(1, cfg.adaptor_hidden));
    p.insert("adaptor.w2", linear_init(cfg.adaptor_hidden, d_model, rng));
    p.insert("adaptor.b2", Mat::zeros(1, d_model));
    p
}

fn check_width(tokens: &Mat, p: &ParamStore) -> Result<()> {
    let w1 = p
        .get("adaptor.w1")
        .ok_or_else(|| Error::Config("adaptor.w1 missing".into()))?;
    if tokens.cols != w1.rows {
        return Err(Error::Shape(format!(
            "semantic width {} does not match adaptor input {}",
            tokens.cols, w1.rows
        )));
    }
    Ok(())
}

/// Adaptor on a tape: `silu(x W1 + b1) W2 + b2`.
pub fn adapt_on_tape(tape: &mut Tape, bound: &Bound, tokens: Var) -> Var {
    let h = tape.matmul(tokens, bound.var("adaptor.w1"));
    let h = tape.add_row(h, bound.var("adaptor.b1"));
    let h = tape.silu(h);
    let o = tape.matmul(h, bound.var("adaptor.w2"));
    tape.add_row(o, bound.var("adaptor.b2"))
}

pub fn adapt(tokens: &SemanticTokens, p: &ParamStore) -> Result<Mat> {
    check_width(&tokens.0, p)?;
    let mut tape = Tape::new();
    let bound = Bound::with_prefix(&mut tape, p, ADAPTOR_PREFIX, |_| false);
    let x = tape.constant(tokens.0.clone());
    let out = adapt_on_tape(&mut tape, &bound, x);
    Ok(tape.value(out).clone())
}

/// `x W1 + b1`, the adaptor's first pre-activation.
pub fn first_preactivation(tokens: &SemanticTokens, p: &ParamStore) -> Result<Mat> {
    check_width(&tokens.0, p)?;
    let mut h = tokens.0.matmul(p.get("adaptor.w1").unwrap());
    let b = p.get("adaptor.b1").unwrap();
    for r in h.data.chunks_exact_mut(b.cols) {
        r.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
    }
    Ok(h)
}
