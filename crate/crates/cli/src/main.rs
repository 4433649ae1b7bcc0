use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use omnivid_core::checkpoint::{load_checkpoint, read_meta, save_checkpoint};
use omnivid_core::codec::{LatentRole, Video};
use omnivid_core::config::KvConfig;
use omnivid_core::datagen::{build_dataset, DatasetConfig};
use omnivid_core::dit::{init_params, ModelConfig, SampleOptions};
use omnivid_core::eval::{evaluate, generate, report_csv, report_table, EvalOptions};
use omnivid_core::instruction::{
    encode_refs, read_manifest, resolve_task, Instruction, ManifestRecord, RefKind, TaskKind,
    TaskSample, VisualRef,
};
use omnivid_core::trainer::{
    model_config_from, run_stage_from, Dataset, StagePlan, Telemetry, TrainState,
};

#[derive(Parser)]
#[command(name = "omnivid", version, about = "Instruction-driven video generation and editing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a verified synthetic dataset and its manifest.
    Datagen(DatagenArgs),
    /// Run one training stage, optionally continuing from a checkpoint.
    Train(TrainArgs),
    /// Generate a video from text and optional visual references.
    Generate(GenerateArgs),
    /// Edit a source video according to an instruction.
    Edit(EditArgs),
    /// Generate every manifest sample and write the metric report.
    Eval(EvalArgs),
    /// Print checkpoint or manifest metadata.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    stage: Option<u8>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Plan and `model.*` overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint to continue from.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct SamplingArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    guidance: f64,
    #[arg(long, default_value_t = 16)]
    sample_steps: usize,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long)]
    text: String,
    /// Reference image (single-frame TOMN video).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Reference video.
    #[arg(long)]
    video: Option<PathBuf>,
    #[arg(long)]
    first: Option<PathBuf>,
    #[arg(long)]
    last: Option<PathBuf>,
    /// Explicit task, e.g. InContextEdit.
    #[arg(long, value_parser = parse_task)]
    task: Option<TaskKind>,
    /// Output TOMN video.
    #[arg(long)]
    out: PathBuf,
    /// Also write the frames as PPM images into this directory.
    #[arg(long)]
    ppm: Option<PathBuf>,
}

#[derive(Args)]
struct EditArgs {
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long)]
    text: String,
    #[arg(long)]
    source: PathBuf,
    /// Reference image of the subject to insert or swap in.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    ppm: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for `report.csv` and `report.txt`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long, required_unless_present = "manifest")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn parse_task(s: &str) -> std::result::Result<TaskKind, String> {
    TaskKind::parse(s).ok_or_else(|| {
        let names: Vec<_> = TaskKind::ALL.iter().map(|t| t.name()).collect();
        format!("unknown task {s}; expected one of {}", names.join(", "))
    })
}

fn load_kv(path: Option<&Path>) -> Result<KvConfig> {
    Ok(match path {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::default(),
    })
}

fn manifest_base(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Sample name: the directory holding the target, else the manifest index.
fn sample_name(rec: &ManifestRecord, i: usize) -> String {
    rec.target_path
        .as_deref()
        .and_then(|p| Path::new(p).parent()?.file_name()?.to_str())
        .map(str::to_string)
        .unwrap_or_else(|| format!("sample_{i:03}"))
}

fn load_samples(manifest: &Path) -> Result<Vec<(String, TaskSample)>> {
    let base = manifest_base(manifest);
    read_manifest(manifest)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let s = TaskSample::load(rec, &base)
                .with_context(|| format!("manifest record {}", i + 1))?;
            Ok((sample_name(rec, i), s))
        })
        .collect()
}

fn datagen(a: DatagenArgs) -> Result<()> {
    let mut cfg = DatasetConfig::from_kv(&load_kv(a.config.as_deref())?)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let summary = build_dataset(&cfg, &a.out)?;
    println!(
        "samples={} rejected={} skipped={} manifest_sha256={}",
        summary.records.len(),
        summary.stats.rejected,
        summary.stats.skipped,
        summary.manifest_digest
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let kv = load_kv(a.config.as_deref())?;
    let cfg = model_config_from(&kv)?;
    let mut plan = StagePlan::from_kv(&kv)?;
    let stage = a.stage.unwrap_or(plan.stage);
    if stage != plan.stage {
        // Stage defaults (mixture) follow the requested stage; explicit keys still apply.
        let mut kv = kv.clone();
        kv.set("stage", stage);
        plan = StagePlan::from_kv(&kv)?;
    }
    if let Some(steps) = a.steps {
        plan.steps = steps;
    }
    if let Some(seed) = a.seed {
        plan.seed = seed;
    }
    plan.validate()?;

    let (mut state, first) = match &a.checkpoint {
        Some(dir) => {
            let (state, meta) = load_checkpoint(dir, &cfg)?;
            let first = if meta.stage == plan.stage { meta.stage_step } else { 0 };
            (state, first)
        }
        None => (TrainState::new(init_params(&cfg, plan.seed), plan.seed), 0),
    };
    let samples: Vec<TaskSample> = load_samples(&a.manifest)?.into_iter().map(|(_, s)| s).collect();
    let data = Dataset::prepare(&state.params, &cfg, &samples)?;

    std::fs::create_dir_all(&a.out)?;
    let log = std::fs::File::create(a.out.join("telemetry.csv"))?;
    let mut telemetry = Telemetry::new(std::io::BufWriter::new(log))?;
    let records = run_stage_from(&mut state, &plan, &cfg, &data, first, Some(&mut telemetry))?;
    drop(telemetry);
    save_checkpoint(&a.out, &state, &cfg, plan.stage, plan.steps.max(first))?;
    let last = records.last().map(|r| format!("{:.6e}", r.loss)).unwrap_or("-".into());
    println!(
        "stage={} steps={}..{} final_loss={last} checkpoint={}",
        plan.stage,
        first,
        plan.steps.max(first),
        a.out.display()
    );
    Ok(())
}

fn load_model(dir: &Path) -> Result<(ModelConfig, omnivid_core::params::ParamStore)> {
    let meta = read_meta(dir)?;
    let (state, _) = load_checkpoint(dir, &meta.model)?;
    Ok((meta.model, state.params))
}

fn sample_opts(s: &SamplingArgs) -> SampleOptions {
    SampleOptions {
        steps: s.sample_steps,
        seed: s.seed,
        guidance: s.guidance,
    }
}

fn write_video(v: &Video, out: &Path, ppm: Option<&Path>) -> Result<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    v.save(out)?;
    if let Some(dir) = ppm {
        std::fs::create_dir_all(dir)?;
        for f in 0..v.frames {
            std::fs::write(dir.join(format!("frame_{f:03}.ppm")), v.frame_ppm(f))?;
        }
    }
    Ok(())
}

/// Runs the sampler for `instruction` and writes the result.
fn run_generation(
    s: &SamplingArgs,
    instruction: Instruction,
    task: Option<TaskKind>,
    out: &Path,
    ppm: Option<&Path>,
) -> Result<()> {
    let (cfg, params) = load_model(&s.checkpoint)?;
    let task = resolve_task(&instruction, task)?;
    let conditions = encode_refs(&instruction, Path::new(""))?;
    // Edits keep the source's extents; everything else uses the model default.
    let shape = conditions
        .iter()
        .find(|g| g.role() == LatentRole::ConditionVideo)
        .map(|g| g.shape())
        .unwrap_or(cfg.target_shape);
    let v = generate(&params, &cfg, &instruction, task, &conditions, shape, &sample_opts(s))?;
    write_video(&v, out, ppm)?;
    println!(
        "task={} frames={} size={}x{} out={}",
        task,
        v.frames,
        v.width,
        v.height,
        out.display()
    );
    Ok(())
}

fn generate_cmd(a: GenerateArgs) -> Result<()> {
    let mut refs = Vec::new();
    for (kind, path) in [
        (RefKind::Image, &a.image),
        (RefKind::Video, &a.video),
        (RefKind::FirstFrame, &a.first),
        (RefKind::LastFrame, &a.last),
    ] {
        if let Some(p) = path {
            refs.push(VisualRef::path(kind, p));
        }
    }
    let instruction = Instruction::new(a.text, refs);
    run_generation(&a.sampling, instruction, a.task, &a.out, a.ppm.as_deref())
}

fn edit_cmd(a: EditArgs) -> Result<()> {
    let mut refs = Vec::new();
    if let Some(r) = &a.reference {
        refs.push(VisualRef::path(RefKind::Image, r));
    }
    refs.push(VisualRef::path(RefKind::Video, &a.source));
    let instruction = Instruction::new(a.text, refs);
    run_generation(
        &a.sampling,
        instruction,
        Some(TaskKind::InContextEdit),
        &a.out,
        a.ppm.as_deref(),
    )
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let (cfg, params) = load_model(&a.sampling.checkpoint)?;
    let meta = read_meta(&a.sampling.checkpoint)?;
    let samples = load_samples(&a.manifest)?;
    if samples.is_empty() {
        bail!("manifest {} holds no samples", a.manifest.display());
    }
    let opts = EvalOptions {
        sample_steps: a.sampling.sample_steps,
        seed: a.sampling.seed,
        guidance: a.sampling.guidance,
    };
    let rows = evaluate(&params, &cfg, &samples, &opts)?;
    let run = [
        ("config_digest", meta.config_digest.clone()),
        ("stage", meta.stage.to_string()),
        ("step", meta.step.to_string()),
        ("samples", rows.len().to_string()),
        ("sample_steps", opts.sample_steps.to_string()),
        ("guidance", opts.guidance.to_string()),
        ("seed", opts.seed.to_string()),
    ]
    .map(|(k, v)| (k.to_string(), v));
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("report.csv"), report_csv(&rows))?;
    let table = report_table(&rows, &run);
    std::fs::write(a.out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    if let Some(dir) = &a.checkpoint {
        let meta = read_meta(dir)?;
        let (state, _) = load_checkpoint(dir, &meta.model)?;
        let m = &meta.model;
        println!("stage={}", meta.stage);
        println!("step={}", meta.step);
        println!("stage_step={}", meta.stage_step);
        println!("config_digest={}", meta.config_digest);
        println!(
            "model=d_model:{} layers:{} heads:{} target:{}x{}x{}",
            m.d_model, m.layers, m.heads, m.target_shape.0, m.target_shape.1, m.target_shape.2
        );
        for prefix in ["adaptor.", "dit.", "encoder."] {
            println!(
                "{}values={} digest={}",
                prefix,
                state.params.num_values(prefix),
                state.params.digest(prefix)
            );
        }
        if let Some(l) = meta.losses.last() {
            println!("last_loss={l:.6e}");
        }
    }
    if let Some(path) = &a.manifest {
        let records = read_manifest(path)?;
        println!("records={}", records.len());
        for t in TaskKind::ALL {
            let n = records
                .iter()
                .map(ManifestRecord::task)
                .collect::<omnivid_core::Result<Vec<_>>>()?
                .into_iter()
                .filter(|&k| k == t)
                .count();
            println!("{}={n}", t.name());
        }
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("OMNIVID_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("OMNIVID_THREADS must be a positive integer, got \"{v}\""))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Datagen(a) => datagen(a),
        Command::Train(a) => train(a),
        Command::Generate(a) => generate_cmd(a),
        Command::Edit(a) => edit_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
