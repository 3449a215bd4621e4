//! Command-line front end. Settings resolve as flag, then `--config` file,
//! then built-in default, and the resolved settings are written into every
//! artifact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data_io::{
    generate_synthetic, load_annotations, save_annotations, stats_report, AnnotationFile, SyntheticConfig,
    SyntheticMode,
};
use crate::evaluation::{
    ap_role, filter_predicate_top_k, group_by_image, gt_triplets, hico_map, recall_at_n, MapMode, MetricEntry,
    PredictionRecord, Task, AP_CONVENTION,
};
use crate::pipeline::{infer_scenes, train, FeatureConfig, LossKind, Model, ModelConfig, TrainConfig};
use crate::proposal::{classify_scene, ProposalClass, Scene};
use crate::sampling::{assign_weights, empirical_frequencies, sample_batch, SamplerConfig, Strategy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "vrdlab", version, about = "Relationship proposal sampling, toy training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic annotation file
    Gen(GenArgs),
    /// Proposal class distribution (JSON and CSV)
    Stats(StatsArgs),
    /// Per-proposal class dump (JSON lines)
    Classify(ClassifyArgs),
    /// Draw batches and report empirical class frequencies
    Sample(SampleArgs),
    /// Train the toy model and write a checkpoint
    Train(TrainArgs),
    /// Score every proposal with a trained model (JSON lines)
    Infer(InferArgs),
    /// Recall@N, AP_role and HICO-style mAP for a prediction dump
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON file with default settings (flags take precedence)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads for scene-level parallelism
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    General,
    Hoi,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    /// also write the class histogram as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Debug, Args)]
struct SamplerArgs {
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    pos_ratio: Option<f64>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// annotation file; a synthetic scene is generated when absent
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    image: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LossArg {
    Bce,
    Focal,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    lp: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long)]
    focal_gamma: Option<f64>,
    #[arg(long)]
    focal_alpha: Option<f64>,
    /// loss trace output (default: <out>.trace.json)
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    /// predicates kept per proposal (default: all)
    #[arg(long)]
    predicate_top_k: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    preds: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    /// comma-separated N values for Recall@N
    #[arg(long, value_delimiter = ',')]
    recall: Option<Vec<usize>>,
    #[arg(long)]
    predicate_top_k: Option<usize>,
}

/// Contents of a `--config` file. Keys mirror the flag names with
/// underscores.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSettings {
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    scenes: Option<usize>,
    mode: Option<ModeArg>,
    synthetic: Option<SyntheticConfig>,
    top_k: Option<usize>,
    csv: Option<PathBuf>,
    strategy: Option<String>,
    batch_size: Option<usize>,
    pos_ratio: Option<f64>,
    image: Option<usize>,
    draws: Option<usize>,
    lp: Option<usize>,
    heads: Option<usize>,
    feature_dim: Option<usize>,
    epochs: Option<usize>,
    lr: Option<f64>,
    momentum: Option<f64>,
    loss: Option<LossArg>,
    focal_gamma: Option<f64>,
    focal_alpha: Option<f64>,
    trace: Option<PathBuf>,
    model: Option<PathBuf>,
    predicate_top_k: Option<usize>,
    preds: Option<PathBuf>,
    task: Option<String>,
    recall: Option<Vec<usize>>,
}

fn load_settings(path: Option<&Path>) -> Result<FileSettings, CliError> {
    let Some(path) = path else {
        return Ok(FileSettings::default());
    };
    let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    value.ok_or_else(|| usage(format!("--{flag} is required")))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(data)?;
    fs::write(path, text + "\n").map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").map_err(data)?;
    }
    w.flush().map_err(data)
}

fn load_scenes(path: &Path) -> Result<(AnnotationFile, Vec<Scene>), CliError> {
    load_annotations(path).map_err(data)
}

fn print_config(config: &Value) {
    println!("{}", serde_json::to_string_pretty(&json!({ "config": config })).expect("serializable"));
}

fn parse_strategy(s: &str) -> Result<Strategy, CliError> {
    s.parse().map_err(usage)
}

/// Parses `args` (program name first) and runs the subcommand inside a
/// rayon pool sized by `--threads`. Returns the process exit code;
/// diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("vrdlab: {e}");
            e.exit_code()
        }
    }
}

fn common(cmd: &Command) -> &CommonArgs {
    match cmd {
        Command::Gen(a) => &a.common,
        Command::Stats(a) => &a.common,
        Command::Classify(a) => &a.common,
        Command::Sample(a) => &a.common,
        Command::Train(a) => &a.common,
        Command::Infer(a) => &a.common,
        Command::Eval(a) => &a.common,
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    let file = load_settings(common(&cmd).config.as_deref())?;
    let threads = common(&cmd).threads.or(file.threads).unwrap_or(1);
    if threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(data)?;
    pool.install(|| match cmd {
        Command::Gen(a) => cmd_gen(a, file),
        Command::Stats(a) => cmd_stats(a, file),
        Command::Classify(a) => cmd_classify(a, file),
        Command::Sample(a) => cmd_sample(a, file),
        Command::Train(a) => cmd_train(a, file),
        Command::Infer(a) => cmd_infer(a, file),
        Command::Eval(a) => cmd_eval(a, file),
    })
}

fn cmd_gen(a: GenArgs, f: FileSettings) -> Result<(), CliError> {
    let out = required(a.common.out.or(f.out.clone()), "out")?;
    let mut syn = f.synthetic.unwrap_or_default();
    if let Some(v) = a.scenes.or(f.scenes) {
        syn.scenes = v;
    }
    if let Some(v) = a.common.seed.or(f.seed) {
        syn.seed = v;
    }
    if let Some(v) = a.top_k.or(f.top_k) {
        syn.top_k = v;
    }
    if let Some(m) = a.mode.or(f.mode) {
        syn.mode = match m {
            ModeArg::General => SyntheticMode::General,
            ModeArg::Hoi => SyntheticMode::Hoi,
        };
    }
    let scenes = generate_synthetic(&syn).map_err(usage)?;
    let config = json!({ "command": "gen", "synthetic": syn });
    print_config(&config);
    let file = AnnotationFile::from_scenes(&scenes, syn.scene_mode(), Some(config));
    save_annotations(&out, &file).map_err(data)?;
    eprintln!("wrote {} scenes to {}", scenes.len(), out.display());
    Ok(())
}

/// Default top-k: the generator's setting when the file came from `gen`.
fn file_top_k(file: &AnnotationFile) -> Option<usize> {
    file.generator
        .as_ref()
        .and_then(|g| g["synthetic"]["top_k"].as_u64())
        .map(|v| v as usize)
}

fn cmd_stats(a: StatsArgs, f: FileSettings) -> Result<(), CliError> {
    let input = required(a.input.or(f.input.clone()), "in")?;
    let out = required(a.common.out.or(f.out.clone()), "out")?;
    let (file, scenes) = load_scenes(&input)?;
    let top_k = a.top_k.or(f.top_k).or(file_top_k(&file)).unwrap_or(100);
    let csv = a.csv.or(f.csv);
    let config = json!({ "command": "stats", "in": input, "top_k": top_k, "csv": csv });
    print_config(&config);
    let report = stats_report(&scenes, top_k);
    let mut value = report.to_json();
    value["config"] = config;
    write_json(&out, &value)?;
    if let Some(csv) = csv {
        fs::write(&csv, report.to_csv()).map_err(|e| data(format!("{}: {e}", csv.display())))?;
    }
    print!("{}", report.to_csv());
    println!("pos_ratio,{}", report.aggregate.positive_ratio());
    Ok(())
}

fn cmd_classify(a: ClassifyArgs, f: FileSettings) -> Result<(), CliError> {
    let input = required(a.input.or(f.input.clone()), "in")?;
    let out = required(a.common.out.or(f.out.clone()), "out")?;
    let (file, scenes) = load_scenes(&input)?;
    let top_k = a.top_k.or(f.top_k).or(file_top_k(&file)).unwrap_or(100);
    let config = json!({ "command": "classify", "in": input, "top_k": top_k });
    print_config(&config);
    let classified: Vec<_> = {
        use rayon::prelude::*;
        scenes.par_iter().map(|s| classify_scene(s, top_k)).collect()
    };
    let mut lines = vec![json!({ "config": config }).to_string()];
    for (image, (scene, c)) in scenes.iter().zip(&classified).enumerate() {
        for (p, class) in c.proposals.iter().zip(&c.classes) {
            lines.push(
                json!({
                    "image": image,
                    "subject": p.subject,
                    "object": p.object,
                    "subject_class": scene.detections[p.subject].class_id,
                    "object_class": scene.detections[p.object].class_id,
                    "class": class,
                })
                .to_string(),
            );
        }
    }
    write_lines(&out, lines)?;
    let mut total = crate::proposal::ClassDistribution::default();
    for c in &classified {
        total.accumulate(&c.distribution);
    }
    println!("{}", total.to_json());
    Ok(())
}

fn class_map(values: [f64; 6]) -> Value {
    let map: serde_json::Map<String, Value> = ProposalClass::ALL
        .iter()
        .map(|c| (c.name().to_string(), json!(values[c.index()])))
        .collect();
    Value::Object(map)
}

fn sampler_config(s: &SamplerArgs, f: &FileSettings, seed: Option<u64>) -> Result<SamplerConfig, CliError> {
    let d = SamplerConfig::default();
    let strategy = match s.strategy.as_ref().or(f.strategy.as_ref()) {
        Some(name) => parse_strategy(name)?,
        None => d.strategy,
    };
    let cfg = SamplerConfig {
        strategy,
        batch_size: s.batch_size.or(f.batch_size).unwrap_or(d.batch_size),
        positive_ratio: s.pos_ratio.or(f.pos_ratio).unwrap_or(d.positive_ratio),
        seed: seed.or(f.seed).unwrap_or(d.seed),
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn cmd_sample(a: SampleArgs, f: FileSettings) -> Result<(), CliError> {
    let out = required(a.common.out.or(f.out.clone()), "out")?;
    let sampler = sampler_config(&a.sampler, &f, a.common.seed)?;
    let draws = a.draws.or(f.draws).unwrap_or(100_000);
    let input = a.input.or(f.input);
    let (scenes, default_top_k) = match &input {
        Some(path) => {
            let (file, scenes) = load_scenes(path)?;
            let k = file_top_k(&file);
            (scenes, k)
        }
        None => {
            let syn = SyntheticConfig {
                scenes: 1,
                seed: sampler.seed,
                ..SyntheticConfig::default()
            };
            (generate_synthetic(&syn).map_err(data)?, None)
        }
    };
    let image = a.image.or(f.image).unwrap_or(0);
    let top_k = a.top_k.or(f.top_k).or(default_top_k).unwrap_or(100);
    let scene = scenes
        .get(image)
        .ok_or_else(|| usage(format!("--image {image} out of range ({} images)", scenes.len())))?;
    let config = json!({
        "command": "sample",
        "in": input,
        "image": image,
        "top_k": top_k,
        "draws": draws,
        "sampler": sampler,
    });
    print_config(&config);

    let classified = classify_scene(scene, top_k);
    let weights = assign_weights(&classified.classes, sampler.strategy, sampler.positive_ratio).map_err(data)?;
    let batch = sample_batch(&weights, &sampler).map_err(data)?;
    let counts = empirical_frequencies(&weights, &classified.classes, &sampler, draws).map_err(data)?;
    let mut expected = [0.0; 6];
    for w in &weights.weights {
        expected[classified.classes[w.index].index()] += w.weight;
    }
    let freq = counts.map(|c| if draws == 0 { 0.0 } else { c as f64 / draws as f64 });
    let value = json!({
        "config": config,
        "distribution": classified.distribution.to_json(),
        "groups": weights.groups.iter().map(|g| json!({
            "name": g.name, "mass": g.mass, "size": g.members.len()
        })).collect::<Vec<_>>(),
        "batch": batch.iter().map(|&i| json!({
            "index": i,
            "subject": classified.proposals[i].subject,
            "object": classified.proposals[i].object,
            "class": classified.classes[i],
        })).collect::<Vec<_>>(),
        "expected": class_map(expected),
        "frequencies": class_map(freq),
    });
    write_json(&out, &value)?;
    println!("class,expected,observed");
    for c in ProposalClass::ALL {
        println!("{},{:.4},{:.4}", c.name(), expected[c.index()], freq[c.index()]);
    }
    Ok(())
}

fn cmd_train(a: TrainArgs, f: FileSettings) -> Result<(), CliError> {
    let input = required(a.input.or(f.input.clone()), "in")?;
    let out = required(a.common.out.or(f.out.clone()), "out")?;
    let seed = a.common.seed.or(f.seed).unwrap_or(0);
    let sampler = sampler_config(&a.sampler, &f, Some(seed))?;
    let (file, scenes) = load_scenes(&input)?;
    let num_predicates = scenes
        .iter()
        .flat_map(|s| s.ground_truth.relationships())
        .map(|r| r.predicate as usize + 1)
        .max()
        .unwrap_or(1);

    let dm = ModelConfig::default();
    let model = ModelConfig {
        features: FeatureConfig {
            dim: a.feature_dim.or(f.feature_dim).unwrap_or(dm.features.dim),
            seed,
            ..dm.features
        },
        heads: a.heads.or(f.heads).unwrap_or(dm.heads),
        lp: a.lp.or(f.lp).unwrap_or(dm.lp),
        num_predicates,
        init_seed: seed,
        ..dm
    };
    model.validate().map_err(usage)?;
    let dt = TrainConfig::default();
    let loss = match a.loss.or(f.loss).unwrap_or(LossArg::Bce) {
        LossArg::Bce => LossKind::Bce,
        LossArg::Focal => LossKind::Focal {
            alpha: a.focal_alpha.or(f.focal_alpha).unwrap_or(0.25),
            gamma: a.focal_gamma.or(f.focal_gamma).unwrap_or(2.0),
        },
    };
    let tc = TrainConfig {
        epochs: a.epochs.or(f.epochs).unwrap_or(dt.epochs),
        lr: a.lr.or(f.lr).unwrap_or(dt.lr),
        momentum: f.momentum.unwrap_or(dt.momentum),
        loss,
        top_k: a.top_k.or(f.top_k).or(file_top_k(&file)).unwrap_or(dt.top_k),
        sampler,
        ..dt
    };
    let trace_path = a
        .trace
        .or(f.trace)
        .unwrap_or_else(|| PathBuf::from(format!("{}.trace.json", out.display())));
    let config = json!({ "command": "train", "in": input, "model": model, "train": tc });
    print_config(&config);

    let result = train(&scenes, model, &tc).map_err(|e| match e {
        crate::pipeline::PipelineError::Config(m) => usage(m),
        other => data(other),
    })?;
    let bytes = result.model.to_checkpoint(json!({ "train": tc, "source": input }));
    fs::write(&out, bytes).map_err(|e| data(format!("{}: {e}", out.display())))?;
    write_json(
        &trace_path,
        &json!({ "config": config, "skipped": result.skipped, "trace": result.trace }),
    )?;
    let losses = result.losses();
    println!(
        "steps {} skipped {} first_loss {} last_loss {}",
        losses.len(),
        result.skipped,
        losses.first().copied().unwrap_or(f64::NAN),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_infer(a: InferArgs, f: FileSettings) -> Result<(), CliError> {
    let model_path = required(a.model.or(f.model), "model")?;
    let input = required(a.input.or(f.input.clone()), "in")?;
    let out = required(a.common.out.or(f.out.clone()), "out")?;
    let bytes = fs::read(&model_path).map_err(|e| data(format!("{}: {e}", model_path.display())))?;
    let (model, extra) = Model::from_checkpoint(&bytes).map_err(data)?;
    let (file, scenes) = load_scenes(&input)?;
    let top_k = a
        .top_k
        .or(f.top_k)
        .or(extra["train"]["top_k"].as_u64().map(|v| v as usize))
        .or(file_top_k(&file))
        .unwrap_or(100);
    let k = a
        .predicate_top_k
        .or(f.predicate_top_k)
        .unwrap_or(model.config.num_predicates);
    let config = json!({
        "command": "infer", "model": model_path, "in": input, "top_k": top_k, "predicate_top_k": k,
    });
    print_config(&config);
    let preds = infer_scenes(&model, &scenes, top_k, k).map_err(data)?;
    let mut lines = vec![json!({ "config": config }).to_string()];
    let mut count = 0usize;
    for (image, ps) in preds.into_iter().enumerate() {
        for prediction in ps {
            count += 1;
            lines.push(serde_json::to_string(&PredictionRecord { image, prediction }).map_err(data)?);
        }
    }
    write_lines(&out, lines)?;
    println!("predictions {count}");
    Ok(())
}

/// Reads a prediction dump, skipping the config header line.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(line).map_err(|e| data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if value.get("config").is_some() && value.get("image").is_none() {
            continue;
        }
        out.push(serde_json::from_value(value).map_err(|e| data(format!("{}:{}: {e}", path.display(), n + 1)))?);
    }
    Ok(out)
}

fn cmd_eval(a: EvalArgs, f: FileSettings) -> Result<(), CliError> {
    let preds_path = required(a.preds.or(f.preds), "preds")?;
    let input = required(a.input.or(f.input.clone()), "in")?;
    let out = required(a.common.out.or(f.out.clone()), "out")?;
    let task: Task = a.task.or(f.task).as_deref().unwrap_or("relationship").parse().map_err(usage)?;
    let mut recall = a.recall.or(f.recall).unwrap_or_else(|| vec![50, 100]);
    if recall.contains(&0) {
        return Err(usage("Recall@N needs N >= 1"));
    }
    recall.sort_unstable();
    recall.dedup();
    let k = a.predicate_top_k.or(f.predicate_top_k).unwrap_or(1);
    let config = json!({
        "command": "eval", "preds": preds_path, "in": input, "task": task,
        "recall": recall, "predicate_top_k": k, "ap_convention": AP_CONVENTION,
    });
    print_config(&config);

    let records = read_predictions(&preds_path)?;
    let (_, scenes) = load_scenes(&input)?;
    let grouped = group_by_image(&records, scenes.len());
    let preds: Vec<_> = grouped.iter().map(|p| filter_predicate_top_k(p, k)).collect();
    let gts: Vec<_> = scenes.iter().map(gt_triplets).collect();

    let mut metrics = Vec::new();
    let entry = |metric: String, cfg: Value, value: f64| MetricEntry {
        metric,
        config: cfg,
        value,
    };
    let mut last = 0.0;
    for &n in &recall {
        let r = recall_at_n(&preds, &gts, n, task);
        if r < last {
            return Err(data(format!("Recall@{n} = {r} fell below a smaller N")));
        }
        last = r;
        metrics.push(entry(format!("recall@{n}"), json!({ "task": task, "n": n, "predicate_top_k": k }), r));
    }
    let role = ap_role(&preds, &gts);
    metrics.push(entry("ap_role".into(), json!({ "per_verb": role.per_verb, "excluded": role.excluded }), role.mean));
    for mode in [MapMode::Default, MapMode::KnownObjects] {
        let h = hico_map(&preds, &gts, mode);
        metrics.push(entry(format!("hico_map_{}", serde_json::to_value(mode).map_err(data)?.as_str().unwrap_or("")), json!({ "pairs": h.per_pair.len() }), h.mean));
    }
    for m in &metrics {
        println!("{},{}", m.metric, m.value);
    }
    write_json(&out, &json!({ "config": config, "metrics": metrics }))
}
