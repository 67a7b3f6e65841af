//! coldkit: scene generation, distractor-aware instruction generation,
//! grounding, and evaluation from the command line.

mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use coldkit::distractor::{load_prototypes, oracle_classifier, Classifier};
use coldkit::grounding::{
    classify_error, evaluate_corpus, ground, parse_instruction, GroundingReport,
};
use coldkit::instruction::Instruction;
use coldkit::losses::{
    cross_entropy, cross_entropy_grad, stage1_loss, stage1_loss_grad, EmbeddingBatch,
    ProbDistribution,
};
use coldkit::metrics::{
    metric_report, perturb_spatial_terms, perturbation_study, MetricReport, PerturbMode,
    PerturbationStudy, TokenizedCorpus,
};
use coldkit::pipeline::{derive_scene_seeds, generate_for_scene, GenerateOptions};
use coldkit::rng::SplitMix64;
use coldkit::scene::{generate_scene, load_scene, save_scene, Scene, SceneGenConfig};

use config::{load_config, resolve_seed, ConfigEcho, ThresholdArgs};

#[derive(Parser)]
#[command(
    name = "coldkit",
    version,
    about = "Target-exclusive spatial instruction toolkit"
)]
struct Cli {
    /// JSON config file; command-line flags take precedence over it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded scene JSON files
    GenScenes(GenScenesArgs),
    /// Generate instructions and token sequences for a scene directory
    Generate(GenerateArgs),
    /// Ground one instruction text in one scene
    Ground(GroundArgs),
    /// Evaluate an instruction corpus: grounding accuracy, metrics,
    /// optional perturbation study
    Evaluate(EvaluateArgs),
    /// Replace spatial relation phrases with "far"/"close" wording
    Perturb(PerturbArgs),
    /// Numeric loss utilities
    Losses {
        #[command(subcommand)]
        command: LossesCommand,
    },
}

#[derive(Args)]
struct GenScenesArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Number of scenes to generate
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Room extent in meters, comma-separated: X,Y,Z
    #[arg(long, default_value = "8,8,3")]
    room: String,
    /// Objects per scene
    #[arg(long, default_value_t = 10)]
    objects: usize,
    /// Comma-separated category pool
    #[arg(long, default_value = "table,door,lamp,sofa,desk,shelf,bed,plant")]
    pool: String,
    /// Force distractors as CATEGORY:COUNT, e.g. chair:2 places the
    /// target plus that many same-category distractors (COUNT+1 objects)
    #[arg(long)]
    distractors: Option<String>,
    /// Minimum pairwise centroid distance in meters
    #[arg(long, default_value_t = 0.5)]
    min_separation: f64,
}

#[derive(Args)]
struct GenerateArgs {
    /// Directory of scene JSON files
    #[arg(long)]
    scenes: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// "oracle" (ground-truth labels) or "features" (prototype dot products)
    #[arg(long)]
    classifier: Option<String>,
    /// Prototype map JSON for the feature classifier
    #[arg(long)]
    prototypes: Option<PathBuf>,
    #[arg(long)]
    max_anchors: Option<usize>,
    /// Probability of injecting one ambiguous anchor per token sequence
    #[arg(long)]
    ambiguous_rate: Option<f64>,
    /// Emit instructions for every object, not only those with distractors
    #[arg(long)]
    all_targets: bool,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Args)]
struct GroundArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    text: String,
    /// Expected target id; enables verdict and error-mode classification
    #[arg(long)]
    target: Option<u32>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Instruction JSONL file
    #[arg(long)]
    instructions: PathBuf,
    /// Directory of scene JSON files
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Reference JSONL ({"scene_id", "target_id", "text"}); enables
    /// n-gram metrics
    #[arg(long)]
    references: Option<PathBuf>,
    /// Include a perturbation study ("far" or "close")
    #[arg(long)]
    perturb: Option<String>,
    /// Write the report here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Args)]
struct PerturbArgs {
    /// "far" or "close"
    #[arg(long)]
    mode: String,
    /// Perturb a single text and print it
    #[arg(long)]
    text: Option<String>,
    /// Perturb every instruction in this JSONL file
    #[arg(long)]
    instructions: Option<PathBuf>,
    /// Output JSONL path (required with --instructions)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LossesCommand {
    /// Run the gradient-check suite (finite differences + Gibbs)
    Selftest {
        #[arg(long, default_value_t = 100)]
        checks: usize,
        #[arg(long, default_value_t = 0xC01D)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file_config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenScenes(args) => cmd_gen_scenes(args, &file_config),
        Command::Generate(args) => cmd_generate(args, &file_config),
        Command::Ground(args) => cmd_ground(args, &file_config),
        Command::Evaluate(args) => cmd_evaluate(args, &file_config),
        Command::Perturb(args) => cmd_perturb(args),
        Command::Losses {
            command: LossesCommand::Selftest { checks, seed },
        } => cmd_losses_selftest(checks, seed),
    }
}

fn parse_vec3(raw: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .with_context(|| format!("bad component {p:?}"))
        })
        .collect::<Result<_>>()?;
    anyhow::ensure!(parts.len() == 3, "expected X,Y,Z, got {raw:?}");
    Ok([parts[0], parts[1], parts[2]])
}

fn parse_distractor_spec(raw: &str) -> Result<(String, usize)> {
    let (category, count) = raw
        .rsplit_once(':')
        .with_context(|| format!("expected CATEGORY:COUNT, got {raw:?}"))?;
    let count: usize = count
        .parse()
        .with_context(|| format!("bad distractor count in {raw:?}"))?;
    anyhow::ensure!(!category.is_empty(), "empty distractor category in {raw:?}");
    Ok((category.to_string(), count))
}

fn cmd_gen_scenes(args: GenScenesArgs, file: &config::ConfigFile) -> Result<()> {
    let seed = resolve_seed(args.seed, file.seed)?;
    let output_dir = args
        .output_dir
        .or_else(|| file.output_dir.clone())
        .context("--output-dir is required (flag or config file)")?;
    let room_extent = parse_vec3(&args.room)?;
    let category_pool: Vec<String> = args
        .pool
        .split(',')
        .map(|c| c.trim().to_lowercase())
        .filter(|c| !c.is_empty())
        .collect();
    // CATEGORY:COUNT counts distractors; the scene also holds the target
    let distractor_spec = args
        .distractors
        .as_deref()
        .map(parse_distractor_spec)
        .transpose()?
        .map(|(category, count)| (category.to_lowercase(), count + 1));

    std::fs::create_dir_all(&output_dir)
        .with_context(|| format!("creating {}", output_dir.display()))?;
    let scene_seeds = derive_scene_seeds(seed, args.count);
    for (index, scene_seed) in scene_seeds.into_iter().enumerate() {
        let config = SceneGenConfig {
            seed: scene_seed,
            room_extent,
            category_pool: category_pool.clone(),
            object_count: args.objects,
            distractor_spec: distractor_spec.clone(),
            min_separation: args.min_separation,
        };
        let scene = generate_scene(&config)?;
        let path = output_dir.join(format!("scene_{index:04}.json"));
        save_scene(&scene, &path)?;
    }
    eprintln!("wrote {} scene(s) to {}", args.count, output_dir.display());
    Ok(())
}

/// Load every `*.json` scene in a directory, sorted by file name.
fn load_scene_dir(dir: &Path) -> Result<Vec<Scene>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading scene directory {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    anyhow::ensure!(!paths.is_empty(), "no .json scenes in {}", dir.display());
    paths
        .iter()
        .map(|p| load_scene(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn scene_map(scenes: Vec<Scene>) -> Result<BTreeMap<String, Scene>> {
    let mut map = BTreeMap::new();
    for scene in scenes {
        let id = scene.scene_id.clone();
        anyhow::ensure!(
            map.insert(id.clone(), scene).is_none(),
            "duplicate scene_id {id:?} across scene files"
        );
    }
    Ok(map)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let raw =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    raw.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line)
                .with_context(|| format!("{}:{}: bad record", path.display(), i + 1))
        })
        .collect()
}

fn build_classifier(
    name: &str,
    prototypes: Option<&Path>,
) -> Result<Box<dyn Classifier + Send + Sync>> {
    match name {
        "oracle" => Ok(Box::new(oracle_classifier())),
        "features" => {
            let path = prototypes.context("--prototypes is required with --classifier features")?;
            Ok(Box::new(load_prototypes(path)?))
        }
        other => bail!("classifier must be \"oracle\" or \"features\", got {other:?}"),
    }
}

fn cmd_generate(args: GenerateArgs, file: &config::ConfigFile) -> Result<()> {
    let seed = resolve_seed(args.seed, file.seed)?;
    let scenes_dir = args
        .scenes
        .or_else(|| file.scenes_path.clone())
        .context("--scenes is required (flag or config file)")?;
    let output_dir = args
        .output_dir
        .or_else(|| file.output_dir.clone())
        .context("--output-dir is required (flag or config file)")?;
    let classifier_name = args
        .classifier
        .or_else(|| file.classifier.clone())
        .unwrap_or_else(|| "oracle".to_string());
    let prototypes = args.prototypes.or_else(|| file.prototypes_path.clone());
    let classifier = build_classifier(&classifier_name, prototypes.as_deref())?;
    let max_anchors = args.max_anchors.or(file.max_anchors).unwrap_or(4);
    let ambiguous_rate = args.ambiguous_rate.or(file.ambiguous_rate).unwrap_or(0.3);
    anyhow::ensure!(
        (0.0..=1.0).contains(&ambiguous_rate),
        "--ambiguous-rate must be in [0, 1], got {ambiguous_rate}"
    );
    let thresholds = args.thresholds.resolve(&file.thresholds)?;

    let scenes = load_scene_dir(&scenes_dir)?;
    let scene_seeds = derive_scene_seeds(seed, scenes.len());
    let outputs: Vec<_> = scenes
        .par_iter()
        .zip(scene_seeds)
        .map(|(scene, scene_seed)| {
            let options = GenerateOptions {
                seed: scene_seed,
                max_anchors,
                ambiguous_rate,
                all_targets: args.all_targets,
                thresholds,
            };
            generate_for_scene(scene, classifier.as_ref(), &options)
                .map_err(|e| anyhow::anyhow!("scene {}: {e}", scene.scene_id))
        })
        .collect::<Result<_>>()?;

    // outputs are collected in scene order, so files never depend on
    // worker scheduling
    let mut instructions = Vec::new();
    let mut token_records = Vec::new();
    for output in outputs {
        instructions.extend(output.instructions);
        token_records.extend(output.token_records);
    }
    std::fs::create_dir_all(&output_dir)
        .with_context(|| format!("creating {}", output_dir.display()))?;
    write_jsonl(&output_dir.join("instructions.jsonl"), &instructions)?;
    write_jsonl(&output_dir.join("token_sequences.jsonl"), &token_records)?;
    eprintln!(
        "wrote {} instruction(s) and {} token sequence(s) to {}",
        instructions.len(),
        token_records.len(),
        output_dir.display()
    );
    Ok(())
}

fn cmd_ground(args: GroundArgs, file: &config::ConfigFile) -> Result<()> {
    let thresholds = args.thresholds.resolve(&file.thresholds)?;
    let scene = load_scene(&args.scene)?;
    let lexicon = scene.categories();
    let parsed = parse_instruction(&args.text, &lexicon)?;
    let matched = ground(&parsed, &scene, &thresholds);
    let rendered = match args.target {
        Some(target) => {
            let result = classify_error(&parsed, &matched, &scene, target, &thresholds)?;
            serde_json::to_string_pretty(&result)?
        }
        None => serde_json::to_string_pretty(&serde_json::json!({ "matched_ids": matched }))?,
    };
    println!("{rendered}");
    Ok(())
}

/// One reference line; extra fields (relation, status) are ignored, so
/// an instructions file can serve as its own reference set.
#[derive(Debug, Deserialize)]
struct ReferenceRecord {
    scene_id: String,
    target_id: u32,
    text: String,
}

#[derive(Serialize)]
struct EvaluationReport {
    config: ConfigEcho,
    grounding: GroundingReport,
    /// Number of instruction/reference pairs behind `metrics`.
    metric_pairs: usize,
    metrics: Option<MetricReport>,
    perturbation: Option<PerturbationStudy>,
}

fn cmd_evaluate(args: EvaluateArgs, file: &config::ConfigFile) -> Result<()> {
    let thresholds = args.thresholds.resolve(&file.thresholds)?;
    let scenes_dir = args
        .scenes
        .or_else(|| file.scenes_path.clone())
        .context("--scenes is required (flag or config file)")?;
    let instructions: Vec<Instruction> = read_jsonl(&args.instructions)?;
    anyhow::ensure!(
        !instructions.is_empty(),
        "no instructions in {}",
        args.instructions.display()
    );
    let scenes = scene_map(load_scene_dir(&scenes_dir)?)?;

    let grounding = evaluate_corpus(&instructions, &scenes, &thresholds)?;

    let mut metric_pairs = 0usize;
    let metrics = match &args.references {
        None => None,
        Some(path) => {
            let references: Vec<ReferenceRecord> = read_jsonl(path)?;
            let mut by_key: BTreeMap<(String, u32), Vec<&str>> = BTreeMap::new();
            for record in &references {
                by_key
                    .entry((record.scene_id.clone(), record.target_id))
                    .or_default()
                    .push(record.text.as_str());
            }
            let pairs: Vec<(&str, Vec<&str>)> = instructions
                .iter()
                .filter_map(|instruction| {
                    by_key
                        .get(&(instruction.scene_id.clone(), instruction.target_id))
                        .map(|refs| (instruction.text.as_str(), refs.clone()))
                })
                .collect();
            metric_pairs = pairs.len();
            anyhow::ensure!(
                !pairs.is_empty(),
                "no instruction matched a reference by (scene_id, target_id)"
            );
            let corpus = TokenizedCorpus::from_texts(&pairs)?;
            Some(metric_report(&corpus)?)
        }
    };

    let perturbation = match &args.perturb {
        None => None,
        Some(mode) => {
            let mode: PerturbMode = mode.parse().map_err(|e: String| anyhow::anyhow!(e))?;
            Some(perturbation_study(
                &instructions,
                &scenes,
                mode,
                &thresholds,
            )?)
        }
    };

    let report = EvaluationReport {
        config: ConfigEcho {
            seed: resolve_seed(None, file.seed)?,
            classifier: "n/a".into(),
            max_anchors: file.max_anchors.unwrap_or(4),
            ambiguous_rate: file.ambiguous_rate.unwrap_or(0.3),
            all_targets: false,
            thresholds,
            scenes_path: Some(scenes_dir),
            instructions_path: Some(args.instructions),
            references_path: args.references,
            perturb: args.perturb,
        },
        grounding,
        metric_pairs,
        metrics,
        perturbation,
    };
    let mut rendered = serde_json::to_string_pretty(&report)?;
    rendered.push('\n');
    match args.output {
        Some(path) => {
            std::fs::write(&path, rendered)
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote report to {}", path.display());
        }
        None => {
            std::io::stdout().write_all(rendered.as_bytes())?;
        }
    }
    Ok(())
}

fn cmd_perturb(args: PerturbArgs) -> Result<()> {
    let mode: PerturbMode = args.mode.parse().map_err(|e: String| anyhow::anyhow!(e))?;
    match (args.text, args.instructions) {
        (Some(text), None) => {
            println!("{}", perturb_spatial_terms(&text, mode));
            Ok(())
        }
        (None, Some(path)) => {
            let output = args
                .output
                .context("--output is required with --instructions")?;
            let mut instructions: Vec<Instruction> = read_jsonl(&path)?;
            for instruction in &mut instructions {
                instruction.text = perturb_spatial_terms(&instruction.text, mode);
            }
            write_jsonl(&output, &instructions)?;
            eprintln!(
                "wrote {} perturbed instruction(s) to {}",
                instructions.len(),
                output.display()
            );
            Ok(())
        }
        _ => bail!("pass exactly one of --text or --instructions"),
    }
}

fn cmd_losses_selftest(checks: usize, seed: u64) -> Result<()> {
    let mut rng = SplitMix64::new(seed);
    let mut max_stage1 = 0.0f64;
    for _ in 0..checks {
        let rows = 1 + rng.next_below(8) as usize;
        let dim = 1 + rng.next_below(16) as usize;
        let alpha = rng.next_f64() * 2.0;
        let beta = rng.next_f64() * 2.0;
        let draw = |rng: &mut SplitMix64| -> Vec<Vec<f64>> {
            (0..rows)
                .map(|_| {
                    (0..dim)
                        .map(|_| rng.next_f64() * 2.0 - 1.0 + 0.05)
                        .collect()
                })
                .collect()
        };
        let batch = EmbeddingBatch::new(draw(&mut rng), draw(&mut rng), alpha, beta)?;
        let analytic = stage1_loss_grad(&batch)?;
        let h = 1e-5;
        for i in 0..rows {
            for k in 0..dim {
                let mut plus = batch.vectors().to_vec();
                plus[i][k] += h;
                let mut minus = batch.vectors().to_vec();
                minus[i][k] -= h;
                let numeric = (stage1_loss(&batch.with_vectors(plus)?)?
                    - stage1_loss(&batch.with_vectors(minus)?)?)
                    / (2.0 * h);
                let scale = analytic[i][k].abs().max(numeric.abs()).max(1e-8);
                max_stage1 = max_stage1.max((analytic[i][k] - numeric).abs() / scale);
            }
        }
    }
    println!("stage1 gradient: {checks} random batches, max relative error {max_stage1:.3e}");

    let mut max_ce = 0.0f64;
    for _ in 0..checks {
        let vocab = 2 + rng.next_below(31) as usize;
        let sample = |rng: &mut SplitMix64| -> Vec<f64> {
            let raw: Vec<f64> = (0..vocab).map(|_| 0.05 + rng.next_f64()).collect();
            let sum: f64 = raw.iter().sum();
            raw.iter().map(|x| x / sum).collect()
        };
        let truth = sample(&mut rng);
        let predicted = sample(&mut rng);
        let dist = ProbDistribution::new(truth.clone(), predicted)?;
        let analytic = cross_entropy_grad(&dist);
        let h = 1e-6;
        for (k, &analytic_k) in analytic.iter().enumerate() {
            let raw_ce = |p_k: f64| -> f64 {
                truth
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| {
                        let p = if i == k { p_k } else { dist.predicted()[i] };
                        if y == 0.0 {
                            0.0
                        } else {
                            -y * p.ln()
                        }
                    })
                    .sum()
            };
            let numeric =
                (raw_ce(dist.predicted()[k] + h) - raw_ce(dist.predicted()[k] - h)) / (2.0 * h);
            let scale = analytic_k.abs().max(numeric.abs()).max(1e-8);
            max_ce = max_ce.max((analytic_k - numeric).abs() / scale);
        }
    }
    println!(
        "cross-entropy gradient: {checks} random distributions, max relative error {max_ce:.3e}"
    );

    let mut gibbs_ok = 0usize;
    for _ in 0..1000 {
        let vocab = 2 + rng.next_below(31) as usize;
        let sample = |rng: &mut SplitMix64| -> Vec<f64> {
            let raw: Vec<f64> = (0..vocab).map(|_| 0.01 + rng.next_f64()).collect();
            let sum: f64 = raw.iter().sum();
            raw.iter().map(|x| x / sum).collect()
        };
        let truth = sample(&mut rng);
        let predicted = sample(&mut rng);
        let cross = cross_entropy(&ProbDistribution::new(truth.clone(), predicted)?);
        let entropy = cross_entropy(&ProbDistribution::new(truth.clone(), truth)?);
        if cross >= entropy - 1e-12 {
            gibbs_ok += 1;
        }
    }
    println!("gibbs inequality: {gibbs_ok}/1000 random distribution pairs");

    if max_stage1 > 1e-5 || max_ce > 1e-5 || gibbs_ok != 1000 {
        bail!("losses selftest failed");
    }
    println!("losses selftest ok");
    Ok(())
}
