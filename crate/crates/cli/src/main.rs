//! Command-line entry point: dataset generation, split manifests, training,
//! evaluation, the runtime benchmark, SVG rendering and multi-seed tables.
//!
//! Configuration layers, later wins: built-in defaults, `--preset`, the
//! `--config` file section for the subcommand, dotted `-O key=value`
//! overrides, explicit flags. The fully resolved configuration is echoed to
//! the output directory so a run can be reproduced from it.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fieldop::dataset::{self, GenerateConfig, ProblemTag};
use fieldop::gnn::ModelCheckpoint;
use fieldop::mesh::{generate_mesh, ShapeSpec, ShapeTag};
use fieldop::render;
use fieldop::trainer::{self, Regularizer, TrainConfig};

use config::{CliError, ConfigTree};

#[derive(Parser)]
#[command(
    name = "fieldop",
    about = "FEM ground truth and a spectral graph-network surrogate for 2D boundary value problems",
    version
)]
struct Cli {
    /// Configuration file (TOML or JSON) with per-subcommand sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dotted config overrides, e.g. -O train.epochs=5
    #[arg(short = 'O', long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory for artifacts of this run.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Dataset directory (defaults to the output directory).
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for data-parallel stages (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate dataset files (set1/set2/set3 per problem and mesh family).
    Generate(GenerateArgs),
    /// Build split manifests and normalization constants.
    Split(SplitArgs),
    /// Train a model on an existing manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a test split.
    Eval(EvalArgs),
    /// FEM-vs-GNN runtime comparison on square meshes.
    Bench(BenchArgs),
    /// Render meshes or samples to SVG.
    Render(RenderArgs),
    /// Multi-seed train/eval statistics.
    Seeds(SeedsArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Problems to generate (comma separated: es,ms,el).
    #[arg(long, value_delimiter = ',')]
    problem: Vec<String>,
    /// Scale preset: desk (250/set), full (2500/set) or smoke (10/set).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, value_delimiter = ',')]
    problem: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    problem: Option<String>,
    /// Regularizer: none|mesh_aug|feature_drop|node_drop|edge_drop.
    #[arg(long)]
    reg: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Scale preset: desk (40 epochs) or full (150 epochs).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Test task: shape | superposition (or an explicit split name).
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Render the default mesh of a family: square|disk|disk_hole|l_mesh|u_mesh.
    #[arg(long)]
    mesh: Option<String>,
    /// Render one dataset sample given as FILE:LINE (relative to --data).
    #[arg(long)]
    sample: Option<String>,
    /// Render the worst cases listed in an evaluation report JSON.
    #[arg(long)]
    worst: Option<PathBuf>,
    /// Checkpoint for prediction panels (optional for --sample).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct SeedsArgs {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    reg: Option<String>,
    #[arg(long)]
    task: Option<String>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    preset: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version through the error path as well.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(workers) = cli.workers {
        fieldop::set_worker_threads(workers).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let tree = ConfigTree::load(cli.config.as_deref(), &cli.overrides)?;
    let out_dir = cli.out.clone();
    let data_dir = cli.data.clone().unwrap_or_else(|| out_dir.clone());
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Runtime(e.into()))?;

    match &cli.command {
        Command::Generate(args) => {
            let mut cfg: GenSection = tree.section("generate")?;
            if let Some(p) = args.preset.as_deref().or(cfg.preset.as_deref()) {
                let preset = GenerateConfig::preset(p)
                    .ok_or_else(|| CliError::Usage(format!("unknown preset '{p}'")))?;
                cfg.samples_per_set.get_or_insert(preset.samples_per_set);
            }
            if !args.problem.is_empty() {
                cfg.problems = Some(args.problem.clone());
            }
            if let Some(seed) = cli.seed {
                cfg.seed = Some(seed);
            }
            let problems = parse_problems(cfg.problems.as_deref().unwrap_or(&[
                "es".to_string(),
                "ms".to_string(),
            ]))?;
            let gen = GenerateConfig {
                problems,
                samples_per_set: cfg.samples_per_set.unwrap_or(250),
                master_seed: cfg.seed.unwrap_or(0),
            };
            echo_config(
                &out_dir,
                "generate",
                &GenSection {
                    problems: Some(gen.problems.iter().map(|p| p.as_str().to_string()).collect()),
                    samples_per_set: Some(gen.samples_per_set),
                    seed: Some(gen.master_seed),
                    preset: None,
                },
            )?;
            let summary = dataset::generate_sets(&gen, &data_dir).map_err(runtime)?;
            for (p, n) in &summary.samples_per_problem {
                println!("generated {n} samples for problem {p}");
            }
            if summary.regenerated > 0 {
                println!("regenerated {} samples with follow-up seeds", summary.regenerated);
            }
            Ok(())
        }
        Command::Split(args) => {
            let cfg: SplitSection = tree.section("split")?;
            let problems = if !args.problem.is_empty() {
                parse_problems(&args.problem)?
            } else if let Some(p) = &cfg.problems {
                parse_problems(p)?
            } else {
                detect_problems(&data_dir)
            };
            if problems.is_empty() {
                return Err(CliError::Usage(
                    "no problems given and none detected in the data directory".into(),
                ));
            }
            let seed = cli.seed.or(cfg.seed).unwrap_or(0);
            echo_config(&out_dir, "split", &serde_json::json!({"problems": problems, "seed": seed}))?;
            for problem in problems {
                let manifest = dataset::make_splits(&data_dir, problem, seed).map_err(runtime)?;
                for name in dataset::SPLIT_NAMES {
                    println!(
                        "{} {}: {} samples",
                        problem.as_str(),
                        name,
                        manifest.split(name).map_err(runtime)?.len()
                    );
                }
            }
            Ok(())
        }
        Command::Train(args) => {
            let mut cfg: TrainSection = tree.section("train")?;
            apply_train_flags(&mut cfg, args.problem.as_deref(), args.reg.as_deref(), args.epochs, args.preset.as_deref(), cli.seed)?;
            let train_cfg = cfg.into_train_config()?;
            echo_config(&out_dir, "train", &TrainSection::from_config(&train_cfg))?;
            let outcome = trainer::train(&train_cfg, &data_dir, &out_dir).map_err(runtime)?;
            println!(
                "trained {} epochs; best validation mse {:.6e} at epoch {}",
                outcome.curve.len(),
                outcome.checkpoint.best_val_mse,
                outcome.checkpoint.best_epoch
            );
            println!("checkpoint: {}", outcome.checkpoint_path.display());
            Ok(())
        }
        Command::Eval(args) => {
            let cfg: EvalSection = tree.section("eval")?;
            let task = args.task.clone().or(cfg.task).unwrap_or_else(|| "shape".into());
            let split = split_for_task(&task)?;
            let ckpt_path = args
                .checkpoint
                .clone()
                .or(cfg.checkpoint)
                .unwrap_or_else(|| out_dir.join("checkpoint.json"));
            let checkpoint = load_checkpoint(&ckpt_path)?;
            echo_config(&out_dir, "eval", &serde_json::json!({"task": task, "checkpoint": ckpt_path}))?;
            let report = trainer::evaluate(&checkpoint, &data_dir, split).map_err(runtime)?;
            let path = out_dir.join(format!("eval_{task}.json"));
            std::fs::write(&path, serde_json::to_string_pretty(&report).map_err(anyhow::Error::from).map_err(CliError::Runtime)?)
                .map_err(|e| CliError::Runtime(e.into()))?;
            println!(
                "{} {}: mse_pot {:.6e}  mse_field {:.6e}  ({} samples)",
                report.problem.as_str(),
                task,
                report.mse_pot,
                report.mse_field,
                report.n_samples
            );
            if let Some(curl) = report.curl_mean_abs {
                println!("mean |curl E| diagnostic: {curl:.6e}");
            }
            println!("report: {}", path.display());
            Ok(())
        }
        Command::Bench(args) => {
            let cfg: BenchSection = tree.section("bench")?;
            let sizes = if !args.sizes.is_empty() {
                args.sizes.clone()
            } else {
                cfg.sizes.unwrap_or_else(|| vec![64, 256, 1024, 4096])
            };
            let repeats = args.repeats.or(cfg.repeats).unwrap_or(5);
            let ckpt_path = args
                .checkpoint
                .clone()
                .or(cfg.checkpoint)
                .unwrap_or_else(|| out_dir.join("checkpoint.json"));
            let checkpoint = load_checkpoint(&ckpt_path)?;
            echo_config(
                &out_dir,
                "bench",
                &serde_json::json!({"sizes": sizes, "repeats": repeats, "checkpoint": ckpt_path}),
            )?;
            let rows = trainer::benchmark_runtime(&checkpoint, &sizes, repeats).map_err(runtime)?;
            let path = out_dir.join("bench.csv");
            trainer::write_bench_csv(&rows, &path).map_err(|e| CliError::Runtime(e.into()))?;
            for r in &rows {
                println!(
                    "{:>6} nodes  {:<4} {:.6}s  [{:.6}, {:.6}]",
                    r.n_nodes, r.method, r.mean_s, r.ci95_low, r.ci95_high
                );
            }
            println!("csv: {}", path.display());
            Ok(())
        }
        Command::Render(args) => run_render(args, &out_dir, &data_dir),
        Command::Seeds(args) => {
            let mut section: SeedsSection = tree.section("seeds")?;
            apply_train_flags(&mut section.train, args.problem.as_deref(), args.reg.as_deref(), args.epochs, args.preset.as_deref(), None)?;
            let task = args
                .task
                .clone()
                .or(section.task.clone())
                .unwrap_or_else(|| "shape".into());
            let split = split_for_task(&task)?;
            let seeds = if !args.seeds.is_empty() {
                args.seeds.clone()
            } else {
                section.seeds.clone().unwrap_or_else(|| vec![0, 1, 2])
            };
            let base = section.train.clone().into_train_config()?;
            echo_config(
                &out_dir,
                "seeds",
                &SeedsSection {
                    train: TrainSection::from_config(&base),
                    seeds: Some(seeds.clone()),
                    task: Some(task.clone()),
                },
            )?;
            let report =
                trainer::multi_seed(&base, &seeds, &data_dir, &out_dir, split).map_err(runtime)?;
            let path = out_dir.join("seeds_report.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report).map_err(anyhow::Error::from).map_err(CliError::Runtime)?)
                .map_err(|e| CliError::Runtime(e.into()))?;
            println!(
                "{} {} {}: mse_pot {:.3e} ({:.2e})  mse_field {:.3e} ({:.2e}) over {} seeds",
                report.problem.as_str(),
                report.regularizer,
                task,
                report.mean_pot,
                report.std_pot,
                report.mean_field,
                report.std_field,
                report.runs.len()
            );
            println!("report: {}", path.display());
            Ok(())
        }
    }
}

#[derive(serde::Serialize, serde::Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct GenSection {
    problems: Option<Vec<String>>,
    samples_per_set: Option<usize>,
    seed: Option<u64>,
    preset: Option<String>,
}

#[derive(serde::Serialize, serde::Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct SplitSection {
    problems: Option<Vec<String>>,
    seed: Option<u64>,
}

#[derive(serde::Serialize, serde::Deserialize, Default, Clone)]
#[serde(deny_unknown_fields, default)]
struct TrainSection {
    problem: Option<String>,
    regularizer: Option<String>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    seed: Option<u64>,
    lr: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    edge_weighting: Option<String>,
    pad_in_dim: Option<usize>,
    preset: Option<String>,
}

impl TrainSection {
    fn from_config(cfg: &TrainConfig) -> TrainSection {
        TrainSection {
            problem: Some(cfg.problem.as_str().into()),
            regularizer: Some(cfg.regularizer.as_str().into()),
            epochs: Some(cfg.epochs),
            batch_size: Some(cfg.batch_size),
            seed: Some(cfg.seed),
            lr: Some(cfg.adam.lr),
            beta1: Some(cfg.adam.beta1),
            beta2: Some(cfg.adam.beta2),
            edge_weighting: Some(
                match cfg.edge_weighting {
                    fieldop::gnn::EdgeWeighting::Distance => "distance",
                    fieldop::gnn::EdgeWeighting::InverseDistance => "inverse_distance",
                    fieldop::gnn::EdgeWeighting::Binary => "binary",
                }
                .into(),
            ),
            pad_in_dim: cfg.pad_in_dim,
            preset: None,
        }
    }

    fn into_train_config(self) -> Result<TrainConfig, CliError> {
        let problem: ProblemTag = self
            .problem
            .as_deref()
            .unwrap_or("es")
            .parse()
            .map_err(CliError::Usage)?;
        let reg: Regularizer = self
            .regularizer
            .as_deref()
            .unwrap_or("none")
            .parse()
            .map_err(CliError::Usage)?;
        let mut cfg = TrainConfig::new(problem, reg);
        if let Some(p) = &self.preset {
            cfg.epochs = match p.as_str() {
                "desk" => 40,
                "full" => 150,
                "smoke" => 2,
                other => return Err(CliError::Usage(format!("unknown preset '{other}'"))),
            };
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(lr) = self.lr {
            cfg.adam.lr = lr;
        }
        if let Some(b1) = self.beta1 {
            cfg.adam.beta1 = b1;
        }
        if let Some(b2) = self.beta2 {
            cfg.adam.beta2 = b2;
        }
        if let Some(ew) = &self.edge_weighting {
            cfg.edge_weighting = match ew.as_str() {
                "distance" => fieldop::gnn::EdgeWeighting::Distance,
                "inverse_distance" => fieldop::gnn::EdgeWeighting::InverseDistance,
                "binary" => fieldop::gnn::EdgeWeighting::Binary,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown edge weighting '{other}'"
                    )))
                }
            };
        }
        cfg.pad_in_dim = self.pad_in_dim;
        Ok(cfg)
    }
}

#[derive(serde::Serialize, serde::Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct EvalSection {
    task: Option<String>,
    checkpoint: Option<PathBuf>,
}

#[derive(serde::Serialize, serde::Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct SeedsSection {
    train: TrainSection,
    seeds: Option<Vec<u64>>,
    task: Option<String>,
}

#[derive(serde::Serialize, serde::Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct BenchSection {
    sizes: Option<Vec<usize>>,
    repeats: Option<usize>,
    checkpoint: Option<PathBuf>,
}

fn apply_train_flags(
    cfg: &mut TrainSection,
    problem: Option<&str>,
    reg: Option<&str>,
    epochs: Option<usize>,
    preset: Option<&str>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    if let Some(p) = problem {
        cfg.problem = Some(p.to_string());
    }
    if let Some(r) = reg {
        cfg.regularizer = Some(r.to_string());
    }
    if let Some(p) = preset {
        cfg.preset = Some(p.to_string());
    }
    if let Some(e) = epochs {
        cfg.epochs = Some(e);
    }
    if let Some(s) = seed {
        cfg.seed = Some(s);
    }
    Ok(())
}

fn parse_problems(names: &[String]) -> Result<Vec<ProblemTag>, CliError> {
    names
        .iter()
        .map(|s| s.parse().map_err(CliError::Usage))
        .collect()
}

fn detect_problems(data_dir: &std::path::Path) -> Vec<ProblemTag> {
    ProblemTag::ALL
        .into_iter()
        .filter(|p| {
            data_dir
                .join(dataset::set_file_name(
                    *p,
                    ShapeTag::Square,
                    dataset::SetKind::Set1,
                ))
                .exists()
        })
        .collect()
}

fn split_for_task(task: &str) -> Result<&'static str, CliError> {
    match task {
        "shape" => Ok("shape_test"),
        "superposition" => Ok("superposition_test"),
        "val" => Ok("val_noaug"),
        "val_aug" => Ok("val_aug"),
        other => Err(CliError::Usage(format!(
            "unknown task '{other}' (expected shape|superposition)"
        ))),
    }
}

fn load_checkpoint(path: &std::path::Path) -> Result<ModelCheckpoint, CliError> {
    if !path.exists() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "checkpoint not found: {} (run `train` first)",
            path.display()
        )));
    }
    ModelCheckpoint::load(path).map_err(|e| CliError::Runtime(e.into()))
}

fn echo_config<T: serde::Serialize>(
    out_dir: &std::path::Path,
    section: &str,
    cfg: &T,
) -> Result<(), CliError> {
    let wrapped = serde_json::json!({ section: cfg });
    std::fs::write(
        out_dir.join("config_resolved.json"),
        serde_json::to_string_pretty(&wrapped).map_err(|e| CliError::Runtime(e.into()))?,
    )
    .map_err(|e| CliError::Runtime(e.into()))?;
    Ok(())
}

fn runtime<E: std::error::Error + Send + Sync + 'static>(e: E) -> CliError {
    CliError::Runtime(e.into())
}

fn run_render(args: &RenderArgs, out_dir: &std::path::Path, data_dir: &std::path::Path) -> Result<(), CliError> {
    if let Some(shape) = &args.mesh {
        let tag: ShapeTag = shape.parse().map_err(|e: fieldop::mesh::MeshError| CliError::Usage(e.to_string()))?;
        let mesh = generate_mesh(&ShapeSpec::default_for(tag)).map_err(runtime)?;
        let path = out_dir.join(format!("mesh_{shape}.svg"));
        std::fs::write(&path, render::mesh_svg(&mesh)).map_err(|e| CliError::Runtime(e.into()))?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    if let Some(sample) = &args.sample {
        let (file, line) = sample
            .rsplit_once(':')
            .ok_or_else(|| CliError::Usage("--sample expects FILE:LINE".into()))?;
        let line: usize = line
            .parse()
            .map_err(|_| CliError::Usage("--sample expects a numeric line index".into()))?;
        let record = read_record(&data_dir.join(file), line)?;
        let prediction = match &args.checkpoint {
            Some(p) => {
                let ckpt = load_checkpoint(p)?;
                let mut pred = trainer::predict_record(&ckpt, &record).map_err(runtime)?;
                denormalize(&mut pred, &ckpt);
                Some(pred)
            }
            None => None,
        };
        let stem = std::path::Path::new(file)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("sample");
        let path = out_dir.join(format!("sample_{stem}_{line}.svg"));
        std::fs::write(&path, render::sample_svg(&record, prediction.as_deref()))
            .map_err(|e| CliError::Runtime(e.into()))?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    if let Some(report_path) = &args.worst {
        let report: trainer::EvalReport = serde_json::from_str(
            &std::fs::read_to_string(report_path).map_err(|e| CliError::Runtime(e.into()))?,
        )
        .map_err(|e| CliError::Runtime(e.into()))?;
        let ckpt_path = args
            .checkpoint
            .clone()
            .ok_or_else(|| CliError::Usage("--worst requires --checkpoint".into()))?;
        let ckpt = load_checkpoint(&ckpt_path)?;
        for (rank, w) in report.worst.iter().take(4).enumerate() {
            let record = read_record(&data_dir.join(&w.file), w.line)?;
            let mut pred = trainer::predict_record(&ckpt, &record).map_err(runtime)?;
            denormalize(&mut pred, &ckpt);
            let path = out_dir.join(format!("worst_{rank}.svg"));
            std::fs::write(&path, render::sample_svg(&record, Some(&pred)))
                .map_err(|e| CliError::Runtime(e.into()))?;
            println!("wrote {}", path.display());
        }
        return Ok(());
    }
    Err(CliError::Usage(
        "render needs one of --mesh, --sample or --worst".into(),
    ))
}

fn denormalize(pred: &mut [Vec<f64>], ckpt: &ModelCheckpoint) {
    for row in pred.iter_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v *= ckpt.normalization.target[c];
        }
    }
}

fn read_record(path: &std::path::Path, line: usize) -> Result<dataset::SampleRecord, CliError> {
    let content = std::fs::read_to_string(path).map_err(|e| {
        CliError::Runtime(anyhow::anyhow!("cannot read {}: {e}", path.display()))
    })?;
    let text = content.lines().nth(line).ok_or_else(|| {
        CliError::Runtime(anyhow::anyhow!(
            "{} has no line {line}",
            path.display()
        ))
    })?;
    serde_json::from_str(text).map_err(|e| CliError::Runtime(e.into()))
}
