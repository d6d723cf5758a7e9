use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use olbench::config::{load_config, resolve_path, Overrides};
use olbench::format::{load_model, save_model};
use olbench::frozen::{FrozenModel, HeadSeed, Layer, Shape};
use olbench::harness::dataset::{load_csv_as, load_mnist_idx, save_feature_csv, Dataset, InputKind, Sample};
use olbench::harness::{
    compare, gen_synthetic, run_experiment, warmup_head, PseudoTest, RunReport, SyntheticSpec, Warmup,
};
use olbench::StrategyKind;

#[derive(Parser)]
#[command(name = "olbench", version, about = "Online-learning head benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment per config file and write JSON reports.
    Run(RunArgs),
    /// Build comparison tables from run reports.
    Compare(CompareArgs),
    /// Write a Gaussian-cluster feature CSV, optionally with a warmed-up head.
    GenSynthetic(SynthArgs),
    /// Print a model file's layer chain and head.
    InspectModel { path: PathBuf },
    /// Run a dataset through a frozen model and save the features as CSV.
    ExportFeatures(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long = "config", required = true, num_args = 1..)]
    configs: Vec<PathBuf>,
    #[arg(long)]
    strategy: Option<StrategyKind>,
    #[arg(long)]
    alpha: Option<f32>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction such as 0.8, or a sample index such as 4000.
    #[arg(long)]
    pseudo_test: Option<PseudoTest>,
    #[arg(long)]
    freeze_during_test: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Report path; a directory when several configs are given.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Output prefix: writes PREFIX.md, PREFIX.csv, PREFIX_per_class.csv and PREFIX.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 128)]
    feature_len: usize,
    #[arg(long, default_value_t = 500)]
    samples_per_class: usize,
    #[arg(long, default_value_t = 1.0)]
    separation: f32,
    #[arg(long, default_value_t = 1.0)]
    spread: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write an identity-extractor model whose head is warmed up on the
    /// first --warmup-classes classes.
    #[arg(long)]
    head_out: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    warmup_classes: usize,
    #[arg(long, default_value_t = 200)]
    warmup_samples: usize,
    #[arg(long, default_value_t = 0.005)]
    warmup_alpha: f32,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, requires = "mnist_labels", conflicts_with = "raw_csv")]
    mnist_images: Option<PathBuf>,
    #[arg(long)]
    mnist_labels: Option<PathBuf>,
    /// Digits to keep from the IDX files, e.g. `6,7,8,9`.
    #[arg(long, value_delimiter = ',')]
    keep: Vec<String>,
    #[arg(long)]
    raw_csv: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(a),
        Command::InspectModel { path } => cmd_inspect(&path),
        Command::ExportFeatures(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_run(a: RunArgs) -> anyhow::Result<()> {
    let many = a.configs.len() > 1;
    let base_overrides = Overrides {
        strategy: a.strategy,
        alpha: a.alpha,
        batch: a.batch,
        seed: a.seed,
        pseudo_test: a.pseudo_test,
        freeze_during_test: a.freeze_during_test,
        report: None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .context("building worker pool")?;
    let results: Vec<anyhow::Result<String>> = pool.install(|| {
        a.configs
            .par_iter()
            .map(|path| {
                let mut overrides = base_overrides.clone();
                overrides.report = match (&a.out, many) {
                    (Some(out), false) => Some(out.clone()),
                    (Some(dir), true) => Some(dir.join(report_name(path))),
                    (None, _) => None,
                };
                run_one(path, &overrides).with_context(|| format!("config {}", path.display()))
            })
            .collect()
    });
    let mut failed = 0;
    for r in results {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => {
                eprintln!("error: {e:#}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} runs failed", a.configs.len());
    }
    Ok(())
}

fn report_name(config: &Path) -> String {
    let stem = config
        .file_stem()
        .map_or("report".into(), |s| s.to_string_lossy().into_owned());
    format!("{stem}.json")
}

fn run_one(path: &Path, overrides: &Overrides) -> anyhow::Result<String> {
    let cli_out = overrides.report.clone();
    let (cfg, base) = load_config(
        path,
        &Overrides {
            report: None,
            ..overrides.clone()
        },
    )?;
    let exp = cfg.prepare(&base)?;
    let report_path = match (cli_out, &exp.report_path) {
        (Some(p), _) => p,
        (None, Some(p)) if p.is_absolute() => p.clone(),
        (None, Some(p)) => base.join(p),
        (None, None) => PathBuf::from(format!("olbench-{}-seed{}.json", exp.strategy.kind, cfg.seed)),
    };
    let out = run_experiment(
        exp.model.as_ref(),
        &exp.head,
        &exp.dataset,
        &exp.plan,
        exp.strategy,
        &exp.options,
    )?;
    let r = &out.report;
    r.save(&report_path)?;
    Ok(format!(
        "{} accuracy={:.4} ol_step_mean_ms={:.4} peak_ol_bytes={} report={}",
        r.metadata.strategy.display_name(),
        r.accuracy,
        r.timing.ol_step.mean_ms,
        r.memory.peak_bytes,
        report_path.display()
    ))
}

fn cmd_compare(a: CompareArgs) -> anyhow::Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|p| RunReport::load(p).with_context(|| format!("report {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let table = compare(&reports)?;
    let md = table.to_markdown();
    if let Some(prefix) = a.out {
        let with = |suffix: &str| {
            let mut s = prefix.clone().into_os_string();
            s.push(suffix);
            PathBuf::from(s)
        };
        write(&with(".md"), &md)?;
        write(&with(".csv"), &table.to_csv()?)?;
        write(&with("_per_class.csv"), &table.per_class_csv()?)?;
        write(&with(".json"), &table.to_json()?)?;
    }
    print!("{md}");
    Ok(())
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen_synthetic(a: SynthArgs) -> anyhow::Result<()> {
    let spec = SyntheticSpec::with_random_means(
        SyntheticSpec::default_labels(a.classes),
        a.feature_len,
        a.separation,
        a.spread,
        a.samples_per_class,
        a.seed,
        a.seed.wrapping_add(1),
    );
    let data = gen_synthetic(&spec)?;
    save_feature_csv(&a.out, &data.samples)?;
    if let Some(head_out) = &a.head_out {
        let head = warmup_head(
            &spec,
            &Warmup {
                classes: a.warmup_classes,
                samples_per_class: a.warmup_samples,
                learning_rate: a.warmup_alpha,
                seed: a.seed.wrapping_add(2),
            },
        )?;
        save_model(head_out, &FrozenModel::identity(a.feature_len), &head)?;
    }
    println!(
        "wrote {} samples ({} classes, m={}) to {}",
        data.len(),
        a.classes,
        a.feature_len,
        a.out.display()
    );
    Ok(())
}

fn cmd_inspect(path: &Path) -> anyhow::Result<()> {
    let (model, head) = load_model(path)?;
    println!("input: {}", model.input_shape());
    for (i, (layer, shape)) in model.layers().iter().zip(&model.shapes()[1..]).enumerate() {
        let params = match layer {
            Layer::Dense { weights, bias } => weights.as_slice().len() + bias.len(),
            Layer::Conv2d(c) => c.kernel.len() + c.bias.len(),
            _ => 0,
        };
        println!("  {i:>2} {:<10} -> {shape}  params={params}", layer.kind());
    }
    println!("features: {}", model.feature_len());
    print_head(&head);
    Ok(())
}

fn print_head(head: &HeadSeed) {
    println!(
        "head: {} x {} labels=[{}]",
        head.labels.len(),
        head.feature_len(),
        head.labels.join(",")
    );
}

fn cmd_export(a: ExportArgs) -> anyhow::Result<()> {
    let (model, _) = load_model(&a.model)?;
    let data = match (&a.mnist_images, &a.mnist_labels, &a.raw_csv) {
        (Some(images), Some(labels), None) => {
            let keep: BTreeSet<String> = if a.keep.is_empty() {
                (0..10).map(|d| d.to_string()).collect()
            } else {
                a.keep.iter().cloned().collect()
            };
            load_mnist_idx(resolve(images), resolve(labels), &keep)?
        }
        (None, None, Some(csv)) => reshape_for(&model, load_csv_as(resolve(csv), InputKind::FlatVector)?)?,
        _ => bail!("give either --mnist-images/--mnist-labels or --raw-csv"),
    };
    if data.shape.len() != model.input_shape().len() {
        bail!(
            "model expects {} inputs, dataset rows have {}",
            model.input_shape(),
            data.shape
        );
    }
    let samples = data
        .samples
        .iter()
        .map(|s| {
            Ok(Sample {
                input: model.forward(&s.input)?,
                label: s.label.clone(),
            })
        })
        .collect::<olbench::Result<Vec<_>>>()?;
    save_feature_csv(&a.out, &samples)?;
    println!(
        "wrote {} feature rows (m={}) to {}",
        samples.len(),
        model.feature_len(),
        a.out.display()
    );
    Ok(())
}

fn resolve(p: &Path) -> PathBuf {
    resolve_path(Path::new("."), p)
}

/// Flat CSV rows feeding an image model take the model's input shape.
fn reshape_for(model: &FrozenModel, mut data: Dataset) -> anyhow::Result<Dataset> {
    if let shape @ Shape::Image { .. } = model.input_shape() {
        if shape.len() == data.shape.len() {
            data.shape = shape;
            data.kind = InputKind::ImagePlane;
        }
    }
    Ok(data)
}
