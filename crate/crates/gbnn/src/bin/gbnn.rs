//! Command-line interface: train/evaluate models, cluster feature CSVs, and
//! write label-noise masks.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gbnn::ball::LabeledSample;
use gbnn::config::TrainConfig;
use gbnn::matrix::FeatureVector;
use gbnn::net::checkpoint;
use gbnn::train::{self, write_metrics_csv};
use gbnn::{cluster, ClusterConfig, SeededRng};

#[derive(Parser)]
#[command(name = "gbnn", about = "Granular-ball label-noise-robust training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment and write a metrics CSV.
    Train(TrainArgs),
    /// Cluster a feature CSV into granular balls and dump them.
    Cluster(ClusterArgs),
    /// Corrupt dataset labels and write the noise-mask CSV.
    InjectNoise(InjectNoiseArgs),
    /// Load a checkpoint and report test accuracy.
    Eval(EvalArgs),
}

/// Flags shared by train/inject-noise/eval; every flag overrides the same
/// key in --config.
#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat key = value config file, applied before flag overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["blobs", "cifar10", "cifar100"])]
    dataset: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    subset_size: Option<usize>,
    /// Comma-separated CIFAR-100 coarse label ids, e.g. 18,19.
    #[arg(long)]
    superclasses: Option<String>,
    #[arg(long, value_parser = ["mlp", "lenet"])]
    backbone: Option<String>,
    #[arg(long, value_parser = ["on", "off"])]
    gb: Option<String>,
    #[arg(long)]
    purity: Option<f64>,
    #[arg(long)]
    recluster_rounds: Option<usize>,
    #[arg(long, value_parser = ["copy", "mean"])]
    grad_mode: Option<String>,
    #[arg(long)]
    replay_min_size: Option<usize>,
    #[arg(long)]
    replay_capacity: Option<usize>,
    #[arg(long)]
    replay_sample: Option<usize>,
    #[arg(long)]
    noise_ratio: Option<f64>,
    #[arg(long, value_parser = ["true", "false"])]
    stratified: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonArgs {
    fn build_config(&self) -> Result<TrainConfig, String> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            cfg.apply_file(&text).map_err(|e| e.to_string())?;
        }
        let mut set = |key: &str, value: Option<String>| -> Result<(), String> {
            if let Some(v) = value {
                cfg.apply(key, &v).map_err(|e| e.to_string())?;
            }
            Ok(())
        };
        set("dataset", self.dataset.clone())?;
        set(
            "data_dir",
            self.data_dir.as_ref().map(|p| p.display().to_string()),
        )?;
        set("subset_size", self.subset_size.map(|v| v.to_string()))?;
        set("superclasses", self.superclasses.clone())?;
        set("backbone", self.backbone.clone())?;
        set("gb", self.gb.clone())?;
        set("purity", self.purity.map(|v| v.to_string()))?;
        set(
            "recluster_rounds",
            self.recluster_rounds.map(|v| v.to_string()),
        )?;
        set("grad_mode", self.grad_mode.clone())?;
        set(
            "replay_min_size",
            self.replay_min_size.map(|v| v.to_string()),
        )?;
        set(
            "replay_capacity",
            self.replay_capacity.map(|v| v.to_string()),
        )?;
        set("replay_sample", self.replay_sample.map(|v| v.to_string()))?;
        set("noise_ratio", self.noise_ratio.map(|v| v.to_string()))?;
        set("stratified", self.stratified.clone())?;
        set("epochs", self.epochs.map(|v| v.to_string()))?;
        set("batch_size", self.batch_size.map(|v| v.to_string()))?;
        set("lr", self.lr.map(|v| v.to_string()))?;
        set("momentum", self.momentum.map(|v| v.to_string()))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Metrics CSV output path.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
    /// Save the final model checkpoint here.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    /// CSV with one sample per line: feature values then the class label.
    input: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    purity: f64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InjectNoiseArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Noise-mask CSV output path.
    #[arg(long, default_value = "noise_mask.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Cluster(args) => cmd_cluster(args),
        Command::InjectNoise(args) => cmd_inject_noise(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), String> {
    let config = args.common.build_config()?;
    let outcome = train::run_experiment(&config).map_err(|e| e.to_string())?;
    let file = File::create(&args.out).map_err(|e| e.to_string())?;
    let mut w = BufWriter::new(file);
    write_metrics_csv(&mut w, &outcome.records).map_err(|e| e.to_string())?;
    w.flush().map_err(|e| e.to_string())?;
    if let Some(path) = &args.checkpoint {
        let f = File::create(path).map_err(|e| e.to_string())?;
        checkpoint::save(BufWriter::new(f), &outcome.checkpoint).map_err(|e| e.to_string())?;
    }
    println!(
        "max_test_accuracy {:.6} ({} skipped batches)",
        outcome.max_test_accuracy, outcome.skipped_batches
    );
    Ok(())
}

fn cmd_cluster(args: ClusterArgs) -> Result<(), String> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| format!("cannot read {}: {e}", args.input.display()))?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(format!("line {}: need features and a label", lineno + 1));
        }
        let (label_str, feats) = fields.split_last().unwrap();
        let label: usize = label_str
            .trim()
            .parse()
            .map_err(|_| format!("line {}: bad label '{label_str}'", lineno + 1))?;
        let values: Vec<f64> = feats
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        samples.push(LabeledSample {
            features: FeatureVector::new(values).map_err(|e| format!("line {}: {e}", lineno + 1))?,
            label,
            index: samples.len(),
        });
    }
    let config = ClusterConfig {
        purity_threshold: args.purity,
        ..Default::default()
    };
    let balls = cluster(&samples, &config).map_err(|e| e.to_string())?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| e.to_string())?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    for ball in &balls {
        let members: Vec<String> = ball.members.iter().map(|m| m.to_string()).collect();
        writeln!(
            out,
            "{},{},{:.6}",
            members.join(" "),
            ball.majority_label,
            ball.purity
        )
        .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn cmd_inject_noise(args: InjectNoiseArgs) -> Result<(), String> {
    let config = args.common.build_config()?;
    config.validate().map_err(|e| e.to_string())?;
    let mut data_rng = SeededRng::new(config.seed.wrapping_mul(4).wrapping_add(1));
    let mut noise_rng = SeededRng::new(config.seed.wrapping_mul(4).wrapping_add(2));
    let (train_set, _) =
        train::load_datasets(&config, &mut data_rng).map_err(|e| e.to_string())?;
    let mask = gbnn::corrupt_labels(
        &train_set.labels,
        train_set.num_classes,
        config.noise_ratio,
        config.noise_selection,
        &mut noise_rng,
    )
    .map_err(|e| e.to_string())?;
    let f = File::create(&args.out).map_err(|e| e.to_string())?;
    mask.write_csv(BufWriter::new(f)).map_err(|e| e.to_string())?;
    println!("{} of {} labels corrupted", mask.corrupted_count(), mask.len());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), String> {
    let config = args.common.build_config()?;
    config.validate().map_err(|e| e.to_string())?;
    let f = File::open(&args.checkpoint)
        .map_err(|e| format!("cannot open {}: {e}", args.checkpoint.display()))?;
    let ckpt = checkpoint::load(BufReader::new(f)).map_err(|e| e.to_string())?;
    let mut data_rng = SeededRng::new(config.seed.wrapping_mul(4).wrapping_add(1));
    let (_, test) = train::load_datasets(&config, &mut data_rng).map_err(|e| e.to_string())?;
    let (loss, acc) =
        train::evaluate(&ckpt.model, &test, config.batch_size).map_err(|e| e.to_string())?;
    println!("test_loss {loss:.6} test_accuracy {acc:.6}");
    Ok(())
}
