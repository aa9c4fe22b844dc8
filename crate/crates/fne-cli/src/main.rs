//! The `fne` binary: reproducible metric-learning experiments end to end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use fne_core::datagen::generate;
use fne_core::sampler::FneConfig;
use fne_core::stats::Snapshot;

use fne_cli::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use fne_cli::config::{apply, RunConfig};
use fne_cli::error::{CliError, Result};
use fne_cli::fned::{load_dataset, save_dataset};
use fne_cli::report;
use fne_cli::runner;

/// Environment variable naming the directory under which relative output
/// paths are created.
const OUTPUT_ROOT_ENV: &str = "FNE_OUTPUT_ROOT";

#[derive(Parser)]
#[command(
    name = "fne",
    version,
    about = "Train and evaluate two-tower retrieval models with \
             false-negative-aware negative sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clustered dataset and write it as an FNED file.
    GenerateData(GenerateArgs),
    /// Train encoders on a dataset; write a checkpoint and an epoch log.
    Train(TrainArgs),
    /// Score Recall@K of a checkpoint on a dataset, both directions.
    Eval(EvalArgs),
    /// Sweep candidate similarity and tabulate posterior and weight.
    WeightsCurve(CurveArgs),
    /// Train and evaluate across one hyperparameter axis.
    Sweep(SweepArgs),
}

/// Flags shared by every command that resolves a RunConfig.
#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for data, initialization, and sampling streams.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        apply(&mut cfg.seed, self.seed);
        Ok(cfg)
    }
}

#[derive(Args)]
struct DataFlags {
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    items_per_cluster: Option<usize>,
    #[arg(long)]
    captions_per_image: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    image_view_dim: Option<usize>,
    #[arg(long)]
    text_view_dim: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    duplicate_rate: Option<f64>,
}

impl DataFlags {
    fn apply_to(&self, cfg: &mut RunConfig) {
        apply(&mut cfg.data.clusters, self.clusters);
        apply(&mut cfg.data.items_per_cluster, self.items_per_cluster);
        apply(&mut cfg.data.captions_per_image, self.captions_per_image);
        apply(&mut cfg.data.latent_dim, self.latent_dim);
        apply(&mut cfg.data.image_view_dim, self.image_view_dim);
        apply(&mut cfg.data.text_view_dim, self.text_view_dim);
        apply(&mut cfg.data.noise_sigma, self.noise_sigma);
        apply(&mut cfg.data.duplicate_rate, self.duplicate_rate);
    }
}

#[derive(Args)]
struct TrainFlags {
    /// Negative selection: fne, hardest, uniform, or semi-hard.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    bank_capacity: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    min_ready_count: Option<u64>,
    #[arg(long)]
    prior_p: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Empty the memory banks at every epoch start.
    #[arg(long)]
    clear_banks: bool,
}

impl TrainFlags {
    fn apply_to(&self, cfg: &mut RunConfig) {
        apply(&mut cfg.train.mode, self.mode.clone());
        apply(&mut cfg.train.epochs, self.epochs);
        apply(&mut cfg.train.batch_size, self.batch_size);
        apply(&mut cfg.train.learning_rate, self.learning_rate);
        apply(&mut cfg.train.margin, self.margin);
        apply(&mut cfg.train.embed_dim, self.embed_dim);
        apply(&mut cfg.train.bank_capacity, self.bank_capacity);
        apply(&mut cfg.train.momentum, self.momentum);
        apply(&mut cfg.train.min_ready_count, self.min_ready_count);
        apply(&mut cfg.fne.prior_p, self.prior_p);
        apply(&mut cfg.fne.alpha, self.alpha);
        apply(&mut cfg.fne.lambda, self.lambda);
        if self.clear_banks {
            cfg.train.clear_banks_each_epoch = true;
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[command(flatten)]
    data: DataFlags,
    /// Output dataset path.
    #[arg(long, default_value = "dataset.fned")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[command(flatten)]
    train: TrainFlags,
    /// Input FNED dataset.
    #[arg(long)]
    data: PathBuf,
    /// Directory receiving checkpoint, epoch log, and resolved config.
    #[arg(long, default_value = "run")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Optional CSV output path; the table always prints to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ranks to report.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10])]
    ks: Vec<usize>,
    /// What counts as a hit: "annotated" pairs only, or any "semantic"
    /// (shared-label) match. Semantic needs a dataset with cluster labels.
    #[arg(long, default_value = "annotated")]
    ground_truth: String,
}

#[derive(Args)]
struct CurveArgs {
    /// Read the tracker snapshot from a checkpoint...
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// ...or supply the four distribution parameters directly.
    #[arg(long)]
    mu_pos: Option<f64>,
    #[arg(long)]
    sigma_pos: Option<f64>,
    #[arg(long)]
    mu_neg: Option<f64>,
    #[arg(long)]
    sigma_neg: Option<f64>,
    #[arg(long)]
    prior_p: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0.001)]
    step: f64,
    #[arg(long, default_value = "weights-curve.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    data: PathBuf,
    /// One of: prior_p, lambda, batch_size, bank_capacity.
    #[arg(long)]
    axis: String,
    /// Comma-separated values for the chosen axis.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
    /// Run the sweep points on separate threads.
    #[arg(long)]
    parallel: bool,
    /// Hit rule for the reported recalls: "annotated" or "semantic".
    #[arg(long, default_value = "annotated")]
    ground_truth: String,
}

fn parse_ground_truth(raw: &str) -> Result<runner::GroundTruth> {
    match raw {
        "annotated" => Ok(runner::GroundTruth::Annotated),
        "semantic" => Ok(runner::GroundTruth::Semantic),
        other => Err(CliError::Usage(format!(
            "unknown ground-truth rule '{other}' (expected annotated or semantic)"
        ))),
    }
}

fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    args.data.apply_to(&mut cfg);
    let spec = cfg.synthetic_spec();
    let dataset = generate(&spec)?;
    let out = output_path(&args.out);
    save_dataset(&dataset, &out)?;
    println!(
        "wrote {}: {} clusters x {} items, {} captions/image, \
         {} images ({}d) / {} texts ({}d), noise {}, duplicate rate {}, seed {}",
        out.display(),
        spec.n_clusters,
        spec.items_per_cluster,
        spec.captions_per_image,
        dataset.n_images(),
        dataset.image_dim(),
        dataset.n_texts(),
        dataset.text_dim(),
        spec.noise_sigma,
        spec.duplicate_rate,
        cfg.seed,
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    args.train.apply_to(&mut cfg);
    cfg.fne_config()?;
    cfg.train_config().validate()?;

    let dataset = load_dataset(&args.data)?;
    let out_dir = output_path(&args.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(fne_cli::error::io_err(&out_dir))?;
    // The resolved config lands first so a failed run is still attributable.
    cfg.save(&out_dir.join("resolved-config.toml"))?;

    let outcome = runner::run_training(&dataset, &cfg).map_err(|e| {
        eprintln!(
            "training aborted; partial outputs remain in {}",
            out_dir.display()
        );
        e
    })?;

    let ckpt = Checkpoint { state: outcome.state, epochs_trained: cfg.train.epochs };
    save_checkpoint(&ckpt, &out_dir.join("checkpoint.fnec"))?;
    report::write_text(
        &out_dir.join("epoch-log.csv"),
        &report::epoch_log_csv(&outcome.logs, &dataset),
    )?;

    let steps: usize = outcome.logs.iter().map(|e| e.steps.len()).sum();
    let final_loss = outcome
        .logs
        .last()
        .and_then(|e| e.steps.last())
        .map_or(f64::NAN, |s| s.loss);
    println!(
        "trained {} epochs ({steps} steps, mode {}) on {}; final batch loss {final_loss:.6}; \
         outputs in {}",
        cfg.train.epochs,
        cfg.train.mode,
        args.data.display(),
        out_dir.display(),
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    if args.ks.is_empty() || args.ks.contains(&0) {
        return Err(CliError::Usage(String::from("ks must be positive ranks")));
    }
    let ground_truth = parse_ground_truth(&args.ground_truth)?;
    let dataset = load_dataset(&args.data)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let report_data = runner::evaluate_with(&ckpt.state, &dataset, &args.ks, ground_truth)?;
    print!("{}", report::report_table(&report_data));
    if let Some(out) = &args.out {
        let out = output_path(out);
        report::write_text(&out, &report::report_csv(&report_data))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_weights_curve(args: CurveArgs) -> Result<()> {
    let explicit = [args.mu_pos, args.sigma_pos, args.mu_neg, args.sigma_neg];
    let snapshot = if explicit.iter().all(Option::is_some) {
        Snapshot {
            mu_pos: args.mu_pos.unwrap(),
            sigma_pos: args.sigma_pos.unwrap(),
            mu_neg: args.mu_neg.unwrap(),
            sigma_neg: args.sigma_neg.unwrap(),
            ready: true,
        }
    } else if let Some(path) = &args.checkpoint {
        if explicit.iter().any(Option::is_some) {
            return Err(CliError::Usage(String::from(
                "give either --checkpoint or all four of \
                 --mu-pos --sigma-pos --mu-neg --sigma-neg, not a mixture",
            )));
        }
        load_checkpoint(path)?.state.tracker.snapshot()
    } else {
        return Err(CliError::Usage(String::from(
            "either --checkpoint or all four of \
             --mu-pos --sigma-pos --mu-neg --sigma-neg are required",
        )));
    };
    if !(args.step > 0.0 && args.step <= 2.0) {
        return Err(CliError::Usage(String::from("step must be in (0, 2]")));
    }

    let mut fne = FneConfig::default();
    apply(&mut fne.prior_p, args.prior_p);
    apply(&mut fne.alpha, args.alpha);
    apply(&mut fne.lambda, args.lambda);
    fne.validate()?;

    let points = report::weights_curve(&snapshot, &fne, args.step)?;
    let out = output_path(&args.out);
    report::write_text(&out, &report::curve_csv(&points))?;
    println!("wrote {} ({} points)", out.display(), points.len());
    Ok(())
}

enum SweepAxis {
    PriorP,
    Lambda,
    BatchSize,
    BankCapacity,
}

impl SweepAxis {
    fn parse(name: &str) -> Result<Self> {
        match name.replace('-', "_").as_str() {
            "prior_p" => Ok(SweepAxis::PriorP),
            "lambda" => Ok(SweepAxis::Lambda),
            "batch_size" => Ok(SweepAxis::BatchSize),
            "bank_capacity" => Ok(SweepAxis::BankCapacity),
            other => Err(CliError::Usage(format!(
                "unknown sweep axis '{other}' \
                 (expected prior_p, lambda, batch_size, or bank_capacity)"
            ))),
        }
    }

    fn apply(&self, cfg: &mut RunConfig, raw: &str) -> Result<()> {
        let usage = |what: &str| {
            CliError::Usage(format!("cannot parse '{raw}' as {what}"))
        };
        match self {
            SweepAxis::PriorP => {
                cfg.fne.prior_p = raw.parse().map_err(|_| usage("a probability"))?
            }
            SweepAxis::Lambda => {
                cfg.fne.lambda = raw.parse().map_err(|_| usage("a threshold"))?
            }
            SweepAxis::BatchSize => {
                cfg.train.batch_size = raw.parse().map_err(|_| usage("a batch size"))?
            }
            SweepAxis::BankCapacity => {
                cfg.train.bank_capacity = raw.parse().map_err(|_| usage("a capacity"))?
            }
        }
        Ok(())
    }
}

fn sweep_run(
    dataset: &fne_core::datagen::PairedDataset,
    cfg: &RunConfig,
    ground_truth: runner::GroundTruth,
) -> Result<(f64, f64, Option<f64>)> {
    let outcome = runner::run_training(dataset, cfg)?;
    let report = runner::evaluate_with(&outcome.state, dataset, &[1], ground_truth)?;
    let fn_rate = runner::warmed_fn_rate(&outcome.logs, dataset);
    Ok((
        report.image_to_text.recall(1).unwrap(),
        report.text_to_image.recall(1).unwrap(),
        fn_rate,
    ))
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut base = args.common.resolve()?;
    args.train.apply_to(&mut base);
    let axis = SweepAxis::parse(&args.axis)?;
    let ground_truth = parse_ground_truth(&args.ground_truth)?;

    let mut configs = Vec::with_capacity(args.values.len());
    for raw in &args.values {
        let mut cfg = base.clone();
        axis.apply(&mut cfg, raw)?;
        cfg.fne_config()?;
        cfg.train_config().validate()?;
        configs.push(cfg);
    }

    let dataset = load_dataset(&args.data)?;
    let results: Vec<Result<(f64, f64, Option<f64>)>> = if args.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = configs
                .iter()
                .map(|cfg| scope.spawn(|| sweep_run(&dataset, cfg, ground_truth)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        })
    } else {
        configs.iter().map(|cfg| sweep_run(&dataset, cfg, ground_truth)).collect()
    };

    let mut csv = String::from(
        "axis,value,seed,recall1_image_to_text,recall1_text_to_image,recall1_mean,fn_sample_rate\n",
    );
    for (raw, result) in args.values.iter().zip(results) {
        let (r_i2t, r_t2i, fn_rate) = result?;
        let fn_cell = fn_rate.map_or_else(String::new, |r| format!("{r}"));
        csv.push_str(&format!(
            "{},{raw},{},{r_i2t},{r_t2i},{},{fn_cell}\n",
            args.axis,
            base.seed,
            (r_i2t + r_t2i) / 2.0,
        ));
    }
    let out = output_path(&args.out);
    report::write_text(&out, &csv)?;
    println!("wrote {} ({} runs)", out.display(), args.values.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::WeightsCurve(args) => cmd_weights_curve(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
