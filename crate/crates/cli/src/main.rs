//! Command-line front end: perturb, augment, train, score, evaluate, report.
//!
//! Every subcommand validates all of its inputs before writing any output,
//! and all randomness flows from explicit `--seed` flags. Exit codes: 0 on
//! success, 1 on runtime failures, 2 on validation or usage errors.

use std::io::{Read, Write};
use std::process::ExitCode;
use std::time::Duration;

use clap::{ArgGroup, Parser, Subcommand};

use mcqa_probe::augment::AugmentConfig;
use mcqa_probe::dataset::{load_dataset, read_dataset, write_dataset, Dataset};
use mcqa_probe::error::{Error, Result};
use mcqa_probe::evalreport::{
    accuracy, compliance_report, load_predictions, monotonicity_check, no_setting_inapplicable,
    read_predictions, render_report, write_predictions, MonotonicityReport, PredictionFile,
    ReportFormat,
};
use mcqa_probe::perturb::{apply, PerturbationSetting, PioChoice};
use mcqa_probe::scorer::{
    score_dataset, score_dataset_remote, LinearScorer, RemoteScorerConfig, ScoreMatrix,
    DEFAULT_TIMEOUT_MS,
};
use mcqa_probe::train::{default_epochs, train, LossKind, TrainConfig};

const REMOTE_TIMEOUT_ENV: &str = "MCQA_PROBE_REMOTE_TIMEOUT_MS";

#[derive(Parser)]
#[command(
    name = "mcqa-probe",
    version,
    about = "Expectation probing for multiple-choice QA models",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply one evaluation-setting perturbation to a dataset
    Perturb(PerturbArgs),
    /// Materialize one epoch of augmented training triplets
    Augment(AugmentArgs),
    /// Train the lexical linear scorer
    Train(TrainArgs),
    /// Score a dataset with a local model or a remote service
    Score(ScoreArgs),
    /// Run a scorer across all settings and print the compliance report
    Evaluate(EvaluateArgs),
    /// Build a compliance report from prediction files
    Report(ReportArgs),
}

#[derive(clap::Args)]
struct PerturbArgs {
    /// Setting to apply: original, pio, no, nq, or nc
    #[arg(long)]
    setting: PerturbationSetting,
    /// Input dataset ("-" for stdin)
    #[arg(long = "in")]
    input: String,
    /// Output dataset ("-" for stdout)
    #[arg(long)]
    out: String,
    /// Where to write the PIO audit log (pio only)
    #[arg(long)]
    choices: Option<String>,
    /// PRNG seed for the PIO option choice
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct AugmentArgs {
    /// Input dataset ("-" for stdin)
    #[arg(long = "in")]
    input: String,
    /// Output triplet file ("-" for stdout)
    #[arg(long)]
    out: String,
    /// Sampler seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability of rewriting the correct option's triplet
    #[arg(long = "p-correct", default_value_t = 0.2)]
    p_correct: f64,
    /// Probability of rewriting each incorrect option's triplet
    #[arg(long = "p-incorrect", default_value_t = 0.8)]
    p_incorrect: f64,
    /// Epoch index to sample (each epoch draws a different stream)
    #[arg(long, default_value_t = 0)]
    epoch: u64,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Training objective: multiclass or binary
    #[arg(long)]
    loss: LossKind,
    /// Input dataset ("-" for stdin)
    #[arg(long = "in")]
    input: String,
    /// Where to write the trained model
    #[arg(long = "model-out")]
    model_out: String,
    /// Where to write the per-epoch training log (stdout when omitted)
    #[arg(long)]
    log: Option<String>,
    /// Number of epochs (default: 4, or 5 with --augment)
    #[arg(long)]
    epochs: Option<usize>,
    /// SGD learning rate
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Seed for the per-epoch shuffle (and augmentation, unless overridden)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Enable per-epoch augmentation (binary loss only)
    #[arg(long)]
    augment: bool,
    #[arg(long = "p-correct", default_value_t = 0.2)]
    p_correct: f64,
    #[arg(long = "p-incorrect", default_value_t = 0.8)]
    p_incorrect: f64,
    /// Separate seed for the augmentation sampler
    #[arg(long = "augment-seed")]
    augment_seed: Option<u64>,
    /// First epoch (0-based) in which augmentation applies
    #[arg(long = "augment-start-epoch", default_value_t = 0)]
    augment_start_epoch: usize,
}

#[derive(clap::Args)]
#[command(group(ArgGroup::new("scorer").required(true).args(["model", "remote"])))]
struct ScoreArgs {
    /// Path to a saved linear model
    #[arg(long)]
    model: Option<String>,
    /// Base URL of a remote scoring service
    #[arg(long)]
    remote: Option<String>,
    /// Input dataset ("-" for stdin)
    #[arg(long = "in")]
    input: String,
    /// Output prediction file ("-" for stdout)
    #[arg(long)]
    out: String,
    /// Remote batch size
    #[arg(long = "batch-size", default_value_t = 64)]
    batch_size: usize,
    /// Parallel remote workers
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(clap::Args)]
#[command(group(ArgGroup::new("scorer").required(true).args(["model", "remote"])))]
struct EvaluateArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    remote: Option<String>,
    /// Gold dataset ("-" for stdin)
    #[arg(long = "in")]
    input: String,
    /// Seed for the PIO perturbation
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report format: tsv or markdown
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Where to write the report (stdout when omitted)
    #[arg(long)]
    out: Option<String>,
    /// Row label in the report
    #[arg(long = "model-name")]
    model_name: Option<String>,
    #[arg(long = "batch-size", default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// Gold dataset
    #[arg(long)]
    gold: String,
    /// Predictions under the Original setting
    #[arg(long)]
    original: String,
    /// Predictions under PIO
    #[arg(long)]
    pio: Option<String>,
    /// PIO audit log, enables the monotonicity metrics
    #[arg(long)]
    choices: Option<String>,
    /// Predictions under No Option
    #[arg(long = "no")]
    no_preds: Option<String>,
    /// Predictions under No Question
    #[arg(long = "nq")]
    nq_preds: Option<String>,
    /// Predictions under No Context
    #[arg(long = "nc")]
    nc_preds: Option<String>,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    #[arg(long = "model-name", default_value = "model")]
    model_name: String,
    /// Where to write the report (stdout when omitted)
    #[arg(long)]
    out: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Perturb(args) => cmd_perturb(args),
        Command::Augment(args) => cmd_augment(args),
        Command::Train(args) => cmd_train(args),
        Command::Score(args) => cmd_score(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn read_dataset_arg(path: &str) -> Result<Dataset> {
    if path == "-" {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| Error::io("<stdin>", e))?;
        read_dataset(buf.as_slice(), "<stdin>")
    } else {
        load_dataset(path)
    }
}

fn read_predictions_arg(path: &str) -> Result<PredictionFile> {
    if path == "-" {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| Error::io("<stdin>", e))?;
        read_predictions(buf.as_slice(), "<stdin>")
    } else {
        load_predictions(path)
    }
}

/// Writes fully computed bytes to a file or stdout. Outputs are staged in
/// memory first so a validation failure never leaves a partial file.
fn write_output(path: &str, bytes: &[u8]) -> Result<()> {
    if path == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io("<stdout>", e))
    } else {
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

fn dataset_bytes(d: &Dataset) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    write_dataset(d, &mut bytes, "<memory>")?;
    Ok(bytes)
}

fn jsonl_bytes<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| Error::Validation(e.to_string()))?;
        bytes.extend_from_slice(line.as_bytes());
        bytes.push(b'\n');
    }
    Ok(bytes)
}

fn cmd_perturb(args: PerturbArgs) -> Result<()> {
    if args.choices.is_some() && args.setting != PerturbationSetting::Pio {
        return Err(Error::Config(
            "--choices only applies to --setting pio".into(),
        ));
    }
    let d = read_dataset_arg(&args.input)?;
    let (out, choices) = apply(args.setting, &d, args.seed);
    let out_bytes = dataset_bytes(&out)?;
    let choice_bytes = match (&args.choices, &choices) {
        (Some(_), Some(ch)) => Some(jsonl_bytes(ch)?),
        _ => None,
    };
    write_output(&args.out, &out_bytes)?;
    if let (Some(path), Some(bytes)) = (&args.choices, &choice_bytes) {
        write_output(path, bytes)?;
    }
    Ok(())
}

fn cmd_augment(args: AugmentArgs) -> Result<()> {
    let cfg = AugmentConfig {
        p_correct: args.p_correct,
        p_incorrect: args.p_incorrect,
        seed: args.seed,
    };
    cfg.validate()?;
    let d = read_dataset_arg(&args.input)?;
    let triplets = mcqa_probe::augment::augment_epoch(&d, &cfg, args.epoch);
    write_output(&args.out, &jsonl_bytes(&triplets)?)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let augment = args.augment.then_some(AugmentConfig {
        p_correct: args.p_correct,
        p_incorrect: args.p_incorrect,
        seed: args.augment_seed.unwrap_or(args.seed),
    });
    let cfg = TrainConfig {
        loss: args.loss,
        epochs: args.epochs.unwrap_or_else(|| default_epochs(args.augment)),
        learning_rate: args.lr,
        seed: args.seed,
        augment,
        augment_start_epoch: args.augment_start_epoch,
    };
    let d = read_dataset_arg(&args.input)?;
    let record = train(&d, &cfg)?;

    let mut log_bytes = Vec::new();
    for (epoch, loss) in record.epoch_losses.iter().enumerate() {
        log_bytes
            .extend_from_slice(format!("{{\"epoch\":{epoch},\"mean_loss\":{loss}}}\n").as_bytes());
    }
    record.scorer.save(&args.model_out)?;
    match &args.log {
        Some(path) => write_output(path, &log_bytes)?,
        None => write_output("-", &log_bytes)?,
    }
    Ok(())
}

fn remote_config(url: &str, batch_size: usize) -> Result<RemoteScorerConfig> {
    let timeout_ms = match std::env::var(REMOTE_TIMEOUT_ENV) {
        Ok(v) => v.parse::<u64>().map_err(|_| {
            Error::Config(format!("{REMOTE_TIMEOUT_ENV} must be an integer, got {v:?}"))
        })?,
        Err(_) => DEFAULT_TIMEOUT_MS,
    };
    Ok(RemoteScorerConfig {
        endpoint_url: url.to_string(),
        batch_size,
        timeout: Duration::from_millis(timeout_ms),
    })
}

enum ScorerChoice {
    Local(LinearScorer),
    Remote(RemoteScorerConfig, usize),
}

impl ScorerChoice {
    fn from_flags(
        model: &Option<String>,
        remote: &Option<String>,
        batch_size: usize,
        workers: usize,
    ) -> Result<Self> {
        match (model, remote) {
            (Some(path), None) => Ok(ScorerChoice::Local(LinearScorer::load(path)?)),
            (None, Some(url)) => Ok(ScorerChoice::Remote(
                remote_config(url, batch_size)?,
                workers,
            )),
            _ => Err(Error::Config(
                "exactly one of --model or --remote is required".into(),
            )),
        }
    }

    fn score(&self, d: &Dataset) -> Result<ScoreMatrix> {
        match self {
            ScorerChoice::Local(m) => score_dataset(m, d),
            ScorerChoice::Remote(cfg, workers) => score_dataset_remote(cfg, d, *workers),
        }
    }
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let scorer = ScorerChoice::from_flags(&args.model, &args.remote, args.batch_size, args.workers)?;
    let d = read_dataset_arg(&args.input)?;
    let matrix = scorer.score(&d)?;
    let preds = PredictionFile::from_matrix(&d, &matrix);
    let mut bytes = Vec::new();
    write_predictions(&preds, &mut bytes, "<memory>")?;
    write_output(&args.out, &bytes)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let scorer =
        ScorerChoice::from_flags(&args.model, &args.remote, args.batch_size, args.workers)?;
    let gold = read_dataset_arg(&args.input)?;

    let mut settings = vec![
        PerturbationSetting::Original,
        PerturbationSetting::Pio,
        PerturbationSetting::No,
        PerturbationSetting::Nq,
        PerturbationSetting::Nc,
    ];
    if no_setting_inapplicable(&gold) {
        settings.retain(|&s| s != PerturbationSetting::No);
        eprintln!("note: all options share one context; the NO setting is not applicable");
    }

    let mut accuracies = Vec::new();
    let mut originals: Option<PredictionFile> = None;
    let mut monotonicity: Option<MonotonicityReport> = None;
    for &setting in &settings {
        let (perturbed, choices) = apply(setting, &gold, args.seed);
        let matrix = scorer.score(&perturbed)?;
        let preds = PredictionFile::from_matrix(&perturbed, &matrix);
        accuracies.push((setting, accuracy(&preds, &gold)?));
        match setting {
            PerturbationSetting::Original => originals = Some(preds),
            PerturbationSetting::Pio => {
                let orig = originals
                    .as_ref()
                    .expect("Original is evaluated before PIO");
                monotonicity = Some(monotonicity_check(
                    orig,
                    &preds,
                    &gold,
                    choices.as_deref().unwrap_or(&[]),
                )?);
            }
            _ => {}
        }
    }

    let name = args.model_name.clone().unwrap_or_else(|| {
        args.model
            .clone()
            .unwrap_or_else(|| args.remote.clone().unwrap_or_default())
    });
    let report = compliance_report(name, &gold, &accuracies, monotonicity)?;
    let rendered = render_report(&report, args.format);
    write_output(args.out.as_deref().unwrap_or("-"), rendered.as_bytes())
}

fn load_choices(path: &str) -> Result<Vec<PioChoice>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let choice: PioChoice = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(choice);
    }
    Ok(out)
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let gold = read_dataset_arg(&args.gold)?;
    let mut accuracies = Vec::new();
    let original = read_predictions_arg(&args.original)?;
    accuracies.push((PerturbationSetting::Original, accuracy(&original, &gold)?));

    let mut monotonicity = None;
    if let Some(path) = &args.pio {
        let pio = read_predictions_arg(path)?;
        accuracies.push((PerturbationSetting::Pio, accuracy(&pio, &gold)?));
        if let Some(choices_path) = &args.choices {
            let choices = load_choices(choices_path)?;
            monotonicity = Some(monotonicity_check(&original, &pio, &gold, &choices)?);
        }
    } else if args.choices.is_some() {
        return Err(Error::Config("--choices requires --pio".into()));
    }

    if let Some(path) = &args.no_preds {
        if no_setting_inapplicable(&gold) {
            eprintln!(
                "note: all options share one context; omitting the NO column from the report"
            );
        } else {
            let preds = read_predictions_arg(path)?;
            accuracies.push((PerturbationSetting::No, accuracy(&preds, &gold)?));
        }
    }
    if let Some(path) = &args.nq_preds {
        let preds = read_predictions_arg(path)?;
        accuracies.push((PerturbationSetting::Nq, accuracy(&preds, &gold)?));
    }
    if let Some(path) = &args.nc_preds {
        let preds = read_predictions_arg(path)?;
        accuracies.push((PerturbationSetting::Nc, accuracy(&preds, &gold)?));
    }

    let report = compliance_report(&args.model_name, &gold, &accuracies, monotonicity)?;
    let rendered = render_report(&report, args.format);
    write_output(args.out.as_deref().unwrap_or("-"), rendered.as_bytes())
}
