use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ciai::augment::augment;
use ciai::checkpoint::Checkpoint;
use ciai::classifier::{load_classifier, TextClassifier};
use ciai::config::Config;
use ciai::corpus::{load_corpus, save_corpus, stratified_split, validate_corpus, write_split, Corpus, CorpusFormat, LabelRegistry};
use ciai::ensemble::{build_prediction_matrix, rank_predictors_cv, PredictionMatrix, StackingEnsemble};
use ciai::eval::{compare_runs, errors_to_text, occlusion_attribution, predict_corpus, worst_errors_from, MetricsReport};
use ciai::pipeline::{default_base_specs, fit_model, fit_stack, BaseSpec, ModelKind};
use ciai::router::{run_terminal, AppState, Router, RunningService};

#[derive(Parser)]
#[command(name = "ciai", version, about = "Command-to-task intent classification")]
struct Cli {
    /// Seed for every stochastic step; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model checkpoint to read, or to write for train and stack.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus file and write it back as normalized JSONL.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Take the label registry from the data instead of the standard seven.
        #[arg(long)]
        infer_labels: bool,
    },
    /// Stratified per-class train/validation split.
    Split {
        input: PathBuf,
        /// Output prefix; writes <prefix>.train.jsonl and <prefix>.valid.jsonl.
        #[arg(long)]
        prefix: PathBuf,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Paraphrase and balance a training corpus.
    Augment {
        train: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train one model and save its checkpoint to --model.
    Train {
        train: PathBuf,
        #[arg(long, default_value = "attention")]
        kind: ModelKind,
    },
    /// Metrics, confusion matrix and loss-ranked errors on a corpus.
    Evaluate {
        data: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Also save the JSON report here (input for compare).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        confusion_csv: Option<PathBuf>,
        /// List misclassified samples with loss above the configured threshold.
        #[arg(long)]
        errors: bool,
    },
    /// Difference b − a between two saved evaluation reports.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Fit base models and a stacking meta-classifier; saves to --model.
    Stack {
        train: PathBuf,
        /// Base model as name=kind; repeatable. Defaults to a five-model set.
        #[arg(long = "base")]
        bases: Vec<BaseSpec>,
        /// Write the out-of-fold prediction matrix as CSV.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Rank base models by cross-validated information gain.
    Rank {
        /// Prediction matrix CSV; otherwise built from --model (an ensemble) on --data.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Occlusion attribution for one command.
    Explain {
        text: String,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        addr: Option<String>,
    },
    /// Interactive routing session on the terminal.
    Chat,
}

fn read_corpus(path: &Path, registry: Option<&LabelRegistry>) -> Result<Corpus> {
    let outcome = load_corpus(path, CorpusFormat::from_path(path), registry).with_context(|| format!("loading {}", path.display()))?;
    if outcome.duplicates_dropped > 0 {
        eprintln!("{}: dropped {} duplicate record(s)", path.display(), outcome.duplicates_dropped);
    }
    Ok(outcome.corpus)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn model_path(cli: &Cli) -> Result<&Path> {
    cli.model.as_deref().context("--model <checkpoint> is required")
}

fn load_model(cli: &Cli) -> Result<Box<dyn TextClassifier>> {
    let path = model_path(cli)?;
    load_classifier(path).with_context(|| format!("loading model {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = cli.seed.unwrap_or(config.seed);
    let config = config.with_seed(seed);

    match &cli.command {
        Command::Ingest {
            input,
            output,
            infer_labels,
        } => {
            let standard = LabelRegistry::standard();
            let corpus = read_corpus(input, (!infer_labels).then_some(&standard))?;
            print_json(&validate_corpus(&corpus))?;
            if let Some(out) = output {
                save_corpus(&corpus, out, CorpusFormat::from_path(out))?;
            }
        }
        Command::Split {
            input,
            prefix,
            train_fraction,
        } => {
            let corpus = read_corpus(input, None)?;
            let split = stratified_split(&corpus, train_fraction.unwrap_or(config.split.train_fraction), seed)?;
            for p in write_split(&split, prefix)? {
                println!("{}", p.display());
            }
        }
        Command::Augment { train, output, manifest } => {
            let corpus = read_corpus(train, None)?;
            let provider = config.augment.provider(seed)?;
            let augmented = augment(&corpus, &provider)?;
            save_corpus(&augmented.corpus, output, CorpusFormat::from_path(output))?;
            let m = augmented.manifest(&provider);
            match manifest {
                Some(p) => write_json(p, &m)?,
                None => print_json(&m)?,
            }
        }
        Command::Train { train, kind } => {
            let out = model_path(&cli)?;
            let corpus = read_corpus(train, None)?;
            let model = fit_model(*kind, &corpus, &config)?;
            model.to_checkpoint()?.save(out)?;
            println!("{kind} model saved to {} ({})", out.display(), model.fingerprint()?);
        }
        Command::Evaluate {
            data,
            format,
            report,
            confusion_csv,
            errors,
        } => {
            let model = load_model(&cli)?;
            let corpus = read_corpus(data, Some(model.labels()))?;
            let preds = predict_corpus(model.as_ref(), &corpus)?;
            let r = MetricsReport::from_predictions(corpus.registry(), &corpus.content_hash(), &preds)?;
            let worst = worst_errors_from(corpus.registry(), &preds, config.eval.loss_threshold);
            match format {
                Format::Json => print_json(&serde_json::json!({ "report": &r, "errors": if *errors { Some(&worst) } else { None } }))?,
                Format::Text => {
                    print!("{}", r.to_text());
                    println!();
                    print!("{}", r.confusion.to_text());
                    if *errors {
                        println!();
                        print!("{}", errors_to_text(corpus.registry(), &worst));
                    }
                }
            }
            if let Some(p) = report {
                write_json(p, &r)?;
            }
            if let Some(p) = confusion_csv {
                r.confusion.write_csv(File::create(p)?)?;
            }
        }
        Command::Compare { a, b, format } => {
            let read = |p: &Path| -> Result<MetricsReport> {
                Ok(serde_json::from_reader(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?))?)
            };
            let cmp = compare_runs(&read(a)?, &read(b)?)?;
            match format {
                Format::Json => print_json(&cmp)?,
                Format::Text => print!("{}", cmp.to_text()),
            }
        }
        Command::Stack { train, bases, matrix } => {
            let out = model_path(&cli)?;
            let corpus = read_corpus(train, None)?;
            let specs = if bases.is_empty() { default_base_specs() } else { bases.clone() };
            let outcome = fit_stack(&specs, &corpus, &config)?;
            outcome.ensemble.to_checkpoint()?.save(out)?;
            if let Some(p) = matrix {
                outcome.meta_training.write_csv(File::create(p)?)?;
            }
            let m = &outcome.meta_training;
            for (j, name) in m.models.iter().enumerate() {
                println!("{name:<24} out-of-fold accuracy {:.4}", m.column_accuracy(j));
            }
            println!("{:<24} out-of-fold accuracy {:.4}", "meta", outcome.ensemble.meta.accuracy(m)?);
            println!("ensemble saved to {}", out.display());
        }
        Command::Rank {
            matrix,
            data,
            folds,
            format,
        } => {
            let m = match (matrix, data) {
                (Some(p), _) => PredictionMatrix::read_csv(File::open(p)?, &LabelRegistry::standard())?,
                (None, Some(d)) => {
                    let ensemble = StackingEnsemble::from_checkpoint(&Checkpoint::load(model_path(&cli)?)?)?;
                    let corpus = read_corpus(d, Some(ensemble.labels()))?;
                    build_prediction_matrix(&ensemble.base, &corpus)?
                }
                (None, None) => bail!("rank needs --matrix or --data with an ensemble --model"),
            };
            let ranking = rank_predictors_cv(&m, folds.unwrap_or(config.ensemble.rank_folds), seed)?;
            match format {
                Format::Json => print_json(&ranking)?,
                Format::Text => {
                    println!("{:<24} {:>16} {:>12}", "model", "info gain", "rank");
                    for s in ranking.ranked() {
                        println!(
                            "{:<24} {:>8.3} ± {:<5.3} {:>5.2} ± {:<4.2}",
                            s.name, s.mean_information_gain, s.std_information_gain, s.mean_rank, s.std_rank
                        );
                    }
                }
            }
        }
        Command::Explain { text, format } => {
            let model = load_model(&cli)?;
            let a = occlusion_attribution(model.as_ref(), text)?;
            match format {
                Format::Json => print_json(&a)?,
                Format::Text => {
                    println!("{} ({:.3})", a.predicted, a.baseline_probability);
                    for (t, s) in a.tokens.iter().zip(&a.scores) {
                        println!("  {t:<16} {s:+.4}");
                    }
                    for iso in &a.isolated {
                        println!("  {:?} alone -> {} ({:.3})", iso.token, iso.label, iso.probability);
                    }
                }
            }
        }
        Command::Serve { addr } => {
            let model: Arc<dyn TextClassifier> = Arc::from(load_model(&cli)?);
            let router = Router::with_stub_handlers(model, config.router);
            let state = AppState::new(router, Duration::from_secs(config.service.idle_timeout_secs))?;
            let addr = addr.clone().unwrap_or(config.service.addr.clone());
            let service = RunningService::start(&addr, Arc::new(state)).with_context(|| format!("binding {addr}"))?;
            eprintln!("listening on http://{}", service.addr());
            service.wait()?;
        }
        Command::Chat => {
            let model: Arc<dyn TextClassifier> = Arc::from(load_model(&cli)?);
            let router = Router::with_stub_handlers(model, config.router);
            let stdout = std::io::stdout();
            run_terminal(&router, std::io::stdin().lock(), stdout.lock())?;
            stdout.lock().flush()?;
        }
    }
    Ok(())
}
