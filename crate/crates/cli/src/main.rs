use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use advgnn::adversarial::{config_fingerprint, train, AdvConfig};
use advgnn::experiment::{run_experiment, ExperimentConfig};
use advgnn::explain::{attribution_record, explain, to_dot, ExplainTarget, Method};
use advgnn::gcn::{Layer, ModelParams};
use advgnn::graph::{read_dataset, split_dataset, write_dataset, Dataset, SplitKind, Task};
use advgnn::metrics::{accuracy, precision_at_gt, sanity_check, PrecisionResult};
use advgnn::numeric::Rng;
use advgnn::util::write_atomic;

#[derive(Parser)]
#[command(name = "advgnn", version, about = "Adversarially trained GCNs and explanation sanity checks")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset into <out>/dataset.json.
    Generate,
    /// Train one model into <out>/model.json and <out>/train_log.csv.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Perturbed layer (x0 or x1); enables adversarial training.
        #[arg(long)]
        layer: Option<String>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Explain instances with one method, writing JSON records and DOT files.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        method: String,
        /// Comma-separated graph indices (graph tasks) or node ids (node
        /// tasks); defaults to the first three test instances.
        #[arg(long, value_delimiter = ',')]
        instances: Vec<usize>,
        /// Class to explain instead of the predicted one.
        #[arg(long)]
        class: Option<usize>,
    },
    /// Model-randomization sanity check on the test split.
    SanityCheck {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Accuracy per split, plus precision when the dataset has ground truth.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Explainer scored for precision.
        #[arg(long)]
        method: Option<String>,
    },
    /// Full grid: ε sweep, replicates, sanity checks or precision, reports.
    Experiment,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig, fallback: &str) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(fallback))
}

/// Reads a dataset file, splitting it with the configured fractions if it
/// has no split yet.
fn load_dataset(path: &Path, cfg: &ExperimentConfig) -> Result<Dataset> {
    let d = read_dataset(path).with_context(|| format!("reading {}", path.display()))?;
    if d.split.is_some() {
        return Ok(d);
    }
    Ok(split_dataset(&d, cfg.split.fractions(), &mut Rng::new(cfg.master_seed).child(1))?)
}

fn load_model(path: &Path, d: &Dataset) -> Result<ModelParams> {
    let (params, _) = ModelParams::load(path).with_context(|| format!("reading {}", path.display()))?;
    if params.task != d.task || params.input_dim() != d.num_features() || params.num_classes() != d.num_classes {
        return Err(advgnn::Error::Mismatch(format!(
            "model expects {:?} with {} features and {} classes; dataset is {:?} with {} features and {} classes",
            params.task,
            params.input_dim(),
            params.num_classes(),
            d.task,
            d.num_features(),
            d.num_classes
        ))
        .into());
    }
    Ok(params)
}

fn parse_layer(s: &str) -> Result<Layer> {
    match s.to_ascii_lowercase().as_str() {
        "x0" | "0" | "input" => Ok(Layer::X0),
        "x1" | "1" | "penultimate" => Ok(Layer::Penultimate),
        _ => Err(advgnn::Error::Config {
            field: "layer".into(),
            reason: format!("unknown layer '{s}'; valid layers: x0, x1"),
        }
        .into()),
    }
}

fn target_for(d: &Dataset, instance: usize) -> ExplainTarget {
    match d.task {
        Task::GraphClassification => ExplainTarget::graph(),
        Task::NodeClassification => ExplainTarget::node(instance),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Generate => {
            let gen = cfg.dataset.generator.as_ref().ok_or_else(|| advgnn::Error::Config {
                field: "dataset.generator".into(),
                reason: "generate needs a generator table".into(),
            })?;
            let d = gen.generate(&Rng::new(cfg.master_seed).child(0))?;
            let path = out_dir(cli, &cfg, ".").join("dataset.json");
            write_dataset(&d, &path)?;
            info!("wrote {} ({} graphs)", path.display(), d.graphs.len());
        }
        Command::Train { dataset, layer, epsilon, lambda } => {
            let d = match dataset {
                Some(p) => load_dataset(p, &cfg)?,
                None => cfg.load_dataset()?,
            };
            let mut acfg: AdvConfig = cfg.adversarial.clone();
            if let Some(l) = layer {
                acfg.layer = parse_layer(l)?;
                acfg.enabled = true;
            }
            if let Some(e) = epsilon {
                acfg.epsilon = *e;
            }
            if let Some(l) = lambda {
                acfg.lambda = *l;
            }
            let rng = Rng::new(cfg.master_seed).child(2).child(0);
            let (params, log) = train(&d, &cfg.train, &acfg, &rng)?;
            let dir = out_dir(cli, &cfg, ".");
            params.save(&dir.join("model.json"), Some(&config_fingerprint(&cfg.train, &acfg)))?;
            write_atomic(&dir.join("train_log.csv"), log.to_csv()?.as_bytes())?;
            info!(
                "best epoch {} with validation accuracy {:.4}; test accuracy {:.4}",
                log.best_epoch,
                log.best_val_accuracy,
                accuracy(&params, &d, SplitKind::Test)?
            );
        }
        Command::Explain { model, dataset, method, instances, class } => {
            let method: Method = method.parse()?;
            let d = load_dataset(dataset, &cfg)?;
            let params = load_model(model, &d)?;
            let ids: Vec<usize> = if instances.is_empty() {
                d.split_indices(SplitKind::Test)?.iter().copied().take(3).collect()
            } else {
                instances.clone()
            };
            let dir = out_dir(cli, &cfg, ".");
            for &i in &ids {
                if i >= d.num_instances() {
                    bail!(advgnn::Error::Config {
                        field: "instances".into(),
                        reason: format!("instance {i} out of range for {} instances", d.num_instances()),
                    });
                }
                let gi = if d.task == Task::GraphClassification { i } else { 0 };
                let g = &d.graphs[gi];
                let mut target = target_for(&d, i);
                if let Some(c) = class {
                    target = target.with_class(*c);
                }
                let a = explain(method, &params, g, target, &cfg.explainer)?;
                let stem = format!("{}_{i}", method.id());
                let mut json = serde_json::to_string_pretty(&attribution_record(i, g, &a))?;
                json.push('\n');
                write_atomic(&dir.join(format!("{stem}.json")), json.as_bytes())?;
                write_atomic(&dir.join(format!("{stem}.dot")), to_dot(&stem, g, &a).as_bytes())?;
            }
            info!("explained {} instances into {}", ids.len(), dir.display());
        }
        Command::SanityCheck { model, dataset, method, trials } => {
            let method: Method = method.parse()?;
            let d = load_dataset(dataset, &cfg)?;
            let params = load_model(model, &d)?;
            let trials = trials.unwrap_or(cfg.trials);
            let rng = Rng::new(cfg.master_seed).child(3);
            let res = sanity_check(&params, &d, method, &cfg.explainer, trials, &rng)?;
            let dir = out_dir(cli, &cfg, ".");
            let mut json = serde_json::to_string_pretty(&res)?;
            json.push('\n');
            write_atomic(&dir.join(format!("sanity_{}.json", method.id())), json.as_bytes())?;
            info!(
                "{}: mean spearman {:.4} (pearson {:.4}) over {} samples, {} degenerate",
                method,
                res.mean_spearman,
                res.mean_pearson,
                res.samples.len(),
                res.degenerate_count
            );
        }
        Command::Evaluate { model, dataset, method } => {
            let d = load_dataset(dataset, &cfg)?;
            let params = load_model(model, &d)?;
            let mut report = serde_json::json!({
                "accuracy": {
                    "train": accuracy(&params, &d, SplitKind::Train)?,
                    "val": accuracy(&params, &d, SplitKind::Val)?,
                    "test": accuracy(&params, &d, SplitKind::Test)?,
                }
            });
            if let Some(m) = method {
                let method: Method = m.parse()?;
                let mut samples = Vec::new();
                for &i in d.split_indices(SplitKind::Test)? {
                    let gi = if d.task == Task::GraphClassification { i } else { 0 };
                    let a = explain(method, &params, &d.graphs[gi], target_for(&d, i), &cfg.explainer)?;
                    match precision_at_gt(&a, &d.graphs[gi]) {
                        Ok(mut s) => {
                            s.instance = i;
                            samples.push(s);
                        }
                        Err(advgnn::Error::MissingGroundTruth(_)) => {}
                        Err(e) => return Err(e.into()),
                    }
                }
                if samples.is_empty() {
                    return Err(advgnn::Error::MissingGroundTruth("explanations in the test split").into());
                }
                report["precision"] = serde_json::to_value(PrecisionResult::from_samples(samples))?;
            }
            let dir = out_dir(cli, &cfg, ".");
            let mut json = serde_json::to_string_pretty(&report)?;
            json.push('\n');
            write_atomic(&dir.join("evaluation.json"), json.as_bytes())?;
            info!("{}", report["accuracy"]);
        }
        Command::Experiment => {
            let dir = out_dir(cli, &cfg, "results");
            let out = run_experiment(&cfg)?;
            out.write(&dir)?;
            if !cli.quiet {
                print!("{}", out.summary_csv()?);
            }
            if out.report.partial {
                log::warn!("some cells failed; see report.json");
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<advgnn::Error>() {
        Some(e) if e.is_validation() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
