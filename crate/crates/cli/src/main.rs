//! `timegraphs` command-line entry point.
//!
//! Every command reads one flat run configuration: defaults, then the
//! `--config` file, then `TIMEGRAPHS_<KEY>` environment overrides of
//! top-level keys, then `--seed` and `--ablation`. Progress goes to stderr
//! as JSON lines, a one-line JSON summary to stdout, and failures to stderr
//! as `{"error": {"code", "message"}}` with a nonzero exit status.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use timegraphs::classifier::Ablation;
use timegraphs::config::RunConfig;
use timegraphs::datasets::{labels_to_text, load_dataset, simulate, split, Dataset};
use timegraphs::diagnostics::gradient_checks;
use timegraphs::evaluation::{arms_table, run_future_sweep, run_growing_window, run_main_eval};
use timegraphs::event_model::EventModel;
use timegraphs::graph::wire::{parse_sequences, sequences_to_text};
use timegraphs::graph::{build_level0, StreamingBuilder};
use timegraphs::model::ModelBundle;
use timegraphs::numerics::Checkpoint;
use timegraphs::pipeline::{pretrain, train_joint, train_two_phase, window_splits, windows_of};
use timegraphs::train::EpochRecord;

const ENV_PREFIX: &str = "TIMEGRAPHS_";
const SNAPSHOTS: &str = "snapshots.jsonl";
const LABELS: &str = "labels.jsonl";
const MANIFEST: &str = "manifest.json";
const EVENT_MODEL: &str = "event_model.json";
const MODEL: &str = "model.json";

#[derive(Parser)]
#[command(name = "timegraphs", version, about = "Hierarchical temporal knowledge graphs for event recognition")]
struct Cli {
    /// Run configuration (JSON); unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the run seed (and the simulator seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Classifier ablation for train and e2e
    #[arg(long, global = true)]
    ablation: Option<Ablation>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a synthetic dataset directory.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Builds the level-0 graph of one sequence and writes its export.
    BuildGraph {
        /// Snapshot JSONL file.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Feed snapshots one at a time through the incremental builder.
        #[arg(long)]
        stream: bool,
        #[arg(long, default_value_t = 0)]
        sequence: usize,
    },
    /// Pretrains the event model on the training windows.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains the classifier over a frozen pretrained event model.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Event-model checkpoint; not needed under `--ablation no-supernodes`.
        #[arg(long)]
        event: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains the event model and classifier jointly from scratch.
    E2e {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluates model checkpoints, each given as PATH or NAME=PATH.
    Eval {
        #[arg(long, required = true)]
        model: Vec<String>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Experiment::Main)]
        experiment: Experiment,
        #[arg(long, value_enum, default_value_t = Part::Test)]
        split: Part,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference checks of every training loss on toy problems.
    Gradcheck {
        #[arg(long, default_value_t = timegraphs::diagnostics::DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Configuration helpers
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Writes the effective configuration with every default filled in.
    Init {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Experiment {
    Main,
    Growing,
    Future,
    Ablation,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Part {
    Train,
    Val,
    Test,
    All,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("usage", &e.render().to_string());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e
                .downcast_ref::<timegraphs::Error>()
                .map(|c| c.code())
                .or_else(|| e.downcast_ref::<CliError>().map(|c| c.0))
                .or_else(|| io_code(&e))
                .unwrap_or("runtime");
            report_error(code, &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}

/// An error raised by the command layer itself, with its report code.
#[derive(Debug)]
struct CliError(&'static str, String);

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for CliError {}

fn io_code(e: &anyhow::Error) -> Option<&'static str> {
    let io = e.root_cause().downcast_ref::<std::io::Error>()?;
    Some(match io.kind() {
        std::io::ErrorKind::NotFound => "missing_file",
        _ => "io",
    })
}

fn report_error(code: &str, message: &str) {
    eprintln!("{}", json!({"error": {"code": code, "message": message.trim_end()}}));
}

fn log(event: &str, fields: Value) {
    let mut line = json!({"event": event});
    if let (Some(obj), Value::Object(extra)) = (line.as_object_mut(), fields) {
        obj.extend(extra);
    }
    eprintln!("{line}");
}

fn log_epoch(r: &EpochRecord) {
    log("epoch", serde_json::to_value(r).unwrap_or(Value::Null));
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut doc = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| timegraphs::Error::Config(format!("{}: {e}", path.display())))?
        }
        None => json!({}),
    };
    let Value::Object(fields) = &mut doc else {
        return Err(timegraphs::Error::Config("config must be a JSON object".into()).into());
    };
    let defaults = serde_json::to_value(RunConfig::default())?;
    for key in defaults.as_object().into_iter().flat_map(|o| o.keys()) {
        let var = format!("{ENV_PREFIX}{}", key.to_uppercase());
        if let Ok(raw) = std::env::var(&var) {
            // JSON when it parses, a bare string otherwise.
            let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
            fields.insert(key.clone(), value);
        }
    }
    let mut config = RunConfig::from_json(&doc.to_string())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.simulator.seed = seed;
    }
    if let Some(a) = cli.ablation {
        config.ablation = a;
    }
    config.check()?;
    Ok(config)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Categories come from the config when set, else the dataset manifest.
fn load_data(dir: &Path, config: &RunConfig) -> Result<Dataset> {
    let categories = match &config.categories {
        Some(c) => c.clone(),
        None => {
            let path = dir.join(MANIFEST);
            if !path.exists() {
                return Err(CliError("config", format!("no categories in the config and no {}", path.display())).into());
            }
            let manifest: Value = serde_json::from_str(&read(&path)?)?;
            serde_json::from_value(manifest["categories"].clone())
                .map_err(|e| timegraphs::Error::Schema(format!("{}: categories: {e}", path.display())))?
        }
    };
    Ok(load_dataset(
        &read(&dir.join(SNAPSHOTS))?,
        &read(&dir.join(LABELS))?,
        &categories,
    )?)
}

fn run(cli: Cli) -> Result<Value> {
    let config = load_config(&cli)?;
    let hash = config.hash()?;
    let mut summary = match &cli.command {
        Command::Simulate { out } => cmd_simulate(&config, out)?,
        Command::BuildGraph { input, out, stream, sequence } => cmd_build_graph(&config, &hash, input, out, *stream, *sequence)?,
        Command::Pretrain { data, out } => cmd_pretrain(&config, &hash, data, out)?,
        Command::Train { data, event, out } => cmd_train(&config, &hash, data, event.as_deref(), out)?,
        Command::E2e { data, out } => cmd_e2e(&config, &hash, data, out)?,
        Command::Eval { model, data, experiment, split, out } => {
            cmd_eval(&config, &hash, model, data, *experiment, *split, out)?
        }
        Command::Gradcheck { eps, tolerance, out } => cmd_gradcheck(&config, &hash, *eps, *tolerance, out.as_deref())?,
        Command::Config { action: ConfigAction::Init { out } } => cmd_config_init(&config, out.as_deref())?,
    };
    if let Value::Object(obj) = &mut summary {
        obj.insert("config_hash".into(), Value::String(hash));
    }
    Ok(summary)
}

fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<Value> {
    let sim = simulate(&config.simulator)?;
    create_dir(out)?;
    let snapshots: Vec<_> = sim.dataset.sequences.iter().map(|s| s.snapshots.clone()).collect();
    fs::write(out.join(SNAPSHOTS), sequences_to_text(&snapshots)?)?;
    fs::write(out.join(LABELS), labels_to_text(&sim.dataset)?)?;
    write_json(&out.join(MANIFEST), &sim.manifest)?;
    Ok(json!({
        "command": "simulate",
        "sequences": sim.manifest.sequences,
        "categories": sim.manifest.categories,
        "simulator_hash": sim.manifest.config_hash,
    }))
}

fn cmd_build_graph(config: &RunConfig, hash: &str, input: &Path, out: &Path, stream: bool, sequence: usize) -> Result<Value> {
    let seqs = parse_sequences(&read(input)?)?;
    let Some(snapshots) = seqs.get(sequence) else {
        return Err(timegraphs::Error::InvalidArgument(format!(
            "sequence {sequence} requested but the input holds {}",
            seqs.len()
        ))
        .into());
    };
    let builder = timegraphs::model::effective_builder(&config.builder(), config.ablation);
    let tkg = if stream {
        let mut b = StreamingBuilder::new(builder);
        for s in snapshots {
            b.ingest(s)?;
        }
        b.finish()
    } else {
        build_level0(snapshots, &builder)?
    };
    fs::write(out, tkg.to_json()?).with_context(|| format!("writing {}", out.display()))?;
    log("graph", json!({"config_hash": hash, "nodes": tkg.nodes().len(), "edges": tkg.edges().len()}));
    Ok(json!({
        "command": "build-graph",
        "nodes": tkg.nodes().len(),
        "edges": tkg.edges().len(),
        "stream": stream,
    }))
}

fn cmd_pretrain(config: &RunConfig, hash: &str, data: &Path, out: &Path) -> Result<Value> {
    let dataset = load_data(data, config)?;
    let w = window_splits(&dataset, config)?;
    log("data", json!({"train": w.train.len(), "val": w.val.len(), "test": w.test.len()}));
    let (model, history) = pretrain(config, &w.train, &mut log_epoch)?;
    create_dir(out)?;
    model.to_checkpoint(hash)?.save(out.join(EVENT_MODEL))?;
    write_json(&out.join("pretrain_history.json"), &json!({"config_hash": hash, "history": history}))?;
    Ok(json!({
        "command": "pretrain",
        "checkpoint": out.join(EVENT_MODEL),
        "final_loss": history.last().map(|r| r.loss),
    }))
}

fn cmd_train(config: &RunConfig, hash: &str, data: &Path, event: Option<&Path>, out: &Path) -> Result<Value> {
    let event = match event {
        Some(p) => Some(EventModel::from_checkpoint(&Checkpoint::load(p)?)?),
        None => None,
    };
    let dataset = load_data(data, config)?;
    let w = window_splits(&dataset, config)?;
    let (bundle, outcome) = train_two_phase(config, event, &dataset.categories, &w.train, &w.val, &mut log_epoch)?;
    save_model(hash, &bundle, &outcome, out, "train")
}

fn cmd_e2e(config: &RunConfig, hash: &str, data: &Path, out: &Path) -> Result<Value> {
    let dataset = load_data(data, config)?;
    let w = window_splits(&dataset, config)?;
    let (bundle, outcome) = train_joint(config, &dataset.categories, &w.train, &w.val, &mut log_epoch)?;
    save_model(hash, &bundle, &outcome, out, "e2e")
}

fn save_model(
    hash: &str,
    bundle: &ModelBundle,
    outcome: &timegraphs::train::TrainOutcome,
    out: &Path,
    command: &str,
) -> Result<Value> {
    create_dir(out)?;
    bundle.to_checkpoint(hash)?.save(out.join(MODEL))?;
    write_json(&out.join("train_history.json"), &json!({"config_hash": hash, "outcome": outcome}))?;
    Ok(json!({
        "command": command,
        "checkpoint": out.join(MODEL),
        "best_epoch": outcome.best_epoch,
        "best_val_f1": outcome.best_val_f1,
    }))
}

fn arm_name(bundle: &ModelBundle, experiment: Experiment) -> Result<String> {
    let ablation = serde_json::to_value(bundle.ablation())?;
    let ablation = ablation.as_str().unwrap_or("none");
    if let Experiment::Ablation = experiment {
        return Ok(ablation.to_string());
    }
    let mode = serde_json::to_value(bundle.mode)?;
    Ok(format!("{}/{ablation}", mode.as_str().unwrap_or("model")))
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    config: &RunConfig,
    hash: &str,
    models: &[String],
    data: &Path,
    experiment: Experiment,
    part: Part,
    out: &Path,
) -> Result<Value> {
    let mut arms = Vec::new();
    for spec in models {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (Some(n.to_string()), PathBuf::from(p)),
            None => (None, PathBuf::from(spec)),
        };
        let bundle = ModelBundle::from_checkpoint(&Checkpoint::load(&path)?)?;
        let name = match name {
            Some(n) => n,
            None => arm_name(&bundle, experiment)?,
        };
        arms.push((name, bundle));
    }
    let dataset = load_data(data, config)?;
    let s = split(dataset.len(), config.split, config.seed)?;
    let indices = match part {
        Part::Train => s.train,
        Part::Val => s.val,
        Part::Test => s.test,
        Part::All => (0..dataset.len()).collect(),
    };
    let categories = &dataset.categories;
    let (result, table, samples) = match experiment {
        Experiment::Main | Experiment::Ablation => {
            let windows = windows_of(&dataset, &indices, config, 0)?;
            let named: Vec<(String, &ModelBundle)> = arms.iter().map(|(n, b)| (n.clone(), b)).collect();
            let reports = run_main_eval(&named, &windows, categories)?;
            let table = arms_table(&reports);
            (serde_json::to_value(&reports)?, table, windows.len())
        }
        Experiment::Growing | Experiment::Future => {
            let [(name, bundle)] = arms.as_slice() else {
                bail!(CliError("invalid_argument", format!("{experiment:?} evaluation takes exactly one model")));
            };
            let sequences = dataset.subset(&indices).sequences;
            if let Experiment::Growing = experiment {
                let curve = run_growing_window(bundle, &sequences, config.window, &config.prefixes(), categories)?;
                let mut table = format!("{name}\nprefix  accuracy  macro_f1\n");
                for p in &curve {
                    table.push_str(&format!("{:>6}  {:>8.4}  {:>8.4}\n", p.prefix, p.accuracy, p.report.macro_f1));
                }
                (serde_json::to_value(&curve)?, table, sequences.len())
            } else {
                let sweep = run_future_sweep(bundle, &sequences, config.window, config.stride, &config.future_offsets, categories)?;
                let mut table = format!("{name}\noffset  samples  macro_f1\n");
                for p in &sweep {
                    table.push_str(&format!("{:>6}  {:>7}  {:>8.4}\n", p.offset, p.report.samples, p.report.macro_f1));
                }
                (serde_json::to_value(&sweep)?, table, sequences.len())
            }
        }
    };
    create_dir(out)?;
    let report = json!({
        "config_hash": hash,
        "experiment": experiment,
        "split": part,
        "samples": samples,
        "models": arms.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        "result": result,
    });
    write_json(&out.join("report.json"), &report)?;
    fs::write(out.join("report.txt"), &table)?;
    eprint!("{table}");
    Ok(json!({
        "command": "eval",
        "experiment": experiment,
        "samples": samples,
        "report": out.join("report.json"),
    }))
}

fn cmd_gradcheck(config: &RunConfig, hash: &str, eps: f64, tolerance: f64, out: Option<&Path>) -> Result<Value> {
    let checks = gradient_checks(config, eps)?;
    for c in &checks {
        log("gradcheck", serde_json::to_value(c)?);
    }
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !(c.max_relative_error < tolerance))
        .map(|c| c.loss.as_str())
        .collect();
    let report = json!({"config_hash": hash, "eps": eps, "tolerance": tolerance, "checks": checks});
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    if !failed.is_empty() {
        bail!(CliError("gradcheck", format!("relative error above {tolerance} for {}", failed.join(", "))));
    }
    Ok(json!({"command": "gradcheck", "checks": checks}))
}

fn cmd_config_init(config: &RunConfig, out: Option<&Path>) -> Result<Value> {
    match out {
        Some(path) => write_json(path, config)?,
        None => eprintln!("{}", serde_json::to_string_pretty(config)?),
    }
    Ok(json!({"command": "config init", "out": out}))
}
