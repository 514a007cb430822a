//! The `pscf-lab` command line.

use std::fs::{self, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::embeddings::EmbeddingKind;
use crate::error::{Error, Result};
use crate::experiments::{
    curves_csv, evaluate, generate_profiles, participation_csv, report_json, retrain_participation,
    run_grid, summary_csv, train_with_data, write_text, Dataset, ExperimentReport, GridConfig,
    TrainConfig,
};
use crate::nn::{load_model, save_model, MlpModel};
use crate::preservation::{
    search_counterexample, table_mark, verify_reference_pairs, PreservationViolation, TableMark,
};
use crate::profiles::{read_profiles, write_profiles};
use crate::rules::RuleId;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "PSCF_LAB_THREADS";

const PATH_KEYS: [&str; 3] = ["output_dir", "checkpoint", "dataset"];
const DEFAULT_OUTPUT_DIR: &str = "pscf-out";
const LOG_FILE: &str = "run.log";

#[derive(Debug, Parser)]
#[command(name = "pscf-lab", version, about = "Probabilistic social choice functions: rules, embeddings, preservation and learned rules")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write impartial-culture profiles to a file.
    Gen {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on fresh profiles.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        participation: bool,
    },
    /// Retrain a checkpoint with the rule + participation loss.
    Retrain {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
    },
    /// Search for preservation counterexamples.
    Preserve {
        #[arg(long, required_unless_present_any = ["verify_paper", "all"])]
        rule: Option<RuleId>,
        #[arg(long, required_unless_present_any = ["verify_paper", "all"])]
        embedding: Option<EmbeddingKind>,
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Profiles to examine; the search is exhaustive when the space fits.
        #[arg(long, default_value_t = 1_000_000)]
        budget: u64,
        /// Check every built-in reference counterexample pair.
        #[arg(long, conflicts_with = "all")]
        verify_paper: bool,
        /// Search every rule and embedding at this size.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a rules x embeddings grid.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

/// A training config document plus the paths it names, resolved to absolute paths.
#[derive(Clone, Debug, PartialEq)]
pub struct CliConfig {
    pub train: TrainConfig,
    pub output_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
}

struct SplitDocument {
    fields: Map<String, Value>,
    output_dir: PathBuf,
    checkpoint: Option<PathBuf>,
    dataset: Option<PathBuf>,
}

fn resolve(path: &str) -> Result<PathBuf> {
    if path.is_empty() {
        return Err(Error::Config("empty path".into()));
    }
    Ok(std::path::absolute(path)?)
}

fn split_document(text: &str) -> Result<SplitDocument> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
    let Value::Object(mut fields) = value else {
        return Err(Error::Config("config must be a JSON object".into()));
    };
    let mut paths = Vec::new();
    for key in PATH_KEYS {
        let path = match fields.remove(key) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(resolve(&s)?),
            Some(other) => return Err(Error::Config(format!("`{key}` must be a string, got {other}"))),
        };
        paths.push(path);
    }
    let dataset = paths.pop().flatten();
    let checkpoint = paths.pop().flatten();
    let output_dir = match paths.pop().flatten() {
        Some(p) => p,
        None => resolve(DEFAULT_OUTPUT_DIR)?,
    };
    Ok(SplitDocument {
        fields,
        output_dir,
        checkpoint,
        dataset,
    })
}

impl CliConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc = split_document(text)?;
        Ok(CliConfig {
            train: TrainConfig::from_value(Value::Object(doc.fields))?,
            output_dir: doc.output_dir,
            checkpoint: doc.checkpoint,
            dataset: doc.dataset,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_config(path)?)
    }
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn stem(report: &ExperimentReport) -> String {
    format!("{}_{}", report.config.rule.name(), report.config.embedding.label())
}

fn log_run(dir: &Path, what: &str, report: &ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut log = OpenOptions::new().create(true).append(true).open(dir.join(LOG_FILE))?;
    writeln!(log, "{what} {} wall_clock_secs={:.3}", stem(report), report.wall_clock_secs)?;
    Ok(())
}

/// Writes curves, checkpoint and report as `<dir>/<rule>_<embedding><suffix>.*`.
fn write_run(dir: &Path, suffix: &str, report: &mut ExperimentReport, model: &MlpModel) -> Result<()> {
    let base = format!("{}{suffix}", stem(report));
    let checkpoint = dir.join(format!("{base}.checkpoint.json"));
    save_model(&checkpoint, model, report.checkpoint_meta())?;
    report.checkpoint = Some(checkpoint.display().to_string());
    write_text(&dir.join(format!("{base}.curves.csv")), &curves_csv(report))?;
    write_text(&dir.join(format!("{base}.report.json")), &report_json(report)?)?;
    Ok(())
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_dataset(path: &Path, config: &TrainConfig) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    let (m, profiles) = read_profiles(BufReader::new(file))?;
    if m != config.m {
        return Err(Error::Config(format!("dataset has m={m}, config has m={}", config.m)));
    }
    if let Some(p) = profiles.iter().find(|p| p.num_voters() != config.n_train) {
        return Err(Error::Config(format!(
            "dataset profile with {} voters, config has n_train={}",
            p.num_voters(),
            config.n_train
        )));
    }
    Dataset::from_profiles(config.rule, config.embedding, m, profiles)
}

#[derive(Serialize)]
struct SearchReport<'a> {
    rule: RuleId,
    embedding: EmbeddingKind,
    m: usize,
    n: usize,
    table_mark: TableMark,
    exhaustive: bool,
    profiles_examined: u64,
    verdict: &'static str,
    violation: Option<&'a PreservationViolation>,
}

fn search_report(rule: RuleId, emb: EmbeddingKind, m: usize, n: usize, budget: u64) -> Result<Value> {
    let outcome = search_counterexample(rule, emb, m, n, budget)?;
    let verdict = match (&outcome.violation, outcome.exhaustive) {
        (Some(_), _) => "violation",
        (None, true) => "no violation at this size",
        (None, false) => "no violation in sample",
    };
    Ok(serde_json::to_value(SearchReport {
        rule,
        embedding: emb,
        m,
        n,
        table_mark: table_mark(rule, emb),
        exhaustive: outcome.exhaustive,
        profiles_examined: outcome.profiles_examined,
        verdict,
        violation: outcome.violation.as_ref(),
    })?)
}

#[derive(Serialize)]
struct EvalOutput {
    rule: RuleId,
    embedding: EmbeddingKind,
    m: usize,
    n: usize,
    count: usize,
    seed: u64,
    rule_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    participation_loss: Option<f64>,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Gen { m, n, count, seed, out: path } => {
            let profiles = generate_profiles(m, n, count as usize, seed)?;
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let mut file = BufWriter::new(fs::File::create(&path)?);
            write_profiles(&mut file, m, &profiles)?;
            file.flush()?;
        }
        Command::Train { config } => {
            let config = CliConfig::load(&config)?;
            let data = match &config.dataset {
                Some(path) => Some(load_dataset(path, &config.train)?),
                None => None,
            };
            let (mut report, model) = train_with_data(&config.train, data)?;
            write_run(&config.output_dir, "", &mut report, &model)?;
            log_run(&config.output_dir, "train", &report)?;
            print_json(out, &report.final_test)?;
        }
        Command::Eval { checkpoint, n, count, seed, participation } => {
            let (model, meta) = load_model(&checkpoint)?;
            let metrics = evaluate(&model, meta.rule, meta.embedding, meta.m, n, count, seed, participation)?;
            print_json(
                out,
                &EvalOutput {
                    rule: meta.rule,
                    embedding: meta.embedding,
                    m: meta.m,
                    n,
                    count,
                    seed,
                    rule_loss: metrics.rule_loss,
                    participation_loss: metrics.participation_loss,
                },
            )?;
        }
        Command::Retrain { checkpoint, config } => {
            let doc = split_document(&read_config(&config)?)?;
            let path = checkpoint
                .map(std::path::absolute)
                .transpose()?
                .or(doc.checkpoint)
                .ok_or_else(|| Error::Config("no checkpoint given (flag or `checkpoint` key)".into()))?;
            let (model, meta) = load_model(&path)?;
            // Retraining defaults, then the checkpoint's identity, then the document.
            let mut base = TrainConfig::retraining(meta.rule, meta.embedding);
            base.m = meta.m;
            let Value::Object(mut fields) = serde_json::to_value(base)? else {
                return Err(Error::Internal("config did not serialize to an object".into()));
            };
            fields.extend(doc.fields);
            let train_config = TrainConfig::from_value(Value::Object(fields))?;
            let (mut report, model) = retrain_participation(model, &meta, &train_config)?;
            write_run(&doc.output_dir, ".retrain", &mut report, &model)?;
            write_text(
                &doc.output_dir.join(format!("{}.retrain.participation.csv", stem(&report))),
                &participation_csv(std::slice::from_ref(&report)),
            )?;
            log_run(&doc.output_dir, "retrain", &report)?;
            print_json(out, &report.final_test)?;
        }
        Command::Preserve { rule, embedding, m, n, budget, verify_paper, all, out: path } => {
            let value = if verify_paper {
                serde_json::json!({ "verdicts": verify_reference_pairs()? })
            } else if all {
                let mut results = Vec::new();
                for r in RuleId::ALL {
                    for e in EmbeddingKind::ALL {
                        results.push(search_report(r, e, m, n, budget)?);
                    }
                }
                serde_json::json!({ "m": m, "n": n, "results": results })
            } else {
                let (Some(r), Some(e)) = (rule, embedding) else {
                    return Err(Error::Config("--rule and --embedding are required".into()));
                };
                search_report(r, e, m, n, budget)?
            };
            if let Some(path) = path {
                write_text(&path, &(serde_json::to_string_pretty(&value)? + "\n"))?;
            }
            print_json(out, &value)?;
        }
        Command::Grid { config, jobs } => {
            let doc = split_document(&read_config(&config)?)?;
            if doc.checkpoint.is_some() || doc.dataset.is_some() {
                return Err(Error::Config("grid configs take only `output_dir` as a path".into()));
            }
            let grid: GridConfig = serde_json::from_value(Value::Object(doc.fields))
                .map_err(|e| Error::Config(e.to_string()))?;
            let runs = run_grid(&grid, jobs)?;
            let mut reports = Vec::with_capacity(runs.len());
            for (mut report, model) in runs {
                write_run(&doc.output_dir, "", &mut report, &model)?;
                log_run(&doc.output_dir, "grid", &report)?;
                reports.push(report);
            }
            let summary = summary_csv(&reports);
            write_text(&doc.output_dir.join("summary.csv"), &summary)?;
            if reports.iter().any(|r| r.final_test.participation_loss.is_some()) {
                write_text(&doc.output_dir.join("participation.csv"), &participation_csv(&reports))?;
            }
            out.write_all(summary.as_bytes())?;
        }
    }
    Ok(())
}

/// Caps the global worker pool from [`THREADS_ENV`] when set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot configure threads: {e}")))
}

/// Single-line error message for the process exit path.
pub fn error_line(category: &str, message: &str) -> String {
    let flat: Vec<&str> = message.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    format!("error: {category}: {}", flat.join("; "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn paths_are_split_and_resolved() {
        let c = CliConfig::from_json(
            r#"{"rule": "borda", "embedding": "T_RF", "m": 3, "output_dir": "runs/a", "dataset": "d.txt"}"#,
        )
        .unwrap();
        assert!(c.output_dir.is_absolute() && c.output_dir.ends_with("runs/a"));
        assert!(c.dataset.unwrap().ends_with("d.txt"));
        assert_eq!(c.checkpoint, None);
        assert_eq!(c.train.m, 3);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = CliConfig::from_json(r#"{"rule": "borda", "embedding": "T_RF", "outdir": "x"}"#).unwrap_err();
        assert_eq!(err.category(), "config");
        assert!(err.to_string().contains("outdir"));
    }

    #[test]
    fn error_lines_are_single_line() {
        assert_eq!(error_line("config", "a\n  b\n"), "error: config: a; b");
    }
}
