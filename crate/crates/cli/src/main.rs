//! `valuegate`: batch pipelines over score files, one command per process.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use valuegate::dataset::Format;
use valuegate::metrics::ZeroDivision;
use valuegate::{Error, HoMapping, Result};

use crate::commands::{Ctx, Outcome};
use crate::config::RunConfig;
use crate::manifest::Recorder;

const DEFAULT_SEED: u64 = 42;

#[derive(Parser, Debug)]
#[command(
    name = "valuegate",
    version,
    about = "Decision layer for sentence-level human value detection"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Output format, `tsv` or `jsonl`.
    #[arg(long, global = true)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Precision/recall value for a zero denominator, `zero` or `one`.
    #[arg(long, global = true)]
    zero_division: Option<ZeroDivision>,
    /// Value-to-category membership TSV replacing the built-in mapping.
    #[arg(long, global = true)]
    mapping: Option<PathBuf>,
    /// Print results, and errors on standard error, as JSON.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Binarize gold annotations and derive HO and Presence labels.
    Derive(commands::DeriveArgs),
    /// Tune per-label thresholds on validation scores.
    Calibrate(commands::CalibrateArgs),
    /// Threshold a score file.
    Apply(commands::ApplyArgs),
    /// Run a gated Presence -> category -> values cascade.
    Cascade(commands::CascadeArgs),
    /// Forward-select a voting ensemble from a model pool.
    Ensemble(commands::EnsembleArgs),
    /// Score predictions against gold.
    Evaluate(commands::EvaluateArgs),
    /// Paired bootstrap and per-label McNemar comparison of two systems.
    Compare(commands::CompareArgs),
    /// Parse LLM generations into value and HO predictions.
    ParseLlm(commands::ParseLlmArgs),
    /// Generate a synthetic dataset and the error-compounding report.
    Synth(commands::SynthArgs),
    /// Per-split label prevalence of gold annotations.
    Prevalence(commands::PrevalenceArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Derive(_) => "derive",
            Command::Calibrate(_) => "calibrate",
            Command::Apply(_) => "apply",
            Command::Cascade(_) => "cascade",
            Command::Ensemble(_) => "ensemble",
            Command::Evaluate(_) => "evaluate",
            Command::Compare(_) => "compare",
            Command::ParseLlm(_) => "parse-llm",
            Command::Synth(_) => "synth",
            Command::Prevalence(_) => "prevalence",
        }
    }
}

fn context(g: &GlobalArgs, rec: Recorder) -> Result<Ctx> {
    let cfg = match &g.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    let mapping_path = g.mapping.clone().or_else(|| cfg.mapping.clone());
    let mapping = match &mapping_path {
        Some(p) => HoMapping::from_tsv_path(p)?,
        None => HoMapping::builtin(),
    };
    let seed_explicit = g.seed.is_some() || cfg.seed.is_some();
    let mut ctx = Ctx {
        out_dir: g
            .out_dir
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
        format: g.format.or(cfg.format).unwrap_or_default(),
        seed: g.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
        seed_explicit,
        zd: g.zero_division.or(cfg.zero_division).unwrap_or_default(),
        mapping,
        rec,
        effective: serde_json::Map::new(),
        cfg,
    };
    if let Some(p) = &g.config {
        ctx.rec.input(p);
    }
    if let Some(p) = &mapping_path {
        ctx.rec.input(p);
    }
    let globals = json!({
        "format": ctx.format,
        "seed": ctx.seed,
        "zero_division": ctx.zd,
        "mapping_version": ctx.mapping.version(),
    });
    if let serde_json::Value::Object(m) = globals {
        ctx.effective.extend(m);
    }
    Ok(ctx)
}

fn run(cli: &Cli) -> Result<Outcome> {
    let mut ctx = context(&cli.global, Recorder::default())?;
    let outcome = match &cli.command {
        Command::Derive(a) => commands::derive(&mut ctx, a),
        Command::Calibrate(a) => commands::calibrate(&mut ctx, a),
        Command::Apply(a) => commands::apply(&mut ctx, a),
        Command::Cascade(a) => commands::cascade(&mut ctx, a),
        Command::Ensemble(a) => commands::ensemble(&mut ctx, a),
        Command::Evaluate(a) => commands::evaluate(&mut ctx, a),
        Command::Compare(a) => commands::compare(&mut ctx, a),
        Command::ParseLlm(a) => commands::parse_llm(&mut ctx, a),
        Command::Synth(a) => commands::synth(&mut ctx, a),
        Command::Prevalence(a) => commands::prevalence(&mut ctx, a),
    }?;
    let args: Vec<String> = std::env::args().skip(1).collect();
    ctx.rec.finish(
        &ctx.out_dir,
        cli.command.name(),
        args,
        ctx.seed,
        serde_json::Value::Object(ctx.effective),
    )?;
    Ok(outcome)
}

fn report_error(e: &Error, json: bool) {
    if json {
        let body = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
        eprintln!("{body}");
    } else {
        eprintln!("error: {e}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if cli.global.json {
                println!("{}", outcome.json);
            } else {
                println!("{}", outcome.text.trim_end());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            report_error(&e, cli.global.json);
            ExitCode::FAILURE
        }
    }
}
