//! Argument parsing and dispatch for the `fingerlab` binary.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use fingerlab_service::{CorpusStore, JobKind, JobRegistry, JobState, CORPUS_ENV};

#[derive(Debug, Parser)]
#[command(name = "fingerlab", version, about = "Fingering annotation pipeline and review service")]
pub struct Cli {
    /// Corpus directory.
    #[arg(long, global = true, env = CORPUS_ENV, default_value = "corpus")]
    pub corpus_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with injected corruptions.
    Synth(JobArgs),
    /// Write rule tracks and initialize edited tracks.
    Annotate(JobArgs),
    /// Review edited tracks against the synthetic ground truth.
    OracleReview(JobArgs),
    /// Train the probe on R1-reviewed pieces.
    Train(JobArgs),
    /// Run the probe and the gate, writing probe tracks.
    Infer(JobArgs),
    /// Score probe tracks against edited tracks.
    Eval(JobArgs),
    /// Flag counts and metrics over the gate threshold set.
    Sweep(JobArgs),
    /// Report probe outputs older than a completed review stage.
    Audit(JobArgs),
    /// Serve the REST API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct JobArgs {
    /// Job parameters as a JSON object.
    #[arg(long, conflicts_with = "params_file")]
    pub params: Option<String>,
    /// File holding the job parameters as JSON.
    #[arg(long)]
    pub params_file: Option<PathBuf>,
}

impl JobArgs {
    pub fn value(&self) -> Result<Value> {
        let text = match (&self.params, &self.params_file) {
            (Some(s), _) => s.clone(),
            (None, Some(p)) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            (None, None) => return Ok(Value::Null),
        };
        serde_json::from_str(&text).context("job parameters are not valid JSON")
    }
}

impl Command {
    pub fn job(&self) -> Option<(JobKind, &JobArgs)> {
        let kind = match self {
            Command::Synth(a) => (JobKind::Synth, a),
            Command::Annotate(a) => (JobKind::Annotate, a),
            Command::OracleReview(a) => (JobKind::OracleReview, a),
            Command::Train(a) => (JobKind::Train, a),
            Command::Infer(a) => (JobKind::Infer, a),
            Command::Eval(a) => (JobKind::Eval, a),
            Command::Sweep(a) => (JobKind::Sweep, a),
            Command::Audit(a) => (JobKind::Audit, a),
            Command::Serve { .. } => return None,
        };
        Some(kind)
    }
}

/// Runs the command. Job records go to stdout; returns false when a job failed.
pub fn run(cli: Cli) -> Result<bool> {
    let store = CorpusStore::open(&cli.corpus_dir)
        .with_context(|| format!("opening corpus {}", cli.corpus_dir.display()))?;
    match cli.command.job() {
        Some((kind, args)) => {
            let params = args.value()?;
            let jobs = JobRegistry::new(Arc::new(store));
            let record = jobs.run(kind, params);
            println!("{}", serde_json::to_string_pretty(&record)?);
            Ok(record.state == JobState::Succeeded)
        }
        None => {
            let Command::Serve { port, host } = cli.command else { unreachable!() };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(fingerlab_service::serve(store, &host, port))?;
            Ok(true)
        }
    }
}
