use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use delirium_pipeline::{
    artifacts, logging, run_stage, Context, PipelineConfig, PipelineError, Stage,
};
use log::error;

#[derive(Parser)]
#[command(
    name = "pipeline",
    version,
    about = "Delirium prediction pipeline over ICU records"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Use the full epoch budgets instead of the configured ones.
    #[arg(long)]
    full_epochs: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with planted signal.
    Synth(Common),
    /// Validate inputs, label stays, select the cohort and split patients.
    Cohort(Common),
    /// Render text reports and build the vocabulary.
    Report(Common),
    /// Masked-language-model pretraining search.
    Pretrain(Common),
    /// Classification fine-tuning search.
    Finetune(Common),
    /// Train the statistical-feature baseline.
    Baseline(Common),
    /// Score the validation partition and bootstrap AUROC.
    Evaluate(Common),
    /// Section-level Shapley attribution.
    Explain(Common),
    /// Run every stage in order.
    All(Common),
}

impl Command {
    fn split(self) -> (Stage, Common) {
        match self {
            Command::Synth(c) => (Stage::Synth, c),
            Command::Cohort(c) => (Stage::Cohort, c),
            Command::Report(c) => (Stage::Report, c),
            Command::Pretrain(c) => (Stage::Pretrain, c),
            Command::Finetune(c) => (Stage::Finetune, c),
            Command::Baseline(c) => (Stage::Baseline, c),
            Command::Evaluate(c) => (Stage::Evaluate, c),
            Command::Explain(c) => (Stage::Explain, c),
            Command::All(c) => (Stage::All, c),
        }
    }
}

fn run(stage: Stage, common: Common) -> Result<(), PipelineError> {
    let mut attached = false;
    let result = run_attached(stage, common, &mut attached);
    if let Err(e) = &result {
        error!("{e}");
    }
    if attached {
        logging::detach_run_log();
    }
    result
}

fn run_attached(stage: Stage, common: Common, attached: &mut bool) -> Result<(), PipelineError> {
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(PipelineError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    let mut cfg = PipelineConfig::load(&common.config)?;
    if common.full_epochs {
        cfg.use_full_epochs();
    }
    let ctx = Context::new(cfg)?;
    logging::attach_run_log(&ctx.path(artifacts::RUN_LOG))?;
    *attached = true;
    run_stage(&ctx, stage)
}

fn main() -> ExitCode {
    logging::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let (stage, common) = cli.command.split();
    match run(stage, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(e.exit_code() as u8),
    }
}
