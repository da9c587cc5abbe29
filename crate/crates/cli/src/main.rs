use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use forge_cli::config::ForgeConfig;
use forge_cli::error::{CliError, CliResult, Exit};
use forge_cli::evaluate::{headline, EvalKind};
use forge_cli::store::CORPUS_DIR;
use forge_cli::{cmd_build, cmd_eval, cmd_ingest, cmd_validate};
use forge_core::convbuilder::TemplateCatalog;
use forge_core::trajgrammar::ParseMode;

#[derive(Parser)]
#[command(name = "forge", version, about = "Build and score trajectory-grounded video conversation corpora")]
struct Cli {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Reject any grammar deviation when parsing answers.
    #[arg(long, global = true, conflicts_with = "lenient")]
    strict: bool,
    /// Recover what can be parsed from malformed answers.
    #[arg(long, global = true)]
    lenient: bool,
    /// Output directory, overriding `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert configured sources into the canonical store.
    Ingest,
    /// Sample clips and build the conversation corpus.
    Build,
    /// Re-check every record of a corpus.
    Validate {
        /// Corpus directory or shard; defaults to `<out>/corpus`.
        path: Option<PathBuf>,
    },
    /// Score a prediction file.
    Eval {
        #[arg(long, value_enum)]
        kind: EvalKind,
        #[arg(long)]
        pred: PathBuf,
        /// Ground truth (sot only).
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Report path; defaults to `report.json` next to the predictions.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

impl Cli {
    fn mode(&self, default: ParseMode) -> ParseMode {
        if self.strict {
            ParseMode::Strict
        } else if self.lenient {
            ParseMode::Lenient
        } else {
            default
        }
    }

    fn config(&self) -> CliResult<ForgeConfig> {
        let path = self.config.as_deref().ok_or_else(|| CliError::input("--config is required for this command"))?;
        ForgeConfig::load(path)
    }

    fn out_dir(&self, cfg: Option<&ForgeConfig>) -> PathBuf {
        self.out.clone().or_else(|| cfg.map(|c| c.output.directory.clone())).unwrap_or_else(|| PathBuf::from("forge-out"))
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Ingest => {
            let cfg = cli.config()?;
            let out = cli.out_dir(Some(&cfg));
            let m = cmd_ingest(&cfg, &out)?;
            for (stage, shard) in m.stages.iter().zip(&m.shards) {
                println!("{}: {} rows, {} kept -> {}", stage.name, stage.attempted, stage.emitted, shard.path);
            }
        }
        Command::Build => {
            let cfg = cli.config()?;
            let out = cli.out_dir(Some(&cfg));
            let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let summary = cmd_build(&cfg, &out, cli.seed, workers)?;
            for (task, n) in &summary.manifest.task_counts {
                println!("{task}: {n}");
            }
            println!("{} records in {} shard(s) under {}", summary.records.len(), summary.manifest.shards.len(), out.join(CORPUS_DIR).display());
        }
        Command::Validate { path } => {
            let cfg = cli.config.as_ref().map(|_| cli.config()).transpose()?;
            let catalog = match &cfg {
                Some(c) => c.builder.catalog()?,
                None => TemplateCatalog::builtin(),
            };
            let path = path.clone().unwrap_or_else(|| cli.out_dir(cfg.as_ref()).join(CORPUS_DIR));
            let report = cmd_validate(&path, &catalog, cli.mode(ParseMode::Strict))?;
            for v in &report.violations {
                eprintln!("record {} ({}:{}): {}", v.record, v.file, v.line, v.message);
            }
            if report.records == 0 {
                return Err(CliError::validation(format!("{}: empty corpus", path.display())));
            }
            if !report.ok() {
                return Err(CliError::validation(format!("{} of {} records invalid", report.violations.len(), report.records)));
            }
            println!("{} records valid", report.records);
        }
        Command::Eval { kind, pred, gt, report } => {
            let cfg = cli.config.as_ref().map(|_| cli.config()).transpose()?;
            let gt = gt.clone().or_else(|| cfg.as_ref().and_then(|c| c.eval.ground_truth.clone()));
            let result = cmd_eval(*kind, pred, gt.as_deref(), cli.mode(ParseMode::Lenient))?;
            let path = report.clone().unwrap_or_else(|| pred.parent().unwrap_or(Path::new(".")).join("report.json"));
            let text = serde_json::to_string_pretty(&result).expect("report serializes");
            std::fs::write(&path, text + "\n").map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            for w in &result.report.warnings {
                eprintln!("warning: {w}");
            }
            if !result.diagnostics.is_empty() {
                eprintln!("warning: {} response diagnostics, see {}", result.diagnostics.len(), path.display());
            }
            for line in headline(&result) {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => Exit::Ok.into(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit.into()
        }
    }
}
