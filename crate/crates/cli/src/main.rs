use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xbnet_cli::benchmark::{cmd_benchmark, Suite};
use xbnet_cli::commands::{
    cmd_eval, cmd_importance, cmd_train, ImportanceSource, ImportanceTable, Options, ABSENT_NOTICE,
};
use xbnet_cli::error::exit;
use xbnet_cli::report::Clock;
use xbnet_cli::{CliError, Result, RunSpec};

#[derive(Parser)]
#[command(
    name = "xbnet",
    version,
    about = "Train, evaluate and benchmark boosted neural networks on tabular data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Run spec (train, importance) or suite file (benchmark).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Zero all timestamps and timings so reports are reproducible.
    #[arg(long, global = true)]
    fixed_clock: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a run spec.
    Train {
        /// Overrides the epoch count in the config file.
        #[arg(long)]
        epochs: Option<usize>,
        /// Print per-epoch losses to stderr.
        #[arg(long)]
        progress: bool,
    },
    /// Score a saved model on a labelled CSV file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Dump feature and layer importances from a model, or train one from --config first.
    Importance {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run a benchmark suite.
    Benchmark,
}

fn require_config(common: &Common) -> Result<PathBuf> {
    common
        .config
        .clone()
        .ok_or_else(|| CliError::Invalid("--config is required".into()))
}

fn load_spec(common: &Common) -> Result<RunSpec> {
    let mut spec = RunSpec::load(&require_config(common)?)?;
    if let Some(seed) = common.seed {
        spec.train.seed = seed;
    }
    Ok(spec)
}

fn execute(cli: Cli) -> Result<i32> {
    let common = &cli.common;
    let mut opts = Options {
        out_dir: common.out_dir.clone(),
        clock: Clock {
            fixed: common.fixed_clock,
        },
        progress: false,
    };
    match cli.command {
        Command::Train { epochs, progress } => {
            let mut spec = load_spec(common)?;
            if let Some(e) = epochs {
                spec.train.epochs = e;
            }
            opts.progress = progress;
            let result = cmd_train(&spec, &opts)?;
            let r = &result.report;
            println!(
                "trained={} train_accuracy={:.4} test_accuracy={:.4} test_log_loss={:.4}{}",
                r.trained,
                r.train.accuracy,
                r.test.accuracy,
                r.test.log_loss,
                r.test
                    .auc
                    .map_or_else(String::new, |a| format!(" test_auc={a:.4}")),
            );
            Ok(exit::OK)
        }
        Command::Eval { model, data } => {
            let report = cmd_eval(&model, &data, &opts)?;
            print!("{}", report.evaluation.report.to_text(&report.class_names));
            println!("log_loss {:.6}", report.evaluation.log_loss);
            if let Some(auc) = report.evaluation.auc {
                println!("auc {auc:.6}");
            }
            Ok(exit::OK)
        }
        Command::Importance { model } => {
            let spec;
            let source = match model {
                Some(ref path) => ImportanceSource::Artifact(path),
                None => {
                    spec = load_spec(common)?;
                    ImportanceSource::Spec(&spec)
                }
            };
            match cmd_importance(source, &opts)? {
                ImportanceTable::Absent => println!("{ABSENT_NOTICE}"),
                table => print!("{}", table.to_csv()),
            }
            Ok(exit::OK)
        }
        Command::Benchmark => {
            let path = require_config(common)?;
            let mut suite = Suite::load(&path)?;
            if let Some(seed) = common.seed {
                suite.train.seed = seed;
            }
            let out = common
                .out_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("benchmark-out"));
            let report = cmd_benchmark(&suite, &out, opts.clock)?;
            print!("{}", report.to_csv());
            for c in report.failed_checks() {
                eprintln!(
                    "FAIL {}: {} vs {} bound {}",
                    c.name,
                    c.value
                        .map_or_else(|| "missing".to_string(), |v| format!("{v:.4}")),
                    c.kind,
                    c.bound
                );
            }
            Ok(if report.passed {
                exit::OK
            } else {
                exit::VALIDATION
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
