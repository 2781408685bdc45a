use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use hallubench::harness::{render_text, Protocol};
use hallubench::orchestrator::{
    cmd_analyze, cmd_evaluate, cmd_generate, cmd_stats, AnalyzeOptions, Completion, EvaluateOptions,
    GenerateOptions, OrchestratorError, StatsFormat,
};

#[derive(Parser)]
#[command(name = "hallubench", version, about = "Hallucinated QA benchmark synthesis and detector evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Binary,
    Ternary,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate hallucinated answers for a QA corpus.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Evaluate a detector on a generated benchmark.
    Evaluate {
        #[arg(long)]
        benchmark: PathBuf,
        /// Source corpus the benchmark was generated from.
        #[arg(long)]
        corpus: PathBuf,
        /// Provider roster (JSON array).
        #[arg(long)]
        providers: PathBuf,
        #[arg(long)]
        detector: String,
        #[arg(long, value_enum, default_value = "binary")]
        protocol: ProtocolArg,
        #[arg(long, value_enum, default_value = "off")]
        knowledge: Toggle,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Cluster candidate pools and test fooled-vs-not-fooled separation.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "responses", required_unless_present = "responses")]
        benchmark: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Raw responses JSONL instead of a benchmark.
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long)]
        pool_size: Option<usize>,
        /// Fill short pools with fresh generator samples.
        #[arg(long)]
        top_up: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Difficulty by category histogram of a benchmark.
    Stats {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
    },
}

fn run(cli: Cli) -> Result<Completion, OrchestratorError> {
    match cli.command {
        Command::Generate { config, input, out, seed, workers } => {
            let (summary, completion) = cmd_generate(&GenerateOptions { config, input, out, seed, workers })?;
            println!(
                "{} records from {} items ({} fallback, {} item errors, {} corpus errors)",
                summary.records,
                summary.items,
                summary.fallback_used,
                summary.item_errors.len(),
                summary.corpus_errors.len()
            );
            Ok(completion)
        }
        Command::Evaluate { benchmark, corpus, providers, detector, protocol, knowledge, seed, workers, out } => {
            let opts = EvaluateOptions {
                benchmark,
                corpus,
                providers,
                detector,
                protocol: match protocol {
                    ProtocolArg::Binary => Protocol::Binary,
                    ProtocolArg::Ternary => Protocol::Ternary,
                },
                knowledge_shown: matches!(knowledge, Toggle::On),
                seed,
                workers,
                out,
            };
            let (output, completion) = cmd_evaluate(&opts)?;
            print!("{}", render_text(&output.report));
            if let Some(a) = &output.abstention {
                println!(
                    "not-sure run: F1 {:.3}  P {:.3}  response {:.3}",
                    a.f1_ns, a.p_ns, a.response_rate
                );
                if let (Some(f1), Some(p)) = (a.f1_r, a.p_r) {
                    println!("forced run:   F1 {f1:.3}  P {p:.3}");
                }
            }
            Ok(completion)
        }
        Command::Analyze { config, benchmark, corpus, responses, pool_size, top_up, out, seed, workers } => {
            let output = cmd_analyze(&AnalyzeOptions {
                config,
                benchmark,
                corpus,
                responses,
                out,
                pool_size,
                top_up,
                seed,
                workers,
            })?;
            println!(
                "{} items analyzed; pure cluster fraction {:.3}; ground truth isolated in {:.3} of items",
                output.items.len(),
                output.pure_fraction,
                output.ground_truth_isolated_fraction
            );
            Ok(Completion::Clean)
        }
        Command::Stats { benchmark, format } => {
            let format = match format {
                FormatArg::Text => StatsFormat::Text,
                FormatArg::Csv => StatsFormat::Csv,
                FormatArg::Json => StatsFormat::Json,
            };
            print!("{}", cmd_stats(&benchmark, format)?);
            Ok(Completion::Clean)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(Completion::Clean) => ExitCode::SUCCESS,
        Ok(Completion::WithErrors(n)) => {
            eprintln!("{}", serde_json::json!({"status": "completed_with_errors", "errors": n}));
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::from(1)
        }
    }
}
