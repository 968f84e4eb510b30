use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use batchqa::corpus::{compute_token_stats, load_corpus, WhitespaceCounter};
use batchqa::dataset_builder::{export_eval_manifest, export_training_set};
use batchqa::error::Error;
use batchqa::grouping::SamplerConfig;
use batchqa::metrics::AccuracyMode;
use batchqa::parser::ParseMode;
use batchqa::runner::{rescore, run_sweep, write_reports_csv, RunConfig};

#[derive(Parser)]
#[command(name = "batchqa", about = "Batch conversational QA harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CorpusArgs {
    #[arg(long)]
    transcripts: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    references: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Token-count percentiles over a transcript corpus
    Stats {
        #[arg(long)]
        transcripts: PathBuf,
    },
    /// Run a group-size sweep across configured backends
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute reports from an existing run archive
    Rescore {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, value_parser = parse_mode, default_value = "strict")]
        parse_mode: ParseMode,
        #[arg(long, value_parser = accuracy_mode, default_value = "exclude")]
        accuracy_mode: AccuracyMode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a fine-tuning training file (prompt/completion JSONL)
    ExportTrain {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        #[arg(long, default_value_t = 5)]
        k_min: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export an evaluation manifest for one or more group sizes
    ExportEval {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<ParseMode, String> {
    match s {
        "strict" => Ok(ParseMode::Strict),
        "lenient" => Ok(ParseMode::Lenient),
        other => Err(format!("unknown parse mode {other:?} (strict|lenient)")),
    }
}

fn accuracy_mode(s: &str) -> Result<AccuracyMode, String> {
    match s {
        "exclude" => Ok(AccuracyMode::ExcludeDecodeFailures),
        "wrong" => Ok(AccuracyMode::CountAsWrong),
        other => Err(format!("unknown accuracy mode {other:?} (exclude|wrong)")),
    }
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Config(_) | Error::Auth(_) => 2,
        Error::MalformedRecord { .. }
        | Error::DanglingReference(_)
        | Error::NonContiguousIndices { .. }
        | Error::EmptyCorpus
        | Error::InsufficientQuestions { .. } => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> batchqa::Result<()> {
    match cli.command {
        Command::Stats { transcripts } => {
            // questions/references are not needed for stats; reuse the loader
            // on the transcripts file alone.
            let records = {
                use batchqa::corpus::{Corpus, Transcript};
                let text = std::fs::read_to_string(&transcripts)?;
                let mut parsed: Vec<Transcript> = Vec::new();
                for (lineno, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    parsed.push(serde_json::from_str(line).map_err(|e| {
                        Error::MalformedRecord {
                            path: transcripts.display().to_string(),
                            line: lineno + 1,
                            reason: e.to_string(),
                        }
                    })?);
                }
                Corpus::new(parsed, Vec::new(), Vec::new())?
            };
            let stats = compute_token_stats(&records, &WhitespaceCounter)?;
            println!("transcripts: {}", stats.token_counts.len());
            println!("Percentile  # of Tokens");
            for (p, tokens) in &stats.percentiles {
                println!("{p:>9}%  {tokens}");
            }
        }
        Command::Sweep { config } => {
            let config = RunConfig::from_toml(&config)?;
            let reports = run_sweep(&config)?;
            for r in &reports {
                println!(
                    "{} N={}: acc={:.4} f1={:.4} mae={:.4} decode_err={:.4}",
                    r.model_name,
                    r.group_size,
                    r.judgment_accuracy,
                    r.navigation_f1,
                    r.navigation_mae,
                    r.json_decode_error_rate
                );
            }
            println!("report written to {}", config.output_dir.join("report.csv").display());
        }
        Command::Rescore {
            archive,
            parse_mode,
            accuracy_mode,
            out,
        } => {
            let reports = rescore(&archive, parse_mode, accuracy_mode)?;
            for r in &reports {
                println!(
                    "{} N={}: acc={:.4} f1={:.4} mae={:.4} decode_err={:.4}",
                    r.model_name,
                    r.group_size,
                    r.judgment_accuracy,
                    r.navigation_f1,
                    r.navigation_mae,
                    r.json_decode_error_rate
                );
            }
            if let Some(out) = out {
                write_reports_csv(&out, &reports)?;
            }
        }
        Command::ExportTrain {
            corpus,
            n_max,
            k_min,
            seed,
            out,
        } => {
            let corpus = load_corpus(&corpus.transcripts, &corpus.questions, &corpus.references)?;
            let config = SamplerConfig { seed, k_min, n_max };
            let manifest = export_training_set(&corpus, &config, &out)?;
            println!("{}", serde_json::to_string_pretty(&manifest).unwrap());
        }
        Command::ExportEval {
            corpus,
            n_list,
            seed,
            out,
        } => {
            let corpus = load_corpus(&corpus.transcripts, &corpus.questions, &corpus.references)?;
            let entries = export_eval_manifest(&corpus, &n_list, seed, &out)?;
            let questions: usize = entries.iter().map(|e| e.question_ids.len()).sum();
            println!("wrote {} entries ({questions} question entries) to {}", entries.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
