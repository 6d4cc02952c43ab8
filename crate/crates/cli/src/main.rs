use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sfatnet::config::RunConfig;
use sfatnet::corpus::{generate_synthetic_corpus, load_spec};
use sfatnet::pipeline::{run_annotate, run_eval, run_explain, run_infer, run_train};
use sfatnet::{ExitStatus, Result};
use sfatnet_core::explain::VoicingSource;
use sfatnet_core::metrics::{format_table, TagKey};

/// Speech deepfake detection with a formant- and voicing-aware transformer.
#[derive(Debug, Parser)]
#[command(name = "sfatnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum By {
    Codec,
    Dataset,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Source {
    Model,
    Truth,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute or refresh cached f0, formant and voicing annotations.
    Annotate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        /// Run config; only its [annotation] table is used.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every manifest entry and report EER and AUC.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        /// Break the metrics down by tag.
        #[arg(long, value_enum)]
        by: Option<By>,
        /// Attach annotated voicing from this cache to each score record.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Voiced versus unvoiced attention reliance at the EER threshold.
    Explain {
        #[arg(long)]
        scores: PathBuf,
        /// Output path; a .csv extension writes the per-group table only.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "model")]
        source: Source,
    },
    /// Score a single WAV file.
    Infer {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Write a deterministic synthetic corpus and its manifest.
    SynthCorpus {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes")
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Annotate { manifest, cache, config } => {
            let cfg = config.map(|p| RunConfig::load(&p)).transpose()?.unwrap_or_default();
            let s = run_annotate(&manifest, &cache, &cfg)?;
            println!("computed {}  reused {}  skipped {}", s.computed, s.reused, s.skipped.len());
            for sk in &s.skipped {
                println!("skipped {}: {}", sk.utt_id, sk.reason);
            }
        }
        Command::Train {
            manifest,
            cache,
            config,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            println!("{}", to_json(&run_train(&manifest, &cache, &cfg, &out)?));
        }
        Command::Eval {
            manifest,
            ckpt,
            scores,
            by,
            cache,
        } => {
            let key = match by {
                Some(By::Codec) => TagKey::Codec,
                _ => TagKey::Dataset,
            };
            let s = run_eval(&manifest, &ckpt, &scores, key, cache.as_deref())?;
            let rows = if by.is_some() { &s.rows[..] } else { &s.rows[s.rows.len() - 1..] };
            print!("{}", format_table(rows));
        }
        Command::Explain { scores, report, source } => {
            let source = match source {
                Source::Model => VoicingSource::Model,
                Source::Truth => VoicingSource::Truth,
            };
            let rep = run_explain(&scores, &report, source)?;
            println!("threshold {:.6}", rep.threshold);
            for g in &rep.groups {
                let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v));
                println!(
                    "{} {:?}: n={} voiced {}% unvoiced {}%",
                    g.dataset_tag,
                    g.label,
                    g.n_utterances,
                    pct(g.voiced_share),
                    pct(g.unvoiced_share)
                );
            }
        }
        Command::Infer { wav, ckpt } => println!("{}", to_json(&run_infer(&wav, &ckpt)?)),
        Command::SynthCorpus { spec, out } => {
            let m = generate_synthetic_corpus(&load_spec(&spec)?, &out)?;
            println!("wrote {} utterances to {}", m.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { ExitStatus::Usage as u8 } else { ExitStatus::Success as u8 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_status() as u8)
        }
    }
}
