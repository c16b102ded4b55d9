//! `ldwb`: command-line entry point of the grounded-dialogue workbench.
//!
//! Exit codes: 0 on success, 1 on data errors, 2 on usage or configuration
//! errors.

mod config;
mod evaluate;
mod humaneval;
mod pipeline;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ldwb_core::Representation;

use config::WorkbenchConfig;
use evaluate::AttribKind;
use workspace::{Failure, Outcome, Workspace};

#[derive(Debug, Parser)]
#[command(name = "ldwb", version, about = "Knowledge-grounded response generation workbench for longitudinal dialogues")]
struct Cli {
    /// Workbench configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the corpus and write a canonical copy with a summary.
    Ingest,
    /// Split dialogues into train/valid/test id lists.
    Split,
    /// Check that every first-session user turn has a parse and no parse is orphaned.
    ParseCheck,
    /// Build one knowledge representation for every dialogue.
    Represent {
        #[arg(long, value_enum)]
        repr: Option<ReprArg>,
    },
    /// Assemble model input sequences for every split.
    Assemble {
        /// History window; defaults to the configured window.
        #[arg(long, conflicts_with = "profile")]
        window: Option<usize>,
        /// Take the window of a configured model profile.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long, value_enum)]
        repr: Option<ReprArg>,
    },
    /// Draw the nested training subsets for the learning curve.
    Subsets,
    /// Automatic evaluation of runner outputs.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Attribution analysis of runner outputs.
    #[command(subcommand)]
    Attrib(AttribCommand),
    /// Human-evaluation campaign.
    #[command(subcommand)]
    Campaign(CampaignCommand),
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Per-model perplexity from scoring records.
    Ppl {
        #[arg(long, required = true, num_args = 1..)]
        scoring: Vec<PathBuf>,
    },
    /// BLEU-4 similarity matrix among models and the ground truth.
    Bleu {
        #[arg(long, required = true, num_args = 1..)]
        generations: Vec<PathBuf>,
    },
    /// Perplexity series over the training-subset fractions.
    Curve {
        /// Scoring records of models trained on a subset, as FRACTION=FILE.
        #[arg(long = "point", required = true, value_parser = parse_point)]
        points: Vec<(f64, PathBuf)>,
    },
}

#[derive(Debug, clap::Args)]
struct AttribArgs {
    /// Input-sequence files, paired in order with --attributions.
    #[arg(long, required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    attributions: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum AttribCommand {
    /// Share of positively contributing knowledge tokens.
    Positive(AttribArgs),
    /// Knowledge vs history shares among the most significant tokens.
    Significant(AttribArgs),
}

#[derive(Debug, Subcommand)]
enum CampaignCommand {
    /// Build the campaign from test samples and plan worker assignments.
    Plan {
        #[arg(long, required = true, num_args = 1..)]
        generations: Vec<PathBuf>,
    },
    /// Run the judgment collection service.
    Serve {
        /// Overrides the configured bind address.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Aggregate the journal into majority, agreement and error reports.
    Report,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReprArg {
    None,
    Raw,
    Boh,
    Psg,
}

impl From<ReprArg> for Representation {
    fn from(r: ReprArg) -> Self {
        match r {
            ReprArg::None => Representation::None,
            ReprArg::Raw => Representation::Raw,
            ReprArg::Boh => Representation::HeadNouns,
            ReprArg::Psg => Representation::LinearGraph,
        }
    }
}

fn parse_point(s: &str) -> Result<(f64, PathBuf), String> {
    let (fraction, file) = s.split_once('=').ok_or("expected FRACTION=FILE")?;
    let fraction: f64 = fraction.parse().map_err(|e| format!("fraction `{fraction}`: {e}"))?;
    if file.is_empty() {
        return Err("empty file name".into());
    }
    Ok((fraction, file.into()))
}

fn run(cli: Cli) -> Outcome {
    let config = WorkbenchConfig::load(cli.config.as_deref(), |k| std::env::var(k).ok()).map_err(Failure::Usage)?;
    let ws = Workspace::new(&config.paths.output);
    let repr = |r: Option<ReprArg>| r.map(Representation::from).unwrap_or(config.knowledge.repr);
    match cli.command {
        Command::Ingest => pipeline::ingest(&config, &ws),
        Command::Split => pipeline::split(&config, &ws),
        Command::ParseCheck => pipeline::parse_check(&config, &ws),
        Command::Represent { repr: r } => pipeline::represent(&config, &ws, repr(r)),
        Command::Assemble { window, profile, repr: r } => {
            let w = match window {
                Some(w) => w,
                None => config.window(profile.as_deref()).map_err(Failure::Usage)?,
            };
            pipeline::assemble(&config, &ws, repr(r), w)
        }
        Command::Subsets => pipeline::subsets(&config, &ws),
        Command::Eval(EvalCommand::Ppl { scoring }) => evaluate::ppl(&config, &ws, &scoring),
        Command::Eval(EvalCommand::Bleu { generations }) => evaluate::bleu(&config, &ws, &generations),
        Command::Eval(EvalCommand::Curve { points }) => evaluate::curve(&config, &ws, &points),
        Command::Attrib(AttribCommand::Positive(a)) => {
            evaluate::attrib(&config, &ws, AttribKind::Positive, &a.inputs, &a.attributions)
        }
        Command::Attrib(AttribCommand::Significant(a)) => {
            evaluate::attrib(&config, &ws, AttribKind::Significant, &a.inputs, &a.attributions)
        }
        Command::Campaign(CampaignCommand::Plan { generations }) => humaneval::plan(&config, &ws, &generations),
        Command::Campaign(CampaignCommand::Serve { bind }) => humaneval::serve(&config, &ws, bind.as_deref()),
        Command::Campaign(CampaignCommand::Report) => humaneval::report(&config, &ws),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            if matches!(failure, Failure::Usage(_)) {
                eprintln!("\nRun `ldwb --help` for usage.");
            }
            ExitCode::from(failure.exit_code())
        }
    }
}
