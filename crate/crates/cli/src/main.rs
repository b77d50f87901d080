//! `roleswitch`: avatar validation, headless sessions, questionnaire scoring,
//! study administration and the HTTP service.

mod commands;
mod config;
mod session;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "roleswitch", version, about)]
struct Cli {
    /// TOML configuration file; flags override it, ROLESWITCH_* variables override flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Self-assess every avatar with the personality inventory and report fidelity.
    ValidateAvatars(ValidateArgs),
    /// Run one headless role-play session and write its transcript.
    RunSession(SessionArgs),
    /// Score questionnaire responses.
    Score(ScoreArgs),
    /// Enroll a participant and print the assigned role order.
    Assign(AssignArgs),
    /// Paired pre/post test over a study cohort.
    Analyze(AnalyzeArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Write the bundled scenario files into a directory for editing.
    InitScenario(InitArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// scripted:FILE or http:URL
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: Option<u64>,
    /// Minimum per-trial cosine mean for an avatar to pass.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallel: Option<u64>,
    /// Bundled instrument id or instrument file.
    #[arg(long)]
    pub instrument: Option<String>,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-trial CSV.
    #[arg(long)]
    pub trials_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Role the human plays (id or display name).
    #[arg(long)]
    pub role: String,
    #[arg(long)]
    pub provider: Option<String>,
    /// Read user lines from standard input.
    #[arg(long, conflicts_with = "script", required_unless_present = "script")]
    pub interactive: bool,
    /// File of user utterances, one per line.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Transcript file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "session")]
    pub session_id: String,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Bundled instrument id or instrument file.
    #[arg(long)]
    pub instrument: String,
    /// JSON file holding one response set or a list of them.
    #[arg(long)]
    pub responses: PathBuf,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub participant: String,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Study store directory.
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long, default_value = "iri")]
    pub instrument: String,
    #[arg(long)]
    pub subscale: String,
    /// Optional per-participant CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Validation report served at /reports/validation.
    #[arg(long)]
    pub reports: Option<PathBuf>,
    /// Require `Authorization: Bearer TOKEN`.
    #[arg(long)]
    pub token: Option<String>,
    #[arg(long = "cors-origin")]
    pub cors_origins: Vec<String>,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub out: PathBuf,
}

/// Bad invocation that clap could not catch; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::ValidateAvatars(a) => commands::validate_avatars(&file, a),
        Command::RunSession(a) => session::run_session(&file, a),
        Command::Score(a) => commands::score(a),
        Command::Assign(a) => commands::assign(&file, a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Serve(a) => commands::serve(&file, a),
        Command::InitScenario(a) => commands::init_scenario(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
