use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use roleswitch::dialogue::DialogueEngine;
use roleswitch::gateway::ProviderKind;
use roleswitch::instruments::{bundled, score_response, Instrument, ResponseSet, SubscaleScores};
use roleswitch::persona::Scenario;
use roleswitch::study::{cohort_pre_post, ParticipantId, StudyStore};
use roleswitch::validation::{
    fidelity_summary, run_self_assessment, write_trials_csv, SelfAssessmentConfig, ValidationRun,
    DEFAULT_PASS_THRESHOLD,
};
use roleswitch_service::{AppState, ServiceConfig};

use crate::config::{env_or, FileConfig};
use crate::{AnalyzeArgs, AssignArgs, InitArgs, ScoreArgs, ServeArgs, UsageError, ValidateArgs};

pub const DEFAULT_STORE: &str = "study-data";

pub fn load_scenario(flag: Option<&Path>, file: &FileConfig) -> anyhow::Result<Scenario> {
    match flag.or(file.scenario.as_deref()) {
        Some(dir) => Scenario::load_dir(dir).with_context(|| format!("loading scenario {}", dir.display())),
        None => Ok(Scenario::bundled_default()),
    }
}

/// A bundled instrument id, or a path to an instrument file.
pub fn load_instrument(spec: &str) -> anyhow::Result<Instrument> {
    let path = Path::new(spec);
    if path.is_file() {
        return Instrument::from_file(path).with_context(|| format!("loading instrument {spec}"));
    }
    bundled::by_id(spec).map_err(|e| UsageError(e.to_string()).into())
}

fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

pub fn validate_avatars(file: &FileConfig, args: ValidateArgs) -> anyhow::Result<ExitCode> {
    let scenario = load_scenario(args.scenario.as_deref(), file)?;
    let provider = file.provider(args.provider.as_deref())?;
    let instrument = load_instrument(
        args.instrument
            .as_deref()
            .or(file.validation.instrument.as_deref())
            .unwrap_or("neo-ffi-30"),
    )?;
    let n_trials = env_or(
        "ROLESWITCH_TRIALS",
        args.trials.map(|t| t as usize).or(file.validation.trials),
    )?
    .unwrap_or(100);
    if n_trials == 0 {
        return Err(UsageError("trials must be at least 1".into()).into());
    }
    let threshold = env_or("ROLESWITCH_THRESHOLD", args.threshold.or(file.validation.threshold))?
        .unwrap_or(DEFAULT_PASS_THRESHOLD);
    let mut parallelism = env_or(
        "ROLESWITCH_PARALLEL",
        args.parallel.map(|p| p as usize).or(file.validation.parallel),
    )?
    .unwrap_or(1)
    .max(1);
    if provider.kind == ProviderKind::Scripted && parallelism > 1 {
        eprintln!("note: scripted provider replays in order; running trials sequentially");
        parallelism = 1;
    }
    let gateway = provider.connect()?;
    let config = SelfAssessmentConfig {
        n_trials,
        parallelism,
        ..SelfAssessmentConfig::default()
    };

    let mut reports = Vec::new();
    let mut trials = Vec::new();
    for persona in &scenario.roles {
        eprintln!("assessing {} ({n_trials} trials)", persona.display_name);
        let run = run_self_assessment(persona, &instrument, &gateway, &config)
            .with_context(|| format!("self-assessment of {}", persona.display_name))?;
        reports.push(run.report);
        trials.push((persona.role_id.clone(), run.trials));
    }
    let summary = fidelity_summary(&reports, threshold)?;
    let run = ValidationRun {
        instrument_id: instrument.instrument_id.clone(),
        threshold,
        reports,
        summary,
    };
    write_atomic(&args.out, &serde_json::to_string_pretty(&run)?)?;
    if let Some(path) = &args.trials_csv {
        let out = File::create(path).with_context(|| format!("writing {}", path.display()))?;
        write_trials_csv(BufWriter::new(out), &instrument, &trials)?;
    }
    print!("{}", run.summary.render_table());
    Ok(if run.summary.all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ResponsesFile {
    One(ResponseSet),
    Many(Vec<ResponseSet>),
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    respondent_id: &'a str,
    scores: SubscaleScores,
}

pub fn score(args: ScoreArgs) -> anyhow::Result<ExitCode> {
    let instrument = load_instrument(&args.instrument)?;
    let text = std::fs::read_to_string(&args.responses)
        .with_context(|| format!("reading {}", args.responses.display()))?;
    let responses = match serde_json::from_str(&text).context("parsing responses")? {
        ResponsesFile::One(r) => vec![r],
        ResponsesFile::Many(v) => v,
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for r in &responses {
        let scores = score_response(&instrument, r).with_context(|| format!("respondent {}", r.respondent_id))?;
        writeln!(
            out,
            "{}",
            serde_json::to_string(&ScoreLine {
                respondent_id: &r.respondent_id,
                scores
            })?
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn store_dir(flag: Option<PathBuf>, file: &FileConfig) -> anyhow::Result<PathBuf> {
    Ok(env_or("ROLESWITCH_STORE", flag.or_else(|| file.store.clone()))?
        .unwrap_or_else(|| PathBuf::from(DEFAULT_STORE)))
}

pub fn assign(file: &FileConfig, args: AssignArgs) -> anyhow::Result<ExitCode> {
    let scenario = load_scenario(args.scenario.as_deref(), file)?;
    let pid = ParticipantId::new(args.participant.as_str()).map_err(|e| UsageError(e.to_string()))?;
    let store = StudyStore::open(store_dir(args.store, file)?)?;
    let record = store.assign_participant(&pid, &scenario.role_ids())?;
    println!("{}", serde_json::to_string(&record)?);
    Ok(ExitCode::SUCCESS)
}

pub fn analyze(args: AnalyzeArgs) -> anyhow::Result<ExitCode> {
    let instrument = load_instrument(&args.instrument)?;
    if instrument.subscale(&args.subscale).is_none() {
        return Err(UsageError(format!(
            "unknown subscale {:?} for {}",
            args.subscale, instrument.instrument_id
        ))
        .into());
    }
    if !args.cohort.is_dir() {
        bail!("cohort directory {} does not exist", args.cohort.display());
    }
    let store = StudyStore::open(&args.cohort)?;
    let analysis = cohort_pre_post(&store.participants()?, &instrument, &args.subscale)?;
    for pid in &analysis.excluded {
        eprintln!("excluded {pid}: missing pre-training or final post response");
    }
    if let Some(path) = &args.csv {
        let out = File::create(path).with_context(|| format!("writing {}", path.display()))?;
        analysis.write_csv(BufWriter::new(out))?;
    }
    println!("{}", analysis.summary_line());
    Ok(ExitCode::SUCCESS)
}

pub fn serve(file: &FileConfig, args: ServeArgs) -> anyhow::Result<ExitCode> {
    let scenario = load_scenario(args.scenario.as_deref(), file)?;
    let gateway = file.provider(args.provider.as_deref())?.connect()?;
    let store = StudyStore::open(store_dir(args.store, file)?)?;
    let bind = env_or("ROLESWITCH_BIND", args.bind.or_else(|| file.serve.bind.clone()))?
        .unwrap_or_else(|| "127.0.0.1".into());
    let port = env_or("ROLESWITCH_PORT", args.port.or(file.serve.port))?.unwrap_or(8080);
    let addr: SocketAddr = format!("{bind}:{port}")
        .parse()
        .map_err(|_| UsageError(format!("bad bind address {bind}:{port}")))?;
    let reports_path = args
        .reports
        .or_else(|| file.serve.reports.clone())
        .unwrap_or_else(|| store.root().join("validation.json"));
    let mut cors_origins = file.serve.cors_origins.clone();
    cors_origins.extend(args.cors_origins);
    let config = ServiceConfig {
        engine: DialogueEngine::new(Arc::new(scenario), gateway),
        store: Arc::new(store),
        instruments: bundled::all(),
        reports_path,
        auth_token: env_or("ROLESWITCH_TOKEN", args.token.or_else(|| file.serve.token.clone()))?,
        cors_origins,
    };
    let state = AppState::load(config)?;
    eprintln!("listening on http://{addr} ({} session(s) restored)", state.session_count());
    tokio::runtime::Runtime::new()?.block_on(roleswitch_service::serve(addr, state))?;
    Ok(ExitCode::SUCCESS)
}

pub fn init_scenario(args: InitArgs) -> anyhow::Result<ExitCode> {
    Scenario::write_default(&args.out)?;
    println!("{}", args.out.display());
    Ok(ExitCode::SUCCESS)
}
