use std::io::{BufRead, Write};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;

use roleswitch::dialogue::{DialogueEngine, DialogueError, DialogueTurn, TranscriptWriter};
use roleswitch::study::{now_ms, SessionId, SessionState};

use crate::commands::load_scenario;
use crate::config::FileConfig;
use crate::{SessionArgs, UsageError};

struct Runner {
    engine: DialogueEngine,
    session: SessionState,
    writer: TranscriptWriter,
}

impl Runner {
    fn name(&self, turn: &DialogueTurn) -> String {
        self.engine
            .role_set()
            .display_name(&turn.speaker)
            .unwrap_or(turn.speaker.as_str())
            .to_string()
    }

    fn say(&mut self, text: &str) -> Result<(), DialogueError> {
        self.engine.accept_user_turn(&mut self.session, text)?;
        self.writer.sync(&self.session)
    }

    /// Generates the pending round; the transcript is synced either way.
    fn round(&mut self) -> Result<Vec<DialogueTurn>, DialogueError> {
        let result = self.engine.generate_round(&mut self.session, |_| {});
        self.writer.sync(&self.session)?;
        result
    }
}

pub fn run_session(file: &FileConfig, args: SessionArgs) -> anyhow::Result<ExitCode> {
    let scenario = load_scenario(args.scenario.as_deref(), file)?;
    let role = scenario
        .resolve_role(&args.role)
        .map(|c| c.role_id.clone())
        .ok_or_else(|| {
            UsageError(format!(
                "unknown role {:?} (expected one of {})",
                args.role,
                scenario
                    .role_ids()
                    .iter()
                    .map(|r| r.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })?;
    let gateway = file.provider(args.provider.as_deref())?.connect()?;
    let engine = DialogueEngine::new(Arc::new(scenario), gateway);
    let session = engine.new_session(SessionId::new(args.session_id.as_str()), None, 1, role)?;
    let writer = TranscriptWriter::create(&args.out, &session)?;
    let mut runner = Runner {
        engine,
        session,
        writer,
    };
    match &args.script {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            scripted(&mut runner, text.lines())
        }
        None => interactive(&mut runner),
    }
}

/// Replays user lines with a logical clock of 0, so equal inputs give
/// byte-identical transcripts.
fn scripted<'a>(runner: &mut Runner, lines: impl Iterator<Item = &'a str>) -> anyhow::Result<ExitCode> {
    runner.session.start(0)?;
    runner.writer.sync(&runner.session)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in lines.map(str::trim).filter(|l| !l.is_empty()) {
        runner.say(line)?;
        writeln!(out, "{}", serde_json::to_string(runner.session.history.last().expect("user turn"))?)?;
        let turns = runner
            .round()
            .with_context(|| format!("transcript kept in {}", runner.writer.path().display()))?;
        for t in &turns {
            writeln!(out, "{}", serde_json::to_string(t)?)?;
        }
    }
    runner.session.end(0)?;
    runner.writer.sync(&runner.session)?;
    Ok(ExitCode::SUCCESS)
}

fn interactive(runner: &mut Runner) -> anyhow::Result<ExitCode> {
    runner.session.start(now_ms())?;
    runner.writer.sync(&runner.session)?;
    let me = runner.session.user_role.clone();
    eprintln!(
        "You are {}. Type a line and press Enter; an empty line ends the session.",
        runner.engine.role_set().display_name(&me).unwrap_or(me.as_str())
    );
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        if runner.session.pending {
            eprint!("[retry generation with Enter, or type /quit] ");
        } else {
            eprint!("> ");
        }
        let Some(line) = lines.next().transpose()? else { break };
        let line = line.trim();
        if line == "/quit" || (line.is_empty() && !runner.session.pending) {
            break;
        }
        if !runner.session.pending {
            runner.say(line)?;
        } else if !line.is_empty() {
            eprintln!("the last round is still pending; press Enter to retry it");
            continue;
        }
        match runner.round() {
            Ok(turns) => {
                for t in &turns {
                    println!("{} [{}, {}]: {}", runner.name(t), t.emotion, t.gesture, t.text);
                }
            }
            Err(e) if e.is_generation_failure() => eprintln!("generation failed: {e}"),
            Err(e) => return Err(e.into()),
        }
    }
    runner.session.end(now_ms())?;
    runner.writer.sync(&runner.session)?;
    eprintln!("transcript written to {}", runner.writer.path().display());
    Ok(ExitCode::SUCCESS)
}
