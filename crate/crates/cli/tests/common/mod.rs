#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output, Stdio};

use roleswitch::instruments::Instrument;

pub fn roleswitch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roleswitch"))
        .args(args)
        .env_remove("ROLESWITCH_PROVIDER")
        .stdin(Stdio::null())
        .output()
        .expect("binary runs")
}

pub fn roleswitch_with_stdin(args: &[&str], stdin: &str) -> Output {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_roleswitch"))
        .args(args)
        .env_remove("ROLESWITCH_PROVIDER")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Raw item answers, in instrument order, whose trait sums equal `scores`
/// (O, C, E, A, N).
pub fn answers_for(instrument: &Instrument, scores: [u32; 5]) -> Vec<i32> {
    let keys = ["openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism"];
    let mut remaining: std::collections::HashMap<&str, (i32, usize)> = keys
        .iter()
        .zip(scores)
        .map(|(k, s)| (*k, (s as i32, instrument.items_of(k).count())))
        .collect();
    instrument
        .items
        .iter()
        .map(|item| {
            let (left, items_left) = remaining.get_mut(item.subscale_id.as_str()).expect("trait item");
            let keyed = (*left + *items_left as i32 - 1) / *items_left as i32;
            let keyed = keyed.min(instrument.scale.max);
            *left -= keyed;
            *items_left -= 1;
            instrument.raw_answer_for(item, keyed)
        })
        .collect()
}

/// A scripted-provider file answering `trials` administrations per role.
pub fn write_inventory_script(path: &Path, instrument: &Instrument, per_role: &[[u32; 5]], trials: usize) {
    let mut lines = String::new();
    for scores in per_role {
        let answers = answers_for(instrument, *scores);
        for _ in 0..trials {
            for a in &answers {
                lines.push_str(&format!("\"{a}\"\n"));
            }
        }
    }
    std::fs::write(path, lines).unwrap();
}

pub fn avatar_reply(name: &str, text: &str) -> String {
    serde_json::to_string(&format!(
        r#"{{"speaker":"{name}","text":"{text}","gesture":"nod","emotion":"thoughtful"}}"#
    ))
    .unwrap()
}
