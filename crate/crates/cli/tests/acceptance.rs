//! One `[PASS]`/`[FAIL]` line per acceptance criterion. Runs offline with
//! scripted providers only. Exits non-zero if any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use roleswitch::dialogue::{
    extract_objects, parse_turn, read_transcript, replay_transcript, OutputSchema, Repair, RoleSet, Utterance,
};
use roleswitch::instruments::{bundled, score_response, Instrument, ResponseSet};
use roleswitch::persona::{RoleId, Scenario};
use roleswitch::stats::{cosine_similarity, cronbach_alpha, paired_t, student_t_two_tailed};
use roleswitch::study::{latin_square_orders, StudyStore};
use roleswitch::validation::{aggregate_trials, fidelity_summary, DEFAULT_PASS_THRESHOLD};

// Tolerances.
const PER_TRIAL_COSINE: f64 = 0.997;
const PER_TRIAL_COSINE_TOL: f64 = 0.005;
const MEAN_VECTOR_COSINE: f64 = 0.998;
const MEAN_VECTOR_COSINE_TOL: f64 = 0.001;
const FIDELITY_RUNTIME: Duration = Duration::from_secs(5);
const T_TOL: f64 = 0.02;
const P_TOL: f64 = 0.001;
const D_TOL: f64 = 0.005;
const ANALYZE_RUNTIME: Duration = Duration::from_secs(1);
const IDENTITY_TOL: f64 = 1e-9;
const PARSER_CASES: usize = 10_000;
const T_TAIL_REFERENCE: f64 = 0.00705;
const T_TAIL_TOL: f64 = 1e-3;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fidelity_math() -> Outcome {
    let started = Instant::now();
    let set = support::alice_trial_set(7);
    let report = aggregate_trials(
        RoleId::new("alice"),
        "Alice",
        support::ALICE_TARGET,
        support::N_TRIALS,
        &set.trials,
        0,
    )
    .map_err(|e| e.to_string())?;
    let mut row = Vec::new();
    for (k, &(m, sd)) in support::ALICE_ROW.iter().enumerate() {
        let got = (
            format!("{:.2}", report.trait_distribution.mean[k]),
            format!("{:.2}", report.trait_distribution.sd[k]),
        );
        ensure!(got == (format!("{m:.2}"), format!("{sd:.2}")), "trait {k}: {got:?} vs {m}±{sd}");
        row.push(format!("{}±{}", got.0, got.1));
    }
    let c = report.cosine_per_trial_mean;
    ensure!((c - PER_TRIAL_COSINE).abs() <= PER_TRIAL_COSINE_TOL, "per-trial cosine mean {c:.4}");
    let elapsed = started.elapsed();
    ensure!(elapsed < FIDELITY_RUNTIME, "took {elapsed:?}");
    Ok(format!(
        "M±SD {} | per-trial cosine {c:.4} | half-point grid for trait(s) {:?} | {elapsed:.0?}",
        row.join(", "),
        set.half_grid_traits
    ))
}

fn cosine_oracle() -> Outcome {
    let means: Vec<f64> = support::ALICE_ROW.iter().map(|r| r.0).collect();
    let lib = cosine_similarity(&means, &support::ALICE_TARGET).map_err(|e| e.to_string())?;
    let oracle = support::oracle_cosine(&means, &support::ALICE_TARGET);
    ensure!((lib - oracle).abs() < 1e-12, "library {lib} vs oracle {oracle}");
    ensure!((lib - MEAN_VECTOR_COSINE).abs() <= MEAN_VECTOR_COSINE_TOL, "cosine {lib}");

    let scenario = Scenario::bundled_default();
    let mut reports = Vec::new();
    for (id, reported) in [("benji", 0.862), ("caden", 0.950)] {
        let card = scenario.role(&RoleId::new(id)).unwrap();
        let target = card.profile.trait_vector();
        let mut r = aggregate_trials(card.role_id.clone(), &card.display_name, target, 2, &[target, target], 0)
            .map_err(|e| e.to_string())?;
        r.cosine_per_trial_mean = reported;
        reports.push(r);
    }
    let summary = fidelity_summary(&reports, DEFAULT_PASS_THRESHOLD).map_err(|e| e.to_string())?;
    ensure!(summary.all_pass, "threshold {DEFAULT_PASS_THRESHOLD}: {:?}", summary.rows);
    Ok(format!(
        "cos(mean, target) = {lib:.6} | Benji 0.862, Caden 0.950 pass at threshold {DEFAULT_PASS_THRESHOLD}"
    ))
}

fn analyze(dir: &std::path::Path, subscale: &str) -> Result<(std::collections::HashMap<String, String>, Duration), String> {
    let started = Instant::now();
    let o = common::roleswitch(&["analyze", "--cohort", dir.to_str().unwrap(), "--instrument", "iri", "--subscale", subscale]);
    let elapsed = started.elapsed();
    ensure!(o.status.success(), "analyze {subscale}: {}", common::stderr(&o));
    let line = common::stdout(&o);
    ensure!(line.contains(" df=21 "), "{line}");
    Ok((support::parse_summary_line(&line), elapsed))
}

fn field(m: &std::collections::HashMap<String, String>, k: &str) -> f64 {
    m[k].parse().unwrap()
}

fn study_two() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = StudyStore::open(dir.path()).map_err(|e| e.to_string())?;
    for rec in support::iri_cohort(2) {
        store.save_participant(&rec).map_err(|e| e.to_string())?;
    }
    let (pt, pt_time) = analyze(dir.path(), "pt")?;
    let (fs, fs_time) = analyze(dir.path(), "fs")?;
    let (t, p, d) = (field(&pt, "t"), field(&pt, "p"), field(&pt, "d"));
    ensure!((t - 2.98).abs() <= T_TOL && (p - 0.007).abs() <= P_TOL && (d - 0.64).abs() <= D_TOL, "PT t={t} p={p} d={d}");
    let (ft, fp, fd) = (field(&fs, "t"), field(&fs, "p"), field(&fs, "d"));
    ensure!((ft - 4.04).abs() <= T_TOL && fp < 0.001 && (fd - 0.86).abs() <= D_TOL, "FS t={ft} p={fp} d={fd}");
    ensure!(pt["excluded"] == "2" && pt["n"] == "22", "n={} excluded={}", pt["n"], pt["excluded"]);
    ensure!(pt_time < ANALYZE_RUNTIME && fs_time < ANALYZE_RUNTIME, "runtime {pt_time:?}/{fs_time:?}");
    Ok(format!(
        "PT t={t:.3} p={p:.5} d={d:.3} mean_diff={} | FS t={ft:.3} p={fp:.5} d={fd:.3} | n=22, 2 excluded",
        pt["mean_diff"]
    ))
}

fn paired_identity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..60);
        let pre: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        let post: Vec<f64> = pre.iter().map(|x| x + rng.random_range(-1.5..2.0)).collect();
        let r = paired_t(&pre, &post).map_err(|e| e.to_string())?;
        worst = worst.max((r.cohen_d * (n as f64).sqrt() - r.t).abs());
    }
    ensure!(worst < IDENTITY_TOL, "max |d·√n − t| = {worst:e}");
    Ok(format!("1000 samples, max |d·√n − t| = {worst:.1e}"))
}

fn parser_suite() -> Outcome {
    let scenario = Scenario::bundled_default();
    let vocab = &scenario.vocabulary;
    let roles = RoleSet::from_cards(&scenario.roles);
    let mut rng = StdRng::seed_from_u64(3);
    let alphabet: Vec<char> = "abcXYZ 0123,.!?'\"\\{}[]:\n\té漢😀".chars().collect();
    for i in 0..PARSER_CASES {
        let card = &scenario.roles[rng.random_range(0..scenario.roles.len())];
        let len = rng.random_range(1..40);
        let mut text: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        if text.trim().is_empty() {
            text.push('x');
        }
        let u = Utterance {
            speaker: card.role_id.clone(),
            text,
            gesture: vocab.gestures()[rng.random_range(0..vocab.gestures().len())].clone(),
            emotion: vocab.emotions()[rng.random_range(0..vocab.emotions().len())].clone(),
        };
        let raw = OutputSchema.encode(&u, &card.display_name);
        let parsed = parse_turn(&raw, vocab, &roles).map_err(|e| format!("case {i}: {e} for {raw}"))?;
        ensure!(parsed.utterance == u && parsed.repairs.is_empty(), "case {i}: round trip changed {raw}");
    }

    let r = parse_turn(
        r#"{"speaker":"Alice","text":"  keep  me ","gesture":"moonwalk","emotion":"ecstatic"}"#,
        vocab,
        &roles,
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        r.utterance.gesture == "idle" && r.utterance.emotion == "neutral" && r.utterance.text == "  keep  me ",
        "repair produced {:?}",
        r.utterance
    );
    ensure!(
        r.repairs == vec![Repair::Gesture("moonwalk".into()), Repair::Emotion("ecstatic".into())],
        "repairs {:?}",
        r.repairs
    );
    ensure!(
        parse_turn(r#"{"speaker":"Dana","text":"hi","gesture":"nod","emotion":"happy"}"#, vocab, &roles).is_err(),
        "illegal speaker accepted"
    );
    let prose = "Sure! Here is my reply: {\"speaker\":\"Caden\",\"text\":\"ok\",\"gesture\":\"shrug\",\"emotion\":\"happy\"} Hope that helps.";
    let fenced = "Thinking {not json}\n```json\n{\"speaker\":\"Benji\",\"text\":\"fenced\",\"gesture\":\"nod\",\"emotion\":\"concerned\"}\n```";
    let a = parse_turn(prose, vocab, &roles).map_err(|e| e.to_string())?;
    let b = parse_turn(fenced, vocab, &roles).map_err(|e| e.to_string())?;
    ensure!(a.utterance.text == "ok" && b.utterance.text == "fenced", "extraction");
    ensure!(!extract_objects(fenced).is_empty(), "fenced extraction");
    Ok(format!("{PARSER_CASES} round trips; repair, illegal speaker, prose and fenced cases"))
}

fn engine_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let users = dir.path().join("user.txt");
    let lines = ["I keep finding dishes in the sink.", "Could we try a rota?", "Fridays work for me.", "Great."];
    std::fs::write(&users, lines.join("\n")).unwrap();
    let mut replies = Vec::new();
    for i in 0..lines.len() {
        replies.push(common::avatar_reply("Benji", &format!("b{i}")));
        replies.push(common::avatar_reply("Caden", &format!("c{i}")));
    }
    let provider = dir.path().join("provider.jsonl");
    std::fs::write(&provider, replies.join("\n")).unwrap();
    let mut outputs = Vec::new();
    for run in 0..3 {
        let out = dir.path().join(format!("run{run}.jsonl"));
        let o = common::roleswitch(&[
            "run-session",
            "--role",
            "alice",
            "--provider",
            &format!("scripted:{}", provider.display()),
            "--script",
            users.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        ensure!(o.status.success(), "run {run}: {}", common::stderr(&o));
        outputs.push((out.clone(), std::fs::read(&out).unwrap()));
    }
    ensure!(outputs[0].1 == outputs[1].1 && outputs[1].1 == outputs[2].1, "transcripts differ");
    let session = replay_transcript(&read_transcript(&outputs[0].0).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let turns = session.history.turns();
    ensure!(turns.len() == lines.len() * 3, "{} turns", turns.len());
    for round in turns.chunks(3) {
        let mut avatars: Vec<&str> = round[1..].iter().map(|t| t.speaker.as_str()).collect();
        avatars.sort();
        ensure!(round[0].speaker.as_str() == "alice" && avatars == ["benji", "caden"], "round {:?}", round);
    }
    Ok(format!("3 runs byte-identical ({} bytes), {} rounds of 1 + 2 turns", outputs[0].1.len(), lines.len()))
}

fn response(inst: &Instrument, answers: impl Fn(usize) -> i32) -> ResponseSet {
    ResponseSet {
        instrument_id: inst.instrument_id.clone(),
        respondent_id: "r".into(),
        answers: inst.items.iter().enumerate().map(|(i, it)| (it.item_id.clone(), answers(i))).collect(),
    }
}

fn instrument_properties() -> Outcome {
    let neo = bundled::neo_ffi_30();
    let third = bundled::neo_ffi_30_third_person();
    let iri = bundled::iri();
    for inst in [&neo, &iri] {
        for a in inst.scale.min..=inst.scale.max {
            ensure!(inst.scale.reverse(inst.scale.reverse(a)) == a, "involution at {a}");
        }
    }
    let mut rng = StdRng::seed_from_u64(5);
    for _ in 0..500 {
        let draws: Vec<i32> = (0..neo.items.len()).map(|_| rng.random_range(0..=4)).collect();
        let first = score_response(&neo, &response(&neo, |i| draws[i])).map_err(|e| e.to_string())?;
        let other = score_response(&third, &response(&third, |i| draws[i])).map_err(|e| e.to_string())?;
        ensure!(first.0.values().all(|s| (0.0..=24.0).contains(s)), "NEO out of range {first:?}");
        ensure!(first == other, "third-person differs");
        let iri_draws: Vec<i32> = (0..iri.items.len()).map(|_| rng.random_range(1..=5)).collect();
        let s = score_response(&iri, &response(&iri, |i| iri_draws[i])).map_err(|e| e.to_string())?;
        ensure!(s.0.values().all(|v| (1.0..=5.0).contains(v)), "IRI out of range {s:?}");
    }
    let parallel: Vec<Vec<f64>> = [1.0, 3.0, 2.0, 5.0, 4.0].iter().map(|&v| vec![v; 4]).collect();
    let alpha = cronbach_alpha(&parallel).map_err(|e| e.to_string())?;
    ensure!((alpha - 1.0).abs() < 1e-12, "alpha {alpha}");
    Ok(format!("involution, NEO ⊂ [0,24], IRI ⊂ [1,5], third-person equality over 500 draws; α = {alpha}"))
}

fn latin_square() -> Outcome {
    let roles: Vec<RoleId> = ["alice", "benji", "caden"].into_iter().map(RoleId::new).collect();
    let rows = latin_square_orders(&roles);
    for (i, row) in rows.iter().enumerate() {
        let mut sorted = row.clone();
        sorted.sort();
        ensure!(sorted == roles, "row {i} {row:?}");
    }
    for c in 0..roles.len() {
        let mut col: Vec<RoleId> = rows.iter().map(|r| r[c].clone()).collect();
        col.sort();
        ensure!(col == roles, "column {c}");
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = StudyStore::open(dir.path()).map_err(|e| e.to_string())?;
    let mut counts = vec![0; rows.len()];
    for i in 0..9 {
        let pid = roleswitch::study::ParticipantId::new(format!("p{i:02}")).unwrap();
        let rec = store.assign_participant(&pid, &roles).map_err(|e| e.to_string())?;
        let row = rows.iter().position(|r| *r == rec.role_order).ok_or("order not a Latin row")?;
        counts[row] += 1;
    }
    ensure!(counts == [3, 3, 3], "row counts {counts:?}");
    Ok("3×3 rows and columns are permutations; 9 enrollments hit each row 3 times".into())
}

fn t_tail() -> Outcome {
    let lib = student_t_two_tailed(2.98, 21.0);
    let oracle = support::t_tail_by_quadrature(2.98, 21.0);
    ensure!((lib - oracle).abs() < 1e-9, "library {lib} vs quadrature {oracle}");
    ensure!((lib - T_TAIL_REFERENCE).abs() <= T_TAIL_TOL, "p = {lib}");
    Ok(format!("p(2.98, 21) = {lib:.8} (quadrature {oracle:.8}, reference {T_TAIL_REFERENCE})"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("fidelity math reproduction", fidelity_math),
        ("cosine oracle check", cosine_oracle),
        ("study-2 statistics reproduction", study_two),
        ("paired identity property", paired_identity),
        ("parser suite", parser_suite),
        ("turn-engine determinism", engine_determinism),
        ("instrument properties", instrument_properties),
        ("latin-square properties", latin_square),
        ("t-distribution tail accuracy", t_tail),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criterion/criteria failed");
        std::process::exit(1);
    }
}
