//! Personality-fidelity harness: repeated self-assessment of each avatar on
//! a Big Five inventory, aggregated and compared against its target profile.

use std::fmt::Write as _;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, Sampling};
use crate::instruments::{administer_to_persona, score_response, Instrument, ResponseSet};
use crate::persona::{BigFiveTrait, RoleCard, RoleId};
use crate::stats::{cosine_similarity, mean_sd, pearson_r, StatsError, TraitDistribution};

/// Lowest per-trial cosine mean reported for any avatar is 0.862.
pub const DEFAULT_PASS_THRESHOLD: f64 = 0.85;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("invalid harness configuration: {0}")]
    InvalidConfig(String),
    #[error("instrument {instrument} has no subscale for trait {trait_key}")]
    MissingTrait { instrument: String, trait_key: &'static str },
    #[error("unreliable provider: {failures} of {n_trials} trials failed")]
    UnreliableProvider { failures: usize, n_trials: usize },
    #[error("trial accounting mismatch: {successes} successes + {failures} failures != {n_trials}")]
    Accounting {
        successes: usize,
        failures: usize,
        n_trials: usize,
    },
    #[error("no reports")]
    NoReports,
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfAssessmentConfig {
    pub n_trials: usize,
    pub parallelism: usize,
    pub sampling: Sampling,
}

impl Default for SelfAssessmentConfig {
    fn default() -> Self {
        SelfAssessmentConfig {
            n_trials: 100,
            parallelism: 1,
            sampling: Sampling::SELF_ASSESSMENT,
        }
    }
}

/// One administration of the inventory. Exactly one of `scores`/`failure` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub response: Option<ResponseSet>,
    pub scores: Option<[f64; 5]>,
    pub cosine: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub role_id: RoleId,
    pub display_name: String,
    pub target: [f64; 5],
    pub n_trials: usize,
    pub failures: usize,
    pub trait_distribution: TraitDistribution,
    pub cosine_per_trial_mean: f64,
    pub cosine_per_trial_sd: f64,
    pub cosine_per_trial_min: f64,
    pub cosine_per_trial_max: f64,
    pub cosine_of_mean_vector: f64,
    /// `None` when either vector has zero variance.
    pub pearson_mean_vs_target: Option<f64>,
    pub insufficient_trials: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfAssessment {
    pub report: FidelityReport,
    pub trials: Vec<TrialRecord>,
}

/// Folds successful trial score vectors (in trial order) into a report.
pub fn aggregate_trials(
    role_id: RoleId,
    display_name: &str,
    target: [f64; 5],
    n_trials: usize,
    trial_scores: &[[f64; 5]],
    failures: usize,
) -> Result<FidelityReport, ValidationError> {
    let successes = trial_scores.len();
    if successes + failures != n_trials {
        return Err(ValidationError::Accounting {
            successes,
            failures,
            n_trials,
        });
    }
    if successes == 0 || failures * 10 > n_trials {
        return Err(ValidationError::UnreliableProvider { failures, n_trials });
    }

    let mut mean = Vec::with_capacity(5);
    let mut sd = Vec::with_capacity(5);
    for k in 0..5 {
        let column: Vec<f64> = trial_scores.iter().map(|v| v[k]).collect();
        let (m, s) = mean_sd(&column)?;
        mean.push(m);
        sd.push(s);
    }

    let cosines: Vec<f64> = trial_scores
        .iter()
        .map(|v| cosine_similarity(v, &target))
        .collect::<Result<_, _>>()?;
    let (cos_mean, cos_sd) = mean_sd(&cosines)?;
    let cos_min = cosines.iter().copied().fold(f64::INFINITY, f64::min);
    let cos_max = cosines.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let pearson = match pearson_r(&target, &mean) {
        Ok(r) => Some(r),
        Err(StatsError::UndefinedCorrelation(_)) => None,
        Err(e) => return Err(e.into()),
    };

    Ok(FidelityReport {
        role_id,
        display_name: display_name.to_string(),
        target,
        n_trials,
        failures,
        cosine_of_mean_vector: cosine_similarity(&mean, &target)?,
        trait_distribution: TraitDistribution {
            mean,
            sd,
            n_trials: successes,
        },
        cosine_per_trial_mean: cos_mean,
        cosine_per_trial_sd: cos_sd,
        cosine_per_trial_min: cos_min,
        cosine_per_trial_max: cos_max,
        pearson_mean_vs_target: pearson,
        insufficient_trials: successes < 2,
    })
}

fn trait_subscales(instrument: &Instrument) -> Result<[&'static str; 5], ValidationError> {
    let keys = BigFiveTrait::ALL.map(BigFiveTrait::key);
    for key in keys {
        if instrument.subscale(key).is_none() {
            return Err(ValidationError::MissingTrait {
                instrument: instrument.instrument_id.clone(),
                trait_key: key,
            });
        }
    }
    Ok(keys)
}

fn run_trial(
    index: usize,
    persona: &RoleCard,
    instrument: &Instrument,
    gateway: &Gateway,
    sampling: Sampling,
    keys: &[&str; 5],
) -> TrialRecord {
    let failed = |reason: String, response: Option<ResponseSet>| TrialRecord {
        trial_index: index,
        response,
        scores: None,
        cosine: None,
        failure: Some(reason),
    };
    let respondent = format!("{}-{:03}", persona.role_id, index + 1);
    let response = match administer_to_persona(instrument, persona, gateway, sampling, &respondent) {
        Ok(r) => r,
        Err(e) => return failed(e.to_string(), None),
    };
    let scores = match score_response(instrument, &response) {
        Ok(s) => s,
        Err(e) => return failed(e.to_string(), Some(response)),
    };
    let vector = keys.map(|k| scores.get(k).unwrap_or(0.0));
    match cosine_similarity(&vector, &persona.profile.trait_vector()) {
        Ok(c) => TrialRecord {
            trial_index: index,
            response: Some(response),
            scores: Some(vector),
            cosine: Some(c),
            failure: None,
        },
        Err(e) => failed(e.to_string(), Some(response)),
    }
}

/// Runs `n_trials` independent administrations (a fresh context for every
/// item of every trial) and aggregates them in trial order.
pub fn run_self_assessment(
    persona: &RoleCard,
    instrument: &Instrument,
    gateway: &Gateway,
    config: &SelfAssessmentConfig,
) -> Result<SelfAssessment, ValidationError> {
    if config.n_trials == 0 {
        return Err(ValidationError::InvalidConfig("n_trials must be at least 1".into()));
    }
    if config.parallelism == 0 {
        return Err(ValidationError::InvalidConfig("parallelism must be at least 1".into()));
    }
    let keys = trait_subscales(instrument)?;

    let trials: Vec<TrialRecord> = if config.parallelism == 1 {
        (0..config.n_trials)
            .map(|i| run_trial(i, persona, instrument, gateway, config.sampling, &keys))
            .collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<TrialRecord>>> = Mutex::new(vec![None; config.n_trials]);
        std::thread::scope(|scope| {
            for _ in 0..config.parallelism.min(config.n_trials) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= config.n_trials {
                        break;
                    }
                    let record = run_trial(i, persona, instrument, gateway, config.sampling, &keys);
                    slots.lock().expect("trial slots")[i] = Some(record);
                });
            }
        });
        slots
            .into_inner()
            .expect("trial slots")
            .into_iter()
            .map(|r| r.expect("every trial ran"))
            .collect()
    };

    let scores: Vec<[f64; 5]> = trials.iter().filter_map(|t| t.scores).collect();
    let failures = trials.len() - scores.len();
    let report = aggregate_trials(
        persona.role_id.clone(),
        &persona.display_name,
        persona.profile.trait_vector(),
        config.n_trials,
        &scores,
        failures,
    )?;
    Ok(SelfAssessment { report, trials })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub role_id: RoleId,
    pub display_name: String,
    pub n_trials: usize,
    pub failures: usize,
    pub cosine_per_trial_mean: f64,
    pub cosine_per_trial_sd: f64,
    pub cosine_of_mean_vector: f64,
    pub pearson_mean_vs_target: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelitySummary {
    pub threshold: f64,
    pub rows: Vec<SummaryRow>,
    pub all_pass: bool,
}

/// Rows ordered by role id, passing iff `cosine_per_trial_mean ≥ threshold`.
pub fn fidelity_summary(reports: &[FidelityReport], threshold: f64) -> Result<FidelitySummary, ValidationError> {
    if reports.is_empty() {
        return Err(ValidationError::NoReports);
    }
    let mut rows: Vec<SummaryRow> = reports
        .iter()
        .map(|r| SummaryRow {
            role_id: r.role_id.clone(),
            display_name: r.display_name.clone(),
            n_trials: r.n_trials,
            failures: r.failures,
            cosine_per_trial_mean: r.cosine_per_trial_mean,
            cosine_per_trial_sd: r.cosine_per_trial_sd,
            cosine_of_mean_vector: r.cosine_of_mean_vector,
            pearson_mean_vs_target: r.pearson_mean_vs_target,
            pass: r.cosine_per_trial_mean >= threshold,
        })
        .collect();
    rows.sort_by(|a, b| a.role_id.cmp(&b.role_id));
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(FidelitySummary {
        threshold,
        rows,
        all_pass,
    })
}

impl FidelitySummary {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>8} {:>16} {:>10} {:>8}  result (threshold {:.3})",
            "role", "trials", "failed", "cos/trial M±SD", "cos(mean)", "pearson", self.threshold
        );
        for r in &self.rows {
            let pearson = r
                .pearson_mean_vs_target
                .map_or_else(|| "n/a".to_string(), |p| format!("{p:.3}"));
            let _ = writeln!(
                out,
                "{:<10} {:>7} {:>8} {:>16} {:>10.3} {:>8}  {}",
                r.display_name,
                r.n_trials,
                r.failures,
                format!("{:.3}±{:.3}", r.cosine_per_trial_mean, r.cosine_per_trial_sd),
                r.cosine_of_mean_vector,
                pearson,
                if r.pass { "PASS" } else { "FAIL" }
            );
        }
        out
    }
}

/// Everything one `validate-avatars` run produces; this is the report file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRun {
    pub instrument_id: String,
    pub threshold: f64,
    pub reports: Vec<FidelityReport>,
    pub summary: FidelitySummary,
}

/// Raw trials as rows: role, trial, status, five trait scores, cosine, item answers.
pub fn write_trials_csv<W: Write>(
    out: W,
    instrument: &Instrument,
    runs: &[(RoleId, Vec<TrialRecord>)],
) -> Result<(), ValidationError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["role_id", "trial", "status"].map(String::from).to_vec();
    header.extend(BigFiveTrait::ALL.map(|t| t.key().to_string()));
    header.push("cosine".into());
    header.push("failure".into());
    header.extend(instrument.items.iter().map(|i| i.item_id.clone()));
    w.write_record(&header)?;
    for (role, trials) in runs {
        for t in trials {
            let mut row = vec![
                role.to_string(),
                (t.trial_index + 1).to_string(),
                if t.failure.is_some() { "failed" } else { "ok" }.to_string(),
            ];
            match t.scores {
                Some(s) => row.extend(s.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), 5)),
            }
            row.push(t.cosine.map_or(String::new(), |c| c.to_string()));
            row.push(t.failure.clone().unwrap_or_default());
            row.extend(instrument.items.iter().map(|i| {
                t.response
                    .as_ref()
                    .and_then(|r| r.answers.get(&i.item_id))
                    .map_or(String::new(), |v| v.to_string())
            }));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
