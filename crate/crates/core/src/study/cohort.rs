use std::io::Write;

use serde::Serialize;

use super::{ParticipantId, ParticipantRecord, QuestionnairePhase, StudyError, SESSIONS_PER_PARTICIPANT};
use crate::instruments::{score_response, Instrument, InstrumentError};
use crate::stats::{paired_t, PairedTestResult};

/// Pre-training (session 1 pre) vs final (session 3 post) comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortAnalysis {
    pub instrument_id: String,
    pub subscale_id: String,
    pub result: PairedTestResult,
    pub included: Vec<ParticipantId>,
    pub excluded: Vec<ParticipantId>,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

impl CohortAnalysis {
    /// The fixed machine-parseable summary line.
    pub fn summary_line(&self) -> String {
        let r = &self.result;
        format!(
            "instrument={} subscale={} n={} t={:.3} df={} p={:.5} d={:.3} mean_diff={:.4} sd_diff={:.4} excluded={}",
            self.instrument_id,
            self.subscale_id,
            r.n,
            r.t,
            r.df,
            r.p_two_tailed,
            r.cohen_d,
            r.mean_diff,
            r.sd_diff,
            self.excluded.len()
        )
    }

    /// Per-participant rows: `participant_id,pre,post,diff`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["participant_id", "pre", "post", "diff"])?;
        for ((pid, pre), post) in self.included.iter().zip(&self.pre).zip(&self.post) {
            w.write_record([
                pid.as_str().to_string(),
                pre.to_string(),
                post.to_string(),
                (post - pre).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn subscale_score(
    record: &ParticipantRecord,
    session_index: u8,
    phase: QuestionnairePhase,
    instrument: &Instrument,
    subscale: &str,
) -> Result<Option<f64>, InstrumentError> {
    match record.response(session_index, phase, &instrument.instrument_id) {
        None => Ok(None),
        Some(resp) => Ok(score_response(instrument, resp)?.get(subscale)),
    }
}

/// Pairs each participant's session-1 pre score with their session-3 post
/// score on `subscale` and runs a paired t-test. Participants missing either
/// side are excluded and listed.
pub fn cohort_pre_post(
    records: &[ParticipantRecord],
    instrument: &Instrument,
    subscale: &str,
) -> Result<CohortAnalysis, StudyError> {
    if instrument.subscale(subscale).is_none() {
        return Err(InstrumentError::UnknownSubscale(subscale.to_string()).into());
    }
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    let mut pre = Vec::new();
    let mut post = Vec::new();
    for rec in records {
        let a = subscale_score(rec, 1, QuestionnairePhase::Pre, instrument, subscale)?;
        let b = subscale_score(rec, SESSIONS_PER_PARTICIPANT, QuestionnairePhase::Post, instrument, subscale)?;
        match (a, b) {
            (Some(a), Some(b)) => {
                included.push(rec.participant_id.clone());
                pre.push(a);
                post.push(b);
            }
            _ => excluded.push(rec.participant_id.clone()),
        }
    }
    if included.len() < 2 {
        return Err(StudyError::InsufficientCohort {
            included: included.len(),
            excluded: excluded.len(),
        });
    }
    let result = paired_t(&pre, &post)?;
    Ok(CohortAnalysis {
        instrument_id: instrument.instrument_id.clone(),
        subscale_id: subscale.to_string(),
        result,
        included,
        excluded,
        pre,
        post,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::{bundled, ResponseSet};
    use crate::study::QuestionnaireEntry;
    use std::collections::BTreeSet;

    fn record(id: &str, pre: Option<i32>, post: Option<i32>) -> ParticipantRecord {
        let iri = bundled::iri();
        let resp = |v: i32| ResponseSet {
            instrument_id: iri.instrument_id.clone(),
            respondent_id: id.into(),
            // every item answered v; reverse-keyed items then score 6 - v
            answers: iri.items.iter().map(|i| (i.item_id.clone(), v)).collect(),
        };
        let mut q = Vec::new();
        if let Some(v) = pre {
            q.push(QuestionnaireEntry { session_index: 1, phase: QuestionnairePhase::Pre, response: resp(v) });
        }
        if let Some(v) = post {
            q.push(QuestionnaireEntry { session_index: 3, phase: QuestionnairePhase::Post, response: resp(v) });
        }
        ParticipantRecord {
            participant_id: ParticipantId::new(id).unwrap(),
            enrollment_index: 0,
            role_order: vec!["alice".into(), "benji".into(), "caden".into()],
            completed_sessions: BTreeSet::new(),
            questionnaire_responses: q,
        }
    }

    #[test]
    fn exclusion_accounting() {
        let iri = bundled::iri();
        let recs = vec![
            record("a", Some(2), Some(3)),
            record("b", Some(3), None),
            record("c", None, Some(4)),
            record("d", Some(1), Some(4)),
            record("e", Some(2), Some(4)),
        ];
        let out = cohort_pre_post(&recs, &iri, "fs").unwrap();
        assert_eq!(out.included.len() + out.excluded.len(), recs.len());
        assert_eq!(
            out.excluded.iter().map(|p| p.as_str()).collect::<Vec<_>>(),
            ["b", "c"]
        );
        assert_eq!(out.result.df, 2);
    }

    #[test]
    fn insufficient_and_degenerate() {
        let iri = bundled::iri();
        let one = vec![record("a", Some(2), Some(3)), record("b", None, None)];
        assert!(cohort_pre_post(&one, &iri, "pt").unwrap_err().to_string().starts_with("insufficient cohort"));
        let flat = vec![record("a", Some(2), Some(2)), record("b", Some(4), Some(4))];
        assert!(cohort_pre_post(&flat, &iri, "pt").unwrap_err().to_string().starts_with("degenerate paired sample"));
        assert!(cohort_pre_post(&flat, &iri, "zz").is_err());
    }

    #[test]
    fn summary_line_format() {
        let iri = bundled::iri();
        let recs = vec![record("a", Some(2), Some(3)), record("b", Some(1), Some(3)), record("c", Some(3), Some(3))];
        let out = cohort_pre_post(&recs, &iri, "fs").unwrap();
        let line = out.summary_line();
        assert!(line.contains(" df=2 "), "{line}");
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }
}
