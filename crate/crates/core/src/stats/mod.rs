//! Statistics kernel for profile fidelity and pre/post training analyses.
//!
//! Sample (n − 1) variance is used throughout. The Student t tail is computed
//! in-crate through the regularized incomplete beta function (see [`tdist`]).

pub mod tdist;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tdist::{regularized_incomplete_beta, student_t_two_tailed};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("undefined cosine: zero vector")]
    UndefinedCosine,
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),
    #[error("undefined alpha: {0}")]
    UndefinedAlpha(&'static str),
    #[error("degenerate paired sample: {0}")]
    DegeneratePairedSample(&'static str),
}

/// Per-trait mean and SD over repeated trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitDistribution {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub n_trials: usize,
}

/// Outcome of a paired-sample t-test, with differences taken as `post − pre`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub n: usize,
    pub t: f64,
    pub df: usize,
    pub p_two_tailed: f64,
    pub cohen_d: f64,
    pub mean_diff: f64,
    pub sd_diff: f64,
}

pub fn mean(samples: &[f64]) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Sample variance (divisor n − 1). Zero for a single observation.
pub fn variance(samples: &[f64]) -> Result<f64, StatsError> {
    let m = mean(samples)?;
    if samples.len() < 2 {
        return Ok(0.0);
    }
    let ss: f64 = samples.iter().map(|x| (x - m) * (x - m)).sum();
    Ok(ss / (samples.len() - 1) as f64)
}

/// Arithmetic mean and sample SD. The SD of a single observation is reported as 0.
pub fn mean_sd(samples: &[f64]) -> Result<(f64, f64), StatsError> {
    Ok((mean(samples)?, variance(samples)?.sqrt()))
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<(), StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check_dims(a, b)?;
    if a.is_empty() {
        return Err(StatsError::UndefinedCosine);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(StatsError::UndefinedCosine);
    }
    // rounding can push |cos| a hair past 1 for parallel vectors
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Pearson product-moment correlation; needs at least three pairs.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_dims(x, y)?;
    if x.len() < 3 {
        return Err(StatsError::UndefinedCorrelation("fewer than 3 observations"));
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::UndefinedCorrelation("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Cronbach's alpha over a respondents × items matrix.
pub fn cronbach_alpha(item_scores: &[Vec<f64>]) -> Result<f64, StatsError> {
    if item_scores.len() < 2 {
        return Err(StatsError::UndefinedAlpha("need at least 2 respondents"));
    }
    let k = item_scores[0].len();
    if k < 2 {
        return Err(StatsError::UndefinedAlpha("need at least 2 items"));
    }
    if let Some(row) = item_scores.iter().find(|row| row.len() != k) {
        return Err(StatsError::DimensionMismatch {
            left: k,
            right: row.len(),
        });
    }

    let item_var_sum: f64 = (0..k)
        .map(|j| {
            let column: Vec<f64> = item_scores.iter().map(|row| row[j]).collect();
            variance(&column)
        })
        .sum::<Result<f64, _>>()?;
    let totals: Vec<f64> = item_scores.iter().map(|row| row.iter().sum()).collect();
    let total_var = variance(&totals)?;
    if total_var == 0.0 {
        return Err(StatsError::UndefinedAlpha("zero total-score variance"));
    }

    let k = k as f64;
    Ok(k / (k - 1.0) * (1.0 - item_var_sum / total_var))
}

/// Paired-sample t-test on `post − pre`, with Cohen's d as mean_diff / sd_diff.
pub fn paired_t(pre: &[f64], post: &[f64]) -> Result<PairedTestResult, StatsError> {
    check_dims(pre, post)?;
    let n = pre.len();
    if n < 2 {
        return Err(StatsError::DegeneratePairedSample("need at least 2 pairs"));
    }
    let diffs: Vec<f64> = pre.iter().zip(post).map(|(a, b)| b - a).collect();
    let (mean_diff, sd_diff) = mean_sd(&diffs)?;
    if sd_diff == 0.0 || !sd_diff.is_finite() {
        return Err(StatsError::DegeneratePairedSample("zero variance of differences"));
    }

    let cohen_d = mean_diff / sd_diff;
    let t = cohen_d * (n as f64).sqrt();
    let df = n - 1;
    Ok(PairedTestResult {
        n,
        t,
        df,
        p_two_tailed: student_t_two_tailed(t, df as f64),
        cohen_d,
        mean_diff,
        sd_diff,
    })
}
