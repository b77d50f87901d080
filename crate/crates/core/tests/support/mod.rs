//! Independent oracles shared by integration and acceptance tests. Nothing
//! here calls into the library's statistics code.
#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

/// Alice's reported per-trait M and SD over 100 trials, (O, C, E, A, N).
pub const ALICE_ROW: [(f64, f64); 5] = [(13.83, 1.38), (22.95, 0.28), (14.83, 0.64), (14.39, 1.22), (6.16, 0.83)];
pub const ALICE_TARGET: [f64; 5] = [13.0, 23.0, 13.0, 15.0, 6.0];
pub const N_TRIALS: usize = 100;

fn rounds_to(value: f64, target: f64) -> bool {
    (value * 100.0).round() as i64 == (target * 100.0).round() as i64
}

/// Sample of `n` integers `y` on `0..=ymax`, read as `x = y / grid`.
#[derive(Debug, Clone, Copy)]
pub struct Grid {
    pub grid: i64,
    pub ymax: i64,
}

pub const INTEGER_GRID: Grid = Grid { grid: 1, ymax: 24 };
pub const HALF_GRID: Grid = Grid { grid: 2, ymax: 48 };

/// Every Σy² for which a size-`n` sample with Σy = `sum` reports `sd_target`
/// after rounding, restricted to Σy² ≡ Σy (mod 2), which integer samples force.
pub fn admissible_sum_squares(n: usize, sum: i64, sd_target: f64, g: Grid) -> Vec<i64> {
    let nf = n as f64;
    let lo = (sum * sum) / n as i64;
    let hi = g.ymax * sum;
    (lo..=hi)
        .filter(|q| (q - sum).rem_euclid(2) == 0)
        .filter(|&q| {
            let var = (q as f64 - (sum * sum) as f64 / nf) / (nf - 1.0);
            var >= 0.0 && rounds_to(var.sqrt() / g.grid as f64, sd_target)
        })
        .collect()
}

/// Integers on `0..=ymax` with the given sum and sum of squares: start from
/// the tightest floor/ceil sample and split equal pairs `a,a → a−1,a+1`
/// (each split adds exactly 2 to Σy²) nearest the mean first.
pub fn construct_sample(n: usize, sum: i64, sum_sq: i64, ymax: i64) -> Option<Vec<i64>> {
    let base = sum.div_euclid(n as i64);
    let extra = sum.rem_euclid(n as i64) as usize;
    let mut counts = vec![0usize; ymax as usize + 1];
    counts[base as usize] += n - extra;
    if extra > 0 {
        counts[base as usize + 1] += extra;
    }
    let mut q: i64 = counts.iter().enumerate().map(|(v, &c)| c as i64 * (v as i64).pow(2)).sum();
    if sum_sq < q || (sum_sq - q) % 2 != 0 {
        return None;
    }
    let mean = sum as f64 / n as f64;
    while q < sum_sq {
        let a = (1..ymax as usize)
            .filter(|&a| counts[a] >= 2)
            .min_by(|&a, &b| {
                (a as f64 - mean)
                    .abs()
                    .partial_cmp(&(b as f64 - mean).abs())
                    .unwrap()
                    .then(a.cmp(&b))
            })?;
        counts[a] -= 2;
        counts[a - 1] += 1;
        counts[a + 1] += 1;
        q += 2;
    }
    Some(
        counts
            .iter()
            .enumerate()
            .flat_map(|(v, &c)| std::iter::repeat_n(v as i64, c))
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct TrialSet {
    pub trials: Vec<[f64; 5]>,
    /// Traits (by index) that needed the half-point grid.
    pub half_grid_traits: Vec<usize>,
}

/// A 100-trial score set reproducing Alice's reported M±SD to two decimals.
/// Traits whose row admits no integer sample fall back to the half-point grid.
pub fn alice_trial_set(seed: u64) -> TrialSet {
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut half_grid_traits = Vec::new();
    for (k, &(m, sd)) in ALICE_ROW.iter().enumerate() {
        let (g, q) = [INTEGER_GRID, HALF_GRID]
            .into_iter()
            .find_map(|g| {
                let sum = (m * (N_TRIALS as i64 * g.grid) as f64).round() as i64;
                admissible_sum_squares(N_TRIALS, sum, sd, g)
                    .first()
                    .map(|&q| (g, q))
            })
            .expect("row feasible on the half grid");
        if g.grid != 1 {
            half_grid_traits.push(k);
        }
        let sum = (m * (N_TRIALS as i64 * g.grid) as f64).round() as i64;
        let ys = construct_sample(N_TRIALS, sum, q, g.ymax).expect("constructible");
        columns.push(ys.iter().map(|&y| y as f64 / g.grid as f64).collect());
    }
    let mut rng = StdRng::seed_from_u64(seed);
    for col in &mut columns {
        col.shuffle(&mut rng);
    }
    let trials = (0..N_TRIALS)
        .map(|i| std::array::from_fn(|k| columns[k][i]))
        .collect();
    TrialSet {
        trials,
        half_grid_traits,
    }
}

pub fn oracle_mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (m, (ss / (n - 1.0)).sqrt())
}

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Two-tailed Student t tail by quadrature. With `x = √ν·tan θ` the kernel
/// `(1 + x²/ν)^{−(ν+1)/2} dx` becomes `√ν·cos^{ν−1}θ dθ`, so
/// `p = ∫_{θt}^{π/2} cos^{ν−1} / ∫_0^{π/2} cos^{ν−1}`, both by composite Simpson.
pub fn t_tail_by_quadrature(t: f64, nu: f64) -> f64 {
    let f = |theta: f64| theta.cos().powf(nu - 1.0);
    let simpson = |a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let theta_t = (t.abs() / nu.sqrt()).atan();
    simpson(theta_t, half_pi, 200_000) / simpson(0.0, half_pi, 200_000)
}

/// Paired differences in units of `1/items` with a fixed sum, choosing the
/// Σk² whose d = mean/sd is closest to `target_d`.
pub fn paired_differences(n: usize, unit_sum: i64, target_d: f64, max_abs: i64) -> Vec<i64> {
    let nf = n as f64;
    let offset = max_abs;
    let shifted_sum = unit_sum + offset * n as i64;
    let d_of = |q: i64| {
        let var = (q as f64 - (unit_sum * unit_sum) as f64 / nf) / (nf - 1.0);
        (unit_sum as f64 / nf) / var.sqrt()
    };
    let lo = (unit_sum * unit_sum) / n as i64 + 1;
    let q = (lo..lo + 5000)
        .filter(|q| (q - unit_sum).rem_euclid(2) == 0)
        .min_by(|&a, &b| {
            (d_of(a) - target_d)
                .abs()
                .partial_cmp(&(d_of(b) - target_d).abs())
                .unwrap()
        })
        .unwrap();
    // Σ(k+o)² = Σk² + 2oΣk + n·o²
    let shifted_q = q + 2 * offset * unit_sum + n as i64 * offset * offset;
    construct_sample(n, shifted_sum, shifted_q, 2 * offset)
        .expect("difference sample")
        .into_iter()
        .map(|y| y - offset)
        .collect()
}

/// One participant's subscale totals (in item units) before and after.
#[derive(Debug, Clone, Copy)]
pub struct PairedTotals {
    pub pre: i64,
    pub post: i64,
}

/// Pre/post totals on a `items`-item subscale scored 1..=5, with the given
/// differences and a pre mean near `pre_mean` (item scale units).
pub fn paired_totals(diffs: &[i64], items: i64, pre_mean: f64) -> Vec<PairedTotals> {
    let (lo, hi) = (items, 5 * items);
    let centre = (pre_mean * items as f64).round() as i64;
    diffs
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let wobble = (i as i64 * 7) % 9 - 4;
            let pre = (centre + wobble).clamp(lo - k.min(0), hi - k.max(0));
            PairedTotals { pre, post: pre + k }
        })
        .collect()
}

/// Keyed item values (1..=5) summing to `total` over `items` items.
pub fn spread_total(total: i64, items: usize) -> Vec<i32> {
    let base = total / items as i64;
    let extra = (total % items as i64) as usize;
    (0..items)
        .map(|i| (base + i64::from(i < extra)) as i32)
        .collect()
}

/// Reads the `key=value` pairs of an analysis summary line.
pub fn parse_summary_line(line: &str) -> std::collections::HashMap<String, String> {
    line.split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

use roleswitch::instruments::{bundled, ResponseSet};
use roleswitch::persona::RoleId;
use roleswitch::study::{ParticipantId, ParticipantRecord, QuestionnaireEntry, QuestionnairePhase};

pub const COHORT_N: usize = 22;
pub const IRI_ITEMS_PER_SUBSCALE: i64 = 7;
/// PT: Σ(post − pre) over the cohort in 1/7 units, and the target d.
pub const PT_UNIT_SUM: i64 = 52;
pub const PT_TARGET_D: f64 = 0.6375;
pub const PT_PRE_MEAN: f64 = 3.36;
pub const FS_UNIT_SUM: i64 = 71;
pub const FS_TARGET_D: f64 = 0.86;
pub const FS_PRE_MEAN: f64 = 2.76;

/// Raw IRI answers whose keyed PT and FS totals are the given values.
pub fn iri_response(respondent: &str, pt_total: i64, fs_total: i64) -> ResponseSet {
    let iri = bundled::iri();
    let mut answers = std::collections::BTreeMap::new();
    for (sub, total) in [("pt", pt_total), ("fs", fs_total)] {
        let items: Vec<_> = iri.items_of(sub).collect();
        for (item, keyed) in items.iter().zip(spread_total(total, items.len())) {
            answers.insert(item.item_id.clone(), iri.raw_answer_for(item, keyed));
        }
    }
    ResponseSet {
        instrument_id: iri.instrument_id.clone(),
        respondent_id: respondent.to_string(),
        answers,
    }
}

/// The 22-participant training cohort plus `dropouts` participants who
/// never answered the final post questionnaire.
pub fn iri_cohort(dropouts: usize) -> Vec<ParticipantRecord> {
    let pt = paired_totals(
        &paired_differences(COHORT_N, PT_UNIT_SUM, PT_TARGET_D, 28),
        IRI_ITEMS_PER_SUBSCALE,
        PT_PRE_MEAN,
    );
    let fs = paired_totals(
        &paired_differences(COHORT_N, FS_UNIT_SUM, FS_TARGET_D, 28),
        IRI_ITEMS_PER_SUBSCALE,
        FS_PRE_MEAN,
    );
    let roles: Vec<RoleId> = ["alice", "benji", "caden"].into_iter().map(RoleId::new).collect();
    let mut out = Vec::new();
    for i in 0..COHORT_N + dropouts {
        let pid = format!("p{:02}", i + 1);
        let (pt_i, fs_i) = (pt[i % COHORT_N], fs[i % COHORT_N]);
        let mut q = vec![QuestionnaireEntry {
            session_index: 1,
            phase: QuestionnairePhase::Pre,
            response: iri_response(&pid, pt_i.pre, fs_i.pre),
        }];
        if i < COHORT_N {
            q.push(QuestionnaireEntry {
                session_index: 3,
                phase: QuestionnairePhase::Post,
                response: iri_response(&pid, pt_i.post, fs_i.post),
            });
        }
        let shift = i % roles.len();
        let order = roles[shift..].iter().chain(&roles[..shift]).cloned().collect();
        out.push(ParticipantRecord {
            participant_id: ParticipantId::new(&pid).unwrap(),
            enrollment_index: i,
            role_order: order,
            completed_sessions: if i < COHORT_N { (1..=3).collect() } else { [1].into() },
            questionnaire_responses: q,
        });
    }
    out
}
