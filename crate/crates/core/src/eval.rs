//! Cost buckets, error measures, fold plans and paired significance tests.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::abstraction::FeatureMatrix;
use crate::error::{Error, Result};
use crate::model::{fit, TrainConfig};

/// Added to actual and predicted cents before taking relative error.
pub const MAPE_GUARD_CENTS: f64 = 100.0;

pub const DEFAULT_BUCKETS: usize = 5;
pub const DEFAULT_FOLDS: usize = 20;
pub const DEFAULT_HOLDOUT_FRACTION: f64 = 0.3;

/// Equal-dollar cost buckets built from observation-period costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketScheme {
    pub k: usize,
    /// `boundaries[b]` is the highest observation cost placed in buckets
    /// `1..=b+1`. Non-decreasing; equal neighbours appear when one member's
    /// cost spans several bucket shares.
    pub boundaries: Vec<u64>,
    /// Sweep assignment of every member (1-based buckets).
    pub members: BTreeMap<String, usize>,
}

impl BucketScheme {
    /// Bucket of an arbitrary cost: one plus the number of boundaries it exceeds.
    pub fn bucket_of(&self, cents: f64) -> usize {
        self.bucket_of_scaled(cents, 1.0)
    }

    /// As [`bucket_of`](Self::bucket_of) with every boundary multiplied by `scale`.
    pub fn bucket_of_scaled(&self, cents: f64, scale: f64) -> usize {
        1 + self.boundaries.iter().filter(|&&b| cents > b as f64 * scale).count()
    }

    /// Observation dollars held by each bucket under the sweep assignment.
    pub fn bucket_mass(&self, costs: &BTreeMap<String, u64>) -> Vec<u64> {
        let mut mass = vec![0u64; self.k];
        for (m, &b) in &self.members {
            mass[b - 1] += costs.get(m).copied().unwrap_or(0);
        }
        mass
    }
}

/// Sorts members by observation cost (ties by id) and sweeps the
/// cumulative cost: a member whose running total reaches `c` joins bucket
/// `ceil(c·k / total)`, so bucket `b` closes at the first member whose
/// running total reaches `b·total/k`.
pub fn build_buckets(observation_costs: &BTreeMap<String, u64>, k: usize) -> Result<BucketScheme> {
    if k == 0 {
        return Err(Error::Config("bucket count must be positive".into()));
    }
    let total: u128 = observation_costs.values().map(|&c| u128::from(c)).sum();
    if total == 0 {
        return Err(Error::InvalidInput("all observation costs are zero; nothing to bucket".into()));
    }
    let positive = observation_costs.values().filter(|&&c| c > 0).count();
    if positive < k {
        return Err(Error::InvalidInput(format!(
            "{positive} members with positive cost cannot fill {k} buckets"
        )));
    }
    let mut sorted: Vec<(&String, u64)> = observation_costs.iter().map(|(m, &c)| (m, c)).collect();
    sorted.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));

    let k128 = k as u128;
    let mut members = BTreeMap::new();
    let mut highest = vec![0u64; k];
    let mut cumulative: u128 = 0;
    for (m, cost) in sorted {
        cumulative += u128::from(cost);
        let bucket = (cumulative * k128).div_ceil(total).clamp(1, k128) as usize;
        members.insert(m.clone(), bucket);
        highest[bucket - 1] = highest[bucket - 1].max(cost);
    }
    let mut boundaries = Vec::with_capacity(k - 1);
    let mut running = 0;
    for &h in &highest[..k - 1] {
        running = running.max(h);
        boundaries.push(running);
    }
    Ok(BucketScheme { k, boundaries, members })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenaltyMatrix {
    entries: Vec<Vec<u32>>,
}

impl PenaltyMatrix {
    /// `entry(i, j) = |i − j|`.
    pub fn absolute_difference(k: usize) -> Self {
        PenaltyMatrix {
            entries: (0..k)
                .map(|i| (0..k).map(|j| i.abs_diff(j) as u32).collect())
                .collect(),
        }
    }

    pub fn new(entries: Vec<Vec<u32>>) -> Result<Self> {
        let k = entries.len();
        for (i, row) in entries.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Config(format!("penalty row {} has {} entries, expected {k}", i + 1, row.len())));
            }
            if row[i] != 0 {
                return Err(Error::Config("penalty diagonal must be zero".into()));
            }
            if (0..k).any(|j| entries[j][i] != row[j]) {
                return Err(Error::Config("penalty matrix must be symmetric".into()));
            }
        }
        Ok(PenaltyMatrix { entries })
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    /// Penalty for predicting bucket `predicted` when the truth is `actual` (1-based).
    pub fn entry(&self, predicted: usize, actual: usize) -> u32 {
        self.entries[predicted - 1][actual - 1]
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension { expected: a, actual: b });
    }
    if a == 0 {
        return Err(Error::InvalidInput("no values to score".into()));
    }
    Ok(())
}

fn guarded_ape(actual: f64, predicted: f64) -> f64 {
    let a = actual + MAPE_GUARD_CENTS;
    (a - (predicted + MAPE_GUARD_CENTS)).abs() / a
}

/// Mean absolute percentage error over cent values with a one-dollar guard
/// added to both sides.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual.len(), predicted.len())?;
    if let Some(a) = actual.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::InvalidInput(format!("actual cost {a} must be finite and non-negative")));
    }
    let total: f64 = actual.iter().zip(predicted).map(|(&a, &p)| guarded_ape(a, p)).sum();
    Ok(total / actual.len() as f64)
}

fn check_buckets(buckets: &[usize], k: usize) -> Result<()> {
    match buckets.iter().find(|&&b| b == 0 || b > k) {
        Some(b) => Err(Error::InvalidInput(format!("bucket {b} outside 1..={k}"))),
        None => Ok(()),
    }
}

/// Mean penalty per member.
pub fn penalty_error(actual: &[usize], predicted: &[usize], matrix: &PenaltyMatrix) -> Result<f64> {
    check_lengths(actual.len(), predicted.len())?;
    check_buckets(actual, matrix.k())?;
    check_buckets(predicted, matrix.k())?;
    let total: u64 = actual.iter().zip(predicted).map(|(&a, &p)| u64::from(matrix.entry(p, a))).sum();
    Ok(total as f64 / actual.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// Per bucket; `None` when no member actually falls in the bucket.
    pub recall: Vec<Option<f64>>,
    /// Per bucket; `None` when no member is predicted in the bucket.
    pub precision: Vec<Option<f64>>,
}

pub fn classification_metrics(actual: &[usize], predicted: &[usize], k: usize) -> Result<ClassificationMetrics> {
    check_lengths(actual.len(), predicted.len())?;
    check_buckets(actual, k)?;
    check_buckets(predicted, k)?;
    let mut hits = vec![0usize; k];
    let mut actual_n = vec![0usize; k];
    let mut predicted_n = vec![0usize; k];
    for (&a, &p) in actual.iter().zip(predicted) {
        actual_n[a - 1] += 1;
        predicted_n[p - 1] += 1;
        if a == p {
            hits[a - 1] += 1;
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(ClassificationMetrics {
        accuracy: hits.iter().sum::<usize>() as f64 / actual.len() as f64,
        recall: (0..k).map(|b| ratio(hits[b], actual_n[b])).collect(),
        precision: (0..k).map(|b| ratio(hits[b], predicted_n[b])).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k_folds: usize,
    pub seed: u64,
    /// Member id to 0-based fold.
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn folds(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.k_folds];
        for (m, &f) in &self.assignment {
            out[f].push(m.clone());
        }
        out
    }
}

fn shuffled(member_ids: &[String], rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut ids = member_ids.to_vec();
    ids.sort();
    ids.dedup();
    ids.shuffle(rng);
    ids
}

/// Deals shuffled members round-robin. With `strata`, members are grouped
/// by stratum (shuffled order kept within each) before dealing.
fn deal(ids: Vec<String>, k_folds: usize, seed: u64, strata: Option<&BTreeMap<String, usize>>) -> FoldPlan {
    let mut ids = ids;
    if let Some(strata) = strata {
        ids.sort_by_key(|m| strata.get(m).copied().unwrap_or(0));
    }
    FoldPlan {
        k_folds,
        seed,
        assignment: ids.into_iter().enumerate().map(|(i, m)| (m, i % k_folds)).collect(),
    }
}

pub fn kfold_split(member_ids: &[String], k_folds: usize, seed: u64) -> Result<FoldPlan> {
    if k_folds < 2 {
        return Err(Error::Config("at least two folds are required".into()));
    }
    let ids = shuffled(member_ids, &mut ChaCha8Rng::seed_from_u64(seed));
    if ids.len() < k_folds {
        return Err(Error::InvalidInput(format!("{} members cannot fill {k_folds} folds", ids.len())));
    }
    Ok(deal(ids, k_folds, seed, None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoldConfig {
    pub k_folds: usize,
    pub holdout_fraction: f64,
    /// Deal folds bucket by bucket so each fold sees a similar cost mix.
    pub stratify: bool,
}

impl Default for FoldConfig {
    fn default() -> Self {
        FoldConfig {
            k_folds: DEFAULT_FOLDS,
            holdout_fraction: DEFAULT_HOLDOUT_FRACTION,
            stratify: false,
        }
    }
}

/// Tuning holdout plus cross-validation folds over the remaining members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPlan {
    pub holdout: BTreeSet<String>,
    pub folds: FoldPlan,
}

/// Shuffles members once, reserves the first `holdout_fraction` of them and
/// deals the rest into folds.
pub fn plan_evaluation(
    member_ids: &[String],
    config: &FoldConfig,
    seed: u64,
    strata: Option<&BTreeMap<String, usize>>,
) -> Result<EvaluationPlan> {
    if config.k_folds < 2 {
        return Err(Error::Config("at least two folds are required".into()));
    }
    if !(0.0..1.0).contains(&config.holdout_fraction) {
        return Err(Error::Config(format!(
            "holdout fraction must lie in [0, 1), got {}",
            config.holdout_fraction
        )));
    }
    let mut ids = shuffled(member_ids, &mut ChaCha8Rng::seed_from_u64(seed));
    let n_holdout = (ids.len() as f64 * config.holdout_fraction).round() as usize;
    let rest = ids.split_off(n_holdout);
    if rest.len() < config.k_folds {
        return Err(Error::InvalidInput(format!(
            "{} members remain after the holdout, fewer than {} folds",
            rest.len(),
            config.k_folds
        )));
    }
    Ok(EvaluationPlan {
        holdout: ids.into_iter().collect(),
        folds: deal(rest, config.k_folds, seed, strata.filter(|_| config.stratify)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub mean_difference: f64,
    pub p_two_sided: f64,
    pub p_bonferroni: f64,
}

/// Paired t-test on `a − b`. All-zero differences give `t = 0, p = 1`.
pub fn paired_t_test(a: &[f64], b: &[f64], comparisons: usize) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput("a paired t-test needs at least two pairs".into()));
    }
    if comparisons == 0 {
        return Err(Error::Config("comparison count must be positive".into()));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let df = a.len() - 1;
    let (t, p) = if d.iter().all(|&x| x == 0.0) {
        (0.0, 1.0)
    } else if var == 0.0 {
        (mean.signum() * f64::INFINITY, 0.0)
    } else {
        let t = mean / (var / n).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
        (t, (2.0 * dist.cdf(-t.abs())).min(1.0))
    };
    Ok(TTest {
        t,
        df,
        mean_difference: mean,
        p_two_sided: p,
        p_bonferroni: (p * comparisons as f64).min(1.0),
    })
}

/// How result-period and predicted costs are compared to bucket boundaries
/// that were drawn on observation-period dollars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMapping {
    /// Multiplier applied to every boundary; the default rescales the
    /// observation span to the result span.
    pub boundary_scale: f64,
}

impl BucketMapping {
    pub fn for_spans(observation_months: u32, result_months: u32) -> Self {
        BucketMapping {
            boundary_scale: f64::from(result_months) / f64::from(observation_months),
        }
    }
}

/// Pooled scores of one set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub n_members: usize,
    pub mape: f64,
    pub mape_per_bucket: Vec<Option<f64>>,
    pub penalty_error: f64,
    pub penalty_per_bucket: Vec<Option<f64>>,
    pub accuracy: f64,
    pub recall: Vec<Option<f64>>,
    pub precision: Vec<Option<f64>>,
    pub actual_bucket_counts: Vec<usize>,
}

/// Scores predictions against actual cents. Negative predictions count as zero.
pub fn score(
    actual: &[f64],
    predicted: &[f64],
    buckets: &BucketScheme,
    mapping: &BucketMapping,
    penalty: &PenaltyMatrix,
) -> Result<Scores> {
    check_lengths(actual.len(), predicted.len())?;
    if penalty.k() != buckets.k {
        return Err(Error::Config(format!(
            "penalty matrix is {}×{} but there are {} buckets",
            penalty.k(),
            penalty.k(),
            buckets.k
        )));
    }
    let k = buckets.k;
    let predicted: Vec<f64> = predicted.iter().map(|p| p.max(0.0)).collect();
    let actual_b: Vec<usize> = actual.iter().map(|&a| buckets.bucket_of_scaled(a, mapping.boundary_scale)).collect();
    let predicted_b: Vec<usize> = predicted.iter().map(|&p| buckets.bucket_of_scaled(p, mapping.boundary_scale)).collect();
    let cls = classification_metrics(&actual_b, &predicted_b, k)?;

    let mut ape_sum = vec![0.0; k];
    let mut pen_sum = vec![0u64; k];
    let mut counts = vec![0usize; k];
    for i in 0..actual.len() {
        let b = actual_b[i] - 1;
        ape_sum[b] += guarded_ape(actual[i], predicted[i]);
        pen_sum[b] += u64::from(penalty.entry(predicted_b[i], actual_b[i]));
        counts[b] += 1;
    }
    let per = |sum: f64, n: usize| (n > 0).then(|| sum / n as f64);
    Ok(Scores {
        n_members: actual.len(),
        mape: mape(actual, &predicted)?,
        mape_per_bucket: (0..k).map(|b| per(ape_sum[b], counts[b])).collect(),
        penalty_error: penalty_error(&actual_b, &predicted_b, penalty)?,
        penalty_per_bucket: (0..k).map(|b| per(pen_sum[b] as f64, counts[b])).collect(),
        accuracy: cls.accuracy,
        recall: cls.recall,
        precision: cls.precision,
        actual_bucket_counts: counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean of the per-fold MAPEs.
    pub mape_overall: f64,
    pub fold_mapes: Vec<f64>,
    /// Out-of-fold predictions of every evaluated member, pooled.
    pub pooled: Scores,
}

/// Trains on k−1 folds and predicts the held-out fold, for every fold.
/// Holdout members are excluded entirely. Folds run on the current rayon
/// pool; results are reduced in fold order.
pub fn cross_validate(
    matrix: &FeatureMatrix,
    plan: &EvaluationPlan,
    buckets: &BucketScheme,
    mapping: &BucketMapping,
    penalty: &PenaltyMatrix,
    config: &TrainConfig,
) -> Result<EvalReport> {
    let row_of: HashMap<&str, usize> = matrix
        .member_ids()
        .iter()
        .enumerate()
        .map(|(i, m)| (m.as_str(), i))
        .collect();
    let mut fold_rows: Vec<Vec<usize>> = vec![Vec::new(); plan.folds.k_folds];
    for (m, &f) in &plan.folds.assignment {
        let row = *row_of
            .get(m.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("fold member `{m}` is not in the matrix")))?;
        fold_rows[f].push(row);
    }

    let per_fold: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..plan.folds.k_folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = fold_rows
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, rows)| rows.iter().copied())
                .collect();
            let model = fit(&matrix.select_rows(&train), config)?;
            let test = matrix.select_rows(&fold_rows[f]);
            let predicted = model.predict_matrix(&test)?;
            let actual = test.targets().iter().map(|&t| t as f64).collect();
            Ok((actual, predicted))
        })
        .collect();

    let mut fold_mapes = Vec::with_capacity(per_fold.len());
    let (mut actual, mut predicted) = (Vec::new(), Vec::new());
    for result in per_fold {
        let (a, p) = result?;
        let clamped: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
        fold_mapes.push(mape(&a, &clamped)?);
        actual.extend(a);
        predicted.extend(clamped);
    }
    Ok(EvalReport {
        mape_overall: fold_mapes.iter().sum::<f64>() / fold_mapes.len() as f64,
        fold_mapes,
        pooled: score(&actual, &predicted, buckets, mapping, penalty)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn costs(values: &[u64]) -> BTreeMap<String, u64> {
        values.iter().enumerate().map(|(i, &c)| (format!("m{i:02}"), c)).collect()
    }

    #[test]
    fn equal_costs_fill_buckets_evenly() {
        let s = build_buckets(&costs(&[10; 10]), 5).unwrap();
        let mut per = [0; 5];
        for &b in s.members.values() {
            per[b - 1] += 1;
        }
        assert_eq!(per, [2; 5]);
    }

    #[test]
    fn one_heavy_member_takes_the_top() {
        let s = build_buckets(&costs(&[1, 1, 1, 1, 96]), 5).unwrap();
        let got: Vec<usize> = s.members.values().copied().collect();
        assert_eq!(got, vec![1, 1, 1, 1, 5]);
        assert_eq!(s.boundaries, vec![1, 1, 1, 1]);
        assert_eq!(s.bucket_of(1.0), 1);
        assert_eq!(s.bucket_of(2.0), 5);
    }

    #[test]
    fn bucket_edge_cases() {
        let s = build_buckets(&costs(&[3, 0, 9]), 1).unwrap();
        assert!(s.members.values().all(|&b| b == 1));
        assert!(s.boundaries.is_empty());
        assert!(build_buckets(&costs(&[0, 0, 0]), 2).is_err());
        assert!(build_buckets(&costs(&[5, 0, 0]), 2).is_err());
        assert!(build_buckets(&costs(&[5]), 0).is_err());
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[0.0], &[900.0]).unwrap(), 9.0);
        assert_eq!(mape(&[100.0, 300.0], &[200.0, 300.0]).unwrap(), 0.25);
        assert_eq!(mape(&[5.0, 77.0, 1e6], &[5.0, 77.0, 1e6]).unwrap(), 0.0);
        assert!(mape(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mape(&[], &[]).is_err());
    }

    #[test]
    fn penalty_examples() {
        let p = PenaltyMatrix::absolute_difference(5);
        assert_eq!(p.entry(1, 5), 4);
        assert_eq!(penalty_error(&[5], &[1], &p).unwrap(), 4.0);
        assert_eq!(penalty_error(&[1, 2, 3], &[1, 2, 3], &p).unwrap(), 0.0);
        assert_eq!(penalty_error(&[2, 2], &[2, 4], &p).unwrap(), 1.0);
        assert!(penalty_error(&[6], &[1], &p).is_err());
        assert!(penalty_error(&[0], &[1], &p).is_err());
        assert!(PenaltyMatrix::new(vec![vec![0, 1], vec![2, 0]]).is_err());
        assert!(PenaltyMatrix::new(vec![vec![1, 1], vec![1, 1]]).is_err());
    }

    #[test]
    fn classification_examples() {
        let perfect = classification_metrics(&[1, 2, 3, 4, 5], &[1, 2, 3, 4, 5], 5).unwrap();
        assert_eq!(perfect.accuracy, 1.0);
        assert!(perfect.recall.iter().chain(&perfect.precision).all(|v| *v == Some(1.0)));

        let all_one = classification_metrics(&[1, 2, 3, 4, 5], &[1; 5], 5).unwrap();
        assert_eq!(all_one.accuracy, 0.2);
        assert_eq!(all_one.recall[0], Some(1.0));
        assert_eq!(all_one.recall[1], Some(0.0));
        assert_eq!(all_one.precision[0], Some(0.2));
        assert_eq!(all_one.precision[2], None);
    }

    #[test]
    fn folds_examples() {
        let ids: Vec<String> = (0..40).map(|i| format!("m{i}")).collect();
        let plan = kfold_split(&ids, 20, 7).unwrap();
        assert!(plan.folds().iter().all(|f| f.len() == 2));
        assert_eq!(plan, kfold_split(&ids, 20, 7).unwrap());
        assert!(kfold_split(&ids[..5], 20, 7).is_err());

        let distinct = (0..100u64)
            .filter(|&s| kfold_split(&ids, 20, s).unwrap() != kfold_split(&ids, 20, s + 1000).unwrap())
            .count();
        assert_eq!(distinct, 100);
    }

    #[test]
    fn plan_reserves_holdout() {
        let ids: Vec<String> = (0..1000).map(|i| format!("m{i:04}")).collect();
        let plan = plan_evaluation(&ids, &FoldConfig::default(), 42, None).unwrap();
        assert_eq!(plan.holdout.len(), 300);
        assert_eq!(plan.folds.assignment.len(), 700);
        assert!(plan.folds.assignment.keys().all(|m| !plan.holdout.contains(m)));
        let sizes: Vec<usize> = plan.folds.folds().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![35; 20]);
    }

    #[test]
    fn stratified_folds_balance_buckets() {
        let ids: Vec<String> = (0..400).map(|i| format!("m{i:03}")).collect();
        let strata: BTreeMap<String, usize> = ids.iter().enumerate().map(|(i, m)| (m.clone(), 1 + i % 4)).collect();
        let cfg = FoldConfig {
            k_folds: 10,
            holdout_fraction: 0.0,
            stratify: true,
        };
        let plan = plan_evaluation(&ids, &cfg, 1, Some(&strata)).unwrap();
        for fold in plan.folds.folds() {
            let mut per = [0; 4];
            for m in &fold {
                per[strata[m] - 1] += 1;
            }
            assert!(per.iter().all(|&c| c == 10), "{per:?}");
        }
    }

    #[test]
    fn t_test_examples() {
        let t = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5], 1).unwrap();
        assert!((t.t - 4.242640687119285).abs() < 1e-12);
        assert_eq!(t.df, 4);
        // scipy.stats.ttest_rel([1,2,3,4,5], [0]*5).pvalue
        assert!((t.p_two_sided - 0.013235599563682695).abs() < 1e-9, "{}", t.p_two_sided);

        let same = paired_t_test(&[0.3, 0.5], &[0.3, 0.5], 3).unwrap();
        assert_eq!((same.t, same.p_two_sided, same.p_bonferroni), (0.0, 1.0, 1.0));

        let shifted = paired_t_test(&[2.0, 3.0], &[1.0, 2.0], 1).unwrap();
        assert_eq!(shifted.p_two_sided, 0.0);
        assert!(paired_t_test(&[1.0], &[2.0], 1).is_err());
    }

    #[test]
    fn bonferroni_scales_and_caps() {
        let a = [1.0, 2.1, 2.9, 4.2, 5.0, 5.8];
        let b = [0.0; 6];
        let one = paired_t_test(&a, &b, 1).unwrap();
        let four = paired_t_test(&a, &b, 4).unwrap();
        assert_eq!(four.p_bonferroni, (one.p_two_sided * 4.0).min(1.0));
        let huge = paired_t_test(&[0.1, -0.2, 0.3], &[0.0; 3], 1000).unwrap();
        assert_eq!(huge.p_bonferroni, 1.0);
    }

    #[test]
    fn score_clamps_negative_predictions() {
        let buckets = build_buckets(&costs(&[100, 200, 300, 400, 500]), 5).unwrap();
        let mapping = BucketMapping { boundary_scale: 1.0 };
        let penalty = PenaltyMatrix::absolute_difference(5);
        let s = score(&[0.0, 500.0], &[-50.0, 500.0], &buckets, &mapping, &penalty).unwrap();
        assert_eq!(s.mape, 0.0);
        assert_eq!(s.accuracy, 1.0);
        assert_eq!(s.actual_bucket_counts, vec![1, 0, 0, 0, 1]);
        assert_eq!(s.mape_per_bucket[1], None);
    }
}
