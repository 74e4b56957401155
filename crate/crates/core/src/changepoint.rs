//! Optimal multiple-changepoint detection with PELT.
//!
//! The objective is the penalised quadratic loss
//!
//! ```text
//! sum over segments of sum_i (x_i - mean(segment))^2  +  rho * m
//! ```
//!
//! where `m` is the number of changepoints. [`pelt`] solves it with the
//! pruned dynamic program; [`exhaustive_segment`] enumerates every
//! segmentation of short series and serves as its oracle.
//!
//! Both solvers evaluate a segmentation with the same left-to-right
//! accumulation (`F(s) + C(s, t) + rho`), so their objectives agree bit for
//! bit. Floating-point addition is monotone, which keeps the prefix-optimal
//! substructure of the dynamic program intact in `f64`.

use std::cmp::Ordering;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest series [`exhaustive_segment`] accepts.
pub const EXHAUSTIVE_MAX_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateStatistic {
    #[default]
    SegmentMean,
    FirstValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeltConfig {
    pub penalty_rho: f64,
    pub min_segment_length: usize,
    pub state_statistic: StateStatistic,
}

impl Default for PeltConfig {
    fn default() -> Self {
        PeltConfig {
            penalty_rho: 2.0,
            min_segment_length: 1,
            state_statistic: StateStatistic::SegmentMean,
        }
    }
}

impl PeltConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty_rho >= 0.0 && self.penalty_rho.is_finite()) {
            return Err(Error::Config(format!(
                "penalty must be finite and non-negative, got {}",
                self.penalty_rho
            )));
        }
        if self.min_segment_length == 0 {
            return Err(Error::Config("minimum segment length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    /// One-based index of the last element of every segment but the final
    /// one; equivalently the zero-based exclusive end of those segments.
    pub changepoints: Vec<usize>,
    /// Zero-based half-open ranges partitioning `0..n`.
    #[serde(skip)]
    pub segment_bounds: Vec<Range<usize>>,
    pub states: Vec<f64>,
    pub objective: f64,
}

impl Segmentation {
    pub fn segments(&self) -> usize {
        self.segment_bounds.len()
    }
}

/// Sum of squared deviations from the slice mean.
pub fn segment_cost(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("segment cost of an empty slice".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(values.iter().map(|x| (x - mean) * (x - mean)).sum())
}

/// Quadratic segment cost in O(1) from prefix sums.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl QuadraticCost {
    pub fn new(values: &[f64]) -> Self {
        let mut sum = Vec::with_capacity(values.len() + 1);
        let mut sum_sq = Vec::with_capacity(values.len() + 1);
        sum.push(0.0);
        sum_sq.push(0.0);
        let (mut s, mut q) = (0.0, 0.0);
        for &x in values {
            s += x;
            q += x * x;
            sum.push(s);
            sum_sq.push(q);
        }
        QuadraticCost { sum, sum_sq }
    }

    pub fn len(&self) -> usize {
        self.sum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cost of the zero-based half-open segment `start..end`.
    pub fn cost(&self, start: usize, end: usize) -> f64 {
        debug_assert!(start < end && end <= self.len());
        let n = (end - start) as f64;
        let s = self.sum[end] - self.sum[start];
        let q = self.sum_sq[end] - self.sum_sq[start];
        (q - s * s / n).max(0.0)
    }

    pub fn mean(&self, start: usize, end: usize) -> f64 {
        (self.sum[end] - self.sum[start]) / (end - start) as f64
    }
}

fn build_segmentation(
    values: &[f64],
    changepoints: Vec<usize>,
    objective: f64,
    config: &PeltConfig,
    coster: &QuadraticCost,
) -> Segmentation {
    let mut bounds = Vec::with_capacity(changepoints.len() + 1);
    let mut start = 0;
    for &cp in changepoints.iter().chain(std::iter::once(&values.len())) {
        bounds.push(start..cp);
        start = cp;
    }
    let states = bounds
        .iter()
        .map(|r| match config.state_statistic {
            StateStatistic::SegmentMean => coster.mean(r.start, r.end),
            StateStatistic::FirstValue => values[r.start],
        })
        .collect();
    Segmentation {
        changepoints,
        segment_bounds: bounds,
        states,
        objective,
    }
}

/// Ordering used for ties: fewer changepoints, then the lexicographically
/// smaller changepoint list.
fn tie_order(a: &[usize], b: &[usize]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

fn check_input(values: &[f64], config: &PeltConfig) -> Result<()> {
    config.validate()?;
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot segment an empty series".into()));
    }
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite value at index {i}")));
    }
    Ok(())
}

fn single_segment(values: &[f64], config: &PeltConfig, coster: &QuadraticCost) -> Segmentation {
    let objective = -config.penalty_rho + coster.cost(0, values.len()) + config.penalty_rho;
    build_segmentation(values, Vec::new(), objective, config, coster)
}

/// Pruned exact linear time segmentation.
///
/// Returns the segmentation minimising the penalised quadratic loss over
/// all segmentations whose segments are at least `min_segment_length`
/// long. A series shorter than the minimum length is returned as a single
/// segment.
pub fn pelt(values: &[f64], config: &PeltConfig) -> Result<Segmentation> {
    check_input(values, config)?;
    let n = values.len();
    let rho = config.penalty_rho;
    let min_len = config.min_segment_length;
    let coster = QuadraticCost::new(values);
    if n < 2 * min_len {
        return Ok(single_segment(values, config, &coster));
    }

    // best[t]: optimal value on the prefix 0..t; last[t]: its final
    // changepoint (0 for "no changepoint"); count[t]: changepoints used.
    let mut best = vec![f64::INFINITY; n + 1];
    let mut last = vec![0usize; n + 1];
    let mut count = vec![0usize; n + 1];
    best[0] = -rho;

    // Candidates with the time at which they were found dominated. With a
    // minimum segment length > 1 a dominated candidate can still win for
    // the next `min_len - 1` ends, so removal waits until then.
    let mut candidates: Vec<(usize, Option<usize>)> = Vec::new();
    let mut scratch = Vec::new();
    let mut path_a = Vec::new();
    let mut path_b = Vec::new();

    for t in min_len..=n {
        let admitted = t - min_len;
        if admitted == 0 || best[admitted].is_finite() {
            candidates.push((admitted, None));
        }

        let mut winner: Option<usize> = None;
        let mut winner_value = f64::INFINITY;
        for &(s, _) in &candidates {
            let value = best[s] + coster.cost(s, t) + rho;
            let better = match winner {
                None => true,
                Some(w) => match value.partial_cmp(&winner_value).expect("finite objective") {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => {
                        trace_path(&last, w, &mut path_a);
                        trace_path(&last, s, &mut path_b);
                        tie_order(&path_b, &path_a) == Ordering::Less
                    }
                },
            };
            if better {
                winner = Some(s);
                winner_value = value;
            }
        }
        let w = winner.expect("at least one admissible candidate");
        best[t] = winner_value;
        last[t] = w;
        count[t] = if w == 0 { 0 } else { count[w] + 1 };

        // Prune: s can never be optimal again once F(s) + C(s, t) > F(t).
        // A relative slack keeps rounding from discarding a true optimum.
        let slack = 1e-9 * best[t].abs().max(rho).max(1.0);
        scratch.clear();
        for &(s, dominated_at) in &candidates {
            let dominated_at = dominated_at.or_else(|| {
                (best[s] + coster.cost(s, t) > best[t] + slack).then_some(t)
            });
            match dominated_at {
                Some(d) if t + 1 >= d + min_len => {}
                _ => scratch.push((s, dominated_at)),
            }
        }
        std::mem::swap(&mut candidates, &mut scratch);
    }

    let mut changepoints = Vec::new();
    trace_path(&last, n, &mut changepoints);
    Ok(build_segmentation(values, changepoints, best[n], config, &coster))
}

/// Changepoints of the optimal prefix ending at `end`, ascending.
fn trace_path(last: &[usize], end: usize, out: &mut Vec<usize>) {
    out.clear();
    let mut t = end;
    while t > 0 {
        let s = last[t];
        if s > 0 {
            out.push(s);
        }
        t = s;
    }
    out.reverse();
}

/// Brute-force minimiser over every admissible segmentation. Refuses
/// series longer than [`EXHAUSTIVE_MAX_LEN`].
pub fn exhaustive_segment(values: &[f64], config: &PeltConfig) -> Result<Segmentation> {
    check_input(values, config)?;
    let n = values.len();
    if n > EXHAUSTIVE_MAX_LEN {
        return Err(Error::InvalidInput(format!(
            "exhaustive search limited to {EXHAUSTIVE_MAX_LEN} values, got {n}"
        )));
    }
    let coster = QuadraticCost::new(values);
    let rho = config.penalty_rho;
    let min_len = config.min_segment_length;
    if n < 2 * min_len {
        return Ok(single_segment(values, config, &coster));
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut cps = Vec::with_capacity(n);
    // Bit i of `mask` set means a changepoint after element i (one-based
    // changepoint i + 1).
    for mask in 0u32..(1u32 << (n - 1)) {
        cps.clear();
        cps.extend((0..n - 1).filter(|i| mask & (1 << i) != 0).map(|i| i + 1));

        let mut value = -rho;
        let mut start = 0;
        let mut admissible = true;
        for &end in cps.iter().chain(std::iter::once(&n)) {
            if end - start < min_len {
                admissible = false;
                break;
            }
            value = value + coster.cost(start, end) + rho;
            start = end;
        }
        if !admissible {
            continue;
        }
        let replace = match &best {
            None => true,
            Some((bv, bc)) => match value.partial_cmp(bv).expect("finite objective") {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => tie_order(&cps, bc) == Ordering::Less,
            },
        };
        if replace {
            best = Some((value, cps.clone()));
        }
    }
    let (objective, changepoints) = best.expect("the unsplit series is always admissible");
    Ok(build_segmentation(values, changepoints, objective, config, &coster))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(rho: f64) -> PeltConfig {
        PeltConfig {
            penalty_rho: rho,
            ..PeltConfig::default()
        }
    }

    /// Unpruned O(n^2) optimal partitioning, independent of PELT's pruning.
    fn optimal_partitioning(values: &[f64], rho: f64) -> (f64, usize) {
        let n = values.len();
        let mut f = vec![f64::INFINITY; n + 1];
        let mut m = vec![0usize; n + 1];
        f[0] = -rho;
        for t in 1..=n {
            for s in 0..t {
                let v = f[s] + segment_cost(&values[s..t]).unwrap() + rho;
                if v < f[t] || (v == f[t] && (if s == 0 { 0 } else { m[s] + 1 }) < m[t]) {
                    f[t] = v;
                    m[t] = if s == 0 { 0 } else { m[s] + 1 };
                }
            }
        }
        (f[n], m[n])
    }

    #[test]
    fn segment_cost_examples() {
        assert_eq!(segment_cost(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(segment_cost(&[0.0, 10.0]).unwrap(), 50.0);
        assert_eq!(segment_cost(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 5.0);
        assert!(segment_cost(&[]).is_err());
    }

    #[test]
    fn constant_series_has_no_changepoints() {
        let s = pelt(&[5.0; 4], &cfg(2.0)).unwrap();
        assert!(s.changepoints.is_empty());
        assert_eq!(s.objective, 0.0);
        assert_eq!(s.states, vec![5.0]);
    }

    #[test]
    fn single_step() {
        let x = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0];
        let s = pelt(&x, &cfg(2.0)).unwrap();
        assert_eq!(s.changepoints, vec![3]);
        assert_eq!(s.states, vec![0.0, 10.0]);
        assert_eq!(s.objective, 2.0);
        assert_eq!(s.segment_bounds, vec![0..3, 3..6]);
        assert_eq!(exhaustive_segment(&x, &cfg(2.0)).unwrap().objective, 2.0);
    }

    #[test]
    fn large_penalty_suppresses_split() {
        let s = pelt(&[0.0, 10.0], &cfg(1000.0)).unwrap();
        assert!(s.changepoints.is_empty());
        assert_eq!(s.objective, 50.0);
    }

    #[test]
    fn exhaustive_examples() {
        let one = exhaustive_segment(&[7.0], &cfg(2.0)).unwrap();
        assert!(one.changepoints.is_empty());
        assert_eq!(one.objective, 0.0);

        let alt = exhaustive_segment(&[0.0, 10.0, 0.0, 10.0], &cfg(0.0)).unwrap();
        assert_eq!(alt.changepoints, vec![1, 2, 3]);
        assert_eq!(alt.objective, 0.0);

        assert!(exhaustive_segment(&[0.0; 21], &cfg(2.0)).is_err());
    }

    #[test]
    fn zero_penalty_prefers_fewest_changepoints_on_ties() {
        let s = pelt(&[3.0; 6], &cfg(0.0)).unwrap();
        assert!(s.changepoints.is_empty());
        let s = pelt(&[0.0, 0.0, 5.0, 5.0], &cfg(0.0)).unwrap();
        assert_eq!(s.changepoints, vec![2]);
    }

    #[test]
    fn first_value_states() {
        let config = PeltConfig {
            state_statistic: StateStatistic::FirstValue,
            ..cfg(2.0)
        };
        let s = pelt(&[1.0, 0.0, 1.0, 20.0, 21.0, 20.0], &config).unwrap();
        assert_eq!(s.changepoints, vec![3]);
        assert_eq!(s.states, vec![1.0, 20.0]);
    }

    #[test]
    fn min_segment_length_is_respected() {
        let config = PeltConfig {
            min_segment_length: 2,
            ..cfg(0.0)
        };
        let x = [0.0, 10.0, 0.0, 10.0, 0.0];
        let s = pelt(&x, &config).unwrap();
        let e = exhaustive_segment(&x, &config).unwrap();
        assert_eq!(s.objective, e.objective);
        assert!(s.segment_bounds.iter().all(|r| r.len() >= 2));

        let short = pelt(&[1.0, 2.0, 3.0], &PeltConfig { min_segment_length: 2, ..cfg(0.0) }).unwrap();
        assert!(short.changepoints.is_empty());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(pelt(&[], &cfg(2.0)).is_err());
        assert!(pelt(&[1.0, f64::NAN], &cfg(2.0)).is_err());
        assert!(pelt(&[1.0], &cfg(-1.0)).is_err());
    }

    fn series() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec((0u32..=100).prop_map(f64::from), 2..=16)
    }

    fn rho() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), Just(0.5), Just(2.0), Just(10.0), Just(1000.0)]
    }

    proptest! {
        #[test]
        fn pelt_matches_oracles(x in series(), rho in rho(), min_len in 1usize..=3) {
            let config = PeltConfig { penalty_rho: rho, min_segment_length: min_len, ..PeltConfig::default() };
            let fast = pelt(&x, &config).unwrap();
            let slow = exhaustive_segment(&x, &config).unwrap();
            prop_assert_eq!(fast.objective, slow.objective);
            prop_assert_eq!(&fast.changepoints, &slow.changepoints);
            if min_len == 1 {
                let (op, _) = optimal_partitioning(&x, rho);
                prop_assert!((op - fast.objective).abs() <= 1e-9 * op.abs().max(1.0));
            }
        }

        #[test]
        fn objective_is_consistent(x in series(), rho in rho()) {
            let s = pelt(&x, &cfg(rho)).unwrap();
            prop_assert!(s.changepoints.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(s.states.len(), s.segments());
            prop_assert_eq!(s.segment_bounds.first().unwrap().start, 0);
            prop_assert_eq!(s.segment_bounds.last().unwrap().end, x.len());
            let recomputed: f64 = s.segment_bounds.iter().map(|r| segment_cost(&x[r.clone()]).unwrap()).sum::<f64>()
                + rho * s.changepoints.len() as f64;
            prop_assert!((recomputed - s.objective).abs() <= 1e-9 * recomputed.abs().max(1.0));
        }

        #[test]
        fn changepoint_count_non_increasing_in_penalty(x in series()) {
            let counts: Vec<usize> = [0.0, 0.5, 2.0, 10.0, 100.0, 1000.0]
                .iter()
                .map(|&r| optimal_partitioning(&x, r).1)
                .collect();
            prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{:?}", counts);
            let pelt_counts: Vec<usize> = [0.0, 0.5, 2.0, 10.0, 100.0, 1000.0]
                .iter()
                .map(|&r| pelt(&x, &cfg(r)).unwrap().changepoints.len())
                .collect();
            prop_assert!(pelt_counts.windows(2).all(|w| w[0] >= w[1]), "{:?}", pelt_counts);
        }

        #[test]
        fn shift_invariance(x in series(), rho in rho(), c in -50i32..=50) {
            let shifted: Vec<f64> = x.iter().map(|v| v + f64::from(c)).collect();
            let a = pelt(&x, &cfg(rho)).unwrap();
            let b = pelt(&shifted, &cfg(rho)).unwrap();
            prop_assert_eq!(&a.changepoints, &b.changepoints);
            prop_assert!((a.objective - b.objective).abs() <= 1e-9 * a.objective.abs().max(1.0));
            for (sa, sb) in a.states.iter().zip(&b.states) {
                prop_assert!((sa + f64::from(c) - sb).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn long_series_runs() {
        let x: Vec<f64> = (0..5000).map(|i| ((i / 100) % 3) as f64 * 10.0 + (i % 7) as f64 * 0.1).collect();
        let s = pelt(&x, &cfg(50.0)).unwrap();
        assert_eq!(s.changepoints.len(), 49);
    }
}
