//! Feature-set experiment grid: every cell shares one bucket scheme, one
//! tuning holdout and one fold plan, so paired tests compare features only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abstraction::{assemble_matrix, Corpus, FeatureMatrix, FeatureSet, FeatureSetSpec, SpikeSelection};
use crate::error::{Error, Result};
use crate::eval::{
    build_buckets, cross_validate, paired_t_test, plan_evaluation, BucketMapping, BucketScheme, EvalReport,
    EvaluationPlan, FoldConfig, PenaltyMatrix, TTest, DEFAULT_BUCKETS,
};
use crate::ingest::Category;
use crate::model::TrainConfig;
use crate::spikes::{corpus_spike_features, SpikeConfig, SpikeFeatures, SpikeTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub feature_sets: Vec<FeatureSet>,
    pub category_combos: Vec<BTreeSet<Category>>,
    /// Adds the three leave-one-spike-feature-out cells per category combo.
    pub ablations: bool,
    /// Root seed for folds and any row subsampling.
    pub seed: u64,
    pub window_months: u32,
    pub buckets: usize,
    /// Boundary multiplier for result and predicted costs; by default the
    /// ratio of result to observation months.
    pub bucket_scale: Option<f64>,
    pub model: TrainConfig,
    pub folds: FoldConfig,
    pub spikes: SpikeConfig,
    pub acute_k: f64,
    pub claims: Option<PathBuf>,
    pub enrollment: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            feature_sets: vec![FeatureSet::FS, FeatureSet::CF, FeatureSet::F, FeatureSet::C],
            category_combos: vec![[Category::Cost, Category::Visit].into_iter().collect()],
            ablations: false,
            seed: 42,
            window_months: 1,
            buckets: DEFAULT_BUCKETS,
            bucket_scale: None,
            model: TrainConfig::default(),
            folds: FoldConfig::default(),
            spikes: SpikeConfig::default(),
            acute_k: crate::abstraction::DEFAULT_ACUTE_K,
            claims: None,
            enrollment: None,
            taxonomy: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.feature_sets.is_empty() && !self.ablations {
            return Err(Error::Config("experiment needs at least one feature set".into()));
        }
        if self.category_combos.is_empty() || self.category_combos.iter().any(BTreeSet::is_empty) {
            return Err(Error::Config("experiment needs non-empty category combinations".into()));
        }
        let unique: BTreeSet<_> = self.feature_sets.iter().collect();
        if unique.len() != self.feature_sets.len() {
            return Err(Error::Config("feature sets are listed more than once".into()));
        }
        if let Some(s) = self.bucket_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("bucket scale must be positive, got {s}")));
            }
        }
        self.model.validate()?;
        self.spikes.pelt.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(format!("experiment: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Cells in report order: per combo the listed feature sets, then the
    /// ablation rows (complete FS first, then each feature removed).
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut out = Vec::new();
        for combo in &self.category_combos {
            let spec = |set| FeatureSetSpec {
                acute_k: self.acute_k,
                ..FeatureSetSpec::new(set, combo.iter().copied())
            };
            for &set in &self.feature_sets {
                out.push(CellSpec {
                    features: spec(set),
                    ablation: false,
                });
            }
            if self.ablations {
                if !self.feature_sets.contains(&FeatureSet::FS) {
                    out.push(CellSpec {
                        features: spec(FeatureSet::FS),
                        ablation: true,
                    });
                }
                for selection in SpikeSelection::ablations() {
                    out.push(CellSpec {
                        features: FeatureSetSpec {
                            spikes: selection,
                            ..spec(FeatureSet::FS)
                        },
                        ablation: true,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub features: FeatureSetSpec,
    /// Only part of the ablation family, not the main comparison.
    pub ablation: bool,
}

pub fn combo_label(categories: &BTreeSet<Category>) -> String {
    categories.iter().map(|c| c.as_str()).collect::<Vec<_>>().join("+")
}

impl CellSpec {
    pub fn removed_spike_feature(&self) -> Option<&'static str> {
        if self.features.set != FeatureSet::FS {
            return None;
        }
        SpikeFeatures::NAMES
            .iter()
            .zip(self.features.spikes.flags())
            .find(|(_, on)| !*on)
            .map(|(name, _)| *name)
    }

    pub fn label(&self) -> String {
        let mut label = format!("{} {}", self.features.set, combo_label(&self.features.categories));
        if let Some(removed) = self.removed_spike_feature() {
            let _ = write!(label, " -{removed}");
        }
        label
    }

    /// File-name-safe identifier.
    pub fn key(&self) -> String {
        self.label().replace('/', "").replace(' ', "_")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub label: String,
    pub cell: CellSpec,
    pub n_features: usize,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    FeatureSets,
    SpikeAblation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub family: Family,
    pub a: String,
    pub b: String,
    /// Paired on per-fold MAPE, differences taken as `a − b`.
    pub test: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub n_members: usize,
    pub n_holdout: usize,
    pub n_evaluated: usize,
    pub k_folds: usize,
    pub bucket_boundaries: Vec<u64>,
    pub bucket_scale: f64,
    pub cells: Vec<CellReport>,
    pub comparisons: Vec<Comparison>,
}

impl ExperimentReport {
    pub fn cell(&self, label: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.label == label)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Everything an experiment needs besides the feature matrices.
pub struct ExperimentInputs {
    pub observation_cost: BTreeMap<String, u64>,
    pub observation_months: u32,
    pub result_months: u32,
}

impl ExperimentInputs {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        ExperimentInputs {
            observation_cost: corpus.observation_cost.clone(),
            observation_months: corpus.window.observation_months,
            result_months: corpus.window.result_months,
        }
    }
}

/// Builds one matrix per cell. Spike features are computed once and shared.
pub fn build_cell_matrices(corpus: &Corpus, spec: &ExperimentSpec) -> Result<Vec<(CellSpec, FeatureMatrix)>> {
    spec.validate()?;
    let cells = spec.cells();
    let spikes: Option<SpikeTable> = if cells.iter().any(|c| c.features.set == FeatureSet::FS) {
        Some(corpus_spike_features(corpus, &spec.spikes)?)
    } else {
        None
    };
    cells
        .into_par_iter()
        .map(|cell| {
            let table = spikes.as_ref().filter(|_| cell.features.set == FeatureSet::FS);
            let matrix = assemble_matrix(corpus, &cell.features, table)
                .map_err(|e| Error::InvalidInput(format!("cell {}: {e}", cell.label())))?;
            Ok((cell, matrix))
        })
        .collect()
}

/// Cross-validates every cell and runs the paired tests.
pub fn evaluate_cells(
    cells: &[(CellSpec, FeatureMatrix)],
    inputs: &ExperimentInputs,
    spec: &ExperimentSpec,
) -> Result<ExperimentReport> {
    spec.validate()?;
    let first = cells
        .first()
        .ok_or_else(|| Error::InvalidInput("experiment has no cells".into()))?;
    let members = first.1.member_ids().to_vec();
    if let Some((cell, _)) = cells.iter().find(|(_, m)| m.member_ids() != members.as_slice()) {
        return Err(Error::InvalidInput(format!(
            "cell {} covers different members than {}",
            cell.label(),
            first.0.label()
        )));
    }

    let buckets: BucketScheme = build_buckets(&inputs.observation_cost, spec.buckets)?;
    let mapping = BucketMapping {
        boundary_scale: spec.bucket_scale.unwrap_or_else(|| {
            BucketMapping::for_spans(inputs.observation_months, inputs.result_months).boundary_scale
        }),
    };
    let penalty = PenaltyMatrix::absolute_difference(spec.buckets);
    let plan: EvaluationPlan = plan_evaluation(&members, &spec.folds, spec.seed, Some(&buckets.members))?;
    let model = TrainConfig {
        seed: spec.seed,
        ..spec.model.clone()
    };

    let reports: Vec<Result<CellReport>> = cells
        .par_iter()
        .map(|(cell, matrix)| {
            let label = cell.label();
            log::info!("cell {label}: {} features", matrix.n_cols());
            let eval = cross_validate(matrix, &plan, &buckets, &mapping, &penalty, &model)
                .map_err(|e| Error::InvalidInput(format!("cell {label}: {e}")))?;
            log::info!("cell {label}: mape {:.4}", eval.mape_overall);
            Ok(CellReport {
                label,
                cell: cell.clone(),
                n_features: matrix.n_cols(),
                eval,
            })
        })
        .collect();
    let reports: Vec<CellReport> = reports.into_iter().collect::<Result<_>>()?;

    let comparisons = compare(&reports)?;
    Ok(ExperimentReport {
        seed: spec.seed,
        n_members: members.len(),
        n_holdout: plan.holdout.len(),
        n_evaluated: plan.folds.assignment.len(),
        k_folds: plan.folds.k_folds,
        bucket_boundaries: buckets.boundaries,
        bucket_scale: mapping.boundary_scale,
        cells: reports,
        comparisons,
    })
}

/// Pairs within each category combo: all main cells against each other,
/// and complete FS against each ablation. Each family gets its own
/// Bonferroni factor.
fn compare(reports: &[CellReport]) -> Result<Vec<Comparison>> {
    let mut pairs: Vec<(Family, &CellReport, &CellReport)> = Vec::new();
    let combos: BTreeSet<&BTreeSet<Category>> = reports.iter().map(|r| &r.cell.features.categories).collect();
    for combo in combos {
        let in_combo: Vec<&CellReport> = reports.iter().filter(|r| &r.cell.features.categories == combo).collect();
        let main: Vec<&CellReport> = in_combo.iter().copied().filter(|r| !r.cell.ablation).collect();
        for (i, a) in main.iter().enumerate() {
            for b in &main[i + 1..] {
                pairs.push((Family::FeatureSets, a, b));
            }
        }
        let complete = in_combo
            .iter()
            .find(|r| r.cell.features.set == FeatureSet::FS && r.cell.removed_spike_feature().is_none());
        if let Some(full) = complete {
            for ablated in in_combo.iter().filter(|r| r.cell.removed_spike_feature().is_some()) {
                pairs.push((Family::SpikeAblation, full, ablated));
            }
        }
    }
    let family_size = |f: Family| pairs.iter().filter(|p| p.0 == f).count();
    pairs
        .iter()
        .map(|&(family, a, b)| {
            Ok(Comparison {
                family,
                a: a.label.clone(),
                b: b.label.clone(),
                test: paired_t_test(&a.eval.fold_mapes, &b.eval.fold_mapes, family_size(family))?,
            })
        })
        .collect()
}

pub fn run_experiment(corpus: &Corpus, spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let cells = build_cell_matrices(corpus, spec)?;
    evaluate_cells(&cells, &ExperimentInputs::from_corpus(corpus), spec)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Text tables: MAPE and penalty by actual bucket, bucket classification,
/// then the paired tests.
pub fn render_tables(report: &ExperimentReport) -> String {
    let k = report.bucket_boundaries.len() + 1;
    let width = report.cells.iter().map(|c| c.label.len()).max().unwrap_or(8).max(8);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "members {} (holdout {}, evaluated {} in {} folds), seed {}",
        report.n_members, report.n_holdout, report.n_evaluated, report.k_folds, report.seed
    );
    let boundaries: Vec<String> = report.bucket_boundaries.iter().map(|b| format!("{:.2}", *b as f64 / 100.0)).collect();
    let _ = writeln!(
        out,
        "bucket boundaries (observation $): {}; result-side scale {}",
        boundaries.join(", "),
        report.bucket_scale
    );

    let header = |out: &mut String, title: &str, last: &str| {
        let _ = writeln!(out, "\n{title}");
        let _ = write!(out, "{:<width$}", "features");
        for b in 1..=k {
            let _ = write!(out, " {:>9}", format!("bucket {b}"));
        }
        let _ = writeln!(out, " {last:>9}");
    };

    header(&mut out, "MAPE by actual cost bucket", "all");
    for c in &report.cells {
        let _ = write!(out, "{:<width$}", c.label);
        for v in &c.eval.pooled.mape_per_bucket {
            let _ = write!(out, " {:>9}", opt(*v, 4));
        }
        let _ = writeln!(out, " {:>9.4}", c.eval.mape_overall);
    }

    header(&mut out, "Penalty error by actual cost bucket", "all");
    for c in &report.cells {
        let _ = write!(out, "{:<width$}", c.label);
        for v in &c.eval.pooled.penalty_per_bucket {
            let _ = write!(out, " {:>9}", opt(*v, 4));
        }
        let _ = writeln!(out, " {:>9.4}", c.eval.pooled.penalty_error);
    }

    header(&mut out, "Recall by cost bucket", "accuracy");
    for c in &report.cells {
        let _ = write!(out, "{:<width$}", c.label);
        for v in &c.eval.pooled.recall {
            let _ = write!(out, " {:>9}", opt(*v, 4));
        }
        let _ = writeln!(out, " {:>9.4}", c.eval.pooled.accuracy);
    }

    header(&mut out, "Precision by cost bucket", "");
    for c in &report.cells {
        let _ = write!(out, "{:<width$}", c.label);
        for v in &c.eval.pooled.precision {
            let _ = write!(out, " {:>9}", opt(*v, 4));
        }
        let _ = writeln!(out);
    }

    if !report.comparisons.is_empty() {
        let _ = writeln!(out, "\nPaired t-tests on fold MAPE (difference = a - b)");
        let pw = report
            .comparisons
            .iter()
            .map(|c| c.a.len() + c.b.len() + 4)
            .max()
            .unwrap_or(10);
        let _ = writeln!(
            out,
            "{:<pw$} {:>10} {:>9} {:>10} {:>10} {:>8}",
            "pair", "mean diff", "t", "p", "p bonf", "tests"
        );
        for c in &report.comparisons {
            let family = report.comparisons.iter().filter(|o| o.family == c.family).count();
            let _ = writeln!(
                out,
                "{:<pw$} {:>10.4} {:>9.3} {:>10.3e} {:>10.3e} {:>8}",
                format!("{} vs {}", c.a, c.b),
                c.test.mean_difference,
                c.test.t,
                c.test.p_two_sided,
                c.test.p_bonferroni,
                family
            );
        }
    }
    out
}
