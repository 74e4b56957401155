//! Spike detection features from segment states.
//!
//! Consecutive segment states are labelled as increases or decreases; a
//! spike is an increase immediately followed by a decrease. Each spike adds
//! its increase to the positive total and the decrease that completes it to
//! the negative total.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abstraction::Corpus;
use crate::changepoint::{pelt, PeltConfig};
use crate::error::Result;
use crate::ingest::{Category, SeriesId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChangeLabel {
    #[serde(rename = "I")]
    Increase,
    #[serde(rename = "D")]
    Decrease,
    #[serde(rename = "N")]
    None,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChangeSequence {
    pub labels: Vec<ChangeLabel>,
    pub amounts: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpikeFeatures {
    pub count_of_spike: u32,
    pub amount_of_positive_changes: f64,
    pub amount_of_negative_changes: f64,
}

impl SpikeFeatures {
    pub const NAMES: [&'static str; 3] = [
        "count_of_spike",
        "amount_of_positive_changes",
        "amount_of_negative_changes",
    ];

    pub fn as_array(&self) -> [f64; 3] {
        [
            f64::from(self.count_of_spike),
            self.amount_of_positive_changes,
            self.amount_of_negative_changes,
        ]
    }
}

pub fn label_changes(states: &[f64]) -> ChangeSequence {
    let (labels, amounts) = states
        .windows(2)
        .map(|w| {
            let (prev, cur) = (w[0], w[1]);
            if cur > prev {
                (ChangeLabel::Increase, cur - prev)
            } else if cur < prev {
                (ChangeLabel::Decrease, prev - cur)
            } else {
                (ChangeLabel::None, 0.0)
            }
        })
        .unzip();
    ChangeSequence { labels, amounts }
}

/// Positions `j` where an increase at `j` is followed by a decrease at
/// `j + 1`.
pub fn spike_positions(seq: &ChangeSequence) -> Vec<usize> {
    seq.labels
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] == ChangeLabel::Increase && w[1] == ChangeLabel::Decrease)
        .map(|(j, _)| j)
        .collect()
}

pub fn spike_features(seq: &ChangeSequence) -> SpikeFeatures {
    let mut out = SpikeFeatures::default();
    for j in spike_positions(seq) {
        out.count_of_spike += 1;
        out.amount_of_positive_changes += seq.amounts[j];
        out.amount_of_negative_changes += seq.amounts[j + 1];
    }
    out
}

/// Everything computed along the way for one series, for debugging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeDiagnostic {
    pub changepoints: Vec<usize>,
    pub states: Vec<f64>,
    pub labels: Vec<ChangeLabel>,
    pub spikes: Vec<usize>,
    pub features: SpikeFeatures,
}

/// How series are prepared and segmented before spike extraction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SpikeConfig {
    pub pelt: PeltConfig,
    /// Penalty overrides per category.
    pub category_rho: BTreeMap<Category, f64>,
    /// Divide each series by its sample standard deviation (when non-zero)
    /// before segmentation.
    pub standardize: bool,
}

impl SpikeConfig {
    pub fn pelt_for(&self, category: Category) -> PeltConfig {
        let mut config = self.pelt;
        if let Some(&rho) = self.category_rho.get(&category) {
            config.penalty_rho = rho;
        }
        config
    }
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Segment one fine-grain series and extract its spike features.
pub fn series_spike_diagnostic(values: &[f64], pelt_config: &PeltConfig, standardize: bool) -> Result<SpikeDiagnostic> {
    let scaled;
    let input = if standardize {
        let sd = sample_std(values);
        if sd > 0.0 {
            scaled = values.iter().map(|x| x / sd).collect::<Vec<_>>();
            &scaled[..]
        } else {
            values
        }
    } else {
        values
    };
    let segmentation = pelt(input, pelt_config)?;
    let seq = label_changes(&segmentation.states);
    Ok(SpikeDiagnostic {
        spikes: spike_positions(&seq),
        features: spike_features(&seq),
        changepoints: segmentation.changepoints,
        states: segmentation.states,
        labels: seq.labels,
    })
}

pub fn series_spike_features(values: &[f64], pelt_config: &PeltConfig, standardize: bool) -> Result<SpikeFeatures> {
    series_spike_diagnostic(values, pelt_config, standardize).map(|d| d.features)
}

/// Spike features per member and series. Series absent from the corpus
/// are all-zero and therefore spike-free, so they are omitted.
pub type SpikeTable = BTreeMap<String, BTreeMap<SeriesId, SpikeFeatures>>;

pub fn corpus_spike_features(corpus: &Corpus, config: &SpikeConfig) -> Result<SpikeTable> {
    corpus
        .members
        .par_iter()
        .map(|(member, data)| {
            let mut features = BTreeMap::new();
            for (&series, monthly) in &data.monthly {
                let fine = corpus.fine_grain(monthly);
                let f = series_spike_features(&fine, &config.pelt_for(series.category()), config.standardize)?;
                if f != SpikeFeatures::default() {
                    features.insert(series, f);
                }
            }
            Ok((member.clone(), features))
        })
        .collect()
}
