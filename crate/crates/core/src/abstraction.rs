//! Temporal abstraction: per-member monthly series, fine-grain windows,
//! coarse summaries and experiment feature matrices.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    attribute_claim, Category, ClaimRecord, ClaimType, Period, SeriesId, StudyWindow, TaxonomyConfig,
};
use crate::spikes::{SpikeFeatures, SpikeTable};

#[derive(Debug, Clone, PartialEq)]
pub struct FineGrainSeries {
    pub feature: SeriesId,
    pub values: Vec<f64>,
}

/// Bins `(date, contribution)` events into consecutive windows of
/// `window_size_months` covering the observation period.
pub fn paa_segment(
    feature: SeriesId,
    events: &[(NaiveDate, f64)],
    window: &StudyWindow,
    window_size_months: u32,
) -> Result<FineGrainSeries> {
    window.validate(window_size_months)?;
    let n = (window.observation_months / window_size_months) as usize;
    let mut values = vec![0.0; n];
    for &(date, contribution) in events {
        match window.period(date) {
            Period::Observation(month) => values[(month / window_size_months) as usize] += contribution,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "event on {date} lies outside the observation period"
                )))
            }
        }
    }
    Ok(FineGrainSeries { feature, values })
}

/// Sums consecutive runs of `window_size` values.
pub fn rebin(monthly: &[f64], window_size: usize) -> Vec<f64> {
    monthly.chunks(window_size).map(|c| c.iter().sum()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseFeatures {
    pub overall_value: f64,
    pub six_months_value: f64,
    pub three_months_value: f64,
    /// Least-squares slope of the last twelve months, per month.
    pub trend: f64,
    pub acute: bool,
    pub highest_value: f64,
    pub num_above_average: u32,
    pub last_year_monthly: [f64; 12],
}

pub const DEFAULT_ACUTE_K: f64 = 2.0;

/// Coarse summaries of a monthly series (at least twelve months long).
///
/// `acute` fires when the highest month exceeds the mean by more than
/// `acute_k` sample standard deviations; a flat series is never acute.
pub fn extract_coarse(monthly: &[f64], acute_k: f64) -> Result<CoarseFeatures> {
    let n = monthly.len();
    if n < 12 {
        return Err(Error::InvalidInput(format!(
            "coarse features need at least 12 monthly values, got {n}"
        )));
    }
    let tail_sum = |k: usize| monthly[n - k..].iter().sum::<f64>();
    let overall_value: f64 = monthly.iter().sum();
    let mean = overall_value / n as f64;
    let highest_value = monthly.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut last_year_monthly = [0.0; 12];
    last_year_monthly.copy_from_slice(&monthly[n - 12..]);
    // Month indices 0..11 centred at 5.5; the centred squares sum to 143.
    let trend = last_year_monthly
        .iter()
        .enumerate()
        .map(|(i, y)| (i as f64 - 5.5) * y)
        .sum::<f64>()
        / 143.0;

    let variance = monthly.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let acute = variance > 0.0 && highest_value > mean + acute_k * variance.sqrt();

    Ok(CoarseFeatures {
        overall_value,
        six_months_value: tail_sum(6),
        three_months_value: tail_sum(3),
        trend,
        acute,
        highest_value,
        num_above_average: monthly.iter().filter(|&&x| x > mean).count() as u32,
        last_year_monthly,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemberSeries {
    /// Monthly observation-period values of every series with at least one
    /// contribution. Missing series are all zero.
    pub monthly: BTreeMap<SeriesId, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub window: StudyWindow,
    pub window_size_months: u32,
    pub taxonomy: TaxonomyConfig,
    pub members: BTreeMap<String, MemberSeries>,
    /// Result-period paid cents.
    pub targets: BTreeMap<String, u64>,
    /// Observation-period paid cents.
    pub observation_cost: BTreeMap<String, u64>,
    /// Claims outside the study span or of members not in the cohort.
    pub ignored_claims: usize,
}

impl Corpus {
    pub fn fine_grain(&self, monthly: &[f64]) -> Vec<f64> {
        rebin(monthly, self.window_size_months as usize)
    }

    pub fn fine_len(&self) -> usize {
        (self.window.observation_months / self.window_size_months) as usize
    }

    /// Fine-grain values of one member's series (zeros when absent).
    pub fn series(&self, member: &str, series: SeriesId) -> Vec<f64> {
        match self.members.get(member).and_then(|m| m.monthly.get(&series)) {
            Some(monthly) => self.fine_grain(monthly),
            None => vec![0.0; self.fine_len()],
        }
    }
}

/// Builds monthly series, targets and observation costs for `members`.
/// Every member of the cohort appears, with or without claims.
pub fn build_corpus(
    claims: &[ClaimRecord],
    members: &BTreeSet<String>,
    taxonomy: &TaxonomyConfig,
    window: &StudyWindow,
    window_size_months: u32,
) -> Result<Corpus> {
    window.validate(window_size_months)?;
    taxonomy.validate()?;
    let months = window.observation_months as usize;

    let mut series: BTreeMap<String, MemberSeries> =
        members.iter().map(|m| (m.clone(), MemberSeries::default())).collect();
    let mut targets: BTreeMap<String, u64> = members.iter().map(|m| (m.clone(), 0)).collect();
    let mut observation_cost = targets.clone();
    let mut ignored = 0usize;

    for claim in claims {
        let Some(member) = series.get_mut(&claim.member_id) else {
            ignored += 1;
            continue;
        };
        match window.period(claim.service_date) {
            Period::Observation(month) => {
                for (id, contribution) in attribute_claim(claim, taxonomy) {
                    member.monthly.entry(id).or_insert_with(|| vec![0.0; months])[month as usize] +=
                        contribution;
                }
                *observation_cost.get_mut(&claim.member_id).expect("cohort member") +=
                    claim.paid_amount_cents;
            }
            Period::Result(_) => {
                *targets.get_mut(&claim.member_id).expect("cohort member") += claim.paid_amount_cents;
            }
            Period::Outside => ignored += 1,
        }
    }
    if ignored > 0 {
        log::info!("ignored {ignored} claims outside the cohort or study span");
    }
    Ok(Corpus {
        window: *window,
        window_size_months,
        taxonomy: taxonomy.clone(),
        members: series,
        targets,
        observation_cost,
        ignored_claims: ignored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    C,
    #[serde(rename = "C/F")]
    CF,
    F,
    FS,
}

impl FeatureSet {
    pub fn label(self) -> &'static str {
        match self {
            FeatureSet::C => "C",
            FeatureSet::CF => "C/F",
            FeatureSet::F => "F",
            FeatureSet::FS => "FS",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C" => Ok(FeatureSet::C),
            "CF" | "C/F" | "C_F" => Ok(FeatureSet::CF),
            "F" => Ok(FeatureSet::F),
            "FS" => Ok(FeatureSet::FS),
            other => Err(format!("unknown feature set `{other}` (expected C, CF, F or FS)")),
        }
    }
}

/// Which of the three spike features an FS matrix carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpikeSelection {
    pub count_of_spike: bool,
    pub amount_of_positive_changes: bool,
    pub amount_of_negative_changes: bool,
}

impl SpikeSelection {
    pub const ALL: SpikeSelection = SpikeSelection {
        count_of_spike: true,
        amount_of_positive_changes: true,
        amount_of_negative_changes: true,
    };

    /// The three leave-one-out selections, in feature order.
    pub fn ablations() -> [SpikeSelection; 3] {
        [
            SpikeSelection {
                count_of_spike: false,
                ..Self::ALL
            },
            SpikeSelection {
                amount_of_positive_changes: false,
                ..Self::ALL
            },
            SpikeSelection {
                amount_of_negative_changes: false,
                ..Self::ALL
            },
        ]
    }

    pub fn flags(&self) -> [bool; 3] {
        [
            self.count_of_spike,
            self.amount_of_positive_changes,
            self.amount_of_negative_changes,
        ]
    }
}

impl Default for SpikeSelection {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetSpec {
    pub set: FeatureSet,
    pub categories: BTreeSet<Category>,
    #[serde(default)]
    pub spikes: SpikeSelection,
    #[serde(default = "default_acute_k")]
    pub acute_k: f64,
}

fn default_acute_k() -> f64 {
    DEFAULT_ACUTE_K
}

impl FeatureSetSpec {
    pub fn new(set: FeatureSet, categories: impl IntoIterator<Item = Category>) -> Self {
        FeatureSetSpec {
            set,
            categories: categories.into_iter().collect(),
            spikes: SpikeSelection::ALL,
            acute_k: DEFAULT_ACUTE_K,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::Config("feature set needs at least one category".into()));
        }
        Ok(())
    }

    /// Feature suffixes per series, in column order.
    pub fn feature_suffixes(&self, fine_len: usize) -> Vec<String> {
        let coarse = ["overall", "six_months", "three_months", "trend"];
        let change = ["acute", "highest", "num_above_average"];
        let mut out: Vec<String> = Vec::new();
        match self.set {
            FeatureSet::C => out.extend(coarse.iter().map(|s| s.to_string())),
            FeatureSet::CF => {
                out.extend(coarse.iter().chain(&change).map(|s| s.to_string()));
                out.extend((1..=12).map(|i| format!("ly{i:02}")));
            }
            FeatureSet::F | FeatureSet::FS => {
                out.extend((1..=fine_len).map(|i| format!("w{i:02}")));
                if self.set == FeatureSet::FS {
                    out.extend(
                        SpikeFeatures::NAMES
                            .iter()
                            .zip(self.spikes.flags())
                            .filter(|(_, on)| *on)
                            .map(|(name, _)| name.to_string()),
                    );
                }
            }
        }
        out
    }
}

/// Dense row-major matrix keyed by member id, with result-period targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    member_ids: Vec<String>,
    feature_names: Vec<String>,
    values: Vec<f64>,
    targets: Vec<u64>,
}

impl FeatureMatrix {
    pub fn new(
        member_ids: Vec<String>,
        feature_names: Vec<String>,
        values: Vec<f64>,
        targets: Vec<u64>,
    ) -> Result<Self> {
        if member_ids.len() != targets.len() {
            return Err(Error::Dimension {
                expected: member_ids.len(),
                actual: targets.len(),
            });
        }
        if values.len() != member_ids.len() * feature_names.len() {
            return Err(Error::Dimension {
                expected: member_ids.len() * feature_names.len(),
                actual: values.len(),
            });
        }
        let mut seen = HashSet::new();
        if let Some(dup) = feature_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::InvalidInput(format!("duplicate feature name `{dup}`")));
        }
        Ok(FeatureMatrix {
            member_ids,
            feature_names,
            values,
            targets,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.member_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.feature_names.len()
    }

    pub fn member_ids(&self) -> &[String] {
        &self.member_ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn targets(&self) -> &[u64] {
        &self.targets
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_cols();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            member_ids: rows.iter().map(|&r| self.member_ids[r].clone()).collect(),
            feature_names: self.feature_names.clone(),
            values,
            targets: rows.iter().map(|&r| self.targets[r]).collect(),
        }
    }

    /// Keeps the columns for which `keep` returns true.
    pub fn select_columns(&self, keep: impl Fn(&str) -> bool) -> FeatureMatrix {
        let cols: Vec<usize> = (0..self.n_cols()).filter(|&j| keep(&self.feature_names[j])).collect();
        let mut values = Vec::with_capacity(self.n_rows() * cols.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            values.extend(cols.iter().map(|&j| row[j]));
        }
        FeatureMatrix {
            member_ids: self.member_ids.clone(),
            feature_names: cols.iter().map(|&j| self.feature_names[j].clone()).collect(),
            values,
            targets: self.targets.clone(),
        }
    }

    pub fn write_csv(&self, sink: impl Write) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        let mut header = Vec::with_capacity(self.n_cols() + 2);
        header.push("member_id");
        header.extend(self.feature_names.iter().map(String::as_str));
        header.push("target_cents");
        writer.write_record(&header)?;
        let mut record = Vec::with_capacity(self.n_cols() + 2);
        for i in 0..self.n_rows() {
            record.clear();
            record.push(self.member_ids[i].clone());
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            record.push(self.targets[i].to_string());
            writer.write_record(&record)?;
        }
        writer.flush().map_err(|e| Error::io("<matrix sink>", e))?;
        Ok(())
    }

    pub fn read_csv(source: impl Read) -> Result<FeatureMatrix> {
        let mut reader = csv::Reader::from_reader(source);
        let header = reader.headers()?.clone();
        let width = header.len();
        if width < 2 || &header[0] != "member_id" || &header[width - 1] != "target_cents" {
            return Err(Error::Parse {
                line: 1,
                field: "header",
                message: "matrix must start with `member_id` and end with `target_cents`".into(),
            });
        }
        let feature_names: Vec<String> = header.iter().skip(1).take(width - 2).map(str::to_owned).collect();
        let (mut ids, mut values, mut targets) = (Vec::new(), Vec::new(), Vec::new());
        let mut record = csv::StringRecord::new();
        while reader.read_record(&mut record)? {
            let line = record.position().map_or(0, |p| p.line());
            ids.push(record[0].to_owned());
            for (j, raw) in record.iter().enumerate().skip(1).take(width - 2) {
                let v: f64 = raw.parse().map_err(|_| Error::Parse {
                    line,
                    field: "feature",
                    message: format!("column {j}: `{raw}` is not a number"),
                })?;
                values.push(v);
            }
            targets.push(record[width - 1].parse().map_err(|_| Error::Parse {
                line,
                field: "target_cents",
                message: format!("`{}` is not a non-negative integer", &record[width - 1]),
            })?);
        }
        FeatureMatrix::new(ids, feature_names, values, targets)
    }
}

fn push_coarse(row: &mut Vec<f64>, set: FeatureSet, c: &CoarseFeatures) {
    row.extend([c.overall_value, c.six_months_value, c.three_months_value, c.trend]);
    if set == FeatureSet::CF {
        row.extend([
            f64::from(u8::from(c.acute)),
            c.highest_value,
            f64::from(c.num_above_average),
        ]);
        row.extend_from_slice(&c.last_year_monthly);
    }
}

/// Assembles the matrix for one feature set. Columns are named
/// `<series>.<feature>` and ordered by category, series, then feature.
pub fn assemble_matrix(corpus: &Corpus, spec: &FeatureSetSpec, spikes: Option<&SpikeTable>) -> Result<FeatureMatrix> {
    spec.validate()?;
    match (spec.set, spikes) {
        (FeatureSet::FS, None) => {
            return Err(Error::InvalidInput("the FS feature set needs spike features".into()))
        }
        (set, Some(_)) if set != FeatureSet::FS => {
            return Err(Error::InvalidInput(format!("spike features supplied for the {set} feature set")))
        }
        _ => {}
    }

    let series: Vec<SeriesId> = spec
        .categories
        .iter()
        .flat_map(|&c| corpus.taxonomy.series_in(c))
        .collect();
    let fine_len = corpus.fine_len();
    let suffixes = spec.feature_suffixes(fine_len);
    let feature_names: Vec<String> = series
        .iter()
        .flat_map(|s| suffixes.iter().map(move |f| format!("{s}.{f}")))
        .collect();

    let months = corpus.window.observation_months as usize;
    let zeros = vec![0.0; months];
    let zero_coarse = extract_coarse(&zeros, spec.acute_k)?;
    let no_spikes = BTreeMap::new();

    let mut values = Vec::with_capacity(corpus.members.len() * feature_names.len());
    let mut row = Vec::with_capacity(feature_names.len());
    for (member, data) in &corpus.members {
        row.clear();
        let member_spikes = spikes.and_then(|t| t.get(member)).unwrap_or(&no_spikes);
        for id in &series {
            let monthly = data.monthly.get(id);
            match spec.set {
                FeatureSet::C | FeatureSet::CF => {
                    let coarse = match monthly {
                        Some(m) => extract_coarse(m, spec.acute_k)?,
                        None => zero_coarse,
                    };
                    push_coarse(&mut row, spec.set, &coarse);
                }
                FeatureSet::F | FeatureSet::FS => {
                    match monthly {
                        Some(m) => row.extend(corpus.fine_grain(m)),
                        None => row.extend(std::iter::repeat(0.0).take(fine_len)),
                    }
                    if spec.set == FeatureSet::FS {
                        let f = member_spikes.get(id).copied().unwrap_or_default();
                        row.extend(
                            f.as_array()
                                .into_iter()
                                .zip(spec.spikes.flags())
                                .filter(|(_, on)| *on)
                                .map(|(v, _)| v),
                        );
                    }
                }
            }
        }
        debug_assert_eq!(row.len(), feature_names.len());
        values.extend_from_slice(&row);
    }

    let member_ids: Vec<String> = corpus.members.keys().cloned().collect();
    let targets = member_ids.iter().map(|m| corpus.targets.get(m).copied().unwrap_or(0)).collect();
    FeatureMatrix::new(member_ids, feature_names, values, targets)
}

/// Total observation-period cost (both cost series) per member, in cents.
pub fn observation_totals(corpus: &Corpus) -> BTreeMap<String, u64> {
    corpus
        .members
        .iter()
        .map(|(m, data)| {
            let total: f64 = [ClaimType::Medical, ClaimType::Pharmacy]
                .iter()
                .filter_map(|&t| data.monthly.get(&SeriesId::Cost(t)))
                .flatten()
                .sum();
            (m.clone(), total as u64)
        })
        .collect()
}

/// Writes `member_id,observation_cents` rows.
pub fn write_member_costs(costs: &BTreeMap<String, u64>, sink: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["member_id", "observation_cents"])?;
    for (m, c) in costs {
        writer.write_record([m.as_str(), &c.to_string()])?;
    }
    writer.flush().map_err(|e| Error::io("<costs sink>", e))?;
    Ok(())
}

pub fn read_member_costs(source: impl Read) -> Result<BTreeMap<String, u64>> {
    let mut reader = csv::Reader::from_reader(source);
    if reader.headers()?.iter().collect::<Vec<_>>() != ["member_id", "observation_cents"] {
        return Err(Error::Parse {
            line: 1,
            field: "header",
            message: "expected `member_id,observation_cents`".into(),
        });
    }
    let mut out = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let cents = row[1].parse().map_err(|_| Error::Parse {
            line,
            field: "observation_cents",
            message: format!("`{}` is not a non-negative integer", &row[1]),
        })?;
        out.insert(row[0].to_owned(), cents);
    }
    Ok(out)
}
