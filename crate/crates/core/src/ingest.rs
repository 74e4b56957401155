//! Claim and enrollment parsing, taxonomy attribution and targets.
//!
//! Money is carried as integer cents all the way to the feature matrix so
//! that per-window sums are exact and reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CLAIMS_HEADER: [&str; 9] = [
    "member_id",
    "claim_id",
    "service_date",
    "claim_type",
    "paid_amount_cents",
    "place_of_service",
    "diagnosis_codes",
    "procedure_codes",
    "drug_code",
];

pub const ENROLLMENT_HEADER: [&str; 3] = ["member_id", "coverage_start", "coverage_end"];

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimType {
    Medical,
    Pharmacy,
}

impl ClaimType {
    pub fn as_str(self) -> &'static str {
        match self {
            ClaimType::Medical => "medical",
            ClaimType::Pharmacy => "pharmacy",
        }
    }
}

impl FromStr for ClaimType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "medical" => Ok(ClaimType::Medical),
            "pharmacy" => Ok(ClaimType::Pharmacy),
            other => Err(format!("unknown claim type `{other}`")),
        }
    }
}

/// The seven visit categories. Declaration order is the column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceOfService {
    Office,
    Inpatient,
    Outpatient,
    Lab,
    Emergency,
    Home,
    Other,
}

impl PlaceOfService {
    pub const ALL: [PlaceOfService; 7] = [
        PlaceOfService::Office,
        PlaceOfService::Inpatient,
        PlaceOfService::Outpatient,
        PlaceOfService::Lab,
        PlaceOfService::Emergency,
        PlaceOfService::Home,
        PlaceOfService::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlaceOfService::Office => "office",
            PlaceOfService::Inpatient => "inpatient",
            PlaceOfService::Outpatient => "outpatient",
            PlaceOfService::Lab => "lab",
            PlaceOfService::Emergency => "emergency",
            PlaceOfService::Home => "home",
            PlaceOfService::Other => "other",
        }
    }
}

impl FromStr for PlaceOfService {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        PlaceOfService::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown place of service `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimRecord {
    pub member_id: String,
    pub claim_id: String,
    pub service_date: NaiveDate,
    pub claim_type: ClaimType,
    pub paid_amount_cents: u64,
    pub place_of_service: PlaceOfService,
    pub diagnosis_codes: Vec<String>,
    pub procedure_codes: Vec<String>,
    pub drug_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrollmentRecord {
    pub member_id: String,
    pub coverage_start: NaiveDate,
    pub coverage_end: NaiveDate,
}

/// Observation period followed immediately by the result period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyWindow {
    pub observation_start: NaiveDate,
    pub observation_months: u32,
    pub result_months: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Period {
    /// Zero-based month offset from the observation start.
    Observation(u32),
    /// Zero-based month offset from the result start.
    Result(u32),
    Outside,
}

impl Default for StudyWindow {
    fn default() -> Self {
        StudyWindow {
            observation_start: NaiveDate::from_ymd_opt(2013, 10, 1).expect("valid date"),
            observation_months: 24,
            result_months: 12,
        }
    }
}

impl StudyWindow {
    pub fn validate(&self, window_size_months: u32) -> Result<()> {
        if window_size_months == 0 {
            return Err(Error::Config("window size must be positive".into()));
        }
        if self.observation_months < window_size_months {
            return Err(Error::Config(format!(
                "observation period of {} months is shorter than the {}-month window",
                self.observation_months, window_size_months
            )));
        }
        if self.observation_months % window_size_months != 0 {
            return Err(Error::Config(format!(
                "window size {} does not divide the {}-month observation period",
                window_size_months, self.observation_months
            )));
        }
        if self.result_months == 0 {
            return Err(Error::Config("result period must be at least one month".into()));
        }
        Ok(())
    }

    fn month_start(&self, offset: u32) -> NaiveDate {
        self.observation_start
            .checked_add_months(Months::new(offset))
            .expect("study window within chrono's date range")
    }

    /// First day of the result period.
    pub fn result_start(&self) -> NaiveDate {
        self.month_start(self.observation_months)
    }

    /// Last day of the observation period.
    pub fn observation_end(&self) -> NaiveDate {
        self.result_start().pred_opt().expect("date after minimum")
    }

    /// Last day of the result period.
    pub fn result_end(&self) -> NaiveDate {
        self.month_start(self.observation_months + self.result_months)
            .pred_opt()
            .expect("date after minimum")
    }

    /// Zero-based month offset of `date` from the observation start, if the
    /// date falls anywhere in the observation + result span.
    pub fn month_offset(&self, date: NaiveDate) -> Option<u32> {
        if date < self.observation_start || date > self.result_end() {
            return None;
        }
        let start = self.observation_start;
        let mut months =
            ((date.year() - start.year()) * 12 + date.month0() as i32 - start.month0() as i32).max(0) as u32;
        // Calendar month difference overshoots when the day of month has not
        // been reached yet.
        while months > 0 && self.month_start(months) > date {
            months -= 1;
        }
        Some(months)
    }

    pub fn period(&self, date: NaiveDate) -> Period {
        match self.month_offset(date) {
            Some(m) if m < self.observation_months => Period::Observation(m),
            Some(m) => Period::Result(m - self.observation_months),
            None => Period::Outside,
        }
    }
}

/// Feature categories of the input time series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Cost,
    Visit,
    Medical,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Cost, Category::Visit, Category::Medical];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Cost => "cost",
            Category::Visit => "visit",
            Category::Medical => "medical",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "cost" => Ok(Category::Cost),
            "visit" => Ok(Category::Visit),
            "medical" => Ok(Category::Medical),
            other => Err(format!("unknown category `{other}` (expected cost, visit or medical)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MedicalKind {
    Procedure,
    Diagnosis,
    Drug,
}

impl MedicalKind {
    pub fn prefix(self) -> &'static str {
        match self {
            MedicalKind::Procedure => "px",
            MedicalKind::Diagnosis => "dx",
            MedicalKind::Drug => "rx",
        }
    }
}

/// Identifies one input time series. The derived ordering (cost, visit,
/// medical; then kind; then group) is the column ordering contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SeriesId {
    Cost(ClaimType),
    Visit(PlaceOfService),
    Medical(MedicalKind, u32),
}

impl SeriesId {
    pub fn category(self) -> Category {
        match self {
            SeriesId::Cost(_) => Category::Cost,
            SeriesId::Visit(_) => Category::Visit,
            SeriesId::Medical(..) => Category::Medical,
        }
    }
}

impl fmt::Display for SeriesId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesId::Cost(t) => write!(f, "cost.{}", t.as_str()),
            SeriesId::Visit(p) => write!(f, "visit.{}", p.as_str()),
            SeriesId::Medical(kind, group) => write!(f, "{}.{}", kind.prefix(), group),
        }
    }
}

impl FromStr for SeriesId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (head, tail) = s
            .split_once('.')
            .ok_or_else(|| format!("malformed series id `{s}`"))?;
        match head {
            "cost" => Ok(SeriesId::Cost(tail.parse()?)),
            "visit" => Ok(SeriesId::Visit(tail.parse()?)),
            "px" | "dx" | "rx" => {
                let kind = match head {
                    "px" => MedicalKind::Procedure,
                    "dx" => MedicalKind::Diagnosis,
                    _ => MedicalKind::Drug,
                };
                let group = tail
                    .parse::<u32>()
                    .map_err(|_| format!("malformed group in series id `{s}`"))?;
                Ok(SeriesId::Medical(kind, group))
            }
            _ => Err(format!("unknown series id `{s}`")),
        }
    }
}

/// Code → group map for one medical kind. Group ids run `1..=groups`; the
/// last id is the reserved catch-all that receives unmapped codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMap {
    pub groups: u32,
    #[serde(default)]
    pub codes: BTreeMap<String, u32>,
}

impl GroupMap {
    pub fn empty(groups: u32) -> Self {
        GroupMap {
            groups,
            codes: BTreeMap::new(),
        }
    }

    pub fn other_group(&self) -> u32 {
        self.groups
    }

    pub fn group_of(&self, code: &str) -> u32 {
        self.codes.get(code).copied().unwrap_or(self.groups)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyConfig {
    pub procedure: GroupMap,
    pub diagnosis: GroupMap,
    pub drug: GroupMap,
}

impl Default for TaxonomyConfig {
    fn default() -> Self {
        TaxonomyConfig {
            procedure: GroupMap::empty(180),
            diagnosis: GroupMap::empty(83),
            drug: GroupMap::empty(336),
        }
    }
}

impl TaxonomyConfig {
    pub fn map(&self, kind: MedicalKind) -> &GroupMap {
        match kind {
            MedicalKind::Procedure => &self.procedure,
            MedicalKind::Diagnosis => &self.diagnosis,
            MedicalKind::Drug => &self.drug,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for kind in [MedicalKind::Procedure, MedicalKind::Diagnosis, MedicalKind::Drug] {
            let map = self.map(kind);
            if map.groups == 0 {
                return Err(Error::Config(format!("{kind:?} group count must be positive")));
            }
            if let Some((code, group)) = map
                .codes
                .iter()
                .find(|(_, &g)| g == 0 || g > map.groups)
            {
                return Err(Error::Config(format!(
                    "{kind:?} code `{code}` maps to group {group}, outside 1..={}",
                    map.groups
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let taxonomy: TaxonomyConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("taxonomy: {e}")))?;
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("taxonomy serializes")
    }

    /// Every series id in the given category, in column order.
    pub fn series_in(&self, category: Category) -> Vec<SeriesId> {
        match category {
            Category::Cost => vec![
                SeriesId::Cost(ClaimType::Medical),
                SeriesId::Cost(ClaimType::Pharmacy),
            ],
            Category::Visit => PlaceOfService::ALL.into_iter().map(SeriesId::Visit).collect(),
            Category::Medical => [MedicalKind::Procedure, MedicalKind::Diagnosis, MedicalKind::Drug]
                .into_iter()
                .flat_map(|kind| (1..=self.map(kind).groups).map(move |g| SeriesId::Medical(kind, g)))
                .collect(),
        }
    }
}

fn parse_date(raw: &str, line: u64, field: &'static str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), DATE_FORMAT).map_err(|e| Error::Parse {
        line,
        field,
        message: format!("`{raw}` is not a YYYY-MM-DD date ({e})"),
    })
}

fn split_codes(raw: &str) -> Vec<String> {
    raw.split(';')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(str::to_owned)
        .collect()
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Parse {
            line: 1,
            field: "header",
            message: format!("expected `{}`, found `{}`", expected.join(","), found.join(",")),
        });
    }
    Ok(())
}

/// Parses claims CSV text. Rows keep their file order.
pub fn parse_claims(source: impl Read) -> Result<Vec<ClaimRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    check_header(&mut reader, &CLAIMS_HEADER)?;

    let mut claims = Vec::new();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let fail = |field: &'static str, message: String| Error::Parse { line, field, message };

        let member_id = field(0);
        if member_id.is_empty() {
            return Err(fail("member_id", "empty".into()));
        }
        let claim_type: ClaimType = field(3).parse().map_err(|m| fail("claim_type", m))?;
        let paid: i64 = field(4)
            .parse()
            .map_err(|_| fail("paid_amount_cents", format!("`{}` is not an integer", field(4))))?;
        if paid < 0 {
            return Err(fail("paid_amount_cents", format!("negative amount {paid}")));
        }
        let place_of_service = field(5).parse().map_err(|m| fail("place_of_service", m))?;
        let drug_code = Some(field(8)).filter(|s| !s.is_empty()).map(str::to_owned);
        if claim_type == ClaimType::Pharmacy && drug_code.is_none() {
            return Err(fail("drug_code", "pharmacy claim without a drug code".into()));
        }

        claims.push(ClaimRecord {
            member_id: member_id.to_owned(),
            claim_id: field(1).to_owned(),
            service_date: parse_date(field(2), line, "service_date")?,
            claim_type,
            paid_amount_cents: paid as u64,
            place_of_service,
            diagnosis_codes: split_codes(field(6)),
            procedure_codes: split_codes(field(7)),
            drug_code,
        });
    }
    Ok(claims)
}

pub fn parse_enrollment(source: impl Read) -> Result<Vec<EnrollmentRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    check_header(&mut reader, &ENROLLMENT_HEADER)?;

    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        let member_id = record.get(0).unwrap_or("").trim();
        if member_id.is_empty() {
            return Err(Error::Parse {
                line,
                field: "member_id",
                message: "empty".into(),
            });
        }
        let coverage_start = parse_date(record.get(1).unwrap_or(""), line, "coverage_start")?;
        let coverage_end = parse_date(record.get(2).unwrap_or(""), line, "coverage_end")?;
        if coverage_start > coverage_end {
            return Err(Error::Parse {
                line,
                field: "coverage_end",
                message: format!("coverage ends {coverage_end} before it starts {coverage_start}"),
            });
        }
        out.push(EnrollmentRecord {
            member_id: member_id.to_owned(),
            coverage_start,
            coverage_end,
        });
    }
    Ok(out)
}

pub fn write_claims(claims: &[ClaimRecord], sink: impl std::io::Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(CLAIMS_HEADER)?;
    for c in claims {
        let date = c.service_date.format(DATE_FORMAT).to_string();
        let paid = c.paid_amount_cents.to_string();
        let dx = c.diagnosis_codes.join(";");
        let px = c.procedure_codes.join(";");
        writer.write_record([
            c.member_id.as_str(),
            c.claim_id.as_str(),
            date.as_str(),
            c.claim_type.as_str(),
            paid.as_str(),
            c.place_of_service.as_str(),
            dx.as_str(),
            px.as_str(),
            c.drug_code.as_deref().unwrap_or(""),
        ])?;
    }
    writer.flush().map_err(|e| Error::io("<claims sink>", e))?;
    Ok(())
}

pub fn write_enrollment(records: &[EnrollmentRecord], sink: impl std::io::Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(ENROLLMENT_HEADER)?;
    for r in records {
        writer.write_record([
            r.member_id.clone(),
            r.coverage_start.format(DATE_FORMAT).to_string(),
            r.coverage_end.format(DATE_FORMAT).to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io("<enrollment sink>", e))?;
    Ok(())
}

/// Members whose (merged) coverage spans the whole observation + result
/// period.
pub fn eligible_members(enrollment: &[EnrollmentRecord], window: &StudyWindow) -> BTreeSet<String> {
    let mut spans: BTreeMap<&str, Vec<(NaiveDate, NaiveDate)>> = BTreeMap::new();
    for r in enrollment {
        spans
            .entry(r.member_id.as_str())
            .or_default()
            .push((r.coverage_start, r.coverage_end));
    }
    let (need_start, need_end) = (window.observation_start, window.result_end());
    spans
        .into_iter()
        .filter(|(_, intervals)| {
            let mut intervals = intervals.clone();
            intervals.sort();
            let mut merged: Vec<(NaiveDate, NaiveDate)> = Vec::new();
            for (s, e) in intervals {
                match merged.last_mut() {
                    Some(last) if s <= last.1.succ_opt().unwrap_or(last.1) => last.1 = last.1.max(e),
                    _ => merged.push((s, e)),
                }
            }
            merged.iter().any(|&(s, e)| s <= need_start && e >= need_end)
        })
        .map(|(m, _)| m.to_owned())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterOutcome {
    pub claims: Vec<ClaimRecord>,
    pub members: BTreeSet<String>,
    /// Distinct members seen in the claims but lacking full coverage.
    pub dropped_members: usize,
}

pub fn filter_enrolled(
    claims: Vec<ClaimRecord>,
    enrollment: &[EnrollmentRecord],
    window: &StudyWindow,
) -> FilterOutcome {
    let members = eligible_members(enrollment, window);
    let mut dropped = BTreeSet::new();
    let claims = claims
        .into_iter()
        .filter(|c| {
            let keep = members.contains(&c.member_id);
            if !keep {
                dropped.insert(c.member_id.clone());
            }
            keep
        })
        .collect();
    if !dropped.is_empty() {
        log::info!("dropped {} members without full coverage", dropped.len());
    }
    FilterOutcome {
        claims,
        members,
        dropped_members: dropped.len(),
    }
}

/// Per-claim contributions to the input series: the paid amount to one
/// cost series, a count of one to one visit series, and a count of one to
/// every distinct medical group the claim's codes fall into.
pub fn attribute_claim(claim: &ClaimRecord, taxonomy: &TaxonomyConfig) -> Vec<(SeriesId, f64)> {
    let visit = match claim.claim_type {
        ClaimType::Pharmacy => PlaceOfService::Other,
        ClaimType::Medical => claim.place_of_service,
    };
    let mut out = vec![
        (SeriesId::Cost(claim.claim_type), claim.paid_amount_cents as f64),
        (SeriesId::Visit(visit), 1.0),
    ];

    let mut groups = BTreeSet::new();
    for code in &claim.procedure_codes {
        groups.insert(SeriesId::Medical(
            MedicalKind::Procedure,
            taxonomy.procedure.group_of(code),
        ));
    }
    for code in &claim.diagnosis_codes {
        groups.insert(SeriesId::Medical(
            MedicalKind::Diagnosis,
            taxonomy.diagnosis.group_of(code),
        ));
    }
    if let Some(code) = &claim.drug_code {
        groups.insert(SeriesId::Medical(MedicalKind::Drug, taxonomy.drug.group_of(code)));
    }
    out.extend(groups.into_iter().map(|g| (g, 1.0)));
    out
}

/// Result-period paid amount per member. Members that only appear with
/// observation-period claims get 0.
pub fn compute_targets(claims: &[ClaimRecord], window: &StudyWindow) -> BTreeMap<String, u64> {
    let mut targets = BTreeMap::new();
    for c in claims {
        let total = targets.entry(c.member_id.clone()).or_insert(0u64);
        if let Period::Result(_) = window.period(c.service_date) {
            *total += c.paid_amount_cents;
        }
    }
    targets
}
