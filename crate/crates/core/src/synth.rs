//! Seeded synthetic claims with four member archetypes.
//!
//! Every member draws from its own ChaCha8 stream (root seed, stream =
//! member index), so output does not depend on thread count or order.
//!
//! * `low`: sparse small claims, monthly cost capped below the chronic floor.
//! * `moderate`: steady random claims at a member-specific rate.
//! * `spiky`: a low baseline plus one to three isolated high-cost months in
//!   the observation period; the result period only sees the baseline.
//! * `chronic`: identical recurring medical and pharmacy claims every month
//!   of both periods, so the monthly series are flat.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Months, NaiveDate};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    write_claims, write_enrollment, ClaimRecord, ClaimType, EnrollmentRecord, GroupMap, PlaceOfService, StudyWindow,
    TaxonomyConfig,
};

pub const CLAIMS_FILE: &str = "claims.csv";
pub const ENROLLMENT_FILE: &str = "enrollment.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const TAXONOMY_FILE: &str = "taxonomy.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    Low,
    Moderate,
    Spiky,
    Chronic,
}

impl Archetype {
    pub const ALL: [Archetype; 4] = [Archetype::Low, Archetype::Moderate, Archetype::Spiky, Archetype::Chronic];

    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::Low => "low",
            Archetype::Moderate => "moderate",
            Archetype::Spiky => "spiky",
            Archetype::Chronic => "chronic",
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Archetype {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Archetype::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim())
            .ok_or_else(|| format!("unknown archetype `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchetypeMix {
    pub low: f64,
    pub moderate: f64,
    pub spiky: f64,
    pub chronic: f64,
}

impl Default for ArchetypeMix {
    fn default() -> Self {
        ArchetypeMix {
            low: 0.47,
            moderate: 0.25,
            spiky: 0.20,
            chronic: 0.08,
        }
    }
}

impl ArchetypeMix {
    pub fn only(archetype: Archetype) -> Self {
        let mut mix = ArchetypeMix {
            low: 0.0,
            moderate: 0.0,
            spiky: 0.0,
            chronic: 0.0,
        };
        *mix.share_mut(archetype) = 1.0;
        mix
    }

    fn share_mut(&mut self, a: Archetype) -> &mut f64 {
        match a {
            Archetype::Low => &mut self.low,
            Archetype::Moderate => &mut self.moderate,
            Archetype::Spiky => &mut self.spiky,
            Archetype::Chronic => &mut self.chronic,
        }
    }

    pub fn shares(&self) -> [(Archetype, f64); 4] {
        [
            (Archetype::Low, self.low),
            (Archetype::Moderate, self.moderate),
            (Archetype::Spiky, self.spiky),
            (Archetype::Chronic, self.chronic),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let shares = self.shares();
        if let Some((a, s)) = shares.iter().find(|(_, s)| !(0.0..=1.0).contains(s)) {
            return Err(Error::Config(format!("archetype share for {a} is {s}, outside [0, 1]")));
        }
        let total: f64 = shares.iter().map(|(_, s)| s).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("archetype shares sum to {total}, not 1")));
        }
        Ok(())
    }

    fn draw(&self, u: f64) -> Archetype {
        let mut acc = 0.0;
        for (a, s) in self.shares() {
            acc += s;
            if u < acc {
                return a;
            }
        }
        // Rounding can leave the top of the unit interval unclaimed.
        self.shares().iter().rev().find(|(_, s)| *s > 0.0).map_or(Archetype::Low, |(a, _)| *a)
    }
}

/// Log-normal claim amount, parameterised by its median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Amount {
    pub median_dollars: f64,
    pub sigma: f64,
}

impl Amount {
    fn validate(&self, what: &str) -> Result<()> {
        if !(self.median_dollars > 0.0 && self.median_dollars.is_finite() && self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("{what}: median must be positive and sigma non-negative")));
        }
        Ok(())
    }

    fn sample_cents(&self, rng: &mut ChaCha8Rng) -> u64 {
        self.sample_scaled_cents(rng, 1.0)
    }

    fn sample_scaled_cents(&self, rng: &mut ChaCha8Rng, scale: f64) -> u64 {
        let dist = LogNormal::new(self.median_dollars.ln(), self.sigma).expect("validated");
        ((dist.sample(rng) * scale * 100.0).round() as u64).max(1)
    }
}

/// Poisson claim counts per month with log-normal amounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimProcess {
    pub medical_rate: f64,
    pub medical_amount: Amount,
    pub pharmacy_rate: f64,
    pub pharmacy_amount: Amount,
    /// Member-level rate multiplier drawn uniformly from this range.
    pub rate_spread: (f64, f64),
    /// Member-level amount multipliers, drawn uniformly from this range
    /// separately for medical and pharmacy claims.
    #[serde(default = "unit_spread")]
    pub amount_spread: (f64, f64),
}

fn unit_spread() -> (f64, f64) {
    (1.0, 1.0)
}

impl ClaimProcess {
    fn validate(&self, what: &str) -> Result<()> {
        let spread_ok = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi.is_finite();
        if !(self.medical_rate >= 0.0 && self.pharmacy_rate >= 0.0 && spread_ok(self.rate_spread) && spread_ok(self.amount_spread)) {
            return Err(Error::Config(format!("{what}: rates must be non-negative with positive spreads")));
        }
        self.medical_amount.validate(what)?;
        self.pharmacy_amount.validate(what)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeParams {
    pub min_spikes: u32,
    pub max_spikes: u32,
    pub amount: Amount,
    /// Chance that a spike is an emergency rather than an inpatient stay.
    pub emergency_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChronicParams {
    /// Lowest monthly medical amount of a chronic member.
    pub floor_dollars: f64,
    pub medical_monthly: Amount,
    pub pharmacy_monthly: Amount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_members: usize,
    pub seed: u64,
    pub window: StudyWindow,
    pub mix: ArchetypeMix,
    pub low: ClaimProcess,
    pub moderate: ClaimProcess,
    pub spiky_baseline: ClaimProcess,
    pub spikes: SpikeParams,
    pub chronic: ChronicParams,
    /// Groups per medical kind in the shipped taxonomy.
    pub taxonomy_groups: u32,
    pub codes_per_group: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_members: 5000,
            seed: 42,
            window: StudyWindow::default(),
            mix: ArchetypeMix::default(),
            low: ClaimProcess {
                medical_rate: 1.5,
                medical_amount: Amount {
                    median_dollars: 10.0,
                    sigma: 0.3,
                },
                pharmacy_rate: 1.0,
                pharmacy_amount: Amount {
                    median_dollars: 6.0,
                    sigma: 0.3,
                },
                rate_spread: (0.8, 1.2),
                amount_spread: (0.3, 3.0),
            },
            moderate: ClaimProcess {
                medical_rate: 3.0,
                medical_amount: Amount {
                    median_dollars: 50.0,
                    sigma: 0.4,
                },
                pharmacy_rate: 2.0,
                pharmacy_amount: Amount {
                    median_dollars: 20.0,
                    sigma: 0.4,
                },
                rate_spread: (0.8, 1.2),
                amount_spread: (0.3, 3.0),
            },
            spiky_baseline: ClaimProcess {
                medical_rate: 1.5,
                medical_amount: Amount {
                    median_dollars: 10.0,
                    sigma: 0.3,
                },
                pharmacy_rate: 1.0,
                pharmacy_amount: Amount {
                    median_dollars: 6.0,
                    sigma: 0.3,
                },
                rate_spread: (0.8, 1.2),
                amount_spread: (0.3, 3.0),
            },
            spikes: SpikeParams {
                min_spikes: 1,
                max_spikes: 3,
                amount: Amount {
                    median_dollars: 3000.0,
                    sigma: 0.5,
                },
                emergency_share: 0.3,
            },
            chronic: ChronicParams {
                floor_dollars: 300.0,
                medical_monthly: Amount {
                    median_dollars: 4000.0,
                    sigma: 0.5,
                },
                pharmacy_monthly: Amount {
                    median_dollars: 800.0,
                    sigma: 0.6,
                },
            },
            taxonomy_groups: 10,
            codes_per_group: 5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_members == 0 {
            return Err(Error::Config("n_members must be at least 1".into()));
        }
        self.window.validate(1)?;
        self.mix.validate()?;
        self.low.validate("low")?;
        self.moderate.validate("moderate")?;
        self.spiky_baseline.validate("spiky baseline")?;
        let s = &self.spikes;
        s.amount.validate("spikes")?;
        if s.min_spikes == 0 || s.min_spikes > s.max_spikes || !(0.0..=1.0).contains(&s.emergency_share) {
            return Err(Error::Config("spikes: need 1 ≤ min_spikes ≤ max_spikes and a share in [0, 1]".into()));
        }
        // Spikes sit in months 2..=n−1 and never touch each other.
        let room = (self.window.observation_months.saturating_sub(2) + 1) / 2;
        if s.max_spikes > room {
            return Err(Error::Config(format!(
                "{} observation months fit at most {room} isolated spikes",
                self.window.observation_months
            )));
        }
        self.chronic.medical_monthly.validate("chronic medical")?;
        self.chronic.pharmacy_monthly.validate("chronic pharmacy")?;
        if !(self.chronic.floor_dollars >= 0.01) {
            return Err(Error::Config("chronic floor must be at least one cent".into()));
        }
        if self.taxonomy_groups == 0 || self.codes_per_group == 0 {
            return Err(Error::Config("taxonomy needs at least one group and one code per group".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(format!("synth config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Taxonomy whose codes `P001`, `D001`, `R001`, … map round-robin onto
    /// the groups.
    pub fn taxonomy(&self) -> TaxonomyConfig {
        let map = |prefix: char| GroupMap {
            groups: self.taxonomy_groups,
            codes: (0..self.taxonomy_groups * self.codes_per_group)
                .map(|i| (code(prefix, i), i % self.taxonomy_groups + 1))
                .collect(),
        };
        TaxonomyConfig {
            procedure: map('P'),
            diagnosis: map('D'),
            drug: map('R'),
        }
    }

    fn code_count(&self) -> u32 {
        self.taxonomy_groups * self.codes_per_group
    }
}

fn code(prefix: char, i: u32) -> String {
    format!("{prefix}{:03}", i + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub claims: Vec<ClaimRecord>,
    pub enrollment: Vec<EnrollmentRecord>,
    pub labels: BTreeMap<String, Archetype>,
    pub taxonomy: TaxonomyConfig,
}

impl SyntheticCorpus {
    pub fn write_labels(&self, sink: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["member_id", "archetype"])?;
        for (m, a) in &self.labels {
            w.write_record([m.as_str(), a.as_str()])?;
        }
        w.flush().map_err(|e| Error::io("<labels sink>", e))?;
        Ok(())
    }

    /// Writes claims, enrollment, labels and taxonomy files into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let path = dir.join(name);
            fs::File::create(&path)
                .map(std::io::BufWriter::new)
                .map_err(|e| Error::io(path, e))
        };
        write_claims(&self.claims, create(CLAIMS_FILE)?)?;
        write_enrollment(&self.enrollment, create(ENROLLMENT_FILE)?)?;
        self.write_labels(create(LABELS_FILE)?)?;
        let path = dir.join(TAXONOMY_FILE);
        fs::write(&path, self.taxonomy.to_toml_string()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

pub fn read_labels(source: impl std::io::Read) -> Result<BTreeMap<String, Archetype>> {
    let mut reader = csv::Reader::from_reader(source);
    let mut out = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let archetype = row.get(1).unwrap_or("").parse().map_err(|message| Error::Parse {
            line: i as u64 + 2,
            field: "archetype",
            message,
        })?;
        out.insert(row.get(0).unwrap_or("").to_owned(), archetype);
    }
    Ok(out)
}

struct MemberGen<'a> {
    config: &'a SynthConfig,
    member: String,
    rng: ChaCha8Rng,
    claims: Vec<ClaimRecord>,
}

impl MemberGen<'_> {
    fn month_start(&self, month: u32) -> NaiveDate {
        self.config.window.observation_start.with_day(1).expect("day 1") + Months::new(month)
    }

    fn date_in(&mut self, month: u32) -> NaiveDate {
        let start = self.month_start(month);
        let days = (start + Months::new(1) - start).num_days() as u64;
        let first = if month == 0 {
            u64::from(self.config.window.observation_start.day() - 1)
        } else {
            0
        };
        start + chrono::Days::new(self.rng.random_range(first..days))
    }

    fn codes(&mut self, prefix: char, max: u32) -> Vec<String> {
        let n = self.rng.random_range(1..=max);
        (0..n)
            .map(|_| code(prefix, self.rng.random_range(0..self.config.code_count())))
            .collect()
    }

    fn push(&mut self, date: NaiveDate, kind: ClaimType, cents: u64, pos: PlaceOfService, drug: Option<String>) {
        let (dx, px) = match kind {
            ClaimType::Medical => (self.codes('D', 3), self.codes('P', 2)),
            ClaimType::Pharmacy => (Vec::new(), Vec::new()),
        };
        self.claims.push(ClaimRecord {
            member_id: self.member.clone(),
            claim_id: format!("{}-{:04}", self.member, self.claims.len() + 1),
            service_date: date,
            claim_type: kind,
            paid_amount_cents: cents,
            place_of_service: pos,
            diagnosis_codes: dx,
            procedure_codes: px,
            drug_code: drug,
        });
    }

    fn routine_place(&mut self) -> PlaceOfService {
        match self.rng.random_range(0..100) {
            0..=54 => PlaceOfService::Office,
            55..=74 => PlaceOfService::Lab,
            75..=86 => PlaceOfService::Outpatient,
            87..=91 => PlaceOfService::Home,
            92..=97 => PlaceOfService::Emergency,
            _ => PlaceOfService::Inpatient,
        }
    }

    /// Random claims for one month, scaled down if they would reach `cap_cents`.
    fn routine_month(&mut self, process: &ClaimProcess, scale: MemberScale, month: u32, cap_cents: Option<u64>) {
        let start = self.claims.len();
        let poisson = |rate: f64| (rate > 0.0).then(|| Poisson::new(rate).expect("positive rate"));
        if let Some(p) = poisson(process.medical_rate * scale.rate) {
            for _ in 0..p.sample(&mut self.rng) as u32 {
                let date = self.date_in(month);
                let cents = process.medical_amount.sample_scaled_cents(&mut self.rng, scale.medical);
                let pos = self.routine_place();
                self.push(date, ClaimType::Medical, cents, pos, None);
            }
        }
        if let Some(p) = poisson(process.pharmacy_rate * scale.rate) {
            for _ in 0..p.sample(&mut self.rng) as u32 {
                let date = self.date_in(month);
                let cents = process.pharmacy_amount.sample_scaled_cents(&mut self.rng, scale.pharmacy);
                let drug = code('R', self.rng.random_range(0..self.config.code_count()));
                self.push(date, ClaimType::Pharmacy, cents, PlaceOfService::Other, Some(drug));
            }
        }
        if let Some(cap) = cap_cents {
            let total: u64 = self.claims[start..].iter().map(|c| c.paid_amount_cents).sum();
            if total >= cap {
                let limit = cap.saturating_sub(1);
                for c in &mut self.claims[start..] {
                    let scaled = u128::from(c.paid_amount_cents) * u128::from(limit) / u128::from(total);
                    c.paid_amount_cents = (scaled as u64).max(1);
                }
            }
        }
    }

    fn months(&self) -> u32 {
        self.config.window.observation_months + self.config.window.result_months
    }

    fn uniform(&mut self, (lo, hi): (f64, f64)) -> f64 {
        if lo == hi {
            lo
        } else {
            self.rng.random_range(lo..hi)
        }
    }

    fn scale(&mut self, process: &ClaimProcess) -> MemberScale {
        let rate = self.uniform(process.rate_spread);
        let medical = self.uniform(process.amount_spread);
        let pharmacy = self.uniform(process.amount_spread);
        MemberScale { rate, medical, pharmacy }
    }

    fn low(&mut self) {
        let process = self.config.low.clone();
        let cap = (self.config.chronic.floor_dollars * 100.0).round() as u64;
        let m = self.scale(&process);
        for month in 0..self.months() {
            self.routine_month(&process, m, month, Some(cap));
        }
    }

    fn moderate(&mut self) {
        let process = self.config.moderate.clone();
        let m = self.scale(&process);
        for month in 0..self.months() {
            self.routine_month(&process, m, month, None);
        }
    }

    fn spiky(&mut self) {
        let process = self.config.spiky_baseline.clone();
        let spikes = self.config.spikes.clone();
        let m = self.scale(&process);
        let n_obs = self.config.window.observation_months;
        // Choosing k non-adjacent months from 1..=n−2 is choosing k of
        // n−1−k slots and spreading them apart.
        let k = self.rng.random_range(spikes.min_spikes..=spikes.max_spikes);
        let slots = (n_obs - 1 - k) as usize;
        let mut picks: Vec<u32> = sample(&mut self.rng, slots, k as usize).into_iter().map(|i| i as u32).collect();
        picks.sort_unstable();
        let spike_months: Vec<u32> = picks.iter().enumerate().map(|(i, &p)| p + i as u32 + 1).collect();

        for month in 0..self.months() {
            self.routine_month(&process, m, month, None);
            if spike_months.contains(&month) {
                let date = self.date_in(month);
                let cents = spikes.amount.sample_cents(&mut self.rng);
                let pos = if self.rng.random_bool(spikes.emergency_share) {
                    PlaceOfService::Emergency
                } else {
                    PlaceOfService::Inpatient
                };
                self.push(date, ClaimType::Medical, cents, pos, None);
            }
        }
    }

    fn chronic(&mut self) {
        let params = self.config.chronic.clone();
        let floor = (params.floor_dollars * 100.0).round() as u64;
        let medical = params.medical_monthly.sample_cents(&mut self.rng).max(floor);
        let pharmacy = params.pharmacy_monthly.sample_cents(&mut self.rng);
        let drug = code('R', self.rng.random_range(0..self.config.code_count()));
        let dx = code('D', self.rng.random_range(0..self.config.code_count()));
        let px = code('P', self.rng.random_range(0..self.config.code_count()));
        let day = u64::from(self.config.window.observation_start.day().max(15) - 1);
        for month in 0..self.months() {
            let date = self.month_start(month) + chrono::Days::new(day);
            let place = match self.rng.random_range(0..20) {
                0..=11 => PlaceOfService::Office,
                12..=16 => PlaceOfService::Outpatient,
                17 | 18 => PlaceOfService::Lab,
                _ => PlaceOfService::Emergency,
            };
            let id = self.claims.len();
            self.claims.push(ClaimRecord {
                member_id: self.member.clone(),
                claim_id: format!("{}-{:04}", self.member, id + 1),
                service_date: date,
                claim_type: ClaimType::Medical,
                paid_amount_cents: medical,
                place_of_service: place,
                diagnosis_codes: vec![dx.clone()],
                procedure_codes: vec![px.clone()],
                drug_code: None,
            });
            self.push(date, ClaimType::Pharmacy, pharmacy, PlaceOfService::Other, Some(drug.clone()));
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct MemberScale {
    rate: f64,
    medical: f64,
    pharmacy: f64,
}

fn member_id(index: usize, n: usize) -> String {
    let width = n.to_string().len().max(5);
    format!("M{:0width$}", index + 1)
}

pub fn generate_corpus(config: &SynthConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let window = config.window;
    let members: Vec<(String, Archetype, Vec<ClaimRecord>)> = (0..config.n_members)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let archetype = config.mix.draw(rng.random::<f64>());
            let mut g = MemberGen {
                config,
                member: member_id(i, config.n_members),
                rng,
                claims: Vec::new(),
            };
            match archetype {
                Archetype::Low => g.low(),
                Archetype::Moderate => g.moderate(),
                Archetype::Spiky => g.spiky(),
                Archetype::Chronic => g.chronic(),
            }
            g.claims.sort_by(|a, b| a.service_date.cmp(&b.service_date).then_with(|| a.claim_id.cmp(&b.claim_id)));
            (g.member, archetype, g.claims)
        })
        .collect();

    let coverage_end = window.result_end();
    let mut out = SyntheticCorpus {
        claims: Vec::new(),
        enrollment: Vec::with_capacity(members.len()),
        labels: BTreeMap::new(),
        taxonomy: config.taxonomy(),
    };
    for (member, archetype, claims) in members {
        out.enrollment.push(EnrollmentRecord {
            member_id: member.clone(),
            coverage_start: window.observation_start,
            coverage_end,
        });
        out.labels.insert(member, archetype);
        out.claims.extend(claims);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Period, StudyWindow};

    fn small(n: usize, mix: ArchetypeMix) -> SynthConfig {
        SynthConfig {
            n_members: n,
            mix,
            ..SynthConfig::default()
        }
    }

    fn monthly_totals(corpus: &SyntheticCorpus, window: &StudyWindow) -> BTreeMap<String, Vec<u64>> {
        let months = (window.observation_months + window.result_months) as usize;
        let mut out: BTreeMap<String, Vec<u64>> =
            corpus.labels.keys().map(|m| (m.clone(), vec![0; months])).collect();
        for c in &corpus.claims {
            let month = match window.period(c.service_date) {
                Period::Observation(m) => m,
                Period::Result(m) => window.observation_months + m,
                Period::Outside => panic!("claim outside the study span"),
            };
            out.get_mut(&c.member_id).unwrap()[month as usize] += c.paid_amount_cents;
        }
        out
    }

    #[test]
    fn low_members_stay_below_chronic_floor() {
        let config = small(300, ArchetypeMix::only(Archetype::Low));
        let corpus = generate_corpus(&config).unwrap();
        let floor = (config.chronic.floor_dollars * 100.0) as u64;
        assert!(corpus.labels.values().all(|&a| a == Archetype::Low));
        for months in monthly_totals(&corpus, &config.window).values() {
            assert!(months.iter().all(|&c| c < floor), "{months:?}");
        }
    }

    #[test]
    fn chronic_members_are_flat_above_floor() {
        let config = small(50, ArchetypeMix::only(Archetype::Chronic));
        let corpus = generate_corpus(&config).unwrap();
        let floor = (config.chronic.floor_dollars * 100.0) as u64;
        for months in monthly_totals(&corpus, &config.window).values() {
            assert!(months.iter().all(|&c| c == months[0] && c >= floor));
        }
    }

    #[test]
    fn spiky_months_are_isolated_and_observation_only() {
        let config = small(200, ArchetypeMix::only(Archetype::Spiky));
        let corpus = generate_corpus(&config).unwrap();
        // Baseline claims top out near $100 with these settings.
        let mut per_member: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
        for c in &corpus.claims {
            if c.paid_amount_cents > 40_000 {
                assert!(matches!(c.place_of_service, PlaceOfService::Inpatient | PlaceOfService::Emergency));
                match config.window.period(c.service_date) {
                    Period::Observation(m) => per_member.entry(&c.member_id).or_default().push(m),
                    other => panic!("spike outside observation: {other:?}"),
                }
            }
        }
        assert_eq!(per_member.len(), 200);
        for months in per_member.values() {
            assert!((1..=3).contains(&months.len()));
            assert!(months.iter().all(|&m| (1..=22).contains(&m)));
            assert!(months.windows(2).all(|w| w[1] >= w[0] + 2), "{months:?}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = small(120, ArchetypeMix::default());
        let a = generate_corpus(&config).unwrap();
        let b = generate_corpus(&config).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&SynthConfig { seed: 43, ..config }).unwrap();
        assert_ne!(a.claims, c.claims);
    }

    #[test]
    fn labels_round_trip() {
        let corpus = generate_corpus(&small(40, ArchetypeMix::default())).unwrap();
        let mut buf = Vec::new();
        corpus.write_labels(&mut buf).unwrap();
        assert_eq!(read_labels(buf.as_slice()).unwrap(), corpus.labels);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut mix = ArchetypeMix::default();
        mix.low = 0.6;
        assert!(generate_corpus(&small(10, mix)).is_err());
        assert!(generate_corpus(&small(0, ArchetypeMix::default())).is_err());
        let mut config = small(10, ArchetypeMix::default());
        config.spikes.max_spikes = 20;
        assert!(config.validate().is_err());
    }

    #[test]
    fn mix_draw_covers_unit_interval() {
        let mix = ArchetypeMix::default();
        assert_eq!(mix.draw(0.0), Archetype::Low);
        assert_eq!(mix.draw(0.999_999_999_999), Archetype::Chronic);
        assert_eq!(ArchetypeMix::only(Archetype::Spiky).draw(0.5), Archetype::Spiky);
    }
}
