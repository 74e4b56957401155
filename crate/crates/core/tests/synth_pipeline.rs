use std::collections::BTreeMap;

use chronocost::abstraction::{build_corpus, Corpus};
use chronocost::ingest::{
    compute_targets, eligible_members, parse_claims, parse_enrollment, write_claims, write_enrollment, ClaimType,
    SeriesId,
};
use chronocost::spikes::{corpus_spike_features, SpikeConfig};
use chronocost::synth::{generate_corpus, read_labels, Amount, Archetype, ArchetypeMix, SyntheticCorpus, SynthConfig};

fn generate(n: usize, mix: ArchetypeMix, seed: u64) -> (SynthConfig, SyntheticCorpus, Corpus) {
    let config = SynthConfig {
        n_members: n,
        mix,
        seed,
        ..SynthConfig::default()
    };
    let synth = generate_corpus(&config).unwrap();
    let members = eligible_members(&synth.enrollment, &config.window);
    let corpus = build_corpus(&synth.claims, &members, &synth.taxonomy, &config.window, 1).unwrap();
    (config, synth, corpus)
}

fn share_with_spikes(corpus: &Corpus, pred: impl Fn(u32) -> bool) -> f64 {
    let table = corpus_spike_features(corpus, &SpikeConfig::default()).unwrap();
    let medical = SeriesId::Cost(ClaimType::Medical);
    let hits = corpus
        .members
        .keys()
        .filter(|m| pred(table[*m].get(&medical).map_or(0, |f| f.count_of_spike)))
        .count();
    hits as f64 / corpus.members.len() as f64
}

#[test]
fn spiky_members_show_spikes() {
    let (_, _, corpus) = generate(400, ArchetypeMix::only(Archetype::Spiky), 1);
    assert!(share_with_spikes(&corpus, |c| c >= 1) >= 0.95);
}

#[test]
fn chronic_members_show_none() {
    let (_, _, corpus) = generate(400, ArchetypeMix::only(Archetype::Chronic), 2);
    assert!(share_with_spikes(&corpus, |c| c == 0) >= 0.95);
}

#[test]
fn every_member_is_eligible() {
    let (_, synth, corpus) = generate(300, ArchetypeMix::default(), 3);
    assert_eq!(corpus.members.len(), 300);
    assert_eq!(corpus.ignored_claims, 0);
    assert_eq!(synth.labels.len(), 300);
}

/// Chronic members pay the same every month, so their result cost is
/// exactly half their 24-month observation cost. Spiky members at the
/// same observation cost keep only their low baseline.
#[test]
fn chronic_outspends_spiky_at_equal_history() {
    // Cheaper chronic care so the two cohorts overlap in history.
    let mut config = SynthConfig {
        n_members: 3000,
        seed: 4,
        mix: ArchetypeMix {
            low: 0.0,
            moderate: 0.0,
            spiky: 0.6,
            chronic: 0.4,
        },
        ..SynthConfig::default()
    };
    config.chronic.medical_monthly = Amount {
        median_dollars: 300.0,
        sigma: 0.3,
    };
    config.chronic.pharmacy_monthly = Amount {
        median_dollars: 60.0,
        sigma: 0.3,
    };
    let synth = generate_corpus(&config).unwrap();
    let members = eligible_members(&synth.enrollment, &config.window);
    let corpus = build_corpus(&synth.claims, &members, &synth.taxonomy, &config.window, 1).unwrap();
    let mut by_band: BTreeMap<u64, [(f64, usize); 2]> = BTreeMap::new();
    for (m, &archetype) in &synth.labels {
        let slot = match archetype {
            Archetype::Chronic => 0,
            Archetype::Spiky => 1,
            _ => continue,
        };
        let obs = corpus.observation_cost[m];
        if archetype == Archetype::Chronic {
            assert_eq!(corpus.targets[m] * 2, obs, "{m}");
        }
        let e = &mut by_band.entry(obs / 200_000).or_default()[slot];
        e.0 += corpus.targets[m] as f64;
        e.1 += 1;
    }
    let matched: Vec<(f64, f64)> = by_band
        .values()
        .filter(|b| b[0].1 > 0 && b[1].1 > 0)
        .map(|b| (b[0].0 / b[0].1 as f64, b[1].0 / b[1].1 as f64))
        .collect();
    assert!(matched.len() >= 3, "too few shared $2000 bands: {}", matched.len());
    for (chronic, spiky) in matched {
        assert!(chronic > 5.0 * spiky, "chronic {chronic} vs spiky {spiky}");
    }
}

#[test]
fn dollars_survive_csv_round_trip() {
    let (config, synth, _) = generate(150, ArchetypeMix::default(), 5);
    let mut claims_csv = Vec::new();
    write_claims(&synth.claims, &mut claims_csv).unwrap();
    let claims = parse_claims(claims_csv.as_slice()).unwrap();
    let total = |c: &[chronocost::ingest::ClaimRecord]| c.iter().map(|c| c.paid_amount_cents).sum::<u64>();
    assert_eq!(total(&claims), total(&synth.claims));
    assert_eq!(claims, synth.claims);
    assert_eq!(compute_targets(&claims, &config.window), compute_targets(&synth.claims, &config.window));

    let mut enrollment_csv = Vec::new();
    write_enrollment(&synth.enrollment, &mut enrollment_csv).unwrap();
    assert_eq!(parse_enrollment(enrollment_csv.as_slice()).unwrap(), synth.enrollment);
}

#[test]
fn written_directory_reads_back() {
    let (_, synth, _) = generate(50, ArchetypeMix::default(), 6);
    let dir = tempfile::tempdir().unwrap();
    synth.write_to_dir(dir.path()).unwrap();
    let labels = read_labels(std::fs::File::open(dir.path().join("labels.csv")).unwrap()).unwrap();
    assert_eq!(labels, synth.labels);
    let again = generate(50, ArchetypeMix::default(), 6).1;
    let dir2 = tempfile::tempdir().unwrap();
    again.write_to_dir(dir2.path()).unwrap();
    for file in ["claims.csv", "enrollment.csv", "labels.csv", "taxonomy.toml"] {
        assert_eq!(
            std::fs::read(dir.path().join(file)).unwrap(),
            std::fs::read(dir2.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

/// Generated costs concentrate: the top 15% of members carry roughly 80%
/// of the observation dollars.
#[test]
fn cost_concentrates_in_few_members() {
    let (_, _, corpus) = generate(2000, ArchetypeMix::default(), 7);
    let mut costs: Vec<u64> = corpus.observation_cost.values().copied().collect();
    costs.sort_unstable_by(|a, b| b.cmp(a));
    let top = costs[..costs.len() * 15 / 100].iter().sum::<u64>() as f64;
    let share = top / costs.iter().sum::<u64>() as f64;
    assert!((0.7..0.9).contains(&share), "top 15% hold {share:.3}");
}
