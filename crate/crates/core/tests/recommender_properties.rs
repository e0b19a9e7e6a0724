mod common;

use std::time::Duration;

use common::*;
use litrec_core::corpus::DocumentRecord;
use litrec_core::index::BuildParams;
use litrec_core::recommender::{recommend, recommend_for_person, Query, RecommenderConfig};
use litrec_core::topic_space::{cosine, interest_vector, TopicVector};
use litrec_core::usage::{ReaderFilter, Readership, UsageLog};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(themes: usize, seed: u64) -> BuildParams {
    BuildParams {
        dims: 6,
        clusters: themes,
        seed,
        ..BuildParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_and_invariants_hold(seed in any::<u64>(), n in 30usize..300, themes in 2usize..6, users in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = random_corpus(n, themes, &mut rng);
        let events = random_log(&docs, users, 5_000, &mut rng);
        let index = build_index(docs.clone(), &params(themes, seed));
        let readership = Readership::new(UsageLog::from_events(events.clone()), ReaderFilter::default());
        let cfg = RecommenderConfig { group_size: rng.random_range(1..=40), ..RecommenderConfig::default() };
        let placed: Vec<&str> = index.vectors.iter().map(|(id, _)| id).collect();
        let target = *placed.choose(&mut rng).unwrap();
        let set = recommend(&index, &readership, &Query::Doc(target.into()), &cfg).unwrap();
        prop_assert_eq!(invariant_violations(&set), Vec::<String>::new());
        prop_assert_eq!(mismatches(&set, &oracle(&index, &docs, &events, target, &cfg), &cfg), Vec::<String>::new());
    }

    /// Duplicating every event keeps winners; adjacency counts are unchanged
    /// (repeats collapse) and also-read counts double.
    #[test]
    fn duplicated_events_keep_winners(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = random_corpus(200, 3, &mut rng);
        // Readers with at most 150 reads stay within bounds when doubled.
        let events: Vec<_> = random_log(&docs, 30, 8_000, &mut rng);
        let mut per_user = std::collections::HashMap::<String, usize>::new();
        for e in &events { *per_user.entry(e.user_id.clone()).or_default() += 1; }
        let events: Vec<_> = events.into_iter().filter(|e| (80..=150).contains(&per_user[&e.user_id])).collect();
        let doubled: Vec<_> = events.iter().flat_map(|e| [e.clone(), e.clone()]).collect();
        let index = build_index(docs, &params(3, seed));
        let cfg = RecommenderConfig::default();
        let once = Readership::new(UsageLog::from_events(events), ReaderFilter::default());
        let twice = Readership::new(UsageLog::from_events(doubled), ReaderFilter::default());
        prop_assert_eq!(once.readers(), twice.readers());
        for (id, _) in index.vectors.iter().step_by(23) {
            let a = recommend(&index, &once, &Query::Doc(id.into()), &cfg).unwrap();
            let b = recommend(&index, &twice, &Query::Doc(id.into()), &cfg).unwrap();
            for ((name, x), (_, y)) in a.entries().iter().zip(b.entries().iter()) {
                prop_assert_eq!(x.doc_id(), y.doc_id(), "{}", name);
            }
            prop_assert_eq!(a.read_before.count(), b.read_before.count());
            prop_assert_eq!(a.read_after.count(), b.read_after.count());
            prop_assert_eq!(a.most_also_read.count().map(|c| c * 2), b.most_also_read.count());
        }
    }

    #[test]
    fn identical_inputs_serialize_identically(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = random_corpus(150, 3, &mut rng);
        let events = random_log(&docs, 20, 4_000, &mut rng);
        let run = || {
            let index = build_index(docs.clone(), &params(3, seed));
            let readership = Readership::new(UsageLog::from_events(events.clone()), ReaderFilter::default());
            index
                .vectors
                .iter()
                .step_by(11)
                .map(|(id, _)| recommend(&index, &readership, &Query::Doc(id.into()), &RecommenderConfig::default()).unwrap().to_json())
                .collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn concurrent_queries_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let docs = random_corpus(400, 4, &mut rng);
    let events = random_log(&docs, 30, 8_000, &mut rng);
    let index = build_index(docs, &params(4, 9));
    let readership = Readership::new(UsageLog::from_events(events), ReaderFilter::default());
    let target = index.vectors.iter().nth(17).unwrap().0.to_string();
    let cfg = RecommenderConfig::default();
    let expected = recommend(&index, &readership, &Query::Doc(target.clone()), &cfg).unwrap().to_json();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..16)
            .map(|_| s.spawn(|| recommend(&index, &readership, &Query::Doc(target.clone()), &cfg).unwrap().to_json()))
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), expected);
        }
    });
}

#[test]
fn person_ranking_matches_closed_form_centroid() {
    // Two orthogonal themes; A and B come from different ones.
    let mut docs = Vec::new();
    for (theme, kws) in [(0, ["a1", "a2", "a3", "a4"]), (1, ["b1", "b2", "b3", "b4"])] {
        for i in 0..10usize {
            let pick = [kws[i % 4], kws[(i + 1) % 4], kws[(i + 2) % 4]];
            docs.push(DocumentRecord::new(format!("t{theme}-{i}"), date(2001, 1, 1)).with_keywords(pick));
        }
    }
    let index = build_index(
        docs,
        &BuildParams {
            dims: 4,
            clusters: 1,
            min_df: 1,
            max_df_fraction: 1.0,
            ..BuildParams::default()
        },
    );
    let (a, b) = (index.vectors.get("t0-0").unwrap(), index.vectors.get("t1-0").unwrap());
    assert!(cosine(a, b).abs() < 1e-6);
    let profile = interest_vector(&index.vectors, "p", &["t0-0", "t0-0", "t1-0"]).unwrap();

    // (2 a + b) / |2 a + b|
    let closed: Vec<f64> = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| 2.0 * f64::from(x) + f64::from(y))
        .collect();
    let closed = TopicVector::from_f64(&closed).unwrap();
    assert!(cosine(&closed, &profile.interest) > 1.0 - 1e-6);

    let mut brute: Vec<(String, f64)> = index
        .vectors
        .iter()
        .filter(|(id, _)| *id != "t0-0" && *id != "t1-0")
        .map(|(id, v)| (id.to_string(), cosine(&closed, v)))
        .collect();
    brute.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let got = recommend_for_person(&index, &profile, 100).unwrap();
    assert_eq!(got.len(), brute.len());
    for (g, w) in got.iter().zip(&brute) {
        assert!(g.0 == w.0 || (g.1 - w.1).abs() < 1e-6, "{g:?} vs {w:?}");
    }
}

#[test]
fn session_gap_changes_adjacency_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let docs = random_corpus(300, 3, &mut rng);
    let events = random_log(&docs, 40, 8_000, &mut rng);
    let index = build_index(docs.clone(), &params(3, 12));
    let readership = Readership::new(UsageLog::from_events(events.clone()), ReaderFilter::default());
    let target = index.vectors.iter().next().unwrap().0.to_string();
    for hours in [0, 1, 8, 48] {
        let cfg = RecommenderConfig {
            session_gap: Duration::from_secs(hours * 3600),
            ..RecommenderConfig::default()
        };
        let set = recommend(&index, &readership, &Query::Doc(target.clone()), &cfg).unwrap();
        assert!(mismatches(&set, &oracle(&index, &docs, &events, &target, &cfg), &cfg).is_empty());
    }
}
