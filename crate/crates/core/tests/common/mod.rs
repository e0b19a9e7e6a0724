#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::NaiveDate;
use litrec_core::corpus::{CorpusStore, DocumentRecord};
use litrec_core::index::{BuildParams, Index};
use litrec_core::keyword_norm::KeywordMap;
use litrec_core::recommender::{Closest, Entry, RecommendationSet, RecommenderConfig, Statistic};
use litrec_core::topic_space::TopicVector;
use litrec_core::usage::ReadEvent;
use rand::seq::IndexedRandom;
use rand::Rng;

pub const DAY: i64 = 86_400;
/// 2009-12-31T00:00:00Z.
pub const LOG_END: i64 = 1_262_217_600;

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

pub fn doc_id(i: usize) -> String {
    format!("d{i:05}")
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let pairs = |v: f64| v * (v - 1.0) / 2.0;
    let index: f64 = table.values().map(|&v| pairs(v)).sum();
    let sa: f64 = rows.values().map(|&v| pairs(v)).sum();
    let sb: f64 = cols.values().map(|&v| pairs(v)).sum();
    let expected = sa * sb / pairs(n);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// `blocks` disjoint keyword pools of 8; each document draws 3 from its pool.
pub fn planted_blocks(blocks: usize, per_block: usize, rng: &mut impl Rng) -> (Vec<DocumentRecord>, Vec<usize>) {
    let mut docs = Vec::new();
    let mut truth = Vec::new();
    for b in 0..blocks {
        let pool: Vec<String> = (0..8).map(|k| format!("block{b}-kw{k}")).collect();
        for i in 0..per_block {
            let kws: Vec<&String> = pool.choose_multiple(rng, 3).collect();
            docs.push(DocumentRecord::new(format!("b{b}-{i:03}"), date(2000, 1, 1)).with_keywords(kws));
            truth.push(b);
        }
    }
    (docs, truth)
}

/// Topic-structured corpus: `themes` keyword pools plus a shared pool,
/// a share of keyword-less documents, citations biased towards the same theme,
/// and coarse publication dates so that date ties occur.
pub fn random_corpus(n: usize, themes: usize, rng: &mut impl Rng) -> Vec<DocumentRecord> {
    let theme_of: Vec<usize> = (0..n).map(|_| rng.random_range(0..themes)).collect();
    let mut by_theme: Vec<Vec<usize>> = vec![Vec::new(); themes];
    for (i, &t) in theme_of.iter().enumerate() {
        by_theme[t].push(i);
    }
    (0..n)
        .map(|i| {
            let t = theme_of[i];
            let mut kws = Vec::new();
            if rng.random_bool(0.9) {
                for _ in 0..rng.random_range(2..=4) {
                    kws.push(format!("t{t}k{}", rng.random_range(0..10)));
                }
                if rng.random_bool(0.3) {
                    kws.push(format!("shared{}", rng.random_range(0..5)));
                }
            }
            let mut refs = Vec::new();
            for _ in 0..rng.random_range(0..6) {
                let j = if rng.random_bool(0.8) {
                    *by_theme[t].choose(rng).unwrap()
                } else {
                    rng.random_range(0..n)
                };
                refs.push(doc_id(j));
            }
            if rng.random_bool(0.05) {
                refs.push("external-ref".to_string());
            }
            DocumentRecord::new(doc_id(i), date(1995 + rng.random_range(0..15), 1 + rng.random_range(0..3) * 4, 1))
                .with_keywords(kws)
                .with_references(refs)
        })
        .collect()
}

/// Reading sessions over corpus documents (plus a few outside ids). Users
/// are a mix of light, frequent and excessive readers; some reads fall
/// before the trailing six-month window.
pub fn random_log(docs: &[DocumentRecord], users: usize, max_events: usize, rng: &mut impl Rng) -> Vec<ReadEvent> {
    let mut events = Vec::new();
    for u in 0..users {
        let user = format!("u{u:03}");
        let target = match rng.random_range(0..10) {
            0..=2 => rng.random_range(5..80),
            3..=8 => rng.random_range(80..=300),
            _ => rng.random_range(301..340),
        };
        let mut t = LOG_END - rng.random_range(150..183) * DAY;
        if rng.random_bool(0.2) {
            for _ in 0..rng.random_range(1..10) {
                events.push(ReadEvent {
                    user_id: user.clone(),
                    doc_id: docs.choose(rng).unwrap().doc_id.clone(),
                    timestamp: LOG_END - 250 * DAY + rng.random_range(0..DAY),
                });
            }
        }
        let focus = rng.random_range(0..docs.len());
        let mut last = focus;
        for _ in 0..target {
            if events.len() >= max_events {
                break;
            }
            t += match rng.random_range(0..10) {
                0 => 0,
                1..=6 => rng.random_range(30..3_600),
                7 | 8 => rng.random_range(3_600..10 * 3_600),
                _ => rng.random_range(DAY..3 * DAY),
            };
            let t = t.min(LOG_END);
            let d = match rng.random_range(0..10) {
                0 => last,
                1..=5 => (focus + rng.random_range(0..40)) % docs.len(),
                6 if rng.random_bool(0.2) => usize::MAX,
                _ => rng.random_range(0..docs.len()),
            };
            let id = if d == usize::MAX { format!("outside-{}", rng.random_range(0..5)) } else { docs[d].doc_id.clone() };
            if d != usize::MAX {
                last = d;
            }
            events.push(ReadEvent {
                user_id: user.clone(),
                doc_id: id,
                timestamp: t,
            });
        }
    }
    // Interleave users as a raw log would.
    let mut keyed: Vec<(u64, ReadEvent)> = events.into_iter().map(|e| (rng.random(), e)).collect();
    keyed.sort_by_key(|(k, e)| (e.timestamp, *k));
    keyed.into_iter().map(|(_, e)| e).collect()
}

pub fn build_index(docs: Vec<DocumentRecord>, params: &BuildParams) -> Index {
    let (store, _) = CorpusStore::from_records(docs).unwrap();
    Index::build(store, "test".into(), KeywordMap::default(), params).unwrap().0
}

fn dot(a: &TopicVector, b: &TopicVector) -> f64 {
    let mut s = 0.0;
    for i in 0..a.dim() {
        s += f64::from(a.as_slice()[i]) * f64::from(b.as_slice()[i]);
    }
    s.clamp(-1.0, 1.0)
}

/// Winner of one rule as computed by the oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum Expect {
    Pick { doc: String, stat: Statistic, sources: Vec<String> },
    Absent(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSet {
    pub cluster: usize,
    pub group: Vec<(String, f64)>,
    pub read_before: Expect,
    pub read_after: Expect,
    pub most_also_read: Expect,
    pub most_recent_also_read: Expect,
    pub cites_group_most: Expect,
}

/// Exhaustive recomputation of the recommendation set for a stored
/// document, from raw records and events. Only the topic vectors and the
/// cluster partition are taken from the index.
pub fn oracle(
    index: &Index,
    docs: &[DocumentRecord],
    events: &[ReadEvent],
    target: &str,
    cfg: &RecommenderConfig,
) -> OracleSet {
    let by_id: HashMap<&str, &DocumentRecord> = docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let v = index.vectors.get(target).expect("target has a vector");

    let mut cluster = 0;
    let mut best = f64::NEG_INFINITY;
    for (c, centroid) in index.clusters.centroids().iter().enumerate() {
        let s = dot(v, centroid);
        if s > best {
            best = s;
            cluster = c;
        }
    }
    let mut group: Vec<(String, f64)> = docs
        .iter()
        .filter(|d| d.doc_id != target && index.clusters.cluster_of(&d.doc_id) == Some(cluster))
        .map(|d| (d.doc_id.clone(), dot(v, index.vectors.get(&d.doc_id).unwrap())))
        .collect();
    group.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    group.truncate(cfg.group_size);
    let members: HashSet<&str> = group.iter().map(|g| g.0.as_str()).collect();

    let mut set = OracleSet {
        cluster,
        group: group.clone(),
        read_before: Expect::Absent("empty group"),
        read_after: Expect::Absent("empty group"),
        most_also_read: Expect::Absent("empty group"),
        most_recent_also_read: Expect::Absent("empty group"),
        cites_group_most: Expect::Absent("empty group"),
    };
    if group.is_empty() {
        return set;
    }

    // Argmax by (count desc, pub_date desc, id asc).
    let best_of = |counts: &BTreeMap<String, usize>, allow_group: bool| -> Vec<(String, usize, NaiveDate)> {
        let mut c: Vec<(String, usize, NaiveDate)> = counts
            .iter()
            .filter(|(d, &n)| n > 0 && d.as_str() != target && (allow_group || !members.contains(d.as_str())))
            .filter(|(d, _)| index.vectors.get(d).is_some())
            .filter_map(|(d, &n)| by_id.get(d.as_str()).map(|r| (d.clone(), n, r.pub_date)))
            .collect();
        c.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
        c
    };

    // Frequent visitors over the trailing 183 days of the log.
    let end = events.iter().map(|e| e.timestamp).max();
    let mut streams: BTreeMap<&str, Vec<(i64, usize, &str)>> = BTreeMap::new();
    for (i, e) in events.iter().enumerate() {
        streams.entry(&e.user_id).or_default().push((e.timestamp, i, &e.doc_id));
    }
    let visitors: Vec<Vec<(i64, usize, &str)>> = streams
        .into_values()
        .filter(|s| {
            let end = end.unwrap();
            let n = s.iter().filter(|e| e.0 >= end - 183 * DAY && e.0 <= end).count();
            (80..=300).contains(&n)
        })
        .map(|mut s| {
            s.sort();
            s
        })
        .collect();

    if visitors.is_empty() {
        for e in [
            &mut set.read_before,
            &mut set.read_after,
            &mut set.most_also_read,
            &mut set.most_recent_also_read,
        ] {
            *e = Expect::Absent("no qualifying readers");
        }
    } else {
        let gap = cfg.session_gap.as_secs() as i64;
        let mut before: BTreeMap<String, usize> = BTreeMap::new();
        let mut after: BTreeMap<String, usize> = BTreeMap::new();
        let mut before_via: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut after_via: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut also: BTreeMap<String, usize> = BTreeMap::new();
        let mut also_via: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for s in &visitors {
            for w in s.windows(2) {
                let (a, b) = (w[0], w[1]);
                if a.2 == b.2 || b.0 - a.0 > gap {
                    continue;
                }
                let (ga, gb) = (members.contains(a.2), members.contains(b.2));
                if gb && !ga {
                    *before.entry(a.2.to_string()).or_default() += 1;
                    before_via.entry(a.2.to_string()).or_default().insert(b.2.to_string());
                }
                if ga && !gb {
                    *after.entry(b.2.to_string()).or_default() += 1;
                    after_via.entry(b.2.to_string()).or_default().insert(a.2.to_string());
                }
            }
            let touched: BTreeSet<String> =
                s.iter().filter(|e| members.contains(e.2)).map(|e| e.2.to_string()).collect();
            if !touched.is_empty() {
                for e in s.iter().filter(|e| !members.contains(e.2)) {
                    *also.entry(e.2.to_string()).or_default() += 1;
                    also_via.entry(e.2.to_string()).or_default().extend(touched.iter().cloned());
                }
            }
        }
        let pick = |ranked: &[(String, usize, NaiveDate)], via: &BTreeMap<String, BTreeSet<String>>, none| {
            match ranked.first() {
                Some((d, n, _)) => Expect::Pick {
                    doc: d.clone(),
                    stat: Statistic::Count(*n as u64),
                    sources: via[d].iter().cloned().collect(),
                },
                None => Expect::Absent(none),
            }
        };
        set.read_before = pick(&best_of(&before, false), &before_via, "no adjacent reads");
        set.read_after = pick(&best_of(&after, false), &after_via, "no adjacent reads");
        let also_ranked = best_of(&also, false);
        set.most_also_read = pick(&also_ranked, &also_via, "no also-read documents");
        set.most_recent_also_read = match also_ranked.iter().take(cfg.also_read_pool).max_by(|a, b| {
            // Among equal dates the higher count, then the lower id, wins.
            a.2.cmp(&b.2).then(a.1.cmp(&b.1)).then(b.0.cmp(&a.0))
        }) {
            Some((d, _, date)) => Expect::Pick {
                doc: d.clone(),
                stat: Statistic::Date(date.format("%Y-%m-%d").to_string()),
                sources: also_via[d].iter().cloned().collect(),
            },
            None => Expect::Absent("no also-read documents"),
        };
    }

    let mut cites: BTreeMap<String, usize> = BTreeMap::new();
    let mut cites_via: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for d in docs {
        let cited: BTreeSet<&str> = d
            .references
            .iter()
            .map(String::as_str)
            .filter(|r| *r != d.doc_id && members.contains(r))
            .collect();
        if !cited.is_empty() {
            cites.insert(d.doc_id.clone(), cited.len());
            cites_via.insert(d.doc_id.clone(), cited.into_iter().map(str::to_string).collect());
        }
    }
    let ranked = best_of(&cites, true);
    set.cites_group_most = match ranked.first() {
        Some((d, n, _)) => Expect::Pick {
            doc: d.clone(),
            stat: Statistic::Count(*n as u64),
            sources: cites_via[d].iter().cloned().collect(),
        },
        None => Expect::Absent("no citing documents"),
    };
    set
}

fn entry_matches(got: &Entry, want: &Expect) -> bool {
    match (got, want) {
        (Entry::Absent { absent_reason }, Expect::Absent(r)) => absent_reason == r,
        (Entry::Present(p), Expect::Pick { doc, stat, sources }) => {
            &p.doc_id == doc && &p.statistic == stat && &p.sources == sources
        }
        _ => false,
    }
}

/// Names of entries where `set` disagrees with `want`.
pub fn mismatches(set: &RecommendationSet, want: &OracleSet, cfg: &RecommenderConfig) -> Vec<String> {
    let mut bad = Vec::new();
    if set.cluster != want.cluster {
        bad.push(format!("cluster {} vs {}", set.cluster, want.cluster));
    }
    let group: Vec<&str> = want.group.iter().map(|g| g.0.as_str()).collect();
    if set.group.iter().map(String::as_str).collect::<Vec<_>>() != group {
        bad.push("group".into());
    }
    match &set.closest_in_cluster {
        Closest::Ranked { ranked } => {
            let ok = ranked.len() == want.group.len().min(cfg.closest_k)
                && ranked
                    .iter()
                    .zip(&want.group)
                    .all(|(n, (id, s))| &n.doc_id == id && (n.statistic - s).abs() < 1e-12);
            if !ok {
                bad.push("closest_in_cluster".into());
            }
        }
        Closest::Absent { absent_reason } => {
            if !want.group.is_empty() || absent_reason != "empty group" {
                bad.push("closest_in_cluster".into());
            }
        }
    }
    for (name, got, exp) in [
        ("read_before", &set.read_before, &want.read_before),
        ("read_after", &set.read_after, &want.read_after),
        ("most_also_read", &set.most_also_read, &want.most_also_read),
        ("most_recent_also_read", &set.most_recent_also_read, &want.most_recent_also_read),
        ("cites_group_most", &set.cites_group_most, &want.cites_group_most),
    ] {
        if !entry_matches(got, exp) {
            bad.push(format!("{name}: got {got:?}, want {exp:?}"));
        }
    }
    bad
}

/// Structural invariants every set must satisfy.
pub fn invariant_violations(set: &RecommendationSet) -> Vec<String> {
    let mut bad = Vec::new();
    let target = set.target.doc_id.as_deref();
    let group: HashSet<&str> = set.group.iter().map(String::as_str).collect();
    if target.is_some_and(|t| group.contains(t)) {
        bad.push("target in group".into());
    }
    if let Closest::Ranked { ranked } = &set.closest_in_cluster {
        if ranked.iter().any(|n| Some(n.doc_id.as_str()) == target) {
            bad.push("target in closest".into());
        }
    }
    for (name, e) in set.entries() {
        if let Some(id) = e.doc_id() {
            if Some(id) == target {
                bad.push(format!("{name} equals target"));
            }
            if name != "cites_group_most" && group.contains(id) {
                bad.push(format!("{name} is a group member"));
            }
        }
    }
    bad
}
