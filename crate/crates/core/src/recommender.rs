//! Related-article recommendations for a query document.
//!
//! A query is placed in topic space and assigned to a cluster; its nearest
//! cluster members form the *group*. Six entries are derived:
//!
//! | entry                   | statistic                                        |
//! |-------------------------|--------------------------------------------------|
//! | `closest_in_cluster`    | first `closest_k` group members by cosine        |
//! | `read_before`           | most often read directly before a group member   |
//! | `read_after`            | most often read directly after a group member    |
//! | `most_also_read`        | most often read by readers of the group          |
//! | `most_recent_also_read` | newest among the top also-read documents         |
//! | `cites_group_most`      | cites the most group members                     |
//!
//! Entries without signal are reported absent with a reason.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::Index;
use crate::topic_space::{place_by_bibliography, PersonProfile, Placement, TopicVector};
use crate::usage::{Direction, Readership, Tally};

pub const NO_READERS: &str = "no qualifying readers";
pub const EMPTY_GROUP: &str = "empty group";
pub const NO_ADJACENT: &str = "no adjacent reads";
pub const NO_ALSO_READ: &str = "no also-read documents";
pub const NO_CITERS: &str = "no citing documents";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecommenderConfig {
    pub group_size: usize,
    pub also_read_pool: usize,
    pub closest_k: usize,
    pub session_gap: Duration,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        RecommenderConfig {
            group_size: 40,
            also_read_pool: 100,
            closest_k: 5,
            session_gap: Duration::from_secs(8 * 3600),
        }
    }
}

impl RecommenderConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("group_size", self.group_size),
            ("also_read_pool", self.also_read_pool),
            ("closest_k", self.closest_k),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    /// A corpus document.
    Doc(String),
    /// A free keyword list.
    Keywords(Vec<String>),
    /// A bibliography of corpus document ids.
    References(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Doc,
    Keywords,
    References,
}

/// How the query vector was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorSource {
    StoredKeywords,
    StoredBibliography,
    Keywords,
    Bibliography,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub kind: QueryKind,
    pub doc_id: Option<String>,
    pub vector_source: VectorSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    Cosine,
    ReadBeforeCount,
    ReadAfterCount,
    AlsoReadCount,
    PubDate,
    CitationCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Statistic {
    Count(u64),
    Similarity(f64),
    Date(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub doc_id: String,
    pub statistic: f64,
    pub statistic_kind: StatisticKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Closest {
    Ranked { ranked: Vec<Neighbor> },
    Absent { absent_reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub doc_id: String,
    pub statistic: Statistic,
    pub statistic_kind: StatisticKind,
    /// Also-read count backing a recency pick.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub also_read_count: Option<u64>,
    /// Group members that generated the signal.
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Present(Pick),
    Absent { absent_reason: String },
}

impl Entry {
    fn absent(reason: &str) -> Self {
        Entry::Absent {
            absent_reason: reason.to_string(),
        }
    }

    pub fn pick(&self) -> Option<&Pick> {
        match self {
            Entry::Present(p) => Some(p),
            Entry::Absent { .. } => None,
        }
    }

    pub fn doc_id(&self) -> Option<&str> {
        self.pick().map(|p| p.doc_id.as_str())
    }

    pub fn count(&self) -> Option<u64> {
        match self.pick()?.statistic {
            Statistic::Count(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationSet {
    pub target: Target,
    pub cluster: usize,
    pub group: Vec<String>,
    pub closest_in_cluster: Closest,
    pub read_before: Entry,
    pub read_after: Entry,
    pub most_also_read: Entry,
    pub most_recent_also_read: Entry,
    pub cites_group_most: Entry,
}

impl RecommendationSet {
    /// The fixed machine serialization shared by the CLI and the service.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("recommendation set serializes")
    }

    pub fn entries(&self) -> [(&'static str, &Entry); 5] {
        [
            ("read_before", &self.read_before),
            ("read_after", &self.read_after),
            ("most_also_read", &self.most_also_read),
            ("most_recent_also_read", &self.most_recent_also_read),
            ("cites_group_most", &self.cites_group_most),
        ]
    }
}

fn resolve(index: &Index, query: &Query) -> Result<(Target, TopicVector)> {
    let target = |kind, doc_id: Option<&str>, vector_source| Target {
        kind,
        doc_id: doc_id.map(str::to_string),
        vector_source,
    };
    match query {
        Query::Doc(id) => {
            let doc = index
                .corpus
                .get(id)
                .ok_or_else(|| Error::NotFound(id.clone()))?;
            if let Some(v) = index.vectors.get(id) {
                let source = match index.vectors.placement(id) {
                    Some(Placement::Bibliography) => VectorSource::StoredBibliography,
                    _ => VectorSource::StoredKeywords,
                };
                return Ok((target(QueryKind::Doc, Some(id), source), v.clone()));
            }
            if let Ok(v) = index.model.project_keywords(&doc.keywords) {
                return Ok((target(QueryKind::Doc, Some(id), VectorSource::Keywords), v));
            }
            let refs = index.corpus.resolve_references(id)?;
            if !refs.is_empty() {
                if let Ok(p) = place_by_bibliography(&index.vectors, &refs) {
                    return Ok((target(QueryKind::Doc, Some(id), VectorSource::Bibliography), p.vector));
                }
            }
            Err(Error::NoSignal(format!(
                "document {id:?} has no vector: tried stored vector, keywords ({}), bibliography ({} resolved references)",
                doc.keywords.len(),
                refs.len()
            )))
        }
        Query::Keywords(kw) => index
            .model
            .project_keywords(kw)
            .map(|v| (target(QueryKind::Keywords, None, VectorSource::Keywords), v))
            .map_err(|e| Error::NoSignal(format!("tried keywords: {e}"))),
        Query::References(refs) => {
            let p = place_by_bibliography(&index.vectors, refs).map_err(|e| match e {
                Error::NoSignal(m) => Error::NoSignal(format!("tried bibliography: {m}")),
                other => other,
            })?;
            Ok((target(QueryKind::References, None, VectorSource::Bibliography), p.vector))
        }
    }
}

/// `(count desc, pub_date desc, doc_id asc)`.
fn rank_candidates(a: &(&str, u64, NaiveDate), b: &(&str, u64, NaiveDate)) -> Ordering {
    b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(b.0))
}

/// Placed corpus documents from `counts` other than the target, ranked.
fn ranked<'a>(index: &'a Index, counts: &'a BTreeMap<String, usize>, exclude: Option<&str>) -> Vec<(&'a str, u64, NaiveDate)> {
    let mut out: Vec<(&str, u64, NaiveDate)> = counts
        .iter()
        .filter(|(id, &c)| c > 0 && Some(id.as_str()) != exclude && index.vectors.get(id).is_some())
        .filter_map(|(id, &c)| index.corpus.get(id).map(|d| (id.as_str(), c as u64, d.pub_date)))
        .collect();
    out.sort_by(rank_candidates);
    out
}

fn sources(tally: &Tally, doc: &str) -> Vec<String> {
    tally.via.get(doc).map(|s| s.iter().cloned().collect()).unwrap_or_default()
}

fn count_pick(tally: &Tally, doc: &str, count: u64, kind: StatisticKind) -> Entry {
    Entry::Present(Pick {
        doc_id: doc.to_string(),
        statistic: Statistic::Count(count),
        statistic_kind: kind,
        also_read_count: None,
        sources: sources(tally, doc),
    })
}

fn adjacent_entry(
    index: &Index,
    readership: &Readership,
    group: &HashSet<String>,
    exclude: Option<&str>,
    direction: Direction,
    gap: Duration,
) -> Result<Entry> {
    let tally = readership.adjacent(group, direction, gap)?;
    let kind = match direction {
        Direction::Before => StatisticKind::ReadBeforeCount,
        Direction::After => StatisticKind::ReadAfterCount,
    };
    Ok(match ranked(index, &tally.counts, exclude).first() {
        Some(&(doc, c, _)) => count_pick(&tally, doc, c, kind),
        None => Entry::absent(NO_ADJACENT),
    })
}

pub fn recommend(
    index: &Index,
    readership: &Readership,
    query: &Query,
    cfg: &RecommenderConfig,
) -> Result<RecommendationSet> {
    cfg.validate()?;
    let (target, vector) = resolve(index, query)?;
    let target_id = target.doc_id.clone();
    let exclude = target_id.as_deref();
    let cluster = index.clusters.assign_cluster(&vector);
    let neighbors = index
        .clusters
        .nearest_in_cluster(&index.vectors, &vector, exclude, cluster, cfg.group_size)?;
    let group: Vec<String> = neighbors.iter().map(|(id, _)| id.clone()).collect();

    let mut set = RecommendationSet {
        target,
        cluster,
        group: group.clone(),
        closest_in_cluster: Closest::Absent {
            absent_reason: EMPTY_GROUP.into(),
        },
        read_before: Entry::absent(EMPTY_GROUP),
        read_after: Entry::absent(EMPTY_GROUP),
        most_also_read: Entry::absent(EMPTY_GROUP),
        most_recent_also_read: Entry::absent(EMPTY_GROUP),
        cites_group_most: Entry::absent(EMPTY_GROUP),
    };
    if group.is_empty() {
        return Ok(set);
    }
    set.closest_in_cluster = Closest::Ranked {
        ranked: neighbors
            .iter()
            .take(cfg.closest_k)
            .map(|(id, s)| Neighbor {
                doc_id: id.clone(),
                statistic: *s,
                statistic_kind: StatisticKind::Cosine,
            })
            .collect(),
    };

    let members: HashSet<String> = group.iter().cloned().collect();
    if readership.readers().is_empty() {
        set.read_before = Entry::absent(NO_READERS);
        set.read_after = Entry::absent(NO_READERS);
        set.most_also_read = Entry::absent(NO_READERS);
        set.most_recent_also_read = Entry::absent(NO_READERS);
    } else {
        set.read_before = adjacent_entry(index, readership, &members, exclude, Direction::Before, cfg.session_gap)?;
        set.read_after = adjacent_entry(index, readership, &members, exclude, Direction::After, cfg.session_gap)?;
        let tally = readership.also_read(&members)?;
        let pool = ranked(index, &tally.counts, exclude);
        match pool.first() {
            None => {
                set.most_also_read = Entry::absent(NO_ALSO_READ);
                set.most_recent_also_read = Entry::absent(NO_ALSO_READ);
            }
            Some(&(doc, c, _)) => {
                set.most_also_read = count_pick(&tally, doc, c, StatisticKind::AlsoReadCount);
                let top = &pool[..pool.len().min(cfg.also_read_pool)];
                let newest = top.iter().fold(top[0], |best, &cand| if cand.2 > best.2 { cand } else { best });
                set.most_recent_also_read = Entry::Present(Pick {
                    doc_id: newest.0.to_string(),
                    statistic: Statistic::Date(newest.2.format("%Y-%m-%d").to_string()),
                    statistic_kind: StatisticKind::PubDate,
                    also_read_count: Some(newest.1),
                    sources: sources(&tally, newest.0),
                });
            }
        }
    }

    let citations = index.corpus.citation_counts(&group)?;
    set.cites_group_most = match ranked(index, &citations, exclude).first() {
        Some(&(doc, c, _)) => {
            let cited: BTreeSet<String> = index
                .corpus
                .resolve_references(doc)?
                .into_iter()
                .filter(|r| members.contains(*r))
                .map(str::to_string)
                .collect();
            Entry::Present(Pick {
                doc_id: doc.to_string(),
                statistic: Statistic::Count(c),
                statistic_kind: StatisticKind::CitationCount,
                also_read_count: None,
                sources: cited.into_iter().collect(),
            })
        }
        None => Entry::absent(NO_CITERS),
    };
    Ok(set)
}

/// Nearest members of the profile's cluster that the person has not read.
pub fn recommend_for_person(index: &Index, profile: &PersonProfile, k: usize) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let cluster = index.clusters.assign_cluster(&profile.interest);
    let size = index.clusters.members(cluster).len();
    let mut ranked =
        index
            .clusters
            .nearest_in_cluster(&index.vectors, &profile.interest, None, cluster, size.max(1))?;
    ranked.retain(|(id, _)| !profile.history.contains(id));
    ranked.truncate(k);
    Ok(ranked)
}

fn via(sources: &[String]) -> String {
    if sources.is_empty() {
        String::new()
    } else {
        format!(" (via {})", sources.join(", "))
    }
}

/// Human-readable provenance: one line per entry.
pub fn explain(set: &RecommendationSet) -> String {
    let mut out = String::new();
    match &set.closest_in_cluster {
        Closest::Ranked { ranked } => {
            let list: Vec<String> = ranked.iter().map(|n| format!("{} ({:.4})", n.doc_id, n.statistic)).collect();
            let _ = writeln!(
                out,
                "closest_in_cluster: nearest members of cluster {} by cosine: {}",
                set.cluster,
                list.join(", ")
            );
        }
        Closest::Absent { absent_reason } => {
            let _ = writeln!(out, "closest_in_cluster: absent: {absent_reason}");
        }
    }
    for (name, entry) in set.entries() {
        let line = match entry {
            Entry::Absent { absent_reason } => format!("absent: {absent_reason}"),
            Entry::Present(p) => {
                let stat = match &p.statistic {
                    Statistic::Count(c) => c.to_string(),
                    Statistic::Similarity(s) => format!("{s:.4}"),
                    Statistic::Date(d) => d.clone(),
                };
                let what = match p.statistic_kind {
                    StatisticKind::ReadBeforeCount => {
                        format!("{} was read directly before group members {stat} times", p.doc_id)
                    }
                    StatisticKind::ReadAfterCount => {
                        format!("{} was read directly after group members {stat} times", p.doc_id)
                    }
                    StatisticKind::AlsoReadCount => {
                        format!("{} was read {stat} times by readers of the group", p.doc_id)
                    }
                    StatisticKind::PubDate => format!(
                        "{} is the newest of the top also-read documents, published {stat}, read {} times",
                        p.doc_id,
                        p.also_read_count.unwrap_or(0)
                    ),
                    StatisticKind::CitationCount => format!("{} cites {stat} group members", p.doc_id),
                    StatisticKind::Cosine => format!("{} has similarity {stat}", p.doc_id),
                };
                what + &via(&p.sources)
            }
        };
        let _ = writeln!(out, "{name}: {line}");
    }
    out
}
