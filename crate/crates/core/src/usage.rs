//! Anonymized read logs: frequent-visitor selection and the adjacency and
//! also-read statistics behind the usage-based recommendations.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read as IoRead};
use std::path::Path;
use std::time::Duration;

use chrono::{DateTime, NaiveDateTime};

use crate::error::{Error, Result};

const DAY_SECS: i64 = 86_400;

/// One read: `timestamp` is UTC seconds since the epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadEvent {
    pub user_id: String,
    pub doc_id: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Read {
    pub doc_id: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserStream {
    pub user_id: String,
    /// Sorted by timestamp; equal timestamps keep input order.
    pub reads: Vec<Read>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UsageLog {
    streams: Vec<UserStream>,
    window: Option<(i64, i64)>,
}

/// Parses an ISO-8601 instant. Offsets are honored; naive times are UTC.
/// Sub-second precision is truncated.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    None
}

impl UsageLog {
    /// Groups events by user; each stream is stably sorted by timestamp.
    pub fn from_events(events: impl IntoIterator<Item = ReadEvent>) -> Self {
        let mut by_user: BTreeMap<String, Vec<Read>> = BTreeMap::new();
        let mut window: Option<(i64, i64)> = None;
        for e in events {
            window = Some(match window {
                None => (e.timestamp, e.timestamp),
                Some((lo, hi)) => (lo.min(e.timestamp), hi.max(e.timestamp)),
            });
            by_user.entry(e.user_id).or_default().push(Read {
                doc_id: e.doc_id,
                timestamp: e.timestamp,
            });
        }
        let streams = by_user
            .into_iter()
            .map(|(user_id, mut reads)| {
                reads.sort_by_key(|r| r.timestamp);
                UserStream { user_id, reads }
            })
            .collect();
        UsageLog { streams, window }
    }

    /// Per-user streams ordered by user id.
    pub fn streams(&self) -> &[UserStream] {
        &self.streams
    }

    pub fn stream(&self, user_id: &str) -> Option<&UserStream> {
        self.streams
            .binary_search_by(|s| s.user_id.as_str().cmp(user_id))
            .ok()
            .map(|i| &self.streams[i])
    }

    /// `[earliest, latest]` timestamp, `None` for an empty log.
    pub fn window(&self) -> Option<(i64, i64)> {
        self.window
    }

    pub fn event_count(&self) -> usize {
        self.streams.iter().map(|s| s.reads.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }
}

/// Reads `user_id<TAB>doc_id<TAB>timestamp` lines. Blank lines are skipped.
pub fn load_usage(path: impl AsRef<Path>) -> Result<UsageLog> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_usage(file, path)
}

pub fn read_usage(reader: impl IoRead, path: &Path) -> Result<UsageLog> {
    let mut events = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: &str| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: message.to_string(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [user, doc, ts] = fields[..] else {
            return Err(malformed("expected user_id<TAB>doc_id<TAB>timestamp"));
        };
        if user.is_empty() || doc.is_empty() {
            return Err(malformed("empty user or document id"));
        }
        let timestamp = parse_timestamp(ts).ok_or_else(|| malformed("unparseable timestamp"))?;
        events.push(ReadEvent {
            user_id: user.to_string(),
            doc_id: doc.to_string(),
            timestamp,
        });
    }
    Ok(UsageLog::from_events(events))
}

/// Frequent-visitor definition: between `min_reads` and `max_reads` read
/// events (inclusive) in the trailing window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReaderFilter {
    pub min_reads: usize,
    pub max_reads: usize,
    pub window_days: u32,
}

impl Default for ReaderFilter {
    fn default() -> Self {
        ReaderFilter {
            min_reads: 80,
            max_reads: 300,
            window_days: 183,
        }
    }
}

impl ReaderFilter {
    pub fn validate(&self) -> Result<()> {
        if self.min_reads < 1 || self.min_reads > self.max_reads {
            return Err(Error::InvalidArgument(format!(
                "reader bounds must satisfy 1 <= min <= max, got {}..{}",
                self.min_reads, self.max_reads
            )));
        }
        Ok(())
    }
}

/// Users whose event count in the trailing window lies within the bounds.
pub fn frequent_visitors(log: &UsageLog, filter: &ReaderFilter) -> BTreeSet<String> {
    let Some((_, end)) = log.window() else {
        return BTreeSet::new();
    };
    let start = end - i64::from(filter.window_days) * DAY_SECS;
    log.streams()
        .iter()
        .filter(|s| {
            let n = s.reads.iter().filter(|r| r.timestamp >= start).count();
            n >= filter.min_reads && n <= filter.max_reads
        })
        .map(|s| s.user_id.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Read directly before a group member.
    Before,
    /// Read directly after a group member.
    After,
}

/// A run of consecutive reads of the same document.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Run<'a> {
    doc_id: &'a str,
    first: i64,
    last: i64,
}

fn collapse(reads: &[Read]) -> Vec<Run<'_>> {
    let mut runs: Vec<Run> = Vec::with_capacity(reads.len());
    for r in reads {
        match runs.last_mut() {
            Some(run) if run.doc_id == r.doc_id => run.last = r.timestamp,
            _ => runs.push(Run {
                doc_id: &r.doc_id,
                first: r.timestamp,
                last: r.timestamp,
            }),
        }
    }
    runs
}

/// Counts with the group members that produced each count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tally {
    pub counts: BTreeMap<String, usize>,
    pub via: BTreeMap<String, BTreeSet<String>>,
}

impl Tally {
    fn add(&mut self, doc: &str, source: &str) {
        *self.counts.entry(doc.to_string()).or_default() += 1;
        self.via.entry(doc.to_string()).or_default().insert(source.to_string());
    }
}

fn check_group(group: &HashSet<String>) -> Result<()> {
    if group.is_empty() {
        return Err(Error::InvalidArgument("document group is empty".into()));
    }
    Ok(())
}

fn tally_adjacent(runs: &[Run], group: &HashSet<String>, direction: Direction, gap: i64, tally: &mut Tally) {
    for pair in runs.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.first - a.last > gap {
            continue;
        }
        let (a_in, b_in) = (group.contains(a.doc_id), group.contains(b.doc_id));
        match direction {
            Direction::Before if b_in && !a_in => tally.add(a.doc_id, b.doc_id),
            Direction::After if a_in && !b_in => tally.add(b.doc_id, a.doc_id),
            _ => {}
        }
    }
}

fn tally_also_read(reads: &[Read], group: &HashSet<String>, tally: &mut Tally) {
    let touched: BTreeSet<&str> = reads
        .iter()
        .filter(|r| group.contains(&r.doc_id))
        .map(|r| r.doc_id.as_str())
        .collect();
    if touched.is_empty() {
        return;
    }
    for r in reads.iter().filter(|r| !group.contains(&r.doc_id)) {
        *tally.counts.entry(r.doc_id.clone()).or_default() += 1;
        let via = tally.via.entry(r.doc_id.clone()).or_default();
        via.extend(touched.iter().map(|s| s.to_string()));
    }
}

/// Adjacent-read statistics over the selected users' streams. Consecutive
/// repeats of a document collapse into one read; a pair counts only when the
/// gap between them is at most `session_gap` and exactly one side is in the
/// group.
pub fn adjacent_counts(
    log: &UsageLog,
    users: &BTreeSet<String>,
    group: &HashSet<String>,
    direction: Direction,
    session_gap: Duration,
) -> Result<Tally> {
    check_group(group)?;
    let gap = session_gap.as_secs() as i64;
    let mut tally = Tally::default();
    for user in users {
        if let Some(s) = log.stream(user) {
            tally_adjacent(&collapse(&s.reads), group, direction, gap, &mut tally);
        }
    }
    Ok(tally)
}

/// Reads by selected users who read at least one group member, per
/// non-group document.
pub fn also_read_counts(log: &UsageLog, users: &BTreeSet<String>, group: &HashSet<String>) -> Result<Tally> {
    check_group(group)?;
    let mut tally = Tally::default();
    for user in users {
        if let Some(s) = log.stream(user) {
            tally_also_read(&s.reads, group, &mut tally);
        }
    }
    Ok(tally)
}

/// A usage log with its frequent-visitor set resolved once, ready for
/// repeated per-query statistics.
#[derive(Debug, Clone)]
pub struct Readership {
    log: UsageLog,
    filter: ReaderFilter,
    readers: BTreeSet<String>,
    reader_streams: Vec<usize>,
}

impl Readership {
    pub fn new(log: UsageLog, filter: ReaderFilter) -> Self {
        let readers = frequent_visitors(&log, &filter);
        let reader_streams = log
            .streams()
            .iter()
            .enumerate()
            .filter(|(_, s)| readers.contains(&s.user_id))
            .map(|(i, _)| i)
            .collect();
        Readership {
            log,
            filter,
            readers,
            reader_streams,
        }
    }

    pub fn empty() -> Self {
        Readership::new(UsageLog::default(), ReaderFilter::default())
    }

    pub fn log(&self) -> &UsageLog {
        &self.log
    }

    pub fn filter(&self) -> &ReaderFilter {
        &self.filter
    }

    pub fn readers(&self) -> &BTreeSet<String> {
        &self.readers
    }

    fn reader_reads(&self) -> impl Iterator<Item = &[Read]> {
        self.reader_streams.iter().map(|&i| self.log.streams()[i].reads.as_slice())
    }

    pub fn adjacent(&self, group: &HashSet<String>, direction: Direction, session_gap: Duration) -> Result<Tally> {
        check_group(group)?;
        let gap = session_gap.as_secs() as i64;
        let mut tally = Tally::default();
        for reads in self.reader_reads() {
            tally_adjacent(&collapse(reads), group, direction, gap, &mut tally);
        }
        Ok(tally)
    }

    pub fn also_read(&self, group: &HashSet<String>) -> Result<Tally> {
        check_group(group)?;
        let mut tally = Tally::default();
        for reads in self.reader_reads() {
            tally_also_read(reads, group, &mut tally);
        }
        Ok(tally)
    }
}
