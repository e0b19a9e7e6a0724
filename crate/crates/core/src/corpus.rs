//! Document metadata ingestion and the in-corpus citation graph.
//!
//! Records are newline-delimited JSON objects. The order of records in the
//! file is the canonical row order used by every persisted matrix.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One bibliographic item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub title: String,
    pub keywords: Vec<String>,
    pub references: Vec<String>,
    pub pub_date: NaiveDate,
    pub source: Option<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    keywords: Vec<String>,
    #[serde(default)]
    references: Vec<String>,
    pub_date: String,
    #[serde(default)]
    source: Option<String>,
}

#[derive(Serialize)]
struct CanonicalRecord<'a> {
    id: &'a str,
    title: &'a str,
    keywords: &'a [String],
    references: &'a [String],
    pub_date: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<&'a str>,
}

/// Parses `YYYY-MM-DD` or `YYYY`; year-only dates become January 1.
pub fn parse_pub_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d);
    }
    if s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit()) {
        return NaiveDate::from_ymd_opt(s.parse().ok()?, 1, 1);
    }
    None
}

impl DocumentRecord {
    pub fn new(doc_id: impl Into<String>, pub_date: NaiveDate) -> Self {
        DocumentRecord {
            doc_id: doc_id.into(),
            title: String::new(),
            keywords: Vec::new(),
            references: Vec::new(),
            pub_date,
            source: None,
        }
    }

    pub fn with_keywords<I, S>(mut self, keywords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.keywords = keywords.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_references<I, S>(mut self, references: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.references = references.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = title.into();
        self
    }

    fn to_canonical_line(&self) -> String {
        let rec = CanonicalRecord {
            id: &self.doc_id,
            title: &self.title,
            keywords: &self.keywords,
            references: &self.references,
            pub_date: self.pub_date.format("%Y-%m-%d").to_string(),
            source: self.source.as_deref(),
        };
        serde_json::to_string(&rec).expect("record serialization cannot fail")
    }
}

/// Counters gathered while ingesting a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub records: usize,
    /// Reference entries whose target is not in the corpus.
    pub dangling_references: usize,
    pub duplicate_references_dropped: usize,
    pub self_references_dropped: usize,
}

/// Immutable, indexed corpus.
#[derive(Debug, Clone)]
pub struct CorpusStore {
    docs: Vec<DocumentRecord>,
    rows: HashMap<String, usize>,
    resolved: Vec<Vec<usize>>,
    cited_by: Vec<Vec<usize>>,
}

impl CorpusStore {
    /// Indexes records in the given order. References are deduplicated and
    /// self-references dropped so the record invariants hold.
    pub fn from_records(records: Vec<DocumentRecord>) -> Result<(Self, LoadReport)> {
        let mut report = LoadReport {
            records: records.len(),
            ..LoadReport::default()
        };
        let mut rows = HashMap::with_capacity(records.len());
        let mut docs = records;
        for (row, doc) in docs.iter().enumerate() {
            if doc.doc_id.is_empty() || doc.doc_id.contains(['\t', '\n', '\r']) {
                return Err(Error::InvalidArgument(format!("record {row} has a bad id {:?}", doc.doc_id)));
            }
            if rows.insert(doc.doc_id.clone(), row).is_some() {
                return Err(Error::DuplicateId(doc.doc_id.clone()));
            }
        }
        for doc in docs.iter_mut() {
            let mut seen = HashSet::with_capacity(doc.references.len());
            let before = doc.references.len();
            let id = doc.doc_id.clone();
            let mut self_refs = 0;
            doc.references.retain(|r| {
                if *r == id {
                    self_refs += 1;
                    false
                } else {
                    seen.insert(r.clone())
                }
            });
            report.self_references_dropped += self_refs;
            report.duplicate_references_dropped += before - doc.references.len() - self_refs;
        }

        let mut resolved = Vec::with_capacity(docs.len());
        let mut cited_by = vec![Vec::new(); docs.len()];
        for (row, doc) in docs.iter().enumerate() {
            let mut targets = Vec::new();
            for r in &doc.references {
                match rows.get(r) {
                    Some(&t) => {
                        targets.push(t);
                        cited_by[t].push(row);
                    }
                    None => report.dangling_references += 1,
                }
            }
            resolved.push(targets);
        }

        Ok((
            CorpusStore {
                docs,
                rows,
                resolved,
                cited_by,
            },
            report,
        ))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Documents in canonical row order.
    pub fn docs(&self) -> &[DocumentRecord] {
        &self.docs
    }

    pub fn get(&self, doc_id: &str) -> Option<&DocumentRecord> {
        self.rows.get(doc_id).map(|&r| &self.docs[r])
    }

    pub fn row(&self, doc_id: &str) -> Option<usize> {
        self.rows.get(doc_id).copied()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.rows.contains_key(doc_id)
    }

    /// In-corpus references of `doc_id`, in bibliography order.
    pub fn resolve_references(&self, doc_id: &str) -> Result<Vec<&str>> {
        let row = self
            .row(doc_id)
            .ok_or_else(|| Error::NotFound(doc_id.to_string()))?;
        Ok(self.resolved_rows(row)
            .iter()
            .map(|&t| self.docs[t].doc_id.as_str())
            .collect())
    }

    pub(crate) fn resolved_rows(&self, row: usize) -> &[usize] {
        &self.resolved[row]
    }

    /// Rows of documents citing `row`, ascending.
    pub fn citing_rows(&self, row: usize) -> &[usize] {
        &self.cited_by[row]
    }

    /// Number of in-corpus citation edges.
    pub fn edge_count(&self) -> usize {
        self.cited_by.iter().map(Vec::len).sum()
    }

    /// For every corpus document, how many members of `group` it cites.
    /// Only positive counts are returned.
    pub fn citation_counts<I, S>(&self, group: I) -> Result<BTreeMap<String, usize>>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut members = HashSet::new();
        let mut any = false;
        for g in group {
            any = true;
            if let Some(row) = self.row(g.as_ref()) {
                members.insert(row);
            }
        }
        if !any {
            return Err(Error::InvalidArgument("citation group is empty".into()));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for row in members {
            for &citer in &self.cited_by[row] {
                *counts.entry(self.docs[citer].doc_id.clone()).or_default() += 1;
            }
        }
        Ok(counts)
    }

    /// Canonical newline-delimited serialization, one record per line.
    pub fn to_canonical_jsonl(&self) -> String {
        let mut out = String::new();
        for doc in &self.docs {
            out.push_str(&doc.to_canonical_line());
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_canonical_jsonl()).map_err(|e| Error::io(path, e))
    }
}

/// Reads a corpus file. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<(CorpusStore, LoadReport)> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(file, path)
}

pub fn read_corpus(reader: impl Read, path: &Path) -> Result<(CorpusStore, LoadReport)> {
    let mut records = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if raw.id.is_empty() || raw.id.contains(['\t', '\n', '\r']) {
            return Err(malformed(format!("bad id {:?}", raw.id)));
        }
        let pub_date = parse_pub_date(&raw.pub_date)
            .ok_or_else(|| malformed(format!("bad pub_date {:?}", raw.pub_date)))?;
        records.push(DocumentRecord {
            doc_id: raw.id,
            title: raw.title,
            keywords: raw.keywords,
            references: raw.references,
            pub_date,
            source: raw.source,
        });
    }
    CorpusStore::from_records(records)
}
