//! Keyword normalization and vocabulary construction.
//!
//! Raw publisher keywords are mapped onto a normalized identifier set:
//! whitespace is collapsed and trimmed, the keyword is case-folded unless it
//! matches a passthrough pattern (code-like schemes such as PACS), and the
//! result is substituted through an optional synonym table.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use regex::Regex;

use crate::corpus::CorpusStore;
use crate::error::{Error, Result};

/// PACS-shaped subject codes such as `98.80.-k` or `98.80.Es`.
pub const PACS_PATTERN: &str = r"^[0-9]{2}\.[0-9]{2}\.[-+A-Za-z]{2}$";

#[derive(Debug, Clone)]
pub struct KeywordMap {
    case_fold: bool,
    synonyms: BTreeMap<String, String>,
    passthrough: Vec<Regex>,
}

impl Default for KeywordMap {
    fn default() -> Self {
        KeywordMap {
            case_fold: true,
            synonyms: BTreeMap::new(),
            passthrough: vec![Regex::new(PACS_PATTERN).expect("valid pattern")],
        }
    }
}

fn collapse_whitespace(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl KeywordMap {
    /// Builds a map from synonym pairs `(raw, canonical)` and passthrough
    /// patterns. Synonym keys are normalized; canonical values must already
    /// be fixed points of normalization.
    pub fn new<S, P>(case_fold: bool, synonyms: S, passthrough: P) -> Result<Self>
    where
        S: IntoIterator<Item = (String, String)>,
        P: IntoIterator<Item = String>,
    {
        let passthrough = passthrough
            .into_iter()
            .map(|p| {
                Regex::new(&p)
                    .map_err(|e| Error::InvalidArgument(format!("bad passthrough pattern {p:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut map = KeywordMap {
            case_fold,
            synonyms: BTreeMap::new(),
            passthrough,
        };
        let mut table = BTreeMap::new();
        for (raw, canonical) in synonyms {
            let key = map.base_normalize(&raw).ok_or_else(|| {
                Error::InvalidArgument(format!("synonym key {raw:?} normalizes to nothing"))
            })?;
            match table.get(&key) {
                Some(prev) if *prev != canonical => {
                    return Err(Error::InvalidArgument(format!(
                        "synonym key {key:?} maps to both {prev:?} and {canonical:?}"
                    )))
                }
                _ => {
                    table.insert(key, canonical);
                }
            }
        }
        for canonical in table.values() {
            if map.base_normalize(canonical).as_deref() != Some(canonical.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "synonym target {canonical:?} is not a normalized token"
                )));
            }
            if let Some(next) = table.get(canonical) {
                if next != canonical {
                    return Err(Error::InvalidArgument(format!(
                        "synonym target {canonical:?} is itself remapped to {next:?}"
                    )));
                }
            }
        }
        map.synonyms = table;
        Ok(map)
    }

    /// Loads a `raw<TAB>canonical` synonym file and an optional file of
    /// passthrough patterns (one regular expression per line). Without a
    /// pattern file the PACS pattern is used.
    pub fn from_files(synonyms: Option<&Path>, passthrough: Option<&Path>) -> Result<Self> {
        let pairs = match synonyms {
            Some(p) => read_synonyms(p)?,
            None => Vec::new(),
        };
        let patterns = match passthrough {
            Some(p) => read_patterns(p)?,
            None => vec![PACS_PATTERN.to_string()],
        };
        KeywordMap::new(true, pairs, patterns)
    }

    pub fn case_fold(&self) -> bool {
        self.case_fold
    }

    pub fn synonyms(&self) -> &BTreeMap<String, String> {
        &self.synonyms
    }

    pub fn passthrough_patterns(&self) -> impl Iterator<Item = &str> {
        self.passthrough.iter().map(Regex::as_str)
    }

    fn is_passthrough(&self, token: &str) -> bool {
        self.passthrough.iter().any(|re| re.is_match(token))
    }

    fn base_normalize(&self, raw: &str) -> Option<String> {
        let collapsed = collapse_whitespace(raw);
        if collapsed.is_empty() {
            return None;
        }
        if !self.case_fold || self.is_passthrough(&collapsed) {
            Some(collapsed)
        } else {
            Some(collapsed.to_lowercase())
        }
    }

    /// Normalized token for `raw`, or `None` when the keyword should be
    /// dropped.
    pub fn normalize_keyword(&self, raw: &str) -> Option<String> {
        let token = self.base_normalize(raw)?;
        Some(match self.synonyms.get(&token) {
            Some(canonical) => canonical.clone(),
            None => token,
        })
    }

    /// Synonym table in file form, sorted by key.
    pub fn synonyms_tsv(&self) -> String {
        self.synonyms
            .iter()
            .map(|(k, v)| format!("{k}\t{v}\n"))
            .collect()
    }

    pub fn patterns_text(&self) -> String {
        self.passthrough_patterns().map(|p| format!("{p}\n")).collect()
    }
}

pub fn read_synonyms(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (raw, canonical) = line.split_once('\t').ok_or_else(|| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected raw<TAB>canonical".into(),
        })?;
        pairs.push((raw.to_string(), canonical.to_string()));
    }
    Ok(pairs)
}

pub fn read_patterns(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut patterns = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        Regex::new(line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        patterns.push(line.to_string());
    }
    Ok(patterns)
}

/// Token table for the topic space: dense column indices in lexicographic
/// token order with per-token document frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    df: Vec<usize>,
    index: HashMap<String, usize>,
    pub min_df: usize,
    pub max_df_fraction: f64,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from persisted columns. `tokens` must be sorted
    /// and unique.
    pub fn from_parts(
        tokens: Vec<String>,
        df: Vec<usize>,
        min_df: usize,
        max_df_fraction: f64,
    ) -> Result<Self> {
        if tokens.len() != df.len() {
            return Err(Error::InvalidArgument("token and df columns differ in length".into()));
        }
        if tokens.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("tokens are not strictly sorted".into()));
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary {
            tokens,
            df,
            index,
            min_df,
            max_df_fraction,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn df(&self) -> &[usize] {
        &self.df
    }

    pub fn column(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Sorted, deduplicated in-vocabulary columns for a raw keyword list.
    pub fn columns_for<S: AsRef<str>>(&self, map: &KeywordMap, keywords: &[S]) -> Vec<usize> {
        let mut cols: Vec<usize> = keywords
            .iter()
            .filter_map(|k| map.normalize_keyword(k.as_ref()))
            .filter_map(|t| self.column(&t))
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }
}

/// Collects normalized keywords over the corpus (binary per document) and
/// keeps tokens with `min_df <= df <= max_df_fraction * corpus size`.
pub fn build_vocabulary(
    store: &CorpusStore,
    map: &KeywordMap,
    min_df: usize,
    max_df_fraction: f64,
) -> Result<Vocabulary> {
    if min_df < 1 {
        return Err(Error::InvalidArgument("min_df must be at least 1".into()));
    }
    if !(max_df_fraction > 0.0 && max_df_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "max_df_fraction must lie in (0, 1], got {max_df_fraction}"
        )));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in store.docs() {
        let tokens: HashSet<String> = doc
            .keywords
            .iter()
            .filter_map(|k| map.normalize_keyword(k))
            .collect();
        for t in tokens {
            *df.entry(t).or_default() += 1;
        }
    }
    let ceiling = max_df_fraction * store.len() as f64;
    let (tokens, df): (Vec<_>, Vec<_>) = df
        .into_iter()
        .filter(|&(_, n)| n >= min_df && n as f64 <= ceiling)
        .unzip();
    if tokens.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Vocabulary::from_parts(tokens, df, min_df, max_df_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentRecord;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn store(keywords: &[&[&str]]) -> CorpusStore {
        let date = NaiveDate::from_ymd_opt(2009, 1, 1).unwrap();
        let recs = keywords
            .iter()
            .enumerate()
            .map(|(i, ks)| DocumentRecord::new(format!("d{i}"), date).with_keywords(ks.iter().copied()))
            .collect();
        CorpusStore::from_records(recs).unwrap().0
    }

    #[test]
    fn case_fold_and_trim() {
        let map = KeywordMap::default();
        assert_eq!(map.normalize_keyword("Cosmology ").as_deref(), Some("cosmology"));
        assert_eq!(
            map.normalize_keyword("  Dark \t  Matter\n").as_deref(),
            Some("dark matter")
        );
        assert_eq!(map.normalize_keyword("   "), None);
    }

    #[test]
    fn pacs_passthrough() {
        let map = KeywordMap::default();
        assert_eq!(map.normalize_keyword("98.80.-k").as_deref(), Some("98.80.-k"));
        assert_eq!(map.normalize_keyword(" 98.80.Es").as_deref(), Some("98.80.Es"));
    }

    #[test]
    fn synonym_lookup() {
        let map = KeywordMap::new(
            true,
            [("galaxies: clusters".to_string(), "galaxy-cluster".to_string())],
            Vec::new(),
        )
        .unwrap();
        assert_eq!(
            map.normalize_keyword("galaxies: clusters").as_deref(),
            Some("galaxy-cluster")
        );
        assert_eq!(
            map.normalize_keyword("Galaxies:  Clusters").as_deref(),
            Some("galaxy-cluster")
        );
    }

    #[test]
    fn synonym_targets_must_be_fixed_points() {
        let upper = KeywordMap::new(true, [("a".into(), "B".into())], Vec::new());
        assert!(upper.is_err());
        let chain = KeywordMap::new(true, [("a".into(), "b".into()), ("b".into(), "c".into())], Vec::new());
        assert!(chain.is_err());
        let conflict = KeywordMap::new(true, [("A".into(), "b".into()), ("a".into(), "c".into())], Vec::new());
        assert!(conflict.is_err());
        let selfmap = KeywordMap::new(true, [("a".into(), "b".into()), ("b".into(), "b".into())], Vec::new());
        assert!(selfmap.is_ok());
    }

    #[test]
    fn vocabulary_df_bounds_and_order() {
        let s = store(&[&["t", "b"], &["t", "a", "b"], &["T", "a"]]);
        let map = KeywordMap::default();
        let v = build_vocabulary(&s, &map, 1, 1.0).unwrap();
        assert_eq!(v.tokens(), ["a", "b", "t"]);
        assert_eq!(v.df(), [2, 2, 3]);

        let v = build_vocabulary(&s, &map, 1, 0.7).unwrap();
        assert_eq!(v.tokens(), ["a", "b"]);
        assert_eq!(v.column("a"), Some(0));
        assert_eq!(v.column("b"), Some(1));

        let everywhere = store(&[&["t"], &["t"], &["t", "u"], &["t", "u"]]);
        let v = build_vocabulary(&everywhere, &map, 1, 0.5).unwrap();
        assert_eq!(v.tokens(), ["u"]);
    }

    #[test]
    fn multiplicity_is_ignored() {
        let s = store(&[&["x", "X", "x "], &["x"]]);
        let v = build_vocabulary(&s, &KeywordMap::default(), 1, 1.0).unwrap();
        assert_eq!(v.df(), [2]);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let s = store(&[&["a"], &["b"]]);
        assert!(matches!(
            build_vocabulary(&s, &KeywordMap::default(), 2, 1.0),
            Err(Error::EmptyVocabulary)
        ));
        assert!(build_vocabulary(&s, &KeywordMap::default(), 0, 1.0).is_err());
        assert!(build_vocabulary(&s, &KeywordMap::default(), 1, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(raw in "\\PC{0,24}", code in "[0-9]{2}\\.[0-9]{2}\\.[-+A-Za-z]{2}") {
            let map = KeywordMap::new(
                true,
                [("galaxies: clusters".to_string(), "galaxy-cluster".to_string())],
                vec![PACS_PATTERN.to_string()],
            ).unwrap();
            for input in [raw.as_str(), code.as_str()] {
                if let Some(once) = map.normalize_keyword(input) {
                    prop_assert_eq!(map.normalize_keyword(&once), Some(once.clone()));
                }
            }
        }

        #[test]
        fn df_matches_brute_force(docs in proptest::collection::vec(
            proptest::collection::vec("[a-eA-E]{1,2}", 0..6), 1..30)) {
            let recs: Vec<Vec<&str>> = docs.iter().map(|d| d.iter().map(String::as_str).collect()).collect();
            let slices: Vec<&[&str]> = recs.iter().map(Vec::as_slice).collect();
            let s = store(&slices);
            let map = KeywordMap::default();
            if let Ok(v) = build_vocabulary(&s, &map, 1, 1.0) {
                for (t, &df) in v.tokens().iter().zip(v.df()) {
                    let brute = docs
                        .iter()
                        .filter(|d| d.iter().any(|k| k.to_lowercase() == *t))
                        .count();
                    prop_assert_eq!(df, brute);
                }
                let again = build_vocabulary(&s, &map, 1, 1.0).unwrap();
                prop_assert_eq!(v, again);
            }
        }
    }
}
