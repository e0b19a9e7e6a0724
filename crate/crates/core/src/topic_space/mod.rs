//! The reduced-dimensional topic space.
//!
//! Documents are described by binary keyword indicators, weighted by inverse
//! document frequency and row-normalized. A rank-D truncated SVD of that
//! matrix yields a keyword basis; a document (or any keyword set) is placed
//! by mapping its weighted indicator vector through the basis and
//! re-normalizing. Keyword-less documents are placed at the normalized mean
//! of their in-corpus references, and persons at the normalized mean of the
//! documents they read.

mod svd;

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusStore;
use crate::error::{Error, Result};
use crate::keyword_norm::{KeywordMap, Vocabulary};

pub use svd::SvdOptions;
use svd::{truncated_svd, SparseRows};

/// Tolerance for the unit-norm invariant.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Projections shorter than this carry no direction.
const MIN_NORM: f64 = 1e-9;

/// A unit-norm point in topic space.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicVector(Vec<f32>);

impl TopicVector {
    /// Normalizes `values`; `None` for zero or non-finite input.
    pub fn from_f64(values: &[f64]) -> Option<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < MIN_NORM {
            return None;
        }
        Some(TopicVector(values.iter().map(|v| (v / norm) as f32).collect()))
    }

    /// Accepts already-normalized values, checking the norm.
    pub fn from_unit(values: Vec<f32>) -> Result<Self> {
        let norm = values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "vector norm {norm} is not 1 within {UNIT_TOLERANCE}"
            )));
        }
        Ok(TopicVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    fn accumulate_into(&self, acc: &mut [f64], weight: f64) {
        for (a, &v) in acc.iter_mut().zip(&self.0) {
            *a += weight * f64::from(v);
        }
    }
}

/// Cosine similarity of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine(a: &TopicVector, b: &TopicVector) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let dot: f64 = a
        .0
        .iter()
        .zip(&b.0)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    dot.clamp(-1.0, 1.0)
}

/// Normalized (optionally weighted) mean of vectors.
fn centroid<'a>(vectors: impl IntoIterator<Item = (&'a TopicVector, f64)>, dim: usize) -> Option<TopicVector> {
    let mut acc = vec![0.0; dim];
    for (v, w) in vectors {
        v.accumulate_into(&mut acc, w);
    }
    TopicVector::from_f64(&acc)
}

/// How a document obtained its topic vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Keywords,
    Bibliography,
    Excluded,
}

/// Topic vectors by document, in corpus row order.
#[derive(Debug, Clone)]
pub struct DocVectors {
    ids: Vec<String>,
    rows: HashMap<String, usize>,
    vectors: Vec<Option<TopicVector>>,
    placements: Vec<Placement>,
}

impl DocVectors {
    /// Table over `ids` with no vectors yet.
    pub fn empty(ids: Vec<String>) -> Self {
        let rows = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let n = ids.len();
        DocVectors {
            ids,
            rows,
            vectors: vec![None; n],
            placements: vec![Placement::Excluded; n],
        }
    }

    /// Table from explicit pairs, all marked as keyword-placed.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, TopicVector)>) -> Self {
        let (ids, vecs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let mut table = DocVectors::empty(ids);
        for (row, v) in vecs.into_iter().enumerate() {
            table.set(row, v, Placement::Keywords);
        }
        table
    }

    pub(crate) fn from_parts(
        ids: Vec<String>,
        vectors: Vec<Option<TopicVector>>,
        placements: Vec<Placement>,
    ) -> Self {
        let mut table = DocVectors::empty(ids);
        table.vectors = vectors;
        table.placements = placements;
        table
    }

    fn set(&mut self, row: usize, v: TopicVector, how: Placement) {
        self.vectors[row] = Some(v);
        self.placements[row] = how;
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&TopicVector> {
        self.rows.get(doc_id).and_then(|&r| self.vectors[r].as_ref())
    }

    pub fn placement(&self, doc_id: &str) -> Option<Placement> {
        self.rows.get(doc_id).map(|&r| self.placements[r])
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    pub fn row_vector(&self, row: usize) -> Option<&TopicVector> {
        self.vectors[row].as_ref()
    }

    /// Documents with a vector, in row order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &TopicVector)> {
        self.ids
            .iter()
            .zip(&self.vectors)
            .filter_map(|(id, v)| v.as_ref().map(|v| (id.as_str(), v)))
    }

    pub fn count_vectored(&self) -> usize {
        self.vectors.iter().filter(|v| v.is_some()).count()
    }
}

/// Keyword basis and weights defining the topic space.
#[derive(Debug, Clone)]
pub struct TopicModel {
    dims: usize,
    keyword_map: KeywordMap,
    vocabulary: Vocabulary,
    idf: Vec<f64>,
    /// `|vocab| x dims`, row-major.
    basis: Vec<f32>,
    singular_values: Vec<f32>,
}

impl TopicModel {
    pub fn from_parts(
        keyword_map: KeywordMap,
        vocabulary: Vocabulary,
        idf: Vec<f64>,
        basis: Vec<f32>,
        singular_values: Vec<f32>,
    ) -> Result<Self> {
        let dims = singular_values.len();
        if idf.len() != vocabulary.len() || basis.len() != vocabulary.len() * dims || dims == 0 {
            return Err(Error::InvalidArgument("topic model parts disagree in shape".into()));
        }
        if singular_values.windows(2).any(|w| w[0] < w[1]) || singular_values.iter().any(|&s| s < 0.0) {
            return Err(Error::InvalidArgument("singular values must be non-negative and non-increasing".into()));
        }
        Ok(TopicModel {
            dims,
            keyword_map,
            vocabulary,
            idf,
            basis,
            singular_values,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn keyword_map(&self) -> &KeywordMap {
        &self.keyword_map
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn basis(&self) -> &[f32] {
        &self.basis
    }

    pub fn singular_values(&self) -> &[f32] {
        &self.singular_values
    }

    fn project_columns(&self, cols: &[usize]) -> Option<TopicVector> {
        let mut acc = vec![0.0f64; self.dims];
        for &c in cols {
            let w = self.idf[c];
            let row = &self.basis[c * self.dims..(c + 1) * self.dims];
            for (a, &b) in acc.iter_mut().zip(row) {
                *a += w * f64::from(b);
            }
        }
        TopicVector::from_f64(&acc)
    }

    /// Places a raw keyword list in the space.
    pub fn project_keywords<S: AsRef<str>>(&self, keywords: &[S]) -> Result<TopicVector> {
        let cols = self.vocabulary.columns_for(&self.keyword_map, keywords);
        if cols.is_empty() {
            return Err(Error::NoSignal("no in-vocabulary keywords".into()));
        }
        self.project_columns(&cols)
            .ok_or_else(|| Error::NoSignal("keywords project to the origin".into()))
    }
}

/// Builds the topic model and places every document that has usable
/// keywords. Documents without keyword signal get no vector here; see
/// [`place_unkeyworded`].
pub fn build_topic_model(
    store: &CorpusStore,
    keyword_map: KeywordMap,
    vocabulary: Vocabulary,
    dims: usize,
    seed: u64,
    opts: SvdOptions,
) -> Result<(TopicModel, DocVectors)> {
    let doc_cols: Vec<Vec<usize>> = store
        .docs()
        .iter()
        .map(|d| vocabulary.columns_for(&keyword_map, &d.keywords))
        .collect();
    let keyworded = doc_cols.iter().filter(|c| !c.is_empty()).count();
    if keyworded == 0 {
        return Err(Error::NoKeywordedDocuments);
    }
    let idf: Vec<f64> = vocabulary
        .df()
        .iter()
        .map(|&df| (keyworded as f64 / df as f64).ln())
        .collect();

    let mut matrix = SparseRows::new(vocabulary.len());
    let mut matrix_rows = Vec::new();
    for (row, cols) in doc_cols.iter().enumerate() {
        let norm = cols.iter().map(|&c| idf[c] * idf[c]).sum::<f64>().sqrt();
        if norm < MIN_NORM {
            continue;
        }
        matrix.push_row(cols.iter().map(|&c| (c, idf[c] / norm)));
        matrix_rows.push(row);
    }
    if matrix.nrows() == 0 {
        return Err(Error::NoKeywordedDocuments);
    }
    let achievable = vocabulary.len().min(matrix.nrows());
    if dims > achievable {
        return Err(Error::RankExceeded {
            requested: dims,
            achievable,
        });
    }
    if dims < 2 {
        return Err(Error::InvalidArgument(format!("dimension must be at least 2, got {dims}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = truncated_svd(&matrix, dims, opts, &mut rng);
    let mut basis = Vec::with_capacity(vocabulary.len() * dims);
    for r in 0..vocabulary.len() {
        for j in 0..dims {
            basis.push(t.right[(r, j)] as f32);
        }
    }
    let singular_values = t.singular_values.iter().map(|&s| s as f32).collect();
    let model = TopicModel::from_parts(keyword_map, vocabulary, idf, basis, singular_values)?;

    let mut vectors = DocVectors::empty(store.docs().iter().map(|d| d.doc_id.clone()).collect());
    for row in matrix_rows {
        if let Some(v) = model.project_columns(&doc_cols[row]) {
            vectors.set(row, v, Placement::Keywords);
        }
    }
    Ok((model, vectors))
}

/// Relative Frobenius reconstruction error of the weighted matrix in the
/// model's basis.
pub fn reconstruction_error(store: &CorpusStore, model: &TopicModel) -> f64 {
    let (mut total, mut kept) = (0.0, 0.0);
    let d = model.dims;
    for doc in store.docs() {
        let cols = model.vocabulary.columns_for(&model.keyword_map, &doc.keywords);
        let norm2: f64 = cols.iter().map(|&c| model.idf[c] * model.idf[c]).sum();
        if norm2.sqrt() < MIN_NORM {
            continue;
        }
        let mut proj = vec![0.0f64; d];
        for &c in &cols {
            for (j, p) in proj.iter_mut().enumerate() {
                *p += model.idf[c] * f64::from(model.basis[c * d + j]);
            }
        }
        total += 1.0;
        kept += proj.iter().map(|p| p * p).sum::<f64>() / norm2;
    }
    ((total - kept).max(0.0) / total).sqrt()
}

/// Counts of how documents entered the space.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PlacementReport {
    pub by_keywords: usize,
    pub by_bibliography: usize,
    pub excluded: Vec<String>,
}

/// Second placement pass: documents without a keyword vector are placed at
/// the centroid of their keyword-placed in-corpus references. Documents with
/// neither are excluded.
pub fn place_unkeyworded(store: &CorpusStore, vectors: &mut DocVectors) -> PlacementReport {
    let dim = vectors.iter().next().map(|(_, v)| v.dim()).unwrap_or(0);
    let mut placed = Vec::new();
    for row in 0..vectors.len() {
        if vectors.vectors[row].is_some() {
            continue;
        }
        let refs = store
            .resolved_rows(row)
            .iter()
            .filter(|&&t| vectors.placements[t] == Placement::Keywords)
            .filter_map(|&t| vectors.vectors[t].as_ref())
            .map(|v| (v, 1.0));
        if let Some(v) = centroid(refs, dim) {
            placed.push((row, v));
        }
    }
    for (row, v) in placed {
        vectors.set(row, v, Placement::Bibliography);
    }
    let mut report = PlacementReport::default();
    for (row, p) in vectors.placements.iter().enumerate() {
        match p {
            Placement::Keywords => report.by_keywords += 1,
            Placement::Bibliography => report.by_bibliography += 1,
            Placement::Excluded => report.excluded.push(vectors.ids[row].clone()),
        }
    }
    report
}

/// Result of placing a document by its bibliography.
#[derive(Debug, Clone)]
pub struct BibliographyPlacement {
    pub vector: TopicVector,
    pub used: Vec<String>,
    /// References without a topic vector.
    pub skipped: Vec<String>,
}

/// Places a document at the normalized mean of its references' vectors.
pub fn place_by_bibliography<S: AsRef<str>>(
    vectors: &DocVectors,
    refs: &[S],
) -> Result<BibliographyPlacement> {
    if refs.is_empty() {
        return Err(Error::InvalidArgument("reference list is empty".into()));
    }
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    let mut found = Vec::new();
    for r in refs {
        match vectors.get(r.as_ref()) {
            Some(v) => {
                used.push(r.as_ref().to_string());
                found.push(v);
            }
            None => skipped.push(r.as_ref().to_string()),
        }
    }
    let dim = found.first().map(|v| v.dim()).unwrap_or(0);
    let vector = centroid(found.into_iter().map(|v| (v, 1.0)), dim)
        .ok_or_else(|| Error::NoSignal("no reference has a topic vector".into()))?;
    Ok(BibliographyPlacement {
        vector,
        used,
        skipped,
    })
}

/// A reader placed in topic space.
#[derive(Debug, Clone)]
pub struct PersonProfile {
    pub person_id: String,
    pub interest: TopicVector,
    /// Reads that contributed a vector, counting repeats.
    pub read_count: usize,
    pub history: BTreeSet<String>,
}

/// Interest vector of a person: normalized mean over reads, repeats counted.
pub fn interest_vector<S: AsRef<str>>(
    vectors: &DocVectors,
    person_id: &str,
    reads: &[S],
) -> Result<PersonProfile> {
    let contributing: Vec<&TopicVector> = reads.iter().filter_map(|r| vectors.get(r.as_ref())).collect();
    let dim = contributing.first().map(|v| v.dim()).unwrap_or(0);
    let read_count = contributing.len();
    let interest = centroid(contributing.into_iter().map(|v| (v, 1.0)), dim)
        .ok_or_else(|| Error::NoSignal(format!("no read of {person_id:?} has a topic vector")))?;
    Ok(PersonProfile {
        person_id: person_id.to_string(),
        interest,
        read_count,
        history: reads.iter().map(|r| r.as_ref().to_string()).collect(),
    })
}
