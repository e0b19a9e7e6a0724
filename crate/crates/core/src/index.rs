//! The precomputed index: topic model, document vectors and thematic map,
//! persisted as a directory of flat files with a JSON manifest.
//!
//! Layout:
//!
//! ```text
//! manifest.json        build parameters, row order, placements
//! corpus.jsonl         canonical corpus records
//! synonyms.tsv         keyword synonym table
//! passthrough.txt      verbatim keyword patterns
//! vocab.tsv            token<TAB>index<TAB>df<TAB>idf
//! vectors.f32          one row per document (zeros when excluded)
//! basis.f32            |vocab| x D keyword basis
//! singular_values.f32
//! centroids.f32        K x D
//! assignments.tsv      doc_id<TAB>cluster_id
//! ```
//!
//! Matrices are little-endian `f32`, row-major.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{cluster_documents, ClusterModel};
use crate::corpus::{read_corpus, CorpusStore, LoadReport};
use crate::error::{Error, Result};
use crate::keyword_norm::{build_vocabulary, KeywordMap, Vocabulary};
use crate::recommender::RecommenderConfig;
use crate::topic_space::{
    build_topic_model, place_unkeyworded, DocVectors, Placement, PlacementReport, SvdOptions, TopicModel,
    TopicVector,
};
use crate::usage::ReaderFilter;

pub const FORMAT_VERSION: u32 = 1;

/// Everything that determines a build besides the input files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildParams {
    pub dims: usize,
    pub clusters: usize,
    pub seed: u64,
    pub min_df: usize,
    pub max_df_fraction: f64,
    pub svd: SvdOptions,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            dims: 100,
            clusters: 100,
            seed: 0,
            min_df: 2,
            max_df_fraction: 0.5,
            svd: SvdOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestParams {
    pub min_df: usize,
    pub max_df_fraction: f64,
    pub svd_oversample: usize,
    pub svd_power_iterations: usize,
    pub case_fold: bool,
    pub group_size: usize,
    pub also_read_pool: usize,
    pub closest_k: usize,
    pub session_gap_secs: u64,
    pub min_reads: usize,
    pub max_reads: usize,
    pub window_days: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    /// Wall-clock build time; the only field that varies between identical builds.
    pub built_at: String,
    /// SHA-256 of the corpus file as given to the build.
    pub corpus_checksum: String,
    pub doc_count: usize,
    pub dims: usize,
    pub clusters: usize,
    pub vocab_size: usize,
    pub seed: u64,
    pub params: ManifestParams,
    /// Canonical row order.
    pub docs: Vec<String>,
    pub placements: Vec<Placement>,
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub load: LoadReport,
    pub placement: PlacementReport,
    pub vocab_size: usize,
}

#[derive(Debug, Clone)]
pub struct Index {
    pub manifest: IndexManifest,
    pub corpus: CorpusStore,
    pub model: TopicModel,
    pub vectors: DocVectors,
    pub clusters: ClusterModel,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Build time, honoring `SOURCE_DATE_EPOCH` for reproducible manifests.
fn build_timestamp() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs() as i64)
                .unwrap_or(0)
        });
    DateTime::from_timestamp(secs, 0)
        .unwrap_or_default()
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

impl Index {
    /// Builds from raw corpus file bytes.
    pub fn build_from_bytes(
        corpus_bytes: &[u8],
        keyword_map: KeywordMap,
        params: &BuildParams,
    ) -> Result<(Index, BuildReport)> {
        let (corpus, load) = read_corpus(corpus_bytes, Path::new("<corpus>"))?;
        let mut built = Index::build(corpus, sha256_hex(corpus_bytes), keyword_map, params)?;
        built.1.load = load;
        Ok(built)
    }

    pub fn build_from_file(
        path: &Path,
        keyword_map: KeywordMap,
        params: &BuildParams,
    ) -> Result<(Index, BuildReport)> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (corpus, load) = read_corpus(bytes.as_slice(), path)?;
        let mut built = Index::build(corpus, sha256_hex(&bytes), keyword_map, params)?;
        built.1.load = load;
        Ok(built)
    }

    pub fn build(
        corpus: CorpusStore,
        corpus_checksum: String,
        keyword_map: KeywordMap,
        params: &BuildParams,
    ) -> Result<(Index, BuildReport)> {
        let vocab = build_vocabulary(&corpus, &keyword_map, params.min_df, params.max_df_fraction)?;
        let vocab_size = vocab.len();
        let case_fold = keyword_map.case_fold();
        let (model, mut vectors) =
            build_topic_model(&corpus, keyword_map, vocab, params.dims, params.seed, params.svd)?;
        let placement = place_unkeyworded(&corpus, &mut vectors);
        let clusters = cluster_documents(&vectors, params.clusters, params.seed)?;

        let rc = RecommenderConfig::default();
        let rf = ReaderFilter::default();
        let manifest = IndexManifest {
            format_version: FORMAT_VERSION,
            built_at: build_timestamp(),
            corpus_checksum,
            doc_count: corpus.len(),
            dims: params.dims,
            clusters: params.clusters,
            vocab_size,
            seed: params.seed,
            params: ManifestParams {
                min_df: params.min_df,
                max_df_fraction: params.max_df_fraction,
                svd_oversample: params.svd.oversample,
                svd_power_iterations: params.svd.power_iterations,
                case_fold,
                group_size: rc.group_size,
                also_read_pool: rc.also_read_pool,
                closest_k: rc.closest_k,
                session_gap_secs: rc.session_gap.as_secs(),
                min_reads: rf.min_reads,
                max_reads: rf.max_reads,
                window_days: rf.window_days,
            },
            docs: vectors.ids().to_vec(),
            placements: vectors.placements().to_vec(),
        };
        let report = BuildReport {
            load: LoadReport::default(),
            placement,
            vocab_size,
        };
        Ok((
            Index {
                manifest,
                corpus,
                model,
                vectors,
                clusters,
            },
            report,
        ))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(p, e))
        };
        let dims = self.model.dims();
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        write("manifest.json", manifest.as_bytes())?;
        write("corpus.jsonl", self.corpus.to_canonical_jsonl().as_bytes())?;
        write("synonyms.tsv", self.model.keyword_map().synonyms_tsv().as_bytes())?;
        write("passthrough.txt", self.model.keyword_map().patterns_text().as_bytes())?;

        let vocab = self.model.vocabulary();
        let mut tsv = String::new();
        for (i, (t, df)) in vocab.tokens().iter().zip(vocab.df()).enumerate() {
            tsv.push_str(&format!("{t}\t{i}\t{df}\t{}\n", self.model.idf()[i]));
        }
        write("vocab.tsv", tsv.as_bytes())?;

        let mut rows = Vec::with_capacity(self.vectors.len() * dims);
        for r in 0..self.vectors.len() {
            match self.vectors.row_vector(r) {
                Some(v) => rows.extend_from_slice(v.as_slice()),
                None => rows.extend(std::iter::repeat_n(0.0f32, dims)),
            }
        }
        write("vectors.f32", &f32_bytes(&rows))?;
        write("basis.f32", &f32_bytes(self.model.basis()))?;
        write("singular_values.f32", &f32_bytes(self.model.singular_values()))?;
        let centroids: Vec<f32> = self
            .clusters
            .centroids()
            .iter()
            .flat_map(|c| c.as_slice().iter().copied())
            .collect();
        write("centroids.f32", &f32_bytes(&centroids))?;

        let mut assignments = String::new();
        for (id, _) in self.vectors.iter() {
            let c = self.clusters.cluster_of(id).expect("vectored documents are assigned");
            assignments.push_str(&format!("{id}\t{c}\n"));
        }
        write("assignments.tsv", assignments.as_bytes())
    }

    /// Loads and validates an index directory. Any inconsistency is reported
    /// as [`Error::CorruptIndex`].
    pub fn load(dir: &Path) -> Result<Index> {
        let corrupt = |msg: String| Error::CorruptIndex(msg);
        let read = |name: &str| fs::read(dir.join(name)).map_err(|e| corrupt(format!("{name}: {e}")));
        let read_text = |name: &str| {
            String::from_utf8(read(name)?).map_err(|e| corrupt(format!("{name}: {e}")))
        };

        let manifest: IndexManifest = serde_json::from_str(&read_text("manifest.json")?)
            .map_err(|e| corrupt(format!("manifest.json: {e}")))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {}", manifest.format_version)));
        }
        let dims = manifest.dims;

        let (corpus, _) = read_corpus(read("corpus.jsonl")?.as_slice(), &dir.join("corpus.jsonl"))
            .map_err(|e| corrupt(e.to_string()))?;
        let ids: Vec<&str> = corpus.docs().iter().map(|d| d.doc_id.as_str()).collect();
        if ids != manifest.docs.iter().map(String::as_str).collect::<Vec<_>>()
            || manifest.placements.len() != ids.len()
            || manifest.doc_count != ids.len()
        {
            return Err(corrupt("corpus rows disagree with manifest".into()));
        }

        let synonyms: Vec<(String, String)> = read_text("synonyms.tsv")?
            .lines()
            .map(|l| {
                l.split_once('\t')
                    .map(|(a, b)| (a.to_string(), b.to_string()))
                    .ok_or_else(|| corrupt("synonyms.tsv: bad line".into()))
            })
            .collect::<Result<_>>()?;
        let patterns: Vec<String> = read_text("passthrough.txt")?.lines().map(str::to_string).collect();
        let keyword_map = KeywordMap::new(manifest.params.case_fold, synonyms, patterns)
            .map_err(|e| corrupt(e.to_string()))?;

        let (mut tokens, mut df, mut idf) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in read_text("vocab.tsv")?.lines().enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            let parsed = match f[..] {
                [t, idx, d, w] => idx
                    .parse::<usize>()
                    .ok()
                    .filter(|&idx| idx == i)
                    .and(d.parse::<usize>().ok())
                    .zip(w.parse::<f64>().ok())
                    .map(|(d, w)| (t.to_string(), d, w)),
                _ => None,
            };
            let (t, d, w) = parsed.ok_or_else(|| corrupt(format!("vocab.tsv line {}", i + 1)))?;
            tokens.push(t);
            df.push(d);
            idf.push(w);
        }
        if tokens.len() != manifest.vocab_size {
            return Err(corrupt("vocabulary size disagrees with manifest".into()));
        }
        let vocab = Vocabulary::from_parts(tokens, df, manifest.params.min_df, manifest.params.max_df_fraction)
            .map_err(|e| corrupt(e.to_string()))?;

        let basis = read_f32s(&read("basis.f32")?, manifest.vocab_size * dims, "basis.f32")?;
        let singular_values = read_f32s(&read("singular_values.f32")?, dims, "singular_values.f32")?;
        let model = TopicModel::from_parts(keyword_map, vocab, idf, basis, singular_values)
            .map_err(|e| corrupt(e.to_string()))?;

        let raw = read_f32s(&read("vectors.f32")?, ids.len() * dims, "vectors.f32")?;
        let mut vectors = Vec::with_capacity(ids.len());
        for (r, placement) in manifest.placements.iter().enumerate() {
            let row = &raw[r * dims..(r + 1) * dims];
            vectors.push(match placement {
                Placement::Excluded => {
                    if row.iter().any(|&x| x != 0.0) {
                        return Err(corrupt(format!("excluded row {r} is not zero")));
                    }
                    None
                }
                _ => Some(
                    TopicVector::from_unit(row.to_vec())
                        .map_err(|e| corrupt(format!("vectors.f32 row {r}: {e}")))?,
                ),
            });
        }
        let vectors = DocVectors::from_parts(manifest.docs.clone(), vectors, manifest.placements.clone());

        let raw = read_f32s(&read("centroids.f32")?, manifest.clusters * dims, "centroids.f32")?;
        let centroids = raw
            .chunks(dims)
            .map(|c| TopicVector::from_unit(c.to_vec()).map_err(|e| corrupt(format!("centroids.f32: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut assignments = Vec::new();
        for (i, line) in read_text("assignments.tsv")?.lines().enumerate() {
            let (id, c) = line
                .split_once('\t')
                .and_then(|(id, c)| c.parse::<usize>().ok().map(|c| (id.to_string(), c)))
                .ok_or_else(|| corrupt(format!("assignments.tsv line {}", i + 1)))?;
            if vectors.get(&id).is_none() {
                return Err(corrupt(format!("assignment for unplaced document {id:?}")));
            }
            assignments.push((id, c));
        }
        if assignments.len() != vectors.count_vectored() {
            return Err(corrupt("assignments do not cover every placed document".into()));
        }
        let clusters = ClusterModel::from_parts(centroids, assignments, manifest.seed)
            .map_err(|e| corrupt(e.to_string()))?;

        Ok(Index {
            manifest,
            corpus,
            model,
            vectors,
            clusters,
        })
    }

    pub fn stats(&self) -> IndexStats {
        let clusters = self.clusters.cluster_summaries(&self.vectors);
        let sims: Vec<f64> = clusters.iter().map(|c| c.1).collect();
        let mean = sims.iter().sum::<f64>() / sims.len() as f64;
        let var = sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / sims.len() as f64;
        let sv = self.model.singular_values();
        let energy: f64 = sv.iter().map(|&s| f64::from(s).powi(2)).sum();
        let half: f64 = sv[..sv.len().div_ceil(2)].iter().map(|&s| f64::from(s).powi(2)).sum();
        IndexStats {
            doc_count: self.corpus.len(),
            placed: self.vectors.count_vectored(),
            dims: self.model.dims(),
            vocab_size: self.model.vocabulary().len(),
            clusters,
            mean_intra_similarity: mean,
            intra_similarity_std: var.sqrt(),
            first_singular_value: f64::from(sv[0]),
            last_singular_value: f64::from(sv[sv.len() - 1]),
            leading_half_energy: if energy > 0.0 { half / energy } else { 0.0 },
        }
    }
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_f32s(bytes: &[u8], expected: usize, name: &str) -> Result<Vec<f32>> {
    if bytes.len() != expected * 4 {
        return Err(Error::CorruptIndex(format!(
            "{name}: expected {} bytes, found {}",
            expected * 4,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Summary of a built index.
#[derive(Debug, Clone, Serialize)]
pub struct IndexStats {
    pub doc_count: usize,
    pub placed: usize,
    pub dims: usize,
    pub vocab_size: usize,
    /// `(size, mean member-to-centroid cosine)` per cluster.
    pub clusters: Vec<(usize, f64)>,
    pub mean_intra_similarity: f64,
    pub intra_similarity_std: f64,
    pub first_singular_value: f64,
    pub last_singular_value: f64,
    /// Share of captured spectral energy in the leading half of the dimensions.
    pub leading_half_energy: f64,
}

impl IndexStats {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "documents: {} ({} placed, {} excluded)\n",
            self.doc_count,
            self.placed,
            self.doc_count - self.placed
        ));
        out.push_str(&format!("vocabulary: {}\ndimensions: {}\n", self.vocab_size, self.dims));
        out.push_str(&format!("clusters: {}\n", self.clusters.len()));
        out.push_str("cluster\tsize\tmean_similarity\n");
        for (i, (size, sim)) in self.clusters.iter().enumerate() {
            let flag = if *size == 1 { "\tsingleton" } else { "" };
            out.push_str(&format!("{i}\t{size}\t{sim:.4}{flag}\n"));
        }
        out.push_str(&format!(
            "mean intra-cluster similarity: {:.4} (std {:.4})\n",
            self.mean_intra_similarity, self.intra_similarity_std
        ));
        out.push_str(&format!(
            "singular values: first {:.4}, last {:.4}, ratio {:.4}, leading-half energy {:.4}\n",
            self.first_singular_value,
            self.last_singular_value,
            self.last_singular_value / self.first_singular_value,
            self.leading_half_energy
        ));
        out
    }
}
