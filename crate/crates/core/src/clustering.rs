//! Thematic map: hard clustering of the topic space.
//!
//! Repeated-bisection spherical k-means. Starting from one cluster, the
//! cluster with the largest aggregate dissimilarity (`n - |sum of members|`)
//! is split by a cosine 2-means, best of several seeded trials, until K
//! clusters exist. A k-way refinement then runs until assignments settle.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::topic_space::{cosine, DocVectors, TopicVector};

const BISECT_TRIALS: usize = 5;
const BISECT_ITERATIONS: usize = 50;
const REFINE_ITERATIONS: usize = 100;

#[derive(Debug, Clone)]
pub struct ClusterModel {
    centroids: Vec<TopicVector>,
    members: Vec<Vec<String>>,
    assignment: HashMap<String, usize>,
    pub seed: u64,
}

impl ClusterModel {
    /// Rebuilds a model from centroids and `(doc_id, cluster)` pairs given in
    /// row order.
    pub fn from_parts(
        centroids: Vec<TopicVector>,
        assignments: impl IntoIterator<Item = (String, usize)>,
        seed: u64,
    ) -> Result<Self> {
        let mut members = vec![Vec::new(); centroids.len()];
        let mut assignment = HashMap::new();
        for (id, c) in assignments {
            if c >= centroids.len() {
                return Err(Error::InvalidArgument(format!("cluster id {c} out of range for {id:?}")));
            }
            members[c].push(id.clone());
            if assignment.insert(id.clone(), c).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        if members.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("empty cluster".into()));
        }
        Ok(ClusterModel {
            centroids,
            members,
            assignment,
            seed,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &[TopicVector] {
        &self.centroids
    }

    pub fn members(&self, cluster: usize) -> &[String] {
        &self.members[cluster]
    }

    pub fn cluster_of(&self, doc_id: &str) -> Option<usize> {
        self.assignment.get(doc_id).copied()
    }

    /// Index of the most similar centroid; ties go to the lowest id.
    pub fn assign_cluster(&self, v: &TopicVector) -> usize {
        let mut best = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for (i, c) in self.centroids.iter().enumerate() {
            let s = cosine(v, c);
            if s > best_sim {
                best = i;
                best_sim = s;
            }
        }
        best
    }

    /// Members of `cluster` ranked by descending similarity to `target`
    /// (ties by ascending doc id), excluding `exclude`.
    pub fn nearest_in_cluster(
        &self,
        vectors: &DocVectors,
        target: &TopicVector,
        exclude: Option<&str>,
        cluster: usize,
        n: usize,
    ) -> Result<Vec<(String, f64)>> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        let members = self
            .members
            .get(cluster)
            .ok_or_else(|| Error::InvalidArgument(format!("no cluster {cluster}")))?;
        let mut ranked: Vec<(String, f64)> = members
            .iter()
            .filter(|id| Some(id.as_str()) != exclude)
            .filter_map(|id| vectors.get(id).map(|v| (id.clone(), cosine(target, v))))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(n);
        Ok(ranked)
    }

    /// Per-cluster member count and mean member-to-centroid cosine.
    pub fn cluster_summaries(&self, vectors: &DocVectors) -> Vec<(usize, f64)> {
        self.members
            .iter()
            .zip(&self.centroids)
            .map(|(m, c)| {
                let sims: Vec<f64> = m.iter().filter_map(|id| vectors.get(id)).map(|v| cosine(v, c)).collect();
                let mean = if sims.is_empty() { 0.0 } else { sims.iter().sum::<f64>() / sims.len() as f64 };
                (m.len(), mean)
            })
            .collect()
    }
}

struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn sum(&self, members: &[usize]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for &m in members {
            for (a, x) in acc.iter_mut().zip(self.row(m)) {
                *a += x;
            }
        }
        acc
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let n = norm(&v);
    if n < 1e-12 || !n.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}

fn dissimilarity(points: &Points, members: &[usize]) -> f64 {
    members.len() as f64 - norm(&points.sum(members))
}

/// Splits `members` in two. Both halves are nonempty when `members.len() >= 2`.
fn bisect(points: &Points, members: &[usize], rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut best: Option<(f64, Vec<bool>)> = None;
    for _ in 0..BISECT_TRIALS {
        let a = members[rng.random_range(0..members.len())];
        let mut b = a;
        let mut low = f64::INFINITY;
        for &m in members {
            let s = dot(points.row(a), points.row(m));
            if s < low {
                low = s;
                b = m;
            }
        }
        if low > 1.0 - 1e-12 {
            break;
        }
        let mut centers = [points.row(a).to_vec(), points.row(b).to_vec()];
        let mut side = vec![false; members.len()];
        let mut first = true;
        let mut degenerate = false;
        for _ in 0..BISECT_ITERATIONS {
            let next: Vec<bool> = members
                .iter()
                .map(|&m| dot(points.row(m), &centers[1]) > dot(points.row(m), &centers[0]))
                .collect();
            if !first && next == side {
                break;
            }
            first = false;
            side = next;
            let (left, right) = partition(members, &side);
            match (normalized(points.sum(&left)), normalized(points.sum(&right))) {
                (Some(l), Some(r)) => centers = [l, r],
                _ => {
                    degenerate = true;
                    break;
                }
            }
        }
        if degenerate {
            continue;
        }
        let (left, right) = partition(members, &side);
        let objective = norm(&points.sum(&left)) + norm(&points.sum(&right));
        if best.as_ref().is_none_or(|(o, _)| objective > *o) {
            best = Some((objective, side));
        }
    }
    match best {
        Some((_, side)) => partition(members, &side),
        None => {
            let (last, rest) = members.split_last().expect("nonempty");
            (rest.to_vec(), vec![*last])
        }
    }
}

fn partition(members: &[usize], side: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (&m, &s) in members.iter().zip(side) {
        if s {
            right.push(m);
        } else {
            left.push(m);
        }
    }
    (left, right)
}

fn centroids_of(points: &Points, labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; points.dim]; k];
    let mut first = vec![None; k];
    for (i, &l) in labels.iter().enumerate() {
        first[l].get_or_insert(i);
        for (a, x) in sums[l].iter_mut().zip(points.row(i)) {
            *a += x;
        }
    }
    sums.into_iter()
        .zip(first)
        .map(|(s, f)| normalized(s).unwrap_or_else(|| f.map(|i| points.row(i).to_vec()).unwrap_or_default()))
        .collect()
}

fn best_centroid(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let s = dot(x, centroid);
        if s > best_sim {
            best = c;
            best_sim = s;
        }
    }
    best
}

/// k-way refinement until assignments stop changing. Emptied clusters are
/// reseeded with the point farthest from its own centroid.
fn refine(points: &Points, labels: &mut [usize], k: usize) {
    let mut centroids = centroids_of(points, labels, k);
    for _ in 0..REFINE_ITERATIONS {
        let mut next: Vec<usize> = (0..points.len())
            .map(|i| best_centroid(points.row(i), &centroids))
            .collect();
        let mut counts = vec![0usize; k];
        for &l in &next {
            counts[l] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let far = (0..points.len())
                .filter(|&i| counts[next[i]] >= 2)
                .min_by(|&a, &b| {
                    let sa = dot(points.row(a), &centroids[next[a]]);
                    let sb = dot(points.row(b), &centroids[next[b]]);
                    sa.total_cmp(&sb).then(a.cmp(&b))
                })
                .expect("k <= n leaves a cluster with two members");
            counts[next[far]] -= 1;
            next[far] = empty;
            counts[empty] = 1;
        }
        let changed = next.as_slice() != &*labels;
        labels.copy_from_slice(&next);
        centroids = centroids_of(points, labels, k);
        if !changed {
            break;
        }
    }
}

/// Clusters every vectored document into `k` clusters.
pub fn cluster_documents(vectors: &DocVectors, k: usize, seed: u64) -> Result<ClusterModel> {
    let docs: Vec<(&str, &TopicVector)> = vectors.iter().collect();
    if k == 0 {
        return Err(Error::InvalidArgument("cluster count must be at least 1".into()));
    }
    if k > docs.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot form {k} clusters from {} vectors",
            docs.len()
        )));
    }
    let dim = docs[0].1.dim();
    let points = Points {
        data: docs
            .iter()
            .flat_map(|(_, v)| v.as_slice().iter().map(|&x| f64::from(x)))
            .collect(),
        dim,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clusters: Vec<Vec<usize>> = vec![(0..points.len()).collect()];
    while clusters.len() < k {
        let target = clusters
            .iter()
            .enumerate()
            .filter(|(_, m)| m.len() >= 2)
            .map(|(i, m)| (i, dissimilarity(&points, m), m.len()))
            .max_by(|a, b| {
                a.1.total_cmp(&b.1)
                    .then(a.2.cmp(&b.2))
                    .then(b.0.cmp(&a.0))
            })
            .map(|(i, _, _)| i)
            .expect("k <= n leaves a splittable cluster");
        let (left, right) = bisect(&points, &clusters[target], &mut rng);
        clusters[target] = left;
        clusters.push(right);
    }

    let mut labels = vec![0; points.len()];
    for (c, m) in clusters.iter().enumerate() {
        for &i in m {
            labels[i] = c;
        }
    }
    refine(&points, &mut labels, k);

    // Canonical ids: clusters numbered by their first member in row order.
    let mut relabel = vec![usize::MAX; k];
    let mut next_id = 0;
    for l in labels.iter_mut() {
        if relabel[*l] == usize::MAX {
            relabel[*l] = next_id;
            next_id += 1;
        }
        *l = relabel[*l];
    }
    let centroids = centroids_of(&points, &labels, k)
        .into_iter()
        .map(|c| TopicVector::from_f64(&c).expect("centroid of unit vectors"))
        .collect();
    ClusterModel::from_parts(
        centroids,
        docs.iter().zip(&labels).map(|((id, _), &l)| (id.to_string(), l)),
        seed,
    )
}

/// Orders `(doc_id, similarity)` pairs the way neighbor lists are ranked.
pub fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}
