//! Randomized truncated SVD over a sparse row matrix.
//!
//! Range finder with subspace (power) iterations followed by an exact SVD of
//! the small projected matrix. When the sketch covers the full rank the
//! result is exact up to rounding.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Compressed sparse rows.
#[derive(Debug, Clone)]
pub(crate) struct SparseRows {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    ncols: usize,
}

impl SparseRows {
    pub fn new(ncols: usize) -> Self {
        SparseRows {
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            ncols,
        }
    }

    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        for (c, v) in entries {
            debug_assert!(c < self.ncols);
            self.indices.push(c);
            self.values.push(v);
        }
        self.indptr.push(self.indices.len());
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// `self * m` for dense `m` with `ncols` rows.
    fn mul(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let l = m.ncols();
        let mut out = DMatrix::zeros(self.nrows(), l);
        for r in 0..self.nrows() {
            for (c, v) in self.row(r) {
                for j in 0..l {
                    out[(r, j)] += v * m[(c, j)];
                }
            }
        }
        out
    }

    /// `self^T * m` for dense `m` with `nrows` rows.
    fn tmul(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let l = m.ncols();
        let mut out = DMatrix::zeros(self.ncols, l);
        for r in 0..self.nrows() {
            for (c, v) in self.row(r) {
                for j in 0..l {
                    out[(c, j)] += v * m[(r, j)];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SvdOptions {
    pub oversample: usize,
    pub power_iterations: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            oversample: 16,
            power_iterations: 8,
        }
    }
}

pub(crate) struct Truncated {
    /// Non-increasing.
    pub singular_values: Vec<f64>,
    /// `ncols x rank`, orthonormal columns.
    pub right: DMatrix<f64>,
}

fn orthonormal_basis(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

pub(crate) fn truncated_svd(
    x: &SparseRows,
    rank: usize,
    opts: SvdOptions,
    rng: &mut impl Rng,
) -> Truncated {
    let full = x.nrows().min(x.ncols());
    assert!(rank >= 1 && rank <= full, "rank {rank} outside 1..={full}");
    let sketch = (rank + opts.oversample.max(rank / 2)).min(full);

    let omega = DMatrix::from_fn(x.ncols(), sketch, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut q = orthonormal_basis(x.mul(&omega));
    for _ in 0..opts.power_iterations {
        let z = orthonormal_basis(x.tmul(&q));
        q = orthonormal_basis(x.mul(&z));
    }
    // B^T = X^T Q; the left singular vectors of B^T are the right singular
    // vectors of X restricted to range(Q).
    let bt = x.tmul(&q);
    let svd = bt.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    order.truncate(rank);

    let singular_values = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();
    let right = DMatrix::from_fn(x.ncols(), rank, |r, j| u[(r, order[j])]);
    Truncated {
        singular_values,
        right,
    }
}
