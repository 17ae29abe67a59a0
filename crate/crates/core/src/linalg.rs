//! Design-matrix storage and the handful of dense vector kernels the solvers
//! share. Matrices are either row-major dense or compressed sparse row.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != nrows + 1 {
            return Err(Error::DimensionMismatch {
                what: "csr indptr length",
                expected: nrows + 1,
                got: indptr.len(),
            });
        }
        if indices.len() != values.len() || *indptr.last().unwrap() != values.len() {
            return Err(Error::arg("csr indices/values/indptr are inconsistent"));
        }
        if indptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::arg("csr indptr must be nondecreasing"));
        }
        for r in 0..nrows {
            let cols = &indices[indptr[r]..indptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::arg(format!("csr row {r} has unsorted or duplicate columns")));
            }
            if cols.iter().any(|&c| c >= ncols) {
                return Err(Error::arg(format!("csr row {r} has a column index out of range")));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds from per-row `(column, value)` lists; columns are sorted and
    /// duplicates rejected.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        let nrows = indptr.len() - 1;
        Self::new(nrows, ncols, indptr, indices, values)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DesignMatrix {
    Dense {
        nrows: usize,
        ncols: usize,
        /// Row-major, `nrows * ncols` entries.
        data: Vec<f64>,
    },
    Sparse(CsrMatrix),
}

impl DesignMatrix {
    pub fn dense(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::DimensionMismatch {
                what: "dense matrix data length",
                expected: nrows * ncols,
                got: data.len(),
            });
        }
        Ok(DesignMatrix::Dense { nrows, ncols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        if nrows == 0 {
            return Err(Error::Empty("matrix has no rows".into()));
        }
        let ncols = rows[0].len();
        let mut data = Vec::with_capacity(nrows * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(Error::DimensionMismatch {
                    what: "row length",
                    expected: ncols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::dense(nrows, ncols, data)
    }

    pub fn nrows(&self) -> usize {
        match self {
            DesignMatrix::Dense { nrows, .. } => *nrows,
            DesignMatrix::Sparse(m) => m.nrows,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            DesignMatrix::Dense { ncols, .. } => *ncols,
            DesignMatrix::Sparse(m) => m.ncols,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, DesignMatrix::Sparse(_))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            DesignMatrix::Dense { ncols, data, .. } => data[i * ncols + j],
            DesignMatrix::Sparse(m) => {
                let span = m.indptr[i]..m.indptr[i + 1];
                match m.indices[span.clone()].binary_search(&j) {
                    Ok(p) => m.values[span.start + p],
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// `row_i · w`
    pub fn row_dot(&self, i: usize, w: &[f64]) -> f64 {
        match self {
            DesignMatrix::Dense { ncols, data, .. } => dot(&data[i * ncols..(i + 1) * ncols], w),
            DesignMatrix::Sparse(m) => m.row(i).map(|(c, v)| v * w[c]).sum(),
        }
    }

    /// `out += alpha * row_i`
    pub fn add_row_scaled(&self, i: usize, alpha: f64, out: &mut [f64]) {
        match self {
            DesignMatrix::Dense { ncols, data, .. } => {
                for (o, &x) in out.iter_mut().zip(&data[i * ncols..(i + 1) * ncols]) {
                    *o += alpha * x;
                }
            }
            DesignMatrix::Sparse(m) => {
                for (c, v) in m.row(i) {
                    out[c] += alpha * v;
                }
            }
        }
    }

    pub fn matvec(&self, w: &[f64]) -> Vec<f64> {
        (0..self.nrows()).map(|i| self.row_dot(i, w)).collect()
    }

    /// `Xᵀ v`
    pub fn rmatvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols()];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                self.add_row_scaled(i, vi, &mut out);
            }
        }
        out
    }

    /// `XᵀX` as a dense `d × d` matrix.
    pub fn gram(&self) -> DMatrix<f64> {
        let d = self.ncols();
        let mut g = DMatrix::<f64>::zeros(d, d);
        match self {
            DesignMatrix::Dense { ncols, data, .. } => {
                for row in data.chunks_exact(*ncols) {
                    for a in 0..d {
                        let ra = row[a];
                        if ra == 0.0 {
                            continue;
                        }
                        for b in a..d {
                            g[(a, b)] += ra * row[b];
                        }
                    }
                }
            }
            DesignMatrix::Sparse(m) => {
                for i in 0..m.nrows {
                    let entries: Vec<(usize, f64)> = m.row(i).collect();
                    for (p, &(a, va)) in entries.iter().enumerate() {
                        for &(b, vb) in &entries[p..] {
                            g[(a, b)] += va * vb;
                        }
                    }
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                g[(a, b)] = g[(b, a)];
            }
        }
        g
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        (0..self.nrows())
            .map(|i| (0..self.ncols()).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn to_dense(&self) -> DesignMatrix {
        match self {
            DesignMatrix::Dense { .. } => self.clone(),
            DesignMatrix::Sparse(m) => {
                let mut data = vec![0.0; m.nrows * m.ncols];
                for i in 0..m.nrows {
                    for (c, v) in m.row(i) {
                        data[i * m.ncols + c] = v;
                    }
                }
                DesignMatrix::Dense {
                    nrows: m.nrows,
                    ncols: m.ncols,
                    data,
                }
            }
        }
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        match self {
            DesignMatrix::Dense { ncols, data, .. } => {
                let mut out = Vec::with_capacity(rows.len() * ncols);
                for &r in rows {
                    out.extend_from_slice(&data[r * ncols..(r + 1) * ncols]);
                }
                DesignMatrix::Dense {
                    nrows: rows.len(),
                    ncols: *ncols,
                    data: out,
                }
            }
            DesignMatrix::Sparse(m) => {
                let mut indptr = vec![0];
                let mut indices = Vec::new();
                let mut values = Vec::new();
                for &r in rows {
                    for (c, v) in m.row(r) {
                        indices.push(c);
                        values.push(v);
                    }
                    indptr.push(indices.len());
                }
                DesignMatrix::Sparse(CsrMatrix {
                    nrows: rows.len(),
                    ncols: m.ncols,
                    indptr,
                    indices,
                    values,
                })
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            DesignMatrix::Dense { data, .. } => data.iter().all(|v| v.is_finite()),
            DesignMatrix::Sparse(m) => m.values.iter().all(|v| v.is_finite()),
        }
    }

    /// Spectral norm estimate from `iters` power iterations on `XᵀX`, started
    /// from a seeded random vector.
    pub fn spectral_norm_estimate(&self, iters: usize, seed: u64) -> f64 {
        let d = self.ncols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut nv = norm(&v);
        if nv == 0.0 {
            v[0] = 1.0;
            nv = 1.0;
        }
        scale(&mut v, 1.0 / nv);
        let mut lambda = 0.0;
        for _ in 0..iters {
            let u = self.rmatvec(&self.matvec(&v));
            let nu = norm(&u);
            if nu == 0.0 {
                return 0.0;
            }
            lambda = nu;
            v = u;
            scale(&mut v, 1.0 / nu);
        }
        // Rayleigh quotient of the final iterate is a tighter estimate.
        let xv = self.matvec(&v);
        let rq = dot(&xv, &xv);
        rq.max(lambda).sqrt()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: &mut [f64], s: f64) {
    a.iter_mut().for_each(|v| *v *= s);
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DesignMatrix {
        DesignMatrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 0.0]]).unwrap()
    }

    #[test]
    fn dense_and_sparse_agree() {
        let dense = sample();
        let sparse = DesignMatrix::Sparse(
            CsrMatrix::from_rows(3, vec![vec![(2, 2.0), (0, 1.0)], vec![(1, 3.0)]]).unwrap(),
        );
        let w = [0.5, -1.0, 2.0];
        assert_eq!(dense.matvec(&w), sparse.matvec(&w));
        assert_eq!(dense.rmatvec(&[1.0, 2.0]), sparse.rmatvec(&[1.0, 2.0]));
        assert_eq!(dense.gram(), sparse.gram());
        assert_eq!(sparse.to_dense(), dense);
        assert_eq!(sparse.get(0, 2), 2.0);
        assert_eq!(sparse.get(1, 2), 0.0);
    }

    #[test]
    fn csr_rejects_duplicates() {
        assert!(CsrMatrix::from_rows(3, vec![vec![(1, 1.0), (1, 2.0)]]).is_err());
        assert!(CsrMatrix::from_rows(2, vec![vec![(2, 1.0)]]).is_err());
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DesignMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -4.0]]).unwrap();
        let s = m.spectral_norm_estimate(100, 7);
        assert!((s - 4.0).abs() < 1e-9, "{s}");
    }

    #[test]
    fn select_rows_keeps_order() {
        let m = sample().select_rows(&[1, 0]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 2), 2.0);
    }
}
