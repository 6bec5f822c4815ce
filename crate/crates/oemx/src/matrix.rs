//! Design-matrix storage backends.
//!
//! A [`DesignMatrix`] is an n × p predictor matrix held in one of three
//! forms: a dense row-major buffer, a compressed-sparse-column matrix, or a
//! memory-mapped column-major file. All higher-level statistics (Gram
//! matrices, predictions, CV) operate through this enum so that the same
//! fit can run in-memory, sparse, or out of core.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{OemError, Result};

/// Compressed-sparse-column matrix with sorted row indices per column.
#[derive(Debug, Clone)]
pub struct CscMatrix {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Builds a CSC matrix, validating the structural invariants:
    /// nondecreasing column pointers ending at nnz, in-range and strictly
    /// increasing row indices within each column.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(OemError::EmptyMatrix);
        }
        if col_ptr.len() != n_cols + 1 {
            return Err(OemError::DimensionMismatch(format!(
                "col_ptr has length {}, expected {}",
                col_ptr.len(),
                n_cols + 1
            )));
        }
        if row_idx.len() != values.len() {
            return Err(OemError::DimensionMismatch(format!(
                "row_idx ({}) and values ({}) lengths differ",
                row_idx.len(),
                values.len()
            )));
        }
        if col_ptr[0] != 0 || *col_ptr.last().unwrap() != row_idx.len() {
            return Err(OemError::DimensionMismatch(
                "column pointers must start at 0 and end at nnz".into(),
            ));
        }
        for j in 0..n_cols {
            if col_ptr[j] > col_ptr[j + 1] {
                return Err(OemError::DimensionMismatch(format!(
                    "column pointers decrease at column {j}"
                )));
            }
            let rows = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            for (k, &i) in rows.iter().enumerate() {
                if i >= n_rows {
                    return Err(OemError::DimensionMismatch(format!(
                        "row index {i} out of range in column {j}"
                    )));
                }
                if k > 0 && rows[k - 1] >= i {
                    return Err(OemError::DimensionMismatch(format!(
                        "row indices not strictly increasing in column {j}"
                    )));
                }
            }
        }
        Ok(CscMatrix { n_rows, n_cols, col_ptr, row_idx, values })
    }

    /// Converts a dense view, dropping exact zeros.
    pub fn from_dense(x: ArrayView2<'_, f64>) -> Result<Self> {
        let (n, p) = x.dim();
        let mut col_ptr = Vec::with_capacity(p + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..p {
            for i in 0..n {
                let v = x[[i, j]];
                if v != 0.0 {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        CscMatrix::new(n, p, col_ptr, row_idx, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Row indices and values of column `j`.
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        (&self.row_idx[lo..hi], &self.values[lo..hi])
    }

    fn value(&self, i: usize, j: usize) -> f64 {
        let (rows, vals) = self.col(j);
        match rows.binary_search(&i) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Keeps only the given rows (must be strictly increasing), renumbering
    /// them 0..rows.len().
    fn subset_rows(&self, rows: &[usize]) -> Result<CscMatrix> {
        debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        let mut new_of_old = vec![usize::MAX; self.n_rows];
        for (new, &old) in rows.iter().enumerate() {
            new_of_old[old] = new;
        }
        let mut col_ptr = Vec::with_capacity(self.n_cols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..self.n_cols {
            let (r, v) = self.col(j);
            for (&i, &x) in r.iter().zip(v) {
                let ni = new_of_old[i];
                if ni != usize::MAX {
                    row_idx.push(ni);
                    values.push(x);
                }
            }
            col_ptr.push(row_idx.len());
        }
        CscMatrix::new(rows.len(), self.n_cols, col_ptr, row_idx, values)
    }
}

/// Memory-mapped column-major f64 matrix backed by a file on disk.
///
/// The payload is never copied; reads touch the mapping directly and the
/// Gram pass materializes at most one row block at a time.
pub struct MappedMatrix {
    path: std::path::PathBuf,
    map: memmap2::Mmap,
    payload_offset: usize,
    n_rows: usize,
    n_cols: usize,
}

impl std::fmt::Debug for MappedMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MappedMatrix")
            .field("path", &self.path)
            .field("n_rows", &self.n_rows)
            .field("n_cols", &self.n_cols)
            .finish()
    }
}

impl MappedMatrix {
    pub(crate) fn from_parts(
        path: std::path::PathBuf,
        map: memmap2::Mmap,
        payload_offset: usize,
        n_rows: usize,
        n_cols: usize,
    ) -> Self {
        MappedMatrix { path, map, payload_offset, n_rows, n_cols }
    }

    pub fn path(&self) -> &std::path::Path {
        &self.path
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Column `j` as a contiguous slice of the mapping.
    pub fn col(&self, j: usize) -> &[f64] {
        let bytes =
            &self.map[self.payload_offset + j * self.n_rows * 8..][..self.n_rows * 8];
        // Payload offset is 8-byte aligned and the mapping is page aligned,
        // so the reinterpretation is exact on little-endian targets.
        let (head, mid, tail) = unsafe { bytes.align_to::<f64>() };
        debug_assert!(head.is_empty() && tail.is_empty());
        debug_assert_eq!(mid.len(), self.n_rows);
        mid
    }
}

/// Polymorphic n × p design matrix.
#[derive(Debug)]
pub enum DesignMatrix {
    /// Row-major in-memory buffer.
    Dense(Array2<f64>),
    /// Compressed sparse column.
    Sparse(CscMatrix),
    /// Memory-mapped column-major file.
    Mapped(MappedMatrix),
}

impl DesignMatrix {
    pub fn dense(x: Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(OemError::EmptyMatrix);
        }
        Ok(DesignMatrix::Dense(x))
    }

    pub fn sparse(x: CscMatrix) -> Self {
        DesignMatrix::Sparse(x)
    }

    pub fn n_rows(&self) -> usize {
        match self {
            DesignMatrix::Dense(x) => x.nrows(),
            DesignMatrix::Sparse(x) => x.n_rows(),
            DesignMatrix::Mapped(x) => x.n_rows(),
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            DesignMatrix::Dense(x) => x.ncols(),
            DesignMatrix::Sparse(x) => x.n_cols(),
            DesignMatrix::Mapped(x) => x.n_cols(),
        }
    }

    /// Single-element access. Convenient for tests and small utilities;
    /// bulk operations below avoid it.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        match self {
            DesignMatrix::Dense(x) => x[[i, j]],
            DesignMatrix::Sparse(x) => x.value(i, j),
            DesignMatrix::Mapped(x) => x.col(j)[i],
        }
    }

    /// Materializes the matrix as a dense array.
    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            DesignMatrix::Dense(x) => x.clone(),
            DesignMatrix::Sparse(x) => {
                let mut out = Array2::zeros((x.n_rows(), x.n_cols()));
                for j in 0..x.n_cols() {
                    let (rows, vals) = x.col(j);
                    for (&i, &v) in rows.iter().zip(vals) {
                        out[[i, j]] = v;
                    }
                }
                out
            }
            DesignMatrix::Mapped(x) => {
                let mut out = Array2::zeros((x.n_rows(), x.n_cols()));
                for j in 0..x.n_cols() {
                    let col = x.col(j);
                    for i in 0..x.n_rows() {
                        out[[i, j]] = col[i];
                    }
                }
                out
            }
        }
    }

    /// Computes X · B for a p × m coefficient block, returning n × m.
    pub fn matmul(&self, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let rows: Vec<usize> = (0..self.n_rows()).collect();
        self.matmul_rows(&rows, b)
    }

    /// Computes X[rows, :] · B, one output row per requested row (rows must
    /// be strictly increasing). Used for held-out evaluation and prediction.
    pub fn matmul_rows(&self, rows: &[usize], b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let p = self.n_cols();
        if b.nrows() != p {
            return Err(OemError::DimensionMismatch(format!(
                "coefficient block has {} rows, design matrix has {} columns",
                b.nrows(),
                p
            )));
        }
        let m = b.ncols();
        let mut out = Array2::zeros((rows.len(), m));
        match self {
            DesignMatrix::Dense(x) => {
                if rows.len() == x.nrows() {
                    out = x.dot(&b);
                } else {
                    let sub = x.select(Axis(0), rows);
                    out = sub.dot(&b);
                }
            }
            DesignMatrix::Sparse(x) => {
                let mut pos_of_row = vec![usize::MAX; x.n_rows()];
                for (pos, &i) in rows.iter().enumerate() {
                    pos_of_row[i] = pos;
                }
                for j in 0..p {
                    let (r, v) = x.col(j);
                    let bj = b.row(j);
                    for (&i, &val) in r.iter().zip(v) {
                        let pos = pos_of_row[i];
                        if pos != usize::MAX {
                            let mut orow = out.row_mut(pos);
                            orow.scaled_add(val, &bj);
                        }
                    }
                }
            }
            DesignMatrix::Mapped(x) => {
                for j in 0..p {
                    let col = x.col(j);
                    let bj = b.row(j);
                    for (pos, &i) in rows.iter().enumerate() {
                        let mut orow = out.row_mut(pos);
                        orow.scaled_add(col[i], &bj);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Extracts the given rows (strictly increasing) as a new matrix.
    /// Dense and mapped backends materialize densely; sparse stays sparse.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<DesignMatrix> {
        if rows.is_empty() {
            return Err(OemError::EmptyMatrix);
        }
        match self {
            DesignMatrix::Dense(x) => Ok(DesignMatrix::Dense(x.select(Axis(0), rows))),
            DesignMatrix::Sparse(x) => Ok(DesignMatrix::Sparse(x.subset_rows(rows)?)),
            DesignMatrix::Mapped(x) => {
                let p = x.n_cols();
                let mut out = Array2::zeros((rows.len(), p));
                for j in 0..p {
                    let col = x.col(j);
                    for (pos, &i) in rows.iter().enumerate() {
                        out[[pos, j]] = col[i];
                    }
                }
                Ok(DesignMatrix::Dense(out))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn csc_roundtrip_matches_dense() {
        let x = arr2(&[[1.0, 0.0, 2.0], [0.0, 0.0, 3.0], [4.0, 5.0, 0.0]]);
        let csc = CscMatrix::from_dense(x.view()).unwrap();
        assert_eq!(csc.nnz(), 5);
        let dm = DesignMatrix::Sparse(csc);
        assert_eq!(dm.to_dense(), x);
    }

    #[test]
    fn csc_rejects_bad_pointers() {
        let err = CscMatrix::new(2, 2, vec![0, 2, 1], vec![0, 1], vec![1.0, 2.0]);
        assert!(matches!(err, Err(OemError::DimensionMismatch(_))));
    }

    #[test]
    fn csc_rejects_out_of_range_rows() {
        let err = CscMatrix::new(2, 1, vec![0, 1], vec![5], vec![1.0]);
        assert!(matches!(err, Err(OemError::DimensionMismatch(_))));
    }

    #[test]
    fn subset_rows_sparse_renumbers() {
        let x = arr2(&[[1.0, 0.0], [0.0, 2.0], [3.0, 0.0], [0.0, 4.0]]);
        let dm = DesignMatrix::Sparse(CscMatrix::from_dense(x.view()).unwrap());
        let sub = dm.subset_rows(&[1, 3]).unwrap();
        assert_eq!(sub.to_dense(), arr2(&[[0.0, 2.0], [0.0, 4.0]]));
    }

    #[test]
    fn matmul_rows_agrees_across_backends() {
        let x = arr2(&[[1.0, 2.0], [0.0, -1.0], [3.0, 0.0]]);
        let b = arr2(&[[1.0, 0.5], [2.0, -1.0]]);
        let dense = DesignMatrix::Dense(x.clone());
        let sparse = DesignMatrix::Sparse(CscMatrix::from_dense(x.view()).unwrap());
        let rows = [0usize, 2];
        let a = dense.matmul_rows(&rows, b.view()).unwrap();
        let c = sparse.matmul_rows(&rows, b.view()).unwrap();
        assert_eq!(a, c);
        assert_eq!(a[[1, 0]], 3.0);
    }
}
