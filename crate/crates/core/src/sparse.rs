//! Compressed sparse row matrices with a shared, structurally symmetric
//! pattern.
//!
//! All finite-element operators assembled here live on the mesh adjacency
//! pattern (node i couples node j iff they share a triangle). Keeping every
//! operator on one pattern makes linear combinations and transposes cheap and
//! exact: they are entrywise operations over a common nonzero layout.

/// Sparsity pattern in CSR form. Row `i` owns column indices
/// `cols[row_ptr[i]..row_ptr[i + 1]]`, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
}

impl Pattern {
    /// Builds a pattern from an edge set given as (row, col) pairs.
    /// Diagonal entries are always included; duplicates are merged.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut per_row: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (i, j) in pairs {
            per_row[i].push(j);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for row in &mut per_row {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        Pattern { n, row_ptr, cols }
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Position of entry (i, j) in the value array, if present.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.cols[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    /// True when for every stored (i, j) the entry (j, i) is stored too.
    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
                .iter()
                .all(|&j| self.find(j, i).is_some())
        })
    }
}

/// CSR matrix: a pattern shared by reference plus one value per stored entry.
#[derive(Debug, Clone)]
pub struct Csr {
    pub pattern: std::sync::Arc<Pattern>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Zero matrix on the given pattern.
    pub fn zeros(pattern: std::sync::Arc<Pattern>) -> Self {
        let nnz = pattern.nnz();
        Csr { pattern, values: vec![0.0; nnz] }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    /// Adds `v` into entry (i, j). Panics if the entry is not in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .pattern
            .find(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[k] += v;
    }

    /// Value at (i, j); zero if the entry is not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |k| self.values[k])
    }

    /// y = A·x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n(), "matvec dimension mismatch");
        let mut y = vec![0.0; self.n()];
        self.matvec_into(x, &mut y);
        y
    }

    /// y = A·x without allocating.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let p = &*self.pattern;
        for i in 0..p.n {
            let mut acc = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.values[k] * x[p.cols[k]];
            }
            y[i] = acc;
        }
    }

    /// Transpose on the same (structurally symmetric) pattern: the result
    /// stores value A[j, i] at position (i, j). Entries are moved, never
    /// re-summed, so the operation is exact.
    pub fn transpose_same_pattern(&self) -> Csr {
        debug_assert!(self.pattern.is_structurally_symmetric());
        let mut out = Csr::zeros(self.pattern.clone());
        let p = &*self.pattern;
        for i in 0..p.n {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.cols[k];
                let kt = p.find(j, i).expect("pattern not structurally symmetric");
                out.values[kt] = self.values[k];
            }
        }
        out
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sparse vector as (index, value) pairs sorted by index.
#[derive(Debug, Clone, Default)]
pub struct SparseVec {
    pub entries: Vec<(usize, f64)>,
}

impl SparseVec {
    /// Drops zeros and entries with |v| < tol, keeping index order.
    pub fn from_dense_truncated(dense: &[f64], tol: f64) -> Self {
        let entries = dense
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v != 0.0 && v.abs() >= tol)
            .map(|(i, &v)| (i, v))
            .collect();
        SparseVec { entries }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * x[i]).sum()
    }

    /// y += s · self.
    pub fn axpy_into(&self, s: f64, y: &mut [f64]) {
        for &(i, v) in &self.entries {
            y[i] += s * v;
        }
    }
}
