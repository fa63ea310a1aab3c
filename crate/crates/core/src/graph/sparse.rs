use ndarray::Array2;

/// Compressed sparse row matrix of `f64`. Explicit zeros are kept as stored
/// entries so that two matrices can share a sparsity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate positions
    /// are summed. Panics on out-of-range indices.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            assert!(
                r < n_rows && c < n_cols,
                "entry ({r}, {c}) outside {n_rows}x{n_cols}"
            );
        }
        entries.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0; n_rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    /// Builds a matrix from per-row `(col, value)` lists; each row must have
    /// strictly increasing columns.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for row in &rows {
            let mut prev = None;
            for &(c, v) in row {
                assert!(c < n_cols, "column {c} outside {n_cols}");
                assert!(
                    prev.is_none_or(|p| p < c),
                    "row columns must be strictly increasing"
                );
                prev = Some(c);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            n_rows: rows.len(),
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map_values(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.values[k] = f(r, self.indices[k], self.values[k]);
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.n_cols,
            self.n_rows,
            self.triplets().map(|(r, c, v)| (c, r, v)),
        )
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self::from_rows(
            self.n_cols,
            rows.iter().map(|&r| self.row(r).collect()).collect(),
        )
    }

    /// `self * dense`, summing each output entry in stored-column order.
    pub fn mul_dense(&self, dense: &Array2<f64>) -> Array2<f64> {
        assert_eq!(
            self.n_cols,
            dense.nrows(),
            "sparse-dense dimension mismatch"
        );
        let k = dense.ncols();
        let mut out = Array2::zeros((self.n_rows, k));
        for r in 0..self.n_rows {
            let mut acc = out.row_mut(r);
            for (c, v) in self.row(r) {
                acc.scaled_add(v, &dense.row(c));
            }
        }
        out
    }

    /// `selfᵀ * dense` without materializing the transpose.
    pub fn transpose_mul_dense(&self, dense: &Array2<f64>) -> Array2<f64> {
        assert_eq!(
            self.n_rows,
            dense.nrows(),
            "sparse-dense dimension mismatch"
        );
        let k = dense.ncols();
        let mut out = Array2::zeros((self.n_cols, k));
        for r in 0..self.n_rows {
            let src = dense.row(r);
            for (c, v) in self.row(r) {
                out.row_mut(c).scaled_add(v, &src);
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for (r, c, v) in self.triplets() {
            out[[r, c]] += v;
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && self.triplets().all(|(r, c, v)| self.get(c, r) == v)
    }
}
