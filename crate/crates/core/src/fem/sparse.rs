/// Compressed sparse row matrix holding both triangles of a symmetric
/// operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SymmetricSparseOperator {
    /// Build from `(row, col, value)` triplets; duplicates are summed in input
    /// order. The caller supplies both `(i, j)` and `(j, i)`.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        // stable sort keeps duplicate summation order deterministic
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len() / 2);
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len() / 2);
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { dim, row_ptr, cols, vals }
    }

    /// `b - A x` with compensated products and sums (about twice working
    /// precision), for iterative refinement.
    pub fn residual_compensated(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let (mut sum, mut comp) = (b[i], 0.0);
                for (j, a) in self.row(i) {
                    let p = -a * x[j];
                    let ep = (-a).mul_add(x[j], -p);
                    let t = sum + p;
                    let bb = t - sum;
                    comp += (sum - (t - bb)) + (p - bb) + ep;
                    sum = t;
                }
                sum + comp
            })
            .collect()
    }

    /// `‖ |A| |x| ‖₂`.
    pub fn abs_mul_norm(&self, x: &[f64]) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).map(|(j, a)| (a * x[j]).abs()).sum::<f64>().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Diagonal matrix.
    pub fn diagonal(values: &[f64]) -> Self {
        let trip = values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(values.len(), trip)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.dim)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim).map(|i| self.row(i).map(|(j, a)| a * x[j]).sum()).collect()
    }

    /// `xᵀ A y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        (0..self.dim)
            .map(|i| x[i] * self.row(i).map(|(j, a)| a * y[j]).sum::<f64>())
            .sum()
    }

    /// Submatrix `A[rows, cols]` as a dense row-major block.
    pub fn dense_block(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
        let mut col_pos = vec![usize::MAX; self.dim];
        for (k, &c) in cols.iter().enumerate() {
            col_pos[c] = k;
        }
        rows.iter()
            .map(|&r| {
                let mut out = vec![0.0; cols.len()];
                for (j, a) in self.row(r) {
                    if col_pos[j] != usize::MAX {
                        out[col_pos[j]] = a;
                    }
                }
                out
            })
            .collect()
    }

    /// Principal submatrix on `idx`, renumbered `0..idx.len()` in that order.
    pub fn principal(&self, idx: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.dim];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let mut row_ptr = Vec::with_capacity(idx.len() + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for &i in idx {
            let mut row: Vec<(usize, f64)> = self
                .row(i)
                .filter(|&(j, _)| pos[j] != usize::MAX)
                .map(|(j, a)| (pos[j], a))
                .collect();
            row.sort_by_key(|&(j, _)| j);
            for (j, a) in row {
                cols.push(j);
                vals.push(a);
            }
            row_ptr.push(cols.len());
        }
        Self { dim: idx.len(), row_ptr, cols, vals }
    }

    /// `A[rows, cols] · x` without forming the block.
    pub fn mul_block(&self, rows: &[usize], cols: &[usize], x: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.dim];
        for (&c, &v) in cols.iter().zip(x) {
            full[c] = v;
        }
        rows.iter().map(|&r| self.row(r).map(|(j, a)| a * full[j]).sum()).collect()
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        (0..self.dim)
            .flat_map(|i| self.row(i).map(move |(j, a)| (i, j, a)))
            .map(|(i, j, a)| (a - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }
}
