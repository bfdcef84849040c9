//! Small linear-algebra kernels: banded storage with pivoted LU, dense and
//! compressed-row matrices, and a damped Newton iteration.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is singular to working precision (pivot {pivot:e} at row {row})")]
    Singular { row: usize, pivot: f64 },
    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("non-finite value encountered in newton iteration")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Maximum absolute entry; zero for an empty slice.
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Square matrix with `lower` sub-diagonals and `upper` super-diagonals,
/// stored row by row. Entry `(i, j)` lives at `i * width + (j + lower - i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        assert!(n >= 1, "banded matrix needs at least one row");
        let lower = lower.min(n - 1);
        let upper = upper.min(n - 1);
        Self { n, lower, upper, data: vec![0.0; n * (lower + upper + 1)] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0, 0);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), 0, 0);
        for (i, d) in diag.iter().enumerate() {
            m.set(i, i, *d);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.lower
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.upper
    }

    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.lower >= i && j <= i + self.upper
    }

    /// Column range `[lo, hi)` covered by the band in row `i`.
    pub fn row_range(&self, i: usize) -> (usize, usize) {
        (i.saturating_sub(self.lower), (i + self.upper + 1).min(self.n))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + j + self.lower - i]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.lower - i] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.lower - i] += value;
    }

    /// Replaces row `i` with the `i`-th unit row.
    pub fn set_identity_row(&mut self, i: usize) {
        let (lo, hi) = self.row_range(i);
        for j in lo..hi {
            self.set(i, j, if i == j { 1.0 } else { 0.0 });
        }
    }

    pub fn zero_row(&mut self, i: usize) {
        let (lo, hi) = self.row_range(i);
        for j in lo..hi {
            self.set(i, j, 0.0);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let w = self.width();
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = self.row_range(i);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = 0.0;
            for j in lo..hi {
                acc += row[j + self.lower - i] * x[j];
            }
            *yi = acc;
        }
    }

    /// `self * scale_self + other * scale_other`, band widened as needed.
    pub fn linear_combination(&self, scale_self: f64, other: &BandedMatrix, scale_other: f64) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = Self::zeros(self.n, self.lower.max(other.lower), self.upper.max(other.upper));
        for i in 0..self.n {
            let (lo, hi) = out.row_range(i);
            for j in lo..hi {
                let v = scale_self * self.get(i, j) + scale_other * other.get(i, j);
                out.set(i, j, v);
            }
        }
        out
    }

    /// `self * diag(d)`: scales column `j` by `d[j]`.
    pub fn scale_columns(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.n);
        let mut out = self.clone();
        for i in 0..self.n {
            let (lo, hi) = self.row_range(i);
            for j in lo..hi {
                out.set(i, j, self.get(i, j) * d[j]);
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.n, self.upper, self.lower);
        for i in 0..self.n {
            let (lo, hi) = self.row_range(i);
            for j in lo..hi {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (lo, hi) = self.row_range(i);
            for j in lo..hi {
                d[(i, j)] = self.get(i, j);
            }
        }
        d
    }

    fn max_row_norm(&self) -> f64 {
        let w = self.width();
        self.data
            .chunks(w)
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn lu(&self) -> Result<BandedLu> {
        BandedLu::factor(self)
    }
}

/// LU factorization with partial pivoting restricted to the band. The upper
/// factor carries `lower + upper` super-diagonals to absorb row swaps.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    // row i, column j stored at i * width + (j + lower - i), j - i in [-lower, lower + upper]
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &BandedMatrix) -> Result<Self> {
        let n = a.n;
        let kl = a.lower;
        let ku = (a.lower + a.upper).min(n - 1);
        let width = kl + ku + 1;
        let idx = |i: usize, j: usize| i * width + j + kl - i;
        let mut data = vec![0.0; n * width];
        for i in 0..n {
            let (lo, hi) = a.row_range(i);
            for j in lo..hi {
                data[idx(i, j)] = a.get(i, j);
            }
        }
        let threshold = 1e-14 * a.max_row_norm();
        let mut pivots = vec![0; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = data[idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = data[idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            pivots[k] = p;
            if !(best > threshold) {
                return Err(NumericsError::Singular { row: k, pivot: best });
            }
            let last_col = (k + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    data.swap(idx(k, j), idx(p, j));
                }
            }
            let pivot = data[idx(k, k)];
            for i in k + 1..=last_row {
                let factor = data[idx(i, k)] / pivot;
                data[idx(i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..=last_col {
                        data[idx(i, j)] -= factor * data[idx(k, j)];
                    }
                }
            }
        }
        Ok(Self { n, lower: kl, upper: ku, data, pivots })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let (n, kl, ku) = (self.n, self.lower, self.upper);
        let width = kl + ku + 1;
        let idx = |i: usize, j: usize| i * width + j + kl - i;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                x[i] -= self.data[idx(i, k)] * xk;
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..=(i + ku).min(n - 1) {
                acc -= self.data[idx(i, j)] * x[j];
            }
            x[i] = acc / self.data[idx(i, i)];
        }
    }
}

/// Row-major dense matrix, used for small tables and test oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows * other.rows, self.cols * other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        out[(i * other.rows + k, j * other.cols + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.rows).all(|i| (i + 1..self.cols).all(|j| self[(i, j)] == 0.0))
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Compressed sparse row matrix. Transfer operators between nested spaces
/// have only a handful of entries per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, value)` lists; explicit zeros are dropped.
    pub fn from_row_entries(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows.iter().cloned() {
            row.sort_by_key(|(c, _)| *c);
            for (c, v) in row {
                assert!(c < cols, "column {c} out of range");
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { rows: rows.len(), cols, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_row_entries(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row_entries(i).find(|(c, _)| *c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| self.row_entries(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `selfᵀ x` without forming the transpose.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            for (j, v) in self.row_entries(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut rows = vec![Vec::new(); self.cols];
        for i in 0..self.rows {
            for (j, v) in self.row_entries(i) {
                rows[j].push((i, v));
            }
        }
        Self::from_row_entries(self.rows, rows)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row_entries(i) {
                d[(i, j)] = v;
            }
        }
        d
    }
}

/// Tuning for [`newton_solve`].
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Absolute tolerance on the ∞-norm of the residual.
    pub tol: f64,
    /// Updates taken even when the starting residual is already below `tol`,
    /// so that small corrections are not dropped.
    pub min_iter: usize,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-12, min_iter: 1, max_iter: 50, max_halvings: 8 }
    }
}

/// Solves `residual(u) = 0` with full Newton steps, halving the step (at most
/// `max_halvings` times) whenever it would increase the residual. Stops when
/// the residual is below `tol` or a full step changes `u` only at rounding
/// level.
pub fn newton_solve<R, J>(
    mut residual: R,
    mut jacobian: J,
    u0: &[f64],
    opts: NewtonOptions,
) -> Result<Vec<f64>>
where
    R: FnMut(&[f64], &mut [f64]),
    J: FnMut(&[f64]) -> BandedMatrix,
{
    let n = u0.len();
    let mut u = u0.to_vec();
    let mut r = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; n];
    residual(&u, &mut r);
    let mut rnorm = norm_inf(&r);
    for iter in 0..opts.max_iter {
        if !rnorm.is_finite() {
            return Err(NumericsError::NonFinite);
        }
        if rnorm == 0.0 || (rnorm <= opts.tol && iter >= opts.min_iter) {
            return Ok(u);
        }
        let jac = jacobian(&u);
        if jac.dim() != n {
            return Err(NumericsError::DimensionMismatch { expected: n, got: jac.dim() });
        }
        let step = jac.lu()?.solve(&r);
        // a step at rounding level cannot reduce the residual further
        if norm_inf(&step) <= 4.0 * f64::EPSILON * norm_inf(&u).max(1.0) {
            axpy(-1.0, &step, &mut u);
            return Ok(u);
        }
        let mut lambda = 1.0;
        let mut halvings = 0;
        loop {
            for ((t, ui), si) in trial.iter_mut().zip(&u).zip(&step) {
                *t = ui - lambda * si;
            }
            residual(&trial, &mut r_trial);
            let trial_norm = norm_inf(&r_trial);
            if (trial_norm.is_finite() && trial_norm <= rnorm) || halvings == opts.max_halvings {
                break;
            }
            lambda *= 0.5;
            halvings += 1;
        }
        std::mem::swap(&mut u, &mut trial);
        std::mem::swap(&mut r, &mut r_trial);
        rnorm = norm_inf(&r);
    }
    if rnorm.is_finite() && rnorm <= opts.tol {
        return Ok(u);
    }
    Err(NumericsError::NewtonDiverged { iterations: opts.max_iter, residual: rnorm })
}
