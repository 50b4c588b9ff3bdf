//! Compressed sparse row matrices, sparse LU solves, restarted GMRES and
//! monolithic saddle-point solves.

use std::io::Write;
use std::path::Path;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuRef, LuSymbolicParams, NumericLu, SymbolicLu};
use faer::sparse::linalg::{LuError, SupernodalThreshold};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("entry ({row}, {col}) out of range for a {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is structurally singular")]
    StructurallySingular,
    #[error("matrix is numerically singular (relative residual {residual:e})")]
    NumericallySingular { residual: f64 },
    #[error("saddle system is rank deficient beyond the constant pressure mode (relative residual {residual:e})")]
    RankDeficient { residual: f64 },
    #[error("iterative solver stalled after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("factorization failed: {0}")]
    Factorization(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` entries; duplicates are summed,
    /// columns sorted and exact zeros dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        entries: &[(usize, usize, f64)],
    ) -> Result<Self, SolveError> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in entries {
            if r >= nrows || c >= ncols {
                return Err(SolveError::IndexOutOfRange { row: r, col: c, nrows, ncols });
            }
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; entries.len()];
        let mut vals = vec![0.0; entries.len()];
        for &(r, c, v) in entries {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|p| (cols[p], vals[p])));
            // ordering by value too makes the sums independent of input order
            scratch.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let mut i = 0;
            while i < scratch.len() {
                let c = scratch[i].0;
                let mut s = 0.0;
                while i < scratch.len() && scratch[i].0 == c {
                    s += scratch[i].1;
                    i += 1;
                }
                if s != 0.0 {
                    col_idx.push(c);
                    values.push(s);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    /// Builds a matrix from sorted CSR rows; exact zeros are dropped.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, SolveError> {
        if row_ptr.len() != nrows + 1 || col_idx.len() != values.len() || row_ptr[nrows] != col_idx.len() {
            return Err(SolveError::DimensionMismatch("inconsistent CSR arrays".into()));
        }
        for r in 0..nrows {
            let row = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= ncols) {
                return Err(SolveError::DimensionMismatch(format!("row {r} columns unsorted or out of range")));
            }
        }
        let mut m = Self { nrows, ncols, row_ptr, col_idx, values };
        m.drop_zeros();
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    /// Entry `(r, c)`, zero if not stored.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    fn drop_zeros(&mut self) {
        let mut w = 0;
        let mut new_ptr = Vec::with_capacity(self.nrows + 1);
        new_ptr.push(0);
        for r in 0..self.nrows {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.values[p] != 0.0 {
                    self.col_idx[w] = self.col_idx[p];
                    self.values[w] = self.values[p];
                    w += 1;
                }
            }
            new_ptr.push(w);
        }
        self.col_idx.truncate(w);
        self.values.truncate(w);
        self.row_ptr = new_ptr;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "matvec: vector length");
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let mut s = 0.0;
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            *yr = s;
        }
    }

    /// `y = A^T x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "matvec_transpose: vector length");
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[p]] += self.values[p] * xr;
            }
        }
        y
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[p];
                col_idx[next[c]] = r;
                values[next[c]] = self.values[p];
                next[c] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, row_ptr: counts, col_idx, values }
    }

    /// `alpha * self + beta * other` for matrices of equal shape.
    pub fn add_scaled(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self, SolveError> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(SolveError::DimensionMismatch("add_scaled: shapes differ".into()));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(col_idx.capacity());
        for r in 0..self.nrows {
            let (ca, va) = self.row(r);
            let (cb, vb) = other.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ca.len() || j < cb.len() {
                let take_a = j >= cb.len() || (i < ca.len() && ca[i] <= cb[j]);
                let take_b = i >= ca.len() || (j < cb.len() && cb[j] <= ca[i]);
                let (c, v) = match (take_a, take_b) {
                    (true, true) => {
                        let out = (ca[i], alpha * va[i] + beta * vb[j]);
                        i += 1;
                        j += 1;
                        out
                    }
                    (true, false) => {
                        i += 1;
                        (ca[i - 1], alpha * va[i - 1])
                    }
                    _ => {
                        j += 1;
                        (cb[j - 1], beta * vb[j - 1])
                    }
                };
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values })
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
        if alpha == 0.0 {
            self.drop_zeros();
        }
    }

    /// Assembles a block matrix; `blocks[i][j]` is `None` for a zero block.
    /// Block rows must agree in height and block columns in width.
    pub fn block(blocks: &[Vec<Option<&SparseMatrix>>], row_sizes: &[usize], col_sizes: &[usize]) -> Result<Self, SolveError> {
        let nrows: usize = row_sizes.iter().sum();
        let ncols: usize = col_sizes.iter().sum();
        let mut col_off = vec![0; col_sizes.len()];
        for j in 1..col_sizes.len() {
            col_off[j] = col_off[j - 1] + col_sizes[j - 1];
        }
        for (bi, brow) in blocks.iter().enumerate() {
            for (bj, b) in brow.iter().enumerate() {
                if let Some(m) = b {
                    if m.nrows != row_sizes[bi] || m.ncols != col_sizes[bj] {
                        return Err(SolveError::DimensionMismatch(format!("block ({bi}, {bj}) has wrong shape")));
                    }
                }
            }
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (bi, brow) in blocks.iter().enumerate() {
            for r in 0..row_sizes[bi] {
                for (bj, b) in brow.iter().enumerate() {
                    if let Some(m) = b {
                        let (c, v) = m.row(r);
                        col_idx.extend(c.iter().map(|&c| c + col_off[bj]));
                        values.extend_from_slice(v);
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    /// Dense row-major copy (for tests and oracles).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in d.iter_mut().enumerate() {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                row[self.col_idx[p]] = self.values[p];
            }
        }
        d
    }

    /// Maximal `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        match self.add_scaled(1.0, &t, -1.0) {
            Ok(diff) => diff.values.iter().fold(0.0, |m, v| m.max(v.abs())),
            Err(_) => f64::INFINITY,
        }
    }

    /// Writes the matrix in MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(f, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                writeln!(f, "{} {} {:e}", r + 1, self.col_idx[p] + 1, self.values[p])?;
            }
        }
        f.flush()
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let nb = norm2(b);
    let rel = if nb > 0.0 { norm2(&r) / nb } else { norm2(&r) };
    (r, rel)
}

/// Target relative residual of direct solves.
pub const DIRECT_TOLERANCE: f64 = 1e-10;

/// Sparse LU factorization of a square matrix.
///
/// The CSR arrays of `A` are the CSC arrays of `A^T`, so the factorization is
/// of `A^T` and solves use the transposed triangular sweeps.
pub struct LuFactor {
    matrix: SparseMatrix,
    symbolic: SymbolicLu<usize>,
    numeric: NumericLu<usize, f64>,
}

impl std::fmt::Debug for LuFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactor").field("n", &self.matrix.nrows).field("nnz", &self.matrix.nnz()).finish()
    }
}

impl LuFactor {
    pub fn new(a: &SparseMatrix) -> Result<Self, SolveError> {
        if a.nrows != a.ncols {
            return Err(SolveError::DimensionMismatch(format!("{}x{} matrix is not square", a.nrows, a.ncols)));
        }
        let n = a.nrows;
        if (0..n).any(|r| a.row_ptr[r] == a.row_ptr[r + 1]) {
            return Err(SolveError::StructurallySingular);
        }
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &a.row_ptr, None, &a.col_idx);
        let at = SparseColMatRef::new(sym, &a.values);
        // the supernodal variant gave the faster triangular solves on the
        // saddle systems of the scheme
        let params =
            LuSymbolicParams { supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL, ..Default::default() };
        let symbolic = factorize_symbolic_lu(sym, params).map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        let mut numeric = NumericLu::new();
        let scratch = symbolic.factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default());
        let mut mem = MemBuffer::try_new(scratch).map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        symbolic
            .factorize_numeric_lu(&mut numeric, at, Par::Seq, MemStack::new(&mut mem), Default::default())
            .map_err(|e| match e {
                LuError::SymbolicSingular { .. } => SolveError::StructurallySingular,
                other => SolveError::Factorization(format!("{other:?}")),
            })?;
        Ok(Self { matrix: a.clone(), symbolic, numeric })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Applies the factored inverse in place without residual checks.
    pub fn apply_inverse(&self, b: &mut [f64]) {
        let n = b.len();
        let lu = LuRef::new_unchecked(&self.symbolic, &self.numeric);
        let scratch = self.symbolic.solve_transpose_in_place_scratch::<f64>(1, Par::Seq);
        let mut mem = MemBuffer::new(scratch);
        lu.solve_transpose_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(b, n, 1), Par::Seq, MemStack::new(&mut mem));
    }

    /// Solves `A x = b` with up to three steps of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        if b.len() != self.matrix.nrows {
            return Err(SolveError::DimensionMismatch("rhs length".into()));
        }
        let mut x = b.to_vec();
        self.apply_inverse(&mut x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NumericallySingular { residual: f64::INFINITY });
        }
        let (mut r, mut rel) = relative_residual(&self.matrix, &x, b);
        let mut steps = 0;
        while rel > 1e-14 && steps < 3 {
            self.apply_inverse(&mut r);
            let trial: Vec<f64> = x.iter().zip(&r).map(|(a, c)| a + c).collect();
            let (r2, rel2) = relative_residual(&self.matrix, &trial, b);
            if !(rel2 < rel) {
                break;
            }
            x = trial;
            r = r2;
            rel = rel2;
            steps += 1;
        }
        if !(rel <= DIRECT_TOLERANCE) {
            return Err(SolveError::NumericallySingular { residual: rel });
        }
        Ok(x)
    }
}

/// Solves `A x = b` by sparse LU with residual check and refinement.
pub fn solve_direct(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, SolveError> {
    LuFactor::new(a)?.solve(b)
}

/// Right-preconditioned restarted GMRES. Returns the solution and the number
/// of inner iterations.
pub fn gmres(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    precondition: &dyn Fn(&mut [f64]),
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, usize), SolveError> {
    let n = b.len();
    let nb = norm2(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    if nb == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let mut total = 0;
    loop {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = norm2(&r);
        if beta / nb <= tol {
            return Ok((x, total));
        }
        if total >= max_iter {
            return Err(SolveError::NotConverged { iterations: total, residual: beta / nb });
        }
        let m = restart.min(max_iter - total).max(1);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|e| e / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut zk = v[k].clone();
            precondition(&mut zk);
            let mut w = a.matvec(&zk);
            z.push(zk);
            for (i, vi) in v.iter().enumerate() {
                h[i][k] = dot(&w, vi);
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= h[i][k] * vj;
                }
            }
            h[k + 1][k] = norm2(&w);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            cs[k] = if denom > 0.0 { h[k][k] / denom } else { 1.0 };
            sn[k] = if denom > 0.0 { h[k + 1][k] / denom } else { 0.0 };
            let hk1 = h[k + 1][k];
            h[k][k] = cs[k] * h[k][k] + sn[k] * hk1;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            let hn = norm2(&w);
            if g[k + 1].abs() / nb <= tol * 0.5 || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|e| e / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&z[j]) {
                *xi += yj * zi;
            }
        }
        if x.iter().any(|e| !e.is_finite()) {
            return Err(SolveError::NotConverged { iterations: total, residual: f64::INFINITY });
        }
    }
}

/// `[A B^T; B 0]` with an optional mean constraint `m . p = 0` on the
/// multiplier block, used when the multiplier is only determined up to a
/// constant.
#[derive(Debug, Clone)]
pub struct BlockSaddleSystem {
    pub a: SparseMatrix,
    pub b: SparseMatrix,
    pub mean_constraint: Option<Vec<f64>>,
    pub rhs_primal: Vec<f64>,
    pub rhs_constraint: Vec<f64>,
}

impl BlockSaddleSystem {
    pub fn num_primal(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_multiplier(&self) -> usize {
        self.b.nrows()
    }

    fn check(&self) -> Result<(), SolveError> {
        let (nu, np) = (self.a.nrows(), self.b.nrows());
        if self.a.ncols() != nu || self.b.ncols() != nu || self.rhs_primal.len() != nu || self.rhs_constraint.len() != np {
            return Err(SolveError::DimensionMismatch("saddle blocks".into()));
        }
        if let Some(m) = &self.mean_constraint {
            if m.len() != np || np == 0 {
                return Err(SolveError::DimensionMismatch("mean constraint length".into()));
            }
            if !(m.iter().sum::<f64>().abs() > 0.0) {
                return Err(SolveError::DimensionMismatch("mean constraint weights sum to zero".into()));
            }
        }
        Ok(())
    }

    /// Monolithic KKT matrix and right-hand side.
    ///
    /// With a mean constraint the first multiplier is pinned to zero instead
    /// of appending the dense row `m`, which would destroy the sparsity of the
    /// factors. The constraint row it replaces is implied by the others for
    /// compatible data, and [`split`](Self::split) restores `m . p = 0`.
    pub fn kkt(&self) -> Result<(SparseMatrix, Vec<f64>), SolveError> {
        self.check()?;
        let (nu, np) = (self.a.nrows(), self.b.nrows());
        let bt = self.b.transpose();
        let mut rhs = self.rhs_primal.clone();
        rhs.extend_from_slice(&self.rhs_constraint);
        let kkt = SparseMatrix::block(&[vec![Some(&self.a), Some(&bt)], vec![Some(&self.b), None]], &[nu, np], &[nu, np])?;
        if self.mean_constraint.is_none() {
            return Ok((kkt, rhs));
        }
        let pin = nu;
        let mut trip = Vec::with_capacity(kkt.nnz());
        for r in 0..kkt.nrows() {
            if r == pin {
                continue;
            }
            let (cols, vals) = kkt.row(r);
            trip.extend(cols.iter().zip(vals).filter(|(&c, _)| c != pin).map(|(&c, &v)| (r, c, v)));
        }
        trip.push((pin, pin, 1.0));
        rhs[pin] = 0.0;
        Ok((SparseMatrix::from_triplets(nu + np, nu + np, &trip)?, rhs))
    }

    /// Splits a KKT solution into (primal, multiplier), shifting the
    /// multiplier onto the mean constraint when there is one.
    pub fn split(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nu = self.a.nrows();
        let np = self.b.nrows();
        let mut p = x[nu..nu + np].to_vec();
        if let Some(m) = &self.mean_constraint {
            let shift = dot(m, &p) / m.iter().sum::<f64>();
            p.iter_mut().for_each(|v| *v -= shift);
        }
        (x[..nu].to_vec(), p)
    }
}

/// Solves a saddle system monolithically by sparse LU.
pub fn solve_saddle(system: &BlockSaddleSystem) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    if system.num_multiplier() == 0 && system.mean_constraint.is_none() {
        system.check()?;
        return Ok((solve_direct(&system.a, &system.rhs_primal)?, Vec::new()));
    }
    let (kkt, rhs) = system.kkt()?;
    let x = match LuFactor::new(&kkt).and_then(|f| f.solve(&rhs)) {
        Ok(x) => x,
        Err(SolveError::NumericallySingular { residual }) | Err(SolveError::RankDeficient { residual }) => {
            return Err(SolveError::RankDeficient { residual })
        }
        Err(SolveError::StructurallySingular) => return Err(SolveError::RankDeficient { residual: f64::INFINITY }),
        Err(e) => return Err(e),
    };
    Ok(system.split(&x))
}

/// Strategy for repeated saddle solves with slowly varying matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaddleStrategy {
    /// Fresh sparse LU of every system.
    Direct,
    /// GMRES preconditioned by the LU of an earlier system, refactored when
    /// the iteration count grows.
    Reuse,
}

impl std::str::FromStr for SaddleStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Self::Direct),
            "reuse" => Ok(Self::Reuse),
            other => Err(format!("unknown linear solver `{other}` (expected direct or reuse)")),
        }
    }
}

/// Counters of a [`SaddleSolver`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub solves: usize,
    pub factorizations: usize,
    pub krylov_iterations: usize,
}

/// Saddle solver that keeps its factorization between calls.
#[derive(Debug)]
pub struct SaddleSolver {
    strategy: SaddleStrategy,
    factor: Option<LuFactor>,
    last: Option<Vec<f64>>,
    /// Relative residual required from the Krylov solve.
    pub tolerance: f64,
    /// Krylov iterations beyond which the preconditioner is refreshed.
    pub refactor_after: usize,
    pub stats: SolverStats,
}

impl SaddleSolver {
    pub fn new(strategy: SaddleStrategy) -> Self {
        Self { strategy, factor: None, last: None, tolerance: 1e-13, refactor_after: 25, stats: SolverStats::default() }
    }

    pub fn strategy(&self) -> SaddleStrategy {
        self.strategy
    }

    pub fn solve(&mut self, system: &BlockSaddleSystem) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
        self.stats.solves += 1;
        if self.strategy == SaddleStrategy::Direct {
            self.stats.factorizations += 1;
            return solve_saddle(system);
        }
        let (kkt, rhs) = system.kkt()?;
        let n = rhs.len();
        if let Some(f) = self.factor.as_ref().filter(|f| f.matrix().nrows() == n) {
            let x0 = self.last.as_deref().filter(|x| x.len() == n);
            let pre = |r: &mut [f64]| f.apply_inverse(r);
            match gmres(&kkt, &rhs, x0, &pre, self.tolerance, 60, 2 * self.refactor_after) {
                Ok((x, it)) => {
                    self.stats.krylov_iterations += it;
                    if it > self.refactor_after {
                        self.factor = None;
                    }
                    let out = system.split(&x);
                    self.last = Some(x);
                    return Ok(out);
                }
                Err(SolveError::NotConverged { iterations, .. }) => self.stats.krylov_iterations += iterations,
                Err(e) => return Err(e),
            }
        }
        self.stats.factorizations += 1;
        let f = LuFactor::new(&kkt).map_err(|e| match e {
            SolveError::StructurallySingular => SolveError::RankDeficient { residual: f64::INFINITY },
            other => other,
        })?;
        let x = f.solve(&rhs).map_err(|e| match e {
            SolveError::NumericallySingular { residual } => SolveError::RankDeficient { residual },
            other => other,
        })?;
        self.factor = Some(f);
        let out = system.split(&x);
        self.last = Some(x);
        Ok(out)
    }
}
