//! Dense and banded linear-algebra helpers built over nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Symmetric eigendecomposition with eigenvalues sorted ascending and
/// eigenvector columns permuted to match.
pub fn symmetric_eigen_sorted(m: Matrix) -> (Vector, Matrix) {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut values = Vector::zeros(n);
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|).
pub fn spectral_norm_sym(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Forms V · diag(d) · Vᵀ with exact output symmetry (upper triangle is
/// computed once and mirrored).
pub fn v_diag_vt(v: &Matrix, d: &Vector) -> Matrix {
    let n = v.nrows();
    let k = v.ncols();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for l in 0..k {
                acc += v[(i, l)] * d[l] * v[(j, l)];
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    out
}

/// Rectangular variant: rows(v, rows_a) · diag(d) · rows(v, rows_b)ᵀ.
pub fn v_diag_vt_block(v: &Matrix, d: &Vector, rows_a: &[usize], rows_b: &[usize]) -> Matrix {
    let k = v.ncols();
    let mut out = Matrix::zeros(rows_a.len(), rows_b.len());
    for (ia, &ra) in rows_a.iter().enumerate() {
        for (ib, &rb) in rows_b.iter().enumerate() {
            let mut acc = 0.0;
            for l in 0..k {
                acc += v[(ra, l)] * d[l] * v[(rb, l)];
            }
            out[(ia, ib)] = acc;
        }
    }
    out
}

/// Symmetric positive-definite banded matrix in lower-band storage.
///
/// Entry (i, j) with 0 ≤ i − j ≤ bandwidth lives at `data[j * (bw+1) + (i-j)]`.
/// Used for the extension solves, where the half-space discretization is a
/// five-point scheme with bandwidth equal to the number of grid cells.
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedSpd {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= j && i - j <= self.bw);
        j * (self.bw + 1) + (i - j)
    }

    /// Adds `v` to entry (i, j); only the lower triangle within the band is
    /// stored, so callers pass i ≥ j.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            return 0.0;
        }
        self.data[self.idx(r, c)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// y = A·x using the symmetric band.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let top = (j + self.bw).min(self.n - 1);
            y[j] += self.data[self.idx(j, j)] * x[j];
            for i in (j + 1)..=top {
                let a = self.data[self.idx(i, j)];
                if a != 0.0 {
                    y[i] += a * x[j];
                    y[j] += a * x[i];
                }
            }
        }
    }

    /// In-place banded Cholesky factorization A = L·Lᵀ.
    pub fn cholesky(mut self) -> Result<BandedChol> {
        let bw = self.bw;
        for j in 0..self.n {
            let mut d = self.data[self.idx(j, j)];
            let k0 = j.saturating_sub(bw);
            for k in k0..j {
                let l = self.data[self.idx(j, k)];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(CoreError::LinearSolver(format!(
                    "banded Cholesky breakdown at pivot {j} (value {d:.3e})"
                )));
            }
            let dj = d.sqrt();
            let jj = self.idx(j, j);
            self.data[jj] = dj;
            let top = (j + bw).min(self.n - 1);
            for i in (j + 1)..=top {
                let ij = self.idx(i, j);
                let mut v = self.data[ij];
                let k0 = i.saturating_sub(bw).max(k0);
                for k in k0..j {
                    v -= self.data[self.idx(i, k)] * self.data[self.idx(j, k)];
                }
                self.data[ij] = v / dj;
            }
        }
        Ok(BandedChol { m: self })
    }
}

/// Cholesky factor of a [`BandedSpd`] matrix.
pub struct BandedChol {
    m: BandedSpd,
}

impl BandedChol {
    /// Solves A·x = b in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.m.n;
        let bw = self.m.bw;
        // forward: L y = b
        for j in 0..n {
            let k0 = j.saturating_sub(bw);
            let mut v = b[j];
            for k in k0..j {
                v -= self.m.data[self.m.idx(j, k)] * b[k];
            }
            b[j] = v / self.m.data[self.m.idx(j, j)];
        }
        // backward: Lᵀ x = y
        for j in (0..n).rev() {
            let top = (j + bw).min(n - 1);
            let mut v = b[j];
            for i in (j + 1)..=top {
                v -= self.m.data[self.m.idx(i, j)] * b[i];
            }
            b[j] = v / self.m.data[self.m.idx(j, j)];
        }
    }
}
