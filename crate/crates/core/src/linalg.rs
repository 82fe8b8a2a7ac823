//! Small dense and banded linear-algebra kernels used by the solvers.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Euclidean inner product with a fixed summation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `y = A x` for a row-major `rows x cols` matrix.
pub fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    for i in 0..rows {
        y[i] = dot(&a[i * cols..(i + 1) * cols], x);
    }
}

/// `y = Aᵀ x` for a row-major `rows x cols` matrix.
pub fn matvec_t(a: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    y[..cols].iter_mut().for_each(|v| *v = 0.0);
    for i in 0..rows {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for (yj, aij) in y.iter_mut().zip(&a[i * cols..(i + 1) * cols]) {
            *yj += aij * xi;
        }
    }
}

/// Eigen-decomposition of a symmetric row-major `n x n` matrix.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as the columns of a row-major matrix.
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotFinite("symmetric eigenproblem input"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[i * n + j] + a[j * n + i]));
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &k) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = eig.eigenvectors[(row, k)];
        }
    }
    Ok((values, vectors))
}

/// Band matrix with equal lower and upper bandwidth, factored in place by
/// Gaussian elimination without pivoting.
///
/// Suitable for the diagonally dominant or symmetric positive definite
/// systems assembled here; a vanishing pivot is reported as a solver error.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    // Row i stores columns i-bw ..= i+bw at offsets 0 ..= 2bw.
    data: Vec<f64>,
    factored: bool,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (2 * bw + 1)], factored: false }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> Option<usize> {
        let w = 2 * self.bw + 1;
        if j + self.bw < i || j > i + self.bw {
            None
        } else {
            Some(i * w + (j + self.bw - i))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.offset(i, j).map_or(0.0, |o| self.data[o])
    }

    /// Adds `v` at `(i, j)`; entries outside the band must be zero.
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        match self.offset(i, j) {
            Some(o) => {
                self.data[o] += v;
                Ok(())
            }
            None if v == 0.0 => Ok(()),
            None => Err(Error::Consistency(alloc::format!(
                "entry ({i}, {j}) lies outside bandwidth {}",
                self.bw
            ))),
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert!(!self.factored, "matvec on a factored band matrix");
        let w = 2 * self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw).min(self.n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            let mut s = 0.0;
            for j in lo..=hi {
                s += row[j + self.bw - i] * x[j];
            }
            y[i] = s;
        }
    }

    /// In-place LU factorization (unit lower triangle stored below the
    /// diagonal).
    pub fn factor(&mut self) -> Result<()> {
        let n = self.n;
        let bw = self.bw;
        let w = 2 * bw + 1;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let pivot = self.data[k * w + bw];
            if !(pivot.abs() > 1e-14 * scale) {
                return Err(Error::Solver { what: "banded LU pivot", residual: pivot });
            }
            let hi = (k + bw).min(n - 1);
            for i in k + 1..=hi {
                let oik = i * w + (k + bw - i);
                let l = self.data[oik] / pivot;
                self.data[oik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=hi {
                    let okj = k * w + (j + bw - k);
                    let oij = i * w + (j + bw - i);
                    self.data[oij] -= l * self.data[okj];
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` in place using the stored factors.
    pub fn solve(&self, b: &mut [f64]) {
        assert!(self.factored, "solve before factor");
        let n = self.n;
        let bw = self.bw;
        let w = 2 * bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = b[i];
            for j in lo..i {
                s -= self.data[i * w + (j + bw - i)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = b[i];
            for j in i + 1..=hi {
                s -= self.data[i * w + (j + bw - i)] * b[j];
            }
            b[i] = s / self.data[i * w + bw];
        }
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Restarted GMRES with right preconditioning.
///
/// `apply` computes `y = A x`, `precondition` computes `y ≈ A⁻¹ x`. On entry
/// `x` holds the initial guess. Converges when
/// `‖b − A x‖ ≤ max(rtol ‖b‖, atol)`.
#[allow(clippy::too_many_arguments)]
pub fn gmres<A, P>(
    apply: A,
    precondition: P,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    atol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<IterativeReport>
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(IterativeReport { iterations: 0, relative_residual: 0.0 });
    }
    let target = (rtol * bnorm).max(atol);
    let m = restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = (0..=m).map(|_| vec![0.0; n]).collect();
    let mut h = vec![0.0; (m + 1) * m];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut total = 0;
    loop {
        apply(x, &mut w);
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
        let beta = norm2(&r);
        let rel = beta / bnorm;
        if !rel.is_finite() {
            return Err(Error::NotFinite("GMRES residual"));
        }
        if beta <= target {
            return Ok(IterativeReport { iterations: total, relative_residual: rel });
        }
        if total >= max_iter {
            return Err(Error::Solver { what: "GMRES", residual: rel });
        }
        for i in 0..n {
            basis[0][i] = r[i] / beta;
        }
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            precondition(&basis[k], &mut z);
            apply(&z, &mut w);
            for j in 0..=k {
                let hjk = dot(&w, &basis[j]);
                h[j * m + k] = hjk;
                for i in 0..n {
                    w[i] -= hjk * basis[j][i];
                }
            }
            let hk1 = norm2(&w);
            h[(k + 1) * m + k] = hk1;
            if hk1 > 0.0 {
                for i in 0..n {
                    basis[k + 1][i] = w[i] / hk1;
                }
            }
            for j in 0..k {
                let a = h[j * m + k];
                let c = h[(j + 1) * m + k];
                h[j * m + k] = cs[j] * a + sn[j] * c;
                h[(j + 1) * m + k] = -sn[j] * a + cs[j] * c;
            }
            let a = h[k * m + k];
            let c = h[(k + 1) * m + k];
            let den = libm::hypot(a, c);
            cs[k] = if den == 0.0 { 1.0 } else { a / den };
            sn[k] = if den == 0.0 { 0.0 } else { c / den };
            h[k * m + k] = den;
            h[(k + 1) * m + k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if libm::fabs(g[k + 1]) <= 0.1 * target || hk1 == 0.0 || total >= max_iter {
                break;
            }
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i * m + j] * y[j];
            }
            y[i] = s / h[i * m + i];
        }
        w.iter_mut().for_each(|v| *v = 0.0);
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                w[i] += yj * basis[j][i];
            }
        }
        precondition(&w, &mut z);
        for i in 0..n {
            x[i] += z[i];
        }
    }
}

/// Fast diagonalization for operators that are functions of a Kronecker sum
/// `A₁ ⊕ A₂` of symmetric matrices. Unknowns are indexed `j * n₁ + i`, with
/// `A₁` acting on the fast index `i`.
#[derive(Debug, Clone)]
pub struct TensorSolver {
    n1: usize,
    n2: usize,
    q1: Vec<f64>,
    q2: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl TensorSolver {
    /// `a1` acts on the fast index (size `n1`), `a2` on the slow index.
    pub fn new(a1: &[f64], n1: usize, a2: &[f64], n2: usize) -> Result<Self> {
        let (l1, q1) = symmetric_eigen(a1, n1)?;
        let (l2, q2) = symmetric_eigen(a2, n2)?;
        Ok(Self { n1, n2, q1, q2, l1, l2 })
    }

    pub fn eigenvalues(&self) -> (&[f64], &[f64]) {
        (&self.l1, &self.l2)
    }

    /// Solves `(shift(λ₁ᵢ + λ₂ⱼ)) X = B` in place, where the operator is
    /// diagonal in the product eigenbasis with entries `shift(λ₁ᵢ + λ₂ⱼ)`.
    pub fn solve_with<F: Fn(f64) -> f64>(&self, b: &mut [f64], symbol: F) {
        let (n1, n2) = (self.n1, self.n2);
        let mut t = vec![0.0; n1 * n2];
        // Transform fast index: t[j][k] = Σ_i q1[i][k] b[j][i]
        for j in 0..n2 {
            matvec_t(&self.q1, n1, n1, &b[j * n1..(j + 1) * n1], &mut t[j * n1..(j + 1) * n1]);
        }
        // Transform slow index and scale.
        let mut col = vec![0.0; n2];
        let mut out = vec![0.0; n2];
        for k in 0..n1 {
            for j in 0..n2 {
                col[j] = t[j * n1 + k];
            }
            matvec_t(&self.q2, n2, n2, &col, &mut out);
            for l in 0..n2 {
                out[l] /= symbol(self.l1[k] + self.l2[l]);
            }
            matvec(&self.q2, n2, n2, &out, &mut col);
            for j in 0..n2 {
                t[j * n1 + k] = col[j];
            }
        }
        for j in 0..n2 {
            matvec(&self.q1, n1, n1, &t[j * n1..(j + 1) * n1], &mut b[j * n1..(j + 1) * n1]);
        }
    }
}
