//! Maxwellian-weighted collocation on the configuration ball of a FENE
//! dumbbell in two dimensions.
//!
//! Nodes form a polar tensor grid: Gauss–Legendre radii in `(0, √b)` and
//! equispaced angles. Every quadrature weight already contains the
//! Maxwellian, so integrals `∫ M f dq` are plain weighted sums and no field is
//! ever divided by `M`. Radial derivatives use the Lagrange interpolant
//! through the radial nodes, angular derivatives the trigonometric
//! interpolant. Node `(m, n)` (radius `m`, angle `n`) has flat index
//! `m * n_theta + n`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, exp, sin, sqrt};

use crate::kinetic::{fene_potential, maxwellian_normalizer, ChainGeometry, RouseMatrix};
use crate::linalg::{dot, symmetric_eigen};
use crate::quadrature::{fourier_differentiation, gauss_legendre, lagrange_differentiation};
use crate::{Error, Result};

/// Tolerance on `|Z_h / Z − 1|` accepted at grid construction.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-8;

/// 2×2 matrix stored row-major.
pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone)]
pub struct ConfigGrid {
    b: f64,
    nr: usize,
    nt: usize,
    r: Vec<f64>,
    theta: Vec<f64>,
    cos_t: Vec<f64>,
    sin_t: Vec<f64>,
    z: f64,
    z_discrete: f64,
    /// Weight per radius (identical for all angles); sums to `1 / n_theta`.
    omega: Vec<f64>,
    /// `M(q)` at each radius with the exact normalizer.
    maxwellian: Vec<f64>,
    /// `U'(½ r²)` at each radius.
    uprime: Vec<f64>,
    dr: Vec<f64>,
    dt: Vec<f64>,
}

impl ConfigGrid {
    /// Builds the polar grid for a `K = 1`, `d = 2` FENE chain.
    pub fn new(geometry: &ChainGeometry, n_r: usize, n_theta: usize) -> Result<Self> {
        if geometry.springs() != 1 || geometry.dim() != 2 {
            return Err(Error::Unsupported(format!(
                "configuration grids are implemented for K = 1, d = 2 (got K = {}, d = {})",
                geometry.springs(),
                geometry.dim()
            )));
        }
        if n_r < 8 || n_theta < 8 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 8 radial and 8 angular nodes (got {n_r} x {n_theta})"
            )));
        }
        let b = geometry.b()[0];
        let rmax = sqrt(b);
        let (x, w) = gauss_legendre(n_r);
        let r: Vec<f64> = x.iter().map(|x| 0.5 * rmax * (x + 1.0)).collect();
        let wr: Vec<f64> = w.iter().map(|w| 0.5 * rmax * w).collect();
        let dth = 2.0 * PI / n_theta as f64;
        let theta: Vec<f64> = (0..n_theta).map(|n| n as f64 * dth).collect();
        let z = maxwellian_normalizer(b, 2)?;

        let mut uprime = Vec::with_capacity(n_r);
        let mut expu = Vec::with_capacity(n_r);
        for &rm in &r {
            let (u, up) = fene_potential(0.5 * rm * rm, b)?;
            uprime.push(up);
            expu.push(exp(-u));
        }
        let z_discrete: f64 = 2.0 * PI * (0..n_r).map(|m| wr[m] * r[m] * expu[m]).sum::<f64>();
        let defect = (z_discrete / z - 1.0).abs();
        if !(defect <= NORMALIZATION_TOLERANCE) {
            return Err(Error::GridTooCoarse { defect, tolerance: NORMALIZATION_TOLERANCE });
        }
        let omega: Vec<f64> = (0..n_r).map(|m| wr[m] * r[m] * dth * expu[m] / z_discrete).collect();
        let maxwellian = expu.iter().map(|e| e / z).collect();

        let mut dr = lagrange_differentiation(&x);
        dr.iter_mut().for_each(|v| *v *= 2.0 / rmax);
        let dt = fourier_differentiation(n_theta);
        Ok(Self {
            b,
            nr: n_r,
            nt: n_theta,
            cos_t: theta.iter().map(|t| cos(*t)).collect(),
            sin_t: theta.iter().map(|t| sin(*t)).collect(),
            r,
            theta,
            z,
            z_discrete,
            omega,
            maxwellian,
            uprime,
            dr,
            dt,
        })
    }

    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn n_r(&self) -> usize {
        self.nr
    }
    pub fn n_theta(&self) -> usize {
        self.nt
    }
    /// Total number of configuration nodes.
    pub fn len(&self) -> usize {
        self.nr * self.nt
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn radii(&self) -> &[f64] {
        &self.r
    }
    pub fn angles(&self) -> &[f64] {
        &self.theta
    }
    /// Exact Maxwellian normalizer `Z`.
    pub fn normalizer(&self) -> f64 {
        self.z
    }
    /// Normalizer reproduced by the grid's own quadrature.
    pub fn discrete_normalizer(&self) -> f64 {
        self.z_discrete
    }
    pub fn normalization_defect(&self) -> f64 {
        (self.z_discrete / self.z - 1.0).abs()
    }

    /// Quadrature weight (including `M`) of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.omega[i / self.nt]
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    /// `M(q)` at node `i`.
    pub fn maxwellian(&self, i: usize) -> f64 {
        self.maxwellian[i / self.nt]
    }

    /// `U'(½|q|²)` at node `i`.
    #[inline]
    pub fn uprime(&self, i: usize) -> f64 {
        self.uprime[i / self.nt]
    }

    /// Cartesian coordinates of node `i`.
    #[inline]
    pub fn node(&self, i: usize) -> [f64; 2] {
        let (m, n) = (i / self.nt, i % self.nt);
        [self.r[m] * self.cos_t[n], self.r[m] * self.sin_t[n]]
    }

    /// Samples `f(q)` at every node.
    pub fn sample<F: Fn([f64; 2]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.node(i))).collect()
    }

    /// `∫ M f dq`.
    pub fn weighted_integral(&self, field: &[f64]) -> f64 {
        let mut total = 0.0;
        for m in 0..self.nr {
            let row: f64 = field[m * self.nt..(m + 1) * self.nt].iter().sum();
            total += self.omega[m] * row;
        }
        total
    }

    /// Cartesian gradient `(∂_x f, ∂_y f)` at every node.
    pub fn gradient(&self, f: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        let (nr, nt) = (self.nr, self.nt);
        for m in 0..nr {
            let inv_r = 1.0 / self.r[m];
            for n in 0..nt {
                let mut fr = 0.0;
                for k in 0..nr {
                    fr += self.dr[m * nr + k] * f[k * nt + n];
                }
                let ft = dot(&self.dt[n * nt..(n + 1) * nt], &f[m * nt..(m + 1) * nt]) * inv_r;
                let (c, s) = (self.cos_t[n], self.sin_t[n]);
                gx[m * nt + n] = c * fr - s * ft;
                gy[m * nt + n] = s * fr + c * ft;
            }
        }
    }

    /// Adjoint of [`gradient`](Self::gradient) in the Euclidean inner
    /// product: `f = Gᵀ (gx, gy)`.
    pub fn gradient_transpose(&self, gx: &[f64], gy: &[f64], f: &mut [f64]) {
        let (nr, nt) = (self.nr, self.nt);
        f.iter_mut().for_each(|v| *v = 0.0);
        let mut ar = vec![0.0; nt];
        let mut at = vec![0.0; nt];
        for m in 0..nr {
            let inv_r = 1.0 / self.r[m];
            for n in 0..nt {
                let (c, s) = (self.cos_t[n], self.sin_t[n]);
                let (x, y) = (gx[m * nt + n], gy[m * nt + n]);
                ar[n] = c * x + s * y;
                at[n] = (-s * x + c * y) * inv_r;
            }
            for k in 0..nr {
                let d = self.dr[m * nr + k];
                for n in 0..nt {
                    f[k * nt + n] += d * ar[n];
                }
            }
            for n in 0..nt {
                let a = at[n];
                if a == 0.0 {
                    continue;
                }
                for l in 0..nt {
                    f[m * nt + l] += self.dt[n * nt + l] * a;
                }
            }
        }
    }

    fn nyquist_penalty(&self) -> Option<f64> {
        self.nt.is_multiple_of(2).then(|| {
            let h = 0.5 * self.nt as f64;
            h * h
        })
    }

    /// Weighted Dirichlet form `S f = Gᵀ W G f + P f`, where `P` penalizes the
    /// angular Nyquist mode (invisible to the spectral derivative) with its
    /// natural symbol, so that the kernel of `S` is exactly the constants.
    pub fn stiffness_apply(&self, f: &[f64], out: &mut [f64]) {
        let nq = self.len();
        let mut gx = vec![0.0; nq];
        let mut gy = vec![0.0; nq];
        self.gradient(f, &mut gx, &mut gy);
        for i in 0..nq {
            let w = self.weight(i);
            gx[i] *= w;
            gy[i] *= w;
        }
        self.gradient_transpose(&gx, &gy, out);
        if let Some(mu) = self.nyquist_penalty() {
            let nt = self.nt;
            for m in 0..self.nr {
                let row = &f[m * nt..(m + 1) * nt];
                let p: f64 = row.iter().enumerate().map(|(n, v)| if n % 2 == 0 { *v } else { -*v }).sum();
                let coef = mu * self.omega[m] / (self.r[m] * self.r[m]) * p / nt as f64;
                for n in 0..nt {
                    out[m * nt + n] += if n % 2 == 0 { coef } else { -coef };
                }
            }
        }
    }

    /// `fᵀ S f = ∫ M |∇_q f|²` in the discrete Dirichlet form.
    pub fn dirichlet_form(&self, f: &[f64]) -> f64 {
        let mut s = vec![0.0; self.len()];
        self.stiffness_apply(f, &mut s);
        dot(f, &s)
    }

    /// Kramers stress `k (∫ M ψ̂ U' q qᵀ dq − (∫ M ψ̂ dq) I)`.
    pub fn kramers_stress(&self, psi: &[f64], k: f64) -> Mat2 {
        let c = self.stress_moment(psi);
        [[k * c[0][0], k * c[0][1]], [k * c[1][0], k * c[1][1]]]
    }

    /// `C(Mψ̂) = ∫ M ψ̂ U' q qᵀ dq − (∫ M ψ̂ dq) I`.
    pub fn stress_moment(&self, psi: &[f64]) -> Mat2 {
        let mut xx = 0.0;
        let mut xy = 0.0;
        let mut yy = 0.0;
        let mut mass = 0.0;
        for (i, &p) in psi.iter().enumerate() {
            let w = self.weight(i) * p;
            let q = self.node(i);
            let u = self.uprime(i) * w;
            xx += u * q[0] * q[0];
            xy += u * q[0] * q[1];
            yy += u * q[1] * q[1];
            mass += w;
        }
        [[xx - mass, xy], [xy, yy - mass]]
    }

    /// Constant `C_σ = (∫ M |U' q qᵀ − I|_F²)^{1/2}` with
    /// `|C(Mψ̂)|_F ≤ C_σ ‖ψ̂‖_{L²_M}` by Cauchy–Schwarz.
    pub fn stress_bound_constant(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.len() {
            let q = self.node(i);
            let u = self.uprime(i);
            let a = u * q[0] * q[0] - 1.0;
            let b = u * q[0] * q[1];
            let c = u * q[1] * q[1] - 1.0;
            total += self.weight(i) * (a * a + 2.0 * b * b + c * c);
        }
        sqrt(total)
    }

    /// Both sides of the integration-by-parts identity
    /// `∫ M (Bq)·∇φ̂ = ∫ M φ̂ U' qᵀBq` for traceless `B`.
    pub fn ibp_sides(&self, b: Mat2, phi: &[f64]) -> Result<(f64, f64)> {
        let tr = b[0][0] + b[1][1];
        let scale = b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if tr.abs() > 1e-12 * scale.max(1.0) {
            return Err(Error::Precondition(format!("B must be traceless (trace {tr})")));
        }
        let nq = self.len();
        let mut gx = vec![0.0; nq];
        let mut gy = vec![0.0; nq];
        self.gradient(phi, &mut gx, &mut gy);
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for i in 0..nq {
            let q = self.node(i);
            let bq = [b[0][0] * q[0] + b[0][1] * q[1], b[1][0] * q[0] + b[1][1] * q[1]];
            let w = self.weight(i);
            lhs += w * (bq[0] * gx[i] + bq[1] * gy[i]);
            rhs += w * phi[i] * self.uprime(i) * (q[0] * bq[0] + q[1] * bq[1]);
        }
        Ok((lhs, rhs))
    }

    /// `|∫ M (Bq)·∇φ̂ − ∫ M φ̂ U' qᵀBq|`.
    pub fn ibp_residual(&self, b: Mat2, phi: &[f64]) -> Result<f64> {
        let (l, r) = self.ibp_sides(b, phi)?;
        Ok((l - r).abs())
    }

    /// Weak drag functional `φ̂ ↦ ∫ M (σ q) β · ∇φ̂` as a vector over nodes,
    /// accumulated into `out` with factor `scale`.
    pub fn drag_accumulate(&self, sigma: Mat2, beta: &[f64], scale: f64, out: &mut [f64]) {
        let nq = self.len();
        let mut fx = vec![0.0; nq];
        let mut fy = vec![0.0; nq];
        for i in 0..nq {
            let q = self.node(i);
            let w = self.weight(i) * beta[i] * scale;
            fx[i] = w * (sigma[0][0] * q[0] + sigma[0][1] * q[1]);
            fy[i] = w * (sigma[1][0] * q[0] + sigma[1][1] * q[1]);
        }
        let mut tmp = vec![0.0; nq];
        self.gradient_transpose(&fx, &fy, &mut tmp);
        out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
    }

    /// Ω-orthonormal eigenbasis of the Dirichlet form.
    pub fn modal_basis(&self) -> Result<ModalBasis> {
        ModalBasis::new(self)
    }
}

/// Eigenbasis `V` of the generalized problem `S v = λ W v`, normalized so
/// that `Vᵀ W V = I`. Modes are indexed `j * n_r + i` with `j` the angular
/// Fourier mode and `i` the radial eigenvector. Mode `0` is the constant.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    nr: usize,
    nt: usize,
    fourier: Vec<f64>,
    radial: Vec<Vec<f64>>,
    // Transposed radial bases, for contiguous forward transforms.
    radial_t: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
}

impl ModalBasis {
    fn new(grid: &ConfigGrid) -> Result<Self> {
        let (nr, nt) = (grid.nr, grid.nt);
        // Real orthonormal trigonometric basis; column j, with its symbol.
        let mut fourier = vec![0.0; nt * nt];
        let mut symbols = vec![0.0; nt];
        let norm0 = 1.0 / sqrt(nt as f64);
        let norm = sqrt(2.0 / nt as f64);
        let mut col = 0;
        for n in 0..nt {
            fourier[n * nt] = norm0;
        }
        col += 1;
        for m in 1..nt.div_ceil(2) {
            for n in 0..nt {
                let a = m as f64 * grid.theta[n];
                fourier[n * nt + col] = norm * cos(a);
                fourier[n * nt + col + 1] = norm * sin(a);
            }
            symbols[col] = (m * m) as f64;
            symbols[col + 1] = (m * m) as f64;
            col += 2;
        }
        if nt % 2 == 0 {
            for n in 0..nt {
                fourier[n * nt + col] = if n % 2 == 0 { norm0 } else { -norm0 };
            }
            symbols[col] = grid.nyquist_penalty().unwrap_or(0.0);
        }

        let inv_sqrt: Vec<f64> = grid.omega.iter().map(|w| 1.0 / sqrt(*w)).collect();
        // Radial stiffness Dᵀ diag(ω) D.
        let mut krr = vec![0.0; nr * nr];
        for a in 0..nr {
            for c in 0..nr {
                let mut s = 0.0;
                for m in 0..nr {
                    s += grid.dr[m * nr + a] * grid.omega[m] * grid.dr[m * nr + c];
                }
                krr[a * nr + c] = s;
            }
        }
        let mut radial: Vec<Vec<f64>> = Vec::with_capacity(nt);
        let mut eigenvalues = vec![0.0; nr * nt];
        let mut cache: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
        for j in 0..nt {
            let mu = symbols[j];
            if let Some((_, v, l)) = cache.iter().find(|(m, _, _)| *m == mu) {
                radial.push(v.clone());
                eigenvalues[j * nr..(j + 1) * nr].copy_from_slice(l);
                continue;
            }
            let mut k = vec![0.0; nr * nr];
            for a in 0..nr {
                for c in 0..nr {
                    let mut v = krr[a * nr + c];
                    if a == c {
                        v += mu * grid.omega[a] / (grid.r[a] * grid.r[a]);
                    }
                    k[a * nr + c] = v * inv_sqrt[a] * inv_sqrt[c];
                }
            }
            let (mut l, y) = symmetric_eigen(&k, nr)?;
            let mut v = vec![0.0; nr * nr];
            for a in 0..nr {
                for c in 0..nr {
                    v[a * nr + c] = y[a * nr + c] * inv_sqrt[a];
                }
            }
            if j == 0 {
                // Exact constant mode, and the rest made Ω-orthogonal to it.
                let total: f64 = grid.omega.iter().sum();
                let c0 = 1.0 / sqrt(total);
                for a in 0..nr {
                    v[a * nr] = c0;
                }
                l[0] = 0.0;
                for c in 1..nr {
                    let p: f64 = (0..nr).map(|a| grid.omega[a] * v[a * nr + c] * c0).sum();
                    for a in 0..nr {
                        v[a * nr + c] -= p * c0;
                    }
                    let n2: f64 = (0..nr).map(|a| grid.omega[a] * v[a * nr + c] * v[a * nr + c]).sum();
                    let s = 1.0 / sqrt(n2);
                    for a in 0..nr {
                        v[a * nr + c] *= s;
                    }
                }
            }
            eigenvalues[j * nr..(j + 1) * nr].copy_from_slice(&l);
            cache.push((mu, v.clone(), l));
            radial.push(v);
        }
        let radial_t = radial
            .iter()
            .map(|v| {
                let mut t = vec![0.0; nr * nr];
                for a in 0..nr {
                    for c in 0..nr {
                        t[c * nr + a] = v[a * nr + c];
                    }
                }
                t
            })
            .collect();
        Ok(Self { nr, nt, fourier, radial, radial_t, eigenvalues })
    }

    pub fn len(&self) -> usize {
        self.nr * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Eigenvalue of mode `k`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Smallest nonzero eigenvalue (discrete spectral gap).
    pub fn spectral_gap(&self) -> f64 {
        self.eigenvalues[1..].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `c = Vᵀ g` for a weak-form (dual) vector `g`.
    pub fn forward(&self, g: &[f64], c: &mut [f64]) {
        let (nr, nt) = (self.nr, self.nt);
        let mut rows = vec![0.0; nr * nt];
        for m in 0..nr {
            let out = &mut rows[m * nt..(m + 1) * nt];
            for (n, &v) in g[m * nt..(m + 1) * nt].iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                for (o, f) in out.iter_mut().zip(&self.fourier[n * nt..(n + 1) * nt]) {
                    *o += f * v;
                }
            }
        }
        let mut col = vec![0.0; nr];
        for j in 0..nt {
            for m in 0..nr {
                col[m] = rows[m * nt + j];
            }
            let vt = &self.radial_t[j];
            for i in 0..nr {
                c[j * nr + i] = dot(&vt[i * nr..(i + 1) * nr], &col);
            }
        }
    }

    /// `f = V c` (nodal values from modal coefficients).
    pub fn inverse(&self, c: &[f64], f: &mut [f64]) {
        let (nr, nt) = (self.nr, self.nt);
        let mut gt = vec![0.0; nr * nt];
        for j in 0..nt {
            let v = &self.radial[j];
            let src = &c[j * nr..(j + 1) * nr];
            for m in 0..nr {
                gt[m * nt + j] = dot(&v[m * nr..(m + 1) * nr], src);
            }
        }
        for m in 0..nr {
            let src = &gt[m * nt..(m + 1) * nt];
            for n in 0..nt {
                f[m * nt + n] = dot(&self.fourier[n * nt..(n + 1) * nt], src);
            }
        }
    }
}

/// Configuration-space operators of the Fokker–Planck step for a dumbbell:
/// the q-diffusion coefficient `A₁₁/(2λ)` applied to the Dirichlet form, its
/// eigenbasis, and the centre-of-mass diffusion coefficient.
#[derive(Debug, Clone)]
pub struct ConfigOperators {
    pub basis: ModalBasis,
    pub q_diffusion: f64,
    pub epsilon: f64,
}

impl ConfigOperators {
    pub fn new(grid: &ConfigGrid, a: &RouseMatrix, lambda: f64, epsilon: f64) -> Result<Self> {
        if a.size() != 1 {
            return Err(Error::Unsupported("Fokker–Planck operators require K = 1".into()));
        }
        if !(lambda > 0.0) || !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "λ = {lambda} and ε = {epsilon} must be positive"
            )));
        }
        Ok(Self { basis: grid.modal_basis()?, q_diffusion: a.entry(0, 0) / (2.0 * lambda), epsilon })
    }
}

/// Weighted density field `ψ̂(x_c, q_i)` stored cell-major: entry
/// `c * n_q + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedField {
    cells: usize,
    nq: usize,
    data: Vec<f64>,
}

impl WeightedField {
    pub fn constant(cells: usize, nq: usize, value: f64) -> Self {
        Self { cells, nq, data: vec![value; cells * nq] }
    }

    pub fn from_vec(cells: usize, nq: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != cells * nq {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, expected {}",
                data.len(),
                cells * nq
            )));
        }
        Ok(Self { cells, nq, data })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }
    pub fn nodes(&self) -> usize {
        self.nq
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
    pub fn cell(&self, c: usize) -> &[f64] {
        &self.data[c * self.nq..(c + 1) * self.nq]
    }
    pub fn cell_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.nq..(c + 1) * self.nq]
    }
    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
