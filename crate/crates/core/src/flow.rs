//! Staggered (MAC) finite differences on a rectangle with no-slip walls.
//!
//! Velocities live on cell faces: the `u` component on vertical faces
//! `(i h, (j + ½) h)`, `i = 0..=nx`, `j = 0..ny`, and the `v` component on
//! horizontal faces `((i + ½) h, j h)`. Both are stored in one vector, `u`
//! first (`j (nx + 1) + i`), then `v` (`n_u + j nx + i`). Wall-normal faces
//! are kept at zero. Discretely divergence-free fields are parametrized by a
//! streamfunction on interior cell corners, which makes the divergence vanish
//! identically and lets the momentum equation be solved directly in the
//! divergence-free space.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::config_space::Mat2;
use crate::linalg::{dot, symmetric_eigen, BandedMatrix, TensorSolver};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowGrid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    h: f64,
}

/// Discrete velocity on the faces of a [`FlowGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub data: Vec<f64>,
}

impl VelocityField {
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl FlowGrid {
    /// Uniform grid of `nx x ny` cells on `(0, lx) x (0, ly)`; requires
    /// `lx / nx = ly / ny`.
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidParameter(format!("flow grid needs at least 2x2 cells, got {nx}x{ny}")));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidParameter("domain extents must be positive".into()));
        }
        let h = lx / nx as f64;
        if ((ly / ny as f64) - h).abs() > 1e-12 * h {
            return Err(Error::InvalidParameter(format!(
                "spacing must be uniform: lx/nx = {h}, ly/ny = {}",
                ly / ny as f64
            )));
        }
        Ok(Self { nx, ny, lx, ly, h })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn extents(&self) -> (f64, f64) {
        (self.lx, self.ly)
    }
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }
    pub fn n_u(&self) -> usize {
        (self.nx + 1) * self.ny
    }
    /// Length of a velocity vector.
    pub fn len(&self) -> usize {
        self.n_u() + self.nx * (self.ny + 1)
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Number of interior corners (streamfunction unknowns).
    pub fn n_stream(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    #[inline]
    fn iu(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
    #[inline]
    fn iv(&self, i: usize, j: usize) -> usize {
        self.n_u() + j * self.nx + i
    }
    #[inline]
    fn is_corner(&self, i: usize, j: usize) -> usize {
        (j - 1) * (self.nx - 1) + (i - 1)
    }

    /// Centre of cell `c`.
    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let (i, j) = (c % self.nx, c / self.nx);
        [(i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h]
    }

    pub fn zero_velocity(&self) -> VelocityField {
        VelocityField { data: vec![0.0; self.len()] }
    }

    /// Samples a vector field at the face positions (wall-normal faces set to
    /// zero).
    pub fn sample_velocity<F: Fn(f64, f64) -> [f64; 2]>(&self, f: F) -> VelocityField {
        let mut u = self.zero_velocity();
        let h = self.h;
        for j in 0..self.ny {
            for i in 1..self.nx {
                u.data[self.iu(i, j)] = f(i as f64 * h, (j as f64 + 0.5) * h)[0];
            }
        }
        for j in 1..self.ny {
            for i in 0..self.nx {
                u.data[self.iv(i, j)] = f((i as f64 + 0.5) * h, j as f64 * h)[1];
            }
        }
        u
    }

    /// `(a, b) = ∫ a·b dx` (face-wise midpoint rule).
    pub fn inner(&self, a: &VelocityField, b: &VelocityField) -> f64 {
        self.h * self.h * dot(&a.data, &b.data)
    }

    pub fn norm_sq(&self, a: &VelocityField) -> f64 {
        self.inner(a, a)
    }

    /// Discrete divergence per cell.
    pub fn divergence(&self, u: &VelocityField) -> Vec<f64> {
        let mut d = vec![0.0; self.cells()];
        for j in 0..self.ny {
            for i in 0..self.nx {
                d[j * self.nx + i] = (u.data[self.iu(i + 1, j)] - u.data[self.iu(i, j)]
                    + u.data[self.iv(i, j + 1)]
                    - u.data[self.iv(i, j)])
                    / self.h;
            }
        }
        d
    }

    pub fn max_divergence(&self, u: &VelocityField) -> f64 {
        self.divergence(u).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Discrete gradient of a cell-centred scalar, zero on wall-normal faces.
    pub fn scalar_gradient(&self, p: &[f64]) -> VelocityField {
        let mut g = self.zero_velocity();
        for j in 0..self.ny {
            for i in 1..self.nx {
                g.data[self.iu(i, j)] = (p[j * self.nx + i] - p[j * self.nx + i - 1]) / self.h;
            }
        }
        for j in 1..self.ny {
            for i in 0..self.nx {
                g.data[self.iv(i, j)] = (p[j * self.nx + i] - p[(j - 1) * self.nx + i]) / self.h;
            }
        }
        g
    }

    /// Velocity `R s` of a streamfunction given on interior corners.
    pub fn curl(&self, s: &[f64], out: &mut [f64]) {
        let (nx, ny, h) = (self.nx, self.ny, self.h);
        let sv = |i: usize, j: usize| -> f64 {
            if i == 0 || j == 0 || i == nx || j == ny {
                0.0
            } else {
                s[self.is_corner(i, j)]
            }
        };
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..ny {
            for i in 1..nx {
                out[self.iu(i, j)] = (sv(i, j + 1) - sv(i, j)) / h;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                out[self.iv(i, j)] = -(sv(i + 1, j) - sv(i, j)) / h;
            }
        }
    }

    /// `Rᵀ w` (adjoint of [`curl`](Self::curl) in the Euclidean product).
    pub fn curl_transpose(&self, w: &[f64], out: &mut [f64]) {
        let (nx, ny, h) = (self.nx, self.ny, self.h);
        for j in 1..ny {
            for i in 1..nx {
                let du = w[self.iu(i, j - 1)] - w[self.iu(i, j)];
                let dv = w[self.iv(i, j)] - w[self.iv(i - 1, j)];
                out[self.is_corner(i, j)] = (du + dv) / h;
            }
        }
    }

    /// Velocity from a streamfunction sampled at the interior corners.
    pub fn from_streamfunction<F: Fn(f64, f64) -> f64>(&self, psi: F) -> VelocityField {
        let mut s = vec![0.0; self.n_stream()];
        for j in 1..self.ny {
            for i in 1..self.nx {
                s[self.is_corner(i, j)] = psi(i as f64 * self.h, j as f64 * self.h);
            }
        }
        let mut u = self.zero_velocity();
        self.curl(&s, &mut u.data);
        u
    }

    fn poisson_solver(&self) -> Result<TensorSolver> {
        let tx = dirichlet_1d(self.nx - 1);
        let ty = dirichlet_1d(self.ny - 1);
        TensorSolver::new(&tx, self.nx - 1, &ty, self.ny - 1)
    }

    /// L²-orthogonal projection onto discretely divergence-free fields.
    pub fn project_divergence_free(&self, w: &VelocityField) -> Result<VelocityField> {
        if w.data.len() != self.len() || w.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotFinite("projection input"));
        }
        let mut rhs = vec![0.0; self.n_stream()];
        self.curl_transpose(&w.data, &mut rhs);
        let mut s = rhs.clone();
        let h2 = self.h * self.h;
        self.poisson_solver()?.solve_with(&mut s, |l| l / h2);
        let mut check = vec![0.0; self.n_stream()];
        let mut v = self.zero_velocity();
        self.curl(&s, &mut v.data);
        self.curl_transpose(&v.data, &mut check);
        let res = check.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let scale = rhs.iter().map(|v| v * v).sum::<f64>();
        if libm::sqrt(res) > 1e-10 * libm::sqrt(scale).max(1e-300) {
            return Err(Error::Solver { what: "streamfunction Poisson solve", residual: libm::sqrt(res) });
        }
        Ok(v)
    }

    /// Velocity gradient components with their quadrature weights:
    /// `∂ₓu`, `∂ᵧv` at cells, then `∂ᵧu`, `∂ₓv` at corners. Tangential
    /// derivatives at walls use the reflected ghost value, and wall corners
    /// carry half weight.
    fn gradient_parts(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let (nx, ny, h) = (self.nx, self.ny, self.h);
        let mut ux = vec![0.0; nx * ny];
        let mut vy = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                ux[j * nx + i] = (u[self.iu(i + 1, j)] - u[self.iu(i, j)]) / h;
                vy[j * nx + i] = (u[self.iv(i, j + 1)] - u[self.iv(i, j)]) / h;
            }
        }
        let nc = (nx + 1) * (ny + 1);
        let mut uy = vec![0.0; nc];
        let mut vx = vec![0.0; nc];
        for j in 0..=ny {
            for i in 0..=nx {
                let c = j * (nx + 1) + i;
                if i > 0 && i < nx {
                    let above = if j < ny { u[self.iu(i, j)] } else { -u[self.iu(i, ny - 1)] };
                    let below = if j > 0 { u[self.iu(i, j - 1)] } else { -u[self.iu(i, 0)] };
                    uy[c] = (above - below) / h;
                }
                if j > 0 && j < ny {
                    let right = if i < nx { u[self.iv(i, j)] } else { -u[self.iv(nx - 1, j)] };
                    let left = if i > 0 { u[self.iv(i - 1, j)] } else { -u[self.iv(0, j)] };
                    vx[c] = (right - left) / h;
                }
            }
        }
        (ux, vy, uy, vx)
    }

    #[inline]
    fn corner_weight(&self, i: usize, j: usize, tangential_y: bool) -> f64 {
        let on_wall = if tangential_y { j == 0 || j == self.ny } else { i == 0 || i == self.nx };
        if on_wall {
            0.5
        } else {
            1.0
        }
    }

    /// `‖∇u‖² = ∫ |∇u|² dx`.
    pub fn grad_norm_sq(&self, u: &VelocityField) -> f64 {
        let (ux, vy, uy, vx) = self.gradient_parts(&u.data);
        let mut s: f64 = ux.iter().chain(&vy).map(|v| v * v).sum();
        for j in 0..=self.ny {
            for i in 0..=self.nx {
                let c = j * (self.nx + 1) + i;
                s += self.corner_weight(i, j, true) * uy[c] * uy[c];
                s += self.corner_weight(i, j, false) * vx[c] * vx[c];
            }
        }
        self.h * self.h * s
    }

    /// `A u` with `(A u, w) = (∇u, ∇w)`; in Euclidean form
    /// `h² uᵀ A w = (∇u, ∇w)`.
    pub fn viscous_apply(&self, u: &[f64], out: &mut [f64]) {
        let (nx, ny, h) = (self.nx, self.ny, self.h);
        let (ux, vy, uy, vx) = self.gradient_parts(u);
        out.iter_mut().for_each(|v| *v = 0.0);
        let inv = 1.0 / h;
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                if i + 1 < nx {
                    out[self.iu(i + 1, j)] += ux[c] * inv;
                }
                if i > 0 {
                    out[self.iu(i, j)] -= ux[c] * inv;
                }
                if j + 1 < ny {
                    out[self.iv(i, j + 1)] += vy[c] * inv;
                }
                if j > 0 {
                    out[self.iv(i, j)] -= vy[c] * inv;
                }
            }
        }
        for j in 0..=ny {
            for i in 0..=nx {
                let c = j * (nx + 1) + i;
                if i > 0 && i < nx {
                    let g = self.corner_weight(i, j, true) * uy[c] * inv;
                    if j < ny {
                        out[self.iu(i, j)] += g;
                    } else {
                        out[self.iu(i, ny - 1)] -= g;
                    }
                    if j > 0 {
                        out[self.iu(i, j - 1)] -= g;
                    } else {
                        out[self.iu(i, 0)] += g;
                    }
                }
                if j > 0 && j < ny {
                    let g = self.corner_weight(i, j, false) * vx[c] * inv;
                    if i < nx {
                        out[self.iv(i, j)] += g;
                    } else {
                        out[self.iv(nx - 1, j)] -= g;
                    }
                    if i > 0 {
                        out[self.iv(i - 1, j)] -= g;
                    } else {
                        out[self.iv(0, j)] += g;
                    }
                }
            }
        }
    }

    /// Cell-centred velocity gradient `σ_c = ∇u` (`σ[a][b] = ∂_b u_a`), with
    /// the off-diagonal entries averaged from the four surrounding corners.
    /// Its trace equals the discrete divergence.
    pub fn cell_gradient(&self, u: &VelocityField) -> Vec<Mat2> {
        let nx = self.nx;
        let (ux, vy, uy, vx) = self.gradient_parts(&u.data);
        (0..self.cells())
            .map(|c| {
                let (i, j) = (c % nx, c / nx);
                let k = |a: usize, b: usize| b * (nx + 1) + a;
                let corners = [k(i, j), k(i + 1, j), k(i, j + 1), k(i + 1, j + 1)];
                let uyc = 0.25 * corners.iter().map(|&q| uy[q]).sum::<f64>();
                let vxc = 0.25 * corners.iter().map(|&q| vx[q]).sum::<f64>();
                [[ux[c], uyc], [vxc, vy[c]]]
            })
            .collect()
    }

    /// Adjoint of [`cell_gradient`](Self::cell_gradient):
    /// `Σ_c m_c : σ_c(w) = wᵀ out` for all `w`.
    pub fn cell_gradient_transpose(&self, m: &[Mat2], out: &mut [f64]) {
        let (nx, ny, h) = (self.nx, self.ny, self.h);
        let nc = (nx + 1) * (ny + 1);
        let mut cy = vec![0.0; nc];
        let mut cx = vec![0.0; nc];
        out.iter_mut().for_each(|v| *v = 0.0);
        let inv = 1.0 / h;
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                let mc = m[c];
                if i + 1 < nx {
                    out[self.iu(i + 1, j)] += mc[0][0] * inv;
                }
                if i > 0 {
                    out[self.iu(i, j)] -= mc[0][0] * inv;
                }
                if j + 1 < ny {
                    out[self.iv(i, j + 1)] += mc[1][1] * inv;
                }
                if j > 0 {
                    out[self.iv(i, j)] -= mc[1][1] * inv;
                }
                for (a, b) in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
                    cy[b * (nx + 1) + a] += 0.25 * mc[0][1];
                    cx[b * (nx + 1) + a] += 0.25 * mc[1][0];
                }
            }
        }
        for j in 0..=ny {
            for i in 0..=nx {
                let c = j * (nx + 1) + i;
                if i > 0 && i < nx {
                    let g = cy[c] * inv;
                    if j < ny {
                        out[self.iu(i, j)] += g;
                    } else {
                        out[self.iu(i, ny - 1)] -= g;
                    }
                    if j > 0 {
                        out[self.iu(i, j - 1)] -= g;
                    } else {
                        out[self.iu(i, 0)] += g;
                    }
                }
                if j > 0 && j < ny {
                    let g = cx[c] * inv;
                    if i < nx {
                        out[self.iv(i, j)] += g;
                    } else {
                        out[self.iv(nx - 1, j)] -= g;
                    }
                    if i > 0 {
                        out[self.iv(i - 1, j)] -= g;
                    } else {
                        out[self.iv(0, j)] += g;
                    }
                }
            }
        }
    }

    /// Assembles and factors `Rᵀ K R` for a velocity operator `K` whose
    /// stencil reaches at most one face in each direction. The reduced matrix
    /// is recovered by probing with 25 colours and factored as a band matrix.
    pub fn factor_divergence_free<K>(&self, apply: K) -> Result<ReducedFactor>
    where
        K: Fn(&[f64], &mut [f64]),
    {
        let mut lu = self.reduced_matrix(&apply)?;
        lu.factor()?;
        Ok(ReducedFactor { lu })
    }

    /// Solves `Rᵀ K R s = Rᵀ b` for the streamfunction and returns `R s`,
    /// checking the reduced residual.
    pub fn solve_divergence_free<K>(&self, apply: K, rhs: &[f64]) -> Result<VelocityField>
    where
        K: Fn(&[f64], &mut [f64]),
    {
        let factor = self.factor_divergence_free(&apply)?;
        let u = factor.solve(self, rhs)?;
        let mut ku = vec![0.0; self.len()];
        apply(&u.data, &mut ku);
        let mut r = vec![0.0; self.n_stream()];
        self.curl_transpose(&ku, &mut r);
        let mut b = vec![0.0; self.n_stream()];
        self.curl_transpose(rhs, &mut b);
        let res = libm::sqrt(r.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>());
        let scale = libm::sqrt(b.iter().map(|v| v * v).sum::<f64>());
        if res > 1e-9 * scale && res > 1e-300 {
            return Err(Error::Solver { what: "divergence-free solve", residual: res / scale });
        }
        Ok(u)
    }

    fn reduced_matrix<K>(&self, apply: &K) -> Result<BandedMatrix>
    where
        K: Fn(&[f64], &mut [f64]),
    {
        let (mx, my) = (self.nx - 1, self.ny - 1);
        let n = mx * my;
        let bw = 2 * mx + 2;
        let mut mat = BandedMatrix::zeros(n, bw);
        let mut s = vec![0.0; n];
        let mut vel = vec![0.0; self.len()];
        let mut kv = vec![0.0; self.len()];
        let mut out = vec![0.0; n];
        for cy in 0..5 {
            for cx in 0..5 {
                s.iter_mut().for_each(|v| *v = 0.0);
                let mut any = false;
                for j in (cy..my).step_by(5) {
                    for i in (cx..mx).step_by(5) {
                        s[j * mx + i] = 1.0;
                        any = true;
                    }
                }
                if !any {
                    continue;
                }
                self.curl(&s, &mut vel);
                apply(&vel, &mut kv);
                self.curl_transpose(&kv, &mut out);
                for j in 0..my {
                    for i in 0..mx {
                        let v = out[j * mx + i];
                        if v == 0.0 {
                            continue;
                        }
                        // Unique probe column within reach 2.
                        let pi = nearest_in_class(i, cx, mx);
                        let pj = nearest_in_class(j, cy, my);
                        match (pi, pj) {
                            (Some(pi), Some(pj)) => mat.add(j * mx + i, pj * mx + pi, v)?,
                            _ => {
                                return Err(Error::Consistency(
                                    "operator stencil exceeds the probing reach".into(),
                                ))
                            }
                        }
                    }
                }
            }
        }
        Ok(mat)
    }

    /// Solves the discrete Helmholtz problem
    /// `(u⁰, v) + Δt (∇u⁰, ∇v) = (u₀, v)` over divergence-free `v`.
    pub fn smooth_initial_velocity(&self, u0: &VelocityField, dt: f64) -> Result<VelocityField> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("Δt = {dt} must be positive")));
        }
        let op = |x: &[f64], y: &mut [f64]| {
            self.viscous_apply(x, y);
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi = *xi + dt * *yi;
            }
        };
        self.solve_divergence_free(op, &u0.data)
    }

    /// Smallest eigenvalue of the discrete vector Laplacian `A` and the
    /// Poincaré constant `C_P = λ₁^{-1/2}`.
    pub fn poincare_constant(&self) -> Result<f64> {
        Ok(1.0 / libm::sqrt(self.laplacian_min_eigenvalue()?))
    }

    pub fn laplacian_min_eigenvalue(&self) -> Result<f64> {
        let h2 = self.h * self.h;
        let (dx, _) = symmetric_eigen(&dirichlet_1d(self.nx - 1), self.nx - 1)?;
        let (gy, _) = symmetric_eigen(&ghost_1d(self.ny), self.ny)?;
        let (dy, _) = symmetric_eigen(&dirichlet_1d(self.ny - 1), self.ny - 1)?;
        let (gx, _) = symmetric_eigen(&ghost_1d(self.nx), self.nx)?;
        let lu = (dx[0] + gy[0]) / h2;
        let lv = (gx[0] + dy[0]) / h2;
        let l = lu.min(lv);
        if !(l > 0.0) {
            return Err(Error::Solver { what: "Laplacian eigenvalue", residual: l });
        }
        Ok(l)
    }

    /// `‖f‖²_{-1} = sup_w (f, w)² / ‖∇w‖²` over zero-boundary fields, by one
    /// Dirichlet-Laplacian solve per component.
    pub fn dual_norm_sq(&self, f: &VelocityField) -> Result<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let h2 = self.h * self.h;
        let su = TensorSolver::new(&dirichlet_1d(nx - 1), nx - 1, &ghost_1d(ny), ny)?;
        let mut fu = vec![0.0; (nx - 1) * ny];
        for j in 0..ny {
            for i in 1..nx {
                fu[j * (nx - 1) + i - 1] = f.data[self.iu(i, j)];
            }
        }
        let mut xu = fu.clone();
        su.solve_with(&mut xu, |l| l / h2);
        let sv = TensorSolver::new(&ghost_1d(nx), nx, &dirichlet_1d(ny - 1), ny - 1)?;
        let mut fv = vec![0.0; nx * (ny - 1)];
        for j in 1..ny {
            for i in 0..nx {
                fv[(j - 1) * nx + i] = f.data[self.iv(i, j)];
            }
        }
        let mut xv = fv.clone();
        sv.solve_with(&mut xv, |l| l / h2);
        Ok(h2 * (dot(&fu, &xu) + dot(&fv, &xv)))
    }
}

/// Factored reduced operator `Rᵀ K R` on the streamfunction space.
#[derive(Debug, Clone)]
pub struct ReducedFactor {
    lu: BandedMatrix,
}

impl ReducedFactor {
    /// Returns `R s` with `Rᵀ K R s = Rᵀ rhs`.
    pub fn solve(&self, grid: &FlowGrid, rhs: &[f64]) -> Result<VelocityField> {
        let mut s = vec![0.0; grid.n_stream()];
        grid.curl_transpose(rhs, &mut s);
        self.lu.solve(&mut s);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotFinite("divergence-free solve"));
        }
        let mut u = grid.zero_velocity();
        grid.curl(&s, &mut u.data);
        Ok(u)
    }
}

fn nearest_in_class(i: usize, class: usize, n: usize) -> Option<usize> {
    let lo = i.saturating_sub(2);
    (lo..=(i + 2).min(n - 1)).find(|k| k % 5 == class)
}

/// `tridiag[−1, 2, −1]` with homogeneous Dirichlet ends.
fn dirichlet_1d(n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 2.0;
        if i + 1 < n {
            a[i * n + i + 1] = -1.0;
            a[(i + 1) * n + i] = -1.0;
        }
    }
    a
}

/// Same with reflected ghost values at both ends (wall half a cell away).
fn ghost_1d(n: usize) -> Vec<f64> {
    let mut a = dirichlet_1d(n);
    a[0] = 3.0;
    a[n * n - 1] = 3.0;
    a
}

/// Central advection `(a·∇)w` on the MAC grid together with its skew part
/// `N(a) = ½(Adv(a) − Adv(a)ᵀ)`, which satisfies `(N(a)w, w) = 0` exactly.
#[derive(Debug, Clone)]
pub struct Advection {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Advection {
    pub fn new(grid: &FlowGrid, a: &VelocityField) -> Self {
        let (nx, ny, h) = (grid.nx, grid.ny, grid.h);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); grid.len()];
        let c = 0.5 / h;
        let ad = &a.data;
        for j in 0..ny {
            for i in 1..nx {
                let r = grid.iu(i, j);
                let ax = ad[r];
                let ay = 0.25 * (ad[grid.iv(i - 1, j)] + ad[grid.iv(i, j)] + ad[grid.iv(i - 1, j + 1)] + ad[grid.iv(i, j + 1)]);
                let mut row = Vec::with_capacity(4);
                if i + 1 < nx {
                    row.push((grid.iu(i + 1, j), ax * c));
                }
                if i > 1 {
                    row.push((grid.iu(i - 1, j), -ax * c));
                }
                if j + 1 < ny {
                    row.push((grid.iu(i, j + 1), ay * c));
                } else {
                    row.push((r, -ay * c));
                }
                if j > 0 {
                    row.push((grid.iu(i, j - 1), -ay * c));
                } else {
                    row.push((r, ay * c));
                }
                rows[r] = row;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let r = grid.iv(i, j);
                let ay = ad[r];
                let ax = 0.25 * (ad[grid.iu(i, j - 1)] + ad[grid.iu(i + 1, j - 1)] + ad[grid.iu(i, j)] + ad[grid.iu(i + 1, j)]);
                let mut row = Vec::with_capacity(4);
                if j + 1 < ny {
                    row.push((grid.iv(i, j + 1), ay * c));
                }
                if j > 1 {
                    row.push((grid.iv(i, j - 1), -ay * c));
                }
                if i + 1 < nx {
                    row.push((grid.iv(i + 1, j), ax * c));
                } else {
                    row.push((r, -ax * c));
                }
                if i > 0 {
                    row.push((grid.iv(i - 1, j), -ax * c));
                } else {
                    row.push((r, ax * c));
                }
                rows[r] = row;
            }
        }
        Self { rows }
    }

    /// `y = Adv(a) w`.
    pub fn apply(&self, w: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(&self.rows) {
            *yi = row.iter().map(|&(k, c)| c * w[k]).sum();
        }
    }

    /// `y = N(a) w` (skew-symmetric part).
    pub fn apply_skew(&self, w: &[f64], y: &mut [f64]) {
        self.apply(w, y);
        for yi in y.iter_mut() {
            *yi *= 0.5;
        }
        for (r, row) in self.rows.iter().enumerate() {
            let wr = w[r];
            if wr == 0.0 {
                continue;
            }
            for &(k, c) in row {
                y[k] -= 0.5 * c * wr;
            }
        }
    }

    /// `∫ [(a·∇)w₁]·w₂` in skew-symmetric form.
    pub fn trilinear(&self, grid: &FlowGrid, w1: &VelocityField, w2: &VelocityField) -> f64 {
        let mut y = vec![0.0; grid.len()];
        self.apply_skew(&w1.data, &mut y);
        grid.h * grid.h * dot(&y, &w2.data)
    }
}

/// Convenience wrapper building the advection operator for `a`.
pub fn convection_trilinear(grid: &FlowGrid, a: &VelocityField, w1: &VelocityField, w2: &VelocityField) -> f64 {
    Advection::new(grid, a).trilinear(grid, w1, w2)
}

/// `1 / (π √2)`: Poincaré constant of the unit square.
pub const UNIT_SQUARE_POINCARE: f64 = 1.0 / (PI * core::f64::consts::SQRT_2);

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: &FlowGrid, rng: &mut ChaCha8Rng) -> VelocityField {
        let mut u = g.zero_velocity();
        let interior = g.sample_velocity(|_, _| [1.0, 1.0]);
        for (v, mask) in u.data.iter_mut().zip(&interior.data) {
            *v = mask * rng.random_range(-1.0..1.0);
        }
        u
    }

    fn random_solenoidal(g: &FlowGrid, rng: &mut ChaCha8Rng) -> VelocityField {
        let s: Vec<f64> = (0..g.n_stream()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut u = g.zero_velocity();
        g.curl(&s, &mut u.data);
        u
    }

    #[test]
    fn curl_is_divergence_free() {
        let g = FlowGrid::unit_square(12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_solenoidal(&g, &mut rng);
        assert!(g.max_divergence(&u) < 1e-12);
    }

    #[test]
    fn curl_transpose_is_adjoint() {
        let g = FlowGrid::new(7, 5, 1.4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<f64> = (0..g.n_stream()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = random_field(&g, &mut rng);
        let mut rs = vec![0.0; g.len()];
        g.curl(&s, &mut rs);
        let mut rtw = vec![0.0; g.n_stream()];
        g.curl_transpose(&w.data, &mut rtw);
        assert!((dot(&rs, &w.data) - dot(&s, &rtw)).abs() < 1e-11);
    }

    #[test]
    fn projection_properties() {
        let g = FlowGrid::unit_square(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_field(&g, &mut rng);
        let p = g.project_divergence_free(&w).unwrap();
        assert!(g.max_divergence(&p) <= 1e-10);
        let pp = g.project_divergence_free(&p).unwrap();
        assert!(pp.data.iter().zip(&p.data).all(|(a, b)| (a - b).abs() <= 1e-12));
        let phi: Vec<f64> = (0..g.cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grad = g.scalar_gradient(&phi);
        assert!(g.project_divergence_free(&grad).unwrap().max_abs() < 1e-11);
        // w − Pw is orthogonal to divergence-free fields.
        let v = random_solenoidal(&g, &mut rng);
        let diff = VelocityField { data: w.data.iter().zip(&p.data).map(|(a, b)| a - b).collect() };
        assert!(g.inner(&diff, &v).abs() < 1e-11);
    }

    #[test]
    fn viscous_operator_matches_gradient_norm() {
        let g = FlowGrid::new(6, 9, 2.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_field(&g, &mut rng);
        let w = random_field(&g, &mut rng);
        let mut au = vec![0.0; g.len()];
        g.viscous_apply(&u.data, &mut au);
        assert!((g.h() * g.h() * dot(&au, &u.data) - g.grad_norm_sq(&u)).abs() < 1e-10);
        let mut aw = vec![0.0; g.len()];
        g.viscous_apply(&w.data, &mut aw);
        assert!((dot(&au, &w.data) - dot(&aw, &u.data)).abs() < 1e-9);
    }

    #[test]
    fn cell_gradient_adjoint_and_trace() {
        let g = FlowGrid::unit_square(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_field(&g, &mut rng);
        let sig = g.cell_gradient(&u);
        let div = g.divergence(&u);
        for (s, d) in sig.iter().zip(&div) {
            assert!((s[0][0] + s[1][1] - d).abs() < 1e-12);
        }
        let m: Vec<Mat2> = (0..g.cells())
            .map(|_| [[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)], [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]])
            .collect();
        let lhs: f64 = sig.iter().zip(&m).map(|(s, m)| s[0][0] * m[0][0] + s[0][1] * m[0][1] + s[1][0] * m[1][0] + s[1][1] * m[1][1]).sum();
        let mut t = vec![0.0; g.len()];
        g.cell_gradient_transpose(&m, &mut t);
        assert!((lhs - dot(&t, &u.data)).abs() < 1e-10);
    }

    #[test]
    fn cell_gradient_of_linear_shear() {
        let g = FlowGrid::unit_square(10).unwrap();
        let u = g.sample_velocity(|_, y| [y, 0.0]);
        let sig = g.cell_gradient(&u);
        // Interior cells away from the walls see ∂ᵧu = 1.
        let c = 5 * 10 + 5;
        assert!((sig[c][0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn convection_is_skew() {
        let g = FlowGrid::unit_square(12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_solenoidal(&g, &mut rng);
        let w1 = random_field(&g, &mut rng);
        let w2 = random_field(&g, &mut rng);
        let adv = Advection::new(&g, &a);
        assert!(adv.trilinear(&g, &w1, &w1).abs() < 1e-12);
        assert!((adv.trilinear(&g, &w1, &w2) + adv.trilinear(&g, &w2, &w1)).abs() < 1e-12);
        assert_eq!(convection_trilinear(&g, &g.zero_velocity(), &w1, &w2), 0.0);
    }

    #[test]
    fn poincare_constant_unit_square() {
        let g = FlowGrid::unit_square(64).unwrap();
        let cp = g.poincare_constant().unwrap();
        assert!((cp / UNIT_SQUARE_POINCARE - 1.0).abs() < 0.01);
        let g2 = FlowGrid::new(64, 64, 2.0, 2.0).unwrap();
        assert!((g2.poincare_constant().unwrap() / cp - 2.0).abs() < 1e-12);
    }

    #[test]
    fn poincare_inequality_on_random_fields() {
        let g = FlowGrid::unit_square(12).unwrap();
        let cp = g.poincare_constant().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let w = random_field(&g, &mut rng);
            assert!(g.norm_sq(&w).sqrt() <= cp * g.grad_norm_sq(&w).sqrt() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn helmholtz_smoothing_energy_bound() {
        let g = FlowGrid::unit_square(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u0 = random_solenoidal(&g, &mut rng);
        let dt = 1e-2;
        let u = g.smooth_initial_velocity(&u0, dt).unwrap();
        assert!(g.max_divergence(&u) < 1e-10);
        assert!(g.norm_sq(&u) + dt * g.grad_norm_sq(&u) <= g.norm_sq(&u0) + 1e-8);
        assert_eq!(g.smooth_initial_velocity(&g.zero_velocity(), dt).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn helmholtz_smoothing_converges_as_dt_vanishes() {
        let g = FlowGrid::unit_square(16).unwrap();
        let u0 = g.from_streamfunction(|x, y| (libm::sin(PI * x) * libm::sin(PI * y)).powi(2));
        let mut prev = f64::INFINITY;
        for dt in [1e-2, 1e-3, 1e-4] {
            let u = g.smooth_initial_velocity(&u0, dt).unwrap();
            let d = VelocityField { data: u.data.iter().zip(&u0.data).map(|(a, b)| a - b).collect() };
            let e = g.norm_sq(&d).sqrt();
            assert!(e < prev);
            prev = e;
        }
        assert!(prev < 1e-2 * g.norm_sq(&u0).sqrt());
    }

    #[test]
    fn dual_norm_is_consistent_with_laplacian() {
        let g = FlowGrid::unit_square(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = random_field(&g, &mut rng);
        // f = A w has ‖f‖²_{-1} = ‖∇w‖².
        let mut f = g.zero_velocity();
        g.viscous_apply(&w.data, &mut f.data);
        let d = g.dual_norm_sq(&f).unwrap();
        assert!((d - g.grad_norm_sq(&w)).abs() < 1e-9 * d);
    }

    #[test]
    fn uniform_spacing_required() {
        assert!(FlowGrid::new(4, 4, 1.0, 2.0).is_err());
    }
}
