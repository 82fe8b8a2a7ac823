//! Implicit-Euler coupled step for the velocity and the weighted polymer
//! density, linked through a fixed-point iteration with a δ-regularized
//! cut-off in the drag term.
//!
//! The Fokker–Planck solve is carried out in the eigenbasis of the weighted
//! q-Dirichlet form, where it decouples into one `n_cells x n_cells` system
//! per configuration mode. Those systems are independent and are solved in
//! parallel when the `parallel` feature is on; each one is deterministic, so
//! results do not depend on the thread count.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::config_space::{ConfigGrid, ConfigOperators, Mat2, WeightedField};
use crate::diagnostics;
use crate::flow::{Advection, FlowGrid, VelocityField};
use crate::kinetic::{cutoff_beta, cutoff_beta_delta, CutoffParams, RouseMatrix};
use crate::linalg::{gmres, TensorSolver};
use crate::{Error, Result};

/// Body force `f(x, y, t)`.
pub type Forcing = Box<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>;

/// Physical coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physics {
    /// Kinematic viscosity ν.
    pub nu: f64,
    /// Polymer stress coupling k.
    pub k: f64,
    /// Relaxation time λ (Deborah number).
    pub lambda: f64,
    /// Centre-of-mass diffusion ε.
    pub epsilon: f64,
}

impl Physics {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("ν", self.nu), ("k", self.k), ("λ", self.lambda), ("ε", self.epsilon)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// Time-stepping controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub dt: f64,
    pub cutoff: CutoffParams,
    /// Relative tolerance of the fixed-point increments.
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    /// Relative tolerance of the per-mode Krylov solves.
    pub linear_rtol: f64,
    /// Clip negative values and restore the local mass after each step.
    pub clip_renormalize: bool,
}

impl StepParams {
    pub fn new(dt: f64, cutoff: CutoffParams) -> Self {
        Self {
            dt,
            cutoff,
            fixed_point_tol: 1e-10,
            fixed_point_max_iter: 50,
            linear_rtol: 1e-12,
            clip_renormalize: false,
        }
    }
}

/// `Δt = C0 / (L log L)`, reduced so that `T / Δt` is an integer.
/// Returns `(Δt, N)`.
pub fn dt_schedule(l: f64, c0: f64, t_final: f64, dt_floor: f64) -> Result<(f64, usize)> {
    if !(l > core::f64::consts::E) {
        return Err(Error::InvalidParameter(format!("L = {l} must exceed e so that log L > 1")));
    }
    if !(c0 > 0.0) || !(t_final > 0.0) {
        return Err(Error::InvalidParameter("C0 and T must be positive".into()));
    }
    let raw = c0 / (l * libm::log(l));
    let n = libm::ceil(t_final / raw - 1e-12).max(1.0) as usize;
    let dt = t_final / n as f64;
    if dt < dt_floor {
        return Err(Error::InvalidParameter(format!("Δt = {dt} falls below the floor {dt_floor}")));
    }
    Ok((dt, n))
}

/// Coupled snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub u: VelocityField,
    pub psi: WeightedField,
    pub t: f64,
    pub n: usize,
}

/// Outcome of the fixed-point loop of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointReport {
    pub iterations: usize,
    pub increment_u: f64,
    pub increment_psi: f64,
    pub converged: bool,
    /// Largest number of Krylov iterations used by any mode.
    pub max_linear_iterations: usize,
}

/// Contract quantities of the initial-density smoothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingReport {
    pub entropy_before: f64,
    pub entropy_after: f64,
    /// `Δt (Fisher_x + Fisher_q)(ψ̂⁰) = 4Δt ∫ M |∇√ψ̂⁰|²`.
    pub fisher_term: f64,
    pub min_value: f64,
    pub max_density: f64,
}

impl SmoothingReport {
    /// `∫M F(ψ̂₀) − ∫M F(ψ̂⁰)`.
    pub fn entropy_slack(&self) -> f64 {
        self.entropy_before - self.entropy_after
    }
    /// `∫M F(ψ̂₀) − 4Δt ∫ M |∇√ψ̂⁰|²`.
    pub fn fisher_slack(&self) -> f64 {
        self.entropy_before - self.fisher_term
    }
}

/// Discretization of the coupled problem: grids, operators and coefficients.
pub struct CoupledSolver {
    flow: FlowGrid,
    config: ConfigGrid,
    ops: ConfigOperators,
    physics: Physics,
    params: StepParams,
    rouse: RouseMatrix,
    forcing: Option<Forcing>,
    neumann: TensorSolver,
}

impl core::fmt::Debug for CoupledSolver {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CoupledSolver")
            .field("flow", &self.flow)
            .field("physics", &self.physics)
            .field("params", &self.params)
            .field("forced", &self.forcing.is_some())
            .finish()
    }
}

/// Path-graph Laplacian with Neumann ends.
fn neumann_1d(n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        if i + 1 < n {
            a[i * n + i] += 1.0;
            a[(i + 1) * n + i + 1] += 1.0;
            a[i * n + i + 1] = -1.0;
            a[(i + 1) * n + i] = -1.0;
        }
    }
    a
}

/// Skew-symmetric central-flux transport of cell values by face velocities.
struct Transport {
    // (cell, neighbour, coefficient) with y_c += coef * x_nb.
    entries: Vec<(usize, usize, f64)>,
}

impl Transport {
    fn new(grid: &FlowGrid, u: &VelocityField) -> Self {
        let (nx, ny, h) = (grid.nx(), grid.ny(), grid.h());
        let d = &u.data;
        let mut entries = Vec::new();
        let nu = grid.n_u();
        for j in 0..ny {
            for i in 1..nx {
                let f = d[j * (nx + 1) + i] / (2.0 * h);
                if f != 0.0 {
                    let (l, r) = (j * nx + i - 1, j * nx + i);
                    entries.push((l, r, f));
                    entries.push((r, l, -f));
                }
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let f = d[nu + j * nx + i] / (2.0 * h);
                if f != 0.0 {
                    let (b, t) = ((j - 1) * nx + i, j * nx + i);
                    entries.push((b, t, f));
                    entries.push((t, b, -f));
                }
            }
        }
        Self { entries }
    }

    fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    fn apply_add(&self, x: &[f64], y: &mut [f64], scale: f64) {
        for &(c, nb, f) in &self.entries {
            y[c] += scale * f * x[nb];
        }
    }
}

fn graph_laplacian_apply(nx: usize, ny: usize, x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            if i + 1 < nx {
                let d = x[c] - x[c + 1];
                y[c] += d;
                y[c + 1] -= d;
            }
            if j + 1 < ny {
                let d = x[c] - x[c + nx];
                y[c] += d;
                y[c + nx] -= d;
            }
        }
    }
}

#[cfg(feature = "parallel")]
fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

impl CoupledSolver {
    pub fn new(
        flow: FlowGrid,
        config: ConfigGrid,
        rouse: RouseMatrix,
        physics: Physics,
        params: StepParams,
        forcing: Option<Forcing>,
    ) -> Result<Self> {
        physics.validate()?;
        if !(params.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("Δt = {} must be positive", params.dt)));
        }
        let ops = ConfigOperators::new(&config, &rouse, physics.lambda, physics.epsilon)?;
        let (nx, ny) = (flow.nx(), flow.ny());
        let neumann = TensorSolver::new(&neumann_1d(nx), nx, &neumann_1d(ny), ny)?;
        Ok(Self { flow, config, ops, physics, params, rouse, forcing, neumann })
    }

    pub fn flow(&self) -> &FlowGrid {
        &self.flow
    }
    pub fn config(&self) -> &ConfigGrid {
        &self.config
    }
    pub fn physics(&self) -> &Physics {
        &self.physics
    }
    pub fn params(&self) -> &StepParams {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut StepParams {
        &mut self.params
    }
    pub fn rouse(&self) -> &RouseMatrix {
        &self.rouse
    }
    pub fn operators(&self) -> &ConfigOperators {
        &self.ops
    }
    pub fn is_forced(&self) -> bool {
        self.forcing.is_some()
    }

    /// Time-averaged forcing `fⁿ` on `(t0, t0 + Δt)` by the midpoint rule.
    pub fn forcing_at(&self, t0: f64) -> VelocityField {
        match &self.forcing {
            None => self.flow.zero_velocity(),
            Some(f) => {
                let tm = t0 + 0.5 * self.params.dt;
                self.flow.sample_velocity(|x, y| f(x, y, tm))
            }
        }
    }

    /// Per-cell stress moments `C(Mψ̂)`.
    pub fn stress_moments(&self, psi: &WeightedField) -> Vec<Mat2> {
        map_indexed(self.flow.cells(), |c| self.config.stress_moment(psi.cell(c)))
    }

    /// Momentum step: `(u − uⁿ⁻¹)/Δt + N(uⁿ⁻¹)u + νAu = fⁿ − k ∇ᵀC(Mψ̂)` in
    /// the divergence-free space. `rhs_only` reuses a factorization.
    pub fn momentum_step(&self, u_old: &VelocityField, psi: &WeightedField, f: &VelocityField) -> Result<VelocityField> {
        let factor = self.momentum_factor(u_old)?;
        self.momentum_solve(&factor, u_old, psi, f)
    }

    fn momentum_operator<'a>(&'a self, adv: &'a Advection) -> impl Fn(&[f64], &mut [f64]) + 'a {
        let dt = self.params.dt;
        let nu = self.physics.nu;
        let n = self.flow.len();
        move |x: &[f64], y: &mut [f64]| {
            self.flow.viscous_apply(x, y);
            let mut t = vec![0.0; n];
            adv.apply_skew(x, &mut t);
            for i in 0..n {
                y[i] = x[i] / dt + nu * y[i] + t[i];
            }
        }
    }

    fn momentum_factor(&self, u_old: &VelocityField) -> Result<MomentumFactor> {
        let adv = Advection::new(&self.flow, u_old);
        let lu = self.flow.factor_divergence_free(self.momentum_operator(&adv))?;
        Ok(MomentumFactor { lu, adv })
    }

    fn momentum_rhs(&self, u_old: &VelocityField, psi: &WeightedField, f: &VelocityField) -> Vec<f64> {
        let n = self.flow.len();
        let c = self.stress_moments(psi);
        let mut st = vec![0.0; n];
        self.flow.cell_gradient_transpose(&c, &mut st);
        let dt = self.params.dt;
        let k = self.physics.k;
        (0..n).map(|i| u_old.data[i] / dt + f.data[i] - k * st[i]).collect()
    }

    fn momentum_solve(&self, factor: &MomentumFactor, u_old: &VelocityField, psi: &WeightedField, f: &VelocityField) -> Result<VelocityField> {
        let rhs = self.momentum_rhs(u_old, psi, f);
        factor.lu.solve(&self.flow, &rhs)
    }

    /// Residual of the momentum equation tested against divergence-free
    /// fields (Euclidean norm of `Rᵀ(K u − b)`), for diagnostics.
    pub fn momentum_residual(&self, u: &VelocityField, u_old: &VelocityField, psi: &WeightedField, f: &VelocityField) -> f64 {
        let adv = Advection::new(&self.flow, u_old);
        let op = self.momentum_operator(&adv);
        let mut ku = vec![0.0; self.flow.len()];
        op(&u.data, &mut ku);
        let rhs = self.momentum_rhs(u_old, psi, f);
        let diff: Vec<f64> = ku.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let mut r = vec![0.0; self.flow.n_stream()];
        self.flow.curl_transpose(&diff, &mut r);
        libm::sqrt(r.iter().map(|v| v * v).sum::<f64>())
    }

    /// Fokker–Planck step: for every configuration mode `k`,
    /// `[(1 + Δt a λ_k) I + (Δt ε / h²) L + Δt T(uⁿ⁻¹)] c_k
    ///   = V_kᵀ (W ψ̂ⁿ⁻¹ + Δt Gᵀ W (σ(u) q β^L_δ(ψ̂_lin)))`,
    /// with `a = A₁₁/(2λ)`, `L` the Neumann cell-graph Laplacian and `T` the
    /// skew transport. Returns the new field and the largest Krylov count.
    pub fn fokker_planck_step(
        &self,
        psi_old: &WeightedField,
        u_candidate: &VelocityField,
        u_old: &VelocityField,
        psi_lin: &WeightedField,
    ) -> Result<(WeightedField, usize)> {
        let cells = self.flow.cells();
        let nq = self.config.len();
        let dt = self.params.dt;
        let CutoffParams { l, delta } = self.params.cutoff;
        let sigma = self.flow.cell_gradient(u_candidate);
        let basis = &self.ops.basis;

        // Weak right-hand sides in modal coordinates, cell-major.
        let rhs_cells: Vec<Vec<f64>> = map_indexed(cells, |c| {
            let old = psi_old.cell(c);
            let lin = psi_lin.cell(c);
            let mut g: Vec<f64> = (0..nq).map(|i| self.config.weight(i) * old[i]).collect();
            let s = sigma[c];
            if s.iter().flatten().any(|v| *v != 0.0) {
                let beta: Vec<f64> = lin.iter().map(|&p| cutoff_beta_delta(p, l, delta)).collect();
                self.config.drag_accumulate(s, &beta, dt, &mut g);
            }
            let mut out = vec![0.0; nq];
            basis.forward(&g, &mut out);
            out
        });
        let transport = Transport::new(&self.flow, u_old);
        let guess_cells: Vec<Vec<f64>> = if transport.is_zero() {
            Vec::new()
        } else {
            map_indexed(cells, |c| {
                let lin = psi_lin.cell(c);
                let g: Vec<f64> = (0..nq).map(|i| self.config.weight(i) * lin[i]).collect();
                let mut out = vec![0.0; nq];
                basis.forward(&g, &mut out);
                out
            })
        };
        let (nx, ny) = (self.flow.nx(), self.flow.ny());
        let h = self.flow.h();
        let beta_x = dt * self.physics.epsilon / (h * h);
        let a = self.ops.q_diffusion;
        let rtol = self.params.linear_rtol;

        let solved: Vec<Result<(Vec<f64>, usize)>> = map_indexed(nq, |k| {
            let alpha = 1.0 + dt * a * basis.eigenvalues()[k];
            let b: Vec<f64> = (0..cells).map(|c| rhs_cells[c][k]).collect();
            let symbol = |lam: f64| alpha + beta_x * lam;
            if transport.is_zero() {
                let mut x = b;
                self.neumann.solve_with(&mut x, symbol);
                return Ok((x, 0));
            }
            let mut x: Vec<f64> = (0..cells).map(|c| guess_cells[c][k]).collect();
            let apply = |v: &[f64], y: &mut [f64]| {
                graph_laplacian_apply(nx, ny, v, y);
                for i in 0..v.len() {
                    y[i] = alpha * v[i] + beta_x * y[i];
                }
                transport.apply_add(v, y, dt);
            };
            let precondition = |v: &[f64], y: &mut [f64]| {
                y.copy_from_slice(v);
                self.neumann.solve_with(y, symbol);
            };
            let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let atol = 1e-15 * scale.max(1e-300) * libm::sqrt(cells as f64);
            let rep = gmres(apply, precondition, &b, &mut x, rtol, atol, 30, 3000)?;
            Ok((x, rep.iterations))
        });
        let mut modal = Vec::with_capacity(nq);
        let mut max_iters = 0;
        for r in solved {
            let (x, it) = r?;
            max_iters = max_iters.max(it);
            modal.push(x);
        }
        let values: Vec<Vec<f64>> = map_indexed(cells, |c| {
            let coef: Vec<f64> = (0..nq).map(|k| modal[k][c]).collect();
            let mut out = vec![0.0; nq];
            basis.inverse(&coef, &mut out);
            out
        });
        let mut data = Vec::with_capacity(cells * nq);
        for v in values {
            data.extend_from_slice(&v);
        }
        let field = WeightedField::from_vec(cells, nq, data)?;
        if !field.is_finite() {
            return Err(Error::NotFinite("Fokker–Planck step"));
        }
        Ok((field, max_iters))
    }

    /// One coupled step `(uⁿ⁻¹, ψ̂ⁿ⁻¹) ↦ (uⁿ, ψ̂ⁿ)` by fixed-point iteration of
    /// `ψ̂ ↦ u*(ψ̂) ↦ ψ̂*(u*, β^L_δ(ψ̂))`.
    pub fn coupled_step(&self, state: &SystemState) -> Result<(SystemState, FixedPointReport)> {
        let f = self.forcing_at(state.t);
        let factor = self.momentum_factor(&state.u)?;
        let tol = self.params.fixed_point_tol;
        let mut psi_iter = state.psi.clone();
        let mut u_prev = state.u.clone();
        let mut report = FixedPointReport {
            iterations: 0,
            increment_u: f64::INFINITY,
            increment_psi: f64::INFINITY,
            converged: false,
            max_linear_iterations: 0,
        };
        for it in 1..=self.params.fixed_point_max_iter {
            let u_star = self.momentum_solve(&factor, &state.u, &psi_iter, &f)?;
            let (psi_star, lin) = self.fokker_planck_step(&state.psi, &u_star, &state.u, &psi_iter)?;
            let du = {
                let d = VelocityField { data: u_star.data.iter().zip(&u_prev.data).map(|(a, b)| a - b).collect() };
                libm::sqrt(self.flow.norm_sq(&d))
            };
            let dpsi = libm::sqrt(self.weighted_l2_sq_diff(&psi_star, &psi_iter));
            let scale = libm::sqrt(self.flow.norm_sq(&u_star))
                .max(libm::sqrt(self.weighted_l2_sq_diff(&psi_star, &WeightedField::constant(psi_star.cells(), psi_star.nodes(), 0.0))))
                .max(1e-300);
            report.iterations = it;
            report.increment_u = du / scale;
            report.increment_psi = dpsi / scale;
            report.max_linear_iterations = report.max_linear_iterations.max(lin);
            psi_iter = psi_star;
            u_prev = u_star;
            if report.increment_u <= tol && report.increment_psi <= tol {
                report.converged = true;
                break;
            }
        }
        if !report.converged {
            return Err(Error::FixedPoint {
                iterations: report.iterations,
                increment_u: report.increment_u,
                increment_psi: report.increment_psi,
            });
        }
        if self.params.clip_renormalize {
            self.clip_renormalize(&mut psi_iter);
        }
        Ok((SystemState { u: u_prev, psi: psi_iter, t: state.t + self.params.dt, n: state.n + 1 }, report))
    }

    fn clip_renormalize(&self, psi: &mut WeightedField) {
        for c in 0..psi.cells() {
            let before = self.config.weighted_integral(psi.cell(c));
            let cell = psi.cell_mut(c);
            cell.iter_mut().for_each(|v| *v = v.max(0.0));
            let after = self.config.weighted_integral(cell);
            if after > 0.0 {
                let s = before / after;
                cell.iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    /// `‖a − b‖²_{L²_M(Ω×D)}`.
    pub fn weighted_l2_sq_diff(&self, a: &WeightedField, b: &WeightedField) -> f64 {
        let h2 = self.flow.h() * self.flow.h();
        let nq = self.config.len();
        let mut total = 0.0;
        for c in 0..a.cells() {
            let (x, y) = (a.cell(c), b.cell(c));
            for i in 0..nq {
                let d = x[i] - y[i];
                total += self.config.weight(i) * d * d;
            }
        }
        h2 * total
    }

    /// One implicit step of the unit-coefficient weighted heat flow in
    /// `(x, q)` started from `β^Λ(ψ̂₀)`, with its contract quantities.
    pub fn smooth_initial_density(&self, psi0: &WeightedField, dt: f64, big_lambda: f64) -> Result<(WeightedField, SmoothingReport)> {
        if psi0.min() < -1e-12 {
            return Err(Error::Negative { min: psi0.min(), floor: -1e-12 });
        }
        let cells = self.flow.cells();
        let nq = self.config.len();
        let h = self.flow.h();
        let basis = &self.ops.basis;
        let rhs: Vec<Vec<f64>> = map_indexed(cells, |c| {
            let g: Vec<f64> = psi0.cell(c).iter().enumerate().map(|(i, &p)| self.config.weight(i) * cutoff_beta(p, big_lambda)).collect();
            let mut out = vec![0.0; nq];
            basis.forward(&g, &mut out);
            out
        });
        let bx = dt / (h * h);
        let modal: Vec<Vec<f64>> = map_indexed(nq, |k| {
            let alpha = 1.0 + dt * basis.eigenvalues()[k];
            let mut x: Vec<f64> = (0..cells).map(|c| rhs[c][k]).collect();
            self.neumann.solve_with(&mut x, |lam| alpha + bx * lam);
            x
        });
        let mut data = Vec::with_capacity(cells * nq);
        for c in 0..cells {
            let coef: Vec<f64> = (0..nq).map(|k| modal[k][c]).collect();
            let mut out = vec![0.0; nq];
            basis.inverse(&coef, &mut out);
            data.extend_from_slice(&out);
        }
        let psi = WeightedField::from_vec(cells, nq, data)?;
        let tol = 1e-10;
        let entropy_before = diagnostics::relative_entropy(&self.flow, &self.config, psi0, tol)?;
        let entropy_after = diagnostics::relative_entropy(&self.flow, &self.config, &psi, tol)?;
        let fisher_term = dt
            * (diagnostics::fisher_x(&self.flow, &self.config, &psi, tol)?
                + diagnostics::fisher_q(&self.flow, &self.config, &psi, tol)?);
        let density = diagnostics::density(&self.config, &psi);
        let max_density = density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let report = SmoothingReport { entropy_before, entropy_after, fisher_term, min_value: psi.min(), max_density };
        if report.min_value < -tol || max_density > 1.0 + 1e-8 {
            return Err(Error::Consistency(format!(
                "smoothed density left the admissible set (min {}, max density {})",
                report.min_value, max_density
            )));
        }
        if report.entropy_slack() < -1e-8 || report.fisher_slack() < -1e-8 {
            return Err(Error::Consistency(format!(
                "initial smoothing contract violated (entropy slack {}, Fisher slack {})",
                report.entropy_slack(),
                report.fisher_slack()
            )));
        }
        Ok((psi, report))
    }
}

struct MomentumFactor {
    lu: crate::flow::ReducedFactor,
    #[allow(dead_code)]
    adv: Advection,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::ChainGeometry;

    fn solver(n: usize, nq: usize, dt: f64, forcing: Option<Forcing>) -> CoupledSolver {
        let flow = FlowGrid::unit_square(n).unwrap();
        let config = ConfigGrid::new(&ChainGeometry::dumbbell(2, 4.0).unwrap(), nq, nq).unwrap();
        let physics = Physics { nu: 1.0, k: 1.0, lambda: 0.5, epsilon: 0.1 };
        let params = StepParams::new(dt, CutoffParams::new(100.0, 1e-4).unwrap());
        CoupledSolver::new(flow, config, RouseMatrix::default_for(1), physics, params, forcing).unwrap()
    }

    fn perturbed(s: &CoupledSolver, amp: f64) -> WeightedField {
        let cells = s.flow().cells();
        let rb = libm::sqrt(s.config().b());
        let cell_field = s.config().sample(|q| 1.0 + amp * q[0] / rb);
        let mut data = Vec::new();
        for c in 0..cells {
            let x = s.flow().cell_center(c);
            let m = libm::sin(core::f64::consts::PI * x[0]);
            data.extend(cell_field.iter().map(|v| 1.0 + m * (v - 1.0)));
        }
        WeightedField::from_vec(cells, s.config().len(), data).unwrap()
    }

    #[test]
    fn dt_schedule_examples() {
        let e2 = core::f64::consts::E * core::f64::consts::E;
        let (dt, n) = dt_schedule(e2, 2.0 * e2, 3.0, 1e-9).unwrap();
        assert!((dt - 1.0).abs() < 1e-12 && n == 3);
        let (dt, _) = dt_schedule(100.0, 1.0, 2.1715e-3 * 1000.0, 1e-9).unwrap();
        assert!(dt <= 1.0 / (100.0 * libm::log(100.0)) * (1.0 + 1e-12));
        assert!(dt_schedule(2.0, 1.0, 1.0, 0.0).is_err());
        assert!(dt_schedule(1e6, 1.0, 1.0, 1e-3).is_err());
        let (a, _) = dt_schedule(10.0, 1.0, 1.0, 0.0).unwrap();
        let (b, _) = dt_schedule(20.0, 1.0, 1.0, 0.0).unwrap();
        assert!(b < a);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let s = solver(6, 8, 0.05, None);
        let st = SystemState {
            u: s.flow().zero_velocity(),
            psi: WeightedField::constant(s.flow().cells(), s.config().len(), 1.0),
            t: 0.0,
            n: 0,
        };
        let (next, rep) = s.coupled_step(&st).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.increment_u <= 1e-12 && rep.increment_psi <= 1e-12);
        assert!(next.u.max_abs() <= 1e-12);
        assert!(next.psi.as_slice().iter().all(|v| (v - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn density_obeys_the_discrete_advection_diffusion_equation() {
        let s = solver(8, 8, 0.02, None);
        let u_old = s.flow().from_streamfunction(|x, y| 0.3 * (libm::sin(3.0 * x) * libm::sin(2.0 * y)).powi(2) * x * y * (1.0 - x) * (1.0 - y));
        let psi_old = perturbed(&s, 0.3);
        let (psi, _) = s.fokker_planck_step(&psi_old, &u_old, &u_old, &psi_old).unwrap();
        let rho_old = diagnostics::density(s.config(), &psi_old);
        let rho = diagnostics::density(s.config(), &psi);
        // (ρ − ρ_old) + Δt ε L ρ / h² + Δt T ρ = 0
        let (nx, ny) = (s.flow().nx(), s.flow().ny());
        let mut lr = vec![0.0; rho.len()];
        graph_laplacian_apply(nx, ny, &rho, &mut lr);
        let h = s.flow().h();
        let dt = s.params().dt;
        let tr = Transport::new(s.flow(), &u_old);
        let mut res: Vec<f64> = (0..rho.len()).map(|c| rho[c] - rho_old[c] + dt * 0.1 / (h * h) * lr[c]).collect();
        tr.apply_add(&rho, &mut res, dt);
        assert!(res.iter().all(|r| r.abs() <= 1e-10), "{:?}", res.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn drag_preserves_local_mass() {
        let s = solver(6, 12, 0.02, None);
        let psi1 = WeightedField::constant(s.flow().cells(), s.config().len(), 1.0);
        let shear = s.flow().from_streamfunction(|x, y| 0.05 * (x * (1.0 - x) * y * (1.0 - y)));
        let zero = s.flow().zero_velocity();
        let (psi, _) = s.fokker_planck_step(&psi1, &shear, &zero, &psi1).unwrap();
        for rho in diagnostics::density(s.config(), &psi) {
            assert!((rho - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn momentum_energy_identity() {
        let s = solver(8, 8, 0.05, None);
        let u_old = s.flow().from_streamfunction(|x, y| (x * (1.0 - x) * y * (1.0 - y)).powi(2) * 20.0);
        let psi = perturbed(&s, 0.5);
        let f = s.flow().zero_velocity();
        let u = s.momentum_step(&u_old, &psi, &f).unwrap();
        let g = s.flow();
        let dt = s.params().dt;
        let diff = VelocityField { data: u.data.iter().zip(&u_old.data).map(|(a, b)| a - b).collect() };
        let c = s.stress_moments(&psi);
        let sig = g.cell_gradient(&u);
        let work: f64 = g.h() * g.h() * c.iter().zip(&sig).map(|(c, s)| c[0][0] * s[0][0] + c[0][1] * s[0][1] + c[1][0] * s[1][0] + c[1][1] * s[1][1]).sum::<f64>();
        let lhs = g.norm_sq(&u) + g.norm_sq(&diff) + 2.0 * dt * s.physics().nu * g.grad_norm_sq(&u);
        let rhs = g.norm_sq(&u_old) - 2.0 * dt * s.physics().k * work;
        assert!((lhs - rhs).abs() <= 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn momentum_rest_state_and_stress_linearity() {
        let s = solver(6, 8, 0.05, None);
        let g = s.flow();
        let psi1 = WeightedField::constant(g.cells(), s.config().len(), 1.0);
        let zero = g.zero_velocity();
        let u = s.momentum_step(&zero, &psi1, &zero).unwrap();
        assert!(u.max_abs() < 1e-6 * 1e-3);
        let psi = perturbed(&s, 0.4);
        let r1 = s.momentum_residual(&zero, &zero, &psi, &zero);
        let mut s2 = solver(6, 8, 0.05, None);
        s2.physics.k = 2.0;
        let r2 = s2.momentum_residual(&zero, &zero, &psi, &zero);
        assert!((r2 / r1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn perturbation_lowers_free_energy() {
        let s = solver(6, 10, 0.02, None);
        let psi = perturbed(&s, 0.1);
        let st = SystemState { u: s.flow().zero_velocity(), psi, t: 0.0, n: 0 };
        let fe = |st: &SystemState| diagnostics::free_energy(s.flow(), s.config(), st, 1.0, 1e-10).unwrap();
        let (next, rep) = s.coupled_step(&st).unwrap();
        assert!(rep.converged);
        assert!(fe(&next) < fe(&st));
    }

    #[test]
    fn smoothing_contract() {
        let s = solver(6, 10, 0.02, None);
        let ones = WeightedField::constant(s.flow().cells(), s.config().len(), 1.0);
        let (p, _) = s.smooth_initial_density(&ones, 0.02, 100.0).unwrap();
        assert!(p.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let psi0 = perturbed(&s, 0.1);
        let (_, rep) = s.smooth_initial_density(&psi0, 0.02, 100.0).unwrap();
        assert!(rep.entropy_slack() >= -1e-8);
        assert!(rep.fisher_slack() >= -1e-8);
    }
}
