//! Entropy functionals, the energy ledger and the inequality checks that
//! accompany a coupled run.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::config_space::{ConfigGrid, WeightedField};
use crate::flow::{FlowGrid, VelocityField};
use crate::kinetic::entropy_f;
use crate::stepper::SystemState;
use crate::{Error, Result};

fn clamp_node(v: f64, tol: f64) -> Result<f64> {
    if v < -tol || v.is_nan() {
        return Err(Error::Negative { min: v, floor: -tol });
    }
    Ok(v.max(0.0))
}

/// Configuration mass `ρ(x) = ∫ M ψ̂(x, q) dq` per flow cell.
pub fn density(config: &ConfigGrid, psi: &WeightedField) -> Vec<f64> {
    (0..psi.cells()).map(|c| config.weighted_integral(psi.cell(c))).collect()
}

/// `∫_{Ω×D} M F(ψ̂)`; node values in `(−tol, 0]` count as zero.
pub fn relative_entropy(flow: &FlowGrid, config: &ConfigGrid, psi: &WeightedField, tol: f64) -> Result<f64> {
    let nq = config.len();
    let mut total = 0.0;
    for c in 0..psi.cells() {
        let cell = psi.cell(c);
        for i in 0..nq {
            total += config.weight(i) * entropy_f(clamp_node(cell[i], tol)?);
        }
    }
    Ok(flow.h() * flow.h() * total)
}

fn sqrt_field(psi: &WeightedField, tol: f64) -> Result<Vec<f64>> {
    psi.as_slice().iter().map(|&v| clamp_node(v, tol).map(libm::sqrt)).collect()
}

/// `4 ∫ M |∇_x √ψ̂|²` with face differences of node-wise square roots.
pub fn fisher_x(flow: &FlowGrid, config: &ConfigGrid, psi: &WeightedField, tol: f64) -> Result<f64> {
    let s = sqrt_field(psi, tol)?;
    let (nx, ny) = (flow.nx(), flow.ny());
    let nq = config.len();
    let w = config.weights();
    let mut total = 0.0;
    let mut add = |a: usize, b: usize| {
        let (ra, rb) = (&s[a * nq..(a + 1) * nq], &s[b * nq..(b + 1) * nq]);
        for i in 0..nq {
            let d = rb[i] - ra[i];
            total += w[i] * d * d;
        }
    };
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            if i + 1 < nx {
                add(c, c + 1);
            }
            if j + 1 < ny {
                add(c, c + nx);
            }
        }
    }
    // h² (Δ/h)² per face
    Ok(4.0 * total)
}

/// `4 ∫ M |∇_q √ψ̂|²` in the discrete Dirichlet form of the configuration grid.
pub fn fisher_q(flow: &FlowGrid, config: &ConfigGrid, psi: &WeightedField, tol: f64) -> Result<f64> {
    let s = sqrt_field(psi, tol)?;
    let nq = config.len();
    let total: f64 = (0..psi.cells()).map(|c| config.dirichlet_form(&s[c * nq..(c + 1) * nq])).sum();
    Ok(4.0 * flow.h() * flow.h() * total)
}

/// `½‖u‖² + k ∫ M F(ψ̂)`.
pub fn free_energy(flow: &FlowGrid, config: &ConfigGrid, state: &SystemState, k: f64, tol: f64) -> Result<f64> {
    Ok(0.5 * flow.norm_sq(&state.u) + k * relative_entropy(flow, config, &state.psi, tol)?)
}

/// `‖ψ̂ − 1‖_{L¹_M(Ω×D)}`.
pub fn l1_distance_to_equilibrium(flow: &FlowGrid, config: &ConfigGrid, psi: &WeightedField) -> f64 {
    let nq = config.len();
    let mut total = 0.0;
    for c in 0..psi.cells() {
        let cell = psi.cell(c);
        for i in 0..nq {
            total += config.weight(i) * (cell[i] - 1.0).abs();
        }
    }
    flow.h() * flow.h() * total
}

/// Snapshot quantities recorded after every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurements {
    pub u_norm_sq: f64,
    pub grad_u_sq: f64,
    pub entropy: f64,
    pub fisher_x: f64,
    pub fisher_q: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub psi_min: f64,
    /// Fraction of nodes where `ψ̂ > L`.
    pub saturation_fraction: f64,
}

pub fn measure(flow: &FlowGrid, config: &ConfigGrid, u: &VelocityField, psi: &WeightedField, l: f64, tol: f64) -> Result<Measurements> {
    let rho = density(config, psi);
    let saturated = psi.as_slice().iter().filter(|v| **v > l).count();
    let m = Measurements {
        u_norm_sq: flow.norm_sq(u),
        grad_u_sq: flow.grad_norm_sq(u),
        entropy: relative_entropy(flow, config, psi, tol)?,
        fisher_x: fisher_x(flow, config, psi, tol)?,
        fisher_q: fisher_q(flow, config, psi, tol)?,
        rho_min: rho.iter().copied().fold(f64::INFINITY, f64::min),
        rho_max: rho.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        psi_min: psi.min(),
        saturation_fraction: saturated as f64 / psi.as_slice().len().max(1) as f64,
    };
    let all = [m.u_norm_sq, m.grad_u_sq, m.entropy, m.fisher_x, m.fisher_q, m.rho_min, m.rho_max, m.psi_min];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotFinite("diagnostic measurement"));
    }
    Ok(m)
}

/// Coefficients of the energy inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCoefficients {
    pub nu: f64,
    pub k: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub a0: f64,
}

/// One ledger row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRecord {
    pub step: usize,
    pub t: f64,
    pub kinetic: f64,
    pub u_norm_sq: f64,
    pub entropy: f64,
    pub fisher_x: f64,
    pub fisher_q: f64,
    pub free_energy: f64,
    /// `ν ∫₀ᵗ ‖∇u‖²`.
    pub dissipation_u: f64,
    /// `4kε ∫₀ᵗ ∫ M |∇_x √ψ̂|²`.
    pub dissipation_x: f64,
    /// `(a0 k/λ) ∫₀ᵗ ∫ M |∇_q √ψ̂|²`.
    pub dissipation_q: f64,
    pub energy_lhs: f64,
    /// `B²` including the forcing accumulated up to `t`.
    pub b2: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub psi_min: f64,
    pub fixed_point_iterations: usize,
    pub saturation_fraction: f64,
}

/// Running energy balance of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    coefficients: EnergyCoefficients,
    b2_initial: f64,
    forcing_integral: f64,
    records: Vec<LedgerRecord>,
}

impl EnergyLedger {
    /// `B²₀ = ‖u₀‖² + 2k ∫ M F(ψ̂₀)` from the raw initial data; the first
    /// record describes the smoothed state at `t = 0`.
    pub fn new(coefficients: EnergyCoefficients, u0_norm_sq: f64, entropy0: f64, initial: &Measurements) -> Self {
        let b2_initial = u0_norm_sq + 2.0 * coefficients.k * entropy0;
        let mut ledger = Self { coefficients, b2_initial, forcing_integral: 0.0, records: Vec::new() };
        ledger.push_record(0, 0.0, initial, [0.0; 3], 0);
        ledger
    }

    fn push_record(&mut self, step: usize, t: f64, m: &Measurements, dissipation: [f64; 3], iterations: usize) {
        let k = self.coefficients.k;
        let energy_lhs = m.u_norm_sq + k * m.entropy + dissipation.iter().sum::<f64>();
        self.records.push(LedgerRecord {
            step,
            t,
            kinetic: 0.5 * m.u_norm_sq,
            u_norm_sq: m.u_norm_sq,
            entropy: m.entropy,
            fisher_x: m.fisher_x,
            fisher_q: m.fisher_q,
            free_energy: 0.5 * m.u_norm_sq + k * m.entropy,
            dissipation_u: dissipation[0],
            dissipation_x: dissipation[1],
            dissipation_q: dissipation[2],
            energy_lhs,
            b2: self.b2(),
            rho_min: m.rho_min,
            rho_max: m.rho_max,
            psi_min: m.psi_min,
            fixed_point_iterations: iterations,
            saturation_fraction: m.saturation_fraction,
        });
    }

    /// Appends the state after a step of length `dt`; `forcing_dual_sq` is
    /// `‖fⁿ‖²_{H⁻¹}` for that step.
    pub fn record_step(&mut self, dt: f64, m: &Measurements, forcing_dual_sq: f64, iterations: usize) {
        let c = self.coefficients;
        self.forcing_integral += dt * forcing_dual_sq;
        let last = *self.records.last().expect("ledger starts with an initial record");
        let dissipation = [
            last.dissipation_u + dt * c.nu * m.grad_u_sq,
            // 4kε ∫ I_x with I_x = Fisher_x / 4
            last.dissipation_x + dt * c.k * c.epsilon * m.fisher_x,
            last.dissipation_q + dt * c.a0 * c.k / c.lambda * 0.25 * m.fisher_q,
        ];
        self.push_record(last.step + 1, last.t + dt, m, dissipation, iterations);
    }

    pub fn b2(&self) -> f64 {
        self.b2_initial + self.forcing_integral / self.coefficients.nu
    }

    pub fn b2_initial(&self) -> f64 {
        self.b2_initial
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn coefficients(&self) -> &EnergyCoefficients {
        &self.coefficients
    }
}

/// Outcome of the energy-inequality check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyVerdict {
    /// `min_n (B²(tₙ) − LHS(tₙ))`.
    pub min_slack: f64,
    pub worst_step: usize,
    pub passed: bool,
}

/// Checks `LHS(t) ≤ B²(t) (1 + rel_tol) + abs_tol` at every recorded time.
pub fn energy_inequality_check(ledger: &EnergyLedger, rel_tol: f64, abs_tol: f64) -> EnergyVerdict {
    let mut verdict = EnergyVerdict { min_slack: f64::INFINITY, worst_step: 0, passed: true };
    for r in ledger.records() {
        let slack = r.b2 - r.energy_lhs;
        if slack < verdict.min_slack {
            verdict.min_slack = slack;
            verdict.worst_step = r.step;
        }
        if !(slack >= -(rel_tol * r.b2 + abs_tol)) {
            verdict.passed = false;
        }
    }
    verdict
}

/// Logarithmic Sobolev comparison at one spatial point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsiOutcome {
    /// `∫ M ψ̂ log(ψ̂ / ‖ψ̂‖_{L¹_M})`.
    pub entropy_term: f64,
    /// `(2/κ) ∫ M |∇_q √ψ̂|²`.
    pub fisher_term: f64,
    pub passed: bool,
}

pub fn lsi_check(config: &ConfigGrid, psi: &[f64], kappa: f64, tol: f64) -> Result<LsiOutcome> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("κ = {kappa} must be positive")));
    }
    let vals: Vec<f64> = psi.iter().map(|&v| clamp_node(v, tol)).collect::<Result<_>>()?;
    let mass = config.weighted_integral(&vals);
    if !(mass > 0.0) {
        return Err(Error::Precondition("logarithmic Sobolev check needs a nonzero field".into()));
    }
    let ent: f64 = vals
        .iter()
        .enumerate()
        .map(|(i, &v)| if v > 0.0 { config.weight(i) * v * libm::log(v / mass) } else { 0.0 })
        .sum();
    let roots: Vec<f64> = vals.iter().map(|v| libm::sqrt(*v)).collect();
    let fisher = 2.0 / kappa * config.dirichlet_form(&roots);
    Ok(LsiOutcome { entropy_term: ent, fisher_term: fisher, passed: ent <= fisher + tol })
}

/// Csiszár–Kullback comparison on `Ω × D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CkOutcome {
    /// `‖ψ̂ − 1‖²_{L¹_M}`.
    pub lhs: f64,
    /// `2|Ω| ∫ M F(ψ̂)`.
    pub rhs: f64,
    pub passed: bool,
}

pub fn csiszar_kullback_check(flow: &FlowGrid, config: &ConfigGrid, psi: &WeightedField, tol: f64) -> Result<CkOutcome> {
    for (c, rho) in density(config, psi).into_iter().enumerate() {
        if (rho - 1.0).abs() > tol.max(1e-12) {
            return Err(Error::Precondition(format!("configuration mass {rho} at cell {c} is not 1")));
        }
    }
    let l1 = l1_distance_to_equilibrium(flow, config, psi);
    let rhs = 2.0 * flow.area() * relative_entropy(flow, config, psi, tol)?;
    let lhs = l1 * l1;
    Ok(CkOutcome { lhs, rhs, passed: lhs <= rhs + tol })
}

/// `γ₀ = min(ν / C_P², κ a0 / (2λ))`.
pub fn decay_rate(nu: f64, poincare: f64, kappa: f64, a0: f64, lambda: f64) -> f64 {
    (nu / (poincare * poincare)).min(kappa * a0 / (2.0 * lambda))
}

/// `E = ‖u‖² + (k/|Ω|) ‖ψ̂ − 1‖²_{L¹_M}`.
pub fn decay_energy(flow: &FlowGrid, config: &ConfigGrid, u: &VelocityField, psi: &WeightedField, k: f64) -> f64 {
    let l1 = l1_distance_to_equilibrium(flow, config, psi);
    flow.norm_sq(u) + k / flow.area() * l1 * l1
}

/// Exponential-decay verdict of an unforced run.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub gamma0: f64,
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    /// `e^{−γ₀T} [‖u₀‖² + 2k ∫ M F(ψ̂₀)]`.
    pub bound: f64,
    pub final_energy: f64,
    pub passed: bool,
    /// Least-squares rate of the free energy, if it stays positive.
    pub fitted_rate: Option<f64>,
}

pub fn decay_verdict(
    times: &[f64],
    energies: &[f64],
    free_energies: &[f64],
    gamma0: f64,
    initial_bound: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> DecayFit {
    let t_end = times.last().copied().unwrap_or(0.0);
    let final_energy = energies.last().copied().unwrap_or(0.0);
    let bound = libm::exp(-gamma0 * t_end) * initial_bound;
    DecayFit {
        gamma0,
        times: times.to_vec(),
        energies: energies.to_vec(),
        bound,
        final_energy,
        passed: final_energy <= bound * (1.0 + rel_tol) + abs_tol,
        fitted_rate: fitted_rate(times, free_energies),
    }
}

fn fitted_rate(times: &[f64], values: &[f64]) -> Option<f64> {
    if times.len() < 2 || times.len() != values.len() || values.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let n = times.len() as f64;
    let logs: Vec<f64> = values.iter().map(|v| libm::log(*v)).collect();
    let tm = times.iter().sum::<f64>() / n;
    let lm = logs.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, l) in times.iter().zip(&logs) {
        num += (t - tm) * (l - lm);
        den += (t - tm) * (t - tm);
    }
    (den > 0.0).then(|| -num / den)
}

/// Entropy of a single configuration field `∫_D M F(ψ̂)`.
pub fn configuration_entropy(config: &ConfigGrid, psi: &[f64], tol: f64) -> Result<f64> {
    let mut total = 0.0;
    for (i, &v) in psi.iter().enumerate() {
        total += config.weight(i) * entropy_f(clamp_node(v, tol)?);
    }
    Ok(total)
}

/// Constant-in-x weighted field built from one configuration profile.
pub fn broadcast(cells: usize, profile: &[f64]) -> WeightedField {
    let mut data = vec![0.0; cells * profile.len()];
    for c in 0..cells {
        data[c * profile.len()..(c + 1) * profile.len()].copy_from_slice(profile);
    }
    WeightedField::from_vec(cells, profile.len(), data).expect("consistent layout")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::ChainGeometry;

    fn grids(n: usize, nq: usize) -> (FlowGrid, ConfigGrid) {
        (
            FlowGrid::unit_square(n).unwrap(),
            ConfigGrid::new(&ChainGeometry::dumbbell(2, 4.0).unwrap(), nq, nq).unwrap(),
        )
    }

    #[test]
    fn entropy_examples() {
        let (f, c) = grids(4, 12);
        let one = WeightedField::constant(f.cells(), c.len(), 1.0);
        assert_eq!(relative_entropy(&f, &c, &one, 1e-12).unwrap(), 0.0);
        let e = WeightedField::constant(f.cells(), c.len(), core::f64::consts::E);
        assert!((relative_entropy(&f, &c, &e, 1e-12).unwrap() - 1.0).abs() < 1e-12);
        let mut neg = one.clone();
        neg.as_mut_slice()[3] = -1e-3;
        assert!(relative_entropy(&f, &c, &neg, 1e-10).is_err());
        neg.as_mut_slice()[3] = -1e-14;
        assert!(relative_entropy(&f, &c, &neg, 1e-10).is_ok());
    }

    #[test]
    fn fisher_examples() {
        let (f, c) = grids(4, 16);
        let one = WeightedField::constant(f.cells(), c.len(), 1.0);
        assert!(fisher_x(&f, &c, &one, 0.0).unwrap().abs() < 1e-14);
        assert!(fisher_q(&f, &c, &one, 0.0).unwrap().abs() < 1e-12);
        let rb = libm::sqrt(c.b());
        let p = broadcast(f.cells(), &c.sample(|q| 1.0 + 0.01 * q[0] / rb));
        let fq = fisher_q(&f, &c, &p, 0.0).unwrap();
        assert!(fq > 0.0);
        let p4 = WeightedField::from_vec(f.cells(), c.len(), p.as_slice().iter().map(|v| 4.0 * v).collect()).unwrap();
        assert!((fisher_q(&f, &c, &p4, 0.0).unwrap() / fq - 4.0).abs() < 1e-10);
        let (_, c2) = grids(4, 32);
        let p2 = broadcast(f.cells(), &c2.sample(|q| 1.0 + 0.01 * q[0] / rb));
        let fq2 = fisher_q(&f, &c2, &p2, 0.0).unwrap();
        assert!((fq2 - fq).abs() / fq < 1e-3);
    }

    #[test]
    fn free_energy_examples() {
        let (f, c) = grids(4, 12);
        let st = SystemState {
            u: f.zero_velocity(),
            psi: WeightedField::constant(f.cells(), c.len(), core::f64::consts::E),
            t: 0.0,
            n: 0,
        };
        assert!((free_energy(&f, &c, &st, 2.5, 0.0).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn lsi_constant_and_bump() {
        let (_, c) = grids(2, 24);
        let r = lsi_check(&c, &vec![3.0; c.len()], 1.0, 1e-12).unwrap();
        assert!(r.entropy_term.abs() < 1e-13 && r.fisher_term.abs() < 1e-12 && r.passed);
        let bump = c.sample(|q| libm::exp(-8.0 * ((q[0] - 0.5).powi(2) + q[1] * q[1])));
        let r = lsi_check(&c, &bump, 1.0, 1e-10).unwrap();
        assert!(r.entropy_term > 0.1 && r.passed, "{r:?}");
        assert!(lsi_check(&c, &vec![0.0; c.len()], 1.0, 1e-12).is_err());
    }

    #[test]
    fn csiszar_kullback_examples() {
        let (f, c) = grids(4, 16);
        let one = WeightedField::constant(f.cells(), c.len(), 1.0);
        let r = csiszar_kullback_check(&f, &c, &one, 1e-10).unwrap();
        assert!(r.lhs == 0.0 && r.rhs == 0.0 && r.passed);
        let rb = libm::sqrt(c.b());
        let p = broadcast(f.cells(), &c.sample(|q| 1.0 + 0.05 * q[0] / rb));
        let r = csiszar_kullback_check(&f, &c, &p, 1e-10).unwrap();
        assert!(r.lhs < r.rhs && r.passed);
        let p2 = WeightedField::constant(f.cells(), c.len(), 1.1);
        assert!(csiszar_kullback_check(&f, &c, &p2, 1e-10).is_err());
    }

    #[test]
    fn decay_rate_reference() {
        let f = FlowGrid::unit_square(64).unwrap();
        let cp = f.poincare_constant().unwrap();
        let g = decay_rate(1.0, cp, 1.0, 1.0, 0.5);
        assert!((g - 1.0).abs() < 1e-12);
        let fit = decay_verdict(&[0.0, 1.0], &[0.0, 1e-20], &[0.0, 0.0], g, 0.0, 1e-3, 1e-14);
        assert!(fit.passed && fit.fitted_rate.is_none());
        let ts = [0.0, 1.0, 2.0];
        let fe: Vec<f64> = ts.iter().map(|t| libm::exp(-3.0 * t)).collect();
        let fit = decay_verdict(&ts, &fe, &fe, 1.0, 1.0, 1e-3, 0.0);
        assert!((fit.fitted_rate.unwrap() - 3.0).abs() < 1e-12 && fit.passed);
    }

    #[test]
    fn ledger_accumulates() {
        let m = Measurements {
            u_norm_sq: 1.0,
            grad_u_sq: 2.0,
            entropy: 0.5,
            fisher_x: 4.0,
            fisher_q: 8.0,
            rho_min: 1.0,
            rho_max: 1.0,
            psi_min: 0.5,
            saturation_fraction: 0.0,
        };
        let co = EnergyCoefficients { nu: 1.0, k: 1.0, epsilon: 0.5, lambda: 0.5, a0: 1.0 };
        let mut l = EnergyLedger::new(co, 1.0, 0.5, &m);
        assert_eq!(l.b2(), 2.0);
        l.record_step(0.1, &m, 1.0, 2);
        let r = l.records()[1];
        assert!((r.dissipation_u - 0.2).abs() < 1e-15);
        assert!((r.dissipation_x - 0.2).abs() < 1e-15);
        assert!((r.dissipation_q - 0.4).abs() < 1e-15);
        assert!((r.b2 - 2.1).abs() < 1e-15);
        let v = energy_inequality_check(&l, 1e-6, 0.0);
        assert!(!v.passed && v.worst_step == 1);
    }
}
