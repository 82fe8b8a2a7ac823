//! Property suites over the solver: quadrature oracles, functional
//! inequalities on random fields, discrete structure of the flow operators,
//! and the trajectory checks on the reference scenarios.

use std::f64::consts::PI;
use std::time::Instant;

use anyhow::Result;
use fenefp_core::config_space::{ConfigGrid, Mat2, WeightedField};
use fenefp_core::diagnostics::{csiszar_kullback_check, lsi_check};
use fenefp_core::flow::{convection_trilinear, FlowGrid, VelocityField};
use fenefp_core::kinetic::{maxwellian_normalizer, ChainGeometry, CutoffParams, RouseMatrix};
use fenefp_core::stepper::{CoupledSolver, Physics, StepParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{RunConfig, ScenarioKind};
use crate::run::{run_scenario, velocity_distance, weighted_l2_distance, RunOutcome};

/// Outcome of one suite.
#[derive(Debug, Clone)]
pub struct Check {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(id: &'static str, title: &'static str, passed: bool, detail: String) -> Self {
        Self { id, title, passed, detail }
    }

    /// `PASS`/`FAIL` line.
    pub fn line(&self) -> String {
        format!("{} [{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.title, self.detail)
    }
}

fn dumbbell_grid(n_r: usize, n_theta: usize) -> Result<ConfigGrid> {
    Ok(ConfigGrid::new(&ChainGeometry::dumbbell(2, 4.0)?, n_r, n_theta)?)
}

/// Smooth positive configuration profile `exp(p(q))` with a random cubic `p`,
/// or a sharp logistic bump when `sharp` is set.
fn random_profile(grid: &ConfigGrid, rng: &mut ChaCha8Rng, sharp: bool) -> Vec<f64> {
    let rb = grid.b().sqrt();
    if sharp {
        let r0 = rng.random_range(0.15..0.5) * rb;
        let c = [rng.random_range(-0.4..0.4) * rb, rng.random_range(-0.4..0.4) * rb];
        let w = rng.random_range(0.05..0.12) * rb;
        let floor = 10f64.powf(rng.random_range(-4.0..-1.0));
        return grid.sample(|q| {
            let d = ((q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2)).sqrt();
            floor + 1.0 / (1.0 + ((d - r0) / w).exp())
        });
    }
    let mut coef = [0.0; 10];
    let amp = rng.random_range(0.2..2.0);
    for c in coef.iter_mut() {
        *c = amp * rng.random_range(-1.0..1.0);
    }
    let scale = rng.random_range(0.01..10.0);
    grid.sample(|q| {
        let (x, y) = (q[0] / rb, q[1] / rb);
        let p = coef[0] * x + coef[1] * y + coef[2] * x * x + coef[3] * x * y + coef[4] * y * y + coef[5] * x * x * x
            + coef[6] * x * x * y
            + coef[7] * x * y * y
            + coef[8] * y * y * y
            + coef[9] * (PI * x).sin() * (PI * y).cos();
        scale * p.exp()
    })
}

fn normalized(grid: &ConfigGrid, mut f: Vec<f64>) -> Vec<f64> {
    let m = grid.weighted_integral(&f);
    f.iter_mut().for_each(|v| *v /= m);
    f
}

/// Maxwellian normalization, second moment and `∫ M U' q qᵀ = I`.
pub fn quadrature_oracles() -> Result<Check> {
    let z = maxwellian_normalizer(4.0, 2)?;
    let z_err = (z - 4.0 * PI / 3.0).abs();
    let grid = dumbbell_grid(64, 64)?;
    let zh_err = (grid.discrete_normalizer() - 4.0 * PI / 3.0).abs();
    let second = grid.weighted_integral(&grid.sample(|q| q[0] * q[0] + q[1] * q[1]));
    let m_err = (second - 1.0).abs();
    let c = grid.stress_moment(&vec![1.0; grid.len()]);
    let c_err = c.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let passed = z_err <= 1e-8 && zh_err <= 1e-8 && m_err <= 1e-6 && c_err <= 1e-6;
    Ok(Check::new(
        "C5",
        "quadrature oracles",
        passed,
        format!("|Z − 4π/3| = {z_err:.2e} (grid {zh_err:.2e}), |∫M|q|² − 1| = {m_err:.2e}, |C(M) − I|_max = {c_err:.2e}"),
    ))
}

/// Integration-by-parts identity for random traceless `B` and smooth `φ̂`,
/// with its convergence under refinement.
pub fn integration_by_parts(seed: u64, samples: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1b9);
    let sizes = [8usize, 16, 32, 64];
    let grids: Vec<ConfigGrid> = sizes.iter().map(|&n| dumbbell_grid(n, n)).collect::<Result<_>>()?;
    let floor = 1e-12;
    let mut worst64 = 0.0f64;
    let mut worst8 = 0.0f64;
    let mut worst_ratio = f64::INFINITY;
    let mut failures = 0;
    for _ in 0..samples {
        let a = rng.random_range(-1.0..1.0);
        let b: Mat2 = [[a, rng.random_range(-1.0..1.0)], [rng.random_range(-1.0..1.0), -a]];
        let k = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0), rng.random_range(0.5..3.0)];
        let phi = |q: [f64; 2]| (k[0] * q[0] + k[1] * q[1]).exp() * (1.0 + k[2] * (k[3] * q[0] * q[1]).sin());
        let mut rel = Vec::new();
        for g in &grids {
            let f = g.sample(phi);
            let (l, r) = g.ibp_sides(b, &f)?;
            let scale = l.abs().max(r.abs()).max(1e-300);
            rel.push((l - r).abs() / scale);
        }
        worst64 = worst64.max(rel[3]);
        worst8 = worst8.max(rel[0]);
        let mut ok = rel[3] <= 1e-4;
        for w in rel.windows(2) {
            if w[1] > floor {
                let ratio = w[0] / w[1];
                worst_ratio = worst_ratio.min(ratio);
                ok &= ratio >= 4.0;
            }
        }
        if !ok {
            failures += 1;
        }
    }
    let ratio = if worst_ratio.is_finite() { format!("{worst_ratio:.1}") } else { "n/a (all at floor)".into() };
    Ok(Check::new(
        "C6",
        "integration-by-parts identity",
        failures == 0,
        format!(
            "{samples} samples, worst relative residual {worst8:.2e} at 8×8 and {worst64:.2e} at 64×64, smallest refinement ratio above {floor:.0e}: {ratio}, failures {failures}"
        ),
    ))
}

/// Logarithmic Sobolev inequality with `κ = 1` on random smooth fields; every
/// tenth field is a near-indicator bump.
pub fn log_sobolev_sweep(seed: u64, samples: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x15);
    let grid = dumbbell_grid(48, 48)?;
    let mut failures = 0;
    let mut min_margin = f64::INFINITY;
    let mut largest_entropy = 0.0f64;
    for s in 0..samples {
        let f = random_profile(&grid, &mut rng, s % 10 == 9);
        let r = lsi_check(&grid, &f, 1.0, 1e-12)?;
        if !r.passed {
            failures += 1;
        }
        if r.fisher_term > 0.0 {
            min_margin = min_margin.min((r.fisher_term - r.entropy_term) / r.fisher_term);
        }
        let mass = grid.weighted_integral(&f);
        largest_entropy = largest_entropy.max(r.entropy_term / mass);
    }
    Ok(Check::new(
        "C7",
        "logarithmic Sobolev sweep",
        failures == 0,
        format!(
            "{samples} fields, failures {failures}, smallest relative margin {min_margin:.3}, largest normalized entropy {largest_entropy:.3}"
        ),
    ))
}

/// Csiszár–Kullback inequality on random unit-mass fields over `Ω × D`.
pub fn csiszar_kullback_sweep(seed: u64, samples: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc4);
    let flow = FlowGrid::unit_square(4)?;
    let grid = dumbbell_grid(16, 16)?;
    let mut failures = 0;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let mut data = Vec::with_capacity(flow.cells() * grid.len());
        for _ in 0..flow.cells() {
            let sharp = rng.random_bool(0.1);
            data.extend(normalized(&grid, random_profile(&grid, &mut rng, sharp)));
        }
        let psi = WeightedField::from_vec(flow.cells(), grid.len(), data)?;
        let r = csiszar_kullback_check(&flow, &grid, &psi, 1e-10)?;
        if !r.passed {
            failures += 1;
        }
        if r.rhs > 0.0 {
            worst = worst.max(r.lhs / r.rhs);
        }
    }
    Ok(Check::new(
        "C8",
        "Csiszár–Kullback sweep",
        failures == 0,
        format!("{samples} fields, failures {failures}, largest ratio lhs/rhs {worst:.3}"),
    ))
}

/// Entropy non-increase and the Fisher bound of the initial-density smoothing
/// on random admissible data.
pub fn smoothing_contract(seed: u64, samples: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a);
    let flow = FlowGrid::unit_square(8)?;
    let grid = dumbbell_grid(12, 12)?;
    let physics = Physics { nu: 1.0, k: 1.0, lambda: 0.5, epsilon: 0.1 };
    let dt = 0.02;
    let params = StepParams::new(dt, CutoffParams::new(100.0, 1e-4)?);
    let solver = CoupledSolver::new(flow.clone(), grid.clone(), RouseMatrix::default_for(1), physics, params, None)?;
    let mut failures = Vec::new();
    let mut min_entropy_slack = f64::INFINITY;
    let mut min_fisher_slack = f64::INFINITY;
    for s in 0..samples {
        let base: Vec<Vec<f64>> = (0..3).map(|_| random_profile(&grid, &mut rng, false)).collect();
        let phase = [rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)];
        let mut data = Vec::with_capacity(flow.cells() * grid.len());
        for c in 0..flow.cells() {
            let [x, y] = flow.cell_center(c);
            let a = 0.5 + 0.5 * (2.0 * PI * x + phase[0]).sin();
            let b = 0.5 + 0.5 * (2.0 * PI * y + phase[1]).cos();
            let profile: Vec<f64> = (0..grid.len()).map(|i| base[0][i] + a * base[1][i] + b * base[2][i]).collect();
            data.extend(normalized(&grid, profile));
        }
        let psi0 = WeightedField::from_vec(flow.cells(), grid.len(), data)?;
        match solver.smooth_initial_density(&psi0, dt, 100.0) {
            Ok((_, r)) => {
                min_entropy_slack = min_entropy_slack.min(r.entropy_slack());
                min_fisher_slack = min_fisher_slack.min(r.fisher_slack());
                if r.entropy_slack() < -1e-8 || r.fisher_slack() < -1e-8 {
                    failures.push(format!("sample {s}"));
                }
            }
            Err(e) => failures.push(format!("sample {s}: {e}")),
        }
    }
    Ok(Check::new(
        "C9",
        "initial-smoothing contract",
        failures.is_empty(),
        format!(
            "{samples} fields, min entropy slack {min_entropy_slack:.3e}, min Fisher slack {min_fisher_slack:.3e}{}",
            if failures.is_empty() { String::new() } else { format!(", failures: {}", failures.join("; ")) }
        ),
    ))
}

fn random_interior(flow: &FlowGrid, rng: &mut ChaCha8Rng) -> VelocityField {
    let mask = flow.sample_velocity(|_, _| [1.0, 1.0]);
    VelocityField { data: mask.data.iter().map(|m| if *m != 0.0 { rng.random_range(-1.0..1.0) } else { 0.0 }).collect() }
}

fn random_solenoidal(flow: &FlowGrid, rng: &mut ChaCha8Rng) -> VelocityField {
    let s: Vec<f64> = (0..flow.n_stream()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut u = flow.zero_velocity();
    flow.curl(&s, &mut u.data);
    u
}

/// Projection, skew-symmetry of convection and the Poincaré inequality on
/// random fields.
pub fn flow_invariants(seed: u64, samples: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf1);
    let flow = FlowGrid::unit_square(16)?;
    let cp = flow.poincare_constant()?;
    let mut div = 0.0f64;
    let mut idem = 0.0f64;
    let mut grad = 0.0f64;
    let mut skew = 0.0f64;
    let mut poincare = 0.0f64;
    for _ in 0..samples {
        let w = random_interior(&flow, &mut rng);
        let p = flow.project_divergence_free(&w)?;
        div = div.max(flow.max_divergence(&p));
        let pp = flow.project_divergence_free(&p)?;
        idem = idem.max(pp.data.iter().zip(&p.data).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
        let phi: Vec<f64> = (0..flow.cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
        grad = grad.max(flow.project_divergence_free(&flow.scalar_gradient(&phi))?.max_abs());
        let a = random_solenoidal(&flow, &mut rng);
        let w1 = random_interior(&flow, &mut rng);
        let w2 = random_interior(&flow, &mut rng);
        skew = skew
            .max(convection_trilinear(&flow, &a, &w1, &w1).abs())
            .max((convection_trilinear(&flow, &a, &w1, &w2) + convection_trilinear(&flow, &a, &w2, &w1)).abs());
        poincare = poincare.max((flow.norm_sq(&w1) / flow.grad_norm_sq(&w1)).sqrt() / cp);
    }
    let passed = div <= 1e-10 && idem <= 1e-12 && grad <= 1e-12 && skew <= 1e-12 && poincare <= 1.01;
    Ok(Check::new(
        "C11",
        "flow skew-symmetry and projection",
        passed,
        format!(
            "{samples} fields: max div {div:.2e}, idempotence {idem:.2e}, gradient residue {grad:.2e}, skew {skew:.2e}, ‖w‖/(C_P‖∇w‖) ≤ {poincare:.4}"
        ),
    ))
}

/// Equilibrium on a 32² flow grid and a 32×32 configuration grid, 50 steps.
pub fn equilibrium_preservation() -> Result<Check> {
    let mut cfg = RunConfig::reference_equilibrium();
    cfg.grid.nx = 32;
    cfg.grid.n_r = 32;
    cfg.grid.n_theta = 32;
    cfg.scheme.dt = Some(0.01);
    cfg.scheme.t_final = 0.5;
    let start = Instant::now();
    let out = run_scenario(&cfg, |_| {})?;
    let secs = start.elapsed().as_secs_f64();
    let passed = out.max_increment <= 1e-10 && out.steps == 50 && secs <= 600.0;
    Ok(Check::new(
        "C1",
        "equilibrium preservation",
        passed,
        format!("{} steps, max per-step change {:.2e}, runtime {secs:.1}s", out.steps, out.max_increment),
    ))
}

/// Reference decay runs: the base run, two other values of `ε`, and one with
/// a larger `δ`.
#[derive(Debug)]
pub struct DecayRuns {
    pub reference: RunOutcome,
    pub epsilon_low: RunOutcome,
    pub epsilon_high: RunOutcome,
    pub coarse_delta: RunOutcome,
}

pub fn decay_runs(seed: u64) -> Result<DecayRuns> {
    let mut base = RunConfig::reference_decay();
    base.seed = seed;
    base.scenario.name = ScenarioKind::Decay;
    let with = |f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        run_scenario(&c, |_| {})
    };
    Ok(DecayRuns {
        reference: with(&|_| {})?,
        epsilon_low: with(&|c| c.physics.epsilon = 0.05)?,
        epsilon_high: with(&|c| c.physics.epsilon = 0.2)?,
        coarse_delta: with(&|c| c.scheme.delta = 1e-3)?,
    })
}

fn verdict<'a>(out: &'a RunOutcome, name: &str) -> Option<&'a crate::run::Verdict> {
    out.verdicts.iter().find(|v| v.name == name)
}

pub fn mass_conservation(out: &RunOutcome) -> Check {
    Check::new(
        "C2",
        "mass conservation",
        out.steps >= 100 && out.mass_defect <= 1e-8,
        format!("{} steps, max |ρ − 1| = {:.2e}", out.steps, out.mass_defect),
    )
}

pub fn energy_inequality(out: &RunOutcome) -> Check {
    let b2 = out.ledger.b2();
    Check::new(
        "C3",
        "discrete energy inequality",
        out.energy.min_slack >= -1e-6 * b2,
        format!("min slack {:.3e} (B² = {b2:.4e}) at step {}", out.energy.min_slack, out.energy.worst_step),
    )
}

pub fn exponential_decay(runs: &DecayRuns) -> Check {
    let all = [&runs.reference, &runs.epsilon_low, &runs.epsilon_high];
    let mut passed = (runs.reference.gamma0 - 1.0).abs() < 1e-12;
    let mut parts = Vec::new();
    for out in all {
        let fit = out.decay.as_ref();
        let ok = fit.is_some_and(|f| f.final_energy <= f.bound * (1.0 + 1e-3))
            && (out.gamma0 - runs.reference.gamma0).abs() == 0.0;
        passed &= ok;
        if let Some(f) = fit {
            parts.push(format!(
                "ε = {}: E(T) = {:.3e} ≤ {:.3e}, fitted rate {}",
                out.config.physics.epsilon,
                f.final_energy,
                f.bound,
                f.fitted_rate.map_or("n/a".into(), |r| format!("{r:.3}"))
            ));
        }
        passed &= verdict(out, "exponential_decay").is_some_and(|v| v.passed);
    }
    Check::new("C4", "exponential decay bound", passed, format!("γ₀ = {:.6}; {}", runs.reference.gamma0, parts.join("; ")))
}

pub fn delta_robustness(runs: &DecayRuns) -> Check {
    let a = &runs.reference;
    let b = &runs.coarse_delta;
    let dpsi = weighted_l2_distance(&a.flow, &a.grid, &a.final_state.psi, &b.final_state.psi);
    let du = velocity_distance(&a.flow, &a.final_state.u, &b.final_state.u);
    let limit = 10.0 * a.config.scheme.delta;
    Check::new(
        "C10",
        "δ-robustness",
        dpsi <= limit,
        format!("‖ψ̂(δ=1e-3) − ψ̂(δ=1e-4)‖ = {dpsi:.2e} ≤ {limit:.0e}; velocity difference {du:.2e}"),
    )
}

/// Quick suites; `full` adds the trajectory checks on reference grids.
pub fn run_all(seed: u64, full: bool) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    if full {
        checks.push(equilibrium_preservation()?);
        let runs = decay_runs(seed)?;
        checks.push(mass_conservation(&runs.reference));
        checks.push(energy_inequality(&runs.reference));
        checks.push(exponential_decay(&runs));
        checks.push(delta_robustness(&runs));
    }
    checks.push(quadrature_oracles()?);
    checks.push(integration_by_parts(seed, 20)?);
    checks.push(log_sobolev_sweep(seed, 500)?);
    checks.push(csiszar_kullback_sweep(seed, 200)?);
    checks.push(smoothing_contract(seed, 50)?);
    checks.push(flow_invariants(seed, 100)?);
    checks.sort_by_key(|c| c.id[1..].parse::<u32>().unwrap_or(u32::MAX));
    Ok(checks)
}
