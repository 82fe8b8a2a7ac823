//! Deterministic end-to-end execution of a configured scenario.

use anyhow::{anyhow, Context, Result};
use fenefp_core::config_space::{ConfigGrid, WeightedField};
use fenefp_core::diagnostics::{
    self, decay_energy, decay_rate, decay_verdict, energy_inequality_check, lsi_check, measure, DecayFit,
    EnergyCoefficients, EnergyLedger, EnergyVerdict,
};
use fenefp_core::flow::{FlowGrid, VelocityField};
use fenefp_core::kinetic::{bakry_emery_kappa, ChainGeometry, CutoffParams};
use fenefp_core::stepper::{CoupledSolver, Physics, SmoothingReport, StepParams, SystemState};
use serde::Serialize;

use crate::config::RunConfig;
use crate::scenario;

/// Tolerance below which negative node values count as roundoff.
pub const NODE_TOL: f64 = 1e-10;

/// Named pass/fail outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

/// Per-step progress handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub step: usize,
    pub steps: usize,
    pub t: f64,
    pub free_energy: f64,
    pub fixed_point_iterations: usize,
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub flow: FlowGrid,
    pub grid: ConfigGrid,
    pub dt: f64,
    pub steps: usize,
    pub initial: SystemState,
    pub final_state: SystemState,
    pub smoothing: SmoothingReport,
    pub ledger: EnergyLedger,
    pub energy: EnergyVerdict,
    pub decay: Option<DecayFit>,
    /// Largest step-to-step change `max(|Δu|, |Δψ̂|)` over the run.
    pub max_increment: f64,
    /// Largest `|ρ − 1|` over all cells and steps.
    pub mass_defect: f64,
    pub poincare: f64,
    pub kappa: f64,
    pub gamma0: f64,
    pub verdicts: Vec<Verdict>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// `0` when every verdict passes, `2` otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            2
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Discretizes, smooths the initial data and runs all steps with per-step
/// diagnostics. `observer` is called after every step.
pub fn run_scenario(config: &RunConfig, mut observer: impl FnMut(&Progress)) -> Result<RunOutcome> {
    let (dt, steps) = config.time_grid().map_err(|e| anyhow!(e))?;
    let geometry = ChainGeometry::dumbbell(config.geometry.dim, config.geometry.b)?;
    let flow = FlowGrid::unit_square(config.grid.nx)?;
    let grid = ConfigGrid::new(&geometry, config.grid.n_r, config.grid.n_theta)?;
    let rouse = config.rouse().map_err(|e| anyhow!(e))?;
    let sc = scenario::build(config, &flow, &grid);
    let forced = sc.forcing.is_some();
    let physics = Physics {
        nu: config.physics.nu,
        k: config.physics.k,
        lambda: config.physics.lambda,
        epsilon: config.physics.epsilon,
    };
    let s = &config.scheme;
    let mut params = StepParams::new(dt, CutoffParams::new(s.l, s.delta)?);
    params.fixed_point_tol = s.fixed_point_tol;
    params.fixed_point_max_iter = s.fixed_point_max_iter;
    params.linear_rtol = s.linear_rtol;
    params.clip_renormalize = s.clip_renormalize;
    let a0 = rouse.a0();
    let solver = CoupledSolver::new(flow.clone(), grid.clone(), rouse, physics, params, sc.forcing)?;

    let kappa = bakry_emery_kappa(&geometry, 64, 64)?.kappa;
    let poincare = flow.poincare_constant()?;
    let gamma0 = decay_rate(physics.nu, poincare, kappa, a0, physics.lambda);

    let u_init = flow.smooth_initial_velocity(&sc.u0, dt).context("smoothing the initial velocity")?;
    let (psi_init, smoothing) =
        solver.smooth_initial_density(&sc.psi0, dt, config.smoothing_cutoff()).context("smoothing the initial density")?;
    let initial = SystemState { u: u_init, psi: psi_init, t: 0.0, n: 0 };

    let entropy0 = diagnostics::relative_entropy(&flow, &grid, &sc.psi0, NODE_TOL)?;
    let u0_sq = flow.norm_sq(&sc.u0);
    let coefficients = EnergyCoefficients { nu: physics.nu, k: physics.k, epsilon: physics.epsilon, lambda: physics.lambda, a0 };
    let l = s.l;
    let m0 = measure(&flow, &grid, &initial.u, &initial.psi, l, NODE_TOL)?;
    let mut ledger = EnergyLedger::new(coefficients, u0_sq, entropy0, &m0);

    let mut times = vec![0.0];
    let mut energies = vec![decay_energy(&flow, &grid, &initial.u, &initial.psi, physics.k)];
    let mut mass_defect = mass_error(&grid, &initial.psi);
    let mut max_increment = 0.0f64;
    let mut lsi_failures = Vec::new();
    let check_lsi = |psi: &WeightedField, step: usize, failures: &mut Vec<String>| -> Result<()> {
        for c in 0..psi.cells() {
            let r = lsi_check(&grid, psi.cell(c), kappa, 1e-10)?;
            if !r.passed && failures.len() < 8 {
                failures.push(format!("step {step} cell {c}: {} > {}", r.entropy_term, r.fisher_term));
            }
        }
        Ok(())
    };
    if config.diagnostics.lsi_every_step {
        check_lsi(&initial.psi, 0, &mut lsi_failures)?;
    }
    let constant_forcing_dual = if forced && config.scenario.name == crate::config::ScenarioKind::Couette {
        Some(flow.dual_norm_sq(&solver.forcing_at(0.0))?)
    } else {
        None
    };

    let mut state = initial.clone();
    for step in 1..=steps {
        let (next, report) = solver
            .coupled_step(&state)
            .with_context(|| format!("coupled step {step} (t = {:.6})", state.t))?;
        let f_dual = match constant_forcing_dual {
            Some(v) => v,
            None if forced => flow.dual_norm_sq(&solver.forcing_at(state.t))?,
            None => 0.0,
        };
        let m = measure(&flow, &grid, &next.u, &next.psi, l, NODE_TOL).with_context(|| format!("diagnostics at step {step}"))?;
        ledger.record_step(dt, &m, f_dual, report.iterations);
        max_increment = max_increment
            .max(max_abs_diff(&next.u.data, &state.u.data))
            .max(max_abs_diff(next.psi.as_slice(), state.psi.as_slice()));
        mass_defect = mass_defect.max(mass_error(&grid, &next.psi));
        if config.diagnostics.lsi_every_step {
            check_lsi(&next.psi, step, &mut lsi_failures)?;
        }
        times.push(next.t);
        energies.push(decay_energy(&flow, &grid, &next.u, &next.psi, physics.k));
        state = next;
        let rec = ledger.records().last().expect("ledger is never empty");
        observer(&Progress { step, steps, t: state.t, free_energy: rec.free_energy, fixed_point_iterations: report.iterations });
    }

    let d = &config.diagnostics;
    let energy = energy_inequality_check(&ledger, d.energy_tol, d.absolute_tol);
    let mut verdicts = vec![
        Verdict::new(
            "energy_inequality",
            energy.passed,
            format!("min slack {:.3e} at step {} (B² = {:.6e})", energy.min_slack, energy.worst_step, ledger.b2()),
        ),
        Verdict::new("mass_conservation", mass_defect <= d.mass_tol, format!("max |ρ − 1| = {mass_defect:.3e}")),
        Verdict::new(
            "smoothing_contract",
            smoothing.entropy_slack() >= -1e-8 && smoothing.fisher_slack() >= -1e-8,
            format!("entropy slack {:.3e}, Fisher slack {:.3e}", smoothing.entropy_slack(), smoothing.fisher_slack()),
        ),
    ];
    if d.lsi_every_step {
        verdicts.push(Verdict::new(
            "log_sobolev",
            lsi_failures.is_empty(),
            if lsi_failures.is_empty() { "holds at every cell and step".into() } else { lsi_failures.join("; ") },
        ));
    }
    let decay = if forced {
        None
    } else {
        let free: Vec<f64> = ledger.records().iter().map(|r| r.free_energy).collect();
        let mut worst = f64::NEG_INFINITY;
        let mut worst_step = 0;
        for (n, w) in free.windows(2).enumerate() {
            if w[1] - w[0] > worst {
                worst = w[1] - w[0];
                worst_step = n + 1;
            }
        }
        verdicts.push(Verdict::new(
            "free_energy_monotone",
            free.len() < 2 || worst <= d.monotonicity_tol,
            format!("largest increase {worst:.3e} at step {worst_step}"),
        ));
        let bound0 = u0_sq + 2.0 * physics.k * entropy0;
        let fit = decay_verdict(&times, &energies, &free, gamma0, bound0, d.decay_tol, d.absolute_tol);
        verdicts.push(Verdict::new(
            "exponential_decay",
            fit.passed,
            format!(
                "E(T) = {:.6e} vs bound {:.6e} (γ₀ = {:.6}, fitted rate {})",
                fit.final_energy,
                fit.bound,
                gamma0,
                fit.fitted_rate.map_or("n/a".into(), |r| format!("{r:.4}"))
            ),
        ));
        Some(fit)
    };

    Ok(RunOutcome {
        config: config.clone(),
        flow,
        grid,
        dt,
        steps,
        initial,
        final_state: state,
        smoothing,
        ledger,
        energy,
        decay,
        max_increment,
        mass_defect,
        poincare,
        kappa,
        gamma0,
        verdicts,
    })
}

fn mass_error(grid: &ConfigGrid, psi: &WeightedField) -> f64 {
    diagnostics::density(grid, psi).into_iter().fold(0.0f64, |m, r| m.max((r - 1.0).abs()))
}

/// `‖a − b‖_{L²_M(Ω×D)}` of two runs on the same grids.
pub fn weighted_l2_distance(flow: &FlowGrid, grid: &ConfigGrid, a: &WeightedField, b: &WeightedField) -> f64 {
    let nq = grid.len();
    let mut total = 0.0;
    for c in 0..a.cells() {
        let (x, y) = (a.cell(c), b.cell(c));
        for i in 0..nq {
            let d = x[i] - y[i];
            total += grid.weight(i) * d * d;
        }
    }
    (flow.h() * flow.h() * total).sqrt()
}

/// `‖a − b‖` in `L²(Ω)`.
pub fn velocity_distance(flow: &FlowGrid, a: &VelocityField, b: &VelocityField) -> f64 {
    let d = VelocityField { data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect() };
    flow.norm_sq(&d).sqrt()
}
