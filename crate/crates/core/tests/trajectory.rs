use approx::assert_relative_eq;
use fenefp_core::config_space::{ConfigGrid, WeightedField};
use fenefp_core::diagnostics::{density, energy_inequality_check, measure, relative_entropy, EnergyCoefficients, EnergyLedger};
use fenefp_core::flow::FlowGrid;
use fenefp_core::kinetic::{ChainGeometry, CutoffParams, RouseMatrix};
use fenefp_core::stepper::{CoupledSolver, Forcing, Physics, StepParams, SystemState};

const PI: f64 = core::f64::consts::PI;

fn solver(dt: f64, forcing: Option<Forcing>) -> CoupledSolver {
    let flow = FlowGrid::unit_square(8).unwrap();
    let config = ConfigGrid::new(&ChainGeometry::dumbbell(2, 4.0).unwrap(), 10, 10).unwrap();
    let physics = Physics { nu: 1.0, k: 1.0, lambda: 0.5, epsilon: 0.1 };
    let params = StepParams::new(dt, CutoffParams::new(100.0, 1e-4).unwrap());
    CoupledSolver::new(flow, config, RouseMatrix::default_for(1), physics, params, forcing).unwrap()
}

fn initial(s: &CoupledSolver, amp: f64) -> SystemState {
    let flow = s.flow();
    let u = flow.from_streamfunction(|x, y| {
        let b = libm::sin(PI * x) * libm::sin(PI * y);
        0.2 * b * b * (1.0 + libm::sin(2.0 * PI * x))
    });
    let rb = libm::sqrt(s.config().b());
    let mut data = Vec::new();
    for c in 0..flow.cells() {
        let [x, y] = flow.cell_center(c);
        let g = amp * libm::cos(PI * x) * libm::sin(PI * y);
        data.extend(s.config().sample(|q| 1.0 + g * q[0] / rb + 0.5 * amp * q[1] / rb));
    }
    SystemState { u, psi: WeightedField::from_vec(flow.cells(), s.config().len(), data).unwrap(), t: 0.0, n: 0 }
}

fn run(s: &CoupledSolver, state: SystemState, steps: usize) -> (Vec<SystemState>, EnergyLedger) {
    let (flow, config, p) = (s.flow(), s.config(), s.physics());
    let coeffs = EnergyCoefficients { nu: p.nu, k: p.k, epsilon: p.epsilon, lambda: p.lambda, a0: s.rouse().a0() };
    let m0 = measure(flow, config, &state.u, &state.psi, 100.0, 1e-10).unwrap();
    let entropy0 = relative_entropy(flow, config, &state.psi, 1e-10).unwrap();
    let mut ledger = EnergyLedger::new(coeffs, flow.norm_sq(&state.u), entropy0, &m0);
    let mut states = vec![state];
    for _ in 0..steps {
        let cur = states.last().unwrap();
        let f = if s.is_forced() { flow.dual_norm_sq(&s.forcing_at(cur.t)).unwrap() } else { 0.0 };
        let (next, rep) = s.coupled_step(cur).unwrap();
        assert!(rep.converged);
        let m = measure(flow, config, &next.u, &next.psi, 100.0, 1e-10).unwrap();
        ledger.record_step(s.params().dt, &m, f, rep.iterations);
        states.push(next);
    }
    (states, ledger)
}

#[test]
fn unforced_trajectory_conserves_mass_and_dissipates() {
    let s = solver(0.02, None);
    let (states, ledger) = run(&s, initial(&s, 0.4), 10);
    for st in &states {
        for rho in density(s.config(), &st.psi) {
            assert_relative_eq!(rho, 1.0, epsilon = 1e-12);
        }
        assert!(st.psi.min() > 0.0);
        assert!(s.flow().max_divergence(&st.u) < 1e-10);
    }
    let free: Vec<f64> = ledger.records().iter().map(|r| r.free_energy).collect();
    assert!(free.windows(2).all(|w| w[1] < w[0]), "{free:?}");
    assert!(energy_inequality_check(&ledger, 1e-8, 1e-14).passed);
    let last = states.last().unwrap();
    assert_relative_eq!(last.t, 0.2, epsilon = 1e-14);
    assert_eq!(last.n, 10);
}

#[test]
fn forced_trajectory_satisfies_the_energy_bound() {
    let forcing: Forcing = Box::new(|x, y, t| [libm::cos(2.0 * PI * t) * libm::sin(2.0 * PI * y), libm::sin(2.0 * PI * x)]);
    let s = solver(0.02, Some(forcing));
    let (states, ledger) = run(&s, initial(&s, 0.2), 8);
    let verdict = energy_inequality_check(&ledger, 1e-8, 1e-14);
    assert!(verdict.passed, "{verdict:?}");
    assert!(ledger.b2() > ledger.b2_initial());
    assert!(states.last().unwrap().u.max_abs() > 0.0);
}

#[test]
fn steps_are_deterministic() {
    let s = solver(0.05, None);
    let (a, _) = run(&s, initial(&s, 0.3), 3);
    let (b, _) = run(&s, initial(&s, 0.3), 3);
    assert_eq!(a.last().unwrap().psi, b.last().unwrap().psi);
    assert_eq!(a.last().unwrap().u, b.last().unwrap().u);
}

#[test]
fn clipping_mode_keeps_unit_mass() {
    let mut s = solver(0.02, None);
    s.params_mut().clip_renormalize = true;
    let (states, _) = run(&s, initial(&s, 0.4), 4);
    for rho in density(s.config(), &states.last().unwrap().psi) {
        assert_relative_eq!(rho, 1.0, epsilon = 1e-12);
    }
}
