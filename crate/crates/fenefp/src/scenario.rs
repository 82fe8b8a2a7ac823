//! Initial data and forcing for the built-in scenarios.

use std::f64::consts::PI;

use fenefp_core::config_space::{ConfigGrid, WeightedField};
use fenefp_core::flow::{FlowGrid, VelocityField};
use fenefp_core::stepper::Forcing;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{RunConfig, ScenarioKind};

/// Initial velocity, initial density and body force of a run.
pub struct Scenario {
    pub kind: ScenarioKind,
    pub u0: VelocityField,
    pub psi0: WeightedField,
    pub forcing: Option<Forcing>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario").field("kind", &self.kind).field("forced", &self.forcing.is_some()).finish()
    }
}

fn bump(x: f64) -> f64 {
    let s = (PI * x).sin();
    s * s
}

/// `u₀ = curl(A sin²(πx) sin²(πy) (1 + noise terms))`, vanishing to second
/// order at the walls.
fn initial_velocity(flow: &FlowGrid, amplitude: f64, noise: [f64; 4]) -> VelocityField {
    flow.from_streamfunction(|x, y| {
        let modes = 1.0
            + noise[0] * (2.0 * PI * x).sin()
            + noise[1] * (2.0 * PI * y).sin()
            + noise[2] * (PI * x).cos() * (PI * y).cos()
            + noise[3] * (2.0 * PI * (x + y)).cos();
        amplitude * bump(x) * bump(y) * modes
    })
}

/// `ψ̂₀ = 1 + a q_x/√b + g(x) (c₁ q_y/√b + c₂ q_x q_y / b)`; every term but
/// the first is odd in `q`, so each cell has unit mass.
fn initial_density(flow: &FlowGrid, config: &ConfigGrid, a: f64, noise: f64, c: [f64; 4]) -> WeightedField {
    let rb = config.b().sqrt();
    let nq = config.len();
    let mut data = Vec::with_capacity(flow.cells() * nq);
    for cell in 0..flow.cells() {
        let [x, y] = flow.cell_center(cell);
        let g = noise * ((2.0 * PI * x + c[2]).sin() * (PI * y + c[3]).cos());
        for i in 0..nq {
            let q = config.node(i);
            data.push(1.0 + a * q[0] / rb + g * (c[0] * q[1] / rb + c[1] * q[0] * q[1] / config.b()));
        }
    }
    WeightedField::from_vec(flow.cells(), nq, data).expect("layout matches the grids")
}

pub fn build(config: &RunConfig, flow: &FlowGrid, grid: &ConfigGrid) -> Scenario {
    let sc = &config.scenario;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |n: usize, scale: f64| -> Vec<f64> { (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect() };
    let un = draw(4, sc.noise);
    let pc = draw(2, 0.5);
    let phase = draw(2, PI);
    let c = [pc[0], pc[1], phase[0], phase[1]];
    let unit = || WeightedField::constant(flow.cells(), grid.len(), 1.0);
    let amp = sc.forcing_amplitude;
    let freq = sc.forcing_frequency;
    match sc.name {
        ScenarioKind::Equilibrium => Scenario { kind: sc.name, u0: flow.zero_velocity(), psi0: unit(), forcing: None },
        ScenarioKind::Decay => Scenario {
            kind: sc.name,
            u0: initial_velocity(flow, sc.velocity_amplitude, [un[0], un[1], un[2], un[3]]),
            psi0: initial_density(flow, grid, sc.density_amplitude, sc.noise, c),
            forcing: None,
        },
        ScenarioKind::Couette => Scenario {
            kind: sc.name,
            u0: flow.zero_velocity(),
            psi0: if sc.noise > 0.0 { initial_density(flow, grid, 0.0, sc.noise, c) } else { unit() },
            forcing: Some(Box::new(move |_x, y, _t| [amp * (2.0 * PI * y).sin(), 0.0])),
        },
        ScenarioKind::Forced => Scenario {
            kind: sc.name,
            u0: initial_velocity(flow, sc.velocity_amplitude, [un[0], un[1], un[2], un[3]]),
            psi0: initial_density(flow, grid, sc.density_amplitude, sc.noise, c),
            forcing: Some(Box::new(move |x, y, t| {
                let w = 2.0 * PI * freq * t;
                [amp * w.cos() * (2.0 * PI * y).sin(), amp * w.sin() * (2.0 * PI * x).sin()]
            })),
        },
    }
}
