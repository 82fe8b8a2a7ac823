//! Scenario runner for the FENE dumbbell Navier–Stokes–Fokker–Planck solver
//! in `fenefp-core`: configuration files, the scenario library, output
//! formats and the property self-tests.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod output;
pub mod run;
pub mod scenario;
pub mod selftest;

pub use config::{load_config, parse_config, RunConfig, ScenarioKind};
pub use run::{run_scenario, RunOutcome, Verdict};
