//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit status
//! if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use fenefp::selftest::{self, Check};

fn main() -> ExitCode {
    let start = Instant::now();
    let seed = 0;
    let mut checks: Vec<Check> = Vec::new();
    let mut record = |r: anyhow::Result<Check>, id: &'static str, title: &'static str| {
        let c = r.unwrap_or_else(|e| Check { id, title, passed: false, detail: format!("error: {e:#}") });
        println!("{}", c.line());
        checks.push(c);
    };

    record(selftest::equilibrium_preservation(), "C1", "equilibrium preservation");
    match selftest::decay_runs(seed) {
        Ok(runs) => {
            record(Ok(selftest::mass_conservation(&runs.reference)), "C2", "");
            record(Ok(selftest::energy_inequality(&runs.reference)), "C3", "");
            record(Ok(selftest::exponential_decay(&runs)), "C4", "");
            record(selftest::quadrature_oracles(), "C5", "quadrature oracles");
            record(selftest::integration_by_parts(seed, 20), "C6", "integration-by-parts identity");
            record(selftest::log_sobolev_sweep(seed, 500), "C7", "logarithmic Sobolev sweep");
            record(selftest::csiszar_kullback_sweep(seed, 200), "C8", "Csiszár–Kullback sweep");
            record(selftest::smoothing_contract(seed, 50), "C9", "initial-smoothing contract");
            record(Ok(selftest::delta_robustness(&runs)), "C10", "");
        }
        Err(e) => {
            for (id, title) in [("C2", "mass conservation"), ("C3", "discrete energy inequality"), ("C4", "exponential decay bound")] {
                record(Err(anyhow::anyhow!("decay runs failed: {e:#}")), id, title);
            }
            record(selftest::quadrature_oracles(), "C5", "quadrature oracles");
            record(selftest::integration_by_parts(seed, 20), "C6", "integration-by-parts identity");
            record(selftest::log_sobolev_sweep(seed, 500), "C7", "logarithmic Sobolev sweep");
            record(selftest::csiszar_kullback_sweep(seed, 200), "C8", "Csiszár–Kullback sweep");
            record(selftest::smoothing_contract(seed, 50), "C9", "initial-smoothing contract");
            record(Err(anyhow::anyhow!("decay runs failed: {e:#}")), "C10", "δ-robustness");
        }
    }
    record(selftest::flow_invariants(seed, 100), "C11", "flow skew-symmetry and projection");

    let passed = checks.iter().filter(|c| c.passed).count();
    println!("acceptance: {passed}/{} criteria passed in {:.1?}", checks.len(), start.elapsed());
    if passed == checks.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
