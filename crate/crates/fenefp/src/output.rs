//! File formats: the tab-separated ledger, the grid description, the binary
//! checkpoint and the JSON run summary.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use fenefp_core::config_space::WeightedField;
use fenefp_core::diagnostics::EnergyLedger;
use fenefp_core::flow::VelocityField;
use fenefp_core::stepper::SystemState;
use serde::{Deserialize, Serialize};

use crate::run::{RunOutcome, Verdict};

pub const LEDGER_COLUMNS: [&str; 13] = [
    "t",
    "kinetic",
    "entropy",
    "fisher_x",
    "fisher_q",
    "free_energy",
    "energy_lhs",
    "B2",
    "rho_min",
    "rho_max",
    "psi_min",
    "fp_iters",
    "beta_saturation_fraction",
];

/// One row of the emitted ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub t: f64,
    pub kinetic: f64,
    pub entropy: f64,
    pub fisher_x: f64,
    pub fisher_q: f64,
    pub free_energy: f64,
    pub energy_lhs: f64,
    pub b2: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub psi_min: f64,
    pub fp_iters: usize,
    pub beta_saturation_fraction: f64,
}

pub fn ledger_rows(ledger: &EnergyLedger) -> Vec<LedgerRow> {
    ledger
        .records()
        .iter()
        .map(|r| LedgerRow {
            t: r.t,
            kinetic: r.kinetic,
            entropy: r.entropy,
            fisher_x: r.fisher_x,
            fisher_q: r.fisher_q,
            free_energy: r.free_energy,
            energy_lhs: r.energy_lhs,
            b2: r.b2,
            rho_min: r.rho_min,
            rho_max: r.rho_max,
            psi_min: r.psi_min,
            fp_iters: r.fixed_point_iterations,
            beta_saturation_fraction: r.saturation_fraction,
        })
        .collect()
}

/// Header plus one line per row; floats use the shortest representation
/// that parses back to the same value.
pub fn format_ledger(rows: &[LedgerRow]) -> String {
    let mut out = LEDGER_COLUMNS.join("\t");
    out.push('\n');
    for r in rows {
        let g = |v: f64| format!("{v:e}");
        let line = [
            g(r.t),
            g(r.kinetic),
            g(r.entropy),
            g(r.fisher_x),
            g(r.fisher_q),
            g(r.free_energy),
            g(r.energy_lhs),
            g(r.b2),
            g(r.rho_min),
            g(r.rho_max),
            g(r.psi_min),
            r.fp_iters.to_string(),
            g(r.beta_saturation_fraction),
        ];
        out.push_str(&line.join("\t"));
        out.push('\n');
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Ledger { line: usize, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub fn parse_ledger(text: &str) -> Result<Vec<LedgerRow>, FormatError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.split('\t').ne(LEDGER_COLUMNS.iter().copied()) {
        return Err(FormatError::Ledger { line: 1, message: "unexpected header".into() });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let err = |message: String| FormatError::Ledger { line: line_no, message };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != LEDGER_COLUMNS.len() {
            return Err(err(format!("expected {} columns, found {}", LEDGER_COLUMNS.len(), cols.len())));
        }
        let f = |i: usize| cols[i].parse::<f64>().map_err(|e| err(format!("column {}: {e}", LEDGER_COLUMNS[i])));
        rows.push(LedgerRow {
            t: f(0)?,
            kinetic: f(1)?,
            entropy: f(2)?,
            fisher_x: f(3)?,
            fisher_q: f(4)?,
            free_energy: f(5)?,
            energy_lhs: f(6)?,
            b2: f(7)?,
            rho_min: f(8)?,
            rho_max: f(9)?,
            psi_min: f(10)?,
            fp_iters: cols[11].parse().map_err(|e| err(format!("column fp_iters: {e}")))?,
            beta_saturation_fraction: f(12)?,
        });
    }
    Ok(rows)
}

pub fn emit_ledger(ledger: &EnergyLedger, path: &Path) -> Result<(), FormatError> {
    fs::write(path, format_ledger(&ledger_rows(ledger)))?;
    Ok(())
}

/// Human-readable description of the discretization of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDescription {
    pub flow: FlowDescription,
    pub configuration: ConfigDescription,
    pub time: TimeDescription,
    pub constants: ConstantsDescription,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowDescription {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub velocity_unknowns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigDescription {
    pub b: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub radii: Vec<f64>,
    pub normalizer: f64,
    pub discrete_normalizer: f64,
    pub normalization_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeDescription {
    pub dt: f64,
    pub steps: usize,
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsDescription {
    pub poincare: f64,
    pub kappa: f64,
    pub gamma0: f64,
}

pub fn describe(outcome: &RunOutcome) -> GridDescription {
    let f = &outcome.flow;
    let g = &outcome.grid;
    GridDescription {
        flow: FlowDescription { nx: f.nx(), ny: f.ny(), h: f.h(), velocity_unknowns: f.len() },
        configuration: ConfigDescription {
            b: g.b(),
            n_r: g.n_r(),
            n_theta: g.n_theta(),
            radii: g.radii().to_vec(),
            normalizer: g.normalizer(),
            discrete_normalizer: g.discrete_normalizer(),
            normalization_defect: g.normalization_defect(),
        },
        time: TimeDescription { dt: outcome.dt, steps: outcome.steps, t_final: outcome.dt * outcome.steps as f64 },
        constants: ConstantsDescription { poincare: outcome.poincare, kappa: outcome.kappa, gamma0: outcome.gamma0 },
    }
}

const CHECKPOINT_MAGIC: &[u8] = b"FENEFP-CHECKPOINT 1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    t: f64,
    n: usize,
    velocity_len: usize,
    cells: usize,
    nodes: usize,
}

/// Magic line, little-endian `u64` header length, JSON header, then the
/// velocity and density values as little-endian `f64`.
pub fn write_checkpoint<W: Write>(state: &SystemState, mut w: W) -> Result<(), FormatError> {
    let header = CheckpointHeader {
        t: state.t,
        n: state.n,
        velocity_len: state.u.data.len(),
        cells: state.psi.cells(),
        nodes: state.psi.nodes(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| FormatError::Checkpoint(e.to_string()))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in state.u.data.iter().chain(state.psi.as_slice()) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<SystemState, FormatError> {
    let bad = |m: &str| FormatError::Checkpoint(m.into());
    let mut magic = vec![0u8; CHECKPOINT_MAGIC.len()];
    r.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 20 {
        return Err(bad("header too long"));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)?;
    let h: CheckpointHeader = serde_json::from_slice(&json).map_err(|e| FormatError::Checkpoint(e.to_string()))?;
    let mut read_values = |n: usize| -> Result<Vec<f64>, FormatError> {
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
    };
    let u = read_values(h.velocity_len)?;
    let psi = read_values(h.cells * h.nodes)?;
    let psi = WeightedField::from_vec(h.cells, h.nodes, psi).map_err(|e| FormatError::Checkpoint(e.to_string()))?;
    Ok(SystemState { u: VelocityField { data: u }, psi, t: h.t, n: h.n })
}

/// JSON summary of the verdicts and headline numbers.
#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub steps: usize,
    pub passed: bool,
    pub verdicts: &'a [Verdict],
    pub max_increment: f64,
    pub mass_defect: f64,
    pub gamma0: f64,
    pub fitted_rate: Option<f64>,
}

pub fn summary(outcome: &RunOutcome) -> Summary<'_> {
    Summary {
        scenario: outcome.config.scenario.name.to_string(),
        seed: outcome.config.seed,
        dt: outcome.dt,
        steps: outcome.steps,
        passed: outcome.passed(),
        verdicts: &outcome.verdicts,
        max_increment: outcome.max_increment,
        mass_defect: outcome.mass_defect,
        gamma0: outcome.gamma0,
        fitted_rate: outcome.decay.as_ref().and_then(|d| d.fitted_rate),
    }
}

/// Writes ledger, grid description, checkpoint and summary into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<(), FormatError> {
    let o = &outcome.config.output;
    fs::create_dir_all(dir)?;
    emit_ledger(&outcome.ledger, &dir.join(&o.ledger))?;
    let grid = toml::to_string(&describe(outcome)).map_err(|e| FormatError::Checkpoint(e.to_string()))?;
    fs::write(dir.join(&o.grid), grid)?;
    if let Some(name) = &o.checkpoint {
        let file = fs::File::create(dir.join(name))?;
        let mut w = io::BufWriter::new(file);
        write_checkpoint(&outcome.final_state, &mut w)?;
        w.flush()?;
    }
    let json = serde_json::to_string_pretty(&summary(outcome)).map_err(|e| FormatError::Checkpoint(e.to_string()))?;
    fs::write(dir.join(&o.summary), json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let psi = WeightedField::from_vec(2, 3, vec![1.0, -0.0, f64::MIN_POSITIVE, 1.0 / 3.0, 2.5e300, -7.25]).unwrap();
        let st = SystemState { u: VelocityField { data: vec![0.1, -1e-310, 3.0] }, psi, t: 0.7, n: 35 };
        let mut buf = Vec::new();
        write_checkpoint(&st, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.u.data), bits(&st.u.data));
        assert_eq!(bits(back.psi.as_slice()), bits(st.psi.as_slice()));
        assert_eq!((back.t, back.n), (st.t, st.n));
        assert!(read_checkpoint(&buf[1..]).is_err());
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn ledger_text_round_trip() {
        let row = LedgerRow {
            t: 0.1,
            kinetic: 1.0 / 3.0,
            entropy: 0.0,
            fisher_x: 1e-300,
            fisher_q: 2.0,
            free_energy: 0.5,
            energy_lhs: 0.75,
            b2: 1.25,
            rho_min: 0.9999999999999999,
            rho_max: 1.0000000000000002,
            psi_min: -1e-17,
            fp_iters: 4,
            beta_saturation_fraction: 0.0,
        };
        let text = format_ledger(&[row, row]);
        let back = parse_ledger(&text).unwrap();
        assert_eq!(back, vec![row, row]);
        assert_eq!(format_ledger(&back), text);
        assert!(parse_ledger("t\tkinetic\n").is_err());
    }
}
