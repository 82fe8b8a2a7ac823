//! Run configuration: TOML schema, defaults and validation.

use std::fmt;
use std::path::PathBuf;

use fenefp_core::kinetic::{ChainGeometry, RouseMatrix};
use serde::{Deserialize, Serialize};

/// Scenario library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Equilibrium,
    Decay,
    Couette,
    Forced,
}

impl ScenarioKind {
    pub fn is_forced(self) -> bool {
        matches!(self, Self::Couette | Self::Forced)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Equilibrium => "equilibrium",
            Self::Decay => "decay",
            Self::Couette => "couette",
            Self::Forced => "forced",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub name: ScenarioKind,
    /// Amplitude of the initial streamfunction `A sin²(πx) sin²(πy)`.
    pub velocity_amplitude: f64,
    /// `a` in `ψ̂₀ = 1 + a q_x / √b`.
    pub density_amplitude: f64,
    /// Size of the seeded random perturbation added to the initial data.
    pub noise: f64,
    /// Body force amplitude (couette, forced).
    pub forcing_amplitude: f64,
    /// Temporal frequency of the forced scenario.
    pub forcing_frequency: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            name: ScenarioKind::Decay,
            velocity_amplitude: 0.1,
            density_amplitude: 0.1,
            noise: 0.0,
            forcing_amplitude: 1.0,
            forcing_frequency: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    /// Number of springs `K`.
    pub springs: usize,
    /// Space dimension `d`.
    pub dim: usize,
    /// FENE extensibility `b`.
    pub b: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { springs: 1, dim: 2, b: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub nu: f64,
    pub k: f64,
    pub lambda: f64,
    pub epsilon: f64,
    /// Row-major Rouse matrix; the chain default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouse: Option<Vec<f64>>,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self { nu: 1.0, k: 1.0, lambda: 0.5, epsilon: 0.1, rouse: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub t_final: f64,
    /// Cut-off level `L`.
    pub l: f64,
    /// Regularization `δ`.
    pub delta: f64,
    /// Constant of the rule `Δt ≤ C0 / (L log L)`.
    pub c0: f64,
    /// Explicit time step; derived from `c0` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub dt_floor: f64,
    /// Cut-off `Λ` of the initial-density smoothing; `L` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing_cutoff: Option<f64>,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    pub linear_rtol: f64,
    pub clip_renormalize: bool,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            t_final: 2.0,
            l: 100.0,
            delta: 1e-4,
            c0: 10.0,
            dt: None,
            dt_floor: 1e-8,
            smoothing_cutoff: None,
            fixed_point_tol: 1e-10,
            fixed_point_max_iter: 50,
            linear_rtol: 1e-12,
            clip_renormalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Flow cells per side of the unit square.
    pub nx: usize,
    pub n_r: usize,
    pub n_theta: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { nx: 16, n_r: 16, n_theta: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    /// Relative tolerance of the energy inequality.
    pub energy_tol: f64,
    /// Relative tolerance of the decay bound.
    pub decay_tol: f64,
    /// Absolute tolerance of the configuration mass.
    pub mass_tol: f64,
    /// Slack allowed in the step-to-step free energy decrease.
    pub monotonicity_tol: f64,
    /// Absolute floor added to the relative tolerances, for runs whose
    /// bounds are zero.
    pub absolute_tol: f64,
    /// Check the logarithmic Sobolev inequality at every cell and step.
    pub lsi_every_step: bool,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self { energy_tol: 1e-6, decay_tol: 1e-3, mass_tol: 1e-8, monotonicity_tol: 1e-10, absolute_tol: 1e-14, lsi_every_step: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub ledger: String,
    pub grid: String,
    pub checkpoint: Option<String>,
    pub summary: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            ledger: "ledger.tsv".into(),
            grid: "grid.toml".into(),
            checkpoint: Some("final.ckpt".into()),
            summary: "summary.json".into(),
        }
    }
}

/// Complete run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub scenario: ScenarioSection,
    pub geometry: GeometrySection,
    pub physics: PhysicsSection,
    pub scheme: SchemeSection,
    pub grid: GridSection,
    pub diagnostics: DiagnosticsSection,
    pub output: OutputSection,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

/// Validated configuration and the non-fatal findings about it.
#[derive(Debug, Clone)]
pub struct Checked {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

impl RunConfig {
    /// Reference decay run on a 16² flow grid and a 16×16 configuration grid.
    pub fn reference_decay() -> Self {
        let mut c = Self::default();
        c.scheme.dt = Some(0.02);
        c
    }

    pub fn reference_equilibrium() -> Self {
        let mut c = Self::reference_decay();
        c.scenario.name = ScenarioKind::Equilibrium;
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    /// Time step and step count implied by the scheme section.
    pub fn time_grid(&self) -> Result<(f64, usize), String> {
        let s = &self.scheme;
        match s.dt {
            Some(dt) => {
                if !(dt > 0.0) || !(s.t_final > 0.0) {
                    return Err("Δt and T must be positive".into());
                }
                let n = (s.t_final / dt).round().max(1.0) as usize;
                if ((n as f64) * dt - s.t_final).abs() > 1e-9 * s.t_final {
                    return Err(format!("T = {} is not a multiple of Δt = {dt}", s.t_final));
                }
                Ok((s.t_final / n as f64, n))
            }
            None => fenefp_core::stepper::dt_schedule(s.l, s.c0, s.t_final, s.dt_floor).map_err(|e| e.to_string()),
        }
    }

    pub fn smoothing_cutoff(&self) -> f64 {
        self.scheme.smoothing_cutoff.unwrap_or(self.scheme.l)
    }

    pub fn rouse(&self) -> Result<RouseMatrix, String> {
        match &self.physics.rouse {
            Some(a) => RouseMatrix::new(a.clone(), self.geometry.springs).map_err(|e| e.to_string()),
            None => Ok(RouseMatrix::default_for(self.geometry.springs)),
        }
    }

    /// Checks every constraint. In strict mode, findings that are otherwise
    /// warnings become violations.
    pub fn validate(self, strict: bool) -> Result<Checked, ConfigError> {
        let mut errors = Vec::new();
        let mut warnings = Vec::new();
        let g = &self.geometry;
        if let Err(e) = ChainGeometry::dumbbell(g.dim, g.b) {
            errors.push(format!("geometry: {e}"));
        }
        if g.springs != 1 || g.dim != 2 {
            errors.push(format!(
                "geometry: only K = 1, d = 2 is discretized (got K = {}, d = {})",
                g.springs, g.dim
            ));
        }
        let p = &self.physics;
        for (name, v) in [("nu", p.nu), ("k", p.k), ("lambda", p.lambda), ("epsilon", p.epsilon)] {
            if !(v > 0.0) || !v.is_finite() {
                errors.push(format!("physics: {name} = {v} must be positive"));
            }
        }
        if let Err(e) = self.rouse() {
            errors.push(format!("physics: {e}"));
        }
        let s = &self.scheme;
        if !(s.l > 1.0) || !(s.delta > 0.0 && s.delta < 1.0) {
            errors.push(format!("scheme: cut-off levels need 0 < δ < 1 < L (δ = {}, L = {})", s.delta, s.l));
        }
        if !(s.l > std::f64::consts::E) {
            errors.push(format!("scheme: L = {} must exceed e for the rule Δt ≤ C0/(L log L)", s.l));
        }
        if !(s.c0 > 0.0) {
            errors.push("scheme: c0 must be positive".into());
        }
        if !(s.fixed_point_tol > 0.0) || s.fixed_point_max_iter == 0 || !(s.linear_rtol > 0.0) {
            errors.push("scheme: solver tolerances and iteration limits must be positive".into());
        }
        if let Some(lam) = s.smoothing_cutoff {
            if !(lam > 1.0) {
                errors.push(format!("scheme: smoothing cut-off Λ = {lam} must exceed 1"));
            }
        }
        match self.time_grid() {
            Ok((dt, _)) => {
                let limit = s.c0 / (s.l * s.l.ln());
                if s.l > std::f64::consts::E && dt > limit * (1.0 + 1e-12) {
                    let msg = format!("scheme: Δt = {dt} exceeds C0/(L log L) = {limit}");
                    if strict {
                        errors.push(msg);
                    } else {
                        warnings.push(msg);
                    }
                }
                if dt < s.dt_floor {
                    errors.push(format!("scheme: Δt = {dt} is below the floor {}", s.dt_floor));
                }
            }
            Err(e) => errors.push(format!("scheme: {e}")),
        }
        let gr = &self.grid;
        if gr.nx < 2 {
            errors.push("grid: nx must be at least 2".into());
        }
        if gr.n_r < 8 || gr.n_theta < 8 {
            errors.push("grid: n_r and n_theta must be at least 8".into());
        }
        let sc = &self.scenario;
        if !(sc.noise >= 0.0) {
            errors.push("scenario: noise must be nonnegative".into());
        }
        if !(sc.density_amplitude.abs() + sc.noise < 1.0) {
            errors.push("scenario: |density_amplitude| + noise must be below 1 to keep ψ̂₀ positive".into());
        }
        for (name, v) in [("velocity_amplitude", sc.velocity_amplitude), ("forcing_amplitude", sc.forcing_amplitude), ("forcing_frequency", sc.forcing_frequency)] {
            if !v.is_finite() {
                errors.push(format!("scenario: {name} must be finite"));
            }
        }
        let d = &self.diagnostics;
        if !(d.energy_tol >= 0.0 && d.decay_tol >= 0.0 && d.mass_tol >= 0.0 && d.monotonicity_tol >= 0.0 && d.absolute_tol >= 0.0) {
            errors.push("diagnostics: tolerances must be nonnegative".into());
        }
        if errors.is_empty() {
            Ok(Checked { config: self, warnings })
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }
}

/// Parses a TOML document; missing keys take their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    Ok(toml::from_str(text)?)
}

/// Parses and validates.
pub fn load_config(text: &str, strict: bool) -> Result<Checked, ConfigError> {
    parse_config(text)?.validate(strict)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_decay_config_fills_defaults() {
        let c = load_config("[scenario]\nname = \"decay\"\n", false).unwrap().config;
        assert_eq!(c.geometry.b, 4.0);
        assert_eq!(c.grid.nx, 16);
        let (dt, n) = c.time_grid().unwrap();
        assert!(dt <= 10.0 / (100.0 * 100f64.ln()));
        assert!((dt * n as f64 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_b() {
        let err = load_config("[geometry]\nb = 2.0\n", false).unwrap_err().to_string();
        assert!(err.contains("γ = b/2 must exceed 1"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(matches!(parse_config("[physics]\nmu = 1.0\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_config("colour = 1\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn large_step_warns_or_fails() {
        let text = "[scheme]\ndt = 0.1\nt_final = 1.0\n";
        let ok = load_config(text, false).unwrap();
        assert_eq!(ok.warnings.len(), 1);
        let err = load_config(text, true).unwrap_err().to_string();
        assert!(err.contains("C0/(L log L)"));
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::reference_decay();
        c.physics.rouse = Some(vec![1.0]);
        c.scenario.name = ScenarioKind::Forced;
        c.seed = 17;
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
        let d = RunConfig::default();
        assert_eq!(parse_config(&d.to_toml()).unwrap(), d);
    }

    #[test]
    fn incommensurate_step_rejected() {
        assert!(load_config("[scheme]\ndt = 0.03\nt_final = 1.0\n", false).is_err());
    }
}
