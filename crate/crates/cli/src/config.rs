//! Experiment configuration. Every field has a default, so an empty file
//! (or no file) is a valid configuration.

use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub problem: ProblemConfig,
    pub forcing: ForcingConfig,
    pub energy: EnergyConfig,
    pub sharpness: SharpnessConfig,
    pub asymptotic: AsymptoticConfig,
    pub delay: DelayConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20240607,
            problem: ProblemConfig::default(),
            forcing: ForcingConfig::default(),
            energy: EnergyConfig::default(),
            sharpness: SharpnessConfig::default(),
            asymptotic: AsymptoticConfig::default(),
            delay: DelayConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    /// `heat`, `variable-b`, `drift` or `full`.
    pub preset: String,
    pub dim: usize,
    /// `[low, high]` per axis; `(-pi, pi)` when omitted.
    pub extents: Option<Vec<[f64; 2]>>,
    /// Nodes per axis, boundary included.
    pub nodes: usize,
    pub horizon: f64,
    pub steps: usize,
    pub theta: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            preset: "heat".into(),
            dim: 1,
            extents: None,
            nodes: 401,
            horizon: 1.0,
            steps: 2000,
            theta: 0.5,
        }
    }
}

impl ProblemConfig {
    pub fn extents(&self) -> Vec<(f64, f64)> {
        match &self.extents {
            Some(e) => e.iter().map(|a| (a[0], a[1])).collect(),
            None => vec![(-PI, PI); self.dim],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingKind {
    /// `amplitude phi_m(x) e^{rate t}`, where `phi_m` is the product over axes of
    /// `sin(2 pi m (x - low) / L)`: `sin(m x)` up to sign on `(-pi, pi)`.
    Mode,
    /// `amplitude phi_m(x)`, constant in time.
    Constant,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingConfig {
    pub kind: ForcingKind,
    pub m: u32,
    /// Growth rate; the Laplacian eigenvalue of `phi_m` when omitted.
    pub rate: Option<f64>,
    pub amplitude: f64,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        Self {
            kind: ForcingKind::Mode,
            m: 1,
            rate: None,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub shifts: Vec<f64>,
    pub m_weights: Vec<f64>,
    pub epsilon: f64,
    /// Extremal modes `phi_m(x) e^{m^2 t}` in the probe family (also used by
    /// `delay` to choose the shift).
    pub modes: Vec<u32>,
    /// Adds a constant mode, a ramp, a bump and a seeded random forcing.
    pub extra_probes: bool,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            shifts: vec![0.0, 1.0, 2.0, 4.0],
            m_weights: vec![0.0],
            epsilon: 0.05,
            modes: (1..=8).collect(),
            extra_probes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpnessConfig {
    pub modes: Vec<u32>,
    pub shift: f64,
    pub horizon: f64,
    pub dt: f64,
    pub i_max: u32,
    /// Time steps per row of the initial-time table.
    pub initial_steps: usize,
}

impl Default for SharpnessConfig {
    fn default() -> Self {
        Self {
            modes: (1..=8).collect(),
            shift: 0.0,
            horizon: 1.0,
            dt: 5e-4,
            i_max: 5,
            initial_steps: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticConfig {
    /// Evaluates at `t = 2^{-j}` for `j = 1..=j_max`.
    pub j_max: u32,
    /// Time steps of each solve on `[0, 2^{-j}]`.
    pub steps: usize,
}

impl Default for AsymptoticConfig {
    fn default() -> Self {
        Self {
            j_max: 10,
            steps: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TauTable {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Default for TauTable {
    fn default() -> Self {
        Self {
            times: vec![0.0],
            values: vec![0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayModeName {
    General,
    Monotone,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayConfig {
    /// Constant drift of the delayed term; one value applies to every axis.
    pub beta: Vec<f64>,
    pub beta_bar: f64,
    /// `none`, `half`, `frozen`, `staircase(k)` or `custom` (uses `table`).
    pub tau: String,
    pub table: Option<TauTable>,
    pub mode: DelayModeName,
    pub theta: f64,
    pub delta_star: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub norm_trials: usize,
    pub norm_iterations: usize,
}

impl Default for DelayConfig {
    fn default() -> Self {
        Self {
            beta: vec![0.5],
            beta_bar: 0.0,
            tau: "half".into(),
            table: None,
            mode: DelayModeName::General,
            theta: 0.0,
            delta_star: None,
            tol: 1e-10,
            max_iter: 200,
            norm_trials: 3,
            norm_iterations: 30,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.problem;
        p.preset
            .parse::<pel_core::coefficients::Preset>()
            .map_err(|e| invalid(e.to_string()))?;
        if !(p.dim == 1 || p.dim == 2) {
            return Err(invalid(format!("problem.dim = {} must be 1 or 2", p.dim)));
        }
        if let Some(e) = &p.extents {
            if e.len() != p.dim {
                return Err(invalid(
                    "problem.extents needs one [low, high] pair per axis",
                ));
            }
            if e.iter().any(|a| !(a[1] > a[0])) {
                return Err(invalid("problem.extents must have low < high"));
            }
        }
        if p.nodes < 3 {
            return Err(invalid("problem.nodes must be >= 3"));
        }
        positive("problem.horizon", p.horizon)?;
        if p.steps == 0 {
            return Err(invalid("problem.steps must be >= 1"));
        }
        if !(0.5..=1.0).contains(&p.theta) {
            return Err(invalid("problem.theta must lie in [0.5, 1]"));
        }
        if self.forcing.m == 0 && self.forcing.kind != ForcingKind::Zero {
            return Err(invalid("forcing.m must be >= 1"));
        }
        let e = &self.energy;
        if e.shifts.is_empty() || e.shifts.iter().any(|k| !(*k >= 0.0)) {
            return Err(invalid("energy.shifts must be a non-empty list of K >= 0"));
        }
        if e.m_weights.is_empty() || e.m_weights.iter().any(|m| !(*m >= 0.0)) {
            return Err(invalid(
                "energy.m_weights must be a non-empty list of M >= 0",
            ));
        }
        positive("energy.epsilon", e.epsilon)?;
        if e.modes.contains(&0) {
            return Err(invalid("energy.modes must be >= 1"));
        }
        let s = &self.sharpness;
        if s.modes.contains(&0) {
            return Err(invalid("sharpness.modes must be >= 1"));
        }
        if !(s.shift >= 0.0) {
            return Err(invalid("sharpness.shift must be >= 0"));
        }
        positive("sharpness.horizon", s.horizon)?;
        positive("sharpness.dt", s.dt)?;
        if s.initial_steps == 0 {
            return Err(invalid("sharpness.initial_steps must be >= 1"));
        }
        if self.asymptotic.j_max == 0 || self.asymptotic.j_max > 30 || self.asymptotic.steps == 0 {
            return Err(invalid(
                "asymptotic.j_max must lie in 1..=30 and asymptotic.steps >= 1",
            ));
        }
        let d = &self.delay;
        if d.beta.is_empty() || d.beta.len() > 2 {
            return Err(invalid("delay.beta needs one or two components"));
        }
        positive("delay.tol", d.tol)?;
        if d.max_iter == 0 || d.norm_trials == 0 || d.norm_iterations == 0 {
            return Err(invalid(
                "delay.max_iter, norm_trials and norm_iterations must be >= 1",
            ));
        }
        if d.tau.trim() == "custom" && d.table.is_none() {
            return Err(invalid("delay.tau = \"custom\" needs a [delay.table]"));
        }
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must be positive")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(
            ExperimentConfig::from_toml("").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn sections_parse() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            seed = 3
            [problem]
            preset = "drift"
            nodes = 101
            [forcing]
            kind = "constant"
            m = 2
            [delay]
            beta = [0.25]
            tau = "staircase(8)"
            mode = "monotone"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.problem.preset, "drift");
        assert_eq!(cfg.forcing.kind, ForcingKind::Constant);
        assert_eq!(cfg.delay.mode, DelayModeName::Monotone);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "[problem]\npreset = \"wave\"",
            "[problem]\nnodes = 2",
            "[problem]\ntheta = 0.2",
            "[energy]\nshifts = []",
            "[delay]\ntau = \"custom\"",
            "[problem]\nunknown = 1",
            "not toml at all",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml(text), Err(CliError::Config(_))),
                "{text}"
            );
        }
    }
}
