//! Scenario configuration: TOML with one table per concern. Unknown keys are
//! rejected, and every value is validated before anything is simulated.

use std::path::Path;

use backstep_core::autodiff::DEFAULT_SMOOTHING;
use backstep_core::backstep::{Backstepping, ControllerMode, DesignParams};
use backstep_core::missile::{MissileDesign, MissileError, MissileLoop, MissileParams};
use backstep_core::plant::{OracleConstants, ThetaComponent, UncertaintyProfile};
use backstep_core::scenarios::{self, NumericScenario};
use backstep_core::simkit::{ClosedLoop, IntegratorSettings, PlantLoop};
use backstep_core::verify::{diagonal_links, AuditBox, GainLink, MonteCarloSpec, Tolerances};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config error at `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub x: Vec<f64>,
    /// Missile only: read `x` as (deg, deg/s, deg).
    #[serde(default)]
    pub angles_in_degrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
    pub k0: Vec<f64>,
    #[serde(default)]
    pub deadzone: f64,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
}

fn default_smoothing() -> f64 {
    DEFAULT_SMOOTHING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySection {
    pub theta: Vec<ThetaComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub tol_x: f64,
    pub tol_k: f64,
    pub tail_fraction: f64,
    pub signal_bound: f64,
    pub barbalat_ratio: f64,
    pub quadrature_rel: f64,
    pub budget_tolerance: f64,
    pub dominance_samples: usize,
    pub dominance_z: f64,
    pub dominance_k: (f64, f64),
}

impl Default for VerifySection {
    fn default() -> Self {
        let t = Tolerances::default();
        Self {
            tol_x: t.tol_x,
            tol_k: t.tol_k,
            tail_fraction: t.tail_fraction,
            signal_bound: t.signal_bound,
            barbalat_ratio: t.barbalat_ratio,
            quadrature_rel: t.quadrature_rel,
            budget_tolerance: 1e-6,
            dominance_samples: 10_000,
            dominance_z: 5.0,
            dominance_k: (0.01, 10.0),
        }
    }
}

impl VerifySection {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            tol_x: self.tol_x,
            tol_k: self.tol_k,
            tail_fraction: self.tail_fraction,
            signal_bound: self.signal_bound,
            barbalat_ratio: self.barbalat_ratio,
            quadrature_rel: self.quadrature_rel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub x0_box: Vec<(f64, f64)>,
    /// Defaults to the declared boxes of `uncertainty.theta`.
    #[serde(default)]
    pub theta_box: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_omega")]
    pub omega: (f64, f64),
}

fn default_runs() -> usize {
    100
}

fn default_omega() -> (f64, f64) {
    (0.1, 2.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSection {
    /// Negate the applied control; for checking that verification fails.
    #[serde(default)]
    pub flip_control_sign: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: ControllerMode,
    pub integrator: IntegratorSettings,
    pub initial: InitialCondition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missile: Option<MissileParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missile_design: Option<MissileDesign>,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub montecarlo: Option<MonteCarloSection>,
    #[serde(default)]
    pub fault: FaultSection,
}

/// A configured closed loop ready to integrate.
pub enum Built {
    Numeric(NumericRun),
    Missile(MissileRun),
}

pub struct NumericRun {
    pub scenario: NumericScenario,
    pub controller: Backstepping,
    pub system: PlantLoop,
    pub oracle: OracleConstants,
    pub theta_box: Vec<(f64, f64)>,
}

pub struct MissileRun {
    pub system: MissileLoop,
}

impl Built {
    pub fn system(&self) -> &dyn ClosedLoop {
        match self {
            Built::Numeric(r) => &r.system,
            Built::Missile(r) => &r.system,
        }
    }

    pub fn k0(&self) -> Vec<f64> {
        match self {
            Built::Numeric(r) => r.controller.params().k0.clone(),
            Built::Missile(r) => vec![r.system.design.k20, r.system.design.k30],
        }
    }

    pub fn links(&self) -> Vec<GainLink> {
        match self {
            Built::Numeric(r) => diagonal_links(&r.controller.params().gamma),
            // k₂ is driven by z₂; k₃ by ψ₃²z₃², which dominates z₃².
            Built::Missile(r) => vec![
                GainLink {
                    k_index: 0,
                    z_index: 1,
                    gamma: r.system.design.gamma2,
                },
                GainLink {
                    k_index: 1,
                    z_index: 2,
                    gamma: r.system.design.gamma3,
                },
            ],
        }
    }

    pub fn law_description(&self) -> String {
        match self {
            Built::Numeric(r) => r.controller.law_description(),
            Built::Missile(_) => {
                "three-step roll autopilot; delta_xc = -mu3 k3 psi3^2 z3; k2' = gamma2 z2^2; k3' = gamma3 psi3^2 z3^2"
                    .into()
            }
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// Canonical JSON form used for content addressing.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config is serializable")
    }

    /// Initial state in internal units (radians for the missile).
    pub fn x0(&self) -> Vec<f64> {
        if self.initial.angles_in_degrees {
            self.initial.x.iter().map(|v| v.to_radians()).collect()
        } else {
            self.initial.x.clone()
        }
    }

    fn design_params(&self) -> Result<DesignParams, ConfigError> {
        let d = self
            .design
            .as_ref()
            .ok_or_else(|| invalid("design", "section required for this scenario"))?;
        Ok(DesignParams {
            mu: d.mu.clone(),
            gamma: d.gamma.clone(),
            k0: d.k0.clone(),
            deadzone: d.deadzone,
            smoothing: d.smoothing,
            mode: self.mode,
        })
    }

    fn theta_profile(&self, n: usize) -> Result<UncertaintyProfile, ConfigError> {
        let u = self
            .uncertainty
            .as_ref()
            .ok_or_else(|| invalid("uncertainty.theta", "section required for this scenario"))?;
        if u.theta.len() != n {
            return Err(invalid(
                "uncertainty.theta",
                format!("expected {n} components, got {}", u.theta.len()),
            ));
        }
        UncertaintyProfile::new(u.theta.clone()).map_err(|e| invalid("uncertainty.theta", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.integrator
            .validate()
            .map_err(|e| invalid("integrator", e.to_string()))?;
        self.verify
            .tolerances()
            .validate()
            .map_err(|e| invalid("verify", e.to_string()))?;
        if !(self.verify.budget_tolerance >= 0.0) {
            return Err(invalid("verify.budget_tolerance", "must be ≥ 0"));
        }
        let (klo, khi) = self.verify.dominance_k;
        if !(self.verify.dominance_z > 0.0 && klo > 0.0 && klo <= khi) {
            return Err(invalid("verify.dominance_k", "need dominance_z > 0 and 0 < k_lo ≤ k_hi"));
        }
        if self.initial.x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("initial.x", "values must be finite"));
        }
        match self.scenario.as_str() {
            scenarios::NUMERIC_2D => {
                for (key, present) in [
                    ("missile", self.missile.is_some()),
                    ("missile_design", self.missile_design.is_some()),
                ] {
                    if present {
                        return Err(invalid(key, "only valid for the stt-missile scenario"));
                    }
                }
                if self.initial.x.len() != 2 {
                    return Err(invalid("initial.x", "numeric-2d needs 2 states"));
                }
                if self.initial.angles_in_degrees {
                    return Err(invalid("initial.angles_in_degrees", "only valid for stt-missile"));
                }
                self.design_params()?.validate(2).map_err(|e| match e {
                    backstep_core::backstep::BackstepError::InvalidParam { key, reason } => {
                        invalid(format!("design.{key}"), reason)
                    }
                    other => invalid("design", other.to_string()),
                })?;
                self.theta_profile(2)?;
                if let Some(mc) = &self.montecarlo {
                    self.mc_spec(mc, 2)?;
                }
            }
            scenarios::STT_MISSILE => {
                for (key, present) in [
                    ("design", self.design.is_some()),
                    ("uncertainty", self.uncertainty.is_some()),
                    ("montecarlo", self.montecarlo.is_some()),
                ] {
                    if present {
                        return Err(invalid(key, "not used by the stt-missile scenario"));
                    }
                }
                if self.mode == ControllerMode::Auto {
                    return Err(invalid("mode", "stt-missile has a closed-form design only"));
                }
                if self.initial.x.len() != 3 {
                    return Err(invalid("initial.x", "stt-missile needs (roll, roll rate, deflection)"));
                }
                let params = self.missile.clone().unwrap_or_default();
                let design = self.missile_design.clone().unwrap_or_default();
                params.validate().map_err(|e| missile_key("missile", e))?;
                design.validate().map_err(|e| missile_key("missile_design", e))?;
            }
            other => {
                return Err(invalid(
                    "scenario",
                    format!("unknown scenario `{other}`; registered: {:?}", scenarios::registered()),
                ))
            }
        }
        Ok(())
    }

    fn mc_spec(&self, mc: &MonteCarloSection, n: usize) -> Result<MonteCarloSpec, ConfigError> {
        if mc.runs == 0 {
            return Err(invalid("montecarlo.runs", "must be ≥ 1"));
        }
        if mc.x0_box.len() != n || mc.x0_box.iter().any(|&(lo, hi)| !(lo <= hi)) {
            return Err(invalid("montecarlo.x0_box", format!("need {n} intervals with lo ≤ hi")));
        }
        let declared = self.theta_profile(n)?.bounds();
        let theta_box = mc.theta_box.clone().unwrap_or_else(|| declared.clone());
        if theta_box.len() != n {
            return Err(invalid("montecarlo.theta_box", format!("need {n} intervals")));
        }
        for (j, (&(lo, hi), &(dlo, dhi))) in theta_box.iter().zip(&declared).enumerate() {
            if !(lo <= hi && lo >= dlo && hi <= dhi) {
                return Err(invalid(
                    format!("montecarlo.theta_box[{j}]"),
                    format!("[{lo}, {hi}] must lie inside the declared box [{dlo}, {dhi}]"),
                ));
            }
        }
        if !(mc.omega.0 > 0.0 && mc.omega.0 <= mc.omega.1) {
            return Err(invalid("montecarlo.omega", "need 0 < lo ≤ hi"));
        }
        Ok(MonteCarloSpec {
            runs: mc.runs,
            seed: self.seed,
            x0_box: mc.x0_box.clone(),
            theta_box,
            omega: mc.omega,
        })
    }

    /// Monte-Carlo spec, with `runs` overriding the configured count.
    pub fn montecarlo_spec(&self, runs: Option<usize>) -> Result<MonteCarloSpec, ConfigError> {
        let mut mc = self
            .montecarlo
            .clone()
            .ok_or_else(|| invalid("montecarlo", "section required for a sweep"))?;
        if let Some(r) = runs {
            mc.runs = r;
        }
        self.mc_spec(&mc, 2)
    }

    pub fn audit_box(&self, theta_box: Vec<(f64, f64)>) -> AuditBox {
        AuditBox {
            z: self.verify.dominance_z,
            k: self.verify.dominance_k,
            theta: theta_box,
        }
    }

    pub fn build(&self) -> Result<Built, ConfigError> {
        self.validate()?;
        match self.scenario.as_str() {
            scenarios::NUMERIC_2D => {
                let scenario = scenarios::numeric_2d();
                let controller = scenario
                    .controller(self.design_params()?)
                    .map_err(|e| invalid("design", e.to_string()))?;
                let profile = self.theta_profile(2)?;
                let theta_box = profile.bounds();
                let oracle = scenarios::numeric_2d_oracle(&theta_box)
                    .map_err(|e| invalid("uncertainty.theta", e.to_string()))?;
                let mut system = PlantLoop::new(scenario.plant.clone(), profile, controller.clone());
                system.sign_flip = self.fault.flip_control_sign;
                Ok(Built::Numeric(NumericRun {
                    scenario,
                    controller,
                    system,
                    oracle,
                    theta_box,
                }))
            }
            _ => {
                let params = self.missile.clone().unwrap_or_default();
                let design = self.missile_design.clone().unwrap_or_default();
                let mut system = MissileLoop::new(params, design).map_err(|e| missile_key("missile", e))?;
                system.sign_flip = self.fault.flip_control_sign;
                Ok(Built::Missile(MissileRun { system }))
            }
        }
    }
}

fn missile_key(section: &str, e: MissileError) -> ConfigError {
    match e {
        MissileError::InvalidParam { key, reason } => invalid(format!("{section}.{key}"), reason),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
scenario = "numeric-2d"

[integrator]
horizon = 1.0
step = 0.001

[initial]
x = [-2.0, 3.0]

[design]
mu = [0.2, 0.2]
gamma = [0.2, 0.2]
k0 = [0.01, 0.01]

[[uncertainty.theta]]
kind = "constant"
value = 1.0
lo = 1.0
hi = 1.0

[[uncertainty.theta]]
kind = "constant"
value = 2.0
lo = 2.0
hi = 2.0
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.mode, ControllerMode::Paper);
        assert_eq!(cfg.integrator.decimation, 10);
        assert!(matches!(cfg.build().unwrap(), Built::Numeric(_)));
    }

    #[test]
    fn negative_mu_names_its_key() {
        let text = MINIMAL.replace("mu = [0.2, 0.2]", "mu = [-1.0, 0.2]");
        match RunConfig::from_toml(&text) {
            Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, "design.mu[0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("step = 0.001", "step = 0.001\nstepsize = 2");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("stepsize"), "{err}");
    }

    #[test]
    fn theta_outside_box_names_component() {
        let text = MINIMAL.replace(
            "kind = \"constant\"\nvalue = 2.0\nlo = 2.0",
            "kind = \"sinusoid\"\nmean = 2.0\namplitude = 0.5\nomega = 1.0\nlo = 1.8",
        );
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("component 1"), "{err}");
    }

    #[test]
    fn canonical_form_round_trips() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.canonical(), again.canonical());
    }
}
