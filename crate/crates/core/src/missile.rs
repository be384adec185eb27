//! Roll channel of an axially symmetric skid-to-turn missile with a
//! first-order aileron actuator, and its three-step adaptive autopilot.
//!
//! ```text
//! γ̇  = ωx
//! ω̇x = ρ·V(t)²·s·l·m(t) / (2·Jx) · δx
//! δ̇x = (δxc − δx) / τa
//! ```
//!
//! All angles are radians internally.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::ThetaComponent;
use crate::simkit::{ClosedLoop, ColumnLabels, Observation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MissileError {
    #[error("invalid missile parameter {key}: {reason}")]
    InvalidParam { key: &'static str, reason: String },
}

/// Airframe, actuator and flight-condition data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissileParams {
    /// Reference area, m².
    pub s: f64,
    /// Reference length, m.
    pub l: f64,
    /// Roll inertia, kg·m².
    pub jx: f64,
    /// Actuator time constant, s.
    pub tau_a: f64,
    /// Air density, kg/m³.
    pub rho_air: f64,
    /// Speed profile V(t), m/s.
    pub speed: ThetaComponent,
    /// Roll-moment slope m(t), 1/rad.
    pub mx_slope: ThetaComponent,
}

impl Default for MissileParams {
    fn default() -> Self {
        Self {
            s: 0.42,
            l: 0.68,
            jx: 100.0,
            tau_a: 0.01,
            rho_air: 0.7361,
            speed: ThetaComponent::Sinusoid {
                mean: 200.0,
                amplitude: 20.0,
                omega: 2.0,
                phase: std::f64::consts::FRAC_PI_2,
                lo: 180.0,
                hi: 220.0,
            },
            mx_slope: ThetaComponent::Sinusoid {
                mean: 2.12,
                amplitude: 0.424,
                omega: 1.0,
                phase: 0.0,
                lo: 1.696,
                hi: 2.544,
            },
        }
    }
}

impl MissileParams {
    pub fn validate(&self) -> Result<(), MissileError> {
        for (key, v) in [
            ("s", self.s),
            ("l", self.l),
            ("jx", self.jx),
            ("tau_a", self.tau_a),
            ("rho_air", self.rho_air),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MissileError::InvalidParam {
                    key,
                    reason: format!("must be > 0, got {v}"),
                });
            }
        }
        for (key, c) in [("speed", &self.speed), ("mx_slope", &self.mx_slope)] {
            let (lo, hi) = c.bounds();
            let (min, max) = c.range();
            if !(min > 0.0) {
                return Err(MissileError::InvalidParam {
                    key,
                    reason: format!("profile must stay positive, reaches {min}"),
                });
            }
            if min < lo || max > hi {
                return Err(MissileError::InvalidParam {
                    key,
                    reason: format!("profile range [{min}, {max}] leaves its box [{lo}, {hi}]"),
                });
            }
        }
        Ok(())
    }

    /// `ρV²sl·m / (2Jx)` at time `t`: the gain from `δx` to `ω̇x`.
    pub fn moment_gain(&self, t: f64) -> f64 {
        let v = self.speed.eval(t);
        self.rho_air * v * v * self.s * self.l * self.mx_slope.eval(t) / (2.0 * self.jx)
    }
}

/// `ξ(δx) = constant + quadratic·δx²`, the known shape of the moment-slope
/// upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XiProfile {
    pub constant: f64,
    #[serde(default)]
    pub quadratic: f64,
}

impl XiProfile {
    pub fn eval(&self, delta: f64) -> f64 {
        self.constant + self.quadratic * delta * delta
    }
}

impl Default for XiProfile {
    fn default() -> Self {
        Self {
            constant: 1.0,
            quadratic: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissileDesign {
    pub k1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub k20: f64,
    pub k30: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub xi: XiProfile,
}

impl Default for MissileDesign {
    fn default() -> Self {
        Self {
            k1: 5.0,
            mu2: 0.5,
            mu3: 0.5,
            gamma2: 0.1,
            gamma3: 0.1,
            k20: 0.1,
            k30: 0.1,
            epsilon: 0.1,
            xi: XiProfile::default(),
        }
    }
}

impl MissileDesign {
    pub fn validate(&self) -> Result<(), MissileError> {
        for (key, v) in [
            ("k1", self.k1),
            ("mu2", self.mu2),
            ("mu3", self.mu3),
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
            ("k20", self.k20),
            ("k30", self.k30),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MissileError::InvalidParam {
                    key,
                    reason: format!("must be > 0, got {v}"),
                });
            }
        }
        if !(self.k1 - 0.75 * self.epsilon > 0.0) {
            return Err(MissileError::InvalidParam {
                key: "k1",
                reason: format!("need k1 − 3ε/4 > 0, got k1={} ε={}", self.k1, self.epsilon),
            });
        }
        if !(self.xi.constant > 0.0 && self.xi.quadratic >= 0.0) {
            return Err(MissileError::InvalidParam {
                key: "xi",
                reason: "ξ must be positive: constant > 0, quadratic ≥ 0".into(),
            });
        }
        Ok(())
    }
}

/// `(γ̇, ω̇x, δ̇x)` for state `(γ, ωx, δx)` and command `δxc`.
pub fn stt_dynamics(state: &[f64; 3], t: f64, command: f64, params: &MissileParams) -> [f64; 3] {
    let [_, rate, deflection] = *state;
    [
        rate,
        params.moment_gain(t) * deflection,
        (command - deflection) / params.tau_a,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MissileControl {
    pub command: f64,
    pub k2_dot: f64,
    pub k3_dot: f64,
    pub z: [f64; 3],
    pub psi3: f64,
}

/// The three-step autopilot. `k̇₂` is evaluated before `ψ₃`, which uses it.
pub fn missile_control(state: &[f64; 3], gains: [f64; 2], design: &MissileDesign) -> MissileControl {
    let [roll, rate, deflection] = *state;
    let [k2, k3] = gains;
    let d = design;
    let z1 = roll;
    let z2 = rate + d.k1 * z1;
    let z3 = deflection + d.mu2 * k2 * z2;
    let k2_dot = d.gamma2 * z2 * z2;
    let xi = d.xi.eval(deflection);
    let mk = d.mu2 * k2;
    let psi3 = mk
        + d.mu2 * k2_dot
        + xi * mk * mk
        + 0.5 * xi * mk
        + mk * d.k1 * d.k1 / d.epsilon.sqrt()
        + mk * d.k1
        + xi
        + 1.0;
    let k3_dot = d.gamma3 * psi3 * psi3 * z3 * z3;
    let command = -d.mu3 * k3 * psi3 * psi3 * z3;
    MissileControl {
        command,
        k2_dot,
        k3_dot,
        z: [z1, z2, z3],
        psi3,
    }
}

/// Closed loop of the roll channel; gains are `(k₂, k₃)`.
#[derive(Debug, Clone)]
pub struct MissileLoop {
    pub params: MissileParams,
    pub design: MissileDesign,
    pub sign_flip: bool,
}

impl MissileLoop {
    pub fn new(params: MissileParams, design: MissileDesign) -> Result<Self, MissileError> {
        params.validate()?;
        design.validate()?;
        Ok(Self {
            params,
            design,
            sign_flip: false,
        })
    }

    fn control(&self, x: &[f64], k: &[f64]) -> ([f64; 3], MissileControl) {
        let state = [x[0], x[1], x[2]];
        let mut c = missile_control(&state, [k[0], k[1]], &self.design);
        if self.sign_flip {
            c.command = -c.command;
        }
        (state, c)
    }
}

impl ClosedLoop for MissileLoop {
    fn scenario(&self) -> &str {
        crate::scenarios::STT_MISSILE
    }

    fn labels(&self) -> ColumnLabels {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        ColumnLabels {
            x: s(&["x1", "x2", "x3"]),
            z: s(&["z1", "z2", "z3"]),
            k: s(&["k2", "k3"]),
            psi: s(&["psi3"]),
            eta: Vec::new(),
            extras: s(&["roll_deg", "roll_rate_deg_s", "deflection_deg", "command_deg"]),
        }
    }

    fn derivative(&self, t: f64, x: &[f64], k: &[f64]) -> Result<(Vec<f64>, Vec<f64>), String> {
        let (state, c) = self.control(x, k);
        let dx = stt_dynamics(&state, t, c.command, &self.params);
        Ok((dx.to_vec(), vec![c.k2_dot, c.k3_dot]))
    }

    fn observe(&self, _t: f64, x: &[f64], k: &[f64]) -> Result<Observation, String> {
        let (_, c) = self.control(x, k);
        Ok(Observation {
            z: c.z.to_vec(),
            u: c.command,
            psi: vec![c.psi3],
            eta: Vec::new(),
            extras: vec![x[0].to_degrees(), x[1].to_degrees(), x[2].to_degrees(), c.command.to_degrees()],
        })
    }
}
