//! Fixed-step RK4 integration of the augmented closed loop `(x, k)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backstep::Backstepping;
use crate::plant::{PlantSpec, UncertaintyProfile};

/// Any state component beyond this magnitude counts as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid integrator settings: {0}")]
    Settings(String),
    #[error("diverged at t = {t}: {reason}")]
    Divergence { t: f64, reason: String, state: Vec<f64> },
    #[error("closed-loop evaluation failed at t = {t}: {reason}")]
    System { t: f64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSettings {
    pub horizon: f64,
    pub step: f64,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
}

fn default_decimation() -> usize {
    10
}

impl IntegratorSettings {
    pub fn new(horizon: f64, step: f64, decimation: usize) -> Self {
        Self {
            horizon,
            step,
            decimation,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::Settings(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if !(self.step > 0.0 && self.step <= self.horizon) {
            return Err(SimError::Settings(format!(
                "step must lie in (0, horizon], got {}",
                self.step
            )));
        }
        if self.decimation == 0 {
            return Err(SimError::Settings("decimation must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    /// `floor(T/h/decimation) + 1`.
    pub fn sample_count(&self) -> usize {
        self.steps() / self.decimation + 1
    }
}

/// Column names for the recorded signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnLabels {
    pub x: Vec<String>,
    pub z: Vec<String>,
    pub k: Vec<String>,
    pub psi: Vec<String>,
    pub eta: Vec<String>,
    pub extras: Vec<String>,
}

impl ColumnLabels {
    /// `x1..xn, z1..zn, k1..kn, psi1..psin` and optionally `eta2..etan`.
    pub fn indexed(n: usize, with_eta: bool) -> Self {
        let names = |p: &str, from: usize| (from..=n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        Self {
            x: names("x", 1),
            z: names("z", 1),
            k: names("k", 1),
            psi: names("psi", 1),
            eta: if with_eta { names("eta", 2) } else { Vec::new() },
            extras: Vec::new(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(self.x.iter().cloned());
        h.extend(self.z.iter().cloned());
        h.extend(self.k.iter().cloned());
        h.push("u".to_string());
        h.extend(self.psi.iter().cloned());
        h.extend(self.eta.iter().cloned());
        h.extend(self.extras.iter().cloned());
        h
    }
}

/// Signals recorded alongside the integrated state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observation {
    pub z: Vec<f64>,
    pub u: f64,
    pub psi: Vec<f64>,
    pub eta: Vec<f64>,
    pub extras: Vec<f64>,
}

/// A closed loop whose state is plant state `x` plus adaptive gains `k`.
pub trait ClosedLoop: Send + Sync {
    fn scenario(&self) -> &str;
    fn labels(&self) -> ColumnLabels;
    fn derivative(&self, t: f64, x: &[f64], k: &[f64]) -> Result<(Vec<f64>, Vec<f64>), String>;
    fn observe(&self, t: f64, x: &[f64], k: &[f64]) -> Result<Observation, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub k: Vec<f64>,
    pub u: f64,
    pub psi: Vec<f64>,
    pub eta: Vec<f64>,
    pub extras: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceInfo {
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scenario: String,
    pub seed: u64,
    pub settings: IntegratorSettings,
    pub labels: ColumnLabels,
    pub samples: Vec<Sample>,
    pub divergence: Option<DivergenceInfo>,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.divergence.is_none()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step<F>(mut rhs: F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>, SimError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, SimError>,
{
    let mut stage = |tt: f64, yy: &[f64]| -> Result<Vec<f64>, SimError> {
        let d = rhs(tt, yy)?;
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(SimError::Divergence {
                t: tt,
                reason: "non-finite stage derivative".into(),
                state: yy.to_vec(),
            })
        }
    };
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { y.iter().zip(k).map(|(yi, ki)| yi + a * ki).collect() };
    let k1 = stage(t, y)?;
    let k2 = stage(t + 0.5 * h, &axpy(0.5 * h, &k1))?;
    let k3 = stage(t + 0.5 * h, &axpy(0.5 * h, &k2))?;
    let k4 = stage(t + h, &axpy(h, &k3))?;
    Ok((0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates `ẏ = rhs(t, y)` on `[0, t_end]` with `steps` RK4 steps.
pub fn solve_fixed<F>(mut rhs: F, y0: &[f64], t_end: f64, steps: usize) -> Result<Vec<f64>, SimError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, SimError>,
{
    let h = t_end / steps as f64;
    let mut y = y0.to_vec();
    for i in 0..steps {
        y = rk4_step(&mut rhs, i as f64 * h, &y, h)?;
    }
    Ok(y)
}

/// Observed order `log₂(‖y_h − y_{h/2}‖ / ‖y_{h/2} − y_{h/4}‖)` at `t_end`.
pub fn self_convergence_order<F>(mut rhs: F, y0: &[f64], t_end: f64, steps: usize) -> Result<f64, SimError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, SimError>,
{
    let coarse = solve_fixed(&mut rhs, y0, t_end, steps)?;
    let mid = solve_fixed(&mut rhs, y0, t_end, 2 * steps)?;
    let fine = solve_fixed(&mut rhs, y0, t_end, 4 * steps)?;
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    Ok((sup(&coarse, &mid) / sup(&mid, &fine)).log2())
}

fn record(system: &dyn ClosedLoop, t: f64, x: &[f64], k: &[f64]) -> Result<Sample, String> {
    let obs = system.observe(t, x, k)?;
    Ok(Sample {
        t,
        x: x.to_vec(),
        z: obs.z,
        k: k.to_vec(),
        u: obs.u,
        psi: obs.psi,
        eta: obs.eta,
        extras: obs.extras,
    })
}

/// Integrates the closed loop from `(x0, k0)` over the configured horizon.
///
/// Divergence (non-finite values, a component beyond
/// [`DIVERGENCE_THRESHOLD`], or a failing controller evaluation) stops the
/// run early and is reported through [`Trajectory::divergence`]; only bad
/// settings produce an `Err`.
pub fn integrate(
    system: &dyn ClosedLoop,
    x0: &[f64],
    k0: &[f64],
    settings: IntegratorSettings,
    seed: u64,
) -> Result<Trajectory, SimError> {
    settings.validate()?;
    let nx = x0.len();
    let h = settings.step;
    let steps = settings.steps();
    let mut traj = Trajectory {
        scenario: system.scenario().to_string(),
        seed,
        settings,
        labels: system.labels(),
        samples: Vec::with_capacity(settings.sample_count()),
        divergence: None,
    };
    let mut y: Vec<f64> = x0.iter().chain(k0).copied().collect();
    match record(system, 0.0, x0, k0) {
        Ok(s) => traj.samples.push(s),
        Err(reason) => {
            traj.divergence = Some(DivergenceInfo { t: 0.0, reason });
            return Ok(traj);
        }
    }
    let mut rhs = |t: f64, yy: &[f64]| -> Result<Vec<f64>, SimError> {
        let (dx, dk) = system
            .derivative(t, &yy[..nx], &yy[nx..])
            .map_err(|reason| SimError::System { t, reason })?;
        Ok(dx.into_iter().chain(dk).collect())
    };
    for step in 0..steps {
        let t = step as f64 * h;
        let next = match rk4_step(&mut rhs, t, &y, h) {
            Ok(v) => v,
            Err(e) => {
                traj.divergence = Some(DivergenceInfo {
                    t,
                    reason: e.to_string(),
                });
                return Ok(traj);
            }
        };
        y = next;
        let t_next = (step + 1) as f64 * h;
        if let Some(v) = y.iter().find(|v| !(v.abs() <= DIVERGENCE_THRESHOLD)) {
            traj.divergence = Some(DivergenceInfo {
                t: t_next,
                reason: format!("state component {v} beyond {DIVERGENCE_THRESHOLD:e}"),
            });
            return Ok(traj);
        }
        if (step + 1) % settings.decimation == 0 {
            match record(system, t_next, &y[..nx], &y[nx..]) {
                Ok(s) => traj.samples.push(s),
                Err(reason) => {
                    traj.divergence = Some(DivergenceInfo { t: t_next, reason });
                    return Ok(traj);
                }
            }
        }
    }
    Ok(traj)
}

/// A [`PlantSpec`] driven by a [`Backstepping`] controller under `θ(t)`.
#[derive(Debug, Clone)]
pub struct PlantLoop {
    pub plant: PlantSpec,
    pub theta: UncertaintyProfile,
    pub controller: Backstepping,
    /// Negates the control input; only used to check that monitors catch it.
    pub sign_flip: bool,
}

impl PlantLoop {
    pub fn new(plant: PlantSpec, theta: UncertaintyProfile, controller: Backstepping) -> Self {
        Self {
            plant,
            theta,
            controller,
            sign_flip: false,
        }
    }

    fn applied(&self, u: f64) -> f64 {
        if self.sign_flip {
            -u
        } else {
            u
        }
    }
}

impl ClosedLoop for PlantLoop {
    fn scenario(&self) -> &str {
        &self.plant.name
    }

    fn labels(&self) -> ColumnLabels {
        ColumnLabels::indexed(self.plant.dim(), self.controller.mode() == crate::backstep::ControllerMode::Auto)
    }

    fn derivative(&self, t: f64, x: &[f64], k: &[f64]) -> Result<(Vec<f64>, Vec<f64>), String> {
        let out = self.controller.control(x, k).map_err(|e| e.to_string())?;
        let theta = self.theta.eval_unchecked(t);
        let dx = self.plant.rhs(x, self.applied(out.u), &theta);
        Ok((dx, out.k_dot))
    }

    fn observe(&self, _t: f64, x: &[f64], k: &[f64]) -> Result<Observation, String> {
        let out = self.controller.control(x, k).map_err(|e| e.to_string())?;
        let with_eta = self.controller.mode() == crate::backstep::ControllerMode::Auto;
        Ok(Observation {
            z: out.z,
            u: self.applied(out.u),
            psi: out.psi,
            eta: if with_eta { out.eta[1..].to_vec() } else { Vec::new() },
            extras: Vec::new(),
        })
    }
}
