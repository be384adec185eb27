//! Runtime monitors for the stability claims and a seeded Monte-Carlo harness.
//!
//! Monitors read trajectories and the true plant constants in
//! [`OracleConstants`]; nothing here feeds back into the controller.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::lift;
use crate::backstep::{BackstepError, Backstepping};
use crate::plant::{uniform, OracleConstants, PlantSpec, ThetaComponent, UncertaintyProfile};
use crate::simkit::{integrate, IntegratorSettings, PlantLoop, SimError, Trajectory};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid verification request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backstep(#[from] BackstepError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Tail sup-norm bound on `x`.
    pub tol_x: f64,
    /// Allowed gain growth over the tail window.
    pub tol_k: f64,
    /// Fraction of the horizon treated as the tail.
    pub tail_fraction: f64,
    /// Magnitude above which a recorded signal counts as unbounded.
    pub signal_bound: f64,
    /// Tail share of `∫Σz²` above which the integral is not settling.
    pub barbalat_ratio: f64,
    /// Relative slack on `γᵢ∫zᵢ² ≤ kᵢ(T) − kᵢ(0)` for quadrature error.
    pub quadrature_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_x: 1e-2,
            tol_k: 1e-3,
            tail_fraction: 0.1,
            signal_bound: 1e6,
            barbalat_ratio: 1e-2,
            quadrature_rel: 0.05,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<(), VerifyError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.tol_x) && pos(self.tol_k) && pos(self.signal_bound) && pos(self.barbalat_ratio)) {
            return Err(VerifyError::Invalid("tolerances must be positive and finite".into()));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 1.0) {
            return Err(VerifyError::Invalid(format!(
                "tail_fraction must lie in (0, 1), got {}",
                self.tail_fraction
            )));
        }
        if !(self.quadrature_rel >= 0.0) {
            return Err(VerifyError::Invalid("quadrature_rel must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Which `z` column and `γ` feed each gain, for the integral check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainLink {
    pub k_index: usize,
    pub z_index: usize,
    pub gamma: f64,
}

/// All stages adapt: gain `i` is driven by `zᵢ` with rate `γᵢ`.
pub fn diagonal_links(gamma: &[f64]) -> Vec<GainLink> {
    gamma
        .iter()
        .enumerate()
        .map(|(i, &g)| GainLink {
            k_index: i,
            z_index: i,
            gamma: g,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Smallest `limit − observed` over the check; negative when failing.
    pub worst_margin: f64,
    pub at_t: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceMetrics {
    pub tail_sup_x: f64,
    pub tail_sup_z: f64,
    pub k_final: Vec<f64>,
    pub k_tail_delta: Vec<f64>,
    /// `(column, max |value|)` for every recorded signal.
    pub signal_max: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    /// False when the trajectory diverged; such a report never passes.
    pub applicable: bool,
    pub divergence: Option<String>,
    pub checks: Vec<Check>,
    pub metrics: ConvergenceMetrics,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.applicable && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn sup_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, a| m.max(a.abs()))
}

/// Cumulative trapezoid integral of `f(sample)` over the recorded samples.
fn cumulative<F: Fn(usize) -> f64>(t: &[f64], f: F) -> Vec<f64> {
    let mut acc = vec![0.0; t.len()];
    for j in 1..t.len() {
        acc[j] = acc[j - 1] + 0.5 * (t[j] - t[j - 1]) * (f(j - 1) + f(j));
    }
    acc
}

/// Boundedness, tail convergence, gain monotonicity and settling, the
/// Barbalat proxy and, for each [`GainLink`], `γᵢ∫zᵢ² ≤ kᵢ(T) − kᵢ(0)`.
pub fn check_theorem1(traj: &Trajectory, links: &[GainLink], tol: &Tolerances) -> InvariantReport {
    let mut report = InvariantReport {
        applicable: traj.is_complete() && traj.samples.len() >= 2,
        divergence: traj.divergence.as_ref().map(|d| format!("t={}: {}", d.t, d.reason)),
        checks: Vec::new(),
        metrics: ConvergenceMetrics::default(),
    };
    if !report.applicable {
        return report;
    }
    let s = &traj.samples;
    let t: Vec<f64> = s.iter().map(|p| p.t).collect();
    let horizon = *t.last().unwrap();
    let tail_start = horizon * (1.0 - tol.tail_fraction);
    let tail_idx = t.iter().position(|&v| v >= tail_start - 1e-12).unwrap_or(t.len() - 1);

    // (a) boundedness
    let header = traj.labels.header();
    let mut signal_max = vec![0.0f64; header.len() - 1];
    let mut worst = (f64::INFINITY, 0.0);
    for p in s {
        let row = p.x.iter().chain(&p.z).chain(&p.k).chain([&p.u]).chain(&p.psi).chain(&p.eta).chain(&p.extras);
        for (slot, v) in signal_max.iter_mut().zip(row) {
            let a = if v.is_finite() { v.abs() } else { f64::INFINITY };
            *slot = slot.max(a);
            if tol.signal_bound - a < worst.0 {
                worst = (tol.signal_bound - a, p.t);
            }
        }
    }
    report.checks.push(Check {
        name: "bounded".into(),
        passed: worst.0 >= 0.0,
        worst_margin: worst.0,
        at_t: worst.1,
        detail: format!("all recorded signals within ±{:e}", tol.signal_bound),
    });
    report.metrics.signal_max = header[1..].iter().cloned().zip(signal_max).collect();

    // (b) tail convergence
    let (mut tail_x, mut tail_x_t, mut tail_z) = (0.0f64, tail_start, 0.0f64);
    for p in &s[tail_idx..] {
        let nx = sup_inf(&p.x);
        if nx > tail_x {
            tail_x = nx;
            tail_x_t = p.t;
        }
        tail_z = tail_z.max(sup_inf(&p.z));
    }
    report.metrics.tail_sup_x = tail_x;
    report.metrics.tail_sup_z = tail_z;
    report.checks.push(Check {
        name: "tail_convergence".into(),
        passed: tail_x <= tol.tol_x,
        worst_margin: tol.tol_x - tail_x,
        at_t: tail_x_t,
        detail: format!("sup ‖x‖∞ on [{tail_start}, {horizon}] = {tail_x:e}"),
    });

    // (c) monotone and settled gains
    let nk = s[0].k.len();
    let mut mono = (f64::INFINITY, 0.0);
    for w in s.windows(2) {
        for i in 0..nk {
            let m = w[1].k[i] - w[0].k[i] + 1e-12;
            if m < mono.0 {
                mono = (m, w[1].t);
            }
        }
    }
    report.checks.push(Check {
        name: "gain_monotone".into(),
        passed: nk == 0 || mono.0 >= 0.0,
        worst_margin: if nk == 0 { 0.0 } else { mono.0 },
        at_t: mono.1,
        detail: "k(t+) ≥ k(t) − 1e-12 at every recorded step".into(),
    });
    let last = s.last().unwrap();
    let deltas: Vec<f64> = (0..nk).map(|i| last.k[i] - s[tail_idx].k[i]).collect();
    let settle = deltas.iter().fold(f64::NEG_INFINITY, |m, &d| m.max(d));
    report.metrics.k_final = last.k.clone();
    report.metrics.k_tail_delta = deltas;
    report.checks.push(Check {
        name: "gain_settled".into(),
        passed: nk == 0 || settle <= tol.tol_k,
        worst_margin: if nk == 0 { tol.tol_k } else { tol.tol_k - settle },
        at_t: horizon,
        detail: format!("max k(T) − k({tail_start}) = {settle:e}"),
    });

    // (d) ∫Σz² settles: the tail contributes a vanishing share
    let iz = cumulative(&t, |j| s[j].z.iter().map(|v| v * v).sum());
    let total = *iz.last().unwrap();
    let tail_inc = total - iz[tail_idx];
    let allowed = tol.barbalat_ratio * total + 1e-12;
    report.checks.push(Check {
        name: "barbalat_proxy".into(),
        passed: total.is_finite() && tail_inc <= allowed,
        worst_margin: allowed - tail_inc,
        at_t: horizon,
        detail: format!("∫Σz² = {total:e}, tail increment {tail_inc:e}"),
    });

    for link in links {
        let iz = cumulative(&t, |j| s[j].z[link.z_index].powi(2));
        let lhs = link.gamma * iz.last().unwrap();
        let dk = last.k[link.k_index] - s[0].k[link.k_index];
        let rhs = dk * (1.0 + tol.quadrature_rel) + 1e-12;
        report.checks.push(Check {
            name: format!("gain_integral_{}", link.k_index + 1),
            passed: lhs <= rhs,
            worst_margin: rhs - lhs,
            at_t: horizon,
            detail: format!("γ∫z² = {lhs:e} vs Δk = {dk:e}"),
        });
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceAudit {
    pub stage: usize,
    pub samples: usize,
    pub violations: usize,
    /// Smallest `ϑᵢηᵢΣ|z| − bracket` seen.
    pub min_slack: f64,
    pub vartheta: f64,
    pub worst_z: Vec<f64>,
    pub worst_k: Vec<f64>,
}

impl DominanceAudit {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Sampling box for [`dominance_audit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditBox {
    pub z: f64,
    pub k: (f64, f64),
    pub theta: Vec<(f64, f64)>,
}

/// The cross terms of `zᵢżᵢ` with the true plant,
/// `|φᵢ| + Σⱼ<ᵢ |∂αᵢ₋₁/∂xⱼ|(|φⱼ| + gⱼ|xⱼ₊₁|) + |∂αᵢ₋₁/∂kⱼ|·γⱼψⱼ²zⱼ²`,
/// together with `ηᵢΣ|z|`.
pub fn dominance_terms(
    controller: &Backstepping,
    plant: &PlantSpec,
    i: usize,
    z: &[f64],
    k: &[f64],
    theta: &[f64],
) -> Result<(f64, f64), VerifyError> {
    let sens = controller.sensitivity(i, z, k)?;
    let mut ext = lift(&sens.x);
    ext.push(crate::autodiff::DualScalar::ZERO);
    let phi = |j: usize| (plant.drift[j - 1])(&ext[..j], theta).value();
    let gamma = &controller.params().gamma;
    let mut bracket = phi(i).abs();
    for j in 1..i {
        let (pj, gj) = plant.stage_terms(j, &ext, theta);
        bracket += sens.dalpha_dx[j - 1].abs() * (pj.abs() + gj * sens.x[j].abs());
        bracket += sens.dalpha_dk[j - 1].abs() * gamma[j - 1] * sens.psi[j - 1].powi(2) * z[j - 1].powi(2);
    }
    let zsum: f64 = z[..i].iter().map(|v| v.abs()).sum();
    Ok((bracket, sens.eta * zsum))
}

/// Checks `bracket ≤ ϑᵢ·ηᵢ·Σ|zⱼ|` at `samples` random points. `vartheta`
/// overrides the oracle value, for negative controls.
pub fn dominance_audit(
    controller: &Backstepping,
    plant: &PlantSpec,
    oracle: &OracleConstants,
    i: usize,
    samples: usize,
    region: &AuditBox,
    seed: u64,
    vartheta: Option<f64>,
) -> Result<DominanceAudit, VerifyError> {
    let n = controller.dim();
    if i < 2 || i > n {
        return Err(VerifyError::Invalid(format!("stage {i} outside 2..={n}")));
    }
    let vt = vartheta.unwrap_or_else(|| oracle.vartheta(i));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut audit = DominanceAudit {
        stage: i,
        samples,
        violations: 0,
        min_slack: f64::INFINITY,
        vartheta: vt,
        worst_z: Vec::new(),
        worst_k: Vec::new(),
    };
    for _ in 0..samples {
        let z: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -region.z, region.z)).collect();
        let k: Vec<f64> = (0..n).map(|_| uniform(&mut rng, region.k.0, region.k.1)).collect();
        let theta: Vec<f64> = region.theta.iter().map(|&(lo, hi)| uniform(&mut rng, lo, hi)).collect();
        let (bracket, dom) = dominance_terms(controller, plant, i, &z, &k, &theta)?;
        let slack = vt * dom - bracket;
        if !(slack >= 0.0) {
            audit.violations += 1;
        }
        if slack < audit.min_slack {
            audit.min_slack = slack;
            audit.worst_z = z;
            audit.worst_k = k;
        }
    }
    Ok(audit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub epsilon: f64,
    pub c0: f64,
    /// Largest `V(t) − budget(t)`; `≤ tolerance` passes.
    pub max_violation: f64,
    pub at_t: f64,
    pub samples: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// `V(t) = ½Σzᵢ²` against `−½Σ(bᵢμᵢ/γᵢ)kᵢ² + 2εΣkᵢ/γᵢ + C₀`, with `C₀`
/// fitted so the budget is tight at the first sample. `gamma` is the
/// checker's belief and may differ from the controller's.
pub fn lyapunov_budget(
    traj: &Trajectory,
    oracle: &OracleConstants,
    mu: &[f64],
    gamma: &[f64],
    tolerance: f64,
) -> Result<BudgetReport, VerifyError> {
    let n = oracle.dim();
    if mu.len() != n || gamma.len() != n {
        return Err(VerifyError::Invalid(format!("need {n} μ and γ values")));
    }
    let first = traj
        .samples
        .first()
        .ok_or_else(|| VerifyError::Invalid("empty trajectory".into()))?;
    if first.k.len() != n || first.z.len() != n {
        return Err(VerifyError::Invalid("trajectory dimension differs from oracle".into()));
    }
    let eps = oracle.epsilon();
    let v = |z: &[f64]| 0.5 * z.iter().map(|a| a * a).sum::<f64>();
    let shape = |k: &[f64]| {
        (0..n)
            .map(|i| -0.5 * oracle.b[i] * mu[i] / gamma[i] * k[i] * k[i] + 2.0 * eps * k[i] / gamma[i])
            .sum::<f64>()
    };
    let c0 = v(&first.z) - shape(&first.k);
    let mut worst = (f64::NEG_INFINITY, first.t);
    for p in &traj.samples {
        let excess = v(&p.z) - (shape(&p.k) + c0);
        if excess > worst.0 || excess.is_nan() {
            worst = (if excess.is_nan() { f64::INFINITY } else { excess }, p.t);
        }
    }
    Ok(BudgetReport {
        epsilon: eps,
        c0,
        max_violation: worst.0,
        at_t: worst.1,
        samples: traj.samples.len(),
        tolerance,
        passed: worst.0 <= tolerance,
    })
}

/// Randomization of initial states and `θ(t)` for a sweep.
///
/// Each `θⱼ` becomes `c + a·sin(ωt + φ)` with `c` uniform in its box,
/// `a` uniform in `[0, min(c − lo, hi − c)]`, `ω ∈ omega` and `φ ∈ [0, 2π)`,
/// so every profile stays inside the box. Degenerate boxes yield the exact
/// nominal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub runs: usize,
    pub seed: u64,
    pub x0_box: Vec<(f64, f64)>,
    pub theta_box: Vec<(f64, f64)>,
    #[serde(default = "default_omega")]
    pub omega: (f64, f64),
}

fn default_omega() -> (f64, f64) {
    (0.1, 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub index: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub theta: Vec<ThetaComponent>,
    pub passed: bool,
    pub report: InvariantReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub runs: usize,
    pub passed: usize,
    pub seed: u64,
    pub outcomes: Vec<RunOutcome>,
}

impl MonteCarloReport {
    pub fn pass_rate(&self) -> f64 {
        self.passed as f64 / self.runs as f64
    }
}

fn draw_theta(rng: &mut ChaCha8Rng, lo: f64, hi: f64, omega: (f64, f64)) -> ThetaComponent {
    let mean = uniform(rng, lo, hi);
    // Shrink the room slightly so `mean ± amplitude` cannot round past the box.
    let room = (mean - lo).min(hi - mean).max(0.0) * (1.0 - 1e-9);
    let amplitude = uniform(rng, 0.0, room);
    let w = uniform(rng, omega.0, omega.1);
    let phase = uniform(rng, 0.0, std::f64::consts::TAU);
    if amplitude == 0.0 {
        ThetaComponent::Constant { value: mean, lo, hi }
    } else {
        ThetaComponent::Sinusoid {
            mean,
            amplitude,
            omega: w,
            phase,
            lo,
            hi,
        }
    }
}

/// Seeded sweep over initial states and parameter profiles; runs in
/// parallel, outcomes ordered by run index.
pub fn monte_carlo(
    plant: &PlantSpec,
    controller: &Backstepping,
    spec: &MonteCarloSpec,
    settings: IntegratorSettings,
    tol: &Tolerances,
) -> Result<MonteCarloReport, VerifyError> {
    let n = plant.dim();
    if spec.runs == 0 {
        return Err(VerifyError::Invalid("Monte-Carlo needs at least one run".into()));
    }
    if spec.x0_box.len() != n {
        return Err(VerifyError::Invalid(format!("x0_box needs {n} intervals")));
    }
    if spec.theta_box.iter().any(|&(lo, hi)| !(lo <= hi)) || spec.x0_box.iter().any(|&(lo, hi)| !(lo <= hi)) {
        return Err(VerifyError::Invalid("every box needs lo ≤ hi".into()));
    }
    if !(spec.omega.0 > 0.0 && spec.omega.0 <= spec.omega.1) {
        return Err(VerifyError::Invalid("omega range must satisfy 0 < lo ≤ hi".into()));
    }
    settings.validate()?;
    tol.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let seeds: Vec<u64> = (0..spec.runs).map(|_| master.gen()).collect();
    let links = diagonal_links(&controller.params().gamma);
    let k0 = controller.params().k0.clone();
    let outcomes = seeds
        .par_iter()
        .enumerate()
        .map(|(index, &seed)| -> Result<RunOutcome, VerifyError> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0: Vec<f64> = spec.x0_box.iter().map(|&(lo, hi)| uniform(&mut rng, lo, hi)).collect();
            let theta: Vec<ThetaComponent> = spec
                .theta_box
                .iter()
                .map(|&(lo, hi)| draw_theta(&mut rng, lo, hi, spec.omega))
                .collect();
            let profile = UncertaintyProfile::new(theta.clone())
                .map_err(|e| VerifyError::Invalid(e.to_string()))?;
            let sys = PlantLoop::new(plant.clone(), profile, controller.clone());
            let traj = integrate(&sys, &x0, &k0, settings, seed)?;
            let report = check_theorem1(&traj, &links, tol);
            Ok(RunOutcome {
                index,
                seed,
                x0,
                theta,
                passed: report.passed(),
                report,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let passed = outcomes.iter().filter(|o| o.passed).count();
    Ok(MonteCarloReport {
        runs: spec.runs,
        passed,
        seed: spec.seed,
        outcomes,
    })
}
