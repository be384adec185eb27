//! Adaptive high-gain backstepping synthesis.
//!
//! Coordinates `z₁ = x₁`, `zᵢ = xᵢ − αᵢ₋₁`; virtual and actual controls
//! `αᵢ = −μᵢ·kᵢ·ψᵢ²·zᵢ` (with `αₙ = u`); gain updates `k̇ᵢ = γᵢ·ψᵢ²·zᵢ²`,
//! optionally frozen inside a dead zone `|zᵢ| < δ`.
//!
//! Two ways of obtaining the `ψᵢ`:
//!
//! * [`ControllerMode::Auto`]: `ψ₁ = ρ₁ + 1` and `ψᵢ = ηᵢ + Φᵢ₋₁ + 1`, where
//!   `ηᵢ` is assembled by collecting every uncertain cross term of `V̇ᵢ` into
//!   nonnegative coefficients of `|z_q|` (see [`Backstepping::eta`]). The
//!   partials `∂αᵢ₋₁/∂xⱼ` and `∂αᵢ₋₁/∂kⱼ` come from the dual tower, one
//!   nesting level per stage.
//! * [`ControllerMode::Paper`]: closed-form `ψᵢ` supplied by the scenario,
//!   together with the exponent the scenario uses on `ψᵢ` inside `αᵢ`.

use std::fmt;
use std::sync::Arc;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{gradient_at, lift, AdError, DualScalar, DEFAULT_SMOOTHING};
use crate::plant::{uniform, BoundFn, BoundSpec};

/// Largest plant dimension accepted in auto mode.
pub const MAX_AUTO_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackstepError {
    #[error("invalid design parameter {key}: {reason}")]
    InvalidParam { key: String, reason: String },
    #[error("auto mode supports n ≤ {MAX_AUTO_DIM}, got n = {0}")]
    AutoDimension(usize),
    #[error("stage index {index} is invalid here: {reason}")]
    Stage { index: usize, reason: &'static str },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value at stage {stage}")]
    NonFinite { stage: usize },
    #[error(transparent)]
    Ad(#[from] AdError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    /// Scenario-supplied closed-form `ψᵢ`.
    #[default]
    Paper,
    /// `ηᵢ`/`ψᵢ` constructed automatically.
    Auto,
}

/// Power of `ψᵢ` inside `αᵢ = −μᵢkᵢψᵢᵖzᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiExponent {
    Squared,
    Linear,
}

impl PsiExponent {
    fn apply(self, psi: &DualScalar) -> DualScalar {
        match self {
            PsiExponent::Squared => psi.square(),
            PsiExponent::Linear => psi.clone(),
        }
    }

    fn power(self) -> i32 {
        match self {
            PsiExponent::Squared => 2,
            PsiExponent::Linear => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
    pub k0: Vec<f64>,
    /// Dead-zone half width `δ`; zero keeps the plain update law.
    #[serde(default)]
    pub deadzone: f64,
    /// `ε_s` for the smooth absolute value used while building `ηᵢ`.
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    #[serde(default)]
    pub mode: ControllerMode,
}

fn default_smoothing() -> f64 {
    DEFAULT_SMOOTHING
}

impl DesignParams {
    pub fn uniform(n: usize, mu: f64, gamma: f64, k0: f64, mode: ControllerMode) -> Self {
        Self {
            mu: vec![mu; n],
            gamma: vec![gamma; n],
            k0: vec![k0; n],
            deadzone: 0.0,
            smoothing: DEFAULT_SMOOTHING,
            mode,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), BackstepError> {
        for (name, values) in [("mu", &self.mu), ("gamma", &self.gamma), ("k0", &self.k0)] {
            if values.len() != n {
                return Err(BackstepError::InvalidParam {
                    key: name.to_string(),
                    reason: format!("expected {n} entries, got {}", values.len()),
                });
            }
            if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                return Err(BackstepError::InvalidParam {
                    key: format!("{name}[{i}]"),
                    reason: format!("must be a finite value > 0, got {v}"),
                });
            }
        }
        if !(self.deadzone >= 0.0 && self.deadzone.is_finite()) {
            return Err(BackstepError::InvalidParam {
                key: "deadzone".into(),
                reason: format!("must be ≥ 0, got {}", self.deadzone),
            });
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(BackstepError::InvalidParam {
                key: "smoothing".into(),
                reason: format!("must be > 0, got {}", self.smoothing),
            });
        }
        Ok(())
    }
}

/// Arguments handed to a closed-form `ψᵢ`: `x̄ᵢ`, `z̄ᵢ` and `k̄ᵢ₋₁`.
pub struct StagePoint<'a> {
    pub x: &'a [DualScalar],
    pub z: &'a [DualScalar],
    pub k: &'a [DualScalar],
    pub mu: &'a [f64],
    pub gamma: &'a [f64],
}

pub type PsiFormula = Arc<dyn Fn(&StagePoint<'_>) -> DualScalar + Send + Sync>;

/// Closed-form design supplied by a scenario.
#[derive(Clone)]
pub struct PaperDesign {
    pub psi: Vec<PsiFormula>,
    pub exponent: PsiExponent,
}

impl fmt::Debug for PaperDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PaperDesign")
            .field("stages", &self.psi.len())
            .field("exponent", &self.exponent)
            .finish()
    }
}

/// `ψ₁ = ρ₁ + 1`.
pub fn psi1(bounds: &BoundSpec) -> BoundFn {
    let rho = bounds.rho[0].clone();
    Arc::new(move |x: &[DualScalar]| rho(x) + 1.0)
}

/// `ψᵢ = ηᵢ + Φᵢ₋₁ + 1`, the smallest choice allowed for stages `i ≥ 2`.
pub fn auto_psi(eta: &DualScalar, phi_prev: &DualScalar) -> DualScalar {
    eta + phi_prev + 1.0
}

/// All stage quantities from one pass over `1..=upto`.
#[derive(Debug, Clone, Default)]
pub struct StageValues {
    pub x: Vec<DualScalar>,
    pub z: Vec<DualScalar>,
    pub psi: Vec<DualScalar>,
    /// `η₁` is reported as zero.
    pub eta: Vec<DualScalar>,
    pub alpha: Vec<DualScalar>,
}

/// Controller output at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlOutput {
    pub u: f64,
    pub z: Vec<f64>,
    pub psi: Vec<f64>,
    pub eta: Vec<f64>,
    pub k_dot: Vec<f64>,
}

/// Ingredients of `ηᵢ` evaluated at a point, for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSensitivity {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// `ψ₁..ψᵢ₋₁`.
    pub psi: Vec<f64>,
    pub eta: f64,
    /// `∂αᵢ₋₁/∂xⱼ`, `j < i`.
    pub dalpha_dx: Vec<f64>,
    /// `∂αᵢ₋₁/∂kⱼ`, `j < i`.
    pub dalpha_dk: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiFloorAudit {
    pub samples: usize,
    pub violations: usize,
    pub min_psi: f64,
}

#[derive(Clone)]
enum Law {
    Auto,
    Paper(PaperDesign),
}

/// A synthesized controller. Holds only known quantities: bounds and design
/// parameters, never the true plant constants.
#[derive(Clone)]
pub struct Backstepping {
    bounds: BoundSpec,
    params: DesignParams,
    law: Law,
}

impl fmt::Debug for Backstepping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backstepping")
            .field("n", &self.dim())
            .field("params", &self.params)
            .field("exponent", &self.exponent())
            .finish()
    }
}

impl Backstepping {
    /// Controller with automatically constructed `ηᵢ`/`ψᵢ`.
    pub fn auto(bounds: BoundSpec, mut params: DesignParams) -> Result<Self, BackstepError> {
        let n = bounds.dim();
        if n > MAX_AUTO_DIM {
            return Err(BackstepError::AutoDimension(n));
        }
        Self::check_bounds(&bounds)?;
        params.validate(n)?;
        params.mode = ControllerMode::Auto;
        Ok(Self {
            bounds,
            params,
            law: Law::Auto,
        })
    }

    /// Controller with closed-form `ψᵢ`.
    pub fn paper(bounds: BoundSpec, mut params: DesignParams, design: PaperDesign) -> Result<Self, BackstepError> {
        let n = bounds.dim();
        Self::check_bounds(&bounds)?;
        params.validate(n)?;
        if design.psi.len() != n {
            return Err(BackstepError::Dimension(format!(
                "{} closed-form ψ for {n} stages",
                design.psi.len()
            )));
        }
        params.mode = ControllerMode::Paper;
        Ok(Self {
            bounds,
            params,
            law: Law::Paper(design),
        })
    }

    fn check_bounds(bounds: &BoundSpec) -> Result<(), BackstepError> {
        let n = bounds.dim();
        if n == 0 || bounds.gain_bound.len() + 1 < n {
            return Err(BackstepError::Dimension(format!(
                "{} ρ and {} Φ functions",
                n,
                bounds.gain_bound.len()
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn params(&self) -> &DesignParams {
        &self.params
    }

    pub fn mode(&self) -> ControllerMode {
        self.params.mode
    }

    pub fn exponent(&self) -> PsiExponent {
        match &self.law {
            Law::Auto => PsiExponent::Squared,
            Law::Paper(d) => d.exponent,
        }
    }

    /// Runs stages `1..=upto`. `next_x(j, αⱼ₋₁)` supplies `xⱼ`, which lets
    /// the same loop evaluate forward (x given) and inverse (z given).
    fn run_stages<F>(&self, k: &[DualScalar], upto: usize, mut next_x: F) -> Result<StageValues, BackstepError>
    where
        F: FnMut(usize, &DualScalar) -> DualScalar,
    {
        let mut out = StageValues::default();
        let mut prev_alpha = DualScalar::ZERO;
        for j in 1..=upto {
            let xj = next_x(j, &prev_alpha);
            let zj = &xj - &prev_alpha;
            out.x.push(xj);
            out.z.push(zj);
            let (psi, eta) = self.stage_psi(j, &out, k)?;
            let alpha = -(self.exponent().apply(&psi) * &k[j - 1] * &out.z[j - 1] * self.params.mu[j - 1]);
            out.psi.push(psi);
            out.eta.push(eta);
            prev_alpha = alpha.clone();
            out.alpha.push(alpha);
        }
        Ok(out)
    }

    fn stage_psi(&self, j: usize, done: &StageValues, k: &[DualScalar]) -> Result<(DualScalar, DualScalar), BackstepError> {
        match &self.law {
            Law::Paper(design) => {
                let point = StagePoint {
                    x: &done.x[..j],
                    z: &done.z[..j],
                    k: &k[..j - 1],
                    mu: &self.params.mu,
                    gamma: &self.params.gamma,
                };
                Ok(((design.psi[j - 1])(&point), DualScalar::ZERO))
            }
            Law::Auto if j == 1 => Ok(((self.bounds.rho[0])(&done.x[..1]) + 1.0, DualScalar::ZERO)),
            Law::Auto => {
                let eta = self.eta_from(j, &done.x[..j], &done.z[..j], &k[..j - 1], &done.psi[..j - 1])?;
                let phi_prev = (self.bounds.gain_bound[j - 2])(&done.x[..j]);
                Ok((auto_psi(&eta, &phi_prev), eta))
            }
        }
    }

    /// Partials of `αᵢ₋₁` with respect to `x̄ᵢ₋₁` and `k̄ᵢ₋₁`.
    fn alpha_partials(
        &self,
        i: usize,
        x: &[DualScalar],
        k: &[DualScalar],
    ) -> Result<(Vec<DualScalar>, Vec<DualScalar>), BackstepError> {
        let m = i - 1;
        let mut point: Vec<DualScalar> = x[..m].to_vec();
        point.extend_from_slice(&k[..m]);
        let mut failure = None;
        let (_, mut partials) = gradient_at(
            |v| match self.run_stages(&v[m..], m, |j, _| v[j - 1].clone()) {
                Ok(mut vals) => Ok(vals.alpha.pop().unwrap_or_default()),
                Err(BackstepError::Ad(e)) => Err(e),
                Err(e) => {
                    failure = Some(e);
                    Ok(DualScalar::ZERO)
                }
            },
            &point,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        let dk = partials.split_off(m);
        Ok((partials, dk))
    }

    /// Assembles `ηᵢ` at `(x̄ᵢ, z̄ᵢ, k̄ᵢ₋₁)` given `ψ₁..ψᵢ₋₁`.
    ///
    /// Every `|x_q|` is replaced by `|z_q| + μ_{q−1}k_{q−1}ψ_{q−1}ᵖ|z_{q−1}|`,
    /// every `|·|` on a partial by its smooth majorant, and the bracket is
    /// expanded into `Σ c_q|z_q|` with `c_q ≥ 0`. The sum of the `c_q`
    /// dominates the bracket over `Σ|z_q|`.
    fn eta_from(
        &self,
        i: usize,
        x: &[DualScalar],
        z: &[DualScalar],
        k: &[DualScalar],
        psi: &[DualScalar],
    ) -> Result<DualScalar, BackstepError> {
        let eps = self.params.smoothing;
        let p = &self.params;
        let exponent = self.exponent();
        let (dax, dak) = self.alpha_partials(i, x, k)?;

        // abs_x[q-1][l-1]: coefficient of |z_l| in the majorant of |x_q|.
        let mut abs_x: Vec<Vec<DualScalar>> = Vec::with_capacity(i);
        for q in 1..=i {
            let mut row = vec![DualScalar::ZERO; i];
            row[q - 1] = DualScalar::ONE;
            if q >= 2 {
                row[q - 2] = exponent.apply(&psi[q - 2]) * &k[q - 2] * p.mu[q - 2];
            }
            abs_x.push(row);
        }
        // prefix[j-1] = Σ_{l ≤ j} abs_x[l-1]
        let mut prefix: Vec<Vec<DualScalar>> = Vec::with_capacity(i);
        for q in 0..i {
            let row: Vec<DualScalar> = match prefix.last() {
                None => abs_x[0].clone(),
                Some(prev) => prev.iter().zip(&abs_x[q]).map(|(a, b)| a + b).collect(),
            };
            prefix.push(row);
        }

        let mut coeff: Vec<DualScalar> = {
            let rho_i = (self.bounds.rho[i - 1])(&x[..i]);
            prefix[i - 1].iter().map(|c| c * &rho_i).collect()
        };
        for j in 1..i {
            let wx = dax[j - 1].smooth_abs(eps);
            let rho_j = (self.bounds.rho[j - 1])(&x[..j]);
            let phi_j = (self.bounds.gain_bound[j - 1])(&x[..=j]);
            for (q, c) in coeff.iter_mut().enumerate() {
                let term = &prefix[j - 1][q] * &rho_j + &abs_x[j][q] * &phi_j;
                *c = &*c + &wx * term;
            }
            let wk = dak[j - 1].smooth_abs(eps);
            coeff[j - 1] = &coeff[j - 1] + wk * psi[j - 1].square() * z[j - 1].smooth_abs(eps) * p.gamma[j - 1];
        }
        let eta: DualScalar = coeff.into_iter().sum();
        if !eta.is_finite() {
            return Err(BackstepError::NonFinite { stage: i });
        }
        Ok(eta)
    }

    fn check_lengths(&self, x_len: usize, k_len: usize, i: usize) -> Result<(), BackstepError> {
        if i == 0 || i > self.dim() {
            return Err(BackstepError::Stage {
                index: i,
                reason: "outside 1..=n",
            });
        }
        if x_len < i || k_len + 1 < i {
            return Err(BackstepError::Dimension(format!(
                "stage {i} needs x̄ᵢ and k̄ᵢ₋₁, got {x_len} states and {k_len} gains"
            )));
        }
        Ok(())
    }

    /// Stage quantities `1..=i` at plant state `x̄ᵢ` and gains `k̄ᵢ`.
    pub fn stages(&self, x: &[f64], k: &[f64], i: usize) -> Result<StageValues, BackstepError> {
        self.check_lengths(x.len(), k.len(), i)?;
        if k.len() < i {
            return Err(BackstepError::Dimension(format!("αᵢ needs k̄ᵢ, got {} gains", k.len())));
        }
        let xs = lift(x);
        let ks = lift(&k[..i]);
        self.run_stages(&ks, i, |j, _| xs[j - 1].clone())
    }

    /// `zᵢ = xᵢ − αᵢ₋₁`.
    pub fn transform(&self, x: &[f64], k: &[f64]) -> Result<Vec<f64>, BackstepError> {
        let n = self.dim();
        self.check_lengths(x.len(), k.len(), n)?;
        let xs = lift(x);
        let ks = lift(k);
        let vals = self.run_stages(&ks, n - 1, |j, _| xs[j - 1].clone())?;
        let mut z: Vec<f64> = vals.z.iter().map(DualScalar::value).collect();
        let last = if n == 1 { x[0] } else { x[n - 1] - vals.alpha[n - 2].value() };
        z.push(last);
        Ok(z)
    }

    /// Inverse of [`transform`](Self::transform): `x₁ = z₁`, `xᵢ = zᵢ + αᵢ₋₁`.
    pub fn reconstruct(&self, z: &[f64], k: &[f64]) -> Result<Vec<f64>, BackstepError> {
        let n = z.len();
        self.check_lengths(n, k.len(), n)?;
        let zs = lift(z);
        let ks = lift(k);
        let vals = self.run_stages(&ks, n - 1, |j, prev| &zs[j - 1] + prev)?;
        let mut x: Vec<f64> = vals.x.iter().map(DualScalar::value).collect();
        let last = if n == 1 { z[0] } else { z[n - 1] + vals.alpha[n - 2].value() };
        x.push(last);
        Ok(x)
    }

    /// `ψᵢ(z̄ᵢ, k̄ᵢ₋₁)`.
    pub fn psi(&self, i: usize, z: &[f64], k: &[f64]) -> Result<f64, BackstepError> {
        self.check_lengths(z.len(), k.len(), i)?;
        let zs = lift(&z[..i]);
        let mut ks = lift(&k[..i - 1]);
        // αᵢ is not needed; a placeholder gain keeps the pass uniform.
        ks.push(DualScalar::ONE);
        let vals = self.run_stages(&ks, i, |j, prev| &zs[j - 1] + prev)?;
        Ok(vals.psi[i - 1].value())
    }

    /// `ηᵢ(z̄ᵢ, k̄ᵢ₋₁)` in auto mode; `i ≥ 2`.
    pub fn eta(&self, i: usize, z: &[f64], k: &[f64]) -> Result<f64, BackstepError> {
        Ok(self.sensitivity(i, z, k)?.eta)
    }

    /// `ηᵢ` together with the partials it was built from.
    pub fn sensitivity(&self, i: usize, z: &[f64], k: &[f64]) -> Result<StageSensitivity, BackstepError> {
        if i < 2 {
            return Err(BackstepError::Stage {
                index: i,
                reason: "η is defined for stages ≥ 2",
            });
        }
        if !matches!(self.law, Law::Auto) {
            return Err(BackstepError::Stage {
                index: i,
                reason: "η is only constructed in auto mode",
            });
        }
        self.check_lengths(z.len(), k.len(), i)?;
        let zs = lift(&z[..i]);
        let ks = lift(&k[..i - 1]);
        let lower = self.run_stages(&ks, i - 1, |j, prev| &zs[j - 1] + prev)?;
        let mut xs = lower.x.clone();
        xs.push(&zs[i - 1] + lower.alpha.last().unwrap_or(&DualScalar::ZERO));
        let eta = self.eta_from(i, &xs, &zs, &ks, &lower.psi)?;
        let (dax, dak) = self.alpha_partials(i, &xs, &ks)?;
        let vals = |v: &[DualScalar]| v.iter().map(DualScalar::value).collect::<Vec<_>>();
        Ok(StageSensitivity {
            x: vals(&xs),
            z: z[..i].to_vec(),
            psi: vals(&lower.psi),
            eta: eta.value(),
            dalpha_dx: vals(&dax),
            dalpha_dk: vals(&dak),
        })
    }

    /// `αᵢ(x̄ᵢ, k̄ᵢ)`; `αₙ` is the control input.
    pub fn alpha(&self, i: usize, x: &[f64], k: &[f64]) -> Result<f64, BackstepError> {
        let vals = self.stages(x, k, i)?;
        Ok(vals.alpha[i - 1].value())
    }

    /// `γᵢψᵢ²zᵢ²`, zero inside the dead zone.
    pub fn gain_rate(&self, i: usize, z: f64, psi: f64) -> f64 {
        let delta = self.params.deadzone;
        if delta > 0.0 && z.abs() < delta {
            return 0.0;
        }
        self.params.gamma[i - 1] * psi * psi * z * z
    }

    /// Control input, coordinates and gain rates at `(x, k)`.
    pub fn control(&self, x: &[f64], k: &[f64]) -> Result<ControlOutput, BackstepError> {
        let n = self.dim();
        if x.len() != n || k.len() != n {
            return Err(BackstepError::Dimension(format!(
                "expected {n} states and gains, got {} and {}",
                x.len(),
                k.len()
            )));
        }
        let vals = self.stages(x, k, n)?;
        let f = |v: &[DualScalar]| v.iter().map(DualScalar::value).collect::<Vec<_>>();
        let z = f(&vals.z);
        let psi = f(&vals.psi);
        let eta = f(&vals.eta);
        let u = vals.alpha[n - 1].value();
        if !u.is_finite() {
            return Err(BackstepError::NonFinite { stage: n });
        }
        let k_dot = (1..=n).map(|i| self.gain_rate(i, z[i - 1], psi[i - 1])).collect();
        Ok(ControlOutput { u, z, psi, eta, k_dot })
    }

    /// Samples `(z, k)` and reports how often some `ψᵢ < 1`.
    pub fn psi_floor_audit(&self, z_box: f64, k_range: (f64, f64), samples: usize, seed: u64) -> Result<PsiFloorAudit, BackstepError> {
        let n = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut violations = 0;
        let mut min_psi = f64::INFINITY;
        for _ in 0..samples {
            let z: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -z_box, z_box)).collect();
            let k: Vec<f64> = (0..n).map(|_| uniform(&mut rng, k_range.0, k_range.1)).collect();
            let x = self.reconstruct(&z, &k)?;
            let vals = self.stages(&x, &k, n)?;
            let smallest = vals.psi.iter().map(DualScalar::value).fold(f64::INFINITY, f64::min);
            min_psi = min_psi.min(smallest);
            if smallest < 1.0 {
                violations += 1;
            }
        }
        Ok(PsiFloorAudit {
            samples,
            violations,
            min_psi,
        })
    }

    /// Human-readable summary of the control law, for run metadata.
    pub fn law_description(&self) -> String {
        let mode = match self.mode() {
            ControllerMode::Auto => "auto (η/ψ constructed)",
            ControllerMode::Paper => "paper (closed-form ψ)",
        };
        format!(
            "{mode}; alpha_i = -mu_i k_i psi_i^{} z_i; k_i' = gamma_i psi_i^2 z_i^2; deadzone = {}",
            self.exponent().power(),
            self.params.deadzone
        )
    }
}
