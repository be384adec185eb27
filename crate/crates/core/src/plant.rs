//! Pseudo-affine pure-feedback plants, their bound data and uncertainty
//! profiles.
//!
//! A plant of dimension `n` evolves as
//!
//! ```text
//! ẋᵢ = φᵢ(x̄ᵢ, θ) + gᵢ(x̄ᵢ₊₁, θ)·xᵢ₊₁,   i = 1..n,   xₙ₊₁ := u
//! ```
//!
//! with `φᵢ(0, θ) = 0`. Stage functions are evaluated on the dual tower so
//! that general pure-feedback stages can be split by [`decompose`].

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{gradient_at, lift, DualScalar};

/// Stage function of the plant: `(x̄, θ) -> ℝ`.
pub type StageFn = Arc<dyn Fn(&[DualScalar], &[f64]) -> DualScalar + Send + Sync>;
/// Known bound function of the state only.
pub type BoundFn = Arc<dyn Fn(&[DualScalar]) -> DualScalar + Send + Sync>;

/// Default secant/derivative switch-over threshold for [`decompose`].
pub const DEFAULT_SPLICE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("uncertainty component {component} = {value} leaves its box [{lo}, {hi}]")]
    OutOfBox {
        component: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("uncertainty component {component}: {reason}")]
    InvalidProfile { component: usize, reason: String },
    #[error("non-finite stage evaluation in decomposition: {0}")]
    NonFinite(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// `ẋᵢ = drift[i](x̄ᵢ, θ) + gain[i](x̄ᵢ₊₁, θ)·xᵢ₊₁`, with `xₙ₊₁ = u`.
#[derive(Clone)]
pub struct PlantSpec {
    pub name: String,
    pub drift: Vec<StageFn>,
    pub gain: Vec<StageFn>,
}

impl fmt::Debug for PlantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantSpec")
            .field("name", &self.name)
            .field("n", &self.dim())
            .finish()
    }
}

impl PlantSpec {
    pub fn new(name: impl Into<String>, drift: Vec<StageFn>, gain: Vec<StageFn>) -> Self {
        assert_eq!(drift.len(), gain.len(), "one drift and one gain per stage");
        Self {
            name: name.into(),
            drift,
            gain,
        }
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    /// Drift `φᵢ` and gain `gᵢ` of stage `i` (1-based) at `extended = (x, u)`.
    pub fn stage_terms(&self, i: usize, extended: &[DualScalar], theta: &[f64]) -> (f64, f64) {
        let phi = (self.drift[i - 1])(&extended[..i], theta).value();
        let g = (self.gain[i - 1])(&extended[..=i], theta).value();
        (phi, g)
    }

    /// State derivative for input `u`.
    pub fn rhs(&self, x: &[f64], u: f64, theta: &[f64]) -> Vec<f64> {
        let mut extended = lift(x);
        extended.push(DualScalar::Real(u));
        (1..=self.dim())
            .map(|i| {
                let (phi, g) = self.stage_terms(i, &extended, theta);
                phi + g * extended[i].value()
            })
            .collect()
    }
}

/// Known bound functions: `ρᵢ(x̄ᵢ)` for every stage and `Φᵢ(x̄ᵢ₊₁)` for the
/// first `n − 1` stages.
#[derive(Clone)]
pub struct BoundSpec {
    pub rho: Vec<BoundFn>,
    pub gain_bound: Vec<BoundFn>,
}

impl fmt::Debug for BoundSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundSpec")
            .field("stages", &self.rho.len())
            .finish()
    }
}

impl BoundSpec {
    pub fn dim(&self) -> usize {
        self.rho.len()
    }
}

/// One component of `θ(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaComponent {
    Constant { value: f64, lo: f64, hi: f64 },
    /// `mean + amplitude·sin(omega·t + phase)`.
    Sinusoid {
        mean: f64,
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
        lo: f64,
        hi: f64,
    },
}

impl ThetaComponent {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            ThetaComponent::Constant { lo, hi, .. } | ThetaComponent::Sinusoid { lo, hi, .. } => {
                (lo, hi)
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            ThetaComponent::Constant { value, .. } => value,
            ThetaComponent::Sinusoid {
                mean,
                amplitude,
                omega,
                phase,
                ..
            } => mean + amplitude * (omega * t + phase).sin(),
        }
    }

    /// Range actually swept by the component over all t.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            ThetaComponent::Constant { value, .. } => (value, value),
            ThetaComponent::Sinusoid {
                mean, amplitude, ..
            } => (mean - amplitude.abs(), mean + amplitude.abs()),
        }
    }
}

/// Bounded, piecewise-continuous `θ: ℝ≥0 → ℝᵐ` with a declared box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyProfile {
    components: Vec<ThetaComponent>,
}

impl UncertaintyProfile {
    /// Validates that every component stays inside its declared box.
    pub fn new(components: Vec<ThetaComponent>) -> Result<Self, PlantError> {
        for (i, c) in components.iter().enumerate() {
            let (lo, hi) = c.bounds();
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(PlantError::InvalidProfile {
                    component: i,
                    reason: format!("box [{lo}, {hi}] is empty or non-finite"),
                });
            }
            let (min, max) = c.range();
            if min < lo || max > hi {
                let value = if min < lo { min } else { max };
                return Err(PlantError::OutOfBox {
                    component: i,
                    value,
                    lo,
                    hi,
                });
            }
        }
        Ok(Self { components })
    }

    pub fn constant(values: &[f64]) -> Self {
        Self {
            components: values
                .iter()
                .map(|&v| ThetaComponent::Constant {
                    value: v,
                    lo: v,
                    hi: v,
                })
                .collect(),
        }
    }

    pub fn components(&self) -> &[ThetaComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.components.iter().map(ThetaComponent::bounds).collect()
    }

    /// `θ(t)`; a component outside its box is reported by index.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, PlantError> {
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let v = c.eval(t);
                let (lo, hi) = c.bounds();
                // Allow rounding in the sinusoid evaluation.
                let slack = 1e-12 * hi.abs().max(lo.abs()).max(1.0);
                if v < lo - slack || v > hi + slack {
                    Err(PlantError::OutOfBox {
                        component: i,
                        value: v,
                        lo,
                        hi,
                    })
                } else {
                    Ok(v)
                }
            })
            .collect()
    }

    /// Same as [`eval`](Self::eval) without the box check, for hot loops on
    /// profiles already validated at construction.
    pub fn eval_unchecked(&self, t: f64) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(t)).collect()
    }
}

/// True constants of the bound assumptions for a concrete scenario. Only
/// the verification layer consumes these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConstants {
    /// Lower gain bounds `bᵢ`.
    pub b: Vec<f64>,
    /// Upper gain multipliers `Bᵢ` (length `n − 1` is enough; extra ignored).
    pub big_b: Vec<f64>,
    /// Drift multipliers `cᵢ`.
    pub c: Vec<f64>,
}

impl OracleConstants {
    pub fn new(b: Vec<f64>, big_b: Vec<f64>, c: Vec<f64>) -> Result<Self, PlantError> {
        let oracle = Self { b, big_b, c };
        oracle.validate()?;
        Ok(oracle)
    }

    fn validate(&self) -> Result<(), PlantError> {
        let n = self.dim();
        if self.c.len() != n || self.big_b.len() + 1 < n {
            return Err(PlantError::Dimension(format!(
                "oracle with {} b, {} B, {} c",
                n,
                self.big_b.len(),
                self.c.len()
            )));
        }
        for (i, (&b, &big)) in self.b.iter().zip(&self.big_b).enumerate() {
            if !(b > 0.0 && b <= big) {
                return Err(PlantError::Dimension(format!(
                    "stage {}: need 0 < b ≤ B, got b={b}, B={big}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `ϑᵢ = max(1, c₁..cᵢ, B₁..Bᵢ)` (1-based `i`).
    pub fn vartheta(&self, i: usize) -> f64 {
        let cs = self.c.iter().take(i);
        let bs = self.big_b.iter().take(i);
        cs.chain(bs).fold(1.0, |m, &v| m.max(v))
    }

    /// `β₁ = c₁`, `βᵢ = i·ϑᵢ² + 1`.
    pub fn beta(&self, i: usize) -> f64 {
        if i == 1 {
            self.c[0]
        } else {
            i as f64 * self.vartheta(i).powi(2) + 1.0
        }
    }

    /// `σᵢ = Bᵢ²`.
    pub fn sigma(&self, i: usize) -> f64 {
        self.big_b[i - 1].powi(2)
    }

    /// `ε = max(β₁..βₙ, n, n−1+σ₁, …, 1+σₙ₋₁)`.
    pub fn epsilon(&self) -> f64 {
        let n = self.dim();
        let mut eps = n as f64;
        for i in 1..=n {
            eps = eps.max(self.beta(i));
        }
        for i in 1..n {
            eps = eps.max((n - i) as f64 + self.sigma(i));
        }
        eps
    }
}

/// Splits a general pure-feedback stage `f(x̄ᵢ₊₁, θ)` into
/// `φ = f(x̄ᵢ, 0, θ)` and a gain `g` with `φ + g·xᵢ₊₁ = f`.
///
/// Away from `xᵢ₊₁ = 0` the gain is the exact secant; within `splice` of it
/// the derivative `∂f/∂xᵢ₊₁` at zero is used instead.
pub fn decompose(
    f: &StageFn,
    point: &[f64],
    theta: &[f64],
    splice: f64,
) -> Result<(f64, f64), PlantError> {
    let last = point.len() - 1;
    let full = lift(point);
    let mut at_zero = full.clone();
    at_zero[last] = DualScalar::Real(0.0);
    let varphi = f(&at_zero, theta).value();
    if !varphi.is_finite() {
        return Err(PlantError::NonFinite(format!("f(x̄, 0) = {varphi}")));
    }
    let xnext = point[last];
    let g = if xnext.abs() > splice {
        let fx = f(&full, theta).value();
        if !fx.is_finite() {
            return Err(PlantError::NonFinite(format!("f(x̄) = {fx}")));
        }
        (fx - varphi) / xnext
    } else {
        let (_, partials) = gradient_at(
            |v| {
                let mut args = at_zero.clone();
                args[last] = v[0].clone();
                Ok(f(&args, theta))
            },
            &[DualScalar::Real(0.0)],
        )
        .map_err(|e| PlantError::NonFinite(e.to_string()))?;
        partials[0].value()
    };
    if !g.is_finite() {
        return Err(PlantError::NonFinite(format!("gain {g}")));
    }
    Ok((varphi, g))
}

/// Axis-aligned sampling box for [`assumption_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeBox {
    pub x: Vec<(f64, f64)>,
    pub u: (f64, f64),
    pub theta: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionKind {
    /// `|φᵢ| ≤ cᵢ·ρᵢ·Σ|xⱼ|`
    DriftBound,
    /// `gᵢ ≥ bᵢ`
    GainLower,
    /// `gᵢ ≤ Bᵢ·Φᵢ`
    GainUpper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionViolation {
    pub stage: usize,
    pub kind: AssumptionKind,
    pub x: Vec<f64>,
    pub u: f64,
    pub theta: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionAudit {
    pub samples: usize,
    pub violations: Vec<AssumptionViolation>,
}

impl AssumptionAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples `(x, θ, u)` uniformly in `domain` and checks both bound
/// assumptions at every stage. Violations are collected, never raised.
pub fn assumption_probe(
    plant: &PlantSpec,
    bounds: &BoundSpec,
    oracle: &OracleConstants,
    domain: &ProbeBox,
    samples: usize,
    seed: u64,
) -> AssumptionAudit {
    let n = plant.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    for _ in 0..samples {
        let x: Vec<f64> = domain.x.iter().map(|&(lo, hi)| uniform(&mut rng, lo, hi)).collect();
        let u = uniform(&mut rng, domain.u.0, domain.u.1);
        let theta: Vec<f64> = domain
            .theta
            .iter()
            .map(|&(lo, hi)| uniform(&mut rng, lo, hi))
            .collect();
        let mut extended = lift(&x);
        extended.push(DualScalar::Real(u));
        for i in 1..=n {
            let (phi, g) = plant.stage_terms(i, &extended, &theta);
            let rho = (bounds.rho[i - 1])(&extended[..i]).value();
            let sum_abs: f64 = x[..i].iter().map(|v| v.abs()).sum();
            let mut push = |kind, lhs: f64, rhs: f64| {
                violations.push(AssumptionViolation {
                    stage: i,
                    kind,
                    x: x.clone(),
                    u,
                    theta: theta.clone(),
                    lhs,
                    rhs,
                })
            };
            let drift_rhs = oracle.c[i - 1] * rho * sum_abs;
            if phi.abs() > drift_rhs * (1.0 + 1e-12) + 1e-300 {
                push(AssumptionKind::DriftBound, phi.abs(), drift_rhs);
            }
            if !(g >= oracle.b[i - 1]) {
                push(AssumptionKind::GainLower, g, oracle.b[i - 1]);
            }
            if i < n {
                let upper = oracle.big_b[i - 1] * (bounds.gain_bound[i - 1])(&extended[..=i]).value();
                if !(g <= upper * (1.0 + 1e-12)) {
                    push(AssumptionKind::GainUpper, g, upper);
                }
            }
        }
    }
    AssumptionAudit {
        samples,
        violations,
    }
}

pub(crate) fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + (hi - lo) * rng.gen::<f64>()
    } else {
        lo
    }
}
