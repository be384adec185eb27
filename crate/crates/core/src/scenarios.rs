//! Registered scenario plants.
//!
//! * `numeric-2d`: `ẋ₁ = θ₁(x₁ + x₂ + x₂³/5)`, `ẋ₂ = θ₂(x₁x₂ + u + u³/7)`.
//! * `stt-missile`: the roll channel in [`crate::missile`].

use std::sync::Arc;

use crate::autodiff::DualScalar;
use crate::backstep::{
    BackstepError, Backstepping, ControllerMode, DesignParams, PaperDesign, PsiExponent, PsiFormula, StagePoint,
};
use crate::plant::{BoundFn, BoundSpec, OracleConstants, PlantError, PlantSpec, StageFn};

pub const NUMERIC_2D: &str = "numeric-2d";
pub const STT_MISSILE: &str = "stt-missile";

/// Names accepted by the scenario registry.
pub fn registered() -> [&'static str; 2] {
    [NUMERIC_2D, STT_MISSILE]
}

/// The two-state numerical example with its bounds and closed-form design.
#[derive(Debug, Clone)]
pub struct NumericScenario {
    pub plant: PlantSpec,
    pub bounds: BoundSpec,
    pub paper: PaperDesign,
    pub params: DesignParams,
    pub x0: Vec<f64>,
    pub theta: Vec<f64>,
}

impl NumericScenario {
    pub fn paper_controller(&self) -> Result<Backstepping, BackstepError> {
        let mut params = self.params.clone();
        params.mode = ControllerMode::Paper;
        Backstepping::paper(self.bounds.clone(), params, self.paper.clone())
    }

    pub fn auto_controller(&self) -> Result<Backstepping, BackstepError> {
        let mut params = self.params.clone();
        params.mode = ControllerMode::Auto;
        Backstepping::auto(self.bounds.clone(), params)
    }

    pub fn controller(&self, params: DesignParams) -> Result<Backstepping, BackstepError> {
        match params.mode {
            ControllerMode::Paper => Backstepping::paper(self.bounds.clone(), params, self.paper.clone()),
            ControllerMode::Auto => Backstepping::auto(self.bounds.clone(), params),
        }
    }
}

/// `bᵢ = lower θᵢ`, `cᵢ = Bᵢ = upper θᵢ` for a box of multiplicative `θ`.
pub fn numeric_2d_oracle(theta_box: &[(f64, f64)]) -> Result<OracleConstants, PlantError> {
    let lo: Vec<f64> = theta_box.iter().map(|b| b.0).collect();
    let hi: Vec<f64> = theta_box.iter().map(|b| b.1).collect();
    OracleConstants::new(lo, hi.clone(), hi)
}

fn rho2(x: &[DualScalar]) -> DualScalar {
    (x[0].square() + x[1].square() + 1.0) / 4.0
}

fn phi1(x: &[DualScalar]) -> DualScalar {
    x[1].square() / 5.0 + 1.0
}

pub fn numeric_2d() -> NumericScenario {
    let drift: Vec<StageFn> = vec![
        Arc::new(|x: &[DualScalar], th: &[f64]| &x[0] * th[0]),
        Arc::new(|x: &[DualScalar], th: &[f64]| &x[0] * &x[1] * th[1]),
    ];
    let gain: Vec<StageFn> = vec![
        Arc::new(|x: &[DualScalar], th: &[f64]| phi1(x) * th[0]),
        Arc::new(|x: &[DualScalar], th: &[f64]| (x[2].square() / 7.0 + 1.0) * th[1]),
    ];
    let bounds = BoundSpec {
        rho: vec![
            Arc::new(|_: &[DualScalar]| DualScalar::ONE) as BoundFn,
            Arc::new(rho2),
        ],
        gain_bound: vec![Arc::new(phi1)],
    };
    let psi: Vec<PsiFormula> = vec![
        Arc::new(|_: &StagePoint<'_>| DualScalar::Real(2.0)),
        // (1 + 2μ₁k₁)ρ₂ + 8γ₁μ₁z₁² + Φ₁ + 1 + 2(1 + Φ₁ + 2μ₁k₁Φ₁)μ₁k₁
        Arc::new(|p: &StagePoint<'_>| {
            let mk = &p.k[0] * p.mu[0];
            let rho = rho2(p.x);
            let phi = phi1(p.x);
            (&mk * 2.0 + 1.0) * rho
                + p.z[0].square() * (8.0 * p.gamma[0] * p.mu[0])
                + &phi
                + 1.0
                + (&phi + 1.0 + &mk * &phi * 2.0) * &mk * 2.0
        }),
    ];
    NumericScenario {
        plant: PlantSpec::new(NUMERIC_2D, drift, gain),
        bounds,
        paper: PaperDesign {
            psi,
            exponent: PsiExponent::Linear,
        },
        params: DesignParams::uniform(2, 0.2, 0.2, 0.01, ControllerMode::Paper),
        x0: vec![-2.0, 3.0],
        theta: vec![1.0, 2.0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{assumption_probe, AssumptionKind, ProbeBox};

    fn domain(theta: Vec<(f64, f64)>) -> ProbeBox {
        ProbeBox {
            x: vec![(-5.0, 5.0); 2],
            u: (-5.0, 5.0),
            theta,
        }
    }

    #[test]
    fn assumptions_hold_for_nominal_theta() {
        let sc = numeric_2d();
        let theta_box = vec![(1.0, 1.0), (2.0, 2.0)];
        let oracle = numeric_2d_oracle(&theta_box).unwrap();
        let audit = assumption_probe(&sc.plant, &sc.bounds, &oracle, &domain(theta_box), 10_000, 1);
        assert!(audit.passed(), "{:?}", audit.violations.first());
    }

    #[test]
    fn assumptions_hold_over_robustness_box() {
        let sc = numeric_2d();
        let theta_box = vec![(0.8, 1.2), (1.6, 2.4)];
        let oracle = numeric_2d_oracle(&theta_box).unwrap();
        let audit = assumption_probe(&sc.plant, &sc.bounds, &oracle, &domain(theta_box), 10_000, 2);
        assert!(audit.passed(), "{:?}", audit.violations.first());
    }

    #[test]
    fn undersized_drift_constant_is_caught_away_from_origin() {
        // With c₂ = 0.5 < θ₂ = 2, |θ₂x₁x₂| ≤ c₂(1+x₁²+x₂²)(|x₁|+|x₂|)/4 fails
        // only where the quadratic left side beats the linear term of the
        // right side; near the origin the linear term dominates:
        // with r = ‖x‖∞ the left side is ≤ 2r² and the right side ≥ r/8.
        let sc = numeric_2d();
        let theta_box = vec![(1.0, 1.0), (2.0, 2.0)];
        let mut oracle = numeric_2d_oracle(&theta_box).unwrap();
        oracle.c[1] = 0.5;
        let audit = assumption_probe(&sc.plant, &sc.bounds, &oracle, &domain(theta_box), 10_000, 3);
        let drift: Vec<_> = audit
            .violations
            .iter()
            .filter(|v| v.kind == AssumptionKind::DriftBound)
            .collect();
        assert!(!drift.is_empty());
        assert!(drift.iter().all(|v| v.stage == 2));
        // 2r² > r/8 requires r > 1/16.
        let min_norm = drift
            .iter()
            .map(|v| v.x.iter().fold(0.0f64, |m, a| m.max(a.abs())))
            .fold(f64::INFINITY, f64::min);
        assert!(min_norm > 1.0 / 16.0, "{min_norm}");
    }

    #[test]
    fn drift_vanishes_at_origin() {
        let sc = numeric_2d();
        for th in [[0.8, 1.6], [1.0, 2.0], [1.2, 2.4]] {
            let dx = sc.plant.rhs(&[0.0, 0.0], 0.0, &th);
            assert_eq!(dx, vec![0.0, 0.0]);
        }
    }
}
