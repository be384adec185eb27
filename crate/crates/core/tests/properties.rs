use std::sync::Arc;

use backstep_core::autodiff::{smooth_abs, DualScalar};
use backstep_core::backstep::{Backstepping, ControllerMode, DesignParams};
use backstep_core::missile::{missile_control, MissileDesign};
use backstep_core::plant::{decompose, BoundFn, BoundSpec, StageFn, UncertaintyProfile};
use backstep_core::scenarios::numeric_2d;
use backstep_core::simkit::{integrate, IntegratorSettings, PlantLoop};
use backstep_core::verify::{check_theorem1, diagonal_links, monte_carlo, MonteCarloSpec, Tolerances};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

/// Four-stage bounds with state-dependent ρᵢ and Φᵢ, to push the tower past
/// the two-stage example.
fn chain_bounds(n: usize) -> BoundSpec {
    let rho = (0..n)
        .map(|i| {
            Arc::new(move |x: &[DualScalar]| {
                if i == 0 {
                    DualScalar::ONE
                } else {
                    x[i - 1].square() / 4.0 + 0.5
                }
            }) as BoundFn
        })
        .collect();
    let gain_bound = (0..n)
        .map(|i| Arc::new(move |x: &[DualScalar]| x[i + 1].square() / 5.0 + 1.0) as BoundFn)
        .collect();
    BoundSpec { rho, gain_bound }
}

fn chain_controller(n: usize) -> Backstepping {
    Backstepping::auto(chain_bounds(n), DesignParams::uniform(n, 0.2, 0.2, 0.1, ControllerMode::Auto)).unwrap()
}

fn stage1() -> StageFn {
    Arc::new(|x: &[DualScalar], th: &[f64]| (&x[0] + &x[1] + x[1].powi(3) / 5.0) * th[0])
}

proptest! {
    #![proptest_config(config(1000))]

    #[test]
    fn transform_round_trip(
        x in prop::array::uniform2(-5.0f64..5.0),
        k in prop::array::uniform2(0.01f64..10.0),
        auto in any::<bool>(),
    ) {
        let sc = numeric_2d();
        let c = if auto { sc.auto_controller() } else { sc.paper_controller() }.unwrap();
        let z = c.transform(&x, &k).unwrap();
        let back = c.reconstruct(&z, &k).unwrap();
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{x:?} -> {back:?}");
        }
    }

    #[test]
    fn secant_identity(x1 in -5.0f64..5.0, x2 in -5.0f64..5.0, theta in 0.5f64..2.0) {
        prop_assume!(x2.abs() > 1e-8);
        let f = stage1();
        let (varphi, g) = decompose(&f, &[x1, x2], &[theta], 1e-8).unwrap();
        let exact = (x1 + x2 + x2.powi(3) / 5.0) * theta;
        let scale = exact.abs().max((varphi).abs()).max((g * x2).abs()).max(1e-300);
        prop_assert!((varphi + g * x2 - exact).abs() <= 1e-12 * scale);
    }

    #[test]
    fn update_law_dominates_plain_quadratic(
        x in prop::array::uniform2(-5.0f64..5.0),
        k in prop::array::uniform2(0.01f64..10.0),
        auto in any::<bool>(),
    ) {
        let sc = numeric_2d();
        let c = if auto { sc.auto_controller() } else { sc.paper_controller() }.unwrap();
        let out = c.control(&x, &k).unwrap();
        for i in 0..2 {
            prop_assert!(out.psi[i] >= 1.0);
            let gamma = c.params().gamma[i];
            prop_assert!(out.k_dot[i] >= gamma * out.z[i] * out.z[i]);
        }
    }
}

proptest! {
    #![proptest_config(config(10_000))]

    #[test]
    fn smooth_abs_sandwich(a in -1e3f64..1e3, eps in 1e-8f64..1.0) {
        let s = smooth_abs(a, eps);
        prop_assert!(s >= a.abs());
        prop_assert!(s <= a.abs() + eps);
    }

    #[test]
    fn missile_gain_rates_nonnegative(
        state in prop::array::uniform3(-1.0f64..1.0),
        gains in prop::array::uniform2(0.0f64..50.0),
    ) {
        let c = missile_control(&state, gains, &MissileDesign::default());
        prop_assert!(c.k2_dot >= 0.0 && c.k3_dot >= 0.0);
        prop_assert!(c.psi3 >= 1.0);
    }
}

proptest! {
    #![proptest_config(config(100))]

    #[test]
    fn alpha_partials_match_finite_differences(
        z in prop::array::uniform4(-1.0f64..1.0),
        k in prop::array::uniform4(0.05f64..2.0),
    ) {
        let c = chain_controller(4);
        for i in 1..=3 {
            // Stage i+1 sensitivities are the partials of αᵢ.
            let sens = c.sensitivity(i + 1, &z, &k).unwrap();
            let x = sens.x.clone();
            let h = 1e-6;
            for j in 0..i {
                let mut hi = x.clone();
                let mut lo = x.clone();
                hi[j] += h;
                lo[j] -= h;
                let fd = (c.alpha(i, &hi, &k).unwrap() - c.alpha(i, &lo, &k).unwrap()) / (2.0 * h);
                let ad = sens.dalpha_dx[j];
                prop_assert!((ad - fd).abs() <= 1e-5 * fd.abs().max(1.0), "∂α{i}/∂x{}: ad {ad} fd {fd}", j + 1);

                let mut khi = k.to_vec();
                let mut klo = k.to_vec();
                khi[j] += h;
                klo[j] -= h;
                let fd = (c.alpha(i, &x, &khi).unwrap() - c.alpha(i, &x, &klo).unwrap()) / (2.0 * h);
                let ad = sens.dalpha_dk[j];
                prop_assert!((ad - fd).abs() <= 1e-5 * fd.abs().max(1.0), "∂α{i}/∂k{}: ad {ad} fd {fd}", j + 1);
            }
        }
    }

    #[test]
    fn gains_never_decrease_along_trajectories(
        x0 in prop::array::uniform2(-3.0f64..3.0),
        auto in any::<bool>(),
    ) {
        let sc = numeric_2d();
        let c = if auto { sc.auto_controller() } else { sc.paper_controller() }.unwrap();
        let k0 = c.params().k0.clone();
        let system = PlantLoop::new(sc.plant.clone(), UncertaintyProfile::constant(&sc.theta), c);
        // Auto mode is stiff at large x0; h = 1e-3 can overshoot in the first step.
        let (h, dec) = if auto { (2.5e-4, 4) } else { (1e-3, 1) };
        let traj = integrate(&system, &x0, &k0, IntegratorSettings::new(5.0, h, dec), 0).unwrap();
        prop_assert!(traj.is_complete());
        for w in traj.samples.windows(2) {
            for (a, b) in w[0].k.iter().zip(&w[1].k) {
                prop_assert!(*b >= a - 1e-12);
            }
            prop_assert!(w[1].psi.iter().all(|p| *p >= 1.0));
        }
    }
}

#[test]
fn splice_discrepancy_shrinks_with_threshold() {
    let f = stage1();
    let mut last = f64::INFINITY;
    for eps in [1e-2, 1e-4, 1e-6] {
        let (_, g0) = decompose(&f, &[0.7, 0.0], &[1.3], eps).unwrap();
        let worst = [eps * 1.000_001, -eps * 1.000_001]
            .iter()
            .map(|&x2| (decompose(&f, &[0.7, x2], &[1.3], eps).unwrap().1 - g0).abs())
            .fold(0.0, f64::max);
        assert!(worst < last, "discrepancy {worst} at ε_d = {eps} did not shrink from {last}");
        last = worst;
    }
    assert!(last < 1e-9);
}

#[test]
fn psi_floor_holds_on_random_points_in_both_modes() {
    let sc = numeric_2d();
    for c in [sc.paper_controller().unwrap(), sc.auto_controller().unwrap()] {
        let audit = c.psi_floor_audit(5.0, (0.01, 10.0), 10_000, 3).unwrap();
        assert_eq!(audit.violations, 0, "min ψ {}", audit.min_psi);
    }
    let audit = chain_controller(3).psi_floor_audit(2.0, (0.01, 5.0), 2_000, 3).unwrap();
    assert_eq!(audit.violations, 0);
}

#[test]
fn integration_is_bit_reproducible() {
    let sc = numeric_2d();
    let run = || {
        let c = sc.auto_controller().unwrap();
        let k0 = c.params().k0.clone();
        let system = PlantLoop::new(sc.plant.clone(), UncertaintyProfile::constant(&sc.theta), c);
        integrate(&system, &sc.x0, &k0, IntegratorSettings::new(20.0, 1e-3, 10), 7).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.samples.len(), b.samples.len());
    for (s, t) in a.samples.iter().zip(&b.samples) {
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&s.x), bits(&t.x));
        assert_eq!(bits(&s.k), bits(&t.k));
        assert_eq!(s.u.to_bits(), t.u.to_bits());
    }
}

#[test]
fn single_degenerate_sweep_reproduces_nominal_run() {
    let sc = numeric_2d();
    let c = sc.paper_controller().unwrap();
    let settings = IntegratorSettings::new(30.0, 1e-3, 100);
    let tol = Tolerances::default();
    let spec = MonteCarloSpec {
        runs: 1,
        seed: 1,
        x0_box: sc.x0.iter().map(|&v| (v, v)).collect(),
        theta_box: sc.theta.iter().map(|&v| (v, v)).collect(),
        omega: (0.1, 2.0),
    };
    let report = monte_carlo(&sc.plant, &c, &spec, settings, &tol).unwrap();

    let k0 = c.params().k0.clone();
    let links = diagonal_links(&c.params().gamma);
    let system = PlantLoop::new(sc.plant.clone(), UncertaintyProfile::constant(&sc.theta), c);
    let nominal = integrate(&system, &sc.x0, &k0, settings, 0).unwrap();
    let expected = check_theorem1(&nominal, &links, &tol);

    assert_eq!(report.outcomes[0].x0, sc.x0);
    assert_eq!(report.outcomes[0].report, expected);
}
