use std::f64::consts::FRAC_PI_2;

use percept_core::corridor::{CorridorScene, VehicleState};
use percept_core::numerics::{eig_small, is_hurwitz};
use percept_core::steering::{
    finite_diff_jacobian, iterate_map_g, iterate_map_g_prime, iterate_orbit, linearize_reduced,
    simulate_noisy_array, simulate_sampled, simulate_two_pixel, ReceptorArray, SampledSchedule,
    SteeringGain,
};
use proptest::prelude::*;

fn gain(k: f64) -> SteeringGain {
    SteeringGain::new(k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rest_point_is_hurwitz_for_every_gain(f in 0.3f64..3.0, r in 0.3f64..3.0, k in 0.01f64..5.0) {
        let scene = CorridorScene::new(r, f, 1.0).unwrap();
        let rep = linearize_reduced(&scene, gain(k));
        prop_assert!(is_hurwitz(&rep.jacobian).unwrap());
        prop_assert!(rep.eigenvalues.iter().all(|z| z.re < 0.0));
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences(f in 0.3f64..3.0, r in 0.3f64..3.0, k in 0.01f64..5.0, v in 0.5f64..2.0) {
        let scene = CorridorScene::new(r, f, v).unwrap();
        let rep = linearize_reduced(&scene, gain(k));
        let fd = finite_diff_jacobian(&scene, gain(k), (0.0, FRAC_PI_2)).unwrap();
        let scale = rep.jacobian.max_abs().max(1.0);
        prop_assert!(fd.max_abs_diff(&rep.jacobian) < 1e-6 * scale);
        let trace: f64 = eig_small(&fd).unwrap().iter().map(|z| z.re).sum();
        prop_assert!((trace - rep.jacobian.trace()).abs() < 1e-6 * scale);
    }

    #[test]
    fn g_prime_agrees_with_difference_quotient(
        phi in -0.6f64..0.6, xfrac in -0.9f64..0.9, k in 0.05f64..1.0, h in 0.05f64..1.0,
    ) {
        let scene = CorridorScene::new(1.0, 1.0, 1.0).unwrap();
        let x = xfrac;
        let e = 1e-6;
        let fd = (iterate_map_g(phi + e, x, &scene, gain(k), h).unwrap()
            - iterate_map_g(phi - e, x, &scene, gain(k), h).unwrap()) / (2.0 * e);
        let an = iterate_map_g_prime(phi, x, &scene, gain(k), h).unwrap();
        prop_assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0), "{fd} vs {an}");
    }

    #[test]
    fn contracting_iterate_reaches_its_fixed_point(
        phi0 in -0.3f64..0.3, x in -0.5f64..0.5, hk in 0.02f64..0.15,
    ) {
        let scene = CorridorScene::new(1.0, 1.0, 1.0).unwrap();
        let (h, k) = (0.5, hk / 0.5);
        let orbit = iterate_orbit(phi0, x, &scene, gain(k), h, 400);
        prop_assert_eq!(orbit.len(), 401);
        let last = orbit[400];
        let next = iterate_map_g(last, x, &scene, gain(k), h).unwrap();
        prop_assert!((next - last).abs() < 1e-12);
        if x == 0.0 {
            prop_assert!(last.abs() < 1e-12);
        }
    }

    #[test]
    fn two_pixel_runs_stay_in_corridor(x0 in -1.5f64..1.5, deg in 60.0f64..120.0, k in 0.05f64..1.0) {
        let scene = CorridorScene::new(2.0, 1.0, 1.0).unwrap();
        let run = simulate_two_pixel(&VehicleState::new(x0, 0.0, deg.to_radians()), &scene, gain(k), 20.0, 1e-2)
            .unwrap();
        prop_assert!(run.failure.is_none());
        prop_assert!(run.trajectory.states.iter().all(|s| s[0].abs() < 2.0));
    }
}

#[test]
fn sampled_grid_converges_in_contraction_regime() {
    let scene = CorridorScene::new(1.0, 1.0, 1.0).unwrap();
    for &x0 in &[-0.5, 0.0, 0.5] {
        for &phi0 in &[-0.3, 0.0, 0.3] {
            let st = VehicleState::new(x0, 0.0, FRAC_PI_2 + phi0);
            let run = simulate_sampled(
                &st,
                &scene,
                gain(0.2),
                SampledSchedule::new(0.5).unwrap(),
                100.0,
                1e-2,
            )
            .unwrap();
            let end = run.final_pose();
            assert!(
                end.x.abs() < 1e-3 && (end.theta - FRAC_PI_2).abs() < 1e-3,
                "{x0} {phi0}"
            );
        }
    }
}

#[test]
fn iterate_diverges_when_slope_exceeds_one() {
    // g'(0) = 1 - 4hk at R = 1; hk = 0.6 gives -1.4
    let scene = CorridorScene::new(1.0, 1.0, 1.0).unwrap();
    let slope = iterate_map_g_prime(0.0, 0.0, &scene, gain(0.6), 1.0).unwrap();
    assert!((slope + 1.4).abs() < 1e-12);
    let orbit = iterate_orbit(1e-3, 0.0, &scene, gain(0.6), 1.0, 40);
    assert!(orbit.len() < 41 || orbit.last().unwrap().abs() > 0.1);
}

#[test]
fn larger_array_averages_noise_down() {
    let scene = CorridorScene::new(2.0, 1.0, 1.0).unwrap();
    let st = VehicleState::new(1.0, 0.0, 100f64.to_radians());
    let terminal = |n| {
        let array = ReceptorArray {
            n_per_side: n,
            dropout_prob: 0.3,
            tau_noise_sigma: 0.2,
            jitter: 0.2,
            seed: 4,
        };
        let run = simulate_noisy_array(&st, &scene, gain(0.2), &array, 30.0, 1e-2).unwrap();
        assert!(run.run.failure.is_none());
        run.run.final_pose().x.abs()
    };
    assert!(terminal(200) < 0.1);
}
