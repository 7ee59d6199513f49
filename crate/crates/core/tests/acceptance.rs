//! Acceptance criteria 1-11. Prints one PASS/FAIL line per criterion.
//!
//! Criterion 3 asks for local divergence of the sampled iterate at
//! `hk = 0.3`. The iterate's true slope at the rest point is
//! `1 − 2hk(1+R) = −0.2` there, so it converges; the check is run as
//! stated and listed in `EXPECTED_FAIL`. The process exits nonzero if any
//! other criterion fails or if an expected failure starts passing.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::time::Instant;

use percept_core::corridor::{CorridorScene, VehicleState};
use percept_core::multichannel::{
    augment_cost_compare, cost_over_circle, enumerate_patterns, gramian, min_energy_plan,
    simulate_min_energy, GramianMethod, LtiSystem, ProjectionPattern, SteeringTask,
};
use percept_core::numerics::{
    char_poly, eig_small, integrate_ode, mat_exp, poly_eval, Complex, Matrix, Vector,
};
use percept_core::standard_parts::{
    markov_batch, offset_from_hat_a, offset_particular, simulate_dropout, simultaneous_gains_solve,
    DropoutVerdict, GainMatrix, MarkovSwitchPlan, StandardPartsController,
};
use percept_core::steering::{
    critical_gain, finite_diff_jacobian, iterate_map_g_prime, iterate_orbit, linearize_reduced,
    simulate_noisy_batch, simulate_sampled, simulate_two_pixel, sup_abs_g_prime, terminal_abs_x,
    ReceptorArray, SampledSchedule, SteeringGain,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXPECTED_FAIL: &[u32] = &[3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gain(k: f64) -> SteeringGain {
    SteeringGain::new(k).unwrap()
}

fn sorted(mut ev: Vec<Complex>) -> Vec<Complex> {
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    ev
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let scene = CorridorScene::new(2.0, 1.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    let mut converged = 0;
    for i in 0..5 {
        let x0 = -1.5 + 0.75 * i as f64;
        for j in 0..5 {
            let th0 = (60.0 + 15.0 * j as f64).to_radians();
            let run = simulate_two_pixel(
                &VehicleState::new(x0, 0.0, th0),
                &scene,
                gain(0.2),
                120.0,
                1e-2,
            )
            .unwrap();
            let end = run.final_pose();
            let err = end.x.abs().max((end.theta - FRAC_PI_2).abs());
            worst = worst.max(err);
            if run.failure.is_none() && err < 1e-3 {
                converged += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        converged == 25 && secs < 5.0,
        format!("{converged}/25 converged, worst terminal error {worst:.2e}, {secs:.2}s"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let f = rng.random_range(0.5..2.0);
        let k = rng.random_range(0.05..2.0);
        let r = rng.random_range(0.5..3.0);
        let scene = CorridorScene::new(r, f, 1.0).unwrap();
        let rep = linearize_reduced(&scene, gain(k));
        let fd = finite_diff_jacobian(&scene, gain(k), (0.0, FRAC_PI_2)).unwrap();
        let num = sorted(eig_small(&fd).unwrap());
        let closed = sorted(rep.eigenvalues.to_vec());
        for (a, b) in num.iter().zip(&closed) {
            worst = worst.max((*a - *b).abs());
        }
    }

    // bisect on the complex/real regime of the numerical eigenvalues
    let mut boundary_err: f64 = 0.0;
    for &(f, r) in &[(1.0, 1.0), (0.7, 2.0), (1.5, 0.5), (2.0, 3.0)] {
        let scene = CorridorScene::new(r, f, 1.0).unwrap();
        let complex_at = |k: f64| {
            let fd = finite_diff_jacobian(&scene, gain(k), (0.0, FRAC_PI_2)).unwrap();
            eig_small(&fd).unwrap().iter().any(|z| z.im != 0.0)
        };
        let kc = critical_gain(&scene);
        let (mut lo, mut hi) = (kc / 4.0, kc * 4.0);
        assert!(complex_at(lo) && !complex_at(hi));
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if complex_at(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        boundary_err = boundary_err.max((0.5 * (lo + hi) - kc).abs());
    }
    outcome(
        worst < 1e-5 && boundary_err < 1e-6,
        format!("max eigenvalue gap {worst:.2e}, k_crit located to {boundary_err:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let scene = CorridorScene::new(1.0, 1.0, 1.0).unwrap();
    // contraction regime: h = 0.5, k = 0.2
    let sup = sup_abs_g_prime(&scene, gain(0.2), 0.5, 0.4, 0.9, 41).unwrap();
    let mut all_converge = true;
    for &x0 in &[-0.5, 0.0, 0.5] {
        for &phi0 in &[-0.3, 0.0, 0.3] {
            let st = VehicleState::new(x0, 0.0, FRAC_PI_2 + phi0);
            let run = simulate_sampled(
                &st,
                &scene,
                gain(0.2),
                SampledSchedule::new(0.5).unwrap(),
                120.0,
                1e-2,
            )
            .unwrap();
            let end = run.final_pose();
            all_converge &=
                run.failure.is_none() && end.x.abs() < 1e-3 && (end.theta - FRAC_PI_2).abs() < 1e-3;
        }
    }
    let first = sup < 1.0 && all_converge;

    // hk = 0.3: h = 1, k = 0.3, centered and slightly misaligned
    let (h, k) = (1.0, 0.3);
    let orbit = iterate_orbit(0.05, 0.0, &scene, gain(k), h, 20);
    let grows = orbit.len() < 21 || orbit.last().unwrap().abs() > orbit[0].abs();
    let stated_slope = 1.0 - 8.0 * h * k;
    let true_slope = iterate_map_g_prime(0.0, 0.0, &scene, gain(k), h).unwrap();
    outcome(
        first && grows && true_slope.abs() > 1.0,
        format!(
            "hk=0.1: sup|g'|={sup:.3}, 9/9 grid runs converge={all_converge}; \
             hk=0.3: |1-8hk|={:.1} but g'(0)={true_slope:.2}, |phi_20|={:.1e} from 5e-2 (diverges={grows})",
            stated_slope.abs(),
            orbit.last().unwrap().abs()
        ),
    )
}

fn criterion_4() -> Outcome {
    let task = SteeringTask::new([0.0, 0.0], [1.0, 0.0], 1.0).unwrap();
    let mut costs = Vec::new();
    let mut endpoint: f64 = 0.0;
    for m in [1, 2] {
        let sys = LtiSystem::planar_channels(m).unwrap();
        let plan = min_energy_plan(&sys, &task, &ProjectionPattern::full(m)).unwrap();
        let run = simulate_min_energy(&sys, &plan, &task, 1e-3).unwrap();
        endpoint = endpoint.max(run.endpoint_error);
        costs.push(plan.cost_eta);
    }
    let pass =
        (costs[0] - 12.0).abs() < 1e-6 && (costs[1] - 12.0 / 13.0).abs() < 1e-6 && endpoint < 1e-4;
    outcome(
        pass,
        format!(
            "costs {:.9} and {:.9}, endpoint error {endpoint:.1e}",
            costs[0], costs[1]
        ),
    )
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut done = 0;
    let mut violations = 0;
    while done < 200 {
        let n = rng.random_range(2..=3);
        let m = rng.random_range(1..=n);
        let sys =
            LtiSystem::new(random_matrix(&mut rng, n, n), random_matrix(&mut rng, n, m)).unwrap();
        let x1 = Vector::from_fn(n, |_| rng.random_range(-1.0..1.0));
        let task = SteeringTask::new(Vector::zeros(n), x1, 1.0).unwrap();
        let extra = Vector::from_fn(n, |_| rng.random_range(-1.0..1.0));
        // skip draws that are uncontrollable or badly conditioned
        let Ok((before, after)) = augment_cost_compare(&sys, &task, &extra) else {
            continue;
        };
        if after > before + 1e-12 {
            violations += 1;
        }
        done += 1;
    }

    let curves: Vec<Vec<f64>> = (1..=3)
        .map(|m| {
            let sys = LtiSystem::planar_channels(m).unwrap();
            cost_over_circle(&sys, 1.0, 64)
                .unwrap()
                .into_iter()
                .map(|(_, c)| c)
                .collect()
        })
        .collect();
    let ordered = (0..64).all(|i| curves[0][i] >= curves[1][i] && curves[1][i] >= curves[2][i]);
    let max_ratio = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x / y).fold(0.0, f64::max);
    let r12 = max_ratio(&curves[0], &curves[1]);
    let r23 = max_ratio(&curves[1], &curves[2]);
    outcome(
        violations == 0 && ordered && r12 > r23,
        format!(
            "{violations}/200 augmentation violations; pointwise ordering={ordered}; \
             max ratio 1->2 {r12:.3}, 2->3 {r23:.3}"
        ),
    )
}

fn criterion_6() -> Outcome {
    let sys = LtiSystem::planar_channels(3).unwrap();
    let verdicts = enumerate_patterns(&sys, 1.0).unwrap();
    let verdict = |bits: &[u8]| {
        let p = ProjectionPattern::from_bits(bits);
        verdicts
            .iter()
            .find(|v| v.pattern == p)
            .unwrap()
            .controllable
    };
    let pass = verdict(&[1, 0, 0])
        && verdict(&[0, 0, 1])
        && !verdict(&[0, 1, 0])
        && verdict(&[1, 1, 0])
        && verdict(&[1, 0, 1])
        && verdict(&[0, 1, 1])
        && verdict(&[1, 1, 1]);
    let bad: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.controllable)
        .map(|v| v.pattern.to_string())
        .collect();
    outcome(pass, format!("uncontrollable patterns: {}", bad.join(" ")))
}

fn dropout_gain() -> Matrix {
    Matrix::from_rows(&[[0.0, -1.0], [-1.0, 0.0], [-0.5, -0.5]]).unwrap()
}

fn hat_a() -> Matrix {
    Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap()
}

fn criterion_7() -> Outcome {
    let sys = LtiSystem::planar_channels(3).unwrap();
    let patterns: Vec<_> = (0..3)
        .map(|j| ProjectionPattern::drop_channel(3, j))
        .collect();
    let poles = [Complex::real(-1.0), Complex::real(-1.0)];
    let k = simultaneous_gains_solve(&sys, &patterns, &poles, None)
        .unwrap()
        .k;
    let gain_err = k.max_abs_diff(&dropout_gain());

    let mut offset_err: f64 = 0.0;
    for phi in [0.0, FRAC_PI_4, FRAC_PI_2] {
        let (s, c) = f64::sin_cos(phi);
        let goal = Vector::from([c, s]);
        let part = offset_particular(&sys, &k, &goal).unwrap();
        let want = Vector::from([4.0 / 3.0 * s, c - 2.0 / 3.0 * s, 0.5 * c + s / 6.0]);
        offset_err = offset_err.max(part.v.max_abs_diff(&want));
        let hat = offset_from_hat_a(&hat_a(), &k, &goal).unwrap();
        let want = Vector::from([s, c - s, 0.5 * c + 0.5 * s]);
        offset_err = offset_err.max(hat.v.max_abs_diff(&want));
    }
    outcome(
        gain_err < 1e-8 && offset_err < 1e-8,
        format!("gain error {gain_err:.1e}, offset error {offset_err:.1e}"),
    )
}

fn controller(sys: &LtiSystem, goal: [f64; 2], use_hat: bool) -> StandardPartsController {
    let goal = Vector::from(goal);
    let k = dropout_gain();
    let off = if use_hat {
        offset_from_hat_a(&hat_a(), &k, &goal).unwrap()
    } else {
        offset_particular(sys, &k, &goal).unwrap()
    };
    StandardPartsController::new(sys, GainMatrix::new(sys, k).unwrap(), off).unwrap()
}

fn criterion_8() -> Outcome {
    let sys = LtiSystem::planar_channels(3).unwrap();
    let cases = [
        (
            "(1,0)",
            controller(&sys, [1.0, 0.0], false),
            [true, true, true],
        ),
        (
            "(0,1) particular",
            controller(&sys, [0.0, 1.0], false),
            [false, false, false],
        ),
        (
            "(0,1) hat",
            controller(&sys, [0.0, 1.0], true),
            [true, false, true],
        ),
    ];
    let mut pass = true;
    let mut table = Vec::new();
    for (name, ctrl, expect) in &cases {
        let mut row = Vec::new();
        for (j, &reach) in expect.iter().enumerate() {
            let p = ProjectionPattern::drop_channel(3, j);
            let run = simulate_dropout(ctrl, &sys, &p, &Vector::zeros(2), 30.0, 1e-2).unwrap();
            let ok = if reach {
                run.verdict == DropoutVerdict::Reached && run.terminal_distance < 1e-3
            } else {
                matches!(run.verdict, DropoutVerdict::Diverted { .. })
                    && run.terminal_distance > 0.05
            };
            pass &= ok;
            row.push(format!("-{}:{:.1e}", j + 1, run.terminal_distance));
        }
        table.push(format!("{name} [{}]", row.join(" ")));
    }
    outcome(pass, table.join("; "))
}

fn criterion_9() -> Outcome {
    let sys = LtiSystem::planar_channels(3).unwrap();
    let plan = MarkovSwitchPlan {
        controllers: vec![
            controller(&sys, [1.0, 0.0], false),
            controller(&sys, [0.0, 1.0], true),
        ],
        transition_matrix: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        dwell_dt: 0.05,
        seed: 0,
        pattern: ProjectionPattern::from_bits(&[0, 1, 1]),
        initial: 0,
    };
    let seeds: Vec<u64> = (0..200).collect();
    let target = Vector::from([0.5f64.sqrt(), 0.5f64.sqrt()]);
    let runs = markov_batch(
        &plan,
        &sys,
        &Vector::from([0.0, 1.0]),
        &seeds,
        30.0,
        1e-2,
        &target,
    )
    .unwrap();
    let best = runs
        .iter()
        .map(|r| r.min_distance)
        .fold(f64::INFINITY, f64::min);
    let mut mins: Vec<f64> = runs.iter().map(|r| r.min_distance).collect();
    mins.sort_by(f64::total_cmp);
    outcome(
        best < 0.05,
        format!(
            "best min distance {best:.2e}, median {:.2e} over 200 seeds",
            mins[100]
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_10() -> Outcome {
    let scene = CorridorScene::new(2.0, 1.0, 1.0).unwrap();
    let st = VehicleState::new(1.0, 0.0, 100f64.to_radians());
    let seeds: Vec<u64> = (0..100).collect();
    let array = |n| ReceptorArray {
        n_per_side: n,
        dropout_prob: 0.3,
        tau_noise_sigma: 0.2,
        jitter: 0.2,
        seed: 0,
    };
    let terminal = |n| -> Vec<f64> {
        simulate_noisy_batch(&st, &scene, gain(0.2), &array(n), &seeds, 30.0, 1e-2)
            .unwrap()
            .iter()
            .map(|r| terminal_abs_x(&r.run))
            .collect()
    };
    let big = terminal(200);
    let single = terminal(1);
    let within = big.iter().filter(|x| **x < 0.1).count();
    let (m_big, m_single) = (median(big), median(single));
    outcome(
        within >= 95 && m_big < m_single,
        format!(
            "{within}/100 runs end |x|<0.1; median |x| {m_big:.2e} (n=200) vs {m_single:.2e} (n=1)"
        ),
    )
}

fn criterion_11(suite_start: Instant) -> Outcome {
    let sys = LtiSystem::planar_channels(3).unwrap();
    let mut gram_gap: f64 = 0.0;
    for idx in 0..8 {
        let p = ProjectionPattern::from_index(3, idx);
        for t in [0.5, 1.0, 2.0] {
            let q = gramian(&sys, t, &p, GramianMethod::Quadrature).unwrap();
            let s = gramian(&sys, t, &p, GramianMethod::Series).unwrap();
            gram_gap = gram_gap.max(q.w.max_abs_diff(&s.w));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rk_gap: f64 = 0.0;
    let mut residual: f64 = 0.0;
    for n in 2..=4 {
        for _ in 0..10 {
            let a = random_matrix(&mut rng, n, n);
            let x0 = Vector::from_fn(n, |_| rng.random_range(-1.0..1.0));
            let tr = integrate_ode(|_, x| a.matvec(x), &x0, 0.0, 1.0, 1e-3).unwrap();
            let want = mat_exp(&a, 1.0).unwrap().matvec(&x0);
            rk_gap = rk_gap.max(tr.final_state().max_abs_diff(&want));
            let cp = char_poly(&a).unwrap();
            for z in eig_small(&a).unwrap() {
                residual = residual.max(poly_eval(&cp, z).abs());
            }
        }
    }
    let secs = suite_start.elapsed().as_secs_f64();
    outcome(
        gram_gap < 1e-8 && rk_gap < 1e-7 && residual < 1e-9 && secs < 60.0,
        format!(
            "gramian gap {gram_gap:.1e}, rk4 gap {rk_gap:.1e}, char-poly residual {residual:.1e}, \
             suite {secs:.1}s"
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let start = Instant::now();
    let criteria: [Criterion; 10] = [
        (1, "corridor convergence from 25 grid starts", criterion_1),
        (
            2,
            "linearization eigenvalues and critical gain",
            criterion_2,
        ),
        (
            3,
            "sampled steering contraction and divergence",
            criterion_3,
        ),
        (4, "minimum-energy fixtures", criterion_4),
        (5, "channel augmentation lowers cost", criterion_5),
        (6, "three-channel pattern classification", criterion_6),
        (7, "simultaneous gains and offset formulas", criterion_7),
        (8, "dropout verdict table", criterion_8),
        (
            9,
            "markov switching between channel-restricted controllers",
            criterion_9,
        ),
        (10, "noisy receptor array robustness", criterion_10),
    ];
    let mut results: Vec<(u32, &str, Outcome)> = criteria
        .iter()
        .map(|&(id, name, f)| (id, name, f()))
        .collect();
    results.push((
        11,
        "numerics cross-oracles and suite runtime",
        criterion_11(start),
    ));

    let mut unexpected = Vec::new();
    for (id, name, out) in &results {
        let tag = if out.pass { "PASS" } else { "FAIL" };
        let expected = EXPECTED_FAIL.contains(id);
        let note = if expected && !out.pass {
            " (expected)"
        } else {
            ""
        };
        println!("criterion {id:>2} {tag}{note}: {name} | {}", out.detail);
        if out.pass == expected {
            unexpected.push(*id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
