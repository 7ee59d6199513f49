//! Scenario dispatch: each scenario turns a validated config into a table,
//! a plot, verdicts and metrics.

use std::f64::consts::FRAC_PI_2;

use percept_core::corridor::{CorridorScene, VehicleState};
use percept_core::multichannel::{
    cost_over_circle, enumerate_patterns, gramian, min_energy_plan, simulate_min_energy,
    GramianMethod, LtiSystem, ProjectionPattern, SteeringTask,
};
use percept_core::numerics::{Complex, Matrix, OdeTrajectory, Vector};
use percept_core::standard_parts::{
    drift_family, markov_batch, offset_from_hat_a, offset_min_norm, offset_particular,
    simulate_dropout, simultaneous_gains_solve, GainMatrix, MarkovSwitchPlan,
    StandardPartsController,
};
use percept_core::steering::{
    critical_gain, iterate_map_g_prime, linearize_reduced, simulate_noisy_batch, simulate_sampled,
    simulate_two_pixel, terminal_abs_x, ReceptorArray, SampledSchedule, SteeringGain, SteeringRun,
};
use percept_core::Error;
use serde_json::{json, Map, Value};

use crate::config::ScenarioConfig;
use crate::output::Table;
use crate::svg::{Plot, Series};
use crate::CliError;

/// Relative slack when comparing costs across channel counts.
const ORDERING_SLACK: f64 = 1e-9;
/// Distance to the target that counts as a close approach in the Markov runs.
const MARKOV_CLOSE: f64 = 0.05;

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub trajectory: Table,
    pub plot: Plot,
    /// Additional CSV files as `(file name, table)`.
    pub extra_tables: Vec<(String, Table)>,
    pub verdicts: Map<String, Value>,
    pub metrics: Map<String, Value>,
    pub notes: Vec<String>,
}

impl Outcome {
    fn verdict(&mut self, key: &str, v: impl Into<Value>) {
        self.verdicts.insert(key.into(), v.into());
    }

    fn metric(&mut self, key: &str, v: impl Into<Value>) {
        self.metrics.insert(key.into(), v.into());
    }
}

pub fn dispatch(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    match cfg.scenario.as_str() {
        "corridor" | "corridor-sampled" => corridor(cfg),
        "corridor-noisy" => corridor_noisy(cfg),
        "min-energy" => min_energy(cfg),
        "cost-sweep" => cost_sweep(cfg),
        "channel-classify" => channel_classify(cfg),
        "dropout" => dropout(cfg),
        "markov" => markov(cfg),
        other => Err(CliError::Config(vec![format!(
            "unknown scenario `{other}`"
        )])),
    }
}

fn complex_json(z: &Complex) -> Value {
    json!([z.re, z.im])
}

fn plane_points(tr: &OdeTrajectory, i: usize, j: usize) -> Vec<(f64, f64)> {
    tr.states.iter().map(|s| (s[i], s[j])).collect()
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

/// Rows of `t, state..., control...`.
fn state_control_table(tr: &OdeTrajectory, controls: &[Vector], m: usize) -> Table {
    let mut table = Table::new(
        std::iter::once("t".to_string())
            .chain(numbered("x", tr.dim()))
            .chain(numbered("u", m)),
    );
    for (i, (t, s)) in tr.times.iter().zip(&tr.states).enumerate() {
        let mut row = vec![*t];
        row.extend_from_slice(s);
        match controls.get(i) {
            Some(u) => row.extend_from_slice(u),
            None => row.extend(std::iter::repeat_n(f64::NAN, m)),
        }
        table.rows.push(row);
    }
    table
}

fn scene(cfg: &ScenarioConfig) -> Result<CorridorScene, Error> {
    CorridorScene::new(cfg.f64("R"), cfg.f64("f"), cfg.f64("v"))
}

fn start_pose(cfg: &ScenarioConfig) -> VehicleState {
    VehicleState::new(cfg.f64("x0"), 0.0, cfg.f64("theta0_deg").to_radians())
}

/// Table, plot, verdicts and metrics shared by the corridor scenarios.
fn steering_outcome(
    run: &SteeringRun,
    scene: &CorridorScene,
    k: SteeringGain,
    title: &str,
) -> Outcome {
    let mut out = Outcome::default();
    let tr = &run.trajectory;
    let mut table = Table::new(["t", "x", "y", "theta", "u"]);
    for ((t, s), u) in tr.times.iter().zip(&tr.states).zip(&run.controls) {
        table.rows.push(vec![*t, s[0], s[1], s[2], *u]);
    }
    out.trajectory = table;

    let end = tr.final_state();
    out.metric("final_x", end[0]);
    out.metric("final_abs_x", end[0].abs());
    out.metric("final_y", end[1]);
    out.metric("final_theta", end[2]);
    out.metric("final_heading_error", (end[2] - FRAC_PI_2).abs());
    out.metric("final_time", tr.final_time());
    out.metric("convergence_time", run.convergence_time());
    let lin = linearize_reduced(scene, k);
    out.metric("k_crit", critical_gain(scene));
    out.metric(
        "linearized_eigenvalues",
        lin.eigenvalues.iter().map(complex_json).collect::<Vec<_>>(),
    );
    out.metric("linearized_jacobian", lin.jacobian.to_rows());
    out.verdict("converged", run.converged());
    out.verdict(
        "failure",
        run.failure.map_or(
            Value::Null,
            |f| json!({ "cause": format!("{:?}", f.cause), "time": f.time }),
        ),
    );
    out.notes.extend(run.notes.iter().cloned());

    let (y_lo, y_hi) = (tr.states[0][1], end[1]);
    let r = scene.half_width;
    out.plot = Plot {
        title: title.into(),
        x_label: "x, m".into(),
        y_label: "y, m".into(),
        series: vec![
            Series::line("path", plane_points(tr, 0, 1)),
            Series::line("left wall", vec![(-r, y_lo), (-r, y_hi)]),
            Series::line("right wall", vec![(r, y_lo), (r, y_hi)]),
        ],
        equal_aspect: false,
    };
    out
}

fn corridor(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let scene = scene(cfg)?;
    let k = SteeringGain::new(cfg.f64("k"))?;
    let start = start_pose(cfg);
    let (t_end, dt) = (cfg.f64("t_end"), cfg.f64("dt"));
    if cfg.scenario == "corridor" {
        let run = simulate_two_pixel(&start, &scene, k, t_end, dt)?;
        return Ok(steering_outcome(
            &run,
            &scene,
            k,
            "Two-receptor tau balance",
        ));
    }
    let h = cfg.f64("h");
    let run = simulate_sampled(&start, &scene, k, SampledSchedule::new(h)?, t_end, dt)?;
    let mut out = steering_outcome(&run, &scene, k, &format!("Sampled tau balance, h = {h}"));
    let slope = iterate_map_g_prime(0.0, 0.0, &scene, k, h)?;
    out.metric("map_slope_at_center", slope);
    out.verdict("map_contracts_at_center", slope.abs() < 1.0);
    Ok(out)
}

fn corridor_noisy(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let scene = scene(cfg)?;
    let k = SteeringGain::new(cfg.f64("k"))?;
    let array = ReceptorArray {
        n_per_side: cfg.usize("n_per_side"),
        dropout_prob: cfg.f64("dropout_prob"),
        tau_noise_sigma: cfg.f64("tau_noise_sigma"),
        jitter: cfg.f64("jitter"),
        seed: cfg.seed,
    };
    let seeds: Vec<u64> = (0..cfg.usize("runs") as u64)
        .map(|i| cfg.seed + i)
        .collect();
    let runs = simulate_noisy_batch(
        &start_pose(cfg),
        &scene,
        k,
        &array,
        &seeds,
        cfg.f64("t_end"),
        cfg.f64("dt"),
    )?;
    let mut out = steering_outcome(
        &runs[0].run,
        &scene,
        k,
        &format!("Receptor array, {} per side", array.n_per_side),
    );
    let mut terminal: Vec<f64> = runs.iter().map(|r| terminal_abs_x(&r.run)).collect();
    let failures = runs.iter().filter(|r| r.run.failure.is_some()).count();
    let starved = runs.iter().map(|r| r.starved_fraction).sum::<f64>() / runs.len() as f64;
    out.metric("terminal_abs_x", terminal.clone());
    terminal.sort_by(f64::total_cmp);
    out.metric("median_terminal_abs_x", median_sorted(&terminal));
    out.metric("max_terminal_abs_x", terminal[terminal.len() - 1]);
    out.metric("mean_starved_fraction", starved);
    out.verdict("failed_runs", failures);
    out.notes.push(format!(
        "trajectory and plot show seed {}; batch seeds {}..={}",
        seeds[0],
        seeds[0],
        seeds[seeds.len() - 1]
    ));
    Ok(out)
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn system(cfg: &ScenarioConfig) -> Result<LtiSystem, Error> {
    match (cfg.rows("a"), cfg.rows("b")) {
        (Some(a), Some(b)) => LtiSystem::new(Matrix::from_rows(&a)?, Matrix::from_rows(&b)?),
        _ => LtiSystem::planar_channels(cfg.usize("channels")),
    }
}

fn min_energy(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let sys = system(cfg)?;
    let (n, m) = (sys.n(), sys.m());
    let x0 = cfg
        .opt("x0")
        .map_or_else(|| vec![0.0; n], |_| cfg.numbers("x0"));
    let horizon = cfg.f64("T");
    let task = SteeringTask::new(x0, cfg.numbers("x1"), horizon)?;
    let pattern = cfg
        .pattern("pattern")
        .unwrap_or_else(|| ProjectionPattern::full(m));

    let mut out = Outcome::default();
    let g = gramian(&sys, horizon, &pattern, GramianMethod::Quadrature)?;
    out.metric("gramian", g.w.to_rows());
    out.metric("gramian_eigenvalues", g.eigenvalues()?);
    out.metric("gramian_condition_number", g.condition_number()?);
    out.metric("pattern", pattern.to_string());

    let plan = match min_energy_plan(&sys, &task, &pattern) {
        Ok(plan) => plan,
        Err(Error::NotControllable { detail, .. }) => {
            out.verdict("controllable", false);
            out.notes.push(format!("no plan: {detail}"));
            out.trajectory = Table::new(
                std::iter::once("t".to_string())
                    .chain(numbered("x", n))
                    .chain(numbered("u", m)),
            );
            out.plot = Plot {
                title: format!("No minimum-energy plan under {pattern}"),
                ..Plot::default()
            };
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    };
    let run = simulate_min_energy(&sys, &plan, &task, cfg.f64("dt"))?;
    out.verdict("controllable", true);
    out.metric("cost", plan.cost_eta);
    out.metric("realized_cost", run.realized_cost);
    out.metric("endpoint_error", run.endpoint_error);
    out.metric("lambda", plan.lambda.to_vec());
    out.trajectory = state_control_table(&run.trajectory, &run.controls, m);

    let tr = &run.trajectory;
    out.plot = if n == 2 {
        Plot {
            title: format!("Minimum-energy path under {pattern}"),
            x_label: "x1".into(),
            y_label: "x2".into(),
            series: vec![
                Series::line("path", plane_points(tr, 0, 1)),
                Series::markers("target", vec![(task.x1[0], task.x1[1])]),
            ],
            equal_aspect: true,
        }
    } else {
        Plot {
            title: format!("Minimum-energy states under {pattern}"),
            x_label: "t, s".into(),
            y_label: "state".into(),
            series: (0..n)
                .map(|i| {
                    let pts = tr
                        .times
                        .iter()
                        .zip(&tr.states)
                        .map(|(t, s)| (*t, s[i]))
                        .collect();
                    Series::line(format!("x{}", i + 1), pts)
                })
                .collect(),
            equal_aspect: false,
        }
    };
    Ok(out)
}

fn cost_sweep(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let horizon = cfg.f64("T");
    let n_phi = cfg.usize("n_phi");
    let sweeps = (1..=3)
        .map(|m| cost_over_circle(&LtiSystem::planar_channels(m)?, horizon, n_phi))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Outcome::default();
    let mut costs = Table::new(["phi", "cost_1", "cost_2", "cost_3"]);
    let mut violations = 0usize;
    let mut ratios = [0.0f64; 2];
    for i in 0..n_phi {
        let c: Vec<f64> = sweeps.iter().map(|s| s[i].1).collect();
        costs.rows.push(vec![sweeps[0][i].0, c[0], c[1], c[2]]);
        for j in 0..2 {
            if c[j + 1] > c[j] * (1.0 + ORDERING_SLACK) {
                violations += 1;
            }
            ratios[j] = ratios[j].max(c[j] / c[j + 1]);
        }
    }
    for (m, sweep) in sweeps.iter().enumerate() {
        let (lo, hi) = sweep
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
                (a.min(p.1), b.max(p.1))
            });
        out.metric(&format!("min_cost_{}", m + 1), lo);
        out.metric(&format!("max_cost_{}", m + 1), hi);
    }
    out.metric("max_ratio_1_to_2", ratios[0]);
    out.metric("max_ratio_2_to_3", ratios[1]);
    out.metric("ordering_violations", violations);
    out.verdict("monotone_channel_ordering", violations == 0);
    out.notes
        .push("per-angle costs are in costs.csv; trajectory.csv carries only its header".into());

    out.trajectory = Table::new(["t"]);
    out.plot = Plot {
        title: format!("Minimum-energy cost to the unit circle, T = {horizon}"),
        x_label: "phi, rad".into(),
        y_label: "cost".into(),
        series: (0..3)
            .map(|j| {
                let pts = costs.rows.iter().map(|r| (r[0], r[j + 1])).collect();
                Series::line(format!("{} channel(s)", j + 1), pts)
            })
            .collect(),
        equal_aspect: false,
    };
    out.extra_tables.push(("costs.csv".into(), costs));
    Ok(out)
}

fn channel_classify(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let sys = system(cfg)?;
    let verdicts = enumerate_patterns(&sys, cfg.f64("T"))?;
    let mut out = Outcome::default();
    let mut table = Map::new();
    let mut bad = Vec::new();
    let (mut yes, mut no) = (Vec::new(), Vec::new());
    for (idx, v) in verdicts.iter().enumerate() {
        let name = v.pattern.to_string();
        table.insert(name.clone(), v.controllable.into());
        let point = (idx as f64, v.pattern.active_count() as f64);
        if v.controllable {
            yes.push(point);
        } else {
            no.push(point);
            if v.pattern.active_count() > 0 {
                bad.push(Value::String(name));
            }
        }
    }
    out.verdict("patterns", table);
    out.verdict("uncontrollable_nonempty", bad);
    out.metric("controllable_count", yes.len());
    out.metric("pattern_count", verdicts.len());
    out.notes
        .push("pattern bit j is channel j+1; trajectory.csv carries only its header".into());
    out.trajectory = Table::new(["t"]);
    out.plot = Plot {
        title: "Controllability by channel pattern".into(),
        x_label: "pattern index".into(),
        y_label: "active channels".into(),
        series: vec![
            Series::markers("controllable", yes),
            Series::markers("not controllable", no),
        ],
        equal_aspect: false,
    };
    Ok(out)
}

/// Factorization `BÂ = A` of the three-channel planar system that keeps
/// the second channel carrying all of the drift compensation.
fn planar_hat_a(sys: &LtiSystem) -> Result<Matrix, Error> {
    let hat = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [0.0, 0.0]])?;
    Ok(drift_family(sys)?.factorization(hat)?.hat_a)
}

/// Gain placing `poles` for every single-channel dropout of `sys`.
fn dropout_gain(sys: &LtiSystem, poles: &[f64]) -> Result<GainMatrix, Error> {
    let patterns: Vec<_> = (0..sys.m())
        .map(|j| ProjectionPattern::drop_channel(sys.m(), j))
        .collect();
    let poles: Vec<Complex> = poles.iter().map(|&p| Complex::real(p)).collect();
    simultaneous_gains_solve(sys, &patterns, &poles, None)
}

fn controller(
    sys: &LtiSystem,
    gain: &GainMatrix,
    goal: &Vector,
    construction: &str,
) -> Result<StandardPartsController, Error> {
    let offset = match construction {
        "particular" => offset_particular(sys, &gain.k, goal)?,
        "min_norm" => offset_min_norm(sys, &gain.k, goal)?,
        _ => offset_from_hat_a(&planar_hat_a(sys)?, &gain.k, goal)?,
    };
    StandardPartsController::new(sys, gain.clone(), offset)
}

fn dropout(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let sys = LtiSystem::planar_channels(3)?;
    let gain = dropout_gain(&sys, &cfg.numbers("poles"))?;
    let goal = Vector::from(cfg.numbers("goal"));
    let ctrl = controller(&sys, &gain, &goal, cfg.str("construction"))?;
    let pattern = cfg.pattern("pattern").expect("required");
    let x0 = Vector::from(cfg.numbers("x0"));
    let run = simulate_dropout(&ctrl, &sys, &pattern, &x0, cfg.f64("t_end"), cfg.f64("dt"))?;

    let mut out = Outcome::default();
    out.verdicts.insert(
        "outcome".into(),
        serde_json::to_value(&run.verdict).expect("verdict serializes"),
    );
    out.metric("terminal_distance", run.terminal_distance);
    out.metric("final_state", run.trajectory.final_state().to_vec());
    out.metric("gain", gain.k.to_rows());
    out.metric("offset", ctrl.offset.v.to_vec());
    out.metric(
        "rest_point",
        ctrl.rest_point(&sys, &pattern)?.map(|v| v.to_vec()),
    );
    out.trajectory = state_control_table(&run.trajectory, &run.controls, sys.m());
    out.plot = Plot {
        title: format!("Standard-parts controller under {pattern}"),
        x_label: "x1".into(),
        y_label: "x2".into(),
        series: vec![
            Series::line("path", plane_points(&run.trajectory, 0, 1)),
            Series::markers("goal", vec![(goal[0], goal[1])]),
        ],
        equal_aspect: true,
    };
    Ok(out)
}

fn markov(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let sys = LtiSystem::planar_channels(3)?;
    let gain = dropout_gain(&sys, &[-1.0, -1.0])?;
    let p = cfg.f64("p_switch");
    let plan = MarkovSwitchPlan {
        controllers: vec![
            controller(&sys, &gain, &Vector::from([1.0, 0.0]), "particular")?,
            controller(&sys, &gain, &Vector::from([0.0, 1.0]), "hat_a")?,
        ],
        transition_matrix: vec![vec![1.0 - p, p], vec![p, 1.0 - p]],
        dwell_dt: cfg.f64("dwell_dt"),
        seed: cfg.seed,
        pattern: cfg.pattern("pattern").expect("defaulted"),
        initial: 0,
    };
    let seeds: Vec<u64> = (0..cfg.usize("runs") as u64)
        .map(|i| cfg.seed + i)
        .collect();
    let x0 = Vector::from(cfg.numbers("x0"));
    let target = Vector::from(cfg.numbers("target"));
    let runs = markov_batch(
        &plan,
        &sys,
        &x0,
        &seeds,
        cfg.f64("t_end"),
        cfg.f64("dt"),
        &target,
    )?;

    let best = runs
        .iter()
        .min_by(|a, b| a.min_distance.total_cmp(&b.min_distance))
        .expect("at least one run");
    let mut mins: Vec<f64> = runs.iter().map(|r| r.min_distance).collect();
    mins.sort_by(f64::total_cmp);
    let close = mins.iter().filter(|d| **d < MARKOV_CLOSE).count();

    let mut out = Outcome::default();
    out.metric("best_min_distance", best.min_distance);
    out.metric("best_min_distance_time", best.min_distance_time);
    out.metric("best_seed", best.seed);
    out.metric("median_min_distance", median_sorted(&mins));
    out.metric(
        "mean_terminal_distance",
        runs.iter().map(|r| r.terminal_distance).sum::<f64>() / runs.len() as f64,
    );
    out.metric("runs_within_0_05", close);
    out.verdict("approached_target", best.min_distance < MARKOV_CLOSE);
    out.notes.push(format!(
        "trajectory and plot show the closest approach, seed {}",
        best.seed
    ));
    out.notes.extend(best.notes.iter().cloned());

    let mut table = state_control_table(&best.trajectory, &best.controls, sys.m());
    table.header.push("controller".into());
    for (i, row) in table.rows.iter_mut().enumerate() {
        row.push(best.active.get(i).map_or(f64::NAN, |&c| c as f64));
    }
    out.trajectory = table;
    out.plot = Plot {
        title: format!("Markov switching, p = {p}, seed {}", best.seed),
        x_label: "x1".into(),
        y_label: "x2".into(),
        series: vec![
            Series::line("path", plane_points(&best.trajectory, 0, 1)),
            Series::markers("target", vec![(target[0], target[1])]),
            Series::markers("goals", vec![(1.0, 0.0), (0.0, 1.0)]),
        ],
        equal_aspect: true,
    };
    Ok(out)
}
