//! Scenario configuration: loading, dotted-path overrides and validation
//! against per-scenario parameter schemas.

use std::fs;
use std::path::{Path, PathBuf};

use percept_core::corridor::CorridorScene;
use percept_core::multichannel::ProjectionPattern;
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Clone, Copy, Debug)]
pub enum Kind {
    /// Finite and strictly positive.
    Positive,
    NonNegative,
    /// In `[0, 1)`.
    Probability,
    /// In `[0, 1]`.
    UnitInterval,
    Real,
    Count {
        min: u64,
        max: u64,
    },
    /// List of exactly this many numbers.
    Vector(usize),
    /// List of numbers of any length.
    Numbers,
    /// List of numbers with negative real values.
    Poles,
    /// Channel mask such as `"P[0,1,1]"`.
    Pattern,
    Choice(&'static [&'static str]),
    /// List of equal-length numeric rows.
    Matrix,
}

impl Kind {
    fn describe(self) -> String {
        match self {
            Kind::Positive => "number > 0".into(),
            Kind::NonNegative => "number >= 0".into(),
            Kind::Probability => "number in [0, 1)".into(),
            Kind::UnitInterval => "number in [0, 1]".into(),
            Kind::Real => "number".into(),
            Kind::Count { min, max } => format!("integer in [{min}, {max}]"),
            Kind::Vector(n) => format!("list of {n} numbers"),
            Kind::Numbers => "list of numbers".into(),
            Kind::Poles => "list of negative numbers".into(),
            Kind::Pattern => "channel pattern, e.g. \"P[0,1,1]\"".into(),
            Kind::Choice(opts) => format!("one of {}", opts.join(", ")),
            Kind::Matrix => "list of numeric rows".into(),
        }
    }

    fn check(self, v: &Value) -> Result<(), String> {
        let num = |v: &Value| {
            v.as_f64()
                .filter(|x| x.is_finite())
                .ok_or("expected a finite number")
        };
        match self {
            Kind::Positive => (num(v)? > 0.0).then_some(()).ok_or("must be > 0".into()),
            Kind::NonNegative => (num(v)? >= 0.0).then_some(()).ok_or("must be >= 0".into()),
            Kind::Probability => {
                let x = num(v)?;
                (0.0..1.0)
                    .contains(&x)
                    .then_some(())
                    .ok_or("must lie in [0, 1)".into())
            }
            Kind::UnitInterval => {
                let x = num(v)?;
                (0.0..=1.0)
                    .contains(&x)
                    .then_some(())
                    .ok_or("must lie in [0, 1]".into())
            }
            Kind::Real => num(v).map(|_| ()).map_err(Into::into),
            Kind::Count { min, max } => {
                let n = v.as_u64().ok_or("expected a non-negative integer")?;
                (min..=max)
                    .contains(&n)
                    .then_some(())
                    .ok_or(format!("must lie in [{min}, {max}]"))
            }
            Kind::Vector(len) => {
                let xs = v.as_array().ok_or("expected a list")?;
                if xs.len() != len {
                    return Err(format!("expected {len} entries, got {}", xs.len()));
                }
                xs.iter()
                    .try_for_each(|x| num(x).map(|_| ()))
                    .map_err(Into::into)
            }
            Kind::Numbers => {
                let xs = v.as_array().ok_or("expected a list")?;
                xs.iter()
                    .try_for_each(|x| num(x).map(|_| ()))
                    .map_err(Into::into)
            }
            Kind::Poles => {
                let xs = v.as_array().ok_or("expected a list")?;
                for x in xs {
                    if num(x)? >= 0.0 {
                        return Err("poles must be negative".into());
                    }
                }
                Ok(())
            }
            Kind::Pattern => {
                let s = v.as_str().ok_or("expected a string")?;
                s.parse::<ProjectionPattern>()
                    .map(|_| ())
                    .map_err(|e| e.to_string())
            }
            Kind::Choice(opts) => {
                let s = v.as_str().ok_or("expected a string")?;
                opts.contains(&s)
                    .then_some(())
                    .ok_or(format!("must be one of {}", opts.join(", ")))
            }
            Kind::Matrix => {
                let rows = v.as_array().ok_or("expected a list of rows")?;
                let mut width = None;
                for r in rows {
                    let r = r.as_array().ok_or("each row must be a list")?;
                    if *width.get_or_insert(r.len()) != r.len() || r.is_empty() {
                        return Err("rows must be non-empty and of equal length".into());
                    }
                    r.iter().try_for_each(|x| num(x).map(|_| ()))?;
                }
                (!rows.is_empty())
                    .then_some(())
                    .ok_or("matrix has no rows".into())
            }
        }
    }
}

pub struct Param {
    pub name: &'static str,
    pub kind: Kind,
    /// JSON text of the default; `None` makes the key required.
    pub default: Option<&'static str>,
    pub doc: &'static str,
}

const fn p(
    name: &'static str,
    kind: Kind,
    default: Option<&'static str>,
    doc: &'static str,
) -> Param {
    Param {
        name,
        kind,
        default,
        doc,
    }
}

/// Optional key with no default value.
const NONE: Option<&str> = Some("null");

const CORRIDOR: &[Param] = &[
    p("f", Kind::Positive, Some("1.0"), "focal length"),
    p("R", Kind::Positive, Some("2.0"), "corridor half-width, m"),
    p("v", Kind::Positive, Some("1.0"), "forward speed, m/s"),
    p("k", Kind::Positive, None, "steering gain"),
    p("x0", Kind::Real, Some("0.0"), "initial lateral offset, m"),
    p(
        "theta0_deg",
        Kind::Real,
        Some("90.0"),
        "initial heading, degrees from the x axis",
    ),
    p("t_end", Kind::Positive, Some("60.0"), "simulated time, s"),
    p("dt", Kind::Positive, Some("0.01"), "integration step, s"),
];

const SAMPLED_EXTRA: &[Param] = &[p("h", Kind::Positive, None, "sample-and-hold interval, s")];

const NOISY_EXTRA: &[Param] = &[
    p(
        "n_per_side",
        Kind::Count {
            min: 1,
            max: 100_000,
        },
        Some("200"),
        "receptors per wall",
    ),
    p(
        "dropout_prob",
        Kind::Probability,
        Some("0.3"),
        "per-step receptor dropout probability",
    ),
    p(
        "tau_noise_sigma",
        Kind::NonNegative,
        Some("0.2"),
        "std. dev. of noise on each tau, s",
    ),
    p(
        "jitter",
        Kind::Probability,
        Some("0.2"),
        "uniform jitter around image coordinate 1",
    ),
    p(
        "runs",
        Kind::Count {
            min: 1,
            max: 10_000,
        },
        Some("1"),
        "seeded runs (seed, seed+1, ...)",
    ),
];

const MIN_ENERGY: &[Param] = &[
    p(
        "channels",
        Kind::Count { min: 1, max: 3 },
        Some("3"),
        "planar example with 1, 2 or 3 inputs",
    ),
    p(
        "a",
        Kind::Matrix,
        NONE,
        "custom drift matrix; overrides channels (needs b)",
    ),
    p(
        "b",
        Kind::Matrix,
        NONE,
        "custom input matrix; overrides channels (needs a)",
    ),
    p(
        "x0",
        Kind::Numbers,
        NONE,
        "initial state; defaults to the origin",
    ),
    p("x1", Kind::Numbers, None, "target state"),
    p("T", Kind::Positive, Some("1.0"), "horizon, s"),
    p(
        "pattern",
        Kind::Pattern,
        NONE,
        "channel mask; defaults to all channels",
    ),
    p("dt", Kind::Positive, Some("0.001"), "integration step, s"),
];

const COST_SWEEP: &[Param] = &[
    p("T", Kind::Positive, Some("1.0"), "horizon, s"),
    p(
        "n_phi",
        Kind::Count {
            min: 1,
            max: 100_000,
        },
        Some("64"),
        "targets on the unit circle",
    ),
];

const CLASSIFY: &[Param] = &[
    p(
        "channels",
        Kind::Count { min: 1, max: 3 },
        Some("3"),
        "planar example with 1, 2 or 3 inputs",
    ),
    p(
        "a",
        Kind::Matrix,
        NONE,
        "custom drift matrix; overrides channels (needs b)",
    ),
    p(
        "b",
        Kind::Matrix,
        NONE,
        "custom input matrix; overrides channels (needs a)",
    ),
    p("T", Kind::Positive, Some("1.0"), "horizon, s"),
];

const DROPOUT: &[Param] = &[
    p("goal", Kind::Vector(2), None, "goal point"),
    p(
        "construction",
        Kind::Choice(&["particular", "hat_a", "min_norm"]),
        Some("\"hat_a\""),
        "offset construction",
    ),
    p(
        "pattern",
        Kind::Pattern,
        None,
        "available channels, e.g. \"P[1,0,1]\"",
    ),
    p(
        "poles",
        Kind::Poles,
        Some("[-1.0, -1.0]"),
        "closed-loop poles for every two-channel loop",
    ),
    p("x0", Kind::Vector(2), Some("[0.0, 0.0]"), "initial state"),
    p("t_end", Kind::Positive, Some("30.0"), "simulated time, s"),
    p("dt", Kind::Positive, Some("0.01"), "integration step, s"),
];

const MARKOV: &[Param] = &[
    p(
        "p_switch",
        Kind::UnitInterval,
        Some("0.5"),
        "probability of switching at each dwell boundary",
    ),
    p(
        "dwell_dt",
        Kind::Positive,
        Some("0.05"),
        "dwell between switching decisions, s",
    ),
    p(
        "pattern",
        Kind::Pattern,
        Some("\"P[0,1,1]\""),
        "channels available to both controllers",
    ),
    p("x0", Kind::Vector(2), Some("[0.0, 1.0]"), "initial state"),
    p(
        "target",
        Kind::Vector(2),
        Some("[0.7071067811865476, 0.7071067811865476]"),
        "point whose distance is tracked",
    ),
    p("t_end", Kind::Positive, Some("30.0"), "simulated time, s"),
    p("dt", Kind::Positive, Some("0.01"), "integration step, s"),
    p(
        "runs",
        Kind::Count {
            min: 1,
            max: 100_000,
        },
        Some("200"),
        "seeded runs (seed, seed+1, ...)",
    ),
];

pub const SCENARIOS: &[(&str, &str)] = &[
    ("corridor", "continuous two-receptor tau-balance steering"),
    ("corridor-sampled", "sample-and-hold tau-balance steering"),
    (
        "corridor-noisy",
        "steering from a noisy receptor array with dropouts",
    ),
    (
        "min-energy",
        "minimum-energy steering of a multi-input linear system",
    ),
    (
        "cost-sweep",
        "minimum-energy cost around the unit circle for 1, 2 and 3 channels",
    ),
    (
        "channel-classify",
        "controllability of every channel pattern",
    ),
    (
        "dropout",
        "standard-parts controller under a channel dropout",
    ),
    (
        "markov",
        "Markov switching between the (1,0) and (0,1) controllers",
    ),
];

pub fn schema(scenario: &str) -> Option<Vec<&'static Param>> {
    let parts: Vec<&[Param]> = match scenario {
        "corridor" => vec![CORRIDOR],
        "corridor-sampled" => vec![CORRIDOR, SAMPLED_EXTRA],
        "corridor-noisy" => vec![CORRIDOR, NOISY_EXTRA],
        "min-energy" => vec![MIN_ENERGY],
        "cost-sweep" => vec![COST_SWEEP],
        "channel-classify" => vec![CLASSIFY],
        "dropout" => vec![DROPOUT],
        "markov" => vec![MARKOV],
        _ => return None,
    };
    Some(parts.into_iter().flatten().collect())
}

/// Human-readable catalogue of scenarios and their parameters.
pub fn catalogue() -> String {
    let mut out = String::new();
    for (name, doc) in SCENARIOS {
        out.push_str(&format!("{name}\n    {doc}\n"));
        for p in schema(name).expect("listed scenario") {
            let default = match p.default {
                None => "required".to_string(),
                Some("null") => "optional".to_string(),
                Some(d) => format!("default {d}"),
            };
            out.push_str(&format!(
                "    {:<16} {} ({}; {})\n",
                p.name,
                p.doc,
                p.kind.describe(),
                default
            ));
        }
        out.push('\n');
    }
    out
}

pub fn load(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(vec![format!("{} is not valid JSON: {e}", path.display())]))
}

/// Applies `key.sub=value` overrides. The value is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_overrides(cfg: &mut Value, sets: &[String]) -> Result<(), CliError> {
    let mut errors = Vec::new();
    for s in sets {
        let Some((path, raw)) = s.split_once('=') else {
            errors.push(format!("override {s:?} is not key=value"));
            continue;
        };
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut *cfg;
        let keys: Vec<&str> = path.split('.').collect();
        for (i, key) in keys.iter().enumerate() {
            if node.is_null() {
                *node = Value::Object(Map::new());
            }
            let Some(obj) = node.as_object_mut() else {
                errors.push(format!("override {path:?}: {key:?} is inside a non-object"));
                break;
            };
            if i + 1 == keys.len() {
                obj.insert(key.to_string(), value.clone());
                break;
            }
            node = obj.entry(key.to_string()).or_insert(Value::Null);
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(errors))
    }
}

/// A validated configuration with defaults filled in.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub parameters: Map<String, Value>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn f64(&self, key: &str) -> f64 {
        self.parameters[key].as_f64().expect("validated number")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.parameters[key].as_u64().expect("validated integer") as usize
    }

    pub fn str(&self, key: &str) -> &str {
        self.parameters[key].as_str().expect("validated string")
    }

    pub fn opt(&self, key: &str) -> Option<&Value> {
        self.parameters.get(key).filter(|v| !v.is_null())
    }

    pub fn numbers(&self, key: &str) -> Vec<f64> {
        numbers(&self.parameters[key])
    }

    pub fn rows(&self, key: &str) -> Option<Vec<Vec<f64>>> {
        self.opt(key).map(|v| {
            v.as_array()
                .expect("validated rows")
                .iter()
                .map(numbers)
                .collect()
        })
    }

    pub fn pattern(&self, key: &str) -> Option<ProjectionPattern> {
        self.opt(key).map(|v| {
            v.as_str()
                .expect("validated")
                .parse()
                .expect("validated pattern")
        })
    }
}

fn numbers(v: &Value) -> Vec<f64> {
    v.as_array()
        .expect("validated list")
        .iter()
        .map(|x| x.as_f64().expect("validated number"))
        .collect()
}

/// Checks a raw configuration and reports every violation found.
pub fn validate(cfg: &Value) -> Result<ScenarioConfig, Vec<String>> {
    let mut errs = Vec::new();
    let Some(obj) = cfg.as_object() else {
        return Err(vec!["configuration must be a JSON object".into()]);
    };
    for key in obj.keys() {
        if !["scenario", "parameters", "seed", "output_dir"].contains(&key.as_str()) {
            errs.push(format!("unknown top-level key `{key}`"));
        }
    }
    let seed = match obj.get("seed") {
        None | Some(Value::Null) => 0,
        Some(v) => v.as_u64().unwrap_or_else(|| {
            errs.push("`seed` must be a non-negative integer".into());
            0
        }),
    };
    let output_dir = match obj.get("output_dir") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => {
            errs.push("`output_dir` must be a string".into());
            None
        }
    };
    let empty = Map::new();
    let given = match obj.get("parameters") {
        None | Some(Value::Null) => &empty,
        Some(Value::Object(m)) => m,
        Some(_) => {
            errs.push("`parameters` must be an object".into());
            &empty
        }
    };

    let scenario = match obj.get("scenario") {
        None | Some(Value::Null) => {
            errs.push(format!(
                "missing required key `scenario` (one of {})",
                SCENARIOS.iter().map(|s| s.0).collect::<Vec<_>>().join(", ")
            ));
            return Err(errs);
        }
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            errs.push("`scenario` must be a string".into());
            return Err(errs);
        }
    };
    let Some(params) = schema(&scenario) else {
        errs.push(format!("unknown scenario `{scenario}`"));
        return Err(errs);
    };

    for key in given.keys() {
        if !params.iter().any(|p| p.name == key) {
            errs.push(format!("unknown parameter `{key}` for scenario {scenario}"));
        }
    }
    let mut resolved = Map::new();
    for p in &params {
        let value = match given.get(p.name) {
            Some(v) if !v.is_null() => v.clone(),
            _ => match p.default {
                Some(d) => serde_json::from_str(d).expect("default is valid JSON"),
                None => {
                    errs.push(format!(
                        "missing required parameter `{}` ({})",
                        p.name,
                        p.kind.describe()
                    ));
                    continue;
                }
            },
        };
        if !value.is_null() {
            if let Err(e) = p.kind.check(&value) {
                errs.push(format!("parameter `{}`: {e}", p.name));
                continue;
            }
        }
        resolved.insert(p.name.to_string(), value);
    }

    let cfg = ScenarioConfig {
        scenario,
        parameters: resolved,
        seed,
        output_dir,
    };
    if errs.is_empty() {
        cross_checks(&cfg, &mut errs);
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(errs)
    }
}

fn cross_checks(cfg: &ScenarioConfig, errs: &mut Vec<String>) {
    match cfg.scenario.as_str() {
        "corridor" | "corridor-sampled" | "corridor-noisy" => {
            let scene =
                CorridorScene::new(cfg.f64("R"), cfg.f64("f"), cfg.f64("v")).expect("validated");
            if !scene.inside_walls(cfg.f64("x0")) {
                errs.push(format!(
                    "parameter `x0`: |x0| must be below R = {}",
                    scene.half_width
                ));
            }
            let theta = cfg.f64("theta0_deg").to_radians();
            if !scene.in_cone(theta) {
                let lo = scene.critical_angle().to_degrees();
                errs.push(format!(
                    "parameter `theta0_deg`: must lie strictly between {lo:.3} and {:.3}",
                    180.0 - lo
                ));
            }
            if cfg.f64("dt") >= cfg.f64("t_end") {
                errs.push("parameter `dt`: must be smaller than t_end".into());
            }
            if cfg.scenario == "corridor-sampled" && cfg.f64("dt") > cfg.f64("h") {
                errs.push("parameter `dt`: must not exceed h".into());
            }
        }
        "min-energy" | "channel-classify" => {
            let (a, b) = (cfg.rows("a"), cfg.rows("b"));
            let n = match (&a, &b) {
                (Some(a), Some(b)) => {
                    if a.len() != a[0].len() {
                        errs.push("parameter `a`: must be square".into());
                    }
                    if b.len() != a.len() {
                        errs.push("parameter `b`: must have as many rows as `a`".into());
                    }
                    if b[0].len() > 16 {
                        errs.push("parameter `b`: at most 16 channels".into());
                    }
                    a.len()
                }
                (None, None) => 2,
                _ => {
                    errs.push("parameters `a` and `b` must be given together".into());
                    return;
                }
            };
            if cfg.scenario == "min-energy" {
                let m = b.as_ref().map_or(cfg.usize("channels"), |b| b[0].len());
                for key in ["x0", "x1"] {
                    if let Some(v) = cfg.opt(key) {
                        if v.as_array().map_or(0, Vec::len) != n {
                            errs.push(format!("parameter `{key}`: expected a list of {n} numbers"));
                        }
                    }
                }
                if let Some(p) = cfg.pattern("pattern") {
                    if p.len() != m {
                        errs.push(format!("parameter `pattern`: expected {m} entries"));
                    }
                }
            }
        }
        "dropout" | "markov" => {
            if cfg.pattern("pattern").is_some_and(|p| p.len() != 3) {
                errs.push("parameter `pattern`: expected 3 entries".into());
            }
            if cfg.scenario == "dropout" && cfg.numbers("poles").len() != 2 {
                errs.push("parameter `poles`: expected 2 poles".into());
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_create_nested_keys_and_fall_back_to_strings() {
        let mut cfg = json!({ "scenario": "corridor" });
        apply_overrides(
            &mut cfg,
            &[
                "parameters.k=0.3".into(),
                "seed=4".into(),
                "parameters.name=abc".into(),
            ],
        )
        .unwrap();
        assert_eq!(
            cfg,
            json!({ "scenario": "corridor", "seed": 4, "parameters": { "k": 0.3, "name": "abc" } })
        );
    }

    #[test]
    fn override_without_equals_is_rejected() {
        let mut cfg = json!({});
        assert!(matches!(
            apply_overrides(&mut cfg, &["k".into()]),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn cone_and_wall_cross_checks() {
        let errs = validate(&json!({
            "scenario": "corridor",
            "parameters": { "k": 0.2, "x0": 2.5, "theta0_deg": 30.0 }
        }))
        .unwrap_err();
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn every_default_passes_its_own_check() {
        for (name, _) in SCENARIOS {
            for p in schema(name).unwrap() {
                if let Some(d) = p.default.filter(|d| *d != "null") {
                    let v: Value = serde_json::from_str(d).unwrap();
                    assert!(p.kind.check(&v).is_ok(), "{name}.{}", p.name);
                }
            }
        }
    }
}
