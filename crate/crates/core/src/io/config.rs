use std::path::PathBuf;

use toml::{Table, Value};

use super::IoError;
use crate::allocation::{AllocationConfig, ShapleyMethod, DEFAULT_DELTA, DEFAULT_LAMBDA};
use crate::combination::{QuantileLevel, DEFAULT_LEARNING_RATE};
use crate::market::{Combiner, EngineConfig};
use crate::scenario::{Method, ScenarioConfig, SellerSpec, WeightSchedule, DEFAULT_SEED};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    SimulateInvariant,
    SimulateVarying,
    Sweep,
    Replay,
}

impl Mode {
    const ALL: [Mode; 4] = [
        Mode::SimulateInvariant,
        Mode::SimulateVarying,
        Mode::Sweep,
        Mode::Replay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::SimulateInvariant => "simulate-invariant",
            Mode::SimulateVarying => "simulate-varying",
            Mode::Sweep => "sweep",
            Mode::Replay => "replay",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSection {
    pub sellers: Vec<SellerSpec>,
    /// Static true weights.
    pub weights: Vec<f64>,
    pub start_weights: Vec<f64>,
    pub end_weights: Vec<f64>,
    pub period: f64,
    pub smoothing: f64,
    pub horizon: usize,
    pub runs: usize,
    pub missing_rate: f64,
    pub burn_in: usize,
    pub methods: Vec<Method>,
    pub sweep_rates: Vec<f64>,
    /// Runs whose per-step trajectories are written out.
    pub trajectory_runs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateSection {
    /// Also run run 0 through a live market and write its ledger and reports.
    pub market: bool,
    pub utility: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplaySection {
    pub forecasts: PathBuf,
    pub realizations: PathBuf,
    /// Client utility paid at every settlement.
    pub utility: f64,
    pub horizon_steps: usize,
    pub task_id: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub quantile_levels: Vec<QuantileLevel>,
    pub scenario: ScenarioSection,
    pub engine: EngineConfig,
    pub allocation: AllocationConfig,
    pub simulate: SimulateSection,
    pub replay: ReplaySection,
}

/// Parses TOML configuration text; every absent key takes its default.
pub fn parse_config(text: &str) -> Result<RunConfig, IoError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        IoError::config("<document>", e.to_string().trim_end().to_string())
    })?;
    parse_config_table(table)
}

/// Sets the dotted `key` of `table` to `raw`, read as a TOML value when it
/// parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut Table, key: &str, raw: &str) -> Result<(), IoError> {
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(IoError::config(key, "malformed key"));
    }
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| IoError::config(key, format!("`{part}` is not a table")))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

struct Section {
    path: String,
    table: Table,
}

impl Section {
    fn key(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.table.remove(key)
    }

    fn sub(&mut self, key: &str) -> Result<Section, IoError> {
        let path = self.key(key);
        let table = match self.take(key) {
            None => Table::new(),
            Some(Value::Table(t)) => t,
            Some(_) => return Err(IoError::config(path, "expected a table")),
        };
        Ok(Section { path, table })
    }

    fn float(&mut self, key: &str, default: f64) -> Result<f64, IoError> {
        let path = self.key(key);
        match self.take(key) {
            None => Ok(default),
            Some(v) => as_float(&v).ok_or_else(|| IoError::config(path, "expected a number")),
        }
    }

    fn count(&mut self, key: &str, default: usize) -> Result<usize, IoError> {
        let path = self.key(key);
        match self.take(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if i >= 0 => Ok(i as usize),
            Some(_) => Err(IoError::config(path, "expected a non-negative integer")),
        }
    }

    fn boolean(&mut self, key: &str, default: bool) -> Result<bool, IoError> {
        let path = self.key(key);
        match self.take(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(b),
            Some(_) => Err(IoError::config(path, "expected true or false")),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>, IoError> {
        let path = self.key(key);
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(IoError::config(path, "expected a string")),
        }
    }

    fn floats(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, IoError> {
        let path = self.key(key);
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    as_float(v)
                        .ok_or_else(|| IoError::config(&path, "expected an array of numbers"))
                })
                .collect(),
            Some(_) => Err(IoError::config(path, "expected an array of numbers")),
        }
    }

    fn strings(&mut self, key: &str, default: &[&str]) -> Result<Vec<String>, IoError> {
        let path = self.key(key);
        match self.take(key) {
            None => Ok(default.iter().map(|s| s.to_string()).collect()),
            Some(Value::Array(items)) => items
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s),
                    _ => Err(IoError::config(&path, "expected an array of strings")),
                })
                .collect(),
            Some(_) => Err(IoError::config(path, "expected an array of strings")),
        }
    }

    fn finish(self) -> Result<(), IoError> {
        match self.table.keys().next() {
            None => Ok(()),
            Some(k) => Err(IoError::config(self.key(k), "unknown key")),
        }
    }
}

fn as_float(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn range_check(key: String, value: f64, ok: bool, expected: &str) -> Result<(), IoError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(IoError::config(
            key,
            format!("{value} is out of range; expected {expected}"),
        ))
    }
}

fn simplex_check(key: String, w: &[f64], n: usize) -> Result<(), IoError> {
    if w.len() != n {
        return Err(IoError::config(
            key,
            format!("expected {n} weights, got {}", w.len()),
        ));
    }
    let sum: f64 = w.iter().sum();
    if w.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(IoError::config(
            key,
            "weights must be non-negative and sum to 1",
        ));
    }
    Ok(())
}

pub fn parse_config_table(table: Table) -> Result<RunConfig, IoError> {
    let mut root = Section {
        path: String::new(),
        table,
    };
    let mode = match root.string("mode")? {
        None => return Err(IoError::config("mode", "missing required key")),
        Some(s) => Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            IoError::config(
                "mode",
                format!("unknown mode `{s}` (expected simulate-invariant, simulate-varying, sweep or replay)"),
            )
        })?,
    };
    let output_dir = PathBuf::from(root.string("output_dir")?.unwrap_or_else(|| "out".into()));
    let seed = match root.take("seed") {
        None => DEFAULT_SEED,
        Some(Value::Integer(i)) if i >= 0 => i as u64,
        Some(_) => return Err(IoError::config("seed", "expected a non-negative integer")),
    };
    let levels = root.floats("quantile_levels", &[0.5])?;
    if levels.is_empty() {
        return Err(IoError::config(
            "quantile_levels",
            "at least one level is required",
        ));
    }
    let quantile_levels = levels
        .iter()
        .map(|&tau| {
            QuantileLevel::new(tau).map_err(|e| IoError::config("quantile_levels", e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(IoError::config(
            "quantile_levels",
            "levels must be strictly increasing",
        ));
    }

    let scenario = parse_scenario(root.sub("scenario")?)?;

    let mut engine_sec = root.sub("engine")?;
    let combiner = match engine_sec.string("combiner")?.as_deref() {
        None | Some("rqr") => Combiner::Rqr,
        Some("qr") => Combiner::Qr,
        Some(other) => {
            return Err(IoError::config(
                "engine.combiner",
                format!("unknown combiner `{other}` (expected qr or rqr)"),
            ))
        }
    };
    let eta = engine_sec.float("eta", DEFAULT_LEARNING_RATE)?;
    range_check(engine_sec.key("eta"), eta, eta > 0.0, "a positive number")?;
    engine_sec.finish()?;

    let mut alloc_sec = root.sub("allocation")?;
    let delta = alloc_sec.float("delta", DEFAULT_DELTA)?;
    range_check(
        alloc_sec.key("delta"),
        delta,
        (0.0..=1.0).contains(&delta),
        "[0, 1]",
    )?;
    let lambda = alloc_sec.float("lambda", DEFAULT_LAMBDA)?;
    range_check(
        alloc_sec.key("lambda"),
        lambda,
        (0.0..1.0).contains(&lambda),
        "[0, 1)",
    )?;
    let shapley = match alloc_sec.string("shapley")?.as_deref() {
        None | Some("exact") => {
            if alloc_sec.take("permutations").is_some() {
                return Err(IoError::config(
                    "allocation.permutations",
                    "only used with shapley = \"sampled\"",
                ));
            }
            ShapleyMethod::Exact
        }
        Some("sampled") => {
            let permutations = alloc_sec.count("permutations", 1000)?;
            if permutations == 0 {
                return Err(IoError::config(
                    "allocation.permutations",
                    "must be at least 1",
                ));
            }
            ShapleyMethod::PermutationSampling { permutations }
        }
        Some(other) => {
            return Err(IoError::config(
                "allocation.shapley",
                format!("unknown method `{other}` (expected exact or sampled)"),
            ))
        }
    };
    alloc_sec.finish()?;

    let mut sim_sec = root.sub("simulate")?;
    let simulate = SimulateSection {
        market: sim_sec.boolean("market", false)?,
        utility: sim_sec.float("utility", 100.0)?,
    };
    range_check(
        sim_sec.key("utility"),
        simulate.utility,
        simulate.utility >= 0.0,
        "a non-negative number",
    )?;
    sim_sec.finish()?;

    let mut replay_sec = root.sub("replay")?;
    let forecasts = replay_sec.string("forecasts")?;
    let realizations = replay_sec.string("realizations")?;
    if mode == Mode::Replay {
        if forecasts.is_none() {
            return Err(IoError::config("replay.forecasts", "missing required key"));
        }
        if realizations.is_none() {
            return Err(IoError::config(
                "replay.realizations",
                "missing required key",
            ));
        }
    }
    let replay = ReplaySection {
        forecasts: PathBuf::from(forecasts.unwrap_or_default()),
        realizations: PathBuf::from(realizations.unwrap_or_default()),
        utility: replay_sec.float("utility", 100.0)?,
        horizon_steps: replay_sec.count("horizon_steps", 1)?,
        task_id: replay_sec
            .string("task_id")?
            .unwrap_or_else(|| "replay".into()),
    };
    range_check(
        replay_sec.key("utility"),
        replay.utility,
        replay.utility >= 0.0,
        "a non-negative number",
    )?;
    if replay.horizon_steps == 0 {
        return Err(IoError::config(
            "replay.horizon_steps",
            "must be at least 1",
        ));
    }
    replay_sec.finish()?;
    root.finish()?;

    let config = RunConfig {
        mode,
        output_dir,
        seed,
        quantile_levels,
        scenario,
        engine: EngineConfig { combiner, eta },
        allocation: AllocationConfig {
            delta,
            lambda,
            shapley,
        },
        simulate,
        replay,
    };
    config.scenario_config().validate()?;
    Ok(config)
}

fn parse_scenario(mut sec: Section) -> Result<ScenarioSection, IoError> {
    let sellers = match sec.take("sellers") {
        None => ScenarioConfig::time_invariant().sellers,
        Some(Value::Array(items)) => items
            .into_iter()
            .enumerate()
            .map(|(i, item)| {
                let path = format!("scenario.sellers[{i}]");
                let Value::Table(table) = item else {
                    return Err(IoError::config(
                        path,
                        "expected a table with c, nu and sigma",
                    ));
                };
                let mut s = Section { path, table };
                let spec = SellerSpec {
                    c: s.float("c", 0.0)?,
                    nu: s.float("nu", 0.5)?,
                    sigma: s.float("sigma", 1.0)?,
                };
                range_check(
                    s.key("sigma"),
                    spec.sigma,
                    spec.sigma > 0.0,
                    "a positive number",
                )?;
                s.finish()?;
                Ok(spec)
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => {
            return Err(IoError::config(
                "scenario.sellers",
                "expected an array of tables",
            ))
        }
    };
    let n = sellers.len();
    if n == 0 {
        return Err(IoError::config(
            "scenario.sellers",
            "at least one seller is required",
        ));
    }
    let defaults = (
        ScenarioConfig::time_invariant(),
        ScenarioConfig::time_varying(),
    );
    let WeightSchedule::Static { weights: w_default } = &defaults.0.weights else {
        unreachable!("time-invariant defaults are static")
    };
    let WeightSchedule::Periodic {
        start: start_default,
        end: end_default,
        smoothing: smoothing_default,
        ..
    } = &defaults.1.weights
    else {
        unreachable!("time-varying defaults are periodic")
    };
    let uniform = vec![1.0 / n as f64; n];
    let pick = |d: &Vec<f64>| {
        if d.len() == n {
            d.clone()
        } else {
            uniform.clone()
        }
    };

    let weights = sec.floats("weights", &pick(w_default))?;
    simplex_check(sec.key("weights"), &weights, n)?;
    let start_weights = sec.floats("start_weights", &pick(start_default))?;
    simplex_check(sec.key("start_weights"), &start_weights, n)?;
    let end_weights = sec.floats("end_weights", &pick(end_default))?;
    simplex_check(sec.key("end_weights"), &end_weights, n)?;
    let horizon = sec.count("horizon", defaults.0.horizon)?;
    if horizon == 0 {
        return Err(IoError::config("scenario.horizon", "must be at least 1"));
    }
    let period = sec.float("period", horizon as f64)?;
    range_check(sec.key("period"), period, period > 0.0, "a positive number")?;
    let smoothing = sec.float("smoothing", *smoothing_default)?;
    range_check(
        sec.key("smoothing"),
        smoothing,
        (0.0..1.0).contains(&smoothing),
        "[0, 1)",
    )?;
    let runs = sec.count("runs", defaults.0.runs)?;
    if runs == 0 {
        return Err(IoError::config("scenario.runs", "must be at least 1"));
    }
    let missing_rate = sec.float("missing_rate", 0.05)?;
    range_check(
        sec.key("missing_rate"),
        missing_rate,
        (0.0..1.0).contains(&missing_rate),
        "[0, 1)",
    )?;
    let burn_in = sec.count("burn_in", defaults.0.burn_in)?;
    let methods = sec
        .strings("methods", &["rqr"])?
        .iter()
        .map(|s| {
            s.parse::<Method>()
                .map_err(|e| IoError::config("scenario.methods", e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if methods.is_empty() {
        return Err(IoError::config(
            "scenario.methods",
            "at least one method is required",
        ));
    }
    let sweep_rates = sec.floats("sweep_rates", &[0.05, 0.3, 0.6, 0.9])?;
    for &r in &sweep_rates {
        range_check(
            sec.key("sweep_rates"),
            r,
            (0.0..1.0).contains(&r),
            "rates in [0, 1)",
        )?;
    }
    let trajectory_runs = sec.count("trajectory_runs", 1)?;
    sec.finish()?;
    Ok(ScenarioSection {
        sellers,
        weights,
        start_weights,
        end_weights,
        period,
        smoothing,
        horizon,
        runs,
        missing_rate,
        burn_in,
        methods,
        sweep_rates,
        trajectory_runs,
    })
}

impl RunConfig {
    /// Scenario for the configured mode; replay and sweep use the static weights.
    pub fn scenario_config(&self) -> ScenarioConfig {
        let s = &self.scenario;
        let weights = match self.mode {
            Mode::SimulateVarying => WeightSchedule::Periodic {
                start: s.start_weights.clone(),
                end: s.end_weights.clone(),
                period: s.period,
                smoothing: s.smoothing,
            },
            _ => WeightSchedule::Static {
                weights: s.weights.clone(),
            },
        };
        ScenarioConfig {
            sellers: s.sellers.clone(),
            weights,
            horizon: s.horizon,
            runs: s.runs,
            missing_rate: s.missing_rate,
            quantile_levels: self.quantile_levels.clone(),
            seed: self.seed,
            burn_in: s.burn_in,
            learning_rate: self.engine.eta,
        }
    }

    /// Fails if a file the mode reads does not exist.
    pub fn check_inputs(&self) -> Result<(), IoError> {
        if self.mode == Mode::Replay {
            for (key, path) in [
                ("replay.forecasts", &self.replay.forecasts),
                ("replay.realizations", &self.replay.realizations),
            ] {
                if !path.is_file() {
                    return Err(IoError::config(
                        key,
                        format!("file not found: {}", path.display()),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The fully resolved configuration as TOML; parsing it yields `self`.
    pub fn manifest(&self) -> String {
        let floats = |v: &[f64]| Value::Array(v.iter().map(|&x| Value::Float(x)).collect());
        let mut root = Table::new();
        root.insert("mode".into(), self.mode.name().into());
        root.insert(
            "output_dir".into(),
            self.output_dir.display().to_string().into(),
        );
        root.insert("seed".into(), Value::Integer(self.seed as i64));
        root.insert(
            "quantile_levels".into(),
            floats(
                &self
                    .quantile_levels
                    .iter()
                    .map(|q| q.get())
                    .collect::<Vec<_>>(),
            ),
        );

        let s = &self.scenario;
        let mut sc = Table::new();
        let sellers = s
            .sellers
            .iter()
            .map(|p| {
                let mut t = Table::new();
                t.insert("c".into(), p.c.into());
                t.insert("nu".into(), p.nu.into());
                t.insert("sigma".into(), p.sigma.into());
                Value::Table(t)
            })
            .collect();
        sc.insert("sellers".into(), Value::Array(sellers));
        sc.insert("weights".into(), floats(&s.weights));
        sc.insert("start_weights".into(), floats(&s.start_weights));
        sc.insert("end_weights".into(), floats(&s.end_weights));
        sc.insert("period".into(), s.period.into());
        sc.insert("smoothing".into(), s.smoothing.into());
        sc.insert("horizon".into(), Value::Integer(s.horizon as i64));
        sc.insert("runs".into(), Value::Integer(s.runs as i64));
        sc.insert("missing_rate".into(), s.missing_rate.into());
        sc.insert("burn_in".into(), Value::Integer(s.burn_in as i64));
        sc.insert(
            "methods".into(),
            Value::Array(s.methods.iter().map(|m| m.name().into()).collect()),
        );
        sc.insert("sweep_rates".into(), floats(&s.sweep_rates));
        sc.insert(
            "trajectory_runs".into(),
            Value::Integer(s.trajectory_runs as i64),
        );
        root.insert("scenario".into(), Value::Table(sc));

        let mut engine = Table::new();
        let combiner = match self.engine.combiner {
            Combiner::Qr => "qr",
            Combiner::Rqr => "rqr",
        };
        engine.insert("combiner".into(), combiner.into());
        engine.insert("eta".into(), self.engine.eta.into());
        root.insert("engine".into(), Value::Table(engine));

        let mut alloc = Table::new();
        alloc.insert("delta".into(), self.allocation.delta.into());
        alloc.insert("lambda".into(), self.allocation.lambda.into());
        match self.allocation.shapley {
            ShapleyMethod::Exact => {
                alloc.insert("shapley".into(), "exact".into());
            }
            ShapleyMethod::PermutationSampling { permutations } => {
                alloc.insert("shapley".into(), "sampled".into());
                alloc.insert("permutations".into(), Value::Integer(permutations as i64));
            }
        }
        root.insert("allocation".into(), Value::Table(alloc));

        let mut sim = Table::new();
        sim.insert("market".into(), self.simulate.market.into());
        sim.insert("utility".into(), self.simulate.utility.into());
        root.insert("simulate".into(), Value::Table(sim));

        let r = &self.replay;
        let mut replay = Table::new();
        replay.insert("forecasts".into(), r.forecasts.display().to_string().into());
        replay.insert(
            "realizations".into(),
            r.realizations.display().to_string().into(),
        );
        replay.insert("utility".into(), r.utility.into());
        replay.insert(
            "horizon_steps".into(),
            Value::Integer(r.horizon_steps as i64),
        );
        replay.insert("task_id".into(), r.task_id.clone().into());
        root.insert("replay".into(), Value::Table(replay));

        toml::to_string(&root).expect("a table of plain values always serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key_of(err: IoError) -> String {
        match err {
            IoError::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let config = parse_config("mode = \"simulate-invariant\"").unwrap();
        assert_eq!(config.seed, DEFAULT_SEED);
        assert_eq!(config.scenario.horizon, 20_000);
        assert_eq!(config.scenario.period, 20_000.0);
        assert_eq!(config.allocation, AllocationConfig::default());
        assert_eq!(config.engine, EngineConfig::default());
        let manifest = config.manifest();
        for key in [
            "delta",
            "lambda",
            "eta",
            "missing_rate",
            "burn_in",
            "smoothing",
            "sweep_rates",
        ] {
            assert!(manifest.contains(key), "{key} missing from manifest");
        }
    }

    #[test]
    fn manifest_reparses_identically() {
        let text = r#"
            mode = "sweep"
            seed = 9
            quantile_levels = [0.1, 0.5, 0.9]
            [scenario]
            horizon = 300
            methods = ["qr", "last-impute"]
            [allocation]
            shapley = "sampled"
            permutations = 50
        "#;
        let config = parse_config(text).unwrap();
        assert_eq!(parse_config(&config.manifest()).unwrap(), config);
    }

    #[test]
    fn delta_out_of_range_names_key() {
        let err = parse_config("mode = \"sweep\"\n[allocation]\ndelta = 1.5").unwrap_err();
        assert!(err.is_validation());
        assert_eq!(key_of(err), "allocation.delta");
    }

    #[test]
    fn unordered_levels_rejected() {
        let err = parse_config("mode = \"sweep\"\nquantile_levels = [0.5, 0.1]").unwrap_err();
        let msg = err.to_string();
        assert_eq!(key_of(err), "quantile_levels");
        assert!(msg.contains("increasing"));
    }

    #[test]
    fn unknown_and_missing_keys() {
        assert_eq!(key_of(parse_config("seed = 1").unwrap_err()), "mode");
        assert_eq!(
            key_of(parse_config("mode = \"sweep\"\n[engine]\nrate = 1").unwrap_err()),
            "engine.rate"
        );
        assert_eq!(
            key_of(
                parse_config("mode = \"sweep\"\n[scenario]\nsellers = [{c = 0, tau = 1}]")
                    .unwrap_err()
            ),
            "scenario.sellers[0].tau"
        );
        assert_eq!(
            key_of(parse_config("mode = \"replay\"").unwrap_err()),
            "replay.forecasts"
        );
        assert_eq!(key_of(parse_config("mode = \"fly\"").unwrap_err()), "mode");
    }

    #[test]
    fn weights_must_match_sellers() {
        let text = "mode = \"sweep\"\n[scenario]\nweights = [0.5, 0.5]";
        assert_eq!(key_of(parse_config(text).unwrap_err()), "scenario.weights");
    }

    #[test]
    fn overrides_set_nested_keys() {
        let mut table: Table = "mode = \"sweep\"".parse().unwrap();
        apply_override(&mut table, "scenario.runs", "3").unwrap();
        apply_override(&mut table, "engine.combiner", "qr").unwrap();
        apply_override(&mut table, "quantile_levels", "[0.1, 0.9]").unwrap();
        let config = parse_config_table(table).unwrap();
        assert_eq!(config.scenario.runs, 3);
        assert_eq!(config.engine.combiner, Combiner::Qr);
        assert_eq!(config.quantile_levels.len(), 2);
    }

    proptest! {
        #[test]
        fn resolved_numbers_survive_manifest(
            delta in 0.0..=1.0f64,
            lambda in 0.0..0.999f64,
            eta in 1e-6..1.0f64,
            rate in 0.0..0.99f64,
        ) {
            let text = format!(
                "mode = \"simulate-varying\"\n[allocation]\ndelta = {delta:e}\nlambda = {lambda:e}\n\
                 [engine]\neta = {eta:e}\n[scenario]\nmissing_rate = {rate:e}"
            );
            let config = parse_config(&text).unwrap();
            prop_assert_eq!(config.allocation.delta.to_bits(), delta.to_bits());
            prop_assert_eq!(parse_config(&config.manifest()).unwrap(), config);
        }
    }
}
