//! Spec resolution: config file parsing and flag overrides.
//!
//! Precedence is flags over file over defaults. `--config` accepts either a
//! TOML spec or a previously emitted `manifest.json`, whose echoed spec
//! replays the run.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use descent::experiments::{
    ExperimentSpec, FieldGridSpec, FunctionName, HybridSpec, LayerMatchSpec, RaceEntry, RaceSpec,
    TraceSpec,
};
use descent::optim::OptimizerSpec;

use crate::{
    CommonArgs, FieldGridArgs, HybridArgs, LayerMatchArgs, OptimizerArgs, RaceArgs, TraceArgs,
};

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration; exits with code 2 and no partial outputs.
    Config(String),
    Io(std::io::Error),
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err)
    }
}

impl From<descent::experiments::SpecError> for CliError {
    fn from(err: descent::experiments::SpecError) -> Self {
        CliError::Config(err.to_string())
    }
}

pub fn out_dir(common: &CommonArgs) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os("DESCENT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Deserialize)]
struct ManifestEnvelope {
    spec: ExperimentSpec,
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        if let Ok(envelope) = serde_json::from_str::<ManifestEnvelope>(&text) {
            return Ok(envelope.spec);
        }
        return serde_json::from_str::<ExperimentSpec>(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())));
    }
    toml::from_str::<ExperimentSpec>(&text)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

fn load_optional(common: &CommonArgs) -> Result<Option<ExperimentSpec>, CliError> {
    common.config.as_deref().map(load_spec).transpose()
}

fn parse_function(s: &str) -> Result<FunctionName, CliError> {
    s.parse::<FunctionName>()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn parse_pair(field: &str, s: &str) -> Result<Vec<f64>, CliError> {
    let values: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
    match values {
        Ok(v) if v.len() == 2 => Ok(v),
        _ => Err(CliError::Config(format!(
            "invalid {field}: expected two comma-separated numbers, got {s:?}"
        ))),
    }
}

fn parse_list(field: &str, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|_| {
            CliError::Config(format!(
                "invalid {field}: expected comma-separated numbers, got {s:?}"
            ))
        })
}

/// Builds an optimizer spec from flags, if `--optimizer` was given.
pub fn optimizer_from_flags(args: &OptimizerArgs) -> Result<Option<OptimizerSpec>, CliError> {
    let Some(kind) = args.optimizer.as_deref() else {
        return Ok(None);
    };
    let need = |field: &str, value: Option<f64>| {
        value.ok_or_else(|| {
            CliError::Config(format!("missing {field}: required for --optimizer {kind}"))
        })
    };
    let spec = match kind {
        "sgd" => OptimizerSpec::sgd(need("eta", args.eta)?),
        "sgd-momentum" => OptimizerSpec::sgd_momentum(need("eta", args.eta)?, args.mu.unwrap_or(0.0)),
        "nasgd" => {
            let mut spec = OptimizerSpec::nasgd(need("alpha", args.alpha)?);
            if let (OptimizerSpec::NaSgd { clamp, .. }, Some(c)) = (&mut spec, args.clamp) {
                *clamp = c;
            }
            spec
        }
        "adam" => {
            let mut spec = OptimizerSpec::adam(need("eta", args.eta)?);
            if let OptimizerSpec::Adam {
                beta1, beta2, eps, ..
            } = &mut spec
            {
                if let Some(b) = args.beta1 {
                    *beta1 = b;
                }
                if let Some(b) = args.beta2 {
                    *beta2 = b;
                }
                if let Some(e) = args.eps {
                    *eps = e;
                }
            }
            spec
        }
        "rmsprop" => {
            let mut spec = OptimizerSpec::rmsprop(need("eta", args.eta)?);
            if let OptimizerSpec::RmsProp { decay, eps, .. } = &mut spec {
                if let Some(d) = args.decay {
                    *decay = d;
                }
                if let Some(e) = args.eps {
                    *eps = e;
                }
            }
            spec
        }
        "adagrad" => {
            let mut spec = OptimizerSpec::adagrad(need("eta", args.eta)?);
            if let (OptimizerSpec::Adagrad { eps, .. }, Some(e)) = (&mut spec, args.eps) {
                *eps = e;
            }
            spec
        }
        "sgd-exp-decay" => {
            OptimizerSpec::sgd_exp_decay(need("eta0", args.eta0)?, need("base", args.base)?)
        }
        "alpha-monitor" => {
            let mut spec = OptimizerSpec::alpha_monitor();
            if let OptimizerSpec::AlphaMonitor {
                eta0,
                threshold,
                patience,
                factor,
            } = &mut spec
            {
                if let Some(e) = args.eta0 {
                    *eta0 = e;
                }
                if let Some(t) = args.threshold {
                    *threshold = t;
                }
                if let Some(p) = args.patience {
                    *patience = p;
                }
                if let Some(f) = args.factor {
                    *factor = f;
                }
            }
            spec
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown optimizer {other:?}; expected sgd, sgd-momentum, nasgd, adam, rmsprop, adagrad, sgd-exp-decay, or alpha-monitor"
            )))
        }
    };
    Ok(Some(spec))
}

pub fn resolve_race(args: &RaceArgs) -> Result<(RaceSpec, Option<f64>), CliError> {
    let mut spec = match load_optional(&args.common)? {
        Some(ExperimentSpec::FunctionRace(spec)) => spec,
        Some(other) => {
            return Err(CliError::Config(format!(
                "config task mismatch: expected function-race, found {}",
                task_name(&other)
            )))
        }
        None => RaceSpec {
            function: FunctionName::Q,
            start: vec![1.0, 1.0],
            entries: Vec::new(),
            thresholds: vec![1e-2, 1e-4, 1e-6, 1e-8, 1e-10],
            max_steps: 1_000_000,
            base_seed: 0,
            lower_bound: None,
        },
    };
    if let Some(f) = &args.function {
        spec.function = parse_function(f)?;
    }
    if let Some(s) = &args.start {
        spec.start = parse_pair("start", s)?;
    }
    if let Some(t) = &args.thresholds {
        spec.thresholds = parse_list("thresholds", t)?;
    }
    if let Some(m) = args.max_steps {
        spec.max_steps = m;
    }
    if let Some(seed) = args.common.seed {
        spec.base_seed = seed;
    }
    if let Some(optimizer) = optimizer_from_flags(&args.optimizer)? {
        spec.entries = vec![RaceEntry::Fixed { optimizer }];
    }
    if let Some(interval) = &args.alpha_interval {
        let pair = parse_pair("alpha_interval", interval)?;
        spec.entries.push(RaceEntry::Sampled {
            alpha_interval: [pair[0], pair[1]],
            trials: args.trials.unwrap_or(2000),
        });
    }
    if args.lower_bound.is_some() {
        spec.lower_bound = args.lower_bound;
    }
    ExperimentSpec::FunctionRace(spec.clone()).validate()?;
    Ok((spec, args.lower_bound))
}

pub fn resolve_layer_match(args: &LayerMatchArgs) -> Result<LayerMatchSpec, CliError> {
    let mut spec = match load_optional(&args.common)? {
        Some(ExperimentSpec::LayerMatch(spec)) => spec,
        Some(other) => {
            return Err(CliError::Config(format!(
                "config task mismatch: expected layer-match, found {}",
                task_name(&other)
            )))
        }
        None => LayerMatchSpec {
            optimizer: OptimizerSpec::nasgd(0.7),
            n_runs: 50,
            base_seed: 1000,
            steps: 4500,
            record_every: 10,
        },
    };
    if let Some(optimizer) = optimizer_from_flags(&args.optimizer)? {
        spec.optimizer = optimizer;
    }
    if let Some(r) = args.runs {
        spec.n_runs = r;
    }
    if let Some(s) = args.steps {
        spec.steps = s;
    }
    if let Some(r) = args.record_every {
        spec.record_every = r;
    }
    if let Some(seed) = args.common.seed {
        spec.base_seed = seed;
    }
    ExperimentSpec::LayerMatch(spec.clone()).validate()?;
    Ok(spec)
}

pub fn resolve_hybrid(args: &HybridArgs) -> Result<HybridSpec, CliError> {
    let mut spec = match load_optional(&args.common)? {
        Some(ExperimentSpec::Hybrid(spec)) => spec,
        Some(other) => {
            return Err(CliError::Config(format!(
                "config task mismatch: expected hybrid, found {}",
                task_name(&other)
            )))
        }
        None => HybridSpec {
            n_runs: 50,
            base_seed: 1000,
            steps: 1500,
            record_every: 10,
            na_alpha: 0.7,
            fit_windows: vec![1500, 600, 200],
        },
    };
    if let Some(r) = args.runs {
        spec.n_runs = r;
    }
    if let Some(s) = args.steps {
        spec.steps = s;
    }
    if let Some(r) = args.record_every {
        spec.record_every = r;
    }
    if let Some(a) = args.alpha {
        spec.na_alpha = a;
    }
    if let Some(seed) = args.common.seed {
        spec.base_seed = seed;
    }
    // the canonical windows assume the canonical length; rescale the default
    // ladder when the run is shorter or longer
    if spec.fit_windows == vec![1500, 600, 200] && spec.steps != 1500 {
        let s = spec.steps;
        spec.fit_windows = vec![s.max(2), (s * 2 / 5).max(2), (s * 2 / 15).max(2)];
    }
    ExperimentSpec::Hybrid(spec.clone()).validate()?;
    Ok(spec)
}

pub fn resolve_trace(
    args: &TraceArgs,
    rosetta: bool,
) -> Result<(TraceSpec, Option<f64>), CliError> {
    let loaded = load_optional(&args.common)?;
    let mut spec = match loaded {
        Some(ExperimentSpec::Trace(spec)) | Some(ExperimentSpec::RosettaTrace(spec)) => spec,
        Some(other) => {
            return Err(CliError::Config(format!(
                "config task mismatch: expected {}, found {}",
                if rosetta { "rosetta-trace" } else { "trace" },
                task_name(&other)
            )))
        }
        None => TraceSpec {
            function: FunctionName::Q,
            optimizer: OptimizerSpec::nasgd(0.007),
            start: vec![1.0, 1.0],
            steps: 6000,
            lower_bound: None,
        },
    };
    if let Some(f) = &args.function {
        spec.function = parse_function(f)?;
    }
    if let Some(s) = &args.start {
        spec.start = parse_pair("start", s)?;
    }
    if let Some(optimizer) = optimizer_from_flags(&args.optimizer)? {
        spec.optimizer = optimizer;
    }
    if let Some(s) = args.steps {
        spec.steps = s;
    }
    if args.lower_bound.is_some() {
        spec.lower_bound = args.lower_bound;
    }
    let wrapped = if rosetta {
        ExperimentSpec::RosettaTrace(spec.clone())
    } else {
        ExperimentSpec::Trace(spec.clone())
    };
    wrapped.validate()?;
    Ok((spec, args.lower_bound))
}

pub fn resolve_field_grid(args: &FieldGridArgs) -> Result<FieldGridSpec, CliError> {
    let mut spec = match load_optional(&args.common)? {
        Some(ExperimentSpec::FieldGrid(spec)) => spec,
        Some(other) => {
            return Err(CliError::Config(format!(
                "config task mismatch: expected field-grid, found {}",
                task_name(&other)
            )))
        }
        None => FieldGridSpec {
            function: FunctionName::Q,
            x_min: -1.0,
            x_max: 1.0,
            x_count: 21,
            y_min: -1.0,
            y_max: 1.0,
            y_count: 21,
            eta_star: 1.0,
            alpha_star: 1.0,
        },
    };
    if let Some(f) = &args.function {
        spec.function = parse_function(f)?;
    }
    if let Some(v) = args.x_min {
        spec.x_min = v;
    }
    if let Some(v) = args.x_max {
        spec.x_max = v;
    }
    if let Some(v) = args.x_count {
        spec.x_count = v;
    }
    if let Some(v) = args.y_min {
        spec.y_min = v;
    }
    if let Some(v) = args.y_max {
        spec.y_max = v;
    }
    if let Some(v) = args.y_count {
        spec.y_count = v;
    }
    if let Some(v) = args.eta_star {
        spec.eta_star = v;
    }
    if let Some(v) = args.alpha_star {
        spec.alpha_star = v;
    }
    ExperimentSpec::FieldGrid(spec.clone()).validate()?;
    Ok(spec)
}

fn task_name(spec: &ExperimentSpec) -> &'static str {
    match spec {
        ExperimentSpec::FunctionRace(_) => "function-race",
        ExperimentSpec::LayerMatch(_) => "layer-match",
        ExperimentSpec::Hybrid(_) => "hybrid",
        ExperimentSpec::RosettaTrace(_) => "rosetta-trace",
        ExperimentSpec::Trace(_) => "trace",
        ExperimentSpec::FieldGrid(_) => "field-grid",
    }
}
