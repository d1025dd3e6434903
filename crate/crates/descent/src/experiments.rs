//! Deterministic experiment runners: steps-to-threshold races, sampled-alpha
//! averaging, the layer-matching study, and the hybrid schedule comparison.
//!
//! Reproducibility contract: a spec (including `base_seed`) fully determines
//! every emitted number. Per-run seeds are `base_seed + run_index`, runs
//! execute serially, and aggregation is an ordered reduction, so re-running a
//! spec yields byte-identical outputs.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::nn;
use crate::objective::{Objective, QuadraticValley, Rosenbrock};
use crate::optim::OptimizerSpec;
use crate::rng;
use crate::vector::ParamVector;

/// Spec validation failure; `field` names the offending entry.
#[derive(Debug, thiserror::Error)]
#[error("invalid {field}: {reason}")]
pub struct SpecError {
    pub field: String,
    pub reason: String,
}

impl SpecError {
    fn new(field: &str, reason: impl Into<String>) -> Self {
        SpecError {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

/// Benchmark functions addressable from configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionName {
    Q,
    Rosenbrock,
}

impl FunctionName {
    pub fn objective(&self) -> Box<dyn Objective> {
        match self {
            FunctionName::Q => Box::new(QuadraticValley),
            FunctionName::Rosenbrock => Box::new(Rosenbrock),
        }
    }
}

impl std::str::FromStr for FunctionName {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        match s {
            "q" => Ok(FunctionName::Q),
            "rosenbrock" => Ok(FunctionName::Rosenbrock),
            other => Err(SpecError::new(
                "function",
                format!("unknown function {other:?}; expected \"q\" or \"rosenbrock\""),
            )),
        }
    }
}

impl std::fmt::Display for FunctionName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FunctionName::Q => "q",
            FunctionName::Rosenbrock => "rosenbrock",
        })
    }
}

struct BoundOverride {
    base: Box<dyn Objective>,
    bound: f64,
}

impl Objective for BoundOverride {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn lower_bound(&self) -> f64 {
        self.bound
    }

    fn evaluate(&self, p: &ParamVector) -> crate::objective::Evaluation {
        self.base.evaluate(p)
    }
}

/// Builds the named objective, optionally overriding its known lower bound.
pub fn objective_with_bound(
    function: FunctionName,
    lower_bound: Option<f64>,
) -> Box<dyn Objective> {
    match lower_bound {
        None => function.objective(),
        Some(bound) => Box::new(BoundOverride {
            base: function.objective(),
            bound,
        }),
    }
}

fn default_max_steps() -> u64 {
    1_000_000
}
fn default_trials() -> u32 {
    2000
}
fn default_runs() -> u32 {
    50
}
fn default_record_every() -> u64 {
    10
}
fn default_match_steps() -> u64 {
    4500
}
fn default_hybrid_steps() -> u64 {
    1500
}
fn default_hybrid_alpha() -> f64 {
    0.7
}
fn default_fit_windows() -> Vec<u64> {
    vec![1500, 600, 200]
}

/// One row of a race: either a fixed optimizer or an averaged sweep over
/// uniformly sampled alphas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RaceEntry {
    Sampled {
        alpha_interval: [f64; 2],
        #[serde(default = "default_trials")]
        trials: u32,
    },
    Fixed {
        #[serde(flatten)]
        optimizer: OptimizerSpec,
    },
}

/// Steps-to-threshold race over one function from one start point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceSpec {
    pub function: FunctionName,
    pub start: Vec<f64>,
    pub entries: Vec<RaceEntry>,
    pub thresholds: Vec<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default)]
    pub base_seed: u64,
    /// Overrides the objective's known lower bound when set.
    #[serde(default)]
    pub lower_bound: Option<f64>,
}

/// Layer-matching training study for one optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMatchSpec {
    pub optimizer: OptimizerSpec,
    #[serde(default = "default_runs")]
    pub n_runs: u32,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_match_steps")]
    pub steps: u64,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
}

/// Hybrid comparison: fitted decay schedules and the alpha monitor against
/// norm-adapted descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridSpec {
    #[serde(default = "default_runs")]
    pub n_runs: u32,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_hybrid_steps")]
    pub steps: u64,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default = "default_hybrid_alpha")]
    pub na_alpha: f64,
    #[serde(default = "default_fit_windows")]
    pub fit_windows: Vec<u64>,
}

/// Trajectory or per-step translation trace of one run on one function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub function: FunctionName,
    pub optimizer: OptimizerSpec,
    pub start: Vec<f64>,
    pub steps: u64,
    /// Overrides the objective's known lower bound when set.
    #[serde(default)]
    pub lower_bound: Option<f64>,
}

/// Field length-ratio grid over a 2-d function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGridSpec {
    pub function: FunctionName,
    pub x_min: f64,
    pub x_max: f64,
    pub x_count: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub y_count: usize,
    #[serde(default = "one")]
    pub eta_star: f64,
    #[serde(default = "one")]
    pub alpha_star: f64,
}

fn one() -> f64 {
    1.0
}

/// A complete, runnable experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum ExperimentSpec {
    FunctionRace(RaceSpec),
    LayerMatch(LayerMatchSpec),
    Hybrid(HybridSpec),
    RosettaTrace(TraceSpec),
    Trace(TraceSpec),
    FieldGrid(FieldGridSpec),
}

fn validate_optimizer(spec: &OptimizerSpec) -> Result<(), SpecError> {
    let positive = |field: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(SpecError::new(
                field,
                format!("must be finite and positive, got {v}"),
            ))
        }
    };
    match spec {
        OptimizerSpec::Sgd { eta } => positive("eta", *eta),
        OptimizerSpec::SgdMomentum { eta, mu } => {
            positive("eta", *eta)?;
            if !(0.0..1.0).contains(mu) {
                return Err(SpecError::new(
                    "mu",
                    format!("must lie in [0, 1), got {mu}"),
                ));
            }
            Ok(())
        }
        OptimizerSpec::NaSgd { alpha, clamp } => {
            positive("alpha", *alpha)?;
            positive("clamp", *clamp)
        }
        OptimizerSpec::Adam {
            eta,
            beta1,
            beta2,
            eps,
        } => {
            positive("eta", *eta)?;
            for (field, beta) in [("beta1", beta1), ("beta2", beta2)] {
                if !(0.0..1.0).contains(beta) {
                    return Err(SpecError::new(
                        field,
                        format!("must lie in [0, 1), got {beta}"),
                    ));
                }
            }
            positive("eps", *eps)
        }
        OptimizerSpec::RmsProp { eta, decay, eps } => {
            positive("eta", *eta)?;
            if !(0.0..1.0).contains(decay) {
                return Err(SpecError::new(
                    "decay",
                    format!("must lie in [0, 1), got {decay}"),
                ));
            }
            positive("eps", *eps)
        }
        OptimizerSpec::Adagrad { eta, eps } => {
            positive("eta", *eta)?;
            positive("eps", *eps)
        }
        OptimizerSpec::SgdExpDecay { eta0, base } => {
            positive("eta0", *eta0)?;
            if !base.is_finite() || *base <= 0.0 || *base > 1.0 {
                return Err(SpecError::new(
                    "base",
                    format!("must lie in (0, 1], got {base}"),
                ));
            }
            Ok(())
        }
        OptimizerSpec::AlphaMonitor {
            eta0,
            threshold,
            patience,
            factor,
        } => {
            positive("eta0", *eta0)?;
            positive("threshold", *threshold)?;
            if *patience == 0 {
                return Err(SpecError::new("patience", "must be at least 1"));
            }
            if !factor.is_finite() || *factor <= 0.0 || *factor >= 1.0 {
                return Err(SpecError::new(
                    "factor",
                    format!("must lie in (0, 1), got {factor}"),
                ));
            }
            Ok(())
        }
    }
}

fn validate_start(start: &[f64]) -> Result<(), SpecError> {
    if start.len() != 2 || start.iter().any(|v| !v.is_finite()) {
        return Err(SpecError::new(
            "start",
            format!("expected two finite coordinates, got {start:?}"),
        ));
    }
    Ok(())
}

fn validate_thresholds(thresholds: &[f64]) -> Result<(), SpecError> {
    if thresholds.is_empty() {
        return Err(SpecError::new("thresholds", "must not be empty"));
    }
    if thresholds.iter().any(|t| !t.is_finite()) {
        return Err(SpecError::new("thresholds", "must all be finite"));
    }
    for w in thresholds.windows(2) {
        if w[1] >= w[0] {
            return Err(SpecError::new(
                "thresholds",
                format!("must be strictly descending, got {thresholds:?}"),
            ));
        }
    }
    Ok(())
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        match self {
            ExperimentSpec::FunctionRace(spec) => {
                validate_start(&spec.start)?;
                validate_thresholds(&spec.thresholds)?;
                if spec.max_steps == 0 {
                    return Err(SpecError::new("max_steps", "must be at least 1"));
                }
                if spec.entries.is_empty() {
                    return Err(SpecError::new("entries", "must not be empty"));
                }
                for entry in &spec.entries {
                    match entry {
                        RaceEntry::Fixed { optimizer } => validate_optimizer(optimizer)?,
                        RaceEntry::Sampled {
                            alpha_interval,
                            trials,
                        } => {
                            if !alpha_interval.iter().all(|a| a.is_finite())
                                || alpha_interval[0] >= alpha_interval[1]
                            {
                                return Err(SpecError::new(
                                    "alpha_interval",
                                    format!(
                                        "lower bound must be below upper, got {alpha_interval:?}"
                                    ),
                                ));
                            }
                            if *trials == 0 {
                                return Err(SpecError::new("trials", "must be at least 1"));
                            }
                        }
                    }
                }
                Ok(())
            }
            ExperimentSpec::LayerMatch(spec) => {
                validate_optimizer(&spec.optimizer)?;
                if spec.n_runs == 0 {
                    return Err(SpecError::new("n_runs", "must be at least 1"));
                }
                if spec.steps == 0 {
                    return Err(SpecError::new("steps", "must be at least 1"));
                }
                if spec.record_every == 0 {
                    return Err(SpecError::new("record_every", "must be at least 1"));
                }
                Ok(())
            }
            ExperimentSpec::Hybrid(spec) => {
                if spec.n_runs == 0 {
                    return Err(SpecError::new("n_runs", "must be at least 1"));
                }
                if spec.steps == 0 {
                    return Err(SpecError::new("steps", "must be at least 1"));
                }
                if spec.record_every == 0 {
                    return Err(SpecError::new("record_every", "must be at least 1"));
                }
                if !spec.na_alpha.is_finite() || spec.na_alpha <= 0.0 {
                    return Err(SpecError::new("na_alpha", "must be finite and positive"));
                }
                if spec.fit_windows.is_empty() || spec.fit_windows.iter().any(|w| *w < 2) {
                    return Err(SpecError::new(
                        "fit_windows",
                        "each window needs at least 2 steps",
                    ));
                }
                Ok(())
            }
            ExperimentSpec::RosettaTrace(spec) | ExperimentSpec::Trace(spec) => {
                validate_start(&spec.start)?;
                validate_optimizer(&spec.optimizer)
            }
            ExperimentSpec::FieldGrid(spec) => {
                if spec.x_count == 0 || spec.y_count == 0 {
                    return Err(SpecError::new("grid", "needs at least one point per axis"));
                }
                let bounds = [spec.x_min, spec.x_max, spec.y_min, spec.y_max];
                if bounds.iter().any(|b| !b.is_finite())
                    || spec.x_min > spec.x_max
                    || spec.y_min > spec.y_max
                {
                    return Err(SpecError::new(
                        "grid",
                        "bounds must be finite with min <= max",
                    ));
                }
                if !spec.eta_star.is_finite() || spec.eta_star <= 0.0 {
                    return Err(SpecError::new("eta_star", "must be positive"));
                }
                if !spec.alpha_star.is_finite() || spec.alpha_star <= 0.0 {
                    return Err(SpecError::new("alpha_star", "must be positive"));
                }
                Ok(())
            }
        }
    }
}

/// First step index at which each threshold was met, where index counts
/// completed updates and the start point is index 0.
#[derive(Debug, Clone)]
pub struct RaceResult {
    pub steps_to_threshold: Vec<Option<u64>>,
    pub diverged: bool,
    /// Informational only; never asserted on or written to result files.
    pub wall_time: Duration,
}

/// Races one optimizer down the threshold ladder.
pub fn race(
    obj: &dyn Objective,
    optimizer: &OptimizerSpec,
    start: &ParamVector,
    thresholds: &[f64],
    max_steps: u64,
) -> RaceResult {
    let t0 = Instant::now();
    let mut opt = optimizer.build();
    let mut params = start.clone();
    let mut eval = obj.evaluate(&params);
    let mut hits = vec![None; thresholds.len()];
    let mut ti = 0;
    while ti < thresholds.len() && eval.value <= thresholds[ti] {
        hits[ti] = Some(0);
        ti += 1;
    }
    for i in 1..=max_steps {
        if ti == thresholds.len() {
            break;
        }
        let out = opt.step(&params, eval.value, &eval.gradient, obj.lower_bound());
        if out.diverged {
            return RaceResult {
                steps_to_threshold: hits,
                diverged: true,
                wall_time: t0.elapsed(),
            };
        }
        params = out.new_params;
        eval = obj.evaluate(&params);
        while ti < thresholds.len() && eval.value <= thresholds[ti] {
            hits[ti] = Some(i);
            ti += 1;
        }
    }
    RaceResult {
        steps_to_threshold: hits,
        diverged: false,
        wall_time: t0.elapsed(),
    }
}

/// Aggregate of many norm-adapted races with alpha drawn uniformly from an
/// interval. Means are over the trials that reached each threshold; diverged
/// trials are counted separately.
#[derive(Debug, Clone)]
pub struct SampledAlphaRace {
    pub mean_steps: Vec<Option<f64>>,
    pub reached: Vec<u32>,
    pub diverged_trials: u32,
    pub wall_time: Duration,
}

/// One race-table entry outcome, labelled for reporting.
#[derive(Debug)]
pub enum RaceOutcome {
    Single(RaceResult),
    Sampled(SampledAlphaRace),
}

/// Runs every entry of a race spec in order.
pub fn run_race_spec(spec: &RaceSpec) -> Result<Vec<(String, RaceOutcome)>, SpecError> {
    ExperimentSpec::FunctionRace(spec.clone()).validate()?;
    let obj = objective_with_bound(spec.function, spec.lower_bound);
    let start = ParamVector::new(spec.start.clone());
    let mut out = Vec::with_capacity(spec.entries.len());
    for entry in &spec.entries {
        match entry {
            RaceEntry::Fixed { optimizer } => {
                let result = race(
                    obj.as_ref(),
                    optimizer,
                    &start,
                    &spec.thresholds,
                    spec.max_steps,
                );
                out.push((optimizer.label(), RaceOutcome::Single(result)));
            }
            RaceEntry::Sampled {
                alpha_interval,
                trials,
            } => {
                let result = run_sampled_alpha(
                    obj.as_ref(),
                    (alpha_interval[0], alpha_interval[1]),
                    *trials,
                    &start,
                    &spec.thresholds,
                    spec.max_steps,
                    spec.base_seed,
                )?;
                let label = format!("NaSGD(α ~ [{}, {}))", alpha_interval[0], alpha_interval[1]);
                out.push((label, RaceOutcome::Sampled(result)));
            }
        }
    }
    Ok(out)
}

/// Averages norm-adapted races over `trials` uniform alpha draws from
/// `interval`, all from the same start point.
pub fn run_sampled_alpha(
    obj: &dyn Objective,
    interval: (f64, f64),
    trials: u32,
    start: &ParamVector,
    thresholds: &[f64],
    max_steps: u64,
    base_seed: u64,
) -> Result<SampledAlphaRace, SpecError> {
    let (lo, hi) = interval;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(SpecError::new(
            "alpha_interval",
            format!("lower bound must be below upper, got [{lo}, {hi})"),
        ));
    }
    let t0 = Instant::now();
    let mut rng = rng::seeded(base_seed);
    let mut sums = vec![0.0f64; thresholds.len()];
    let mut reached = vec![0u32; thresholds.len()];
    let mut diverged_trials = 0;
    for _ in 0..trials {
        let alpha = rng::uniform(&mut rng, lo, hi);
        let result = race(
            obj,
            &OptimizerSpec::nasgd(alpha),
            start,
            thresholds,
            max_steps,
        );
        if result.diverged {
            diverged_trials += 1;
            continue;
        }
        for (j, hit) in result.steps_to_threshold.iter().enumerate() {
            if let Some(steps) = hit {
                sums[j] += *steps as f64;
                reached[j] += 1;
            }
        }
    }
    let mean_steps = sums
        .iter()
        .zip(reached.iter())
        .map(|(s, n)| if *n > 0 { Some(s / *n as f64) } else { None })
        .collect();
    Ok(SampledAlphaRace {
        mean_steps,
        reached,
        diverged_trials,
        wall_time: t0.elapsed(),
    })
}

/// Aggregated layer-matching curves over a set of runs.
///
/// Curve aggregation uses the mean of per-run log10 distances; the plain
/// arithmetic mean is kept alongside as `mean_distance` for consumers that
/// prefer it.
#[derive(Debug, Clone)]
pub struct LayerMatchResult {
    /// Recorded step indices (multiples of `record_every`).
    pub steps: Vec<u64>,
    pub mean_log10_distance: Vec<f64>,
    pub mean_distance: Vec<f64>,
    /// Mean realized step coefficient at the recorded step, over active runs.
    pub mean_equivalent_eta: Vec<f64>,
    /// Mean equivalent alpha at the recorded step over active runs where it
    /// is defined and finite; NaN when it never is.
    pub mean_equivalent_alpha: Vec<f64>,
    pub n_active_runs: Vec<u32>,
    /// Final test distance of each run that completed without diverging.
    pub final_distances: Vec<f64>,
    pub diverged_runs: u32,
}

/// Full-resolution per-step telemetry of a layer-matching study.
#[derive(Debug, Clone)]
pub struct LayerMatchTelemetry {
    /// Mean step coefficient over active runs, one entry per training step.
    pub mean_coefficient_per_step: Vec<f64>,
    /// Equivalent alpha per run and step: +inf when the loss sat at the
    /// bound with a live gradient, NaN for a vanished gradient, and absent
    /// entries once a run diverges.
    pub equivalent_alpha: Vec<Vec<f64>>,
}

struct RunCurve {
    distances: Vec<f64>,
    coefficients: Vec<f64>,
    alphas: Vec<f64>,
    completed: bool,
}

fn train_single_run(
    spec: &LayerMatchSpec,
    seed: u64,
    telemetry: bool,
) -> (RunCurve, Vec<f64>, Vec<f64>) {
    let (data, mut layer) = nn::generate_task(seed);
    let mut shuffle_rng = rng::stream(seed, rng::STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut opt = spec.optimizer.build();
    let n_records = (spec.steps / spec.record_every) as usize;
    let mut curve = RunCurve {
        distances: Vec::with_capacity(n_records),
        coefficients: Vec::with_capacity(n_records),
        alphas: Vec::with_capacity(n_records),
        completed: true,
    };
    let mut step_coefficients = Vec::new();
    let mut step_alphas = Vec::new();
    if telemetry {
        step_coefficients.reserve(spec.steps as usize);
        step_alphas.reserve(spec.steps as usize);
    }
    for step in 0..spec.steps {
        let k = (step % data.train.len() as u64) as usize;
        if k == 0 {
            rng::shuffle(&mut shuffle_rng, &mut order);
        }
        let pair = &data.train[order[k]];
        let (loss, grad) = nn::loss_and_grad(&layer, std::slice::from_ref(pair));
        let params = layer.to_params();
        let out = opt.step(&params, loss, &grad, 0.0);
        if out.diverged {
            curve.completed = false;
            break;
        }
        let alpha_eq = if out.grad_norm_sq == 0.0 {
            f64::NAN
        } else if out.loss_before <= 0.0 {
            f64::INFINITY
        } else {
            out.coefficient / (out.loss_before / out.grad_norm_sq)
        };
        if telemetry {
            step_coefficients.push(out.coefficient);
            step_alphas.push(alpha_eq);
        }
        layer.set_params(&out.new_params);
        if (step + 1) % spec.record_every == 0 {
            curve.distances.push(nn::avg_distance(&layer, &data.test));
            curve.coefficients.push(out.coefficient);
            curve.alphas.push(alpha_eq);
        }
    }
    (curve, step_coefficients, step_alphas)
}

/// Runs the layer-matching study and aggregates curves across runs.
pub fn run_layer_match(spec: &LayerMatchSpec) -> Result<LayerMatchResult, SpecError> {
    run_layer_match_with_telemetry(spec, false).map(|(result, _)| result)
}

/// As [`run_layer_match`], optionally retaining per-step telemetry.
pub fn run_layer_match_with_telemetry(
    spec: &LayerMatchSpec,
    telemetry: bool,
) -> Result<(LayerMatchResult, Option<LayerMatchTelemetry>), SpecError> {
    ExperimentSpec::LayerMatch(spec.clone()).validate()?;
    let mut curves = Vec::with_capacity(spec.n_runs as usize);
    let mut per_run_alpha = Vec::new();
    let mut coeff_sums = vec![0.0f64; spec.steps as usize];
    let mut coeff_counts = vec![0u32; spec.steps as usize];
    for run in 0..spec.n_runs {
        let seed = spec.base_seed + run as u64;
        let (curve, coeffs, alphas) = train_single_run(spec, seed, telemetry);
        if telemetry {
            for (i, c) in coeffs.iter().enumerate() {
                coeff_sums[i] += c;
                coeff_counts[i] += 1;
            }
            per_run_alpha.push(alphas);
        }
        curves.push(curve);
    }

    let n_records = (spec.steps / spec.record_every) as usize;
    let steps: Vec<u64> = (1..=n_records as u64)
        .map(|i| i * spec.record_every)
        .collect();
    let mut mean_log10 = Vec::with_capacity(n_records);
    let mut mean_plain = Vec::with_capacity(n_records);
    let mut mean_eta = Vec::with_capacity(n_records);
    let mut mean_alpha = Vec::with_capacity(n_records);
    let mut n_active = Vec::with_capacity(n_records);
    for i in 0..n_records {
        let mut log_sum = 0.0;
        let mut plain_sum = 0.0;
        let mut eta_sum = 0.0;
        let mut alpha_sum = 0.0;
        let mut alive = 0u32;
        let mut alpha_count = 0u32;
        for curve in &curves {
            if i < curve.distances.len() {
                alive += 1;
                let d = curve.distances[i].max(1e-300);
                log_sum += d.log10();
                plain_sum += curve.distances[i];
                eta_sum += curve.coefficients[i];
                let a = curve.alphas[i];
                if a.is_finite() {
                    alpha_sum += a;
                    alpha_count += 1;
                }
            }
        }
        let denom = alive.max(1) as f64;
        mean_log10.push(if alive > 0 { log_sum / denom } else { f64::NAN });
        mean_plain.push(if alive > 0 {
            plain_sum / denom
        } else {
            f64::NAN
        });
        mean_eta.push(if alive > 0 { eta_sum / denom } else { f64::NAN });
        mean_alpha.push(if alpha_count > 0 {
            alpha_sum / alpha_count as f64
        } else {
            f64::NAN
        });
        n_active.push(alive);
    }

    let final_distances: Vec<f64> = curves
        .iter()
        .filter(|c| c.completed && !c.distances.is_empty())
        .map(|c| *c.distances.last().unwrap())
        .collect();
    let diverged_runs = curves.iter().filter(|c| !c.completed).count() as u32;

    let result = LayerMatchResult {
        steps,
        mean_log10_distance: mean_log10,
        mean_distance: mean_plain,
        mean_equivalent_eta: mean_eta,
        mean_equivalent_alpha: mean_alpha,
        n_active_runs: n_active,
        final_distances,
        diverged_runs,
    };
    let telemetry = telemetry.then(|| LayerMatchTelemetry {
        mean_coefficient_per_step: coeff_sums
            .iter()
            .zip(coeff_counts.iter())
            .map(|(s, n)| if *n > 0 { s / *n as f64 } else { f64::NAN })
            .collect(),
        equivalent_alpha: per_run_alpha,
    });
    Ok((result, telemetry))
}

/// Exponential fit `eta0 * base^step` to a positive curve.
#[derive(Debug, Clone, Copy)]
pub struct ExpDecayFit {
    pub eta0: f64,
    pub base: f64,
    /// Curve points in the window that were nonpositive or non-finite and
    /// had to be left out of the fit.
    pub excluded: usize,
}

/// Least-squares line fit to `ln(curve)` against the step index over the
/// first `window` entries.
pub fn fit_equivalent_eta_decay(curve: &[f64], window: usize) -> Result<ExpDecayFit, SpecError> {
    let w = window.min(curve.len());
    let pts: Vec<(f64, f64)> = curve[..w]
        .iter()
        .enumerate()
        .filter(|(_, y)| y.is_finite() && **y > 0.0)
        .map(|(t, y)| (t as f64, y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(SpecError::new(
            "window",
            format!(
                "need at least 2 positive points to fit, found {}",
                pts.len()
            ),
        ));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    Ok(ExpDecayFit {
        eta0: intercept.exp(),
        base: slope.exp(),
        excluded: w - pts.len(),
    })
}

/// One series of the hybrid comparison.
#[derive(Debug)]
pub struct HybridSeries {
    pub label: String,
    pub optimizer: OptimizerSpec,
    pub result: LayerMatchResult,
}

/// Hybrid comparison output: norm-adapted descent, the fitted decay
/// schedules, and the alpha monitor over a shared seed set.
#[derive(Debug)]
pub struct HybridResult {
    pub series: Vec<HybridSeries>,
    pub fits: Vec<ExpDecayFit>,
}

/// Fits exponential schedules to the mean equivalent learning rate of
/// norm-adapted descent, then races every hybrid against it on the same
/// seeds.
pub fn run_hybrid_comparison(spec: &HybridSpec) -> Result<HybridResult, SpecError> {
    ExperimentSpec::Hybrid(spec.clone()).validate()?;
    let na_spec = LayerMatchSpec {
        optimizer: OptimizerSpec::nasgd(spec.na_alpha),
        n_runs: spec.n_runs,
        base_seed: spec.base_seed,
        steps: spec.steps,
        record_every: spec.record_every,
    };
    let (na_result, telemetry) = run_layer_match_with_telemetry(&na_spec, true)?;
    let telemetry = telemetry.expect("telemetry requested");

    let mut series = Vec::new();
    let mut fits = Vec::new();
    series.push(HybridSeries {
        label: format!("na{:03}", (spec.na_alpha * 100.0).round() as u32),
        optimizer: na_spec.optimizer.clone(),
        result: na_result,
    });
    for window in &spec.fit_windows {
        let fit = fit_equivalent_eta_decay(&telemetry.mean_coefficient_per_step, *window as usize)?;
        // a non-decaying fit would be rejected by the schedule validator;
        // cap it at a constant schedule
        let base = fit.base.min(1.0);
        let optimizer = OptimizerSpec::sgd_exp_decay(fit.eta0, base);
        let mut label = format!("decay{:03}", (base.powi(100) * 100.0).round() as u32);
        if series.iter().any(|s: &HybridSeries| s.label == label) {
            label = format!("{label}-w{window}");
        }
        let result = run_layer_match(&LayerMatchSpec {
            optimizer: optimizer.clone(),
            n_runs: spec.n_runs,
            base_seed: spec.base_seed,
            steps: spec.steps,
            record_every: spec.record_every,
        })?;
        fits.push(fit);
        series.push(HybridSeries {
            label,
            optimizer,
            result,
        });
    }
    let monitor = OptimizerSpec::alpha_monitor();
    let result = run_layer_match(&LayerMatchSpec {
        optimizer: monitor.clone(),
        n_runs: spec.n_runs,
        base_seed: spec.base_seed,
        steps: spec.steps,
        record_every: spec.record_every,
    })?;
    series.push(HybridSeries {
        label: "alpha-monitor".to_string(),
        optimizer: monitor,
        result,
    });
    Ok(HybridResult { series, fits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn q_start() -> ParamVector {
        ParamVector::new(vec![1.0, 1.0])
    }

    const Q_THRESHOLDS: [f64; 5] = [1e-2, 1e-4, 1e-6, 1e-8, 1e-10];

    #[test]
    fn race_counts_updates_with_start_at_index_zero() {
        let result = race(
            &QuadraticValley,
            &OptimizerSpec::sgd(0.1156),
            &q_start(),
            &Q_THRESHOLDS,
            10_000,
        );
        assert!(!result.diverged);
        assert_eq!(
            result.steps_to_threshold,
            vec![Some(22), Some(38), Some(55), Some(73), Some(91)]
        );
    }

    #[test]
    fn race_records_zero_for_a_start_below_threshold() {
        let result = race(
            &QuadraticValley,
            &OptimizerSpec::sgd(0.1),
            &ParamVector::new(vec![0.0, 0.0]),
            &[1.0],
            10,
        );
        assert_eq!(result.steps_to_threshold, vec![Some(0)]);
    }

    #[test]
    fn race_reports_divergence() {
        let result = race(
            &Rosenbrock,
            &OptimizerSpec::sgd(0.001),
            &ParamVector::new(vec![-3.0, -4.0]),
            &[1e2, 1e0],
            10_000,
        );
        assert!(result.diverged);
        assert_eq!(result.steps_to_threshold, vec![None, None]);
    }

    #[test]
    fn race_steps_weakly_increase_along_thresholds() {
        let result = race(
            &QuadraticValley,
            &OptimizerSpec::nasgd(0.7),
            &q_start(),
            &Q_THRESHOLDS,
            10_000,
        );
        let hits: Vec<u64> = result
            .steps_to_threshold
            .iter()
            .map(|h| h.unwrap())
            .collect();
        for w in hits.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn race_unreached_thresholds_stay_none() {
        let result = race(
            &QuadraticValley,
            &OptimizerSpec::sgd(0.001),
            &q_start(),
            &[1e-2, 1e-300],
            100,
        );
        assert!(result.steps_to_threshold[1].is_none());
        assert!(!result.diverged);
    }

    #[test]
    fn sampled_alpha_rejects_degenerate_interval() {
        let err = run_sampled_alpha(
            &QuadraticValley,
            (2.0, 0.2),
            10,
            &q_start(),
            &Q_THRESHOLDS,
            1000,
            0,
        )
        .unwrap_err();
        assert_eq!(err.field, "alpha_interval");
    }

    #[test]
    fn sampled_alpha_is_deterministic_per_seed() {
        let a = run_sampled_alpha(
            &QuadraticValley,
            (0.2, 2.0),
            50,
            &q_start(),
            &Q_THRESHOLDS,
            10_000,
            7,
        )
        .unwrap();
        let b = run_sampled_alpha(
            &QuadraticValley,
            (0.2, 2.0),
            50,
            &q_start(),
            &Q_THRESHOLDS,
            10_000,
            7,
        )
        .unwrap();
        assert_eq!(a.mean_steps, b.mean_steps);
        assert_eq!(a.diverged_trials, 0);
    }

    #[test]
    fn race_spec_runs_all_entries() {
        let spec = RaceSpec {
            function: FunctionName::Q,
            start: vec![1.0, 1.0],
            entries: vec![
                RaceEntry::Fixed {
                    optimizer: OptimizerSpec::nasgd(1.9),
                },
                RaceEntry::Sampled {
                    alpha_interval: [0.2, 2.0],
                    trials: 20,
                },
            ],
            thresholds: Q_THRESHOLDS.to_vec(),
            max_steps: 100_000,
            base_seed: 4,
            lower_bound: None,
        };
        let rows = run_race_spec(&spec).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].0, "NaSGD(α = 1.9)");
        match &rows[0].1 {
            RaceOutcome::Single(r) => {
                assert_eq!(
                    r.steps_to_threshold,
                    vec![Some(3), Some(5), Some(9), Some(12), Some(14)]
                );
            }
            _ => panic!("expected single outcome"),
        }
    }

    #[test]
    fn spec_validation_names_the_offending_field() {
        let spec = ExperimentSpec::FunctionRace(RaceSpec {
            function: FunctionName::Q,
            start: vec![1.0, 1.0],
            entries: vec![RaceEntry::Fixed {
                optimizer: OptimizerSpec::sgd(0.1),
            }],
            thresholds: vec![],
            max_steps: 100,
            base_seed: 0,
            lower_bound: None,
        });
        let err = spec.validate().unwrap_err();
        assert_eq!(err.field, "thresholds");

        let spec = ExperimentSpec::FunctionRace(RaceSpec {
            function: FunctionName::Q,
            start: vec![1.0, 1.0],
            entries: vec![RaceEntry::Fixed {
                optimizer: OptimizerSpec::sgd(-0.5),
            }],
            thresholds: vec![1.0, 0.1],
            max_steps: 100,
            base_seed: 0,
            lower_bound: None,
        });
        assert_eq!(spec.validate().unwrap_err().field, "eta");

        let spec = ExperimentSpec::FunctionRace(RaceSpec {
            function: FunctionName::Q,
            start: vec![1.0],
            entries: vec![],
            thresholds: vec![1.0],
            max_steps: 100,
            base_seed: 0,
            lower_bound: None,
        });
        assert_eq!(spec.validate().unwrap_err().field, "start");
    }

    #[test]
    fn layer_match_single_run_curves_are_deterministic() {
        let spec = LayerMatchSpec {
            optimizer: OptimizerSpec::nasgd(0.7),
            n_runs: 1,
            base_seed: 11,
            steps: 300,
            record_every: 10,
        };
        let a = run_layer_match(&spec).unwrap();
        let b = run_layer_match(&spec).unwrap();
        assert_eq!(a.mean_log10_distance, b.mean_log10_distance);
        assert_eq!(a.steps.len(), 30);
        assert_eq!(a.steps[0], 10);
        assert_eq!(*a.steps.last().unwrap(), 300);
        assert_eq!(a.n_active_runs, vec![1; 30]);
    }

    #[test]
    fn layer_match_aggregation_matches_a_naive_recount() {
        // mean curves over n runs equal the average of the n single-run curves
        let base = LayerMatchSpec {
            optimizer: OptimizerSpec::sgd(0.05),
            n_runs: 3,
            base_seed: 40,
            steps: 200,
            record_every: 10,
        };
        let joint = run_layer_match(&base).unwrap();
        let singles: Vec<LayerMatchResult> = (0..3)
            .map(|i| {
                run_layer_match(&LayerMatchSpec {
                    n_runs: 1,
                    base_seed: 40 + i,
                    ..base.clone()
                })
                .unwrap()
            })
            .collect();
        for idx in 0..joint.steps.len() {
            let naive_log: f64 = singles
                .iter()
                .map(|s| s.mean_log10_distance[idx])
                .sum::<f64>()
                / 3.0;
            let naive_plain: f64 = singles.iter().map(|s| s.mean_distance[idx]).sum::<f64>() / 3.0;
            assert_relative_eq!(
                joint.mean_log10_distance[idx],
                naive_log,
                max_relative = 1e-12
            );
            assert_relative_eq!(joint.mean_distance[idx], naive_plain, max_relative = 1e-12);
        }
    }

    #[test]
    fn layer_match_training_actually_trains() {
        let spec = LayerMatchSpec {
            optimizer: OptimizerSpec::nasgd(0.7),
            n_runs: 2,
            base_seed: 100,
            steps: 1000,
            record_every: 100,
        };
        let result = run_layer_match(&spec).unwrap();
        assert_eq!(result.diverged_runs, 0);
        assert!(
            result.mean_log10_distance.last().unwrap() < &result.mean_log10_distance[0],
            "distance should shrink"
        );
        // norm-adapted coefficients stay within the clamp
        for eta in &result.mean_equivalent_eta {
            assert!(*eta >= 0.0 && *eta <= 1.0);
        }
        // for an unclamped norm-adapted run the equivalent alpha is alpha
        for a in &result.mean_equivalent_alpha {
            if a.is_finite() {
                assert_relative_eq!(*a, 0.7, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn fit_recovers_an_exact_exponential() {
        let curve: Vec<f64> = (0..100).map(|k| 0.5 * 0.99f64.powi(k)).collect();
        let fit = fit_equivalent_eta_decay(&curve, 100).unwrap();
        assert_relative_eq!(fit.eta0, 0.5, max_relative = 1e-9);
        assert_relative_eq!(fit.base, 0.99, max_relative = 1e-9);
        assert_eq!(fit.excluded, 0);
    }

    #[test]
    fn fit_of_a_constant_curve_has_base_one() {
        let curve = vec![0.125; 50];
        let fit = fit_equivalent_eta_decay(&curve, 50).unwrap();
        assert_relative_eq!(fit.base, 1.0, max_relative = 1e-12);
        assert_relative_eq!(fit.eta0, 0.125, max_relative = 1e-12);
    }

    #[test]
    fn fit_excludes_nonpositive_points() {
        let mut curve: Vec<f64> = (0..50).map(|k| 0.5 * 0.99f64.powi(k)).collect();
        curve[7] = 0.0;
        curve[13] = -1.0;
        let fit = fit_equivalent_eta_decay(&curve, 50).unwrap();
        assert_eq!(fit.excluded, 2);
        assert_relative_eq!(fit.base, 0.99, max_relative = 1e-6);
    }

    #[test]
    fn hybrid_comparison_produces_five_series() {
        let spec = HybridSpec {
            n_runs: 2,
            base_seed: 5,
            steps: 300,
            record_every: 10,
            na_alpha: 0.7,
            fit_windows: vec![300, 150, 50],
        };
        let result = run_hybrid_comparison(&spec).unwrap();
        assert_eq!(result.series.len(), 5);
        assert_eq!(result.series[0].label, "na070");
        assert_eq!(result.series[4].label, "alpha-monitor");
        assert!(result.series[1].label.starts_with("decay"));
        for s in &result.series {
            assert_eq!(s.result.steps.len(), 30);
        }
        assert_eq!(result.fits.len(), 3);
    }

    #[test]
    fn experiment_spec_serde_round_trip() {
        let specs = vec![
            ExperimentSpec::FunctionRace(RaceSpec {
                function: FunctionName::Rosenbrock,
                start: vec![-3.0, -4.0],
                entries: vec![
                    RaceEntry::Fixed {
                        optimizer: OptimizerSpec::nasgd(1.6),
                    },
                    RaceEntry::Sampled {
                        alpha_interval: [0.2, 2.0],
                        trials: 2000,
                    },
                ],
                thresholds: vec![1e2, 1e0, 1e-2, 1e-4, 1e-6],
                max_steps: 200_000,
                base_seed: 9,
                lower_bound: None,
            }),
            ExperimentSpec::LayerMatch(LayerMatchSpec {
                optimizer: OptimizerSpec::nasgd(0.7),
                n_runs: 50,
                base_seed: 1000,
                steps: 4500,
                record_every: 10,
            }),
            ExperimentSpec::Hybrid(HybridSpec {
                n_runs: 50,
                base_seed: 1000,
                steps: 1500,
                record_every: 10,
                na_alpha: 0.7,
                fit_windows: vec![1500, 600, 200],
            }),
            ExperimentSpec::Trace(TraceSpec {
                function: FunctionName::Q,
                optimizer: OptimizerSpec::nasgd(0.007),
                start: vec![1.0, 1.0],
                steps: 6000,
                lower_bound: None,
            }),
            ExperimentSpec::FieldGrid(FieldGridSpec {
                function: FunctionName::Q,
                x_min: -1.0,
                x_max: 1.0,
                x_count: 21,
                y_min: -1.0,
                y_max: 1.0,
                y_count: 21,
                eta_star: 1.0,
                alpha_star: 1.0,
            }),
        ];
        for spec in specs {
            let json = serde_json::to_string(&spec).unwrap();
            let back: ExperimentSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(spec, back);
        }
    }

    #[test]
    fn function_name_parses_and_rejects() {
        assert_eq!("q".parse::<FunctionName>().unwrap(), FunctionName::Q);
        assert_eq!(
            "rosenbrock".parse::<FunctionName>().unwrap(),
            FunctionName::Rosenbrock
        );
        assert!("sphere".parse::<FunctionName>().is_err());
    }

    #[test]
    fn telemetry_tracks_full_resolution_alpha() {
        let spec = LayerMatchSpec {
            optimizer: OptimizerSpec::sgd(0.1),
            n_runs: 2,
            base_seed: 3,
            steps: 120,
            record_every: 10,
        };
        let (_, telemetry) = run_layer_match_with_telemetry(&spec, true).unwrap();
        let telemetry = telemetry.unwrap();
        assert_eq!(telemetry.equivalent_alpha.len(), 2);
        assert_eq!(telemetry.equivalent_alpha[0].len(), 120);
        assert_eq!(telemetry.mean_coefficient_per_step.len(), 120);
        for c in &telemetry.mean_coefficient_per_step {
            assert_eq!(*c, 0.1);
        }
    }
}
