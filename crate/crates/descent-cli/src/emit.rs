//! Experiment execution plus CSV and manifest emission.
//!
//! All numeric CSV fields use Rust's shortest round-trip float formatting, so
//! parsing a value back yields the exact bits that were computed. The
//! manifest is written after every CSV as the completion marker; a directory
//! without one holds an interrupted run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use descent::diagnostics::{field_ratio_grid, rosetta_trace, trajectory_trace, GridSpec};
use descent::experiments::{
    objective_with_bound, run_hybrid_comparison, run_layer_match as lib_run_layer_match,
    run_race_spec, ExperimentSpec, FieldGridSpec, HybridSpec, LayerMatchSpec, RaceOutcome,
    RaceSpec, TraceSpec,
};
use descent::optim::OptimizerSpec;
use descent::vector::ParamVector;

use crate::config::CliError;

const RNG_CONTRACT: &str = "ChaCha8 keyed by a 64-bit seed (one stream per purpose); uniform \
doubles via (next_u64 >> 11) * 2^-53; bounded integers via Lemire widening multiply; shuffles \
via Fisher-Yates";

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    rng: &'static str,
    spec: &'a ExperimentSpec,
    outputs: Vec<String>,
    status: &'static str,
}

fn write_manifest(dir: &Path, spec: &ExperimentSpec, outputs: &[&str]) -> Result<(), CliError> {
    let manifest = Manifest {
        tool: "descent-cli",
        version: env!("CARGO_PKG_VERSION"),
        rng: RNG_CONTRACT,
        spec,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
        status: "complete",
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Config(format!("manifest serialization: {e}")))?;
    fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(())
}

fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn csv_file(dir: &Path, name: &str) -> Result<(PathBuf, fs::File), CliError> {
    let path = dir.join(name);
    let file = fs::File::create(&path)?;
    Ok((path, file))
}

/// Kind and detail columns for the race CSV.
fn optimizer_columns(spec: &OptimizerSpec) -> (String, String) {
    match spec {
        OptimizerSpec::Sgd { eta } => ("SGD".into(), format!("eta={eta}")),
        OptimizerSpec::SgdMomentum { eta, mu } => ("SGD".into(), format!("eta={eta},mu={mu}")),
        OptimizerSpec::NaSgd { alpha, clamp } => {
            if *clamp == 1.0 {
                ("NaSGD".into(), format!("alpha={alpha}"))
            } else {
                ("NaSGD".into(), format!("alpha={alpha},clamp={clamp}"))
            }
        }
        OptimizerSpec::Adam {
            eta,
            beta1,
            beta2,
            eps,
        } => (
            "Adam".into(),
            format!("eta={eta},beta1={beta1},beta2={beta2},eps={eps}"),
        ),
        OptimizerSpec::RmsProp { eta, decay, eps } => (
            "RMSprop".into(),
            format!("eta={eta},decay={decay},eps={eps}"),
        ),
        OptimizerSpec::Adagrad { eta, eps } => ("Adagrad".into(), format!("eta={eta},eps={eps}")),
        OptimizerSpec::SgdExpDecay { eta0, base } => {
            ("SGD-exp-decay".into(), format!("eta0={eta0},base={base}"))
        }
        OptimizerSpec::AlphaMonitor {
            eta0,
            threshold,
            patience,
            factor,
        } => (
            "alpha-monitor".into(),
            format!("eta0={eta0},threshold={threshold},patience={patience},factor={factor}"),
        ),
    }
}

pub fn run_race(spec: &RaceSpec, _lower: Option<f64>, out_dir: &Path) -> Result<(), CliError> {
    let t0 = Instant::now();
    let rows = run_race_spec(spec)?;
    create_out_dir(out_dir)?;
    let (_, mut file) = csv_file(out_dir, "race.csv")?;
    writeln!(file, "optimizer,hyperparams,threshold,steps,diverged")?;
    for (entry, (_, outcome)) in spec.entries.iter().zip(rows.iter()) {
        match (entry, outcome) {
            (descent::experiments::RaceEntry::Fixed { optimizer }, RaceOutcome::Single(result)) => {
                let (kind, params) = optimizer_columns(optimizer);
                for (threshold, steps) in spec.thresholds.iter().zip(&result.steps_to_threshold) {
                    let cell = match steps {
                        Some(s) => s.to_string(),
                        None if result.diverged => "diverged".to_string(),
                        None => "unreached".to_string(),
                    };
                    writeln!(
                        file,
                        "{kind},\"{params}\",{threshold},{cell},{}",
                        result.diverged
                    )?;
                }
            }
            (
                descent::experiments::RaceEntry::Sampled {
                    alpha_interval,
                    trials,
                },
                RaceOutcome::Sampled(result),
            ) => {
                let kind = "NaSGD";
                let params = format!(
                    "alpha~[{},{}),trials={trials},diverged={}",
                    alpha_interval[0], alpha_interval[1], result.diverged_trials
                );
                for (threshold, mean) in spec.thresholds.iter().zip(&result.mean_steps) {
                    let cell = match mean {
                        Some(m) => m.to_string(),
                        None => "unreached".to_string(),
                    };
                    writeln!(
                        file,
                        "{kind},\"{params}\",{threshold},{cell},{}",
                        result.diverged_trials > 0
                    )?;
                }
            }
            _ => unreachable!("entry/outcome kinds always align"),
        }
    }
    drop(file);
    write_manifest(
        out_dir,
        &ExperimentSpec::FunctionRace(spec.clone()),
        &["race.csv"],
    )?;
    eprintln!(
        "race: {} entries × {} thresholds in {:?} -> {}",
        spec.entries.len(),
        spec.thresholds.len(),
        t0.elapsed(),
        out_dir.join("race.csv").display()
    );
    Ok(())
}

pub fn run_layer_match(spec: &LayerMatchSpec, out_dir: &Path) -> Result<(), CliError> {
    let t0 = Instant::now();
    let result = lib_run_layer_match(spec)?;
    create_out_dir(out_dir)?;
    let (_, mut file) = csv_file(out_dir, "layer_match.csv")?;
    writeln!(
        file,
        "step,mean_log10_distance,mean_equivalent_eta,mean_equivalent_alpha,n_active_runs"
    )?;
    for i in 0..result.steps.len() {
        writeln!(
            file,
            "{},{},{},{},{}",
            result.steps[i],
            result.mean_log10_distance[i],
            result.mean_equivalent_eta[i],
            result.mean_equivalent_alpha[i],
            result.n_active_runs[i]
        )?;
    }
    drop(file);
    write_manifest(
        out_dir,
        &ExperimentSpec::LayerMatch(spec.clone()),
        &["layer_match.csv"],
    )?;
    eprintln!(
        "layer-match: {} runs × {} steps in {:?} ({} diverged) -> {}",
        spec.n_runs,
        spec.steps,
        t0.elapsed(),
        result.diverged_runs,
        out_dir.join("layer_match.csv").display()
    );
    Ok(())
}

pub fn run_hybrid(spec: &HybridSpec, out_dir: &Path) -> Result<(), CliError> {
    let t0 = Instant::now();
    let result = run_hybrid_comparison(spec)?;
    create_out_dir(out_dir)?;
    let (_, mut file) = csv_file(out_dir, "hybrid.csv")?;
    writeln!(
        file,
        "series,step,mean_log10_distance,mean_lr,n_active_runs"
    )?;
    for series in &result.series {
        for i in 0..series.result.steps.len() {
            writeln!(
                file,
                "{},{},{},{},{}",
                series.label,
                series.result.steps[i],
                series.result.mean_log10_distance[i],
                series.result.mean_equivalent_eta[i],
                series.result.n_active_runs[i]
            )?;
        }
    }
    drop(file);
    write_manifest(
        out_dir,
        &ExperimentSpec::Hybrid(spec.clone()),
        &["hybrid.csv"],
    )?;
    for (fit, window) in result.fits.iter().zip(spec.fit_windows.iter()) {
        eprintln!(
            "hybrid: fit over first {window} steps: eta0={:.6}, base={:.8}",
            fit.eta0, fit.base
        );
    }
    eprintln!(
        "hybrid: {} series × {} runs in {:?} -> {}",
        result.series.len(),
        spec.n_runs,
        t0.elapsed(),
        out_dir.join("hybrid.csv").display()
    );
    Ok(())
}

pub fn run_rosetta(spec: &TraceSpec, _lower: Option<f64>, out_dir: &Path) -> Result<(), CliError> {
    let t0 = Instant::now();
    let obj = objective_with_bound(spec.function, spec.lower_bound);
    let start = ParamVector::new(spec.start.clone());
    let records = rosetta_trace(obj.as_ref(), &spec.optimizer, &start, spec.steps);
    create_out_dir(out_dir)?;
    let (_, mut file) = csv_file(out_dir, "rosetta.csv")?;
    writeln!(file, "step,equivalent_eta,equivalent_alpha,loss")?;
    for r in &records {
        let alpha = r
            .equivalent_alpha
            .map_or("NaN".to_string(), |a| a.to_string());
        writeln!(file, "{},{},{},{}", r.step, r.equivalent_eta, alpha, r.loss)?;
    }
    drop(file);
    write_manifest(
        out_dir,
        &ExperimentSpec::RosettaTrace(spec.clone()),
        &["rosetta.csv"],
    )?;
    eprintln!(
        "rosetta: {} records in {:?} -> {}",
        records.len(),
        t0.elapsed(),
        out_dir.join("rosetta.csv").display()
    );
    Ok(())
}

pub fn run_trace(spec: &TraceSpec, _lower: Option<f64>, out_dir: &Path) -> Result<(), CliError> {
    let t0 = Instant::now();
    let obj = objective_with_bound(spec.function, spec.lower_bound);
    let start = ParamVector::new(spec.start.clone());
    let trace = trajectory_trace(obj.as_ref(), &spec.optimizer, &start, spec.steps);
    create_out_dir(out_dir)?;
    let (_, mut file) = csv_file(out_dir, "trace.csv")?;
    writeln!(file, "step,x,y,f")?;
    for (i, p) in trace.points.iter().enumerate() {
        let value = obj.evaluate(p).value;
        writeln!(file, "{i},{},{},{value}", p[0], p[1])?;
    }
    if trace.diverged {
        writeln!(file, "{},diverged,diverged,diverged", trace.points.len())?;
    }
    drop(file);
    write_manifest(
        out_dir,
        &ExperimentSpec::Trace(spec.clone()),
        &["trace.csv"],
    )?;
    eprintln!(
        "trace: {} points (diverged: {}) in {:?} -> {}",
        trace.points.len(),
        trace.diverged,
        t0.elapsed(),
        out_dir.join("trace.csv").display()
    );
    Ok(())
}

pub fn run_field_grid(spec: &FieldGridSpec, out_dir: &Path) -> Result<(), CliError> {
    let t0 = Instant::now();
    let obj = spec.function.objective();
    let xs = GridSpec::new(spec.x_min, spec.x_max, spec.x_count);
    let ys = GridSpec::new(spec.y_min, spec.y_max, spec.y_count);
    let grid = field_ratio_grid(obj.as_ref(), &xs, &ys, spec.eta_star, spec.alpha_star);
    create_out_dir(out_dir)?;
    let (_, mut file) = csv_file(out_dir, "field_grid.csv")?;
    writeln!(file, "x,y,ratio")?;
    for point in &grid {
        writeln!(file, "{},{},{}", point.x, point.y, point.ratio)?;
    }
    drop(file);
    write_manifest(
        out_dir,
        &ExperimentSpec::FieldGrid(spec.clone()),
        &["field_grid.csv"],
    )?;
    eprintln!(
        "field-grid: {} points in {:?} -> {}",
        grid.len(),
        t0.elapsed(),
        out_dir.join("field_grid.csv").display()
    );
    Ok(())
}
