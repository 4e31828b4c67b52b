//! File formats: JSON problem files with a registry of built-in evaluators,
//! newline-delimited trace files, JSON run configuration, and the CSV
//! outputs of the experiment harness.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::{ExperimentRecord, MatchedSamples};
use crate::dcop::{
    piecewise_linear_lipschitz, ContinuousDomain, DcopError, DcopInstance, FunctionKind, Operator,
    UtilityFunction,
};
use crate::runtime::Envelope;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Dcop(#[from] DcopError),
    #[error("function {function} uses a code-only evaluator and cannot be written to a file")]
    UnsupportedFunction { function: usize },
    #[error("trace line {line} is malformed")]
    MalformedTrace { line: usize },
}

/// Evaluator registry for problem files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
enum FileKind {
    SensorTarget {
        target: [f64; 2],
        sensors: Vec<[f64; 2]>,
        range: f64,
        view_angle: f64,
        #[serde(default = "default_wrap")]
        wrap: bool,
    },
    PiecewiseLinear {
        knots: Vec<Vec<f64>>,
        values: Vec<f64>,
    },
    Constant {
        value: f64,
    },
}

fn default_wrap() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FileFunction {
    scope: Vec<usize>,
    /// Per-scope-variable Lipschitz constants; derived from the evaluator
    /// when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lipschitz: Option<Vec<f64>>,
    #[serde(flatten)]
    kind: FileKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProblemFile {
    operator: Operator,
    domains: Vec<ContinuousDomain>,
    /// Variable-to-agent map; identity when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    allocation: Option<Vec<usize>>,
    functions: Vec<FileFunction>,
}

fn function_from_file(f: &FileFunction) -> (FunctionKind, Vec<f64>) {
    match &f.kind {
        FileKind::SensorTarget {
            target,
            sensors,
            range,
            view_angle,
            wrap,
        } => {
            let lipschitz = f
                .lipschitz
                .clone()
                .unwrap_or_else(|| vec![1.0 / view_angle; f.scope.len()]);
            (
                FunctionKind::SensorTarget {
                    target: *target,
                    sensors: sensors.clone(),
                    range: *range,
                    view_angle: *view_angle,
                    wrap: *wrap,
                },
                lipschitz,
            )
        }
        FileKind::PiecewiseLinear { knots, values } => {
            let lipschitz = f
                .lipschitz
                .clone()
                .unwrap_or_else(|| piecewise_linear_lipschitz(knots, values));
            (
                FunctionKind::PiecewiseLinear {
                    knots: knots.clone(),
                    values: values.clone(),
                },
                lipschitz,
            )
        }
        FileKind::Constant { value } => {
            let lipschitz = f
                .lipschitz
                .clone()
                .unwrap_or_else(|| vec![0.0; f.scope.len()]);
            (FunctionKind::Constant(*value), lipschitz)
        }
    }
}

/// Parses a JSON problem document into an instance.
pub fn problem_from_str(text: &str) -> Result<DcopInstance, IoError> {
    let file: ProblemFile = serde_json::from_str(text)?;
    let functions = file
        .functions
        .iter()
        .enumerate()
        .map(|(id, f)| {
            let (kind, lipschitz) = function_from_file(f);
            UtilityFunction::new(id, f.scope.clone(), kind, lipschitz)
        })
        .collect();
    let allocation = file
        .allocation
        .unwrap_or_else(|| (0..file.domains.len()).collect());
    Ok(DcopInstance::new(
        file.domains,
        functions,
        allocation,
        file.operator,
    )?)
}

pub fn load_problem(path: &Path) -> Result<DcopInstance, IoError> {
    problem_from_str(&fs::read_to_string(path)?)
}

/// Serializes an instance to the JSON problem schema. Fails on code-only
/// (`Custom`) evaluators.
pub fn problem_to_string(instance: &DcopInstance) -> Result<String, IoError> {
    let functions = instance
        .functions()
        .iter()
        .map(|f| {
            let kind = match &f.kind {
                FunctionKind::SensorTarget {
                    target,
                    sensors,
                    range,
                    view_angle,
                    wrap,
                } => FileKind::SensorTarget {
                    target: *target,
                    sensors: sensors.clone(),
                    range: *range,
                    view_angle: *view_angle,
                    wrap: *wrap,
                },
                FunctionKind::PiecewiseLinear { knots, values } => FileKind::PiecewiseLinear {
                    knots: knots.clone(),
                    values: values.clone(),
                },
                FunctionKind::Constant(value) => FileKind::Constant { value: *value },
                FunctionKind::Custom(_) => {
                    return Err(IoError::UnsupportedFunction { function: f.id })
                }
            };
            Ok(FileFunction {
                scope: f.scope.clone(),
                lipschitz: Some(f.lipschitz.clone()),
                kind,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let file = ProblemFile {
        operator: instance.operator(),
        domains: instance.domains().to_vec(),
        allocation: Some(instance.allocation().to_vec()),
        functions,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn save_problem(path: &Path, instance: &DcopInstance) -> Result<(), IoError> {
    fs::write(path, problem_to_string(instance)?)?;
    Ok(())
}

/// Writes one envelope per line, full decimal precision, in dispatch order.
pub fn write_trace(path: &Path, trace: &[Envelope]) -> Result<(), IoError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for envelope in trace {
        serde_json::to_writer(&mut out, envelope)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<Envelope>, IoError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut trace = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let envelope: Envelope =
            serde_json::from_str(&line).map_err(|_| IoError::MalformedTrace { line: i + 1 })?;
        trace.push(envelope);
    }
    Ok(trace)
}

/// Sweep results, one row per (seed, solver, budget-or-k).
pub fn write_records_csv(path: &Path, records: &[ExperimentRecord]) -> Result<(), IoError> {
    let mut out = String::from("seed,solver,budget_or_k,achieved,reference,relative,samples,messages\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.seed, r.solver, r.budget_or_k, r.achieved, r.reference, r.relative, r.samples, r.messages
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Mean relative utility per sample count, adaptive solver next to the grid
/// baseline (plot data for the utility-versus-samples curve).
pub fn write_mean_curves_csv(
    path: &Path,
    solver_curve: &[(usize, f64)],
    grid_curve: &[(usize, f64)],
) -> Result<(), IoError> {
    let mut out = String::from("samples,dbay_mean_relative,grid_mean_relative\n");
    for &(budget, solver_mean) in solver_curve {
        if let Some(&(_, grid_mean)) = grid_curve.iter().find(|&&(k, _)| k == budget) {
            out.push_str(&format!("{budget},{solver_mean},{grid_mean}\n"));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Equivalent-grid-size curve (plot data for the sample-efficiency figure).
pub fn write_efficiency_csv(
    path: &Path,
    efficiency: &[(usize, MatchedSamples)],
) -> Result<(), IoError> {
    let mut out = String::from("budget,matched_grid_samples\n");
    for (budget, matched) in efficiency {
        out.push_str(&format!("{budget},{matched}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}
