//! Sensor coordination benchmark: problem generation, its utility functions
//! and Lipschitz bounds, the relative-utility and sample-efficiency metrics,
//! and the seeded experiment sweep.
//!
//! Sensors sit on an equally spaced rectangular grid, spaced `range·√2`
//! apart — the widest square-grid spacing whose sensing discs still cover
//! the area between sensors (the disc radius must reach the cell center at
//! half a diagonal). Targets are placed uniformly over the union of the
//! sensing discs by seeded rejection sampling. Observing a target is worth
//! up to 1, decaying linearly with the pointing error across the angle of
//! view.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{dpop_solve, BaselineError, Grid};
use crate::dcop::{
    build_constraint_graph, evaluate_objective, prepare_tree, wrapped_angle_distance, Assignment,
    ContinuousDomain, DcopError, DcopInstance, FunctionKind, Operator, UtilityFunction,
};
use crate::runtime::{solve, RunOptions, RuntimeError, SolveOutcome, SolverConfig};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("reference utility must be strictly positive")]
    ZeroReference,
    #[error("target {target} is outside every sensor's range")]
    UnobservableTarget { target: usize },
    #[error(transparent)]
    Dcop(#[from] DcopError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// Sensor coordination problem: positions, targets, and shared sensor
/// properties. Orientations are the decision variables, one per sensor,
/// over the closed interval [-180°, 180°].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorProblem {
    pub sensors: Vec<[f64; 2]>,
    pub targets: Vec<[f64; 2]>,
    pub range: f64,
    pub view_angle: f64,
}

/// Rectangular sensor layout for `count` sensors: rows × cols as close to
/// square as possible, spacing `range·√2`.
pub fn grid_layout(count: usize, range: f64) -> Vec<[f64; 2]> {
    let rows = (count as f64).sqrt().floor().max(1.0) as usize;
    let cols = count.div_ceil(rows);
    let spacing = range * std::f64::consts::SQRT_2;
    (0..count)
        .map(|i| {
            let row = i / cols;
            let col = i % cols;
            [col as f64 * spacing, row as f64 * spacing]
        })
        .collect()
}

/// Generates a problem with `sensors` grid-laid sensors and `targets`
/// targets placed uniformly over the union of sensing discs (seeded
/// rejection sampling).
pub fn generate_problem(
    seed: u64,
    sensors: usize,
    targets: usize,
    range: f64,
    view_angle: f64,
) -> SensorProblem {
    let positions = grid_layout(sensors, range);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_x = positions.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min) - range;
    let max_x = positions.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max) + range;
    let min_y = positions.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min) - range;
    let max_y = positions.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max) + range;
    let mut placed = Vec::with_capacity(targets);
    while placed.len() < targets {
        let x = rng.gen_range(min_x..max_x);
        let y = rng.gen_range(min_y..max_y);
        let covered = positions
            .iter()
            .any(|p| (p[0] - x).hypot(p[1] - y) <= range);
        if covered {
            placed.push([x, y]);
        }
    }
    SensorProblem {
        sensors: positions,
        targets: placed,
        range,
        view_angle,
    }
}

/// Utility a single sensor earns for one target: 1 when pointed straight at
/// an in-range target, decaying linearly to 0 across the angle of view, and
/// 0 outside range. Angles in degrees; `wrap` uses the minimal wrapped
/// angular difference.
pub fn target_utility(
    orientation: f64,
    sensor: [f64; 2],
    target: [f64; 2],
    view_angle: f64,
    range: f64,
    wrap: bool,
) -> f64 {
    let dx = target[0] - sensor[0];
    let dy = target[1] - sensor[1];
    if (dx * dx + dy * dy).sqrt() > range {
        return 0.0;
    }
    let bearing = dy.atan2(dx).to_degrees();
    let diff = if wrap {
        wrapped_angle_distance(orientation, bearing)
    } else {
        (orientation - bearing).abs()
    };
    if diff <= view_angle {
        1.0 - diff / view_angle
    } else {
        0.0
    }
}

impl SensorProblem {
    /// Sensors within range of target `n`, ascending.
    pub fn observers_of(&self, n: usize) -> Vec<usize> {
        let t = self.targets[n];
        self.sensors
            .iter()
            .enumerate()
            .filter(|(_, p)| (p[0] - t[0]).hypot(p[1] - t[1]) <= self.range)
            .map(|(i, _)| i)
            .collect()
    }

    /// Compiles to a DCOP: one orientation variable per sensor over the
    /// closed interval [-180°, 180°], one function per target scoping the
    /// sensors in range (the best single observation counts), summed.
    pub fn compile(&self, wrap: bool) -> Result<DcopInstance, BenchmarkError> {
        let domains = vec![ContinuousDomain::new(-180.0, 180.0)?; self.sensors.len()];
        let mut functions = Vec::with_capacity(self.targets.len());
        for (n, &target) in self.targets.iter().enumerate() {
            let scope = self.observers_of(n);
            if scope.is_empty() {
                return Err(BenchmarkError::UnobservableTarget { target: n });
            }
            let sensors = scope.iter().map(|&i| self.sensors[i]).collect();
            let lipschitz = vec![1.0 / self.view_angle; scope.len()];
            functions.push(UtilityFunction::new(
                n,
                scope,
                FunctionKind::SensorTarget {
                    target,
                    sensors,
                    range: self.range,
                    view_angle: self.view_angle,
                    wrap,
                },
                lipschitz,
            ));
        }
        Ok(DcopInstance::with_identity_allocation(
            domains,
            functions,
            Operator::Sum,
        )?)
    }

    /// Objective recomputed from the raw geometry: per-target best single
    /// observation, summed. Cross-checks the compiled instance.
    pub fn coverage_utility(&self, orientations: &[f64], wrap: bool) -> f64 {
        (0..self.targets.len())
            .map(|n| {
                self.sensors
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| {
                        target_utility(
                            orientations[i],
                            p,
                            self.targets[n],
                            self.view_angle,
                            self.range,
                            wrap,
                        )
                    })
                    .fold(0.0f64, f64::max)
            })
            .sum()
    }
}

/// Lipschitz bound of agent `i`'s aggregate objective in normalized kernel
/// coordinates: each in-range target contributes slope at most
/// `1 / view_angle` per degree, scaled by the 360° domain width.
pub fn lipschitz_bound(problem: &SensorProblem, agent: usize) -> f64 {
    let p = problem.sensors[agent];
    let in_range = problem
        .targets
        .iter()
        .filter(|t| (t[0] - p[0]).hypot(t[1] - p[1]) <= problem.range)
        .count();
    in_range as f64 / problem.view_angle * 360.0
}

/// Achieved utility divided by the reference optimum.
pub fn relative_utility(achieved: f64, reference: f64) -> Result<f64, BenchmarkError> {
    if reference <= 0.0 {
        return Err(BenchmarkError::ZeroReference);
    }
    Ok(achieved / reference)
}

/// How many equidistant samples the centralized baseline needs to match a
/// relative utility: the exact count, or censored at the largest grid tried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchedSamples {
    At(usize),
    Beyond(usize),
}

impl std::fmt::Display for MatchedSamples {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MatchedSamples::At(k) => write!(f, "{k}"),
            MatchedSamples::Beyond(k) => write!(f, "{k}+"),
        }
    }
}

/// For each (budget, relative utility) of the adaptive solver, the smallest
/// grid k whose relative utility reaches it. `grid_curve` must be sorted by
/// k.
pub fn sample_efficiency(
    solver_curve: &[(usize, f64)],
    grid_curve: &[(usize, f64)],
) -> Vec<(usize, MatchedSamples)> {
    let k_max = grid_curve.last().map(|&(k, _)| k).unwrap_or(0);
    solver_curve
        .iter()
        .map(|&(budget, target)| {
            let matched = grid_curve
                .iter()
                .find(|&&(_, r)| r >= target)
                .map(|&(k, _)| MatchedSamples::At(k))
                .unwrap_or(MatchedSamples::Beyond(k_max));
            (budget, matched)
        })
        .collect()
}

/// Which solver produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    Adaptive,
    Grid,
}

impl std::fmt::Display for SolverName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverName::Adaptive => write!(f, "dbay"),
            SolverName::Grid => write!(f, "grid"),
        }
    }
}

/// One solver run on one generated problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub seed: u64,
    pub solver: SolverName,
    /// Per-agent sample budget for the adaptive solver, or samples per
    /// domain for the grid baseline.
    pub budget_or_k: usize,
    pub achieved: f64,
    pub reference: f64,
    pub relative: f64,
    pub samples: u64,
    pub messages: u64,
}

/// Sweep configuration; defaults follow the benchmark's standard setup of
/// 6 sensors, 12 targets, unit range, 36° view angle, and a 720-sample
/// reference optimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub budgets: Vec<usize>,
    pub grid_ks: Vec<usize>,
    pub reference_k: usize,
    pub sensors: usize,
    pub targets: usize,
    pub range: f64,
    pub view_angle: f64,
    pub wrap: bool,
    pub xi: f64,
    /// Worker threads for seed-level parallelism; per-seed runs stay
    /// single-threaded for determinism.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: (0..30).collect(),
            budgets: (3..=20).collect(),
            grid_ks: (2..=60).collect(),
            reference_k: 720,
            sensors: 6,
            targets: 12,
            range: 1.0,
            view_angle: 36.0,
            wrap: true,
            xi: 0.0,
            jobs: 1,
        }
    }
}

/// Exact grid optimum of an instance at `k` samples per domain, solved per
/// connected component with utility-table propagation.
pub fn grid_optimum(instance: &DcopInstance, k: usize) -> Result<(Assignment, f64), BenchmarkError> {
    let grid = Grid::equidistant(instance, k)?;
    let graph = build_constraint_graph(instance);
    let mut merged = Assignment::new();
    for component in graph.connected_components() {
        let tree = prepare_tree(instance, &graph.induced(&component))?;
        let (assignment, _) = dpop_solve(instance, &tree, &grid)?;
        merged.merge(&assignment);
    }
    let utility = evaluate_objective(instance, &merged)?;
    Ok((merged, utility))
}

fn run_seed(seed: u64, cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, BenchmarkError> {
    let problem = generate_problem(seed, cfg.sensors, cfg.targets, cfg.range, cfg.view_angle);
    let instance = std::sync::Arc::new(problem.compile(cfg.wrap)?);
    let (_, reference) = grid_optimum(&instance, cfg.reference_k)?;
    let mut records = Vec::new();
    for &budget in &cfg.budgets {
        let config = SolverConfig::uniform(instance.agent_count(), budget).with_xi(cfg.xi);
        let outcome: SolveOutcome = solve(&instance, &config, seed, &RunOptions::default())?;
        records.push(ExperimentRecord {
            seed,
            solver: SolverName::Adaptive,
            budget_or_k: budget,
            achieved: outcome.utility,
            reference,
            relative: relative_utility(outcome.utility, reference)?,
            samples: outcome.metrics.total_samples(),
            messages: outcome.metrics.total_messages(),
        });
    }
    for &k in &cfg.grid_ks {
        let (_, achieved) = grid_optimum(&instance, k)?;
        records.push(ExperimentRecord {
            seed,
            solver: SolverName::Grid,
            budget_or_k: k,
            achieved,
            reference,
            relative: relative_utility(achieved, reference)?,
            samples: k as u64,
            messages: 0,
        });
    }
    Ok(records)
}

/// Runs the sweep: for every seed, solve with the adaptive solver at each
/// budget and with the grid baseline at each k, all against the shared
/// reference optimum. Seeds may run in parallel; the output order is by
/// seed, then solver, then budget, regardless of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, BenchmarkError> {
    let per_seed: Vec<Result<Vec<ExperimentRecord>, BenchmarkError>> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .expect("thread pool");
        pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(s, cfg)).collect())
    } else {
        cfg.seeds.iter().map(|&s| run_seed(s, cfg)).collect()
    };
    let mut records = Vec::new();
    for r in per_seed {
        records.extend(r?);
    }
    Ok(records)
}

/// Mean relative utility per budget (or k) for one solver.
pub fn mean_relative_curve(records: &[ExperimentRecord], solver: SolverName) -> Vec<(usize, f64)> {
    let mut buckets: std::collections::BTreeMap<usize, (f64, u64)> = Default::default();
    for r in records.iter().filter(|r| r.solver == solver) {
        let e = buckets.entry(r.budget_or_k).or_insert((0.0, 0));
        e.0 += r.relative;
        e.1 += 1;
    }
    buckets
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect()
}
