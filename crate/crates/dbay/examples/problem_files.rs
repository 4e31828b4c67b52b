//! Problem files: write a compiled instance to JSON, read it back, and
//! solve it. The format carries the evaluator registry (sensor-target,
//! piecewise-linear, constant) plus per-variable Lipschitz constants.
//!
//! ```bash
//! cargo run --example problem_files
//! ```

use std::sync::Arc;

use dbay::benchmark::generate_problem;
use dbay::io::{load_problem, save_problem};
use dbay::runtime::{solve, RunOptions, SolverConfig};

fn main() {
    let problem = generate_problem(5, 4, 8, 1.0, 36.0);
    let instance = problem.compile(true).unwrap();

    let path = std::env::temp_dir().join("sensor_problem.json");
    save_problem(&path, &instance).unwrap();
    println!("wrote {}", path.display());

    let loaded = Arc::new(load_problem(&path).unwrap());
    let config = SolverConfig::uniform(loaded.agent_count(), 10);
    let outcome = solve(&loaded, &config, 5, &RunOptions::default()).unwrap();
    println!(
        "loaded instance solved: utility {:.4} with {} samples",
        outcome.utility,
        outcome.metrics.total_samples()
    );
}
