//! Generate a sensor coordination problem and solve it end to end.
//!
//! ```bash
//! cargo run --release --example solve_sensor
//! ```

use std::sync::Arc;

use dbay::benchmark::{generate_problem, grid_optimum, relative_utility};
use dbay::runtime::{solve, RunOptions, SolverConfig};

fn main() {
    let seed = 42;
    let problem = generate_problem(seed, 6, 12, 1.0, 36.0);
    println!(
        "{} sensors, {} targets, range {}, view angle {}°",
        problem.sensors.len(),
        problem.targets.len(),
        problem.range,
        problem.view_angle
    );

    let instance = Arc::new(problem.compile(true).expect("compiles"));
    let config = SolverConfig::uniform(instance.agent_count(), 15);
    let outcome = solve(&instance, &config, seed, &RunOptions::default()).expect("solves");

    for (variable, value) in outcome.assignment.iter() {
        println!("sensor {variable} points at {value:8.3}°");
    }
    println!(
        "utility {:.4} using {} samples and {} messages across {} component(s)",
        outcome.utility,
        outcome.metrics.total_samples(),
        outcome.metrics.total_messages(),
        outcome.components
    );

    let (_, reference) = grid_optimum(&instance, 720).expect("reference");
    let relative = relative_utility(outcome.utility, reference).expect("reference is positive");
    println!("reference optimum {reference:.4}, relative utility {relative:.4}");
}
