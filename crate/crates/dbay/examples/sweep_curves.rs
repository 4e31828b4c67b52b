//! A miniature experiment sweep: mean relative utility of the adaptive
//! solver versus the centralized grid baseline, and the number of grid
//! samples the baseline needs to match each budget. Writes the same CSV
//! files as `dbay sweep`.
//!
//! ```bash
//! cargo run --release --example sweep_curves
//! ```

use dbay::benchmark::{
    mean_relative_curve, run_experiment, sample_efficiency, ExperimentConfig, SolverName,
};
use dbay::io;

fn main() {
    let cfg = ExperimentConfig {
        seeds: (0..8).collect(),
        budgets: (3..=14).collect(),
        grid_ks: (2..=40).collect(),
        reference_k: 240,
        jobs: 4,
        ..ExperimentConfig::default()
    };
    let records = run_experiment(&cfg).expect("sweep runs");

    let solver = mean_relative_curve(&records, SolverName::Adaptive);
    let grid = mean_relative_curve(&records, SolverName::Grid);
    println!("samples  adaptive  grid");
    for &(budget, mean) in &solver {
        let g = grid.iter().find(|&&(k, _)| k == budget).map(|&(_, m)| m);
        println!("{budget:7}  {mean:8.4}  {:8.4}", g.unwrap_or(f64::NAN));
    }
    for (budget, matched) in sample_efficiency(&solver, &grid) {
        println!("budget {budget:2} matched by grid k = {matched}");
    }

    let dir = std::path::Path::new("out-example-sweep");
    std::fs::create_dir_all(dir).unwrap();
    io::write_records_csv(&dir.join("results.csv"), &records).unwrap();
    io::write_mean_curves_csv(&dir.join("utility_curve.csv"), &solver, &grid).unwrap();
    io::write_efficiency_csv(
        &dir.join("sample_efficiency.csv"),
        &sample_efficiency(&solver, &grid),
    )
    .unwrap();
    println!("CSV files written to {}", dir.display());
}
