//! The two exact grid baselines side by side: exhaustive enumeration and
//! utility-table propagation over the pseudo-tree. Both return the same
//! grid optimum; the table route also scales to grids far beyond what
//! enumeration can touch.
//!
//! ```bash
//! cargo run --release --example grid_baselines
//! ```

use std::sync::Arc;

use dbay::baselines::{dpop_join, dpop_project, exhaustive_solve, Grid, UtilityTable};
use dbay::benchmark::{generate_problem, grid_optimum};
use dbay::dcop::Operator;

fn main() {
    let problem = generate_problem(7, 3, 6, 1.0, 36.0);
    let instance = Arc::new(problem.compile(true).unwrap());

    let grid = Grid::equidistant(&instance, 25).unwrap();
    let (ea, eu) = exhaustive_solve(&instance, &grid).unwrap();
    let (ta, tu) = grid_optimum(&instance, 25).unwrap();
    println!("exhaustive: utility {eu:.6}");
    println!("tables:     utility {tu:.6}");
    assert_eq!(eu, tu);
    assert_eq!(ea, ta);

    // The table route alone reaches the 720-point reference grid.
    let (_, reference) = grid_optimum(&instance, 720).unwrap();
    println!("reference at 720 samples per domain: {reference:.6}");

    // Join and project on a small table, the primitive steps underneath.
    let t = UtilityTable {
        scope: vec![0, 1],
        extents: vec![2, 2],
        values: vec![4.0, 5.0, 6.0, 7.0],
    };
    let joined = dpop_join(&t, &UtilityTable::scalar(1.0), Operator::Sum).unwrap();
    let (projected, argmax) = dpop_project(&joined, &[0]);
    println!(
        "joined {:?} projected over x0 -> {:?} (argmax row {:?})",
        joined.values,
        projected.values,
        argmax.lookup(&[0])
    );
}
