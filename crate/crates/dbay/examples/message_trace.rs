//! Record and inspect the full message exchange of a small run: sample
//! messages flowing down the tree, utility replies flowing up, and the
//! final assignments at the end. The bus is deterministic, so the trace is
//! byte-for-byte reproducible.
//!
//! ```bash
//! cargo run --example message_trace
//! ```

use std::sync::Arc;

use dbay::dcop::{ContinuousDomain, DcopInstance, FunctionKind, Operator, UtilityFunction};
use dbay::runtime::{solve, RunOptions, SolverConfig};

fn main() {
    let shared = UtilityFunction::new(
        0,
        vec![0, 1],
        FunctionKind::PiecewiseLinear {
            knots: vec![vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0]],
            values: vec![0.0, 0.3, 0.1, 0.4, 1.0, 0.2, 0.0, 0.5, 0.1],
        },
        vec![2.0, 2.0],
    );
    let instance = Arc::new(
        DcopInstance::with_identity_allocation(
            vec![ContinuousDomain::new(0.0, 1.0).unwrap(); 2],
            vec![shared],
            Operator::Sum,
        )
        .unwrap(),
    );
    let config = SolverConfig::uniform(2, 4);
    let options = RunOptions { record_trace: true };
    let outcome = solve(&instance, &config, 0, &options).unwrap();

    for envelope in &outcome.trace {
        println!("{}", serde_json::to_string(envelope).unwrap());
    }
    println!(
        "-- {} envelopes, final assignment {:?}, utility {:.4}",
        outcome.trace.len(),
        outcome.assignment,
        outcome.utility
    );

    let again = solve(&instance, &config, 0, &options).unwrap();
    assert_eq!(outcome.trace, again.trace);
    println!("-- re-run produced an identical trace");
}
