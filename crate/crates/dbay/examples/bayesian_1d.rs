//! One-dimensional Bayesian optimization of a Lipschitz function: endpoint
//! and midpoint bootstrap, then expected-improvement sampling with the
//! kernel scale tied to the Lipschitz constant.
//!
//! ```bash
//! cargo run --release --example bayesian_1d
//! ```

use dbay::acquisition::{
    kernel_scale_for, select_next_sample, AcquisitionError, AcquisitionParams, LipschitzModel,
};
use dbay::gp::ObservationSet;

fn main() {
    // Piecewise-linear with slopes within ±1 and a sharp peak at 0.62.
    let f = |x: f64| -> f64 { 0.3 - 0.8 * (x - 0.62).abs() + 0.2 * (x - 0.1).abs() };
    let lipschitz = LipschitzModel::new(1.0);
    let kernel = kernel_scale_for(&lipschitz).expect("nonzero constant");
    let params = AcquisitionParams::default();

    let mut set = ObservationSet::new();
    for x in [0.0, 1.0, 0.5] {
        set.insert(x, f(x)).unwrap();
    }
    for round in 3..25 {
        match select_next_sample(&set, &kernel, &params) {
            Ok(x) => {
                set.insert(x, f(x)).unwrap();
                let best = set.incumbent().unwrap();
                println!(
                    "round {round:2}: sampled {x:.5}, incumbent f({:.5}) = {:.5}",
                    best.x, best.y
                );
            }
            Err(AcquisitionError::ConvergedFlat { .. }) => {
                println!("round {round:2}: acquisition is flat, stopping");
                break;
            }
            Err(e) => panic!("{e}"),
        }
    }
    let best = set.incumbent().unwrap();
    println!(
        "final incumbent {:.5} at {:.5} (true peak 0.404 at 0.62)",
        best.y, best.x
    );
}
