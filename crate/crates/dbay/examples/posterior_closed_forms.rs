//! The Markovian posterior in closed form: between two neighboring
//! observations the mean is their straight line and the variance the scaled
//! bridge variance. Cross-checked against a dense linear solve, along with
//! the analytic tridiagonal inverse of the Gramian.
//!
//! ```bash
//! cargo run --release --example posterior_closed_forms
//! ```

use dbay::gp::{
    posterior_dense, posterior_interval, tridiagonal_inverse_elements, DirichletKernel,
    ObservationSet,
};

fn main() {
    let set = ObservationSet::from_pairs(&[
        (0.0, 0.2),
        (0.3, 1.1),
        (0.55, 0.7),
        (0.8, 1.4),
        (1.0, 0.1),
    ])
    .unwrap();
    let kernel = DirichletKernel::new(1.5).unwrap();

    println!("x      interval μ, σ²        dense μ, σ²");
    for i in 0..=10 {
        let x = i as f64 / 10.0;
        let a = posterior_interval(&set, &kernel, x).unwrap();
        let b = posterior_dense(&set, &kernel, x).unwrap();
        println!(
            "{x:4.2}   {:8.5} {:8.5}    {:8.5} {:8.5}",
            a.mean, a.variance, b.mean, b.variance
        );
    }

    // The tridiagonal inverse needs strictly interior observations.
    let interior = ObservationSet::from_pairs(&[(0.3, 1.1), (0.55, 0.7), (0.8, 1.4)]).unwrap();
    let inv = tridiagonal_inverse_elements(&interior, &kernel).unwrap();
    println!("inverse Gramian diagonal:     {:?}", inv.diag);
    println!("inverse Gramian off-diagonal: {:?}", inv.off);
}
