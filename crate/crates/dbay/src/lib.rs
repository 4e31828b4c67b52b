//! Solver library for distributed constraint optimization problems (DCOPs)
//! with continuous variable domains.
//!
//! Instead of discretizing the domains, agents coordinate through a
//! pseudo-tree and select samples with Bayesian optimization: a Gaussian
//! process with a Dirichlet (Brownian-bridge) kernel whose scale is tied to
//! the Lipschitz constant of the utility functions, and an expected
//! improvement acquisition function. With the kernel scale at least the
//! Lipschitz constant, the acquisition search region covers every input
//! whose Lipschitz upper envelope exceeds the incumbent, so the sampling
//! converges to the global optimum.
//!
//! The crate is organized as:
//!
//! - [`dcop`] — problem representation: domains, utility functions,
//!   constraint graph, pseudo-tree construction, objective evaluation.
//! - [`gp`] — Gaussian-process machinery: observation sets, the Dirichlet
//!   kernel, closed-form interval posteriors, the analytic tridiagonal
//!   inverse of the Gramian, and a dense-solve posterior used as an oracle.
//! - [`acquisition`] — expected improvement, Lipschitz upper envelopes,
//!   kernel-scale selection, and the per-interval sample search.
//! - [`protocol`] — the agent state machine: nested sample/utility
//!   optimization between parents and children, final-assignment
//!   propagation.
//! - [`runtime`] — deterministic in-process message bus, scheduler, trace
//!   recording, and run metrics.
//! - [`baselines`] — centralized equidistant-grid search and a discrete
//!   utility-propagation solver used as exact grid oracles.
//! - [`benchmark`] — the sensor coordination problem generator, its metrics,
//!   and the experiment sweep harness.
//! - [`io`] — problem files, run configuration, trace files, and CSV output.
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `dbay` binary for the command-line interface.

pub mod acquisition;
pub mod baselines;
pub mod benchmark;
pub mod dcop;
pub mod gp;
pub mod io;
pub mod protocol;
pub mod runtime;

pub use dcop::{Assignment, ContinuousDomain, DcopInstance, Operator, UtilityFunction};
pub use gp::{DirichletKernel, Observation, ObservationSet, PosteriorPoint};
