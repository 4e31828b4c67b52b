//! Gaussian-process machinery over normalized inputs in [0, 1].
//!
//! The Dirichlet kernel `κ(x, x') = λ² · min(x, x') · (1 − max(x, x'))` is
//! the Brownian-bridge covariance. Its posterior is Markovian: between two
//! consecutive observations the mean is the straight line through them and
//! the variance is the scaled bridge variance, both depending only on the
//! neighboring pair. The Gramian inverse is tridiagonal with closed-form
//! entries, so no numeric inversion is needed on the hot path. A dense
//! linear-solve posterior is kept alongside purely as a correctness oracle.
//!
//! All computation here lives in normalized coordinates; callers map domain
//! values and Lipschitz constants onto [0, 1] at the module boundary.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GpError {
    #[error("input {x} already observed; the sampling loop has converged")]
    DuplicateInput { x: f64 },
    #[error("input {x} outside the normalized domain [0, 1]")]
    OutOfDomain { x: f64 },
    #[error("need at least {need} observations, have {have}")]
    InsufficientObservations { have: usize, need: usize },
    #[error("boundary observations at x = 0 and x = 1 are required")]
    MissingBoundary,
    #[error("kernel scale must be strictly positive, got {scale}")]
    NonPositiveScale { scale: f64 },
    #[error("Gramian is singular: duplicate or boundary-degenerate inputs")]
    SingularGramian,
    #[error("observation value {y} is not finite")]
    NonFiniteValue { y: f64 },
}

/// One input/output sample of a scalar function on [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
}

/// Observations of one agent's local objective, kept sorted by input with
/// the incumbent best cached. Duplicate inputs are rejected rather than
/// jittered so the Gramian stays nonsingular without contaminating data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    entries: Vec<Observation>,
    incumbent: Option<usize>,
}

impl ObservationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self, GpError> {
        let mut set = Self::new();
        for &(x, y) in pairs {
            set.insert(x, y)?;
        }
        Ok(set)
    }

    /// Inserts in sorted position and refreshes the incumbent.
    pub fn insert(&mut self, x: f64, y: f64) -> Result<(), GpError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(GpError::OutOfDomain { x });
        }
        if !y.is_finite() {
            return Err(GpError::NonFiniteValue { y });
        }
        let pos = self.entries.partition_point(|o| o.x < x);
        if self.entries.get(pos).is_some_and(|o| o.x == x) {
            return Err(GpError::DuplicateInput { x });
        }
        self.entries.insert(pos, Observation { x, y });
        self.incumbent = match self.incumbent {
            None => Some(pos),
            Some(best) => {
                let best = if best >= pos { best + 1 } else { best };
                // Highest value wins; ties go to the smaller input.
                if y > self.entries[best].y || (y == self.entries[best].y && pos < best) {
                    Some(pos)
                } else {
                    Some(best)
                }
            }
        };
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn contains_input(&self, x: f64) -> bool {
        let pos = self.entries.partition_point(|o| o.x < x);
        self.entries.get(pos).is_some_and(|o| o.x == x)
    }

    /// The best observation `(x⁺, y⁺)`.
    pub fn incumbent(&self) -> Option<Observation> {
        self.incumbent.map(|i| self.entries[i])
    }

    /// True when the set brackets the whole domain: first input 0, last 1.
    pub fn has_boundaries(&self) -> bool {
        self.entries.first().is_some_and(|o| o.x == 0.0)
            && self.entries.last().is_some_and(|o| o.x == 1.0)
    }
}

/// Dirichlet (Brownian-bridge) kernel with scale `λ` in utility units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletKernel {
    scale: f64,
}

impl DirichletKernel {
    pub fn new(scale: f64) -> Result<Self, GpError> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(GpError::NonPositiveScale { scale });
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `λ² · min(xi, xj) · (1 − max(xi, xj))`; symmetric in its arguments.
    pub fn eval(&self, xi: f64, xj: f64) -> Result<f64, GpError> {
        for x in [xi, xj] {
            if !(0.0..=1.0).contains(&x) {
                return Err(GpError::OutOfDomain { x });
            }
        }
        Ok(self.eval_unchecked(xi, xj))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, xi: f64, xj: f64) -> f64 {
        let (lo, hi) = if xi <= xj { (xi, xj) } else { (xj, xi) };
        self.scale * self.scale * lo * (1.0 - hi)
    }
}

/// Posterior mean and variance at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorPoint {
    pub mean: f64,
    pub variance: f64,
}

impl PosteriorPoint {
    /// Clamps tiny negative round-off (within 1e-12) to exactly zero so the
    /// square root in the acquisition stays defined.
    fn new(mean: f64, variance: f64) -> Self {
        debug_assert!(variance > -1e-12, "variance {variance} below round-off");
        Self {
            mean,
            variance: variance.max(0.0),
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Closed-form posterior between the two observations bracketing `x`.
///
/// Requires boundary observations (first input 0, last input 1) so every
/// query lies inside some interval. At an observed input the posterior is
/// `(y, 0)` exactly.
pub fn posterior_interval(
    set: &ObservationSet,
    kernel: &DirichletKernel,
    x: f64,
) -> Result<PosteriorPoint, GpError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(GpError::OutOfDomain { x });
    }
    if set.len() < 2 {
        return Err(GpError::InsufficientObservations {
            have: set.len(),
            need: 2,
        });
    }
    if !set.has_boundaries() {
        return Err(GpError::MissingBoundary);
    }
    let entries = set.entries();
    let hi = entries.partition_point(|o| o.x < x);
    if entries.get(hi).is_some_and(|o| o.x == x) {
        return Ok(PosteriorPoint::new(entries[hi].y, 0.0));
    }
    // x is strictly between entries[hi - 1] and entries[hi].
    let left = entries[hi - 1];
    let right = entries[hi];
    let gap = right.x - left.x;
    let mean = (left.y * (right.x - x) + right.y * (x - left.x)) / gap;
    let variance = kernel.scale() * kernel.scale() * (right.x - x) * (x - left.x) / gap;
    Ok(PosteriorPoint::new(mean, variance))
}

/// Nonzero elements of the inverse Gramian for strictly interior
/// observations: `diag[s]` is the diagonal and `off[s]` the symmetric
/// element between rows `s` and `s + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalInverse {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

/// Analytic tridiagonal inverse of the Gramian.
///
/// Boundary inputs make the Gramian singular (the kernel vanishes at 0 and
/// 1), so every observation must lie strictly inside (0, 1).
pub fn tridiagonal_inverse_elements(
    set: &ObservationSet,
    kernel: &DirichletKernel,
) -> Result<TridiagonalInverse, GpError> {
    let entries = set.entries();
    let s = entries.len();
    if s < 3 {
        return Err(GpError::InsufficientObservations { have: s, need: 3 });
    }
    if entries[0].x <= 0.0 || entries[s - 1].x >= 1.0 {
        return Err(GpError::SingularGramian);
    }
    let inv_scale_sq = 1.0 / (kernel.scale() * kernel.scale());
    let x = |i: usize| entries[i].x;
    let mut diag = Vec::with_capacity(s);
    diag.push(inv_scale_sq * x(1) / (x(0) * (x(1) - x(0))));
    for i in 1..s - 1 {
        diag.push(inv_scale_sq * (x(i + 1) - x(i - 1)) / ((x(i) - x(i - 1)) * (x(i + 1) - x(i))));
    }
    diag.push(inv_scale_sq * (1.0 - x(s - 2)) / ((1.0 - x(s - 1)) * (x(s - 1) - x(s - 2))));
    let off = (1..s)
        .map(|i| -inv_scale_sq / (x(i) - x(i - 1)))
        .collect();
    Ok(TridiagonalInverse { diag, off })
}

/// Posterior by direct dense solve against the Gramian; the O(S³) oracle for
/// [`posterior_interval`], never on the hot path.
///
/// Observations at the domain boundaries pin the process: the kernel
/// vanishes there, so they enter as a deterministic straight line between
/// the pinned values rather than as Gramian rows (which would be singular).
/// Interior observations then condition the residual process by a standard
/// symmetric positive-definite solve.
pub fn posterior_dense(
    set: &ObservationSet,
    kernel: &DirichletKernel,
    x: f64,
) -> Result<PosteriorPoint, GpError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(GpError::OutOfDomain { x });
    }
    let mut pinned_low = 0.0;
    let mut pinned_high = 0.0;
    let mut interior: Vec<Observation> = Vec::with_capacity(set.len());
    for &o in set.entries() {
        if o.x == 0.0 {
            pinned_low = o.y;
        } else if o.x == 1.0 {
            pinned_high = o.y;
        } else {
            interior.push(o);
        }
    }
    let line = |t: f64| pinned_low * (1.0 - t) + pinned_high * t;
    let prior_var = kernel.eval_unchecked(x, x);
    if interior.is_empty() {
        // Zero observations: the prior. With only pinned boundaries: the
        // line between them, bridge variance.
        return Ok(PosteriorPoint::new(line(x), prior_var));
    }
    let n = interior.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            gram[i * n + j] = kernel.eval_unchecked(interior[i].x, interior[j].x);
        }
    }
    let chol = cholesky(gram, n).ok_or(GpError::SingularGramian)?;
    let residuals: Vec<f64> = interior.iter().map(|o| o.y - line(o.x)).collect();
    let cross: Vec<f64> = interior
        .iter()
        .map(|o| kernel.eval_unchecked(o.x, x))
        .collect();
    let alpha = chol_solve(&chol, n, &residuals);
    let beta = chol_solve(&chol, n, &cross);
    let mean = line(x) + dot(&cross, &alpha);
    let variance = prior_var - dot(&cross, &beta);
    Ok(PosteriorPoint::new(mean, variance))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place lower Cholesky factor; `None` when the matrix is not positive
/// definite (duplicate inputs collapse the Gramian).
fn cholesky(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut pivot = a[j * n + j];
        for k in 0..j {
            pivot -= a[j * n + k] * a[j * n + k];
        }
        if pivot <= 0.0 {
            return None;
        }
        let pivot = pivot.sqrt();
        a[j * n + j] = pivot;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / pivot;
        }
    }
    Some(a)
}

/// Solves `L Lᵀ x = b` given the lower factor.
fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y
}
