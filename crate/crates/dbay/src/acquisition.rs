//! Sample selection: expected improvement over the Gaussian-process
//! posterior, Lipschitz upper envelopes, and the kernel-scale rule that ties
//! the two together.
//!
//! The guarantee chain: the Lipschitz upper envelope of the observations
//! bounds the objective, so any unobserved optimum lies where the envelope
//! exceeds the incumbent (the upper bound region). With the Dirichlet kernel
//! scale at least the Lipschitz constant, `mean + std dev` dominates the
//! envelope everywhere, which makes expected improvement strictly positive
//! on the whole upper bound region — the acquisition search can never wall
//! off the optimum.

use thiserror::Error;

use crate::gp::{
    posterior_interval, DirichletKernel, GpError, Observation, ObservationSet, PosteriorPoint,
};

#[derive(Debug, Error, PartialEq)]
pub enum AcquisitionError {
    #[error("Lipschitz constant is zero: the objective is constant, sample anywhere")]
    ZeroLipschitz,
    #[error(
        "observations rise faster than the declared Lipschitz constant \
         ({observed_slope} > {declared}); the constant is wrong"
    )]
    LipschitzViolated { observed_slope: f64, declared: f64 },
    #[error("expected improvement is flat (≤ {threshold}); optimization has converged")]
    ConvergedFlat { threshold: f64 },
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// Exploration offset ξ of the expected improvement, in utility units.
/// Zero keeps the convergence guarantee and still explores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionParams {
    pub xi: f64,
}

impl Default for AcquisitionParams {
    fn default() -> Self {
        Self { xi: 0.0 }
    }
}

/// Lipschitz constant of the objective in normalized coordinates: utility
/// units per unit of [0, 1] input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzModel {
    pub constant: f64,
}

impl LipschitzModel {
    pub fn new(constant: f64) -> Self {
        debug_assert!(constant >= 0.0);
        Self { constant }
    }
}

/// Flatness threshold below which the search reports convergence.
pub const FLAT_EI: f64 = 1e-15;

/// Convergence tolerance of the per-interval scalar search, in x.
pub const SEARCH_TOLERANCE: f64 = 1e-6;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    const INV_SQRT_TWO_PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_TWO_PI * (-0.5 * z * z).exp()
}

/// Standard normal cumulative distribution via the complementary error
/// function, accurate to well below 1e-12 across [-8, 8].
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Closed-form expected improvement of a posterior point over the incumbent:
/// `w·Φ(w/σ) + σ·φ(w/σ)` with `w = μ − y⁺ − ξ`, and exactly 0 when σ = 0.
pub fn expected_improvement(
    post: &PosteriorPoint,
    incumbent_y: f64,
    params: &AcquisitionParams,
) -> f64 {
    ei_closed_form(post.mean - incumbent_y - params.xi, post.std_dev())
}

#[inline]
fn ei_closed_form(w: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let z = w / sigma;
    let q = w * normal_cdf(z) + sigma * normal_pdf(z);
    // The closed form is nonnegative; round-off cancellation may leave a
    // tiny negative residue for deep negative z.
    q.max(0.0)
}

/// Lipschitz upper envelope over the observations:
/// `min_s (y_s + L·|x − x_s|)`.
pub fn upper_bound(set: &ObservationSet, lip: &LipschitzModel, x: f64) -> f64 {
    set.entries()
        .iter()
        .map(|o| o.y + lip.constant * (x - o.x).abs())
        .fold(f64::INFINITY, f64::min)
}

/// True where the upper envelope strictly exceeds the incumbent value.
/// Never true at an observation, since there the envelope is at most y⁺.
pub fn in_upper_bound_region(set: &ObservationSet, lip: &LipschitzModel, x: f64) -> bool {
    match set.incumbent() {
        Some(best) => upper_bound(set, lip, x) > best.y,
        None => false,
    }
}

/// True where the expected improvement is strictly positive.
pub fn in_search_region(
    set: &ObservationSet,
    kernel: &DirichletKernel,
    params: &AcquisitionParams,
    x: f64,
) -> Result<bool, GpError> {
    let post = posterior_interval(set, kernel, x)?;
    let incumbent = set.incumbent().expect("posterior requires observations");
    Ok(expected_improvement(&post, incumbent.y, params) > 0.0)
}

/// Smallest kernel scale that keeps the search region covering the upper
/// bound region: λ equal to the Lipschitz constant.
pub fn kernel_scale_for(lip: &LipschitzModel) -> Result<DirichletKernel, AcquisitionError> {
    if lip.constant <= 0.0 {
        return Err(AcquisitionError::ZeroLipschitz);
    }
    Ok(DirichletKernel::new(lip.constant)?)
}

/// Geometry of one inter-observation interval in normalized coordinates:
/// its width, the slope of the data relative to the steepest admissible
/// slope, and the apex of the upper envelope's tent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalGeometry {
    /// Interval width `Δx = x_s − x_{s−1}`.
    pub delta: f64,
    /// `c = (y_s − y_{s−1}) / (L·Δx)`, in [−1, 1] for admissible data.
    pub slope_ratio: f64,
    /// Envelope apex `x̂ = (1 + c) / 2` in interval-normalized coordinates.
    pub critical_point: f64,
    left_x: f64,
}

impl IntervalGeometry {
    /// Maps an absolute input into the interval's [0, 1] coordinate.
    pub fn normalized(&self, x: f64) -> f64 {
        (x - self.left_x) / self.delta
    }

    /// The envelope apex as an absolute input.
    pub fn critical_point_absolute(&self) -> f64 {
        self.left_x + self.critical_point * self.delta
    }
}

/// Geometry of the interval between two consecutive observations. Fails when
/// the pair contradicts the declared Lipschitz constant.
pub fn critical_point(
    left: Observation,
    right: Observation,
    lip: &LipschitzModel,
) -> Result<IntervalGeometry, AcquisitionError> {
    debug_assert!(left.x < right.x);
    let delta = right.x - left.x;
    let rise = right.y - left.y;
    if rise.abs() > lip.constant * delta {
        return Err(AcquisitionError::LipschitzViolated {
            observed_slope: rise.abs() / delta,
            declared: lip.constant,
        });
    }
    let slope_ratio = if lip.constant > 0.0 {
        rise / (lip.constant * delta)
    } else {
        0.0
    };
    Ok(IntervalGeometry {
        delta,
        slope_ratio,
        critical_point: 0.5 * (1.0 + slope_ratio),
        left_x: left.x,
    })
}

/// Grid check of the scale-matched coverage guarantee: with the kernel
/// scale set to the Lipschitz constant, `mean + std dev` must dominate the
/// Lipschitz upper envelope up to `tol` at every one of `points` equidistant
/// inputs. Requires boundary observations.
pub fn posterior_guard_holds(
    set: &ObservationSet,
    lipschitz: f64,
    points: usize,
    tol: f64,
) -> bool {
    let lip = LipschitzModel::new(lipschitz);
    let kernel = match kernel_scale_for(&lip) {
        Ok(k) => k,
        Err(_) => return false,
    };
    (0..points).all(|i| {
        let x = i as f64 / (points - 1) as f64;
        match posterior_interval(set, &kernel, x) {
            Ok(post) => post.mean + post.std_dev() >= upper_bound(set, &lip, x) - tol,
            Err(_) => false,
        }
    })
}

/// Golden-section maximization of `f` on `[a, b]`; returns the best probe
/// `(x, f(x))` once the bracket is narrower than `tol`. Ties shrink toward
/// the left, so equal maxima resolve to the smaller x.
pub fn golden_section_max(
    mut f: impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Selects the input with maximal expected improvement over [0, 1].
///
/// Expected improvement is zero at every observation and one-humped between
/// Markovian-kernel neighbors, so the search runs a bounded golden-section
/// per inter-observation interval and keeps the best interval winner, ties
/// toward smaller x. Intervals whose EI upper bound (EI is monotone in both
/// the mean gap and the deviation, each maximized separately) cannot beat
/// the running best are skipped.
pub fn select_next_sample(
    set: &ObservationSet,
    kernel: &DirichletKernel,
    params: &AcquisitionParams,
) -> Result<f64, AcquisitionError> {
    select_next_sample_with_tolerance(set, kernel, params, SEARCH_TOLERANCE)
}

/// [`select_next_sample`] with an explicit per-interval search tolerance.
pub fn select_next_sample_with_tolerance(
    set: &ObservationSet,
    kernel: &DirichletKernel,
    params: &AcquisitionParams,
    tolerance: f64,
) -> Result<f64, AcquisitionError> {
    if set.len() < 2 {
        return Err(GpError::InsufficientObservations {
            have: set.len(),
            need: 2,
        }
        .into());
    }
    if !set.has_boundaries() {
        return Err(GpError::MissingBoundary.into());
    }
    let incumbent = set.incumbent().expect("set is nonempty").y;
    let entries = set.entries();
    let scale = kernel.scale();

    let ei_between = |left: &Observation, right: &Observation, x: f64| -> f64 {
        let gap = right.x - left.x;
        let mean = (left.y * (right.x - x) + right.y * (x - left.x)) / gap;
        let variance = scale * scale * (right.x - x) * (x - left.x) / gap;
        ei_closed_form(mean - incumbent - params.xi, variance.max(0.0).sqrt())
    };

    // Midpoint pass seeds the running best for pruning.
    let mut best: Option<(f64, f64)> = None;
    let consider = |x: f64, q: f64, best: &mut Option<(f64, f64)>| {
        if best.is_none_or(|(_, bq)| q > bq) {
            *best = Some((x, q));
        }
    };
    for pair in entries.windows(2) {
        let mid = 0.5 * (pair[0].x + pair[1].x);
        consider(mid, ei_between(&pair[0], &pair[1], mid), &mut best);
    }
    for pair in entries.windows(2) {
        let (left, right) = (&pair[0], &pair[1]);
        let w_bound = left.y.max(right.y) - incumbent - params.xi;
        let sigma_bound = scale * (0.25 * (right.x - left.x)).sqrt();
        let q_bound = ei_closed_form(w_bound, sigma_bound);
        if best.is_some_and(|(_, bq)| q_bound <= bq) {
            continue;
        }
        let (x, q) = golden_section_max(|x| ei_between(left, right, x), left.x, right.x, tolerance);
        consider(x, q, &mut best);
    }
    match best {
        Some((x, q)) if q > FLAT_EI => Ok(x),
        _ => Err(AcquisitionError::ConvergedFlat { threshold: FLAT_EI }),
    }
}
