//! Central registry of numeric tolerances and schedule constants.
//!
//! Every tolerance used by the library lives here with a note on where it
//! applies, so that individual modules carry no ad-hoc magic numbers and the
//! test suites can assert against the same values the implementation uses.

// ─────────────────────────────────────────────────────────────────────────────
// Probe grids
// ─────────────────────────────────────────────────────────────────────────────

/// Half-width of the default symmetric margin probe grid.
pub const PROBE_HALF_WIDTH: f64 = 10.0;

/// Point count of the default probe grid (odd, so 0 is a grid point).
pub const PROBE_POINTS: usize = 1001;

/// Half-width of the grid used for label-flip symmetry probing of
/// divergence pairs (u, v).
pub const FLIP_GRID_HALF_WIDTH: f64 = 5.0;

/// Point count per axis for the label-flip pair grid.
pub const FLIP_GRID_POINTS: usize = 41;

/// Probability grid used by link-level checks: 99 equally spaced points
/// 0.01, 0.02, ..., 0.99.
pub const P_GRID_LO: f64 = 0.01;
pub const P_GRID_HI: f64 = 0.99;
pub const P_GRID_POINTS: usize = 99;

// ─────────────────────────────────────────────────────────────────────────────
// Gradient-symmetry and odd-part classification
// ─────────────────────────────────────────────────────────────────────────────

/// Spread tolerance for classifying a constant gradient sum when the loss has
/// an analytic gradient.
pub const SYMMETRY_TOL_ANALYTIC: f64 = 1e-8;

/// Spread tolerance for the same classification when gradients come from
/// finite differences of an interpolant (tabulated losses). Monotone-cubic
/// slope estimation leaves gradient noise near 1e-3 at knot spacing 0.1, so
/// the cut sits above that; genuinely asymmetric losses exceed it by orders
/// of magnitude.
pub const SYMMETRY_TOL_TABULATED: f64 = 5e-3;

/// Relative tolerance for gradient-vs-central-difference agreement on the
/// probe grid.
pub const FD_GRADIENT_REL_TOL: f64 = 1e-6;

/// Laplacian-style losses have a gradient kink at the origin; finite
/// difference checks skip |v| below this.
pub const KINK_SKIP_HALF_WIDTH: f64 = 1e-3;

// ─────────────────────────────────────────────────────────────────────────────
// Bregman machinery
// ─────────────────────────────────────────────────────────────────────────────

/// Divergences within this of zero from below are rounding noise and clamp
/// to zero; anything more negative is an invariant violation.
pub const DIVERGENCE_CLAMP: f64 = 1e-12;

/// Conjugate search domain is clipped this far inside a bounded generator
/// domain (for probability-type generators: [1e-12, 1 - 1e-12]).
pub const CONJUGATE_CLIP: f64 = 1e-12;

/// Golden-section iteration cap for the conjugate maximizer.
pub const GOLDEN_MAX_ITERS: usize = 200;

/// Golden-section interval tolerance for the conjugate maximizer.
pub const GOLDEN_TOL: f64 = 1e-10;

/// First truncation level for Bregman divergences toward an infinite anchor.
pub const TRUNCATION_START: f64 = 10.0;

/// The truncation level doubles until successive divergence values differ by
/// less than [`TRUNCATION_DELTA`]. Losses with exponentially decaying tails
/// converge by G = 80; a 1/v tail (canonical boosting) needs G near 1e9, so
/// the cap sits far above both.
pub const TRUNCATION_MAX_DOUBLINGS: usize = 46;

/// Successive-value convergence threshold for the truncation schedule.
pub const TRUNCATION_DELTA: f64 = 1e-9;

// ─────────────────────────────────────────────────────────────────────────────
// Links and minimum risk
// ─────────────────────────────────────────────────────────────────────────────

/// Margin bracket for bisection solves of the link first-order condition.
/// A probability whose link falls outside ±this is treated as out of range.
pub const LINK_BRACKET: f64 = 50.0;

/// Absolute interval tolerance for bisection solves.
pub const BISECT_XTOL: f64 = 1e-13;

/// Iteration cap for bisection solves.
pub const BISECT_MAX_ITERS: usize = 200;

/// Implied probabilities from inverse links are clamped to
/// [CLIP_Q, 1 - CLIP_Q] and flagged. For the squared loss this matches
/// clamping the margin to [-1 + 1e-9, 1 - 1e-9].
pub const CLIP_Q: f64 = 5e-10;

/// Central-difference step for the numeric derivative of the minimum risk
/// inside the canonical scaling check (one-sided at grid edges).
pub const MIN_RISK_FD_STEP: f64 = 1e-6;

/// Ratio-constancy tolerance for the canonical scaling check.
pub const CANONICAL_SCALING_TOL: f64 = 1e-5;

// ─────────────────────────────────────────────────────────────────────────────
// Ensembles
// ─────────────────────────────────────────────────────────────────────────────

/// Fraction of members per point that may be clamped during centroid
/// combination before the operation errors out.
pub const CENTROID_CLAMP_BUDGET: f64 = 0.01;

// ─────────────────────────────────────────────────────────────────────────────
// Learner
// ─────────────────────────────────────────────────────────────────────────────

/// Default full-batch gradient-descent step size.
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

/// Default gradient-descent iteration count.
pub const DEFAULT_ITERATIONS: usize = 500;

/// Default L2 penalty (applied to weights, not the intercept).
pub const DEFAULT_L2_PENALTY: f64 = 1e-4;

/// Default number of bootstrap models.
pub const DEFAULT_MODELS: usize = 50;

/// A backtracking line search halves the step at most this many times per
/// iteration while the objective would increase.
pub const BACKTRACK_LIMIT: usize = 30;

/// A degenerate (single-class) bootstrap resample is redrawn at most this
/// many times before erroring.
pub const RESAMPLE_REDRAW_LIMIT: usize = 100;
