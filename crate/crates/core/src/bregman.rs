//! Bregman divergences over margin losses and other convex generators.
//!
//! B_phi(u, v) = phi(u) - phi(v) - phi'(v)(u - v). The two generator families
//! used in this crate are margin losses themselves (domain: all reals) and
//! negative minimum-risk functions over probabilities (see
//! [`crate::link::LinkBundle::generator`]). Losses whose minimizer sits at
//! +infinity get a truncated-anchor limit: the divergence toward ±G recovers
//! the loss itself as G grows.

use crate::error::{Error, Result};
use crate::loss::{classify_gradient_symmetry, Grid, MarginLoss};
use crate::tolerances::{
    CONJUGATE_CLIP, DIVERGENCE_CLAMP, GOLDEN_MAX_ITERS, GOLDEN_TOL, TRUNCATION_DELTA,
    TRUNCATION_MAX_DOUBLINGS, TRUNCATION_START,
};

/// A differentiable convex function together with its natural domain.
///
/// The domain matters: a generator defined by a formula that extends beyond
/// the probability interval (the squared loss's negative minimum risk is a
/// quadratic) must expose the extended domain, or its conjugate and dual maps
/// get truncated at the interval boundary.
pub trait BregmanGenerator {
    fn phi(&self, u: f64) -> f64;
    fn phi_grad(&self, u: f64) -> f64;
    /// Open interval (lo, hi); either end may be infinite.
    fn domain(&self) -> (f64, f64);
    /// Short name for error contexts.
    fn label(&self) -> String;
}

/// Margin losses generate divergences over all reals (tabulated losses over
/// their extended evaluation range, which is also all reals).
impl BregmanGenerator for MarginLoss {
    fn phi(&self, u: f64) -> f64 {
        self.eval(u)
    }

    fn phi_grad(&self, u: f64) -> f64 {
        self.grad(u)
    }

    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn label(&self) -> String {
        self.name().to_string()
    }
}

/// B_phi(u, v). Values within rounding of zero from below clamp to zero;
/// anything more negative means the generator is not convex there and is an
/// invariant violation.
pub fn divergence<G: BregmanGenerator + ?Sized>(gen: &G, u: f64, v: f64) -> Result<f64> {
    let (lo, hi) = gen.domain();
    for point in [u, v] {
        if !point.is_finite() || point < lo || point > hi {
            return Err(Error::InvalidInput(format!(
                "divergence argument {point} outside domain ({lo}, {hi}) of {}",
                gen.label()
            )));
        }
    }
    if u == v {
        return Ok(0.0);
    }
    let d = gen.phi(u) - gen.phi(v) - gen.phi_grad(v) * (u - v);
    if !d.is_finite() {
        return Err(Error::NonFinite {
            context: format!("divergence over {}", gen.label()),
            input: u,
        });
    }
    if d < 0.0 {
        if d >= -DIVERGENCE_CLAMP {
            return Ok(0.0);
        }
        return Err(Error::NegativeDivergence { u, v, value: d });
    }
    Ok(d)
}

/// Outcome of probing B(u, v) against B(-u, -v) over a pair grid.
#[derive(Clone, Copy, Debug)]
pub struct LabelFlipCheck {
    pub symmetric: bool,
    /// Largest |B(u, v) - B(-u, -v)| observed.
    pub max_asymmetry: f64,
}

/// Probe whether the divergence is invariant under negating both arguments,
/// which holds exactly when the loss is gradient-symmetric.
pub fn label_flip_symmetric(loss: &MarginLoss, grid: Grid, tol: f64) -> Result<LabelFlipCheck> {
    let mut max_asymmetry: f64 = 0.0;
    for u in grid.iter() {
        for v in grid.iter() {
            let forward = divergence(loss, u, v)?;
            let flipped = divergence(loss, -u, -v)?;
            max_asymmetry = max_asymmetry.max((forward - flipped).abs());
        }
    }
    Ok(LabelFlipCheck {
        symmetric: max_asymmetry <= tol,
        max_asymmetry,
    })
}

/// Convex conjugate sup_u { u·v - phi(u) } by golden-section search.
///
/// Bounded domains are clipped [`CONJUGATE_CLIP`] inside each finite end.
/// For unbounded domains the stationary point of the concave objective is
/// bracketed first by expanding a sign change of phi' - v.
pub fn conjugate<G: BregmanGenerator + ?Sized>(gen: &G, v: f64, tol: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::InvalidInput(format!(
            "conjugate argument {v} must be finite"
        )));
    }
    let (lo, hi) = gen.domain();
    let objective = |u: f64| u * v - gen.phi(u);
    let (mut a, mut b);
    if lo.is_finite() && hi.is_finite() {
        a = lo + CONJUGATE_CLIP * (hi - lo);
        b = hi - CONJUGATE_CLIP * (hi - lo);
    } else {
        // Stationary point solves phi'(u) = v with phi' non-decreasing.
        a = if lo.is_finite() {
            lo + CONJUGATE_CLIP
        } else {
            -1.0
        };
        b = if hi.is_finite() {
            hi - CONJUGATE_CLIP
        } else {
            2.0
        };
        let mut width = b - a;
        for _ in 0..200 {
            let grow_left = !lo.is_finite() && gen.phi_grad(a) > v;
            let grow_right = !hi.is_finite() && gen.phi_grad(b) < v;
            if !grow_left && !grow_right {
                break;
            }
            if grow_left {
                a -= width;
            }
            if grow_right {
                b += width;
            }
            width *= 2.0;
        }
        if gen.phi_grad(a) > v || gen.phi_grad(b) < v {
            return Err(Error::Numeric {
                context: format!("conjugate of {}", gen.label()),
                detail: format!("failed to bracket the stationary point for v = {v}"),
            });
        }
    }
    let (_, value) = crate::numeric::golden_max(
        objective,
        a,
        b,
        tol,
        GOLDEN_MAX_ITERS,
        &format!("conjugate of {}", gen.label()),
    )?;
    Ok(value)
}

/// Default conjugate tolerance.
pub fn conjugate_default_tol() -> f64 {
    GOLDEN_TOL
}

// ─────────────────────────────────────────────────────────────────────────────
// Limit representation of the loss as a divergence
// ─────────────────────────────────────────────────────────────────────────────

/// The loss minimizer over the extended reals, used as the anchor of the
/// limit representation l(y·f) = lim B(f, g_y) with g_{+1} = g_plus and
/// g_{-1} = -g_plus.
#[derive(Clone, Copy, Debug)]
pub struct LimitAnchor {
    /// argmin of the loss; +infinity for losses that only approach their
    /// infimum.
    pub g_plus: f64,
    /// For tabulated losses whose sampled argmin sits on the table edge the
    /// finite/infinite call is ambiguous; such anchors are flagged.
    pub boundary_ambiguous: bool,
}

impl LimitAnchor {
    pub fn g_minus(&self) -> f64 {
        -self.g_plus
    }

    /// Catalogue losses have known minimizers; tabulated losses are probed:
    /// a still-decreasing right edge means the minimum lies beyond the table
    /// and the anchor is treated as infinite (flagged ambiguous).
    pub fn for_loss(loss: &MarginLoss) -> LimitAnchor {
        match loss {
            MarginLoss::Squared => LimitAnchor {
                g_plus: 1.0,
                boundary_ambiguous: false,
            },
            MarginLoss::Logistic
            | MarginLoss::CanonicalBoosting
            | MarginLoss::Laplacian
            | MarginLoss::Exponential
            | MarginLoss::SmoothHinge { .. } => LimitAnchor {
                g_plus: f64::INFINITY,
                boundary_ambiguous: false,
            },
            MarginLoss::Tabulated(table) => {
                let (lo, hi) = table.range();
                if loss.grad(hi) < 0.0 {
                    return LimitAnchor {
                        g_plus: f64::INFINITY,
                        boundary_ambiguous: true,
                    };
                }
                // Convex with negative slope at lo (validated) and
                // non-negative slope at hi: bisect the gradient.
                let g_plus = crate::numeric::bisect_increasing(
                    |x| loss.grad(x),
                    lo,
                    hi,
                    crate::tolerances::BISECT_XTOL,
                    crate::tolerances::BISECT_MAX_ITERS,
                    "tabulated anchor",
                )
                .unwrap_or(0.5 * (lo + hi));
                LimitAnchor {
                    g_plus,
                    boundary_ambiguous: false,
                }
            }
        }
    }
}

/// Result of the limit representation.
#[derive(Clone, Copy, Debug)]
pub struct LimitBregman {
    /// The (possibly truncated) divergence value; equals l(y·f) within 1e-6.
    pub value: f64,
    /// The anchor actually used (±g_plus, or the signed truncation level).
    pub anchor: f64,
    /// Truncation level G when the anchor was infinite.
    pub truncation_level: Option<f64>,
    /// Last successive difference when truncated.
    pub last_delta: Option<f64>,
}

/// Evaluate l(y·f) as a Bregman divergence toward the loss minimizer.
///
/// Finite anchors are used directly. Infinite anchors are truncated at
/// G = 10·2^k until successive values differ by less than 1e-9; the level is
/// reported. Requires a gradient-symmetric loss: without a constant gradient
/// sum the limit toward the negative anchor does not reproduce l(-f).
pub fn limit_bregman_loss(
    loss: &MarginLoss,
    y: f64,
    f: f64,
    anchor: &LimitAnchor,
) -> Result<LimitBregman> {
    if y != 1.0 && y != -1.0 {
        return Err(Error::InvalidInput(format!("label must be ±1 (got {y})")));
    }
    if !f.is_finite() {
        return Err(Error::InvalidInput(format!(
            "margin must be finite (got {f})"
        )));
    }
    if classify_gradient_symmetry(loss, Grid::default_probe(), loss.default_symmetry_tol())
        .is_none()
    {
        let (spread, _) = crate::loss::gradient_sum_stats(loss, Grid::default_probe());
        return Err(Error::NotGradientSymmetric {
            loss: loss.name().to_string(),
            operation: "the limit divergence representation",
            spread,
        });
    }
    let g_y = if y > 0.0 {
        anchor.g_plus
    } else {
        anchor.g_minus()
    };
    if g_y.is_finite() {
        return Ok(LimitBregman {
            value: divergence(loss, f, g_y)?,
            anchor: g_y,
            truncation_level: None,
            last_delta: None,
        });
    }
    // Gradient symmetry folds the label into the margin, B(f, y·g) =
    // B(y·f, g), so the anchor always sits on the positive side where the
    // tail stays cancellation-free.
    let sign = if g_y > 0.0 { 1.0 } else { -1.0 };
    let folded = y * f;
    let mut level = TRUNCATION_START;
    let mut previous: Option<f64> = None;
    let mut last_delta = f64::INFINITY;
    for _ in 0..=TRUNCATION_MAX_DOUBLINGS {
        let value = truncated_tail_divergence(loss, folded, level)?;
        if let Some(prev) = previous {
            last_delta = (value - prev).abs();
            if last_delta < TRUNCATION_DELTA {
                return Ok(LimitBregman {
                    value,
                    anchor: sign * level,
                    truncation_level: Some(level),
                    last_delta: Some(last_delta),
                });
            }
        }
        previous = Some(value);
        level *= 2.0;
    }
    Err(Error::TruncationNotConverged {
        level: level / 2.0,
        last_value: previous.unwrap_or(f64::NAN),
        last_delta,
    })
}

/// B(u, g) for a large positive anchor g, grouped as
/// l(u) - l'(g)·u - (l(g) - g·l'(g)).
///
/// The last bracket is a sum of two non-negative terms, so it keeps full
/// relative precision; the naive three-term Bregman form instead loses the
/// informative O(1/g) pieces into the ulp of g once g passes ~1e8, which
/// stalls the doubling loop below the slow 1/g tails.
fn truncated_tail_divergence(loss: &MarginLoss, u: f64, g: f64) -> Result<f64> {
    let grad = loss.grad(g);
    let intercept = loss.eval(g) - g * grad;
    let d = loss.eval(u) - grad * u - intercept;
    if !d.is_finite() {
        return Err(Error::NonFinite {
            context: format!("truncated divergence over {}", loss.name()),
            input: u,
        });
    }
    Ok(d.max(0.0))
}
