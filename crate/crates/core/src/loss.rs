//! Margin-loss catalogue: built-in losses, tabulated user losses, and
//! gradient-structure classification.
//!
//! A margin loss is a non-negative, strictly convex, differentiable function
//! of the functional margin v = y·f. The built-ins carry closed-form values
//! and gradients in cancellation-free arrangements so they stay accurate for
//! |v| far beyond the probe range (the truncated-anchor machinery in
//! [`crate::bregman`] evaluates them at v ~ 1e9).
//!
//! The central structural property here is *gradient symmetry*: whether
//! l'(v) + l'(-v) is a constant c over the reals. It is equivalent to each of
//! - a label-flip symmetric Bregman divergence, B(u, v) = B(-u, -v);
//! - an odd part that is exactly linear, l(v) = l_even(v) + (c/2)·v;
//! - a variance/ambiguity term that does not depend on the label.
//! Classification is numeric (spread of the gradient sum over a probe grid),
//! so it also covers tabulated losses where no closed form exists.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numeric::{sigmoid, softplus};
use crate::tolerances::{
    PROBE_HALF_WIDTH, PROBE_POINTS, SYMMETRY_TOL_ANALYTIC, SYMMETRY_TOL_TABULATED,
};

// ─────────────────────────────────────────────────────────────────────────────
// Probe grids
// ─────────────────────────────────────────────────────────────────────────────

/// Uniform evaluation grid on [lo, hi].
#[derive(Clone, Copy, Debug)]
pub struct Grid {
    lo: f64,
    hi: f64,
    points: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Grid> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!(
                "grid bounds must be finite with lo < hi (got [{lo}, {hi}])"
            )));
        }
        if points < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 points (got {points})"
            )));
        }
        Ok(Grid { lo, hi, points })
    }

    /// Symmetric grid on [-half_width, half_width].
    pub fn symmetric(half_width: f64, points: usize) -> Result<Grid> {
        Grid::new(-half_width, half_width, points)
    }

    /// Default probe grid: 1001 points on [-10, 10].
    pub fn default_probe() -> Grid {
        Grid {
            lo: -PROBE_HALF_WIDTH,
            hi: PROBE_HALF_WIDTH,
            points: PROBE_POINTS,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        let (lo, n) = (self.lo, self.points);
        (0..n).map(move |k| {
            if k == n - 1 {
                self.hi
            } else {
                lo + k as f64 * step
            }
        })
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Catalogue
// ─────────────────────────────────────────────────────────────────────────────

/// A margin loss: the built-in catalogue plus tabulated user losses.
#[derive(Clone, Debug)]
pub enum MarginLoss {
    /// (1 - v)^2; finite minimizer at v = 1.
    Squared,
    /// ln(1 + e^-v).
    Logistic,
    /// sqrt(v^2 + 4)/2 - v/2. Its tail decays like 1/v, not exponentially.
    CanonicalBoosting,
    /// (e^-|v| + |v| - v)/2; gradient has a kink at v = 0 (still C^1-away
    /// checks apply; the second derivative is continuous, the third is not).
    Laplacian,
    /// e^-v. Not gradient-symmetric.
    Exponential,
    /// Smoothed hinge ln(1 + e^{-t(v-1)})/t with sharpness t > 0.
    /// Not gradient-symmetric.
    SmoothHinge { t: f64 },
    /// Monotone-cubic interpolant of user-supplied (v, l(v)) samples.
    Tabulated(TabulatedLoss),
}

/// Construct a catalogue loss by name with optional parameters.
///
/// Recognized names: `squared`, `logistic`, `canonical_boosting`,
/// `laplacian`, `exponential`, `smooth_hinge` (parameter `t`, default 10).
pub fn builtin_loss(name: &str, params: &BTreeMap<String, f64>) -> Result<MarginLoss> {
    let reject_params = |loss: &str| -> Result<()> {
        if let Some(key) = params.keys().next() {
            return Err(Error::InvalidParameter {
                loss: loss.to_string(),
                name: key.clone(),
                reason: "this loss takes no parameters".to_string(),
            });
        }
        Ok(())
    };
    match name {
        "squared" => {
            reject_params(name)?;
            Ok(MarginLoss::Squared)
        }
        "logistic" => {
            reject_params(name)?;
            Ok(MarginLoss::Logistic)
        }
        "canonical_boosting" => {
            reject_params(name)?;
            Ok(MarginLoss::CanonicalBoosting)
        }
        "laplacian" => {
            reject_params(name)?;
            Ok(MarginLoss::Laplacian)
        }
        "exponential" => {
            reject_params(name)?;
            Ok(MarginLoss::Exponential)
        }
        "smooth_hinge" => {
            let mut t = 10.0;
            for (key, value) in params {
                match key.as_str() {
                    "t" => t = *value,
                    other => {
                        return Err(Error::InvalidParameter {
                            loss: name.to_string(),
                            name: other.to_string(),
                            reason: "unknown parameter (expected `t`)".to_string(),
                        })
                    }
                }
            }
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidParameter {
                    loss: name.to_string(),
                    name: "t".to_string(),
                    reason: format!("sharpness must be finite and positive (got {t})"),
                });
            }
            Ok(MarginLoss::SmoothHinge { t })
        }
        other => Err(Error::UnknownLoss(other.to_string())),
    }
}

impl MarginLoss {
    /// Parse the CLI syntax `name[:param=value[,param=value...]]`.
    pub fn from_spec(spec: &str) -> Result<MarginLoss> {
        let (name, rest) = match spec.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (spec, None),
        };
        let mut params = BTreeMap::new();
        if let Some(rest) = rest {
            for pair in rest.split(',') {
                let (key, value) = pair.split_once('=').ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "malformed loss parameter '{pair}' (expected key=value)"
                    ))
                })?;
                let value: f64 = value.parse().map_err(|_| Error::InvalidParameter {
                    loss: name.to_string(),
                    name: key.to_string(),
                    reason: format!("'{value}' is not a number"),
                })?;
                params.insert(key.to_string(), value);
            }
        }
        builtin_loss(name, &params)
    }

    pub fn name(&self) -> &str {
        match self {
            MarginLoss::Squared => "squared",
            MarginLoss::Logistic => "logistic",
            MarginLoss::CanonicalBoosting => "canonical_boosting",
            MarginLoss::Laplacian => "laplacian",
            MarginLoss::Exponential => "exponential",
            MarginLoss::SmoothHinge { .. } => "smooth_hinge",
            MarginLoss::Tabulated(t) => &t.name,
        }
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        let mut map = BTreeMap::new();
        if let MarginLoss::SmoothHinge { t } = self {
            map.insert("t".to_string(), *t);
        }
        map
    }

    /// Loss value at margin v.
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            MarginLoss::Squared => (1.0 - v) * (1.0 - v),
            MarginLoss::Logistic => softplus(-v),
            MarginLoss::CanonicalBoosting => {
                let hyp = (v * v + 4.0).sqrt();
                if v >= 0.0 {
                    // Equal to (hyp - v)/2 but free of cancellation for large v.
                    2.0 / (hyp + v)
                } else {
                    0.5 * hyp - 0.5 * v
                }
            }
            MarginLoss::Laplacian => {
                if v >= 0.0 {
                    0.5 * (-v).exp()
                } else {
                    0.5 * v.exp() - v
                }
            }
            MarginLoss::Exponential => (-v).exp(),
            MarginLoss::SmoothHinge { t } => softplus(-t * (v - 1.0)) / t,
            MarginLoss::Tabulated(t) => t.eval(v),
        }
    }

    /// Loss derivative at margin v.
    pub fn grad(&self, v: f64) -> f64 {
        match self {
            MarginLoss::Squared => 2.0 * (v - 1.0),
            MarginLoss::Logistic => -sigmoid(-v),
            MarginLoss::CanonicalBoosting => {
                let hyp = (v * v + 4.0).sqrt();
                if v >= 0.0 {
                    // v/(2 hyp) - 1/2 rearranged to avoid cancellation.
                    -2.0 / (hyp * (hyp + v))
                } else {
                    -(hyp - v) / (2.0 * hyp)
                }
            }
            MarginLoss::Laplacian => {
                if v >= 0.0 {
                    -0.5 * (-v).exp()
                } else {
                    0.5 * v.exp() - 1.0
                }
            }
            MarginLoss::Exponential => -(-v).exp(),
            MarginLoss::SmoothHinge { t } => -sigmoid(-t * (v - 1.0)),
            MarginLoss::Tabulated(t) => t.grad(v),
        }
    }

    /// Even part of the loss, l_e(v) = (l(v) + l(-v)) / 2.
    pub fn even_part(&self, v: f64) -> f64 {
        0.5 * (self.eval(v) + self.eval(-v))
    }

    /// Odd part of the loss, l_o(v) = (l(v) - l(-v)) / 2.
    pub fn odd_part(&self, v: f64) -> f64 {
        0.5 * (self.eval(v) - self.eval(-v))
    }

    /// Whether the gradient is exact (closed form) rather than interpolated.
    pub fn grad_is_analytic(&self) -> bool {
        !matches!(self, MarginLoss::Tabulated(_))
    }

    /// Catalogue knowledge of the gradient-sum constant, used as a test
    /// oracle against the numeric classification.
    pub fn known_symmetry_constant(&self) -> Option<f64> {
        match self {
            MarginLoss::Squared => Some(-4.0),
            MarginLoss::Logistic | MarginLoss::CanonicalBoosting | MarginLoss::Laplacian => {
                Some(-1.0)
            }
            _ => None,
        }
    }

    /// Closed-form link (probability -> margin minimizing pointwise risk)
    /// where the catalogue provides one.
    pub fn known_link(&self, p: f64) -> Option<f64> {
        match self {
            MarginLoss::Squared => Some(2.0 * p - 1.0),
            MarginLoss::Logistic => Some(crate::numeric::logit(p)),
            MarginLoss::Exponential => Some(0.5 * crate::numeric::logit(p)),
            _ => None,
        }
    }

    /// Closed-form negative minimum risk -L(p) where the catalogue provides
    /// one. Serves as a test oracle for the numeric minimum-risk route.
    pub fn known_neg_min_risk(&self, p: f64) -> Option<f64> {
        match self {
            MarginLoss::Squared => Some(-4.0 * p * (1.0 - p)),
            MarginLoss::Logistic => {
                let mut s = 0.0;
                if p > 0.0 {
                    s += p * p.ln();
                }
                if p < 1.0 {
                    s += (1.0 - p) * (1.0 - p).ln();
                }
                Some(s)
            }
            MarginLoss::CanonicalBoosting => Some(-2.0 * (p * (1.0 - p)).sqrt()),
            MarginLoss::Laplacian => {
                let m = (2.0 * p - 1.0).abs();
                if m < 1.0 {
                    Some(-0.5 * (1.0 - m) * (1.0 - (1.0 - m).ln()))
                } else {
                    Some(0.0)
                }
            }
            _ => None,
        }
    }

    /// Closed-form convex conjugate of the negative minimum risk, where the
    /// catalogue provides one. Equals l(v/c) for the gradient-symmetric rows.
    pub fn known_conjugate(&self, v: f64) -> Option<f64> {
        match self {
            MarginLoss::Squared => Some((1.0 + 0.25 * v) * (1.0 + 0.25 * v)),
            MarginLoss::Logistic => Some(softplus(v)),
            MarginLoss::CanonicalBoosting => Some(self.eval(-v)),
            MarginLoss::Laplacian => Some(self.eval(-v)),
            _ => None,
        }
    }

    /// Infimum of the loss over the extended reals (0 for the catalogue).
    pub fn global_inf(&self) -> f64 {
        match self {
            MarginLoss::Tabulated(t) => t
                .knots
                .iter()
                .map(|&(_, y)| y)
                .fold(f64::INFINITY, f64::min),
            _ => 0.0,
        }
    }

    /// Default spread tolerance for gradient-symmetry classification.
    pub fn default_symmetry_tol(&self) -> f64 {
        if self.grad_is_analytic() {
            SYMMETRY_TOL_ANALYTIC
        } else {
            SYMMETRY_TOL_TABULATED
        }
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Gradient-symmetry classification and even/odd structure
// ─────────────────────────────────────────────────────────────────────────────

/// Spread (max - min) and mean of the gradient sum l'(v) + l'(-v) over the
/// grid.
pub fn gradient_sum_stats(loss: &MarginLoss, grid: Grid) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for v in grid.iter() {
        let s = loss.grad(v) + loss.grad(-v);
        min = min.min(s);
        max = max.max(s);
        sum += s;
    }
    (max - min, sum / grid.points() as f64)
}

/// Classify gradient symmetry: returns the constant c when the gradient sum
/// is constant over the grid within `tol`, None otherwise.
pub fn classify_gradient_symmetry(loss: &MarginLoss, grid: Grid, tol: f64) -> Option<f64> {
    let (spread, mean) = gradient_sum_stats(loss, grid);
    if spread <= tol {
        Some(mean)
    } else {
        None
    }
}

/// Even/odd decomposition of a loss, with detection of a linear odd part.
///
/// The split l = l_e + l_o always exists; `odd_slope` is present when the odd
/// part is the line b·v within `tol` over the grid, with b estimated as
/// l_o(1). Gradient-symmetric losses have b = c/2.
pub struct EvenOddSplit<'a> {
    loss: &'a MarginLoss,
    /// Slope b when the odd part is linear.
    pub odd_slope: Option<f64>,
    /// Largest |l_o(v) - b·v| seen on the grid.
    pub max_deviation: f64,
}

impl<'a> EvenOddSplit<'a> {
    pub fn even(&self, v: f64) -> f64 {
        self.loss.even_part(v)
    }

    pub fn odd(&self, v: f64) -> f64 {
        self.loss.odd_part(v)
    }
}

pub fn even_odd_split<'a>(loss: &'a MarginLoss, grid: Grid, tol: f64) -> EvenOddSplit<'a> {
    let b = loss.odd_part(1.0);
    let mut max_deviation: f64 = 0.0;
    for v in grid.iter() {
        max_deviation = max_deviation.max((loss.odd_part(v) - b * v).abs());
    }
    EvenOddSplit {
        loss,
        odd_slope: if max_deviation <= tol { Some(b) } else { None },
        max_deviation,
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Tabulated losses
// ─────────────────────────────────────────────────────────────────────────────

/// User-supplied loss given as samples (v_k, l(v_k)), interpolated with a
/// monotone (Fritsch-Carlson) cubic so the interpolant cannot overshoot the
/// data. Gradients come from central finite differences of the interpolant
/// and are flagged non-analytic, which widens classification tolerances.
///
/// Outside the table the loss continues linearly on the left with the first
/// secant slope and stays constant on the right; both extensions keep the
/// piecewise slopes non-decreasing, matching the decreasing-then-flat shape
/// of a margin loss.
#[derive(Clone, Debug)]
pub struct TabulatedLoss {
    name: String,
    knots: Vec<(f64, f64)>,
    /// Fritsch-Carlson endpoint-adjusted slopes, one per knot.
    slopes: Vec<f64>,
}

impl TabulatedLoss {
    /// Validates and builds the interpolant. The samples must have strictly
    /// increasing margins, non-negative values, strictly increasing secant
    /// slopes (strict convexity of the data), and a decreasing start.
    pub fn new(name: impl Into<String>, mut samples: Vec<(f64, f64)>) -> Result<TabulatedLoss> {
        let name = name.into();
        if samples.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "tabulated loss '{name}' needs at least 4 samples (got {})",
                samples.len()
            )));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        for window in samples.windows(2) {
            if !(window[1].0 > window[0].0) {
                return Err(Error::InvalidInput(format!(
                    "tabulated loss '{name}': duplicate margin {v}",
                    v = window[0].0
                )));
            }
        }
        if let Some(&(v, y)) = samples
            .iter()
            .find(|&&(v, y)| !v.is_finite() || !y.is_finite() || y < 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "tabulated loss '{name}': sample ({v}, {y}) is not a finite non-negative pair"
            )));
        }
        let secants: Vec<f64> = samples
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect();
        if secants.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "tabulated loss '{name}' is not strictly convex (secant slopes must increase)"
            )));
        }
        if secants[0] >= 0.0 {
            return Err(Error::InvalidInput(format!(
                "tabulated loss '{name}' must decrease at the left edge of the table"
            )));
        }

        // Fritsch-Carlson slopes. Data is strictly convex so consecutive
        // secants never repeat; slope 0 where the sign changes keeps the
        // interpolant monotone on each side of the minimum.
        let n = samples.len();
        let h: Vec<f64> = samples.windows(2).map(|w| w[1].0 - w[0].0).collect();
        let mut slopes = vec![0.0; n];
        for i in 1..n - 1 {
            let (d0, d1) = (secants[i - 1], secants[i]);
            if d0 * d1 <= 0.0 {
                slopes[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                slopes[i] = (w1 + w2) / (w1 / d0 + w2 / d1);
            }
        }
        let one_sided = |d0: f64, d1: f64, h0: f64, h1: f64| -> f64 {
            let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
            if m * d0 <= 0.0 {
                0.0
            } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
                3.0 * d0
            } else {
                m
            }
        };
        slopes[0] = one_sided(secants[0], secants[1], h[0], h[1]);
        slopes[n - 1] = one_sided(secants[n - 2], secants[n - 3], h[n - 2], h[n - 3]);

        Ok(TabulatedLoss {
            name,
            knots: samples,
            slopes,
        })
    }

    /// Sampled margin range [first, last].
    pub fn range(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    fn eval(&self, v: f64) -> f64 {
        let (lo, hi) = self.range();
        if v <= lo {
            let d0 = (self.knots[1].1 - self.knots[0].1) / (self.knots[1].0 - self.knots[0].0);
            return self.knots[0].1 + d0 * (v - lo);
        }
        if v >= hi {
            return self.knots[self.knots.len() - 1].1;
        }
        let seg = match self.knots.binary_search_by(|&(x, _)| x.total_cmp(&v)) {
            Ok(k) => return self.knots[k].1,
            Err(k) => k - 1,
        };
        let (x0, y0) = self.knots[seg];
        let (x1, y1) = self.knots[seg + 1];
        let h = x1 - x0;
        let t = (v - x0) / h;
        let (m0, m1) = (self.slopes[seg], self.slopes[seg + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
    }

    fn grad(&self, v: f64) -> f64 {
        // Central finite difference of the interpolant; the step shrinks near
        // the table so both sample points stay in well-defined territory.
        let h = 1e-5 * v.abs().max(1.0);
        (self.eval(v + h) - self.eval(v - h)) / (2.0 * h)
    }
}
