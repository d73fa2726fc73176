//! Pointwise risk, the optimal-margin link, and the negative minimum risk
//! as a convex generator over probabilities.
//!
//! For a loss l and class-conditional probability p the pointwise risk is
//! L(p, v) = p·l(v) + (1-p)·l(-v). Its minimizer v = psi(p) is the link; the
//! map p -> -min_v L(p, v) is convex and generates the Bregman divergence
//! that measures excess risk: L(p, psi(q)) - L(p, psi(p)) = B(p, q).

use crate::bregman::BregmanGenerator;
use crate::error::{Error, Result};
use crate::loss::{classify_gradient_symmetry, Grid, MarginLoss};
use crate::numeric;
use crate::tolerances::{
    BISECT_MAX_ITERS, BISECT_XTOL, CLIP_Q, LINK_BRACKET, MIN_RISK_FD_STEP, P_GRID_HI, P_GRID_LO,
    P_GRID_POINTS,
};

/// L(p, v) = p·l(v) + (1-p)·l(-v).
pub fn pointwise_risk(loss: &MarginLoss, p: f64, v: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    if !v.is_finite() {
        return Err(Error::InvalidInput(format!("margin {v} must be finite")));
    }
    Ok(risk_unchecked(loss, p, v))
}

#[inline]
fn risk_unchecked(loss: &MarginLoss, p: f64, v: f64) -> f64 {
    p * loss.eval(v) + (1.0 - p) * loss.eval(-v)
}

/// Result of mapping a margin back to its implied probability.
#[derive(Clone, Copy, Debug)]
pub struct InverseLink {
    /// The dual coordinate q with psi(q) = f. For every loss except the
    /// squared one this is a probability; the squared loss's risk curvature
    /// extends beyond the unit interval and q = (1 + f)/2 follows it, so the
    /// excess-risk identity stays exact for margins outside (-1, 1).
    pub q: f64,
    /// Whether q was pulled back inside the open unit interval.
    pub clamped: bool,
}

/// A margin loss together with its link apparatus.
///
/// Construction probes the loss once: the inverse-link denominator
/// l'(f) + l'(-f) must stay strictly negative over the probe grid (this is
/// what makes the implied probability well defined) and the link itself must
/// be strictly increasing over a coarse probability grid. The
/// gradient-symmetry classification is cached for the closed dual maps.
#[derive(Clone, Debug)]
pub struct LinkBundle {
    loss: MarginLoss,
    symmetry_constant: Option<f64>,
}

impl LinkBundle {
    pub fn new(loss: MarginLoss) -> Result<LinkBundle> {
        let probe = Grid::default_probe();
        for f in probe.iter() {
            let denom = loss.grad(f) + loss.grad(-f);
            if !denom.is_finite() || denom >= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "loss {} is not strictly decreasing-convex near {f}: \
                     l'(f) + l'(-f) = {denom:.3e} must be negative",
                    loss.name()
                )));
            }
        }
        let symmetry_constant =
            classify_gradient_symmetry(&loss, probe, loss.default_symmetry_tol());
        let bundle = LinkBundle {
            loss,
            symmetry_constant,
        };
        let mut previous = f64::NEG_INFINITY;
        for k in 1..10 {
            let v = bundle.link(0.1 * k as f64)?;
            if v <= previous {
                return Err(Error::InvalidInput(format!(
                    "link of {} is not strictly increasing at p = {}",
                    bundle.loss.name(),
                    0.1 * k as f64
                )));
            }
            previous = v;
        }
        Ok(bundle)
    }

    pub fn loss(&self) -> &MarginLoss {
        &self.loss
    }

    /// Constant c with l'(v) + l'(-v) = c, when the loss has one.
    pub fn symmetry_constant(&self) -> Option<f64> {
        self.symmetry_constant
    }

    pub fn is_gradient_symmetric(&self) -> bool {
        self.symmetry_constant.is_some()
    }

    /// The open interval the link maps (0, 1) onto, when it is not all reals.
    pub fn link_range(&self) -> Option<(f64, f64)> {
        match self.loss {
            MarginLoss::Squared => Some((-1.0, 1.0)),
            _ => None,
        }
    }

    /// psi(p): the risk-minimizing margin.
    ///
    /// Closed for the squared, logistic, and exponential losses; otherwise
    /// the stationarity condition p·l'(v) = (1-p)·l'(-v) is bisected, with
    /// the bracket grown geometrically from ±50 when needed. Boundary
    /// probabilities are rejected for every loss but the squared one, whose
    /// link extends continuously to ±1.
    pub fn link(&self, p: f64) -> Result<f64> {
        if !p.is_finite() {
            return Err(Error::InvalidInput(format!(
                "probability {p} must be finite"
            )));
        }
        // the squared link 2p - 1 is affine and extends over the reals along
        // with its quadratic generator; every other link needs (0, 1)
        if !(0.0..=1.0).contains(&p) && !matches!(self.loss, MarginLoss::Squared) {
            return Err(Error::InvalidInput(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        if (p == 0.0 || p == 1.0) && !matches!(self.loss, MarginLoss::Squared) {
            return Err(Error::LinkDomain(format!(
                "link of {} diverges at p = {p}",
                self.loss.name()
            )));
        }
        if let Some(v) = self.loss.known_link(p) {
            return Ok(v);
        }
        let stationarity = |v: f64| p * self.loss.grad(v) - (1.0 - p) * self.loss.grad(-v);
        let (mut lo, mut hi) = (-LINK_BRACKET, LINK_BRACKET);
        for _ in 0..40 {
            if stationarity(lo) <= 0.0 {
                break;
            }
            lo *= 2.0;
        }
        for _ in 0..40 {
            if stationarity(hi) >= 0.0 {
                break;
            }
            hi *= 2.0;
        }
        numeric::bisect_increasing(
            stationarity,
            lo,
            hi,
            BISECT_XTOL,
            BISECT_MAX_ITERS,
            &format!("link of {}", self.loss.name()),
        )
    }

    /// The dual coordinate of a margin, q = l'(-f) / (l'(f) + l'(-f)).
    ///
    /// This closed form inverts the link exactly on its range and extends it
    /// outside (where the margin overshoots every minimizer). Results are
    /// clamped just inside (0, 1) for losses whose generator lives there.
    pub fn inverse_link(&self, f: f64) -> Result<InverseLink> {
        if !f.is_finite() {
            return Err(Error::InvalidInput(format!("margin {f} must be finite")));
        }
        let denom = self.loss.grad(f) + self.loss.grad(-f);
        if !denom.is_finite() || denom >= 0.0 {
            return Err(Error::Numeric {
                context: format!("inverse link of {}", self.loss.name()),
                detail: format!("denominator l'(f) + l'(-f) = {denom:.3e} at f = {f}"),
            });
        }
        let q = self.loss.grad(-f) / denom;
        if matches!(self.loss, MarginLoss::Squared) {
            return Ok(InverseLink { q, clamped: false });
        }
        let clipped = q.clamp(CLIP_Q, 1.0 - CLIP_Q);
        Ok(InverseLink {
            q: clipped,
            clamped: clipped != q,
        })
    }

    /// Minimum pointwise risk L(p) = L(p, psi(p)). Boundary probabilities
    /// short-circuit to the global infimum of the loss.
    pub fn min_risk(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        if p == 0.0 || p == 1.0 {
            return Ok(self.loss.global_inf());
        }
        Ok(risk_unchecked(&self.loss, p, self.link(p)?))
    }

    /// d/dp of -L(p) by the envelope theorem: the minimizer is stationary,
    /// so only the explicit p-dependence differentiates and
    /// -L'(p) = l(-psi(p)) - l(psi(p)).
    pub fn neg_min_risk_grad(&self, p: f64) -> Result<f64> {
        if matches!(self.loss, MarginLoss::Squared) {
            if !p.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "probability {p} must be finite"
                )));
            }
            return Ok(8.0 * p - 4.0);
        }
        if !(0.0 < p && p < 1.0) {
            return Err(Error::LinkDomain(format!(
                "d(-L)/dp of {} needs p strictly inside (0, 1), got {p}",
                self.loss.name()
            )));
        }
        Ok(self.neg_min_risk_grad_at_margin(self.link(p)?))
    }

    /// -L'(q) evaluated at q = inverse_link(f) without computing q: the
    /// envelope expression collapses to l(-f) - l(f).
    pub fn neg_min_risk_grad_at_margin(&self, f: f64) -> f64 {
        self.loss.eval(-f) - self.loss.eval(f)
    }

    /// Inverse of p -> -L'(p).
    ///
    /// Gradient-symmetric losses satisfy -L'(p) = -c·psi(p), so the inverse
    /// is the inverse link at margin -x/c (closed). Otherwise -L' is bisected
    /// directly; it is increasing because -L is convex.
    pub fn neg_min_risk_grad_inv(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!(
                "dual coordinate {x} must be finite"
            )));
        }
        if let Some(c) = self.symmetry_constant {
            return Ok(self.inverse_link(-x / c)?.q);
        }
        // Bisect in margin space: g(v) = l(-v) - l(v) climbs with O(1) slope
        // everywhere, while -L'(q) saturates so steeply near the clamp
        // boundary that a q-space bisection leaves first-order error in the
        // identities downstream. The margin root maps back through the exact
        // inverse-link formula.
        let (lo, hi) = (-LINK_BRACKET, LINK_BRACKET);
        if self.neg_min_risk_grad_at_margin(lo) >= x {
            return Ok(self.inverse_link(lo)?.q);
        }
        if self.neg_min_risk_grad_at_margin(hi) <= x {
            return Ok(self.inverse_link(hi)?.q);
        }
        let v_star = numeric::bisect_increasing(
            |v| self.neg_min_risk_grad_at_margin(v) - x,
            lo,
            hi,
            BISECT_XTOL,
            BISECT_MAX_ITERS,
            &format!("dual mean of {}", self.loss.name()),
        )?;
        Ok(self.inverse_link(v_star)?.q)
    }

    /// The negative minimum risk as a Bregman generator.
    pub fn generator(&self) -> NegMinRisk<'_> {
        NegMinRisk { bundle: self }
    }
}

/// phi(p) = -L(p), the convex generator of the excess-risk divergence.
///
/// For the squared loss this is the quadratic 4p² - 4p, whose natural domain
/// is all reals; restricting it to the unit interval would truncate the
/// conjugate and the dual maps for margins outside (-1, 1). Everything else
/// lives on (0, 1) with finite boundary values.
pub struct NegMinRisk<'a> {
    bundle: &'a LinkBundle,
}

impl BregmanGenerator for NegMinRisk<'_> {
    fn phi(&self, u: f64) -> f64 {
        if matches!(self.bundle.loss, MarginLoss::Squared) {
            return 4.0 * u * u - 4.0 * u;
        }
        self.bundle.min_risk(u).map(|m| -m).unwrap_or(f64::NAN)
    }

    fn phi_grad(&self, u: f64) -> f64 {
        self.bundle.neg_min_risk_grad(u).unwrap_or(f64::NAN)
    }

    fn domain(&self) -> (f64, f64) {
        if matches!(self.bundle.loss, MarginLoss::Squared) {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (0.0, 1.0)
        }
    }

    fn label(&self) -> String {
        format!("neg-min-risk[{}]", self.bundle.loss.name())
    }
}

/// Outcome of probing whether -L' is a constant multiple of the link.
#[derive(Clone, Copy, Debug)]
pub struct CanonicalScalingCheck {
    /// True when the ratio is constant and matches the gradient-sum constant.
    pub canonical: bool,
    /// Mean observed ratio -L'(p) / psi(p).
    pub scale: f64,
    /// Largest relative deviation of the ratio from its mean.
    pub max_deviation: f64,
    /// -c from the cached classification, when the loss has a constant c.
    pub expected_scale: Option<f64>,
}

/// Finite-difference check that -L'(p) = -c·psi(p).
///
/// -L is differenced centrally with step 1e-6 over the probability grid and
/// divided by the link; points with |psi| < 1e-3 are skipped (the ratio is
/// 0/0 at p = 1/2). This route is deliberately independent of the envelope
/// expression used elsewhere, so the two confirm each other.
pub fn canonical_scaling_check(bundle: &LinkBundle, tol: f64) -> Result<CanonicalScalingCheck> {
    let h = MIN_RISK_FD_STEP;
    let step = (P_GRID_HI - P_GRID_LO) / (P_GRID_POINTS - 1) as f64;
    let mut ratios = Vec::new();
    for k in 0..P_GRID_POINTS {
        let p = P_GRID_LO + k as f64 * step;
        let psi = bundle.link(p)?;
        if psi.abs() < 1e-3 {
            continue;
        }
        let fd = -(bundle.min_risk(p + h)? - bundle.min_risk(p - h)?) / (2.0 * h);
        ratios.push(fd / psi);
    }
    let scale = numeric::mean(ratios.iter().copied());
    let max_deviation = ratios
        .iter()
        .map(|r| (r - scale).abs() / scale.abs().max(1.0))
        .fold(0.0, f64::max);
    let expected_scale = bundle.symmetry_constant().map(|c| -c);
    let matches_expected = match expected_scale {
        Some(e) => (scale - e).abs() <= tol * e.abs().max(1.0),
        None => false,
    };
    Ok(CanonicalScalingCheck {
        canonical: max_deviation <= tol && matches_expected,
        scale,
        max_deviation,
        expected_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bregman::divergence;
    use crate::tolerances::CANONICAL_SCALING_TOL;

    fn coarse_probabilities() -> Vec<f64> {
        (1..20).map(|k| 0.05 * k as f64).collect()
    }

    fn catalogue() -> Vec<MarginLoss> {
        vec![
            MarginLoss::Squared,
            MarginLoss::Logistic,
            MarginLoss::CanonicalBoosting,
            MarginLoss::Laplacian,
            MarginLoss::Exponential,
            MarginLoss::SmoothHinge { t: 10.0 },
        ]
    }

    #[test]
    fn pointwise_risk_frozen_value() {
        let risk = pointwise_risk(&MarginLoss::Logistic, 0.5, 2.0).unwrap();
        assert!((risk - 1.126_928_011_042_972_7).abs() < 1e-15);
    }

    #[test]
    fn closed_links_match_independent_bisection() {
        let bundle = LinkBundle::new(MarginLoss::Logistic).unwrap();
        let v = bundle.link(0.8).unwrap();
        assert!((v - 1.386_294_361_119_890_6).abs() < 1e-12); // ln 4

        // independent route: bisect the risk gradient directly
        let grad =
            |v: f64| 0.8 * MarginLoss::Logistic.grad(v) - 0.2 * MarginLoss::Logistic.grad(-v);
        let (mut lo, mut hi) = (-30.0, 30.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if grad(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((v - 0.5 * (lo + hi)).abs() < 1e-9);
    }

    #[test]
    fn bisected_links_match_closed_forms() {
        // canonical boosting: psi(p) = (2p - 1) / sqrt(p(1-p))
        let cb = LinkBundle::new(MarginLoss::CanonicalBoosting).unwrap();
        // laplacian: psi(p) = ln(2p) for p <= 1/2, -ln(2(1-p)) above
        let lap = LinkBundle::new(MarginLoss::Laplacian).unwrap();
        for p in coarse_probabilities() {
            let cb_closed = (2.0 * p - 1.0) / (p * (1.0 - p)).sqrt();
            assert!((cb.link(p).unwrap() - cb_closed).abs() < 1e-9, "cb p={p}");
            let lap_closed = if p <= 0.5 {
                (2.0 * p).ln()
            } else {
                -(2.0 * (1.0 - p)).ln()
            };
            assert!(
                (lap.link(p).unwrap() - lap_closed).abs() < 1e-9,
                "lap p={p}"
            );
        }
    }

    #[test]
    fn min_risk_matches_catalogue_closed_forms() {
        for loss in catalogue() {
            let Some(_) = loss.known_neg_min_risk(0.5) else {
                continue;
            };
            let bundle = LinkBundle::new(loss).unwrap();
            for p in coarse_probabilities() {
                let expected = -bundle.loss().known_neg_min_risk(p).unwrap();
                let got = bundle.min_risk(p).unwrap();
                assert!(
                    (got - expected).abs() < 1e-10,
                    "{} p={p}: {got} vs {expected}",
                    bundle.loss().name()
                );
            }
        }
        // frozen spot value: binary entropy at 0.8
        let bundle = LinkBundle::new(MarginLoss::Logistic).unwrap();
        assert!((bundle.min_risk(0.8).unwrap() - 0.500_402_423_538_187_87).abs() < 1e-15);
    }

    #[test]
    fn exponential_min_risk_has_closed_form() {
        // 2·sqrt(p(1-p)), shared with the canonical boosting loss
        let bundle = LinkBundle::new(MarginLoss::Exponential).unwrap();
        for p in coarse_probabilities() {
            let expected = 2.0 * (p * (1.0 - p)).sqrt();
            assert!(
                (bundle.min_risk(p).unwrap() - expected).abs() < 1e-12,
                "p={p}"
            );
        }
    }

    #[test]
    fn boundary_probabilities_use_global_infimum() {
        for loss in catalogue() {
            let bundle = LinkBundle::new(loss).unwrap();
            assert_eq!(bundle.min_risk(0.0).unwrap(), 0.0);
            assert_eq!(bundle.min_risk(1.0).unwrap(), 0.0);
        }
        let sq = LinkBundle::new(MarginLoss::Squared).unwrap();
        assert_eq!(sq.link(0.0).unwrap(), -1.0);
        assert_eq!(sq.link(1.0).unwrap(), 1.0);
        let log = LinkBundle::new(MarginLoss::Logistic).unwrap();
        assert!(matches!(log.link(0.0), Err(Error::LinkDomain(_))));
    }

    #[test]
    fn inverse_link_inverts_link() {
        for loss in catalogue() {
            let bundle = LinkBundle::new(loss).unwrap();
            for p in coarse_probabilities() {
                let f = bundle.link(p).unwrap();
                let inv = bundle.inverse_link(f).unwrap();
                assert!(
                    (inv.q - p).abs() < 1e-9,
                    "{} p={p} q={}",
                    bundle.loss().name(),
                    inv.q
                );
                assert!(!inv.clamped);
            }
        }
    }

    #[test]
    fn inverse_link_extends_beyond_squared_range() {
        let bundle = LinkBundle::new(MarginLoss::Squared).unwrap();
        let inv = bundle.inverse_link(3.0).unwrap();
        assert_eq!(inv.q, 2.0);
        assert!(!inv.clamped);
    }

    #[test]
    fn inverse_link_clamps_extreme_margins() {
        let bundle = LinkBundle::new(MarginLoss::Logistic).unwrap();
        let inv = bundle.inverse_link(30.0).unwrap();
        assert!(inv.clamped);
        assert_eq!(inv.q, 1.0 - CLIP_Q);
        let inv = bundle.inverse_link(1.0).unwrap();
        assert!(!inv.clamped);
        assert!((inv.q - 0.731_058_578_630_004_9).abs() < 1e-15); // sigmoid(1)
    }

    #[test]
    fn composite_identity_excess_risk_equals_divergence() {
        for loss in catalogue() {
            let bundle = LinkBundle::new(loss).unwrap();
            let gen = bundle.generator();
            for p in coarse_probabilities() {
                for q in coarse_probabilities() {
                    let lhs = risk_unchecked(bundle.loss(), p, bundle.link(q).unwrap())
                        - bundle.min_risk(p).unwrap();
                    let rhs = divergence(&gen, p, q).unwrap();
                    assert!(
                        (lhs - rhs).abs() < 1e-8,
                        "{} p={p} q={q}: {lhs} vs {rhs}",
                        bundle.loss().name()
                    );
                }
            }
        }
    }

    #[test]
    fn envelope_gradient_matches_finite_differences() {
        for loss in catalogue() {
            let bundle = LinkBundle::new(loss).unwrap();
            for p in coarse_probabilities() {
                let envelope = bundle.neg_min_risk_grad(p).unwrap();
                let h = 1e-6;
                let fd = -(bundle.min_risk(p + h).unwrap() - bundle.min_risk(p - h).unwrap())
                    / (2.0 * h);
                assert!(
                    (envelope - fd).abs() < 1e-5 * envelope.abs().max(1.0),
                    "{} p={p}: {envelope} vs {fd}",
                    bundle.loss().name()
                );
            }
        }
    }

    #[test]
    fn margin_shortcut_matches_envelope_at_inverse_link() {
        for loss in catalogue() {
            let bundle = LinkBundle::new(loss).unwrap();
            for f in [-3.0, -1.0, -0.2, 0.4, 1.5, 2.5] {
                let q = bundle.inverse_link(f).unwrap().q;
                let direct = bundle.neg_min_risk_grad(q).unwrap();
                let shortcut = bundle.neg_min_risk_grad_at_margin(f);
                assert!(
                    (direct - shortcut).abs() < 1e-8 * shortcut.abs().max(1.0),
                    "{} f={f}: {direct} vs {shortcut}",
                    bundle.loss().name()
                );
            }
        }
    }

    #[test]
    fn dual_gradient_round_trips() {
        for loss in catalogue() {
            let bundle = LinkBundle::new(loss).unwrap();
            for p in coarse_probabilities() {
                let x = bundle.neg_min_risk_grad(p).unwrap();
                let back = bundle.neg_min_risk_grad_inv(x).unwrap();
                assert!(
                    (back - p).abs() < 1e-9,
                    "{} p={p} back={back}",
                    bundle.loss().name()
                );
            }
        }
    }

    #[test]
    fn squared_dual_maps_extend_over_the_reals() {
        let bundle = LinkBundle::new(MarginLoss::Squared).unwrap();
        // -L'(q) at q = 2 is 8·2 - 4 = 12; inverting recovers 2
        assert_eq!(bundle.neg_min_risk_grad(2.0).unwrap(), 12.0);
        assert!((bundle.neg_min_risk_grad_inv(12.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn conjugate_of_generator_matches_catalogue() {
        for loss in catalogue() {
            let bundle = LinkBundle::new(loss).unwrap();
            if bundle.loss().known_conjugate(0.0).is_none() {
                continue;
            }
            let gen = bundle.generator();
            for v in [-8.0, -4.0, -1.0, 0.0, 1.0, 4.0, 8.0] {
                let got =
                    crate::bregman::conjugate(&gen, v, crate::bregman::conjugate_default_tol())
                        .unwrap();
                let expected = bundle.loss().known_conjugate(v).unwrap();
                assert!(
                    (got - expected).abs() < 1e-8,
                    "{} v={v}: {got} vs {expected}",
                    bundle.loss().name()
                );
            }
        }
        // frozen spot values
        let sq = LinkBundle::new(MarginLoss::Squared).unwrap();
        let conj0 = crate::bregman::conjugate(&sq.generator(), 0.0, 1e-10).unwrap();
        let conj4 = crate::bregman::conjugate(&sq.generator(), 4.0, 1e-10).unwrap();
        assert!((conj0 - 1.0).abs() < 1e-9);
        assert!((conj4 - 4.0).abs() < 1e-9);
        let lap = LinkBundle::new(MarginLoss::Laplacian).unwrap();
        let conj0 = crate::bregman::conjugate(&lap.generator(), 0.0, 1e-10).unwrap();
        assert!((conj0 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn canonical_scaling_holds_exactly_for_symmetric_losses() {
        for loss in catalogue() {
            let bundle = LinkBundle::new(loss.clone()).unwrap();
            let check = canonical_scaling_check(&bundle, CANONICAL_SCALING_TOL).unwrap();
            match loss.known_symmetry_constant() {
                Some(c) => {
                    assert!(check.canonical, "{}: {check:?}", loss.name());
                    assert!((check.scale + c).abs() < 1e-5, "{}: {check:?}", loss.name());
                }
                None => assert!(!check.canonical, "{}: {check:?}", loss.name()),
            }
        }
    }

    #[test]
    fn tabulated_loss_goes_through_the_generic_path() {
        let grid = Grid::symmetric(6.0, 61).unwrap();
        let knots: Vec<(f64, f64)> = grid
            .iter()
            .map(|v| (v, MarginLoss::Logistic.eval(v)))
            .collect();
        let table = crate::loss::TabulatedLoss::new("tab-logistic", knots).unwrap();
        let bundle = LinkBundle::new(MarginLoss::Tabulated(table)).unwrap();
        let v = bundle.link(0.8).unwrap();
        assert!((v - 1.386_294_361_119_890_6).abs() < 5e-3);
        let q = bundle.inverse_link(1.386_294_361_119_890_6).unwrap().q;
        assert!((q - 0.8).abs() < 5e-3);
        let risk = bundle.min_risk(0.8).unwrap();
        assert!((risk - 0.500_402_423_538_187_87).abs() < 1e-4);
    }
}
