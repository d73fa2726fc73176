//! Risk decompositions over a sample of trained models.
//!
//! Every function here takes an M-model by N-point matrix of margins and
//! splits the expected risk into named components plus an explicitly
//! reported residual. The identities are exact in exact arithmetic, so the
//! residual doubles as a numerical health check: anything above roundoff
//! scale means the inputs violated an assumption (for example a clamped
//! implied probability).

use std::collections::BTreeMap;

use serde::Serialize;

use crate::bregman::{divergence, BregmanGenerator};
use crate::error::{Error, Result};
use crate::link::LinkBundle;
use crate::loss::{even_odd_split, gradient_sum_stats, Grid, MarginLoss};

// ─────────────────────────────────────────────────────────────────────────────
// Inputs
// ─────────────────────────────────────────────────────────────────────────────

/// Margins of M models evaluated at N points, stored row-major by model,
/// with a convex weight per model (uniform unless given).
#[derive(Clone, Debug)]
pub struct MarginSampleMatrix {
    margins: Vec<f64>,
    models: usize,
    points: usize,
    weights: Vec<f64>,
}

impl MarginSampleMatrix {
    pub fn new(models: usize, points: usize, margins: Vec<f64>) -> Result<MarginSampleMatrix> {
        if models == 0 || points == 0 {
            return Err(Error::InvalidInput(
                "margin matrix needs at least one model and one point".to_string(),
            ));
        }
        if margins.len() != models * points {
            return Err(Error::InvalidInput(format!(
                "margin matrix {models}x{points} needs {} values, got {}",
                models * points,
                margins.len()
            )));
        }
        if let Some(bad) = margins.iter().find(|m| !m.is_finite()) {
            return Err(Error::NonFinite {
                context: "margin matrix".to_string(),
                input: *bad,
            });
        }
        let weights = vec![1.0 / models as f64; models];
        Ok(MarginSampleMatrix {
            margins,
            models,
            points,
            weights,
        })
    }

    /// Replace the uniform weights; they must be non-negative and sum to one
    /// within 1e-9 (and are re-normalized to remove that slack).
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<MarginSampleMatrix> {
        if weights.len() != self.models {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} models",
                weights.len(),
                self.models
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "model weights must be finite and non-negative".to_string(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "model weights sum to {sum}, expected 1"
            )));
        }
        self.weights = weights.into_iter().map(|w| w / sum).collect();
        Ok(self)
    }

    pub fn models(&self) -> usize {
        self.models
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn margin(&self, model: usize, point: usize) -> f64 {
        self.margins[model * self.points + point]
    }

    /// All margins of one model, in point order.
    pub fn model_row(&self, model: usize) -> &[f64] {
        &self.margins[model * self.points..(model + 1) * self.points]
    }

    /// Weighted mean margin at one point: the central model's output.
    pub fn central_margin(&self, point: usize) -> f64 {
        (0..self.models)
            .map(|i| self.weights[i] * self.margin(i, point))
            .sum()
    }

    /// Central margins at every point.
    pub fn central_margins(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.central_margin(j)).collect()
    }
}

/// Per-point targets: hard labels or class-conditional probabilities.
#[derive(Clone, Debug)]
pub enum Targets {
    Labels(Vec<f64>),
    Posteriors(Vec<f64>),
}

impl Targets {
    pub fn labels(values: Vec<f64>) -> Result<Targets> {
        if let Some(bad) = values.iter().find(|y| **y != 1.0 && **y != -1.0) {
            return Err(Error::InvalidInput(format!(
                "labels must be +1 or -1, got {bad}"
            )));
        }
        Ok(Targets::Labels(values))
    }

    pub fn posteriors(values: Vec<f64>) -> Result<Targets> {
        if let Some(bad) = values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidInput(format!(
                "posterior {bad} outside [0, 1]"
            )));
        }
        Ok(Targets::Posteriors(values))
    }

    pub fn len(&self) -> usize {
        match self {
            Targets::Labels(v) | Targets::Posteriors(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// E[y] at one point: the label itself, or 2p - 1.
    pub fn expect_y(&self, point: usize) -> f64 {
        match self {
            Targets::Labels(v) => v[point],
            Targets::Posteriors(v) => 2.0 * v[point] - 1.0,
        }
    }

    /// (P[y = +1], P[y = -1]) at one point.
    pub fn label_weights(&self, point: usize) -> (f64, f64) {
        match self {
            Targets::Labels(v) => {
                if v[point] > 0.0 {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            Targets::Posteriors(v) => (v[point], 1.0 - v[point]),
        }
    }

    pub fn posterior(&self, point: usize) -> Option<f64> {
        match self {
            Targets::Labels(_) => None,
            Targets::Posteriors(v) => Some(v[point]),
        }
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Reports
// ─────────────────────────────────────────────────────────────────────────────

/// One decomposition: the expected risk, its named components, and the
/// leftover the identity failed to account for.
#[derive(Clone, Debug, Serialize)]
pub struct DecompositionReport {
    pub id: String,
    pub expected_risk: f64,
    pub components: BTreeMap<String, f64>,
    /// expected_risk minus the component sum; roundoff-sized when healthy.
    pub residual: f64,
    pub diagnostics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_point: Option<Vec<PerPointRow>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerPointRow {
    pub point: usize,
    pub expected_risk: f64,
    pub components: BTreeMap<String, f64>,
}

impl DecompositionReport {
    fn assemble(
        id: &str,
        rows: Vec<PerPointRow>,
        diagnostics: BTreeMap<String, f64>,
        warnings: Vec<String>,
        keep_rows: bool,
    ) -> DecompositionReport {
        let n = rows.len() as f64;
        let expected_risk = rows.iter().map(|r| r.expected_risk).sum::<f64>() / n;
        let mut components: BTreeMap<String, f64> = BTreeMap::new();
        for row in &rows {
            for (key, value) in &row.components {
                *components.entry(key.clone()).or_insert(0.0) += value / n;
            }
        }
        let residual = expected_risk - components.values().sum::<f64>();
        DecompositionReport {
            id: id.to_string(),
            expected_risk,
            components,
            residual,
            diagnostics,
            warnings,
            per_point: keep_rows.then_some(rows),
        }
    }
}

fn check_shapes(samples: &MarginSampleMatrix, targets: &Targets) -> Result<()> {
    if samples.points() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} targets for {} points",
            targets.len(),
            samples.points()
        )));
    }
    Ok(())
}

pub(crate) fn require_gradient_symmetry(loss: &MarginLoss, operation: &'static str) -> Result<f64> {
    crate::loss::classify_gradient_symmetry(
        loss,
        Grid::default_probe(),
        loss.default_symmetry_tol(),
    )
    .ok_or_else(|| {
        let (spread, _) = gradient_sum_stats(loss, Grid::default_probe());
        Error::NotGradientSymmetric {
            loss: loss.name().to_string(),
            operation,
            spread,
        }
    })
}

// ─────────────────────────────────────────────────────────────────────────────
// Decompositions
// ─────────────────────────────────────────────────────────────────────────────

/// Split the expected risk around the central model:
/// E[l(y·f)] = E_y[l(y·fbar)] + E_y E[B_l(y·f, y·fbar)].
///
/// Valid for any convex loss; the variance term depends on the label
/// distribution unless the loss is gradient-symmetric.
pub fn margin_variance_decomposition(
    loss: &MarginLoss,
    samples: &MarginSampleMatrix,
    targets: &Targets,
    per_point: bool,
) -> Result<DecompositionReport> {
    check_shapes(samples, targets)?;
    let mut rows = Vec::with_capacity(samples.points());
    for j in 0..samples.points() {
        let fbar = samples.central_margin(j);
        let (w_pos, w_neg) = targets.label_weights(j);
        let mut expected = 0.0;
        let mut central = 0.0;
        let mut variance = 0.0;
        for (y, w) in [(1.0, w_pos), (-1.0, w_neg)] {
            if w == 0.0 {
                continue;
            }
            central += w * loss.eval(y * fbar);
            for i in 0..samples.models() {
                let f = samples.margin(i, j);
                expected += w * samples.weights()[i] * loss.eval(y * f);
                variance += w * samples.weights()[i] * divergence(loss, y * f, y * fbar)?;
            }
        }
        let mut components = BTreeMap::new();
        components.insert("central_loss".to_string(), central);
        components.insert("margin_variance".to_string(), variance);
        rows.push(PerPointRow {
            point: j,
            expected_risk: expected,
            components,
        });
    }
    Ok(DecompositionReport::assemble(
        "margin_variance",
        rows,
        BTreeMap::new(),
        Vec::new(),
        per_point,
    ))
}

/// Label-free variant for gradient-symmetric losses:
/// E[l(y·f)] = E_y[l(y·fbar)] + E[B_l(f, fbar)].
///
/// The variance term drops the label entirely, so it can be measured
/// without ground truth. Refused for losses without the symmetry; the
/// label-dependent route is still computed and reported as a diagnostic so
/// the two can be compared.
pub fn bias_variance_decomposition(
    loss: &MarginLoss,
    samples: &MarginSampleMatrix,
    targets: &Targets,
    per_point: bool,
) -> Result<DecompositionReport> {
    check_shapes(samples, targets)?;
    let constant = require_gradient_symmetry(loss, "the label-free variance decomposition")?;
    let labelful = margin_variance_decomposition(loss, samples, targets, false)?;
    let mut rows = Vec::with_capacity(samples.points());
    for j in 0..samples.points() {
        let fbar = samples.central_margin(j);
        let (w_pos, w_neg) = targets.label_weights(j);
        let mut expected = 0.0;
        let mut central = 0.0;
        let mut variance = 0.0;
        for (y, w) in [(1.0, w_pos), (-1.0, w_neg)] {
            if w == 0.0 {
                continue;
            }
            central += w * loss.eval(y * fbar);
            for i in 0..samples.models() {
                expected += w * samples.weights()[i] * loss.eval(y * samples.margin(i, j));
            }
        }
        for i in 0..samples.models() {
            variance += samples.weights()[i] * divergence(loss, samples.margin(i, j), fbar)?;
        }
        let mut components = BTreeMap::new();
        components.insert("central_loss".to_string(), central);
        components.insert("variance".to_string(), variance);
        rows.push(PerPointRow {
            point: j,
            expected_risk: expected,
            components,
        });
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("symmetry_constant".to_string(), constant);
    let labelful_variance = labelful.components["margin_variance"];
    diagnostics.insert("labelful_variance".to_string(), labelful_variance);
    let report =
        DecompositionReport::assemble("bias_variance", rows, diagnostics, Vec::new(), per_point);
    let gap = (report.components["variance"] - labelful_variance).abs();
    let mut report = report;
    report
        .diagnostics
        .insert("variance_route_gap".to_string(), gap);
    Ok(report)
}

/// Full excess-risk decomposition over the dual (probability) coordinates:
/// E[L(p, f)] = L(p) + B(p, q*) + E[B(q*, q)]
/// with q the implied probability of each margin and q* the dual mean of
/// the model sample (noise, bias, variance).
pub fn excess_risk_decomposition(
    bundle: &LinkBundle,
    samples: &MarginSampleMatrix,
    posteriors: &[f64],
    per_point: bool,
) -> Result<DecompositionReport> {
    if samples.points() != posteriors.len() {
        return Err(Error::InvalidInput(format!(
            "{} posteriors for {} points",
            posteriors.len(),
            samples.points()
        )));
    }
    if let Some(bad) = posteriors.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!(
            "posterior {bad} outside [0, 1]"
        )));
    }
    let generator = bundle.generator();
    let loss = bundle.loss();
    let mut clamped_count = 0usize;
    let mut systematic_sum = 0.0;
    let mut stationarity_gap = 0.0f64;
    let mut rows = Vec::with_capacity(samples.points());
    for j in 0..samples.points() {
        let p = posteriors[j];
        let noise = bundle.min_risk(p)?;
        // dual mean: average -L'(q_i); the margin shortcut l(-f) - l(f) is
        // exact whenever q_i was not clamped
        let mut dual_mean = 0.0;
        let mut implied = Vec::with_capacity(samples.models());
        for i in 0..samples.models() {
            let f = samples.margin(i, j);
            let inv = bundle.inverse_link(f)?;
            if inv.clamped {
                clamped_count += 1;
                dual_mean += samples.weights()[i] * bundle.neg_min_risk_grad(inv.q)?;
            } else {
                dual_mean += samples.weights()[i] * bundle.neg_min_risk_grad_at_margin(f);
            }
            implied.push(inv.q);
        }
        let q_star = bundle.neg_min_risk_grad_inv(dual_mean)?;
        systematic_sum += q_star;
        // q* must be stationary: -L'(q*) equal to the dual mean it inverts
        let gap = (generator.phi_grad(q_star) - dual_mean).abs();
        if gap > stationarity_gap {
            stationarity_gap = gap;
        }
        let bias = divergence(&generator, p, q_star)?;
        let mut variance = 0.0;
        let mut expected = 0.0;
        for i in 0..samples.models() {
            let f = samples.margin(i, j);
            variance += samples.weights()[i] * divergence(&generator, q_star, implied[i])?;
            expected += samples.weights()[i] * (p * loss.eval(f) + (1.0 - p) * loss.eval(-f));
        }
        let mut components = BTreeMap::new();
        components.insert("noise".to_string(), noise);
        components.insert("bias".to_string(), bias);
        components.insert("variance".to_string(), variance);
        rows.push(PerPointRow {
            point: j,
            expected_risk: expected,
            components,
        });
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("clamped_count".to_string(), clamped_count as f64);
    diagnostics.insert(
        "mean_systematic_q".to_string(),
        systematic_sum / samples.points() as f64,
    );
    diagnostics.insert("stationarity_gap".to_string(), stationarity_gap);
    let mut warnings = Vec::new();
    if clamped_count > 0 {
        warnings.push(format!(
            "{clamped_count} margin(s) mapped to clamped probabilities; the \
             decomposition identity is inexact there"
        ));
    }
    Ok(DecompositionReport::assemble(
        "excess_risk",
        rows,
        diagnostics,
        warnings,
        per_point,
    ))
}

/// Split the loss into its even part and the linear odd part:
/// E[l(y·f)] = E[l_e(f)] + b·E[y]·fbar.
///
/// Only losses whose odd part is exactly linear (equivalently: gradient
/// symmetric) admit this; everything else is refused.
pub fn linear_odd_decomposition(
    loss: &MarginLoss,
    samples: &MarginSampleMatrix,
    targets: &Targets,
    per_point: bool,
) -> Result<DecompositionReport> {
    check_shapes(samples, targets)?;
    let split = even_odd_split(loss, Grid::default_probe(), loss.default_symmetry_tol());
    let Some(slope) = split.odd_slope else {
        return Err(Error::NoLinearOddPart {
            loss: loss.name().to_string(),
        });
    };
    let mut rows = Vec::with_capacity(samples.points());
    // Cross-route checks: the bias route l_e(fbar) + b·ybar·fbar must equal
    // the plain central risk E_y[l(y·fbar)], and the Jensen gap of l_e must
    // equal the label-free Bregman variance. Both worst-case gaps are
    // reported so downstream gates can read them off the diagnostics.
    let mut bias_route_gap = 0.0f64;
    let mut variance_route_gap = 0.0f64;
    for j in 0..samples.points() {
        let fbar = samples.central_margin(j);
        let ybar = targets.expect_y(j);
        let (w_pos, w_neg) = targets.label_weights(j);
        let mut expected = 0.0;
        let mut even = 0.0;
        let mut bregman_variance = 0.0;
        for i in 0..samples.models() {
            let f = samples.margin(i, j);
            let w = samples.weights()[i];
            even += w * loss.even_part(f);
            bregman_variance += w * divergence(loss, f, fbar)?;
            for (y, wy) in [(1.0, w_pos), (-1.0, w_neg)] {
                if wy > 0.0 {
                    expected += w * wy * loss.eval(y * f);
                }
            }
        }
        let odd = slope * ybar * fbar;
        let central_even = loss.even_part(fbar);
        let central_risk = w_pos * loss.eval(fbar) + w_neg * loss.eval(-fbar);
        bias_route_gap = bias_route_gap.max((central_even + odd - central_risk).abs());
        variance_route_gap = variance_route_gap.max((even - central_even - bregman_variance).abs());
        let mut components = BTreeMap::new();
        components.insert("expected_even_loss".to_string(), even);
        components.insert("linear_odd_term".to_string(), odd);
        rows.push(PerPointRow {
            point: j,
            expected_risk: expected,
            components,
        });
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("odd_slope".to_string(), slope);
    diagnostics.insert("bias_route_gap".to_string(), bias_route_gap);
    diagnostics.insert("variance_route_gap".to_string(), variance_route_gap);
    Ok(DecompositionReport::assemble(
        "linear_odd",
        rows,
        diagnostics,
        Vec::new(),
        per_point,
    ))
}

/// Split the risk of one fixed model into irreducible noise and bias:
/// L(p, f) = L(p) + B(p, inverse_link(f)).
pub fn noise_bias_split(
    bundle: &LinkBundle,
    margins: &[f64],
    posteriors: &[f64],
    per_point: bool,
) -> Result<DecompositionReport> {
    if margins.len() != posteriors.len() {
        return Err(Error::InvalidInput(format!(
            "{} posteriors for {} margins",
            posteriors.len(),
            margins.len()
        )));
    }
    if margins.is_empty() {
        return Err(Error::InvalidInput("no points to split".to_string()));
    }
    let generator = bundle.generator();
    let loss = bundle.loss();
    let mut clamped_count = 0usize;
    // The noise term has a second route: p·B(1, p) + (1-p)·B(0, p), the
    // Bregman spread of the label around its own mean. The spread sits above
    // the loss's global infimum (0 for the whole catalogue), so the floor is
    // subtracted before comparing. Interior posteriors only; at p in {0, 1}
    // the form degenerates to its 0 limit.
    let mut noise_route_gap = 0.0f64;
    let floor = loss.global_inf();
    let mut rows = Vec::with_capacity(margins.len());
    for (j, (&f, &p)) in margins.iter().zip(posteriors).enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!("posterior {p} outside [0, 1]")));
        }
        let noise = bundle.min_risk(p)?;
        if p > 0.0 && p < 1.0 {
            let spread =
                p * divergence(&generator, 1.0, p)? + (1.0 - p) * divergence(&generator, 0.0, p)?;
            noise_route_gap = noise_route_gap.max((noise - floor - spread).abs());
        }
        let inv = bundle.inverse_link(f)?;
        if inv.clamped {
            clamped_count += 1;
        }
        let bias = divergence(&generator, p, inv.q)?;
        let risk = p * loss.eval(f) + (1.0 - p) * loss.eval(-f);
        let mut components = BTreeMap::new();
        components.insert("noise".to_string(), noise);
        components.insert("central_bias".to_string(), bias);
        rows.push(PerPointRow {
            point: j,
            expected_risk: risk,
            components,
        });
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("clamped_count".to_string(), clamped_count as f64);
    diagnostics.insert("loss_infimum".to_string(), loss.global_inf());
    diagnostics.insert("noise_route_gap".to_string(), noise_route_gap);
    let mut warnings = Vec::new();
    if clamped_count > 0 {
        warnings.push(format!(
            "{clamped_count} margin(s) mapped to clamped probabilities"
        ));
    }
    Ok(DecompositionReport::assemble(
        "noise_bias",
        rows,
        diagnostics,
        warnings,
        per_point,
    ))
}
