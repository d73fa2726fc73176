//! Ambiguity decompositions for ensembles.
//!
//! An ensemble is better than the average of its members by exactly the
//! spread of the members around the combined model. What "spread" means
//! depends on how the members are combined: averaged margins give a Bregman
//! ambiguity over margins, additive (summed) ensembles inflate each member
//! by the ensemble size first, and dual averaging (the centroid combiner)
//! measures ambiguity between implied probabilities, which is label-free for
//! every loss.

use std::collections::BTreeMap;
use std::io::Read;

use serde::Serialize;

use crate::bregman::divergence;
use crate::decomp::{require_gradient_symmetry, MarginSampleMatrix, Targets};
use crate::error::{Error, Result};
use crate::link::LinkBundle;
use crate::loss::MarginLoss;
use crate::tolerances::CENTROID_CLAMP_BUDGET;

/// One ambiguity decomposition:
/// ensemble_risk = mean_member_risk - ambiguity + residual.
#[derive(Clone, Debug, Serialize)]
pub struct AmbiguityReport {
    pub id: String,
    pub combiner: String,
    pub ensemble_risk: f64,
    pub mean_member_risk: f64,
    pub ambiguity: f64,
    /// ensemble_risk - (mean_member_risk - ambiguity); roundoff when healthy.
    pub residual: f64,
    pub diagnostics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_point: Option<Vec<AmbiguityRow>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AmbiguityRow {
    pub point: usize,
    pub ensemble_risk: f64,
    pub mean_member_risk: f64,
    pub ambiguity: f64,
}

fn assemble(
    id: &str,
    combiner: &str,
    rows: Vec<AmbiguityRow>,
    diagnostics: BTreeMap<String, f64>,
    warnings: Vec<String>,
    keep_rows: bool,
) -> AmbiguityReport {
    let n = rows.len() as f64;
    let ensemble_risk = rows.iter().map(|r| r.ensemble_risk).sum::<f64>() / n;
    let mean_member_risk = rows.iter().map(|r| r.mean_member_risk).sum::<f64>() / n;
    let ambiguity = rows.iter().map(|r| r.ambiguity).sum::<f64>() / n;
    AmbiguityReport {
        id: id.to_string(),
        combiner: combiner.to_string(),
        ensemble_risk,
        mean_member_risk,
        ambiguity,
        residual: ensemble_risk - (mean_member_risk - ambiguity),
        diagnostics,
        warnings,
        per_point: keep_rows.then_some(rows),
    }
}

fn check_shapes(members: &MarginSampleMatrix, targets: &Targets) -> Result<()> {
    if members.points() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} targets for {} points",
            targets.len(),
            members.points()
        )));
    }
    Ok(())
}

/// Expected loss over the label distribution at margin f.
fn expected_loss(loss: &MarginLoss, targets: &Targets, point: usize, f: f64) -> f64 {
    let (w_pos, w_neg) = targets.label_weights(point);
    let mut out = 0.0;
    if w_pos > 0.0 {
        out += w_pos * loss.eval(f);
    }
    if w_neg > 0.0 {
        out += w_neg * loss.eval(-f);
    }
    out
}

// ─────────────────────────────────────────────────────────────────────────────
// Margin-averaging combiners
// ─────────────────────────────────────────────────────────────────────────────

/// Ambiguity of the margin-averaging ensemble, for any convex loss:
/// E_y[l(y·fbar)] = sum_i a_i·E_y[l(y·f_i)] - sum_i a_i·E_y[B_l(y·f_i, y·fbar)].
///
/// The ambiguity term needs the label distribution unless the loss is
/// gradient-symmetric (see [`gradient_symmetric_ambiguity`]).
pub fn margin_ambiguity(
    loss: &MarginLoss,
    members: &MarginSampleMatrix,
    targets: &Targets,
    per_point: bool,
) -> Result<AmbiguityReport> {
    check_shapes(members, targets)?;
    let mut rows = Vec::with_capacity(members.points());
    for j in 0..members.points() {
        let fbar = members.central_margin(j);
        let (w_pos, w_neg) = targets.label_weights(j);
        let mut member_risk = 0.0;
        let mut ambiguity = 0.0;
        for i in 0..members.models() {
            let f = members.margin(i, j);
            let a = members.weights()[i];
            member_risk += a * expected_loss(loss, targets, j, f);
            for (y, wy) in [(1.0, w_pos), (-1.0, w_neg)] {
                if wy > 0.0 {
                    ambiguity += a * wy * divergence(loss, y * f, y * fbar)?;
                }
            }
        }
        rows.push(AmbiguityRow {
            point: j,
            ensemble_risk: expected_loss(loss, targets, j, fbar),
            mean_member_risk: member_risk,
            ambiguity,
        });
    }
    Ok(assemble(
        "margin_ambiguity",
        "mean",
        rows,
        BTreeMap::new(),
        Vec::new(),
        per_point,
    ))
}

/// Label-free ambiguity for gradient-symmetric losses: the same identity as
/// [`margin_ambiguity`] with the ambiguity term B_l(f_i, fbar), computable
/// without any labels. Refused for other losses.
pub fn gradient_symmetric_ambiguity(
    loss: &MarginLoss,
    members: &MarginSampleMatrix,
    targets: &Targets,
    per_point: bool,
) -> Result<AmbiguityReport> {
    check_shapes(members, targets)?;
    let constant = require_gradient_symmetry(loss, "the label-free ambiguity decomposition")?;
    let mut rows = Vec::with_capacity(members.points());
    for j in 0..members.points() {
        let fbar = members.central_margin(j);
        let mut member_risk = 0.0;
        let mut ambiguity = 0.0;
        for i in 0..members.models() {
            let f = members.margin(i, j);
            let a = members.weights()[i];
            member_risk += a * expected_loss(loss, targets, j, f);
            ambiguity += a * divergence(loss, f, fbar)?;
        }
        rows.push(AmbiguityRow {
            point: j,
            ensemble_risk: expected_loss(loss, targets, j, fbar),
            mean_member_risk: member_risk,
            ambiguity,
        });
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("symmetry_constant".to_string(), constant);
    Ok(assemble(
        "gradient_symmetric_ambiguity",
        "mean",
        rows,
        diagnostics,
        Vec::new(),
        per_point,
    ))
}

/// Ambiguity of the additive (summed) ensemble f_add = M·fbar for
/// gradient-symmetric losses. Each member enters at its inflated margin
/// M·f_i, whose weighted mean is exactly f_add, so the averaging identity
/// applies unchanged:
/// E_y[l(y·f_add)] = sum_i a_i·E_y[l(y·M·f_i)] - sum_i a_i·B_l(M·f_i, f_add).
pub fn additive_ambiguity(
    loss: &MarginLoss,
    members: &MarginSampleMatrix,
    targets: &Targets,
    per_point: bool,
) -> Result<AmbiguityReport> {
    check_shapes(members, targets)?;
    let constant = require_gradient_symmetry(loss, "the additive ambiguity decomposition")?;
    let inflation = members.models() as f64;
    let mut rows = Vec::with_capacity(members.points());
    for j in 0..members.points() {
        let f_add = inflation * members.central_margin(j);
        let mut member_risk = 0.0;
        let mut ambiguity = 0.0;
        for i in 0..members.models() {
            let g = inflation * members.margin(i, j);
            let a = members.weights()[i];
            member_risk += a * expected_loss(loss, targets, j, g);
            ambiguity += a * divergence(loss, g, f_add)?;
        }
        rows.push(AmbiguityRow {
            point: j,
            ensemble_risk: expected_loss(loss, targets, j, f_add),
            mean_member_risk: member_risk,
            ambiguity,
        });
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("symmetry_constant".to_string(), constant);
    diagnostics.insert("inflation".to_string(), inflation);
    Ok(assemble(
        "additive_ambiguity",
        "additive",
        rows,
        diagnostics,
        Vec::new(),
        per_point,
    ))
}

// ─────────────────────────────────────────────────────────────────────────────
// Centroid (dual-averaging) combiner
// ─────────────────────────────────────────────────────────────────────────────

/// The dual-averaged ensemble: member margins are mapped to implied
/// probabilities, averaged in the dual coordinates of the negative minimum
/// risk, and mapped back to a margin.
#[derive(Clone, Debug)]
pub struct CentroidCombination {
    /// Combined margin per point.
    pub margins: Vec<f64>,
    /// Combined implied probability per point.
    pub implied: Vec<f64>,
    /// How many member margins were clamped while mapping to probabilities.
    pub clamped_count: usize,
    /// Set when the member weights were not uniform: the combiner is then an
    /// extension of the plain dual average.
    pub weighted_extension: bool,
}

/// Combine members through the dual average.
///
/// Members whose margins are so extreme that the implied probability clamps
/// are tolerated up to a budget of 1% of all member evaluations; past that
/// the combination is refused, because clamping silently shrinks the
/// combined margin. For gradient-symmetric losses the combined margin equals
/// the weighted mean margin; for others it is genuinely different.
pub fn centroid_combine(
    bundle: &LinkBundle,
    members: &MarginSampleMatrix,
) -> Result<CentroidCombination> {
    let budget =
        (CENTROID_CLAMP_BUDGET * (members.models() * members.points()) as f64).floor() as usize;
    let mut clamped_count = 0usize;
    let mut margins = Vec::with_capacity(members.points());
    let mut implied = Vec::with_capacity(members.points());
    for j in 0..members.points() {
        let mut dual_mean = 0.0;
        for i in 0..members.models() {
            let f = members.margin(i, j);
            let inv = bundle.inverse_link(f)?;
            if inv.clamped {
                clamped_count += 1;
                if clamped_count > budget {
                    return Err(Error::InvalidInput(format!(
                        "more than {budget} member margin(s) clamp to the \
                         probability boundary; the dual average would be \
                         systematically biased (first offender: model {i}, \
                         point {j}, margin {f})"
                    )));
                }
                dual_mean += members.weights()[i] * bundle.neg_min_risk_grad(inv.q)?;
            } else {
                dual_mean += members.weights()[i] * bundle.neg_min_risk_grad_at_margin(f);
            }
        }
        let q_bar = bundle.neg_min_risk_grad_inv(dual_mean)?;
        implied.push(q_bar);
        margins.push(bundle.link(q_bar)?);
    }
    let uniform = 1.0 / members.models() as f64;
    let weighted_extension = members
        .weights()
        .iter()
        .any(|w| (w - uniform).abs() > 1e-12);
    Ok(CentroidCombination {
        margins,
        implied,
        clamped_count,
        weighted_extension,
    })
}

/// Ambiguity of the centroid combiner, exact for every convex loss and
/// label-free: with q_i the implied member probabilities and qbar their dual
/// average,
/// E_y[l(y·f_cen)] = sum_i a_i·E_y[l(y·f_i)] - sum_i a_i·B_phi(qbar, q_i)
/// where phi is the negative minimum risk. The label only enters through
/// the risks; the ambiguity term never sees it.
pub fn centroid_ambiguity(
    bundle: &LinkBundle,
    members: &MarginSampleMatrix,
    targets: &Targets,
    per_point: bool,
) -> Result<AmbiguityReport> {
    check_shapes(members, targets)?;
    let combined = centroid_combine(bundle, members)?;
    let generator = bundle.generator();
    let loss = bundle.loss();
    let mut rows = Vec::with_capacity(members.points());
    for j in 0..members.points() {
        let mut member_risk = 0.0;
        let mut ambiguity = 0.0;
        for i in 0..members.models() {
            let f = members.margin(i, j);
            let a = members.weights()[i];
            member_risk += a * expected_loss(loss, targets, j, f);
            let q_i = bundle.inverse_link(f)?.q;
            ambiguity += a * divergence(&generator, combined.implied[j], q_i)?;
        }
        rows.push(AmbiguityRow {
            point: j,
            ensemble_risk: expected_loss(loss, targets, j, combined.margins[j]),
            mean_member_risk: member_risk,
            ambiguity,
        });
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("clamped_count".to_string(), combined.clamped_count as f64);
    let mut warnings = Vec::new();
    if combined.clamped_count > 0 {
        warnings.push(format!(
            "{} member margin(s) clamped; the identity is inexact there",
            combined.clamped_count
        ));
    }
    if combined.weighted_extension {
        warnings.push(
            "non-uniform member weights: the weighted dual average extends \
             the plain centroid combiner"
                .to_string(),
        );
    }
    Ok(assemble(
        "centroid_ambiguity",
        "centroid",
        rows,
        diagnostics,
        warnings,
        per_point,
    ))
}

// ─────────────────────────────────────────────────────────────────────────────
// Member matrix I/O
// ─────────────────────────────────────────────────────────────────────────────

/// A parsed member-margin table: one row per point.
pub struct MemberTable {
    pub members: MarginSampleMatrix,
    pub labels: Option<Targets>,
    pub point_ids: Vec<String>,
}

/// Read a member-margin CSV with header
/// `point_id,member_1,...,member_M[,label]`.
///
/// Rows are points, columns are ensemble members; the trailing label column
/// is optional and must be ±1 when present.
pub fn read_members_csv<R: Read>(reader: R) -> Result<MemberTable> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    if headers.len() < 2 || headers.get(0) != Some("point_id") {
        return Err(Error::InvalidInput(
            "member CSV must start with a point_id column".to_string(),
        ));
    }
    let has_label = headers.get(headers.len() - 1) == Some("label");
    let member_count = headers.len() - 1 - usize::from(has_label);
    if member_count == 0 {
        return Err(Error::InvalidInput(
            "member CSV has no member columns".to_string(),
        ));
    }
    for (k, name) in headers.iter().skip(1).take(member_count).enumerate() {
        let expected = format!("member_{}", k + 1);
        if name != expected {
            return Err(Error::InvalidInput(format!(
                "member CSV column {} is named {name:?}, expected {expected:?}",
                k + 1
            )));
        }
    }
    let mut point_ids = Vec::new();
    let mut by_point: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for record in csv_reader.records() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::InvalidInput(format!(
                "member CSV row {} has {} fields, expected {}",
                point_ids.len() + 2,
                record.len(),
                headers.len()
            )));
        }
        point_ids.push(record[0].to_string());
        let mut margins = Vec::with_capacity(member_count);
        for field in record.iter().skip(1).take(member_count) {
            margins.push(parse_float(field, "margin")?);
        }
        by_point.push(margins);
        if has_label {
            labels.push(parse_float(&record[record.len() - 1], "label")?);
        }
    }
    if by_point.is_empty() {
        return Err(Error::InvalidInput("member CSV has no rows".to_string()));
    }
    // transpose to model-major storage
    let points = by_point.len();
    let mut margins = Vec::with_capacity(member_count * points);
    for i in 0..member_count {
        for row in &by_point {
            margins.push(row[i]);
        }
    }
    Ok(MemberTable {
        members: MarginSampleMatrix::new(member_count, points, margins)?,
        labels: if has_label {
            Some(Targets::labels(labels)?)
        } else {
            None
        },
        point_ids,
    })
}

fn parse_float(field: &str, what: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::InvalidInput(format!("member CSV has a non-numeric {what}: {field:?}")))
}
