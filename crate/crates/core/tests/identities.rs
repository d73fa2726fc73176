//! Randomized cross-route identity checks.
//!
//! Every decomposition in the library is an exact algebraic identity, so the
//! right test is not "close to a golden number" but "the routes agree to
//! roundoff on arbitrary inputs". These tests draw seeded random instances
//! and check each identity, the agreements between independent routes to the
//! same quantity, and the witness instances that separate the
//! gradient-symmetric losses from the rest.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use margin_decomp::bregman::{divergence, limit_bregman_loss, LimitAnchor};
use margin_decomp::decomp::{
    bias_variance_decomposition, excess_risk_decomposition, linear_odd_decomposition,
    margin_variance_decomposition, noise_bias_split, MarginSampleMatrix, Targets,
};
use margin_decomp::ensemble::{
    additive_ambiguity, centroid_ambiguity, centroid_combine, gradient_symmetric_ambiguity,
    margin_ambiguity,
};
use margin_decomp::learner::{bootstrap_margins, make_synthetic, SyntheticKind, TrainConfig};
use margin_decomp::link::LinkBundle;
use margin_decomp::MarginLoss;

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

fn symmetric_catalogue() -> Vec<MarginLoss> {
    vec![
        MarginLoss::Squared,
        MarginLoss::Logistic,
        MarginLoss::CanonicalBoosting,
        MarginLoss::Laplacian,
    ]
}

/// Draw an M×N margin matrix with M ≤ 8, N ≤ 16 and margins in [-4, 4].
fn random_instance(rng: &mut ChaCha8Rng) -> MarginSampleMatrix {
    let models = rng.gen_range(1usize..=8);
    let points = rng.gen_range(1usize..=16);
    let margins = (0..models * points)
        .map(|_| rng.gen_range(-4.0..4.0))
        .collect();
    MarginSampleMatrix::new(models, points, margins).unwrap()
}

fn random_labels(rng: &mut ChaCha8Rng, points: usize) -> Targets {
    Targets::labels(
        (0..points)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect(),
    )
    .unwrap()
}

fn random_posteriors(rng: &mut ChaCha8Rng, points: usize) -> Vec<f64> {
    (0..points).map(|_| rng.gen_range(0.05..0.95)).collect()
}

fn relative(residual: f64, scale: f64) -> f64 {
    residual.abs() / scale.abs().max(1.0)
}

// ─────────────────────────────────────────────────────────────────────────────
// Decomposition identities on random instances
// ─────────────────────────────────────────────────────────────────────────────

#[test]
fn margin_variance_identity_holds_for_every_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..60 {
        let samples = random_instance(&mut rng);
        let targets = random_labels(&mut rng, samples.points());
        for loss in catalogue() {
            let report = margin_variance_decomposition(&loss, &samples, &targets, false).unwrap();
            assert!(
                relative(report.residual, report.expected_risk) < 1e-9,
                "{}: residual {:.3e}",
                loss.name(),
                report.residual
            );
            assert!(report.components["margin_variance"] >= 0.0);
        }
    }
}

#[test]
fn symmetric_losses_agree_across_all_variance_routes() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..40 {
        let samples = random_instance(&mut rng);
        let posteriors = random_posteriors(&mut rng, samples.points());
        let targets = Targets::posteriors(posteriors.clone()).unwrap();
        for loss in symmetric_catalogue() {
            let margin = margin_variance_decomposition(&loss, &samples, &targets, false).unwrap();
            let label_free = bias_variance_decomposition(&loss, &samples, &targets, false).unwrap();
            // the label-free variance is the same number as the labelful one
            assert!(label_free.diagnostics["variance_route_gap"] < 1e-10);
            assert!(
                (label_free.components["variance"] - margin.components["margin_variance"]).abs()
                    < 1e-10
            );

            // dual-coordinate route: same variance, and bias + noise equals
            // the central risk, both within the documented 1e-8
            let bundle = LinkBundle::new(loss.clone()).unwrap();
            let dual = excess_risk_decomposition(&bundle, &samples, &posteriors, false).unwrap();
            assert!(
                (dual.components["variance"] - label_free.components["variance"]).abs() < 1e-8,
                "{}: dual variance {:.12} vs margin variance {:.12}",
                loss.name(),
                dual.components["variance"],
                label_free.components["variance"]
            );
            assert!(
                (dual.components["bias"] + dual.components["noise"]
                    - label_free.components["central_loss"])
                    .abs()
                    < 1e-8
            );
            assert!(dual.diagnostics["stationarity_gap"] < 1e-8);
        }
    }
}

#[test]
fn linear_odd_routes_match_the_even_part_geometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..40 {
        let samples = random_instance(&mut rng);
        let targets = random_labels(&mut rng, samples.points());
        for loss in symmetric_catalogue() {
            let report = linear_odd_decomposition(&loss, &samples, &targets, false).unwrap();
            assert!(relative(report.residual, report.expected_risk) < 1e-9);
            // bias route: l_e(fbar) + b·ybar·fbar = E_y[l(y·fbar)]
            assert!(report.diagnostics["bias_route_gap"] < 1e-10);
            // variance route: Jensen gap of l_e = label-free Bregman variance
            assert!(report.diagnostics["variance_route_gap"] < 1e-10);
        }
    }
}

#[test]
fn excess_risk_identity_survives_clamp_free_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..40 {
        let samples = random_instance(&mut rng);
        let posteriors = random_posteriors(&mut rng, samples.points());
        for loss in catalogue() {
            let bundle = LinkBundle::new(loss).unwrap();
            let report = excess_risk_decomposition(&bundle, &samples, &posteriors, false).unwrap();
            if report.diagnostics["clamped_count"] == 0.0 {
                assert!(
                    relative(report.residual, report.expected_risk) < 1e-9,
                    "{}: residual {:.3e}",
                    bundle.loss().name(),
                    report.residual
                );
            }
            assert!(report.components["variance"] >= 0.0);
            assert!(report.components["bias"] >= 0.0);
        }
    }
}

#[test]
fn noise_split_noise_agrees_with_the_bregman_spread_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for loss in catalogue() {
        let bundle = LinkBundle::new(loss).unwrap();
        let margins: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let posteriors = random_posteriors(&mut rng, 12);
        let report = noise_bias_split(&bundle, &margins, &posteriors, false).unwrap();
        assert!(
            report.diagnostics["noise_route_gap"] < 1e-9,
            "{}: gap {:.3e}",
            bundle.loss().name(),
            report.diagnostics["noise_route_gap"]
        );
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Dual connection between margin-space and probability-space divergences
// ─────────────────────────────────────────────────────────────────────────────

#[test]
fn margin_divergence_equals_swapped_dual_divergence() {
    // B_l(u, v) = B_phi(g(v), g(u)) where g maps a margin to the probability
    // whose dual gradient is c times the margin; note the argument swap.
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for loss in symmetric_catalogue() {
        let bundle = LinkBundle::new(loss.clone()).unwrap();
        let c = bundle.symmetry_constant().unwrap();
        let generator = bundle.generator();
        for _ in 0..50 {
            let u = rng.gen_range(-3.0..3.0);
            let v = rng.gen_range(-3.0..3.0);
            let primal = divergence(&loss, u, v).unwrap();
            let gu = bundle.neg_min_risk_grad_inv(c * u).unwrap();
            let gv = bundle.neg_min_risk_grad_inv(c * v).unwrap();
            let dual = divergence(&generator, gv, gu).unwrap();
            assert!(
                (primal - dual).abs() < 1e-8,
                "{}: primal {:.12} dual {:.12} at u={u:.4} v={v:.4}",
                loss.name(),
                primal,
                dual
            );
        }
    }
}

#[test]
fn limit_representation_recovers_the_loss_for_symmetric_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for loss in symmetric_catalogue() {
        let anchor = LimitAnchor::for_loss(&loss);
        for _ in 0..12 {
            let y: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let f = rng.gen_range(-4.0..4.0);
            let out = limit_bregman_loss(&loss, y, f, &anchor).unwrap();
            assert!(
                (out.value - loss.eval(y * f)).abs() < 1e-6,
                "{}: limit {:.9} vs loss {:.9}",
                loss.name(),
                out.value,
                loss.eval(y * f)
            );
        }
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Ensemble identities
// ─────────────────────────────────────────────────────────────────────────────

#[test]
fn ambiguity_identities_hold_on_random_ensembles() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for _ in 0..40 {
        let members = random_instance(&mut rng);
        let targets = random_labels(&mut rng, members.points());
        for loss in catalogue() {
            let report = margin_ambiguity(&loss, &members, &targets, false).unwrap();
            assert!(relative(report.residual, report.mean_member_risk) < 1e-9);
            // the ensemble is never worse than the average member
            assert!(report.ambiguity >= 0.0);
            assert!(report.ensemble_risk <= report.mean_member_risk + 1e-12);
        }
        for loss in symmetric_catalogue() {
            let labelful = margin_ambiguity(&loss, &members, &targets, false).unwrap();
            let label_free =
                gradient_symmetric_ambiguity(&loss, &members, &targets, false).unwrap();
            assert!((labelful.ambiguity - label_free.ambiguity).abs() < 1e-10);

            let additive = additive_ambiguity(&loss, &members, &targets, false).unwrap();
            assert!(relative(additive.residual, additive.mean_member_risk) < 1e-9);
        }
    }
}

#[test]
fn centroid_combination_is_the_mean_exactly_when_gradient_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for _ in 0..20 {
        let models = rng.gen_range(1..=5);
        let points = rng.gen_range(1..=6);
        let margins: Vec<f64> = (0..models * points)
            .map(|_| rng.gen_range(-2.5..2.5))
            .collect();
        let members = MarginSampleMatrix::new(models, points, margins).unwrap();
        for loss in symmetric_catalogue() {
            let bundle = LinkBundle::new(loss).unwrap();
            let combined = centroid_combine(&bundle, &members).unwrap();
            for j in 0..points {
                assert!(
                    (combined.margins[j] - members.central_margin(j)).abs() < 1e-8,
                    "{}: centroid {:.12} mean {:.12}",
                    bundle.loss().name(),
                    combined.margins[j],
                    members.central_margin(j)
                );
            }
        }
    }
    // the two non-symmetric catalogue losses genuinely bend the combination
    for loss in [MarginLoss::Exponential, MarginLoss::SmoothHinge { t: 10.0 }] {
        let members = MarginSampleMatrix::new(2, 1, vec![0.0, 2.0]).unwrap();
        let bundle = LinkBundle::new(loss).unwrap();
        let combined = centroid_combine(&bundle, &members).unwrap();
        assert!(
            (combined.margins[0] - 1.0).abs() > 1e-3,
            "{}: centroid {:.6} too close to the mean",
            bundle.loss().name(),
            combined.margins[0]
        );
    }
}

#[test]
fn centroid_identity_holds_even_for_non_symmetric_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let bundle = LinkBundle::new(MarginLoss::Exponential).unwrap();
    for _ in 0..20 {
        let models = rng.gen_range(2..=5);
        let points = rng.gen_range(1..=6);
        let margins: Vec<f64> = (0..models * points)
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        let members = MarginSampleMatrix::new(models, points, margins).unwrap();
        let targets = random_labels(&mut rng, points);
        let report = centroid_ambiguity(&bundle, &members, &targets, false).unwrap();
        assert!(
            report.residual.abs() < 1e-8,
            "residual {:.3e}",
            report.residual
        );
    }
}

#[test]
fn label_free_ambiguity_is_the_single_point_variance() {
    // an M-member ensemble at one point is an M-model sample; the label-free
    // ambiguity and the label-free variance are the same number
    let members = MarginSampleMatrix::new(4, 1, vec![0.3, -0.8, 1.7, 0.4]).unwrap();
    let targets = Targets::labels(vec![1.0]).unwrap();
    for loss in symmetric_catalogue() {
        let ambiguity = gradient_symmetric_ambiguity(&loss, &members, &targets, false).unwrap();
        let variance = bias_variance_decomposition(&loss, &members, &targets, false).unwrap();
        assert!((ambiguity.ambiguity - variance.components["variance"]).abs() < 1e-12);
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Witnesses: what breaks without gradient symmetry or convexity
// ─────────────────────────────────────────────────────────────────────────────

#[test]
fn exponential_loss_separates_the_labelful_and_label_free_routes() {
    // same margins, both labels present: the label-free shortcut is simply a
    // different number for a non-symmetric loss
    let samples = MarginSampleMatrix::new(2, 2, vec![0.0, 0.0, 2.0, 2.0]).unwrap();
    let targets = Targets::labels(vec![1.0, -1.0]).unwrap();

    let exp_margin =
        margin_variance_decomposition(&MarginLoss::Exponential, &samples, &targets, true).unwrap();
    let label_free_exp: f64 = {
        // mean_i B(f_i, fbar) per point, averaged
        let fbar = samples.central_margin(0);
        (divergence(&MarginLoss::Exponential, 0.0, fbar).unwrap()
            + divergence(&MarginLoss::Exponential, 2.0, fbar).unwrap())
            / 2.0
    };
    let rows = exp_margin.per_point.as_ref().unwrap();
    // the +1 point agrees with the label-free number, the -1 point does not
    assert!((rows[0].components["margin_variance"] - label_free_exp).abs() < 1e-12);
    assert!((rows[1].components["margin_variance"] - label_free_exp).abs() > 1e-3);

    // the symmetric losses cannot tell the two points apart
    for loss in [MarginLoss::Logistic, MarginLoss::Squared] {
        let report = margin_variance_decomposition(&loss, &samples, &targets, true).unwrap();
        let rows = report.per_point.as_ref().unwrap();
        assert!(
            (rows[0].components["margin_variance"] - rows[1].components["margin_variance"]).abs()
                < 1e-8
        );
    }
}

#[test]
fn non_convex_even_part_can_produce_negative_jensen_variance() {
    // deliberately non-convex even candidate: 2 - exp(-v^2); its Jensen gap
    // on members {1, 2} is negative, so it cannot serve as a variance —
    // convexity is load-bearing, not decorative
    let even = |v: f64| 2.0 - (-v * v).exp();
    let members = [1.0, 2.0];
    let mean = members.iter().sum::<f64>() / members.len() as f64;
    let gap = members.iter().map(|&v| even(v)).sum::<f64>() / members.len() as f64 - even(mean);
    assert!(
        (gap - (-0.087_698_315_468_224_04)).abs() < 1e-15,
        "gap {gap:.18}"
    );
    assert!(gap < 0.0);

    // every catalogue loss, being convex, keeps the same construction
    // non-negative
    for loss in catalogue() {
        let loss_gap = members.iter().map(|&v| loss.even_part(v)).sum::<f64>()
            / members.len() as f64
            - loss.even_part(mean);
        assert!(loss_gap >= 0.0, "{}: {loss_gap:.3e}", loss.name());
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// Learner-level behavior
// ─────────────────────────────────────────────────────────────────────────────

#[test]
fn ridge_penalty_weakly_shrinks_the_variance_term() {
    let data = make_synthetic(SyntheticKind::TwoGaussians, 240, 2, 1.0, 17).unwrap();
    let eval_rows = data.rows_with(margin_decomp::learner::Split::Eval);
    let targets = Targets::labels(data.labels_for(&eval_rows)).unwrap();
    let mut variances = Vec::new();
    for penalty in [0.0, 1e-3, 1e-2, 1e-1, 1.0] {
        let config = TrainConfig {
            models: 10,
            iterations: 300,
            l2_penalty: penalty,
            seed: 29,
            ..TrainConfig::default()
        };
        let samples = bootstrap_margins(&MarginLoss::Logistic, &data, &config).unwrap();
        let report =
            bias_variance_decomposition(&MarginLoss::Logistic, &samples, &targets, false).unwrap();
        variances.push(report.components["variance"]);
    }
    // monotone non-increasing, allowing a single inversion of at most 5%
    let mut inversions = 0;
    for pair in variances.windows(2) {
        if pair[1] > pair[0] {
            inversions += 1;
            assert!(
                pair[1] <= pair[0] * 1.05,
                "inversion too large: {:?}",
                variances
            );
        }
    }
    assert!(inversions <= 1, "variances not shrinking: {variances:?}");
    // and the strongest penalty must actually bite
    assert!(variances[4] < variances[0], "{variances:?}");
}

// ─────────────────────────────────────────────────────────────────────────────
// Property tests
// ─────────────────────────────────────────────────────────────────────────────

proptest! {
    #[test]
    fn divergence_is_nonnegative_and_definite(
        u in -5.0f64..5.0,
        v in -5.0f64..5.0,
        idx in 0usize..6,
    ) {
        let loss = catalogue()[idx].clone();
        let d = divergence(&loss, u, v).unwrap();
        prop_assert!(d >= 0.0);
        // strict positivity is a curvature statement; the smooth hinge's
        // curvature underflows past its linear tail, so it is exempt
        if (u - v).abs() > 1e-6 && !matches!(loss, MarginLoss::SmoothHinge { .. }) {
            prop_assert!(d > 0.0);
        }
    }

    #[test]
    fn inverse_link_round_trips(
        p in 0.02f64..0.98,
        idx in 0usize..6,
    ) {
        let bundle = LinkBundle::new(catalogue()[idx].clone()).unwrap();
        let f = bundle.link(p).unwrap();
        let q = bundle.inverse_link(f).unwrap();
        prop_assert!(!q.clamped);
        prop_assert!((q.q - p).abs() < 1e-9, "p {} -> f {} -> q {}", p, f, q.q);
    }

    #[test]
    fn pointwise_risk_is_bounded_below_by_the_minimum_risk(
        p in 0.02f64..0.98,
        f in -4.0f64..4.0,
        idx in 0usize..6,
    ) {
        let bundle = LinkBundle::new(catalogue()[idx].clone()).unwrap();
        let risk = margin_decomp::link::pointwise_risk(bundle.loss(), p, f).unwrap();
        let floor = bundle.min_risk(p).unwrap();
        prop_assert!(risk >= floor - 1e-12);
    }
}
