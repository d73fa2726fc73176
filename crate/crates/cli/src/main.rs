//! `margin-decomp`: decomposition diagnostics for margin losses.
//!
//! Three subcommands share the JSON report schema in [`report`]:
//!
//! * `verify` checks the identities a loss is supposed to satisfy (symmetry
//!   classification, divergence geometry, conjugates, decomposition and
//!   ambiguity laws) against built-in gates;
//! * `diagnose` trains a bootstrap ensemble on a dataset and decomposes its
//!   risk point by point;
//! * `ensemble` decomposes a table of precomputed member margins.
//!
//! Exit codes are a stable contract: 0 when every check passes, 1 when a
//! numerical check fails, 2 when the configuration is unusable. The JSON
//! report goes to stdout or `--out` (written atomically); human-readable
//! summaries go to stderr so they never contaminate a piped report.

mod report;

use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use margin_decomp::bregman::{
    conjugate, divergence, label_flip_symmetric, limit_bregman_loss, LimitAnchor,
};
use margin_decomp::decomp::{
    bias_variance_decomposition, excess_risk_decomposition, linear_odd_decomposition,
    margin_variance_decomposition, noise_bias_split, DecompositionReport, MarginSampleMatrix,
    Targets,
};
use margin_decomp::ensemble::{
    additive_ambiguity, centroid_ambiguity, centroid_combine, gradient_symmetric_ambiguity,
    margin_ambiguity, read_members_csv,
};
use margin_decomp::learner::{
    bootstrap_margins, make_synthetic, LabeledDataset, Split, SyntheticKind, TrainConfig,
};
use margin_decomp::link::{canonical_scaling_check, LinkBundle};
use margin_decomp::loss::{even_odd_split, gradient_sum_stats};
use margin_decomp::tolerances::{
    CANONICAL_SCALING_TOL, DEFAULT_ITERATIONS, DEFAULT_L2_PENALTY, DEFAULT_LEARNING_RATE,
    DEFAULT_MODELS,
};
use margin_decomp::{Error, Grid, MarginLoss};

use report::{CheckOutcome, DatasetInfo, LossInfo, Report};

// ─────────────────────────────────────────────────────────────────────────────
// Gates
// ─────────────────────────────────────────────────────────────────────────────

/// Relative residual gate for exact decomposition identities.
const RESIDUAL_GATE: f64 = 1e-9;
/// Agreement gate between two routes to the same quantity.
const ROUTE_GATE: f64 = 1e-8;
/// Gate for limits and numerically optimized quantities (conjugates).
const NUMERIC_GATE: f64 = 1e-6;
/// A deviation must exceed this to count as structurally detected; a lower
/// bound, so never scaled by `--tol`.
const DETECTION_FLOOR: f64 = 1e-3;

const SEED_ENV: &str = "MARGIN_DECOMP_SEED";
const DEFAULT_SEED: u64 = 42;

// ─────────────────────────────────────────────────────────────────────────────
// Command line
// ─────────────────────────────────────────────────────────────────────────────

#[derive(Parser)]
#[command(
    name = "margin-decomp",
    version,
    about = "Exact risk decompositions for margin losses and their ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the identities a loss is supposed to satisfy.
    Verify(VerifyArgs),
    /// Train a bootstrap ensemble on data and decompose its risk.
    Diagnose(DiagnoseArgs),
    /// Decompose a table of precomputed ensemble member margins.
    Ensemble(EnsembleArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Loss name, optionally parameterized: squared, logistic,
    /// canonical_boosting, laplacian, exponential, smooth_hinge[:t=10].
    #[arg(long)]
    loss: String,

    /// Seed for every randomized step; defaults to $MARGIN_DECOMP_SEED,
    /// then 42.
    #[arg(long)]
    seed: Option<u64>,

    /// Multiplier applied to every built-in tolerance gate.
    #[arg(long, default_value_t = 1.0)]
    tol: f64,

    /// Write the JSON report here (atomic replace) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Record wall-clock time in the report. Off by default because it
    /// breaks byte-for-byte reproducibility.
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Symmetry,
    Bregman,
    Conjugate,
    Decomp,
    Ensemble,
    All,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Symmetry => "symmetry",
            Suite::Bregman => "bregman",
            Suite::Conjugate => "conjugate",
            Suite::Decomp => "decomp",
            Suite::Ensemble => "ensemble",
            Suite::All => "all",
        }
    }

    fn wants(self, member: Suite) -> bool {
        self == Suite::All || self == member
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Which identity family to check.
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Dataset CSV with header f1,...,fd,y[,p]; split in half by a seeded
    /// shuffle into train and eval rows.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,

    /// Synthetic dataset spec kind:n=N,sep=S[,dims=D] with kind one of
    /// two_gaussians or logistic_ground_truth; carries true posteriors.
    #[arg(long)]
    synthetic: Option<String>,

    /// Number of bootstrap ensemble members to train.
    #[arg(long, default_value_t = DEFAULT_MODELS)]
    models: usize,

    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    learning_rate: f64,

    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,

    /// Ridge penalty on the weights (never the intercept).
    #[arg(long, default_value_t = DEFAULT_L2_PENALTY)]
    l2_penalty: f64,

    /// Standard deviation of the random weight initialization.
    #[arg(long, default_value_t = 0.0)]
    init_scale: f64,

    /// Worker threads for training; never changes the numbers.
    #[arg(long, default_value_t = 1)]
    threads: usize,

    /// Keep per-point rows in the JSON report.
    #[arg(long)]
    per_point: bool,

    /// Also write per-point components to this CSV
    /// (decomposition,point,component,value).
    #[arg(long)]
    per_point_csv: Option<PathBuf>,

    /// Exit with a configuration error unless the dataset carries true
    /// posteriors (so the noise term is identified, not estimated).
    #[arg(long)]
    require_noise: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CombinerArg {
    /// Arithmetic mean of member margins.
    Mean,
    /// Sum of member margins (gradient-symmetric losses only).
    Additive,
    /// Dual average: mean of implied probabilities mapped back to a margin.
    Centroid,
}

impl CombinerArg {
    fn name(self) -> &'static str {
        match self {
            CombinerArg::Mean => "mean",
            CombinerArg::Additive => "additive",
            CombinerArg::Centroid => "centroid",
        }
    }
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Member-margin CSV with header point_id,member_1,...,member_M,label.
    #[arg(long)]
    members: PathBuf,

    #[arg(long, value_enum, default_value_t = CombinerArg::Mean)]
    combiner: CombinerArg,

    /// Keep per-point rows in the JSON report.
    #[arg(long)]
    per_point: bool,
}

// ─────────────────────────────────────────────────────────────────────────────
// Entry and shared plumbing
// ─────────────────────────────────────────────────────────────────────────────

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Ensemble(args) => cmd_ensemble(args),
    }
}

/// Configuration mistakes exit 2; numerical failures inside an otherwise
/// valid run exit 1.
fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::UnknownLoss(_)
        | Error::InvalidParameter { .. }
        | Error::InvalidInput(_)
        | Error::NotGradientSymmetric { .. }
        | Error::NoLinearOddPart { .. }
        | Error::LinkDomain(_)
        | Error::Io(_)
        | Error::Csv(_) => 2,
        _ => 1,
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, Error> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text.trim().parse().map_err(|_| {
            Error::InvalidInput(format!(
                "{SEED_ENV} must be an unsigned integer, got {text:?}"
            ))
        }),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn check_tol(tol: f64) -> Result<f64, Error> {
    if tol.is_finite() && tol > 0.0 {
        Ok(tol)
    } else {
        Err(Error::InvalidInput(format!(
            "--tol must be a positive finite multiplier, got {tol}"
        )))
    }
}

fn loss_info(bundle: &LinkBundle) -> LossInfo {
    let loss = bundle.loss();
    let split = even_odd_split(loss, Grid::default_probe(), loss.default_symmetry_tol());
    LossInfo {
        name: loss.name().to_string(),
        params: loss.params(),
        gradient_symmetric: bundle.is_gradient_symmetric(),
        symmetry_constant: bundle.symmetry_constant(),
        odd_slope: split.odd_slope,
        link_range: bundle.link_range().map(|(lo, hi)| [lo, hi]),
    }
}

fn push_check(
    checks: &mut Vec<CheckOutcome>,
    name: &str,
    passed: bool,
    measured: f64,
    threshold: Option<f64>,
) {
    checks.push(CheckOutcome {
        name: name.to_string(),
        passed,
        measured,
        threshold,
    });
}

/// Gate `measured <= threshold`, recording both.
fn gate(checks: &mut Vec<CheckOutcome>, name: &str, measured: f64, threshold: f64) {
    push_check(
        checks,
        name,
        measured <= threshold,
        measured,
        Some(threshold),
    );
}

fn relative(residual: f64, scale: f64) -> f64 {
    residual.abs() / scale.abs().max(1.0)
}

/// Stamp timing (when asked), write the report, print the stderr summary,
/// and convert the check outcomes into the exit code.
fn finish(mut rep: Report, common: &CommonArgs, start: Instant) -> Result<i32, Error> {
    if common.timing {
        rep.timing_ms = Some(start.elapsed().as_millis() as u64);
    }
    let ok = rep.all_checks_pass();
    rep.write(common.out.as_deref())?;
    print_summary(&rep, common.out.as_deref());
    Ok(if ok { 0 } else { 1 })
}

fn print_summary(rep: &Report, out: Option<&std::path::Path>) {
    let class = if rep.loss.gradient_symmetric {
        format!(
            "gradient-symmetric, c = {}",
            rep.loss
                .symmetry_constant
                .map_or_else(|| "?".to_string(), |c| format!("{c:.6}"))
        )
    } else {
        "not gradient-symmetric".to_string()
    };
    eprintln!(
        "{} {}: loss {} ({class})",
        rep.tool, rep.command, rep.loss.name
    );
    for d in &rep.decompositions {
        let parts: Vec<String> = d
            .components
            .iter()
            .map(|(k, v)| format!("{k} = {v:.6e}"))
            .collect();
        eprintln!(
            "  {}: expected risk {:.6e} = {} (residual {:.3e})",
            d.id,
            d.expected_risk,
            parts.join(" + "),
            d.residual
        );
    }
    for e in &rep.ensembles {
        eprintln!(
            "  {} [{}]: ensemble {:.6e} = mean member {:.6e} - ambiguity {:.6e} (residual {:.3e})",
            e.id, e.combiner, e.ensemble_risk, e.mean_member_risk, e.ambiguity, e.residual
        );
    }
    for c in &rep.checks {
        let verdict = if c.passed { "pass" } else { "FAIL" };
        match c.threshold {
            Some(t) => eprintln!(
                "  check {:<44} {}  measured {:.3e} vs {:.1e}",
                c.name, verdict, c.measured, t
            ),
            None => eprintln!(
                "  check {:<44} {}  measured {:.3e}",
                c.name, verdict, c.measured
            ),
        }
    }
    for n in &rep.notes {
        eprintln!("  note: {n}");
    }
    for w in &rep.warnings {
        eprintln!("  warning: {w}");
    }
    let passed = rep.checks.iter().filter(|c| c.passed).count();
    eprintln!("  {} of {} checks passed", passed, rep.checks.len());
    if let Some(path) = out {
        eprintln!("  report written to {}", path.display());
    }
}

// ─────────────────────────────────────────────────────────────────────────────
// verify
// ─────────────────────────────────────────────────────────────────────────────

fn cmd_verify(args: VerifyArgs) -> Result<i32, Error> {
    let start = Instant::now();
    let seed = resolve_seed(args.common.seed)?;
    let tol = check_tol(args.common.tol)?;
    let bundle = LinkBundle::new(MarginLoss::from_spec(&args.common.loss)?)?;

    let mut echo = BTreeMap::new();
    echo.insert("loss".to_string(), args.common.loss.clone());
    echo.insert("suite".to_string(), args.suite.name().to_string());
    echo.insert("tol".to_string(), format!("{tol}"));
    let mut rep = Report::new("verify", echo, seed, loss_info(&bundle));

    if !bundle.is_gradient_symmetric() {
        let (spread, _) = gradient_sum_stats(bundle.loss(), Grid::default_probe());
        rep.notes.push(format!(
            "{} is not gradient-symmetric (gradient-sum spread {spread:.3e}); \
             label-free identities are checked for refusal, not agreement",
            bundle.loss().name()
        ));
    }

    let mut checks = Vec::new();
    if args.suite.wants(Suite::Symmetry) {
        suite_symmetry(&bundle, tol, &mut checks)?;
    }
    if args.suite.wants(Suite::Bregman) {
        suite_bregman(&bundle, tol, seed, &mut checks)?;
    }
    if args.suite.wants(Suite::Conjugate) {
        suite_conjugate(&bundle, tol, &mut checks)?;
    }
    if args.suite.wants(Suite::Decomp) {
        suite_decomp(&bundle, tol, seed, &mut checks)?;
    }
    if args.suite.wants(Suite::Ensemble) {
        suite_ensemble(&bundle, tol, seed, &mut checks)?;
    }
    rep.checks = checks;

    finish(rep, &args.common, start)
}

fn suite_symmetry(
    bundle: &LinkBundle,
    tol: f64,
    checks: &mut Vec<CheckOutcome>,
) -> Result<(), Error> {
    let loss = bundle.loss();
    let classified = bundle.symmetry_constant();
    let (spread, _) = gradient_sum_stats(loss, Grid::default_probe());
    let class_tol = loss.default_symmetry_tol() * tol;

    match (loss.known_symmetry_constant(), classified) {
        (Some(known), Some(c)) => gate(
            checks,
            "symmetry.classification_recovers_constant",
            (c - known).abs(),
            ROUTE_GATE * tol,
        ),
        (Some(_), None) => {
            // A catalogue loss with a known constant must classify as such.
            push_check(
                checks,
                "symmetry.classification_recovers_constant",
                false,
                spread,
                Some(class_tol),
            );
        }
        (None, _) if loss.grad_is_analytic() => push_check(
            checks,
            "symmetry.asymmetry_detected",
            classified.is_none() && spread > class_tol,
            spread,
            Some(class_tol),
        ),
        (None, _) => {
            // Tabulated loss without ground truth: report, never gate.
            push_check(checks, "symmetry.gradient_sum_spread", true, spread, None);
        }
    }

    let flip = label_flip_symmetric(loss, Grid::symmetric(3.0, 31)?, ROUTE_GATE * tol)?;
    if classified.is_some() {
        gate(
            checks,
            "symmetry.label_flip_invariance",
            flip.max_asymmetry,
            ROUTE_GATE * tol,
        );
    } else {
        push_check(
            checks,
            "symmetry.label_flip_asymmetry_exceeds_floor",
            flip.max_asymmetry > DETECTION_FLOOR,
            flip.max_asymmetry,
            Some(DETECTION_FLOOR),
        );
    }

    let split = even_odd_split(
        loss,
        Grid::default_probe(),
        loss.default_symmetry_tol() * tol,
    );
    match (classified, split.odd_slope) {
        (Some(c), Some(b)) => gate(
            checks,
            "symmetry.odd_slope_is_half_the_constant",
            (b - c / 2.0).abs(),
            ROUTE_GATE * tol,
        ),
        (Some(_), None) => push_check(
            checks,
            "symmetry.odd_slope_is_half_the_constant",
            false,
            split.max_deviation,
            None,
        ),
        (None, _) => push_check(
            checks,
            "symmetry.odd_part_nonlinearity_detected",
            split.odd_slope.is_none(),
            split.max_deviation,
            None,
        ),
    }

    if classified.is_some() {
        let scaling = canonical_scaling_check(bundle, CANONICAL_SCALING_TOL * tol)?;
        push_check(
            checks,
            "symmetry.canonical_link_scaling",
            scaling.canonical,
            scaling.max_deviation,
            Some(CANONICAL_SCALING_TOL * tol),
        );
    }
    Ok(())
}

fn suite_bregman(
    bundle: &LinkBundle,
    tol: f64,
    seed: u64,
    checks: &mut Vec<CheckOutcome>,
) -> Result<(), Error> {
    let loss = bundle.loss();

    let grid = Grid::symmetric(4.0, 33)?;
    let mut min_div = f64::INFINITY;
    for u in grid.iter() {
        for v in grid.iter() {
            min_div = min_div.min(divergence(loss, u, v)?);
        }
    }
    push_check(
        checks,
        "bregman.divergence_nonnegative",
        min_div >= 0.0,
        min_div,
        Some(0.0),
    );

    let anchor = LimitAnchor::for_loss(loss);
    if bundle.is_gradient_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let y = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let f = rng.gen_range(-4.0..4.0);
            let lb = limit_bregman_loss(loss, y, f, &anchor)?;
            worst = worst.max((lb.value - loss.eval(y * f)).abs());
        }
        gate(
            checks,
            "bregman.limit_representation_recovers_loss",
            worst,
            NUMERIC_GATE * tol,
        );

        // The margin divergence equals the dual divergence with swapped,
        // rescaled arguments.
        let c = bundle.symmetry_constant().expect("classified above");
        let generator = bundle.generator();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let u = rng.gen_range(-3.0..3.0);
            let v = rng.gen_range(-3.0..3.0);
            let forward = divergence(loss, u, v)?;
            let gu = bundle.neg_min_risk_grad_inv(c * u)?;
            let gv = bundle.neg_min_risk_grad_inv(c * v)?;
            let dual = divergence(&generator, gv, gu)?;
            worst = worst.max((forward - dual).abs());
        }
        gate(
            checks,
            "bregman.dual_divergence_swap",
            worst,
            ROUTE_GATE * tol,
        );
    } else {
        let refused = limit_bregman_loss(loss, 1.0, 0.5, &anchor).is_err();
        let (spread, _) = gradient_sum_stats(loss, Grid::default_probe());
        push_check(
            checks,
            "bregman.limit_refused_without_symmetry",
            refused,
            spread,
            None,
        );
    }
    Ok(())
}

fn suite_conjugate(
    bundle: &LinkBundle,
    tol: f64,
    checks: &mut Vec<CheckOutcome>,
) -> Result<(), Error> {
    let loss = bundle.loss();
    let generator = bundle.generator();

    if let Some(c) = bundle.symmetry_constant() {
        let mut worst_closed = 0.0f64;
        let mut worst_law = 0.0f64;
        let mut have_closed = false;
        for k in 0..=32 {
            let v = -8.0 + 0.5 * k as f64;
            let numeric = conjugate(&generator, v, 1e-10)?;
            if let Some(closed) = loss.known_conjugate(v) {
                have_closed = true;
                worst_closed = worst_closed.max((numeric - closed).abs());
            }
            worst_law = worst_law.max((numeric - loss.eval(v / c)).abs());
        }
        if have_closed {
            gate(
                checks,
                "conjugate.matches_closed_form",
                worst_closed,
                NUMERIC_GATE * tol,
            );
        }
        gate(
            checks,
            "conjugate.equals_loss_at_rescaled_argument",
            worst_law,
            NUMERIC_GATE * tol,
        );
    } else {
        // Without the scaling law, pin the conjugate through Fenchel-Young
        // equality at the stationary pairing v = phi'(q).
        let mut worst = 0.0f64;
        for k in 1..=9 {
            let q = 0.1 * k as f64;
            let v = bundle.neg_min_risk_grad(q)?;
            let numeric = conjugate(&generator, v, 1e-10)?;
            let phi = -bundle.min_risk(q)?;
            worst = worst.max((phi + numeric - q * v).abs());
        }
        gate(
            checks,
            "conjugate.fenchel_young_equality",
            worst,
            NUMERIC_GATE * tol,
        );
    }
    Ok(())
}

/// Draw a random ensemble-output instance: `models`xN margins, one label
/// or posterior per point.
fn random_instance(
    rng: &mut ChaCha8Rng,
    max_models: usize,
    max_points: usize,
    half_width: f64,
) -> Result<(MarginSampleMatrix, Vec<f64>, Vec<f64>), Error> {
    let models = rng.gen_range(1..=max_models);
    let points = rng.gen_range(1..=max_points);
    let margins: Vec<f64> = (0..models * points)
        .map(|_| rng.gen_range(-half_width..half_width))
        .collect();
    let samples = MarginSampleMatrix::new(models, points, margins)?;
    let labels: Vec<f64> = (0..points)
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let posteriors: Vec<f64> = (0..points).map(|_| rng.gen_range(0.05..0.95)).collect();
    Ok((samples, labels, posteriors))
}

fn suite_decomp(
    bundle: &LinkBundle,
    tol: f64,
    seed: u64,
    checks: &mut Vec<CheckOutcome>,
) -> Result<(), Error> {
    let loss = bundle.loss();
    let symmetric = bundle.is_gradient_symmetric();
    let has_linear_odd = even_odd_split(loss, Grid::default_probe(), loss.default_symmetry_tol())
        .odd_slope
        .is_some();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
    let mut worst_margin = 0.0f64;
    let mut worst_label_free = 0.0f64;
    let mut worst_route = 0.0f64;
    let mut worst_excess = 0.0f64;
    let mut worst_station = 0.0f64;
    let mut worst_noise = 0.0f64;
    let mut worst_noise_route = 0.0f64;
    let mut worst_lol = 0.0f64;
    let mut worst_lol_route = 0.0f64;

    for _ in 0..25 {
        let (samples, labels, posteriors) = random_instance(&mut rng, 8, 16, 4.0)?;
        let targets = Targets::labels(labels)?;

        let margin = margin_variance_decomposition(loss, &samples, &targets, false)?;
        worst_margin = worst_margin.max(relative(margin.residual, margin.expected_risk));

        if symmetric {
            let label_free = bias_variance_decomposition(loss, &samples, &targets, false)?;
            worst_label_free =
                worst_label_free.max(relative(label_free.residual, label_free.expected_risk));
            worst_route = worst_route.max(label_free.diagnostics["variance_route_gap"]);
            let gap =
                label_free.components["variance"] - label_free.diagnostics["labelful_variance"];
            worst_route = worst_route.max(gap.abs());
        }

        let excess = excess_risk_decomposition(bundle, &samples, &posteriors, false)?;
        if excess.diagnostics["clamped_count"] == 0.0 {
            worst_excess = worst_excess.max(relative(excess.residual, excess.expected_risk));
            worst_station = worst_station.max(excess.diagnostics["stationarity_gap"]);
        }

        let central = samples.central_margins();
        let noise = noise_bias_split(bundle, &central, &posteriors, false)?;
        if noise.diagnostics["clamped_count"] == 0.0 {
            worst_noise = worst_noise.max(relative(noise.residual, noise.expected_risk));
            worst_noise_route = worst_noise_route.max(noise.diagnostics["noise_route_gap"]);
        }

        if has_linear_odd {
            let lol = linear_odd_decomposition(loss, &samples, &targets, false)?;
            worst_lol = worst_lol.max(relative(lol.residual, lol.expected_risk));
            worst_lol_route = worst_lol_route
                .max(lol.diagnostics["bias_route_gap"])
                .max(lol.diagnostics["variance_route_gap"]);
        }
    }

    gate(
        checks,
        "decomp.margin_variance_residual",
        worst_margin,
        RESIDUAL_GATE * tol,
    );
    if symmetric {
        gate(
            checks,
            "decomp.label_free_variance_residual",
            worst_label_free,
            RESIDUAL_GATE * tol,
        );
        gate(
            checks,
            "decomp.label_free_route_agreement",
            worst_route,
            ROUTE_GATE * tol,
        );
    } else {
        let refusal =
            bias_variance_decomposition(loss, &one_point_instance()?, &unit_label()?, false);
        push_check(
            checks,
            "decomp.label_free_refused_without_symmetry",
            matches!(refusal, Err(Error::NotGradientSymmetric { .. })),
            0.0,
            None,
        );
    }
    gate(
        checks,
        "decomp.excess_risk_residual",
        worst_excess,
        RESIDUAL_GATE * tol,
    );
    gate(
        checks,
        "decomp.excess_risk_stationarity_gap",
        worst_station,
        ROUTE_GATE * tol,
    );
    gate(
        checks,
        "decomp.noise_split_residual",
        worst_noise,
        RESIDUAL_GATE * tol,
    );
    gate(
        checks,
        "decomp.noise_spread_route_agreement",
        worst_noise_route,
        ROUTE_GATE * tol,
    );
    if has_linear_odd {
        gate(
            checks,
            "decomp.linear_odd_residual",
            worst_lol,
            RESIDUAL_GATE * tol,
        );
        gate(
            checks,
            "decomp.linear_odd_route_agreement",
            worst_lol_route,
            ROUTE_GATE * tol,
        );
    } else {
        let refusal = linear_odd_decomposition(loss, &one_point_instance()?, &unit_label()?, false);
        push_check(
            checks,
            "decomp.linear_odd_refused_without_linear_odd_part",
            matches!(refusal, Err(Error::NoLinearOddPart { .. })),
            0.0,
            None,
        );
    }
    Ok(())
}

fn one_point_instance() -> Result<MarginSampleMatrix, Error> {
    MarginSampleMatrix::new(2, 1, vec![0.5, -0.25])
}

fn unit_label() -> Result<Targets, Error> {
    Targets::labels(vec![1.0])
}

fn suite_ensemble(
    bundle: &LinkBundle,
    tol: f64,
    seed: u64,
    checks: &mut Vec<CheckOutcome>,
) -> Result<(), Error> {
    let loss = bundle.loss();
    let symmetric = bundle.is_gradient_symmetric();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
    let mut worst_residual = 0.0f64;
    let mut worst_improvement = f64::NEG_INFINITY;
    let mut worst_label_free = 0.0f64;
    let mut worst_additive = 0.0f64;
    let mut worst_centroid_mean = 0.0f64;
    let mut worst_centroid = 0.0f64;

    for _ in 0..25 {
        let models = rng.gen_range(2..=8);
        let points = rng.gen_range(1..=12);
        let margins: Vec<f64> = (0..models * points)
            .map(|_| rng.gen_range(-3.0..3.0))
            .collect();
        let members = MarginSampleMatrix::new(models, points, margins)?;
        let labels: Vec<f64> = (0..points)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let targets = Targets::labels(labels)?;

        let mean = margin_ambiguity(loss, &members, &targets, false)?;
        worst_residual = worst_residual.max(relative(mean.residual, mean.mean_member_risk));
        worst_improvement = worst_improvement.max(mean.ensemble_risk - mean.mean_member_risk);

        let combined = centroid_combine(bundle, &members)?;
        let central = members.central_margins();
        let deviation = combined
            .margins
            .iter()
            .zip(&central)
            .map(|(c, m)| (c - m).abs())
            .fold(0.0f64, f64::max);
        worst_centroid_mean = worst_centroid_mean.max(deviation);

        let centroid = centroid_ambiguity(bundle, &members, &targets, false)?;
        worst_centroid = worst_centroid.max(relative(centroid.residual, centroid.mean_member_risk));

        if symmetric {
            let label_free = gradient_symmetric_ambiguity(loss, &members, &targets, false)?;
            worst_label_free = worst_label_free.max((label_free.ambiguity - mean.ambiguity).abs());
            let additive = additive_ambiguity(loss, &members, &targets, false)?;
            worst_additive =
                worst_additive.max(relative(additive.residual, additive.mean_member_risk));
        }
    }

    gate(
        checks,
        "ensemble.averaging_residual",
        worst_residual,
        RESIDUAL_GATE * tol,
    );
    push_check(
        checks,
        "ensemble.never_worse_than_mean_member",
        worst_improvement <= 1e-12,
        worst_improvement,
        Some(1e-12),
    );
    gate(
        checks,
        "ensemble.centroid_residual",
        worst_centroid,
        ROUTE_GATE * tol,
    );
    if symmetric {
        gate(
            checks,
            "ensemble.label_free_matches_labelful",
            worst_label_free,
            ROUTE_GATE * tol,
        );
        gate(
            checks,
            "ensemble.additive_residual",
            worst_additive,
            RESIDUAL_GATE * tol,
        );
        gate(
            checks,
            "ensemble.centroid_equals_mean",
            worst_centroid_mean,
            ROUTE_GATE * tol,
        );
    } else {
        let members = MarginSampleMatrix::new(2, 1, vec![0.0, 2.0])?;
        let targets = Targets::labels(vec![1.0])?;
        let refused = additive_ambiguity(loss, &members, &targets, false);
        push_check(
            checks,
            "ensemble.additive_refused_without_symmetry",
            matches!(refused, Err(Error::NotGradientSymmetric { .. })),
            0.0,
            None,
        );
        let refused = gradient_symmetric_ambiguity(loss, &members, &targets, false);
        push_check(
            checks,
            "ensemble.label_free_refused_without_symmetry",
            matches!(refused, Err(Error::NotGradientSymmetric { .. })),
            0.0,
            None,
        );
        // On {0, 2} the dual average must bend away from the plain mean.
        let combined = centroid_combine(bundle, &members)?;
        let bend = (combined.margins[0] - 1.0).abs();
        push_check(
            checks,
            "ensemble.centroid_bends_away_from_mean",
            bend > DETECTION_FLOOR,
            bend,
            Some(DETECTION_FLOOR),
        );
    }
    Ok(())
}

// ─────────────────────────────────────────────────────────────────────────────
// diagnose
// ─────────────────────────────────────────────────────────────────────────────

struct SyntheticSpec {
    kind: SyntheticKind,
    n: usize,
    dims: usize,
    separation: f64,
}

fn parse_synthetic(spec: &str) -> Result<SyntheticSpec, Error> {
    let (name, rest) = spec.split_once(':').ok_or_else(|| {
        Error::InvalidInput(format!(
            "synthetic spec {spec:?} must look like kind:n=2000,sep=2[,dims=2]"
        ))
    })?;
    let kind = SyntheticKind::parse(name)?;
    let mut n = None;
    let mut separation = None;
    let mut dims = 2usize;
    for pair in rest.split(',') {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!("malformed synthetic parameter {pair:?}"))
        })?;
        let parse_err = || {
            Error::InvalidInput(format!(
                "synthetic parameter {key}={value:?} is not a number"
            ))
        };
        match key {
            "n" => n = Some(value.parse().map_err(|_| parse_err())?),
            "sep" => separation = Some(value.parse().map_err(|_| parse_err())?),
            "dims" => dims = value.parse().map_err(|_| parse_err())?,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown synthetic parameter {other:?} (expected n, sep, dims)"
                )))
            }
        }
    }
    let n = n.ok_or_else(|| Error::InvalidInput("synthetic spec needs n=...".to_string()))?;
    let separation = separation
        .ok_or_else(|| Error::InvalidInput("synthetic spec needs sep=...".to_string()))?;
    Ok(SyntheticSpec {
        kind,
        n,
        dims,
        separation,
    })
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<i32, Error> {
    let start = Instant::now();
    let seed = resolve_seed(args.common.seed)?;
    let tol = check_tol(args.common.tol)?;
    let bundle = LinkBundle::new(MarginLoss::from_spec(&args.common.loss)?)?;
    let loss = bundle.loss();

    let (data, source) = match (&args.data, &args.synthetic) {
        (Some(path), None) => {
            let mut data = LabeledDataset::read_csv(File::open(path)?)?;
            data.split_shuffled(seed, 0.5)?;
            (data, format!("csv:{}", path.display()))
        }
        (None, Some(spec)) => {
            let s = parse_synthetic(spec)?;
            let data = make_synthetic(s.kind, s.n, s.dims, s.separation, seed)?;
            (data, format!("synthetic:{spec}"))
        }
        _ => {
            return Err(Error::InvalidInput(
                "exactly one of --data or --synthetic is required".to_string(),
            ))
        }
    };
    if args.require_noise && !data.has_posteriors() {
        return Err(Error::InvalidInput(
            "--require-noise: the dataset carries no posterior column, so the noise \
             term cannot be identified"
                .to_string(),
        ));
    }

    let mut echo = BTreeMap::new();
    echo.insert("loss".to_string(), args.common.loss.clone());
    if let Some(path) = &args.data {
        echo.insert("data".to_string(), path.display().to_string());
    }
    if let Some(spec) = &args.synthetic {
        echo.insert("synthetic".to_string(), spec.clone());
    }
    echo.insert("models".to_string(), format!("{}", args.models));
    echo.insert(
        "learning_rate".to_string(),
        format!("{}", args.learning_rate),
    );
    echo.insert("iterations".to_string(), format!("{}", args.iterations));
    echo.insert("l2_penalty".to_string(), format!("{}", args.l2_penalty));
    echo.insert("init_scale".to_string(), format!("{}", args.init_scale));
    echo.insert("per_point".to_string(), format!("{}", args.per_point));
    echo.insert(
        "require_noise".to_string(),
        format!("{}", args.require_noise),
    );
    echo.insert("tol".to_string(), format!("{tol}"));
    let mut rep = Report::new("diagnose", echo, seed, loss_info(&bundle));

    let config = TrainConfig {
        learning_rate: args.learning_rate,
        iterations: args.iterations,
        l2_penalty: args.l2_penalty,
        models: args.models,
        init_scale: args.init_scale,
        seed,
        threads: args.threads,
    };
    let samples = bootstrap_margins(loss, &data, &config)?;
    let eval_rows = data.rows_with(Split::Eval);
    let labels = Targets::labels(data.labels_for(&eval_rows))?;
    let posteriors = data.posteriors_for(&eval_rows);

    rep.dataset = Some(DatasetInfo {
        source,
        points: data.len(),
        dims: data.dims(),
        models: args.models,
        has_posteriors: data.has_posteriors(),
        train_points: data.rows_with(Split::Train).len(),
        eval_points: eval_rows.len(),
    });

    // Per-point rows are computed whenever either sink wants them; the JSON
    // copy is stripped later if only the CSV asked.
    let keep_rows = args.per_point || args.per_point_csv.is_some();
    let mut decs: Vec<DecompositionReport> = Vec::new();

    rep.notes.push(
        "targets for the variance decompositions are the observed labels; \
         the reported risks are empirical"
            .to_string(),
    );
    decs.push(margin_variance_decomposition(
        loss, &samples, &labels, keep_rows,
    )?);

    if bundle.is_gradient_symmetric() {
        decs.push(bias_variance_decomposition(
            loss, &samples, &labels, keep_rows,
        )?);
    } else {
        rep.notes.push(format!(
            "{} is not gradient-symmetric, so the label-free variance route does not apply",
            loss.name()
        ));
    }

    let split = even_odd_split(loss, Grid::default_probe(), loss.default_symmetry_tol());
    if split.odd_slope.is_some() {
        decs.push(linear_odd_decomposition(
            loss, &samples, &labels, keep_rows,
        )?);
    } else {
        rep.notes.push(format!(
            "{} has no linear odd part, so the even/odd decomposition does not apply",
            loss.name()
        ));
    }

    if let Some(posteriors) = &posteriors {
        decs.push(excess_risk_decomposition(
            &bundle, &samples, posteriors, keep_rows,
        )?);
        let central = samples.central_margins();
        decs.push(noise_bias_split(&bundle, &central, posteriors, keep_rows)?);
    } else {
        rep.notes.push(
            "the dataset carries no posterior column; noise-aware decompositions skipped \
             (pass --require-noise to make this an error)"
                .to_string(),
        );
    }

    let mut checks = Vec::new();
    for d in &decs {
        gate(
            &mut checks,
            &format!("diagnose.residual.{}", d.id),
            relative(d.residual, d.expected_risk),
            RESIDUAL_GATE * tol,
        );
    }

    if let Some(path) = &args.per_point_csv {
        write_per_point_csv(&decs, path)?;
        eprintln!("  per-point components written to {}", path.display());
    }
    if !args.per_point {
        for d in &mut decs {
            d.per_point = None;
        }
    }
    rep.decompositions = decs;
    rep.checks = checks;

    finish(rep, &args.common, start)
}

/// Long-format CSV so every decomposition shares one fixed header.
fn write_per_point_csv(decs: &[DecompositionReport], path: &std::path::Path) -> Result<(), Error> {
    let mut text = String::from("decomposition,point,component,value\n");
    for d in decs {
        let Some(rows) = &d.per_point else { continue };
        for row in rows {
            text.push_str(&format!(
                "{},{},expected_risk,{}\n",
                d.id, row.point, row.expected_risk
            ));
            for (component, value) in &row.components {
                text.push_str(&format!("{},{},{},{}\n", d.id, row.point, component, value));
            }
        }
    }
    report::write_atomic(text.as_bytes(), Some(path))?;
    Ok(())
}

// ─────────────────────────────────────────────────────────────────────────────
// ensemble
// ─────────────────────────────────────────────────────────────────────────────

fn cmd_ensemble(args: EnsembleArgs) -> Result<i32, Error> {
    let start = Instant::now();
    let seed = resolve_seed(args.common.seed)?;
    let tol = check_tol(args.common.tol)?;
    let bundle = LinkBundle::new(MarginLoss::from_spec(&args.common.loss)?)?;
    let loss = bundle.loss();

    let table = read_members_csv(File::open(&args.members)?)?;
    let Some(targets) = table.labels else {
        return Err(Error::InvalidInput(
            "the member CSV has no label column; ambiguity decompositions need targets".to_string(),
        ));
    };
    let members = table.members;

    let mut echo = BTreeMap::new();
    echo.insert("loss".to_string(), args.common.loss.clone());
    echo.insert("members".to_string(), args.members.display().to_string());
    echo.insert("combiner".to_string(), args.combiner.name().to_string());
    echo.insert("per_point".to_string(), format!("{}", args.per_point));
    echo.insert("tol".to_string(), format!("{tol}"));
    let mut rep = Report::new("ensemble", echo, seed, loss_info(&bundle));
    rep.dataset = Some(DatasetInfo {
        source: format!("members:{}", args.members.display()),
        points: members.points(),
        dims: 0,
        models: members.models(),
        has_posteriors: false,
        train_points: 0,
        eval_points: members.points(),
    });

    let mut checks = Vec::new();
    match args.combiner {
        CombinerArg::Mean => {
            let labelful = margin_ambiguity(loss, &members, &targets, args.per_point)?;
            gate(
                &mut checks,
                "ensemble.averaging_residual",
                relative(labelful.residual, labelful.mean_member_risk),
                RESIDUAL_GATE * tol,
            );
            if bundle.is_gradient_symmetric() {
                let label_free =
                    gradient_symmetric_ambiguity(loss, &members, &targets, args.per_point)?;
                gate(
                    &mut checks,
                    "ensemble.label_free_matches_labelful",
                    (label_free.ambiguity - labelful.ambiguity).abs(),
                    ROUTE_GATE * tol,
                );
                rep.ensembles.push(label_free);
            } else {
                rep.notes.push(format!(
                    "{} is not gradient-symmetric, so the label-free ambiguity route \
                     does not apply",
                    loss.name()
                ));
            }
            rep.ensembles.insert(0, labelful);
        }
        CombinerArg::Additive => {
            // Refused with a configuration error for asymmetric losses.
            let additive = additive_ambiguity(loss, &members, &targets, args.per_point)?;
            gate(
                &mut checks,
                "ensemble.additive_residual",
                relative(additive.residual, additive.mean_member_risk),
                RESIDUAL_GATE * tol,
            );
            rep.ensembles.push(additive);
        }
        CombinerArg::Centroid => {
            let combined = centroid_combine(&bundle, &members)?;
            let central = members.central_margins();
            let deviation = combined
                .margins
                .iter()
                .zip(&central)
                .map(|(c, m)| (c - m).abs())
                .fold(0.0f64, f64::max);
            if bundle.is_gradient_symmetric() {
                gate(
                    &mut checks,
                    "ensemble.centroid_equals_mean",
                    deviation,
                    ROUTE_GATE * tol,
                );
            } else {
                push_check(
                    &mut checks,
                    "ensemble.centroid_deviation_from_mean",
                    true,
                    deviation,
                    None,
                );
                rep.notes.push(format!(
                    "centroid and arithmetic-mean margins differ by up to {deviation:.6e}; \
                     for a loss without gradient symmetry that gap is structural"
                ));
            }
            if combined.weighted_extension {
                rep.notes.push(
                    "member weights are not uniform; the centroid is the weighted \
                     extension of the dual average"
                        .to_string(),
                );
            }
            let centroid = centroid_ambiguity(&bundle, &members, &targets, args.per_point)?;
            gate(
                &mut checks,
                "ensemble.centroid_residual",
                relative(centroid.residual, centroid.mean_member_risk),
                ROUTE_GATE * tol,
            );
            rep.ensembles.push(centroid);
        }
    }
    rep.checks = checks;

    finish(rep, &args.common, start)
}
