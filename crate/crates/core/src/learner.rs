//! Datasets, a small linear learner, and bootstrap model sampling.
//!
//! The learner exists to produce realistic margin samples for the
//! decompositions, not to compete on accuracy: full-batch gradient descent
//! with backtracking on a linear model is enough to get well-behaved,
//! perfectly reproducible margins. Every random draw is tied to one seed;
//! bootstrap model i always reads stream i + 1 of that seed, so results are
//! identical no matter how many threads run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::decomp::MarginSampleMatrix;
use crate::error::{Error, Result};
use crate::loss::MarginLoss;
use crate::numeric::sigmoid;
use crate::tolerances::{
    BACKTRACK_LIMIT, DEFAULT_ITERATIONS, DEFAULT_L2_PENALTY, DEFAULT_LEARNING_RATE, DEFAULT_MODELS,
    RESAMPLE_REDRAW_LIMIT,
};

// ─────────────────────────────────────────────────────────────────────────────
// Datasets
// ─────────────────────────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

/// A binary-labeled dataset with optional ground-truth posteriors and a
/// train/eval split tag per row. Features are stored flat, row-major.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    features: Vec<f64>,
    dims: usize,
    labels: Vec<f64>,
    posteriors: Option<Vec<f64>>,
    split: Vec<Split>,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        dims: usize,
        labels: Vec<f64>,
        posteriors: Option<Vec<f64>>,
    ) -> Result<LabeledDataset> {
        if dims == 0 {
            return Err(Error::InvalidInput("dataset needs dims >= 1".to_string()));
        }
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset has no rows".to_string()));
        }
        if features.len() != n * dims {
            return Err(Error::InvalidInput(format!(
                "{} feature values for {n} rows of {dims} dims",
                features.len()
            )));
        }
        if let Some(bad) = features.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "dataset features".to_string(),
                input: *bad,
            });
        }
        if let Some(bad) = labels.iter().find(|y| **y != 1.0 && **y != -1.0) {
            return Err(Error::InvalidInput(format!(
                "labels must be +1 or -1, got {bad}"
            )));
        }
        if let Some(ps) = &posteriors {
            if ps.len() != n {
                return Err(Error::InvalidInput(format!(
                    "{} posteriors for {n} rows",
                    ps.len()
                )));
            }
            if let Some(bad) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidInput(format!(
                    "posterior {bad} outside [0, 1]"
                )));
            }
        }
        Ok(LabeledDataset {
            features,
            dims,
            labels,
            posteriors,
            split: vec![Split::Train; n],
        })
    }

    /// Read `f1,...,fd,y[,p]` rows. Every row starts tagged as training
    /// data; call one of the split methods afterwards.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<LabeledDataset> {
        let mut csv_reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = csv_reader.headers()?.clone();
        let has_posterior = headers.iter().last() == Some("p");
        let dims = headers
            .len()
            .checked_sub(1 + usize::from(has_posterior))
            .filter(|d| *d > 0)
            .ok_or_else(|| {
                Error::InvalidInput("dataset CSV needs f1,...,fd,y[,p] columns".to_string())
            })?;
        for (k, name) in headers.iter().take(dims).enumerate() {
            let expected = format!("f{}", k + 1);
            if name != expected {
                return Err(Error::InvalidInput(format!(
                    "dataset CSV column {} is named {name:?}, expected {expected:?}",
                    k + 1
                )));
            }
        }
        if headers.get(dims) != Some("y") {
            return Err(Error::InvalidInput(format!(
                "dataset CSV column {} must be named \"y\"",
                dims + 1
            )));
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut posteriors = Vec::new();
        for record in csv_reader.records() {
            let record = record?;
            for field in record.iter().take(dims) {
                features.push(parse_float(field, "feature")?);
            }
            labels.push(parse_float(&record[dims], "label")?);
            if has_posterior {
                posteriors.push(parse_float(&record[dims + 1], "posterior")?);
            }
        }
        LabeledDataset::new(features, dims, labels, has_posterior.then_some(posteriors))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn feature_row(&self, row: usize) -> &[f64] {
        &self.features[row * self.dims..(row + 1) * self.dims]
    }

    pub fn label(&self, row: usize) -> f64 {
        self.labels[row]
    }

    pub fn posterior(&self, row: usize) -> Option<f64> {
        self.posteriors.as_ref().map(|ps| ps[row])
    }

    pub fn has_posteriors(&self) -> bool {
        self.posteriors.is_some()
    }

    /// Tag the first half as training data, the rest for evaluation.
    pub fn split_half(&mut self) {
        let cut = self.len() / 2;
        for (i, tag) in self.split.iter_mut().enumerate() {
            *tag = if i < cut { Split::Train } else { Split::Eval };
        }
    }

    /// Seeded random split: a fraction of rows becomes training data.
    pub fn split_shuffled(&mut self, seed: u64, train_fraction: f64) -> Result<()> {
        if !(0.0 < train_fraction && train_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "train fraction {train_fraction} outside (0, 1)"
            )));
        }
        let n = self.len();
        let take = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = (rng.gen::<f64>() * (i + 1) as f64) as usize;
            order.swap(i, j);
        }
        for tag in self.split.iter_mut() {
            *tag = Split::Eval;
        }
        for &row in order.iter().take(take) {
            self.split[row] = Split::Train;
        }
        Ok(())
    }

    pub fn rows_with(&self, tag: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == tag).collect()
    }

    pub fn labels_for(&self, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn posteriors_for(&self, rows: &[usize]) -> Option<Vec<f64>> {
        self.posteriors
            .as_ref()
            .map(|ps| rows.iter().map(|&i| ps[i]).collect())
    }
}

fn parse_float(field: &str, what: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        Error::InvalidInput(format!("dataset CSV has a non-numeric {what}: {field:?}"))
    })
}

// ─────────────────────────────────────────────────────────────────────────────
// Synthetic generators
// ─────────────────────────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Two unit-variance Gaussians at ±separation along the first axis;
    /// the true posterior is sigmoid(2·separation·x1).
    TwoGaussians,
    /// Standard normal features with labels drawn from
    /// sigmoid(w·x), where the hidden w has norm `separation`.
    LogisticGroundTruth,
}

impl SyntheticKind {
    pub fn parse(name: &str) -> Result<SyntheticKind> {
        match name {
            "two_gaussians" => Ok(SyntheticKind::TwoGaussians),
            "logistic_ground_truth" => Ok(SyntheticKind::LogisticGroundTruth),
            other => Err(Error::InvalidInput(format!(
                "unknown synthetic dataset {other:?} \
                 (expected two_gaussians or logistic_ground_truth)"
            ))),
        }
    }
}

/// Draw a synthetic dataset with known posteriors, first half tagged for
/// training. Identical (kind, n, dims, separation, seed) inputs always
/// produce the identical dataset.
pub fn make_synthetic(
    kind: SyntheticKind,
    n: usize,
    dims: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need n >= 2 rows, got {n}")));
    }
    if dims == 0 {
        return Err(Error::InvalidInput("need dims >= 1".to_string()));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::InvalidInput(format!(
            "separation must be non-negative and finite, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    let mut posteriors = Vec::with_capacity(n);
    match kind {
        SyntheticKind::TwoGaussians => {
            for _ in 0..n {
                let y = if rng.gen::<f64>() < 0.5 { 1.0 } else { -1.0 };
                let x1 = y * separation + rng.sample::<f64, _>(StandardNormal);
                features.push(x1);
                for _ in 1..dims {
                    features.push(rng.sample::<f64, _>(StandardNormal));
                }
                labels.push(y);
                posteriors.push(sigmoid(2.0 * separation * x1));
            }
        }
        SyntheticKind::LogisticGroundTruth => {
            let mut direction: Vec<f64> = (0..dims)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = direction.iter().map(|w| w * w).sum::<f64>().sqrt();
            if norm < 1e-12 {
                return Err(Error::Numeric {
                    context: "synthetic logistic direction".to_string(),
                    detail: "drew a near-zero direction vector".to_string(),
                });
            }
            for w in direction.iter_mut() {
                *w *= separation / norm;
            }
            for _ in 0..n {
                let start = features.len();
                for _ in 0..dims {
                    features.push(rng.sample::<f64, _>(StandardNormal));
                }
                let score: f64 = direction
                    .iter()
                    .zip(&features[start..])
                    .map(|(w, x)| w * x)
                    .sum();
                let p = sigmoid(score);
                labels.push(if rng.gen::<f64>() < p { 1.0 } else { -1.0 });
                posteriors.push(p);
            }
        }
    }
    let mut data = LabeledDataset::new(features, dims, labels, Some(posteriors))?;
    data.split_half();
    Ok(data)
}

// ─────────────────────────────────────────────────────────────────────────────
// Linear models
// ─────────────────────────────────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn zeros(dims: usize) -> LinearModel {
        LinearModel {
            weights: vec![0.0; dims],
            intercept: 0.0,
        }
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.intercept
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Ridge penalty on the weights (never the intercept).
    pub l2_penalty: f64,
    /// Number of bootstrap models.
    pub models: usize,
    /// Standard deviation of the random initialization; zero starts at the
    /// origin and keeps the bootstrap sample's only randomness in the rows.
    pub init_scale: f64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            iterations: DEFAULT_ITERATIONS,
            l2_penalty: DEFAULT_L2_PENALTY,
            models: DEFAULT_MODELS,
            init_scale: 0.0,
            seed: 42,
            threads: 1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidInput(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "l2 penalty {} must be non-negative",
                self.l2_penalty
            )));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "init scale {} must be non-negative",
                self.init_scale
            )));
        }
        if self.iterations == 0 || self.models == 0 || self.threads == 0 {
            return Err(Error::InvalidInput(
                "iterations, models, and threads must all be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

fn objective(
    loss: &MarginLoss,
    data: &LabeledDataset,
    rows: &[usize],
    model: &LinearModel,
    l2: f64,
) -> f64 {
    let mut sum = 0.0;
    for &row in rows {
        sum += loss.eval(data.label(row) * model.margin(data.feature_row(row)));
    }
    sum / rows.len() as f64 + 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>()
}

fn gradient(
    loss: &MarginLoss,
    data: &LabeledDataset,
    rows: &[usize],
    model: &LinearModel,
    l2: f64,
) -> (Vec<f64>, f64) {
    let mut grad_w = vec![0.0; model.weights.len()];
    let mut grad_b = 0.0;
    let inv_n = 1.0 / rows.len() as f64;
    for &row in rows {
        let x = data.feature_row(row);
        let y = data.label(row);
        let slope = loss.grad(y * model.margin(x)) * y * inv_n;
        for (g, v) in grad_w.iter_mut().zip(x) {
            *g += slope * v;
        }
        grad_b += slope;
    }
    for (g, w) in grad_w.iter_mut().zip(&model.weights) {
        *g += l2 * w;
    }
    (grad_w, grad_b)
}

/// Full-batch gradient descent with backtracking on the given rows
/// (duplicates allowed, which is how bootstrap resamples enter).
///
/// Runs for `config.iterations` steps or until the objective stops
/// improving; a step is halved up to 30 times before the run is declared
/// converged. Non-finite objectives abort with an error.
pub fn train_linear(
    loss: &MarginLoss,
    data: &LabeledDataset,
    rows: &[usize],
    config: &TrainConfig,
    initial: Option<LinearModel>,
) -> Result<LinearModel> {
    config.validate()?;
    if rows.is_empty() {
        return Err(Error::InvalidInput("no rows to train on".to_string()));
    }
    if let Some(bad) = rows.iter().find(|r| **r >= data.len()) {
        return Err(Error::InvalidInput(format!(
            "training row {bad} out of range for {} rows",
            data.len()
        )));
    }
    let mut model = initial.unwrap_or_else(|| LinearModel::zeros(data.dims()));
    if model.weights.len() != data.dims() {
        return Err(Error::InvalidInput(format!(
            "initial model has {} weights for {} dims",
            model.weights.len(),
            data.dims()
        )));
    }
    let l2 = config.l2_penalty;
    let mut current = objective(loss, data, rows, &model, l2);
    if !current.is_finite() {
        return Err(Error::TrainingDiverged {
            iteration: 0,
            detail: format!("initial objective is {current}"),
        });
    }
    for iteration in 0..config.iterations {
        let (grad_w, grad_b) = gradient(loss, data, rows, &model, l2);
        if grad_w.iter().any(|g| !g.is_finite()) || !grad_b.is_finite() {
            return Err(Error::TrainingDiverged {
                iteration,
                detail: "non-finite gradient".to_string(),
            });
        }
        let mut step = config.learning_rate;
        let mut accepted = None;
        for _ in 0..=BACKTRACK_LIMIT {
            let candidate = LinearModel {
                weights: model
                    .weights
                    .iter()
                    .zip(&grad_w)
                    .map(|(w, g)| w - step * g)
                    .collect(),
                intercept: model.intercept - step * grad_b,
            };
            let value = objective(loss, data, rows, &candidate, l2);
            if value.is_finite() && value <= current {
                accepted = Some((candidate, value));
                break;
            }
            step *= 0.5;
        }
        let Some((next, value)) = accepted else {
            break; // no descent direction left at f64 resolution
        };
        let improved = current - value;
        model = next;
        current = value;
        if improved <= 1e-14 * current.abs().max(1.0) {
            break;
        }
    }
    Ok(model)
}

// ─────────────────────────────────────────────────────────────────────────────
// Bootstrap sampling
// ─────────────────────────────────────────────────────────────────────────────

/// Train `config.models` bootstrap models and evaluate their margins on the
/// eval split.
///
/// Model i draws its resample (and its optional random initialization) from
/// stream i + 1 of `config.seed`, so any thread count produces bit-identical
/// results. Resamples that land on a single class are redrawn, up to 100
/// attempts.
pub fn bootstrap_margins(
    loss: &MarginLoss,
    data: &LabeledDataset,
    config: &TrainConfig,
) -> Result<MarginSampleMatrix> {
    config.validate()?;
    let train_rows = data.rows_with(Split::Train);
    let eval_rows = data.rows_with(Split::Eval);
    if train_rows.is_empty() || eval_rows.is_empty() {
        return Err(Error::InvalidInput(format!(
            "bootstrap needs both splits populated (train: {}, eval: {})",
            train_rows.len(),
            eval_rows.len()
        )));
    }
    let points = eval_rows.len();
    let mut margins = vec![0.0f64; config.models * points];
    let threads = config.threads.min(config.models);
    let chunk_models = config.models.div_ceil(threads);
    let chunks: Vec<&mut [f64]> = margins.chunks_mut(chunk_models * points).collect();
    let worker = |first_model: usize, out: &mut [f64]| -> Result<()> {
        for (offset, row_out) in out.chunks_mut(points).enumerate() {
            let model_index = first_model + offset;
            let model = bootstrap_one(loss, data, &train_rows, config, model_index)?;
            for (slot, &row) in row_out.iter_mut().zip(&eval_rows) {
                *slot = model.margin(data.feature_row(row));
            }
        }
        Ok(())
    };
    if threads == 1 {
        for (k, chunk) in chunks.into_iter().enumerate() {
            worker(k * chunk_models, chunk)?;
        }
    } else {
        let worker = &worker;
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .into_iter()
                .enumerate()
                .map(|(k, chunk)| scope.spawn(move || worker(k * chunk_models, chunk)))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for result in results {
            result?;
        }
    }
    MarginSampleMatrix::new(config.models, points, margins)
}

fn bootstrap_one(
    loss: &MarginLoss,
    data: &LabeledDataset,
    train_rows: &[usize],
    config: &TrainConfig,
    model_index: usize,
) -> Result<LinearModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1 + model_index as u64);
    let n = train_rows.len();
    let mut resample = Vec::with_capacity(n);
    let mut attempts = 0;
    loop {
        attempts += 1;
        resample.clear();
        for _ in 0..n {
            let k = (rng.gen::<f64>() * n as f64) as usize;
            resample.push(train_rows[k]);
        }
        let first = data.label(resample[0]);
        if resample.iter().any(|&r| data.label(r) != first) {
            break;
        }
        if attempts >= RESAMPLE_REDRAW_LIMIT {
            return Err(Error::DegenerateResample { attempts });
        }
    }
    let initial = if config.init_scale > 0.0 {
        let weights = (0..data.dims())
            .map(|_| config.init_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let intercept = config.init_scale * rng.sample::<f64, _>(StandardNormal);
        Some(LinearModel { weights, intercept })
    } else {
        None
    };
    train_linear(loss, data, &resample, config, initial)
}
