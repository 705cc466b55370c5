//! Batch identification by gradient descent.
//!
//! The residual is `e = y_model - y_target` and the windowed error is
//!
//! ```text
//! E(k) = 1/(2T) * sum_{t=0..T} e(k+t)^2
//! ```
//!
//! For a single sample the gradient chain is
//!
//! ```text
//! dE/dc_ij = e * (d_i - y) / sum(y') * dy'_i/dx'_ij * dmu_ij/dc_ij
//! dE/ds_ij = e * (d_i - y) / sum(y') * dy'_i/dx'_ij * dmu_ij/ds_ij
//! dE/dd_i  = e * y'_i / sum(y')
//! ```
//!
//! where `dy'_i/dx'_ij` is the exact derivative of the firing-strength fold.
//! Training walks the data in order and takes one step on every sample whose
//! residual exceeds `epsilon`, repeating epochs until an epoch makes no update
//! or `max_epochs` is reached. Several seeded starting points may be tried and
//! the one with the lowest final error is kept.

use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TimeSeriesDataset;
use crate::io::{fmt_f64, write_csv};
use crate::membership::GaussianMF;
use crate::model::{firing_strength_grad, FuzzyModel, ModelError, Normalization, Rule};
use crate::norms::CompositionKind;
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("window [{start}, {start}+{horizon}] exceeds dataset of {len} samples")]
    WindowOutOfRange { start: usize, horizon: usize, len: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("rules per input must be at least 1")]
    NoRules,
    #[error("dataset has {got} inputs, model expects {expected}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("error became non-finite in restart {restart}, epoch {epoch}")]
    NonFinite { restart: usize, epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Step lengths for centers, spreads and consequents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub alpha_c: f64,
    pub alpha_delta: f64,
    pub alpha_d: f64,
}

impl LearningRates {
    pub fn uniform(alpha: f64) -> Self {
        Self { alpha_c: alpha, alpha_delta: alpha, alpha_d: alpha }
    }

    fn validate(&self) -> Result<(), TrainError> {
        for (name, v) in [("alpha_c", self.alpha_c), ("alpha_delta", self.alpha_delta), ("alpha_d", self.alpha_d)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(TrainError::Config(format!("{name} must be finite and positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for LearningRates {
    fn default() -> Self {
        Self::uniform(0.01)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub rates: LearningRates,
    /// Residual magnitude below which a sample triggers no update.
    pub epsilon: f64,
    /// Reporting window `T`; `None` spans the whole training set.
    pub horizon: Option<usize>,
    pub max_epochs: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Spread floor as a fraction of the smallest observed input range.
    pub spread_floor_fraction: f64,
    /// Train on min-max normalized inputs and outputs.
    pub normalize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rates: LearningRates::default(),
            epsilon: 1e-3,
            horizon: None,
            max_epochs: 500,
            restarts: 1,
            seed: 0,
            spread_floor_fraction: 1e-4,
            normalize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.rates.validate()?;
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(TrainError::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.horizon == Some(0) {
            return Err(TrainError::Config("horizon must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max_epochs must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(TrainError::Config("restarts must be at least 1".into()));
        }
        if !(self.spread_floor_fraction > 0.0 && self.spread_floor_fraction.is_finite()) {
            return Err(TrainError::Config("spread_floor_fraction must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// An epoch completed with every residual within epsilon.
    Converged,
    MaxEpochs,
}

/// Per-restart error history.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartRun {
    /// `E` before training followed by `E` after each epoch.
    pub errors: Vec<f64>,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub runs: Vec<RestartRun>,
    pub winner: usize,
    /// RMS residual of the winning model on the training data, model units.
    pub final_rms: f64,
}

impl TrainReport {
    /// The winner's error history.
    pub fn epoch_errors(&self) -> &[f64] {
        &self.runs[self.winner].errors
    }

    pub fn epochs_used(&self) -> usize {
        self.epoch_errors().len() - 1
    }

    pub fn termination(&self) -> Termination {
        self.runs[self.winner].termination
    }

    /// Rows of `(restart, epoch, E)`.
    pub fn write_convergence_csv<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let rows = self.runs.iter().enumerate().flat_map(|(r, run)| {
            run.errors.iter().enumerate().map(move |(epoch, e)| vec![r.to_string(), epoch.to_string(), fmt_f64(*e)])
        });
        write_csv(writer, &["restart", "epoch", "E"], rows)
    }
}

/// Error gradients for one sample. Antecedent entries are row-major `r x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub arity: usize,
    pub d_center: Vec<f64>,
    pub d_spread: Vec<f64>,
    pub d_consequent: Vec<f64>,
    /// The residual `e`.
    pub error: f64,
    pub output: f64,
}

impl Gradients {
    pub fn zeros(rules: usize, arity: usize) -> Self {
        Self {
            arity,
            d_center: vec![0.0; rules * arity],
            d_spread: vec![0.0; rules * arity],
            d_consequent: vec![0.0; rules],
            error: 0.0,
            output: 0.0,
        }
    }

    pub fn center(&self, rule: usize, input: usize) -> f64 {
        self.d_center[rule * self.arity + input]
    }

    pub fn spread(&self, rule: usize, input: usize) -> f64 {
        self.d_spread[rule * self.arity + input]
    }

    pub fn is_finite(&self) -> bool {
        self.d_center.iter().chain(&self.d_spread).chain(&self.d_consequent).all(|v| v.is_finite())
    }
}

/// `E(k) = 1/(2T) sum_{t=0..T} e(k+t)^2`. For `T = 0` the divisor is 2, the
/// single-sample error whose gradient [`gradients`] returns.
pub fn batch_error(
    model: &FuzzyModel,
    data: &TimeSeriesDataset,
    start: usize,
    horizon: usize,
) -> Result<f64, TrainError> {
    if start + horizon >= data.len() {
        return Err(TrainError::WindowOutOfRange { start, horizon, len: data.len() });
    }
    let mut sum = 0.0;
    for k in start..=start + horizon {
        let (y, _) = model.predict(&data.inputs[k])?;
        let e = y - data.targets[k];
        sum += e * e;
    }
    Ok(sum / (2.0 * horizon.max(1) as f64))
}

/// Root mean square of model residuals over the whole dataset.
pub fn dataset_rms(model: &FuzzyModel, data: &TimeSeriesDataset) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut sum = 0.0;
    for (x, y) in data.samples() {
        let e = model.predict(x)?.0 - y;
        sum += e * e;
    }
    Ok((sum / data.len() as f64).sqrt())
}

/// Reusable buffers for [`gradients_into`].
#[derive(Debug, Default)]
pub struct GradientWorkspace {
    mu: Vec<f64>,
    dmu_dc: Vec<f64>,
    dmu_ds: Vec<f64>,
    strengths: Vec<f64>,
    fold_grad: Vec<f64>,
    scratch: Vec<f64>,
}

/// Gradient of the single-sample error `e^2 / 2` at `(x, target)`.
pub fn gradients(model: &FuzzyModel, x: &[f64], target: f64) -> Result<Gradients, TrainError> {
    let mut out = Gradients::zeros(model.rules().len(), model.input_arity());
    gradients_into(model, x, target, &mut out, &mut GradientWorkspace::default())?;
    Ok(out)
}

/// As [`gradients`], writing into preallocated storage.
pub fn gradients_into(
    model: &FuzzyModel,
    x: &[f64],
    target: f64,
    out: &mut Gradients,
    ws: &mut GradientWorkspace,
) -> Result<(), TrainError> {
    let n = model.input_arity();
    let r = model.rules().len();
    if x.len() != n {
        return Err(ModelError::ArityMismatch { expected: n, got: x.len() }.into());
    }
    let kind = model.composition();
    ws.mu.clear();
    ws.dmu_dc.clear();
    ws.dmu_ds.clear();
    ws.strengths.clear();
    ws.fold_grad.resize(r * n, 0.0);
    for (i, rule) in model.rules().iter().enumerate() {
        for (mf, &xj) in rule.antecedents().iter().zip(x) {
            let mu = mf.mu(xj);
            let dx = xj - mf.center();
            let s2 = mf.spread() * mf.spread();
            ws.mu.push(mu);
            ws.dmu_dc.push(mu * dx / s2);
            ws.dmu_ds.push(mu * dx * dx / (s2 * mf.spread()));
        }
        let strength = firing_strength_grad(
            kind,
            rule.confidence(),
            &ws.mu[i * n..(i + 1) * n],
            &mut ws.fold_grad[i * n..(i + 1) * n],
            &mut ws.scratch,
        )
        .map_err(ModelError::from)?;
        ws.strengths.push(strength);
    }
    let sum: f64 = ws.strengths.iter().sum();
    let output = crate::model::defuzzify(&ws.strengths, &model.consequent_centers())?;
    let e = output - target;
    out.arity = n;
    out.d_center.resize(r * n, 0.0);
    out.d_spread.resize(r * n, 0.0);
    out.d_consequent.resize(r, 0.0);
    for (i, rule) in model.rules().iter().enumerate() {
        let factor = e * (rule.consequent_center() - output) / sum;
        for j in 0..n {
            let chain = factor * ws.fold_grad[i * n + j];
            out.d_center[i * n + j] = chain * ws.dmu_dc[i * n + j];
            out.d_spread[i * n + j] = chain * ws.dmu_ds[i * n + j];
        }
        out.d_consequent[i] = e * ws.strengths[i] / sum;
    }
    out.error = e;
    out.output = output;
    Ok(())
}

/// In-place descent step on centers, spreads and consequents.
pub fn apply_update(model: &mut FuzzyModel, grads: &Gradients, rates: &LearningRates, spread_floor: f64) {
    let n = model.input_arity();
    for (i, rule) in model.rules_mut().iter_mut().enumerate() {
        for (j, mf) in rule.antecedents_mut().iter_mut().enumerate() {
            let k = i * n + j;
            mf.shift(rates.alpha_c * grads.d_center[k], rates.alpha_delta * grads.d_spread[k], spread_floor);
        }
        let d = rule.consequent_center() - rates.alpha_d * grads.d_consequent[i];
        rule.set_consequent_center(d);
    }
}

/// [`apply_update`] on a copy.
pub fn update_step(model: &FuzzyModel, grads: &Gradients, rates: &LearningRates, spread_floor: f64) -> FuzzyModel {
    let mut next = model.clone();
    apply_update(&mut next, grads, rates, spread_floor);
    next
}

/// Identified model together with its report.
#[derive(Debug, Clone)]
pub struct Identified {
    pub model: FuzzyModel,
    pub report: TrainReport,
    /// Spread floor used during training, model units.
    pub spread_floor: f64,
}

/// Grid-initialize a model with `rules_per_input` Gaussians per input and
/// train it on `data` (physical units), keeping the best of
/// `config.restarts` starts.
pub fn identify(
    data: &TimeSeriesDataset,
    rules_per_input: usize,
    composition: CompositionKind,
    config: &TrainConfig,
) -> Result<Identified, TrainError> {
    config.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if rules_per_input == 0 {
        return Err(TrainError::NoRules);
    }
    let normalization = config.normalize.then(|| Normalization::fit(&data.inputs, &data.targets));
    let working = match &normalization {
        Some(norm) => data.normalized(norm),
        None => data.clone(),
    };
    let ranges = input_ranges(&working);
    let min_range = ranges.iter().map(|(lo, hi)| hi - lo).filter(|r| *r > 0.0).fold(f64::INFINITY, f64::min);
    let spread_floor = config.spread_floor_fraction * if min_range.is_finite() { min_range } else { 1.0 };

    let results: Vec<Result<(FuzzyModel, RestartRun), TrainError>> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, restart as u64));
            let jitter = if restart > 0 { 0.1 } else { 0.0 };
            let init = grid_model(&working, &ranges, rules_per_input, composition, jitter, &mut rng)?;
            train_from(init, &working, config, spread_floor).map_err(|e| match e {
                TrainError::NonFinite { epoch, .. } => TrainError::NonFinite { restart, epoch },
                other => other,
            })
        })
        .collect();

    let mut runs = Vec::with_capacity(results.len());
    let mut models = Vec::with_capacity(results.len());
    for result in results {
        let (model, run) = result?;
        models.push(model);
        runs.push(run);
    }
    let winner = runs
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.errors.last().unwrap().total_cmp(b.errors.last().unwrap()))
        .map(|(i, _)| i)
        .expect("at least one restart");
    let mut model = models.swap_remove(winner);
    let final_rms = dataset_rms(&model, &working)?;
    if let Some(norm) = normalization {
        model = model.with_normalization(norm)?;
    }
    Ok(Identified { model, report: TrainReport { runs, winner, final_rms }, spread_floor })
}

/// Run the per-sample training loop from `model` on `data` (model units).
pub fn train_from(
    mut model: FuzzyModel,
    data: &TimeSeriesDataset,
    config: &TrainConfig,
    spread_floor: f64,
) -> Result<(FuzzyModel, RestartRun), TrainError> {
    config.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if data.arity() != model.input_arity() {
        return Err(TrainError::ArityMismatch { expected: model.input_arity(), got: data.arity() });
    }
    let horizon = config.horizon.unwrap_or(usize::MAX).min(data.len() - 1);
    let report_error = |m: &FuzzyModel, epoch: usize| -> Result<f64, TrainError> {
        let e = batch_error(m, data, 0, horizon)?;
        if e.is_finite() {
            Ok(e)
        } else {
            Err(TrainError::NonFinite { restart: 0, epoch })
        }
    };

    let mut errors = vec![report_error(&model, 0)?];
    let mut grads = Gradients::zeros(model.rules().len(), model.input_arity());
    let mut ws = GradientWorkspace::default();
    let mut termination = Termination::MaxEpochs;
    for epoch in 1..=config.max_epochs {
        let mut updates = 0usize;
        for (x, y) in data.samples() {
            gradients_into(&model, x, y, &mut grads, &mut ws)?;
            if grads.error.abs() > config.epsilon {
                if !grads.is_finite() {
                    return Err(TrainError::NonFinite { restart: 0, epoch });
                }
                apply_update(&mut model, &grads, &config.rates, spread_floor);
                updates += 1;
            }
        }
        errors.push(report_error(&model, epoch)?);
        if updates == 0 {
            termination = Termination::Converged;
            break;
        }
    }
    Ok((model, RestartRun { errors, termination }))
}

fn input_ranges(data: &TimeSeriesDataset) -> Vec<(f64, f64)> {
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); data.arity()];
    for x in &data.inputs {
        for (r, &v) in ranges.iter_mut().zip(x) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    ranges
}

/// Full grid of `m^n` rules. Centers are evenly spaced over each input's
/// range with spread equal to half the center gap; each consequent is the
/// target of the sample closest to the rule's center vector. `jitter`
/// perturbs centers uniformly by that fraction of the gap.
pub fn grid_model(
    data: &TimeSeriesDataset,
    ranges: &[(f64, f64)],
    m: usize,
    composition: CompositionKind,
    jitter: f64,
    rng: &mut impl Rng,
) -> Result<FuzzyModel, TrainError> {
    let n = ranges.len();
    let axes: Vec<(Vec<f64>, f64)> = ranges
        .iter()
        .map(|&(lo, hi)| {
            let range = hi - lo;
            if m == 1 {
                let spread = if range > 0.0 { range / 2.0 } else { 1.0 };
                (vec![0.5 * (lo + hi)], spread)
            } else if range > 0.0 {
                let gap = range / (m - 1) as f64;
                ((0..m).map(|k| lo + gap * k as f64).collect(), gap / 2.0)
            } else {
                (vec![lo; m], 1.0)
            }
        })
        .collect();

    let count = m.checked_pow(n as u32).ok_or_else(|| TrainError::Config(format!("{m}^{n} rules overflow")))?;
    let mut rules = Vec::with_capacity(count);
    let mut digits = vec![0usize; n];
    for index in 0..count {
        let mut rest = index;
        for j in (0..n).rev() {
            digits[j] = rest % m;
            rest /= m;
        }
        let mut centers = Vec::with_capacity(n);
        let mut antecedents = Vec::with_capacity(n);
        for (j, (grid, spread)) in axes.iter().enumerate() {
            let gap = 2.0 * spread;
            let mut c = grid[digits[j]];
            if jitter > 0.0 {
                c += rng.random_range(-jitter..=jitter) * gap;
            }
            centers.push(c);
            antecedents.push(GaussianMF::new(c, *spread).map_err(ModelError::from)?);
        }
        let d = nearest_target(data, &centers);
        rules.push(Rule::new(antecedents, d, 1.0)?);
    }
    Ok(FuzzyModel::new(composition, rules)?)
}

fn nearest_target(data: &TimeSeriesDataset, point: &[f64]) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for (x, y) in data.samples() {
        let d2: f64 = x.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best.0 {
            best = (d2, y);
        }
    }
    best.1
}
