//! Online self-learning: predict each new measurement and take one gradient
//! step whenever the residual exceeds `epsilon`.
//!
//! Models carrying a [`Normalization`](crate::model::Normalization) are
//! adapted in their normalized units; `epsilon` and step sizes refer to those
//! units while the trace records physical values.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{fmt_f64, write_csv};
use crate::model::FuzzyModel;
use crate::train::{apply_update, gradients_into, GradientWorkspace, Gradients, LearningRates, TrainError};

pub const DEFAULT_RMS_WINDOW: usize = 50;

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("stream is empty")]
    EmptyStream,
    #[error("invalid adaptation configuration: {0}")]
    Config(String),
    #[error("step {k}: {source}")]
    Step { k: usize, source: TrainError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub epsilon: f64,
    #[serde(flatten)]
    pub rates: LearningRates,
    /// Maximum number of steps; `None` runs to the end of the stream.
    pub horizon: Option<usize>,
    pub spread_floor: f64,
    pub rms_window: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            rates: LearningRates::default(),
            horizon: None,
            spread_floor: 1e-4,
            rms_window: DEFAULT_RMS_WINDOW,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<(), AdaptError> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(AdaptError::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        for (name, v) in
            [("alpha_c", self.rates.alpha_c), ("alpha_delta", self.rates.alpha_delta), ("alpha_d", self.rates.alpha_d)]
        {
            if !(v.is_finite() && v >= 0.0) {
                return Err(AdaptError::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.spread_floor.is_finite() && self.spread_floor > 0.0) {
            return Err(AdaptError::Config(format!("spread_floor must be > 0, got {}", self.spread_floor)));
        }
        if self.rms_window == 0 {
            return Err(AdaptError::Config("rms_window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub y_hat: f64,
    pub y: f64,
    pub e: f64,
    pub updated: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdaptTrace {
    pub rows: Vec<TraceRow>,
}

impl AdaptTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn update_count(&self) -> usize {
        self.rows.iter().filter(|r| r.updated).count()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.e).collect()
    }

    /// RMS of the residuals in `range`; `None` when it is empty.
    pub fn rms_over(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let rows = self.rows.get(range)?;
        if rows.is_empty() {
            return None;
        }
        Some((rows.iter().map(|r| r.e * r.e).sum::<f64>() / rows.len() as f64).sqrt())
    }

    /// RMS over the last `window` rows ending at each step.
    pub fn trailing_rms(&self, window: usize) -> Vec<f64> {
        let window = window.max(1);
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for (k, row) in self.rows.iter().enumerate() {
            acc += row.e * row.e;
            if k >= window {
                acc -= self.rows[k - window].e * self.rows[k - window].e;
            }
            let n = (k + 1).min(window);
            // re-sum occasionally drifts negative by rounding
            out.push((acc.max(0.0) / n as f64).sqrt());
        }
        out
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let rows = self.rows.iter().map(|r| {
            vec![r.k.to_string(), fmt_f64(r.y_hat), fmt_f64(r.y), fmt_f64(r.e), u8::from(r.updated).to_string()]
        });
        write_csv(writer, &["k", "y_hat", "y", "e", "updated"], rows)
    }

    pub fn read_csv<R: io::Read>(reader: R) -> csv::Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for record in rdr.deserialize::<(usize, f64, f64, f64, u8)>() {
            let (k, y_hat, y, e, updated) = record?;
            rows.push(TraceRow { k, y_hat, y, e, updated: updated != 0 });
        }
        Ok(Self { rows })
    }
}

/// Result of one online step, in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub prediction: f64,
    pub error: f64,
    pub updated: bool,
}

/// A model being adapted sample by sample.
#[derive(Debug)]
pub struct OnlineLearner {
    model: FuzzyModel,
    config: AdaptConfig,
    grads: Gradients,
    ws: GradientWorkspace,
    steps: usize,
}

impl OnlineLearner {
    pub fn new(model: FuzzyModel, config: AdaptConfig) -> Result<Self, AdaptError> {
        config.validate()?;
        let grads = Gradients::zeros(model.rules().len(), model.input_arity());
        Ok(Self { model, config, grads, ws: GradientWorkspace::default(), steps: 0 })
    }

    pub fn model(&self) -> &FuzzyModel {
        &self.model
    }

    pub fn into_model(self) -> FuzzyModel {
        self.model
    }

    /// Predict `y` from `x`; update if the residual exceeds epsilon.
    pub fn step(&mut self, x: &[f64], y: f64) -> Result<StepOutcome, AdaptError> {
        let k = self.steps;
        let wrap = |source: TrainError| AdaptError::Step { k, source };
        let (xm, ym) = match self.model.normalization() {
            Some(n) => (n.normalize_input(x), n.normalize_output(y)),
            None => (x.to_vec(), y),
        };
        gradients_into(&self.model, &xm, ym, &mut self.grads, &mut self.ws).map_err(wrap)?;
        let prediction = match self.model.normalization() {
            Some(n) => n.denormalize_output(self.grads.output),
            None => self.grads.output,
        };
        let updated = self.grads.error.abs() > self.config.epsilon;
        if updated {
            apply_update(&mut self.model, &self.grads, &self.config.rates, self.config.spread_floor);
        }
        self.steps += 1;
        Ok(StepOutcome { prediction, error: prediction - y, updated })
    }
}

/// One self-learning step on `model` in place.
pub fn self_learn_step(
    model: &mut FuzzyModel,
    x: &[f64],
    y: f64,
    config: &AdaptConfig,
) -> Result<StepOutcome, AdaptError> {
    let mut learner = OnlineLearner::new(model.clone(), config.clone())?;
    let outcome = learner.step(x, y)?;
    if outcome.updated {
        *model = learner.into_model();
    }
    Ok(outcome)
}

/// Run the self-learning loop over `stream` for up to `config.horizon` steps.
pub fn run_online<X: AsRef<[f64]>>(
    model: FuzzyModel,
    stream: impl IntoIterator<Item = (X, f64)>,
    config: &AdaptConfig,
) -> Result<(FuzzyModel, AdaptTrace), AdaptError> {
    let mut learner = OnlineLearner::new(model, config.clone())?;
    let limit = config.horizon.unwrap_or(usize::MAX);
    if limit == 0 {
        return Ok((learner.into_model(), AdaptTrace::default()));
    }
    let mut trace = AdaptTrace::default();
    for (k, (x, y)) in stream.into_iter().take(limit).enumerate() {
        let out = learner.step(x.as_ref(), y)?;
        trace.rows.push(TraceRow { k, y_hat: out.prediction, y, e: out.error, updated: out.updated });
    }
    if trace.is_empty() {
        return Err(AdaptError::EmptyStream);
    }
    Ok((learner.into_model(), trace))
}

/// Predictions of a model that never adapts, traced like [`run_online`].
pub fn run_frozen<X: AsRef<[f64]>>(
    model: &FuzzyModel,
    stream: impl IntoIterator<Item = (X, f64)>,
    horizon: Option<usize>,
) -> Result<AdaptTrace, AdaptError> {
    let mut trace = AdaptTrace::default();
    for (k, (x, y)) in stream.into_iter().take(horizon.unwrap_or(usize::MAX)).enumerate() {
        let y_hat = model.predict_physical(x.as_ref()).map_err(|e| AdaptError::Step { k, source: e.into() })?;
        trace.rows.push(TraceRow { k, y_hat, y, e: y_hat - y, updated: false });
    }
    if trace.is_empty() && horizon != Some(0) {
        return Err(AdaptError::EmptyStream);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::membership::GaussianMF;
    use crate::model::Rule;
    use crate::norms::CompositionKind;

    fn two_rule_model() -> FuzzyModel {
        let rules = vec![
            Rule::new(vec![GaussianMF::new(0.0, 0.5).unwrap()], 0.0, 1.0).unwrap(),
            Rule::new(vec![GaussianMF::new(1.0, 0.5).unwrap()], 1.0, 1.0).unwrap(),
        ];
        FuzzyModel::new(CompositionKind::SmoothAtan, rules).unwrap()
    }

    #[test]
    fn small_residual_leaves_model_untouched() {
        let mut m = two_rule_model();
        let before = m.clone();
        let y = m.predict(&[0.3]).unwrap().0;
        let out = self_learn_step(&mut m, &[0.3], y + 5e-4, &AdaptConfig::default()).unwrap();
        assert!(!out.updated);
        assert_eq!(m, before);
    }

    #[test]
    fn zero_steps_flag_but_do_not_move() {
        let mut m = two_rule_model();
        let before = m.clone();
        let cfg = AdaptConfig { rates: LearningRates::uniform(0.0), ..Default::default() };
        let out = self_learn_step(&mut m, &[0.3], 10.0, &cfg).unwrap();
        assert!(out.updated);
        assert_eq!(m, before);
    }

    #[test]
    fn large_residual_moves_toward_target() {
        let mut m = two_rule_model();
        let cfg = AdaptConfig { rates: LearningRates::uniform(0.5), ..Default::default() };
        let first = self_learn_step(&mut m, &[0.3], 2.0, &cfg).unwrap();
        let second = m.predict(&[0.3]).unwrap().0 - 2.0;
        assert!(second.abs() < first.error.abs());
    }

    #[test]
    fn horizon_and_empty_stream() {
        let m = two_rule_model();
        let cfg = AdaptConfig { horizon: Some(0), ..Default::default() };
        let (back, trace) = run_online(m.clone(), vec![(vec![0.1], 0.2)], &cfg).unwrap();
        assert!(trace.is_empty());
        assert_eq!(back, m);
        let empty: Vec<(Vec<f64>, f64)> = Vec::new();
        assert!(matches!(run_online(m, empty, &AdaptConfig::default()), Err(AdaptError::EmptyStream)));
    }

    #[test]
    fn trailing_rms_matches_direct_windows() {
        let rows = (0..10).map(|k| TraceRow { k, y_hat: 0.0, y: 0.0, e: k as f64 - 4.0, updated: false }).collect();
        let trace = AdaptTrace { rows };
        let t = trace.trailing_rms(3);
        for (k, got) in t.iter().enumerate() {
            let direct = trace.rms_over(k.saturating_sub(2)..k + 1).unwrap();
            assert!((got - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_csv_round_trip() {
        let trace = AdaptTrace { rows: vec![TraceRow { k: 0, y_hat: 0.1, y: 0.2, e: -0.1, updated: true }] };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("k,y_hat,y,e,updated\n0,"));
        assert_eq!(AdaptTrace::read_csv(buf.as_slice()).unwrap(), trace);
    }
}
