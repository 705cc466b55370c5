use smoothfuzz::adapt::{run_frozen, run_online, AdaptConfig, AdaptTrace, OnlineLearner};
use smoothfuzz::data::TimeSeriesDataset;
use smoothfuzz::plants::{build_regression_dataset, mackey_glass, mackey_glass_lags, MackeyGlassParams, Scenario};
use smoothfuzz::train::{identify, LearningRates, TrainConfig};
use smoothfuzz::{CompositionKind, FuzzyModel};

/// Lag-embedded Mackey-Glass samples, one per time unit, after a warm-up.
fn embedded(scenario: &Scenario, duration: f64) -> TimeSeriesDataset {
    let params = MackeyGlassParams { duration, ..MackeyGlassParams::default() };
    let series = mackey_glass(&params, scenario).unwrap().downsample(10);
    let (lags, offset) = mackey_glass_lags();
    build_regression_dataset(&[("x", &series.values[200..])], &lags, "x", offset).unwrap()
}

fn trained(kind: CompositionKind, data: &TimeSeriesDataset) -> FuzzyModel {
    let cfg = TrainConfig { rates: LearningRates::uniform(0.05), max_epochs: 100, ..TrainConfig::default() };
    identify(data, 2, kind, &cfg).unwrap().model
}

fn rows(ds: &TimeSeriesDataset) -> Vec<(Vec<f64>, f64)> {
    ds.samples().map(|(x, y)| (x.to_vec(), y)).collect()
}

#[test]
fn stationary_stream_triggers_no_updates() {
    let data = embedded(&Scenario::Nominal, 700.0);
    let model = trained(CompositionKind::SmoothAcos, &data);
    let stream: Vec<(Vec<f64>, f64)> =
        data.inputs.iter().map(|x| (x.clone(), model.predict_physical(x).unwrap())).collect();
    let (after, trace) = run_online(model.clone(), stream, &AdaptConfig::default()).unwrap();
    assert_eq!(trace.update_count(), 0);
    assert_eq!(after, model);
    assert!(trace.rows.iter().all(|r| !r.updated && r.e.abs() < 1e-12));
}

#[test]
fn flagged_steps_leave_parameters_untouched() {
    let data = embedded(&Scenario::Nominal, 500.0);
    let model = trained(CompositionKind::SmoothAtan, &data);
    let config = AdaptConfig { epsilon: 10.0, ..AdaptConfig::default() };
    let mut learner = OnlineLearner::new(model.clone(), config).unwrap();
    for (x, y) in data.samples().take(100) {
        let outcome = learner.step(x, y).unwrap();
        assert!(!outcome.updated);
        assert_eq!(learner.model(), &model);
    }
}

#[test]
fn error_recovers_after_the_plant_reverts() {
    let nominal = embedded(&Scenario::Nominal, 2200.0);
    let changed = embedded(&Scenario::ParamChange { b: 0.15, at: 0.0 }, 600.0);
    let (train, rest) = nominal.split(0.3).unwrap();
    let model = trained(CompositionKind::SmoothAcos, &train);

    let rest = rows(&rest);
    let (pre, reverted) = rest.split_at(200);
    let mut stream = pre.to_vec();
    stream.extend(rows(&changed).into_iter().take(300));
    stream.extend(reverted.iter().cloned());

    let config = AdaptConfig::default();
    let (_, trace) = run_online(model, stream, &config).unwrap();
    let trailing = trace.trailing_rms(config.rms_window);
    let before = trace.rms_over(0..pre.len()).unwrap();
    let during = trailing[pre.len()..pre.len() + 300].iter().copied().fold(0.0, f64::max);
    let after = *trailing.last().unwrap();
    assert!(during > before, "change did not disturb the model: {during} vs {before}");
    assert!(after <= 2.0 * before, "trailing RMS {after} did not return within 2x of {before}");
}

#[test]
fn replaying_a_recorded_stream_reproduces_the_trace() {
    let data = embedded(&Scenario::Noise { amplitude: 0.05, seed: 4 }, 600.0);
    let model = trained(CompositionKind::SmoothAtan, &data);
    let config = AdaptConfig { rates: LearningRates::uniform(0.02), ..AdaptConfig::default() };
    let (model_a, trace_a) = run_online(model.clone(), data.samples(), &config).unwrap();
    let (model_b, trace_b) = run_online(model.clone(), data.samples(), &config).unwrap();
    assert_eq!(model_a, model_b);
    assert_eq!(trace_a, trace_b);
    assert!(trace_a.update_count() > 0);

    let mut buf = Vec::new();
    trace_a.write_csv(&mut buf).unwrap();
    assert_eq!(AdaptTrace::read_csv(buf.as_slice()).unwrap(), trace_a);

    let frozen = run_frozen(&model, data.samples(), None).unwrap();
    assert_eq!(frozen.update_count(), 0);
    assert_eq!(frozen.len(), trace_a.len());
}

#[test]
fn rejects_bad_configs_and_empty_streams() {
    let data = embedded(&Scenario::Nominal, 400.0);
    let model = trained(CompositionKind::ProductSum, &data);
    let empty: Vec<(Vec<f64>, f64)> = Vec::new();
    assert!(run_online(model.clone(), empty, &AdaptConfig::default()).is_err());
    let bad = AdaptConfig { epsilon: -1.0, ..AdaptConfig::default() };
    assert!(OnlineLearner::new(model, bad).is_err());
}
