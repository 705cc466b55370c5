//! Experiment orchestration: identify one model per composition, run it
//! through the plant's scenarios, tabulate RMS errors and write artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapt::{run_frozen, run_online, AdaptConfig, AdaptError, AdaptTrace};
use crate::data::{DataError, TimeSeriesDataset};
use crate::io::{fmt_f64, write_csv};
use crate::model::FuzzyModel;
use crate::norms::CompositionKind;
use crate::plants::{
    build_regression_dataset, cstr_lags, cstr_simulate, mackey_glass, mackey_glass_lags, CstrInputs, CstrParams,
    CstrState, DisturbanceTarget, MackeyGlassParams, PlantError, QcProfile, Scenario,
};
use crate::seed::derive_seed;
use crate::train::{identify, LearningRates, TrainConfig, TrainError, TrainReport};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("residual series is empty")]
    EmptyResiduals,
    #[error("no traces to chart")]
    NoTraces,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error("manifest: {0}")]
    Manifest(String),
}

/// Root mean square of `residuals`.
pub fn rms(residuals: &[f64]) -> Result<f64, BenchError> {
    if residuals.is_empty() {
        return Err(BenchError::EmptyResiduals);
    }
    Ok((residuals.iter().map(|e| e * e).sum::<f64>() / residuals.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MackeyGlassSetup {
    pub params: MackeyGlassParams,
    /// Simulated time discarded before sampling starts.
    pub warmup: f64,
    /// Number of sampled points kept after the warmup.
    pub samples: usize,
    /// Integration steps between kept samples.
    pub stride: usize,
    pub train_fraction: f64,
    /// `b` after the parameter change, applied from the first validation sample on.
    pub changed_b: f64,
    pub noise_amplitude: f64,
}

impl Default for MackeyGlassSetup {
    fn default() -> Self {
        Self {
            params: MackeyGlassParams::default(),
            warmup: 200.0,
            samples: 1000,
            stride: 10,
            train_fraction: 0.6,
            changed_b: 0.15,
            noise_amplitude: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CstrSetup {
    pub params: CstrParams,
    /// Minutes between samples.
    pub sample_period: f64,
    pub substeps: usize,
    pub train_profile: QcProfile,
    /// Levels of the seeded validation profile, drawn from `validation_range`.
    pub validation_levels: usize,
    pub validation_range: (f64, f64),
    /// Samples at the first level before recording starts.
    pub settle: usize,
    pub disturbance_amplitude: f64,
    pub disturbance_target: DisturbanceTarget,
}

impl Default for CstrSetup {
    fn default() -> Self {
        Self {
            params: CstrParams::default(),
            sample_period: 0.1,
            substeps: 10,
            train_profile: QcProfile::paper(),
            validation_levels: 6,
            validation_range: (99.0, 110.0),
            settle: 200,
            disturbance_amplitude: 5.0,
            disturbance_target: DisturbanceTarget::CoolantInlet,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlantSetup {
    MackeyGlass(MackeyGlassSetup),
    Cstr(CstrSetup),
}

impl PlantSetup {
    pub fn arity(&self) -> usize {
        match self {
            PlantSetup::MackeyGlass(_) => mackey_glass_lags().0.len(),
            PlantSetup::Cstr(_) => cstr_lags().0.len(),
        }
    }

    /// Column names of the result table.
    pub fn columns(&self) -> Vec<String> {
        let names: &[&str] = match self {
            PlantSetup::MackeyGlass(_) => &["training", "param-change", "noise"],
            PlantSetup::Cstr(_) => &["training", "validation", "disturbance"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub compositions: Vec<CompositionKind>,
    pub mfs_per_input: usize,
    pub train: TrainConfig,
    pub adapt: AdaptConfig,
    pub plant: PlantSetup,
}

impl ExperimentSpec {
    /// Four compositions on Mackey-Glass with parameter-change and noise scenarios.
    pub fn mackey_glass(seed: u64) -> Self {
        Self {
            name: "mackey-glass".into(),
            seed,
            compositions: vec![
                CompositionKind::SmoothAtan,
                CompositionKind::SmoothAcos,
                CompositionKind::ProductSum,
                CompositionKind::MinMax,
            ],
            mfs_per_input: 2,
            train: TrainConfig {
                rates: LearningRates::uniform(0.05),
                max_epochs: 100,
                restarts: 2,
                seed,
                ..TrainConfig::default()
            },
            adapt: AdaptConfig::default(),
            plant: PlantSetup::MackeyGlass(MackeyGlassSetup::default()),
        }
    }

    /// Four compositions on the CSTR: 3 membership functions on 4 inputs, 81 rules.
    pub fn cstr(seed: u64) -> Self {
        Self {
            name: "cstr".into(),
            seed,
            compositions: vec![
                CompositionKind::SmoothAtan,
                CompositionKind::SmoothAcos,
                CompositionKind::ProductSum,
                CompositionKind::MinMax,
            ],
            mfs_per_input: 3,
            train: TrainConfig { max_epochs: 30, restarts: 1, seed, ..TrainConfig::default() },
            adapt: AdaptConfig::default(),
            plant: PlantSetup::Cstr(CstrSetup::default()),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.compositions.is_empty() {
            return Err(BenchError::Spec("composition list is empty".into()));
        }
        if self.mfs_per_input == 0 {
            return Err(BenchError::Spec("mfs_per_input must be at least 1".into()));
        }
        self.train.validate()?;
        self.adapt.validate()?;
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: derive_seed(self.seed, 0), ..self.train.clone() }
    }
}

/// Training data and scenario streams derived from the plant.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: TimeSeriesDataset,
    /// `(column, stream, adapt)`: streams run online when `adapt` is set,
    /// otherwise through the frozen model.
    pub scenarios: Vec<(String, TimeSeriesDataset, bool)>,
}

pub fn prepare_data(spec: &ExperimentSpec) -> Result<ExperimentData, BenchError> {
    match &spec.plant {
        PlantSetup::MackeyGlass(setup) => mackey_glass_data(setup, spec.seed),
        PlantSetup::Cstr(setup) => cstr_data(setup, spec.seed),
    }
}

fn mackey_glass_data(setup: &MackeyGlassSetup, seed: u64) -> Result<ExperimentData, BenchError> {
    if !(setup.train_fraction > 0.0 && setup.train_fraction < 1.0) {
        return Err(BenchError::Spec(format!("train_fraction must lie in (0, 1), got {}", setup.train_fraction)));
    }
    let stride = setup.stride.max(1);
    let dt = setup.params.dt;
    let skip = (setup.warmup / dt).round() as usize;
    let params = MackeyGlassParams { duration: dt * (skip + stride * setup.samples) as f64, ..setup.params.clone() };
    let (lags, offset) = mackey_glass_lags();
    let max_lag = lags.iter().map(|l| l.lag).max().unwrap_or(0);

    let embed = |scenario: &Scenario| -> Result<TimeSeriesDataset, BenchError> {
        let series = mackey_glass(&params, scenario)?;
        let sampled: Vec<f64> = series.values[skip..].iter().step_by(stride).copied().collect();
        let mut ds = build_regression_dataset(&[("x", &sampled)], &lags, "x", offset)?;
        ds.meta.plant = "mackey-glass".into();
        ds.meta.scenario = scenario.name().into();
        Ok(ds)
    };

    let nominal = embed(&Scenario::Nominal)?;
    let (train, _) = nominal.split(setup.train_fraction)?;
    let cut = train.len();
    // the change starts at the lag-0 time of the first validation sample
    let switch = dt * (skip + stride * (max_lag + cut)) as f64;
    let changed = embed(&Scenario::ParamChange { b: setup.changed_b, at: switch })?;
    let noisy = embed(&Scenario::Noise { amplitude: setup.noise_amplitude, seed: derive_seed(seed, 1) })?;
    let tail = |ds: TimeSeriesDataset| ds.split(setup.train_fraction).map(|(_, v)| v);
    Ok(ExperimentData {
        train,
        scenarios: vec![("param-change".into(), tail(changed)?, true), ("noise".into(), tail(noisy)?, true)],
    })
}

fn cstr_run(
    setup: &CstrSetup,
    profile: &QcProfile,
    scenario: &Scenario,
    name: &str,
) -> Result<TimeSeriesDataset, BenchError> {
    let settle = CstrInputs::constant(profile.levels[0], setup.settle);
    let start = cstr_simulate(&setup.params, CstrState::NOMINAL, &settle, setup.sample_period, setup.substeps)?;
    let initial = *start.states.last().expect("initial state");
    let inputs = profile.inputs().with_scenario(&setup.params, scenario)?;
    let run = cstr_simulate(&setup.params, initial, &inputs, setup.sample_period, setup.substeps)?;
    // states has one more entry than qc; drop the final state so channels align
    let ca: Vec<f64> = run.states[..run.qc.len()].iter().map(|s| s.ca).collect();
    let (lags, offset) = cstr_lags();
    let mut ds = build_regression_dataset(&[("ca", &ca), ("qc", &run.qc)], &lags, "ca", offset)?;
    ds.meta.plant = "cstr".into();
    ds.meta.scenario = name.into();
    Ok(ds)
}

fn cstr_data(setup: &CstrSetup, seed: u64) -> Result<ExperimentData, BenchError> {
    let (lo, hi) = setup.validation_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(BenchError::Spec(format!("validation_range must be positive and ordered, got ({lo}, {hi})")));
    }
    let validation =
        QcProfile::random(setup.validation_levels.max(1), lo, hi, setup.train_profile.dwell, derive_seed(seed, 2));
    let disturbance =
        Scenario::Tc0Sinusoid { amplitude: setup.disturbance_amplitude, target: setup.disturbance_target };
    Ok(ExperimentData {
        train: cstr_run(setup, &setup.train_profile, &Scenario::Nominal, "nominal")?,
        scenarios: vec![
            ("validation".into(), cstr_run(setup, &validation, &Scenario::Nominal, "validation")?, false),
            ("disturbance".into(), cstr_run(setup, &validation, &disturbance, "disturbance")?, true),
        ],
    })
}

/// One table cell: an RMS value or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Value(f64),
    Failed(String),
}

impl Cell {
    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(*v),
            Cell::Failed(_) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Value(v) => fmt_f64(*v),
            Cell::Failed(_) => "failed".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub composition: CompositionKind,
    pub cells: Vec<Cell>,
}

/// RMS errors in physical units, one row per composition.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn get(&self, composition: CompositionKind, column: &str) -> Option<&Cell> {
        let j = self.columns.iter().position(|c| c == column)?;
        self.rows.iter().find(|r| r.composition == composition)?.cells.get(j)
    }

    pub fn value(&self, composition: CompositionKind, column: &str) -> Option<f64> {
        self.get(composition, column).and_then(Cell::value)
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut header = vec!["composition"];
        header.extend(self.columns.iter().map(String::as_str));
        header.push("error");
        let rows = self.rows.iter().map(|row| {
            let mut out = vec![row.composition.name().to_string()];
            out.extend(row.cells.iter().map(Cell::render));
            let errors: Vec<String> = row
                .cells
                .iter()
                .zip(&self.columns)
                .filter_map(|(c, name)| match c {
                    Cell::Failed(msg) => Some(format!("{name}: {msg}")),
                    Cell::Value(_) => None,
                })
                .collect();
            out.push(errors.join("; "));
            out
        });
        let mut buf = Vec::new();
        write_csv(&mut buf, &header, rows)?;
        Ok(String::from_utf8(buf).expect("CSV is UTF-8"))
    }
}

/// Everything produced for one composition.
#[derive(Debug, Clone)]
pub struct CompositionRun {
    pub composition: CompositionKind,
    pub model: Option<FuzzyModel>,
    pub report: Option<TrainReport>,
    pub traces: Vec<ScenarioTrace>,
}

#[derive(Debug, Clone)]
pub struct ScenarioTrace {
    pub scenario: String,
    pub trace: AdaptTrace,
    pub frozen: AdaptTrace,
    pub adapted: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub table: ResultTable,
    pub runs: Vec<CompositionRun>,
}

fn training_rms(model: &FuzzyModel, data: &TimeSeriesDataset) -> Result<f64, BenchError> {
    let mut residuals = Vec::with_capacity(data.len());
    for (x, y) in data.samples() {
        residuals.push(model.predict_physical(x).map_err(TrainError::from)? - y);
    }
    rms(&residuals)
}

fn run_composition(
    spec: &ExperimentSpec,
    data: &ExperimentData,
    composition: CompositionKind,
) -> (ResultRow, CompositionRun) {
    let columns = 1 + data.scenarios.len();
    let mut run = CompositionRun { composition, model: None, report: None, traces: Vec::new() };
    let identified = match identify(&data.train, spec.mfs_per_input, composition, &spec.train_config()) {
        Ok(id) => id,
        Err(e) => {
            let cells = vec![Cell::Failed(e.to_string()); columns];
            return (ResultRow { composition, cells }, run);
        }
    };
    let model = identified.model;
    let mut cells = vec![match training_rms(&model, &data.train) {
        Ok(v) => Cell::Value(v),
        Err(e) => Cell::Failed(e.to_string()),
    }];
    let adapt = AdaptConfig { spread_floor: identified.spread_floor, ..spec.adapt.clone() };
    for (name, stream, adaptive) in &data.scenarios {
        let outcome = (|| -> Result<ScenarioTrace, BenchError> {
            let frozen = run_frozen(&model, stream.samples(), adapt.horizon)?;
            let trace = if *adaptive { run_online(model.clone(), stream.samples(), &adapt)?.1 } else { frozen.clone() };
            Ok(ScenarioTrace { scenario: name.clone(), trace, frozen, adapted: *adaptive })
        })();
        match outcome.and_then(|t| rms(&t.trace.residuals()).map(|v| (v, t))) {
            Ok((v, t)) => {
                cells.push(Cell::Value(v));
                run.traces.push(t);
            }
            Err(e) => cells.push(Cell::Failed(e.to_string())),
        }
    }
    run.model = Some(model);
    run.report = Some(identified.report);
    (ResultRow { composition, cells }, run)
}

/// Identify and evaluate every composition of `spec`. Per-composition
/// failures become [`Cell::Failed`] entries rather than errors.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, BenchError> {
    spec.validate()?;
    let data = prepare_data(spec)?;
    if data.train.arity() != spec.plant.arity() {
        return Err(BenchError::Spec(format!(
            "plant yields {} inputs, expected {}",
            data.train.arity(),
            spec.plant.arity()
        )));
    }
    let outcomes: Vec<(ResultRow, CompositionRun)> =
        spec.compositions.par_iter().map(|&kind| run_composition(spec, &data, kind)).collect();
    let (rows, runs) = outcomes.into_iter().unzip();
    Ok(ExperimentResult { table: ResultTable { columns: spec.plant.columns(), rows }, runs })
}

/// A named polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Trace {
    pub fn from_values(label: &str, values: &[f64]) -> Self {
        Self { label: label.into(), points: values.iter().enumerate().map(|(k, v)| (k as f64, *v)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub file_name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub traces: Vec<Trace>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f"];
const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 55.0); // left, right, top, bottom

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Render one chart as a self-contained SVG document.
pub fn render_svg(chart: &Chart) -> Result<String, BenchError> {
    if chart.traces.is_empty() {
        return Err(BenchError::NoTraces);
    }
    let finite = chart.traces.iter().flat_map(|t| &t.points).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let (ml, mr, mt, mb) = MARGIN;
    let pw = WIDTH - ml - mr;
    let ph = HEIGHT - mt - mb;
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(&chart.title)
    );
    let _ = writeln!(svg, r##"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            sx(xv),
            mt + ph + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            ml - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        ml + pw / 2.0,
        HEIGHT - 12.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {:.1})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        escape(&chart.y_label)
    );
    for (i, trace) in chart.traces.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = trace
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = mt + 14.0 + 16.0 * i as f64;
        let lx = ml + pw - 150.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&trace.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Write each chart to `dir/<file_name>`.
pub fn emit_charts(charts: &[Chart], dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    if charts.is_empty() {
        return Err(BenchError::NoTraces);
    }
    fs::create_dir_all(dir).map_err(|source| BenchError::Io { path: dir.to_path_buf(), source })?;
    let mut written = Vec::with_capacity(charts.len());
    for chart in charts {
        let path = dir.join(&chart.file_name);
        let svg = render_svg(chart)?;
        fs::write(&path, svg).map_err(|source| BenchError::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}

/// Convergence, per-scenario response and error charts for a result.
pub fn experiment_charts(result: &ExperimentResult) -> Vec<Chart> {
    let mut charts = Vec::new();
    let convergence: Vec<Trace> = result
        .runs
        .iter()
        .filter_map(|r| r.report.as_ref().map(|rep| Trace::from_values(r.composition.name(), rep.epoch_errors())))
        .collect();
    if !convergence.is_empty() {
        charts.push(Chart {
            file_name: "convergence.svg".into(),
            title: "Training error per epoch".into(),
            x_label: "epoch".into(),
            y_label: "E".into(),
            traces: convergence,
        });
    }
    for column in result.table.columns.iter().skip(1) {
        let mut response = Vec::new();
        let mut errors = Vec::new();
        for run in &result.runs {
            let Some(st) = run.traces.iter().find(|t| &t.scenario == column) else { continue };
            if response.is_empty() {
                let y: Vec<f64> = st.trace.rows.iter().map(|r| r.y).collect();
                response.push(Trace::from_values("measured", &y));
            }
            let y_hat: Vec<f64> = st.trace.rows.iter().map(|r| r.y_hat).collect();
            response.push(Trace::from_values(run.composition.name(), &y_hat));
            errors.push(Trace::from_values(run.composition.name(), &st.trace.trailing_rms(50)));
        }
        if response.is_empty() {
            continue;
        }
        charts.push(Chart {
            file_name: format!("response_{column}.svg"),
            title: format!("Model output, {column}"),
            x_label: "sample".into(),
            y_label: "output".into(),
            traces: response,
        });
        charts.push(Chart {
            file_name: format!("error_{column}.svg"),
            title: format!("Trailing RMS error, {column}"),
            x_label: "sample".into(),
            y_label: "RMS".into(),
            traces: errors,
        });
    }
    charts
}

#[derive(Serialize)]
struct Manifest<'a> {
    library: &'a str,
    version: &'a str,
    derived_seeds: DerivedSeeds,
    experiment: &'a ExperimentSpec,
}

#[derive(Serialize)]
struct DerivedSeeds {
    training: String,
    noise: String,
    validation_profile: String,
}

// TOML integers are signed 64-bit
fn hex_seed(base: u64, stream: u64) -> String {
    format!("{:#018x}", derive_seed(base, stream))
}

/// TOML manifest holding the full spec, derived seeds and library version.
/// Its `[experiment]` table is itself a valid experiment description.
pub fn manifest(spec: &ExperimentSpec) -> Result<String, BenchError> {
    let m = Manifest {
        library: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        derived_seeds: DerivedSeeds {
            training: hex_seed(spec.seed, 0),
            noise: hex_seed(spec.seed, 1),
            validation_profile: hex_seed(spec.seed, 2),
        },
        experiment: spec,
    };
    toml::to_string(&m).map_err(|e| BenchError::Manifest(e.to_string()))
}

/// Read the `[experiment]` table back from a manifest.
pub fn spec_from_manifest(text: &str) -> Result<ExperimentSpec, BenchError> {
    #[derive(Deserialize)]
    struct Back {
        experiment: ExperimentSpec,
    }
    toml::from_str::<Back>(text).map(|b| b.experiment).map_err(|e| BenchError::Manifest(e.to_string()))
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf, BenchError> {
    fs::write(&path, contents).map_err(|source| BenchError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn csv_file(path: PathBuf, write: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<PathBuf, BenchError> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|source| BenchError::Csv { path: path.clone(), source })?;
    fs::write(&path, buf).map_err(|source| BenchError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Write results, convergence and trace CSVs, models, charts and the
/// manifest into `dir`.
pub fn write_artifacts(
    spec: &ExperimentSpec,
    result: &ExperimentResult,
    dir: &Path,
) -> Result<Vec<PathBuf>, BenchError> {
    fs::create_dir_all(dir).map_err(|source| BenchError::Io { path: dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    let table = result.table.to_csv().map_err(|source| BenchError::Csv { path: dir.join("results.csv"), source })?;
    written.push(write_file(dir.join("results.csv"), &table)?);
    for run in &result.runs {
        let comp = run.composition.name();
        if let Some(report) = &run.report {
            written.push(csv_file(dir.join(format!("convergence_{comp}.csv")), |w| report.write_convergence_csv(w))?);
        }
        if let Some(model) = &run.model {
            written.push(write_file(dir.join(format!("model_{comp}.json")), &model.save())?);
        }
        for st in &run.traces {
            let path = dir.join(format!("trace_{comp}_{}.csv", st.scenario));
            written.push(csv_file(path, |w| st.trace.write_csv(w))?);
        }
    }
    written.extend(emit_charts(&experiment_charts(result), dir)?);
    written.push(write_file(dir.join("manifest.toml"), &manifest(spec)?)?);
    Ok(written)
}
