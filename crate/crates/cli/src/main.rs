//! Command-line front end for smoothfuzz.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use smoothfuzz::adapt::{run_online, AdaptConfig};
use smoothfuzz::bench::{rms, run_experiment, spec_from_manifest, write_artifacts, ExperimentSpec};
use smoothfuzz::data::TimeSeriesDataset;
use smoothfuzz::io::{fmt_f64, write_csv};
use smoothfuzz::plants::{
    build_regression_dataset, cstr_lags, cstr_simulate, mackey_glass, mackey_glass_lags, CstrInputs, CstrParams,
    CstrState, DisturbanceTarget, MackeyGlassParams, PlantError, QcProfile, RunMetadata, Scenario,
};
use smoothfuzz::train::{identify, LearningRates, TrainConfig};
use smoothfuzz::{CompositionKind, FuzzyModel};

const OUT_ENV: &str = "SMOOTHFUZZ_OUT";

#[derive(Parser, Debug)]
#[command(name = "smoothfuzz", version, about = "Smooth fuzzy model identification and benchmarks")]
#[command(allow_negative_numbers = true)]
struct Cli {
    /// Output directory for all artifacts.
    #[arg(long, global = true, env = OUT_ENV)]
    out_dir: Option<PathBuf>,
    /// TOML config with [train], [adapt], [mackey-glass], [cstr] or [experiment] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a plant and write its series, metadata and lag-embedded dataset.
    Generate(GenerateArgs),
    /// Identify a fuzzy model from a dataset CSV.
    Train(TrainArgs),
    /// Adapt a model online over a stream CSV.
    Adapt(AdaptArgs),
    /// Run a canned experiment end to end.
    Reproduce(ReproduceArgs),
    /// Evaluate a model on a dataset CSV.
    Predict(PredictArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Plant {
    MackeyGlass,
    Cstr,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ScenarioArg {
    Nominal,
    ParamChange,
    Noise,
    Tc0Sinusoid,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ProfileArg {
    Paper,
    Random,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TargetArg {
    CoolantInlet,
    Feed,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct GenerateArgs {
    plant: Plant,
    #[arg(long, value_enum, default_value = "nominal")]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulated time (Mackey-Glass time units).
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Mackey-Glass exponent C.
    #[arg(long)]
    exponent: Option<f64>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Integration steps between written samples.
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// New `b` for the parameter-change scenario.
    #[arg(long, default_value_t = 0.15)]
    change_b: f64,
    /// Time of the parameter change; defaults to half the duration.
    #[arg(long)]
    change_at: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    noise_amplitude: f64,
    /// Coolant flow profile for the CSTR.
    #[arg(long, value_enum, default_value = "paper")]
    qc_profile: ProfileArg,
    /// Levels of the random profile.
    #[arg(long, default_value_t = 6)]
    levels: usize,
    /// Samples per profile level.
    #[arg(long, default_value_t = 100)]
    dwell: usize,
    #[arg(long, default_value_t = 5.0)]
    disturbance_amplitude: f64,
    #[arg(long, value_enum, default_value = "coolant-inlet")]
    disturbance_target: TargetArg,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct TrainArgs {
    /// Dataset CSV: input columns then the target column.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "atan")]
    composition: CompositionKind,
    /// Beta of the smooth1 composition.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 2)]
    mfs: usize,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Debug, Default)]
struct TrainFlags {
    /// Step size for centers, spreads and consequents.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    alpha_c: Option<f64>,
    #[arg(long)]
    alpha_delta: Option<f64>,
    #[arg(long)]
    alpha_d: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train on raw units instead of min-max normalized ones.
    #[arg(long)]
    no_normalize: bool,
}

impl TrainFlags {
    fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(a) = self.alpha {
            cfg.rates = LearningRates::uniform(a);
        }
        set(&mut cfg.rates.alpha_c, self.alpha_c);
        set(&mut cfg.rates.alpha_delta, self.alpha_delta);
        set(&mut cfg.rates.alpha_d, self.alpha_d);
        set(&mut cfg.epsilon, self.epsilon);
        set(&mut cfg.max_epochs, self.max_epochs);
        set(&mut cfg.restarts, self.restarts);
        set(&mut cfg.seed, self.seed);
        if self.horizon.is_some() {
            cfg.horizon = self.horizon;
        }
        if self.no_normalize {
            cfg.normalize = false;
        }
        cfg
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct AdaptArgs {
    #[arg(long)]
    model: PathBuf,
    /// Stream CSV in the dataset format.
    #[arg(long)]
    stream: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    rms_window: Option<usize>,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    example: Plant,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

/// Contents of `--config`.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct CliConfig {
    train: Option<TrainConfig>,
    adapt: Option<AdaptConfig>,
    mackey_glass: Option<MackeyGlassParams>,
    cstr: Option<CstrParams>,
    experiment: Option<ExperimentSpec>,
    // manifests written by `reproduce` carry these alongside [experiment]
    library: Option<String>,
    version: Option<String>,
    #[serde(rename = "derived_seeds")]
    derived_seeds: Option<toml::Table>,
}

/// Failures caused by the invocation itself; reported with exit code 1.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

struct Ctx {
    out_dir: PathBuf,
    config: CliConfig,
    verbose: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out(&self, name: &str) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        Ok(self.out_dir.join(name))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => CliConfig::default(),
    };
    let ctx = Ctx { out_dir: cli.out_dir.unwrap_or_else(|| PathBuf::from("out")), config, verbose: cli.verbose };
    match cli.command {
        Command::Generate(args) => generate(&ctx, args),
        Command::Train(args) => train(&ctx, args),
        Command::Adapt(args) => adapt(&ctx, args),
        Command::Reproduce(args) => reproduce(&ctx, args),
        Command::Predict(args) => predict(&ctx, args),
    }
}

fn plant_usage(e: PlantError) -> anyhow::Error {
    match e {
        PlantError::InvalidParam { .. } | PlantError::ScenarioMismatch { .. } => usage(e.to_string()),
        other => other.into(),
    }
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn generate(ctx: &Ctx, args: GenerateArgs) -> anyhow::Result<()> {
    match args.plant {
        Plant::MackeyGlass => generate_mackey_glass(ctx, &args),
        Plant::Cstr => generate_cstr(ctx, &args),
    }
}

fn generate_mackey_glass(ctx: &Ctx, args: &GenerateArgs) -> anyhow::Result<()> {
    let mut params = ctx.config.mackey_glass.clone().unwrap_or_default();
    set(&mut params.duration, args.duration);
    set(&mut params.tau, args.tau);
    set(&mut params.a, args.a);
    set(&mut params.b, args.b);
    set(&mut params.c, args.exponent);
    set(&mut params.x0, args.x0);
    set(&mut params.dt, args.dt);
    params.validate().map_err(plant_usage)?;
    if args.stride == 0 {
        return Err(usage("--stride must be at least 1"));
    }
    let scenario = match args.scenario {
        ScenarioArg::Nominal => Scenario::Nominal,
        ScenarioArg::ParamChange => {
            Scenario::ParamChange { b: args.change_b, at: args.change_at.unwrap_or(params.duration / 2.0) }
        }
        ScenarioArg::Noise => Scenario::Noise { amplitude: args.noise_amplitude, seed: args.seed },
        ScenarioArg::Tc0Sinusoid => return Err(usage("scenario tc0-sinusoid applies to the cstr plant")),
    };
    let series = mackey_glass(&params, &scenario).map_err(plant_usage)?.downsample(args.stride);
    let stem = format!("mackey-glass_{}", scenario.name());
    let series_path = ctx.out(&format!("{stem}.csv"))?;
    write_with(&series_path, |w| Ok(series.write_csv(w, "x")?))?;
    let meta = RunMetadata::MackeyGlass { params, scenario, sample_every: args.stride };
    write_text(&ctx.out(&format!("{stem}.meta.json"))?, &meta.to_text())?;
    let (lags, offset) = mackey_glass_lags();
    let mut ds = build_regression_dataset(&[("x", &series.values)], &lags, "x", offset)?;
    ds.meta.plant = "mackey-glass".into();
    let ds_path = ctx.out(&format!("{stem}_dataset.csv"))?;
    write_with(&ds_path, |w| Ok(ds.write_csv(w)?))?;
    ctx.note(format!(
        "wrote {} ({} points) and {} ({} samples)",
        series_path.display(),
        series.values.len(),
        ds_path.display(),
        ds.len()
    ));
    Ok(())
}

fn generate_cstr(ctx: &Ctx, args: &GenerateArgs) -> anyhow::Result<()> {
    let params = ctx.config.cstr.clone().unwrap_or_default();
    params.validate().map_err(plant_usage)?;
    if args.dwell == 0 || args.levels == 0 {
        return Err(usage("--dwell and --levels must be at least 1"));
    }
    let profile = match args.qc_profile {
        ProfileArg::Paper => QcProfile { dwell: args.dwell, ..QcProfile::paper() },
        ProfileArg::Random => QcProfile::random(args.levels, 99.0, 110.0, args.dwell, args.seed),
    };
    let target = match args.disturbance_target {
        TargetArg::CoolantInlet => DisturbanceTarget::CoolantInlet,
        TargetArg::Feed => DisturbanceTarget::Feed,
    };
    let scenario = match args.scenario {
        ScenarioArg::Nominal => Scenario::Nominal,
        ScenarioArg::Tc0Sinusoid => Scenario::Tc0Sinusoid { amplitude: args.disturbance_amplitude, target },
        _ => return Err(usage("the cstr plant supports the nominal and tc0-sinusoid scenarios")),
    };
    let (sample_period, substeps) = (0.1, 10);
    let settle = CstrInputs::constant(profile.levels[0], 200);
    let start = cstr_simulate(&params, CstrState::NOMINAL, &settle, sample_period, substeps).map_err(plant_usage)?;
    let initial = *start.states.last().expect("settled state");
    let inputs = profile.inputs().with_scenario(&params, &scenario).map_err(plant_usage)?;
    let run = cstr_simulate(&params, initial, &inputs, sample_period, substeps).map_err(plant_usage)?;
    let stem = format!("cstr_{}", scenario.name());
    let series_path = ctx.out(&format!("{stem}.csv"))?;
    write_with(&series_path, |w| Ok(run.write_csv(w)?))?;
    let meta = RunMetadata::Cstr {
        params,
        scenario,
        initial,
        sample_period,
        substeps,
        qc_levels: profile.levels.clone(),
        dwell: profile.dwell,
    };
    write_text(&ctx.out(&format!("{stem}.meta.json"))?, &meta.to_text())?;
    let ca: Vec<f64> = run.states[..run.qc.len()].iter().map(|s| s.ca).collect();
    let (lags, offset) = cstr_lags();
    let mut ds = build_regression_dataset(&[("ca", &ca), ("qc", &run.qc)], &lags, "ca", offset)?;
    ds.meta.plant = "cstr".into();
    let ds_path = ctx.out(&format!("{stem}_dataset.csv"))?;
    write_with(&ds_path, |w| Ok(ds.write_csv(w)?))?;
    ctx.note(format!("wrote {} and {} ({} samples)", series_path.display(), ds_path.display(), ds.len()));
    Ok(())
}

fn read_dataset(path: &Path) -> anyhow::Result<TimeSeriesDataset> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    TimeSeriesDataset::read_csv(file).with_context(|| format!("reading {}", path.display()))
}

fn read_model(path: &Path) -> anyhow::Result<FuzzyModel> {
    let text = fs::read_to_string(path).with_context(|| format!("opening {}", path.display()))?;
    FuzzyModel::load(&text).with_context(|| format!("loading {}", path.display()))
}

fn residuals(model: &FuzzyModel, data: &TimeSeriesDataset) -> anyhow::Result<Vec<(f64, f64)>> {
    data.samples().map(|(x, y)| Ok((model.predict_physical(x)?, y))).collect()
}

#[derive(Serialize)]
struct TrainManifest<'a> {
    library: &'a str,
    version: &'a str,
    data: String,
    composition: CompositionKind,
    beta: Option<f64>,
    mfs_per_input: usize,
    train: &'a TrainConfig,
    training_rms: f64,
    epochs_used: usize,
    winner: usize,
}

fn train(ctx: &Ctx, args: TrainArgs) -> anyhow::Result<()> {
    let composition = match (args.composition, args.beta) {
        (CompositionKind::SmoothI { .. }, Some(beta)) => {
            CompositionKind::smooth_i(beta).map_err(|e| usage(e.to_string()))?
        }
        (_, Some(_)) => return Err(usage("--beta applies only to the smooth1 composition")),
        (kind, None) => kind,
    };
    if args.mfs == 0 {
        return Err(usage("--mfs must be at least 1"));
    }
    let config = args.train.apply(ctx.config.train.clone().unwrap_or_default());
    config.validate().map_err(|e| usage(e.to_string()))?;
    let data = read_dataset(&args.data)?;
    ctx.note(format!(
        "training {} on {} samples, {} rules",
        composition,
        data.len(),
        args.mfs.pow(data.arity() as u32)
    ));
    let id = identify(&data, args.mfs, composition, &config)?;
    let pairs = residuals(&id.model, &data)?;
    let training_rms = rms(&pairs.iter().map(|(p, y)| p - y).collect::<Vec<_>>())?;

    write_text(&ctx.out("model.json")?, &id.model.save())?;
    write_with(&ctx.out("convergence.csv")?, |w| Ok(id.report.write_convergence_csv(w)?))?;
    let manifest = TrainManifest {
        library: "smoothfuzz",
        version: env!("CARGO_PKG_VERSION"),
        data: args.data.display().to_string(),
        composition,
        beta: match composition {
            CompositionKind::SmoothI { beta } => Some(beta),
            _ => None,
        },
        mfs_per_input: args.mfs,
        train: &config,
        training_rms,
        epochs_used: id.report.epochs_used(),
        winner: id.report.winner,
    };
    write_text(&ctx.out("train_manifest.toml")?, &toml::to_string(&manifest)?)?;
    println!("training_rms = {}", fmt_f64(training_rms));
    Ok(())
}

fn adapt(ctx: &Ctx, args: AdaptArgs) -> anyhow::Result<()> {
    let mut config = ctx.config.adapt.clone().unwrap_or_default();
    set(&mut config.epsilon, args.epsilon);
    if let Some(a) = args.alpha {
        config.rates = LearningRates::uniform(a);
    }
    if args.horizon.is_some() {
        config.horizon = args.horizon;
    }
    set(&mut config.rms_window, args.rms_window);
    config.validate().map_err(|e| usage(e.to_string()))?;
    let model = read_model(&args.model)?;
    let stream = read_dataset(&args.stream)?;
    let (model, trace) = run_online(model, stream.samples(), &config)?;
    write_text(&ctx.out("model_adapted.json")?, &model.save())?;
    write_with(&ctx.out("trace.csv")?, |w| Ok(trace.write_csv(w)?))?;
    let all = trace.rms_over(0..trace.len()).unwrap_or(0.0);
    println!("steps = {}", trace.len());
    println!("updates = {}", trace.update_count());
    println!("rms = {}", fmt_f64(all));
    Ok(())
}

fn reproduce(ctx: &Ctx, args: ReproduceArgs) -> anyhow::Result<()> {
    let spec = match &ctx.config.experiment {
        Some(spec) => spec.clone(),
        None => match args.example {
            Plant::MackeyGlass => ExperimentSpec::mackey_glass(args.seed),
            Plant::Cstr => ExperimentSpec::cstr(args.seed),
        },
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    ctx.note(format!("running {} with seed {}", spec.name, spec.seed));
    let result = run_experiment(&spec)?;
    write_artifacts(&spec, &result, &ctx.out_dir)?;
    // the manifest must parse back into the same experiment
    debug_assert_eq!(
        spec_from_manifest(&fs::read_to_string(ctx.out_dir.join("manifest.toml"))?).ok(),
        Some(spec.clone())
    );
    print!("{}", result.table.to_csv()?);
    let failed = result.table.rows.iter().filter(|r| r.cells.iter().all(|c| c.value().is_none())).count();
    if failed == result.table.rows.len() {
        bail!("every composition failed");
    }
    Ok(())
}

fn predict(ctx: &Ctx, args: PredictArgs) -> anyhow::Result<()> {
    let model = read_model(&args.model)?;
    let data = read_dataset(&args.data)?;
    if data.arity() != model.input_arity() {
        return Err(usage(format!("dataset has {} inputs, model expects {}", data.arity(), model.input_arity())));
    }
    let pairs = residuals(&model, &data)?;
    let path = ctx.out("predictions.csv")?;
    let rows =
        pairs.iter().enumerate().map(|(k, (p, y))| vec![k.to_string(), fmt_f64(*p), fmt_f64(*y), fmt_f64(p - y)]);
    write_with(&path, |w| Ok(write_csv(w, &["k", "y_hat", "y", "e"], rows)?))?;
    let e: Vec<f64> = pairs.iter().map(|(p, y)| p - y).collect();
    println!("rms = {}", fmt_f64(rms(&e)?));
    Ok(())
}
