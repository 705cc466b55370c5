//! Reference data generators.
//!
//! Mackey-Glass:
//!
//! ```text
//! dx/dt = a x(t - tau) / (1 + x(t - tau)^C) - b x(t)
//! ```
//!
//! CSTR, with `k1 = -dH k0 / (rho Cp)`, `k2 = rho_c Cpc / (rho Cp V)` and
//! `k3 = ha / (rho_c Cpc)`:
//!
//! ```text
//! dCa/dt = q/V (Ca0 - Ca) - k0 Ca exp(-E/(R T))
//! dT/dt  = q/V (T0 - T) + k1 Ca exp(-E/(R T)) + k2 qc (1 - exp(-k3/qc)) (Tc0 - T)
//! ```
//!
//! The reaction term heats the mixture (`k1 > 0` for an exothermic reaction),
//! which is what places the operating point `Ca = 0.1`, `T = 438.5` at
//! `qc = 103.411`.
//!
//! Both are integrated with the classical fixed-step fourth-order scheme.

use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DatasetMeta, TimeSeriesDataset};
use crate::io::{fmt_f64, write_csv};

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("coolant flow must be positive, got {qc} at t = {t}")]
    NonPositiveQc { qc: f64, t: f64 },
    #[error("series of {len} samples is too short for lag {max_lag} and offset {offset}")]
    TooShort { len: usize, max_lag: usize, offset: usize },
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("scenario `{scenario}` does not apply to {plant}")]
    ScenarioMismatch { scenario: &'static str, plant: &'static str },
}

fn check(ok: bool, name: &'static str, reason: impl FnOnce() -> String) -> Result<(), PlantError> {
    if ok {
        Ok(())
    } else {
        Err(PlantError::InvalidParam { name, reason: reason() })
    }
}

/// Where a sinusoidal temperature disturbance is injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceTarget {
    /// Inlet coolant temperature `Tc0`.
    CoolantInlet,
    /// Feed temperature `T0`.
    Feed,
}

/// Operating condition applied to a plant run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scenario {
    Nominal,
    /// Mackey-Glass `b` switches to `b` at time `at`.
    ParamChange {
        b: f64,
        at: f64,
    },
    /// Mackey-Glass `b = b_nominal + amplitude * r` with `r ~ U(-1, 1)` drawn
    /// every integration step.
    Noise {
        amplitude: f64,
        seed: u64,
    },
    /// CSTR coolant flow levels held for `dwell` samples each.
    QcStepProfile {
        levels: Vec<f64>,
        dwell: usize,
    },
    /// CSTR temperature `base + amplitude * sin(k)` for sample index `k`.
    Tc0Sinusoid {
        amplitude: f64,
        target: DisturbanceTarget,
    },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Nominal => "nominal",
            Scenario::ParamChange { .. } => "param-change",
            Scenario::Noise { .. } => "noise",
            Scenario::QcStepProfile { .. } => "qc-steps",
            Scenario::Tc0Sinusoid { .. } => "tc0-sinusoid",
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        match self {
            Scenario::Nominal => Ok(()),
            Scenario::ParamChange { b, at } => {
                check(b.is_finite() && *b > 0.0, "b", || format!("must be positive, got {b}"))?;
                check(at.is_finite() && *at >= 0.0, "at", || format!("must be non-negative, got {at}"))
            }
            Scenario::Noise { amplitude, .. } => check(amplitude.is_finite() && *amplitude >= 0.0, "amplitude", || {
                format!("must be non-negative, got {amplitude}")
            }),
            Scenario::QcStepProfile { levels, dwell } => {
                check(!levels.is_empty(), "levels", || "at least one level required".into())?;
                check(levels.iter().all(|q| q.is_finite() && *q > 0.0), "levels", || {
                    format!("must be positive, got {levels:?}")
                })?;
                check(*dwell > 0, "dwell", || "must be at least one sample".into())
            }
            Scenario::Tc0Sinusoid { amplitude, .. } => {
                check(amplitude.is_finite(), "amplitude", || format!("must be finite, got {amplitude}"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MackeyGlassParams {
    pub a: f64,
    pub b: f64,
    #[serde(rename = "c")]
    pub c: f64,
    pub tau: f64,
    pub x0: f64,
    pub dt: f64,
    pub duration: f64,
}

impl Default for MackeyGlassParams {
    fn default() -> Self {
        Self { a: 0.2, b: 0.1, c: 10.0, tau: 17.0, x0: 1.2, dt: 0.1, duration: 1000.0 }
    }
}

impl MackeyGlassParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        check(self.tau.is_finite() && self.tau > 0.0, "tau", || format!("must be positive, got {}", self.tau))?;
        check(self.dt.is_finite() && self.dt > 0.0, "dt", || format!("must be positive, got {}", self.dt))?;
        check(self.dt <= self.tau / 10.0, "dt", || format!("must not exceed tau/10 = {}", self.tau / 10.0))?;
        check(self.duration.is_finite() && self.duration > 0.0, "duration", || {
            format!("must be positive, got {}", self.duration)
        })?;
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c), ("x0", self.x0)] {
            check(v.is_finite(), name, || format!("must be finite, got {v}"))?;
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// Uniformly sampled scalar trajectory starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl Series {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Every `stride`-th point, starting with the first.
    pub fn downsample(&self, stride: usize) -> Series {
        Series { dt: self.dt * stride as f64, values: self.values.iter().step_by(stride.max(1)).copied().collect() }
    }

    pub fn write_csv<W: io::Write>(&self, writer: W, name: &str) -> csv::Result<()> {
        let rows = self.values.iter().enumerate().map(|(k, v)| vec![fmt_f64(self.time(k)), fmt_f64(*v)]);
        write_csv(writer, &["t", name], rows)
    }
}

/// Value of a uniformly sampled history at time `t`, linear between points,
/// `before` for `t <= 0`.
fn history_at(history: &[f64], dt: f64, t: f64, before: f64) -> f64 {
    if t <= 0.0 {
        return before;
    }
    let pos = t / dt;
    let i = pos.floor() as usize;
    if i + 1 >= history.len() {
        return *history.last().unwrap_or(&before);
    }
    let w = pos - i as f64;
    history[i] + w * (history[i + 1] - history[i])
}

fn mg_rhs(p: &MackeyGlassParams, b: f64, x: f64, delayed: f64) -> f64 {
    p.a * delayed / (1.0 + delayed.powf(p.c)) - b * x
}

/// Integrate Mackey-Glass from the constant pre-history `x0`.
pub fn mackey_glass(params: &MackeyGlassParams, scenario: &Scenario) -> Result<Series, PlantError> {
    params.validate()?;
    scenario.validate()?;
    let mut rng = match scenario {
        Scenario::Noise { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        Scenario::Nominal | Scenario::ParamChange { .. } => None,
        _ => return Err(PlantError::ScenarioMismatch { scenario: scenario.name(), plant: "mackey-glass" }),
    };
    let dt = params.dt;
    let steps = params.steps();
    let mut x = Vec::with_capacity(steps + 1);
    x.push(params.x0);
    for k in 0..steps {
        let t = k as f64 * dt;
        let b = match scenario {
            Scenario::ParamChange { b, at } if t >= *at => *b,
            Scenario::Noise { amplitude, .. } => {
                let r: f64 = rng.as_mut().expect("seeded").random_range(-1.0..=1.0);
                params.b + amplitude * r
            }
            _ => params.b,
        };
        let delayed = |s: f64| history_at(&x, dt, s - params.tau, params.x0);
        let xk = x[k];
        let k1 = mg_rhs(params, b, xk, delayed(t));
        let mid = delayed(t + 0.5 * dt);
        let k2 = mg_rhs(params, b, xk + 0.5 * dt * k1, mid);
        let k3 = mg_rhs(params, b, xk + 0.5 * dt * k2, mid);
        let k4 = mg_rhs(params, b, xk + dt * k3, delayed(t + dt));
        let next = xk + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !next.is_finite() {
            return Err(PlantError::NonFinite { t: t + dt });
        }
        x.push(next);
    }
    Ok(Series { dt, values: x })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CstrParams {
    /// Process flow rate, l/min.
    pub q: f64,
    /// Reactor volume, l.
    pub v: f64,
    /// Reaction rate constant, 1/min.
    pub k0: f64,
    /// Activation energy over the gas constant, K.
    pub e_over_r: f64,
    /// Feed temperature, K.
    pub t0: f64,
    /// Inlet coolant temperature, K.
    pub tc0: f64,
    /// Heat of reaction, cal/mol.
    pub dh: f64,
    pub cp: f64,
    pub cpc: f64,
    pub rho: f64,
    pub rho_c: f64,
    /// Heat transfer coefficient, cal/(min K).
    pub ha: f64,
    /// Inlet feed concentration, mol/l.
    pub ca0: f64,
}

impl Default for CstrParams {
    fn default() -> Self {
        Self {
            q: 100.0,
            v: 100.0,
            k0: 7.2e10,
            e_over_r: 1e4,
            t0: 350.0,
            tc0: 350.0,
            dh: -2e5,
            cp: 1.0,
            cpc: 1.0,
            rho: 1e3,
            rho_c: 1e3,
            ha: 7e5,
            ca0: 1.0,
        }
    }
}

impl CstrParams {
    pub fn k1(&self) -> f64 {
        -self.dh * self.k0 / (self.rho * self.cp)
    }

    pub fn k2(&self) -> f64 {
        self.rho_c * self.cpc / (self.rho * self.cp * self.v)
    }

    pub fn k3(&self) -> f64 {
        self.ha / (self.rho_c * self.cpc)
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("q", self.q),
            ("v", self.v),
            ("k0", self.k0),
            ("e_over_r", self.e_over_r),
            ("t0", self.t0),
            ("tc0", self.tc0),
            ("cp", self.cp),
            ("cpc", self.cpc),
            ("rho", self.rho),
            ("rho_c", self.rho_c),
            ("ha", self.ha),
            ("ca0", self.ca0),
        ];
        for (name, v) in positive {
            check(v.is_finite() && v > 0.0, name, || format!("must be positive, got {v}"))?;
        }
        check(self.dh.is_finite() && self.dh < 0.0, "dh", || format!("must be negative (exothermic), got {}", self.dh))
    }

    fn rhs(&self, s: CstrState, qc: f64, t0: f64, tc0: f64) -> (f64, f64) {
        let arrhenius = s.ca * (-self.e_over_r / s.t).exp();
        let flow = self.q / self.v;
        let dca = flow * (self.ca0 - s.ca) - self.k0 * arrhenius;
        let dt =
            flow * (t0 - s.t) + self.k1() * arrhenius + self.k2() * qc * (1.0 - (-self.k3() / qc).exp()) * (tc0 - s.t);
        (dca, dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CstrState {
    /// Concentration, mol/l.
    pub ca: f64,
    /// Temperature, K.
    pub t: f64,
}

impl CstrState {
    /// Approximate operating point for `qc = 103.411` l/min.
    pub const NOMINAL: CstrState = CstrState { ca: 0.1, t: 438.5 };
}

/// Piecewise-constant inputs for one CSTR run, one entry per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CstrInputs {
    pub qc: Vec<f64>,
    /// Feed temperature per sample; `None` keeps `params.t0`.
    pub t0: Option<Vec<f64>>,
    /// Coolant inlet temperature per sample; `None` keeps `params.tc0`.
    pub tc0: Option<Vec<f64>>,
}

impl CstrInputs {
    pub fn constant(qc: f64, samples: usize) -> Self {
        Self { qc: vec![qc; samples], t0: None, tc0: None }
    }

    pub fn len(&self) -> usize {
        self.qc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qc.is_empty()
    }

    /// Apply a temperature disturbance scenario; other scenarios are rejected.
    pub fn with_scenario(mut self, params: &CstrParams, scenario: &Scenario) -> Result<Self, PlantError> {
        scenario.validate()?;
        match scenario {
            Scenario::Nominal => {}
            Scenario::QcStepProfile { levels, dwell } => {
                let n = self.len();
                self.qc = QcProfile { levels: levels.clone(), dwell: *dwell }.samples(n);
            }
            Scenario::Tc0Sinusoid { amplitude, target } => {
                let base = match target {
                    DisturbanceTarget::CoolantInlet => params.tc0,
                    DisturbanceTarget::Feed => params.t0,
                };
                let wave: Vec<f64> = (0..self.len()).map(|k| base + amplitude * (k as f64).sin()).collect();
                match target {
                    DisturbanceTarget::CoolantInlet => self.tc0 = Some(wave),
                    DisturbanceTarget::Feed => self.t0 = Some(wave),
                }
            }
            _ => return Err(PlantError::ScenarioMismatch { scenario: scenario.name(), plant: "cstr" }),
        }
        Ok(self)
    }
}

/// Step profile of coolant flow levels, each held for `dwell` samples and
/// cycling when exhausted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcProfile {
    pub levels: Vec<f64>,
    pub dwell: usize,
}

impl QcProfile {
    /// 103, 105, 110, 100, 99 and 110 l/min, 100 samples each.
    pub fn paper() -> Self {
        Self { levels: vec![103.0, 105.0, 110.0, 100.0, 99.0, 110.0], dwell: 100 }
    }

    /// `count` levels drawn uniformly from `[lo, hi]`.
    pub fn random(count: usize, lo: f64, hi: f64, dwell: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { levels: (0..count).map(|_| rng.random_range(lo..=hi)).collect(), dwell }
    }

    pub fn total_samples(&self) -> usize {
        self.levels.len() * self.dwell
    }

    pub fn samples(&self, n: usize) -> Vec<f64> {
        (0..n).map(|k| self.levels[(k / self.dwell.max(1)) % self.levels.len()]).collect()
    }

    pub fn inputs(&self) -> CstrInputs {
        CstrInputs { qc: self.samples(self.total_samples()), t0: None, tc0: None }
    }
}

/// Sampled CSTR trajectory; `states[k]` is the state at `k * sample_period`
/// and `qc[k]` the flow applied over `[k, k+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CstrSeries {
    pub sample_period: f64,
    pub states: Vec<CstrState>,
    pub qc: Vec<f64>,
}

impl CstrSeries {
    pub fn ca(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.ca).collect()
    }

    pub fn temperature(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let rows = self.states.iter().enumerate().map(|(k, s)| {
            let qc = self.qc.get(k).copied().unwrap_or(f64::NAN);
            vec![fmt_f64(k as f64 * self.sample_period), fmt_f64(s.ca), fmt_f64(s.t), fmt_f64(qc)]
        });
        write_csv(writer, &["t", "ca", "temperature", "qc"], rows)
    }
}

/// Integrate the CSTR over `inputs.len()` sample periods of `sample_period`
/// minutes, with `substeps` fourth-order steps per sample.
pub fn cstr_simulate(
    params: &CstrParams,
    initial: CstrState,
    inputs: &CstrInputs,
    sample_period: f64,
    substeps: usize,
) -> Result<CstrSeries, PlantError> {
    params.validate()?;
    check(sample_period.is_finite() && sample_period > 0.0, "sample_period", || {
        format!("must be positive, got {sample_period}")
    })?;
    check(substeps >= 1, "substeps", || "must be at least 1".into())?;
    check(initial.ca >= 0.0 && initial.t > 0.0, "initial", || format!("needs Ca >= 0 and T > 0, got {initial:?}"))?;
    let h = sample_period / substeps as f64;
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(initial);
    let mut s = initial;
    for (k, &qc) in inputs.qc.iter().enumerate() {
        let t_start = k as f64 * sample_period;
        if qc.is_nan() || qc <= 0.0 {
            return Err(PlantError::NonPositiveQc { qc, t: t_start });
        }
        let t0 = inputs.t0.as_ref().map_or(params.t0, |v| v[k]);
        let tc0 = inputs.tc0.as_ref().map_or(params.tc0, |v| v[k]);
        for _ in 0..substeps {
            let f = |st: CstrState| params.rhs(st, qc, t0, tc0);
            let add = |st: CstrState, d: (f64, f64), w: f64| CstrState { ca: st.ca + w * d.0, t: st.t + w * d.1 };
            let k1 = f(s);
            let k2 = f(add(s, k1, 0.5 * h));
            let k3 = f(add(s, k2, 0.5 * h));
            let k4 = f(add(s, k3, h));
            s = CstrState {
                ca: s.ca + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                t: s.t + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            };
        }
        if !(s.ca.is_finite() && s.t.is_finite()) {
            return Err(PlantError::NonFinite { t: t_start + sample_period });
        }
        states.push(s);
    }
    Ok(CstrSeries { sample_period, states, qc: inputs.qc.clone() })
}

/// One regression input: `channel` delayed by `lag` samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lag {
    pub channel: String,
    pub lag: usize,
}

impl Lag {
    pub fn new(channel: &str, lag: usize) -> Self {
        Self { channel: channel.to_string(), lag }
    }

    fn column_name(&self) -> String {
        if self.lag == 0 {
            format!("{}(k)", self.channel)
        } else {
            format!("{}(k-{})", self.channel, self.lag)
        }
    }
}

/// Inputs `x(t), x(t-6), x(t-12), x(t-18)` predicting `x(t+6)`, in samples.
pub fn mackey_glass_lags() -> (Vec<Lag>, usize) {
    ([0, 6, 12, 18].into_iter().map(|l| Lag::new("x", l)).collect(), 6)
}

/// Inputs `Ca(k), Ca(k-1), Ca(k-2), qc(k-1)` predicting `Ca(k+1)`.
pub fn cstr_lags() -> (Vec<Lag>, usize) {
    (vec![Lag::new("ca", 0), Lag::new("ca", 1), Lag::new("ca", 2), Lag::new("qc", 1)], 1)
}

/// Named, equally long channels of a sampled run.
pub type Channels<'a> = [(&'a str, &'a [f64])];

/// Lag-embed `channels` into `(x, y)` samples whose target is `target`
/// advanced by `offset`. Produces `len - max_lag - offset` samples.
pub fn build_regression_dataset(
    channels: &Channels<'_>,
    lags: &[Lag],
    target: &str,
    offset: usize,
) -> Result<TimeSeriesDataset, PlantError> {
    let find = |name: &str| {
        channels
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| PlantError::UnknownChannel(name.to_string()))
    };
    let target_values = find(target)?;
    let len = channels.iter().map(|(_, v)| v.len()).min().unwrap_or(0);
    let max_lag = lags.iter().map(|l| l.lag).max().unwrap_or(0);
    if len <= max_lag + offset {
        return Err(PlantError::TooShort { len, max_lag, offset });
    }
    let columns: Vec<&[f64]> = lags.iter().map(|l| find(&l.channel)).collect::<Result<_, _>>()?;
    let mut inputs = Vec::with_capacity(len - max_lag - offset);
    let mut targets = Vec::with_capacity(len - max_lag - offset);
    for k in max_lag..len - offset {
        inputs.push(lags.iter().zip(&columns).map(|(l, col)| col[k - l.lag]).collect());
        targets.push(target_values[k + offset]);
    }
    let meta = DatasetMeta {
        plant: String::new(),
        scenario: String::new(),
        input_names: lags.iter().map(Lag::column_name).collect(),
        target_name: if offset == 0 { format!("{target}(k)") } else { format!("{target}(k+{offset})") },
    };
    Ok(TimeSeriesDataset::new(inputs, targets, meta))
}

/// Parameters and seed of a generated run, written next to its CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "plant", rename_all = "kebab-case")]
pub enum RunMetadata {
    MackeyGlass {
        params: MackeyGlassParams,
        scenario: Scenario,
        sample_every: usize,
    },
    Cstr {
        params: CstrParams,
        scenario: Scenario,
        initial: CstrState,
        sample_period: f64,
        substeps: usize,
        qc_levels: Vec<f64>,
        dwell: usize,
    },
}

impl RunMetadata {
    pub fn to_text(&self) -> String {
        crate::io::to_json_exact(self).expect("metadata serializes")
    }
}
