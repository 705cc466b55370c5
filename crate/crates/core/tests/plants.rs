use smoothfuzz::plants::{
    cstr_simulate, mackey_glass, CstrInputs, CstrParams, CstrState, DisturbanceTarget, MackeyGlassParams, QcProfile,
    Scenario,
};

/// Explicit Euler on the delay equation with the delay an exact multiple of
/// the step.
fn euler_oracle(p: &MackeyGlassParams, dt: f64, duration: f64) -> Vec<f64> {
    let steps = (duration / dt).round() as usize;
    let delay = (p.tau / dt).round() as usize;
    let mut x = vec![p.x0];
    for k in 0..steps {
        let xd = if k >= delay { x[k - delay] } else { p.x0 };
        let dx = p.a * xd / (1.0 + xd.powf(p.c)) - p.b * x[k];
        x.push(x[k] + dt * dx);
    }
    x
}

#[test]
fn mackey_glass_matches_fine_euler() {
    let p = MackeyGlassParams { duration: 100.0, ..Default::default() };
    let rk = mackey_glass(&p, &Scenario::Nominal).unwrap();
    let fine = euler_oracle(&p, 1e-3, 100.0);
    let worst = rk.values.iter().enumerate().map(|(k, v)| (v - fine[k * 100]).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-2, "max deviation {worst}");
}

#[test]
fn mackey_glass_step_halving_is_fourth_order_on_smooth_segment() {
    // before the delayed term first changes (t < tau) the solution is smooth
    let run = |dt: f64| {
        let p = MackeyGlassParams { dt, duration: 16.0, ..Default::default() };
        *mackey_glass(&p, &Scenario::Nominal).unwrap().values.last().unwrap()
    };
    let (a, b, c) = (run(0.4), run(0.2), run(0.1));
    let first = (a - b).abs();
    let second = (b - c).abs();
    // fourth order shrinks the change about sixteenfold per halving
    assert!(4.0 * second < first, "{first} vs {second}");
}

fn separation(duration: f64) -> f64 {
    let base = MackeyGlassParams { duration, ..Default::default() };
    let bumped = MackeyGlassParams { x0: base.x0 + 1e-6, ..base.clone() };
    let a = mackey_glass(&base, &Scenario::Nominal).unwrap();
    let b = mackey_glass(&bumped, &Scenario::Nominal).unwrap();
    a.values.iter().zip(&b.values).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

// With tau = 17 the largest Lyapunov exponent is close to 0.009 per time
// unit, so a 1e-6 offset grows only to about 2e-5 by t = 300.
#[test]
#[ignore = "separation at t = 300 is about 2e-5; see mackey_glass_perturbation_grows_to_order_one"]
fn mackey_glass_diverges_by_t300() {
    let gap = separation(300.0);
    assert!(gap > 0.1, "trajectories only separated by {gap}");
}

#[test]
fn mackey_glass_perturbation_grows_to_order_one() {
    let early = separation(300.0);
    let late = separation(3000.0);
    assert!(early > 1e-6, "{early}");
    assert!(late > 0.1, "trajectories only separated by {late}");
}

#[test]
fn parameter_change_only_acts_after_switch() {
    let p = MackeyGlassParams { duration: 200.0, ..Default::default() };
    let nominal = mackey_glass(&p, &Scenario::Nominal).unwrap();
    let changed = mackey_glass(&p, &Scenario::ParamChange { b: 0.15, at: 100.0 }).unwrap();
    assert_eq!(nominal.values[..=1000], changed.values[..=1000]);
    assert_ne!(nominal.values[1500], changed.values[1500]);
}

#[test]
fn cstr_reaches_nominal_steady_state() {
    let inputs = CstrInputs::constant(103.411, 1000);
    for initial in [CstrState { ca: 0.09, t: 440.0 }, CstrState { ca: 0.12, t: 435.0 }, CstrState::NOMINAL] {
        let run = cstr_simulate(&CstrParams::default(), initial, &inputs, 0.1, 10).unwrap();
        let end = *run.states.last().unwrap();
        assert!((end.ca - 0.1).abs() <= 0.005, "Ca {} from {initial:?}", end.ca);
        assert!((end.t - 438.5).abs() <= 1.0, "T {} from {initial:?}", end.t);
    }
}

#[test]
fn cstr_step_refinement() {
    let inputs = QcProfile::paper().inputs();
    let inputs = CstrInputs { qc: inputs.qc[..500].to_vec(), ..inputs };
    let coarse = cstr_simulate(&CstrParams::default(), CstrState::NOMINAL, &inputs, 0.1, 10).unwrap();
    let fine = cstr_simulate(&CstrParams::default(), CstrState::NOMINAL, &inputs, 0.1, 100).unwrap();
    let worst = coarse.states.iter().zip(&fine.states).map(|(a, b)| (a.ca - b.ca).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn cstr_stays_physical_in_every_scenario() {
    let params = CstrParams::default();
    let scenarios = [
        Scenario::Nominal,
        Scenario::Tc0Sinusoid { amplitude: 5.0, target: DisturbanceTarget::CoolantInlet },
        Scenario::Tc0Sinusoid { amplitude: 5.0, target: DisturbanceTarget::Feed },
    ];
    for profile in [QcProfile::paper(), QcProfile::random(6, 99.0, 110.0, 100, 5)] {
        for scenario in &scenarios {
            let inputs = profile.inputs().with_scenario(&params, scenario).unwrap();
            let run = cstr_simulate(&params, CstrState::NOMINAL, &inputs, 0.1, 10).unwrap();
            assert!(run.states.iter().all(|s| s.ca >= 0.0 && s.t.is_finite() && s.t > 0.0), "{scenario:?}");
        }
    }
}

#[test]
fn cstr_disturbance_uses_sample_index() {
    let params = CstrParams::default();
    let sc = Scenario::Tc0Sinusoid { amplitude: 5.0, target: DisturbanceTarget::CoolantInlet };
    let inputs = CstrInputs::constant(103.0, 4).with_scenario(&params, &sc).unwrap();
    let tc0 = inputs.tc0.unwrap();
    assert_eq!(tc0[0], 350.0);
    assert_eq!(tc0[3], 350.0 + 5.0 * 3f64.sin());
}
