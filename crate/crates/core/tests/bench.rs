use proptest::prelude::*;
use smoothfuzz::bench::{rms, run_experiment, spec_from_manifest, write_artifacts, Cell, ExperimentSpec, PlantSetup};

fn two_pass_rms(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    for v in values {
        sum += v * v;
    }
    let mean = sum / values.len() as f64;
    mean.sqrt()
}

proptest! {
    #[test]
    fn rms_matches_naive_oracle(values in prop::collection::vec(-1e3..1e3f64, 1..300)) {
        let got = rms(&values).unwrap();
        let want = two_pass_rms(&values);
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }
}

fn small_mackey_glass(seed: u64) -> ExperimentSpec {
    let mut spec = ExperimentSpec::mackey_glass(seed);
    spec.train.max_epochs = 5;
    spec.train.restarts = 2;
    if let PlantSetup::MackeyGlass(setup) = &mut spec.plant {
        setup.samples = 300;
    }
    spec
}

#[test]
fn every_cell_is_filled_and_runs_repeat_exactly() {
    let spec = small_mackey_glass(3);
    let a = run_experiment(&spec).unwrap();
    let b = run_experiment(&spec).unwrap();
    assert_eq!(a.table.to_csv().unwrap(), b.table.to_csv().unwrap());
    assert_eq!(a.table.rows.len(), spec.compositions.len());
    assert_eq!(a.table.columns, spec.plant.columns());
    for row in &a.table.rows {
        assert_eq!(row.cells.len(), a.table.columns.len());
        for cell in &row.cells {
            assert!(matches!(cell, Cell::Value(v) if v.is_finite() && *v >= 0.0), "{cell:?}");
        }
    }
    let other = run_experiment(&small_mackey_glass(4)).unwrap();
    assert_ne!(a.table.to_csv().unwrap(), other.table.to_csv().unwrap());
}

#[test]
fn artifacts_are_complete_and_manifest_reruns_the_experiment() {
    let spec = small_mackey_glass(5);
    let result = run_experiment(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_artifacts(&spec, &result, dir.path()).unwrap();
    for name in ["results.csv", "manifest.toml", "convergence.svg", "model_atan.json", "trace_acos_noise.csv"] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    let again = spec_from_manifest(&manifest).unwrap();
    assert_eq!(again, spec);
    let rerun = run_experiment(&again).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(rerun.table.to_csv().unwrap(), csv);
}

#[test]
fn cstr_experiment_uses_81_rules_on_4_inputs() {
    let mut spec = ExperimentSpec::cstr(1);
    spec.compositions.truncate(1);
    spec.train.max_epochs = 2;
    let result = run_experiment(&spec).unwrap();
    let model = result.runs[0].model.as_ref().unwrap();
    assert_eq!(model.input_arity(), 4);
    assert_eq!(model.rules().len(), 81);
    assert!(result.table.rows[0].cells.iter().all(|c| c.value().is_some()));
}
