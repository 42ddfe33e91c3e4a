use jump_kolmogorov::feller::split_defect;
use jump_kolmogorov::models::{self, build_model, probe_states, ModelSpec};
use jump_kolmogorov::qfunction::{check_assumptions, extend_to_halfline, Verdict};
use jump_kolmogorov::{SeriesOptions, StateSet, TimeGrid, Truncation};

fn probe_grid(end: f64) -> Vec<f64> {
    (0..=100).map(|k| end * k as f64 / 100.0).collect()
}

#[test]
fn every_catalog_model_is_conservative() {
    for (spec, model) in models::catalog() {
        let end = if model.horizon().end.is_finite() { 0.9 * model.horizon().end } else { 5.0 };
        model
            .validate(&probe_states(&model), &probe_grid(end))
            .unwrap_or_else(|e| panic!("{}: {e}", spec.family));
    }
}

#[test]
fn assumption_matrix() {
    let states = StateSet::range(0, 20);
    for family in ["poisson", "oscillating", "explosive-birth"] {
        let model = build_model(&ModelSpec::new(family)).unwrap();
        let r = check_assumptions(&model, &states, &probe_grid(10.0), 1e300).unwrap();
        assert_eq!(r.lb_ok, Verdict::Holds, "{family}");
        assert_eq!(r.alb_ok, Verdict::Holds, "{family}");
        assert_eq!(r.l1_ok, Verdict::Holds, "{family}");
    }

    let rec = build_model(&ModelSpec::new("reciprocal")).unwrap();
    let r = check_assumptions(&rec, &StateSet::range(0, 2), &probe_grid(0.999), 1e6).unwrap();
    assert_eq!(r.alb_ok, Verdict::Holds);
    let ext = extend_to_halfline(&rec);
    let r = check_assumptions(&ext, &StateSet::range(0, 2), &probe_grid(2.0), 1e300).unwrap();
    assert_eq!(r.l1_ok, Verdict::Fails);
    assert!(!r.witnesses.is_empty());
}

#[test]
fn bounded_rates_do_not_imply_regularity() {
    let model = build_model(&ModelSpec::new("explosive-birth")).unwrap();
    let grid = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
    let split = split_defect(&model, 0.0, 0, &grid, Truncation::new(64), &SeriesOptions::default()).unwrap();
    assert!(split.explosive);
    assert!(split.explosion_mass() > 0.5);
}

#[test]
fn spec_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let spec = ModelSpec::new("birth-death").param("birth", 0.5).param("death", 2.0);
    std::fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    let loaded = ModelSpec::load(&path).unwrap();
    assert_eq!(loaded, spec);
    let model = build_model(&loaded).unwrap();
    assert_eq!(model.rate(2, 0.0), 1.0 + 1.0 + 4.0);
    assert!(build_model(&ModelSpec::new("no-such-family")).is_err());
    assert!(build_model(&ModelSpec::new("poisson").param("rate", -1.0)).is_err());
}
