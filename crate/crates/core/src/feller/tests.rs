use super::*;
use crate::models;
use crate::state::{signed_to_index, StateSet};

fn osc_value(t: f64, j: i64) -> f64 {
    if j == 0 {
        (-t).exp()
    } else {
        (1.0 - (-t).exp()) / 2f64.powi(j.unsigned_abs() as i32 + 1)
    }
}

#[test]
fn term0_examples() {
    let grid = TimeGrid::uniform(0.0, 1.0, 1e-2).unwrap();
    let t0 = term0(&models::zero(), 0.0, 3, &grid, Truncation::new(5)).unwrap();
    assert!((0..=grid.panels()).all(|i| t0.value(i, 3) == 1.0 && t0.mass(i) == 1.0));

    let osc = models::oscillating(60);
    let t0 = term0(&osc, 0.0, 0, &grid, Truncation::signed(5)).unwrap();
    assert!((t0.value(grid.panels(), 0) - (-1.0f64).exp()).abs() < 1e-14);

    let rec = models::reciprocal(1.0, 1e-6).unwrap();
    let grid = TimeGrid::uniform(0.0, 0.75, 0.01).unwrap();
    let t0 = term0(&rec, 0.0, 0, &grid, Truncation::new(2)).unwrap();
    assert!((t0.value(grid.panels(), 0) - 0.25).abs() < 1e-12);
}

#[test]
fn next_term_examples() {
    let grid = TimeGrid::uniform(0.0, 2.0, 1e-3).unwrap();
    let zero = Scheme::new(&models::zero(), &grid, Truncation::new(4)).unwrap();
    let t1 = zero.next_term(&zero.term0(0).unwrap());
    assert_eq!(t1.max_mass(), 0.0);

    let poisson = Scheme::new(&models::poisson(1.0), &grid, Truncation::new(10)).unwrap();
    let t1 = poisson.next_term(&poisson.term0(0).unwrap());
    assert!((t1.value(grid.panels(), 1) - 2.0 * (-2.0f64).exp()).abs() < 1e-7);

    // One jump 0 -> 5, then survival at rate 32.
    let grid = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
    let osc = Scheme::new(&models::oscillating(60), &grid, Truncation::signed(8)).unwrap();
    let t1 = osc.next_term(&osc.term0(0).unwrap());
    let f = |w: f64| (-w).exp() * 2f64.powi(-6) * (-32.0 * (1.0 - w)).exp();
    let oracle = crate::quadrature::adaptive_simpson(&f, 0.0, 1.0, 1e-14).unwrap();
    let got = t1.value(grid.panels(), signed_to_index(5));
    assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
}

#[test]
fn oscillating_closed_form() {
    let grid = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
    let field = minimal_solution(&models::oscillating(60), 0.0, 0, &grid, Truncation::signed(20), &SeriesOptions::default()).unwrap();
    let m = grid.panels();
    for j in -5..=5i64 {
        let got = field.value(m, signed_to_index(j));
        assert!((got - osc_value(1.0, j)).abs() < 1e-9, "j={j}: {got}");
    }
    assert!((field.value(m, signed_to_index(1)) - 0.1580302).abs() < 1e-7);
    let d = regularity_defect(&field, 1.0).unwrap();
    assert!(d.defect <= d.truncation_outflow + 1e-12);
    assert!(d.unexplained.abs() < 1e-12);
}

#[test]
fn poisson_and_yule_closed_forms() {
    let grid = TimeGrid::uniform(0.0, 2.0, 1e-3).unwrap();
    let field = minimal_solution(&models::poisson(1.0), 0.0, 0, &grid, Truncation::new(40), &SeriesOptions::default()).unwrap();
    let mut fact = 1.0;
    for k in 0..=10 {
        if k > 0 {
            fact *= k as f64;
        }
        let exact = (-2.0f64).exp() * 2f64.powi(k) / fact;
        assert!((field.value(grid.panels(), k as usize) - exact).abs() < 1e-6);
    }
    assert!(field.terms_used < 40 && field.last_term_mass < 1e-10);

    let grid = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
    let field = minimal_solution(&models::yule(1.0), 0.0, 0, &grid, Truncation::new(80), &SeriesOptions::default()).unwrap();
    let e = (-1.0f64).exp();
    for k in 0..=10 {
        let exact = e * (1.0 - e).powi(k);
        assert!((field.value(grid.panels(), k as usize) - exact).abs() < 1e-6);
    }
}

#[test]
fn explicit_terms_match_resolvent_when_converged() {
    let grid = TimeGrid::uniform(0.0, 1.0, 1e-2).unwrap();
    let model = models::birth_death(1.0, 1.0, 1.0);
    let trunc = Truncation::new(30);
    let a = minimal_solution(&model, 0.0, 2, &grid, trunc, &SeriesOptions::terms(1e-14, 500)).unwrap();
    let b = minimal_solution(&model, 0.0, 2, &grid, trunc, &SeriesOptions::default()).unwrap();
    let diff = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn non_convergence_carries_partial_field() {
    let grid = TimeGrid::uniform(0.0, 1.0, 1e-2).unwrap();
    match minimal_solution(&models::poisson(5.0), 0.0, 0, &grid, Truncation::new(40), &SeriesOptions::terms(1e-10, 3)) {
        Err(Error::NonConvergence { terms, partial, .. }) => {
            assert_eq!(terms, 3);
            assert_eq!(partial.terms_used, 3);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn explosive_pure_birth_loses_mass() {
    let grid = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
    let model = models::pure_birth(2.0, 2.0);
    let split = split_defect(&model, 0.0, 0, &grid, Truncation::new(64), &SeriesOptions::default()).unwrap();
    assert!(split.explosive);
    assert!(split.defect_outer > 0.3, "{split:?}");
    assert!((split.defect_outer - 0.5944).abs() < 2e-3, "{split:?}");

    let split = split_defect(&models::oscillating(60), 0.0, 0, &grid, Truncation::signed(20), &SeriesOptions::default()).unwrap();
    assert!(!split.explosive, "{split:?}");

    let field = minimal_solution(&models::zero(), 0.0, 1, &grid, Truncation::new(3), &SeriesOptions::default()).unwrap();
    assert_eq!(regularity_defect(&field, 1.0).unwrap().defect, 0.0);
}

#[test]
fn chapman_kolmogorov() {
    let trunc = Truncation::new(60);
    let grid = TimeGrid::uniform(0.0, 2.0, 1e-3).unwrap();
    let model = models::poisson(1.0);
    let opts = SeriesOptions::default();
    let a = minimal_solution(&model, 0.0, 0, &grid, trunc, &opts).unwrap();
    let mid = Scheme::new(&model, &TimeGrid::uniform(1.0, 2.0, 1e-3).unwrap(), trunc)
        .unwrap()
        .start_fields(&opts)
        .unwrap();
    assert!(ck_residual(&a, &mid, 2.0).unwrap() <= 1e-6);

    let zero = models::zero();
    let grid = TimeGrid::uniform(0.0, 1.0, 0.1).unwrap();
    let a = minimal_solution(&zero, 0.0, 1, &grid, Truncation::new(3), &opts).unwrap();
    let mid = Scheme::new(&zero, &TimeGrid::uniform(0.5, 1.0, 0.1).unwrap(), Truncation::new(3))
        .unwrap()
        .start_fields(&opts)
        .unwrap();
    assert_eq!(ck_residual(&a, &mid, 1.0).unwrap(), 0.0);
    assert!(ck_residual(&a, &mid, 0.95).is_err());
}

#[test]
fn variants_agree() {
    let grid = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
    for (model, trunc, x) in [
        (models::poisson(1.0), Truncation::new(8), 0),
        (models::yule(1.0), Truncation::new(8), 0),
        (models::oscillating(60), Truncation::signed(10), 0),
        (models::modulated_poisson(1.0, 0.5, 6.0), Truncation::new(8), 0),
    ] {
        let s = Scheme::new(&model, &grid, trunc).unwrap();
        for node in [250, 1000] {
            let f = s.terms_at(x, 4, node, Variant::ForwardForm).unwrap();
            let b = s.terms_at(x, 4, node, Variant::BackwardForm).unwrap();
            for n in 0..=4 {
                let d = f[n].iter().zip(&b[n]).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                assert!(d < 1e-6, "{} n={n} node={node}: {d}", model.name());
            }
        }
    }
}

#[test]
fn start_family_matches_forward_solutions() {
    let grid = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
    let model = models::birth_death(0.5, 1.0, 1.5);
    let trunc = Truncation::new(30);
    let s = Scheme::new(&model, &grid, trunc).unwrap();
    let fam = s.start_family(&StateSet::singleton(1)).unwrap();
    for x in 0..4 {
        let fwd = s.minimal_solution(x, &SeriesOptions::default()).unwrap();
        assert!((fam.value(0, x) - fwd.value(grid.panels(), 1)).abs() < 1e-6);
    }
}

#[test]
fn field_output() {
    let grid = TimeGrid::uniform(0.0, 1.0, 0.5).unwrap();
    let field = minimal_solution(&models::zero(), 0.0, 1, &grid, Truncation::new(2), &SeriesOptions::default()).unwrap();
    let mut buf = Vec::new();
    field.write_csv(&mut buf, Some(&[2])).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "t,state,value\n1,0,0\n1,1,1\n");
    let json: serde_json::Value = serde_json::from_str(&field.to_json(None).unwrap()).unwrap();
    assert_eq!(json["terms_used"], 2);
    assert_eq!(json["values"][2][1], 1.0);
}
