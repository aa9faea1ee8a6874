use dstc::actions::{ActionModel, Scope};
use dstc::cascade::{three_state_intensities, Cascade};
use dstc::engine::{
    apply_reconfiguration_rule, critical_tau, decorrelation_check, energy_trace, solve_reconfiguration, Engine,
    EngineOptions, Reduction,
};
use dstc::mass::{dp_energy, LocalOptions};
use dstc::presets;
use dstc::quadrature::QuadOptions;
use dstc::scenario::{validate, DiagnosticCode, Experiment};
use proptest::prelude::*;

fn build(c: dstc::config::ScenarioConfig) -> Experiment {
    c.build(None).unwrap()
}

fn event(r: Reduction) -> dstc::engine::ReductionEvent {
    match r {
        Reduction::Event(e) => e,
        other => panic!("expected an event, got {other:?}"),
    }
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

#[test]
fn constant_energy_lifetime() {
    for (e, t_s) in [(2.0, 0.0), (0.25, 3.0), (7.5, 1.0)] {
        let exp = build(presets::two_state_tabulated(0.5, e, t_s));
        let t = critical_tau(&exp, None).unwrap().unwrap();
        assert!((t / (t_s + 1.0 / e) - 1.0).abs() < 1e-9, "{t}");
    }
}

#[test]
fn geometric_lifetime_uses_dp_energy() {
    let exp = build(presets::two_state(0.5, 1.0));
    let e = dp_energy(&exp.scenarios[0].trajectory, &exp.scenarios[1].trajectory, 2.0, &exp.units).unwrap();
    let t = critical_tau(&exp, None).unwrap().unwrap();
    assert!((t / (1.0 + 1.0 / e) - 1.0).abs() < 1e-8, "{t} vs {}", 1.0 + 1.0 / e);
}

#[test]
fn identical_bodies_never_reduce() {
    let mut c = presets::two_state(0.5, 0.0);
    c.scenarios[1].moves.clear();
    let exp = build(c);
    assert_eq!(critical_tau(&exp, None).unwrap(), None);
    let engine = Engine::new(&exp, EngineOptions::default());
    assert!(matches!(engine.first_reduction().unwrap(), Reduction::NoReduction { .. }));
}

#[test]
fn two_state_rule_is_born_on_grid() {
    for k in 1..=99 {
        let i1 = k as f64 / 100.0;
        let exp = build(presets::two_state_tabulated(i1, 1.0, 0.0));
        let ev = event(Engine::new(&exp, EngineOptions::default()).first_reduction().unwrap());
        assert_eq!(ev.outcomes.len(), 2);
        for o in &ev.outcomes {
            let w = o.intensities.iter().position(|&x| x == 1.0).expect("one survivor");
            let born = if w == 0 { i1 } else { 1.0 - i1 };
            assert!((o.probability - born).abs() < 1e-12, "I1 = {i1}: {} vs {born}", o.probability);
        }
    }
}

#[test]
fn three_state_basis_and_subcritical_emptiness() {
    let exp = build(presets::three_state(0.5));
    let engine = Engine::new(&exp, EngineOptions::default());
    let inten = three_state_intensities(0.5);
    let ev = event(engine.reduce(&inten, 0.0).unwrap());
    assert!((ev.t_c - 1.0).abs() < 1e-12, "t_c {}", ev.t_c);
    assert_eq!(ev.basis.len(), 1);
    assert!(angle(&ev.basis[0], &[-0.25, -0.25, 0.5]) < 1e-8);
    let below = engine.system(&inten, 0.99 * ev.t_c).unwrap();
    assert!(solve_reconfiguration(&below).is_empty());
    let at = engine.system(&inten, ev.t_c).unwrap();
    assert_eq!(solve_reconfiguration(&at).len(), 1);
}

#[test]
fn three_state_enhanced_probability() {
    for i2 in [0.1, 0.25, 0.5, 0.9] {
        let exp = build(presets::three_state(i2));
        let tree = Cascade::new(&exp, EngineOptions::default()).tree().unwrap();
        let p = 2.0 * i2 / (1.0 + i2);
        assert!((tree.survivor[2] - p).abs() < 1e-12, "I2 = {i2}: {}", tree.survivor[2]);
    }
}

#[test]
fn detectors_reconfigure_six_ways() {
    let exp = build(presets::detectors(3, &[0.2, 0.3, 0.5]));
    let ev = event(Engine::new(&exp, EngineOptions::default()).first_reduction().unwrap());
    assert_eq!(ev.outcomes.len(), 6);
    let total: f64 = ev.outcomes.iter().map(|o| o.probability).sum();
    assert!((total - 1.0).abs() < 1e-14);
    // Every outcome deletes exactly one scenario or keeps exactly one.
    for o in &ev.outcomes {
        let alive = o.intensities.iter().filter(|&&x| x > 0.0).count();
        assert!(alive == 1 || alive == 2, "{:?}", o.intensities);
    }
}

#[test]
fn detector_expectation_is_born() {
    for (n, inten) in [(3, vec![0.2, 0.3, 0.5]), (4, vec![0.1, 0.2, 0.3, 0.4])] {
        let exp = build(presets::detectors(n, &inten));
        let tree = Cascade::new(&exp, EngineOptions::default()).tree().unwrap();
        assert_eq!(tree.unresolved_probability(), 0.0);
        for (p, i) in tree.survivor.iter().zip(&inten) {
            assert!((p - i).abs() < 1e-12, "{p} vs {i}");
        }
    }
}

#[test]
fn decorrelation_boundary_at_six_sigma() {
    let sig = 0.05;
    for (dx, expect) in [(6.0 * sig * 0.999, false), (6.0 * sig * 1.001, true)] {
        let mut c = presets::three_state(0.25);
        c.scenarios[1].moves[0].step.as_mut().unwrap().to = [dx, 0.0, 0.0];
        let exp = build(c);
        let d = decorrelation_check(&exp, 1.0);
        assert_eq!(d[0][1], expect, "Δs = {dx}");
        assert!(d[0][2] && d[1][2]);
        assert!(!d[0][0]);
    }
}

#[test]
fn correlated_pair_competes_as_one_bundle() {
    // Below 6σ the first two states share their trigger: two-bundle
    // pattern, Born probabilities.
    let mut c = presets::three_state(0.25);
    c.scenarios[1].moves[0].step.as_mut().unwrap().to = [0.2, 0.0, 0.0];
    let exp = build(c);
    let tree = Cascade::new(&exp, EngineOptions::default()).tree().unwrap();
    assert!((tree.survivor[2] - 0.25).abs() < 1e-12, "{}", tree.survivor[2]);
}

#[test]
fn criticality_is_consistent() {
    let exp = build(presets::detectors(3, &[0.2, 0.3, 0.5]));
    let engine = Engine::new(&exp, EngineOptions::default());
    let inten = exp.intensities();
    let t_c = engine.critical_time(&inten, 0.0).unwrap().unwrap();
    let below = engine.system(&inten, 0.99 * t_c).unwrap();
    assert!(below.lambda_star() < 1.0);
    assert!(solve_reconfiguration(&below).is_empty());
    let at = engine.system(&inten, t_c).unwrap();
    assert!((at.lambda_star() - 1.0).abs() < 1e-9);
    assert!(!solve_reconfiguration(&at).is_empty());
}

#[test]
fn action_of_a_step_and_a_delayed_step() {
    let exp = build(presets::two_state_tabulated(0.5, 2.0, 1.0));
    let m = ActionModel::new(&exp, LocalOptions::default(), QuadOptions::rel(1e-10));
    assert_eq!(m.action(Scope::Global, 0, 1, 0.5).unwrap(), 0.0);
    assert!((m.action(Scope::Global, 0, 1, 4.0).unwrap() - 6.0).abs() < 1e-12);
    // Geometry: delaying the move by 1 shifts the action curve by 1.
    let plain = build(presets::two_state(0.5, 0.0));
    let delayed = dstc::cascade::with_delay(&plain, 1.0);
    let a = ActionModel::new(&plain, LocalOptions::default(), QuadOptions::rel(1e-10));
    let b = ActionModel::new(&delayed, LocalOptions::default(), QuadOptions::rel(1e-10));
    let sa = a.action(Scope::Global, 0, 1, 2.0).unwrap();
    let sb = b.action(Scope::Global, 0, 1, 3.0).unwrap();
    assert!(sa > 0.0);
    assert!((sa / sb - 1.0).abs() < 1e-12, "{sa} vs {sb}");
    assert_eq!(b.action(Scope::Global, 0, 1, 0.9).unwrap(), 0.0);
}

#[test]
fn rule_rejects_empty_basis() {
    let exp = build(presets::two_state_tabulated(0.5, 1.0, 0.0));
    let engine = Engine::new(&exp, EngineOptions::default());
    let mut sys = engine.system(&exp.intensities(), 0.5).unwrap();
    engine.attach_energies(&mut sys).unwrap();
    assert!(apply_reconfiguration_rule(&sys, &[]).is_err());
}

#[test]
fn trivial_intensity_collapses_immediately() {
    let exp = build(presets::two_state_tabulated(1.0 - 1e-18, 1.0, 0.0)).with_intensities(&[1.0, 0.0]);
    let engine = Engine::new(&exp, EngineOptions::default());
    assert_eq!(engine.first_reduction().unwrap(), Reduction::Collapsed { survivor: 0 });
}

#[test]
fn energy_trace_offsets() {
    for c in [presets::two_state(0.3, 0.0), presets::two_state_tabulated(0.3, 1.5, 0.0)] {
        let exp = build(c);
        let tr = energy_trace(&exp, 40.0, 200, EngineOptions::default()).unwrap();
        let tc = tr.collapse.expect("collapses");
        let e = |t: f64| dp_energy(&exp.scenarios[0].trajectory, &exp.scenarios[1].trajectory, t, &exp.units).unwrap();
        for s in &tr.samples {
            if s.t < tc {
                let want = if exp.energies.is_some() { 0.3 * 0.7 * 1.5 } else { 0.3 * 0.7 * e(s.t) };
                assert!((s.offset - want).abs() <= 1e-9 * want.abs().max(1e-300), "{} vs {want}", s.offset);
            } else {
                assert_eq!(s.offset, 0.0);
            }
        }
    }
}

#[test]
fn validation_reports_codes() {
    let mut exp = build(presets::three_state(0.25));
    exp.scenarios[0].intensity = 0.9;
    let d = validate(&exp);
    assert!(d.iter().any(|x| x.code == DiagnosticCode::Normalization));
    exp.scenarios[1].id = exp.scenarios[0].id;
    assert!(validate(&exp).iter().any(|x| x.code == DiagnosticCode::DuplicateId));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn critical_time_shifts_with_split(e in 0.1f64..10.0, t_s in 0.0f64..50.0, i1 in 0.05f64..0.95) {
        let a = build(presets::two_state_tabulated(i1, e, 0.0));
        let b = build(presets::two_state_tabulated(i1, e, t_s));
        let ta = critical_tau(&a, None).unwrap().unwrap();
        let tb = critical_tau(&b, None).unwrap().unwrap();
        prop_assert!(((tb - t_s) - ta).abs() <= 1e-9 * ta.max(1.0));
    }

    #[test]
    fn outcome_probabilities_ignore_energy_scale(i2 in 0.05f64..0.95, e in 0.2f64..5.0) {
        // Rates scale with E; the rule's probabilities do not.
        let mut c = presets::three_state(i2);
        for en in &mut c.energies {
            if let Some(v) = en.value.as_mut() {
                *v *= e;
            }
        }
        let exp = build(c);
        let p = Cascade::new(&exp, EngineOptions::default()).tree().unwrap().survivor[2];
        prop_assert!((p - 2.0 * i2 / (1.0 + i2)).abs() < 1e-12);
    }
}
