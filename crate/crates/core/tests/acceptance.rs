//! The ten acceptance criteria, one report line each. Runs without the
//! libtest harness and exits non-zero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{dp_energy_mc, dp_energy_radial, Blob};
use dstc::cascade::{
    delayed_displacement_scan, locate_transition, signalling_statistic, sweep_three_state, three_state_intensities,
    three_state_probability, Cascade,
};
use dstc::engine::{critical_tau, energy_trace, solve_reconfiguration, Engine, EngineOptions, Reduction};
use dstc::mass::{dp_energy, Displacement, MassBody, MassDistribution, RigidPart};
use dstc::presets;
use dstc::scenario::Experiment;
use dstc::units::UnitSystem;
use dstc::wavepacket::path_intensity_drop;

type Check = std::result::Result<String, String>;

fn build(c: dstc::config::ScenarioConfig) -> Experiment {
    c.build(None).expect("bundled config builds")
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lifetime() -> Check {
    let (e, t_s) = (2.0, 1.5);
    let exp = build(presets::two_state_tabulated(0.5, e, t_s));
    let t = critical_tau(&exp, None).map_err(|x| x.to_string())?.ok_or("no reduction")?;
    let want = t_s + 1.0 / e;
    let rel = (t / want - 1.0).abs();
    ensure(rel < 1e-6, format!("t_c = {t:.15}, t_s + ħ/E = {want}, rel {rel:.1e}"))
}

fn reconfiguration_solution() -> Check {
    let exp = build(presets::three_state(0.5));
    let engine = Engine::new(&exp, EngineOptions::default());
    let inten = three_state_intensities(0.5);
    let ev = match engine.reduce(&inten, 0.0).map_err(|x| x.to_string())? {
        Reduction::Event(e) => e,
        other => return Err(format!("no event: {other:?}")),
    };
    if ev.basis.len() != 1 {
        return Err(format!("basis dimension {}", ev.basis.len()));
    }
    let b = &ev.basis[0];
    let want = [-0.25, -0.25, 0.5];
    // atan2(|b × w|, b·w) stays accurate near zero.
    let dot: f64 = b.iter().zip(&want).map(|(x, y)| x * y).sum();
    let cross = [b[1] * want[2] - b[2] * want[1], b[2] * want[0] - b[0] * want[2], b[0] * want[1] - b[1] * want[0]];
    let angle = cross.iter().map(|x| x * x).sum::<f64>().sqrt().atan2(dot);
    let below = engine.system(&inten, 0.99 * ev.t_c).map_err(|x| x.to_string())?;
    let empty = solve_reconfiguration(&below).is_empty();
    ensure(angle < 1e-8 && empty, format!("t_c = {}, angle {angle:.1e} rad, empty at 0.99·t_c: {empty}", ev.t_c))
}

fn born_analytic() -> Check {
    let mut worst: f64 = 0.0;
    for k in 1..=99 {
        let i1 = k as f64 / 100.0;
        let exp = build(presets::two_state_tabulated(i1, 1.0, 0.0));
        let ev = match Engine::new(&exp, EngineOptions::default()).first_reduction().map_err(|x| x.to_string())? {
            Reduction::Event(e) => e,
            other => return Err(format!("I1 = {i1}: {other:?}")),
        };
        for o in &ev.outcomes {
            let born = if o.intensities[0] == 1.0 { i1 } else { 1.0 - i1 };
            worst = worst.max((o.probability - born).abs());
        }
    }
    let mut worst_n: f64 = 0.0;
    for (n, inten) in [(3, vec![0.2, 0.3, 0.5]), (4, vec![0.1, 0.2, 0.3, 0.4])] {
        let exp = build(presets::detectors(n, &inten));
        let tree = Cascade::new(&exp, EngineOptions::default()).tree().map_err(|x| x.to_string())?;
        for (p, i) in tree.survivor.iter().zip(&inten) {
            worst_n = worst_n.max((p - i).abs());
        }
        worst_n = worst_n.max(tree.unresolved_probability());
    }
    ensure(worst < 1e-12 && worst_n < 1e-12, format!("two-state max dev {worst:.1e}, detectors max dev {worst_n:.1e}"))
}

fn born_monte_carlo() -> Check {
    let inten = [0.2, 0.3, 0.5];
    let exp = build(presets::detectors(3, &inten));
    let est = Cascade::new(&exp, EngineOptions::default()).estimate(100_000, 2024).map_err(|x| x.to_string())?;
    let again = Cascade::new(&exp, EngineOptions::default()).estimate(100_000, 2024).map_err(|x| x.to_string())?;
    let z: Vec<f64> = (0..3).map(|i| (est.frequencies[i] - inten[i]) / est.stderr[i]).collect();
    let ok = z.iter().all(|x| x.abs() < 3.0) && est == again && est.unresolved == 0;
    ensure(ok, format!("freqs {:?}, z {:.2?}, identical rerun: {}", est.frequencies, z, est == again))
}

fn three_state_deviation() -> Check {
    let base = build(presets::three_state(0.25));
    let rows = sweep_three_state(&base, &[0.1, 0.25, 0.5], 100_000, 52).map_err(|x| x.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &rows {
        let exact_ok = (r.exact - r.analytic).abs() < 1e-12;
        let mc_ok = (r.mc - r.analytic).abs() < 3.0 * r.stderr;
        ok &= exact_ok && mc_ok;
        parts.push(format!("I2={}: p2={:.4} mc={:.4}±{:.4}", r.i2, r.exact, r.mc, r.stderr));
    }
    let quarter = rows.iter().find(|r| r.i2 == 0.25).ok_or("missing I2 = 1/4")?;
    let factor = quarter.mc / 0.25;
    ok &= (factor - 1.6).abs() <= 0.05;
    parts.push(format!("enhancement {factor:.4}"));
    ensure(ok, parts.join(", "))
}

fn signalling() -> Check {
    let exp = build(presets::bell());
    let s = signalling_statistic(&exp, 100_000, 11).map_err(|x| x.to_string())?;
    let (i, o) = (s.aperture_in, s.aperture_out);
    let ok = (i.analytic - 1.0).abs() < 1e-12
        && (i.mc - 1.0).abs() < 3.0 * i.stderr
        && (o.analytic - 2.0).abs() < 1e-12
        && (o.mc - 2.0).abs() < 3.0 * o.stderr;
    ensure(
        ok,
        format!(
            "in: {:.6} (mc {:.4}±{:.4}), out: {:.6} (mc {:.4}±{:.4})",
            i.analytic, i.mc, i.stderr, o.analytic, o.mc, o.stderr
        ),
    )
}

fn dp_oracle() -> Check {
    let u = UnitSystem::dimensionless();
    let dist = |b: &[Blob]| {
        MassDistribution::rigid(
            b.iter().map(|x| MassBody::GaussianBall { center: x.c, sigma: x.s, mass: x.m }).collect(),
            Displacement::none(),
        )
    };
    let shift = |b: &[Blob], v: [f64; 3]| -> Vec<Blob> {
        b.iter().map(|x| Blob { c: [x.c[0] + v[0], x.c[1] + v[1], x.c[2] + v[2]], ..*x }).collect()
    };
    let ball = |c: [f64; 3], s: f64, m: f64| Blob { c, s, m };
    let mut geoms: Vec<(Vec<Blob>, Vec<Blob>)> = vec![
        (vec![ball([0.0; 3], 1.0, 1.0)], vec![ball([0.5, 0.0, 0.0], 1.0, 1.0)]),
        (vec![ball([0.0; 3], 1.0, 1.0)], vec![ball([3.0, 0.0, 0.0], 1.0, 1.0)]),
        (vec![ball([0.0; 3], 0.3, 2.0)], vec![ball([0.0, 0.2, 0.1], 0.3, 2.0)]),
        (vec![ball([0.0; 3], 1.0, 1.0)], vec![ball([0.0; 3], 2.0, 1.0)]),
        (vec![ball([0.0; 3], 0.5, 1.0), ball([2.0, 0.0, 0.0], 0.8, 0.5)], vec![ball([0.4, 0.0, 0.0], 0.5, 1.0), ball([2.0, 0.0, 0.0], 0.8, 0.5)]),
        (vec![ball([0.0; 3], 1.0, 1.0), ball([0.0, 5.0, 0.0], 1.0, 1.0)], vec![ball([2.0, 0.0, 0.0], 1.0, 1.0), ball([0.0, 5.0, 1.5], 1.0, 1.0)]),
    ];
    for (n, a, s, dx) in [(2usize, 1.0, 0.2, 0.1), (3, 1.0, 0.3, 0.5), (2, 0.5, 0.4, 1.0), (3, 2.0, 0.1, 0.05)] {
        let mut l = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    l.push(ball([i as f64 * a, j as f64 * a, k as f64 * a], s, 1.0));
                }
            }
        }
        let m = shift(&l, [dx, 0.3 * dx, 0.0]);
        geoms.push((l, m));
    }
    let mut worst: f64 = 0.0;
    for (a, b) in &geoms {
        let e = dp_energy(&dist(a), &dist(b), 0.0, &u).map_err(|x| x.to_string())?;
        worst = worst.max((e / dp_energy_radial(1.0, a, b) - 1.0).abs());
    }
    // A Monte-Carlo cross-check on one well-separated pair.
    let (pa, pb) = (vec![ball([0.0; 3], 1.0, 1.0)], vec![ball([4.0, 0.0, 0.0], 1.0, 1.0)]);
    let e = dp_energy(&dist(&pa), &dist(&pb), 0.0, &u).map_err(|x| x.to_string())?;
    let (m, se) = dp_energy_mc(1.0, &pa, &pb, 200_000, 3);
    let mc_ok = (e - m).abs() < (0.01 * e).max(3.0 * se);
    // Quadratic law on a lattice for Δs ≪ σ_n.
    let sites: Vec<[f64; 3]> = (0..27).map(|k| [(k % 3) as f64, ((k / 3) % 3) as f64, (k / 9) as f64]).collect();
    let bodies = Arc::new(vec![MassBody::GaussianNucleusLattice { sites, nucleus_mass: 1.0, sigma_n: 0.2 }]);
    let at = |dx: f64| MassDistribution::new(vec![RigidPart::new("solid", bodies.clone(), Displacement::step(0.0, [dx, 0.0, 0.0]))]);
    let rest = at(0.0);
    let pts: Vec<(f64, f64)> = (0..11)
        .map(|k| 0.002 * 10f64.powf(k as f64 / 10.0))
        .map(|x| (x.ln(), dp_energy(&rest, &at(x), 1.0, &u).expect("lattice energy").ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    ensure(
        geoms.len() >= 10 && worst < 1e-2 && mc_ok && (slope - 2.0).abs() <= 0.05,
        format!("{} geometries, max rel dev {worst:.1e}, MC {m:.5}±{se:.5} vs {e:.5}, slope {slope:.4}", geoms.len()),
    )
}

fn energy_bookkeeping() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for c in [presets::two_state(0.5, 0.0), presets::two_state_tabulated(0.5, 2.0, 0.0)] {
        let exp = build(c);
        let tr = energy_trace(&exp, 5.0, 101, EngineOptions::default()).map_err(|x| x.to_string())?;
        let tc = tr.collapse.ok_or("no collapse")?;
        let (mut pre_dev, mut post_max): (f64, f64) = (0.0, 0.0);
        for s in &tr.samples {
            if s.t < tc {
                let e = match &exp.energies {
                    Some(t) => t[0].value_at(s.t),
                    None => dp_energy(&exp.scenarios[0].trajectory, &exp.scenarios[1].trajectory, s.t, &exp.units)
                        .map_err(|x| x.to_string())?,
                };
                pre_dev = pre_dev.max((s.offset - 0.25 * e).abs() / e);
            } else {
                post_max = post_max.max(s.offset.abs());
            }
        }
        ok &= pre_dev <= 1e-9 && post_max == 0.0;
        parts.push(format!("{}: pre rel dev {pre_dev:.1e}, post max |offset| {post_max}", exp.name));
    }
    ensure(ok, parts.join("; "))
}

fn appendix_law() -> Check {
    let u = UnitSystem::dimensionless();
    let mut c_fit: f64 = 0.0;
    let mut oracle_dev: f64 = 0.0;
    for k in 1..=100 {
        let s = 0.001 * k as f64;
        let d = path_intensity_drop(s, 1.0, &u).map_err(|x| x.to_string())?;
        c_fit = c_fit.max((d.numeric - d.linear).abs() / (s * s));
        // Closed form √π erf(x)/(2x), x = √(π s), via its Maclaurin series.
        let x = (PI * s).sqrt();
        let (mut term, mut sum) = (x, x);
        for n in 1..40 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        oracle_dev = oracle_dev.max((d.numeric - sum / x).abs());
    }
    let bound = PI * PI / 10.0;
    ensure(
        oracle_dev < 1e-12 && c_fit <= bound * 1.001,
        format!("fitted C = {c_fit:.5} (expansion π²/10 = {bound:.5}), oracle dev {oracle_dev:.1e}"),
    )
}

fn delay_scan() -> Check {
    let exp = build(presets::delayed());
    let grid = presets::delay_grid();
    let rows = delayed_displacement_scan(&exp, &grid, 0, 0).map_err(|x| x.to_string())?;
    let (a, b) = locate_transition(&rows, three_state_probability(0.25), 0.25).ok_or("no transition")?;
    let step = grid[1] - grid[0];
    let target = 1.0; // ħ/E for E = 1
    ensure(
        a <= target && target <= b && (b - a) <= step * (1.0 + 1e-9),
        format!("transition in [{a:.3}, {b:.3}], ħ/E = {target}, grid step {step:.2}"),
    )
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Check); 10] = [
        ("Diósi-Penrose lifetime", Duration::from_secs(1), lifetime),
        ("reconfiguration solution", Duration::from_secs(1), reconfiguration_solution),
        ("Born's rule (analytic)", Duration::from_secs(1), born_analytic),
        ("Born's rule (Monte Carlo)", Duration::from_secs(30), born_monte_carlo),
        ("three-state deviation", Duration::from_secs(60), three_state_deviation),
        ("signalling ratio", Duration::from_secs(60), signalling),
        ("DP-energy oracle equivalence", Duration::from_secs(120), dp_oracle),
        ("energy bookkeeping", Duration::from_secs(1), energy_bookkeeping),
        ("appendix law", Duration::from_secs(5), appendix_law),
        ("delayed-displacement scan", Duration::from_secs(60), delay_scan),
    ];
    let mut failed = 0;
    for (k, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let r = f();
        let dt = start.elapsed();
        let (ok, detail) = match r {
            Ok(d) => (dt <= *budget, d),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<30} {}  {} [{:.3}s / {}s]",
            k + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            detail,
            dt.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
