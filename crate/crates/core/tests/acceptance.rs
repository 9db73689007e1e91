//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Run alone with `cargo test -p translab-core --test acceptance`; pass
//! criterion numbers as arguments to run a subset.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use translab::flow::{run_flow, FlowConfig};
use translab::geometry::weighted_area_with_rate;
use translab::grid::observed_order;
use translab::soliton::{self, log_lightlike_gap, TerminatedReason};
use translab::stability::{jacobi_residual, second_variation, verify_translator, TestFunctionKind};
use translab::{BaseChart, Calibration, GraphGeometry, SpacelikeGraph, TestFunction, WarpedProfile};

/// Criteria whose failure is expected and recorded; they still print FAIL.
const KNOWN_FAILURES: &[u32] = &[4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}


/// The four translator cases checked by criteria 1 and 5.
fn soliton_cases() -> [(usize, f64, WarpedProfile); 4] {
    [
        (2, 1.0, WarpedProfile::euclidean()),
        (3, 1.0, WarpedProfile::euclidean()),
        (2, 1.0, WarpedProfile::hyperbolic()),
        (2, 0.5, WarpedProfile::spherical()),
    ]
}

fn soliton_graph(profile: &WarpedProfile, n: usize, c: f64, r: (f64, f64), nr: usize, nt: usize) -> SpacelikeGraph {
    let sol = soliton::integrate(profile, n, c, r.1, 1e-3, 1e-12).expect("soliton integrates");
    assert_eq!(sol.terminated_reason, TerminatedReason::ReachedRMax);
    sol.lift_to_graph(BaseChart::warped(profile.clone(), n, r, nr, nt)).expect("lift")
}

fn criterion_1() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, c, profile) in soliton_cases() {
        let fine = soliton_graph(&profile, n, c, (0.1, 2.1), 201, 256);
        let coarse = fine.coarsen(2).unwrap();
        let res = |g: &SpacelikeGraph| {
            let geo = GraphGeometry::compute(g).unwrap();
            geo.max_abs_with_margin(&geo.translator_residual(g.c), 1)
        };
        let (rc, rf) = (res(&coarse), res(&fine));
        let order = observed_order(rc, rf, 2.0);
        pass &= rf <= 1e-4 && order >= 1.8;
        parts.push(format!("{}/n={n}/c={c}: {rf:.2e} order {order:.2}", profile.name()));
    }
    outcome(pass, format!("max|H+cΘ| ≤ 1e-4, order ≥ 1.8; {}", parts.join("; ")))
}

fn criterion_2() -> Outcome {
    let p = WarpedProfile::euclidean();
    let sol = soliton::integrate(&p, 1, 1.0, 10.0, 1e-2, 1e-10).unwrap();
    let err = sol.r.iter().zip(&sol.u_r).map(|(r, ur)| (ur - r.tanh()).abs()).fold(0.0, f64::max);
    let flat = soliton::integrate(&p, 1, 0.0, 10.0, 1e-2, 1e-10).unwrap();
    let zero = flat.u.iter().chain(&flat.u_r).all(|v| *v == 0.0);
    outcome(err <= 1e-8 && zero, format!("max|u_r - tanh r| = {err:.2e} ≤ 1e-8; c = 0 gives u ≡ 0: {zero}"))
}

fn criterion_3() -> Outcome {
    let sol = soliton::integrate(&WarpedProfile::euclidean(), 2, 1.0, 1e3, 1e-2, 1e-10).unwrap();
    let reached = sol.terminated_reason == TerminatedReason::ReachedRMax;
    // u_r = tanh p rounds to 1 in f64 past r ≈ 20; space-likeness is carried
    // by a finite rapidity p, i.e. a finite log(1 - u_r).
    let inside = sol.rapidity.iter().skip(1).all(|p| p.is_finite() && *p > 0.0)
        && sol.u_r.iter().skip(1).all(|u| *u > 0.0 && *u <= 1.0);
    let monotone = sol.rapidity.windows(2).all(|w| w[1] >= w[0]) && sol.u_r.windows(2).all(|w| w[1] >= w[0]);
    let p_last = *sol.rapidity.last().unwrap();
    let gap = log_lightlike_gap(p_last);
    let pass = reached && inside && monotone && gap.is_finite() && sol.r.last() == Some(&1e3);
    outcome(
        pass,
        format!(
            "{:?} at r = {}; rapidity {p_last:.1}, log(1 - u_r) = {gap:.1}; monotone {monotone}",
            sol.terminated_reason,
            sol.r.last().unwrap()
        ),
    )
}

fn criterion_4(cal: Calibration) -> Outcome {
    let mut worst_res = 0.0f64;
    let mut worst_order = f64::INFINITY;
    for seed in 0..10 {
        let chart = BaseChart::flat_torus(TAU, TAU, 128, 128);
        let fine = SpacelikeGraph::random_band_limited(chart, 0.0, seed, 1, 0.7).unwrap();
        let coarse = fine.coarsen(2).unwrap();
        let res = |g: &SpacelikeGraph| jacobi_residual(&GraphGeometry::compute(g).unwrap(), cal.drift_sign).max;
        let (rc, rf) = (res(&coarse), res(&fine));
        worst_res = worst_res.max(rf);
        worst_order = worst_order.min(observed_order(rc, rf, 2.0));
    }
    outcome(
        worst_order >= 1.8 && worst_res <= 1e-3,
        format!(
            "10 seeds, max|Du| = 0.7: min order {worst_order:.2} (≥ 1.8 {}), max residual at 128² {worst_res:.2e} (≤ 1e-3 {})",
            worst_order >= 1.8,
            worst_res <= 1e-3
        ),
    )
}

fn criterion_5(cal: Calibration) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, c, profile) in soliton_cases() {
        let g = soliton_graph(&profile, n, c, (0.1, 2.1), 201, 256);
        let geo = GraphGeometry::compute(&g).unwrap();
        let verified = verify_translator(&geo, &g).verified;
        let (mut q_max, mut rel_max) = (f64::NEG_INFINITY, 0.0f64);
        for seed in 0..20 {
            let eta = TestFunction::seeded_bump(&g.chart, seed, (0.2, 0.35)).unwrap();
            let rep = second_variation(&eta, &g, &geo, cal, 1e-2).unwrap();
            q_max = q_max.max(rep.q);
            rel_max = rel_max.max((rep.q - rep.closed_form).abs() / rep.closed_form.abs());
        }
        pass &= verified && q_max <= 1e-6 && rel_max <= 1e-3;
        parts.push(format!("{}/n={n}: max Q {q_max:.2e}, rel {rel_max:.1e}", profile.name()));
    }
    outcome(pass, format!("Q ≤ 1e-6, |Q - closed|/|closed| ≤ 1e-3; {}", parts.join("; ")))
}

fn criterion_6(cal: Calibration) -> Outcome {
    let g = SpacelikeGraph::from_fn(BaseChart::flat_torus(TAU, TAU, 128, 128), 0.0, |_| 0.0).unwrap();
    let geo = GraphGeometry::compute(&g).unwrap();
    let eta = TestFunction::new(&g.chart, TestFunctionKind::Trig { modes: [1, 1] }).unwrap();
    let rep = second_variation(&eta, &g, &geo, cal, 1e-2).unwrap();
    let exact = -2.0 * PI * PI;
    let rel = (rep.q - exact).abs() / exact.abs();
    outcome(rel <= 1e-3, format!("Q = {:.6}, -2π² = {exact:.6}, rel {rel:.1e} ≤ 1e-3", rep.q))
}

fn criterion_7(cal: Calibration) -> Outcome {
    let g = soliton_graph(&WarpedProfile::euclidean(), 2, 1.0, (0.1, 1.1), 201, 1024);
    let geo = GraphGeometry::compute(&g).unwrap();
    let verified = verify_translator(&geo, &g).verified;
    let eta = TestFunction::seeded_bump(&g.chart, 11, (0.2, 0.35)).unwrap();
    let rep = second_variation(&eta, &g, &geo, cal, 1e-2).unwrap();
    let area = weighted_area_with_rate(&g, cal.rate(g.c)).unwrap();
    let first = rep.first_variation.abs() / area.abs();
    let second = (rep.fd_second_variation - rep.q).abs() / rep.q.abs();
    outcome(
        verified && first <= 1e-6 && second <= 1e-2,
        format!("|F'|/|F| = {first:.1e} ≤ 1e-6; |F'' - Q|/|Q| = {second:.1e} ≤ 1e-2 (Q = {:.4})", rep.q),
    )
}

fn criterion_8() -> Outcome {
    let p = WarpedProfile::euclidean();
    let sol = soliton::integrate(&p, 2, 1.0, 1.2, 1e-3, 1e-12).unwrap();
    let g = sol.lift_to_graph(BaseChart::radial(p, 2, (0.1, 1.1), 101)).unwrap();
    let cfg = FlowConfig { t_max: 1.0, safety: 0.2, ..FlowConfig::default() };
    let run = run_flow(&g, &cfg).unwrap();
    let t = run.state.t;
    let err = run.state.graph.u.iter().zip(&g.u).map(|(a, b)| (a - b - t).abs()).fold(0.0, f64::max);
    let rise = run
        .diagnostics
        .windows(2)
        .map(|w| w[1].translator_residual - w[0].translator_residual)
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        (t - 1.0).abs() < 1e-12 && err <= 5e-3 && rise <= 1e-10,
        format!("max|u(T) - u(0) - cT| = {err:.2e} ≤ 5e-3; largest residual increase {rise:.1e} ≤ 1e-10"),
    )
}

fn criterion_9() -> Outcome {
    let chart = BaseChart::flat_torus(TAU, TAU, 32, 32);
    let g = SpacelikeGraph::random_band_limited(chart, 0.0, 9, 2, 0.6).unwrap();
    let cfg = FlowConfig { t_max: 100.0, convergence_tol: 1e-10, ..FlowConfig::default() };
    let run = run_flow(&g, &cfg).unwrap();
    let rows = &run.diagnostics;
    let final_grad = rows.last().unwrap().max_grad_sq.sqrt();
    let monotone = rows.windows(2).all(|w| w[1].max_grad_sq <= w[0].max_grad_sq);
    let theta_ok = rows.iter().all(|r| r.theta_min >= -2.0 && r.theta_max <= -1.0);
    let u = &run.state.graph.u;
    let spread = u.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) - u.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    outcome(
        run.converged && final_grad <= 1e-8 && monotone && theta_ok,
        format!(
            "t = {:.2}: max|Du| = {final_grad:.1e} ≤ 1e-8, osc u = {spread:.1e}; monotone {monotone}; Θ ∈ [-2, -1] {theta_ok}",
            run.state.t
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    // n = 2: the warped base is the round sphere or the hyperbolic plane.
    let cases = [(WarpedProfile::spherical(), 1.0f64), (WarpedProfile::hyperbolic(), -1.0)];
    for (profile, k) in cases {
        let chart = BaseChart::warped(profile, 2, (0.3, 2.5), 65, 64);
        let g = SpacelikeGraph::from_fn(chart, 0.0, |x| 0.4 * x[0].sin() * x[1].cos() + 0.1 * x[0]).unwrap();
        let geo = GraphGeometry::compute(&g).unwrap();
        let coord = geo.ric_nn_coordinate(&g.chart).unwrap();
        for _ in 0..10 {
            let node = rng.gen_range(0..geo.len());
            // Ric_σ = K σ on a constant-curvature surface.
            let s = geo.gradient.grad_sq[node];
            let closed = k * s / (1.0 - s);
            worst = worst.max((coord[node] - closed).abs());
        }
    }
    outcome(worst <= 1e-6, format!("10 samples each on S² and H², max discrepancy {worst:.1e} ≤ 1e-6"))
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |k: u32| selected.is_empty() || selected.contains(&k);
    let cal = Calibration::reference().expect("sign calibration");
    println!("calibration: drift_sign = {}, weight_sign = {}", cal.drift_sign, cal.weight_sign);

    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "soliton-translator identity", Box::new(criterion_1)),
        (2, "closed-form ODE oracle", Box::new(criterion_2)),
        (3, "space-like preservation", Box::new(criterion_3)),
        (4, "Jacobi identity on random graphs", Box::new(move || criterion_4(cal))),
        (5, "stability of translators", Box::new(move || criterion_5(cal))),
        (6, "maximal-slice quadratic form", Box::new(move || criterion_6(cal))),
        (7, "variation oracle", Box::new(move || criterion_7(cal))),
        (8, "flow traveling wave", Box::new(criterion_8)),
        (9, "flow slice convergence", Box::new(criterion_9)),
        (10, "ambient Ricci cross-check", Box::new(criterion_10)),
    ];
    let mut unexpected = Vec::new();
    for (k, name, run) in &criteria {
        if !wanted(*k) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {k:>2} {tag} [{secs:5.1}s] {name}: {}", out.detail);
        if !out.pass && !KNOWN_FAILURES.contains(k) {
            unexpected.push(*k);
        }
        if secs > 60.0 {
            println!("criterion {k:>2} exceeded 60 s");
            unexpected.push(*k);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected acceptance failures: {unexpected:?}");
        std::process::exit(1);
    }
}
