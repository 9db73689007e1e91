use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use translab::flow::{self, FlowConfig};
use translab::geometry::{covariant_gradient, ROUTE_MARGIN};
use translab::io::{self, grid_spacing};
use translab::grid::observed_order;
use translab::soliton;
use translab::stability::{self, TestFunctionKind, TranslatorCheck};
use translab::{
    BaseChart, Calibration, Error, GraphGeometry, Metadata, SpacelikeGraph, TestFunction, VariationReport,
    WarpedProfile,
};

use crate::args::{Command, FlowArgs, SolitonArgs, VariationArgs, VerifyArgs};
use crate::report::{config_hash, finish, is_config_error, parse_chart, write_json, CliError, Failure, Outcome};

/// Minimum observed order for a refinement check to pass.
const MIN_ORDER: f64 = 1.8;
/// Residuals below this are treated as exact and need no order.
const EXACT_FLOOR: f64 = 1e-11;
const FD_STEP: f64 = 1e-2;
const BUMP_RADIUS: (f64, f64) = (0.2, 0.35);
/// Random initial data for `flow` is scaled to this max |Du|.
const FLOW_INITIAL_SLOPE: f64 = 0.5;

fn calibration() -> Result<Calibration, CliError> {
    Ok(Calibration::reference()?)
}

fn metadata(command: &str, hash: String, seed: Option<u64>, cal: Calibration, spacing: Vec<f64>) -> Metadata {
    Metadata {
        command: command.into(),
        config_hash: hash,
        seed,
        drift_sign: Some(cal.drift_sign),
        weight_sign: Some(cal.weight_sign),
        grid_spacing: spacing,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn load_graph(path: &Path, base: Option<&str>) -> Result<SpacelikeGraph, CliError> {
    let (graph, _) = io::read_graph(path).map_err(|e| match e {
        Error::Io(e) => CliError::Usage(format!("--graph: cannot read {}: {e}", path.display())),
        e => CliError::Usage(format!("--graph: {}: {e}", path.display())),
    })?;
    if let Some(doc) = base {
        let chart = parse_chart(doc)?;
        if chart != graph.chart {
            return Err(CliError::Usage(format!(
                "--base: chart does not match the chart stored in {}",
                path.display()
            )));
        }
    }
    Ok(graph)
}

/// Splits a core error into a usage error or a failed check.
fn check_error(check: &str, e: Error) -> Result<Failure, CliError> {
    if is_config_error(&e) {
        Err(e.into())
    } else {
        Ok(Failure::new(check, e.to_string()))
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut p = out.to_path_buf();
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    p.set_file_name(format!("{stem}{suffix}"));
    p
}

pub fn soliton(cmd: &Command, a: &SolitonArgs) -> Result<Outcome, CliError> {
    a.validate()?;
    let profile = WarpedProfile::from_name(&a.profile).map_err(|e| CliError::Usage(format!("--profile: {e}")))?;
    let lift_chart = match &a.base {
        Some(doc) => Some(parse_chart(doc)?),
        None if a.graph.is_some() => {
            Some(BaseChart::warped(profile.clone(), a.n, (0.05 * a.r_max, a.r_max), a.nx, a.ny))
        }
        None => None,
    };
    let cal = calibration()?;
    let meta = metadata("soliton", config_hash(cmd, &[])?, None, cal, vec![a.dr]);

    let sol = match soliton::integrate(&profile, a.n, a.c, a.r_max, a.dr, a.tol) {
        Ok(s) => s,
        Err(e) => return finish(&a.out, &meta, vec![check_error("integration", e)?]),
    };
    let mut w = create(&a.out)?;
    meta.write_csv_header(&mut w).map_err(Error::from)?;
    sol.write_csv(&mut w).map_err(Error::from)?;
    w.flush().map_err(Error::from)?;

    let mut failures = Vec::new();
    // Same scaling as the integrator's defect control.
    let mut worst = 0.0f64;
    for k in 0..sol.len() {
        let drift = if a.n > 1 {
            let v = profile.eval(sol.r[k])?;
            (a.n as f64 - 1.0) * v.dh / v.h * sol.u_r[k]
        } else {
            0.0
        };
        worst = worst.max(sol.residual[k].abs() / (a.c - drift).abs().max(1.0));
    }
    if !(worst <= 10.0 * a.tol) {
        failures.push(Failure::bounded("ode_residual", "scaled ODE residual above 10·tol", worst, 10.0 * a.tol));
    }
    if sol.terminated_reason != soliton::TerminatedReason::ReachedRMax {
        failures.push(Failure::new(
            "reached_r_max",
            format!("integration stopped at r = {} near the light cone", sol.r[sol.len() - 1]),
        ));
    }
    if let (Some(chart), Some(path)) = (lift_chart, &a.graph) {
        match sol.lift_to_graph(chart) {
            Ok(graph) => {
                let mut gmeta = meta.clone();
                gmeta.grid_spacing = grid_spacing(&graph.grid()?);
                io::write_graph(path, &graph, Some(&gmeta))?;
            }
            Err(e) => failures.push(check_error("lift", e)?),
        }
    }
    finish(&a.out, &meta, failures)
}

#[derive(Serialize)]
struct Level {
    grid_spacing: Vec<f64>,
    residuals: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    translator: Option<TranslatorCheck>,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    metadata: &'a Metadata,
    graph: String,
    spacelike: bool,
    max_grad_sq: f64,
    levels: Vec<Level>,
    orders: BTreeMap<String, Vec<f64>>,
    passed: BTreeMap<String, bool>,
}

fn residual_for(check: &str, geo: &GraphGeometry, graph: &SpacelikeGraph, cal: Calibration) -> Result<f64, CliError> {
    Ok(match check {
        "jacobi" => stability::jacobi_residual(geo, cal.drift_sign).max,
        "translator" => geo.max_abs_with_margin(&geo.translator_residual(graph.c), 1),
        "routes" => geo.mean_curvature_gap(ROUTE_MARGIN),
        "ricci" => {
            let coord = geo.ric_nn_coordinate(&graph.chart)?;
            let diff: Vec<f64> = coord.iter().zip(&geo.ric_nn).map(|(a, b)| a - b).collect();
            geo.max_abs_with_margin(&diff, 1)
        }
        other => unreachable!("unvalidated check {other}"),
    })
}

pub fn verify(cmd: &Command, a: &VerifyArgs) -> Result<Outcome, CliError> {
    let checks = a.check_list()?;
    let graph = load_graph(&a.graph, a.base.as_deref())?;
    let cal = calibration()?;
    let meta = metadata("verify", config_hash(cmd, &[&a.graph])?, None, cal, grid_spacing(&graph.grid()?));

    let grad = covariant_gradient(&graph)?;
    let mut report = VerifyReport {
        metadata: &meta,
        graph: a.graph.display().to_string(),
        spacelike: grad.spacelike,
        max_grad_sq: grad.max_grad_sq(),
        levels: Vec::new(),
        orders: BTreeMap::new(),
        passed: BTreeMap::new(),
    };
    let mut failures = Vec::new();
    if !grad.spacelike {
        failures.push(Failure::bounded("spacelike", "stored graph is not space-like", grad.max_grad_sq(), 1.0));
        write_json(&a.out, &report)?;
        return finish(&a.out, &meta, failures);
    }

    // Coarsest level first.
    let mut graphs = Vec::new();
    for level in (0..a.refine).rev() {
        let g = if level == 0 {
            graph.clone()
        } else {
            graph
                .coarsen(1 << level)
                .map_err(|e| CliError::Usage(format!("--refine: {e}")))?
        };
        graphs.push(g);
    }
    for g in &graphs {
        let geo = match GraphGeometry::compute(g) {
            Ok(geo) => geo,
            Err(e) => {
                failures.push(check_error("geometry", e)?);
                write_json(&a.out, &report)?;
                return finish(&a.out, &meta, failures);
            }
        };
        let mut residuals = BTreeMap::new();
        for check in &checks {
            residuals.insert(check.clone(), residual_for(check, &geo, g, cal)?);
        }
        let translator = checks
            .iter()
            .any(|c| c == "translator")
            .then(|| stability::verify_translator(&geo, g));
        report.levels.push(Level { grid_spacing: grid_spacing(&geo.grid), residuals, translator });
    }

    for check in &checks {
        let values: Vec<f64> = report.levels.iter().map(|l| l.residuals[check]).collect();
        let orders: Vec<f64> = values.windows(2).map(|w| observed_order(w[0], w[1], 2.0)).collect();
        let fine = *values.last().expect("at least one level");
        let ok = match orders.last() {
            _ if fine <= EXACT_FLOOR => true,
            Some(&order) => order >= MIN_ORDER,
            None if check == "translator" => report.levels[0].translator.is_some_and(|t| t.verified),
            None => true,
        };
        if !ok {
            match orders.last() {
                Some(&order) => failures.push(Failure::bounded(
                    check,
                    "measured convergence order below threshold",
                    order,
                    MIN_ORDER,
                )),
                None => failures.push(Failure::bounded(
                    check,
                    "translator residual above truncation threshold",
                    fine,
                    report.levels[0].translator.map_or(0.0, |t| t.threshold),
                )),
            }
        }
        report.orders.insert(check.clone(), orders);
        report.passed.insert(check.clone(), ok);
    }
    write_json(&a.out, &report)?;
    finish(&a.out, &meta, failures)
}

#[derive(Serialize)]
struct VariationBatch<'a> {
    metadata: &'a Metadata,
    graph: String,
    translator: TranslatorCheck,
    test_functions: Vec<TestFunctionKind>,
    reports: Vec<VariationReport>,
}

fn test_function(chart: &BaseChart, eta: &str, seed: u64, trial: usize) -> Result<TestFunction, Error> {
    match eta {
        "bump" => TestFunction::seeded_bump(chart, seed.wrapping_add(trial as u64), BUMP_RADIUS),
        _ => {
            let modes = [1 + (trial % 4) as u32, 1 + (trial / 4 % 4) as u32];
            TestFunction::new(chart, TestFunctionKind::Trig { modes })
        }
    }
}

pub fn second_variation(cmd: &Command, a: &VariationArgs) -> Result<Outcome, CliError> {
    a.validate()?;
    let graph = load_graph(&a.graph, a.base.as_deref())?;
    let cal = calibration()?;
    let meta = metadata(
        "second-variation",
        config_hash(cmd, &[&a.graph])?,
        Some(a.seed),
        cal,
        grid_spacing(&graph.grid()?),
    );
    let geo = match GraphGeometry::compute(&graph) {
        Ok(geo) => geo,
        Err(e) => return finish(&a.out, &meta, vec![check_error("geometry", e)?]),
    };
    let etas = (0..a.trials)
        .map(|i| test_function(&graph.chart, &a.eta, a.seed, i))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("--eta: {e}")))?;
    let results: Vec<Result<VariationReport, Error>> = etas
        .par_iter()
        .map(|eta| stability::second_variation(eta, &graph, &geo, cal, FD_STEP))
        .collect();

    let mut failures = Vec::new();
    let mut reports = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rep) => {
                if !(rep.q <= 1e-6) {
                    failures.push(Failure::bounded(&format!("trial {i}: q"), "Q(ηΘ) is positive", rep.q, 1e-6));
                }
                let gap = (rep.q - rep.closed_form).abs();
                let bound = a.tol * rep.closed_form.abs();
                if !(gap <= bound) {
                    failures.push(Failure::bounded(
                        &format!("trial {i}: closed_form"),
                        "Q differs from the closed form",
                        gap,
                        bound,
                    ));
                }
                reports.push(rep);
            }
            Err(e) => failures.push(check_error(&format!("trial {i}"), e)?),
        }
    }
    let batch = VariationBatch {
        metadata: &meta,
        graph: a.graph.display().to_string(),
        translator: stability::verify_translator(&geo, &graph),
        test_functions: etas.into_iter().map(|e| e.kind).collect(),
        reports,
    };
    write_json(&a.out, &batch)?;
    finish(&a.out, &meta, failures)
}

pub fn flow(cmd: &Command, a: &FlowArgs) -> Result<Outcome, CliError> {
    a.validate()?;
    let mut inputs: Vec<&Path> = Vec::new();
    let (initial, seed) = match &a.graph {
        Some(path) => {
            inputs.push(path);
            (load_graph(path, a.base.as_deref())?, None)
        }
        None => {
            let chart = match &a.base {
                Some(doc) => parse_chart(doc)?,
                None => BaseChart::flat_torus(std::f64::consts::TAU, std::f64::consts::TAU, a.nx, a.ny),
            };
            let g = SpacelikeGraph::random_band_limited(chart, a.c, a.seed, 2, FLOW_INITIAL_SLOPE)
                .map_err(|e| CliError::Usage(format!("--base: {e}")))?;
            (g, Some(a.seed))
        }
    };
    let cal = calibration()?;
    let meta = metadata("flow", config_hash(cmd, &inputs)?, seed, cal, grid_spacing(&initial.grid()?));
    let config = FlowConfig {
        t_max: a.t_max,
        safety: a.safety,
        convergence_tol: a.tol.unwrap_or(0.0),
        output_interval: 0.0,
        weight_sign: cal.weight_sign,
    };
    let run = match flow::run_flow(&initial, &config) {
        Ok(run) => run,
        Err(e) => return finish(&a.out, &meta, vec![check_error("flow", e)?]),
    };
    let mut w = create(&a.out)?;
    meta.write_csv_header(&mut w).map_err(Error::from)?;
    flow::write_diagnostics(&run.diagnostics, &mut w).map_err(Error::from)?;
    w.flush().map_err(Error::from)?;
    io::write_graph(&sibling(&a.out, ".final.json"), &run.state.graph, Some(&meta))?;

    let mut failures = Vec::new();
    for row in &run.diagnostics {
        if !(row.max_grad_sq < 1.0) {
            failures.push(Failure::bounded("spacelike", format!("lost at t = {}", row.t), row.max_grad_sq, 1.0));
            break;
        }
        if !(row.theta_max <= -1.0 + 1e-12) {
            failures.push(Failure::bounded("theta", format!("Θ > -1 at t = {}", row.t), row.theta_max, -1.0));
            break;
        }
    }
    // Closed slices: the gradient bound is monotone along the flow.
    if matches!(initial.chart, BaseChart::FlatTorus { .. }) && initial.c == 0.0 {
        for w in run.diagnostics.windows(2) {
            if w[1].max_grad_sq > w[0].max_grad_sq + 1e-12 {
                failures.push(Failure::bounded(
                    "gradient_monotone",
                    format!("max |Du|² increased at t = {}", w[1].t),
                    w[1].max_grad_sq,
                    w[0].max_grad_sq,
                ));
                break;
            }
        }
    }
    if a.tol.is_some() && !run.converged {
        let last = run.diagnostics.last().map_or(f64::NAN, |r| r.translator_residual);
        failures.push(Failure::bounded("converged", "translator residual above --tol at t_max", last, config.convergence_tol));
    }
    finish(&a.out, &meta, failures)
}
