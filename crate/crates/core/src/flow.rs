//! Graphical Lorentzian mean curvature flow `u_t = √(1 - |Du|²) H`.
//!
//! Vertical translation `u + ct` solves this law exactly when the graph is a
//! translator, so solitons are traveling waves and slices are fixed points.
//! Time stepping is explicit Euler under a parabolic step cap; open chart
//! boundaries carry Dirichlet data advanced by `c·dt`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{covariant_gradient, GraphGeometry, SpacelikeGraph};

/// Step halvings tried before giving up.
pub const MAX_REJECTIONS: usize = 20;

#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub graph: SpacelikeGraph,
    pub dt_last: f64,
    pub steps: u64,
}

impl FlowState {
    pub fn new(graph: SpacelikeGraph) -> Self {
        FlowState { t: 0.0, graph, dt_last: 0.0, steps: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub dt: f64,
    pub max_grad_sq: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub max_norm_a_sq: f64,
    pub max_ric_nn: f64,
    pub translator_residual: f64,
    pub weighted_area: f64,
}

pub const DIAGNOSTICS_HEADER: &str =
    "t,dt,max_grad_sq,theta_min,theta_max,max_norm_a_sq,max_ric_nn,translator_residual,weighted_area";

impl DiagnosticsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.t,
            self.dt,
            self.max_grad_sq,
            self.theta_min,
            self.theta_max,
            self.max_norm_a_sq,
            self.max_ric_nn,
            self.translator_residual,
            self.weighted_area
        )
    }
}

pub fn write_diagnostics<W: Write>(rows: &[DiagnosticsRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{DIAGNOSTICS_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub t_max: f64,
    pub safety: f64,
    /// Stop once `max |H - c/W|` falls to this value.
    pub convergence_tol: f64,
    /// Time between diagnostics rows; zero records every step.
    pub output_interval: f64,
    /// Exponent sign of the weight `e^{±cu}` in the reported area.
    pub weight_sign: i8,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { t_max: 1.0, safety: 0.2, convergence_tol: 0.0, output_interval: 0.0, weight_sign: -1 }
    }
}

/// `max |H - c/W|` over nodes off the open boundary.
pub fn translator_residual(geo: &GraphGeometry, c: f64) -> f64 {
    geo.interior_max_abs(&geo.translator_residual(c))
}

/// Smallest physical grid spacing `step_a √σ_aa` over all nodes.
pub fn min_spacing(geo: &GraphGeometry) -> f64 {
    let mut m = f64::INFINITY;
    for a in 0..geo.dim() {
        let step = geo.grid.axis(a).step;
        for nm in &geo.metrics {
            m = m.min(step * nm.sigma[a].sqrt());
        }
    }
    m
}

/// `safety · Δx²_min · (1 - max|Du|²) / (2·dim)`.
pub fn dt_max(geo: &GraphGeometry, safety: f64) -> f64 {
    let dx = min_spacing(geo);
    safety * dx * dx * (1.0 - geo.gradient.max_grad_sq()) / (2.0 * geo.dim() as f64)
}

pub fn diagnostics(geo: &GraphGeometry, graph: &SpacelikeGraph, t: f64, dt: f64, weight_sign: i8) -> DiagnosticsRow {
    let fold_max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    DiagnosticsRow {
        t,
        dt,
        max_grad_sq: geo.gradient.max_grad_sq(),
        theta_min: geo.theta.iter().copied().fold(f64::INFINITY, f64::min),
        theta_max: fold_max(&geo.theta),
        max_norm_a_sq: fold_max(&geo.norm_a_sq),
        max_ric_nn: fold_max(&geo.ric_nn),
        translator_residual: translator_residual(geo, graph.c),
        weighted_area: geo.weighted_area(graph, weight_sign as f64 * graph.c),
    }
}

fn velocity(geo: &GraphGeometry) -> Vec<f64> {
    geo.mean_curvature
        .iter()
        .zip(&geo.gradient.grad_sq)
        .map(|(h, s)| (1.0 - s).sqrt() * h)
        .collect()
}

fn advance(graph: &SpacelikeGraph, geo: &GraphGeometry, v: &[f64], dt: f64) -> SpacelikeGraph {
    let mut next = graph.clone();
    for k in 0..next.u.len() {
        next.u[k] += if geo.grid.boundary_distance(k) == 0 { graph.c * dt } else { dt * v[k] };
    }
    next
}

/// One explicit step of size at most `dt`, halving on loss of space-likeness.
pub fn mcf_step(state: &FlowState, dt: f64) -> Result<FlowState> {
    let geo = GraphGeometry::compute(&state.graph)?;
    step_with(state, &geo, dt)
}

fn step_with(state: &FlowState, geo: &GraphGeometry, dt: f64) -> Result<FlowState> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let v = velocity(geo);
    let mut dt = dt;
    for _ in 0..=MAX_REJECTIONS {
        let next = advance(&state.graph, geo, &v, dt);
        if covariant_gradient(&next)?.spacelike {
            return Ok(FlowState { t: state.t + dt, graph: next, dt_last: dt, steps: state.steps + 1 });
        }
        dt *= 0.5;
    }
    Err(Error::FlowStalled { t: state.t, rejections: MAX_REJECTIONS })
}

#[derive(Clone, Debug)]
pub struct FlowRun {
    pub state: FlowState,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub converged: bool,
}

/// Steps from `initial` until `t_max` or until the translator residual drops
/// to the convergence tolerance.
pub fn run_flow(initial: &SpacelikeGraph, config: &FlowConfig) -> Result<FlowRun> {
    if !(config.safety > 0.0 && config.safety <= 1.0) {
        return Err(Error::Config(format!("safety must lie in (0, 1], got {}", config.safety)));
    }
    if !(config.t_max >= 0.0) || !(config.convergence_tol >= 0.0) {
        return Err(Error::Config("t_max and tol must be non-negative".into()));
    }
    let mut state = FlowState::new(initial.clone());
    let mut rows = Vec::new();
    let mut next_output = 0.0;
    let time_eps = 1e-12 * config.t_max.max(1.0);
    // Cross-checks run on the initial graph and every CHECK_EVERY steps.
    const CHECK_EVERY: u64 = 1000;
    loop {
        let geo = if state.steps % CHECK_EVERY == 0 {
            GraphGeometry::compute(&state.graph)?
        } else {
            GraphGeometry::compute_unchecked(&state.graph)?
        };
        let row = diagnostics(&geo, &state.graph, state.t, state.dt_last, config.weight_sign);
        let converged = row.translator_residual <= config.convergence_tol;
        let done = converged || state.t >= config.t_max - time_eps;
        if done || state.t >= next_output - time_eps {
            rows.push(row);
            next_output = state.t + config.output_interval;
        }
        if done {
            return Ok(FlowRun { state, diagnostics: rows, converged });
        }
        let dt = dt_max(&geo, config.safety).min(config.t_max - state.t);
        state = step_with(&state, &geo, dt)?;
    }
}
