//! Stability operator, Jacobi identity and the second variation of the
//! weighted area on translators.
//!
//! For a translator the normal variation `φ = ηΘ` has
//!
//! ```text
//! ∂²F = ∫ φ Lφ e^{cs} dμ = -∫ Θ² |∇η|² e^{cs} dμ ≤ 0,
//! Lφ = Δφ - (|A|² + Ric̄(ν,ν)) φ + c ⟨∇φ, ∂_s⟩.
//! ```
//!
//! The sign of the drift pairing `⟨∇φ, ∂_s⟩ = s·g^{ij} φ_i u_j` and the sign of
//! the exponent in the area weight are fixed once by [`calibrate`] on a
//! reference soliton and carried around in a [`Calibration`].

use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    angular_factor, weighted_area_with_rate, GraphGeometry, SpacelikeGraph, ROUTE_MARGIN,
    SPACELIKE_MARGIN,
};
use crate::grid::{observed_order, pairwise_sum, AxisKind};
use crate::manifold::{BaseChart, WarpedProfile};
use crate::soliton;

/// Test functions are kept this many cells away from open boundaries.
pub const COLLAR: usize = 3;

/// Signs fixed by calibration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calibration {
    /// `s` in `⟨∇φ, ∂_s⟩ = s·g^{ij} φ_i u_j`.
    pub drift_sign: i8,
    /// The area weight is `e^{weight_sign · c · u}`.
    pub weight_sign: i8,
}

impl Calibration {
    pub fn rate(&self, c: f64) -> f64 {
        self.weight_sign as f64 * c
    }

    /// Calibration on the built-in reference soliton, computed once.
    pub fn reference() -> Result<Calibration> {
        static CELL: OnceLock<std::result::Result<Calibration, String>> = OnceLock::new();
        CELL.get_or_init(|| calibrate().map_err(|e| e.to_string()))
            .clone()
            .map_err(|msg| Error::Integration(format!("sign calibration failed: {msg}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunctionKind {
    /// `(1 - d²/ρ²)^exponent` inside the ball of radius `radius`.
    Bump { center: [f64; 2], radius: f64, exponent: u32 },
    /// `sin(2π k₀ x / L₀) sin(2π k₁ y / L₁)` over the chart extents.
    Trig { modes: [u32; 2] },
    Constant { value: f64 },
}

/// A test function `η` sampled on the chart grid.
#[derive(Clone, Debug)]
pub struct TestFunction {
    pub kind: TestFunctionKind,
    pub values: Vec<f64>,
    pub support: Vec<bool>,
}

/// Distance used for bumps: Cartesian on polar charts, minimum image on
/// periodic axes.
fn chart_distance(chart: &BaseChart, a: [f64; 2], b: [f64; 2]) -> f64 {
    match chart {
        BaseChart::Warped2d { .. } => {
            let (xa, ya) = (a[0] * a[1].cos(), a[0] * a[1].sin());
            let (xb, yb) = (b[0] * b[1].cos(), b[0] * b[1].sin());
            (xa - xb).hypot(ya - yb)
        }
        BaseChart::Radial1d { .. } => (a[0] - b[0]).abs(),
        BaseChart::FlatTorus { lx, ly, .. } => {
            let wrap = |d: f64, l: f64| {
                let d = d.rem_euclid(l);
                d.min(l - d)
            };
            wrap(a[0] - b[0], *lx).hypot(wrap(a[1] - b[1], *ly))
        }
        BaseChart::FlatPatch { .. } => (a[0] - b[0]).hypot(a[1] - b[1]),
    }
}

impl TestFunction {
    pub fn new(chart: &BaseChart, kind: TestFunctionKind) -> Result<Self> {
        let grid = chart.grid()?;
        let values: Vec<f64> = match &kind {
            TestFunctionKind::Bump { center, radius, exponent } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config("bump radius must be positive".into()));
                }
                (0..grid.len())
                    .map(|k| {
                        let d = chart_distance(chart, grid.coords(k), *center);
                        if d < *radius {
                            (1.0 - (d / radius).powi(2)).powi(*exponent as i32)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            TestFunctionKind::Trig { modes } => {
                let ext: Vec<(f64, f64)> = grid
                    .axes()
                    .iter()
                    .map(|a| {
                        let span = match a.kind {
                            AxisKind::Periodic => a.step * a.len as f64,
                            AxisKind::Open => a.step * (a.len - 1) as f64,
                        };
                        (a.start, span)
                    })
                    .collect();
                (0..grid.len())
                    .map(|k| {
                        let x = grid.coords(k);
                        let mut v = 1.0;
                        for (a, &(start, span)) in ext.iter().enumerate() {
                            let arg = 2.0 * std::f64::consts::PI * modes[a] as f64 * (x[a] - start) / span;
                            v *= arg.sin();
                        }
                        v
                    })
                    .collect()
            }
            TestFunctionKind::Constant { value } => vec![*value; grid.len()],
        };
        let support = values.iter().map(|v| *v != 0.0).collect();
        Ok(TestFunction { kind, values, support })
    }

    /// Whether every nonzero value sits at least `collar` cells from an open
    /// boundary.
    pub fn compactly_supported(&self, chart: &BaseChart, collar: usize) -> Result<bool> {
        let grid = chart.grid()?;
        Ok((0..grid.len()).all(|k| !self.support[k] || grid.boundary_distance(k) >= collar))
    }

    /// Random bump with exponent 3, radius drawn from `radius` (a fraction of
    /// the chart's radial or first-axis extent) and support kept off a
    /// `COLLAR`-cell boundary layer.
    pub fn random_bump(chart: &BaseChart, rng: &mut impl Rng, radius: (f64, f64)) -> Result<Self> {
        let grid = chart.grid()?;
        let a0 = grid.axis(0);
        let pad = (COLLAR as f64 + 1.0) * a0.step;
        for _ in 0..1000 {
            let center;
            let rho;
            match chart {
                BaseChart::Warped2d { r_min, r_max, .. } | BaseChart::Radial1d { r_min, r_max, .. } => {
                    let span = r_max - r_min;
                    rho = rng.gen_range(radius.0..=radius.1) * span;
                    let lo = r_min + rho + pad;
                    let hi = r_max - rho - pad;
                    if lo > hi {
                        continue;
                    }
                    center = [rng.gen_range(lo..=hi), rng.gen_range(0.0..std::f64::consts::TAU)];
                }
                BaseChart::FlatTorus { lx, ly, .. } => {
                    rho = rng.gen_range(radius.0..=radius.1) * lx.min(*ly);
                    center = [rng.gen_range(0.0..*lx), rng.gen_range(0.0..*ly)];
                }
                BaseChart::FlatPatch { x_min, x_max, y_min, y_max, .. } => {
                    rho = rng.gen_range(radius.0..=radius.1) * (x_max - x_min).min(y_max - y_min);
                    let pad_y = (COLLAR as f64 + 1.0) * grid.axis(1).step;
                    let (xl, xh) = (x_min + rho + pad, x_max - rho - pad);
                    let (yl, yh) = (y_min + rho + pad_y, y_max - rho - pad_y);
                    if xl > xh || yl > yh {
                        continue;
                    }
                    center = [rng.gen_range(xl..=xh), rng.gen_range(yl..=yh)];
                }
            }
            let f = TestFunction::new(
                chart,
                TestFunctionKind::Bump { center, radius: rho, exponent: 3 },
            )?;
            if f.support.iter().any(|&s| s) && f.compactly_supported(chart, COLLAR)? {
                return Ok(f);
            }
        }
        Err(Error::Config("could not place a compact bump on this chart".into()))
    }

    /// Seeded variant of [`TestFunction::random_bump`].
    pub fn seeded_bump(chart: &BaseChart, seed: u64, radius: (f64, f64)) -> Result<Self> {
        TestFunction::random_bump(chart, &mut ChaCha8Rng::seed_from_u64(seed), radius)
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        let mut f = self.clone();
        f.values.iter_mut().for_each(|v| *v *= lambda);
        f
    }
}

/// `g^{ij} f_i u_j` at every node.
fn drift_pairing(geo: &GraphGeometry, f: &[f64]) -> Vec<f64> {
    geo.pairing(&geo.grid.gradient(f), &geo.gradient.du)
}

/// `Lφ = Δφ - (|A|² + Ric̄(ν,ν))φ + c·s·g^{ij} φ_i u_j`.
pub fn operator_l(phi: &[f64], geo: &GraphGeometry, c: f64, drift_sign: i8) -> Vec<f64> {
    let lap = geo.surface_laplacian(phi);
    let drift = drift_pairing(geo, phi);
    let s = drift_sign as f64;
    (0..phi.len())
        .map(|k| lap[k] - (geo.norm_a_sq[k] + geo.ric_nn[k]) * phi[k] + c * s * drift[k])
        .collect()
}

/// Pointwise `ΔΘ - (|A|² + Ric̄(ν,ν))Θ - s·g^{ij} H_i u_j` and its interior max.
#[derive(Clone, Debug)]
pub struct JacobiResidual {
    pub field: Vec<f64>,
    pub max: f64,
}

/// Nodes this close to an open boundary are left out of residual maxima.
pub const RESIDUAL_MARGIN: usize = 2;

pub fn jacobi_residual(geo: &GraphGeometry, drift_sign: i8) -> JacobiResidual {
    let lap = geo.surface_laplacian(&geo.theta);
    let drift = drift_pairing(geo, &geo.mean_curvature);
    let s = drift_sign as f64;
    let field: Vec<f64> = (0..geo.len())
        .map(|k| lap[k] - (geo.norm_a_sq[k] + geo.ric_nn[k]) * geo.theta[k] - s * drift[k])
        .collect();
    let max = geo.max_abs_with_margin(&field, RESIDUAL_MARGIN);
    JacobiResidual { field, max }
}

/// Outcome of the translator test `max |H + cΘ| ≤ 5·(O(Δ²) estimate)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TranslatorCheck {
    pub residual: f64,
    pub threshold: f64,
    pub verified: bool,
}

/// The O(Δ²) scale is the larger of the trace/divergence mean-curvature gap
/// and the Richardson truncation estimate of `H`.
pub fn verify_translator(geo: &GraphGeometry, graph: &SpacelikeGraph) -> TranslatorCheck {
    let residual = geo.max_abs_with_margin(&geo.translator_residual(graph.c), 1);
    let estimate = geo.truncation_estimate(graph).map_or(f64::INFINITY, |(e, _)| e);
    let scale = geo.mean_curvature_gap(ROUTE_MARGIN).max(estimate);
    let threshold = 5.0 * scale + 1e-12 * (1.0 + graph.c.abs());
    TranslatorCheck { residual, threshold, verified: residual <= threshold }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub q: f64,
    pub closed_form: f64,
    pub pointwise_residual_max: f64,
    pub first_variation: f64,
    pub fd_second_variation: f64,
    pub drift_sign: i8,
}

/// Quadrature `Σ f e^{rate·u} √det g · cell weight`, with the sphere factor on
/// radial charts.
fn integrate(geo: &GraphGeometry, graph: &SpacelikeGraph, rate: f64, f: &[f64]) -> f64 {
    let w = geo.grid.cell_weights();
    let terms: Vec<f64> = (0..geo.len())
        .map(|k| f[k] * (rate * graph.u[k]).exp() * geo.metric.sqrt_det[k] * w[k])
        .collect();
    angular_factor(&graph.chart) * pairwise_sum(&terms)
}

/// Max over the support of `η`, away from open boundaries, of
/// `|div(ηΘ²e^{rate·u}∇η) - φ e^{rate·u} Lφ - Θ²|∇η|² e^{rate·u}|`.
pub fn divergence_identity_residual(
    eta: &TestFunction,
    geo: &GraphGeometry,
    graph: &SpacelikeGraph,
    cal: Calibration,
) -> Vec<f64> {
    let rate = cal.rate(graph.c);
    let weight: Vec<f64> = graph.u.iter().map(|u| (rate * u).exp()).collect();
    let phi: Vec<f64> = eta.values.iter().zip(&geo.theta).map(|(e, t)| e * t).collect();
    let lphi = operator_l(&phi, geo, graph.c, cal.drift_sign);
    let deta = geo.grid.gradient(&eta.values);
    let grad_sq = geo.pairing(&deta, &deta);
    let kappa: Vec<f64> = (0..geo.len())
        .map(|k| eta.values[k] * geo.theta[k].powi(2) * weight[k])
        .collect();
    let div = geo.weighted_divergence(Some(&kappa), &eta.values);
    (0..geo.len())
        .map(|k| {
            if !eta.support[k] || geo.grid.boundary_distance(k) < RESIDUAL_MARGIN {
                return 0.0;
            }
            div[k] - phi[k] * weight[k] * lphi[k] - geo.theta[k].powi(2) * grad_sq[k] * weight[k]
        })
        .collect()
}

/// `Q(ηΘ)`, the closed form `-∫Θ²|∇η|² e^{rate·u} dμ`, the divergence-identity
/// residual and the finite-difference variations of the weighted area.
pub fn second_variation(
    eta: &TestFunction,
    graph: &SpacelikeGraph,
    geo: &GraphGeometry,
    cal: Calibration,
    fd_step: f64,
) -> Result<VariationReport> {
    if eta.values.len() != geo.len() {
        return Err(Error::Config("test function does not match the graph grid".into()));
    }
    let rate = cal.rate(graph.c);
    let phi: Vec<f64> = eta.values.iter().zip(&geo.theta).map(|(e, t)| e * t).collect();
    let lphi = operator_l(&phi, geo, graph.c, cal.drift_sign);
    let integrand: Vec<f64> = phi.iter().zip(&lphi).map(|(a, b)| a * b).collect();
    let q = integrate(geo, graph, rate, &integrand);

    // -∫Θ²|∇η|² e dμ in its integrated-by-parts form ∫η div(Θ² e ∇η) dμ, so the
    // quadrature uses the same half-node fluxes as the Laplacian inside Q.
    let kappa: Vec<f64> = (0..geo.len())
        .map(|k| geo.theta[k].powi(2) * (rate * graph.u[k]).exp())
        .collect();
    let div = geo.weighted_divergence(Some(&kappa), &eta.values);
    let closed: Vec<f64> = (0..geo.len()).map(|k| eta.values[k] * div[k]).collect();
    let closed_form = integrate(geo, graph, 0.0, &closed);

    let residual = divergence_identity_residual(eta, geo, graph, cal);
    let pointwise_residual_max = residual.iter().fold(0.0, |m: f64, v| m.max(v.abs()));

    let (first_variation, fd_second_variation) = variation_fd_oracle(&phi, graph, fd_step, rate)?;
    Ok(VariationReport {
        q,
        closed_form,
        pointwise_residual_max,
        first_variation,
        fd_second_variation,
        drift_sign: cal.drift_sign,
    })
}

/// First and second derivatives in `τ` of `∫ e^{rate·u_τ} dμ` along
/// `u_τ = u + τ φ √(1 - |Du|²)`, by fourth-order central differences with
/// one Richardson step.
pub fn variation_fd_oracle(
    phi: &[f64],
    graph: &SpacelikeGraph,
    step: f64,
    rate: f64,
) -> Result<(f64, f64)> {
    if !(step > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let grad = crate::geometry::covariant_gradient(graph)?;
    if grad.max_grad_sq() >= 1.0 - 10.0 * SPACELIKE_MARGIN {
        return Err(Error::NotSpacelike { max_grad_sq: grad.max_grad_sq() });
    }
    let speed: Vec<f64> = phi
        .iter()
        .zip(&grad.grad_sq)
        .map(|(p, s)| p * (1.0 - s).sqrt())
        .collect();
    let area = |tau: f64| -> Result<f64> {
        if tau == 0.0 {
            return weighted_area_with_rate(graph, rate);
        }
        let mut g = graph.clone();
        for (u, v) in g.u.iter_mut().zip(&speed) {
            *u += tau * v;
        }
        weighted_area_with_rate(&g, rate).map_err(|e| match e {
            Error::NotSpacelike { .. } => Error::StepTooLarge { tau },
            e => e,
        })
    };
    let f0 = area(0.0)?;
    let mut vals = std::collections::HashMap::new();
    for m in [-4i32, -2, -1, 1, 2, 4] {
        vals.insert(m, area(m as f64 * step / 2.0)?);
    }
    // Stencils at spacing `h = k·step/2`.
    let diffs = |k: i32| -> (f64, f64) {
        let h = k as f64 * step / 2.0;
        let (p1, p2, m1, m2) = (vals[&k], vals[&(2 * k)], vals[&-k], vals[&(-2 * k)]);
        let d1 = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
        let d2 = (-p2 + 16.0 * p1 - 30.0 * f0 + 16.0 * m1 - m2) / (12.0 * h * h);
        (d1, d2)
    };
    let (a1, a2) = diffs(2);
    let (b1, b2) = diffs(1);
    Ok(((16.0 * b1 - a1) / 15.0, (16.0 * b2 - a2) / 15.0))
}

/// Reference translator used by [`calibrate`]: `n = 2`, `h = r`, `c = 1`.
fn reference_soliton(nr: usize, ntheta: usize) -> Result<SpacelikeGraph> {
    let profile = WarpedProfile::euclidean();
    let (r0, r1) = (0.2, 1.4);
    let dr = (r1 - r0) / (nr - 1) as f64;
    let sol = soliton::integrate(&profile, 2, 1.0, r1, dr / 2.0, 1e-12)?;
    sol.lift_to_graph(BaseChart::warped(profile, 2, (r0, r1), nr, ntheta))
}

/// Chooses the drift sign by which Jacobi-identity residual converges at
/// second order on a reference soliton, then the weight sign by which
/// divergence identity does.
pub fn calibrate() -> Result<Calibration> {
    let levels = [(49, 64), (97, 128)];
    let mut graphs = Vec::new();
    for &(nr, nt) in &levels {
        let g = reference_soliton(nr, nt)?;
        let geo = GraphGeometry::compute(&g)?;
        graphs.push((g, geo));
    }
    let pick = |score: &dyn Fn(&SpacelikeGraph, &GraphGeometry, i8) -> f64, check: &'static str| {
        let mut best: Option<(i8, f64, f64)> = None;
        for s in [1i8, -1] {
            let coarse = score(&graphs[0].0, &graphs[0].1, s);
            let fine = score(&graphs[1].0, &graphs[1].1, s);
            if best.map_or(true, |(_, _, f)| fine < f) {
                best = Some((s, coarse, fine));
            }
        }
        let (s, coarse, fine) = best.expect("two candidates");
        let order = observed_order(coarse, fine, 2.0);
        if order < 1.8 {
            return Err(Error::InternalConsistency { check, discrepancy: order, bound: 1.8 });
        }
        Ok(s)
    };
    let drift_sign = pick(&|_, geo, s| jacobi_residual(geo, s).max, "drift-sign calibration")?;
    let weight_sign = pick(
        &|g, geo, w| {
            let eta = TestFunction::new(
                &g.chart,
                TestFunctionKind::Bump { center: [0.8, 0.0], radius: 0.4, exponent: 3 },
            )
            .expect("reference bump");
            let cal = Calibration { drift_sign, weight_sign: w };
            divergence_identity_residual(&eta, geo, g, cal)
                .iter()
                .fold(0.0, |m: f64, v| m.max(v.abs()))
        },
        "weight-sign calibration",
    )?;
    Ok(Calibration { drift_sign, weight_sign })
}
