//! Extrinsic geometry of a space-like graph `Σ = {(x, u(x))}` in `Mⁿ × ℝ`
//! with the Lorentz metric `-ds² + σ`.
//!
//! With `W = √(1 - |Du|²)` the upward unit normal is `ν = (∂_s + D^j u ∂_j)/W`,
//! the induced metric is `g_ij = σ_ij - D_i u D_j u`, the second fundamental
//! form is `h_ij = D_iD_j u / W` and the angle function is `Θ = ⟨ν, ∂_s⟩ = -1/W`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{pairwise_sum, Grid};
use crate::manifold::{BaseChart, NodeMetric};

/// Graphs with `max |Du|² > 1 - SPACELIKE_MARGIN` are rejected.
pub const SPACELIKE_MARGIN: f64 = 1e-6;

/// Nodes this close to an open boundary are left out of the route check.
pub const ROUTE_MARGIN: usize = 4;

pub type Sym2 = [[f64; 2]; 2];

/// Height function `u` over a base chart, with translator speed `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacelikeGraph {
    pub chart: BaseChart,
    pub c: f64,
    /// Row-major nodal heights.
    pub u: Vec<f64>,
}

impl SpacelikeGraph {
    pub fn new(chart: BaseChart, c: f64, u: Vec<f64>) -> Result<Self> {
        chart.validate()?;
        let len = chart.grid()?.len();
        if u.len() != len {
            return Err(Error::Config(format!(
                "height field has {} values but the chart has {len} nodes",
                u.len()
            )));
        }
        if let Some(k) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("height field is not finite at node {k}")));
        }
        if !c.is_finite() {
            return Err(Error::Config("translator speed c must be finite".into()));
        }
        Ok(SpacelikeGraph { chart, c, u })
    }

    /// Samples `u` at every node's coordinates.
    pub fn from_fn(chart: BaseChart, c: f64, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let grid = chart.grid()?;
        let u = (0..grid.len()).map(|k| f(grid.coords(k))).collect();
        SpacelikeGraph::new(chart, c, u)
    }

    pub fn grid(&self) -> Result<Grid> {
        self.chart.grid()
    }

    /// Subsamples the graph onto the chart coarsened by `factor`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let fine = self.grid()?;
        let chart = self.chart.coarsen(factor)?;
        let coarse = chart.grid()?;
        let u = (0..coarse.len())
            .map(|k| {
                let (i, j) = coarse.unravel(k);
                self.u[fine.index(i * factor, j * factor)]
            })
            .collect();
        SpacelikeGraph::new(chart, self.c, u)
    }

    /// Seeded random trigonometric polynomial on a flat torus with wave
    /// numbers up to `kmax` per axis, scaled so that `max |Du| = max_grad`
    /// (measured on a fixed 256² sampling, independent of the chart grid).
    pub fn random_band_limited(
        chart: BaseChart,
        c: f64,
        seed: u64,
        kmax: u32,
        max_grad: f64,
    ) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let BaseChart::FlatTorus { lx, ly, .. } = chart else {
            return Err(Error::Config("band-limited data needs a flat torus chart".into()));
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = kmax as i32;
        let mut modes = Vec::new();
        for mx in 0..=k {
            for my in -k..=k {
                if (mx, my) <= (0, 0) {
                    continue;
                }
                let amp: f64 = rng.gen_range(-1.0..1.0) / f64::from(mx * mx + my * my);
                let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let kx = std::f64::consts::TAU * mx as f64 / lx;
                let ky = std::f64::consts::TAU * my as f64 / ly;
                modes.push((amp, kx, ky, phase));
            }
        }
        let eval = |x: [f64; 2]| -> (f64, [f64; 2]) {
            let mut v = 0.0;
            let mut d = [0.0; 2];
            for &(a, kx, ky, ph) in &modes {
                let arg = kx * x[0] + ky * x[1] + ph;
                v += a * arg.cos();
                d[0] -= a * kx * arg.sin();
                d[1] -= a * ky * arg.sin();
            }
            (v, d)
        };
        let mut peak = 0.0f64;
        for i in 0..256 {
            for j in 0..256 {
                let (_, d) = eval([lx * i as f64 / 256.0, ly * j as f64 / 256.0]);
                peak = peak.max(d[0].hypot(d[1]));
            }
        }
        if peak == 0.0 {
            return Err(Error::Config("band-limited data needs kmax >= 1".into()));
        }
        let scale = max_grad / peak;
        SpacelikeGraph::from_fn(chart, c, |x| scale * eval(x).0)
    }

    pub fn shifted(&self, constant: f64) -> Self {
        let mut g = self.clone();
        g.u.iter_mut().for_each(|v| *v += constant);
        g
    }
}

/// Output of [`covariant_gradient`].
#[derive(Clone, Debug)]
pub struct Gradient {
    /// `D_a u` (coordinate partials).
    pub du: Vec<[f64; 2]>,
    /// `D^a u = σ^{ab} D_b u`.
    pub du_up: Vec<[f64; 2]>,
    pub grad_sq: Vec<f64>,
    pub spacelike: bool,
}

impl Gradient {
    pub fn max_grad_sq(&self) -> f64 {
        self.grad_sq.iter().copied().fold(0.0, f64::max)
    }

    fn require_spacelike(&self) -> Result<()> {
        if self.spacelike {
            Ok(())
        } else {
            Err(Error::NotSpacelike { max_grad_sq: self.max_grad_sq() })
        }
    }
}

fn gradient_from(du: Vec<[f64; 2]>, metrics: &[NodeMetric], dim: usize) -> Gradient {
    let du_up: Vec<[f64; 2]> = du
        .iter()
        .zip(metrics)
        .map(|(d, m)| [d[0] / m.sigma[0], if dim == 2 { d[1] / m.sigma[1] } else { 0.0 }])
        .collect();
    let grad_sq: Vec<f64> = du
        .iter()
        .zip(&du_up)
        .map(|(d, up)| d[0] * up[0] + d[1] * up[1])
        .collect();
    let max = grad_sq.iter().copied().fold(0.0, f64::max);
    Gradient { du, du_up, grad_sq, spacelike: max <= 1.0 - SPACELIKE_MARGIN }
}

/// Covariant gradient of `u`, its σ-norm and the space-like flag.
pub fn covariant_gradient(graph: &SpacelikeGraph) -> Result<Gradient> {
    let (grid, metrics) = graph.chart.node_metrics()?;
    Ok(gradient_from(grid.gradient(&graph.u), &metrics, grid.dim()))
}

/// `Θ = -1/√(1 - |Du|²)`.
pub fn angle_function(grad: &Gradient) -> Result<Vec<f64>> {
    grad.require_spacelike()?;
    Ok(grad.grad_sq.iter().map(|s| -1.0 / (1.0 - s).sqrt()).collect())
}

/// Induced metric of the graph on the visible coordinates.
#[derive(Clone, Debug)]
pub struct InducedMetric {
    pub lower: Vec<Sym2>,
    /// Closed form `σ^{ik} + D^i u D^k u / (1 - |Du|²)`.
    pub upper: Vec<Sym2>,
    /// `√det g` including the hidden directions.
    pub sqrt_det: Vec<f64>,
}

/// `g_ij = σ_ij - D_i u D_j u` and its inverse, computed both in closed form
/// and by direct inversion; the two must agree.
pub fn induced_metric(
    grad: &Gradient,
    metrics: &[NodeMetric],
    dim: usize,
    hidden: usize,
) -> Result<InducedMetric> {
    grad.require_spacelike()?;
    let len = grad.du.len();
    let mut lower = Vec::with_capacity(len);
    let mut upper = Vec::with_capacity(len);
    let mut sqrt_det = Vec::with_capacity(len);
    for k in 0..len {
        let m = &metrics[k];
        let d = grad.du[k];
        let up = grad.du_up[k];
        let wsq = 1.0 - grad.grad_sq[k];
        let mut g = [[0.0; 2]; 2];
        let mut gi = [[0.0; 2]; 2];
        for a in 0..dim {
            for b in 0..dim {
                let sig = if a == b { m.sigma[a] } else { 0.0 };
                let sig_inv = if a == b { 1.0 / m.sigma[a] } else { 0.0 };
                g[a][b] = sig - d[a] * d[b];
                gi[a][b] = sig_inv + up[a] * up[b] / wsq;
            }
        }
        let det = if dim == 2 { g[0][0] * g[1][1] - g[0][1] * g[1][0] } else { g[0][0] };
        if !(det > 0.0 && g[0][0] > 0.0) {
            return Err(Error::NotSpacelike { max_grad_sq: grad.max_grad_sq() });
        }
        let direct = if dim == 2 {
            [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]]
        } else {
            [[1.0 / g[0][0], 0.0], [0.0, 0.0]]
        };
        for a in 0..dim {
            for b in 0..dim {
                let diff = (direct[a][b] - gi[a][b]).abs();
                let bound = 1e-9 * (1.0 + gi[a][b].abs());
                if diff > bound {
                    return Err(Error::InternalConsistency {
                        check: "induced metric inverse",
                        discrepancy: diff,
                        bound,
                    });
                }
            }
        }
        lower.push(g);
        upper.push(gi);
        sqrt_det.push(det.sqrt() * m.w.powi(hidden as i32));
    }
    Ok(InducedMetric { lower, upper, sqrt_det })
}

/// All extrinsic fields of a space-like graph, per grid node.
#[derive(Clone, Debug)]
pub struct GraphGeometry {
    pub grid: Grid,
    pub metrics: Vec<NodeMetric>,
    /// Number of hidden base directions, `n - dim`.
    pub hidden: usize,
    pub gradient: Gradient,
    pub metric: InducedMetric,
    /// Covariant Hessian `D_aD_b u` (visible block, symmetrized).
    pub hess: Vec<Sym2>,
    /// `D_ψD_ψ u` along each hidden direction.
    pub hess_hidden: Vec<f64>,
    pub sff: Vec<Sym2>,
    pub sff_hidden: Vec<f64>,
    /// Mean curvature by the trace `g^{ik} h_ik`.
    pub mean_curvature: Vec<f64>,
    /// Mean curvature by the divergence `div_σ(Du / W)`.
    pub mean_curvature_div: Vec<f64>,
    pub theta: Vec<f64>,
    pub norm_a_sq: Vec<f64>,
    /// `Ric̄(ν, ν) = Ric_σ(Du, Du) / (1 - |Du|²)`.
    pub ric_nn: Vec<f64>,
}

/// Trace-route and divergence-route mean curvature for given derivatives.
struct Curvatures {
    hess: Vec<Sym2>,
    hess_hidden: Vec<f64>,
    trace: Vec<f64>,
    divergence: Vec<f64>,
}

fn curvatures(
    grid: &Grid,
    metrics: &[NodeMetric],
    hidden: usize,
    grad: &Gradient,
    upper: &[Sym2],
    coord_hess: &[Sym2],
    stride: usize,
) -> Curvatures {
    let dim = grid.dim();
    let m = hidden as f64;
    let len = grid.len();
    let mut hess = Vec::with_capacity(len);
    let mut hess_hidden = Vec::with_capacity(len);
    let mut trace = Vec::with_capacity(len);
    for k in 0..len {
        let nm = &metrics[k];
        let d = grad.du[k];
        let mut hs = [[0.0; 2]; 2];
        for a in 0..dim {
            for b in 0..dim {
                let mut v = coord_hess[k][a][b];
                for c in 0..dim {
                    v -= nm.christoffel.gamma[c][a][b] * d[c];
                }
                hs[a][b] = v;
            }
        }
        let off = 0.5 * (hs[0][1] + hs[1][0]);
        hs[0][1] = off;
        hs[1][0] = off;
        // D_ψD_ψ u = -Γ^a_ψψ D_a u = w σ^{ab} ∂_a w ∂_b u.
        let hh = nm.w * (nm.dw[0] * grad.du_up[k][0] + nm.dw[1] * grad.du_up[k][1]);
        let wfac = (1.0 - grad.grad_sq[k]).sqrt();
        let mut tr = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                tr += upper[k][a][b] * hs[a][b];
            }
        }
        tr += m * hh / (nm.w * nm.w);
        hess.push(hs);
        hess_hidden.push(hh);
        trace.push(tr / wfac);
    }

    let mut divergence = vec![0.0; len];
    for a in 0..dim {
        let flux: Vec<f64> = (0..len)
            .map(|k| {
                metrics[k].sqrt_det * grad.du_up[k][a] / (1.0 - grad.grad_sq[k]).sqrt()
            })
            .collect();
        let d = grid.partial_stride(&flux, a, stride);
        for k in 0..len {
            divergence[k] += d[k];
        }
    }
    for k in 0..len {
        divergence[k] /= metrics[k].sqrt_det;
    }
    Curvatures { hess, hess_hidden, trace, divergence }
}

impl GraphGeometry {
    /// Computes every field and cross-checks the two mean-curvature routes
    /// and the two ambient-Ricci routes.
    pub fn compute(graph: &SpacelikeGraph) -> Result<Self> {
        let geo = GraphGeometry::compute_unchecked(graph)?;
        geo.check_mean_curvature_routes(graph)?;
        geo.check_ricci_routes(&graph.chart)?;
        Ok(geo)
    }

    /// Same fields as [`GraphGeometry::compute`] without the cross-checks.
    pub fn compute_unchecked(graph: &SpacelikeGraph) -> Result<Self> {
        let (grid, metrics) = graph.chart.node_metrics()?;
        let dim = grid.dim();
        let hidden = graph.chart.base_dim() - dim;
        let gradient = gradient_from(grid.gradient(&graph.u), &metrics, dim);
        gradient.require_spacelike()?;
        let metric = induced_metric(&gradient, &metrics, dim, hidden)?;
        let Curvatures { hess, hess_hidden, trace, divergence } = curvatures(
            &grid,
            &metrics,
            hidden,
            &gradient,
            &metric.upper,
            &grid.hessian(&graph.u),
            1,
        );

        let len = grid.len();
        let mut sff = Vec::with_capacity(len);
        let mut sff_hidden = Vec::with_capacity(len);
        let mut theta = Vec::with_capacity(len);
        let mut norm_a_sq = Vec::with_capacity(len);
        let mut ric_nn = Vec::with_capacity(len);
        for k in 0..len {
            let wfac = (1.0 - gradient.grad_sq[k]).sqrt();
            let mut h = hess[k];
            for row in h.iter_mut() {
                for v in row.iter_mut() {
                    *v /= wfac;
                }
            }
            let hh = hess_hidden[k] / wfac;
            let gi = &metric.upper[k];
            let mut a2 = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    for c in 0..dim {
                        for d in 0..dim {
                            a2 += gi[a][c] * gi[b][d] * h[a][b] * h[c][d];
                        }
                    }
                }
            }
            let w2 = metrics[k].w * metrics[k].w;
            a2 += hidden as f64 * (hh / w2).powi(2);
            let up = gradient.du_up[k];
            let ric = metrics[k].ricci;
            let rnn = (ric[0] * up[0] * up[0] + ric[1] * up[1] * up[1]) / (wfac * wfac);
            sff.push(h);
            sff_hidden.push(hh);
            theta.push(-1.0 / wfac);
            norm_a_sq.push(a2);
            ric_nn.push(rnn);
        }

        Ok(GraphGeometry {
            grid,
            metrics,
            hidden,
            gradient,
            metric,
            hess,
            hess_hidden,
            sff,
            sff_hidden,
            mean_curvature: trace,
            mean_curvature_div: divergence,
            theta,
            norm_a_sq,
            ric_nn,
        })
    }

    /// Largest `|H_trace - H_div|` over nodes at least `margin` cells from an
    /// open boundary.
    pub fn mean_curvature_gap(&self, margin: usize) -> f64 {
        (0..self.grid.len())
            .filter(|&k| self.grid.boundary_distance(k) >= margin)
            .map(|k| (self.mean_curvature[k] - self.mean_curvature_div[k]).abs())
            .fold(0.0, f64::max)
    }

    /// Compares the route gap against a Richardson estimate of the truncation
    /// error obtained from stride-2 stencils.
    fn check_mean_curvature_routes(&self, graph: &SpacelikeGraph) -> Result<()> {
        let Some(bound) = self.route_bound(graph) else {
            return Ok(());
        };
        let gap = self.mean_curvature_gap(ROUTE_MARGIN);
        if gap > bound {
            return Err(Error::InternalConsistency {
                check: "mean curvature trace vs divergence",
                discrepancy: gap,
                bound,
            });
        }
        Ok(())
    }

    /// Tolerated route gap: ten times the estimated O(Δ²) truncation error of
    /// both routes plus a rounding floor. `None` when the stride-2 stencils
    /// leave the space-like cone.
    pub fn route_bound(&self, graph: &SpacelikeGraph) -> Option<f64> {
        let (estimate, scale) = self.truncation_estimate(graph)?;
        Some(10.0 * estimate + 1e-9 * (1.0 + scale))
    }

    /// Richardson estimate of the O(Δ²) error in `H`, from comparing unit and
    /// stride-2 stencils for both routes, with the largest `|H|` used as scale.
    pub fn truncation_estimate(&self, graph: &SpacelikeGraph) -> Option<(f64, f64)> {
        let grad2 = gradient_from(self.grid.gradient_stride(&graph.u, 2), &self.metrics, self.grid.dim());
        if !grad2.spacelike {
            return None;
        }
        let metric2 = induced_metric(&grad2, &self.metrics, self.grid.dim(), self.hidden).ok()?;
        let wide = curvatures(
            &self.grid,
            &self.metrics,
            self.hidden,
            &grad2,
            &metric2.upper,
            &self.grid.hessian_stride(&graph.u, 2),
            2,
        );
        let mut estimate = 0.0_f64;
        let mut scale = 0.0_f64;
        for k in (0..self.grid.len()).filter(|&k| self.grid.boundary_distance(k) >= ROUTE_MARGIN) {
            let ea = (wide.trace[k] - self.mean_curvature[k]).abs();
            let eb = (wide.divergence[k] - self.mean_curvature_div[k]).abs();
            estimate = estimate.max((ea + eb) / 3.0);
            scale = scale.max(self.mean_curvature[k].abs());
        }
        Some((estimate, scale))
    }

    /// `Ric̄(ν, ν)` from the coordinate Christoffel expression of the base.
    pub fn ric_nn_coordinate(&self, chart: &BaseChart) -> Result<Vec<f64>> {
        (0..self.grid.len())
            .map(|k| {
                let ric = chart.ricci_coordinate_at(self.grid.coords(k))?;
                let up = self.gradient.du_up[k];
                let wsq = 1.0 - self.gradient.grad_sq[k];
                Ok((ric[0] * up[0] * up[0] + ric[1] * up[1] * up[1]) / wsq)
            })
            .collect()
    }

    fn check_ricci_routes(&self, chart: &BaseChart) -> Result<()> {
        if chart.profile().is_none() {
            return Ok(());
        }
        let coord = self.ric_nn_coordinate(chart)?;
        for (a, b) in self.ric_nn.iter().zip(&coord) {
            let bound = 1e-8 * (1.0 + a.abs());
            if (a - b).abs() > bound {
                return Err(Error::InternalConsistency {
                    check: "ambient Ricci closed form vs coordinate expression",
                    discrepancy: (a - b).abs(),
                    bound,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Max of `|f|` over nodes off the open boundary.
    pub fn interior_max_abs(&self, f: &[f64]) -> f64 {
        self.max_abs_with_margin(f, 1)
    }

    pub fn max_abs_with_margin(&self, f: &[f64], margin: usize) -> f64 {
        (0..f.len())
            .filter(|&k| self.grid.boundary_distance(k) >= margin)
            .map(|k| f[k].abs())
            .fold(0.0, f64::max)
    }

    /// `∫ e^{rate·u} dμ` reusing this geometry's `√det g`.
    pub fn weighted_area(&self, graph: &SpacelikeGraph, rate: f64) -> f64 {
        let weights = self.grid.cell_weights();
        let terms: Vec<f64> = (0..self.len())
            .map(|k| (rate * graph.u[k]).exp() * self.metric.sqrt_det[k] * weights[k])
            .collect();
        angular_factor(&graph.chart) * pairwise_sum(&terms)
    }

    /// `H + cΘ` at every node; zero for translators.
    pub fn translator_residual(&self, c: f64) -> Vec<f64> {
        self.mean_curvature
            .iter()
            .zip(&self.theta)
            .map(|(h, t)| h + c * t)
            .collect()
    }

    /// `g(∇f, ∇k) = g^{ab} ∂_a f ∂_b k` for coordinate gradients.
    pub fn pairing(&self, df: &[[f64; 2]], dk: &[[f64; 2]]) -> Vec<f64> {
        let dim = self.dim();
        (0..self.len())
            .map(|k| {
                let gi = &self.metric.upper[k];
                let mut v = 0.0;
                for a in 0..dim {
                    for b in 0..dim {
                        v += gi[a][b] * df[k][a] * dk[k][b];
                    }
                }
                v
            })
            .collect()
    }

    /// Laplace–Beltrami operator of the induced metric.
    pub fn surface_laplacian(&self, f: &[f64]) -> Vec<f64> {
        self.weighted_divergence(None, f)
    }

    /// `(1/√g) ∂_a(√g κ g^{ab} ∂_b f)` with a compact conservative stencil:
    /// fluxes live on half nodes, their coefficients are arithmetic means of
    /// the nodal ones. Nodes on open ends use a one-sided nodal-flux form.
    pub fn weighted_divergence(&self, kappa: Option<&[f64]>, f: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let dim = grid.dim();
        let len = grid.len();
        let coef: Vec<Sym2> = (0..len)
            .map(|k| {
                let s = self.metric.sqrt_det[k] * kappa.map_or(1.0, |kp| kp[k]);
                let gi = self.metric.upper[k];
                [[s * gi[0][0], s * gi[0][1]], [s * gi[1][0], s * gi[1][1]]]
            })
            .collect();
        let df = grid.gradient(f);

        // Nodal fluxes for the boundary fallback.
        let nodal: Vec<Vec<f64>> = (0..dim)
            .map(|a| {
                let flux: Vec<f64> = (0..len)
                    .map(|k| (0..dim).map(|b| coef[k][a][b] * df[k][b]).sum())
                    .collect();
                grid.partial(&flux, a)
            })
            .collect();

        let half_flux = |k: usize, kn: usize, a: usize, sign: f64| -> f64 {
            let h = grid.axis(a).step;
            let mut v = 0.5 * (coef[k][a][a] + coef[kn][a][a]) * sign * (f[kn] - f[k]) / h;
            for b in (0..dim).filter(|&b| b != a) {
                v += 0.5 * (coef[k][a][b] + coef[kn][a][b]) * 0.5 * (df[k][b] + df[kn][b]);
            }
            v
        };

        (0..len)
            .map(|k| {
                let mut acc = 0.0;
                for a in 0..dim {
                    match (grid.neighbor(k, a, 1), grid.neighbor(k, a, -1)) {
                        (Some(kp), Some(km)) => {
                            let h = grid.axis(a).step;
                            acc += (half_flux(k, kp, a, 1.0) - half_flux(km, k, a, 1.0)) / h;
                        }
                        _ => acc += nodal[a][k],
                    }
                }
                acc / self.metric.sqrt_det[k]
            })
            .collect()
    }
}

/// Volume of the unit `(n-1)`-sphere.
pub fn sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        n => 2.0 * PI / (n as f64 - 2.0) * sphere_area(n - 2),
    }
}

/// `F(Σ) = ∫ e^{c u} dμ`.
pub fn weighted_area(graph: &SpacelikeGraph) -> Result<f64> {
    weighted_area_with_rate(graph, graph.c)
}

/// `∫ e^{rate·u} dμ` with node-wise trapezoid/periodic quadrature. The
/// angular directions of a radial chart contribute the unit-sphere volume.
pub fn weighted_area_with_rate(graph: &SpacelikeGraph, rate: f64) -> Result<f64> {
    let (grid, metrics) = graph.chart.node_metrics()?;
    let dim = grid.dim();
    let hidden = graph.chart.base_dim() - dim;
    let grad = gradient_from(grid.gradient(&graph.u), &metrics, dim);
    let metric = induced_metric(&grad, &metrics, dim, hidden)?;
    let weights = grid.cell_weights();
    let terms: Vec<f64> = (0..grid.len())
        .map(|k| (rate * graph.u[k]).exp() * metric.sqrt_det[k] * weights[k])
        .collect();
    Ok(angular_factor(&graph.chart) * pairwise_sum(&terms))
}

/// Volume of the directions a radial chart integrates out.
pub fn angular_factor(chart: &BaseChart) -> f64 {
    match chart {
        BaseChart::Radial1d { n, .. } => sphere_area(*n),
        _ => 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::WarpedProfile;
    use std::f64::consts::PI;

    fn torus(n: usize) -> BaseChart {
        BaseChart::flat_torus(2.0 * PI, 2.0 * PI, n, n)
    }

    #[test]
    fn constant_graph_is_totally_geodesic() {
        let g = SpacelikeGraph::from_fn(torus(16), 0.7, |_| 3.0).unwrap();
        let geo = GraphGeometry::compute(&g).unwrap();
        for k in 0..geo.len() {
            assert_eq!(geo.gradient.grad_sq[k], 0.0);
            assert_eq!(geo.theta[k], -1.0);
            assert_eq!(geo.mean_curvature[k], 0.0);
            assert_eq!(geo.norm_a_sq[k], 0.0);
            assert_eq!(geo.metric.lower[k], [[1.0, 0.0], [0.0, 1.0]]);
        }
    }

    #[test]
    fn linear_ramp_gradient_and_metric() {
        let chart = BaseChart::flat_patch((0.0, 1.0), (0.0, 1.0), 9, 9);
        let g = SpacelikeGraph::from_fn(chart, 0.0, |x| 0.5 * x[0]).unwrap();
        let grad = covariant_gradient(&g).unwrap();
        assert!(grad.spacelike);
        for k in 0..grad.du.len() {
            assert!((grad.du[k][0] - 0.5).abs() < 1e-14);
            assert!((grad.grad_sq[k] - 0.25).abs() < 1e-14);
        }
        let geo = GraphGeometry::compute(&g).unwrap();
        let gl = geo.metric.lower[40];
        let gu = geo.metric.upper[40];
        assert!((gl[0][0] - 0.75).abs() < 1e-14 && (gl[1][1] - 1.0).abs() < 1e-14);
        assert!((gu[0][0] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn steep_graph_is_refused() {
        let chart = BaseChart::flat_patch((0.0, 1.0), (0.0, 1.0), 9, 9);
        let g = SpacelikeGraph::from_fn(chart, 0.0, |x| 1.2 * x[0]).unwrap();
        let grad = covariant_gradient(&g).unwrap();
        assert!(!grad.spacelike);
        assert!(matches!(GraphGeometry::compute(&g), Err(Error::NotSpacelike { .. })));
        assert!(angle_function(&grad).is_err());
    }

    #[test]
    fn angle_function_by_substitution() {
        let chart = BaseChart::flat_patch((0.0, 1.0), (0.0, 1.0), 9, 9);
        let g = SpacelikeGraph::from_fn(chart, 0.0, |x| 0.75f64.sqrt() * x[1]).unwrap();
        let theta = angle_function(&covariant_gradient(&g).unwrap()).unwrap();
        assert!(theta.iter().all(|t| (t + 2.0).abs() < 1e-12));
    }

    #[test]
    fn paraboloid_at_origin() {
        // u = 0.05 (x² + y²): h_ij = 0.1 δ_ij, H = 0.2, |A|² = 0.02 at the origin.
        let chart = BaseChart::flat_patch((-1.0, 1.0), (-1.0, 1.0), 21, 21);
        let g = SpacelikeGraph::from_fn(chart, 0.0, |x| 0.05 * (x[0] * x[0] + x[1] * x[1]))
            .unwrap();
        let geo = GraphGeometry::compute(&g).unwrap();
        let o = geo.grid.index(10, 10);
        assert!((geo.sff[o][0][0] - 0.1).abs() < 1e-12);
        assert!((geo.sff[o][1][1] - 0.1).abs() < 1e-12);
        assert!(geo.sff[o][0][1].abs() < 1e-12);
        assert!((geo.mean_curvature[o] - 0.2).abs() < 1e-12);
        assert!((geo.norm_a_sq[o] - 0.02).abs() < 1e-12);
    }

    #[test]
    fn warped_radial_formulas() {
        let p = WarpedProfile::hyperbolic();
        let chart = BaseChart::warped(p.clone(), 2, (0.5, 1.5), 41, 16);
        let g = SpacelikeGraph::from_fn(chart, 0.0, |x| 0.3 * x[0] * x[0]).unwrap();
        let geo = GraphGeometry::compute(&g).unwrap();
        for k in (0..geo.len()).filter(|&k| geo.grid.is_interior(k)) {
            let r = geo.grid.coords(k)[0];
            let ur = 0.6 * r;
            let w = (1.0 - ur * ur).sqrt();
            let v = p.eval(r).unwrap();
            assert!((geo.gradient.grad_sq[k] - ur * ur).abs() < 1e-12);
            assert!((geo.metric.lower[k][0][0] - (1.0 - ur * ur)).abs() < 1e-12);
            assert!((geo.metric.lower[k][1][1] - v.h * v.h).abs() < 1e-12);
            assert!((geo.sff[k][0][0] - 0.6 / w).abs() < 1e-9);
            assert!((geo.sff[k][1][1] - v.h * v.dh * ur / w).abs() < 1e-12);
            // Hyperbolic base: Ric̄(ν,ν) = -u_r²/(1 - u_r²).
            assert!((geo.ric_nn[k] + ur * ur / (1.0 - ur * ur)).abs() < 1e-12);
        }
    }

    #[test]
    fn spherical_ricci_with_half_gradient() {
        // u_r² = 1/2 ⇒ Ric_σ(Du,Du)/(1-|Du|²) = 1.
        let chart = BaseChart::warped(WarpedProfile::spherical(), 2, (0.4, 1.2), 17, 8);
        let s = 0.5f64.sqrt();
        let g = SpacelikeGraph::from_fn(chart, 0.0, |x| s * x[0]).unwrap();
        let geo = GraphGeometry::compute(&g).unwrap();
        assert!(geo.ric_nn.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn surface_laplacian_of_sine_on_flat_torus() {
        let chart = torus(64);
        let g = SpacelikeGraph::from_fn(chart, 0.0, |_| 0.0).unwrap();
        let geo = GraphGeometry::compute(&g).unwrap();
        let f: Vec<f64> = (0..geo.len()).map(|k| geo.grid.coords(k)[0].sin()).collect();
        let lap = geo.surface_laplacian(&f);
        let h = 2.0 * PI / 64.0;
        for k in 0..geo.len() {
            // Exact symbol of the three-point stencil.
            let expect = -f[k] * (2.0 - 2.0 * h.cos()) / (h * h);
            assert!((lap[k] - expect).abs() < 1e-12);
            assert!((lap[k] + f[k]).abs() < 1e-3);
        }
    }

    #[test]
    fn linear_function_on_tilted_plane_is_harmonic() {
        let chart = BaseChart::flat_patch((0.0, 1.0), (0.0, 1.0), 11, 11);
        let g = SpacelikeGraph::from_fn(chart, 0.0, |x| 0.3 * x[0] - 0.4 * x[1]).unwrap();
        let geo = GraphGeometry::compute(&g).unwrap();
        let f: Vec<f64> = (0..geo.len())
            .map(|k| {
                let x = geo.grid.coords(k);
                2.0 * x[0] + x[1] - 1.0
            })
            .collect();
        assert!(geo.surface_laplacian(&f).iter().all(|v| v.abs() < 1e-11));
        let ones = vec![5.0; geo.len()];
        assert!(geo.surface_laplacian(&ones).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn weighted_area_examples() {
        let g = SpacelikeGraph::from_fn(torus(16), 1.3, |_| 0.0).unwrap();
        assert!((weighted_area(&g).unwrap() - 4.0 * PI * PI).abs() < 1e-12);
        let g = SpacelikeGraph::from_fn(torus(16), 0.5, |_| 2.0).unwrap();
        assert!((weighted_area(&g).unwrap() - 1f64.exp() * 4.0 * PI * PI).abs() < 1e-10);
        let chart = BaseChart::flat_patch((0.0, 1.0), (0.0, 1.0), 9, 9);
        let g = SpacelikeGraph::from_fn(chart, 0.0, |x| 0.5 * x[0]).unwrap();
        assert!((weighted_area(&g).unwrap() - 0.75f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn radial_and_warped_areas_agree() {
        let p = WarpedProfile::euclidean();
        let radial = SpacelikeGraph::from_fn(BaseChart::radial(p.clone(), 2, (0.1, 1.0), 31), 0.4, |x| {
            0.2 * x[0] * x[0]
        })
        .unwrap();
        let warped = SpacelikeGraph::from_fn(BaseChart::warped(p, 2, (0.1, 1.0), 31, 12), 0.4, |x| {
            0.2 * x[0] * x[0]
        })
        .unwrap();
        let a = weighted_area(&radial).unwrap();
        let b = weighted_area(&warped).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn route_gap_within_richardson_bound() {
        let chart = torus(32);
        let g = SpacelikeGraph::from_fn(chart, 0.0, |x| 0.2 * x[0].sin() * x[1].cos()).unwrap();
        let geo = GraphGeometry::compute(&g).unwrap();
        let bound = geo.route_bound(&g).unwrap();
        assert!(geo.mean_curvature_gap(ROUTE_MARGIN) <= bound);
        assert!(bound < 0.1);
        // A perturbation far above the truncation estimate is out of bounds.
        let mut bad = geo.clone();
        bad.mean_curvature_div[7] += 10.0 * bound;
        assert!(bad.mean_curvature_gap(ROUTE_MARGIN) > bound);
    }

    #[test]
    fn coarsen_subsamples_nodes() {
        let g = SpacelikeGraph::from_fn(torus(16), 0.0, |x| x[0].sin()).unwrap();
        let c = g.coarsen(2).unwrap();
        assert_eq!(c.u.len(), 64);
        assert_eq!(c.u[c.grid().unwrap().index(3, 5)], g.u[g.grid().unwrap().index(6, 10)]);
    }
}
