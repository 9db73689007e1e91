//! Base Riemannian manifolds: flat tori and patches, and warped products
//! `σ = dr² + h(r)² dθ²` over polar domains.
//!
//! A base of dimension `n` is represented on a grid with one or two visible
//! coordinates. The remaining `n - dim` directions are hidden: they carry the
//! metric factor `w²` (with `w = h(r)` on warped bases and `w = 1` on flat
//! ones) and every field is constant along them. On a warped base the hidden
//! fibre directions are flat, so `σ = dr² + h²(dθ² + dψ₁² + … + dψ_{n-2}²)`;
//! for radial data this coincides with the round-sphere warped product.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};

/// Largest radius at which `sinh`/`cosh` stay finite.
const HYPERBOLIC_R_LIMIT: f64 = 700.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    Euclidean,
    Spherical,
    Hyperbolic,
    /// Sampled `(r, h, h', h'')` rows, strictly increasing in `r`.
    Custom { samples: Vec<[f64; 4]> },
}

/// Warping function `h(r)` of a polar warped product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct WarpedProfile {
    #[serde(flatten)]
    kind: ProfileKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_max: Option<f64>,
}

#[derive(Deserialize)]
struct RawProfile {
    #[serde(flatten)]
    kind: ProfileKind,
    #[serde(default)]
    r_max: Option<f64>,
}

impl TryFrom<RawProfile> for WarpedProfile {
    type Error = Error;

    fn try_from(raw: RawProfile) -> Result<Self> {
        WarpedProfile::new(raw.kind, raw.r_max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileValue {
    pub h: f64,
    pub dh: f64,
    pub ddh: f64,
}

impl WarpedProfile {
    pub fn new(kind: ProfileKind, r_max: Option<f64>) -> Result<Self> {
        let profile = WarpedProfile { kind, r_max };
        profile.validate()?;
        Ok(profile)
    }

    pub fn euclidean() -> Self {
        WarpedProfile { kind: ProfileKind::Euclidean, r_max: None }
    }

    pub fn spherical() -> Self {
        WarpedProfile { kind: ProfileKind::Spherical, r_max: None }
    }

    pub fn hyperbolic() -> Self {
        WarpedProfile { kind: ProfileKind::Hyperbolic, r_max: None }
    }

    pub fn custom(samples: Vec<[f64; 4]>) -> Result<Self> {
        WarpedProfile::new(ProfileKind::Custom { samples }, None)
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ProfileKind::Euclidean => "euclidean",
            ProfileKind::Spherical => "spherical",
            ProfileKind::Hyperbolic => "hyperbolic",
            ProfileKind::Custom { .. } => "custom",
        }
    }

    /// Parses `euclidean`, `spherical` or `hyperbolic`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "euclidean" => Ok(Self::euclidean()),
            "spherical" => Ok(Self::spherical()),
            "hyperbolic" => Ok(Self::hyperbolic()),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }

    /// Coordinate radius bound of the profile (exclusive).
    pub fn r_max(&self) -> f64 {
        let natural = match &self.kind {
            ProfileKind::Euclidean => f64::INFINITY,
            ProfileKind::Spherical => PI,
            ProfileKind::Hyperbolic => HYPERBOLIC_R_LIMIT,
            ProfileKind::Custom { samples } => samples[samples.len() - 1][0],
        };
        self.r_max.map_or(natural, |r| r.min(natural))
    }

    fn validate(&self) -> Result<()> {
        if let Some(r) = self.r_max {
            if !(r > 0.0) {
                return Err(Error::Config(format!("profile r_max must be positive, got {r}")));
            }
            if matches!(self.kind, ProfileKind::Spherical) && r > PI {
                return Err(Error::Config(format!(
                    "spherical profile requires r_max <= pi, got {r}"
                )));
            }
        }
        if let ProfileKind::Custom { samples } = &self.kind {
            if samples.len() < 2 {
                return Err(Error::Config("custom profile needs at least two samples".into()));
            }
            if samples.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
                return Err(Error::Config("custom profile samples must be finite".into()));
            }
            if samples.windows(2).any(|w| w[1][0] <= w[0][0]) || samples[0][0] < 0.0 {
                return Err(Error::Config(
                    "custom profile radii must be non-negative and strictly increasing".into(),
                ));
            }
            if let Some(s) = samples.iter().find(|s| s[0] > 0.0 && s[1] <= 0.0) {
                return Err(Error::Config(format!("custom profile has h <= 0 at r = {}", s[0])));
            }
            // Extrapolate to the pole with the sampled Taylor data.
            let [r0, h0, dh0, ddh0] = samples[0];
            let h_origin = h0 - r0 * dh0 + 0.5 * r0 * r0 * ddh0;
            let dh_origin = dh0 - r0 * ddh0;
            const POLE_TOL: f64 = 1e-3;
            if h_origin.abs() > POLE_TOL || (dh_origin - 1.0).abs() > POLE_TOL {
                return Err(Error::Config(format!(
                    "custom profile violates h(0) = 0, h'(0) = 1 (extrapolated {h_origin:.3e}, {dh_origin:.6})"
                )));
            }
        }
        Ok(())
    }

    /// Returns `(h, h', h'')` at `r`, for `0 < r < r_max`.
    pub fn eval(&self, r: f64) -> Result<ProfileValue> {
        let r_max = self.r_max();
        let in_range = match self.kind {
            ProfileKind::Custom { .. } => r > 0.0 && r <= r_max,
            _ => r > 0.0 && r < r_max,
        };
        if !in_range {
            return Err(Error::Domain(format!(
                "r = {r} outside the {} profile domain (0, {r_max})",
                self.name()
            )));
        }
        let v = match &self.kind {
            ProfileKind::Euclidean => ProfileValue { h: r, dh: 1.0, ddh: 0.0 },
            ProfileKind::Spherical => ProfileValue { h: r.sin(), dh: r.cos(), ddh: -r.sin() },
            ProfileKind::Hyperbolic => {
                ProfileValue { h: r.sinh(), dh: r.cosh(), ddh: r.sinh() }
            }
            ProfileKind::Custom { samples } => interpolate_samples(samples, r)?,
        };
        Ok(v)
    }

    /// Checks the hypothesis `h' != 0` on `(0, r0)` by sampling.
    pub fn check_nonvanishing_derivative(&self, r0: f64, samples: usize) -> Result<()> {
        for k in 1..=samples {
            let r = r0 * k as f64 / (samples as f64 + 1.0);
            if self.eval(r)?.dh == 0.0 {
                return Err(Error::Domain(format!("h' vanishes at r = {r}")));
            }
        }
        let sign = self.eval(r0 / (samples as f64 + 1.0))?.dh.signum();
        for k in 1..=samples {
            let r = r0 * k as f64 / (samples as f64 + 1.0);
            if self.eval(r)?.dh.signum() != sign {
                return Err(Error::Domain(format!("h' changes sign before r = {r}")));
            }
        }
        Ok(())
    }
}

fn hermite(t: f64, dx: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * dx * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * dx * m1
}

/// Cubic Hermite rule: `h` from (h, h'), `h'` from (h', h''), and `h''` from
/// the sampled values with finite-difference slopes.
fn interpolate_samples(samples: &[[f64; 4]], r: f64) -> Result<ProfileValue> {
    let first = samples[0][0];
    if r < first {
        return Err(Error::Domain(format!(
            "r = {r} below the first custom sample at {first}"
        )));
    }
    let k = samples
        .partition_point(|s| s[0] <= r)
        .clamp(1, samples.len() - 1)
        - 1;
    let a = samples[k];
    let b = samples[k + 1];
    let dx = b[0] - a[0];
    let t = (r - a[0]) / dx;
    // Quadratic fits through three neighbouring samples; one-sided at the ends.
    let slope = |i: usize| -> f64 {
        let n = samples.len();
        if n == 2 {
            return (samples[1][3] - samples[0][3]) / (samples[1][0] - samples[0][0]);
        }
        let c = i.clamp(1, n - 2);
        let (x0, x1, x2) = (samples[c - 1][0], samples[c][0], samples[c + 1][0]);
        let (y0, y1, y2) = (samples[c - 1][3], samples[c][3], samples[c + 1][3]);
        let x = samples[i][0];
        y0 * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + y1 * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + y2 * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    Ok(ProfileValue {
        h: hermite(t, dx, a[1], b[1], a[2], b[2]),
        dh: hermite(t, dx, a[2], b[2], a[3], b[3]),
        ddh: hermite(t, dx, a[3], b[3], slope(k), slope(k + 1)),
    })
}

/// Christoffel symbols of the visible block, `gamma[k][i][j] = Γ^k_{ij}`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Christoffel {
    pub gamma: [[[f64; 2]; 2]; 2],
}

impl Christoffel {
    /// Warped-product symbols in `(r, θ)`: `Γ^r_θθ = -h h'`, `Γ^θ_rθ = h'/h`.
    pub fn warped(profile: &WarpedProfile, r: f64) -> Result<Self> {
        if r == 0.0 {
            return Err(Error::SingularPoint { r });
        }
        let ProfileValue { h, dh, .. } = profile.eval(r)?;
        let mut gamma = [[[0.0; 2]; 2]; 2];
        gamma[0][1][1] = -h * dh;
        gamma[1][0][1] = dh / h;
        gamma[1][1][0] = dh / h;
        Ok(Christoffel { gamma })
    }
}

/// Ricci tensor of `dr² + h² (dψ₁² + … + dψ_{n-1}²)` from its Christoffel
/// symbols, `R_jk = ∂_iΓ^i_jk − ∂_kΓ^i_ij + Γ^i_ip Γ^p_jk − Γ^i_kp Γ^p_ij`.
/// Returns the full `n × n` matrix in `(r, ψ₁, …)` coordinates.
pub fn ricci_coordinate(profile: &WarpedProfile, n: usize, r: f64) -> Result<Vec<Vec<f64>>> {
    if r == 0.0 {
        return Err(Error::SingularPoint { r });
    }
    let ProfileValue { h, dh, ddh } = profile.eval(r)?;
    // Diagonal metric depending on x⁰ = r only.
    let g: Vec<f64> = (0..n).map(|k| if k == 0 { 1.0 } else { h * h }).collect();
    let dg: Vec<f64> = (0..n).map(|k| if k == 0 { 0.0 } else { 2.0 * h * dh }).collect();
    let ddg: Vec<f64> = (0..n)
        .map(|k| if k == 0 { 0.0 } else { 2.0 * (dh * dh + h * ddh) })
        .collect();

    // ∂_i g_jk and ∂_0 ∂_i g_jk.
    let d = |i: usize, j: usize, k: usize| if i == 0 && j == k { dg[j] } else { 0.0 };
    let dd = |i: usize, j: usize, k: usize| if i == 0 && j == k { ddg[j] } else { 0.0 };

    let mut gamma = vec![vec![vec![0.0; n]; n]; n];
    let mut dgamma = vec![vec![vec![0.0; n]; n]; n]; // ∂_0 Γ^k_ij
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let s = d(i, j, k) + d(j, i, k) - d(k, i, j);
                let ds = dd(i, j, k) + dd(j, i, k) - dd(k, i, j);
                gamma[k][i][j] = 0.5 * s / g[k];
                dgamma[k][i][j] = 0.5 * ds / g[k] - 0.5 * s * dg[k] / (g[k] * g[k]);
            }
        }
    }
    // ∂_m Γ vanishes unless m = 0.
    let dgam = |m: usize, k: usize, i: usize, j: usize| if m == 0 { dgamma[k][i][j] } else { 0.0 };

    let mut ric = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            let mut v = 0.0;
            for i in 0..n {
                v += dgam(i, i, j, k) - dgam(k, i, i, j);
                for p in 0..n {
                    v += gamma[i][i][p] * gamma[p][j][k] - gamma[i][k][p] * gamma[p][i][j];
                }
            }
            ric[j][k] = v;
        }
    }
    Ok(ric)
}

/// Closed-form Ricci of the warped product with flat fibres:
/// `Ric(∂r, ∂r) = -(n-1) h''/h`, `Ric(∂ψ, ∂ψ) = -h h'' - (n-2) h'²`.
pub fn ricci_warped_closed_form(profile: &WarpedProfile, n: usize, r: f64) -> Result<[f64; 2]> {
    if r == 0.0 {
        return Err(Error::SingularPoint { r });
    }
    let ProfileValue { h, dh, ddh } = profile.eval(r)?;
    let m = n as f64;
    Ok([-(m - 1.0) * ddh / h, -h * ddh - (m - 2.0) * dh * dh])
}

fn default_dim() -> usize {
    2
}

/// The base chart together with its grid layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum BaseChart {
    /// `[0, lx) × [0, ly)` with periodic identification.
    #[serde(rename = "flat_torus")]
    FlatTorus {
        lx: f64,
        ly: f64,
        nx: usize,
        ny: usize,
        #[serde(default = "default_dim")]
        n: usize,
    },
    /// Closed rectangle `[x_min, x_max] × [y_min, y_max]` with open ends.
    #[serde(rename = "flat_patch")]
    FlatPatch {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
        nx: usize,
        ny: usize,
        #[serde(default = "default_dim")]
        n: usize,
    },
    /// Radial coordinate only; all `n - 1` angular directions are hidden.
    #[serde(rename = "radial_1d")]
    Radial1d {
        profile: WarpedProfile,
        n: usize,
        r_min: f64,
        r_max: f64,
        nr: usize,
    },
    /// `(r, θ)` grid, θ periodic; `n - 2` further fibre directions are hidden.
    #[serde(rename = "warped_2d")]
    Warped2d {
        profile: WarpedProfile,
        n: usize,
        r_min: f64,
        r_max: f64,
        nr: usize,
        ntheta: usize,
    },
}

/// Per-node base data consumed by the graph geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeMetric {
    /// Diagonal entries of σ on the visible coordinates.
    pub sigma: [f64; 2],
    /// `√det σ` including the hidden factor `w^{n-dim}`.
    pub sqrt_det: f64,
    pub christoffel: Christoffel,
    /// Hidden-direction scale `w` and its visible gradient `∂_a w`.
    pub w: f64,
    pub dw: [f64; 2],
    /// Ricci of σ on the visible block, closed form (diagonal).
    pub ricci: [f64; 2],
}

impl NodeMetric {
    fn flat() -> Self {
        NodeMetric {
            sigma: [1.0, 1.0],
            sqrt_det: 1.0,
            christoffel: Christoffel::default(),
            w: 1.0,
            dw: [0.0, 0.0],
            ricci: [0.0, 0.0],
        }
    }
}

impl BaseChart {
    pub fn flat_torus(lx: f64, ly: f64, nx: usize, ny: usize) -> Self {
        BaseChart::FlatTorus { lx, ly, nx, ny, n: 2 }
    }

    pub fn flat_patch(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Self {
        BaseChart::FlatPatch {
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
            nx,
            ny,
            n: 2,
        }
    }

    pub fn radial(profile: WarpedProfile, n: usize, r: (f64, f64), nr: usize) -> Self {
        BaseChart::Radial1d { profile, n, r_min: r.0, r_max: r.1, nr }
    }

    pub fn warped(profile: WarpedProfile, n: usize, r: (f64, f64), nr: usize, ntheta: usize) -> Self {
        BaseChart::Warped2d { profile, n, r_min: r.0, r_max: r.1, nr, ntheta }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            BaseChart::FlatTorus { .. } => "flat_torus",
            BaseChart::FlatPatch { .. } => "flat_patch",
            BaseChart::Radial1d { .. } => "radial_1d",
            BaseChart::Warped2d { .. } => "warped_2d",
        }
    }

    /// Ambient base dimension `n`.
    pub fn base_dim(&self) -> usize {
        match *self {
            BaseChart::FlatTorus { n, .. }
            | BaseChart::FlatPatch { n, .. }
            | BaseChart::Radial1d { n, .. }
            | BaseChart::Warped2d { n, .. } => n,
        }
    }

    pub fn profile(&self) -> Option<&WarpedProfile> {
        match self {
            BaseChart::Radial1d { profile, .. } | BaseChart::Warped2d { profile, .. } => {
                Some(profile)
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let visible = self.grid()?.dim();
        let n = self.base_dim();
        if n < visible {
            return Err(Error::Config(format!(
                "base dimension n = {n} is smaller than the {visible} grid coordinates"
            )));
        }
        match self {
            BaseChart::FlatTorus { lx, ly, .. } if !(*lx > 0.0 && *ly > 0.0) => {
                Err(Error::Config("torus periods must be positive".into()))
            }
            BaseChart::FlatPatch { x_min, x_max, y_min, y_max, .. }
                if !(x_max > x_min && y_max > y_min) =>
            {
                Err(Error::Config("patch extents must be increasing".into()))
            }
            BaseChart::Radial1d { profile, r_min, r_max, .. }
            | BaseChart::Warped2d { profile, r_min, r_max, .. } => {
                if *r_min == 0.0 {
                    return Err(Error::SingularPoint { r: 0.0 });
                }
                if !(*r_min > 0.0 && r_max > r_min) {
                    return Err(Error::Config(format!(
                        "radial range must satisfy 0 < r_min < r_max, got [{r_min}, {r_max}]"
                    )));
                }
                profile.eval(*r_min)?;
                profile.eval(*r_max)?;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        let axes = match *self {
            BaseChart::FlatTorus { lx, ly, nx, ny, .. } => {
                vec![Axis::periodic(nx, 0.0, lx), Axis::periodic(ny, 0.0, ly)]
            }
            BaseChart::FlatPatch { x_min, x_max, y_min, y_max, nx, ny, .. } => {
                vec![Axis::open(nx, x_min, x_max), Axis::open(ny, y_min, y_max)]
            }
            BaseChart::Radial1d { r_min, r_max, nr, .. } => vec![Axis::open(nr, r_min, r_max)],
            BaseChart::Warped2d { r_min, r_max, nr, ntheta, .. } => {
                vec![Axis::open(nr, r_min, r_max), Axis::periodic(ntheta, 0.0, 2.0 * PI)]
            }
        };
        Grid::new(axes)
    }

    /// Base data at a coordinate point (the radius is `x[0]` on warped charts).
    pub fn metric_at(&self, x: [f64; 2]) -> Result<NodeMetric> {
        match self {
            BaseChart::FlatTorus { .. } | BaseChart::FlatPatch { .. } => Ok(NodeMetric::flat()),
            BaseChart::Radial1d { profile, n, .. } | BaseChart::Warped2d { profile, n, .. } => {
                let r = x[0];
                if r == 0.0 {
                    return Err(Error::SingularPoint { r });
                }
                let ProfileValue { h, dh, .. } = profile.eval(r)?;
                let two_d = matches!(self, BaseChart::Warped2d { .. });
                let visible = if two_d { 2 } else { 1 };
                let hidden = (n - visible) as i32;
                let ric = ricci_warped_closed_form(profile, *n, r)?;
                let (sigma, sqrt_visible, christoffel, ricci) = if two_d {
                    ([1.0, h * h], h, Christoffel::warped(profile, r)?, ric)
                } else {
                    ([1.0, 1.0], 1.0, Christoffel::default(), [ric[0], 0.0])
                };
                Ok(NodeMetric {
                    sigma,
                    sqrt_det: sqrt_visible * h.powi(hidden),
                    christoffel,
                    w: h,
                    dw: [dh, 0.0],
                    ricci,
                })
            }
        }
    }

    /// Christoffel symbols of σ at a grid node.
    pub fn christoffels(&self, node: usize) -> Result<Christoffel> {
        let x = self.grid()?.coords(node);
        Ok(self.metric_at(x)?.christoffel)
    }

    /// Visible-block Ricci of σ at a grid node (closed form, diagonal).
    pub fn ricci(&self, node: usize) -> Result<[f64; 2]> {
        let x = self.grid()?.coords(node);
        Ok(self.metric_at(x)?.ricci)
    }

    /// Visible-block Ricci of σ at a point from the coordinate Christoffel
    /// expression (independent of [`BaseChart::ricci`]).
    pub fn ricci_coordinate_at(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        match self {
            BaseChart::FlatTorus { .. } | BaseChart::FlatPatch { .. } => Ok([0.0, 0.0]),
            BaseChart::Radial1d { profile, n, .. } => {
                let ric = ricci_coordinate(profile, *n, x[0])?;
                Ok([ric[0][0], 0.0])
            }
            BaseChart::Warped2d { profile, n, .. } => {
                let ric = ricci_coordinate(profile, (*n).max(2), x[0])?;
                Ok([ric[0][0], ric[1][1]])
            }
        }
    }

    /// Per-node base data over the whole grid.
    pub fn node_metrics(&self) -> Result<(Grid, Vec<NodeMetric>)> {
        self.validate()?;
        let grid = self.grid()?;
        let metrics = (0..grid.len())
            .map(|k| self.metric_at(grid.coords(k)))
            .collect::<Result<Vec<_>>>()?;
        Ok((grid, metrics))
    }

    /// Same chart with every `factor`-th node retained.
    pub fn coarsen(&self, factor: usize) -> Result<BaseChart> {
        let g = self.grid()?.coarsen(factor)?;
        let (n0, n1) = g.shape();
        let mut c = self.clone();
        match &mut c {
            BaseChart::FlatTorus { nx, ny, .. } | BaseChart::FlatPatch { nx, ny, .. } => {
                *nx = n0;
                *ny = n1;
            }
            BaseChart::Radial1d { nr, .. } => *nr = n0,
            BaseChart::Warped2d { nr, ntheta, .. } => {
                *nr = n0;
                *ntheta = n1;
            }
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn closed_form_profiles() {
        let v = WarpedProfile::euclidean().eval(2.0).unwrap();
        assert_eq!((v.h, v.dh, v.ddh), (2.0, 1.0, 0.0));

        let v = WarpedProfile::spherical().eval(PI / 2.0).unwrap();
        assert_relative_eq!(v.h, 1.0, epsilon = 1e-15);
        assert!(v.dh.abs() < 1e-15);
        assert_relative_eq!(v.ddh, -1.0, epsilon = 1e-15);

        let v = WarpedProfile::hyperbolic().eval(1.0).unwrap();
        assert!((v.h - 1.17520).abs() < 1e-5);
        assert!((v.dh - 1.54308).abs() < 1e-5);
        assert!((v.ddh - 1.17520).abs() < 1e-5);
    }

    #[test]
    fn out_of_domain_radius_is_rejected() {
        assert!(matches!(WarpedProfile::euclidean().eval(0.0), Err(Error::Domain(_))));
        assert!(matches!(WarpedProfile::spherical().eval(PI), Err(Error::Domain(_))));
        assert!(WarpedProfile::hyperbolic().eval(-1.0).is_err());
        let limited = WarpedProfile::new(ProfileKind::Euclidean, Some(3.0)).unwrap();
        assert!(limited.eval(3.5).is_err());
    }

    fn sampled(f: impl Fn(f64) -> [f64; 3], r_end: f64, count: usize) -> Vec<[f64; 4]> {
        (0..count)
            .map(|k| {
                let r = r_end * k as f64 / (count - 1) as f64;
                let [h, dh, ddh] = f(r);
                [r, h, dh, ddh]
            })
            .collect()
    }

    #[test]
    fn custom_profile_interpolates_sinh() {
        let samples = sampled(|r| [r.sinh(), r.cosh(), r.sinh()], 2.0, 81);
        let p = WarpedProfile::custom(samples).unwrap();
        for &r in &[0.013, 0.5, 1.234, 1.99] {
            let v = p.eval(r).unwrap();
            assert!((v.h - r.sinh()).abs() < 1e-8);
            assert!((v.dh - r.cosh()).abs() < 1e-8);
            assert!((v.ddh - r.sinh()).abs() < 1e-4);
        }
        assert!(p.eval(2.5).is_err());
    }

    #[test]
    fn custom_profile_pole_condition_checked() {
        let bad = sampled(|r| [2.0 * r, 2.0, 0.0], 1.0, 11);
        assert!(WarpedProfile::custom(bad).is_err());
        let unsorted = vec![[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 1.0, 0.0]];
        assert!(WarpedProfile::custom(unsorted).is_err());
    }

    #[test]
    fn profile_json_round_trip() {
        let p: WarpedProfile = serde_json::from_str(r#"{"kind": "hyperbolic"}"#).unwrap();
        assert_eq!(p, WarpedProfile::hyperbolic());
        let bad = serde_json::from_str::<WarpedProfile>(r#"{"kind": "spherical", "r_max": 4.0}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn chart_json_uses_documented_field_names() {
        let text = r#"{"variant": "warped_2d", "profile": {"kind": "hyperbolic"}, "n": 2,
                       "r_min": 0.1, "r_max": 2.0, "nr": 20, "ntheta": 16}"#;
        let chart: BaseChart = serde_json::from_str(text).unwrap();
        assert_eq!(chart, BaseChart::warped(WarpedProfile::hyperbolic(), 2, (0.1, 2.0), 20, 16));
        let torus: BaseChart =
            serde_json::from_str(r#"{"variant": "flat_torus", "lx": 1, "ly": 1, "nx": 8, "ny": 8}"#)
                .unwrap();
        assert_eq!(torus.base_dim(), 2);
    }

    #[test]
    fn flat_christoffels_vanish() {
        let chart = BaseChart::flat_torus(1.0, 1.0, 8, 8);
        assert_eq!(chart.christoffels(5).unwrap(), Christoffel::default());
        assert_eq!(chart.ricci(5).unwrap(), [0.0, 0.0]);
    }

    /// Christoffel symbols from centered differences of σ = diag(1, h²).
    fn christoffel_fd(h: impl Fn(f64) -> f64, r: f64) -> [[[f64; 2]; 2]; 2] {
        let eps = 1e-5;
        let s11 = |r: f64| h(r) * h(r);
        let ds11 = (s11(r + eps) - s11(r - eps)) / (2.0 * eps);
        let sigma_inv = [1.0, 1.0 / s11(r)];
        // ∂_i σ_jk: only ∂_r σ_θθ is non-zero.
        let d = |i: usize, j: usize, k: usize| if i == 0 && j == 1 && k == 1 { ds11 } else { 0.0 };
        let mut g = [[[0.0; 2]; 2]; 2];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    g[k][i][j] = 0.5 * sigma_inv[k] * (d(i, j, k) + d(j, i, k) - d(k, i, j));
                }
            }
        }
        g
    }

    #[test]
    fn warped_christoffels_match_finite_difference_oracle() {
        let c = Christoffel::warped(&WarpedProfile::euclidean(), 2.0).unwrap();
        assert!((c.gamma[0][1][1] + 2.0).abs() < 1e-15);
        assert!((c.gamma[1][0][1] - 0.5).abs() < 1e-15);
        let fd = christoffel_fd(|r| r, 2.0);
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((c.gamma[k][i][j] - fd[k][i][j]).abs() < 1e-8);
                }
            }
        }
        let c = Christoffel::warped(&WarpedProfile::spherical(), PI / 2.0).unwrap();
        assert!(c.gamma[0][1][1].abs() < 1e-15);
        assert!(matches!(
            Christoffel::warped(&WarpedProfile::euclidean(), 0.0),
            Err(Error::SingularPoint { .. })
        ));
    }

    #[test]
    fn warped_chart_rejects_the_pole() {
        let chart = BaseChart::warped(WarpedProfile::euclidean(), 2, (0.0, 1.0), 10, 8);
        assert!(matches!(chart.validate(), Err(Error::SingularPoint { .. })));
    }

    #[test]
    fn spherical_ricci_is_the_metric_at_sample_radii() {
        let p = WarpedProfile::spherical();
        for k in 1..=10 {
            let r = 0.28 * k as f64;
            let [rr, tt] = ricci_warped_closed_form(&p, 2, r).unwrap();
            let h = r.sin();
            assert_relative_eq!(rr, 1.0, max_relative = 1e-12);
            assert_relative_eq!(tt, h * h, max_relative = 1e-12);
        }
        let [rr, tt] = ricci_warped_closed_form(&WarpedProfile::euclidean(), 2, 1.3).unwrap();
        assert_eq!((rr, tt), (0.0, 0.0));
    }

    #[test]
    fn coordinate_ricci_matches_constant_curvature() {
        for (p, curv) in [
            (WarpedProfile::euclidean(), 0.0),
            (WarpedProfile::spherical(), 1.0),
            (WarpedProfile::hyperbolic(), -1.0),
        ] {
            for k in 1..=10 {
                let r = 0.29 * k as f64;
                let ric = ricci_coordinate(&p, 2, r).unwrap();
                let h = p.eval(r).unwrap().h;
                let expect = [curv, curv * h * h];
                for a in 0..2 {
                    let scale = expect[a].abs().max(1.0);
                    assert!((ric[a][a] - expect[a]).abs() <= 1e-10 * scale, "{} r={r}", p.name());
                }
                assert!(ric[0][1].abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn coordinate_and_closed_form_ricci_agree(r in 0.05f64..3.0, n in 2usize..6, which in 0usize..3) {
            let p = [WarpedProfile::euclidean(), WarpedProfile::spherical(), WarpedProfile::hyperbolic()][which].clone();
            let ric = ricci_coordinate(&p, n, r).unwrap();
            let closed = ricci_warped_closed_form(&p, n, r).unwrap();
            prop_assert!((ric[0][0] - closed[0]).abs() <= 1e-10 * closed[0].abs().max(1.0));
            prop_assert!((ric[1][1] - closed[1]).abs() <= 1e-10 * closed[1].abs().max(1.0));
        }

        #[test]
        fn christoffels_symmetric_in_lower_indices(r in 0.05f64..3.0, which in 0usize..3) {
            let p = [WarpedProfile::euclidean(), WarpedProfile::spherical(), WarpedProfile::hyperbolic()][which].clone();
            let c = Christoffel::warped(&p, r).unwrap();
            for k in 0..2 {
                prop_assert_eq!(c.gamma[k][0][1], c.gamma[k][1][0]);
            }
        }

        #[test]
        fn profile_derivative_is_consistent(r in 0.2f64..2.5, which in 0usize..3) {
            let p = [WarpedProfile::euclidean(), WarpedProfile::spherical(), WarpedProfile::hyperbolic()][which].clone();
            let mut errs = Vec::new();
            for eps in [1e-2, 5e-3] {
                let fd = (p.eval(r + eps).unwrap().h - p.eval(r - eps).unwrap().h) / (2.0 * eps);
                errs.push((p.eval(r).unwrap().dh - fd).abs());
            }
            // O(eps²): halving eps cuts the error by about four.
            prop_assert!(errs[1] <= errs[0] / 3.5 + 1e-13);
        }
    }
}
