//! Radial translating solitons over warped-product bases.
//!
//! A radial graph `u(r)` translates with speed `c` when
//!
//! ```text
//! u_rr / (1 - u_r²) + (n - 1) (h'/h) u_r = c,   u_r(0) = 0.
//! ```
//!
//! The ODE is integrated in the rapidity `p = artanh(u_r)`, where it reads
//! `p' = c - (n - 1)(h'/h) tanh p`, `u' = tanh p`. The slope `u_r` then
//! approaches 1 without the integrator ever seeing the light cone.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SpacelikeGraph;
use crate::manifold::{BaseChart, WarpedProfile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedReason {
    ReachedRMax,
    ApproachedLightlike,
}

/// Sampled radial translator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolitonProfile {
    pub n: usize,
    pub c: f64,
    pub profile: WarpedProfile,
    pub tol: f64,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub u_r: Vec<f64>,
    /// `artanh(u_r)`; finite even where `u_r` rounds to 1.
    pub rapidity: Vec<f64>,
    /// ODE residual from the derivative of the dense output.
    pub residual: Vec<f64>,
    pub terminated_reason: TerminatedReason,
}

/// `(u(ε), u_r(ε))` from the leading-order series `u_r ≈ (c/n) r`.
pub fn series_start(n: usize, c: f64, eps: f64) -> (f64, f64) {
    let n = n as f64;
    (c * eps * eps / (2.0 * n), c * eps / n)
}

/// ODE residual of the series data at `ε`, using `u_rr ≈ c/n`.
pub fn series_residual(profile: &WarpedProfile, n: usize, c: f64, eps: f64) -> Result<f64> {
    let (_, ur) = series_start(n, c, eps);
    let v = profile.eval(eps)?;
    let urr = c / n as f64;
    Ok(urr / (1.0 - ur * ur) + (n as f64 - 1.0) * v.dh / v.h * ur - c)
}

/// `ln(1 - tanh p)`, accurate for large `p`.
pub fn log_lightlike_gap(p: f64) -> f64 {
    if p <= 0.0 {
        (1.0 - p.tanh()).ln()
    } else {
        std::f64::consts::LN_2 - 2.0 * p - (-2.0 * p).exp().ln_1p()
    }
}

impl SolitonProfile {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Cubic Hermite interpolation of `u` from `(u, u_r)` samples.
    pub fn u_at(&self, r: f64) -> Result<f64> {
        let first = self.r[0];
        let last = self.r[self.r.len() - 1];
        let slack = 1e-12 * last.abs().max(1.0);
        if !(r >= first - slack && r <= last + slack) {
            return Err(Error::Domain(format!(
                "r = {r} outside the soliton range [{first}, {last}]"
            )));
        }
        let k = self.r.partition_point(|&x| x <= r).clamp(1, self.r.len() - 1) - 1;
        for j in [k, k + 1] {
            if (self.r[j] - r).abs() <= slack {
                return Ok(self.u[j]);
            }
        }
        let dx = self.r[k + 1] - self.r[k];
        let t = (r - self.r[k]) / dx;
        let t2 = t * t;
        let t3 = t2 * t;
        Ok((2.0 * t3 - 3.0 * t2 + 1.0) * self.u[k]
            + (t3 - 2.0 * t2 + t) * dx * self.u_r[k]
            + (-2.0 * t3 + 3.0 * t2) * self.u[k + 1]
            + (t3 - t2) * dx * self.u_r[k + 1])
    }

    /// Samples the profile onto a radial or warped chart with the same base.
    pub fn lift_to_graph(&self, chart: BaseChart) -> Result<SpacelikeGraph> {
        match chart.profile() {
            Some(p) if *p == self.profile && chart.base_dim() == self.n => {}
            Some(_) => {
                return Err(Error::Domain(
                    "chart profile or dimension does not match the soliton".into(),
                ))
            }
            None => return Err(Error::Domain("soliton lift needs a radial or warped chart".into())),
        }
        let grid = chart.grid()?;
        let u = (0..grid.len())
            .map(|k| self.u_at(grid.coords(k)[0]))
            .collect::<Result<Vec<_>>>()?;
        SpacelikeGraph::new(chart, self.c, u)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "r,u,u_r,residual_eq42")?;
        for k in 0..self.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.r[k], self.u[k], self.u_r[k], self.residual[k]
            )?;
        }
        Ok(())
    }
}

/// Settings for [`SolitonSolver::integrate`].
#[derive(Clone, Debug)]
pub struct SolitonSolver {
    pub profile: WarpedProfile,
    pub n: usize,
    pub c: f64,
    pub r_max: f64,
    pub dr_out: f64,
    pub tol: f64,
    /// Stop once `1 - u_r` drops below this value.
    pub lightlike_margin: Option<f64>,
    pub max_steps: usize,
}

impl SolitonSolver {
    pub fn new(profile: WarpedProfile, n: usize, c: f64, r_max: f64, dr_out: f64, tol: f64) -> Self {
        SolitonSolver { profile, n, c, r_max, dr_out, tol, lightlike_margin: None, max_steps: 10_000_000 }
    }

    pub fn lightlike_margin(mut self, margin: f64) -> Self {
        self.lightlike_margin = Some(margin);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if !self.c.is_finite() {
            return Err(Error::Config("c must be finite".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(Error::Config(format!("r_max must be positive, got {}", self.r_max)));
        }
        if !(self.dr_out > 0.0) {
            return Err(Error::Config(format!("dr must be positive, got {}", self.dr_out)));
        }
        let edge = self.profile.r_max();
        let open_end = !matches!(self.profile.kind(), crate::manifold::ProfileKind::Custom { .. });
        if self.r_max > edge || (open_end && self.r_max >= edge) {
            return Err(Error::Domain(format!(
                "r_max = {} outside the {} profile domain (0, {edge})",
                self.r_max,
                self.profile.name()
            )));
        }
        Ok(())
    }

    fn rhs(&self, r: f64, y: [f64; 2]) -> Result<[f64; 2]> {
        let t = y[1].tanh();
        let drift = if self.n > 1 {
            let v = self.profile.eval(r)?;
            (self.n as f64 - 1.0) * v.dh / v.h * t
        } else {
            0.0
        };
        Ok([t, self.c - drift])
    }

    fn output_grid(&self, eps: f64) -> Vec<f64> {
        let mut out = vec![eps];
        let mut k = 1usize;
        loop {
            let r = k as f64 * self.dr_out;
            if r >= self.r_max * (1.0 - 1e-12) {
                break;
            }
            if r > eps {
                out.push(r);
            }
            k += 1;
        }
        out.push(self.r_max);
        out
    }

    pub fn integrate(&self) -> Result<SolitonProfile> {
        self.validate()?;
        let eps = 1e-6 * self.r_max;
        let (u0, ur0) = series_start(self.n, self.c, eps);
        if ur0.abs() >= 1.0 {
            return Err(Error::Domain("series start is not space-like; reduce r_max".into()));
        }
        let outputs = self.output_grid(eps);
        let mut sol = SolitonProfile {
            n: self.n,
            c: self.c,
            profile: self.profile.clone(),
            tol: self.tol,
            r: Vec::with_capacity(outputs.len()),
            u: Vec::with_capacity(outputs.len()),
            u_r: Vec::with_capacity(outputs.len()),
            rapidity: Vec::with_capacity(outputs.len()),
            residual: Vec::with_capacity(outputs.len()),
            terminated_reason: TerminatedReason::ReachedRMax,
        };
        let mut y = [u0, ur0.atanh()];
        let mut r = eps;
        let mut k1 = self.rhs(r, y)?;
        self.push_sample(&mut sol, r, y, k1[1]);
        let mut next_out = 1;

        let span = self.r_max - eps;
        let mut h = (span * 1e-3).min(0.1 * self.tol.powf(0.2));
        let mut steps = 0usize;
        while next_out < outputs.len() {
            steps += 1;
            if steps > self.max_steps {
                return Err(Error::Integration(format!("exceeded {} steps at r = {r}", self.max_steps)));
            }
            let last = r + h >= self.r_max;
            if last {
                h = self.r_max - r;
            }
            let step = match dopri5_step(|t, v| self.rhs(t, v), r, y, k1, h) {
                Ok(s) => s,
                Err(Error::Domain(_)) if !last => {
                    h *= 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let err = error_norm(&step, y, self.tol);
            if !err.is_finite() || err > 1.0 {
                if !y[1].is_finite() || !step.y[1].is_finite() {
                    sol.terminated_reason = TerminatedReason::ApproachedLightlike;
                    break;
                }
                let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).max(0.2) } else { 0.2 };
                h *= fac;
                if h < 16.0 * f64::EPSILON * r.abs().max(1.0) {
                    if y[1].abs() > 18.0 {
                        sol.terminated_reason = TerminatedReason::ApproachedLightlike;
                        break;
                    }
                    return Err(Error::Integration(format!("step size underflow at r = {r}")));
                }
                continue;
            }
            let r_new = if last { self.r_max } else { r + h };
            // Defect control: the dense interpolant must satisfy the ODE to
            // within tol at the step midpoint and at every output sample.
            let mut probes = vec![0.5];
            probes.extend(
                outputs[next_out..]
                    .iter()
                    .take_while(|&&ro| ro <= r_new)
                    .map(|&ro| ((ro - r) / h).clamp(0.0, 1.0)),
            );
            let mut defect = 0.0f64;
            for theta in probes {
                let (yo, dyo) = step.dense(theta, h);
                let fo = self.rhs(r + theta * h, yo)?;
                for i in 0..2 {
                    defect = defect.max((dyo[i] - fo[i]).abs() / (self.tol * fo[i].abs().max(1.0)));
                }
            }
            if defect > 1.0 && h > 1e3 * f64::EPSILON * r.abs().max(1.0) {
                h *= (0.9 * defect.powf(-0.25)).clamp(0.2, 0.9);
                continue;
            }
            while next_out < outputs.len() && outputs[next_out] <= r_new {
                let ro = outputs[next_out];
                let theta = ((ro - r) / h).clamp(0.0, 1.0);
                let (yo, dyo) = step.dense(theta, h);
                self.push_sample(&mut sol, ro, yo, dyo[1]);
                next_out += 1;
            }
            r = r_new;
            y = step.y;
            k1 = step.k7;
            if let Some(margin) = self.lightlike_margin {
                if log_lightlike_gap(y[1].abs()) < margin.ln() {
                    sol.terminated_reason = TerminatedReason::ApproachedLightlike;
                    break;
                }
            }
            let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
            h *= fac;
        }
        Ok(sol)
    }

    fn push_sample(&self, sol: &mut SolitonProfile, r: f64, y: [f64; 2], dp: f64) {
        let t = y[1].tanh();
        let drift = if self.n > 1 {
            self.profile
                .eval(r)
                .map(|v| (self.n as f64 - 1.0) * v.dh / v.h * t)
                .unwrap_or(f64::NAN)
        } else {
            0.0
        };
        sol.r.push(r);
        sol.u.push(y[0]);
        sol.u_r.push(t);
        sol.rapidity.push(y[1]);
        // u_rr / (1 - u_r²) = p'.
        sol.residual.push(dp + drift - self.c);
    }
}

/// Integrates the radial translator ODE from the series start to `r_max`,
/// sampling every `dr_out`.
pub fn integrate(
    profile: &WarpedProfile,
    n: usize,
    c: f64,
    r_max: f64,
    dr_out: f64,
    tol: f64,
) -> Result<SolitonProfile> {
    SolitonSolver::new(profile.clone(), n, c, r_max, dr_out, tol).integrate()
}

struct Step {
    y: [f64; 2],
    k7: [f64; 2],
    err: [f64; 2],
    rcont: [[f64; 2]; 5],
}

impl Step {
    /// Dense output and its derivative at `r + θh`.
    fn dense(&self, theta: f64, h: f64) -> ([f64; 2], [f64; 2]) {
        let [r1, r2, r3, r4, r5] = self.rcont;
        let mut y = [0.0; 2];
        let mut dy = [0.0; 2];
        for i in 0..2 {
            let p = r3[i] + theta * r4[i] + theta * (1.0 - theta) * r5[i];
            let dp = r4[i] + (1.0 - 2.0 * theta) * r5[i];
            let q = r2[i] + (1.0 - theta) * p;
            let dq = -p + (1.0 - theta) * dp;
            y[i] = r1[i] + theta * q;
            dy[i] = (q + theta * dq) / h;
        }
        (y, dy)
    }
}

fn error_norm(step: &Step, y: [f64; 2], tol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..2 {
        let sc = tol + tol * y[i].abs().max(step.y[i].abs());
        acc += (step.err[i] / sc).powi(2);
    }
    (acc / 2.0).sqrt()
}

fn axpy(y: [f64; 2], h: f64, terms: &[(f64, [f64; 2])]) -> [f64; 2] {
    let mut out = y;
    for (a, k) in terms {
        out[0] += h * a * k[0];
        out[1] += h * a * k[1];
    }
    out
}

/// One Dormand–Prince 5(4) step with FSAL stage `k1`.
fn dopri5_step(
    f: impl Fn(f64, [f64; 2]) -> Result<[f64; 2]>,
    t: f64,
    y: [f64; 2],
    k1: [f64; 2],
    h: f64,
) -> Result<Step> {
    let k2 = f(t + h / 5.0, axpy(y, h, &[(1.0 / 5.0, k1)]))?;
    let k3 = f(t + 3.0 * h / 10.0, axpy(y, h, &[(3.0 / 40.0, k1), (9.0 / 40.0, k2)]))?;
    let k4 = f(
        t + 4.0 * h / 5.0,
        axpy(y, h, &[(44.0 / 45.0, k1), (-56.0 / 15.0, k2), (32.0 / 9.0, k3)]),
    )?;
    let k5 = f(
        t + 8.0 * h / 9.0,
        axpy(
            y,
            h,
            &[
                (19372.0 / 6561.0, k1),
                (-25360.0 / 2187.0, k2),
                (64448.0 / 6561.0, k3),
                (-212.0 / 729.0, k4),
            ],
        ),
    )?;
    let k6 = f(
        t + h,
        axpy(
            y,
            h,
            &[
                (9017.0 / 3168.0, k1),
                (-355.0 / 33.0, k2),
                (46732.0 / 5247.0, k3),
                (49.0 / 176.0, k4),
                (-5103.0 / 18656.0, k5),
            ],
        ),
    )?;
    let y_new = axpy(
        y,
        h,
        &[
            (35.0 / 384.0, k1),
            (500.0 / 1113.0, k3),
            (125.0 / 192.0, k4),
            (-2187.0 / 6784.0, k5),
            (11.0 / 84.0, k6),
        ],
    );
    let k7 = f(t + h, y_new)?;
    let err = axpy(
        [0.0; 2],
        h,
        &[
            (71.0 / 57600.0, k1),
            (-71.0 / 16695.0, k3),
            (71.0 / 1920.0, k4),
            (-17253.0 / 339200.0, k5),
            (22.0 / 525.0, k6),
            (-1.0 / 40.0, k7),
        ],
    );
    let dense5 = axpy(
        [0.0; 2],
        h,
        &[
            (-12715105075.0 / 11282082432.0, k1),
            (87487479700.0 / 32700410799.0, k3),
            (-10690763975.0 / 1880347072.0, k4),
            (701980252875.0 / 199316789632.0, k5),
            (-1453857185.0 / 822651844.0, k6),
            (69997945.0 / 29380423.0, k7),
        ],
    );
    let mut rcont = [[0.0; 2]; 5];
    for i in 0..2 {
        let ydiff = y_new[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        rcont[0][i] = y[i];
        rcont[1][i] = ydiff;
        rcont[2][i] = bspl;
        rcont[3][i] = ydiff - h * k7[i] - bspl;
        rcont[4][i] = dense5[i];
    }
    Ok(Step { y: y_new, k7, err, rcont })
}
