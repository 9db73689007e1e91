//! Tensor-product grids and second-order finite-difference stencils.
//!
//! Fields are stored row-major: node `(i, j)` lives at `i * n1 + j`, where
//! axis 0 has `n0` nodes and axis 1 has `n1` nodes (`n1 = 1` on 1D grids).
//! Periodic axes wrap; open axes fall back to one-sided second-order
//! stencils on their two end nodes.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisKind {
    Periodic,
    Open,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub kind: AxisKind,
    pub len: usize,
    pub start: f64,
    pub step: f64,
}

impl Axis {
    /// `len` nodes covering `[start, start + period)`.
    pub fn periodic(len: usize, start: f64, period: f64) -> Self {
        Axis {
            kind: AxisKind::Periodic,
            len,
            start,
            step: period / len as f64,
        }
    }

    /// `len` nodes from `start` to `end` inclusive.
    pub fn open(len: usize, start: f64, end: f64) -> Self {
        Axis {
            kind: AxisKind::Open,
            len,
            start,
            step: (end - start) / (len as f64 - 1.0),
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    /// 1D quadrature weights: trapezoid on open axes, uniform on periodic ones.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![self.step; self.len];
        if self.kind == AxisKind::Open {
            w[0] *= 0.5;
            w[self.len - 1] *= 0.5;
        }
        w
    }

    fn is_end(&self, i: usize) -> bool {
        self.kind == AxisKind::Open && (i == 0 || i + 1 == self.len)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Config(format!(
                "grids have one or two axes, got {}",
                axes.len()
            )));
        }
        for (a, axis) in axes.iter().enumerate() {
            let min = if axis.kind == AxisKind::Open { 4 } else { 3 };
            if axis.len < min {
                return Err(Error::Config(format!(
                    "axis {a} needs at least {min} nodes, got {}",
                    axis.len
                )));
            }
            if !(axis.step.is_finite() && axis.step > 0.0) {
                return Err(Error::Config(format!("axis {a} has invalid spacing {}", axis.step)));
            }
        }
        Ok(Grid { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self) -> (usize, usize) {
        let n1 = self.axes.get(1).map_or(1, |a| a.len);
        (self.axes[0].len, n1)
    }

    pub fn len(&self) -> usize {
        let (n0, n1) = self.shape();
        n0 * n1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.shape().1 + j
    }

    pub fn unravel(&self, idx: usize) -> (usize, usize) {
        let n1 = self.shape().1;
        (idx / n1, idx % n1)
    }

    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.unravel(idx);
        let x0 = self.axes[0].coord(i);
        let x1 = self.axes.get(1).map_or(0.0, |a| a.coord(j));
        [x0, x1]
    }

    /// Smallest grid spacing over all axes (coordinate units).
    pub fn min_step(&self) -> f64 {
        self.axes.iter().map(|a| a.step).fold(f64::INFINITY, f64::min)
    }

    pub fn max_step(&self) -> f64 {
        self.axes.iter().map(|a| a.step).fold(0.0, f64::max)
    }

    /// True unless the node sits on the end of an open axis.
    pub fn is_interior(&self, idx: usize) -> bool {
        let (i, j) = self.unravel(idx);
        let ends0 = self.axes[0].is_end(i);
        let ends1 = self.axes.get(1).is_some_and(|a| a.is_end(j));
        !(ends0 || ends1)
    }

    /// Distance, in cells, from the node to the nearest open boundary.
    pub fn boundary_distance(&self, idx: usize) -> usize {
        let (i, j) = self.unravel(idx);
        let mut d = usize::MAX;
        for (a, k) in self.axes.iter().zip([i, j]) {
            if a.kind == AxisKind::Open {
                d = d.min(k).min(a.len - 1 - k);
            }
        }
        d
    }

    /// Product quadrature weights (coordinate cell volume per node).
    pub fn cell_weights(&self) -> Vec<f64> {
        let w0 = self.axes[0].weights();
        match self.axes.get(1) {
            None => w0,
            Some(a1) => {
                let w1 = a1.weights();
                w0.iter()
                    .flat_map(|&a| w1.iter().map(move |&b| a * b))
                    .collect()
            }
        }
    }

    /// Iterates the 1D lines along `axis`: yields (first index, stride).
    fn lines(&self, axis: usize) -> Vec<(usize, usize)> {
        let (n0, n1) = self.shape();
        if axis == 0 {
            (0..n1).map(|j| (j, n1)).collect()
        } else {
            (0..n0).map(|i| (i * n1, 1)).collect()
        }
    }

    /// Second-order first derivative along `axis`.
    pub fn partial(&self, f: &[f64], axis: usize) -> Vec<f64> {
        self.partial_stride(f, axis, 1)
    }

    /// Second-order pure second derivative along `axis`.
    pub fn second_partial(&self, f: &[f64], axis: usize) -> Vec<f64> {
        self.second_partial_stride(f, axis, 1)
    }

    /// Centered first difference over `s` cells. Nodes closer than `s` cells
    /// to an open end use the unit-stride stencils.
    pub fn partial_stride(&self, f: &[f64], axis: usize, s: usize) -> Vec<f64> {
        let ax = &self.axes[axis];
        let n = ax.len;
        let h = ax.step;
        let hs = h * s as f64;
        let mut out = vec![0.0; f.len()];
        for (base, stride) in self.lines(axis) {
            let at = |k: usize| f[base + k * stride];
            for k in 0..n {
                let v = match ax.kind {
                    AxisKind::Periodic => (at((k + s) % n) - at((k + n - s % n) % n)) / (2.0 * hs),
                    AxisKind::Open if k >= s && k + s < n => (at(k + s) - at(k - s)) / (2.0 * hs),
                    AxisKind::Open if k == 0 => (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h),
                    AxisKind::Open if k == n - 1 => {
                        (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
                    }
                    AxisKind::Open => (at(k + 1) - at(k - 1)) / (2.0 * h),
                };
                out[base + k * stride] = v;
            }
        }
        out
    }

    /// Centered second difference over `s` cells, with the same end rules as
    /// [`Grid::partial_stride`].
    pub fn second_partial_stride(&self, f: &[f64], axis: usize, s: usize) -> Vec<f64> {
        let ax = &self.axes[axis];
        let n = ax.len;
        let h2 = ax.step * ax.step;
        let hs2 = h2 * (s * s) as f64;
        let mut out = vec![0.0; f.len()];
        for (base, stride) in self.lines(axis) {
            let at = |k: usize| f[base + k * stride];
            for k in 0..n {
                let v = match ax.kind {
                    AxisKind::Periodic => {
                        (at((k + s) % n) - 2.0 * at(k) + at((k + n - s % n) % n)) / hs2
                    }
                    AxisKind::Open if k >= s && k + s < n => {
                        (at(k + s) - 2.0 * at(k) + at(k - s)) / hs2
                    }
                    AxisKind::Open if k == 0 => {
                        (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / h2
                    }
                    AxisKind::Open if k == n - 1 => {
                        (2.0 * at(n - 1) - 5.0 * at(n - 2) + 4.0 * at(n - 3) - at(n - 4)) / h2
                    }
                    AxisKind::Open => (at(k + 1) - 2.0 * at(k) + at(k - 1)) / h2,
                };
                out[base + k * stride] = v;
            }
        }
        out
    }

    /// Gradient in coordinates; the second component is zero on 1D grids.
    pub fn gradient(&self, f: &[f64]) -> Vec<[f64; 2]> {
        self.gradient_stride(f, 1)
    }

    pub fn gradient_stride(&self, f: &[f64], s: usize) -> Vec<[f64; 2]> {
        let d0 = self.partial_stride(f, 0, s);
        if self.dim() == 1 {
            return d0.into_iter().map(|a| [a, 0.0]).collect();
        }
        let d1 = self.partial_stride(f, 1, s);
        d0.into_iter().zip(d1).map(|(a, b)| [a, b]).collect()
    }

    /// Coordinate Hessian. The mixed entry is the four-point cross stencil in
    /// the interior (a composition of first differences near open ends).
    pub fn hessian(&self, f: &[f64]) -> Vec<[[f64; 2]; 2]> {
        self.hessian_stride(f, 1)
    }

    pub fn hessian_stride(&self, f: &[f64], s: usize) -> Vec<[[f64; 2]; 2]> {
        let d00 = self.second_partial_stride(f, 0, s);
        if self.dim() == 1 {
            return d00.into_iter().map(|a| [[a, 0.0], [0.0, 0.0]]).collect();
        }
        let d11 = self.second_partial_stride(f, 1, s);
        let d01 = self.partial_stride(&self.partial_stride(f, 1, s), 0, s);
        (0..f.len())
            .map(|k| [[d00[k], d01[k]], [d01[k], d11[k]]])
            .collect()
    }

    /// Index of the neighbour `offset` cells away along `axis`, wrapping on
    /// periodic axes; `None` past the end of an open axis.
    pub fn neighbor(&self, idx: usize, axis: usize, offset: isize) -> Option<usize> {
        let (i, j) = self.unravel(idx);
        let k = if axis == 0 { i } else { j };
        let ax = &self.axes[axis];
        let n = ax.len as isize;
        let m = k as isize + offset;
        let m = match ax.kind {
            AxisKind::Periodic => m.rem_euclid(n),
            AxisKind::Open if (0..n).contains(&m) => m,
            AxisKind::Open => return None,
        } as usize;
        Some(if axis == 0 { self.index(m, j) } else { self.index(i, m) })
    }

    /// Sub-grid keeping every `factor`-th node along every axis.
    pub fn coarsen(&self, factor: usize) -> Result<Grid> {
        let axes = self
            .axes
            .iter()
            .map(|a| {
                let ok = match a.kind {
                    AxisKind::Periodic => a.len % factor == 0,
                    AxisKind::Open => (a.len - 1) % factor == 0,
                };
                if !ok {
                    return Err(Error::Config(format!(
                        "axis with {} nodes cannot be coarsened by {factor}",
                        a.len
                    )));
                }
                let len = match a.kind {
                    AxisKind::Periodic => a.len / factor,
                    AxisKind::Open => (a.len - 1) / factor + 1,
                };
                Ok(Axis {
                    kind: a.kind,
                    len,
                    start: a.start,
                    step: a.step * factor as f64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Grid::new(axes)
    }
}

/// Pairwise summation; deterministic and insensitive to accumulation order
/// effects beyond O(log n) roundoff.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if v.len() <= LEAF {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Observed convergence order between a coarse and a fine error measure.
pub fn observed_order(coarse: f64, fine: f64, ratio: f64) -> f64 {
    (coarse / fine).ln() / ratio.ln()
}
