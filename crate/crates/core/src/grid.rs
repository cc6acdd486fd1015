//! Tensor-product grids on intervals and rectangles, space-time fields, and the
//! discrete inner products and energies every estimate is phrased in.
//!
//! Nodes are numbered with the first axis running fastest: `idx = i + nx * j`.
//! All L2 quantities use the trapezoid rule. The weighted Dirichlet energy is
//! face-centered in 1D and cell-centered in 2D, and it is exactly the quadratic
//! form whose negative gradient is the diffusion stencil assembled in
//! [`crate::solver`], so discrete integration by parts holds to rounding.

use std::sync::Arc;

use crate::coefficients::Sym2;
use crate::error::{Error, Result};

/// Spatial point; the second component is ignored in 1D.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.high - self.low) / (self.count - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.high
        } else {
            self.low + i as f64 * self.spacing()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    boundary: Vec<bool>,
}

impl Grid {
    /// Builds a 1D or 2D grid. Every axis needs at least three nodes and a
    /// non-degenerate extent.
    pub fn build(extents: &[(f64, f64)], counts: &[usize]) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {}",
                extents.len()
            )));
        }
        if extents.len() != counts.len() {
            return Err(Error::InvalidGrid(format!(
                "{} extents but {} counts",
                extents.len(),
                counts.len()
            )));
        }
        let mut axes = Vec::with_capacity(extents.len());
        for (d, (&(low, high), &count)) in extents.iter().zip(counts).enumerate() {
            if count < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {d} has {count} nodes, need at least 3"
                )));
            }
            if !(low.is_finite() && high.is_finite() && low < high) {
                return Err(Error::InvalidGrid(format!(
                    "axis {d} extent ({low}, {high}) is degenerate"
                )));
            }
            axes.push(Axis { low, high, count });
        }
        let nx = axes[0].count;
        let ny = axes.get(1).map_or(1, |a| a.count);
        let mut boundary = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let edge_x = i == 0 || i + 1 == nx;
                let edge_y = ny > 1 && (j == 0 || j + 1 == ny);
                boundary[i + nx * j] = edge_x || edge_y;
            }
        }
        Ok(Self { axes, boundary })
    }

    pub fn interval(low: f64, high: f64, count: usize) -> Result<Self> {
        Self::build(&[(low, high)], &[count])
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        Self::build(&[x, y], &[nx, ny])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.axes[axis].spacing()
    }

    /// Nodes along the first axis.
    pub fn nx(&self) -> usize {
        self.axes[0].count
    }

    /// Nodes along the second axis (1 for a 1D grid).
    pub fn ny(&self) -> usize {
        self.axes.get(1).map_or(1, |a| a.count)
    }

    pub fn node_count(&self) -> usize {
        self.boundary.len()
    }

    pub fn interior_count(&self) -> usize {
        self.axes.iter().map(|a| a.count - 2).product()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx() * j
    }

    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx(), idx / self.nx())
    }

    pub fn point(&self, idx: usize) -> Point {
        let (i, j) = self.ij(idx);
        let x = self.axes[0].coord(i);
        let y = self.axes.get(1).map_or(0.0, |a| a.coord(j));
        [x, y]
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.boundary[idx]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(move |&k| !self.boundary[k])
    }

    /// Product of the spacings: the area (or length) element of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    /// Samples `f` at every node, with boundary values forced to zero.
    pub fn sample(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        (0..self.node_count())
            .map(|k| {
                if self.boundary[k] {
                    0.0
                } else {
                    f(self.point(k))
                }
            })
            .collect()
    }

    fn check_len(&self, u: &[f64], what: &str) -> Result<()> {
        if u.len() != self.node_count() {
            return Err(Error::GridMismatch(format!(
                "{what} has {} values, grid has {} nodes",
                u.len(),
                self.node_count()
            )));
        }
        Ok(())
    }

    fn trapezoid_weight(&self, idx: usize) -> f64 {
        let (i, j) = self.ij(idx);
        let mut w = 1.0;
        for (d, a) in self.axes.iter().enumerate() {
            let k = if d == 0 { i } else { j };
            let h = a.spacing();
            w *= if k == 0 || k + 1 == a.count {
                0.5 * h
            } else {
                h
            };
        }
        w
    }

    /// Trapezoid approximation of the L2(D) inner product.
    pub fn inner_product(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_len(u, "left operand")?;
        self.check_len(v, "right operand")?;
        Ok((0..self.node_count())
            .map(|k| self.trapezoid_weight(k) * u[k] * v[k])
            .sum())
    }

    pub fn norm_sq(&self, u: &[f64]) -> Result<f64> {
        self.inner_product(u, u)
    }

    /// Conservative discretization of the integral of grad(u)' b grad(u).
    ///
    /// `b` is sampled at face midpoints (1D) or cell centers (2D); a sample
    /// that is not positive definite is reported as an ellipticity violation
    /// at time `t`.
    pub fn dirichlet_energy(&self, u: &[f64], t: f64, b: impl Fn(Point) -> Sym2) -> Result<f64> {
        self.check_len(u, "field")?;
        let check = |p: Point, m: Sym2| -> Result<Sym2> {
            let e = m.min_eigenvalue(self.dim());
            if !(e > 0.0) {
                return Err(Error::EllipticityViolation {
                    point: p,
                    time: t,
                    eigenvalue: e,
                });
            }
            Ok(m)
        };
        let hx = self.spacing(0);
        if self.dim() == 1 {
            let mut e = 0.0;
            for i in 0..self.nx() - 1 {
                let p = [self.axes[0].low + (i as f64 + 0.5) * hx, 0.0];
                let bf = check(p, b(p))?.a11;
                let d = (u[i + 1] - u[i]) / hx;
                e += bf * d * d * hx;
            }
            return Ok(e);
        }
        let hy = self.spacing(1);
        let (nx, ny) = (self.nx(), self.ny());
        let mut e = 0.0;
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let p = [
                    self.axes[0].low + (i as f64 + 0.5) * hx,
                    self.axes[1].low + (j as f64 + 0.5) * hy,
                ];
                let m = check(p, b(p))?;
                let u00 = u[i + nx * j];
                let u10 = u[i + 1 + nx * j];
                let u01 = u[i + nx * (j + 1)];
                let u11 = u[i + 1 + nx * (j + 1)];
                let (a1, a2) = (u10 - u00, u11 - u01);
                let (c1, c2) = (u01 - u00, u11 - u10);
                let gx = (a1 + a2) / (2.0 * hx);
                let gy = (c1 + c2) / (2.0 * hy);
                let local = m.a11 * (a1 * a1 + a2 * a2) / (2.0 * hx * hx)
                    + m.a22 * (c1 * c1 + c2 * c2) / (2.0 * hy * hy)
                    + 2.0 * m.a12 * gx * gy;
                e += local * hx * hy;
            }
        }
        Ok(e)
    }

    /// Unweighted squared gradient norm, the energy with b = identity.
    pub fn gradient_norm_sq(&self, u: &[f64]) -> Result<f64> {
        self.dirichlet_energy(u, 0.0, |_| Sym2::identity())
    }

    /// Squared W^1_2 norm.
    pub fn h1_norm_sq(&self, u: &[f64]) -> Result<f64> {
        Ok(self.norm_sq(u)? + self.gradient_norm_sq(u)?)
    }

    /// Squared W^2_2 norm, with second derivatives from second differences.
    pub fn h2_norm_sq(&self, u: &[f64]) -> Result<f64> {
        let mut second = 0.0;
        let hx = self.spacing(0);
        let (nx, ny) = (self.nx(), self.ny());
        let vol = self.cell_volume();
        for k in self.interior() {
            let uxx = (u[k + 1] - 2.0 * u[k] + u[k - 1]) / (hx * hx);
            second += uxx * uxx * vol;
            if self.dim() == 2 {
                let hy = self.spacing(1);
                let uyy = (u[k + nx] - 2.0 * u[k] + u[k - nx]) / (hy * hy);
                second += uyy * uyy * vol;
            }
        }
        if self.dim() == 2 {
            let hy = self.spacing(1);
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    let uxy = (u[i + 1 + nx * (j + 1)] - u[i + 1 + nx * j] - u[i + nx * (j + 1)]
                        + u[i + nx * j])
                        / (hx * hy);
                    second += 2.0 * uxy * uxy * vol;
                }
            }
        }
        Ok(self.h1_norm_sq(u)? + second)
    }
}

/// Uniform time levels `t_k = k T / steps`, `k = 0..=steps`.
pub fn uniform_times(horizon: f64, steps: usize) -> Result<Vec<f64>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidTimes(format!(
            "horizon {horizon} must be positive"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidTimes("need at least one time step".into()));
    }
    let dt = horizon / steps as f64;
    Ok((0..=steps)
        .map(|k| if k == steps { horizon } else { k as f64 * dt })
        .collect())
}

/// Trapezoid rule over the given levels.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Running trapezoid integrals, starting from 0 at the first level.
pub fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for (t, v) in times.windows(2).zip(values.windows(2)) {
        acc += 0.5 * (t[1] - t[0]) * (v[0] + v[1]);
        out.push(acc);
    }
    out
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::InvalidTimes("need at least two levels".into()));
    }
    if times[0] != 0.0 {
        return Err(Error::InvalidTimes(format!(
            "first level is {}, not 0",
            times[0]
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidTimes(
            "levels are not strictly increasing".into(),
        ));
    }
    Ok(())
}

/// A scalar function on grid nodes times time levels. Boundary values are
/// zero at every level.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    grid: Arc<Grid>,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn new(grid: Arc<Grid>, times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        check_times(&times)?;
        if values.len() != times.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} levels of values for {} time levels",
                values.len(),
                times.len()
            )));
        }
        for (k, level) in values.iter().enumerate() {
            if level.len() != grid.node_count() {
                return Err(Error::ShapeMismatch(format!(
                    "level {k} has {} values, grid has {} nodes",
                    level.len(),
                    grid.node_count()
                )));
            }
            if let Some(b) = (0..level.len()).find(|&n| grid.is_boundary(n) && level[n] != 0.0) {
                return Err(Error::ShapeMismatch(format!(
                    "level {k} has non-zero boundary value at node {b}"
                )));
            }
        }
        Ok(Self {
            grid,
            times,
            values,
        })
    }

    pub fn zeros(grid: Arc<Grid>, times: Vec<f64>) -> Result<Self> {
        check_times(&times)?;
        let values = vec![vec![0.0; grid.node_count()]; times.len()];
        Ok(Self {
            grid,
            times,
            values,
        })
    }

    /// Samples `f(x, t)` at every node and level; boundary values are zeroed.
    pub fn from_fn(
        grid: Arc<Grid>,
        times: Vec<f64>,
        f: impl Fn(Point, f64) -> f64,
    ) -> Result<Self> {
        check_times(&times)?;
        let values = times.iter().map(|&t| grid.sample(|p| f(p, t))).collect();
        Ok(Self {
            grid,
            times,
            values,
        })
    }

    /// Builds a field from per-level vectors, zeroing boundary entries.
    pub(crate) fn from_levels_masked(
        grid: Arc<Grid>,
        times: Vec<f64>,
        mut values: Vec<Vec<f64>>,
    ) -> Self {
        for level in &mut values {
            for (n, v) in level.iter_mut().enumerate() {
                if grid.is_boundary(n) {
                    *v = 0.0;
                }
            }
        }
        Self {
            grid,
            times,
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn level_count(&self) -> usize {
        self.times.len()
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("at least two levels")
    }

    /// Step of a uniform time grid, or `None` if the levels are not uniform.
    pub fn uniform_step(&self) -> Option<f64> {
        let dt = self.times[1] - self.times[0];
        let tol = 1e-9 * dt;
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= tol)
            .then_some(dt)
    }

    /// Index of the level equal to `t` (to a relative 1e-9 of the step).
    pub fn level_index(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * (self.times[1] - self.times[0]);
        let pos = self.times.partition_point(|&s| s < t - tol);
        if pos < self.times.len() && (self.times[pos] - t).abs() <= tol {
            Ok(pos)
        } else {
            Err(Error::NotATimeLevel(t))
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        *self.grid == *other.grid && self.times == other.times
    }

    /// Multiplies level `k` by `weight(t_k)`.
    pub fn scaled_in_time(&self, weight: impl Fn(f64) -> f64) -> Self {
        let values = self
            .times
            .iter()
            .zip(&self.values)
            .map(|(&t, level)| {
                let w = weight(t);
                level.iter().map(|v| v * w).collect()
            })
            .collect();
        Self {
            grid: self.grid.clone(),
            times: self.times.clone(),
            values,
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.scaled_in_time(|_| alpha)
    }

    /// `alpha * self + other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(
                "fields live on different grids or levels".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| alpha * x + y).collect())
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            times: self.times.clone(),
            values,
        })
    }

    /// Per-level squared L2(D) norms.
    pub fn level_norms_sq(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| self.grid.norm_sq(v).expect("level length matches grid"))
            .collect()
    }

    /// Trapezoid-in-time L2(Q) norm.
    pub fn l2_norm(&self) -> f64 {
        trapezoid(&self.times, &self.level_norms_sq())
            .max(0.0)
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|l| l.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Linear interpolation in time at `s`, clamped to the stored range.
    pub fn interpolate(&self, s: f64) -> Vec<f64> {
        let (j, w) = self.bracket(s);
        if w == 0.0 {
            return self.values[j].clone();
        }
        self.values[j]
            .iter()
            .zip(&self.values[j + 1])
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect()
    }

    /// Level `j` and weight `w` with `s = (1 - w) t_j + w t_{j+1}`.
    pub(crate) fn bracket(&self, s: f64) -> (usize, f64) {
        let last = self.times.len() - 1;
        if s <= self.times[0] {
            return (0, 0.0);
        }
        if s >= self.times[last] {
            return (last, 0.0);
        }
        let j = self.times.partition_point(|&t| t <= s) - 1;
        let w = (s - self.times[j]) / (self.times[j + 1] - self.times[j]);
        (j, w)
    }
}
