//! Theta-scheme solution operator for
//! `du/dt = A u - K u + h`, `u(., 0) = 0`, `u = 0` on the boundary.
//!
//! With `K = 0` this is the plain Dirichlet problem; with `K > 0` it is the
//! shifted problem whose solution map is the operator `F_K` used by the delay
//! construction.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::coefficients::{validate_ellipticity, CoefficientSet, Sym2};
use crate::error::{Error, Result};
use crate::grid::{Grid, SpaceTimeField};
use crate::linalg::{solve_tridiagonal, BandLu, SparseMatrix};

/// Crank-Nicolson.
pub const DEFAULT_THETA: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct ParabolicProblem {
    grid: Arc<Grid>,
    coeffs: CoefficientSet,
    shift: f64,
    forcing: SpaceTimeField,
    theta: f64,
    dt: f64,
    delta: f64,
}

impl ParabolicProblem {
    /// Validates the forcing levels (uniform), `K >= 0`, `theta` in
    /// `[1/2, 1]` and ellipticity of `b` on the grid and time levels.
    pub fn new(
        coeffs: CoefficientSet,
        forcing: SpaceTimeField,
        shift: f64,
        theta: f64,
    ) -> Result<Self> {
        let grid = forcing.grid().clone();
        if coeffs.dim() != grid.dim() {
            return Err(Error::GridMismatch(format!(
                "{}D coefficients on a {}D grid",
                coeffs.dim(),
                grid.dim()
            )));
        }
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "shift K = {shift} must be >= 0"
            )));
        }
        if !(0.5..=1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!(
                "theta = {theta} must lie in [1/2, 1]"
            )));
        }
        let dt = forcing
            .uniform_step()
            .ok_or_else(|| Error::InvalidTimes("time levels must be uniform".into()))?;
        let sample_times: Vec<f64> = if coeffs.is_time_dependent() {
            forcing.times().to_vec()
        } else {
            vec![0.0]
        };
        let delta = validate_ellipticity(&coeffs, &grid, &sample_times)?;
        Ok(Self {
            grid,
            coeffs,
            shift,
            forcing,
            theta,
            dt,
            delta,
        })
    }

    /// Same coefficients, levels and scheme with a new forcing on the same
    /// grid and levels. Skips re-validating the coefficients.
    pub fn with_forcing(&self, forcing: SpaceTimeField) -> Result<Self> {
        if !forcing.same_shape(&self.forcing) {
            return Err(Error::ShapeMismatch(
                "replacement forcing must share grid and time levels".into(),
            ));
        }
        Ok(Self {
            forcing,
            ..self.clone()
        })
    }

    pub fn with_shift(&self, shift: f64) -> Result<Self> {
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "shift K = {shift} must be >= 0"
            )));
        }
        Ok(Self {
            shift,
            ..self.clone()
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn forcing(&self) -> &SpaceTimeField {
        &self.forcing
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        self.forcing.times()
    }

    /// Ellipticity constant found when the problem was built.
    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Local stiffness of one 2D cell, nodes ordered
/// `(i, j), (i+1, j), (i, j+1), (i+1, j+1)`. Its quadratic form is the cell's
/// share of the weighted Dirichlet energy.
pub(crate) fn cell_stiffness(m: Sym2, hx: f64, hy: f64) -> [[f64; 4]; 4] {
    let vol = hx * hy;
    let mut s = [[0.0; 4]; 4];
    let mut add_sq = |w: f64, l: [f64; 4]| {
        for a in 0..4 {
            for b in 0..4 {
                s[a][b] += w * l[a] * l[b];
            }
        }
    };
    let wx = vol * m.a11 / (2.0 * hx * hx);
    let wy = vol * m.a22 / (2.0 * hy * hy);
    add_sq(wx, [-1.0, 1.0, 0.0, 0.0]);
    add_sq(wx, [0.0, 0.0, -1.0, 1.0]);
    add_sq(wy, [-1.0, 0.0, 1.0, 0.0]);
    add_sq(wy, [0.0, -1.0, 0.0, 1.0]);
    let gx = [-1.0, 1.0, -1.0, 1.0].map(|v: f64| v / (2.0 * hx));
    let gy = [-1.0, -1.0, 1.0, 1.0].map(|v: f64| v / (2.0 * hy));
    for a in 0..4 {
        for b in 0..4 {
            s[a][b] += vol * m.a12 * (gx[a] * gy[b] + gy[a] * gx[b]);
        }
    }
    s
}

fn elliptic_sample(coeffs: &CoefficientSet, p: [f64; 2], t: f64) -> Result<Sym2> {
    let m = coeffs.b(p, t);
    let e = m.min_eigenvalue(coeffs.dim());
    if !(e > 0.0) {
        return Err(Error::EllipticityViolation {
            point: p,
            time: t,
            eigenvalue: e,
        });
    }
    Ok(m)
}

/// Discrete `A - K I` at time `t` on all nodes; boundary rows are empty so
/// the operator maps into fields that vanish on the boundary.
///
/// 1D rows are `[b_{i-1/2}, -(b_{i-1/2} + b_{i+1/2}), b_{i+1/2}] / h^2` plus
/// centered advection `f_i (u_{i+1} - u_{i-1}) / 2h` plus `lambda_i - K` on
/// the diagonal. 2D diffusion is the negative gradient of the cell-centered
/// energy, which yields per-axis fluxes and a centered cross-derivative term.
pub fn assemble_operator(
    coeffs: &CoefficientSet,
    t: f64,
    grid: &Grid,
    shift: f64,
) -> Result<SparseMatrix> {
    if coeffs.dim() != grid.dim() {
        return Err(Error::GridMismatch(
            "coefficient and grid dimensions differ".into(),
        ));
    }
    let n = grid.node_count();
    let hx = grid.spacing(0);
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    if grid.dim() == 1 {
        let x0 = grid.axes()[0].low;
        let face = |i: usize| [x0 + (i as f64 + 0.5) * hx, 0.0];
        let mut b_right = elliptic_sample(coeffs, face(0), t)?.a11;
        for i in 1..n - 1 {
            let b_left = b_right;
            b_right = elliptic_sample(coeffs, face(i), t)?.a11;
            let p = grid.point(i);
            let f = coeffs.f(p, t)[0];
            let lam = coeffs.lambda(p, t);
            let row = &mut rows[i];
            row.insert(i - 1, b_left / (hx * hx) - f / (2.0 * hx));
            row.insert(i, -(b_left + b_right) / (hx * hx) + lam - shift);
            row.insert(i + 1, b_right / (hx * hx) + f / (2.0 * hx));
        }
        return Ok(SparseMatrix::from_rows(rows));
    }

    let hy = grid.spacing(1);
    let (nx, ny) = (grid.nx(), grid.ny());
    let (x0, y0) = (grid.axes()[0].low, grid.axes()[1].low);
    let vol = hx * hy;
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let p = [x0 + (i as f64 + 0.5) * hx, y0 + (j as f64 + 0.5) * hy];
            let s = cell_stiffness(elliptic_sample(coeffs, p, t)?, hx, hy);
            let nodes = [
                i + nx * j,
                i + 1 + nx * j,
                i + nx * (j + 1),
                i + 1 + nx * (j + 1),
            ];
            for (a, &na) in nodes.iter().enumerate() {
                if grid.is_boundary(na) {
                    continue;
                }
                for (b, &nb) in nodes.iter().enumerate() {
                    *rows[na].entry(nb).or_insert(0.0) -= s[a][b] / vol;
                }
            }
        }
    }
    for k in grid.interior() {
        let p = grid.point(k);
        let f = coeffs.f(p, t);
        let lam = coeffs.lambda(p, t);
        let row = &mut rows[k];
        *row.entry(k - 1).or_insert(0.0) -= f[0] / (2.0 * hx);
        *row.entry(k + 1).or_insert(0.0) += f[0] / (2.0 * hx);
        *row.entry(k - nx).or_insert(0.0) -= f[1] / (2.0 * hy);
        *row.entry(k + nx).or_insert(0.0) += f[1] / (2.0 * hy);
        *row.entry(k).or_insert(0.0) += lam - shift;
    }
    Ok(SparseMatrix::from_rows(rows))
}

/// Factored `I - c M` restricted to interior nodes.
pub(crate) enum ImplicitSystem {
    Tridiagonal {
        lower: Vec<f64>,
        diag: Vec<f64>,
        upper: Vec<f64>,
    },
    Banded(BandLu),
}

impl ImplicitSystem {
    pub(crate) fn factor(grid: &Grid, m: &SparseMatrix, c: f64, level: usize) -> Result<Self> {
        if grid.dim() == 1 {
            let n = grid.nx() - 2;
            let mut lower = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for k in 0..n {
                let i = k + 1;
                for (col, v) in m.row(i) {
                    if col + 1 == i && k > 0 {
                        lower[k] = -c * v;
                    } else if col == i {
                        diag[k] = 1.0 - c * v;
                    } else if col == i + 1 && k + 1 < n {
                        upper[k] = -c * v;
                    }
                }
            }
            // Probe the pivots once so a singular system is reported here.
            let mut probe = vec![1.0; n];
            solve_tridiagonal(&lower, &diag, &upper, &mut probe)
                .ok_or(Error::SingularSystem { level })?;
            return Ok(Self::Tridiagonal { lower, diag, upper });
        }
        let (nx, ny) = (grid.nx(), grid.ny());
        let (mx, my) = (nx - 2, ny - 2);
        let bw = mx + 1;
        let to_interior = |node: usize| -> Option<usize> {
            let (i, j) = (node % nx, node / nx);
            (i >= 1 && i <= mx && j >= 1 && j <= my).then(|| (i - 1) + mx * (j - 1))
        };
        let lu = BandLu::factor(mx * my, bw, bw, |p| {
            let node = (p % mx + 1) + nx * (p / mx + 1);
            let mut out: Vec<(usize, f64)> = m
                .row(node)
                .filter_map(|(col, v)| to_interior(col).map(|q| (q, -c * v)))
                .collect();
            out.push((p, 1.0));
            out
        })
        .ok_or(Error::SingularSystem { level })?;
        Ok(Self::Banded(lu))
    }

    /// Solves for a full-node vector; boundary entries of the result are 0.
    pub(crate) fn solve(&self, grid: &Grid, rhs: &[f64], level: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; grid.node_count()];
        match self {
            Self::Tridiagonal { lower, diag, upper } => {
                let n = diag.len();
                let mut r: Vec<f64> = rhs[1..=n].to_vec();
                solve_tridiagonal(lower, diag, upper, &mut r)
                    .ok_or(Error::SingularSystem { level })?;
                out[1..=n].copy_from_slice(&r);
            }
            Self::Banded(lu) => {
                let (nx, ny) = (grid.nx(), grid.ny());
                let mx = nx - 2;
                let mut r = Vec::with_capacity(mx * (ny - 2));
                for j in 1..ny - 1 {
                    r.extend_from_slice(&rhs[1 + nx * j..nx - 1 + nx * j]);
                }
                lu.solve(&mut r);
                for j in 1..ny - 1 {
                    out[1 + nx * j..nx - 1 + nx * j].copy_from_slice(&r[mx * (j - 1)..mx * j]);
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem { level });
        }
        Ok(out)
    }
}

/// Operator at each level, assembled once when the coefficients do not
/// depend on time.
pub(crate) struct OperatorCache<'a> {
    problem: &'a ParabolicProblem,
    fixed: Option<SparseMatrix>,
}

impl<'a> OperatorCache<'a> {
    pub(crate) fn new(problem: &'a ParabolicProblem) -> Result<Self> {
        let fixed = if problem.coeffs.is_time_dependent() {
            None
        } else {
            Some(assemble_operator(
                &problem.coeffs,
                0.0,
                &problem.grid,
                problem.shift,
            )?)
        };
        Ok(Self { problem, fixed })
    }

    pub(crate) fn is_fixed(&self) -> bool {
        self.fixed.is_some()
    }

    pub(crate) fn at(&self, level: usize) -> Result<std::borrow::Cow<'_, SparseMatrix>> {
        match &self.fixed {
            Some(m) => Ok(std::borrow::Cow::Borrowed(m)),
            None => {
                let p = self.problem;
                let t = p.times()[level];
                Ok(std::borrow::Cow::Owned(assemble_operator(
                    &p.coeffs, t, &p.grid, p.shift,
                )?))
            }
        }
    }
}

/// `(1 - theta) h_k + theta h_{k+1}`, the forcing at `t_{k + theta}`.
pub(crate) fn theta_forcing(h: &SpaceTimeField, k: usize, theta: f64) -> Vec<f64> {
    h.level(k)
        .iter()
        .zip(h.level(k + 1))
        .map(|(a, b)| (1.0 - theta) * a + theta * b)
        .collect()
}

/// Marches `(I - theta dt A_{k+1}) u_{k+1} = (I + (1 - theta) dt A_k) u_k
/// + dt h_{k+theta}` from `u_0 = 0`.
pub fn solve_parabolic(problem: &ParabolicProblem) -> Result<SpaceTimeField> {
    let grid = problem.grid.clone();
    let times = problem.times().to_vec();
    let (theta, dt) = (problem.theta, problem.dt);
    let ops = OperatorCache::new(problem)?;
    let steps = times.len() - 1;
    let mut levels = Vec::with_capacity(times.len());
    levels.push(vec![0.0; grid.node_count()]);

    let mut fixed_system = None;
    if ops.is_fixed() {
        fixed_system = Some(ImplicitSystem::factor(&grid, &*ops.at(0)?, theta * dt, 1)?);
    }
    let mut a_prev = ops.at(0)?.into_owned();
    for k in 0..steps {
        let u = &levels[k];
        let mut rhs = u.clone();
        if theta < 1.0 {
            a_prev.matvec_add((1.0 - theta) * dt, u, &mut rhs);
        }
        for (r, h) in rhs
            .iter_mut()
            .zip(theta_forcing(&problem.forcing, k, theta))
        {
            *r += dt * h;
        }
        let next = match &fixed_system {
            Some(sys) => sys.solve(&grid, &rhs, k + 1)?,
            None => {
                let a_next = ops.at(k + 1)?.into_owned();
                let sys = ImplicitSystem::factor(&grid, &a_next, theta * dt, k + 1)?;
                let next = sys.solve(&grid, &rhs, k + 1)?;
                a_prev = a_next;
                next
            }
        };
        levels.push(next);
    }
    Ok(SpaceTimeField::from_levels_masked(grid, times, levels))
}

/// Scheme residual: max over interior nodes and steps of
/// `|(u_{k+1} - u_k)/dt - theta A_{k+1} u_{k+1} - (1-theta) A_k u_k - h_{k+theta}|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub absolute: f64,
    /// `absolute` divided by the largest magnitude among the three terms.
    pub relative: f64,
}

pub fn residual(solution: &SpaceTimeField, problem: &ParabolicProblem) -> Result<Residual> {
    if !solution.same_shape(&problem.forcing) {
        return Err(Error::ShapeMismatch(
            "solution and forcing must share grid and time levels".into(),
        ));
    }
    let grid = problem.grid.clone();
    let (theta, dt) = (problem.theta, problem.dt);
    let ops = OperatorCache::new(problem)?;
    let mut au_prev = ops.at(0)?.matvec(solution.level(0));
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..solution.level_count() - 1 {
        let au_next = ops.at(k + 1)?.matvec(solution.level(k + 1));
        let h = theta_forcing(&problem.forcing, k, theta);
        let (u0, u1) = (solution.level(k), solution.level(k + 1));
        for n in grid.interior() {
            let du = (u1[n] - u0[n]) / dt;
            let au = theta * au_next[n] + (1.0 - theta) * au_prev[n];
            worst = worst.max((du - au - h[n]).abs());
            scale = scale.max(du.abs()).max(au.abs()).max(h[n].abs());
        }
        au_prev = au_next;
    }
    Ok(Residual {
        absolute: worst,
        relative: if scale > 0.0 { worst / scale } else { 0.0 },
    })
}
