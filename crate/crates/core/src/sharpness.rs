//! Closed-form extremal example on `(-pi, pi)` with `b = 1`, `f = 0`,
//! `lambda = 0`: forcing `h_m = sin(mx) e^{gamma t}`, `gamma = m^2 + K`, for
//! `u_t = u_xx - K u + h`, `u(0) = 0`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::coefficients::{CoefficientSet, Preset};
use crate::energy::level_energies;
use crate::error::{Error, Result};
use crate::grid::{trapezoid, uniform_times, Grid, SpaceTimeField};
use crate::solver::{solve_parabolic, ParabolicProblem, DEFAULT_THETA};

/// Nodes per wavelength factor: a mode `m` needs at least `20 m` nodes.
pub const NODES_PER_MODE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpnessCase {
    m: u32,
    shift: f64,
    horizon: f64,
}

impl SharpnessCase {
    pub fn new(m: u32, shift: f64, horizon: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("mode m must be >= 1".into()));
        }
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidParameter(format!("K = {shift} must be >= 0")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "T = {horizon} must be positive"
            )));
        }
        Ok(Self { m, shift, horizon })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        let m = f64::from(self.m);
        m * m + self.shift
    }
}

pub fn analytic_forcing(case: &SharpnessCase, x: f64, t: f64) -> f64 {
    (f64::from(case.m) * x).sin() * (case.gamma() * t).exp()
}

/// `sin(mx) sinh(gamma t) / gamma`.
pub fn analytic_solution(case: &SharpnessCase, x: f64, t: f64) -> f64 {
    (f64::from(case.m) * x).sin() * (case.gamma() * t).sinh() / case.gamma()
}

/// `|u_x(T)|^2 / int_0^T |h|^2 = (m^2 / 2 gamma)(1 - e^{-2 gamma T})`.
pub fn sharpness_ratio(case: &SharpnessCase) -> f64 {
    let m2 = f64::from(case.m).powi(2);
    let g = case.gamma();
    -(m2 / (2.0 * g)) * (-2.0 * g * case.horizon).exp_m1()
}

/// `E_b(T) / (T |h(., 0)|^2) = m^2 sinh^2(gamma T) / (gamma^2 T)`.
pub fn initial_time_ratio(case: &SharpnessCase) -> f64 {
    let m2 = f64::from(case.m).powi(2);
    let g = case.gamma();
    m2 * (g * case.horizon).sinh().powi(2) / (g * g * case.horizon)
}

fn solve_case(
    case: &SharpnessCase,
    nodes: usize,
    steps: usize,
) -> Result<(SpaceTimeField, SpaceTimeField, CoefficientSet)> {
    let grid = Arc::new(Grid::interval(-PI, PI, nodes)?);
    let times = uniform_times(case.horizon, steps)?;
    let coeffs = CoefficientSet::preset(Preset::Heat, 1, case.horizon)?;
    let c = *case;
    let h = SpaceTimeField::from_fn(grid, times, move |p, t| analytic_forcing(&c, p[0], t))?;
    let problem = ParabolicProblem::new(coeffs.clone(), h.clone(), case.shift, DEFAULT_THETA)?;
    let u = solve_parabolic(&problem)?;
    Ok((u, h, coeffs))
}

/// Numeric `E_b(T) / int_0^T |h|^2` from the solver.
pub fn numeric_sharpness_ratio(case: &SharpnessCase, nodes: usize, steps: usize) -> Result<f64> {
    let (u, h, coeffs) = solve_case(case, nodes, steps)?;
    let e = level_energies(&u, &coeffs)?;
    Ok(e[e.len() - 1] / trapezoid(h.times(), &h.level_norms_sq()))
}

/// Relative L2(D) error of the numeric solution at `T`.
pub fn solution_error(case: &SharpnessCase, nodes: usize, steps: usize) -> Result<f64> {
    let (u, _, _) = solve_case(case, nodes, steps)?;
    let g = u.grid();
    let c = *case;
    let exact = g.sample(|p| analytic_solution(&c, p[0], c.horizon));
    let last = u.level(u.level_count() - 1);
    let diff: Vec<f64> = last.iter().zip(&exact).map(|(a, b)| a - b).collect();
    Ok((g.norm_sq(&diff)? / g.norm_sq(&exact)?).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessRow {
    pub m: u32,
    pub shift: f64,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_diff: f64,
    /// Within 1% of the closed form and both below 1/2.
    pub passed: bool,
}

pub fn run_sharpness_experiment(
    modes: &[u32],
    shift: f64,
    horizon: f64,
    nodes: usize,
    dt: f64,
) -> Result<Vec<SharpnessRow>> {
    use rayon::prelude::*;
    if modes.is_empty() {
        return Err(Error::Empty("mode list".into()));
    }
    let steps = steps_for(horizon, dt)?;
    modes
        .par_iter()
        .map(|&m| {
            let case = SharpnessCase::new(m, shift, horizon)?;
            let analytic = sharpness_ratio(&case);
            let numeric = numeric_sharpness_ratio(&case, nodes, steps)?;
            let rel_diff = (numeric - analytic).abs() / analytic;
            Ok(SharpnessRow {
                m,
                shift,
                analytic,
                numeric,
                rel_diff,
                passed: rel_diff < 1e-2 && analytic <= 0.5 && numeric <= 0.5,
            })
        })
        .collect()
}

fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dt = {dt} must be positive"
        )));
    }
    Ok(((horizon / dt).round() as usize).max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialTimeRow {
    pub i: u32,
    pub horizon: f64,
    pub m: u32,
    pub gamma_t: f64,
    pub analytic: f64,
    /// `None` where the grid is too coarse for the mode.
    pub numeric: Option<f64>,
    pub rel_diff: Option<f64>,
}

/// Rows along `T_i = 2^{-i}`, `m_i = ceil(1 / T_i) + 1 = 2^i + 1`,
/// `i = 1..=i_max`, with `K = 0` and `steps` time steps per row.
pub fn run_initial_time_experiment(
    i_max: u32,
    nodes: usize,
    steps: usize,
) -> Result<Vec<InitialTimeRow>> {
    use rayon::prelude::*;
    if i_max == 0 {
        return Err(Error::InvalidParameter("i_max must be >= 1".into()));
    }
    if i_max > 30 {
        return Err(Error::InvalidParameter("i_max must be <= 30".into()));
    }
    let first_mode = 3;
    if nodes < NODES_PER_MODE * first_mode {
        return Err(Error::UnderResolved(format!(
            "{nodes} nodes cannot resolve mode {first_mode}; need {}",
            NODES_PER_MODE * first_mode
        )));
    }
    (1..=i_max)
        .into_par_iter()
        .map(|i| {
            let horizon = 0.5_f64.powi(i as i32);
            let m = (1u32 << i) + 1;
            let case = SharpnessCase::new(m, 0.0, horizon)?;
            let analytic = initial_time_ratio(&case);
            let numeric = if nodes >= NODES_PER_MODE * m as usize {
                let (u, h, coeffs) = solve_case(&case, nodes, steps)?;
                Some(crate::energy::asymptotic_ratio(
                    &u,
                    &h,
                    &coeffs,
                    u.horizon(),
                )?)
            } else {
                None
            };
            Ok(InitialTimeRow {
                i,
                horizon,
                m,
                gamma_t: case.gamma() * horizon,
                analytic,
                numeric,
                rel_diff: numeric.map(|n| (n - analytic).abs() / analytic),
            })
        })
        .collect()
}
