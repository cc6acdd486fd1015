//! Problems with a delayed first-order term,
//!
//! ```text
//! u_t = A u + B u + h,  (B u)(x, t) = beta(x, s) . grad u(x, s) + beta_bar(x, s) u(x, s),  s = tau(t),
//! ```
//!
//! solved through the shifted unknown `u_K = e^{-Kt} u` and the fixed point
//! `g = h_K + B_K F_K g`, where `F_K` is the solution map of the shifted
//! problem and `B_K = e^{K(tau(t) - t)} B`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coefficients::{CoefficientSet, ScalarFn, VectorFn};
use crate::energy::{level_energies, shift_ladder, Probe, SHIFT_CAP};
use crate::error::{Error, Result};
use crate::grid::{trapezoid, Grid, Point, SpaceTimeField};
use crate::linalg::SparseMatrix;
use crate::solver::{
    residual, solve_parabolic, ImplicitSystem, OperatorCache, ParabolicProblem, Residual,
};

/// Default fixed-point tolerance, relative to `|h_K|` in L2(Q).
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Default contraction budget target for `delta2 + delta3`.
pub const DEFAULT_TARGET: f64 = 0.95;

const RANGE_TOL: f64 = 1e-12;

/// The delay target `tau(t)`.
#[derive(Clone)]
pub enum DelayMap {
    /// `tau(t) = t`: no lag.
    Identity,
    /// `tau(t) = t / 2`.
    Half,
    /// `tau(t) = 0`.
    Frozen,
    /// `tau(t) = floor(t k / T) T / k`.
    Staircase {
        steps: usize,
        horizon: f64,
    },
    /// Piecewise linear through `(times[i], values[i])`, constant outside.
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for DelayMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "none"),
            Self::Half => write!(f, "half"),
            Self::Frozen => write!(f, "frozen"),
            Self::Staircase { steps, .. } => write!(f, "staircase({steps})"),
            Self::Tabulated { times, .. } => write!(f, "tabulated({} points)", times.len()),
            Self::Custom(_) => write!(f, "custom"),
        }
    }
}

impl DelayMap {
    /// Parses `none`, `half`, `frozen` and `staircase(k)`.
    pub fn parse(name: &str, horizon: f64) -> Result<Self> {
        let name = name.trim();
        match name {
            "none" => return Ok(Self::Identity),
            "half" => return Ok(Self::Half),
            "frozen" => return Ok(Self::Frozen),
            _ => {}
        }
        if let Some(arg) = name
            .strip_prefix("staircase(")
            .and_then(|s| s.strip_suffix(')'))
        {
            let steps: usize = arg
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad staircase count in {name:?}")))?;
            return Self::staircase(steps, horizon);
        }
        Err(Error::InvalidParameter(format!(
            "unknown delay map {name:?}"
        )))
    }

    pub fn staircase(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter(
                "staircase needs at least one step".into(),
            ));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidParameter(
                "staircase horizon must be positive".into(),
            ));
        }
        Ok(Self::Staircase { steps, horizon })
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::InvalidParameter(
                "tabulated delay needs matching, non-empty time and value lists".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "tabulated delay times must increase".into(),
            ));
        }
        Ok(Self::Tabulated { times, values })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Identity => t,
            Self::Half => 0.5 * t,
            Self::Frozen => 0.0,
            Self::Staircase { steps, horizon } => {
                let h = horizon / *steps as f64;
                ((t / h + 1e-9).floor() * h).min(t)
            }
            Self::Tabulated { times, values } => {
                let n = times.len();
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let j = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[j]) / (times[j + 1] - times[j]);
                (1.0 - w) * values[j] + w * values[j + 1]
            }
            Self::Custom(f) => f(t),
        }
    }

    /// `tau(t)` after checking `tau(t)` lies in `[0, t]`.
    pub fn target(&self, t: f64) -> Result<f64> {
        let s = self.eval(t);
        let tol = RANGE_TOL * t.abs().max(1.0);
        if !(s >= -tol && s <= t + tol) {
            return Err(Error::DelayOutOfRange { time: t, tau: s });
        }
        Ok(s.clamp(0.0, t.max(0.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayMode {
    /// Bounded measurable `tau`; needs the smallness condition on `beta`.
    General,
    /// `tau = 0` on `[0, theta)`, non-decreasing after, with `|tau'|^{-1}`
    /// bounded by `delta_star` (estimated from the levels when `None`).
    Monotone { theta: f64, delta_star: Option<f64> },
}

#[derive(Clone)]
pub struct DelaySpec {
    dim: usize,
    beta: VectorFn,
    beta_bar: ScalarFn,
    tau: DelayMap,
    mode: DelayMode,
    time_dependent: bool,
    c_beta: Option<f64>,
}

impl fmt::Debug for DelaySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelaySpec")
            .field("dim", &self.dim)
            .field("tau", &self.tau)
            .field("mode", &self.mode)
            .field("time_dependent", &self.time_dependent)
            .field("c_beta", &self.c_beta)
            .finish_non_exhaustive()
    }
}

impl DelaySpec {
    /// `beta = 0`, `beta_bar = 0`, `tau(t) = t`.
    pub fn new(dim: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidParameter(format!(
                "dimension {dim} is not 1 or 2"
            )));
        }
        Ok(Self {
            dim,
            beta: Arc::new(|_, _| [0.0, 0.0]),
            beta_bar: Arc::new(|_, _| 0.0),
            tau: DelayMap::Identity,
            mode: DelayMode::General,
            time_dependent: false,
            c_beta: None,
        })
    }

    pub fn with_beta(
        mut self,
        beta: impl Fn(Point, f64) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        self.beta = Arc::new(beta);
        self
    }

    pub fn with_constant_beta(self, beta: [f64; 2]) -> Self {
        self.with_beta(move |_, _| beta)
    }

    pub fn with_beta_bar(
        mut self,
        beta_bar: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.beta_bar = Arc::new(beta_bar);
        self
    }

    pub fn with_constant_beta_bar(self, beta_bar: f64) -> Self {
        self.with_beta_bar(move |_, _| beta_bar)
    }

    pub fn with_tau(mut self, tau: DelayMap) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_mode(mut self, mode: DelayMode) -> Self {
        self.mode = mode;
        self
    }

    /// Marks `beta`, `beta_bar` as depending on time.
    pub fn time_dependent(mut self, yes: bool) -> Self {
        self.time_dependent = yes;
        self
    }

    /// Overrides the sampled `sup |beta_bar|`.
    pub fn with_c_beta(mut self, c: f64) -> Self {
        self.c_beta = Some(c);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tau(&self) -> &DelayMap {
        &self.tau
    }

    pub fn mode(&self) -> DelayMode {
        self.mode
    }

    pub fn beta(&self, p: Point, t: f64) -> [f64; 2] {
        let mut v = (self.beta)(p, t);
        if self.dim == 1 {
            v[1] = 0.0;
        }
        v
    }

    pub fn beta_bar(&self, p: Point, t: f64) -> f64 {
        (self.beta_bar)(p, t)
    }

    /// `sup |beta_bar|` over the nodes and levels, unless overridden.
    pub fn c_beta(&self, grid: &Grid, times: &[f64]) -> f64 {
        if let Some(c) = self.c_beta {
            return c;
        }
        let times: &[f64] = if self.time_dependent {
            times
        } else {
            &times[..1]
        };
        let mut sup: f64 = 0.0;
        for &t in times {
            for k in 0..grid.node_count() {
                sup = sup.max(self.beta_bar(grid.point(k), t).abs());
            }
        }
        sup
    }

    /// `tau` at every level, checked against `[0, t]`.
    pub fn targets(&self, times: &[f64]) -> Result<Vec<f64>> {
        times.iter().map(|&t| self.tau.target(t)).collect()
    }
}

/// Sparse `v -> beta(., s) . grad v + beta_bar(., s) v` with centered
/// differences; boundary rows are empty.
pub fn delay_coupling(spec: &DelaySpec, grid: &Grid, s: f64) -> Result<SparseMatrix> {
    use std::collections::BTreeMap;
    if spec.dim != grid.dim() {
        return Err(Error::GridMismatch(
            "delay spec and grid dimensions differ".into(),
        ));
    }
    let n = grid.node_count();
    let hx = grid.spacing(0);
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for k in grid.interior() {
        let p = grid.point(k);
        let beta = spec.beta(p, s);
        let bb = spec.beta_bar(p, s);
        if !(beta[0].is_finite() && beta[1].is_finite() && bb.is_finite()) {
            return Err(Error::NonFinite { point: p, time: s });
        }
        let row = &mut rows[k];
        *row.entry(k - 1).or_insert(0.0) -= beta[0] / (2.0 * hx);
        *row.entry(k + 1).or_insert(0.0) += beta[0] / (2.0 * hx);
        if grid.dim() == 2 {
            let hy = grid.spacing(1);
            let nx = grid.nx();
            *row.entry(k - nx).or_insert(0.0) -= beta[1] / (2.0 * hy);
            *row.entry(k + nx).or_insert(0.0) += beta[1] / (2.0 * hy);
        }
        *row.entry(k).or_insert(0.0) += bb;
    }
    Ok(SparseMatrix::from_rows(rows))
}

/// Coupling matrices at the delayed times, assembled once when the spec
/// does not depend on time.
struct CouplingCache<'a> {
    spec: &'a DelaySpec,
    grid: &'a Grid,
    fixed: Option<SparseMatrix>,
}

impl<'a> CouplingCache<'a> {
    fn new(spec: &'a DelaySpec, grid: &'a Grid) -> Result<Self> {
        let fixed = if spec.time_dependent {
            None
        } else {
            Some(delay_coupling(spec, grid, 0.0)?)
        };
        Ok(Self { spec, grid, fixed })
    }

    fn at(&self, s: f64) -> Result<std::borrow::Cow<'_, SparseMatrix>> {
        match &self.fixed {
            Some(m) => Ok(std::borrow::Cow::Borrowed(m)),
            None => Ok(std::borrow::Cow::Owned(delay_coupling(
                self.spec, self.grid, s,
            )?)),
        }
    }
}

fn check_history(history: &SpaceTimeField, spec: &DelaySpec) -> Result<()> {
    if history.grid().dim() != spec.dim {
        return Err(Error::GridMismatch(
            "history and delay spec dimensions differ".into(),
        ));
    }
    Ok(())
}

/// `(B u)(., t)`: the history is interpolated linearly in time at `tau(t)`.
pub fn apply_delay_operator(
    history: &SpaceTimeField,
    spec: &DelaySpec,
    t: f64,
) -> Result<Vec<f64>> {
    apply_scaled_delay_operator(history, spec, 0.0, t)
}

/// `(B_K u)(., t) = e^{K(tau(t) - t)} (B u)(., t)`.
pub fn apply_scaled_delay_operator(
    history: &SpaceTimeField,
    spec: &DelaySpec,
    shift: f64,
    t: f64,
) -> Result<Vec<f64>> {
    check_history(history, spec)?;
    let s = spec.tau.target(t)?;
    if s > history.horizon() * (1.0 + RANGE_TOL) {
        return Err(Error::DelayOutOfRange { time: t, tau: s });
    }
    let v = history.interpolate(s);
    let mut out = delay_coupling(spec, history.grid(), s)?.matvec(&v);
    let c = (shift * (s - t)).exp();
    out.iter_mut().for_each(|x| *x *= c);
    Ok(out)
}

/// `B_K w` at every level of `w`.
pub fn scaled_delay_field(
    w: &SpaceTimeField,
    spec: &DelaySpec,
    shift: f64,
) -> Result<SpaceTimeField> {
    check_history(w, spec)?;
    let grid = w.grid().clone();
    let cache = CouplingCache::new(spec, &grid)?;
    let targets = spec.targets(w.times())?;
    let levels = w
        .times()
        .iter()
        .zip(&targets)
        .map(|(&t, &s)| {
            let v = w.interpolate(s);
            let mut out = cache.at(s)?.matvec(&v);
            let c = (shift * (s - t)).exp();
            out.iter_mut().for_each(|x| *x *= c);
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    SpaceTimeField::new(grid, w.times().to_vec(), levels)
}

/// `delta1 = 2 - T sup beta' b^{-1} beta` over the nodes and levels.
pub fn check_delay_condition(
    spec: &DelaySpec,
    coeffs: &CoefficientSet,
    horizon: f64,
    grid: &Grid,
    times: &[f64],
) -> Result<f64> {
    if spec.dim != coeffs.dim() || spec.dim != grid.dim() {
        return Err(Error::GridMismatch(
            "delay spec, coefficients and grid dimensions differ".into(),
        ));
    }
    let mut sup: f64 = 0.0;
    for &t in times {
        for k in 0..grid.node_count() {
            let p = grid.point(k);
            let b = coeffs.b(p, t);
            if !(b.min_eigenvalue(grid.dim()) > 0.0) {
                return Err(Error::EllipticityViolation {
                    point: p,
                    time: t,
                    eigenvalue: b.min_eigenvalue(grid.dim()),
                });
            }
            let q = b.inverse_quadratic(spec.beta(p, t), grid.dim());
            if !q.is_finite() {
                return Err(Error::NonFinite { point: p, time: t });
            }
            sup = sup.max(q);
        }
    }
    let value = horizon * sup;
    if value >= 2.0 {
        return Err(Error::ConditionViolation { value });
    }
    Ok(2.0 - value)
}

/// `delta_star` for monotone mode: the override, or the largest sampled
/// `dt / (tau(t_{k+1}) - tau(t_k))` on `[theta, T]`. Also checks `tau = 0`
/// before `theta` and monotonicity after it.
pub fn monotone_delta_star(spec: &DelaySpec, times: &[f64]) -> Result<f64> {
    let DelayMode::Monotone { theta, delta_star } = spec.mode else {
        return Err(Error::InvalidParameter(
            "delay spec is not in monotone mode".into(),
        ));
    };
    let horizon = *times
        .last()
        .ok_or_else(|| Error::Empty("time levels".into()))?;
    if !(theta >= 0.0 && theta < horizon) {
        return Err(Error::InvalidParameter(format!(
            "theta = {theta} must lie in [0, T)"
        )));
    }
    let tau = spec.targets(times)?;
    let mut worst: f64 = 0.0;
    for k in 0..times.len() {
        if times[k] < theta && tau[k] != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tau({}) = {} must vanish before theta = {theta}",
                times[k], tau[k]
            )));
        }
        if k + 1 < times.len() && times[k] >= theta {
            let rise = tau[k + 1] - tau[k];
            let dt = times[k + 1] - times[k];
            if rise < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "tau decreases after t = {}",
                    times[k]
                )));
            }
            if rise <= 1e-14 * dt {
                worst = f64::INFINITY;
            } else {
                worst = worst.max(dt / rise);
            }
        }
    }
    if let Some(d) = delta_star {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta_star = {d} must be positive"
            )));
        }
        return Ok(d);
    }
    if !worst.is_finite() {
        return Err(Error::InvalidParameter(
            "tau is flat on part of [theta, T]".into(),
        ));
    }
    Ok(worst)
}

/// How a shift was accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceptance {
    /// The energy inequality for `F_K` held on every probe.
    EnergyInequality,
    /// A short power iteration of `R_K` contracted below the budget.
    Contraction,
}

impl fmt::Display for Acceptance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::EnergyInequality => "energy-inequality",
            Self::Contraction => "contraction",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTrial {
    pub shift: f64,
    /// Worst probe value of `sup_t [E + M |w|^2 + M int E] / |h|^2`.
    pub inequality: f64,
    pub power_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionParams {
    pub delta1: f64,
    pub epsilon: f64,
    pub m_weight: f64,
    pub shift: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub c_beta: f64,
    pub accepted_by: Acceptance,
    pub trials: Vec<ShiftTrial>,
}

impl ContractionParams {
    /// `(delta2 + delta3)^2`.
    pub fn bound(&self) -> f64 {
        (self.delta2 + self.delta3).powi(2)
    }

    pub fn admissible(&self) -> bool {
        self.delta2 < 1.0 && self.bound() < 1.0
    }
}

pub fn delta2(delta1: f64, epsilon: f64) -> f64 {
    ((2.0 - delta1) * (0.5 + epsilon)).max(0.0).sqrt()
}

pub fn delta3(c_beta: f64, horizon: f64, m_weight: f64, epsilon: f64) -> f64 {
    if c_beta == 0.0 {
        return 0.0;
    }
    c_beta * (horizon / m_weight * (0.5 + epsilon)).sqrt()
}

/// `epsilon`, `M` and the budget split, before any shift is searched.
pub fn budget(delta1: f64, c_beta: f64, horizon: f64) -> Result<(f64, f64, f64, f64)> {
    if !(delta1 > 0.0 && delta1 <= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "delta1 = {delta1} must lie in (0, 2]"
        )));
    }
    if !(c_beta >= 0.0 && c_beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "C_beta = {c_beta} must be >= 0"
        )));
    }
    let epsilon = if delta1 >= 2.0 {
        0.05
    } else {
        0.05_f64.min(0.5 * delta1 / (2.0 * (2.0 - delta1)))
    };
    let d2 = delta2(delta1, epsilon);
    let target = if d2 >= DEFAULT_TARGET {
        0.5 * (1.0 + d2)
    } else {
        DEFAULT_TARGET
    };
    let m_weight = if c_beta == 0.0 {
        1.0
    } else {
        let d3 = target - d2;
        horizon * c_beta * c_beta * (0.5 + epsilon) / (d3 * d3)
    };
    let d3 = delta3(c_beta, horizon, m_weight, epsilon);
    Ok((epsilon, m_weight, d2, d3))
}

/// Worst probe value of `sup_t [E_b(w) + M |w|^2 + M int_0^t E_b(w)] / |h|^2_{L2(Q)}`
/// with `w = F_K h`.
pub fn inequality_value(
    template: &ParabolicProblem,
    probes: &[Probe],
    shift: f64,
    m_weight: f64,
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::Empty("probe family".into()));
    }
    let values = probes
        .par_iter()
        .map(|p| {
            let h2 = p.forcing.l2_norm().powi(2);
            if h2 == 0.0 {
                return Err(Error::ZeroForcing(format!(
                    "probe {} is identically zero",
                    p.id
                )));
            }
            let problem = template
                .with_forcing(p.forcing.clone())?
                .with_shift(shift)?;
            let w = solve_parabolic(&problem)?;
            let e = level_energies(&w, template.coeffs())?;
            let n = w.level_norms_sq();
            let cum = crate::grid::cumulative_trapezoid(w.times(), &e);
            let sup = (0..e.len())
                .map(|k| e[k] + m_weight * (n[k] + cum[k]))
                .fold(0.0_f64, f64::max);
            Ok(sup / h2)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// Picks `epsilon` and `M` so that `delta2 + delta3` meets the budget, then
/// doubles `K` (from 0) until the energy inequality holds on the probes or a
/// short power iteration of `R_K` contracts below `(delta2 + delta3)^2`.
pub fn choose_contraction_parameters(
    delta1: f64,
    c_beta: f64,
    template: &ParabolicProblem,
    spec: &DelaySpec,
    probes: &[Probe],
    seed: u64,
) -> Result<ContractionParams> {
    let horizon = *template.times().last().expect("levels");
    let (epsilon, m_weight, d2, d3) = budget(delta1, c_beta, horizon)?;
    let bound = (d2 + d3).powi(2);
    let mut trials = Vec::new();
    for shift in shift_ladder() {
        let inequality = inequality_value(template, probes, shift, m_weight)?;
        let mut trial = ShiftTrial {
            shift,
            inequality,
            power_ratio: None,
        };
        let accepted = if inequality <= 0.5 + epsilon {
            Some(Acceptance::EnergyInequality)
        } else {
            let est = empirical_operator_norm(template, spec, shift, 1, seed, 8)?;
            trial.power_ratio = Some(est.upper());
            (est.upper() <= bound).then_some(Acceptance::Contraction)
        };
        trials.push(trial);
        if let Some(accepted_by) = accepted {
            return Ok(ContractionParams {
                delta1,
                epsilon,
                m_weight,
                shift,
                delta2: d2,
                delta3: d3,
                c_beta,
                accepted_by,
                trials,
            });
        }
    }
    Err(Error::SearchCapExceeded(format!(
        "no K <= {SHIFT_CAP} satisfies the energy inequality or contracts; the admissible shift is not constructive"
    )))
}

#[derive(Debug, Clone)]
pub struct DelaySolveReport {
    /// `u = e^{Kt} u_K`.
    pub solution: SpaceTimeField,
    /// `u_K = F_K g`.
    pub shifted: SpaceTimeField,
    pub shift: f64,
    pub iterations: usize,
    /// `|g^{n+1} - g^n|` in L2(Q).
    pub update_norms: Vec<f64>,
    /// Largest ratio of successive update norms.
    pub contraction_factor: f64,
    pub residual: Residual,
}

/// `g^0 = h_K`, `g^{n+1} = h_K + B_K F_K g^n` until the update falls below
/// `tol |h_K|`, then `u = e^{Kt} F_K g`. The template supplies coefficients,
/// levels, scheme and the forcing `h`; its own shift is ignored.
pub fn solve_delay(
    template: &ParabolicProblem,
    spec: &DelaySpec,
    shift: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DelaySolveReport> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidParameter(
            "tol and max_iter must be positive".into(),
        ));
    }
    if let DelayMode::Monotone { .. } = spec.mode {
        monotone_delta_star(spec, template.times())?;
    }
    spec.targets(template.times())?;
    let problem = template.with_shift(shift)?;
    let h_k = template.forcing().scaled_in_time(|t| (-shift * t).exp());
    let scale = h_k.l2_norm();
    let mut g = h_k.clone();
    let mut update_norms = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let w = solve_parabolic(&problem.with_forcing(g.clone())?)?;
        let next = scaled_delay_field(&w, spec, shift)?.axpy(1.0, &h_k)?;
        let update = next.axpy(-1.0, &g)?.l2_norm();
        update_norms.push(update);
        g = next;
        if update <= tol * scale {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NoConvergence {
                iterations,
                last_update: update,
            });
        }
    }
    let w = solve_parabolic(&problem.with_forcing(g)?)?;
    let contraction_factor = update_norms
        .windows(2)
        .filter(|p| p[0] > 0.0)
        .map(|p| p[1] / p[0])
        .fold(0.0, f64::max);
    let residual = shifted_residual(&w, template, spec, shift)?;
    let solution = w.scaled_in_time(|t| (shift * t).exp());
    Ok(DelaySolveReport {
        solution,
        shifted: w,
        shift,
        iterations,
        update_norms,
        contraction_factor,
        residual,
    })
}

fn shifted_residual(
    w: &SpaceTimeField,
    template: &ParabolicProblem,
    spec: &DelaySpec,
    shift: f64,
) -> Result<Residual> {
    let h_k = template.forcing().scaled_in_time(|t| (-shift * t).exp());
    let g = scaled_delay_field(w, spec, shift)?.axpy(1.0, &h_k)?;
    let problem = template.with_forcing(g)?.with_shift(shift)?;
    residual(w, &problem)
}

/// Residual of the discrete shifted delay problem for `u_K = e^{-Kt} u`:
/// time difference minus `(A - K) u_K`, `B_K u_K` and `h_K`, theta-averaged.
pub fn delay_residual(
    u: &SpaceTimeField,
    template: &ParabolicProblem,
    spec: &DelaySpec,
    shift: f64,
) -> Result<Residual> {
    let w = u.scaled_in_time(|t| (-shift * t).exp());
    shifted_residual(&w, template, spec, shift)
}

/// Marches the shifted delay problem level by level. The part of
/// `B_K u_K(t_{k+1})` that falls on the unknown level enters the implicit
/// matrix, so any `tau(t) <= t` is handled. Returns `u = e^{Kt} u_K`.
pub fn solve_delay_causal(
    template: &ParabolicProblem,
    spec: &DelaySpec,
    shift: f64,
) -> Result<SpaceTimeField> {
    let problem = template.with_shift(shift)?;
    let grid = problem.grid().clone();
    let times = problem.times().to_vec();
    let (theta, dt) = (problem.theta(), problem.dt());
    let targets = spec.targets(&times)?;
    let ops = OperatorCache::new(&problem)?;
    let couplings = CouplingCache::new(spec, &grid)?;
    let h_k = template.forcing().scaled_in_time(|t| (-shift * t).exp());
    let n = grid.node_count();

    let mut levels: Vec<Vec<f64>> = vec![vec![0.0; n]];
    // B_K w at level k, known once levels 0..=k are.
    let delay_at = |levels: &[Vec<f64>], k: usize| -> Result<Vec<f64>> {
        let s = targets[k];
        let (j, a) = bracket(&times, s);
        let mut v = levels[j].clone();
        if a > 0.0 {
            for (x, y) in v.iter_mut().zip(&levels[j + 1]) {
                *x = (1.0 - a) * *x + a * y;
            }
        }
        let c = (shift * (s - times[k])).exp();
        let mut out = couplings.at(s)?.matvec(&v);
        out.iter_mut().for_each(|x| *x *= c);
        Ok(out)
    };
    let mut g_prev = {
        let mut b0 = delay_at(&levels, 0)?;
        for (x, h) in b0.iter_mut().zip(h_k.level(0)) {
            *x += h;
        }
        b0
    };
    for k in 0..times.len() - 1 {
        let s = targets[k + 1];
        let (j, a) = bracket(&times, s);
        let c = (shift * (s - times[k + 1])).exp();
        // Split the interpolation weights between known levels and level k+1.
        let mut known = vec![0.0; n];
        let mut implicit_weight = 0.0;
        for (idx, wgt) in [(j, 1.0 - a), (j + 1, a)] {
            if wgt == 0.0 {
                continue;
            }
            if idx <= k {
                for (x, y) in known.iter_mut().zip(&levels[idx]) {
                    *x += wgt * y;
                }
            } else {
                implicit_weight += wgt;
            }
        }
        let coupling = couplings.at(s)?;
        let a_prev = ops.at(k)?;
        let a_next = ops.at(k + 1)?;

        let mut rhs = levels[k].clone();
        if theta < 1.0 {
            a_prev.matvec_add((1.0 - theta) * dt, &levels[k], &mut rhs);
        }
        let b_known = coupling.matvec(&known);
        for i in 0..n {
            let g_next_known = h_k.level(k + 1)[i] + c * b_known[i];
            rhs[i] += dt * ((1.0 - theta) * g_prev[i] + theta * g_next_known);
        }
        let m = if implicit_weight > 0.0 {
            a_next.combine(1.0, &coupling, c * implicit_weight)
        } else {
            a_next.into_owned()
        };
        let sys = ImplicitSystem::factor(&grid, &m, theta * dt, k + 1)?;
        let next = sys.solve(&grid, &rhs, k + 1)?;
        levels.push(next);
        g_prev = delay_at(&levels, k + 1)?;
        for (x, h) in g_prev.iter_mut().zip(h_k.level(k + 1)) {
            *x += h;
        }
    }
    let w = SpaceTimeField::new(grid, times, levels)?;
    Ok(w.scaled_in_time(|t| (shift * t).exp()))
}

fn bracket(times: &[f64], s: f64) -> (usize, f64) {
    let last = times.len() - 1;
    if s <= times[0] {
        return (0, 0.0);
    }
    if s >= times[last] {
        return (last, 0.0);
    }
    let j = times.partition_point(|&t| t <= s) - 1;
    (j, (s - times[j]) / (times[j + 1] - times[j]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormEstimate {
    Converged(f64),
    /// Ratios had not settled; the true asymptotic ratio is believed to lie
    /// in `[lo, hi]`.
    Bracket {
        lo: f64,
        hi: f64,
    },
}

impl NormEstimate {
    pub fn upper(&self) -> f64 {
        match *self {
            Self::Converged(v) => v,
            Self::Bracket { hi, .. } => hi,
        }
    }
}

/// Power iteration of `R_K = B_K F_K` on seeded random fields. Each trial
/// applies `R_K` up to `iterations` times, normalizing in L2(Q); the result
/// is the largest final norm ratio over the trials.
pub fn empirical_operator_norm(
    template: &ParabolicProblem,
    spec: &DelaySpec,
    shift: f64,
    trials: usize,
    seed: u64,
    iterations: usize,
) -> Result<NormEstimate> {
    if trials == 0 || iterations == 0 {
        return Err(Error::InvalidParameter(
            "need at least one trial and one iteration".into(),
        ));
    }
    let problem = template.with_shift(shift)?;
    let grid = problem.grid().clone();
    let times = problem.times().to_vec();
    let results = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
            let levels: Vec<Vec<f64>> = times
                .iter()
                .map(|_| {
                    (0..grid.node_count())
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect()
                })
                .collect();
            let mut g = SpaceTimeField::from_levels_masked(grid.clone(), times.clone(), levels);
            let norm = g.l2_norm();
            g = g.scaled(1.0 / norm);
            let mut ratios = Vec::with_capacity(iterations);
            for _ in 0..iterations {
                let w = solve_parabolic(&problem.with_forcing(g.clone())?)?;
                let next = scaled_delay_field(&w, spec, shift)?;
                let r = next.l2_norm();
                ratios.push(r);
                if r == 0.0 {
                    break;
                }
                let settled = ratios.len() >= 2 && {
                    let prev = ratios[ratios.len() - 2];
                    (r - prev).abs() <= 1e-3 * r
                };
                g = next.scaled(1.0 / r);
                if settled {
                    break;
                }
            }
            Ok(ratios)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut converged = true;
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 0.0;
    let mut finals: f64 = 0.0;
    for ratios in &results {
        let last = *ratios.last().expect("at least one ratio");
        finals = finals.max(last);
        let ok = last == 0.0 || {
            let n = ratios.len();
            n >= 2 && (last - ratios[n - 2]).abs() <= 1e-3 * last
        };
        if !ok {
            converged = false;
            let tail = &ratios[ratios.len().saturating_sub(3)..];
            lo = lo.max(tail.iter().copied().fold(f64::INFINITY, f64::min));
            hi = hi.max(tail.iter().copied().fold(0.0, f64::max));
        }
    }
    if converged {
        Ok(NormEstimate::Converged(finals))
    } else {
        Ok(NormEstimate::Bracket {
            lo,
            hi: hi.max(finals),
        })
    }
}

/// `(lhs, rhs)` of the monotone change of variables:
/// `int_0^T |beta' grad u(tau(t))|^2 dt` against
/// `delta_star int_{tau(theta)}^{tau(T)} |beta' grad u(s)|^2 ds`.
pub fn change_of_variables(u: &SpaceTimeField, spec: &DelaySpec) -> Result<(f64, f64)> {
    let DelayMode::Monotone { theta, .. } = spec.mode else {
        return Err(Error::InvalidParameter(
            "delay spec is not in monotone mode".into(),
        ));
    };
    let delta_star = monotone_delta_star(spec, u.times())?;
    let grid = u.grid();
    let flux_sq = |v: &[f64], s: f64| -> Result<f64> {
        let drift_only = spec.clone().with_constant_beta_bar(0.0);
        let d = delay_coupling(&drift_only, grid, s)?.matvec(v);
        grid.norm_sq(&d)
    };
    let times = u.times();
    let targets = spec.targets(times)?;
    let lhs_vals: Vec<f64> = times
        .iter()
        .zip(&targets)
        .map(|(_, &s)| flux_sq(&u.interpolate(s), s))
        .collect::<Result<_>>()?;
    let lhs = trapezoid(times, &lhs_vals);

    let (a, b) = (spec.tau.target(theta)?, spec.tau.target(u.horizon())?);
    let mut nodes = vec![a];
    nodes.extend(times.iter().copied().filter(|&t| t > a && t < b));
    if b > a {
        nodes.push(b);
    }
    let vals: Vec<f64> = nodes
        .iter()
        .map(|&s| flux_sq(&u.interpolate(s), s))
        .collect::<Result<_>>()?;
    Ok((lhs, delta_star * trapezoid(&nodes, &vals)))
}

/// Discrete `Y^2` proxy: `sqrt(sup_t |u|_{H1}^2 + int_0^T |u|_{H2}^2 dt)`.
pub fn y2_norm(u: &SpaceTimeField) -> Result<f64> {
    let grid = u.grid();
    let mut sup: f64 = 0.0;
    let mut h2 = Vec::with_capacity(u.level_count());
    for level in u.levels() {
        sup = sup.max(grid.h1_norm_sq(level)?);
        h2.push(grid.h2_norm_sq(level)?);
    }
    Ok((sup + trapezoid(u.times(), &h2)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::Preset;
    use crate::grid::uniform_times;
    use std::f64::consts::PI;

    fn heat_template(n: usize, steps: usize) -> ParabolicProblem {
        let g = Arc::new(Grid::interval(-PI, PI, n).unwrap());
        let times = uniform_times(1.0, steps).unwrap();
        let h =
            SpaceTimeField::from_fn(g, times, |p, t| p[0].sin() * (1.0 + t) + (2.0 * p[0]).sin())
                .unwrap();
        ParabolicProblem::new(
            CoefficientSet::preset(Preset::Heat, 1, 1.0).unwrap(),
            h,
            0.0,
            0.5,
        )
        .unwrap()
    }

    fn probes(t: &ParabolicProblem) -> Vec<Probe> {
        let g = t.grid().clone();
        let times = t.times().to_vec();
        (1..=3)
            .map(|m| {
                let mf = m as f64;
                Probe::new(
                    format!("m{m}"),
                    SpaceTimeField::from_fn(g.clone(), times.clone(), move |p, s| {
                        (mf * p[0]).sin() * (mf * mf * s).exp()
                    })
                    .unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn delay_map_values() {
        assert_eq!(DelayMap::Identity.eval(0.7), 0.7);
        assert_eq!(DelayMap::Half.eval(0.7), 0.35);
        assert_eq!(DelayMap::Frozen.eval(0.7), 0.0);
        let s = DelayMap::staircase(8, 1.0).unwrap();
        assert_eq!(s.eval(0.3), 0.25);
        assert_eq!(s.eval(0.25), 0.25);
        assert_eq!(s.eval(1.0), 1.0);
        assert_eq!(DelayMap::parse("staircase(4)", 2.0).unwrap().eval(1.2), 1.0);
        assert!(DelayMap::parse("later", 1.0).is_err());
        let tab = DelayMap::tabulated(vec![0.0, 1.0], vec![0.0, 0.5]).unwrap();
        assert!((tab.eval(0.5) - 0.25).abs() < 1e-15);
        let bad = DelayMap::Custom(Arc::new(|t| t + 0.1));
        assert!(matches!(
            bad.target(0.5),
            Err(Error::DelayOutOfRange { .. })
        ));
    }

    #[test]
    fn operator_examples() {
        let t = heat_template(41, 40);
        let u =
            SpaceTimeField::from_fn(t.grid().clone(), t.times().to_vec(), |p, s| p[0].sin() * s)
                .unwrap();
        let zero = DelaySpec::new(1).unwrap();
        assert!(apply_delay_operator(&u, &zero, 0.5)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));

        let frozen = DelaySpec::new(1)
            .unwrap()
            .with_constant_beta([2.0, 0.0])
            .with_constant_beta_bar(1.0)
            .with_tau(DelayMap::Frozen);
        assert!(apply_delay_operator(&u, &frozen, 0.5)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));

        let ident = DelaySpec::new(1).unwrap().with_constant_beta_bar(1.0);
        let b = apply_delay_operator(&u, &ident, 0.5).unwrap();
        let k = u.level_index(0.5).unwrap();
        for (x, y) in b.iter().zip(u.level(k)) {
            assert!((x - y).abs() < 1e-15);
        }
        let bk = apply_scaled_delay_operator(&u, &ident, 3.0, 0.5).unwrap();
        assert_eq!(b, bk);

        // K = 1, t = 2 (tau = 1): needs a history on [0, 2].
        let g = t.grid().clone();
        let hist =
            SpaceTimeField::from_fn(g, uniform_times(2.0, 8).unwrap(), |p, s| p[0].cos() * s)
                .unwrap();
        let half = DelaySpec::new(1)
            .unwrap()
            .with_constant_beta_bar(1.0)
            .with_tau(DelayMap::Half);
        let v = apply_scaled_delay_operator(&hist, &half, 1.0, 2.0).unwrap();
        let at1 = hist.interpolate(1.0);
        for (x, y) in v.iter().zip(&at1) {
            assert!((x - (-1.0_f64).exp() * y).abs() < 1e-14);
        }
        assert_eq!(
            apply_scaled_delay_operator(&hist, &half, 0.0, 2.0).unwrap(),
            apply_delay_operator(&hist, &half, 2.0).unwrap()
        );
    }

    #[test]
    fn gradient_term_uses_centered_differences() {
        let g = Arc::new(Grid::interval(0.0, 1.0, 101).unwrap());
        let times = uniform_times(1.0, 4).unwrap();
        let u = SpaceTimeField::from_fn(g.clone(), times, |p, s| (PI * p[0]).sin() * s).unwrap();
        let spec = DelaySpec::new(1).unwrap().with_constant_beta([1.0, 0.0]);
        let v = apply_delay_operator(&u, &spec, 1.0).unwrap();
        for k in g.interior() {
            let x = g.point(k)[0];
            assert!((v[k] - PI * (PI * x).cos()).abs() < 1e-3);
        }
    }

    #[test]
    fn condition_examples() {
        let t = heat_template(21, 10);
        let c = t.coeffs();
        let g = t.grid();
        let times = t.times();
        assert_eq!(
            check_delay_condition(&DelaySpec::new(1).unwrap(), c, 1.0, g, times).unwrap(),
            2.0
        );
        let one = DelaySpec::new(1).unwrap().with_constant_beta([1.0, 0.0]);
        assert!((check_delay_condition(&one, c, 1.0, g, times).unwrap() - 1.0).abs() < 1e-15);
        let big = DelaySpec::new(1).unwrap().with_constant_beta([1.5, 0.0]);
        assert!(matches!(
            check_delay_condition(&big, c, 1.0, g, times),
            Err(Error::ConditionViolation { .. })
        ));
        let half = DelaySpec::new(1).unwrap().with_constant_beta([0.5, 0.0]);
        assert!((check_delay_condition(&half, c, 1.0, g, times).unwrap() - 1.75).abs() < 1e-15);
    }

    #[test]
    fn budget_examples() {
        assert!((delta2(1.5, 0.1) - 0.3_f64.sqrt()).abs() < 1e-15);
        assert!((delta2(1.5, 0.1) - 0.54772).abs() < 1e-5);
        let d3 = delta3(1.0, 1.0, 10.0, 0.1);
        assert!((d3 - 0.24495).abs() < 1e-5);
        let d2 = delta2(1.5, 0.1);
        assert!((d2 * d2 + d3 * d3 + 2.0 * d2 * d3 - 0.6283).abs() < 1e-4);
        assert_eq!(delta2(2.0, 0.3), 0.0);
        assert_eq!(delta3(0.0, 1.0, 1.0, 0.3), 0.0);

        let (eps, m, d2, d3) = budget(1.75, 1.0, 1.0).unwrap();
        assert!(d2 < 1.0 && (d2 + d3) <= DEFAULT_TARGET + 1e-12 && m > 0.0 && eps > 0.0);
        let (_, _, d2, d3) = budget(0.01, 0.0, 1.0).unwrap();
        assert!(d2 < 1.0 && d3 == 0.0);
        assert!(budget(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_coefficients_reduce_to_plain_solve() {
        let t = heat_template(81, 200);
        let spec = DelaySpec::new(1).unwrap().with_tau(DelayMap::Half);
        let params = choose_contraction_parameters(2.0, 0.0, &t, &spec, &probes(&t), 7).unwrap();
        assert_eq!(params.bound(), 0.0);
        let rep = solve_delay(&t, &spec, params.shift, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(rep.iterations <= 2);
        let plain = solve_parabolic(&t).unwrap();
        let diff = rep.solution.axpy(-1.0, &plain).unwrap().max_abs();
        assert!(diff <= 1e-12 * plain.max_abs(), "{diff}");
        let est = empirical_operator_norm(&t, &spec, 0.0, 2, 1, 5).unwrap();
        assert_eq!(est, NormEstimate::Converged(0.0));
    }

    #[test]
    fn fixed_point_matches_causal_march() {
        let t = heat_template(61, 120);
        for tau in [
            DelayMap::Half,
            DelayMap::Identity,
            DelayMap::staircase(6, 1.0).unwrap(),
        ] {
            let spec = DelaySpec::new(1)
                .unwrap()
                .with_constant_beta([0.5, 0.0])
                .with_constant_beta_bar(1.0)
                .with_tau(tau.clone());
            let rep = solve_delay(&t, &spec, 2.0, 1e-12, 300).unwrap();
            let causal = solve_delay_causal(&t, &spec, 2.0).unwrap();
            let diff = rep.solution.axpy(-1.0, &causal).unwrap().max_abs();
            assert!(diff < 1e-9 * causal.max_abs(), "{tau:?}: {diff}");
            assert!(rep.residual.relative < 1e-8, "{tau:?}: {:?}", rep.residual);
            assert!(delay_residual(&causal, &t, &spec, 2.0).unwrap().relative < 1e-10);
            // The substitution is exact: u_K = e^{-Kt} u.
            let back = rep.solution.scaled_in_time(|s| (-2.0 * s).exp());
            assert!(
                back.axpy(-1.0, &rep.shifted).unwrap().max_abs() <= 1e-10 * rep.shifted.max_abs()
            );
        }
    }

    #[test]
    fn causal_march_without_shift() {
        let t = heat_template(41, 80);
        let spec = DelaySpec::new(1)
            .unwrap()
            .with_constant_beta([0.5, 0.0])
            .with_tau(DelayMap::Half);
        let u = solve_delay_causal(&t, &spec, 0.0).unwrap();
        let r = delay_residual(&u, &t, &spec, 0.0).unwrap();
        assert!(r.relative < 1e-10, "{r:?}");
    }

    #[test]
    fn monotone_checks() {
        let times = uniform_times(1.0, 100).unwrap();
        let spec = DelaySpec::new(1)
            .unwrap()
            .with_tau(DelayMap::Half)
            .with_mode(DelayMode::Monotone {
                theta: 0.0,
                delta_star: None,
            });
        assert!((monotone_delta_star(&spec, &times).unwrap() - 2.0).abs() < 1e-9);
        let stair = spec.clone().with_tau(DelayMap::staircase(4, 1.0).unwrap());
        assert!(monotone_delta_star(&stair, &times).is_err());
        let shifted = DelaySpec::new(1)
            .unwrap()
            .with_tau(DelayMap::Custom(Arc::new(|t| (t - 0.5).max(0.0))))
            .with_mode(DelayMode::Monotone {
                theta: 0.5,
                delta_star: None,
            });
        assert!((monotone_delta_star(&shifted, &times).unwrap() - 1.0).abs() < 1e-9);
        let wrong = shifted.clone().with_mode(DelayMode::Monotone {
            theta: 0.2,
            delta_star: None,
        });
        // tau = 0 on [0.2, 0.5] is flat.
        assert!(monotone_delta_star(&wrong, &times).is_err());
        assert!(monotone_delta_star(&DelaySpec::new(1).unwrap(), &times).is_err());
    }

    #[test]
    fn change_of_variables_holds_for_half_delay() {
        let t = heat_template(81, 200);
        let spec = DelaySpec::new(1)
            .unwrap()
            .with_constant_beta([0.5, 0.0])
            .with_tau(DelayMap::Half)
            .with_mode(DelayMode::Monotone {
                theta: 0.0,
                delta_star: Some(2.0),
            });
        let u = solve_delay_causal(&t, &spec, 0.0).unwrap();
        let (lhs, rhs) = change_of_variables(&u, &spec).unwrap();
        assert!(lhs > 0.0 && lhs <= 1.1 * rhs, "{lhs} {rhs}");
        // For tau = t/2 the substitution s = t/2 is exact: lhs = rhs up to quadrature.
        assert!((lhs - rhs).abs() < 1e-2 * rhs);
    }

    #[test]
    fn solution_bound_scales_linearly() {
        let t = heat_template(41, 80);
        let spec = DelaySpec::new(1)
            .unwrap()
            .with_constant_beta([0.5, 0.0])
            .with_constant_beta_bar(1.0)
            .with_tau(DelayMap::Half);
        let u = solve_delay_causal(&t, &spec, 0.0).unwrap();
        let t3 = t.with_forcing(t.forcing().scaled(3.0)).unwrap();
        let u3 = solve_delay_causal(&t3, &spec, 0.0).unwrap();
        let (a, b) = (
            y2_norm(&u).unwrap() / t.forcing().l2_norm(),
            y2_norm(&u3).unwrap() / t3.forcing().l2_norm(),
        );
        assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn two_d_delay_zero_coefficients() {
        let g = Arc::new(Grid::rectangle((0.0, 1.0), (0.0, 1.0), 9, 9).unwrap());
        let times = uniform_times(0.5, 20).unwrap();
        let h = SpaceTimeField::from_fn(g, times, |p, s| {
            (PI * p[0]).sin() * (PI * p[1]).sin() * (1.0 + s)
        })
        .unwrap();
        let t = ParabolicProblem::new(
            CoefficientSet::preset(Preset::VariableB, 2, 0.5).unwrap(),
            h,
            0.0,
            0.5,
        )
        .unwrap();
        let spec = DelaySpec::new(2)
            .unwrap()
            .with_constant_beta([0.3, 0.2])
            .with_constant_beta_bar(0.5)
            .with_tau(DelayMap::Half);
        let rep = solve_delay(&t, &spec, 1.0, 1e-12, 200).unwrap();
        let causal = solve_delay_causal(&t, &spec, 1.0).unwrap();
        assert!(rep.solution.axpy(-1.0, &causal).unwrap().max_abs() < 1e-9 * causal.max_abs());
        assert!(rep.residual.relative < 1e-8);
    }
}
