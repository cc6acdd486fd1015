//! Coefficients of the divergence-form operator
//! `A u = div(b grad u) + f . grad u + lambda u`, their ellipticity check and
//! the sampled parameter summary.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};

/// Symmetric matrix of size at most 2. In 1D only `a11` is used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub const fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }

    pub const fn scalar(v: f64) -> Self {
        Self::new(v, 0.0, v)
    }

    pub const fn identity() -> Self {
        Self::scalar(1.0)
    }

    /// Smallest eigenvalue, in closed form from trace and determinant.
    pub fn min_eigenvalue(&self, dim: usize) -> f64 {
        if dim == 1 {
            return self.a11;
        }
        let mean = 0.5 * (self.a11 + self.a22);
        let half_diff = 0.5 * (self.a11 - self.a22);
        mean - half_diff.hypot(self.a12)
    }

    pub fn frobenius(&self, dim: usize) -> f64 {
        if dim == 1 {
            self.a11.abs()
        } else {
            (self.a11 * self.a11 + 2.0 * self.a12 * self.a12 + self.a22 * self.a22).sqrt()
        }
    }

    /// `v' B^{-1} v`, the supremum over unit xi of `(xi' v)^2 / (xi' B xi)`.
    pub fn inverse_quadratic(&self, v: [f64; 2], dim: usize) -> f64 {
        if dim == 1 {
            return v[0] * v[0] / self.a11;
        }
        let det = self.a11 * self.a22 - self.a12 * self.a12;
        (self.a22 * v[0] * v[0] - 2.0 * self.a12 * v[0] * v[1] + self.a11 * v[1] * v[1]) / det
    }

    fn sub(&self, other: &Self) -> Self {
        Self::new(
            self.a11 - other.a11,
            self.a12 - other.a12,
            self.a22 - other.a22,
        )
    }

    fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a22.is_finite()
    }
}

pub type ScalarFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Point, f64) -> [f64; 2] + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(Point, f64) -> Sym2 + Send + Sync>;

/// Evaluators for `b`, `f` and `lambda` on `Q = D x (0, T)`.
///
/// Evaluators must be pure. `time_dependent = false` lets the solver assemble
/// its operator once.
#[derive(Clone)]
pub struct CoefficientSet {
    dim: usize,
    horizon: f64,
    b: MatrixFn,
    f: VectorFn,
    lambda: ScalarFn,
    time_dependent: bool,
    label: String,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("time_dependent", &self.time_dependent)
            .finish_non_exhaustive()
    }
}

impl CoefficientSet {
    /// `b = I`, `f = 0`, `lambda = 0`.
    pub fn new(dim: usize, horizon: f64) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::InvalidParameter(format!(
                "dimension {dim} not supported"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon {horizon} must be positive"
            )));
        }
        Ok(Self {
            dim,
            horizon,
            b: Arc::new(|_, _| Sym2::identity()),
            f: Arc::new(|_, _| [0.0, 0.0]),
            lambda: Arc::new(|_, _| 0.0),
            time_dependent: false,
            label: "custom".into(),
        })
    }

    pub fn with_b(mut self, b: impl Fn(Point, f64) -> Sym2 + Send + Sync + 'static) -> Self {
        self.b = Arc::new(b);
        self
    }

    pub fn with_f(mut self, f: impl Fn(Point, f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        self.f = Arc::new(f);
        self
    }

    pub fn with_lambda(mut self, l: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.lambda = Arc::new(l);
        self
    }

    pub fn time_dependent(mut self, yes: bool) -> Self {
        self.time_dependent = yes;
        self
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn b(&self, p: Point, t: f64) -> Sym2 {
        (self.b)(p, t)
    }

    pub fn f(&self, p: Point, t: f64) -> [f64; 2] {
        (self.f)(p, t)
    }

    pub fn lambda(&self, p: Point, t: f64) -> f64 {
        (self.lambda)(p, t)
    }

    /// Named preset in dimension `dim`.
    pub fn preset(preset: Preset, dim: usize, horizon: f64) -> Result<Self> {
        let base = Self::new(dim, horizon)?.labelled(preset.name());
        Ok(match (preset, dim) {
            (Preset::Heat, _) => base,
            (Preset::VariableB, 1) => base.with_b(|p, _| Sym2::scalar(2.0 + p[0].sin())),
            (Preset::VariableB, _) => base.with_b(|p, _| {
                Sym2::new(
                    2.0 + p[0].sin(),
                    0.3 * (p[0] + p[1]).cos(),
                    2.0 + p[1].cos(),
                )
            }),
            (Preset::Drift, 1) => base
                .with_f(|p, _| [p[0].cos(), 0.0])
                .with_lambda(|p, _| 0.5 + 0.25 * p[0].sin()),
            (Preset::Drift, _) => base
                .with_f(|p, _| [p[0].cos(), p[1].sin()])
                .with_lambda(|p, _| 0.5 + 0.25 * (p[0] * p[1]).sin()),
            (Preset::Full, 1) => base
                .with_b(|p, t| Sym2::scalar(1.5 + 0.5 * p[0].sin() * t.cos()))
                .with_f(|p, t| [0.5 * (p[0] + t).cos(), 0.0])
                .with_lambda(|p, t| -0.5 + 0.5 * (2.0 * p[0]).sin() * (1.0 + t).recip())
                .time_dependent(true),
            (Preset::Full, _) => base
                .with_b(|p, t| {
                    Sym2::new(
                        1.5 + 0.5 * p[0].sin() * t.cos(),
                        0.4 * (p[0] + p[1]).sin(),
                        1.5 + 0.5 * p[1].cos(),
                    )
                })
                .with_f(|p, t| [0.5 * (p[0] + t).cos(), 0.5 * (p[1] - t).sin()])
                .with_lambda(|p, t| -0.5 + 0.5 * (p[0] - p[1]).sin() * (1.0 + t).recip())
                .time_dependent(true),
        })
    }

    /// A seeded smooth 1D coefficient set with `b` in `[0.5, 2]`, `|f| <= 1`
    /// and `|lambda| <= 1`, each built from a normalized three-mode sine series
    /// that drifts slowly in time.
    pub fn random_1d(rng: &mut impl Rng, horizon: f64) -> Result<Self> {
        let sb = SineSeries::sample(rng);
        let sf = SineSeries::sample(rng);
        let sl = SineSeries::sample(rng);
        let f_amp: f64 = rng.gen_range(0.0..=1.0);
        let l_amp: f64 = rng.gen_range(0.0..=1.0);
        Ok(Self::new(1, horizon)?
            .labelled("random")
            .with_b(move |p, t| Sym2::scalar(1.25 + 0.75 * sb.eval(p[0], t)))
            .with_f(move |p, t| [f_amp * sf.eval(p[0], t), 0.0])
            .with_lambda(move |p, t| l_amp * sl.eval(p[0], t))
            .time_dependent(true))
    }
}

/// `s(x, t) = sum a_k sin(k x + phase_k + rate_k t) / sum |a_k|`, so `|s| <= 1`.
#[derive(Debug, Clone, Copy)]
struct SineSeries {
    amp: [f64; 3],
    phase: [f64; 3],
    rate: [f64; 3],
}

impl SineSeries {
    fn sample(rng: &mut impl Rng) -> Self {
        let mut amp = [0.0; 3];
        let mut phase = [0.0; 3];
        let mut rate = [0.0; 3];
        for k in 0..3 {
            amp[k] = rng.gen_range(-1.0..=1.0);
            phase[k] = rng.gen_range(0.0..std::f64::consts::TAU);
            rate[k] = rng.gen_range(-0.5..=0.5);
        }
        if amp.iter().all(|a: &f64| a.abs() < 1e-3) {
            amp[0] = 1.0;
        }
        Self { amp, phase, rate }
    }

    fn eval(&self, x: f64, t: f64) -> f64 {
        let norm: f64 = self.amp.iter().map(|a| a.abs()).sum();
        (0..3)
            .map(|k| self.amp[k] * ((k + 1) as f64 * x + self.phase[k] + self.rate[k] * t).sin())
            .sum::<f64>()
            / norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Heat,
    VariableB,
    Drift,
    Full,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Heat => "heat",
            Preset::VariableB => "variable-b",
            Preset::Drift => "drift",
            Preset::Full => "full",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heat" => Ok(Preset::Heat),
            "variable-b" => Ok(Preset::VariableB),
            "drift" => Ok(Preset::Drift),
            "full" => Ok(Preset::Full),
            other => Err(Error::InvalidParameter(format!(
                "unknown coefficient preset '{other}'"
            ))),
        }
    }
}

/// Time-independent coefficients given on a tensor grid of sample points and
/// interpolated (bi)linearly, with clamping outside the table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCoefficients {
    /// Sample coordinates per axis, strictly increasing.
    pub axes: Vec<Vec<f64>>,
    /// Row-major values with the first axis fastest.
    pub b11: Vec<f64>,
    pub b12: Vec<f64>,
    pub b22: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl TabulatedCoefficients {
    pub fn into_coefficients(self, horizon: f64) -> Result<CoefficientSet> {
        let dim = self.axes.len();
        if dim == 0 || dim > 2 {
            return Err(Error::InvalidParameter(
                "tabulated coefficients need 1 or 2 axes".into(),
            ));
        }
        for (d, ax) in self.axes.iter().enumerate() {
            if ax.len() < 2 || ax.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidParameter(format!(
                    "tabulated axis {d} must have at least 2 increasing samples"
                )));
            }
        }
        let n: usize = self.axes.iter().map(Vec::len).product();
        let fill = |v: &Vec<f64>, name: &str, default: f64, required: bool| -> Result<Vec<f64>> {
            if v.is_empty() && !required {
                return Ok(vec![default; n]);
            }
            if v.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "tabulated '{name}' has {} values, expected {n}",
                    v.len()
                )));
            }
            Ok(v.clone())
        };
        let b11 = fill(&self.b11, "b11", 1.0, true)?;
        let b22 = fill(&self.b22, "b22", 1.0, dim == 2)?;
        let b12 = fill(&self.b12, "b12", 0.0, false)?;
        let f1 = fill(&self.f1, "f1", 0.0, false)?;
        let f2 = fill(&self.f2, "f2", 0.0, false)?;
        let lambda = fill(&self.lambda, "lambda", 0.0, false)?;
        let table = Arc::new(Table { axes: self.axes });
        let (tb, tf, tl) = (table.clone(), table.clone(), table);
        Ok(CoefficientSet::new(dim, horizon)?
            .labelled("tabulated")
            .with_b(move |p, _| Sym2::new(tb.eval(&b11, p), tb.eval(&b12, p), tb.eval(&b22, p)))
            .with_f(move |p, _| [tf.eval(&f1, p), tf.eval(&f2, p)])
            .with_lambda(move |p, _| tl.eval(&lambda, p)))
    }
}

#[derive(Debug)]
struct Table {
    axes: Vec<Vec<f64>>,
}

impl Table {
    fn locate(ax: &[f64], x: f64) -> (usize, f64) {
        if x <= ax[0] {
            return (0, 0.0);
        }
        let last = ax.len() - 1;
        if x >= ax[last] {
            return (last - 1, 1.0);
        }
        let i = ax.partition_point(|&a| a <= x) - 1;
        (i, (x - ax[i]) / (ax[i + 1] - ax[i]))
    }

    fn eval(&self, values: &[f64], p: Point) -> f64 {
        let (i, wx) = Self::locate(&self.axes[0], p[0]);
        if self.axes.len() == 1 {
            return (1.0 - wx) * values[i] + wx * values[i + 1];
        }
        let nx = self.axes[0].len();
        let (j, wy) = Self::locate(&self.axes[1], p[1]);
        let at = |a: usize, b: usize| values[a + nx * b];
        (1.0 - wy) * ((1.0 - wx) * at(i, j) + wx * at(i + 1, j))
            + wy * ((1.0 - wx) * at(i, j + 1) + wx * at(i + 1, j + 1))
    }
}

/// Sampling density used for ellipticity and sup-bound estimates, as a
/// refinement factor of the solver grid.
pub const DEFAULT_REFINE: usize = 4;

fn dense_points(grid: &Grid, refine: usize) -> Vec<Point> {
    let refine = refine.max(1);
    let per_axis: Vec<Vec<f64>> = grid
        .axes()
        .iter()
        .map(|a| {
            let n = (a.count - 1) * refine;
            let h = (a.high - a.low) / n as f64;
            (0..=n)
                .map(|k| if k == n { a.high } else { a.low + k as f64 * h })
                .collect()
        })
        .collect();
    match per_axis.len() {
        1 => per_axis[0].iter().map(|&x| [x, 0.0]).collect(),
        _ => per_axis[1]
            .iter()
            .flat_map(|&y| per_axis[0].iter().map(move |&x| [x, y]))
            .collect(),
    }
}

fn check_dims(coeffs: &CoefficientSet, grid: &Grid) -> Result<()> {
    if coeffs.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "coefficients are {}D but the grid is {}D",
            coeffs.dim(),
            grid.dim()
        )));
    }
    Ok(())
}

/// Minimum over sampled `(x, t)` of the smallest eigenvalue of `b`.
pub fn validate_ellipticity(coeffs: &CoefficientSet, grid: &Grid, times: &[f64]) -> Result<f64> {
    validate_ellipticity_with(coeffs, grid, times, DEFAULT_REFINE)
}

pub fn validate_ellipticity_with(
    coeffs: &CoefficientSet,
    grid: &Grid,
    times: &[f64],
    refine: usize,
) -> Result<f64> {
    check_dims(coeffs, grid)?;
    if times.is_empty() {
        return Err(Error::Empty("no time samples".into()));
    }
    let points = dense_points(grid, refine);
    let mut delta = f64::INFINITY;
    for &t in times {
        for &p in &points {
            let m = coeffs.b(p, t);
            if !m.is_finite() {
                return Err(Error::NonFinite { point: p, time: t });
            }
            let e = m.min_eigenvalue(coeffs.dim());
            if !(e > 0.0) {
                return Err(Error::EllipticityViolation {
                    point: p,
                    time: t,
                    eigenvalue: e,
                });
            }
            delta = delta.min(e);
        }
    }
    Ok(delta)
}

/// Sampled stand-ins for the ess-sup bounds of the parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub horizon: f64,
    pub dim: usize,
    pub extents: Vec<(f64, f64)>,
    pub delta: f64,
    pub sup_b: f64,
    pub sup_f: f64,
    pub sup_lambda: f64,
    pub sup_db_dx: f64,
    pub sup_df_dx: f64,
    pub sup_dlambda_dx: f64,
    pub sup_db_dt: f64,
}

pub fn parameter_summary(
    coeffs: &CoefficientSet,
    grid: &Grid,
    times: &[f64],
) -> Result<ParameterSummary> {
    parameter_summary_with(coeffs, grid, times, DEFAULT_REFINE)
}

/// Sup bounds from dense sampling plus central differences of the
/// evaluators. Time derivatives are one-sided at the ends of `[0, T]`.
pub fn parameter_summary_with(
    coeffs: &CoefficientSet,
    grid: &Grid,
    times: &[f64],
    refine: usize,
) -> Result<ParameterSummary> {
    let delta = validate_ellipticity_with(coeffs, grid, times, refine)?;
    let dim = coeffs.dim();
    let points = dense_points(grid, refine);
    let steps: Vec<f64> = grid
        .axes()
        .iter()
        .map(|a| 1e-6 * (a.high - a.low))
        .collect();
    let horizon = coeffs.horizon();
    let dt = 1e-6 * horizon;

    let finite = |v: f64, p: Point, t: f64| -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { point: p, time: t })
        }
    };

    let mut s = ParameterSummary {
        horizon,
        dim,
        extents: grid.axes().iter().map(|a| (a.low, a.high)).collect(),
        delta,
        sup_b: 0.0,
        sup_f: 0.0,
        sup_lambda: 0.0,
        sup_db_dx: 0.0,
        sup_df_dx: 0.0,
        sup_dlambda_dx: 0.0,
        sup_db_dt: 0.0,
    };
    for &t in times {
        for &p in &points {
            let b = coeffs.b(p, t);
            let f = coeffs.f(p, t);
            let l = coeffs.lambda(p, t);
            let fnorm = f[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
            s.sup_b = s.sup_b.max(finite(b.frobenius(dim), p, t)?);
            s.sup_f = s.sup_f.max(finite(fnorm, p, t)?);
            s.sup_lambda = s.sup_lambda.max(finite(l.abs(), p, t)?);

            let (mut db2, mut df2, mut dl2) = (0.0, 0.0, 0.0);
            for (d, &h) in steps.iter().enumerate() {
                let mut pp = p;
                let mut pm = p;
                pp[d] += h;
                pm[d] -= h;
                let dbd = coeffs.b(pp, t).sub(&coeffs.b(pm, t));
                db2 += (dbd.frobenius(dim) / (2.0 * h)).powi(2);
                let (fp, fm) = (coeffs.f(pp, t), coeffs.f(pm, t));
                for c in 0..dim {
                    df2 += ((fp[c] - fm[c]) / (2.0 * h)).powi(2);
                }
                dl2 += ((coeffs.lambda(pp, t) - coeffs.lambda(pm, t)) / (2.0 * h)).powi(2);
            }
            s.sup_db_dx = s.sup_db_dx.max(finite(db2.sqrt(), p, t)?);
            s.sup_df_dx = s.sup_df_dx.max(finite(df2.sqrt(), p, t)?);
            s.sup_dlambda_dx = s.sup_dlambda_dx.max(finite(dl2.sqrt(), p, t)?);

            let (t0, t1) = ((t - dt).max(0.0), (t + dt).min(horizon));
            if t1 > t0 {
                let dbt = coeffs.b(p, t1).sub(&coeffs.b(p, t0)).frobenius(dim) / (t1 - t0);
                s.sup_db_dt = s.sup_db_dt.max(finite(dbt, p, t)?);
            }
        }
    }
    Ok(s)
}
