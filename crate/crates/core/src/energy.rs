//! Both sides of the exponentially weighted energy inequality
//!
//! ```text
//! e^{-2Kt} E_b(t) + M [e^{-2Kt} |u(t)|^2 + int_0^t e^{-2Ks} E_b(s) ds]
//!     <= C int_0^t e^{-2Ks} |h(s)|^2 ds
//! ```
//!
//! for `u` solving the unshifted problem, and empirical estimates of `C`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{cumulative_trapezoid, trapezoid, Grid, Point, SpaceTimeField};
use crate::solver::{solve_parabolic, ParabolicProblem};

/// Per-level weighted Dirichlet energies `E_b(t_k) = (grad u, b grad u)`.
pub fn level_energies(u: &SpaceTimeField, coeffs: &CoefficientSet) -> Result<Vec<f64>> {
    let grid = u.grid();
    u.times()
        .iter()
        .zip(u.levels())
        .map(|(&t, level)| grid.dirichlet_energy(level, t, |p| coeffs.b(p, t)))
        .collect()
}

/// The `K`-independent ingredients of the inequality: `E_b`, `|u|^2` and
/// `|h|^2` at every level. Any `(K, M)` report is cheap once these exist.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTerms {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub solution_norm_sq: Vec<f64>,
    pub forcing_norm_sq: Vec<f64>,
}

impl EnergyTerms {
    pub fn new(u: &SpaceTimeField, h: &SpaceTimeField, coeffs: &CoefficientSet) -> Result<Self> {
        if !u.same_shape(h) {
            return Err(Error::ShapeMismatch(
                "solution and forcing must share grid and time levels".into(),
            ));
        }
        Ok(Self {
            times: u.times().to_vec(),
            energy: level_energies(u, coeffs)?,
            solution_norm_sq: u.level_norms_sq(),
            forcing_norm_sq: h.level_norms_sq(),
        })
    }

    pub fn report(&self, shift: f64, m_weight: f64) -> Result<EnergyReport> {
        check_weights(shift, m_weight)?;
        let w: Vec<f64> = self
            .times
            .iter()
            .map(|&t| (-2.0 * shift * t).exp())
            .collect();
        let weighted_energy: Vec<f64> = self.energy.iter().zip(&w).map(|(e, w)| e * w).collect();
        let weighted_norm_sq: Vec<f64> = self
            .solution_norm_sq
            .iter()
            .zip(&w)
            .map(|(e, w)| e * w)
            .collect();
        let weighted_forcing: Vec<f64> = self
            .forcing_norm_sq
            .iter()
            .zip(&w)
            .map(|(e, w)| e * w)
            .collect();
        let energy_integral = cumulative_trapezoid(&self.times, &weighted_energy);
        let forcing_integral = cumulative_trapezoid(&self.times, &weighted_forcing);
        let lhs: Vec<f64> = (0..self.times.len())
            .map(|k| weighted_energy[k] + m_weight * (weighted_norm_sq[k] + energy_integral[k]))
            .collect();
        let ratio: Vec<Option<f64>> = lhs
            .iter()
            .zip(&forcing_integral)
            .enumerate()
            .map(|(k, (l, r))| (k > 0 && *r > 0.0).then(|| l / r))
            .collect();
        let sup = ratio
            .iter()
            .enumerate()
            .filter_map(|(k, r)| r.map(|r| (k, r)))
            .fold(None, |best: Option<(usize, f64)>, (k, r)| match best {
                Some((_, b)) if b >= r => best,
                _ => Some((k, r)),
            });
        Ok(EnergyReport {
            shift,
            m_weight,
            times: self.times.clone(),
            energy: self.energy.clone(),
            solution_norm_sq: self.solution_norm_sq.clone(),
            weighted_energy,
            weighted_norm_sq,
            energy_integral,
            lhs,
            rhs: forcing_integral.clone(),
            ratio,
            sup_ratio: sup.map(|(_, r)| r),
            sup_time: sup.map(|(k, _)| self.times[k]),
            forcing_integral,
        })
    }
}

fn check_weights(shift: f64, m_weight: f64) -> Result<()> {
    if !(shift >= 0.0 && shift.is_finite()) {
        return Err(Error::InvalidParameter(format!("K = {shift} must be >= 0")));
    }
    if !(m_weight >= 0.0 && m_weight.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "M = {m_weight} must be >= 0"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub shift: f64,
    pub m_weight: f64,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub solution_norm_sq: Vec<f64>,
    pub weighted_energy: Vec<f64>,
    pub weighted_norm_sq: Vec<f64>,
    /// `int_0^t e^{-2Ks} E_b ds`.
    pub energy_integral: Vec<f64>,
    /// `int_0^t e^{-2Ks} |h|^2 ds`.
    pub forcing_integral: Vec<f64>,
    pub lhs: Vec<f64>,
    /// Same as `forcing_integral`.
    pub rhs: Vec<f64>,
    /// `lhs / rhs` where `t > 0` and `rhs > 0`.
    pub ratio: Vec<Option<f64>>,
    pub sup_ratio: Option<f64>,
    pub sup_time: Option<f64>,
}

impl EnergyReport {
    /// Checks `lhs <= (sup_ratio + slack) rhs` at every level.
    pub fn bound_holds(&self, slack: f64) -> bool {
        let c = self.sup_ratio.unwrap_or(0.0) + slack;
        self.lhs
            .iter()
            .zip(&self.rhs)
            .all(|(l, r)| *l <= c * r + 1e-300)
    }
}

/// Report for an already solved `u`.
pub fn energy_report(
    u: &SpaceTimeField,
    h: &SpaceTimeField,
    coeffs: &CoefficientSet,
    shift: f64,
    m_weight: f64,
) -> Result<EnergyReport> {
    EnergyTerms::new(u, h, coeffs)?.report(shift, m_weight)
}

/// Left side of the inequality at the level `t`.
pub fn energy_lhs(
    u: &SpaceTimeField,
    coeffs: &CoefficientSet,
    shift: f64,
    m_weight: f64,
    t: f64,
) -> Result<f64> {
    check_weights(shift, m_weight)?;
    let k = u.level_index(t)?;
    let times = &u.times()[..=k];
    let grid = u.grid();
    let weighted: Vec<f64> = times
        .iter()
        .zip(u.levels())
        .map(|(&s, level)| {
            grid.dirichlet_energy(level, s, |p| coeffs.b(p, s))
                .map(|e| e * (-2.0 * shift * s).exp())
        })
        .collect::<Result<_>>()?;
    let norm = grid.norm_sq(u.level(k))? * (-2.0 * shift * t).exp();
    Ok(weighted[k] + m_weight * (norm + trapezoid(times, &weighted)))
}

/// Right side `int_0^t e^{-2Ks} |h(s)|^2 ds` at the level `t`.
pub fn energy_rhs(h: &SpaceTimeField, shift: f64, t: f64) -> Result<f64> {
    let k = h.level_index(t)?;
    let times = &h.times()[..=k];
    let w: Vec<f64> = h.level_norms_sq()[..=k]
        .iter()
        .zip(times)
        .map(|(n, &s)| n * (-2.0 * shift * s).exp())
        .collect();
    Ok(trapezoid(times, &w))
}

/// Solves the unshifted problem with forcing `h` (the template's own forcing
/// and shift are ignored) and reports the ratio at every level. The supremum
/// is a lower bound on the best constant for this coefficient set.
pub fn estimate_constant(
    template: &ParabolicProblem,
    h: &SpaceTimeField,
    shift: f64,
    m_weight: f64,
) -> Result<EnergyReport> {
    if h.max_abs() == 0.0 {
        return Err(Error::ZeroForcing("forcing vanishes at every level".into()));
    }
    let problem = template.with_forcing(h.clone())?.with_shift(0.0)?;
    let u = solve_parabolic(&problem)?;
    let report = energy_report(&u, h, template.coeffs(), shift, m_weight)?;
    if report.sup_ratio.is_none() {
        return Err(Error::ZeroForcing(
            "right-hand side is zero at every level".into(),
        ));
    }
    Ok(report)
}

/// A named probe forcing.
#[derive(Debug, Clone)]
pub struct Probe {
    pub id: String,
    pub forcing: SpaceTimeField,
}

impl Probe {
    pub fn new(id: impl Into<String>, forcing: SpaceTimeField) -> Self {
        Self {
            id: id.into(),
            forcing,
        }
    }
}

/// Solves each probe once; `u` does not depend on `K`.
pub fn probe_terms(template: &ParabolicProblem, family: &[Probe]) -> Result<Vec<EnergyTerms>> {
    if family.is_empty() {
        return Err(Error::Empty("probe family".into()));
    }
    for p in family {
        if p.forcing.max_abs() == 0.0 {
            return Err(Error::ZeroForcing(format!(
                "probe {} is identically zero",
                p.id
            )));
        }
    }
    family
        .par_iter()
        .map(|p| {
            let problem = template.with_forcing(p.forcing.clone())?.with_shift(0.0)?;
            let u = solve_parabolic(&problem)?;
            EnergyTerms::new(&u, &p.forcing, template.coeffs())
        })
        .collect()
}

/// Wavenumbers `2 pi m / L` per axis, so the mode vanishes on the boundary
/// (on `(-pi, pi)` this is `sin(m x)` up to sign).
fn wavenumbers(grid: &Grid, m: u32) -> Vec<(f64, f64)> {
    grid.axes()
        .iter()
        .map(|a| (2.0 * PI * f64::from(m) / (a.high - a.low), a.low))
        .collect()
}

/// Product of `sin(k_i (x_i - low_i))` and its Laplacian eigenvalue.
pub fn mode_shape(grid: &Grid, m: u32) -> (impl Fn(Point) -> f64 + Send + Sync + Clone, f64) {
    let ks = wavenumbers(grid, m);
    let rate = ks.iter().map(|(k, _)| k * k).sum();
    let shape = move |p: Point| {
        ks.iter()
            .enumerate()
            .map(|(d, (k, low))| (k * (p[d] - low)).sin())
            .product()
    };
    (shape, rate)
}

/// The extremal forcing `phi_m(x) e^{rate t}` for the heat operator.
pub fn extremal_probe(grid: &Arc<Grid>, times: &[f64], m: u32) -> Result<Probe> {
    let (shape, rate) = mode_shape(grid, m);
    let h = SpaceTimeField::from_fn(grid.clone(), times.to_vec(), move |p, t| {
        shape(p) * (rate * t).exp()
    })?;
    Ok(Probe::new(format!("mode-{m}"), h))
}

/// Extremal modes, optionally followed by a constant mode, a ramped second
/// mode, a localized bump and a seeded random Fourier forcing.
pub fn standard_probes(
    grid: &Arc<Grid>,
    times: &[f64],
    modes: &[u32],
    extras: bool,
    seed: u64,
) -> Result<Vec<Probe>> {
    let mut out = modes
        .iter()
        .map(|&m| extremal_probe(grid, times, m))
        .collect::<Result<Vec<_>>>()?;
    if extras {
        let (s1, _) = mode_shape(grid, 1);
        let (s2, _) = mode_shape(grid, 2);
        let t = times.to_vec();
        let c = s1.clone();
        out.push(Probe::new(
            "constant",
            SpaceTimeField::from_fn(grid.clone(), t.clone(), move |p, _| c(p))?,
        ));
        out.push(Probe::new(
            "ramp",
            SpaceTimeField::from_fn(grid.clone(), t.clone(), move |p, s| s * s2(p))?,
        ));
        let b = s1.clone();
        out.push(Probe::new(
            "bump",
            SpaceTimeField::from_fn(grid.clone(), t.clone(), move |p, s| {
                b(p).powi(8) * (1.0 + s)
            })?,
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms: Vec<(f64, f64, f64)> = (0..5)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.0..8.0),
                    rng.gen_range(0.0..TAU),
                )
            })
            .collect();
        let shapes: Vec<_> = (1..=5).map(|m| mode_shape(grid, m).0).collect();
        out.push(Probe::new(
            "random",
            SpaceTimeField::from_fn(grid.clone(), t, move |p, s| {
                terms
                    .iter()
                    .zip(&shapes)
                    .map(|((a, w, ph), f)| a * f(p) * (w * s + ph).cos())
                    .sum()
            })?,
        ));
    }
    if out.is_empty() {
        return Err(Error::Empty("probe family".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub shift: f64,
    pub probe: String,
    pub report: EnergyReport,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub m_weight: f64,
    pub shifts: Vec<f64>,
    /// Worst case over the probes and levels, per shift.
    pub sup_ratios: Vec<f64>,
    pub argmin_shift: f64,
    pub min_value: f64,
    pub cells: Vec<SweepCell>,
}

/// [`sweep_k`] from precomputed probe terms; `ids` labels the cells.
pub fn sweep_terms(
    terms: &[EnergyTerms],
    ids: &[String],
    shifts: &[f64],
    m_weight: f64,
) -> Result<SweepResult> {
    if shifts.is_empty() {
        return Err(Error::Empty("K list".into()));
    }
    let mut cells = Vec::with_capacity(shifts.len() * terms.len());
    let mut sup_ratios = Vec::with_capacity(shifts.len());
    for &k in shifts {
        let mut worst = f64::NEG_INFINITY;
        for (t, id) in terms.iter().zip(ids) {
            let report = t.report(k, m_weight)?;
            if let Some(r) = report.sup_ratio {
                worst = worst.max(r);
            }
            cells.push(SweepCell {
                shift: k,
                probe: id.clone(),
                report,
            });
        }
        if worst == f64::NEG_INFINITY {
            return Err(Error::ZeroForcing(format!(
                "every ratio is undefined at K = {k}"
            )));
        }
        sup_ratios.push(worst);
    }
    let (best, min_value) =
        sup_ratios
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
            );
    Ok(SweepResult {
        m_weight,
        shifts: shifts.to_vec(),
        sup_ratios,
        argmin_shift: shifts[best],
        min_value,
        cells,
    })
}

/// For each `K`, the supremum over probes and levels of the ratio; then the
/// minimum over `K`. This is a probe-family estimate of the best constant,
/// not a supremum over all forcings.
pub fn sweep_k(
    template: &ParabolicProblem,
    family: &[Probe],
    shifts: &[f64],
    m_weight: f64,
) -> Result<SweepResult> {
    if shifts.is_empty() {
        return Err(Error::Empty("K list".into()));
    }
    let terms = probe_terms(template, family)?;
    let ids: Vec<String> = family.iter().map(|p| p.id.clone()).collect();
    sweep_terms(&terms, &ids, shifts, m_weight)
}

/// Largest shift tried by [`search_shift`].
pub const SHIFT_CAP: f64 = 16384.0;

/// `0, 1, 2, 4, ..., 2^14`.
pub fn shift_ladder() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((0..=14).map(|p| f64::from(1u32 << p)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSearch {
    pub m_weight: f64,
    pub target: f64,
    /// `(K, worst ratio over the probes)` for every shift tried.
    pub tried: Vec<(f64, f64)>,
    pub shift: f64,
    pub sup_ratio: f64,
}

/// Doubling search for the first `K` on [`shift_ladder`] with worst-case
/// ratio `<= 1/2 + eps`, from precomputed probe terms.
pub fn search_shift_terms(terms: &[EnergyTerms], m_weight: f64, eps: f64) -> Result<ShiftSearch> {
    if terms.is_empty() {
        return Err(Error::Empty("probe family".into()));
    }
    let target = 0.5 + eps;
    let mut tried = Vec::new();
    for k in shift_ladder() {
        let mut worst = f64::NEG_INFINITY;
        for t in terms {
            if let Some(r) = t.report(k, m_weight)?.sup_ratio {
                worst = worst.max(r);
            }
        }
        tried.push((k, worst));
        if worst <= target {
            return Ok(ShiftSearch {
                m_weight,
                target,
                tried,
                shift: k,
                sup_ratio: worst,
            });
        }
    }
    Err(Error::SearchCapExceeded(format!(
        "no K <= {SHIFT_CAP} brings the ratio below {target}"
    )))
}

pub fn search_shift(
    template: &ParabolicProblem,
    family: &[Probe],
    m_weight: f64,
    eps: f64,
) -> Result<ShiftSearch> {
    search_shift_terms(&probe_terms(template, family)?, m_weight, eps)
}

/// `E_b(t) / (t |h(., 0)|^2)`.
pub fn asymptotic_ratio(
    u: &SpaceTimeField,
    h: &SpaceTimeField,
    coeffs: &CoefficientSet,
    t: f64,
) -> Result<f64> {
    let h0 = h.grid().norm_sq(h.level(0))?;
    if h0 == 0.0 {
        return Err(Error::ZeroForcing("forcing vanishes at t = 0".into()));
    }
    let k = u.level_index(t)?;
    if k == 0 {
        return Err(Error::InvalidParameter("t must be a positive level".into()));
    }
    let e = u
        .grid()
        .dirichlet_energy(u.level(k), t, |p| coeffs.b(p, t))?;
    Ok(e / (t * h0))
}

/// `p(h, t) = (1/t) int_0^t |h(s)|^2 ds`.
pub fn time_averaged_forcing(h: &SpaceTimeField, t: f64) -> Result<f64> {
    let k = h.level_index(t)?;
    if k == 0 {
        return Err(Error::InvalidParameter("t must be a positive level".into()));
    }
    Ok(energy_rhs(h, 0.0, t)? / t)
}
