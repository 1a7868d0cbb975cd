//! Jacobi (Hill) equations along extremals, conjugate points and the
//! Riccati limit `y+`.

use serde::Serialize;

use crate::curvature::{CurvatureField, CurvatureKind};
use crate::error::{NavError, Result};
use crate::geometry::Rect;
use crate::hamiltonian::{sample_of, ExtremalTrajectory, FiberPoint, Problem, Sampler};
use crate::ode::{integrate, single_step, SolverOptions, SolverStats, StepData};
use crate::par::{self, Execution};

/// Sign changes of `gamma` before this time are ignored.
pub const T_MIN: f64 = 1e-6;
/// Bisection stops once the bracket is shorter than this.
pub const BRACKET_WIDTH: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JacobiSample {
    pub t: f64,
    pub beta: f64,
    pub beta_dot: f64,
    pub gamma: f64,
    pub gamma_dot: f64,
    pub kappa: f64,
}

impl JacobiSample {
    pub fn wronskian(&self) -> f64 {
        self.beta * self.gamma_dot - self.beta_dot * self.gamma
    }

    /// `|W - 1|` relative to the size of the two products forming `W`.
    pub fn wronskian_error(&self) -> f64 {
        let scale = (self.beta * self.gamma_dot).abs() + (self.beta_dot * self.gamma).abs();
        (self.wronskian() - 1.0).abs() / scale.max(1.0)
    }
}

/// Solutions of `x'' + kappa_t x = 0` along an extremal, with
/// `beta(0) = 1, beta'(0) = 0` and `gamma(0) = 0, gamma'(0) = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct JacobiArc {
    pub along: ExtremalTrajectory,
    pub samples: Vec<JacobiSample>,
    /// Largest normalised Wronskian error, see [`JacobiSample::wronskian_error`].
    pub wronskian_drift: f64,
    /// Largest `|W - 1|`.
    pub wronskian_drift_abs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConjugateBracket {
    pub lo: f64,
    pub hi: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugateReport {
    pub start: FiberPoint,
    pub t_max: f64,
    pub first_conjugate_time: Option<f64>,
    pub bracket: Option<ConjugateBracket>,
    /// Time actually reached (`t_max` unless a conjugate point stopped the scan).
    pub t_reached: f64,
    pub wronskian_drift: f64,
    pub solver_stats: SolverStats,
}

/// The extremal flow augmented with the two Hill equations.
#[derive(Clone)]
pub struct HillSystem {
    problem: Problem,
    curvature: CurvatureField,
    dim: usize,
}

impl HillSystem {
    /// `region` is where a Zermelo drift is checked for zeros before dualizing.
    pub fn new(problem: &Problem, region: Option<Rect>) -> Result<Self> {
        Ok(HillSystem {
            problem: problem.clone(),
            curvature: CurvatureField::new(problem, CurvatureKind::Cozermelo, region)?,
            dim: problem.state_dim(),
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn initial_state(&self, start: &FiberPoint) -> Result<Vec<f64>> {
        let h = self.problem.hamiltonian(&self.problem.covector_of(start)?)?;
        if (h - 1.0).abs() > 1e-9 {
            return Err(NavError::validation(format!("start is not on the level set (h = {h})")));
        }
        let mut y = self.problem.initial_state(start)?;
        y.extend_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        Ok(y)
    }

    pub fn kappa(&self, state: &[f64]) -> Result<f64> {
        self.curvature.eval_state(&state[..self.dim])
    }

    pub fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let d = self.dim;
        self.problem.extremal_rhs(&y[..d], &mut dy[..d])?;
        let k = self.kappa(y)?;
        dy[d] = y[d + 1];
        dy[d + 1] = -k * y[d];
        dy[d + 2] = y[d + 3];
        dy[d + 3] = -k * y[d + 2];
        Ok(())
    }

    fn gamma_index(&self) -> usize {
        self.dim + 2
    }

    fn jacobi_sample(&self, t: f64, y: &[f64]) -> Result<JacobiSample> {
        let d = self.dim;
        Ok(JacobiSample {
            t,
            beta: y[d],
            beta_dot: y[d + 1],
            gamma: y[d + 2],
            gamma_dot: y[d + 3],
            kappa: self.kappa(y)?,
        })
    }

    /// Bisects a sign change of `gamma` inside one accepted step, re-integrating
    /// from the step start with single fixed steps.
    fn refine<F>(&self, rhs: &F, s: &StepData) -> Result<ConjugateBracket>
    where
        F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let g = self.gamma_index();
        let mut b = ConjugateBracket { lo: s.t0, hi: s.t1(), gamma_lo: s.y0[g], gamma_hi: s.y1[g] };
        while b.hi - b.lo > BRACKET_WIDTH {
            let m = 0.5 * (b.lo + b.hi);
            let gm = single_step(rhs, s.t0, &s.y0, m - s.t0)?[g];
            if gm == 0.0 {
                return Ok(ConjugateBracket { lo: m, hi: m, gamma_lo: 0.0, gamma_hi: 0.0 });
            }
            if gm.signum() == b.gamma_lo.signum() {
                b.lo = m;
                b.gamma_lo = gm;
            } else {
                b.hi = m;
                b.gamma_hi = gm;
            }
        }
        Ok(b)
    }

    fn crosses(&self, s: &StepData) -> bool {
        let g = self.gamma_index();
        s.t1() > T_MIN && (s.y0[g] * s.y1[g] < 0.0 || (s.y1[g] == 0.0 && s.y0[g] != 0.0))
    }
}

struct Run {
    stats: SolverStats,
    t_reached: f64,
    conjugate: Option<ConjugateBracket>,
    wronskian: (f64, f64),
}

/// Integrates the augmented system; `visit` sees every accepted step. With
/// `stop_at_conjugate` the scan ends at the first refined conjugate point.
fn run<V>(
    sys: &HillSystem,
    start: &FiberPoint,
    t_max: f64,
    opts: &SolverOptions,
    stop_at_conjugate: bool,
    mut visit: V,
) -> Result<Run>
where
    V: FnMut(&StepData) -> Result<()>,
{
    let y0 = sys.initial_state(start)?;
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| sys.rhs(y, dy);
    let mut conjugate = None;
    let mut wronskian = (0.0f64, 0.0f64);
    let d = sys.dim;
    let guard = |y: &[f64]| sys.problem.guard(&y[..d]);
    let (stats, t_reached, _) = integrate(rhs, 0.0, &y0, t_max, *opts, guard, |s, f| {
        visit(s)?;
        let j = JacobiSample {
            t: s.t1(),
            beta: s.y1[d],
            beta_dot: s.y1[d + 1],
            gamma: s.y1[d + 2],
            gamma_dot: s.y1[d + 3],
            kappa: 0.0,
        };
        wronskian.0 = wronskian.0.max(j.wronskian_error());
        wronskian.1 = wronskian.1.max((j.wronskian() - 1.0).abs());
        if conjugate.is_none() && sys.crosses(s) {
            conjugate = Some(sys.refine(f, s)?);
            if stop_at_conjugate {
                return Ok(false);
            }
        }
        Ok(true)
    })?;
    let t_reached = match (&conjugate, stop_at_conjugate) {
        (Some(b), true) => b.hi,
        _ => t_reached,
    };
    Ok(Run { stats, t_reached, conjugate, wronskian })
}

/// Integrates the extremal through `start` together with its Hill equations
/// on `[0, t_max]`. Samples follow `opts.output_step` like
/// [`crate::hamiltonian::integrate_extremal`].
pub fn jacobi_solve(problem: &Problem, start: &FiberPoint, t_max: f64, opts: &SolverOptions) -> Result<JacobiArc> {
    jacobi_solve_with(&HillSystem::new(problem, None)?, start, t_max, opts)
}

pub fn jacobi_solve_with(sys: &HillSystem, start: &FiberPoint, t_max: f64, opts: &SolverOptions) -> Result<JacobiArc> {
    let d = sys.dim;
    let y0 = sys.initial_state(start)?;
    let mut traj = vec![sample_of(&sys.problem, 0.0, &y0[..d])?];
    let mut samples = vec![sys.jacobi_sample(0.0, &y0)?];
    let mut sampler = Sampler::new(opts);
    let r = run(sys, start, t_max, opts, false, |s| {
        for (t, y) in sampler.times(s, t_max) {
            let y = y.unwrap_or_else(|| s.y1.clone());
            traj.push(sample_of(&sys.problem, t, &y[..d])?);
            samples.push(sys.jacobi_sample(t, &y)?);
        }
        Ok(())
    })?;
    let hamiltonian_drift = traj.iter().map(|s| s.h_residual.abs()).fold(0.0, f64::max);
    let wronskian_drift = samples.iter().map(JacobiSample::wronskian_error).fold(r.wronskian.0, f64::max);
    let wronskian_drift_abs = samples.iter().map(|j| (j.wronskian() - 1.0).abs()).fold(r.wronskian.1, f64::max);
    Ok(JacobiArc {
        along: ExtremalTrajectory { samples: traj, hamiltonian_drift, solver_stats: r.stats },
        samples,
        wronskian_drift,
        wronskian_drift_abs,
    })
}

/// First positive zero of `gamma` on `(T_MIN, t_max]`, if any.
pub fn first_conjugate_time(
    problem: &Problem,
    start: &FiberPoint,
    t_max: f64,
    opts: &SolverOptions,
) -> Result<ConjugateReport> {
    first_conjugate_time_with(&HillSystem::new(problem, None)?, start, t_max, opts)
}

pub fn first_conjugate_time_with(
    sys: &HillSystem,
    start: &FiberPoint,
    t_max: f64,
    opts: &SolverOptions,
) -> Result<ConjugateReport> {
    let r = run(sys, start, t_max, opts, true, |_| Ok(()))?;
    match r.conjugate {
        Some(b) => log::debug!("conjugate point bracketed in [{}, {}] from theta = {}", b.lo, b.hi, start.theta),
        None => log::debug!("no conjugate point up to t = {} from theta = {}", r.t_reached, start.theta),
    }
    Ok(ConjugateReport {
        start: *start,
        t_max,
        first_conjugate_time: r.conjugate.map(|b| 0.5 * (b.lo + b.hi)),
        bracket: r.conjugate,
        t_reached: r.t_reached,
        wronskian_drift: r.wronskian.0,
        solver_stats: r.stats,
    })
}

/// Conjugate scan for several fiber angles over the same base point.
pub fn conjugate_sweep(
    sys: &HillSystem,
    q: crate::geometry::Point,
    thetas: &[f64],
    t_max: f64,
    opts: &SolverOptions,
    exec: Execution,
) -> Result<Vec<ConjugateReport>> {
    par::try_map(exec, thetas.len(), |i| {
        first_conjugate_time_with(sys, &FiberPoint { q, theta: thetas[i] }, t_max, opts)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RiccatiEstimate {
    /// `y_T = beta(T) / gamma(T)`.
    pub estimate: f64,
    pub converged: bool,
    /// `|y_T - y_{3T/4}|`.
    pub tail_variation: f64,
    /// `(t, y_t)` at `T/2`, `3T/4`, `T`.
    pub checkpoints: [(f64, f64); 3],
    /// Non-increasing across checkpoints, with ties allowed up to 4 ulp (on
    /// strongly hyperbolic arcs the decrease drops below f64 resolution).
    pub monotone: bool,
    /// Strictly decreasing across checkpoints.
    pub strictly_resolved: bool,
}

/// Finite-horizon estimate of `y+` from `y_t = beta / gamma`.
pub fn riccati_yplus(
    problem: &Problem,
    start: &FiberPoint,
    t: f64,
    convergence_tol: f64,
    opts: &SolverOptions,
) -> Result<RiccatiEstimate> {
    riccati_yplus_with(&HillSystem::new(problem, None)?, start, t, convergence_tol, opts)
}

pub fn riccati_yplus_with(
    sys: &HillSystem,
    start: &FiberPoint,
    t: f64,
    convergence_tol: f64,
    opts: &SolverOptions,
) -> Result<RiccatiEstimate> {
    if !(t > 0.0) {
        return Err(NavError::validation("horizon must be positive"));
    }
    let times = [0.5 * t, 0.75 * t, t];
    let mut ys = [f64::NAN; 3];
    let (b, g) = (sys.dim, sys.dim + 2);
    let r = run(sys, start, t, opts, true, |s| {
        for (k, &tk) in times.iter().enumerate() {
            if tk > s.t0 && tk <= s.t1() + 1e-12 * tk {
                let y = if tk == s.t1() { s.y1.clone() } else { s.dense(tk) };
                ys[k] = y[b] / y[g];
            }
        }
        Ok(())
    })?;
    if let Some(c) = r.conjugate {
        return Err(NavError::validation(format!("conjugate point at t = {} inside (0, {t}]", 0.5 * (c.lo + c.hi))));
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(NavError::numerical(format!("Riccati checkpoints not resolved: {ys:?}")));
    }
    let tie = |a: f64, b: f64| (a - b).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs());
    let monotone = ys.windows(2).all(|w| w[0] > w[1] || tie(w[0], w[1]));
    let strictly_resolved = ys.windows(2).all(|w| w[0] > w[1]);
    let tail_variation = (ys[2] - ys[1]).abs();
    Ok(RiccatiEstimate {
        estimate: ys[2],
        converged: tail_variation < convergence_tol,
        tail_variation,
        checkpoints: [(times[0], ys[0]), (times[1], ys[1]), (times[2], ys[2])],
        monotone,
        strictly_resolved,
    })
}

/// Largest residuals of the Riccati equation along an arc, from five-point
/// differences over uniformly spaced samples. Returns
/// `(max |u' + u^2 + kappa|, max |y' + y^2 + kappa|)` with `u = gamma'/gamma`
/// and `y = beta/gamma`; the first vanishes for every Hill solution, the
/// second only for constant curvature. Points where `|gamma| < gamma_min`
/// anywhere on the stencil are skipped.
pub fn riccati_residual(arc: &JacobiArc, gamma_min: f64) -> Result<(f64, f64)> {
    let s = &arc.samples;
    if s.len() < 5 {
        return Err(NavError::validation("too few samples for differences"));
    }
    let h = s[1].t - s[0].t;
    if s.windows(2).take(s.len() - 2).any(|w| ((w[1].t - w[0].t) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(NavError::validation("samples are not uniformly spaced; set an output step"));
    }
    let (mut ru, mut ry) = (0.0f64, 0.0f64);
    for i in 2..s.len() - 2 {
        let w = &s[i - 2..=i + 2];
        if w.iter().any(|j| j.gamma.abs() < gamma_min) || (w[4].t - w[3].t - h).abs() > 1e-9 * h.max(1.0) {
            continue;
        }
        let d = |f: &dyn Fn(&JacobiSample) -> f64| (f(&w[0]) - 8.0 * f(&w[1]) + 8.0 * f(&w[3]) - f(&w[4])) / (12.0 * h);
        let u = |j: &JacobiSample| j.gamma_dot / j.gamma;
        let y = |j: &JacobiSample| j.beta / j.gamma;
        let k = s[i].kappa;
        ru = ru.max((d(&u) + u(&s[i]).powi(2) + k).abs());
        ry = ry.max((d(&y) + y(&s[i]).powi(2) + k).abs());
    }
    Ok((ru, ry))
}
