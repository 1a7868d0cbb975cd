//! Zermelo and co-Zermelo Hamiltonians, their flows, and extremal integration.

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::Serialize;

use crate::drift::{omega_jet, validate_drift, DriftKind, DriftSpec, FrameField};
use crate::error::{NavError, Result};
use crate::geometry::{Chart, FrameMetric, LocalGeometry, Point, Surface};
use crate::jet::{Dual2, Scalar};
use crate::ode::{integrate, SolverOptions, SolverStats, StepData};

/// Integrations stop this close to a chart boundary (or to the pole of a
/// stereographic chart, in chordal distance).
pub const GUARD_DISTANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CotangentPoint {
    pub q: Point,
    /// Chart components of the covector.
    pub p: [f64; 2],
}

/// A point of the level set `{h = 1}` in angle coordinates.
///
/// For the co-Zermelo problem the covector is `Y + cos(theta) e1* + sin(theta) e2*`.
/// For the Zermelo problem `theta` is the polar angle of the covector in the
/// coframe: `lambda = rho (cos(theta) e1* + sin(theta) e2*)` with
/// `rho = 1 / (1 + <X, u>)`, `u = (cos(theta), sin(theta))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberPoint {
    pub q: Point,
    pub theta: f64,
}

impl FiberPoint {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        FiberPoint { q: Point::new(x, y), theta }
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    theta.rem_euclid(TAU)
}

/// Co-Zermelo problem of a one-form `Y` with `|Y|_g < 1`.
#[derive(Clone)]
pub struct CoZermelo {
    pub metric: Arc<dyn FrameMetric>,
    pub form: Arc<dyn FrameField>,
}

/// Zermelo problem of a vector field `X` with `|X|_g < 1`.
#[derive(Clone)]
pub struct Zermelo {
    pub metric: Arc<dyn FrameMetric>,
    pub vector: Arc<dyn FrameField>,
}

#[derive(Clone)]
pub enum Problem {
    CoZermelo(CoZermelo),
    Zermelo(Zermelo),
}

impl CoZermelo {
    /// Validates the drift on the default sampling grid.
    pub fn new(surface: Surface, drift: DriftSpec) -> Result<Self> {
        if drift.kind != DriftKind::OneForm {
            return Err(NavError::validation("the co-Zermelo problem needs a one-form drift"));
        }
        validate_drift(&surface.chart, &drift)?;
        Ok(CoZermelo { metric: Arc::new(surface), form: Arc::new(drift) })
    }

    /// Zero drift: the geodesic flow of the surface.
    pub fn riemannian(surface: Surface) -> Self {
        CoZermelo { metric: Arc::new(surface), form: Arc::new(DriftSpec::zero(DriftKind::OneForm)) }
    }

    pub fn from_parts(metric: Arc<dyn FrameMetric>, form: Arc<dyn FrameField>) -> Self {
        CoZermelo { metric, form }
    }

    pub fn hamiltonian(&self, lambda: &CotangentPoint) -> Result<f64> {
        h_cozermelo(&*self.metric, &*self.form, lambda)
    }

    pub fn covector_of(&self, fp: &FiberPoint) -> Result<CotangentPoint> {
        let g = LocalGeometry::at(&*self.metric, fp.q)?;
        let u = self.form.frame_values(g.q)?;
        let (s, c) = fp.theta.sin_cos();
        Ok(CotangentPoint { q: fp.q, p: g.covector_from_frame([u[0] + c, u[1] + s]) })
    }

    /// Angle coordinates of the covector scaled onto `{h = 1}`.
    pub fn fiber_point_of(&self, lambda: &CotangentPoint) -> Result<FiberPoint> {
        let h = self.hamiltonian(lambda)?;
        if !(h > 0.0) {
            return Err(NavError::validation("zero covector has no fiber angle"));
        }
        let g = LocalGeometry::at(&*self.metric, lambda.q)?;
        let u = self.form.frame_values(g.q)?;
        let pf = g.covector_to_frame(lambda.p);
        let theta = (pf[1] / h - u[1]).atan2(pf[0] / h - u[0]);
        Ok(FiberPoint { q: lambda.q, theta: wrap_angle(theta) })
    }
}

impl Zermelo {
    pub fn new(surface: Surface, drift: DriftSpec) -> Result<Self> {
        if drift.kind != DriftKind::VectorField {
            return Err(NavError::validation("the Zermelo problem needs a vector-field drift"));
        }
        validate_drift(&surface.chart, &drift)?;
        Ok(Zermelo { metric: Arc::new(surface), vector: Arc::new(drift) })
    }

    pub fn from_parts(metric: Arc<dyn FrameMetric>, vector: Arc<dyn FrameField>) -> Self {
        Zermelo { metric, vector }
    }

    pub fn hamiltonian(&self, lambda: &CotangentPoint) -> Result<f64> {
        h_zermelo(&*self.metric, &*self.vector, lambda)
    }

    pub fn covector_of(&self, fp: &FiberPoint) -> Result<CotangentPoint> {
        let g = LocalGeometry::at(&*self.metric, fp.q)?;
        let x = self.vector.frame_values(g.q)?;
        let (s, c) = fp.theta.sin_cos();
        let rho = 1.0 / (1.0 + x[0] * c + x[1] * s);
        Ok(CotangentPoint { q: fp.q, p: g.covector_from_frame([rho * c, rho * s]) })
    }

    pub fn fiber_point_of(&self, lambda: &CotangentPoint) -> Result<FiberPoint> {
        let g = LocalGeometry::at(&*self.metric, lambda.q)?;
        let pf = g.covector_to_frame(lambda.p);
        if pf[0] == 0.0 && pf[1] == 0.0 {
            return Err(NavError::validation("zero covector has no fiber angle"));
        }
        Ok(FiberPoint { q: lambda.q, theta: wrap_angle(pf[1].atan2(pf[0])) })
    }
}

impl Problem {
    pub fn metric(&self) -> &Arc<dyn FrameMetric> {
        match self {
            Problem::CoZermelo(p) => &p.metric,
            Problem::Zermelo(p) => &p.metric,
        }
    }

    pub fn drift(&self) -> &Arc<dyn FrameField> {
        match self {
            Problem::CoZermelo(p) => &p.form,
            Problem::Zermelo(p) => &p.vector,
        }
    }

    pub fn chart(&self) -> &Chart {
        self.metric().chart()
    }

    pub fn hamiltonian(&self, lambda: &CotangentPoint) -> Result<f64> {
        match self {
            Problem::CoZermelo(p) => p.hamiltonian(lambda),
            Problem::Zermelo(p) => p.hamiltonian(lambda),
        }
    }

    pub fn covector_of(&self, fp: &FiberPoint) -> Result<CotangentPoint> {
        match self {
            Problem::CoZermelo(p) => p.covector_of(fp),
            Problem::Zermelo(p) => p.covector_of(fp),
        }
    }

    pub fn fiber_point_of(&self, lambda: &CotangentPoint) -> Result<FiberPoint> {
        match self {
            Problem::CoZermelo(p) => p.fiber_point_of(lambda),
            Problem::Zermelo(p) => p.fiber_point_of(lambda),
        }
    }

    /// Number of integrator coordinates: `(x, y, theta)` for co-Zermelo,
    /// `(x, y, p1, p2)` for Zermelo.
    pub fn state_dim(&self) -> usize {
        match self {
            Problem::CoZermelo(_) => 3,
            Problem::Zermelo(_) => 4,
        }
    }

    pub fn initial_state(&self, start: &FiberPoint) -> Result<Vec<f64>> {
        match self {
            Problem::CoZermelo(_) => Ok(vec![start.q.x, start.q.y, start.theta]),
            Problem::Zermelo(z) => {
                let l = z.covector_of(start)?;
                Ok(vec![start.q.x, start.q.y, l.p[0], l.p[1]])
            }
        }
    }

    /// Writes the extremal vector field at `state` into `out`.
    pub fn extremal_rhs(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        let q = Point::new(state[0], state[1]);
        match self {
            Problem::CoZermelo(p) => {
                let (qd, td) = cozermelo_field(&*p.metric, &*p.form, &FiberPoint { q, theta: state[2] })?;
                out[0] = qd[0];
                out[1] = qd[1];
                out[2] = td;
            }
            Problem::Zermelo(z) => {
                let (qd, pd) =
                    zermelo_field_canonical(&*z.metric, &*z.vector, &CotangentPoint { q, p: [state[2], state[3]] })?;
                out[..2].copy_from_slice(&qd);
                out[2..4].copy_from_slice(&pd);
            }
        }
        Ok(())
    }

    /// Wrapped fiber point and covector of an integrator state.
    pub fn decode_state(&self, state: &[f64]) -> Result<(FiberPoint, CotangentPoint)> {
        let q = self.chart().wrap(Point::new(state[0], state[1]));
        match self {
            Problem::CoZermelo(p) => {
                let fp = FiberPoint { q, theta: wrap_angle(state[2]) };
                Ok((fp, p.covector_of(&fp)?))
            }
            Problem::Zermelo(z) => {
                let l = CotangentPoint { q, p: [state[2], state[3]] };
                Ok((z.fiber_point_of(&l)?, l))
            }
        }
    }

    pub fn guard(&self, state: &[f64]) -> bool {
        self.chart().within_guard(Point::new(state[0], state[1]), GUARD_DISTANCE)
    }
}

/// `<lambda, X> + |lambda|_g`.
pub fn h_zermelo(metric: &dyn FrameMetric, vector: &dyn FrameField, lambda: &CotangentPoint) -> Result<f64> {
    let g = LocalGeometry::at(metric, lambda.q)?;
    let x = vector.frame_values(g.q)?;
    let pf = g.covector_to_frame(lambda.p);
    Ok(pf[0] * x[0] + pf[1] * x[1] + pf[0].hypot(pf[1]))
}

/// Co-Zermelo Hamiltonian from frame components of the drift `u` and the
/// covector `pf`; the root of `|lambda - h Y| = h` that is positive.
pub fn h_cozermelo_frame(u: [f64; 2], pf: [f64; 2]) -> f64 {
    let a = pf[0] * u[0] + pf[1] * u[1];
    let k = 1.0 - (u[0] * u[0] + u[1] * u[1]);
    let n2 = pf[0] * pf[0] + pf[1] * pf[1];
    let s = (a * a + k * n2).sqrt();
    if a > 0.0 {
        n2 / (s + a)
    } else {
        (s - a) / k
    }
}

pub fn h_cozermelo(metric: &dyn FrameMetric, form: &dyn FrameField, lambda: &CotangentPoint) -> Result<f64> {
    let g = LocalGeometry::at(metric, lambda.q)?;
    let u = form.frame_values(g.q)?;
    let n = u[0].hypot(u[1]);
    if !(n < 1.0) {
        return Err(NavError::validation(format!("drift norm {n} at ({}, {}) is not below 1", g.q.x, g.q.y)));
    }
    Ok(h_cozermelo_frame(u, g.covector_to_frame(lambda.p)))
}

/// Base velocity and angle rate of the co-Zermelo flow on `{h = 1}`:
/// `q' = (cos(theta) e1 + sin(theta) e2) / phi`,
/// `theta' = (c1 cos(theta) + c2 sin(theta) + Omega) / phi`.
pub fn cozermelo_field(metric: &dyn FrameMetric, form: &dyn FrameField, fp: &FiberPoint) -> Result<([f64; 2], f64)> {
    let g = LocalGeometry::at(metric, fp.q)?;
    let ups = form.frame_components(g.q)?;
    let om = omega_jet(&g, &ups).v;
    let (s, c) = fp.theta.sin_cos();
    let phi = 1.0 + ups[0].v * c + ups[1].v * s;
    if !(phi > 0.0) {
        return Err(NavError::numerical(format!("phi = {phi} is not positive at ({}, {})", g.q.x, g.q.y)));
    }
    let qd = g.vector_from_frame([c / phi, s / phi]);
    let td = (g.c[0].v * c + g.c[1].v * s + om) / phi;
    Ok((qd, td))
}

/// Canonical equations `q' = dh/dp`, `p' = -dh/dq` of the Zermelo Hamiltonian.
/// `dh/dq` comes from forward-mode duals through the frame and the drift.
pub fn zermelo_field_canonical(
    metric: &dyn FrameMetric,
    vector: &dyn FrameField,
    lambda: &CotangentPoint,
) -> Result<([f64; 2], [f64; 2])> {
    let g = LocalGeometry::at(metric, lambda.q)?;
    let xj = vector.frame_components(g.q)?;
    let p = lambda.p;
    let pf: [Dual2; 2] = std::array::from_fn(|i| g.frame[0][i].dual() * p[0] + g.frame[1][i].dual() * p[1]);
    let n = (pf[0] * pf[0] + pf[1] * pf[1]).sqrt();
    if !(n.v > 0.0) {
        return Err(NavError::numerical("Zermelo field is undefined at p = 0"));
    }
    let h = pf[0] * xj[0].dual() + pf[1] * xj[1].dual() + n;
    let u = [pf[0].v / n.v, pf[1].v / n.v];
    let qd = g.vector_from_frame([xj[0].v + u[0], xj[1].v + u[1]]);
    Ok((qd, [-h.g[0], -h.g[1]]))
}

/// Central-difference gradient of `h_zermelo` in `(q, p)`, with steps
/// `1e-6 * max(1, |coordinate|)`. Kept as a cross-check of the dual gradient.
pub fn zermelo_gradient_fd(
    metric: &dyn FrameMetric,
    vector: &dyn FrameField,
    lambda: &CotangentPoint,
) -> Result<([f64; 2], [f64; 2])> {
    let base = [lambda.q.x, lambda.q.y, lambda.p[0], lambda.p[1]];
    let mut grad = [0.0; 4];
    for (i, gi) in grad.iter_mut().enumerate() {
        let h = 1e-6 * base[i].abs().max(1.0);
        let eval = |d: f64| {
            let mut z = base;
            z[i] += d;
            h_zermelo(metric, vector, &CotangentPoint { q: Point::new(z[0], z[1]), p: [z[2], z[3]] })
        };
        *gi = (eval(h)? - eval(-h)?) / (2.0 * h);
    }
    Ok(([grad[0], grad[1]], [grad[2], grad[3]]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    /// Wrapped fiber point.
    pub point: FiberPoint,
    /// Base point without periodic wrapping.
    pub q_unwrapped: Point,
    /// Chart components of the covector.
    pub p: [f64; 2],
    pub h_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtremalTrajectory {
    pub samples: Vec<TrajectorySample>,
    pub hamiltonian_drift: f64,
    pub solver_stats: SolverStats,
}

impl ExtremalTrajectory {
    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }
}

pub(crate) fn sample_of(problem: &Problem, t: f64, state: &[f64]) -> Result<TrajectorySample> {
    let (fp, l) = problem.decode_state(state)?;
    let h = problem.hamiltonian(&l)?;
    Ok(TrajectorySample { t, point: fp, q_unwrapped: Point::new(state[0], state[1]), p: l.p, h_residual: h - 1.0 })
}

/// Collects output samples from accepted steps: every step end, or a uniform
/// grid through dense output when `output_step` is set.
pub(crate) struct Sampler {
    pub next: f64,
    pub step: Option<f64>,
}

impl Sampler {
    pub fn new(opts: &SolverOptions) -> Self {
        Sampler { next: opts.output_step.unwrap_or(0.0), step: opts.output_step }
    }

    pub fn times(&mut self, s: &StepData, t_end: f64) -> Vec<(f64, Option<Vec<f64>>)> {
        match self.step {
            None => vec![(s.t1(), None)],
            Some(dt) => {
                let mut out = Vec::new();
                while self.next <= s.t1() * (1.0 + 1e-14) && self.next <= t_end * (1.0 + 1e-14) {
                    let t = self.next.min(s.t1());
                    let y = if t == s.t1() { s.y1.clone() } else { s.dense(t) };
                    out.push((t, Some(y)));
                    self.next += dt;
                }
                out
            }
        }
    }
}

/// Integrates the extremal through `start` on `[0, t_max]`.
pub fn integrate_extremal(
    problem: &Problem,
    start: &FiberPoint,
    t_max: f64,
    opts: &SolverOptions,
) -> Result<ExtremalTrajectory> {
    let y0 = problem.initial_state(start)?;
    let h0 = problem.hamiltonian(&problem.covector_of(start)?)?;
    if (h0 - 1.0).abs() > 1e-9 {
        return Err(NavError::validation(format!("start is not on the level set (h = {h0})")));
    }
    let mut samples = vec![sample_of(problem, 0.0, &y0)?];
    let mut sampler = Sampler::new(opts);
    sampler.next = sampler.step.unwrap_or(0.0);
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| problem.extremal_rhs(y, dy);
    let (stats, _, _) = integrate(
        rhs,
        0.0,
        &y0,
        t_max,
        *opts,
        |y| problem.guard(y),
        |s, _| {
            for (t, y) in sampler.times(s, t_max) {
                let y = y.unwrap_or_else(|| s.y1.clone());
                samples.push(sample_of(problem, t, &y)?);
            }
            Ok(true)
        },
    )?;
    let hamiltonian_drift = samples.iter().map(|s| s.h_residual.abs()).fold(0.0, f64::max);
    Ok(ExtremalTrajectory { samples, hamiltonian_drift, solver_stats: stats })
}

/// Integrates from an arbitrary non-zero covector, first scaled onto `{h = 1}`.
pub fn integrate_extremal_from(
    problem: &Problem,
    lambda: &CotangentPoint,
    t_max: f64,
    opts: &SolverOptions,
) -> Result<ExtremalTrajectory> {
    let fp = problem.fiber_point_of(lambda)?;
    integrate_extremal(problem, &fp, t_max, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{covector_norm, Field};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn bumpy() -> Surface {
        Surface::conformal_torus(Field::parse("0.2*sin(x)*cos(y) + 0.1*sin(2*y)").unwrap()).unwrap()
    }

    fn wavy_form() -> DriftSpec {
        DriftSpec::parse(DriftKind::OneForm, "0.3*cos(y) + 0.2*sin(x+y)", "0.4*sin(x)").unwrap()
    }

    fn wavy_vector() -> DriftSpec {
        DriftSpec { kind: DriftKind::VectorField, ..wavy_form() }
    }

    fn random_covector(rng: &mut ChaCha8Rng) -> CotangentPoint {
        CotangentPoint {
            q: Point::new(rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU)),
            p: [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
        }
    }

    #[test]
    fn hamiltonian_examples() {
        let flat = Surface::flat_torus();
        let l = CotangentPoint { q: Point::new(1.0, 2.0), p: [1.0, 0.0] };
        let zero = DriftSpec::zero(DriftKind::VectorField);
        assert_eq!(h_zermelo(&flat, &zero, &CotangentPoint { p: [3.0, 4.0], ..l }).unwrap(), 5.0);
        let c = 0.35;
        assert_abs_diff_eq!(
            h_zermelo(&flat, &DriftSpec::constant(DriftKind::VectorField, c, 0.0), &l).unwrap(),
            1.0 + c,
            epsilon = 1e-15
        );
        let form = DriftSpec::constant(DriftKind::OneForm, c, 0.0);
        let zf = DriftSpec::zero(DriftKind::OneForm);
        assert_eq!(h_cozermelo(&flat, &zf, &CotangentPoint { p: [3.0, 4.0], ..l }).unwrap(), 5.0);
        assert_abs_diff_eq!(
            h_cozermelo(&flat, &form, &CotangentPoint { p: [1.0 + c, 0.0], ..l }).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        for p in [0.1, 1.0, 7.5] {
            assert_abs_diff_eq!(
                h_cozermelo(&flat, &form, &CotangentPoint { p: [p, 0.0], ..l }).unwrap(),
                p / (1.0 + c),
                epsilon = 1e-14 * p
            );
        }
    }

    #[test]
    fn homogeneity_and_implicit_equation() {
        let s = bumpy();
        let (form, vec) = (wavy_form(), wavy_vector());
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let l = random_covector(&mut rng);
            let hz = h_zermelo(&s, &vec, &l).unwrap();
            let hc = h_cozermelo(&s, &form, &l).unwrap();
            assert!(hz > 0.0 && hc > 0.0);
            for k in [0.5, 2.0, 10.0] {
                let lk = CotangentPoint { p: [k * l.p[0], k * l.p[1]], ..l };
                assert!((h_zermelo(&s, &vec, &lk).unwrap() - k * hz).abs() < 1e-12 * k * hz);
                assert!((h_cozermelo(&s, &form, &lk).unwrap() - k * hc).abs() < 1e-12 * k * hc);
            }
            // |lambda - h Y|_g = h
            let y = form.chart_components(&s, l.q).unwrap();
            let shifted = [l.p[0] - hc * y[0], l.p[1] - hc * y[1]];
            assert_abs_diff_eq!(covector_norm(&s, l.q, shifted).unwrap(), hc, epsilon = 1e-10);
        }
    }

    #[test]
    fn fiber_points_lie_on_the_level_set() {
        let s = bumpy();
        let co = Problem::CoZermelo(CoZermelo::new(s.clone(), wavy_form()).unwrap());
        let ze = Problem::Zermelo(Zermelo::new(s, wavy_vector()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..200 {
            let fp = FiberPoint::new(
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..TAU),
            );
            for p in [&co, &ze] {
                let l = p.covector_of(&fp).unwrap();
                assert_abs_diff_eq!(p.hamiltonian(&l).unwrap(), 1.0, epsilon = 1e-12);
                let back = p.fiber_point_of(&CotangentPoint { p: [3.0 * l.p[0], 3.0 * l.p[1]], ..l }).unwrap();
                let d = (back.theta - fp.theta).rem_euclid(TAU);
                assert!(d < 1e-12 || TAU - d < 1e-12);
            }
        }
    }

    #[test]
    fn cozermelo_field_examples() {
        let flat = Surface::flat_torus();
        let fp = FiberPoint::new(0.5, 0.5, 0.0);
        let (qd, td) = cozermelo_field(&flat, &DriftSpec::zero(DriftKind::OneForm), &fp).unwrap();
        assert_eq!((qd, td), ([1.0, 0.0], 0.0));
        let c = 0.4;
        let (qd, td) = cozermelo_field(&flat, &DriftSpec::constant(DriftKind::OneForm, c, 0.0), &fp).unwrap();
        assert_abs_diff_eq!(qd[0], 1.0 / (1.0 + c), epsilon = 1e-15);
        assert_eq!((qd[1], td), (0.0, 0.0));
        let eps = 0.3;
        let wave = DriftSpec::parse(DriftKind::OneForm, "0", "0.3*sin(x)").unwrap();
        let fp = FiberPoint::new(1.0, 0.2, 0.7);
        let (_, td) = cozermelo_field(&flat, &wave, &fp).unwrap();
        let phi = 1.0 + eps * 1f64.sin() * 0.7f64.sin();
        assert_abs_diff_eq!(td, -eps * 1f64.cos() / phi, epsilon = 1e-15);
    }

    #[test]
    fn cozermelo_velocity_matches_control_form() {
        let s = bumpy();
        let form = wavy_form();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let fp = FiberPoint::new(
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..TAU),
            );
            let (qd, _) = cozermelo_field(&s, &form, &fp).unwrap();
            let g = LocalGeometry::at(&s, fp.q).unwrap();
            let u = [fp.theta.cos(), fp.theta.sin()];
            let y = form.components(fp.q);
            let scale = 1.0 / (1.0 + y[0] * u[0] + y[1] * u[1]);
            let expect = g.vector_from_frame([u[0] * scale, u[1] * scale]);
            assert_abs_diff_eq!(qd[0], expect[0], epsilon = 1e-10);
            assert_abs_diff_eq!(qd[1], expect[1], epsilon = 1e-10);
        }
    }

    #[test]
    fn canonical_field_examples_and_fd_gradient() {
        let flat = Surface::flat_torus();
        let c = 0.45;
        let x = DriftSpec::constant(DriftKind::VectorField, c, 0.0);
        let l = CotangentPoint { q: Point::new(1.0, 1.0), p: [0.3, -0.8] };
        let (qd, pd) = zermelo_field_canonical(&flat, &x, &l).unwrap();
        assert_abs_diff_eq!((qd[0] - c).hypot(qd[1]), 1.0, epsilon = 1e-12);
        assert_eq!(pd, [0.0, 0.0]);

        let s = bumpy();
        let v = wavy_vector();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..50 {
            let l = random_covector(&mut rng);
            let (qd, pd) = zermelo_field_canonical(&s, &v, &l).unwrap();
            let (dq, dp) = zermelo_gradient_fd(&s, &v, &l).unwrap();
            for i in 0..2 {
                assert_abs_diff_eq!(qd[i], dp[i], epsilon = 1e-8);
                assert_abs_diff_eq!(pd[i], -dq[i], epsilon = 1e-8 * (1.0 + l.p[0].abs() + l.p[1].abs()));
            }
        }
    }

    #[test]
    fn zermelo_flow_conserves_the_hamiltonian() {
        let p = Problem::Zermelo(Zermelo::new(bumpy(), wavy_vector()).unwrap());
        let tr = integrate_extremal(&p, &FiberPoint::new(1.0, 2.0, 0.4), 10.0, &SolverOptions::default()).unwrap();
        assert!(tr.hamiltonian_drift < 1e-8, "{}", tr.hamiltonian_drift);
        assert_eq!(tr.last().t, 10.0);
        assert!(tr.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn flat_zermelo_extremals_are_straight() {
        let p = Problem::Zermelo(
            Zermelo::new(Surface::flat_torus(), DriftSpec::constant(DriftKind::VectorField, 0.5, 0.0)).unwrap(),
        );
        let tr = integrate_extremal(&p, &FiberPoint::new(1.0, 1.0, PI / 2.0), 3.0, &SolverOptions::default()).unwrap();
        let end = tr.last().q_unwrapped;
        assert_abs_diff_eq!(end.x, 1.0 + 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(end.y, 1.0 + 3.0, epsilon = 1e-9);
    }

    #[test]
    fn vertical_line_on_flat_torus() {
        let c = 0.5;
        let p = Problem::CoZermelo(
            CoZermelo::new(Surface::flat_torus(), DriftSpec::constant(DriftKind::OneForm, c, 0.0)).unwrap(),
        );
        let tr = integrate_extremal(&p, &FiberPoint::new(0.0, 0.0, PI / 2.0), 4.0, &SolverOptions::default()).unwrap();
        let end = tr.last();
        assert_abs_diff_eq!(end.q_unwrapped.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(end.q_unwrapped.y, 4.0, epsilon = 1e-9);
        assert!(tr.hamiltonian_drift < 1e-12);
    }

    #[test]
    fn sphere_geodesics_close_up_after_two_pi() {
        let p = Problem::CoZermelo(CoZermelo::riemannian(Surface::sphere(1.0).unwrap()));
        for start in
            [FiberPoint::new(0.5, 0.0, PI / 2.0), FiberPoint::new(-0.3, 0.8, 2.0), FiberPoint::new(1.5, 1.0, 0.1)]
        {
            let tr = integrate_extremal(&p, &start, TAU, &SolverOptions::default()).unwrap();
            let end = tr.last();
            assert_abs_diff_eq!(end.q_unwrapped.x, start.q.x, epsilon = 1e-6);
            assert_abs_diff_eq!(end.q_unwrapped.y, start.q.y, epsilon = 1e-6);
            let d = (end.point.theta - start.theta).rem_euclid(TAU);
            assert!(d < 1e-6 || TAU - d < 1e-6);
        }
    }

    #[test]
    fn uniform_output_grid() {
        let p = Problem::CoZermelo(CoZermelo::riemannian(Surface::flat_torus()));
        let opts = SolverOptions { output_step: Some(0.25), ..Default::default() };
        let tr = integrate_extremal(&p, &FiberPoint::new(0.0, 0.0, 0.3), 2.0, &opts).unwrap();
        let ts: Vec<f64> = tr.samples.iter().map(|s| s.t).collect();
        assert_eq!(ts.len(), 9);
        for (k, t) in ts.iter().enumerate() {
            assert_abs_diff_eq!(*t, 0.25 * k as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn leaving_the_disk_is_a_chart_exit() {
        let p = Problem::CoZermelo(CoZermelo::riemannian(Surface::hyperbolic_disk()));
        let err = integrate_extremal(&p, &FiberPoint::new(0.0, 0.0, 0.0), 50.0, &SolverOptions::default()).unwrap_err();
        match err {
            NavError::ChartExit { state, .. } => assert!(state[0] < 1.0 - GUARD_DISTANCE + 1e-12 && state[0] > 0.9),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn wrong_drift_kind_is_rejected() {
        assert!(CoZermelo::new(Surface::flat_torus(), DriftSpec::zero(DriftKind::VectorField)).is_err());
        assert!(Zermelo::new(Surface::flat_torus(), DriftSpec::zero(DriftKind::OneForm)).is_err());
    }
}
