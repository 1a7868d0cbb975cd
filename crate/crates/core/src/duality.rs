//! The Zermelo / co-Zermelo duality: a Zermelo problem `(g, X)` and the
//! co-Zermelo problem `(g~, Y~)` built from it have the same Hamiltonian, and
//! conversely.
//!
//! From `(g, X)` with `r = |X|_g`, `Xhat = X / r` and `Xperp` its rotation by
//! `+pi/2`, the dual metric has orthonormal frame
//! `e~1 = (1 - r^2) Xhat`, `e~2 = sqrt(1 - r^2) Xperp` and the dual form is
//! `Y~ = -r e~1*`. From `(g, Y)` the mirrored construction uses
//! `e~1 = Yhat / (1 - r^2)`, `e~2 = Yperp / sqrt(1 - r^2)` and `X~ = -r e~1`.
//! Both frames are rotations of the original one followed by an anisotropic
//! scaling, so the dual metric is in general not conformal in the chart.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::drift::FrameField;
use crate::error::{NavError, Result};
use crate::geometry::{Chart, FrameMatrix, FrameMetric, LocalGeometry, Point, Rect};
use crate::hamiltonian::{CoZermelo, CotangentPoint, Problem, Zermelo};
use crate::jet::{Jet2, Scalar};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DualDirection {
    /// `(g, X)` to `(g~, Y~)`.
    FromZermelo,
    /// `(g, Y)` to `(g~, X~)`.
    FromCoZermelo,
}

/// Below this the source drift counts as identically zero.
pub const ZERO_DRIFT: f64 = 1e-14;
/// Non-zero drifts must stay above this on the working region.
pub const MIN_DRIFT: f64 = 1e-6;

/// The dual metric and drift, evaluated on demand from the source problem.
pub struct DualConstruction {
    base: Arc<dyn FrameMetric>,
    source: Arc<dyn FrameField>,
    direction: DualDirection,
    identically_zero: bool,
}

impl DualConstruction {
    pub fn direction(&self) -> DualDirection {
        self.direction
    }

    /// `M` with `e~_i = sum_j M[j][i] e_j`, and `r = |drift|`.
    fn transform(&self, q: Point) -> Result<([[Jet2; 2]; 2], Jet2)> {
        let one = Jet2::cst(1.0);
        let zero = Jet2::cst(0.0);
        if self.identically_zero {
            return Ok(([[one, zero], [zero, one]], zero));
        }
        let d = self.source.frame_components(q)?;
        let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if !(r.v > 0.0) {
            return Err(NavError::validation(format!("drift vanishes at ({}, {})", q.x, q.y)));
        }
        if !(r.v < 1.0) {
            return Err(NavError::validation(format!("drift norm {} at ({}, {}) is not below 1", r.v, q.x, q.y)));
        }
        let (c, s) = (d[0] / r, d[1] / r);
        let k = one - r * r;
        let sk = k.sqrt();
        let m = match self.direction {
            DualDirection::FromZermelo => [[k * c, -(sk * s)], [k * s, sk * c]],
            DualDirection::FromCoZermelo => [[c / k, -(s / sk)], [s / k, c / sk]],
        };
        Ok((m, r))
    }

    /// Ellipse parameters `(a, b, c)` = `((1 - r^2)^-1, (1 - r^2)^-1/2, r (1 - r^2)^-1)`
    /// of the source problem at `q`.
    pub fn ellipse(&self, q: Point) -> Result<(f64, f64, f64)> {
        let q = self.base.chart().normalize(q)?;
        let d = self.source.frame_values(q)?;
        let r = d[0].hypot(d[1]);
        let k = 1.0 - r * r;
        Ok((1.0 / k, 1.0 / k.sqrt(), r / k))
    }
}

impl FrameMetric for DualConstruction {
    fn chart(&self) -> &Chart {
        self.base.chart()
    }

    fn frame_jet(&self, q: Point) -> Result<FrameMatrix> {
        let e = self.base.frame_jet(q)?;
        let (m, _) = self.transform(q)?;
        Ok(std::array::from_fn(|k| std::array::from_fn(|i| e[k][0] * m[0][i] + e[k][1] * m[1][i])))
    }
}

impl FrameField for DualConstruction {
    fn frame_components(&self, q: Point) -> Result<[Jet2; 2]> {
        let (_, r) = self.transform(q)?;
        Ok([-r, Jet2::cst(0.0)])
    }
}

/// A source problem together with its dual.
#[derive(Clone)]
pub struct DualProblem {
    pub construction: Arc<DualConstruction>,
    pub source: Problem,
    pub dual: Problem,
}

impl DualProblem {
    pub fn ellipse(&self, q: Point) -> Result<(f64, f64, f64)> {
        self.construction.ellipse(q)
    }

    /// `(|drift|_g, |dual drift|_g~)` at `q`; equal by construction.
    pub fn drift_norms(&self, q: Point) -> Result<(f64, f64)> {
        let q = self.source.chart().normalize(q)?;
        let a = self.source.drift().frame_values(q)?;
        let b = self.dual.drift().frame_values(q)?;
        Ok((a[0].hypot(a[1]), b[0].hypot(b[1])))
    }
}

fn check_nonvanishing(chart: &Chart, drift: &dyn FrameField, region: Option<Rect>) -> Result<bool> {
    const N: usize = 64;
    let pts = match region {
        Some(r) => r.grid(N),
        None => chart.sample_points(N),
    };
    let mut vals = Vec::with_capacity(pts.len());
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut worst = Point::new(0.0, 0.0);
    for &q in &pts {
        let q = chart.normalize(q)?;
        let d = drift.frame_values(q)?;
        let n = d[0].hypot(d[1]);
        if !(n < 1.0) {
            return Err(NavError::validation(format!("drift norm {n} at ({}, {}) is not below 1", q.x, q.y)));
        }
        if n < lo {
            lo = n;
            worst = q;
        }
        hi = hi.max(n);
        vals.push(d);
    }
    if hi <= ZERO_DRIFT {
        return Ok(true);
    }
    if lo <= MIN_DRIFT {
        return Err(NavError::validation(format!(
            "drift vanishes inside the working region (|drift| = {lo:e} at ({}, {})); restrict the region",
            worst.x, worst.y
        )));
    }
    // A zero between samples shows up as a lattice cell on which both
    // components take both signs.
    if vals.len() == N * N {
        for j in 0..N - 1 {
            for i in 0..N - 1 {
                let cell = [i + N * j, i + 1 + N * j, i + N * (j + 1), i + 1 + N * (j + 1)];
                let straddles = |k: usize| {
                    let lo = cell.iter().map(|&c| vals[c][k]).fold(f64::INFINITY, f64::min);
                    let hi = cell.iter().map(|&c| vals[c][k]).fold(f64::NEG_INFINITY, f64::max);
                    lo <= 0.0 && hi >= 0.0
                };
                if straddles(0) && straddles(1) {
                    let q = pts[cell[0]];
                    return Err(NavError::validation(format!(
                        "drift may vanish near ({}, {}) inside the working region; restrict the region",
                        q.x, q.y
                    )));
                }
            }
        }
    }
    Ok(false)
}

fn construct(
    metric: &Arc<dyn FrameMetric>,
    drift: &Arc<dyn FrameField>,
    direction: DualDirection,
    region: Option<Rect>,
) -> Result<Arc<DualConstruction>> {
    let identically_zero = check_nonvanishing(metric.chart(), &**drift, region)?;
    log::debug!("dual construction {direction:?}, identically zero drift: {identically_zero}");
    Ok(Arc::new(DualConstruction { base: metric.clone(), source: drift.clone(), direction, identically_zero }))
}

/// `(g, X)` to the co-Zermelo problem `(g~, Y~)` with the same Hamiltonian.
/// `region` restricts the non-vanishing check (default: the whole chart).
pub fn dualize_zermelo(problem: &Zermelo, region: Option<Rect>) -> Result<DualProblem> {
    let c = construct(&problem.metric, &problem.vector, DualDirection::FromZermelo, region)?;
    let dual = CoZermelo::from_parts(c.clone(), c.clone());
    Ok(DualProblem { construction: c, source: Problem::Zermelo(problem.clone()), dual: Problem::CoZermelo(dual) })
}

/// `(g, Y)` to the Zermelo problem `(g~, X~)` with the same Hamiltonian.
pub fn dualize_cozermelo(problem: &CoZermelo, region: Option<Rect>) -> Result<DualProblem> {
    let c = construct(&problem.metric, &problem.form, DualDirection::FromCoZermelo, region)?;
    let dual = Zermelo::from_parts(c.clone(), c.clone());
    Ok(DualProblem { construction: c, source: Problem::CoZermelo(problem.clone()), dual: Problem::Zermelo(dual) })
}

pub fn dualize(problem: &Problem, region: Option<Rect>) -> Result<DualProblem> {
    match problem {
        Problem::Zermelo(z) => dualize_zermelo(z, region),
        Problem::CoZermelo(c) => dualize_cozermelo(c, region),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub samples: usize,
    pub max_abs_error: f64,
    pub worst_point: Option<CotangentPoint>,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct DualitySampling {
    pub n_samples: usize,
    /// Base points are drawn uniformly from this rectangle.
    pub region: Rect,
    pub seed: u64,
    pub tolerance: f64,
    pub execution: Execution,
}

impl DualitySampling {
    pub fn new(region: Rect, n_samples: usize, tolerance: f64, seed: u64) -> Self {
        DualitySampling { n_samples, region, seed, tolerance, execution: Execution::default() }
    }
}

/// Random covectors: base point uniform in the region, Euclidean chart norm
/// of `p` uniform in `[0.1, 10]`, direction uniform.
pub fn sample_covectors(chart: &Chart, region: Rect, n: usize, seed: u64) -> Vec<CotangentPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < 100 * n.max(1) {
        attempts += 1;
        let q = Point::new(rng.random_range(region.x0..region.x1), rng.random_range(region.y0..region.y1));
        let m: f64 = rng.random_range(0.1..10.0);
        let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        if chart.contains(chart.wrap(q)) {
            out.push(CotangentPoint { q, p: [m * a.cos(), m * a.sin()] });
        }
    }
    out
}

/// Compares the Hamiltonians of two problems on random covectors.
pub fn verify_duality(a: &Problem, b: &Problem, sampling: &DualitySampling) -> DualityReport {
    if !sampling.region.is_finite() {
        return DualityReport {
            samples: 0,
            max_abs_error: f64::NAN,
            worst_point: None,
            tolerance: sampling.tolerance,
            passed: false,
        };
    }
    let pts = sample_covectors(a.chart(), sampling.region, sampling.n_samples, sampling.seed);
    let errs = par::map(sampling.execution, pts.len(), |i| match (a.hamiltonian(&pts[i]), b.hamiltonian(&pts[i])) {
        (Ok(x), Ok(y)) => (x - y).abs(),
        _ => f64::NAN,
    });
    let mut max = 0.0;
    let mut worst = None;
    for (i, &e) in errs.iter().enumerate() {
        if e.is_nan() || e > max {
            max = e;
            worst = Some(pts[i]);
            if e.is_nan() {
                break;
            }
        }
    }
    DualityReport {
        samples: pts.len(),
        max_abs_error: max,
        worst_point: worst,
        tolerance: sampling.tolerance,
        passed: pts.len() == sampling.n_samples && max < sampling.tolerance,
    }
}

/// Chart metric coefficients of the dual, checked for positive definiteness.
pub fn dual_metric_coefficients(dual: &DualProblem, q: Point) -> Result<[[f64; 2]; 2]> {
    let g = LocalGeometry::at(&**dual.dual.metric(), q)?;
    let c = g.coframe;
    let m: [[f64; 2]; 2] = std::array::from_fn(|k| std::array::from_fn(|l| c[0][k] * c[0][l] + c[1][k] * c[1][l]));
    if !(m[0][0] > 0.0 && m[0][0] * m[1][1] - m[0][1] * m[1][0] > 0.0) {
        return Err(NavError::numerical(format!("dual metric is not positive definite at ({}, {})", q.x, q.y)));
    }
    Ok(m)
}
