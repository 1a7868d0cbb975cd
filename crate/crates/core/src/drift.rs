//! Drifts of navigation problems, stored as frame components.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{NavError, Result};
use crate::geometry::{Chart, Field, FrameMetric, LocalGeometry, Point};
use crate::jet::{Dual2, Jet2};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    VectorField,
    OneForm,
}

/// Frame components of a vector field or one-form, as second-order jets in
/// the chart coordinates. Points are already normalised by the caller.
pub trait FrameField: Send + Sync {
    fn frame_components(&self, q: Point) -> Result<[Jet2; 2]>;

    fn frame_values(&self, q: Point) -> Result<[f64; 2]> {
        let c = self.frame_components(q)?;
        Ok([c[0].v, c[1].v])
    }
}

/// A drift `X` (vector field) or `Y` (one-form) in frame components
/// `<X, e_i>_g`, resp. `Y(e_i)`.
#[derive(Debug, Clone)]
pub struct DriftSpec {
    pub kind: DriftKind,
    pub comp1: Field,
    pub comp2: Field,
    pub norm_margin: f64,
}

pub const DEFAULT_NORM_MARGIN: f64 = 0.02;
pub const DEFAULT_VALIDATION_GRID: usize = 256;

impl DriftSpec {
    pub fn new(kind: DriftKind, comp1: Field, comp2: Field) -> Self {
        DriftSpec { kind, comp1, comp2, norm_margin: DEFAULT_NORM_MARGIN }
    }

    pub fn zero(kind: DriftKind) -> Self {
        DriftSpec::new(kind, Field::Constant(0.0), Field::Constant(0.0))
    }

    pub fn constant(kind: DriftKind, c1: f64, c2: f64) -> Self {
        DriftSpec::new(kind, Field::Constant(c1), Field::Constant(c2))
    }

    pub fn parse(kind: DriftKind, comp1: &str, comp2: &str) -> Result<Self> {
        Ok(DriftSpec::new(kind, Field::parse(comp1)?, Field::parse(comp2)?))
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.norm_margin = margin;
        self
    }

    pub fn is_identically_zero(&self) -> bool {
        self.comp1.is_zero() && self.comp2.is_zero()
    }

    pub fn components(&self, q: Point) -> [f64; 2] {
        [self.comp1.value(q), self.comp2.value(q)]
    }

    /// Chart components: `E X` for a vector field, `E^{-T} Y` for a form.
    pub fn chart_components(&self, metric: &dyn FrameMetric, q: Point) -> Result<[f64; 2]> {
        let g = LocalGeometry::at(metric, q)?;
        let c = self.components(g.q);
        Ok(match self.kind {
            DriftKind::VectorField => g.vector_from_frame(c),
            DriftKind::OneForm => g.covector_from_frame(c),
        })
    }

    pub fn into_arc(self) -> Arc<dyn FrameField> {
        Arc::new(self)
    }
}

impl FrameField for DriftSpec {
    fn frame_components(&self, q: Point) -> Result<[Jet2; 2]> {
        let c = [self.comp1.jet(q), self.comp2.jet(q)];
        if !(c[0].v.is_finite() && c[1].v.is_finite()) {
            return Err(NavError::numerical(format!("drift is not finite at ({}, {})", q.x, q.y)));
        }
        Ok(c)
    }
}

/// Frame components of a drift known only in chart components.
pub fn frame_components_from_chart(
    metric: &dyn FrameMetric,
    q: Point,
    kind: DriftKind,
    chart: [f64; 2],
) -> Result<[f64; 2]> {
    let g = LocalGeometry::at(metric, q)?;
    Ok(match kind {
        DriftKind::VectorField => g.vector_to_frame(chart),
        DriftKind::OneForm => g.covector_to_frame(chart),
    })
}

/// `atan2(comp2, comp1)`, and exactly 0 where the drift vanishes.
pub fn drift_angle(drift: &dyn FrameField, q: Point) -> Result<f64> {
    let [a, b] = drift.frame_values(q)?;
    Ok(angle_of(a, b))
}

pub(crate) fn angle_of(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        0.0
    } else {
        b.atan2(a)
    }
}

/// The frame rotated onto the drift direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedFrame {
    pub theta0: f64,
    /// Chart components of the rotated frame vectors.
    pub e1x: [f64; 2],
    pub e2x: [f64; 2],
}

pub fn rotated_frame(metric: &dyn FrameMetric, drift: &dyn FrameField, q: Point) -> Result<RotatedFrame> {
    let g = LocalGeometry::at(metric, q)?;
    let theta0 = drift_angle(drift, g.q)?;
    let (s, c) = theta0.sin_cos();
    Ok(RotatedFrame { theta0, e1x: g.vector_from_frame([c, s]), e2x: g.vector_from_frame([-s, c]) })
}

/// `Omega = -(e1(Y2) - e2(Y1) - c1 Y1 - c2 Y2)` with its chart gradient.
pub fn omega_jet(local: &LocalGeometry, ups: &[Jet2; 2]) -> Dual2 {
    let e1y2 = local.derivative(0, &ups[1]);
    let e2y1 = local.derivative(1, &ups[0]);
    -(e1y2 - e2y1 - local.c[0] * ups[0].dual() - local.c[1] * ups[1].dual())
}

/// The magnetic function of a one-form: `dY = -Omega dV_g`.
pub fn omega(metric: &dyn FrameMetric, form: &dyn FrameField, q: Point) -> Result<f64> {
    let local = LocalGeometry::at(metric, q)?;
    let ups = form.frame_components(local.q)?;
    Ok(omega_jet(&local, &ups).v)
}

/// `1 + Y1 cos(theta) + Y2 sin(theta)` from frame components.
pub fn phi_from_components(ups: [f64; 2], theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    1.0 + ups[0] * c + ups[1] * s
}

pub fn phi(metric: &dyn FrameMetric, form: &dyn FrameField, theta: f64, q: Point) -> Result<f64> {
    let q = metric.chart().normalize(q)?;
    let ups = form.frame_values(q)?;
    let n = ups[0].hypot(ups[1]);
    if n >= 1.0 {
        return Err(NavError::validation(format!("drift norm {n} at ({}, {}) is not below 1", q.x, q.y)));
    }
    Ok(phi_from_components(ups, theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftValidation {
    pub max_norm: f64,
    pub worst_point: [f64; 2],
    pub samples: usize,
}

/// Samples `|drift|_g` on an `n x n` grid of the chart and accepts iff the
/// maximum stays below `1 - norm_margin`. This is a sampling check, not a proof.
pub fn validate_drift_on_grid(chart: &Chart, drift: &DriftSpec, n: usize) -> Result<DriftValidation> {
    if !(drift.norm_margin > 0.0 && drift.norm_margin < 1.0) {
        return Err(NavError::validation(format!("norm margin must be in (0, 1), got {}", drift.norm_margin)));
    }
    let pts = chart.sample_points(n);
    let norms = par::map(Execution::default(), pts.len(), |i| {
        let q = chart.wrap(pts[i]);
        let [a, b] = drift.components(q);
        a.hypot(b)
    });
    let mut worst = DriftValidation { max_norm: 0.0, worst_point: [0.0, 0.0], samples: pts.len() };
    for (i, &v) in norms.iter().enumerate() {
        if v.is_nan() {
            return Err(NavError::validation(format!("drift is not finite at ({}, {})", pts[i].x, pts[i].y)));
        }
        if v > worst.max_norm {
            worst.max_norm = v;
            worst.worst_point = [pts[i].x, pts[i].y];
        }
    }
    let bound = 1.0 - drift.norm_margin;
    if !(worst.max_norm < bound) {
        return Err(NavError::validation(format!(
            "drift norm {} at ({}, {}) exceeds 1 - margin = {}",
            worst.max_norm, worst.worst_point[0], worst.worst_point[1], bound
        )));
    }
    Ok(worst)
}

pub fn validate_drift(chart: &Chart, drift: &DriftSpec) -> Result<DriftValidation> {
    validate_drift_on_grid(chart, drift, DEFAULT_VALIDATION_GRID)
}
