//! Charts, conformal surfaces and orthonormal frames.
//!
//! A metric is described by an orthonormal frame given in chart components
//! ([`FrameMetric`]); everything else (coframe, pairing, structural constants,
//! Gaussian curvature) is derived from the frame and its derivatives. Conformal
//! surfaces `e^{2f}(dx^2 + dy^2)` are the input format, but the dual metrics
//! built by the duality module go through the same code path.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{NavError, Result};
use crate::expr::Expr;
use crate::jet::{Dual2, Jet2, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`; bounds may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x1 > x0 && y1 > y0) {
            return Err(NavError::validation(format!("degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]")));
        }
        Ok(Rect { x0, x1, y0, y1 })
    }

    pub fn is_finite(&self) -> bool {
        [self.x0, self.x1, self.y0, self.y1].iter().all(|v| v.is_finite())
    }

    pub fn contains_closed(&self, q: Point) -> bool {
        q.x >= self.x0 && q.x <= self.x1 && q.y >= self.y0 && q.y <= self.y1
    }

    /// Cell-centred `n x n` grid.
    pub fn grid(&self, n: usize) -> Vec<Point> {
        let (dx, dy) = ((self.x1 - self.x0) / n as f64, (self.y1 - self.y0) / n as f64);
        let mut pts = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                pts.push(Point::new(self.x0 + (i as f64 + 0.5) * dx, self.y0 + (j as f64 + 0.5) * dy));
            }
        }
        pts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub domain: Rect,
    pub periodic_x: bool,
    pub periodic_y: bool,
    /// Declared Euler characteristic; `None` for non-compact charts.
    pub euler_characteristic: Option<i32>,
    /// The chart is the stereographic chart of a sphere (infinity is the pole).
    pub pole_compactification: bool,
    /// Optional disk constraint `x^2 + y^2 < r^2` inside the rectangle.
    pub disk_radius: Option<f64>,
    /// Bounded region used for sampling checks when the domain is unbounded.
    pub sample_region: Rect,
}

impl Chart {
    pub fn new(domain: Rect) -> Self {
        Chart {
            domain,
            periodic_x: false,
            periodic_y: false,
            euler_characteristic: None,
            pole_compactification: false,
            disk_radius: None,
            sample_region: domain,
        }
    }

    pub fn torus(domain: Rect) -> Self {
        Chart { periodic_x: true, periodic_y: true, euler_characteristic: Some(0), ..Chart::new(domain) }
    }

    pub fn validate(&self) -> Result<()> {
        Rect::new(self.domain.x0, self.domain.x1, self.domain.y0, self.domain.y1)?;
        if (self.periodic_x && !(self.domain.x0.is_finite() && self.domain.x1.is_finite()))
            || (self.periodic_y && !(self.domain.y0.is_finite() && self.domain.y1.is_finite()))
        {
            return Err(NavError::validation("periodic directions need finite bounds"));
        }
        if !self.sample_region.is_finite() {
            return Err(NavError::validation("sample region must be bounded"));
        }
        if self.is_compact() && self.euler_characteristic.is_none() {
            return Err(NavError::validation("compact chart must declare its Euler characteristic"));
        }
        Ok(())
    }

    /// Torus charts and stereographic sphere charts.
    pub fn is_compact(&self) -> bool {
        (self.periodic_x && self.periodic_y) || self.pole_compactification
    }

    /// Reduces periodic coordinates into the fundamental domain.
    pub fn wrap(&self, q: Point) -> Point {
        let w = |v: f64, a: f64, b: f64| a + (v - a).rem_euclid(b - a);
        Point::new(
            if self.periodic_x { w(q.x, self.domain.x0, self.domain.x1) } else { q.x },
            if self.periodic_y { w(q.y, self.domain.y0, self.domain.y1) } else { q.y },
        )
    }

    /// Whether the (already wrapped) point lies in the open domain.
    pub fn contains(&self, q: Point) -> bool {
        if !(q.x.is_finite() && q.y.is_finite()) {
            return false;
        }
        let d = &self.domain;
        let in_x = self.periodic_x || (q.x > d.x0 && q.x < d.x1);
        let in_y = self.periodic_y || (q.y > d.y0 && q.y < d.y1);
        let in_disk = self.disk_radius.is_none_or(|r| q.x.hypot(q.y) < r);
        in_x && in_y && in_disk
    }

    /// Wraps and checks membership.
    pub fn normalize(&self, q: Point) -> Result<Point> {
        let w = self.wrap(q);
        if self.contains(w) {
            Ok(w)
        } else {
            Err(NavError::OutsideDomain { x: q.x, y: q.y })
        }
    }

    /// False when `q` is within `dist` of a non-periodic edge, of the disk
    /// boundary, or (sphere charts) within chordal distance `dist` of the pole.
    pub fn within_guard(&self, q: Point, dist: f64) -> bool {
        let w = self.wrap(q);
        if !self.contains(w) {
            return false;
        }
        let d = &self.domain;
        if !self.periodic_x && (w.x - d.x0 < dist || d.x1 - w.x < dist) {
            return false;
        }
        if !self.periodic_y && (w.y - d.y0 < dist || d.y1 - w.y < dist) {
            return false;
        }
        if let Some(r) = self.disk_radius {
            if r - w.x.hypot(w.y) < dist {
                return false;
            }
        }
        if self.pole_compactification {
            let r2 = w.x * w.x + w.y * w.y;
            if 2.0 / (1.0 + r2).sqrt() < dist {
                return false;
            }
        }
        true
    }

    /// Roughly `n x n` sample points covering the surface (cell-centred grid of
    /// the sample region, or a latitude/longitude grid for sphere charts).
    pub fn sample_points(&self, n: usize) -> Vec<Point> {
        if self.pole_compactification {
            let mut pts = Vec::with_capacity(n * n);
            for i in 0..n {
                let sigma = PI * (i as f64 + 0.5) / n as f64;
                let r = (sigma / 2.0).tan();
                for j in 0..n {
                    let a = 2.0 * PI * (j as f64 + 0.5) / n as f64;
                    pts.push(Point::new(r * a.cos(), r * a.sin()));
                }
            }
            return pts;
        }
        self.sample_region.grid(n).into_iter().filter(|&q| self.contains(self.wrap(q))).collect()
    }
}

/// A scalar field on the chart, differentiable to second order.
#[derive(Clone)]
pub enum Field {
    Constant(f64),
    Expr(Arc<Expr>),
    /// User closure evaluated on jets (exact derivatives).
    Analytic(Arc<dyn Fn(Jet2, Jet2) -> Jet2 + Send + Sync>),
    /// Value-only closure; derivatives by fourth-order central differences.
    Sampled(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Constant(c) => write!(f, "Constant({c})"),
            Field::Expr(e) => write!(f, "Expr({e})"),
            Field::Analytic(_) => f.write_str("Analytic(..)"),
            Field::Sampled(_) => f.write_str("Sampled(..)"),
        }
    }
}

impl Field {
    pub fn parse(src: &str) -> Result<Field> {
        let e = Expr::parse(src)?;
        if e.is_constant() {
            return Ok(Field::Constant(e.eval(0.0, 0.0)));
        }
        Ok(Field::Expr(Arc::new(e)))
    }

    pub fn value(&self, q: Point) -> f64 {
        match self {
            Field::Constant(c) => *c,
            Field::Expr(e) => e.eval(q.x, q.y),
            Field::Analytic(f) => f(Jet2::cst(q.x), Jet2::cst(q.y)).v,
            Field::Sampled(f) => f(q.x, q.y),
        }
    }

    pub fn jet(&self, q: Point) -> Jet2 {
        match self {
            Field::Constant(c) => Jet2::cst(*c),
            Field::Expr(e) => e.eval(Jet2::var(q.x, 0), Jet2::var(q.y, 1)),
            Field::Analytic(f) => f(Jet2::var(q.x, 0), Jet2::var(q.y, 1)),
            Field::Sampled(f) => fd_jet(&**f, q),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Field::Constant(c) if *c == 0.0)
    }
}

/// Fourth-order central differences. First derivatives use the step
/// `max(1e-5, 1e-5|x|)`; second derivatives use `max(1e-3, 1e-3|x|)`, where the
/// rounding error of the five-point stencil stays near 1e-10.
fn fd_jet(f: &dyn Fn(f64, f64) -> f64, q: Point) -> Jet2 {
    let mut j = Jet2::cst(f(q.x, q.y));
    let at = |dx: f64, dy: f64| f(q.x + dx, q.y + dy);
    let h1 = [1e-5 * q.x.abs().max(1.0), 1e-5 * q.y.abs().max(1.0)];
    let h2 = [1e-3 * q.x.abs().max(1.0), 1e-3 * q.y.abs().max(1.0)];
    let unit = |i: usize, s: f64| if i == 0 { (s, 0.0) } else { (0.0, s) };
    for i in 0..2 {
        let d = |s: f64| {
            let (dx, dy) = unit(i, s);
            at(dx, dy)
        };
        let h = h1[i];
        j.g[i] = (d(-2.0 * h) - 8.0 * d(-h) + 8.0 * d(h) - d(2.0 * h)) / (12.0 * h);
        let h = h2[i];
        j.h[i][i] = (-d(-2.0 * h) + 16.0 * d(-h) - 30.0 * j.v + 16.0 * d(h) - d(2.0 * h)) / (12.0 * h * h);
    }
    let cross = |hx: f64, hy: f64| (at(hx, hy) - at(hx, -hy) - at(-hx, hy) + at(-hx, -hy)) / (4.0 * hx * hy);
    let mixed = (4.0 * cross(h2[0], h2[1]) - cross(2.0 * h2[0], 2.0 * h2[1])) / 3.0;
    j.h[0][1] = mixed;
    j.h[1][0] = mixed;
    j
}

/// `m[k][i]` is the k-th chart component of the frame vector `e_i`.
pub type FrameMatrix = [[Jet2; 2]; 2];

/// A Riemannian metric on a chart, given by a g-orthonormal frame.
pub trait FrameMetric: Send + Sync {
    fn chart(&self) -> &Chart;

    /// Frame components (with first and second derivatives) at an already
    /// normalised chart point.
    fn frame_jet(&self, q: Point) -> Result<FrameMatrix>;
}

/// A conformal surface `e^{2f}(dx^2 + dy^2)` with frame `e_i = e^{-f} d/dx_i`.
#[derive(Debug, Clone)]
pub struct Surface {
    pub name: String,
    pub chart: Chart,
    pub conformal_factor: Field,
}

impl Surface {
    pub fn new(name: impl Into<String>, chart: Chart, conformal_factor: Field) -> Result<Self> {
        chart.validate()?;
        let s = Surface { name: name.into(), chart, conformal_factor };
        for q in s.chart.sample_points(16) {
            if !s.conformal_factor.value(q).is_finite() {
                return Err(NavError::validation(format!("conformal factor is not finite at ({}, {})", q.x, q.y)));
            }
        }
        Ok(s)
    }

    /// `[0, 2pi]^2` with the Euclidean metric.
    pub fn flat_torus() -> Self {
        let domain = Rect { x0: 0.0, x1: 2.0 * PI, y0: 0.0, y1: 2.0 * PI };
        Surface { name: "flat_torus".into(), chart: Chart::torus(domain), conformal_factor: Field::Constant(0.0) }
    }

    /// Torus chart `[0, 2pi]^2` with an arbitrary periodic conformal factor.
    pub fn conformal_torus(f: Field) -> Result<Self> {
        let domain = Rect { x0: 0.0, x1: 2.0 * PI, y0: 0.0, y1: 2.0 * PI };
        Surface::new("conformal", Chart::torus(domain), f)
    }

    /// Round sphere of the given radius in the stereographic chart
    /// (`f = log(2R / (1 + x^2 + y^2))`).
    pub fn sphere(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(NavError::validation(format!("sphere radius must be positive, got {radius}")));
        }
        let inf = f64::INFINITY;
        let chart = Chart {
            domain: Rect { x0: -inf, x1: inf, y0: -inf, y1: inf },
            euler_characteristic: Some(2),
            pole_compactification: true,
            sample_region: Rect { x0: -3.0, x1: 3.0, y0: -3.0, y1: 3.0 },
            ..Chart::new(Rect { x0: -inf, x1: inf, y0: -inf, y1: inf })
        };
        let two_r = 2.0 * radius;
        let f = Field::Analytic(Arc::new(move |x: Jet2, y: Jet2| (Jet2::cst(two_r) / (x * x + y * y + 1.0)).ln()));
        Ok(Surface { name: "sphere".into(), chart, conformal_factor: f })
    }

    /// Poincare disk `f = log(2 / (1 - x^2 - y^2))`, curvature -1.
    pub fn hyperbolic_disk() -> Self {
        let domain = Rect { x0: -1.0, x1: 1.0, y0: -1.0, y1: 1.0 };
        let chart = Chart {
            disk_radius: Some(1.0),
            sample_region: Rect { x0: -0.9, x1: 0.9, y0: -0.9, y1: 0.9 },
            ..Chart::new(domain)
        };
        let f = Field::Analytic(Arc::new(|x: Jet2, y: Jet2| (Jet2::cst(2.0) / (1.0 - x * x - y * y)).ln()));
        Surface { name: "hyperbolic_disk".into(), chart, conformal_factor: f }
    }

    /// Upper half-plane `f = -log y`, curvature -1.
    pub fn hyperbolic_half_plane() -> Self {
        let inf = f64::INFINITY;
        let domain = Rect { x0: -inf, x1: inf, y0: 0.0, y1: inf };
        let chart = Chart { sample_region: Rect { x0: -5.0, x1: 5.0, y0: 0.1, y1: 10.0 }, ..Chart::new(domain) };
        let f = Field::Analytic(Arc::new(|_x: Jet2, y: Jet2| -y.ln()));
        Surface { name: "hyperbolic_half_plane".into(), chart, conformal_factor: f }
    }

    /// `-e^{-2f} (f_xx + f_yy)`, the conformal-chart formula for the Gaussian curvature.
    pub fn gaussian_curvature_conformal(&self, q: Point) -> Result<f64> {
        let q = self.chart.normalize(q)?;
        let f = self.conformal_factor.jet(q);
        Ok(-(-2.0 * f.v).exp() * (f.h[0][0] + f.h[1][1]))
    }
}

impl FrameMetric for Surface {
    fn chart(&self) -> &Chart {
        &self.chart
    }

    fn frame_jet(&self, q: Point) -> Result<FrameMatrix> {
        let s = (-self.conformal_factor.jet(q)).exp();
        let z = Jet2::cst(0.0);
        Ok([[s, z], [z, s]])
    }
}

pub(crate) fn inv2<S: Scalar>(m: [[S; 2]; 2]) -> Result<[[S; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det.value().abs() > 0.0) || !det.value().is_finite() {
        return Err(NavError::numerical("singular frame matrix"));
    }
    Ok([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

/// Frame data at one point: frame, coframe, structural constants (with their
/// gradients) and Gaussian curvature.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    pub q: Point,
    pub frame: FrameMatrix,
    /// Frame values, `e[k][i]` = k-th chart component of `e_i`.
    pub e: [[f64; 2]; 2],
    /// Inverse of `e`; row `i` holds the chart components of the dual covector `e_i*`.
    pub coframe: [[f64; 2]; 2],
    /// Structural constants `[e1, e2] = c1 e1 + c2 e2`, with chart gradients.
    pub c: [Dual2; 2],
    pub kappa: f64,
}

impl LocalGeometry {
    pub fn at(metric: &dyn FrameMetric, q: Point) -> Result<Self> {
        let q = metric.chart().normalize(q)?;
        let frame = metric.frame_jet(q)?;
        let e = [[frame[0][0].v, frame[0][1].v], [frame[1][0].v, frame[1][1].v]];
        let coframe = inv2(e)?;
        let ed = [[frame[0][0].dual(), frame[0][1].dual()], [frame[1][0].dual(), frame[1][1].dual()]];
        let mut bracket = [Dual2::cst(0.0); 2];
        for (k, b) in bracket.iter_mut().enumerate() {
            for m in 0..2 {
                *b = *b + ed[m][0] * frame[k][1].partial(m) - ed[m][1] * frame[k][0].partial(m);
            }
        }
        let inv = inv2(ed)?;
        let c = [inv[0][0] * bracket[0] + inv[0][1] * bracket[1], inv[1][0] * bracket[0] + inv[1][1] * bracket[1]];
        let mut g = LocalGeometry { q, frame, e, coframe, c, kappa: 0.0 };
        let e1c2 = g.apply(0, &c[1].g);
        let e2c1 = g.apply(1, &c[0].g);
        g.kappa = -c[0].v * c[0].v - c[1].v * c[1].v + e1c2 - e2c1;
        if !g.kappa.is_finite() {
            return Err(NavError::numerical(format!("curvature is not finite at ({}, {})", q.x, q.y)));
        }
        Ok(g)
    }

    /// `e_i(f)` given the chart gradient of `f`.
    pub fn apply(&self, i: usize, grad: &[f64; 2]) -> f64 {
        self.e[0][i] * grad[0] + self.e[1][i] * grad[1]
    }

    /// `e_i(f)` as a first-order jet, from a second-order jet of `f`.
    pub fn derivative(&self, i: usize, f: &Jet2) -> Dual2 {
        self.frame[0][i].dual() * f.partial(0) + self.frame[1][i].dual() * f.partial(1)
    }

    /// Chart components of the vector with frame components `v`.
    pub fn vector_from_frame(&self, v: [f64; 2]) -> [f64; 2] {
        [self.e[0][0] * v[0] + self.e[0][1] * v[1], self.e[1][0] * v[0] + self.e[1][1] * v[1]]
    }

    pub fn vector_to_frame(&self, v: [f64; 2]) -> [f64; 2] {
        let c = &self.coframe;
        [c[0][0] * v[0] + c[0][1] * v[1], c[1][0] * v[0] + c[1][1] * v[1]]
    }

    /// Frame components `p(e_i)` of a covector with chart components `p`.
    pub fn covector_to_frame(&self, p: [f64; 2]) -> [f64; 2] {
        [self.e[0][0] * p[0] + self.e[1][0] * p[1], self.e[0][1] * p[0] + self.e[1][1] * p[1]]
    }

    pub fn covector_from_frame(&self, w: [f64; 2]) -> [f64; 2] {
        let c = &self.coframe;
        [c[0][0] * w[0] + c[1][0] * w[1], c[0][1] * w[0] + c[1][1] * w[1]]
    }

    /// Density of `dV_g` with respect to `dx dy`.
    pub fn volume_density(&self) -> f64 {
        1.0 / (self.e[0][0] * self.e[1][1] - self.e[0][1] * self.e[1][0]).abs()
    }
}

/// Coefficients `g_kl` of the metric in chart coordinates.
pub fn metric_coefficients(metric: &dyn FrameMetric, q: Point) -> Result<[[f64; 2]; 2]> {
    let c = coframe_values(metric, q)?;
    Ok(std::array::from_fn(|k| std::array::from_fn(|l| c[0][k] * c[0][l] + c[1][k] * c[1][l])))
}

/// Chart components of `(e1, e2)` at `q`.
pub fn frame_at(metric: &dyn FrameMetric, q: Point) -> Result<([f64; 2], [f64; 2])> {
    let q = metric.chart().normalize(q)?;
    let f = metric.frame_jet(q)?;
    Ok(([f[0][0].v, f[1][0].v], [f[0][1].v, f[1][1].v]))
}

pub fn structural_constants(metric: &dyn FrameMetric, q: Point) -> Result<(f64, f64)> {
    let g = LocalGeometry::at(metric, q)?;
    Ok((g.c[0].v, g.c[1].v))
}

/// `-c1^2 - c2^2 + e1(c2) - e2(c1)`.
pub fn gaussian_curvature(metric: &dyn FrameMetric, q: Point) -> Result<f64> {
    Ok(LocalGeometry::at(metric, q)?.kappa)
}

fn coframe_values(metric: &dyn FrameMetric, q: Point) -> Result<[[f64; 2]; 2]> {
    let q = metric.chart().normalize(q)?;
    let f = metric.frame_jet(q)?;
    inv2([[f[0][0].v, f[0][1].v], [f[1][0].v, f[1][1].v]])
}

/// `<a, b>_g` for tangent vectors in chart components.
pub fn metric_pairing(metric: &dyn FrameMetric, q: Point, a: [f64; 2], b: [f64; 2]) -> Result<f64> {
    let c = coframe_values(metric, q)?;
    let fa = [c[0][0] * a[0] + c[0][1] * a[1], c[1][0] * a[0] + c[1][1] * a[1]];
    let fb = [c[0][0] * b[0] + c[0][1] * b[1], c[1][0] * b[0] + c[1][1] * b[1]];
    Ok(fa[0] * fb[0] + fa[1] * fb[1])
}

pub fn norm(metric: &dyn FrameMetric, q: Point, a: [f64; 2]) -> Result<f64> {
    Ok(metric_pairing(metric, q, a, a)?.sqrt())
}

/// Lowers an index: the covector `<v, .>_g`.
pub fn flat(metric: &dyn FrameMetric, q: Point, v: [f64; 2]) -> Result<[f64; 2]> {
    let c = coframe_values(metric, q)?;
    let fv = [c[0][0] * v[0] + c[0][1] * v[1], c[1][0] * v[0] + c[1][1] * v[1]];
    Ok([c[0][0] * fv[0] + c[1][0] * fv[1], c[0][1] * fv[0] + c[1][1] * fv[1]])
}

/// Raises an index: `E E^T p`.
pub fn sharp(metric: &dyn FrameMetric, q: Point, p: [f64; 2]) -> Result<[f64; 2]> {
    let (e1, e2) = frame_at(metric, q)?;
    let w = [e1[0] * p[0] + e1[1] * p[1], e2[0] * p[0] + e2[1] * p[1]];
    Ok([e1[0] * w[0] + e2[0] * w[1], e1[1] * w[0] + e2[1] * w[1]])
}

/// Dual norm of a covector in chart components.
pub fn covector_norm(metric: &dyn FrameMetric, q: Point, p: [f64; 2]) -> Result<f64> {
    let (e1, e2) = frame_at(metric, q)?;
    Ok((e1[0] * p[0] + e1[1] * p[1]).hypot(e2[0] * p[0] + e2[1] * p[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bumpy_torus() -> Surface {
        Surface::conformal_torus(Field::parse("0.2*sin(x)*cos(2*y) + 0.1*cos(x+y)").unwrap()).unwrap()
    }

    #[test]
    fn frame_examples() {
        let (e1, e2) = frame_at(&Surface::flat_torus(), Point::new(1.0, 2.0)).unwrap();
        assert_eq!((e1, e2), ([1.0, 0.0], [0.0, 1.0]));
        let (e1, e2) = frame_at(&Surface::sphere(1.0).unwrap(), Point::new(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(e1[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e2[1], 0.5, epsilon = 1e-15);
        assert_eq!(e1[1], 0.0);
        let (e1, e2) = frame_at(&Surface::hyperbolic_disk(), Point::new(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(e1[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e2[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn points_outside_are_rejected() {
        let disk = Surface::hyperbolic_disk();
        assert!(matches!(frame_at(&disk, Point::new(0.8, 0.8)), Err(NavError::OutsideDomain { .. })));
        assert!(frame_at(&Surface::hyperbolic_half_plane(), Point::new(0.0, -1.0)).is_err());
        // periodic charts wrap instead
        assert!(frame_at(&Surface::flat_torus(), Point::new(-20.0, 100.0)).is_ok());
    }

    #[test]
    fn structural_constants_examples() {
        assert_eq!(structural_constants(&Surface::flat_torus(), Point::new(0.3, 0.2)).unwrap(), (0.0, 0.0));
        let (c1, c2) = structural_constants(&Surface::sphere(1.0).unwrap(), Point::new(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(c1, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c2, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn structural_constants_match_numeric_commutator() {
        let s = bumpy_torus();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let q =
                Point::new(rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU));
            let h = 1e-4;
            let fr = |x: f64, y: f64| frame_at(&s, Point::new(x, y)).unwrap();
            let (e1, e2) = fr(q.x, q.y);
            // d/dx_m of e_i components, five-point
            let d = |m: usize, i: usize| -> [f64; 2] {
                let at = |t: f64| {
                    let (a, b) = if m == 0 { fr(q.x + t, q.y) } else { fr(q.x, q.y + t) };
                    if i == 0 {
                        a
                    } else {
                        b
                    }
                };
                let (a, b, c, dd) = (at(-2.0 * h), at(-h), at(h), at(2.0 * h));
                [
                    (a[0] - 8.0 * b[0] + 8.0 * c[0] - dd[0]) / (12.0 * h),
                    (a[1] - 8.0 * b[1] + 8.0 * c[1] - dd[1]) / (12.0 * h),
                ]
            };
            let mut br = [0.0; 2];
            for k in 0..2 {
                for m in 0..2 {
                    br[k] += e1[m] * d(m, 1)[k] - e2[m] * d(m, 0)[k];
                }
            }
            let g = LocalGeometry::at(&s, q).unwrap();
            let c = g.vector_to_frame(br);
            assert_abs_diff_eq!(c[0], g.c[0].v, epsilon = 1e-6);
            assert_abs_diff_eq!(c[1], g.c[1].v, epsilon = 1e-6);
        }
    }

    #[test]
    fn gaussian_curvature_of_model_surfaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sphere = Surface::sphere(1.0).unwrap();
        let small = Surface::sphere(0.5).unwrap();
        let disk = Surface::hyperbolic_disk();
        let half = Surface::hyperbolic_half_plane();
        for _ in 0..100 {
            let q = Point::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            assert_abs_diff_eq!(gaussian_curvature(&sphere, q).unwrap(), 1.0, epsilon = 1e-8);
            assert_abs_diff_eq!(gaussian_curvature(&small, q).unwrap(), 4.0, epsilon = 1e-8);
            let d = Point::new(q.x / 4.5, q.y / 4.5);
            assert_abs_diff_eq!(gaussian_curvature(&disk, d).unwrap(), -1.0, epsilon = 1e-8);
            let h = Point::new(q.x, q.y.abs() + 0.01);
            assert_abs_diff_eq!(gaussian_curvature(&half, h).unwrap(), -1.0, epsilon = 1e-8);
            assert_eq!(gaussian_curvature(&Surface::flat_torus(), q).unwrap(), 0.0);
        }
    }

    #[test]
    fn frame_curvature_matches_laplacian_formula() {
        let s = bumpy_torus();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let q = Point::new(rng.random_range(0.0..6.3), rng.random_range(0.0..6.3));
            let a = gaussian_curvature(&s, q).unwrap();
            let b = s.gaussian_curvature_conformal(q).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn sampled_fields_fall_back_to_differences() {
        let exact = Field::parse("sin(x)*exp(0.3*y) + x^2*y").unwrap();
        let sampled = Field::Sampled(Arc::new(|x: f64, y: f64| x.sin() * (0.3 * y).exp() + x * x * y));
        for &(x, y) in &[(0.4, -0.3), (2.5, 1.7), (-11.0, 3.0)] {
            let q = Point::new(x, y);
            let (a, b) = (exact.jet(q), sampled.jet(q));
            let scale = 1.0 + a.v.abs();
            for i in 0..2 {
                assert_abs_diff_eq!(a.g[i], b.g[i], epsilon = 1e-8 * scale);
                for j in 0..2 {
                    assert_abs_diff_eq!(a.h[i][j], b.h[i][j], epsilon = 1e-6 * scale);
                }
            }
        }
    }

    #[test]
    fn pairing_examples() {
        let flat = Surface::flat_torus();
        let q = Point::new(1.0, 1.0);
        assert_eq!(metric_pairing(&flat, q, [1.0, 0.0], [0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(norm(&flat, q, [3.0, 4.0]).unwrap(), 5.0);
        let sphere = Surface::sphere(1.0).unwrap();
        assert_abs_diff_eq!(norm(&sphere, Point::new(0.0, 0.0), [1.0, 0.0]).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn frames_are_orthonormal_and_sharp_inverts_flat() {
        let s = bumpy_torus();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let q = Point::new(rng.random_range(0.0..6.3), rng.random_range(0.0..6.3));
            let (e1, e2) = frame_at(&s, q).unwrap();
            assert_abs_diff_eq!(metric_pairing(&s, q, e1, e1).unwrap(), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(metric_pairing(&s, q, e2, e2).unwrap(), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(metric_pairing(&s, q, e1, e2).unwrap(), 0.0, epsilon = 1e-10);
            let v = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let back = sharp(&s, q, flat(&s, q, v).unwrap()).unwrap();
            assert_abs_diff_eq!(back[0], v[0], epsilon = 1e-14 * (1.0 + v[0].abs()));
            assert_abs_diff_eq!(back[1], v[1], epsilon = 1e-14 * (1.0 + v[1].abs()));
            let p = flat(&s, q, v).unwrap();
            assert_abs_diff_eq!(covector_norm(&s, q, p).unwrap(), norm(&s, q, v).unwrap(), epsilon = 1e-13);
        }
    }

    #[test]
    fn degenerate_domains_are_rejected() {
        assert!(Rect::new(1.0, 1.0, 0.0, 1.0).is_err());
        let chart = Chart {
            periodic_x: true,
            periodic_y: true,
            euler_characteristic: None,
            ..Chart::new(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap())
        };
        assert!(chart.validate().is_err());
    }

    #[test]
    fn sphere_guard_measures_distance_to_pole() {
        let s = Surface::sphere(1.0).unwrap();
        assert!(s.chart.within_guard(Point::new(100.0, 0.0), 1e-3));
        assert!(!s.chart.within_guard(Point::new(3000.0, 0.0), 1e-3));
    }
}
