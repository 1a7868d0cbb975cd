//! Quadrature over the surface and over the level set `H = {h = 1}`, and the
//! Gauss-Bonnet inequality with its exact decomposition.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use crate::curvature::FiberGeometry;
use crate::duality::dualize_zermelo;
use crate::error::{NavError, Result};
use crate::geometry::{Chart, FrameMetric, LocalGeometry, Point};
use crate::hamiltonian::{CoZermelo, FiberPoint, Problem};
use crate::par::{self, Execution};

pub const MIN_RESOLUTION: usize = 16;
pub const DEFAULT_RESOLUTION: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureScheme {
    /// Equally spaced nodes in every direction (torus charts).
    PeriodicTrapezoid,
    /// Gauss-Legendre in the polar angle of the sphere, trapezoid in longitude.
    GaussLegendre,
}

/// Resolution and rule for integrals over `M` and `H`. On sphere charts `nx`
/// counts polar-angle nodes and `ny` longitude nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureGrid {
    pub nx: usize,
    pub ny: usize,
    pub ntheta: usize,
    pub scheme: QuadratureScheme,
    pub compactified: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl QuadratureGrid {
    /// Picks the rule matching the chart; non-compact charts are rejected.
    pub fn for_chart(chart: &Chart, nx: usize, ny: usize, ntheta: usize) -> Result<Self> {
        if nx.min(ny).min(ntheta) < MIN_RESOLUTION {
            return Err(NavError::validation(format!(
                "quadrature resolution {nx}x{ny}x{ntheta} is below {MIN_RESOLUTION}"
            )));
        }
        let scheme = if chart.pole_compactification {
            QuadratureScheme::GaussLegendre
        } else if chart.periodic_x && chart.periodic_y {
            QuadratureScheme::PeriodicTrapezoid
        } else {
            return Err(NavError::validation("surface integrals need a torus or sphere chart"));
        };
        Ok(QuadratureGrid {
            nx,
            ny,
            ntheta,
            scheme,
            compactified: chart.pole_compactification,
            execution: Execution::default(),
        })
    }

    pub fn cubic(chart: &Chart, n: usize) -> Result<Self> {
        Self::for_chart(chart, n, n, n)
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    /// Base nodes with their coordinate weights (`dx dy`, without the volume density).
    pub fn base_nodes(&self, chart: &Chart) -> Result<Vec<(Point, f64)>> {
        match self.scheme {
            QuadratureScheme::PeriodicTrapezoid => {
                if !(chart.periodic_x && chart.periodic_y) {
                    return Err(NavError::validation("periodic trapezoid needs a torus chart"));
                }
                let d = chart.domain;
                let (hx, hy) = ((d.x1 - d.x0) / self.nx as f64, (d.y1 - d.y0) / self.ny as f64);
                let mut out = Vec::with_capacity(self.nx * self.ny);
                for j in 0..self.ny {
                    for i in 0..self.nx {
                        out.push((Point::new(d.x0 + i as f64 * hx, d.y0 + j as f64 * hy), hx * hy));
                    }
                }
                Ok(out)
            }
            QuadratureScheme::GaussLegendre => {
                if !chart.pole_compactification {
                    return Err(NavError::validation("Gauss-Legendre rule is only used on sphere charts"));
                }
                // r = tan(s/2) maps s in (0, pi) onto the whole plane
                let (nodes, weights) = gauss_legendre(self.nx);
                let ha = TAU / self.ny as f64;
                let mut out = Vec::with_capacity(self.nx * self.ny);
                for (u, w) in nodes.iter().zip(&weights) {
                    let s = 0.5 * PI * (u + 1.0);
                    let ws = 0.5 * PI * w;
                    let r = (s / 2.0).tan();
                    let dr = 0.5 / (s / 2.0).cos().powi(2);
                    for j in 0..self.ny {
                        let a = j as f64 * ha;
                        out.push((Point::new(r * a.cos(), r * a.sin()), ws * ha * r * dr));
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.ntheta).map(|k| TAU * k as f64 / self.ntheta as f64).collect()
    }

    pub fn dtheta(&self) -> f64 {
        TAU / self.ntheta as f64
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `int_M f dV_g`.
pub fn integrate_over_m<F>(metric: &dyn FrameMetric, f: F, grid: &QuadratureGrid) -> Result<f64>
where
    F: Fn(Point) -> Result<f64> + Sync + Send,
{
    let nodes = grid.base_nodes(metric.chart())?;
    let vals = par::try_map(grid.execution, nodes.len(), |i| {
        let (q, w) = nodes[i];
        let g = LocalGeometry::at(metric, q)?;
        Ok::<f64, NavError>(w * g.volume_density() * f(q)?)
    })?;
    Ok(vals.iter().sum())
}

/// The co-Zermelo problem whose level set and Liouville volume are used:
/// the problem itself, or the dual of a Zermelo problem (same Hamiltonian).
fn cozermelo_of(problem: &Problem) -> Result<CoZermelo> {
    match problem {
        Problem::CoZermelo(p) => Ok(p.clone()),
        Problem::Zermelo(z) => match dualize_zermelo(z, None)?.dual {
            Problem::CoZermelo(p) => Ok(p),
            Problem::Zermelo(_) => unreachable!("dual of a Zermelo problem is co-Zermelo"),
        },
    }
}

/// `int_H F dL`, pulled back to `int_M int_0^{2 pi} F phi dtheta dV_g`. `F`
/// receives co-Zermelo fiber points (of the dual, for Zermelo problems).
pub fn integrate_over_h<F>(problem: &Problem, f: F, grid: &QuadratureGrid) -> Result<f64>
where
    F: Fn(&FiberPoint) -> Result<f64> + Sync + Send,
{
    let p = cozermelo_of(problem)?;
    let nodes = grid.base_nodes(p.metric.chart())?;
    let thetas = grid.thetas();
    let vals = par::try_map(grid.execution, nodes.len(), |i| {
        let (q, w) = nodes[i];
        let g = FiberGeometry::new(&*p.metric, &*p.form, q)?;
        let mut acc = 0.0;
        for &th in &thetas {
            acc += f(&FiberPoint { q, theta: th })? * g.phi(th);
        }
        Ok::<f64, NavError>(w * g.local.volume_density() * acc * grid.dtheta())
    })?;
    Ok(vals.iter().sum())
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussBonnetReport {
    /// `(1/4 pi^2) int_H phi kappa dL`.
    pub lhs_cozermelo: f64,
    /// `(1/4 pi^2) int kappa_mag dR_g`.
    pub lhs_magnetic: f64,
    pub chi: i32,
    /// `(1/2 pi) int_M Omega^2 dV_g`.
    pub omega_term: f64,
    /// `(1/4 pi^2) int_H (L phi / 2)^2 dL / phi`.
    pub schwarzian_term: f64,
    /// `int_H kappa dL`.
    pub total_curvature: f64,
    /// `int_H dL`.
    pub volume_h: f64,
    /// `|lhs_magnetic - chi - omega_term|`.
    pub identity_residual: f64,
    /// `|lhs_cozermelo - chi - omega_term - schwarzian_term|`.
    pub decomposition_residual: f64,
    pub tolerance: f64,
    pub inequality_holds: bool,
    /// `lhs_cozermelo` exceeds `chi` by more than the tolerance.
    pub strict: bool,
    pub grid: QuadratureGrid,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default)]
struct NodeSums {
    a: f64,
    b: f64,
    d: f64,
    e: f64,
    vol: f64,
    omega2: f64,
}

/// Every integral of the Gauss-Bonnet statement from one pass over the grid.
pub fn gauss_bonnet_report(problem: &Problem, grid: &QuadratureGrid, tolerance: f64) -> Result<GaussBonnetReport> {
    let p = cozermelo_of(problem)?;
    let chart = p.metric.chart();
    let chi = chart
        .euler_characteristic
        .filter(|_| chart.is_compact())
        .ok_or_else(|| NavError::validation("Gauss-Bonnet needs a compact surface"))?;
    let nodes = grid.base_nodes(chart)?;
    let thetas = grid.thetas();
    let dt = grid.dtheta();
    let sums = par::try_map(grid.execution, nodes.len(), |i| {
        let (q, w) = nodes[i];
        let g = FiberGeometry::new(&*p.metric, &*p.form, q)?;
        let wv = w * g.local.volume_density();
        let mut s = NodeSums::default();
        for &th in &thetas {
            let c = g.sample(th);
            s.a += c.phi * c.phi * c.kappa;
            s.b += c.kappa_mag;
            s.d += (c.l_phi / 2.0).powi(2);
            s.e += c.kappa * c.phi;
            s.vol += c.phi;
        }
        let om = g.omega();
        Ok::<NodeSums, NavError>(NodeSums {
            a: wv * dt * s.a,
            b: wv * dt * s.b,
            d: wv * dt * s.d,
            e: wv * dt * s.e,
            vol: wv * dt * s.vol,
            omega2: wv * om * om,
        })
    })?;
    let total = sums.iter().fold(NodeSums::default(), |acc, s| NodeSums {
        a: acc.a + s.a,
        b: acc.b + s.b,
        d: acc.d + s.d,
        e: acc.e + s.e,
        vol: acc.vol + s.vol,
        omega2: acc.omega2 + s.omega2,
    });
    let four_pi2 = 4.0 * PI * PI;
    let lhs_cozermelo = total.a / four_pi2;
    let lhs_magnetic = total.b / four_pi2;
    let omega_term = total.omega2 / TAU;
    let schwarzian_term = total.d / four_pi2;
    let chif = chi as f64;
    log::debug!(
        "{} nodes x {} angles: lhs {lhs_cozermelo}, omega term {omega_term}, schwarzian term {schwarzian_term}",
        nodes.len(),
        thetas.len()
    );
    Ok(GaussBonnetReport {
        lhs_cozermelo,
        lhs_magnetic,
        chi,
        omega_term,
        schwarzian_term,
        total_curvature: total.e,
        volume_h: total.vol,
        identity_residual: (lhs_magnetic - chif - omega_term).abs(),
        decomposition_residual: (lhs_cozermelo - chif - omega_term - schwarzian_term).abs(),
        tolerance,
        inequality_holds: lhs_cozermelo >= chif - tolerance && lhs_magnetic >= chif - tolerance,
        strict: lhs_cozermelo > chif + tolerance,
        grid: *grid,
    })
}

/// `int_H kappa dL`.
pub fn total_curvature(problem: &Problem, grid: &QuadratureGrid) -> Result<f64> {
    Ok(gauss_bonnet_report(problem, grid, DEFAULT_TOLERANCE)?.total_curvature)
}
