//! Control curvature: magnetic curvature, the Schwarzian-type correction, the
//! closed-form co-Zermelo curvature and a bracket-based numerical oracle.

use serde::Serialize;

use crate::drift::{omega_jet, FrameField};
use crate::duality::{dualize_zermelo, DualProblem};
use crate::error::{NavError, Result};
use crate::geometry::{FrameMetric, LocalGeometry, Point, Rect};
use crate::hamiltonian::{cozermelo_field, zermelo_field_canonical, CotangentPoint, FiberPoint, Problem, Zermelo};
use crate::jet::{Dual2, Dual3, Jet, Jet2, Jet3, Scalar};

/// Everything the closed-form curvature needs at one base point.
#[derive(Debug, Clone)]
pub struct FiberGeometry {
    pub local: LocalGeometry,
    ups: [Jet2; 2],
    omega: Dual2,
}

/// Curvature quantities at one fiber point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberCurvature {
    pub phi: f64,
    pub kappa_gauss: f64,
    pub omega: f64,
    pub kappa_mag: f64,
    /// Derivative of `phi` along the co-Zermelo field.
    pub l_phi: f64,
    pub schwarzian: f64,
    pub kappa: f64,
}

impl FiberGeometry {
    pub fn new(metric: &dyn FrameMetric, form: &dyn FrameField, q: Point) -> Result<Self> {
        let local = LocalGeometry::at(metric, q)?;
        let ups = form.frame_components(local.q)?;
        let n = ups[0].v.hypot(ups[1].v);
        if !(n < 1.0) {
            return Err(NavError::validation(format!(
                "drift norm {n} at ({}, {}) is not below 1",
                local.q.x, local.q.y
            )));
        }
        let omega = omega_jet(&local, &ups);
        Ok(FiberGeometry { local, ups, omega })
    }

    pub fn kappa_gauss(&self) -> f64 {
        self.local.kappa
    }

    pub fn omega(&self) -> f64 {
        self.omega.v
    }

    /// `(e1(Omega), e2(Omega))`.
    pub fn omega_derivatives(&self) -> [f64; 2] {
        [self.local.apply(0, &self.omega.g), self.local.apply(1, &self.omega.g)]
    }

    pub fn drift(&self) -> [f64; 2] {
        [self.ups[0].v, self.ups[1].v]
    }

    pub fn phi(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        1.0 + self.ups[0].v * c + self.ups[1].v * s
    }

    /// `kappa_g + Omega^2 + sin(theta) e1(Omega) - cos(theta) e2(Omega)`.
    pub fn kappa_mag(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let [d1, d2] = self.omega_derivatives();
        self.local.kappa + self.omega.v * self.omega.v + s * d1 - c * d2
    }

    /// First and second derivatives of `phi` along the co-Zermelo field, by
    /// the chain rule through jets in `(x, y, theta)`.
    pub fn flow_derivatives(&self, theta: f64) -> (f64, f64) {
        let th = Jet3::var(theta, 2);
        let (s, c) = (th.sin(), th.cos());
        let phi: Jet3 = self.ups[0].embed::<3>() * c + self.ups[1].embed::<3>() * s + 1.0;
        let thd = Dual3::var(theta, 2);
        let (sd, cd) = (thd.sin(), thd.cos());
        let e = |k: usize, i: usize| -> Dual3 { self.local.frame[k][i].dual().embed::<3>() };
        let pd = phi.dual();
        let field: [Dual3; 3] = [
            (e(0, 0) * cd + e(0, 1) * sd) / pd,
            (e(1, 0) * cd + e(1, 1) * sd) / pd,
            (self.local.c[0].embed::<3>() * cd + self.local.c[1].embed::<3>() * sd + self.omega.embed::<3>()) / pd,
        ];
        let mut l_phi = Dual3::cst(0.0);
        for (a, f) in field.iter().enumerate() {
            l_phi = l_phi + *f * phi.partial(a);
        }
        let l2_phi = (0..3).map(|a| field[a].v * l_phi.g[a]).sum();
        (l_phi.v, l2_phi)
    }

    /// `S(phi) = phi L(L phi / 2) - (L phi / 2)^2` along the co-Zermelo field.
    pub fn schwarzian(&self, theta: f64) -> f64 {
        let phi = self.phi(theta);
        let (l1, l2) = self.flow_derivatives(theta);
        phi * l2 / 2.0 - (l1 / 2.0).powi(2)
    }

    /// `(kappa_mag - S(phi)) / phi^2`.
    pub fn kappa_cozermelo(&self, theta: f64) -> f64 {
        self.sample(theta).kappa
    }

    pub fn sample(&self, theta: f64) -> FiberCurvature {
        let phi = self.phi(theta);
        let kappa_mag = self.kappa_mag(theta);
        let (l1, l2) = self.flow_derivatives(theta);
        let schwarzian = phi * l2 / 2.0 - (l1 / 2.0).powi(2);
        FiberCurvature {
            phi,
            kappa_gauss: self.local.kappa,
            omega: self.omega.v,
            kappa_mag,
            l_phi: l1,
            schwarzian,
            kappa: (kappa_mag - schwarzian) / (phi * phi),
        }
    }
}

pub fn kappa_mag(metric: &dyn FrameMetric, form: &dyn FrameField, fp: &FiberPoint) -> Result<f64> {
    Ok(FiberGeometry::new(metric, form, fp.q)?.kappa_mag(fp.theta))
}

pub fn schwarzian(metric: &dyn FrameMetric, form: &dyn FrameField, fp: &FiberPoint) -> Result<f64> {
    Ok(FiberGeometry::new(metric, form, fp.q)?.schwarzian(fp.theta))
}

pub fn kappa_cozermelo(metric: &dyn FrameMetric, form: &dyn FrameField, fp: &FiberPoint) -> Result<f64> {
    Ok(FiberGeometry::new(metric, form, fp.q)?.kappa_cozermelo(fp.theta))
}

/// Curvature of the Zermelo problem at the covector `lambda`: the co-Zermelo
/// curvature of the dual problem at the same covector.
pub fn kappa_zermelo_covector(dual: &DualProblem, lambda: &CotangentPoint) -> Result<f64> {
    let fp = dual.dual.fiber_point_of(lambda)?;
    kappa_cozermelo(&**dual.dual.metric(), &**dual.dual.drift(), &fp)
}

/// Curvature of the Zermelo problem at a fiber point (polar angle coordinate).
pub fn kappa_zermelo_with(dual: &DualProblem, fp: &FiberPoint) -> Result<f64> {
    let lambda = dual.source.covector_of(fp)?;
    kappa_zermelo_covector(dual, &lambda)
}

/// Builds the dual problem (checking the drift on `region`) and evaluates
/// the curvature once; use [`kappa_zermelo_with`] for repeated evaluation.
pub fn kappa_zermelo(problem: &Zermelo, fp: &FiberPoint, region: Option<Rect>) -> Result<f64> {
    kappa_zermelo_with(&dualize_zermelo(problem, region)?, fp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureKind {
    Gaussian,
    Magnetic,
    Cozermelo,
    Oracle,
}

/// A curvature function on the level set of a problem.
#[derive(Clone)]
pub struct CurvatureField {
    problem: Problem,
    kind: CurvatureKind,
    dual: Option<DualProblem>,
}

impl CurvatureField {
    /// For Zermelo problems the dual is built first (checking the drift on `region`).
    pub fn new(problem: &Problem, kind: CurvatureKind, region: Option<Rect>) -> Result<Self> {
        let dual = match problem {
            Problem::Zermelo(z) if kind != CurvatureKind::Gaussian && kind != CurvatureKind::Oracle => {
                Some(dualize_zermelo(z, region)?)
            }
            _ => None,
        };
        Ok(CurvatureField { problem: problem.clone(), kind, dual })
    }

    pub fn kind(&self) -> CurvatureKind {
        self.kind
    }

    pub fn eval(&self, fp: &FiberPoint) -> Result<f64> {
        match (self.kind, &self.dual) {
            (CurvatureKind::Gaussian, _) => Ok(LocalGeometry::at(&**self.problem.metric(), fp.q)?.kappa),
            (CurvatureKind::Oracle, _) => Ok(problem_oracle(&self.problem, fp)?.kappa),
            (kind, Some(dual)) => {
                let lambda = dual.source.covector_of(fp)?;
                let dfp = dual.dual.fiber_point_of(&lambda)?;
                let g = FiberGeometry::new(&**dual.dual.metric(), &**dual.dual.drift(), dfp.q)?;
                Ok(if kind == CurvatureKind::Magnetic { g.kappa_mag(dfp.theta) } else { g.kappa_cozermelo(dfp.theta) })
            }
            (kind, None) => {
                let g = FiberGeometry::new(&**self.problem.metric(), &**self.problem.drift(), fp.q)?;
                Ok(if kind == CurvatureKind::Magnetic { g.kappa_mag(fp.theta) } else { g.kappa_cozermelo(fp.theta) })
            }
        }
    }

    /// Curvature at the point reached by an integrator state of the problem.
    pub fn eval_state(&self, state: &[f64]) -> Result<f64> {
        let (fp, lambda) = self.problem.decode_state(state)?;
        match (self.kind, &self.dual) {
            (CurvatureKind::Magnetic | CurvatureKind::Cozermelo, Some(dual)) => {
                let dfp = dual.dual.fiber_point_of(&lambda)?;
                let g = FiberGeometry::new(&**dual.dual.metric(), &**dual.dual.drift(), dfp.q)?;
                Ok(if self.kind == CurvatureKind::Magnetic {
                    g.kappa_mag(dfp.theta)
                } else {
                    g.kappa_cozermelo(dfp.theta)
                })
            }
            _ => self.eval(&fp),
        }
    }
}

/// Result of the bracket oracle: the decomposition
/// `[h, [v, h]] = kappa v + a [v, h] + b h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleReport {
    pub kappa: f64,
    /// `|a [v, h]|`, the transverse component.
    pub residual_transverse: f64,
    /// `|b h|`, the component along the flow.
    pub residual_along_h: f64,
    /// Largest residual relative to `max(|kappa v|, 1)`.
    pub purity: f64,
}

pub type Vec3 = [f64; 3];

const ORACLE_STEP: f64 = 1e-3;

fn directional<F>(f: &F, z: Vec3, w: Vec3, eps: f64) -> Result<Vec3>
where
    F: Fn(Vec3) -> Result<Vec3>,
{
    let at = |s: f64| f([z[0] + s * w[0], z[1] + s * w[1], z[2] + s * w[2]]);
    let (a, b, c, d) = (at(-2.0 * eps)?, at(-eps)?, at(eps)?, at(2.0 * eps)?);
    Ok(std::array::from_fn(|i| (a[i] - 8.0 * b[i] + 8.0 * c[i] - d[i]) / (12.0 * eps)))
}

/// `[a, b] = Db . a - Da . b` by five-point directional differences.
pub fn lie_bracket<A, B>(a: &A, b: &B, z: Vec3, eps: f64) -> Result<Vec3>
where
    A: Fn(Vec3) -> Result<Vec3>,
    B: Fn(Vec3) -> Result<Vec3>,
{
    let (av, bv) = (a(z)?, b(z)?);
    let db = directional(b, z, av, eps)?;
    let da = directional(a, z, bv, eps)?;
    Ok(std::array::from_fn(|i| db[i] - da[i]))
}

fn solve3(m: [Vec3; 3], rhs: Vec3) -> Result<Vec3> {
    // columns m[0], m[1], m[2]
    let det = |a: Vec3, b: Vec3, c: Vec3| {
        a[0] * (b[1] * c[2] - b[2] * c[1]) - b[0] * (a[1] * c[2] - a[2] * c[1]) + c[0] * (a[1] * b[2] - a[2] * b[1])
    };
    let d = det(m[0], m[1], m[2]);
    if !(d.abs() > 1e-300) {
        return Err(NavError::numerical("oracle frame (v, [v,h], h) is degenerate"));
    }
    Ok([det(rhs, m[1], m[2]) / d, det(m[0], rhs, m[2]) / d, det(m[0], m[1], rhs) / d])
}

fn norm3(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Control curvature from its definition `[h, [v, h]] = kappa v`, with both
/// brackets computed by nested finite differences of the vector fields on
/// the `(x, y, theta)` chart of the level set.
pub fn curvature_bracket_oracle<H, V>(h: H, v: V, z: Vec3) -> Result<OracleReport>
where
    H: Fn(Vec3) -> Result<Vec3>,
    V: Fn(Vec3) -> Result<Vec3>,
{
    let w = |p: Vec3| lie_bracket(&v, &h, p, ORACLE_STEP);
    let hh = lie_bracket(&h, &w, z, ORACLE_STEP)?;
    let (vz, wz, hz) = (v(z)?, w(z)?, h(z)?);
    let c = solve3([vz, wz, hz], hh)?;
    let residual_transverse = (c[1] * norm3(wz)).abs();
    let residual_along_h = (c[2] * norm3(hz)).abs();
    let scale = (c[0].abs() * norm3(vz)).max(1.0);
    Ok(OracleReport {
        kappa: c[0],
        residual_transverse,
        residual_along_h,
        purity: residual_transverse.max(residual_along_h) / scale,
    })
}

/// Scale `mu` of the vertical field `v = mu d/dtheta`, from a fiber curve
/// `omega(theta)` (frame components of the covector): with
/// `omega'' = A omega + B omega'`, the normalisation `omega_ss = -omega + b omega_s`
/// gives `mu = 1 / sqrt(-A)`.
pub fn vertical_scale<C>(curve: C, theta: f64) -> Result<f64>
where
    C: Fn(Jet<1>) -> [Jet<1>; 2],
{
    let w = curve(Jet::var(theta, 0));
    let (o, d1, d2) = ([w[0].v, w[1].v], [w[0].g[0], w[1].g[0]], [w[0].h[0][0], w[1].h[0][0]]);
    let cross = |a: [f64; 2], b: [f64; 2]| a[0] * b[1] - a[1] * b[0];
    let a = cross(d2, d1) / cross(o, d1);
    if !(a < 0.0) {
        return Err(NavError::numerical("fiber curve is not strictly convex around the origin"));
    }
    Ok(1.0 / (-a).sqrt())
}

fn cozermelo_oracle_fields<'a>(
    metric: &'a dyn FrameMetric,
    form: &'a dyn FrameField,
) -> (impl Fn(Vec3) -> Result<Vec3> + 'a, impl Fn(Vec3) -> Result<Vec3> + 'a) {
    let h = move |z: Vec3| {
        let (qd, td) = cozermelo_field(metric, form, &FiberPoint::new(z[0], z[1], z[2]))?;
        Ok([qd[0], qd[1], td])
    };
    let v = move |z: Vec3| {
        let q = metric.chart().normalize(Point::new(z[0], z[1]))?;
        let u = form.frame_values(q)?;
        let mu = vertical_scale(|t: Jet<1>| [t.cos() + u[0], t.sin() + u[1]], z[2])?;
        Ok([0.0, 0.0, mu])
    };
    (h, v)
}

fn zermelo_oracle_fields<'a>(
    metric: &'a dyn FrameMetric,
    vector: &'a dyn FrameField,
) -> (impl Fn(Vec3) -> Result<Vec3> + 'a, impl Fn(Vec3) -> Result<Vec3> + 'a) {
    let h = move |z: Vec3| {
        let g = LocalGeometry::at(metric, Point::new(z[0], z[1]))?;
        let x = vector.frame_values(g.q)?;
        let (s, c) = z[2].sin_cos();
        let rho = 1.0 / (1.0 + x[0] * c + x[1] * s);
        let pf = [rho * c, rho * s];
        let p = g.covector_from_frame(pf);
        let (qd, pd) = zermelo_field_canonical(metric, vector, &CotangentPoint { q: Point::new(z[0], z[1]), p })?;
        let mut pfd = [0.0; 2];
        for (i, d) in pfd.iter_mut().enumerate() {
            for k in 0..2 {
                let grad = g.frame[k][i].g;
                *d += (grad[0] * qd[0] + grad[1] * qd[1]) * p[k] + g.e[k][i] * pd[k];
            }
        }
        let td = (pf[0] * pfd[1] - pf[1] * pfd[0]) / (pf[0] * pf[0] + pf[1] * pf[1]);
        Ok([qd[0], qd[1], td])
    };
    let v = move |z: Vec3| {
        let q = metric.chart().normalize(Point::new(z[0], z[1]))?;
        let x = vector.frame_values(q)?;
        let mu = vertical_scale(
            |t: Jet<1>| {
                let (s, c) = (t.sin(), t.cos());
                let rho = (c * x[0] + s * x[1] + 1.0).recip();
                [rho * c, rho * s]
            },
            z[2],
        )?;
        Ok([0.0, 0.0, mu])
    };
    (h, v)
}

/// Bracket oracle on the problem's own flow: the explicit `(q, theta)` field
/// for co-Zermelo, the canonical equations mapped to polar fiber angles for
/// Zermelo.
pub fn problem_oracle(problem: &Problem, fp: &FiberPoint) -> Result<OracleReport> {
    let z = [fp.q.x, fp.q.y, fp.theta];
    match problem {
        Problem::CoZermelo(p) => {
            let (h, v) = cozermelo_oracle_fields(&*p.metric, &*p.form);
            curvature_bracket_oracle(h, v, z)
        }
        Problem::Zermelo(p) => {
            let (h, v) = zermelo_oracle_fields(&*p.metric, &*p.vector);
            curvature_bracket_oracle(h, v, z)
        }
    }
}

/// `L_{[h_g, v_g]} Omega` two ways: the coordinate formula
/// `sin(theta) e1(Omega) - cos(theta) e2(Omega)`, and a numerical commutator of
/// the geodesic field `h_g` and `v_g = d/dtheta` applied to finite differences
/// of `Omega`.
pub fn magnetic_bracket_term(metric: &dyn FrameMetric, form: &dyn FrameField, fp: &FiberPoint) -> Result<(f64, f64)> {
    let g = FiberGeometry::new(metric, form, fp.q)?;
    let [d1, d2] = g.omega_derivatives();
    let (s, c) = fp.theta.sin_cos();
    let formula = s * d1 - c * d2;
    let hg = |z: Vec3| -> Result<Vec3> {
        let l = LocalGeometry::at(metric, Point::new(z[0], z[1]))?;
        let (s, c) = z[2].sin_cos();
        let qd = l.vector_from_frame([c, s]);
        Ok([qd[0], qd[1], l.c[0].v * c + l.c[1].v * s])
    };
    let vg = |_z: Vec3| -> Result<Vec3> { Ok([0.0, 0.0, 1.0]) };
    let z = [fp.q.x, fp.q.y, fp.theta];
    let dir = lie_bracket(&hg, &vg, z, ORACLE_STEP)?;
    let om = |z: Vec3| -> Result<Vec3> {
        let l = LocalGeometry::at(metric, Point::new(z[0], z[1]))?;
        let ups = form.frame_components(l.q)?;
        Ok([omega_jet(&l, &ups).v, 0.0, 0.0])
    };
    let numeric = directional(&om, z, dir, 1e-4)?[0];
    Ok((formula, numeric))
}
