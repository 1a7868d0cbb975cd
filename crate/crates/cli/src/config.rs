//! INI run configuration.

use std::f64::consts::TAU;
use std::path::Path;

use ini::Ini;
use log::debug;

use znav::drift::{DriftKind, DriftSpec, DEFAULT_NORM_MARGIN};
use znav::duality::dualize;
use znav::geometry::{Chart, Field, Rect, Surface};
use znav::hamiltonian::{CoZermelo, FiberPoint, Problem, Zermelo};
use znav::integrals::{QuadratureGrid, DEFAULT_RESOLUTION};
use znav::ode::SolverOptions;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(CliError::Config(format!("unknown output format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceConfig {
    FlatTorus,
    Sphere {
        radius: f64,
    },
    HyperbolicDisk,
    HyperbolicHalfPlane,
    /// `e^{2f}(dx^2 + dy^2)` on a rectangle, periodic or not.
    Conformal {
        factor: String,
        domain: Rect,
        periodic: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftConfig {
    /// `None` for the Riemannian problem.
    pub kind: Option<DriftKind>,
    pub comp1: String,
    pub comp2: String,
    pub norm_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub surface: SurfaceConfig,
    pub drift: DriftConfig,
    pub solver: SolverOptions,
    pub t_max: f64,
    pub grid: [usize; 3],
    pub format: OutputFormat,
    pub output_path: Option<String>,
    pub start: FiberPoint,
    pub dualize: bool,
    pub seed: u64,
}

fn parse_f64(section: &str, key: &str, v: &str) -> Result<f64, CliError> {
    v.trim().parse::<f64>().map_err(|_| CliError::Config(format!("[{section}] {key}: '{v}' is not a number")))
}

fn parse_bool(section: &str, key: &str, v: &str) -> Result<bool, CliError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("[{section}] {key}: '{v}' is not a boolean"))),
    }
}

/// `"NX,NY,NT"`; every entry must be a positive integer.
pub fn parse_grid(v: &str) -> Result<[usize; 3], CliError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!("grid '{v}' must be NX,NY,NT")));
    }
    let mut out = [0usize; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("grid entry '{p}' must be a positive integer")))?;
    }
    Ok(out)
}

fn parse_rect(v: &str) -> Result<Rect, CliError> {
    let xs: Vec<f64> = v.split(',').map(|s| parse_f64("surface", "domain", s)).collect::<Result<_, _>>()?;
    if xs.len() != 4 {
        return Err(CliError::Config(format!("domain '{v}' must be x0,x1,y0,y1")));
    }
    Ok(Rect::new(xs[0], xs[1], xs[2], xs[3])?)
}

const KNOWN: &[(&str, &[&str])] = &[
    ("surface", &["name", "radius", "conformal_factor", "domain", "periodic"]),
    ("drift", &["kind", "comp1", "comp2", "norm_margin"]),
    ("solver", &["rtol", "atol", "h_max", "max_steps", "t_max", "output_step"]),
    ("quadrature", &["grid", "scheme"]),
    ("output", &["format", "path"]),
    ("problem", &["dualize", "start_x", "start_y", "theta", "seed"]),
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
        for (sec, props) in ini.iter() {
            let Some(sec) = sec else {
                if props.iter().next().is_some() {
                    return Err(CliError::Config("keys outside of a section".into()));
                }
                continue;
            };
            let keys = KNOWN
                .iter()
                .find(|(s, _)| *s == sec)
                .map(|(_, k)| *k)
                .ok_or_else(|| CliError::Config(format!("unknown section [{sec}]")))?;
            for (k, _) in props.iter() {
                if !keys.contains(&k) {
                    return Err(CliError::Config(format!("unknown key '{k}' in [{sec}]")));
                }
            }
        }
        let get = |sec: &str, key: &str| ini.section(Some(sec)).and_then(|s| s.get(key)).map(str::to_string);
        let num = |sec: &str, key: &str, default: f64| -> Result<f64, CliError> {
            get(sec, key).map_or(Ok(default), |v| parse_f64(sec, key, &v))
        };

        let name = get("surface", "name").ok_or_else(|| CliError::Config("[surface] name is required".into()))?;
        let surface = match name.trim() {
            "flat_torus" => SurfaceConfig::FlatTorus,
            "sphere" => SurfaceConfig::Sphere { radius: num("surface", "radius", 1.0)? },
            "hyperbolic_disk" => SurfaceConfig::HyperbolicDisk,
            "hyperbolic_half_plane" => SurfaceConfig::HyperbolicHalfPlane,
            "conformal" => SurfaceConfig::Conformal {
                factor: get("surface", "conformal_factor")
                    .ok_or_else(|| CliError::Config("[surface] conformal_factor is required".into()))?,
                domain: match get("surface", "domain") {
                    Some(d) => parse_rect(&d)?,
                    None => Rect::new(0.0, TAU, 0.0, TAU)?,
                },
                periodic: get("surface", "periodic").map_or(Ok(true), |v| parse_bool("surface", "periodic", &v))?,
            },
            other => return Err(CliError::Config(format!("unknown surface '{other}'"))),
        };

        let kind = match get("drift", "kind").as_deref().map(str::trim) {
            None | Some("none") => None,
            Some("vector") => Some(DriftKind::VectorField),
            Some("form") => Some(DriftKind::OneForm),
            Some(other) => return Err(CliError::Config(format!("unknown drift kind '{other}'"))),
        };
        let drift = DriftConfig {
            kind,
            comp1: get("drift", "comp1").unwrap_or_else(|| "0".into()),
            comp2: get("drift", "comp2").unwrap_or_else(|| "0".into()),
            norm_margin: num("drift", "norm_margin", DEFAULT_NORM_MARGIN)?,
        };

        let defaults = SolverOptions::default();
        let solver = SolverOptions {
            rtol: num("solver", "rtol", defaults.rtol)?,
            atol: num("solver", "atol", defaults.atol)?,
            h_max: num("solver", "h_max", defaults.h_max)?,
            max_steps: match get("solver", "max_steps") {
                Some(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("[solver] max_steps: '{v}' is not an integer")))?,
                None => defaults.max_steps,
            },
            output_step: get("solver", "output_step").map(|v| parse_f64("solver", "output_step", &v)).transpose()?,
            h_init: None,
        };
        solver.validate()?;
        let t_max = num("solver", "t_max", 10.0)?;
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(CliError::Config(format!("[solver] t_max must be positive, got {t_max}")));
        }

        let grid = match get("quadrature", "grid") {
            Some(g) => parse_grid(&g)?,
            None => [DEFAULT_RESOLUTION; 3],
        };
        if let Some(s) = get("quadrature", "scheme") {
            // the rule follows the chart; only the matching name is accepted
            if !matches!(s.trim(), "auto" | "periodic_trapezoid" | "gauss_legendre") {
                return Err(CliError::Config(format!("unknown quadrature scheme '{s}'")));
            }
        }
        let format = get("output", "format").map_or(Ok(OutputFormat::Json), |v| v.parse())?;
        let start = FiberPoint::new(
            num("problem", "start_x", 0.5)?,
            num("problem", "start_y", 0.0)?,
            num("problem", "theta", 0.0)?,
        );
        let dualize = get("problem", "dualize").map_or(Ok(false), |v| parse_bool("problem", "dualize", &v))?;
        let seed = match get("problem", "seed") {
            Some(v) => {
                v.trim().parse().map_err(|_| CliError::Config(format!("[problem] seed: '{v}' is not an integer")))?
            }
            None => 0,
        };
        Ok(RunConfig {
            surface,
            drift,
            solver,
            t_max,
            grid,
            format,
            output_path: get("output", "path"),
            start,
            dualize,
            seed,
        })
    }

    pub fn build_surface(&self) -> Result<Surface, CliError> {
        Ok(match &self.surface {
            SurfaceConfig::FlatTorus => Surface::flat_torus(),
            SurfaceConfig::Sphere { radius } => Surface::sphere(*radius)?,
            SurfaceConfig::HyperbolicDisk => Surface::hyperbolic_disk(),
            SurfaceConfig::HyperbolicHalfPlane => Surface::hyperbolic_half_plane(),
            SurfaceConfig::Conformal { factor, domain, periodic } => {
                let chart = if *periodic { Chart::torus(*domain) } else { Chart::new(*domain) };
                Surface::new("conformal", chart, Field::parse(factor)?)?
            }
        })
    }

    /// The problem as written, before any dualization.
    pub fn build_source(&self) -> Result<Problem, CliError> {
        let surface = self.build_surface()?;
        let Some(kind) = self.drift.kind else {
            return Ok(Problem::CoZermelo(CoZermelo::riemannian(surface)));
        };
        let drift = DriftSpec::parse(kind, &self.drift.comp1, &self.drift.comp2)?.with_margin(self.drift.norm_margin);
        Ok(match kind {
            DriftKind::VectorField => Problem::Zermelo(Zermelo::new(surface, drift)?),
            DriftKind::OneForm => Problem::CoZermelo(CoZermelo::new(surface, drift)?),
        })
    }

    /// `(problem to run, source problem)`; they differ when `dualize = true`.
    pub fn build(&self) -> Result<(Problem, Problem), CliError> {
        let source = self.build_source()?;
        if self.dualize {
            debug!("dualizing the configured problem");
            let d = dualize(&source, None)?;
            Ok((d.dual, source))
        } else {
            Ok((source.clone(), source))
        }
    }

    pub fn quadrature(&self, chart: &Chart) -> Result<QuadratureGrid, CliError> {
        Ok(QuadratureGrid::for_chart(chart, self.grid[0], self.grid[1], self.grid[2])?)
    }

    /// Config text reproducing this run with `[problem] dualize = true`.
    pub fn dualized_text(source_text: &str) -> Result<String, CliError> {
        let mut ini =
            Ini::load_from_str(source_text).map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
        ini.with_section(Some("problem")).set("dualize", "true");
        let mut buf = Vec::new();
        ini.write_to(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(buf).map_err(|e| CliError::Io(e.to_string()))
    }
}
