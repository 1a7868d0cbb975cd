//! Dormand-Prince 5(4) with step-size control and dense output.

use serde::Serialize;

use crate::error::{NavError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
    /// When set, trajectories are resampled on a uniform time grid.
    pub output_step: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { rtol: 1e-10, atol: 1e-10, h_init: None, h_max: 0.1, max_steps: 2_000_000, output_step: None }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.h_max > 0.0 && self.max_steps > 0) {
            return Err(NavError::validation("solver tolerances and step limits must be positive"));
        }
        if let Some(h) = self.output_step {
            if !(h > 0.0) {
                return Err(NavError::validation("output step must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step, with the data for continuous output on `[t0, t0 + h]`.
#[derive(Debug, Clone)]
pub struct StepData {
    pub t0: f64,
    pub h: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    rcont: [Vec<f64>; 3],
}

impl StepData {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Fourth-order continuous extension.
    pub fn dense(&self, t: f64) -> Vec<f64> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        (0..self.y0.len())
            .map(|i| {
                let r2 = self.y1[i] - self.y0[i];
                self.y0[i] + s * (r2 + s1 * (self.rcont[0][i] + s * (self.rcont[1][i] + s1 * self.rcont[2][i])))
            })
            .collect()
    }
}

/// A single explicit Dormand-Prince stage sequence; returns `(y1, k1..k7, err)`.
struct Attempt {
    y1: Vec<f64>,
    k: [Vec<f64>; 7],
    err: f64,
}

pub struct Dopri5<F> {
    f: F,
    opts: SolverOptions,
    pub t: f64,
    pub y: Vec<f64>,
    k1: Vec<f64>,
    h: f64,
    pub stats: SolverStats,
}

impl<F> Dopri5<F>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    pub fn new(f: F, t0: f64, y0: &[f64], opts: SolverOptions) -> Result<Self> {
        opts.validate()?;
        let mut k1 = vec![0.0; y0.len()];
        f(t0, y0, &mut k1)?;
        let mut s = Dopri5 {
            f,
            opts,
            t: t0,
            y: y0.to_vec(),
            k1,
            h: 0.0,
            stats: SolverStats { rhs_evals: 1, ..Default::default() },
        };
        s.h = match opts.h_init {
            Some(h) => h.min(opts.h_max),
            None => s.initial_step()?,
        };
        Ok(s)
    }

    pub fn rhs(&self) -> &F {
        &self.f
    }

    fn scale(&self, y0: &[f64], y1: &[f64], i: usize) -> f64 {
        self.opts.atol + self.opts.rtol * y0[i].abs().max(y1[i].abs())
    }

    fn initial_step(&mut self) -> Result<f64> {
        let n = self.y.len() as f64;
        let rms = |v: &dyn Fn(usize) -> f64| ((0..self.y.len()).map(|i| v(i).powi(2)).sum::<f64>() / n).sqrt();
        let d0 = rms(&|i| self.y[i] / self.scale(&self.y, &self.y, i));
        let d1 = rms(&|i| self.k1[i] / self.scale(&self.y, &self.y, i));
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1: Vec<f64> = (0..self.y.len()).map(|i| self.y[i] + h0 * self.k1[i]).collect();
        let mut f1 = vec![0.0; self.y.len()];
        self.stats.rhs_evals += 1;
        if (self.f)(self.t + h0, &y1, &mut f1).is_err() {
            return Ok(h0.min(self.opts.h_max));
        }
        let d2 = rms(&|i| (f1[i] - self.k1[i]) / self.scale(&self.y, &self.y, i)) / h0;
        let m = d1.max(d2);
        let h1 = if m <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / m).powf(0.2) };
        Ok((100.0 * h0).min(h1).min(self.opts.h_max))
    }

    fn attempt(&mut self, h: f64) -> Result<Attempt> {
        let n = self.y.len();
        let (t, y) = (self.t, &self.y);
        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        k[0].copy_from_slice(&self.k1);
        let mut tmp = vec![0.0; n];
        let stage = |coef: &[(usize, f64)], k: &[Vec<f64>; 7], tmp: &mut Vec<f64>| {
            for i in 0..n {
                tmp[i] = y[i] + h * coef.iter().map(|&(j, a)| a * k[j][i]).sum::<f64>();
            }
        };
        let rows: [(f64, &[(usize, f64)]); 6] = [
            (C2, &[(0, A21)]),
            (C3, &[(0, A31), (1, A32)]),
            (C4, &[(0, A41), (1, A42), (2, A43)]),
            (C5, &[(0, A51), (1, A52), (2, A53), (3, A54)]),
            (1.0, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]),
            (1.0, &[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)]),
        ];
        let mut y1 = vec![0.0; n];
        for (s, (c, coef)) in rows.iter().enumerate() {
            stage(coef, &k, &mut tmp);
            if s == 5 {
                y1.copy_from_slice(&tmp);
            }
            self.stats.rhs_evals += 1;
            let (_, tail) = k.split_at_mut(s + 1);
            (self.f)(t + c * h, &tmp, &mut tail[0])?;
        }
        let mut acc = 0.0;
        for i in 0..n {
            let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sk = self.scale(y, &y1, i);
            acc += (e / sk).powi(2);
        }
        let err = (acc / n as f64).sqrt();
        if !err.is_finite() || y1.iter().any(|v| !v.is_finite()) {
            return Err(NavError::numerical("non-finite state"));
        }
        Ok(Attempt { y1, k, err })
    }

    /// Takes one accepted step without passing `t_end`.
    pub fn step(&mut self, t_end: f64) -> Result<StepData> {
        let mut rejected_here = false;
        loop {
            if self.stats.accepted + self.stats.rejected >= self.opts.max_steps {
                return Err(NavError::numerical(format!(
                    "step limit {} reached at t = {}",
                    self.opts.max_steps, self.t
                )));
            }
            let remaining = t_end - self.t;
            let mut h = self.h.min(self.opts.h_max);
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            let h_min = 1e-14 * self.t.abs().max(1.0);
            if h < h_min && !last {
                return Err(NavError::numerical(format!("step size underflow at t = {}", self.t)));
            }
            match self.attempt(h) {
                Ok(a) if a.err <= 1.0 => {
                    let mut fac = 0.9 * a.err.max(1e-10).powf(-0.2);
                    fac = fac.clamp(0.2, 5.0);
                    if rejected_here {
                        fac = fac.min(1.0);
                    }
                    if !last || fac < 1.0 {
                        self.h = h * fac;
                    }
                    let k = &a.k;
                    let n = self.y.len();
                    let mut r3 = vec![0.0; n];
                    let mut r4 = vec![0.0; n];
                    let mut r5 = vec![0.0; n];
                    for i in 0..n {
                        let r2 = a.y1[i] - self.y[i];
                        let bspl = h * k[0][i] - r2;
                        r3[i] = bspl;
                        r4[i] = r2 - h * k[6][i] - bspl;
                        r5[i] = h
                            * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
                    }
                    let data = StepData { t0: self.t, h, y0: self.y.clone(), y1: a.y1.clone(), rcont: [r3, r4, r5] };
                    self.t = if last { t_end } else { self.t + h };
                    self.y = a.y1;
                    self.k1 = a.k[6].clone();
                    self.stats.accepted += 1;
                    return Ok(data);
                }
                Ok(a) => {
                    self.stats.rejected += 1;
                    rejected_here = true;
                    self.h = h * (0.9 * a.err.powf(-0.2)).clamp(0.2, 1.0);
                }
                Err(e) => {
                    self.stats.rejected += 1;
                    rejected_here = true;
                    self.h = 0.5 * h;
                    if self.h < h_min {
                        return Err(match e {
                            NavError::OutsideDomain { .. } | NavError::ChartExit { .. } => {
                                NavError::ChartExit { t: self.t, state: self.y.clone() }
                            }
                            other => other,
                        });
                    }
                }
            }
        }
    }
}

/// One Dormand-Prince step of exactly `h` from `(t0, y0)`, without error control.
pub fn single_step<F>(f: &F, t0: f64, y0: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let opts = SolverOptions { h_init: Some(h.max(f64::MIN_POSITIVE)), h_max: f64::INFINITY, ..Default::default() };
    let mut s = Dopri5::new(f, t0, y0, opts)?;
    if h == 0.0 {
        return Ok(y0.to_vec());
    }
    let a = s.attempt(h)?;
    Ok(a.y1)
}

/// Drives the stepper from `t0` to `t_end`. `guard` is checked on every
/// accepted state; when it fails the integration stops with
/// [`NavError::ChartExit`] carrying the last state that passed. `on_step`
/// sees each accepted step and may return `false` to stop early.
pub fn integrate<F, G, C>(
    f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: SolverOptions,
    guard: G,
    mut on_step: C,
) -> Result<(SolverStats, f64, Vec<f64>)>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
    G: Fn(&[f64]) -> bool,
    C: FnMut(&StepData, &F) -> Result<bool>,
{
    if !(t_end >= t0) {
        return Err(NavError::validation(format!("integration end {t_end} precedes start {t0}")));
    }
    if !guard(y0) {
        return Err(NavError::ChartExit { t: t0, state: y0.to_vec() });
    }
    let mut s = Dopri5::new(f, t0, y0, opts)?;
    while s.t < t_end {
        let step = s.step(t_end)?;
        if !guard(&step.y1) {
            return Err(NavError::ChartExit { t: step.t0, state: step.y0 });
        }
        if !on_step(&step, &s.f)? {
            break;
        }
    }
    Ok((s.stats, s.t, s.y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn oscillator(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = y[1];
        dy[1] = -y[0];
        Ok(())
    }

    #[test]
    fn harmonic_oscillator_is_accurate() {
        let (stats, t, y) =
            integrate(oscillator, 0.0, &[1.0, 0.0], 10.0, SolverOptions::default(), |_| true, |_, _| Ok(true)).unwrap();
        assert_eq!(t, 10.0);
        assert_abs_diff_eq!(y[0], 10f64.cos(), epsilon = 1e-9);
        assert_abs_diff_eq!(y[1], -10f64.sin(), epsilon = 1e-9);
        assert!(stats.accepted > 10);
    }

    #[test]
    fn dense_output_interpolates_within_tolerance() {
        let mut worst: f64 = 0.0;
        let opts = SolverOptions { h_max: 1.0, ..Default::default() };
        integrate(
            oscillator,
            0.0,
            &[1.0, 0.0],
            6.0,
            opts,
            |_| true,
            |s, _| {
                for k in 1..10 {
                    let t = s.t0 + s.h * k as f64 / 10.0;
                    worst = worst.max((s.dense(t)[0] - t.cos()).abs());
                }
                let end = s.dense(s.t1());
                assert!((end[0] - s.y1[0]).abs() < 1e-14 && (end[1] - s.y1[1]).abs() < 1e-14);
                Ok(true)
            },
        )
        .unwrap();
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn single_step_has_fifth_order() {
        let e = |h: f64| (single_step(&oscillator, 0.0, &[1.0, 0.0], h).unwrap()[0] - h.cos()).abs();
        let ratio = e(0.2) / e(0.1);
        assert!(ratio > 40.0, "{ratio}");
    }

    #[test]
    fn guard_failure_reports_last_valid_state() {
        let line = |_t: f64, _y: &[f64], dy: &mut [f64]| -> Result<()> {
            dy[0] = 1.0;
            Ok(())
        };
        let err =
            integrate(line, 0.0, &[0.0], 10.0, SolverOptions::default(), |y| y[0] < 2.0, |_, _| Ok(true)).unwrap_err();
        match err {
            NavError::ChartExit { t, state } => {
                assert!(t <= 2.0 && state[0] < 2.0 && state[0] > 1.5);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn failing_stages_shrink_the_step() {
        // field undefined beyond x = 1; the solver must back off and then exit
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
            if y[0] > 1.0 {
                return Err(NavError::OutsideDomain { x: y[0], y: 0.0 });
            }
            dy[0] = 1.0;
            Ok(())
        };
        let opts = SolverOptions { h_max: 0.3, ..Default::default() };
        match integrate(f, 0.0, &[0.0], 5.0, opts, |_| true, |_, _| Ok(true)) {
            Err(NavError::ChartExit { state, .. }) => assert!(state[0] <= 1.0 && state[0] > 0.99),
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn early_stop_is_honoured() {
        let mut n = 0;
        let (_, t, _) = integrate(
            oscillator,
            0.0,
            &[1.0, 0.0],
            100.0,
            SolverOptions::default(),
            |_| true,
            |_, _| {
                n += 1;
                Ok(n < 3)
            },
        )
        .unwrap();
        assert!(t < 1.0);
    }
}
