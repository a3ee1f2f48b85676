//! Time evolution: sector-0 population dynamics, full density-matrix
//! evolution at oracle scale, gain ramps and relaxation-rate extraction.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::liouvillian::{build_sector_block, lindblad_action, SectorBlock};
use crate::model::ModelParams;
use crate::steady_state::{solve_steady, DiagonalState};

/// Trace drift allowed over a run.
pub const TRACE_TOL: f64 = 1e-9;

/// Largest cutoff accepted by [`evolve_full`].
pub const FULL_EVOLUTION_LIMIT: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-12 }
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand–Prince integration of `dy/dt = f(t, y)`, returning the
/// state at every time of `t_grid` (ascending, starting at the initial time).
///
/// `check` runs after every accepted step and may abort the run.
pub fn integrate<F, K>(mut f: F, y0: &[f64], t_grid: &[f64], tol: Tolerances, mut check: K) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    K: FnMut(f64, &[f64]) -> Result<()>,
{
    if t_grid.is_empty() {
        return Ok(Vec::new());
    }
    if t_grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(invalid("t_grid", "times must be ascending"));
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t_grid[0];
    let mut out = vec![y.clone()];
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    f(t, &y, &mut k[0]);
    let span = t_grid[t_grid.len() - 1] - t;
    let mut h = (1e-3 * span).max(1e-6).min(span.max(1e-6));
    for &target in &t_grid[1..] {
        while t < target {
            let last = h >= target - t;
            let step = if last { target - t } else { h };
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, a) in A[s][..s].iter().enumerate() {
                        acc += step * a * k[j][i];
                    }
                    stage[i] = acc;
                }
                f(t + C[s] * step, &stage, &mut k[s]);
            }
            let mut err = 0.0f64;
            for i in 0..n {
                let mut hi = y[i];
                let mut e = 0.0;
                for s in 0..7 {
                    hi += step * B5[s] * k[s][i];
                    e += step * (B5[s] - B4[s]) * k[s][i];
                }
                y5[i] = hi;
                let sc = tol.atol + tol.rtol * y[i].abs().max(hi.abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n.max(1) as f64).sqrt();
            if err <= 1.0 {
                t = if last { target } else { t + step };
                std::mem::swap(&mut y, &mut y5);
                // FSAL: the last stage is the derivative at the new point.
                k.swap(0, 6);
                check(t, &y)?;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            // A step truncated to land on the grid keeps the untruncated size.
            if !(last && err <= 1.0 && step < h) {
                h = step * factor;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t, h });
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Gain as a function of time; `None` keeps `params.a()`.
pub type GainProfile<'a> = Option<&'a (dyn Fn(f64) -> f64 + Sync)>;

/// Population snapshot of a sector-0 run.
#[derive(Debug, Clone)]
pub struct Sector0Sample {
    pub t: f64,
    pub state: DiagonalState,
    pub n_mean: f64,
}

fn tridiagonal_apply(block: &SectorBlock, p: &[f64], out: &mut [f64]) {
    let n = p.len();
    for i in 0..n {
        let mut acc = block.diag[i].re * p[i];
        if i > 0 {
            acc += block.lower[i - 1].re * p[i - 1];
        }
        if i + 1 < n {
            acc += block.upper[i].re * p[i + 1];
        }
        out[i] = acc;
    }
}

/// Integrates the population dynamics `dp/dt = block₀(A(t))·p`.
pub fn evolve_sector0(p0: &DiagonalState, params: &ModelParams, gain: GainProfile, t_grid: &[f64]) -> Result<Vec<Sector0Sample>> {
    if p0.p.len() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: p0.p.len(),
        });
    }
    let fixed = build_sector_block(params, 0)?;
    let mut failure: Option<Error> = None;
    let rhs = |t: f64, p: &[f64], out: &mut [f64]| match gain {
        None => tridiagonal_apply(&fixed, p, out),
        Some(a_of_t) => match params.with_a(a_of_t(t)).and_then(|q| build_sector_block(&q, 0)) {
            Ok(block) => tridiagonal_apply(&block, p, out),
            Err(e) => {
                failure.get_or_insert(e);
                out.fill(0.0);
            }
        },
    };
    let trace0: f64 = p0.p.iter().sum();
    let states = integrate(rhs, &p0.p, t_grid, Tolerances::default(), |t, p| {
        let drift = (p.iter().sum::<f64>() - trace0).abs();
        if drift > TRACE_TOL {
            return Err(Error::TraceDrift { t, drift });
        }
        Ok(())
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(states
        .into_iter()
        .zip(t_grid)
        .map(|(p, &t)| {
            let state = DiagonalState { p };
            Sector0Sample {
                t,
                n_mean: state.mean(),
                state,
            }
        })
        .collect())
}

fn flatten(rho: &Array2<C64>) -> Vec<f64> {
    rho.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn unflatten(v: &[f64], dim: usize) -> Array2<C64> {
    Array2::from_shape_fn((dim, dim), |(i, j)| {
        let at = 2 * (i * dim + j);
        C64::new(v[at], v[at + 1])
    })
}

/// Integrates the full master equation (cutoff at most
/// [`FULL_EVOLUTION_LIMIT`]).
pub fn evolve_full(rho0: &Array2<C64>, params: &ModelParams, gain: GainProfile, t_grid: &[f64]) -> Result<Vec<(f64, Array2<C64>)>> {
    let dim = params.dim();
    if params.n_max() > FULL_EVOLUTION_LIMIT {
        return Err(Error::CutoffAboveOracleLimit {
            n_max: params.n_max(),
            limit: FULL_EVOLUTION_LIMIT,
        });
    }
    if rho0.dim() != (dim, dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: rho0.nrows(),
        });
    }
    let mut failure: Option<Error> = None;
    let rhs = |t: f64, y: &[f64], out: &mut [f64]| {
        let p = match gain {
            None => Ok(*params),
            Some(a_of_t) => params.with_a(a_of_t(t)),
        };
        match p {
            Ok(p) => {
                let d = lindblad_action(&p, &unflatten(y, dim));
                out.copy_from_slice(&flatten(&d));
            }
            Err(e) => {
                failure.get_or_insert(e);
                out.fill(0.0);
            }
        }
    };
    let trace0: C64 = rho0.diag().sum();
    let states = integrate(rhs, &flatten(rho0), t_grid, Tolerances::default(), |t, y| {
        let tr: f64 = (0..dim).map(|i| y[2 * (i * dim + i)]).sum();
        let drift = (tr - trace0.re).abs();
        if drift > TRACE_TOL {
            return Err(Error::TraceDrift { t, drift });
        }
        Ok(())
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(t_grid.iter().zip(states).map(|(&t, y)| (t, unflatten(&y, dim))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

/// Linear gain ramp over `[Γ/2, 3Γ/2]` lasting `t_f` (units of `1/Γ`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampProtocol {
    pub direction: Direction,
    pub t_f: f64,
    pub gamma: f64,
}

impl RampProtocol {
    pub fn new(direction: Direction, t_f: f64, gamma: f64) -> Result<Self> {
        if !(t_f.is_finite() && t_f > 0.0) {
            return Err(invalid("t_f", format!("ramp duration must be positive, got {t_f}")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(invalid("gamma", "must be positive"));
        }
        Ok(Self { direction, t_f, gamma })
    }

    pub fn gain_at(&self, t: f64) -> f64 {
        match self.direction {
            Direction::Up => 0.5 * self.gamma + self.gamma * t / self.t_f,
            Direction::Down => 1.5 * self.gamma - self.gamma * t / self.t_f,
        }
    }

    pub fn times(&self, samples: usize) -> Vec<f64> {
        (0..samples)
            .map(|i| self.t_f * i as f64 / (samples - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RampPoint {
    pub t: f64,
    pub a: f64,
    pub n_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hysteresis {
    pub up: Vec<RampPoint>,
    pub down: Vec<RampPoint>,
    /// `∫|n↑(A) − n↓(A)|/N dA`.
    pub loop_area: f64,
}

/// Runs one ramp from the steady state at its initial gain.
pub fn run_ramp(params: &ModelParams, ramp: &RampProtocol, samples: usize) -> Result<Vec<RampPoint>> {
    let start = params.with_a(ramp.gain_at(0.0))?;
    let p0 = solve_steady(&start)?;
    let gain = |t: f64| ramp.gain_at(t);
    let times = ramp.times(samples);
    let run = evolve_sector0(&p0, &start, Some(&gain), &times)?;
    Ok(run
        .into_iter()
        .map(|s| RampPoint {
            t: s.t,
            a: ramp.gain_at(s.t),
            n_mean: s.n_mean,
        })
        .collect())
}

/// Up and down ramps at the cutoff of `params`, run concurrently.
pub fn hysteresis(params: &ModelParams, t_f: f64, samples: usize) -> Result<Hysteresis> {
    if samples < 2 {
        return Err(invalid("samples", "need at least two samples"));
    }
    let up_ramp = RampProtocol::new(Direction::Up, t_f, params.gamma())?;
    let down_ramp = RampProtocol::new(Direction::Down, t_f, params.gamma())?;
    let (up, down) = rayon::join(
        || run_ramp(params, &up_ramp, samples),
        || run_ramp(params, &down_ramp, samples),
    );
    let (up, down) = (up?, down?);
    // Sample i of the up ramp shares its gain with sample samples−1−i of the
    // down ramp.
    let n = params.n_scale();
    let gap: Vec<(f64, f64)> = up
        .iter()
        .zip(down.iter().rev())
        .map(|(u, d)| (u.a, (u.n_mean - d.n_mean).abs() / n))
        .collect();
    let loop_area = gap
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    Ok(Hysteresis { up, down, loop_area })
}

/// Decay rate of `|y(t)|` from a least-squares fit of `ln|y|` against `t`
/// over samples with `t ≥ t_min` and `|y| > floor`.
pub fn fit_decay_rate(t: &[f64], y: &[f64], t_min: f64, floor: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(ti, yi)| **ti >= t_min && yi.abs() > floor)
        .map(|(ti, yi)| (*ti, yi.abs().ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientSamples { got: pts.len(), needed: 3 });
    }
    let m = pts.len() as f64;
    let tx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ty = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - tx) * (p.1 - ty)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - tx).powi(2)).sum();
    Ok(-sxy / sxx)
}

/// Late-time relaxation rate of `⟨n⟩` towards the steady state, starting from
/// `p0` at constant gain; the fit uses the second half of `t_grid`.
pub fn relaxation_rate(p0: &DiagonalState, params: &ModelParams, t_grid: &[f64]) -> Result<f64> {
    let n_ss = solve_steady(params)?.mean();
    let run = evolve_sector0(p0, params, None, t_grid)?;
    let t: Vec<f64> = run.iter().map(|s| s.t).collect();
    let dn: Vec<f64> = run.iter().map(|s| n_ss - s.n_mean).collect();
    let t_min = t[t.len() / 2];
    fit_decay_rate(&t, &dn, t_min, 1e-9 * n_ss.max(1.0))
}
