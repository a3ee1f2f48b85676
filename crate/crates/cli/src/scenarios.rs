//! Scenario runners. Each fills the derived keys of the config (cutoffs,
//! step sizes, grid extents) so the manifest records what actually ran.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde_json::{json, Value};

use sllm::dynamics::{evolve_full, Direction, GainProfile, RampProtocol};
use sllm::model::{apply_scaling, semiclassical_nss, ModelParams};
use sllm::phase_space::{p_moment, p_ss_radial_curve, symmetric_axis, wigner_of_sector_mode};
use sllm::spectra::{auto_cutoff, collapse_sweep, sector_spectrum, sector_union_check};
use sllm::steady_state::{solve_steady, steady_sweep};
use sllm::trajectories::{coherent_state, run_ensemble, suggested_dt, EnsembleStats, TrajectoryOptions, Unraveling};

use crate::config::{Config, Ramp, Scenario, UnravelingKind};
use crate::failure::Failure;
use crate::output::{num, Artifacts, Csv};

/// Tolerance of the sector-union comparison.
pub const ORACLE_TOL: f64 = 1e-8;

/// Gains swept by the hysteresis ramps; cutoffs must cover the upper end.
const RAMP_GAINS: [f64; 2] = [0.5, 1.5];

pub struct Outcome {
    pub artifacts: Artifacts,
    pub summary: Value,
    /// Set when an oracle comparison ran to completion but failed.
    pub check_failure: Option<String>,
}

impl Outcome {
    fn ok(artifacts: Artifacts, summary: Value) -> Self {
        Self {
            artifacts,
            summary,
            check_failure: None,
        }
    }
}

// `resolve` guarantees every key a scenario reads is present.
fn req<T: Copy>(v: Option<T>) -> T {
    v.expect("resolved config")
}

fn req_ref<T>(v: &Option<T>) -> &T {
    v.as_ref().expect("resolved config")
}

/// Unscaled model at gain `a`; callers apply `B → B/N`.
fn bare(cfg: &Config, a: f64, n_max: usize) -> Result<ModelParams, Failure> {
    Ok(ModelParams::new(a, req(cfg.b), 1.0, req(cfg.eta), req(cfg.omega), n_max)?)
}

fn scaled(cfg: &Config, a: f64, n_max: usize) -> Result<ModelParams, Failure> {
    Ok(apply_scaling(&bare(cfg, a, n_max)?, req(cfg.n_scale), 0.0)?)
}

fn bool_cell(b: bool) -> String {
    if b { "true" } else { "false" }.into()
}

/// File-name label of a scaling parameter: integers print bare.
fn n_label(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

pub fn run(scenario: Scenario, cfg: &mut Config) -> Result<Outcome, Failure> {
    match scenario {
        Scenario::SpectrumSweep => spectrum_sweep(cfg, false),
        Scenario::CollapseSweep => spectrum_sweep(cfg, true),
        Scenario::SteadySweep => steady(cfg),
        Scenario::Hysteresis => hysteresis(cfg),
        Scenario::Trajectory => trajectory(cfg),
        Scenario::Wigner => wigner(cfg),
        Scenario::Pfunction => pfunction(cfg),
        Scenario::OracleCheck => oracle_check(cfg),
    }
}

const SPECTRUM_HEADER: [&str; 7] = ["N", "A_over_gamma", "k", "j", "re_lambda", "im_lambda", "spurious"];

fn spectrum_sweep(cfg: &mut Config, collapse: bool) -> Result<Outcome, Failure> {
    let a_grid = req_ref(&cfg.a_grid).clone();
    let n_list = req_ref(&cfg.n_list).clone();
    let sectors = req_ref(&cfg.sectors).clone();
    let levels = req_ref(&cfg.levels).clone();
    let base = bare(cfg, a_grid[0], cfg.n_max.unwrap_or(2))?;
    let mut artifacts = Artifacts::default();
    let mut csv = Csv::new(&SPECTRUM_HEADER);

    if cfg.full_spectrum == Some(true) {
        // Every eigenvalue of every requested sector; `j` is the solver
        // order (ascending |Re λ|) with spurious modes included.
        let mut cutoffs = BTreeMap::new();
        let mut tasks = Vec::new();
        for &n in &n_list {
            let s = apply_scaling(&base, n, 0.0)?;
            for &a in &a_grid {
                let n_max = match cfg.n_max {
                    Some(c) => c,
                    None => auto_cutoff(&s, &[a])?,
                };
                cutoffs.insert(format!("{}@{}", n_label(n), a), n_max);
                for &k in &sectors {
                    tasks.push((n, a, k, s.with_a(a)?.with_n_max(n_max)?));
                }
            }
        }
        let spectra: Vec<_> = tasks
            .par_iter()
            .map(|(_, _, k, p)| sector_spectrum(p, *k).map(|s| s.without_vectors()))
            .collect::<Result<_, _>>()?;
        for ((n, a, k, _), spec) in tasks.iter().zip(&spectra) {
            for (j, (l, s)) in spec.eigenvalues.iter().zip(&spec.spurious).enumerate() {
                csv.row(&[num(*n), num(*a), k.to_string(), j.to_string(), num(l.re), num(l.im), bool_cell(*s)]);
            }
        }
        artifacts.add("spectrum.csv", csv);
        return Ok(Outcome::ok(artifacts, json!({ "cutoffs": cutoffs })));
    }

    let result = collapse_sweep(&base, &a_grid, &n_list, &sectors, &levels, cfg.n_max)?;
    let mut cutoffs = BTreeMap::new();
    let mut missing = 0usize;
    for r in &result.rows {
        cutoffs.insert(format!("{}@{}", n_label(r.n_scale), r.a), r.n_max);
        // An unresolved level is written as NaN and flagged spurious.
        let (re, im, spurious) = match r.lambda {
            Some(l) => (l.re, l.im, r.spurious),
            None => {
                missing += 1;
                (f64::NAN, f64::NAN, true)
            }
        };
        csv.row(&[
            num(r.n_scale),
            num(r.a),
            r.k.to_string(),
            r.j.to_string(),
            num(re),
            num(im),
            bool_cell(spurious),
        ]);
    }
    artifacts.add("spectrum.csv", csv);
    if collapse {
        let mut minima = Csv::new(&["N", "k", "j", "min_abs_re_lambda", "argmin_A_over_gamma"]);
        for m in &result.minima {
            minima.row(&[num(m.n_scale), m.k.to_string(), m.j.to_string(), num(m.min_abs_re), num(m.argmin_a)]);
        }
        artifacts.add("collapse_minima.csv", minima);
    }
    Ok(Outcome::ok(
        artifacts,
        json!({ "cutoffs": cutoffs, "unresolved_levels": missing }),
    ))
}

fn steady(cfg: &mut Config) -> Result<Outcome, Failure> {
    let a_grid = req_ref(&cfg.a_grid).clone();
    let n_list = req_ref(&cfg.n_list).clone();
    let base = bare(cfg, a_grid[0], cfg.n_max.unwrap_or(2))?;
    let rows = steady_sweep(&base, &a_grid, &n_list, cfg.n_max)?;
    let mut csv = Csv::new(&["A_over_gamma", "N", "eta", "n_mean", "n_mean_over_N", "g2", "fano"]);
    let mut cutoffs = BTreeMap::new();
    let mut worst_tail = 0.0f64;
    for r in &rows {
        cutoffs.insert(format!("{}@{}", n_label(r.n_scale), r.a_over_gamma), r.n_max);
        worst_tail = worst_tail.max(r.tail_mass);
        csv.row(&[
            num(r.a_over_gamma),
            num(r.n_scale),
            num(r.eta),
            num(r.n_mean),
            num(r.n_mean / r.n_scale),
            num(r.g2),
            num(r.fano),
        ]);
    }
    let mut artifacts = Artifacts::default();
    artifacts.add("steady.csv", csv);
    Ok(Outcome::ok(
        artifacts,
        json!({ "cutoffs": cutoffs, "max_tail_mass": worst_tail }),
    ))
}

fn hysteresis(cfg: &mut Config) -> Result<Outcome, Failure> {
    let n_list = req_ref(&cfg.n_list).clone();
    let t_f = req(cfg.t_f);
    let samples = req(cfg.samples);
    let base = bare(cfg, 1.0, cfg.n_max.unwrap_or(2))?;
    let runs: Vec<_> = n_list
        .par_iter()
        .map(|&n| -> Result<_, Failure> {
            let s = apply_scaling(&base, n, 0.0)?;
            let n_max = match cfg.n_max {
                Some(c) => c,
                None => auto_cutoff(&s, &RAMP_GAINS)?,
            };
            let h = sllm::dynamics::hysteresis(&s.with_n_max(n_max)?, t_f, samples)?;
            Ok((n, n_max, h))
        })
        .collect::<Result<_, _>>()?;

    let mut artifacts = Artifacts::default();
    let mut summary = Csv::new(&["N", "eta", "t_f", "n_max", "loop_area"]);
    let mut areas = BTreeMap::new();
    for (n, n_max, h) in &runs {
        let mut csv = Csv::new(&["t", "A_over_gamma", "direction", "n_mean", "n_mean_over_N"]);
        for (dir, branch) in [(Direction::Up, &h.up), (Direction::Down, &h.down)] {
            for p in branch.iter() {
                csv.row(&[num(p.t), num(p.a), dir.label().into(), num(p.n_mean), num(p.n_mean / n)]);
            }
        }
        artifacts.add(format!("hysteresis_N{}.csv", n_label(*n)), csv);
        summary.row(&[num(*n), num(req(cfg.eta)), num(t_f), n_max.to_string(), num(h.loop_area)]);
        areas.insert(n_label(*n), json!({ "n_max": n_max, "loop_area": h.loop_area }));
    }
    artifacts.add("hysteresis_summary.csv", summary);
    Ok(Outcome::ok(artifacts, json!({ "runs": areas })))
}

fn trajectory(cfg: &mut Config) -> Result<Outcome, Failure> {
    let n_max = req(cfg.n_max);
    let t_f = req(cfg.t_f);
    let ramp = match req(cfg.ramp) {
        Ramp::None => None,
        Ramp::Up => Some(RampProtocol::new(Direction::Up, t_f, 1.0)?),
        Ramp::Down => Some(RampProtocol::new(Direction::Down, t_f, 1.0)?),
    };
    let a0 = ramp.map_or(req(cfg.a), |r| r.gain_at(0.0));
    let params = scaled(cfg, a0, n_max)?;
    let kind = match req(cfg.unraveling) {
        UnravelingKind::Counting => Unraveling::Counting,
        UnravelingKind::Homodyne => Unraveling::Homodyne,
    };
    let beta: [f64; 3] = match kind {
        Unraveling::Counting => [0.0; 3],
        Unraveling::Homodyne => {
            let b = req_ref(&cfg.beta_ref);
            [b[0], b[1], b[2]]
        }
    };
    // The ramp's upper gain bounds the jump rates over the whole run.
    let rate_params = match ramp {
        Some(_) => params.with_a(RAMP_GAINS[1])?,
        None => params,
    };
    let dt = *cfg.dt.get_or_insert_with(|| suggested_dt(&rate_params, beta, 0.5));
    let opts = TrajectoryOptions {
        t_f,
        dt,
        record_stride: req(cfg.record_stride),
    };
    let alpha = req_ref(&cfg.alpha0);
    let psi0 = coherent_state(C64::new(alpha[0], alpha[1]), n_max);
    let gain_fn = ramp.map(|r| move |t: f64| r.gain_at(t));
    let gain: GainProfile = gain_fn.as_ref().map(|f| f as &(dyn Fn(f64) -> f64 + Sync));
    let seed = req(cfg.seed);
    let records = run_ensemble(kind, &params, &psi0, beta, &opts, gain, req(cfg.n_traj), seed)?;

    let mut artifacts = Artifacts::default();
    let mut total_jumps = 0usize;
    for r in &records {
        let mut obs = Csv::new(&["t", "n_mean", "x_mean"]);
        for i in 0..r.t.len() {
            obs.row(&[num(r.t[i]), num(r.n_mean[i]), num(r.x_mean[i])]);
        }
        let mut jumps = Csv::new(&["t", "channel"]);
        for (t, c) in &r.jumps {
            jumps.row(&[num(*t), c.to_string()]);
        }
        total_jumps += r.jumps.len();
        let stem = PathBuf::from("trajectories");
        artifacts.add(stem.join(format!("traj_{:05}.csv", r.stream)), obs);
        artifacts.add(stem.join(format!("traj_{:05}_jumps.csv", r.stream)), jumps);
    }
    let stats = EnsembleStats::from_records(&records)?;
    let mut ens = Csv::new(&["t", "n_mean", "n_sem", "x_mean", "x_sem"]);
    for i in 0..stats.t.len() {
        ens.row(&[
            num(stats.t[i]),
            num(stats.n[i].mean()),
            num(stats.n[i].sem()),
            num(stats.x[i].mean()),
            num(stats.x[i].sem()),
        ]);
    }
    artifacts.add("ensemble.csv", ens);

    let mut summary = json!({ "dt": dt, "trajectories": records.len(), "total_jumps": total_jumps });
    if cfg.reference == Some(true) {
        let dim = params.dim();
        let rho0 = Array2::from_shape_fn((dim, dim), |(i, j)| psi0[i] * psi0[j].conj());
        let run = evolve_full(&rho0, &params, gain, &stats.t)?;
        let mut csv = Csv::new(&["t", "n_mean"]);
        let mut worst_z = 0.0f64;
        for (i, (t, rho)) in run.iter().enumerate() {
            let n: f64 = (0..dim).map(|m| m as f64 * rho[[m, m]].re).sum();
            csv.row(&[num(*t), num(n)]);
            let sem = stats.n[i].sem();
            if sem > 0.0 {
                worst_z = worst_z.max((stats.n[i].mean() - n).abs() / sem);
            }
        }
        artifacts.add("reference.csv", csv);
        summary["max_abs_z"] = json!(worst_z);
    }
    Ok(Outcome::ok(artifacts, summary))
}

fn wigner(cfg: &mut Config) -> Result<Outcome, Failure> {
    let a = req(cfg.a);
    let probe = scaled(cfg, a, 2)?;
    let n_max = *cfg.n_max.get_or_insert(auto_cutoff(&probe, &[a])?);
    let params = probe.with_n_max(n_max)?;
    // Largest square grid inside the reliable disc |α|² ≤ 0.8 n_max.
    let extent = *cfg
        .extent
        .get_or_insert_with(|| (0.5 * sllm::phase_space::WIGNER_RELIABLE_FRACTION * n_max as f64).sqrt() * 0.999);
    let axis = symmetric_axis(extent, req(cfg.points));
    let (k, j) = (req(cfg.k), req(cfg.j));
    // Modes are drawn as ρ + ρ†, which for the steady state is 2ρ and
    // integrates to one.
    let (grid, lambda) = if k == 0 && j == 0 {
        let state = solve_steady(&params)?;
        let coeffs: Vec<C64> = state.p.iter().map(|x| C64::new(*x, 0.0)).collect();
        (wigner_of_sector_mode(0, n_max, &coeffs, &axis, &axis)?, C64::new(0.0, 0.0))
    } else {
        let spec = sector_spectrum(&params, k)?;
        let (idx, lambda) = spec
            .level(j)
            .ok_or_else(|| Failure::Run(format!("sector {k} has no physical level {j} at n_max = {n_max}")))?;
        (wigner_of_sector_mode(k, n_max, &spec.eigenvectors[idx], &axis, &axis)?, lambda)
    };
    let mut csv = Csv::new(&["re_alpha", "im_alpha", "w_value"]);
    for (i, y) in grid.im.iter().enumerate() {
        for (c, x) in grid.re.iter().enumerate() {
            csv.row(&[num(*x), num(*y), num(grid.values[[i, c]])]);
        }
    }
    let mut artifacts = Artifacts::default();
    artifacts.add("wigner.csv", csv);
    Ok(Outcome::ok(
        artifacts,
        json!({
            "re_lambda": lambda.re,
            "im_lambda": lambda.im,
            "grid_integral": grid.integral(),
        }),
    ))
}

fn pfunction(cfg: &mut Config) -> Result<Outcome, Failure> {
    let a = req(cfg.a);
    let probe = scaled(cfg, a, 2)?;
    let r_max = *cfg
        .r_max
        .get_or_insert_with(|| 2.0 * semiclassical_nss(&probe).max(1.0).sqrt() + 3.0);
    let points = req(cfg.points);
    let radii: Vec<f64> = (0..points).map(|i| r_max * i as f64 / (points - 1) as f64).collect();
    let p = p_ss_radial_curve(&radii, &probe)?;
    let mut csv = Csv::new(&["r", "p_value"]);
    for (r, v) in radii.iter().zip(&p) {
        csv.row(&[num(*r), num(*v)]);
    }
    let p_mean = p_moment(&probe, 1)?;
    let n_max = auto_cutoff(&probe, &[a])?;
    let exact = solve_steady(&probe.with_n_max(n_max)?)?.mean();
    let mut artifacts = Artifacts::default();
    artifacts.add("pfunction.csv", csv);
    Ok(Outcome::ok(
        artifacts,
        json!({
            "p_mean_photon_number": p_mean,
            "steady_mean_photon_number": exact,
            "steady_n_max": n_max,
            "relative_deviation": (p_mean - exact).abs() / exact.abs().max(f64::MIN_POSITIVE),
        }),
    ))
}

fn oracle_check(cfg: &mut Config) -> Result<Outcome, Failure> {
    let params = scaled(cfg, req(cfg.a), req(cfg.n_max))?;
    let report = sector_union_check(&params)?;
    let mut csv = Csv::new(&["index", "re_full", "im_full", "re_sector", "im_sector", "k", "abs_diff"]);
    for (i, (f, s)) in report.full.iter().zip(&report.sectors).enumerate() {
        csv.row(&[
            i.to_string(),
            num(f.re),
            num(f.im),
            num(s.re),
            num(s.im),
            report.sector_of[i].to_string(),
            num((f - s).norm()),
        ]);
    }
    let mut artifacts = Artifacts::default();
    artifacts.add("oracle.csv", csv);
    let passed = report.max_abs_diff < ORACLE_TOL;
    let summary = json!({
        "eigenvalues": report.full.len(),
        "max_abs_diff": report.max_abs_diff,
        "tolerance": ORACLE_TOL,
        "passed": passed,
    });
    let check_failure = (!passed).then(|| {
        format!(
            "sector union differs from the full spectrum by {:.3e} (tolerance {ORACLE_TOL:.0e})",
            report.max_abs_diff
        )
    });
    Ok(Outcome {
        artifacts,
        summary,
        check_failure,
    })
}
