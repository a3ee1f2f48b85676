//! Sector eigendecomposition, spurious-eigenvalue filtering, the Liouvillian
//! gap and the N-scaling sweeps exhibiting the spectral collapse.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::liouvillian::{build_sector_block, SectorBlock};
use crate::model::{apply_scaling, semiclassical_nss, ModelParams};
use crate::steady_state::birth_death_populations;

/// Eigenvalues below this magnitude are treated as zero.
pub const ZERO_TOL: f64 = 1e-10;

pub const DEFAULT_SPURIOUS_WEIGHT: f64 = 0.5;

/// Eigenpairs of one sector block, ordered by ascending `|Re λ|` (ties by
/// ascending `Im λ`).
#[derive(Debug, Clone)]
pub struct SectorSpectrum {
    pub k: i64,
    pub n_max: usize,
    pub eigenvalues: Vec<C64>,
    /// Unit-norm coefficient vectors for the leading eigenpairs; may be
    /// shorter than `eigenvalues` when only the slowest modes were resolved.
    pub eigenvectors: Vec<Vec<C64>>,
    /// Per eigenpair; pairs without an eigenvector are never flagged.
    pub spurious: Vec<bool>,
}

impl SectorSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Non-spurious eigenvalues in order; index `j` is `λ_j^(k)`.
    pub fn physical(&self) -> impl Iterator<Item = C64> + '_ {
        self.eigenvalues
            .iter()
            .zip(&self.spurious)
            .filter(|(_, s)| !**s)
            .map(|(l, _)| *l)
    }

    /// `(index, eigenvalue)` of the `j`-th non-spurious eigenpair.
    pub fn level(&self, j: usize) -> Option<(usize, C64)> {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.spurious[*i])
            .nth(j)
            .map(|(i, l)| (i, *l))
    }

    pub fn without_vectors(mut self) -> Self {
        self.eigenvectors.clear();
        self
    }
}

fn order_key(a: &C64, b: &C64) -> std::cmp::Ordering {
    a.re.abs().total_cmp(&b.re.abs()).then(a.im.total_cmp(&b.im))
}

fn fix_phase(v: &mut [C64]) {
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(C64::new(0.0, 0.0));
    if pivot.norm() > 0.0 {
        let phase = pivot.conj() / pivot.norm();
        for z in v.iter_mut() {
            *z *= phase;
        }
    }
}

/// Symmetrizable form of a tridiagonal block: real diagonal, positive
/// off-diagonal products and a constant imaginary diagonal.
struct Symmetrized {
    diag: Vec<f64>,
    off: Vec<f64>,
    shift_im: f64,
    /// `ln s_i` of the diagonal similarity `block = S T S⁻¹`.
    log_scale: Vec<f64>,
}

fn symmetrize(block: &SectorBlock) -> Option<Symmetrized> {
    let n = block.dim();
    let shift_im = block.diag[0].im;
    if block.diag.iter().any(|d| d.im != shift_im) {
        return None;
    }
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    let mut log_scale = Vec::with_capacity(n);
    log_scale.push(0.0);
    for i in 0..n.saturating_sub(1) {
        let (l, u) = (block.lower[i], block.upper[i]);
        if l.im != 0.0 || u.im != 0.0 || !(l.re > 0.0 && u.re > 0.0) {
            return None;
        }
        off.push((l.re * u.re).sqrt());
        log_scale.push(log_scale[i] + 0.5 * (l.re.ln() - u.re.ln()));
    }
    Some(Symmetrized {
        diag: block.diag.iter().map(|d| d.re).collect(),
        off,
        shift_im,
        log_scale,
    })
}

fn unscale_vector(sym: &Symmetrized, u: &[f64]) -> Vec<C64> {
    // v_i = s_i u_i evaluated in log space, then normalized.
    let logs: Vec<f64> = u
        .iter()
        .zip(&sym.log_scale)
        .map(|(x, ls)| if *x == 0.0 { f64::NEG_INFINITY } else { x.abs().ln() + ls })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut v: Vec<C64> = u
        .iter()
        .zip(&logs)
        .map(|(x, l)| C64::new(x.signum() * (l - top).exp(), 0.0))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in v.iter_mut() {
        *z /= norm;
    }
    fix_phase(&mut v);
    v
}

/// Eigenvalues of a block in sorted order, and a handle to resolve vectors.
enum Route {
    Symmetric(Symmetrized, Vec<f64>),
    Dense(Vec<Vec<C64>>),
}

fn solve_route(block: &SectorBlock, with_dense_vectors: bool) -> Result<(Vec<C64>, Route)> {
    let fail = |reason: String| Error::Eigensolver {
        k: block.k,
        dim: block.dim(),
        reason,
    };
    if let Some(sym) = symmetrize(block) {
        let mut reals = linalg::symmetric_tridiagonal_eigenvalues(&sym.diag, &sym.off)
            .ok_or_else(|| fail("implicit QL did not converge".into()))?;
        // Eigenvalues are ≤ 0 up to rounding; ascending |Re| is descending Re.
        reals.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(b.total_cmp(a)));
        let vals = reals.iter().map(|r| C64::new(*r, sym.shift_im)).collect();
        return Ok((vals, Route::Symmetric(sym, reals)));
    }
    let dense = block.to_dense();
    if with_dense_vectors {
        let (vals, vecs) = linalg::dense_eig(&dense).map_err(fail)?;
        let mut pairs: Vec<(C64, Vec<C64>)> = vals
            .into_iter()
            .enumerate()
            .map(|(j, l)| {
                let mut v = vecs.column(j).to_vec();
                fix_phase(&mut v);
                (l, v)
            })
            .collect();
        pairs.sort_by(|a, b| order_key(&a.0, &b.0));
        let (vals, vecs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        Ok((vals, Route::Dense(vecs)))
    } else {
        let mut vals = linalg::dense_eigenvalues(&dense).map_err(fail)?;
        vals.sort_by(order_key);
        Ok((vals, Route::Dense(Vec::new())))
    }
}

fn resolve_vectors(route: &Route, count: usize) -> Vec<Vec<C64>> {
    match route {
        Route::Symmetric(sym, reals) => {
            let wanted = &reals[..count.min(reals.len())];
            linalg::symmetric_tridiagonal_eigenvectors(&sym.diag, &sym.off, wanted)
                .iter()
                .map(|u| unscale_vector(sym, u))
                .collect()
        }
        Route::Dense(vecs) => vecs.iter().take(count).cloned().collect(),
    }
}

/// Full eigendecomposition of a sector block. No spurious flags are set;
/// see [`filter_spurious`].
pub fn eigendecompose(block: &SectorBlock) -> Result<SectorSpectrum> {
    let (eigenvalues, route) = solve_route(block, true)?;
    let eigenvectors = resolve_vectors(&route, eigenvalues.len());
    Ok(SectorSpectrum {
        k: block.k,
        n_max: block.n_max,
        spurious: vec![false; eigenvalues.len()],
        eigenvalues,
        eigenvectors,
    })
}

/// All eigenvalues, eigenvectors only for the `count` slowest modes.
pub fn eigendecompose_lowest(block: &SectorBlock, count: usize) -> Result<SectorSpectrum> {
    let small = block.dim() <= 200;
    let (eigenvalues, route) = solve_route(block, small)?;
    let route = match route {
        // Large non-symmetrizable blocks: recompute with vectors.
        Route::Dense(ref v) if v.is_empty() => solve_route(block, true)?.1,
        r => r,
    };
    let eigenvectors = resolve_vectors(&route, count);
    Ok(SectorSpectrum {
        k: block.k,
        n_max: block.n_max,
        spurious: vec![false; eigenvalues.len()],
        eigenvalues,
        eigenvectors,
    })
}

/// Fock level above which eigenmatrix weight is considered unphysical:
/// `min(2A/B − 1, 0.9·n_max)`.
pub fn spurious_level(params: &ModelParams) -> f64 {
    (params.saturation_scale() - 1.0).min(0.9 * params.n_max() as f64)
}

/// Coefficient weight `Σ_{m > m*} |c_m|²`, labelling each coefficient by its
/// largest Fock index.
pub fn high_level_weight(k: i64, coeffs: &[C64], m_star: f64) -> f64 {
    let shift = k.unsigned_abs() as usize;
    coeffs
        .iter()
        .enumerate()
        .filter(|(i, _)| (i + shift) as f64 > m_star)
        .map(|(_, c)| c.norm_sqr())
        .sum()
}

/// Flags eigenpairs whose weight above the saturation scale exceeds
/// `weight_threshold`.
pub fn filter_spurious(mut spectrum: SectorSpectrum, params: &ModelParams, weight_threshold: f64) -> SectorSpectrum {
    let m_star = spurious_level(params);
    for (j, v) in spectrum.eigenvectors.iter().enumerate() {
        spectrum.spurious[j] = high_level_weight(spectrum.k, v, m_star) > weight_threshold;
    }
    spectrum
}

/// Builds, decomposes and filters one sector.
pub fn sector_spectrum(params: &ModelParams, k: i64) -> Result<SectorSpectrum> {
    let block = build_sector_block(params, k)?;
    Ok(filter_spurious(eigendecompose(&block)?, params, DEFAULT_SPURIOUS_WEIGHT))
}

/// Like [`sector_spectrum`] but resolves eigenvectors only until `levels`
/// non-spurious modes are known.
pub fn sector_spectrum_lowest(params: &ModelParams, k: i64, levels: usize) -> Result<SectorSpectrum> {
    let block = build_sector_block(params, k)?;
    let mut count = (levels + 2).min(block.dim());
    loop {
        let spec = filter_spurious(eigendecompose_lowest(&block, count)?, params, DEFAULT_SPURIOUS_WEIGHT);
        let physical = spec.spurious[..count].iter().filter(|s| !**s).count();
        if physical >= levels || count == block.dim() {
            return Ok(spec);
        }
        count = (count * 2).min(block.dim());
    }
}

/// The Liouvillian gap and the slowest modes of each sector.
#[derive(Debug, Clone)]
pub struct GapReport {
    pub gap: C64,
    pub sector_of_gap: i64,
    /// Slowest nonzero mode per sector: `λ_0^(k)` for `k ≠ 0`, `λ_1^(0)` for
    /// `k = 0`.
    pub per_sector: BTreeMap<i64, C64>,
    /// Non-spurious `λ_j^(k)` for `j = 0, 1, 2` (fewer if unavailable).
    pub levels: BTreeMap<i64, Vec<C64>>,
}

pub fn liouvillian_gap(spectra: &[SectorSpectrum]) -> Result<GapReport> {
    let mut best: Option<(C64, i64)> = None;
    let mut per_sector = BTreeMap::new();
    let mut levels = BTreeMap::new();
    for spec in spectra {
        levels.insert(spec.k, spec.physical().take(3).collect::<Vec<_>>());
        let skip = usize::from(spec.k == 0);
        if let Some(l) = spec.physical().nth(skip) {
            per_sector.insert(spec.k, l);
        }
        for l in spec.physical() {
            if l.re.abs() <= ZERO_TOL {
                continue;
            }
            let better = match best {
                None => true,
                Some((b, _)) => order_key(&l, &b).is_lt(),
            };
            if better {
                best = Some((l, spec.k));
            }
            // Sorted: the first nonzero entry is the slowest in this sector.
            break;
        }
    }
    let (gap, sector_of_gap) = best.ok_or(Error::AllSpurious)?;
    Ok(GapReport {
        gap,
        sector_of_gap,
        per_sector,
        levels,
    })
}

/// Spectra of sectors `0..=k_max`, one task per sector.
pub fn spectra_up_to(params: &ModelParams, k_max: i64, levels: usize) -> Result<Vec<SectorSpectrum>> {
    (0..=k_max)
        .into_par_iter()
        .map(|k| sector_spectrum_lowest(params, k, levels).map(SectorSpectrum::without_vectors))
        .collect()
}

/// Gap over sectors `0..=k_max` (negative sectors are conjugate and carry
/// the same real parts).
pub fn gap_report(params: &ModelParams, k_max: i64) -> Result<GapReport> {
    liouvillian_gap(&spectra_up_to(params, k_max, 3)?)
}

/// Tail mass bound used by the cutoff selection.
pub const CUTOFF_TAIL_MASS: f64 = 1e-6;

/// `n_max = max(30, ⌈4·n_ss(A_max)⌉)`, enlarged until the closed-form
/// steady state at every gain of the grid keeps less than
/// [`CUTOFF_TAIL_MASS`] above `0.9·n_max`.
pub fn auto_cutoff(params: &ModelParams, a_grid: &[f64]) -> Result<usize> {
    let a_max = a_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let at_max = params.with_a(a_max)?;
    let nss = semiclassical_nss(&at_max);
    let mut n_max = if nss.is_finite() {
        30usize.max((4.0 * nss).ceil() as usize)
    } else {
        30
    };
    loop {
        let ok = a_grid.iter().try_fold(true, |ok, &a| -> Result<bool> {
            let p = params.with_a(a)?.with_n_max(n_max)?;
            let pops = birth_death_populations(&p);
            let start = (0.9 * n_max as f64).floor() as usize + 1;
            let tail: f64 = pops[start.min(pops.len())..].iter().sum();
            Ok(ok && tail < CUTOFF_TAIL_MASS)
        })?;
        if ok || n_max >= 50_000 {
            return Ok(n_max);
        }
        n_max = (n_max as f64 * 1.25).ceil() as usize;
    }
}

/// One `(N, A, k, j)` entry of a collapse sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_scale: f64,
    pub a: f64,
    pub k: i64,
    pub j: usize,
    pub n_max: usize,
    /// `None` when the level was unavailable or the solve failed.
    pub lambda: Option<C64>,
    pub spurious: bool,
}

/// Minimum of `|Re λ_j^(k)|` over the gain grid at fixed `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepMinimum {
    pub n_scale: f64,
    pub k: i64,
    pub j: usize,
    pub min_abs_re: f64,
    pub argmin_a: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub minima: Vec<SweepMinimum>,
}

/// Scans gains and scaling parameters, recording `λ_j^(k)` for every
/// requested `(k, j)`; each `N` uses `B → B/N` (μ = 0) and, unless `n_max`
/// is given, each `(N, A)` point gets its own cutoff from [`auto_cutoff`].
/// Per-point cutoffs keep low gains below the gain zero `2A/B`, where blocks
/// stop being symmetrizable.
pub fn collapse_sweep(
    base: &ModelParams,
    a_grid: &[f64],
    n_list: &[f64],
    sectors: &[i64],
    levels: &[usize],
    n_max: Option<usize>,
) -> Result<SweepResult> {
    if a_grid.is_empty() || n_list.is_empty() || sectors.is_empty() || levels.is_empty() {
        return Err(crate::error::invalid("grid", "sweep grids must be non-empty"));
    }
    let max_level = levels.iter().copied().max().unwrap_or(0);
    let mut tasks = Vec::new();
    for &n in n_list {
        let scaled = apply_scaling(base, n, 0.0)?;
        for &a in a_grid {
            let cutoff = match n_max {
                Some(c) => c,
                None => auto_cutoff(&scaled, &[a])?,
            };
            for &k in sectors {
                tasks.push((n, a, k, scaled.with_a(a)?.with_n_max(cutoff)?));
            }
        }
    }
    let mut rows: Vec<SweepRow> = tasks
        .par_iter()
        .flat_map_iter(|(n, a, k, p)| {
            let spec = sector_spectrum_lowest(p, *k, max_level + 1).ok();
            levels
                .iter()
                .map(|&j| {
                    let hit = spec.as_ref().and_then(|s| s.level(j));
                    SweepRow {
                        n_scale: *n,
                        a: *a,
                        k: *k,
                        j,
                        n_max: p.n_max(),
                        lambda: hit.map(|(_, l)| l),
                        spurious: false,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    rows.sort_by(|x, y| {
        x.n_scale
            .total_cmp(&y.n_scale)
            .then(x.k.cmp(&y.k))
            .then(x.j.cmp(&y.j))
            .then(x.a.total_cmp(&y.a))
    });

    let mut minima = Vec::new();
    for &n in n_list {
        for &k in sectors {
            for &j in levels {
                let best = rows
                    .iter()
                    .filter(|r| r.n_scale == n && r.k == k && r.j == j)
                    .filter_map(|r| r.lambda.map(|l| (l.re.abs(), r.a)))
                    .min_by(|x, y| x.0.total_cmp(&y.0));
                if let Some((min_abs_re, argmin_a)) = best {
                    minima.push(SweepMinimum {
                        n_scale: n,
                        k,
                        j,
                        min_abs_re,
                        argmin_a,
                    });
                }
            }
        }
    }
    Ok(SweepResult { rows, minima })
}

/// Refines the minimum of `|Re λ_j^(k)|` over the gain by golden-section
/// search inside `[a_lo, a_hi]`, at a fixed cutoff.
pub fn refine_minimum(params: &ModelParams, k: i64, j: usize, a_lo: f64, a_hi: f64, tol: f64) -> Result<(f64, f64)> {
    let eval = |a: f64| -> Result<f64> {
        let spec = sector_spectrum_lowest(&params.with_a(a)?, k, j + 1)?;
        spec.level(j)
            .map(|(_, l)| l.re.abs())
            .ok_or(Error::AllSpurious)
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a_lo, a_hi);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = eval(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = eval(x2)?;
        }
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

/// Full-superoperator spectrum paired with the union of all sector spectra.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub n_max: usize,
    /// Full-superoperator eigenvalues, sorted by real then imaginary part.
    pub full: Vec<C64>,
    /// `sectors[i]` is the sector eigenvalue paired with `full[i]`.
    pub sectors: Vec<C64>,
    pub sector_of: Vec<i64>,
    pub max_abs_diff: f64,
}

/// Compares the dense spectrum of the full generator with the sector blocks
/// `k ∈ [−n_max, n_max]`; spurious modes are kept, since the full generator
/// carries them too. Pairing is greedy nearest-neighbour in sorted order.
pub fn sector_union_check(params: &ModelParams) -> Result<OracleReport> {
    let full_matrix = crate::liouvillian::build_full_superoperator(params)?;
    let mut full = linalg::dense_eigenvalues(&full_matrix).map_err(|reason| Error::Eigensolver {
        k: i64::MIN,
        dim: full_matrix.nrows(),
        reason,
    })?;
    full.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let n = params.n_max() as i64;
    let mut pool: Vec<(C64, i64)> = Vec::with_capacity(full.len());
    for k in -n..=n {
        let block = build_sector_block(params, k)?;
        pool.extend(eigendecompose(&block)?.eigenvalues.into_iter().map(|l| (l, k)));
    }
    if pool.len() != full.len() {
        return Err(Error::DimensionMismatch {
            expected: full.len(),
            got: pool.len(),
        });
    }
    let mut used = vec![false; pool.len()];
    let mut sectors = Vec::with_capacity(full.len());
    let mut sector_of = Vec::with_capacity(full.len());
    let mut max_abs_diff = 0.0f64;
    for l in &full {
        let (best, d) = pool
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, (m, _))| (i, (m - l).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("pool and full spectrum have equal size");
        used[best] = true;
        sectors.push(pool[best].0);
        sector_of.push(pool[best].1);
        max_abs_diff = max_abs_diff.max(d);
    }
    Ok(OracleReport {
        n_max: params.n_max(),
        full,
        sectors,
        sector_of,
        max_abs_diff,
    })
}
