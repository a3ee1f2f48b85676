//! Phase-space pictures: the steady-state Glauber P function in the weak
//! saturation regime, the phase-diffusion coefficient and Wigner functions.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::liouvillian::embed_sector;
use crate::model::ModelParams;

/// Relative tolerance of the P-function quadratures.
pub const QUAD_RTOL: f64 = 1e-10;

/// `|α|²` beyond this fraction of the cutoff is outside the reliable region.
pub const WIGNER_RELIABLE_FRACTION: f64 = 0.8;

/// Exponent `(u/A)(A − Γ − B u/2)` of the radial P function at `u = r²`.
fn p_exponent(params: &ModelParams, u: f64) -> f64 {
    let (a, b, g) = (params.a(), params.b(), params.gamma());
    u / a * (a - g - 0.5 * b * u)
}

fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let (lm, flm, left) = simpson_step(f, a, fa, m, fm);
    let (rm, frm, right) = simpson_step(f, m, fm, b, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature(format!("no convergence on [{a:.6e}, {b:.6e}]")));
    }
    Ok(adaptive_simpson(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)?
        + adaptive_simpson(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)?)
}

/// `∫_a^b f` to relative tolerance `rtol`, split into `pieces` panels.
fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize, rtol: f64) -> Result<f64> {
    // A coarse pass sets the absolute scale for the tolerance.
    let h = (b - a) / pieces as f64;
    let rough: f64 = (0..pieces)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            h / 6.0 * (f(x0) + 4.0 * f(0.5 * (x0 + x1)) + f(x1))
        })
        .sum();
    let tol = rtol * rough.abs().max(f64::MIN_POSITIVE) / pieces as f64;
    let mut total = 0.0;
    for i in 0..pieces {
        let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
        let (f0, f1) = (f(x0), f(x1));
        let (m, fm, whole) = simpson_step(&f, x0, f0, x1, f1);
        total += adaptive_simpson(&f, x0, f0, x1, f1, m, fm, whole, tol, 40)?;
    }
    Ok(total)
}

/// Integration range in `u = r²` and the exponent maximum.
fn p_support(params: &ModelParams) -> Result<(f64, f64, f64)> {
    let (a, b, g) = (params.a(), params.b(), params.gamma());
    if b == 0.0 && a >= g {
        return Err(Error::Quadrature("P function is not normalizable for B = 0 at or above threshold".into()));
    }
    let u_star = if b > 0.0 { ((a - g) / b).max(0.0) } else { 0.0 };
    let width = if b > 0.0 {
        (a / b).sqrt() + if a < g { a / (g - a) } else { 0.0 }
    } else {
        a / (g - a)
    };
    let upper = u_star + 60.0 * width;
    Ok((u_star, p_exponent(params, u_star), upper))
}

/// `ln 𝒩` together with the support, where `𝒩 = ∫₀^∞ e^{E(r²)} r dr`.
fn log_normalization(params: &ModelParams) -> Result<(f64, f64)> {
    let (_, e_max, upper) = p_support(params)?;
    let integral = integrate(|u| (p_exponent(params, u) - e_max).exp(), 0.0, upper, 64, QUAD_RTOL)?;
    Ok((e_max + (0.5 * integral).ln(), upper))
}

/// Radial steady-state P function `exp[(r²/A)(A − Γ − B r²/2)]/(2π𝒩)`,
/// normalized so that `∫₀^∞ P(r) 2πr dr = 1`.
pub fn p_ss_radial(r: f64, params: &ModelParams) -> Result<f64> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(invalid("r", "must be finite and nonnegative"));
    }
    let (log_n, _) = log_normalization(params)?;
    Ok((p_exponent(params, r * r) - log_n).exp() / (2.0 * std::f64::consts::PI))
}

/// Radial P function on a list of radii (one normalization).
pub fn p_ss_radial_curve(radii: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    let (log_n, _) = log_normalization(params)?;
    radii
        .iter()
        .map(|&r| {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(invalid("r", "must be finite and nonnegative"));
            }
            Ok((p_exponent(params, r * r) - log_n).exp() / (2.0 * std::f64::consts::PI))
        })
        .collect()
}

/// Normal-ordered moment `⟨a†ᵐaᵐ⟩ = ∫|α|^{2m} P d²α` of the P function.
pub fn p_moment(params: &ModelParams, order: u32) -> Result<f64> {
    let (log_n, upper) = log_normalization(params)?;
    // ∫ r^{2m} P 2πr dr = ∫ u^m e^{E(u) − ln 𝒩} du / 2.
    let val = integrate(
        |u| u.powi(order as i32) * (p_exponent(params, u) - log_n).exp(),
        0.0,
        upper,
        64,
        QUAD_RTOL,
    )?;
    Ok(0.5 * val)
}

/// Phase diffusion coefficient `D = A/(2 n_ss) + β/2`.
pub fn diffusion_coefficient(params: &ModelParams, n_ss: f64) -> Result<f64> {
    if !(n_ss > 0.0 && n_ss.is_finite()) {
        return Err(invalid("n_ss", format!("must be positive, got {n_ss}")));
    }
    Ok(params.a() / (2.0 * n_ss) + params.beta() / 2.0)
}

/// Rectangular grid of phase-space values; `values[[i, j]]` sits at
/// `α = re[j] + i·im[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceGrid {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub values: Array2<f64>,
}

impl PhaseSpaceGrid {
    /// Riemann sum of the values over the grid (uniform spacing assumed).
    pub fn integral(&self) -> f64 {
        let dx = spacing(&self.re);
        let dy = spacing(&self.im);
        self.values.sum() * dx * dy
    }
}

fn spacing(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        1.0
    } else {
        (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
    }
}

/// Uniform axis of `points` values on `[-extent, extent]`.
pub fn symmetric_axis(extent: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| -extent + 2.0 * extent * i as f64 / (points - 1) as f64)
        .collect()
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut lf = vec![0.0; n + 1];
    for i in 1..=n {
        lf[i] = lf[i - 1] + (i as f64).ln();
    }
    lf
}

/// `g[k][m] = √(m!/(m+k)!) x^{k/2} e^{−x/2} L_m^{(k)}(x)` for `m + k ≤ n_max`:
/// the modulus part of `⟨m+k|D(β)|m⟩` with `x = |β|²`.
fn displacement_moduli(x: f64, n_max: usize, lf: &[f64]) -> Vec<Vec<f64>> {
    const BIG: f64 = 1e150;
    let log_x = if x > 0.0 { x.ln() } else { f64::NEG_INFINITY };
    (0..=n_max)
        .map(|k| {
            let kf = k as f64;
            let len = n_max - k + 1;
            let mut out = Vec::with_capacity(len);
            let mut prev = 0.0f64;
            let mut cur = 1.0f64;
            let mut log_scale = 0.0f64;
            for m in 0..len {
                if m == 1 {
                    prev = cur;
                    cur = 1.0 + kf - x;
                } else if m > 1 {
                    let j = (m - 1) as f64;
                    let next = ((2.0 * j + 1.0 + kf - x) * cur - (j + kf) * prev) / (j + 1.0);
                    prev = cur;
                    cur = next;
                }
                if cur.abs() > BIG {
                    cur /= BIG;
                    prev /= BIG;
                    log_scale += BIG.ln();
                }
                let pre = 0.5 * (lf[m] - lf[m + k]) - 0.5 * x
                    + if k == 0 { 0.0 } else { 0.5 * kf * log_x };
                out.push(if cur == 0.0 || pre == f64::NEG_INFINITY {
                    0.0
                } else {
                    cur.signum() * (pre + log_scale + cur.abs().ln()).exp()
                });
            }
            out
        })
        .collect()
}

/// `W(α) = (1/π)·Tr[D(α) Π D(α)† M]` at one point, with `Π = (−1)^{a†a}`.
///
/// Uses `D(α) Π D(α)† = D(2α) Π`, so only displacement elements at `2α` are
/// needed.
fn wigner_point(m_mat: &Array2<C64>, alpha: C64, lf: &[f64]) -> C64 {
    let n_max = m_mat.nrows() - 1;
    let beta = 2.0 * alpha;
    let g = displacement_moduli(beta.norm_sqr(), n_max, lf);
    let theta = beta.arg();
    let mut acc = C64::new(0.0, 0.0);
    for (k, row) in g.iter().enumerate() {
        let phase = C64::from_polar(1.0, k as f64 * theta);
        for (m, gmk) in row.iter().enumerate() {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let mut term = phase * m_mat[[m, m + k]];
            if k > 0 {
                term += phase.conj() * m_mat[[m + k, m]];
            }
            acc += sign * gmk * term;
        }
    }
    acc / std::f64::consts::PI
}

/// Complex-valued displaced-parity representation of a Fock-space matrix
/// (real for Hermitian `M`). No reliability check.
pub fn wigner_complex(m_mat: &Array2<C64>, re: &[f64], im: &[f64]) -> Result<Array2<C64>> {
    if m_mat.nrows() != m_mat.ncols() || m_mat.nrows() == 0 {
        return Err(invalid("M", "must be a nonempty square matrix"));
    }
    let lf = ln_factorials(2 * m_mat.nrows() + 2);
    let points: Vec<(usize, usize)> = (0..im.len()).flat_map(|i| (0..re.len()).map(move |j| (i, j))).collect();
    let vals: Vec<C64> = points
        .par_iter()
        .map(|&(i, j)| wigner_point(m_mat, C64::new(re[j], im[i]), &lf))
        .collect();
    Ok(Array2::from_shape_vec((im.len(), re.len()), vals).expect("grid shape"))
}

/// Wigner function of `M` on the grid spanned by `re × im`.
///
/// Fails when the grid reaches `|α|² > 0.8·n_max`, where the truncated
/// matrix no longer represents the state faithfully.
pub fn wigner_of_matrix(m_mat: &Array2<C64>, re: &[f64], im: &[f64]) -> Result<PhaseSpaceGrid> {
    let n_max = m_mat.nrows().saturating_sub(1);
    let reach = re.iter().map(|x| x * x).fold(0.0, f64::max) + im.iter().map(|y| y * y).fold(0.0, f64::max);
    if reach > WIGNER_RELIABLE_FRACTION * n_max as f64 {
        return Err(invalid(
            "grid",
            format!("|alpha|^2 reaches {reach:.3}, beyond 0.8 n_max = {:.3}", WIGNER_RELIABLE_FRACTION * n_max as f64),
        ));
    }
    let w = wigner_complex(m_mat, re, im)?;
    Ok(PhaseSpaceGrid {
        re: re.to_vec(),
        im: im.to_vec(),
        values: w.mapv(|z| z.re),
    })
}

/// Wigner function of the symmetrized sector eigenmatrix
/// `ρ^(k) + ρ^(−k) = ρ^(k) + ρ^(k)†` (twice the matrix for `k = 0`).
pub fn wigner_of_sector_mode(k: i64, n_max: usize, coeffs: &[C64], re: &[f64], im: &[f64]) -> Result<PhaseSpaceGrid> {
    let rho = embed_sector(k, n_max, coeffs);
    let sym = &rho + &rho.t().mapv(|z| z.conj());
    wigner_of_matrix(&sym, re, im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::sector_spectrum;
    use crate::steady_state::{moments, solve_steady};

    fn standard(a: f64, n: f64, n_max: usize) -> ModelParams {
        ModelParams::scaled_standard(a, n, 0.0, n_max).unwrap()
    }

    /// Displacement operator `exp(βa† − β*a)` in a `dim`-level space by
    /// scaling and squaring a Taylor series.
    fn displacement_dense(beta: C64, dim: usize) -> Array2<C64> {
        let mut g = Array2::<C64>::zeros((dim, dim));
        for m in 0..dim - 1 {
            let s = ((m + 1) as f64).sqrt();
            g[[m + 1, m]] = beta * s;
            g[[m, m + 1]] = -beta.conj() * s;
        }
        let squarings = 10;
        let g = g.mapv(|z| z / f64::from(1 << squarings));
        let mut term = Array2::<C64>::eye(dim);
        let mut sum = term.clone();
        for j in 1..30 {
            term = term.dot(&g).mapv(|z| z / j as f64);
            sum += &term;
        }
        for _ in 0..squarings {
            sum = sum.dot(&sum);
        }
        sum
    }

    #[test]
    fn vacuum_at_origin() {
        let mut m = Array2::<C64>::zeros((6, 6));
        m[[0, 0]] = C64::new(1.0, 0.0);
        let w = wigner_of_matrix(&m, &[0.0], &[0.0]).unwrap();
        assert!((w.values[[0, 0]] - 1.0 / std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn displacement_elements_match_dense_exponential() {
        let n_max = 12;
        let lf = ln_factorials(40);
        let beta = C64::new(1.3, -0.7);
        let g = displacement_moduli(beta.norm_sqr(), n_max, &lf);
        let d = displacement_dense(beta, 120);
        for k in 0..=n_max {
            for m in 0..=n_max - k {
                let want = d[[m + k, m]];
                let got = g[k][m] * C64::from_polar(1.0, k as f64 * beta.arg());
                assert!((want - got).norm() < 1e-10, "({m},{k}) {want} vs {got}");
            }
        }
    }

    #[test]
    fn printed_form_equals_displaced_parity_form() {
        // Tr[D Π D† M] against Tr[Π D† M D] with dense, enlarged operators.
        let n = 8;
        let mut m = Array2::<C64>::zeros((n + 1, n + 1));
        for i in 0..=n {
            for j in 0..=n {
                m[[i, j]] = C64::new(((i * 3 + j) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64 - 1.0) / 10.0;
            }
        }
        let alpha = C64::new(0.4, 0.9);
        let w = wigner_complex(&m, &[alpha.re], &[alpha.im]).unwrap()[[0, 0]];
        let big = 90;
        let d = displacement_dense(alpha, big);
        let mut mb = Array2::<C64>::zeros((big, big));
        mb.slice_mut(ndarray::s![..=n, ..=n]).assign(&m);
        let core = d.t().mapv(|z| z.conj()).dot(&mb).dot(&d);
        let other: C64 = (0..big).map(|i| if i % 2 == 0 { core[[i, i]] } else { -core[[i, i]] }).sum::<C64>()
            / std::f64::consts::PI;
        assert!((w - other).norm() < 1e-10, "{w} vs {other}");
    }

    #[test]
    fn hermitian_input_gives_real_values() {
        let p = standard(1.2, 2.0, 20);
        let spec = sector_spectrum(&p, 1).unwrap();
        let rho = embed_sector(1, 20, &spec.eigenvectors[0]);
        let herm = &rho + &rho.t().mapv(|z| z.conj());
        let axis = symmetric_axis(2.5, 9);
        let w = wigner_complex(&herm, &axis, &axis).unwrap();
        assert!(w.iter().all(|z| z.im.abs() < 1e-10));
    }

    #[test]
    fn steady_state_integrates_to_one() {
        let p = standard(1.2, 4.0, 80);
        let spec = sector_spectrum(&p, 0).unwrap();
        let (_, lam) = spec.level(0).unwrap();
        assert!(lam.norm() < 1e-10);
        // Normalize the sector-0 mode to unit trace before symmetrizing.
        let c = &spec.eigenvectors[0];
        let tr: C64 = c.iter().sum();
        let c: Vec<C64> = c.iter().map(|z| z / tr).collect();
        let axis = symmetric_axis(5.5, 111);
        let w = wigner_of_sector_mode(0, 80, &c, &axis, &axis).unwrap();
        assert!((w.integral() - 1.0).abs() < 1e-3, "{}", w.integral());

        // Traceless modes integrate to zero.
        let (j1, _) = spec.level(1).unwrap();
        let c1 = &spec.eigenvectors[j1];
        let w1 = wigner_of_sector_mode(0, 80, c1, &axis, &axis).unwrap();
        assert!(w1.integral().abs() < 1e-3);
    }

    #[test]
    fn sector_modes_have_rotational_symmetry() {
        let p = standard(1.4, 2.0, 30);
        for k in [2i64, 3] {
            let spec = sector_spectrum(&p, k).unwrap();
            let c = &spec.eigenvectors[0];
            let pts = [C64::new(0.7, 0.2), C64::new(-1.1, 1.4), C64::new(2.0, -0.3)];
            let rot = C64::from_polar(1.0, std::f64::consts::PI / k as f64);
            for a in pts {
                let b = a * rot;
                let wa = wigner_of_sector_mode(k, 30, c, &[a.re], &[a.im]).unwrap().values[[0, 0]];
                let wb = wigner_of_sector_mode(k, 30, c, &[b.re], &[b.im]).unwrap().values[[0, 0]];
                assert!((wa.abs() - wb.abs()).abs() < 1e-10 * wa.abs().max(1.0), "k={k}: {wa} vs {wb}");
            }
        }
    }

    #[test]
    fn unreliable_grid_is_rejected() {
        let m = Array2::<C64>::eye(11);
        assert!(wigner_of_matrix(&m, &[3.0], &[0.0]).is_err());
        assert!(wigner_of_matrix(&m, &[2.5], &[0.0]).is_ok());
    }

    #[test]
    fn p_function_peak_and_normalization() {
        let p = ModelParams::new(1.25, 0.001, 1.0, 0.0, 1.0, 1000).unwrap();
        let u_star: f64 = 0.25 / 0.001;
        let e = |u: f64| p_exponent(&p, u);
        assert!(e(u_star) > e(u_star * 0.99) && e(u_star) > e(u_star * 1.01));
        assert!(e(u_star) > e(0.0) && e(u_star) > e(2.0 * u_star));
        let (log_n, upper) = log_normalization(&p).unwrap();
        let total = integrate(|u| std::f64::consts::PI * (p_exponent(&p, u) - log_n).exp(), 0.0, upper, 64, 1e-10).unwrap()
            / (2.0 * std::f64::consts::PI);
        assert!((total - 1.0).abs() < 1e-9);
        assert!(p_ss_radial(-1.0, &p).is_err());
    }

    #[test]
    fn p_function_independent_of_dephasing() {
        let p = ModelParams::new(1.25, 0.001, 1.0, 0.0, 1.0, 1000).unwrap();
        let q = p.with_eta(0.2).unwrap().with_omega(5.0).unwrap();
        for r in [0.0, 5.0, 15.8, 20.0] {
            assert_eq!(p_ss_radial(r, &p).unwrap(), p_ss_radial(r, &q).unwrap());
        }
    }

    #[test]
    fn p_function_below_threshold_is_thermal_like() {
        // B = 0, A < Γ: P ∝ exp(−(Γ−A)u/A), a thermal state with ⟨n⟩ = A/(Γ−A).
        let p = ModelParams::new(0.5, 0.0, 1.0, 0.0, 1.0, 50).unwrap();
        assert!((p_moment(&p, 1).unwrap() - 1.0).abs() < 1e-8);
        assert!((p_moment(&p, 2).unwrap() - 2.0).abs() < 1e-8);
        let q = ModelParams::new(1.5, 0.0, 1.0, 0.0, 1.0, 50).unwrap();
        assert!(p_moment(&q, 1).is_err());
    }

    #[test]
    fn p_function_mean_below_threshold_matches_exact() {
        let p = standard(0.75, 100.0, 200);
        let exact = solve_steady(&p).unwrap();
        let pm = p_moment(&p, 1).unwrap();
        assert!((pm - exact.mean()).abs() < 0.05 * exact.mean());
        assert!(moments(&exact, 2) > 0.0);
    }

    #[test]
    fn diffusion_cases() {
        let p = ModelParams::new(1.0, 0.001, 1.0, 0.0, 1.0, 10).unwrap();
        assert!((diffusion_coefficient(&p, 250.0).unwrap() - 2.375e-3).abs() < 1e-15);
        assert!(diffusion_coefficient(&p, 0.0).is_err());
        let q = ModelParams::new(1.0, 1e-9, 1.0, 0.2, 1.0, 10).unwrap();
        assert!((diffusion_coefficient(&q, 1e12).unwrap() - 0.1).abs() < 1e-6);
        let r = ModelParams::new(1.0, 1e-12, 1.0, 0.0, 1.0, 10).unwrap();
        assert!(diffusion_coefficient(&r, 1e12).unwrap() < 1e-10);
    }
}
