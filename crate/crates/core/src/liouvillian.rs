//! Truncated-Fock operators and the Liouvillian, both as a full superoperator
//! (oracle scale) and as its U(1) sector blocks (production path).
//!
//! Vectorization is column-stacked throughout: `vec(ρ)[i + j·d] = ρ[i][j]`,
//! so `vec(X ρ Y) = (Yᵀ ⊗ X) vec(ρ)`.
//!
//! Sector `k ≥ 0` collects the components `|m⟩⟨m−k|`; its coefficient `i`
//! labels `m = k + i`. Sector `−k` collects `|n⟩⟨n+k|` with coefficient `i`
//! labelling `n = i`, and its block is the entrywise conjugate of block `k`.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ModelParams;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Largest cutoff accepted by the dense full-superoperator builders.
pub const FULL_ORACLE_LIMIT: usize = 12;

/// Gain amplitude `f(m)` with `L1|m⟩ = f(m)|m+1⟩`; zero at the cutoff.
pub fn gain_amplitude(params: &ModelParams, m: usize) -> f64 {
    if m >= params.n_max() {
        return 0.0;
    }
    let a = params.a();
    let mp1 = (m + 1) as f64;
    mp1.sqrt() * (a.sqrt() - params.b() * mp1 / (2.0 * a.sqrt()))
}

/// Square matrix on the truncated Fock space `|0⟩ … |n_max⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    pub entries: Array2<C64>,
}

impl FockOperator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: Array2::zeros((dim, dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Annihilation operator; `a|0⟩ = 0`, `a|n⟩ = √n |n−1⟩`.
    pub fn annihilation(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for n in 1..dim {
            op.entries[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
        }
        op
    }

    /// Creation operator with hard truncation `a†|n_max⟩ = 0`.
    pub fn creation(dim: usize) -> Self {
        Self::annihilation(dim).adjoint()
    }

    pub fn number(dim: usize) -> Self {
        Self::diagonal((0..dim).map(|n| n as f64))
    }

    pub fn diagonal(values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        let mut op = Self::zeros(values.len());
        for (i, v) in values.into_iter().enumerate() {
            op.entries[[i, i]] = C64::new(v, 0.0);
        }
        op
    }

    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.t().mapv(|z| z.conj()),
        }
    }

    pub fn dot(&self, other: &Self) -> Self {
        Self {
            entries: self.entries.dot(&other.entries),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            entries: self.entries.mapv(|z| z * s),
        }
    }

    pub fn apply(&self, psi: &Array1<C64>) -> Array1<C64> {
        self.entries.dot(psi)
    }
}

/// The gain, dephasing and loss channels `L1`, `L2`, `L3`.
#[derive(Debug, Clone)]
pub struct JumpOperators {
    pub gain: FockOperator,
    pub dephasing: FockOperator,
    pub loss: FockOperator,
}

impl JumpOperators {
    pub fn as_array(&self) -> [&FockOperator; 3] {
        [&self.gain, &self.dephasing, &self.loss]
    }
}

/// Builds `L1 = a†(√A − B/(2√A)·a a†)`, `L2 = √β·a a†`, `L3 = √Γ·a`.
///
/// Each operator keeps its exact matrix elements inside the truncated space;
/// elements leaving the space are dropped.
pub fn build_jump_operators(params: &ModelParams) -> JumpOperators {
    let dim = params.dim();
    let mut gain = FockOperator::zeros(dim);
    for m in 0..params.n_max() {
        gain.entries[[m + 1, m]] = C64::new(gain_amplitude(params, m), 0.0);
    }
    let sqrt_beta = params.beta().sqrt();
    let dephasing = FockOperator::diagonal((0..dim).map(|m| sqrt_beta * (m + 1) as f64));
    let loss = FockOperator::annihilation(dim).scaled(params.gamma().sqrt());
    JumpOperators {
        gain,
        dephasing,
        loss,
    }
}

pub fn hamiltonian(params: &ModelParams) -> FockOperator {
    FockOperator::number(params.dim()).scaled(params.omega())
}

fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let s = a[[i, j]];
            if s == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = s * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Superoperator matrix of `ρ ↦ X ρ Y`.
fn sandwich(x: &Array2<C64>, y: &Array2<C64>) -> Array2<C64> {
    kron(&y.t().to_owned(), x)
}

fn identity(dim: usize) -> Array2<C64> {
    Array2::from_diag_elem(dim, C64::new(1.0, 0.0))
}

/// Superoperator of the commutator term `−i[H, ·]`.
fn commutator_super(h: &Array2<C64>) -> Array2<C64> {
    let id = identity(h.nrows());
    (sandwich(h, &id) - sandwich(&id, h)) * (-I)
}

/// Superoperator of `D[L]ρ = LρL† − ½{L†L, ρ}`.
pub fn dissipator_super(l: &Array2<C64>) -> Array2<C64> {
    let id = identity(l.nrows());
    let ldag = l.t().mapv(|z| z.conj());
    let ldl = ldag.dot(l);
    sandwich(l, &ldag) - (sandwich(&ldl, &id) + sandwich(&id, &ldl)) * 0.5
}

fn check_oracle_cutoff(n_max: usize, limit: usize) -> Result<()> {
    if n_max > limit {
        return Err(Error::CutoffAboveOracleLimit { n_max, limit });
    }
    Ok(())
}

/// Dense `(n_max+1)² × (n_max+1)²` Liouvillian, column-stacked basis.
pub fn build_full_superoperator(params: &ModelParams) -> Result<Array2<C64>> {
    build_full_superoperator_with_limit(params, FULL_ORACLE_LIMIT)
}

pub fn build_full_superoperator_with_limit(params: &ModelParams, limit: usize) -> Result<Array2<C64>> {
    check_oracle_cutoff(params.n_max(), limit)?;
    let ops = build_jump_operators(params);
    let mut sup = commutator_super(&hamiltonian(params).entries);
    for l in ops.as_array() {
        sup = sup + dissipator_super(&l.entries);
    }
    Ok(sup)
}

/// Applies the Lindblad generator directly to a density matrix without
/// forming the superoperator. Used by full-state time evolution.
pub fn lindblad_action(params: &ModelParams, rho: &Array2<C64>) -> Array2<C64> {
    let dim = params.dim();
    debug_assert_eq!(rho.nrows(), dim);
    let omega = params.omega();
    let gamma = params.gamma();
    let beta = params.beta();
    let f: Vec<f64> = (0..dim).map(|m| gain_amplitude(params, m)).collect();
    let mut out = Array2::zeros((dim, dim));
    // All three channels map |m⟩⟨n| to the same diagonal k = m − n, so the
    // action is written entrywise.
    for m in 0..dim {
        for n in 0..dim {
            let mf = m as f64;
            let nf = n as f64;
            let mut acc = rho[[m, n]]
                * C64::new(
                    -0.5 * (f[m] * f[m] + f[n] * f[n])
                        - 0.5 * gamma * (mf + nf)
                        - 0.5 * beta * (mf - nf) * (mf - nf),
                    -omega * (mf - nf),
                );
            if m >= 1 && n >= 1 {
                acc += rho[[m - 1, n - 1]] * (f[m - 1] * f[n - 1]);
            }
            if m + 1 < dim && n + 1 < dim {
                acc += rho[[m + 1, n + 1]] * (gamma * ((mf + 1.0) * (nf + 1.0)).sqrt());
            }
            out[[m, n]] = acc;
        }
    }
    out
}

/// The Liouvillian restricted to one U(1) sector, stored as its three
/// nonzero bands (the block is tridiagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct SectorBlock {
    pub k: i64,
    pub n_max: usize,
    /// `diag[i] = block[i][i]`
    pub diag: Vec<C64>,
    /// `lower[i] = block[i+1][i]` (gain, coefficient `i` feeds `i+1`)
    pub lower: Vec<C64>,
    /// `upper[i] = block[i][i+1]` (loss, coefficient `i+1` feeds `i`)
    pub upper: Vec<C64>,
}

impl SectorBlock {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Fock label of the first index of coefficient `i`: `m` for `k ≥ 0`,
    /// `n` (the row label) for `k < 0`.
    pub fn row_label(&self, i: usize) -> usize {
        if self.k >= 0 {
            i + self.k as usize
        } else {
            i
        }
    }

    /// Largest Fock label appearing in coefficient `i`.
    pub fn top_label(&self, i: usize) -> usize {
        i + self.k.unsigned_abs() as usize
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if i == j {
            self.diag[i]
        } else if i == j + 1 {
            self.lower[j]
        } else if j == i + 1 {
            self.upper[i]
        } else {
            ZERO
        }
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let n = self.dim();
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            out[[i, i]] = self.diag[i];
        }
        for i in 0..n.saturating_sub(1) {
            out[[i + 1, i]] = self.lower[i];
            out[[i, i + 1]] = self.upper[i];
        }
        out
    }

    pub fn apply(&self, c: &[C64]) -> Vec<C64> {
        let n = self.dim();
        let mut out: Vec<C64> = (0..n).map(|i| self.diag[i] * c[i]).collect();
        for i in 0..n.saturating_sub(1) {
            out[i + 1] += self.lower[i] * c[i];
            out[i] += self.upper[i] * c[i + 1];
        }
        out
    }

    pub fn conj(&self) -> Self {
        let cj = |v: &[C64]| v.iter().map(|z| z.conj()).collect();
        Self {
            k: -self.k,
            n_max: self.n_max,
            diag: cj(&self.diag),
            lower: cj(&self.lower),
            upper: cj(&self.upper),
        }
    }

    /// Places sector coefficients on their diagonal of a full density matrix.
    pub fn embed(&self, coeffs: &[C64]) -> Array2<C64> {
        embed_sector(self.k, self.n_max, coeffs)
    }
}

/// Places sector-`k` coefficients on diagonal `k` of a `(n_max+1)²` matrix.
pub fn embed_sector(k: i64, n_max: usize, coeffs: &[C64]) -> Array2<C64> {
    let dim = n_max + 1;
    let shift = k.unsigned_abs() as usize;
    let mut out = Array2::zeros((dim, dim));
    for (i, &c) in coeffs.iter().enumerate() {
        if k >= 0 {
            out[[i + shift, i]] = c;
        } else {
            out[[i, i + shift]] = c;
        }
    }
    out
}

/// Extracts the sector-`k` coefficients of a density matrix.
pub fn sector_coefficients(k: i64, rho: &Array2<C64>) -> Vec<C64> {
    let dim = rho.nrows();
    let shift = k.unsigned_abs() as usize;
    (0..dim.saturating_sub(shift))
        .map(|i| {
            if k >= 0 {
                rho[[i + shift, i]]
            } else {
                rho[[i, i + shift]]
            }
        })
        .collect()
}

/// Builds the sector-`k` block. Negative sectors are the conjugate of the
/// corresponding positive one.
pub fn build_sector_block(params: &ModelParams, k: i64) -> Result<SectorBlock> {
    let n_max = params.n_max();
    if k.unsigned_abs() as usize > n_max {
        return Err(Error::SectorOutOfRange { k, n_max });
    }
    if k < 0 {
        return Ok(build_sector_block(params, -k)?.conj());
    }
    let shift = k as usize;
    let dim = n_max + 1 - shift;
    let gamma = params.gamma();
    let kf = k as f64;
    let constant = C64::new(-0.5 * params.beta() * kf * kf, -params.omega() * kf);

    let mut diag = Vec::with_capacity(dim);
    for i in 0..dim {
        let (m, n) = (i + shift, i);
        let fm = gain_amplitude(params, m);
        let fn_ = gain_amplitude(params, n);
        let re = -0.5 * (fm * fm + fn_ * fn_) - 0.5 * gamma * (m + n) as f64;
        diag.push(C64::new(re, 0.0) + constant);
    }
    let mut lower = Vec::with_capacity(dim.saturating_sub(1));
    let mut upper = Vec::with_capacity(dim.saturating_sub(1));
    for i in 0..dim.saturating_sub(1) {
        let (m, n) = (i + shift, i);
        lower.push(C64::new(gain_amplitude(params, m) * gain_amplitude(params, n), 0.0));
        upper.push(C64::new(gamma * (((m + 1) * (n + 1)) as f64).sqrt(), 0.0));
    }
    Ok(SectorBlock {
        k,
        n_max,
        diag,
        lower,
        upper,
    })
}

/// Superoperator of `K[a]ρ = a†{a a†, ρ}a − {(a a†)², ρ}`.
fn saturation_kernel_super(a: &Array2<C64>) -> Array2<C64> {
    let dim = a.nrows();
    let id = identity(dim);
    let adag = a.t().mapv(|z| z.conj());
    let aad = a.dot(&adag);
    let aad2 = aad.dot(&aad);
    // a† (X ρ + ρ X) a = (a†X) ρ a + a† ρ (X a)
    let first = sandwich(&adag.dot(&aad), a) + sandwich(&adag, &aad.dot(a));
    let second = sandwich(&aad2, &id) + sandwich(&id, &aad2);
    first - second
}

/// Rates of the cavity-only generator that is not of Lindblad form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonLindbladRates {
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    pub gamma: f64,
    pub omega: f64,
    pub n_max: usize,
}

/// `−i[ωa†a, ρ] + ΓD[a]ρ + A·D[a†]ρ + B1·D[a a†]ρ − B2·K[a]ρ` on the
/// truncated space; operator products are taken between truncated matrices
/// so the generator stays trace preserving.
pub fn build_nonlindblad_generator(rates: &NonLindbladRates) -> Result<Array2<C64>> {
    build_nonlindblad_generator_with_limit(rates, FULL_ORACLE_LIMIT)
}

pub fn build_nonlindblad_generator_with_limit(rates: &NonLindbladRates, limit: usize) -> Result<Array2<C64>> {
    check_oracle_cutoff(rates.n_max, limit)?;
    let dim = rates.n_max + 1;
    let a = FockOperator::annihilation(dim).entries;
    let adag = a.t().mapv(|z| z.conj());
    let h = FockOperator::number(dim).entries * rates.omega;
    let aad = a.dot(&adag);
    let sup = commutator_super(&h)
        + dissipator_super(&a) * rates.gamma
        + dissipator_super(&adag) * rates.a
        + dissipator_super(&aad) * rates.b1
        - saturation_kernel_super(&a) * rates.b2;
    Ok(sup)
}

/// Column-stacks a density matrix.
pub fn vectorize(rho: &Array2<C64>) -> Array1<C64> {
    let d = rho.nrows();
    Array1::from_shape_fn(d * d, |idx| rho[[idx % d, idx / d]])
}

pub fn unvectorize(v: &Array1<C64>, dim: usize) -> Array2<C64> {
    Array2::from_shape_fn((dim, dim), |(i, j)| v[i + j * dim])
}

/// Row vector of the trace functional in the column-stacked basis.
pub fn trace_functional(dim: usize) -> Array1<C64> {
    Array1::from_shape_fn(dim * dim, |idx| {
        if idx % dim == idx / dim {
            C64::new(1.0, 0.0)
        } else {
            ZERO
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(a: f64, b: f64, eta: f64, omega: f64, n_max: usize) -> ModelParams {
        ModelParams::new(a, b, 1.0, eta, omega, n_max).unwrap()
    }

    fn max_abs(m: &Array2<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, dim: usize) -> Array2<C64> {
        Array2::from_shape_fn((dim, dim), |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn saturation_free_gain_is_creation() {
        let p = params(1.0, 0.0, 0.0, 1.0, 6);
        let ops = build_jump_operators(&p);
        let adag = FockOperator::creation(7);
        assert!(max_abs(&(&ops.gain.entries - &adag.entries)) < 1e-15);
    }

    #[test]
    fn gain_amplitudes() {
        let p = params(1.0, 0.1, 0.0, 1.0, 6);
        assert_relative_eq!(gain_amplitude(&p, 0), 0.95, epsilon = 1e-15);
        assert_relative_eq!(gain_amplitude(&p, 1), 2f64.sqrt() * 0.9, epsilon = 1e-15);
        assert_eq!(gain_amplitude(&p, 6), 0.0);
        let ops = build_jump_operators(&p);
        assert_relative_eq!(ops.gain.entries[[2, 1]].re, 2f64.sqrt() * 0.9, epsilon = 1e-15);
    }

    #[test]
    fn creation_is_hard_truncated() {
        let adag = FockOperator::creation(5);
        for i in 0..5 {
            assert_eq!(adag.entries[[i, 4]], ZERO);
        }
        let a = FockOperator::annihilation(5);
        assert_relative_eq!(a.entries[[3, 4]].re, 2.0);
    }

    #[test]
    fn full_superoperator_trace_preserving() {
        let p = params(1.25, 0.1, 0.2, 1.0, 8);
        let sup = build_full_superoperator(&p).unwrap();
        let tr = trace_functional(9);
        let row = tr.dot(&sup);
        assert!(row.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn full_superoperator_matches_direct_action() {
        let p = params(1.1, 0.07, 0.3, 0.8, 6);
        let sup = build_full_superoperator(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_matrix(&mut rng, 7);
        let lhs = unvectorize(&sup.dot(&vectorize(&rho)), 7);
        let rhs = lindblad_action(&p, &rho);
        assert!(max_abs(&(&lhs - &rhs)) < 1e-12);
    }

    #[test]
    fn hermiticity_preserved() {
        let p = params(1.25, 0.1, 0.2, 1.0, 8);
        let sup = build_full_superoperator(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let rho = random_matrix(&mut rng, 9);
            let rho_dag = rho.t().mapv(|z| z.conj());
            let out = unvectorize(&sup.dot(&vectorize(&rho)), 9);
            let out_dag = out.t().mapv(|z| z.conj());
            let out_of_dag = unvectorize(&sup.dot(&vectorize(&rho_dag)), 9);
            assert!(max_abs(&(&out_dag - &out_of_dag)) < 1e-12);
        }
    }

    #[test]
    fn oracle_limit_enforced() {
        let p = params(1.0, 0.1, 0.0, 1.0, 13);
        assert!(matches!(
            build_full_superoperator(&p),
            Err(Error::CutoffAboveOracleLimit { .. })
        ));
        assert!(build_full_superoperator_with_limit(&p, 13).is_ok());
    }

    #[test]
    fn sector_range_checked() {
        let p = params(1.0, 0.1, 0.0, 1.0, 5);
        assert!(build_sector_block(&p, 5).is_ok());
        assert!(matches!(build_sector_block(&p, 6), Err(Error::SectorOutOfRange { .. })));
        assert!(build_sector_block(&p, -6).is_err());
    }

    #[test]
    fn sector_blocks_match_superoperator_entries() {
        let p = params(1.2, 0.09, 0.15, 0.7, 7);
        let dim = 8;
        let sup = build_full_superoperator(&p).unwrap();
        for k in -7i64..=7 {
            let block = build_sector_block(&p, k).unwrap();
            let shift = k.unsigned_abs() as usize;
            let flat = |i: usize| -> usize {
                let (r, c) = if k >= 0 { (i + shift, i) } else { (i, i + shift) };
                r + c * dim
            };
            for i in 0..block.dim() {
                for j in 0..block.dim() {
                    let want = sup[[flat(i), flat(j)]];
                    assert!((block.get(i, j) - want).norm() < 1e-12, "k={k} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn sector_dims_sum_to_full() {
        let p = params(1.0, 0.1, 0.0, 1.0, 9);
        let total: usize = (-9i64..=9).map(|k| build_sector_block(&p, k).unwrap().dim()).sum();
        assert_eq!(total, 100);
    }

    #[test]
    fn dephasing_shift_identity() {
        let p0 = params(1.3, 0.0, 0.0, 1.0, 10);
        let p1 = p0.with_eta(0.4).unwrap();
        let b0 = build_sector_block(&p0, 2).unwrap();
        let b1 = build_sector_block(&p1, 2).unwrap();
        for i in 0..b0.dim() {
            assert!((b1.diag[i] - b0.diag[i] - C64::new(-0.8, 0.0)).norm() < 1e-12);
        }
        assert_eq!(b0.lower, b1.lower);
        assert_eq!(b0.upper, b1.upper);
    }

    #[test]
    fn frequency_shift_identity() {
        let p0 = params(0.9, 0.05, 0.1, 0.0, 10);
        let p1 = p0.with_omega(1.7).unwrap();
        for k in 0..4i64 {
            let b0 = build_sector_block(&p0, k).unwrap();
            let b1 = build_sector_block(&p1, k).unwrap();
            for i in 0..b0.dim() {
                let d = b1.diag[i] - b0.diag[i];
                assert!((d - C64::new(0.0, -1.7 * k as f64)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sector_zero_conserves_probability() {
        let p = params(1.4, 0.08, 0.2, 1.0, 25);
        let b = build_sector_block(&p, 0).unwrap();
        let dense = b.to_dense();
        for j in 0..b.dim() {
            let s: C64 = dense.column(j).sum();
            assert!(s.norm() < 1e-12, "column {j}: {s}");
            assert!(dense.column(j).iter().all(|z| z.im == 0.0));
        }
    }

    #[test]
    fn sector_zero_independent_of_eta() {
        let p0 = params(1.4, 0.08, 0.0, 1.0, 25);
        let p1 = p0.with_eta(0.2).unwrap();
        assert_eq!(build_sector_block(&p0, 0).unwrap(), build_sector_block(&p1, 0).unwrap());
    }

    #[test]
    fn negative_sector_is_conjugate() {
        let p = params(1.1, 0.05, 0.1, 1.3, 9);
        let pos = build_sector_block(&p, 3).unwrap();
        let neg = build_sector_block(&p, -3).unwrap();
        assert_eq!(neg.k, -3);
        for i in 0..pos.dim() {
            assert_eq!(neg.diag[i], pos.diag[i].conj());
        }
    }

    #[test]
    fn embed_roundtrip() {
        let coeffs: Vec<C64> = (0..4).map(|i| C64::new(i as f64, -1.0)).collect();
        for k in [-2i64, 2] {
            let m = embed_sector(k, 5, &coeffs);
            assert_eq!(sector_coefficients(k, &m), coeffs);
        }
    }

    #[test]
    fn nonlindblad_trace_preserving() {
        let rates = NonLindbladRates {
            a: 1.2,
            b1: 0.05,
            b2: 0.04,
            gamma: 1.0,
            omega: 1.0,
            n_max: 8,
        };
        let sup = build_nonlindblad_generator(&rates).unwrap();
        let row = trace_functional(9).dot(&sup);
        assert!(row.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn nonlindblad_reduces_to_lindblad_without_saturation() {
        let rates = NonLindbladRates {
            a: 1.2,
            b1: 0.0,
            b2: 0.0,
            gamma: 1.0,
            omega: 0.6,
            n_max: 8,
        };
        let lhs = build_nonlindblad_generator(&rates).unwrap();
        let rhs = build_full_superoperator(&params(1.2, 0.0, 0.0, 0.6, 8)).unwrap();
        assert!(max_abs(&(&lhs - &rhs)) < 1e-13);
    }
}
