//! Stationary photon distribution, its factorial moments and the closed-form
//! birth–death populations.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::liouvillian::{build_sector_block, gain_amplitude, SectorBlock};
use crate::model::{apply_scaling, ModelParams};
use crate::spectra::{sector_spectrum_lowest, ZERO_TOL};

/// Populations `p_m`, `m = 0..=n_max`, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalState {
    pub p: Vec<f64>,
}

/// Negativity tolerated (and clipped) after a null solve.
pub const NEGATIVITY_CLIP: f64 = 1e-12;

impl DiagonalState {
    /// Normalizes nonnegative weights.
    pub fn from_weights(w: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = w.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
            return Err(Error::NegativePopulation { index, value });
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(invalid("p", "weights must have a positive finite sum"));
        }
        Ok(Self {
            p: w.into_iter().map(|x| x / total).collect(),
        })
    }

    pub fn vacuum(n_max: usize) -> Self {
        let mut p = vec![0.0; n_max + 1];
        p[0] = 1.0;
        Self { p }
    }

    pub fn n_max(&self) -> usize {
        self.p.len() - 1
    }

    pub fn mean(&self) -> f64 {
        moments(self, 1)
    }

    /// `Σ_{m > 0.9 n_max} p_m`.
    pub fn tail_mass(&self) -> f64 {
        let start = (0.9 * self.n_max() as f64).floor() as usize + 1;
        self.p[start.min(self.p.len())..].iter().sum()
    }
}

/// Closed-form stationary populations `p_m ∝ Π_{j<m} f(j)²/(Γ(j+1))`,
/// accumulated in log space.
pub fn birth_death_populations(params: &ModelParams) -> Vec<f64> {
    let dim = params.dim();
    let mut logs = Vec::with_capacity(dim);
    logs.push(0.0);
    for m in 0..dim - 1 {
        let f = gain_amplitude(params, m);
        let prev = logs[m];
        logs.push(if f == 0.0 {
            f64::NEG_INFINITY
        } else {
            prev + 2.0 * f.abs().ln() - (params.gamma() * (m + 1) as f64).ln()
        });
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Null vector of a sector-0 block from a twisted factorization.
///
/// Top-down elimination amplifies rounding by `upper_i/lower_{i+1}` per row
/// and bottom-up elimination by `lower_i/upper_{i-1}`, so the two sweeps meet
/// at the first row where the population ratio `lower_i/upper_i` drops below
/// one. A zero coupling disconnects the chain; levels beyond it carry no
/// stationary weight.
fn null_vector(block: &SectorBlock) -> Vec<f64> {
    let n = block.dim();
    let lower: Vec<f64> = block.lower.iter().map(|z| z.re).collect();
    let upper: Vec<f64> = block.upper.iter().map(|z| z.re).collect();
    let diag: Vec<f64> = block.diag.iter().map(|z| z.re).collect();
    let twist = (0..n - 1).find(|&i| lower[i] < upper[i]).unwrap_or(n - 1);

    let mut log_p = vec![f64::NEG_INFINITY; n];
    let mut sign = vec![1.0; n];
    log_p[twist] = 0.0;

    // Rows above the twist: piv_i p_i + upper_i p_{i+1} = 0.
    let mut piv = vec![0.0; twist];
    for i in 0..twist {
        piv[i] = if i == 0 {
            diag[0]
        } else {
            diag[i] - lower[i - 1] * upper[i - 1] / piv[i - 1]
        };
    }
    for i in (0..twist).rev() {
        if piv[i] == 0.0 || log_p[i + 1] == f64::NEG_INFINITY {
            continue;
        }
        let ratio = -upper[i] / piv[i];
        log_p[i] = log_p[i + 1] + ratio.abs().ln();
        sign[i] = sign[i + 1] * ratio.signum();
    }

    // Rows below the twist: lower_{i-1} p_{i-1} + q_i p_i = 0.
    let mut q = vec![0.0; n];
    q[n - 1] = diag[n - 1];
    for i in (twist + 1..n - 1).rev() {
        q[i] = diag[i] - upper[i] * lower[i] / q[i + 1];
    }
    for i in twist + 1..n {
        if lower[i - 1] == 0.0 || q[i] == 0.0 || log_p[i - 1] == f64::NEG_INFINITY {
            break;
        }
        let ratio = -lower[i - 1] / q[i];
        log_p[i] = log_p[i - 1] + ratio.abs().ln();
        sign[i] = sign[i - 1] * ratio.signum();
    }

    let top = log_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    log_p
        .iter()
        .zip(&sign)
        .map(|(l, s)| s * (l - top).exp())
        .collect()
}

/// Exactly one null candidate among the sorted non-spurious magnitudes.
fn check_unique(mags: &[f64], tol: f64) -> Result<()> {
    let candidates = mags.iter().filter(|m| **m <= tol).count();
    if candidates == 0 {
        return Err(Error::SteadyStateTruncated {
            smallest: mags.first().copied().unwrap_or(f64::NAN),
        });
    }
    if candidates > 1 {
        return Err(Error::SteadyStateNotUnique {
            candidates,
            smallest: mags.first().copied().unwrap_or(f64::NAN),
            next: mags.get(1).copied().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Stationary state from the sector-0 null problem.
///
/// The null space is counted among non-spurious sector-0 eigenvalues; the
/// null vector itself comes from a rank-revealing elimination of the block.
pub fn solve_steady(params: &ModelParams) -> Result<DiagonalState> {
    let block = build_sector_block(params, 0)?;
    let spec = sector_spectrum_lowest(params, 0, 2)?;
    let norm = block
        .diag
        .iter()
        .map(|d| d.norm())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let tol = ZERO_TOL.max(1e3 * f64::EPSILON * norm);
    let mut mags: Vec<f64> = spec.physical().map(|l| l.norm()).collect();
    mags.sort_by(f64::total_cmp);
    if mags.is_empty() {
        return Err(Error::AllSpurious);
    }
    check_unique(&mags, tol)?;
    state_from_null_vector(null_vector(&block))
}

fn state_from_null_vector(mut v: Vec<f64>) -> Result<DiagonalState> {
    let total: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= total;
    }
    for (index, x) in v.iter_mut().enumerate() {
        if *x < 0.0 {
            if *x < -NEGATIVITY_CLIP {
                return Err(Error::NegativePopulation { index, value: *x });
            }
            *x = 0.0;
        }
    }
    DiagonalState::from_weights(v)
}

/// Normal-ordered moment `⟨a†ʳ aʳ⟩ = Σ p_m m(m−1)…(m−r+1)`.
pub fn moments(state: &DiagonalState, order: u32) -> f64 {
    state
        .p
        .iter()
        .enumerate()
        .map(|(m, p)| {
            let falling: f64 = (0..order).map(|j| m as f64 - j as f64).product();
            p * falling
        })
        .sum()
}

/// `g²(0) = ⟨a†²a²⟩/⟨n⟩²`.
pub fn g2_zero(state: &DiagonalState) -> Result<f64> {
    let n = state.mean();
    if n <= 0.0 {
        return Err(Error::ZeroPhotonNumber);
    }
    Ok(moments(state, 2) / (n * n))
}

/// Fano factor `⟨n⟩(g² − 1) + 1`, cross-checked against variance/mean.
pub fn fano(state: &DiagonalState) -> Result<f64> {
    let n = state.mean();
    let g2 = g2_zero(state)?;
    let from_g2 = n * (g2 - 1.0) + 1.0;
    let second: f64 = state
        .p
        .iter()
        .enumerate()
        .map(|(m, p)| p * (m as f64 - n).powi(2))
        .sum();
    let from_variance = second / n;
    debug_assert!(
        (from_g2 - from_variance).abs() <= 1e-10 * from_variance.abs().max(1.0),
        "Fano routes disagree: {from_g2} vs {from_variance}"
    );
    Ok(from_g2)
}

/// Photon statistics at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyRow {
    pub a_over_gamma: f64,
    pub n_scale: f64,
    pub eta: f64,
    pub n_max: usize,
    pub n_mean: f64,
    pub g2: f64,
    pub fano: f64,
    pub tail_mass: f64,
}

pub fn steady_row(params: &ModelParams) -> Result<SteadyRow> {
    let state = solve_steady(params)?;
    let n_mean = state.mean();
    let (g2, f) = if n_mean > 0.0 {
        (g2_zero(&state)?, fano(&state)?)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(SteadyRow {
        a_over_gamma: params.a() / params.gamma(),
        n_scale: params.n_scale(),
        eta: params.eta(),
        n_max: params.n_max(),
        n_mean,
        g2,
        fano: f,
        tail_mass: state.tail_mass(),
    })
}

/// Statistics over a gain grid for each scaling parameter; unless `n_max` is
/// given, each point gets its own cutoff from [`crate::spectra::auto_cutoff`].
pub fn steady_sweep(base: &ModelParams, a_grid: &[f64], n_list: &[f64], n_max: Option<usize>) -> Result<Vec<SteadyRow>> {
    if a_grid.is_empty() || n_list.is_empty() {
        return Err(invalid("grid", "sweep grids must be non-empty"));
    }
    let mut points = Vec::new();
    for &n in n_list {
        let scaled = apply_scaling(base, n, 0.0)?;
        for &a in a_grid {
            let cutoff = match n_max {
                Some(c) => c,
                None => crate::spectra::auto_cutoff(&scaled, &[a])?,
            };
            points.push(scaled.with_a(a)?.with_n_max(cutoff)?);
        }
    }
    points.par_iter().map(steady_row).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn standard(a: f64, n: f64, n_max: usize) -> ModelParams {
        ModelParams::scaled_standard(a, n, 0.0, n_max).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    /// Independent product oracle in plain arithmetic on the gain formula.
    fn product_oracle(a: f64, b: f64, gamma: f64, n_max: usize) -> Vec<f64> {
        let mut w = vec![1.0f64];
        for m in 0..n_max {
            let g = (m as f64 + 1.0).sqrt() * (a.sqrt() - b * (m as f64 + 1.0) / (2.0 * a.sqrt()));
            w.push(w[m] * g * g / (gamma * (m as f64 + 1.0)));
        }
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    }

    #[test]
    fn matches_product_oracle() {
        for (a, b, n_max) in [(0.1, 0.001, 40), (0.8, 0.01, 60), (1.5, 0.02, 150)] {
            let p = ModelParams::new(a, b, 1.0, 0.0, 1.0, n_max).unwrap();
            let s = solve_steady(&p).unwrap();
            let o = product_oracle(a, b, 1.0, n_max);
            for (x, y) in s.p.iter().zip(&o) {
                if *y > 1e-250 {
                    assert!(rel(*x, *y) < 1e-8, "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn detailed_balance_ratios() {
        let p = standard(1.25, 10.0, 120);
        let s = solve_steady(&p).unwrap();
        for m in 0..60 {
            let f = gain_amplitude(&p, m);
            let want = f * f / (m as f64 + 1.0);
            assert!(rel(s.p[m + 1] / s.p[m], want) < 1e-8);
        }
    }

    #[test]
    fn closed_form_is_log_safe() {
        let p = standard(1.25, 100.0, 1000);
        let pops = birth_death_populations(&p);
        assert!(pops.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!((pops.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn below_threshold_near_vacuum() {
        let p = ModelParams::new(0.1, 0.001, 1.0, 0.0, 1.0, 30).unwrap();
        assert!(solve_steady(&p).unwrap().p[0] > 0.85);
    }

    #[test]
    fn eta_and_omega_independence() {
        let p = standard(1.1, 10.0, 100);
        let s0 = solve_steady(&p).unwrap();
        let s1 = solve_steady(&p.with_eta(0.2).unwrap().with_omega(3.0).unwrap()).unwrap();
        for (x, y) in s0.p.iter().zip(&s1.p) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn moment_cases() {
        assert_eq!(moments(&DiagonalState::vacuum(10), 1), 0.0);
        assert_eq!(moments(&DiagonalState::vacuum(10), 3), 0.0);
        assert!(g2_zero(&DiagonalState::vacuum(5)).is_err());
        assert!(fano(&DiagonalState::vacuum(5)).is_err());

        let nu: f64 = 4.0;
        let mut w = vec![(-nu).exp()];
        for m in 1..120 {
            w.push(w[m - 1] * nu / m as f64);
        }
        let poisson = DiagonalState::from_weights(w).unwrap();
        assert!((moments(&poisson, 2) - nu * nu).abs() < 1e-10);
        assert!((g2_zero(&poisson).unwrap() - 1.0).abs() < 1e-10);
        assert!((fano(&poisson).unwrap() - 1.0).abs() < 1e-10);

        let x: f64 = 5.0 / 6.0;
        let thermal = DiagonalState::from_weights((0..600).map(|m| x.powi(m)).collect()).unwrap();
        assert!((thermal.mean() - 5.0).abs() < 1e-9);
        assert!((g2_zero(&thermal).unwrap() - 2.0).abs() < 1e-9);
        assert!((fano(&thermal).unwrap() - 6.0).abs() < 1e-8);
    }

    #[test]
    fn non_unique_null_space_is_reported() {
        assert!(check_unique(&[0.0, 0.3], 1e-10).is_ok());
        match check_unique(&[1e-13, 2e-12, 0.5], 1e-10) {
            Err(Error::SteadyStateNotUnique { candidates, smallest, next }) => {
                assert_eq!(candidates, 2);
                assert_eq!((smallest, next), (1e-13, 2e-12));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            check_unique(&[0.1, 0.2], 1e-10),
            Err(Error::SteadyStateTruncated { .. })
        ));
    }

    #[test]
    fn truncated_steady_state_is_reported() {
        // n_ss ≈ 30 but the cutoff is 12: the only null mode sits at the edge.
        let p = ModelParams::new(1.54, 0.02, 1.0, 0.0, 1.0, 12).unwrap();
        assert!(matches!(solve_steady(&p), Err(Error::SteadyStateTruncated { .. })));
    }

    #[test]
    fn cutoff_convergence() {
        let a = solve_steady(&standard(1.25, 20.0, 200)).unwrap().mean();
        let b = solve_steady(&standard(1.25, 20.0, 400)).unwrap().mean();
        assert!(rel(a, b) < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn solve_matches_oracle(a in 0.05f64..2.0, b in 1e-4f64..0.05, n_max in 20usize..120) {
            // Beyond the gain zero 2A/B the truncated generator grows a second
            // attractor at the cutoff and uniqueness is not guaranteed.
            prop_assume!((n_max + 1) as f64 <= 2.0 * a / b);
            let p = ModelParams::new(a, b, 1.0, 0.0, 1.0, n_max).unwrap();
            let o = birth_death_populations(&p);
            prop_assume!(DiagonalState { p: o.clone() }.tail_mass() < 1e-6);
            let s = solve_steady(&p).unwrap();
            prop_assert!((s.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in s.p.iter().zip(&o) {
                if *y > 1e-200 {
                    prop_assert!(rel(*x, *y) < 1e-8, "{} vs {}", x, y);
                }
            }
        }

        #[test]
        fn mean_independent_of_mu(mu in -2.0f64..2.0, a in 0.5f64..1.5) {
            let base = ModelParams::new(a, 0.1, 1.0, 0.0, 1.0, 30).unwrap();
            let p0 = apply_scaling(&base, 5.0, 0.0).unwrap().with_n_max(120).unwrap();
            let p1 = apply_scaling(&base, 5.0, mu).unwrap().with_n_max(120).unwrap();
            let n0 = solve_steady(&p0).unwrap().mean();
            let n1 = solve_steady(&p1).unwrap().mean();
            prop_assert!((n0 - n1).abs() <= 1e-12 * n0.max(1.0));
        }
    }
}
