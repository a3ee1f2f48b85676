//! Physical parameters of the laser model, the thermodynamic rescaling and the
//! semiclassical predictions used as reference curves.
//!
//! All rates are expressed in units of the cavity loss rate Γ.

use crate::error::{invalid, Result};

/// Default ratio used to turn the "much smaller than" conditions of the
/// weak-gain-saturation regime into a boolean.
pub const DEFAULT_WGS_THRESHOLD: f64 = 0.1;

/// Parameters of one run: rates, thermodynamic scaling and Fock cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    a: f64,
    b: f64,
    gamma: f64,
    eta: f64,
    omega: f64,
    n_scale: f64,
    mu: f64,
    n_max: usize,
}

impl ModelParams {
    /// Unscaled parameters (`N = 1`, `μ = 0`).
    pub fn new(a: f64, b: f64, gamma: f64, eta: f64, omega: f64, n_max: usize) -> Result<Self> {
        let p = Self {
            a,
            b,
            gamma,
            eta,
            omega,
            n_scale: 1.0,
            mu: 0.0,
            n_max,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters of the standard model with `B = 0.1 Γ / N` and `μ = 0`,
    /// the convention used by most sweeps.
    pub fn scaled_standard(a_over_gamma: f64, n_scale: f64, eta: f64, n_max: usize) -> Result<Self> {
        let base = Self::new(a_over_gamma, 0.1, 1.0, eta, 1.0, n_max)?;
        apply_scaling(&base, n_scale, 0.0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(invalid("A", format!("gain must be positive, got {}", self.a)));
        }
        // B = 0 is the saturation-free limit and is kept reachable.
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(invalid("B", format!("saturation must be >= 0, got {}", self.b)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(invalid("gamma", format!("loss rate must be positive, got {}", self.gamma)));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(invalid("eta", format!("dephasing must be >= 0, got {}", self.eta)));
        }
        if !self.omega.is_finite() {
            return Err(invalid("omega", "frequency must be finite"));
        }
        if !(self.n_scale.is_finite() && self.n_scale > 0.0) {
            return Err(invalid("N", format!("scaling must be positive, got {}", self.n_scale)));
        }
        if !self.mu.is_finite() {
            return Err(invalid("mu", "scaling exponent must be finite"));
        }
        if self.n_max < 2 {
            return Err(invalid("n_max", format!("cutoff must be >= 2, got {}", self.n_max)));
        }
        Ok(())
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn n_scale(&self) -> f64 {
        self.n_scale
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn n_max(&self) -> usize {
        self.n_max
    }
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    /// Overall dephasing rate β = (3B + 4η)/4.
    pub fn beta(&self) -> f64 {
        (3.0 * self.b + 4.0 * self.eta) / 4.0
    }

    pub fn with_a(self, a: f64) -> Result<Self> {
        let p = Self { a, ..self };
        p.validate()?;
        Ok(p)
    }
    pub fn with_b(self, b: f64) -> Result<Self> {
        let p = Self { b, ..self };
        p.validate()?;
        Ok(p)
    }
    pub fn with_eta(self, eta: f64) -> Result<Self> {
        let p = Self { eta, ..self };
        p.validate()?;
        Ok(p)
    }
    pub fn with_omega(self, omega: f64) -> Result<Self> {
        let p = Self { omega, ..self };
        p.validate()?;
        Ok(p)
    }
    pub fn with_n_max(self, n_max: usize) -> Result<Self> {
        let p = Self { n_max, ..self };
        p.validate()?;
        Ok(p)
    }

    /// Saturation scale 2A/B above which the gain amplitude changes sign
    /// (infinite for B = 0).
    pub fn saturation_scale(&self) -> f64 {
        if self.b == 0.0 {
            f64::INFINITY
        } else {
            2.0 * self.a / self.b
        }
    }
}

/// Thermodynamic rescaling {A, B, Γ} → {A N^μ, B / N^(1−μ), Γ N^μ}.
///
/// η, ω and the cutoff are untouched. The returned parameters accumulate the
/// scaling factor and record the last exponent used.
pub fn apply_scaling(params: &ModelParams, n_scale: f64, mu: f64) -> Result<ModelParams> {
    if !(n_scale.is_finite() && n_scale > 0.0) {
        return Err(invalid("N", format!("scaling must be positive, got {n_scale}")));
    }
    if !mu.is_finite() {
        return Err(invalid("mu", "scaling exponent must be finite"));
    }
    let up = n_scale.powf(mu);
    let p = ModelParams {
        a: params.a * up,
        b: params.b / n_scale.powf(1.0 - mu),
        gamma: params.gamma * up,
        n_scale: params.n_scale * n_scale,
        mu,
        ..*params
    };
    p.validate()?;
    Ok(p)
}

/// Semiclassical steady-state photon number max(0, (A − Γ − η)/B).
///
/// Infinite above threshold when B = 0.
pub fn semiclassical_nss(params: &ModelParams) -> f64 {
    let excess = params.a - params.gamma - params.eta;
    if excess <= 0.0 {
        0.0
    } else if params.b == 0.0 {
        f64::INFINITY
    } else {
        excess / params.b
    }
}

/// Per-condition ratios of the weak-gain-saturation regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WgsReport {
    pub satisfied: bool,
    /// `[B/Γ, |A−Γ|/(2A), B(n_ref+1)/(2A)]`
    pub ratios: [f64; 3],
    pub threshold: f64,
}

/// Checks B ≪ Γ, (A − Γ) ≪ 2A and B⟨a a†⟩ ≪ 2A with ⟨a a†⟩ = n_ref + 1,
/// where "≪" means `ratio < threshold`.
pub fn wgs_check(params: &ModelParams, n_ref: f64, threshold: f64) -> WgsReport {
    let two_a = 2.0 * params.a;
    let ratios = [
        params.b / params.gamma,
        (params.a - params.gamma).abs() / two_a,
        params.b * (n_ref + 1.0) / two_a,
    ];
    WgsReport {
        satisfied: ratios.iter().all(|r| *r < threshold),
        ratios,
        threshold,
    }
}
