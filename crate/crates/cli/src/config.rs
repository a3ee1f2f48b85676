//! Run configuration: a flat TOML table, one file per run.
//!
//! Rates are in units of Γ (Γ = 1 is implied and not configurable). `B` is
//! the bare saturation coefficient; every run divides it by `N` (μ = 0).
//! Keys that the chosen scenario does not read are rejected, as are unknown
//! keys.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SpectrumSweep,
    CollapseSweep,
    SteadySweep,
    Hysteresis,
    Trajectory,
    Wigner,
    Pfunction,
    OracleCheck,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::SpectrumSweep => "spectrum-sweep",
            Scenario::CollapseSweep => "collapse-sweep",
            Scenario::SteadySweep => "steady-sweep",
            Scenario::Hysteresis => "hysteresis",
            Scenario::Trajectory => "trajectory",
            Scenario::Wigner => "wigner",
            Scenario::Pfunction => "pfunction",
            Scenario::OracleCheck => "oracle-check",
        }
    }

    /// Keys read by the scenario, in addition to `scenario`, `output_dir`
    /// and the model keys `B`, `eta`, `omega`.
    fn keys(self) -> &'static [&'static str] {
        match self {
            Scenario::SpectrumSweep => &["A_grid", "N_list", "sectors", "levels", "n_max", "full_spectrum"],
            Scenario::CollapseSweep => &["A_grid", "N_list", "sectors", "levels", "n_max"],
            Scenario::SteadySweep => &["A_grid", "N_list", "n_max"],
            Scenario::Hysteresis => &["N_list", "n_max", "t_f", "samples"],
            Scenario::Trajectory => &[
                "A",
                "N",
                "n_max",
                "unraveling",
                "n_traj",
                "seed",
                "t_f",
                "dt",
                "record_stride",
                "beta_ref",
                "alpha0",
                "ramp",
                "reference",
            ],
            Scenario::Wigner => &["A", "N", "n_max", "k", "j", "extent", "points"],
            Scenario::Pfunction => &["A", "N", "r_max", "points"],
            Scenario::OracleCheck => &["A", "N", "n_max"],
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnravelingKind {
    Counting,
    Homodyne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ramp {
    None,
    Up,
    Down,
}

/// Every configurable key. After [`Config::resolve`] all keys the scenario
/// reads are `Some`, and the struct doubles as the manifest's resolved
/// config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,

    #[serde(rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,

    #[serde(rename = "A_grid", skip_serializing_if = "Option::is_none")]
    pub a_grid: Option<Vec<f64>>,
    #[serde(rename = "N_list", skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sectors: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_spectrum: Option<bool>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub unraveling: Option<UnravelingKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_ref: Option<Vec<f64>>,
    /// Initial coherent amplitude `[re, im]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ramp: Option<Ramp>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<bool>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
}

const COMMON_KEYS: [&str; 5] = ["scenario", "output_dir", "B", "eta", "omega"];

/// Command-line overrides, applied after the file is read.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<String>,
    pub seed: Option<u64>,
    pub n_max: Option<usize>,
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

impl Config {
    /// Parses a config file; unknown keys fail with their location.
    pub fn from_toml(text: &str, scenario: Scenario) -> Result<Self, Failure> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Failure::Config(e.to_string()))?;
        let allowed: BTreeSet<&str> = COMMON_KEYS.iter().chain(scenario.keys()).copied().collect();
        let config: Config = toml::from_str(text).map_err(|e| Failure::Config(e.to_string()))?;
        for key in table.keys() {
            if !allowed.contains(key.as_str()) {
                return Err(Failure::Config(format!("key `{key}` is not used by scenario {scenario}")));
            }
        }
        if let Some(s) = config.scenario {
            if s != scenario {
                return Err(Failure::Config(format!(
                    "config declares scenario {s} but {scenario} was requested"
                )));
            }
        }
        Ok(config)
    }

    pub fn load(path: &Path, scenario: Scenario) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, scenario).map_err(|f| match f {
            Failure::Config(m) => Failure::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Fills defaults for `scenario` and applies overrides; the result is
    /// validated.
    pub fn resolve(mut self, scenario: Scenario, o: &Overrides) -> Result<Self, Failure> {
        if o.n_max.is_some() && !scenario.keys().contains(&"n_max") {
            return Err(Failure::Validation(format!("--n-max is not used by scenario {scenario}")));
        }
        if o.seed.is_some() && !scenario.keys().contains(&"seed") {
            return Err(Failure::Validation(format!("--seed is not used by scenario {scenario}")));
        }
        self.scenario = Some(scenario);
        if o.output_dir.is_some() {
            self.output_dir = o.output_dir.clone();
        }
        self.output_dir.get_or_insert_with(|| format!("out/{scenario}"));
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.n_max.is_some() {
            self.n_max = o.n_max;
        }
        self.b.get_or_insert(0.1);
        self.eta.get_or_insert(0.0);
        self.omega.get_or_insert(1.0);

        match scenario {
            Scenario::SpectrumSweep => {
                self.a_grid.get_or_insert_with(|| grid(0.5, 1.5, 0.05));
                self.n_list.get_or_insert_with(|| vec![100.0]);
                self.sectors.get_or_insert_with(|| vec![0, 1, 2, 3]);
                self.levels.get_or_insert_with(|| vec![0, 1]);
                self.full_spectrum.get_or_insert(false);
            }
            Scenario::CollapseSweep => {
                self.a_grid.get_or_insert_with(|| grid(0.85, 1.2, 0.0125));
                self.n_list.get_or_insert_with(|| vec![25.0, 50.0, 100.0]);
                self.sectors.get_or_insert_with(|| vec![0, 1, 2]);
                self.levels.get_or_insert_with(|| vec![1, 2]);
            }
            Scenario::SteadySweep => {
                self.a_grid.get_or_insert_with(|| grid(0.5, 1.5, 0.025));
                self.n_list.get_or_insert_with(|| vec![1.0, 10.0, 100.0]);
            }
            Scenario::Hysteresis => {
                self.n_list.get_or_insert_with(|| vec![1.0, 10.0, 100.0]);
                self.t_f.get_or_insert(200.0);
                self.samples.get_or_insert(401);
            }
            Scenario::Trajectory => {
                self.a.get_or_insert(1.5);
                self.n_scale.get_or_insert(1.0);
                self.n_max.get_or_insert(20);
                self.unraveling.get_or_insert(UnravelingKind::Counting);
                self.n_traj.get_or_insert(100);
                self.seed.get_or_insert(0);
                self.t_f.get_or_insert(10.0);
                self.record_stride.get_or_insert(1);
                self.beta_ref.get_or_insert_with(|| match self.unraveling {
                    Some(UnravelingKind::Homodyne) => vec![sllm::trajectories::DEFAULT_BETA_REF; 3],
                    _ => vec![0.0; 3],
                });
                self.alpha0.get_or_insert_with(|| vec![0.0, 0.0]);
                self.ramp.get_or_insert(Ramp::None);
                self.reference.get_or_insert(false);
            }
            Scenario::Wigner => {
                self.a.get_or_insert(1.25);
                self.n_scale.get_or_insert(1.0);
                self.k.get_or_insert(0);
                self.j.get_or_insert(0);
                self.points.get_or_insert(101);
            }
            Scenario::Pfunction => {
                self.a.get_or_insert(1.25);
                self.n_scale.get_or_insert(100.0);
                self.points.get_or_insert(401);
            }
            Scenario::OracleCheck => {
                self.a.get_or_insert(1.25);
                self.n_scale.get_or_insert(100.0);
                self.n_max.get_or_insert(8);
            }
        }
        self.validate(scenario)?;
        Ok(self)
    }

    fn validate(&self, scenario: Scenario) -> Result<(), Failure> {
        let bad = |m: String| Err(Failure::Validation(m));
        let positive = |name: &str, v: Option<f64>| -> Result<(), Failure> {
            match v {
                Some(x) if !(x.is_finite() && x > 0.0) => bad(format!("`{name}` must be positive, got {x}")),
                _ => Ok(()),
            }
        };
        let nonempty_positive = |name: &str, v: &Option<Vec<f64>>| -> Result<(), Failure> {
            match v {
                Some(xs) if xs.is_empty() => bad(format!("`{name}` must not be empty")),
                Some(xs) => match xs.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                    Some(x) => bad(format!("`{name}` entries must be positive, got {x}")),
                    None => Ok(()),
                },
                None => Ok(()),
            }
        };
        nonempty_positive("A_grid", &self.a_grid)?;
        nonempty_positive("N_list", &self.n_list)?;
        positive("A", self.a)?;
        positive("N", self.n_scale)?;
        positive("t_f", self.t_f)?;
        positive("dt", self.dt)?;
        positive("extent", self.extent)?;
        positive("r_max", self.r_max)?;
        if matches!(self.sectors, Some(ref s) if s.is_empty()) {
            return bad("`sectors` must not be empty".into());
        }
        if matches!(self.levels, Some(ref l) if l.is_empty()) {
            return bad("`levels` must not be empty".into());
        }
        if let Some(b) = self.b {
            if !(b.is_finite() && b >= 0.0) {
                return bad(format!("`B` must be >= 0, got {b}"));
            }
        }
        if let Some(e) = self.eta {
            if !(e.is_finite() && e >= 0.0) {
                return bad(format!("`eta` must be >= 0, got {e}"));
            }
        }
        if matches!(self.n_max, Some(n) if n < 2) {
            return bad("`n_max` must be at least 2".into());
        }
        if matches!(self.samples, Some(n) if n < 2) {
            return bad("`samples` must be at least 2".into());
        }
        if matches!(self.points, Some(n) if n < 2) {
            return bad("`points` must be at least 2".into());
        }
        if matches!(self.n_traj, Some(0)) {
            return bad("`n_traj` must be at least 1".into());
        }
        if matches!(self.record_stride, Some(0)) {
            return bad("`record_stride` must be at least 1".into());
        }
        if matches!(self.beta_ref, Some(ref b) if b.len() != 3 || b.iter().any(|x| !x.is_finite())) {
            return bad("`beta_ref` must hold three finite amplitudes (gain, dephasing, loss)".into());
        }
        if matches!(self.alpha0, Some(ref a) if a.len() != 2 || a.iter().any(|x| !x.is_finite())) {
            return bad("`alpha0` must be [re, im]".into());
        }
        if scenario == Scenario::Trajectory
            && self.reference == Some(true)
            && self.n_max.unwrap_or(0) > sllm::dynamics::FULL_EVOLUTION_LIMIT
        {
            return bad(format!(
                "`reference = true` needs n_max <= {}",
                sllm::dynamics::FULL_EVOLUTION_LIMIT
            ));
        }
        Ok(())
    }
}
