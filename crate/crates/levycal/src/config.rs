//! Run configuration: one flat TOML table plus `key=value` overrides.
//!
//! Every key has a default, so an empty file is a complete configuration
//! except for the data source (`samples` or `simulate`).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use levycal_core::{
    AicPenalty, BasisLayout, InitialLaw, JumpLaw, LineSearch, ModelCoefficients, OptimizerConfig, SimulationSpec,
    SolverOptions, TimeGrid, TorusGrid, DEFAULT_CHUNK_SIZE, DEFAULT_EPS,
};

use crate::error::{CliError, Result};
use crate::preprocess::{OutOfBand, PreprocessSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Hats strictly inside `(layout_lo, layout_hi)`.
    Interval,
    /// Hats tiling the whole torus.
    Covering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    Log,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimKind {
    None,
    CompoundPoisson,
    Bigamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimInitial {
    VonMises,
    Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // torus and time
    pub omega_a: f64,
    pub omega_b: f64,
    pub n_space: usize,
    pub t_final: f64,
    /// Number of time steps; 0 derives it from the step bound at `α = 0`.
    pub n_time: usize,
    // model
    pub drift_b: f64,
    pub sigma2: f64,
    // basis sweep
    pub n_theta: Vec<usize>,
    pub layout: Layout,
    pub layout_lo: f64,
    pub layout_hi: f64,
    // optimizer
    pub alpha_init: f64,
    pub delta_armijo: f64,
    pub xi_init: f64,
    pub shrink: f64,
    pub max_shrinks: usize,
    pub tol: f64,
    pub k_max: usize,
    /// 0 selects the default period `10·N_Θ`.
    pub restart_every: usize,
    pub aic_penalty: Penalty,
    // objective and initial density
    pub eps: f64,
    pub init_mu: f64,
    pub init_kappa: f64,
    // solver
    pub bootstrap_substeps: usize,
    pub xi: f64,
    pub force: bool,
    // data source
    pub samples: Option<PathBuf>,
    pub simulate: SimKind,
    pub sim_rates: Vec<f64>,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    pub sim_samples: usize,
    pub sim_initial: SimInitial,
    /// Starting point when `sim_initial = "point"`.
    pub sim_start: f64,
    pub chunk_size: usize,
    pub seed: u64,
    // financial preprocessing of ingested samples
    pub preprocess: bool,
    pub band_lo: f64,
    pub band_hi: f64,
    pub diffusion_fraction: f64,
    pub out_of_band: OutOfBand,
    // output
    pub histogram_bins: usize,
    pub output_dir: Option<PathBuf>,
    /// Also fit the best pure-diffusion model for comparison.
    pub baseline: bool,
    pub baseline_sigma2_lo: f64,
    pub baseline_sigma2_hi: f64,
    pub baseline_iters: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            omega_a: -PI,
            omega_b: PI,
            n_space: 420,
            t_final: 1.0,
            n_time: 250,
            drift_b: 0.0,
            sigma2: 0.02,
            n_theta: vec![3, 4, 5, 6, 7],
            layout: Layout::Interval,
            layout_lo: -1.0,
            layout_hi: 1.0,
            alpha_init: 0.1,
            delta_armijo: 0.1,
            xi_init: 0.5,
            shrink: 0.3,
            max_shrinks: 30,
            tol: 1e-5,
            k_max: 500,
            restart_every: 0,
            aic_penalty: Penalty::Log,
            eps: DEFAULT_EPS,
            init_mu: 0.0,
            init_kappa: 400.0,
            bootstrap_substeps: 10,
            xi: 2.0,
            force: false,
            samples: None,
            simulate: SimKind::None,
            sim_rates: vec![3.0, 2.0, 1.0, 0.5, 0.25],
            gamma_shape: 0.5,
            gamma_rate: 1.0,
            sim_samples: 100_000,
            sim_initial: SimInitial::VonMises,
            sim_start: 0.0,
            chunk_size: DEFAULT_CHUNK_SIZE,
            seed: 1,
            preprocess: false,
            band_lo: -0.03,
            band_hi: 0.03,
            diffusion_fraction: 0.25,
            out_of_band: OutOfBand::Wrap,
            histogram_bins: 40,
            output_dir: None,
            baseline: false,
            baseline_sigma2_lo: 0.005,
            baseline_sigma2_hi: 5.0,
            baseline_iters: 40,
        }
    }
}

impl RunConfig {
    /// Parses TOML text and applies `key=value` overrides on top.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
        for item in overrides {
            let (key, value) = parse_override(item)?;
            table.insert(key, value);
        }
        Self::from_table(table)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    /// Rebuilds a configuration from the JSON echo stored in a report.
    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|e| CliError::config(e.to_string()))
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
        Ok(cfg)
    }

    /// Configuration as echoed into reports: everything that determines the
    /// numbers, without the output location.
    pub fn echo(&self) -> Self {
        Self {
            output_dir: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_none() && self.simulate == SimKind::None {
            return Err(CliError::config(
                "no data source: set `samples` to a file or `simulate` to a process",
            ));
        }
        if self.samples.is_some() && self.simulate != SimKind::None {
            return Err(CliError::config("set only one of `samples` and `simulate`"));
        }
        if self.n_theta.is_empty() || self.n_theta.contains(&0) {
            return Err(CliError::config("`n_theta` must list positive basis sizes"));
        }
        if self.histogram_bins == 0 {
            return Err(CliError::config("`histogram_bins` must be positive"));
        }
        if self.preprocess && self.samples.is_none() {
            return Err(CliError::config("`preprocess` applies to ingested samples only"));
        }
        if self.baseline && !(self.baseline_sigma2_lo > 0.0 && self.baseline_sigma2_hi > self.baseline_sigma2_lo) {
            return Err(CliError::config("need 0 < baseline_sigma2_lo < baseline_sigma2_hi"));
        }
        self.grid()?;
        if self.n_time != 0 {
            self.time()?;
        }
        self.coefficients(self.drift_b, self.sigma2)?;
        self.optimizer().line_search.validate()?;
        self.preprocess_spec().validate()?;
        if let Some(spec) = self.simulation_spec() {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        Ok(TorusGrid::new(self.omega_a, self.omega_b, self.n_space)?)
    }

    pub fn time(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::new(self.t_final, self.n_time)?)
    }

    pub fn coefficients(&self, drift_b: f64, sigma2: f64) -> Result<ModelCoefficients> {
        Ok(ModelCoefficients::new(drift_b, sigma2)?)
    }

    pub fn basis_layout(&self) -> BasisLayout {
        match self.layout {
            Layout::Interval => BasisLayout::Interval {
                lo: self.layout_lo,
                hi: self.layout_hi,
            },
            Layout::Covering => BasisLayout::Covering,
        }
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            bootstrap_substeps: self.bootstrap_substeps,
            xi: self.xi,
            force: self.force,
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            alpha_init: self.alpha_init,
            line_search: LineSearch {
                xi_init: self.xi_init,
                shrink: self.shrink,
                delta: self.delta_armijo,
                max_shrinks: self.max_shrinks,
            },
            tol: self.tol,
            k_max: self.k_max,
            restart_every: (self.restart_every > 0).then_some(self.restart_every),
            aic_penalty: match self.aic_penalty {
                Penalty::Log => AicPenalty::LogCount,
                Penalty::Count => AicPenalty::Count,
            },
        }
    }

    pub fn simulation_spec(&self) -> Option<SimulationSpec> {
        let jumps = match self.simulate {
            SimKind::None => return None,
            SimKind::CompoundPoisson => JumpLaw::CompoundPoisson {
                rates: self.sim_rates.clone(),
            },
            SimKind::Bigamma => JumpLaw::BiGamma {
                shape: self.gamma_shape,
                rate: self.gamma_rate,
            },
        };
        Some(SimulationSpec {
            jumps,
            drift_b: self.drift_b,
            sigma2: self.sigma2,
            t_final: self.t_final,
            sample_count: self.sim_samples,
            seed: self.seed,
            initial: match self.sim_initial {
                SimInitial::VonMises => InitialLaw::VonMises {
                    mu: self.init_mu,
                    kappa: self.init_kappa,
                },
                SimInitial::Point => InitialLaw::Point(self.sim_start),
            },
            chunk_size: self.chunk_size,
        })
    }

    pub fn preprocess_spec(&self) -> PreprocessSpec {
        PreprocessSpec {
            band_lo: self.band_lo,
            band_hi: self.band_hi,
            diffusion_fraction: self.diffusion_fraction,
            out_of_band: self.out_of_band,
        }
    }
}

/// `key=value`, the value read as a TOML literal; bare words become strings.
fn parse_override(item: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::config(format!("override `{item}` has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = RunConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn overrides_take_precedence() {
        let text = "n_space = 64\nsimulate = \"bigamma\"\n";
        let cfg = RunConfig::from_toml_str(
            text,
            &[
                "n_space=128".into(),
                "n_theta=[5]".into(),
                "samples=data/returns.csv".into(),
                "simulate=none".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.n_space, 128);
        assert_eq!(cfg.n_theta, vec![5]);
        assert_eq!(cfg.samples.as_deref(), Some(Path::new("data/returns.csv")));
        assert_eq!(cfg.simulate, SimKind::None);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::from_toml_str("n_spaces = 3", &[]).is_err());
        assert!(RunConfig::from_toml_str("layout = \"spiral\"", &[]).is_err());
        assert!(RunConfig::from_toml_str("", &["novalue".into()]).is_err());
        let cfg = RunConfig::from_toml_str("simulate = \"bigamma\"\ngamma_rate = -1.0", &[]).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_echo_round_trips() {
        let cfg = RunConfig {
            simulate: SimKind::CompoundPoisson,
            output_dir: Some("out".into()),
            ..RunConfig::default()
        };
        let json = serde_json::to_value(cfg.echo()).unwrap();
        let back = RunConfig::from_json_value(json).unwrap();
        assert_eq!(back, cfg.echo());
        assert_eq!(back.output_dir, None);
    }
}
