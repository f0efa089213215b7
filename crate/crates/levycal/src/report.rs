//! Report JSON and the plot-ready CSV files.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use levycal_core::{FitReport, ForwardDiagnostics, IterationRecord, Termination, TorusGrid};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::preprocess::Preprocessed;

/// Equal-width histogram over one torus period, normalized to a density.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub heights: Vec<f64>,
}

impl Histogram {
    /// `values` must already lie in `[Ωa, Ωb)`.
    pub fn from_values(values: &[f64], grid: &TorusGrid, bins: usize) -> Result<Self> {
        if bins == 0 || values.is_empty() {
            return Err(CliError::config("histogram needs bins and samples"));
        }
        let width = grid.period() / bins as f64;
        let mut counts = vec![0u64; bins];
        for &v in values {
            let b = ((v - grid.omega_a()) / width).floor();
            counts[(b.max(0.0) as usize).min(bins - 1)] += 1;
        }
        let norm = 1.0 / (values.len() as f64 * width);
        Ok(Self {
            lo: grid.omega_a(),
            width,
            heights: counts.iter().map(|&c| c as f64 * norm).collect(),
        })
    }

    pub fn bins(&self) -> usize {
        self.heights.len()
    }

    pub fn edges(&self, b: usize) -> (f64, f64) {
        (self.lo + b as f64 * self.width, self.lo + (b + 1) as f64 * self.width)
    }

    pub fn mass(&self) -> f64 {
        self.width * self.heights.iter().sum::<f64>()
    }

    /// Height of the bin holding the torus point `x`.
    pub fn height_at(&self, x: f64) -> f64 {
        let b = ((x - self.lo) / self.width).floor().max(0.0) as usize;
        self.heights[b.min(self.bins() - 1)]
    }

    /// Averages a grid density over each bin. The density is taken constant
    /// on the cells `[x_i − h/2, x_i + h/2)`, so mass is preserved exactly.
    pub fn bin_average(&self, density: &[f64], grid: &TorusGrid) -> Vec<f64> {
        let h = grid.h();
        let k = grid.period();
        let mut acc = vec![0.0; self.bins()];
        let mut add = |f: f64, s: f64, e: f64| {
            let first = (s / self.width).floor().max(0.0) as usize;
            for (b, slot) in acc.iter_mut().enumerate().skip(first) {
                let (blo, bhi) = (b as f64 * self.width, (b + 1) as f64 * self.width);
                if blo >= e {
                    break;
                }
                let overlap = e.min(bhi) - s.max(blo);
                if overlap > 0.0 {
                    *slot += f * overlap;
                }
            }
        };
        for (i, &f) in density.iter().enumerate() {
            let s = i as f64 * h - 0.5 * h;
            let e = s + h;
            if s < 0.0 {
                add(f, s + k, k);
                add(f, 0.0, e);
            } else if e > k {
                add(f, s, k);
                add(f, 0.0, e - k);
            } else {
                add(f, s, e);
            }
        }
        acc.iter().map(|a| a / self.width).collect()
    }

    /// Discrete L¹ distance `Σ_b width·|avg_b − height_b|` to a grid density.
    pub fn l1_distance(&self, density: &[f64], grid: &TorusGrid) -> f64 {
        self.bin_average(density, grid)
            .iter()
            .zip(&self.heights)
            .map(|(a, h)| self.width * (a - h).abs())
            .sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub dt_used: f64,
    pub substep_dt: f64,
    pub dt_euler_pos: f64,
    pub dt_euler_decay: f64,
    pub dt_bdf2: f64,
    pub xi: f64,
    pub jump_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub mass_drift: f64,
    pub min_density: f64,
    pub max_norm_growth: f64,
    pub first_negative_step: Option<usize>,
    pub xi_condition_min: f64,
    pub xi_condition_holds: bool,
    pub forced: bool,
    pub bounds: BoundsReport,
}

impl From<&ForwardDiagnostics> for DiagnosticsReport {
    fn from(d: &ForwardDiagnostics) -> Self {
        Self {
            mass_drift: d.mass_drift,
            min_density: d.min_density,
            max_norm_growth: d.max_norm_growth,
            first_negative_step: d.first_negative_step,
            xi_condition_min: d.xi_condition_min,
            xi_condition_holds: d.xi_condition_holds,
            forced: d.forced,
            bounds: BoundsReport {
                dt_used: d.dt_used,
                substep_dt: d.substep_dt,
                dt_euler_pos: d.bounds.dt_euler_pos,
                dt_euler_decay: d.bounds.dt_euler_decay,
                dt_bdf2: d.bounds.dt_bdf2,
                xi: d.bounds.xi,
                jump_rate: d.bounds.jump_rate,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub j_eps: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub beta: f64,
    pub shrinks: usize,
    pub restarted: bool,
}

impl From<&IterationRecord> for TraceRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            iter: r.iter,
            j_eps: r.j_value,
            grad_norm: r.grad_norm,
            step: r.step,
            beta: r.beta,
            shrinks: r.shrinks,
            restarted: r.restarted,
        }
    }
}

/// One converged (or stopped) calibration.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub n_theta: usize,
    pub centers: Vec<f64>,
    pub delta: f64,
    pub alpha_star: Vec<f64>,
    pub j_eps: f64,
    pub aic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: &'static str,
    pub grad_norm: f64,
    pub floored_count: usize,
    pub diagnostics: DiagnosticsReport,
    pub trace: Vec<TraceRow>,
}

impl From<&FitReport> for FitSummary {
    fn from(f: &FitReport) -> Self {
        Self {
            n_theta: f.n_theta,
            centers: f.centers.clone(),
            delta: f.delta,
            alpha_star: f.alpha_star.clone(),
            j_eps: f.j_star,
            aic: f.aic,
            iterations: f.iterations,
            converged: f.converged,
            termination: match f.termination {
                Termination::GradientTolerance => "gradient_tolerance",
                Termination::MaxIterations => "max_iterations",
                Termination::LineSearchFailed => "line_search_failed",
            },
            grad_norm: f.grad_norm,
            floored_count: f.floored_count,
            diagnostics: (&f.diagnostics).into(),
            trace: f.trace.iter().map(Into::into).collect(),
        }
    }
}

/// Sweep entry: either a fit or the reason it failed.
#[derive(Debug, Clone, Serialize)]
pub struct FitEntry {
    pub n_theta: usize,
    pub error: Option<String>,
    pub fit: Option<FitSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub source: String,
    pub count: usize,
    pub preprocessing: Option<Preprocessed>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineReport {
    pub sigma2: f64,
    pub j_eps: f64,
    pub n_time: usize,
    pub histogram_l1: f64,
}

/// Headline fields of the selected fit, repeated at top level.
#[derive(Debug, Clone, Serialize)]
pub struct Selected {
    pub n_theta: usize,
    pub alpha_star: Vec<f64>,
    pub j_eps: f64,
    pub aic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: DiagnosticsReport,
    pub histogram_l1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub seed: u64,
    pub data: DataSummary,
    /// Drift and `σ²` the fits used (after preprocessing, if any).
    pub drift_b: f64,
    pub sigma2: f64,
    /// Time steps actually used.
    pub n_time: usize,
    pub selected_n_theta: Option<usize>,
    #[serde(flatten)]
    pub selected: Option<Selected>,
    pub baseline: Option<BaselineReport>,
    pub fits: Vec<FitEntry>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// `x,fitted,histogram` for every grid point.
pub fn pdf_csv(grid: &TorusGrid, fitted: Option<&[f64]>, hist: &Histogram) -> String {
    let mut out = String::from("x,fitted,histogram\n");
    for i in 0..grid.len() {
        let x = grid.point(i);
        let f = fitted.map(|f| f[i].to_string()).unwrap_or_default();
        let _ = writeln!(out, "{x},{f},{}", hist.height_at(x));
    }
    out
}

/// `bin_lo,bin_hi,empirical,fitted` per histogram bin; `fitted` is the bin
/// average of the fitted density.
pub fn histogram_csv(hist: &Histogram, fitted_avg: Option<&[f64]>) -> String {
    let mut out = String::from("bin_lo,bin_hi,empirical,fitted\n");
    for b in 0..hist.bins() {
        let (lo, hi) = hist.edges(b);
        let f = fitted_avg.map(|f| f[b].to_string()).unwrap_or_default();
        let _ = writeln!(out, "{lo},{hi},{},{f}", hist.heights[b]);
    }
    out
}

pub fn aic_csv(fits: &[FitEntry]) -> String {
    let mut out = String::from("n_theta,aic,j_eps,iterations,converged,error\n");
    for e in fits {
        match (&e.fit, &e.error) {
            (Some(f), _) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},",
                    e.n_theta, f.aic, f.j_eps, f.iterations, f.converged
                );
            }
            (None, err) => {
                let msg = err.as_deref().unwrap_or("").replace([',', '\n'], ";");
                let _ = writeln!(out, "{},,,,,{msg}", e.n_theta);
            }
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
