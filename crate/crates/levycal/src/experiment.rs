//! End-to-end runs: data, AIC sweep, optional pure-diffusion baseline, report.

use std::path::{Path, PathBuf};

use log::{info, warn};

use levycal_core::{
    aic_sweep, simulate, stability_bounds, von_mises_density, CalibrationProblem, CcOperator, Error as CoreError,
    JumpKernel, ModelCoefficients, SampleSet, SweepResult, TimeGrid, TorusGrid,
};

use crate::config::{RunConfig, SimKind};
use crate::error::{CliError, Result};
use crate::preprocess::preprocess_financial;
use crate::report::{
    aic_csv, histogram_csv, pdf_csv, write_text, BaselineReport, DataSummary, FitEntry, FitSummary, Histogram,
    RunReport, Selected,
};
use crate::samples::ingest_samples;

/// Everything a run produced, before anything is written.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: RunReport,
    pub grid: TorusGrid,
    pub histogram: Histogram,
    /// Terminal density of the selected fit.
    pub terminal: Option<Vec<f64>>,
    /// First fit error, kept when no entry of the sweep succeeded.
    pub failure: Option<CoreError>,
}

/// Model data after loading: torus samples plus the drift and `σ²` to use.
struct Data {
    samples: SampleSet,
    drift_b: f64,
    sigma2: f64,
    summary: DataSummary,
}

fn load_data(cfg: &RunConfig, grid: &TorusGrid) -> Result<Data> {
    if let Some(path) = &cfg.samples {
        let raw = ingest_samples(path)?;
        info!("read {} samples from {}", raw.len(), path.display());
        if cfg.preprocess {
            let pre = preprocess_financial(&raw, &cfg.preprocess_spec(), grid)?;
            info!(
                "preprocessed: b = {}, sigma2 = {}, {} outside the band",
                pre.moments.b_torus,
                pre.moments.sigma2_torus,
                pre.below_band + pre.above_band
            );
            return Ok(Data {
                samples: SampleSet::from_values(&pre.values, grid)?,
                drift_b: pre.moments.b_torus,
                sigma2: pre.moments.sigma2_torus,
                summary: DataSummary {
                    source: path.display().to_string(),
                    count: pre.values.len(),
                    preprocessing: Some(pre),
                },
            });
        }
        return Ok(Data {
            samples: SampleSet::from_values(&raw, grid)?,
            drift_b: cfg.drift_b,
            sigma2: cfg.sigma2,
            summary: DataSummary {
                source: path.display().to_string(),
                count: raw.len(),
                preprocessing: None,
            },
        });
    }
    let values = simulate_values(cfg, grid)?;
    let source = match cfg.simulate {
        SimKind::CompoundPoisson => "compound_poisson",
        SimKind::Bigamma => "bigamma",
        SimKind::None => unreachable!("validated"),
    };
    info!("simulated {} {source} samples (seed {})", values.len(), cfg.seed);
    Ok(Data {
        samples: SampleSet::from_values(&values, grid)?,
        drift_b: cfg.drift_b,
        sigma2: cfg.sigma2,
        summary: DataSummary {
            source: source.to_string(),
            count: values.len(),
            preprocessing: None,
        },
    })
}

/// Unwrapped terminal values from the configured simulation.
pub fn simulate_values(cfg: &RunConfig, grid: &TorusGrid) -> Result<Vec<f64>> {
    let spec = cfg
        .simulation_spec()
        .ok_or_else(|| CliError::config("`simulate` is \"none\""))?;
    let basis = match cfg.simulate {
        SimKind::CompoundPoisson => Some(cfg.basis_layout().build(cfg.sim_rates.len(), grid)?),
        _ => None,
    };
    Ok(simulate(&spec, basis.as_ref(), grid.period())?.values)
}

/// Builds the calibration problem for the configured data.
fn build_problem(cfg: &RunConfig, grid: &TorusGrid, data: &Data) -> Result<CalibrationProblem> {
    let layout = cfg.basis_layout();
    let mut first_err = None;
    let basis = cfg.n_theta.iter().find_map(|&n| match layout.build(n, grid) {
        Ok(b) => Some(b),
        Err(e) => {
            first_err.get_or_insert(e);
            None
        }
    });
    let basis = match basis {
        Some(b) => b,
        None => return Err(first_err.expect("n_theta is not empty").into()),
    };
    let f0 = von_mises_density(grid, cfg.init_mu, cfg.init_kappa)?;
    let coeffs = cfg.coefficients(data.drift_b, data.sigma2)?;
    let time = if cfg.n_time == 0 {
        let n_time = steps_for_bound(grid, &coeffs, cfg.t_final, cfg.xi, 0.9)?;
        info!("n_time = {n_time} from the step bound");
        TimeGrid::new(cfg.t_final, n_time)?
    } else {
        cfg.time()?
    };
    Ok(CalibrationProblem::new(
        grid.clone(),
        time,
        coeffs,
        basis,
        f0,
        data.samples.clone(),
        cfg.eps,
        cfg.solver(),
    )?)
}

/// Smallest number of steps with `dt ≤ safety · dt_bdf2` for the pure
/// diffusion part (at least 2).
pub fn steps_for_bound(
    grid: &TorusGrid,
    coeffs: &ModelCoefficients,
    t_final: f64,
    xi: f64,
    safety: f64,
) -> Result<usize> {
    let cc = CcOperator::new(grid, coeffs);
    let bounds = stability_bounds(&cc, &JumpKernel::zero(grid.len()), xi)?;
    Ok(((t_final / (safety * bounds.dt_bdf2)).ceil() as usize).max(2))
}

/// The calibration problem a run would solve, with the basis of the first
/// usable `n_theta` entry. Useful for follow-up analysis of a fit.
pub fn calibration_problem(cfg: &RunConfig) -> Result<CalibrationProblem> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let data = load_data(cfg, &grid)?;
    build_problem(cfg, &grid, &data)
}

/// Best pure-diffusion model: `α = 0`, `σ²` maximizing `J_ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFit {
    pub sigma2: f64,
    pub j_eps: f64,
    pub n_time: usize,
    pub terminal: Vec<f64>,
}

/// Golden-section search for the best `σ²` in `[lo, hi]` (on a log scale)
/// with all jump rates zero. The time grid is refined per `σ²` so the step
/// stays inside the BDF2 bound.
pub fn gaussian_baseline(problem: &CalibrationProblem, lo: f64, hi: f64, iters: usize) -> Result<BaselineFit> {
    if !(lo > 0.0 && hi > lo) {
        return Err(CliError::config("baseline needs 0 < lo < hi"));
    }
    let zeros = vec![0.0; problem.n_theta()];
    let drift = problem.coefficients().drift_b();
    let t_final = problem.time().t_final();
    let base_steps = problem.time().n_time();
    let eval = |log_s2: f64| -> Result<BaselineFit> {
        let sigma2 = log_s2.exp();
        let coeffs = levycal_core::ModelCoefficients::new(drift, sigma2)?;
        let cc = CcOperator::new(problem.grid(), &coeffs);
        let bounds = stability_bounds(
            &cc,
            &JumpKernel::zero(problem.grid().len()),
            problem.solver_options().xi,
        )?;
        let needed = (t_final / (0.95 * bounds.dt_bdf2)).ceil() as usize;
        let n_time = base_steps.max(needed);
        let p = problem
            .with_coefficients(coeffs)
            .with_time(TimeGrid::new(t_final, n_time)?);
        let (obj, hist) = p.objective(&zeros)?;
        Ok(BaselineFit {
            sigma2,
            j_eps: obj.j_value,
            n_time,
            terminal: hist.terminal().to_vec(),
        })
    };
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    for _ in 0..iters {
        if fc.j_eps >= fd.j_eps {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d)?;
        }
    }
    Ok(if fc.j_eps >= fd.j_eps { fc } else { fd })
}

/// Runs the configured experiment. Fit failures inside the sweep are
/// recorded, not returned; see [`Experiment::failure`].
pub fn run_experiment(cfg: &RunConfig) -> Result<Experiment> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let data = load_data(cfg, &grid)?;
    let problem = build_problem(cfg, &grid, &data)?;
    let histogram = Histogram::from_values(data.samples.values(), &grid, cfg.histogram_bins)?;

    info!("sweeping n_theta = {:?}", cfg.n_theta);
    let SweepResult { entries, selected } = aic_sweep(&problem, cfg.basis_layout(), &cfg.n_theta, &cfg.optimizer());

    let mut failure = None;
    let mut fits = Vec::with_capacity(entries.len());
    let mut chosen = None;
    for e in &entries {
        match &e.fit {
            Ok(fit) => {
                info!(
                    "n_theta = {}: J = {}, AIC = {}, {} iterations",
                    e.n_theta, fit.j_star, fit.aic, fit.iterations
                );
                if selected == Some(e.n_theta) && chosen.is_none() {
                    chosen = Some(fit);
                }
                fits.push(FitEntry {
                    n_theta: e.n_theta,
                    error: None,
                    fit: Some(FitSummary::from(fit)),
                });
            }
            Err(err) => {
                warn!("n_theta = {}: {err}", e.n_theta);
                failure.get_or_insert_with(|| err.clone());
                fits.push(FitEntry {
                    n_theta: e.n_theta,
                    error: Some(err.to_string()),
                    fit: None,
                });
            }
        }
    }
    if chosen.is_some() {
        failure = None;
    }

    let selected_report = chosen.map(|fit| Selected {
        n_theta: fit.n_theta,
        alpha_star: fit.alpha_star.clone(),
        j_eps: fit.j_star,
        aic: fit.aic,
        iterations: fit.iterations,
        converged: fit.converged,
        diagnostics: (&fit.diagnostics).into(),
        histogram_l1: histogram.l1_distance(&fit.terminal_density, &grid),
    });

    let baseline = if cfg.baseline {
        let b = gaussian_baseline(
            &problem,
            cfg.baseline_sigma2_lo,
            cfg.baseline_sigma2_hi,
            cfg.baseline_iters,
        )?;
        info!("gaussian baseline: sigma2 = {}, J = {}", b.sigma2, b.j_eps);
        Some(BaselineReport {
            sigma2: b.sigma2,
            j_eps: b.j_eps,
            n_time: b.n_time,
            histogram_l1: histogram.l1_distance(&b.terminal, &grid),
        })
    } else {
        None
    };

    let report = RunReport {
        config: cfg.echo(),
        seed: cfg.seed,
        data: data.summary,
        drift_b: data.drift_b,
        sigma2: data.sigma2,
        n_time: problem.time().n_time(),
        selected_n_theta: selected,
        selected: selected_report,
        baseline,
        fits,
    };
    Ok(Experiment {
        report,
        grid,
        histogram,
        terminal: chosen.map(|f| f.terminal_density.clone()),
        failure,
    })
}

impl Experiment {
    pub fn report_json(&self) -> Result<String> {
        self.report.to_json()
    }

    /// Writes `report.json`, `pdf.csv`, `histogram.csv` and `aic.csv`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let fitted_avg = self
            .terminal
            .as_ref()
            .map(|f| self.histogram.bin_average(f, &self.grid));
        let files = [
            ("report.json", self.report_json()?),
            (
                "pdf.csv",
                pdf_csv(&self.grid, self.terminal.as_deref(), &self.histogram),
            ),
            ("histogram.csv", histogram_csv(&self.histogram, fitted_avg.as_deref())),
            ("aic.csv", aic_csv(&self.report.fits)),
        ];
        let mut written = Vec::with_capacity(files.len());
        for (name, text) in files {
            let path = dir.join(name);
            write_text(&path, &text)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Reads the configuration echoed into a report, with its seed.
pub fn config_from_report(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    let config = value
        .get_mut("config")
        .map(serde_json::Value::take)
        .ok_or_else(|| CliError::config(format!("{}: no `config` in report", path.display())))?;
    let mut cfg = RunConfig::from_json_value(config)?;
    if let Some(seed) = value.get("seed").and_then(serde_json::Value::as_u64) {
        cfg.seed = seed;
    }
    Ok(cfg)
}
