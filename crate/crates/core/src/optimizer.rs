//! Rate calibration: reduced gradient through the adjoint, and a projected
//! Dai-Yuan nonlinear conjugate gradient with Armijo backtracking.
//!
//! The iteration minimizes `F(α) = −J_ε(f(α))` subject to `α ≥ 0`.

use alloc::vec;
use alloc::vec::Vec;

use crate::adjoint::{rate_gradient, solve_adjoint, terminal_condition, SampleSet};
use crate::error::{Error, Result};
use crate::forward::{solve_forward, CcOperator, DensityHistory, ForwardDiagnostics, JumpKernel, SolverOptions};
use crate::likelihood::{aic_score, evaluate_objective, AicPenalty, ObjectiveValue};
use crate::linalg::dense_solve;
use crate::math;
use crate::torus::{ModelCoefficients, SplineBasis, TimeGrid, TorusGrid};

/// Nonnegative jump rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector(Vec<f64>);

impl ControlVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::param("alpha", "rates must be finite and nonnegative"));
        }
        Ok(Self(alpha))
    }

    pub fn filled(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    /// Clamps negative entries to zero.
    pub fn projected(alpha: &[f64]) -> Self {
        Self(alpha.iter().map(|&a| if a > 0.0 { a } else { 0.0 }).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Everything that stays fixed while the rates are fitted.
#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    grid: TorusGrid,
    time: TimeGrid,
    coeffs: ModelCoefficients,
    cc: CcOperator,
    basis: SplineBasis,
    f0: Vec<f64>,
    samples: SampleSet,
    eps: f64,
    solver: SolverOptions,
}

/// Objective, gradient and forward diagnostics at one control.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEval {
    pub objective: ObjectiveValue,
    /// `∂J_ε/∂α`.
    pub gradient: Vec<f64>,
    pub diagnostics: ForwardDiagnostics,
    pub terminal: Vec<f64>,
}

impl CalibrationProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: TorusGrid,
        time: TimeGrid,
        coeffs: ModelCoefficients,
        basis: SplineBasis,
        f0: Vec<f64>,
        samples: SampleSet,
        eps: f64,
        solver: SolverOptions,
    ) -> Result<Self> {
        if f0.len() != grid.len() || samples.n_space() != grid.len() || basis.n_space() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: f0.len(),
            });
        }
        if !(eps > 0.0) {
            return Err(Error::param("eps", "must be positive"));
        }
        let cc = CcOperator::new(&grid, &coeffs);
        Ok(Self {
            grid,
            time,
            coeffs,
            cc,
            basis,
            f0,
            samples,
            eps,
            solver,
        })
    }

    /// Same problem with another basis.
    pub fn with_basis(&self, basis: SplineBasis) -> Result<Self> {
        if basis.n_space() != self.grid.len() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.len(),
                got: basis.n_space(),
            });
        }
        Ok(Self { basis, ..self.clone() })
    }

    /// Same problem with other drift/diffusion coefficients.
    pub fn with_coefficients(&self, coeffs: ModelCoefficients) -> Self {
        Self {
            coeffs,
            cc: CcOperator::new(&self.grid, &coeffs),
            ..self.clone()
        }
    }

    /// Same problem on another time grid.
    pub fn with_time(&self, time: TimeGrid) -> Self {
        Self { time, ..self.clone() }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn coefficients(&self) -> &ModelCoefficients {
        &self.coeffs
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn initial_density(&self) -> &[f64] {
        &self.f0
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn solver_options(&self) -> &SolverOptions {
        &self.solver
    }

    pub fn n_theta(&self) -> usize {
        self.basis.n_theta()
    }

    pub fn kernel(&self, alpha: &[f64]) -> Result<JumpKernel> {
        JumpKernel::new(&self.basis, alpha, &self.grid)
    }

    pub fn forward(&self, alpha: &[f64]) -> Result<DensityHistory> {
        let kernel = self.kernel(alpha)?;
        solve_forward(&self.f0, &kernel, &self.cc, &self.time, &self.solver)
    }

    /// `J_ε` at `alpha`, with the forward history that produced it.
    pub fn objective(&self, alpha: &[f64]) -> Result<(ObjectiveValue, DensityHistory)> {
        let hist = self.forward(alpha)?;
        let value = evaluate_objective(hist.terminal(), &self.samples, self.eps)?;
        Ok((value, hist))
    }

    /// Gradient from an existing forward solve.
    pub fn gradient_from(&self, alpha: &[f64], hist: &DensityHistory) -> Result<GradientEval> {
        let kernel = self.kernel(alpha)?;
        let objective = evaluate_objective(hist.terminal(), &self.samples, self.eps)?;
        let p_t = terminal_condition(hist.terminal(), &self.samples, self.eps)?;
        let adj = solve_adjoint(&p_t, &kernel, &self.cc, &self.time, &self.solver)?;
        let gradient = rate_gradient(&self.basis, &self.grid, hist, &adj)?;
        Ok(GradientEval {
            objective,
            gradient,
            diagnostics: hist.diagnostics().clone(),
            terminal: hist.terminal().to_vec(),
        })
    }
}

/// Forward solve, terminal adjoint data, backward solve and gradient
/// assembly at `alpha`.
pub fn reduced_gradient(problem: &CalibrationProblem, alpha: &ControlVector) -> Result<GradientEval> {
    let hist = problem.forward(alpha.as_slice())?;
    problem.gradient_from(alpha.as_slice(), &hist)
}

/// Observed Fisher information `−L ∇²J_ε` at `alpha`, row-major, from
/// central differences of the adjoint gradient.
pub fn observed_information(problem: &CalibrationProblem, alpha: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::param("step", "must be positive"));
    }
    let n = alpha.len();
    let l = problem.samples().len() as f64;
    let mut info = vec![0.0; n * n];
    for k in 0..n {
        let mut up = alpha.to_vec();
        let mut dn = alpha.to_vec();
        up[k] += step;
        dn[k] -= step;
        let gu = problem.gradient_from(&up, &problem.forward(&up)?)?.gradient;
        let gd = problem.gradient_from(&dn, &problem.forward(&dn)?)?.gradient;
        for j in 0..n {
            info[j * n + k] = -l * (gu[j] - gd[j]) / (2.0 * step);
        }
    }
    // Symmetrize the difference quotient.
    for j in 0..n {
        for k in j + 1..n {
            let m = 0.5 * (info[j * n + k] + info[k * n + j]);
            info[j * n + k] = m;
            info[k * n + j] = m;
        }
    }
    Ok(info)
}

/// Asymptotic standard errors `sqrt(diag(I⁻¹))` from an information matrix.
pub fn standard_errors(info: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let col = dense_solve(info, &e)?;
        out.push(if col[k] > 0.0 { math::sqrt(col[k]) } else { f64::NAN });
    }
    Ok(out)
}

/// Backtracking parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub xi_init: f64,
    pub shrink: f64,
    pub delta: f64,
    pub max_shrinks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            xi_init: 0.5,
            shrink: 0.3,
            delta: 0.1,
            max_shrinks: 30,
        }
    }
}

impl LineSearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi_init > 0.0) {
            return Err(Error::param("xi_init", "must be positive"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::param("shrink", "must lie in (0, 1)"));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::param("delta_armijo", "must lie in (0, 1/2)"));
        }
        Ok(())
    }
}

/// Accepted step of [`armijo_linesearch`].
#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchStep<T> {
    pub xi: f64,
    pub candidate: Vec<f64>,
    pub value: f64,
    pub shrinks: usize,
    /// `d = 0`: nothing to do, the point is stationary along `d`.
    pub converged: bool,
    pub payload: Option<T>,
}

/// Projected Armijo backtracking for a minimization.
///
/// Tries `ξ = ξ_init·shrink^n`, clamps `α + ξd` to the feasible set and
/// accepts the first candidate with
/// `F(cand) ≤ F(α) + δ⟨g, cand − α⟩`. The evaluator returns `None` where
/// the objective cannot be computed; such trials count as rejections.
pub fn armijo_linesearch<T, E>(
    alpha: &[f64],
    value: f64,
    gradient: &[f64],
    direction: &[f64],
    params: &LineSearch,
    mut evaluate: E,
) -> Result<LineSearchStep<T>>
where
    E: FnMut(&[f64]) -> Option<(f64, T)>,
{
    params.validate()?;
    if direction.iter().all(|&d| d == 0.0) {
        return Ok(LineSearchStep {
            xi: 0.0,
            candidate: alpha.to_vec(),
            value,
            shrinks: 0,
            converged: true,
            payload: None,
        });
    }
    let mut xi = params.xi_init;
    let mut candidate = vec![0.0; alpha.len()];
    for shrinks in 0..=params.max_shrinks {
        for ((c, &a), &d) in candidate.iter_mut().zip(alpha).zip(direction) {
            let x = a + xi * d;
            *c = if x > 0.0 { x } else { 0.0 };
        }
        let decrease: f64 = gradient
            .iter()
            .zip(&candidate)
            .zip(alpha)
            .map(|((g, c), a)| g * (c - a))
            .sum();
        if let Some((trial, payload)) = evaluate(&candidate) {
            if trial.is_finite() && trial <= value + params.delta * decrease {
                return Ok(LineSearchStep {
                    xi,
                    candidate,
                    value: trial,
                    shrinks,
                    converged: false,
                    payload: Some(payload),
                });
            }
        }
        xi *= params.shrink;
    }
    Err(Error::LineSearchFailed {
        shrinks: params.max_shrinks,
    })
}

/// `β = ⟨g⁺, g⁺⟩ / ⟨d, g⁺ − g⟩`, or 0 when the denominator degenerates.
pub fn dai_yuan_beta(g_next: &[f64], g: &[f64], d: &[f64]) -> f64 {
    let num = dot(g_next, g_next);
    if num == 0.0 {
        return 0.0;
    }
    let y: Vec<f64> = g_next.iter().zip(g).map(|(a, b)| a - b).collect();
    let den = dot(d, &y);
    let scale = math::sqrt(dot(d, d)) * math::sqrt(dot(&y, &y));
    if den.abs() < 1e-14 * scale || den == 0.0 {
        return 0.0;
    }
    num / den
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

/// Gradient of the minimized functional with the components that point out
/// of the feasible set at active bounds removed.
fn projected_gradient(alpha: &[f64], g_min: &[f64]) -> Vec<f64> {
    alpha
        .iter()
        .zip(g_min)
        .map(|(&a, &g)| if a > 0.0 || g < 0.0 { g } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Fill value of the initial rates.
    pub alpha_init: f64,
    pub line_search: LineSearch,
    /// Stop when the projected gradient norm drops below this.
    pub tol: f64,
    pub k_max: usize,
    /// Restart period; `None` means `10·N_Θ`.
    pub restart_every: Option<usize>,
    pub aic_penalty: AicPenalty,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            alpha_init: 0.1,
            line_search: LineSearch::default(),
            tol: 1e-5,
            k_max: 500,
            restart_every: None,
            aic_penalty: AicPenalty::LogCount,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub j_value: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub beta: f64,
    pub shrinks: usize,
    pub restarted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub n_theta: usize,
    pub centers: Vec<f64>,
    pub delta: f64,
    pub alpha_star: Vec<f64>,
    pub j_star: f64,
    pub aic: f64,
    pub n_samples: usize,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Projected gradient norm at `alpha_star`.
    pub grad_norm: f64,
    pub floored_count: usize,
    pub diagnostics: ForwardDiagnostics,
    pub terminal_density: Vec<f64>,
    pub trace: Vec<IterationRecord>,
}

/// Projected Dai-Yuan NLCG from `α_0 = alpha_init·1`.
pub fn calibrate(problem: &CalibrationProblem, config: &OptimizerConfig) -> Result<FitReport> {
    let init = ControlVector::filled(problem.n_theta(), config.alpha_init)?;
    calibrate_from(problem, config, init)
}

/// Like [`calibrate`] with an explicit starting point.
pub fn calibrate_from(
    problem: &CalibrationProblem,
    config: &OptimizerConfig,
    init: ControlVector,
) -> Result<FitReport> {
    config.line_search.validate()?;
    if init.len() != problem.n_theta() {
        return Err(Error::DimensionMismatch {
            expected: problem.n_theta(),
            got: init.len(),
        });
    }
    let n_theta = problem.n_theta();
    let restart_every = config.restart_every.unwrap_or(10 * n_theta).max(1);

    let mut alpha = init.into_vec();
    let mut eval = reduced_gradient(problem, &ControlVector::projected(&alpha))?;
    // Gradient of the minimized functional F = −J.
    let mut g: Vec<f64> = eval.gradient.iter().map(|v| -v).collect();
    let mut pg = projected_gradient(&alpha, &g);
    let mut d: Vec<f64> = pg.iter().map(|v| -v).collect();
    let mut steepest = true;
    let mut trace = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut since_restart = 0;
    let mut iterations = 0;

    for k in 0..config.k_max {
        if norm(&pg) <= config.tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let f_val = -eval.objective.j_value;
        let mut restarted = false;
        let step = loop {
            let attempt = armijo_linesearch(&alpha, f_val, &g, &d, &config.line_search, |cand| {
                problem.objective(cand).ok().map(|(obj, hist)| (-obj.j_value, hist))
            });
            match attempt {
                Ok(step) => break Some(step),
                Err(Error::LineSearchFailed { .. }) if !steepest => {
                    d = pg.iter().map(|v| -v).collect();
                    steepest = true;
                    restarted = true;
                }
                Err(Error::LineSearchFailed { .. }) => break None,
                Err(e) => return Err(e),
            }
        };
        let Some(step) = step else {
            termination = Termination::LineSearchFailed;
            break;
        };
        if step.converged {
            termination = Termination::GradientTolerance;
            break;
        }
        iterations = k + 1;
        let hist = step.payload.expect("accepted step carries its forward solve");
        alpha = step.candidate;
        eval = problem.gradient_from(&alpha, &hist)?;
        let g_next: Vec<f64> = eval.gradient.iter().map(|v| -v).collect();
        let pg_next = projected_gradient(&alpha, &g_next);

        since_restart += 1;
        let mut beta = if since_restart >= restart_every {
            since_restart = 0;
            restarted = true;
            0.0
        } else {
            dai_yuan_beta(&g_next, &g, &d)
        };
        let mut d_next: Vec<f64> = g_next.iter().zip(&d).map(|(gn, dp)| -gn + beta * dp).collect();
        for (dn, &a) in d_next.iter_mut().zip(&alpha) {
            if a <= 0.0 && *dn < 0.0 {
                *dn = 0.0;
            }
        }
        if dot(&d_next, &g_next) >= 0.0 && norm(&pg_next) > 0.0 {
            beta = 0.0;
            restarted = true;
            since_restart = 0;
            d_next = pg_next.iter().map(|v| -v).collect();
        }
        steepest = beta == 0.0;
        trace.push(IterationRecord {
            iter: k + 1,
            j_value: eval.objective.j_value,
            grad_norm: norm(&pg_next),
            step: step.xi,
            beta,
            shrinks: step.shrinks,
            restarted,
        });
        g = g_next;
        pg = pg_next;
        d = d_next;
    }
    if termination == Termination::MaxIterations && norm(&pg) <= config.tol {
        termination = Termination::GradientTolerance;
    }

    let aic = aic_score(
        eval.objective.j_value,
        problem.samples().len(),
        n_theta,
        config.aic_penalty,
    )?;
    Ok(FitReport {
        n_theta,
        centers: problem.basis().centers().to_vec(),
        delta: problem.basis().delta(),
        alpha_star: alpha,
        j_star: eval.objective.j_value,
        aic,
        n_samples: problem.samples().len(),
        iterations,
        converged: termination == Termination::GradientTolerance,
        termination,
        grad_norm: norm(&pg),
        floored_count: eval.objective.floored_count,
        diagnostics: eval.diagnostics,
        terminal_density: eval.terminal,
        trace,
    })
}

/// How the centers of an `N_Θ`-hat basis are placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisLayout {
    /// `N_Θ` hats strictly inside `(lo, hi)` with spacing `(hi − lo)/(N_Θ + 1)`.
    Interval { lo: f64, hi: f64 },
    /// `N_Θ` hats tiling the whole torus.
    Covering,
}

impl BasisLayout {
    pub fn build(&self, n_theta: usize, grid: &TorusGrid) -> Result<SplineBasis> {
        match *self {
            BasisLayout::Interval { lo, hi } => SplineBasis::interval(n_theta, lo, hi, grid),
            BasisLayout::Covering => SplineBasis::covering(n_theta, grid),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub n_theta: usize,
    pub fit: core::result::Result<FitReport, Error>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    /// `N_Θ` with the largest AIC among successful fits.
    pub selected: Option<usize>,
}

/// Calibrates once per `N_Θ` and picks the largest AIC. Failed fits are kept
/// in the result and skipped by the selection.
pub fn aic_sweep(
    problem: &CalibrationProblem,
    layout: BasisLayout,
    n_theta_list: &[usize],
    config: &OptimizerConfig,
) -> SweepResult {
    let entries: Vec<SweepEntry> = n_theta_list
        .iter()
        .map(|&n_theta| SweepEntry {
            n_theta,
            fit: layout
                .build(n_theta, problem.grid())
                .and_then(|basis| problem.with_basis(basis))
                .and_then(|p| calibrate(&p, config)),
        })
        .collect();
    let selected = select_by_aic(&entries);
    SweepResult { entries, selected }
}

/// Argmax of the AIC over successful entries; ties go to the smaller model.
pub fn select_by_aic(entries: &[SweepEntry]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for e in entries {
        if let Ok(fit) = &e.fit {
            let better = match best {
                None => true,
                Some((n, a)) => fit.aic > a || (fit.aic == a && e.n_theta < n),
            };
            if better {
                best = Some((e.n_theta, fit.aic));
            }
        }
    }
    best.map(|(n, _)| n)
}
