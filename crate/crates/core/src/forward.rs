//! Kolmogorov forward solver: Chang-Cooper fluxes for drift and diffusion,
//! BDF2 in time, and the jump integral treated explicitly (IMEX).
//!
//! One step of the scheme reads
//!
//! ```text
//! (3I − 2δt A) f^{m+1} = 4 f^m − f^{m−1} + 2δt Q(2f^m − f^{m−1})
//! ```
//!
//! where `A` is the periodic Chang-Cooper operator and `Q` the mid-point jump
//! operator. The second starting value `f^1` comes from `K` implicit Euler
//! substeps `(I − τA) g^s = g^{s−1} + τ Q(g^{s−1})`, `τ = δt/K`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{CyclicFactor, CyclicTridiagonal};
use crate::math;
use crate::torus::{ModelCoefficients, SplineBasis, TimeGrid, TorusGrid};

/// Below this `|w|` the Chang-Cooper weight and `β` use their Taylor series.
pub const SERIES_SWITCH: f64 = 1e-4;

/// Chang-Cooper weight `δ(w) = 1/w − 1/(e^w − 1)`.
pub fn cc_delta(w: f64) -> f64 {
    if w.abs() < SERIES_SWITCH {
        0.5 - w / 12.0 + w * w * w / 720.0
    } else {
        1.0 / w - 1.0 / math::exp_m1(w)
    }
}

/// Chang-Cooper discretization of `∂x(B f + C ∂x f)` on a periodic grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcOperator {
    h: f64,
    adv: f64,
    diff: f64,
    w: f64,
    delta_cc: f64,
    beta: f64,
    omega_beta: f64,
    n: usize,
}

impl CcOperator {
    pub fn new(grid: &TorusGrid, coeffs: &ModelCoefficients) -> Self {
        let h = grid.h();
        let adv = coeffs.adv();
        let diff = coeffs.diff();
        let w = h * adv / diff;
        let beta = if w.abs() < SERIES_SWITCH {
            diff / h * (1.0 - w / 2.0 + w * w / 12.0)
        } else {
            adv / math::exp_m1(w)
        };
        Self {
            h,
            adv,
            diff,
            w,
            delta_cc: cc_delta(w),
            beta,
            // ωβ = B + β; this form stays finite when e^w overflows.
            omega_beta: adv + beta,
            n: grid.len(),
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn delta_cc(&self) -> f64 {
        self.delta_cc
    }

    pub fn omega(&self) -> f64 {
        math::exp(self.w)
    }

    /// `β = B/(ω − 1)`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `β` in its flux form `C/h − δB`.
    pub fn beta_flux_form(&self) -> f64 {
        self.diff / self.h - self.delta_cc * self.adv
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `β(1 + ω)/h`, minus the diagonal of `A`.
    pub fn decay_rate(&self) -> f64 {
        (self.beta + self.omega_beta) / self.h
    }

    /// `B coth(hB/(2C))/h`, which equals [`decay_rate`](Self::decay_rate).
    pub fn coth_rate(&self) -> f64 {
        if self.adv == 0.0 {
            2.0 * self.diff / (self.h * self.h)
        } else {
            self.adv / (self.h * math::tanh(0.5 * self.w))
        }
    }

    /// The operator matrix `A`.
    pub fn matrix(&self) -> CyclicTridiagonal {
        CyclicTridiagonal::constant(self.n, self.beta / self.h, -self.decay_rate(), self.omega_beta / self.h)
    }

    /// `scale·I − coeff·A`.
    pub fn shifted(&self, scale: f64, coeff: f64) -> CyclicTridiagonal {
        CyclicTridiagonal::constant(
            self.n,
            -coeff * self.beta / self.h,
            scale + coeff * self.decay_rate(),
            -coeff * self.omega_beta / self.h,
        )
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.matrix().matvec(f)
    }
}

/// Sampled jump kernel `q_d = h Σ_j α_j θ_jd` and total rate `a = Σ_d q_d`.
///
/// Shift `d` moves mass by `d` cells in the positive direction, so
/// `Q(f)_i = Σ_d q_d f_{i−d} − a f_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpKernel {
    kernel: Vec<f64>,
    support: Vec<(usize, f64)>,
    total_rate: f64,
}

impl JumpKernel {
    pub fn new(basis: &SplineBasis, alpha: &[f64], grid: &TorusGrid) -> Result<Self> {
        if alpha.len() != basis.n_theta() {
            return Err(Error::DimensionMismatch {
                expected: basis.n_theta(),
                got: alpha.len(),
            });
        }
        if basis.n_space() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: basis.n_space(),
            });
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::param("alpha", "rates must be finite"));
        }
        let h = grid.h();
        let mut kernel = vec![0.0; grid.len()];
        for (j, &a) in alpha.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (q, &theta) in kernel.iter_mut().zip(basis.row(j)) {
                *q += h * a * theta;
            }
        }
        Ok(Self::from_kernel(kernel))
    }

    pub fn from_kernel(kernel: Vec<f64>) -> Self {
        let support = kernel
            .iter()
            .enumerate()
            .filter(|(_, &q)| q != 0.0)
            .map(|(d, &q)| (d, q))
            .collect();
        let total_rate = kernel.iter().sum();
        Self {
            kernel,
            support,
            total_rate,
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::from_kernel(vec![0.0; n])
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    pub fn len(&self) -> usize {
        self.kernel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel.is_empty()
    }

    /// `out += Q(f)`.
    pub(crate) fn accumulate(&self, f: &[f64], scale: f64, out: &mut [f64]) {
        let n = f.len();
        for (o, &v) in out.iter_mut().zip(f) {
            *o -= scale * self.total_rate * v;
        }
        for &(d, q) in &self.support {
            let q = scale * q;
            let (head, tail) = out.split_at_mut(d);
            // i < d reads f[i + n − d], i ≥ d reads f[i − d].
            for (o, &v) in head.iter_mut().zip(&f[n - d..]) {
                *o += q * v;
            }
            for (o, &v) in tail.iter_mut().zip(&f[..n - d]) {
                *o += q * v;
            }
        }
    }

    /// `out += Q̃(p)`, the transpose of [`accumulate`](Self::accumulate).
    pub(crate) fn accumulate_adjoint(&self, p: &[f64], scale: f64, out: &mut [f64]) {
        let n = p.len();
        for (o, &v) in out.iter_mut().zip(p) {
            *o -= scale * self.total_rate * v;
        }
        for &(d, q) in &self.support {
            let q = scale * q;
            // i < n − d reads p[i + d], the rest wraps to p[i + d − n].
            let (head, tail) = out.split_at_mut(n - d);
            for (o, &v) in head.iter_mut().zip(&p[d..]) {
                *o += q * v;
            }
            for (o, &v) in tail.iter_mut().zip(&p[..d]) {
                *o += q * v;
            }
        }
    }
}

/// `Q(f)_i = Σ_d q_d f_{i−d} − a f_i`.
pub fn apply_jump_operator(f: &[f64], kernel: &JumpKernel) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    kernel.accumulate(f, 1.0, &mut out);
    out
}

/// Admissible step sizes for positivity and 1-norm stability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityBounds {
    pub xi: f64,
    pub jump_rate: f64,
    pub decay_rate: f64,
    pub coth_rate: f64,
    /// Implicit Euler positivity: `δt ≤ 1/a`.
    pub dt_euler_pos: f64,
    /// Implicit Euler decay bound: `δt < (ξ−1)/(aξ + β(1+ω)/h)`.
    pub dt_euler_decay: f64,
    /// BDF2 bound: `δt ≤ h(ξ−1)(3−ξ)/(aξh + 2β(1+ω))`.
    pub dt_bdf2: f64,
}

pub fn stability_bounds(cc: &CcOperator, kernel: &JumpKernel, xi: f64) -> Result<StabilityBounds> {
    if !(xi > 1.0 && xi < 3.0) {
        return Err(Error::param("xi", "must lie in (1, 3)"));
    }
    let a = kernel.total_rate();
    let decay = cc.decay_rate();
    let dt_euler_pos = if a > 0.0 { 1.0 / a } else { f64::INFINITY };
    Ok(StabilityBounds {
        xi,
        jump_rate: a,
        decay_rate: decay,
        coth_rate: cc.coth_rate(),
        dt_euler_pos,
        dt_euler_decay: (xi - 1.0) / (a * xi + decay),
        dt_bdf2: (xi - 1.0) * (3.0 - xi) / (a * xi + 2.0 * decay),
    })
}

/// One implicit Euler step `(I − δt A) f = f_prev + δt Q(f_prev)`.
pub fn euler_step(f_prev: &[f64], dt_sub: f64, cc: &CcOperator, kernel: &JumpKernel, force: bool) -> Result<Vec<f64>> {
    check_len(f_prev.len(), cc.len())?;
    let a = kernel.total_rate();
    if !force && a * dt_sub > 1.0 {
        return Err(Error::StepTooLarge {
            dt: dt_sub,
            bound: 1.0 / a,
            bound_name: "Euler positivity",
        });
    }
    let factor = cc.shifted(1.0, dt_sub).factor()?;
    let mut rhs = f_prev.to_vec();
    kernel.accumulate(f_prev, dt_sub, &mut rhs);
    factor.solve_in_place(&mut rhs)?;
    Ok(rhs)
}

/// One BDF2 step from `(f^{m−1}, f^m)` to `f^{m+1}`.
pub fn bdf2_step(f_m: &[f64], f_m_minus_1: &[f64], cc: &CcOperator, kernel: &JumpKernel, dt: f64) -> Result<Vec<f64>> {
    check_len(f_m.len(), cc.len())?;
    check_len(f_m_minus_1.len(), cc.len())?;
    let factor = cc.shifted(3.0, 2.0 * dt).factor()?;
    let mut out = vec![0.0; f_m.len()];
    let mut extrap = vec![0.0; f_m.len()];
    bdf2_rhs(f_m, f_m_minus_1, kernel, dt, &mut extrap, &mut out);
    factor.solve_in_place(&mut out)?;
    Ok(out)
}

fn bdf2_rhs(f_m: &[f64], f_m_minus_1: &[f64], kernel: &JumpKernel, dt: f64, extrap: &mut [f64], out: &mut [f64]) {
    for (((o, e), &a), &b) in out.iter_mut().zip(extrap.iter_mut()).zip(f_m).zip(f_m_minus_1) {
        *o = 4.0 * a - b;
        *e = 2.0 * a - b;
    }
    kernel.accumulate(extrap, 2.0 * dt, out);
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Number of implicit Euler substeps used to compute `f^1`.
    pub bootstrap_substeps: usize,
    /// `ξ ∈ (1, 3)` of the BDF2 positivity condition.
    pub xi: f64,
    /// Run even if the step bounds are violated.
    pub force: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            bootstrap_substeps: 10,
            xi: 2.0,
            force: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardDiagnostics {
    pub bounds: StabilityBounds,
    pub dt_used: f64,
    pub substep_dt: f64,
    pub forced: bool,
    /// `min_i (ξ f^1_i − f^0_i)`; the BDF2 positivity theorem wants `≥ 0`.
    pub xi_condition_min: f64,
    pub xi_condition_holds: bool,
    pub initial_mass: f64,
    /// `max_m |mass_m − mass_0| / |mass_0|`.
    pub mass_drift: f64,
    pub min_density: f64,
    pub first_negative_step: Option<usize>,
    /// Largest relative increase `‖f^{m+1}‖₁ − ‖f^m‖₁` over the run.
    pub max_norm_growth: f64,
}

/// Space-time history `f_i^m`, `m = 0..=N_T`, plus the Euler bootstrap states.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityHistory {
    n_space: usize,
    n_time: usize,
    dt: f64,
    values: Vec<f64>,
    substeps: Vec<f64>,
    diagnostics: ForwardDiagnostics,
}

impl DensityHistory {
    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        &self.values[m * self.n_space..(m + 1) * self.n_space]
    }

    pub fn terminal(&self) -> &[f64] {
        self.slice(self.n_time)
    }

    /// Number of Euler substeps in the bootstrap.
    pub fn bootstrap_len(&self) -> usize {
        self.substeps.len() / self.n_space - 1
    }

    /// Bootstrap state `g^s`, `s = 0..=K`, with `g^0 = f^0` and `g^K = f^1`.
    pub fn substep(&self, s: usize) -> &[f64] {
        &self.substeps[s * self.n_space..(s + 1) * self.n_space]
    }

    pub fn diagnostics(&self) -> &ForwardDiagnostics {
        &self.diagnostics
    }
}

/// Factorized step matrices shared by the forward and adjoint sweeps.
pub(crate) struct Stepper {
    pub dt: f64,
    pub substep_dt: f64,
    pub substeps: usize,
    pub bdf2: CyclicFactor,
    pub euler: CyclicFactor,
}

impl Stepper {
    pub fn new(cc: &CcOperator, dt: f64, substeps: usize, transpose: bool) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::param("bootstrap_substeps", "must be at least 1"));
        }
        let tau = dt / substeps as f64;
        let (m, e) = (cc.shifted(3.0, 2.0 * dt), cc.shifted(1.0, tau));
        let (m, e) = if transpose {
            (m.transpose(), e.transpose())
        } else {
            (m, e)
        };
        Ok(Self {
            dt,
            substep_dt: tau,
            substeps,
            bdf2: m.factor()?,
            euler: e.factor()?,
        })
    }
}

pub(crate) fn validate_steps(
    cc: &CcOperator,
    kernel: &JumpKernel,
    time: &TimeGrid,
    opts: &SolverOptions,
) -> Result<StabilityBounds> {
    let bounds = stability_bounds(cc, kernel, opts.xi)?;
    if opts.bootstrap_substeps == 0 {
        return Err(Error::param("bootstrap_substeps", "must be at least 1"));
    }
    if opts.force {
        return Ok(bounds);
    }
    let dt = time.dt();
    let tau = dt / opts.bootstrap_substeps as f64;
    if tau * bounds.jump_rate > 1.0 {
        return Err(Error::StepTooLarge {
            dt: tau,
            bound: bounds.dt_euler_pos,
            bound_name: "Euler positivity",
        });
    }
    if dt > bounds.dt_bdf2 {
        return Err(Error::StepTooLarge {
            dt,
            bound: bounds.dt_bdf2,
            bound_name: "BDF2 positivity",
        });
    }
    Ok(bounds)
}

/// Runs the full forward solve from `f0` to `t = T`.
pub fn solve_forward(
    f0: &[f64],
    kernel: &JumpKernel,
    cc: &CcOperator,
    time: &TimeGrid,
    opts: &SolverOptions,
) -> Result<DensityHistory> {
    let n = cc.len();
    check_len(f0.len(), n)?;
    check_len(kernel.len(), n)?;
    if f0.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::param("f0", "initial density must be finite and nonnegative"));
    }
    let bounds = validate_steps(cc, kernel, time, opts)?;
    let stepper = Stepper::new(cc, time.dt(), opts.bootstrap_substeps, false)?;
    let n_time = time.n_time();
    let k = stepper.substeps;
    let tau = stepper.substep_dt;

    let mut substeps = Vec::with_capacity((k + 1) * n);
    substeps.extend_from_slice(f0);
    for s in 1..=k {
        let prev = &substeps[(s - 1) * n..s * n];
        let mut rhs = prev.to_vec();
        kernel.accumulate(prev, tau, &mut rhs);
        stepper.euler.solve_in_place(&mut rhs)?;
        substeps.extend_from_slice(&rhs);
    }

    let mut values = vec![0.0; (n_time + 1) * n];
    values[..n].copy_from_slice(f0);
    values[n..2 * n].copy_from_slice(&substeps[k * n..]);
    let mut extrap = vec![0.0; n];
    for m in 1..n_time {
        let (done, rest) = values.split_at_mut((m + 1) * n);
        let f_prev = &done[(m - 1) * n..m * n];
        let f_m = &done[m * n..];
        let out = &mut rest[..n];
        bdf2_rhs(f_m, f_prev, kernel, stepper.dt, &mut extrap, out);
        stepper.bdf2.solve_in_place(out)?;
    }

    let xi = opts.xi;
    let xi_condition_min = values[n..2 * n]
        .iter()
        .zip(f0)
        .map(|(f1, f0)| xi * f1 - f0)
        .fold(f64::INFINITY, f64::min);

    let mut min_density = f64::INFINITY;
    let mut first_negative_step = None;
    let mut mass_drift: f64 = 0.0;
    let mut max_norm_growth = f64::NEG_INFINITY;
    let initial_mass: f64 = f0.iter().sum::<f64>() * cc.h();
    let mut prev_norm = f0.iter().map(|v| v.abs()).sum::<f64>();
    for m in 0..=n_time {
        let f = &values[m * n..(m + 1) * n];
        let slice_min = f.iter().copied().fold(f64::INFINITY, f64::min);
        if slice_min < 0.0 && first_negative_step.is_none() {
            first_negative_step = Some(m);
        }
        min_density = min_density.min(slice_min);
        let mass = f.iter().sum::<f64>() * cc.h();
        if initial_mass != 0.0 {
            mass_drift = mass_drift.max(((mass - initial_mass) / initial_mass).abs());
        }
        if m > 0 {
            let norm = f.iter().map(|v| v.abs()).sum::<f64>();
            max_norm_growth = max_norm_growth.max((norm - prev_norm) / prev_norm.max(f64::MIN_POSITIVE));
            prev_norm = norm;
        }
    }

    Ok(DensityHistory {
        n_space: n,
        n_time,
        dt: time.dt(),
        values,
        substeps,
        diagnostics: ForwardDiagnostics {
            bounds,
            dt_used: time.dt(),
            substep_dt: tau,
            forced: opts.force,
            xi_condition_min,
            xi_condition_holds: xi_condition_min >= 0.0,
            initial_mass,
            mass_drift,
            min_density,
            first_negative_step,
            max_norm_growth,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense_solve;
    use crate::torus::von_mises_density;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, b: f64, sigma2: f64) -> (TorusGrid, CcOperator) {
        let grid = TorusGrid::circle(n).unwrap();
        let coeffs = ModelCoefficients::new(b, sigma2).unwrap();
        let cc = CcOperator::new(&grid, &coeffs);
        (grid, cc)
    }

    /// Straight evaluation of the mid-point jump sum: loop over hats and
    /// shifts, translating `f` by the sampled jump size.
    fn brute_force_q(f: &[f64], basis: &SplineBasis, alpha: &[f64], grid: &TorusGrid) -> Vec<f64> {
        let n = grid.len();
        let h = grid.h();
        let mut out = vec![0.0; n];
        for i in 0..n {
            for (j, &a) in alpha.iter().enumerate() {
                for k in 0..n {
                    let s = grid.shift_size(k);
                    let theta = basis.eval(j, s);
                    let src = grid.nearest_slot(grid.point(i) - s);
                    out[i] += h * a * theta * (f[src] - f[i]);
                }
            }
        }
        out
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    #[test]
    fn cc_delta_examples() {
        assert_eq!(cc_delta(0.0), 0.5);
        assert!((cc_delta(1.0) - (1.0 - 1.0 / (core::f64::consts::E - 1.0))).abs() < 1e-15);
        assert!((cc_delta(1.0) - 0.418_023_293_070_4).abs() < 1e-7);
        assert!(cc_delta(800.0) < 1.3e-3);
        assert!((cc_delta(-800.0) - 1.0).abs() < 1.3e-3);
        assert!(cc_delta(1e6) >= 0.0);
    }

    #[test]
    fn cc_delta_is_continuous_and_decreasing() {
        let mut prev = cc_delta(-50.0);
        let mut w = -50.0;
        while w < 50.0 {
            w += 0.013_7;
            let d = cc_delta(w);
            assert!(d < prev && d > 0.0 && d < 1.0, "w = {w}");
            prev = d;
        }
        // Both sides of the series switch agree up to the cancellation in
        // 1/w − 1/(e^w − 1), which is about ε/w.
        let below = cc_delta(0.999_999 * SERIES_SWITCH);
        let above = cc_delta(1.000_001 * SERIES_SWITCH);
        assert!((below - above).abs() < 1e-10);
    }

    #[test]
    fn beta_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(16..200);
            let b = rng.random_range(-3.0..3.0);
            let s2 = rng.random_range(0.01..1.0);
            let (_, cc) = setup(n, b, s2);
            if cc.w().abs() >= SERIES_SWITCH {
                let reference = cc.beta_flux_form();
                assert!(
                    (reference - cc.beta()).abs() <= 1e-12 * (0.5 * s2 / cc.h()),
                    "b={b} s2={s2}"
                );
            }
            let rel = (cc.decay_rate() - cc.coth_rate()).abs() / cc.decay_rate();
            assert!(rel < 1e-12, "coth identity: {rel}");
        }
    }

    #[test]
    fn operator_columns_sum_to_zero() {
        for &(b, s2) in &[(0.0, 0.04), (0.7, 0.02), (-2.0, 0.3), (5.0, 0.001)] {
            let (grid, cc) = setup(33, b, s2);
            let n = grid.len();
            let a = cc.matrix().to_dense();
            let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for j in 0..n {
                let col: f64 = (0..n).map(|i| a[i * n + j]).sum();
                assert!(col.abs() < 1e-13 * norm, "column {j}: {col}");
            }
            // Entry layout: sub β/h, super ωβ/h, corners.
            let beta_h = cc.beta() / cc.h();
            assert!((a[n] - beta_h).abs() < 1e-12 * norm);
            assert!((a[n - 1] - beta_h).abs() < 1e-12 * norm);
            let ob = cc.omega() * cc.beta() / cc.h();
            assert!((a[1] - ob).abs() < 1e-9 * norm);
            assert!((a[(n - 1) * n] - ob).abs() < 1e-9 * norm);
        }
    }

    #[test]
    fn jump_operator_zero_rates_and_uniform_input() {
        let (grid, _) = setup(24, 0.0, 0.1);
        let basis = SplineBasis::interval(3, -1.0, 1.0, &grid).unwrap();
        let k0 = JumpKernel::new(&basis, &[0.0; 3], &grid).unwrap();
        let f: Vec<f64> = (0..24).map(|i| (i as f64).sin().abs()).collect();
        assert!(apply_jump_operator(&f, &k0).iter().all(|&v| v == 0.0));
        let k = JumpKernel::new(&basis, &[1.0, 2.0, 0.5], &grid).unwrap();
        let q = apply_jump_operator(&[0.3; 24], &k);
        assert!(q.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn jump_operator_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 6..=16 {
            let (grid, _) = setup(n, 0.0, 0.1);
            let basis = SplineBasis::interval(2, -1.5, 1.5, &grid).unwrap();
            let alpha = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
            let kernel = JumpKernel::new(&basis, &alpha, &grid).unwrap();
            let f = random_vec(&mut rng, n);
            let fast = apply_jump_operator(&f, &kernel);
            let slow = brute_force_q(&f, &basis, &alpha, &grid);
            for (x, y) in fast.iter().zip(&slow) {
                assert!((x - y).abs() < 1e-13, "n={n}: {x} vs {y}");
            }
            let total: f64 = fast.iter().sum();
            let l1: f64 = f.iter().sum();
            assert!(total.abs() <= 1e-12 * l1);
        }
    }

    #[test]
    fn kernel_total_rate_matches_quadrature() {
        let (grid, _) = setup(64, 0.0, 0.1);
        let basis = SplineBasis::interval(4, -1.0, 1.0, &grid).unwrap();
        let alpha = [0.5, 1.0, 2.0, 0.0];
        let k = JumpKernel::new(&basis, &alpha, &grid).unwrap();
        let direct: f64 = alpha
            .iter()
            .enumerate()
            .map(|(j, a)| a * basis.quadrature_mass(j, grid.h()))
            .sum();
        assert!((k.total_rate() - direct).abs() < 1e-13);
        assert!(k.kernel().iter().all(|&q| q >= 0.0));
    }

    #[test]
    fn euler_step_pure_diffusion() {
        let (grid, cc) = setup(40, 0.0, 0.1);
        let k = JumpKernel::zero(40);
        let f = von_mises_density(&grid, 0.0, 4.0).unwrap();
        let g = euler_step(&f, 0.01, &cc, &k, false).unwrap();
        let (m0, m1): (f64, f64) = (f.iter().sum(), g.iter().sum());
        assert!((m0 - m1).abs() < 1e-12 * m0);
        assert!(g.iter().all(|&v| v >= 0.0));
        let flat = [1.0 / (2.0 * core::f64::consts::PI); 40];
        let same = euler_step(&flat, 0.01, &cc, &k, false).unwrap();
        for (a, b) in same.iter().zip(&flat) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_step_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (grid, cc) = setup(6, 0.4, 0.3);
        let basis = SplineBasis::interval(2, -1.0, 1.0, &grid).unwrap();
        let kernel = JumpKernel::new(&basis, &[1.3, 0.4], &grid).unwrap();
        let f = random_vec(&mut rng, 6);
        let dt = 0.05;
        let got = euler_step(&f, dt, &cc, &kernel, false).unwrap();
        let n = 6;
        let a = cc.matrix().to_dense();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = if i == j { 1.0 } else { 0.0 } - dt * a[i * n + j];
            }
        }
        let q = brute_force_q(&f, &basis, &[1.3, 0.4], &grid);
        let rhs: Vec<f64> = f.iter().zip(&q).map(|(x, y)| x + dt * y).collect();
        let want = dense_solve(&m, &rhs).unwrap();
        for (x, y) in got.iter().zip(&want) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn euler_step_refuses_large_steps() {
        let (grid, cc) = setup(16, 0.0, 0.1);
        let basis = SplineBasis::interval(1, -1.0, 1.0, &grid).unwrap();
        let kernel = JumpKernel::new(&basis, &[10.0], &grid).unwrap();
        let f = vec![0.1; 16];
        let dt = 2.0 / kernel.total_rate();
        assert!(matches!(
            euler_step(&f, dt, &cc, &kernel, false),
            Err(Error::StepTooLarge { .. })
        ));
        assert!(euler_step(&f, dt, &cc, &kernel, true).is_ok());
    }

    #[test]
    fn bdf2_step_fixed_point_and_dense_oracle() {
        let (grid, cc) = setup(6, 0.0, 0.2);
        let k0 = JumpKernel::zero(6);
        let flat = [0.25; 6];
        let out = bdf2_step(&flat, &flat, &cc, &k0, 0.1).unwrap();
        for v in out {
            assert!((v - 0.25).abs() < 1e-14);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (grid2, cc2) = setup(6, -0.8, 0.15);
        let basis = SplineBasis::interval(2, -1.0, 1.0, &grid2).unwrap();
        let alpha = [0.7, 1.9];
        let kernel = JumpKernel::new(&basis, &alpha, &grid2).unwrap();
        let f1 = random_vec(&mut rng, 6);
        let f0 = random_vec(&mut rng, 6);
        let dt = 0.03;
        let got = bdf2_step(&f1, &f0, &cc2, &kernel, dt).unwrap();
        let n = 6;
        let a = cc2.matrix().to_dense();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = if i == j { 3.0 } else { 0.0 } - 2.0 * dt * a[i * n + j];
            }
        }
        let extrap: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| 2.0 * a - b).collect();
        let q = brute_force_q(&extrap, &basis, &alpha, &grid2);
        let rhs: Vec<f64> = (0..n).map(|i| 4.0 * f1[i] - f0[i] + 2.0 * dt * q[i]).collect();
        let want = dense_solve(&m, &rhs).unwrap();
        for (x, y) in got.iter().zip(&want) {
            assert!((x - y).abs() < 1e-13);
        }
        let _ = grid;
    }

    proptest! {
        #[test]
        fn bdf2_mass_telescopes(
            seed in 0u64..1000,
            b in -2.0f64..2.0,
            s2 in 0.01f64..0.5,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (grid, cc) = setup(20, b, s2);
            let basis = SplineBasis::interval(3, -1.0, 1.0, &grid).unwrap();
            let alpha = [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
            let kernel = JumpKernel::new(&basis, &alpha, &grid).unwrap();
            let f1 = random_vec(&mut rng, 20);
            let f0 = random_vec(&mut rng, 20);
            let out = bdf2_step(&f1, &f0, &cc, &kernel, 0.01).unwrap();
            let (s0, s1, s2v): (f64, f64, f64) = (f0.iter().sum(), f1.iter().sum(), out.iter().sum());
            prop_assert!((3.0 * s2v - (4.0 * s1 - s0)).abs() < 1e-12 * (s0 + s1));
        }
    }

    #[test]
    fn bounds_examples() {
        let (grid, cc) = setup(64, 0.0, 0.04);
        let k0 = JumpKernel::zero(64);
        let b = stability_bounds(&cc, &k0, 2.0).unwrap();
        let expected = grid.h() / (2.0 * cc.beta() * (1.0 + cc.omega()));
        assert!((b.dt_bdf2 - expected).abs() < 1e-15 * expected.max(1.0));
        assert!(b.dt_euler_pos.is_infinite());
        assert!(stability_bounds(&cc, &k0, 1.0).is_err());
        assert!(stability_bounds(&cc, &k0, 3.0).is_err());

        let basis = SplineBasis::interval(5, -1.0, 1.0, &grid).unwrap();
        let kernel = JumpKernel::new(&basis, &[3.0, 2.0, 1.0, 0.5, 0.25], &grid).unwrap();
        let cap = 4.0 - 2.0 * 3.0f64.sqrt();
        for xi in [1.01, 1.5, 1.732, 2.0, 2.5, 2.99] {
            let b = stability_bounds(&cc, &kernel, xi).unwrap();
            assert!(kernel.total_rate() * b.dt_bdf2 < cap + 1e-15);
            assert!(b.dt_euler_decay < b.dt_euler_pos);
        }
    }

    #[test]
    fn forward_pure_diffusion_is_symmetric() {
        let (grid, cc) = setup(128, 0.0, 0.04);
        let f0 = von_mises_density(&grid, 0.0, 400.0).unwrap();
        let time = TimeGrid::new(1.0, 100).unwrap();
        let hist = solve_forward(&f0, &JumpKernel::zero(128), &cc, &time, &SolverOptions::default()).unwrap();
        let f = hist.terminal();
        let n = grid.len();
        let zero = grid.nearest_slot(0.0);
        let mut asym = 0.0;
        for k in 0..n {
            let mirror = (2 * zero + n - k) % n;
            asym += (f[k] - f[mirror]).abs();
        }
        let norm: f64 = f.iter().sum();
        assert!(asym / norm < 1e-8, "asymmetry {}", asym / norm);
        assert!(hist.diagnostics().mass_drift < 1e-12);
    }

    #[test]
    fn forward_refuses_unstable_steps_unless_forced() {
        let (grid, cc) = setup(200, 0.0, 0.5);
        let f0 = von_mises_density(&grid, 0.0, 10.0).unwrap();
        let time = TimeGrid::new(1.0, 5).unwrap();
        let k = JumpKernel::zero(200);
        let err = solve_forward(&f0, &k, &cc, &time, &SolverOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::StepTooLarge {
                bound_name: "BDF2 positivity",
                ..
            }
        ));
        let opts = SolverOptions {
            force: true,
            ..SolverOptions::default()
        };
        let hist = solve_forward(&f0, &k, &cc, &time, &opts).unwrap();
        assert!(hist.diagnostics().forced);
    }

    #[test]
    fn full_consistency_configuration_runs() {
        let grid = TorusGrid::circle(420).unwrap();
        let coeffs = ModelCoefficients::new(0.0, 0.02).unwrap();
        let cc = CcOperator::new(&grid, &coeffs);
        let basis = SplineBasis::interval(5, -1.0, 1.0, &grid).unwrap();
        let kernel = JumpKernel::new(&basis, &[3.0, 2.0, 1.0, 0.5, 0.25], &grid).unwrap();
        let time = TimeGrid::new(1.0, 250).unwrap();
        let f0 = von_mises_density(&grid, 0.0, 400.0).unwrap();
        let hist = solve_forward(&f0, &kernel, &cc, &time, &SolverOptions::default()).unwrap();
        let d = hist.diagnostics();
        assert!(d.mass_drift < 1e-10);
        assert!(d.min_density >= -1e-13);
        assert!(time.dt() <= d.bounds.dt_bdf2);
    }
}
