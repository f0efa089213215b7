//! Discrete adjoint of the forward scheme and the reduced gradient.
//!
//! The backward sweep is the exact transpose of the forward recurrence,
//! including the Euler bootstrap, so the gradient it produces is the
//! derivative of the discrete objective and not an approximation of it.
//!
//! Layout of [`AdjointHistory`]:
//! - `p^{N_T}` is the terminal data `p_T`;
//! - `p^m`, `1 ≤ m < N_T`, is the multiplier of the BDF2 step that
//!   produces `f^{m+1}`;
//! - `μ^s`, `1 ≤ s ≤ K`, are the multipliers of the Euler substeps;
//! - `p^0 = μ^0` is the sensitivity with respect to `f^0`, so that
//!   `⟨p_T, f^{N_T}⟩ = ⟨p^0, f^0⟩`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::forward::{CcOperator, DensityHistory, JumpKernel, SolverOptions, Stepper};
use crate::torus::{SplineBasis, TimeGrid, TorusGrid};

/// Terminal samples projected onto the torus and snapped to grid slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    values: Vec<f64>,
    slots: Vec<usize>,
    counts: Vec<u64>,
}

impl SampleSet {
    /// Projects every value onto the torus and snaps it to the nearest slot.
    pub fn from_values(values: &[f64], grid: &TorusGrid) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySamples);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("samples", "values must be finite"));
        }
        let values: Vec<f64> = values.iter().map(|&y| grid.project(y)).collect();
        let slots: Vec<usize> = values.iter().map(|&x| grid.nearest_slot(x)).collect();
        let mut counts = vec![0u64; grid.len()];
        for &s in &slots {
            counts[s] += 1;
        }
        Ok(Self { values, slots, counts })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Projected values in `[Ωa, Ωb)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_space(&self) -> usize {
        self.counts.len()
    }
}

/// `p_i = −count_i / (L f_i)`; zero where the cell is empty or `f_i < eps`.
///
/// Where the floor is active `J_ε` does not depend on `f_i`, so its
/// derivative, and the terminal adjoint, vanish there.
pub fn terminal_condition(f_t: &[f64], samples: &SampleSet, eps: f64) -> Result<Vec<f64>> {
    if f_t.len() != samples.n_space() {
        return Err(Error::DimensionMismatch {
            expected: samples.n_space(),
            got: f_t.len(),
        });
    }
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    let l = samples.len() as f64;
    Ok(f_t
        .iter()
        .zip(samples.counts())
        .map(|(&f, &c)| if c == 0 || f < eps { 0.0 } else { -(c as f64) / (l * f) })
        .collect())
}

/// `Q̃(p)_i = Σ_d q_d p_{i+d} − a p_i`, the transpose of the jump operator.
pub fn adjoint_jump_operator(p: &[f64], kernel: &JumpKernel) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    kernel.accumulate_adjoint(p, 1.0, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointHistory {
    n_space: usize,
    n_time: usize,
    values: Vec<f64>,
    substeps: Vec<f64>,
}

impl AdjointHistory {
    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        &self.values[m * self.n_space..(m + 1) * self.n_space]
    }

    pub fn initial(&self) -> &[f64] {
        self.slice(0)
    }

    pub fn bootstrap_len(&self) -> usize {
        self.substeps.len() / self.n_space - 1
    }

    /// Euler substep multiplier `μ^s`, `s = 0..=K`; `μ^0 = p^0`.
    pub fn substep(&self, s: usize) -> &[f64] {
        &self.substeps[s * self.n_space..(s + 1) * self.n_space]
    }
}

/// Backward sweep from `p_T`.
pub fn solve_adjoint(
    p_t: &[f64],
    kernel: &JumpKernel,
    cc: &CcOperator,
    time: &TimeGrid,
    opts: &SolverOptions,
) -> Result<AdjointHistory> {
    let n = cc.len();
    if p_t.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p_t.len(),
        });
    }
    if kernel.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: kernel.len(),
        });
    }
    let stepper = Stepper::new(cc, time.dt(), opts.bootstrap_substeps, true)?;
    let n_time = time.n_time();
    let dt = stepper.dt;
    let tau = stepper.substep_dt;
    let k = stepper.substeps;

    let mut values = vec![0.0; (n_time + 1) * n];
    values[n_time * n..].copy_from_slice(p_t);

    // Mᵀ p^{N_T−1} = p_T.
    {
        let slot = &mut values[(n_time - 1) * n..n_time * n];
        slot.copy_from_slice(p_t);
        stepper.bdf2.solve_in_place(slot)?;
    }

    // Right-hand side shared by the BDF2 sweep (m ≥ 1) and the bootstrap (m = 0).
    let rhs_for = |values: &[f64], m: usize, out: &mut [f64]| {
        let next = &values[(m + 1) * n..(m + 2) * n];
        for (o, &v) in out.iter_mut().zip(next) {
            *o = 4.0 * v;
        }
        kernel.accumulate_adjoint(next, 4.0 * dt, out);
        if m + 2 < n_time {
            let next2 = &values[(m + 2) * n..(m + 3) * n];
            for (o, &v) in out.iter_mut().zip(next2) {
                *o -= v;
            }
            kernel.accumulate_adjoint(next2, -2.0 * dt, out);
        }
    };

    let mut rhs = vec![0.0; n];
    for m in (1..n_time - 1).rev() {
        rhs_for(&values, m, &mut rhs);
        stepper.bdf2.solve_in_place(&mut rhs)?;
        values[m * n..(m + 1) * n].copy_from_slice(&rhs);
    }

    let mut substeps = vec![0.0; (k + 1) * n];
    rhs_for(&values, 0, &mut rhs);
    stepper.euler.solve_in_place(&mut rhs)?;
    substeps[k * n..].copy_from_slice(&rhs);
    for s in (1..k).rev() {
        let (head, tail) = substeps.split_at_mut((s + 1) * n);
        let next = &tail[..n];
        let out = &mut head[s * n..];
        out.copy_from_slice(next);
        kernel.accumulate_adjoint(next, tau, out);
        stepper.euler.solve_in_place(out)?;
    }
    // μ^0 = (I + τQ̃) μ^1 − (I + 2δt Q̃) p^1: f^0 enters both the first
    // substep and, as f^{m−1}, the first BDF2 step.
    {
        let (head, tail) = substeps.split_at_mut(n);
        head.copy_from_slice(&tail[..n]);
        kernel.accumulate_adjoint(&tail[..n], tau, head);
        let p1 = &values[n..2 * n];
        for (o, &v) in head.iter_mut().zip(p1) {
            *o -= v;
        }
        kernel.accumulate_adjoint(p1, -2.0 * dt, head);
    }
    values[..n].copy_from_slice(&substeps[..n]);

    Ok(AdjointHistory {
        n_space: n,
        n_time,
        values,
        substeps,
    })
}

/// Gradient of the objective with respect to the rates, assembled from a
/// forward and an adjoint history:
///
/// ```text
/// ∂J/∂α_j = −[ 2δt Σ_{m=1}^{N_T−1} G_j(p^m, 2f^m − f^{m−1}) + τ Σ_{s=1}^{K} G_j(μ^s, g^{s−1}) ]
/// G_j(p, u) = h Σ_d θ_jd (c_d − c_0),   c_d = Σ_i p_i u_{i−d}
/// ```
pub fn rate_gradient(
    basis: &SplineBasis,
    grid: &TorusGrid,
    forward: &DensityHistory,
    adjoint: &AdjointHistory,
) -> Result<Vec<f64>> {
    let n = grid.len();
    if forward.n_space() != n || adjoint.n_space() != n || basis.n_space() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: forward.n_space(),
        });
    }
    if forward.n_time() != adjoint.n_time() || forward.bootstrap_len() != adjoint.bootstrap_len() {
        return Err(Error::DimensionMismatch {
            expected: forward.n_time(),
            got: adjoint.n_time(),
        });
    }
    // Shifts where at least one hat is nonzero, plus d = 0 for the loss term.
    let mut shifts: Vec<usize> = (0..n)
        .filter(|&d| d == 0 || (0..basis.n_theta()).any(|j| basis.sample(j, d) != 0.0))
        .collect();
    shifts.dedup();

    let mut corr = vec![0.0; n];
    let mut add = |p: &[f64], u: &[f64], weight: f64| {
        for &d in &shifts {
            let mut c = 0.0;
            for (&pi, &ui) in p[d..].iter().zip(&u[..n - d]) {
                c += pi * ui;
            }
            for (&pi, &ui) in p[..d].iter().zip(&u[n - d..]) {
                c += pi * ui;
            }
            corr[d] += weight * c;
        }
    };

    let dt = forward.dt();
    let mut extrap = vec![0.0; n];
    for m in 1..forward.n_time() {
        for ((e, &a), &b) in extrap.iter_mut().zip(forward.slice(m)).zip(forward.slice(m - 1)) {
            *e = 2.0 * a - b;
        }
        add(adjoint.slice(m), &extrap, 2.0 * dt);
    }
    let k = forward.bootstrap_len();
    let tau = dt / k as f64;
    for s in 1..=k {
        add(adjoint.substep(s), forward.substep(s - 1), tau);
    }

    let h = grid.h();
    Ok((0..basis.n_theta())
        .map(|j| {
            -h * shifts
                .iter()
                .map(|&d| basis.sample(j, d) * (corr[d] - corr[0]))
                .sum::<f64>()
        })
        .collect())
}
