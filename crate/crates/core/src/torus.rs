//! Torus geometry, space/time grids, the hat-function basis and the von Mises
//! initial density.
//!
//! Grid values are stored in slots `k = 0..N` with `x_k = Ωa + k·h`. Slot 0 is
//! the point that the one-based labelling `i = 1..N` calls `x_N`, so both
//! labellings describe the same periodic point set.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math;

/// Uniform periodic mesh on `[Ωa, Ωb)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid {
    omega_a: f64,
    omega_b: f64,
    n_space: usize,
    h: f64,
}

impl TorusGrid {
    pub fn new(omega_a: f64, omega_b: f64, n_space: usize) -> Result<Self> {
        if !(omega_a.is_finite() && omega_b.is_finite()) || omega_b <= omega_a {
            return Err(Error::param("omega", "need finite omega_a < omega_b"));
        }
        if n_space < 3 {
            return Err(Error::param("n_space", "need at least 3 grid cells"));
        }
        Ok(Self {
            omega_a,
            omega_b,
            n_space,
            h: (omega_b - omega_a) / n_space as f64,
        })
    }

    /// The symmetric torus `[-π, π)` used throughout the experiments.
    pub fn circle(n_space: usize) -> Result<Self> {
        Self::new(-PI, PI, n_space)
    }

    pub fn omega_a(&self) -> f64 {
        self.omega_a
    }

    pub fn omega_b(&self) -> f64 {
        self.omega_b
    }

    pub fn len(&self) -> usize {
        self.n_space
    }

    pub fn is_empty(&self) -> bool {
        self.n_space == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Period `K = Ωb − Ωa`.
    pub fn period(&self) -> f64 {
        self.omega_b - self.omega_a
    }

    pub fn point(&self, slot: usize) -> f64 {
        self.omega_a + slot as f64 * self.h
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_space).map(|k| self.point(k)).collect()
    }

    /// Circular index map: `idx(i + N) == idx(i)`.
    pub fn idx(&self, i: isize) -> usize {
        i.rem_euclid(self.n_space as isize) as usize
    }

    pub fn project(&self, y: f64) -> f64 {
        project_to_torus(y, self)
    }

    /// Representative of `s` in the centered period `[-K/2, K/2)`; used for
    /// jump sizes and hat distances.
    pub fn centered(&self, s: f64) -> f64 {
        let k = self.period();
        wrap_into(s + 0.5 * k, k) - 0.5 * k
    }

    /// Jump size carried by a shift of `d` grid cells.
    pub fn shift_size(&self, d: usize) -> f64 {
        self.centered(d as f64 * self.h)
    }

    /// Nearest grid slot of a point; exact midpoints go to the lower slot.
    pub fn nearest_slot(&self, x: f64) -> usize {
        let u = (self.project(x) - self.omega_a) / self.h;
        let k = math::ceil(u - 0.5);
        let k = if k < 0.0 { 0 } else { k as usize };
        if k >= self.n_space {
            k - self.n_space
        } else {
            k
        }
    }
}

/// `v mod k` in `[0, k)`, robust to the rounding case where `v` is a tiny
/// negative number.
fn wrap_into(v: f64, k: f64) -> f64 {
    let mut r = v % k;
    if r < 0.0 {
        r += k;
    }
    if r >= k {
        r -= k;
    }
    r
}

/// Group homomorphism `ℝ → [Ωa, Ωb)`, `y ↦ Ωa + ((y − Ωa) mod K)`.
pub fn project_to_torus(y: f64, grid: &TorusGrid) -> f64 {
    if y >= grid.omega_a && y < grid.omega_b {
        return y;
    }
    grid.omega_a + wrap_into(y - grid.omega_a, grid.period())
}

/// Uniform time grid `t_m = m·δt`, `m = 0..=N_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n_time: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_time: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::param("t_final", "must be positive"));
        }
        if n_time < 2 {
            return Err(Error::param("n_time", "need at least 2 time steps"));
        }
        Ok(Self {
            t_final,
            n_time,
            dt: t_final / n_time as f64,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

/// Drift and diffusion in the forms used by the flux: `B = −b`, `C = σ²/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelCoefficients {
    drift_b: f64,
    sigma2: f64,
}

impl ModelCoefficients {
    pub fn new(drift_b: f64, sigma2: f64) -> Result<Self> {
        if !drift_b.is_finite() {
            return Err(Error::param("drift_b", "must be finite"));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::param("sigma2", "the solver needs sigma2 > 0"));
        }
        Ok(Self { drift_b, sigma2 })
    }

    pub fn drift_b(&self) -> f64 {
        self.drift_b
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn adv(&self) -> f64 {
        -self.drift_b
    }

    pub fn diff(&self) -> f64 {
        0.5 * self.sigma2
    }
}

/// First-order spline basis of triangular hats with common half-width `Δ`.
///
/// `samples` holds `θ_jd = Θ_j(s_d)` row-major (`j` major), where `s_d` is the
/// jump size of a shift by `d` grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    centers: Vec<f64>,
    delta: f64,
    period: f64,
    n_space: usize,
    samples: Vec<f64>,
}

impl SplineBasis {
    /// Hats centered at `centers`, which must be spaced by exactly `delta`.
    pub fn new(centers: Vec<f64>, delta: f64, grid: &TorusGrid) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::param("centers", "need at least one center"));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::param("delta", "must be positive"));
        }
        if 2.0 * delta > grid.period() {
            return Err(Error::param("delta", "hat support exceeds the torus"));
        }
        let tol = 1e-9 * delta.max(1.0);
        if centers.windows(2).any(|w| ((w[1] - w[0]) - delta).abs() > tol) {
            return Err(Error::NonUniformCenters { delta });
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("centers", "must be finite"));
        }
        let n = grid.len();
        let mut samples = vec![0.0; centers.len() * n];
        for (j, &c) in centers.iter().enumerate() {
            for d in 0..n {
                samples[j * n + d] = hat(grid.centered(grid.shift_size(d) - c), delta);
            }
        }
        Ok(Self {
            centers,
            delta,
            period: grid.period(),
            n_space: n,
            samples,
        })
    }

    /// `n_theta` hats equally spaced strictly inside `(lo, hi)`:
    /// `θ_j = lo + jΔ`, `Δ = (hi − lo)/(n_theta + 1)`.
    pub fn interval(n_theta: usize, lo: f64, hi: f64, grid: &TorusGrid) -> Result<Self> {
        if n_theta == 0 {
            return Err(Error::param("n_theta", "must be at least 1"));
        }
        if !(hi > lo) {
            return Err(Error::param("interval", "need lo < hi"));
        }
        let delta = (hi - lo) / (n_theta + 1) as f64;
        let centers = (1..=n_theta).map(|j| lo + j as f64 * delta).collect();
        Self::new(centers, delta, grid)
    }

    /// `n_theta` hats tiling the whole torus: `θ_j = Ωa + (j−1)Δ`,
    /// `Δ = K/n_theta`.
    pub fn covering(n_theta: usize, grid: &TorusGrid) -> Result<Self> {
        if n_theta < 2 {
            return Err(Error::param("n_theta", "a covering basis needs at least 2 hats"));
        }
        let delta = grid.period() / n_theta as f64;
        let centers = (0..n_theta).map(|j| grid.omega_a() + j as f64 * delta).collect();
        Self::new(centers, delta, grid)
    }

    pub fn n_theta(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    /// Sampled hat `j` over all shifts.
    pub fn row(&self, j: usize) -> &[f64] {
        &self.samples[j * self.n_space..(j + 1) * self.n_space]
    }

    pub fn sample(&self, j: usize, d: usize) -> f64 {
        self.samples[j * self.n_space + d]
    }

    /// `Θ_j(s)` with torus wrap.
    pub fn eval(&self, j: usize, s: f64) -> f64 {
        let k = self.period;
        let r = wrap_into(s - self.centers[j] + 0.5 * k, k) - 0.5 * k;
        hat(r, self.delta)
    }

    /// Mid-point integral `h Σ_d θ_jd` of hat `j`.
    pub fn quadrature_mass(&self, j: usize, h: f64) -> f64 {
        h * self.row(j).iter().sum::<f64>()
    }
}

fn hat(r: f64, delta: f64) -> f64 {
    (1.0 - r.abs() / delta).max(0.0)
}

/// Von Mises density on the grid, normalized numerically so that
/// `h Σ_k f_k = 1`.
///
/// The peak sits at `μ`. The exponent is shifted by `−κ` so large
/// concentrations do not overflow.
pub fn von_mises_density(grid: &TorusGrid, mu: f64, kappa: f64) -> Result<Vec<f64>> {
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::param("kappa", "must be finite and nonnegative"));
    }
    if !mu.is_finite() {
        return Err(Error::param("mu", "must be finite"));
    }
    let scale = 2.0 * PI / grid.period();
    let mut f: Vec<f64> = grid
        .points()
        .iter()
        .map(|&x| math::exp(kappa * (math::cos(scale * (x - mu)) - 1.0)))
        .collect();
    let mass = grid.h() * f.iter().sum::<f64>();
    for v in &mut f {
        *v /= mass;
    }
    Ok(f)
}
