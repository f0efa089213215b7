//! Cyclic tridiagonal systems.
//!
//! The periodic Chang-Cooper operator gives matrices with one extra entry in
//! each off-diagonal corner. They are solved by a Thomas sweep on the
//! tridiagonal part plus a Sherman-Morrison correction for the corners, with
//! the factorization reused across time steps.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `n × n` matrix with entries on the three central diagonals plus the corners
/// `(0, n−1)` and `(n−1, 0)`.
///
/// `lower[i]` is the entry at `(i, i−1 mod n)`, `upper[i]` at `(i, i+1 mod n)`,
/// so `lower[0]` and `upper[n−1]` are the corners.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicTridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CyclicTridiagonal {
    pub fn constant(n: usize, lower: f64, diag: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower; n],
            diag: vec![diag; n],
            upper: vec![upper; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn transpose(&self) -> Self {
        let n = self.len();
        Self {
            lower: (0..n).map(|i| self.upper[(i + n - 1) % n]).collect(),
            diag: self.diag.clone(),
            upper: (0..n).map(|i| self.lower[(i + 1) % n]).collect(),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| self.lower[i] * x[(i + n - 1) % n] + self.diag[i] * x[i] + self.upper[i] * x[(i + 1) % n])
            .collect()
    }

    /// Dense copy, row-major. Only meant for checks and small problems.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + (i + n - 1) % n] += self.lower[i];
            m[i * n + i] += self.diag[i];
            m[i * n + (i + 1) % n] += self.upper[i];
        }
        m
    }

    pub fn factor(&self) -> Result<CyclicFactor> {
        CyclicFactor::new(self)
    }
}

/// Precomputed Sherman-Morrison factorization of a [`CyclicTridiagonal`].
#[derive(Debug, Clone)]
pub struct CyclicFactor {
    lower: Vec<f64>,
    // Thomas sweep of the corner-modified tridiagonal part.
    upper_mod: Vec<f64>,
    inv_pivot: Vec<f64>,
    // Solution of T z = u and the scalars of the rank-one update.
    z: Vec<f64>,
    v_first: f64,
    v_last: f64,
    denom: f64,
}

impl CyclicFactor {
    fn new(m: &CyclicTridiagonal) -> Result<Self> {
        let n = m.len();
        if n < 3 {
            return Err(Error::param("n", "cyclic solve needs n >= 3"));
        }
        let corner_top = m.lower[0];
        let corner_bottom = m.upper[n - 1];
        let gamma = -m.diag[0];
        if gamma == 0.0 {
            return Err(Error::SingularSystem { row: 0, pivot: 0.0 });
        }
        let mut diag = m.diag.clone();
        diag[0] -= gamma;
        diag[n - 1] -= corner_top * corner_bottom / gamma;

        let mut upper_mod = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut pivot = diag[0];
        for i in 0..n {
            if i > 0 {
                pivot = diag[i] - m.lower[i] * upper_mod[i - 1];
            }
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::SingularSystem { row: i, pivot });
            }
            inv_pivot[i] = 1.0 / pivot;
            upper_mod[i] = if i + 1 < n { m.upper[i] * inv_pivot[i] } else { 0.0 };
        }

        let mut factor = Self {
            lower: m.lower.clone(),
            upper_mod,
            inv_pivot,
            z: Vec::new(),
            v_first: 1.0,
            v_last: corner_top / gamma,
            denom: 1.0,
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = corner_bottom;
        factor.thomas(&mut u);
        let denom = 1.0 + factor.v_first * u[0] + factor.v_last * u[n - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SingularSystem {
                row: n - 1,
                pivot: denom,
            });
        }
        factor.z = u;
        factor.denom = denom;
        Ok(factor)
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    fn thomas(&self, x: &mut [f64]) {
        let n = x.len();
        x[0] *= self.inv_pivot[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i] * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.upper_mod[i] * x[i + 1];
        }
    }

    /// Solves in place; `rhs` becomes the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<()> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        self.thomas(rhs);
        let scale = (self.v_first * rhs[0] + self.v_last * rhs[n - 1]) / self.denom;
        for (x, z) in rhs.iter_mut().zip(&self.z) {
            *x -= scale * z;
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

/// Gaussian elimination with partial pivoting on a dense row-major matrix.
/// Used as an independent reference for the structured solvers.
pub fn dense_solve(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: a.len(),
        });
    }
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| m[r * n + col].abs().total_cmp(&m[s * n + col].abs()))
            .unwrap_or(col);
        if m[piv * n + col] == 0.0 {
            return Err(Error::SingularSystem { row: col, pivot: 0.0 });
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    m[r * n + k] -= f * m[col * n + k];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r * n + k] * x[k]).sum();
        x[r] = (x[r] - s) / m[r * n + r];
    }
    Ok(x)
}
