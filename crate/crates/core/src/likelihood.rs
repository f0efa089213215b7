//! Floored log-likelihood of the terminal samples and the AIC score.

use alloc::vec::Vec;

use crate::adjoint::SampleSet;
use crate::error::{Error, Result};
use crate::math;

/// Density floor inside the logarithm.
pub const DEFAULT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    /// `J_ε = (1/L) Σ_l log max(ε, f(X_l))`.
    pub j_value: f64,
    /// Samples whose cell density is below `ε`.
    pub floored_count: usize,
    /// `log max(ε, f(X_l))` per sample, in input order, when requested.
    pub per_sample: Option<Vec<f64>>,
}

/// Evaluates `J_ε` from the terminal density at the snapped sample cells.
pub fn evaluate_objective(f_t: &[f64], samples: &SampleSet, eps: f64) -> Result<ObjectiveValue> {
    objective(f_t, samples, eps, false)
}

/// Like [`evaluate_objective`], also keeping per-sample contributions.
pub fn evaluate_objective_detailed(f_t: &[f64], samples: &SampleSet, eps: f64) -> Result<ObjectiveValue> {
    objective(f_t, samples, eps, true)
}

fn objective(f_t: &[f64], samples: &SampleSet, eps: f64, keep: bool) -> Result<ObjectiveValue> {
    if f_t.len() != samples.n_space() {
        return Err(Error::DimensionMismatch {
            expected: samples.n_space(),
            got: f_t.len(),
        });
    }
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let log_floor = |f: f64| math::ln(if f < eps { eps } else { f });
    // Summing by cell makes the value independent of sample order.
    let mut total = 0.0;
    let mut floored_count = 0;
    for (&f, &c) in f_t.iter().zip(samples.counts()) {
        if c == 0 {
            continue;
        }
        total += c as f64 * log_floor(f);
        if f < eps {
            floored_count += c as usize;
        }
    }
    let per_sample = keep.then(|| samples.slots().iter().map(|&s| log_floor(f_t[s])).collect());
    Ok(ObjectiveValue {
        j_value: total / samples.len() as f64,
        floored_count,
        per_sample,
    })
}

/// Complexity penalty used by [`aic_score`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AicPenalty {
    /// `L·J − log N_Θ`.
    #[default]
    LogCount,
    /// Classical `L·J − N_Θ`.
    Count,
}

/// AIC score of a converged fit; larger is better.
pub fn aic_score(j_star: f64, n_samples: usize, n_theta: usize, penalty: AicPenalty) -> Result<f64> {
    if n_theta == 0 {
        return Err(Error::param("n_theta", "must be at least 1"));
    }
    let data = n_samples as f64 * j_star;
    Ok(match penalty {
        AicPenalty::LogCount => data - math::ln(n_theta as f64),
        AicPenalty::Count => data - n_theta as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusGrid;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn objective_examples() {
        let grid = TorusGrid::new(0.0, 4.0, 4).unwrap();
        let one = SampleSet::from_values(&[1.0], &grid).unwrap();
        let v = evaluate_objective(&[0.2, 1.0, 0.3, 0.4], &one, DEFAULT_EPS).unwrap();
        assert_eq!(v.j_value, 0.0);
        assert_eq!(v.floored_count, 0);

        let e = core::f64::consts::E;
        let two = SampleSet::from_values(&[0.0, 3.0], &grid).unwrap();
        let v = evaluate_objective(&[e, 0.1, 0.1, e], &two, DEFAULT_EPS).unwrap();
        assert!((v.j_value - 1.0).abs() < 1e-15);

        let v = evaluate_objective_detailed(&[0.0, 0.0, 0.0, 0.0], &one, DEFAULT_EPS).unwrap();
        assert!((v.j_value - (-27.631_021_115_928_547)).abs() < 1e-12);
        assert_eq!(v.floored_count, 1);
        assert_eq!(v.per_sample.unwrap().len(), 1);
        assert!(v.j_value >= math::ln(DEFAULT_EPS));
    }

    #[test]
    fn aic_examples() {
        assert_eq!(aic_score(0.0, 100, 1, AicPenalty::LogCount).unwrap(), 0.0);
        let mut prev = f64::INFINITY;
        for n in 1..12 {
            let s = aic_score(-1.3, 500, n, AicPenalty::LogCount).unwrap();
            assert!(s < prev);
            prev = s;
        }
        assert_eq!(aic_score(-1.0, 10, 3, AicPenalty::Count).unwrap(), -13.0);
        assert!(aic_score(0.0, 1, 0, AicPenalty::LogCount).is_err());
    }

    proptest! {
        #[test]
        fn permutation_and_duplicate_identity(
            raw in proptest::collection::vec(-3.0f64..3.0, 1..60),
            pick in 0usize..60,
        ) {
            let grid = TorusGrid::circle(24).unwrap();
            let f: alloc::vec::Vec<f64> = (0..24).map(|i| 0.05 + (i as f64 * 0.7).sin().abs()).collect();
            let base = SampleSet::from_values(&raw, &grid).unwrap();
            let j = evaluate_objective(&f, &base, DEFAULT_EPS).unwrap().j_value;

            let mut rev = raw.clone();
            rev.reverse();
            let jr = evaluate_objective(&f, &SampleSet::from_values(&rev, &grid).unwrap(), DEFAULT_EPS)
                .unwrap()
                .j_value;
            prop_assert!((j - jr).abs() < 1e-14);

            let dup = raw[pick % raw.len()];
            let mut more = raw.clone();
            more.push(dup);
            let jd = evaluate_objective(&f, &SampleSet::from_values(&more, &grid).unwrap(), DEFAULT_EPS)
                .unwrap()
                .j_value;
            let cell = f[grid.nearest_slot(grid.project(dup))];
            let expected = (math::ln(cell) - j) / (raw.len() as f64 + 1.0);
            prop_assert!(((jd - j) - expected).abs() < 1e-13);
            let _ = vec![0u8; 0];
        }
    }
}
