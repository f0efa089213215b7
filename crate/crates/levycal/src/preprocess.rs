//! Mapping raw log-returns onto the torus.
//!
//! The band `[band_lo, band_hi]` is stretched onto one period of the torus.
//! Mean and variance of the raw data become the model drift and diffusion in
//! torus units; only `diffusion_fraction` of the variance is attributed to the
//! Brownian part, the rest is left for the jumps to explain.

use serde::{Deserialize, Serialize};

use levycal_core::TorusGrid;

use crate::error::{CliError, Result};

/// What to do with values outside the band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfBand {
    Wrap,
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessSpec {
    pub band_lo: f64,
    pub band_hi: f64,
    pub diffusion_fraction: f64,
    pub out_of_band: OutOfBand,
}

impl PreprocessSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_lo < self.band_hi) || !self.band_lo.is_finite() || !self.band_hi.is_finite() {
            return Err(CliError::config("preprocessing band needs band_lo < band_hi"));
        }
        if !(self.diffusion_fraction > 0.0 && self.diffusion_fraction <= 1.0) {
            return Err(CliError::config("diffusion_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Length of one torus period per raw unit.
    pub fn scale(&self, period: f64) -> f64 {
        period / (self.band_hi - self.band_lo)
    }
}

/// Drift and diffusion in torus units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorusMoments {
    pub b_torus: f64,
    /// `σ²` of the model, i.e. the attributed share of the torus variance.
    pub sigma2_torus: f64,
    /// Coefficient of the Laplacian, `σ²/2`.
    pub laplace_coefficient: f64,
}

/// Converts raw mean and variance with the band scaling.
pub fn torus_moments(raw_mean: f64, raw_variance: f64, spec: &PreprocessSpec, period: f64) -> Result<TorusMoments> {
    spec.validate()?;
    if !(raw_variance > 0.0) || !raw_variance.is_finite() {
        return Err(CliError::config("empirical variance is zero; nothing to calibrate"));
    }
    let scale = spec.scale(period);
    let sigma2_torus = spec.diffusion_fraction * raw_variance * scale * scale;
    Ok(TorusMoments {
        b_torus: raw_mean * scale,
        sigma2_torus,
        laplace_coefficient: 0.5 * sigma2_torus,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preprocessed {
    #[serde(skip)]
    pub values: Vec<f64>,
    pub raw_count: usize,
    pub raw_mean: f64,
    /// Unbiased sample variance of the raw values.
    pub raw_variance: f64,
    #[serde(flatten)]
    pub moments: TorusMoments,
    pub below_band: usize,
    pub above_band: usize,
    pub wrapped: usize,
    pub discarded: usize,
}

/// Rescales raw returns onto `grid`'s torus and derives the model drift and
/// diffusion. Moments are computed from all raw values, before any discard.
pub fn preprocess_financial(raw: &[f64], spec: &PreprocessSpec, grid: &TorusGrid) -> Result<Preprocessed> {
    spec.validate()?;
    if raw.len() < 2 {
        return Err(CliError::config("need at least two raw values"));
    }
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let variance = raw.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let moments = torus_moments(mean, variance, spec, grid.period())?;

    let scale = spec.scale(grid.period());
    let mut values = Vec::with_capacity(raw.len());
    let (mut below, mut above) = (0, 0);
    for &x in raw {
        let outside = x < spec.band_lo || x > spec.band_hi;
        if x < spec.band_lo {
            below += 1;
        } else if x > spec.band_hi {
            above += 1;
        }
        if outside && spec.out_of_band == OutOfBand::Discard {
            continue;
        }
        values.push(grid.project(grid.omega_a() + (x - spec.band_lo) * scale));
    }
    let outside = below + above;
    let (wrapped, discarded) = match spec.out_of_band {
        OutOfBand::Wrap => (outside, 0),
        OutOfBand::Discard => (0, outside),
    };
    if values.is_empty() {
        return Err(CliError::config("every value lies outside the preprocessing band"));
    }
    Ok(Preprocessed {
        values,
        raw_count: raw.len(),
        raw_mean: mean,
        raw_variance: variance,
        moments,
        below_band: below,
        above_band: above,
        wrapped,
        discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(out_of_band: OutOfBand) -> PreprocessSpec {
        PreprocessSpec {
            band_lo: -0.03,
            band_hi: 0.03,
            diffusion_fraction: 0.25,
            out_of_band,
        }
    }

    #[test]
    fn reference_inputs() {
        let period = 2.0 * std::f64::consts::PI;
        let m = torus_moments(6.787e-4, 8.655e-5, &spec(OutOfBand::Wrap), period).unwrap();
        // π/0.03 per raw unit.
        assert!((m.b_torus - 0.071_073_3).abs() < 1e-7);
        assert!((m.sigma2_torus - 0.237_282).abs() < 1e-6);
        assert!((m.laplace_coefficient - 0.118_641).abs() < 1e-6);
    }

    #[test]
    fn symmetric_band_is_a_pure_rescale() {
        let grid = TorusGrid::circle(64).unwrap();
        let raw = [0.0, 0.015, -0.015, 0.029];
        let p = preprocess_financial(&raw, &spec(OutOfBand::Wrap), &grid).unwrap();
        let k = std::f64::consts::PI / 0.03;
        for (x, y) in raw.iter().zip(&p.values) {
            assert!((x * k - y).abs() < 1e-12);
        }
        assert_eq!(p.wrapped, 0);
    }

    #[test]
    fn out_of_band_values() {
        let grid = TorusGrid::circle(64).unwrap();
        let raw = [0.01, -0.02, -0.04, -0.05, 0.0, -0.031];
        let wrap = preprocess_financial(&raw, &spec(OutOfBand::Wrap), &grid).unwrap();
        assert_eq!((wrap.below_band, wrap.above_band, wrap.wrapped), (3, 0, 3));
        assert_eq!(wrap.values.len(), 6);
        // -0.04 lands at π - π/3.
        let want = std::f64::consts::PI * (1.0 - 1.0 / 3.0);
        assert!((wrap.values[2] - want).abs() < 1e-12);
        assert!(wrap.values.iter().all(|v| grid.omega_a() <= *v && *v < grid.omega_b()));

        let drop = preprocess_financial(&raw, &spec(OutOfBand::Discard), &grid).unwrap();
        assert_eq!((drop.discarded, drop.values.len()), (3, 3));
        assert_eq!(drop.moments, wrap.moments);
    }

    #[test]
    fn degenerate_inputs() {
        let grid = TorusGrid::circle(64).unwrap();
        assert!(preprocess_financial(&[0.0; 10], &spec(OutOfBand::Wrap), &grid).is_err());
        assert!(preprocess_financial(&[0.01], &spec(OutOfBand::Wrap), &grid).is_err());
        let mut bad = spec(OutOfBand::Wrap);
        bad.diffusion_fraction = 0.0;
        assert!(preprocess_financial(&[0.0, 0.01], &bad, &grid).is_err());
    }
}
