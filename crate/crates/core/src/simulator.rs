//! Monte Carlo terminal values of jump-diffusions, and the wrapped bi-gamma
//! Lévy density used as a reference.
//!
//! Samples are drawn in fixed-size chunks; chunk `c` uses a ChaCha8 stream
//! seeded by the run seed with stream number `c`, so the output depends only
//! on `(seed, chunk_size)`.

use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Poisson, StandardNormal};

use crate::adjoint::SampleSet;
use crate::error::{Error, Result};
use crate::math;
use crate::torus::{SplineBasis, TorusGrid};

pub const DEFAULT_CHUNK_SIZE: usize = 4096;

/// Jump part of the simulated process.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpLaw {
    /// Compound Poisson with Lévy density `Σ_j α_j Θ_j`.
    CompoundPoisson { rates: Vec<f64> },
    /// `Y⁺ − Y⁻` with independent gamma subordinators, Lévy density
    /// `A e^{−β|s|}/|s|`.
    BiGamma { shape: f64, rate: f64 },
}

/// Law of `Y(0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw {
    Point(f64),
    /// Von Mises on the torus, the law of the solver's initial density.
    VonMises {
        mu: f64,
        kappa: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub jumps: JumpLaw,
    pub drift_b: f64,
    pub sigma2: f64,
    pub t_final: f64,
    pub sample_count: usize,
    pub seed: u64,
    pub initial: InitialLaw,
    pub chunk_size: usize,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::param("sample_count", "must be at least 1"));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::param("sigma2", "must be finite and nonnegative"));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::param("t_final", "must be positive"));
        }
        if !self.drift_b.is_finite() {
            return Err(Error::param("drift_b", "must be finite"));
        }
        if self.chunk_size == 0 {
            return Err(Error::param("chunk_size", "must be at least 1"));
        }
        match &self.jumps {
            JumpLaw::CompoundPoisson { rates } => {
                if rates.iter().any(|a| !a.is_finite() || *a < 0.0) {
                    return Err(Error::param("rates", "must be finite and nonnegative"));
                }
            }
            JumpLaw::BiGamma { shape, rate } => {
                if !(*shape > 0.0 && shape.is_finite()) {
                    return Err(Error::param("gamma_shape", "must be positive"));
                }
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::param("gamma_rate", "must be positive"));
                }
            }
        }
        match self.initial {
            InitialLaw::Point(x) if !x.is_finite() => Err(Error::param("initial", "must be finite")),
            InitialLaw::VonMises { kappa, mu } if !(kappa >= 0.0) || !mu.is_finite() => {
                Err(Error::param("kappa", "must be nonnegative"))
            }
            _ => Ok(()),
        }
    }
}

/// Unwrapped terminal values and, for compound Poisson, the jump counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub values: Vec<f64>,
    pub jump_counts: Vec<u64>,
}

/// Jump sampler for a hat mixture: component `j` with probability
/// `α_j/Σα`, then `θ_j + Δ(U₁ + U₂ − 1)`.
struct HatMixture<'a> {
    centers: &'a [f64],
    delta: f64,
    pick: Option<WeightedIndex<f64>>,
    count: Option<Poisson<f64>>,
}

impl<'a> HatMixture<'a> {
    fn new(rates: &[f64], basis: &'a SplineBasis, t_final: f64) -> Result<Self> {
        if rates.len() != basis.n_theta() {
            return Err(Error::DimensionMismatch {
                expected: basis.n_theta(),
                got: rates.len(),
            });
        }
        let total: f64 = rates.iter().sum();
        let lambda = total * basis.delta();
        let (pick, count) = if lambda > 0.0 {
            let pick = WeightedIndex::new(rates).map_err(|_| Error::param("rates", "invalid weights"))?;
            let count =
                Poisson::new(lambda * t_final).map_err(|_| Error::param("rates", "jump intensity out of range"))?;
            (Some(pick), Some(count))
        } else {
            (None, None)
        };
        Ok(Self {
            centers: basis.centers(),
            delta: basis.delta(),
            pick,
            count,
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, u64) {
        let (Some(pick), Some(count)) = (&self.pick, &self.count) else {
            return (0.0, 0);
        };
        let n = count.sample(rng) as u64;
        let mut total = 0.0;
        for _ in 0..n {
            let j = pick.sample(rng);
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            total += self.centers[j] + self.delta * (u1 + u2 - 1.0);
        }
        (total, n)
    }
}

/// Best-Fisher rejection sampler for the von Mises angle with mean 0.
fn von_mises_angle<R: Rng + ?Sized>(rng: &mut R, kappa: f64) -> f64 {
    use core::f64::consts::PI;
    if kappa < 1e-8 {
        return PI * (2.0 * rng.random::<f64>() - 1.0);
    }
    let tau = 1.0 + math::sqrt(1.0 + 4.0 * kappa * kappa);
    let rho = (tau - math::sqrt(2.0 * tau)) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = math::cos(PI * u1);
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || math::ln(c / u2) + 1.0 - c >= 0.0 {
            let theta = math::acos(f.clamp(-1.0, 1.0));
            return if rng.random::<f64>() < 0.5 { -theta } else { theta };
        }
    }
}

fn initial_value<R: Rng + ?Sized>(rng: &mut R, law: InitialLaw, period: f64) -> f64 {
    match law {
        InitialLaw::Point(x) => x,
        InitialLaw::VonMises { mu, kappa } => mu + von_mises_angle(rng, kappa) * period / (2.0 * core::f64::consts::PI),
    }
}

/// Draws unwrapped terminal values `Y(T)`.
///
/// `basis` is required for compound Poisson jumps; `period` is the torus
/// length used to scale a von Mises initial law.
pub fn simulate(spec: &SimulationSpec, basis: Option<&SplineBasis>, period: f64) -> Result<SimulationOutput> {
    spec.validate()?;
    let t = spec.t_final;
    let drift = spec.drift_b * t;
    let vol = math::sqrt(spec.sigma2 * t);
    let mut values = Vec::with_capacity(spec.sample_count);
    let mut jump_counts = Vec::new();

    enum Sampler<'a> {
        Hats(HatMixture<'a>),
        Gamma(Gamma<f64>),
    }
    let sampler = match &spec.jumps {
        JumpLaw::CompoundPoisson { rates } => {
            let basis = basis.ok_or(Error::param("basis", "compound Poisson jumps need a basis"))?;
            jump_counts.reserve(spec.sample_count);
            Sampler::Hats(HatMixture::new(rates, basis, t)?)
        }
        JumpLaw::BiGamma { shape, rate } => Sampler::Gamma(
            Gamma::new(shape * t, 1.0 / rate).map_err(|_| Error::param("gamma_shape", "invalid gamma law"))?,
        ),
    };

    let chunks = spec.sample_count.div_ceil(spec.chunk_size);
    for c in 0..chunks {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(c as u64);
        let len = spec.chunk_size.min(spec.sample_count - c * spec.chunk_size);
        for _ in 0..len {
            let y0 = initial_value(&mut rng, spec.initial, period);
            let jump = match &sampler {
                Sampler::Hats(h) => {
                    let (s, n) = h.sample(&mut rng);
                    jump_counts.push(n);
                    s
                }
                Sampler::Gamma(g) => g.sample(&mut rng) - g.sample(&mut rng),
            };
            let z: f64 = rng.sample(StandardNormal);
            values.push(y0 + jump + drift + vol * z);
        }
    }
    Ok(SimulationOutput { values, jump_counts })
}

/// Compound Poisson samples projected onto the torus and snapped to `grid`.
pub fn sample_compound_poisson(spec: &SimulationSpec, basis: &SplineBasis, grid: &TorusGrid) -> Result<SampleSet> {
    if !matches!(spec.jumps, JumpLaw::CompoundPoisson { .. }) {
        return Err(Error::param("kind", "expected compound Poisson jumps"));
    }
    let out = simulate(spec, Some(basis), grid.period())?;
    SampleSet::from_values(&out.values, grid)
}

/// Bi-directional gamma samples projected onto the torus and snapped to `grid`.
pub fn sample_bigamma(spec: &SimulationSpec, grid: &TorusGrid) -> Result<SampleSet> {
    if !matches!(spec.jumps, JumpLaw::BiGamma { .. }) {
        return Err(Error::param("kind", "expected bi-gamma jumps"));
    }
    let out = simulate(spec, None, grid.period())?;
    SampleSet::from_values(&out.values, grid)
}

/// How the bi-gamma Lévy density is folded onto the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WrapConvention {
    /// Sum over all images `s + nK`, `K` the torus period.
    #[default]
    Torus,
    /// `A e^{−β(|s|+π)} Φ(e^{−βπ}, 1, |s|/π)/π` with the Lerch series
    /// expanded, i.e. shifts of `π` on one side only.
    HalfPeriodSeries,
}

/// Wrapped density of `A e^{−β|s|}/|s|` at `s`, truncated once the
/// geometric tail bound falls below `tol`.
pub fn wrapped_bigamma_density(
    s: f64,
    shape: f64,
    rate: f64,
    grid: &TorusGrid,
    tol: f64,
    convention: WrapConvention,
) -> Result<f64> {
    if !(shape > 0.0) || !(rate > 0.0) {
        return Err(Error::param("gamma", "shape and rate must be positive"));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if !s.is_finite() {
        return Err(Error::param("s", "must be finite"));
    }
    match convention {
        WrapConvention::Torus => {
            let k = grid.period();
            let a = grid.centered(s).abs();
            if a == 0.0 {
                return Err(Error::param("s", "density is singular at 0"));
            }
            let g = |u: f64| shape * math::exp(-rate * u) / u;
            let ratio = math::exp(-rate * k);
            let mut total = g(a);
            let mut n = 1.0;
            loop {
                let right = a + n * k;
                let left = n * k - a;
                total += g(right) + g(left);
                // Remaining terms of both sides are bounded by a geometric series.
                let tail = (g(right + k) + g(left + k)) / (1.0 - ratio);
                if tail < tol {
                    break;
                }
                n += 1.0;
            }
            Ok(total)
        }
        WrapConvention::HalfPeriodSeries => {
            use core::f64::consts::PI;
            let a = s.abs();
            if a == 0.0 {
                return Err(Error::param("s", "density is singular at 0"));
            }
            let z = math::exp(-rate * PI);
            let front = shape * math::exp(-rate * (a + PI));
            let mut total = 0.0;
            let mut zn = 1.0;
            let mut n = 0.0;
            loop {
                total += zn / (a + n * PI);
                zn *= z;
                n += 1.0;
                let tail = front * zn / ((a + n * PI) * (1.0 - z));
                if tail < tol {
                    break;
                }
            }
            Ok(front * total)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    fn spec(jumps: JumpLaw, l: usize) -> SimulationSpec {
        SimulationSpec {
            jumps,
            drift_b: 0.0,
            sigma2: 0.02,
            t_final: 1.0,
            sample_count: l,
            seed: 17,
            initial: InitialLaw::Point(0.0),
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }

    fn mean_var(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn pure_diffusion_wrapped_mean() {
        let grid = TorusGrid::circle(64).unwrap();
        let basis = SplineBasis::interval(3, -1.0, 1.0, &grid).unwrap();
        let l = 20_000;
        let s = sample_compound_poisson(
            &spec(JumpLaw::CompoundPoisson { rates: vec![0.0; 3] }, l),
            &basis,
            &grid,
        )
        .unwrap();
        let (c, sn) = s
            .values()
            .iter()
            .fold((0.0, 0.0), |(c, sn), &x| (c + x.cos(), sn + x.sin()));
        let mean_angle = sn.atan2(c);
        assert!(mean_angle.abs() < 4.0 * 0.02f64.sqrt() / (l as f64).sqrt());
    }

    #[test]
    fn single_hat_jump_moments() {
        let grid = TorusGrid::circle(64).unwrap();
        let basis = SplineBasis::new(vec![0.0], 0.8, &grid).unwrap();
        let mut sp = spec(JumpLaw::CompoundPoisson { rates: vec![0.0] }, 1);
        sp.sigma2 = 0.0;
        // With a tiny horizon almost every path has 0 or 1 jumps; condition on 1.
        let l = 200_000;
        sp.t_final = 1.0;
        sp.sample_count = l;
        sp.jumps = JumpLaw::CompoundPoisson { rates: vec![1.0] };
        let out = simulate(&sp, Some(&basis), grid.period()).unwrap();
        let singles: Vec<f64> = out
            .values
            .iter()
            .zip(&out.jump_counts)
            .filter(|(_, &n)| n == 1)
            .map(|(&v, _)| v)
            .collect();
        let (m, v) = mean_var(&singles);
        let n = singles.len() as f64;
        let var = 0.64 / 6.0;
        assert!(m.abs() < 5.0 * (var / n).sqrt(), "mean {m}");
        // Var of the sample variance for the triangular law: (μ4 − σ⁴)/n, μ4 = Δ⁴/15.
        let se_var = ((0.8f64.powi(4) / 15.0 - var * var) / n).sqrt();
        assert!((v - var).abs() < 5.0 * se_var, "var {v} vs {var}");

        let lambda = 0.8;
        let (cm, _) = mean_var(&out.jump_counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
        assert!((cm - lambda).abs() < 5.0 * (lambda / l as f64).sqrt());
    }

    #[test]
    fn characteristic_function_matches_levy_exponent() {
        let grid = TorusGrid::circle(420).unwrap();
        let basis = SplineBasis::interval(5, -1.0, 1.0, &grid).unwrap();
        let rates = vec![3.0, 2.0, 1.0, 0.5, 0.25];
        let mut sp = spec(JumpLaw::CompoundPoisson { rates: rates.clone() }, 50_000);
        sp.drift_b = 0.3;
        let out = simulate(&sp, Some(&basis), grid.period()).unwrap();
        let l = out.values.len() as f64;
        let (re, im) = out
            .values
            .iter()
            .fold((0.0, 0.0), |(r, i), &y| (r + y.cos() / l, i + y.sin() / l));

        // ψ(1) = ib − σ²/2 + Σ_j α_j ∫ (e^{is} − 1) Θ_j(s) ds, by midpoint quadrature.
        let (mut psi_re, mut psi_im) = (-0.5 * sp.sigma2, sp.drift_b);
        let m = 200_000;
        let (lo, hi) = (-1.5, 1.5);
        let ds = (hi - lo) / m as f64;
        for k in 0..m {
            let s = lo + (k as f64 + 0.5) * ds;
            let nu: f64 = rates.iter().enumerate().map(|(j, a)| a * basis.eval(j, s)).sum();
            psi_re += nu * (s.cos() - 1.0) * ds;
            psi_im += nu * s.sin() * ds;
        }
        let mag = psi_re.exp();
        let (want_re, want_im) = (mag * psi_im.cos(), mag * psi_im.sin());
        let tol = 5.0 / l.sqrt();
        assert!((re - want_re).abs() < tol, "{re} vs {want_re}");
        assert!((im - want_im).abs() < tol, "{im} vs {want_im}");
    }

    #[test]
    fn bigamma_moments() {
        let l = 100_000;
        let out = simulate(&spec(JumpLaw::BiGamma { shape: 0.5, rate: 1.0 }, l), None, 2.0 * PI).unwrap();
        let (m, v) = mean_var(&out.values);
        let var = 2.0 * 0.5 + 0.02;
        assert!(m.abs() < 5.0 * (var / l as f64).sqrt());
        // Fourth central moment of Y⁺ − Y⁻ + N: 2·6A/β⁴ + 3var².
        let mu4 = 2.0 * 6.0 * 0.5 + 3.0 * var * var;
        assert!((v - var).abs() < 5.0 * ((mu4 - var * var) / l as f64).sqrt(), "{v}");
        assert!(out.jump_counts.is_empty());
    }

    #[test]
    fn gamma_skewness_shrinks_with_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut skew = |shape: f64| {
            let g = Gamma::new(shape, 1.0).unwrap();
            let x: Vec<f64> = (0..40_000).map(|_| g.sample(&mut rng)).collect();
            let (m, v) = mean_var(&x);
            x.iter().map(|y| ((y - m) / v.sqrt()).powi(3)).sum::<f64>() / x.len() as f64
        };
        assert!(skew(100.0) < skew(0.5));
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let grid = TorusGrid::circle(64).unwrap();
        let basis = SplineBasis::interval(3, -1.0, 1.0, &grid).unwrap();
        let mut sp = spec(
            JumpLaw::CompoundPoisson {
                rates: vec![1.0, 2.0, 0.5],
            },
            9000,
        );
        sp.initial = InitialLaw::VonMises { mu: 0.0, kappa: 400.0 };
        let a = simulate(&sp, Some(&basis), grid.period()).unwrap();
        let b = simulate(&sp, Some(&basis), grid.period()).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        sp.seed += 1;
        let c = simulate(&sp, Some(&basis), grid.period()).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn von_mises_sampler_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let kappa = 400.0;
        let x: Vec<f64> = (0..50_000).map(|_| von_mises_angle(&mut rng, kappa)).collect();
        let (m, v) = mean_var(&x);
        // For large κ the law is close to N(0, 1/κ); 1 − I1/I0 ≈ 1/(2κ).
        let mean_cos = x.iter().map(|t| t.cos()).sum::<f64>() / x.len() as f64;
        let want = 1.0 - 1.0 / (2.0 * kappa) - 1.0 / (8.0 * kappa * kappa);
        assert!(m.abs() < 5.0 * (v / x.len() as f64).sqrt());
        assert!((mean_cos - want).abs() < 5e-5, "{mean_cos} vs {want}");
        let flat: Vec<f64> = (0..20_000).map(|_| von_mises_angle(&mut rng, 0.0)).collect();
        assert!(flat.iter().all(|t| t.abs() <= PI));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut sp = spec(JumpLaw::BiGamma { shape: -1.0, rate: 1.0 }, 10);
        assert!(simulate(&sp, None, 2.0 * PI).is_err());
        sp.jumps = JumpLaw::BiGamma { shape: 1.0, rate: 1.0 };
        sp.sample_count = 0;
        assert!(simulate(&sp, None, 2.0 * PI).is_err());
        sp.sample_count = 5;
        sp.jumps = JumpLaw::CompoundPoisson { rates: vec![1.0] };
        assert!(simulate(&sp, None, 2.0 * PI).is_err());
    }

    #[test]
    fn wrapped_density_limits_and_symmetry() {
        let grid = TorusGrid::circle(64).unwrap();
        let tol = 1e-12;
        let big = 30.0 / grid.period() + 1.0;
        // Away from the antipode the nearest image at K − |s| is negligible.
        for s in [0.1, 0.7, 1.0] {
            let w = wrapped_bigamma_density(s, 0.5, big, &grid, tol, WrapConvention::Torus).unwrap();
            let plain = 0.5 * (-big * s).exp() / s;
            assert!((w - plain).abs() <= tol + 1e-15 * plain, "s={s}");
        }
        for s in [0.1, 0.7, 2.0, 3.1] {
            let neg = wrapped_bigamma_density(-s, 0.5, 1.0, &grid, tol, WrapConvention::Torus).unwrap();
            let pos = wrapped_bigamma_density(s, 0.5, 1.0, &grid, tol, WrapConvention::Torus).unwrap();
            assert!((neg - pos).abs() < 1e-15 * pos);
        }
        assert!(wrapped_bigamma_density(0.0, 0.5, 1.0, &grid, tol, WrapConvention::Torus).is_err());
        assert!(wrapped_bigamma_density(2.0 * PI, 0.5, 1.0, &grid, tol, WrapConvention::Torus).is_err());
    }

    #[test]
    fn wrapped_density_matches_long_sums() {
        let grid = TorusGrid::circle(64).unwrap();
        let tol = 1e-10;
        let k = grid.period();
        for &(s, a, b) in &[(0.3, 0.5, 0.05), (1.7, 2.0, 0.2), (-2.9, 0.5, 1.0), (0.01, 1.0, 0.01)] {
            let got = wrapped_bigamma_density(s, a, b, &grid, tol, WrapConvention::Torus).unwrap();
            let x = grid.centered(s).abs();
            let g = |u: f64| a * (-b * u).exp() / u;
            let mut want = g(x);
            for n in 1..1_000_000 {
                let n = n as f64;
                want += g(x + n * k) + g(n * k - x);
            }
            assert!((got - want).abs() < 10.0 * tol, "s={s}: {got} vs {want}");

            let half = wrapped_bigamma_density(s, a, b, &grid, tol, WrapConvention::HalfPeriodSeries).unwrap();
            let z = (-b * PI).exp();
            let mut lerch = 0.0;
            let mut zn = 1.0;
            for n in 0..1_000_000 {
                lerch += zn / (s.abs() / PI + n as f64);
                zn *= z;
                if zn == 0.0 {
                    break;
                }
            }
            let want = a / PI * (-b * (s.abs() + PI)).exp() * lerch;
            assert!((half - want).abs() < 10.0 * tol, "{half} vs {want}");
        }
    }
}
