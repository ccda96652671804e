//! Gaussian random field priors, white noise, observation masks, and the
//! noisy point-observation operator.
//!
//! The GRF covariance is `C = (-Laplace + tau I)^{-alpha}` in the sine
//! eigenbasis, so mode (m, n) has variance `(pi^2 (m^2 + n^2) + tau)^{-alpha}`.
//! Sampling truncates at the grid Nyquist modes m, n <= R.
//!
//! All randomness flows through a ChaCha8 stream, so a fixed seed and call
//! sequence produce bit-identical output on every platform.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{DdisError, Result};
use crate::grid::{laplace_eigenvalue, sine_inverse, Field, GridSpec, SineCoeffs};

/// Deterministic random stream used throughout the crate.
pub type RngStream = ChaCha8Rng;

/// A 64-bit seed. Identical seed and call sequence give bit-identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn stream(&self) -> RngStream {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Derives an independent per-task seed (splitmix64 finalizer over (seed, index)).
    pub fn derive(&self, index: u64) -> RngSeed {
        let mut z = self.0 ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        RngSeed(z ^ (z >> 31))
    }
}

/// Spectral specification of a GRF covariance `amplitude * (-Laplace + tau)^{-alpha}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrfSpec {
    pub tau: f64,
    pub alpha: f64,
    /// Scalar prefactor on the covariance; 1 for the Poisson/Helmholtz preset.
    pub amplitude: f64,
}

impl GrfSpec {
    pub fn new(tau: f64, alpha: f64) -> Result<Self> {
        if tau <= 0.0 || alpha < 0.0 {
            return Err(DdisError::InvalidArgument(format!(
                "GRF spec requires tau > 0 and alpha >= 0, got tau={tau}, alpha={alpha}"
            )));
        }
        Ok(Self {
            tau,
            alpha,
            amplitude: 1.0,
        })
    }

    /// The Poisson/Helmholtz dataset preset: N(0, (-Laplace + 9I)^{-2}).
    pub fn poisson_preset() -> Self {
        Self {
            tau: 9.0,
            alpha: 2.0,
            amplitude: 1.0,
        }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Covariance eigenvalue for mode (m, n).
    pub fn eigenvalue(&self, m: usize, n: usize) -> f64 {
        self.amplitude * (laplace_eigenvalue(m, n) + self.tau).powf(-self.alpha)
    }
}

/// Sparse point observations: mask indices, observed values, and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    grid: GridSpec,
    indices: Vec<usize>,
    values: Vec<f64>,
    noise_sigma: f64,
}

impl ObservationSet {
    pub fn new(
        grid: GridSpec,
        indices: Vec<usize>,
        values: Vec<f64>,
        noise_sigma: f64,
    ) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(DdisError::InvalidArgument(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        let n = grid.len();
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(DdisError::InvalidArgument(format!(
                    "observation index {i} out of range for {n} grid points"
                )));
            }
            if seen[i] {
                return Err(DdisError::InvalidArgument(format!(
                    "duplicate observation index {i}"
                )));
            }
            seen[i] = true;
        }
        if !values.iter().all(|v| v.is_finite()) || !noise_sigma.is_finite() || noise_sigma < 0.0 {
            return Err(DdisError::InvalidArgument(
                "observation values must be finite and noise_sigma >= 0".into(),
            ));
        }
        Ok(Self {
            grid,
            indices,
            values,
            noise_sigma,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Field of i.i.d. standard normal entries.
pub fn sample_white(grid: GridSpec, rng: &mut RngStream) -> Field {
    let r = grid.resolution();
    let values = Array2::from_shape_fn((r, r), |_| rng.sample(StandardNormal));
    Field::new(grid, values).expect("normal draws are finite")
}

/// Draws a GRF sample in physical space: sum of sqrt(c_mn) xi_mn phi_mn.
pub fn sample_grf(grid: GridSpec, spec: &GrfSpec, rng: &mut RngStream) -> Result<Field> {
    grid.require_dirichlet()?;
    let r = grid.resolution();
    let coeffs = Array2::from_shape_fn((r, r), |(nj, mi)| {
        let xi: f64 = rng.sample(StandardNormal);
        spec.eigenvalue(mi + 1, nj + 1).sqrt() * xi
    });
    sine_inverse(&SineCoeffs::new(grid, coeffs)?)
}

/// `count` distinct flat indices drawn uniformly without replacement.
pub fn sample_mask(grid: GridSpec, count: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    let n = grid.len();
    if count > n {
        return Err(DdisError::InvalidArgument(format!(
            "mask count {count} exceeds {n} grid points"
        )));
    }
    Ok(rand::seq::index::sample(rng, n, count).into_vec())
}

/// Observes `u` at the given indices with additive N(0, noise_sigma^2) noise.
pub fn observe(
    u: &Field,
    indices: &[usize],
    noise_sigma: f64,
    rng: &mut RngStream,
) -> Result<ObservationSet> {
    let values = indices
        .iter()
        .map(|&i| {
            if i >= u.grid().len() {
                return Err(DdisError::InvalidArgument(format!(
                    "observation index {i} out of range"
                )));
            }
            let zeta: f64 = rng.sample(StandardNormal);
            Ok(u.at_flat(i) + noise_sigma * zeta)
        })
        .collect::<Result<Vec<_>>>()?;
    ObservationSet::new(u.grid(), indices.to_vec(), values, noise_sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, sine_forward, Boundary};

    #[test]
    fn white_noise_deterministic_under_seed() {
        let grid = make_grid(8, Boundary::Dirichlet).unwrap();
        let a = sample_white(grid, &mut RngSeed(42).stream());
        let b = sample_white(grid, &mut RngSeed(42).stream());
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn white_noise_moments() {
        let grid = make_grid(2, Boundary::Dirichlet).unwrap();
        let mut rng = RngSeed(7).stream();
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let v = sample_white(grid, &mut rng).values()[[0, 0]];
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "variance {var}");
    }

    #[test]
    fn grf_mode_variance_matches_eigenvalue() {
        let grid = make_grid(8, Boundary::Dirichlet).unwrap();
        let spec = GrfSpec::poisson_preset();
        let mut rng = RngSeed(11).stream();
        let draws = 100_000usize;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let a = sample_grf(grid, &spec, &mut rng).unwrap();
            let c = sine_forward(&a).unwrap();
            sum_sq += c.mode(1, 1).powi(2);
        }
        let var = sum_sq / draws as f64;
        let oracle = (2.0 * std::f64::consts::PI.powi(2) + 9.0).powi(-2);
        assert!((var - oracle).abs() / oracle < 0.03, "var {var} vs {oracle}");
    }

    #[test]
    fn grf_alpha_zero_is_white_in_coeff_space() {
        let grid = make_grid(8, Boundary::Dirichlet).unwrap();
        let spec = GrfSpec::new(9.0, 0.0).unwrap();
        for m in 1..=8 {
            for n in 1..=8 {
                assert_eq!(spec.eigenvalue(m, n), 1.0);
            }
        }
        let a = sample_grf(grid, &spec, &mut RngSeed(3).stream()).unwrap();
        let c = sine_forward(&a).unwrap();
        // Coefficients are the raw standard normal draws.
        let var: f64 = c.coeffs().iter().map(|v| v * v).sum::<f64>() / 64.0;
        assert!((var - 1.0).abs() < 0.6);
    }

    #[test]
    fn grf_different_seeds_differ() {
        let grid = make_grid(8, Boundary::Dirichlet).unwrap();
        let spec = GrfSpec::poisson_preset();
        let a = sample_grf(grid, &spec, &mut RngSeed(1).stream()).unwrap();
        let b = sample_grf(grid, &spec, &mut RngSeed(2).stream()).unwrap();
        assert_ne!(a.values(), b.values());
    }

    #[test]
    fn grf_coefficient_cross_moments_vanish() {
        let grid = make_grid(8, Boundary::Dirichlet).unwrap();
        let spec = GrfSpec::poisson_preset();
        let mut rng = RngSeed(19).stream();
        let draws = 100_000usize;
        let mut cross_12 = 0.0;
        let mut cross_21 = 0.0;
        for _ in 0..draws {
            let a = sample_grf(grid, &spec, &mut rng).unwrap();
            let c = sine_forward(&a).unwrap();
            cross_12 += c.mode(1, 1) * c.mode(1, 2);
            cross_21 += c.mode(2, 1) * c.mode(2, 2);
        }
        // Each summand has std ~ sqrt(c_11 c_12) ~ 1e-3; 5 MC sigma bound.
        let bound = 5.0 * 1.3e-3 / (draws as f64).sqrt();
        assert!((cross_12 / draws as f64).abs() < bound);
        assert!((cross_21 / draws as f64).abs() < bound);
    }

    #[test]
    fn mask_full_and_single() {
        let grid = make_grid(4, Boundary::Dirichlet).unwrap();
        let mut rng = RngSeed(5).stream();
        let mut all = sample_mask(grid, 16, &mut rng).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..16).collect::<Vec<_>>());
        let one = sample_mask(grid, 1, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0] < 16);
        assert!(sample_mask(grid, 17, &mut rng).is_err());
    }

    #[test]
    fn mask_count_and_coverage_fraction() {
        let grid = make_grid(128, Boundary::Dirichlet).unwrap();
        let m = sample_mask(grid, 500, &mut RngSeed(9).stream()).unwrap();
        assert_eq!(m.len(), 500);
        let mut sorted = m.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 500);
        let coverage: f64 = 500.0 / (128.0 * 128.0);
        assert!((coverage - 0.0305).abs() < 0.001);
    }

    #[test]
    fn mask_sampling_is_uniform() {
        let grid = make_grid(8, Boundary::Dirichlet).unwrap();
        let mut rng = RngSeed(13).stream();
        let draws = 100_000usize;
        let mut counts = vec![0usize; 64];
        for _ in 0..draws {
            counts[sample_mask(grid, 1, &mut rng).unwrap()[0]] += 1;
        }
        let p = 1.0 / 64.0;
        let tol = 5.0 * (p * (1.0 - p) / draws as f64).sqrt();
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - p).abs() < tol, "frequency {freq}");
        }
    }

    #[test]
    fn observe_noiseless_is_exact() {
        let grid = make_grid(8, Boundary::Dirichlet).unwrap();
        let u = sample_grf(grid, &GrfSpec::poisson_preset(), &mut RngSeed(1).stream()).unwrap();
        let idx = vec![0usize, 17, 63];
        let obs = observe(&u, &idx, 0.0, &mut RngSeed(2).stream()).unwrap();
        for (j, &i) in idx.iter().enumerate() {
            assert_eq!(obs.values()[j], u.at_flat(i));
        }
    }

    #[test]
    fn observe_noise_std() {
        let grid = make_grid(4, Boundary::Dirichlet).unwrap();
        let u = Field::zeros(grid);
        let mut rng = RngSeed(31).stream();
        let reps = 100_000usize;
        let mut sum_sq = 0.0;
        for _ in 0..reps {
            let obs = observe(&u, &[5], 0.1, &mut rng).unwrap();
            sum_sq += obs.values()[0].powi(2);
        }
        let std = (sum_sq / reps as f64).sqrt();
        assert!((std - 0.1).abs() / 0.1 < 0.01, "std {std}");
    }

    #[test]
    fn observe_empty_and_out_of_range() {
        let grid = make_grid(4, Boundary::Dirichlet).unwrap();
        let u = Field::zeros(grid);
        let obs = observe(&u, &[], 0.0, &mut RngSeed(0).stream()).unwrap();
        assert!(obs.is_empty());
        assert!(observe(&u, &[16], 0.0, &mut RngSeed(0).stream()).is_err());
    }
}
