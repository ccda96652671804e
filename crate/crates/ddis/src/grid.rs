//! Grids, fields, and sine-spectral transforms on the unit square.
//!
//! Fields live on a uniform grid over (0,1)^2. Dirichlet grids store only the
//! R x R interior values; the boundary is implicitly zero. The spectral side
//! uses the orthonormal eigenbasis of the negative Laplacian with Dirichlet
//! conditions,
//!
//! ```text
//! phi_mn(x, y) = 2 sin(m pi x) sin(n pi y),   m, n = 1..R,
//! ```
//!
//! sampled at x_i = i/(R+1). The discrete transform is normalized so that the
//! grid-weighted L2 norm of a field equals the Euclidean norm of its
//! coefficients (Parseval holds exactly, not just in the continuum limit).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{DdisError, Result};

/// Boundary condition of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

/// A uniform grid over (0,1)^2 with R interior points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    resolution: usize,
    boundary: Boundary,
}

impl GridSpec {
    /// Validates and builds a grid. Resolution must be at least 2.
    pub fn new(resolution: usize, boundary: Boundary) -> Result<Self> {
        if resolution < 2 {
            return Err(DdisError::InvalidArgument(format!(
                "grid resolution must be >= 2, got {resolution}"
            )));
        }
        Ok(Self {
            resolution,
            boundary,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Grid spacing: 1/(R+1) for Dirichlet, 1/R for periodic.
    pub fn spacing(&self) -> f64 {
        match self.boundary {
            Boundary::Dirichlet => 1.0 / (self.resolution as f64 + 1.0),
            Boundary::Periodic => 1.0 / self.resolution as f64,
        }
    }

    /// Number of stored grid points (R^2).
    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn require_dirichlet(&self) -> Result<()> {
        if self.boundary != Boundary::Dirichlet {
            return Err(DdisError::UnsupportedBoundary {
                expected: Boundary::Dirichlet,
                got: self.boundary,
            });
        }
        Ok(())
    }
}

/// Convenience constructor mirroring [`GridSpec::new`].
pub fn make_grid(resolution: usize, boundary: Boundary) -> Result<GridSpec> {
    GridSpec::new(resolution, boundary)
}

/// A real scalar field on a grid. Row index is y, column index is x.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Array2<f64>,
}

impl Field {
    /// Wraps an R x R value array, rejecting wrong shapes and non-finite entries.
    pub fn new(grid: GridSpec, values: Array2<f64>) -> Result<Self> {
        let r = grid.resolution();
        if values.dim() != (r, r) {
            return Err(DdisError::InvalidArgument(format!(
                "field shape {:?} does not match grid resolution {r}",
                values.dim()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(DdisError::InvalidArgument(
                "field contains non-finite values".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let r = grid.resolution();
        Self {
            grid,
            values: Array2::zeros((r, r)),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Value at flat index `row * R + col`.
    pub fn at_flat(&self, index: usize) -> f64 {
        let r = self.grid.resolution();
        self.values[[index / r, index % r]]
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.check_same_grid(other)?;
        Field::new(self.grid, &self.values + &other.values)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_same_grid(other)?;
        Field::new(self.grid, &self.values - &other.values)
    }

    pub fn scale(&self, alpha: f64) -> Result<Field> {
        Field::new(self.grid, &self.values * alpha)
    }

    fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(DdisError::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }
}

/// Coefficients of a Dirichlet field in the orthonormal sine basis.
///
/// Entry `(m-1, n-1)` holds the coefficient of `phi_mn`; m indexes x-frequency
/// (columns of the field), n indexes y-frequency (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct SineCoeffs {
    grid: GridSpec,
    coeffs: Array2<f64>,
}

impl SineCoeffs {
    pub fn new(grid: GridSpec, coeffs: Array2<f64>) -> Result<Self> {
        grid.require_dirichlet()?;
        let r = grid.resolution();
        if coeffs.dim() != (r, r) {
            return Err(DdisError::InvalidArgument(format!(
                "coefficient shape {:?} does not match grid resolution {r}",
                coeffs.dim()
            )));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: GridSpec) -> Result<Self> {
        grid.require_dirichlet()?;
        let r = grid.resolution();
        Ok(Self {
            grid,
            coeffs: Array2::zeros((r, r)),
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Coefficient array indexed `[n-1, m-1]` (row = y-frequency).
    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut Array2<f64> {
        &mut self.coeffs
    }

    /// Coefficient of phi_mn for 1-based mode indices.
    pub fn mode(&self, m: usize, n: usize) -> f64 {
        self.coeffs[[n - 1, m - 1]]
    }

    pub fn set_mode(&mut self, m: usize, n: usize, value: f64) {
        self.coeffs[[n - 1, m - 1]] = value;
    }
}

/// Sine matrix S with S[m-1][i-1] = sin(m pi i / (R+1)). Symmetric, and
/// S^2 = ((R+1)/2) I on the interior indices.
fn sine_matrix(r: usize) -> Array2<f64> {
    let denom = (r + 1) as f64;
    Array2::from_shape_fn((r, r), |(m, i)| {
        ((m + 1) as f64 * (i + 1) as f64 * std::f64::consts::PI / denom).sin()
    })
}

/// Forward type-I sine transform of a Dirichlet field.
pub fn sine_forward(f: &Field) -> Result<SineCoeffs> {
    f.grid().require_dirichlet()?;
    let r = f.grid().resolution();
    let s = sine_matrix(r);
    // c = 2/(R+1)^2 * S F S, with rows of F indexed by y.
    let scale = 2.0 / ((r + 1) as f64).powi(2);
    let coeffs = s.dot(f.values()).dot(&s) * scale;
    SineCoeffs::new(f.grid(), coeffs)
}

/// Inverse of [`sine_forward`]: reconstructs the field from its coefficients.
pub fn sine_inverse(c: &SineCoeffs) -> Result<Field> {
    let r = c.grid().resolution();
    let s = sine_matrix(r);
    let values = s.dot(c.coeffs()).dot(&s) * 2.0;
    Field::new(c.grid(), values)
}

/// Grid-weighted L2 norm: sqrt(h^2 sum v^2).
pub fn field_norm_l2(f: &Field) -> f64 {
    let h = f.grid().spacing();
    h * f.values().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean norm of the coefficient array. Equals the field L2 norm by Parseval.
pub fn coeff_norm(c: &SineCoeffs) -> f64 {
    c.coeffs().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Continuous Dirichlet eigenvalue of -Laplace for mode (m, n): pi^2 (m^2 + n^2).
pub fn laplace_eigenvalue(m: usize, n: usize) -> f64 {
    std::f64::consts::PI.powi(2) * ((m * m + n * n) as f64)
}

/// Samples the orthonormal basis function phi_mn on a Dirichlet grid.
pub fn basis_field(grid: GridSpec, m: usize, n: usize) -> Result<Field> {
    grid.require_dirichlet()?;
    let r = grid.resolution();
    if m < 1 || n < 1 || m > r || n > r {
        return Err(DdisError::InvalidArgument(format!(
            "mode ({m},{n}) out of range 1..={r}"
        )));
    }
    let h = grid.spacing();
    let pi = std::f64::consts::PI;
    let values = Array2::from_shape_fn((r, r), |(j, i)| {
        let x = (i + 1) as f64 * h;
        let y = (j + 1) as f64 * h;
        2.0 * (m as f64 * pi * x).sin() * (n as f64 * pi * y).sin()
    });
    Field::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: GridSpec, rng: &mut ChaCha8Rng) -> Field {
        let r = grid.resolution();
        let values = Array2::from_shape_fn((r, r), |_| rng.gen_range(-1.0..1.0));
        Field::new(grid, values).unwrap()
    }

    #[test]
    fn make_grid_spacing() {
        let g = make_grid(128, Boundary::Dirichlet).unwrap();
        assert_abs_diff_eq!(g.spacing(), 1.0 / 129.0);
        let g = make_grid(2, Boundary::Periodic).unwrap();
        assert_abs_diff_eq!(g.spacing(), 0.5);
    }

    #[test]
    fn make_grid_rejects_resolution_one() {
        assert!(matches!(
            make_grid(1, Boundary::Dirichlet),
            Err(DdisError::InvalidArgument(_))
        ));
    }

    #[test]
    fn forward_of_basis_function_is_unit_coeff() {
        let grid = make_grid(16, Boundary::Dirichlet).unwrap();
        let f = basis_field(grid, 1, 1).unwrap();
        let c = sine_forward(&f).unwrap();
        for m in 1..=16 {
            for n in 1..=16 {
                let expected = if (m, n) == (1, 1) { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(c.mode(m, n), expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn forward_of_zero_is_zero() {
        let grid = make_grid(8, Boundary::Dirichlet).unwrap();
        let c = sine_forward(&Field::zeros(grid)).unwrap();
        assert!(c.coeffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_periodic() {
        let grid = make_grid(8, Boundary::Periodic).unwrap();
        let f = Field::zeros(grid);
        assert!(matches!(
            sine_forward(&f),
            Err(DdisError::UnsupportedBoundary { .. })
        ));
    }

    #[test]
    fn inverse_of_unit_coeff_samples_basis() {
        let grid = make_grid(12, Boundary::Dirichlet).unwrap();
        let mut c = SineCoeffs::zeros(grid).unwrap();
        c.set_mode(2, 3, 1.0);
        let f = sine_inverse(&c).unwrap();
        let expected = basis_field(grid, 2, 3).unwrap();
        for (a, b) in f.values().iter().zip(expected.values().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn round_trip_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &r in &[8usize, 16, 32, 64] {
            let grid = make_grid(r, Boundary::Dirichlet).unwrap();
            for _ in 0..250 {
                let f = random_field(grid, &mut rng);
                let back = sine_inverse(&sine_forward(&f).unwrap()).unwrap();
                let err = field_norm_l2(&back.sub(&f).unwrap()) / field_norm_l2(&f);
                assert!(err < 1e-12, "round-trip error {err} at R={r}");
            }
        }
    }

    #[test]
    fn coeff_round_trip_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grid = make_grid(16, Boundary::Dirichlet).unwrap();
        for _ in 0..100 {
            let raw = Array2::from_shape_fn((16, 16), |_| rng.gen_range(-1.0..1.0));
            let c = SineCoeffs::new(grid, raw).unwrap();
            let back = sine_forward(&sine_inverse(&c).unwrap()).unwrap();
            let num: f64 = back
                .coeffs()
                .iter()
                .zip(c.coeffs().iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(num / coeff_norm(&c) < 1e-12);
        }
    }

    #[test]
    fn parseval_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &r in &[8usize, 16, 32, 64] {
            let grid = make_grid(r, Boundary::Dirichlet).unwrap();
            for _ in 0..250 {
                let f = random_field(grid, &mut rng);
                let c = sine_forward(&f).unwrap();
                let lhs = field_norm_l2(&f).powi(2);
                let rhs = c.coeffs().iter().map(|v| v * v).sum::<f64>();
                assert!((lhs - rhs).abs() / lhs < 1e-10);
            }
        }
    }

    #[test]
    fn transform_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = make_grid(16, Boundary::Dirichlet).unwrap();
        for _ in 0..50 {
            let f = random_field(grid, &mut rng);
            let g = random_field(grid, &mut rng);
            let (alpha, beta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let combo = f.scale(alpha).unwrap().add(&g.scale(beta).unwrap()).unwrap();
            let lhs = sine_forward(&combo).unwrap();
            let cf = sine_forward(&f).unwrap();
            let cg = sine_forward(&g).unwrap();
            for ((l, a), b) in lhs.coeffs().iter().zip(cf.coeffs()).zip(cg.coeffs()) {
                assert!((l - (alpha * a + beta * b)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn norm_of_constant_field() {
        let grid = make_grid(32, Boundary::Dirichlet).unwrap();
        let ones = Field::new(grid, Array2::ones((32, 32))).unwrap();
        assert_abs_diff_eq!(field_norm_l2(&ones), 32.0 / 33.0, epsilon = 1e-12);
    }

    #[test]
    fn norm_of_basis_function_tends_to_one() {
        // Quadrature of 4 sin^2(pi x) sin^2(pi y) over (0,1)^2 is exactly 1;
        // the midpoint-rule norm is exactly 1 under the discrete convention.
        let grid = make_grid(64, Boundary::Dirichlet).unwrap();
        let f = basis_field(grid, 1, 1).unwrap();
        assert_abs_diff_eq!(field_norm_l2(&f), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(field_norm_l2(&Field::zeros(grid)), 0.0);
    }

    #[test]
    fn arithmetic_requires_matching_grids() {
        let a = Field::zeros(make_grid(8, Boundary::Dirichlet).unwrap());
        let b = Field::zeros(make_grid(9, Boundary::Dirichlet).unwrap());
        assert!(matches!(a.add(&b), Err(DdisError::GridMismatch(_))));
    }
}
