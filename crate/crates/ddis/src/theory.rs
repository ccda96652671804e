//! Numerical verification of the covariance-collapse and guidance-attenuation
//! theory.
//!
//! Covariance collapse: a Langevin diffusion whose potential combines a
//! Gaussian prior N(x_0, C) with a hard scalar constraint on coordinate i
//! (variance sigma_s^2) has stationary covariance
//!
//! ```text
//! Sigma_inf = B^{-1},  B = C^{-1} + e_i e_i^T / sigma_s^2
//!           = C - (C e_i)(C e_i)^T / (sigma_s^2 + C_ii),
//! ```
//!
//! so row and column i of the prior covariance are scaled by
//! sigma_s^2 / (sigma_s^2 + C_ii): pinning one coordinate collapses every
//! correlation through it. The module provides the closed form, the Lyapunov
//! residual that certifies stationarity, and an Euler-Maruyama simulator with
//! an explicit stability guard, all on dense matrices small enough for exact
//! oracles (d <= 32).
//!
//! Guidance attenuation: for a joint Gaussian-mixture score model the total
//! responsibility-gradient mass obeys sum_n |d_a w_n| <= 4 G eta / (1 + eta)
//! with eta the off-dominant kernel mass and G the largest per-kernel
//! log-gradient norm; and any non-vanishing gradient forces a near-tie in
//! squared distances between the dominant center and some rival.
//! [`attenuation_sweep`] tabulates both inequalities over probe batches.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{DdisError, Result};
use crate::grf::{GrfSpec, RngStream};
use crate::score::{MixtureScoreModel, ModelSpace};

/// Maximum dimension for the dense SDE experiments.
pub const MAX_SDE_DIM: usize = 32;

const SYMMETRY_TOL: f64 = 1e-12;

/// A validated symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Validates symmetry (within 1e-12 relative) and positive-definiteness.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(DdisError::InvalidArgument(format!(
                "covariance must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let scale = entries.amax().max(f64::MIN_POSITIVE);
        for j in 0..entries.nrows() {
            for k in (j + 1)..entries.ncols() {
                if (entries[(j, k)] - entries[(k, j)]).abs() > SYMMETRY_TOL * scale {
                    return Err(DdisError::NotSpd(format!(
                        "asymmetric at ({j},{k}): {} vs {}",
                        entries[(j, k)],
                        entries[(k, j)]
                    )));
                }
            }
        }
        let min_eig = SymmetricEigen::new(entries.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if !(min_eig > 0.0) {
            return Err(DdisError::NotSpd(format!(
                "smallest eigenvalue {min_eig} is not positive"
            )));
        }
        Ok(Self { entries })
    }

    /// Random-field covariance restricted to a horizontal 1D slice of the
    /// unit square: C_jk = sum_{m,n} c_mn phi_mn(x_j, y0) phi_mn(x_k, y0)
    /// with y0 the mid-height grid line and d interior points.
    pub fn grf_slice(spec: &GrfSpec, d: usize) -> Result<Self> {
        if d == 0 || d > MAX_SDE_DIM {
            return Err(DdisError::InvalidArgument(format!(
                "slice dimension must lie in 1..={MAX_SDE_DIM}, got {d}"
            )));
        }
        let h = 1.0 / (d as f64 + 1.0);
        let y0 = ((d + 1) / 2) as f64 * h;
        let pi = std::f64::consts::PI;
        let mut c = DMatrix::zeros(d, d);
        for m in 1..=d {
            for n in 1..=d {
                let ev = spec.eigenvalue(m, n);
                let sy = (n as f64 * pi * y0).sin();
                for j in 0..d {
                    let pj = 2.0 * (m as f64 * pi * (j as f64 + 1.0) * h).sin() * sy;
                    for k in 0..d {
                        let pk = 2.0 * (m as f64 * pi * (k as f64 + 1.0) * h).sin() * sy;
                        c[(j, k)] += ev * pj * pk;
                    }
                }
            }
        }
        Self::new(c)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Symmetric square root by eigendecomposition.
    pub fn sqrt(&self) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(self.entries.clone());
        let mut d = eig.eigenvalues.clone();
        for v in d.iter_mut() {
            *v = v.max(0.0).sqrt();
        }
        &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.entries
            .clone()
            .cholesky()
            .expect("validated SPD")
            .inverse()
    }
}

/// Sample moments of a simulated stationary distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryEstimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n_samples: usize,
    pub burn_in: usize,
}

/// Constraint-augmented precision B = C^{-1} + e_i e_i^T / sigma_s^2.
pub fn constraint_precision(c: &CovarianceMatrix, i: usize, sigma_s2: f64) -> Result<DMatrix<f64>> {
    if i >= c.dim() {
        return Err(DdisError::InvalidArgument(format!(
            "constraint index {i} out of range for dimension {}",
            c.dim()
        )));
    }
    if !(sigma_s2 > 0.0) {
        return Err(DdisError::InvalidArgument(format!(
            "sigma_s2 must be positive, got {sigma_s2}"
        )));
    }
    let mut b = c.inverse();
    b[(i, i)] += 1.0 / sigma_s2;
    Ok(b)
}

/// Rank-1 closed form for the stationary covariance:
/// Sigma_inf = C - (C e_i)(C e_i)^T / (sigma_s^2 + C_ii).
pub fn stationary_covariance_closed_form(
    c: &CovarianceMatrix,
    i: usize,
    sigma_s2: f64,
) -> Result<CovarianceMatrix> {
    if i >= c.dim() {
        return Err(DdisError::InvalidArgument(format!(
            "constraint index {i} out of range for dimension {}",
            c.dim()
        )));
    }
    if !(sigma_s2 > 0.0) {
        return Err(DdisError::InvalidArgument(format!(
            "sigma_s2 must be positive, got {sigma_s2}"
        )));
    }
    let ci = c.matrix().column(i).clone_owned();
    let denom = sigma_s2 + c.matrix()[(i, i)];
    let corrected = c.matrix() - &ci * ci.transpose() / denom;
    CovarianceMatrix::new(corrected)
}

/// Relative Frobenius residual of the stationarity condition
/// Sigma B Sigma_inf + Sigma_inf B Sigma = 2 Sigma.
pub fn lyapunov_residual(
    sigma: &CovarianceMatrix,
    b: &DMatrix<f64>,
    sigma_inf: &DMatrix<f64>,
) -> Result<f64> {
    let d = sigma.dim();
    if b.nrows() != d || b.ncols() != d || sigma_inf.nrows() != d || sigma_inf.ncols() != d {
        return Err(DdisError::InvalidArgument(
            "lyapunov residual dimension mismatch".into(),
        ));
    }
    let s = sigma.matrix();
    let lhs = s * b * sigma_inf + sigma_inf * b * s;
    let rhs = s * 2.0;
    Ok((lhs - &rhs).norm() / rhs.norm())
}

/// Euler-Maruyama simulation of the preconditioned constrained Langevin SDE
///
/// ```text
/// x' = x - dt * Sigma (C^{-1}(x - x0) + e_i (x_i - c) / sigma_s^2)
///        + sqrt(2 dt) Sigma^{1/2} zeta.
/// ```
///
/// Rejects dt >= 2 / lambda_max(Sigma B), the linear stability limit.
#[allow(clippy::too_many_arguments)]
pub fn simulate_constrained_langevin(
    c: &CovarianceMatrix,
    sigma: &CovarianceMatrix,
    i: usize,
    constraint_value: f64,
    x0: &DVector<f64>,
    sigma_s2: f64,
    dt: f64,
    steps: usize,
    burn_in: usize,
    rng: &mut RngStream,
) -> Result<StationaryEstimate> {
    let d = c.dim();
    if sigma.dim() != d || x0.len() != d {
        return Err(DdisError::InvalidArgument(
            "covariance / preconditioner / drift-center dimensions differ".into(),
        ));
    }
    if burn_in >= steps {
        return Err(DdisError::InvalidArgument(format!(
            "burn_in {burn_in} must be smaller than steps {steps}"
        )));
    }
    let b = constraint_precision(c, i, sigma_s2)?;
    let sigma_half = sigma.sqrt();
    // lambda_max(Sigma B) equals lambda_max of the symmetric similar matrix
    // Sigma^{1/2} B Sigma^{1/2}.
    let sym = &sigma_half * &b * &sigma_half;
    let lambda_max = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let limit = 2.0 / lambda_max;
    if !(dt > 0.0) || dt >= limit {
        return Err(DdisError::UnstableStepSize { dt, limit });
    }

    let drift_mat = sigma.matrix() * &b * (-dt);
    // Constant drift offset: dt * Sigma (C^{-1} x0 + e_i c / sigma_s^2).
    let mut affine = c.inverse() * x0;
    affine[i] += constraint_value / sigma_s2;
    let offset = sigma.matrix() * affine * dt;
    let noise_mat = sigma_half * (2.0 * dt).sqrt();

    let mut x = x0.clone();
    let mut sum = DVector::<f64>::zeros(d);
    let mut outer = DMatrix::<f64>::zeros(d, d);
    let mut kept = 0usize;
    for step in 0..steps {
        let zeta = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        x += &drift_mat * &x + &offset + &noise_mat * zeta;
        if step >= burn_in {
            sum += &x;
            outer.ger(1.0, &x, &x, 1.0);
            kept += 1;
        }
    }
    let mean = &sum / kept as f64;
    let mut cov = outer / kept as f64 - &mean * mean.transpose();
    // Symmetrize away accumulation round-off.
    cov = (&cov + cov.transpose()) * 0.5;
    Ok(StationaryEstimate {
        mean,
        cov,
        n_samples: kept,
        burn_in,
    })
}

/// One probe row of the attenuation sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuationRow {
    pub eta: f64,
    pub min_pair_gap: f64,
    pub g_bound: f64,
    /// sum_n |d_a w_n| at the probe.
    pub grad_mass: f64,
    /// |g_a| against a uniform unit residual over the u-block.
    pub ga_norm: f64,
    /// 4 G eta / (1 + eta).
    pub mass_bound: f64,
    /// 2 sigma^2 log((1 - tau)/tau) with tau = delta / (2 G (N-1)), or
    /// infinity when the gradient vanishes.
    pub gap_bound: f64,
    pub mass_ok: bool,
    pub gap_ok: bool,
}

/// Sweep result; `violations` counts rows failing either inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationReport {
    pub sigma: f64,
    pub rows: Vec<AttenuationRow>,
    pub violations: usize,
}

impl AttenuationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "eta,min_pair_gap,g_bound,grad_mass,ga_norm,mass_bound,gap_bound,mass_ok,gap_ok\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.eta,
                r.min_pair_gap,
                r.g_bound,
                r.grad_mass,
                r.ga_norm,
                r.mass_bound,
                r.gap_bound,
                r.mass_ok,
                r.gap_ok
            ));
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let max_mass_ratio = self
            .rows
            .iter()
            .filter(|r| r.mass_bound > 0.0)
            .map(|r| r.grad_mass / r.mass_bound)
            .fold(0.0_f64, f64::max);
        serde_json::json!({
            "probes": self.rows.len(),
            "violations": self.violations,
            "max_mass_to_bound_ratio": max_mass_ratio,
        })
    }
}

const INEQUALITY_SLACK: f64 = 1e-12;

/// Evaluates the dominance and overlap inequalities at each probe of a joint
/// mixture model.
pub fn attenuation_sweep(
    model: &MixtureScoreModel,
    sigma: f64,
    probes: &[Array1<f64>],
) -> Result<AttenuationReport> {
    if model.space() != ModelSpace::Joint {
        return Err(DdisError::InvalidArgument(
            "attenuation sweep requires a joint model".into(),
        ));
    }
    let d_a = model.dim_a();
    let d_u = model.dim() - d_a;
    let n = model.n_centers();
    // Uniform unit residual over the u-block probes the cross-block channel.
    let r_unit = 1.0 / (d_u as f64).sqrt();
    let mut rows = Vec::with_capacity(probes.len());
    let mut violations = 0usize;
    for x in probes {
        let diag = model.overlap_diagnostic(x, sigma)?;
        let grads = model.responsibility_grads_full(x, sigma)?;
        let a_norms: Vec<f64> = grads
            .iter()
            .map(|g| {
                g.slice(ndarray::s![..d_a])
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let grad_mass: f64 = a_norms.iter().sum();
        let mass_bound = 4.0 * diag.g_bound * diag.eta / (1.0 + diag.eta);
        let mass_ok = grad_mass <= mass_bound + INEQUALITY_SLACK * (1.0 + diag.g_bound);

        let mut g_a = Array1::<f64>::zeros(d_a);
        for (g, c) in grads.iter().zip(model.centers()) {
            let proj: f64 = c
                .slice(ndarray::s![d_a..])
                .iter()
                .map(|u| u * r_unit)
                .sum();
            g_a += &(&g.slice(ndarray::s![..d_a]) * proj);
        }
        let ga_norm = g_a.dot(&g_a).sqrt();

        // Overlap necessity: a gradient of size delta forces a rival center
        // whose squared distance ties the dominant one within the gap bound.
        let delta = a_norms.iter().cloned().fold(0.0_f64, f64::max);
        let (gap_bound, gap_ok) = if delta <= f64::MIN_POSITIVE || n < 2 || diag.g_bound == 0.0 {
            (f64::INFINITY, true)
        } else {
            let tau = delta / (2.0 * diag.g_bound * (n as f64 - 1.0));
            let bound = 2.0 * sigma * sigma * ((1.0 - tau) / tau).ln();
            let dominant_gap = nearest_rival_gap(model, x, sigma, diag.dominant);
            (bound, dominant_gap <= bound + INEQUALITY_SLACK)
        };

        if !(mass_ok && gap_ok) {
            violations += 1;
        }
        rows.push(AttenuationRow {
            eta: diag.eta,
            min_pair_gap: diag.min_pair_gap,
            g_bound: diag.g_bound,
            grad_mass,
            ga_norm,
            mass_bound,
            gap_bound,
            mass_ok,
            gap_ok,
        });
    }
    Ok(AttenuationReport {
        sigma,
        rows,
        violations,
    })
}

/// min over rivals q != p of | |x - c_p|^2 - |x - c_q|^2 |.
fn nearest_rival_gap(model: &MixtureScoreModel, x: &Array1<f64>, _sigma: f64, p: usize) -> f64 {
    let d2: Vec<f64> = model
        .centers()
        .iter()
        .map(|c| c.iter().zip(x.iter()).map(|(a, b)| (a - b).powi(2)).sum())
        .collect();
    d2.iter()
        .enumerate()
        .filter(|(q, _)| *q != p)
        .map(|(_, v)| (v - d2[p]).abs())
        .fold(f64::INFINITY, f64::min)
}
