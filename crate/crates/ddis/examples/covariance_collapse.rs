//! A single pinned coordinate collapses an entire row and column of the
//! stationary covariance. Compares the rank-one closed form against a long
//! Euler-Maruyama simulation of the constrained Langevin diffusion.

use ddis::grf::{GrfSpec, RngSeed};
use ddis::theory::{
    constraint_precision, lyapunov_residual, simulate_constrained_langevin,
    stationary_covariance_closed_form, CovarianceMatrix,
};
use ddis::Result;
use nalgebra::{DMatrix, DVector};

fn main() -> Result<()> {
    let d = 6;
    let c = CovarianceMatrix::grf_slice(&GrfSpec::poisson_preset(), d)?;
    let scale = 1.0 / c.matrix()[(0, 0)];
    let c = CovarianceMatrix::new(c.matrix() * scale)?;
    let i = 2;
    let sigma_s2 = 1e-3;

    let closed = stationary_covariance_closed_form(&c, i, sigma_s2)?;
    let shrink = closed.matrix()[(i, i)] / c.matrix()[(i, i)];
    println!("pinned coordinate {i}: variance shrink factor = {shrink:.4e}");
    println!(
        "lyapunov residual of the closed form = {:.3e}",
        lyapunov_residual(&c, &constraint_precision(&c, i, sigma_s2)?, closed.matrix())?
    );

    let identity = CovarianceMatrix::new(DMatrix::identity(d, d))?;
    let mut rng = RngSeed(13).stream();
    let est = simulate_constrained_langevin(
        &c,
        &identity,
        i,
        0.0,
        &DVector::zeros(d),
        sigma_s2,
        2e-4,
        400_000,
        40_000,
        &mut rng,
    )?;
    let denom = closed.matrix().amax();
    let mut max_err: f64 = 0.0;
    for j in 0..d {
        for k in 0..d {
            max_err = max_err.max((est.cov[(j, k)] - closed.matrix()[(j, k)]).abs() / denom);
        }
    }
    println!(
        "simulation ({} steps): max covariance entry error = {:.3e}",
        est.n_samples, max_err
    );
    println!(
        "simulated pinned variance {:.3e} vs closed form {:.3e}",
        est.cov[(i, i)],
        closed.matrix()[(i, i)]
    );
    Ok(())
}
