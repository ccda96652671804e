//! Solve the Poisson and Helmholtz problems for a random right-hand side and
//! verify the residual of each solution in the eigenbasis.

use ddis::grf::{sample_grf, GrfSpec, RngSeed};
use ddis::grid::{field_norm_l2, make_grid, Boundary};
use ddis::operators::{pde_residual, solve_helmholtz, solve_poisson, PdeTask};
use ddis::Result;

fn main() -> Result<()> {
    let grid = make_grid(64, Boundary::Dirichlet)?;
    let mut rng = RngSeed(11).stream();
    let a = sample_grf(grid, &GrfSpec::poisson_preset(), &mut rng)?;
    let a_norm = field_norm_l2(&a);

    let u = solve_poisson(&a)?;
    let r = pde_residual(PdeTask::Poisson, &a, &u)?;
    println!(
        "poisson    |u| = {:.4e}   relative residual = {:.3e}",
        field_norm_l2(&u),
        field_norm_l2(&r) / a_norm
    );

    for k in [1.0, 4.0, 10.0] {
        let u = solve_helmholtz(&a, k)?;
        let r = pde_residual(PdeTask::Helmholtz { k }, &a, &u)?;
        println!(
            "helmholtz  k = {k:>4}  |u| = {:.4e}   relative residual = {:.3e}",
            field_norm_l2(&u),
            field_norm_l2(&r) / a_norm
        );
    }
    Ok(())
}
