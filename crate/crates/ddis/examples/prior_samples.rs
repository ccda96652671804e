//! Draw Gaussian random fields from the Matern-like prior and check that the
//! empirical modal variances track the closed-form spectrum.

use ddis::grf::{sample_grf, GrfSpec, RngSeed};
use ddis::grid::{make_grid, sine_forward, Boundary};
use ddis::Result;

fn main() -> Result<()> {
    let grid = make_grid(64, Boundary::Dirichlet)?;
    let spec = GrfSpec::poisson_preset();
    let mut rng = RngSeed(7).stream();

    let draws = 400;
    let probe_modes = [(1, 1), (2, 3), (5, 5), (10, 2)];
    let mut sums = [0.0f64; 4];
    for _ in 0..draws {
        let f = sample_grf(grid, &spec, &mut rng)?;
        let c = sine_forward(&f)?;
        for (s, &(m, n)) in sums.iter_mut().zip(&probe_modes) {
            let v = c.mode(m, n);
            *s += v * v;
        }
    }

    println!("mode   empirical var   closed form   ratio");
    for (s, &(m, n)) in sums.iter().zip(&probe_modes) {
        let emp = s / draws as f64;
        let exact = spec.eigenvalue(m, n);
        println!("({m},{n})  {emp:.6e}   {exact:.6e}   {:.3}", emp / exact);
    }
    Ok(())
}
