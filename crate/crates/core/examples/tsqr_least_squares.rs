//! Blockwise least squares: a tall system split into row panels gives the
//! same answer as a dense solve, however it is split.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smsvar::linalg::{tsqr_solve, Panel};

fn main() -> smsvar::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (rows, p, q) = (200_000, 6, 3);
    let design = DMatrix::from_fn(rows, p, |_, _| rng.random_range(-1.0..1.0));
    let truth = DMatrix::from_fn(p, q, |_, _| rng.random_range(-2.0..2.0));
    let noise = DMatrix::from_fn(rows, q, |_, _| rng.random_range(-0.05..0.05));
    let response = &design * &truth + noise;

    let dense = design.clone().svd(true, true).solve(&response, 1e-12).expect("svd solve");
    for blocks in [1, 8, 64, 500] {
        let size = rows.div_ceil(blocks);
        let panels: Vec<Panel> = (0..rows)
            .step_by(size)
            .map(|start| {
                let n = size.min(rows - start);
                Panel::new(design.rows(start, n).into_owned(), response.rows(start, n).into_owned())
            })
            .collect();
        let start = std::time::Instant::now();
        let sol = tsqr_solve(&panels, 0.0)?;
        println!(
            "{:>4} panels: max |B - B_dense| = {:.2e}, max |B - B_true| = {:.2e} ({:.0} ms)",
            panels.len(),
            (&sol.coefficients - &dense).abs().max(),
            (&sol.coefficients - &truth).abs().max(),
            start.elapsed().as_secs_f64() * 1e3
        );
    }
    Ok(())
}
