//! The two projection operators used inside each ADMM iteration.

use distsynth::admm::{exchange, prox_cost_nonneg, GraphProjector};
use distsynth::sparse::CsrMatrix;

fn main() -> distsynth::Result<()> {
    let a = CsrMatrix::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 1, -0.9), (1, 1, 1.0), (1, 2, -0.5)]);
    let (x, y) = (vec![1.0, 2.0, 3.0], vec![0.0, 1.0]);
    let (xp, yp) = GraphProjector::new(&a).project(&x, &y)?;
    println!("project ({x:?}, {y:?}) onto y = Ax:");
    println!("  x' = {xp:.4?}\n  y' = {yp:.4?}\n  Ax' = {:.4?}", a.mul_vec(&xp));

    let c = vec![1.0, 0.0];
    let parts = vec![vec![0.2, 0.5], vec![0.4, -0.1], vec![0.0, 0.3]];
    let (sum, pieces) = exchange(&c, &parts)?;
    println!("exchange toward total {c:?}: total {sum:.4?}, pieces {pieces:.4?}");

    println!("prox of cost (1,1) at (2, 0.5), rho = 1: {:?}", prox_cost_nonneg(&[2.0, 0.5], &[1.0, 1.0], 1.0));
    Ok(())
}
