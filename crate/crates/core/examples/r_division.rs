//! Tile open grids into r-divisions and measure the boundary set K0 against
//! the O(n/sqrt(r)) bound.

use distsynth::decomposition::{boundary_nodes, check_r_division_bounds, decompose, grid_r_division, InducedGraph};
use distsynth::gridworld::{build_gridworld, GridSpec};

fn main() -> distsynth::Result<()> {
    println!("{:>5} {:>4} {:>8} {:>6} {:>6} {:>12} {:>7}", "n", "r", "regions", "|K0|", "|B0|", "5n/sqrt(r)", "bounds");
    for side in [20, 50, 100] {
        let grid = GridSpec::open(side, side);
        let mdp = build_gridworld(&grid)?;
        let g = InducedGraph::from_mdp(&mdp);
        let n = mdp.num_states();
        for r in [25, 100, 400] {
            let div = grid_r_division(&grid, r)?;
            let d = decompose(&mdp, &div.partition)?;
            let b = boundary_nodes(&g, &div.partition)?;
            println!(
                "{n:>5} {r:>4} {:>8} {:>6} {:>6} {:>12.0} {:>7}",
                div.partition.len(),
                d.k0.len(),
                b.all.len(),
                5.0 * n as f64 / (r as f64).sqrt(),
                check_r_division_bounds(&div.partition, &g, r, 5.0)
            );
        }
    }
    Ok(())
}
