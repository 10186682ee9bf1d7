//! Build the arrow-shaped block LP for the example MDP, show its block
//! pattern, and round-trip it through the CSV export.

use distsynth::decomposition::decompose;
use distsynth::instances::{eight_state_mdp, eight_state_partition, eight_state_rewards};
use distsynth::lp::{assemble_dense, build_discounted, export_block_lp, import_block_lp};

fn main() -> distsynth::Result<()> {
    let mdp = eight_state_mdp();
    let d = decompose(&mdp, &eight_state_partition(&mdp))?;
    let lp = build_discounted(&mdp, &d, &eight_state_rewards(&mdp), 0.9, None)?;

    println!(
        "{} block rows, {} block columns, {} x {} overall",
        lp.num_blocks(),
        lp.num_blocks(),
        lp.total_rows(),
        lp.total_cols()
    );
    for i in 0..lp.num_blocks() {
        let row: String = (0..lp.num_blocks()).map(|j| if lp.block(i, j).is_some() { " A" } else { " ." }).collect();
        println!("  {row}   rows {:?}", lp.row_states[i].iter().map(|&s| mdp.state_name(s)).collect::<Vec<_>>());
    }
    println!("columns: {}", lp.column_keys().join(" "));

    let (a, b, _) = assemble_dense(&lp)?;
    println!("dense A has {} nonzeros, b = {:?}", a.iter().filter(|v| **v != 0.0).count(), b.as_slice());

    let dir = std::env::temp_dir().join("distsynth-block-lp");
    export_block_lp(&lp, &dir)?;
    let back = import_block_lp(&dir)?;
    println!("exported to {} and re-imported: identical = {}", dir.display(), back == lp);
    Ok(())
}
