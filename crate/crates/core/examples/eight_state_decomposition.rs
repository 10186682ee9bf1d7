//! Decompose the eight-state example MDP into K0 and kernels, and check the
//! predecessor property.

use distsynth::decomposition::{decompose, verify_lemma1};
use distsynth::instances::{eight_state_mdp, eight_state_partition};

fn main() -> distsynth::Result<()> {
    let mdp = eight_state_mdp();
    let pi = eight_state_partition(&mdp);
    let d = decompose(&mdp, &pi)?;

    let names = |set: &[usize]| set.iter().map(|&s| mdp.state_name(s)).collect::<Vec<_>>().join(", ");
    for (i, region) in pi.regions.iter().enumerate() {
        println!("region {}: {}", i + 1, names(region));
    }
    println!("K0 = {{{}}}  (m0 = {})", names(&d.k0), d.m[0]);
    for (i, k) in d.kernels.iter().enumerate() {
        println!("K{} = {{{}}}  (m{} = {})", i + 1, names(k), i + 1, d.m[i + 1]);
    }
    let report = verify_lemma1(&mdp, &d);
    println!("kernel predecessors stay in K0 or the same kernel: {}", report.holds);
    println!("{}", d.to_json_string(&mdp)?);
    Ok(())
}
