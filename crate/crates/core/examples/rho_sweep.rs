//! Iterations, objective and infeasibility across penalty parameters.

use distsynth::admm::{solve, AdmmParams};
use distsynth::decomposition::decompose;
use distsynth::instances::{eight_state_mdp, eight_state_partition, eight_state_rewards};
use distsynth::lp::build_discounted;
use distsynth::mdp::value_iteration_discounted;

fn main() -> distsynth::Result<()> {
    let mdp = eight_state_mdp();
    let r = eight_state_rewards(&mdp);
    let lp = build_discounted(&mdp, &decompose(&mdp, &eight_state_partition(&mdp))?, &r, 0.9, None)?;
    let vi = value_iteration_discounted(&mdp, &r, 0.9, 1e-10)?.scalar;
    println!("VI optimum {vi:.4}");
    println!("{:>6} {:>8} {:>10} {:>9} {:>10}", "rho", "iters", "objective", "rel err", "infeas");
    for rho in [1.0, 10.0, 80.0, 100.0, 200.0, 500.0, 1000.0] {
        let rep = solve(&lp, &AdmmParams { rho, ..Default::default() })?;
        println!(
            "{rho:>6} {:>8} {:>10.4} {:>8.3}% {:>10.2e}{}",
            rep.iterations,
            rep.objective,
            100.0 * (rep.objective - vi).abs() / vi.abs(),
            rep.infeasibility,
            if rep.converged { "" } else { "  (max_iter)" }
        );
    }
    Ok(())
}
