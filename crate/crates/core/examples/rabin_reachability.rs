//! Maximise the probability of "reach goal while avoiding bad": product with
//! a Rabin automaton, accepting end components, sink construction, and a
//! distributed solve of the resulting reachability LP.

use distsynth::admm::{solve, AdmmParams};
use distsynth::decomposition::decompose;
use distsynth::instances::{random_labels, random_mdp, random_partition};
use distsynth::lp::{build_transient, extract_policy};
use distsynth::mdp::{reachability_max, value_iteration_discounted};
use distsynth::product::{accepting_end_components, product_rabin, reach_avoid, sinkify, stitch_policy};

fn main() -> distsynth::Result<()> {
    let base = random_labels(&random_mdp(11, 30, 3), 11, &["goal", "bad"], 0.15);
    let dra = reach_avoid("goal", "bad");
    let p = product_rabin(&base, &dra)?;
    let (aecs, c) = accepting_end_components(&p);
    println!("product: {} states, {} accepting end components covering {} states", p.num_states(), aecs.len(), c.len());

    let s = sinkify(&p, &c);
    println!("after sinking C: {} states ({} pruned as unable to reach C)", s.mdp.num_states(), s.pruned.len());
    let truth = reachability_max(&p.mdp, &c, 1e-12)?.scalar;
    let vi = value_iteration_discounted(&s.mdp, &s.reward, 1.0, 1e-12)?;
    println!(
        "P(reach C): direct {truth:.6}, gamma=1 value on the sinkified MDP {:.6}",
        s.value_at_initial(&vi.per_state)
    );

    let pi = s.lift_partition(&p.lift_partition(&base, &random_partition(11, 30, 3))?)?;
    let lp = build_transient(&s.mdp, &decompose(&s.mdp, &pi)?, &s.reward, s.init(), &s.terminal())?;
    let rep = solve(&lp, &AdmmParams { rho: 1.0, eps_rel: 1e-5, eps_abs: 1e-6, ..Default::default() })?;
    println!(
        "ADMM: {:.6} after {} iterations (infeasibility {:.1e})",
        rep.objective + s.init()[s.sink],
        rep.iterations,
        rep.infeasibility
    );

    let policy = stitch_policy(&p, &s, &extract_policy(&lp, &rep.x), &aecs);
    println!("stitched product policy covers {} states: {}", p.num_states(), policy.is_valid_for(&p.mdp));
    Ok(())
}
