//! The dynamic-programming oracles: discounted value iteration, average
//! reward, and maximal reachability.

use std::collections::BTreeSet;

use distsynth::instances::{eight_state_mdp, eight_state_rewards, random_ergodic_mdp};
use distsynth::mdp::{
    average_reward_eval, check_ergodicity, evaluate_policy_discounted, induce_chain, reachability_max,
    stationary_distribution, value_iteration_discounted, RewardFn,
};

fn main() -> distsynth::Result<()> {
    let mdp = eight_state_mdp();
    let r = eight_state_rewards(&mdp);
    let vi = value_iteration_discounted(&mdp, &r, 0.9, 1e-10)?;
    println!("discounted value at u0: {:.4} ({} sweeps)", vi.scalar, vi.iterations);
    for s in 0..mdp.num_states() {
        let k = vi.policy.greedy_choices()[s];
        let a = mdp.action_name(mdp.choices(s)[k].action);
        println!("  {:>3}  V = {:>10.4}  act {a}", mdp.state_name(s), vi.per_state[s]);
    }
    let check = evaluate_policy_discounted(&mdp, &vi.policy, &r, 0.9)?;
    println!("policy evaluation agrees: {}", check.iter().zip(&vi.per_state).all(|(a, b)| (a - b).abs() < 1e-6));

    let goal = BTreeSet::from([mdp.state_id("s6")?]);
    let reach = reachability_max(&mdp, &goal, 1e-12)?;
    println!("max probability of reaching s6: {:.6}", reach.scalar);

    let erg = random_ergodic_mdp(4, 6, 2);
    check_ergodicity(&erg)?;
    let r = RewardFn::from_fn(&erg, |s, k| (s + k) as f64);
    let avg = average_reward_eval(&erg, &r, 1e-12)?;
    let (chain, rf) = induce_chain(&erg, &avg.policy, &r);
    let pi = stationary_distribution(&chain)?;
    let gain: f64 = pi.iter().zip(rf.iter()).map(|(p, r)| p * r).sum();
    println!("average reward on a 6-state ergodic MDP: {:.6} (stationary check {gain:.6})", avg.scalar);
    Ok(())
}
