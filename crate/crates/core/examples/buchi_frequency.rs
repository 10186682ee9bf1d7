//! Maximise how often an accepting Büchi state is visited on an ergodic
//! product, three ways: the average-reward LP, the gamma=0.98 discounted LP
//! scaled by 0.02, and the stationary distribution of the optimal policy.

use distsynth::admm::{solve, AdmmParams};
use distsynth::decomposition::decompose;
use distsynth::instances::{random_ergodic_mdp, random_labels, random_partition};
use distsynth::lp::{build_average, build_discounted};
use distsynth::mdp::{average_reward_eval, check_ergodicity, induce_chain, stationary_distribution};
use distsynth::product::{buchi_frequency_reward, infinitely_often, product_buchi};

fn main() -> distsynth::Result<()> {
    let dba = infinitely_often("p", false);
    let (base, p) = (1..)
        .map(|seed| {
            let base = random_labels(&random_ergodic_mdp(seed, 10, 3), seed, &["p"], 0.3);
            let p = product_buchi(&base, &dba).unwrap();
            (base, p)
        })
        .find(|(_, p)| check_ergodicity(&p.mdp).is_ok())
        .unwrap();
    println!("ergodic product with {} states", p.num_states());

    let r = buchi_frequency_reward(&p);
    let d = decompose(&p.mdp, &p.lift_partition(&base, &random_partition(1, 10, 2))?)?;
    let direct = solve(&build_average(&p.mdp, &d, &r)?, &AdmmParams { rho: 1.0, ..Default::default() })?;
    let approx = solve(
        &build_discounted(&p.mdp, &d, &r, 0.98, None)?,
        &AdmmParams { rho: 0.1, max_iter: 200_000, ..Default::default() },
    )?;
    let opt = average_reward_eval(&p.mdp, &r, 1e-12)?;
    let (chain, rf) = induce_chain(&p.mdp, &opt.policy, &r);
    let freq: f64 = stationary_distribution(&chain)?.iter().zip(rf.iter()).map(|(a, b)| a * b).sum();

    println!("average-reward LP     {:.5}  ({} iterations)", direct.objective, direct.iterations);
    println!("0.02 x discounted LP  {:.5}  ({} iterations)", 0.02 * approx.objective, approx.iterations);
    println!("stationary frequency  {freq:.5}");
    Ok(())
}
