//! Maximal end components of a small MDP, and the accepting ones for a
//! Rabin condition on its product.

use distsynth::instances::{random_labels, random_mdp};
use distsynth::product::{accepting_end_components, infinitely_often, mec_decomposition, product_rabin};

fn main() -> distsynth::Result<()> {
    let mdp = random_labels(&random_mdp(5, 12, 2), 5, &["g"], 0.25);
    for ec in mec_decomposition(&mdp) {
        let states: Vec<_> = ec.states.iter().map(|&s| mdp.state_name(s)).collect();
        let acts: Vec<String> = ec
            .actions
            .iter()
            .map(|(&s, ks)| {
                let names: Vec<_> = ks.iter().map(|&k| mdp.action_name(mdp.choices(s)[k].action)).collect();
                format!("{}:{}", mdp.state_name(s), names.join("/"))
            })
            .collect();
        println!("MEC {states:?}  actions {}", acts.join(" "));
    }

    let p = product_rabin(&mdp, &infinitely_often("g", true))?;
    let (aecs, c) = accepting_end_components(&p);
    println!("product has {} states; {} accepting end components", p.num_states(), aecs.len());
    for a in &aecs {
        let states: Vec<String> =
            a.ec.states.iter().map(|&v| format!("({},q{})", mdp.state_name(p.pairs[v].0), p.pairs[v].1)).collect();
        println!("  pair {}: {}", a.pair, states.join(" "));
    }
    println!("C has {} states", c.len());
    Ok(())
}
