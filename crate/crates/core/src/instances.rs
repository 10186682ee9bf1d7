//! Small canned and seeded-random instances used by tests, examples and the
//! benchmark harness.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomposition::Partition;
use crate::mdp::{Mdp, MdpBuilder, RewardFn};

/// The eight-state, two-action example MDP with states `s0..s7` and actions
/// `alpha`/`beta`. Under the partition {s4,s5,s6} / {s0,s1,s2,s3,s7} it
/// decomposes into K₀={s2,s4,s7}, K₁={s5,s6}, K₂={s0,s1,s3}.
pub fn eight_state_mdp() -> Mdp {
    let mut b = MdpBuilder::new();
    for i in 0..8 {
        b.state(&format!("s{i}"));
    }
    b.action("alpha");
    b.action("beta");
    let rows: &[(&str, &str, &[(&str, f64)])] = &[
        ("s0", "alpha", &[("s1", 0.5), ("s2", 0.5)]),
        ("s0", "beta", &[("s3", 1.0)]),
        ("s1", "alpha", &[("s2", 1.0)]),
        ("s1", "beta", &[("s1", 0.5), ("s3", 0.5)]),
        ("s2", "alpha", &[("s4", 0.6), ("s0", 0.4)]),
        ("s2", "beta", &[("s3", 1.0)]),
        ("s3", "alpha", &[("s7", 1.0)]),
        ("s3", "beta", &[("s0", 0.5), ("s3", 0.5)]),
        ("s4", "alpha", &[("s5", 0.8), ("s4", 0.2)]),
        ("s4", "beta", &[("s7", 1.0)]),
        ("s5", "alpha", &[("s6", 1.0)]),
        ("s5", "beta", &[("s4", 1.0)]),
        ("s6", "alpha", &[("s2", 0.9), ("s5", 0.1)]),
        ("s7", "alpha", &[("s4", 0.5), ("s7", 0.5)]),
        ("s7", "beta", &[("s3", 1.0)]),
    ];
    for (s, a, succ) in rows {
        for (t, p) in *succ {
            b.transition(s, a, t, *p);
        }
    }
    b.initial("s0", 1.0);
    b.build().expect("eight-state MDP is valid")
}

/// The partition {S₁={s4,s5,s6}, S₂={s0,s1,s2,s3,s7}} of [`eight_state_mdp`].
pub fn eight_state_partition(mdp: &Mdp) -> Partition {
    let ids = |names: &[&str]| names.iter().map(|n| mdp.state_id(n).unwrap()).collect();
    Partition::new(vec![ids(&["s4", "s5", "s6"]), ids(&["s0", "s1", "s2", "s3", "s7"])])
}

/// Reward on [`eight_state_mdp`] in the style of the gridworld experiments: +100
/// in s6, −1000 in s3, −1 elsewhere.
pub fn eight_state_rewards(mdp: &Mdp) -> RewardFn {
    let goal = mdp.state_id("s6").ok();
    let bad = mdp.state_id("s3").ok();
    RewardFn::from_fn(mdp, |s, _| {
        if Some(s) == goal {
            100.0
        } else if Some(s) == bad {
            -1000.0
        } else {
            -1.0
        }
    })
}

/// One state, one action, self-loop with probability 1.
pub fn self_loop() -> Mdp {
    let mut b = MdpBuilder::new();
    b.transition("s", "a", "s", 1.0).initial("s", 1.0);
    b.build().unwrap()
}

/// Two states, two actions; every action flips the state.
pub fn flip_chain() -> Mdp {
    let mut b = MdpBuilder::new();
    for a in ["a", "b"] {
        b.transition("s0", a, "s1", 1.0).transition("s1", a, "s0", 1.0);
    }
    b.initial("s0", 1.0);
    b.build().unwrap()
}

fn random_distribution(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Random sparse MDP: each state enables 1..=`max_actions` actions, each
/// with 1..=3 successors. The initial distribution is random with full
/// support.
pub fn random_mdp(seed: u64, n: usize, max_actions: usize) -> Mdp {
    random_mdp_with(seed, n, max_actions, false)
}

/// Like [`random_mdp`], but every action also moves to `s+1 mod n` with
/// positive probability, so every memoryless policy induces an irreducible
/// chain.
pub fn random_ergodic_mdp(seed: u64, n: usize, max_actions: usize) -> Mdp {
    random_mdp_with(seed, n, max_actions, true)
}

fn random_mdp_with(seed: u64, n: usize, max_actions: usize, ring: bool) -> Mdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = MdpBuilder::new();
    let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    for name in &names {
        b.state(name);
    }
    let actions: Vec<String> = (0..max_actions).map(|i| format!("a{i}")).collect();
    for a in &actions {
        b.action(a);
    }
    for s in 0..n {
        let k = rng.gen_range(1..=max_actions);
        let mut acts: Vec<usize> = (0..max_actions).collect();
        acts.shuffle(&mut rng);
        acts.truncate(k);
        acts.sort_unstable();
        for a in acts {
            let fanout = rng.gen_range(1..=3.min(n));
            let mut targets: Vec<usize> = (0..n).collect();
            targets.shuffle(&mut rng);
            targets.truncate(fanout);
            if ring && !targets.contains(&((s + 1) % n)) {
                targets.push((s + 1) % n);
            }
            let probs = random_distribution(&mut rng, targets.len());
            for (t, p) in targets.into_iter().zip(probs) {
                b.transition(&names[s], &actions[a], &names[t], p);
            }
        }
    }
    let u0 = random_distribution(&mut rng, n);
    for (s, p) in u0.into_iter().enumerate() {
        b.initial(&names[s], p);
    }
    b.build().expect("random MDP is valid")
}

/// Random partition into exactly `regions` nonempty regions
/// (`regions ≤ n`).
pub fn random_partition(seed: u64, n: usize, regions: usize) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut out = vec![Vec::new(); regions];
    for (i, &s) in order.iter().enumerate() {
        let r = if i < regions { i } else { rng.gen_range(0..regions) };
        out[r].push(s);
    }
    Partition::new(out)
}

/// Attaches random labels over `ap` to an MDP (each proposition holds at a
/// state with probability `density`).
pub fn random_labels(mdp: &Mdp, seed: u64, ap: &[&str], density: f64) -> Mdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ed_270b);
    let labels = (0..mdp.num_states())
        .map(|_| ap.iter().filter(|_| rng.gen_bool(density)).map(|p| p.to_string()).collect())
        .collect();
    let choices = (0..mdp.num_states()).map(|s| mdp.choices(s).to_vec()).collect();
    Mdp::from_parts(
        mdp.state_names().to_vec(),
        mdp.action_names().to_vec(),
        mdp.initial().to_vec(),
        choices,
        Some(labels),
        ap.iter().map(|s| s.to_string()).collect(),
    )
    .expect("labeling keeps the MDP valid")
}
