//! Collapsing the accepting end states into one absorbing sink.

use std::collections::{BTreeMap, BTreeSet};

use super::{AcceptingEc, ProductMdp};
use crate::decomposition::Partition;
use crate::error::Result;
use crate::mdp::{Choice, Mdp, Policy, RewardFn, StateId};

/// The reachability instance built from a product and its accepting set C.
///
/// States are the kept states of V ∖ C (those that can reach C in the
/// graph), followed by `sink` and, when some states were pruned, a
/// zero-reward absorbing `trap` that stands in for all of them.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinkified {
    /// Initial distribution is μ̃₀.
    pub mdp: Mdp,
    /// Probability of entering the sink in one step; zero at sink and trap.
    pub reward: RewardFn,
    pub sink: StateId,
    pub trap: Option<StateId>,
    /// Product state → state of `mdp`; `None` for states of C (now the
    /// sink) and pruned states (now the trap).
    pub state_map: Vec<Option<StateId>>,
    /// Product states outside C that cannot reach C; their value is 0.
    pub pruned: BTreeSet<StateId>,
    /// C was empty, so every value is 0.
    pub degenerate: bool,
}

impl Sinkified {
    pub fn init(&self) -> &[f64] {
        self.mdp.initial()
    }

    /// Sink and trap, the states left out of the transient LP.
    pub fn terminal(&self) -> BTreeSet<StateId> {
        std::iter::once(self.sink).chain(self.trap).collect()
    }

    /// Σ_v V(v)·μ̃₀(v) over non-terminal states plus μ̃₀(sink): mass that
    /// starts in C has already reached it.
    pub fn value_at_initial(&self, values: &[f64]) -> f64 {
        let terminal = self.terminal();
        let init = self.init();
        let transient: f64 = (0..init.len()).filter(|v| !terminal.contains(v)).map(|v| values[v] * init[v]).sum();
        transient + init[self.sink]
    }

    /// Restricts a partition of the product to the kept states and adds one
    /// region holding the sink and the trap.
    pub fn lift_partition(&self, pi: &Partition) -> Result<Partition> {
        pi.validate(self.state_map.len())?;
        let mut regions: Vec<Vec<StateId>> =
            pi.regions.iter().map(|r| r.iter().filter_map(|&v| self.state_map[v]).collect()).collect();
        regions.retain(|r: &Vec<StateId>| !r.is_empty());
        regions.push(self.terminal().into_iter().collect());
        Ok(Partition::new(regions))
    }
}

fn can_reach(mdp: &Mdp, target: &BTreeSet<StateId>) -> Vec<bool> {
    let preds = mdp.predecessors();
    let mut seen = vec![false; mdp.num_states()];
    let mut stack: Vec<StateId> = target.iter().copied().collect();
    for &t in target {
        seen[t] = true;
    }
    while let Some(v) = stack.pop() {
        for &(u, _, p) in &preds[v] {
            if p > 0.0 && !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen
}

/// Replaces C by an absorbing sink. The reward of (v, a) is the probability
/// of moving into the sink; with γ = 1 the optimal value is the maximal
/// probability of reaching C.
pub fn sinkify(p: &ProductMdp, c: &BTreeSet<StateId>) -> Sinkified {
    let n = p.num_states();
    let reach = can_reach(&p.mdp, c);
    let kept: Vec<StateId> = (0..n).filter(|v| !c.contains(v) && reach[*v]).collect();
    let pruned: BTreeSet<StateId> = (0..n).filter(|v| !c.contains(v) && !reach[*v]).collect();
    let mut state_map = vec![None; n];
    for (k, &v) in kept.iter().enumerate() {
        state_map[v] = Some(k);
    }
    let sink = kept.len();
    let trap = (!pruned.is_empty()).then_some(sink + 1);
    let total = sink + 1 + usize::from(trap.is_some());
    let target = |w: StateId| -> StateId {
        match state_map[w] {
            Some(k) => k,
            None if c.contains(&w) => sink,
            None => trap.expect("pruned state implies a trap"),
        }
    };

    let mut choices = Vec::with_capacity(total);
    let mut rewards = Vec::with_capacity(total);
    for &v in &kept {
        let mut row = Vec::new();
        let mut rrow = Vec::new();
        for ch in p.mdp.choices(v) {
            let mut succ: BTreeMap<StateId, f64> = BTreeMap::new();
            for &(w, pr) in &ch.successors {
                *succ.entry(target(w)).or_insert(0.0) += pr;
            }
            rrow.push(succ.get(&sink).copied().unwrap_or(0.0).min(1.0));
            row.push(Choice {
                action: ch.action,
                successors: succ.into_iter().map(|(t, pr)| (t, pr.min(1.0))).collect(),
            });
        }
        choices.push(row);
        rewards.push(rrow);
    }
    let absorbing = |s: StateId| -> Vec<Choice> {
        (0..p.mdp.num_actions()).map(|a| Choice { action: a, successors: vec![(s, 1.0)] }).collect()
    };
    for s in std::iter::once(sink).chain(trap) {
        choices.push(absorbing(s));
        rewards.push(vec![0.0; p.mdp.num_actions()]);
    }

    let mut init = vec![0.0; total];
    for (v, &u) in p.mu0().iter().enumerate() {
        init[target(v)] += u;
    }
    init.iter_mut().for_each(|u| *u = u.min(1.0));
    let mut names: Vec<String> = kept.iter().map(|&v| p.mdp.state_name(v).to_string()).collect();
    names.push("sink".into());
    if trap.is_some() {
        names.push("trap".into());
    }
    let mdp = Mdp::from_parts(names, p.mdp.action_names().to_vec(), init, choices, None, Vec::new())
        .expect("sinkified MDP inherits validity from the product");
    Sinkified { mdp, reward: RewardFn { values: rewards }, sink, trap, state_map, pruned, degenerate: c.is_empty() }
}

/// Product policy that follows `reach` (a policy of the sinkified MDP)
/// outside C and, once inside C, the action set of the first accepting end
/// component containing the state, uniformly. Pruned states get the uniform
/// policy and are flagged.
pub fn stitch_policy(p: &ProductMdp, s: &Sinkified, reach: &Policy, aecs: &[AcceptingEc]) -> Policy {
    let mut probs = Vec::with_capacity(p.num_states());
    let mut flagged = Vec::new();
    for v in 0..p.num_states() {
        let k = p.mdp.choices(v).len();
        if let Some(w) = s.state_map[v] {
            probs.push(reach.probs[w].clone());
            if reach.flagged.contains(&w) {
                flagged.push(v);
            }
        } else if let Some(ec) = aecs.iter().find(|e| e.ec.states.contains(&v)) {
            let acts = &ec.ec.actions[&v];
            let mut row = vec![0.0; k];
            for &a in acts {
                row[a] = 1.0 / acts.len() as f64;
            }
            probs.push(row);
        } else {
            probs.push(vec![1.0 / k as f64; k]);
            flagged.push(v);
        }
    }
    Policy { probs, flagged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{random_labels, random_mdp, random_partition};
    use crate::mdp::{reachability_max, value_iteration_discounted};
    use crate::product::{accepting_end_components, product_rabin, reach_avoid};

    #[test]
    fn everything_accepting_gives_lone_sink() {
        let m = random_labels(&random_mdp(4, 6, 2), 4, &["g", "b"], 0.0);
        let p = product_rabin(&m, &reach_avoid("g", "b")).unwrap();
        let all: BTreeSet<StateId> = (0..p.num_states()).collect();
        let s = sinkify(&p, &all);
        assert_eq!(s.mdp.num_states(), 1);
        assert_eq!(s.init(), &[1.0]);
        assert_eq!(s.value_at_initial(&[0.0]), 1.0);
    }

    #[test]
    fn empty_c_is_degenerate() {
        let m = random_labels(&random_mdp(4, 6, 2), 4, &["g", "b"], 0.0);
        let p = product_rabin(&m, &reach_avoid("g", "b")).unwrap();
        let (_, c) = accepting_end_components(&p);
        assert!(c.is_empty());
        let s = sinkify(&p, &c);
        assert!(s.degenerate);
        assert_eq!(s.pruned.len(), p.num_states());
        assert_eq!(s.value_at_initial(&vec![0.0; s.mdp.num_states()]), 0.0);
    }

    #[test]
    fn value_identity_on_random_instances() {
        let mut nontrivial = 0;
        for seed in 0..30 {
            let m = random_labels(&random_mdp(seed, 10, 3), seed, &["g", "b"], 0.25);
            let p = product_rabin(&m, &reach_avoid("g", "b")).unwrap();
            let (aecs, c) = accepting_end_components(&p);
            let s = sinkify(&p, &c);
            let vi = value_iteration_discounted(&s.mdp, &s.reward, 1.0, 1e-12).unwrap();
            let lhs = s.value_at_initial(&vi.per_state);
            let rhs = if c.is_empty() { 0.0 } else { reachability_max(&p.mdp, &c, 1e-12).unwrap().scalar };
            assert!((lhs - rhs).abs() < 1e-6, "seed {seed}: {lhs} vs {rhs}");
            if rhs > 0.0 && rhs < 1.0 {
                nontrivial += 1;
            }
            assert!(aecs.iter().all(|a| a.ec.is_end_component(&p.mdp)));
            let f = stitch_policy(&p, &s, &vi.policy, &aecs);
            assert!(f.is_valid_for(&p.mdp));
            let lifted = p.lift_partition(&m, &random_partition(seed, 10, 3)).unwrap();
            s.lift_partition(&lifted).unwrap().validate(s.mdp.num_states()).unwrap();
        }
        assert!(nontrivial > 5);
    }
}
