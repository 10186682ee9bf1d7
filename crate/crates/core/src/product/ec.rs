//! Maximal end components by iterated SCC pruning.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::{ProductAcceptance, ProductMdp};
use crate::mdp::{Mdp, StateId};

/// (W, f): `actions[v]` lists the choice indices of `v` kept by f.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct EndComponent {
    pub states: BTreeSet<StateId>,
    pub actions: BTreeMap<StateId, Vec<usize>>,
}

impl EndComponent {
    /// Closed under f and strongly connected through f's edges.
    pub fn is_end_component(&self, mdp: &Mdp) -> bool {
        if self.states.is_empty() || self.actions.keys().ne(self.states.iter()) {
            return false;
        }
        for (&v, ks) in &self.actions {
            if ks.is_empty() {
                return false;
            }
            for &k in ks {
                let Some(ch) = mdp.choices(v).get(k) else { return false };
                if ch.successors.iter().any(|(t, p)| *p > 0.0 && !self.states.contains(t)) {
                    return false;
                }
            }
        }
        let sccs = sccs_of(mdp, &self.states, |v| self.actions[&v].clone());
        sccs.len() == 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AcceptingEc {
    pub ec: EndComponent,
    /// Index of the Rabin pair it satisfies (0 for Büchi).
    pub pair: usize,
}

fn sccs_of(mdp: &Mdp, states: &BTreeSet<StateId>, actions: impl Fn(StateId) -> Vec<usize>) -> Vec<Vec<StateId>> {
    let order: Vec<StateId> = states.iter().copied().collect();
    let pos: BTreeMap<StateId, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut g = DiGraph::<StateId, ()>::with_capacity(order.len(), 0);
    let nodes: Vec<_> = order.iter().map(|&v| g.add_node(v)).collect();
    for (i, &v) in order.iter().enumerate() {
        for k in actions(v) {
            for &(t, p) in &mdp.choices(v)[k].successors {
                if p > 0.0 {
                    if let Some(&j) = pos.get(&t) {
                        g.add_edge(nodes[i], nodes[j], ());
                    }
                }
            }
        }
    }
    tarjan_scc(&g).into_iter().map(|c| c.into_iter().map(|n| g[n]).collect()).collect()
}

/// Maximal end components of the whole MDP, ordered by smallest state.
pub fn mec_decomposition(mdp: &Mdp) -> Vec<EndComponent> {
    mec_decomposition_within(mdp, &(0..mdp.num_states()).collect())
}

/// Maximal end components of the sub-MDP on `allowed`: only actions whose
/// successors all stay in `allowed` are kept.
pub fn mec_decomposition_within(mdp: &Mdp, allowed: &BTreeSet<StateId>) -> Vec<EndComponent> {
    let mut comp_of: BTreeMap<StateId, usize> = allowed.iter().map(|&v| (v, 0)).collect();
    let mut actions: BTreeMap<StateId, Vec<usize>> = BTreeMap::new();
    for &v in allowed {
        let ks: Vec<usize> = (0..mdp.choices(v).len())
            .filter(|&k| mdp.choices(v)[k].successors.iter().all(|(t, p)| *p == 0.0 || allowed.contains(t)))
            .collect();
        actions.insert(v, ks);
    }
    loop {
        // drop states without actions, then actions leaving the remaining set
        let mut changed = true;
        while changed {
            changed = false;
            let dead: Vec<StateId> = actions.iter().filter(|(_, ks)| ks.is_empty()).map(|(&v, _)| v).collect();
            for v in dead {
                actions.remove(&v);
                comp_of.remove(&v);
                changed = true;
            }
            for (&v, ks) in actions.iter_mut() {
                let before = ks.len();
                ks.retain(|&k| mdp.choices(v)[k].successors.iter().all(|(t, p)| *p == 0.0 || comp_of.contains_key(t)));
                changed |= ks.len() != before;
            }
        }
        let states: BTreeSet<StateId> = actions.keys().copied().collect();
        let sccs = sccs_of(mdp, &states, |v| actions[&v].clone());
        for (c, scc) in sccs.iter().enumerate() {
            for &v in scc {
                comp_of.insert(v, c);
            }
        }
        // keep only actions whose successors share the state's SCC
        let mut pruned = false;
        for (&v, ks) in actions.iter_mut() {
            let cv = comp_of[&v];
            let before = ks.len();
            ks.retain(|&k| mdp.choices(v)[k].successors.iter().all(|(t, p)| *p == 0.0 || comp_of.get(t) == Some(&cv)));
            pruned |= ks.len() != before;
        }
        if !pruned && actions.values().all(|ks| !ks.is_empty()) {
            let mut out: Vec<EndComponent> = sccs
                .into_iter()
                .map(|scc| {
                    let states: BTreeSet<StateId> = scc.into_iter().collect();
                    let acts = states.iter().map(|&v| (v, actions[&v].clone())).collect();
                    EndComponent { states, actions: acts }
                })
                .collect();
            out.sort();
            return out;
        }
        // comp_of must only mark membership for the next pruning pass
        for c in comp_of.values_mut() {
            *c = 0;
        }
    }
}

/// Accepting end components and their union C. For pair i the MECs of the
/// sub-MDP on V ∖ Ĵ_i that meet Ĥ_i are accepting. A Büchi set F is
/// treated as the single pair (∅, F).
pub fn accepting_end_components(p: &ProductMdp) -> (Vec<AcceptingEc>, BTreeSet<StateId>) {
    let pairs: Vec<(BTreeSet<StateId>, BTreeSet<StateId>)> = match &p.acceptance {
        ProductAcceptance::Rabin(pairs) => pairs.clone(),
        ProductAcceptance::Buchi(f) => vec![(BTreeSet::new(), f.clone())],
    };
    let mut out = Vec::new();
    let mut c = BTreeSet::new();
    for (i, (j, h)) in pairs.iter().enumerate() {
        let allowed: BTreeSet<StateId> = (0..p.num_states()).filter(|v| !j.contains(v)).collect();
        for ec in mec_decomposition_within(&p.mdp, &allowed) {
            if ec.states.iter().any(|v| h.contains(v)) {
                c.extend(ec.states.iter().copied());
                out.push(AcceptingEc { ec, pair: i });
            }
        }
    }
    (out, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::random_mdp;
    use crate::mdp::MdpBuilder;

    fn funnel() -> Mdp {
        // t0 funnels into two absorbing cycles {c0,c1} and {d0,d1}; t1 loops
        // back to t0 or falls into c0
        let mut b = MdpBuilder::new();
        b.transition("t0", "a", "c0", 0.5).transition("t0", "a", "t1", 0.5);
        b.transition("t0", "b", "d0", 1.0);
        b.transition("t1", "a", "t0", 0.7).transition("t1", "a", "c0", 0.3);
        b.transition("c0", "a", "c1", 1.0).transition("c1", "a", "c0", 1.0);
        b.transition("d0", "a", "d1", 1.0).transition("d1", "a", "d0", 0.9).transition("d1", "a", "t0", 0.1);
        b.transition("d1", "b", "d0", 1.0);
        b.initial("t0", 1.0);
        b.build().unwrap()
    }

    #[test]
    fn funnel_has_two_mecs() {
        let m = funnel();
        let mecs = mec_decomposition(&m);
        let id = |n: &str| m.state_id(n).unwrap();
        let sets: Vec<BTreeSet<StateId>> = mecs.iter().map(|e| e.states.clone()).collect();
        // t1 always risks falling into c0, so it is transient; t0 survives
        // through action b into the d-cycle, which can return to t0
        assert_eq!(sets, vec![BTreeSet::from([id("t0"), id("d0"), id("d1")]), BTreeSet::from([id("c0"), id("c1")])]);
        assert_eq!(mecs[0].actions[&id("t0")], vec![1]);
        assert!(mecs.iter().all(|e| e.is_end_component(&m)));
    }

    #[test]
    fn whole_mdp_and_sink() {
        let mut b = MdpBuilder::new();
        b.transition("x", "a", "y", 1.0).transition("y", "a", "x", 1.0).transition("y", "b", "y", 1.0);
        b.initial("x", 1.0);
        let m = b.build().unwrap();
        let mecs = mec_decomposition(&m);
        assert_eq!(mecs.len(), 1);
        assert_eq!(mecs[0].states.len(), 2);
        assert_eq!(mecs[0].actions[&1], vec![0, 1]);

        let mut b = MdpBuilder::new();
        b.transition("u", "a", "sink", 1.0).transition("sink", "a", "sink", 1.0).initial("u", 1.0);
        let m = b.build().unwrap();
        let mecs = mec_decomposition(&m);
        assert_eq!(mecs.len(), 1);
        assert_eq!(mecs[0].states, BTreeSet::from([m.state_id("sink").unwrap()]));
    }

    #[test]
    fn mecs_disjoint_and_valid_on_random() {
        for seed in 0..50 {
            let m = random_mdp(seed, 9, 3);
            let mecs = mec_decomposition(&m);
            let mut seen = BTreeSet::new();
            for e in &mecs {
                assert!(e.is_end_component(&m), "seed {seed}: {e:?}");
                assert!(e.states.iter().all(|v| seen.insert(*v)));
            }
        }
    }
}
