//! Products of labeled MDPs with deterministic ω-automata, end components,
//! and the reductions of Rabin and Büchi objectives to reward problems.

mod automaton;
mod ec;
mod sink;

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::decomposition::Partition;
use crate::error::{Error, Result};
use crate::mdp::{Choice, Mdp, RewardFn, StateId};

pub use automaton::{
    infinitely_often, reach_avoid, Acceptance, AutomatonFile, AutomatonKind, DeterministicAutomaton, LabelSpec, Letter,
    PairSpec, RabinPair, TransitionSpec, MAX_AP,
};
pub use ec::{accepting_end_components, mec_decomposition, mec_decomposition_within, AcceptingEc, EndComponent};
pub use sink::{sinkify, stitch_policy, Sinkified};

/// Acceptance lifted to product states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProductAcceptance {
    /// (Ĵ_i, Ĥ_i) per pair.
    Rabin(Vec<(BTreeSet<StateId>, BTreeSet<StateId>)>),
    Buchi(BTreeSet<StateId>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductMdp {
    /// MDP over the reachable pairs (s, q); its initial distribution is μ₀.
    pub mdp: Mdp,
    /// (s, q) of every product state.
    pub pairs: Vec<(StateId, usize)>,
    pub acceptance: ProductAcceptance,
}

impl ProductMdp {
    pub fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    pub fn state_of(&self, s: StateId, q: usize) -> Option<StateId> {
        self.pairs.iter().position(|&p| p == (s, q))
    }

    pub fn mu0(&self) -> &[f64] {
        self.mdp.initial()
    }

    /// Puts (s, q) in the region of s, for a partition `pi` of the base MDP.
    /// Regions left empty are dropped.
    pub fn lift_partition(&self, base: &Mdp, pi: &Partition) -> Result<Partition> {
        let owner = pi.region_of(base.num_states())?;
        let mut regions = vec![Vec::new(); pi.len()];
        for (v, &(s, _)) in self.pairs.iter().enumerate() {
            regions[owner[s]].push(v);
        }
        regions.retain(|r| !r.is_empty());
        Ok(Partition::new(regions))
    }
}

fn letters_of(mdp: &Mdp, a: &DeterministicAutomaton) -> Result<Vec<Letter>> {
    if !mdp.has_labels() {
        return Err(Error::Automaton("the MDP carries no labels".into()));
    }
    (0..mdp.num_states())
        .map(|s| {
            let props = mdp.labels(s).expect("labels checked above");
            a.letter(props.iter()).map_err(|_| {
                let bad: Vec<&String> = props.iter().filter(|p| !a.ap().contains(p)).collect();
                Error::Automaton(format!(
                    "state {} is labeled with {:?}, outside the automaton alphabet",
                    mdp.state_name(s),
                    bad
                ))
            })
        })
        .collect()
}

/// Product restricted to pairs reachable from the support of μ₀. Returns
/// the MDP together with its (s, q) pairs.
fn build_product(mdp: &Mdp, a: &DeterministicAutomaton) -> Result<(Mdp, Vec<(StateId, usize)>)> {
    let letter = letters_of(mdp, a)?;
    let mut index: HashMap<(StateId, usize), StateId> = HashMap::new();
    let mut pairs = Vec::new();
    let mut queue = VecDeque::new();
    let mut visit =
        |p: (StateId, usize), pairs: &mut Vec<(StateId, usize)>, queue: &mut VecDeque<StateId>| -> StateId {
            *index.entry(p).or_insert_with(|| {
                pairs.push(p);
                queue.push_back(pairs.len() - 1);
                pairs.len() - 1
            })
        };
    let mut mu0 = Vec::new();
    for (s, &u) in mdp.initial().iter().enumerate() {
        if u > 0.0 {
            let v = visit((s, a.step(a.initial(), letter[s])), &mut pairs, &mut queue);
            mu0.push((v, u));
        }
    }
    let mut choices: Vec<Vec<Choice>> = Vec::new();
    while let Some(v) = queue.pop_front() {
        let (s, q) = pairs[v];
        let mut row = Vec::with_capacity(mdp.choices(s).len());
        for ch in mdp.choices(s) {
            let successors = ch
                .successors
                .iter()
                .map(|&(t, p)| (visit((t, a.step(q, letter[t])), &mut pairs, &mut queue), p))
                .collect::<Vec<_>>();
            row.push(Choice { action: ch.action, successors });
        }
        if choices.len() <= v {
            choices.resize(v + 1, Vec::new());
        }
        choices[v] = row;
    }
    for row in &mut choices {
        for ch in row.iter_mut() {
            ch.successors.sort_by_key(|&(t, _)| t);
        }
    }
    let mut initial = vec![0.0; pairs.len()];
    for (v, u) in mu0 {
        initial[v] += u;
    }
    let names = pairs.iter().map(|&(s, q)| format!("({},{})", mdp.state_name(s), a.state_names()[q])).collect();
    let product = Mdp::from_parts(names, mdp.action_names().to_vec(), initial, choices, None, Vec::new())?;
    Ok((product, pairs))
}

fn lift(pairs: &[(StateId, usize)], qs: &BTreeSet<usize>) -> BTreeSet<StateId> {
    pairs.iter().enumerate().filter(|(_, (_, q))| qs.contains(q)).map(|(v, _)| v).collect()
}

/// M ⋉ A for a deterministic Rabin automaton.
pub fn product_rabin(mdp: &Mdp, dra: &DeterministicAutomaton) -> Result<ProductMdp> {
    let Acceptance::Rabin(pairs_acc) = dra.acceptance() else {
        return Err(Error::Automaton("product_rabin needs a Rabin automaton".into()));
    };
    let (product, pairs) = build_product(mdp, dra)?;
    let acceptance =
        ProductAcceptance::Rabin(pairs_acc.iter().map(|p| (lift(&pairs, &p.j), lift(&pairs, &p.h))).collect());
    Ok(ProductMdp { mdp: product, pairs, acceptance })
}

/// M ⋉ A for a deterministic Büchi automaton; F is the set of reachable
/// pairs whose automaton state is accepting.
pub fn product_buchi(mdp: &Mdp, dba: &DeterministicAutomaton) -> Result<ProductMdp> {
    let Acceptance::Buchi(f) = dba.acceptance() else {
        return Err(Error::Automaton("product_buchi needs a Büchi automaton".into()));
    };
    let (product, pairs) = build_product(mdp, dba)?;
    let acceptance = ProductAcceptance::Buchi(lift(&pairs, f));
    Ok(ProductMdp { mdp: product, pairs, acceptance })
}

/// R(v,a) = Σ_{v′} Δ(v,a)(v′)·1_F(v′). Rabin products use the union of
/// the Ĥ_i as F.
pub fn buchi_frequency_reward(p: &ProductMdp) -> RewardFn {
    let f: BTreeSet<StateId> = match &p.acceptance {
        ProductAcceptance::Buchi(f) => f.clone(),
        ProductAcceptance::Rabin(pairs) => pairs.iter().flat_map(|(_, h)| h.iter().copied()).collect(),
    };
    let values = (0..p.num_states())
        .map(|v| {
            p.mdp
                .choices(v)
                .iter()
                .map(|ch| ch.successors.iter().filter(|(t, _)| f.contains(t)).map(|&(_, pr)| pr).sum())
                .collect()
        })
        .collect();
    RewardFn { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{flip_chain, random_labels, random_mdp};
    use crate::mdp::{average_reward_eval, MdpBuilder};

    fn two_state_p() -> Mdp {
        // s0 --a--> s1 (0.5) / s0 (0.5); s1 --a--> s0
        let mut b = MdpBuilder::new();
        b.transition("s0", "a", "s1", 0.5).transition("s0", "a", "s0", 0.5);
        b.transition("s1", "a", "s0", 1.0);
        b.initial("s0", 1.0).label("s0", "p").atomic_propositions(["p"]);
        b.build().unwrap()
    }

    /// DRA over {p}: q0 until p is read, then q1 forever.
    fn p_seen() -> DeterministicAutomaton {
        DeterministicAutomaton::from_fn(
            vec!["q0".into(), "q1".into()],
            vec!["p".into()],
            0,
            |q, l| if q == 1 || l & 1 != 0 { 1 } else { 0 },
            Acceptance::Rabin(vec![RabinPair { j: BTreeSet::new(), h: BTreeSet::from([1]) }]),
        )
        .unwrap()
    }

    #[test]
    fn hand_built_product() {
        let m = two_state_p();
        let p = product_rabin(&m, &p_seen()).unwrap();
        // initial: (s0, T(q0, {p})) = (s0, q1); then q stays q1
        assert_eq!(p.pairs, vec![(0, 1), (1, 1)]);
        assert_eq!(p.mu0(), &[1.0, 0.0]);
        assert_eq!(p.mdp.choices(0)[0].successors, vec![(0, 0.5), (1, 0.5)]);
        assert_eq!(p.mdp.choices(1)[0].successors, vec![(0, 1.0)]);
        assert_eq!(p.acceptance, ProductAcceptance::Rabin(vec![(BTreeSet::new(), BTreeSet::from([0, 1]))]));

        // starting in the unlabeled state exercises q0
        let m1 = m.with_initial(vec![0.0, 1.0]).unwrap();
        let p1 = product_rabin(&m1, &p_seen()).unwrap();
        assert_eq!(p1.pairs, vec![(1, 0), (0, 1), (1, 1)]);
        assert_eq!(p1.mdp.choices(0)[0].successors, vec![(1, 1.0)]);
        assert_eq!(p1.mdp.state_name(0), "(s1,q0)");
    }

    #[test]
    fn identity_product() {
        let m = random_labels(&random_mdp(2, 7, 2), 2, &["p"], 0.5);
        let all = DeterministicAutomaton::from_fn(
            vec!["q".into()],
            vec!["p".into()],
            0,
            |_, _| 0,
            Acceptance::Rabin(vec![RabinPair { j: BTreeSet::new(), h: BTreeSet::from([0]) }]),
        )
        .unwrap();
        let p = product_rabin(&m, &all).unwrap();
        let ProductAcceptance::Rabin(pairs) = &p.acceptance else { panic!() };
        assert_eq!(pairs[0].1.len(), p.num_states());
        for (v, &(s, _)) in p.pairs.iter().enumerate() {
            assert_eq!(p.mdp.choices(v).len(), m.choices(s).len());
            assert_eq!(p.mu0()[v], m.initial()[s]);
        }
    }

    #[test]
    fn rows_stochastic_and_paths_lift() {
        for seed in 0..20 {
            let m = random_labels(&random_mdp(seed, 8, 3), seed, &["g", "b"], 0.3);
            let a = reach_avoid("g", "b");
            let p = product_rabin(&m, &a).unwrap();
            let letter = letters_of(&m, &a).unwrap();
            for (v, &(s, q)) in p.pairs.iter().enumerate() {
                for (k, ch) in p.mdp.choices(v).iter().enumerate() {
                    let total: f64 = ch.successors.iter().map(|x| x.1).sum();
                    assert!((total - 1.0).abs() < 1e-12);
                    for &(w, pr) in &ch.successors {
                        let (t, q2) = p.pairs[w];
                        assert_eq!(q2, a.step(q, letter[t]));
                        assert_eq!(pr, m.choices(s)[k].prob_to(t));
                    }
                }
            }
        }
    }

    #[test]
    fn label_outside_alphabet_names_state() {
        let m = random_labels(&random_mdp(1, 4, 2), 1, &["zz"], 1.0);
        let err = product_buchi(&m, &infinitely_often("p", false)).unwrap_err().to_string();
        assert!(err.contains("s0") && err.contains("zz"), "{err}");
        assert!(product_buchi(&random_mdp(1, 4, 2), &infinitely_often("p", false)).is_err());
    }

    #[test]
    fn buchi_reward_cases() {
        // F empty when the accepting automaton state is unreachable
        let m = random_labels(&random_mdp(3, 5, 2), 3, &["p"], 0.0);
        let p = product_buchi(&m, &infinitely_often("p", false)).unwrap();
        assert_eq!(p.acceptance, ProductAcceptance::Buchi(BTreeSet::new()));
        assert!(buchi_frequency_reward(&p).values.iter().flatten().all(|&r| r == 0.0));

        // all-accepting one-state DBA
        let all = DeterministicAutomaton::from_fn(
            vec!["q".into()],
            vec!["p".into()],
            0,
            |_, _| 0,
            Acceptance::Buchi(BTreeSet::from([0])),
        )
        .unwrap();
        let p = product_buchi(&m, &all).unwrap();
        assert!(buchi_frequency_reward(&p).values.iter().flatten().all(|&r| (r - 1.0).abs() < 1e-12));
    }

    #[test]
    fn flip_chain_frequency_half() {
        let base = flip_chain();
        let mut b = MdpBuilder::new();
        for a in ["a", "b"] {
            b.transition("s0", a, "s1", 1.0).transition("s1", a, "s0", 1.0);
        }
        b.initial("s0", 1.0).label("s1", "p").atomic_propositions(["p"]);
        let m = b.build().unwrap();
        assert_eq!(m.num_states(), base.num_states());
        let p = product_buchi(&m, &infinitely_often("p", false)).unwrap();
        let r = buchi_frequency_reward(&p);
        let g = average_reward_eval(&p.mdp, &r, 1e-12).unwrap();
        assert!((g.scalar - 0.5).abs() < 1e-9, "{}", g.scalar);
    }
}
