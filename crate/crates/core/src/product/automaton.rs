//! Deterministic Rabin and Büchi automata over 2^AP.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported alphabet is 2^MAX_AP letters.
pub const MAX_AP: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RabinPair {
    pub j: BTreeSet<usize>,
    pub h: BTreeSet<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Acceptance {
    Rabin(Vec<RabinPair>),
    Buchi(BTreeSet<usize>),
}

/// A letter is a subset of AP, stored as a bitmask over `ap` positions.
pub type Letter = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct DeterministicAutomaton {
    states: Vec<String>,
    ap: Vec<String>,
    initial: usize,
    /// `delta[q][letter]`
    delta: Vec<Vec<usize>>,
    acceptance: Acceptance,
}

impl DeterministicAutomaton {
    /// Builds an automaton from a total transition function given as a
    /// closure over (state, letter).
    pub fn from_fn(
        states: Vec<String>,
        ap: Vec<String>,
        initial: usize,
        delta: impl Fn(usize, Letter) -> usize,
        acceptance: Acceptance,
    ) -> Result<Self> {
        if ap.len() > MAX_AP {
            return Err(Error::Automaton(format!("at most {MAX_AP} atomic propositions supported")));
        }
        let letters = 1usize << ap.len();
        let table = (0..states.len()).map(|q| (0..letters).map(|l| delta(q, l as Letter)).collect()).collect();
        let a = DeterministicAutomaton { states, ap, initial, delta: table, acceptance };
        a.validate()?;
        Ok(a)
    }

    fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 {
            return Err(Error::Automaton("automaton has no states".into()));
        }
        if self.initial >= n {
            return Err(Error::Automaton(format!("initial state {} out of range", self.initial)));
        }
        for (q, row) in self.delta.iter().enumerate() {
            if let Some(&t) = row.iter().find(|&&t| t >= n) {
                return Err(Error::Automaton(format!("transition from {} to unknown state {t}", self.states[q])));
            }
        }
        let in_range = |s: &BTreeSet<usize>| s.iter().all(|&q| q < n);
        match &self.acceptance {
            Acceptance::Rabin(pairs) => {
                if pairs.is_empty() {
                    return Err(Error::Automaton("Rabin acceptance needs at least one pair".into()));
                }
                if !pairs.iter().all(|p| in_range(&p.j) && in_range(&p.h)) {
                    return Err(Error::Automaton("Rabin pair mentions an unknown state".into()));
                }
            }
            Acceptance::Buchi(f) => {
                if !in_range(f) {
                    return Err(Error::Automaton("Büchi set mentions an unknown state".into()));
                }
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn ap(&self) -> &[String] {
        &self.ap
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn acceptance(&self) -> &Acceptance {
        &self.acceptance
    }

    pub fn step(&self, q: usize, letter: Letter) -> usize {
        self.delta[q][letter as usize]
    }

    /// Encodes a set of propositions as a letter.
    pub fn letter<S: AsRef<str>>(&self, props: impl IntoIterator<Item = S>) -> Result<Letter> {
        let mut l = 0;
        for p in props {
            let p = p.as_ref();
            let k = self
                .ap
                .iter()
                .position(|a| a == p)
                .ok_or_else(|| Error::Automaton(format!("proposition `{p}` not in the automaton alphabet")))?;
            l |= 1 << k;
        }
        Ok(l)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str::<AutomatonFile>(text)?.into_automaton()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&AutomatonFile::from_automaton(self))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelSpec {
    True(TrueTag),
    Sets(Vec<Vec<String>>),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrueTag {
    True,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub from: String,
    pub label: LabelSpec,
    pub to: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairSpec {
    #[serde(rename = "J")]
    pub j: Vec<String>,
    #[serde(rename = "H")]
    pub h: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutomatonKind {
    Rabin,
    Buchi,
}

/// On-disk automaton. Each transition lists the exact AP subsets it
/// reads, or `"true"` for every letter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AutomatonFile {
    #[serde(rename = "type")]
    pub kind: AutomatonKind,
    pub states: Vec<String>,
    pub initial: String,
    pub ap: Vec<String>,
    pub transitions: Vec<TransitionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabin_pairs: Option<Vec<PairSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buchi: Option<Vec<String>>,
}

impl AutomatonFile {
    pub fn into_automaton(self) -> Result<DeterministicAutomaton> {
        if self.ap.len() > MAX_AP {
            return Err(Error::Automaton(format!("at most {MAX_AP} atomic propositions supported")));
        }
        let index: BTreeMap<&str, usize> = self.states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        if index.len() != self.states.len() {
            return Err(Error::Automaton("duplicate automaton state name".into()));
        }
        let sid = |name: &str| {
            index.get(name).copied().ok_or_else(|| Error::Automaton(format!("unknown automaton state `{name}`")))
        };
        let letters = 1usize << self.ap.len();
        let encode = |set: &[String]| -> Result<usize> {
            let mut l = 0;
            for p in set {
                let k = self
                    .ap
                    .iter()
                    .position(|a| a == p)
                    .ok_or_else(|| Error::Automaton(format!("proposition `{p}` not declared in ap")))?;
                l |= 1 << k;
            }
            Ok(l)
        };
        let mut table: Vec<Vec<Option<usize>>> = vec![vec![None; letters]; self.states.len()];
        for t in &self.transitions {
            let (q, to) = (sid(&t.from)?, sid(&t.to)?);
            let covered: Vec<usize> = match &t.label {
                LabelSpec::True(_) => (0..letters).collect(),
                LabelSpec::Sets(sets) => sets.iter().map(|s| encode(s)).collect::<Result<_>>()?,
            };
            for l in covered {
                match table[q][l] {
                    Some(prev) if prev != to => {
                        return Err(Error::Automaton(format!(
                            "state `{}` has two successors on letter {:?}",
                            t.from,
                            letter_props(&self.ap, l as Letter)
                        )))
                    }
                    _ => table[q][l] = Some(to),
                }
            }
        }
        let mut delta = Vec::with_capacity(self.states.len());
        for (q, row) in table.into_iter().enumerate() {
            let mut out = Vec::with_capacity(letters);
            for (l, t) in row.into_iter().enumerate() {
                out.push(t.ok_or_else(|| {
                    Error::Automaton(format!(
                        "transition function not total: `{}` has no successor on {:?}",
                        self.states[q],
                        letter_props(&self.ap, l as Letter)
                    ))
                })?);
            }
            delta.push(out);
        }
        let set = |names: &[String]| names.iter().map(|n| sid(n)).collect::<Result<BTreeSet<usize>>>();
        let acceptance = match (self.kind, &self.rabin_pairs, &self.buchi) {
            (AutomatonKind::Rabin, Some(pairs), _) => Acceptance::Rabin(
                pairs.iter().map(|p| Ok(RabinPair { j: set(&p.j)?, h: set(&p.h)? })).collect::<Result<_>>()?,
            ),
            (AutomatonKind::Buchi, _, Some(f)) => Acceptance::Buchi(set(f)?),
            (AutomatonKind::Rabin, None, _) => {
                return Err(Error::Automaton("rabin automaton without rabin_pairs".into()))
            }
            (AutomatonKind::Buchi, _, None) => {
                return Err(Error::Automaton("buchi automaton without buchi set".into()))
            }
        };
        let a = DeterministicAutomaton {
            states: self.states.clone(),
            ap: self.ap.clone(),
            initial: sid(&self.initial)?,
            delta,
            acceptance,
        };
        a.validate()?;
        Ok(a)
    }

    /// One transition entry per (from, to) pair, listing every letter.
    pub fn from_automaton(a: &DeterministicAutomaton) -> Self {
        let mut transitions = Vec::new();
        let letters = 1usize << a.ap.len();
        for q in 0..a.num_states() {
            let mut by_target: BTreeMap<usize, Vec<Vec<String>>> = BTreeMap::new();
            for l in 0..letters {
                by_target.entry(a.delta[q][l]).or_default().push(letter_props(&a.ap, l as Letter));
            }
            for (to, sets) in by_target {
                let label = if sets.len() == letters { LabelSpec::True(TrueTag::True) } else { LabelSpec::Sets(sets) };
                transitions.push(TransitionSpec { from: a.states[q].clone(), label, to: a.states[to].clone() });
            }
        }
        let names = |s: &BTreeSet<usize>| s.iter().map(|&q| a.states[q].clone()).collect();
        let (kind, rabin_pairs, buchi) = match &a.acceptance {
            Acceptance::Rabin(p) => (
                AutomatonKind::Rabin,
                Some(p.iter().map(|p| PairSpec { j: names(&p.j), h: names(&p.h) }).collect()),
                None,
            ),
            Acceptance::Buchi(f) => (AutomatonKind::Buchi, None, Some(names(f))),
        };
        AutomatonFile {
            kind,
            states: a.states.clone(),
            initial: a.states[a.initial].clone(),
            ap: a.ap.clone(),
            transitions,
            rabin_pairs,
            buchi,
        }
    }
}

fn letter_props(ap: &[String], l: Letter) -> Vec<String> {
    ap.iter().enumerate().filter(|(k, _)| l & (1 << k) != 0).map(|(_, p)| p.clone()).collect()
}

/// Two-state automaton for "infinitely often `p`": it moves to `q1` exactly
/// when the letter read contains `p`. Büchi set {q1}; as a Rabin automaton
/// the single pair is (∅, {q1}).
pub fn infinitely_often(p: &str, rabin: bool) -> DeterministicAutomaton {
    let acceptance = if rabin {
        Acceptance::Rabin(vec![RabinPair { j: BTreeSet::new(), h: BTreeSet::from([1]) }])
    } else {
        Acceptance::Buchi(BTreeSet::from([1]))
    };
    DeterministicAutomaton::from_fn(
        vec!["q0".into(), "q1".into()],
        vec![p.to_string()],
        0,
        |_, l| usize::from(l & 1 != 0),
        acceptance,
    )
    .expect("two-state automaton is well formed")
}

/// Three-state automaton for "eventually `goal`, never `avoid` before it":
/// `q0` waiting, `q1` goal seen (absorbing, accepting), `q2` failed
/// (absorbing). Rabin pair (∅, {q1}).
pub fn reach_avoid(goal: &str, avoid: &str) -> DeterministicAutomaton {
    DeterministicAutomaton::from_fn(
        vec!["q0".into(), "q1".into(), "q2".into()],
        vec![goal.to_string(), avoid.to_string()],
        0,
        |q, l| match q {
            0 if l & 2 != 0 => 2,
            0 if l & 1 != 0 => 1,
            q => q,
        },
        Acceptance::Rabin(vec![RabinPair { j: BTreeSet::new(), h: BTreeSet::from([1]) }]),
    )
    .expect("three-state automaton is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    const GF_P: &str = r#"{
        "type": "buchi",
        "states": ["q0", "q1"],
        "initial": "q0",
        "ap": ["p"],
        "transitions": [
            {"from": "q0", "label": [["p"]], "to": "q1"},
            {"from": "q0", "label": [[]], "to": "q0"},
            {"from": "q1", "label": [["p"]], "to": "q1"},
            {"from": "q1", "label": [[]], "to": "q0"}
        ],
        "buchi": ["q1"]
    }"#;

    #[test]
    fn parses_and_matches_builtin() {
        let a = DeterministicAutomaton::from_json_str(GF_P).unwrap();
        assert_eq!(a, infinitely_often("p", false));
        assert_eq!(a.step(0, a.letter(["p"]).unwrap()), 1);
        assert_eq!(a.step(1, 0), 0);
    }

    #[test]
    fn json_round_trip() {
        for a in [infinitely_often("p", true), reach_avoid("g", "b")] {
            let back = DeterministicAutomaton::from_json_str(&a.to_json_string().unwrap()).unwrap();
            assert_eq!(back, a);
        }
    }

    #[test]
    fn true_label_covers_everything() {
        let text = r#"{"type":"rabin","states":["q"],"initial":"q","ap":["a","b"],
            "transitions":[{"from":"q","label":"true","to":"q"}],
            "rabin_pairs":[{"J":[],"H":["q"]}]}"#;
        let a = DeterministicAutomaton::from_json_str(text).unwrap();
        assert!((0..4).all(|l| a.step(0, l) == 0));
    }

    #[test]
    fn rejects_partial_and_nondeterministic() {
        let partial = GF_P
            .replace(r#"{"from": "q1", "label": [[]], "to": "q0"}"#, r#"{"from": "q1", "label": [["p"]], "to": "q1"}"#);
        let err = DeterministicAutomaton::from_json_str(&partial).unwrap_err().to_string();
        assert!(err.contains("not total"), "{err}");
        let nondet = GF_P
            .replace(r#"{"from": "q1", "label": [[]], "to": "q0"}"#, r#"{"from": "q1", "label": "true", "to": "q0"}"#);
        assert!(DeterministicAutomaton::from_json_str(&nondet).unwrap_err().to_string().contains("two successors"));
        let bad_ap = GF_P.replace(r#"[["p"]], "to": "q1"}"#, r#"[["r"]], "to": "q1"}"#);
        assert!(DeterministicAutomaton::from_json_str(&bad_ap).is_err());
    }

    #[test]
    fn reach_avoid_semantics() {
        let a = reach_avoid("g", "b");
        let g = a.letter(["g"]).unwrap();
        let b = a.letter(["b"]).unwrap();
        assert_eq!(a.step(0, g), 1);
        assert_eq!(a.step(0, b), 2);
        assert_eq!(a.step(0, g | b), 2);
        assert_eq!(a.step(1, b), 1);
        assert_eq!(a.step(0, 0), 0);
    }
}
