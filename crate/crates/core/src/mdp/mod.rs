//! Finite Markov decision processes, memoryless policies and the
//! dynamic-programming oracles used to cross-check the LP solvers.
//!
//! An [`Mdp`] stores its transition kernel sparsely: every state owns a list
//! of [`Choice`]s, one per enabled action, each with its successor
//! distribution. Per-pair data ([`Policy`], [`RewardFn`]) is laid out in the
//! same order, so `choices(s)[k]` and `reward.get(s, k)` always refer to the
//! same state-action pair.

mod io;
mod oracle;
mod policy;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use nalgebra::{DMatrix, DVector};

pub use io::{MdpFile, RewardEntry, TransitionEntry};
pub use oracle::{
    average_reward_eval, check_ergodicity, evaluate_policy_discounted, reachability_max, stationary_distribution,
    value_iteration_discounted, ORACLE_MAX_SWEEPS,
};
pub use policy::{Policy, RewardFn, ValueResult};

use crate::error::{Error, Result};

pub type StateId = usize;
pub type ActionId = usize;

/// Tolerance for probability sums.
pub const PROB_TOL: f64 = 1e-9;

/// One enabled action at a state together with its successor distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub action: ActionId,
    pub successors: Vec<(StateId, f64)>,
}

impl Choice {
    pub fn prob_to(&self, t: StateId) -> f64 {
        self.successors.iter().filter(|(s, _)| *s == t).map(|(_, p)| *p).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    states: Vec<String>,
    actions: Vec<String>,
    initial: Vec<f64>,
    choices: Vec<Vec<Choice>>,
    labels: Option<Vec<BTreeSet<String>>>,
    ap: Vec<String>,
    index: HashMap<String, StateId>,
}

/// A broken MDP invariant, reported by [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    RowSum { state: String, action: String, sum: f64 },
    ZeroRow { state: String, action: String },
    ProbabilityRange { state: String, action: Option<String>, value: f64 },
    InitialSum { sum: f64 },
    DeadState { state: String },
    SuccessorOutOfRange { state: String, action: String, successor: usize },
    DuplicateAction { state: String, action: String },
    UnknownLabel { state: String, ap: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { state, action, sum } => {
                write!(f, "P({state},{action}) sums to {sum}")
            }
            Violation::ZeroRow { state, action } => {
                write!(f, "P({state},{action}) has no successor")
            }
            Violation::ProbabilityRange { state, action: Some(a), value } => {
                write!(f, "P({state},{a}) has probability {value} outside [0,1]")
            }
            Violation::ProbabilityRange { state, action: None, value } => {
                write!(f, "initial probability of {state} is {value}, outside [0,1]")
            }
            Violation::InitialSum { sum } => write!(f, "initial distribution sums to {sum}"),
            Violation::DeadState { state } => write!(f, "state {state} has no enabled action"),
            Violation::SuccessorOutOfRange { state, action, successor } => {
                write!(f, "P({state},{action}) points to unknown state #{successor}")
            }
            Violation::DuplicateAction { state, action } => {
                write!(f, "action {action} appears twice at {state}")
            }
            Violation::UnknownLabel { state, ap } => {
                write!(f, "state {state} carries label {ap} not in the AP set")
            }
        }
    }
}

impl Mdp {
    /// Assembles an MDP from raw parts and validates it.
    pub fn from_parts(
        states: Vec<String>,
        actions: Vec<String>,
        initial: Vec<f64>,
        choices: Vec<Vec<Choice>>,
        labels: Option<Vec<BTreeSet<String>>>,
        ap: Vec<String>,
    ) -> Result<Self> {
        let mdp = Self::from_parts_unchecked(states, actions, initial, choices, labels, ap);
        let violations = validate(&mdp);
        if violations.is_empty() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(violations))
        }
    }

    pub(crate) fn from_parts_unchecked(
        states: Vec<String>,
        actions: Vec<String>,
        initial: Vec<f64>,
        mut choices: Vec<Vec<Choice>>,
        labels: Option<Vec<BTreeSet<String>>>,
        ap: Vec<String>,
    ) -> Self {
        for cs in choices.iter_mut() {
            cs.sort_by_key(|c| c.action);
        }
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Mdp { states, actions, initial, choices, labels, ap, index }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn action_names(&self) -> &[String] {
        &self.actions
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.actions[a]
    }

    pub fn state_id(&self, name: &str) -> Result<StateId> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownState(name.to_string()))
    }

    pub fn action_id(&self, name: &str) -> Result<ActionId> {
        self.actions.iter().position(|a| a == name).ok_or_else(|| Error::UnknownAction(name.to_string()))
    }

    /// Initial distribution u₀, indexed by state.
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn choices(&self, s: StateId) -> &[Choice] {
        &self.choices[s]
    }

    pub fn labels(&self, s: StateId) -> Option<&BTreeSet<String>> {
        self.labels.as_ref().map(|l| &l[s])
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn ap(&self) -> &[String] {
        &self.ap
    }

    /// Position of `action` in `choices(s)`, if enabled.
    pub fn choice_index(&self, s: StateId, action: ActionId) -> Option<usize> {
        self.choices[s].binary_search_by_key(&action, |c| c.action).ok()
    }

    /// Iterates over all state-action pairs as `(state, choice index, choice)`.
    pub fn pairs(&self) -> impl Iterator<Item = (StateId, usize, &Choice)> + '_ {
        self.choices.iter().enumerate().flat_map(|(s, cs)| cs.iter().enumerate().map(move |(k, c)| (s, k, c)))
    }

    /// Returns a copy with a different initial distribution.
    pub fn with_initial(&self, initial: Vec<f64>) -> Result<Self> {
        if initial.len() != self.num_states() {
            return Err(Error::Dimension(format!(
                "initial distribution has {} entries for {} states",
                initial.len(),
                self.num_states()
            )));
        }
        let mut m = self.clone();
        m.initial = initial;
        let v = validate(&m);
        if v.is_empty() {
            Ok(m)
        } else {
            Err(Error::InvalidMdp(v))
        }
    }

    /// Predecessor lists: for every state, the `(s′, choice index, prob)`
    /// entries with P(s′,a)(s) > 0.
    pub fn predecessors(&self) -> Vec<Vec<(StateId, usize, f64)>> {
        let mut pred = vec![Vec::new(); self.num_states()];
        for (s, k, c) in self.pairs() {
            for &(t, p) in &c.successors {
                if p > 0.0 {
                    pred[t].push((s, k, p));
                }
            }
        }
        pred
    }
}

/// Checks every MDP invariant and returns the list of violations (empty iff
/// valid).
pub fn validate(mdp: &Mdp) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = mdp.num_states();
    for s in 0..n {
        let name = &mdp.states[s];
        if mdp.choices[s].is_empty() {
            out.push(Violation::DeadState { state: name.clone() });
        }
        let mut seen = BTreeSet::new();
        for c in &mdp.choices[s] {
            let action = mdp.actions.get(c.action).cloned().unwrap_or_else(|| format!("#{}", c.action));
            if !seen.insert(c.action) {
                out.push(Violation::DuplicateAction { state: name.clone(), action: action.clone() });
            }
            if c.successors.iter().all(|&(_, p)| p == 0.0) {
                out.push(Violation::ZeroRow { state: name.clone(), action });
                continue;
            }
            let mut sum = 0.0;
            for &(t, p) in &c.successors {
                if t >= n {
                    out.push(Violation::SuccessorOutOfRange {
                        state: name.clone(),
                        action: action.clone(),
                        successor: t,
                    });
                }
                if !(0.0..=1.0).contains(&p) || p.is_nan() {
                    out.push(Violation::ProbabilityRange {
                        state: name.clone(),
                        action: Some(action.clone()),
                        value: p,
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROB_TOL {
                out.push(Violation::RowSum { state: name.clone(), action, sum });
            }
        }
    }
    let mut total = 0.0;
    for (s, &p) in mdp.initial.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            out.push(Violation::ProbabilityRange {
                state: mdp.states.get(s).cloned().unwrap_or_default(),
                action: None,
                value: p,
            });
        }
        total += p;
    }
    if mdp.initial.len() != n || (total - 1.0).abs() > PROB_TOL {
        out.push(Violation::InitialSum { sum: total });
    }
    if let Some(labels) = &mdp.labels {
        for (s, ls) in labels.iter().enumerate() {
            for l in ls {
                if !mdp.ap.contains(l) {
                    out.push(Violation::UnknownLabel { state: mdp.states[s].clone(), ap: l.clone() });
                }
            }
        }
    }
    out
}

/// A(s): actions with at least one positive-probability successor.
pub fn enabled_actions(mdp: &Mdp, s: StateId) -> Result<Vec<ActionId>> {
    if s >= mdp.num_states() {
        return Err(Error::UnknownState(format!("#{s}")));
    }
    Ok(mdp.choices[s].iter().filter(|c| c.successors.iter().any(|&(_, p)| p > 0.0)).map(|c| c.action).collect())
}

/// Number m of state-action pairs, which is also the LP column count.
pub fn count_state_action_pairs(mdp: &Mdp) -> usize {
    mdp.choices.iter().map(Vec::len).sum()
}

/// Reduces the MDP to the Markov chain M^f: returns P^f and R^f.
pub fn induce_chain(mdp: &Mdp, f: &Policy, r: &RewardFn) -> (DMatrix<f64>, DVector<f64>) {
    let n = mdp.num_states();
    let mut p = DMatrix::zeros(n, n);
    let mut rv = DVector::zeros(n);
    for (s, k, c) in mdp.pairs() {
        let w = f.probs[s][k];
        if w == 0.0 {
            continue;
        }
        rv[s] += w * r.values[s][k];
        for &(t, q) in &c.successors {
            p[(s, t)] += w * q;
        }
    }
    (p, rv)
}

/// Incremental MDP construction by name.
#[derive(Debug, Default, Clone)]
pub struct MdpBuilder {
    states: Vec<String>,
    state_index: HashMap<String, StateId>,
    actions: Vec<String>,
    initial: BTreeMap<StateId, f64>,
    rows: BTreeMap<(StateId, ActionId), BTreeMap<StateId, f64>>,
    labels: BTreeMap<StateId, BTreeSet<String>>,
    ap: Vec<String>,
    labeled: bool,
}

impl MdpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `name`, declaring it if needed.
    pub fn state(&mut self, name: &str) -> StateId {
        if let Some(&s) = self.state_index.get(name) {
            return s;
        }
        let id = self.states.len();
        self.states.push(name.to_string());
        self.state_index.insert(name.to_string(), id);
        id
    }

    pub fn action(&mut self, name: &str) -> ActionId {
        if let Some(a) = self.actions.iter().position(|x| x == name) {
            return a;
        }
        self.actions.push(name.to_string());
        self.actions.len() - 1
    }

    pub fn initial(&mut self, s: &str, p: f64) -> &mut Self {
        let s = self.state(s);
        *self.initial.entry(s).or_insert(0.0) += p;
        self
    }

    /// Adds probability mass `p` to P(s,a)(t). Declares the row even when
    /// `p` is zero, so an all-zero row is caught at build time.
    pub fn transition(&mut self, s: &str, a: &str, t: &str, p: f64) -> &mut Self {
        let s = self.state(s);
        let a = self.action(a);
        let t = self.state(t);
        *self.rows.entry((s, a)).or_default().entry(t).or_insert(0.0) += p;
        self
    }

    pub fn label(&mut self, s: &str, ap: &str) -> &mut Self {
        let s = self.state(s);
        self.labeled = true;
        if !self.ap.iter().any(|x| x == ap) {
            self.ap.push(ap.to_string());
        }
        self.labels.entry(s).or_default().insert(ap.to_string());
        self
    }

    /// Declares the atomic propositions (and marks the MDP as labeled).
    pub fn atomic_propositions<I: IntoIterator<Item = S>, S: AsRef<str>>(&mut self, ap: I) -> &mut Self {
        self.labeled = true;
        for p in ap {
            if !self.ap.iter().any(|x| x == p.as_ref()) {
                self.ap.push(p.as_ref().to_string());
            }
        }
        self
    }

    /// Builds without validation; zero-probability entries are dropped but an
    /// action whose row is entirely zero keeps an empty successor list so
    /// that [`validate`] reports it.
    pub fn build_unchecked(&self) -> Mdp {
        let n = self.states.len();
        let mut choices: Vec<Vec<Choice>> = vec![Vec::new(); n];
        for (&(s, a), row) in &self.rows {
            let successors = row.iter().filter(|(_, &p)| p != 0.0).map(|(&t, &p)| (t, p)).collect();
            choices[s].push(Choice { action: a, successors });
        }
        let mut initial = vec![0.0; n];
        for (&s, &p) in &self.initial {
            initial[s] = p;
        }
        let labels = self.labeled.then(|| (0..n).map(|s| self.labels.get(&s).cloned().unwrap_or_default()).collect());
        Mdp::from_parts_unchecked(self.states.clone(), self.actions.clone(), initial, choices, labels, self.ap.clone())
    }

    pub fn build(&self) -> Result<Mdp> {
        let mdp = self.build_unchecked();
        let v = validate(&mdp);
        if v.is_empty() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::eight_state_mdp;

    #[test]
    fn self_loop_is_valid() {
        let mut b = MdpBuilder::new();
        b.transition("s", "a", "s", 1.0).initial("s", 1.0);
        let m = b.build().unwrap();
        assert!(validate(&m).is_empty());
        assert_eq!(enabled_actions(&m, 0).unwrap(), vec![0]);
        assert_eq!(count_state_action_pairs(&m), 1);
    }

    #[test]
    fn short_row_is_one_violation() {
        let mut b = MdpBuilder::new();
        b.transition("s0", "a", "s1", 0.9).transition("s1", "a", "s1", 1.0).initial("s0", 1.0);
        let m = b.build_unchecked();
        let v = validate(&m);
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::RowSum { state, action, .. } => {
                assert_eq!(state, "s0");
                assert_eq!(action, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(b.build().is_err());
    }

    #[test]
    fn all_zero_row_rejected_at_build() {
        let mut b = MdpBuilder::new();
        b.transition("s0", "a", "s0", 1.0).transition("s0", "b", "s0", 0.0).initial("s0", 1.0);
        let err = b.build().unwrap_err();
        assert!(err.to_string().contains("no successor"), "{err}");
    }

    #[test]
    fn dead_state_reported() {
        let mut b = MdpBuilder::new();
        b.transition("s0", "a", "s1", 1.0).initial("s0", 1.0);
        let v = validate(&b.build_unchecked());
        assert_eq!(v, vec![Violation::DeadState { state: "s1".into() }]);
    }

    #[test]
    fn eight_state_is_valid_with_alpha_beta() {
        let m = eight_state_mdp();
        assert!(validate(&m).is_empty());
        for s in 0..m.num_states() {
            let acts = enabled_actions(&m, s).unwrap();
            assert!(!acts.is_empty());
            for a in acts {
                assert!(["alpha", "beta"].contains(&m.action_name(a)));
            }
        }
    }

    #[test]
    fn enabled_actions_unknown_state() {
        let m = eight_state_mdp();
        assert!(matches!(enabled_actions(&m, 99), Err(Error::UnknownState(_))));
    }

    #[test]
    fn pair_count_mixed() {
        let mut b = MdpBuilder::new();
        for a in ["a", "b"] {
            b.transition("s0", a, "s1", 1.0);
        }
        for a in ["a", "b", "c"] {
            b.transition("s1", a, "s0", 1.0);
        }
        b.initial("s0", 1.0);
        assert_eq!(count_state_action_pairs(&b.build().unwrap()), 5);
    }

    #[test]
    fn induced_chain_deterministic_is_permutation() {
        let mut b = MdpBuilder::new();
        b.transition("s0", "a", "s1", 1.0)
            .transition("s1", "a", "s2", 1.0)
            .transition("s2", "a", "s0", 1.0)
            .initial("s0", 1.0);
        let m = b.build().unwrap();
        let f = Policy::uniform(&m);
        let (p, _) = induce_chain(&m, &f, &RewardFn::zeros(&m));
        for s in 0..3 {
            assert_eq!(p[(s, (s + 1) % 3)], 1.0);
            assert_eq!(p.row(s).sum(), 1.0);
        }
    }

    #[test]
    fn uniform_over_identical_actions_matches_either() {
        let mut b = MdpBuilder::new();
        for a in ["a", "b"] {
            b.transition("s0", a, "s0", 0.3).transition("s0", a, "s1", 0.7);
            b.transition("s1", a, "s0", 1.0);
        }
        b.initial("s0", 1.0);
        let m = b.build().unwrap();
        let r = RewardFn::zeros(&m);
        let (pu, _) = induce_chain(&m, &Policy::uniform(&m), &r);
        let (pa, _) = induce_chain(&m, &Policy::deterministic(&m, &[0, 0]).unwrap(), &r);
        assert!((pu - pa).abs().max() < 1e-15);
    }
}
