use super::{ActionId, Mdp, StateId, PROB_TOL};
use crate::error::{Error, Result};

/// Memoryless stochastic policy. `probs[s][k]` is the probability of the
/// `k`-th enabled action at `s` (same order as [`Mdp::choices`]).
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub probs: Vec<Vec<f64>>,
    /// States whose distribution was not determined by data (e.g. zero
    /// occupation mass during extraction) and fell back to uniform.
    pub flagged: Vec<StateId>,
}

impl Policy {
    pub fn uniform(mdp: &Mdp) -> Self {
        let probs = (0..mdp.num_states())
            .map(|s| {
                let k = mdp.choices(s).len();
                vec![1.0 / k as f64; k]
            })
            .collect();
        Policy { probs, flagged: Vec::new() }
    }

    /// Deterministic policy picking `choice[s]` (an index into `choices(s)`).
    pub fn deterministic(mdp: &Mdp, choice: &[usize]) -> Result<Self> {
        if choice.len() != mdp.num_states() {
            return Err(Error::Dimension(format!("{} choices for {} states", choice.len(), mdp.num_states())));
        }
        let mut probs = Vec::with_capacity(choice.len());
        for (s, &k) in choice.iter().enumerate() {
            let n = mdp.choices(s).len();
            if k >= n {
                return Err(Error::Dimension(format!("choice {k} at {} but only {n} actions", mdp.state_name(s))));
            }
            let mut row = vec![0.0; n];
            row[k] = 1.0;
            probs.push(row);
        }
        Ok(Policy { probs, flagged: Vec::new() })
    }

    /// f(s, a); zero for actions not enabled at `s`.
    pub fn prob(&self, mdp: &Mdp, s: StateId, a: ActionId) -> f64 {
        mdp.choice_index(s, a).map_or(0.0, |k| self.probs[s][k])
    }

    /// The most likely action at every state, ties toward the lowest index.
    pub fn greedy_choices(&self) -> Vec<usize> {
        self.probs
            .iter()
            .map(|row| {
                let mut best = 0;
                for (k, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn is_valid_for(&self, mdp: &Mdp) -> bool {
        self.probs.len() == mdp.num_states()
            && self.probs.iter().enumerate().all(|(s, row)| {
                row.len() == mdp.choices(s).len()
                    && row.iter().all(|&p| (0.0..=1.0 + PROB_TOL).contains(&p))
                    && (row.iter().sum::<f64>() - 1.0).abs() <= PROB_TOL
            })
    }
}

/// R(s, a) for every enabled pair, in choice order.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardFn {
    pub values: Vec<Vec<f64>>,
}

impl RewardFn {
    pub fn zeros(mdp: &Mdp) -> Self {
        Self::constant(mdp, 0.0)
    }

    pub fn constant(mdp: &Mdp, c: f64) -> Self {
        Self::from_fn(mdp, |_, _| c)
    }

    /// Builds the reward from `f(state, action)`.
    pub fn from_fn(mdp: &Mdp, mut f: impl FnMut(StateId, ActionId) -> f64) -> Self {
        let values = (0..mdp.num_states()).map(|s| mdp.choices(s).iter().map(|c| f(s, c.action)).collect()).collect();
        RewardFn { values }
    }

    pub fn get(&self, s: StateId, k: usize) -> f64 {
        self.values[s][k]
    }

    pub fn matches(&self, mdp: &Mdp) -> bool {
        self.values.len() == mdp.num_states()
            && self.values.iter().enumerate().all(|(s, v)| v.len() == mdp.choices(s).len())
    }

    pub(crate) fn check(&self, mdp: &Mdp) -> Result<()> {
        if self.matches(mdp) {
            Ok(())
        } else {
            Err(Error::Dimension("reward function does not match the MDP's state-action pairs".into()))
        }
    }
}

/// Output of the dynamic-programming oracles.
#[derive(Clone, Debug)]
pub struct ValueResult {
    /// Value per state (discounted value, reachability probability, or the
    /// relative bias for average-reward problems).
    pub per_state: Vec<f64>,
    /// Σ_s per_state(s)·u₀(s) for discounted/reachability, the gain for
    /// average reward.
    pub scalar: f64,
    pub policy: Policy,
    pub iterations: usize,
    pub residual: f64,
}
