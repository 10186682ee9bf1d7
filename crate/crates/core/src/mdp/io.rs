//! JSON exchange format for MDPs.
//!
//! ```json
//! {
//!   "states": ["s0", "s1"],
//!   "actions": ["a"],
//!   "initial": {"s0": 1.0},
//!   "transitions": [{"from": "s0", "action": "a", "to": "s1", "prob": 1.0}, ...],
//!   "labels": {"s1": ["goal"]},
//!   "rewards": [{"state": "s0", "action": "a", "value": -1.0}]
//! }
//! ```
//!
//! Probabilities may be numbers or decimal strings. `labels` and `rewards`
//! are optional.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Choice, Mdp, RewardFn, PROB_TOL};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Number {
    Float(f64),
    Text(String),
}

impl Number {
    fn value(&self) -> Result<f64> {
        match self {
            Number::Float(x) => Ok(*x),
            Number::Text(s) => s.trim().parse().map_err(|_| Error::Format(format!("`{s}` is not a number"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub from: String,
    pub action: String,
    pub to: String,
    prob: Number,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RewardEntry {
    pub state: String,
    pub action: String,
    value: Number,
}

/// Serialized form of an [`Mdp`] (plus optional rewards).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdpFile {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    initial: BTreeMap<String, Number>,
    pub transitions: Vec<TransitionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeMap<String, Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<RewardEntry>>,
}

fn renormalize(values: &mut [f64], what: &str) -> Result<()> {
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::Format(format!("{what} sums to {sum}")));
    }
    if (sum - 1.0).abs() <= 1e-12 {
        return Ok(());
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
    Ok(())
}

impl MdpFile {
    pub fn from_mdp(mdp: &Mdp, rewards: Option<&RewardFn>) -> Self {
        let name = |s: usize| mdp.state_name(s).to_string();
        let initial = mdp
            .initial()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, &p)| (name(s), Number::Float(p)))
            .collect();
        let mut transitions = Vec::new();
        for (s, _, c) in mdp.pairs() {
            for &(t, p) in &c.successors {
                transitions.push(TransitionEntry {
                    from: name(s),
                    action: mdp.action_name(c.action).to_string(),
                    to: name(t),
                    prob: Number::Float(p),
                });
            }
        }
        let labels = mdp.has_labels().then(|| {
            (0..mdp.num_states())
                .filter_map(|s| {
                    let ls = mdp.labels(s)?;
                    (!ls.is_empty()).then(|| (name(s), ls.iter().cloned().collect()))
                })
                .collect()
        });
        let ap = mdp.has_labels().then(|| mdp.ap().to_vec());
        let rewards = rewards.map(|r| {
            mdp.pairs()
                .map(|(s, k, c)| RewardEntry {
                    state: name(s),
                    action: mdp.action_name(c.action).to_string(),
                    value: Number::Float(r.get(s, k)),
                })
                .collect()
        });
        MdpFile {
            states: mdp.state_names().to_vec(),
            actions: mdp.action_names().to_vec(),
            initial,
            transitions,
            labels,
            ap,
            rewards,
        }
    }

    /// Converts to an [`Mdp`], re-normalizing distributions that are off by
    /// at most 1e-9 and rejecting anything further off.
    pub fn into_mdp(self) -> Result<(Mdp, Option<RewardFn>)> {
        let index: BTreeMap<&str, usize> = self.states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let actions: BTreeMap<&str, usize> = self.actions.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let sid = |s: &str| index.get(s).copied().ok_or_else(|| Error::UnknownState(s.to_string()));
        let aid = |a: &str| actions.get(a).copied().ok_or_else(|| Error::UnknownAction(a.to_string()));
        let n = self.states.len();

        let mut initial = vec![0.0; n];
        for (s, p) in &self.initial {
            initial[sid(s)?] += p.value()?;
        }
        renormalize(&mut initial, "initial distribution")?;

        let mut rows: BTreeMap<(usize, usize), BTreeMap<usize, f64>> = BTreeMap::new();
        for t in &self.transitions {
            let p = t.prob.value()?;
            *rows.entry((sid(&t.from)?, aid(&t.action)?)).or_default().entry(sid(&t.to)?).or_insert(0.0) += p;
        }
        let mut choices: Vec<Vec<Choice>> = vec![Vec::new(); n];
        for ((s, a), row) in rows {
            let mut succ: Vec<(usize, f64)> = row.into_iter().filter(|&(_, p)| p != 0.0).collect();
            let mut probs: Vec<f64> = succ.iter().map(|x| x.1).collect();
            renormalize(&mut probs, &format!("P({},{})", self.states[s], self.actions[a]))?;
            for (e, p) in succ.iter_mut().zip(probs) {
                e.1 = p;
            }
            choices[s].push(Choice { action: a, successors: succ });
        }

        let (labels, ap) = match (&self.labels, &self.ap) {
            (None, None) => (None, Vec::new()),
            (l, ap) => {
                let mut ap: Vec<String> = ap.clone().unwrap_or_default();
                let mut per_state = vec![BTreeSet::new(); n];
                if let Some(l) = l {
                    for (s, props) in l {
                        let s = sid(s)?;
                        for p in props {
                            if !ap.contains(p) {
                                ap.push(p.clone());
                            }
                            per_state[s].insert(p.clone());
                        }
                    }
                }
                (Some(per_state), ap)
            }
        };

        let mdp = Mdp::from_parts(self.states.clone(), self.actions.clone(), initial, choices, labels, ap)?;

        let rewards = match &self.rewards {
            None => None,
            Some(entries) => {
                let mut values: Vec<Vec<Option<f64>>> = (0..n).map(|s| vec![None; mdp.choices(s).len()]).collect();
                for e in entries {
                    let s = sid(&e.state)?;
                    let a = aid(&e.action)?;
                    let k = mdp.choice_index(s, a).ok_or_else(|| {
                        Error::Format(format!("reward for disabled pair ({}, {})", e.state, e.action))
                    })?;
                    values[s][k] = Some(e.value.value()?);
                }
                let mut out = Vec::with_capacity(n);
                for (s, row) in values.into_iter().enumerate() {
                    let mut r = Vec::with_capacity(row.len());
                    for (k, v) in row.into_iter().enumerate() {
                        r.push(v.ok_or_else(|| {
                            Error::Format(format!(
                                "missing reward for ({}, {})",
                                mdp.state_name(s),
                                mdp.action_name(mdp.choices(s)[k].action)
                            ))
                        })?);
                    }
                    out.push(r);
                }
                Some(RewardFn { values: out })
            }
        };
        Ok((mdp, rewards))
    }
}

impl Mdp {
    pub fn from_json_str(s: &str) -> Result<(Mdp, Option<RewardFn>)> {
        serde_json::from_str::<MdpFile>(s)?.into_mdp()
    }

    pub fn to_json_string(&self, rewards: Option<&RewardFn>) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MdpFile::from_mdp(self, rewards))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Mdp, Option<RewardFn>)> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>, rewards: Option<&RewardFn>) -> Result<()> {
        std::fs::write(path, self.to_json_string(rewards)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{eight_state_mdp, random_mdp};

    #[test]
    fn round_trip_preserves_model() {
        for m in [eight_state_mdp(), random_mdp(4, 9, 3)] {
            let r = RewardFn::from_fn(&m, |s, a| s as f64 * 0.5 - a as f64);
            let text = m.to_json_string(Some(&r)).unwrap();
            let (back, rb) = Mdp::from_json_str(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(rb.unwrap(), r);
        }
    }

    #[test]
    fn string_probabilities_and_small_drift() {
        let text = r#"{
            "states": ["a", "b"], "actions": ["x"],
            "initial": {"a": "0.9999999999"},
            "transitions": [
                {"from": "a", "action": "x", "to": "b", "prob": "0.5"},
                {"from": "a", "action": "x", "to": "a", "prob": 0.5000000001},
                {"from": "b", "action": "x", "to": "b", "prob": 1}
            ],
            "labels": {"b": ["goal"]}
        }"#;
        let (m, r) = Mdp::from_json_str(text).unwrap();
        assert!(r.is_none());
        assert_eq!(m.initial()[0], 1.0);
        let sum: f64 = m.choices(0)[0].successors.iter().map(|x| x.1).sum();
        assert!((sum - 1.0).abs() < 1e-15);
        assert!(m.labels(1).unwrap().contains("goal"));
    }

    #[test]
    fn large_drift_rejected() {
        let text = r#"{
            "states": ["a"], "actions": ["x"], "initial": {"a": 1},
            "transitions": [{"from": "a", "action": "x", "to": "a", "prob": 0.99}]
        }"#;
        assert!(Mdp::from_json_str(text).is_err());
    }
}
