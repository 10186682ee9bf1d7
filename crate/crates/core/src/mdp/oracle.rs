//! Dynamic-programming oracles. These never touch the LP code path so they
//! can serve as independent checks on it.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use super::{induce_chain, Mdp, Policy, RewardFn, StateId, ValueResult};
use crate::error::{Error, Result};
use crate::product::mec_decomposition_within;

/// Sweep cap shared by all iterative oracles.
pub const ORACLE_MAX_SWEEPS: usize = 100_000;

fn q_value(mdp: &Mdp, r: &RewardFn, gamma: f64, v: &[f64], s: StateId, k: usize) -> f64 {
    let c = &mdp.choices(s)[k];
    r.get(s, k) + gamma * c.successors.iter().map(|&(t, p)| p * v[t]).sum::<f64>()
}

/// Greedy deterministic policy for `v`; ties go to the lowest action index.
fn greedy(mdp: &Mdp, r: &RewardFn, gamma: f64, v: &[f64]) -> Vec<usize> {
    (0..mdp.num_states())
        .map(|s| {
            let mut best = 0;
            let mut best_q = f64::NEG_INFINITY;
            for k in 0..mdp.choices(s).len() {
                let q = q_value(mdp, r, gamma, v, s, k);
                if q > best_q + 1e-12 {
                    best = k;
                    best_q = q;
                }
            }
            best
        })
        .collect()
}

/// Optimal discounted values by value iteration (Jacobi sweeps from zero).
///
/// For `gamma < 1` the sweep stops once the sup-norm change is below
/// `tol·(1−γ)/(2γ)`, which puts the values within `tol` of the optimum. For
/// `gamma == 1` the caller guarantees absorption in a zero-reward state and
/// the sweep stops once the change drops below `tol·1e-3`.
pub fn value_iteration_discounted(mdp: &Mdp, r: &RewardFn, gamma: f64, tol: f64) -> Result<ValueResult> {
    r.check(mdp)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Parameter(format!("discount factor {gamma} outside [0, 1]")));
    }
    let threshold = if gamma < 1.0 { tol * (1.0 - gamma) / (2.0 * gamma.max(f64::MIN_POSITIVE)) } else { tol * 1e-3 };
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for sweep in 1..=ORACLE_MAX_SWEEPS {
        residual = 0.0;
        for s in 0..n {
            let best =
                (0..mdp.choices(s).len()).map(|k| q_value(mdp, r, gamma, &v, s, k)).fold(f64::NEG_INFINITY, f64::max);
            residual = f64::max(residual, (best - v[s]).abs());
            next[s] = best;
        }
        std::mem::swap(&mut v, &mut next);
        if residual <= threshold {
            let choice = greedy(mdp, r, gamma, &v);
            let policy = Policy::deterministic(mdp, &choice)?;
            let scalar = v.iter().zip(mdp.initial()).map(|(a, b)| a * b).sum();
            return Ok(ValueResult { per_state: v, scalar, policy, iterations: sweep, residual });
        }
    }
    Err(Error::NotConverged { iterations: ORACLE_MAX_SWEEPS, residual })
}

/// Exact discounted value of a fixed policy: solves (I − γP^f) v = R^f.
pub fn evaluate_policy_discounted(mdp: &Mdp, f: &Policy, r: &RewardFn, gamma: f64) -> Result<Vec<f64>> {
    r.check(mdp)?;
    let (p, rv) = induce_chain(mdp, f, r);
    let n = mdp.num_states();
    let m = DMatrix::identity(n, n) - p * gamma;
    m.lu()
        .solve(&rv)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::Parameter("policy evaluation system is singular".into()))
}

/// Stationary distribution π of a row-stochastic matrix, assuming a single
/// recurrent class. Solves πᵀ(P − I) = 0 with one balance equation replaced
/// by Σπ = 1.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    let mut m = (p - DMatrix::identity(n, n)).transpose();
    for j in 0..n {
        m[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    m.lu()
        .solve(&rhs)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::Parameter("chain has more than one recurrent class".into()))
}

/// Ergodicity gate: every memoryless policy must induce an irreducible
/// chain. That fails exactly when some proper subset of states is an end
/// component, and such a subset misses some state v, so it suffices to look
/// for end components in S ∖ {v} for every v. The error lists the states
/// that are not strongly connected to state 0, or else a witness end
/// component.
pub fn check_ergodicity(mdp: &Mdp) -> Result<()> {
    let n = mdp.num_states();
    if n == 0 {
        return Ok(());
    }
    let mut succ: Vec<BTreeSet<StateId>> = vec![BTreeSet::new(); n];
    let mut pred: Vec<BTreeSet<StateId>> = vec![BTreeSet::new(); n];
    for (s, _, c) in mdp.pairs() {
        for &(t, p) in &c.successors {
            if p > 0.0 {
                succ[s].insert(t);
                pred[t].insert(s);
            }
        }
    }
    let reach = |adj: &[BTreeSet<StateId>]| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(s) = stack.pop() {
            for &t in &adj[s] {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen
    };
    let fwd = reach(&succ);
    let bwd = reach(&pred);
    let names = |it: &mut dyn Iterator<Item = StateId>| it.map(|s| mdp.state_name(s).to_string()).collect();
    let bad: Vec<String> = names(&mut (0..n).filter(|&s| !(fwd[s] && bwd[s])));
    if !bad.is_empty() {
        return Err(Error::NotErgodic { states: bad });
    }
    for v in 0..n {
        let rest: BTreeSet<StateId> = (0..n).filter(|&s| s != v).collect();
        if let Some(ec) = mec_decomposition_within(mdp, &rest).into_iter().next() {
            return Err(Error::NotErgodic { states: names(&mut ec.states.into_iter()) });
        }
    }
    Ok(())
}

/// Gain and bias of a policy on a unichain model: g + h(s) = R^f(s) + Σ P^f h,
/// with h pinned to zero at state 0.
fn evaluate_gain(mdp: &Mdp, f: &Policy, r: &RewardFn) -> Result<(f64, Vec<f64>)> {
    let n = mdp.num_states();
    let (p, rv) = induce_chain(mdp, f, r);
    // unknowns: g, h(1..n-1)
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        m[(s, 0)] = 1.0;
        for t in 1..n {
            let delta = if s == t { 1.0 } else { 0.0 };
            m[(s, t)] = delta - p[(s, t)];
        }
    }
    let sol = m
        .lu()
        .solve(&rv)
        .ok_or_else(|| Error::Parameter("gain/bias system is singular (policy is not unichain)".into()))?;
    let mut h = vec![0.0; n];
    for t in 1..n {
        h[t] = sol[t];
    }
    Ok((sol[0], h))
}

/// Optimal average reward (gain) by policy iteration, after the ergodicity
/// gate. `per_state` holds the bias of the returned policy.
pub fn average_reward_eval(mdp: &Mdp, r: &RewardFn, tol: f64) -> Result<ValueResult> {
    r.check(mdp)?;
    check_ergodicity(mdp)?;
    let n = mdp.num_states();
    let mut choice = vec![0usize; n];
    let mut last_improvement = f64::INFINITY;
    for iter in 1..=ORACLE_MAX_SWEEPS {
        let policy = Policy::deterministic(mdp, &choice)?;
        let (gain, h) = evaluate_gain(mdp, &policy, r)?;
        let mut changed = false;
        let mut max_gap: f64 = 0.0;
        for s in 0..n {
            let q = |k: usize| q_value(mdp, r, 1.0, &h, s, k);
            let current = q(choice[s]);
            let mut best = choice[s];
            let mut best_q = current;
            for k in 0..mdp.choices(s).len() {
                let qk = q(k);
                if qk > best_q + tol {
                    best = k;
                    best_q = qk;
                }
            }
            max_gap = max_gap.max(best_q - current);
            if best != choice[s] {
                choice[s] = best;
                changed = true;
            }
        }
        last_improvement = max_gap;
        if !changed {
            return Ok(ValueResult { per_state: h, scalar: gain, policy, iterations: iter, residual: max_gap });
        }
    }
    Err(Error::NotConverged { iterations: ORACLE_MAX_SWEEPS, residual: last_improvement })
}

/// Maximal probability of eventually reaching `target`, by value iteration on
/// the Bellman reachability operator. Uses no reward function.
pub fn reachability_max(mdp: &Mdp, target: &BTreeSet<StateId>, tol: f64) -> Result<ValueResult> {
    let n = mdp.num_states();
    if target.is_empty() {
        return Err(Error::Parameter("reachability target is empty".into()));
    }
    if let Some(&bad) = target.iter().find(|&&s| s >= n) {
        return Err(Error::UnknownState(format!("#{bad}")));
    }
    // states that cannot reach the target at all are fixed at 0
    let mut can_reach = vec![false; n];
    let pred = mdp.predecessors();
    let mut stack: Vec<StateId> = target.iter().copied().collect();
    for &t in target {
        can_reach[t] = true;
    }
    while let Some(t) = stack.pop() {
        for &(s, _, _) in &pred[t] {
            if !can_reach[s] {
                can_reach[s] = true;
                stack.push(s);
            }
        }
    }
    let mut v: Vec<f64> = (0..n).map(|s| if target.contains(&s) { 1.0 } else { 0.0 }).collect();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for sweep in 1..=ORACLE_MAX_SWEEPS {
        iterations = sweep;
        residual = 0.0;
        let mut next = v.clone();
        for s in 0..n {
            if target.contains(&s) || !can_reach[s] {
                continue;
            }
            let best = mdp
                .choices(s)
                .iter()
                .map(|c| c.successors.iter().map(|&(t, p)| p * v[t]).sum::<f64>())
                .fold(0.0, f64::max);
            residual = f64::max(residual, (best - v[s]).abs());
            next[s] = best;
        }
        v = next;
        if residual <= tol * 1e-3 {
            break;
        }
        if sweep == ORACLE_MAX_SWEEPS {
            return Err(Error::NotConverged { iterations: sweep, residual });
        }
    }
    // greedy choice among actions attaining the max; ties toward lowest index
    let choice: Vec<usize> = (0..n)
        .map(|s| {
            let qs: Vec<f64> =
                mdp.choices(s).iter().map(|c| c.successors.iter().map(|&(t, p)| p * v[t]).sum()).collect();
            let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            qs.iter().position(|&q| q >= best - 1e-12).unwrap_or(0)
        })
        .collect();
    let policy = Policy::deterministic(mdp, &choice)?;
    let scalar = v.iter().zip(mdp.initial()).map(|(a, b)| a * b).sum();
    Ok(ValueResult { per_state: v, scalar, policy, iterations, residual })
}
