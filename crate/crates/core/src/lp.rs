//! Block-sparse occupation-measure LPs built from a decomposition.
//!
//! Variables are the occupation measures x(s,a), grouped into column blocks
//! x₀..x_N by the decomposition set of `s`. Constraint rows are the flow
//! balance equations, one per state, grouped the same way:
//!
//! ```text
//! Σ_a x(s,a) − γ Σ_{s′,a′} P(s′,a′)(s) x(s′,a′) = u₀(s)
//! ```
//!
//! Because kernel states only have predecessors in K₀ or their own kernel,
//! the constraint matrix has the arrow shape: a full first block-row
//! (A₀₀ … A₀N), a first block-column (A₁₀ … A_N0) and the diagonal
//! blocks A_ii. The average-reward form uses γ = 1, zero right-hand side and
//! an extra 1ᵀx = 1 row appended to block-row 0.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::mdp::{check_ergodicity, Mdp, Policy, RewardFn, StateId};
use crate::sparse::CsrMatrix;

/// Column cap for [`assemble_dense`].
pub const DENSE_COLUMN_CAP: usize = 20_000;

/// Total pair mass below which extraction falls back to a uniform choice.
pub const EXTRACTION_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LpMode {
    Discounted { gamma: f64 },
    Average,
}

/// A column: state `s` and the index of the action in `mdp.choices(s)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub state: StateId,
    pub choice: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockLp {
    pub mode: LpMode,
    /// States whose balance rows form block-row i, in row order.
    pub row_states: Vec<Vec<StateId>>,
    /// Whether block-row 0 ends with the normalization row 1ᵀx = 1.
    pub normalization_row: bool,
    /// Pairs forming column block j, in column order.
    pub col_pairs: Vec<Vec<Pair>>,
    /// Nonzero blocks A_ij of the arrow pattern. Diagonal blocks are always
    /// present.
    pub blocks: BTreeMap<(usize, usize), CsrMatrix>,
    pub b: Vec<Vec<f64>>,
    /// Costs c_j = −R(s,a).
    pub c: Vec<Vec<f64>>,
    /// Decomposition set each block came from (0 for K₀).
    pub source_sets: Vec<usize>,
    /// (block, column) of every pair, indexed `[state][choice]`; `None` for
    /// states excluded from the LP.
    pub variable_index: Vec<Vec<Option<(usize, usize)>>>,
    pub state_names: Vec<String>,
    pub action_names: Vec<Vec<String>>,
}

impl BlockLp {
    pub fn num_blocks(&self) -> usize {
        self.col_pairs.len()
    }

    pub fn rows(&self, i: usize) -> usize {
        self.row_states[i].len() + usize::from(i == 0 && self.normalization_row)
    }

    pub fn cols(&self, j: usize) -> usize {
        self.col_pairs[j].len()
    }

    pub fn total_rows(&self) -> usize {
        (0..self.num_blocks()).map(|i| self.rows(i)).sum()
    }

    pub fn total_cols(&self) -> usize {
        (0..self.num_blocks()).map(|j| self.cols(j)).sum()
    }

    pub fn col_offsets(&self) -> Vec<usize> {
        offsets((0..self.num_blocks()).map(|j| self.cols(j)))
    }

    pub fn row_offsets(&self) -> Vec<usize> {
        offsets((0..self.num_blocks()).map(|i| self.rows(i)))
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&CsrMatrix> {
        self.blocks.get(&(i, j))
    }

    /// Splits a global solution vector into per-block views.
    pub fn split<'a>(&self, x: &'a [f64]) -> Vec<&'a [f64]> {
        let off = self.col_offsets();
        (0..self.num_blocks()).map(|j| &x[off[j]..off[j + 1]]).collect()
    }

    /// Max-form objective −Σ_j c_jᵀ x_j.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let parts = self.split(x);
        -self.c.iter().zip(parts).map(|(c, x)| c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).sum::<f64>()
    }

    /// Ax − b, stacked by block-row.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let parts = self.split(x);
        let mut out = Vec::with_capacity(self.total_rows());
        for i in 0..self.num_blocks() {
            let mut acc: Vec<f64> = self.b[i].iter().map(|v| -v).collect();
            for ((bi, j), a) in self.blocks.range((i, 0)..(i + 1, 0)) {
                debug_assert_eq!(*bi, i);
                let y = a.mul_vec(parts[*j]);
                for (o, v) in acc.iter_mut().zip(y) {
                    *o += v;
                }
            }
            out.extend(acc);
        }
        out
    }

    /// Relative primal infeasibility ‖Ax − b‖₂ / (1 + ‖b‖₁).
    pub fn infeasibility(&self, x: &[f64]) -> f64 {
        let r = self.residual(x);
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let b1: f64 = self.b.iter().flatten().map(|v| v.abs()).sum();
        norm / (1.0 + b1)
    }

    /// Global column of a state-action pair.
    pub fn column_of(&self, state: StateId, choice: usize) -> Option<usize> {
        let (j, c) = self.variable_index.get(state)?.get(choice).copied().flatten()?;
        Some(self.col_offsets()[j] + c)
    }

    /// Human-readable key `"(s,a)"` for every column, in global order.
    pub fn column_keys(&self) -> Vec<String> {
        self.col_pairs
            .iter()
            .flatten()
            .map(|p| format!("({},{})", self.state_names[p.state], self.action_names[p.state][p.choice]))
            .collect()
    }
}

fn offsets(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for s in sizes {
        out.push(out.last().unwrap() + s);
    }
    out
}

struct BuildSpec<'a> {
    gamma: f64,
    rhs: Vec<f64>,
    normalization: bool,
    excluded: &'a BTreeSet<StateId>,
    mode: LpMode,
}

fn build(mdp: &Mdp, d: &Decomposition, r: &RewardFn, spec: BuildSpec<'_>) -> Result<BlockLp> {
    let n = mdp.num_states();
    if d.slots.len() != n || d.m.iter().sum::<usize>() != crate::mdp::count_state_action_pairs(mdp) {
        return Err(Error::DecompositionMismatch(format!(
            "decomposition covers {} states, MDP has {n}",
            d.slots.len()
        )));
    }
    r.check(mdp)?;

    // block order: K₀ first (or the first nonempty kernel if K₀ is empty),
    // then the remaining nonempty kernels
    let kept =
        |set: &[StateId]| -> Vec<StateId> { set.iter().copied().filter(|s| !spec.excluded.contains(s)).collect() };
    let mut groups: Vec<(usize, Vec<StateId>)> = Vec::new();
    for i in 0..d.num_sets() {
        let states = kept(d.set(i));
        if !states.is_empty() {
            groups.push((i, states));
        }
    }
    if groups.is_empty() {
        return Err(Error::DecompositionMismatch("no state left to build an LP over".into()));
    }
    let coupling_present = groups[0].0 == 0;

    let mut block_of = vec![usize::MAX; n];
    let mut row_of = vec![usize::MAX; n];
    for (b, (_, states)) in groups.iter().enumerate() {
        for (k, &s) in states.iter().enumerate() {
            block_of[s] = b;
            row_of[s] = k;
        }
    }
    let mut variable_index: Vec<Vec<Option<(usize, usize)>>> =
        (0..n).map(|s| vec![None; mdp.choices(s).len()]).collect();
    let mut col_pairs = Vec::with_capacity(groups.len());
    let mut c = Vec::with_capacity(groups.len());
    for (b, (_, states)) in groups.iter().enumerate() {
        let mut pairs = Vec::new();
        let mut costs = Vec::new();
        for &s in states {
            for k in 0..mdp.choices(s).len() {
                variable_index[s][k] = Some((b, pairs.len()));
                pairs.push(Pair { state: s, choice: k });
                costs.push(-r.get(s, k));
            }
        }
        col_pairs.push(pairs);
        c.push(costs);
    }

    let nb = groups.len();
    let mut triplets: BTreeMap<(usize, usize), Vec<(usize, usize, f64)>> = BTreeMap::new();
    for i in 0..nb {
        triplets.insert((i, i), Vec::new());
    }
    for (j, pairs) in col_pairs.iter().enumerate() {
        for (col, p) in pairs.iter().enumerate() {
            let s = p.state;
            // outflow term on the pair's own row
            triplets.get_mut(&(block_of[s], j)).unwrap().push((row_of[s], col, 1.0));
            // inflow terms on the successors' rows
            for &(t, prob) in &mdp.choices(s)[p.choice].successors {
                if prob == 0.0 || block_of[t] == usize::MAX {
                    continue;
                }
                let i = block_of[t];
                if i != 0 && j != 0 && i != j {
                    return Err(Error::DecompositionMismatch(format!(
                        "transition {} -> {} couples kernels {} and {}",
                        mdp.state_name(s),
                        mdp.state_name(t),
                        groups[j].0,
                        groups[i].0
                    )));
                }
                triplets.entry((i, j)).or_default().push((row_of[t], col, -spec.gamma * prob));
            }
            if spec.normalization {
                triplets.entry((0, j)).or_default().push((groups[0].1.len(), col, 1.0));
            }
        }
    }

    let row_states: Vec<Vec<StateId>> = groups.iter().map(|(_, s)| s.clone()).collect();
    let rows = |i: usize| row_states[i].len() + usize::from(i == 0 && spec.normalization);
    let mut blocks = BTreeMap::new();
    for ((i, j), t) in triplets {
        let m = CsrMatrix::from_triplets(rows(i), col_pairs[j].len(), t);
        if i == j || m.nnz() > 0 {
            blocks.insert((i, j), m);
        }
    }
    let mut b: Vec<Vec<f64>> = row_states.iter().map(|st| st.iter().map(|&s| spec.rhs[s]).collect()).collect();
    if spec.normalization {
        b[0].push(1.0);
    }
    debug_assert!(coupling_present || blocks.keys().all(|&(i, j)| i == j || i == 0 || j == 0));

    Ok(BlockLp {
        mode: spec.mode,
        row_states,
        normalization_row: spec.normalization,
        col_pairs,
        blocks,
        b,
        c,
        source_sets: groups.iter().map(|(i, _)| *i).collect(),
        variable_index,
        state_names: mdp.state_names().to_vec(),
        action_names: (0..n)
            .map(|s| mdp.choices(s).iter().map(|ch| mdp.action_name(ch.action).to_string()).collect())
            .collect(),
    })
}

/// Discounted-reward LP. `u0_override` replaces the MDP's initial
/// distribution on the right-hand side.
pub fn build_discounted(
    mdp: &Mdp,
    d: &Decomposition,
    r: &RewardFn,
    gamma: f64,
    u0_override: Option<&[f64]>,
) -> Result<BlockLp> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Parameter(format!("discount factor {gamma} outside [0, 1]")));
    }
    let rhs = match u0_override {
        Some(u) if u.len() != mdp.num_states() => {
            return Err(Error::Dimension(format!("u0 override has {} entries", u.len())))
        }
        Some(u) => u.to_vec(),
        None => mdp.initial().to_vec(),
    };
    let none = BTreeSet::new();
    build(
        mdp,
        d,
        r,
        BuildSpec { gamma, rhs, normalization: false, excluded: &none, mode: LpMode::Discounted { gamma } },
    )
}

/// Undiscounted LP over the non-terminal states: flow entering a terminal
/// state leaves the system. With a reward equal to the one-step probability
/// of entering an absorbing goal, the optimum is the maximal probability of
/// reaching it.
pub fn build_transient(
    mdp: &Mdp,
    d: &Decomposition,
    r: &RewardFn,
    init: &[f64],
    terminal: &BTreeSet<StateId>,
) -> Result<BlockLp> {
    if init.len() != mdp.num_states() {
        return Err(Error::Dimension(format!("initial vector has {} entries", init.len())));
    }
    build(
        mdp,
        d,
        r,
        BuildSpec {
            gamma: 1.0,
            rhs: init.to_vec(),
            normalization: false,
            excluded: terminal,
            mode: LpMode::Discounted { gamma: 1.0 },
        },
    )
}

/// Average-reward LP: γ = 1, zero right-hand side, plus 1ᵀx = 1 as the last
/// row of block-row 0. Requires the ergodicity gate to pass.
pub fn build_average(mdp: &Mdp, d: &Decomposition, r: &RewardFn) -> Result<BlockLp> {
    check_ergodicity(mdp)?;
    let none = BTreeSet::new();
    build(
        mdp,
        d,
        r,
        BuildSpec {
            gamma: 1.0,
            rhs: vec![0.0; mdp.num_states()],
            normalization: true,
            excluded: &none,
            mode: LpMode::Average,
        },
    )
}

/// Dense A, b, c in block order (rows by block-row, columns by block).
pub fn assemble_dense(lp: &BlockLp) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    assemble_dense_capped(lp, DENSE_COLUMN_CAP)
}

pub fn assemble_dense_capped(lp: &BlockLp, cap: usize) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    let cols = lp.total_cols();
    if cols > cap {
        return Err(Error::DenseCapExceeded { columns: cols, cap });
    }
    let ro = lp.row_offsets();
    let co = lp.col_offsets();
    let mut a = DMatrix::zeros(lp.total_rows(), cols);
    for (&(i, j), m) in &lp.blocks {
        for (r, c, v) in m.triplets() {
            a[(ro[i] + r, co[j] + c)] += v;
        }
    }
    let b = DVector::from_iterator(lp.total_rows(), lp.b.iter().flatten().copied());
    let c = DVector::from_iterator(cols, lp.c.iter().flatten().copied());
    Ok((a, b, c))
}

/// f(s,a) = x(s,a) / Σ_a′ x(s,a′). States with total mass ≤ 1e-9, or not
/// represented in the LP, get the uniform distribution and are flagged.
/// Slightly negative entries are clamped to zero.
pub fn extract_policy(lp: &BlockLp, x: &[f64]) -> Policy {
    let co = lp.col_offsets();
    let mut probs = Vec::with_capacity(lp.variable_index.len());
    let mut flagged = Vec::new();
    for (s, slots) in lp.variable_index.iter().enumerate() {
        let vals: Vec<f64> = slots.iter().map(|slot| slot.map_or(0.0, |(j, c)| x[co[j] + c].max(0.0))).collect();
        let total: f64 = vals.iter().sum();
        if total <= EXTRACTION_FLOOR {
            flagged.push(s);
            probs.push(vec![1.0 / slots.len() as f64; slots.len()]);
        } else {
            probs.push(vals.into_iter().map(|v| v / total).collect());
        }
    }
    Policy { probs, flagged }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    mode: LpMode,
    block_rows: Vec<usize>,
    block_cols: Vec<usize>,
    normalization_row: bool,
    source_sets: Vec<usize>,
    row_states: Vec<Vec<StateId>>,
    col_pairs: Vec<Vec<Pair>>,
    blocks: Vec<BlockEntry>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    state_names: Vec<String>,
    action_names: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct BlockEntry {
    i: usize,
    j: usize,
    file: String,
    nnz: usize,
}

/// Writes one `block_i_j.csv` triplet file per present block plus
/// `manifest.json`.
pub fn export_block_lp(lp: &BlockLp, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (&(i, j), m) in &lp.blocks {
        let file = format!("block_{i}_{j}.csv");
        let mut text = String::from("i,j,row,col,value\n");
        for (r, c, v) in m.triplets() {
            text.push_str(&format!("{i},{j},{r},{c},{v:?}\n"));
        }
        std::fs::write(dir.join(&file), text)?;
        entries.push(BlockEntry { i, j, file, nnz: m.nnz() });
    }
    let manifest = Manifest {
        mode: lp.mode,
        block_rows: (0..lp.num_blocks()).map(|i| lp.rows(i)).collect(),
        block_cols: (0..lp.num_blocks()).map(|j| lp.cols(j)).collect(),
        normalization_row: lp.normalization_row,
        source_sets: lp.source_sets.clone(),
        row_states: lp.row_states.clone(),
        col_pairs: lp.col_pairs.clone(),
        blocks: entries,
        b: lp.b.clone(),
        c: lp.c.clone(),
        state_names: lp.state_names.clone(),
        action_names: lp.action_names.clone(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Reads back what [`export_block_lp`] wrote.
pub fn import_block_lp(dir: impl AsRef<Path>) -> Result<BlockLp> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    let mut blocks = BTreeMap::new();
    for e in &manifest.blocks {
        let text = std::fs::read_to_string(dir.join(&e.file))?;
        let mut trip = Vec::with_capacity(e.nnz);
        for (ln, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Format(format!("{}:{}: expected 5 fields", e.file, ln + 1)));
            }
            let p = |s: &str| -> Result<usize> {
                s.parse().map_err(|_| Error::Format(format!("{}:{}: bad index `{s}`", e.file, ln + 1)))
            };
            let v: f64 =
                f[4].parse().map_err(|_| Error::Format(format!("{}:{}: bad value `{}`", e.file, ln + 1, f[4])))?;
            trip.push((p(f[2])?, p(f[3])?, v));
        }
        blocks.insert((e.i, e.j), CsrMatrix::from_triplets(manifest.block_rows[e.i], manifest.block_cols[e.j], trip));
    }
    let mut variable_index: Vec<Vec<Option<(usize, usize)>>> =
        manifest.action_names.iter().map(|a| vec![None; a.len()]).collect();
    for (j, pairs) in manifest.col_pairs.iter().enumerate() {
        for (c, p) in pairs.iter().enumerate() {
            variable_index[p.state][p.choice] = Some((j, c));
        }
    }
    Ok(BlockLp {
        mode: manifest.mode,
        row_states: manifest.row_states,
        normalization_row: manifest.normalization_row,
        col_pairs: manifest.col_pairs,
        blocks,
        b: manifest.b,
        c: manifest.c,
        source_sets: manifest.source_sets,
        variable_index,
        state_names: manifest.state_names,
        action_names: manifest.action_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{decompose, Partition};
    use crate::instances::{
        eight_state_mdp, eight_state_partition, flip_chain, random_ergodic_mdp, random_mdp, random_partition, self_loop,
    };
    use crate::mdp::{induce_chain, stationary_distribution, value_iteration_discounted};

    /// Eq.-(1)-style dense system in natural state/pair order, built without
    /// any decomposition.
    fn direct_dense(
        mdp: &Mdp,
        r: &RewardFn,
        gamma: f64,
        average: bool,
    ) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, Vec<(usize, usize)>) {
        let pairs: Vec<(usize, usize)> = mdp.pairs().map(|(s, k, _)| (s, k)).collect();
        let n = mdp.num_states();
        let rows = n + usize::from(average);
        let mut a = DMatrix::zeros(rows, pairs.len());
        for (col, &(s, k)) in pairs.iter().enumerate() {
            a[(s, col)] += 1.0;
            for &(t, p) in &mdp.choices(s)[k].successors {
                a[(t, col)] -= gamma * p;
            }
            if average {
                a[(n, col)] = 1.0;
            }
        }
        let mut b = DVector::zeros(rows);
        if average {
            b[n] = 1.0;
        } else {
            for s in 0..n {
                b[s] = mdp.initial()[s];
            }
        }
        let c = DVector::from_iterator(pairs.len(), pairs.iter().map(|&(s, k)| -r.get(s, k)));
        (a, b, c, pairs)
    }

    fn assert_dense_equivalent(mdp: &Mdp, lp: &BlockLp, r: &RewardFn, gamma: f64, average: bool) {
        let (a, b, c) = assemble_dense(lp).unwrap();
        let (ad, bd, cd, pairs) = direct_dense(mdp, r, gamma, average);
        let n = mdp.num_states();
        // row permutation from the block row order
        let mut row_perm = Vec::new();
        for (i, states) in lp.row_states.iter().enumerate() {
            row_perm.extend(states.iter().copied());
            if i == 0 && lp.normalization_row {
                row_perm.push(n);
            }
        }
        let col_perm: Vec<usize> = lp
            .col_pairs
            .iter()
            .flatten()
            .map(|p| pairs.iter().position(|&q| q == (p.state, p.choice)).unwrap())
            .collect();
        for (ri, &dr) in row_perm.iter().enumerate() {
            assert!((b[ri] - bd[dr]).abs() <= 1e-12);
            for (ci, &dc) in col_perm.iter().enumerate() {
                assert!((a[(ri, ci)] - ad[(dr, dc)]).abs() <= 1e-12, "entry ({ri},{ci})");
            }
        }
        for (ci, &dc) in col_perm.iter().enumerate() {
            assert_eq!(c[ci], cd[dc]);
        }
    }

    fn arrow_only(lp: &BlockLp) -> bool {
        lp.blocks.keys().all(|&(i, j)| i == 0 || j == 0 || i == j)
    }

    #[test]
    fn one_state_discounted() {
        let m = self_loop();
        let d = decompose(&m, &Partition::single(1)).unwrap();
        let r = RewardFn::constant(&m, 1.0);
        let lp = build_discounted(&m, &d, &r, 0.9, None).unwrap();
        let (a, b, c) = assemble_dense(&lp).unwrap();
        assert_eq!(lp.num_blocks(), 1);
        assert!((a[(0, 0)] - 0.1).abs() < 1e-15);
        assert_eq!(b[0], 1.0);
        assert_eq!(c[0], -1.0);
        let x = [10.0];
        assert!(lp.infeasibility(&x) < 1e-12);
        assert!((lp.objective(&x) - 10.0).abs() < 1e-12);

        let lp0 = build_discounted(&m, &d, &r, 0.0, None).unwrap();
        let (a0, _, _) = assemble_dense(&lp0).unwrap();
        assert_eq!(a0[(0, 0)], 1.0);
        assert!(lp0.infeasibility(&[1.0]) < 1e-15);
    }

    #[test]
    fn eight_state_arrow_pattern_and_dense_identity() {
        let m = eight_state_mdp();
        let d = decompose(&m, &eight_state_partition(&m)).unwrap();
        let r = RewardFn::from_fn(&m, |s, a| (s as f64) - 2.0 * a as f64);
        let lp = build_discounted(&m, &d, &r, 0.9, None).unwrap();
        assert_eq!(lp.num_blocks(), 3);
        assert!(arrow_only(&lp));
        assert!(lp.block(1, 2).is_none() && lp.block(2, 1).is_none());
        assert_dense_equivalent(&m, &lp, &r, 0.9, false);
    }

    #[test]
    fn random_instances_dense_identity() {
        for seed in 0..30 {
            let n = 4 + seed as usize % 10;
            let m = random_mdp(seed, n, 3);
            let pi = random_partition(seed, n, 1 + seed as usize % 4);
            let d = decompose(&m, &pi).unwrap();
            let r = RewardFn::from_fn(&m, |s, a| ((s + 2 * a) % 3) as f64);
            let lp = build_discounted(&m, &d, &r, 0.95, None).unwrap();
            assert!(arrow_only(&lp));
            assert_dense_equivalent(&m, &lp, &r, 0.95, false);
        }
        for seed in 0..10 {
            let m = random_ergodic_mdp(seed, 8, 2);
            let d = decompose(&m, &random_partition(seed, 8, 3)).unwrap();
            let r = RewardFn::constant(&m, 1.0);
            let lp = build_average(&m, &d, &r).unwrap();
            assert!(arrow_only(&lp));
            assert_dense_equivalent(&m, &lp, &r, 1.0, true);
        }
    }

    #[test]
    fn vi_occupancy_is_feasible_and_matches() {
        // occupation measure of the VI-optimal policy: d = (I − γPᵀ)⁻¹u₀
        for seed in 0..10 {
            let m = random_mdp(100 + seed, 10, 2);
            let r = RewardFn::from_fn(&m, |s, a| ((s * 3 + a) % 4) as f64 - 1.0);
            let vi = value_iteration_discounted(&m, &r, 0.9, 1e-10).unwrap();
            let (p, _) = induce_chain(&m, &vi.policy, &r);
            let n = m.num_states();
            let lhs = DMatrix::identity(n, n) - p.transpose() * 0.9;
            let dvec = lhs.lu().solve(&DVector::from_column_slice(m.initial())).unwrap();
            let d = decompose(&m, &random_partition(seed, 10, 3)).unwrap();
            let lp = build_discounted(&m, &d, &r, 0.9, None).unwrap();
            let mut x = vec![0.0; lp.total_cols()];
            for (s, k, _) in m.pairs() {
                x[lp.column_of(s, k).unwrap()] = dvec[s] * vi.policy.probs[s][k];
            }
            let (a, b, _) = assemble_dense(&lp).unwrap();
            let res = &a * DVector::from_column_slice(&x) - b;
            assert!(res.amax() < 1e-9);
            assert!((lp.objective(&x) - vi.scalar).abs() < 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn average_flip_chain() {
        let m = flip_chain();
        let d = decompose(&m, &Partition::new(vec![vec![0], vec![1]])).unwrap();
        let r = RewardFn::from_fn(&m, |s, _| if s == 1 { 1.0 } else { 0.0 });
        let lp = build_average(&m, &d, &r).unwrap();
        assert!(lp.normalization_row);
        assert_eq!(lp.rows(0), lp.row_states[0].len() + 1);
        // stationary x: 0.25 on each pair
        let x = vec![0.25; 4];
        assert!(lp.infeasibility(&x) < 1e-15);
        assert!((lp.objective(&x) - 0.5).abs() < 1e-15);
        let lpz = build_average(&m, &d, &RewardFn::zeros(&m)).unwrap();
        assert_eq!(lpz.objective(&x), 0.0);
    }

    #[test]
    fn uniform_stationary_measure_is_feasible() {
        for seed in 0..10 {
            let m = random_ergodic_mdp(seed, 8, 3);
            let f = Policy::uniform(&m);
            let (p, _) = induce_chain(&m, &f, &RewardFn::zeros(&m));
            let pi = stationary_distribution(&p).unwrap();
            let d = decompose(&m, &random_partition(seed, 8, 2)).unwrap();
            let lp = build_average(&m, &d, &RewardFn::zeros(&m)).unwrap();
            let mut x = vec![0.0; lp.total_cols()];
            for (s, k, _) in m.pairs() {
                x[lp.column_of(s, k).unwrap()] = pi[s] * f.probs[s][k];
            }
            assert!(lp.residual(&x).iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn average_requires_ergodicity() {
        let m = eight_state_mdp();
        let d = decompose(&m, &eight_state_partition(&m)).unwrap();
        let gate = check_ergodicity(&m);
        let built = build_average(&m, &d, &RewardFn::zeros(&m));
        assert_eq!(gate.is_ok(), built.is_ok());
    }

    #[test]
    fn extraction_normalizes_and_flags() {
        let m = flip_chain();
        let d = decompose(&m, &Partition::single(2)).unwrap();
        let lp = build_discounted(&m, &d, &RewardFn::zeros(&m), 0.5, None).unwrap();
        let mut x = vec![0.0; 4];
        x[lp.column_of(0, 0).unwrap()] = 0.3;
        x[lp.column_of(0, 1).unwrap()] = 0.1;
        let f = extract_policy(&lp, &x);
        assert!((f.probs[0][0] - 0.75).abs() < 1e-15);
        assert!((f.probs[0][1] - 0.25).abs() < 1e-15);
        assert_eq!(f.flagged, vec![1]);
        assert_eq!(f.probs[1], vec![0.5, 0.5]);
        x[lp.column_of(1, 1).unwrap()] = 2.0;
        let g = extract_policy(&lp, &x);
        assert_eq!(g.probs[1], vec![0.0, 1.0]);
        assert!(g.flagged.is_empty());
    }

    #[test]
    fn dense_cap_enforced() {
        let m = eight_state_mdp();
        let d = decompose(&m, &eight_state_partition(&m)).unwrap();
        let lp = build_discounted(&m, &d, &RewardFn::zeros(&m), 0.9, None).unwrap();
        assert!(matches!(assemble_dense_capped(&lp, 3), Err(Error::DenseCapExceeded { .. })));
    }

    #[test]
    fn mismatched_decomposition_rejected() {
        let m = eight_state_mdp();
        let other = random_mdp(1, 5, 2);
        let d = decompose(&other, &Partition::single(5)).unwrap();
        assert!(build_discounted(&m, &d, &RewardFn::zeros(&m), 0.9, None).is_err());
    }

    #[test]
    fn export_round_trip() {
        let m = eight_state_mdp();
        let d = decompose(&m, &eight_state_partition(&m)).unwrap();
        let r = RewardFn::from_fn(&m, |s, _| s as f64 / 7.0);
        let lp = build_discounted(&m, &d, &r, 0.9, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_block_lp(&lp, dir.path()).unwrap();
        assert_eq!(import_block_lp(dir.path()).unwrap(), lp);
    }
}
