//! State-space partitions, peripheries and kernel decompositions.
//!
//! Given a partition Π = {S₁..S_N}, the periphery of a region is the set of
//! outside states reachable in one step from inside it. K₀ is the union of
//! all peripheries and each kernel is K_i = S_i \ K₀. The key structural
//! fact used by the LP builder is that a state of K_i (i ≥ 1) only has
//! predecessors in K₀ ∪ K_i; [`verify_lemma1`] checks it on concrete models.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{cell_state_ids, GridSpec};
use crate::mdp::{count_state_action_pairs, ActionId, Mdp, StateId};

/// A partition of the state set into nonempty disjoint regions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub regions: Vec<Vec<StateId>>,
}

impl Partition {
    /// Wraps the regions, sorting the states inside each one.
    pub fn new(mut regions: Vec<Vec<StateId>>) -> Self {
        for r in regions.iter_mut() {
            r.sort_unstable();
        }
        Partition { regions }
    }

    pub fn single(n: usize) -> Self {
        Partition { regions: vec![(0..n).collect()] }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Region index of every state. Errors on overlap, gaps, empty regions or
    /// out-of-range states.
    pub fn region_of(&self, n: usize) -> Result<Vec<usize>> {
        let mut owner = vec![usize::MAX; n];
        let mut problems = Vec::new();
        for (i, r) in self.regions.iter().enumerate() {
            if r.is_empty() {
                problems.push(format!("region {i} is empty"));
            }
            for &s in r {
                if s >= n {
                    problems.push(format!("region {i} contains unknown state #{s}"));
                } else if owner[s] != usize::MAX {
                    problems.push(format!("state #{s} in regions {} and {i}", owner[s]));
                } else {
                    owner[s] = i;
                }
            }
        }
        let missing: Vec<usize> = (0..n).filter(|&s| owner[s] == usize::MAX).collect();
        if !missing.is_empty() {
            problems.push(format!("states not covered: {missing:?}"));
        }
        if problems.is_empty() {
            Ok(owner)
        } else {
            Err(Error::InvalidPartition(problems.join("; ")))
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.region_of(n).map(|_| ())
    }

    /// Loads the JSON form `{"region-id": ["state", ...], ...}`. Regions are
    /// ordered by id, numerically when ids are integers.
    pub fn from_json_str(mdp: &Mdp, text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        let mut entries: Vec<(String, Vec<String>)> = raw.into_iter().collect();
        entries.sort_by(|a, b| region_id_order(&a.0, &b.0));
        let mut regions = Vec::with_capacity(entries.len());
        for (_, states) in entries {
            regions.push(states.iter().map(|s| mdp.state_id(s)).collect::<Result<Vec<_>>>()?);
        }
        let p = Partition::new(regions);
        p.validate(mdp.num_states())?;
        Ok(p)
    }

    pub fn to_json_string(&self, mdp: &Mdp) -> Result<String> {
        let map: BTreeMap<String, Vec<String>> = self
            .regions
            .iter()
            .enumerate()
            .map(|(i, r)| (format!("{i:04}"), r.iter().map(|&s| mdp.state_name(s).to_string()).collect()))
            .collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }

    pub fn load(mdp: &Mdp, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(mdp, &std::fs::read_to_string(path)?)
    }
}

fn region_id_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

/// Labeled digraph with an edge (s, a, s′) for every P(s,a)(s′) > 0.
#[derive(Clone, Debug)]
pub struct InducedGraph {
    pub nodes: usize,
    pub edges: Vec<(StateId, ActionId, StateId)>,
}

impl InducedGraph {
    pub fn from_mdp(mdp: &Mdp) -> Self {
        let mut edges = Vec::new();
        for (s, _, c) in mdp.pairs() {
            for &(t, p) in &c.successors {
                if p > 0.0 {
                    edges.push((s, c.action, t));
                }
            }
        }
        InducedGraph { nodes: mdp.num_states(), edges }
    }
}

/// Periphery(S_i): states outside the region reachable in one step from it.
pub fn periphery(mdp: &Mdp, region: &[StateId]) -> Result<BTreeSet<StateId>> {
    let n = mdp.num_states();
    let mut inside = vec![false; n];
    for &s in region {
        if s >= n {
            return Err(Error::InvalidPartition(format!("state #{s} is not in the MDP")));
        }
        inside[s] = true;
    }
    let mut out = BTreeSet::new();
    for &s in region {
        for c in mdp.choices(s) {
            for &(t, p) in &c.successors {
                if p > 0.0 && !inside[t] {
                    out.insert(t);
                }
            }
        }
    }
    Ok(out)
}

/// Which decomposition set a state belongs to, and its position there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    /// 0 for K₀, i for K_i.
    pub set: usize,
    /// ι(s), zero-based.
    pub index: usize,
}

/// The decomposition {K₀, K₁, …, K_N} induced by a partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub k0: Vec<StateId>,
    /// K₁..K_N, in partition order; kernels may be empty.
    pub kernels: Vec<Vec<StateId>>,
    /// Slot of every state (index maps ι_i).
    pub slots: Vec<Slot>,
    /// State-action pair counts m₀, m₁, …, m_N.
    pub m: Vec<usize>,
    /// State counts n₀, n₁, …, n_N.
    pub n: Vec<usize>,
}

impl Decomposition {
    /// K_i for i = 0..=N.
    pub fn set(&self, i: usize) -> &[StateId] {
        if i == 0 {
            &self.k0
        } else {
            &self.kernels[i - 1]
        }
    }

    pub fn num_sets(&self) -> usize {
        self.kernels.len() + 1
    }

    pub fn to_json_string(&self, mdp: &Mdp) -> Result<String> {
        let names = |set: &[StateId]| -> Vec<String> { set.iter().map(|&s| mdp.state_name(s).to_string()).collect() };
        let index_maps: Vec<BTreeMap<String, usize>> = (0..self.num_sets())
            .map(|i| self.set(i).iter().map(|&s| (mdp.state_name(s).to_string(), self.slots[s].index)).collect())
            .collect();
        let v = serde_json::json!({
            "k0": names(&self.k0),
            "kernels": self.kernels.iter().map(|k| names(k)).collect::<Vec<_>>(),
            "index_maps": index_maps,
            "m": self.m,
            "n": self.n,
        });
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

/// Builds K₀ = ∪ Periphery(S_i) and the kernels K_i = S_i \ K₀.
pub fn decompose(mdp: &Mdp, pi: &Partition) -> Result<Decomposition> {
    let n = mdp.num_states();
    pi.validate(n)?;
    let mut in_k0 = vec![false; n];
    for region in &pi.regions {
        for s in periphery(mdp, region)? {
            in_k0[s] = true;
        }
    }
    let k0: Vec<StateId> = (0..n).filter(|&s| in_k0[s]).collect();
    let kernels: Vec<Vec<StateId>> =
        pi.regions.iter().map(|r| r.iter().copied().filter(|&s| !in_k0[s]).collect()).collect();
    let mut slots = vec![Slot { set: 0, index: 0 }; n];
    for (idx, &s) in k0.iter().enumerate() {
        slots[s] = Slot { set: 0, index: idx };
    }
    for (i, k) in kernels.iter().enumerate() {
        for (idx, &s) in k.iter().enumerate() {
            slots[s] = Slot { set: i + 1, index: idx };
        }
    }
    let pairs = |set: &[StateId]| set.iter().map(|&s| mdp.choices(s).len()).sum::<usize>();
    let mut m = vec![pairs(&k0)];
    let mut counts = vec![k0.len()];
    for k in &kernels {
        m.push(pairs(k));
        counts.push(k.len());
    }
    debug_assert_eq!(m.iter().sum::<usize>(), count_state_action_pairs(mdp));
    Ok(Decomposition { k0, kernels, slots, m, n: counts })
}

/// Outcome of [`verify_lemma1`].
#[derive(Clone, Debug, PartialEq)]
pub struct Lemma1Report {
    pub holds: bool,
    /// Violating transitions (s′, a, s): s ∈ K_i (i ≥ 1), s′ ∉ K₀ ∪ K_i.
    pub counterexamples: Vec<(StateId, ActionId, StateId)>,
}

/// Checks that every predecessor of a kernel state lies in K₀ or in the same
/// kernel.
pub fn verify_lemma1(mdp: &Mdp, d: &Decomposition) -> Lemma1Report {
    let mut counterexamples = Vec::new();
    for (src, _, c) in mdp.pairs() {
        for &(dst, p) in &c.successors {
            if p <= 0.0 {
                continue;
            }
            let target = d.slots[dst].set;
            let origin = d.slots[src].set;
            if target != 0 && origin != 0 && origin != target {
                counterexamples.push((src, c.action, dst));
            }
        }
    }
    Lemma1Report { holds: counterexamples.is_empty(), counterexamples }
}

/// Boundary node sets of a partition of the induced graph.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryNodes {
    pub inbound: Vec<BTreeSet<StateId>>,
    pub outbound: Vec<BTreeSet<StateId>>,
    /// B_i = In_i ∪ Out_i.
    pub regions: Vec<BTreeSet<StateId>>,
    /// B₀ = ∪ B_i.
    pub all: BTreeSet<StateId>,
}

pub fn boundary_nodes(g: &InducedGraph, pi: &Partition) -> Result<BoundaryNodes> {
    let owner = pi.region_of(g.nodes)?;
    let k = pi.len();
    let mut inbound = vec![BTreeSet::new(); k];
    let mut outbound = vec![BTreeSet::new(); k];
    for &(s, _, t) in &g.edges {
        if owner[s] != owner[t] {
            outbound[owner[s]].insert(s);
            inbound[owner[t]].insert(t);
        }
    }
    let regions: Vec<BTreeSet<StateId>> =
        inbound.iter().zip(&outbound).map(|(a, b)| a.union(b).copied().collect()).collect();
    let all = regions.iter().flatten().copied().collect();
    Ok(BoundaryNodes { inbound, outbound, regions, all })
}

/// Partition produced by [`grid_r_division`].
#[derive(Clone, Debug)]
pub struct RDivision {
    pub partition: Partition,
    /// Tile side length ⌈√r⌉.
    pub tile: usize,
    /// Set when r covers the whole grid and a single region was returned.
    pub degenerate: bool,
}

/// r-division specialised to grids: rectangular tiles of side ⌈√r⌉. Tiles
/// that contain only walls are dropped.
pub fn grid_r_division(grid: &GridSpec, r: usize) -> Result<RDivision> {
    if r < 4 {
        return Err(Error::Parameter(format!("r-division needs r ≥ 4, got {r}")));
    }
    let ids = cell_state_ids(grid);
    let n_states = ids.iter().flatten().count();
    let cells = grid.width * grid.height;
    if r >= cells {
        return Ok(RDivision {
            partition: Partition::single(n_states),
            tile: grid.width.max(grid.height),
            degenerate: true,
        });
    }
    let side = (r as f64).sqrt().ceil() as usize;
    let tiles_x = grid.width.div_ceil(side);
    let tiles_y = grid.height.div_ceil(side);
    let mut regions = vec![Vec::new(); tiles_x * tiles_y];
    for y in 0..grid.height {
        for x in 0..grid.width {
            if let Some(s) = ids[y * grid.width + x] {
                regions[(y / side) * tiles_x + x / side].push(s);
            }
        }
    }
    regions.retain(|r| !r.is_empty());
    Ok(RDivision { partition: Partition::new(regions), tile: side, degenerate: false })
}

/// Concrete r-division bounds with constant `c`: at most c·n/r regions, each
/// with at most c·r nodes and c·√r boundary nodes, and at most c·n/√r
/// boundary nodes overall.
pub fn check_r_division_bounds(pi: &Partition, g: &InducedGraph, r: usize, c: f64) -> bool {
    let Ok(b) = boundary_nodes(g, pi) else {
        return false;
    };
    let n = g.nodes as f64;
    let r = r as f64;
    let count_ok = pi.len() as f64 <= (c * n / r).max(1.0);
    let size_ok = pi.regions.iter().all(|reg| reg.len() as f64 <= c * r);
    let region_boundary_ok = b.regions.iter().all(|bi| bi.len() as f64 <= c * r.sqrt());
    let total_ok = b.all.len() as f64 <= c * n / r.sqrt();
    count_ok && size_ok && region_boundary_ok && total_ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::build_gridworld;
    use crate::instances::{eight_state_mdp, eight_state_partition, random_mdp, random_partition};
    use crate::mdp::MdpBuilder;

    fn names(mdp: &Mdp, set: impl IntoIterator<Item = StateId>) -> Vec<String> {
        let mut v: Vec<String> = set.into_iter().map(|s| mdp.state_name(s).to_string()).collect();
        v.sort();
        v
    }

    #[test]
    fn eight_state_peripheries() {
        let m = eight_state_mdp();
        let pi = eight_state_partition(&m);
        assert_eq!(names(&m, periphery(&m, &pi.regions[0]).unwrap()), ["s2", "s7"]);
        assert_eq!(names(&m, periphery(&m, &pi.regions[1]).unwrap()), ["s4"]);
        let all: Vec<StateId> = (0..m.num_states()).collect();
        assert!(periphery(&m, &all).unwrap().is_empty());
    }

    #[test]
    fn periphery_rejects_foreign_state() {
        let m = eight_state_mdp();
        assert!(periphery(&m, &[0, 42]).is_err());
    }

    #[test]
    fn eight_state_decomposition() {
        let m = eight_state_mdp();
        let d = decompose(&m, &eight_state_partition(&m)).unwrap();
        assert_eq!(names(&m, d.k0.clone()), ["s2", "s4", "s7"]);
        assert_eq!(names(&m, d.kernels[0].clone()), ["s5", "s6"]);
        assert_eq!(names(&m, d.kernels[1].clone()), ["s0", "s1", "s3"]);
        assert_eq!(d.n, vec![3, 2, 3]);
        assert_eq!(d.m, vec![6, 3, 6]);
        let rep = verify_lemma1(&m, &d);
        assert!(rep.holds, "{:?}", rep.counterexamples);
        // s5 is only entered from s4 (K0) and s6 (K1)
        let s5 = m.state_id("s5").unwrap();
        let preds: BTreeSet<String> =
            m.predecessors()[s5].iter().map(|&(s, _, _)| m.state_name(s).to_string()).collect();
        assert_eq!(preds, BTreeSet::from(["s4".to_string(), "s6".to_string()]));
    }

    #[test]
    fn single_region_has_empty_k0() {
        let m = eight_state_mdp();
        let d = decompose(&m, &Partition::single(m.num_states())).unwrap();
        assert!(d.k0.is_empty());
        assert_eq!(d.kernels[0].len(), m.num_states());
        assert!(verify_lemma1(&m, &d).holds);
    }

    #[test]
    fn singletons_on_connected_pair() {
        let mut b = MdpBuilder::new();
        for s in ["s0", "s1"] {
            for t in ["s0", "s1"] {
                b.transition(s, "a", t, 0.5);
            }
        }
        b.initial("s0", 1.0);
        let m = b.build().unwrap();
        let d = decompose(&m, &Partition::new(vec![vec![0], vec![1]])).unwrap();
        assert_eq!(d.k0, vec![0, 1]);
        assert!(d.kernels.iter().all(Vec::is_empty));
    }

    #[test]
    fn invalid_partitions_rejected() {
        let m = eight_state_mdp();
        let overlap = Partition::new(vec![(0..8).collect(), vec![3]]);
        let err = decompose(&m, &overlap).unwrap_err().to_string();
        assert!(err.contains("state #3"), "{err}");
        let gap = Partition::new(vec![(0..7).collect()]);
        assert!(decompose(&m, &gap).unwrap_err().to_string().contains("not covered"));
    }

    #[test]
    fn predecessor_check_detects_broken_decomposition() {
        let m = eight_state_mdp();
        let mut d = decompose(&m, &eight_state_partition(&m)).unwrap();
        // pretend s4 were a kernel state of K2: s5 (K1) <- s4 is then a cross-kernel edge
        let s4 = m.state_id("s4").unwrap();
        d.slots[s4] = Slot { set: 2, index: 99 };
        let rep = verify_lemma1(&m, &d);
        assert!(!rep.holds);
        assert!(rep.counterexamples.iter().any(|&(src, _, _)| src == s4));
    }

    #[test]
    fn predecessor_check_random_property() {
        for seed in 0..200u64 {
            let n = 3 + (seed as usize % 12);
            let m = random_mdp(seed, n, 3);
            let k = 1 + (seed as usize % n.min(5));
            let pi = random_partition(seed, n, k);
            let d = decompose(&m, &pi).unwrap();
            assert!(verify_lemma1(&m, &d).holds, "seed {seed}");
            // every state lands in exactly one of K0..KN
            let mut count = vec![0; n];
            for i in 0..d.num_sets() {
                for &s in d.set(i) {
                    count[s] += 1;
                }
            }
            assert!(count.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn eight_state_boundary_nodes() {
        let m = eight_state_mdp();
        let pi = eight_state_partition(&m);
        let g = InducedGraph::from_mdp(&m);
        let b = boundary_nodes(&g, &pi).unwrap();
        let id = |s: &str| m.state_id(s).unwrap();
        assert_eq!(b.inbound[0], BTreeSet::from([id("s4")]));
        assert!(b.inbound[1].contains(&id("s2")) && b.inbound[1].contains(&id("s7")));
        let d = decompose(&m, &pi).unwrap();
        assert!(d.k0.iter().all(|s| b.all.contains(s)));
        let single = boundary_nodes(&g, &Partition::single(8)).unwrap();
        assert!(single.all.is_empty());
    }

    #[test]
    fn two_cell_grid_boundaries() {
        let spec = GridSpec::open(2, 1);
        let m = build_gridworld(&spec).unwrap();
        let g = InducedGraph::from_mdp(&m);
        let pi = Partition::new(vec![vec![0], vec![1]]);
        let b = boundary_nodes(&g, &pi).unwrap();
        assert_eq!(b.regions[0], BTreeSet::from([0]));
        assert_eq!(b.regions[1], BTreeSet::from([1]));
    }

    #[test]
    fn tiling_arithmetic() {
        let div = grid_r_division(&GridSpec::open(20, 20), 100).unwrap();
        assert_eq!(div.partition.len(), 4);
        assert!(div.partition.regions.iter().all(|r| r.len() == 100));
        assert!(!div.degenerate);
        let small = grid_r_division(&GridSpec::open(4, 4), 16).unwrap();
        assert_eq!(small.partition.len(), 1);
        assert!(small.degenerate);
    }

    #[test]
    fn perimeter_bound_on_large_grid() {
        let spec = GridSpec::open(100, 100);
        let m = build_gridworld(&spec).unwrap();
        let g = InducedGraph::from_mdp(&m);
        let div = grid_r_division(&spec, 400).unwrap();
        let b = boundary_nodes(&g, &div.partition).unwrap();
        assert!(div.partition.regions.iter().all(|r| r.len() <= 400));
        assert!(b.regions.iter().all(|bi| bi.len() <= 4 * 20 + 4));
        assert!(check_r_division_bounds(&div.partition, &g, 400, 5.0));
    }

    #[test]
    fn bounds_reject_stripes() {
        let spec = GridSpec::open(20, 20);
        let m = build_gridworld(&spec).unwrap();
        let g = InducedGraph::from_mdp(&m);
        let div = grid_r_division(&spec, 100).unwrap();
        assert!(check_r_division_bounds(&div.partition, &g, 100, 5.0));
        assert!(check_r_division_bounds(&Partition::single(400), &g, 400, 5.0));
        let stripes = Partition::new((0..20).map(|x| (0..20).map(|y| y * 20 + x).collect()).collect());
        assert!(!check_r_division_bounds(&stripes, &g, 100, 2.0));
    }

    #[test]
    fn partition_json_round_trip() {
        let m = eight_state_mdp();
        let pi = eight_state_partition(&m);
        let back = Partition::from_json_str(&m, &pi.to_json_string(&m).unwrap()).unwrap();
        assert_eq!(back, pi);
    }
}
