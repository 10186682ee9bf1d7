//! Gridworld benchmark family: a robot moving N/S/E/W over terrain-dependent
//! slippery cells, with walls, targets, restricted cells and labeled regions.
//!
//! Moving toward an intended cell succeeds with a terrain-dependent
//! probability; the remaining mass is split evenly between the two cells
//! flanking the intended one (NW/NE for a move north, and so on). Each
//! outcome that would leave the grid or enter a wall bounces back to the
//! current cell.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::Partition;
use crate::error::{Error, Result};
use crate::mdp::{Choice, Mdp, RewardFn, StateId};

pub const ACTIONS: [&str; 4] = ["N", "S", "E", "W"];

pub const RESTRICTED_REWARD: f64 = -1000.0;
pub const TARGET_REWARD: f64 = 100.0;
pub const STEP_REWARD: f64 = -1.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Terrain {
    #[default]
    Pavement,
    Grass,
    Gravel,
    Sand,
}

impl Terrain {
    /// Probability of arriving at the intended cell.
    pub fn success_probability(self) -> f64 {
        match self {
            Terrain::Pavement => 0.9,
            Terrain::Grass => 0.85,
            Terrain::Gravel => 0.8,
            Terrain::Sand => 0.75,
        }
    }
}

/// Grid cell `(x, y)`; `y` grows southward. Serialized as `[x, y]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell(pub usize, pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerrainCell {
    pub cell: Cell,
    pub kind: Terrain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub default_terrain: Terrain,
    #[serde(default)]
    pub terrain: Vec<TerrainCell>,
    #[serde(default)]
    pub walls: Vec<Cell>,
    #[serde(default)]
    pub targets: Vec<Cell>,
    #[serde(default)]
    pub restricted: Vec<Cell>,
    #[serde(default)]
    pub labeled_regions: BTreeMap<String, Vec<Cell>>,
    /// Initial cells; the initial distribution is uniform over them.
    /// Defaults to the first non-wall cell in row-major order.
    #[serde(default)]
    pub start: Vec<Cell>,
    #[serde(default)]
    pub seed: u64,
}

impl GridSpec {
    /// Open `width × height` pavement grid without walls.
    pub fn open(width: usize, height: usize) -> Self {
        GridSpec {
            width,
            height,
            default_terrain: Terrain::Pavement,
            terrain: Vec::new(),
            walls: Vec::new(),
            targets: Vec::new(),
            restricted: Vec::new(),
            labeled_regions: BTreeMap::new(),
            start: Vec::new(),
            seed: 0,
        }
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.0 < self.width && c.1 < self.height
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen: BTreeMap<Cell, &str> = BTreeMap::new();
        let groups: [(&str, &Vec<Cell>); 3] =
            [("wall", &self.walls), ("target", &self.targets), ("restricted", &self.restricted)];
        for (kind, cells) in groups {
            for &c in cells {
                if !self.in_bounds(c) {
                    return Err(Error::Grid(format!("{kind} cell {c:?} out of bounds")));
                }
                if let Some(prev) = seen.insert(c, kind) {
                    if prev != kind {
                        return Err(Error::Grid(format!("cell {c:?} is both {prev} and {kind}")));
                    }
                }
            }
        }
        let extra = self
            .terrain
            .iter()
            .map(|t| t.cell)
            .chain(self.start.iter().copied())
            .chain(self.labeled_regions.values().flatten().copied());
        for c in extra {
            if !self.in_bounds(c) {
                return Err(Error::Grid(format!("cell {c:?} out of bounds")));
            }
        }
        Ok(())
    }

    pub fn terrain_at(&self, c: Cell) -> Terrain {
        self.terrain.iter().rev().find(|t| t.cell == c).map_or(self.default_terrain, |t| t.kind)
    }

    fn wall_set(&self) -> BTreeSet<Cell> {
        self.walls.iter().copied().collect()
    }

    /// Free cells in row-major order, i.e. MDP state order.
    pub fn free_cells(&self) -> Vec<Cell> {
        let walls = self.wall_set();
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if !walls.contains(&Cell(x, y)) {
                    out.push(Cell(x, y));
                }
            }
        }
        out
    }

    /// Draws `targets` target cells and `restricted` restricted cells
    /// uniformly among free, non-start cells, using `self.seed`.
    pub fn place_random(&mut self, targets: usize, restricted: usize) -> Result<()> {
        let taken: BTreeSet<Cell> = self.targets.iter().chain(&self.restricted).chain(&self.start).copied().collect();
        let mut free: Vec<Cell> = self.free_cells().into_iter().filter(|c| !taken.contains(c)).collect();
        if free.len() < targets + restricted {
            return Err(Error::Grid(format!("only {} free cells for {} placements", free.len(), targets + restricted)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        free.shuffle(&mut rng);
        self.targets.extend(free.drain(..targets));
        self.restricted.extend(free.drain(..restricted));
        Ok(())
    }

    /// Loads a spec from JSON, or TOML when the extension is `.toml`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let spec: GridSpec = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))?
        } else {
            serde_json::from_str(&text)?
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = if path.extension().is_some_and(|e| e == "toml") {
            toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?
        } else {
            serde_json::to_string_pretty(self)?
        };
        std::fs::write(path, text)?;
        Ok(())
    }
}

pub fn cell_name(c: Cell) -> String {
    format!("{},{}", c.0, c.1)
}

/// State id of every cell in row-major order (`None` for walls).
pub fn cell_state_ids(spec: &GridSpec) -> Vec<Option<StateId>> {
    let walls = spec.wall_set();
    let mut next = 0;
    let mut out = Vec::with_capacity(spec.width * spec.height);
    for y in 0..spec.height {
        for x in 0..spec.width {
            if walls.contains(&Cell(x, y)) {
                out.push(None);
            } else {
                out.push(Some(next));
                next += 1;
            }
        }
    }
    out
}

fn step(spec: &GridSpec, c: Cell, dx: isize, dy: isize) -> Option<Cell> {
    let x = c.0 as isize + dx;
    let y = c.1 as isize + dy;
    (x >= 0 && y >= 0 && (x as usize) < spec.width && (y as usize) < spec.height)
        .then_some(Cell(x as usize, y as usize))
}

/// Outcome distribution of `action` at `cell`, before merging duplicates.
fn outcomes(spec: &GridSpec, walls: &BTreeSet<Cell>, cell: Cell, action: usize) -> [(Cell, f64); 3] {
    let (dx, dy): (isize, isize) = match action {
        0 => (0, -1),
        1 => (0, 1),
        2 => (1, 0),
        _ => (-1, 0),
    };
    let p = spec.terrain_at(cell).success_probability();
    let slip = (1.0 - p) / 2.0;
    let (f1, f2) = if dx == 0 { ((-1, dy), (1, dy)) } else { ((dx, -1), (dx, 1)) };
    let land = |d: (isize, isize)| match step(spec, cell, d.0, d.1) {
        Some(t) if !walls.contains(&t) => t,
        _ => cell,
    };
    [(land((dx, dy)), p), (land(f1), slip), (land(f2), slip)]
}

/// Builds the labeled gridworld MDP. States are the free cells in row-major
/// order, named `"x,y"`; actions are N, S, E, W.
pub fn build_gridworld(spec: &GridSpec) -> Result<Mdp> {
    spec.validate()?;
    let walls = spec.wall_set();
    let ids = cell_state_ids(spec);
    let cells = spec.free_cells();
    if cells.is_empty() {
        return Err(Error::Grid("every cell is a wall".into()));
    }
    let id_of = |c: Cell| ids[c.1 * spec.width + c.0].expect("free cell has an id");

    let mut initial = vec![0.0; cells.len()];
    let starts: Vec<Cell> = if spec.start.is_empty() {
        vec![cells[0]]
    } else {
        spec.start.iter().copied().filter(|c| !walls.contains(c)).collect()
    };
    if starts.is_empty() {
        return Err(Error::Grid("all start cells are walls".into()));
    }
    for &c in &starts {
        initial[id_of(c)] += 1.0 / starts.len() as f64;
    }

    let mut choices = Vec::with_capacity(cells.len());
    for &c in &cells {
        let mut row = Vec::with_capacity(4);
        for a in 0..ACTIONS.len() {
            let mut succ: BTreeMap<StateId, f64> = BTreeMap::new();
            for (t, p) in outcomes(spec, &walls, c, a) {
                *succ.entry(id_of(t)).or_insert(0.0) += p;
            }
            row.push(Choice { action: a, successors: succ.into_iter().collect() });
        }
        choices.push(row);
    }

    let ap: Vec<String> = spec.labeled_regions.keys().cloned().collect();
    let mut labels = vec![BTreeSet::new(); cells.len()];
    for (prop, region) in &spec.labeled_regions {
        for &c in region {
            if let Some(s) = ids[c.1 * spec.width + c.0] {
                labels[s].insert(prop.clone());
            }
        }
    }

    Mdp::from_parts(
        cells.iter().map(|&c| cell_name(c)).collect(),
        ACTIONS.iter().map(|s| s.to_string()).collect(),
        initial,
        choices,
        Some(labels),
        ap,
    )
}

/// −1000 in restricted cells, +100 in targets, −1 elsewhere.
pub fn discounted_reward_fn(spec: &GridSpec) -> Result<RewardFn> {
    spec.validate()?;
    let cells = spec.free_cells();
    let targets: BTreeSet<Cell> = spec.targets.iter().copied().collect();
    let restricted: BTreeSet<Cell> = spec.restricted.iter().copied().collect();
    let values = cells
        .iter()
        .map(|c| {
            let v = if restricted.contains(c) {
                RESTRICTED_REWARD
            } else if targets.contains(c) {
                TARGET_REWARD
            } else {
                STEP_REWARD
            };
            vec![v; ACTIONS.len()]
        })
        .collect();
    Ok(RewardFn { values })
}

/// Partition of the gridworld states given by room cell sets. Wall cells
/// listed in a room are ignored.
pub fn wall_partition(spec: &GridSpec, rooms: &[Vec<Cell>]) -> Result<Partition> {
    let ids = cell_state_ids(spec);
    let n = ids.iter().flatten().count();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut regions = Vec::with_capacity(rooms.len());
    for (r, room) in rooms.iter().enumerate() {
        let mut region = Vec::new();
        for &c in room {
            if !spec.in_bounds(c) {
                return Err(Error::Grid(format!("room {r} cell {c:?} out of bounds")));
            }
            let Some(s) = ids[c.1 * spec.width + c.0] else { continue };
            if let Some(prev) = owner[s] {
                if prev != r {
                    return Err(Error::InvalidPartition(format!("cell {c:?} belongs to rooms {prev} and {r}")));
                }
                continue;
            }
            owner[s] = Some(r);
            region.push(s);
        }
        if region.is_empty() {
            return Err(Error::InvalidPartition(format!("room {r} has no free cell")));
        }
        regions.push(region);
    }
    let cells = spec.free_cells();
    let gaps: Vec<Cell> = (0..n).filter(|&s| owner[s].is_none()).map(|s| cells[s]).collect();
    if !gaps.is_empty() {
        return Err(Error::InvalidPartition(format!("cells in no room: {gaps:?}")));
    }
    Ok(Partition::new(regions))
}

/// A grid split into `rooms_x × rooms_y` rooms by one-cell walls, with one
/// doorway in the middle of every wall segment between adjacent rooms.
#[derive(Clone, Debug)]
pub struct RoomLayout {
    pub spec: GridSpec,
    pub rooms: Vec<Vec<Cell>>,
}

pub fn room_layout(width: usize, height: usize, rooms_x: usize, rooms_y: usize) -> Result<RoomLayout> {
    if rooms_x == 0 || rooms_y == 0 || width < 3 * rooms_x || height < 3 * rooms_y {
        return Err(Error::Grid(format!("cannot fit {rooms_x}×{rooms_y} rooms in {width}×{height}")));
    }
    let wall_x: Vec<usize> = (1..rooms_x).map(|k| k * width / rooms_x).collect();
    let wall_y: Vec<usize> = (1..rooms_y).map(|k| k * height / rooms_y).collect();
    let bounds = |walls: &[usize], len: usize| -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut lo = 0;
        for &w in walls {
            out.push((lo, w));
            lo = w + 1;
        }
        out.push((lo, len));
        out
    };
    let xs = bounds(&wall_x, width);
    let ys = bounds(&wall_y, height);

    let mut walls = BTreeSet::new();
    for &x in &wall_x {
        for y in 0..height {
            walls.insert(Cell(x, y));
        }
    }
    for &y in &wall_y {
        for x in 0..width {
            walls.insert(Cell(x, y));
        }
    }
    let mut rooms: Vec<Vec<Cell>> = Vec::new();
    for &(y0, y1) in &ys {
        for &(x0, x1) in &xs {
            let mut room = Vec::new();
            for y in y0..y1 {
                for x in x0..x1 {
                    room.push(Cell(x, y));
                }
            }
            rooms.push(room);
        }
    }
    // doorways: the east wall and the south wall of every room, assigned to it
    for (ry, &(y0, y1)) in ys.iter().enumerate() {
        for (rx, &(x0, x1)) in xs.iter().enumerate() {
            let room = &mut rooms[ry * xs.len() + rx];
            if rx + 1 < xs.len() {
                let door = Cell(x1, (y0 + y1) / 2);
                walls.remove(&door);
                room.push(door);
            }
            if ry + 1 < ys.len() {
                let door = Cell((x0 + x1) / 2, y1);
                walls.remove(&door);
                room.push(door);
            }
        }
    }
    let mut spec = GridSpec::open(width, height);
    spec.walls = walls.into_iter().collect();
    Ok(RoomLayout { spec, rooms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::decompose;
    use crate::mdp::count_state_action_pairs;

    fn dist(m: &Mdp, cell: Cell, action: &str) -> BTreeMap<String, f64> {
        let s = m.state_id(&cell_name(cell)).unwrap();
        let a = m.action_id(action).unwrap();
        let k = m.choice_index(s, a).unwrap();
        m.choices(s)[k].successors.iter().map(|&(t, p)| (m.state_name(t).to_string(), p)).collect()
    }

    #[test]
    fn pavement_north_splits_to_diagonals() {
        let m = build_gridworld(&GridSpec::open(3, 3)).unwrap();
        let d = dist(&m, Cell(1, 1), "N");
        assert_eq!(d.len(), 3);
        assert!((d["1,0"] - 0.9).abs() < 1e-15);
        assert!((d["0,0"] - 0.05).abs() < 1e-15);
        assert!((d["2,0"] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn wall_bounces_to_self() {
        let mut spec = GridSpec::open(3, 3);
        spec.walls.push(Cell(1, 0));
        let m = build_gridworld(&spec).unwrap();
        let d = dist(&m, Cell(1, 1), "N");
        assert!((d["1,1"] - 0.9).abs() < 1e-15);
        assert!((d["0,0"] - 0.05).abs() < 1e-15);
        // boundary: moving north from the top row stays put entirely
        let top = dist(&m, Cell(0, 0), "N");
        assert_eq!(top.len(), 1);
        assert!((top["0,0"] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn terrain_probabilities() {
        let mut spec = GridSpec::open(3, 3);
        spec.terrain.push(TerrainCell { cell: Cell(1, 1), kind: Terrain::Sand });
        let m = build_gridworld(&spec).unwrap();
        let d = dist(&m, Cell(1, 1), "E");
        assert!((d["2,1"] - 0.75).abs() < 1e-15);
        assert!((d["2,0"] - 0.125).abs() < 1e-15);
        assert!((d["2,2"] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn stochastic_and_local() {
        let layout = room_layout(20, 20, 2, 2).unwrap();
        let mut spec = layout.spec.clone();
        spec.terrain.push(TerrainCell { cell: Cell(3, 3), kind: Terrain::Grass });
        spec.terrain.push(TerrainCell { cell: Cell(4, 3), kind: Terrain::Gravel });
        let m = build_gridworld(&spec).unwrap();
        assert_eq!(count_state_action_pairs(&m), 4 * m.num_states());
        let cells = spec.free_cells();
        for (s, _, c) in m.pairs() {
            let sum: f64 = c.successors.iter().map(|x| x.1).sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            for &(t, _) in &c.successors {
                let (a, b) = (cells[s], cells[t]);
                assert!(a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1);
            }
        }
    }

    #[test]
    fn rewards_by_cell_kind() {
        let mut spec = GridSpec::open(3, 1);
        spec.targets.push(Cell(2, 0));
        spec.restricted.push(Cell(1, 0));
        let r = discounted_reward_fn(&spec).unwrap();
        assert_eq!(r.values[0], vec![-1.0; 4]);
        assert_eq!(r.values[1], vec![-1000.0; 4]);
        assert_eq!(r.values[2], vec![100.0; 4]);
    }

    #[test]
    fn overlapping_kinds_rejected() {
        let mut spec = GridSpec::open(3, 3);
        spec.targets.push(Cell(1, 1));
        spec.walls.push(Cell(1, 1));
        assert!(build_gridworld(&spec).is_err());
    }

    #[test]
    fn walled_start_rejected() {
        let mut spec = GridSpec::open(3, 3);
        spec.walls.push(Cell(0, 0));
        spec.start.push(Cell(0, 0));
        assert!(matches!(build_gridworld(&spec), Err(Error::Grid(_))));
    }

    #[test]
    fn four_rooms_partition_has_doorway_k0() {
        let layout = room_layout(20, 20, 2, 2).unwrap();
        let m = build_gridworld(&layout.spec).unwrap();
        let pi = wall_partition(&layout.spec, &layout.rooms).unwrap();
        assert_eq!(pi.len(), 4);
        let d = decompose(&m, &pi).unwrap();
        assert!(!d.k0.is_empty());
        let door = m.state_id(&cell_name(Cell(10, 5))).unwrap();
        let east = m.state_id(&cell_name(Cell(11, 5))).unwrap();
        assert!(d.k0.contains(&door) || d.k0.contains(&east));
    }

    #[test]
    fn single_room_and_overlap() {
        let spec = GridSpec::open(4, 4);
        let all: Vec<Cell> = spec.free_cells();
        assert_eq!(wall_partition(&spec, std::slice::from_ref(&all)).unwrap().len(), 1);
        let err = wall_partition(&spec, &[all.clone(), vec![Cell(0, 0)]]).unwrap_err();
        assert!(matches!(err, Error::InvalidPartition(_)));
        let err = wall_partition(&spec, &[all[1..].to_vec()]).unwrap_err();
        assert!(err.to_string().contains("no room"));
    }

    #[test]
    fn random_placement_is_seeded() {
        let mut a = GridSpec::open(10, 10);
        a.seed = 7;
        let mut b = a.clone();
        a.place_random(1, 5).unwrap();
        b.place_random(1, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.validate().is_ok());
    }

    #[test]
    fn spec_toml_round_trip() {
        let mut spec = room_layout(12, 12, 2, 2).unwrap().spec;
        spec.seed = 3;
        spec.place_random(2, 3).unwrap();
        spec.labeled_regions.insert("p".into(), vec![Cell(1, 1)]);
        spec.terrain.push(TerrainCell { cell: Cell(2, 2), kind: Terrain::Gravel });
        let text = toml::to_string_pretty(&spec).unwrap();
        let back: GridSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
