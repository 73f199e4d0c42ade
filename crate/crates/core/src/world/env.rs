use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Level, WorldError};

/// Grid coordinate. North is `+y`, the origin is the bottom-left cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dir: Dir) -> Pos {
        let (dx, dy) = dir.delta();
        Pos::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Pos) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl From<(i32, i32)> for Pos {
    fn from((x, y): (i32, i32)) -> Self {
        Pos::new(x, y)
    }
}

impl From<Pos> for (i32, i32) {
    fn from(p: Pos) -> Self {
        (p.x, p.y)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// The four primitive actions, in action-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dir {
    North,
    South,
    East,
    West,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::North, Dir::South, Dir::East, Dir::West];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Dir::North => (0, 1),
            Dir::South => (0, -1),
            Dir::East => (1, 0),
            Dir::West => (-1, 0),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Dir> {
        Dir::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Dir::North => "north",
            Dir::South => "south",
            Dir::East => "east",
            Dir::West => "west",
        }
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoomIdx(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DoorIdx(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockIdx(pub usize);

/// A room or a door.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Room(RoomIdx),
    Door(DoorIdx),
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub id: String,
    pub color: String,
    pub cells: Vec<Pos>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorSpec {
    pub id: String,
    pub cells: Vec<Pos>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub id: String,
    pub color: String,
    pub pos: Pos,
}

/// On-disk environment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvFile {
    pub width: i32,
    pub height: i32,
    #[serde(default)]
    pub walls: Vec<Pos>,
    pub rooms: Vec<RoomSpec>,
    #[serde(default)]
    pub doors: Vec<DoorSpec>,
    #[serde(default)]
    pub blocks: Vec<BlockSpec>,
    pub agent: Pos,
}

// ---------------------------------------------------------------------------
// Static layout

#[derive(Debug, Clone)]
pub struct RoomInfo {
    pub id: String,
    pub color: String,
    pub cells: Vec<Pos>,
}

#[derive(Debug, Clone)]
pub struct DoorInfo {
    pub id: String,
    pub cells: Vec<Pos>,
    /// The two rooms this door joins, lowest id first.
    pub rooms: [RoomIdx; 2],
}

#[derive(Debug, Clone)]
pub struct BlockInfo {
    pub id: String,
    pub color: String,
}

/// Most blocks a packed planner state can hold.
pub const MAX_BLOCKS: usize = 3;

/// The immutable part of a Cleanup World instance: geometry, regions, and
/// object identities. Shared between every state of an environment.
#[derive(Debug)]
pub struct Layout {
    width: i32,
    height: i32,
    walls: BTreeSet<Pos>,
    rooms: Vec<RoomInfo>,
    doors: Vec<DoorInfo>,
    blocks: Vec<BlockInfo>,
    cell_region: Vec<Option<Region>>,
    /// `neighbors[cell][dir]`: destination cell index, `None` for walls and edges.
    neighbors: Vec<[Option<u16>; 4]>,
    room_adjacency: Vec<Vec<RoomIdx>>,
}

/// Compares ids like `room2` < `room10`.
pub(crate) fn natural_cmp(a: &str, b: &str) -> Ordering {
    let split = |s: &str| {
        let digits = s.len() - s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (head, tail) = s.split_at(s.len() - digits);
        (head.to_string(), tail.parse::<u64>().ok())
    };
    let (ha, na) = split(a);
    let (hb, nb) = split(b);
    ha.cmp(&hb).then(na.cmp(&nb)).then(a.cmp(b))
}

impl Layout {
    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn rooms(&self) -> &[RoomInfo] {
        &self.rooms
    }

    pub fn doors(&self) -> &[DoorInfo] {
        &self.doors
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    pub fn walls(&self) -> &BTreeSet<Pos> {
        &self.walls
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.width && p.y < self.height
    }

    pub fn cell_index(&self, p: Pos) -> Option<usize> {
        self.in_bounds(p).then(|| (p.y * self.width + p.x) as usize)
    }

    pub fn cell_pos(&self, idx: usize) -> Pos {
        let idx = idx as i32;
        Pos::new(idx % self.width, idx / self.width)
    }

    pub fn is_free(&self, p: Pos) -> bool {
        self.cell_index(p).is_some_and(|i| self.cell_region[i].is_some())
    }

    pub fn region_at(&self, p: Pos) -> Option<Region> {
        self.cell_index(p).and_then(|i| self.cell_region[i])
    }

    pub(crate) fn region_at_index(&self, idx: usize) -> Option<Region> {
        self.cell_region[idx]
    }

    pub(crate) fn neighbor(&self, cell: usize, dir: Dir) -> Option<u16> {
        self.neighbors[cell][dir.index()]
    }

    /// Room used for a region at level 2: doors collapse onto their
    /// lowest-id adjacent room.
    pub fn room_of_region(&self, r: Region) -> RoomIdx {
        match r {
            Region::Room(room) => room,
            Region::Door(d) => self.doors[d.0].rooms[0],
        }
    }

    pub fn room_at(&self, p: Pos) -> Option<RoomIdx> {
        self.region_at(p).map(|r| self.room_of_region(r))
    }

    pub fn num_regions(&self) -> usize {
        self.rooms.len() + self.doors.len()
    }

    /// Dense index of a region: rooms first, then doors.
    pub fn region_index(&self, r: Region) -> usize {
        match r {
            Region::Room(room) => room.0,
            Region::Door(d) => self.rooms.len() + d.0,
        }
    }

    pub fn region_from_index(&self, i: usize) -> Region {
        if i < self.rooms.len() {
            Region::Room(RoomIdx(i))
        } else {
            Region::Door(DoorIdx(i - self.rooms.len()))
        }
    }

    pub fn regions(&self) -> impl Iterator<Item = Region> + '_ {
        (0..self.num_regions()).map(|i| self.region_from_index(i))
    }

    pub fn region_id(&self, r: Region) -> &str {
        match r {
            Region::Room(room) => &self.rooms[room.0].id,
            Region::Door(d) => &self.doors[d.0].id,
        }
    }

    pub fn region_cells(&self, r: Region) -> &[Pos] {
        match r {
            Region::Room(room) => &self.rooms[room.0].cells,
            Region::Door(d) => &self.doors[d.0].cells,
        }
    }

    /// Regions one transition away at level 1. Rooms only touch doors.
    pub fn adjacent_regions(&self, r: Region) -> Vec<Region> {
        match r {
            Region::Room(room) => self
                .doors
                .iter()
                .enumerate()
                .filter(|(_, d)| d.rooms.contains(&room))
                .map(|(i, _)| Region::Door(DoorIdx(i)))
                .collect(),
            Region::Door(d) => self.doors[d.0].rooms.iter().map(|&r| Region::Room(r)).collect(),
        }
    }

    /// Rooms that share at least one door with `room`.
    pub fn adjacent_rooms(&self, room: RoomIdx) -> &[RoomIdx] {
        &self.room_adjacency[room.0]
    }

    /// Doors directly between two rooms.
    pub fn doors_between(&self, a: RoomIdx, b: RoomIdx) -> Vec<DoorIdx> {
        self.doors
            .iter()
            .enumerate()
            .filter(|(_, d)| d.rooms.contains(&a) && d.rooms.contains(&b))
            .map(|(i, _)| DoorIdx(i))
            .collect()
    }

    pub fn room_by_id(&self, id: &str) -> Option<RoomIdx> {
        self.rooms.iter().position(|r| r.id == id).map(RoomIdx)
    }

    pub fn block_by_id(&self, id: &str) -> Option<BlockIdx> {
        self.blocks.iter().position(|b| b.id == id).map(BlockIdx)
    }

    /// Cell-level successor used by both `GridEnv::step` and the packed
    /// planner states. `blocks` holds cell indices.
    pub(crate) fn step_cells(&self, agent: u16, blocks: &mut [u16], dir: Dir) -> Option<u16> {
        let dest = self.neighbor(agent as usize, dir)?;
        if let Some(bi) = blocks.iter().position(|&b| b == dest) {
            let beyond = self.neighbor(dest as usize, dir)?;
            if blocks.contains(&beyond) {
                return None;
            }
            blocks[bi] = beyond;
        }
        Some(dest)
    }

    fn build(file: &EnvFile) -> Result<(Layout, Vec<Pos>), WorldError> {
        let (width, height) = (file.width, file.height);
        if width <= 0 || height <= 0 {
            return Err(WorldError::InvalidEnv(format!("non-positive size {width}x{height}")));
        }
        if (width as i64) * (height as i64) > u16::MAX as i64 {
            return Err(WorldError::InvalidEnv("grid exceeds 65535 cells".into()));
        }
        if file.blocks.len() > MAX_BLOCKS {
            return Err(WorldError::InvalidEnv(format!(
                "{} blocks given, at most {MAX_BLOCKS} supported",
                file.blocks.len()
            )));
        }
        let in_bounds = |p: Pos| p.x >= 0 && p.y >= 0 && p.x < width && p.y < height;
        let index = |p: Pos| (p.y * width + p.x) as usize;
        let n = (width * height) as usize;

        let mut walls = BTreeSet::new();
        for &w in &file.walls {
            if !in_bounds(w) {
                return Err(WorldError::InvalidEnv(format!("wall {w} out of bounds")));
            }
            walls.insert(w);
        }

        let mut ids = HashMap::new();
        let mut claim = |id: &str, what: &str| -> Result<(), WorldError> {
            if ids.insert(id.to_string(), what.to_string()).is_some() {
                return Err(WorldError::InvalidEnv(format!("duplicate id {id}")));
            }
            Ok(())
        };

        let mut cell_region: Vec<Option<Region>> = vec![None; n];
        let mut mark = |cells: &[Pos], region: Region, id: &str| -> Result<(), WorldError> {
            for &c in cells {
                if !in_bounds(c) {
                    return Err(WorldError::InvalidEnv(format!("{id}: cell {c} out of bounds")));
                }
                if walls.contains(&c) {
                    return Err(WorldError::InvalidEnv(format!("{id}: cell {c} is a wall")));
                }
                if cell_region[index(c)].replace(region).is_some() {
                    return Err(WorldError::InvalidEnv(format!("{id}: cell {c} claimed twice")));
                }
            }
            Ok(())
        };

        let mut rooms = Vec::with_capacity(file.rooms.len());
        for (i, r) in file.rooms.iter().enumerate() {
            claim(&r.id, "room")?;
            if r.cells.is_empty() {
                return Err(WorldError::InvalidEnv(format!("room {} has no cells", r.id)));
            }
            mark(&r.cells, Region::Room(RoomIdx(i)), &r.id)?;
            rooms.push(RoomInfo { id: r.id.clone(), color: r.color.to_lowercase(), cells: r.cells.clone() });
        }
        for (i, d) in file.doors.iter().enumerate() {
            claim(&d.id, "door")?;
            if d.cells.is_empty() {
                return Err(WorldError::InvalidEnv(format!("door {} has no cells", d.id)));
            }
            mark(&d.cells, Region::Door(DoorIdx(i)), &d.id)?;
        }
        for y in 0..height {
            for x in 0..width {
                let p = Pos::new(x, y);
                if !walls.contains(&p) && cell_region[index(p)].is_none() {
                    return Err(WorldError::InvalidEnv(format!("cell {p} is neither wall nor region")));
                }
            }
        }

        let room_at = |p: Pos| -> Option<RoomIdx> {
            if !in_bounds(p) {
                return None;
            }
            match cell_region[index(p)] {
                Some(Region::Room(r)) => Some(r),
                _ => None,
            }
        };
        let mut doors = Vec::with_capacity(file.doors.len());
        for d in &file.doors {
            let mut joined = BTreeSet::new();
            for &c in &d.cells {
                let here: BTreeSet<RoomIdx> = Dir::ALL.iter().filter_map(|&dir| room_at(c.offset(dir))).collect();
                if here.len() != 2 {
                    return Err(WorldError::InvalidEnv(format!(
                        "door {} cell {c} touches {} rooms, expected 2",
                        d.id,
                        here.len()
                    )));
                }
                joined.extend(here);
            }
            if joined.len() != 2 {
                return Err(WorldError::InvalidEnv(format!("door {} joins {} rooms", d.id, joined.len())));
            }
            let mut pair: Vec<RoomIdx> = joined.into_iter().collect();
            pair.sort_by(|a, b| natural_cmp(&rooms[a.0].id, &rooms[b.0].id));
            doors.push(DoorInfo { id: d.id.clone(), cells: d.cells.clone(), rooms: [pair[0], pair[1]] });
        }

        let mut room_adjacency = vec![Vec::new(); rooms.len()];
        for d in &doors {
            let [a, b] = d.rooms;
            if !room_adjacency[a.0].contains(&b) {
                room_adjacency[a.0].push(b);
                room_adjacency[b.0].push(a);
            }
        }
        for adj in &mut room_adjacency {
            adj.sort();
        }

        let mut neighbors = vec![[None; 4]; n];
        for (idx, slot) in neighbors.iter_mut().enumerate() {
            let p = Pos::new(idx as i32 % width, idx as i32 / width);
            if cell_region[idx].is_none() {
                continue;
            }
            for dir in Dir::ALL {
                let q = p.offset(dir);
                if in_bounds(q) && cell_region[index(q)].is_some() {
                    slot[dir.index()] = Some(index(q) as u16);
                }
            }
        }

        // Blocks are ordered by id so that `block0` in lifted strings means the lowest id.
        let mut block_specs: Vec<&BlockSpec> = file.blocks.iter().collect();
        block_specs.sort_by(|a, b| natural_cmp(&a.id, &b.id));
        let mut blocks = Vec::with_capacity(block_specs.len());
        let mut block_pos = Vec::with_capacity(block_specs.len());
        for b in block_specs {
            claim(&b.id, "block")?;
            blocks.push(BlockInfo { id: b.id.clone(), color: b.color.to_lowercase() });
            block_pos.push(b.pos);
        }

        let layout = Layout { width, height, walls, rooms, doors, blocks, cell_region, neighbors, room_adjacency };
        Ok((layout, block_pos))
    }
}

// ---------------------------------------------------------------------------
// Dynamic state

/// Exact positions of every entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct L0State {
    pub agent: Pos,
    /// Indexed by `BlockIdx`.
    pub blocks: Vec<Pos>,
}

impl L0State {
    /// Checks in-bounds, non-wall and pairwise-distinct positions.
    pub fn validate(&self, layout: &Layout) -> Result<(), WorldError> {
        if self.blocks.len() != layout.blocks.len() {
            return Err(WorldError::InvalidState(format!(
                "{} block positions for {} blocks",
                self.blocks.len(),
                layout.blocks.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for p in std::iter::once(self.agent).chain(self.blocks.iter().copied()) {
            if !layout.is_free(p) {
                return Err(WorldError::InvalidState(format!("entity on blocked cell {p}")));
            }
            if !seen.insert(p) {
                return Err(WorldError::InvalidState(format!("two entities share cell {p}")));
            }
        }
        Ok(())
    }
}

/// A Cleanup World instance: shared layout plus entity positions.
#[derive(Debug, Clone)]
pub struct GridEnv {
    layout: Arc<Layout>,
    state: L0State,
}

impl PartialEq for GridEnv {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) && self.state == other.state
    }
}

impl GridEnv {
    pub fn from_file(file: &EnvFile) -> Result<Self, WorldError> {
        let (layout, blocks) = Layout::build(file)?;
        let state = L0State { agent: file.agent, blocks };
        state.validate(&layout)?;
        Ok(GridEnv { layout: Arc::new(layout), state })
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let file: EnvFile = serde_json::from_str(text).map_err(|e| WorldError::InvalidEnv(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| WorldError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_file(&self) -> EnvFile {
        let l = &self.layout;
        EnvFile {
            width: l.width,
            height: l.height,
            walls: l.walls.iter().copied().collect(),
            rooms: l
                .rooms
                .iter()
                .map(|r| RoomSpec { id: r.id.clone(), color: r.color.clone(), cells: r.cells.clone() })
                .collect(),
            doors: l.doors.iter().map(|d| DoorSpec { id: d.id.clone(), cells: d.cells.clone() }).collect(),
            blocks: l
                .blocks
                .iter()
                .zip(&self.state.blocks)
                .map(|(b, &pos)| BlockSpec { id: b.id.clone(), color: b.color.clone(), pos })
                .collect(),
            agent: self.state.agent,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("env serializes")
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn shared_layout(&self) -> Arc<Layout> {
        Arc::clone(&self.layout)
    }

    pub fn state(&self) -> &L0State {
        &self.state
    }

    pub fn agent(&self) -> Pos {
        self.state.agent
    }

    pub fn block_positions(&self) -> &[Pos] {
        &self.state.blocks
    }

    /// Same layout, different entity positions.
    pub fn with_state(&self, state: L0State) -> Result<Self, WorldError> {
        state.validate(&self.layout)?;
        Ok(GridEnv { layout: Arc::clone(&self.layout), state })
    }

    /// One primitive move. The agent pushes a block it walks into when the
    /// cell beyond is free; walls, edges and chained pushes leave the state
    /// unchanged.
    pub fn step(&self, dir: Dir) -> GridEnv {
        let l = &self.layout;
        let agent = l.cell_index(self.state.agent).expect("valid state") as u16;
        let mut blocks: Vec<u16> =
            self.state.blocks.iter().map(|&p| l.cell_index(p).expect("valid state") as u16).collect();
        match l.step_cells(agent, &mut blocks, dir) {
            Some(dest) => GridEnv {
                layout: Arc::clone(&self.layout),
                state: L0State {
                    agent: l.cell_pos(dest as usize),
                    blocks: blocks.iter().map(|&b| l.cell_pos(b as usize)).collect(),
                },
            },
            None => self.clone(),
        }
    }

    /// Number of primitive states (agent and block placements).
    pub fn state_space_size(&self) -> u128 {
        let free = (self.layout.num_cells() - self.layout.walls.len()) as u128;
        let entities = 1 + self.layout.blocks.len() as u128;
        (0..entities).map(|k| free - k).product()
    }

    /// Abstract state at the requested level.
    pub fn project(&self, level: Level) -> Result<super::LeveledState, WorldError> {
        super::project_state(&self.layout, &self.state, level)
    }

    /// ASCII rendering, top row first. `A` agent, `B` block, `#` wall,
    /// `+` door, room cells by the first letter of their color.
    pub fn render(&self) -> String {
        let l = &self.layout;
        let mut out = String::new();
        for y in (0..l.height).rev() {
            for x in 0..l.width {
                let p = Pos::new(x, y);
                let ch = if p == self.state.agent {
                    'A'
                } else if self.state.blocks.contains(&p) {
                    'B'
                } else {
                    match l.region_at(p) {
                        None => '#',
                        Some(Region::Door(_)) => '+',
                        Some(Region::Room(r)) => l.rooms[r.0].color.chars().next().unwrap_or('.'),
                    }
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}
