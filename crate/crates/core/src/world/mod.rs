//! Cleanup World: a grid of colored rooms joined by doors, one agent that
//! moves in the four cardinal directions, and blocks the agent can push.
//!
//! The world is viewed at three levels of abstraction:
//!
//! * level 0: exact cell positions,
//! * level 1: the room or door each entity occupies,
//! * level 2: rooms only (a door cell counts as its lowest-id adjacent room).

mod bundled;
mod env;
mod prop;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bundled::{bundled, BundledEnv};
pub use env::{
    BlockIdx, BlockInfo, BlockSpec, Dir, DoorIdx, DoorInfo, DoorSpec, EnvFile, GridEnv, L0State, Layout, Pos,
    Region, RoomIdx, RoomInfo, RoomSpec, MAX_BLOCKS,
};
pub use prop::{eval_prop, Entity, Prop};

use crate::grounding::{Constraint, LiftedRewardFunction, ObjectToken, Predicate};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("invalid environment: {0}")]
    InvalidEnv(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("unknown object: {0}")]
    UnknownObject(String),
    #[error("proposition for level {prop} evaluated on a level {state} state")]
    LevelMismatch { prop: Level, state: Level },
    #[error("{0}")]
    Io(String),
}

/// Abstraction level of a state, task or command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Level {
    L0,
    L1,
    L2,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::L0, Level::L1, Level::L2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Level> {
        Level::ALL.get(i).copied()
    }

    pub fn below(self) -> Option<Level> {
        match self {
            Level::L0 => None,
            Level::L1 => Some(Level::L0),
            Level::L2 => Some(Level::L1),
        }
    }
}

impl TryFrom<u8> for Level {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Level::from_index(v as usize).ok_or_else(|| format!("level {v} out of range 0..=2"))
    }
}

impl From<Level> for u8 {
    fn from(l: Level) -> u8 {
        l as u8
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.index())
    }
}

/// Region of every entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct L1State {
    pub agent: Region,
    pub blocks: Vec<Region>,
}

/// Room of every entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct L2State {
    pub agent: RoomIdx,
    pub blocks: Vec<RoomIdx>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LeveledState {
    L0(L0State),
    L1(L1State),
    L2(L2State),
}

impl LeveledState {
    pub fn level(&self) -> Level {
        match self {
            LeveledState::L0(_) => Level::L0,
            LeveledState::L1(_) => Level::L1,
            LeveledState::L2(_) => Level::L2,
        }
    }
}

/// Projects exact positions onto the requested level.
pub fn project_state(layout: &Layout, state: &L0State, level: Level) -> Result<LeveledState, WorldError> {
    let region = |p: Pos| {
        layout.region_at(p).ok_or_else(|| WorldError::InvalidState(format!("no region contains cell {p}")))
    };
    Ok(match level {
        Level::L0 => {
            state.validate(layout)?;
            LeveledState::L0(state.clone())
        }
        Level::L1 => LeveledState::L1(L1State {
            agent: region(state.agent)?,
            blocks: state.blocks.iter().map(|&p| region(p)).collect::<Result<_, _>>()?,
        }),
        Level::L2 => LeveledState::L2(L2State {
            agent: layout.room_of_region(region(state.agent)?),
            blocks: state
                .blocks
                .iter()
                .map(|&p| region(p).map(|r| layout.room_of_region(r)))
                .collect::<Result<_, _>>()?,
        }),
    })
}

/// A subroutine available at level 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subtask {
    MoveAgent(Region),
    MoveBlock(BlockIdx, Region),
}

impl Subtask {
    pub fn describe(&self, layout: &Layout) -> String {
        match *self {
            Subtask::MoveAgent(g) => format!("move_agent_to_region({})", layout.region_id(g)),
            Subtask::MoveBlock(b, g) => {
                format!("move_block_to_region({}, {})", layout.blocks()[b.0].id, layout.region_id(g))
            }
        }
    }
}

/// Subroutines applicable in an abstract state.
///
/// Agent moves target any region adjacent to the agent's region (rooms at
/// level 2, where rooms are adjacent when they share a door). Block moves
/// target regions adjacent to the block's region and require the agent to
/// be next to the block: in the block's region or an adjacent one at level
/// 1, in the same room at level 2.
pub fn abstract_actions(layout: &Layout, state: &LeveledState) -> Vec<Subtask> {
    let mut out = Vec::new();
    match state {
        LeveledState::L0(_) => {}
        LeveledState::L1(s) => {
            for g in layout.adjacent_regions(s.agent) {
                out.push(Subtask::MoveAgent(g));
            }
            for (i, &br) in s.blocks.iter().enumerate() {
                let near = layout.adjacent_regions(br);
                if s.agent != br && !near.contains(&s.agent) {
                    continue;
                }
                for g in near {
                    out.push(Subtask::MoveBlock(BlockIdx(i), g));
                }
            }
        }
        LeveledState::L2(s) => {
            for &r in layout.adjacent_rooms(s.agent) {
                out.push(Subtask::MoveAgent(Region::Room(r)));
            }
            for (i, &br) in s.blocks.iter().enumerate() {
                if br != s.agent {
                    continue;
                }
                for &r in layout.adjacent_rooms(br) {
                    out.push(Subtask::MoveBlock(BlockIdx(i), Region::Room(r)));
                }
            }
        }
    }
    out
}

fn distinct_colors(layout: &Layout) -> Vec<String> {
    let mut colors: Vec<String> = layout.rooms().iter().map(|r| r.color.clone()).collect();
    colors.sort();
    colors.dedup();
    colors
}

/// Every lifted reward function expressible at `level` in this environment,
/// sorted by its machine string.
pub fn enumerate_reward_space(env: &GridEnv, level: Level) -> Vec<LiftedRewardFunction> {
    let layout = env.layout();
    let colors = distinct_colors(layout);
    let blocks: Vec<ObjectToken> = (0..layout.blocks().len()).map(ObjectToken::Block).collect();
    let mut out = Vec::new();
    let room_constraints: Vec<Constraint> = colors.iter().cloned().map(Constraint::RoomColor).collect();
    match level {
        Level::L0 => {
            for p in [Predicate::GoNorth, Predicate::GoSouth, Predicate::GoEast, Predicate::GoWest] {
                out.push(LiftedRewardFunction::go(p));
            }
            for c in &room_constraints {
                out.push(LiftedRewardFunction::new(Level::L0, Predicate::AgentInRoom, ObjectToken::Agent, c.clone()));
                for &b in &blocks {
                    out.push(LiftedRewardFunction::new(Level::L0, Predicate::BlockInRoom, b, c.clone()));
                }
            }
        }
        Level::L1 | Level::L2 => {
            let mut constraints = room_constraints.clone();
            if level == Level::L1 {
                let mut door_pairs: Vec<Constraint> = layout
                    .doors()
                    .iter()
                    .map(|d| {
                        Constraint::door(&layout.rooms()[d.rooms[0].0].color, &layout.rooms()[d.rooms[1].0].color)
                    })
                    .collect();
                door_pairs.sort();
                door_pairs.dedup();
                constraints.extend(door_pairs);
            }
            for c in &constraints {
                out.push(LiftedRewardFunction::new(level, Predicate::AgentInRegion, ObjectToken::Agent, c.clone()));
                for &b in &blocks {
                    out.push(LiftedRewardFunction::new(level, Predicate::BlockInRegion, b, c.clone()));
                }
            }
        }
    }
    out.sort_by_key(|m| m.to_string());
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GridEnv {
        bundled(BundledEnv::Small)
    }

    fn open_env() -> GridEnv {
        // 5x5 single room, agent in the middle.
        let cells: Vec<Pos> = (0..5).flat_map(|y| (0..5).map(move |x| Pos::new(x, y))).collect();
        GridEnv::from_file(&EnvFile {
            width: 5,
            height: 5,
            walls: vec![],
            rooms: vec![RoomSpec { id: "room0".into(), color: "red".into(), cells }],
            doors: vec![],
            blocks: vec![BlockSpec { id: "block0".into(), color: "yellow".into(), pos: Pos::new(2, 3) }],
            agent: Pos::new(2, 2),
        })
        .unwrap()
    }

    #[test]
    fn step_moves_north_as_plus_y() {
        let env = open_env().with_state(L0State { agent: Pos::new(2, 2), blocks: vec![Pos::new(0, 0)] }).unwrap();
        assert_eq!(env.step(Dir::North).agent(), Pos::new(2, 3));
    }

    #[test]
    fn step_pushes_block() {
        let env = open_env();
        let next = env.step(Dir::North);
        assert_eq!(next.agent(), Pos::new(2, 3));
        assert_eq!(next.block_positions(), &[Pos::new(2, 4)]);
        // block against the edge: push blocked, state unchanged
        let stuck = next.step(Dir::North);
        assert_eq!(stuck.state(), next.state());
    }

    #[test]
    fn step_into_wall_is_noop() {
        let env = small();
        // agent at (2,1); wall row at y=4 except doors at x=1 and x=6
        let env = env.with_state(L0State { agent: Pos::new(2, 3), blocks: vec![Pos::new(6, 6)] }).unwrap();
        assert_eq!(env.step(Dir::North).state(), env.state());
        let edge = env.with_state(L0State { agent: Pos::new(0, 0), blocks: vec![Pos::new(6, 6)] }).unwrap();
        assert_eq!(edge.step(Dir::West).state(), edge.state());
    }

    #[test]
    fn project_levels() {
        let env = small();
        let l = env.layout();
        let green = l.room_by_id("room1").unwrap();
        let in_green = env.with_state(L0State { agent: Pos::new(1, 6), blocks: vec![Pos::new(6, 6)] }).unwrap();
        match in_green.project(Level::L2).unwrap() {
            LeveledState::L2(s) => assert_eq!(s.agent, green),
            other => panic!("{other:?}"),
        }
        // door0 sits at (1,4) between room0 and room1
        let in_door = env.with_state(L0State { agent: Pos::new(1, 4), blocks: vec![Pos::new(6, 6)] }).unwrap();
        match in_door.project(Level::L1).unwrap() {
            LeveledState::L1(s) => assert_eq!(l.region_id(s.agent), "door0"),
            other => panic!("{other:?}"),
        }
        let block_in_door = env.with_state(L0State { agent: Pos::new(0, 0), blocks: vec![Pos::new(1, 4)] }).unwrap();
        match block_in_door.project(Level::L2).unwrap() {
            LeveledState::L2(s) => assert_eq!(l.rooms()[s.blocks[0].0].id, "room0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn project_rejects_wall_positions() {
        let env = small();
        let bad = L0State { agent: Pos::new(0, 4), blocks: vec![Pos::new(6, 6)] };
        assert!(matches!(project_state(env.layout(), &bad, Level::L1), Err(WorldError::InvalidState(_))));
    }

    #[test]
    fn abstract_actions_respect_adjacency() {
        let env = small();
        let l = env.layout();
        let red = Region::Room(RoomIdx(0));
        let s = LeveledState::L1(L1State { agent: red, blocks: vec![Region::Room(RoomIdx(2))] });
        let acts = abstract_actions(l, &s);
        let targets: Vec<&str> = acts
            .iter()
            .filter_map(|a| match a {
                Subtask::MoveAgent(g) => Some(l.region_id(*g)),
                _ => None,
            })
            .collect();
        assert_eq!(targets, vec!["door0", "door1"]);
        assert!(!acts.contains(&Subtask::MoveAgent(Region::Room(RoomIdx(1)))));
        // block in blue, agent in red: not adjacent, no block moves
        assert!(acts.iter().all(|a| matches!(a, Subtask::MoveAgent(_))));

        let door0 = Region::Door(DoorIdx(0));
        let s = LeveledState::L1(L1State { agent: door0, blocks: vec![Region::Room(RoomIdx(2))] });
        let acts = abstract_actions(l, &s);
        assert!(acts.contains(&Subtask::MoveAgent(Region::Room(RoomIdx(0)))));
        assert!(acts.contains(&Subtask::MoveAgent(Region::Room(RoomIdx(1)))));

        let s = LeveledState::L2(L2State { agent: RoomIdx(0), blocks: vec![RoomIdx(0)] });
        let acts = abstract_actions(l, &s);
        assert!(acts.contains(&Subtask::MoveAgent(Region::Room(RoomIdx(1)))));
        assert!(acts.contains(&Subtask::MoveBlock(BlockIdx(0), Region::Room(RoomIdx(2)))));
    }

    #[test]
    fn reward_space_contents() {
        let env = bundled(BundledEnv::Regular);
        let l2: Vec<String> = enumerate_reward_space(&env, Level::L2).iter().map(|m| m.to_string()).collect();
        assert!(l2.contains(&"agentInRegion agent0 roomIsGreen".to_string()));
        assert_eq!(l2.len(), 6);
        let l0: Vec<String> = enumerate_reward_space(&env, Level::L0).iter().map(|m| m.to_string()).collect();
        for go in ["goNorth", "goSouth", "goEast", "goWest"] {
            assert!(l0.contains(&go.to_string()));
        }
        assert_eq!(l0.len(), 10);
        let l1 = enumerate_reward_space(&env, Level::L1);
        assert_eq!(l1.len(), 12);
        assert!(l1.iter().any(|m| m.to_string() == "agentInRegion agent0 doorGreenRed"));
    }

    #[test]
    fn reward_space_without_blocks() {
        let mut file = bundled(BundledEnv::Small).to_file();
        file.blocks.clear();
        let env = GridEnv::from_file(&file).unwrap();
        for level in Level::ALL {
            let space = enumerate_reward_space(&env, level);
            assert!(space.iter().all(|m| m.object != Some(ObjectToken::Block(0))));
            assert!(!space.iter().any(|m| m.to_string().starts_with("block")));
        }
    }

    #[test]
    fn invalid_envs_rejected() {
        let mut file = bundled(BundledEnv::Small).to_file();
        file.agent = file.blocks[0].pos;
        assert!(GridEnv::from_file(&file).is_err());

        let mut file = bundled(BundledEnv::Small).to_file();
        file.rooms[0].cells.pop();
        assert!(matches!(GridEnv::from_file(&file), Err(WorldError::InvalidEnv(_))));

        let mut file = bundled(BundledEnv::Small).to_file();
        let extra = file.rooms[1].cells[0];
        file.rooms[0].cells.push(extra);
        assert!(GridEnv::from_file(&file).is_err());
    }

    #[test]
    fn env_json_round_trip() {
        let env = bundled(BundledEnv::Regular);
        let back = GridEnv::from_json(&env.to_json()).unwrap();
        assert_eq!(back.to_file(), env.to_file());
    }

    #[test]
    fn bundled_state_space_scale() {
        let reg = bundled(BundledEnv::Regular).state_space_size() as f64;
        let large = bundled(BundledEnv::Large).state_space_size() as f64;
        assert!((reg.log2() - 14.0).abs() < 0.5, "regular {}", reg.log2());
        assert!((large.log2() - 18.0).abs() < 0.5, "large {}", large.log2());
    }
}
