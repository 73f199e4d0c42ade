use super::{BlockIdx, Dir, Layout, Level, LeveledState, Pos, Region, RoomIdx, WorldError};

/// The entity a proposition talks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Entity {
    Agent,
    Block(BlockIdx),
}

/// Propositional function over object instances of one environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prop {
    /// Level 0: the agent stands on the cell one `dir` step from `from`,
    /// where `from` is the agent's cell when the task started.
    Go { dir: Dir, from: Pos },
    AgentInRoom { room: RoomIdx },
    BlockInRoom { block: BlockIdx, room: RoomIdx },
    /// Level 1 (room or door) or level 2 (room).
    AgentInRegion { region: Region, level: Level },
    BlockInRegion { block: BlockIdx, region: Region, level: Level },
}

impl Prop {
    pub fn level(&self) -> Level {
        match *self {
            Prop::Go { .. } | Prop::AgentInRoom { .. } | Prop::BlockInRoom { .. } => Level::L0,
            Prop::AgentInRegion { level, .. } | Prop::BlockInRegion { level, .. } => level,
        }
    }

    pub fn entity(&self) -> Entity {
        match *self {
            Prop::Go { .. } | Prop::AgentInRoom { .. } | Prop::AgentInRegion { .. } => Entity::Agent,
            Prop::BlockInRoom { block, .. } | Prop::BlockInRegion { block, .. } => Entity::Block(block),
        }
    }

    fn check_ids(&self, layout: &Layout) -> Result<(), WorldError> {
        let room_ok = |r: RoomIdx| r.0 < layout.rooms().len();
        let region_ok = |g: Region| match g {
            Region::Room(r) => room_ok(r),
            Region::Door(d) => d.0 < layout.doors().len(),
        };
        let block_ok = |b: BlockIdx| b.0 < layout.blocks().len();
        let ok = match *self {
            Prop::Go { .. } => true,
            Prop::AgentInRoom { room } => room_ok(room),
            Prop::BlockInRoom { block, room } => block_ok(block) && room_ok(room),
            Prop::AgentInRegion { region, level } => region_ok(region) && level_region_ok(level, region),
            Prop::BlockInRegion { block, region, level } => {
                block_ok(block) && region_ok(region) && level_region_ok(level, region)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(WorldError::UnknownObject(format!("{self:?}")))
        }
    }

    /// Cells that satisfy the proposition for its entity, as a mask over
    /// cell indices.
    pub fn goal_cells(&self, layout: &Layout) -> Result<Vec<bool>, WorldError> {
        self.check_ids(layout)?;
        let mut mask = vec![false; layout.num_cells()];
        let mut set = |cells: &[Pos]| {
            for &c in cells {
                if let Some(i) = layout.cell_index(c) {
                    mask[i] = true;
                }
            }
        };
        match *self {
            Prop::Go { dir, from } => {
                let target = from.offset(dir);
                if layout.is_free(target) {
                    set(&[target]);
                }
            }
            Prop::AgentInRoom { room } | Prop::BlockInRoom { room, .. } => set(layout.region_cells(Region::Room(room))),
            Prop::AgentInRegion { region, level: Level::L1 } | Prop::BlockInRegion { region, level: Level::L1, .. } => {
                set(layout.region_cells(region))
            }
            Prop::AgentInRegion { region, .. } | Prop::BlockInRegion { region, .. } => {
                let room = layout.room_of_region(region);
                for g in layout.regions() {
                    if layout.room_of_region(g) == room {
                        set(layout.region_cells(g));
                    }
                }
            }
        }
        Ok(mask)
    }
}

fn level_region_ok(level: Level, region: Region) -> bool {
    match level {
        Level::L0 => false,
        Level::L1 => true,
        Level::L2 => matches!(region, Region::Room(_)),
    }
}

/// Truth of `prop` on a state of the proposition's own level.
pub fn eval_prop(layout: &Layout, prop: &Prop, state: &LeveledState) -> Result<bool, WorldError> {
    if prop.level() != state.level() {
        return Err(WorldError::LevelMismatch { prop: prop.level(), state: state.level() });
    }
    prop.check_ids(layout)?;
    let block_of = |n: usize, b: BlockIdx| {
        if b.0 < n {
            Ok(b.0)
        } else {
            Err(WorldError::UnknownObject(format!("block index {}", b.0)))
        }
    };
    Ok(match (prop, state) {
        (Prop::Go { dir, from }, LeveledState::L0(s)) => s.agent == from.offset(*dir),
        (Prop::AgentInRoom { room }, LeveledState::L0(s)) => layout.region_at(s.agent) == Some(Region::Room(*room)),
        (Prop::BlockInRoom { block, room }, LeveledState::L0(s)) => {
            let i = block_of(s.blocks.len(), *block)?;
            layout.region_at(s.blocks[i]) == Some(Region::Room(*room))
        }
        (Prop::AgentInRegion { region, .. }, LeveledState::L1(s)) => s.agent == *region,
        (Prop::BlockInRegion { block, region, .. }, LeveledState::L1(s)) => {
            s.blocks[block_of(s.blocks.len(), *block)?] == *region
        }
        (Prop::AgentInRegion { region, .. }, LeveledState::L2(s)) => Region::Room(s.agent) == *region,
        (Prop::BlockInRegion { block, region, .. }, LeveledState::L2(s)) => {
            Region::Room(s.blocks[block_of(s.blocks.len(), *block)?]) == *region
        }
        _ => unreachable!("levels checked above"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{bundled, BundledEnv, L0State};

    #[test]
    fn block_in_room() {
        let env = bundled(BundledEnv::Small);
        // block0 starts in room2 (blue)
        let p = Prop::BlockInRoom { block: BlockIdx(0), room: RoomIdx(2) };
        assert!(eval_prop(env.layout(), &p, &env.project(Level::L0).unwrap()).unwrap());
        let p = Prop::BlockInRoom { block: BlockIdx(0), room: RoomIdx(1) };
        assert!(!eval_prop(env.layout(), &p, &env.project(Level::L0).unwrap()).unwrap());
    }

    #[test]
    fn agent_in_region_elsewhere_is_false() {
        let env = bundled(BundledEnv::Small);
        let p = Prop::AgentInRegion { region: Region::Room(RoomIdx(1)), level: Level::L2 };
        assert!(!eval_prop(env.layout(), &p, &env.project(Level::L2).unwrap()).unwrap());
    }

    #[test]
    fn go_west_after_one_step() {
        let env = bundled(BundledEnv::Small);
        let p = Prop::Go { dir: Dir::West, from: env.agent() };
        assert!(!eval_prop(env.layout(), &p, &env.project(Level::L0).unwrap()).unwrap());
        let moved = env.step(Dir::West);
        assert!(eval_prop(env.layout(), &p, &moved.project(Level::L0).unwrap()).unwrap());
    }

    #[test]
    fn unknown_object_and_level_mismatch() {
        let env = bundled(BundledEnv::Small);
        let p = Prop::BlockInRoom { block: BlockIdx(4), room: RoomIdx(0) };
        assert!(matches!(
            eval_prop(env.layout(), &p, &env.project(Level::L0).unwrap()),
            Err(WorldError::UnknownObject(_))
        ));
        let p = Prop::AgentInRoom { room: RoomIdx(0) };
        assert!(matches!(
            eval_prop(env.layout(), &p, &env.project(Level::L1).unwrap()),
            Err(WorldError::LevelMismatch { .. })
        ));
    }

    #[test]
    fn level2_goal_cells_include_collapsed_doors() {
        let env = bundled(BundledEnv::Small);
        let l = env.layout();
        // door0 and door1 both border room0 (lowest id), so they count as room0 at level 2
        let mask = Prop::AgentInRegion { region: Region::Room(RoomIdx(0)), level: Level::L2 }.goal_cells(l).unwrap();
        assert!(mask[l.cell_index(Pos::new(1, 4)).unwrap()]);
        let mask = Prop::AgentInRegion { region: Region::Room(RoomIdx(0)), level: Level::L1 }.goal_cells(l).unwrap();
        assert!(!mask[l.cell_index(Pos::new(1, 4)).unwrap()]);
        let s = L0State { agent: Pos::new(1, 4), blocks: vec![Pos::new(6, 6)] };
        let p = Prop::AgentInRegion { region: Region::Room(RoomIdx(0)), level: Level::L2 };
        let st = crate::world::project_state(l, &s, Level::L2).unwrap();
        assert!(eval_prop(l, &p, &st).unwrap());
    }
}
