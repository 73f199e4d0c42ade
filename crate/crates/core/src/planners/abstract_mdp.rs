use crate::world::{
    abstract_actions, eval_prop, Entity, L1State, L2State, Layout, Level, LeveledState, Prop, Region, Subtask,
};

use super::mdp::{ActionList, Mdp, Outcome};

/// Regions (dense index) one entity must stay within.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractFence {
    pub entity: Entity,
    pub allowed: Vec<bool>,
}

/// Level 1 or level 2 Cleanup MDP whose actions are subroutines.
///
/// Effects are the nominal ones: the mover lands in the target region, and a
/// pushed block leaves the agent in the block's previous region.
#[derive(Debug, Clone)]
pub struct AbstractMdp<'a> {
    layout: &'a Layout,
    level: Level,
    goal: Prop,
    fence: Option<AbstractFence>,
    gamma: f64,
}

impl<'a> AbstractMdp<'a> {
    pub fn new(layout: &'a Layout, goal: Prop, gamma: f64) -> Self {
        let level = goal.level();
        assert!(level != Level::L0, "abstract MDPs live at level 1 or 2");
        AbstractMdp { layout, level, goal, fence: None, gamma }
    }

    pub fn with_fence(mut self, fence: Option<AbstractFence>) -> Self {
        self.fence = fence;
        self
    }

    pub fn level(&self) -> Level {
        self.level
    }
}

fn entity_region(layout: &Layout, s: &LeveledState, e: Entity) -> Region {
    match (s, e) {
        (LeveledState::L1(s), Entity::Agent) => s.agent,
        (LeveledState::L1(s), Entity::Block(b)) => s.blocks[b.0],
        (LeveledState::L2(s), Entity::Agent) => Region::Room(s.agent),
        (LeveledState::L2(s), Entity::Block(b)) => Region::Room(s.blocks[b.0]),
        (LeveledState::L0(s), e) => {
            let p = match e {
                Entity::Agent => s.agent,
                Entity::Block(b) => s.blocks[b.0],
            };
            layout.region_at(p).expect("valid state")
        }
    }
}

impl Mdp for AbstractMdp<'_> {
    type State = LeveledState;
    type Action = Subtask;

    fn actions(&self, s: &LeveledState) -> ActionList<Subtask> {
        abstract_actions(self.layout, s).into_iter().collect()
    }

    fn step(&self, s: &LeveledState, a: Subtask) -> LeveledState {
        let room = |r: Region| self.layout.room_of_region(r);
        match (s, a) {
            (LeveledState::L1(s), Subtask::MoveAgent(g)) => LeveledState::L1(L1State { agent: g, ..s.clone() }),
            (LeveledState::L1(s), Subtask::MoveBlock(b, g)) => {
                let mut next = s.clone();
                next.agent = s.blocks[b.0];
                next.blocks[b.0] = g;
                LeveledState::L1(next)
            }
            (LeveledState::L2(s), Subtask::MoveAgent(g)) => {
                LeveledState::L2(L2State { agent: room(g), blocks: s.blocks.clone() })
            }
            (LeveledState::L2(s), Subtask::MoveBlock(b, g)) => {
                let mut next = s.clone();
                next.agent = s.blocks[b.0];
                next.blocks[b.0] = room(g);
                LeveledState::L2(next)
            }
            (s, _) => s.clone(),
        }
    }

    fn outcome(&self, s: &LeveledState) -> Outcome {
        if eval_prop(self.layout, &self.goal, s).unwrap_or(false) {
            return Outcome::Success;
        }
        if let Some(f) = &self.fence {
            let r = entity_region(self.layout, s, f.entity);
            if !f.allowed[self.layout.region_index(r)] {
                return Outcome::Failure;
            }
        }
        Outcome::Continue
    }

    fn discount(&self) -> f64 {
        self.gamma
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planners::vi::ValueIteration;
    use crate::world::{bundled, BlockIdx, BundledEnv, DoorIdx, RoomIdx};

    #[test]
    fn level1_routes_through_doors() {
        let env = bundled(BundledEnv::Small);
        let l = env.layout();
        let goal = Prop::AgentInRegion { region: Region::Room(RoomIdx(1)), level: Level::L1 };
        let mdp = AbstractMdp::new(l, goal, 0.99);
        let s0 = env.project(Level::L1).unwrap();
        let sol = ValueIteration::default().solve(&mdp, &s0).unwrap();
        // red -> door0 -> green: two subtasks
        assert!((sol.value(&s0).unwrap() - 0.99f64.powi(2)).abs() < 1e-12);
        assert_eq!(sol.policy.get(&s0), Some(&Subtask::MoveAgent(Region::Door(DoorIdx(0)))));
    }

    #[test]
    fn level2_block_needs_agent_in_its_room() {
        let env = bundled(BundledEnv::Small);
        let l = env.layout();
        // block starts in blue (room2), agent in red (room0)
        let goal = Prop::BlockInRegion { block: BlockIdx(0), region: Region::Room(RoomIdx(1)), level: Level::L2 };
        let mdp = AbstractMdp::new(l, goal, 0.99);
        let s0 = env.project(Level::L2).unwrap();
        let sol = ValueIteration::default().solve(&mdp, &s0).unwrap();
        assert_eq!(sol.policy.get(&s0), Some(&Subtask::MoveAgent(Region::Room(RoomIdx(2)))));
        assert!((sol.value(&s0).unwrap() - 0.99f64.powi(2)).abs() < 1e-12);
    }
}
