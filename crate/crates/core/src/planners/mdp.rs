use std::fmt::Debug;
use std::hash::Hash;

use smallvec::SmallVec;

use crate::world::{Dir, Entity, L0State, Layout, Pos, MAX_BLOCKS};

/// Whether a state ends the episode, and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Continue,
    /// Goal reached. Entering such a state earns reward 1.
    Success,
    /// Left the subtask's allowed regions. Entering earns nothing.
    Failure,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Continue
    }

    pub fn reward(self) -> f64 {
        if self == Outcome::Success {
            1.0
        } else {
            0.0
        }
    }
}

pub type ActionList<A> = SmallVec<[A; 8]>;

/// Deterministic goal-reward MDP.
///
/// Values follow `V(s) = max_a γ·(r(s') + V(s'))` with `V = 0` at terminal
/// states, so a state `d` steps from the goal is worth `γ^d`.
pub trait Mdp {
    type State: Clone + Eq + Hash + Debug;
    type Action: Copy + Eq + Debug;

    /// Applicable actions in a fixed order; greedy ties go to the first.
    fn actions(&self, s: &Self::State) -> ActionList<Self::Action>;
    fn step(&self, s: &Self::State, a: Self::Action) -> Self::State;
    fn outcome(&self, s: &Self::State) -> Outcome;
    fn discount(&self) -> f64;
}

/// Agent and block cells packed 16 bits apiece: agent in the low bits,
/// block `i` at bit `16·(i+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PackedState(pub u64);

impl PackedState {
    pub fn from_cells(agent: u16, blocks: &[u16]) -> Self {
        debug_assert!(blocks.len() <= MAX_BLOCKS);
        let mut v = agent as u64;
        for (i, &b) in blocks.iter().enumerate() {
            v |= (b as u64) << (16 * (i + 1));
        }
        PackedState(v)
    }

    pub fn pack(layout: &Layout, s: &L0State) -> Self {
        let cell = |p: Pos| layout.cell_index(p).expect("position in bounds") as u16;
        let blocks: SmallVec<[u16; MAX_BLOCKS]> = s.blocks.iter().map(|&p| cell(p)).collect();
        Self::from_cells(cell(s.agent), &blocks)
    }

    pub fn unpack(self, layout: &Layout) -> L0State {
        L0State {
            agent: layout.cell_pos(self.agent() as usize),
            blocks: (0..layout.blocks().len()).map(|i| layout.cell_pos(self.block(i) as usize)).collect(),
        }
    }

    pub fn agent(self) -> u16 {
        self.0 as u16
    }

    pub fn block(self, i: usize) -> u16 {
        (self.0 >> (16 * (i + 1))) as u16
    }

    pub fn entity_cell(self, e: Entity) -> u16 {
        match e {
            Entity::Agent => self.agent(),
            Entity::Block(b) => self.block(b.0),
        }
    }

    pub fn blocks(self, n: usize) -> SmallVec<[u16; MAX_BLOCKS]> {
        (0..n).map(|i| self.block(i)).collect()
    }

    /// Successor under one primitive move, `self` when blocked.
    pub fn step(self, layout: &Layout, dir: Dir) -> PackedState {
        let mut blocks = self.blocks(layout.blocks().len());
        match layout.step_cells(self.agent(), &mut blocks, dir) {
            Some(agent) => PackedState::from_cells(agent, &blocks),
            None => self,
        }
    }
}

/// Which regions (by dense region index) an entity may occupy while a
/// primitive subtask runs. Leaving them ends the subtask as a failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionFence {
    pub entity: Entity,
    pub allowed: Vec<bool>,
}

/// Primitive-level task: move one entity onto a set of goal cells.
#[derive(Debug, Clone)]
pub struct PrimitiveMdp<'a> {
    layout: &'a Layout,
    entity: Entity,
    goal: Vec<bool>,
    fences: Vec<RegionFence>,
    gamma: f64,
}

impl<'a> PrimitiveMdp<'a> {
    pub fn new(layout: &'a Layout, entity: Entity, goal: Vec<bool>, gamma: f64) -> Self {
        assert_eq!(goal.len(), layout.num_cells(), "goal mask covers every cell");
        PrimitiveMdp { layout, entity, goal, fences: Vec::new(), gamma }
    }

    pub fn with_fences(mut self, fences: Vec<RegionFence>) -> Self {
        self.fences = fences;
        self
    }

    pub fn without_fences(&self) -> Self {
        PrimitiveMdp { fences: Vec::new(), ..self.clone() }
    }

    pub fn layout(&self) -> &'a Layout {
        self.layout
    }

    pub fn entity(&self) -> Entity {
        self.entity
    }

    pub fn goal(&self) -> &[bool] {
        &self.goal
    }

    pub fn has_fences(&self) -> bool {
        !self.fences.is_empty()
    }

    pub fn goal_is_empty(&self) -> bool {
        !self.goal.iter().any(|&g| g)
    }
}

impl Mdp for PrimitiveMdp<'_> {
    type State = PackedState;
    type Action = Dir;

    fn actions(&self, _s: &PackedState) -> ActionList<Dir> {
        ActionList::from_slice(&Dir::ALL)
    }

    fn step(&self, s: &PackedState, a: Dir) -> PackedState {
        s.step(self.layout, a)
    }

    fn outcome(&self, s: &PackedState) -> Outcome {
        if self.goal[s.entity_cell(self.entity) as usize] {
            return Outcome::Success;
        }
        for f in &self.fences {
            let cell = s.entity_cell(f.entity) as usize;
            let region = self.layout.region_at_index(cell).expect("entities stand on free cells");
            if !f.allowed[self.layout.region_index(region)] {
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
    use crate::world::{bundled, BundledEnv};

    #[test]
    fn pack_round_trip_and_step_agree() {
        let env = bundled(BundledEnv::Regular);
        let l = env.layout();
        let p = PackedState::pack(l, env.state());
        assert_eq!(p.unpack(l), *env.state());
        let mut e = env.clone();
        let mut s = p;
        for d in [Dir::North, Dir::East, Dir::East, Dir::North, Dir::West, Dir::South] {
            e = e.step(d);
            s = s.step(l, d);
            assert_eq!(s.unpack(l), *e.state());
        }
    }
}
