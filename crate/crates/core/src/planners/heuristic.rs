use crate::world::{Entity, L0State, Layout, Pos};

use super::mdp::PackedState;
use super::PlanError;

/// Goal handed to the distance heuristic.
#[derive(Debug, Clone, PartialEq)]
pub enum GoalSpec {
    /// Move one entity onto any of the cells.
    Reach { entity: Entity, cells: Vec<Pos> },
    /// Several conditions that must hold together.
    All(Vec<GoalSpec>),
}

impl GoalSpec {
    pub fn from_mask(layout: &Layout, entity: Entity, mask: &[bool]) -> GoalSpec {
        let cells = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| layout.cell_pos(i)).collect();
        GoalSpec::Reach { entity, cells }
    }
}

/// `h(s) = γ^d`, `d` the Manhattan distance from the moved entity to the
/// nearest goal cell. Every move shifts an entity by one cell, so no state
/// can reach the goal in fewer than `d` steps and `h` bounds `V*` from above.
#[derive(Debug, Clone)]
pub struct ManhattanBound {
    entity: Entity,
    /// Per cell index; 0 where no goal cell exists.
    bound: Vec<f64>,
}

impl ManhattanBound {
    pub fn value(&self, layout: &Layout, s: &L0State) -> f64 {
        let p = match self.entity {
            Entity::Agent => s.agent,
            Entity::Block(b) => s.blocks[b.0],
        };
        layout.cell_index(p).map_or(0.0, |i| self.bound[i])
    }

    pub fn packed(&self, s: &PackedState) -> f64 {
        self.bound[s.entity_cell(self.entity) as usize]
    }
}

pub fn manhattan_upper_bound(layout: &Layout, goal: &GoalSpec, gamma: f64) -> Result<ManhattanBound, PlanError> {
    let GoalSpec::Reach { entity, cells } = goal else {
        return Err(PlanError::HeuristicUnavailable);
    };
    let bound = (0..layout.num_cells())
        .map(|i| {
            let p = layout.cell_pos(i);
            cells.iter().map(|&c| p.manhattan(c)).min().map_or(0.0, |d| gamma.powi(d as i32))
        })
        .collect();
    Ok(ManhattanBound { entity: *entity, bound })
}
