//! Flat and hierarchical planners over Cleanup World.

mod abstract_mdp;
mod amdp;
mod brtdp;
mod execute;
mod heuristic;
mod mdp;
mod vi;

use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::world::WorldError;

pub use abstract_mdp::{AbstractFence, AbstractMdp};
pub use amdp::{plan, PlanTrace, PlannerConfig, TraceSegment};
pub use brtdp::{Brtdp, BrtdpResult, ValueBounds};
pub use execute::{execute_policy, execute_trace, step_cap, Execution};
pub use heuristic::{manhattan_upper_bound, GoalSpec, ManhattanBound};
pub use mdp::{ActionList, Mdp, Outcome, PackedState, PrimitiveMdp, RegionFence};
pub use vi::{ValueIteration, ViSolution};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("state space exceeds the cap of {cap} states")]
    CapacityExceeded { cap: usize },
    #[error("heuristic unavailable for composite goals")]
    HeuristicUnavailable,
    #[error("goal unreachable: {0}")]
    Unreachable(String),
    #[error("execution did not terminate within {steps} steps")]
    ExecutionDiverged { steps: usize },
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Partial map from states to actions.
#[derive(Debug, Clone)]
pub struct Policy<S, A> {
    map: FxHashMap<S, A>,
}

impl<S, A> Default for Policy<S, A> {
    fn default() -> Self {
        Policy { map: FxHashMap::default() }
    }
}

impl<S: Hash + Eq, A> Policy<S, A> {
    pub fn insert(&mut self, s: S, a: A) {
        self.map.insert(s, a);
    }

    pub fn get(&self, s: &S) -> Option<&A> {
        self.map.get(s)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, &A)> {
        self.map.iter()
    }
}

/// `base` is flat BRTDP, `nh` the hierarchy without the heuristic, `amdp`
/// the hierarchy with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Base,
    Nh,
    Amdp,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::Base, PlannerKind::Nh, PlannerKind::Amdp];

    pub fn token(self) -> &'static str {
        match self {
            PlannerKind::Base => "base",
            PlannerKind::Nh => "nh",
            PlannerKind::Amdp => "amdp",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for PlannerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| format!("unknown planner '{s}' (expected base, nh or amdp)"))
    }
}
