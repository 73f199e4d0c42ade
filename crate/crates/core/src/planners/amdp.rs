use std::time::{Duration, Instant};

use crate::grounding::GroundedRewardFunction;
use crate::world::{
    project_state, Dir, Entity, GridEnv, L0State, Layout, Level, LeveledState, Prop, Region, Subtask,
};

use super::abstract_mdp::AbstractMdp;
use super::brtdp::Brtdp;
use super::execute::step_cap;
use super::heuristic::{manhattan_upper_bound, GoalSpec};
use super::mdp::{Mdp, Outcome, PackedState, PrimitiveMdp, RegionFence};
use super::vi::{ValueIteration, ViSolution};
use super::{PlanError, PlannerKind};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub gamma: f64,
    /// Used for every primitive-level leg.
    pub brtdp: Brtdp,
    /// Used for the abstract levels.
    pub vi: ValueIteration,
    /// Budget on abstract subtasks per plan.
    pub max_subtasks: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig { gamma: 0.99, brtdp: Brtdp::default(), vi: ValueIteration::default(), max_subtasks: 1000 }
    }
}

/// One primitive-level leg of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSegment {
    /// Level of the MDP that issued the leg (0 for flat plans).
    pub level: Level,
    /// Subtask chain from the top level down, `>`-separated.
    pub subtask: String,
    pub actions: Vec<Dir>,
    pub planning_time: Duration,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct PlanTrace {
    pub planner: PlannerKind,
    pub goal: String,
    pub start: L0State,
    pub final_state: L0State,
    pub segments: Vec<TraceSegment>,
    /// Wall clock for the whole plan, abstract levels included.
    pub planning_time: Duration,
}

impl PlanTrace {
    pub fn actions(&self) -> Vec<Dir> {
        self.segments.iter().flat_map(|s| s.actions.iter().copied()).collect()
    }

    pub fn num_steps(&self) -> usize {
        self.segments.iter().map(|s| s.actions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_steps() == 0
    }
}

/// Plans `goal` from the current state of `env`.
///
/// `base` runs BRTDP over primitive actions straight to the goal cells. The
/// hierarchical planners solve the goal's own level with value iteration,
/// then hand each chosen subtask one level down until primitive legs remain.
pub fn plan(
    kind: PlannerKind,
    env: &GridEnv,
    goal: &GroundedRewardFunction,
    cfg: &PlannerConfig,
) -> Result<PlanTrace, PlanError> {
    let t0 = Instant::now();
    let layout = env.layout();
    let mut planner = Planner {
        layout,
        cfg,
        heuristic: kind == PlannerKind::Amdp,
        state: PackedState::pack(layout, env.state()),
        segments: Vec::new(),
        subtasks: 0,
    };
    let label = goal.describe(layout);
    match kind {
        PlannerKind::Base => planner.leg(&goal.prop, &label, Level::L0, Vec::new())?,
        PlannerKind::Nh | PlannerKind::Amdp => planner.solve(&goal.prop, "")?,
    }
    Ok(PlanTrace {
        planner: kind,
        goal: label,
        start: env.state().clone(),
        final_state: planner.state.unpack(layout),
        segments: planner.segments,
        planning_time: t0.elapsed(),
    })
}

struct Planner<'a> {
    layout: &'a Layout,
    cfg: &'a PlannerConfig,
    heuristic: bool,
    state: PackedState,
    segments: Vec<TraceSegment>,
    subtasks: usize,
}

fn child_prop(a: Subtask, level: Level) -> Prop {
    match a {
        Subtask::MoveAgent(region) => Prop::AgentInRegion { region, level },
        Subtask::MoveBlock(block, region) => Prop::BlockInRegion { block, region, level },
    }
}

impl Planner<'_> {
    fn solve(&mut self, prop: &Prop, prefix: &str) -> Result<(), PlanError> {
        let level = prop.level();
        if level == Level::L0 {
            return self.leg(prop, &format!("{prefix}{prop:?}"), Level::L0, Vec::new());
        }
        let mdp = AbstractMdp::new(self.layout, *prop, self.cfg.gamma);
        let mut sol: Option<ViSolution<LeveledState, Subtask>> = None;
        loop {
            let s = project_state(self.layout, &self.state.unpack(self.layout), level)?;
            if mdp.outcome(&s) == Outcome::Success {
                return Ok(());
            }
            self.subtasks += 1;
            if self.subtasks > self.cfg.max_subtasks {
                return Err(PlanError::Unreachable(format!("subtask budget of {} exhausted", self.cfg.max_subtasks)));
            }
            // Reuse the level's solution unless execution left its state set.
            if sol.as_ref().is_none_or(|v| v.value(&s).is_none()) {
                sol = Some(self.cfg.vi.solve(&mdp, &s)?);
            }
            let sol = sol.as_ref().expect("solved above");
            let a = match (sol.value(&s), sol.policy.get(&s)) {
                (Some(v), Some(&a)) if v > 0.0 => a,
                _ => return Err(PlanError::Unreachable(format!("no {level} subtask sequence reaches {prop:?}"))),
            };
            let label = format!("{prefix}{}", a.describe(self.layout));
            let below = level.below().expect("abstract level");
            let child = child_prop(a, below.max(Level::L1));
            if level == Level::L1 {
                let fences = self.fences(a, &s);
                self.leg(&child, &label, level, fences)?;
            } else {
                self.solve(&child, &format!("{label} > "))?;
            }
        }
    }

    /// Keeps the moved entity (and for pushes, the agent) inside the regions
    /// the subtask is about.
    fn fences(&self, a: Subtask, s: &LeveledState) -> Vec<RegionFence> {
        let LeveledState::L1(s) = s else { return Vec::new() };
        let fence = |entity, regions: &[Region]| {
            let mut allowed = vec![false; self.layout.num_regions()];
            for &r in regions {
                allowed[self.layout.region_index(r)] = true;
            }
            RegionFence { entity, allowed }
        };
        match a {
            Subtask::MoveAgent(g) => vec![fence(Entity::Agent, &[s.agent, g])],
            Subtask::MoveBlock(b, g) => {
                let from = s.blocks[b.0];
                vec![fence(Entity::Block(b), &[from, g]), fence(Entity::Agent, &[s.agent, from, g])]
            }
        }
    }

    /// Primitive leg towards the cells satisfying `prop`. A fenced leg that
    /// cannot succeed is retried without fences.
    fn leg(&mut self, prop: &Prop, label: &str, level: Level, fences: Vec<RegionFence>) -> Result<(), PlanError> {
        let t0 = Instant::now();
        let mask = prop.goal_cells(self.layout)?;
        let mdp = PrimitiveMdp::new(self.layout, prop.entity(), mask, self.cfg.gamma).with_fences(fences);
        if mdp.outcome(&self.state) == Outcome::Success {
            return Ok(());
        }
        let (actions, end, converged) = match self.run_leg(&mdp) {
            Err(PlanError::Unreachable(_)) if mdp.has_fences() => self.run_leg(&mdp.without_fences())?,
            other => other?,
        };
        self.state = end;
        self.segments.push(TraceSegment {
            level,
            subtask: label.to_string(),
            actions,
            planning_time: t0.elapsed(),
            converged,
        });
        Ok(())
    }

    fn run_leg(&self, mdp: &PrimitiveMdp<'_>) -> Result<(Vec<Dir>, PackedState, bool), PlanError> {
        let unreachable = || PlanError::Unreachable(format!("no primitive path for {:?}", mdp.entity()));
        if mdp.goal_is_empty() {
            return Err(unreachable());
        }
        let brtdp: &Brtdp = &self.cfg.brtdp;
        let result = if self.heuristic {
            let goal = GoalSpec::from_mask(self.layout, mdp.entity(), mdp.goal());
            let h = manhattan_upper_bound(self.layout, &goal, self.cfg.gamma)?;
            brtdp.solve(mdp, &self.state, |s| h.packed(s))
        } else {
            brtdp.solve(mdp, &self.state, |_| 1.0)
        };
        if result.start_bounds().0 <= 0.0 {
            return Err(unreachable());
        }
        let cap = step_cap(self.layout);
        let mut s = self.state;
        let mut actions = Vec::new();
        while mdp.outcome(&s) == Outcome::Continue && actions.len() < cap {
            let Some(&a) = result.policy().get(&s) else { return Err(unreachable()) };
            actions.push(a);
            s = mdp.step(&s, a);
        }
        if mdp.outcome(&s) != Outcome::Success {
            return Err(unreachable());
        }
        Ok((actions, s, result.converged))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::{bind, parse_machine_string};
    use crate::world::{bundled, eval_prop, BundledEnv};

    fn grounded(env: &GridEnv, m: &str) -> GroundedRewardFunction {
        bind(&parse_machine_string(m).unwrap(), env).unwrap()
    }

    fn replay(env: &GridEnv, trace: &PlanTrace) -> GridEnv {
        trace.actions().into_iter().fold(env.clone(), |e, d| e.step(d))
    }

    #[test]
    fn satisfied_goal_gives_empty_trace() {
        let env = bundled(BundledEnv::Small);
        let g = grounded(&env, "agentInRegion agent0 roomIsRed");
        for kind in PlannerKind::ALL {
            let t = plan(kind, &env, &g, &PlannerConfig::default()).unwrap();
            assert!(t.is_empty(), "{kind}");
            assert!(t.segments.is_empty());
        }
    }

    #[test]
    fn green_room_at_level_two() {
        let env = bundled(BundledEnv::Regular);
        let g = grounded(&env, "agentInRegion agent0 roomIsGreen");
        assert_eq!(g.level(), Level::L2);
        for kind in PlannerKind::ALL {
            let t = plan(kind, &env, &g, &PlannerConfig::default()).unwrap();
            let end = replay(&env, &t);
            assert_eq!(end.state(), &t.final_state);
            let green = env.layout().rooms().iter().position(|r| r.color == "green").unwrap();
            let LeveledState::L2(s) = end.project(Level::L2).unwrap() else { unreachable!() };
            assert_eq!(s.agent.0, green, "{kind}");
        }
    }

    #[test]
    fn block_delivery_is_door_consistent() {
        let env = bundled(BundledEnv::Small);
        let layout = env.layout();
        let g = grounded(&env, "blockInRegion block0 roomIsGreen");
        let t = plan(PlannerKind::Amdp, &env, &g, &PlannerConfig::default()).unwrap();
        let mut e = env.clone();
        let mut prev = e.project(Level::L1).unwrap();
        for d in t.actions() {
            e = e.step(d);
            let next = e.project(Level::L1).unwrap();
            let (LeveledState::L1(a), LeveledState::L1(b)) = (&prev, &next) else { unreachable!() };
            for (x, y) in std::iter::once((a.agent, b.agent)).chain(a.blocks.iter().copied().zip(b.blocks.iter().copied())) {
                assert!(x == y || layout.adjacent_regions(x).contains(&y), "{x:?} -> {y:?}");
                assert!(!matches!((x, y), (Region::Room(p), Region::Room(q)) if p != q));
            }
            prev = next;
        }
        assert!(eval_prop(layout, &g.prop, &e.project(Level::L2).unwrap()).unwrap());
        assert!(t.segments.iter().all(|s| s.level == Level::L1));
    }
}
