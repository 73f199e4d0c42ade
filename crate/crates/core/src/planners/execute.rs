use crate::world::{Dir, GridEnv, Layout};

use super::amdp::PlanTrace;
use super::mdp::{Mdp, Outcome, PackedState};
use super::{PlanError, Policy};

#[derive(Debug, Clone)]
pub struct Execution {
    pub env: GridEnv,
    pub steps: Vec<Dir>,
}

/// Ten steps per grid cell.
pub fn step_cap(layout: &Layout) -> usize {
    10 * layout.num_cells()
}

pub fn execute_trace(trace: &PlanTrace, env: &GridEnv) -> Result<Execution, PlanError> {
    let cap = step_cap(env.layout());
    let steps = trace.actions();
    if steps.len() > cap {
        return Err(PlanError::ExecutionDiverged { steps: cap });
    }
    let env = steps.iter().fold(env.clone(), |e, &d| e.step(d));
    Ok(Execution { env, steps })
}

/// Follows `policy` from the current state of `env` until `mdp` terminates.
pub fn execute_policy<M>(policy: &Policy<PackedState, Dir>, mdp: &M, env: &GridEnv) -> Result<Execution, PlanError>
where
    M: Mdp<State = PackedState, Action = Dir>,
{
    let layout = env.layout();
    let cap = step_cap(layout);
    let mut env = env.clone();
    let mut steps = Vec::new();
    loop {
        let s = PackedState::pack(layout, env.state());
        if mdp.outcome(&s) != Outcome::Continue {
            return Ok(Execution { env, steps });
        }
        if steps.len() >= cap {
            return Err(PlanError::ExecutionDiverged { steps: cap });
        }
        let &a = policy.get(&s).ok_or_else(|| PlanError::Unreachable(format!("policy undefined at {s:?}")))?;
        env = env.step(a);
        steps.push(a);
    }
}
