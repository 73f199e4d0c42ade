//! A live simulated robot: commands are grounded, planned and executed
//! against a persistent environment state.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::grounder::{Grounder, GrounderError, ScoredReward};
use crate::grounding::{bind, GroundingError};
use crate::planners::{execute_trace, plan, PlanError, PlannerConfig, PlannerKind};
use crate::world::{eval_prop, project_state, Dir, GridEnv};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Grounder(#[from] GrounderError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

impl SessionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::Grounder(GrounderError::EmptyCommand) => "EmptyCommand",
            SessionError::Grounder(_) => "ModelError",
            SessionError::Grounding(e) => e.code(),
            SessionError::Plan(PlanError::Unreachable(_)) => "Unreachable",
            SessionError::Plan(_) => "PlanFailed",
        }
    }

    /// Whether the command itself is at fault rather than the server.
    pub fn is_client_error(&self) -> bool {
        !matches!(self, SessionError::Grounder(e) if !matches!(e, GrounderError::EmptyCommand))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommandOutcome {
    pub command: String,
    pub level: u8,
    pub lifted: String,
    pub grounded: String,
    pub planner: PlannerKind,
    pub plan_steps: Vec<Dir>,
    /// Grounding plus planning wall time.
    pub planning_ms: f64,
    pub score_table_top5: Vec<ScoredReward>,
    pub low_confidence: bool,
    /// Whether the goal holds after executing the steps.
    pub satisfied: bool,
}

#[derive(Debug, Clone)]
pub struct Session {
    initial: GridEnv,
    env: GridEnv,
    log: Vec<CommandOutcome>,
}

impl Session {
    pub fn new(env: GridEnv) -> Self {
        Session { initial: env.clone(), env, log: Vec::new() }
    }

    pub fn env(&self) -> &GridEnv {
        &self.env
    }

    pub fn log(&self) -> &[CommandOutcome] {
        &self.log
    }

    pub fn reset(&mut self) {
        self.env = self.initial.clone();
    }

    /// Grounds `text`, plans it with `planner`, and advances the state by
    /// the planned steps. The state is untouched on error.
    pub fn command(
        &mut self,
        grounder: &Grounder,
        text: &str,
        planner: PlannerKind,
        cfg: &PlannerConfig,
    ) -> Result<CommandOutcome, SessionError> {
        let start = Instant::now();
        let inf = grounder.infer_text(text)?;
        let goal = bind(&inf.reward, &self.env)?;
        let trace = plan(planner, &self.env, &goal, cfg)?;
        let planning_ms = start.elapsed().as_secs_f64() * 1e3;
        let exec = execute_trace(&trace, &self.env)?;
        let layout = exec.env.layout();
        let satisfied = project_state(layout, exec.env.state(), goal.level())
            .and_then(|s| eval_prop(layout, &goal.prop, &s))
            .unwrap_or(false);
        let outcome = CommandOutcome {
            command: text.to_string(),
            level: inf.level.index() as u8,
            lifted: inf.reward.to_string(),
            grounded: goal.describe(layout),
            planner,
            plan_steps: exec.steps,
            planning_ms,
            score_table_top5: inf.top(grounder.space(), 5),
            low_confidence: inf.low_confidence(),
            satisfied,
        };
        self.env = exec.env;
        self.log.push(outcome.clone());
        Ok(outcome)
    }
}
