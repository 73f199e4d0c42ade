use std::collections::VecDeque;

use rustc_hash::FxHashMap;

use super::mdp::{Mdp, Outcome};
use super::{PlanError, Policy};

/// Synchronous value iteration over every state reachable from the starts.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueIteration {
    /// Stop once `max_s |V_{k+1}(s) - V_k(s)| < epsilon`.
    pub epsilon: f64,
    /// Refuse to enumerate more states than this.
    pub max_states: usize,
    pub max_iterations: usize,
}

impl Default for ValueIteration {
    fn default() -> Self {
        ValueIteration { epsilon: 1e-9, max_states: 2_000_000, max_iterations: 100_000 }
    }
}

#[derive(Debug, Clone)]
pub struct ViSolution<S, A> {
    pub values: FxHashMap<S, f64>,
    pub policy: Policy<S, A>,
    pub iterations: usize,
    pub residual: f64,
}

impl<S: std::hash::Hash + Eq, A> ViSolution<S, A> {
    pub fn value(&self, s: &S) -> Option<f64> {
        self.values.get(s).copied()
    }
}

struct Edge {
    action_rank: usize,
    next: usize,
    reward: f64,
}

impl ValueIteration {
    pub fn with_epsilon(epsilon: f64) -> Self {
        ValueIteration { epsilon, ..Default::default() }
    }

    pub fn solve<M: Mdp>(&self, mdp: &M, start: &M::State) -> Result<ViSolution<M::State, M::Action>, PlanError> {
        self.solve_from(mdp, std::iter::once(start.clone()))
    }

    pub fn solve_from<M: Mdp>(
        &self,
        mdp: &M,
        starts: impl IntoIterator<Item = M::State>,
    ) -> Result<ViSolution<M::State, M::Action>, PlanError> {
        assert!(self.epsilon > 0.0, "epsilon must be positive");
        let gamma = mdp.discount();

        // Enumerate reachable states breadth-first.
        let mut index: FxHashMap<M::State, usize> = FxHashMap::default();
        let mut states: Vec<M::State> = Vec::new();
        let mut queue = VecDeque::new();
        for s in starts {
            if !index.contains_key(&s) {
                index.insert(s.clone(), states.len());
                states.push(s.clone());
                queue.push_back(s);
            }
        }
        let mut outcomes = Vec::new();
        let mut edges: Vec<Vec<Edge>> = Vec::new();
        let mut actions = Vec::new();
        while let Some(s) = queue.pop_front() {
            let outcome = mdp.outcome(&s);
            outcomes.push(outcome);
            let mut out = Vec::new();
            let acts = if outcome.is_terminal() { Default::default() } else { mdp.actions(&s) };
            for (rank, &a) in acts.iter().enumerate() {
                let t = mdp.step(&s, a);
                let next = match index.get(&t) {
                    Some(&i) => i,
                    None => {
                        if states.len() >= self.max_states {
                            return Err(PlanError::CapacityExceeded { cap: self.max_states });
                        }
                        let i = states.len();
                        index.insert(t.clone(), i);
                        states.push(t.clone());
                        queue.push_back(t.clone());
                        i
                    }
                };
                out.push(Edge { action_rank: rank, next, reward: 0.0 });
            }
            edges.push(out);
            actions.push(acts);
        }
        // Rewards need every successor's outcome, known only now.
        for out in &mut edges {
            for e in out.iter_mut() {
                e.reward = outcomes[e.next].reward();
            }
        }

        let n = states.len();
        let mut v = vec![0.0f64; n];
        let mut next_v = vec![0.0f64; n];
        let mut iterations = 0;
        let mut residual = f64::INFINITY;
        while residual >= self.epsilon && iterations < self.max_iterations {
            residual = 0.0;
            for i in 0..n {
                let best = if outcomes[i].is_terminal() {
                    0.0
                } else {
                    edges[i].iter().map(|e| gamma * (e.reward + v[e.next])).fold(0.0, f64::max)
                };
                residual = residual.max((best - v[i]).abs());
                next_v[i] = best;
            }
            std::mem::swap(&mut v, &mut next_v);
            iterations += 1;
        }

        let mut policy = Policy::default();
        for i in 0..n {
            if outcomes[i] != Outcome::Continue {
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            for e in &edges[i] {
                let q = gamma * (e.reward + v[e.next]);
                // strict comparison keeps the lowest-index action on ties
                if best.is_none_or(|(bq, _)| q > bq) {
                    best = Some((q, e.action_rank));
                }
            }
            if let Some((_, rank)) = best {
                policy.insert(states[i].clone(), actions[i][rank]);
            }
        }
        let values = states.into_iter().zip(v).collect();
        Ok(ViSolution { values, policy, iterations, residual })
    }
}
