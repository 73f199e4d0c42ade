use rustc_hash::FxHashMap;

use super::mdp::Mdp;
use super::Policy;

/// Lower and upper bounds on the optimal value of every touched state.
#[derive(Debug, Clone)]
pub struct ValueBounds<S> {
    map: FxHashMap<S, (f64, f64)>,
}

impl<S> Default for ValueBounds<S> {
    fn default() -> Self {
        ValueBounds { map: FxHashMap::default() }
    }
}

impl<S: std::hash::Hash + Eq + Clone> ValueBounds<S> {
    pub fn get(&self, s: &S) -> Option<(f64, f64)> {
        self.map.get(s).copied()
    }

    pub fn lower(&self, s: &S) -> Option<f64> {
        self.get(s).map(|b| b.0)
    }

    pub fn upper(&self, s: &S) -> Option<f64> {
        self.get(s).map(|b| b.1)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, (f64, f64))> {
        self.map.iter().map(|(s, &b)| (s, b))
    }
}

/// Bounded real-time dynamic programming.
///
/// Bounds start at `lower = 0` and `upper = h(s)` (1 without a heuristic).
/// Each trial walks greedily on the upper bound from the start, stops when
/// the successor's bound gap falls below `gap(s0) / tau`, then backs up the
/// visited states in reverse. Planning ends when `gap(s0) < alpha`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Brtdp {
    pub alpha: f64,
    pub tau: f64,
    pub max_trials: usize,
    pub max_trial_len: usize,
}

impl Default for Brtdp {
    fn default() -> Self {
        Brtdp { alpha: 1e-3, tau: 10.0, max_trials: 1_000_000, max_trial_len: 20_000 }
    }
}

#[derive(Debug, Clone)]
pub struct BrtdpResult<S, A> {
    pub bounds: ValueBounds<S>,
    pub start: S,
    pub converged: bool,
    pub trials: usize,
    /// `(lower, upper)` at the start state after every trial, initial pair first.
    pub start_history: Vec<(f64, f64)>,
    pub(crate) greedy: Policy<S, A>,
}

impl<S: std::hash::Hash + Eq + Clone, A: Copy> BrtdpResult<S, A> {
    pub fn start_bounds(&self) -> (f64, f64) {
        self.bounds.get(&self.start).unwrap_or((0.0, 0.0))
    }

    /// Greedy policy with respect to the lower bound over every touched
    /// non-terminal state with a positive lower bound. Following it from the
    /// start reaches the goal.
    pub fn policy(&self) -> &Policy<S, A> {
        &self.greedy
    }
}

struct Search<'m, M: Mdp, H> {
    mdp: &'m M,
    heuristic: H,
    bounds: FxHashMap<M::State, (f64, f64)>,
}

impl<M: Mdp, H: Fn(&M::State) -> f64> Search<'_, M, H> {
    fn bounds_of(&mut self, s: &M::State) -> (f64, f64) {
        if let Some(&b) = self.bounds.get(s) {
            return b;
        }
        let b = if self.mdp.outcome(s).is_terminal() { (0.0, 0.0) } else { (0.0, (self.heuristic)(s).clamp(0.0, 1.0)) };
        self.bounds.insert(s.clone(), b);
        b
    }

    /// Bellman backup of both bounds; returns the upper-greedy successor.
    fn backup(&mut self, s: &M::State) -> Option<M::State> {
        let gamma = self.mdp.discount();
        let mut best_l = 0.0f64;
        let mut best_u: Option<(f64, M::State)> = None;
        for a in self.mdp.actions(s) {
            let t = self.mdp.step(s, a);
            let r = self.mdp.outcome(&t).reward();
            let (l, u) = self.bounds_of(&t);
            best_l = best_l.max(gamma * (r + l));
            let qu = gamma * (r + u);
            if best_u.as_ref().is_none_or(|(bu, _)| qu > *bu) {
                best_u = Some((qu, t));
            }
        }
        let (old_l, old_u) = self.bounds_of(s);
        let new_u = best_u.as_ref().map_or(0.0, |(u, _)| *u);
        self.bounds.insert(s.clone(), (old_l.max(best_l), old_u.min(new_u)));
        best_u.map(|(_, t)| t)
    }

    fn gap(&mut self, s: &M::State) -> f64 {
        let (l, u) = self.bounds_of(s);
        u - l
    }

    fn greedy_lower(&mut self, s: &M::State) -> Option<(M::Action, f64)> {
        let gamma = self.mdp.discount();
        let mut best: Option<(M::Action, f64)> = None;
        for a in self.mdp.actions(s) {
            let t = self.mdp.step(s, a);
            let r = self.mdp.outcome(&t).reward();
            let q = gamma * (r + self.bounds.get(&t).map_or(0.0, |b| b.0));
            if best.is_none_or(|(_, bq)| q > bq) {
                best = Some((a, q));
            }
        }
        best
    }
}

impl Brtdp {
    pub fn solve<M, H>(&self, mdp: &M, start: &M::State, heuristic: H) -> BrtdpResult<M::State, M::Action>
    where
        M: Mdp,
        H: Fn(&M::State) -> f64,
    {
        self.solve_observed(mdp, start, heuristic, |_, _| {})
    }

    /// As [`Brtdp::solve`], calling `observe(trial, bounds)` after every trial.
    pub fn solve_observed<M, H, O>(
        &self,
        mdp: &M,
        start: &M::State,
        heuristic: H,
        mut observe: O,
    ) -> BrtdpResult<M::State, M::Action>
    where
        M: Mdp,
        H: Fn(&M::State) -> f64,
        O: FnMut(usize, &ValueBounds<M::State>),
    {
        assert!(self.alpha > 0.0, "alpha must be positive");
        let mut search = Search { mdp, heuristic, bounds: FxHashMap::default() };
        let mut history = vec![search.bounds_of(start)];
        let mut trials = 0;
        let mut converged = false;
        let mut path = Vec::new();
        loop {
            if search.gap(start) < self.alpha {
                converged = true;
                break;
            }
            if trials >= self.max_trials {
                break;
            }
            path.clear();
            let mut s = start.clone();
            while !mdp.outcome(&s).is_terminal() && path.len() < self.max_trial_len {
                path.push(s.clone());
                let Some(next) = search.backup(&s) else { break };
                let threshold = search.gap(start) / self.tau;
                if search.gap(&next) < threshold {
                    break;
                }
                s = next;
            }
            for s in path.iter().rev() {
                search.backup(s);
            }
            trials += 1;
            history.push(search.bounds_of(start));
            let view = ValueBounds { map: std::mem::take(&mut search.bounds) };
            observe(trials, &view);
            search.bounds = view.map;
        }

        // Lower-greedy policy over touched states.
        let touched: Vec<M::State> = search.bounds.keys().cloned().collect();
        let mut greedy = Policy::default();
        for s in touched {
            if mdp.outcome(&s).is_terminal() || search.bounds[&s].0 <= 0.0 {
                continue;
            }
            if let Some((a, q)) = search.greedy_lower(&s) {
                if q > 0.0 {
                    greedy.insert(s, a);
                }
            }
        }
        BrtdpResult {
            bounds: ValueBounds { map: search.bounds },
            start: start.clone(),
            converged,
            trials,
            start_history: history,
            greedy,
        }
    }
}
