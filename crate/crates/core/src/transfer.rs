//! Zero-shot transfer of a world value function to a new task that shares
//! the background MDP, given only the new task's terminal rewards.

use crate::mdp::{ActionId, DeterministicMdp, StateId, TaskSpec};
use crate::scalar::{argmax, Scalar};
use crate::wvf::Wvf;

/// Full reward received on each terminal transition of a task (background
/// plus task-specific component). Non-terminal entries are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct TerminalRewards<T> {
    num_actions: usize,
    rewards: Vec<Option<T>>,
}

impl<T: Scalar> TerminalRewards<T> {
    pub fn from_task(mdp: &DeterministicMdp<T>, task: &TaskSpec<T>) -> Self {
        let rewards = mdp
            .states()
            .flat_map(|s| mdp.actions().map(move |a| (s, a)))
            .map(|(s, a)| mdp.is_terminal_transition(s, a).then(|| task.reward(s, a)))
            .collect();
        Self {
            num_actions: mdp.num_actions(),
            rewards,
        }
    }

    /// Builds the table from explicit `(g, a, reward)` entries.
    pub fn from_entries(num_states: usize, num_actions: usize, entries: impl IntoIterator<Item = (StateId, ActionId, T)>) -> Self {
        let mut rewards = vec![None; num_states * num_actions];
        for (g, a, r) in entries {
            rewards[g.0 * num_actions + a.0] = Some(r);
        }
        Self { num_actions, rewards }
    }

    pub fn get(&self, g: StateId, a: ActionId) -> Option<T> {
        self.rewards[g.0 * self.num_actions + a.0]
    }

    /// `max_a RT(g, a)` over the terminal actions available at `g`.
    pub fn max_at(&self, g: StateId) -> Option<T> {
        self.rewards[g.0 * self.num_actions..(g.0 + 1) * self.num_actions]
            .iter()
            .flatten()
            .copied()
            .reduce(T::max)
    }
}

/// Estimated `V_M(s, g)` for a target task, over the goals it is defined on.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatedWvfValues<T> {
    num_states: usize,
    goals: Vec<StateId>,
    values: Vec<Option<T>>,
}

impl<T: Scalar> EstimatedWvfValues<T> {
    pub fn goals(&self) -> &[StateId] {
        &self.goals
    }

    pub fn get(&self, s: StateId, g: StateId) -> Option<T> {
        self.values[s.0 * self.num_states + g.0]
    }

    /// Goal maximising the estimate at `s` (lowest id on ties) and its value.
    pub fn best_goal(&self, s: StateId) -> Option<(StateId, T)> {
        let mut best: Option<(StateId, T)> = None;
        let mut candidates: Vec<_> = self.goals.iter().filter_map(|&g| self.get(s, g).map(|v| (g, v))).collect();
        candidates.sort_by_key(|&(g, _)| g);
        for (g, v) in candidates {
            match best {
                Some((_, b)) if v <= b => {}
                _ => best = Some((g, v)),
            }
        }
        best
    }

    /// `V_M(s) = max_g V_M(s, g)`.
    pub fn task_value(&self, s: StateId) -> Option<T> {
        self.best_goal(s).map(|(_, v)| v)
    }
}

/// Estimates the target task's world values from a source WVF:
///
/// `V(s, g) = max_a Q(s, g, a) + (max_a RT_M(g, a) - max_a Q(g, g, a))`
///
/// for every goal in the source buffer that has a terminal reward in the
/// target task.
pub fn transfer_wvf<T: Scalar>(source: &Wvf<T>, target: &TerminalRewards<T>) -> EstimatedWvfValues<T> {
    let n = source.num_states();
    let mut values = vec![None; n * n];
    let mut goals = Vec::new();
    for g in source.goals().iter() {
        let Some(target_reward) = target.max_at(g) else {
            continue;
        };
        goals.push(g);
        let correction = target_reward - source.value(g, g);
        for s in 0..n {
            values[s * n + g.0] = Some(source.value(StateId(s), g) + correction);
        }
    }
    EstimatedWvfValues {
        num_states: n,
        goals,
        values,
    }
}

/// Transferred task policy: head for the goal with the highest estimated
/// value, using the source world policy for that goal.
pub fn transfer_policy<T: Scalar>(source: &Wvf<T>, est: &EstimatedWvfValues<T>, s: StateId) -> ActionId {
    match est.best_goal(s) {
        Some((g, _)) => ActionId(argmax(source.action_values(s, g).iter().copied()).map_or(0, |(a, _)| a)),
        None => ActionId(0),
    }
}
