//! Deterministic episodic MDPs and the background-reward / terminal-reward
//! task decomposition.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, WvfError};
use crate::scalar::Scalar;

/// Dense state index in `[0, num_states)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

/// Dense action index in `[0, num_actions)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A deterministic episodic MDP.
///
/// Every `(s, a)` has exactly one successor. A terminal transition enters the
/// absorbing state; its recorded successor is kept for bookkeeping only and
/// must still lie in the neighborhood of `s`.
#[derive(Clone, Debug)]
pub struct DeterministicMdp<T> {
    num_states: usize,
    num_actions: usize,
    successors: Vec<StateId>,
    terminal: Vec<bool>,
    reward_bounds: (T, T),
    neighborhoods: Vec<Vec<StateId>>,
}

impl<T: Scalar> DeterministicMdp<T> {
    /// `successors` and `terminal` are indexed `s * num_actions + a`.
    /// Each neighborhood is sorted on construction and must contain `s`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        successors: Vec<StateId>,
        terminal: Vec<bool>,
        reward_bounds: (T, T),
        mut neighborhoods: Vec<Vec<StateId>>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(invalid("an MDP needs at least one state and one action"));
        }
        let n = num_states * num_actions;
        if successors.len() != n || terminal.len() != n {
            return Err(invalid(format!(
                "transition tables must have {n} entries (got {} successors, {} terminal flags)",
                successors.len(),
                terminal.len()
            )));
        }
        if neighborhoods.len() != num_states {
            return Err(invalid("one neighborhood per state is required"));
        }
        if !(reward_bounds.0 <= reward_bounds.1) {
            return Err(invalid("reward bounds must satisfy R_MIN <= R_MAX"));
        }
        for (s, hood) in neighborhoods.iter_mut().enumerate() {
            hood.sort_unstable();
            hood.dedup();
            if hood.iter().any(|n| n.0 >= num_states) {
                return Err(invalid(format!("neighborhood of state {s} names an unknown state")));
            }
            if hood.binary_search(&StateId(s)).is_err() {
                return Err(invalid(format!("neighborhood of state {s} must contain the state itself")));
            }
        }
        for (i, next) in successors.iter().enumerate() {
            let s = i / num_actions;
            if next.0 >= num_states {
                return Err(WvfError::UnknownState(next.0));
            }
            if neighborhoods[s].binary_search(next).is_err() {
                return Err(invalid(format!(
                    "successor {} of ({s}, {}) lies outside the neighborhood",
                    next.0,
                    i % num_actions
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            successors,
            terminal,
            reward_bounds,
            neighborhoods,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.num_states).map(StateId)
    }

    pub fn actions(&self) -> impl Iterator<Item = ActionId> {
        (0..self.num_actions).map(ActionId)
    }

    /// `(R_MIN, R_MAX)` declared for every task over this MDP.
    pub fn reward_bounds(&self) -> (T, T) {
        self.reward_bounds
    }

    pub fn check_state(&self, s: StateId) -> Result<()> {
        if s.0 < self.num_states {
            Ok(())
        } else {
            Err(WvfError::UnknownState(s.0))
        }
    }

    pub fn check_action(&self, a: ActionId) -> Result<()> {
        if a.0 < self.num_actions {
            Ok(())
        } else {
            Err(WvfError::UnknownAction(a.0))
        }
    }

    #[inline]
    pub fn successor(&self, s: StateId, a: ActionId) -> StateId {
        self.successors[s.0 * self.num_actions + a.0]
    }

    #[inline]
    pub fn is_terminal_transition(&self, s: StateId, a: ActionId) -> bool {
        self.terminal[s.0 * self.num_actions + a.0]
    }

    /// States with at least one terminal transition: the goal space reachable
    /// by an agent that explores every action.
    pub fn terminal_states(&self) -> Vec<StateId> {
        self.states()
            .filter(|&s| self.actions().any(|a| self.is_terminal_transition(s, a)))
            .collect()
    }

    /// Candidate successors of `s`, sorted, including `s`.
    pub fn neighborhood(&self, s: StateId) -> &[StateId] {
        &self.neighborhoods[s.0]
    }

    /// States within `radius` hops of `s` in the neighborhood graph, sorted.
    /// Radius 0 is `{s}`; radius 1 is [`neighborhood`](Self::neighborhood).
    pub fn neighborhood_within(&self, s: StateId, radius: usize) -> Vec<StateId> {
        if radius == 1 {
            return self.neighborhoods[s.0].clone();
        }
        let mut depth = vec![usize::MAX; self.num_states];
        let mut queue = VecDeque::from([s]);
        depth[s.0] = 0;
        let mut out = vec![s];
        while let Some(u) = queue.pop_front() {
            if depth[u.0] == radius {
                continue;
            }
            for &v in &self.neighborhoods[u.0] {
                if depth[v.0] == usize::MAX {
                    depth[v.0] = depth[u.0] + 1;
                    out.push(v);
                    queue.push_back(v);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// A task over a background MDP: background reward `R0(s, a, s')` plus a
/// task-specific reward that is only defined on terminal transitions.
///
/// Because dynamics are deterministic, both tables are indexed by `(s, a)`.
#[derive(Clone, Debug)]
pub struct TaskSpec<T> {
    name: String,
    num_states: usize,
    num_actions: usize,
    background: Vec<T>,
    terminal: Vec<Option<T>>,
}

impl<T: Scalar> TaskSpec<T> {
    /// Validates that terminal rewards appear exactly on terminal transitions
    /// and that every composed reward lies within the MDP's reward bounds.
    pub fn new(
        mdp: &DeterministicMdp<T>,
        name: impl Into<String>,
        background: Vec<T>,
        terminal: Vec<Option<T>>,
    ) -> Result<Self> {
        let n = mdp.num_states() * mdp.num_actions();
        if background.len() != n || terminal.len() != n {
            return Err(invalid(format!("task reward tables must have {n} entries")));
        }
        let (lo, hi) = mdp.reward_bounds();
        for s in mdp.states() {
            for a in mdp.actions() {
                let i = s.0 * mdp.num_actions() + a.0;
                let is_terminal = mdp.is_terminal_transition(s, a);
                if terminal[i].is_some() != is_terminal {
                    return Err(invalid(format!(
                        "terminal reward at ({}, {}) must be present iff the transition is terminal",
                        s.0, a.0
                    )));
                }
                let r = background[i] + terminal[i].unwrap_or_else(T::zero);
                if !(lo <= r && r <= hi) {
                    return Err(invalid(format!(
                        "reward {r} at ({}, {}) is outside [{lo}, {hi}]",
                        s.0, a.0
                    )));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            background,
            terminal,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn background_reward(&self, s: StateId, a: ActionId) -> T {
        self.background[s.0 * self.num_actions + a.0]
    }

    /// Task-specific reward; `None` off terminal transitions.
    pub fn terminal_reward(&self, s: StateId, a: ActionId) -> Option<T> {
        self.terminal[s.0 * self.num_actions + a.0]
    }

    /// Unchecked composed reward `R0(s, a) + RT(s, a)`.
    #[inline]
    pub fn reward(&self, s: StateId, a: ActionId) -> T {
        let i = s.0 * self.num_actions + a.0;
        self.background[i] + self.terminal[i].unwrap_or_else(T::zero)
    }

    /// `R_M(s, a, s') = R0(s, a, s') + RT_M(s, a)`, with `RT_M` contributing
    /// only on terminal transitions.
    pub fn compose_reward(&self, s: StateId, a: ActionId, s_next: StateId) -> Result<T> {
        for st in [s, s_next] {
            if st.0 >= self.num_states {
                return Err(WvfError::UnknownState(st.0));
            }
        }
        if a.0 >= self.num_actions {
            return Err(WvfError::UnknownAction(a.0));
        }
        Ok(self.reward(s, a))
    }

    /// States where some terminal transition carries a non-zero task reward.
    pub fn goal_states(&self) -> Vec<StateId> {
        (0..self.num_states)
            .map(StateId)
            .filter(|&s| self.is_goal_state(s))
            .collect()
    }

    pub fn is_goal_state(&self, s: StateId) -> bool {
        (0..self.num_actions).any(|a| matches!(self.terminal_reward(s, ActionId(a)), Some(v) if v != T::zero()))
    }

    /// Smallest and largest composed reward this task can emit.
    pub fn emitted_reward_range(&self) -> (T, T) {
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let r = self.reward(StateId(s), ActionId(a));
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        (lo, hi)
    }
}

/// Outcome of executing one action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition<T> {
    pub state: StateId,
    pub action: ActionId,
    pub reward: T,
    pub next: StateId,
    pub terminal: bool,
}

#[inline]
pub fn step<T: Scalar>(mdp: &DeterministicMdp<T>, task: &TaskSpec<T>, s: StateId, a: ActionId) -> Transition<T> {
    Transition {
        state: s,
        action: a,
        reward: task.reward(s, a),
        next: mdp.successor(s, a),
        terminal: mdp.is_terminal_transition(s, a),
    }
}

/// Result of a policy rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout<T> {
    pub total_return: T,
    pub steps: usize,
    /// State from which the terminal transition was taken, if the episode ended.
    pub terminated_at: Option<StateId>,
    pub states: Vec<StateId>,
}

/// Runs `policy` from `start` until a terminal transition or `max_steps`.
pub fn rollout<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    start: StateId,
    max_steps: usize,
    mut policy: impl FnMut(StateId) -> ActionId,
) -> Rollout<T> {
    let mut s = start;
    let mut total = T::zero();
    let mut states = vec![s];
    for t in 0..max_steps {
        let tr = step(mdp, task, s, policy(s));
        total += tr.reward;
        if tr.terminal {
            return Rollout {
                total_return: total,
                steps: t + 1,
                terminated_at: Some(s),
                states,
            };
        }
        s = tr.next;
        states.push(s);
    }
    Rollout {
        total_return: total,
        steps: max_steps,
        terminated_at: None,
        states,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two states in a line; action 0 moves right (self-loop at the end),
    /// action 1 terminates.
    fn line() -> DeterministicMdp<f64> {
        DeterministicMdp::new(
            2,
            2,
            vec![StateId(1), StateId(0), StateId(1), StateId(1)],
            vec![false, true, false, true],
            (-1.0, 1.0),
            vec![vec![StateId(0), StateId(1)], vec![StateId(1), StateId(0)]],
        )
        .unwrap()
    }

    #[test]
    fn rejects_successor_outside_neighborhood() {
        let err = DeterministicMdp::<f64>::new(
            2,
            1,
            vec![StateId(1), StateId(1)],
            vec![false, false],
            (0.0, 0.0),
            vec![vec![StateId(0)], vec![StateId(1)]],
        );
        assert!(matches!(err, Err(WvfError::InvalidArgument(_))));
    }

    #[test]
    fn task_rejects_terminal_reward_on_nonterminal_transition() {
        let mdp = line();
        let err = TaskSpec::new(&mdp, "bad", vec![0.0; 4], vec![Some(0.0), Some(0.0), None, Some(0.0)]);
        assert!(err.is_err());
    }

    #[test]
    fn task_rejects_out_of_bounds_reward() {
        let mdp = line();
        let err = TaskSpec::new(&mdp, "bad", vec![0.0; 4], vec![None, Some(5.0), None, Some(0.0)]);
        assert!(err.is_err());
    }

    #[test]
    fn compose_and_errors() {
        let mdp = line();
        let task = TaskSpec::new(&mdp, "t", vec![-0.5; 4], vec![None, Some(0.0), None, Some(1.5)]).unwrap();
        assert_eq!(task.compose_reward(StateId(1), ActionId(1), StateId(1)).unwrap(), 1.0);
        assert_eq!(task.compose_reward(StateId(0), ActionId(0), StateId(1)).unwrap(), -0.5);
        assert!(matches!(
            task.compose_reward(StateId(2), ActionId(0), StateId(0)),
            Err(WvfError::UnknownState(2))
        ));
        assert!(matches!(
            task.compose_reward(StateId(0), ActionId(7), StateId(0)),
            Err(WvfError::UnknownAction(7))
        ));
        assert_eq!(task.goal_states(), vec![StateId(1)]);
    }

    #[test]
    fn rollout_stops_at_terminal() {
        let mdp = line();
        let task = TaskSpec::new(&mdp, "t", vec![-0.5; 4], vec![None, Some(0.0), None, Some(1.5)]).unwrap();
        let r = rollout(&mdp, &task, StateId(0), 10, |s| if s.0 == 1 { ActionId(1) } else { ActionId(0) });
        assert_eq!(r.total_return, 0.5);
        assert_eq!(r.steps, 2);
        assert_eq!(r.terminated_at, Some(StateId(1)));
        let capped = rollout(&mdp, &task, StateId(0), 3, |_| ActionId(0));
        assert_eq!(capped.terminated_at, None);
        assert_eq!(capped.steps, 3);
    }

    #[test]
    fn neighborhood_radius() {
        let mdp = line();
        assert_eq!(mdp.neighborhood_within(StateId(0), 0), vec![StateId(0)]);
        assert_eq!(mdp.neighborhood_within(StateId(0), 2), vec![StateId(0), StateId(1)]);
    }
}
