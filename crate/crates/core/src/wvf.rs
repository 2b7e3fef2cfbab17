//! World value functions: the goal-conditioned table `Q(s, g, a)` learned
//! under the extended reward, plus the goal buffer it is maximised over.

use crate::error::{invalid, Result, WvfError};
use crate::mdp::{ActionId, DeterministicMdp, StateId, Transition};
use crate::scalar::{argmax, max_of, Scalar};

/// States from which a terminal transition has been experienced, in
/// insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GoalBuffer {
    goals: Vec<StateId>,
    present: Vec<bool>,
}

impl GoalBuffer {
    pub fn new(num_states: usize) -> Self {
        Self {
            goals: Vec::new(),
            present: vec![false; num_states],
        }
    }

    /// Returns `true` if `g` was not already present.
    pub fn insert(&mut self, g: StateId) -> bool {
        if self.present[g.0] {
            return false;
        }
        self.present[g.0] = true;
        self.goals.push(g);
        true
    }

    pub fn contains(&self, g: StateId) -> bool {
        self.present.get(g.0).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn as_slice(&self) -> &[StateId] {
        &self.goals
    }

    pub fn iter(&self) -> impl Iterator<Item = StateId> + '_ {
        self.goals.iter().copied()
    }
}

/// `(r_min - r_max) * horizon`: a wrong-goal termination penalty that
/// outweighs any difference in return over `horizon` steps.
pub fn penalty_rbar_min<T: Scalar>(r_min: T, r_max: T, horizon: usize) -> Result<T> {
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    if !(r_min <= r_max) {
        return Err(invalid("r_min must not exceed r_max"));
    }
    Ok((r_min - r_max) * T::from_usize(horizon).expect("horizon fits the scalar type"))
}

/// Dense world value function over `|S| x |S| x |A|`.
///
/// The goal axis covers every state up front; only goals in the buffer take
/// part in maximisations.
#[derive(Clone, Debug, PartialEq)]
pub struct Wvf<T> {
    num_states: usize,
    num_actions: usize,
    table: Vec<T>,
    rbar_min: T,
    gamma: T,
    goals: GoalBuffer,
}

impl<T: Scalar> Wvf<T> {
    /// Zero-initialised table with an empty goal buffer.
    pub fn new(num_states: usize, num_actions: usize, rbar_min: T, gamma: T) -> Result<Self> {
        if !(gamma > T::zero() && gamma <= T::one()) {
            return Err(invalid(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if num_states == 0 || num_actions == 0 {
            return Err(invalid("empty state or action space"));
        }
        Ok(Self {
            num_states,
            num_actions,
            table: vec![T::zero(); num_states * num_states * num_actions],
            rbar_min,
            gamma,
            goals: GoalBuffer::new(num_states),
        })
    }

    /// WVF sized for `mdp` with the penalty derived from its reward bounds
    /// and horizon `D` (default `|S|`), at `gamma = 1`.
    pub fn for_mdp(mdp: &DeterministicMdp<T>, horizon: Option<usize>) -> Result<Self> {
        let (lo, hi) = mdp.reward_bounds();
        let rbar_min = penalty_rbar_min(lo, hi, horizon.unwrap_or(mdp.num_states()))?;
        Self::new(mdp.num_states(), mdp.num_actions(), rbar_min, T::one())
    }

    /// Builds a WVF from a raw `(s, g, a)` row-major table.
    pub fn from_parts(
        num_states: usize,
        num_actions: usize,
        rbar_min: T,
        gamma: T,
        goals: &[StateId],
        table: Vec<T>,
    ) -> Result<Self> {
        let mut wvf = Self::new(num_states, num_actions, rbar_min, gamma)?;
        if table.len() != wvf.table.len() {
            return Err(invalid(format!(
                "table has {} entries, expected {}",
                table.len(),
                wvf.table.len()
            )));
        }
        for &g in goals {
            if g.0 >= num_states {
                return Err(WvfError::UnknownState(g.0));
            }
            if !wvf.goals.insert(g) {
                return Err(invalid(format!("duplicate goal {}", g.0)));
            }
        }
        wvf.table = table;
        Ok(wvf)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn rbar_min(&self) -> T {
        self.rbar_min
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn goals(&self) -> &GoalBuffer {
        &self.goals
    }

    pub fn add_goal(&mut self, g: StateId) -> bool {
        self.goals.insert(g)
    }

    /// Raw table in `(s, g, a)` row-major order.
    pub fn table(&self) -> &[T] {
        &self.table
    }

    #[inline]
    fn index(&self, s: StateId, g: StateId, a: ActionId) -> usize {
        (s.0 * self.num_states + g.0) * self.num_actions + a.0
    }

    #[inline]
    pub fn q(&self, s: StateId, g: StateId, a: ActionId) -> T {
        self.table[self.index(s, g, a)]
    }

    pub fn set_q(&mut self, s: StateId, g: StateId, a: ActionId, v: T) {
        let i = self.index(s, g, a);
        self.table[i] = v;
    }

    /// `Q(s, g, .)` over all actions.
    #[inline]
    pub fn action_values(&self, s: StateId, g: StateId) -> &[T] {
        let start = (s.0 * self.num_states + g.0) * self.num_actions;
        &self.table[start..start + self.num_actions]
    }

    /// `V(s, g) = max_a Q(s, g, a)`.
    #[inline]
    pub fn value(&self, s: StateId, g: StateId) -> T {
        max_of(self.action_values(s, g))
    }

    /// Extended reward: `rbar_min` for a terminal transition from `s` when
    /// the intended goal is some other state, otherwise `r`.
    #[inline]
    pub fn extended_reward(&self, s: StateId, g: StateId, r: T, terminal: bool) -> T {
        if terminal && g != s {
            self.rbar_min
        } else {
            r
        }
    }

    /// Task reward recovered as the max of the extended reward over goals.
    pub fn recover_task_reward(&self, s: StateId, r: T, terminal: bool) -> Result<T> {
        if self.goals.is_empty() {
            return Err(WvfError::EmptyGoalBuffer);
        }
        Ok(self
            .goals
            .iter()
            .map(|g| self.extended_reward(s, g, r, terminal))
            .fold(T::neg_infinity(), T::max))
    }

    /// Task action value `max_g Q(s, g, a)` over the goal buffer.
    pub fn extract_task_q(&self, s: StateId, a: ActionId) -> Result<T> {
        if self.goals.is_empty() {
            return Err(WvfError::EmptyGoalBuffer);
        }
        Ok(self.goals.iter().map(|g| self.q(s, g, a)).fold(T::neg_infinity(), T::max))
    }

    /// All task action values at `s`.
    pub fn task_action_values(&self, s: StateId) -> Result<Vec<T>> {
        if self.goals.is_empty() {
            return Err(WvfError::EmptyGoalBuffer);
        }
        let mut best = vec![T::neg_infinity(); self.num_actions];
        for g in self.goals.iter() {
            for (b, &v) in best.iter_mut().zip(self.action_values(s, g)) {
                *b = b.max(v);
            }
        }
        Ok(best)
    }

    pub fn task_value(&self, s: StateId) -> Result<T> {
        Ok(max_of(&self.task_action_values(s)?))
    }

    /// Greedy task policy; ties go to the lowest action.
    pub fn greedy_task_action(&self, s: StateId) -> Result<ActionId> {
        let values = self.task_action_values(s)?;
        Ok(ActionId(argmax(values).map_or(0, |(a, _)| a)))
    }

    /// Greedy world policy `argmax_a Q(s, g, a)`; ties go to the lowest action.
    #[inline]
    pub fn greedy_world_action(&self, s: StateId, g: StateId) -> ActionId {
        ActionId(argmax(self.action_values(s, g).iter().copied()).map_or(0, |(a, _)| a))
    }

    /// One TD step on `Q(s, g', a)` for every goal `g'` in the buffer, using
    /// the extended reward and a zero bootstrap past terminal transitions.
    pub fn update_all_goals(&mut self, tr: &Transition<T>, alpha: T) {
        let na = self.num_actions;
        let ns = self.num_states;
        for k in 0..self.goals.len() {
            let g = self.goals.goals[k];
            let rbar = self.extended_reward(tr.state, g, tr.reward, tr.terminal);
            let bootstrap = if tr.terminal {
                T::zero()
            } else {
                self.gamma * self.value(tr.next, g)
            };
            let i = (tr.state.0 * ns + g.0) * na + tr.action.0;
            let delta = rbar + bootstrap - self.table[i];
            self.table[i] += alpha * delta;
        }
    }
}

/// Flat `(s, a)` action-value table.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable<T> {
    num_states: usize,
    num_actions: usize,
    table: Vec<T>,
}

impl<T: Scalar> QTable<T> {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            table: vec![T::zero(); num_states * num_actions],
        }
    }

    pub fn from_table(num_states: usize, num_actions: usize, table: Vec<T>) -> Result<Self> {
        if table.len() != num_states * num_actions {
            return Err(invalid("Q table size does not match |S| x |A|"));
        }
        Ok(Self {
            num_states,
            num_actions,
            table,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn table(&self) -> &[T] {
        &self.table
    }

    #[inline]
    pub fn q(&self, s: StateId, a: ActionId) -> T {
        self.table[s.0 * self.num_actions + a.0]
    }

    pub fn set_q(&mut self, s: StateId, a: ActionId, v: T) {
        self.table[s.0 * self.num_actions + a.0] = v;
    }

    #[inline]
    pub fn action_values(&self, s: StateId) -> &[T] {
        &self.table[s.0 * self.num_actions..(s.0 + 1) * self.num_actions]
    }

    #[inline]
    pub fn value(&self, s: StateId) -> T {
        max_of(self.action_values(s))
    }

    pub fn greedy_action(&self, s: StateId) -> ActionId {
        ActionId(argmax(self.action_values(s).iter().copied()).map_or(0, |(a, _)| a))
    }

    /// Standard one-step Q-learning update.
    pub fn update(&mut self, tr: &Transition<T>, alpha: T, gamma: T) {
        let bootstrap = if tr.terminal { T::zero() } else { gamma * self.value(tr.next) };
        let i = tr.state.0 * self.num_actions + tr.action.0;
        let delta = tr.reward + bootstrap - self.table[i];
        self.table[i] += alpha * delta;
    }
}
