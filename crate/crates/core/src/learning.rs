//! Model-free training: Q-learning for world value functions with a sweep
//! over every buffered goal on each real transition, and a flat Q-learning
//! baseline sharing the same exploration and evaluation protocol.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mdp::{rollout, step, ActionId, DeterministicMdp, StateId, TaskSpec, Transition};
use crate::scalar::Scalar;
use crate::wvf::{QTable, Wvf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub episodes: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Greedy-evaluation start states.
    pub eval_starts: Vec<StateId>,
    /// Horizon `D` for the wrong-goal penalty; `None` means `|S|`.
    pub horizon: Option<usize>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            epsilon: 0.1,
            gamma: 1.0,
            episodes: 6000,
            max_steps: 1000,
            seed: 0,
            eval_starts: Vec::new(),
            horizon: None,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(invalid(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.episodes == 0 || self.max_steps == 0 {
            return Err(invalid("episodes and max_steps must be at least 1"));
        }
        if self.eval_starts.is_empty() {
            return Err(invalid("at least one evaluation start state is required"));
        }
        Ok(())
    }
}

/// One row of a learning curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub episode: usize,
    /// Real environment transitions so far, cumulative.
    pub env_steps: u64,
    /// Mean greedy-evaluation return over the configured start states.
    pub greedy_return: f64,
}

/// Episode start sampler: uniform over states that are not task goals.
pub(crate) struct Starts(Vec<StateId>);

impl Starts {
    pub(crate) fn new<T: Scalar>(mdp: &DeterministicMdp<T>, task: &TaskSpec<T>) -> Self {
        let starts: Vec<_> = mdp.states().filter(|&s| !task.is_goal_state(s)).collect();
        Self(if starts.is_empty() { mdp.states().collect() } else { starts })
    }

    fn sample(&self, rng: &mut impl Rng) -> StateId {
        *self.0.choose(rng).expect("at least one start state")
    }
}

pub(crate) fn epsilon_greedy(rng: &mut impl Rng, epsilon: f64, num_actions: usize, greedy: impl FnOnce() -> ActionId) -> ActionId {
    if rng.gen::<f64>() < epsilon {
        ActionId(rng.gen_range(0..num_actions))
    } else {
        greedy()
    }
}

pub(crate) fn episode_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mean greedy task-policy return of a WVF from each start. Before any goal
/// has been discovered the task policy is undefined and action 0 is used.
pub fn evaluate_wvf<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    wvf: &Wvf<T>,
    starts: &[StateId],
    max_steps: usize,
) -> f64 {
    let policy: Vec<ActionId> = mdp
        .states()
        .map(|s| wvf.greedy_task_action(s).unwrap_or(ActionId(0)))
        .collect();
    mean_return(mdp, task, starts, max_steps, |s| policy[s.0])
}

/// Mean greedy return of a flat Q table from each start.
pub fn evaluate_q<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    q: &QTable<T>,
    starts: &[StateId],
    max_steps: usize,
) -> f64 {
    mean_return(mdp, task, starts, max_steps, |s| q.greedy_action(s))
}

fn mean_return<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    starts: &[StateId],
    max_steps: usize,
    policy: impl Fn(StateId) -> ActionId,
) -> f64 {
    let total: f64 = starts
        .iter()
        .map(|&s| rollout(mdp, task, s, max_steps, &policy).total_return.as_f64())
        .sum();
    total / starts.len() as f64
}

/// Shared real-experience loop for WVF learners. `after_step` runs after the
/// real update of every transition and may apply further (imagined) updates.
pub(crate) fn run_wvf_training<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    config: &LearnerConfig,
    mut after_step: impl FnMut(&mut Wvf<T>, &Transition<T>, usize),
) -> Result<(Wvf<T>, Vec<RunRecord>)> {
    config.validate()?;
    let mut wvf = Wvf::for_mdp(mdp, config.horizon)?;
    if config.gamma != 1.0 {
        wvf = Wvf::new(mdp.num_states(), mdp.num_actions(), wvf.rbar_min(), T::lit(config.gamma))?;
    }
    let alpha = T::lit(config.alpha);
    let starts = Starts::new(mdp, task);
    let mut rng = episode_rng(config.seed);
    let mut env_steps = 0u64;
    let mut records = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let mut s = starts.sample(&mut rng);
        let g = match wvf.goals().as_slice().choose(&mut rng) {
            Some(&g) => g,
            None => StateId(rng.gen_range(0..mdp.num_states())),
        };
        for _ in 0..config.max_steps {
            let a = epsilon_greedy(&mut rng, config.epsilon, mdp.num_actions(), || wvf.greedy_world_action(s, g));
            let tr = step(mdp, task, s, a);
            env_steps += 1;
            if tr.terminal {
                wvf.add_goal(s);
            }
            wvf.update_all_goals(&tr, alpha);
            after_step(&mut wvf, &tr, episode);
            if tr.terminal {
                break;
            }
            s = tr.next;
        }
        records.push(RunRecord {
            seed: config.seed,
            episode,
            env_steps,
            greedy_return: evaluate_wvf(mdp, task, &wvf, &config.eval_starts, config.max_steps),
        });
    }
    Ok((wvf, records))
}

/// Q-learning for world value functions.
///
/// Each episode samples an intended goal from the buffer (uniformly over all
/// states while the buffer is empty) and acts epsilon-greedily on
/// `Q(s, g, .)`. A terminal transition adds its source state to the buffer;
/// every transition then updates `Q(s, g', a)` for all buffered goals `g'`.
/// A greedy task-policy evaluation is logged after each episode.
pub fn train_wvf_qlearning<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    config: &LearnerConfig,
) -> Result<(Wvf<T>, Vec<RunRecord>)> {
    run_wvf_training(mdp, task, config, |_, _, _| {})
}

pub(crate) fn run_flat_training<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    config: &LearnerConfig,
    mut after_step: impl FnMut(&mut QTable<T>, &Transition<T>),
) -> Result<(QTable<T>, Vec<RunRecord>)> {
    config.validate()?;
    let mut q = QTable::zeros(mdp.num_states(), mdp.num_actions());
    let alpha = T::lit(config.alpha);
    let gamma = T::lit(config.gamma);
    let starts = Starts::new(mdp, task);
    let mut rng = episode_rng(config.seed);
    let mut env_steps = 0u64;
    let mut records = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let mut s = starts.sample(&mut rng);
        for _ in 0..config.max_steps {
            let a = epsilon_greedy(&mut rng, config.epsilon, mdp.num_actions(), || q.greedy_action(s));
            let tr = step(mdp, task, s, a);
            env_steps += 1;
            q.update(&tr, alpha, gamma);
            after_step(&mut q, &tr);
            if tr.terminal {
                break;
            }
            s = tr.next;
        }
        records.push(RunRecord {
            seed: config.seed,
            episode,
            env_steps,
            greedy_return: evaluate_q(mdp, task, &q, &config.eval_starts, config.max_steps),
        });
    }
    Ok((q, records))
}

/// Tabular Q-learning on the task reward.
pub fn train_flat_qlearning<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    config: &LearnerConfig,
) -> Result<(QTable<T>, Vec<RunRecord>)> {
    run_flat_training(mdp, task, config, |_, _| {})
}

/// Index of the first record from which every later greedy return stays
/// at or above `target - tolerance`.
pub fn settling_index(records: &[RunRecord], target: f64, tolerance: f64) -> Option<usize> {
    let floor = target - tolerance;
    let last_bad = records.iter().rposition(|r| r.greedy_return < floor);
    match last_bad {
        None if records.is_empty() => None,
        None => Some(0),
        Some(i) if i + 1 < records.len() => Some(i + 1),
        Some(_) => None,
    }
}

/// Episodes (1-based count) needed to reach and hold the threshold.
pub fn episodes_to_threshold(records: &[RunRecord], target: f64, tolerance: f64) -> Option<usize> {
    settling_index(records, target, tolerance).map(|i| records[i].episode + 1)
}

/// Real environment steps needed to reach and hold the threshold.
pub fn steps_to_threshold(records: &[RunRecord], target: f64, tolerance: f64) -> Option<u64> {
    settling_index(records, target, tolerance).map(|i| records[i].env_steps)
}

/// Median of optional measurements; `None` (never reached) sorts last.
pub fn median_of<N: Copy + Ord>(values: &[Option<N>]) -> Option<N> {
    let mut v: Vec<_> = values.to_vec();
    v.sort_by(|a, b| match (a, b) {
        (Some(x), Some(y)) => x.cmp(y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    v.get(v.len().checked_sub(1)? / 2).copied().flatten()
}
