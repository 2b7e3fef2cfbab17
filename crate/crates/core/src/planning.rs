//! Dynamics inference from a world value function and Dyna-style planning.
//!
//! For a deterministic MDP the successor of `(s, a)` is the candidate `s'`
//! that best satisfies the Bellman equations
//! `Q(s, g, a) = rbar(s, g, a, s') + gamma * V(s', g)` over a set of goals.
//! The mean squared residual of the chosen candidate doubles as a gate that
//! keeps imagined updates out until the WVF is locally consistent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::learning::{run_flat_training, run_wvf_training, LearnerConfig, RunRecord};
use crate::mdp::{ActionId, DeterministicMdp, StateId, TaskSpec, Transition};
use crate::scalar::Scalar;
use crate::wvf::{QTable, Wvf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Imagined updates attempted after every real step.
    pub planning_steps: usize,
    pub mse_threshold: f64,
    pub neighborhood_radius: usize,
    /// Use every state as a candidate successor and goal instead of the
    /// neighborhood of `s`.
    pub use_full_state_candidates: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            planning_steps: 10,
            mse_threshold: 1e-5,
            neighborhood_radius: 1,
            use_full_state_candidates: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mse_threshold > 0.0) {
            return Err(invalid("mse_threshold must be positive"));
        }
        Ok(())
    }
}

/// Observed reward and terminal flag per `(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardModel<T> {
    num_actions: usize,
    entries: Vec<Option<(T, bool)>>,
}

impl<T: Scalar> RewardModel<T> {
    pub fn empty(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_actions,
            entries: vec![None; num_states * num_actions],
        }
    }

    /// Fully known rewards of a task.
    pub fn from_task(mdp: &DeterministicMdp<T>, task: &TaskSpec<T>) -> Self {
        let mut model = Self::empty(mdp.num_states(), mdp.num_actions());
        for s in mdp.states() {
            for a in mdp.actions() {
                model.record(s, a, task.reward(s, a), mdp.is_terminal_transition(s, a));
            }
        }
        model
    }

    pub fn record(&mut self, s: StateId, a: ActionId, reward: T, terminal: bool) {
        self.entries[s.0 * self.num_actions + a.0] = Some((reward, terminal));
    }

    pub fn get(&self, s: StateId, a: ActionId) -> Option<(T, bool)> {
        self.entries[s.0 * self.num_actions + a.0]
    }
}

/// Successor prediction for one `(s, a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction<T> {
    pub successor: StateId,
    pub residual_mse: T,
}

/// Inferred one-step model over every `(s, a)` with a known reward.
#[derive(Clone, Debug)]
pub struct InferredModel<T> {
    num_actions: usize,
    predictions: Vec<Option<Prediction<T>>>,
    pub reward_table: RewardModel<T>,
}

impl<T: Scalar> InferredModel<T> {
    pub fn prediction(&self, s: StateId, a: ActionId) -> Option<Prediction<T>> {
        self.predictions[s.0 * self.num_actions + a.0]
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// `(1/|G|) * sum_g (Q(s,g,a) - [rbar(s,g,a,s') + gamma * V(s',g)])^2` with
/// `V = 0` past a terminal transition.
pub fn bellman_residual_mse<T: Scalar>(
    wvf: &Wvf<T>,
    s: StateId,
    a: ActionId,
    candidate: StateId,
    reward: T,
    terminal: bool,
    goal_set: &[StateId],
) -> Result<T> {
    if goal_set.is_empty() {
        return Err(invalid("goal set for the Bellman residual is empty"));
    }
    Ok(residual_mse(wvf, s, a, candidate, reward, terminal, goal_set))
}

#[inline]
fn residual_mse<T: Scalar>(
    wvf: &Wvf<T>,
    s: StateId,
    a: ActionId,
    candidate: StateId,
    reward: T,
    terminal: bool,
    goal_set: &[StateId],
) -> T {
    let mut sum = T::zero();
    for &g in goal_set {
        let bootstrap = if terminal { T::zero() } else { wvf.gamma() * wvf.value(candidate, g) };
        let residual = wvf.q(s, g, a) - (wvf.extended_reward(s, g, reward, terminal) + bootstrap);
        sum += residual * residual;
    }
    sum / T::from_usize(goal_set.len()).expect("goal count fits the scalar type")
}

fn candidates<T: Scalar>(mdp: &DeterministicMdp<T>, s: StateId, config: &PlannerConfig) -> Vec<StateId> {
    if config.use_full_state_candidates {
        mdp.states().collect()
    } else {
        mdp.neighborhood_within(s, config.neighborhood_radius)
    }
}

/// Predicts the successor of `(s, a)` as the candidate with the smallest
/// Bellman residual MSE (lowest state id on ties), using the candidate set
/// as the goal set too.
///
/// A terminal transition enters the absorbing state, so no candidate is
/// distinguished; `s` itself is reported, with the residual of the terminal
/// backup.
pub fn infer_next_state<T: Scalar>(
    wvf: &Wvf<T>,
    mdp: &DeterministicMdp<T>,
    s: StateId,
    a: ActionId,
    reward: T,
    terminal: bool,
    config: &PlannerConfig,
) -> (StateId, T) {
    let cands = candidates(mdp, s, config);
    infer_among(wvf, s, a, reward, terminal, &cands)
}

fn infer_among<T: Scalar>(wvf: &Wvf<T>, s: StateId, a: ActionId, reward: T, terminal: bool, cands: &[StateId]) -> (StateId, T) {
    if terminal {
        return (s, residual_mse(wvf, s, a, s, reward, true, cands));
    }
    let mut best = (s, T::infinity());
    for &c in cands {
        let mse = residual_mse(wvf, s, a, c, reward, false, cands);
        if mse < best.1 {
            best = (c, mse);
        }
    }
    best
}

/// Runs [`infer_next_state`] for every `(s, a)` whose reward is known.
pub fn infer_model<T: Scalar>(
    wvf: &Wvf<T>,
    mdp: &DeterministicMdp<T>,
    rewards: RewardModel<T>,
    config: &PlannerConfig,
) -> InferredModel<T> {
    let predictions = mdp
        .states()
        .flat_map(|s| mdp.actions().map(move |a| (s, a)))
        .map(|(s, a)| {
            rewards.get(s, a).map(|(r, terminal)| {
                let (successor, residual_mse) = infer_next_state(wvf, mdp, s, a, r, terminal, config);
                Prediction { successor, residual_mse }
            })
        })
        .collect();
    InferredModel {
        num_actions: mdp.num_actions(),
        predictions,
        reward_table: rewards,
    }
}

/// Per-episode counts of imagined updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateStats {
    /// Imagined transitions whose residual passed the gate and were applied.
    pub accepted: u64,
    /// Imagined transitions rejected by the residual gate.
    pub rejected: u64,
    /// Planning steps skipped because no goal had been discovered yet.
    pub skipped: u64,
}

#[derive(Clone, Debug)]
pub struct DynaWvfOutcome<T> {
    pub wvf: Wvf<T>,
    pub records: Vec<RunRecord>,
    /// One entry per episode.
    pub gate: Vec<GateStats>,
}

/// Visited `(s, a)` pairs in first-visit order, for uniform sampling.
#[derive(Clone, Debug)]
struct Visited {
    num_actions: usize,
    seen: Vec<bool>,
    pairs: Vec<(StateId, ActionId)>,
}

impl Visited {
    fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_actions,
            seen: vec![false; num_states * num_actions],
            pairs: Vec::new(),
        }
    }

    fn insert(&mut self, s: StateId, a: ActionId) {
        let i = s.0 * self.num_actions + a.0;
        if !self.seen[i] {
            self.seen[i] = true;
            self.pairs.push((s, a));
        }
    }
}

/// Planning-only generator: a separate ChaCha stream of the run seed, so the
/// real-experience stream does not depend on the number of planning steps.
fn planning_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Everything one imagined WVF update needs, reused across steps.
pub struct WvfPlanner<'a, T> {
    mdp: &'a DeterministicMdp<T>,
    config: &'a PlannerConfig,
    threshold: T,
    alpha: T,
    rewards: RewardModel<T>,
    visited: Visited,
    rng: ChaCha8Rng,
    hoods: Vec<Vec<StateId>>,
}

impl<'a, T: Scalar> WvfPlanner<'a, T> {
    pub fn new(mdp: &'a DeterministicMdp<T>, config: &'a PlannerConfig, alpha: f64, seed: u64) -> Self {
        let hoods = if config.use_full_state_candidates {
            Vec::new()
        } else {
            mdp.states().map(|s| mdp.neighborhood_within(s, config.neighborhood_radius)).collect()
        };
        Self {
            mdp,
            config,
            threshold: T::lit(config.mse_threshold),
            alpha: T::lit(alpha),
            rewards: RewardModel::empty(mdp.num_states(), mdp.num_actions()),
            visited: Visited::new(mdp.num_states(), mdp.num_actions()),
            rng: planning_rng(seed),
            hoods,
        }
    }

    /// Records the reward of a real transition.
    pub fn observe(&mut self, tr: &Transition<T>) {
        self.rewards.record(tr.state, tr.action, tr.reward, tr.terminal);
        self.visited.insert(tr.state, tr.action);
    }

    /// Marks every `(s, a)` as visited with its true reward.
    pub fn observe_all(&mut self, task: &TaskSpec<T>) {
        for s in self.mdp.states() {
            for a in self.mdp.actions() {
                let tr = crate::mdp::step(self.mdp, task, s, a);
                self.observe(&tr);
            }
        }
    }

    /// One imagined update: sample a visited `(s, a)`, infer `s'`, and apply
    /// the goal-sweep update only if the residual MSE passes the gate.
    pub fn plan_step(&mut self, wvf: &mut Wvf<T>, stats: &mut GateStats) {
        let Some(&(s, a)) = self.visited.pairs.choose(&mut self.rng) else {
            stats.skipped += 1;
            return;
        };
        if wvf.goals().is_empty() {
            stats.skipped += 1;
            return;
        }
        let (reward, terminal) = self.rewards.get(s, a).expect("visited pairs have a recorded reward");
        let (next, mse) = if self.config.use_full_state_candidates {
            let all: Vec<StateId> = self.mdp.states().collect();
            infer_among(wvf, s, a, reward, terminal, &all)
        } else {
            infer_among(wvf, s, a, reward, terminal, &self.hoods[s.0])
        };
        if mse <= self.threshold {
            stats.accepted += 1;
            let tr = Transition {
                state: s,
                action: a,
                reward,
                next,
                terminal,
            };
            wvf.update_all_goals(&tr, self.alpha);
        } else {
            stats.rejected += 1;
        }
    }
}

/// Dyna for world value functions: the real-experience loop of
/// [`train_wvf_qlearning`](crate::learning::train_wvf_qlearning), plus
/// `planning_steps` gated imagined updates after every real step. The next
/// real state always comes from the environment.
pub fn train_dyna_wvf<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    learner: &LearnerConfig,
    planner: &PlannerConfig,
) -> Result<DynaWvfOutcome<T>> {
    planner.validate()?;
    let mut plan = WvfPlanner::new(mdp, planner, learner.alpha, learner.seed);
    let mut gate = vec![GateStats::default(); learner.episodes];
    let (wvf, records) = run_wvf_training(mdp, task, learner, |wvf, tr, episode| {
        plan.observe(tr);
        for _ in 0..planner.planning_steps {
            plan.plan_step(wvf, &mut gate[episode]);
        }
    })?;
    Ok(DynaWvfOutcome { wvf, records, gate })
}

/// Dyna-Q: a learned deterministic model `(s, a) -> (r, s', terminal)` and
/// `planning_steps` imagined one-step updates per real step.
pub fn train_dyna_q_baseline<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    learner: &LearnerConfig,
    planner: &PlannerConfig,
) -> Result<(QTable<T>, Vec<RunRecord>)> {
    Ok(train_dyna_q_with_model(mdp, task, learner, planner)?.0)
}

/// Learned Dyna-Q model, one entry per `(s, a)`.
pub type TransitionModel<T> = Vec<Option<Transition<T>>>;

/// [`train_dyna_q_baseline`] that also returns the learned model.
pub fn train_dyna_q_with_model<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    learner: &LearnerConfig,
    planner: &PlannerConfig,
) -> Result<((QTable<T>, Vec<RunRecord>), TransitionModel<T>)> {
    planner.validate()?;
    let na = mdp.num_actions();
    let mut model: TransitionModel<T> = vec![None; mdp.num_states() * na];
    let mut visited = Visited::new(mdp.num_states(), na);
    let mut rng = planning_rng(learner.seed);
    let alpha = T::lit(learner.alpha);
    let gamma = T::lit(learner.gamma);
    let out = run_flat_training(mdp, task, learner, |q, tr| {
        model[tr.state.0 * na + tr.action.0] = Some(*tr);
        visited.insert(tr.state, tr.action);
        for _ in 0..planner.planning_steps {
            let &(s, a) = visited.pairs.choose(&mut rng).expect("a real step was just recorded");
            let imagined = model[s.0 * na + a.0].expect("visited pairs are modelled");
            q.update(&imagined, alpha, gamma);
        }
    })?;
    Ok((out, model))
}
