//! Exact solvers and checkers used as ground truth: value iteration for
//! `Q*` and the optimal WVF, reachability, and the mastery rollout test.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Result, WvfError};
use crate::mdp::{ActionId, DeterministicMdp, StateId, TaskSpec};
use crate::scalar::{max_of, Scalar};
use crate::wvf::{QTable, Wvf};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// Both optimal tables for one task.
#[derive(Clone, Debug)]
pub struct ExactSolution<T> {
    pub q_star: QTable<T>,
    pub wvf_star: Wvf<T>,
    /// Largest iteration count over the task solve and every per-goal solve.
    pub iterations: usize,
    /// Largest final sup-norm change over those solves.
    pub sup_norm_residual: T,
}

fn iteration_cap(mdp_states: usize) -> usize {
    10 * mdp_states
}

/// Synchronous undiscounted value iteration over a deterministic MDP with
/// reward `reward(s, a)`; the absorbing state has value 0.
fn value_iteration<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    reward: impl Fn(StateId, ActionId) -> T,
    tolerance: T,
) -> Result<(Vec<T>, usize, T)> {
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    let mut q = vec![T::zero(); ns * na];
    let mut values = vec![T::zero(); ns];
    let cap = iteration_cap(ns);
    let mut residual = T::infinity();
    for it in 1..=cap {
        residual = T::zero();
        for s in mdp.states() {
            for a in mdp.actions() {
                let bootstrap = if mdp.is_terminal_transition(s, a) {
                    T::zero()
                } else {
                    values[mdp.successor(s, a).0]
                };
                let new = reward(s, a) + bootstrap;
                let i = s.0 * na + a.0;
                residual = residual.max((new - q[i]).abs());
                q[i] = new;
            }
        }
        for (s, v) in values.iter_mut().enumerate() {
            *v = max_of(&q[s * na..(s + 1) * na]);
        }
        if residual <= tolerance {
            return Ok((q, it, residual));
        }
    }
    Err(WvfError::NotConverged {
        iterations: cap,
        residual: residual.as_f64(),
    })
}

/// Optimal task action values by value iteration at `gamma = 1`.
pub fn solve_q_star<T: Scalar>(mdp: &DeterministicMdp<T>, task: &TaskSpec<T>, tolerance: T) -> Result<QTable<T>> {
    let (q, _, _) = value_iteration(mdp, |s, a| task.reward(s, a), tolerance)?;
    QTable::from_table(mdp.num_states(), mdp.num_actions(), q)
}

/// Optimal WVF: each goal `g` defines an MDP with reward
/// `rbar(s, g, a, s')`, solved independently and stacked on the goal axis.
/// The goal buffer holds every state with a terminal transition.
pub fn solve_wvf_star<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    rbar_min: T,
    tolerance: T,
) -> Result<Wvf<T>> {
    Ok(solve_wvf_star_with_stats(mdp, task, rbar_min, tolerance)?.0)
}

fn solve_wvf_star_with_stats<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    rbar_min: T,
    tolerance: T,
) -> Result<(Wvf<T>, usize, T)> {
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    let goals = mdp.terminal_states();
    let mut table = vec![T::zero(); ns * ns * na];
    let mut max_iters = 0;
    let mut max_residual = T::zero();
    for &g in &goals {
        let (q, iters, residual) = value_iteration(
            mdp,
            |s, a| {
                if mdp.is_terminal_transition(s, a) && s != g {
                    rbar_min
                } else {
                    task.reward(s, a)
                }
            },
            tolerance,
        )?;
        max_iters = max_iters.max(iters);
        max_residual = max_residual.max(residual);
        for s in 0..ns {
            let dst = (s * ns + g.0) * na;
            table[dst..dst + na].copy_from_slice(&q[s * na..(s + 1) * na]);
        }
    }
    let wvf = Wvf::from_parts(ns, na, rbar_min, T::one(), &goals, table)?;
    Ok((wvf, max_iters, max_residual))
}

pub fn solve_exact<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    task: &TaskSpec<T>,
    rbar_min: T,
    tolerance: T,
) -> Result<ExactSolution<T>> {
    let (q, q_iters, q_residual) = value_iteration(mdp, |s, a| task.reward(s, a), tolerance)?;
    let (wvf_star, w_iters, w_residual) = solve_wvf_star_with_stats(mdp, task, rbar_min, tolerance)?;
    Ok(ExactSolution {
        q_star: QTable::from_table(mdp.num_states(), mdp.num_actions(), q)?,
        wvf_star,
        iterations: q_iters.max(w_iters),
        sup_norm_residual: q_residual.max(w_residual),
    })
}

/// Largest change one Bellman optimality backup makes to `q`.
pub fn bellman_sup_residual<T: Scalar>(mdp: &DeterministicMdp<T>, task: &TaskSpec<T>, q: &QTable<T>) -> T {
    let mut worst = T::zero();
    for s in mdp.states() {
        for a in mdp.actions() {
            let bootstrap = if mdp.is_terminal_transition(s, a) {
                T::zero()
            } else {
                q.value(mdp.successor(s, a))
            };
            worst = worst.max((task.reward(s, a) + bootstrap - q.q(s, a)).abs());
        }
    }
    worst
}

/// BFS distances over non-terminal transitions; `None` if unreachable.
pub fn shortest_path_lengths<T: Scalar>(mdp: &DeterministicMdp<T>, s: StateId) -> Vec<Option<usize>> {
    let mut dist = vec![None; mdp.num_states()];
    dist[s.0] = Some(0);
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u.0].expect("queued states have a distance");
        for a in mdp.actions() {
            if mdp.is_terminal_transition(u, a) {
                continue;
            }
            let v = mdp.successor(u, a);
            if dist[v.0].is_none() {
                dist[v.0] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// States reachable from `s` (including `s`) without terminating.
pub fn reachable_goals<T: Scalar>(mdp: &DeterministicMdp<T>, s: StateId) -> BTreeSet<StateId> {
    shortest_path_lengths(mdp, s)
        .into_iter()
        .enumerate()
        .filter_map(|(i, d)| d.map(|_| StateId(i)))
        .collect()
}

/// Optimal return from each start under `q_star`, averaged.
pub fn optimal_eval_return<T: Scalar>(q_star: &QTable<T>, starts: &[StateId]) -> f64 {
    starts.iter().map(|&s| q_star.value(s).as_f64()).sum::<f64>() / starts.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MasteryOutcome {
    pub start: StateId,
    pub goal: StateId,
    pub reached: bool,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MasteryReport {
    pub outcomes: Vec<MasteryOutcome>,
}

impl MasteryReport {
    pub fn passed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.reached).count()
    }

    /// Fraction of `(s, g)` pairs whose rollout terminated at `g`; 1.0 when
    /// there are no pairs.
    pub fn fraction(&self) -> f64 {
        if self.outcomes.is_empty() {
            1.0
        } else {
            self.passed() as f64 / self.outcomes.len() as f64
        }
    }
}

/// For every state `s` and every buffered goal `g != s` reachable from `s`,
/// follows the greedy world policy for at most `|S|` steps and records
/// whether the episode terminated at `g`.
pub fn check_mastery<T: Scalar>(mdp: &DeterministicMdp<T>, wvf: &Wvf<T>) -> MasteryReport {
    let mut outcomes = Vec::new();
    for s in mdp.states() {
        let reachable = reachable_goals(mdp, s);
        for g in wvf.goals().iter() {
            if g == s || !reachable.contains(&g) {
                continue;
            }
            let mut x = s;
            let mut outcome = MasteryOutcome {
                start: s,
                goal: g,
                reached: false,
                steps: mdp.num_states(),
            };
            for t in 0..mdp.num_states() {
                let a = wvf.greedy_world_action(x, g);
                if mdp.is_terminal_transition(x, a) {
                    outcome.reached = x == g;
                    outcome.steps = t + 1;
                    break;
                }
                x = mdp.successor(x, a);
            }
            outcomes.push(outcome);
        }
    }
    MasteryReport { outcomes }
}

/// Actions whose value is within `tie_tolerance` of the best at `(s, g)`.
pub fn world_argmax_set<T: Scalar>(wvf: &Wvf<T>, s: StateId, g: StateId, tie_tolerance: T) -> Vec<ActionId> {
    let values = wvf.action_values(s, g);
    let best = max_of(values);
    values
        .iter()
        .enumerate()
        .filter(|&(_, &v)| best - v <= tie_tolerance)
        .map(|(a, _)| ActionId(a))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::four_rooms::{build_four_rooms, library_task, make_task, GridAction};
    use crate::wvf::penalty_rbar_min;

    #[test]
    fn q_star_near_goal() {
        let (mdp, layout) = build_four_rooms::<f64>();
        let task = library_task(&mdp, &layout, "tl_br").unwrap();
        let q = solve_q_star(&mdp, &task, 1e-12).unwrap();
        let goal = layout.state_at(3, 3).unwrap();
        let left = layout.state_at(3, 2).unwrap();
        assert_eq!(q.q(goal, GridAction::Done.id()), 10.0);
        assert!((q.q(left, GridAction::East.id()) - 9.9).abs() < 1e-12);
        assert!(bellman_sup_residual(&mdp, &task, &q) <= 1e-12);
    }

    #[test]
    fn empty_task_done_is_step_reward() {
        let (mdp, layout) = build_four_rooms::<f64>();
        let task = make_task(&mdp, &layout, "none", &[]).unwrap();
        let q = solve_q_star(&mdp, &task, 1e-12).unwrap();
        for s in mdp.states() {
            assert_eq!(q.q(s, GridAction::Done.id()), -0.1);
            assert_eq!(q.value(s), -0.1);
        }
    }

    #[test]
    fn wvf_star_terminal_entries() {
        let (mdp, layout) = build_four_rooms::<f64>();
        let task = library_task(&mdp, &layout, "tl_br").unwrap();
        let rbar = penalty_rbar_min(-0.1, 10.0, 104).unwrap();
        let w = solve_wvf_star(&mdp, &task, rbar, 1e-12).unwrap();
        assert_eq!(w.goals().len(), 104);
        let done = GridAction::Done.id();
        for g in task.goal_states() {
            assert_eq!(w.q(g, g, done), 10.0);
        }
        for s in mdp.states().step_by(7) {
            for g in mdp.states().step_by(5) {
                if s != g {
                    assert_eq!(w.q(s, g, done), rbar);
                }
            }
        }
    }

    #[test]
    fn goal_column_matches_single_goal_solve() {
        let (mdp, layout) = build_four_rooms::<f64>();
        let task = library_task(&mdp, &layout, "hallways").unwrap();
        let rbar = -1050.4;
        let w = solve_wvf_star(&mdp, &task, rbar, 1e-12).unwrap();
        let g = layout.state_at(6, 2).unwrap();
        let (q, _, _) = value_iteration(
            &mdp,
            |s, a| if mdp.is_terminal_transition(s, a) && s != g { rbar } else { task.reward(s, a) },
            1e-12,
        )
        .unwrap();
        for s in mdp.states() {
            for a in mdp.actions() {
                assert_eq!(w.q(s, g, a), q[s.0 * 5 + a.0]);
            }
        }
    }

    #[test]
    fn reachability() {
        let (mdp, _) = build_four_rooms::<f64>();
        for s in mdp.states() {
            let r = reachable_goals(&mdp, s);
            assert_eq!(r.len(), 104);
            assert!(r.contains(&s));
        }
    }

    #[test]
    fn improper_task_reports_non_convergence() {
        // a single state whose only action loops forever with a positive reward
        let mdp = DeterministicMdp::<f64>::new(1, 1, vec![StateId(0)], vec![false], (0.0, 1.0), vec![vec![StateId(0)]]).unwrap();
        let task = TaskSpec::new(&mdp, "loop", vec![1.0], vec![None]).unwrap();
        assert!(matches!(solve_q_star(&mdp, &task, 1e-12), Err(WvfError::NotConverged { .. })));
    }

    #[test]
    fn zero_wvf_mastery_is_well_defined() {
        let (mdp, _) = build_four_rooms::<f64>();
        let mut w = Wvf::for_mdp(&mdp, None).unwrap();
        for g in mdp.states() {
            w.add_goal(g);
        }
        let report = check_mastery(&mdp, &w);
        assert_eq!(report.outcomes.len(), 104 * 103);
        assert!((0.0..=1.0).contains(&report.fraction()));
    }
}
