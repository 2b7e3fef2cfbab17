use std::collections::BTreeSet;

use wvf_core::four_rooms::{build_four_rooms, cells_to_states, library_task, GridAction, GridLayout, LIBRARY_TASKS};
use wvf_core::mdp::{rollout, step};
use wvf_core::oracle::{
    check_mastery, reachable_goals, shortest_path_lengths, solve_exact, solve_q_star, solve_wvf_star, world_argmax_set,
};
use wvf_core::transfer::{transfer_policy, transfer_wvf, TerminalRewards};
use wvf_core::{ActionId, DeterministicMdp, StateId, TaskSpec, Wvf};

const TOL: f64 = 1e-12;

fn four_rooms() -> (DeterministicMdp<f64>, GridLayout) {
    build_four_rooms()
}

fn rbar_min(mdp: &DeterministicMdp<f64>) -> f64 {
    Wvf::for_mdp(mdp, None).unwrap().rbar_min()
}

fn optimal_wvf(mdp: &DeterministicMdp<f64>, task: &TaskSpec<f64>) -> Wvf<f64> {
    solve_wvf_star(mdp, task, rbar_min(mdp), TOL).unwrap()
}

/// Goal-reaching values straight from BFS distances: `d` moves at -0.1 each
/// followed by the terminal reward at `g`.
fn bfs_world_value(mdp: &DeterministicMdp<f64>, task: &TaskSpec<f64>, s: StateId, g: StateId) -> f64 {
    let d = shortest_path_lengths(mdp, s)[g.0].unwrap();
    -0.1 * d as f64 + task.reward(g, GridAction::Done.id())
}

#[test]
fn penalty_for_four_rooms() {
    let (mdp, _) = four_rooms();
    approx::assert_abs_diff_eq!(rbar_min(&mdp), -1050.4, epsilon = 1e-9);
}

#[test]
fn extended_reward_max_over_goals_is_task_reward() {
    let (mdp, layout) = four_rooms();
    for name in LIBRARY_TASKS {
        let task = library_task(&mdp, &layout, name).unwrap();
        let wvf = optimal_wvf(&mdp, &task);
        assert_eq!(wvf.goals().len(), 104);
        for s in mdp.states() {
            for a in mdp.actions() {
                let tr = step(&mdp, &task, s, a);
                assert_eq!(wvf.recover_task_reward(s, tr.reward, tr.terminal).unwrap(), tr.reward, "{name} {s} {a}");
            }
        }
    }
}

#[test]
fn max_over_goals_recovers_q_star() {
    let (mdp, layout) = four_rooms();
    for name in LIBRARY_TASKS {
        let task = library_task(&mdp, &layout, name).unwrap();
        let sol = solve_exact(&mdp, &task, rbar_min(&mdp), TOL).unwrap();
        assert!(sol.sup_norm_residual <= TOL);
        for s in mdp.states() {
            for a in mdp.actions() {
                let extracted = sol.wvf_star.extract_task_q(s, a).unwrap();
                assert!((extracted - sol.q_star.q(s, a)).abs() <= 1e-9, "{name} {s} {a}");
            }
        }
    }
}

#[test]
fn world_values_match_shortest_paths() {
    let (mdp, layout) = four_rooms();
    let task = library_task(&mdp, &layout, "tl_br").unwrap();
    let wvf = optimal_wvf(&mdp, &task);
    let done = GridAction::Done.id();
    for s in mdp.states() {
        for g in mdp.states() {
            approx::assert_abs_diff_eq!(wvf.value(s, g), bfs_world_value(&mdp, &task, s, g), epsilon = 1e-9);
            if s != g {
                assert_eq!(wvf.q(s, g, done), wvf.rbar_min());
            }
        }
    }
    for g in task.goal_states() {
        assert_eq!(wvf.q(g, g, done), 10.0);
    }
}

#[test]
fn optimal_wvf_has_mastery() {
    let (mdp, layout) = four_rooms();
    for name in LIBRARY_TASKS {
        let task = library_task(&mdp, &layout, name).unwrap();
        let report = check_mastery(&mdp, &optimal_wvf(&mdp, &task));
        assert_eq!(report.outcomes.len(), 104 * 103);
        assert_eq!(report.passed(), report.outcomes.len(), "{name}");
        assert_eq!(report.fraction(), 1.0);
        for o in &report.outcomes {
            let d = shortest_path_lengths(&mdp, o.start)[o.goal.0].unwrap();
            assert_eq!(o.steps, d + 1, "greedy world rollouts take shortest paths");
        }
    }
}

#[test]
fn every_cell_reaches_every_cell() {
    let (mdp, _) = four_rooms();
    let all: BTreeSet<_> = mdp.states().collect();
    for s in mdp.states() {
        assert_eq!(reachable_goals(&mdp, s), all);
    }
}

#[test]
fn world_policies_agree_across_tasks() {
    let (mdp, layout) = four_rooms();
    let wvfs: Vec<_> = LIBRARY_TASKS
        .iter()
        .map(|name| optimal_wvf(&mdp, &library_task(&mdp, &layout, name).unwrap()))
        .collect();
    for s in mdp.states() {
        for g in mdp.states().filter(|&g| g != s) {
            let reference = world_argmax_set(&wvfs[0], s, g, 0.0);
            assert!(!reference.is_empty());
            assert!(!reference.contains(&GridAction::Done.id()));
            for other in &wvfs[1..] {
                assert_eq!(world_argmax_set(other, s, g, 0.0), reference, "{s} -> {g}");
            }
        }
    }
}

#[test]
fn greedy_task_actions_head_for_the_goal() {
    let (mdp, layout) = four_rooms();
    let task = library_task(&mdp, &layout, "tl_br").unwrap();
    let wvf = optimal_wvf(&mdp, &task);
    let at = |r, c| layout.state_at(r, c).unwrap();
    assert_eq!(wvf.greedy_task_action(at(3, 2)).unwrap(), GridAction::East.id());
    assert_eq!(wvf.greedy_task_action(at(3, 3)).unwrap(), GridAction::Done.id());
    assert_eq!(wvf.greedy_task_action(at(9, 10)).unwrap(), GridAction::West.id());
    assert_eq!(wvf.greedy_task_action(at(9, 9)).unwrap(), GridAction::Done.id());
}

#[test]
fn transfer_matches_target_oracle() {
    let (mdp, layout) = four_rooms();
    let source_task = library_task(&mdp, &layout, "tl_br").unwrap();
    let source = optimal_wvf(&mdp, &source_task);
    for name in ["hallways", "bottom_row", "tl_br", "empty"] {
        let target = library_task(&mdp, &layout, name).unwrap();
        let oracle = optimal_wvf(&mdp, &target);
        let q_star = solve_q_star(&mdp, &target, TOL).unwrap();
        let est = transfer_wvf(&source, &TerminalRewards::from_task(&mdp, &target));
        assert_eq!(est.goals().len(), 104);
        for s in mdp.states() {
            for g in mdp.states() {
                let v = est.get(s, g).unwrap();
                assert!((v - oracle.value(s, g)).abs() <= 1e-6, "{name} {s} {g}");
            }
            approx::assert_abs_diff_eq!(est.task_value(s).unwrap(), q_star.value(s), epsilon = 1e-6);
            let ro = rollout(&mdp, &target, s, 1000, |x| transfer_policy(&source, &est, x));
            assert!(ro.terminated_at.is_some());
            assert!((ro.total_return - q_star.value(s)).abs() <= 1e-9, "{name} from {s}");
        }
    }
}

#[test]
fn transfer_to_partial_goal_set() {
    let (mdp, layout) = four_rooms();
    let source = optimal_wvf(&mdp, &library_task(&mdp, &layout, "tl_br").unwrap());
    let hallways = cells_to_states(&layout, &[(3, 6), (10, 6)]).unwrap();
    let done = GridAction::Done.id();
    let target = TerminalRewards::from_entries(104, 5, hallways.iter().map(|&g| (g, done, 5.0)));
    let est = transfer_wvf(&source, &target);
    assert_eq!(est.goals(), hallways.as_slice());
    let s = layout.state_at(1, 1).unwrap();
    let (g, v) = est.best_goal(s).unwrap();
    assert_eq!(g, hallways[0]);
    let d = shortest_path_lengths(&mdp, s)[g.0].unwrap();
    approx::assert_abs_diff_eq!(v, 5.0 - 0.1 * d as f64, epsilon = 1e-9);
    assert_ne!(transfer_policy(&source, &est, s), ActionId(done.0));
}

#[test]
fn f32_oracle_agrees_with_f64() {
    let (m32, layout) = build_four_rooms::<f32>();
    let (m64, _) = four_rooms();
    let t32 = library_task(&m32, &layout, "tl_br").unwrap();
    let t64 = library_task(&m64, &layout, "tl_br").unwrap();
    let q32 = solve_q_star(&m32, &t32, 1e-5).unwrap();
    let q64 = solve_q_star(&m64, &t64, TOL).unwrap();
    for s in m64.states() {
        for a in m64.actions() {
            assert!((q32.q(s, a) as f64 - q64.q(s, a)).abs() < 1e-4);
        }
    }
}
