use wvf_core::four_rooms::{build_four_rooms, cells_to_states, library_task, GridAction, GridLayout, ROOM_CORNERS};
use wvf_core::learning::{train_wvf_qlearning, LearnerConfig};
use wvf_core::oracle::solve_wvf_star;
use wvf_core::planning::{
    bellman_residual_mse, infer_model, infer_next_state, train_dyna_q_baseline, train_dyna_wvf, GateStats, PlannerConfig,
    RewardModel, WvfPlanner,
};
use wvf_core::{DeterministicMdp, StateId, TaskSpec, Wvf};

fn setup() -> (DeterministicMdp<f64>, GridLayout, TaskSpec<f64>, Wvf<f64>) {
    let (mdp, layout) = build_four_rooms::<f64>();
    let task = library_task(&mdp, &layout, "tl_br").unwrap();
    let rbar_min = Wvf::for_mdp(&mdp, None).unwrap().rbar_min();
    let wvf = solve_wvf_star(&mdp, &task, rbar_min, 1e-12).unwrap();
    (mdp, layout, task, wvf)
}

fn learner(layout: &GridLayout, episodes: usize, seed: u64) -> LearnerConfig {
    LearnerConfig {
        episodes,
        seed,
        eval_starts: cells_to_states(layout, &ROOM_CORNERS).unwrap(),
        ..LearnerConfig::default()
    }
}

#[test]
fn optimal_wvf_inverts_to_true_dynamics() {
    let (mdp, _, task, wvf) = setup();
    let config = PlannerConfig::default();
    let mut correct = 0;
    for s in mdp.states() {
        for a in mdp.actions() {
            let terminal = mdp.is_terminal_transition(s, a);
            let (next, mse) = infer_next_state(&wvf, &mdp, s, a, task.reward(s, a), terminal, &config);
            assert!(mse <= 1e-18, "{s} {a}: {mse}");
            assert!(mdp.neighborhood(s).contains(&next));
            if next == mdp.successor(s, a) {
                correct += 1;
            }
        }
    }
    assert_eq!(correct, 520);
}

#[test]
fn blocked_moves_predict_self_loops() {
    let (mdp, layout, task, wvf) = setup();
    let config = PlannerConfig::default();
    let corner = layout.state_at(1, 1).unwrap();
    for action in [GridAction::North, GridAction::West] {
        let a = action.id();
        assert_eq!(mdp.successor(corner, a), corner);
        let (next, _) = infer_next_state(&wvf, &mdp, corner, a, task.reward(corner, a), false, &config);
        assert_eq!(next, corner);
    }
}

#[test]
fn residual_separates_true_and_wrong_successors() {
    let (mdp, _, task, wvf) = setup();
    for s in mdp.states() {
        let hood = mdp.neighborhood(s);
        for a in mdp.actions().filter(|&a| !mdp.is_terminal_transition(s, a)) {
            let truth = mdp.successor(s, a);
            let r = task.reward(s, a);
            let at_truth = bellman_residual_mse(&wvf, s, a, truth, r, false, hood).unwrap();
            assert!(at_truth <= 1e-18);
            for &wrong in hood.iter().filter(|&&c| c != truth) {
                assert!(bellman_residual_mse(&wvf, s, a, wrong, r, false, hood).unwrap() > 0.0, "{s} {a} {wrong}");
            }
        }
    }
}

#[test]
fn full_state_candidates_also_invert_the_optimal_wvf() {
    let (mdp, _, task, wvf) = setup();
    let config = PlannerConfig {
        use_full_state_candidates: true,
        ..PlannerConfig::default()
    };
    let model = infer_model(&wvf, &mdp, RewardModel::from_task(&mdp, &task), &config);
    for s in mdp.states() {
        for a in mdp.actions().filter(|&a| !mdp.is_terminal_transition(s, a)) {
            assert_eq!(model.prediction(s, a).unwrap().successor, mdp.successor(s, a));
        }
    }
}

#[test]
fn learned_wvf_inference_is_reported_not_exact() {
    let (mdp, layout, task, _) = setup();
    let (wvf, _) = train_wvf_qlearning(&mdp, &task, &learner(&layout, 300, 5)).unwrap();
    let config = PlannerConfig {
        use_full_state_candidates: true,
        ..PlannerConfig::default()
    };
    let model = infer_model(&wvf, &mdp, RewardModel::from_task(&mdp, &task), &config);
    let mut predicted = 0;
    for s in mdp.states() {
        for a in mdp.actions() {
            let p = model.prediction(s, a).unwrap();
            assert!(p.residual_mse >= 0.0);
            predicted += 1;
        }
    }
    assert_eq!(predicted, 520);
}

#[test]
fn planning_leaves_the_optimal_wvf_unchanged() {
    let (mdp, _, task, optimal) = setup();
    let config = PlannerConfig::default();
    let mut planner = WvfPlanner::new(&mdp, &config, 0.1, 9);
    planner.observe_all(&task);
    let mut wvf = optimal.clone();
    let mut stats = GateStats::default();
    for _ in 0..2000 {
        planner.plan_step(&mut wvf, &mut stats);
    }
    assert_eq!(stats.rejected, 0);
    assert_eq!(stats.accepted, 2000);
    let bound = 0.1 * 1e-9 * stats.accepted as f64;
    for (x, y) in wvf.table().iter().zip(optimal.table()) {
        assert!((x - y).abs() <= bound);
    }
}

#[test]
fn gate_only_admits_low_residual_updates() {
    let (mdp, layout, task, _) = setup();
    let (mut wvf, _) = train_wvf_qlearning(&mdp, &task, &learner(&layout, 6000, 2)).unwrap();
    let config = PlannerConfig::default();
    let mut planner = WvfPlanner::new(&mdp, &config, 0.1, 4);
    planner.observe_all(&task);
    let mut accepted = 0;
    for _ in 0..3000 {
        let before = wvf.clone();
        let mut stats = GateStats::default();
        planner.plan_step(&mut wvf, &mut stats);
        if stats.accepted == 0 {
            assert_eq!(wvf, before);
            continue;
        }
        accepted += 1;
        let changed = before
            .table()
            .iter()
            .zip(wvf.table())
            .position(|(x, y)| x != y);
        let Some(i) = changed else { continue };
        let (s, a) = (StateId(i / (104 * 5)), wvf_core::ActionId(i % 5));
        let terminal = mdp.is_terminal_transition(s, a);
        let (_, mse) = infer_next_state(&before, &mdp, s, a, task.reward(s, a), terminal, &config);
        assert!(mse <= config.mse_threshold);
    }
    assert!(accepted > 0);
}

#[test]
fn early_planning_is_gated() {
    let (mdp, layout, task, _) = setup();
    let out = train_dyna_wvf(&mdp, &task, &learner(&layout, 10, 0), &PlannerConfig::default()).unwrap();
    assert_eq!(out.gate.len(), 10);
    let rejected: u64 = out.gate.iter().map(|g| g.rejected).sum();
    assert!(rejected > 0);
    assert!(out.records.windows(2).all(|w| w[0].env_steps < w[1].env_steps));
}

#[test]
fn dyna_q_reaches_the_optimal_return() {
    let (mdp, layout, task, _) = setup();
    let (_, records) = train_dyna_q_baseline(&mdp, &task, &learner(&layout, 2000, 1), &PlannerConfig::default()).unwrap();
    let last = records.last().unwrap().greedy_return;
    assert!((last - 9.3).abs() < 1e-9, "{last}");
}

#[test]
fn empty_goal_set_is_an_error() {
    let (_, _, _, wvf) = setup();
    assert!(bellman_residual_mse(&wvf, StateId(0), wvf_core::ActionId(0), StateId(0), 0.0, false, &[]).is_err());
}

#[test]
fn zero_planning_steps_is_plain_wvf_learning() {
    let (mdp, layout, task, _) = setup();
    let cfg = learner(&layout, 80, 5);
    let planner = PlannerConfig {
        planning_steps: 0,
        ..PlannerConfig::default()
    };
    let out = train_dyna_wvf(&mdp, &task, &cfg, &planner).unwrap();
    let (wvf, records) = train_wvf_qlearning(&mdp, &task, &cfg).unwrap();
    assert_eq!(out.records, records);
    assert!(out.wvf == wvf);
    assert!(out.gate.iter().all(|g| *g == GateStats::default()));
}
