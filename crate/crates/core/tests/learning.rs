use wvf_core::four_rooms::{build_four_rooms, cells_to_states, library_task, GridAction, GridLayout, ROOM_CORNERS};
use wvf_core::learning::{
    episodes_to_threshold, evaluate_q, evaluate_wvf, median_of, settling_index, steps_to_threshold, train_flat_qlearning,
    train_wvf_qlearning, LearnerConfig, RunRecord,
};
use wvf_core::mdp::rollout;
use wvf_core::oracle::{check_mastery, optimal_eval_return, solve_q_star};
use wvf_core::{DeterministicMdp, TaskSpec};

fn setup() -> (DeterministicMdp<f64>, GridLayout, TaskSpec<f64>) {
    let (mdp, layout) = build_four_rooms::<f64>();
    let task = library_task(&mdp, &layout, "tl_br").unwrap();
    (mdp, layout, task)
}

fn config(layout: &GridLayout, episodes: usize, seed: u64) -> LearnerConfig {
    LearnerConfig {
        episodes,
        seed,
        eval_starts: cells_to_states(layout, &ROOM_CORNERS).unwrap(),
        ..LearnerConfig::default()
    }
}

#[test]
fn same_seed_same_run() {
    let (mdp, layout, task) = setup();
    let cfg = config(&layout, 200, 17);
    let (w1, r1) = train_wvf_qlearning(&mdp, &task, &cfg).unwrap();
    let (w2, r2) = train_wvf_qlearning(&mdp, &task, &cfg).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(w1, w2);
    let (q1, f1) = train_flat_qlearning(&mdp, &task, &cfg).unwrap();
    let (q2, f2) = train_flat_qlearning(&mdp, &task, &cfg).unwrap();
    assert_eq!((q1, f1), (q2, f2));
    let (_, other) = train_wvf_qlearning(&mdp, &task, &config(&layout, 200, 18)).unwrap();
    assert_ne!(r1, other);
}

#[test]
fn records_are_well_formed() {
    let (mdp, layout, task) = setup();
    let (_, records) = train_wvf_qlearning(&mdp, &task, &config(&layout, 50, 3)).unwrap();
    assert_eq!(records.len(), 50);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r.episode, i);
        assert_eq!(r.seed, 3);
    }
    assert!(records.windows(2).all(|w| w[0].env_steps < w[1].env_steps));
}

#[test]
fn buffer_only_grows() {
    let (mdp, layout, task) = setup();
    let mut previous: Vec<_> = Vec::new();
    for episodes in [1, 5, 20, 80, 300] {
        let (wvf, _) = train_wvf_qlearning(&mdp, &task, &config(&layout, episodes, 4)).unwrap();
        let goals = wvf.goals().as_slice().to_vec();
        assert_eq!(&goals[..previous.len()], previous.as_slice());
        previous = goals;
    }
}

#[test]
fn single_terminal_transition_discovers_one_goal() {
    let (mdp, layout, task) = setup();
    let cfg = LearnerConfig {
        epsilon: 1.0,
        ..config(&layout, 1, 12)
    };
    let (wvf, records) = train_wvf_qlearning(&mdp, &task, &cfg).unwrap();
    assert!(records[0].env_steps < cfg.max_steps as u64);
    assert_eq!(wvf.goals().len(), 1);
    let g = wvf.goals().as_slice()[0];
    let done = GridAction::Done.id();
    assert_eq!(wvf.q(g, g, done), 0.1 * task.reward(g, done));
}

#[test]
fn learned_values_stay_bounded() {
    let (mdp, layout, task) = setup();
    let cfg = config(&layout, 400, 8);
    let (wvf, _) = train_wvf_qlearning(&mdp, &task, &cfg).unwrap();
    let (lo, hi) = mdp.reward_bounds();
    let steps = cfg.max_steps as f64;
    let floor = wvf.rbar_min() + lo * steps;
    let ceiling = hi * steps;
    assert!(wvf.table().iter().all(|&v| v >= floor && v <= ceiling));
}

#[test]
fn settling_requires_holding_the_threshold() {
    let rec = |episode: usize, greedy_return: f64| RunRecord {
        seed: 0,
        episode,
        env_steps: 10 * (episode as u64 + 1),
        greedy_return,
    };
    let records = vec![rec(0, 1.0), rec(1, 9.5), rec(2, 2.0), rec(3, 9.0), rec(4, 9.4)];
    assert_eq!(settling_index(&records, 9.3, 0.5), Some(3));
    assert_eq!(episodes_to_threshold(&records, 9.3, 0.5), Some(4));
    assert_eq!(steps_to_threshold(&records, 9.3, 0.5), Some(40));
    assert_eq!(settling_index(&records[..3], 9.3, 0.5), None);
    assert_eq!(median_of(&[Some(3), None, Some(1)]), Some(3));
    assert_eq!(median_of(&[Some(3), None, None]), None);
    assert_eq!(median_of::<u64>(&[]), None);
}

#[test]
fn converged_wvf_masters_the_domain() {
    let (mdp, layout, task) = setup();
    let cfg = config(&layout, 12_000, 0);
    let (wvf, records) = train_wvf_qlearning(&mdp, &task, &cfg).unwrap();
    let q_star = solve_q_star(&mdp, &task, 1e-12).unwrap();
    let target = optimal_eval_return(&q_star, &cfg.eval_starts);
    assert!(episodes_to_threshold(&records, target, 0.5).is_some());
    assert_eq!(wvf.goals().len(), 104);
    let report = check_mastery(&mdp, &wvf);
    assert!(report.fraction() >= 0.99, "mastery {}", report.fraction());

    let done = GridAction::Done.id();
    for s in mdp.states() {
        for g in mdp.states().filter(|&g| g != s) {
            let best_move = GridAction::MOVES.iter().map(|m| wvf.q(s, g, m.id())).fold(f64::NEG_INFINITY, f64::max);
            assert!(wvf.q(s, g, done) < best_move, "{s} {g}");
        }
    }
    let all: Vec<_> = mdp.states().collect();
    let learned = evaluate_wvf(&mdp, &task, &wvf, &all, cfg.max_steps);
    let optimal = optimal_eval_return(&q_star, &all);
    assert!((learned - optimal).abs() < 1e-6);
}

#[test]
fn flat_learner_matches_optimal_values_on_its_greedy_paths() {
    let (mdp, layout, task) = setup();
    let cfg = config(&layout, 12_000, 1);
    let (q, records) = train_flat_qlearning(&mdp, &task, &cfg).unwrap();
    let q_star = solve_q_star(&mdp, &task, 1e-12).unwrap();
    let target = optimal_eval_return(&q_star, &cfg.eval_starts);
    assert!((records.last().unwrap().greedy_return - target).abs() < 1e-6);
    assert!((evaluate_q(&mdp, &task, &q, &cfg.eval_starts, cfg.max_steps) - target).abs() < 1e-6);
    for &s0 in &cfg.eval_starts {
        let path = rollout(&mdp, &task, s0, cfg.max_steps, |s| q.greedy_action(s));
        for s in path.states {
            let a = q.greedy_action(s);
            assert!((q.q(s, a) - q_star.q(s, a)).abs() <= 0.05, "{s}");
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let (mdp, layout, task) = setup();
    let good = config(&layout, 1, 0);
    for bad in [
        LearnerConfig { alpha: 0.0, ..good.clone() },
        LearnerConfig { alpha: 1.5, ..good.clone() },
        LearnerConfig { epsilon: -0.1, ..good.clone() },
        LearnerConfig { episodes: 0, ..good.clone() },
        LearnerConfig { eval_starts: vec![], ..good.clone() },
    ] {
        assert!(train_wvf_qlearning(&mdp, &task, &bad).is_err());
        assert!(train_flat_qlearning(&mdp, &task, &bad).is_err());
    }
}
