//! Experiment runners behind each subcommand. Runs for different
//! `(agent, seed)` pairs execute on a rayon pool; all files are written
//! afterwards from the collected results, in a fixed order.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;

use wvf_core::four_rooms::{cells_to_states, library_task, GridAction};
use wvf_core::learning::{
    episodes_to_threshold, median_of, steps_to_threshold, train_flat_qlearning, train_wvf_qlearning, RunRecord,
};
use wvf_core::mdp::rollout;
use wvf_core::oracle::{check_mastery, optimal_eval_return, solve_exact, solve_q_star, solve_wvf_star, DEFAULT_TOLERANCE};
use wvf_core::planning::{infer_model, train_dyna_q_baseline, train_dyna_wvf, GateStats, InferredModel, RewardModel};
use wvf_core::snapshot::{load_wvf, save_q, save_wvf};
use wvf_core::transfer::{transfer_policy, transfer_wvf, TerminalRewards};
use wvf_core::{ActionId, QTable64, StateId, Wvf64};

use crate::config::{AgentKind, ExperimentConfig, ExperimentKind, World, WvfSource};
use crate::output::{csv_float, curves_by_agent, read_runs_csv, write_curve_csv, write_runs_csv, RunLog};
use crate::svg::{
    render_dynamics_map, render_learning_curves, render_rollout_trace, render_values_with_arrows, render_wvf_grid,
    Provenance, Series, WvfView,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Learn,
    Transfer,
    Plan,
    InferDynamics,
    Oracle,
    Render,
}

impl Command {
    fn accepts(self, kind: ExperimentKind) -> bool {
        match self {
            Command::Learn => matches!(kind, ExperimentKind::Learn | ExperimentKind::Dyna),
            Command::Transfer => kind == ExperimentKind::Transfer,
            Command::InferDynamics | Command::Plan => kind == ExperimentKind::InferDynamics,
            Command::Oracle | Command::Render => true,
        }
    }
}

/// Human-readable summary lines and the files written.
#[derive(Debug, Default)]
pub struct Report {
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Report {
    fn write(&mut self, path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path);
        Ok(())
    }
}

pub fn run(command: Command, config: &ExperimentConfig, jobs: usize) -> Result<Report> {
    if let Some(kind) = config.experiment {
        ensure!(command.accepts(kind), "experiment {kind:?} cannot be run by the {command:?} command");
    }
    fs::create_dir_all(&config.output_dir).with_context(|| format!("creating {}", config.output_dir.display()))?;
    match command {
        Command::Learn => learn(config, jobs),
        Command::Transfer => transfer(config),
        Command::Plan => dynamics(config, true),
        Command::InferDynamics => dynamics(config, false),
        Command::Oracle => oracle(config),
        Command::Render => render(config),
    }
}

/// Learning runs use every seed; other commands use only the first.
fn provenance(config: &ExperimentConfig, all_seeds: bool) -> Provenance {
    Provenance {
        config_hash: config.hash(),
        seeds: if all_seeds { config.seed_list() } else { vec![config.first_seed] },
    }
}

/// Final table of a training run.
#[derive(Clone, Debug)]
pub enum FinalTable {
    Wvf(Wvf64),
    Q(QTable64),
}

#[derive(Clone, Debug)]
pub struct AgentRun {
    pub agent: AgentKind,
    pub seed: u64,
    pub records: Vec<RunRecord>,
    /// Per-episode gate counters, for Dyna-WVF only.
    pub gate: Option<Vec<GateStats>>,
    /// Kept for the first seed only.
    pub table: Option<FinalTable>,
}

pub struct LearnOutcome {
    /// Optimal mean greedy return over the evaluation starts.
    pub target: f64,
    pub runs: Vec<AgentRun>,
}

impl LearnOutcome {
    pub fn runs_of(&self, agent: AgentKind) -> impl Iterator<Item = &AgentRun> {
        self.runs.iter().filter(move |r| r.agent == agent)
    }

    pub fn episodes_to_threshold(&self, agent: AgentKind, tolerance: f64) -> Vec<Option<usize>> {
        self.runs_of(agent).map(|r| episodes_to_threshold(&r.records, self.target, tolerance)).collect()
    }

    pub fn steps_to_threshold(&self, agent: AgentKind, tolerance: f64) -> Vec<Option<u64>> {
        self.runs_of(agent).map(|r| steps_to_threshold(&r.records, self.target, tolerance)).collect()
    }
}

pub fn run_agent(world: &World, config: &ExperimentConfig, agent: AgentKind, seed: u64, keep_table: bool) -> Result<AgentRun> {
    let learner = config.learner_config(&world.layout, seed)?;
    let (mdp, task) = (&world.mdp, &world.task);
    let (records, gate, table) = match agent {
        AgentKind::WvfQ => {
            let (w, r) = train_wvf_qlearning(mdp, task, &learner)?;
            (r, None, FinalTable::Wvf(w))
        }
        AgentKind::FlatQ => {
            let (q, r) = train_flat_qlearning(mdp, task, &learner)?;
            (r, None, FinalTable::Q(q))
        }
        AgentKind::DynaWvf => {
            let out = train_dyna_wvf(mdp, task, &learner, &config.planner)?;
            (out.records, Some(out.gate), FinalTable::Wvf(out.wvf))
        }
        AgentKind::DynaQ => {
            let (q, r) = train_dyna_q_baseline(mdp, task, &learner, &config.planner)?;
            (r, None, FinalTable::Q(q))
        }
    };
    Ok(AgentRun {
        agent,
        seed,
        records,
        gate,
        table: keep_table.then_some(table),
    })
}

/// Trains every configured agent on every seed, `jobs` runs at a time.
pub fn run_learning(config: &ExperimentConfig, jobs: usize) -> Result<LearnOutcome> {
    let world = config.world()?;
    let starts = cells_to_states(&world.layout, &config.learner.eval_starts)?;
    let q_star = solve_q_star(&world.mdp, &world.task, DEFAULT_TOLERANCE)?;
    let target = optimal_eval_return(&q_star, &starts);
    let work: Vec<(AgentKind, u64)> = config
        .agents
        .iter()
        .flat_map(|&a| config.seed_list().into_iter().map(move |s| (a, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let runs = pool.install(|| {
        work.par_iter()
            .map(|&(agent, seed)| run_agent(&world, config, agent, seed, seed == config.first_seed))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(LearnOutcome { target, runs })
}

fn learn(config: &ExperimentConfig, jobs: usize) -> Result<Report> {
    let outcome = run_learning(config, jobs)?;
    let mut report = Report::default();
    write_learning_artifacts(config, &outcome, &mut report)?;
    Ok(report)
}

fn write_learning_artifacts(config: &ExperimentConfig, outcome: &LearnOutcome, report: &mut Report) -> Result<()> {
    let dir = &config.output_dir;
    let world = config.world()?;
    let prov = provenance(config, true);
    let task_name = world.task.name().to_string();

    let runs_path = dir.join("runs.csv");
    let logs: Vec<RunLog<'_>> = outcome
        .runs
        .iter()
        .map(|r| RunLog {
            agent: r.agent.name(),
            task: &task_name,
            records: &r.records,
        })
        .collect();
    write_runs_csv(&runs_path, &logs)?;
    report.files.push(runs_path.clone());

    let rows = read_runs_csv(&runs_path)?;
    let curves = curves_by_agent(&rows);
    for (agent, curve) in &curves {
        let path = dir.join(format!("curve_{agent}.csv"));
        write_curve_csv(&path, curve)?;
        report.files.push(path);
    }
    let by_steps = config.experiment == Some(ExperimentKind::Dyna);
    let series: Vec<Series<'_>> = curves
        .iter()
        .map(|(agent, curve)| Series {
            name: agent,
            points: curve
                .iter()
                .map(|p| (if by_steps { p.env_steps_mean } else { p.episode as f64 }, p.return_mean, p.return_std))
                .collect(),
        })
        .collect();
    let x_label = if by_steps { "environment steps (mean over seeds)" } else { "episode" };
    report.write(dir.join("learning_curves.svg"), render_learning_curves(&series, x_label, &prov))?;

    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record([
        "agent",
        "seeds",
        "target_return",
        "tolerance",
        "settled_seeds",
        "median_episodes_to_threshold",
        "median_env_steps_to_threshold",
    ])?;
    for &agent in &config.agents {
        let episodes = outcome.episodes_to_threshold(agent, config.tolerance);
        let steps = outcome.steps_to_threshold(agent, config.tolerance);
        let settled = episodes.iter().filter(|e| e.is_some()).count();
        let med_e = median_of(&episodes).map_or(String::new(), |v| v.to_string());
        let med_s = median_of(&steps).map_or(String::new(), |v| v.to_string());
        report.lines.push(format!(
            "{}: settled {settled}/{} seeds, median episodes {}, median env steps {}",
            agent.name(),
            episodes.len(),
            if med_e.is_empty() { "n/a" } else { &med_e },
            if med_s.is_empty() { "n/a" } else { &med_s },
        ));
        summary.write_record([
            agent.name().to_string(),
            episodes.len().to_string(),
            csv_float(outcome.target),
            csv_float(config.tolerance),
            settled.to_string(),
            med_e,
            med_s,
        ])?;
    }
    report.write(dir.join("summary.csv"), summary.into_inner()?)?;

    let gates: Vec<&AgentRun> = outcome.runs.iter().filter(|r| r.gate.is_some()).collect();
    if !gates.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["agent", "seed", "episode", "accepted", "rejected", "skipped"])?;
        for run in gates {
            for (episode, g) in run.gate.as_ref().expect("filtered").iter().enumerate() {
                w.write_record([
                    run.agent.name().to_string(),
                    run.seed.to_string(),
                    episode.to_string(),
                    g.accepted.to_string(),
                    g.rejected.to_string(),
                    g.skipped.to_string(),
                ])?;
            }
        }
        report.write(dir.join("gate.csv"), w.into_inner()?)?;
    }

    for run in outcome.runs.iter().filter(|r| r.table.is_some()) {
        let stem = format!("{}_seed{}", run.agent.name(), run.seed);
        match run.table.as_ref().expect("filtered") {
            FinalTable::Wvf(w) => {
                let path = dir.join(format!("{stem}.wvf"));
                save_wvf(w, &path)?;
                report.files.push(path);
                if !w.goals().is_empty() {
                    report.write(dir.join(format!("{stem}_grid.svg")), render_wvf_grid(w, &world.layout, WvfView::Grid, &prov)?)?;
                    report.write(dir.join(format!("{stem}_task.svg")), render_wvf_grid(w, &world.layout, WvfView::Task, &prov)?)?;
                }
            }
            FinalTable::Q(q) => {
                let path = dir.join(format!("{stem}.q"));
                save_q(q, &path)?;
                report.files.push(path);
            }
        }
    }
    Ok(())
}

/// A WVF for the configured task from the requested source.
pub fn source_wvf(config: &ExperimentConfig, world: &World, source: WvfSource, snapshot: Option<&Path>) -> Result<Wvf64> {
    let wvf = match source {
        WvfSource::Oracle => {
            let rbar_min = Wvf64::for_mdp(&world.mdp, config.learner.horizon)?.rbar_min();
            solve_wvf_star(&world.mdp, &world.task, rbar_min, DEFAULT_TOLERANCE)?
        }
        WvfSource::Learned => {
            let learner = config.learner_config(&world.layout, config.first_seed)?;
            train_wvf_qlearning(&world.mdp, &world.task, &learner)?.0
        }
        WvfSource::Snapshot => {
            let path = snapshot.context("a snapshot path is required for source = \"snapshot\"")?;
            load_wvf(path).with_context(|| format!("loading {}", path.display()))?
        }
    };
    ensure!(
        wvf.num_states() == world.mdp.num_states() && wvf.num_actions() == world.mdp.num_actions(),
        "WVF shape {}x{} does not match the environment {}x{}",
        wvf.num_states(),
        wvf.num_actions(),
        world.mdp.num_states(),
        world.mdp.num_actions()
    );
    Ok(wvf)
}

fn transfer(config: &ExperimentConfig) -> Result<Report> {
    let world = config.world()?;
    let prov = provenance(config, false);
    let source = source_wvf(config, &world, config.transfer.source, config.transfer.snapshot.as_deref())?;
    let mut report = Report::default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["target", "state", "row", "col", "estimated_value", "transferred_return", "optimal_return"])?;
    for name in &config.transfer.targets {
        let target = library_task(&world.mdp, &world.layout, name)?;
        let est = transfer_wvf(&source, &TerminalRewards::from_task(&world.mdp, &target));
        let q_star = solve_q_star(&world.mdp, &target, DEFAULT_TOLERANCE)?;
        let mut values = Vec::new();
        let mut actions = Vec::new();
        let mut optimal_starts = 0;
        for s in world.mdp.states() {
            let estimate = est.task_value(s).context("target task has no terminal rewards")?;
            let ro = rollout(&world.mdp, &target, s, config.learner.max_steps, |x| transfer_policy(&source, &est, x));
            let optimal = q_star.value(s);
            if (ro.total_return - optimal).abs() <= 1e-6 {
                optimal_starts += 1;
            }
            let (row, col) = world.layout.cell(s);
            w.write_record([
                name.clone(),
                s.0.to_string(),
                row.to_string(),
                col.to_string(),
                csv_float(estimate),
                csv_float(ro.total_return),
                csv_float(optimal),
            ])?;
            values.push(estimate);
            actions.push(transfer_policy(&source, &est, s));
        }
        report.lines.push(format!(
            "{name}: transferred policy optimal from {optimal_starts}/{} start states",
            world.mdp.num_states()
        ));
        let title = format!("zero-shot transfer to {name}");
        report.write(
            config.output_dir.join(format!("transfer_{name}.svg")),
            render_values_with_arrows(&world.layout, &values, &actions, &title, &prov),
        )?;
    }
    report.write(config.output_dir.join("transfer.csv"), w.into_inner()?)?;
    Ok(report)
}

/// Successor predictions for every `(s, a)` with the task's rewards.
pub fn inferred_model(config: &ExperimentConfig, world: &World, wvf: &Wvf64) -> InferredModel<f64> {
    infer_model(wvf, &world.mdp, RewardModel::from_task(&world.mdp, &world.task), &config.planner)
}

/// Follows the greedy task policy through the inferred model.
pub fn imagined_rollout(wvf: &Wvf64, model: &InferredModel<f64>, start: StateId, steps: usize) -> Result<Vec<StateId>> {
    let mut trace = vec![start];
    let mut s = start;
    for _ in 0..steps {
        let a = wvf.greedy_task_action(s)?;
        let Some((_, terminal)) = model.reward_table.get(s, a) else { break };
        if terminal {
            break;
        }
        let Some(p) = model.prediction(s, a) else { break };
        s = p.successor;
        trace.push(s);
    }
    Ok(trace)
}

fn dynamics(config: &ExperimentConfig, from_snapshot: bool) -> Result<Report> {
    let world = config.world()?;
    let prov = provenance(config, false);
    let source = if from_snapshot { WvfSource::Snapshot } else { config.dynamics.source };
    if from_snapshot && config.dynamics.snapshot.is_none() {
        bail!("plan needs dynamics.snapshot");
    }
    let wvf = source_wvf(config, &world, source, config.dynamics.snapshot.as_deref())?;
    ensure!(!wvf.goals().is_empty(), "the WVF has no discovered goals");
    let model = inferred_model(config, &world, &wvf);
    let mut report = Report::default();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["s", "a", "predicted", "true", "mse", "correct"])?;
    let (mut correct, mut total) = (0, 0);
    for s in world.mdp.states() {
        for a in world.mdp.actions() {
            let p = model.prediction(s, a).expect("every reward is known");
            let truth = world.mdp.successor(s, a);
            let ok = p.successor == truth;
            total += 1;
            correct += usize::from(ok);
            w.write_record([
                s.0.to_string(),
                action_name(a),
                p.successor.0.to_string(),
                truth.0.to_string(),
                csv_float(p.residual_mse),
                ok.to_string(),
            ])?;
        }
    }
    report.write(config.output_dir.join("dynamics.csv"), w.into_inner()?)?;
    let mode = if config.planner.use_full_state_candidates { "all states" } else { "neighborhood" };
    report.lines.push(format!("{correct}/{total} successors predicted correctly ({mode} candidates)"));

    let probes = cells_to_states(&world.layout, &config.dynamics.probes)?;
    report.write(
        config.output_dir.join("dynamics.svg"),
        render_dynamics_map(&model, &world.mdp, &world.layout, &probes, &prov),
    )?;
    let all: Vec<StateId> = world.mdp.states().collect();
    report.write(
        config.output_dir.join("dynamics_all.svg"),
        render_dynamics_map(&model, &world.mdp, &world.layout, &all, &prov),
    )?;
    let start = cells_to_states(&world.layout, &[config.dynamics.rollout_start])?[0];
    let trace = imagined_rollout(&wvf, &model, start, config.dynamics.rollout_steps)?;
    let values: Vec<f64> = world.mdp.states().map(|s| wvf.task_value(s)).collect::<wvf_core::Result<_>>()?;
    report.write(config.output_dir.join("rollout.svg"), render_rollout_trace(&world.layout, &trace, &values, &prov))?;
    Ok(report)
}

fn action_name(a: ActionId) -> String {
    GridAction::from_id(a).map_or_else(|| a.0.to_string(), |g| g.name().to_string())
}

fn oracle(config: &ExperimentConfig) -> Result<Report> {
    let world = config.world()?;
    let rbar_min = Wvf64::for_mdp(&world.mdp, config.learner.horizon)?.rbar_min();
    let sol = solve_exact(&world.mdp, &world.task, rbar_min, DEFAULT_TOLERANCE)?;
    let name = world.task.name();
    let mut report = Report::default();
    let q_path = config.output_dir.join(format!("q_star_{name}.q"));
    save_q(&sol.q_star, &q_path)?;
    report.files.push(q_path);
    let w_path = config.output_dir.join(format!("wvf_star_{name}.wvf"));
    save_wvf(&sol.wvf_star, &w_path)?;
    report.files.push(w_path);
    let mastery = check_mastery(&world.mdp, &sol.wvf_star);
    report.lines.push(format!(
        "{name}: value iteration converged in {} sweeps (residual {:e}); mastery {}/{}",
        sol.iterations,
        sol.sup_norm_residual,
        mastery.passed(),
        mastery.outcomes.len()
    ));
    Ok(report)
}

fn render(config: &ExperimentConfig) -> Result<Report> {
    let world = config.world()?;
    let prov = provenance(config, false);
    let wvf = source_wvf(config, &world, config.render.source, config.render.snapshot.as_deref())?;
    ensure!(!wvf.goals().is_empty(), "the WVF has no discovered goals");
    let goal = cells_to_states(&world.layout, &[config.render.closeup_goal])?[0];
    let mut report = Report::default();
    for (file, view) in [("wvf_grid.svg", WvfView::Grid), ("wvf_closeup.svg", WvfView::Closeup(goal)), ("wvf_task.svg", WvfView::Task)] {
        report.write(config.output_dir.join(file), render_wvf_grid(&wvf, &world.layout, view, &prov)?)?;
    }
    Ok(report)
}
