//! Experiment configuration: TOML with dotted sections, plus command-line
//! overrides addressed by the same dotted key names.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use wvf_core::four_rooms::{
    build_four_rooms, build_gridworld, cells_to_states, library_goal_cells, library_task, GridLayout, TaskFile,
    GOAL_REWARD, ROOM_CENTERS, ROOM_CORNERS, STEP_REWARD, TOP_LEFT_CENTER,
};
use wvf_core::learning::LearnerConfig;
use wvf_core::planning::PlannerConfig;
use wvf_core::{Mdp64, Task64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Learn,
    Transfer,
    InferDynamics,
    Dyna,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    WvfQ,
    FlatQ,
    DynaWvf,
    DynaQ,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::WvfQ, AgentKind::FlatQ, AgentKind::DynaWvf, AgentKind::DynaQ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::WvfQ => "wvf_q",
            AgentKind::FlatQ => "flat_q",
            AgentKind::DynaWvf => "dyna_wvf",
            AgentKind::DynaQ => "dyna_q",
        }
    }

    pub fn learns_wvf(self) -> bool {
        matches!(self, AgentKind::WvfQ | AgentKind::DynaWvf)
    }
}

/// Where a world value function comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WvfSource {
    /// Exact solution for the configured task.
    Oracle,
    /// Q-learned on the configured task with the first seed.
    Learned,
    /// Loaded from a snapshot file.
    Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSection {
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub episodes: usize,
    pub max_steps: usize,
    /// Greedy-evaluation start cells as `[row, col]`.
    pub eval_starts: Vec<(usize, usize)>,
    pub horizon: Option<usize>,
}

impl Default for LearnerSection {
    fn default() -> Self {
        let d = LearnerConfig::default();
        Self {
            alpha: d.alpha,
            epsilon: d.epsilon,
            gamma: d.gamma,
            episodes: d.episodes,
            max_steps: d.max_steps,
            eval_starts: ROOM_CORNERS.to_vec(),
            horizon: d.horizon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    pub source: WvfSource,
    pub snapshot: Option<PathBuf>,
    pub targets: Vec<String>,
}

impl Default for TransferSection {
    fn default() -> Self {
        Self {
            source: WvfSource::Learned,
            snapshot: None,
            targets: vec!["hallways".into(), "bottom_row".into()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub source: WvfSource,
    pub snapshot: Option<PathBuf>,
    /// Cells whose predicted successors are drawn.
    pub probes: Vec<(usize, usize)>,
    /// Start cell of the imagined rollout.
    pub rollout_start: (usize, usize),
    pub rollout_steps: usize,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            source: WvfSource::Learned,
            snapshot: None,
            probes: ROOM_CENTERS.to_vec(),
            rollout_start: ROOM_CORNERS[0],
            rollout_steps: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub source: WvfSource,
    pub snapshot: Option<PathBuf>,
    /// Goal shown in the close-up view.
    pub closeup_goal: (usize, usize),
}

impl Default for RenderSection {
    fn default() -> Self {
        Self {
            source: WvfSource::Oracle,
            snapshot: None,
            closeup_goal: TOP_LEFT_CENTER,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    /// Library task name (`tl_br`, `hallways`, `bottom_row`, `empty`).
    pub task: String,
    /// Optional task file; replaces the library task when set.
    pub task_file: Option<PathBuf>,
    /// Optional ASCII map; the built-in Four Rooms map otherwise.
    pub layout: Option<PathBuf>,
    pub agents: Vec<AgentKind>,
    /// Number of seeds; runs use `first_seed .. first_seed + seeds`.
    pub seeds: usize,
    pub first_seed: u64,
    /// Distance below the optimal evaluation return still counted as solved.
    pub tolerance: f64,
    pub output_dir: PathBuf,
    pub learner: LearnerSection,
    pub planner: PlannerConfig,
    pub transfer: TransferSection,
    pub dynamics: DynamicsSection,
    pub render: RenderSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            task: "tl_br".into(),
            task_file: None,
            layout: None,
            agents: vec![AgentKind::WvfQ, AgentKind::FlatQ],
            seeds: 25,
            first_seed: 0,
            tolerance: 0.5,
            output_dir: PathBuf::from("out"),
            learner: LearnerSection::default(),
            planner: PlannerConfig::default(),
            transfer: TransferSection::default(),
            dynamics: DynamicsSection::default(),
            render: RenderSection::default(),
        }
    }
}

/// Environment built from a configuration.
pub struct World {
    pub mdp: Mdp64,
    pub layout: GridLayout,
    pub task: Task64,
}

impl ExperimentConfig {
    /// Parses TOML text and applies `key = value` overrides with dotted keys.
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        for (key, raw) in overrides {
            set_dotted(&mut table, key, parse_override(raw))?;
        }
        let config: Self = toml::Value::Table(table).try_into().context("invalid configuration")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml_with_overrides(&text, overrides).with_context(|| format!("in config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            bail!("seeds must be at least 1");
        }
        if self.agents.is_empty() {
            bail!("agents must not be empty");
        }
        if !(self.tolerance >= 0.0) {
            bail!("tolerance must be non-negative");
        }
        if self.task_file.is_none() {
            let (_, layout) = build_four_rooms::<f64>();
            library_goal_cells(&layout, &self.task)?;
        }
        self.planner.validate()?;
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|k| self.first_seed + k).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization, as lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn world(&self) -> Result<World> {
        let (mdp, layout) = match &self.layout {
            None => build_four_rooms::<f64>(),
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading layout {}", path.display()))?;
                let layout = GridLayout::parse(&text)?;
                (build_gridworld(&layout, (STEP_REWARD, GOAL_REWARD))?, layout)
            }
        };
        let task = match &self.task_file {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading task {}", path.display()))?;
                TaskFile::parse(&text)?.build(&mdp, &layout)?
            }
            None => library_task(&mdp, &layout, &self.task)?,
        };
        Ok(World { mdp, layout, task })
    }

    pub fn learner_config(&self, layout: &GridLayout, seed: u64) -> Result<LearnerConfig> {
        let l = &self.learner;
        let config = LearnerConfig {
            alpha: l.alpha,
            epsilon: l.epsilon,
            gamma: l.gamma,
            episodes: l.episodes,
            max_steps: l.max_steps,
            seed,
            eval_starts: cells_to_states(layout, &l.eval_starts)?,
            horizon: l.horizon,
        };
        config.validate()?;
        Ok(config)
    }
}

fn parse_override(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("single key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).with_context(|| format!("empty override key {key:?}"))?;
    let mut current = table;
    for part in parts {
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .with_context(|| format!("override {key:?}: {part:?} is not a section"))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

/// Top-level keys that may be overridden without a section prefix.
pub const TOP_LEVEL_KEYS: [&str; 9] = [
    "experiment",
    "task",
    "task_file",
    "layout",
    "agents",
    "seeds",
    "first_seed",
    "tolerance",
    "output_dir",
];

/// Splits `--a.b value` and `--a.b=value` arguments out of an argument list.
/// Any long flag whose name contains a dot or is a top-level config key is
/// treated as an override.
pub fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if !name.contains('.') && !TOP_LEVEL_KEYS.contains(&name.as_str()) {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => iter.next().with_context(|| format!("--{name} needs a value"))?,
        };
        overrides.push((name, value));
    }
    Ok((rest, overrides))
}
