//! Gridworlds parsed from ASCII maps, and the canonical Four Rooms domain
//! with its task library.
//!
//! Free cells are numbered row-major: scanning rows top to bottom and
//! columns left to right, the k-th free cell is `StateId(k)`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, WvfError};
use crate::mdp::{ActionId, DeterministicMdp, StateId, TaskSpec};
use crate::scalar::Scalar;

/// The committed 13x13 Four Rooms map (`#` wall, `.` free).
pub const FOUR_ROOMS_MAP: &str = include_str!("../data/four_rooms.txt");

/// Reward for every movement action and for `Done` off the task's goals.
pub const STEP_REWARD: f64 = -0.1;
/// Reward for `Done` at one of the task's goal cells.
pub const GOAL_REWARD: f64 = 10.0;

pub const FOUR_ROOMS_FREE_CELLS: usize = 104;

/// Grid actions in their fixed index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GridAction {
    North,
    South,
    East,
    West,
    Done,
}

impl GridAction {
    pub const ALL: [GridAction; 5] = [
        GridAction::North,
        GridAction::South,
        GridAction::East,
        GridAction::West,
        GridAction::Done,
    ];
    pub const MOVES: [GridAction; 4] = [GridAction::North, GridAction::South, GridAction::East, GridAction::West];

    pub fn id(self) -> ActionId {
        ActionId(self as usize)
    }

    pub fn from_id(a: ActionId) -> Option<Self> {
        Self::ALL.get(a.0).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GridAction::North => "north",
            GridAction::South => "south",
            GridAction::East => "east",
            GridAction::West => "west",
            GridAction::Done => "done",
        }
    }

    /// Row/column offset; `Done` does not move.
    pub fn delta(self) -> (isize, isize) {
        match self {
            GridAction::North => (-1, 0),
            GridAction::South => (1, 0),
            GridAction::East => (0, 1),
            GridAction::West => (0, -1),
            GridAction::Done => (0, 0),
        }
    }
}

/// A rectangular grid of wall and free cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLayout {
    width: usize,
    height: usize,
    walls: Vec<bool>,
    cell_state: Vec<Option<StateId>>,
    state_cell: Vec<(usize, usize)>,
    hallways: Vec<StateId>,
}

/// The Four Rooms layout is an ordinary [`GridLayout`].
pub type FourRoomsLayout = GridLayout;

impl GridLayout {
    /// Parses `#`/`.` rows separated by `\n`. A single trailing newline is
    /// allowed; any other character is an error.
    pub fn parse(text: &str) -> Result<Self> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        let rows: Vec<&str> = body.split('\n').collect();
        let height = rows.len();
        let width = rows[0].len();
        if width == 0 {
            return Err(WvfError::Layout("empty layout".into()));
        }
        let mut walls = Vec::with_capacity(width * height);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(WvfError::Parse {
                    line: r + 1,
                    message: format!("expected {width} columns, found {}", row.len()),
                });
            }
            for (c, ch) in row.chars().enumerate() {
                walls.push(match ch {
                    '#' => true,
                    '.' => false,
                    other => {
                        return Err(WvfError::Parse {
                            line: r + 1,
                            message: format!("unexpected character {other:?} at column {}", c + 1),
                        })
                    }
                });
            }
        }
        let mut cell_state = vec![None; width * height];
        let mut state_cell = Vec::new();
        for (i, &wall) in walls.iter().enumerate() {
            if !wall {
                cell_state[i] = Some(StateId(state_cell.len()));
                state_cell.push((i / width, i % width));
            }
        }
        if state_cell.is_empty() {
            return Err(WvfError::Layout("layout has no free cells".into()));
        }
        let mut layout = Self {
            width,
            height,
            walls,
            cell_state,
            state_cell,
            hallways: Vec::new(),
        };
        layout.hallways = layout.find_hallways();
        Ok(layout)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_free(&self) -> usize {
        self.state_cell.len()
    }

    pub fn is_wall(&self, row: usize, col: usize) -> bool {
        row >= self.height || col >= self.width || self.walls[row * self.width + col]
    }

    /// State at `(row, col)`; `None` for walls and out-of-range cells.
    pub fn state_at(&self, row: usize, col: usize) -> Option<StateId> {
        if row >= self.height || col >= self.width {
            return None;
        }
        self.cell_state[row * self.width + col]
    }

    /// `(row, col)` of a state.
    pub fn cell(&self, s: StateId) -> (usize, usize) {
        self.state_cell[s.0]
    }

    /// Free cells flanked by walls on two opposite sides and free cells on
    /// the other two: the doorways between rooms.
    pub fn hallways(&self) -> &[StateId] {
        &self.hallways
    }

    fn neighbor(&self, s: StateId, action: GridAction) -> Option<StateId> {
        let (r, c) = self.cell(s);
        let (dr, dc) = action.delta();
        let nr = r.checked_add_signed(dr)?;
        let nc = c.checked_add_signed(dc)?;
        self.state_at(nr, nc)
    }

    fn find_hallways(&self) -> Vec<StateId> {
        (0..self.num_free())
            .map(StateId)
            .filter(|&s| {
                let free = |a| self.neighbor(s, a).is_some();
                let ns = free(GridAction::North) || free(GridAction::South);
                let ns_both = free(GridAction::North) && free(GridAction::South);
                let ew = free(GridAction::East) || free(GridAction::West);
                let ew_both = free(GridAction::East) && free(GridAction::West);
                (ns_both && !ew) || (ew_both && !ns)
            })
            .collect()
    }

    /// Number of free cells reachable from `s` by cardinal moves.
    pub fn reachable_count(&self, s: StateId) -> usize {
        let mut seen = vec![false; self.num_free()];
        let mut queue = VecDeque::from([s]);
        seen[s.0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for a in GridAction::MOVES {
                if let Some(v) = self.neighbor(u, a) {
                    if !seen[v.0] {
                        seen[v.0] = true;
                        count += 1;
                        queue.push_back(v);
                    }
                }
            }
        }
        count
    }

    /// Free cells of the lowest row that has any.
    pub fn bottom_row(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .rev()
            .map(|r| (0..self.width).filter(|&c| !self.is_wall(r, c)).map(|c| (r, c)).collect::<Vec<_>>())
            .find(|row| !row.is_empty())
            .unwrap_or_default()
    }
}

/// Gridworld MDP: moves shift one cell (blocked moves stay put) and `Done`
/// is terminal from every state, so every state is a potential goal.
/// Neighborhoods are the state plus its free cardinal neighbors.
pub fn build_gridworld<T: Scalar>(layout: &GridLayout, reward_bounds: (T, T)) -> Result<DeterministicMdp<T>> {
    let n = layout.num_free();
    let na = GridAction::ALL.len();
    let mut successors = Vec::with_capacity(n * na);
    let mut terminal = Vec::with_capacity(n * na);
    let mut neighborhoods = Vec::with_capacity(n);
    for s in (0..n).map(StateId) {
        let mut hood = vec![s];
        for action in GridAction::ALL {
            let next = match action {
                GridAction::Done => s,
                _ => layout.neighbor(s, action).unwrap_or(s),
            };
            if next != s {
                hood.push(next);
            }
            successors.push(next);
            terminal.push(action == GridAction::Done);
        }
        neighborhoods.push(hood);
    }
    DeterministicMdp::new(n, na, successors, terminal, reward_bounds, neighborhoods)
}

/// The canonical Four Rooms MDP with reward bounds `[-0.1, 10]`.
pub fn build_four_rooms<T: Scalar>() -> (DeterministicMdp<T>, FourRoomsLayout) {
    let layout = GridLayout::parse(FOUR_ROOMS_MAP).expect("committed Four Rooms map parses");
    assert_eq!((layout.height(), layout.width()), (13, 13));
    assert_eq!(layout.num_free(), FOUR_ROOMS_FREE_CELLS);
    assert_eq!(layout.hallways().len(), 4);
    let mdp = build_gridworld(&layout, (T::lit(STEP_REWARD), T::lit(GOAL_REWARD))).expect("Four Rooms MDP is well formed");
    (mdp, layout)
}

/// Builds a goal-reaching task: every action costs `STEP_REWARD`, and `Done`
/// at a goal cell yields `goal_reward` in total.
pub fn make_task_with_reward<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    layout: &GridLayout,
    name: &str,
    goal_cells: &[(usize, usize)],
    goal_reward: T,
) -> Result<TaskSpec<T>> {
    let background_value = T::lit(STEP_REWARD);
    let mut goal = vec![false; layout.num_free()];
    for &(r, c) in goal_cells {
        let s = layout
            .state_at(r, c)
            .ok_or_else(|| invalid(format!("goal cell ({r}, {c}) is a wall or outside the grid")))?;
        goal[s.0] = true;
    }
    let na = mdp.num_actions();
    let mut background = Vec::with_capacity(goal.len() * na);
    let mut terminal = Vec::with_capacity(goal.len() * na);
    for s in mdp.states() {
        for a in mdp.actions() {
            background.push(background_value);
            terminal.push(if mdp.is_terminal_transition(s, a) {
                Some(if goal[s.0] { goal_reward - background_value } else { T::zero() })
            } else {
                None
            });
        }
    }
    TaskSpec::new(mdp, name, background, terminal)
}

/// [`make_task_with_reward`] with the standard goal reward of 10.
pub fn make_task<T: Scalar>(
    mdp: &DeterministicMdp<T>,
    layout: &GridLayout,
    name: &str,
    goal_cells: &[(usize, usize)],
) -> Result<TaskSpec<T>> {
    make_task_with_reward(mdp, layout, name, goal_cells, T::lit(GOAL_REWARD))
}

/// Middle of the top-left room.
pub const TOP_LEFT_CENTER: (usize, usize) = (3, 3);
/// Middle of the bottom-right room.
pub const BOTTOM_RIGHT_CENTER: (usize, usize) = (9, 9);
/// One interior cell per room, used as dynamics probes.
pub const ROOM_CENTERS: [(usize, usize); 4] = [(3, 3), (3, 9), (9, 3), (9, 9)];
/// One corner cell per room, used as greedy-evaluation starts.
pub const ROOM_CORNERS: [(usize, usize); 4] = [(1, 1), (1, 11), (11, 1), (11, 11)];

pub const LIBRARY_TASKS: [&str; 3] = ["tl_br", "hallways", "bottom_row"];

/// Goal cells of a library task.
pub fn library_goal_cells(layout: &GridLayout, name: &str) -> Result<Vec<(usize, usize)>> {
    match name {
        "tl_br" => Ok(vec![TOP_LEFT_CENTER, BOTTOM_RIGHT_CENTER]),
        "hallways" => Ok(layout.hallways().iter().map(|&s| layout.cell(s)).collect()),
        "bottom_row" => Ok(layout.bottom_row()),
        "empty" => Ok(Vec::new()),
        other => Err(invalid(format!("unknown task {other:?}"))),
    }
}

pub fn library_task<T: Scalar>(mdp: &DeterministicMdp<T>, layout: &GridLayout, name: &str) -> Result<TaskSpec<T>> {
    make_task(mdp, layout, name, &library_goal_cells(layout, name)?)
}

/// States for a list of cells; errors on walls.
pub fn cells_to_states(layout: &GridLayout, cells: &[(usize, usize)]) -> Result<Vec<StateId>> {
    cells
        .iter()
        .map(|&(r, c)| layout.state_at(r, c).ok_or_else(|| invalid(format!("cell ({r}, {c}) is not free"))))
        .collect()
}

/// Task file contents:
///
/// ```toml
/// name = "hallways"
/// terminal_reward = 10.0
/// goals = [[3, 6], [6, 2], [7, 9], [10, 6]]
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub name: String,
    pub terminal_reward: f64,
    pub goals: Vec<(usize, usize)>,
}

impl TaskFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| WvfError::Parse {
            line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0),
            message: e.message().to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("task file serializes")
    }

    pub fn build<T: Scalar>(&self, mdp: &DeterministicMdp<T>, layout: &GridLayout) -> Result<TaskSpec<T>> {
        make_task_with_reward(mdp, layout, &self.name, &self.goals, T::lit(self.terminal_reward))
    }
}
