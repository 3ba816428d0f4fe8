use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of discrete actions.
pub const N_ACTIONS: usize = 5;

/// Episode step cap.
pub const MAX_STEPS: usize = 100;

/// Discrete moves. `Stay` keeps the agent in place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Left,
    Right,
    Up,
    Down,
    Stay,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::Left, Action::Right, Action::Up, Action::Down, Action::Stay];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    fn delta(self) -> (i64, i64) {
        match self {
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Stay => (0, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Lava1,
    Lava2,
    Door,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Lava1, Variant::Lava2, Variant::Door];

    /// Layout fixture text.
    pub fn layout(self) -> &'static str {
        match self {
            Variant::Lava1 => include_str!("../../layouts/lava1.txt"),
            Variant::Lava2 => include_str!("../../layouts/lava2.txt"),
            Variant::Door => include_str!("../../layouts/door.txt"),
        }
    }

    /// Environment whose demonstrations guide this one. Lava 2 has no
    /// demonstrations of its own and borrows the Lava 1 imitation policy.
    pub fn demo_source(self) -> Variant {
        match self {
            Variant::Lava2 => Variant::Lava1,
            v => v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Lava1 => "lava1",
            Variant::Lava2 => "lava2",
            Variant::Door => "door",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lava1" => Ok(Variant::Lava1),
            "lava2" => Ok(Variant::Lava2),
            "door" => Ok(Variant::Door),
            other => Err(format!("unknown environment `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Free,
    Wall,
    Lava,
    Door,
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Running,
    Goal,
    Lava,
    Timeout,
}

/// Agent position plus elapsed steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeState {
    pub cell: usize,
    pub steps: usize,
}

/// Result of one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub next: EpisodeState,
    pub reward: f64,
    pub done: bool,
    pub outcome: Outcome,
}

/// A fully observable grid. States are cell indices `y * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEnv {
    pub width: usize,
    pub height: usize,
    cells: Vec<Cell>,
    pub start: usize,
    pub goal: usize,
    pub max_steps: usize,
}

impl GridEnv {
    /// Parses a text grid. Lines starting with `;` or `# ` (hash then space)
    /// are comments; every other nonblank line is a row.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows: Vec<(usize, &str)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with(';') || line.starts_with("# ") {
                continue;
            }
            rows.push((i + 1, line));
        }
        if rows.is_empty() {
            return Err(Error::Layout { line: 0, reason: "no rows".into() });
        }
        let width = rows[0].1.chars().count();
        let mut cells = Vec::with_capacity(width * rows.len());
        let (mut start, mut goal) = (None, None);
        for (y, (line_no, row)) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Layout {
                    line: *line_no,
                    reason: format!("row width {} differs from {width}", row.chars().count()),
                });
            }
            for (x, ch) in row.chars().enumerate() {
                let idx = y * width + x;
                let cell = match ch {
                    '#' => Cell::Wall,
                    'L' => Cell::Lava,
                    'D' => Cell::Door,
                    '.' => Cell::Free,
                    'S' => {
                        if start.replace(idx).is_some() {
                            return Err(Error::Layout { line: *line_no, reason: "second start".into() });
                        }
                        Cell::Free
                    }
                    'G' => {
                        if goal.replace(idx).is_some() {
                            return Err(Error::Layout { line: *line_no, reason: "second goal".into() });
                        }
                        Cell::Free
                    }
                    other => {
                        return Err(Error::Layout {
                            line: *line_no,
                            reason: format!("unknown cell `{other}`"),
                        })
                    }
                };
                cells.push(cell);
            }
        }
        let start = start.ok_or(Error::Layout { line: 0, reason: "missing start".into() })?;
        let goal = goal.ok_or(Error::Layout { line: 0, reason: "missing goal".into() })?;
        let env = Self {
            width,
            height: rows.len(),
            cells,
            start,
            goal,
            max_steps: MAX_STEPS,
        };
        if env.distances_to_goal()[start].is_none() {
            return Err(Error::Unsolvable);
        }
        Ok(env)
    }

    pub fn variant(v: Variant) -> Self {
        Self::parse(v.layout()).expect("bundled layouts are valid")
    }

    pub fn n_states(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, idx: usize) -> Cell {
        self.cells[idx]
    }

    pub fn xy(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    pub fn passable(&self, idx: usize) -> bool {
        !matches!(self.cells[idx], Cell::Wall)
    }

    pub fn manhattan(&self, a: usize, b: usize) -> usize {
        let (ax, ay) = self.xy(a);
        let (bx, by) = self.xy(b);
        ax.abs_diff(bx) + ay.abs_diff(by)
    }

    /// Cell reached by `action`; walls and the border block movement.
    pub fn target(&self, cell: usize, action: Action) -> usize {
        let (x, y) = self.xy(cell);
        let (dx, dy) = action.delta();
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            return cell;
        }
        let next = ny as usize * self.width + nx as usize;
        if self.passable(next) {
            next
        } else {
            cell
        }
    }

    pub fn reset(&self) -> EpisodeState {
        EpisodeState { cell: self.start, steps: 0 }
    }

    /// One transition. Lava ends the episode with -1; the goal pays
    /// `10 - 9 * steps / max_steps`; any other step pays the negative
    /// Manhattan distance to the goal over `max_steps`.
    pub fn step(&self, state: EpisodeState, action: Action) -> StepResult {
        let next_cell = self.target(state.cell, action);
        let steps = state.steps + 1;
        let next = EpisodeState { cell: next_cell, steps };
        let max = self.max_steps as f64;
        if self.cells[next_cell] == Cell::Lava {
            return StepResult { next, reward: -1.0, done: true, outcome: Outcome::Lava };
        }
        if next_cell == self.goal {
            return StepResult {
                next,
                reward: 10.0 - 9.0 * steps as f64 / max,
                done: true,
                outcome: Outcome::Goal,
            };
        }
        let reward = -(self.manhattan(next_cell, self.goal) as f64) / max;
        let timeout = steps >= self.max_steps;
        StepResult {
            next,
            reward,
            done: timeout,
            outcome: if timeout { Outcome::Timeout } else { Outcome::Running },
        }
    }

    /// Breadth-first distance to the goal through passable, non-lava cells.
    pub fn distances_to_goal(&self) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.cells.len()];
        dist[self.goal] = Some(0);
        let mut queue = VecDeque::from([self.goal]);
        while let Some(c) = queue.pop_front() {
            let d = dist[c].expect("queued cells have a distance");
            for a in &Action::ALL[..4] {
                // moves are symmetric, so predecessors are the targets of c
                let n = self.target(c, *a);
                if n != c && dist[n].is_none() && self.cells[n] != Cell::Lava {
                    dist[n] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Passable, non-lava, non-goal cells.
    pub fn open_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.cells.len()).filter(|&i| self.passable(i) && self.cells[i] != Cell::Lava && i != self.goal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> GridEnv {
        GridEnv::parse("#####\n#S.G#\n#####\n").unwrap()
    }

    #[test]
    fn bundled_layouts_parse() {
        for v in Variant::ALL {
            let env = GridEnv::variant(v);
            assert_eq!((env.width, env.height), (10, 10));
            assert!(env.distances_to_goal()[env.start].is_some());
        }
    }

    #[test]
    fn goal_reward_at_step_twenty() {
        let env = corridor();
        let r = env.step(EpisodeState { cell: env.goal - 1, steps: 19 }, Action::Right);
        assert!(r.done);
        assert_eq!(r.outcome, Outcome::Goal);
        assert!((r.reward - 8.2).abs() < 1e-12);
    }

    #[test]
    fn lava_ends_episode() {
        let env = GridEnv::parse("#####\n#SLG#\n#####\n").unwrap_err();
        assert_eq!(env, Error::Unsolvable);
        let env = GridEnv::parse("#####\n#S.G#\n#.L.#\n#####\n").unwrap();
        let r = env.step(env.reset(), Action::Down);
        let r = env.step(r.next, Action::Right);
        assert_eq!((r.reward, r.done, r.outcome), (-1.0, true, Outcome::Lava));
    }

    #[test]
    fn shaping_reward_is_scaled_distance() {
        let env = GridEnv::variant(Variant::Lava1);
        // (8, 2) -> (8, 3), five cells above the goal at (8, 8)
        let from = 2 * 10 + 8;
        let r = env.step(EpisodeState { cell: from, steps: 0 }, Action::Down);
        assert_eq!(env.manhattan(r.next.cell, env.goal), 5);
        assert!((r.reward + 0.05).abs() < 1e-12);
        assert!(!r.done);
    }

    #[test]
    fn walls_block_and_timeout_ends() {
        let env = corridor();
        let s = env.reset();
        assert_eq!(env.step(s, Action::Up).next.cell, s.cell);
        assert_eq!(env.step(s, Action::Left).next.cell, s.cell);
        let r = env.step(EpisodeState { cell: s.cell, steps: 99 }, Action::Stay);
        assert_eq!((r.done, r.outcome), (true, Outcome::Timeout));
    }

    #[test]
    fn layout_errors_name_the_line() {
        match GridEnv::parse("###\n#S.G#\n") {
            Err(Error::Layout { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(GridEnv::parse("#S.x#").is_err());
        assert!(GridEnv::parse("#S..#").is_err());
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
    }
}
