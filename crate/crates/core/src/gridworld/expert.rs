use rand::Rng as _;

use super::env::{Action, GridEnv};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// One demonstrated `(state, action index)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Demo {
    pub state: usize,
    pub action: usize,
}

/// Actions that move one step closer to the goal along some shortest path.
pub fn shortest_path_actions(env: &GridEnv, dist: &[Option<usize>], cell: usize) -> Vec<Action> {
    let Some(d) = dist[cell] else { return Vec::new() };
    if d == 0 {
        return Vec::new();
    }
    Action::ALL
        .iter()
        .copied()
        .filter(|&a| dist[env.target(cell, a)] == Some(d - 1))
        .collect()
}

/// Rolls out `n_episodes` shortest-path trajectories from the start cell,
/// sampling uniformly among tied actions.
pub fn generate_expert_demos(env: &GridEnv, n_episodes: usize, rng: &mut Rng) -> Result<Vec<Demo>> {
    let dist = env.distances_to_goal();
    if dist[env.start].is_none() {
        return Err(Error::Unsolvable);
    }
    let mut demos = Vec::new();
    for _ in 0..n_episodes {
        let mut cell = env.start;
        while cell != env.goal {
            let options = shortest_path_actions(env, &dist, cell);
            let action = options[rng.random_range(0..options.len())];
            demos.push(Demo { state: cell, action: action.index() });
            cell = env.target(cell, action);
        }
    }
    Ok(demos)
}
