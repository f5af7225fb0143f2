//! Small environments used by the examples, tests and acceptance suite.

use super::{EnvModel, Reward};
use crate::error::{Error, Result};

/// Single-step K-armed bandit; arm `a` pays `arm_rewards[a]` ∈ [0, 1].
pub fn bandit(arm_rewards: &[f64]) -> Result<EnvModel> {
    let k = arm_rewards.len();
    EnvModel::new(
        1,
        k,
        1,
        vec![1.0; k],
        vec![1.0],
        Reward::Additive {
            table: arm_rewards.to_vec(),
        },
    )
}

fn chain_kernel(num_states: usize, horizon: usize, slip: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&slip) {
        return Err(Error::config(format!(
            "slip probability {slip} outside [0, 1]"
        )));
    }
    let n = num_states;
    let mut transitions = vec![0.0; horizon * n * 2 * n];
    for h in 0..horizon {
        for s in 0..n {
            let left = s.saturating_sub(1);
            let right = (s + 1).min(n - 1);
            // action 0 moves left, action 1 moves right; slip flips the move.
            for (a, (intended, slipped)) in [(left, right), (right, left)].into_iter().enumerate() {
                let row = &mut transitions[((h * n + s) * 2 + a) * n..][..n];
                row[intended] += 1.0 - slip;
                row[slipped] += slip;
            }
        }
    }
    Ok(transitions)
}

/// Chain of `num_states` cells with actions left (0) and right (1). The move
/// goes the opposite way with probability `slip`. Episodes start uniformly and
/// each step pays `(position + moved_right) / 2` with position normalized to
/// [0, 1].
pub fn chain(num_states: usize, horizon: usize, slip: f64) -> Result<EnvModel> {
    if num_states == 0 {
        return Err(Error::config("chain needs at least one state"));
    }
    let transitions = chain_kernel(num_states, horizon, slip)?;
    let span = (num_states.max(2) - 1) as f64;
    let mut table = Vec::with_capacity(horizon * num_states * 2);
    for _ in 0..horizon {
        for s in 0..num_states {
            for a in 0..2 {
                table.push(0.5 * (s as f64 / span) + 0.5 * a as f64);
            }
        }
    }
    EnvModel::new(
        num_states,
        2,
        horizon,
        transitions,
        vec![1.0 / num_states as f64; num_states],
        Reward::Additive { table },
    )
}

/// The chain dynamics scored by state coverage instead of per-step reward.
/// Episodes start in the leftmost cell.
pub fn coverage_chain(num_states: usize, horizon: usize, slip: f64) -> Result<EnvModel> {
    if num_states == 0 {
        return Err(Error::config("chain needs at least one state"));
    }
    let transitions = chain_kernel(num_states, horizon, slip)?;
    let mut initial = vec![0.0; num_states];
    initial[0] = 1.0;
    EnvModel::new(
        num_states,
        2,
        horizon,
        transitions,
        initial,
        Reward::Coverage,
    )
}

/// A 2×2 grid (cells `row * 2 + col`) with actions up, down, left, right.
/// After each move, wind pushes the agent one row up with probability `wind`.
/// Episodes start bottom-left (cell 2); the bottom-right cell (3) pays 1.
pub fn windy_grid(horizon: usize, wind: f64) -> Result<EnvModel> {
    if !(0.0..=1.0).contains(&wind) {
        return Err(Error::config(format!(
            "wind probability {wind} outside [0, 1]"
        )));
    }
    const GOAL: usize = 3;
    let moves: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    let step_to = |cell: usize, (dr, dc): (isize, isize)| -> usize {
        let r = (cell / 2) as isize + dr;
        let c = (cell % 2) as isize + dc;
        if (0..2).contains(&r) && (0..2).contains(&c) {
            (r * 2 + c) as usize
        } else {
            cell
        }
    };
    let mut transitions = vec![0.0; horizon * 4 * 4 * 4];
    let mut table = vec![0.0; horizon * 4 * 4];
    for h in 0..horizon {
        for s in 0..4 {
            for (a, &mv) in moves.iter().enumerate() {
                let landed = step_to(s, mv);
                let blown = step_to(landed, (-1, 0));
                let row = &mut transitions[((h * 4 + s) * 4 + a) * 4..][..4];
                row[landed] += 1.0 - wind;
                row[blown] += wind;
                table[(h * 4 + s) * 4 + a] = if s == GOAL { 1.0 } else { 0.0 };
            }
        }
    }
    EnvModel::new(
        4,
        4,
        horizon,
        transitions,
        vec![0.0, 0.0, 1.0, 0.0],
        Reward::Additive { table },
    )
}
