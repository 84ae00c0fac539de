//! Window labeling of rollouts and the FIFO trajectory buffer.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TermdpError};
use crate::model::Trajectory;

/// The `(state, action)` pairs a terminator with memory `w` sees at one step, oldest
/// first, and whether it fired there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowExample {
    pub steps: Vec<(usize, usize)>,
    pub label: u8,
}

/// One example per realized step `l`: the last `min(w, l)` pairs, labeled 1 only at
/// the termination step. Unlike the likelihood dataset, the final step of an
/// unterminated rollout is kept as a negative.
pub fn split_windows(traj: &Trajectory, window: usize) -> Result<Vec<WindowExample>> {
    if window == 0 {
        return Err(TermdpError::invalid("window must be at least 1"));
    }
    if traj.is_empty() {
        return Err(TermdpError::invalid("cannot split an empty trajectory"));
    }
    if traj.actions.len() != traj.len() {
        return Err(TermdpError::invalid("trajectory has mismatched state and action counts"));
    }
    let len = traj.len();
    Ok((1..=len)
        .map(|l| {
            let first = l.saturating_sub(window);
            WindowExample {
                steps: (first..l).map(|t| (traj.states[t], traj.actions[t])).collect(),
                label: u8::from(traj.termination_time == Some(l)),
            }
        })
        .collect())
}

/// Holds the most recent `capacity` trajectories; the oldest is evicted first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Trajectory>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(TermdpError::invalid("buffer capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity),
        })
    }

    pub fn push(&mut self, traj: Trajectory) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(traj);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Trajectory> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> {
        self.items.iter()
    }
}
