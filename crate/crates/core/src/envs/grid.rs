use serde::{Deserialize, Serialize};

use crate::space::{Cell, DiscreteSpaceMeta, GridAction, TransitionD};

/// Obstacle-free torus of side `grid_side` with deterministic moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridEnv {
    pub meta: DiscreteSpaceMeta,
    /// Steps per episode before the walker is re-dropped uniformly at random.
    /// `None` means one uninterrupted walk.
    pub episode_len: Option<usize>,
}

/// Steps per grid episode when none is given.
pub const DEFAULT_EPISODE_LEN: usize = 100;

impl GridEnv {
    pub fn new(meta: DiscreteSpaceMeta) -> Self {
        GridEnv {
            meta,
            episode_len: Some(DEFAULT_EPISODE_LEN),
        }
    }

    pub fn with_episode_len(mut self, episode_len: Option<usize>) -> Self {
        self.episode_len = episode_len;
        self
    }

    pub fn step(&self, s: Cell, a: GridAction) -> Cell {
        let (di, dj) = a.displacement();
        self.meta.wrap_add(s, di, dj)
    }

    /// Whether `t` is exactly what the simulator produces.
    pub fn replays(&self, t: &TransitionD) -> bool {
        self.step(t.s, t.a) == t.s_next
    }
}
