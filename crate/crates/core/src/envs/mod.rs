//! Deterministic simulators and uniform-random-policy batch collection.

mod acrobot;
mod cartpole;
mod grid;

pub use acrobot::AcrobotEnv;
pub use cartpole::CartPoleEnv;
pub use grid::{GridEnv, DEFAULT_EPISODE_LEN};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, tag, Rng};
use crate::space::{
    AnyBatch, Batch, Cell, ContinuousBatch, ContinuousSpaceMeta, DiscreteBatch,
    DiscreteSpaceMeta, EnvKind, GridAction, TransitionC, TransitionD,
};

/// Grid side used when none is given.
pub const DEFAULT_GRID_SIDE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Env {
    Grid(GridEnv),
    CartPole(CartPoleEnv),
    Acrobot(AcrobotEnv),
}

impl Env {
    pub fn new(kind: EnvKind, grid_side: usize) -> Result<Self> {
        Ok(match kind {
            EnvKind::Grid => Env::Grid(GridEnv::new(DiscreteSpaceMeta::new(grid_side)?)),
            EnvKind::CartPole => Env::CartPole(CartPoleEnv::default()),
            EnvKind::Acrobot => Env::Acrobot(AcrobotEnv::default()),
        })
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            Env::Grid(_) => EnvKind::Grid,
            Env::CartPole(_) => EnvKind::CartPole,
            Env::Acrobot(_) => EnvKind::Acrobot,
        }
    }

    pub fn collect(&self, n: usize, seed: u64) -> Result<AnyBatch> {
        Ok(match self {
            Env::Grid(g) => AnyBatch::Discrete(g.collect(n, seed)?),
            Env::CartPole(_) | Env::Acrobot(_) => AnyBatch::Continuous(self.collect_continuous(n, seed)?),
        })
    }

    pub fn collect_continuous(&self, n: usize, seed: u64) -> Result<ContinuousBatch> {
        match self {
            Env::CartPole(c) => c.collect(n, seed),
            Env::Acrobot(a) => a.collect(n, seed),
            Env::Grid(_) => Err(Error::BatchType("grid has a discrete space".into())),
        }
    }

    /// One simulator step on raw continuous state.
    pub fn step_continuous(&self, s: &[f64], a: f64) -> Result<Vec<f64>> {
        match self {
            Env::CartPole(c) => Ok(c.step(s, a)?.to_vec()),
            Env::Acrobot(e) => Ok(e.step(s, a)?.to_vec()),
            Env::Grid(_) => Err(Error::BatchType("grid has a discrete space".into())),
        }
    }

    pub fn continuous_meta(&self) -> Result<ContinuousSpaceMeta> {
        ContinuousSpaceMeta::for_env(self.kind())
    }
}

/// Episodic simulator driven by a uniform random policy.
trait Episodic {
    type State: Clone;
    type Action: Copy;
    type Transition;

    fn reset(&self, rng: &mut Rng) -> Self::State;
    fn random_action(&self, rng: &mut Rng) -> Self::Action;
    fn advance(&self, s: &Self::State, a: Self::Action) -> Result<Self::State>;
    fn done(&self, s: &Self::State, steps: usize) -> bool;
    fn record(s: &Self::State, a: Self::Action, s_next: &Self::State) -> Self::Transition;
}

fn rollout<E: Episodic>(env: &E, n: usize, seed: u64) -> Result<Vec<E::Transition>> {
    if n == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut rng = rng_for(seed, tag::COLLECT);
    let mut out = Vec::with_capacity(n);
    let mut s = env.reset(&mut rng);
    let mut steps = 0;
    while out.len() < n {
        let a = env.random_action(&mut rng);
        let next = env.advance(&s, a)?;
        out.push(E::record(&s, a, &next));
        steps += 1;
        if env.done(&next, steps) {
            s = env.reset(&mut rng);
            steps = 0;
        } else {
            s = next;
        }
    }
    Ok(out)
}

impl Episodic for GridEnv {
    type State = Cell;
    type Action = GridAction;
    type Transition = TransitionD;

    fn reset(&self, rng: &mut Rng) -> Cell {
        let l = self.meta.grid_side;
        Cell::new(rng.random_range(0..l), rng.random_range(0..l))
    }

    fn random_action(&self, rng: &mut Rng) -> GridAction {
        GridAction::ALL[rng.random_range(0..GridAction::ALL.len())]
    }

    fn advance(&self, s: &Cell, a: GridAction) -> Result<Cell> {
        Ok(self.step(*s, a))
    }

    fn done(&self, _s: &Cell, steps: usize) -> bool {
        self.episode_len.is_some_and(|len| steps >= len)
    }

    fn record(s: &Cell, a: GridAction, s_next: &Cell) -> TransitionD {
        TransitionD::new(*s, a, *s_next)
    }
}

impl GridEnv {
    pub fn collect(&self, n: usize, seed: u64) -> Result<DiscreteBatch> {
        Batch::new(self.meta, rollout(self, n, seed)?, seed)
    }
}

impl Episodic for CartPoleEnv {
    type State = Vec<f64>;
    type Action = f64;
    type Transition = TransitionC;

    fn reset(&self, rng: &mut Rng) -> Vec<f64> {
        let w = self.init_half_width;
        (0..4).map(|_| rng.random_range(-w..=w)).collect()
    }

    fn random_action(&self, rng: &mut Rng) -> f64 {
        if rng.random_bool(0.5) {
            1.0
        } else {
            -1.0
        }
    }

    fn advance(&self, s: &Vec<f64>, a: f64) -> Result<Vec<f64>> {
        Ok(self.step(s, a)?.to_vec())
    }

    fn done(&self, s: &Vec<f64>, steps: usize) -> bool {
        self.is_terminal(s) || steps >= self.max_steps
    }

    fn record(s: &Vec<f64>, a: f64, s_next: &Vec<f64>) -> TransitionC {
        TransitionC::new(s.clone(), a, s_next.clone())
    }
}

impl CartPoleEnv {
    pub fn collect(&self, n: usize, seed: u64) -> Result<ContinuousBatch> {
        Batch::new(ContinuousSpaceMeta::cartpole(), rollout(self, n, seed)?, seed)
    }
}

impl Episodic for AcrobotEnv {
    type State = Vec<f64>;
    type Action = f64;
    type Transition = TransitionC;

    fn reset(&self, rng: &mut Rng) -> Vec<f64> {
        let w = self.init_half_width;
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-w..=w));
        self.observe(q).to_vec()
    }

    fn random_action(&self, rng: &mut Rng) -> f64 {
        [-1.0, 0.0, 1.0][rng.random_range(0..3)]
    }

    fn advance(&self, s: &Vec<f64>, a: f64) -> Result<Vec<f64>> {
        Ok(self.step(s, a)?.to_vec())
    }

    fn done(&self, s: &Vec<f64>, steps: usize) -> bool {
        self.is_terminal(s) || steps >= self.max_steps
    }

    fn record(s: &Vec<f64>, a: f64, s_next: &Vec<f64>) -> TransitionC {
        TransitionC::new(s.clone(), a, s_next.clone())
    }
}

impl AcrobotEnv {
    pub fn collect(&self, n: usize, seed: u64) -> Result<ContinuousBatch> {
        Batch::new(ContinuousSpaceMeta::acrobot(), rollout(self, n, seed)?, seed)
    }
}
