//! State/action spaces, transitions and batches.
//!
//! Continuous batches always hold raw simulator units. Normalization is a
//! per-feature scale (no shift) applied when a batch is handed to an
//! estimator, so negating a raw feature negates its normalized value too.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Grid,
    CartPole,
    Acrobot,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Grid => "grid",
            EnvKind::CartPole => "cartpole",
            EnvKind::Acrobot => "acrobot",
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, EnvKind::Grid)
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grid" => Ok(EnvKind::Grid),
            "cartpole" => Ok(EnvKind::CartPole),
            "acrobot" => Ok(EnvKind::Acrobot),
            _ => Err(Error::UnknownEnv(s.to_string())),
        }
    }
}

/// Grid moves. The discriminant is the action id used in batch files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GridAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [
        GridAction::Up,
        GridAction::Down,
        GridAction::Left,
        GridAction::Right,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Result<Self> {
        GridAction::ALL.get(idx).copied().ok_or(Error::Bounds {
            what: "action id",
            value: idx as i64,
            limit: 4,
        })
    }

    /// Displacement `(di, dj)` on the torus.
    pub fn displacement(self) -> (i64, i64) {
        match self {
            GridAction::Up => (0, 1),
            GridAction::Down => (0, -1),
            GridAction::Left => (-1, 0),
            GridAction::Right => (1, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GridAction::Up => "UP",
            GridAction::Down => "DOWN",
            GridAction::Left => "LEFT",
            GridAction::Right => "RIGHT",
        }
    }
}

impl FromStr for GridAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "UP" => Ok(GridAction::Up),
            "DOWN" => Ok(GridAction::Down),
            "LEFT" => Ok(GridAction::Left),
            "RIGHT" => Ok(GridAction::Right),
            other => other
                .parse::<usize>()
                .map_err(|_| Error::Schema(format!("unknown grid action `{s}`")))
                .and_then(GridAction::from_index),
        }
    }
}

/// A position `(i, j)` on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub i: usize,
    pub j: usize,
}

impl Cell {
    pub const fn new(i: usize, j: usize) -> Self {
        Cell { i, j }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteSpaceMeta {
    pub grid_side: usize,
    pub action_count: usize,
}

impl DiscreteSpaceMeta {
    pub fn new(grid_side: usize) -> Result<Self> {
        if grid_side == 0 {
            return Err(Error::Config("grid_side must be at least 1".into()));
        }
        Ok(DiscreteSpaceMeta {
            grid_side,
            action_count: GridAction::ALL.len(),
        })
    }

    pub fn state_count(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn check_cell(&self, c: Cell) -> Result<()> {
        for v in [c.i, c.j] {
            if v >= self.grid_side {
                return Err(Error::Bounds {
                    what: "cell component",
                    value: v as i64,
                    limit: self.grid_side,
                });
            }
        }
        Ok(())
    }

    /// Row-major index `i * grid_side + j`.
    pub fn encode_state(&self, c: Cell) -> Result<usize> {
        self.check_cell(c)?;
        Ok(c.i * self.grid_side + c.j)
    }

    pub fn decode_state(&self, idx: usize) -> Result<Cell> {
        if idx >= self.state_count() {
            return Err(Error::Bounds {
                what: "state index",
                value: idx as i64,
                limit: self.state_count(),
            });
        }
        Ok(Cell::new(idx / self.grid_side, idx % self.grid_side))
    }

    /// Adds an integer offset to a cell, wrapping on both axes.
    pub fn wrap_add(&self, c: Cell, di: i64, dj: i64) -> Cell {
        let l = self.grid_side as i64;
        Cell::new(
            (c.i as i64 + di).rem_euclid(l) as usize,
            (c.j as i64 + dj).rem_euclid(l) as usize,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSpaceMeta {
    pub env: EnvKind,
    pub state_dim: usize,
    /// Raw action values the environment accepts, in ascending order.
    pub action_values: Vec<f64>,
    /// Per-feature scale constants; a raw value equal to its bound maps to `range`.
    pub feature_bounds: Vec<f64>,
    pub action_bound: f64,
    /// Half-width of the normalized interval.
    pub range: f64,
}

impl ContinuousSpaceMeta {
    /// State `(x, v, angle, angular velocity)`, actions push left (-1) or right (+1).
    pub fn cartpole() -> Self {
        ContinuousSpaceMeta {
            env: EnvKind::CartPole,
            state_dim: 4,
            action_values: vec![-1.0, 1.0],
            feature_bounds: vec![4.8, 5.0, 0.418, 5.0],
            action_bound: 1.0,
            range: 1.5,
        }
    }

    /// State `(sin a1, cos a1, sin a2, cos a2, w1, w2)`, torques -1, 0, +1.
    pub fn acrobot() -> Self {
        use std::f64::consts::PI;
        ContinuousSpaceMeta {
            env: EnvKind::Acrobot,
            state_dim: 6,
            action_values: vec![-1.0, 0.0, 1.0],
            feature_bounds: vec![1.0, 1.0, 1.0, 1.0, 4.0 * PI, 9.0 * PI],
            action_bound: 1.0,
            range: 3.0,
        }
    }

    pub fn for_env(env: EnvKind) -> Result<Self> {
        match env {
            EnvKind::CartPole => Ok(Self::cartpole()),
            EnvKind::Acrobot => Ok(Self::acrobot()),
            EnvKind::Grid => Err(Error::BatchType("grid has a discrete space".into())),
        }
    }

    /// Length of the joint `(s, a, s')` vector.
    pub fn joint_dim(&self) -> usize {
        2 * self.state_dim + 1
    }

    fn check_state(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.state_dim {
            return Err(Error::Dimension {
                expected: self.state_dim,
                got: s.len(),
            });
        }
        if let Some(v) = s.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite state component {v}")));
        }
        Ok(())
    }

    pub fn normalize(&self, s_raw: &[f64]) -> Result<Vec<f64>> {
        self.check_state(s_raw)?;
        Ok(s_raw
            .iter()
            .zip(&self.feature_bounds)
            .map(|(v, b)| v / b * self.range)
            .collect())
    }

    pub fn denormalize(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_state(s)?;
        Ok(s.iter()
            .zip(&self.feature_bounds)
            .map(|(v, b)| v / self.range * b)
            .collect())
    }

    pub fn normalize_action(&self, a: f64) -> f64 {
        a / self.action_bound * self.range
    }

    pub fn denormalize_action(&self, a: f64) -> f64 {
        a / self.range * self.action_bound
    }

    /// Normalized joint vector `s ++ [a] ++ s'`.
    pub fn joint_vector(&self, t: &TransitionC) -> Result<Vec<f64>> {
        if !t.a.is_finite() {
            return Err(Error::Numeric(format!("non-finite action {}", t.a)));
        }
        let mut out = self.normalize(&t.s)?;
        out.push(self.normalize_action(t.a));
        out.extend(self.normalize(&t.s_next)?);
        Ok(out)
    }

    /// Normalized model input `s ++ [a]`.
    pub fn input_vector(&self, s: &[f64], a: f64) -> Result<Vec<f64>> {
        let mut out = self.normalize(s)?;
        out.push(self.normalize_action(a));
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransitionD {
    pub s: Cell,
    pub a: GridAction,
    pub s_next: Cell,
}

impl TransitionD {
    pub fn new(s: Cell, a: GridAction, s_next: Cell) -> Self {
        TransitionD { s, a, s_next }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionC {
    pub s: Vec<f64>,
    pub a: f64,
    pub s_next: Vec<f64>,
}

impl TransitionC {
    pub fn new(s: Vec<f64>, a: f64, s_next: Vec<f64>) -> Self {
        TransitionC { s, a, s_next }
    }
}

/// Space metadata that can validate its own transitions.
pub trait Space: Clone + PartialEq + fmt::Debug {
    type Transition: Clone + PartialEq + fmt::Debug;

    fn env(&self) -> EnvKind;
    fn validate(&self, t: &Self::Transition) -> Result<()>;
}

impl Space for DiscreteSpaceMeta {
    type Transition = TransitionD;

    fn env(&self) -> EnvKind {
        EnvKind::Grid
    }

    fn validate(&self, t: &TransitionD) -> Result<()> {
        self.check_cell(t.s)?;
        self.check_cell(t.s_next)
    }
}

impl Space for ContinuousSpaceMeta {
    type Transition = TransitionC;

    fn env(&self) -> EnvKind {
        self.env
    }

    fn validate(&self, t: &TransitionC) -> Result<()> {
        self.check_state(&t.s)?;
        self.check_state(&t.s_next)?;
        if !t.a.is_finite() {
            return Err(Error::Numeric(format!("non-finite action {}", t.a)));
        }
        Ok(())
    }
}

/// An ordered multiset of transitions sharing one space.
///
/// `synthetic[i]` marks rows produced by augmentation rather than collected
/// from the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<M: Space> {
    pub meta: M,
    transitions: Vec<M::Transition>,
    synthetic: Vec<bool>,
    pub seed: u64,
}

pub type DiscreteBatch = Batch<DiscreteSpaceMeta>;
pub type ContinuousBatch = Batch<ContinuousSpaceMeta>;

impl<M: Space> Batch<M> {
    pub fn new(meta: M, transitions: Vec<M::Transition>, seed: u64) -> Result<Self> {
        let n = transitions.len();
        Self::with_provenance(meta, transitions, vec![false; n], seed)
    }

    pub fn with_provenance(
        meta: M,
        transitions: Vec<M::Transition>,
        synthetic: Vec<bool>,
        seed: u64,
    ) -> Result<Self> {
        if synthetic.len() != transitions.len() {
            return Err(Error::Dimension {
                expected: transitions.len(),
                got: synthetic.len(),
            });
        }
        for t in &transitions {
            meta.validate(t)?;
        }
        Ok(Batch {
            meta,
            transitions,
            synthetic,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[M::Transition] {
        &self.transitions
    }

    pub fn synthetic(&self) -> &[bool] {
        &self.synthetic
    }

    pub fn has_synthetic(&self) -> bool {
        self.synthetic.iter().any(|&x| x)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, M::Transition> {
        self.transitions.iter()
    }

    pub fn ensure_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::Empty("batch"))
        } else {
            Ok(())
        }
    }

    /// Returns a new batch holding `self` followed by `extra`, the latter
    /// flagged as synthetic.
    pub fn concat_synthetic(&self, extra: Vec<M::Transition>) -> Result<Self> {
        let mut transitions = self.transitions.clone();
        let mut synthetic = self.synthetic.clone();
        synthetic.extend(std::iter::repeat_n(true, extra.len()));
        transitions.extend(extra);
        Self::with_provenance(self.meta.clone(), transitions, synthetic, self.seed)
    }
}

impl ContinuousBatch {
    /// Normalized `(s, a, s')` vectors, one per transition.
    pub fn joint_vectors(&self) -> Result<Vec<Vec<f64>>> {
        self.transitions
            .iter()
            .map(|t| self.meta.joint_vector(t))
            .collect()
    }
}

/// A batch of either kind, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyBatch {
    Discrete(DiscreteBatch),
    Continuous(ContinuousBatch),
}

impl AnyBatch {
    pub fn env(&self) -> EnvKind {
        match self {
            AnyBatch::Discrete(b) => b.meta.env(),
            AnyBatch::Continuous(b) => b.meta.env(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyBatch::Discrete(b) => b.len(),
            AnyBatch::Continuous(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seed(&self) -> u64 {
        match self {
            AnyBatch::Discrete(b) => b.seed,
            AnyBatch::Continuous(b) => b.seed,
        }
    }

    pub fn into_discrete(self) -> Result<DiscreteBatch> {
        match self {
            AnyBatch::Discrete(b) => Ok(b),
            AnyBatch::Continuous(b) => Err(Error::BatchType(format!(
                "expected a discrete batch, got {}",
                b.meta.env
            ))),
        }
    }

    pub fn into_continuous(self) -> Result<ContinuousBatch> {
        match self {
            AnyBatch::Continuous(b) => Ok(b),
            AnyBatch::Discrete(_) => Err(Error::BatchType(
                "expected a continuous batch, got grid".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        let m = DiscreteSpaceMeta::new(100).unwrap();
        assert_eq!(m.encode_state(Cell::new(0, 0)).unwrap(), 0);
        assert_eq!(m.encode_state(Cell::new(2, 3)).unwrap(), 203);
        assert_eq!(m.encode_state(Cell::new(99, 99)).unwrap(), 9999);
        assert!(matches!(
            m.encode_state(Cell::new(100, 0)),
            Err(Error::Bounds { .. })
        ));
        assert!(m.decode_state(10_000).is_err());
    }

    #[test]
    fn encode_decode_bijection_small_grid() {
        let m = DiscreteSpaceMeta::new(7).unwrap();
        for idx in 0..m.state_count() {
            let c = m.decode_state(idx).unwrap();
            assert_eq!(m.encode_state(c).unwrap(), idx);
        }
    }

    #[test]
    fn zero_grid_rejected() {
        assert!(DiscreteSpaceMeta::new(0).is_err());
    }

    #[test]
    fn normalize_examples() {
        let m = ContinuousSpaceMeta::cartpole();
        assert_eq!(m.normalize(&[0.0; 4]).unwrap(), vec![0.0; 4]);
        let n = m.normalize(&[4.8, 0.0, 0.0, 0.0]).unwrap();
        assert!((n[0] - 1.5).abs() < 1e-15);

        let raw = [0.3, -1.2, 0.05, 2.0];
        let neg: Vec<f64> = raw.iter().map(|v| -v).collect();
        let a = m.normalize(&raw).unwrap();
        let b = m.normalize(&neg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn normalize_rejects_bad_input() {
        let m = ContinuousSpaceMeta::acrobot();
        assert!(matches!(
            m.normalize(&[0.0; 4]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            m.normalize(&[0.0, 1.0, 0.0, 1.0, f64::NAN, 0.0]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn action_embedding() {
        let cp = ContinuousSpaceMeta::cartpole();
        assert_eq!(cp.normalize_action(-1.0), -1.5);
        assert_eq!(cp.normalize_action(1.0), 1.5);
        let ac = ContinuousSpaceMeta::acrobot();
        let embedded: Vec<f64> = ac.action_values.iter().map(|&a| ac.normalize_action(a)).collect();
        assert_eq!(embedded, vec![-3.0, 0.0, 3.0]);
    }

    #[test]
    fn batch_rejects_invalid_rows() {
        let m = DiscreteSpaceMeta::new(3).unwrap();
        let bad = TransitionD::new(Cell::new(3, 0), GridAction::Up, Cell::new(0, 0));
        assert!(Batch::new(m, vec![bad], 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn normalize_roundtrip(x in -10.0f64..10.0, v in -10.0f64..10.0, t in -1.0f64..1.0, w in -10.0f64..10.0) {
            let m = ContinuousSpaceMeta::cartpole();
            let raw = [x, v, t, w];
            let back = m.denormalize(&m.normalize(&raw).unwrap()).unwrap();
            for (a, b) in raw.iter().zip(&back) {
                proptest::prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs().max(1.0));
            }
        }
    }
}
