//! The `(f, g, l)` transform algebra.
//!
//! Each of `f` and `l` picks an endpoint of the transition (`s` or `s'`) and
//! then applies a list of feature operations in order. `g` is a list of
//! action operations. On the grid, features are the cell coordinates
//! `(i, j)` and all arithmetic wraps modulo the grid side; an action
//! negation there means the opposite direction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{
    Cell, ContinuousSpaceMeta, DiscreteSpaceMeta, GridAction, TransitionC, TransitionD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    S,
    SNext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StateOp {
    Negate { features: Vec<usize> },
    Offset { features: Vec<usize>, amount: f64 },
    /// `out[i] = in[order[i]]`
    Permute { order: Vec<usize> },
    /// Grid only: adds `multiple` times the displacement of the original action.
    DisplacementShift { multiple: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ActionOp {
    Negate,
    /// New action index is `map[old index]`, indices into the action list.
    Table { map: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMap {
    pub source: Endpoint,
    #[serde(default)]
    pub ops: Vec<StateOp>,
}

impl StateMap {
    pub fn of(source: Endpoint, ops: Vec<StateOp>) -> Self {
        StateMap { source, ops }
    }
}

fn default_f() -> StateMap {
    StateMap::of(Endpoint::S, vec![])
}

fn default_l() -> StateMap {
    StateMap::of(Endpoint::SNext, vec![])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub name: String,
    #[serde(default = "default_f")]
    pub f: StateMap,
    #[serde(default)]
    pub g: Vec<ActionOp>,
    #[serde(default = "default_l")]
    pub l: StateMap,
}

impl TransformSpec {
    pub fn new(name: &str, f: StateMap, g: Vec<ActionOp>, l: StateMap) -> Self {
        TransformSpec {
            name: name.to_string(),
            f,
            g,
            l,
        }
    }

    pub fn identity() -> Self {
        Self::new("IDENTITY", default_f(), vec![], default_l())
    }

    pub fn apply_discrete(&self, t: &TransitionD, meta: &DiscreteSpaceMeta) -> Result<TransitionD> {
        meta.check_cell(t.s)?;
        meta.check_cell(t.s_next)?;
        let s = map_cell(&self.f, t, meta)?;
        let a = map_grid_action(&self.g, t.a)?;
        let s_next = map_cell(&self.l, t, meta)?;
        Ok(TransitionD::new(s, a, s_next))
    }

    pub fn apply_continuous(
        &self,
        t: &TransitionC,
        meta: &ContinuousSpaceMeta,
    ) -> Result<TransitionC> {
        let s = map_vector(&self.f, t, meta.state_dim)?;
        let a = map_real_action(&self.g, t.a, &meta.action_values)?;
        let s_next = map_vector(&self.l, t, meta.state_dim)?;
        Ok(TransitionC::new(s, a, s_next))
    }
}

fn check_indices(features: &[usize], dim: usize) -> Result<()> {
    match features.iter().find(|&&k| k >= dim) {
        Some(k) => Err(Error::Transform(format!(
            "feature index {k} out of range for dimension {dim}"
        ))),
        None => Ok(()),
    }
}

fn check_permutation(order: &[usize], dim: usize) -> Result<()> {
    let mut seen = vec![false; dim];
    if order.len() != dim {
        return Err(Error::Transform(format!(
            "permutation of length {} for dimension {dim}",
            order.len()
        )));
    }
    for &k in order {
        if k >= dim || std::mem::replace(&mut seen[k], true) {
            return Err(Error::Transform(format!("{order:?} is not a permutation")));
        }
    }
    Ok(())
}

fn map_cell(map: &StateMap, t: &TransitionD, meta: &DiscreteSpaceMeta) -> Result<Cell> {
    let c = match map.source {
        Endpoint::S => t.s,
        Endpoint::SNext => t.s_next,
    };
    let mut v = [c.i as i64, c.j as i64];
    for op in &map.ops {
        match op {
            StateOp::Negate { features } => {
                check_indices(features, 2)?;
                for &k in features {
                    v[k] = -v[k];
                }
            }
            StateOp::Offset { features, amount } => {
                check_indices(features, 2)?;
                if amount.fract() != 0.0 || !amount.is_finite() {
                    return Err(Error::Transform(format!(
                        "grid offset {amount} is not an integer"
                    )));
                }
                for &k in features {
                    v[k] += *amount as i64;
                }
            }
            StateOp::Permute { order } => {
                check_permutation(order, 2)?;
                v = [v[order[0]], v[order[1]]];
            }
            StateOp::DisplacementShift { multiple } => {
                let (di, dj) = t.a.displacement();
                v[0] += multiple * di;
                v[1] += multiple * dj;
            }
        }
    }
    Ok(meta.wrap_add(Cell::new(0, 0), v[0], v[1]))
}

fn map_grid_action(ops: &[ActionOp], a: GridAction) -> Result<GridAction> {
    let mut a = a;
    for op in ops {
        a = match op {
            ActionOp::Negate => match a {
                GridAction::Up => GridAction::Down,
                GridAction::Down => GridAction::Up,
                GridAction::Left => GridAction::Right,
                GridAction::Right => GridAction::Left,
            },
            ActionOp::Table { map } => {
                if map.len() != GridAction::ALL.len() {
                    return Err(Error::Transform(format!(
                        "grid action table needs {} entries, got {}",
                        GridAction::ALL.len(),
                        map.len()
                    )));
                }
                GridAction::from_index(map[a.index()])
                    .map_err(|e| Error::Transform(e.to_string()))?
            }
        };
    }
    Ok(a)
}

fn map_vector(map: &StateMap, t: &TransitionC, dim: usize) -> Result<Vec<f64>> {
    let src = match map.source {
        Endpoint::S => &t.s,
        Endpoint::SNext => &t.s_next,
    };
    if src.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: src.len(),
        });
    }
    let mut v = src.clone();
    for op in &map.ops {
        match op {
            StateOp::Negate { features } => {
                check_indices(features, dim)?;
                for &k in features {
                    v[k] = -v[k];
                }
            }
            StateOp::Offset { features, amount } => {
                check_indices(features, dim)?;
                for &k in features {
                    v[k] += amount;
                }
            }
            StateOp::Permute { order } => {
                check_permutation(order, dim)?;
                v = order.iter().map(|&k| v[k]).collect();
            }
            StateOp::DisplacementShift { .. } => {
                return Err(Error::Transform(
                    "displacement shift applies to grid states only".into(),
                ))
            }
        }
    }
    Ok(v)
}

fn map_real_action(ops: &[ActionOp], a: f64, values: &[f64]) -> Result<f64> {
    let mut a = a;
    for op in ops {
        a = match op {
            ActionOp::Negate => -a,
            ActionOp::Table { map } => {
                if map.len() != values.len() {
                    return Err(Error::Transform(format!(
                        "action table needs {} entries, got {}",
                        values.len(),
                        map.len()
                    )));
                }
                let idx = values
                    .iter()
                    .position(|&v| v == a)
                    .ok_or_else(|| Error::Transform(format!("action {a} is not in the action set")))?;
                *values.get(map[idx]).ok_or_else(|| {
                    Error::Transform(format!("action table entry {} out of range", map[idx]))
                })?
            }
        };
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> DiscreteSpaceMeta {
        DiscreteSpaceMeta::new(100).unwrap()
    }

    #[test]
    fn identity_is_identity() {
        let t = TransitionD::new(Cell::new(5, 5), GridAction::Up, Cell::new(5, 6));
        assert_eq!(TransformSpec::identity().apply_discrete(&t, &grid()).unwrap(), t);
        let c = TransitionC::new(vec![0.1, -0.2, 0.3, 0.4], 1.0, vec![0.2, 0.0, 0.1, 0.5]);
        let meta = ContinuousSpaceMeta::cartpole();
        assert_eq!(TransformSpec::identity().apply_continuous(&c, &meta).unwrap(), c);
    }

    #[test]
    fn grid_arithmetic_wraps() {
        let k = TransformSpec::new(
            "shift",
            StateMap::of(
                Endpoint::S,
                vec![StateOp::Offset {
                    features: vec![0],
                    amount: -3.0,
                }],
            ),
            vec![],
            StateMap::of(Endpoint::SNext, vec![StateOp::Negate { features: vec![1] }]),
        );
        let t = TransitionD::new(Cell::new(1, 0), GridAction::Up, Cell::new(1, 1));
        let out = k.apply_discrete(&t, &grid()).unwrap();
        assert_eq!(out.s, Cell::new(98, 0));
        assert_eq!(out.s_next, Cell::new(1, 99));
    }

    #[test]
    fn permute_and_table() {
        let k = TransformSpec::new(
            "swap",
            StateMap::of(Endpoint::S, vec![StateOp::Permute { order: vec![1, 0] }]),
            vec![ActionOp::Table { map: vec![2, 3, 0, 1] }],
            default_l(),
        );
        let t = TransitionD::new(Cell::new(2, 7), GridAction::Up, Cell::new(2, 8));
        let out = k.apply_discrete(&t, &grid()).unwrap();
        assert_eq!(out.s, Cell::new(7, 2));
        assert_eq!(out.a, GridAction::Left);

        let meta = ContinuousSpaceMeta::acrobot();
        let k = TransformSpec::new("rev", default_f(), vec![ActionOp::Table { map: vec![2, 1, 0] }], default_l());
        let c = TransitionC::new(vec![0.0; 6], -1.0, vec![0.0; 6]);
        assert_eq!(k.apply_continuous(&c, &meta).unwrap().a, 1.0);
        let c = TransitionC::new(vec![0.0; 6], 0.5, vec![0.0; 6]);
        assert!(matches!(k.apply_continuous(&c, &meta), Err(Error::Transform(_))));
    }

    #[test]
    fn mismatches_are_transform_errors() {
        let meta = ContinuousSpaceMeta::cartpole();
        let c = TransitionC::new(vec![0.0; 4], 1.0, vec![0.0; 4]);
        let bad_index = TransformSpec::new(
            "bad",
            StateMap::of(Endpoint::S, vec![StateOp::Negate { features: vec![4] }]),
            vec![],
            default_l(),
        );
        assert!(matches!(bad_index.apply_continuous(&c, &meta), Err(Error::Transform(_))));
        let grid_only = TransformSpec::new(
            "odai-like",
            default_f(),
            vec![],
            StateMap::of(Endpoint::SNext, vec![StateOp::DisplacementShift { multiple: -2 }]),
        );
        assert!(matches!(grid_only.apply_continuous(&c, &meta), Err(Error::Transform(_))));
        let frac = TransformSpec::new(
            "frac",
            StateMap::of(
                Endpoint::S,
                vec![StateOp::Offset {
                    features: vec![0],
                    amount: 0.5,
                }],
            ),
            vec![],
            default_l(),
        );
        let t = TransitionD::new(Cell::new(0, 0), GridAction::Up, Cell::new(0, 1));
        assert!(matches!(frac.apply_discrete(&t, &grid()), Err(Error::Transform(_))));
        let short = TransitionC::new(vec![0.0; 3], 1.0, vec![0.0; 4]);
        assert!(TransformSpec::identity().apply_continuous(&short, &meta).is_err());
        let not_perm = TransformSpec::new(
            "p",
            StateMap::of(Endpoint::S, vec![StateOp::Permute { order: vec![0, 0, 1, 2] }]),
            vec![],
            default_l(),
        );
        assert!(matches!(not_perm.apply_continuous(&c, &meta), Err(Error::Transform(_))));
    }

    #[test]
    fn toml_inline_spec() {
        let text = r#"
            name = "MIRROR"
            g = [{ op = "negate" }]
            [f]
            source = "s"
            ops = [{ op = "negate", features = [0, 1, 2, 3] }]
            [l]
            source = "s_next"
            ops = [{ op = "negate", features = [0, 1, 2, 3] }]
        "#;
        let k: TransformSpec = toml::from_str(text).unwrap();
        assert_eq!(k.g, vec![ActionOp::Negate]);
        assert_eq!(k.l.source, Endpoint::SNext);
        let only_name: TransformSpec = toml::from_str("name = \"ID\"").unwrap();
        assert_eq!(only_name.f, default_f());
        assert_eq!(only_name.l, default_l());
    }
}
