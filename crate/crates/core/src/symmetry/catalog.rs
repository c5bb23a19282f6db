//! Built-in candidate transforms for each environment.

use super::transform::{ActionOp, Endpoint, StateMap, StateOp, TransformSpec};
use crate::error::{Error, Result};
use crate::space::EnvKind;

fn keep(source: Endpoint) -> StateMap {
    StateMap::of(source, vec![])
}

fn negate(source: Endpoint, features: &[usize]) -> StateMap {
    StateMap::of(
        source,
        vec![StateOp::Negate {
            features: features.to_vec(),
        }],
    )
}

fn shifted(source: Endpoint, multiple: i64) -> StateMap {
    StateMap::of(source, vec![StateOp::DisplacementShift { multiple }])
}

fn offset(source: Endpoint, features: &[usize], amount: f64) -> StateMap {
    StateMap::of(
        source,
        vec![StateOp::Offset {
            features: features.to_vec(),
            amount,
        }],
    )
}

fn grid() -> Vec<TransformSpec> {
    use Endpoint::{SNext, S};
    let inv = || vec![ActionOp::Negate];
    vec![
        TransformSpec::new("TRSAI", keep(SNext), inv(), keep(S)),
        TransformSpec::new("SDAI", keep(S), inv(), keep(SNext)),
        TransformSpec::new("ODAI", keep(S), inv(), shifted(SNext, -2)),
        // up, down, left, right -> right, left, up, down
        TransformSpec::new(
            "ODWA",
            keep(S),
            vec![ActionOp::Table { map: vec![3, 2, 0, 1] }],
            shifted(SNext, -2),
        ),
        TransformSpec::new("TI", keep(SNext), vec![], shifted(SNext, 1)),
        TransformSpec::new("TIOD", keep(SNext), vec![], keep(S)),
    ]
}

fn cartpole() -> Vec<TransformSpec> {
    use Endpoint::{SNext, S};
    let all = [0, 1, 2, 3];
    vec![
        TransformSpec::new("SAR", negate(S, &all), vec![ActionOp::Negate], negate(SNext, &all)),
        TransformSpec::new("ISR", negate(S, &all), vec![ActionOp::Negate], keep(SNext)),
        TransformSpec::new("AI", keep(S), vec![ActionOp::Negate], keep(SNext)),
        TransformSpec::new("SFI", negate(S, &[0]), vec![], negate(SNext, &[0])),
        TransformSpec::new("TI", offset(S, &[0], 0.3), vec![], offset(SNext, &[0], 0.3)),
    ]
}

fn acrobot() -> Vec<TransformSpec> {
    use Endpoint::{SNext, S};
    let angles = [0, 2, 4, 5];
    let cosines = [1, 3, 4, 5];
    vec![
        TransformSpec::new("AAVI", negate(S, &angles), vec![ActionOp::Negate], negate(SNext, &angles)),
        TransformSpec::new("CAVI", negate(S, &cosines), vec![ActionOp::Negate], negate(SNext, &cosines)),
        TransformSpec::new("AI", keep(S), vec![ActionOp::Negate], keep(SNext)),
        TransformSpec::new("SSI", negate(S, &[0, 1, 2, 3, 4, 5]), vec![], keep(SNext)),
    ]
}

pub fn builtin_catalog(env: EnvKind) -> Vec<TransformSpec> {
    match env {
        EnvKind::Grid => grid(),
        EnvKind::CartPole => cartpole(),
        EnvKind::Acrobot => acrobot(),
    }
}

/// Catalog lookup by environment name, for callers holding a string.
pub fn catalog_for(env: &str) -> Result<Vec<TransformSpec>> {
    Ok(builtin_catalog(env.parse()?))
}

/// Case-insensitive label lookup; `IDENTITY` is accepted for every env.
pub fn lookup(env: EnvKind, label: &str) -> Result<TransformSpec> {
    if label.eq_ignore_ascii_case("identity") {
        return Ok(TransformSpec::identity());
    }
    builtin_catalog(env)
        .into_iter()
        .find(|k| k.name.eq_ignore_ascii_case(label))
        .ok_or_else(|| {
            let known: Vec<String> = builtin_catalog(env).into_iter().map(|k| k.name).collect();
            Error::Config(format!(
                "unknown transform `{label}` for {env} (known: {})",
                known.join(", ")
            ))
        })
}

/// Labels of the transforms that are exact symmetries of the simulator.
pub fn true_symmetries(env: EnvKind) -> &'static [&'static str] {
    match env {
        EnvKind::Grid => &["TRSAI", "ODAI", "TI"],
        EnvKind::CartPole => &["SAR", "TI"],
        EnvKind::Acrobot => &["AAVI"],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Cell, ContinuousSpaceMeta, DiscreteSpaceMeta, GridAction, TransitionC, TransitionD};

    #[test]
    fn catalog_sizes() {
        assert_eq!(builtin_catalog(EnvKind::Grid).len(), 6);
        assert_eq!(builtin_catalog(EnvKind::CartPole).len(), 5);
        assert_eq!(builtin_catalog(EnvKind::Acrobot).len(), 4);
        assert!(catalog_for("pendulum").is_err());
        assert!(lookup(EnvKind::Grid, "SAR").is_err());
        assert_eq!(lookup(EnvKind::Grid, "trsai").unwrap().name, "TRSAI");
    }

    #[test]
    fn grid_table_examples() {
        let meta = DiscreteSpaceMeta::new(100).unwrap();
        let t = TransitionD::new(Cell::new(5, 5), GridAction::Up, Cell::new(5, 6));
        let apply = |name: &str| lookup(EnvKind::Grid, name).unwrap().apply_discrete(&t, &meta).unwrap();
        assert_eq!(apply("TRSAI"), TransitionD::new(Cell::new(5, 6), GridAction::Down, Cell::new(5, 5)));
        assert_eq!(apply("ODAI"), TransitionD::new(Cell::new(5, 5), GridAction::Down, Cell::new(5, 4)));
        assert_eq!(apply("SDAI"), TransitionD::new(Cell::new(5, 5), GridAction::Down, Cell::new(5, 6)));
        assert_eq!(apply("ODWA"), TransitionD::new(Cell::new(5, 5), GridAction::Right, Cell::new(5, 4)));
        assert_eq!(apply("TI"), TransitionD::new(Cell::new(5, 6), GridAction::Up, Cell::new(5, 7)));
        assert_eq!(apply("TIOD"), TransitionD::new(Cell::new(5, 6), GridAction::Up, Cell::new(5, 5)));
    }

    #[test]
    fn cartpole_entries() {
        let meta = ContinuousSpaceMeta::cartpole();
        let t = TransitionC::new(vec![0.1, 0.2, 0.03, -0.4], 1.0, vec![0.104, 0.1, 0.02, -0.3]);
        let sar = lookup(EnvKind::CartPole, "SAR").unwrap().apply_continuous(&t, &meta).unwrap();
        assert_eq!(sar, TransitionC::new(vec![-0.1, -0.2, -0.03, 0.4], -1.0, vec![-0.104, -0.1, -0.02, 0.3]));
        let ti = lookup(EnvKind::CartPole, "TI").unwrap().apply_continuous(&t, &meta).unwrap();
        assert!((ti.s[0] - 0.4).abs() < 1e-15 && (ti.s_next[0] - 0.404).abs() < 1e-15);
        assert_eq!(ti.s[1..], t.s[1..]);
        let isr = lookup(EnvKind::CartPole, "ISR").unwrap().apply_continuous(&t, &meta).unwrap();
        assert_eq!((isr.a, &isr.s_next), (-1.0, &t.s_next));
    }

    #[test]
    fn acrobot_aavi_keeps_cosines() {
        let meta = ContinuousSpaceMeta::acrobot();
        let s = vec![0.6, 0.8, -0.28, 0.96, 1.0, -2.0];
        let t = TransitionC::new(s.clone(), 1.0, s.clone());
        let out = lookup(EnvKind::Acrobot, "AAVI").unwrap().apply_continuous(&t, &meta).unwrap();
        assert_eq!(out.s, vec![-0.6, 0.8, 0.28, 0.96, -1.0, 2.0]);
        assert_eq!(out.a, -1.0);
        let cavi = lookup(EnvKind::Acrobot, "CAVI").unwrap().apply_continuous(&t, &meta).unwrap();
        assert_eq!(cavi.s, vec![0.6, -0.8, -0.28, -0.96, -1.0, 2.0]);
    }

    #[test]
    fn involutions() {
        let meta = ContinuousSpaceMeta::cartpole();
        let t = TransitionC::new(vec![0.1, 0.2, 0.03, -0.4], -1.0, vec![0.104, 0.1, 0.02, -0.3]);
        for name in ["SAR", "AI", "SFI"] {
            let k = lookup(EnvKind::CartPole, name).unwrap();
            let twice = k.apply_continuous(&k.apply_continuous(&t, &meta).unwrap(), &meta).unwrap();
            assert_eq!(twice, t, "{name}");
        }
        let meta = ContinuousSpaceMeta::acrobot();
        let s = vec![0.6, 0.8, -0.28, 0.96, 1.0, -2.0];
        let t = TransitionC::new(s.clone(), 0.0, s);
        for name in ["AAVI", "CAVI", "AI"] {
            let k = lookup(EnvKind::Acrobot, name).unwrap();
            let twice = k.apply_continuous(&k.apply_continuous(&t, &meta).unwrap(), &meta).unwrap();
            assert_eq!(twice, t, "{name}");
        }
        let gm = DiscreteSpaceMeta::new(7).unwrap();
        let g = TransitionD::new(Cell::new(0, 3), GridAction::Left, Cell::new(6, 3));
        for name in ["TRSAI", "ODAI"] {
            let k = lookup(EnvKind::Grid, name).unwrap();
            assert_eq!(k.apply_discrete(&k.apply_discrete(&g, &gm).unwrap(), &gm).unwrap(), g, "{name}");
        }
    }
}
